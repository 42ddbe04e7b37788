//! Spatial interpolators behind a common fit/predict contract.
//!
//! Six methods are available: inverse distance weighting (IDW), multiquadric
//! radial basis functions (RBF), ordinary kriging (OK), random forests (RF),
//! gradient-boosted trees (GBT) and model-based radio interpolation (MRI).

pub mod idw;
pub mod knn;
pub mod kriging;
pub mod linalg;
pub mod mri;
pub mod rbf;
pub mod tree;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use idw::{idw_weights, IdwParams};
pub use kriging::{
    empirical_variogram, fit_variogram, kriging_weights, EmpiricalVariogram, KrigingParams, LagBin, VariogramFit,
    VariogramKind, VariogramModel,
};
pub use mri::{fit_log_distance, MriParams, MriTransmitter, PathLossFit};
pub use rbf::{rbf_solve, RbfExpansion, RbfParams};
pub use tree::{fit_tree_ensemble, BoostParams, EnsembleKind, ForestParams, TreeEnsemble};

use crate::error::{Error, Result};
use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

/// Coincidence threshold for deduplication, meters.
pub const DUPLICATE_M: f64 = 1e-9;

/// Observed values at known locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainingSet<T> {
    pub points: Vec<LocalPoint<T>>,
    pub values: Vec<T>,
    /// Per-sample cell identifier, `None` when unknown.
    pub cell_ids: Vec<Option<u32>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(points: Vec<LocalPoint<T>>, values: Vec<T>) -> Result<Self> {
        let n = points.len();
        Self::with_cells(points, values, vec![None; n])
    }

    pub fn with_cells(points: Vec<LocalPoint<T>>, values: Vec<T>, cell_ids: Vec<Option<u32>>) -> Result<Self> {
        let t = TrainingSet { points, values, cell_ids };
        t.validate()?;
        Ok(t)
    }

    pub fn empty() -> Self {
        TrainingSet { points: Vec::new(), values: Vec::new(), cell_ids: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.values.len() || self.cell_ids.len() != self.points.len() {
            return Err(Error::Shape(format!(
                "{} points, {} values, {} cell ids",
                self.points.len(),
                self.values.len(),
                self.cell_ids.len()
            )));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("sample {i} has a non-finite location")));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("sample {i} has a non-finite value")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: LocalPoint<T>, v: T, cell: Option<u32>) {
        self.points.push(p);
        self.values.push(v);
        self.cell_ids.push(cell);
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        TrainingSet {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            cell_ids: idx.iter().map(|&i| self.cell_ids[i]).collect(),
        }
    }

    pub fn bounding_box(&self) -> BoundingBox<T> {
        BoundingBox::of(&self.points)
    }

    /// Merges samples closer than 1e-9 m, averaging their values.
    ///
    /// Each merged sample sits at the location and keeps the cell id of its
    /// lowest-index member; output order follows first occurrence.
    pub fn deduplicated(&self) -> Self {
        let n = self.len();
        let tol = T::of(DUPLICATE_M);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.points[a].x.partial_cmp(&self.points[b].x).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        fn find(group: &mut [usize], mut i: usize) -> usize {
            while group[i] != i {
                group[i] = group[group[i]];
                i = group[i];
            }
            i
        }
        let mut group: Vec<usize> = (0..n).collect();
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if self.points[j].x - self.points[i].x >= tol {
                    break;
                }
                if self.points[i].dist2(&self.points[j]) < tol * tol {
                    let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                    group[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        for i in 0..n {
            group[i] = find(&mut group, i);
        }
        if group.iter().enumerate().all(|(i, g)| *g == i) {
            return self.clone();
        }
        let mut sums: Vec<(T, usize)> = vec![(T::zero(), 0); n];
        for i in 0..n {
            sums[group[i]].0 += self.values[i];
            sums[group[i]].1 += 1;
        }
        let mut out = TrainingSet::empty();
        for i in 0..n {
            if group[i] == i {
                out.push(self.points[i], sums[i].0 / T::of_usize(sums[i].1), self.cell_ids[i]);
            }
        }
        out
    }
}

/// Axis-aligned bounding box of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub min: LocalPoint<T>,
    pub max: LocalPoint<T>,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn of(points: &[LocalPoint<T>]) -> Self {
        let mut bb = BoundingBox {
            min: LocalPoint::new(T::infinity(), T::infinity()),
            max: LocalPoint::new(T::neg_infinity(), T::neg_infinity()),
        };
        for p in points {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        bb
    }

    pub fn diagonal(&self) -> T {
        if self.min.x > self.max.x {
            return T::zero();
        }
        self.max.dist(&self.min)
    }

    /// Distance from `q` to the box (zero inside).
    pub fn distance(&self, q: &LocalPoint<T>) -> T {
        let dx = (self.min.x - q.x).max(q.x - self.max.x).max(T::zero());
        let dy = (self.min.y - q.y).max(q.y - self.max.y).max(T::zero());
        dx.hypot(dy)
    }
}

/// Method selection and hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Idw(IdwParams),
    Rbf(RbfParams),
    Kriging(KrigingParams),
    RandomForest(ForestParams),
    Boosting(BoostParams),
    Mri(MriParams),
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Idw(_) => "idw",
            Method::Rbf(_) => "rbf",
            Method::Kriging(_) => "ok",
            Method::RandomForest(_) => "rf",
            Method::Boosting(_) => "gbt",
            Method::Mri(_) => "mri",
        }
    }

    pub const TAGS: [&'static str; 6] = ["idw", "rbf", "ok", "rf", "gbt", "mri"];
}

/// Interpolator choice plus seed, serialized as
/// `{"method": "<tag>", "params": {...}, "seed": n, "label": "..."}`.
///
/// Omitted `params` fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct InterpolatorConfig {
    pub method: Method,
    pub seed: u64,
    /// Display name in reports; defaults to the upper-cased method tag.
    pub label: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    params: serde_json::Value,
}

impl TryFrom<RawConfig> for InterpolatorConfig {
    type Error = String;

    fn try_from(raw: RawConfig) -> std::result::Result<Self, String> {
        let params = match raw.params {
            serde_json::Value::Null => serde_json::Value::Object(Default::default()),
            p => p,
        };
        fn parse<P: serde::de::DeserializeOwned>(v: serde_json::Value, tag: &str) -> std::result::Result<P, String> {
            serde_json::from_value(v).map_err(|e| format!("invalid params for method '{tag}': {e}"))
        }
        let tag = raw.method.to_ascii_lowercase();
        let method = match tag.as_str() {
            "idw" => Method::Idw(parse(params, &tag)?),
            "rbf" => Method::Rbf(parse(params, &tag)?),
            "ok" | "kriging" => Method::Kriging(parse(params, &tag)?),
            "rf" => Method::RandomForest(parse(params, &tag)?),
            "gbt" | "xgboost" => Method::Boosting(parse(params, &tag)?),
            "mri" => Method::Mri(parse(params, &tag)?),
            _ => {
                return Err(format!(
                    "unknown method '{}' (expected one of: {})",
                    raw.method,
                    Method::TAGS.join(", ")
                ))
            }
        };
        Ok(InterpolatorConfig { method, seed: raw.seed, label: raw.label })
    }
}

impl From<InterpolatorConfig> for RawConfig {
    fn from(c: InterpolatorConfig) -> Self {
        let params = match &c.method {
            Method::Idw(p) => serde_json::to_value(p),
            Method::Rbf(p) => serde_json::to_value(p),
            Method::Kriging(p) => serde_json::to_value(p),
            Method::RandomForest(p) => serde_json::to_value(p),
            Method::Boosting(p) => serde_json::to_value(p),
            Method::Mri(p) => serde_json::to_value(p),
        }
        .expect("params serialize");
        RawConfig { method: c.method.tag().to_string(), label: c.label, seed: c.seed, params }
    }
}

impl InterpolatorConfig {
    pub fn new(method: Method) -> Self {
        InterpolatorConfig { method, seed: 0, label: None }
    }

    /// RBF with ε = 1 /m and δ = 0.1, the configuration used for measured maps.
    pub fn default_map() -> Self {
        Self::new(Method::Rbf(RbfParams::default()))
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.tag().to_ascii_uppercase())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match &self.method {
            Method::Idw(p) => {
                if !(p.power > 0.0) {
                    return bad(format!("IDW power must be > 0, got {}", p.power));
                }
                if p.k_neighbors == 0 {
                    return bad("IDW k_neighbors must be ≥ 1".into());
                }
            }
            Method::Rbf(p) => {
                if !(p.epsilon > 0.0) || !(p.smoothing >= 0.0) {
                    return bad(format!("RBF needs epsilon > 0 and smoothing ≥ 0, got {} and {}", p.epsilon, p.smoothing));
                }
                if p.neighbors < 3 {
                    return bad("RBF neighbors must be ≥ 3".into());
                }
            }
            Method::Kriging(p) => {
                if let Some(v) = &p.variogram {
                    v.validate()?;
                }
                if p.n_lag_bins < 3 || p.neighbors == 0 {
                    return bad("kriging needs n_lag_bins ≥ 3 and neighbors ≥ 1".into());
                }
            }
            Method::RandomForest(p) => {
                if p.n_trees == 0 || p.min_leaf == 0 {
                    return bad("RF needs n_trees ≥ 1 and min_leaf ≥ 1".into());
                }
            }
            Method::Boosting(p) => {
                if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) || p.min_leaf == 0 {
                    return bad(format!("GBT needs learning_rate in (0, 1] and min_leaf ≥ 1, got {}", p.learning_rate));
                }
            }
            Method::Mri(p) => {
                if p.transmitters.is_empty() {
                    return bad("MRI requires transmitter positions".into());
                }
                if p.transmitters.iter().any(|t| !(t.x.is_finite() && t.y.is_finite())) {
                    return bad("MRI transmitter positions must be finite".into());
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for InterpolatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone)]
pub enum ModelState<T> {
    Idw(idw::IdwModel<T>),
    Rbf(rbf::RbfModel<T>),
    Kriging(kriging::KrigingModel<T>),
    Trees(TreeEnsemble<T>),
    Mri(mri::MriModel<T>),
}

/// A trained interpolator. Predictions are deterministic in `(state, query)`.
#[derive(Debug, Clone)]
pub struct FittedModel<T> {
    pub config: InterpolatorConfig,
    pub state: ModelState<T>,
    pub bbox: BoundingBox<T>,
    pub warnings: Vec<String>,
}

/// Trains `cfg` on `train` after merging coincident samples.
pub fn fit<T: Scalar>(cfg: &InterpolatorConfig, train: &TrainingSet<T>) -> Result<FittedModel<T>> {
    cfg.validate()?;
    train.validate()?;
    if train.is_empty() {
        return Err(Error::Size(format!("{} needs at least one training sample", cfg.label())));
    }
    let data = train.deduplicated();
    let mut warnings = Vec::new();
    let state = match &cfg.method {
        Method::Idw(p) => ModelState::Idw(idw::IdwModel::new(data.points.clone(), data.values.clone(), p)),
        Method::Rbf(p) => ModelState::Rbf(rbf::RbfModel::fit(&data, p)?),
        Method::Kriging(p) => {
            let (m, w) = kriging::KrigingModel::fit(&data, p)?;
            warnings.extend(w);
            ModelState::Kriging(m)
        }
        Method::RandomForest(p) => {
            ModelState::Trees(fit_tree_ensemble(&data, &EnsembleKind::RandomForest(p.clone()), cfg.seed)?)
        }
        Method::Boosting(p) => ModelState::Trees(fit_tree_ensemble(&data, &EnsembleKind::Boosting(p.clone()), cfg.seed)?),
        Method::Mri(p) => {
            let (m, w) = mri::MriModel::fit(&data, p)?;
            warnings.extend(w);
            ModelState::Mri(m)
        }
    };
    Ok(FittedModel { config: cfg.clone(), state, bbox: data.bounding_box(), warnings })
}

impl<T: Scalar> FittedModel<T> {
    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        match &self.state {
            ModelState::Idw(m) => m.predict_one(q),
            ModelState::Rbf(m) => m.predict_one(q),
            ModelState::Kriging(m) => m.predict_one(q),
            ModelState::Trees(m) => m.predict_one(q),
            ModelState::Mri(m) => m.predict_one(q),
        }
    }

    /// True when `q` lies farther than twice the training diagonal from the training box.
    pub fn is_extrapolation(&self, q: &LocalPoint<T>) -> bool {
        self.bbox.distance(q) > T::of(2.0) * self.bbox.diagonal()
    }
}

/// Predictions at `queries`, in order.
pub fn predict<T: Scalar>(model: &FittedModel<T>, queries: &[LocalPoint<T>]) -> Vec<T> {
    queries.par_iter().map(|q| model.predict_one(q)).collect()
}

/// Predictions plus the number of queries flagged as far extrapolation.
pub fn predict_flagged<T: Scalar>(model: &FittedModel<T>, queries: &[LocalPoint<T>]) -> (Vec<T>, usize) {
    let flagged = queries.iter().filter(|q| model.is_extrapolation(q)).count();
    (predict(model, queries), flagged)
}
