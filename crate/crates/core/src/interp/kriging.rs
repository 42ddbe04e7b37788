//! Semivariograms and ordinary kriging.
//!
//! Variogram models use the total-sill parameterization:
//! `γ(h) = nugget + (sill − nugget)·f(h / range)` for `h > 0` and `γ(0) = 0`,
//! where `f(t) = 1 − e^(−t)` (exponential) or `1.5t − 0.5t³` capped at 1
//! (spherical). The kriging system is assembled in covariance form,
//! `C(h) = sill − γ(h)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::KdTree;
use super::linalg::{self, Lu};
use super::TrainingSet;
use crate::error::{Error, Result};
use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VariogramKind {
    #[default]
    Exponential,
    Spherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn new(kind: VariogramKind, nugget: f64, sill: f64, range: f64) -> Result<Self> {
        let m = VariogramModel { kind, nugget, sill, range };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nugget >= 0.0 && self.sill >= self.nugget && self.range > 0.0)
            || !(self.nugget.is_finite() && self.sill.is_finite() && self.range.is_finite())
        {
            return Err(Error::Config(format!(
                "variogram requires 0 ≤ nugget ≤ sill and range > 0, got nugget {}, sill {}, range {}",
                self.nugget, self.sill, self.range
            )));
        }
        Ok(())
    }

    fn shape(kind: VariogramKind, t: f64) -> f64 {
        match kind {
            VariogramKind::Exponential => 1.0 - (-t).exp(),
            VariogramKind::Spherical if t < 1.0 => 1.5 * t - 0.5 * t * t * t,
            VariogramKind::Spherical => 1.0,
        }
    }

    pub fn semivariance(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        self.nugget + (self.sill - self.nugget) * Self::shape(self.kind, h / self.range)
    }

    /// Covariance `sill − γ(h)`; lags below 1e-9 m count as zero.
    pub fn covariance<T: Scalar>(&self, h: T) -> T {
        if h < T::of(1e-9) {
            return T::of(self.sill);
        }
        T::of(self.sill - self.semivariance(h.as_f64()))
    }
}

/// One populated lag bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagBin {
    /// Mean lag of the pairs in the bin.
    pub lag: f64,
    pub semivariance: f64,
    pub pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalVariogram {
    pub bin_width: f64,
    /// `None` for bins without pairs.
    pub bins: Vec<Option<LagBin>>,
}

impl EmpiricalVariogram {
    pub fn populated(&self) -> impl Iterator<Item = &LagBin> {
        self.bins.iter().flatten()
    }
}

const ROWS_PER_CHUNK: usize = 64;

/// Binned semivariances `½·mean((z_i − z_j)²)` over pairs with lag in `(0, max_lag]`.
///
/// Bin `b` covers lags `[b·w, (b+1)·w)` with `w = max_lag / n_bins`; a pair at
/// exactly `max_lag` lands in the last bin.
pub fn empirical_variogram<T: Scalar>(train: &TrainingSet<T>, n_bins: usize, max_lag: f64) -> Result<EmpiricalVariogram> {
    if train.len() < 2 {
        return Err(Error::Size("empirical variogram needs at least 2 points".into()));
    }
    if n_bins == 0 || !(max_lag > 0.0) {
        return Err(Error::Config(format!("need n_bins ≥ 1 and max_lag > 0, got {n_bins} and {max_lag}")));
    }
    let width = max_lag / n_bins as f64;
    let n = train.len();
    let pts: Vec<(f64, f64)> = train.points.iter().map(|p| (p.x.as_f64(), p.y.as_f64())).collect();
    let z: Vec<f64> = train.values.iter().map(|v| v.as_f64()).collect();

    // (lag sum, squared-difference sum, count) per bin; chunk partials merged in order
    let partials: Vec<Vec<(f64, f64, u64)>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(ROWS_PER_CHUNK)
        .map(|rows| {
            let mut acc = vec![(0.0, 0.0, 0u64); n_bins];
            for &i in rows {
                for j in i + 1..n {
                    let h = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
                    if h > max_lag {
                        continue;
                    }
                    let b = ((h / width) as usize).min(n_bins - 1);
                    let d = z[i] - z[j];
                    acc[b].0 += h;
                    acc[b].1 += d * d;
                    acc[b].2 += 1;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![(0.0, 0.0, 0u64); n_bins];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.0 += p.0;
            t.1 += p.1;
            t.2 += p.2;
        }
    }
    let bins = total
        .into_iter()
        .map(|(hs, ds, c)| {
            (c > 0).then(|| LagBin { lag: hs / c as f64, semivariance: 0.5 * ds / c as f64, pairs: c })
        })
        .collect();
    Ok(EmpiricalVariogram { bin_width: width, bins })
}

/// A fitted variogram plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct VariogramFit {
    pub model: VariogramModel,
    /// Pair-weighted sum of squared residuals.
    pub objective: f64,
    /// Set when the optimizer failed and the method-of-moments guess was returned.
    pub warning: Option<String>,
}

/// Weighted least squares of `γ ≈ nugget + psill·f` with `nugget, psill ≥ 0`.
fn linear_part(data: &[(f64, f64, f64)], f: &[f64]) -> (f64, f64, f64) {
    let (mut sw, mut sf, mut sff, mut sg, mut sfg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((_, g, w), fi) in data.iter().zip(f) {
        sw += w;
        sf += w * fi;
        sff += w * fi * fi;
        sg += w * g;
        sfg += w * fi * g;
    }
    let sse = |c0: f64, c: f64| -> f64 {
        data.iter().zip(f).map(|((_, g, w), fi)| w * (g - c0 - c * fi).powi(2)).sum()
    };
    let mut candidates = Vec::with_capacity(4);
    let det = sw * sff - sf * sf;
    if det > 1e-12 * sw * sff {
        let c = (sw * sfg - sf * sg) / det;
        let c0 = (sg - c * sf) / sw;
        if c0 >= 0.0 && c >= 0.0 {
            candidates.push((c0, c));
        }
    }
    if sff > 0.0 {
        candidates.push((0.0, (sfg / sff).max(0.0)));
    }
    candidates.push(((sg / sw).max(0.0), 0.0));
    candidates
        .into_iter()
        .map(|(c0, c)| (c0, c, sse(c0, c)))
        .fold((0.0, 0.0, f64::INFINITY), |best, cand| if cand.2 < best.2 { cand } else { best })
}

fn profile(data: &[(f64, f64, f64)], kind: VariogramKind, range: f64) -> (f64, f64, f64) {
    let f: Vec<f64> = data.iter().map(|(h, _, _)| VariogramModel::shape(kind, h / range)).collect();
    linear_part(data, &f)
}

fn moments_guess(data: &[(f64, f64, f64)], kind: VariogramKind) -> VariogramModel {
    let nugget = data[0].1.max(0.0);
    let tail = &data[data.len() / 2..];
    let sill = (tail.iter().map(|d| d.1).sum::<f64>() / tail.len() as f64).max(nugget);
    let span = data[data.len() - 1].0.max(f64::MIN_POSITIVE);
    VariogramModel { kind, nugget, sill, range: span / 3.0 }
}

/// Fits a variogram model to populated lag bins by pair-weighted least squares.
///
/// For each candidate range the nugget and partial sill follow from a
/// non-negative linear least-squares solve; the range is then located by a
/// log-spaced scan followed by golden-section refinement within
/// `[smallest lag, 4 × largest lag]`.
pub fn fit_variogram(emp: &EmpiricalVariogram, kind: VariogramKind) -> Result<VariogramFit> {
    let mut data: Vec<(f64, f64, f64)> =
        emp.populated().map(|b| (b.lag, b.semivariance, b.pairs as f64)).collect();
    if data.len() < 3 {
        return Err(Error::Size(format!("variogram fit needs ≥ 3 populated lag bins, found {}", data.len())));
    }
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_lag = data[data.len() - 1].0;
    let min_lag = data.iter().map(|d| d.0).find(|h| *h > 0.0).unwrap_or(emp.bin_width * 0.5);
    let (lo, hi) = (min_lag.ln(), (4.0 * max_lag).ln());

    let eval = |log_r: f64| profile(&data, kind, log_r.exp()).2;
    const SCAN: usize = 80;
    let grid: Vec<f64> = (0..=SCAN).map(|i| lo + (hi - lo) * i as f64 / SCAN as f64).collect();
    let scores: Vec<f64> = grid.iter().map(|&g| eval(g)).collect();
    let best = (0..=SCAN).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });

    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(SCAN)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    let mut iterations = 0;
    while (b - a) > 1e-10 && iterations < 200 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
        iterations += 1;
    }
    let mut log_r = 0.5 * (a + b);
    if scores[best] < eval(log_r) {
        log_r = grid[best];
    }
    let range = log_r.exp();
    let (nugget, psill, objective) = profile(&data, kind, range);
    let model = VariogramModel { kind, nugget, sill: nugget + psill, range };
    if !objective.is_finite() || model.validate().is_err() {
        return Ok(VariogramFit {
            model: moments_guess(&data, kind),
            objective: f64::NAN,
            warning: Some("variogram optimizer did not converge; using method-of-moments guess".into()),
        });
    }
    Ok(VariogramFit { model, objective, warning: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrigingParams {
    pub variogram_kind: VariogramKind,
    pub n_lag_bins: usize,
    /// Largest lag used for the empirical variogram; half the bounding-box diagonal when omitted.
    pub max_lag: Option<f64>,
    /// Fixed variogram; skips empirical fitting when set.
    pub variogram: Option<VariogramModel>,
    pub neighbors: usize,
    pub global_max: usize,
}

impl Default for KrigingParams {
    fn default() -> Self {
        KrigingParams {
            variogram_kind: VariogramKind::Exponential,
            n_lag_bins: 20,
            max_lag: None,
            variogram: None,
            neighbors: 64,
            global_max: 2000,
        }
    }
}

fn kriging_matrix<T: Scalar>(model: &VariogramModel, pts: &[LocalPoint<T>]) -> Vec<T> {
    let n = pts.len();
    let dim = n + 1;
    let mut a = vec![T::zero(); dim * dim];
    for i in 0..n {
        for j in 0..n {
            a[i * dim + j] = model.covariance(pts[i].dist(&pts[j]));
        }
        a[i * dim + n] = T::one();
        a[n * dim + i] = T::one();
    }
    a
}

/// Ordinary kriging weights of `pts` for query `q`; they sum to one.
pub fn kriging_weights<T: Scalar>(model: &VariogramModel, pts: &[LocalPoint<T>], q: &LocalPoint<T>) -> Result<Vec<T>> {
    let n = pts.len();
    let mut rhs: Vec<T> = pts.iter().map(|p| model.covariance(p.dist(q))).collect();
    rhs.push(T::one());
    let mut sol = linalg::solve(kriging_matrix(model, pts), n + 1, &rhs).map_err(|_| conditioning_error())?;
    sol.truncate(n);
    Ok(sol)
}

fn conditioning_error() -> Error {
    Error::Conditioning("kriging system is singular; increase the variogram nugget".into())
}

#[derive(Debug, Clone)]
pub enum KrigingModel<T> {
    /// Dual form: prediction is `Σ β_i C(|q − x_i|) + β_n`.
    Global { variogram: VariogramModel, points: Vec<LocalPoint<T>>, dual: Vec<T> },
    Local { variogram: VariogramModel, tree: KdTree<T>, values: Vec<T>, neighbors: usize },
}

impl<T: Scalar> KrigingModel<T> {
    /// Returns the model and any variogram-fit warning.
    pub fn fit(train: &TrainingSet<T>, params: &KrigingParams) -> Result<(Self, Option<String>)> {
        let (variogram, warning) = match &params.variogram {
            Some(v) => {
                v.validate()?;
                (*v, None)
            }
            None => {
                let max_lag = match params.max_lag {
                    Some(l) => l,
                    None => 0.5 * train.bounding_box().diagonal().as_f64(),
                };
                if !(max_lag > 0.0) {
                    return Err(Error::Size("ordinary kriging needs spatially distinct samples".into()));
                }
                let emp = empirical_variogram(train, params.n_lag_bins, max_lag)?;
                let fit = fit_variogram(&emp, params.variogram_kind)?;
                (fit.model, fit.warning)
            }
        };
        if train.len() <= params.global_max {
            let n = train.len();
            let lu = Lu::factor(kriging_matrix(&variogram, &train.points), n + 1).map_err(|_| conditioning_error())?;
            let mut rhs = train.values.clone();
            rhs.push(T::zero());
            let dual = lu.solve(&rhs);
            return Ok((KrigingModel::Global { variogram, points: train.points.clone(), dual }, warning));
        }
        Ok((
            KrigingModel::Local {
                variogram,
                tree: KdTree::new(train.points.clone()),
                values: train.values.clone(),
                neighbors: params.neighbors.max(1),
            },
            warning,
        ))
    }

    pub fn variogram(&self) -> &VariogramModel {
        match self {
            KrigingModel::Global { variogram, .. } | KrigingModel::Local { variogram, .. } => variogram,
        }
    }

    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        match self {
            KrigingModel::Global { variogram, points, dual } => {
                let n = points.len();
                let s: T = points.iter().zip(dual).map(|(p, b)| *b * variogram.covariance(p.dist(q))).sum();
                s + dual[n]
            }
            KrigingModel::Local { variogram, tree, values, neighbors } => {
                let nbrs = tree.nearest(q, *neighbors);
                let pts: Vec<LocalPoint<T>> = nbrs.iter().map(|n| tree.points()[n.0]).collect();
                match kriging_weights(variogram, &pts, q) {
                    Ok(w) => w.iter().zip(&nbrs).map(|(w, n)| *w * values[n.0]).sum(),
                    Err(_) => nbrs.iter().map(|n| values[n.0]).sum::<T>() / T::of_usize(nbrs.len()),
                }
            }
        }
    }
}
