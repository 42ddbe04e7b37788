//! Model-based radio interpolation: per-transmitter log-distance regressions.
//!
//! Each transmitter gets `z ≈ p0 − 10·n·log10(d)` fitted by ordinary least
//! squares on its assigned samples (distance clamped to ≥ 1 m). The predicted
//! field is the maximum over transmitters, optionally corrected by IDW
//! interpolation of the training residuals.

use serde::{Deserialize, Serialize};

use super::idw::{IdwModel, IdwParams};
use super::TrainingSet;
use crate::error::{Error, Result};
use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MriTransmitter {
    pub x: f64,
    pub y: f64,
    /// Cell identifier used to assign samples; defaults to the transmitter's list index.
    #[serde(default)]
    pub cell_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MriParams {
    pub transmitters: Vec<MriTransmitter>,
    pub residual_idw: bool,
    pub residual: IdwParams,
}

/// Fitted log-distance parameters for one transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PathLossFit<T> {
    /// Received power at 1 m, dBm.
    pub p0: T,
    pub exponent: T,
    pub residual_rms: T,
    pub tx_position: LocalPoint<T>,
    pub n_samples: usize,
}

impl<T: Scalar> PathLossFit<T> {
    pub fn predict(&self, q: &LocalPoint<T>) -> T {
        self.p0 - T::of(10.0) * self.exponent * q.dist(&self.tx_position).max(T::one()).log10()
    }
}

#[derive(Debug, Clone)]
pub struct MriModel<T> {
    pub fits: Vec<PathLossFit<T>>,
    residual: Option<IdwModel<T>>,
}

#[inline]
fn log_regressor<T: Scalar>(p: &LocalPoint<T>, tx: &LocalPoint<T>) -> T {
    -T::of(10.0) * p.dist(tx).max(T::one()).log10()
}

/// OLS of `values` on `(1, −10·log10 d)`; `None` when fewer than two distinct distances.
pub fn fit_log_distance<T: Scalar>(points: &[LocalPoint<T>], values: &[T], tx: LocalPoint<T>) -> Option<PathLossFit<T>> {
    if points.len() < 2 {
        return None;
    }
    let u: Vec<T> = points.iter().map(|p| log_regressor(p, &tx)).collect();
    let n = T::of_usize(points.len());
    let mu = u.iter().copied().sum::<T>() / n;
    let mz = values.iter().copied().sum::<T>() / n;
    let (mut suu, mut suz) = (T::zero(), T::zero());
    for (ui, zi) in u.iter().zip(values) {
        suu += (*ui - mu) * (*ui - mu);
        suz += (*ui - mu) * (*zi - mz);
    }
    if !(suu > T::of(1e-12) * n) {
        return None;
    }
    let exponent = suz / suu;
    let p0 = mz - exponent * mu;
    let sse: T = u.iter().zip(values).map(|(ui, zi)| (*zi - p0 - exponent * *ui).powi(2)).sum();
    Some(PathLossFit { p0, exponent, residual_rms: (sse / n).sqrt(), tx_position: tx, n_samples: points.len() })
}

impl<T: Scalar> MriModel<T> {
    /// Returns the model and warnings for excluded transmitters.
    pub fn fit(train: &TrainingSet<T>, params: &MriParams) -> Result<(Self, Vec<String>)> {
        if params.transmitters.is_empty() {
            return Err(Error::Config("MRI requires at least one transmitter position".into()));
        }
        let txs: Vec<LocalPoint<T>> =
            params.transmitters.iter().map(|t| LocalPoint::new(T::of(t.x), T::of(t.y))).collect();
        let ids: Vec<u32> = params
            .transmitters
            .iter()
            .enumerate()
            .map(|(i, t)| t.cell_id.unwrap_or(i as u32))
            .collect();

        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); txs.len()];
        for (i, p) in train.points.iter().enumerate() {
            let by_cell = train.cell_ids[i].and_then(|c| ids.iter().position(|&id| id == c));
            let tx = by_cell.unwrap_or_else(|| nearest(&txs, p));
            groups[tx].push(i);
        }

        let mut fits = Vec::new();
        let mut warnings = Vec::new();
        for (t, idx) in groups.iter().enumerate() {
            let pts: Vec<_> = idx.iter().map(|&i| train.points[i]).collect();
            let vals: Vec<_> = idx.iter().map(|&i| train.values[i]).collect();
            match fit_log_distance(&pts, &vals, txs[t]) {
                Some(f) => fits.push(f),
                None => warnings.push(format!(
                    "transmitter {t} excluded: {} samples, need ≥ 2 at distinct distances",
                    idx.len()
                )),
            }
        }
        if fits.is_empty() {
            return Err(Error::Size("MRI: every transmitter lacks ≥ 2 samples at distinct distances".into()));
        }
        let mut model = MriModel { fits, residual: None };
        if params.residual_idw {
            let residuals: Vec<T> =
                train.points.iter().zip(&train.values).map(|(p, z)| *z - model.base(p)).collect();
            model.residual = Some(IdwModel::new(train.points.clone(), residuals, &params.residual));
        }
        Ok((model, warnings))
    }

    fn base(&self, q: &LocalPoint<T>) -> T {
        self.fits.iter().map(|f| f.predict(q)).fold(T::neg_infinity(), T::max)
    }

    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        let b = self.base(q);
        match &self.residual {
            Some(r) => b + r.predict_one(q),
            None => b,
        }
    }
}

fn nearest<T: Scalar>(txs: &[LocalPoint<T>], p: &LocalPoint<T>) -> usize {
    let mut best = 0;
    for (i, t) in txs.iter().enumerate().skip(1) {
        if t.dist2(p) < txs[best].dist2(p) {
            best = i;
        }
    }
    best
}
