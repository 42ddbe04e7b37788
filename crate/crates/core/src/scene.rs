//! Synthetic ground truth: log-distance path loss plus shadowing.
//!
//! Every transmitter gets its own shadowing field on the scene extent. The
//! field is white Gaussian noise filtered by a first-order exponential kernel
//! along rows and then columns, which yields the separable correlation
//! `exp(−(|Δx| + |Δy|) / L)` at unit variance, scaled to `shadow_sigma`. With
//! `L = 0` the field is i.i.d. per bin. Coverage at a location is the maximum
//! over transmitters of received power plus that transmitter's shadowing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{bin_index, GridSpec, LocalPoint, Raster};
use crate::interp::TrainingSet;
use crate::scalar::Scalar;

/// Front-to-back ratio applied when a sector antenna omits it, dB.
pub const DEFAULT_FRONT_TO_BACK_DB: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Transmitter<T> {
    pub position: LocalPoint<T>,
    /// dBm.
    pub tx_power: T,
    /// Path loss at 1 m, dB.
    pub ref_loss: T,
    pub exponent: T,
    /// Boresight bearing, degrees clockwise from north. Omni when absent.
    #[serde(default)]
    pub azimuth: Option<T>,
    /// Half-power beamwidth, degrees.
    #[serde(default)]
    pub beamwidth: Option<T>,
    #[serde(default)]
    pub front_to_back: Option<T>,
}

impl<T: Scalar> Transmitter<T> {
    pub fn omni(position: LocalPoint<T>, tx_power: T, ref_loss: T, exponent: T) -> Self {
        Transmitter { position, tx_power, ref_loss, exponent, azimuth: None, beamwidth: None, front_to_back: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent >= T::of(1.5) && self.exponent <= T::of(6.0)) {
            return Err(Error::Validation(format!("path-loss exponent {} outside [1.5, 6]", self.exponent)));
        }
        if let Some(bw) = self.beamwidth {
            if !(bw > T::zero() && bw <= T::of(360.0)) {
                return Err(Error::Validation(format!("beamwidth {bw} outside (0, 360]")));
            }
        }
        if self.front_to_back.is_some_and(|f| f < T::zero()) {
            return Err(Error::Validation("front_to_back must be ≥ 0".into()));
        }
        if !self.position.is_finite() || !self.tx_power.is_finite() || !self.ref_loss.is_finite() {
            return Err(Error::Validation("transmitter parameters must be finite".into()));
        }
        Ok(())
    }

    /// Parabolic sector pattern `−min(12·(θ/beamwidth)², front_to_back)`; zero for omni.
    pub fn antenna_gain(&self, p: &LocalPoint<T>) -> T {
        let (Some(az), Some(bw)) = (self.azimuth, self.beamwidth) else {
            return T::zero();
        };
        let dx = p.x - self.position.x;
        let dy = p.y - self.position.y;
        if dx == T::zero() && dy == T::zero() {
            return T::zero();
        }
        let bearing = dx.atan2(dy).to_degrees();
        let full = T::of(360.0);
        let mut theta = ((bearing - az) % full + full) % full;
        if theta > T::of(180.0) {
            theta = full - theta;
        }
        let fb = self.front_to_back.unwrap_or(T::of(DEFAULT_FRONT_TO_BACK_DB));
        let r = theta / bw;
        -(T::of(12.0) * r * r).min(fb)
    }
}

/// Deterministic received power in dBm; distances under 1 m are clamped to 1 m.
pub fn received_power<T: Scalar>(tx: &Transmitter<T>, p: &LocalPoint<T>) -> T {
    let d = tx.position.dist(p).max(T::one());
    tx.tx_power - (tx.ref_loss + T::of(10.0) * tx.exponent * d.log10()) + tx.antenna_gain(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct SceneConfig<T> {
    pub extent: GridSpec<T>,
    pub transmitters: Vec<Transmitter<T>>,
    /// dB.
    pub shadow_sigma: T,
    /// Meters; 0 gives i.i.d. shadowing per bin.
    #[serde(default)]
    pub shadow_correlation_length: T,
    #[serde(default)]
    pub seed: u64,
}

impl<T: Scalar> SceneConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.extent.validate()?;
        if !(self.shadow_sigma >= T::zero()) {
            return Err(Error::Validation(format!("shadow_sigma must be ≥ 0, got {}", self.shadow_sigma)));
        }
        if !(self.shadow_correlation_length >= T::zero()) {
            return Err(Error::Validation("shadow_correlation_length must be ≥ 0".into()));
        }
        for (i, t) in self.transmitters.iter().enumerate() {
            t.validate().map_err(|e| Error::Validation(format!("transmitter {i}: {e}")))?;
        }
        Ok(())
    }

    /// Max over transmitters of deterministic power; returns `(value, argmax index)`.
    pub fn deterministic(&self, p: &LocalPoint<T>) -> (T, usize) {
        max_over(self.transmitters.iter().map(|t| received_power(t, p)))
    }
}

fn max_over<T: Scalar>(values: impl Iterator<Item = T>) -> (T, usize) {
    let mut best = (T::neg_infinity(), 0);
    for (i, v) in values.enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// Materialized shadowing realization for a scene.
#[derive(Debug, Clone)]
pub struct SceneField<T> {
    pub scene: SceneConfig<T>,
    /// One flat field over `scene.extent` per transmitter.
    shadow: Vec<Vec<T>>,
}

fn ar1_pass<T: Scalar>(buf: &mut [T], len: usize, stride: usize, start: usize, rho: T, innov: T) {
    let mut prev = buf[start];
    for k in 1..len {
        let i = start + k * stride;
        prev = rho * prev + innov * buf[i];
        buf[i] = prev;
    }
}

fn shadow_field<T: Scalar>(scene: &SceneConfig<T>, tx_index: usize) -> Vec<T> {
    let g = &scene.extent;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    rng.set_stream(tx_index as u64);
    let mut field: Vec<T> = (0..g.len()).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect();
    if scene.shadow_correlation_length > T::zero() {
        let rho = (-g.bin_size / scene.shadow_correlation_length).exp();
        let innov = (T::one() - rho * rho).sqrt();
        for row in 0..g.n_rows {
            ar1_pass(&mut field, g.n_cols, 1, row * g.n_cols, rho, innov);
        }
        for col in 0..g.n_cols {
            ar1_pass(&mut field, g.n_rows, g.n_cols, col, rho, innov);
        }
    }
    for v in &mut field {
        *v *= scene.shadow_sigma;
    }
    field
}

impl<T: Scalar> SceneField<T> {
    pub fn new(scene: SceneConfig<T>) -> Result<Self> {
        scene.validate()?;
        let shadow = if scene.shadow_sigma > T::zero() {
            (0..scene.transmitters.len()).into_par_iter().map(|t| shadow_field(&scene, t)).collect()
        } else {
            Vec::new()
        };
        Ok(SceneField { scene, shadow })
    }

    /// Shadowing of transmitter `tx` in extent bin `flat`.
    pub fn shadow(&self, tx: usize, flat: usize) -> T {
        self.shadow.get(tx).map_or(T::zero(), |f| f[flat])
    }

    /// Coverage value and strongest transmitter at `p`. Locations outside the
    /// extent see no shadowing.
    pub fn value_at(&self, p: &LocalPoint<T>) -> (T, usize) {
        let g = &self.scene.extent;
        let flat = bin_index(g, p).ok().map(|(c, r)| g.flat_index(c, r));
        max_over(
            self.scene
                .transmitters
                .iter()
                .enumerate()
                .map(|(t, tx)| received_power(tx, p) + flat.map_or(T::zero(), |f| self.shadow(t, f))),
        )
    }

    pub fn raster(&self, grid: &GridSpec<T>) -> Raster<T> {
        let values: Vec<T> = grid.centers().par_iter().map(|c| self.value_at(c).0).collect();
        Raster::from_values(*grid, values).expect("one value per bin")
    }

    pub fn sample(&self, points: &[LocalPoint<T>]) -> Result<TrainingSet<T>> {
        let mut out = TrainingSet::empty();
        for (i, p) in points.iter().enumerate() {
            bin_index(&self.scene.extent, p).map_err(|e| Error::Validation(format!("sample point {i}: {e}")))?;
            let (v, tx) = self.value_at(p);
            out.push(*p, v, Some(tx as u32));
        }
        Ok(out)
    }
}

/// Coverage raster of `scene` evaluated at the bin centers of `grid`.
pub fn ground_truth_raster<T: Scalar>(scene: &SceneConfig<T>, grid: &GridSpec<T>) -> Result<Raster<T>> {
    if scene.transmitters.is_empty() {
        return Err(Error::Size("scene has no transmitters".into()));
    }
    Ok(SceneField::new(scene.clone())?.raster(grid))
}

/// Samples the scene at `points`; cell ids record the strongest transmitter.
pub fn sample_scene<T: Scalar>(scene: &SceneConfig<T>, points: &[LocalPoint<T>]) -> Result<TrainingSet<T>> {
    if scene.transmitters.is_empty() {
        return Err(Error::Size("scene has no transmitters".into()));
    }
    SceneField::new(scene.clone())?.sample(points)
}

/// A serpentine walk over `extent` with a point every `spacing` meters of path.
///
/// Passes run east/west, `spacing` apart and inset by half a spacing from the
/// edges, joined at alternating ends. Each point is jittered uniformly by up to
/// a quarter spacing per axis and kept inside the extent.
pub fn synth_walk_path<T: Scalar>(extent: &GridSpec<T>, spacing: T, seed: u64) -> Result<Vec<LocalPoint<T>>> {
    if !(spacing > T::zero()) || !spacing.is_finite() {
        return Err(Error::Validation(format!("walk spacing must be > 0, got {spacing}")));
    }
    let two = T::of(2.0);
    let (w, h) = (extent.width(), extent.height());
    let inset_x = (spacing / two).min(w / two);
    let inset_y = (spacing / two).min(h / two);
    let x_lo = extent.origin.x + inset_x;
    let x_hi = extent.origin.x + w - inset_x;
    let y0 = extent.origin.y + inset_y;
    let y_last = extent.origin.y + h - inset_y;
    let n_passes = ((y_last - y0) / spacing + T::of(1e-9)).floor().to_usize().unwrap_or(0) + 1;

    let mut vertices = Vec::with_capacity(2 * n_passes);
    for k in 0..n_passes {
        let y = y0 + T::of_usize(k) * spacing;
        let (a, b) = if k % 2 == 0 { (x_lo, x_hi) } else { (x_hi, x_lo) };
        vertices.push(LocalPoint::new(a, y));
        vertices.push(LocalPoint::new(b, y));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quarter = spacing / T::of(4.0);
    let eps = extent.bin_size * T::of(1e-6);
    let clamp = |v: T, lo: T, hi: T| v.max(lo).min(hi - eps);
    let mut out = Vec::new();
    // distance into the current segment at which the next point falls
    let mut carry = T::zero();
    for seg in vertices.windows(2) {
        let len = seg[0].dist(&seg[1]);
        let mut s = carry;
        while s <= len {
            let t = if len > T::zero() { s / len } else { T::zero() };
            let base = LocalPoint::new(seg[0].x + (seg[1].x - seg[0].x) * t, seg[0].y + (seg[1].y - seg[0].y) * t);
            let jx = T::of(rng.random_range(-1.0..=1.0)) * quarter;
            let jy = T::of(rng.random_range(-1.0..=1.0)) * quarter;
            out.push(LocalPoint::new(
                clamp(base.x + jx, extent.origin.x, extent.origin.x + w),
                clamp(base.y + jy, extent.origin.y, extent.origin.y + h),
            ));
            s += spacing;
        }
        carry = s - len;
    }
    Ok(out)
}
