//! Local projection, bin grids and raster aggregation.
//!
//! Geographic coordinates are projected onto a local east/north plane in
//! meters with an equirectangular approximation around a fixed origin. Grids
//! are axis-aligned in that plane: bin `(col, row)` covers
//! `[origin.x + col·bin, origin.x + (col+1)·bin) × [origin.y + row·bin, ...)`,
//! with row 0 at the southern edge.

mod export;

pub use export::{raster_from_csv, raster_to_csv, RasterMeta};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean Earth radius used by [`project`], in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// WGS84 latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::Validation(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Validation(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        Ok(())
    }
}

/// A point on the local plane, meters east (`x`) and north (`y`) of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LocalPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> LocalPoint<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        LocalPoint { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub fn offset(&self, dx: T, dy: T) -> Self {
        LocalPoint::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Projects `p` onto the local plane centred at `origin`.
///
/// The projection is valid only within one degree of latitude of the origin,
/// which covers campus-scale extents with negligible distortion.
pub fn project<T: Scalar>(p: GeoPoint, origin: GeoPoint) -> Result<LocalPoint<T>> {
    p.validate()?;
    origin.validate()?;
    let dlat = p.lat - origin.lat;
    if dlat.abs() >= 1.0 {
        return Err(Error::Validation(format!(
            "latitude {} is {:.3}° from origin; projection limited to < 1°",
            p.lat,
            dlat.abs()
        )));
    }
    let rad = std::f64::consts::PI / 180.0;
    let x = (p.lon - origin.lon) * rad * EARTH_RADIUS_M * (origin.lat * rad).cos();
    let y = dlat * rad * EARTH_RADIUS_M;
    Ok(LocalPoint::new(T::of(x), T::of(y)))
}

/// Inverse of [`project`].
pub fn unproject<T: Scalar>(p: LocalPoint<T>, origin: GeoPoint) -> GeoPoint {
    let rad = std::f64::consts::PI / 180.0;
    let lat = origin.lat + p.y.as_f64() / (rad * EARTH_RADIUS_M);
    let lon = origin.lon + p.x.as_f64() / (rad * EARTH_RADIUS_M * (origin.lat * rad).cos());
    GeoPoint { lat, lon }
}

/// Axis-aligned bin grid on the local plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GridSpec<T> {
    /// Southwest corner.
    pub origin: LocalPoint<T>,
    pub bin_size: T,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(origin: LocalPoint<T>, bin_size: T, n_cols: usize, n_rows: usize) -> Result<Self> {
        let g = GridSpec { origin, bin_size, n_cols, n_rows };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_size > T::zero()) || !self.bin_size.is_finite() {
            return Err(Error::Validation(format!("bin_size must be > 0, got {}", self.bin_size)));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::Validation(format!(
                "grid must have at least one bin, got {}x{}",
                self.n_cols, self.n_rows
            )));
        }
        if !self.origin.is_finite() {
            return Err(Error::Validation("grid origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> T {
        self.bin_size * T::of_usize(self.n_cols)
    }

    pub fn height(&self) -> T {
        self.bin_size * T::of_usize(self.n_rows)
    }

    /// Flat row-major index of `(col, row)`.
    #[inline]
    pub fn flat_index(&self, col: usize, row: usize) -> usize {
        row * self.n_cols + col
    }

    #[inline]
    pub fn col_row(&self, flat: usize) -> (usize, usize) {
        (flat % self.n_cols, flat / self.n_cols)
    }

    pub fn bin_center(&self, col: usize, row: usize) -> LocalPoint<T> {
        let half = T::of(0.5);
        LocalPoint::new(
            self.origin.x + (T::of_usize(col) + half) * self.bin_size,
            self.origin.y + (T::of_usize(row) + half) * self.bin_size,
        )
    }

    /// Bin centers in flat (row-major, south row first) order.
    pub fn centers(&self) -> Vec<LocalPoint<T>> {
        (0..self.len())
            .map(|i| {
                let (c, r) = self.col_row(i);
                self.bin_center(c, r)
            })
            .collect()
    }

    pub fn contains(&self, p: &LocalPoint<T>) -> bool {
        bin_index(self, p).is_ok()
    }

    /// Smallest grid with the given bin size covering every point plus `margin` meters.
    ///
    /// The origin is snapped to a multiple of `bin_size`.
    pub fn covering(points: &[LocalPoint<T>], bin_size: T, margin: T) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Size("cannot derive an extent from zero points".into()));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            if !p.is_finite() {
                return Err(Error::Validation("non-finite point".into()));
            }
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let ox = ((lo.x - margin) / bin_size).floor() * bin_size;
        let oy = ((lo.y - margin) / bin_size).floor() * bin_size;
        let n_cols = ((hi.x + margin - ox) / bin_size).floor().to_usize().unwrap_or(0) + 1;
        let n_rows = ((hi.y + margin - oy) / bin_size).floor().to_usize().unwrap_or(0) + 1;
        GridSpec::new(LocalPoint::new(ox, oy), bin_size, n_cols, n_rows)
    }
}

/// Returns the `(col, row)` of the bin containing `p`.
///
/// Lower bin edges are inclusive and upper edges exclusive. Points outside the
/// extent yield [`Error::OutOfBounds`] carrying the computed indices.
pub fn bin_index<T: Scalar>(grid: &GridSpec<T>, p: &LocalPoint<T>) -> Result<(usize, usize)> {
    let fc = ((p.x - grid.origin.x) / grid.bin_size).floor();
    let fr = ((p.y - grid.origin.y) / grid.bin_size).floor();
    let (Some(col), Some(row)) = (fc.to_i64(), fr.to_i64()) else {
        return Err(Error::Validation(format!("cannot bin non-finite point ({}, {})", p.x, p.y)));
    };
    if col < 0 || row < 0 || col as usize >= grid.n_cols || row as usize >= grid.n_rows {
        return Err(Error::OutOfBounds { col, row });
    }
    Ok((col as usize, row as usize))
}

/// How samples falling in the same bin are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Mean,
    Max,
}

/// Gridded coverage values. A bin with count 0 has no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Raster<T> {
    pub grid: GridSpec<T>,
    pub values: Vec<Option<T>>,
    pub counts: Vec<u32>,
}

impl<T: Scalar> Raster<T> {
    pub fn empty(grid: GridSpec<T>) -> Self {
        Raster { grid, values: vec![None; grid.len()], counts: vec![0; grid.len()] }
    }

    /// Raster with every bin populated once from `values` (flat order).
    pub fn from_values(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.n_cols,
                grid.n_rows
            )));
        }
        Ok(Raster {
            grid,
            counts: vec![1; values.len()],
            values: values.into_iter().map(Some).collect(),
        })
    }

    pub fn get(&self, col: usize, row: usize) -> Option<T> {
        self.values[self.grid.flat_index(col, row)]
    }

    pub fn populated(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.values.len() != self.grid.len() || self.counts.len() != self.grid.len() {
            return Err(Error::Shape("raster arrays do not match grid size".into()));
        }
        for (v, c) in self.values.iter().zip(&self.counts) {
            if *c == 0 && v.is_some() {
                return Err(Error::Validation("bin with zero count holds a value".into()));
            }
        }
        Ok(())
    }
}

/// Result of [`aggregate`]: the raster plus the number of out-of-extent samples.
#[derive(Debug, Clone)]
pub struct Aggregation<T> {
    pub raster: Raster<T>,
    pub dropped: usize,
}

/// Bins `(point, value)` samples onto `grid`, combining co-located samples with `reducer`.
pub fn aggregate<T: Scalar>(
    samples: &[(LocalPoint<T>, T)],
    grid: &GridSpec<T>,
    reducer: Reducer,
) -> Result<Aggregation<T>> {
    let mut raster = Raster::empty(*grid);
    let mut dropped = 0;
    for (p, v) in samples {
        if !v.is_finite() {
            return Err(Error::Validation(format!("non-finite sample value {v}")));
        }
        let Ok((c, r)) = bin_index(grid, p) else {
            dropped += 1;
            continue;
        };
        let i = grid.flat_index(c, r);
        raster.counts[i] += 1;
        raster.values[i] = Some(match (raster.values[i], reducer) {
            (None, _) => *v,
            (Some(acc), Reducer::Mean) => acc + *v,
            (Some(acc), Reducer::Max) => acc.max(*v),
        });
    }
    if reducer == Reducer::Mean {
        for (v, c) in raster.values.iter_mut().zip(&raster.counts) {
            if let Some(sum) = v {
                *sum = *sum / T::from_u32(*c).unwrap();
            }
        }
    }
    Ok(Aggregation { raster, dropped })
}

/// Summary statistics over the populated bins of a raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterStats<T> {
    pub min: Option<T>,
    pub max: Option<T>,
    pub mean: Option<T>,
    pub populated_fraction: f64,
}

pub fn raster_stats<T: Scalar>(r: &Raster<T>) -> RasterStats<T> {
    let populated: Vec<T> = r.values.iter().flatten().copied().collect();
    let total = r.values.len();
    if populated.is_empty() {
        return RasterStats { min: None, max: None, mean: None, populated_fraction: 0.0 };
    }
    let min = populated.iter().copied().fold(T::infinity(), T::min);
    let max = populated.iter().copied().fold(T::neg_infinity(), T::max);
    let mean = populated.iter().copied().sum::<T>() / T::of_usize(populated.len());
    RasterStats {
        min: Some(min),
        max: Some(max),
        mean: Some(mean),
        populated_fraction: populated.len() as f64 / total as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(ox: f64, oy: f64, bin: f64, c: usize, r: usize) -> GridSpec<f64> {
        GridSpec::new(LocalPoint::new(ox, oy), bin, c, r).unwrap()
    }

    #[test]
    fn project_identity() {
        let o = GeoPoint::new(55.944, -3.187).unwrap();
        let p: LocalPoint<f64> = project(o, o).unwrap();
        assert_eq!(p, LocalPoint::new(0.0, 0.0));
    }

    #[test]
    fn project_one_degree_longitude_at_campus_latitude() {
        let o = GeoPoint::new(55.944, -3.187).unwrap();
        let p = GeoPoint::new(55.944, -2.187).unwrap();
        let l: LocalPoint<f64> = project(p, o).unwrap();
        let expected = (std::f64::consts::PI / 180.0) * 6_371_000.0 * 55.944f64.to_radians().cos();
        assert_relative_eq!(l.x, expected, max_relative = 1e-12);
        assert!((l.x - 62_270.0).abs() < 50.0, "{}", l.x);
        assert_eq!(l.y, 0.0);
    }

    #[test]
    fn project_small_latitude_step_at_equator() {
        let o = GeoPoint::new(0.0, 10.0).unwrap();
        let l: LocalPoint<f64> = project(GeoPoint::new(0.001, 10.0).unwrap(), o).unwrap();
        assert_relative_eq!(l.y, 111.194_926_644_558_73, max_relative = 1e-12);
        assert!(l.x.abs() < 1e-12);
    }

    #[test]
    fn project_rejects_bad_coordinates() {
        let o = GeoPoint { lat: 10.0, lon: 0.0 };
        assert!(project::<f64>(GeoPoint { lat: 91.0, lon: 0.0 }, o).is_err());
        assert!(project::<f64>(GeoPoint { lat: 10.0, lon: 181.0 }, o).is_err());
        assert!(project::<f64>(GeoPoint { lat: 11.5, lon: 0.0 }, o).is_err());
    }

    #[test]
    fn unproject_inverts_project() {
        let o = GeoPoint::new(55.944, -3.187).unwrap();
        let p = GeoPoint::new(55.9461, -3.1902).unwrap();
        let back = unproject(project::<f64>(p, o).unwrap(), o);
        assert!((back.lat - p.lat).abs() < 1e-12 && (back.lon - p.lon).abs() < 1e-12);
    }

    #[test]
    fn bin_index_examples() {
        let g = grid(0.0, 0.0, 1.0, 10, 10);
        assert_eq!(bin_index(&g, &LocalPoint::new(0.5, 0.5)).unwrap(), (0, 0));
        assert_eq!(bin_index(&g, &LocalPoint::new(3.999, 2.0)).unwrap(), (3, 2));
        let g2 = grid(10.0, 10.0, 2.0, 5, 5);
        assert_eq!(bin_index(&g2, &LocalPoint::new(15.0, 11.0)).unwrap(), (2, 0));
    }

    #[test]
    fn bin_index_out_of_bounds_carries_indices() {
        let g = grid(0.0, 0.0, 1.0, 4, 4);
        match bin_index(&g, &LocalPoint::new(4.0, -0.5)) {
            Err(Error::OutOfBounds { col, row }) => assert_eq!((col, row), (4, -1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aggregate_reducers() {
        let g = grid(0.0, 0.0, 1.0, 2, 2);
        let s = vec![(LocalPoint::new(0.2, 0.2), -60.0), (LocalPoint::new(0.7, 0.9), -70.0)];
        let max = aggregate(&s, &g, Reducer::Max).unwrap();
        assert_eq!(max.raster.get(0, 0), Some(-60.0));
        assert_eq!(max.raster.counts[0], 2);
        let mean = aggregate(&s, &g, Reducer::Mean).unwrap();
        assert_eq!(mean.raster.get(0, 0), Some(-65.0));
        assert_eq!(mean.raster.populated(), 1);
    }

    #[test]
    fn aggregate_drops_out_of_extent() {
        let g = grid(0.0, 0.0, 1.0, 2, 2);
        let a = aggregate(&[(LocalPoint::new(5.0, 0.5), -60.0)], &g, Reducer::Max).unwrap();
        assert_eq!(a.dropped, 1);
        assert_eq!(a.raster, Raster::empty(g));
    }

    #[test]
    fn aggregate_empty_is_all_absent() {
        let g = grid(0.0, 0.0, 1.0, 3, 2);
        let a = aggregate::<f64>(&[], &g, Reducer::Mean).unwrap();
        assert_eq!(a.raster.populated(), 0);
        assert_eq!(a.dropped, 0);
    }

    #[test]
    fn stats_examples() {
        let g = grid(0.0, 0.0, 1.0, 3, 1);
        let r = Raster { grid: g, values: vec![Some(-60.0), Some(-70.0), None], counts: vec![1, 1, 0] };
        let s = raster_stats(&r);
        assert_eq!((s.min, s.max, s.mean), (Some(-70.0), Some(-60.0), Some(-65.0)));
        assert_relative_eq!(s.populated_fraction, 2.0 / 3.0);

        let one = Raster::from_values(grid(0.0, 0.0, 1.0, 1, 1), vec![-50.0]).unwrap();
        let s = raster_stats(&one);
        assert_eq!((s.min, s.max, s.mean), (Some(-50.0), Some(-50.0), Some(-50.0)));
        assert_eq!(s.populated_fraction, 1.0);

        let s = raster_stats(&Raster::<f64>::empty(g));
        assert_eq!(s.populated_fraction, 0.0);
        assert!(s.mean.is_none());
    }

    #[test]
    fn covering_grid_contains_points() {
        let pts = vec![LocalPoint::new(-3.2, 7.9), LocalPoint::new(12.5, -1.0)];
        let g = GridSpec::covering(&pts, 1.0, 2.0).unwrap();
        assert!(pts.iter().all(|p| g.contains(p)));
        assert_eq!(g.origin, LocalPoint::new(-6.0, -3.0));
    }

    #[test]
    fn generic_over_f32() {
        let g = GridSpec::<f32>::new(LocalPoint::new(0.0, 0.0), 2.0, 4, 4).unwrap();
        assert_eq!(bin_index(&g, &LocalPoint::new(5.0f32, 1.0)).unwrap(), (2, 0));
    }

    proptest! {
        #[test]
        fn binning_partitions_extent(x in 0.0f64..50.0, y in 0.0f64..30.0, bin in 0.5f64..4.0) {
            let g = grid(0.0, 0.0, bin, (50.0 / bin).ceil() as usize, (30.0 / bin).ceil() as usize);
            let (c, r) = bin_index(&g, &LocalPoint::new(x, y)).unwrap();
            let lo_x = c as f64 * bin;
            let lo_y = r as f64 * bin;
            prop_assert!(lo_x <= x && x < lo_x + bin);
            prop_assert!(lo_y <= y && y < lo_y + bin);
        }

        #[test]
        fn count_conservation_and_max_dominance(
            pts in proptest::collection::vec((-5.0f64..25.0, -5.0f64..25.0, -120.0f64..-30.0), 0..200)
        ) {
            let g = grid(0.0, 0.0, 2.0, 10, 10);
            let s: Vec<_> = pts.iter().map(|&(x, y, v)| (LocalPoint::new(x, y), v)).collect();
            let mx = aggregate(&s, &g, Reducer::Max).unwrap();
            let mn = aggregate(&s, &g, Reducer::Mean).unwrap();
            let total: u32 = mx.raster.counts.iter().sum();
            prop_assert_eq!(total as usize + mx.dropped, s.len());
            mx.raster.check_invariants().unwrap();
            for (a, b) in mx.raster.values.iter().zip(&mn.raster.values) {
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!(*a >= *b - 1e-9),
                    (None, None) => {}
                    _ => prop_assert!(false, "populated bins differ"),
                }
            }
        }

        #[test]
        fn project_then_bin_is_stable_near_bin_centers(
            col in 0usize..200, row in 0usize..200,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0,
        ) {
            let origin = GeoPoint::new(55.944, -3.187).unwrap();
            let g = grid(0.0, 0.0, 1.0, 200, 200);
            let center = g.bin_center(col, row);
            let base = unproject(center, origin);
            // perturbation of at most bin_size/3 meters
            let r = (dx * dx + dy * dy).sqrt().max(1.0);
            let off = center.offset(dx / r / 3.0 * 0.999, dy / r / 3.0 * 0.999);
            let moved = unproject(off, origin);
            let a = bin_index(&g, &project::<f64>(base, origin).unwrap()).unwrap();
            let b = bin_index(&g, &project::<f64>(moved, origin).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
