//! Raster CSV matrix + JSON sidecar.
//!
//! The CSV holds one line per grid row, northernmost row first, with one cell
//! per column and an empty cell for bins without data. The sidecar carries the
//! georeference and grid geometry.

use serde::{Deserialize, Serialize};

use super::{GeoPoint, GridSpec, LocalPoint, Raster};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// JSON sidecar describing a raster CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    /// Geographic origin of the local frame.
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub bin_size_m: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub metric: String,
    pub unit: String,
    /// Southwest grid corner in the local frame; zero when omitted.
    #[serde(default)]
    pub origin_x_m: f64,
    #[serde(default)]
    pub origin_y_m: f64,
}

impl RasterMeta {
    pub fn new<T: Scalar>(grid: &GridSpec<T>, geo_origin: GeoPoint, metric: &str, unit: &str) -> Self {
        RasterMeta {
            origin_lat: geo_origin.lat,
            origin_lon: geo_origin.lon,
            bin_size_m: grid.bin_size.as_f64(),
            n_cols: grid.n_cols,
            n_rows: grid.n_rows,
            metric: metric.to_string(),
            unit: unit.to_string(),
            origin_x_m: grid.origin.x.as_f64(),
            origin_y_m: grid.origin.y.as_f64(),
        }
    }

    pub fn grid<T: Scalar>(&self) -> Result<GridSpec<T>> {
        GridSpec::new(
            LocalPoint::new(T::of(self.origin_x_m), T::of(self.origin_y_m)),
            T::of(self.bin_size_m),
            self.n_cols,
            self.n_rows,
        )
    }

    pub fn geo_origin(&self) -> Result<GeoPoint> {
        GeoPoint::new(self.origin_lat, self.origin_lon)
    }
}

pub fn raster_to_csv<T: Scalar>(r: &Raster<T>) -> String {
    let g = &r.grid;
    let mut out = String::with_capacity(g.len() * 12);
    for row in (0..g.n_rows).rev() {
        for col in 0..g.n_cols {
            if col > 0 {
                out.push(',');
            }
            if let Some(v) = r.get(col, row) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a raster CSV written by [`raster_to_csv`]. Populated bins get count 1.
pub fn raster_from_csv<T: Scalar>(text: &str, grid: GridSpec<T>) -> Result<Raster<T>> {
    let mut raster = Raster::empty(grid);
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != grid.n_rows {
        return Err(Error::Shape(format!("expected {} rows, found {}", grid.n_rows, lines.len())));
    }
    for (k, line) in lines.iter().enumerate() {
        let row = grid.n_rows - 1 - k;
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if cells.len() != grid.n_cols {
            return Err(Error::Format {
                line: k as u64 + 1,
                message: format!("expected {} cells, found {}", grid.n_cols, cells.len()),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let v: T = cell.parse().map_err(|_| Error::Format {
                line: k as u64 + 1,
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            let i = grid.flat_index(col, row);
            raster.values[i] = Some(v);
            raster.counts[i] = 1;
        }
    }
    Ok(raster)
}
