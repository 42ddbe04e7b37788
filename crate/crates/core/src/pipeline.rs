//! Walk-test ingestion and measured coverage maps.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{aggregate, project, GeoPoint, GridSpec, LocalPoint, Raster, Reducer};
use crate::interp::{fit, predict_flagged, InterpolatorConfig, TrainingSet};
use crate::scalar::Scalar;
use crate::signal::{rssi_from_report, validate_report, UeReport, DEFAULT_N_PRB};

/// Required walk-test CSV header, in order.
pub const WALKTEST_HEADER: [&str; 8] =
    ["timestamp_s", "lat_deg", "lon_deg", "rsrp_dbm", "rsrq_db", "sinr_db", "pci", "n_prb"];

pub const SAMPLES_HEADER: [&str; 4] = ["x_m", "y_m", "value", "cell_id"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WalkTestRecord<T> {
    pub timestamp: f64,
    pub position: GeoPoint,
    pub report: UeReport<T>,
}

/// A row rejected during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub rssi: TrainingSet<T>,
    /// Only rows that carried a SINR value.
    pub sinr: TrainingSet<T>,
    pub quarantine: Vec<Quarantined>,
    pub rows: usize,
}

fn format_err(line: u64, message: impl Into<String>) -> Error {
    Error::Format { line, message: message.into() }
}

/// Maps byte offsets to 1-based line numbers. The csv reader's own line
/// counter drifts on CRLF input.
struct Lines(Vec<usize>);

impl Lines {
    fn new(data: &[u8]) -> Self {
        Lines(data.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i).collect())
    }

    fn of(&self, pos: Option<&csv::Position>) -> u64 {
        pos.map_or(0, |p| self.0.partition_point(|&nl| (nl as u64) <= p.byte()) as u64 + 1)
    }

    fn err(&self, e: csv::Error) -> Error {
        format_err(self.of(e.position()), e.to_string())
    }
}

fn reader(data: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(data)
}

fn parse_field<V: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<V> {
    raw.trim().parse().map_err(|_| format_err(line, format!("cannot parse {name} from '{raw}'")))
}

fn parse_opt<V: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<Option<V>> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(raw, name, line).map(Some)
    }
}

/// Parses walk-test rows. Rows that parse but violate report or position
/// invariants are returned alongside; they are the caller's to quarantine.
pub fn read_walktest<T: Scalar, R: Read>(mut input: R) -> Result<Vec<(u64, WalkTestRecord<T>)>> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let lines = Lines::new(&data);
    let mut rdr = reader(&data);
    let mut records = rdr.records();
    let Some(header) = records.next() else {
        return Ok(Vec::new());
    };
    let header = header.map_err(|e| lines.err(e))?;
    let found: Vec<&str> = header.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if found != WALKTEST_HEADER {
        return Err(format_err(1, format!("expected header '{}', found '{}'", WALKTEST_HEADER.join(","), found.join(","))));
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| lines.err(e))?;
        let line = lines.of(rec.position());
        let f = |i: usize| rec.get(i).unwrap_or("");
        let report = UeReport {
            rsrp: parse_field(f(3), "rsrp_dbm", line)?,
            rsrq: parse_field(f(4), "rsrq_db", line)?,
            sinr: parse_opt(f(5), "sinr_db", line)?,
            pci: parse_opt(f(6), "pci", line)?,
            n_prb: parse_opt(f(7), "n_prb", line)?.unwrap_or(DEFAULT_N_PRB),
            timestamp: parse_field(f(0), "timestamp_s", line)?,
        };
        let position = GeoPoint { lat: parse_field(f(1), "lat_deg", line)?, lon: parse_field(f(2), "lon_deg", line)? };
        out.push((line, WalkTestRecord { timestamp: report.timestamp, position, report }));
    }
    Ok(out)
}

/// Ingests a walk-test CSV: projects positions around `origin`, derives RSSI,
/// and quarantines every row that fails validation.
///
/// `rows == rssi.len() + quarantine.len()` always holds.
pub fn ingest_walktest<T: Scalar, R: Read>(input: R, origin: GeoPoint) -> Result<Ingested<T>> {
    origin.validate()?;
    let records = read_walktest::<T, R>(input)?;
    let mut out = Ingested {
        rssi: TrainingSet::empty(),
        sinr: TrainingSet::empty(),
        quarantine: Vec::new(),
        rows: records.len(),
    };
    for (line, rec) in records {
        let mut reasons: Vec<String> = validate_report(&rec.report).iter().map(|v| v.to_string()).collect();
        if !rec.timestamp.is_finite() {
            reasons.push("timestamp not finite".into());
        }
        let local = match project::<T>(rec.position, origin) {
            Ok(p) => Some(p),
            Err(e) => {
                reasons.push(format!("position: {e}"));
                None
            }
        };
        match (local, reasons.is_empty()) {
            (Some(p), true) => {
                let rssi = rssi_from_report(&rec.report)?;
                out.rssi.push(p, rssi, rec.report.pci);
                if let Some(s) = rec.report.sinr {
                    out.sinr.push(p, s, rec.report.pci);
                }
            }
            _ => out.quarantine.push(Quarantined { line, reasons }),
        }
    }
    Ok(out)
}

/// Samples CSV with header `x_m,y_m,value,cell_id`; `cell_id` may be empty.
pub fn samples_to_csv<T: Scalar>(set: &TrainingSet<T>) -> String {
    let mut s = SAMPLES_HEADER.join(",");
    s.push('\n');
    for i in 0..set.len() {
        let p = set.points[i];
        let cell = set.cell_ids[i].map(|c| c.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", p.x, p.y, set.values[i], cell));
    }
    s
}

pub fn samples_from_csv<T: Scalar, R: Read>(mut input: R) -> Result<TrainingSet<T>> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let lines = Lines::new(&data);
    let mut rdr = reader(&data);
    let mut records = rdr.records();
    let mut set = TrainingSet::empty();
    let Some(header) = records.next() else {
        return Ok(set);
    };
    let header = header.map_err(|e| lines.err(e))?;
    if header.iter().collect::<Vec<_>>() != SAMPLES_HEADER {
        return Err(format_err(1, format!("expected header '{}'", SAMPLES_HEADER.join(","))));
    }
    for rec in records {
        let rec = rec.map_err(|e| lines.err(e))?;
        let line = lines.of(rec.position());
        let x: T = parse_field(&rec[0], "x_m", line)?;
        let y: T = parse_field(&rec[1], "y_m", line)?;
        let v: T = parse_field(&rec[2], "value", line)?;
        let cell = parse_opt(&rec[3], "cell_id", line)?;
        if !(x.is_finite() && y.is_finite() && v.is_finite()) {
            return Err(format_err(line, "non-finite sample"));
        }
        set.push(LocalPoint::new(x, y), v, cell);
    }
    Ok(set)
}

/// Quarantine list as CSV with header `line,reasons`.
pub fn quarantine_to_csv(q: &[Quarantined]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["line", "reasons"]).expect("in-memory write");
    for r in q {
        w.write_record([r.line.to_string(), r.reasons.join("; ")]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapOptions {
    /// Replace bins holding raw samples with their binned mean.
    pub pin_sampled_bins: bool,
    /// Fit on per-bin means at bin centers instead of raw samples.
    pub prebin: bool,
}

#[derive(Debug, Clone)]
pub struct MapOutput<T> {
    pub raster: Raster<T>,
    pub warnings: Vec<String>,
    /// Bin centers far outside the training extent.
    pub extrapolated: usize,
}

fn binned_means<T: Scalar>(samples: &TrainingSet<T>, grid: &GridSpec<T>) -> Result<Raster<T>> {
    let pairs: Vec<(LocalPoint<T>, T)> = samples.points.iter().copied().zip(samples.values.iter().copied()).collect();
    Ok(aggregate(&pairs, grid, Reducer::Mean)?.raster)
}

pub fn build_map_detailed<T: Scalar>(
    samples: &TrainingSet<T>,
    grid: &GridSpec<T>,
    cfg: &InterpolatorConfig,
    opts: MapOptions,
) -> Result<MapOutput<T>> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(Error::Size("cannot build a map from zero samples".into()));
    }
    let means = if opts.prebin || opts.pin_sampled_bins { Some(binned_means(samples, grid)?) } else { None };
    let train = match (&means, opts.prebin) {
        (Some(m), true) => {
            let mut t = TrainingSet::empty();
            for (i, v) in m.values.iter().enumerate() {
                if let Some(v) = v {
                    let (c, r) = grid.col_row(i);
                    t.push(grid.bin_center(c, r), *v, None);
                }
            }
            if t.is_empty() {
                return Err(Error::Size("no samples fall inside the grid".into()));
            }
            t
        }
        _ => samples.clone(),
    };
    let model = fit(cfg, &train)?;
    let (mut values, extrapolated) = predict_flagged(&model, &grid.centers());
    if let (Some(m), true) = (&means, opts.pin_sampled_bins) {
        for (v, b) in values.iter_mut().zip(&m.values) {
            if let Some(b) = b {
                *v = *b;
            }
        }
    }
    Ok(MapOutput { raster: Raster::from_values(*grid, values)?, warnings: model.warnings, extrapolated })
}

/// Fits `cfg` on all samples and predicts every bin center.
pub fn build_map<T: Scalar>(samples: &TrainingSet<T>, grid: &GridSpec<T>, cfg: &InterpolatorConfig) -> Result<Raster<T>> {
    Ok(build_map_detailed(samples, grid, cfg, MapOptions::default())?.raster)
}

/// SINR coverage map; same contract as [`build_map`].
pub fn build_sinr_map<T: Scalar>(
    sinr_samples: &TrainingSet<T>,
    grid: &GridSpec<T>,
    cfg: &InterpolatorConfig,
) -> Result<Raster<T>> {
    if sinr_samples.is_empty() {
        return Err(Error::Size("no SINR samples".into()));
    }
    build_map(sinr_samples, grid, cfg)
}

#[derive(Debug, Clone)]
pub struct MapComparison<T> {
    /// `a − b` where both bins are populated.
    pub diff: Raster<T>,
    pub rmse: Option<T>,
    pub bias: Option<T>,
    /// Bins populated in both, over bins populated in either.
    pub populated_overlap_fraction: f64,
}

pub fn compare_maps<T: Scalar>(a: &Raster<T>, b: &Raster<T>) -> Result<MapComparison<T>> {
    if a.grid != b.grid {
        return Err(Error::Shape("rasters are on different grids".into()));
    }
    let mut diff = Raster::empty(a.grid);
    let (mut n, mut either) = (0usize, 0usize);
    let (mut sum, mut sq) = (T::zero(), T::zero());
    for i in 0..a.values.len() {
        match (a.values[i], b.values[i]) {
            (Some(x), Some(y)) => {
                let d = x - y;
                diff.values[i] = Some(d);
                diff.counts[i] = 1;
                sum += d;
                sq += d * d;
                n += 1;
                either += 1;
            }
            (None, None) => {}
            _ => either += 1,
        }
    }
    let (rmse, bias) = if n == 0 {
        (None, None)
    } else {
        let nn = T::of_usize(n);
        (Some((sq / nn).sqrt()), Some(sum / nn))
    };
    let populated_overlap_fraction = if either == 0 { 0.0 } else { n as f64 / either as f64 };
    Ok(MapComparison { diff, rmse, bias, populated_overlap_fraction })
}
