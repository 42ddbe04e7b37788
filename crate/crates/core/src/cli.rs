//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::eval::{render_report, CrossValidation, MethodOutcome, ReportFormat};
use crate::geo_grid::{raster_from_csv, raster_stats, raster_to_csv, GeoPoint, GridSpec, Raster, RasterMeta};
use crate::interp::mri::MriTransmitter;
use crate::interp::{InterpolatorConfig, Method};
use crate::pipeline::{
    build_map_detailed, ingest_walktest, quarantine_to_csv, samples_from_csv, samples_to_csv, MapOptions,
};
use crate::scene::{synth_walk_path, SceneConfig, SceneField};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "remkit", version, about = "Radio environment map toolkit")]
pub struct Cli {
    /// Seed overriding the one in configuration files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress and summaries on stderr/stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: ground-truth raster and walk-path samples.
    Synth(SynthArgs),
    /// Convert a walk-test CSV into RSSI/SINR sample files plus a quarantine list.
    Ingest(IngestArgs),
    /// Benchmark interpolators with k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Interpolate samples onto a grid.
    Map(MapArgs),
    /// Render a raster CSV to PGM (or PNG) as a heatmap.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synth configuration JSON.
    pub config: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub walktest: PathBuf,
    /// Local frame origin as `lat,lon` in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub origin: String,
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    /// Samples CSV (`x_m,y_m,value,cell_id`).
    pub samples: PathBuf,
    /// JSON array of interpolator configurations.
    pub methods: PathBuf,
    /// Report path; the CSV and markdown reports use the `.csv` and `.md` extensions.
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::eval::DEFAULT_FOLDS)]
    pub k: usize,
    /// Synth config whose transmitters fill MRI configs that list none.
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rssi,
    Sinr,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    pub samples: PathBuf,
    /// Output raster CSV; the sidecar is written next to it with a `.json` extension.
    pub out: PathBuf,
    /// Interpolator configuration JSON (default: RBF, epsilon 1, smoothing 0.1).
    #[arg(long)]
    pub method: Option<PathBuf>,
    /// Grid JSON: a grid spec or a raster sidecar. Derived from the samples when absent.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Bin size for the derived grid, meters.
    #[arg(long, default_value_t = 5.0)]
    pub bin_size: f64,
    #[arg(long, value_enum, default_value_t = Metric::Rssi)]
    pub metric: Metric,
    /// Geographic origin recorded in the sidecar, `lat,lon`.
    #[arg(long, allow_hyphen_values = true)]
    pub origin: Option<String>,
    /// Replace bins containing samples with their binned mean.
    #[arg(long)]
    pub pin: bool,
    /// Fit on per-bin means instead of raw samples.
    #[arg(long)]
    pub prebin: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Raster CSV with its `.json` sidecar alongside.
    pub raster: PathBuf,
    /// Output image; `.png` selects color PNG, anything else grayscale PGM.
    pub out: PathBuf,
    /// Value range mapped to the color scale, `min:max`.
    #[arg(long, allow_hyphen_values = true)]
    pub scale: Option<String>,
}

/// Configuration of the `synth` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub scene: SceneConfig<f64>,
    #[serde(default = "default_walk_spacing")]
    pub walk_spacing_m: f64,
    #[serde(default)]
    pub origin: Option<GeoPoint>,
}

fn default_walk_spacing() -> f64 {
    5.0
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(m: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: m.into() }
    }

    fn runtime(m: impl Into<String>) -> Self {
        CliError { code: EXIT_RUNTIME, message: m.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be ≥ 1"));
        }
        // A second call in the same process fails; the first pool stays in effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Ingest(a) => cmd_ingest(cli, a),
        Command::Crossval(a) => cmd_crossval(cli, a),
        Command::Map(a) => cmd_map(cli, a),
        Command::Render(a) => cmd_render(a),
    }
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn digest(path: &Path, bytes: &[u8]) -> InputDigest {
    InputDigest { name: file_name(path), sha256: hex::encode(Sha256::digest(bytes)) }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Writes through a temporary sibling file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| CliError::runtime(format!("cannot write {}: {e}", path.display()));
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name(path), std::process::id()));
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        fail(e)
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn write_manifest(path: &Path, m: &RunManifest) -> CliResult<()> {
    write_atomic(path, &to_json(m))
}

fn manifest(command: &str, config: serde_json::Value, inputs: Vec<InputDigest>, seed: Option<u64>, outputs: &[&Path]) -> RunManifest {
    RunManifest {
        command: command.into(),
        config,
        inputs,
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs: outputs.iter().map(|p| file_name(p)).collect(),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn parse_origin(s: &str) -> CliResult<GeoPoint> {
    let bad = || CliError::usage(format!("invalid origin '{s}', expected lat,lon"));
    let (lat, lon) = s.split_once(',').ok_or_else(bad)?;
    let lat: f64 = lat.trim().parse().map_err(|_| bad())?;
    let lon: f64 = lon.trim().parse().map_err(|_| bad())?;
    GeoPoint::new(lat, lon).map_err(|e| CliError::usage(e.to_string()))
}

fn parse_scale(s: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::usage(format!("invalid scale '{s}', expected min:max"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(CliError::usage(format!("scale needs finite min < max, got {lo}:{hi}")));
    }
    Ok((lo, hi))
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> CliResult<()> {
    let bytes = read_input(&a.config)?;
    let mut cfg: SynthConfig = parse_json(&a.config, &bytes)?;
    if let Some(s) = cli.seed {
        cfg.scene.seed = s;
    }
    cfg.scene.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if cfg.scene.transmitters.is_empty() {
        return Err(CliError::usage("scene has no transmitters"));
    }
    if !(cfg.walk_spacing_m > 0.0) {
        return Err(CliError::usage("walk_spacing_m must be > 0"));
    }
    let origin = cfg.origin.unwrap_or(GeoPoint { lat: 0.0, lon: 0.0 });
    let field = SceneField::new(cfg.scene.clone())?;
    let truth = field.raster(&cfg.scene.extent);
    let path = synth_walk_path(&cfg.scene.extent, cfg.walk_spacing_m, cfg.scene.seed)?;
    let samples = field.sample(&path)?;

    ensure_dir(&a.out_dir)?;
    let truth_csv = a.out_dir.join("truth.csv");
    let truth_json = a.out_dir.join("truth.json");
    let samples_csv = a.out_dir.join("samples.csv");
    write_atomic(&truth_csv, raster_to_csv(&truth).as_bytes())?;
    write_atomic(&truth_json, &to_json(&RasterMeta::new(&truth.grid, origin, "rssi", "dBm")))?;
    write_atomic(&samples_csv, samples_to_csv(&samples).as_bytes())?;
    let m = manifest(
        "synth",
        serde_json::to_value(&cfg).expect("serializable"),
        vec![digest(&a.config, &bytes)],
        Some(cfg.scene.seed),
        &[&truth_csv, &truth_json, &samples_csv],
    );
    write_manifest(&a.out_dir.join("manifest.json"), &m)?;
    if !cli.quiet {
        eprintln!("synth: {} bins, {} walk samples", truth.grid.len(), samples.len());
    }
    Ok(())
}

fn cmd_ingest(cli: &Cli, a: &IngestArgs) -> CliResult<()> {
    let origin = parse_origin(&a.origin)?;
    let bytes = read_input(&a.walktest)?;
    let ing = ingest_walktest::<f64, _>(bytes.as_slice(), origin)?;
    ensure_dir(&a.out_dir)?;
    let rssi = a.out_dir.join("rssi_samples.csv");
    let sinr = a.out_dir.join("sinr_samples.csv");
    let quarantine = a.out_dir.join("quarantine.csv");
    write_atomic(&rssi, samples_to_csv(&ing.rssi).as_bytes())?;
    write_atomic(&sinr, samples_to_csv(&ing.sinr).as_bytes())?;
    write_atomic(&quarantine, quarantine_to_csv(&ing.quarantine).as_bytes())?;
    let m = manifest(
        "ingest",
        serde_json::json!({ "origin": origin }),
        vec![digest(&a.walktest, &bytes)],
        None,
        &[&rssi, &sinr, &quarantine],
    );
    write_manifest(&a.out_dir.join("manifest.json"), &m)?;
    if !cli.quiet {
        eprintln!(
            "ingest: {} rows, {} RSSI samples, {} SINR samples, {} quarantined",
            ing.rows,
            ing.rssi.len(),
            ing.sinr.len(),
            ing.quarantine.len()
        );
    }
    Ok(())
}

fn load_samples(path: &Path) -> CliResult<(crate::interp::TrainingSet<f64>, Vec<u8>)> {
    let bytes = read_input(path)?;
    let set = samples_from_csv(bytes.as_slice()).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok((set, bytes))
}

fn cmd_crossval(cli: &Cli, a: &CrossvalArgs) -> CliResult<()> {
    let (data, sample_bytes) = load_samples(&a.samples)?;
    let method_bytes = read_input(&a.methods)?;
    let mut methods: Vec<InterpolatorConfig> = parse_json(&a.methods, &method_bytes)?;
    let mut inputs = vec![digest(&a.samples, &sample_bytes), digest(&a.methods, &method_bytes)];
    if let Some(scene_path) = &a.scene {
        let bytes = read_input(scene_path)?;
        let scene: SynthConfig = parse_json(scene_path, &bytes)?;
        for m in &mut methods {
            if let Method::Mri(p) = &mut m.method {
                if p.transmitters.is_empty() {
                    p.transmitters = scene
                        .scene
                        .transmitters
                        .iter()
                        .map(|t| MriTransmitter { x: t.position.x, y: t.position.y, cell_id: None })
                        .collect();
                }
            }
        }
        inputs.push(digest(scene_path, &bytes));
    }
    for m in &methods {
        m.validate()?;
    }
    if a.k < 2 {
        return Err(CliError::usage("--k must be ≥ 2"));
    }
    let seed = cli.seed.unwrap_or(0);
    let report = CrossValidation::new(a.k, seed).run(&methods, &data)?;

    let csv_path = a.out.with_extension("csv");
    let md_path = a.out.with_extension("md");
    let md = render_report(&report, ReportFormat::Markdown);
    write_atomic(&csv_path, render_report(&report, ReportFormat::Csv).as_bytes())?;
    write_atomic(&md_path, md.as_bytes())?;
    let m = manifest(
        "crossval",
        serde_json::json!({ "k": a.k, "methods": methods }),
        inputs,
        Some(seed),
        &[&csv_path, &md_path],
    );
    write_manifest(&sibling(&a.out, ".manifest.json"), &m)?;
    if !cli.quiet {
        print!("{md}");
    }
    let failed: Vec<&str> = report
        .methods
        .iter()
        .filter_map(|m| match &m.outcome {
            MethodOutcome::Failed { reason } => Some(reason.as_str()),
            MethodOutcome::Ok(_) => None,
        })
        .collect();
    if !failed.is_empty() && failed.len() == report.methods.len() {
        return Err(CliError::runtime(format!("every method failed; first: {}", failed[0])));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GridFile {
    Spec(GridSpec<f64>),
    Sidecar(RasterMeta),
}

fn cmd_map(cli: &Cli, a: &MapArgs) -> CliResult<()> {
    let (samples, sample_bytes) = load_samples(&a.samples)?;
    let mut inputs = vec![digest(&a.samples, &sample_bytes)];
    let cfg = match &a.method {
        Some(p) => {
            let bytes = read_input(p)?;
            inputs.push(digest(p, &bytes));
            parse_json(p, &bytes)?
        }
        None => InterpolatorConfig::default_map(),
    };
    cfg.validate()?;
    let grid = match &a.grid {
        Some(p) => {
            let bytes = read_input(p)?;
            inputs.push(digest(p, &bytes));
            let g = match parse_json::<GridFile>(p, &bytes)? {
                GridFile::Spec(g) => g,
                GridFile::Sidecar(m) => m.grid()?,
            };
            g.validate().map_err(|e| CliError::usage(e.to_string()))?;
            g
        }
        None => {
            if !(a.bin_size > 0.0) {
                return Err(CliError::usage("--bin-size must be > 0"));
            }
            let g = GridSpec::covering(&samples.points, a.bin_size, 0.0)?;
            if !cli.quiet {
                eprintln!(
                    "map: derived grid origin ({}, {}) m, {} x {} bins of {} m",
                    g.origin.x, g.origin.y, g.n_cols, g.n_rows, g.bin_size
                );
            }
            g
        }
    };
    let origin = a.origin.as_deref().map(parse_origin).transpose()?.unwrap_or(GeoPoint { lat: 0.0, lon: 0.0 });
    if samples.is_empty() {
        return Err(CliError::runtime(format!("{} holds no samples", a.samples.display())));
    }
    let opts = MapOptions { pin_sampled_bins: a.pin, prebin: a.prebin };
    let out = build_map_detailed(&samples, &grid, &cfg, opts)?;
    let (metric, unit) = match a.metric {
        Metric::Rssi => ("rssi", "dBm"),
        Metric::Sinr => ("sinr", "dB"),
    };
    let json_path = a.out.with_extension("json");
    write_atomic(&a.out, raster_to_csv(&out.raster).as_bytes())?;
    write_atomic(&json_path, &to_json(&RasterMeta::new(&grid, origin, metric, unit)))?;
    let m = manifest(
        "map",
        serde_json::json!({ "method": cfg, "grid": grid, "metric": a.metric, "options": opts, "origin": origin }),
        inputs,
        Some(cfg.seed),
        &[&a.out, &json_path],
    );
    write_manifest(&sibling(&a.out, ".manifest.json"), &m)?;
    if !cli.quiet {
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        if out.extrapolated > 0 {
            eprintln!("warning: {} bins lie far outside the sampled area", out.extrapolated);
        }
    }
    Ok(())
}

/// Pixel intensity for PGM output: 0 for no data, else `1 + round(254·t)`.
pub fn gray_level(v: Option<f64>, lo: f64, hi: f64) -> u8 {
    match v {
        None => 0,
        Some(v) => {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            1 + (254.0 * t).round() as u8
        }
    }
}

/// Grayscale levels in image order: north row first, west to east.
pub fn raster_gray(r: &Raster<f64>, scale: Option<(f64, f64)>) -> Vec<u8> {
    let (lo, hi) = scale.unwrap_or_else(|| {
        let s = raster_stats(r);
        match (s.min, s.max) {
            (Some(lo), Some(hi)) if lo < hi => (lo, hi),
            (Some(v), Some(_)) => (v - 1.0, v + 1.0),
            _ => (0.0, 1.0),
        }
    });
    let g = &r.grid;
    let mut out = Vec::with_capacity(g.len());
    for row in (0..g.n_rows).rev() {
        for col in 0..g.n_cols {
            out.push(gray_level(r.get(col, row), lo, hi));
        }
    }
    out
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[cfg(feature = "png")]
const PALETTE: [[f64; 3]; 5] =
    [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];

/// RGBA PNG; no-data pixels are fully transparent.
#[cfg(feature = "png")]
pub fn encode_png(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>, png::EncodingError> {
    let mut rgba = Vec::with_capacity(gray.len() * 4);
    for &g in gray {
        if g == 0 {
            rgba.extend_from_slice(&[0, 0, 0, 0]);
            continue;
        }
        let t = f64::from(g - 1) / 254.0 * (PALETTE.len() - 1) as f64;
        let i = (t.floor() as usize).min(PALETTE.len() - 2);
        let f = t - i as f64;
        for c in 0..3 {
            rgba.push((PALETTE[i][c] + f * (PALETTE[i + 1][c] - PALETTE[i][c])).round() as u8);
        }
        rgba.push(255);
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgba);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()?.write_image_data(&rgba)?;
    Ok(out)
}

fn cmd_render(a: &RenderArgs) -> CliResult<()> {
    let scale = a.scale.as_deref().map(parse_scale).transpose()?;
    let sidecar = a.raster.with_extension("json");
    let meta: RasterMeta = parse_json(&sidecar, &read_input(&sidecar)?)?;
    let grid = meta.grid::<f64>().map_err(|e| CliError::usage(format!("{}: {e}", sidecar.display())))?;
    let text = String::from_utf8(read_input(&a.raster)?)
        .map_err(|_| CliError::runtime(format!("{} is not UTF-8", a.raster.display())))?;
    let raster = raster_from_csv(&text, grid).map_err(|e| CliError::runtime(format!("{}: {e}", a.raster.display())))?;
    let gray = raster_gray(&raster, scale);
    let is_png = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        #[cfg(feature = "png")]
        {
            encode_png(grid.n_cols, grid.n_rows, &gray).map_err(|e| CliError::runtime(e.to_string()))?
        }
        #[cfg(not(feature = "png"))]
        {
            return Err(CliError::usage("PNG output requires the `png` feature; use a .pgm path"));
        }
    } else {
        encode_pgm(grid.n_cols, grid.n_rows, &gray)
    };
    write_atomic(&a.out, &bytes)
}
