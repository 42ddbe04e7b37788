//! K-fold benchmarking of interpolators with RMSE, NMSE and MAPE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{fit, predict, InterpolatorConfig, TrainingSet};
use crate::scalar::Scalar;

pub const DEFAULT_FOLDS: usize = 5;

/// Splits `0..n` into `k` disjoint folds after a seeded shuffle.
///
/// Fold sizes differ by at most one; the first `n mod k` folds get the extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Size(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::Size(format!("cannot split {n} samples into {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

fn check_lengths<T>(pred: &[T], truth: &[T]) -> Result<()> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "metrics need equal non-zero lengths, got {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of_usize(v.len())
}

fn sse<T: Scalar>(pred: &[T], truth: &[T]) -> T {
    pred.iter().zip(truth).map(|(p, t)| (*p - *t) * (*p - *t)).sum()
}

pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_lengths(pred, truth)?;
    Ok((sse(pred, truth) / T::of_usize(truth.len())).sqrt())
}

/// Denominator of the normalized mean square error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmseNorm {
    /// `Σ(t − mean t)²`
    #[default]
    Variance,
    /// `Σt²`
    Energy,
}

/// Variance-normalized squared error `Σ(p − t)² / Σ(t − mean t)²`.
pub fn nmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    nmse_with(pred, truth, NmseNorm::Variance)
}

pub fn nmse_with<T: Scalar>(pred: &[T], truth: &[T], norm: NmseNorm) -> Result<T> {
    check_lengths(pred, truth)?;
    let denom = match norm {
        NmseNorm::Variance => {
            let m = mean(truth);
            truth.iter().map(|t| (*t - m) * (*t - m)).sum::<T>()
        }
        NmseNorm::Energy => truth.iter().map(|t| *t * *t).sum::<T>(),
    };
    if denom == T::zero() {
        return Err(Error::Undefined("nmse undefined for zero-variance truth".into()));
    }
    Ok(sse(pred, truth) / denom)
}

/// Mean absolute percentage error `100·mean(|p − t| / |t|)`.
pub fn mape<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_lengths(pred, truth)?;
    if truth.iter().any(|t| *t == T::zero()) {
        return Err(Error::Undefined("mape undefined when a truth value is zero".into()));
    }
    let s: T = pred.iter().zip(truth).map(|(p, t)| (*p - *t).abs() / t.abs()).sum();
    Ok(T::of(100.0) * s / T::of_usize(truth.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub rmse: f64,
    pub nmse: f64,
    pub mape: f64,
}

/// Mean and population standard deviation across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub rmse: MeanStd,
    pub nmse: MeanStd,
    pub mape: MeanStd,
    pub folds: Vec<FoldMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum MethodOutcome {
    Ok(MethodSummary),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub outcome: MethodOutcome,
}

impl MethodReport {
    pub fn summary(&self) -> Option<&MethodSummary> {
        match &self.outcome {
            MethodOutcome::Ok(s) => Some(s),
            MethodOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
    pub folds: usize,
    pub seed: u64,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn method(&self, label: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.label == label)
    }
}

/// Cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossValidation {
    pub k: usize,
    pub seed: u64,
    pub nmse: NmseNorm,
}

impl Default for CrossValidation {
    fn default() -> Self {
        CrossValidation { k: DEFAULT_FOLDS, seed: 0, nmse: NmseNorm::Variance }
    }
}

impl CrossValidation {
    pub fn new(k: usize, seed: u64) -> Self {
        CrossValidation { k, seed, ..Default::default() }
    }

    pub fn run<T: Scalar>(&self, methods: &[InterpolatorConfig], data: &TrainingSet<T>) -> Result<EvalReport> {
        self.run_inspect(methods, data, |_, _, _, _| {})
    }

    /// Like [`run`](Self::run), calling `inspect(method, fold, train_idx, test_idx)`
    /// before each fit.
    pub fn run_inspect<T: Scalar>(
        &self,
        methods: &[InterpolatorConfig],
        data: &TrainingSet<T>,
        mut inspect: impl FnMut(usize, usize, &[usize], &[usize]),
    ) -> Result<EvalReport> {
        data.validate()?;
        if data.len() < 10 * self.k {
            return Err(Error::Size(format!(
                "cross-validation with k = {} needs ≥ {} samples, got {}",
                self.k,
                10 * self.k,
                data.len()
            )));
        }
        let folds = kfold_split(data.len(), self.k, self.seed)?;
        let splits: Vec<(Vec<usize>, &Vec<usize>)> = (0..self.k)
            .map(|f| {
                let mut train: Vec<usize> =
                    folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
                train.sort_unstable();
                (train, &folds[f])
            })
            .collect();

        let mut reports = Vec::with_capacity(methods.len());
        for (mi, cfg) in methods.iter().enumerate() {
            let mut per_fold = Vec::with_capacity(self.k);
            let mut failure = None;
            for (f, (train_idx, test_idx)) in splits.iter().enumerate() {
                inspect(mi, f, train_idx, test_idx);
                match self.evaluate_fold(cfg, data, train_idx, test_idx) {
                    Ok(m) => per_fold.push(m),
                    Err(e) => {
                        failure = Some(format!("fold {}: {e}", f + 1));
                        break;
                    }
                }
            }
            let outcome = match failure {
                Some(reason) => MethodOutcome::Failed { reason },
                None => MethodOutcome::Ok(summarize(per_fold)),
            };
            reports.push(MethodReport { label: cfg.label(), outcome });
        }
        Ok(EvalReport { methods: reports, folds: self.k, seed: self.seed, n_samples: data.len() })
    }

    fn evaluate_fold<T: Scalar>(
        &self,
        cfg: &InterpolatorConfig,
        data: &TrainingSet<T>,
        train_idx: &[usize],
        test_idx: &[usize],
    ) -> Result<FoldMetrics> {
        let model = fit(cfg, &data.subset(train_idx))?;
        let test = data.subset(test_idx);
        let pred = predict(&model, &test.points);
        Ok(FoldMetrics {
            rmse: rmse(&pred, &test.values)?.as_f64(),
            nmse: nmse_with(&pred, &test.values, self.nmse)?.as_f64(),
            mape: mape(&pred, &test.values)?.as_f64(),
        })
    }
}

fn summarize(folds: Vec<FoldMetrics>) -> MethodSummary {
    let col = |f: fn(&FoldMetrics) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>());
    MethodSummary { rmse: col(|m| m.rmse), nmse: col(|m| m.nmse), mape: col(|m| m.mape), folds }
}

/// k-fold cross-validation of every method on identical splits.
pub fn crossval<T: Scalar>(methods: &[InterpolatorConfig], data: &TrainingSet<T>, k: usize, seed: u64) -> Result<EvalReport> {
    CrossValidation::new(k, seed).run(methods, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub const REPORT_CSV_HEADER: [&str; 8] =
    ["method", "rmse_mean", "rmse_std", "nmse_mean", "nmse_std", "mape_mean", "mape_std", "status"];

fn pm(m: &MeanStd) -> String {
    format!("{:.2} ± {:.2}", m.mean, m.std)
}

pub fn render_report(r: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
            for m in &r.methods {
                let row: Vec<String> = match &m.outcome {
                    MethodOutcome::Ok(s) => vec![
                        m.label.clone(),
                        s.rmse.mean.to_string(),
                        s.rmse.std.to_string(),
                        s.nmse.mean.to_string(),
                        s.nmse.std.to_string(),
                        s.mape.mean.to_string(),
                        s.mape.std.to_string(),
                        "ok".into(),
                    ],
                    MethodOutcome::Failed { reason } => {
                        let mut row = vec![m.label.clone()];
                        row.extend(std::iter::repeat_n(String::new(), 6));
                        row.push(format!("failed ({reason})"));
                        row
                    }
                };
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        ReportFormat::Markdown => {
            let mut out = String::from("| Method | RMSE (dB) | NMSE | MAPE (%) |\n|---|---|---|---|\n");
            for m in &r.methods {
                match &m.outcome {
                    MethodOutcome::Ok(s) => {
                        out.push_str(&format!("| {} | {} | {} | {} |\n", m.label, pm(&s.rmse), pm(&s.nmse), pm(&s.mape)))
                    }
                    MethodOutcome::Failed { reason } => {
                        out.push_str(&format!("| {} | failed ({}) | | |\n", m.label, reason.replace('|', "/")))
                    }
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fold_examples() {
        let f = kfold_split(10, 5, 1).unwrap();
        assert!(f.iter().all(|v| v.len() == 2));
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let mut sizes: Vec<usize> = kfold_split(11, 5, 1).unwrap().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);

        assert_eq!(kfold_split(50, 5, 9).unwrap(), kfold_split(50, 5, 9).unwrap());
        assert!(matches!(kfold_split(3, 5, 0), Err(Error::Size(_))));
        assert!(kfold_split(10, 1, 0).is_err());
    }

    #[test]
    fn metric_examples() {
        let t = [-60.0, -70.0, -80.0];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert_eq!(mape(&t, &t).unwrap(), 0.0);

        let truth = [-61.3, -72.9, -55.25, -90.0];
        let m = truth.iter().sum::<f64>() / 4.0;
        assert_eq!(nmse(&[m; 4], &truth).unwrap(), 1.0);

        let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(mape(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 100.0);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(nmse(&[1.0, 2.0], &[5.0, 5.0]), Err(Error::Undefined(_))));
        assert!(matches!(mape(&[1.0, 2.0], &[0.0, 5.0]), Err(Error::Undefined(_))));
        assert!(matches!(rmse::<f64>(&[], &[]), Err(Error::Shape(_))));
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(nmse_with(&[0.0, 0.0], &[3.0, 4.0], NmseNorm::Energy).unwrap(), 1.0);
    }

    fn summary(rmse: (f64, f64)) -> MethodOutcome {
        let z = MeanStd { mean: 0.0, std: 0.0 };
        MethodOutcome::Ok(MethodSummary { rmse: MeanStd { mean: rmse.0, std: rmse.1 }, nmse: z, mape: z, folds: vec![] })
    }

    #[test]
    fn render_rows() {
        let r = EvalReport {
            methods: vec![
                MethodReport { label: "RBF".into(), outcome: summary((7.25, 0.14)) },
                MethodReport { label: "OK".into(), outcome: MethodOutcome::Failed { reason: "singular".into() } },
            ],
            folds: 5,
            seed: 0,
            n_samples: 100,
        };
        let md = render_report(&r, ReportFormat::Markdown);
        assert!(md.contains("| RBF | 7.25 ± 0.14 |"), "{md}");
        assert!(md.contains("| OK | failed (singular) |"), "{md}");
        let csv = render_report(&r, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,rmse_mean,rmse_std,nmse_mean,nmse_std,mape_mean,mape_std,status");
        assert_eq!(lines[1], "RBF,7.25,0.14,0,0,0,0,ok");
        assert_eq!(lines[2], "OK,,,,,,,failed (singular)");

        let empty = EvalReport { methods: vec![], folds: 5, seed: 0, n_samples: 0 };
        assert_eq!(render_report(&empty, ReportFormat::Markdown).lines().count(), 2);
        assert_eq!(render_report(&empty, ReportFormat::Csv).lines().count(), 1);
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..400, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let f = kfold_split(n, k, seed).unwrap();
            prop_assert_eq!(f.len(), k);
            let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all = f.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn rmse_scales_with_error(truth in proptest::collection::vec(-120.0f64..-40.0, 1..50), c in 0.0f64..5.0, e in -3.0f64..3.0) {
            let pred1: Vec<f64> = truth.iter().map(|t| t + e).collect();
            let pred2: Vec<f64> = truth.iter().map(|t| t + c * e).collect();
            let r1 = rmse(&pred1, &truth).unwrap();
            let r2 = rmse(&pred2, &truth).unwrap();
            prop_assert!(r1 >= 0.0);
            prop_assert!((r2 - c * r1).abs() < 1e-9 * (1.0 + r2));
        }
    }
}
