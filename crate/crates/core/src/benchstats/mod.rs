//! Gate benchmark datasets on stability across seeds and on whether
//! pretraining helps and keeps helping as pretraining data grows.

mod ols;
mod swilk;

pub use ols::{ols_fit, OlsFit};
pub use swilk::{shapiro_wilk, ShapiroWilk};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_R2_MIN: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Pretrained,
    Baseline(String),
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "pretrained" {
            return Ok(Variant::Pretrained);
        }
        match s.strip_prefix("baseline:") {
            Some(name) if !name.is_empty() => Ok(Variant::Baseline(name.to_string())),
            _ => Err(Error::Input(format!(
                "variant {s:?} is neither \"pretrained\" nor \"baseline:<name>\""
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Pretrained => f.write_str("pretrained"),
            Variant::Baseline(name) => write!(f, "baseline:{name}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub dataset_id: String,
    pub variant: Variant,
    pub seed: i64,
    pub metric_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRecord {
    pub dataset_id: String,
    pub pretrain_size: f64,
    pub metric_value: f64,
}

fn check_metric(v: f64, line: usize) -> Result<()> {
    if !(-100.0..=100.0).contains(&v) {
        return Err(Error::Input(format!("row {line}: metric {v} outside [-100, 100]")));
    }
    Ok(())
}

/// Parse `dataset_id,variant,seed,metric_value` rows.
pub fn read_runs_csv(reader: impl Read) -> Result<Vec<RunRecord>> {
    #[derive(Deserialize)]
    struct Row {
        dataset_id: String,
        variant: String,
        seed: i64,
        metric_value: f64,
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize().enumerate() {
        let row: Row = row?;
        let line = i + 2;
        check_metric(row.metric_value, line)?;
        let rec = RunRecord {
            variant: row.variant.parse()?,
            dataset_id: row.dataset_id,
            seed: row.seed,
            metric_value: row.metric_value,
        };
        if !seen.insert((rec.dataset_id.clone(), rec.variant.clone(), rec.seed)) {
            return Err(Error::Input(format!(
                "row {line}: duplicate run ({}, {}, {})",
                rec.dataset_id, rec.variant, rec.seed
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Parse `dataset_id,pretrain_size,metric_value` rows.
pub fn read_scaling_csv(reader: impl Read) -> Result<Vec<ScalingRecord>> {
    #[derive(Deserialize)]
    struct Row {
        dataset_id: String,
        pretrain_size: f64,
        metric_value: f64,
    }
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize().enumerate() {
        let row: Row = row?;
        let line = i + 2;
        check_metric(row.metric_value, line)?;
        if !(row.pretrain_size > 0.0 && row.pretrain_size.is_finite()) {
            return Err(Error::Input(format!(
                "row {line}: pretrain size {} must be positive",
                row.pretrain_size
            )));
        }
        out.push(ScalingRecord {
            dataset_id: row.dataset_id,
            pretrain_size: row.pretrain_size,
            metric_value: row.metric_value,
        });
    }
    Ok(out)
}

pub fn load_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    read_runs_csv(std::fs::File::open(path)?)
}

pub fn load_scaling_csv(path: impl AsRef<Path>) -> Result<Vec<ScalingRecord>> {
    read_scaling_csv(std::fs::File::open(path)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdEstimator {
    /// `n − 1` denominator.
    #[default]
    Sample,
    Population,
}

impl FromStr for StdEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(StdEstimator::Sample),
            "population" => Ok(StdEstimator::Population),
            other => Err(Error::Config(format!("unknown std estimator {other:?}"))),
        }
    }
}

impl StdEstimator {
    fn ddof(self) -> usize {
        match self {
            StdEstimator::Sample => 1,
            StdEstimator::Population => 0,
        }
    }

    /// Mean and standard deviation.
    pub fn mean_std(self, values: &[f64]) -> Result<(f64, f64)> {
        let n = values.len();
        if n <= self.ddof() {
            return Err(Error::InsufficientData(format!(
                "{n} values are too few for a standard deviation"
            )));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Ok((mean, (ss / (n - self.ddof()) as f64).sqrt()))
    }
}

/// Spread of the pretrained metric across seeds.
pub fn dataset_sigma(values: &[f64], est: StdEstimator) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} seeds; at least 2 are needed",
            values.len()
        )));
    }
    Ok(est.mean_std(values)?.1)
}

/// Per-dataset σ over the pretrained runs, skipping datasets with fewer
/// than two seeds.
pub fn sigma_table(runs: &[RunRecord], est: StdEstimator) -> Result<BTreeMap<String, f64>> {
    let mut by_dataset: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.variant == Variant::Pretrained) {
        by_dataset.entry(&r.dataset_id).or_default().push(r.metric_value);
    }
    let mut out = BTreeMap::new();
    for (d, values) in by_dataset {
        if values.len() >= 2 {
            out.insert(d.to_string(), dataset_sigma(&values, est)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Indeterminate => "n/a",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Mean of `ln σ_D` over datasets with `σ_D > 0`.
    pub mu: f64,
    pub sigma: f64,
    /// `exp(μ + σ)`, on the σ_D scale.
    pub threshold: f64,
    pub threshold_override: Option<f64>,
    pub shapiro: Option<ShapiroWilk>,
    pub pass: BTreeMap<String, bool>,
}

/// A dataset passes when `ln σ_D < μ + σ`, or `σ_D < override` when one is
/// given. A zero σ_D always passes, as does everything when `σ = 0`.
pub fn stability_filter(
    sigmas: &BTreeMap<String, f64>,
    est: StdEstimator,
    threshold_override: Option<f64>,
) -> Result<StabilityReport> {
    if let Some((d, s)) = sigmas.iter().find(|(_, s)| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Input(format!("dataset {d} has invalid sigma {s}")));
    }
    let logs: Vec<f64> = sigmas.values().filter(|&&s| s > 0.0).map(|s| s.ln()).collect();
    if logs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} datasets with positive sigma; at least 3 are needed",
            logs.len()
        )));
    }
    let (mu, sigma) = est.mean_std(&logs)?;
    let cut = mu + sigma;
    let pass = sigmas
        .iter()
        .map(|(d, &s)| {
            let ok = s == 0.0
                || match threshold_override {
                    Some(t) => s < t,
                    None => sigma == 0.0 || s.ln() < cut,
                };
            (d.clone(), ok)
        })
        .collect();
    let shapiro = match shapiro_wilk(&logs) {
        Ok(r) => Some(r),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(StabilityReport {
        mu,
        sigma,
        threshold: cut.exp(),
        threshold_override,
        shapiro,
        pass,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingPredictor {
    #[default]
    Log10,
    Linear,
}

impl FromStr for ScalingPredictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log10" => Ok(ScalingPredictor::Log10),
            "linear" => Ok(ScalingPredictor::Linear),
            other => Err(Error::Config(format!("unknown scaling predictor {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityResult {
    pub benefit: Verdict,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub scaling: Verdict,
}

impl ValidityResult {
    pub fn verdict(&self) -> Verdict {
        match (self.benefit, self.scaling) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Pass, Verdict::Pass) => Verdict::Pass,
            _ => Verdict::Indeterminate,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pretraining must beat the mean of every baseline, and the metric must
/// rise with pretraining size (`slope > 0`, `R² > r2_min`). Datasets with
/// fewer than three distinct sizes get an indeterminate scaling verdict.
pub fn validity_filter(
    runs: &[RunRecord],
    scaling: &[ScalingRecord],
    r2_min: f64,
    predictor: ScalingPredictor,
) -> Result<BTreeMap<String, ValidityResult>> {
    let mut by_variant: BTreeMap<&str, BTreeMap<&Variant, Vec<f64>>> = BTreeMap::new();
    for r in runs {
        by_variant
            .entry(&r.dataset_id)
            .or_default()
            .entry(&r.variant)
            .or_default()
            .push(r.metric_value);
    }
    let mut points: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in scaling {
        let x = match predictor {
            ScalingPredictor::Log10 => s.pretrain_size.log10(),
            ScalingPredictor::Linear => s.pretrain_size,
        };
        points.entry(&s.dataset_id).or_default().push((x, s.metric_value));
    }
    let datasets: BTreeSet<&str> = by_variant.keys().chain(points.keys()).copied().collect();

    let mut out = BTreeMap::new();
    for d in datasets {
        let benefit = match by_variant.get(d) {
            Some(v) => {
                let pre = v.get(&Variant::Pretrained).map(|x| mean(x));
                let baselines: Vec<f64> = v
                    .iter()
                    .filter(|(k, _)| ***k != Variant::Pretrained)
                    .map(|(_, x)| mean(x))
                    .collect();
                match pre {
                    Some(p) if !baselines.is_empty() => {
                        Verdict::from_bool(baselines.iter().all(|&b| p > b))
                    }
                    _ => Verdict::Indeterminate,
                }
            }
            None => Verdict::Indeterminate,
        };
        let pts = points.get(d).map(Vec::as_slice).unwrap_or_default();
        let distinct: BTreeSet<u64> = pts.iter().map(|p| p.0.to_bits()).collect();
        let (slope, r2, scaling) = if distinct.len() >= 3 {
            let fit = ols_fit(pts)?;
            (
                Some(fit.slope),
                Some(fit.r2),
                Verdict::from_bool(fit.slope > 0.0 && fit.r2 > r2_min),
            )
        } else {
            if !pts.is_empty() {
                warn!("dataset {d}: {} distinct scaling sizes, need 3", distinct.len());
            }
            (None, None, Verdict::Indeterminate)
        };
        out.insert(
            d.to_string(),
            ValidityResult {
                benefit,
                slope,
                r2,
                scaling,
            },
        );
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaOptions {
    pub std: StdEstimator,
    pub sigma_threshold: Option<f64>,
    pub r2_min: f64,
    pub predictor: ScalingPredictor,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        CriteriaOptions {
            std: StdEstimator::Sample,
            sigma_threshold: None,
            r2_min: DEFAULT_R2_MIN,
            predictor: ScalingPredictor::Log10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub sigma: Option<f64>,
    pub log_sigma: Option<f64>,
    pub stability: Verdict,
    pub benefit: Verdict,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub scaling: Verdict,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub options: CriteriaOptions,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub threshold: Option<f64>,
    pub shapiro_w: Option<f64>,
    pub shapiro_p: Option<f64>,
    pub datasets: BTreeMap<String, DatasetReport>,
}

/// Run both criteria. A dataset is selected only when stability, benefit
/// and scaling all pass.
pub fn evaluate_criteria(
    runs: &[RunRecord],
    scaling: &[ScalingRecord],
    opts: &CriteriaOptions,
) -> Result<CriteriaReport> {
    let sigmas = sigma_table(runs, opts.std)?;
    let stability = match stability_filter(&sigmas, opts.std, opts.sigma_threshold) {
        Ok(r) => Some(r),
        Err(Error::InsufficientData(msg)) => {
            warn!("stability criterion skipped: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let validity = validity_filter(runs, scaling, opts.r2_min, opts.predictor)?;
    let names: BTreeSet<&String> = sigmas.keys().chain(validity.keys()).collect();

    let datasets = names
        .into_iter()
        .map(|d| {
            let sigma = sigmas.get(d).copied();
            let stab = match (&stability, sigma) {
                (Some(r), Some(_)) => Verdict::from_bool(r.pass[d]),
                _ => Verdict::Indeterminate,
            };
            let v = validity.get(d);
            let benefit = v.map_or(Verdict::Indeterminate, |v| v.benefit);
            let scaling = v.map_or(Verdict::Indeterminate, |v| v.scaling);
            let report = DatasetReport {
                sigma,
                log_sigma: sigma.filter(|&s| s > 0.0).map(f64::ln),
                stability: stab,
                benefit,
                slope: v.and_then(|v| v.slope),
                r2: v.and_then(|v| v.r2),
                scaling,
                selected: stab.passed() && benefit.passed() && scaling.passed(),
            };
            (d.clone(), report)
        })
        .collect();

    Ok(CriteriaReport {
        options: *opts,
        mu: stability.as_ref().map(|r| r.mu),
        sigma: stability.as_ref().map(|r| r.sigma),
        threshold: stability.as_ref().map(|r| r.threshold),
        shapiro_w: stability.as_ref().and_then(|r| r.shapiro).map(|s| s.w),
        shapiro_p: stability.as_ref().and_then(|r| r.shapiro).map(|s| s.p),
        datasets,
    })
}

impl CriteriaReport {
    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "dataset", "sigma", "stable", "benefit", "slope", "r2", "scaling", "selected"
        );
        for (d, r) in &self.datasets {
            let _ = writeln!(
                s,
                "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
                d,
                opt(r.sigma),
                r.stability,
                r.benefit,
                opt(r.slope),
                opt(r.r2),
                r.scaling,
                if r.selected { "yes" } else { "no" },
            );
        }
        let _ = writeln!(
            s,
            "mu={} sigma={} threshold={} shapiro_w={} shapiro_p={}",
            opt(self.mu),
            opt(self.sigma),
            opt(self.threshold),
            opt(self.shapiro_w),
            opt(self.shapiro_p),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const STABILITY_DATASETS: [&str; 13] = [
        "NET", "NE", "EE", "CA", "OCR", "K36m3", "ER", "Z", "K4m3", "K4m1", "K27m3", "K9a", "K4m2",
    ];
    const SIGMA_EVAL: [f64; 13] = [
        0.07, 0.08, 0.29, 0.3, 0.43, 0.53, 1.26, 1.28, 1.37, 1.45, 2.85, 2.93, 3.81,
    ];
    const SIGMA_PRETRAIN: [f64; 13] = [
        0.07, 0.26, 0.51, 0.1, 0.34, 0.35, 0.22, 2.44, 1.5, 1.23, 3.57, 1.08, 1.66,
    ];

    fn table(values: &[f64]) -> BTreeMap<String, f64> {
        STABILITY_DATASETS
            .iter()
            .zip(values)
            .map(|(d, &v)| (d.to_string(), v))
            .collect()
    }

    fn failing(r: &StabilityReport) -> BTreeSet<&str> {
        r.pass.iter().filter(|(_, ok)| !**ok).map(|(d, _)| d.as_str()).collect()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(dataset_sigma(&[70.0; 3], StdEstimator::Sample).unwrap(), 0.0);
        assert_eq!(dataset_sigma(&[1.0, 2.0, 3.0], StdEstimator::Sample).unwrap(), 1.0);
        let net = dataset_sigma(&[71.80, 71.94, 71.87], StdEstimator::Sample).unwrap();
        assert!((net - 0.07).abs() < 1e-9);
        assert!(matches!(
            dataset_sigma(&[1.0], StdEstimator::Sample),
            Err(Error::InsufficientData(_))
        ));
        let pop = dataset_sigma(&[1.0, 3.0], StdEstimator::Population).unwrap();
        assert_eq!(pop, 1.0);
    }

    #[test]
    fn reference_sigma_flags() {
        let r = stability_filter(&table(&SIGMA_EVAL), StdEstimator::Sample, Some(1.41)).unwrap();
        assert_eq!(failing(&r), ["K4m1", "K27m3", "K9a", "K4m2"].into());
        let r = stability_filter(&table(&SIGMA_PRETRAIN), StdEstimator::Sample, Some(1.41)).unwrap();
        assert_eq!(failing(&r), ["Z", "K4m3", "K27m3", "K4m2"].into());
    }

    #[test]
    fn equal_sigmas_all_pass() {
        let t: BTreeMap<String, f64> = (0..5).map(|i| (format!("d{i}"), 0.5)).collect();
        let r = stability_filter(&t, StdEstimator::Sample, None).unwrap();
        assert!(r.pass.values().all(|&p| p));
        assert_eq!(r.shapiro, None);
    }

    #[test]
    fn outlier_fails() {
        // twelve values spread around 1 and one far outlier
        let mut t: BTreeMap<String, f64> = (0..12)
            .map(|i| (format!("d{i:02}"), (0.1 * (i as f64 - 5.5)).exp()))
            .collect();
        t.insert("outlier".into(), 50.0);
        let logs: Vec<f64> = t.values().map(|v| v.ln()).collect();
        let mu = logs.iter().sum::<f64>() / 13.0;
        let sd = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / 12.0).sqrt();
        let r = stability_filter(&t, StdEstimator::Sample, None).unwrap();
        assert!((r.mu - mu).abs() < 1e-12 && (r.sigma - sd).abs() < 1e-12);
        assert!((r.threshold - (mu + sd).exp()).abs() < 1e-9);
        assert_eq!(failing(&r), ["outlier"].into());
    }

    #[test]
    fn stability_needs_three_positive() {
        let t: BTreeMap<String, f64> =
            [("a".to_string(), 0.0), ("b".into(), 1.0), ("c".into(), 2.0)].into();
        assert!(matches!(
            stability_filter(&t, StdEstimator::Sample, None),
            Err(Error::InsufficientData(_))
        ));
        let mut t4 = t.clone();
        t4.insert("d".into(), 3.0);
        let r = stability_filter(&t4, StdEstimator::Sample, None).unwrap();
        assert!(r.pass["a"]);
    }

    fn run(d: &str, v: &str, seed: i64, m: f64) -> RunRecord {
        RunRecord {
            dataset_id: d.into(),
            variant: v.parse().unwrap(),
            seed,
            metric_value: m,
        }
    }

    fn scale(d: &str, x: f64, m: f64) -> ScalingRecord {
        ScalingRecord {
            dataset_id: d.into(),
            pretrain_size: x,
            metric_value: m,
        }
    }

    #[test]
    fn validity_examples() {
        let runs = [
            run("up", "pretrained", 0, 80.0),
            run("up", "baseline:cnn", 0, 70.0),
            run("flat", "pretrained", 0, 80.0),
            run("flat", "baseline:cnn", 0, 70.0),
            run("lose", "pretrained", 0, 60.0),
            run("lose", "baseline:cnn", 0, 50.0),
            run("lose", "baseline:mlp", 0, 61.0),
        ];
        let scaling = [
            scale("up", 10.0, 1.0),
            scale("up", 100.0, 2.0),
            scale("up", 1000.0, 3.0),
            scale("flat", 1.0, 5.0),
            scale("flat", 2.0, 5.0),
            scale("flat", 3.0, 5.0),
            scale("lose", 1.0, 5.0),
        ];
        let v = validity_filter(&runs, &scaling, DEFAULT_R2_MIN, ScalingPredictor::Log10).unwrap();
        assert_eq!(v["up"].verdict(), Verdict::Pass);
        assert!((v["up"].slope.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(v["flat"].scaling, Verdict::Fail);
        assert_eq!(v["lose"].benefit, Verdict::Fail);
        assert_eq!(v["lose"].scaling, Verdict::Indeterminate);

        let linear = [scale("up", 1.0, 1.0), scale("up", 2.0, 2.0), scale("up", 3.0, 3.0)];
        let v = validity_filter(&runs[..2], &linear, DEFAULT_R2_MIN, ScalingPredictor::Linear).unwrap();
        assert_eq!((v["up"].slope, v["up"].r2), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn csv_parsing() {
        let runs = "dataset_id,variant,seed,metric_value\nA,pretrained,1,50.5\nA,baseline:cnn,1,-3\n";
        let r = read_runs_csv(runs.as_bytes()).unwrap();
        assert_eq!(r[1].variant, Variant::Baseline("cnn".into()));
        let dup = "dataset_id,variant,seed,metric_value\nA,pretrained,1,1\nA,pretrained,1,2\n";
        assert!(read_runs_csv(dup.as_bytes()).is_err());
        let bad = "dataset_id,variant,seed,metric_value\nA,other,1,1\n";
        assert!(read_runs_csv(bad.as_bytes()).is_err());
        let range = "dataset_id,variant,seed,metric_value\nA,pretrained,1,101\n";
        assert!(read_runs_csv(range.as_bytes()).is_err());
        let sc = "dataset_id,pretrain_size,metric_value\nA,0,1\n";
        assert!(read_scaling_csv(sc.as_bytes()).is_err());
    }

    #[test]
    fn selected_is_intersection() {
        let mut runs = Vec::new();
        let mut scaling = Vec::new();
        for (i, d) in ["a", "b", "c", "d"].iter().enumerate() {
            let spread = [0.1, 0.12, 0.11, 5.0][i];
            for s in 0..3 {
                runs.push(run(d, "pretrained", s, 60.0 + spread * s as f64));
            }
            runs.push(run(d, "baseline:cnn", 0, if *d == "b" { 99.0 } else { 1.0 }));
            for (j, x) in [1e6, 1e7, 1e8].iter().enumerate() {
                let y = if *d == "c" { 5.0 - j as f64 } else { 5.0 + j as f64 };
                scaling.push(scale(d, *x, y));
            }
        }
        let r = evaluate_criteria(&runs, &scaling, &CriteriaOptions::default()).unwrap();
        let selected: Vec<&str> = r
            .datasets
            .iter()
            .filter(|(_, d)| d.selected)
            .map(|(k, _)| k.as_str())
            .collect();
        assert_eq!(selected, ["a"]);
        assert_eq!(r.datasets["d"].stability, Verdict::Fail);
        assert_eq!(r.datasets["b"].benefit, Verdict::Fail);
        assert_eq!(r.datasets["c"].scaling, Verdict::Fail);
        assert!(r.to_table().contains("threshold="));
    }

    proptest! {
        #[test]
        fn stability_scale_invariant(
            sig in proptest::collection::vec(0.01f64..10.0, 4..20),
            c in 0.05f64..20.0,
        ) {
            let t: BTreeMap<String, f64> =
                sig.iter().enumerate().map(|(i, &s)| (format!("d{i}"), s)).collect();
            let scaled: BTreeMap<String, f64> = t.iter().map(|(k, &v)| (k.clone(), v * c)).collect();
            let a = stability_filter(&t, StdEstimator::Sample, None).unwrap();
            let b = stability_filter(&scaled, StdEstimator::Sample, None).unwrap();
            // values sitting on the cut are allowed to flip by rounding
            let mu_sd = a.mu + a.sigma;
            for (k, &s) in &t {
                if (s.ln() - mu_sd).abs() > 1e-9 {
                    prop_assert_eq!(a.pass[k], b.pass[k]);
                }
            }
        }

        #[test]
        fn ols_recovers_exact_lines(
            slope in -50i32..50,
            intercept in -50i32..50,
            xs in proptest::collection::btree_set(-100i32..100, 2..20),
        ) {
            let pts: Vec<(f64, f64)> = xs
                .iter()
                .map(|&x| (x as f64, slope as f64 * x as f64 + intercept as f64))
                .collect();
            let f = ols_fit(&pts).unwrap();
            prop_assert!((f.slope - slope as f64).abs() < 1e-12);
            prop_assert!((f.intercept - intercept as f64).abs() < 1e-9);
            prop_assert!((f.r2 - 1.0).abs() < 1e-12);
        }
    }
}
