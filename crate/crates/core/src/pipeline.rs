//! The A-model / B-model experiment.
//!
//! For every Monte Carlo run the A-model trains on the real training rows.
//! For every outlier level a synthetic set is drawn from a generator fitted
//! on that run's training features, labelled by the A-model's predicted
//! probabilities, mixed with the real rows, and used to train the B-model.
//! Both models are scored on the pre-shock test rows and the shocked rows;
//! per-level medians then feed the stabilization score and uplift.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drift::{distribution_shift, DriftReport, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::frame::{load_csv, Column, ColumnKind, CsvOptions, TabularFrame};
use crate::model::{evaluate_pair, train_baseline, AucPair, BaselineModel, TrainConfig};
use crate::rng::{derive_seed, stream_rng};
use crate::split::{aggregate, monte_carlo, shock_segments, ShockSplit, SplitSpec, Summary};
use crate::stability::{
    display_uplift, rank_order, stabilization_score, stabilization_uplift, AucPoint, OutlierLevel,
    StabilityRecord, UpliftBreakdown, UpliftCoefficients, DEFAULT_EPSILON,
};
use crate::synth::{self, EvtFamily, OutlierSpec, DEFAULT_REGULARIZATION, DEFAULT_TAIL_SIGMA};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_levels() -> Vec<OutlierLevel> {
    vec![
        OutlierLevel::Without,
        OutlierLevel::Percent(5.0),
        OutlierLevel::Percent(10.0),
    ]
}
fn default_family() -> EvtFamily {
    EvtFamily::Normal
}
fn default_tail_sigma() -> f64 {
    DEFAULT_TAIL_SIGMA
}
fn default_real_fraction() -> f64 {
    0.5
}
fn default_upsample_target() -> usize {
    10_000
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_model_name() -> String {
    "logistic".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Name used in digests; defaults to the input file stem.
    #[serde(default)]
    pub dataset: Option<String>,
    pub input: PathBuf,
    pub label: String,
    /// The split's own `seed` is replaced by the pipeline seed.
    pub split: SplitSpec,
    #[serde(default = "default_levels")]
    pub levels: Vec<OutlierLevel>,
    #[serde(default = "default_family")]
    pub family: EvtFamily,
    #[serde(default = "default_tail_sigma")]
    pub tail_sigma: f64,
    #[serde(default)]
    pub nonneg_columns: Vec<String>,
    #[serde(default = "default_real_fraction")]
    pub real_fraction: f64,
    /// Rows the generator is fitted on; smaller training sets are resampled
    /// up to this size. Zero disables upsampling.
    #[serde(default = "default_upsample_target")]
    pub upsample_target: usize,
    #[serde(default)]
    pub coeffs: UpliftCoefficients,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Columns removed before modelling and drift measurement (ids, leaks).
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub model: TrainConfig,
    #[serde(default = "default_model_name")]
    pub model_name: String,
    /// Also summarize uplift computed run by run.
    #[serde(default)]
    pub per_run_su: bool,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, label: impl Into<String>, split: SplitSpec) -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            dataset: None,
            input: input.into(),
            label: label.into(),
            split,
            levels: default_levels(),
            family: default_family(),
            tail_sigma: DEFAULT_TAIL_SIGMA,
            nonneg_columns: Vec::new(),
            real_fraction: default_real_fraction(),
            upsample_target: default_upsample_target(),
            coeffs: UpliftCoefficients::default(),
            epsilon: DEFAULT_EPSILON,
            tau: DEFAULT_TAU,
            exclude: Vec::new(),
            model: TrainConfig::default(),
            model_name: default_model_name(),
            per_run_su: false,
            seed: 0,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative inputs are resolved against the config file's directory.
        if config.input.is_relative() {
            if let Some(dir) = path.parent() {
                config.input = dir.join(&config.input);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.split.validate()?;
        if self.levels.is_empty() {
            return Err(Error::Config(
                "at least one outlier level is required".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for l in &self.levels {
            l.validate()?;
            if !seen.insert(*l) {
                return Err(Error::Config(format!("duplicate outlier level {l}")));
            }
        }
        if !(self.real_fraction > 0.0 && self.real_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "real_fraction must lie in (0, 1], got {}",
                self.real_fraction
            )));
        }
        if !(self.tail_sigma > 0.0 && self.tail_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "tail_sigma must be > 0, got {}",
                self.tail_sigma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be >= 0, got {}", self.tau)));
        }
        self.coeffs.validate()?;
        if self.exclude.contains(&self.label) {
            return Err(Error::Config(format!(
                "label `{}` is also excluded",
                self.label
            )));
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCell {
    pub run_index: usize,
    pub a: Option<AucPair>,
    pub b: Option<AucPair>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub auc_base: Summary,
    pub auc_shock: Summary,
    pub stability: StabilityRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub outliers_pct: OutlierLevel,
    pub runs: Vec<RunCell>,
    pub a: Option<ModelSummary>,
    pub b: Option<ModelSummary>,
    pub uplift: Option<UpliftBreakdown>,
    pub su_display: Option<f64>,
    pub per_run_su: Option<Summary>,
    pub error: Option<String>,
}

impl LevelReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowCounts {
    pub total: usize,
    pub pre_shock: usize,
    pub post_shock: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub dataset: String,
    pub model: String,
    pub environment: EnvironmentStamp,
    pub config: PipelineConfig,
    pub rows: RowCounts,
    pub drift: DriftReport,
    pub levels: Vec<LevelReport>,
    pub failed_levels: usize,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// 0 on success, 4 when some levels failed, 3 when all did.
    pub fn exit_code(&self) -> u8 {
        match self.failed_levels {
            0 => 0,
            n if n == self.levels.len() => 3,
            _ => 4,
        }
    }
}

/// Per-level stream key. It depends only on the level, so adding or
/// reordering levels leaves the others' random streams unchanged.
fn level_key(level: OutlierLevel) -> u64 {
    match level {
        OutlierLevel::Without => u64::MAX,
        OutlierLevel::Percent(p) => p.to_bits(),
    }
}

struct Prepared<'a> {
    config: &'a PipelineConfig,
    /// Training feature columns (label excluded), in training column order.
    feature_names: Vec<String>,
    label_kind: ColumnKind,
}

fn strip(frame: &TabularFrame, drop: &[String]) -> TabularFrame {
    frame.drop_columns(drop)
}

fn synthetic_labels(
    model: &BaselineModel,
    features: &TabularFrame,
    kind: ColumnKind,
    label: &str,
    seed: u64,
) -> Result<Column> {
    let probs = model.predict_proba(features)?;
    let mut rng = stream_rng(seed, &[]);
    let draws: Vec<bool> = probs.iter().map(|&p| rng.random::<f64>() < p).collect();
    Ok(match kind {
        ColumnKind::Numerical => Column::numerical(
            label,
            draws
                .iter()
                .map(|&d| Some(if d { 1.0 } else { 0.0 }))
                .collect(),
        ),
        ColumnKind::Categorical => Column::categorical(
            label,
            draws
                .iter()
                .map(|&d| Some(if d { "1" } else { "0" }.to_string()))
                .collect(),
        ),
    })
}

/// Mixed real + synthetic training frame for one run and level.
pub fn mixed_training_set(
    train: &TabularFrame,
    a_model: &BaselineModel,
    generator: &synth::FittedGenerator,
    config: &PipelineConfig,
    level: OutlierLevel,
    run: usize,
) -> Result<TabularFrame> {
    let prep = prepare(config, train)?;
    mixed_with(&prep, train, a_model, generator, level, run)
}

fn prepare<'a>(config: &'a PipelineConfig, train: &TabularFrame) -> Result<Prepared<'a>> {
    Ok(Prepared {
        config,
        feature_names: train
            .column_names()
            .filter(|n| *n != config.label)
            .map(str::to_string)
            .collect(),
        label_kind: train.require(&config.label)?.kind(),
    })
}

fn mixed_with(
    prep: &Prepared,
    train: &TabularFrame,
    a_model: &BaselineModel,
    generator: &synth::FittedGenerator,
    level: OutlierLevel,
    run: usize,
) -> Result<TabularFrame> {
    let config = prep.config;
    let run_key = run as u64;
    let key = level_key(level);
    let n_real = train.row_count();
    let needed =
        ((n_real as f64) * (1.0 - config.real_fraction) / config.real_fraction).round() as usize;
    if needed == 0 {
        return Ok(train.clone());
    }
    let spec = OutlierSpec {
        family: config.family,
        outlier_fraction: level.fraction(),
        tail_sigma: config.tail_sigma,
        total_rows: needed,
        seed: derive_seed(derive_seed(config.seed, 4), derive_seed(run_key, key)),
        nonneg_columns: config.nonneg_columns.clone(),
    };
    let batch = synth::postprocess(&synth::generate(generator, &spec)?, &spec)?;
    let features = batch.frame.select(&prep.feature_names)?;
    let label_seed = derive_seed(derive_seed(config.seed, 5), derive_seed(run_key, key));
    let labels = synthetic_labels(
        a_model,
        &features,
        prep.label_kind,
        &config.label,
        label_seed,
    )?;
    let order: Vec<&str> = train.column_names().collect();
    let synthetic = features.push_column(labels)?.select(&order)?;
    let mix_seed = derive_seed(derive_seed(config.seed, 6), derive_seed(run_key, key));
    synth::mix(train, &synthetic, config.real_fraction, mix_seed)
}

struct RunOutcome {
    a: Result<AucPair, String>,
    levels: Vec<Result<AucPair, String>>,
}

fn run_once(prep: &Prepared, split: &ShockSplit, drop: &[String]) -> RunOutcome {
    let config = prep.config;
    let run = split.run_index;
    let train = strip(&split.train, drop);
    let test_split = ShockSplit {
        run_index: run,
        train: TabularFrame::new(Vec::new()).expect("empty frame"),
        test: strip(&split.test, drop),
        shocked_test: strip(&split.shocked_test, drop),
        train_rows: Vec::new(),
        test_rows: Vec::new(),
        shock_rows: Vec::new(),
    };
    let a_cfg = TrainConfig {
        seed: derive_seed(derive_seed(config.seed, 2), run as u64),
        ..config.model.clone()
    };
    let a_model = match train_baseline(&train, &config.label, &a_cfg) {
        Ok(m) => m,
        Err(e) => {
            let msg = format!("run {run}: A-model: {e}");
            return RunOutcome {
                a: Err(msg.clone()),
                levels: vec![Err(msg); config.levels.len()],
            };
        }
    };
    let a = evaluate_pair(&a_model, &test_split)
        .map_err(|e| format!("run {run}: A-model evaluation: {e}"));
    if config.real_fraction == 1.0 {
        // Nothing synthetic is added, so the B-model is the A-model.
        let levels = vec![a.clone(); config.levels.len()];
        return RunOutcome { a, levels };
    }

    let generator = (|| {
        let features = train.drop_columns(std::slice::from_ref(&config.label));
        let fit_on = if config.upsample_target > 0 {
            synth::upsample(
                &features,
                config.upsample_target,
                derive_seed(derive_seed(config.seed, 3), run as u64),
            )?
        } else {
            features
        };
        synth::fit(&fit_on, DEFAULT_REGULARIZATION)
    })();
    let levels = config
        .levels
        .iter()
        .map(|&level| {
            let generator = generator
                .as_ref()
                .map_err(|e| format!("run {run}: generator fit: {e}"))?;
            let mixed = mixed_with(prep, &train, &a_model, generator, level, run)
                .map_err(|e| format!("run {run}, level {level}: synthesis: {e}"))?;
            let b_cfg = TrainConfig {
                seed: derive_seed(
                    derive_seed(config.seed, 7),
                    derive_seed(run as u64, level_key(level)),
                ),
                ..config.model.clone()
            };
            let b_model = train_baseline(&mixed, &config.label, &b_cfg)
                .map_err(|e| format!("run {run}, level {level}: B-model: {e}"))?;
            evaluate_pair(&b_model, &test_split)
                .map_err(|e| format!("run {run}, level {level}: B-model evaluation: {e}"))
        })
        .collect();
    RunOutcome { a, levels }
}

fn summarize(pairs: &[AucPair], config: &PipelineConfig, ds: f64) -> Result<ModelSummary> {
    let base = aggregate(&pairs.iter().map(|p| p.auc_base).collect::<Vec<_>>())?;
    let shock = aggregate(&pairs.iter().map(|p| p.auc_shock).collect::<Vec<_>>())?;
    Ok(ModelSummary {
        stability: stabilization_score(base.median, shock.median, ds, config.epsilon)?,
        auc_base: base,
        auc_shock: shock,
    })
}

/// Runs the experiment on an already loaded frame.
pub fn run_on_frame(config: &PipelineConfig, frame: &TabularFrame) -> Result<PipelineReport> {
    config.validate()?;
    frame.require(&config.label)?;
    for c in &config.exclude {
        frame.require(c)?;
    }
    let mut split = config.split.clone();
    split.seed = config.seed;

    let mut drop: Vec<String> = config.exclude.clone();
    if let Some(d) = split.date_column() {
        if d == config.label {
            return Err(Error::Config("the date column cannot be the label".into()));
        }
        drop.push(d.to_string());
    }

    let (pre, post) = shock_segments(frame, &split)?;
    let mut drift_excluded = drop.clone();
    drift_excluded.push(config.label.clone());
    let drift = distribution_shift(&pre, &post, config.tau, &drift_excluded)?;
    let ds = drift.ds;

    let splits = monte_carlo(frame, &split)?;
    let features_frame = strip(frame, &drop);
    let prep = prepare(config, &features_frame)?;
    let outcomes: Vec<RunOutcome> = splits
        .par_iter()
        .map(|s| run_once(&prep, s, &drop))
        .collect();

    let a_pairs: Vec<AucPair> = outcomes
        .iter()
        .filter_map(|o| o.a.as_ref().ok().copied())
        .collect();
    let a_error = outcomes.iter().find_map(|o| o.a.as_ref().err().cloned());
    let a_summary = if a_error.is_none() {
        Some(summarize(&a_pairs, config, ds))
    } else {
        None
    };

    let mut levels = Vec::with_capacity(config.levels.len());
    for (li, &level) in config.levels.iter().enumerate() {
        let runs: Vec<RunCell> = outcomes
            .iter()
            .enumerate()
            .map(|(r, o)| {
                let b = o.levels[li].as_ref().ok().copied();
                let error = o.a.as_ref().err().or(o.levels[li].as_ref().err()).cloned();
                RunCell {
                    run_index: r,
                    a: o.a.as_ref().ok().copied(),
                    b,
                    error,
                }
            })
            .collect();
        let mut report = LevelReport {
            outliers_pct: level,
            runs,
            a: None,
            b: None,
            uplift: None,
            su_display: None,
            per_run_su: None,
            error: None,
        };
        let first_error = report.runs.iter().find_map(|c| c.error.clone());
        let computed = match (first_error, &a_summary) {
            (Some(e), _) => Err(e),
            (None, Some(Err(e))) => Err(format!("A-model summary: {e}")),
            (None, None) => Err(a_error.clone().unwrap_or_default()),
            (None, Some(Ok(a))) => (|| -> Result<_> {
                let b_pairs: Vec<AucPair> = report.runs.iter().filter_map(|c| c.b).collect();
                let b = summarize(&b_pairs, config, ds)?;
                let uplift = stabilization_uplift(
                    AucPoint::new(a.auc_base.median, a.auc_shock.median),
                    AucPoint::new(b.auc_base.median, b.auc_shock.median),
                    ds,
                    &config.coeffs,
                    config.epsilon,
                )?;
                let per_run = if config.per_run_su {
                    let sus = report
                        .runs
                        .iter()
                        .map(|c| {
                            let (a, b) = (c.a.expect("checked"), c.b.expect("checked"));
                            Ok(stabilization_uplift(
                                AucPoint::new(a.auc_base, a.auc_shock),
                                AucPoint::new(b.auc_base, b.auc_shock),
                                ds,
                                &config.coeffs,
                                config.epsilon,
                            )?
                            .su)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(aggregate(&sus)?)
                } else {
                    None
                };
                Ok((a.clone(), b, uplift, per_run))
            })()
            .map_err(|e| e.to_string()),
        };
        match computed {
            Ok((a, b, uplift, per_run)) => {
                report.a = Some(a);
                report.b = Some(b);
                report.su_display = Some(display_uplift(uplift.su));
                report.uplift = Some(uplift);
                report.per_run_su = per_run;
            }
            Err(e) => report.error = Some(e),
        }
        levels.push(report);
    }

    let failed_levels = levels.iter().filter(|l| l.failed()).count();
    Ok(PipelineReport {
        schema_version: SCHEMA_VERSION,
        dataset: config.dataset_name(),
        model: config.model_name.clone(),
        environment: EnvironmentStamp {
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
        },
        config: config.clone(),
        rows: RowCounts {
            total: frame.row_count(),
            pre_shock: pre.row_count(),
            post_shock: post.row_count(),
        },
        drift,
        levels,
        failed_levels,
    })
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let frame = load_csv(&config.input, &CsvOptions::default())?;
    run_on_frame(config, &frame)
}

/// Largest gap between each stored uplift and the uplift recomputed from
/// the stored medians, DS and coefficients.
pub fn audit_uplift(report: &PipelineReport) -> Result<f64> {
    let c = &report.config;
    let mut worst = 0.0f64;
    for l in &report.levels {
        let (Some(a), Some(b), Some(u)) = (&l.a, &l.b, &l.uplift) else {
            continue;
        };
        let su = stabilization_uplift(
            AucPoint::new(a.auc_base.median, a.auc_shock.median),
            AucPoint::new(b.auc_base.median, b.auc_shock.median),
            report.drift.ds,
            &c.coeffs,
            c.epsilon,
        )?
        .su;
        worst = worst.max((su - u.su).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialPoint {
    pub model: String,
    pub auc_base: f64,
    pub auc_shock: f64,
    pub su: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSeries {
    pub outliers_pct: OutlierLevel,
    pub points: Vec<RadialPoint>,
}

/// Plot data: one series per outlier level, each with one point per model
/// holding the B-model's median AUCs and the displayed uplift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialData {
    pub schema_version: u32,
    pub dataset: String,
    pub ds: f64,
    pub nonzero: bool,
    pub series: Vec<RadialSeries>,
    pub warnings: Vec<String>,
}

pub fn emit_radial_data(reports: &[PipelineReport], nonzero: bool) -> RadialData {
    let mut levels: Vec<OutlierLevel> = reports
        .iter()
        .flat_map(|r| r.levels.iter().map(|l| l.outliers_pct))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    levels.sort();
    let mut warnings = Vec::new();
    let series: Vec<RadialSeries> = levels
        .iter()
        .map(|&level| {
            let mut points = Vec::new();
            for r in reports {
                let Some(l) = r.levels.iter().find(|l| l.outliers_pct == level) else {
                    continue;
                };
                match (&l.b, l.su_display) {
                    (Some(b), Some(su)) => {
                        if nonzero && su == 0.0 {
                            continue;
                        }
                        points.push(RadialPoint {
                            model: r.model.clone(),
                            auc_base: b.auc_base.median,
                            auc_shock: b.auc_shock.median,
                            su,
                        });
                    }
                    _ => warnings.push(format!(
                        "model `{}` level {level}: failed cell omitted",
                        r.model
                    )),
                }
            }
            points.sort_by(|a, b| a.model.cmp(&b.model));
            RadialSeries {
                outliers_pct: level,
                points,
            }
        })
        .collect();
    if nonzero && series.iter().all(|s| s.points.is_empty()) {
        warnings.push("every uplift is zero; all series are empty".into());
    }
    let dataset = reports
        .first()
        .map(|r| r.dataset.clone())
        .unwrap_or_default();
    let ds = reports.first().map_or(0.0, |r| r.drift.ds);
    RadialData {
        schema_version: SCHEMA_VERSION,
        dataset,
        ds,
        nonzero,
        series,
        warnings,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigestRow {
    pub dataset: String,
    pub ds: f64,
    pub model: Option<String>,
    pub outliers_pct: Option<OutlierLevel>,
    pub su_max: Option<f64>,
}

/// Best displayed uplift per dataset. Reports for the same dataset (one per
/// model) are pooled. Ties go to the lower outlier level, then model name.
pub fn emit_digest(reports: &[PipelineReport]) -> Vec<DigestRow> {
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    datasets
        .into_iter()
        .map(|name| {
            let group: Vec<&PipelineReport> =
                reports.iter().filter(|r| r.dataset == name).collect();
            let best = group
                .iter()
                .flat_map(|r| {
                    r.levels.iter().filter_map(move |l| {
                        Some((l.su_display?, l.outliers_pct, r.model.as_str()))
                    })
                })
                .min_by(|a, b| rank_order(*a, *b));
            DigestRow {
                dataset: name.to_string(),
                ds: group[0].drift.ds,
                model: best.map(|b| b.2.to_string()),
                outliers_pct: best.map(|b| b.1),
                su_max: best.map(|b| b.0),
            }
        })
        .collect()
}

pub fn digest_tsv(rows: &[DigestRow]) -> String {
    let mut out = String::from("dataset\tds\tmodel\toutliers_pct\tsu_max\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.4}\t{}\t{}\t{}\n",
            r.dataset,
            r.ds,
            r.model.as_deref().unwrap_or("-"),
            r.outliers_pct.map_or("-".to_string(), |l| l.to_string()),
            r.su_max.map_or("-".to_string(), |v| format!("{v:.4}")),
        ));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.json`, `levels.csv`, `runs.csv` and `drift.csv` into `dir`.
pub fn write_outputs(report: &PipelineReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;

    let open = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
        let path = dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(csv::Writer::from_writer(BufWriter::new(f)))
    };

    let mut w = open("levels.csv")?;
    w.write_record([
        "outliers_pct",
        "auc_base_a",
        "auc_shock_a",
        "auc_base_b",
        "auc_shock_b",
        "ss_a",
        "ss_b",
        "su",
        "su_display",
        "error",
    ])?;
    for l in &report.levels {
        w.write_record([
            l.outliers_pct.to_string(),
            opt(l.a.as_ref().map(|s| s.auc_base.median)),
            opt(l.a.as_ref().map(|s| s.auc_shock.median)),
            opt(l.b.as_ref().map(|s| s.auc_base.median)),
            opt(l.b.as_ref().map(|s| s.auc_shock.median)),
            opt(l.uplift.map(|u| u.ss_a)),
            opt(l.uplift.map(|u| u.ss_b)),
            opt(l.uplift.map(|u| u.su)),
            opt(l.su_display),
            l.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io(dir.join("levels.csv"), e))?;

    let mut w = open("runs.csv")?;
    w.write_record([
        "outliers_pct",
        "run",
        "auc_base_a",
        "auc_shock_a",
        "auc_base_b",
        "auc_shock_b",
        "error",
    ])?;
    for l in &report.levels {
        for c in &l.runs {
            w.write_record([
                l.outliers_pct.to_string(),
                c.run_index.to_string(),
                opt(c.a.map(|p| p.auc_base)),
                opt(c.a.map(|p| p.auc_shock)),
                opt(c.b.map(|p| p.auc_base)),
                opt(c.b.map(|p| p.auc_shock)),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join("runs.csv"), e))?;

    let mut w = open("drift.csv")?;
    w.write_record(["column", "kind", "distance"])?;
    for c in &report.drift.per_column {
        w.write_record([c.name.clone(), c.kind.to_string(), c.distance.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("drift.csv"), e))?;
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<PipelineReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
