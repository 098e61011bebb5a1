//! Baseline classifier, AUC, and import of externally produced AUC tables.

use std::collections::BTreeSet;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ColumnData, ColumnKind, TabularFrame};
use crate::rng::stream_rng;
use crate::split::{aggregate, ShockSplit, Summary};
use crate::stability::{stabilization_uplift, OutlierLevel, UpliftCoefficients, UpliftRecord};

/// Area under the ROC curve in its Mann-Whitney form: the share of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Pairs are counted exactly in integers. The ratio is rounded to a multiple
/// of 2^-53, on which `1 - auc` is exact, so reversing the scores yields
/// exactly `1 - auc`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u128;
    let negatives = labels.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels(format!(
            "AUC needs both classes, got {positives} positive and {negatives} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney U of the positives.
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_u += 2 * p * negatives_below + p * q;
        negatives_below += q;
        i = j;
    }
    Ok(grid_ratio(twice_u, 2 * positives * negatives))
}

/// `num / den` rounded half-to-even onto the grid of multiples of 2^-53.
fn grid_ratio(num: u128, den: u128) -> f64 {
    const SCALE: u128 = 1 << 53;
    let scaled = num * SCALE;
    let (mut k, rem) = (scaled / den, scaled % den);
    if 2 * rem > den || (2 * rem == den && k % 2 == 1) {
        k += 1;
    }
    k as f64 / SCALE as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

/// How one source column maps onto model inputs. Built from training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncodedFeature {
    /// Standardized; missing cells take the training mean (zero after scaling).
    Numerical { name: String, mean: f64, scale: f64 },
    /// One-hot over training categories plus a missing indicator. Unseen
    /// categories encode as all zeros.
    Categorical {
        name: String,
        categories: Vec<String>,
    },
}

impl EncodedFeature {
    fn name(&self) -> &str {
        match self {
            EncodedFeature::Numerical { name, .. } | EncodedFeature::Categorical { name, .. } => {
                name
            }
        }
    }

    fn width(&self) -> usize {
        match self {
            EncodedFeature::Numerical { .. } => 1,
            EncodedFeature::Categorical { categories, .. } => categories.len() + 1,
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            EncodedFeature::Numerical { .. } => ColumnKind::Numerical,
            EncodedFeature::Categorical { .. } => ColumnKind::Categorical,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub features: Vec<EncodedFeature>,
}

impl FeatureEncoding {
    pub fn fit(frame: &TabularFrame, label: &str) -> FeatureEncoding {
        let features = frame
            .columns()
            .iter()
            .filter(|c| c.name() != label)
            .map(|c| match c.data() {
                ColumnData::Numerical(v) => {
                    let xs: Vec<f64> = v.iter().flatten().copied().collect();
                    let n = xs.len().max(1) as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                    EncodedFeature::Numerical {
                        name: c.name().to_string(),
                        mean,
                        scale,
                    }
                }
                ColumnData::Categorical(v) => {
                    let cats: BTreeSet<&str> = v.iter().flatten().map(String::as_str).collect();
                    EncodedFeature::Categorical {
                        name: c.name().to_string(),
                        categories: cats.into_iter().map(str::to_string).collect(),
                    }
                }
            })
            .collect();
        FeatureEncoding { features }
    }

    pub fn width(&self) -> usize {
        self.features.iter().map(EncodedFeature::width).sum()
    }

    /// Row-major design matrix.
    pub fn transform(&self, frame: &TabularFrame) -> Result<Vec<f64>> {
        let width = self.width();
        let n = frame.row_count();
        let mut x = vec![0.0; n * width];
        let mut offset = 0;
        for f in &self.features {
            let col = frame
                .column(f.name())
                .ok_or_else(|| Error::SchemaMismatch {
                    column: f.name().to_string(),
                    reason: "feature missing from evaluation frame".into(),
                })?;
            if col.kind() != f.kind() {
                return Err(Error::SchemaMismatch {
                    column: f.name().to_string(),
                    reason: format!("trained as {}, found {}", f.kind(), col.kind()),
                });
            }
            match (f, col.data()) {
                (EncodedFeature::Numerical { mean, scale, .. }, ColumnData::Numerical(v)) => {
                    for (r, cell) in v.iter().enumerate() {
                        x[r * width + offset] = cell.map_or(0.0, |c| (c - mean) / scale);
                    }
                }
                (EncodedFeature::Categorical { categories, .. }, ColumnData::Categorical(v)) => {
                    for (r, cell) in v.iter().enumerate() {
                        let slot = match cell {
                            None => Some(categories.len()),
                            Some(s) => categories.binary_search(s).ok(),
                        };
                        if let Some(k) = slot {
                            x[r * width + offset + k] = 1.0;
                        }
                    }
                }
                _ => unreachable!("kinds checked above"),
            }
            offset += f.width();
        }
        Ok(x)
    }
}

/// Regularized linear log-odds classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub label: String,
    pub encoding: FeatureEncoding,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Binary labels from a numerical {0, 1} or categorical {"0", "1"} column.
pub fn binary_labels(frame: &TabularFrame, label: &str) -> Result<Vec<bool>> {
    let col = frame.require(label)?;
    let bad = |row: usize, value: String| {
        Error::DegenerateLabels(format!("row {row}: label `{value}` is not 0 or 1"))
    };
    match col.data() {
        ColumnData::Numerical(v) => v
            .iter()
            .enumerate()
            .map(|(r, c)| match c {
                Some(x) if *x == 1.0 => Ok(true),
                Some(x) if *x == 0.0 => Ok(false),
                Some(x) => Err(bad(r, x.to_string())),
                None => Err(bad(r, "<missing>".into())),
            })
            .collect(),
        ColumnData::Categorical(v) => v
            .iter()
            .enumerate()
            .map(|(r, c)| match c.as_deref().map(str::trim) {
                Some("1") => Ok(true),
                Some("0") => Ok(false),
                Some(s) => Err(bad(r, s.to_string())),
                None => Err(bad(r, "<missing>".into())),
            })
            .collect(),
    }
}

/// Fits by full-batch gradient descent on the mean log-loss plus
/// `l2 / 2 * |w|^2`.
pub fn train_baseline(
    train: &TabularFrame,
    label: &str,
    config: &TrainConfig,
) -> Result<BaselineModel> {
    config.validate()?;
    let y = binary_labels(train, label)?;
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels(format!(
            "training set has {pos} positives out of {} rows",
            y.len()
        )));
    }
    let encoding = FeatureEncoding::fit(train, label);
    let x = encoding.transform(train)?;
    let width = encoding.width();
    let n = y.len() as f64;

    let mut rng = stream_rng(config.seed, &[]);
    let mut w: Vec<f64> = (0..width)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * z
        })
        .collect();
    let prior = pos as f64 / n;
    let mut b = (prior / (1.0 - prior)).ln();
    let mut grad = vec![0.0; width];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (row, &target) in x.chunks_exact(width.max(1)).zip(&y) {
            let z = b + dot(row, &w);
            let err = sigmoid(z) - if target { 1.0 } else { 0.0 };
            for (g, xi) in grad.iter_mut().zip(row) {
                *g += err * xi;
            }
            grad_b += err;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= config.learning_rate * (g / n + config.l2 * *wi);
        }
        b -= config.learning_rate * grad_b / n;
    }
    Ok(BaselineModel {
        label: label.to_string(),
        encoding,
        weights: w,
        bias: b,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl BaselineModel {
    /// Log-odds scores, one per row.
    pub fn decision_function(&self, frame: &TabularFrame) -> Result<Vec<f64>> {
        let width = self.encoding.width();
        let x = self.encoding.transform(frame)?;
        if width == 0 {
            return Ok(vec![self.bias; frame.row_count()]);
        }
        Ok(x.chunks_exact(width)
            .map(|row| self.bias + dot(row, &self.weights))
            .collect())
    }

    pub fn predict_proba(&self, frame: &TabularFrame) -> Result<Vec<f64>> {
        Ok(self
            .decision_function(frame)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    pub fn auc_on(&self, frame: &TabularFrame) -> Result<f64> {
        if frame.is_empty() {
            return Err(Error::EmptyInput("evaluation frame has no rows".into()));
        }
        let scores = self.decision_function(frame)?;
        auc(&scores, &binary_labels(frame, &self.label)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucPair {
    pub auc_base: f64,
    pub auc_shock: f64,
    pub run_index: usize,
}

/// Base AUC on the pre-shock test set, shock AUC on the shocked test set.
pub fn evaluate_pair(model: &BaselineModel, split: &ShockSplit) -> Result<AucPair> {
    Ok(AucPair {
        auc_base: model.auc_on(&split.test)?,
        auc_shock: model.auc_on(&split.shocked_test)?,
        run_index: split.run_index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAucs {
    pub auc_base_a: f64,
    pub auc_shock_a: f64,
    pub auc_base_b: f64,
    pub auc_shock_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRuns {
    pub outliers_pct: OutlierLevel,
    pub runs: Vec<RunAucs>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRuns {
    pub name: String,
    pub levels: Vec<LevelRuns>,
}

/// Per-run AUCs of models A and B for several models and outlier levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucTable {
    pub ds: f64,
    pub models: Vec<ModelRuns>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunUpliftSummary {
    pub model: String,
    pub outliers_pct: OutlierLevel,
    pub su: Summary,
}

impl AucTable {
    pub fn validate(&self) -> Result<()> {
        if !(self.ds >= 0.0 && self.ds.is_finite()) {
            return Err(Error::Domain(format!(
                "ds must be finite and >= 0, got {}",
                self.ds
            )));
        }
        if self.models.is_empty() {
            return Err(Error::EmptyInput("AUC table lists no models".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if m.levels.is_empty() {
                return Err(Error::EmptyInput(format!(
                    "model `{}` has no levels",
                    m.name
                )));
            }
            for l in &m.levels {
                if !seen.insert((m.name.clone(), l.outliers_pct)) {
                    return Err(Error::DuplicateKey {
                        model: m.name.clone(),
                        level: l.outliers_pct.to_string(),
                    });
                }
                if l.runs.is_empty() {
                    return Err(Error::EmptyInput(format!(
                        "model `{}` level {} has no runs",
                        m.name, l.outliers_pct
                    )));
                }
                for (i, r) in l.runs.iter().enumerate() {
                    for (field, v) in [
                        ("auc_base_a", r.auc_base_a),
                        ("auc_shock_a", r.auc_shock_a),
                        ("auc_base_b", r.auc_base_b),
                        ("auc_shock_b", r.auc_shock_b),
                    ] {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(Error::AucRange {
                                record: format!(
                                    "model `{}` level {} run {i} {field}",
                                    m.name, l.outliers_pct
                                ),
                                value: v,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.models.iter().map(|m| m.levels.len()).sum()
    }

    /// One record per (model, level) holding the median AUC of each series.
    pub fn median_records(&self) -> Result<Vec<UpliftRecord>> {
        let mut out = Vec::with_capacity(self.cell_count());
        for m in &self.models {
            for l in &m.levels {
                let med = |f: fn(&RunAucs) -> f64| -> Result<f64> {
                    Ok(aggregate(&l.runs.iter().map(f).collect::<Vec<_>>())?.median)
                };
                out.push(UpliftRecord {
                    model: m.name.clone(),
                    outliers_pct: l.outliers_pct,
                    auc_base_a: med(|r| r.auc_base_a)?,
                    auc_shock_a: med(|r| r.auc_shock_a)?,
                    auc_base_b: med(|r| r.auc_base_b)?,
                    auc_shock_b: med(|r| r.auc_shock_b)?,
                });
            }
        }
        Ok(out)
    }

    /// Uplift computed run by run, summarized by median and range.
    pub fn per_run_uplift(
        &self,
        coeffs: &UpliftCoefficients,
        epsilon: f64,
    ) -> Result<Vec<RunUpliftSummary>> {
        let mut out = Vec::new();
        for m in &self.models {
            for l in &m.levels {
                let sus = l
                    .runs
                    .iter()
                    .map(|r| {
                        stabilization_uplift(
                            crate::AucPoint::new(r.auc_base_a, r.auc_shock_a),
                            crate::AucPoint::new(r.auc_base_b, r.auc_shock_b),
                            self.ds,
                            coeffs,
                            epsilon,
                        )
                        .map(|b| b.su)
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(RunUpliftSummary {
                    model: m.name.clone(),
                    outliers_pct: l.outliers_pct,
                    su: aggregate(&sus)?,
                });
            }
        }
        Ok(out)
    }
}

pub fn parse_auc_table(text: &str) -> Result<AucTable> {
    let table: AucTable = serde_json::from_str(text)?;
    table.validate()?;
    Ok(table)
}

pub fn import_auc_table(path: impl AsRef<Path>) -> Result<AucTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_auc_table(&text)
}

/// Uplift inputs from either a flat list of per-cell records or a nested
/// per-run AUC table (reduced to medians). The nested form also carries `ds`.
pub fn parse_uplift_input(text: &str) -> Result<(Vec<UpliftRecord>, Option<f64>)> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.is_array() {
        let records: Vec<UpliftRecord> = serde_json::from_value(value)?;
        if records.is_empty() {
            return Err(Error::EmptyInput("no uplift records".into()));
        }
        for (i, r) in records.iter().enumerate() {
            for v in [r.auc_base_a, r.auc_shock_a, r.auc_base_b, r.auc_shock_b] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::AucRange {
                        record: format!("record {i} (model `{}`)", r.model),
                        value: v,
                    });
                }
            }
        }
        Ok((records, None))
    } else {
        let table: AucTable = serde_json::from_value(value)?;
        table.validate()?;
        Ok((table.median_records()?, Some(table.ds)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Column;

    #[test]
    fn auc_examples() {
        assert_eq!(
            auc(&[0.9, 0.8, 0.4, 0.3], &[true, false, true, false]).unwrap(),
            0.75
        );
        assert_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(),
            0.5
        );
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn grid_ratio_rounds_to_even() {
        assert_eq!(
            grid_ratio(1, 3),
            (((1u128 << 53) + 1) / 3) as f64 / (1u64 << 53) as f64
        );
        assert_eq!(grid_ratio(0, 5), 0.0);
        assert_eq!(grid_ratio(5, 5), 1.0);
        let third = grid_ratio(1, 3);
        assert_eq!(grid_ratio(2, 3), 1.0 - third);
    }

    fn toy() -> TabularFrame {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        TabularFrame::new(vec![
            Column::numerical("x", xs.iter().map(|&x| Some(x)).collect()),
            Column::categorical(
                "c",
                (0..40)
                    .map(|i| Some(if i % 3 == 0 { "a" } else { "b" }.to_string()))
                    .collect(),
            ),
            Column::numerical(
                "y",
                xs.iter()
                    .map(|&x| Some(if x >= 5.0 { 1.0 } else { 0.0 }))
                    .collect(),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn separable_data_is_learned() {
        let f = toy();
        let m = train_baseline(&f, "y", &TrainConfig::default()).unwrap();
        assert!(m.auc_on(&f).unwrap() >= 0.99);
        assert_eq!(m, train_baseline(&f, "y", &TrainConfig::default()).unwrap());
        assert_eq!(m.weights.len(), 1 + 3);
    }

    #[test]
    fn single_class_is_rejected() {
        let f = toy().take_rows(&[0, 1, 2]);
        assert!(matches!(
            train_baseline(&f, "y", &TrainConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn evaluation_needs_training_schema() {
        let f = toy();
        let m = train_baseline(&f, "y", &TrainConfig::default()).unwrap();
        let g = f.drop_columns(&["c"]);
        assert!(matches!(m.auc_on(&g), Err(Error::SchemaMismatch { column, .. }) if column == "c"));
        assert!(matches!(
            m.auc_on(&f.take_rows(&[])),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn unseen_and_missing_categories_encode() {
        let enc = FeatureEncoding::fit(&toy(), "y");
        let g = TabularFrame::new(vec![
            Column::numerical("x", vec![None, Some(1.0)]),
            Column::categorical("c", vec![Some("zzz".into()), None]),
        ])
        .unwrap();
        let x = enc.transform(&g).unwrap();
        assert_eq!(&x[0..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&x[5..8], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn auc_table_validation() {
        let good = r#"{"ds":0.1,"models":[{"name":"m","levels":[{"outliers_pct":"without","runs":[
            {"auc_base_a":0.7,"auc_shock_a":0.6,"auc_base_b":0.72,"auc_shock_b":0.65},
            {"auc_base_a":0.8,"auc_shock_a":0.6,"auc_base_b":0.70,"auc_shock_b":0.66}]}]}]}"#;
        let t = parse_auc_table(good).unwrap();
        let recs = t.median_records().unwrap();
        assert_eq!(recs.len(), 1);
        assert!((recs[0].auc_base_a - 0.75).abs() < 1e-15);

        let bad = good.replace("0.72", "1.2");
        assert!(
            matches!(parse_auc_table(&bad), Err(Error::AucRange { record, .. }) if record.contains("auc_base_b"))
        );
        assert!(matches!(
            parse_auc_table(r#"{"ds":0.1,"models":[]}"#),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(parse_auc_table("{"), Err(Error::Json(_))));
    }
}
