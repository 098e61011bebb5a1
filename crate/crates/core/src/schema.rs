//! Per-column summary statistics.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{canonical_bits, ColumnData, ColumnKind, TabularFrame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaReport {
    pub row_count: usize,
    pub columns: Vec<ColumnSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub missing_count: usize,
    pub unique_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub numerical: Option<NumericalSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub categorical: Option<CategoricalSummary>,
}

/// Moments use the sample (n - 1) standard deviation and the adjusted
/// Fisher-Pearson skewness and excess kurtosis. Undefined moments are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericalSummary {
    pub mean: f64,
    pub std: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSummary {
    pub top: String,
    pub top_frequency: usize,
    pub percent_top: f64,
}

pub fn detect_schema(frame: &TabularFrame) -> Result<SchemaReport> {
    if frame.column_count() == 0 || frame.is_empty() {
        return Err(Error::EmptyInput("frame has no rows or columns".into()));
    }
    let columns = frame
        .columns()
        .iter()
        .map(|col| {
            let missing_count = col.missing_count();
            if missing_count == col.len() {
                return Err(Error::Undeterminable(col.name().to_string()));
            }
            let (unique_count, numerical, categorical) = match col.data() {
                ColumnData::Numerical(v) => {
                    let mut xs: Vec<f64> = v.iter().flatten().copied().collect();
                    xs.sort_by(f64::total_cmp);
                    let unique = xs
                        .iter()
                        .map(|&x| canonical_bits(x))
                        .collect::<HashSet<_>>();
                    (unique.len(), Some(summarize_sorted(&xs)), None)
                }
                ColumnData::Categorical(v) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for s in v.iter().flatten() {
                        *counts.entry(s.as_str()).or_default() += 1;
                    }
                    let present: usize = counts.values().sum();
                    // BTreeMap iteration is sorted, so the first maximum is the
                    // lexicographically smallest top category.
                    let (top, top_frequency) =
                        counts.iter().fold(
                            ("", 0usize),
                            |best, (k, &n)| if n > best.1 { (k, n) } else { best },
                        );
                    let summary = CategoricalSummary {
                        top: top.to_string(),
                        top_frequency,
                        percent_top: 100.0 * top_frequency as f64 / present as f64,
                    };
                    (counts.len(), None, Some(summary))
                }
            };
            Ok(ColumnSummary {
                name: col.name().to_string(),
                kind: col.kind(),
                missing_count,
                unique_count,
                numerical,
                categorical,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SchemaReport {
        row_count: frame.row_count(),
        columns,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        xs[lo]
    } else {
        xs[lo] + (xs[hi] - xs[lo]) * frac
    }
}

// Sums run over sorted data so results do not depend on row order.
fn summarize_sorted(xs: &[f64]) -> NumericalSummary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (xs.len() >= 2).then(|| (m2 / (n - 1.0)).sqrt());
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let skewness = (xs.len() >= 3 && m2 > 0.0).then(|| {
        let g1 = m3 / m2.powf(1.5);
        (n * (n - 1.0)).sqrt() / (n - 2.0) * g1
    });
    let kurtosis = (xs.len() >= 4 && m2 > 0.0).then(|| {
        let g2 = m4 / (m2 * m2) - 3.0;
        ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0))
    });
    let q25 = quantile_sorted(xs, 0.25);
    let q75 = quantile_sorted(xs, 0.75);
    NumericalSummary {
        mean,
        std,
        skewness,
        kurtosis,
        min: xs[0],
        q25,
        median: quantile_sorted(xs, 0.5),
        q75,
        max: xs[xs.len() - 1],
        iqr: q75 - q25,
    }
}
