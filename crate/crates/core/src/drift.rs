//! Per-feature distribution distances and their mean, the distribution shift.
//!
//! Categorical features use the total variation distance between empirical
//! category frequencies; numerical features use the two-sample
//! Kolmogorov-Smirnov statistic. A shift at or above `tau` is a shock.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ColumnData, ColumnKind, TabularFrame};

pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnShift {
    pub name: String,
    pub kind: ColumnKind,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub per_column: Vec<ColumnShift>,
    pub ds: f64,
    pub tau: f64,
    pub is_shock: bool,
}

/// Total variation distance between the empirical category frequencies of
/// two samples, over the union of observed categories.
pub fn tv_distance<S: AsRef<str>>(p: &[S], q: &[S]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyColumn("<categorical sample>".into()));
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in p {
        counts.entry(s.as_ref()).or_default().0 += 1;
    }
    for s in q {
        counts.entry(s.as_ref()).or_default().1 += 1;
    }
    let (np, nq) = (p.len() as f64, q.len() as f64);
    let total: f64 = counts
        .values()
        .map(|&(a, b)| (a as f64 / np - b as f64 / nq).abs())
        .sum();
    Ok((0.5 * total).min(1.0))
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the two
/// empirical CDFs, evaluated at every pooled sample point.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyColumn("<numerical sample>".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in numerical sample".into()));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < n && j < m {
        // Step both CDFs past every copy of the smallest remaining value.
        let t = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        best = best.max(gap);
    }
    Ok(best)
}

/// Distance between the non-missing cells of one column in two frames.
pub fn column_distance(base: &ColumnData, shock: &ColumnData, name: &str) -> Result<f64> {
    let empty = || Error::EmptyColumn(name.to_string());
    match (base, shock) {
        (ColumnData::Numerical(a), ColumnData::Numerical(b)) => {
            let a: Vec<f64> = a.iter().flatten().copied().collect();
            let b: Vec<f64> = b.iter().flatten().copied().collect();
            if a.is_empty() || b.is_empty() {
                return Err(empty());
            }
            ks_statistic(&a, &b)
        }
        (ColumnData::Categorical(a), ColumnData::Categorical(b)) => {
            let a: Vec<&str> = a.iter().flatten().map(String::as_str).collect();
            let b: Vec<&str> = b.iter().flatten().map(String::as_str).collect();
            if a.is_empty() || b.is_empty() {
                return Err(empty());
            }
            tv_distance(&a, &b)
        }
        _ => Err(Error::SchemaMismatch {
            column: name.to_string(),
            reason: format!("kind {} vs {}", base.kind(), shock.kind()),
        }),
    }
}

/// Mean per-feature distance between a baseline and a shocked frame.
///
/// Columns listed in `excluded` are skipped on both sides. The remaining
/// column sets must match by name and kind. Columns are visited in sorted
/// name order; with no columns left the shift is `0.0`.
pub fn distribution_shift<S: AsRef<str>>(
    base: &TabularFrame,
    shock: &TabularFrame,
    tau: f64,
    excluded: &[S],
) -> Result<DriftReport> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!(
            "tau must be finite and >= 0, got {tau}"
        )));
    }
    let excluded: BTreeSet<&str> = excluded.iter().map(AsRef::as_ref).collect();
    let base_names: BTreeSet<&str> = base
        .column_names()
        .filter(|n| !excluded.contains(n))
        .collect();
    let shock_names: BTreeSet<&str> = shock
        .column_names()
        .filter(|n| !excluded.contains(n))
        .collect();
    if let Some(missing) = base_names.symmetric_difference(&shock_names).next() {
        return Err(Error::SchemaMismatch {
            column: missing.to_string(),
            reason: "column present in only one frame".into(),
        });
    }
    let per_column = base_names
        .iter()
        .map(|&name| {
            let a = base.require(name)?;
            let b = shock.require(name)?;
            let distance = column_distance(a.data(), b.data(), name)?;
            Ok(ColumnShift {
                name: name.to_string(),
                kind: a.kind(),
                distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = if per_column.is_empty() {
        0.0
    } else {
        per_column.iter().map(|c| c.distance).sum::<f64>() / per_column.len() as f64
    };
    Ok(DriftReport {
        per_column,
        ds,
        tau,
        is_shock: ds >= tau,
    })
}
