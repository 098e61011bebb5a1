//! Stabilization Score and Stabilization Uplift.
//!
//! The score of one model is `1 - |A_base - A_shock| / (1 + ln(1 + ds + eps))`
//! computed on flipped AUCs (`max(a, 1 - a)`), so it lies in `[0.5, 1]`.
//!
//! The uplift of model B over model A combines four logistic weights:
//!
//! ```text
//! w_A   = s(k1 * (shock_A - base_A))
//! w_B   = s(k1 * (shock_B - base_B))
//! w     = s(k2 * (shock_B - shock_A))
//! w_sup = s(k3 * ((base_B - base_A) + (shock_B - shock_A)))
//! SU    = w * (w_B * w_sup * SS_B - w_A * (1 - w_sup) * SS_A)
//! ```
//!
//! where `s(x) = 1 - 1 / (1 + exp(x))`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::format_number;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Exponent magnitude beyond which the logistic weight saturates to 0 or 1.
pub const LOGISTIC_SATURATION: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpliftCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for UpliftCoefficients {
    fn default() -> Self {
        UpliftCoefficients {
            k1: 100.0,
            k2: 1000.0,
            k3: 1000.0,
        }
    }
}

impl UpliftCoefficients {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        let c = UpliftCoefficients { k1, k2, k3 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("k1", self.k1), ("k2", self.k2), ("k3", self.k3)] {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and > 0, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// AUC of one model before and after the shock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucPoint {
    pub base: f64,
    pub shock: f64,
}

impl AucPoint {
    pub fn new(base: f64, shock: f64) -> Self {
        AucPoint { base, shock }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub auc_base: f64,
    pub auc_shock: f64,
    pub ds: f64,
    pub epsilon: f64,
    pub ss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpliftBreakdown {
    pub w_a: f64,
    pub w_b: f64,
    pub w: f64,
    pub w_sup: f64,
    pub w_a_adj: f64,
    pub w_b_adj: f64,
    pub ss_a: f64,
    pub ss_b: f64,
    pub su: f64,
}

/// Reflects AUCs below one half, so label-inverted models count as informative.
pub fn flip_auc(a: f64) -> Result<f64> {
    check_auc(a)?;
    Ok(if a < 0.5 { 1.0 - a } else { a })
}

fn check_auc(a: f64) -> Result<()> {
    if (0.0..=1.0).contains(&a) {
        Ok(())
    } else {
        Err(Error::Domain(format!("AUC {a} outside [0, 1]")))
    }
}

fn check_ds(ds: f64) -> Result<()> {
    if ds >= 0.0 && ds.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "distribution shift must be finite and >= 0, got {ds}"
        )))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )))
    }
}

/// `1 - 1 / (1 + exp(x))`, saturating beyond `|x| > 700`.
///
/// Evaluated as `1 / (1 + exp(-x))` or `exp(x) / (1 + exp(x))` depending on
/// the sign of `x`, which avoids cancellation for small weights.
pub fn logistic_weight(x: f64) -> f64 {
    if x > LOGISTIC_SATURATION {
        1.0
    } else if x < -LOGISTIC_SATURATION {
        0.0
    } else if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn stabilization_score(
    auc_base: f64,
    auc_shock: f64,
    ds: f64,
    epsilon: f64,
) -> Result<StabilityRecord> {
    let base = flip_auc(auc_base)?;
    let shock = flip_auc(auc_shock)?;
    check_ds(ds)?;
    check_epsilon(epsilon)?;
    let ss = score_flipped(base, shock, ds, epsilon);
    Ok(StabilityRecord {
        auc_base,
        auc_shock,
        ds,
        epsilon,
        ss,
    })
}

fn score_flipped(base: f64, shock: f64, ds: f64, epsilon: f64) -> f64 {
    1.0 - (base - shock).abs() / (1.0 + (1.0 + ds + epsilon).ln())
}

pub fn stabilization_uplift(
    a: AucPoint,
    b: AucPoint,
    ds: f64,
    coeffs: &UpliftCoefficients,
    epsilon: f64,
) -> Result<UpliftBreakdown> {
    coeffs.validate()?;
    check_ds(ds)?;
    check_epsilon(epsilon)?;
    let (a_base, a_shock) = (flip_auc(a.base)?, flip_auc(a.shock)?);
    let (b_base, b_shock) = (flip_auc(b.base)?, flip_auc(b.shock)?);

    let w_a = logistic_weight(coeffs.k1 * (a_shock - a_base));
    let w_b = logistic_weight(coeffs.k1 * (b_shock - b_base));
    let w = logistic_weight(coeffs.k2 * (b_shock - a_shock));
    let w_sup = logistic_weight(coeffs.k3 * ((b_base - a_base) + (b_shock - a_shock)));
    let w_b_adj = w_b * w_sup;
    let w_a_adj = w_a * (1.0 - w_sup);
    let ss_a = score_flipped(a_base, a_shock, ds, epsilon);
    let ss_b = score_flipped(b_base, b_shock, ds, epsilon);
    let su = w * (w_b_adj * ss_b - w_a_adj * ss_a);
    Ok(UpliftBreakdown {
        w_a,
        w_b,
        w,
        w_sup,
        w_a_adj,
        w_b_adj,
        ss_a,
        ss_b,
        su,
    })
}

/// Uplift as shown in result tables: negative values display as zero.
pub fn display_uplift(su: f64) -> f64 {
    su.max(0.0)
}

/// Outlier share of the synthetic training data, or `Without` for synthetic
/// rows with no injected outliers.
#[derive(Clone, Copy, Debug)]
pub enum OutlierLevel {
    Without,
    Percent(f64),
}

impl OutlierLevel {
    pub fn fraction(&self) -> f64 {
        match self {
            OutlierLevel::Without => 0.0,
            OutlierLevel::Percent(p) => p / 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OutlierLevel::Percent(p) if !(0.0..=100.0).contains(p) => Err(Error::Config(format!(
                "outlier percentage {p} outside [0, 100]"
            ))),
            _ => Ok(()),
        }
    }
}

impl PartialEq for OutlierLevel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for OutlierLevel {}

impl PartialOrd for OutlierLevel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OutlierLevel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (OutlierLevel::Without, OutlierLevel::Without) => Equal,
            (OutlierLevel::Without, _) => Less,
            (_, OutlierLevel::Without) => Greater,
            (OutlierLevel::Percent(a), OutlierLevel::Percent(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for OutlierLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutlierLevel::Without => f.write_str("without"),
            OutlierLevel::Percent(p) => f.write_str(&format_number(*p)),
        }
    }
}

impl std::str::FromStr for OutlierLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("without") || s.eq_ignore_ascii_case("w/o") {
            return Ok(OutlierLevel::Without);
        }
        let p: f64 = s
            .trim_end_matches('%')
            .parse()
            .map_err(|_| Error::Config(format!("invalid outlier level `{s}`")))?;
        let level = OutlierLevel::Percent(p);
        level.validate()?;
        Ok(level)
    }
}

impl Serialize for OutlierLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OutlierLevel::Without => serializer.serialize_str("without"),
            OutlierLevel::Percent(p) => serializer.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for OutlierLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let level = match Raw::deserialize(deserializer)? {
            Raw::Num(p) => OutlierLevel::Percent(p),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        level.validate().map_err(serde::de::Error::custom)?;
        Ok(level)
    }
}

/// One (model, outlier level) cell of an uplift grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpliftRecord {
    pub model: String,
    pub outliers_pct: OutlierLevel,
    pub auc_base_a: f64,
    pub auc_shock_a: f64,
    pub auc_base_b: f64,
    pub auc_shock_b: f64,
}

impl UpliftRecord {
    pub fn a(&self) -> AucPoint {
        AucPoint::new(self.auc_base_a, self.auc_shock_a)
    }

    pub fn b(&self) -> AucPoint {
        AucPoint::new(self.auc_base_b, self.auc_shock_b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpliftCell {
    pub model: String,
    pub level: OutlierLevel,
    pub breakdown: Option<UpliftBreakdown>,
    /// `su` clamped at zero, as shown in tables.
    pub su_display: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCell {
    pub rank: usize,
    pub model: String,
    pub level: OutlierLevel,
    pub su_display: f64,
}

/// Uplift grid with rows = outlier levels and columns = models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpliftTable {
    pub ds: f64,
    pub coeffs: UpliftCoefficients,
    pub epsilon: f64,
    pub models: Vec<String>,
    pub levels: Vec<OutlierLevel>,
    /// Row-major: `cells[level_idx * models.len() + model_idx]`.
    pub cells: Vec<UpliftCell>,
    pub top: Vec<RankedCell>,
}

impl UpliftTable {
    pub fn cell(&self, model: &str, level: OutlierLevel) -> Option<&UpliftCell> {
        let mi = self.models.iter().position(|m| m == model)?;
        let li = self.levels.iter().position(|l| *l == level)?;
        self.cells.get(li * self.models.len() + mi)
    }

    /// Tab-separated grid of displayed uplift values, four decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("outliers_pct");
        for m in &self.models {
            out.push('\t');
            out.push_str(m);
        }
        out.push('\n');
        for (li, level) in self.levels.iter().enumerate() {
            out.push_str(&level.to_string());
            for mi in 0..self.models.len() {
                out.push('\t');
                match self.cells[li * self.models.len() + mi].su_display {
                    Some(v) => out.push_str(&format!("{v:.4}")),
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Orders cells for "best uplift" selection: higher value first, then lower
/// outlier level, then model name.
pub fn rank_order(
    a: (f64, OutlierLevel, &str),
    b: (f64, OutlierLevel, &str),
) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.cmp(&b.1))
        .then_with(|| a.2.cmp(b.2))
}

pub fn batch_uplift(
    records: &[UpliftRecord],
    ds: f64,
    coeffs: &UpliftCoefficients,
    epsilon: f64,
) -> Result<UpliftTable> {
    coeffs.validate()?;
    let mut models: Vec<String> = Vec::new();
    let mut index: BTreeMap<(String, OutlierLevel), usize> = BTreeMap::new();
    let mut levels: BTreeMap<OutlierLevel, ()> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        r.outliers_pct.validate()?;
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        levels.insert(r.outliers_pct, ());
        if index.insert((r.model.clone(), r.outliers_pct), i).is_some() {
            return Err(Error::DuplicateKey {
                model: r.model.clone(),
                level: r.outliers_pct.to_string(),
            });
        }
    }
    let levels: Vec<OutlierLevel> = levels.into_keys().collect();
    let keys: Vec<(OutlierLevel, &String)> = levels
        .iter()
        .flat_map(|l| models.iter().map(move |m| (*l, m)))
        .collect();
    let cells = keys
        .par_iter()
        .map(|(level, model)| {
            let breakdown = match index.get(&((*model).clone(), *level)) {
                Some(&i) => {
                    let r = &records[i];
                    Some(stabilization_uplift(r.a(), r.b(), ds, coeffs, epsilon)?)
                }
                None => None,
            };
            Ok(UpliftCell {
                model: (*model).clone(),
                level: *level,
                su_display: breakdown.map(|b| display_uplift(b.su)),
                breakdown,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranked: Vec<&UpliftCell> = cells.iter().filter(|c| c.su_display.is_some()).collect();
    ranked.sort_by(|a, b| {
        rank_order(
            (a.su_display.unwrap_or(0.0), a.level, &a.model),
            (b.su_display.unwrap_or(0.0), b.level, &b.model),
        )
    });
    let top = ranked
        .iter()
        .take(3)
        .enumerate()
        .map(|(i, c)| RankedCell {
            rank: i + 1,
            model: c.model.clone(),
            level: c.level,
            su_display: c.su_display.unwrap_or(0.0),
        })
        .collect();
    Ok(UpliftTable {
        ds,
        coeffs: *coeffs,
        epsilon,
        models,
        levels,
        cells,
        top,
    })
}
