//! Grid-search calibration of the uplift slopes against expert anchor points,
//! and the sensitivity sweep that checks conclusions survive other slopes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stability::{
    batch_uplift, rank_order, stabilization_uplift, AucPoint, OutlierLevel, UpliftCoefficients,
    UpliftRecord, UpliftTable,
};

fn default_confidence() -> f64 {
    1.0
}

/// A model pair with the uplift an expert assigns to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub a_base: f64,
    pub a_shock: f64,
    pub b_base: f64,
    pub b_shock: f64,
    pub ds: f64,
    pub target_su: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl AnchorPoint {
    pub fn validate(&self, index: usize) -> Result<()> {
        for (field, v) in [
            ("a_base", self.a_base),
            ("a_shock", self.a_shock),
            ("b_base", self.b_base),
            ("b_shock", self.b_shock),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::AucRange {
                    record: format!("anchor {index} {field}"),
                    value: v,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.ds) {
            return Err(Error::Config(format!(
                "anchor {index}: ds {} outside [0, 1]",
                self.ds
            )));
        }
        if !(-1.0..=1.0).contains(&self.target_su) {
            return Err(Error::Config(format!(
                "anchor {index}: target_su {} outside [-1, 1]",
                self.target_su
            )));
        }
        if !(self.confidence > 0.0 && self.confidence.is_finite()) {
            return Err(Error::Config(format!(
                "anchor {index}: confidence must be > 0, got {}",
                self.confidence
            )));
        }
        Ok(())
    }

    pub fn uplift(&self, coeffs: &UpliftCoefficients, epsilon: f64) -> Result<f64> {
        Ok(stabilization_uplift(
            AucPoint::new(self.a_base, self.a_shock),
            AucPoint::new(self.b_base, self.b_shock),
            self.ds,
            coeffs,
            epsilon,
        )?
        .su)
    }
}

/// Candidate values for each slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientGrid {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub k3: Vec<f64>,
}

impl Default for CoefficientGrid {
    fn default() -> Self {
        CoefficientGrid {
            k1: vec![50.0, 100.0, 200.0],
            k2: vec![500.0, 1000.0, 2000.0],
            k3: vec![500.0, 1000.0, 2000.0],
        }
    }
}

impl CoefficientGrid {
    pub fn single(c: UpliftCoefficients) -> Self {
        CoefficientGrid {
            k1: vec![c.k1],
            k2: vec![c.k2],
            k3: vec![c.k3],
        }
    }

    /// Upper bounds of ten times the default slopes.
    pub fn default_bounds() -> UpliftCoefficients {
        let d = UpliftCoefficients::default();
        UpliftCoefficients {
            k1: 10.0 * d.k1,
            k2: 10.0 * d.k2,
            k3: 10.0 * d.k3,
        }
    }

    /// Replaces axes from text such as `k2=500,1000,2000` or
    /// `k1=50,100,k3=500,1000`. A value containing `=` starts a new axis.
    pub fn set_axis(&mut self, text: &str) -> Result<()> {
        let mut axes: Vec<(&str, Vec<f64>)> = Vec::new();
        for token in text.split(',') {
            let value = match token.split_once('=') {
                Some((name, value)) => {
                    axes.push((name.trim(), Vec::new()));
                    value
                }
                None if axes.is_empty() => {
                    return Err(Error::Config(format!(
                        "grid axis `{text}` is not of the form k1=v,v,..."
                    )))
                }
                None => token,
            };
            let v = value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("grid value `{value}` is not a number")))?;
            axes.last_mut().expect("axis started").1.push(v);
        }
        for (name, values) in axes {
            match name {
                "k1" => self.k1 = values,
                "k2" => self.k2 = values,
                "k3" => self.k3 = values,
                other => return Err(Error::Config(format!("unknown grid axis `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.k1.len() * self.k2.len() * self.k3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, bounds: &UpliftCoefficients) -> Result<()> {
        for (name, axis, bound) in [
            ("k1", &self.k1, bounds.k1),
            ("k2", &self.k2, bounds.k2),
            ("k3", &self.k3, bounds.k3),
        ] {
            if axis.is_empty() {
                return Err(Error::Config(format!("grid axis {name} is empty")));
            }
            if let Some(v) = axis.iter().find(|&&v| !(v > 0.0 && v <= bound)) {
                return Err(Error::Config(format!(
                    "{name} candidate {v} outside (0, {bound}]"
                )));
            }
        }
        Ok(())
    }

    /// Every combination, in lexicographic (k1, k2, k3) order with each
    /// axis sorted ascending and deduplicated.
    pub fn points(&self) -> Vec<UpliftCoefficients> {
        let axis = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (k1s, k2s, k3s) = (axis(&self.k1), axis(&self.k2), axis(&self.k3));
        let mut out = Vec::with_capacity(k1s.len() * k2s.len() * k3s.len());
        for &k1 in &k1s {
            for &k2 in &k2s {
                for &k3 in &k3s {
                    out.push(UpliftCoefficients { k1, k2, k3 });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub coeffs: UpliftCoefficients,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub coeffs: UpliftCoefficients,
    pub objective: f64,
    pub grid_trace: Vec<GridEvaluation>,
}

/// Confidence-weighted mean squared gap between the uplift at `coeffs` and
/// each anchor's target.
pub fn objective(
    anchors: &[AnchorPoint],
    coeffs: &UpliftCoefficients,
    epsilon: f64,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for a in anchors {
        let gap = a.uplift(coeffs, epsilon)? - a.target_su;
        num += a.confidence * gap * gap;
        den += a.confidence;
    }
    Ok(num / den)
}

/// Exhaustive search over `grid`. Ties go to the smallest (k1, k2, k3).
pub fn calibrate(
    anchors: &[AnchorPoint],
    grid: &CoefficientGrid,
    bounds: &UpliftCoefficients,
    epsilon: f64,
) -> Result<CalibrationResult> {
    if anchors.is_empty() {
        return Err(Error::Config(
            "calibration needs at least one anchor".into(),
        ));
    }
    for (i, a) in anchors.iter().enumerate() {
        a.validate(i)?;
    }
    grid.validate(bounds)?;
    let grid_trace = grid
        .points()
        .into_par_iter()
        .map(|coeffs| {
            Ok(GridEvaluation {
                objective: objective(anchors, &coeffs, epsilon)?,
                coeffs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // The trace is in ascending coefficient order, so the first strict
    // minimum is the smallest tied point.
    let best = grid_trace
        .iter()
        .fold(None::<&GridEvaluation>, |best, e| match best {
            Some(b) if b.objective <= e.objective => Some(b),
            _ => Some(e),
        })
        .expect("validated grid is nonempty");
    Ok(CalibrationResult {
        coeffs: best.coeffs,
        objective: best.objective,
        grid_trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub model: String,
    pub level: OutlierLevel,
    pub su_default: f64,
    pub sign_default: Sign,
    /// Sweep points at which the sign of the uplift differs from the default.
    pub sign_flips: Vec<UpliftCoefficients>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepModel {
    pub model: String,
    pub argmax_default: OutlierLevel,
    /// Sweep points at which another level has the largest uplift.
    pub argmax_changes: Vec<(UpliftCoefficients, OutlierLevel)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub ds: f64,
    pub points: Vec<UpliftCoefficients>,
    pub cells: Vec<SweepCell>,
    pub models: Vec<SweepModel>,
    pub all_signs_preserved: bool,
    pub all_argmax_preserved: bool,
}

/// Level with the largest raw uplift for each model; ties go to the lower level.
fn argmax_levels(table: &UpliftTable) -> BTreeMap<String, OutlierLevel> {
    let mut best: BTreeMap<String, (f64, OutlierLevel)> = BTreeMap::new();
    for c in &table.cells {
        let Some(b) = &c.breakdown else { continue };
        let entry = best.entry(c.model.clone()).or_insert((b.su, c.level));
        if rank_order((b.su, c.level, &c.model), (entry.0, entry.1, &c.model)).is_lt() {
            *entry = (b.su, c.level);
        }
    }
    best.into_iter().map(|(m, (_, l))| (m, l)).collect()
}

/// Recomputes the uplift grid at every sweep point and compares each cell's
/// sign and each model's best outlier level with those at the default slopes.
pub fn sensitivity_sweep(
    records: &[UpliftRecord],
    ds: f64,
    sweep: &CoefficientGrid,
    epsilon: f64,
) -> Result<SweepReport> {
    if sweep.is_empty() {
        return Err(Error::Config(
            "sensitivity sweep needs at least one point".into(),
        ));
    }
    let reference = batch_uplift(records, ds, &UpliftCoefficients::default(), epsilon)?;
    let points = sweep.points();
    let tables = points
        .par_iter()
        .map(|c| batch_uplift(records, ds, c, epsilon))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for (i, c) in reference.cells.iter().enumerate() {
        let Some(b) = &c.breakdown else { continue };
        let sign_default = Sign::of(b.su);
        let sign_flips = points
            .iter()
            .zip(&tables)
            .filter(|(_, t)| t.cells[i].breakdown.map(|x| Sign::of(x.su)) != Some(sign_default))
            .map(|(p, _)| *p)
            .collect();
        cells.push(SweepCell {
            model: c.model.clone(),
            level: c.level,
            su_default: b.su,
            sign_default,
            sign_flips,
        });
    }

    let default_best = argmax_levels(&reference);
    let swept_best: Vec<BTreeMap<String, OutlierLevel>> =
        tables.iter().map(argmax_levels).collect();
    let models: Vec<SweepModel> = reference
        .models
        .iter()
        .map(|m| {
            let argmax_default = default_best[m];
            let argmax_changes = points
                .iter()
                .zip(&swept_best)
                .filter_map(|(p, best)| {
                    let l = best[m];
                    (l != argmax_default).then_some((*p, l))
                })
                .collect();
            SweepModel {
                model: m.clone(),
                argmax_default,
                argmax_changes,
            }
        })
        .collect();

    Ok(SweepReport {
        ds,
        all_signs_preserved: cells.iter().all(|c| c.sign_flips.is_empty()),
        all_argmax_preserved: models.iter().all(|m| m.argmax_changes.is_empty()),
        points,
        cells,
        models,
    })
}
