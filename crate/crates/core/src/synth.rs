//! Synthetic rows with a controlled share of extreme-value tail outliers.
//!
//! A [`FittedGenerator`] holds per-feature marginals, a regularized covariance
//! over numerical features and frequency tables for categorical features.
//! Body rows come from the multivariate normal with the fitted mean and
//! covariance. Tail rows start from the same correlated Gaussian draw; the
//! coordinate with the largest standardized deviation is then replaced by a
//! draw from the selected extreme-value family placed beyond
//! `tail_sigma` standard deviations, and the remaining coordinates move by
//! their regression on that coordinate so the row stays covariance-consistent.
//!
//! Every row uses its own counter-derived random stream, so output does not
//! depend on thread scheduling.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Column, ColumnData, TabularFrame};
use crate::rng::stream_rng;

pub const DEFAULT_TAIL_SIGMA: f64 = 3.0;
/// Ridge added to the covariance diagonal, relative to `trace / dim`.
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;
pub const WEIBULL_SHAPE: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvtFamily {
    Normal,
    Laplace,
    Gumbel,
    Weibull,
    Levy,
}

impl fmt::Display for EvtFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvtFamily::Normal => "normal",
            EvtFamily::Laplace => "laplace",
            EvtFamily::Gumbel => "gumbel",
            EvtFamily::Weibull => "weibull",
            EvtFamily::Levy => "levy",
        })
    }
}

impl std::str::FromStr for EvtFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(EvtFamily::Normal),
            "laplace" => Ok(EvtFamily::Laplace),
            "gumbel" => Ok(EvtFamily::Gumbel),
            "weibull" => Ok(EvtFamily::Weibull),
            "levy" | "lévy" => Ok(EvtFamily::Levy),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

impl EvtFamily {
    pub const ALL: [EvtFamily; 5] = [
        EvtFamily::Normal,
        EvtFamily::Laplace,
        EvtFamily::Gumbel,
        EvtFamily::Weibull,
        EvtFamily::Levy,
    ];

    /// Distance from the mean in units of the marginal standard deviation,
    /// always strictly greater than `s`.
    fn tail_magnitude<R: Rng + ?Sized>(self, s: f64, rng: &mut R) -> f64 {
        loop {
            let t = match self {
                EvtFamily::Normal => normal_tail(s, rng),
                EvtFamily::Laplace => {
                    let e: f64 = Exp1.sample(rng);
                    s * (1.0 + e)
                }
                EvtFamily::Gumbel => {
                    // Standard Gumbel conditioned on exceeding 1, by inverse CDF.
                    let lo = (-(-1.0f64).exp()).exp();
                    let u: f64 = rng.random_range(lo..1.0);
                    s * -(-u.ln()).ln()
                }
                EvtFamily::Weibull => {
                    let e: f64 = Exp1.sample(rng);
                    s * (1.0 + e).powf(1.0 / WEIBULL_SHAPE)
                }
                EvtFamily::Levy => {
                    // Levy(0, s) exceeds s exactly when the underlying |Z| < 1.
                    let z = loop {
                        let z: f64 = StandardNormal.sample(rng);
                        if z != 0.0 && z.abs() < 1.0 {
                            break z;
                        }
                    };
                    s / (z * z)
                }
            };
            if t > s && t.is_finite() {
                return t;
            }
        }
    }

    fn direction<R: Rng + ?Sized>(self, base_sign: f64, rng: &mut R) -> f64 {
        match self {
            EvtFamily::Normal | EvtFamily::Laplace => base_sign,
            EvtFamily::Gumbel | EvtFamily::Weibull => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
            EvtFamily::Levy => 1.0,
        }
    }
}

/// Standard normal conditioned on `|z| > a`, magnitude only (exponential
/// proposal with rejection).
fn normal_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / alpha;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
            return z;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub family: EvtFamily,
    pub outlier_fraction: f64,
    #[serde(default = "default_tail_sigma")]
    pub tail_sigma: f64,
    pub total_rows: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nonneg_columns: Vec<String>,
}

fn default_tail_sigma() -> f64 {
    DEFAULT_TAIL_SIGMA
}

impl OutlierSpec {
    pub fn new(family: EvtFamily, outlier_fraction: f64, total_rows: usize, seed: u64) -> Self {
        OutlierSpec {
            family,
            outlier_fraction,
            tail_sigma: DEFAULT_TAIL_SIGMA,
            total_rows,
            seed,
            nonneg_columns: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!(
                "outlier_fraction must lie in [0, 1], got {}",
                self.outlier_fraction
            )));
        }
        if !(self.tail_sigma > 0.0 && self.tail_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "tail_sigma must be > 0, got {}",
                self.tail_sigma
            )));
        }
        if self.total_rows == 0 {
            return Err(Error::Config("total_rows must be positive".into()));
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.total_rows as f64).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalTable {
    pub name: String,
    pub categories: Vec<String>,
    pub counts: Vec<usize>,
}

impl CategoricalTable {
    pub fn frequency(&self, category: &str) -> f64 {
        let total: usize = self.counts.iter().sum();
        self.categories
            .iter()
            .position(|c| c == category)
            .map_or(0.0, |i| self.counts[i] as f64 / total as f64)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: usize = self.counts.iter().sum();
        let mut pick = rng.random_range(0..total);
        for (i, &c) in self.counts.iter().enumerate() {
            if pick < c {
                return i;
            }
            pick -= c;
        }
        self.counts.len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Numerical(usize),
    Categorical(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct FittedGenerator {
    names: Vec<String>,
    slots: Vec<Slot>,
    marginals: Vec<Marginal>,
    raw_covariance: DMatrix<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    ridge: f64,
    tables: Vec<CategoricalTable>,
}

impl FittedGenerator {
    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// Covariance before the ridge.
    pub fn raw_covariance(&self) -> &DMatrix<f64> {
        &self.raw_covariance
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Relative variance inflation applied to every numerical column.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn tables(&self) -> &[CategoricalTable] {
        &self.tables
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    /// True when every numerical standard deviation is zero.
    pub fn is_degenerate(&self) -> bool {
        self.marginals.iter().all(|m| m.std == 0.0)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn covariance_of(rows: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    DMatrix::from_fn(dim, dim, |i, j| {
        rows.iter()
            .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
            .sum::<f64>()
            / (n - 1.0)
    })
}

/// Fits marginals, covariance and category frequencies.
///
/// The covariance uses rows complete in every numerical column, falling back
/// to pairwise-complete estimates when fewer than two such rows exist. The
/// ridge is applied on the correlation scale: each variance is inflated by the
/// factor `1 + ridge`, where `ridge` starts at `regularization` and is raised
/// further if needed to make the matrix positive semidefinite. Columns on very
/// different scales are therefore regularized alike.
pub fn fit(train: &TabularFrame, regularization: f64) -> Result<FittedGenerator> {
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::Config(format!(
            "regularization must be >= 0, got {regularization}"
        )));
    }
    if train.row_count() < 2 || train.column_count() == 0 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 rows and 1 column, got {} x {}",
            train.row_count(),
            train.column_count()
        )));
    }
    let mut names = Vec::new();
    let mut slots = Vec::new();
    let mut marginals = Vec::new();
    let mut numeric: Vec<&[Option<f64>]> = Vec::new();
    let mut tables = Vec::new();
    for col in train.columns() {
        names.push(col.name().to_string());
        match col.data() {
            ColumnData::Numerical(v) => {
                let xs: Vec<f64> = v.iter().flatten().copied().collect();
                if xs.len() < 2 {
                    return Err(Error::InsufficientData(format!(
                        "column `{}` has {} non-missing values",
                        col.name(),
                        xs.len()
                    )));
                }
                let (mean, std) = mean_std(&xs);
                slots.push(Slot::Numerical(marginals.len()));
                marginals.push(Marginal {
                    name: col.name().to_string(),
                    mean,
                    std,
                });
                numeric.push(v);
            }
            ColumnData::Categorical(v) => {
                let mut counts = std::collections::BTreeMap::<&str, usize>::new();
                for s in v.iter().flatten() {
                    *counts.entry(s).or_default() += 1;
                }
                if counts.is_empty() {
                    return Err(Error::InsufficientData(format!(
                        "column `{}` has no values",
                        col.name()
                    )));
                }
                slots.push(Slot::Categorical(tables.len()));
                tables.push(CategoricalTable {
                    name: col.name().to_string(),
                    categories: counts.keys().map(|s| s.to_string()).collect(),
                    counts: counts.values().copied().collect(),
                });
            }
        }
    }

    let dim = numeric.len();
    let complete: Vec<Vec<f64>> = (0..train.row_count())
        .filter_map(|r| numeric.iter().map(|c| c[r]).collect::<Option<Vec<f64>>>())
        .collect();
    let raw = if complete.len() >= 2 || dim == 0 {
        covariance_of(&complete, dim)
    } else {
        DMatrix::from_fn(dim, dim, |i, j| {
            let pairs: Vec<Vec<f64>> = (0..train.row_count())
                .filter_map(|r| Some(vec![numeric[i][r]?, numeric[j][r]?]))
                .collect();
            if pairs.len() < 2 {
                0.0
            } else {
                covariance_of(&pairs, 2)[(0, 1)]
            }
        })
    };

    let scale: Vec<f64> = (0..dim).map(|j| raw[(j, j)].max(0.0).sqrt()).collect();
    let mut ridge = regularization;
    if dim > 0 {
        let corr = DMatrix::from_fn(dim, dim, |i, j| {
            if scale[i] > 0.0 && scale[j] > 0.0 {
                raw[(i, j)] / (scale[i] * scale[j])
            } else {
                0.0
            }
        });
        let min_eig = SymmetricEigen::new(corr).eigenvalues.min();
        if min_eig + ridge < 0.0 {
            ridge = -min_eig + ridge.max(f64::EPSILON * dim as f64);
        }
    }
    let covariance = &raw
        + DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                ridge * scale[i] * scale[i]
            } else {
                0.0
            }
        });
    let factor = sampling_factor(&covariance);
    Ok(FittedGenerator {
        names,
        slots,
        marginals,
        raw_covariance: raw,
        covariance,
        factor,
        ridge,
        tables,
    })
}

/// Lower-triangular Cholesky factor, or the symmetric square root when the
/// matrix is only semidefinite.
fn sampling_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(cov.clone());
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Body,
    Tail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBatch {
    pub frame: TabularFrame,
    pub outlier_mask: Vec<bool>,
    pub provenance: Vec<Provenance>,
    /// Fitted marginals the tail rule refers to.
    pub marginals: Vec<Marginal>,
}

impl SyntheticBatch {
    pub fn outlier_rows(&self) -> Vec<usize> {
        self.outlier_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

/// Sidecar describing which generated rows are outliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierMask {
    pub outlier_rows: Vec<usize>,
    pub family: EvtFamily,
    pub fraction: f64,
}

pub fn generate(gen: &FittedGenerator, spec: &OutlierSpec) -> Result<SyntheticBatch> {
    spec.validate()?;
    let n = spec.total_rows;
    let n_tail = spec.outlier_count();
    let eligible: Vec<usize> = (0..gen.marginals.len())
        .filter(|&j| gen.marginals[j].std > 0.0)
        .collect();
    if n_tail > 0 && eligible.is_empty() {
        return Err(Error::DegenerateMarginals);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(spec.seed, &[0]));
    let mut is_tail = vec![false; n];
    for &r in &order[..n_tail] {
        is_tail[r] = true;
    }

    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(spec.seed, &[1, r as u64]);
            let mut x = draw_body(gen, &mut rng);
            if is_tail[r] {
                push_into_tail(gen, spec, &eligible, &mut x, &mut rng);
            }
            let cats = gen.tables.iter().map(|t| t.draw(&mut rng)).collect();
            (x, cats)
        })
        .collect();

    let columns = gen
        .slots
        .iter()
        .zip(&gen.names)
        .map(|(slot, name)| match *slot {
            Slot::Numerical(j) => {
                Column::numerical(name.clone(), rows.iter().map(|(x, _)| Some(x[j])).collect())
            }
            Slot::Categorical(t) => Column::categorical(
                name.clone(),
                rows.iter()
                    .map(|(_, c)| Some(gen.tables[t].categories[c[t]].clone()))
                    .collect(),
            ),
        })
        .collect();
    Ok(SyntheticBatch {
        frame: TabularFrame::new(columns)?,
        provenance: is_tail
            .iter()
            .map(|&t| {
                if t {
                    Provenance::Tail
                } else {
                    Provenance::Body
                }
            })
            .collect(),
        outlier_mask: is_tail,
        marginals: gen.marginals.clone(),
    })
}

fn draw_body<R: Rng + ?Sized>(gen: &FittedGenerator, rng: &mut R) -> Vec<f64> {
    let dim = gen.marginals.len();
    let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let dx = &gen.factor * z;
    gen.marginals
        .iter()
        .zip(dx.iter())
        .map(|(m, d)| m.mean + d)
        .collect()
}

fn push_into_tail<R: Rng + ?Sized>(
    gen: &FittedGenerator,
    spec: &OutlierSpec,
    eligible: &[usize],
    x: &mut [f64],
    rng: &mut R,
) {
    let cov = &gen.covariance;
    let standardized = |j: usize| {
        let m = &gen.marginals[j];
        let scale = if cov[(j, j)] > 0.0 {
            cov[(j, j)].sqrt()
        } else {
            m.std
        };
        (x[j] - m.mean) / scale
    };
    let pivot = eligible
        .iter()
        .copied()
        .max_by(|&a, &b| {
            standardized(a)
                .abs()
                .total_cmp(&standardized(b).abs())
                .then(b.cmp(&a))
        })
        .expect("eligible is non-empty");
    let base_sign = if standardized(pivot) < 0.0 { -1.0 } else { 1.0 };
    let m = &gen.marginals[pivot];
    let threshold = spec.tail_sigma * m.std;
    let target = loop {
        let t = spec.family.tail_magnitude(spec.tail_sigma, rng);
        let sign = spec.family.direction(base_sign, rng);
        let v = m.mean + sign * t * m.std;
        if (v - m.mean).abs() > threshold && v.is_finite() {
            break v;
        }
    };
    let delta = target - x[pivot];
    let var = cov[(pivot, pivot)];
    if var > 0.0 {
        for (k, xk) in x.iter_mut().enumerate() {
            if k != pivot {
                *xk += cov[(k, pivot)] / var * delta;
            }
        }
    }
    x[pivot] = target;
}

/// Keeps outliers plausible for features that cannot be negative.
///
/// In each listed column, negative tail values are reflected about the
/// marginal mean (and clipped at zero if still negative); negative body
/// values are clamped to zero.
pub fn postprocess(batch: &SyntheticBatch, spec: &OutlierSpec) -> Result<SyntheticBatch> {
    let mut frame = batch.frame.clone();
    let listed: BTreeSet<&str> = spec.nonneg_columns.iter().map(String::as_str).collect();
    for name in listed {
        let col = frame.require(name)?;
        let values = col.as_numerical().ok_or_else(|| Error::SchemaMismatch {
            column: name.to_string(),
            reason: "non-negativity applies to numerical columns only".into(),
        })?;
        let mean = batch
            .marginals
            .iter()
            .find(|m| m.name == name)
            .map_or(0.0, |m| m.mean);
        let fixed: Vec<Option<f64>> = values
            .iter()
            .zip(&batch.outlier_mask)
            .map(|(v, &tail)| {
                v.map(|v| {
                    if v >= 0.0 {
                        v
                    } else if tail {
                        (mean + (v - mean).abs()).max(0.0)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        frame = frame.replace_column(Column::numerical(name, fixed))?;
    }
    Ok(SyntheticBatch {
        frame,
        outlier_mask: batch.outlier_mask.clone(),
        provenance: batch.provenance.clone(),
        marginals: batch.marginals.clone(),
    })
}

/// Pads a small training set to `target_rows` by resampling rows with
/// replacement. All original rows are kept; larger sets are returned as is.
pub fn upsample(train: &TabularFrame, target_rows: usize, seed: u64) -> Result<TabularFrame> {
    let n = train.row_count();
    if n == 0 {
        return Err(Error::EmptyInput("cannot upsample an empty frame".into()));
    }
    if n >= target_rows {
        return Ok(train.clone());
    }
    let mut rng = stream_rng(seed, &[0]);
    let rows: Vec<usize> = (0..n)
        .chain((n..target_rows).map(|_| rng.random_range(0..n)))
        .collect();
    Ok(train.take_rows(&rows))
}

/// Appends enough synthetic rows that real rows make up `real_fraction` of
/// the result, then shuffles. With `real_fraction == 1` the real frame is
/// returned unchanged.
pub fn mix(
    real: &TabularFrame,
    synthetic: &TabularFrame,
    real_fraction: f64,
    seed: u64,
) -> Result<TabularFrame> {
    if !(real_fraction > 0.0 && real_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "real_fraction must lie in (0, 1], got {real_fraction}"
        )));
    }
    real.check_same_schema(synthetic)?;
    if real_fraction == 1.0 {
        return Ok(real.clone());
    }
    let n_real = real.row_count();
    let needed = (n_real as f64 * (1.0 - real_fraction) / real_fraction).round() as usize;
    if synthetic.row_count() < needed {
        return Err(Error::InsufficientSynthetic {
            needed,
            available: synthetic.row_count(),
        });
    }
    let mut pool: Vec<usize> = (0..synthetic.row_count()).collect();
    pool.shuffle(&mut stream_rng(seed, &[0]));
    pool.truncate(needed);
    let combined = real.concat(&synthetic.take_rows(&pool))?;
    let mut order: Vec<usize> = (0..combined.row_count()).collect();
    order.shuffle(&mut stream_rng(seed, &[1]));
    Ok(combined.take_rows(&order))
}

/// Checks the tail rule: each tail row has a numerical cell farther than
/// `tail_sigma` marginal standard deviations from the marginal mean.
pub fn tail_rows_certified(batch: &SyntheticBatch, tail_sigma: f64) -> bool {
    let cols: Vec<(&[Option<f64>], &Marginal)> = batch
        .marginals
        .iter()
        .filter_map(|m| Some((batch.frame.column(&m.name)?.as_numerical()?, m)))
        .collect();
    batch.outlier_rows().into_iter().all(|r| {
        cols.iter()
            .any(|(v, m)| v[r].is_some_and(|x| (x - m.mean).abs() > tail_sigma * m.std))
    })
}
