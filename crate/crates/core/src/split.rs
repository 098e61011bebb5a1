//! Pre-/post-shock partitioning and Monte Carlo train/test resampling.
//!
//! Out-of-time (OOT) splits cut at a shock date: rows dated on or after it
//! form the shocked test set, which stays fixed across runs. Out-of-sample
//! (OOS) splits hold out a random share of rows as the shocked set, redrawn
//! every run. Each run then shuffles the pre-shock rows and cuts them into
//! train and test.

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ColumnData, TabularFrame};
use crate::rng::stream_rng;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_MC_RUNS: usize = 51;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SplitMode {
    Oot {
        date_column: String,
        shock_date: String,
    },
    Oos {
        shock_fraction: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub mode: SplitMode,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_train_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

fn default_mc_runs() -> usize {
    DEFAULT_MC_RUNS
}

impl SplitSpec {
    pub fn oot(date_column: impl Into<String>, shock_date: impl Into<String>) -> Self {
        SplitSpec {
            mode: SplitMode::Oot {
                date_column: date_column.into(),
                shock_date: shock_date.into(),
            },
            train_fraction: DEFAULT_TRAIN_FRACTION,
            mc_runs: DEFAULT_MC_RUNS,
            seed: 0,
        }
    }

    pub fn oos(shock_fraction: f64) -> Self {
        SplitSpec {
            mode: SplitMode::Oos { shock_fraction },
            train_fraction: DEFAULT_TRAIN_FRACTION,
            mc_runs: DEFAULT_MC_RUNS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.mc_runs == 0 {
            return Err(Error::Config("mc_runs must be at least 1".into()));
        }
        match &self.mode {
            SplitMode::Oos { shock_fraction }
                if !(*shock_fraction > 0.0 && *shock_fraction < 1.0) =>
            {
                Err(Error::Config(format!(
                    "shock_fraction must lie in (0, 1), got {shock_fraction}"
                )))
            }
            SplitMode::Oot { shock_date, .. } => parse_timestamp(shock_date)
                .map(|_| ())
                .ok_or_else(|| Error::Config(format!("cannot parse shock date `{shock_date}`"))),
            _ => Ok(()),
        }
    }

    /// Column that must not be used as a feature (the OOT date column).
    pub fn date_column(&self) -> Option<&str> {
        match &self.mode {
            SplitMode::Oot { date_column, .. } => Some(date_column),
            SplitMode::Oos { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShockSplit {
    pub run_index: usize,
    pub train: TabularFrame,
    pub test: TabularFrame,
    pub shocked_test: TabularFrame,
    /// Source row indices of each part.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub shock_rows: Vec<usize>,
}

/// Accepts `YYYY-MM-DD`, ISO-8601 local date-times and RFC 3339 timestamps.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc())
}

/// Pre-shock and shocked row indices for an OOT boundary, both ascending.
fn temporal_partition(
    frame: &TabularFrame,
    date_column: &str,
    shock_date: &str,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let boundary = parse_timestamp(shock_date)
        .ok_or_else(|| Error::Config(format!("cannot parse shock date `{shock_date}`")))?;
    let col = frame.require(date_column)?;
    let (mut pre, mut post) = (Vec::new(), Vec::new());
    for row in 0..frame.row_count() {
        let text = col.cell_text(row);
        let ts = match (col.data(), text.as_deref()) {
            (ColumnData::Categorical(_), Some(s)) => parse_timestamp(s),
            _ => None,
        };
        let Some(ts) = ts else {
            return Err(Error::Parse {
                row,
                column: date_column.to_string(),
                value: text
                    .map(|s| s.into_owned())
                    .unwrap_or_else(|| "<missing>".into()),
            });
        };
        if ts >= boundary {
            post.push(row);
        } else {
            pre.push(row);
        }
    }
    Ok((pre, post))
}

enum Partition {
    Fixed { pre: Vec<usize>, post: Vec<usize> },
    Random { shock_fraction: f64 },
}

fn partition(frame: &TabularFrame, spec: &SplitSpec) -> Result<Partition> {
    spec.validate()?;
    if frame.is_empty() {
        return Err(Error::DegenerateSplit("frame has no rows".into()));
    }
    match &spec.mode {
        SplitMode::Oot {
            date_column,
            shock_date,
        } => {
            let (pre, post) = temporal_partition(frame, date_column, shock_date)?;
            if pre.is_empty() {
                return Err(Error::DegenerateSplit(format!(
                    "no rows before {shock_date}"
                )));
            }
            if post.is_empty() {
                return Err(Error::DegenerateSplit(format!(
                    "no rows on or after {shock_date}"
                )));
            }
            Ok(Partition::Fixed { pre, post })
        }
        SplitMode::Oos { shock_fraction } => Ok(Partition::Random {
            shock_fraction: *shock_fraction,
        }),
    }
}

fn assign(
    frame: &TabularFrame,
    spec: &SplitSpec,
    part: &Partition,
    run_index: usize,
) -> Result<ShockSplit> {
    let mut rng = stream_rng(spec.seed, &[run_index as u64]);
    let (mut pre, shock_rows) = match part {
        Partition::Fixed { pre, post } => (pre.clone(), post.clone()),
        Partition::Random { shock_fraction } => {
            let n = frame.row_count();
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let n_shock = ((shock_fraction * n as f64).ceil() as usize).min(n);
            let pre = rows.split_off(n_shock);
            if pre.is_empty() {
                return Err(Error::DegenerateSplit("no pre-shock rows left".into()));
            }
            (pre, rows)
        }
    };
    pre.shuffle(&mut rng);
    let n_train = (spec.train_fraction * pre.len() as f64).floor() as usize;
    if n_train == 0 || n_train == pre.len() {
        return Err(Error::DegenerateSplit(format!(
            "{} pre-shock rows cannot be cut into non-empty train and test sets",
            pre.len()
        )));
    }
    let test_rows = pre.split_off(n_train);
    let train_rows = pre;
    Ok(ShockSplit {
        run_index,
        train: frame.take_rows(&train_rows),
        test: frame.take_rows(&test_rows),
        shocked_test: frame.take_rows(&shock_rows),
        train_rows,
        test_rows,
        shock_rows,
    })
}

pub fn split_once(frame: &TabularFrame, spec: &SplitSpec, run_index: usize) -> Result<ShockSplit> {
    let part = partition(frame, spec)?;
    assign(frame, spec, &part, run_index)
}

pub fn monte_carlo(frame: &TabularFrame, spec: &SplitSpec) -> Result<Vec<ShockSplit>> {
    let part = partition(frame, spec)?;
    (0..spec.mc_runs)
        .into_par_iter()
        .map(|run| assign(frame, spec, &part, run))
        .collect()
}

/// Pre-shock and shocked segments of the full frame, without train/test cut.
/// OOS mode uses the holdout drawn for run 0.
pub fn shock_segments(
    frame: &TabularFrame,
    spec: &SplitSpec,
) -> Result<(TabularFrame, TabularFrame)> {
    match partition(frame, spec)? {
        Partition::Fixed { pre, post } => Ok((frame.take_rows(&pre), frame.take_rows(&post))),
        part @ Partition::Random { .. } => {
            let s = assign(frame, spec, &part, 0)?;
            let mut pre = s.train_rows;
            pre.extend(s.test_rows);
            pre.sort_unstable();
            let mut post = s.shock_rows;
            post.sort_unstable();
            Ok((frame.take_rows(&pre), frame.take_rows(&post)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Median (midpoint of the two central values for even counts) and range.
pub fn aggregate(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to aggregate".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in aggregate")));
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    };
    Ok(Summary {
        median,
        min: xs[0],
        max: xs[n - 1],
    })
}
