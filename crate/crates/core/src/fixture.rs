//! A small synthetic credit dataset with a sudden shock, used by the examples
//! and tests.
//!
//! Loans are issued between 2016-09-01 and 2018-11-29. From the shock date on,
//! the currency weakens, incomes drop, the sector mix moves toward energy and
//! defaults start to depend on an unobserved factor, so both the feature
//! distribution and the feature-label relationship change.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::frame::{Column, TabularFrame};
use crate::rng::stream_rng;

pub const FIXTURE_ROWS: usize = 2000;
pub const FIXTURE_SEED: u64 = 20180322;
pub const FIXTURE_SHOCK_DATE: &str = "2018-03-22";
pub const FIXTURE_DATE_COLUMN: &str = "issue_d";
pub const FIXTURE_LABEL: &str = "default";

const SPAN_DAYS: u64 = 819;
const SECTORS: [&str; 4] = ["energy", "manufacturing", "retail", "services"];
const SECTOR_WEIGHTS_PRE: [f64; 4] = [0.15, 0.25, 0.30, 0.30];
const SECTOR_WEIGHTS_POST: [f64; 4] = [0.35, 0.20, 0.20, 0.25];

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn pick(weights: &[f64; 4], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// The bundled fixture is `credit_fixture(FIXTURE_ROWS, FIXTURE_SEED)`.
pub fn credit_fixture(rows: usize, seed: u64) -> Result<TabularFrame> {
    let start = NaiveDate::from_ymd_opt(2016, 9, 1).expect("valid date");
    let shock = NaiveDate::parse_from_str(FIXTURE_SHOCK_DATE, "%Y-%m-%d").expect("valid date");
    let mut rng = stream_rng(seed, &[]);
    let mut offsets: Vec<u64> = (0..rows).map(|_| rng.random_range(0..=SPAN_DAYS)).collect();
    offsets.sort_unstable();

    let mut dates = Vec::with_capacity(rows);
    let mut credit_score = Vec::with_capacity(rows);
    let mut income = Vec::with_capacity(rows);
    let mut debt_ratio = Vec::with_capacity(rows);
    let mut loan_amount = Vec::with_capacity(rows);
    let mut age = Vec::with_capacity(rows);
    let mut fx_rate = Vec::with_capacity(rows);
    let mut sector = Vec::with_capacity(rows);
    let mut label = Vec::with_capacity(rows);

    for (r, &offset) in offsets.iter().enumerate() {
        let mut rng = stream_rng(seed, &[1, r as u64]);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let date = start + Days::new(offset);
        let post = date >= shock;

        let z_credit = normal();
        let z_income = normal();
        let z_debt = normal();
        let z_fx = normal();
        let hidden = normal();
        let u_sector: f64 = rng.random();
        let u_age: f64 = rng.random();
        let u_loan: f64 = rng.random();
        let u_missing: f64 = rng.random();
        let u_label: f64 = rng.random();

        let s = pick(
            if post {
                &SECTOR_WEIGHTS_POST
            } else {
                &SECTOR_WEIGHTS_PRE
            },
            u_sector,
        );
        let log_income = if post {
            10.65 + 0.45 * z_income
        } else {
            10.8 + 0.4 * z_income
        };
        let debt = (0.3 + 0.1 * z_debt - 0.04 * z_credit).clamp(0.0, 1.5);
        let fx = if post {
            1.35 + 0.06 * z_fx
        } else {
            1.10 + 0.03 * z_fx
        }
        .max(0.0);

        let s_debt = (debt - 0.3) / 0.1;
        let s_income = (log_income - 10.8) / 0.4;
        let energy = if SECTORS[s] == "energy" { 1.0 } else { 0.0 };
        let logit = if post {
            -1.0 - 0.4 * z_credit + 0.2 * s_debt - 0.1 * s_income + 1.0 * energy + 1.5 * hidden
        } else {
            -1.5 - 1.2 * z_credit + 0.6 * s_debt - 0.5 * s_income + 0.3 * energy
        };

        dates.push(Some(date.format("%Y-%m-%d").to_string()));
        credit_score.push(Some((680.0 + 50.0 * z_credit).round()));
        income.push((u_missing >= 0.02).then(|| round_to(log_income.exp(), 0)));
        debt_ratio.push(Some(round_to(debt, 3)));
        loan_amount.push(Some(round_to(5000.0 + 15000.0 * u_loan, -2)));
        age.push(Some((22.0 + 45.0 * u_age).floor()));
        fx_rate.push(Some(round_to(fx, 4)));
        sector.push(Some(SECTORS[s].to_string()));
        label.push(Some(if u_label < sigmoid(logit) { 1.0 } else { 0.0 }));
    }

    TabularFrame::new(vec![
        Column::categorical(FIXTURE_DATE_COLUMN, dates),
        Column::numerical("credit_score", credit_score),
        Column::numerical("annual_income", income),
        Column::numerical("debt_ratio", debt_ratio),
        Column::numerical("loan_amount", loan_amount),
        Column::numerical("age", age),
        Column::numerical("fx_rate", fx_rate),
        Column::categorical("sector", sector),
        Column::numerical(FIXTURE_LABEL, label),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let a = credit_fixture(300, 1).unwrap();
        assert_eq!(a, credit_fixture(300, 1).unwrap());
        assert_ne!(a, credit_fixture(300, 2).unwrap());
        assert_eq!(a.row_count(), 300);
        let y = a.require(FIXTURE_LABEL).unwrap().as_numerical().unwrap();
        let pos = y.iter().flatten().filter(|&&v| v == 1.0).count();
        assert!(pos > 0 && pos < 300);
    }
}
