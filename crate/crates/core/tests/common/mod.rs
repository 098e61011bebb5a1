//! Reference implementations shared by the integration tests.
//!
//! `Fixed` is binary fixed-point arithmetic on big integers with 256
//! fractional bits. It is slow and simple and shares no code with the
//! library, which makes it a usable oracle for the score formulas.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

const FRAC_BITS: u32 = 256;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(BigInt);

impl Fixed {
    pub fn from_f64(x: f64) -> Fixed {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fixed(BigInt::zero());
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let shift = FRAC_BITS as i64 + e;
        let m = BigInt::from(mantissa) * sign;
        Fixed(if shift >= 0 {
            m << shift as usize
        } else {
            m >> (-shift) as usize
        })
    }

    pub fn int(n: i64) -> Fixed {
        Fixed(BigInt::from(n) << FRAC_BITS as usize)
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 80 significant bits, then scale by an exact power of two.
        let bits = self.0.bits() as i64;
        let drop = (bits - 80).max(0);
        let top = (&self.0 >> drop as usize).to_f64().unwrap();
        top * 2f64.powi((drop - FRAC_BITS as i64) as i32)
    }

    pub fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 * &o.0) >> FRAC_BITS as usize)
    }

    pub fn div(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 << FRAC_BITS as usize) / &o.0)
    }

    pub fn abs(&self) -> Fixed {
        Fixed(self.0.abs())
    }

    pub fn max(self, o: Fixed) -> Fixed {
        if self >= o {
            self
        } else {
            o
        }
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Taylor series after halving the argument 32 times, then squaring back.
    pub fn exp(&self) -> Fixed {
        let halvings = 32;
        let y = Fixed(&self.0 >> halvings);
        let mut sum = Fixed::int(1);
        let mut term = Fixed::int(1);
        for k in 1.. {
            term = term.mul(&y).div(&Fixed::int(k));
            if term.is_zero() {
                break;
            }
            sum = sum.add(&term);
        }
        for _ in 0..halvings {
            sum = sum.mul(&sum);
        }
        sum
    }

    /// `ln(y) = 2 atanh((y - 1) / (y + 1))` for positive `y`.
    pub fn ln(&self) -> Fixed {
        assert!(self.0 > BigInt::zero());
        let one = Fixed::int(1);
        let z = self.sub(&one).div(&self.add(&one));
        let z2 = z.mul(&z);
        let mut power = z.clone();
        let mut sum = Fixed(BigInt::zero());
        for k in 0.. {
            let term = power.div(&Fixed::int(2 * k + 1));
            if term.is_zero() {
                break;
            }
            sum = sum.add(&term);
            power = power.mul(&z2);
        }
        sum.add(&sum)
    }

    pub fn logistic(&self) -> Fixed {
        Fixed::int(1).div(&Fixed::int(1).add(&Fixed(-self.0.clone()).exp()))
    }
}

fn flip(a: f64) -> Fixed {
    let a = Fixed::from_f64(a);
    let other = Fixed::int(1).sub(&a);
    a.max(other)
}

pub fn ss_oracle(base: f64, shock: f64, ds: f64, epsilon: f64) -> Fixed {
    let delta = flip(base).sub(&flip(shock)).abs();
    let denom = Fixed::int(1).add(
        &Fixed::int(1)
            .add(&Fixed::from_f64(ds))
            .add(&Fixed::from_f64(epsilon))
            .ln(),
    );
    Fixed::int(1).sub(&delta.div(&denom))
}

pub struct UpliftOracle {
    pub w_a: f64,
    pub w_b: f64,
    pub w: f64,
    pub w_sup: f64,
    pub ss_a: f64,
    pub ss_b: f64,
    pub su: f64,
}

pub fn su_oracle(
    a: (f64, f64),
    b: (f64, f64),
    ds: f64,
    k: (f64, f64, f64),
    epsilon: f64,
) -> UpliftOracle {
    let (ab, ash, bb, bsh) = (flip(a.0), flip(a.1), flip(b.0), flip(b.1));
    let (k1, k2, k3) = (
        Fixed::from_f64(k.0),
        Fixed::from_f64(k.1),
        Fixed::from_f64(k.2),
    );
    let w_a = k1.mul(&ash.sub(&ab)).logistic();
    let w_b = k1.mul(&bsh.sub(&bb)).logistic();
    let w = k2.mul(&bsh.sub(&ash)).logistic();
    let w_sup = k3.mul(&bb.sub(&ab).add(&bsh.sub(&ash))).logistic();
    let ss_a = ss_oracle(a.0, a.1, ds, epsilon);
    let ss_b = ss_oracle(b.0, b.1, ds, epsilon);
    let wb_adj = w_b.mul(&w_sup);
    let wa_adj = w_a.mul(&Fixed::int(1).sub(&w_sup));
    let su = w.mul(&wb_adj.mul(&ss_b).sub(&wa_adj.mul(&ss_a)));
    UpliftOracle {
        w_a: w_a.to_f64(),
        w_b: w_b.to_f64(),
        w: w.to_f64(),
        w_sup: w_sup.to_f64(),
        ss_a: ss_a.to_f64(),
        ss_b: ss_b.to_f64(),
        su: su.to_f64(),
    }
}

/// Two-sample KS by evaluating both empirical CDFs at every pooled point
/// and at every midpoint between consecutive distinct points.
pub fn ks_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut pts: Vec<f64> = x.iter().chain(y).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut grid = pts.clone();
    grid.extend(pts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    grid.iter()
        .map(|&t| (ecdf(x, t) - ecdf(y, t)).abs())
        .fold(0.0, f64::max)
}

/// TV distance by linear scans over the category union.
pub fn tv_oracle(p: &[String], q: &[String]) -> f64 {
    let mut cats: Vec<&String> = Vec::new();
    for c in p.iter().chain(q) {
        if !cats.contains(&c) {
            cats.push(c);
        }
    }
    let freq =
        |s: &[String], c: &String| s.iter().filter(|v| *v == c).count() as f64 / s.len() as f64;
    0.5 * cats
        .iter()
        .map(|c| (freq(p, c) - freq(q, c)).abs())
        .sum::<f64>()
}

/// AUC by explicit enumeration of every positive-negative pair.
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}
