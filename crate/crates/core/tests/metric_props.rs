mod common;

use common::{auc_oracle, ks_oracle, ss_oracle, su_oracle, tv_oracle};
use proptest::prelude::*;
use shockstab::drift::{distribution_shift, ks_statistic, tv_distance};
use shockstab::model::auc;
use shockstab::stability::{
    batch_uplift, flip_auc, logistic_weight, stabilization_score, stabilization_uplift,
    UpliftRecord, DEFAULT_EPSILON,
};
use shockstab::{AucPoint, Column, Error, OutlierLevel, TabularFrame, UpliftCoefficients};

fn small_ints() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..12).prop_map(f64::from), 1..50)
}

fn cats() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(String::from),
        1..50,
    )
}

fn uplift(a: (f64, f64), b: (f64, f64), ds: f64) -> shockstab::stability::UpliftBreakdown {
    stabilization_uplift(
        AucPoint::new(a.0, a.1),
        AucPoint::new(b.0, b.1),
        ds,
        &UpliftCoefficients::default(),
        DEFAULT_EPSILON,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn ks_matches_oracle(x in small_ints(), y in small_ints()) {
        let d = ks_statistic(&x, &y).unwrap();
        prop_assert!((d - ks_oracle(&x, &y)).abs() <= 1e-12);
        prop_assert_eq!(d, ks_statistic(&y, &x).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn ks_of_continuous_samples(x in prop::collection::vec(-1e3f64..1e3, 1..50), y in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        prop_assert!((ks_statistic(&x, &y).unwrap() - ks_oracle(&x, &y)).abs() <= 1e-12);
        prop_assert_eq!(ks_statistic(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn tv_matches_oracle(p in cats(), q in cats()) {
        let d = tv_distance(&p, &q).unwrap();
        prop_assert!((d - tv_oracle(&p, &q)).abs() <= 1e-12);
        prop_assert!((d - tv_distance(&q, &p).unwrap()).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn shift_is_mean_and_order_invariant(
        n1 in small_ints(), n2 in small_ints(), c1 in cats(), c2 in cats(), seed in any::<u64>(),
    ) {
        let rows_base = n1.len().min(c1.len());
        let rows_shock = n2.len().min(c2.len());
        let make = |n: &[f64], c: &[String], rows: usize| {
            TabularFrame::new(vec![
                Column::numerical("num", n[..rows].iter().map(|&v| Some(v)).collect()),
                Column::categorical("cat", c[..rows].iter().cloned().map(Some).collect()),
            ])
            .unwrap()
        };
        let base = make(&n1, &c1, rows_base);
        let shock = make(&n2, &c2, rows_shock);
        let r = distribution_shift::<&str>(&base, &shock, 0.05, &[]).unwrap();
        let expected = 0.5 * (ks_oracle(&n1[..rows_base], &n2[..rows_shock]) + tv_oracle(&c1[..rows_base], &c2[..rows_shock]));
        prop_assert!((r.ds - expected).abs() <= 1e-12);
        prop_assert_eq!(r.is_shock, r.ds >= 0.05);

        let mut order: Vec<usize> = (0..rows_shock).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let r2 = distribution_shift::<&str>(&base, &shock.take_rows(&order), 0.05, &[]).unwrap();
        prop_assert_eq!(r.ds, r2.ds);
    }

    #[test]
    fn ss_bounds_and_flip(base in 0.0f64..=1.0, shock in 0.0f64..=1.0, ds in 0.0f64..=1.0) {
        let ss = stabilization_score(base, shock, ds, DEFAULT_EPSILON).unwrap().ss;
        prop_assert!((0.5..=1.0).contains(&ss));
        prop_assert!((ss - ss_oracle(base, shock, ds, DEFAULT_EPSILON).to_f64()).abs() <= 1e-12);
    }

    #[test]
    fn flip_is_idempotent_and_reflective(a in 0.0f64..=1.0) {
        let f = flip_auc(a).unwrap();
        prop_assert!(f >= 0.5);
        prop_assert_eq!(flip_auc(f).unwrap(), f);
    }

    #[test]
    fn flip_invariance_on_upper_half(
        ab in 0.5f64..=1.0, ash in 0.5f64..=1.0, bb in 0.5f64..=1.0, bsh in 0.5f64..=1.0, ds in 0.0f64..1.0,
        mask in 0u8..16,
    ) {
        // 1 - (1 - a) == a exactly for a in [0.5, 1], so reflected inputs
        // must give bit-identical results.
        let r = |a: f64, bit: u8| if mask & bit != 0 { 1.0 - a } else { a };
        let plain = uplift((ab, ash), (bb, bsh), ds);
        let mirrored = uplift((r(ab, 1), r(ash, 2)), (r(bb, 4), r(bsh, 8)), ds);
        prop_assert_eq!(plain, mirrored);
        prop_assert_eq!(
            stabilization_score(ab, ash, ds, DEFAULT_EPSILON).unwrap().ss,
            stabilization_score(r(ab, 1), r(ash, 2), ds, DEFAULT_EPSILON).unwrap().ss
        );
    }

    #[test]
    fn ss_nonincreasing_in_degradation(base in 0.5f64..=1.0, d1 in 0.0f64..0.5, d2 in 0.0f64..0.5, ds in 0.0f64..1.0) {
        let (small, large) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let s = |d: f64| stabilization_score(base, (base - d).max(0.5), ds, DEFAULT_EPSILON).unwrap().ss;
        prop_assert!(s(small) >= s(large));
    }

    #[test]
    fn su_matches_oracle(
        ab in 0.0f64..=1.0, ash in 0.0f64..=1.0, bb in 0.0f64..=1.0, bsh in 0.0f64..=1.0, ds in 0.0f64..1.0,
    ) {
        let got = uplift((ab, ash), (bb, bsh), ds);
        let want = su_oracle((ab, ash), (bb, bsh), ds, (100.0, 1000.0, 1000.0), DEFAULT_EPSILON);
        prop_assert!((got.su - want.su).abs() <= 1e-12, "{} vs {}", got.su, want.su);
        prop_assert!((got.w - want.w).abs() <= 1e-12);
        prop_assert!((got.w_sup - want.w_sup).abs() <= 1e-12);
        prop_assert!(got.su.is_finite() && got.su.abs() <= got.w);
        prop_assert_eq!(got.w_b_adj, got.w_b * got.w_sup);
        prop_assert_eq!(got.w_a_adj, got.w_a * (1.0 - got.w_sup));
    }

    #[test]
    fn identical_models_have_zero_uplift(base in 0.0f64..=1.0, shock in 0.0f64..=1.0, ds in 0.0f64..1.0) {
        let b = uplift((base, shock), (base, shock), ds);
        prop_assert_eq!(b.su, 0.0);
        prop_assert_eq!(b.w, 0.5);
        prop_assert_eq!(b.w_sup, 0.5);
    }

    #[test]
    fn dominating_model_has_positive_uplift(
        ab in 0.5f64..0.95, ash in 0.5f64..0.95, base_gain in 0.0f64..0.05, shock_gain in 1e-3f64..0.05, ds in 0.0f64..1.0,
    ) {
        let b = uplift((ab, ash), ((ab + base_gain).min(1.0), (ash + shock_gain).min(1.0)), ds);
        prop_assert!(b.su > 0.0, "{b:?}");
    }

    #[test]
    fn trailing_shock_auc_bounds_uplift(ab in 0.5f64..1.0, ash in 0.6f64..1.0, bb in 0.5f64..1.0, gap in 0.01f64..0.1, ds in 0.0f64..1.0) {
        // With k2 = 1000, a gap of at least 10 / k2 keeps w below e^-10.
        let bsh = ash - gap;
        let b = uplift((ab, ash), (bb, bsh), ds);
        prop_assert!(b.w <= (-10.0f64).exp() * (1.0 + 1e-9));
        prop_assert!(b.su.abs() <= b.w);
    }

    #[test]
    fn logistic_weight_range(x in -2000.0f64..2000.0) {
        let w = logistic_weight(x);
        prop_assert!((0.0..=1.0).contains(&w));
        if x.abs() < 30.0 {
            prop_assert!(w > 0.0 && w < 1.0);
        }
    }

    #[test]
    fn auc_matches_pair_counting(
        rows in prop::collection::vec(((0i32..20).prop_map(|v| f64::from(v) / 4.0), any::<bool>()), 2..200),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = rows.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - auc_oracle(&scores, &labels)).abs() <= 1e-12);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert_eq!(auc(&negated, &labels).unwrap(), 1.0 - a);
    }
}

#[test]
fn batch_grid_matches_cellwise() {
    let levels = [
        OutlierLevel::Without,
        OutlierLevel::Percent(1.0),
        OutlierLevel::Percent(3.0),
        OutlierLevel::Percent(5.0),
        OutlierLevel::Percent(7.0),
        OutlierLevel::Percent(10.0),
        OutlierLevel::Percent(50.0),
        OutlierLevel::Percent(100.0),
    ];
    let mut records = Vec::new();
    for m in 0..8 {
        for (li, &level) in levels.iter().enumerate() {
            let t = (m * 8 + li) as f64 / 64.0;
            records.push(UpliftRecord {
                model: format!("model{m}"),
                outliers_pct: level,
                auc_base_a: 0.8,
                auc_shock_a: 0.7,
                auc_base_b: 0.78 + 0.04 * t,
                auc_shock_b: 0.68 + 0.05 * t,
            });
        }
    }
    let table = batch_uplift(
        &records,
        0.12,
        &UpliftCoefficients::default(),
        DEFAULT_EPSILON,
    )
    .unwrap();
    assert_eq!(
        table.cells.iter().filter(|c| c.breakdown.is_some()).count(),
        64
    );
    for r in &records {
        let want = stabilization_uplift(
            r.a(),
            r.b(),
            0.12,
            &UpliftCoefficients::default(),
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert_eq!(
            table.cell(&r.model, r.outliers_pct).unwrap().breakdown,
            Some(want)
        );
    }
    let mut dup = records.clone();
    dup.push(records[0].clone());
    assert!(matches!(
        batch_uplift(&dup, 0.12, &UpliftCoefficients::default(), DEFAULT_EPSILON),
        Err(Error::DuplicateKey { .. })
    ));
}
