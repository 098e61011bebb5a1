use nalgebra::DMatrix;
use proptest::prelude::*;
use shockstab::synth::{
    fit, generate, mix, postprocess, tail_rows_certified, upsample, EvtFamily, OutlierSpec,
};
use shockstab::{Column, Error, TabularFrame};

fn training_frame() -> TabularFrame {
    // Deterministic, correlated, strictly positive data with a categorical column.
    let n = 400;
    let a: Vec<Option<f64>> = (0..n)
        .map(|i| Some(10.0 + ((i * 37) % 101) as f64 / 10.0))
        .collect();
    let b: Vec<Option<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, v)| Some(0.5 * v.unwrap() + ((i * 53) % 17) as f64 / 4.0))
        .collect();
    let c: Vec<Option<f64>> = (0..n)
        .map(|i| Some(1.0 + ((i * 29) % 13) as f64 / 20.0))
        .collect();
    let s: Vec<Option<String>> = (0..n)
        .map(|i| Some(["x", "y", "z"][i % 3].to_string()))
        .collect();
    TabularFrame::new(vec![
        Column::numerical("a", a),
        Column::numerical("b", b),
        Column::numerical("c", c),
        Column::categorical("s", s),
    ])
    .unwrap()
}

fn family() -> impl Strategy<Value = EvtFamily> {
    prop::sample::select(EvtFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_count_exact_and_certified(fraction in 0.0f64..=1.0, rows in 1usize..400, fam in family(), seed in any::<u64>()) {
        let g = fit(&training_frame(), 1e-8).unwrap();
        let spec = OutlierSpec::new(fam, fraction, rows, seed);
        let batch = generate(&g, &spec).unwrap();
        prop_assert_eq!(batch.frame.row_count(), rows);
        prop_assert_eq!(batch.outlier_rows().len(), (fraction * rows as f64).round() as usize);
        prop_assert!(tail_rows_certified(&batch, spec.tail_sigma));
        prop_assert_eq!(&batch, &generate(&g, &spec).unwrap());
    }

    #[test]
    fn nonneg_columns_stay_nonnegative(fam in family(), seed in any::<u64>()) {
        let g = fit(&training_frame(), 1e-8).unwrap();
        let mut spec = OutlierSpec::new(fam, 0.5, 300, seed);
        spec.nonneg_columns = vec!["a".into(), "b".into(), "c".into()];
        let raw = generate(&g, &spec).unwrap();
        let out = postprocess(&raw, &spec).unwrap();
        prop_assert_eq!(&out.outlier_mask, &raw.outlier_mask);
        for name in ["a", "b", "c"] {
            let v = out.frame.require(name).unwrap().as_numerical().unwrap();
            prop_assert!(v.iter().all(|x| x.unwrap() >= 0.0));
        }
    }

    #[test]
    fn mix_keeps_every_real_row(real_rows in 2usize..80, fraction in 0.2f64..1.0, seed in any::<u64>()) {
        let real = training_frame().take_rows(&(0..real_rows).collect::<Vec<_>>());
        let g = fit(&training_frame(), 1e-8).unwrap();
        let pool = generate(&g, &OutlierSpec::new(EvtFamily::Normal, 0.0, 400, seed)).unwrap().frame;
        let out = mix(&real, &pool, fraction, seed).unwrap();
        let needed = (real_rows as f64 * (1.0 - fraction) / fraction).round() as usize;
        prop_assert_eq!(out.row_count(), real_rows + needed);
        prop_assert_eq!(out.schema(), real.schema());
        let real_a = real.require("a").unwrap().as_numerical().unwrap();
        let out_a = out.require("a").unwrap().as_numerical().unwrap();
        let mut want: Vec<f64> = real_a.iter().map(|v| v.unwrap()).collect();
        let mut got: Vec<f64> = out_a.iter().map(|v| v.unwrap()).filter(|v| want.contains(v)).collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        // Synthetic draws are continuous, so they never coincide with a real value.
        prop_assert_eq!(got, want);
    }
}

#[test]
fn body_moments_recovered() {
    let g = fit(&training_frame(), 1e-8).unwrap();
    let n = 50_000;
    let batch = generate(&g, &OutlierSpec::new(EvtFamily::Normal, 0.0, n, 3)).unwrap();
    let cols: Vec<Vec<f64>> = ["a", "b", "c"]
        .iter()
        .map(|c| {
            batch
                .frame
                .require(c)
                .unwrap()
                .as_numerical()
                .unwrap()
                .iter()
                .map(|v| v.unwrap())
                .collect()
        })
        .collect();
    let means: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    for (j, m) in g.marginals().iter().enumerate() {
        let tol = 3.0 * m.std / (n as f64).sqrt();
        assert!(
            (means[j] - m.mean).abs() <= tol,
            "{}: {} vs {}",
            m.name,
            means[j],
            m.mean
        );
    }
    let cov = DMatrix::from_fn(3, 3, |i, j| {
        cols[i]
            .iter()
            .zip(&cols[j])
            .map(|(x, y)| (x - means[i]) * (y - means[j]))
            .sum::<f64>()
            / (n - 1) as f64
    });
    let rel = (&cov - g.covariance()).norm() / g.covariance().norm();
    assert!(rel <= 0.05, "relative Frobenius error {rel}");
    // Categorical draws follow the fitted frequencies.
    let s = batch.frame.require("s").unwrap().as_categorical().unwrap();
    let share = s.iter().filter(|v| v.as_deref() == Some("x")).count() as f64 / n as f64;
    assert!((share - g.tables()[0].frequency("x")).abs() < 0.01);
}

#[test]
fn fixed_fraction_examples() {
    let g = fit(&training_frame(), 1e-8).unwrap();
    let b = generate(&g, &OutlierSpec::new(EvtFamily::Normal, 0.10, 1000, 0)).unwrap();
    assert_eq!(b.outlier_rows().len(), 100);
    let b = generate(&g, &OutlierSpec::new(EvtFamily::Normal, 0.0, 500, 0)).unwrap();
    assert!(b.outlier_rows().is_empty());
}

#[test]
fn upsample_copies_originals() {
    let f = training_frame().take_rows(&(0..100).collect::<Vec<_>>());
    let up = upsample(&f, 10_000, 9).unwrap();
    assert_eq!(up.row_count(), 10_000);
    let a = f.require("a").unwrap().as_numerical().unwrap();
    let b = f.require("b").unwrap().as_numerical().unwrap();
    let ua = up.require("a").unwrap().as_numerical().unwrap();
    let ub = up.require("b").unwrap().as_numerical().unwrap();
    for r in 0..up.row_count() {
        assert!((0..100).any(|i| a[i] == ua[r] && b[i] == ub[r]));
    }
    let big = training_frame();
    assert_eq!(upsample(&big, 100, 9).unwrap(), big);
}

#[test]
fn mix_examples() {
    let real = training_frame().take_rows(&(0..100).collect::<Vec<_>>());
    let g = fit(&training_frame(), 1e-8).unwrap();
    let pool = generate(&g, &OutlierSpec::new(EvtFamily::Normal, 0.0, 150, 1))
        .unwrap()
        .frame;
    assert_eq!(mix(&real, &pool, 0.5, 0).unwrap().row_count(), 200);
    let small = pool.take_rows(&(0..40).collect::<Vec<_>>());
    assert!(matches!(
        mix(&real, &small, 0.5, 0),
        Err(Error::InsufficientSynthetic {
            needed: 100,
            available: 40
        })
    ));
    assert!(matches!(
        mix(&real, &pool.drop_columns(&["s"]), 0.5, 0),
        Err(Error::SchemaMismatch { .. })
    ));
}

#[test]
fn body_spread_holds_across_column_scales() {
    // Columns eight orders of magnitude apart must each keep their own spread.
    let base = training_frame();
    let scaled = |name: &str, factor: f64| {
        Column::numerical(
            name,
            base.require("a")
                .unwrap()
                .as_numerical()
                .unwrap()
                .iter()
                .map(|v| v.map(|x| x * factor))
                .collect(),
        )
    };
    let frame = TabularFrame::new(vec![
        scaled("big", 1e4),
        scaled("small", 1e-4),
        base.require("b").unwrap().clone(),
    ])
    .unwrap();
    let g = fit(&frame, 1e-8).unwrap();
    let n = 20_000;
    let batch = generate(&g, &OutlierSpec::new(EvtFamily::Normal, 0.0, n, 5)).unwrap();
    for m in g.marginals() {
        let v: Vec<f64> = batch
            .frame
            .require(&m.name)
            .unwrap()
            .as_numerical()
            .unwrap()
            .iter()
            .map(|x| x.unwrap())
            .collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(
            (std / m.std - 1.0).abs() < 0.03,
            "{}: {std} vs {}",
            m.name,
            m.std
        );
    }
}
