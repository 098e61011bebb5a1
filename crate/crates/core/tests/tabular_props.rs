use proptest::prelude::*;
use shockstab::frame::read_csv;
use shockstab::schema::detect_schema;
use shockstab::{Column, ColumnKind, CsvOptions, TabularFrame};

fn frame_of(xs: &[f64]) -> TabularFrame {
    TabularFrame::new(vec![Column::numerical(
        "x",
        xs.iter().map(|&x| Some(x)).collect(),
    )])
    .unwrap()
}

// Two-pass moments in extended form: central moments from scratch, then the
// textbook small-sample adjustments.
fn oracle_moments(xs: &[f64]) -> (f64, f64, Option<f64>, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let central = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let std = (m2 * n / (n - 1.0)).sqrt();
    let skew = (xs.len() >= 3 && m2 > 0.0).then(|| {
        let g1 = m3 / m2.powf(1.5);
        g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
    });
    let kurt = (xs.len() >= 4 && m2 > 0.0).then(|| {
        let g2 = m4 / (m2 * m2) - 3.0;
        (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0)
    });
    (mean, std, skew, kurt)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn moments_match_oracle(xs in prop::collection::vec(-1e3f64..1e3, 4..80)) {
        let r = detect_schema(&frame_of(&xs)).unwrap();
        let s = r.columns[0].numerical.as_ref().unwrap();
        let (mean, std, skew, kurt) = oracle_moments(&xs);
        prop_assert!(close(s.mean, mean, 1e-9));
        prop_assert!(close(s.std.unwrap(), std, 1e-9));
        match (s.skewness, skew) {
            (Some(a), Some(b)) => prop_assert!(close(a, b, 1e-9), "{a} vs {b}"),
            (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
        }
        match (s.kurtosis, kurt) {
            (Some(a), Some(b)) => prop_assert!(close(a, b, 1e-9), "{a} vs {b}"),
            (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
        }
    }

    #[test]
    fn schema_is_row_order_invariant(
        xs in prop::collection::vec(-1e6f64..1e6, 1..60),
        seed in any::<u64>(),
    ) {
        let mut shuffled = xs.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(detect_schema(&frame_of(&xs)).unwrap(), detect_schema(&frame_of(&shuffled)).unwrap());
    }

    #[test]
    fn quantiles_are_ordered(xs in prop::collection::vec(-1e6f64..1e6, 1..60)) {
        let r = detect_schema(&frame_of(&xs)).unwrap();
        let s = r.columns[0].numerical.as_ref().unwrap();
        prop_assert!(s.min <= s.q25 && s.q25 <= s.median && s.median <= s.q75 && s.q75 <= s.max);
        prop_assert!((s.iqr - (s.q75 - s.q25)).abs() <= 1e-9 * (1.0 + s.iqr.abs()));
    }

    #[test]
    fn csv_roundtrip_preserves_cells(
        rows in prop::collection::vec((-1e9f64..1e9, "[a-c]{1,3}", any::<bool>()), 1..30),
    ) {
        let num: Vec<Option<f64>> = rows.iter().map(|(x, _, m)| (!m).then_some(*x)).collect();
        let cat: Vec<Option<String>> = rows.iter().map(|(_, s, _)| Some(s.clone())).collect();
        prop_assume!(num.iter().any(Option::is_some));
        let frame = TabularFrame::new(vec![Column::numerical("n", num), Column::categorical("c", cat)]).unwrap();
        let mut buf = Vec::new();
        frame.write_csv(&mut buf, b',').unwrap();
        let back = read_csv(buf.as_slice(), &CsvOptions::default()).unwrap();
        prop_assert_eq!(back.require("n").unwrap().kind(), ColumnKind::Numerical);
        prop_assert_eq!(back.require("n").unwrap().data(), frame.require("n").unwrap().data());
        prop_assert_eq!(back.require("c").unwrap().data(), frame.require("c").unwrap().data());
    }
}

#[test]
fn binary_column_defaults_to_numerical_and_can_be_overridden() {
    let text = "gender,y\n0,1\n1,0\n1,1\n";
    let f = read_csv(text.as_bytes(), &CsvOptions::default()).unwrap();
    assert_eq!(f.require("gender").unwrap().kind(), ColumnKind::Numerical);
    let mut opts = CsvOptions::default();
    opts.kind_overrides
        .insert("gender".into(), ColumnKind::Categorical);
    let f = read_csv(text.as_bytes(), &opts).unwrap();
    assert_eq!(f.require("gender").unwrap().kind(), ColumnKind::Categorical);
}

#[test]
fn categorical_top_share() {
    let f = read_csv("c\nA\nB\nA\n".as_bytes(), &CsvOptions::default()).unwrap();
    let r = detect_schema(&f).unwrap();
    let c = r.columns[0].categorical.as_ref().unwrap();
    assert_eq!((c.top.as_str(), c.top_frequency), ("A", 2));
    assert!((c.percent_top - 200.0 / 3.0).abs() < 1e-12);
}
