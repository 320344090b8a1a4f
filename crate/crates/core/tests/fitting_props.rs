use proptest::prelude::*;
use qbreak_core::fitting::{fit, FitForm, FitOptions};

fn grid() -> Vec<f64> {
    (1..=20).map(f64::from).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn power_law_round_trip(a in 0.1f64..10.0, b in -1.0f64..1.0, c in prop_oneof![-3.0f64..-0.1, 0.1f64..2.0]) {
        let xs = grid();
        let ys: Vec<f64> = xs.iter().map(|x| a * x.powf(c) + b).collect();
        let r = fit(FitForm::Power, &xs, &ys, &FitOptions::default()).unwrap();
        prop_assert!(r.converged);
        prop_assert!((r.param("a") - a).abs() <= 1e-4 * a.max(1.0), "{:?}", r);
        prop_assert!((r.param("b") - b).abs() <= 1e-4, "{:?}", r);
        prop_assert!((r.param("c") - c).abs() <= 1e-4, "{:?}", r);
    }

    #[test]
    fn shifted_power_round_trip(a in 0.1f64..10.0, d in 0.0f64..0.9, c in prop_oneof![-3.0f64..-0.1, 0.1f64..2.0]) {
        let xs: Vec<f64> = (0..12).map(|i| 1.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a * (x - d).powf(c)).collect();
        let r = fit(FitForm::ShiftedPower, &xs, &ys, &FitOptions::default()).unwrap();
        prop_assert!(r.converged);
        prop_assert!((r.param("a") - a).abs() <= 1e-4 * a.max(1.0), "{:?}", r);
        prop_assert!((r.param("d") - d).abs() <= 1e-4, "{:?}", r);
        prop_assert!((r.param("c") - c).abs() <= 1e-4, "{:?}", r);
    }

    #[test]
    fn linear_and_log_are_exact(m in -5.0f64..5.0, n in -5.0f64..5.0) {
        let xs = grid();
        let ys: Vec<f64> = xs.iter().map(|x| m * x + n).collect();
        let r = fit(FitForm::Linear, &xs, &ys, &FitOptions::default()).unwrap();
        prop_assert!((r.param("m") - m).abs() <= 1e-10 && (r.param("n") - n).abs() <= 1e-10);
        let ys: Vec<f64> = xs.iter().map(|x| m * x.ln() + n).collect();
        let r = fit(FitForm::Log, &xs, &ys, &FitOptions::default()).unwrap();
        prop_assert!((r.param("p") - m).abs() <= 1e-10 && (r.param("q") - n).abs() <= 1e-10);
    }

    #[test]
    fn linear_scale_covariance(ys in prop::collection::vec(-100.0f64..100.0, 5), k in -4i32..4) {
        let xs = [1.0, 2.0, 3.5, 4.0, 7.0];
        let s = 2f64.powi(k);
        let scaled: Vec<f64> = ys.iter().map(|y| y * s).collect();
        let o = FitOptions::default();
        let a = fit(FitForm::Linear, &xs, &ys, &o).unwrap();
        let b = fit(FitForm::Linear, &xs, &scaled, &o).unwrap();
        prop_assert_eq!(b.param("m"), a.param("m") * s);
        prop_assert_eq!(b.param("n"), a.param("n") * s);
    }

    #[test]
    fn fits_are_deterministic(ys in prop::collection::vec(0.5f64..10.0, 8)) {
        let xs: Vec<f64> = (1..=8).map(f64::from).collect();
        for form in FitForm::ALL {
            let a = fit(form, &xs, &ys, &FitOptions::default()).unwrap();
            let b = fit(form, &xs, &ys, &FitOptions::default()).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }
}
