mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use qbreak_core::basis::Basis;
use qbreak_core::krylov::{PropagationConfig, TolProfile};
use qbreak_core::model;
use qbreak_core::observables::{self, detect, expectation_nk, r_min, threshold, OccupationTrace};
use qbreak_core::{ModelKind, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic(rel: Vec<f64>, n: u32) -> OccupationTrace {
    let nf = n as f64;
    OccupationTrace {
        model: ModelKind::Npm,
        params: ModelParams::new(n, 1, 0.1, 0.0, n).unwrap(),
        times: (0..rel.len()).map(|j| j as f64 * 0.01).collect(),
        n_mean: rel.iter().map(|r| vec![r * nf, (1.0 - r) * nf]).collect(),
        tol_profile: TolProfile::Strict,
    }
}

#[test]
fn expectation_matches_dense_diagonal_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ModelParams::new(7, 3, 0.1, 0.0, 5).unwrap();
    let basis = Basis::enumerate(&p, u64::MAX).unwrap();
    let psi = common::random_state(&mut rng, basis.dim());
    for k in 0..basis.n_modes() {
        let d = DVector::from_iterator(basis.dim(), basis.iter().map(|s| s[k] as f64));
        let op = nalgebra::DMatrix::from_diagonal(&d);
        let re = DVector::from_iterator(basis.dim(), psi.amplitudes.iter().map(|a| a.re));
        let im = DVector::from_iterator(basis.dim(), psi.amplitudes.iter().map(|a| a.im));
        let oracle = re.dot(&(&op * &re)) + im.dot(&(&op * &im));
        let got = expectation_nk(&psi, &basis, k).unwrap();
        assert!((got - oracle).abs() <= 1e-14, "mode {k}: {got} vs {oracle}");
    }
}

#[test]
fn recorded_trace_closes_particle_number() {
    let p = ModelParams::with_lambda(12, 3, 1.2, 0.05, 6).unwrap();
    let basis = Basis::enumerate(&p, u64::MAX).unwrap();
    let h = model::build(ModelKind::Npm, &p, &basis).unwrap();
    let cfg = PropagationConfig::new(1e-6, 0.01, 10.0);
    let (trace, _) = observables::record_occupations(ModelKind::Npm, &basis, &h, &cfg).unwrap();
    assert_eq!(trace.len(), 1001);
    assert_eq!(trace.n_mean[0][0], 12.0);
    assert!(trace.closure_error() <= 10.0 * cfg.tol);
    assert!(r_min(&trace) < 1.0);
}

#[test]
fn species_stay_equal_without_inter_species_coupling() {
    let p = ModelParams::with_lambda(10, 3, 0.9, 0.0, 10).unwrap();
    let basis = Basis::enumerate(&p, u64::MAX).unwrap();
    let h = model::build(ModelKind::Npm, &p, &basis).unwrap();
    let cfg = PropagationConfig::new(1e-8, 0.05, 10.0);
    let (trace, _) = observables::record_occupations(ModelKind::Npm, &basis, &h, &cfg).unwrap();
    for row in &trace.n_mean {
        assert!((row[1] - row[2]).abs() <= 1e-6 && (row[1] - row[3]).abs() <= 1e-6);
    }
}

#[test]
fn free_model_keeps_the_condensate() {
    let p = ModelParams::new(9, 2, 0.0, 0.0, 9).unwrap();
    let basis = Basis::enumerate(&p, u64::MAX).unwrap();
    let h = model::build(ModelKind::Npm, &p, &basis).unwrap();
    let cfg = PropagationConfig::new(1e-6, 0.1, 5.0);
    let (trace, _) = observables::record_occupations(ModelKind::Npm, &basis, &h, &cfg).unwrap();
    assert!(trace.n_mean.iter().all(|row| (row[0] - 9.0).abs() <= 1e-12));
    assert!(threshold(&[&trace]).is_err());
}

proptest! {
    #[test]
    fn detection_prefix_property(rel in prop::collection::vec(0.0f64..1.0, 1..200), b in 0.01f64..0.99) {
        let tr = synthetic(rel.clone(), 20);
        match detect(&tr, b) {
            Some(t) => {
                let j = tr.times.iter().position(|&x| x == t).unwrap();
                prop_assert!(tr.relative_condensate()[j] < b);
                prop_assert!(tr.relative_condensate()[..j].iter().all(|&r| r >= b));
            }
            None => prop_assert!(tr.relative_condensate().iter().all(|&r| r >= b)),
        }
    }

    #[test]
    fn threshold_never_decreases_when_adding_a_less_depleted_trace(
        a in prop::collection::vec(0.05f64..0.99, 2..50),
        b in prop::collection::vec(0.05f64..0.99, 2..50),
    ) {
        let ta = synthetic(a, 20);
        let tb = synthetic(b, 20);
        let one = threshold(&[&ta]).unwrap();
        let both = threshold(&[&ta, &tb]).unwrap();
        prop_assert!(both >= one);
        let best = r_min(&ta).max(r_min(&tb));
        prop_assert!(both > best && both < 1.0);
    }
}
