mod common;

use proptest::prelude::*;
use qbreak_core::basis::Basis;
use qbreak_core::model;
use qbreak_core::{ModelKind, ModelParams};

fn max_abs_diff(kind: ModelKind, p: &ModelParams) -> f64 {
    let basis = Basis::enumerate(p, u64::MAX).unwrap();
    let h = model::build(kind, p, &basis).unwrap().to_dense();
    let oracle = common::oracle_matrix(kind, p, &basis);
    (h - oracle).abs().max()
}

#[test]
fn npm_matches_ladder_matrices() {
    for n in 1..=3 {
        for q in 1..=3 {
            for c in 1..=3 {
                let p = ModelParams::new(n, q, 0.137, -0.071, c).unwrap();
                let d = max_abs_diff(ModelKind::Npm, &p);
                assert!(d <= 1e-14, "N={n} Q={q} C={c}: {d}");
            }
        }
    }
}

#[test]
fn ppm3_matches_ladder_matrices() {
    for n in 1..=5 {
        for c in 1..=5 {
            let p = ModelParams::ppm3(n, 0.29, c).unwrap();
            let d = max_abs_diff(ModelKind::Ppm3, &p);
            assert!(d <= 1e-14, "N={n} C={c}: {d}");
        }
    }
}

#[test]
fn ppm3_conserves_momentum() {
    let p = ModelParams::ppm3(12, 0.1, 12).unwrap();
    let basis = Basis::enumerate(&p, u64::MAX).unwrap();
    let h = model::build(ModelKind::Ppm3, &p, &basis).unwrap();
    let momentum = |s: &[u16]| s[2] as i32 - s[1] as i32;
    for i in 0..h.dim() {
        let (cols, _) = h.row(i);
        for &j in cols {
            assert_eq!(
                momentum(basis.occupations(i)),
                momentum(basis.occupations(j as usize))
            );
        }
    }
}

#[test]
fn species_permutation_without_inter_species_coupling() {
    // with Cm = 0 swapping two species modes maps H onto itself
    let p = ModelParams::new(6, 3, 0.2, 0.0, 4).unwrap();
    let basis = Basis::enumerate(&p, u64::MAX).unwrap();
    let h = model::build(ModelKind::Npm, &p, &basis).unwrap();
    let perm: Vec<usize> = (0..basis.dim())
        .map(|i| {
            let mut s = basis.occupations(i).to_vec();
            s.swap(1, 3);
            basis.rank(&s).unwrap()
        })
        .collect();
    for i in 0..h.dim() {
        let (cols, vals) = h.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            assert_eq!(h.get(perm[i], perm[j as usize]), v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_npm_instances_match(n in 1u32..=4, q in 1u32..=3, c in 1u32..=4,
                                  alpha in 0.0f64..1.0, cm in -0.5f64..0.5) {
        let p = ModelParams::new(n, q, alpha, cm, c).unwrap();
        prop_assert!(max_abs_diff(ModelKind::Npm, &p) <= 1e-14);
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric(n in 1u32..=12, q in 1u32..=4, c in 1u32..=6,
                                             alpha in 0.0f64..0.5, cm in -0.3f64..0.3) {
        let p = ModelParams::new(n, q, alpha, cm, c).unwrap();
        let basis = Basis::enumerate(&p, u64::MAX).unwrap();
        let h = model::build(ModelKind::Npm, &p, &basis).unwrap();
        prop_assert_eq!(h.asymmetry(), 0.0);
    }
}
