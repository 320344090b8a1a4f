//! Reference constructions shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qbreak_core::basis::Basis;
use qbreak_core::krylov::QuantumState;
use qbreak_core::model::f_coupling;
use qbreak_core::{ModelKind, ModelParams};
use rand::Rng;

/// Truncated single-mode annihilator on occupations `0..levels`.
pub fn annihilator(levels: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(levels, levels);
    for n in 1..levels {
        a[(n - 1, n)] = (n as f64).sqrt();
    }
    a
}

/// Ladder operator in a monomial: `(mode, creation)`.
pub type Op = (usize, bool);

/// Dense operator of a monomial on the product space of `modes` modes with
/// `levels` occupations each. Operators on different modes commute, so each
/// mode's factor is the ordered product of its own operators.
pub fn monomial(ops: &[Op], modes: usize, levels: usize) -> DMatrix<f64> {
    let a = annihilator(levels);
    let ad = a.transpose();
    let mut out = DMatrix::identity(1, 1);
    for m in 0..modes {
        let mut local = DMatrix::identity(levels, levels);
        for &(mode, dag) in ops {
            if mode == m {
                local = local * if dag { &ad } else { &a };
            }
        }
        out = out.kronecker(&local);
    }
    out
}

/// Product-space index of an occupation vector, mode 0 most significant.
pub fn product_index(occ: &[u16], levels: usize) -> usize {
    occ.iter().fold(0, |acc, &n| acc * levels + n as usize)
}

/// Full product-space Hamiltonian from explicit ladder matrices.
pub fn product_hamiltonian(kind: ModelKind, p: &ModelParams) -> DMatrix<f64> {
    let modes = p.q as usize + 1;
    let levels = p.n as usize + 1;
    let dim = levels.pow(modes as u32);
    let mut h = DMatrix::zeros(dim, dim);
    let mut add = |c: f64, ops: &[Op]| {
        h += monomial(ops, modes, levels) * c;
    };
    match kind {
        ModelKind::Npm => {
            let q = p.q as usize;
            for k in 1..=q {
                add(1.0, &[(k, true), (k, false)]);
                add(
                    -p.alpha / 2.0,
                    &[(0, true), (0, false), (k, true), (k, false)],
                );
                add(
                    -p.alpha / 4.0,
                    &[(0, true), (0, true), (k, false), (k, false)],
                );
                add(
                    -p.alpha / 4.0,
                    &[(k, true), (k, true), (0, false), (0, false)],
                );
            }
            for k in 1..=q {
                for l in k + 1..=q {
                    let c = p.cm / 2.0 * f_coupling(k as u32, l as u32);
                    add(c, &[(k, true), (k, true), (l, false), (l, false)]);
                    add(c, &[(l, true), (l, true), (k, false), (k, false)]);
                }
            }
        }
        ModelKind::Ppm3 => {
            let idx = |k: i32| match k {
                0 => 0usize,
                -1 => 1,
                1 => 2,
                _ => unreachable!(),
            };
            add(1.0, &[(1, true), (1, false)]);
            add(1.0, &[(2, true), (2, false)]);
            for k in -1i32..=1 {
                for l in -1i32..=1 {
                    for m in (-k - 1).max(l - 1)..=(-k + 1).min(l + 1) {
                        add(
                            -p.alpha / 4.0,
                            &[
                                (idx(k), true),
                                (idx(l), true),
                                (idx(m + k), false),
                                (idx(l - m), false),
                            ],
                        );
                    }
                }
            }
        }
    }
    h
}

/// Oracle matrix restricted to the truncated basis (projection `P H P`).
pub fn oracle_matrix(kind: ModelKind, p: &ModelParams, basis: &Basis) -> DMatrix<f64> {
    let full = product_hamiltonian(kind, p);
    let levels = p.n as usize + 1;
    let idx: Vec<usize> = basis.iter().map(|s| product_index(s, levels)).collect();
    DMatrix::from_fn(basis.dim(), basis.dim(), |i, j| full[(idx[i], idx[j])])
}

pub fn random_state<R: Rng>(rng: &mut R, dim: usize) -> QuantumState {
    let v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    QuantumState::new(v.into_iter().map(|a| a / n).collect(), 0.0)
}

/// Random model instance with basis dimension at most `max_dim`.
pub fn random_instance<R: Rng>(rng: &mut R, max_dim: u64) -> (ModelKind, ModelParams) {
    loop {
        let kind = if rng.gen_bool(0.5) {
            ModelKind::Npm
        } else {
            ModelKind::Ppm3
        };
        let n = rng.gen_range(2..=30u32);
        let lambda = rng.gen_range(0.2..2.0);
        let p = match kind {
            ModelKind::Npm => {
                let q = rng.gen_range(1..=4u32);
                let c = rng.gen_range(1..=n);
                ModelParams::with_lambda(n, q, lambda, rng.gen_range(-0.1..0.1), c).unwrap()
            }
            ModelKind::Ppm3 => {
                let c = rng.gen_range(1..=n);
                ModelParams::ppm3(n, lambda / n as f64, c).unwrap()
            }
        };
        if let Ok(d) = qbreak_core::basis::dimension(&p) {
            if d >= 2 && d <= max_dim {
                return (kind, p);
            }
        }
    }
}
