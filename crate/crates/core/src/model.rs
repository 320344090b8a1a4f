//! Sparse Hamiltonians of the species model and of the three-mode ring truncation.
//!
//! Both operators are sums of ladder monomials with real coefficients plus
//! their conjugates, so every matrix element is real. Matrices are stored in
//! compressed-row form with both triangles present.
//!
//! Capacity truncation is a projection: a term whose target state puts more
//! than `C` particles into a species mode is dropped.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{self, Basis};
use crate::error::{Error, Result};
use crate::params::{ModelKind, ModelParams};

/// Pseudo-random inter-species coupling `f(k, l)`, `|f| in [0.5, 1]`.
pub fn f_coupling(k: u32, l: u32) -> f64 {
    assert!(k >= 1 && l >= 1, "species labels start at 1");
    let km = (k - 1) as f64;
    let lm = (l - 1) as f64;
    let x = std::f64::consts::SQRT_2 * km * km * km + 7f64.sqrt() * lm.powi(5);
    let frac = x - x.floor();
    if frac < 0.5 {
        frac - 1.0
    } else {
        frac
    }
}

/// Real symmetric matrix in compressed-row storage, both triangles stored.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Quick size summary, printed by `basis-info`.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixStats {
    pub dim: usize,
    pub nnz: usize,
    pub bytes: u64,
    pub norm_bound: f64,
}

impl SparseHamiltonian {
    /// Build from per-row sorted, merged entries. Used by the assemblers and tests.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseHamiltonian {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let rows = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d != 0.0 {
                    vec![(i as u32, d)]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Dense symmetric input; exact zeros are dropped.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::input("matrix is not square"));
        }
        for i in 0..m.nrows() {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::input(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j as u32, m[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Storage footprint of the compressed-row arrays.
    pub fn bytes(&self) -> u64 {
        (self.row_ptr.len() * 8 + self.cols.len() * 4 + self.vals.len() * 8) as u64
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .into_par_iter()
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .reduce(|| 0.0, f64::max)
    }

    pub fn stats(&self) -> MatrixStats {
        MatrixStats {
            dim: self.dim,
            nnz: self.nnz(),
            bytes: self.bytes(),
            norm_bound: self.norm_bound(),
        }
    }

    /// `max |H_ij - H_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        (0..self.dim)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .map(|(&j, &v)| (v - self.get(j as usize, i)).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Copy with every entry multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `y = H x` for complex vectors, rows processed in parallel.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        const CHUNK: usize = 4096;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * CHUNK;
            for (r, yi) in out.iter_mut().enumerate() {
                let i = base + r;
                let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let mut re = 0.0;
                let mut im = 0.0;
                for p in a..b {
                    let v = self.vals[p];
                    let xj = x[self.cols[p] as usize];
                    re += v * xj.re;
                    im += v * xj.im;
                }
                *yi = Complex64::new(re, im);
            }
        });
    }

    /// `<x|H|x>` (real for symmetric `H`).
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let mut hx = vec![Complex64::new(0.0, 0.0); self.dim];
        self.matvec(x, &mut hx);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j as usize)] = v;
            }
        }
        m
    }

    /// Coordinate dump: `row col value`, 1-based, 17 significant digits.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Ladder operator acting on one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

/// Apply a product of ladder operators, written left to right, to `occ`.
///
/// The rightmost operator acts first. Returns the squared amplitude as an
/// exact integer, or `None` when an annihilator hits an empty mode.
pub fn apply_monomial(occ: &mut [u32], ops: &[Ladder]) -> Option<u128> {
    let mut amp2: u128 = 1;
    for op in ops.iter().rev() {
        match *op {
            Ladder::Annihilate(m) => {
                if occ[m] == 0 {
                    return None;
                }
                amp2 *= occ[m] as u128;
                occ[m] -= 1;
            }
            Ladder::Create(m) => {
                occ[m] += 1;
                amp2 *= occ[m] as u128;
            }
        }
    }
    Some(amp2)
}

/// One term `coefficient * monomial` of a Hamiltonian.
#[derive(Debug, Clone)]
pub struct Term {
    pub coefficient: f64,
    pub ops: Vec<Ladder>,
}

impl Term {
    fn new(coefficient: f64, ops: Vec<Ladder>) -> Self {
        Term { coefficient, ops }
    }
}

/// Upper bound on stored entries per row.
pub fn nnz_per_row_estimate(kind: ModelKind, q: u32) -> u64 {
    match kind {
        ModelKind::Npm => 1 + 2 * q as u64 + q as u64 * (q as u64).saturating_sub(1),
        ModelKind::Ppm3 => 3,
    }
}

/// Ladder-monomial terms of the species model.
///
/// The diagonal part `sum_k n_k - (alpha/2) n_0 n_k` is handled separately.
pub fn npm_terms(params: &ModelParams) -> Vec<Term> {
    use Ladder::*;
    let q = params.q as usize;
    let quarter = -params.alpha / 4.0;
    let mut terms = Vec::new();
    for k in 1..=q {
        terms.push(Term::new(
            quarter,
            vec![Create(0), Create(0), Annihilate(k), Annihilate(k)],
        ));
        terms.push(Term::new(
            quarter,
            vec![Create(k), Create(k), Annihilate(0), Annihilate(0)],
        ));
    }
    if params.cm != 0.0 {
        for k in 1..=q {
            for l in k + 1..=q {
                let c = params.cm / 2.0 * f_coupling(k as u32, l as u32);
                terms.push(Term::new(
                    c,
                    vec![Create(k), Create(k), Annihilate(l), Annihilate(l)],
                ));
                terms.push(Term::new(
                    c,
                    vec![Create(l), Create(l), Annihilate(k), Annihilate(k)],
                ));
            }
        }
    }
    terms
}

/// Mode index of ring momentum `k in {-1, 0, 1}` in the three-mode basis.
pub fn ppm3_mode(k: i32) -> usize {
    match k {
        0 => 0,
        -1 => 1,
        1 => 2,
        _ => panic!("momentum {k} outside the three-mode truncation"),
    }
}

/// Quartic terms of the three-mode truncation, expanded from the index ranges
/// `k, l in {-1, 0, 1}`, `m in [max(-k-1, l-1), min(-k+1, l+1)]`.
pub fn ppm3_terms(params: &ModelParams) -> Vec<Term> {
    use Ladder::*;
    let c = -params.alpha / 4.0;
    let mut terms = Vec::new();
    for k in -1i32..=1 {
        for l in -1i32..=1 {
            let lo = (-k - 1).max(l - 1);
            let hi = (-k + 1).min(l + 1);
            for m in lo..=hi {
                terms.push(Term::new(
                    c,
                    vec![
                        Create(ppm3_mode(k)),
                        Create(ppm3_mode(l)),
                        Annihilate(ppm3_mode(m + k)),
                        Annihilate(ppm3_mode(l - m)),
                    ],
                ));
            }
        }
    }
    terms
}

/// Assemble `diag(s) + sum_terms` over `basis`.
///
/// Each row holds the image `H|s>`; contributions to one entry are summed in a
/// canonical order (sorted by value) so that `H_ij` and `H_ji` are bitwise equal.
fn assemble<D>(basis: &Basis, diag: D, terms: &[Term]) -> SparseHamiltonian
where
    D: Fn(&[u16]) -> f64 + Sync,
{
    let dim = basis.dim();
    let n_modes = basis.n_modes();
    let cap = basis.capacity() as u32;

    let build_row =
        |i: usize, scratch: &mut Vec<(u32, f64)>, work: &mut Vec<u32>, key: &mut Vec<u16>| {
            scratch.clear();
            let occ = basis.occupations(i);
            let d = diag(occ);
            if d != 0.0 {
                scratch.push((i as u32, d));
            }
            for term in terms {
                work.clear();
                work.extend(occ.iter().map(|&x| x as u32));
                let Some(amp2) = apply_monomial(work, &term.ops) else {
                    continue;
                };
                if work.iter().skip(1).any(|&x| x > cap) {
                    continue;
                }
                debug_assert_eq!(
                    work.iter().map(|&x| x as u64).sum::<u64>(),
                    basis.params().n as u64
                );
                key.clear();
                key.extend(work.iter().map(|&x| x as u16));
                let j = basis.rank_unchecked(key);
                let v = term.coefficient * (amp2 as f64).sqrt();
                scratch.push((j as u32, v));
            }
            scratch.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            // merge duplicates, drop exact zeros
            let mut w = 0;
            let mut r = 0;
            while r < scratch.len() {
                let col = scratch[r].0;
                let mut sum = 0.0;
                while r < scratch.len() && scratch[r].0 == col {
                    sum += scratch[r].1;
                    r += 1;
                }
                if sum != 0.0 {
                    scratch[w] = (col, sum);
                    w += 1;
                }
            }
            scratch.truncate(w);
        };

    const BLOCK: usize = 2048;
    let n_blocks = dim.div_ceil(BLOCK);

    // pass 1: row lengths
    let counts: Vec<Vec<usize>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut scratch = Vec::new();
            let mut work = Vec::with_capacity(n_modes);
            let mut key = Vec::with_capacity(n_modes);
            (b * BLOCK..((b + 1) * BLOCK).min(dim))
                .map(|i| {
                    build_row(i, &mut scratch, &mut work, &mut key);
                    scratch.len()
                })
                .collect()
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    row_ptr.push(0usize);
    for c in counts.iter().flatten() {
        row_ptr.push(row_ptr.last().unwrap() + c);
    }
    drop(counts);
    let nnz = *row_ptr.last().unwrap();
    let mut cols = vec![0u32; nnz];
    let mut vals = vec![0f64; nnz];

    // pass 2: fill disjoint per-block slices
    let mut col_slices = Vec::with_capacity(n_blocks);
    let mut val_slices = Vec::with_capacity(n_blocks);
    {
        let mut col_rest: &mut [u32] = &mut cols;
        let mut val_rest: &mut [f64] = &mut vals;
        for b in 0..n_blocks {
            let len = row_ptr[((b + 1) * BLOCK).min(dim)] - row_ptr[b * BLOCK];
            let (c, cr) = col_rest.split_at_mut(len);
            let (v, vr) = val_rest.split_at_mut(len);
            col_slices.push(c);
            val_slices.push(v);
            col_rest = cr;
            val_rest = vr;
        }
    }
    col_slices
        .into_par_iter()
        .zip(val_slices)
        .enumerate()
        .for_each(|(b, (cs, vs))| {
            let mut scratch = Vec::new();
            let mut work = Vec::with_capacity(n_modes);
            let mut key = Vec::with_capacity(n_modes);
            let mut pos = 0;
            for i in b * BLOCK..((b + 1) * BLOCK).min(dim) {
                build_row(i, &mut scratch, &mut work, &mut key);
                for &(c, v) in scratch.iter() {
                    cs[pos] = c;
                    vs[pos] = v;
                    pos += 1;
                }
            }
        });

    SparseHamiltonian {
        dim,
        row_ptr,
        cols,
        vals,
    }
}

fn check_basis(params: &ModelParams, basis: &Basis) -> Result<()> {
    params.validate()?;
    if !basis.matches(params) {
        let b = basis.params();
        return Err(Error::domain(format!(
            "basis (N={}, Q={}, C={}) does not match parameters (N={}, Q={}, C={})",
            b.n, b.q, b.capacity, params.n, params.q, params.capacity
        )));
    }
    Ok(())
}

/// Species-model Hamiltonian over `basis`.
pub fn build_npm(params: &ModelParams, basis: &Basis) -> Result<SparseHamiltonian> {
    check_basis(params, basis)?;
    let half = params.alpha / 2.0;
    let diag = move |occ: &[u16]| -> f64 {
        let n0 = occ[0] as f64;
        occ[1..]
            .iter()
            .map(|&nk| nk as f64 * (1.0 - half * n0))
            .sum()
    };
    Ok(assemble(basis, diag, &npm_terms(params)))
}

/// Three-mode ring Hamiltonian over a basis with two species modes (k = -1, +1).
pub fn build_ppm3(params: &ModelParams, basis: &Basis) -> Result<SparseHamiltonian> {
    if params.q != 2 {
        return Err(Error::domain(format!(
            "the three-mode truncation needs Q = 2 (modes k = -1, +1), got Q = {}",
            params.q
        )));
    }
    check_basis(params, basis)?;
    let kinetic = |occ: &[u16]| -> f64 { occ[1] as f64 + occ[2] as f64 };
    Ok(assemble(basis, kinetic, &ppm3_terms(params)))
}

/// Dispatch on the model kind.
pub fn build(kind: ModelKind, params: &ModelParams, basis: &Basis) -> Result<SparseHamiltonian> {
    match kind {
        ModelKind::Npm => build_npm(params, basis),
        ModelKind::Ppm3 => build_ppm3(params, basis),
    }
}

/// Bytes of an assembled matrix with `nnz` stored entries.
pub fn matrix_bytes(dim: u64, nnz: u64) -> u64 {
    nnz.saturating_mul(12).saturating_add(dim.saturating_mul(8))
}

/// Upper bound on the bytes of the assembled matrix, from the number of terms.
pub fn matrix_bytes_estimate(kind: ModelKind, params: &ModelParams, dim: u64) -> u64 {
    let per_row = nnz_per_row_estimate(kind, params.q).min(dim);
    dim.saturating_mul(per_row * 12 + 8)
}

/// Stored entries of the species-model matrix, counted in one streaming pass
/// over the basis. Diagonal entries are always counted, so zero diagonals
/// make this a slight overcount. `None` for the ring truncation.
pub fn count_nnz(kind: ModelKind, params: &ModelParams) -> Result<Option<u64>> {
    if kind != ModelKind::Npm {
        return Ok(None);
    }
    let cap = params.effective_capacity() as u16;
    let pairs = params.cm != 0.0;
    let mut total = 0u64;
    basis::for_each_state(params, |occ| {
        let n0 = occ[0];
        let mut row = 1u64;
        let (mut givers, mut takers, mut both) = (0u64, 0u64, 0u64);
        for &nk in &occ[1..] {
            let give = nk >= 2;
            let take = nk + 2 <= cap;
            row += give as u64 + (n0 >= 2 && take) as u64;
            givers += give as u64;
            takers += take as u64;
            both += (give && take) as u64;
        }
        if pairs {
            // ordered pairs (taker, giver) of distinct modes
            row += givers * takers - both;
        }
        total += row;
    })?;
    Ok(Some(total))
}
