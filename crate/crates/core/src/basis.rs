//! Number-conserving Fock basis with a per-mode occupation cap.
//!
//! A basis state is the occupation vector `(n_0, n_1, ..., n_Q)` with
//! `sum n_k = N` and `n_k <= C` for `k >= 1`. The condensate mode `n_0` is
//! uncapped. States are ordered lexicographically *descending*, so the
//! condensate state `(N, 0, ..., 0)` has rank 0.
//!
//! Ranking uses counting tables: `ways[j][r]` is the number of ways `j`
//! capped modes hold exactly `r` particles. No hash index is kept, which
//! keeps the memory footprint at the state table itself.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Largest dimension accepted (the count type is `u64`, we keep the top bit free).
pub const MAX_DIMENSION: u64 = 1 << 63;

/// Bytes per complex amplitude, used for memory estimates.
pub const BYTES_PER_AMPLITUDE: u64 = 16;

/// Occupation vector of one basis element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FockState(pub Vec<u16>);

impl FockState {
    /// The condensate state `(N, 0, ..., 0)` with `q` species modes.
    pub fn condensate(n: u32, q: u32) -> Self {
        let mut occ = vec![0u16; q as usize + 1];
        occ[0] = n as u16;
        FockState(occ)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&x| x as u64).sum()
    }
}

impl std::fmt::Display for FockState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// Counting tables for `j` capped modes, `j = 0..=q`.
#[derive(Debug, Clone)]
struct CountTables {
    /// `ways[j][r]`: compositions of exactly `r` into `j` parts each in `[0, cap]`.
    ways: Vec<Vec<u64>>,
    /// `cum[j][r] = sum_{s <= r} ways[j][s]`.
    cum: Vec<Vec<u64>>,
}

impl CountTables {
    fn build(n: u32, q: u32, cap: u32) -> Result<Self> {
        let n = n as usize;
        let cap = cap as usize;
        let mut ways = Vec::with_capacity(q as usize + 1);
        let mut row = vec![0u64; n + 1];
        row[0] = 1;
        ways.push(row);
        for j in 1..=q as usize {
            let prev = &ways[j - 1];
            let mut row = vec![0u64; n + 1];
            // sliding window over prev[r - cap ..= r]
            let mut window: u64 = 0;
            for r in 0..=n {
                window = window.checked_add(prev[r]).ok_or_else(overflow)?;
                if r > cap {
                    window -= prev[r - cap - 1];
                }
                row[r] = window;
            }
            ways.push(row);
        }
        let mut cum = Vec::with_capacity(ways.len());
        for row in &ways {
            let mut acc = 0u64;
            let mut c = Vec::with_capacity(row.len());
            for &w in row {
                acc = acc.checked_add(w).ok_or_else(overflow)?;
                c.push(acc);
            }
            cum.push(c);
        }
        Ok(CountTables { ways, cum })
    }

    /// `sum_{s=lo}^{hi} ways[j][s]`, empty when `hi < lo`.
    fn range_sum(&self, j: usize, lo: i64, hi: i64) -> u64 {
        if hi < lo || hi < 0 {
            return 0;
        }
        let hi = hi as usize;
        let upper = self.cum[j][hi];
        if lo <= 0 {
            upper
        } else {
            upper - self.cum[j][lo as usize - 1]
        }
    }
}

fn overflow() -> Error {
    Error::Resource("basis dimension exceeds 2^63 (count overflow)".to_string())
}

/// Number of basis states, computed from counting tables without enumeration.
pub fn dimension(params: &ModelParams) -> Result<u64> {
    params.validate()?;
    let cap = params.effective_capacity();
    let tables = CountTables::build(params.n, params.q, cap)?;
    let dim = *tables.cum[params.q as usize]
        .last()
        .expect("non-empty table");
    if dim >= MAX_DIMENSION {
        return Err(overflow());
    }
    Ok(dim)
}

/// Bytes needed for one complex state vector of the given dimension.
pub fn state_vector_bytes(dim: u64) -> u64 {
    dim.saturating_mul(BYTES_PER_AMPLITUDE)
}

/// Enumerated Fock basis. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Basis {
    params: ModelParams,
    n_modes: usize,
    cap: u16,
    dim: usize,
    /// Flat row-major state table, `dim * n_modes` entries.
    states: Vec<u16>,
    tables: CountTables,
}

impl Basis {
    /// Enumerate all states in canonical order.
    ///
    /// `memory_budget` bounds the bytes spent on the state table.
    pub fn enumerate(params: &ModelParams, memory_budget: u64) -> Result<Self> {
        params.validate()?;
        let cap = params.effective_capacity();
        let tables = CountTables::build(params.n, params.q, cap)?;
        let dim = *tables.cum[params.q as usize]
            .last()
            .expect("non-empty table");
        if dim >= MAX_DIMENSION {
            return Err(overflow());
        }
        let n_modes = params.n_modes();
        let table_bytes = dim.checked_mul(n_modes as u64 * 2).ok_or_else(overflow)?;
        if table_bytes > memory_budget {
            return Err(Error::Resource(format!(
                "basis table needs {table_bytes} bytes (dimension {dim}), budget is {memory_budget}"
            )));
        }
        let dim = usize::try_from(dim).map_err(|_| overflow())?;

        let mut states = Vec::with_capacity(dim * n_modes);
        let mut cur = vec![0u16; n_modes];
        cur[0] = params.n as u16;
        let mut count = 0usize;
        loop {
            states.extend_from_slice(&cur);
            count += 1;
            if !next_descending(&mut cur, cap as u16) {
                break;
            }
        }
        debug_assert_eq!(count, dim);

        Ok(Basis {
            params: *params,
            n_modes,
            cap: cap as u16,
            dim,
            states,
            tables,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn capacity(&self) -> u16 {
        self.cap
    }

    /// Occupations of state `i`.
    #[inline]
    pub fn occupations(&self, i: usize) -> &[u16] {
        &self.states[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn state(&self, i: usize) -> FockState {
        FockState(self.occupations(i).to_vec())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> + '_ {
        self.states.chunks_exact(self.n_modes)
    }

    /// Whether `basis` was built for the same `(N, Q, C)` as `params`.
    pub fn matches(&self, params: &ModelParams) -> bool {
        self.params.n == params.n
            && self.params.q == params.q
            && self.params.effective_capacity() == params.effective_capacity()
    }

    /// Check the invariants of a candidate state against this basis.
    pub fn check(&self, occ: &[u16]) -> Result<()> {
        if occ.len() != self.n_modes {
            return Err(Error::domain(format!(
                "state has {} modes, basis has {}",
                occ.len(),
                self.n_modes
            )));
        }
        let total: u64 = occ.iter().map(|&x| x as u64).sum();
        if total != self.params.n as u64 {
            return Err(Error::domain(format!(
                "state holds {total} particles, basis has N = {}",
                self.params.n
            )));
        }
        if let Some((k, &nk)) = occ
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, &nk)| nk > self.cap)
        {
            return Err(Error::domain(format!(
                "mode {k} holds {nk} particles, capacity is {}",
                self.cap
            )));
        }
        Ok(())
    }

    /// Position of a valid state in the canonical order.
    pub fn rank(&self, occ: &[u16]) -> Result<usize> {
        self.check(occ)?;
        Ok(self.rank_unchecked(occ))
    }

    /// Rank without validation. The caller guarantees `occ` is a basis state.
    #[inline]
    pub fn rank_unchecked(&self, occ: &[u16]) -> usize {
        let q = self.n_modes - 1;
        let cap = self.cap as i64;
        let mut remaining = self.params.n as i64;
        let mut rank = 0u64;
        // mode 0: every larger n_0 leaves `N - v` particles for all q species
        let n0 = occ[0] as i64;
        rank += self.tables.range_sum(q, 0, remaining - n0 - 1);
        remaining -= n0;
        for (i, &ni) in occ.iter().enumerate().skip(1) {
            let ni = ni as i64;
            let rest = q - i;
            let vmax = cap.min(remaining);
            // states with this prefix and a larger n_i: the suffix holds remaining - v, v in (ni, vmax]
            rank += self
                .tables
                .range_sum(rest, remaining - vmax, remaining - ni - 1);
            remaining -= ni;
        }
        rank as usize
    }

    /// Inverse of [`Basis::rank`].
    pub fn unrank(&self, index: usize) -> Result<FockState> {
        if index >= self.dim {
            return Err(Error::domain(format!(
                "index {index} out of range for dimension {}",
                self.dim
            )));
        }
        let q = self.n_modes - 1;
        let mut idx = index as u64;
        let mut occ = vec![0u16; self.n_modes];
        let mut remaining = self.params.n as usize;
        for i in 0..self.n_modes {
            let vmax = if i == 0 {
                remaining
            } else {
                (self.cap as usize).min(remaining)
            };
            let rest = q - i;
            let mut v = vmax as i64;
            loop {
                debug_assert!(v >= 0);
                let count = self.tables.ways[rest][remaining - v as usize];
                if idx < count {
                    break;
                }
                idx -= count;
                v -= 1;
            }
            occ[i] = v as u16;
            remaining -= v as usize;
        }
        Ok(FockState(occ))
    }

    /// Occupation of mode `k` in every basis state, as `f64`.
    pub fn mode_occupations(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.n_modes {
            return Err(Error::domain(format!(
                "mode index {k} out of range (modes 0..{})",
                self.n_modes
            )));
        }
        Ok(self.iter().map(|s| s[k] as f64).collect())
    }
}

/// Visit every state in canonical order without storing the basis.
pub fn for_each_state<F: FnMut(&[u16])>(params: &ModelParams, mut f: F) -> Result<()> {
    params.validate()?;
    let cap = params.effective_capacity() as u16;
    let mut cur = vec![0u16; params.n_modes()];
    cur[0] = params.n as u16;
    loop {
        f(&cur);
        if !next_descending(&mut cur, cap) {
            return Ok(());
        }
    }
}

/// Advance `occ` to the next state in descending lexicographic order.
/// Returns `false` when `occ` is the last state.
fn next_descending(occ: &mut [u16], cap: u16) -> bool {
    let m = occ.len();
    // particles held by the suffix after position i
    let mut suffix: u32 = 0;
    for i in (0..m.saturating_sub(1)).rev() {
        suffix += occ[i + 1] as u32;
        if occ[i] == 0 {
            continue;
        }
        let slots = (m - 1 - i) as u32;
        let moved = suffix + 1;
        if slots * cap as u32 >= moved {
            occ[i] -= 1;
            let mut left = moved;
            for slot in occ.iter_mut().skip(i + 1) {
                let v = left.min(cap as u32);
                *slot = v as u16;
                left -= v;
            }
            return true;
        }
    }
    false
}
