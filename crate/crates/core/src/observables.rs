//! Mode occupations along a trajectory and break-time extraction.
//!
//! A break-time is the first sample at which `<n_0>/N` drops below a
//! threshold shared by a whole scan. The threshold is placed 80% of the way
//! from the least-depleted trace's minimum up to 1.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::krylov::{
    evolve_diagonal, PropagationConfig, PropagationStats, QuantumState, TolProfile,
};
use crate::model::SparseHamiltonian;
use crate::params::{ModelKind, ModelParams};

/// Fraction of the gap `1 - max r_min` that the threshold sits below 1.
pub const THRESHOLD_FRACTION: f64 = 0.8;

/// `<n_k>` of a state: `sum_s |psi_s|^2 n_k(s)`.
pub fn expectation_nk(state: &QuantumState, basis: &Basis, k: usize) -> Result<f64> {
    if k >= basis.n_modes() {
        return Err(Error::domain(format!(
            "mode index {k} out of range (modes 0..{})",
            basis.n_modes()
        )));
    }
    if state.dim() != basis.dim() {
        return Err(Error::input(format!(
            "state has dimension {}, basis has {}",
            state.dim(),
            basis.dim()
        )));
    }
    Ok(state
        .amplitudes
        .iter()
        .zip(basis.iter())
        .map(|(a, occ)| a.norm_sqr() * occ[k] as f64)
        .sum())
}

/// Sampled `<n_k>(t)` for every mode of one simulation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationTrace {
    pub model: ModelKind,
    pub params: ModelParams,
    pub times: Vec<f64>,
    /// `n_mean[j][k]` is `<n_k>` at `times[j]`.
    pub n_mean: Vec<Vec<f64>>,
    pub tol_profile: TolProfile,
}

impl OccupationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_mean.first().map_or(0, Vec::len)
    }

    /// `<n_k>(t)` as a series.
    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.n_mean.iter().map(|row| row[k]).collect()
    }

    /// `<n_0>(t) / N`.
    pub fn relative_condensate(&self) -> Vec<f64> {
        let n = self.params.n as f64;
        self.n_mean.iter().map(|row| row[0] / n).collect()
    }

    /// Largest `|sum_k <n_k> - N|` over the samples.
    pub fn closure_error(&self) -> f64 {
        let n = self.params.n as f64;
        self.n_mean
            .iter()
            .map(|row| (row.iter().sum::<f64>() - n).abs())
            .fold(0.0, f64::max)
    }

    /// Write `time,n0,...,nQ` with 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("time".to_string())
            .chain((0..self.n_modes()).map(|k| format!("n{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, row) in self.times.iter().zip(&self.n_mean) {
            let mut line = fmt_sig(*t);
            for v in row {
                line.push(',');
                line.push_str(&fmt_sig(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Parse the CSV written by [`OccupationTrace::write_csv`] into `(times, n_mean)`.
pub fn read_trace_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::input("empty trace file"))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols[0] != "time" {
        return Err(Error::input(format!("unexpected trace header: {header}")));
    }
    let mut times = Vec::new();
    let mut n_mean = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::input(format!("trace line {}: {e}", lineno + 2)))?;
        if vals.len() != cols.len() {
            return Err(Error::input(format!(
                "trace line {} has {} fields, expected {}",
                lineno + 2,
                vals.len(),
                cols.len()
            )));
        }
        times.push(vals[0]);
        n_mean.push(vals[1..].to_vec());
    }
    Ok((times, n_mean))
}

/// Format with 12 significant digits, fixed notation for moderate exponents.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        let s = format!("{v:.decimals$}");
        trim_zeros(&s).to_string()
    } else {
        let (mant, e) = sci.split_at(sci.find('e').unwrap());
        format!("{}{}", trim_zeros(mant), e)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Evolve the condensate state and record all mode occupations.
pub fn record_occupations(
    model: ModelKind,
    basis: &Basis,
    h: &SparseHamiltonian,
    cfg: &PropagationConfig,
) -> Result<(OccupationTrace, PropagationStats)> {
    if h.dim() != basis.dim() {
        return Err(Error::input("Hamiltonian and basis dimensions differ"));
    }
    let ops = (0..basis.n_modes())
        .map(|k| basis.mode_occupations(k))
        .collect::<Result<Vec<_>>>()?;
    let psi0 = QuantumState::basis_vector(basis.dim(), 0);
    let out = evolve_diagonal(h, &psi0, cfg, &ops)?;
    let trace = OccupationTrace {
        model,
        params: *basis.params(),
        times: out.times,
        n_mean: out.values,
        tol_profile: cfg.profile(),
    };
    Ok((trace, out.stats))
}

/// Minimal relative condensate occupation over the sampled grid.
pub fn r_min(trace: &OccupationTrace) -> f64 {
    assert!(!trace.is_empty(), "r_min of an empty trace");
    trace
        .relative_condensate()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Threshold from a set of minimal relative occupations.
pub fn threshold_from_minima(r_mins: &[f64]) -> f64 {
    assert!(!r_mins.is_empty(), "threshold of an empty scan");
    let best = r_mins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    1.0 - (1.0 - best) * THRESHOLD_FRACTION
}

/// Traces whose minimum is within this distance of 1 count as undepleted.
const UNDEPLETED: f64 = 1e-12;

/// Scan-wide threshold `1 - (1 - max r_min) * 0.8`.
pub fn threshold(scan: &[&OccupationTrace]) -> Result<f64> {
    if scan.is_empty() {
        return Err(Error::input("threshold needs at least one trace"));
    }
    let mut mins = Vec::with_capacity(scan.len());
    for tr in scan {
        let r = r_min(tr);
        if r >= 1.0 - UNDEPLETED {
            return Err(Error::ThresholdUndefined {
                point: tr.params.to_string(),
            });
        }
        mins.push(r);
    }
    Ok(threshold_from_minima(&mins))
}

/// First sampled time with `<n_0>/N < b_th`, if any.
pub fn detect(trace: &OccupationTrace, b_th: f64) -> Option<f64> {
    assert!(
        b_th > 0.0 && b_th < 1.0,
        "threshold must lie in (0, 1), got {b_th}"
    );
    trace
        .relative_condensate()
        .iter()
        .position(|&r| r < b_th)
        .map(|j| trace.times[j])
}

/// Break-time of one point of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreaktimeResult {
    pub params: ModelParams,
    pub r_min: f64,
    pub b_th: f64,
    /// `None` when the trace never crosses the threshold.
    pub t_q: Option<f64>,
}

/// Threshold over the whole set and the break-time of every trace.
pub fn breaktimes(scan: &[&OccupationTrace]) -> Result<(f64, Vec<BreaktimeResult>)> {
    let b_th = threshold(scan)?;
    let results = scan
        .iter()
        .map(|tr| BreaktimeResult {
            params: tr.params,
            r_min: r_min(tr),
            b_th,
            t_q: detect(tr, b_th),
        })
        .collect();
    Ok((b_th, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn trace_from(rel: &[f64], t_step: f64) -> OccupationTrace {
        let params = ModelParams::new(10, 1, 0.1, 0.0, 10).unwrap();
        OccupationTrace {
            model: ModelKind::Npm,
            params,
            times: (0..rel.len()).map(|j| j as f64 * t_step).collect(),
            n_mean: rel
                .iter()
                .map(|r| vec![10.0 * r, 10.0 * (1.0 - r)])
                .collect(),
            tol_profile: TolProfile::Strict,
        }
    }

    #[test]
    fn condensate_expectations() {
        let p = ModelParams::new(4, 3, 0.1, 0.0, 4).unwrap();
        let basis = Basis::enumerate(&p, u64::MAX).unwrap();
        let psi = QuantumState::basis_vector(basis.dim(), 0);
        assert_eq!(expectation_nk(&psi, &basis, 0).unwrap(), 4.0);
        for k in 1..4 {
            assert_eq!(expectation_nk(&psi, &basis, k).unwrap(), 0.0);
        }
        assert!(expectation_nk(&psi, &basis, 4).is_err());
    }

    #[test]
    fn superposition_expectation() {
        let p = ModelParams::new(2, 1, 0.1, 0.0, 2).unwrap();
        let basis = Basis::enumerate(&p, u64::MAX).unwrap();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amps[basis.rank(&[2, 0]).unwrap()] = Complex64::new(a, 0.0);
        amps[basis.rank(&[0, 2]).unwrap()] = Complex64::new(0.0, a);
        let psi = QuantumState::new(amps, 0.0);
        assert!((expectation_nk(&psi, &basis, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn minimum_and_threshold() {
        assert_eq!(r_min(&trace_from(&[1.0, 1.0, 1.0], 0.01)), 1.0);
        assert_eq!(r_min(&trace_from(&[1.0, 0.9, 0.95], 0.01)), 0.9);
        assert!((threshold_from_minima(&[0.6]) - 0.68).abs() < 1e-15);
        assert!((threshold_from_minima(&[0.3, 0.95]) - 0.96).abs() < 1e-15);
        let flat = trace_from(&[1.0, 1.0], 0.01);
        assert!(matches!(
            threshold(&[&flat]),
            Err(Error::ThresholdUndefined { .. })
        ));
    }

    #[test]
    fn detection() {
        let tr = trace_from(&[1.0, 0.9, 0.7, 0.8], 0.01);
        assert_eq!(detect(&tr, 0.75), Some(0.02));
        assert_eq!(detect(&tr, 0.5), None);
        let (b_th, res) = breaktimes(&[&tr]).unwrap();
        assert!((b_th - (1.0 - 0.3 * 0.8)).abs() < 1e-15);
        assert_eq!(res[0].t_q, Some(0.02));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(0.01), "0.01");
        assert_eq!(fmt_sig(50.0), "50");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(49.99999999999999), "50");
        assert_eq!(fmt_sig(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig(-2.0 / 3.0), "-0.666666666667");
    }

    #[test]
    fn csv_round_trip() {
        let tr = trace_from(&[1.0, 0.9, 0.7], 0.01);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,n0,n1\n0,10,0\n"));
        let (times, n_mean) = read_trace_csv(&buf[..]).unwrap();
        assert_eq!(times, tr.times);
        for (a, b) in n_mean.iter().flatten().zip(tr.n_mean.iter().flatten()) {
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0));
        }
    }
}
