use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Hamiltonian is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Condensate mode pair-coupled to `Q` species modes.
    Npm,
    /// Three-mode momentum truncation of the ring gas (k = -1, 0, +1).
    Ppm3,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Npm => f.write_str("npm"),
            ModelKind::Ppm3 => f.write_str("ppm3"),
        }
    }
}

/// Physical and truncation parameters of one simulation point.
///
/// The collective coupling is never stored; [`ModelParams::lambda`] always
/// returns `alpha * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Total particle number.
    #[serde(rename = "N")]
    pub n: u32,
    /// Number of species modes k = 1..Q (2 for the three-mode ring model).
    #[serde(rename = "Q")]
    pub q: u32,
    /// Elementary coupling.
    pub alpha: f64,
    /// Inter-species coupling.
    #[serde(rename = "Cm")]
    pub cm: f64,
    /// Occupation cap on every mode except the condensate mode.
    #[serde(rename = "C")]
    pub capacity: u32,
}

impl ModelParams {
    pub fn new(n: u32, q: u32, alpha: f64, cm: f64, capacity: u32) -> Result<Self> {
        let p = ModelParams {
            n,
            q,
            alpha,
            cm,
            capacity,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from the collective coupling; `alpha = lambda / n`.
    pub fn with_lambda(n: u32, q: u32, lambda: f64, cm: f64, capacity: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        Self::new(n, q, lambda / n as f64, cm, capacity)
    }

    /// Parameters for the three-mode ring truncation: species modes are k = -1 and k = +1.
    pub fn ppm3(n: u32, alpha: f64, capacity: u32) -> Result<Self> {
        Self::new(n, 2, alpha, 0.0, capacity)
    }

    pub fn lambda(&self) -> f64 {
        self.alpha * self.n as f64
    }

    /// Number of modes including the condensate mode.
    pub fn n_modes(&self) -> usize {
        self.q as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        if self.n > u16::MAX as u32 {
            return Err(Error::domain(format!(
                "N = {} exceeds the supported maximum {}",
                self.n,
                u16::MAX
            )));
        }
        if self.q == 0 {
            return Err(Error::domain("Q must be at least 1"));
        }
        if self.capacity == 0 {
            return Err(Error::domain("capacity C must be at least 1"));
        }
        // alpha = 0 is accepted: it is the free reference model
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::domain(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !self.cm.is_finite() {
            return Err(Error::domain("Cm must be finite"));
        }
        Ok(())
    }

    /// Capacity actually reachable by a species mode: `min(C, N)`.
    pub fn effective_capacity(&self) -> u32 {
        self.capacity.min(self.n)
    }
}

impl std::fmt::Display for ModelParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "N={} Q={} alpha={} Cm={} C={}",
            self.n, self.q, self.alpha, self.cm, self.capacity
        )
    }
}
