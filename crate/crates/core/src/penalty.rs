//! Folded penalties `p_γ(|θ|)`, their derivatives and LQA weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyKind {
    Scad,
    L1,
    Hard,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyKind::Scad),
            "l1" | "lasso" => Ok(PenaltyKind::L1),
            "hard" => Ok(PenaltyKind::Hard),
            other => Err(Error::InvalidArgument(format!("unknown penalty '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub gamma: f64,
    /// SCAD shape constant.
    pub a: f64,
    /// Floor on `|θ|` in the LQA denominator.
    pub lqa_epsilon: f64,
}

impl PenaltySpec {
    pub const DEFAULT_A: f64 = 3.7;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(kind: PenaltyKind, gamma: f64) -> Result<Self> {
        let spec = PenaltySpec { kind, gamma, a: Self::DEFAULT_A, lqa_epsilon: Self::DEFAULT_EPSILON };
        spec.validate()?;
        Ok(spec)
    }

    pub fn scad(gamma: f64) -> Result<Self> {
        Self::new(PenaltyKind::Scad, gamma)
    }

    /// No penalty at all (γ = 0).
    pub fn none() -> Self {
        PenaltySpec { kind: PenaltyKind::Scad, gamma: 0.0, a: Self::DEFAULT_A, lqa_epsilon: Self::DEFAULT_EPSILON }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        PenaltySpec { gamma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.kind == PenaltyKind::Scad && !(self.a > 2.0) {
            return Err(Error::InvalidArgument(format!("SCAD shape constant must exceed 2, got {}", self.a)));
        }
        if !(self.lqa_epsilon > 0.0) {
            return Err(Error::InvalidArgument("LQA epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.gamma > 0.0
    }
}

fn check_t(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("penalty argument must be >= 0, got {t}")));
    }
    Ok(())
}

/// `p′_γ(t)` for `t ≥ 0`.
pub fn penalty_derivative(spec: &PenaltySpec, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(derivative_unchecked(spec, t))
}

fn derivative_unchecked(spec: &PenaltySpec, t: f64) -> f64 {
    let g = spec.gamma;
    if g == 0.0 {
        return 0.0;
    }
    match spec.kind {
        PenaltyKind::Scad => {
            if t <= g {
                g
            } else {
                (spec.a * g - t).max(0.0) / (spec.a - 1.0)
            }
        }
        PenaltyKind::L1 => g,
        PenaltyKind::Hard => {
            if t <= g {
                g
            } else {
                0.0
            }
        }
    }
}

/// `p_γ(t)` for `t ≥ 0`, with `p_γ(0) = 0`.
pub fn penalty_value(spec: &PenaltySpec, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(value_unchecked(spec, t))
}

fn value_unchecked(spec: &PenaltySpec, t: f64) -> f64 {
    let g = spec.gamma;
    if g == 0.0 {
        return 0.0;
    }
    match spec.kind {
        PenaltyKind::Scad => {
            let a = spec.a;
            if t <= g {
                g * t
            } else if t <= a * g {
                -(t * t - 2.0 * a * g * t + g * g) / (2.0 * (a - 1.0))
            } else {
                (a + 1.0) * g * g / 2.0
            }
        }
        PenaltyKind::L1 => g * t,
        PenaltyKind::Hard => g * t.min(g),
    }
}

/// `Σ_j p_γ(|θ_j|)` over the given indices.
pub fn total_penalty(spec: &PenaltySpec, theta: &[f64], indices: &[usize]) -> f64 {
    indices.iter().map(|&j| value_unchecked(spec, theta[j].abs())).sum()
}

/// `p′_γ(|θ|) / max(|θ|, ε)`.
pub fn lqa_coefficient(spec: &PenaltySpec, theta_m: f64) -> f64 {
    let t = theta_m.abs();
    derivative_unchecked(spec, t) / t.max(spec.lqa_epsilon)
}
