//! Closed-form bound calculators for RUMnet hypothesis classes.
//!
//! All logarithms are natural. `c1` and `c2` are the unspecified universal
//! constants of the bounds; they default to 1.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Assortment size κ.
    pub kappa: usize,
    /// Number of training samples T.
    pub samples: usize,
    /// Per-node weight 1-norm bound M.
    pub weight_bound: f64,
    /// Network depth ℓ.
    pub depth: u32,
    /// Failure probability δ.
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl BoundInputs {
    pub fn new(kappa: usize, samples: usize, weight_bound: f64, depth: u32, delta: f64) -> Self {
        BoundInputs {
            kappa,
            samples,
            weight_bound,
            depth,
            delta,
            c1: 1.0,
            c2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.kappa == 0 || self.samples == 0 {
            return fail("kappa and T must be positive".into());
        }
        if !(self.weight_bound >= 0.0 && self.weight_bound.is_finite()) {
            return fail(format!("M must be finite and >= 0, got {}", self.weight_bound));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return fail("c1 and c2 must be positive".into());
        }
        Ok(())
    }

    /// `M^ℓ`, with `0⁰ = 1`.
    fn m_pow(&self, exponent: u32) -> f64 {
        self.weight_bound.powi(exponent as i32)
    }
}

/// The two additive terms of the generalization gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTerms {
    /// `c₁ κ√κ / √T · e^{2M} · M^ℓ`.
    pub complexity: f64,
    /// `4 c₂ √(2 ln(4/δ) / T)`.
    pub confidence: f64,
}

impl GapTerms {
    pub fn total(&self) -> f64 {
        self.complexity + self.confidence
    }
}

pub fn generalization_gap_terms(b: &BoundInputs) -> Result<GapTerms> {
    b.validate()?;
    let kappa = b.kappa as f64;
    let t = b.samples as f64;
    let complexity = b.c1 * kappa * kappa.sqrt() / t.sqrt() * (2.0 * b.weight_bound).exp() * b.m_pow(b.depth);
    let confidence = 4.0 * b.c2 * (2.0 * (4.0 / b.delta).ln() / t).sqrt();
    Ok(GapTerms {
        complexity,
        confidence,
    })
}

/// Upper bound on expected minus empirical log-loss, holding with
/// probability at least `1 − δ`.
pub fn generalization_gap(b: &BoundInputs) -> Result<f64> {
    generalization_gap_terms(b).map(|t| t.total())
}

/// Number of latent samples `K′` sufficient for an `ε`-accurate compact
/// representation:
///
/// `⌈ 1/(2ε²) · ln(1/δ) · (κ e^{2M})² · ln ⌈16 κ³ e^{4M} M^{2ℓ} / (max(c₁², c₂²) ε²)⌉ ⌉`.
pub fn compact_k(epsilon: f64, b: &BoundInputs) -> Result<u64> {
    b.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let kappa = b.kappa as f64;
    let m = b.weight_bound;
    let c_sq = (b.c1 * b.c1).max(b.c2 * b.c2);
    let inner = (16.0 / (c_sq * epsilon * epsilon) * kappa.powi(3) * (4.0 * m).exp() * b.m_pow(2 * b.depth)).ceil();
    if !(inner >= 2.0) || !inner.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degenerate inner argument {inner}; needs to be at least 2"
        )));
    }
    let value = 1.0 / (2.0 * epsilon * epsilon)
        * (1.0 / b.delta).ln()
        * (kappa * (2.0 * m).exp()).powi(2)
        * inner.ln();
    let k = value.ceil();
    if !k.is_finite() || k > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("K' overflows: {value}")));
    }
    Ok((k as u64).max(1))
}

/// Lower bound `e^{−2M}/κ` on any choice probability when every utility
/// lies in `[−M, M]`.
pub fn pmin_bound(kappa: usize, weight_bound: f64) -> Result<f64> {
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be positive".into()));
    }
    Ok((-2.0 * weight_bound).exp() / kappa as f64)
}
