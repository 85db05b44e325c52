//! Asymptotic-arbitrage regime of a constant-coefficient Black–Scholes
//! large market, and the explicit set sequences that witness it.
//!
//! In this model NAA1, NAA2, NSAA1 and NSAA2 all hold exactly when
//! `Σ (bᵢ/σᵢ)²` converges, and SAA1 and SAA2 (hence AA1 and AA2) all hold
//! when it diverges. The verdict is therefore a dichotomy; the four flags
//! are kept in the output for the general vocabulary. The upper and lower
//! envelopes over martingale-measure families collapse to the single `Qⁿ`
//! of this complete model and are not computed separately.

use serde::Serialize;

use crate::error::{check_open_unit, Error, Result};
use crate::gaussian::{norm_cdf, np_power_naa1, np_power_naa2};
use crate::model::MarketSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// NAA1 ∧ NAA2 ∧ NSAA1 ∧ NSAA2; `(Pⁿ)` and `(Qⁿ)` are mutually contiguous.
    NoAsymptoticArbitrage,
    /// SAA1 ∧ SAA2; `(Pⁿ)` and `(Qⁿ)` are entirely separated.
    StrongAsymptoticArbitrage,
}

/// Which kinds of asymptotic arbitrage exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ArbitrageFlags {
    pub aa1: bool,
    pub aa2: bool,
    pub saa1: bool,
    pub saa2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessPoint {
    pub n: usize,
    pub theta_scale: f64,
    pub eps_n: f64,
    /// `Pⁿ(A_{εₙ}ⁿ)` of the set maximising `Pⁿ` under `Qⁿ(A) ≤ εₙ`.
    pub p_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageVerdict {
    pub regime: Regime,
    pub flags: ArbitrageFlags,
    /// `Σ_{i≥1} (bᵢ/σᵢ)²`
    #[serde(serialize_with = "crate::serde_ext::extended_f64")]
    pub series_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<WitnessPoint>>,
}

pub fn classify(spec: &MarketSpec) -> ArbitrageVerdict {
    let converges = spec.series_converges();
    let regime = if converges {
        Regime::NoAsymptoticArbitrage
    } else {
        Regime::StrongAsymptoticArbitrage
    };
    let arb = !converges;
    ArbitrageVerdict {
        regime,
        flags: ArbitrageFlags {
            aa1: arb,
            aa2: arb,
            saa1: arb,
            saa2: arb,
        },
        series_value: spec.series_value(),
        witness: None,
    }
}

/// [`classify`], with the separation witness attached when one exists.
pub fn classify_with_witness(spec: &MarketSpec, n_grid: &[usize]) -> Result<ArbitrageVerdict> {
    let mut verdict = classify(spec);
    if verdict.regime == Regime::StrongAsymptoticArbitrage {
        verdict.witness = Some(separation_witness(spec, n_grid)?);
    }
    Ok(verdict)
}

/// `εₙ = 1 − Φ(½‖θⁿ‖√T)` and the matching power `Pⁿ(A_{εₙ}ⁿ) = Φ(½‖θⁿ‖√T)`.
///
/// Both saturate in double precision once `½‖θⁿ‖√T` passes about 8.3.
pub fn separation_witness(spec: &MarketSpec, n_grid: &[usize]) -> Result<Vec<WitnessPoint>> {
    if spec.series_converges() {
        return Err(Error::ConvergentSeries("a separation witness"));
    }
    n_grid
        .iter()
        .map(|&n| {
            let s = spec.theta_scale(n)?;
            let eps_n = norm_cdf(-0.5 * s);
            let p_power = if eps_n > 0.0 {
                np_power_naa1(s, eps_n)?
            } else {
                1.0
            };
            Ok(WitnessPoint {
                n,
                theta_scale: s,
                eps_n,
                p_power,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub eps: f64,
    /// `max Pⁿ(A)` subject to `Qⁿ(A) ≤ ε`
    pub p_power: f64,
    /// `max Qⁿ(A)` subject to `Pⁿ(A) ≤ ε`
    pub q_power: f64,
}

/// Finite-n contiguity content: both Neyman–Pearson powers at `‖θⁿ‖√T`.
pub fn contiguity_power_curve(spec: &MarketSpec, n: usize, eps_grid: &[f64]) -> Result<Vec<PowerPoint>> {
    let s = spec.theta_scale(n)?;
    eps_grid
        .iter()
        .map(|&eps| {
            check_open_unit("eps", eps)?;
            Ok(PowerPoint {
                eps,
                p_power: np_power_naa1(s, eps)?,
                q_power: np_power_naa2(s, eps)?,
            })
        })
        .collect()
}
