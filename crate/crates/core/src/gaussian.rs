//! Closed-form Gaussian machinery for the constant-coefficient large
//! Black–Scholes market.
//!
//! Every quantity here depends on the market only through the scalar
//! `theta_scale = ‖θⁿ‖·√T`. The projection `G = (θⁿ, Wₜⁿ) / theta_scale` is a
//! standard normal under P, and `G + theta_scale` is standard normal under Q,
//! so every likelihood-ratio level set is a half-line in `G`.

use serde::Serialize;

use crate::error::{check_nonnegative, check_open_unit, check_positive, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// ln(√(2π))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Below this argument the log-CDF switches to the continued-fraction tail.
const LOG_CDF_TAIL: f64 = -5.0;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal distribution function Φ.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// ln Φ(x), accurate in relative terms far into the lower tail where Φ
/// itself underflows.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-norm_cdf(-x)).ln_1p()
    } else if x >= LOG_CDF_TAIL {
        norm_cdf(x).ln()
    } else {
        let t = -x;
        -0.5 * t * t - LN_SQRT_2PI + mills_ratio(t).ln()
    }
}

/// Mills ratio Φ(−t)/φ(t) for t ≥ 0.
fn mills_ratio(t: f64) -> f64 {
    if t < -LOG_CDF_TAIL {
        return norm_cdf(-t) / norm_pdf(t);
    }
    // 1/(t + 1/(t + 2/(t + 3/(t + ...)))), evaluated bottom-up.
    let mut tail = t;
    for k in (1..=120).rev() {
        tail = t + k as f64 / tail;
    }
    1.0 / tail
}

// Rational approximation coefficients (P. J. Acklam), refined afterwards.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.024_25;

/// Standard normal quantile Φ⁻¹(u) for u ∈ (0, 1).
pub fn norm_quantile(u: f64) -> Result<f64> {
    check_open_unit("u", u)?;
    if u > 0.5 {
        // 1 − u is exact on [0.5, 1).
        Ok(-lower_quantile(1.0 - u))
    } else {
        Ok(lower_quantile(u))
    }
}

fn lower_quantile(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u <= 0.5);
    if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        let mut x = (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
        // Newton on ln Φ(x) = ln u; d/dx ln Φ = 1 / mills(−x).
        let target = u.ln();
        for _ in 0..3 {
            x -= (log_norm_cdf(x) - target) * mills_ratio(-x);
        }
        x
    } else {
        let q = u - 0.5;
        let r = q * q;
        let mut x = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
        // One Halley step brings the 1e-9 approximation to full precision.
        let e = norm_cdf(x) - u;
        let t = e * SQRT_2PI * (0.5 * x * x).exp();
        x -= t / (1.0 + 0.5 * x * t);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NpDirection {
    /// `{G ≥ cut}`
    UpperTail,
    /// `{G ≤ cut}`
    LowerTail,
}

/// Which constrained optimisation produced a [`GaussianNpSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NpProblem {
    /// maximise P(A) subject to Q(A) ≤ ε
    MaxPGivenQ,
    /// maximise Q(A) subject to P(A) ≤ ε
    MaxQGivenP,
    /// minimise Q(A) subject to P(A) ≥ 1 − ε
    MinQGivenP,
}

/// A Neyman–Pearson optimal half-space of the Gaussian market.
///
/// `cut` lives on the standardised P-coordinate `G`; `threshold_c` is the same
/// cut on the unnormalised projection `(θⁿ, Wₜⁿ)`, i.e. `theta_scale · cut`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianNpSet {
    pub problem: NpProblem,
    pub direction: NpDirection,
    pub cut: f64,
    pub threshold_c: f64,
    /// Likelihood-ratio level γ defining the set.
    pub gamma: f64,
    pub budget_eps: f64,
    pub theta_scale: f64,
    pub p_mass: f64,
    pub q_mass: f64,
}

impl GaussianNpSet {
    /// Membership test for a standardised projection `g`.
    pub fn contains(&self, g: f64) -> bool {
        match self.direction {
            NpDirection::UpperTail => g >= self.cut,
            NpDirection::LowerTail => g <= self.cut,
        }
    }

    /// P-mass recomputed from the cut alone.
    pub fn p_mass_from_cut(&self) -> f64 {
        match self.direction {
            NpDirection::UpperTail => norm_cdf(-self.cut),
            NpDirection::LowerTail => norm_cdf(self.cut),
        }
    }

    /// Q-mass recomputed from the cut alone (`G = G* − theta_scale` under Q).
    pub fn q_mass_from_cut(&self) -> f64 {
        match self.direction {
            NpDirection::UpperTail => norm_cdf(-(self.cut + self.theta_scale)),
            NpDirection::LowerTail => norm_cdf(self.cut + self.theta_scale),
        }
    }
}

fn check_np_args(theta_scale: f64, eps: f64) -> Result<()> {
    check_nonnegative("theta_scale", theta_scale)?;
    check_open_unit("eps", eps)
}

/// The set maximising P(A) subject to Q(A) ≤ ε:
/// `{(θ, W*) ≥ ln γ + ½‖θ‖²T}` with `γ = exp(s·Φ⁻¹(1−ε) − ½s²)`.
pub fn np_set_naa1(theta_scale: f64, eps: f64) -> Result<GaussianNpSet> {
    check_np_args(theta_scale, eps)?;
    let s = theta_scale;
    let upper = -norm_quantile(eps)?; // Φ⁻¹(1 − ε)
    let cut = upper - s;
    Ok(GaussianNpSet {
        problem: NpProblem::MaxPGivenQ,
        direction: NpDirection::UpperTail,
        cut,
        threshold_c: s * cut,
        gamma: (s * upper - 0.5 * s * s).exp(),
        budget_eps: eps,
        theta_scale: s,
        p_mass: np_power_naa1(s, eps)?,
        q_mass: eps,
    })
}

/// P-mass of [`np_set_naa1`]: `1 − Φ(Φ⁻¹(1−ε) − s)`.
pub fn np_power_naa1(theta_scale: f64, eps: f64) -> Result<f64> {
    check_np_args(theta_scale, eps)?;
    // 1 − Φ(Φ⁻¹(1−ε) − s) = Φ(s − Φ⁻¹(1−ε)) = Φ(s + Φ⁻¹(ε))
    Ok(norm_cdf(theta_scale + norm_quantile(eps)?))
}

/// The set maximising Q(A) subject to P(A) ≤ ε: `{Z ≥ γ}`, a lower tail in `G`.
pub fn np_set_naa2(theta_scale: f64, eps: f64) -> Result<GaussianNpSet> {
    check_np_args(theta_scale, eps)?;
    let s = theta_scale;
    let cut = norm_quantile(eps)?;
    Ok(GaussianNpSet {
        problem: NpProblem::MaxQGivenP,
        direction: NpDirection::LowerTail,
        cut,
        threshold_c: s * cut,
        gamma: (-(cut * s + 0.5 * s * s)).exp(),
        budget_eps: eps,
        theta_scale: s,
        p_mass: eps,
        q_mass: np_power_naa2(s, eps)?,
    })
}

/// Q-mass of [`np_set_naa2`]: `Φ(Φ⁻¹(ε) + s)`.
pub fn np_power_naa2(theta_scale: f64, eps: f64) -> Result<f64> {
    check_np_args(theta_scale, eps)?;
    Ok(norm_cdf(norm_quantile(eps)? + theta_scale))
}

/// The set minimising Q(A) subject to P(A) ≥ 1 − ε: `{Z ≤ γ}`, an upper tail
/// in `G` with Q-mass `Φ(−Φ⁻¹(ε) − s)`.
pub fn np_set_min_q(theta_scale: f64, eps: f64) -> Result<GaussianNpSet> {
    check_np_args(theta_scale, eps)?;
    let s = theta_scale;
    let cut = norm_quantile(eps)?;
    Ok(GaussianNpSet {
        problem: NpProblem::MinQGivenP,
        direction: NpDirection::UpperTail,
        cut,
        threshold_c: s * cut,
        gamma: (-(cut * s + 0.5 * s * s)).exp(),
        budget_eps: eps,
        theta_scale: s,
        p_mass: norm_cdf(-cut),
        q_mass: norm_cdf(-cut - s),
    })
}

/// E_P[Zʳ] = exp(½·s²·r(r−1)).
pub fn z_moment(theta_scale: f64, r: f64) -> Result<f64> {
    check_nonnegative("theta_scale", theta_scale)?;
    check_positive("r", r)?;
    Ok((0.5 * theta_scale * theta_scale * r * (r - 1.0)).exp())
}

/// Hölder exponents for the weakened moment condition on divergent markets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoelderExponents {
    pub delta: f64,
    pub p: f64,
    pub p_prime: f64,
    /// Closed form `√2/2 + ½(4+δ) + (√2/2)√(2+δ)`.
    pub pq_prime: f64,
}

impl HoelderExponents {
    /// `½(p'−1)/(p−1) − 1/(2+δ)`; zero for a feasible pair.
    pub fn constraint_residual(&self) -> f64 {
        0.5 * (self.p_prime - 1.0) / (self.p - 1.0) - 1.0 / (2.0 + self.delta)
    }

    /// `p·q'` with `q' = p'/(p'−1)` computed from the returned pair.
    ///
    /// This equals `(1 + √((2+δ)/2))²`, which tends to 4 as δ → 0 and does not
    /// coincide with `pq_prime`.
    pub fn implied_moment_exponent(&self) -> f64 {
        self.p * self.p_prime / (self.p_prime - 1.0)
    }
}

pub fn optimal_hoelder_exponents(delta: f64) -> Result<HoelderExponents> {
    check_positive("delta", delta)?;
    let a = ((2.0 + delta) / 2.0).sqrt();
    let half_sqrt2 = SQRT_2 / 2.0;
    Ok(HoelderExponents {
        delta,
        p: 1.0 + a,
        p_prime: (2.0 + 2.0 * a + delta) / (2.0 + delta),
        pq_prime: half_sqrt2 + 0.5 * (4.0 + delta) + half_sqrt2 * (2.0 + delta).sqrt(),
    })
}

/// `f(x) = exp(x²/(2+δ)) · Φ(ln x − x)`, evaluated in the log domain.
pub fn saa_limit_fn(x: f64, delta: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_positive("delta", delta)?;
    Ok((x * x / (2.0 + delta) + log_norm_cdf(x.ln() - x)).exp())
}

/// `ln f(x)` for [`saa_limit_fn`]; finite even where `f` underflows.
pub fn saa_limit_log(x: f64, delta: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_positive("delta", delta)?;
    Ok(x * x / (2.0 + delta) + log_norm_cdf(x.ln() - x))
}
