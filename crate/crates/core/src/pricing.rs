//! Strong, weak and α-quantile prices of stationary claims on the
//! Black–Scholes large market.
//!
//! The α-quantile price at market `n` is `E_P[HₙZₙ 1{HₙZₙ ≤ qₙ(α)}]` with
//! `qₙ(α)` the α-quantile of `HₙZₙ` under `Pⁿ`, evaluated at the constant
//! sequence `βₙ = α`. Constant claims have a closed form; everything else
//! goes through Monte Carlo.
//!
//! The Monte Carlo estimator is the empirical integral `∫₀^α F̂⁻¹(u) du` of
//! the sorted sample, i.e. the truncated mean with the boundary order
//! statistic split so that exactly a fraction `α` of the sample mass is
//! used. This agrees with the indicator form whenever the law of `HₙZₙ` is
//! continuous, and stays correct at atoms (the zero atom of a call, or the
//! degenerate `Zₙ ≡ 1` market). Its standard error is `sd(min(Y, q̂))/√N`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_closed_unit, check_positive, Error, Result};
use crate::gaussian::{norm_cdf, norm_pdf, norm_quantile};
use crate::mc::{accumulate, accumulate_map, estimate_checked, simulate, sorted_copy, McParams};
use crate::model::{ClaimKind, ClaimSequence, MarketSpec};

/// Moment excess `δ` used for the Lipschitz constant unless stated otherwise.
pub const DEFAULT_LIPSCHITZ_DELTA: f64 = 1.0;

/// Stream ids keep the draws of different estimators apart.
const STREAM_QUANTILE: u64 = 0;
const STREAM_STRONG: u64 = 1;
const STREAM_MOMENT: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PriceMethod {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongPrice {
    /// `E^{Qⁿ}[Hₙ]`; stationary claims make this the strong price for every `n`.
    pub value: f64,
    pub stderr: f64,
    pub method: PriceMethod,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantilePriceResult {
    pub alpha: f64,
    pub n: usize,
    pub theta_scale: f64,
    pub value: f64,
    /// `qₙ(α) = inf{x : P(HₙZₙ ≤ x) ≥ α}`
    #[serde(serialize_with = "crate::serde_ext::extended_f64")]
    pub quantile_q: f64,
    pub stderr: f64,
    pub method: PriceMethod,
    /// `α₀ = P(HₙZₙ = 0)`; empirical on the Monte Carlo path.
    pub atom_alpha0: f64,
    /// Empirical `P(HₙZₙ ≤ q̂)`; Monte Carlo only.
    pub indicator_p_mass: Option<f64>,
    /// Set when the claim's moment bound is not known, so the constant-α
    /// value is only an upper bound for `v_α`.
    pub upper_bound_only: bool,
}

/// `|v_α − v_β| ≤ K₁K₂|α − β|`, with `K₁ = (E Zₙ^r)^{1/r} = e^{½s²(r−1)}` and
/// `K₂ = (E Hₙ^{1+δ})^{1/(1+δ)}`.
///
/// The exponents come from `pq′ = 1 + δ` with `p = 1 + δ/2`, giving
/// `r = pq = (2+δ)(1+δ)/δ`. Hölder's inequality itself only yields
/// `K₁K₂|α − β|^{δ/(2+δ)}`, recorded as `holder_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzBound {
    pub delta: f64,
    pub theta_scale: f64,
    pub z_exponent: f64,
    pub holder_exponent: f64,
    pub k1: f64,
    pub k2: f64,
    pub k2_stderr: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceCurve {
    pub n: usize,
    pub points: Vec<QuantilePriceResult>,
    /// `K₁K₂`; absent for divergent specs and when `K₂` needs Monte Carlo
    /// parameters that were not given.
    pub lipschitz: Option<LipschitzBound>,
}

impl PriceCurve {
    /// Grid pairs violating `|v_a − v_b| ≤ K|a − b| + 3(se_a + se_b)`.
    pub fn lipschitz_violations(&self) -> Vec<(f64, f64)> {
        let Some(bound) = self.lipschitz else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                let slack = 3.0 * (a.stderr + b.stderr) + 1e-12;
                if (a.value - b.value).abs() > bound.k * (a.alpha - b.alpha).abs() + slack {
                    out.push((a.alpha, b.alpha));
                }
            }
        }
        out
    }

    /// Nondecreasing in α up to `3(se_a + se_b)`, in grid order.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            w[0].alpha > w[1].alpha || w[1].value >= w[0].value - 3.0 * (w[0].stderr + w[1].stderr)
        })
    }
}

/// How `εₙ` is chosen along a weak-price trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSchedule {
    /// `εₙ = Φ(−ln(‖θⁿ‖√T))`, used for divergent specs.
    LogThetaScale,
    /// `εₙ = 1/(n+1)`, used for convergent specs.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub n: usize,
    pub theta_scale: f64,
    pub eps_n: f64,
    pub alpha_n: f64,
    pub v_alpha: f64,
    pub stderr: f64,
    /// `K₁^∞K₂εₙ` with `K₁^∞` at `sup_n ‖θⁿ‖√T`; convergent specs only.
    pub gap_bound: Option<f64>,
    /// `εₙ ≥ ½` because `‖θⁿ‖√T ≤ 1`, outside the schedule's intended range.
    pub eps_above_half: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakPriceTrajectory {
    pub schedule: EpsSchedule,
    pub strong_price: f64,
    /// `v(𝕳)` for convergent specs, 0 for divergent ones.
    pub expected_limit: f64,
    pub points: Vec<TrajectoryPoint>,
}

fn check_support(claim: &ClaimSequence, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::ZeroMarketIndex);
    }
    match claim.support().last() {
        Some(&i) if i > n => Err(Error::InvalidClaim(format!(
            "claim `{claim}` reads asset {i}, but market {n} has only {n} assets"
        ))),
        _ => Ok(()),
    }
}

/// Lognormal coordinates of asset `i` under P: `Sₜ = S₀ exp(μ + v·g)`.
fn lognormal(spec: &MarketSpec, i: usize) -> Result<(f64, f64, f64)> {
    let sigma = spec.vol(i)?;
    let t = spec.horizon;
    let mu = (spec.drift(i)? - 0.5 * sigma * sigma) * t;
    Ok((spec.spot(i), mu, sigma * t.sqrt()))
}

/// `E^{Qⁿ}[Hₙ]`.
pub fn strong_price(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    mc: Option<&McParams>,
) -> Result<StrongPrice> {
    check_support(claim, n)?;
    let closed = |value| StrongPrice {
        value,
        stderr: 0.0,
        method: PriceMethod::ClosedForm,
        n,
    };
    match &claim.kind {
        ClaimKind::Constant(c) => Ok(closed(*c)),
        ClaimKind::Call { asset, strike } | ClaimKind::Put { asset, strike } => {
            let (s0, _, v) = lognormal(spec, *asset)?;
            let d1 = ((s0 / strike).ln() + 0.5 * v * v) / v;
            let d2 = d1 - v;
            let value = match claim.kind {
                ClaimKind::Call { .. } => s0 * norm_cdf(d1) - strike * norm_cdf(d2),
                _ => strike * norm_cdf(-d2) - s0 * norm_cdf(-d1),
            };
            Ok(closed(value.max(0.0)))
        }
        ClaimKind::CustomTerminal(_) => {
            let params = mc.ok_or_else(|| Error::MonteCarloRequired(format!("strong price of `{claim}`")))?;
            let sampler = ClaimSampler::new(spec, claim, n)?;
            let est = estimate_checked(params, STREAM_STRONG, sampler.dims(), |g| sampler.h_under_q(g))?;
            if !(est.mean.is_finite() && est.mean >= 0.0) {
                return Err(Error::InvalidClaim(format!("payoff of `{claim}` is not nonnegative")));
            }
            Ok(StrongPrice {
                value: est.mean,
                stderr: est.stderr,
                method: PriceMethod::MonteCarlo,
                n,
            })
        }
    }
}

/// `P(HₙZₙ = 0)` where it has a closed form.
pub fn atom_alpha0(spec: &MarketSpec, claim: &ClaimSequence) -> Result<Option<f64>> {
    Ok(match &claim.kind {
        ClaimKind::Constant(c) => Some(if *c == 0.0 { 1.0 } else { 0.0 }),
        ClaimKind::Call { asset, strike } => {
            let (s0, mu, v) = lognormal(spec, *asset)?;
            Some(norm_cdf(((strike / s0).ln() - mu) / v))
        }
        ClaimKind::Put { asset, strike } => {
            let (s0, mu, v) = lognormal(spec, *asset)?;
            Some(norm_cdf(-((strike / s0).ln() - mu) / v))
        }
        ClaimKind::CustomTerminal(_) => None,
    })
}

/// α-quantile price: closed form for constant claims, Monte Carlo otherwise.
pub fn quantile_price(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    alpha: f64,
    mc: Option<&McParams>,
) -> Result<QuantilePriceResult> {
    check_closed_unit("alpha", alpha)?;
    check_support(claim, n)?;
    claim.check_continuity()?;
    if let ClaimKind::Constant(c) = claim.kind {
        return Ok(constant_quantile_price(c, spec.theta_scale(n)?, n, alpha));
    }
    let params = mc.ok_or_else(|| Error::MonteCarloRequired(format!("quantile price of `{claim}`")))?;
    quantile_price_mc(spec, claim, n, alpha, params)
}

/// `c·Φ(Φ⁻¹(α) − s)` with `qₙ(α) = c·exp(s·Φ⁻¹(α) − ½s²)`.
fn constant_quantile_price(c: f64, s: f64, n: usize, alpha: f64) -> QuantilePriceResult {
    let (value, quantile_q) = if c == 0.0 || alpha == 0.0 {
        (0.0, 0.0)
    } else if alpha == 1.0 {
        (c, if s == 0.0 { c } else { f64::INFINITY })
    } else {
        let z = norm_quantile(alpha).expect("alpha in (0,1)");
        (c * norm_cdf(z - s), c * (s * z - 0.5 * s * s).exp())
    };
    QuantilePriceResult {
        alpha,
        n,
        theta_scale: s,
        value,
        quantile_q,
        stderr: 0.0,
        method: PriceMethod::ClosedForm,
        atom_alpha0: if c == 0.0 { 1.0 } else { 0.0 },
        indicator_p_mass: None,
        upper_bound_only: false,
    }
}

/// Monte Carlo α-quantile price, for any claim.
pub fn quantile_price_mc(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    alpha: f64,
    params: &McParams,
) -> Result<QuantilePriceResult> {
    Ok(price_curve_mc_points(spec, claim, n, &[alpha], params)?.remove(0))
}

/// Prices over an α-grid at fixed `n`, with the Lipschitz constant `K₁K₂`
/// at `δ = 1` when available. Monte Carlo grids reuse one sample.
pub fn price_curve(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    alphas: &[f64],
    mc: Option<&McParams>,
) -> Result<PriceCurve> {
    let points = match claim.kind {
        ClaimKind::Constant(_) => alphas
            .iter()
            .map(|&a| quantile_price(spec, claim, n, a, None))
            .collect::<Result<Vec<_>>>()?,
        _ => {
            let params =
                mc.ok_or_else(|| Error::MonteCarloRequired(format!("price curve of `{claim}`")))?;
            price_curve_mc_points(spec, claim, n, alphas, params)?
        }
    };
    Ok(PriceCurve {
        n,
        points,
        lipschitz: curve_lipschitz(spec, claim, n, mc)?,
    })
}

/// [`price_curve`] with Monte Carlo forced, even for constant claims.
pub fn price_curve_mc(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    alphas: &[f64],
    params: &McParams,
) -> Result<PriceCurve> {
    Ok(PriceCurve {
        n,
        points: price_curve_mc_points(spec, claim, n, alphas, params)?,
        lipschitz: curve_lipschitz(spec, claim, n, Some(params))?,
    })
}

fn curve_lipschitz(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    mc: Option<&McParams>,
) -> Result<Option<LipschitzBound>> {
    match lipschitz_constant(spec, claim, n, DEFAULT_LIPSCHITZ_DELTA, mc) {
        Ok(b) => Ok(Some(b)),
        Err(Error::DivergentSeries(_) | Error::MonteCarloRequired(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn price_curve_mc_points(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    alphas: &[f64],
    params: &McParams,
) -> Result<Vec<QuantilePriceResult>> {
    for &a in alphas {
        check_closed_unit("alpha", a)?;
    }
    check_support(claim, n)?;
    claim.check_continuity()?;
    let sampler = ClaimSampler::new(spec, claim, n)?;
    let ys = simulate(params, STREAM_QUANTILE, sampler.dims(), |g| sampler.hz(g))?;
    if ys.par_iter().any(|y| y.is_nan() || *y < 0.0) {
        return Err(Error::InvalidClaim(format!(
            "payoff of `{claim}` produced a negative or undefined value"
        )));
    }
    let upper_bound_only = matches!(claim.kind, ClaimKind::CustomTerminal(_));
    let s = sampler.theta_scale;
    let (estimator_sample, quantile_sample) = if params.two_pass {
        let half = ys.len() / 2;
        (&ys[half..], sorted_copy(&ys[..half]))
    } else {
        (&ys[..], sorted_copy(&ys))
    };
    let sorted = &quantile_sample;
    let prefix = if params.two_pass { Vec::new() } else { prefix_sums(sorted) };
    let nq = sorted.len();
    let zeros = sorted.partition_point(|&y| y == 0.0);
    let alpha0 = zeros as f64 / nq as f64;

    Ok(alphas
        .iter()
        .map(|&alpha| {
            let q_hat = if alpha == 0.0 { 0.0 } else { sorted[quantile_index(nq, alpha)] };
            let below = sorted.partition_point(|&y| y <= q_hat);
            let (value, stderr) = if alpha <= alpha0 {
                (0.0, 0.0)
            } else if params.two_pass {
                let acc = accumulate_map(estimator_sample, |y| y.min(q_hat));
                (acc.mean() - q_hat * (1.0 - alpha), acc.stderr())
            } else {
                let v = l_statistic(sorted, &prefix, alpha);
                let acc = accumulate_map(estimator_sample, |y| y.min(q_hat));
                (v, acc.stderr())
            };
            QuantilePriceResult {
                alpha,
                n,
                theta_scale: s,
                value,
                quantile_q: q_hat,
                stderr,
                method: PriceMethod::MonteCarlo,
                atom_alpha0: alpha0,
                indicator_p_mass: Some(below as f64 / nq as f64),
                upper_bound_only,
            }
        })
        .collect())
}

/// 0-based index of the inf-convention order statistic: the smallest `k`
/// with `(k+1)/n ≥ α`.
fn quantile_index(n: usize, alpha: f64) -> usize {
    crate::mc::quantile_index(n, alpha)
}

fn prefix_sums(sorted: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sorted.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for &y in sorted {
        acc += y;
        out.push(acc);
    }
    out
}

/// `(Σ_{i<k} y₍ᵢ₎ + (αN − k)·y₍ₖ₎)/N` with `k = ⌊αN⌋`.
fn l_statistic(sorted: &[f64], prefix: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let an = alpha * n as f64;
    let k = (an.floor() as usize).min(n);
    let frac = an - k as f64;
    let boundary = if k < n && frac > 0.0 { frac * sorted[k] } else { 0.0 };
    (prefix[k] + boundary) / n as f64
}

/// Reduced sampler for `(Hₙ, Zₙ)`: one normal per asset the claim reads plus
/// one for the rest of `(θⁿ, Wₜⁿ)`.
struct ClaimSampler<'a> {
    claim: &'a ClaimSequence,
    /// `(S₀, μ, v, θᵢ√T)` per support asset.
    assets: Vec<(f64, f64, f64, f64)>,
    rest_sd: f64,
    theta_scale: f64,
}

impl<'a> ClaimSampler<'a> {
    fn new(spec: &MarketSpec, claim: &'a ClaimSequence, n: usize) -> Result<Self> {
        let sqrt_t = spec.horizon.sqrt();
        let assets = claim
            .support()
            .into_iter()
            .map(|i| {
                let (s0, mu, v) = lognormal(spec, i)?;
                Ok((s0, mu, v, spec.ratio(i) * sqrt_t))
            })
            .collect::<Result<Vec<_>>>()?;
        let theta_scale = spec.theta_scale(n)?;
        let support_var: f64 = assets.iter().map(|a| a.3 * a.3).sum();
        let rest_sd = (theta_scale * theta_scale - support_var).max(0.0).sqrt();
        Ok(Self {
            claim,
            assets,
            rest_sd,
            theta_scale,
        })
    }

    fn dims(&self) -> usize {
        self.assets.len() + 1
    }

    /// `HₙZₙ` under P from `dims()` standard normals.
    fn hz(&self, g: &[f64]) -> f64 {
        let mut proj = self.rest_sd * g[self.assets.len()];
        let mut prices = [0.0; 8];
        let mut heap = Vec::new();
        let buf: &mut [f64] = if self.assets.len() <= prices.len() {
            &mut prices[..self.assets.len()]
        } else {
            heap.resize(self.assets.len(), 0.0);
            &mut heap
        };
        for (k, &(s0, mu, v, th)) in self.assets.iter().enumerate() {
            proj += th * g[k];
            buf[k] = s0 * (mu + v * g[k]).exp();
        }
        let z = (-proj - 0.5 * self.theta_scale * self.theta_scale).exp();
        self.claim.payoff(buf) * z
    }

    /// `Hₙ` under Q, where each `Sₜⁱ = S₀ exp(−½v² + v·g)`.
    fn h_under_q(&self, g: &[f64]) -> f64 {
        let prices: Vec<f64> = self
            .assets
            .iter()
            .zip(g)
            .map(|(&(s0, _, v, _), &gi)| s0 * (v * gi - 0.5 * v * v).exp())
            .collect();
        self.claim.payoff(&prices)
    }

    /// `Hₙ` under P.
    fn h_under_p(&self, g: &[f64]) -> f64 {
        let prices: Vec<f64> = self
            .assets
            .iter()
            .zip(g)
            .map(|(&(s0, mu, v, _), &gi)| s0 * (mu + v * gi).exp())
            .collect();
        self.claim.payoff(&prices)
    }
}

/// `K₁K₂` at market `n`.
pub fn lipschitz_constant(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n: usize,
    delta: f64,
    mc: Option<&McParams>,
) -> Result<LipschitzBound> {
    if !spec.series_converges() {
        return Err(Error::DivergentSeries("a uniform Lipschitz constant"));
    }
    check_support(claim, n)?;
    lipschitz_at_scale(spec, claim, spec.theta_scale(n)?, delta, mc)
}

/// `K₁K₂` with `K₁` at `sup_n ‖θⁿ‖√T`, valid uniformly in `n`.
pub fn lipschitz_constant_limit(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    delta: f64,
    mc: Option<&McParams>,
) -> Result<LipschitzBound> {
    if !spec.series_converges() {
        return Err(Error::DivergentSeries("a uniform Lipschitz constant"));
    }
    lipschitz_at_scale(spec, claim, spec.theta_scale_limit(), delta, mc)
}

fn lipschitz_at_scale(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    s: f64,
    delta: f64,
    mc: Option<&McParams>,
) -> Result<LipschitzBound> {
    check_positive("delta", delta)?;
    let z_exponent = (2.0 + delta) * (1.0 + delta) / delta;
    let k1 = (0.5 * s * s * (z_exponent - 1.0)).exp();
    let (k2, k2_stderr) = claim_moment_norm(spec, claim, 1.0 + delta, mc)?;
    Ok(LipschitzBound {
        delta,
        theta_scale: s,
        z_exponent,
        holder_exponent: delta / (2.0 + delta),
        k1,
        k2,
        k2_stderr,
        k: k1 * k2,
    })
}

/// `(E_P[Hⁿʳ])^{1/r}` and a standard error (0 unless Monte Carlo).
pub fn claim_moment_norm(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    r: f64,
    mc: Option<&McParams>,
) -> Result<(f64, f64)> {
    check_positive("r", r)?;
    match &claim.kind {
        ClaimKind::Constant(c) => Ok((*c, 0.0)),
        ClaimKind::Call { asset, strike } | ClaimKind::Put { asset, strike } => {
            let (s0, mu, v) = lognormal(spec, *asset)?;
            let cut = ((strike / s0).ln() - mu) / v;
            let is_call = matches!(claim.kind, ClaimKind::Call { .. });
            let f = |g: f64| {
                let s = s0 * (mu + v * g).exp();
                let pay = if is_call { s - strike } else { strike - s };
                pay.max(0.0).powf(r) * norm_pdf(g)
            };
            let m = if is_call {
                simpson(f, cut, cut.max(r * v) + 40.0, 40_000)
            } else {
                simpson(f, cut.min(0.0) - 40.0, cut, 40_000)
            };
            Ok((m.powf(1.0 / r), 0.0))
        }
        ClaimKind::CustomTerminal(_) => {
            let params =
                mc.ok_or_else(|| Error::MonteCarloRequired(format!("moments of `{claim}`")))?;
            let sampler = ClaimSampler::new(spec, claim, claim.support().len())?;
            let xs = simulate(params, STREAM_MOMENT, sampler.dims(), |g| sampler.h_under_p(g).powf(r))?;
            let acc = accumulate(&xs);
            let m = acc.mean();
            // delta method for m^{1/r}
            let se = m.powf(1.0 / r - 1.0) / r * acc.stderr();
            Ok((m.powf(1.0 / r), se))
        }
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + i as f64 * h)
        })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// Quantile prices at `αₙ = 1 − εₙ` along `n_grid`.
pub fn weak_price_trajectory(
    spec: &MarketSpec,
    claim: &ClaimSequence,
    n_grid: &[usize],
    mc: Option<&McParams>,
) -> Result<WeakPriceTrajectory> {
    let first = *n_grid
        .first()
        .ok_or_else(|| Error::InvalidSpec("empty n-grid".into()))?;
    let strong = strong_price(spec, claim, first.max(claim.support().last().copied().unwrap_or(1)), mc)?;
    let converges = spec.series_converges();
    let schedule = if converges {
        EpsSchedule::Harmonic
    } else {
        EpsSchedule::LogThetaScale
    };
    let gap_k = if converges {
        Some(lipschitz_constant_limit(spec, claim, DEFAULT_LIPSCHITZ_DELTA, mc)?.k)
    } else {
        None
    };
    let points = n_grid
        .iter()
        .map(|&n| {
            let s = spec.theta_scale(n)?;
            let eps_n = match schedule {
                EpsSchedule::Harmonic => 1.0 / (n as f64 + 1.0),
                EpsSchedule::LogThetaScale => norm_cdf(-s.ln()),
            };
            let alpha_n = 1.0 - eps_n;
            let q = quantile_price(spec, claim, n, alpha_n, mc)?;
            Ok(TrajectoryPoint {
                n,
                theta_scale: s,
                eps_n,
                alpha_n,
                v_alpha: q.value,
                stderr: q.stderr,
                gap_bound: gap_k.map(|k| k * eps_n),
                eps_above_half: schedule == EpsSchedule::LogThetaScale && s <= 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakPriceTrajectory {
        schedule,
        strong_price: strong.value,
        expected_limit: if converges { strong.value } else { 0.0 },
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CustomPayoff, TailRule};

    fn scale(s: f64) -> MarketSpec {
        MarketSpec::with_theta_scale(s).unwrap()
    }

    fn call_spec() -> MarketSpec {
        MarketSpec::new(vec![0.5], TailRule::Zero, 1.0)
            .unwrap()
            .with_vols(vec![0.2])
            .unwrap()
    }

    #[test]
    fn strong_price_closed_forms() {
        let one = ClaimSequence::constant(1.0).unwrap();
        assert_eq!(strong_price(&scale(1.0), &one, 1, None).unwrap().value, 1.0);
        let spec = MarketSpec::new(vec![0.3], TailRule::Zero, 1.0)
            .unwrap()
            .with_spots(vec![100.0])
            .unwrap()
            .with_vols(vec![0.2])
            .unwrap();
        let call = ClaimSequence::call(1, 100.0).unwrap();
        let v = strong_price(&spec, &call, 1, None).unwrap().value;
        // 100·Φ(0.1) − 100·Φ(−0.1)
        assert!((v - 7.965_567_455_405_797).abs() < 1e-12, "{v}");
        let put = ClaimSequence::put(1, 100.0).unwrap();
        assert!((strong_price(&spec, &put, 1, None).unwrap().value - v).abs() < 1e-12);
        assert!(strong_price(&spec, &ClaimSequence::call(2, 1.0).unwrap(), 1, None).is_err());
    }

    #[test]
    fn strong_price_is_stationary() {
        let spec = MarketSpec::new(vec![0.3], TailRule::Constant(0.7), 1.5)
            .unwrap()
            .with_vols(vec![0.25])
            .unwrap();
        let call = ClaimSequence::call(1, 1.1).unwrap();
        let a = strong_price(&spec, &call, 1, None).unwrap().value;
        for n in [2, 10, 1000] {
            assert_eq!(strong_price(&spec, &call, n, None).unwrap().value, a);
        }
    }

    #[test]
    fn constant_quantile_closed_form() {
        let one = ClaimSequence::constant(1.0).unwrap();
        for alpha in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let q = quantile_price(&scale(0.0), &one, 1, alpha, None).unwrap();
            assert!((q.value - alpha).abs() < 1e-15);
        }
        let q = quantile_price(&scale(1.0), &one, 1, 0.9, None).unwrap();
        assert!((q.value - 0.610856308354639).abs() < 1e-14);
        assert!(quantile_price(&scale(1.0), &one, 1, 1.1, None).is_err());
    }

    #[test]
    fn mc_needs_params() {
        let call = ClaimSequence::call(1, 1.0).unwrap();
        assert!(matches!(
            quantile_price(&call_spec(), &call, 1, 0.5, None),
            Err(Error::MonteCarloRequired(_))
        ));
    }

    #[test]
    fn l_statistic_small_sample() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        let prefix = prefix_sums(&sorted);
        assert_eq!(l_statistic(&sorted, &prefix, 0.5), 0.75);
        assert_eq!(l_statistic(&sorted, &prefix, 0.625), (3.0 + 0.5 * 3.0) / 4.0);
        assert_eq!(l_statistic(&sorted, &prefix, 1.0), 2.5);
        assert_eq!(l_statistic(&sorted, &prefix, 0.0), 0.0);
    }

    #[test]
    fn mc_degenerate_market_is_exact() {
        let one = ClaimSequence::constant(1.0).unwrap();
        let params = McParams::new(10_000, 5);
        for alpha in [0.1, 0.37, 0.9] {
            let q = quantile_price_mc(&scale(0.0), &one, 1, alpha, &params).unwrap();
            assert!((q.value - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_matches_constant_closed_form() {
        let one = ClaimSequence::constant(1.0).unwrap();
        let params = McParams::new(200_000, 11);
        let curve = price_curve_mc(&scale(1.0), &one, 1, &[0.2, 0.5, 0.8], &params).unwrap();
        for p in &curve.points {
            let exact = quantile_price(&scale(1.0), &one, 1, p.alpha, None).unwrap();
            assert!((p.value - exact.value).abs() < 3.0 * p.stderr, "{p:?}");
            assert!((p.quantile_q / exact.quantile_q - 1.0).abs() < 0.02);
        }
        assert!(curve.is_monotone());
        assert!(curve.lipschitz_violations().is_empty());
    }

    #[test]
    fn two_pass_agrees() {
        let one = ClaimSequence::constant(1.0).unwrap();
        let params = McParams::new(400_000, 3).with_two_pass(true);
        let q = quantile_price_mc(&scale(0.5), &one, 1, 0.7, &params).unwrap();
        let exact = quantile_price(&scale(0.5), &one, 1, 0.7, None).unwrap().value;
        assert!((q.value - exact).abs() < 3.0 * q.stderr);
    }

    #[test]
    fn call_atom() {
        let call = ClaimSequence::call(1, 1.0).unwrap();
        let a0 = atom_alpha0(&call_spec(), &call).unwrap().unwrap();
        assert!((a0 - 0.3445782583896758).abs() < 1e-15);
        let params = McParams::new(100_000, 4);
        let q = quantile_price_mc(&call_spec(), &call, 1, a0 / 2.0, &params).unwrap();
        assert_eq!(q.value, 0.0);
        let se = (a0 * (1.0 - a0) / 100_000.0).sqrt();
        assert!((q.atom_alpha0 - a0).abs() < 3.0 * se);
    }

    #[test]
    fn call_moment_quadrature() {
        // E[((S−K)⁺)²] in closed form via E[Sᵐ 1{g > g*}] = S₀ᵐ e^{mμ + m²v²/2} Φ(mv − g*).
        for (spec, k) in [(call_spec(), 1.0), (call_spec(), 1.3)] {
            let (s0, mu, v) = lognormal(&spec, 1).unwrap();
            let cut = ((k / s0).ln() - mu) / v;
            let part = |m: f64| s0.powf(m) * (m * mu + 0.5 * m * m * v * v).exp() * norm_cdf(m * v - cut);
            let exact = part(2.0) - 2.0 * k * part(1.0) + k * k * part(0.0);
            let call = ClaimSequence::call(1, k).unwrap();
            let (norm, _) = claim_moment_norm(&spec, &call, 2.0, None).unwrap();
            assert!((norm * norm - exact).abs() < 1e-12 * exact, "{} {}", norm * norm, exact);
        }
    }

    #[test]
    fn lipschitz_examples() {
        let c = ClaimSequence::constant(2.5).unwrap();
        let b = lipschitz_constant(&scale(0.0), &c, 1, 1.0, None).unwrap();
        assert_eq!(b.k1, 1.0);
        assert_eq!(b.k2, 2.5);
        let b1 = lipschitz_constant(&scale(1.0), &ClaimSequence::constant(1.0).unwrap(), 1, 1.0, None).unwrap();
        assert_eq!(b1.z_exponent, 6.0);
        assert!((b1.k1 - 2.5f64.exp()).abs() < 1e-12);
        let div = MarketSpec::new(vec![], TailRule::Constant(1.0), 1.0).unwrap();
        assert!(matches!(lipschitz_constant(&div, &c, 3, 1.0, None), Err(Error::DivergentSeries(_))));
    }

    #[test]
    fn trajectories() {
        let one = ClaimSequence::constant(1.0).unwrap();
        let basel = MarketSpec::new(vec![], TailRule::PowerDecay(1.0), 1.0).unwrap();
        let t = weak_price_trajectory(&basel, &one, &[1, 10, 100], None).unwrap();
        assert_eq!(t.schedule, EpsSchedule::Harmonic);
        for p in &t.points {
            assert!((t.strong_price - p.v_alpha) <= p.gap_bound.unwrap());
        }
        let div = MarketSpec::new(vec![], TailRule::Constant(1.0), 1.0).unwrap();
        let t = weak_price_trajectory(&div, &one, &[1, 4, 100, 10_000], None).unwrap();
        assert!(t.points[0].eps_above_half);
        assert!(!t.points[2].eps_above_half);
        assert_eq!(t.expected_limit, 0.0);
        let v: Vec<f64> = t.points.iter().map(|p| p.v_alpha).collect();
        assert!(v.windows(2).skip(1).all(|w| w[1] < w[0]));
        let zero = MarketSpec::new(vec![], TailRule::Zero, 1.0).unwrap();
        let t = weak_price_trajectory(&zero, &ClaimSequence::constant(2.0).unwrap(), &[1, 5], None).unwrap();
        assert!(t.points.iter().all(|p| (p.v_alpha - 2.0 * p.alpha_n).abs() < 1e-15));
    }

    #[test]
    fn custom_claims() {
        let spec = MarketSpec::new(vec![0.4, 0.2], TailRule::Zero, 1.0)
            .unwrap()
            .with_vols(vec![0.2, 0.3])
            .unwrap();
        let basket = CustomPayoff::new("basket", 2, |s: &[f64]| (0.5 * (s[0] + s[1]) - 1.0).max(0.0));
        let claim = ClaimSequence::custom(basket).unwrap();
        let params = McParams::new(100_000, 21);
        let strong = strong_price(&spec, &claim, 2, Some(&params)).unwrap();
        assert_eq!(strong.method, PriceMethod::MonteCarlo);
        let q = quantile_price(&spec, &claim, 2, 0.95, Some(&params)).unwrap();
        assert!(q.upper_bound_only);
        assert!(q.value <= strong.value + 3.0 * strong.stderr);
        let bad = CustomPayoff::new("neg", 1, |_: &[f64]| -1.0);
        assert!(quantile_price(&spec, &ClaimSequence::custom(bad).unwrap(), 2, 0.5, Some(&params)).is_err());
        let jump = CustomPayoff::new("digital", 1, |s: &[f64]| f64::from(s[0] > 1.0)).discontinuous();
        assert!(matches!(
            quantile_price(&spec, &ClaimSequence::custom(jump).unwrap(), 2, 0.5, Some(&params)),
            Err(Error::ContinuityAssumption(_))
        ));
    }
}
