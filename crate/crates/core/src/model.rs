//! Market specifications, the market price of risk, the density `dQⁿ/dPⁿ`,
//! and claim sequences.
//!
//! All prices are discounted; there is no interest-rate parameter.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::mc::GaussianStream;

/// Closed menu of rules for the ratios `bᵢ/σᵢ` beyond the explicit head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// `bᵢ/σᵢ = c`
    Constant(f64),
    /// `bᵢ/σᵢ = i^(−p)`
    PowerDecay(f64),
    /// `bᵢ/σᵢ = rⁱ`, `|r| < 1`
    Geometric(f64),
    #[default]
    Zero,
}

/// Constant-coefficient large Black–Scholes market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    /// Explicit head `b₁/σ₁, …, bₘ/σₘ`.
    #[serde(rename = "ratios", default)]
    pub explicit_ratios: Vec<f64>,
    #[serde(default)]
    pub tail: TailRule,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// `S₀ⁱ`; missing entries default to 1.
    #[serde(default)]
    pub spots: Vec<f64>,
    /// `σᵢ`; indices past the list reuse the last entry.
    #[serde(default)]
    pub vols: Vec<f64>,
}

/// Partial sums of `i^(−s)` switch to Euler–Maclaurin beyond this index.
const EM_START: u64 = 1000;

impl MarketSpec {
    pub fn new(explicit_ratios: Vec<f64>, tail: TailRule, horizon: f64) -> Result<Self> {
        let spec = Self {
            explicit_ratios,
            tail,
            horizon,
            spots: Vec::new(),
            vols: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-coordinate market with `‖θ‖√T = theta_scale` at `n = 1`.
    pub fn with_theta_scale(theta_scale: f64) -> Result<Self> {
        Self::new(vec![theta_scale], TailRule::Zero, 1.0)
    }

    pub fn with_spots(mut self, spots: Vec<f64>) -> Result<Self> {
        self.spots = spots;
        self.validate()?;
        Ok(self)
    }

    pub fn with_vols(mut self, vols: Vec<f64>) -> Result<Self> {
        self.vols = vols;
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("T", self.horizon)?;
        if let Some(r) = self.explicit_ratios.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidSpec(format!("non-finite ratio {r}")));
        }
        if self.spots.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidSpec("spot prices must be positive".into()));
        }
        if self.vols.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidSpec("volatilities must be positive".into()));
        }
        match self.tail {
            TailRule::Constant(c) | TailRule::PowerDecay(c) if !c.is_finite() => {
                Err(Error::InvalidSpec("tail parameter must be finite".into()))
            }
            TailRule::Geometric(r) if r.is_nan() || r.abs() >= 1.0 => {
                Err(Error::InvalidSpec(format!("geometric tail needs |r| < 1, got {r}")))
            }
            _ => Ok(()),
        }
    }

    /// `bᵢ/σᵢ` for the 1-based asset index `i`.
    pub fn ratio(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        if let Some(&r) = self.explicit_ratios.get(i - 1) {
            return r;
        }
        match self.tail {
            TailRule::Constant(c) => c,
            TailRule::PowerDecay(p) => (i as f64).powf(-p),
            TailRule::Geometric(r) => r.powi(i as i32),
            TailRule::Zero => 0.0,
        }
    }

    /// `θⁿ = (b₁/σ₁, …, bₙ/σₙ)`.
    pub fn theta(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.ratio(i)).collect()
    }

    pub fn spot(&self, i: usize) -> f64 {
        self.spots.get(i - 1).copied().unwrap_or(1.0)
    }

    pub fn vol(&self, i: usize) -> Result<f64> {
        self.vols
            .get(i - 1)
            .or(self.vols.last())
            .copied()
            .ok_or_else(|| Error::InvalidSpec(format!("no volatility available for asset {i}")))
    }

    /// Drift `bᵢ = σᵢ · (bᵢ/σᵢ)`.
    pub fn drift(&self, i: usize) -> Result<f64> {
        Ok(self.vol(i)? * self.ratio(i))
    }

    /// `‖θⁿ‖² = Σ_{i≤n} (bᵢ/σᵢ)²`.
    pub fn theta_norm_sq(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::ZeroMarketIndex);
        }
        let m = self.explicit_ratios.len();
        let head: f64 = self
            .explicit_ratios
            .iter()
            .take(n)
            .map(|r| r * r)
            .sum();
        if n <= m {
            return Ok(head);
        }
        let (first, last) = (m as u64 + 1, n as u64);
        let count = (last - first + 1) as f64;
        let tail = match self.tail {
            TailRule::Zero => 0.0,
            TailRule::Constant(c) => count * c * c,
            TailRule::Geometric(r) => {
                let r2 = r * r;
                r2.powi(first as i32) * (1.0 - r2.powi(count as i32)) / (1.0 - r2)
            }
            TailRule::PowerDecay(p) => power_sum(2.0 * p, first, last),
        };
        Ok(head + tail)
    }

    /// `‖θⁿ‖·√T`.
    pub fn theta_scale(&self, n: usize) -> Result<f64> {
        Ok((self.theta_norm_sq(n)? * self.horizon).sqrt())
    }

    /// Whether `Σ (bᵢ/σᵢ)²` converges, decided from the tail rule.
    pub fn series_converges(&self) -> bool {
        match self.tail {
            TailRule::Constant(c) => c == 0.0,
            TailRule::PowerDecay(p) => 2.0 * p > 1.0,
            TailRule::Geometric(_) | TailRule::Zero => true,
        }
    }

    /// `Σ_{i≥1} (bᵢ/σᵢ)²`, `+∞` when divergent.
    pub fn series_value(&self) -> f64 {
        if !self.series_converges() {
            return f64::INFINITY;
        }
        let m = self.explicit_ratios.len() as u64;
        let head: f64 = self.explicit_ratios.iter().map(|r| r * r).sum();
        let first = m + 1;
        let tail = match self.tail {
            TailRule::Zero | TailRule::Constant(_) => 0.0,
            TailRule::Geometric(r) => {
                let r2 = r * r;
                r2.powi(first as i32) / (1.0 - r2)
            }
            TailRule::PowerDecay(p) => power_tail(2.0 * p, first),
        };
        head + tail
    }

    /// `sup_n ‖θⁿ‖·√T`, `+∞` when divergent.
    pub fn theta_scale_limit(&self) -> f64 {
        (self.series_value() * self.horizon).sqrt()
    }
}

/// `Σ_{i=a}^{b} i^(−s)`.
fn power_sum(s: f64, a: u64, b: u64) -> f64 {
    if a > b {
        return 0.0;
    }
    let direct_end = b.min(a.max(EM_START));
    // Smallest terms first.
    let direct: f64 = (a..=direct_end).rev().map(|i| (i as f64).powf(-s)).sum();
    if direct_end == b {
        direct
    } else {
        direct + euler_maclaurin(s, direct_end + 1, Some(b))
    }
}

/// `Σ_{i≥a} i^(−s)` for `s > 1`.
fn power_tail(s: f64, a: u64) -> f64 {
    debug_assert!(s > 1.0);
    let direct_end = a.max(EM_START);
    let direct: f64 = (a..=direct_end).rev().map(|i| (i as f64).powf(-s)).sum();
    direct + euler_maclaurin(s, direct_end + 1, None)
}

/// Euler–Maclaurin for `Σ_{i=a}^{b} i^(−s)` (b = ∞ when `None`), `a ≥ 1000`.
fn euler_maclaurin(s: f64, a: u64, b: Option<u64>) -> f64 {
    let f = |x: f64, k: i32| -> f64 {
        // k-th derivative of x^(−s): (−1)^k s(s+1)…(s+k−1) x^(−s−k)
        let mut c = 1.0;
        for j in 0..k {
            c *= -(s + j as f64);
        }
        c * x.powf(-s - k as f64)
    };
    let af = a as f64;
    let integral = |x: f64| {
        if (s - 1.0).abs() < 1e-15 {
            x.ln()
        } else {
            x.powf(1.0 - s) / (1.0 - s)
        }
    };
    let (int, fb, d1b, d3b, d5b) = match b {
        Some(b) => {
            let bf = b as f64;
            (integral(bf) - integral(af), f(bf, 0), f(bf, 1), f(bf, 3), f(bf, 5))
        }
        None => (-integral(af), 0.0, 0.0, 0.0, 0.0),
    };
    int + 0.5 * (f(af, 0) + fb) + (d1b - f(af, 1)) / 12.0 - (d3b - f(af, 3)) / 720.0
        + (d5b - f(af, 5)) / 30_240.0
}

/// Which measure a terminal sample is drawn under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityEvaluation {
    /// `(θⁿ, Wₜⁿ)`
    pub theta_dot_w: f64,
    /// `Zₙ = exp(−(θⁿ, Wₜⁿ) − ½‖θⁿ‖²T)`
    pub z_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalSample {
    /// `Wₜⁿ`, the P-Brownian terminal value (whatever measure drew it).
    pub w: Vec<f64>,
    /// `W*ₜⁿ = Wₜⁿ + θⁿT`, the Q-Brownian terminal value.
    pub w_star: Vec<f64>,
    pub density: DensityEvaluation,
    /// `Sₜⁱ`; `None` when the spec carries no volatilities.
    pub prices: Option<Vec<f64>>,
}

/// Precomputed coefficients of the n-th small market.
#[derive(Debug, Clone)]
pub struct TerminalSampler {
    horizon: f64,
    theta: Vec<f64>,
    theta_norm_sq: f64,
    /// `(S₀ⁱ, bᵢ, σᵢ)` per asset when volatilities are known.
    assets: Option<Vec<(f64, f64, f64)>>,
}

impl TerminalSampler {
    pub fn new(spec: &MarketSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroMarketIndex);
        }
        let theta = spec.theta(n);
        let assets = if spec.vols.is_empty() {
            None
        } else {
            Some(
                (1..=n)
                    .map(|i| Ok((spec.spot(i), spec.drift(i)?, spec.vol(i)?)))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        Ok(Self {
            horizon: spec.horizon,
            theta_norm_sq: spec.theta_norm_sq(n)?,
            theta,
            assets,
        })
    }

    pub fn dims(&self) -> usize {
        self.theta.len()
    }

    /// Map `n` standard normals to a terminal sample under `measure`.
    pub fn draw(&self, normals: &[f64], measure: Measure) -> TerminalSample {
        let t = self.horizon;
        let sqrt_t = t.sqrt();
        let (w, w_star): (Vec<f64>, Vec<f64>) = normals
            .iter()
            .zip(&self.theta)
            .map(|(&g, &th)| match measure {
                Measure::P => (sqrt_t * g, sqrt_t * g + th * t),
                Measure::Q => (sqrt_t * g - th * t, sqrt_t * g),
            })
            .unzip();
        let theta_dot_w: f64 = w.iter().zip(&self.theta).map(|(w, th)| w * th).sum();
        let z_value = (-theta_dot_w - 0.5 * self.theta_norm_sq * t).exp();
        let prices = self.assets.as_ref().map(|assets| {
            assets
                .iter()
                .zip(&w)
                .map(|(&(s0, b, sigma), &wi)| s0 * ((b - 0.5 * sigma * sigma) * t + sigma * wi).exp())
                .collect()
        });
        TerminalSample {
            w,
            w_star,
            density: DensityEvaluation {
                theta_dot_w,
                z_value,
            },
            prices,
        }
    }
}

/// One draw of `Wₜⁿ`, `Zₙ` and `Sₜ` under `measure`, fully determined by the arguments.
pub fn sample_terminal(
    spec: &MarketSpec,
    n: usize,
    seed: u64,
    measure: Measure,
) -> Result<TerminalSample> {
    let sampler = TerminalSampler::new(spec, n)?;
    let normals: Vec<f64> = GaussianStream::new(seed, 0).take(n).collect();
    Ok(sampler.draw(&normals, measure))
}

type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Terminal payoff of the first `assets` prices, declared nonnegative.
#[derive(Clone)]
pub struct CustomPayoff {
    pub name: String,
    pub assets: usize,
    /// Whether `Hₙ Zₙ` has a continuous law on (0, ∞).
    pub continuous: bool,
    payoff: PayoffFn,
}

impl CustomPayoff {
    pub fn new<F>(name: impl Into<String>, assets: usize, payoff: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            assets,
            continuous: true,
            payoff: Arc::new(payoff),
        }
    }

    pub fn discontinuous(mut self) -> Self {
        self.continuous = false;
        self
    }
}

impl fmt::Debug for CustomPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPayoff")
            .field("name", &self.name)
            .field("assets", &self.assets)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ClaimKind {
    Constant(f64),
    /// `(Sₜⁱ − K)⁺` on the 1-based asset `asset`.
    Call { asset: usize, strike: f64 },
    /// `(K − Sₜⁱ)⁺`
    Put { asset: usize, strike: f64 },
    CustomTerminal(CustomPayoff),
}

/// A stationary claim sequence: `Hₙ` is the same payoff for every `n`.
#[derive(Debug, Clone)]
pub struct ClaimSequence {
    pub kind: ClaimKind,
}

impl ClaimSequence {
    pub fn new(kind: ClaimKind) -> Result<Self> {
        match &kind {
            ClaimKind::Constant(c) if !(*c >= 0.0 && c.is_finite()) => {
                return Err(Error::InvalidClaim(format!("constant must be >= 0, got {c}")));
            }
            ClaimKind::Call { asset, strike } | ClaimKind::Put { asset, strike } => {
                if *asset == 0 {
                    return Err(Error::InvalidClaim("asset indices start at 1".into()));
                }
                if !(*strike > 0.0 && strike.is_finite()) {
                    return Err(Error::InvalidClaim(format!("strike must be > 0, got {strike}")));
                }
            }
            ClaimKind::CustomTerminal(p) if p.assets == 0 => {
                return Err(Error::InvalidClaim("custom payoff must read at least one asset".into()));
            }
            _ => {}
        }
        Ok(Self { kind })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(ClaimKind::Constant(c))
    }

    pub fn call(asset: usize, strike: f64) -> Result<Self> {
        Self::new(ClaimKind::Call { asset, strike })
    }

    pub fn put(asset: usize, strike: f64) -> Result<Self> {
        Self::new(ClaimKind::Put { asset, strike })
    }

    pub fn custom(payoff: CustomPayoff) -> Result<Self> {
        Self::new(ClaimKind::CustomTerminal(payoff))
    }

    /// 1-based indices of the assets the payoff reads, ascending.
    pub fn support(&self) -> Vec<usize> {
        match &self.kind {
            ClaimKind::Constant(_) => Vec::new(),
            ClaimKind::Call { asset, .. } | ClaimKind::Put { asset, .. } => vec![*asset],
            ClaimKind::CustomTerminal(p) => (1..=p.assets).collect(),
        }
    }

    /// Payoff given the terminal prices of [`Self::support`], in that order.
    pub fn payoff(&self, prices: &[f64]) -> f64 {
        match &self.kind {
            ClaimKind::Constant(c) => *c,
            ClaimKind::Call { strike, .. } => (prices[0] - strike).max(0.0),
            ClaimKind::Put { strike, .. } => (strike - prices[0]).max(0.0),
            ClaimKind::CustomTerminal(p) => (p.payoff)(prices),
        }
    }

    /// Structural check of the continuous-distribution assumption for `HₙZₙ`.
    pub fn check_continuity(&self) -> Result<()> {
        match &self.kind {
            ClaimKind::CustomTerminal(p) if !p.continuous => Err(Error::ContinuityAssumption(
                format!("custom payoff `{}` is declared discontinuous", p.name),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ClaimSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ClaimKind::Constant(c) => write!(f, "const:{c}"),
            ClaimKind::Call { asset, strike } => write!(f, "call:{asset}:{strike}"),
            ClaimKind::Put { asset, strike } => write!(f, "put:{asset}:{strike}"),
            ClaimKind::CustomTerminal(p) => write!(f, "custom:{}", p.name),
        }
    }
}

impl FromStr for ClaimSequence {
    type Err = Error;

    /// `const:C`, `call:I:K` or `put:I:K` (asset index `I` is 1-based).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidClaim(format!("bad number `{t}` in `{s}`")))
        };
        let idx = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidClaim(format!("bad asset index `{t}` in `{s}`")))
        };
        match parts.as_slice() {
            ["const", c] => Self::constant(num(c)?),
            ["call", i, k] => Self::call(idx(i)?, num(k)?),
            ["put", i, k] => Self::put(idx(i)?, num(k)?),
            _ => Err(Error::InvalidClaim(format!(
                "unrecognised claim `{s}` (expected const:C, call:I:K or put:I:K)"
            ))),
        }
    }
}

impl Serialize for ClaimSequence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClaimSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A market spec file: the market keys plus an optional `claim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecDocument {
    #[serde(flatten)]
    pub market: MarketSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<ClaimSequence>,
}

impl SpecDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        doc.market.validate()?;
        Ok(doc)
    }
}
