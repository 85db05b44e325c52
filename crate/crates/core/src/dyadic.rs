//! A stationary two-outcome market on `[0, 1]` whose weak price of the unit
//! claim is `δα` while its strong price is 1.
//!
//! With `E_i = [0, 1 − 2^{−i}]`, `F_i = (1 − 2^{−i}, 1]`, `G_1 = E_1` and
//! `G_i = E_i \ E_{i−1}`, the depth-n measure algebra is generated by the
//! atoms `G_1, …, G_n, F_n`:
//!
//! | atom  | `Pⁿ`     | `Qⁿ`                |
//! |-------|----------|---------------------|
//! | `G_i` | `2^{−i}` | `δ·2^{−i}`          |
//! | `F_n` | `2^{−n}` | `1 − δ(1 − 2^{−n})` |
//!
//! Masses are carried exactly as dyadic rationals, with `δ` kept symbolic.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::Serialize;

use crate::error::{check_closed_unit, check_open_unit, Error, Result};
use crate::np::{solve_np_min, Atom, DiscreteMeasurePair, NPSolution};

/// Deepest supported market, so every mass fits an `i128` numerator comfortably.
pub const MAX_DEPTH: u32 = 62;

/// Exact dyadic rational `num / 2^exp`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Dyadic {
    num: i128,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Self = Self { num: 0, exp: 0 };
    pub const ONE: Self = Self { num: 1, exp: 0 };

    pub fn new(num: i128, exp: u32) -> Self {
        let (mut num, mut exp) = (num, exp);
        if num == 0 {
            return Self::ZERO;
        }
        let tz = num.trailing_zeros().min(exp);
        num >>= tz;
        exp -= tz;
        Self { num, exp }
    }

    /// `2^{−k}`
    pub fn pow2_neg(k: u32) -> Self {
        Self::new(1, k)
    }

    /// Every finite `f64` is a dyadic rational; `None` if it does not fit.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Self::ZERO);
        }
        let bits = x.to_bits();
        let sign: i128 = if bits >> 63 == 1 { -1 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mant, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1i128 << 52), raw_exp - 1075)
        };
        if e >= 0 {
            let num = mant.checked_mul(1i128.checked_shl(e as u32).filter(|&s| s > 0)?)?;
            Some(Self::new(sign * num, 0))
        } else {
            Some(Self::new(sign * mant, (-e) as u32))
        }
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn to_f64(&self) -> f64 {
        libm::ldexp(self.num as f64, -(self.exp as i32))
    }

    fn aligned(a: Self, b: Self) -> Option<(i128, i128, u32)> {
        let e = a.exp.max(b.exp);
        let scale = |x: Self| -> Option<i128> {
            let k = e - x.exp;
            if k >= 127 {
                return if x.num == 0 { Some(0) } else { None };
            }
            x.num.checked_mul(1i128 << k)
        };
        Some((scale(a)?, scale(b)?, e))
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        let (a, b, e) = Self::aligned(self, other)?;
        Some(Self::new(a.checked_add(b)?, e))
    }

    pub fn checked_sub(self, other: Self) -> Option<Self> {
        self.checked_add(-other)
    }

    pub fn checked_mul(self, other: Self) -> Option<Self> {
        Some(Self::new(
            self.num.checked_mul(other.num)?,
            self.exp.checked_add(other.exp)?,
        ))
    }
}

impl Neg for Dyadic {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.num, self.exp)
    }
}

/// Panics on overflow; masses of supported markets never come close.
impl Add for Dyadic {
    type Output = Self;
    fn add(self, other: Self) -> Self {
        self.checked_add(other).expect("dyadic overflow")
    }
}

impl Sub for Dyadic {
    type Output = Self;
    fn sub(self, other: Self) -> Self {
        self.checked_sub(other).expect("dyadic overflow")
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        match Self::aligned(*self, *other) {
            Some((a, b, _)) => a.cmp(&b),
            None => self.to_f64().total_cmp(&other.to_f64()),
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

/// `constant + δ·delta_coef` with exact dyadic coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeltaAffine {
    pub constant: Dyadic,
    pub delta_coef: Dyadic,
}

impl DeltaAffine {
    pub const ZERO: Self = Self {
        constant: Dyadic::ZERO,
        delta_coef: Dyadic::ZERO,
    };

    pub fn delta_times(coef: Dyadic) -> Self {
        Self {
            constant: Dyadic::ZERO,
            delta_coef: coef,
        }
    }

    pub fn eval(&self, delta: f64) -> f64 {
        self.constant.to_f64() + delta * self.delta_coef.to_f64()
    }

    /// Exact value for a `δ` given as a dyadic rational.
    pub fn exact(&self, delta: Dyadic) -> Option<Dyadic> {
        self.constant.checked_add(delta.checked_mul(self.delta_coef)?)
    }
}

impl Add for DeltaAffine {
    type Output = Self;
    fn add(self, other: Self) -> Self {
        Self {
            constant: self.constant + other.constant,
            delta_coef: self.delta_coef + other.delta_coef,
        }
    }
}

impl fmt::Display for DeltaAffine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + δ·{}", self.constant, self.delta_coef)
    }
}

/// An atom of the depth-n algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DyadicAtom {
    /// `G_i`, `1 ≤ i ≤ n`
    G(u32),
    /// `F_n`
    F,
}

impl fmt::Display for DyadicAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DyadicAtom::G(i) => write!(f, "G{i}"),
            DyadicAtom::F => write!(f, "F"),
        }
    }
}

/// Interval `(lo, hi]` of `[0, 1]`; the interval starting at 0 also holds 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DyadicInterval {
    pub lo: Dyadic,
    pub hi: Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DyadicMarket {
    pub delta: f64,
    pub depth_n: u32,
}

/// A union of atoms of one depth-n market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicSet {
    pub depth_n: u32,
    /// Sorted, distinct.
    pub atoms: Vec<DyadicAtom>,
}

impl DyadicSet {
    pub fn empty(depth_n: u32) -> Self {
        Self {
            depth_n,
            atoms: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn p_mass(&self) -> Dyadic {
        self.atoms
            .iter()
            .map(|&a| atom_p(a, self.depth_n))
            .fold(Dyadic::ZERO, Add::add)
    }

    pub fn q_mass(&self) -> DeltaAffine {
        self.atoms
            .iter()
            .map(|&a| atom_q(a, self.depth_n))
            .fold(DeltaAffine::ZERO, Add::add)
    }

    /// Disjoint, sorted intervals, with adjacent atoms merged.
    pub fn intervals(&self) -> Vec<DyadicInterval> {
        let mut out: Vec<DyadicInterval> = Vec::new();
        for &a in &self.atoms {
            let iv = atom_interval(a, self.depth_n);
            match out.last_mut() {
                Some(last) if last.hi == iv.lo => last.hi = iv.hi,
                _ => out.push(iv),
            }
        }
        out
    }
}

fn atom_p(atom: DyadicAtom, n: u32) -> Dyadic {
    match atom {
        DyadicAtom::G(i) => Dyadic::pow2_neg(i),
        DyadicAtom::F => Dyadic::pow2_neg(n),
    }
}

fn atom_q(atom: DyadicAtom, n: u32) -> DeltaAffine {
    match atom {
        DyadicAtom::G(i) => DeltaAffine::delta_times(Dyadic::pow2_neg(i)),
        DyadicAtom::F => DeltaAffine {
            constant: Dyadic::ONE,
            delta_coef: Dyadic::pow2_neg(n) - Dyadic::ONE,
        },
    }
}

fn atom_interval(atom: DyadicAtom, n: u32) -> DyadicInterval {
    let edge = |k: u32| Dyadic::ONE - Dyadic::pow2_neg(k);
    match atom {
        DyadicAtom::G(i) => DyadicInterval {
            lo: edge(i - 1),
            hi: edge(i),
        },
        DyadicAtom::F => DyadicInterval {
            lo: edge(n),
            hi: Dyadic::ONE,
        },
    }
}

/// First `n_digits` binary digits of `alpha`. Dyadic `alpha` gets its
/// terminating expansion; `alpha = 1` is written `0.111…`.
pub fn binary_expansion(alpha: f64, n_digits: u32) -> Result<Vec<u8>> {
    check_closed_unit("alpha", alpha)?;
    if alpha == 1.0 {
        return Ok(vec![1; n_digits as usize]);
    }
    // Doubling and subtracting 1 are exact in binary floating point.
    let mut x = alpha;
    Ok((0..n_digits)
        .map(|_| {
            x *= 2.0;
            if x >= 1.0 {
                x -= 1.0;
                1
            } else {
                0
            }
        })
        .collect())
}

/// Weak price of the unit claim at depth `n`, with its `n → ∞` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantClaimPrice {
    /// `Σ_{i≤n} γ_i 2^{−i}`
    pub truncated_alpha: Dyadic,
    /// `δ · truncated_alpha`
    pub exact: DeltaAffine,
    pub value: f64,
    /// `δα`
    pub limit: f64,
}

impl DyadicMarket {
    pub fn new(delta: f64, depth_n: u32) -> Result<Self> {
        check_open_unit("delta", delta)?;
        if depth_n == 0 {
            return Err(Error::ZeroMarketIndex);
        }
        if depth_n > MAX_DEPTH {
            return Err(Error::InvalidParameter {
                name: "depth_n",
                value: depth_n as f64,
                reason: "exceeds the supported depth of 62",
            });
        }
        Ok(Self { delta, depth_n })
    }

    pub fn at_depth(&self, depth_n: u32) -> Result<Self> {
        Self::new(self.delta, depth_n)
    }

    /// `G_1, …, G_n, F_n`
    pub fn atoms(&self) -> Vec<DyadicAtom> {
        (1..=self.depth_n)
            .map(DyadicAtom::G)
            .chain(std::iter::once(DyadicAtom::F))
            .collect()
    }

    pub fn p_mass(&self, atom: DyadicAtom) -> Dyadic {
        atom_p(atom, self.depth_n)
    }

    pub fn q_mass(&self, atom: DyadicAtom) -> DeltaAffine {
        atom_q(atom, self.depth_n)
    }

    /// `Qⁿ(E_i) = δ(1 − 2^{−i})`, `i ≤ n`.
    pub fn q_of_e(&self, i: u32) -> DeltaAffine {
        (1..=i.min(self.depth_n))
            .map(|k| atom_q(DyadicAtom::G(k), self.depth_n))
            .fold(DeltaAffine::ZERO, Add::add)
    }

    /// `Ãₙ = ⋃ {G_i : γ_i = 1, i ≤ n}` for the digits `γ_i` of `alpha`.
    pub fn optimal_set(&self, alpha: f64) -> Result<DyadicSet> {
        let digits = binary_expansion(alpha, self.depth_n)?;
        Ok(DyadicSet {
            depth_n: self.depth_n,
            atoms: digits
                .iter()
                .zip(1..)
                .filter(|(&d, _)| d == 1)
                .map(|(_, i)| DyadicAtom::G(i))
                .collect(),
        })
    }

    pub fn quantile_price_const1(&self, alpha: f64) -> Result<ConstantClaimPrice> {
        let set = self.optimal_set(alpha)?;
        let truncated_alpha = set.p_mass();
        let exact = set.q_mass();
        Ok(ConstantClaimPrice {
            truncated_alpha,
            exact,
            value: exact.eval(self.delta),
            limit: self.delta * alpha,
        })
    }

    /// `F_n`, whose P-mass vanishes while its Q-mass tends to `1 − δ`.
    pub fn aa2_witness(&self) -> DyadicSet {
        DyadicSet {
            depth_n: self.depth_n,
            atoms: vec![DyadicAtom::F],
        }
    }

    /// The depth-n algebra as a discrete measure pair with `p = Pⁿ`, `q = Qⁿ`.
    pub fn to_measure_pair(&self) -> Result<DiscreteMeasurePair> {
        DiscreteMeasurePair::new(
            self.atoms()
                .into_iter()
                .map(|a| Atom {
                    label: a.to_string(),
                    p_mass: self.p_mass(a).to_f64(),
                    q_mass: self.q_mass(a).eval(self.delta),
                })
                .collect(),
        )
    }

    /// Generic solver answer to `min Qⁿ(A)` s.t. `Pⁿ(A) ≥ Pⁿ(Ãₙ)`.
    pub fn oracle_min_q(&self, alpha: f64) -> Result<NPSolution> {
        let floor = self.optimal_set(alpha)?.p_mass().to_f64();
        solve_np_min(&self.to_measure_pair()?, floor)
    }

    /// Exhaustive check over all `2^{n+1}` sets of the depth-n algebra that
    /// `Qⁿ(A) < δ·2^{−l}` forces `Pⁿ(A) < 2^{−l}` for every `l ≤ l_max`.
    /// Comparisons are exact in the dyadic value of `δ`.
    pub fn check_naa1_witness(&self, l_max: u32) -> Result<bool> {
        if self.depth_n > 12 {
            return Err(Error::InvalidParameter {
                name: "depth_n",
                value: self.depth_n as f64,
                reason: "exhaustive check limited to depth 12",
            });
        }
        let delta = Dyadic::from_f64(self.delta).expect("delta in (0,1) is representable");
        let atoms = self.atoms();
        let p: Vec<Dyadic> = atoms.iter().map(|&a| self.p_mass(a)).collect();
        let q: Vec<Dyadic> = atoms
            .iter()
            .map(|&a| self.q_mass(a).exact(delta).expect("no overflow at depth ≤ 12"))
            .collect();
        for mask in 0u32..(1 << atoms.len()) {
            let (mut pm, mut qm) = (Dyadic::ZERO, Dyadic::ZERO);
            for (b, (pa, qa)) in p.iter().zip(&q).enumerate() {
                if mask >> b & 1 == 1 {
                    pm = pm + *pa;
                    qm = qm + *qa;
                }
            }
            for l in 0..=l_max {
                let q_bound = delta.checked_mul(Dyadic::pow2_neg(l)).expect("small");
                if qm < q_bound && pm >= Dyadic::pow2_neg(l) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// One row of the `(n, P(Ãₙ), Q(Ãₙ), δα)` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DyadicRow {
    pub n: u32,
    pub p_mass: f64,
    pub q_mass: f64,
    pub delta_alpha: f64,
}

pub fn price_table(delta: f64, alpha: f64, n_grid: &[u32]) -> Result<Vec<DyadicRow>> {
    n_grid
        .iter()
        .map(|&n| {
            let market = DyadicMarket::new(delta, n)?;
            let set = market.optimal_set(alpha)?;
            Ok(DyadicRow {
                n,
                p_mass: set.p_mass().to_f64(),
                q_mass: set.q_mass().eval(delta),
                delta_alpha: delta * alpha,
            })
        })
        .collect()
}
