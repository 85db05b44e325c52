//! Deterministic parallel Monte Carlo substrate.
//!
//! Draws come from ChaCha20 (`rand_chacha`), seeded from a 64-bit seed with the
//! ChaCha stream id selecting an independent stream. Inside a stream every
//! sample is addressed by its global index: sample `i` of a `d`-dimensional
//! simulation reads the `d` 64-bit words starting at word `i·d`. Work
//! partitioning (`chunk_size`, thread count, scheduling order) therefore never
//! changes which numbers a sample sees.
//!
//! Reductions are done over fixed blocks of [`BLOCK`] samples whose summaries
//! are merged in index order, so estimates are bit-identical across runs.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_closed_unit, Error, Result};
use crate::gaussian::norm_quantile;

/// Reduction block length; independent of the user-facing `chunk_size`.
pub const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McParams {
    pub n_samples: usize,
    pub seed: u64,
    pub chunk_size: usize,
    /// Estimate quantiles and truncated means from independent halves.
    pub two_pass: bool,
}

impl McParams {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            chunk_size: n_samples.clamp(1, 65_536),
            two_pass: false,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_two_pass(mut self, two_pass: bool) -> Self {
        self.two_pass = two_pass;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(Error::InvalidParameter {
                name: "n_samples",
                value: self.n_samples as f64,
                reason: "at least 100 samples are required",
            });
        }
        if self.chunk_size == 0 || self.chunk_size > self.n_samples {
            return Err(Error::InvalidParameter {
                name: "chunk_size",
                value: self.chunk_size as f64,
                reason: "must lie in [1, n_samples]",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_effective: usize,
    pub seed_used: u64,
}

/// Reproducible stream of uniforms and standard normals.
#[derive(Clone)]
pub struct GaussianStream {
    rng: ChaCha20Rng,
}

/// The stream for `(seed, chunk_index)`; distinct chunk indices select
/// disjoint ChaCha streams.
pub fn gaussian_stream(seed: u64, chunk_index: u64) -> GaussianStream {
    GaussianStream::new(seed, chunk_index)
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Position the stream at its `draw`-th 64-bit output.
    pub fn seek(&mut self, draw: u64) {
        self.rng.set_word_pos(2 * draw as u128);
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of one uniform.
    pub fn next_gaussian(&mut self) -> f64 {
        norm_quantile(self.next_uniform()).expect("uniform lies in (0, 1)")
    }
}

impl Iterator for GaussianStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_gaussian())
    }
}

/// Welford accumulator with Chan et al. merging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut acc = Self::default();
        xs.iter().for_each(|&x| acc.push(x));
        acc
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Self {
            n,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * w,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Merge block summaries pairwise in index order.
fn tree_merge(mut level: Vec<Welford>) -> Welford {
    if level.is_empty() {
        return Welford::default();
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.merge(b),
                [a] => *a,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

/// Mean/variance of `f(x)` over `xs`, deterministic for any thread count.
pub fn accumulate_map<F>(xs: &[f64], f: F) -> Welford
where
    F: Fn(f64) -> f64 + Sync,
{
    let blocks: Vec<Welford> = xs
        .par_chunks(BLOCK)
        .map(|block| {
            let mut acc = Welford::default();
            block.iter().for_each(|&x| acc.push(f(x)));
            acc
        })
        .collect();
    tree_merge(blocks)
}

pub fn accumulate(xs: &[f64]) -> Welford {
    accumulate_map(xs, |x| x)
}

/// Summarise a sample into an [`McEstimate`].
pub fn summarize(xs: &[f64], seed: u64) -> Result<McEstimate> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let acc = accumulate(xs);
    Ok(McEstimate {
        mean: acc.mean(),
        stderr: acc.stderr(),
        n_effective: xs.len(),
        seed_used: seed,
    })
}

/// Evaluate `payoff` on `n_samples` vectors of `dims` standard normals drawn
/// from stream `stream`; results come back in sample-index order.
pub fn simulate<F>(params: &McParams, stream: u64, dims: usize, payoff: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    let dims = dims.max(1);
    let seed = params.seed;
    let values = (0..params.n_samples)
        .into_par_iter()
        .with_min_len(params.chunk_size)
        .map_init(
            || (GaussianStream::new(seed, stream), vec![0.0; dims], usize::MAX),
            |(rng, buf, next), i| {
                if *next != i {
                    rng.seek((i * dims) as u64);
                }
                buf.iter_mut().for_each(|g| *g = rng.next_gaussian());
                *next = i + 1;
                payoff(buf)
            },
        )
        .collect();
    Ok(values)
}

/// Monte Carlo estimate of `E[payoff(G)]`, `G` a `dims`-vector of standard normals.
pub fn estimate<F>(params: &McParams, stream: u64, dims: usize, payoff: F) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values = simulate(params, stream, dims, payoff)?;
    summarize(&values, params.seed)
}

/// Like [`estimate`], but fails when the standard error does not shrink
/// roughly like 1/√N between the first half of the sample and the whole.
pub fn estimate_checked<F>(
    params: &McParams,
    stream: u64,
    dims: usize,
    payoff: F,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values = simulate(params, stream, dims, payoff)?;
    let full = summarize(&values, params.seed)?;
    let half = summarize(&values[..values.len() / 2], params.seed)?;
    check_stderr_scaling(half.stderr, full.stderr)?;
    Ok(full)
}

/// Allowed ratio of the observed full-sample stderr to the 1/√2 scaling
/// predicted from the half sample.
const STDERR_SCALING_SLACK: f64 = 1.5;

pub fn check_stderr_scaling(half: f64, full: f64) -> Result<()> {
    if !full.is_finite() || full > half * std::f64::consts::FRAC_1_SQRT_2 * STDERR_SCALING_SLACK {
        return Err(Error::McDivergence { half, full });
    }
    Ok(())
}

/// Index (0-based) of the inf-convention order statistic for level `alpha`:
/// the smallest `k` with `(k+1)/n ≥ alpha`, clamped to the first element.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    let nf = n as f64;
    let mut k = (alpha * nf).ceil() as usize;
    // Guard against `alpha * n` rounding upward past an exact integer.
    while k > 1 && (k - 1) as f64 / nf >= alpha {
        k -= 1;
    }
    k.clamp(1, n) - 1
}

/// `inf{x : F̂(x) ≥ alpha}` of an ascending sample.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> Result<f64> {
    check_closed_unit("alpha", alpha)?;
    if sorted.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(sorted[quantile_index(sorted.len(), alpha)])
}

/// Sort a sample ascending under IEEE total order.
pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.par_sort_unstable_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_deterministic() {
        let a: Vec<f64> = gaussian_stream(7, 3).take(1000).collect();
        let b: Vec<f64> = gaussian_stream(7, 3).take(1000).collect();
        assert_eq!(a, b);
        let c: Vec<f64> = gaussian_stream(7, 4).take(1000).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn seek_addresses_draws() {
        let all: Vec<f64> = gaussian_stream(11, 0).take(50).collect();
        let mut s = gaussian_stream(11, 0);
        s.seek(37);
        assert_eq!(s.next_gaussian(), all[37]);
        s.seek(3);
        assert_eq!(s.next_gaussian(), all[3]);
    }

    #[test]
    fn gaussian_moments() {
        let params = McParams::new(1_000_000, 2024);
        let xs = simulate(&params, 0, 1, |g| g[0]).unwrap();
        let acc = accumulate(&xs);
        let n = xs.len() as f64;
        assert!(acc.mean().abs() < 3.0 / n.sqrt(), "mean {}", acc.mean());
        // Var of sample variance for N(0,1) is 2/(n−1).
        assert!((acc.variance() - 1.0).abs() < 3.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 200_000;
        let a: Vec<f64> = gaussian_stream(5, 0).take(n).collect();
        let b: Vec<f64> = gaussian_stream(5, 1).take(n).collect();
        let corr: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn constant_stream_has_zero_stderr() {
        let params = McParams::new(1000, 1);
        let est = estimate(&params, 0, 1, |_| 2.5).unwrap();
        assert_eq!(est.mean, 2.5);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n_effective, 1000);
    }

    #[test]
    fn chunk_size_does_not_change_results() {
        let base = McParams::new(50_000, 99);
        let a = estimate(&base, 0, 2, |g| g[0] * g[1] + g[0].exp()).unwrap();
        for chunk in [1, 7, 1000, 4096, 50_000] {
            let p = base.with_chunk_size(chunk);
            let b = estimate(&p, 0, 2, |g| g[0] * g[1] + g[0].exp()).unwrap();
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        }
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = gaussian_stream(3, 9).take(10_001).collect();
        let seq = Welford::from_slice(&xs);
        let merged = xs
            .chunks(333)
            .map(Welford::from_slice)
            .fold(Welford::default(), |a, b| a.merge(&b));
        assert_eq!(seq.count(), merged.count());
        assert!((seq.mean() - merged.mean()).abs() < 1e-14);
        assert!((seq.variance() - merged.variance()).abs() < 1e-12);
    }

    #[test]
    fn quantile_inf_convention() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&xs, 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&xs, 0.25).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&xs, 0.26).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&xs, 1.0).unwrap(), 4.0);
        assert_eq!(empirical_quantile(&xs, 0.0).unwrap(), 1.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&xs, 1.5).is_err());
        // 0.3 * 10 rounds to 3.0000000000000004.
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&ten, 0.3).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&ten, 0.7).unwrap(), 7.0);
    }

    #[test]
    fn uniform_quantile_clt() {
        let params = McParams::new(400_000, 17);
        let mut s = gaussian_stream(params.seed, 0);
        let xs: Vec<f64> = (0..params.n_samples).map(|_| s.next_uniform()).collect();
        let sorted = sorted_copy(&xs);
        let q = empirical_quantile(&sorted, 0.9).unwrap();
        let tol = 3.0 * (0.09 / params.n_samples as f64).sqrt();
        assert!((q - 0.9).abs() < tol, "q = {q}");
    }

    #[test]
    fn params_validation() {
        assert!(McParams::new(99, 0).validate().is_err());
        assert!(McParams::new(100, 0).with_chunk_size(0).validate().is_err());
        assert!(McParams::new(100, 0).with_chunk_size(101).validate().is_err());
        assert!(McParams::new(100, 0).validate().is_ok());
    }

    #[test]
    fn divergence_guard() {
        assert!(check_stderr_scaling(1.0, 0.7).is_ok());
        assert!(check_stderr_scaling(1.0, 1.2).is_err());
        assert!(check_stderr_scaling(1.0, f64::NAN).is_err());
    }
}
