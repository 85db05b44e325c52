//! `qhedge` command line: arbitrage classification, Neyman–Pearson sets,
//! quantile prices and the dyadic example, emitted as CSV or JSON.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 1 for runtime or
//! statistical failures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qhedge_core::arbitrage::{classify_with_witness, contiguity_power_curve};
use qhedge_core::dyadic::{price_table, DyadicMarket};
use qhedge_core::gaussian::{np_set_min_q, np_set_naa1, np_set_naa2};
use qhedge_core::mc::{estimate, GaussianStream, McParams};
use qhedge_core::np::{solve_np_exhaustive, solve_np_lr};
use qhedge_core::pricing::{
    price_curve_mc, quantile_price_mc, PriceCurve, QuantilePriceResult, StrongPrice,
};
use qhedge_core::{
    price_curve, quantile_price, solve_np, solve_np_min, strong_price, weak_price_trajectory,
    ClaimKind, ClaimSequence, DiscreteMeasurePair, MarketSpec, SpecDocument,
};

/// Version tag written on the first line of every CSV output.
pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem: bad flags, unreadable inputs, invalid parameters.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "qhedge", version, about = "Quantile hedging and asymptotic arbitrage on large markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Arbitrage regime of a market, with the separation witness if any.
    Classify {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        n_grid: Vec<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Neyman–Pearson set: Gaussian half-space, or exact subset of `--atoms`.
    NpSet {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_enum, default_value = "naa1")]
        problem: Problem,
        /// CSV of `label,p,q` atoms.
        #[arg(long)]
        atoms: Option<PathBuf>,
        /// Maximise P(A) subject to Q(A) <= budget.
        #[arg(long)]
        budget: Option<f64>,
        /// Minimise Q(A) subject to P(A) >= floor.
        #[arg(long)]
        floor: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Neyman–Pearson powers over an ε-grid at market `n`.
    PowerCurve {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.2,0.5")]
        eps_grid: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// α-quantile price at a single α, with the strong price.
    Price {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        claim: ClaimArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// α-quantile prices over an α-grid.
    Curve {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        claim: ClaimArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        alpha_grid: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Weak-price trajectory along an n-grid.
    Trajectory {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        claim: ClaimArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        n_grid: Vec<usize>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Table of (n, P(Ã_n), Q(Ã_n), δα) for the dyadic market.
    DyadicExample {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        alpha: f64,
        /// Emit rows for n = 1..=N.
        #[arg(long, conflicts_with = "n_grid")]
        n: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<u32>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Closed-form vs Monte Carlo and oracle-equivalence checks.
    SelfCheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
}

#[derive(Args, Debug)]
struct MarketArgs {
    /// Market spec JSON (keys: ratios, tail, T, spots, vols, claim).
    #[arg(long, conflicts_with = "theta_scale")]
    spec: Option<PathBuf>,
    /// One-asset market with ‖θ‖√T equal to this value.
    #[arg(long)]
    theta_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct ClaimArgs {
    /// const:C, call:I:K or put:I:K (asset index I starts at 1).
    #[arg(long)]
    claim: Option<String>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Estimate quantile and truncated mean on independent halves.
    #[arg(long)]
    two_pass: bool,
    /// Use Monte Carlo even where a closed form exists.
    #[arg(long)]
    mc: bool,
}

#[derive(Args, Debug)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Problem {
    /// max P(A) s.t. Q(A) <= ε
    Naa1,
    /// max Q(A) s.t. P(A) <= ε
    Naa2,
    /// min Q(A) s.t. P(A) >= 1 − ε
    MinQ,
}

impl MarketArgs {
    fn load(&self) -> Result<(MarketSpec, Option<ClaimSequence>)> {
        match (&self.spec, self.theta_scale) {
            (Some(path), None) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
                let doc = SpecDocument::from_json(&text)
                    .map_err(|e| config(format!("{}: {e}", path.display())))?;
                Ok((doc.market, doc.claim))
            }
            (None, Some(s)) => Ok((MarketSpec::with_theta_scale(s).map_err(core_config)?, None)),
            (None, None) => Err(config("one of --spec or --theta-scale is required")),
            (Some(_), Some(_)) => Err(config("--spec and --theta-scale are mutually exclusive")),
        }
    }
}

fn resolve_claim(arg: &ClaimArgs, from_spec: Option<ClaimSequence>) -> Result<ClaimSequence> {
    match &arg.claim {
        Some(text) => text.parse().map_err(core_config),
        None => Ok(from_spec.unwrap_or(ClaimSequence::constant(1.0).map_err(core_config)?)),
    }
}

fn core_config(e: qhedge_core::Error) -> anyhow::Error {
    config(e.to_string())
}

impl McArgs {
    /// Monte Carlo parameters, or `None` when no seed was given.
    fn params(&self) -> Result<Option<McParams>> {
        let Some(seed) = self.seed else {
            if self.mc {
                return Err(config("--mc needs --seed"));
            }
            return Ok(None);
        };
        let mut p = McParams::new(self.samples, seed).with_two_pass(self.two_pass);
        if let Some(c) = self.chunk_size {
            p = p.with_chunk_size(c);
        }
        p.validate().map_err(core_config)?;
        Ok(Some(p))
    }
}

fn emit(out: &OutArgs, body: &str) -> Result<()> {
    match &out.out {
        Some(path) => write_file(path, body),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Shortest round-trip decimal, in exponent form for very small or large
/// magnitudes; infinities as `inf`.
fn num(x: f64) -> String {
    if x.is_finite() {
        if x != 0.0 && (x.abs() < 1e-5 || x.abs() >= 1e16) {
            format!("{x:e}")
        } else {
            format!("{x}")
        }
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct Csv {
    buf: String,
}

impl Csv {
    fn new(command: &str, columns: &[&str]) -> Self {
        let mut buf = format!("# qhedge {command} schema v{SCHEMA_VERSION}\n");
        buf.push_str(&columns.join(","));
        buf.push('\n');
        Self { buf }
    }

    fn row(&mut self, cells: &[String]) {
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }
}

fn method_name(r: &QuantilePriceResult) -> &'static str {
    match r.method {
        qhedge_core::PriceMethod::ClosedForm => "closed_form",
        qhedge_core::PriceMethod::MonteCarlo => "monte_carlo",
    }
}

/// Run the CLI on `argv` (including the program name); returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<qhedge_core::Error>() {
        Some(
            qhedge_core::Error::McDivergence { .. }
            | qhedge_core::Error::EmptySample
            | qhedge_core::Error::Io(_),
        ) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Classify { market, n_grid, out } => cmd_classify(&market, &n_grid, &out),
        Command::NpSet {
            market,
            n,
            eps,
            problem,
            atoms,
            budget,
            floor,
            out,
        } => match atoms {
            Some(path) => cmd_np_discrete(&path, budget, floor, &out),
            None => cmd_np_gaussian(&market, n, eps, problem, &out),
        },
        Command::PowerCurve { market, n, eps_grid, out } => cmd_power_curve(&market, n, &eps_grid, &out),
        Command::Price {
            market,
            claim,
            n,
            alpha,
            mc,
            out,
        } => cmd_price(&market, &claim, n, alpha, &mc, &out),
        Command::Curve {
            market,
            claim,
            n,
            alpha_grid,
            mc,
            out,
        } => cmd_curve(&market, &claim, n, &alpha_grid, &mc, &out),
        Command::Trajectory {
            market,
            claim,
            n_grid,
            mc,
            out,
        } => cmd_trajectory(&market, &claim, &n_grid, &mc, &out),
        Command::DyadicExample {
            delta,
            alpha,
            n,
            n_grid,
            out,
        } => cmd_dyadic(delta, alpha, n, n_grid, &out),
        Command::SelfCheck { seed, samples } => cmd_self_check(seed, samples),
    }
}

fn cmd_classify(market: &MarketArgs, n_grid: &[usize], out: &OutArgs) -> Result<()> {
    let (spec, _) = market.load()?;
    let verdict = classify_with_witness(&spec, n_grid).map_err(core_config)?;
    match out.format.unwrap_or(Format::Json) {
        Format::Json => emit(out, &json(&verdict)?),
        Format::Csv => {
            let mut csv = Csv::new("classify", &["n", "theta_scale", "eps_n", "p_power"]);
            for w in verdict.witness.iter().flatten() {
                csv.row(&[w.n.to_string(), num(w.theta_scale), num(w.eps_n), num(w.p_power)]);
            }
            emit(out, &csv.buf)
        }
    }
}

fn cmd_np_gaussian(market: &MarketArgs, n: usize, eps: Option<f64>, problem: Problem, out: &OutArgs) -> Result<()> {
    let (spec, _) = market.load()?;
    let eps = eps.ok_or_else(|| config("np-set needs --eps (or --atoms for a discrete pair)"))?;
    let s = spec.theta_scale(n).map_err(core_config)?;
    let set = match problem {
        Problem::Naa1 => np_set_naa1(s, eps),
        Problem::Naa2 => np_set_naa2(s, eps),
        Problem::MinQ => np_set_min_q(s, eps),
    }
    .map_err(core_config)?;
    match out.format.unwrap_or(Format::Json) {
        Format::Json => emit(out, &json(&set)?),
        Format::Csv => {
            let mut csv = Csv::new(
                "np-set",
                &["theta_scale", "eps", "cut", "threshold_c", "gamma", "p_mass", "q_mass"],
            );
            csv.row(&[
                num(s),
                num(eps),
                num(set.cut),
                num(set.threshold_c),
                num(set.gamma),
                num(set.p_mass),
                num(set.q_mass),
            ]);
            emit(out, &csv.buf)
        }
    }
}

fn cmd_np_discrete(path: &Path, budget: Option<f64>, floor: Option<f64>, out: &OutArgs) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    let pair = DiscreteMeasurePair::from_csv(file).map_err(core_config)?;
    let solution = match (budget, floor) {
        (Some(b), None) => solve_np(&pair, b),
        (None, Some(f)) => solve_np_min(&pair, f),
        _ => return Err(config("give exactly one of --budget or --floor with --atoms")),
    }
    .map_err(core_config)?;
    match out.format.unwrap_or(Format::Json) {
        Format::Json => emit(out, &json(&solution)?),
        Format::Csv => {
            let mut csv = Csv::new("np-set", &["label", "p", "q", "chosen"]);
            for a in pair.atoms() {
                let chosen = solution.chosen_atoms.contains(&a.label);
                csv.row(&[a.label.clone(), num(a.p_mass), num(a.q_mass), u8::from(chosen).to_string()]);
            }
            emit(out, &csv.buf)
        }
    }
}

fn cmd_power_curve(market: &MarketArgs, n: usize, eps_grid: &[f64], out: &OutArgs) -> Result<()> {
    let (spec, _) = market.load()?;
    let points = contiguity_power_curve(&spec, n, eps_grid).map_err(core_config)?;
    match out.format.unwrap_or(Format::Csv) {
        Format::Json => emit(out, &json(&points)?),
        Format::Csv => {
            let mut csv = Csv::new("power-curve", &["eps", "p_power", "q_power"]);
            for p in &points {
                csv.row(&[num(p.eps), num(p.p_power), num(p.q_power)]);
            }
            emit(out, &csv.buf)
        }
    }
}

/// Core errors from pricing: statistical failures stay runtime errors,
/// everything else is a configuration problem.
fn pricing_error(e: qhedge_core::Error) -> anyhow::Error {
    match e {
        qhedge_core::Error::McDivergence { .. } | qhedge_core::Error::EmptySample => e.into(),
        qhedge_core::Error::MonteCarloRequired(what) => {
            config(format!("{what} needs Monte Carlo: pass --seed (and optionally --samples)"))
        }
        other => core_config(other),
    }
}

fn wants_mc(claim: &ClaimSequence, mc: &McArgs) -> bool {
    mc.mc || !matches!(claim.kind, ClaimKind::Constant(_))
}

#[derive(Serialize)]
struct PriceReport<'a> {
    claim: String,
    quantile: &'a QuantilePriceResult,
    strong: &'a StrongPrice,
}

fn cmd_price(market: &MarketArgs, claim: &ClaimArgs, n: usize, alpha: f64, mc: &McArgs, out: &OutArgs) -> Result<()> {
    let (spec, spec_claim) = market.load()?;
    let claim = resolve_claim(claim, spec_claim)?;
    let params = mc.params()?;
    let result = if mc.mc {
        let p = params.as_ref().expect("checked by McArgs::params");
        quantile_price_mc(&spec, &claim, n, alpha, p)
    } else {
        quantile_price(&spec, &claim, n, alpha, params.as_ref())
    }
    .map_err(pricing_error)?;
    let strong = strong_price(&spec, &claim, n, params.as_ref()).map_err(pricing_error)?;
    match out.format.unwrap_or(Format::Csv) {
        Format::Json => emit(
            out,
            &json(&PriceReport {
                claim: claim.to_string(),
                quantile: &result,
                strong: &strong,
            })?,
        ),
        Format::Csv => {
            let mut csv = Csv::new(
                "price",
                &["n", "alpha", "v_alpha", "stderr", "q_n_alpha", "method", "alpha0", "strong_price"],
            );
            csv.row(&[
                n.to_string(),
                num(alpha),
                num(result.value),
                num(result.stderr),
                num(result.quantile_q),
                method_name(&result).into(),
                num(result.atom_alpha0),
                num(strong.value),
            ]);
            emit(out, &csv.buf)
        }
    }
}

fn curve_csv(curve: &PriceCurve) -> String {
    let mut csv = Csv::new("curve", &["alpha", "v_alpha", "stderr", "q_n_alpha", "method"]);
    for p in &curve.points {
        csv.row(&[
            num(p.alpha),
            num(p.value),
            num(p.stderr),
            num(p.quantile_q),
            method_name(p).into(),
        ]);
    }
    if let Some(b) = &curve.lipschitz {
        let _ = writeln!(csv.buf, "# lipschitz_k={} k1={} k2={}", num(b.k), num(b.k1), num(b.k2));
    }
    csv.buf
}

fn cmd_curve(market: &MarketArgs, claim: &ClaimArgs, n: usize, alphas: &[f64], mc: &McArgs, out: &OutArgs) -> Result<()> {
    let (spec, spec_claim) = market.load()?;
    let claim = resolve_claim(claim, spec_claim)?;
    let params = mc.params()?;
    let curve = if wants_mc(&claim, mc) {
        let p = params.ok_or_else(|| {
            config(format!("curve of `{claim}` needs Monte Carlo: pass --seed (and optionally --samples)"))
        })?;
        price_curve_mc(&spec, &claim, n, alphas, &p)
    } else {
        price_curve(&spec, &claim, n, alphas, None)
    }
    .map_err(pricing_error)?;
    match out.format.unwrap_or(Format::Csv) {
        Format::Json => emit(out, &json(&curve)?),
        Format::Csv => emit(out, &curve_csv(&curve)),
    }
}

fn cmd_trajectory(market: &MarketArgs, claim: &ClaimArgs, n_grid: &[usize], mc: &McArgs, out: &OutArgs) -> Result<()> {
    let (spec, spec_claim) = market.load()?;
    let claim = resolve_claim(claim, spec_claim)?;
    let params = mc.params()?;
    let traj = weak_price_trajectory(&spec, &claim, n_grid, params.as_ref()).map_err(pricing_error)?;
    for p in traj.points.iter().filter(|p| p.eps_above_half) {
        eprintln!(
            "warning: n={}: ‖θⁿ‖√T = {} ≤ 1, so eps_n = Φ(−ln ‖θⁿ‖√T) ≥ 1/2",
            p.n,
            num(p.theta_scale)
        );
    }
    match out.format.unwrap_or(Format::Csv) {
        Format::Json => emit(out, &json(&traj)?),
        Format::Csv => {
            let mut csv = Csv::new(
                "trajectory",
                &["n", "theta_scale", "eps_n", "alpha_n", "v_alpha", "stderr", "gap_bound"],
            );
            for p in &traj.points {
                csv.row(&[
                    p.n.to_string(),
                    num(p.theta_scale),
                    num(p.eps_n),
                    num(p.alpha_n),
                    num(p.v_alpha),
                    num(p.stderr),
                    p.gap_bound.map(num).unwrap_or_default(),
                ]);
            }
            let _ = writeln!(csv.buf, "# strong_price={}", num(traj.strong_price));
            emit(out, &csv.buf)
        }
    }
}

fn cmd_dyadic(delta: f64, alpha: f64, n: Option<u32>, n_grid: Option<Vec<u32>>, out: &OutArgs) -> Result<()> {
    let grid = match (n, n_grid) {
        (Some(n), None) => (1..=n).collect(),
        (None, Some(g)) => g,
        _ => (1..=20).collect(),
    };
    let rows = price_table(delta, alpha, &grid).map_err(core_config)?;
    match out.format.unwrap_or(Format::Csv) {
        Format::Json => emit(out, &json(&rows)?),
        Format::Csv => {
            let mut csv = Csv::new("dyadic-example", &["n", "p_mass", "q_mass", "delta_alpha"]);
            for r in &rows {
                csv.row(&[r.n.to_string(), num(r.p_mass), num(r.q_mass), num(r.delta_alpha)]);
            }
            emit(out, &csv.buf)
        }
    }
}

fn cmd_self_check(seed: u64, samples: usize) -> Result<()> {
    let params = McParams::new(samples, seed);
    params.validate().map_err(core_config)?;
    let mut failures = 0;
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let one = ClaimSequence::constant(1.0)?;
    for s in [0.0, 1.0] {
        let spec = MarketSpec::with_theta_scale(s)?;
        let alphas = [0.1, 0.5, 0.9];
        let mc = price_curve_mc(&spec, &one, 1, &alphas, &params)?;
        for p in &mc.points {
            let exact = quantile_price(&spec, &one, 1, p.alpha, None)?.value;
            let tol = 3.0 * p.stderr + 1e-12;
            report(
                "quantile price closed form vs MC",
                (p.value - exact).abs() <= tol,
                format!("s={s} alpha={} mc={} exact={exact} tol={tol:.2e}", p.alpha, p.value),
            );
        }
    }

    for (s, eps) in [(1.0, 0.05), (2.0, 0.2)] {
        let set = np_set_naa1(s, eps)?;
        let est = estimate(&params, 7, 1, |g| f64::from(set.contains(g[0])))?;
        report(
            "NP power closed form vs MC",
            (est.mean - set.p_mass).abs() <= 3.0 * est.stderr,
            format!("s={s} eps={eps} mc={} exact={}", est.mean, set.p_mass),
        );
    }

    let mut rng = GaussianStream::new(seed, 99);
    let mut mismatches = 0;
    let trials = 200;
    for _ in 0..trials {
        let k = 1 + (rng.next_uniform() * 12.0) as usize;
        let mut draw = || -> Vec<f64> {
            let w: Vec<u64> = (0..k).map(|_| 1 + (rng.next_uniform() * 63.0) as u64).collect();
            let total: u64 = w.iter().sum();
            let scale = 1u64 << 20;
            let mut m: Vec<u64> = w.iter().map(|x| x * scale / total).collect();
            m[k - 1] += scale - m.iter().sum::<u64>();
            m.iter().map(|&x| x as f64 / scale as f64).collect()
        };
        let (p, q) = (draw(), draw());
        let pair = DiscreteMeasurePair::from_masses(&p, &q)?;
        let budget = rng.next_uniform();
        let ex = solve_np_exhaustive(&pair, budget)?;
        let lr = solve_np_lr(&pair, budget)?;
        if ex.objective_mass != lr.objective_mass {
            mismatches += 1;
        }
    }
    report(
        "discrete NP oracle equivalence",
        mismatches == 0,
        format!("{mismatches} mismatches in {trials} random pairs"),
    );

    for n in [5, 12, 30] {
        for alpha in [1.0 / 3.0, 0.5, 1.0] {
            let market = DyadicMarket::new(0.6, n)?;
            let closed = market.quantile_price_const1(alpha)?.value;
            let oracle = market.oracle_min_q(alpha)?.objective_mass;
            report(
                "dyadic closed form vs discrete oracle",
                (closed - oracle).abs() <= 1e-15,
                format!("n={n} alpha={alpha} closed={closed} oracle={oracle}"),
            );
        }
    }

    if failures > 0 {
        Err(anyhow!("{failures} self-check(s) failed"))
    } else {
        Ok(())
    }
}
