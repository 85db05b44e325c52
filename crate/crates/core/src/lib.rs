//! Quantile hedging and asymptotic arbitrage on large financial markets.
//!
//! The constant-coefficient Black–Scholes large market depends on the
//! number of assets `n`, the market price of risk `θⁿ` and the horizon `T`
//! only through `‖θⁿ‖√T`. Its Neyman–Pearson sets, arbitrage regime and
//! constant-claim prices are closed-form ([`gaussian`], [`arbitrage`],
//! [`pricing`]); general claims go through the deterministic parallel
//! Monte Carlo engine in [`mc`]. [`np`] solves discrete Neyman–Pearson
//! problems exactly and serves as an oracle, and [`dyadic`] reproduces a
//! market whose weak price is strictly below its strong price.

pub mod arbitrage;
pub mod dyadic;
pub mod error;
pub mod gaussian;
pub mod mc;
pub mod model;
pub mod np;
pub mod pricing;
pub mod serde_ext;

pub use arbitrage::{
    classify, classify_with_witness, contiguity_power_curve, separation_witness, ArbitrageFlags,
    ArbitrageVerdict, PowerPoint, Regime, WitnessPoint,
};
pub use dyadic::{binary_expansion, DeltaAffine, Dyadic, DyadicMarket, DyadicSet};
pub use error::{Error, Result};
pub use gaussian::{
    norm_cdf, norm_quantile, np_power_naa1, np_power_naa2, np_set_min_q, np_set_naa1, np_set_naa2,
    optimal_hoelder_exponents, saa_limit_fn, z_moment, GaussianNpSet, HoelderExponents,
};
pub use mc::{empirical_quantile, estimate, gaussian_stream, McEstimate, McParams};
pub use model::{
    sample_terminal, ClaimKind, ClaimSequence, CustomPayoff, DensityEvaluation, MarketSpec, Measure,
    SpecDocument, TailRule, TerminalSample,
};
pub use np::{solve_np, solve_np_min, DiscreteMeasurePair, NPSolution, NpMethod};
pub use pricing::{
    lipschitz_constant, price_curve, quantile_price, strong_price, weak_price_trajectory, PriceCurve,
    PriceMethod, QuantilePriceResult, WeakPriceTrajectory,
};
