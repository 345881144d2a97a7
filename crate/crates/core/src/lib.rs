//! Equilibrium investment-reinsurance strategies for competing insurers under
//! a 4/2 stochastic volatility market and model ambiguity.
//!
//! The library covers the full pipeline:
//!
//! * [`model`]: market/insurer/game parameters, diffusion approximation of
//!   the claim processes, premium principles, validity checks;
//! * [`riccati`]: the coupled Riccati pair behind the value-function factor
//!   slopes, its existence certificate, and the RK4 integrator;
//! * [`equilibrium`]: the n-insurer equilibrium: investment closed form,
//!   clamped reinsurance fixed point, worst-case distortions, value constants,
//!   stationarity diagnostics;
//! * [`meanfield`]: the mean-field limit over a type distribution and the
//!   finite-n convergence experiment;
//! * [`simulate`]: Monte Carlo validation under the reference or a worst-case
//!   measure, objective estimation, and the best-response perturbation scan;
//! * [`config`]: JSON configuration ingestion.

// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
// along with the out-of-domain sign.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod equilibrium;
pub mod error;
pub mod meanfield;
pub mod model;
pub mod riccati;
pub mod simulate;

pub use config::{load_config, parse_config, Config, NumericsConfig};
pub use equilibrium::{
    solve_game, GameSolution, SolveOptions, SrqpCoefficients, StationarityResidual, TypeSet,
    WorstCaseGenerators,
};
pub use error::{Error, Result};
pub use meanfield::{
    convergence_experiment, mean_field_solve, ConvergenceCell, MeanFieldEquilibrium,
    TypeDistribution,
};
pub use model::{
    diffusion_approximation, pairwise_claim_correlation, premium_rate, reinsurance_premium_rate,
    validate_game, volatility, DiffusionApproximation, GameConfig, InsurerType, MarketParams,
    ValidityCheck, ValidityReport,
};
pub use riccati::{
    build_coefficients, closed_form_v2, envelope_u, existence_check, solve_riccati,
    DiscriminantCase, Envelope, ExistenceReport, RiccatiCoefficients, RiccatiSolution,
};
pub use simulate::{
    best_response_scan, cir_mean, estimate_objective, simulate, simulate_with_tables, DriftShift,
    Measure, ObjectiveEstimate, PathBundle, ScanCell, SimulationConfig, StrategyTables,
};
