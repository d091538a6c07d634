//! Finite-scenario reserve engine for risk measures under interest-rate
//! ambiguity.
//!
//! The crate computes current reserve amounts for future positions when the
//! discount factor is stochastic or ambiguous. Cash additive base measures
//! (`cash_additive`) are composed with discount envelopes and convex
//! functions into cash sub-additive reserves (`subadditive`), characterized
//! dually by penalty functions over sub-probability weights. The remaining
//! modules cover the spot/forward conversion under a zero coupon bond
//! (`spot_forward`), extensions to enlarged sample spaces (`enlarged`),
//! optimal risk transfer by inf-convolution (`transfer`), and dynamic
//! reserves generated by lattice BSDEs (`bsde`).
//!
//! Everything is deterministic and immutable after construction; grid sweeps
//! parallelize internally with order-independent reductions.

pub mod bsde;
pub mod cash_additive;
pub mod enlarged;
pub mod error;
pub mod scenario;
pub mod spot_forward;
pub mod subadditive;
pub mod transfer;

pub use error::{EngineError, Result};
pub use scenario::{
    expectation, position_grid, prob_grid, subprob_grid, GridSpec, Position, ProbabilityWeights,
    ScenarioSpace, SubProbability,
};

/// Fixed 12-decimal rendering used by reports and CSV exports; negative zero
/// is normalized away.
pub fn format_fixed12(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.12}")
}

/// Caps the global worker pool used by parallel grid sweeps. Returns `false`
/// when the pool was already configured.
pub fn configure_worker_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}
