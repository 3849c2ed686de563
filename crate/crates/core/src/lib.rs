//! Sybil-proof direct-referral (DR) query incentive mechanisms.
//!
//! A query issued at the root of a Galton-Watson tree propagates down until
//! some node holding the answer reports it back. The mechanisms here pay the
//! agents on the answer path through an *oblivious* table `r(i, s)`: the
//! `i`-th agent on a path whose answer holder sits `s` levels below it.
//!
//! The crate is organised by concern:
//!
//! * [`branching`] — exact numerics for the branching process (`φ`, `λ`,
//!   extinction probability, structural landmarks of `λ`).
//! * [`schemes`] — construction of reward tables and answer selection.
//! * [`deviation`] — closed-form payoffs for honest play and sybil deviations.
//! * [`montecarlo`] — seeded simulation of the query protocol.
//! * [`audit`] — sybil-proofness certification, cost and optimality reports.
//! * [`report`] — JSON and CSV emitters with fixed real formatting.

pub mod audit;
pub mod branching;
pub mod deviation;
pub mod error;
pub mod montecarlo;
pub mod report;
pub mod schemes;

pub use audit::{
    check_sybil_proofness, check_x_properties, cost_scaling_report, expected_cost,
    optimality_check, AuditInputs, AuditMode, AuditReport, CostScalingRow, ScalingModel, Verdict,
    Witness,
};
pub use branching::{
    branching_factor, extinction_probability, first_answer_distribution, landmarks,
    no_answer_probabilities, verify_lambda_properties, BranchingProfile, LambdaReport, Landmarks,
    OffspringDistribution,
};
pub use deviation::{
    chain_holder_payoff, chain_lower_bounds, chain_referral_payoff, tree_path_probabilities,
    tree_referral_payoff, Conditioning, Deviation, Payoff, PayoffComparison, PayoffKind, Placement,
};
pub use error::{Error, Result};
pub use montecarlo::{
    estimate, inject_sybils, run_trial, sample_tree, Estimate, EstimateConfig, SampledTree,
    TrialOutcome,
};
pub use report::PropertyCheck;
pub use schemes::{
    allocate, dr_chain_scheme, dr_tree_scheme, dr_tree_scheme_for, select_answer,
    split_counterexample_scheme, ChainVariant, RewardTable, SchemeAux, SchemeKind, SelectionRule,
};

/// Per-node answer probability `p = 1/n` for answer rarity `n`.
pub(crate) fn answer_probability(n: f64) -> Result<f64> {
    if !(n.is_finite() && n > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "answer rarity n must be a finite real > 1, got {n}"
        )));
    }
    Ok(1.0 / n)
}
