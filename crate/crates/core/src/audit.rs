//! Sybil-proofness certification, exact costs and scaling reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::branching::{BranchingProfile, OffspringDistribution};
use crate::deviation::{
    chain_grid, chain_lower_bounds, tree_grid, Deviation, PayoffComparison, PayoffKind,
};
use crate::error::{Error, Result};
use crate::montecarlo::{paired_deviation_margin, EstimateConfig};
use crate::report::{fmt_real, write_csv, PropertyCheck};
use crate::schemes::{
    answer_within, dr_chain_scheme, dr_tree_scheme, ChainVariant, RewardTable, SchemeKind,
    SelectionRule,
};

/// Default absolute tolerance on payoff margins.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const RELATIVE_TOLERANCE: f64 = 1e-12;

/// Exact expected total payment, `Σ_i λ_i Σ_{j ≤ i} r(j, i - j)`.
pub fn expected_cost(table: &RewardTable, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != table.h() {
        return Err(Error::HorizonMismatch {
            table: table.h(),
            lambda: lambda.len(),
        });
    }
    Ok(lambda
        .iter()
        .enumerate()
        .map(|(i, l)| l * table.path_total(i + 1))
        .sum())
}

/// `λ_i = p (1-p)^{i-1}` for a chain, `i = 1..h`.
pub fn chain_lambda(n: f64, h: usize) -> Result<Vec<f64>> {
    let p = crate::answer_probability(n)?;
    Ok((0..h).map(|i| p * (1.0 - p).powi(i as i32)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    /// Closed-form grid only.
    #[default]
    Analytic,
    /// Simulate every grid entry as well.
    Montecarlo,
    /// Closed-form grid; simulate near-ties and violations.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SybilProof,
    Violated,
}

/// Everything besides the table that an audit may need.
#[derive(Debug, Clone)]
pub struct AuditInputs {
    pub n: f64,
    /// `λ_1..λ_h`, required for tree tables.
    pub lambda: Option<Vec<f64>>,
    /// Arity of the underlying tree, required for tree tables.
    pub d: Option<usize>,
    /// Offspring law for simulating tree deviations.
    pub dist: Option<OffspringDistribution>,
    pub mc_trials: u64,
    pub mc_seed: u64,
}

impl AuditInputs {
    pub fn chain(n: f64) -> Self {
        Self {
            n,
            lambda: None,
            d: None,
            dist: None,
            mc_trials: 200_000,
            mc_seed: 0,
        }
    }

    pub fn tree(profile: &BranchingProfile, h: usize) -> Self {
        Self {
            n: profile.n,
            lambda: Some(profile.lambda_prefix(h).to_vec()),
            d: Some(profile.dist.max_children()),
            dist: Some(profile.dist.clone()),
            mc_trials: 200_000,
            mc_seed: 0,
        }
    }
}

/// Simulated honest-minus-deviant utility for one grid entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMargin {
    /// Unconditioned mean of `honest - deviant` utility.
    pub margin: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl SimulatedMargin {
    /// Significantly negative at three standard errors.
    pub fn confirms_violation(&self, tol: f64) -> bool {
        self.margin < -tol && self.margin + 3.0 * self.std_error < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub i: usize,
    pub k: usize,
    pub holder: bool,
    pub honest: f64,
    pub deviant: f64,
    pub margin: f64,
    /// Whether `deviant` is exact or an upper bound.
    pub deviant_kind: PayoffKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<SimulatedMargin>,
}

impl From<&PayoffComparison> for Witness {
    fn from(c: &PayoffComparison) -> Self {
        Self {
            i: c.i,
            k: c.k,
            holder: c.holder,
            honest: c.honest,
            deviant: c.deviant,
            margin: c.margin,
            deviant_kind: c.deviant_kind,
            simulated: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub verdict: Verdict,
    pub tolerance: f64,
    pub mode: AuditMode,
    pub scheme: SchemeKind,
    pub h: usize,
    pub witnesses: Vec<Witness>,
    /// Grid entries that were simulated, violations included.
    pub rechecked: Vec<Witness>,
    pub min_margin: f64,
    pub comparisons: usize,
    pub property_checks: Vec<PropertyCheck>,
    pub cost: f64,
}

impl AuditReport {
    pub fn find_witness(&self, i: usize, k: usize, holder: bool) -> Option<&Witness> {
        self.witnesses
            .iter()
            .find(|w| w.i == i && w.k == k && w.holder == holder)
    }

    /// Witness rows as CSV: `i,k,holder,honest,deviant,margin`.
    pub fn write_witness_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header: Vec<String> = ["i", "k", "holder", "honest", "deviant", "margin"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_csv(
            writer,
            &header,
            self.witnesses.iter().map(|w| {
                vec![
                    w.i.to_string(),
                    w.k.to_string(),
                    w.holder.to_string(),
                    fmt_real(w.honest),
                    fmt_real(w.deviant),
                    fmt_real(w.margin),
                ]
            }),
        )
    }
}

/// Sweep every single-agent sybil deviation and compare payoffs.
///
/// Tree DR tables are audited on the branching model (non-holders against the
/// deviant upper bound, holders against the sybil-chain sum); every other
/// table is audited on a chain. Ties pass: a deviation must strictly gain by
/// more than `tol` to count. A tree upper-bound violation is only reported
/// once simulation confirms it, unless no offspring law is available to
/// simulate with.
pub fn check_sybil_proofness(
    table: &RewardTable,
    inputs: &AuditInputs,
    mode: AuditMode,
    tol: f64,
) -> Result<AuditReport> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance {tol}")));
    }
    let h = table.h();
    let tree = table.kind() == SchemeKind::TreeDr;
    let (grid, lambda, sim_dist) = if tree {
        let lambda = inputs
            .lambda
            .clone()
            .ok_or_else(|| Error::MissingInput("tree audit needs lambda".into()))?;
        let d = inputs
            .d
            .ok_or_else(|| Error::MissingInput("tree audit needs the arity d".into()))?;
        if lambda.len() < h {
            return Err(Error::HorizonMismatch {
                table: h,
                lambda: lambda.len(),
            });
        }
        let lambda = lambda[..h].to_vec();
        let grid = tree_grid(table, &lambda, d, inputs.n)?;
        (grid, lambda, inputs.dist.clone())
    } else {
        let grid = chain_grid(table, inputs.n)?;
        let lambda = chain_lambda(inputs.n, h)?;
        (grid, lambda, Some(OffspringDistribution::chain()))
    };

    let simulate = |c: &PayoffComparison| -> Result<Option<SimulatedMargin>> {
        let Some(dist) = sim_dist.clone() else {
            return Ok(None);
        };
        let mut config = EstimateConfig::new(dist, inputs.n, table.clone());
        config.rule = SelectionRule::ShortestPath;
        config.trials = inputs.mc_trials.max(1);
        config.master_seed = inputs.mc_seed;
        let deviation = if c.holder {
            Deviation::holder(c.i, c.k)
        } else {
            Deviation::non_holder(c.i, c.k)
        };
        let m = paired_deviation_margin(&config, &deviation)?;
        Ok(Some(SimulatedMargin {
            margin: m.mean,
            std_error: m.std_error(),
            trials: m.count,
        }))
    };

    let mut witnesses = Vec::new();
    let mut rechecked = Vec::new();
    let mut min_margin = f64::INFINITY;
    for c in &grid {
        min_margin = min_margin.min(c.margin);
        let violated = c.margin < -tol;
        let recheck = match mode {
            AuditMode::Analytic => false,
            AuditMode::Montecarlo => true,
            AuditMode::Both => violated || c.margin.abs() <= 10.0 * tol,
        };
        let bound_only = c.deviant_kind == PayoffKind::UpperBound;
        // a bound violation is not yet a violation; simulate it regardless of mode
        let mut w = Witness::from(c);
        if recheck || (violated && bound_only) {
            w.simulated = simulate(c)?;
            rechecked.push(w.clone());
        }
        if violated {
            let confirmed = match (bound_only, w.simulated) {
                (true, Some(sim)) => sim.confirms_violation(tol),
                _ => true,
            };
            if confirmed {
                witnesses.push(w);
            }
        }
    }
    if grid.is_empty() {
        min_margin = 0.0;
    }

    let property_checks = if tree {
        tree_structure_checks(table)
    } else {
        chain_structure_checks(table)
    };

    Ok(AuditReport {
        verdict: if witnesses.is_empty() {
            Verdict::SybilProof
        } else {
            Verdict::Violated
        },
        tolerance: tol,
        mode,
        scheme: table.kind(),
        h,
        witnesses,
        rechecked,
        min_margin,
        comparisons: grid.len(),
        property_checks,
        cost: expected_cost(table, &lambda)?,
    })
}

fn chain_structure_checks(table: &RewardTable) -> Vec<PropertyCheck> {
    let h = table.h();
    let mut floor = PropertyCheck::new("referral_at_least_one");
    for i in 1..h {
        floor.observe(1.0 - table.reward(i, 1), 0.0);
    }
    vec![floor]
}

/// Holder certificate: `a_i = x_i + a_{i+1} + 1` and `x_i ≥ 1` below `h`.
fn tree_structure_checks(table: &RewardTable) -> Vec<PropertyCheck> {
    let Some((x, a)) = table.tree_aux() else {
        return Vec::new();
    };
    let h = table.h();
    let mut identity = PropertyCheck::new("holder_identity");
    identity.observe(a[h - 1] - 1.0, 0.0);
    for i in 1..h {
        let expect = x[i - 1] + a[i] + 1.0;
        identity.observe((a[i - 1] - expect).abs() / expect, RELATIVE_TOLERANCE);
    }
    let mut floor = PropertyCheck::new("referral_at_least_one");
    for &xi in &x[..h - 1] {
        floor.observe(1.0 - xi, RELATIVE_TOLERANCE);
    }
    vec![identity, floor]
}

/// What [`cost_scaling_report`] builds at each horizon.
#[derive(Debug, Clone)]
pub enum ScalingModel {
    Chain { n: f64, variant: ChainVariant },
    Tree { dist: OffspringDistribution, n: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostScalingRow {
    pub h: usize,
    pub cost: f64,
    /// Probability of an answer within the first `h` levels.
    pub answer_within: f64,
    pub cost_over_h2: f64,
    /// `cost / (n h² P_h²)`.
    pub cost_over_nh2p2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inside_bracket: Option<bool>,
}

/// Exact expected DR cost for each horizon in `h_list`.
///
/// Chains also report the explicit bracket
/// `[(n h²/32) P_{h/8} P_{h/2}, P_h (n h² P_h + h) + h P_h]`.
pub fn cost_scaling_report(model: &ScalingModel, h_list: &[usize]) -> Result<Vec<CostScalingRow>> {
    if h_list.is_empty() {
        return Ok(Vec::new());
    }
    if h_list.windows(2).any(|w| w[0] >= w[1]) || h_list[0] == 0 {
        return Err(Error::InvalidParameter(
            "h_list must be strictly ascending positive horizons".into(),
        ));
    }
    let h_max = *h_list.last().expect("non-empty");
    match model {
        ScalingModel::Chain { n, variant } => {
            let n = *n;
            let p = crate::answer_probability(n)?;
            let big_p = answer_within(p, h_max);
            h_list
                .iter()
                .map(|&h| {
                    let table = dr_chain_scheme(n, h, *variant)?;
                    let cost = expected_cost(&table, &chain_lambda(n, h)?)?;
                    let hf = h as f64;
                    let ph = big_p[h];
                    let low = n * hf * hf / 32.0 * big_p[h / 8] * big_p[h / 2];
                    let high = ph * (n * hf * hf * ph + hf) + hf * ph;
                    Ok(CostScalingRow {
                        h,
                        cost,
                        answer_within: ph,
                        cost_over_h2: cost / (hf * hf),
                        cost_over_nh2p2: cost / (n * hf * hf * ph * ph),
                        bracket: Some((low, high)),
                        inside_bracket: Some(low <= cost && cost <= high),
                    })
                })
                .collect()
        }
        ScalingModel::Tree { dist, n } => {
            let b = dist.branching_factor();
            if b <= 1.0 {
                return Err(Error::UnsupportedRegime(format!(
                    "tree cost scaling needs branching factor b > 1, got {b}"
                )));
            }
            let profile = BranchingProfile::new(dist, *n, h_max)?;
            h_list
                .iter()
                .map(|&h| {
                    let lambda = profile.lambda_prefix(h);
                    let table = dr_tree_scheme(lambda, h)?;
                    let cost = expected_cost(&table, lambda)?;
                    let hf = h as f64;
                    let ph = profile.answer_mass(h);
                    Ok(CostScalingRow {
                        h,
                        cost,
                        answer_within: ph,
                        cost_over_h2: cost / (hf * hf),
                        cost_over_nh2p2: cost / (n * hf * hf * ph * ph),
                        bracket: None,
                        inside_bracket: None,
                    })
                })
                .collect()
        }
    }
}

/// Structural bounds on the referral bonus.
///
/// Tree DR tables are checked against the profile's landmarks: `x` is
/// non-increasing, `x_i ≤ γ (h - i)` for `i > ℓ*`, and
/// `λ_{i+1} x_i ≤ (γ + 1)(h - i)` for `i ≤ ℓ*`. `γ` is the profile's
/// finite-horizon tail constant. Chain DR tables are checked against
/// `r(i, 1) ≤ n h P_h + 1`.
pub fn check_x_properties(
    table: &RewardTable,
    profile: &BranchingProfile,
) -> Result<Vec<PropertyCheck>> {
    let h = table.h();
    if let Some((n, big_p, _)) = table.chain_aux() {
        let bound = n * h as f64 * big_p[h] + 1.0;
        let mut c = PropertyCheck::new("referral_upper_bound");
        for i in 1..h {
            c.observe((table.reward(i, 1) - bound) / bound, RELATIVE_TOLERANCE);
        }
        return Ok(vec![c]);
    }
    let (x, _) = table
        .tree_aux()
        .ok_or_else(|| Error::MissingInput("x-properties need a DR table".into()))?;
    let marks = profile
        .landmarks
        .as_ref()
        .ok_or_else(|| Error::MissingInput("profile has no landmarks".into()))?;
    if profile.h_max < h {
        return Err(Error::HorizonMismatch {
            table: h,
            lambda: profile.h_max,
        });
    }
    let gamma = marks.gamma;
    let x_at = |i: usize| x[i - 1];

    let mut decreasing = PropertyCheck::new("x_decreasing");
    for i in 1..h {
        let scale = x_at(i).abs().max(1.0);
        decreasing.observe((x_at(i + 1) - x_at(i)) / scale, RELATIVE_TOLERANCE);
    }

    let note = format!("gamma = {gamma} (finite-horizon minimum)");
    let mut tail = PropertyCheck::new("x_tail_bound").with_note(note.clone());
    for i in marks.ellstar + 1..=h {
        let bound = gamma * (h - i) as f64;
        let scale = bound.max(1.0);
        tail.observe((x_at(i) - bound) / scale, RELATIVE_TOLERANCE);
    }

    let mut peak = PropertyCheck::new("x_peak_bound").with_note(note);
    for i in 1..=marks.ellstar.min(h - 1) {
        let bound = (gamma + 1.0) * (h - i) as f64;
        let value = profile.lambda_at(i + 1) * x_at(i);
        peak.observe((value - bound) / bound, RELATIVE_TOLERANCE);
    }
    Ok(vec![decreasing, tail, peak])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub n: f64,
    pub h: usize,
    pub pass: bool,
    /// Largest relative gap between the DR table and the lower bounds.
    pub max_deviation: f64,
}

/// Compare the verbatim chain DR table with the optimality lower bounds.
///
/// Gaps are measured relative to `max(1, |bound|)`.
pub fn optimality_check(n: f64, h: usize, tol: f64) -> Result<OptimalityReport> {
    let table = dr_chain_scheme(n, h, ChainVariant::Verbatim)?;
    let bounds = chain_lower_bounds(n, h)?;
    let gap = |value: f64, bound: f64| (value - bound).abs() / bound.abs().max(1.0);
    let referral = (1..h).map(|i| gap(table.reward(i, 1), bounds.referral[i - 1]));
    let holder = (1..=h).map(|i| gap(table.reward(i, 0), bounds.holder[i - 1]));
    let max_deviation = referral.chain(holder).fold(0.0, f64::max);
    Ok(OptimalityReport {
        n,
        h,
        pass: max_deviation <= tol,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::split_counterexample_scheme;
    use approx::assert_relative_eq;

    #[test]
    fn chain_cost_fixtures() {
        let lam = chain_lambda(2.0, 3).unwrap();
        let normalized = dr_chain_scheme(2.0, 3, ChainVariant::Normalized).unwrap();
        assert_relative_eq!(expected_cost(&normalized, &lam).unwrap(), 3.0);
        let verbatim = dr_chain_scheme(2.0, 3, ChainVariant::Verbatim).unwrap();
        assert_relative_eq!(expected_cost(&verbatim, &lam).unwrap(), 1.375);
        assert!(expected_cost(&verbatim, &lam[..2]).is_err());
    }

    #[test]
    fn tree_cost_h2_fixture() {
        for lam in [[0.3, 0.2], [0.05, 0.6]] {
            let t = dr_tree_scheme(&lam, 2).unwrap();
            assert_relative_eq!(
                expected_cost(&t, &lam).unwrap(),
                3.0 * lam[0] + 3.0 * lam[1]
            );
        }
    }

    #[test]
    fn zero_mass_costs_nothing() {
        let t = dr_tree_scheme(&[0.5, 0.25, 0.125], 3).unwrap();
        assert_eq!(expected_cost(&t, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn normalized_chain_is_sybil_proof_with_ties() {
        let t = dr_chain_scheme(2.0, 3, ChainVariant::Normalized).unwrap();
        let r =
            check_sybil_proofness(&t, &AuditInputs::chain(2.0), AuditMode::Analytic, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::SybilProof);
        assert!(r.min_margin.abs() < 1e-12);
    }

    #[test]
    fn verbatim_chain_violation_witness() {
        let t = dr_chain_scheme(2.0, 3, ChainVariant::Verbatim).unwrap();
        let r =
            check_sybil_proofness(&t, &AuditInputs::chain(2.0), AuditMode::Analytic, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        let w = r.find_witness(1, 2, true).unwrap();
        assert_relative_eq!(w.honest, 1.5);
        assert_relative_eq!(w.deviant, 2.0);
    }

    #[test]
    fn split_counterexample_witness() {
        let t = split_counterexample_scheme(2, 4.0).unwrap();
        let r =
            check_sybil_proofness(&t, &AuditInputs::chain(2.0), AuditMode::Analytic, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        let w = r.find_witness(1, 1, true).unwrap();
        assert_eq!((w.honest, w.deviant), (4.0, 6.0));
    }

    #[test]
    fn flat_table_is_not_sybil_proof() {
        let t = split_counterexample_scheme(3, 1.0).unwrap();
        let r =
            check_sybil_proofness(&t, &AuditInputs::chain(5.0), AuditMode::Analytic, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(r.witnesses.iter().any(|w| w.holder));
        assert!(r.witnesses.iter().any(|w| !w.holder));
    }

    #[test]
    fn tree_audit_needs_lambda() {
        let t = dr_tree_scheme(&[0.5, 0.25, 0.125], 3).unwrap();
        let err = check_sybil_proofness(&t, &AuditInputs::chain(2.0), AuditMode::Analytic, 1e-9)
            .unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }

    #[test]
    fn optimality_fixtures() {
        let r = optimality_check(2.0, 3, 1e-12).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_deviation, 0.0);
        let one = optimality_check(2.0, 1, 1e-12).unwrap();
        assert!(one.pass);
    }

    #[test]
    fn chain_x_property_fixture() {
        let t = dr_chain_scheme(2.0, 3, ChainVariant::Verbatim).unwrap();
        let profile = BranchingProfile::new(&OffspringDistribution::chain(), 2.0, 3).unwrap();
        let checks = check_x_properties(&t, &profile).unwrap();
        assert!(checks[0].pass);
    }

    #[test]
    fn scaling_rejects_unsorted() {
        let model = ScalingModel::Chain {
            n: 5.0,
            variant: ChainVariant::Verbatim,
        };
        assert!(cost_scaling_report(&model, &[4, 2]).is_err());
        let sub = ScalingModel::Tree {
            dist: OffspringDistribution::chain(),
            n: 5.0,
        };
        assert!(matches!(
            cost_scaling_report(&sub, &[2, 4]),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn single_level_chain_cost() {
        let model = ScalingModel::Chain {
            n: 4.0,
            variant: ChainVariant::Normalized,
        };
        let rows = cost_scaling_report(&model, &[1]).unwrap();
        let t = dr_chain_scheme(4.0, 1, ChainVariant::Normalized).unwrap();
        assert_eq!(rows[0].cost, 0.25 * t.reward(1, 0));
    }
}
