//! Expected payoffs of honest play and of chain-sybil deviations.
//!
//! A deviating agent at level `i` inserts `k` sybils between itself and its
//! children, so its original subtree moves `k` levels deeper. Chain payoffs
//! are exact expectations; the tree deviant payoff for `k ≥ 1` is an upper
//! bound and is labelled as such.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{fmt_real, write_csv};
use crate::schemes::RewardTable;

/// Where a deviating answer holder leaves its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Agent,
    #[default]
    LastSybil,
}

/// A single agent's sybil strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deviation {
    /// True depth of the agent, `1 ≤ level`.
    pub level: usize,
    /// Number of additional fake identities.
    pub sybils: usize,
    /// Strategy applies when the agent holds an answer (otherwise when it
    /// does not).
    #[serde(default)]
    pub holder: bool,
    #[serde(default)]
    pub placement: Placement,
}

impl Deviation {
    pub fn honest(level: usize) -> Self {
        Self {
            level,
            sybils: 0,
            holder: false,
            placement: Placement::LastSybil,
        }
    }

    pub fn non_holder(level: usize, sybils: usize) -> Self {
        Self {
            level,
            sybils,
            holder: false,
            placement: Placement::LastSybil,
        }
    }

    pub fn holder(level: usize, sybils: usize) -> Self {
        Self {
            level,
            sybils,
            holder: true,
            placement: Placement::LastSybil,
        }
    }
}

/// The event a payoff expectation is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// No node on levels `1..=i` holds an answer (chain referral).
    NoAnswerThroughAgent,
    /// The agent holds the first answer on its path.
    FirstAnswerHolder,
    /// The agent itself holds no answer (tree referral).
    AgentHasNoAnswer,
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoAnswerThroughAgent => "no_answer_through_agent",
            Self::FirstAnswerHolder => "first_answer_holder",
            Self::AgentHasNoAnswer => "agent_has_no_answer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    Exact,
    UpperBound,
    /// Sybils pushed everything past the horizon; nothing is earned.
    OutOfHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub value: f64,
    pub kind: PayoffKind,
    pub conditioning: Conditioning,
}

fn check_level(table: &RewardTable, i: usize) -> Result<()> {
    if i == 0 || i > table.h() {
        return Err(Error::OutOfHorizon {
            requested: i,
            horizon: table.h(),
        });
    }
    Ok(())
}

/// `D(i, k)`: expected reward of a non-holder at level `i` (and its `k`
/// sybils) on a chain, given no answer on levels `1..=i`.
///
/// Evaluated straight from the table as
/// `Σ_{s ≥ 1} p (1-p)^{s-1} Σ_{t=0}^{k} r(i+t, k-t+s)`, so it applies to any
/// oblivious chain table. For chain DR tables it equals `R_{i+k} + k P_{h-i-k}`.
pub fn chain_referral_payoff(table: &RewardTable, n: f64, i: usize, k: usize) -> Result<Payoff> {
    let p = crate::answer_probability(n)?;
    check_level(table, i)?;
    let h = table.h();
    if i + k > h {
        return Ok(Payoff {
            value: 0.0,
            kind: PayoffKind::OutOfHorizon,
            conditioning: Conditioning::NoAnswerThroughAgent,
        });
    }
    let mut value = 0.0;
    let mut weight = p;
    for s in 1..=h - i - k {
        let collected: f64 = (0..=k).map(|t| table.reward(i + t, k - t + s)).sum();
        value += weight * collected;
        weight *= 1.0 - p;
    }
    Ok(Payoff {
        value,
        kind: PayoffKind::Exact,
        conditioning: Conditioning::NoAnswerThroughAgent,
    })
}

/// Reward of a first-answer holder at level `i` that appends `k` sybils and
/// places its answer on the last one:
/// `Σ_{s=0}^{k-1} r(i+s, k-s) + r(i+k, 0)`.
pub fn chain_holder_payoff(table: &RewardTable, i: usize, k: usize) -> Result<Payoff> {
    check_level(table, i)?;
    if i + k > table.h() {
        return Ok(Payoff {
            value: 0.0,
            kind: PayoffKind::OutOfHorizon,
            conditioning: Conditioning::FirstAnswerHolder,
        });
    }
    let value = (0..k).map(|s| table.reward(i + s, k - s)).sum::<f64>() + table.reward(i + k, 0);
    Ok(Payoff {
        value,
        kind: PayoffKind::Exact,
        conditioning: Conditioning::FirstAnswerHolder,
    })
}

/// Probabilities that a fixed agent at level `i` of the `d`-ary tree lies on
/// the selected answer path (`rev`) or is the holder's parent (`dr`), and
/// the same conditioned on the agent holding no answer (`_na`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathProbabilities {
    pub p_rev: f64,
    pub p_dr: f64,
    pub p_rev_na: f64,
    pub p_dr_na: f64,
}

pub fn tree_path_probabilities(
    lambda: &[f64],
    d: usize,
    n: f64,
    i: usize,
    h: usize,
) -> Result<PathProbabilities> {
    let p = crate::answer_probability(n)?;
    if i == 0 || i >= h {
        return Err(Error::OutOfHorizon {
            requested: i,
            horizon: h,
        });
    }
    if lambda.len() < h {
        return Err(Error::HorizonMismatch {
            table: h,
            lambda: lambda.len(),
        });
    }
    if d == 0 {
        return Err(Error::InvalidParameter("arity d must be positive".into()));
    }
    let positions = (d as f64).powi(i as i32);
    let below: f64 = lambda[i..h].iter().sum();
    let p_rev = below / positions;
    let p_dr = lambda[i] / positions;
    let scale = 1.0 / (1.0 - p);
    Ok(PathProbabilities {
        p_rev,
        p_dr,
        p_rev_na: p_rev * scale,
        p_dr_na: p_dr * scale,
    })
}

/// Expected referral payoff of a non-holder at level `i < h` on a tree DR
/// table, conditioned on the agent holding no answer.
///
/// `k = 0` is exact: `n/(n-1) (λ_{i+1} x_i + Σ_{j>i} λ_j) / d^i`.
/// `k ≥ 1` returns the upper bound
/// `n/(n-1) (λ_{i+1} x_{i+k} + (k+1) Σ_{j>i} λ_j) / d^i`.
pub fn tree_referral_payoff(
    table: &RewardTable,
    lambda: &[f64],
    d: usize,
    n: f64,
    i: usize,
    k: usize,
) -> Result<Payoff> {
    let h = table.h();
    let (x, _) = table
        .tree_aux()
        .ok_or_else(|| Error::MissingInput("tree payoff needs a tree_dr table".into()))?;
    let probs = tree_path_probabilities(lambda, d, n, i, h)?;
    if i + k > h {
        return Ok(Payoff {
            value: 0.0,
            kind: PayoffKind::OutOfHorizon,
            conditioning: Conditioning::AgentHasNoAnswer,
        });
    }
    let value = probs.p_dr_na * x[i + k - 1] + (k + 1) as f64 * probs.p_rev_na;
    Ok(Payoff {
        value,
        kind: if k == 0 {
            PayoffKind::Exact
        } else {
            PayoffKind::UpperBound
        },
        conditioning: Conditioning::AgentHasNoAnswer,
    })
}

/// Least rewards any regular sybil-proof chain mechanism can pay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    /// `r_min(i, 1)` for `i = 1..h-1`.
    pub referral: Vec<f64>,
    /// `a_min(i)` for `i = 1..h`.
    pub holder: Vec<f64>,
}

/// Minimal rewards from the optimality induction on chains.
///
/// Sybil-proofness against a single extra sybil forces
/// `p r̂(i,1) ≥ p Σ_{s ≥ 1} p(1-p)^{s-1} r̂(i,s+1) + R̂_{i+1}`, and against
/// the holder's one-sybil split `â(i) ≥ r̂(i,1) + â(i+1)`. The farther
/// referral rewards `r̂(i, s ≥ 2)` take their least normalized value 1 and
/// `â(h) = 1`. `R̂_{i+1}` is summed directly from the already-bounded row.
pub fn chain_lower_bounds(n: f64, h: usize) -> Result<LowerBounds> {
    let p = crate::answer_probability(n)?;
    if h == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    // minimal row for level j: r̂(j,1) = referral[j-1], r̂(j,s≥2) = 1
    let mut referral = vec![0.0; h.saturating_sub(1)];
    let expected_next = |referral: &[f64], j: usize| -> f64 {
        // R̂_j = Σ_{s=1}^{h-j} p(1-p)^{s-1} r̂(j, s)
        let mut total = 0.0;
        let mut weight = p;
        for s in 1..=h - j {
            let r = if s == 1 { referral[j - 1] } else { 1.0 };
            total += weight * r;
            weight *= 1.0 - p;
        }
        total
    };
    for i in (1..h).rev() {
        let mut farther = 0.0;
        let mut weight = p;
        for _ in 1..h - i {
            farther += weight;
            weight *= 1.0 - p;
        }
        let next = if i + 1 < h {
            expected_next(&referral, i + 1)
        } else {
            0.0
        };
        referral[i - 1] = farther + next / p;
    }
    let mut holder = vec![1.0; h];
    for i in (1..h).rev() {
        holder[i - 1] = referral[i - 1] + holder[i];
    }
    Ok(LowerBounds { referral, holder })
}

/// One honest-versus-deviant comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffComparison {
    pub i: usize,
    pub k: usize,
    pub holder: bool,
    pub honest: f64,
    pub deviant: f64,
    /// `honest - deviant`; negative means the deviation pays.
    pub margin: f64,
    pub conditioning: Conditioning,
    pub deviant_kind: PayoffKind,
}

impl PayoffComparison {
    fn new(i: usize, k: usize, holder: bool, honest: Payoff, deviant: Payoff) -> Self {
        Self {
            i,
            k,
            holder,
            honest: honest.value,
            deviant: deviant.value,
            margin: honest.value - deviant.value,
            conditioning: honest.conditioning,
            deviant_kind: deviant.kind,
        }
    }
}

/// Every `(i, k, holder)` deviation with `i + k ≤ h` on a chain table.
pub fn chain_grid(table: &RewardTable, n: f64) -> Result<Vec<PayoffComparison>> {
    let h = table.h();
    let mut out = Vec::new();
    for i in 1..=h {
        let honest = chain_referral_payoff(table, n, i, 0)?;
        let holding = chain_holder_payoff(table, i, 0)?;
        for k in 1..=h - i {
            let deviant = chain_referral_payoff(table, n, i, k)?;
            out.push(PayoffComparison::new(i, k, false, honest, deviant));
            let deviant = chain_holder_payoff(table, i, k)?;
            out.push(PayoffComparison::new(i, k, true, holding, deviant));
        }
    }
    Ok(out)
}

/// Every `(i, k, holder)` deviation with `i + k ≤ h` on a tree DR table.
///
/// Non-holders compare the exact honest payoff with the deviant upper
/// bound. Holders compare `a_i` with the reward collected along the sybil
/// chain when the answer sits on the last sybil.
pub fn tree_grid(
    table: &RewardTable,
    lambda: &[f64],
    d: usize,
    n: f64,
) -> Result<Vec<PayoffComparison>> {
    let h = table.h();
    let mut out = Vec::new();
    for i in 1..=h {
        let holding = chain_holder_payoff(table, i, 0)?;
        let honest = if i < h {
            Some(tree_referral_payoff(table, lambda, d, n, i, 0)?)
        } else {
            None
        };
        for k in 1..=h - i {
            if let Some(honest) = honest {
                let deviant = tree_referral_payoff(table, lambda, d, n, i, k)?;
                out.push(PayoffComparison::new(i, k, false, honest, deviant));
            }
            let deviant = chain_holder_payoff(table, i, k)?;
            out.push(PayoffComparison::new(i, k, true, holding, deviant));
        }
    }
    Ok(out)
}

/// Write comparisons as CSV: `i,k,holder,honest,deviant,margin,conditioning`.
pub fn write_comparisons_csv<W: Write>(writer: W, rows: &[PayoffComparison]) -> Result<()> {
    let header: Vec<String> = [
        "i",
        "k",
        "holder",
        "honest",
        "deviant",
        "margin",
        "conditioning",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_csv(
        writer,
        &header,
        rows.iter().map(|c| {
            vec![
                c.i.to_string(),
                c.k.to_string(),
                c.holder.to_string(),
                fmt_real(c.honest),
                fmt_real(c.deviant),
                fmt_real(c.margin),
                c.conditioning.to_string(),
            ]
        }),
    )
}

/// `R_{i+k} + k P_{h-i-k}` from the chain auxiliaries.
pub fn chain_referral_from_aux(table: &RewardTable, i: usize, k: usize) -> Option<f64> {
    let (_, big_p, r) = table.chain_aux()?;
    let h = table.h();
    if i == 0 || i + k > h {
        return None;
    }
    Some(r[i + k - 1] + k as f64 * big_p[h - i - k])
}
