//! Oblivious reward tables and answer selection.
//!
//! A table pays `r(i, s)` to the `i`-th agent on an answer path whose holder
//! is `s` levels further down (so the answer sits at level `i + s`). Only the
//! position on the path matters; identities and the tree shape never do.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::branching::{BranchingProfile, DEGENERATE_PROBABILITY};
use crate::error::{Error, Result};
use crate::montecarlo::{NodeId, SampledTree};

/// Which construction produced a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ChainDrVerbatim,
    ChainDrNormalized,
    TreeDr,
    Custom,
    SplitCounterexample,
}

impl SchemeKind {
    pub fn is_chain_dr(self) -> bool {
        matches!(self, Self::ChainDrVerbatim | Self::ChainDrNormalized)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ChainDrVerbatim => "chain_dr_verbatim",
            Self::ChainDrNormalized => "chain_dr_normalized",
            Self::TreeDr => "tree_dr",
            Self::Custom => "custom",
            Self::SplitCounterexample => "split_counterexample",
        }
    }
}

/// Chain DR formula as printed, or with `r(i, 1)` floored at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainVariant {
    Verbatim,
    #[default]
    Normalized,
}

/// Construction-time auxiliaries kept alongside a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeAux {
    Chain {
        n: f64,
        /// `P_0..P_h`: probability of an answer among `j` consecutive nodes.
        #[serde(rename = "P")]
        answer_within: Vec<f64>,
        /// `R_1..R_h`: expected reward of agent `i` given no answer up to it.
        #[serde(rename = "R")]
        expected_referral: Vec<f64>,
    },
    Tree {
        /// `x_1..x_h`: direct-referral bonus.
        x: Vec<f64>,
        /// `a_1..a_h`: answer-holder reward.
        a: Vec<f64>,
    },
}

/// An oblivious reward scheme for horizon `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct RewardTable {
    h: usize,
    kind: SchemeKind,
    /// `rows[i - 1][s] = r(i, s)` for `0 ≤ s ≤ h - i`.
    rows: Vec<Vec<f64>>,
    aux: Option<SchemeAux>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRepr {
    h: usize,
    kind: SchemeKind,
    entries: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aux: Option<SchemeAux>,
}

impl TryFrom<TableRepr> for RewardTable {
    type Error = Error;

    fn try_from(repr: TableRepr) -> Result<Self> {
        let mut table = RewardTable::from_entries(repr.h, &repr.entries)?;
        table.kind = repr.kind;
        table.aux = repr.aux;
        Ok(table)
    }
}

impl From<RewardTable> for TableRepr {
    fn from(table: RewardTable) -> Self {
        Self {
            h: table.h,
            kind: table.kind,
            entries: table.entries(),
            aux: table.aux,
        }
    }
}

impl RewardTable {
    fn zeroed(h: usize, kind: SchemeKind) -> Self {
        let rows = (1..=h).map(|i| vec![0.0; h - i + 1]).collect();
        Self {
            h,
            kind,
            rows,
            aux: None,
        }
    }

    /// A custom table from `(i, s, r)` triples; unlisted entries pay 0.
    pub fn from_entries(h: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidHorizon(0));
        }
        let mut table = Self::zeroed(h, SchemeKind::Custom);
        for &(i, s, r) in entries {
            if i == 0 || i + s > h {
                return Err(Error::OutOfHorizon {
                    requested: i + s,
                    horizon: h,
                });
            }
            if !r.is_finite() {
                return Err(Error::InvalidParameter(format!("r({i},{s}) = {r}")));
            }
            table.rows[i - 1][s] = r;
        }
        Ok(table)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn aux(&self) -> Option<&SchemeAux> {
        self.aux.as_ref()
    }

    /// `r(i, s)`; 0 outside `1 ≤ i`, `i + s ≤ h`.
    pub fn reward(&self, i: usize, s: usize) -> f64 {
        if i == 0 || i + s > self.h {
            return 0.0;
        }
        self.rows[i - 1][s]
    }

    /// All defined entries sorted by `(i, s)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(s, r)| (i + 1, s, *r)))
            .collect()
    }

    /// `(n, P_0..P_h, R_1..R_h)` for chain DR tables.
    pub fn chain_aux(&self) -> Option<(f64, &[f64], &[f64])> {
        match &self.aux {
            Some(SchemeAux::Chain {
                n,
                answer_within,
                expected_referral,
            }) => Some((*n, answer_within, expected_referral)),
            _ => None,
        }
    }

    /// `(x_1..x_h, a_1..a_h)` for tree DR tables.
    pub fn tree_aux(&self) -> Option<(&[f64], &[f64])> {
        match &self.aux {
            Some(SchemeAux::Tree { x, a }) => Some((x, a)),
            _ => None,
        }
    }

    /// Rewards along a path of length `path_len`; see [`allocate`].
    pub fn allocate(&self, path_len: usize) -> Result<Vec<f64>> {
        if path_len == 0 || path_len > self.h {
            return Err(Error::OutOfHorizon {
                requested: path_len,
                horizon: self.h,
            });
        }
        Ok((1..=path_len)
            .map(|i| self.reward(i, path_len - i))
            .collect())
    }

    /// Total paid on a path of length `path_len`.
    pub fn path_total(&self, path_len: usize) -> f64 {
        (1..=path_len.min(self.h))
            .map(|i| self.reward(i, path_len - i))
            .sum()
    }
}

/// `r(1, L-1), r(2, L-2), …, r(L, 0)` for an answer path of length `L`.
pub fn allocate(table: &RewardTable, path_len: usize) -> Result<Vec<f64>> {
    table.allocate(path_len)
}

/// `P_j = Σ_{t ≤ j} p (1-p)^{t-1} = 1 - (1-p)^j` for `j = 0..=h`.
pub(crate) fn answer_within(p: f64, h: usize) -> Vec<f64> {
    let log_miss = (-p).ln_1p();
    (0..=h).map(|j| -(j as f64 * log_miss).exp_m1()).collect()
}

/// The direct-referral scheme on a chain.
///
/// Built bottom-up from `i = h - 1`: `r(i, 1) = n R_{i+1} + P_{h-i-1}`,
/// `r(i, 0) = Σ_{t ≥ i} r(t, 1) + 1`, and every farther ancestor gets 1.
/// The normalized variant floors `r(i, 1)` at 1 and recomputes
/// `R_i = p r(i, 1) + (1-p) P_{h-i-1}`.
pub fn dr_chain_scheme(n: f64, h: usize, variant: ChainVariant) -> Result<RewardTable> {
    let p = crate::answer_probability(n)?;
    if h == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    let kind = match variant {
        ChainVariant::Verbatim => SchemeKind::ChainDrVerbatim,
        ChainVariant::Normalized => SchemeKind::ChainDrNormalized,
    };
    let big_p = answer_within(p, h);
    let mut table = RewardTable::zeroed(h, kind);
    // expected[i] = R_i, with R_h = 0 (no referral positions below level h)
    let mut expected = vec![0.0; h + 1];
    for i in (1..h).rev() {
        let below = big_p[h - i - 1];
        let formula = n * expected[i + 1] + below;
        let (referral, r_i) = match variant {
            ChainVariant::Verbatim => (formula, expected[i + 1] + below),
            ChainVariant::Normalized => {
                let r = formula.max(1.0);
                (r, p * r + (1.0 - p) * below)
            }
        };
        table.rows[i - 1][1] = referral;
        expected[i] = r_i;
    }
    let mut suffix = 1.0;
    for i in (1..=h).rev() {
        if i < h {
            suffix += table.rows[i - 1][1];
        }
        table.rows[i - 1][0] = suffix;
        for s in 2..=h - i {
            table.rows[i - 1][s] = 1.0;
        }
    }
    table.aux = Some(SchemeAux::Chain {
        n,
        answer_within: big_p,
        expected_referral: expected[1..].to_vec(),
    });
    Ok(table)
}

/// The direct-referral scheme for a branching process, from `λ_1..λ_h`.
///
/// `x_h = 0` and for `i < h`
/// `x_i = max_{i < j ≤ h} ( x_j + (j - i) Σ_{ℓ > i} λ_ℓ / λ_{i+1} )`.
/// The direct referral is paid `x_i + 1`, every farther ancestor 1, and the
/// holder at level `i` gets `a_i = x_i + a_{i+1} + 1` with `a_h = 1`.
pub fn dr_tree_scheme(lambda: &[f64], h: usize) -> Result<RewardTable> {
    if h == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    if lambda.len() < h {
        return Err(Error::HorizonMismatch {
            table: h,
            lambda: lambda.len(),
        });
    }
    let lambda = &lambda[..h];
    if let Some(i) = lambda.iter().position(|l| l.is_nan() || *l <= DEGENERATE_PROBABILITY) {
        return Err(Error::Degenerate {
            level: i + 1,
            reason: format!("lambda = {:e} is not usable as a divisor", lambda[i]),
        });
    }
    // tail[i] = Σ_{ℓ ≥ i} λ_ℓ, one-based with tail[h + 1] = 0
    let mut tail = vec![0.0; h + 2];
    for i in (1..=h).rev() {
        tail[i] = tail[i + 1] + lambda[i - 1];
    }
    let mut x = vec![0.0; h + 1];
    for i in (1..h).rev() {
        let unit = tail[i + 1] / lambda[i];
        let mut best = f64::NEG_INFINITY;
        for j in i + 1..=h {
            let candidate = x[j] + (j - i) as f64 * unit;
            // strict comparison keeps the smallest maximizing j
            if candidate > best {
                best = candidate;
            }
        }
        x[i] = best;
    }
    let mut a = vec![0.0; h + 2];
    a[h] = 1.0;
    for i in (1..h).rev() {
        a[i] = x[i] + a[i + 1] + 1.0;
    }

    let mut table = RewardTable::zeroed(h, SchemeKind::TreeDr);
    for i in 1..=h {
        let row = &mut table.rows[i - 1];
        row[0] = a[i];
        if i < h {
            row[1] = x[i] + 1.0;
        }
        for r in row.iter_mut().skip(2) {
            *r = 1.0;
        }
    }
    table.aux = Some(SchemeAux::Tree {
        x: x[1..].to_vec(),
        a: a[1..=h].to_vec(),
    });
    Ok(table)
}

/// Tree DR scheme for the first `h` levels of a branching profile.
pub fn dr_tree_scheme_for(profile: &BranchingProfile, h: usize) -> Result<RewardTable> {
    if h > profile.h_max {
        return Err(Error::HorizonMismatch {
            table: h,
            lambda: profile.h_max,
        });
    }
    dr_tree_scheme(profile.lambda_prefix(h), h)
}

/// A chain scheme in which deeper positions are paid half as much as their
/// parent, `r(i, s) = max(1, base / 2^{i-1})`, independent of `s`.
///
/// Paying the same to every agent regardless of where the answer sits lets
/// an answer holder collect its descendants' shares through sybils.
pub fn split_counterexample_scheme(h: usize, base: f64) -> Result<RewardTable> {
    if h < 2 {
        return Err(Error::InvalidHorizon(h));
    }
    if base.is_nan() || base < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "base reward must be at least 1, got {base}"
        )));
    }
    let mut table = RewardTable::zeroed(h, SchemeKind::SplitCounterexample);
    for i in 1..=h {
        let share = (base / 2f64.powi(i as i32 - 1)).max(1.0);
        table.rows[i - 1].iter_mut().for_each(|r| *r = share);
    }
    Ok(table)
}

/// How the root picks one answer among those reported back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Walk down from the root, choosing uniformly among children whose
    /// subtree reported an answer.
    #[serde(rename = "RW")]
    RandomWalk,
    /// The same walk restricted to the answers closest to the root.
    #[default]
    #[serde(rename = "SP")]
    ShortestPath,
}

/// Select an answer path (root excluded) on a resolved tree.
///
/// Returns `None` when no answer is reachable within the resolved horizon.
pub fn select_answer<R: Rng + ?Sized>(
    tree: &SampledTree,
    rule: SelectionRule,
    rng: &mut R,
) -> Option<Vec<NodeId>> {
    let reach = tree.reach();
    let target = reach[SampledTree::ROOT]?;
    let eligible = |c: NodeId| match (rule, reach[c]) {
        (_, None) => false,
        (SelectionRule::RandomWalk, Some(_)) => true,
        (SelectionRule::ShortestPath, Some(depth)) => depth == target,
    };
    let mut path = Vec::new();
    let mut current = SampledTree::ROOT;
    let mut candidates = Vec::new();
    loop {
        candidates.clear();
        candidates.extend(
            tree.children(current)
                .iter()
                .copied()
                .filter(|&c| eligible(c)),
        );
        // reach[current] is Some, so some child is eligible
        let next = match candidates.len() {
            0 => return None,
            1 => candidates[0],
            len => candidates[rng.gen_range(0..len)],
        };
        path.push(next);
        if tree.has_answer(next) {
            return Some(path);
        }
        current = next;
    }
}
