//! Seeded simulation of the query protocol on sampled branching trees.
//!
//! Agents follow the equilibrium profile: a node holding an answer reports it
//! and stops, a node without one propagates the query, and nodes at the
//! horizon never propagate. One designated agent may deviate by inserting a
//! sybil chain. The monitored agent is the leftmost node at its level of the
//! underlying `d`-ary tree; by symmetry any fixed position behaves the same.
//!
//! Trial `t` draws from a ChaCha stream selected by `(master_seed, t)`, and
//! trials are reduced in fixed-size blocks in trial order, so summaries do not
//! depend on how blocks are scheduled across threads.

use std::borrow::Cow;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::OffspringDistribution;
use crate::deviation::{Deviation, Placement};
use crate::error::{Error, Result};
use crate::report::{fmt_real, write_csv};
use crate::schemes::{select_answer, RewardTable, SelectionRule};

pub type NodeId = usize;

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq)]
struct TreeNode {
    parent: Option<NodeId>,
    depth: usize,
    /// Position among the parent's `d` child slots.
    slot: usize,
    answer: bool,
    sybil: bool,
    children: Vec<NodeId>,
}

/// One realized active tree, truncated at a depth limit.
///
/// Children below an answer holder are never generated: the holder stops
/// the query there under the equilibrium profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTree {
    arity: usize,
    depth_limit: usize,
    nodes: Vec<TreeNode>,
    /// Shallowest reachable answer depth in each node's subtree.
    reach: Vec<Option<usize>>,
    resolved_horizon: Option<usize>,
}

impl SampledTree {
    pub const ROOT: NodeId = 0;

    fn with_root(arity: usize, depth_limit: usize) -> Self {
        Self {
            arity,
            depth_limit,
            nodes: vec![TreeNode {
                parent: None,
                depth: 0,
                slot: 0,
                answer: false,
                sybil: false,
                children: Vec::new(),
            }],
            reach: Vec::new(),
            resolved_horizon: None,
        }
    }

    /// Build a tree from explicit `(parent, slot, answer)` triples, listed so
    /// that parents precede children. Node ids follow the list, starting at 1.
    pub fn from_edges(
        arity: usize,
        depth_limit: usize,
        edges: &[(NodeId, usize, bool)],
    ) -> Result<Self> {
        let mut tree = Self::with_root(arity, depth_limit);
        for &(parent, slot, answer) in edges {
            if parent >= tree.nodes.len() || slot >= arity {
                return Err(Error::InvalidParameter(format!(
                    "edge ({parent}, {slot}) does not fit the tree"
                )));
            }
            tree.push_child(parent, slot, answer, false);
        }
        tree.resolve(depth_limit);
        Ok(tree)
    }

    fn push_child(&mut self, parent: NodeId, slot: usize, answer: bool, sybil: bool) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(TreeNode {
            parent: Some(parent),
            depth,
            slot,
            answer,
            sybil,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn depth_limit(&self) -> usize {
        self.depth_limit
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.nodes[node].children
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes[node].parent
    }

    pub fn depth(&self, node: NodeId) -> usize {
        self.nodes[node].depth
    }

    pub fn slot(&self, node: NodeId) -> usize {
        self.nodes[node].slot
    }

    pub fn has_answer(&self, node: NodeId) -> bool {
        self.nodes[node].answer
    }

    pub fn is_sybil(&self, node: NodeId) -> bool {
        self.nodes[node].sybil
    }

    /// Number of nodes at `level`.
    pub fn width(&self, level: usize) -> usize {
        self.nodes.iter().filter(|n| n.depth == level).count()
    }

    /// The node reached by always following child slot 0, if active.
    pub fn leftmost_at(&self, level: usize) -> Option<NodeId> {
        let mut current = Self::ROOT;
        for _ in 0..level {
            current = *self.nodes[current]
                .children
                .iter()
                .find(|&&c| self.nodes[c].slot == 0 && !self.nodes[c].sybil)?;
        }
        Some(current)
    }

    /// Shallowest reachable answer depth per node, from the last `resolve`.
    pub fn reach(&self) -> &[Option<usize>] {
        &self.reach
    }

    /// Mark reachable answers under the equilibrium profile with horizon `h`.
    ///
    /// A node is reachable when every strict ancestor lacks an answer and its
    /// depth is at most `h`. The root never holds an answer.
    pub fn resolve(&mut self, h: usize) {
        let mut reach = vec![None; self.nodes.len()];
        // iterative post-order; sybil injection breaks index order
        let mut stack = vec![(Self::ROOT, false)];
        while let Some((node, expanded)) = stack.pop() {
            let n = &self.nodes[node];
            if n.depth > h {
                continue;
            }
            if node != Self::ROOT && n.answer {
                reach[node] = Some(n.depth);
                continue;
            }
            if n.depth == h {
                continue;
            }
            if expanded {
                reach[node] = n.children.iter().filter_map(|&c| reach[c]).min();
            } else {
                stack.push((node, true));
                stack.extend(n.children.iter().map(|&c| (c, false)));
            }
        }
        self.reach = reach;
        self.resolved_horizon = Some(h);
    }
}

/// Sample a tree to `depth` levels.
///
/// Each non-holder above the depth limit draws its child count `C(v)` from
/// `dist` and occupies `C(v)` of its `d` slots uniformly at random; every
/// non-root node holds the answer independently with probability `1/n`.
pub fn sample_tree<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: f64,
    depth: usize,
    rng: &mut R,
) -> Result<SampledTree> {
    let p = crate::answer_probability(n)?;
    let d = dist.max_children();
    let mut tree = SampledTree::with_root(d, depth);
    let mut next = 0;
    while next < tree.nodes.len() {
        let node = next;
        next += 1;
        if tree.nodes[node].answer || tree.nodes[node].depth >= depth {
            continue;
        }
        let count = dist.sample_children(rng);
        let mut slots = index::sample(rng, d, count).into_vec();
        slots.sort_unstable();
        for slot in slots {
            let answer = rng.gen_bool(p);
            tree.push_child(node, slot, answer, false);
        }
    }
    tree.resolve(depth);
    Ok(tree)
}

/// Replace `agent`'s edge to its children by a chain of `sybils` fake nodes.
///
/// The original children re-attach below the last sybil and the whole
/// subtree moves `sybils` levels deeper. When `holder` is set with
/// [`Placement::LastSybil`] the answer mark moves from the agent to the last
/// sybil. Returns the ids of the inserted sybils.
pub fn inject_sybils_at(
    tree: &mut SampledTree,
    agent: NodeId,
    deviation: &Deviation,
) -> Vec<NodeId> {
    let k = deviation.sybils;
    if k == 0 {
        return Vec::new();
    }
    let original = std::mem::take(&mut tree.nodes[agent].children);
    let mut sybils = Vec::with_capacity(k);
    let mut last = agent;
    for _ in 0..k {
        last = tree.push_child(last, 0, false, true);
        sybils.push(last);
    }
    for &c in &original {
        tree.nodes[c].parent = Some(last);
    }
    tree.nodes[last].children = original;
    // shift the re-attached subtree
    let mut stack = tree.nodes[last].children.clone();
    while let Some(node) = stack.pop() {
        tree.nodes[node].depth += k;
        stack.extend(tree.nodes[node].children.iter().copied());
    }
    if deviation.holder && deviation.placement == Placement::LastSybil && tree.nodes[agent].answer {
        tree.nodes[agent].answer = false;
        tree.nodes[last].answer = true;
    }
    sybils
}

/// Apply `deviation` to the leftmost agent at its level.
///
/// `k = 0`, or an inactive agent, returns the tree unchanged.
pub fn inject_sybils(tree: &SampledTree, deviation: &Deviation) -> SampledTree {
    let mut out = tree.clone();
    if let Some(agent) = out.leftmost_at(deviation.level) {
        inject_sybils_at(&mut out, agent, deviation);
        let h = out.depth_limit;
        out.resolve(h);
    }
    out
}

/// What happened to the monitored agent in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorStatus {
    NotRequested,
    /// The designated position is not in the realized tree.
    NotActive,
    /// The agent's answer state did not trigger the deviation.
    Honest,
    Deviated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub answer_level: Option<usize>,
    pub path: Vec<NodeId>,
    /// Child slot of each node on the path.
    pub path_slots: Vec<usize>,
    pub rewards: Vec<f64>,
    pub total_cost: f64,
    /// Rewards collected by the monitored agent and its sybils.
    pub monitored_utility: f64,
    pub monitor: MonitorStatus,
}

/// Run the query protocol once on `tree`.
///
/// The deviation (if any) is applied to the leftmost agent at its level when
/// that agent's answer state matches `deviation.holder`; `sybils = 0` only
/// monitors it. Rewards index post-injection path positions, and answers
/// beyond `table.h()` earn nothing.
pub fn run_trial<R: Rng + ?Sized>(
    tree: &SampledTree,
    table: &RewardTable,
    rule: SelectionRule,
    deviation: Option<&Deviation>,
    rng: &mut R,
) -> TrialOutcome {
    let h = table.h();
    let mut working = Cow::Borrowed(tree);
    let mut monitored: Vec<NodeId> = Vec::new();
    let mut monitor = MonitorStatus::NotRequested;
    if let Some(dev) = deviation {
        monitor = match tree.leftmost_at(dev.level) {
            None => MonitorStatus::NotActive,
            Some(agent) => {
                monitored.push(agent);
                if tree.has_answer(agent) == dev.holder && dev.sybils > 0 {
                    monitored.extend(inject_sybils_at(working.to_mut(), agent, dev));
                    MonitorStatus::Deviated
                } else {
                    MonitorStatus::Honest
                }
            }
        };
    }
    if matches!(working, Cow::Owned(_)) || tree.resolved_horizon != Some(h) {
        working.to_mut().resolve(h);
    }
    let tree = working.as_ref();

    let path = select_answer(tree, rule, rng).unwrap_or_default();
    let rewards = if path.is_empty() {
        Vec::new()
    } else {
        table
            .allocate(path.len())
            .expect("resolved paths never exceed the horizon")
    };
    let total_cost = rewards.iter().sum();
    let monitored_utility = path
        .iter()
        .zip(&rewards)
        .filter(|(node, _)| monitored.contains(node))
        .map(|(_, r)| r)
        .sum();
    TrialOutcome {
        answer_level: (!path.is_empty()).then_some(path.len()),
        path_slots: path.iter().map(|&v| tree.slot(v)).collect(),
        path,
        rewards,
        total_cost,
        monitored_utility,
        monitor,
    }
}

/// The random stream for trial `trial` under `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Simulation settings for [`estimate`].
#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub dist: OffspringDistribution,
    pub n: f64,
    pub table: RewardTable,
    pub rule: SelectionRule,
    pub deviation: Option<Deviation>,
    pub trials: u64,
    pub master_seed: u64,
    pub block_size: u64,
}

impl EstimateConfig {
    pub fn new(dist: OffspringDistribution, n: f64, table: RewardTable) -> Self {
        Self {
            dist,
            n,
            table,
            rule: SelectionRule::ShortestPath,
            deviation: None,
            trials: 10_000,
            master_seed: 0,
            block_size: 10_000,
        }
    }

    pub fn h(&self) -> usize {
        self.table.h()
    }
}

/// Running mean and sum of squared deviations (Chan et al. merge).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 +=
            other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    /// Standard error of the mean; 0 with fewer than two samples.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }

    /// 99% normal-approximation interval for the mean.
    pub fn ci99(&self) -> (f64, f64) {
        let half = Z_99 * self.std_error();
        (self.mean - half, self.mean + half)
    }
}

/// Per-block accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block: u64,
    pub cost: Moments,
    pub utility: Moments,
    /// Count of trials whose selected answer sits at level `i`, `i = 1..h`.
    pub level_counts: Vec<u64>,
    /// Count of trials where the leftmost level-`i` agent is the holder's
    /// parent, `i = 1..h-1`.
    pub dr_counts: Vec<u64>,
    /// Count of trials where the leftmost level-`i` agent is a strict
    /// ancestor of the holder, `i = 1..h-1`.
    pub rev_counts: Vec<u64>,
    pub not_active: u64,
    pub deviated: u64,
}

impl BlockSummary {
    fn empty(block: u64, h: usize) -> Self {
        Self {
            block,
            cost: Moments::default(),
            utility: Moments::default(),
            level_counts: vec![0; h],
            dr_counts: vec![0; h.saturating_sub(1)],
            rev_counts: vec![0; h.saturating_sub(1)],
            not_active: 0,
            deviated: 0,
        }
    }

    fn record(&mut self, outcome: &TrialOutcome) {
        self.cost.push(outcome.total_cost);
        self.utility.push(outcome.monitored_utility);
        match outcome.monitor {
            MonitorStatus::NotActive => self.not_active += 1,
            MonitorStatus::Deviated => self.deviated += 1,
            _ => {}
        }
        let Some(len) = outcome.answer_level else {
            return;
        };
        self.level_counts[len - 1] += 1;
        // leftmost prefix: number of leading slot-0 nodes on the path
        let prefix = outcome.path_slots.iter().take_while(|&&s| s == 0).count();
        for i in 1..len.min(prefix + 1) {
            self.rev_counts[i - 1] += 1;
        }
        if len >= 2 && prefix >= len - 1 {
            self.dr_counts[len - 2] += 1;
        }
    }

    fn merge(&mut self, other: &BlockSummary) {
        self.cost.merge(&other.cost);
        self.utility.merge(&other.utility);
        for (a, b) in self.level_counts.iter_mut().zip(&other.level_counts) {
            *a += b;
        }
        for (a, b) in self.dr_counts.iter_mut().zip(&other.dr_counts) {
            *a += b;
        }
        for (a, b) in self.rev_counts.iter_mut().zip(&other.rev_counts) {
            *a += b;
        }
        self.not_active += other.not_active;
        self.deviated += other.deviated;
    }

    pub fn trials(&self) -> u64 {
        self.cost.count
    }
}

/// Empirical summary of a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: u64,
    pub master_seed: u64,
    pub mean_cost: f64,
    pub cost_std_error: f64,
    pub cost_ci: (f64, f64),
    /// Frequency of the selected answer level, `i = 1..h`.
    pub level_histogram: Vec<f64>,
    /// Frequency of the DR event for the leftmost agent at level `i`.
    pub dr_frequency: Vec<f64>,
    /// Frequency of the Rev event for the leftmost agent at level `i`.
    pub rev_frequency: Vec<f64>,
    pub mean_utility: f64,
    pub utility_std_error: f64,
    pub utility_ci: (f64, f64),
    pub not_active_trials: u64,
    pub deviated_trials: u64,
    #[serde(skip)]
    pub blocks: Vec<BlockSummary>,
}

impl Estimate {
    /// Binomial standard error of a frequency estimated from these trials.
    pub fn frequency_sigma(&self, prob: f64) -> f64 {
        (prob * (1.0 - prob) / self.trials as f64).sqrt()
    }
}

fn run_block(config: &EstimateConfig, block: u64) -> Result<BlockSummary> {
    let h = config.h();
    let start = block * config.block_size;
    let end = (start + config.block_size).min(config.trials);
    let mut summary = BlockSummary::empty(block, h);
    for t in start..end {
        let mut rng = trial_rng(config.master_seed, t);
        let tree = sample_tree(&config.dist, config.n, h, &mut rng)?;
        let outcome = run_trial(
            &tree,
            &config.table,
            config.rule,
            config.deviation.as_ref(),
            &mut rng,
        );
        summary.record(&outcome);
    }
    Ok(summary)
}

/// Estimate cost, level distribution and monitored utility by simulation.
pub fn estimate(config: &EstimateConfig) -> Result<Estimate> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if config.block_size == 0 {
        return Err(Error::InvalidParameter(
            "block size must be at least 1".into(),
        ));
    }
    crate::answer_probability(config.n)?;
    let h = config.h();
    let nblocks = config.trials.div_ceil(config.block_size);
    let blocks: Vec<BlockSummary> = (0..nblocks)
        .into_par_iter()
        .map(|b| run_block(config, b))
        .collect::<Result<_>>()?;
    let mut total = BlockSummary::empty(0, h);
    for b in &blocks {
        total.merge(b);
    }
    let trials = total.trials();
    let freq =
        |counts: &[u64]| -> Vec<f64> { counts.iter().map(|&c| c as f64 / trials as f64).collect() };
    Ok(Estimate {
        trials,
        master_seed: config.master_seed,
        mean_cost: total.cost.mean,
        cost_std_error: total.cost.std_error(),
        cost_ci: total.cost.ci99(),
        level_histogram: freq(&total.level_counts),
        dr_frequency: freq(&total.dr_counts),
        rev_frequency: freq(&total.rev_counts),
        mean_utility: total.utility.mean,
        utility_std_error: total.utility.std_error(),
        utility_ci: total.utility.ci99(),
        not_active_trials: total.not_active,
        deviated_trials: total.deviated,
        blocks,
    })
}

/// Paired honest-versus-deviant utility difference under common random
/// numbers: each trial samples one tree and replays the same selection
/// stream with and without the deviation.
pub fn paired_deviation_margin(config: &EstimateConfig, deviation: &Deviation) -> Result<Moments> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let h = config.h();
    let honest = Deviation {
        sybils: 0,
        ..*deviation
    };
    let nblocks = config.trials.div_ceil(config.block_size.max(1));
    let per_block: Vec<Moments> = (0..nblocks)
        .into_par_iter()
        .map(|b| -> Result<Moments> {
            let start = b * config.block_size;
            let end = (start + config.block_size).min(config.trials);
            let mut m = Moments::default();
            for t in start..end {
                let mut rng = trial_rng(config.master_seed, t);
                let tree = sample_tree(&config.dist, config.n, h, &mut rng)?;
                let mut replay = rng.clone();
                let a = run_trial(&tree, &config.table, config.rule, Some(&honest), &mut rng);
                let d = run_trial(
                    &tree,
                    &config.table,
                    config.rule,
                    Some(deviation),
                    &mut replay,
                );
                m.push(a.monitored_utility - d.monitored_utility);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut total = Moments::default();
    for m in &per_block {
        total.merge(m);
    }
    Ok(total)
}

/// Results CSV: one row per trial block.
pub fn write_blocks_csv<W: std::io::Write>(writer: W, h: usize, estimate: &Estimate) -> Result<()> {
    let mut header: Vec<String> = ["trial_block", "trials", "mean_cost", "ci_low", "ci_high"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=h).map(|i| format!("level_{i}")));
    header.push("mean_utility".into());
    header.push("utility_ci".into());
    let rows = estimate.blocks.iter().map(|b| {
        let trials = b.trials();
        let (lo, hi) = b.cost.ci99();
        let mut row = vec![
            b.block.to_string(),
            trials.to_string(),
            fmt_real(b.cost.mean),
            fmt_real(lo),
            fmt_real(hi),
        ];
        row.extend(
            b.level_counts
                .iter()
                .map(|&c| fmt_real(c as f64 / trials as f64)),
        );
        row.push(fmt_real(b.utility.mean));
        row.push(fmt_real(Z_99 * b.utility.std_error()));
        row
    });
    write_csv(writer, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{dr_chain_scheme, ChainVariant};

    #[test]
    fn chain_sample_is_a_path() {
        let mut rng = trial_rng(3, 0);
        let tree = sample_tree(&OffspringDistribution::chain(), 1e12, 6, &mut rng).unwrap();
        assert_eq!(tree.len(), 7);
        for level in 0..=6 {
            assert_eq!(tree.width(level), 1);
        }
    }

    #[test]
    fn depth_zero_is_root_only() {
        let mut rng = trial_rng(3, 1);
        let dist = OffspringDistribution::new(vec![0.25, 0.0, 0.75]).unwrap();
        let tree = sample_tree(&dist, 2.0, 0, &mut rng).unwrap();
        assert_eq!(tree.len(), 1);
        assert!(tree.reach()[0].is_none());
    }

    #[test]
    fn parents_are_active_and_arity_respected() {
        let dist = OffspringDistribution::new(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        for t in 0..50 {
            let mut rng = trial_rng(11, t);
            let tree = sample_tree(&dist, 5.0, 5, &mut rng).unwrap();
            for v in 0..tree.len() {
                assert!(tree.children(v).len() <= 3);
                if let Some(p) = tree.parent(v) {
                    assert_eq!(tree.depth(p) + 1, tree.depth(v));
                    assert!(!tree.has_answer(p));
                }
            }
        }
    }

    fn chain_tree(answers: &[bool]) -> SampledTree {
        let edges: Vec<_> = answers
            .iter()
            .enumerate()
            .map(|(i, &a)| (i, 0, a))
            .collect();
        SampledTree::from_edges(1, answers.len(), &edges).unwrap()
    }

    #[test]
    fn no_answer_costs_nothing() {
        let tree = chain_tree(&[false, false, false]);
        let table = dr_chain_scheme(2.0, 3, ChainVariant::Normalized).unwrap();
        let out = run_trial(
            &tree,
            &table,
            SelectionRule::ShortestPath,
            None,
            &mut trial_rng(0, 0),
        );
        assert!(out.path.is_empty());
        assert_eq!(out.total_cost, 0.0);
        assert_eq!(out.answer_level, None);
    }

    #[test]
    fn chain_answer_at_two_pays_fixture() {
        let tree = chain_tree(&[false, true, false]);
        let table = dr_chain_scheme(2.0, 3, ChainVariant::Normalized).unwrap();
        let out = run_trial(
            &tree,
            &table,
            SelectionRule::RandomWalk,
            None,
            &mut trial_rng(0, 0),
        );
        assert_eq!(out.answer_level, Some(2));
        assert_eq!(out.rewards, vec![1.5, 2.0]);
        assert_eq!(out.total_cost, 3.5);
    }

    #[test]
    fn sybil_shifts_answer_deeper() {
        let tree = chain_tree(&[false, true, false]);
        let dev = Deviation::non_holder(1, 1);
        let shifted = inject_sybils(&tree, &dev);
        let answer = (0..shifted.len()).find(|&v| shifted.has_answer(v)).unwrap();
        assert_eq!(shifted.depth(answer), 3);
        let sybil = (0..shifted.len()).find(|&v| shifted.is_sybil(v)).unwrap();
        assert_eq!(shifted.depth(sybil), 2);
    }

    #[test]
    fn zero_sybils_is_identity() {
        let tree = chain_tree(&[false, true, false]);
        assert_eq!(inject_sybils(&tree, &Deviation::non_holder(1, 0)), tree);
    }

    #[test]
    fn two_sybils_on_chain_lengthen_path() {
        let tree = chain_tree(&[false, false, false]);
        let shifted = inject_sybils(&tree, &Deviation::non_holder(1, 2));
        assert_eq!(shifted.len(), 6);
        // original level-2 node is id 2
        assert_eq!(shifted.depth(2), 4);
        assert_eq!(shifted.depth(3), 5);
    }

    #[test]
    fn holder_answer_moves_to_last_sybil() {
        let tree = chain_tree(&[true, false, false]);
        let shifted = inject_sybils(&tree, &Deviation::holder(1, 2));
        let marks: Vec<_> = (0..shifted.len())
            .filter(|&v| shifted.has_answer(v))
            .collect();
        assert_eq!(marks.len(), 1);
        assert!(shifted.is_sybil(marks[0]));
        assert_eq!(shifted.depth(marks[0]), 3);
    }

    #[test]
    fn inactive_monitor_earns_nothing() {
        let tree = chain_tree(&[false, true]);
        let table = dr_chain_scheme(2.0, 2, ChainVariant::Normalized).unwrap();
        // a 2-ary position that does not exist: level 3 on a depth-2 chain
        let out = run_trial(
            &tree,
            &table,
            SelectionRule::ShortestPath,
            Some(&Deviation::non_holder(3, 1)),
            &mut trial_rng(0, 0),
        );
        assert_eq!(out.monitor, MonitorStatus::NotActive);
        assert_eq!(out.monitored_utility, 0.0);
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut left = Moments::default();
        let mut right = Moments::default();
        xs[..37].iter().for_each(|&x| left.push(x));
        xs[37..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert!((left.mean - whole.mean).abs() < 1e-14);
        assert!((left.m2 - whole.m2).abs() < 1e-12);
    }
}
