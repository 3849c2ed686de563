//! JSON experiment configs, one record per subcommand.

use std::path::Path;

use drquery::{
    dr_chain_scheme, dr_tree_scheme, dr_tree_scheme_for, split_counterexample_scheme, AuditMode,
    BranchingProfile, ChainVariant, Deviation, OffspringDistribution, RewardTable, SchemeKind,
    SelectionRule,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingConfig {
    pub distribution: OffspringDistribution,
    pub n: f64,
    pub h: usize,
    #[serde(default = "yes")]
    pub landmarks: bool,
}

/// How to build a reward table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub n: Option<f64>,
    pub distribution: Option<OffspringDistribution>,
    /// Explicit `λ_1..λ_h` for a tree table.
    pub lambda: Option<Vec<f64>>,
    pub base: Option<f64>,
    /// `(i, s, r)` triples for a custom table.
    pub entries: Option<Vec<(usize, usize, f64)>>,
}

impl SchemeConfig {
    pub fn build(&self, h: usize) -> Result<RewardTable, CliError> {
        let table = match self.kind {
            SchemeKind::ChainDrVerbatim => {
                dr_chain_scheme(self.need_n()?, h, ChainVariant::Verbatim)
            }
            SchemeKind::ChainDrNormalized => {
                dr_chain_scheme(self.need_n()?, h, ChainVariant::Normalized)
            }
            SchemeKind::TreeDr => match (&self.lambda, &self.distribution) {
                (Some(lambda), _) => dr_tree_scheme(lambda, h),
                (None, Some(_)) => dr_tree_scheme_for(&self.profile(h)?, h),
                (None, None) => {
                    return Err(CliError::Config(
                        "tree_dr needs either lambda or distribution and n".into(),
                    ))
                }
            },
            SchemeKind::SplitCounterexample => {
                let base = self
                    .base
                    .ok_or_else(|| CliError::Config("split_counterexample needs base".into()))?;
                split_counterexample_scheme(h, base)
            }
            SchemeKind::Custom => {
                let entries = self
                    .entries
                    .as_ref()
                    .ok_or_else(|| CliError::Config("custom scheme needs entries".into()))?;
                RewardTable::from_entries(h, entries)
            }
        };
        Ok(table?)
    }

    pub fn need_n(&self) -> Result<f64, CliError> {
        self.n
            .ok_or_else(|| CliError::Config(format!("scheme {} needs n", self.kind.as_str())))
    }

    /// The offspring law the scheme lives on; chains when none is given.
    pub fn offspring(&self) -> OffspringDistribution {
        self.distribution
            .clone()
            .unwrap_or_else(OffspringDistribution::chain)
    }

    pub fn profile(&self, h: usize) -> Result<BranchingProfile, CliError> {
        Ok(BranchingProfile::new(&self.offspring(), self.need_n()?, h)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub scheme: SchemeConfig,
    pub h: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub scheme: SchemeConfig,
    pub h: usize,
    #[serde(default)]
    pub mode: AuditMode,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_audit_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Also compare a verbatim chain table with the optimality lower bounds.
    #[serde(default)]
    pub optimality: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scheme: SchemeConfig,
    pub h: usize,
    #[serde(default)]
    pub rule: SelectionRule,
    pub deviation: Option<Deviation>,
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    pub block_size: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    Chain,
    Tree,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub model: ScalingKind,
    pub n: f64,
    #[serde(default)]
    pub variant: ChainVariant,
    pub distribution: Option<OffspringDistribution>,
    pub h_list: Vec<usize>,
}

fn yes() -> bool {
    true
}

fn default_tolerance() -> f64 {
    drquery::audit::DEFAULT_TOLERANCE
}

fn default_audit_trials() -> u64 {
    200_000
}
