use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use drquery::audit::OptimalityReport;
use drquery::montecarlo::write_blocks_csv;
use drquery::report::{fmt_real, to_json_string, write_csv};
use drquery::{
    check_sybil_proofness, check_x_properties, cost_scaling_report, estimate, expected_cost,
    optimality_check, verify_lambda_properties, AuditInputs, AuditReport, BranchingProfile,
    EstimateConfig, OffspringDistribution, PropertyCheck, ScalingModel, SchemeKind, SelectionRule,
    Verdict,
};
use serde::Serialize;

use crate::config::{
    AuditConfig, BranchingConfig, BuildConfig, ScalingConfig, ScalingKind, SimulateConfig,
};
use crate::{CliError, Status};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Runtime)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::Runtime)
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn analyze_branching(cfg: &BranchingConfig, out: &Path) -> Result<Status, CliError> {
    let b = cfg.distribution.branching_factor();
    if cfg.landmarks && b <= 1.0 {
        return Err(CliError::Config(format!(
            "landmarks need branching factor b > 1, got {b}"
        )));
    }
    let profile = BranchingProfile::new(&cfg.distribution, cfg.n, cfg.h)?;

    let rows = (0..=cfg.h).map(|i| {
        let lambda = if i == 0 {
            String::new()
        } else {
            fmt_real(profile.lambda_at(i))
        };
        vec![i.to_string(), fmt_real(profile.phi[i]), lambda]
    });
    write_csv(
        create(&out.join("profile.csv"))?,
        &strings(&["i", "phi", "lambda"]),
        rows,
    )?;

    let mut report = verify_lambda_properties(&profile);
    if cfg.landmarks {
        let marks = profile.compute_landmarks()?;
        write_json(&out.join("landmarks.json"), &marks)?;
    } else {
        report.checks.truncate(1);
    }

    #[derive(Serialize)]
    struct Properties<'a> {
        branching_factor: f64,
        zeta: f64,
        all_pass: bool,
        checks: &'a [PropertyCheck],
    }
    let all_pass = report.all_pass();
    write_json(
        &out.join("properties.json"),
        &Properties {
            branching_factor: b,
            zeta: profile.zeta,
            all_pass,
            checks: &report.checks,
        },
    )?;
    for c in &report.checks {
        println!(
            "{:<18} {} (max violation {:.3e})",
            c.name,
            if c.pass { "ok" } else { "FAILED" },
            c.violation
        );
    }
    Ok(if all_pass { Status::Ok } else { Status::Failed })
}

pub fn build_scheme(cfg: &BuildConfig, out: &Path) -> Result<Status, CliError> {
    let table = cfg.scheme.build(cfg.h)?;
    write_json(&out.join("scheme.json"), &table)?;
    print!("h = {}, kind = {}", table.h(), table.kind().as_str());
    match table.tree_aux() {
        Some((x, a)) => println!(", x_1 = {}, a_1 = {}", x[0], a[0]),
        None => println!(", r(1,0) = {}", table.reward(1, 0)),
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct AuditOutput<'a> {
    #[serde(flatten)]
    report: &'a AuditReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimality: Option<OptimalityReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    x_properties: Vec<PropertyCheck>,
}

pub fn audit(cfg: &AuditConfig, out: &Path) -> Result<Status, CliError> {
    let table = cfg.scheme.build(cfg.h)?;
    let n = cfg.scheme.need_n()?;
    let (mut inputs, profile) = if table.kind() == SchemeKind::TreeDr {
        if cfg.scheme.distribution.is_none() {
            return Err(CliError::Config(
                "auditing tree_dr needs the scheme's distribution and n".into(),
            ));
        }
        let profile = cfg.scheme.profile(cfg.h)?;
        (AuditInputs::tree(&profile, cfg.h), Some(profile))
    } else {
        let profile = cfg
            .scheme
            .kind
            .is_chain_dr()
            .then(|| BranchingProfile::new(&OffspringDistribution::chain(), n, cfg.h))
            .transpose()?;
        (AuditInputs::chain(n), profile)
    };
    inputs.mc_trials = cfg.trials;
    inputs.mc_seed = cfg.master_seed;
    let report = check_sybil_proofness(&table, &inputs, cfg.mode, cfg.tolerance)?;

    let optimality = if cfg.optimality {
        Some(optimality_check(n, cfg.h, 1e-12)?)
    } else {
        None
    };
    let x_properties = match &profile {
        Some(p) if table.kind() != SchemeKind::TreeDr || p.landmarks.is_some() => {
            check_x_properties(&table, p)?
        }
        _ => Vec::new(),
    };

    write_json(
        &out.join("audit.json"),
        &AuditOutput {
            report: &report,
            optimality: optimality.clone(),
            x_properties,
        },
    )?;
    report.write_witness_csv(create(&out.join("witnesses.csv"))?)?;

    println!(
        "{}: {:?} over {} comparisons, min margin {:.3e}, {} witnesses",
        table.kind().as_str(),
        report.verdict,
        report.comparisons,
        report.min_margin,
        report.witnesses.len()
    );
    for w in report.witnesses.iter().take(5) {
        println!(
            "  (i={}, k={}, holder={}) honest {} < deviant {}",
            w.i, w.k, w.holder, w.honest, w.deviant
        );
    }
    let optimal = optimality.map(|o| o.pass).unwrap_or(true);
    Ok(if report.verdict == Verdict::SybilProof && optimal {
        Status::Ok
    } else {
        Status::Failed
    })
}

#[derive(Serialize)]
struct Delta {
    quantity: String,
    empirical: f64,
    analytic: f64,
    sigma: f64,
    z: f64,
}

impl Delta {
    fn new(quantity: String, empirical: f64, analytic: f64, sigma: f64) -> Self {
        let diff = empirical - analytic;
        let z = if sigma > 0.0 {
            diff / sigma
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            quantity,
            empirical,
            analytic,
            sigma,
            z,
        }
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    scheme: SchemeKind,
    h: usize,
    rule: SelectionRule,
    #[serde(flatten)]
    estimate: &'a drquery::Estimate,
    analytic_cost: Option<f64>,
    deltas: Vec<Delta>,
    max_abs_z: f64,
    enforced: bool,
    pass: bool,
    notes: Vec<String>,
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<Status, CliError> {
    let table = cfg.scheme.build(cfg.h)?;
    let n = cfg.scheme.need_n()?;
    let dist = cfg.scheme.offspring();
    let mut config = EstimateConfig::new(dist.clone(), n, table.clone());
    config.rule = cfg.rule;
    config.deviation = cfg.deviation;
    config.trials = cfg.trials;
    config.master_seed = cfg.master_seed;
    if let Some(b) = cfg.block_size {
        config.block_size = b;
    }
    let est = estimate(&config)?;
    write_blocks_csv(create(&out.join("results.csv"))?, cfg.h, &est)?;

    let d = dist.max_children();
    let mut notes = Vec::new();
    let mut deltas = Vec::new();
    let mut analytic_cost = None;
    let deviating = cfg.deviation.map(|dv| dv.sybils > 0).unwrap_or(false);
    let comparable = cfg.rule == SelectionRule::ShortestPath || d == 1;
    if deviating {
        notes.push("sybil deviation active: analytic comparisons skipped".into());
    } else if !comparable {
        notes.push("random-walk selection on a tree: analytic comparisons skipped".into());
    } else {
        let profile = BranchingProfile::new(&dist, n, cfg.h)?;
        let lambda = profile.lambda_prefix(cfg.h);
        let cost = expected_cost(&table, lambda)?;
        analytic_cost = Some(cost);
        deltas.push(Delta::new(
            "mean_cost".into(),
            est.mean_cost,
            cost,
            est.cost_std_error,
        ));
        for i in 1..=cfg.h {
            let want = lambda[i - 1];
            deltas.push(Delta::new(
                format!("level_{i}"),
                est.level_histogram[i - 1],
                want,
                est.frequency_sigma(want),
            ));
        }
        // slots are exchangeable only when every node has 0 or d children
        let probs = dist.probabilities();
        let symmetric = probs[1..d].iter().all(|&c| c == 0.0);
        if symmetric {
            for i in 1..cfg.h {
                let want = lambda[i] / (d as f64).powi(i as i32);
                deltas.push(Delta::new(
                    format!("dr_{i}"),
                    est.dr_frequency[i - 1],
                    want,
                    est.frequency_sigma(want),
                ));
            }
        } else {
            notes.push("offspring law is not {0, d}-supported: DR frequencies not compared".into());
        }
    }
    let max_abs_z = deltas.iter().map(|d| d.z.abs()).fold(0.0, f64::max);
    let enforced = est.trials > 1;
    if !enforced {
        notes.push("single trial: confidence checks suppressed".into());
    }
    let pass = !enforced || max_abs_z <= 3.0;
    write_json(
        &out.join("summary.json"),
        &SimulationSummary {
            scheme: table.kind(),
            h: cfg.h,
            rule: cfg.rule,
            estimate: &est,
            analytic_cost,
            deltas,
            max_abs_z,
            enforced,
            pass,
            notes,
        },
    )?;
    println!(
        "{} trials, mean cost {:.6} (99% CI {:.6}..{:.6}), max |z| {:.2}",
        est.trials, est.mean_cost, est.cost_ci.0, est.cost_ci.1, max_abs_z
    );
    Ok(if pass { Status::Ok } else { Status::Failed })
}

pub fn cost_scaling(cfg: &ScalingConfig, out: &Path) -> Result<Status, CliError> {
    let model = match cfg.model {
        ScalingKind::Chain => ScalingModel::Chain {
            n: cfg.n,
            variant: cfg.variant,
        },
        ScalingKind::Tree => ScalingModel::Tree {
            dist: cfg
                .distribution
                .clone()
                .ok_or_else(|| CliError::Config("tree cost scaling needs distribution".into()))?,
            n: cfg.n,
        },
    };
    let rows = cost_scaling_report(&model, &cfg.h_list)?;
    let header = strings(&[
        "h",
        "cost",
        "answer_within",
        "cost_over_h2",
        "cost_over_nh2p2",
        "bracket_low",
        "bracket_high",
        "inside_bracket",
    ]);
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    let csv_rows = rows.iter().map(|r| {
        vec![
            r.h.to_string(),
            fmt_real(r.cost),
            fmt_real(r.answer_within),
            fmt_real(r.cost_over_h2),
            fmt_real(r.cost_over_nh2p2),
            opt(r.bracket.map(|b| b.0)),
            opt(r.bracket.map(|b| b.1)),
            r.inside_bracket.map(|b| b.to_string()).unwrap_or_default(),
        ]
    });
    write_csv(create(&out.join("cost_scaling.csv"))?, &header, csv_rows)?;
    write_json(&out.join("cost_scaling.json"), &rows)?;
    for r in &rows {
        println!(
            "h = {:>4}  cost = {:.6}  cost/h^2 = {:.6}",
            r.h, r.cost, r.cost_over_h2
        );
    }
    let inside = rows.iter().all(|r| r.inside_bracket != Some(false));
    Ok(if inside { Status::Ok } else { Status::Failed })
}
