//! Reproduction scripts: the federated-bias study and the component
//! ablation grid.

use crate::error::{Error, Result};
use crate::harness::config::{RebalanceMode, RunConfig};
use crate::harness::report::{
    AblationReport, AblationRow, BiasStudyPoint, BiasStudyReport, RunReport,
};
use crate::harness::run::run;

/// For each beta: train all clients locally on a single joint task and
/// measure their response entropy before any synchronization, then finish
/// the federated rounds (plain averaging, no rebalancing) and record the
/// final global accuracy.
pub fn run_bias_study(config: &RunConfig, betas: &[f64]) -> Result<BiasStudyReport> {
    if betas.is_empty() {
        return Err(Error::Config("bias study needs at least one beta".into()));
    }
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        if !(beta > 0.0) {
            return Err(Error::Config(format!("invalid beta {beta}")));
        }
        let mut cfg = config.clone();
        cfg.tasks = 1;
        cfg.beta = beta;
        cfg.rebalance = RebalanceMode::None;
        let out = run(&cfg)?;
        let first_round = out
            .report
            .rounds
            .first()
            .ok_or_else(|| Error::Config("run produced no rounds".into()))?;
        let mean_client_entropy = first_round
            .mean_client_entropy
            .ok_or_else(|| Error::InvalidInput("no client trained in round 0".into()))?;
        points.push(BiasStudyPoint {
            beta,
            mean_client_entropy,
            global_accuracy: out.report.faa,
        });
    }
    Ok(BiasStudyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        entropy_unit: "nats".to_string(),
        points,
    })
}

/// The four-variant rebalancing grid, all rows sharing the config's seed.
pub fn run_ablation(config: &RunConfig) -> Result<AblationReport> {
    config.validate()?;
    let variants = [
        ("no_cr", RebalanceMode::None),
        ("cr_old", RebalanceMode::OldOnly),
        ("cr_cur", RebalanceMode::CurrentOnly),
        ("cr_both", RebalanceMode::Both),
    ];
    let mut rows = Vec::with_capacity(variants.len());
    for (label, mode) in variants {
        let mut cfg = config.clone();
        cfg.rebalance = mode;
        let out = run(&cfg)?;
        rows.push(AblationRow {
            variant: label.to_string(),
            faa: out.report.faa,
        });
    }
    Ok(AblationReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        rows,
    })
}

/// Full per-variant reports for callers that need more than the FAA table.
pub fn run_ablation_reports(config: &RunConfig) -> Result<Vec<(String, RunReport)>> {
    config.validate()?;
    let variants = [
        ("no_cr", RebalanceMode::None),
        ("cr_old", RebalanceMode::OldOnly),
        ("cr_cur", RebalanceMode::CurrentOnly),
        ("cr_both", RebalanceMode::Both),
    ];
    let mut out = Vec::new();
    for (label, mode) in variants {
        let mut cfg = config.clone();
        cfg.rebalance = mode;
        out.push((label.to_string(), run(&cfg)?.report));
    }
    Ok(out)
}
