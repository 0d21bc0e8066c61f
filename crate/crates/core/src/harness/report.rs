//! Report types and writers: `report.json`, per-round JSON lines, and
//! plot-ready CSVs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::metrics::{faa, AccuracyMatrix, RoundComm};

/// One communication round's metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub task: usize,
    pub round: usize,
    pub selected_clients: Vec<usize>,
    pub trained_clients: usize,
    /// Post-rebalance accuracy on the seen-classes test subset.
    pub global_accuracy: f64,
    /// Mean prediction-histogram entropy of this round's trained clients.
    pub mean_client_entropy: Option<f64>,
    pub entropy_pre_rebalance: f64,
    pub entropy_post_rebalance: f64,
    /// Mean pairwise prototype distance across this round's clients.
    pub feature_bias: Option<f64>,
    pub rebalance_applied: bool,
    pub comm: RoundComm,
}

/// Serializable result of a full run. A pure function of (config, seed):
/// two identical runs produce byte-identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub entropy_unit: String,
    pub entropy_eval: String,
    pub config: RunConfig,
    pub rounds: Vec<RoundRecord>,
    pub accuracy_matrix: AccuracyMatrix,
    pub faa: f64,
    pub comm_total_uplink_bytes: u64,
    pub comm_total_downlink_bytes: u64,
    pub comm_total_header_bytes: u64,
}

impl RunReport {
    /// Stored FAA must match the embedded matrix.
    pub fn check_self_consistency(&self) -> Result<()> {
        let recomputed = faa(&self.accuracy_matrix)?;
        if (recomputed - self.faa).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "report FAA {} disagrees with accuracy matrix ({recomputed})",
                self.faa
            )));
        }
        Ok(())
    }
}

/// Write `report.json` plus `rounds.jsonl` into `dir`.
pub fn write_run_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut file, report)?;
    file.write_all(b"\n")?;

    let mut lines = std::fs::File::create(dir.join("rounds.jsonl"))?;
    for round in &report.rounds {
        serde_json::to_writer(&mut lines, round)?;
        lines.write_all(b"\n")?;
    }
    Ok(())
}

/// Load and self-check a report written by [`write_run_report`].
pub fn load_run_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)?;
    let report: RunReport = serde_json::from_str(&text)?;
    report.check_self_consistency()?;
    Ok(report)
}

/// One (beta, entropy, accuracy) point of the federated-bias study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasStudyPoint {
    pub beta: f64,
    /// Mean client response entropy at the end of local training, before
    /// any synchronization.
    pub mean_client_entropy: f64,
    /// Final global accuracy after the federated rounds.
    pub global_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasStudyReport {
    pub version: String,
    pub seed: u64,
    pub entropy_unit: String,
    pub points: Vec<BiasStudyPoint>,
}

/// Plot-ready CSV: `entropy_vs_beta.csv`.
pub fn write_bias_study_csv(report: &BiasStudyReport, path: &Path) -> Result<()> {
    let mut out = String::from("beta,mean_client_entropy,global_accuracy\n");
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.beta, p.mean_client_entropy, p.global_accuracy
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One rebalancing variant's outcome in the component ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub faa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: String,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

/// Plot-ready CSV: `faa_table.csv`.
pub fn write_ablation_csv(report: &AblationReport, path: &Path) -> Result<()> {
    let mut out = String::from("variant,faa\n");
    for row in &report.rows {
        out.push_str(&format!("{},{}\n", row.variant, row.faa));
    }
    std::fs::write(path, out)?;
    Ok(())
}
