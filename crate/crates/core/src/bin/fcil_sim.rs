//! `fcil-sim`: command-line front end for the simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fcil_core::datasets::{synth_generate_split, write_features, SyntheticSpec};
use fcil_core::error::{Error, Result};
use fcil_core::harness::{
    load_run_report, run, run_ablation, run_bias_study, write_ablation_csv, write_bias_study_csv,
    write_run_report, RunConfig,
};
use fcil_core::server::write_mixture_snapshot;

#[derive(Parser)]
#[command(name = "fcil-sim", version, about = "Federated class-incremental learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Path to a flat JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the full protocol and write report.json + rounds.jsonl.
    Run(CommonRunArgs),
    /// Per-beta local-bias measurement and final accuracy.
    BiasStudy {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Comma-separated beta values, e.g. 0.5,0.1,0.05.
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
    },
    /// The four-variant rebalancing grid with shared seeds.
    Ablation(CommonRunArgs),
    /// Generate a synthetic feature file from a spec JSON.
    GenFeatures {
        /// Path to a SyntheticSpec JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Output feature file.
        #[arg(long)]
        out: PathBuf,
        /// Sample-stream split id (0 = train draw).
        #[arg(long, default_value_t = 0)]
        split: u64,
    },
    /// Print FAA, entropy traces, and communication totals of a report.
    Inspect {
        #[arg(long)]
        report: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn cmd_run(args: &CommonRunArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let out = run(&config)?;
    write_run_report(&out.report, &args.out)?;
    if let Some(mixture) = &out.final_mixture {
        write_mixture_snapshot(mixture, &args.out.join("mixture_snapshot.json"))?;
    }
    println!(
        "run complete: {} tasks, {} rounds, FAA {:.4}",
        config.tasks,
        out.report.rounds.len(),
        out.report.faa
    );
    println!("report written to {}", args.out.join("report.json").display());
    Ok(())
}

fn cmd_bias_study(common: &CommonRunArgs, betas: &[f64]) -> Result<()> {
    let config = load_config(&common.config, common.seed)?;
    let report = run_bias_study(&config, betas)?;
    std::fs::create_dir_all(&common.out)?;
    let json_path = common.out.join("bias_study.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    write_bias_study_csv(&report, &common.out.join("entropy_vs_beta.csv"))?;
    for p in &report.points {
        println!(
            "beta {:>8}: mean client entropy {:.4} nats, global accuracy {:.4}",
            p.beta, p.mean_client_entropy, p.global_accuracy
        );
    }
    println!("study written to {}", json_path.display());
    Ok(())
}

fn cmd_ablation(args: &CommonRunArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let report = run_ablation(&config)?;
    std::fs::create_dir_all(&args.out)?;
    let json_path = args.out.join("ablation.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    write_ablation_csv(&report, &args.out.join("faa_table.csv"))?;
    for row in &report.rows {
        println!("{:>8}: FAA {:.4}", row.variant, row.faa);
    }
    println!("ablation written to {}", json_path.display());
    Ok(())
}

fn cmd_gen_features(spec_path: &Path, out_path: &Path, split: u64) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let ds = synth_generate_split(&spec, split)?;
    write_features(&ds, out_path)?;
    println!(
        "wrote {} samples ({} classes, {} dims) to {}",
        ds.len(),
        ds.num_classes(),
        ds.dim(),
        out_path.display()
    );
    Ok(())
}

fn cmd_inspect(report_path: &Path) -> Result<()> {
    let report = load_run_report(report_path)?;
    println!("seed {:>20}", report.seed);
    println!("tasks {:>19}", report.config.tasks);
    println!("rounds {:>18}", report.rounds.len());
    println!("FAA {:>21.4}", report.faa);
    println!("entropy ({}) traces per round (pre -> post rebalance):", report.entropy_unit);
    for r in &report.rounds {
        println!(
            "  task {} round {}: {:.4} -> {:.4}  acc {:.4}",
            r.task, r.round, r.entropy_pre_rebalance, r.entropy_post_rebalance, r.global_accuracy
        );
    }
    println!(
        "comm totals: uplink {} B, downlink {} B (+{} B headers)",
        report.comm_total_uplink_bytes,
        report.comm_total_downlink_bytes,
        report.comm_total_header_bytes
    );
    println!("self-consistency: FAA matches accuracy matrix");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::BiasStudy { common, betas } => cmd_bias_study(common, betas),
        Command::Ablation(args) => cmd_ablation(args),
        Command::GenFeatures { spec, out, split } => cmd_gen_features(spec, out, *split),
        Command::Inspect { report } => cmd_inspect(report),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
