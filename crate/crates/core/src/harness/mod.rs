//! Config-driven orchestration of the full client/server protocol, the
//! bias-study and ablation scripts, and report emission.

mod config;
mod report;
mod run;
mod studies;

pub use config::{DataSource, OptimizerKind, RebalanceMode, RunConfig};
pub use report::{
    load_run_report, write_ablation_csv, write_bias_study_csv, write_run_report, AblationReport,
    AblationRow, BiasStudyPoint, BiasStudyReport, RoundRecord, RunReport,
};
pub use run::{
    client_train_stream, participation_stream, plan_schedule, rebalance_stream, run, RunOutput,
};
pub use studies::{run_ablation, run_ablation_reports, run_bias_study};
