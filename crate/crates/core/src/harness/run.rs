//! The task/round orchestration loop.
//!
//! Per round: distribute the global parameters, train participating clients
//! in parallel, collect parameters and generative prototypes, aggregate,
//! rebuild the global mixture, sample synthetic features, and rebalance the
//! head. The accuracy matrix is filled at task boundaries.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::client::{
    apply_adapter, compute_prototypes, evaluate_accuracy, local_train, response_histogram,
    ClientParams, GenerativePrototype, TrainOptions,
};
use crate::datasets::{
    dirichlet_partition, read_features, schedule_tasks, synth_generate_split, FeatureDataset,
    PartitionSpec, SyntheticSpec, TaskSchedule,
};
use crate::error::{Error, Result};
use crate::harness::config::{DataSource, RunConfig};
use crate::harness::report::{RoundRecord, RunReport};
use crate::metrics::{bias_entropy, comm_cost, faa, feature_bias, AccuracyMatrix, CommLedger, RoundComm};
use crate::numerics::RngStream;
use crate::server::{
    aggregate, build_mixture, rebalance, sample_synthetic_mode, HierarchicalMixture,
    RebalanceConfig,
};

// Top-level stream ids under the master seed. Everything random in a run
// derives from one of these, so replaying (config, seed) replays the run.
const STREAM_PARTICIPATION: u64 = 3;
const STREAM_CLIENT_TRAIN: u64 = 4;
const STREAM_REBALANCE: u64 = 5;

/// Stream driving client `client` during `(task, round)` local training.
pub fn client_train_stream(seed: u64, task: usize, round: usize, client: usize) -> RngStream {
    RngStream::new(seed, STREAM_CLIENT_TRAIN)
        .derive(task as u64)
        .derive(round as u64)
        .derive(client as u64)
}

/// Stream selecting the round's participating clients.
pub fn participation_stream(seed: u64, task: usize, round: usize) -> RngStream {
    RngStream::new(seed, STREAM_PARTICIPATION)
        .derive(task as u64)
        .derive(round as u64)
}

/// Stream driving synthetic sampling and the rebalance shuffles.
pub fn rebalance_stream(seed: u64, task: usize, round: usize) -> RngStream {
    RngStream::new(seed, STREAM_REBALANCE)
        .derive(task as u64)
        .derive(round as u64)
}

/// Full result of a run: the serializable report plus in-memory artifacts
/// the report cannot carry.
pub struct RunOutput {
    pub report: RunReport,
    pub final_params: ClientParams,
    pub final_mixture: Option<HierarchicalMixture>,
}

/// Run `f(0..n)` on a bounded worker pool, results in index order.
///
/// Each job is independent and deterministic, so the outcome is identical
/// for any worker count.
fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                *slots[i].lock().unwrap() = Some(f(i));
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

struct LoadedData {
    train: FeatureDataset,
    test: FeatureDataset,
}

fn load_data(config: &RunConfig) -> Result<LoadedData> {
    match config.source {
        DataSource::Synthetic => {
            let spec = SyntheticSpec {
                num_classes: config.classes,
                dim: config.dim,
                mean_scale: config.mean_scale,
                cov_scale: config.feature_noise,
                samples_per_class: config.samples_per_class,
                seed: config.seed,
            };
            Ok(LoadedData {
                train: synth_generate_split(&spec, 0)?,
                test: synth_generate_split(&spec, 1)?,
            })
        }
        DataSource::File => {
            let train = read_features(std::path::Path::new(
                config.train_file.as_deref().expect("validated"),
            ))?;
            let test = read_features(std::path::Path::new(
                config.test_file.as_deref().expect("validated"),
            ))?;
            for (ds, name) in [(&train, "train"), (&test, "test")] {
                if ds.dim() != config.dim || ds.num_classes() != config.classes {
                    return Err(Error::Config(format!(
                        "{name} file is {}d/{} classes but config says {}d/{}",
                        ds.dim(),
                        ds.num_classes(),
                        config.dim,
                        config.classes
                    )));
                }
            }
            Ok(LoadedData { train, test })
        }
    }
}

/// Execute the configured protocol end to end.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let data = load_data(config)?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Config("train and test splits must be nonempty".into()));
    }
    let schedule = schedule_tasks(config.classes, config.tasks, config.seed)?;

    let train_options = TrainOptions {
        epochs: config.local_epochs,
        batch: config.local_batch,
        optimizer: config.local_optimizer_settings(),
    };
    let rebalance_config = RebalanceConfig {
        epochs: config.rebalance_epochs,
        batch: config.rebalance_batch,
        lr: config.rebalance_lr,
        momentum: config.rebalance_momentum,
        cosine: config.rebalance_cosine,
    };
    let partition_spec = PartitionSpec {
        clients: config.clients,
        beta: config.beta,
        seed: config.seed,
        min_samples_per_client: config.min_samples_per_client,
        max_retries: config.partition_retries,
    };

    let mut global = ClientParams::new(config.classes, config.dim, config.adapter);
    // Server-side prototype store, (class, client) grid. Current-task
    // prototypes are refreshed every round; old-task entries persist.
    let mut prototype_grid: Vec<Option<GenerativePrototype>> =
        vec![None; config.classes * config.clients];
    let mut accuracy = AccuracyMatrix::new(config.tasks);
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut ledger = CommLedger::default();
    let mut final_mixture = None;

    let participants_per_round =
        ((config.participation_rate * config.clients as f64).ceil() as usize)
            .clamp(1, config.clients);

    for task in 0..config.tasks {
        let task_classes = schedule.task_classes(task).to_vec();
        let shards = dirichlet_partition(&data.train, &task_classes, &partition_spec, task)?;
        let seen_classes = schedule.classes_up_to(task);
        let seen_test = data.test.filter_classes(&seen_classes);
        // Masked local CE restricts the softmax to the current task's classes.
        let mask: Option<&[u16]> = config.masked_local_loss.then_some(task_classes.as_slice());

        for round in 0..config.rounds_per_task {
            let selected = participation_stream(config.seed, task, round)
                .choose_without_replacement(config.clients, participants_per_round);

            // Client side, fan-out. Each result is (params, prototypes) or
            // None for an empty shard.
            type ClientResult = Result<Option<(ClientParams, Vec<GenerativePrototype>)>>;
            let results: Vec<ClientResult> = parallel_map(selected.len(), config.workers, |slot| {
                let m = selected[slot];
                let mut rng = client_train_stream(config.seed, task, round, m);
                match local_train(&global, &shards[m], &train_options, mask, &mut rng) {
                    Err(Error::EmptyShard) => Ok(None),
                    Err(e) => Err(e),
                    Ok(trained) => {
                        let adapted = apply_adapter(&trained, &shards[m])?;
                        let protos = compute_prototypes(&adapted, m);
                        Ok(Some((trained, protos)))
                    }
                }
            });

            let mut trained: Vec<(usize, ClientParams, Vec<GenerativePrototype>)> = Vec::new();
            for (slot, result) in results.into_iter().enumerate() {
                if let Some((params, protos)) = result.map_err(|e| annotate(e, task, round))? {
                    trained.push((selected[slot], params, protos));
                }
            }

            // Server side: refresh the prototype grid, aggregate, rebalance.
            let mut round_prototype_count = 0u64;
            for (m, _, protos) in &trained {
                round_prototype_count += protos.len() as u64;
                for p in protos {
                    prototype_grid[p.class_id as usize * config.clients + m] = Some(p.clone());
                }
            }
            if !trained.is_empty() {
                let params: Vec<ClientParams> = trained.iter().map(|(_, p, _)| p.clone()).collect();
                let sizes: Vec<usize> = trained.iter().map(|(m, _, _)| shards[*m].len()).collect();
                global = aggregate(&params, &sizes).map_err(|e| annotate(e, task, round))?;
            }

            let entropy_pre = global_entropy(&global, &data.test)?;
            let mean_client_entropy = if trained.is_empty() {
                None
            } else {
                let mut acc = 0.0;
                for (_, params, _) in &trained {
                    acc += global_entropy(params, &data.test)?;
                }
                Some(acc / trained.len() as f64)
            };
            let round_feature_bias = {
                let per_client: Vec<Vec<GenerativePrototype>> =
                    trained.iter().map(|(_, _, p)| p.clone()).collect();
                match feature_bias(&per_client) {
                    Ok(v) => Some(v),
                    Err(Error::NoSharedClass) => None,
                    Err(e) => return Err(annotate(e, task, round)),
                }
            };

            let mut rebalance_applied = false;
            if let Some(filter) = config.rebalance.class_filter() {
                let stored: Vec<GenerativePrototype> =
                    prototype_grid.iter().flatten().cloned().collect();
                if !stored.is_empty() {
                    let mixture = build_mixture(&stored, config.classes, config.clients)?;
                    let mut rng = rebalance_stream(config.seed, task, round);
                    let synth = sample_synthetic_mode(
                        &mixture,
                        config.rebalance_per_class,
                        config.rebalance_cov_scale,
                        config.rebalance_sample_mode,
                        &mut rng,
                    )?;
                    let outcome = rebalance(
                        &global.head,
                        &synth,
                        &rebalance_config,
                        filter,
                        &task_classes,
                        &mut rng,
                    )
                    .map_err(|e| annotate(e, task, round))?;
                    global.head = outcome.head;
                    rebalance_applied = outcome.applied;
                    final_mixture = Some(mixture);
                }
            }
            if !global.is_finite() {
                return Err(annotate(
                    Error::Numerical("global parameters became non-finite".into()),
                    task,
                    round,
                ));
            }

            let entropy_post = global_entropy(&global, &data.test)?;
            let global_accuracy = evaluate_accuracy(&global, &seen_test)?;

            let comm = RoundComm {
                task,
                round,
                participants: trained.len() as u64,
                uplink_bytes: trained
                    .iter()
                    .map(|(_, p, protos)| {
                        comm_cost(
                            p.adapter_floats() as u64,
                            p.head.num_floats() as u64,
                            protos.len() as u64,
                            config.dim as u64,
                        )
                        .uplink_bytes()
                    })
                    .sum(),
                downlink_bytes: trained
                    .iter()
                    .map(|(_, p, _)| {
                        comm_cost(p.adapter_floats() as u64, p.head.num_floats() as u64, 0, config.dim as u64)
                            .downlink_bytes()
                    })
                    .sum(),
                prototype_count: round_prototype_count,
            };
            ledger.rounds.push(comm.clone());

            rounds.push(RoundRecord {
                task,
                round,
                selected_clients: selected.clone(),
                trained_clients: trained.len(),
                global_accuracy,
                mean_client_entropy,
                entropy_pre_rebalance: entropy_pre,
                entropy_post_rebalance: entropy_post,
                feature_bias: round_feature_bias,
                rebalance_applied,
                comm,
            });
        }

        // Task boundary: accuracy on every observed task's test subset.
        let mut column = Vec::with_capacity(task + 1);
        for observed in 0..=task {
            let subset = data.test.filter_classes(schedule.task_classes(observed));
            column.push(evaluate_accuracy(&global, &subset)?);
        }
        accuracy.push_column(column)?;
    }

    let faa_value = faa(&accuracy)?;
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        entropy_unit: "nats".to_string(),
        entropy_eval: "global_test_split".to_string(),
        config: config.clone(),
        rounds,
        accuracy_matrix: accuracy,
        faa: faa_value,
        comm_total_uplink_bytes: ledger.total_uplink_bytes(),
        comm_total_downlink_bytes: ledger.total_downlink_bytes(),
        comm_total_header_bytes: ledger.total_header_bytes(),
    };
    Ok(RunOutput {
        report,
        final_params: global,
        final_mixture,
    })
}

fn global_entropy(params: &ClientParams, test: &FeatureDataset) -> Result<f64> {
    bias_entropy(&response_histogram(params, test)?)
}

fn annotate(e: Error, task: usize, round: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("task {task} round {round}: {msg}")),
        other => other,
    }
}

/// Expose the task schedule a run will use (handy for tests and inspection).
pub fn plan_schedule(config: &RunConfig) -> Result<TaskSchedule> {
    schedule_tasks(config.classes, config.tasks, config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RebalanceMode;

    fn tiny_config(seed: u64) -> RunConfig {
        let mut cfg = RunConfig::synthetic(4, 8, 2, 3, 0.5, seed);
        cfg.samples_per_class = 30;
        cfg.rounds_per_task = 2;
        cfg.local_epochs = 2;
        cfg.rebalance_per_class = 32;
        cfg
    }

    #[test]
    fn run_produces_complete_report() {
        let out = run(&tiny_config(11)).unwrap();
        let report = &out.report;
        assert_eq!(report.rounds.len(), 4);
        assert_eq!(report.accuracy_matrix.completed_steps(), 2);
        assert!(report.faa > 0.0 && report.faa <= 1.0);
        assert!(report.rounds.iter().all(|r| r.trained_clients == 3));
        assert!(out.final_mixture.is_some());
    }

    #[test]
    fn identical_config_and_seed_is_bit_identical() {
        let a = run(&tiny_config(42)).unwrap();
        let b = run(&tiny_config(42)).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = tiny_config(7);
        cfg.workers = 1;
        let a = run(&cfg).unwrap();
        cfg.workers = 8;
        let b = run(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn participation_selects_ceil_of_rate() {
        let mut cfg = tiny_config(3);
        cfg.clients = 4;
        cfg.participation_rate = 0.5;
        let out = run(&cfg).unwrap();
        for r in &out.report.rounds {
            assert_eq!(r.selected_clients.len(), 2);
        }
    }

    #[test]
    fn no_rebalance_mode_never_applies() {
        let mut cfg = tiny_config(5);
        cfg.rebalance = RebalanceMode::None;
        let out = run(&cfg).unwrap();
        assert!(out.report.rounds.iter().all(|r| !r.rebalance_applied));
        assert!(out.final_mixture.is_none());
    }

    #[test]
    fn comm_accounting_matches_closed_form() {
        let cfg = tiny_config(9);
        let out = run(&cfg).unwrap();
        // All 3 clients train every round; adapter disabled.
        let head_floats = (4 * 8 + 4) as u64;
        for r in &out.report.rounds {
            let protos = r.comm.prototype_count;
            assert_eq!(
                r.comm.uplink_bytes,
                4 * (3 * head_floats + protos * (2 * 8 + 1))
            );
            assert_eq!(r.comm.downlink_bytes, 4 * 3 * head_floats);
        }
    }

    #[test]
    fn parallel_map_is_order_preserving() {
        let out = parallel_map(100, 8, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
