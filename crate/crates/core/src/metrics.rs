//! Quantitative diagnostics: final average accuracy, prediction-histogram
//! entropy, feature-space bias, communication accounting, and discrete JSD.
//!
//! Entropies are reported in nats.

use crate::client::GenerativePrototype;
use crate::error::{Error, Result};

/// Fixed per-message framing overhead assumed by the accounting (magic,
/// version, counts). Tracked separately from float payload bytes.
pub const MESSAGE_HEADER_BYTES: u64 = 16;

/// Wire size of one f32 parameter.
pub const BYTES_PER_FLOAT: u64 = 4;

/// Lower-triangular accuracy table: entry (i, j) is accuracy on task i after
/// incremental step j, for i <= j.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccuracyMatrix {
    num_tasks: usize,
    /// Column j holds accuracies on tasks 0..=j after step j.
    columns: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(num_tasks: usize) -> Self {
        AccuracyMatrix {
            num_tasks,
            columns: Vec::with_capacity(num_tasks),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn completed_steps(&self) -> usize {
        self.columns.len()
    }

    /// Record the accuracies observed after the next incremental step.
    pub fn push_column(&mut self, accuracies: Vec<f64>) -> Result<()> {
        let step = self.columns.len();
        if step >= self.num_tasks {
            return Err(Error::InvalidInput("accuracy matrix already complete".into()));
        }
        if accuracies.len() != step + 1 {
            return Err(Error::ShapeMismatch {
                op: "AccuracyMatrix::push_column",
                expected: format!("{} entries", step + 1),
                got: format!("{}", accuracies.len()),
            });
        }
        if accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidInput("accuracy outside [0, 1]".into()));
        }
        self.columns.push(accuracies);
        Ok(())
    }

    pub fn get(&self, task: usize, step: usize) -> Option<f64> {
        self.columns.get(step).and_then(|col| col.get(task)).copied()
    }

    pub fn final_column(&self) -> Option<&[f64]> {
        if self.columns.len() == self.num_tasks {
            self.columns.last().map(|c| c.as_slice())
        } else {
            None
        }
    }
}

/// Final Average Accuracy: mean of the final column.
pub fn faa(matrix: &AccuracyMatrix) -> Result<f64> {
    let last = matrix
        .final_column()
        .ok_or_else(|| Error::InvalidInput("faa: final column incomplete".into()))?;
    Ok(last.iter().sum::<f64>() / last.len() as f64)
}

/// Shannon entropy of a normalized histogram, in nats, with 0 ln 0 = 0.
pub fn bias_entropy(hist: &[f64]) -> Result<f64> {
    if hist.is_empty() {
        return Err(Error::InvalidInput("bias_entropy: empty histogram".into()));
    }
    let sum: f64 = hist.iter().sum();
    if hist.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "bias_entropy: histogram not normalized (sum {sum})"
        )));
    }
    Ok(hist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// Mean over shared classes of the mean pairwise Euclidean distance between
/// clients' prototype means. Classes held by fewer than two clients are
/// skipped; no shared class at all is an undefined-metric signal.
pub fn feature_bias(client_prototypes: &[Vec<GenerativePrototype>]) -> Result<f64> {
    let mut classes: Vec<u16> = client_prototypes
        .iter()
        .flat_map(|ps| ps.iter().map(|p| p.class_id))
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let mut class_distances = Vec::new();
    for c in classes {
        let means: Vec<&[f64]> = client_prototypes
            .iter()
            .filter_map(|ps| ps.iter().find(|p| p.class_id == c).map(|p| p.mean.as_slice()))
            .collect();
        if means.len() < 2 {
            continue;
        }
        let mut dist_sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                let d2: f64 = means[i]
                    .iter()
                    .zip(means[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                dist_sum += d2.sqrt();
                pairs += 1;
            }
        }
        class_distances.push(dist_sum / pairs as f64);
    }
    if class_distances.is_empty() {
        return Err(Error::NoSharedClass);
    }
    Ok(class_distances.iter().sum::<f64>() / class_distances.len() as f64)
}

/// One client's exchange with the server for one round.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CommRecord {
    pub adapter_floats: u64,
    pub head_floats: u64,
    /// Uplink-only prototype payload: 2d+1 floats per prototype.
    pub prototype_floats: u64,
}

impl CommRecord {
    pub fn uplink_bytes(&self) -> u64 {
        BYTES_PER_FLOAT * (self.adapter_floats + self.head_floats + self.prototype_floats)
    }

    pub fn downlink_bytes(&self) -> u64 {
        BYTES_PER_FLOAT * (self.adapter_floats + self.head_floats)
    }

    pub fn uplink_bytes_with_header(&self) -> u64 {
        self.uplink_bytes() + MESSAGE_HEADER_BYTES
    }

    pub fn downlink_bytes_with_header(&self) -> u64 {
        self.downlink_bytes() + MESSAGE_HEADER_BYTES
    }
}

/// Closed-form per-client communication count.
pub fn comm_cost(adapter_floats: u64, head_floats: u64, prototypes: u64, dim: u64) -> CommRecord {
    CommRecord {
        adapter_floats,
        head_floats,
        prototype_floats: prototypes * (2 * dim + 1),
    }
}

/// Per-round communication totals for a whole run.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CommLedger {
    pub rounds: Vec<RoundComm>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoundComm {
    pub task: usize,
    pub round: usize,
    pub participants: u64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub prototype_count: u64,
}

impl CommLedger {
    pub fn total_uplink_bytes(&self) -> u64 {
        self.rounds.iter().map(|r| r.uplink_bytes).sum()
    }

    pub fn total_downlink_bytes(&self) -> u64 {
        self.rounds.iter().map(|r| r.downlink_bytes).sum()
    }

    pub fn total_header_bytes(&self) -> u64 {
        self.rounds
            .iter()
            .map(|r| 2 * r.participants * MESSAGE_HEADER_BYTES)
            .sum()
    }
}

/// Weighted Jensen-Shannon divergence for finite categorical distributions:
/// sum_m pi_m KL(Q_m || G) with G = sum_m pi_m Q_m.
pub fn discrete_jsd(dists: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    if dists.is_empty() || dists.len() != weights.len() {
        return Err(Error::InvalidInput("discrete_jsd: need one weight per distribution".into()));
    }
    let support = dists[0].len();
    for d in dists {
        if d.len() != support {
            return Err(Error::InvalidInput("discrete_jsd: support mismatch".into()));
        }
        let sum: f64 = d.iter().sum();
        if d.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("discrete_jsd: distribution not normalized".into()));
        }
    }
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("discrete_jsd: weights not normalized".into()));
    }

    let mut mixture = vec![0.0; support];
    for (d, &w) in dists.iter().zip(weights) {
        for (g, p) in mixture.iter_mut().zip(d) {
            *g += w * p;
        }
    }
    let mut jsd = 0.0;
    for (d, &w) in dists.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut kl = 0.0;
        for (&p, &g) in d.iter().zip(&mixture) {
            if p > 0.0 {
                kl += p * (p / g).ln();
            }
        }
        jsd += w * kl;
    }
    Ok(jsd)
}
