//! Server-side protocol: weighted parameter aggregation, the hierarchical
//! generative mixture, O(1) categorical sampling, synthetic-feature
//! generation, and classifier rebalancing.

mod alias;
mod mixture;
mod rebalance;

pub use alias::AliasTable;
pub use mixture::{
    build_mixture, mc_kl, sample_synthetic, sample_synthetic_mode, HierarchicalMixture,
    SampleMode, SyntheticDataset, SyntheticSample,
};
pub use rebalance::{rebalance, ClassFilter, RebalanceConfig, RebalanceOutcome};

use std::path::Path;

use crate::client::{ClientParams, LinearClassifier};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Sample-count weighted mean of client parameters.
///
/// Reduction runs in ascending client order; callers wanting bitwise
/// permutation invariance sort their inputs by client id first. A single
/// client is returned unchanged (bitwise identity).
pub fn aggregate(params: &[ClientParams], sizes: &[usize]) -> Result<ClientParams> {
    if params.is_empty() {
        return Err(Error::InvalidInput("aggregate: no clients".into()));
    }
    if params.len() != sizes.len() {
        return Err(Error::ShapeMismatch {
            op: "aggregate",
            expected: format!("{} sizes", params.len()),
            got: format!("{}", sizes.len()),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput("aggregate: all sizes are zero".into()));
    }
    let first = &params[0];
    for p in &params[1..] {
        if p.adapter.len() != first.adapter.len()
            || !p.head.weights.same_shape(&first.head.weights)
            || !p.head.bias.same_shape(&first.head.bias)
        {
            return Err(Error::ShapeMismatch {
                op: "aggregate",
                expected: format!(
                    "adapter {} / head {:?}",
                    first.adapter.len(),
                    first.head.weights.shape()
                ),
                got: format!("adapter {} / head {:?}", p.adapter.len(), p.head.weights.shape()),
            });
        }
    }
    if params.len() == 1 {
        return Ok(params[0].clone());
    }

    let inv_total = 1.0 / total as f64;
    let mut adapter = vec![0.0; first.adapter.len()];
    let mut weights = Matrix::zeros(first.head.weights.rows(), first.head.weights.cols());
    let mut bias = Matrix::zeros(1, first.head.bias.cols());
    for (p, &size) in params.iter().zip(sizes.iter()) {
        let w = size as f64 * inv_total;
        for (acc, v) in adapter.iter_mut().zip(p.adapter.iter()) {
            *acc += w * v;
        }
        weights.axpy(w, &p.head.weights)?;
        bias.axpy(w, &p.head.bias)?;
    }
    Ok(ClientParams {
        adapter,
        head: LinearClassifier { weights, bias },
    })
}

#[derive(serde::Serialize)]
struct PrototypeRecord<'a> {
    class: u16,
    client: usize,
    count: usize,
    mean: &'a [f64],
    var: &'a [f64],
}

#[derive(serde::Serialize)]
struct MixtureSnapshot<'a> {
    omega: &'a [f64],
    pi: Vec<Vec<f64>>,
    prototypes: Vec<PrototypeRecord<'a>>,
}

/// Debug/inspection snapshot of the mixture: weights plus the prototype
/// grid, as JSON. Not a wire protocol; communication is accounted, not
/// transported.
pub fn write_mixture_snapshot(mix: &HierarchicalMixture, path: &Path) -> Result<()> {
    let pi: Vec<Vec<f64>> = (0..mix.num_classes())
        .map(|c| (0..mix.num_clients()).map(|m| mix.client_weight(c, m)).collect())
        .collect();
    let mut prototypes = Vec::new();
    for c in 0..mix.num_classes() {
        for m in 0..mix.num_clients() {
            if let Some(p) = mix.prototype(c, m) {
                prototypes.push(PrototypeRecord {
                    class: p.class_id,
                    client: p.client_id,
                    count: p.count,
                    mean: &p.mean,
                    var: &p.var_diag,
                });
            }
        }
    }
    let snapshot = MixtureSnapshot {
        omega: mix.class_weights(),
        pi,
        prototypes,
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &snapshot)?;
    Ok(())
}
