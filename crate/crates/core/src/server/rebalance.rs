//! Classifier rebalancing on synthetic features.

use crate::client::LinearClassifier;
use crate::error::{Error, Result};
use crate::numerics::{softmax_ce, Matrix, RngStream, Schedule, SgdState};
use crate::server::SyntheticDataset;

/// Which sampled classes feed the rebalancing pass. `OldOnly` and
/// `CurrentOnly` are the two halves of the full procedure and exist for the
/// component ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFilter {
    All,
    OldOnly,
    CurrentOnly,
}

/// Rebalancing optimizer settings (SGD with momentum, half-cosine decay).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RebalanceConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub cosine: bool,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        RebalanceConfig {
            epochs: 5,
            batch: 256,
            lr: 0.01,
            momentum: 0.9,
            cosine: true,
        }
    }
}

/// Result of a rebalancing pass; `applied` is false when the class filter
/// left nothing to train on.
#[derive(Clone, Debug)]
pub struct RebalanceOutcome {
    pub head: LinearClassifier,
    pub applied: bool,
}

/// Retrain the head on synthetic features with full-head (unmasked) CE.
///
/// Only W and b change. `current_classes` drives the filter: `OldOnly`
/// keeps samples outside it, `CurrentOnly` keeps samples inside it.
pub fn rebalance(
    head: &LinearClassifier,
    synth: &SyntheticDataset,
    cfg: &RebalanceConfig,
    filter: ClassFilter,
    current_classes: &[u16],
    rng: &mut RngStream,
) -> Result<RebalanceOutcome> {
    if cfg.epochs == 0 || cfg.batch == 0 {
        return Err(Error::InvalidInput("rebalance: epochs and batch must be >= 1".into()));
    }
    let keep: Vec<usize> = (0..synth.len())
        .filter(|&i| match filter {
            ClassFilter::All => true,
            ClassFilter::OldOnly => !current_classes.contains(&synth.samples[i].class_id),
            ClassFilter::CurrentOnly => current_classes.contains(&synth.samples[i].class_id),
        })
        .collect();
    if keep.is_empty() {
        return Ok(RebalanceOutcome {
            head: head.clone(),
            applied: false,
        });
    }

    let dim = head.dim();
    let num_classes = head.num_classes();
    let mut weights = head.weights.clone();
    let mut bias = head.bias.clone();

    let batches_per_epoch = keep.len().div_ceil(cfg.batch);
    let total_steps = cfg.epochs * batches_per_epoch;
    let schedule = if cfg.cosine {
        Schedule::Cosine { total_steps }
    } else {
        Schedule::Constant
    };
    let mut w_opt = SgdState::new(cfg.lr, cfg.momentum, schedule, num_classes, dim);
    let mut b_opt = SgdState::new(cfg.lr, cfg.momentum, schedule, 1, num_classes);

    let mut order = keep;
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch_idx in order.chunks(cfg.batch) {
            let b = batch_idx.len();
            let mut x = Matrix::zeros(b, dim);
            let mut labels = Vec::with_capacity(b);
            for (r, &i) in batch_idx.iter().enumerate() {
                x.row_mut(r).copy_from_slice(&synth.samples[i].feature);
                labels.push(synth.samples[i].class_id as usize);
            }
            let mut logits = x.matmul_nt(&weights)?;
            for r in 0..b {
                for (v, bb) in logits.row_mut(r).iter_mut().zip(bias.row(0)) {
                    *v += bb;
                }
            }
            let (_, grad_logits) = softmax_ce(&logits, &labels)?;
            let gw = grad_logits.matmul_tn(&x)?;
            let mut gb = Matrix::zeros(1, num_classes);
            for c in 0..num_classes {
                let mut s = 0.0;
                for r in 0..b {
                    s += grad_logits.get(r, c);
                }
                gb.set(0, c, s);
            }
            w_opt.step(&mut weights, &gw, step)?;
            b_opt.step(&mut bias, &gb, step)?;
            step += 1;
        }
    }

    Ok(RebalanceOutcome {
        head: LinearClassifier { weights, bias },
        applied: true,
    })
}
