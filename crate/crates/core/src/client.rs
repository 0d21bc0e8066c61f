//! Client-side protocol: local training on a shard and extraction of
//! per-class generative prototypes.

use crate::datasets::FeatureDataset;
use crate::error::{Error, Result};
use crate::numerics::{softmax_ce, AdamState, Matrix, RngStream, Schedule, SgdState};

/// Variance floor applied to prototype diagonals; keeps single-sample
/// classes sampleable.
pub const VAR_FLOOR: f64 = 1e-6;

/// Global linear head: logits = W h + b. Argmax ties break to the lowest
/// class index.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    /// C x d weight matrix.
    pub weights: Matrix,
    /// 1 x C bias row.
    pub bias: Matrix,
}

impl LinearClassifier {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        LinearClassifier {
            weights: Matrix::zeros(num_classes, dim),
            bias: Matrix::zeros(1, num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// Logits for a batch of features (n x d) -> (n x C).
    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        let mut out = features.matmul_nt(&self.weights)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(self.bias.row(0)) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn predict_one(&self, feature: &[f64]) -> u16 {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.num_classes() {
            let w = self.weights.row(c);
            let mut s = self.bias.get(0, c);
            for (wi, xi) in w.iter().zip(feature) {
                s += wi * xi;
            }
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best as u16
    }

    pub fn num_floats(&self) -> usize {
        self.weights.data().len() + self.bias.data().len()
    }
}

/// Adapter mode for the trainable feature map standing in for prompts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterMode {
    /// Frozen features; the adapter holds no parameters.
    None,
    /// A trainable d x d linear map, initialized to identity.
    Linear,
}

/// Learnable client state: an opaque adapter vector (possibly empty) and the
/// classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientParams {
    /// Either empty (frozen features) or d*d, a row-major linear map.
    pub adapter: Vec<f64>,
    pub head: LinearClassifier,
}

impl ClientParams {
    pub fn new(num_classes: usize, dim: usize, adapter: AdapterMode) -> Self {
        let adapter = match adapter {
            AdapterMode::None => Vec::new(),
            AdapterMode::Linear => {
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = 1.0;
                }
                m
            }
        };
        ClientParams {
            adapter,
            head: LinearClassifier::zeros(num_classes, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.head.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn adapter_floats(&self) -> usize {
        self.adapter.len()
    }

    pub fn num_floats(&self) -> usize {
        self.adapter.len() + self.head.num_floats()
    }

    fn adapter_matrix(&self) -> Option<Matrix> {
        if self.adapter.is_empty() {
            None
        } else {
            let d = self.dim();
            Some(Matrix::from_vec(d, d, self.adapter.clone()).expect("adapter is d*d"))
        }
    }

    /// Adapted feature batch: identity when the adapter is empty.
    pub fn adapt(&self, features: &Matrix) -> Result<Matrix> {
        match self.adapter_matrix() {
            None => Ok(features.clone()),
            Some(a) => features.matmul_nt(&a),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.adapter.iter().all(|v| v.is_finite())
            && self.head.weights.is_finite()
            && self.head.bias.is_finite()
    }
}

/// Dataset mapped through the client's adapter; identity when frozen.
pub fn apply_adapter(params: &ClientParams, ds: &FeatureDataset) -> Result<FeatureDataset> {
    if params.adapter.is_empty() || ds.is_empty() {
        return Ok(ds.clone());
    }
    let x = Matrix::from_vec(ds.len(), ds.dim(), ds.features_flat().to_vec())?;
    let z = params.adapt(&x)?;
    FeatureDataset::from_parts(ds.dim(), ds.num_classes(), z.data().to_vec(), ds.labels().to_vec())
}

/// Per (client, class) Gaussian fitted to local features.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativePrototype {
    pub client_id: usize,
    pub class_id: u16,
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
    pub count: usize,
}

/// Variance estimator for prototypes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceMode {
    /// 1/n, matching "covariance of the feature vectors" read literally.
    Population,
    /// 1/(n-1); single-sample classes fall back to the floor.
    Sample,
}

/// One prototype per class with at least one local sample.
///
/// Samples are accumulated in a canonical (sorted) order so shard order does
/// not affect the result. Variances are floored at [`VAR_FLOOR`].
pub fn compute_prototypes(shard: &FeatureDataset, client_id: usize) -> Vec<GenerativePrototype> {
    compute_prototypes_with(shard, client_id, VarianceMode::Population)
}

pub fn compute_prototypes_with(
    shard: &FeatureDataset,
    client_id: usize,
    mode: VarianceMode,
) -> Vec<GenerativePrototype> {
    let dim = shard.dim();
    let mut out = Vec::new();
    for class_id in shard.present_classes() {
        let mut rows: Vec<&[f64]> = (0..shard.len())
            .filter(|&i| shard.label(i) == class_id)
            .map(|i| shard.feature(i))
            .collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let n = rows.len();
        let inv_n = 1.0 / n as f64;
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_n;
        }
        let mut var = vec![0.0; dim];
        for row in &rows {
            for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                let d = v - m;
                *s += d * d;
            }
        }
        let denom = match mode {
            VarianceMode::Population => n as f64,
            VarianceMode::Sample => (n - 1).max(1) as f64,
        };
        for s in var.iter_mut() {
            *s = (*s / denom).max(VAR_FLOOR);
        }
        out.push(GenerativePrototype {
            client_id,
            class_id,
            mean,
            var_diag: var,
            count: n,
        });
    }
    out
}

/// Local optimizer selection (the rebalancer has its own fixed SGD).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LocalOptimizer {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64 },
}

impl Default for LocalOptimizer {
    fn default() -> Self {
        LocalOptimizer::Adam {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// Local-training knobs.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: LocalOptimizer,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 5,
            batch: 16,
            optimizer: LocalOptimizer::default(),
        }
    }
}

enum OptState {
    Sgd(SgdState),
    Adam(AdamState),
}

impl OptState {
    fn new(opt: &LocalOptimizer, rows: usize, cols: usize) -> Self {
        match *opt {
            LocalOptimizer::Sgd { lr, momentum } => {
                OptState::Sgd(SgdState::new(lr, momentum, Schedule::Constant, rows, cols))
            }
            LocalOptimizer::Adam { lr, beta1, beta2 } => {
                OptState::Adam(AdamState::new(lr, beta1, beta2, rows, cols))
            }
        }
    }

    fn step(&mut self, params: &mut Matrix, grad: &Matrix, step: usize) -> Result<()> {
        match self {
            OptState::Sgd(s) => s.step(params, grad, step),
            OptState::Adam(a) => a.step(params, grad),
        }
    }
}

/// Minimize the cross-entropy over the local shard, optionally masked.
///
/// `mask` restricts the logits to the given classes before the softmax
/// (typically the current task's classes), so gradient flow touches only
/// those head rows; `None` trains the full head. Deterministic in `rng`:
/// one per-epoch reshuffle of the sample order.
pub fn local_train(
    params: &ClientParams,
    shard: &FeatureDataset,
    opts: &TrainOptions,
    mask: Option<&[u16]>,
    rng: &mut RngStream,
) -> Result<ClientParams> {
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    if opts.epochs == 0 {
        return Err(Error::InvalidInput("local_train: epochs must be >= 1".into()));
    }
    if opts.batch == 0 {
        return Err(Error::InvalidInput("local_train: batch must be >= 1".into()));
    }
    let dim = params.dim();
    let num_classes = params.num_classes();
    if shard.dim() != dim {
        return Err(Error::ShapeMismatch {
            op: "local_train",
            expected: format!("feature dim {dim}"),
            got: format!("{}", shard.dim()),
        });
    }

    let active: Vec<usize> = match mask {
        Some(classes) => {
            let mut sorted: Vec<usize> = classes.iter().map(|&c| c as usize).collect();
            sorted.sort_unstable();
            sorted.dedup();
            sorted
        }
        None => (0..num_classes).collect(),
    };
    if active.is_empty() || active.last().is_some_and(|&c| c >= num_classes) {
        return Err(Error::InvalidInput("local_train: invalid class mask".into()));
    }
    let mut local_index = vec![usize::MAX; num_classes];
    for (i, &c) in active.iter().enumerate() {
        local_index[c] = i;
    }
    for &l in shard.labels() {
        if local_index[l as usize] == usize::MAX {
            return Err(Error::LabelOutOfRange {
                label: l as usize,
                num_classes: active.len(),
            });
        }
    }

    let mut weights = params.head.weights.clone();
    let mut bias = params.head.bias.clone();
    let mut adapter = params.adapter_matrix();

    let mut w_opt = OptState::new(&opts.optimizer, num_classes, dim);
    let mut b_opt = OptState::new(&opts.optimizer, 1, num_classes);
    let mut a_opt = adapter
        .as_ref()
        .map(|_| OptState::new(&opts.optimizer, dim, dim));

    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut step = 0usize;
    for _ in 0..opts.epochs {
        rng.shuffle(&mut order);
        for batch_idx in order.chunks(opts.batch) {
            let b = batch_idx.len();
            let mut x = Matrix::zeros(b, dim);
            let mut labels = Vec::with_capacity(b);
            for (r, &i) in batch_idx.iter().enumerate() {
                x.row_mut(r).copy_from_slice(shard.feature(i));
                labels.push(local_index[shard.label(i) as usize]);
            }
            let z = match &adapter {
                None => x.clone(),
                Some(a) => x.matmul_nt(a)?,
            };

            // Restricted logits: active rows only.
            let mut w_active = Matrix::zeros(active.len(), dim);
            for (r, &c) in active.iter().enumerate() {
                w_active.row_mut(r).copy_from_slice(weights.row(c));
            }
            let mut logits = z.matmul_nt(&w_active)?;
            for r in 0..b {
                for (v, &c) in logits.row_mut(r).iter_mut().zip(active.iter()) {
                    *v += bias.get(0, c);
                }
            }
            let (_, grad_logits) = softmax_ce(&logits, &labels)?;

            // Scatter restricted gradients into full-size zero matrices so
            // optimizer state stays aligned with the full head.
            let gw_active = grad_logits.matmul_tn(&z)?;
            let mut gw = Matrix::zeros(num_classes, dim);
            let mut gb = Matrix::zeros(1, num_classes);
            for (r, &c) in active.iter().enumerate() {
                gw.row_mut(c).copy_from_slice(gw_active.row(r));
                let mut s = 0.0;
                for i in 0..b {
                    s += grad_logits.get(i, r);
                }
                gb.set(0, c, s);
            }

            if let (Some(a), Some(a_state)) = (adapter.as_mut(), a_opt.as_mut()) {
                let gz = grad_logits.matmul(&w_active)?;
                let ga = gz.matmul_tn(&x)?;
                a_state.step(a, &ga, step)?;
            }
            w_opt.step(&mut weights, &gw, step)?;
            b_opt.step(&mut bias, &gb, step)?;
            step += 1;
        }
    }

    let out = ClientParams {
        adapter: adapter.map(|a| a.data().to_vec()).unwrap_or_default(),
        head: LinearClassifier { weights, bias },
    };
    if !out.is_finite() {
        return Err(Error::Numerical("local_train produced non-finite parameters".into()));
    }
    Ok(out)
}

/// Normalized histogram of argmax predictions over the eval set.
pub fn response_histogram(params: &ClientParams, eval_set: &FeatureDataset) -> Result<Vec<f64>> {
    if eval_set.is_empty() {
        return Err(Error::InvalidInput("response_histogram: empty eval set".into()));
    }
    let adapted = apply_adapter(params, eval_set)?;
    let mut counts = vec![0usize; params.num_classes()];
    for i in 0..adapted.len() {
        counts[params.head.predict_one(adapted.feature(i)) as usize] += 1;
    }
    let n = adapted.len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / n).collect())
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate_accuracy(params: &ClientParams, ds: &FeatureDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("evaluate_accuracy: empty dataset".into()));
    }
    let adapted = apply_adapter(params, ds)?;
    let mut correct = 0usize;
    for i in 0..adapted.len() {
        if params.head.predict_one(adapted.feature(i)) == adapted.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / adapted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synth_generate, SyntheticSpec};

    /// First seed whose two class means sit at least `min_gap` apart, so the
    /// separability oracle is not at the mercy of one unlucky draw.
    fn separable_spec(min_gap: f64) -> SyntheticSpec {
        for seed in 0..100 {
            let spec = SyntheticSpec {
                num_classes: 2,
                dim: 2,
                mean_scale: 10.0,
                cov_scale: 1.0,
                samples_per_class: 1000,
                seed,
            };
            let means = spec.class_means();
            let gap: f64 = means[0]
                .iter()
                .zip(&means[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if gap >= min_gap {
                return spec;
            }
        }
        unreachable!("no separated seed in 0..100");
    }

    fn separable_shard() -> FeatureDataset {
        synth_generate(&separable_spec(8.0)).unwrap()
    }

    #[test]
    fn trains_separable_shard_to_high_accuracy() {
        let shard = separable_shard();
        let params = ClientParams::new(2, 2, AdapterMode::None);
        let mut rng = RngStream::new(1, 0);
        let trained =
            local_train(&params, &shard, &TrainOptions::default(), None, &mut rng).unwrap();
        let acc = evaluate_accuracy(&trained, &shard).unwrap();
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn zero_lr_leaves_params_bitwise_unchanged() {
        let shard = separable_shard();
        let mut params = ClientParams::new(2, 2, AdapterMode::Linear);
        // Non-trivial starting point.
        params.head.weights.set(0, 1, 0.75);
        params.head.bias.set(0, 0, -0.5);
        let opts = TrainOptions {
            optimizer: LocalOptimizer::Sgd { lr: 0.0, momentum: 0.9 },
            ..Default::default()
        };
        let mut rng = RngStream::new(2, 0);
        let trained = local_train(&params, &shard, &opts, None, &mut rng).unwrap();
        assert_eq!(trained, params);
    }

    #[test]
    fn single_class_shard_trains_constant_predictor() {
        // The federated-bias mechanism in miniature: a client whose task
        // shard holds only class 3 ends up predicting class 3 everywhere.
        let ds = synth_generate(&SyntheticSpec {
            num_classes: 5,
            dim: 4,
            mean_scale: 3.0,
            cov_scale: 1.0,
            samples_per_class: 50,
            seed: 77,
        })
        .unwrap();
        let shard = ds.filter_classes(&[3]);
        let params = ClientParams::new(5, 4, AdapterMode::None);
        let mut rng = RngStream::new(3, 0);
        // The task covers all five classes; the shard is what the client saw.
        let trained = local_train(
            &params,
            &shard,
            &TrainOptions::default(),
            Some(&[0, 1, 2, 3, 4]),
            &mut rng,
        )
        .unwrap();
        let hist = response_histogram(&trained, &ds).unwrap();
        assert!(hist[3] >= 0.99, "histogram {hist:?}");
        assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_training_never_touches_rows_outside_the_mask() {
        let ds = synth_generate(&SyntheticSpec {
            num_classes: 4,
            dim: 3,
            mean_scale: 2.0,
            cov_scale: 1.0,
            samples_per_class: 40,
            seed: 13,
        })
        .unwrap();
        let shard = ds.filter_classes(&[0, 2]);
        let mut params = ClientParams::new(4, 3, AdapterMode::None);
        params.head.weights.set(1, 1, 0.5);
        let mut rng = RngStream::new(4, 0);
        let trained = local_train(
            &params,
            &shard,
            &TrainOptions::default(),
            Some(&[0, 2]),
            &mut rng,
        )
        .unwrap();
        assert_eq!(trained.head.weights.row(1), params.head.weights.row(1));
        assert_eq!(trained.head.weights.row(3), params.head.weights.row(3));
        assert_eq!(trained.head.bias.get(0, 1), params.head.bias.get(0, 1));
        assert_ne!(trained.head.weights.row(0), params.head.weights.row(0));
    }

    #[test]
    fn shard_label_outside_mask_is_rejected() {
        let shard = separable_shard();
        let params = ClientParams::new(2, 2, AdapterMode::None);
        let mut rng = RngStream::new(5, 0);
        assert!(local_train(&params, &shard, &TrainOptions::default(), Some(&[0]), &mut rng).is_err());
    }

    #[test]
    fn prototype_closed_form_two_points() {
        let mut shard = FeatureDataset::new(2, 1);
        shard.push(&[1.0, 2.0], 0);
        shard.push(&[3.0, 4.0], 0);
        let protos = compute_prototypes(&shard, 7);
        assert_eq!(protos.len(), 1);
        assert_eq!(protos[0].mean, vec![2.0, 3.0]);
        assert_eq!(protos[0].var_diag, vec![1.0, 1.0]);
        assert_eq!(protos[0].count, 2);
        assert_eq!(protos[0].client_id, 7);
    }

    #[test]
    fn single_sample_hits_variance_floor() {
        let mut shard = FeatureDataset::new(2, 1);
        shard.push(&[5.0, 5.0], 0);
        let protos = compute_prototypes(&shard, 0);
        assert_eq!(protos[0].mean, vec![5.0, 5.0]);
        assert_eq!(protos[0].var_diag, vec![VAR_FLOOR, VAR_FLOOR]);
    }

    #[test]
    fn prototypes_recover_generating_moments() {
        // 10k draws from N(mu, diag sigma^2): recovered stats stay inside
        // 3-sigma standard-error bands.
        let mu = [1.5f64, -2.0];
        let sigma2 = [4.0f64, 0.25];
        let n = 10_000;
        let mut rng = RngStream::new(55, 0);
        let mut shard = FeatureDataset::new(2, 1);
        let mut buf = [0.0; 2];
        for _ in 0..n {
            for j in 0..2 {
                buf[j] = mu[j] + sigma2[j].sqrt() * rng.next_normal();
            }
            shard.push(&buf, 0);
        }
        let protos = compute_prototypes(&shard, 0);
        let p = &protos[0];
        for j in 0..2 {
            let se_mean = (sigma2[j] / n as f64).sqrt();
            assert!((p.mean[j] - mu[j]).abs() < 3.0 * se_mean, "mean[{j}] = {}", p.mean[j]);
            let se_var = sigma2[j] * (2.0 / (n as f64 - 1.0)).sqrt();
            assert!(
                (p.var_diag[j] - sigma2[j]).abs() < 3.0 * se_var,
                "var[{j}] = {}",
                p.var_diag[j]
            );
        }
    }

    #[test]
    fn prototypes_invariant_to_sample_order() {
        let ds = synth_generate(&SyntheticSpec {
            num_classes: 3,
            dim: 4,
            mean_scale: 2.0,
            cov_scale: 1.0,
            samples_per_class: 25,
            seed: 21,
        })
        .unwrap();
        let mut reversed_idx: Vec<usize> = (0..ds.len()).collect();
        reversed_idx.reverse();
        let reversed = ds.subset(&reversed_idx);
        assert_eq!(compute_prototypes(&ds, 0), compute_prototypes(&reversed, 0));
    }

    #[test]
    fn prototype_counts_sum_to_shard_size() {
        let ds = synth_generate(&SyntheticSpec {
            num_classes: 4,
            dim: 2,
            mean_scale: 1.0,
            cov_scale: 1.0,
            samples_per_class: 17,
            seed: 9,
        })
        .unwrap();
        let protos = compute_prototypes(&ds, 0);
        let total: usize = protos.iter().map(|p| p.count).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn empty_shard_signals_skip() {
        let shard = FeatureDataset::new(2, 2);
        let params = ClientParams::new(2, 2, AdapterMode::None);
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            local_train(&params, &shard, &TrainOptions::default(), None, &mut rng),
            Err(Error::EmptyShard)
        ));
    }

    #[test]
    fn constant_predictor_histogram_is_one_hot() {
        let ds = separable_shard();
        let mut params = ClientParams::new(2, 2, AdapterMode::None);
        params.head.bias.set(0, 0, 100.0);
        let hist = response_histogram(&params, &ds).unwrap();
        assert_eq!(hist, vec![1.0, 0.0]);
    }

    #[test]
    fn balanced_perfect_classifier_gives_uniform_histogram() {
        let ds = separable_shard();
        let params = ClientParams::new(2, 2, AdapterMode::None);
        let mut rng = RngStream::new(6, 0);
        let trained = local_train(&params, &ds, &TrainOptions::default(), None, &mut rng).unwrap();
        let hist = response_histogram(&trained, &ds).unwrap();
        assert!((hist[0] - 0.5).abs() < 0.01, "histogram {hist:?}");
    }
}
