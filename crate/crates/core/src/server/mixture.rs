//! Hierarchical mixture over generative prototypes and sampling from it.
//!
//! The global generative model weighs classes by their normalized sample
//! counts and, within each class, weighs client Gaussians by per-client
//! sample counts. Sampling draws class, then client, then a Gaussian
//! feature, each categorical through an alias table.

use crate::client::GenerativePrototype;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::server::AliasTable;

/// Two-level mixture: class weights over per-class client mixtures whose
/// leaves are diagonal Gaussians.
#[derive(Clone, Debug)]
pub struct HierarchicalMixture {
    num_classes: usize,
    num_clients: usize,
    dim: usize,
    /// omega, length C; zero for classes with no prototype.
    class_weights: Vec<f64>,
    /// pi rows, C x M; each present row sums to 1.
    client_weights: Vec<f64>,
    /// Grid indexed (class, client).
    prototypes: Vec<Option<GenerativePrototype>>,
    class_alias: AliasTable,
    client_alias: Vec<Option<AliasTable>>,
}

impl HierarchicalMixture {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn client_weight(&self, class: usize, client: usize) -> f64 {
        self.client_weights[class * self.num_clients + client]
    }

    pub fn prototype(&self, class: usize, client: usize) -> Option<&GenerativePrototype> {
        self.prototypes[class * self.num_clients + client].as_ref()
    }

    /// Classes carrying at least one prototype, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.num_classes)
            .filter(|&c| self.class_weights[c] > 0.0)
            .collect()
    }

    pub fn sample_class(&self, rng: &mut RngStream) -> usize {
        self.class_alias.sample(rng)
    }

    pub fn sample_client(&self, class: usize, rng: &mut RngStream) -> usize {
        self.client_alias[class]
            .as_ref()
            .expect("sampled class has prototypes")
            .sample(rng)
    }

    /// Draw from the leaf Gaussian with the covariance diagonal scaled by
    /// `cov_scale`.
    pub fn sample_feature(
        &self,
        class: usize,
        client: usize,
        cov_scale: f64,
        rng: &mut RngStream,
    ) -> Vec<f64> {
        let p = self.prototype(class, client).expect("prototype present");
        p.mean
            .iter()
            .zip(p.var_diag.iter())
            .map(|(m, v)| m + (cov_scale * v).sqrt() * rng.next_normal())
            .collect()
    }

    /// Log-density of the full mixture at `x` (log-sum-exp over all leaves).
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::new();
        for c in 0..self.num_classes {
            let omega = self.class_weights[c];
            if omega <= 0.0 {
                continue;
            }
            for m in 0..self.num_clients {
                let pi = self.client_weight(c, m);
                if pi <= 0.0 {
                    continue;
                }
                let p = self.prototype(c, m).expect("weight implies prototype");
                terms.push(omega.ln() + pi.ln() + diag_gaussian_log_pdf(x, &p.mean, &p.var_diag));
            }
        }
        log_sum_exp(&terms)
    }
}

fn diag_gaussian_log_pdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += -0.5 * (d * d / vi + vi.ln() + std::f64::consts::TAU.ln());
    }
    acc
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Assemble the global mixture from all clients' prototypes.
///
/// Class weights are normalized total counts; client weights within a class
/// are normalized per-client counts.
pub fn build_mixture(
    prototypes: &[GenerativePrototype],
    num_classes: usize,
    num_clients: usize,
) -> Result<HierarchicalMixture> {
    if prototypes.is_empty() {
        return Err(Error::InvalidInput("build_mixture: no prototypes".into()));
    }
    let mut grid: Vec<Option<GenerativePrototype>> = vec![None; num_classes * num_clients];
    let dim = prototypes[0].mean.len();
    for p in prototypes {
        if p.class_id as usize >= num_classes || p.client_id >= num_clients {
            return Err(Error::InvalidInput(format!(
                "build_mixture: prototype ({}, {}) outside {}x{} grid",
                p.class_id, p.client_id, num_classes, num_clients
            )));
        }
        if p.mean.len() != dim || p.var_diag.len() != dim {
            return Err(Error::ShapeMismatch {
                op: "build_mixture",
                expected: format!("dim {dim}"),
                got: format!("{}/{}", p.mean.len(), p.var_diag.len()),
            });
        }
        if p.count == 0 {
            return Err(Error::InvalidInput("build_mixture: zero-count prototype".into()));
        }
        let slot = &mut grid[p.class_id as usize * num_clients + p.client_id];
        if slot.is_some() {
            return Err(Error::InvalidInput(format!(
                "build_mixture: duplicate prototype for class {} client {}",
                p.class_id, p.client_id
            )));
        }
        *slot = Some(p.clone());
    }

    let mut class_totals = vec![0usize; num_classes];
    for p in grid.iter().flatten() {
        class_totals[p.class_id as usize] += p.count;
    }
    let grand_total: usize = class_totals.iter().sum();

    let class_weights: Vec<f64> = class_totals
        .iter()
        .map(|&t| t as f64 / grand_total as f64)
        .collect();
    let mut client_weights = vec![0.0; num_classes * num_clients];
    let mut client_alias = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        if class_totals[c] == 0 {
            client_alias.push(None);
            continue;
        }
        for m in 0..num_clients {
            if let Some(p) = &grid[c * num_clients + m] {
                client_weights[c * num_clients + m] = p.count as f64 / class_totals[c] as f64;
            }
        }
        let row = &client_weights[c * num_clients..(c + 1) * num_clients];
        client_alias.push(Some(AliasTable::new(row)?));
    }
    let class_alias = AliasTable::new(&class_weights)?;

    Ok(HierarchicalMixture {
        num_classes,
        num_clients,
        dim,
        class_weights,
        client_weights,
        prototypes: grid,
        class_alias,
        client_alias,
    })
}

/// One generated feature with its (class, client) provenance.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub feature: Vec<f64>,
    pub class_id: u16,
    pub client_id: usize,
}

/// Features sampled from the hierarchical mixture for rebalancing.
#[derive(Clone, Debug, Default)]
pub struct SyntheticDataset {
    pub dim: usize,
    pub num_classes: usize,
    pub samples: Vec<SyntheticSample>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// How per-class sample budgets are interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Classes come out of the class categorical, so counts are multinomial
    /// around `per_class` ("average per class").
    Hierarchical,
    /// Exactly `per_class` draws for every present class.
    ExactPerClass,
}

/// Generate `per_class * #present_classes` features from the mixture.
pub fn sample_synthetic(
    mix: &HierarchicalMixture,
    per_class: usize,
    cov_scale: f64,
    rng: &mut RngStream,
) -> Result<SyntheticDataset> {
    sample_synthetic_mode(mix, per_class, cov_scale, SampleMode::Hierarchical, rng)
}

pub fn sample_synthetic_mode(
    mix: &HierarchicalMixture,
    per_class: usize,
    cov_scale: f64,
    mode: SampleMode,
    rng: &mut RngStream,
) -> Result<SyntheticDataset> {
    if per_class == 0 {
        return Err(Error::InvalidInput("sample_synthetic: per_class must be >= 1".into()));
    }
    if cov_scale <= 0.0 {
        return Err(Error::InvalidInput("sample_synthetic: cov_scale must be > 0".into()));
    }
    let present = mix.present_classes();
    let mut out = SyntheticDataset {
        dim: mix.dim(),
        num_classes: mix.num_classes(),
        samples: Vec::with_capacity(per_class * present.len()),
    };
    match mode {
        SampleMode::Hierarchical => {
            for _ in 0..per_class * present.len() {
                let c = mix.sample_class(rng);
                let m = mix.sample_client(c, rng);
                out.samples.push(SyntheticSample {
                    feature: mix.sample_feature(c, m, cov_scale, rng),
                    class_id: c as u16,
                    client_id: m,
                });
            }
        }
        SampleMode::ExactPerClass => {
            for &c in &present {
                for _ in 0..per_class {
                    let m = mix.sample_client(c, rng);
                    out.samples.push(SyntheticSample {
                        feature: mix.sample_feature(c, m, cov_scale, rng),
                        class_id: c as u16,
                        client_id: m,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Monte-Carlo KL(P || Q) over mixtures: mean and standard error of the
/// log-density ratio under draws from P.
///
/// There is no closed form for mixture KL, so divergence claims are checked
/// with this estimator.
pub fn mc_kl(
    p: &HierarchicalMixture,
    q: &HierarchicalMixture,
    draws: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::InvalidInput("mc_kl: need at least 2 draws".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let c = p.sample_class(rng);
        let m = p.sample_client(c, rng);
        let x = p.sample_feature(c, m, 1.0, rng);
        let t = p.log_density(&x) - q.log_density(&x);
        sum += t;
        sum_sq += t * t;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proto(client: usize, class: u16, mean: Vec<f64>, var: Vec<f64>, count: usize) -> GenerativePrototype {
        GenerativePrototype {
            client_id: client,
            class_id: class,
            mean,
            var_diag: var,
            count,
        }
    }

    #[test]
    fn degenerate_grid_has_unit_weights() {
        let mix = build_mixture(&[proto(0, 0, vec![0.0], vec![1.0], 5)], 1, 1).unwrap();
        assert_eq!(mix.class_weights(), &[1.0]);
        assert_eq!(mix.client_weight(0, 0), 1.0);
    }

    #[test]
    fn weights_follow_counts() {
        let protos = vec![
            proto(0, 0, vec![0.0], vec![1.0], 30),
            proto(1, 0, vec![1.0], vec![1.0], 10),
            proto(0, 1, vec![2.0], vec![1.0], 60),
        ];
        let mix = build_mixture(&protos, 2, 2).unwrap();
        assert_eq!(mix.class_weights(), &[0.4, 0.6]);
        assert_eq!(mix.client_weight(0, 0), 0.75);
        assert_eq!(mix.client_weight(0, 1), 0.25);
        assert_eq!(mix.client_weight(1, 0), 1.0);
        assert_eq!(mix.client_weight(1, 1), 0.0);
    }

    #[test]
    fn weight_normalization_invariants() {
        let mut rng = RngStream::new(40, 0);
        let mut protos = Vec::new();
        for c in 0..7u16 {
            for m in 0..5usize {
                if rng.next_f64() < 0.6 {
                    protos.push(proto(m, c, vec![rng.next_normal(); 3], vec![1.0; 3], 1 + rng.next_below(50)));
                }
            }
        }
        if protos.is_empty() {
            protos.push(proto(0, 0, vec![0.0; 3], vec![1.0; 3], 1));
        }
        let mix = build_mixture(&protos, 7, 5).unwrap();
        let omega_sum: f64 = mix.class_weights().iter().sum();
        assert!((omega_sum - 1.0).abs() < 1e-12);
        for c in mix.present_classes() {
            let row_sum: f64 = (0..5).map(|m| mix.client_weight(c, m)).sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            for m in 0..5 {
                assert_eq!(mix.client_weight(c, m) > 0.0, mix.prototype(c, m).is_some());
            }
        }
    }

    #[test]
    fn zero_mass_client_never_appears_in_provenance() {
        // pi = [1, 0] for the class: all draws must name client 0.
        let protos = vec![
            proto(0, 0, vec![0.0, 0.0], vec![1.0, 1.0], 10),
            proto(1, 1, vec![5.0, 5.0], vec![1.0, 1.0], 10),
        ];
        let mix = build_mixture(&protos, 2, 2).unwrap();
        let mut rng = RngStream::new(8, 0);
        let synth = sample_synthetic(&mix, 200, 1.0, &mut rng).unwrap();
        for s in &synth.samples {
            match s.class_id {
                0 => assert_eq!(s.client_id, 0),
                1 => assert_eq!(s.client_id, 1),
                _ => panic!("unexpected class"),
            }
        }
    }

    #[test]
    fn sample_moments_match_prototype() {
        let protos = vec![proto(0, 0, vec![0.0, 0.0], vec![1.0, 1.0], 1), proto(0, 1, vec![0.0, 0.0], vec![1.0, 1.0], 1)];
        let mix = build_mixture(&protos, 2, 1).unwrap();
        let mut rng = RngStream::new(9, 0);
        let n = 100_000;
        let synth = sample_synthetic_mode(&mix, n / 2, 1.0, SampleMode::Hierarchical, &mut rng).unwrap();
        assert_eq!(synth.len(), n);
        let mut mean = [0.0; 2];
        for s in &synth.samples {
            mean[0] += s.feature[0];
            mean[1] += s.feature[1];
        }
        let band = 3.0 / (n as f64).sqrt();
        for m in mean {
            assert!((m / n as f64).abs() < band, "mean {}", m / n as f64);
        }
    }

    #[test]
    fn cov_scale_scales_sample_variance() {
        let protos = vec![proto(0, 0, vec![0.0], vec![2.0], 1), proto(0, 1, vec![0.0], vec![2.0], 1)];
        let mix = build_mixture(&protos, 2, 1).unwrap();
        let variance_of = |scale: f64, seed: u64| {
            let mut rng = RngStream::new(seed, 0);
            let synth = sample_synthetic(&mix, 50_000, scale, &mut rng).unwrap();
            let n = synth.len() as f64;
            let mean: f64 = synth.samples.iter().map(|s| s.feature[0]).sum::<f64>() / n;
            synth.samples.iter().map(|s| (s.feature[0] - mean).powi(2)).sum::<f64>() / n
        };
        let ratio = variance_of(9.0, 10) / variance_of(1.0, 11);
        assert!((8.5..=9.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn exact_mode_hits_every_class_budget() {
        let protos = vec![
            proto(0, 0, vec![0.0], vec![1.0], 1),
            proto(0, 2, vec![1.0], vec![1.0], 99),
        ];
        let mix = build_mixture(&protos, 3, 1).unwrap();
        let mut rng = RngStream::new(12, 0);
        let synth = sample_synthetic_mode(&mix, 40, 1.0, SampleMode::ExactPerClass, &mut rng).unwrap();
        let count0 = synth.samples.iter().filter(|s| s.class_id == 0).count();
        let count2 = synth.samples.iter().filter(|s| s.class_id == 2).count();
        assert_eq!((count0, count2), (40, 40));
    }

    #[test]
    fn self_kl_is_zero_and_perturbation_is_detected() {
        let mut rng = RngStream::new(14, 0);
        let mut protos = Vec::new();
        for c in 0..3u16 {
            for m in 0..2usize {
                protos.push(proto(
                    m,
                    c,
                    (0..4).map(|_| rng.next_normal() * 2.0).collect(),
                    (0..4).map(|_| 0.5 + rng.next_f64()).collect(),
                    1 + rng.next_below(40),
                ));
            }
        }
        let mix = build_mixture(&protos, 3, 2).unwrap();
        let (kl_self, _) = mc_kl(&mix, &mix, 20_000, &mut rng).unwrap();
        assert!(kl_self.abs() < 0.01, "self KL {kl_self}");

        // Shift one prototype mean by +5 sigma along its first coordinate.
        let mut perturbed = protos.clone();
        let bump = 5.0 * perturbed[0].var_diag[0].sqrt();
        perturbed[0].mean[0] += bump;
        let mix_p = build_mixture(&perturbed, 3, 2).unwrap();
        let (kl, se) = mc_kl(&mix, &mix_p, 20_000, &mut rng).unwrap();
        assert!(kl > 3.0 * se, "KL {kl} vs 3*SE {}", 3.0 * se);
        assert!(kl > 0.0);
    }

    #[test]
    fn duplicate_prototype_rejected() {
        let protos = vec![
            proto(0, 0, vec![0.0], vec![1.0], 1),
            proto(0, 0, vec![1.0], vec![1.0], 1),
        ];
        assert!(build_mixture(&protos, 1, 1).is_err());
    }
}
