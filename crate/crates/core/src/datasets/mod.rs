//! Feature-space datasets, class-incremental task scheduling, and Dirichlet
//! label-imbalance partitioning across clients.

mod io;
mod partition;
mod schedule;
mod synth;

pub use io::{read_features, write_features, FORMAT_MAGIC};
pub use partition::{dirichlet_partition, PartitionSpec};
pub use schedule::{schedule_tasks, TaskSchedule};
pub use synth::{synth_generate, synth_generate_split, SyntheticSpec};

use crate::error::{Error, Result};

/// Labeled feature vectors standing in for frozen-backbone outputs.
///
/// Features are stored flat, row-major, `len() * dim` values. Labels are
/// `u16` to match the on-disk format.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<u16>,
}

impl FeatureDataset {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        FeatureDataset {
            dim,
            num_classes,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_parts(
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<u16>,
    ) -> Result<Self> {
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch {
                op: "FeatureDataset::from_parts",
                expected: format!("{} feature values", labels.len() * dim),
                got: format!("{}", features.len()),
            });
        }
        for &l in &labels {
            if l as usize >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l as usize,
                    num_classes,
                });
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "FeatureDataset::from_parts: non-finite feature value".into(),
            ));
        }
        Ok(FeatureDataset {
            dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u16 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    pub fn push(&mut self, feature: &[f64], label: u16) {
        debug_assert_eq!(feature.len(), self.dim);
        debug_assert!((label as usize) < self.num_classes);
        self.features.extend_from_slice(feature);
        self.labels.push(label);
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> FeatureDataset {
        let mut out = FeatureDataset::new(self.dim, self.num_classes);
        for &i in indices {
            out.push(self.feature(i), self.label(i));
        }
        out
    }

    /// Samples whose label is in `classes`.
    pub fn filter_classes(&self, classes: &[u16]) -> FeatureDataset {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.subset(&keep)
    }

    /// Per-class sample counts, length `num_classes`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Sorted distinct labels present in the dataset.
    pub fn present_classes(&self) -> Vec<u16> {
        let mut classes: Vec<u16> = self.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        classes
    }
}
