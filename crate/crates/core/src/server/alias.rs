//! Walker alias tables for O(1) categorical sampling.

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Precomputed probability/alias pairs. Each draw uses two uniforms and one
/// comparison regardless of table size.
#[derive(Clone, Debug)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Build from non-negative weights (not necessarily normalized).
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("alias: empty weight vector".into()));
        }
        let mut sum = 0.0;
        for &w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("alias: invalid weight {w}")));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(Error::InvalidInput("alias: weights sum to zero".into()));
        }

        let n = weights.len();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / sum).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while !small.is_empty() && !large.is_empty() {
            let s = small.pop().unwrap();
            let l = *large.last().unwrap();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are exactly 1 up to rounding.
        for &l in &large {
            prob[l] = 1.0;
        }
        for &s in &small {
            prob[s] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// One categorical draw: pick a slot uniformly, then either keep it or
    /// take its alias.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let n = self.prob.len();
        let k = ((rng.next_f64() * n as f64) as usize).min(n - 1);
        if rng.next_f64() < self.prob[k] {
            k
        } else {
            self.alias[k]
        }
    }

    /// The categorical distribution the table encodes; equals the normalized
    /// input weights up to rounding.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.prob.len();
        let mut out = vec![0.0; n];
        for (k, (&p, &a)) in self.prob.iter().zip(self.alias.iter()).enumerate() {
            out[k] += p;
            out[a] += 1.0 - p;
        }
        for v in out.iter_mut() {
            *v /= n as f64;
        }
        out
    }
}
