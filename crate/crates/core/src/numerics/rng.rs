//! Counter-based seeded random streams.
//!
//! Every random draw in the simulator goes through an [`RngStream`]. A stream
//! is a pure function of `(seed, id, counter)`, so replaying the same
//! `(seed, id)` reproduces the identical sequence and streams with distinct
//! ids are decorrelated. Clients, rounds and retries each get their own id,
//! which is what makes parallel execution bit-identical to sequential.

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Counter-based generator: output i is `mix(key + (i+1)*GOLDEN)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, id: u64) -> Self {
        // Two mixing rounds keep nearby (seed, id) pairs decorrelated.
        let key = mix(mix(seed ^ GOLDEN).wrapping_add(mix(id.wrapping_mul(GOLDEN) ^ 0xA5A5A5A5A5A5A5A5)));
        RngStream { key, counter: 0 }
    }

    /// Child stream keyed off this stream's identity; independent of the
    /// parent's counter position.
    pub fn derive(&self, id: u64) -> RngStream {
        RngStream::new(self.key, id)
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key.wrapping_add(self.counter.wrapping_add(1).wrapping_mul(GOLDEN)));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Rejection-free Lemire-style reduction is
    /// not needed here; modulo bias at n << 2^64 is far below test power.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller (cosine branch, one pair of uniforms
    /// per draw).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Gamma(alpha, 1) via Marsaglia-Tsang, with the alpha < 1 boost.
    pub fn next_gamma(&mut self, alpha: f64) -> f64 {
        debug_assert!(alpha > 0.0);
        if alpha < 1.0 {
            let x = self.next_gamma(alpha + 1.0);
            let u = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
            return x * u.powf(1.0 / alpha);
        }
        let d = alpha - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let z = self.next_normal();
            let t = 1.0 + c * z;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.next_f64();
            if u < 1.0 - 0.0331 * z.powi(4) {
                return d * v;
            }
            if u > 0.0 && u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Symmetric Dirichlet(beta) over `n` categories.
    pub fn next_dirichlet(&mut self, beta: f64, n: usize) -> Vec<f64> {
        loop {
            let draws: Vec<f64> = (0..n).map(|_| self.next_gamma(beta)).collect();
            let sum: f64 = draws.iter().sum();
            if sum > 0.0 && sum.is_finite() {
                return draws.iter().map(|g| g / sum).collect();
            }
            // All gammas underflowed (tiny beta); redraw.
        }
    }

    /// Fisher-Yates shuffle in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from [0, n), returned in ascending order.
    pub fn choose_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_below(n - i);
            idx.swap(i, j);
        }
        let mut chosen: Vec<usize> = idx[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_id_replays_identical_sequence() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_ids_give_distinct_sequences() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn uniform_is_in_unit_interval_and_roughly_centered() {
        let mut rng = RngStream::new(1, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        // 3 sigma of Uniform(0,1) mean: 3 * sqrt(1/12 / n) ~= 0.0027
        assert!((mean - 0.5).abs() < 0.003, "mean = {mean}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(3, 0);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.next_normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt() * 1.2, "mean = {mean}");
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn gamma_mean_matches_alpha() {
        for &alpha in &[0.05f64, 0.5, 1.0, 4.0] {
            let mut rng = RngStream::new(9, alpha.to_bits());
            let n = 100_000;
            let mean: f64 = (0..n).map(|_| rng.next_gamma(alpha)).sum::<f64>() / n as f64;
            // Gamma(alpha,1): mean alpha, var alpha.
            let tol = 4.0 * (alpha / n as f64).sqrt();
            assert!((mean - alpha).abs() < tol, "alpha={alpha} mean={mean}");
        }
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = RngStream::new(5, 0);
        for &beta in &[0.05, 0.5, 100.0] {
            let p = rng.next_dirichlet(beta, 10);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn choose_without_replacement_is_sorted_and_distinct() {
        let mut rng = RngStream::new(11, 0);
        let chosen = rng.choose_without_replacement(10, 4);
        assert_eq!(chosen.len(), 4);
        for w in chosen.windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
