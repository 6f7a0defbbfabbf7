use crate::autodiff::Tensor;
use crate::seed::counter_normal;

/// One Brownian path on a uniform grid, fully materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianGrid {
    pub seed: u64,
    pub n_steps: usize,
    pub dim: usize,
    pub dt: f64,
    /// Row-major `n_steps x dim`.
    pub increments: Vec<f64>,
}

impl BrownianGrid {
    pub fn sample(seed: u64, n_steps: usize, dim: usize, dt: f64) -> Self {
        assert!(n_steps >= 1 && dim >= 1 && dt > 0.0, "invalid Brownian grid");
        let increments = (0..n_steps * dim).map(|c| increment(seed, c as u64, dt.sqrt())).collect();
        Self { seed, n_steps, dim, dt, increments }
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// `W(t_k)` for `k = 0..=n_steps`, per channel.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let mut w = vec![0.0; self.dim];
        let mut out = vec![w.clone()];
        for k in 0..self.n_steps {
            for (wj, dw) in w.iter_mut().zip(self.step(k)) {
                *wj += dw;
            }
            out.push(w.clone());
        }
        out
    }
}

#[inline]
fn increment(seed: u64, counter: u64, sqrt_dt: f64) -> f64 {
    sqrt_dt * counter_normal(seed, counter)
}

/// Brownian increments for a batch of independent paths, one seed per
/// row, generated on demand.
///
/// With `refine > 1` each coarse increment is the sum of `refine`
/// consecutive fine increments, so every level of a refinement study
/// sees the same underlying path.
#[derive(Clone, Debug)]
pub struct BatchNoise {
    seeds: Vec<u64>,
    dim: usize,
    refine: usize,
    fine_dt: f64,
}

impl BatchNoise {
    pub fn new(seeds: Vec<u64>, dim: usize, dt: f64) -> Self {
        Self::refined(seeds, dim, dt, 1)
    }

    /// Coarse steps of `fine_dt * refine`.
    pub fn refined(seeds: Vec<u64>, dim: usize, fine_dt: f64, refine: usize) -> Self {
        assert!(refine >= 1 && dim >= 1 && fine_dt > 0.0, "invalid noise source");
        Self { seeds, dim, refine, fine_dt }
    }

    pub fn rows(&self) -> usize {
        self.seeds.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn dt(&self) -> f64 {
        self.fine_dt * self.refine as f64
    }

    /// Keeps only the listed rows.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self { seeds: rows.iter().map(|&r| self.seeds[r]).collect(), ..self.clone() }
    }

    /// Increments of coarse step `k` as a `[rows, dim]` tensor.
    pub fn step(&self, k: usize) -> Tensor {
        let sq = self.fine_dt.sqrt();
        let mut data = Vec::with_capacity(self.seeds.len() * self.dim);
        for &seed in &self.seeds {
            for j in 0..self.dim {
                let mut acc = 0.0;
                for i in 0..self.refine {
                    let fine = (k * self.refine + i) * self.dim + j;
                    acc += increment(seed, fine as u64, sq);
                }
                data.push(acc);
            }
        }
        Tensor::matrix(self.seeds.len(), self.dim, data)
    }
}
