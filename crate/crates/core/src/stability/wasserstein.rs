use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Method {
    Sorted1d,
    Sliced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WassersteinEstimate {
    pub value: f64,
    pub method: W1Method,
    pub n_projections: usize,
    pub sizes: [usize; 2],
    /// The larger sample was thinned to the smaller size.
    pub resampled: bool,
}

/// Evenly spaced order statistics of sorted `x`, `m` of them.
fn thin(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    (0..m).map(|k| x[((2 * k + 1) * n) / (2 * m)]).collect()
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn w1_sorted_value(a: &[f64], b: &[f64]) -> (f64, bool) {
    let (mut a, mut b) = (sorted(a), sorted(b));
    let resampled = a.len() != b.len();
    if a.len() > b.len() {
        a = thin(&a, b.len());
    } else if b.len() > a.len() {
        b = thin(&b, a.len());
    }
    let v = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    (v, resampled)
}

/// Exact empirical 1-Wasserstein distance between two 1-D samples: the
/// mean gap between order statistics. Unequal sizes thin the larger
/// sample to evenly spaced order statistics.
pub fn w1_sorted(a: &[f64], b: &[f64]) -> Result<WassersteinEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("W1 of an empty sample".into()));
    }
    let (value, resampled) = w1_sorted_value(a, b);
    Ok(WassersteinEstimate { value, method: W1Method::Sorted1d, n_projections: 0, sizes: [a.len(), b.len()], resampled })
}

/// Sliced W1 between row samples of `a` and `b` (`[n, d]`): the mean of
/// 1-D distances over `n_proj` seeded directions uniform on the sphere.
/// With `d = 1` this is [`w1_sorted`].
pub fn w1_sliced(a: &Tensor, b: &Tensor, n_proj: usize, seed: u64) -> Result<WassersteinEstimate> {
    let d = a.cols();
    if b.cols() != d {
        return Err(Error::Shape(format!("samples have {} and {} columns", d, b.cols())));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::InvalidArgument("W1 of an empty sample".into()));
    }
    if d == 1 {
        return w1_sorted(a.data(), b.data());
    }
    if n_proj == 0 {
        return Err(Error::InvalidArgument("sliced W1 needs at least one projection".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let project = |x: &Tensor, u: &[f64]| -> Vec<f64> {
        (0..x.rows()).map(|r| x.row(r).iter().zip(u).map(|(p, q)| p * q).sum()).collect()
    };
    let mut total = 0.0;
    let mut resampled = false;
    for _ in 0..n_proj {
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let (v, r) = w1_sorted_value(&project(a, &u), &project(b, &u));
        total += v;
        resampled |= r;
    }
    Ok(WassersteinEstimate {
        value: total / n_proj as f64,
        method: W1Method::Sliced,
        n_projections: n_proj,
        sizes: [a.rows(), b.rows()],
        resampled,
    })
}

/// Spearman rank correlation; ties share their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_cases() {
        assert_eq!(w1_sorted(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap().value, 0.0);
        assert_eq!(w1_sorted(&[0.0], &[1.0]).unwrap().value, 1.0);
        assert!(w1_sorted(&[], &[1.0]).is_err());
        let e = w1_sorted(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0]).unwrap();
        assert!(e.resampled);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), 0.0);
    }
}
