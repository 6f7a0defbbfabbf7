use crate::autodiff::{Backend, Eval, Tensor};
use crate::error::{Error, Result};

/// Mean softmax cross-entropy of `[n, C]` logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(Eval.softmax_cross_entropy(logits, labels)?.item())
}

/// Mean squared error over entries where `mask` is 1.
pub fn masked_mse(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<f64> {
    let mut e = Eval;
    Ok(e.masked_mse(pred, target, mask)?.item())
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let hits = (0..logits.rows()).filter(|&r| argmax(logits.row(r)) == labels[r]).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Area under the ROC curve via the Mann–Whitney rank sum; tied scores
/// share their average rank.
pub fn auroc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::AurocNotBinary(bad + 1));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("AUROC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Softmax of each row.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = Vec::with_capacity(n * c);
    for r in 0..n {
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    Tensor::matrix(n, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn uniform_logits_give_log_c() {
        let l = Tensor::zeros(vec![5, 4]);
        let ce = cross_entropy(&l, &[0, 1, 2, 3, 0]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!((ce - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logits_give_tiny_loss() {
        let l = Tensor::from_rows(&[vec![20.0, 0.0], vec![0.0, 20.0]]);
        assert!(cross_entropy(&l, &[0, 1]).unwrap() < 1e-8);
        assert!(cross_entropy(&l, &[0, 2]).is_err());
    }

    #[test]
    fn mse_of_zero_prediction_is_the_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let t = Tensor::matrix(n, 1, (0..n).map(|_| rng.sample(StandardNormal)).collect());
        let mse = masked_mse(&Tensor::zeros(vec![n, 1]), &t, &Tensor::filled(vec![n, 1], 1.0)).unwrap();
        // Var of x^2 for a standard normal is 2.
        assert!((mse - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{mse}");
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[0, 2]), Err(Error::AurocNotBinary(3))));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        assert!((auroc(&scores, &labels).unwrap() - 0.5).abs() < 0.02);
    }
}
