use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::mix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `floor`-then-largest-remainder: `total` units over groups in
/// proportion to `weights`, ties to the lower index.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|&w| total as f64 * w as f64 / sum as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total - out.iter().sum::<usize>();
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[g] += 1;
        left -= 1;
    }
    out
}

/// Stratified train/validation/test split.
///
/// Overall validation and test sizes are `round(n * ratio)` over eligible
/// samples, shared out across classes by largest remainder. Classes with
/// fewer than three samples go entirely to training. Unlabeled samples
/// form one stratum.
pub fn split(labels: &[Option<usize>], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        strata.entry(*l).or_default().push(i);
    }
    let mut out = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    let mut eligible = Vec::new();
    for (key, members) in strata {
        if members.len() < 3 {
            log::warn!("class {key:?} has {} samples; all go to training", members.len());
            out.train.extend(members);
        } else {
            eligible.push(members);
        }
    }
    let sizes: Vec<usize> = eligible.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();
    let n_val = (n as f64 * ratios[1]).round() as usize;
    let n_test = ((n as f64 * ratios[2]).round() as usize).min(n - n_val);
    let val = apportion(n_val, &sizes);
    let test = apportion(n_test, &sizes);
    for (g, mut members) in eligible.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, g as u64));
        members.shuffle(&mut rng);
        // Keep at least one training sample per class.
        let v = val[g].min(members.len() - 1);
        let t = test[g].min(members.len() - 1 - v);
        out.val.extend_from_slice(&members[..v]);
        out.test.extend_from_slice(&members[v..v + t]);
        out.train.extend_from_slice(&members[v + t..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
