use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::path::IrregularSeries;
use crate::seed::mix;

#[derive(Clone, Debug, PartialEq)]
pub struct Corruption {
    pub dataset: Dataset,
    pub cells_dropped: usize,
    /// Cells kept only to leave each channel at least one observation.
    pub cells_retained: usize,
}

/// Masks each observed cell independently with probability `rate`,
/// keeping at least one observation per channel per sample.
pub fn inject_missing(ds: &Dataset, rate: f64, seed: u64) -> Result<Corruption> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("missing rate {rate} must lie in [0, 1)")));
    }
    let mut out = ds.clone();
    let mut dropped = 0;
    let mut retained = 0;
    for (s, series) in out.samples.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, s as u64));
        let (n, d) = (series.len(), series.n_channels);
        for c in 0..d {
            let observed: Vec<usize> = (0..n).filter(|&i| series.mask[i * d + c]).collect();
            let keep: Vec<bool> = observed.iter().map(|_| rng.gen::<f64>() >= rate).collect();
            let mut kept = keep.iter().filter(|&&k| k).count();
            for (&i, &k) in observed.iter().zip(&keep) {
                if !k {
                    series.mask[i * d + c] = false;
                }
            }
            if kept == 0 && !observed.is_empty() {
                let i = observed[rng.gen_range(0..observed.len())];
                series.mask[i * d + c] = true;
                kept = 1;
                retained += 1;
            }
            dropped += observed.len() - kept;
        }
    }
    if rate > 0.0 {
        out.provenance = format!("{} | missing rate {rate} seed {seed}", ds.provenance);
    }
    Ok(Corruption { dataset: out, cells_dropped: dropped, cells_retained: retained })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rescaled {
    pub dataset: Dataset,
    /// Observations overwritten by a later one landing on the same cell.
    pub collisions: usize,
}

/// Maps every sample onto the grid `k / (len - 1)`, `k = 0..len`.
/// Observations land on the nearest grid point (ties to the earlier one);
/// on collision the later observation wins.
pub fn uniform_scale(ds: &Dataset, target_len: Option<usize>) -> Result<Rescaled> {
    let longest = ds.samples.iter().map(|s| s.len()).max().unwrap_or(0);
    let len = target_len.unwrap_or(longest);
    if len < 2 {
        return Err(Error::InvalidArgument("target length must be at least 2".into()));
    }
    let grid: Vec<f64> = (0..len).map(|k| k as f64 / (len - 1) as f64).collect();
    let mut collisions = 0;
    let mut samples = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let d = s.n_channels;
        let (t0, tn) = (s.times[0], s.times[s.len() - 1]);
        let span = if tn > t0 { tn - t0 } else { 1.0 };
        let mut values = vec![0.0; len * d];
        let mut mask = vec![false; len * d];
        for (i, &t) in s.times.iter().enumerate() {
            let x = (t - t0) / span * (len - 1) as f64;
            let k = ((x - 0.5).ceil().max(0.0) as usize).min(len - 1);
            for c in 0..d {
                if s.observed(i, c) {
                    if mask[k * d + c] {
                        collisions += 1;
                    }
                    mask[k * d + c] = true;
                    values[k * d + c] = s.value(i, c);
                }
            }
        }
        samples.push(IrregularSeries::new(grid.clone(), values, mask, d, s.label)?);
    }
    let dataset = Dataset { samples, provenance: format!("{} | uniform scale {len}", ds.provenance), ..ds.clone() };
    Ok(Rescaled { dataset, collisions })
}

/// Per-channel mean and standard deviation over observed cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels with zero variance, passed through unscaled.
    pub constant: Vec<bool>,
}

impl ChannelStats {
    pub fn fit(ds: &Dataset) -> Self {
        let d = ds.n_channels;
        let mut n = vec![0usize; d];
        let mut sum = vec![0.0; d];
        for s in &ds.samples {
            for i in 0..s.len() {
                for c in 0..d {
                    if s.observed(i, c) {
                        n[c] += 1;
                        sum[c] += s.value(i, c);
                    }
                }
            }
        }
        let mean: Vec<f64> = (0..d).map(|c| if n[c] > 0 { sum[c] / n[c] as f64 } else { 0.0 }).collect();
        let mut ss = vec![0.0; d];
        for s in &ds.samples {
            for i in 0..s.len() {
                for c in 0..d {
                    if s.observed(i, c) {
                        ss[c] += (s.value(i, c) - mean[c]).powi(2);
                    }
                }
            }
        }
        let std: Vec<f64> = (0..d).map(|c| if n[c] > 0 { (ss[c] / n[c] as f64).sqrt() } else { 0.0 }).collect();
        let constant = std.iter().map(|&s| s == 0.0).collect();
        Self { mean, std, constant }
    }
}

/// z-scores observed cells with the given statistics.
pub fn normalize(ds: &Dataset, stats: &ChannelStats) -> Result<Dataset> {
    if stats.mean.len() != ds.n_channels {
        return Err(Error::Shape("statistics do not match the channel count".into()));
    }
    let mut out = ds.clone();
    for s in &mut out.samples {
        let d = s.n_channels;
        for i in 0..s.len() {
            for c in 0..d {
                if s.mask[i * d + c] && !stats.constant[c] {
                    s.values[i * d + c] = (s.values[i * d + c] - stats.mean[c]) / stats.std[c];
                }
            }
        }
    }
    Ok(out)
}
