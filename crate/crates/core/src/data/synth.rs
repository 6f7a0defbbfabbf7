use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::path::IrregularSeries;
use crate::seed::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Two channels; counter-clockwise (class 0) vs clockwise (class 1).
    Spirals,
    /// One channel; light (class 0) vs heavy (class 1) damping.
    DampedOscillator,
    /// One channel; Ornstein–Uhlenbeck (class 0) vs geometric Brownian
    /// motion (class 1).
    OuVsGbm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n_samples: usize,
    pub length: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { kind: SynthKind::Spirals, n_samples: 300, length: 32, noise: 0.1, seed: 0 }
    }
}

/// Point on an Archimedean spiral making one turn over `t` in `[0, 1]`,
/// starting on the positive x axis.
pub fn spiral_point(t: f64, scale: f64, clockwise: bool) -> (f64, f64) {
    let r = scale * (0.5 + t);
    let theta = 2.0 * PI * t;
    let y = r * theta.sin();
    (r * theta.cos(), if clockwise { -y } else { y })
}

/// Sorted times on `[0, 1]`: both endpoints plus uniform interior draws.
fn irregular_times(rng: &mut ChaCha8Rng, length: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..length - 2).map(|_| rng.gen_range(0.0..1.0)).collect();
    t.push(0.0);
    t.push(1.0);
    t.sort_by(f64::total_cmp);
    t.dedup();
    while t.len() < length {
        // Duplicate draws are vanishingly rare; replace them.
        t.push(rng.gen_range(0.0..1.0));
        t.sort_by(f64::total_cmp);
        t.dedup();
    }
    t
}

/// Balanced two-class synthetic dataset; sample `i` has label `i % 2`.
pub fn synth(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n_samples < 4 || spec.length < 8 {
        return Err(Error::InvalidArgument("synthetic data needs n_samples >= 4 and length >= 8".into()));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be nonnegative".into()));
    }
    let mut samples = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, i as u64));
        let label = i % 2;
        let times = irregular_times(&mut rng, spec.length);
        let noise = |rng: &mut ChaCha8Rng| spec.noise * rng.sample::<f64, _>(StandardNormal);
        let (values, d) = match spec.kind {
            SynthKind::Spirals => {
                let scale = rng.gen_range(0.5..1.5);
                let mut v = Vec::with_capacity(2 * times.len());
                for &t in &times {
                    let (x, y) = spiral_point(t, scale, label == 1);
                    v.push(x + noise(&mut rng));
                    v.push(y + noise(&mut rng));
                }
                (v, 2)
            }
            SynthKind::DampedOscillator => {
                let damping = if label == 0 { 0.5 } else { 3.0 };
                let phase = rng.gen_range(-0.3..0.3);
                let v = times
                    .iter()
                    .map(|&t| (-damping * t).exp() * (6.0 * PI * t + phase).cos() + noise(&mut rng))
                    .collect();
                (v, 1)
            }
            SynthKind::OuVsGbm => {
                let mut x = 1.0;
                let mut v = vec![x + noise(&mut rng)];
                for w in times.windows(2) {
                    let h = w[1] - w[0];
                    let z: f64 = rng.sample(StandardNormal);
                    x = if label == 0 {
                        // dx = 2 (1 - x) dt + 0.5 dW, exact transition
                        let decay = (-2.0 * h).exp();
                        1.0 + (x - 1.0) * decay + 0.5 * ((1.0 - decay * decay) / 4.0).sqrt() * z
                    } else {
                        // dx = 0.3 x dt + 0.5 x dW, exact transition
                        x * ((0.3 - 0.125) * h + 0.5 * h.sqrt() * z).exp()
                    };
                    v.push(x + noise(&mut rng));
                }
                (v, 1)
            }
        };
        samples.push(IrregularSeries::dense(times, values, d, Some(label))?);
    }
    let name = match spec.kind {
        SynthKind::Spirals => "spirals",
        SynthKind::DampedOscillator => "damped-oscillator",
        SynthKind::OuVsGbm => "ou-vs-gbm",
    };
    let provenance = format!(
        "synth:{name} n={} length={} noise={} seed={}",
        spec.n_samples, spec.length, spec.noise, spec.seed
    );
    let d = samples[0].n_channels;
    Dataset::new(name, samples, d, 2, &provenance)
}
