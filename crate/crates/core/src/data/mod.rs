//! Datasets of irregular series: CSV ingestion, corruption, rescaling,
//! normalization and synthetic generators.

mod csv_io;
mod synth;
mod transform;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::path::IrregularSeries;

pub use csv_io::{labels_path_for, load_csv, save_csv};
pub use synth::{spiral_point, synth, SynthKind, SynthSpec};
pub use transform::{inject_missing, normalize, uniform_scale, ChannelStats, Corruption, Rescaled};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<IrregularSeries>,
    pub n_channels: usize,
    /// 0 for unlabeled data.
    pub n_classes: usize,
    /// Source file or generator description.
    pub provenance: String,
}

impl Dataset {
    pub fn new(name: &str, samples: Vec<IrregularSeries>, n_channels: usize, n_classes: usize, provenance: &str) -> Result<Self> {
        let d = Self { name: name.into(), samples, n_channels, n_classes, provenance: provenance.into() };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if s.n_channels != self.n_channels {
                return Err(Error::Shape(format!("sample has {} channels, dataset {}", s.n_channels, self.n_channels)));
            }
            s.validate()?;
            if let Some(label) = s.label {
                if label >= self.n_classes {
                    return Err(Error::LabelOutOfRange { label, n_classes: self.n_classes });
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), ..self.clone_empty() }
    }

    fn clone_empty(&self) -> Self {
        Self { samples: Vec::new(), name: self.name.clone(), provenance: self.provenance.clone(), ..*self }
    }

    /// SHA-256 over observed cells, times and labels. Values under the
    /// missing mask do not contribute.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_channels as u64).to_le_bytes());
        h.update((self.n_classes as u64).to_le_bytes());
        for s in &self.samples {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.label.map_or(u64::MAX, |l| l as u64).to_le_bytes());
            for (i, t) in s.times.iter().enumerate() {
                h.update(t.to_bits().to_le_bytes());
                for c in 0..s.n_channels {
                    if s.observed(i, c) {
                        h.update([1]);
                        h.update(s.value(i, c).to_bits().to_le_bytes());
                    } else {
                        h.update([0]);
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn n_observed(&self) -> usize {
        self.samples.iter().map(|s| s.n_observed()).sum()
    }
}

/// Written next to generated or transformed data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub name: String,
    pub provenance: String,
    pub n_samples: usize,
    pub n_channels: usize,
    pub n_classes: usize,
    pub seed: Option<u64>,
    pub missing_rate: Option<f64>,
    pub cells_dropped: Option<usize>,
    pub collisions: Option<usize>,
    pub content_hash: String,
}

impl DataManifest {
    pub fn describe(ds: &Dataset) -> Self {
        Self {
            name: ds.name.clone(),
            provenance: ds.provenance.clone(),
            n_samples: ds.len(),
            n_channels: ds.n_channels,
            n_classes: ds.n_classes,
            seed: None,
            missing_rate: None,
            cells_dropped: None,
            collisions: None,
            content_hash: ds.content_hash(),
        }
    }
}
