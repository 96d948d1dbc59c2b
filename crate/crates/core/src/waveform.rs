use serde::{Deserialize, Serialize};

/// A uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub fs_hz: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs_hz: f64) -> Self {
        Self { samples, fs_hz }
    }

    pub fn zeros(len: usize, fs_hz: f64) -> Self {
        Self::new(vec![0.0; len], fs_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs_hz
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(self.samples.iter().map(|x| x * gain).collect(), self.fs_hz)
    }

    /// Prepends `k` zeros.
    pub fn delayed(&self, k: usize) -> Self {
        let mut samples = vec![0.0; k];
        samples.extend_from_slice(&self.samples);
        Self::new(samples, self.fs_hz)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self::new(self.samples[range].to_vec(), self.fs_hz)
    }
}

impl AsRef<[f64]> for Waveform {
    fn as_ref(&self) -> &[f64] {
        &self.samples
    }
}
