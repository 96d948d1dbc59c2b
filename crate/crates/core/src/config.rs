//! Run configuration shared by all subcommands, stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetKind;
use crate::frontend::FeatureKind;
use crate::nn::TrainConfig;
use crate::pipeline::GciMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Dnn,
    Grid,
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(Self::Dnn),
            "grid" => Ok(Self::Grid),
            _ => Err(Error::InvalidInput(format!("unknown method '{s}'"))),
        }
    }
}

/// Grid resolution of the analysis-by-synthesis baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub te: usize,
    pub tp_over_te: usize,
    pub ta: usize,
}

impl Default for GridSize {
    fn default() -> Self {
        Self {
            te: 8,
            tp_over_te: 8,
            ta: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetKind,
    /// Fraction of the full corpus grid, in (0, 1].
    pub scale: f64,
    /// Seconds per synthetic utterance.
    pub duration_s: f64,
    pub frontend: FeatureKind,
    /// ARMAX pole and zero orders.
    pub orders: (usize, usize),
    pub method: MethodKind,
    pub gci: GciMode,
    /// GCI search range in Hz.
    pub f0_range_hz: (f64, f64),
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Utterance fraction held out from training, split by seed.
    pub held_out: f64,
    /// Training windows kept per utterance (evenly spaced); 0 keeps all.
    pub windows_per_utterance: usize,
    pub train: TrainConfig,
    pub grid: GridSize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetKind::One,
            scale: 1.0,
            duration_s: 1.0,
            frontend: FeatureKind::Sw,
            orders: (14, 8),
            method: MethodKind::Dnn,
            gci: GciMode::Detect,
            f0_range_hz: (60.0, 400.0),
            jobs: 0,
            held_out: 0.1,
            windows_per_utterance: 64,
            train: TrainConfig::default(),
            grid: GridSize::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidInput(format!("scale must lie in (0, 1], got {}", self.scale)));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidInput("duration must be positive".into()));
        }
        if self.orders.0 == 0 {
            return Err(Error::InvalidInput("at least one pole is required".into()));
        }
        if !(0.0..1.0).contains(&self.held_out) {
            return Err(Error::InvalidInput("held-out fraction must lie in [0, 1)".into()));
        }
        let (lo, hi) = self.f0_range_hz;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidInput("invalid F0 range".into()));
        }
        self.train.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            offset: e.span().map_or(0, |s| s.start as u64),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.orders = (10, 2);
        c.frontend = FeatureKind::Gsd;
        c.train.lr = 0.003;
        c.f0_range_hz = (70.5, 310.25);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("seed = 5\n[train]\nepochs = 2\n").unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.orders, (14, 8));
    }

    #[test]
    fn unknown_key_reports_offset() {
        match RunConfig::from_toml("seed = 1\nbogus = 2\n") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
    }
}
