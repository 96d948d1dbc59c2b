//! Network targets and clamped predictions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{MlpModel, Mode};
use super::train::batch_inputs;
use crate::frontend::FeatureWindow;
use crate::LfParams;

/// LF shape as the network sees it: `tp`, `te`, `ta` as fractions of T0 and
/// `ee` relative to the window's normalization gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfLabel {
    pub tp: f64,
    pub te: f64,
    pub ta: f64,
    pub ee: f64,
}

pub const TP_RANGE: (f64, f64) = (0.1, 0.95);
pub const TE_MAX: f64 = 0.98;
pub const TA_RANGE: (f64, f64) = (0.005, 0.2);
/// Smallest gap kept between clamped `tp` and `te`, and the floor for `ee`.
const MARGIN: f64 = 1e-3;

impl LfLabel {
    pub fn from_params(p: &LfParams, norm_gain: f64) -> Self {
        Self {
            tp: p.tp,
            te: p.te,
            ta: p.ta,
            ee: p.ee / norm_gain,
        }
    }

    /// LF parameters for a period of `t0_s`, undoing the window normalization.
    pub fn to_params(&self, t0_s: f64, norm_gain: f64) -> LfParams {
        LfParams {
            t0_s,
            tp: self.tp,
            te: self.te,
            ta: self.ta,
            tc: 1.0,
            ee: self.ee * norm_gain,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.tp, self.te, self.ta, self.ee]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            tp: v[0],
            te: v[1],
            ta: v[2],
            ee: v[3],
        }
    }

    /// Projection into the admissible LF region.
    ///
    /// Beyond the per-parameter ranges, `te` stays below `2 tp` (the opening
    /// sinusoid must be falling at `te`) and `te + ta` stays inside the period
    /// so the return phase has a root.
    pub fn clamped(&self) -> Self {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_finite() { v.clamp(lo, hi) } else { lo };
        let tp = fix(self.tp, TP_RANGE.0, TP_RANGE.1);
        let te = fix(self.te, tp + MARGIN, TE_MAX.min(2.0 * tp - MARGIN));
        let ta = fix(self.ta, TA_RANGE.0, TA_RANGE.1.min(0.9 * (1.0 - te)).max(TA_RANGE.0));
        let ee = if self.ee.is_finite() { self.ee.max(MARGIN) } else { MARGIN };
        Self { tp, te, ta, ee }
    }

    /// The shape made synthesizable on a period of `n0` samples.
    ///
    /// Rounding to the sample grid can still leave a clamped shape without a
    /// return phase (short periods, `te` near 1) or with `Ne = 2 Np`. Such
    /// shapes are snapped to the nearest feasible grid; feasible ones are
    /// returned unchanged. Needs `n0 >= 5`.
    pub fn on_period(&self, n0: usize) -> Self {
        let n = n0 as f64;
        let count = |v: f64| (v * n).round().max(0.0) as usize;
        let (np, ne, na) = (count(self.tp), count(self.te), count(self.ta));
        if np >= 1 && ne > np && ne < 2 * np && na >= 1 && ne + na < n0 {
            return *self;
        }
        if n0 < 5 || !self.to_array().iter().all(|v| v.is_finite()) {
            return *self;
        }
        let ne = ne.clamp(3, n0 - 2);
        let np = np.clamp(ne / 2 + 1, ne - 1);
        let na = na.clamp(1, n0 - ne - 1);
        Self {
            tp: np as f64 / n,
            te: ne as f64 / n,
            ta: na as f64 / n,
            ee: self.ee,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Network output as is, for metrics.
    pub raw: LfLabel,
    /// Safe for synthesis.
    pub clamped: LfLabel,
}

pub fn predict_lf(model: &MlpModel, window: &FeatureWindow) -> Prediction {
    predict_batch(model, std::slice::from_ref(window))[0]
}

/// Eval-mode predictions for many windows at once.
pub fn predict_batch(model: &MlpModel, windows: &[FeatureWindow]) -> Vec<Prediction> {
    if windows.is_empty() {
        return Vec::new();
    }
    let x = batch_inputs(windows.iter().map(|w| w.values.as_slice()));
    predictions(&model.forward(&x, Mode::Eval))
}

fn predictions(out: &DMatrix<f64>) -> Vec<Prediction> {
    out.column_iter()
        .map(|c| {
            let raw = LfLabel::from_slice(c.as_slice());
            Prediction {
                raw,
                clamped: raw.clamped(),
            }
        })
        .collect()
}
