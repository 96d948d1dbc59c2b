//! End-to-end estimation, the grid-search baseline, resynthesis and
//! evaluation against synthetic ground truth.

mod baseline;
mod estimate;
mod metrics;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{grid_abs_baseline, grid_abs_baseline_with, LfGrid};
pub use estimate::{
    estimate, estimate_with, excitation, resynthesize, ArmaxFitter, EstimateOptions,
    EstimationResult, LeastSquares, LfPredictor, PeriodEstimate, CANCEL_TOL,
};
pub use metrics::{
    aer, cumulative, match_resonances, mse_pair, ErrorAccumulator, ErrorReport, REPORT_KEYS,
};

use crate::dataset::{GroundTruth, Utterance};
use crate::frontend::iaif::{DEFAULT_GLOTTAL_ORDER, DEFAULT_VT_ORDER};
use crate::frontend::{
    detect_gci, iaif, make_windows, FeatureKind, FeatureWindow, GciSource, GciTrack,
};
use crate::nn::{LfLabel, MlpModel, Prediction};
use crate::{Error, Result, Waveform};

/// Where period boundaries come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GciMode {
    Detect,
    Truth,
}

impl std::str::FromStr for GciMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detect" => Ok(Self::Detect),
            "truth" => Ok(Self::Truth),
            _ => Err(Error::InvalidInput(format!("unknown GCI mode '{s}'"))),
        }
    }
}

/// The GCI track a signal is analyzed with.
pub fn gci_track(
    speech: &Waveform,
    truth: &GroundTruth,
    mode: GciMode,
    f0_range_hz: (f64, f64),
) -> Result<GciTrack> {
    match mode {
        GciMode::Truth => truth
            .gcis
            .clone()
            .ok_or_else(|| Error::InvalidInput("no ground-truth GCIs available".into())),
        GciMode::Detect => detect_gci(speech, f0_range_hz),
    }
}

/// Index of the true period that GCI `k` of `gcis` belongs to. Ground-truth
/// tracks index periods directly; detected closures are matched to the
/// nearest true closure.
fn true_period(truth: &GroundTruth, gcis: &GciTrack, k: usize) -> Option<usize> {
    match gcis.source {
        GciSource::GroundTruth => Some(k),
        GciSource::Detected => {
            let at = *gcis.instants.get(k)?;
            truth
                .closures
                .iter()
                .enumerate()
                .min_by_key(|(_, c)| c.abs_diff(at))
                .map(|(j, _)| j)
        }
    }
}

/// Predicts the true LF shape of every window: the exact-source reference
/// the learned estimator is compared against.
pub struct OraclePredictor<'a> {
    pub truth: &'a GroundTruth,
    pub gcis: &'a GciTrack,
}

impl LfPredictor for OraclePredictor<'_> {
    fn predict(&self, windows: &[FeatureWindow]) -> Vec<Prediction> {
        windows
            .iter()
            .map(|w| {
                // Periods without truth get an out-of-range shape and are rejected downstream.
                let label = true_period(self.truth, self.gcis, w.center)
                    .and_then(|j| self.truth.lf.get(j))
                    .map_or(LfLabel { tp: f64::NAN, te: f64::NAN, ta: f64::NAN, ee: f64::NAN }, |lf| {
                        LfLabel::from_params(lf, w.norm_gain)
                    });
                Prediction { raw: label, clamped: label }
            })
            .collect()
    }
}

/// Labeled network inputs of one utterance. At most `max_windows` evenly
/// spaced windows are kept (all of them when `None`).
pub fn training_pairs(
    utt: &Utterance,
    kind: FeatureKind,
    mode: GciMode,
    f0_range_hz: (f64, f64),
    max_windows: Option<usize>,
) -> Result<Vec<(FeatureWindow, LfLabel)>> {
    let gcis = gci_track(&utt.speech, &utt.truth, mode, f0_range_hz)?;
    let signal = match kind {
        FeatureKind::Sw => utt.speech.clone(),
        FeatureKind::Gsd => iaif(&utt.speech, DEFAULT_VT_ORDER, DEFAULT_GLOTTAL_ORDER)?,
    };
    let windows = make_windows(&signal, &gcis, kind)?.windows;
    let keep: Vec<usize> = match max_windows {
        Some(m) if m < windows.len() => (0..m)
            .map(|i| (i * windows.len() + windows.len() / 2) / m)
            .collect(),
        _ => (0..windows.len()).collect(),
    };
    let truth = &utt.truth;
    let mut out = Vec::with_capacity(keep.len());
    for i in keep {
        let w = &windows[i];
        if let Some(lf) = true_period(truth, &gcis, w.center).and_then(|j| truth.lf.get(j)) {
            out.push((w.clone(), LfLabel::from_params(lf, w.norm_gain)));
        }
    }
    Ok(out)
}

/// Training pairs of many utterances, in utterance order.
pub fn training_set(
    utts: &[Utterance],
    kind: FeatureKind,
    mode: GciMode,
    f0_range_hz: (f64, f64),
    max_windows: Option<usize>,
) -> Result<Vec<(FeatureWindow, LfLabel)>> {
    let parts: Vec<_> = utts
        .par_iter()
        .map(|u| training_pairs(u, kind, mode, f0_range_hz, max_windows))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Estimation method under evaluation.
pub enum Method<'a> {
    Dnn(&'a MlpModel),
    Grid(&'a LfGrid),
    /// True LF shapes from the utterance's ground truth.
    Oracle,
}

/// Runs `method` on one signal. `truth` supplies GCIs in [`GciMode::Truth`]
/// and shapes for [`Method::Oracle`]; it may otherwise be empty.
pub fn run_utterance(
    speech: &Waveform,
    truth: &GroundTruth,
    method: &Method,
    opts: &EstimateOptions,
    mode: GciMode,
) -> Result<EstimationResult> {
    let gcis = gci_track(speech, truth, mode, opts.f0_range_hz)?;
    match method {
        Method::Dnn(m) => estimate(speech, *m, opts, Some(&gcis)),
        Method::Grid(g) => grid_abs_baseline(speech, &gcis, g, opts.orders),
        Method::Oracle => {
            let oracle = OraclePredictor { truth, gcis: &gcis };
            estimate(speech, &oracle, opts, Some(&gcis))
        }
    }
}

/// Per-utterance outcome of [`evaluate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceOutcome {
    pub id: String,
    pub periods: usize,
    pub rejected: usize,
    pub seconds: f64,
    pub error: Option<String>,
    /// Whether the failure was numerical rather than a data problem.
    pub numerical: bool,
}

impl UtteranceOutcome {
    pub fn new(id: &str, result: &Result<EstimationResult>) -> Self {
        match result {
            Ok(r) => Self {
                id: id.to_string(),
                periods: r.periods.len(),
                rejected: r.rejected.len(),
                seconds: r.elapsed_s,
                error: None,
                numerical: false,
            },
            Err(e) => Self {
                id: id.to_string(),
                periods: 0,
                rejected: 0,
                seconds: 0.0,
                error: Some(e.to_string()),
                numerical: e.is_numerical(),
            },
        }
    }
}

/// Runs `method` on every utterance (in parallel on the current rayon pool)
/// and aggregates error rates against ground truth. Failed utterances are
/// logged and reported in the outcomes, not propagated.
pub fn evaluate(
    utts: &[Utterance],
    method: &Method,
    opts: &EstimateOptions,
    mode: GciMode,
) -> (ErrorReport, Vec<UtteranceOutcome>) {
    let per: Vec<(ErrorAccumulator, UtteranceOutcome)> = utts
        .par_iter()
        .map(|u| {
            let mut acc = ErrorAccumulator::default();
            let result = run_utterance(&u.speech, &u.truth, method, opts, mode)
                .and_then(|r| acc.add_result(&r, &u.speech, &u.truth).map(|_| r));
            if let Err(e) = &result {
                log::warn!("{}: {e}", u.spec.id);
            }
            (acc, UtteranceOutcome::new(&u.spec.id, &result))
        })
        .collect();
    let mut total = ErrorAccumulator::default();
    let mut outcomes = Vec::with_capacity(per.len());
    for (a, o) in per {
        total = total.merge(a);
        outcomes.push(o);
    }
    (total.finish(), outcomes)
}
