//! Two-stage estimation: LF shape from the network, then one closed-form
//! ARMAX fit per window against the excitation that shape implies.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::frontend::{
    detect_gci, iaif, make_windows, FeatureKind, FeatureWindow, GciSource, GciTrack,
};
use crate::frontend::iaif::{DEFAULT_GLOTTAL_ORDER, DEFAULT_VT_ORDER};
use crate::nn::{predict_batch, LfLabel, MlpModel, Prediction};
use crate::vocal_tract::{
    arma_filter, fit_armax_span, resonances_with_diagnostics, ArmaxModel, FilterState,
    FitDiagnostics, ResonanceSet, DEFAULT_RIDGE,
};
use crate::{generate_cycle, DiscreteGrid, Error, LfParams, Result, Waveform};

/// z-plane distance below which a pole and a zero are treated as cancelling.
pub const CANCEL_TOL: f64 = 1e-3;

/// Anything that maps feature windows to LF shapes.
pub trait LfPredictor {
    fn predict(&self, windows: &[FeatureWindow]) -> Vec<Prediction>;
}

impl LfPredictor for MlpModel {
    fn predict(&self, windows: &[FeatureWindow]) -> Vec<Prediction> {
        predict_batch(self, windows)
    }
}

/// The vocal-tract solver; injectable so tests can count invocations.
pub trait ArmaxFitter {
    fn fit(
        &self,
        speech: &[f64],
        excitation: &[f64],
        span: Range<usize>,
        orders: (usize, usize),
        fs_hz: f64,
    ) -> Result<(ArmaxModel, FitDiagnostics)>;
}

/// Plain least squares with the rank-deficiency fallback.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquares;

impl ArmaxFitter for LeastSquares {
    fn fit(
        &self,
        speech: &[f64],
        excitation: &[f64],
        span: Range<usize>,
        (p, q): (usize, usize),
        fs_hz: f64,
    ) -> Result<(ArmaxModel, FitDiagnostics)> {
        fit_armax_span(speech, excitation, span, p, q, fs_hz, DEFAULT_RIDGE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub frontend: FeatureKind,
    pub orders: (usize, usize),
    /// Search range for GCI detection.
    pub f0_range_hz: (f64, f64),
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            frontend: FeatureKind::Sw,
            orders: (14, 8),
            f0_range_hz: (60.0, 400.0),
        }
    }
}

/// Estimate for the center period of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    /// Index of the GCI opening the center period.
    pub center: usize,
    /// First sample of the center period's LF cycle.
    pub start: usize,
    pub len: usize,
    /// Clamped, denormalized LF parameters of the center period.
    pub lf: LfParams,
    /// Raw network output (normalized `ee`).
    pub raw: LfLabel,
    pub model: ArmaxModel,
    pub resonances: ResonanceSet,
    pub residual_power: f64,
    /// Filter state at `start` from the observed speech and the generated
    /// excitation; resynthesis starts from it after a gap.
    pub history: FilterState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub periods: Vec<PeriodEstimate>,
    /// Windows that produced no estimate, keyed by center GCI index.
    pub rejected: Vec<(usize, String)>,
    pub gcis: GciTrack,
    pub fs_hz: f64,
    pub elapsed_s: f64,
}

impl EstimationResult {
    /// Samples covered by the estimated periods.
    pub fn span(&self) -> Range<usize> {
        match (self.periods.first(), self.periods.last()) {
            (Some(a), Some(b)) => a.start..b.start + b.len,
            _ => 0..0,
        }
    }
}

/// LF cycles laid out back to back; samples outside every cycle are zero.
pub(crate) fn excitation_over(
    cycles: &[(usize, LfParams)],
    range: Range<usize>,
    fs_hz: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; range.len()];
    for (start, lf) in cycles {
        let cycle = generate_cycle(lf, fs_hz)?;
        for (n, v) in cycle.samples.iter().enumerate() {
            let t = start + n;
            if range.contains(&t) {
                out[t - range.start] = *v;
            }
        }
    }
    Ok(out)
}

/// LF cycle boundaries of a window, shifted so cycles begin at glottal
/// opening rather than at the detected closure.
pub(crate) struct WindowLayout {
    /// Boundaries of the preceding, window and following cycles:
    /// `b[0]..b[1]` is the pre-roll cycle, `b[1]..b[4]` the window.
    pub bounds: [usize; 5],
}

impl WindowLayout {
    pub fn new(g: &[usize], k: usize, offset: usize, len: usize) -> Result<Self> {
        let at = |j: usize| -> Result<usize> {
            g[j].checked_sub(offset).ok_or_else(|| {
                Error::InvalidInput(format!("cycle {j} would start before the signal"))
            })
        };
        let b1 = at(k - 1)?;
        let (b2, b3, b4) = (at(k)?, at(k + 1)?, at(k + 2)?);
        if b4 > len {
            return Err(Error::InvalidInput("window runs past the signal".into()));
        }
        // Without a GCI before the window, assume the preceding period repeats.
        let b0 = if k >= 2 {
            at(k - 2)?
        } else {
            b1.saturating_sub(b2 - b1)
        };
        Ok(Self {
            bounds: [b0, b1, b2, b3, b4],
        })
    }

    pub fn window(&self) -> Range<usize> {
        self.bounds[1]..self.bounds[4]
    }

    pub fn center(&self) -> Range<usize> {
        self.bounds[2]..self.bounds[3]
    }

    /// The four cycles with one LF shape and their own lengths.
    pub fn cycles(&self, shape: &LfLabel, norm_gain: f64, fs_hz: f64) -> Vec<(usize, LfParams)> {
        self.bounds
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let len = w[1] - w[0];
                (w[0], shape.on_period(len).to_params(len as f64 / fs_hz, norm_gain))
            })
            .collect()
    }
}

/// Cycle-start offset of a GCI track: zero for cycle starts, the predicted
/// opening-to-closure length for detected closures.
fn cycle_offset(source: GciSource, shape: &LfLabel, period: usize, fs_hz: f64) -> Result<usize> {
    match source {
        GciSource::GroundTruth => Ok(0),
        GciSource::Detected => {
            let grid = DiscreteGrid::new(&shape.on_period(period).to_params(period as f64 / fs_hz, 1.0), fs_hz)?;
            Ok(grid.ne)
        }
    }
}

/// Outcome of fitting one window.
pub(crate) struct WindowFit {
    pub model: ArmaxModel,
    pub diag: FitDiagnostics,
    pub history: FilterState,
    pub center: Range<usize>,
}

/// Generates the window's excitation from `shape` and fits the tract once.
pub(crate) fn fit_window(
    speech: &[f64],
    layout: &WindowLayout,
    shape: &LfLabel,
    norm_gain: f64,
    orders: (usize, usize),
    fs_hz: f64,
    fitter: &dyn ArmaxFitter,
) -> Result<WindowFit> {
    let (p, q) = orders;
    let win = layout.window();
    let lo = win.start.saturating_sub(p.max(q));
    let range = lo..win.end;
    let exc = excitation_over(&layout.cycles(shape, norm_gain, fs_hz), range.clone(), fs_hz)?;
    let local = &speech[range.clone()];
    let span = win.start - lo..win.end - lo;
    let (model, diag) = fitter.fit(local, &exc, span, orders, fs_hz)?;
    let center = layout.center();
    let history = FilterState::from_history(local, &exc, center.start - lo, p, q);
    Ok(WindowFit {
        model,
        diag,
        history,
        center,
    })
}

/// Runs the estimator with ground-truth or detected GCIs.
pub fn estimate(
    speech: &Waveform,
    predictor: &dyn LfPredictor,
    opts: &EstimateOptions,
    gci_override: Option<&GciTrack>,
) -> Result<EstimationResult> {
    estimate_with(speech, predictor, opts, gci_override, &LeastSquares)
}

/// [`estimate`] with an explicit tract solver.
pub fn estimate_with(
    speech: &Waveform,
    predictor: &dyn LfPredictor,
    opts: &EstimateOptions,
    gci_override: Option<&GciTrack>,
    fitter: &dyn ArmaxFitter,
) -> Result<EstimationResult> {
    let clock = Instant::now();
    let fs = speech.fs_hz;
    let gcis = match gci_override {
        Some(t) => t.clone(),
        None => detect_gci(speech, opts.f0_range_hz)?,
    };
    if gcis.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 periods, found {}",
            gcis.len().saturating_sub(1)
        )));
    }
    let feature_signal = match opts.frontend {
        FeatureKind::Sw => speech.clone(),
        FeatureKind::Gsd => iaif(speech, DEFAULT_VT_ORDER, DEFAULT_GLOTTAL_ORDER)?,
    };
    let windowing = make_windows(&feature_signal, &gcis, opts.frontend)?;
    let mut rejected: Vec<(usize, String)> = windowing
        .skipped
        .iter()
        .map(|(k, e)| (*k, e.to_string()))
        .collect();
    let mut first_error = windowing.skipped.into_iter().next().map(|(_, e)| e);
    let predictions = predictor.predict(&windowing.windows);

    let mut periods = Vec::with_capacity(windowing.windows.len());
    for (w, pred) in windowing.windows.iter().zip(&predictions) {
        match estimate_window(&speech.samples, &gcis, w, pred, opts.orders, fs, fitter) {
            Ok(est) => periods.push(est),
            Err(e) => {
                log::debug!("window at GCI {} rejected: {e}", w.center);
                rejected.push((w.center, e.to_string()));
                first_error.get_or_insert(e);
            }
        }
    }
    if periods.is_empty() {
        return Err(first_error.unwrap_or(Error::NoVoicedRegion));
    }
    rejected.sort_by_key(|r| r.0);
    Ok(EstimationResult {
        periods,
        rejected,
        gcis,
        fs_hz: fs,
        elapsed_s: clock.elapsed().as_secs_f64(),
    })
}

fn estimate_window(
    speech: &[f64],
    gcis: &GciTrack,
    w: &FeatureWindow,
    pred: &Prediction,
    orders: (usize, usize),
    fs: f64,
    fitter: &dyn ArmaxFitter,
) -> Result<PeriodEstimate> {
    let shape = pred.clamped;
    let offset = cycle_offset(gcis.source, &shape, w.t0_samples, fs)?;
    let layout = WindowLayout::new(&gcis.instants, w.center, offset, speech.len())?;
    let fit = fit_window(speech, &layout, &shape, w.norm_gain, orders, fs, fitter)?;
    let (resonances, _) = resonances_with_diagnostics(&fit.model, CANCEL_TOL)?;
    let len = fit.center.len();
    Ok(PeriodEstimate {
        center: w.center,
        start: fit.center.start,
        len,
        lf: shape.on_period(len).to_params(len as f64 / fs, w.norm_gain),
        raw: pred.raw,
        model: fit.model,
        resonances,
        residual_power: fit.diag.residual_power,
        history: fit.history,
    })
}

/// Estimated excitation over [`EstimationResult::span`]; gaps are zero.
pub fn excitation(result: &EstimationResult) -> Result<Waveform> {
    let span = result.span();
    let cycles: Vec<(usize, LfParams)> = result.periods.iter().map(|p| (p.start, p.lf)).collect();
    Ok(Waveform::new(
        excitation_over(&cycles, span, result.fs_hz)?,
        result.fs_hz,
    ))
}

/// Each period's excitation through its own tract, with the filter state
/// carried across contiguous periods. Covers [`EstimationResult::span`];
/// gaps between estimated periods stay silent. Unstable tracts are played
/// through their stabilized equivalent (same magnitude response).
pub fn resynthesize(result: &EstimationResult) -> Result<Waveform> {
    let fs = result.fs_hz;
    let span = result.span();
    let mut out = vec![0.0; span.len()];
    let mut carried: Option<(usize, FilterState)> = None;
    for p in &result.periods {
        let exc = generate_cycle(&p.lf, fs)?;
        let state = match &carried {
            Some((end, st)) if *end == p.start => st.clone(),
            _ => p.history.clone(),
        };
        let y = arma_filter(&exc, &p.model.stabilized()?, Some(&state))?;
        let at = p.start - span.start;
        out[at..at + p.len].copy_from_slice(&y.signal.samples[..p.len]);
        carried = Some((p.start + p.len, y.state));
    }
    Ok(Waveform::new(out, fs))
}
