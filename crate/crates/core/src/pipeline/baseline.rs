//! Exhaustive analysis-by-synthesis over a grid of LF shapes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::estimate::{
    excitation_over, fit_window, ArmaxFitter, EstimationResult, LeastSquares, PeriodEstimate,
    WindowFit, WindowLayout, CANCEL_TOL,
};
use crate::dataset::{LfRanges, GAIN_PROBE_LEN};
use crate::frontend::{GciSource, GciTrack};
use crate::nn::LfLabel;
use crate::vocal_tract::{arma_filter, resonances_with_diagnostics, FilterState};
use crate::{DiscreteGrid, Error, Result, Waveform};

/// Candidate LF shapes, enumerated `te`-major, then `tp/te`, then `ta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfGrid {
    pub te: Vec<f64>,
    pub tp_over_te: Vec<f64>,
    pub ta: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl LfGrid {
    /// Evenly spaced points covering `ranges`, endpoints included.
    pub fn uniform(ranges: &LfRanges, n_te: usize, n_ratio: usize, n_ta: usize) -> Self {
        Self {
            te: linspace(ranges.te.0, ranges.te.1, n_te),
            tp_over_te: linspace(ranges.tp_over_te.0, ranges.tp_over_te.1, n_ratio),
            ta: linspace(ranges.ta.0, ranges.ta.1, n_ta),
        }
    }

    /// The 8 x 8 x 4 = 256-point default.
    pub fn standard() -> Self {
        Self::uniform(&LfRanges::default(), 8, 8, 4)
    }

    pub fn len(&self) -> usize {
        self.te.len() * self.tp_over_te.len() * self.ta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shapes with unit `ee`, in grid order.
    pub fn candidates(&self) -> Vec<LfLabel> {
        let mut out = Vec::with_capacity(self.len());
        for &te in &self.te {
            for &r in &self.tp_over_te {
                for &ta in &self.ta {
                    out.push(LfLabel {
                        tp: te * r,
                        te,
                        ta,
                        ee: 1.0,
                    });
                }
            }
        }
        out
    }
}

fn window_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Per period, fits the tract for every grid shape, resynthesizes the window
/// and keeps the shape with the lowest squared error (first one on ties).
///
/// `ee` is not searched: the fitted numerator absorbs any amplitude, so the
/// reported `ee` is the candidate's scaled by the peak of the fitted tract's
/// impulse response, the normalization used for synthesis.
pub fn grid_abs_baseline(
    speech: &Waveform,
    gcis: &GciTrack,
    grid: &LfGrid,
    orders: (usize, usize),
) -> Result<EstimationResult> {
    grid_abs_baseline_with(speech, gcis, grid, orders, &LeastSquares)
}

pub fn grid_abs_baseline_with(
    speech: &Waveform,
    gcis: &GciTrack,
    grid: &LfGrid,
    orders: (usize, usize),
    fitter: &dyn ArmaxFitter,
) -> Result<EstimationResult> {
    let clock = Instant::now();
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty LF grid".into()));
    }
    let g = &gcis.instants;
    if g.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 GCIs, got {}",
            g.len()
        )));
    }
    let fs = speech.fs_hz;
    let x = &speech.samples;
    let candidates = grid.candidates();
    let mut periods = Vec::new();
    let mut rejected = Vec::new();
    let mut first_error = None;
    for k in 1..g.len() - 2 {
        match best_candidate(x, gcis, k, &candidates, orders, fs, fitter) {
            Ok(p) => periods.push(p),
            Err(e) => {
                rejected.push((k, e.to_string()));
                first_error.get_or_insert(e);
            }
        }
    }
    if periods.is_empty() {
        return Err(first_error.unwrap_or(Error::NoVoicedRegion));
    }
    Ok(EstimationResult {
        periods,
        rejected,
        gcis: gcis.clone(),
        fs_hz: fs,
        elapsed_s: clock.elapsed().as_secs_f64(),
    })
}

fn best_candidate(
    x: &[f64],
    gcis: &GciTrack,
    k: usize,
    candidates: &[LfLabel],
    orders: (usize, usize),
    fs: f64,
    fitter: &dyn ArmaxFitter,
) -> Result<PeriodEstimate> {
    let g = &gcis.instants;
    let period = g[k + 1] - g[k];
    let mut best: Option<(f64, LfLabel, WindowFit)> = None;
    let mut last_error = None;
    for cand in candidates {
        let attempt = (|| {
            let offset = match gcis.source {
                GciSource::GroundTruth => 0,
                GciSource::Detected => {
                    DiscreteGrid::new(&cand.on_period(period).to_params(period as f64 / fs, 1.0), fs)?.ne
                }
            };
            let layout = WindowLayout::new(g, k, offset, x.len())?;
            let fit = fit_window(x, &layout, cand, 1.0, orders, fs, fitter)?;
            let win = layout.window();
            let (p, q) = orders;
            let lo = win.start.saturating_sub(p.max(q));
            let exc = excitation_over(&layout.cycles(cand, 1.0, fs), lo..win.end, fs)?;
            // Resynthesis starts from the observed speech history.
            let state = FilterState::from_history(&x[lo..win.end], &exc, win.start - lo, p, q);
            let body = Waveform::new(exc[win.start - lo..].to_vec(), fs);
            let y = arma_filter(&body, &fit.model, Some(&state))?;
            Ok::<_, Error>((window_mse(&x[win], &y.signal.samples), fit))
        })();
        match attempt {
            Ok((mse, fit)) if mse.is_finite() => {
                if best.as_ref().map_or(true, |b| mse < b.0) {
                    best = Some((mse, *cand, fit));
                }
            }
            Ok(_) => {}
            Err(e) => last_error = Some(e),
        }
    }
    let (_, shape, mut fit) = best.ok_or_else(|| {
        last_error.unwrap_or_else(|| Error::InvalidInput("no admissible candidate".into()))
    })?;
    let mut impulse = Waveform::zeros(GAIN_PROBE_LEN, fs);
    impulse.samples[0] = 1.0;
    let gain = arma_filter(&impulse, &fit.model, None)?.signal.max_abs();
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::DegenerateSignal("fitted tract has no gain".into()));
    }
    // Move the amplitude from the numerator into ee.
    for b in &mut fit.model.b {
        *b /= gain;
    }
    for u in &mut fit.history.past_in {
        *u *= gain;
    }
    let (resonances, _) = resonances_with_diagnostics(&fit.model, CANCEL_TOL)?;
    let len = fit.center.len();
    let label = LfLabel { ee: gain, ..shape };
    Ok(PeriodEstimate {
        center: k,
        start: fit.center.start,
        len,
        lf: label.on_period(len).to_params(len as f64 / fs, 1.0),
        raw: label,
        model: fit.model,
        resonances,
        residual_power: fit.diag.residual_power,
        history: fit.history,
    })
}
