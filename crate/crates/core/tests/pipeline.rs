use std::cell::Cell;
use std::ops::Range;

use armax_lf::dataset::{synth_utterance, CorpusSpec, DatasetKind, GroundTruth, Syllable, SyllableSpec};
use armax_lf::frontend::{FeatureWindow, GciTrack};
use armax_lf::nn::{LfLabel, Prediction};
use armax_lf::pipeline::{
    estimate, estimate_with, grid_abs_baseline, resynthesize, ArmaxFitter, EstimateOptions,
    ErrorAccumulator, LeastSquares, LfGrid, LfPredictor,
};
use armax_lf::vocal_tract::{ArmaxModel, FitDiagnostics};
use armax_lf::{DiscreteGrid, LfParams, Result, Waveform};

const FS: f64 = 16000.0;

/// Returns the true LF shape of each window's center period.
struct Oracle<'a>(&'a GroundTruth);

impl LfPredictor for Oracle<'_> {
    fn predict(&self, windows: &[FeatureWindow]) -> Vec<Prediction> {
        windows
            .iter()
            .map(|w| {
                let l = LfLabel::from_params(&self.0.lf[w.center], w.norm_gain);
                Prediction { raw: l, clamped: l }
            })
            .collect()
    }
}

struct Counting {
    calls: Cell<usize>,
}

impl ArmaxFitter for Counting {
    fn fit(
        &self,
        speech: &[f64],
        excitation: &[f64],
        span: Range<usize>,
        orders: (usize, usize),
        fs_hz: f64,
    ) -> Result<(ArmaxModel, FitDiagnostics)> {
        self.calls.set(self.calls.get() + 1);
        LeastSquares.fit(speech, excitation, span, orders, fs_hz)
    }
}

fn utterance(s: Syllable, f0: f64, duration_s: f64) -> (Waveform, GroundTruth) {
    let mut spec = CorpusSpec::full(DatasetKind::One, 0);
    spec.duration_s = duration_s;
    let n0 = (FS / f0).round() as usize;
    let lf = LfParams::new(f0, 0.3, 0.45, 0.05, 1.0).with_period_samples(n0, FS);
    synth_utterance(&SyllableSpec::table(s), &lf, &spec).unwrap()
}

fn truth_gcis(t: &GroundTruth) -> &GciTrack {
    t.gcis.as_ref().unwrap()
}

fn report(speech: &Waveform, truth: &GroundTruth, orders: (usize, usize)) -> armax_lf::pipeline::ErrorReport {
    let opts = EstimateOptions {
        orders,
        ..EstimateOptions::default()
    };
    let r = estimate(speech, &Oracle(truth), &opts, Some(truth_gcis(truth))).unwrap();
    assert!(r.rejected.is_empty(), "{:?}", r.rejected);
    let mut acc = ErrorAccumulator::default();
    acc.add_result(&r, speech, truth).unwrap();
    acc.finish()
}

#[test]
fn oracle_vowel_recovers_formants() {
    let (speech, truth) = utterance(Syllable::A, 120.0, 0.1);
    for orders in [(10, 0), (14, 8)] {
        let r = report(&speech, &truth, orders);
        for k in ["F1", "F2", "F3", "F4", "F5"] {
            assert!(r.get(k).unwrap() < 0.1, "{orders:?} {k}: {:?}", r.aer);
        }
        for k in ["tp", "te", "ta", "ee"] {
            assert!(r.get(k).unwrap() < 1e-9, "{k}: {:?}", r.aer);
        }
    }
}

#[test]
fn oracle_nasal_recovers_antiformants() {
    let (speech, truth) = utterance(Syllable::M, 150.0, 0.1);
    let r = report(&speech, &truth, (14, 8));
    for k in ["F1", "F2", "F3", "A1", "A2"] {
        assert!(r.get(k).unwrap() < 0.5, "{k}: {:?}", r.aer);
    }
}

#[test]
fn oracle_resynthesis_is_exact() {
    let (speech, truth) = utterance(Syllable::E, 200.0, 0.1);
    let r = estimate(&speech, &Oracle(&truth), &EstimateOptions::default(), Some(truth_gcis(&truth))).unwrap();
    let y = resynthesize(&r).unwrap();
    let span = r.span();
    let x = &speech.samples[span.clone()];
    assert_eq!(y.len(), span.len());
    let err: f64 = x.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum();
    let energy: f64 = x.iter().map(|a| a * a).sum();
    let db = 10.0 * (err / energy).log10();
    assert!(db < -60.0, "{db} dB");

    // Linearity of the whole chain in the input amplitude.
    let scaled = speech.scaled(3.0);
    let r3 = estimate(&scaled, &Oracle(&truth), &EstimateOptions::default(), Some(truth_gcis(&truth))).unwrap();
    let y3 = resynthesize(&r3).unwrap();
    // Up to the accuracy of the over-parameterized fits themselves.
    let peak = 3.0 * y.max_abs();
    for (a, b) in y3.samples.iter().zip(&y.samples) {
        assert!((a - 3.0 * b).abs() <= 1e-5 * peak);
    }
}

#[test]
fn one_fit_per_window() {
    let (speech, truth) = utterance(Syllable::O, 100.0, 0.2);
    let fitter = Counting { calls: Cell::new(0) };
    let r = estimate_with(&speech, &Oracle(&truth), &EstimateOptions::default(), Some(truth_gcis(&truth)), &fitter).unwrap();
    assert!(r.periods.len() >= 10);
    assert_eq!(fitter.calls.get(), r.periods.len() + r.rejected.len());
    assert!(r.rejected.is_empty());
}

#[test]
fn too_few_periods_is_an_error() {
    let (speech, truth) = utterance(Syllable::A, 100.0, 0.03);
    assert!(estimate(&speech, &Oracle(&truth), &EstimateOptions::default(), Some(truth_gcis(&truth))).is_err());
}

fn single(lf: LfParams) -> LfGrid {
    LfGrid {
        te: vec![lf.te],
        tp_over_te: vec![lf.tp / lf.te],
        ta: vec![lf.ta],
    }
}

#[test]
fn grid_selects_the_generating_shape() {
    let (speech, truth) = utterance(Syllable::U, 160.0, 0.06);
    let lf = truth.lf[0];
    let mut grid = LfGrid::standard();
    grid.te.push(lf.te);
    grid.tp_over_te.push(lf.tp / lf.te);
    grid.ta.push(lf.ta);
    let r = grid_abs_baseline(&speech, truth_gcis(&truth), &grid, (10, 0)).unwrap();
    let want = DiscreteGrid::new(&lf, FS).unwrap();
    for p in &r.periods {
        // Shapes that round to the same sample grid tie; any of them is right.
        assert_eq!(DiscreteGrid::new(&p.lf, FS).unwrap(), want);
        assert!((p.lf.ee - 1.0).abs() < 1e-6, "ee {}", p.lf.ee);
    }
}

#[test]
fn grid_of_one_returns_it() {
    let (speech, truth) = utterance(Syllable::I, 160.0, 0.06);
    let odd = LfParams::new(160.0, 0.5, 0.7, 0.03, 1.0);
    let r = grid_abs_baseline(&speech, truth_gcis(&truth), &single(odd), (14, 8)).unwrap();
    assert!(r.periods.iter().all(|p| p.lf.te == 0.7 && p.lf.ta == 0.03));
}

#[test]
fn refining_the_grid_never_hurts() {
    let (speech, truth) = utterance(Syllable::NasalEps, 140.0, 0.06);
    let coarse = LfGrid {
        te: vec![0.4, 0.8],
        tp_over_te: vec![0.7],
        ta: vec![0.04],
    };
    let mut fine = coarse.clone();
    fine.te.insert(1, 0.6);
    fine.ta.push(0.07);
    let mse = |g: &LfGrid| {
        let r = grid_abs_baseline(&speech, truth_gcis(&truth), g, (14, 8)).unwrap();
        let y = resynthesize(&r).unwrap();
        let x = &speech.samples[r.span()];
        x.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    };
    let (c, f) = (mse(&coarse), mse(&fine));
    assert!(f <= c * (1.0 + 1e-9), "fine {f} coarse {c}");
}

#[test]
fn detected_gcis_run_end_to_end() {
    let (speech, truth) = utterance(Syllable::A, 110.0, 0.3);
    let opts = EstimateOptions::default();
    let r = estimate(&speech, &Oracle(&truth), &opts, None);
    // The oracle indexes truth periods by GCI, which detection does not
    // preserve; only check the run completes and covers most periods.
    let r = r.unwrap();
    assert!(r.periods.len() + r.rejected.len() >= 25, "{}", r.periods.len());
}
