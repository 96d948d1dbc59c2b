//! Glottal closure instant detection from a mean-based signal and the LP
//! residual.
//!
//! The mean-based signal (a Blackman-weighted moving average spanning 1.75
//! local periods) oscillates once per glottal cycle. Its minima split the
//! signal into cycles; inside each cycle the GCI is placed on the strongest
//! peak of the order-14 LP residual, after a short smoothing and with the
//! polarity chosen by whichever residual extreme dominates the utterance. A second pass re-centres the
//! search intervals on the median position of the first-pass peaks relative
//! to the minima, so that closures near an interval edge are not missed.
//!
//! All analysis frames are anchored to the first non-zero sample, which
//! makes the detector exactly shift-equivariant under zero padding.

use serde::{Deserialize, Serialize};

use crate::lpc::{autocorrelation, fir_segment, hann, lpc};
use crate::{Error, Result, Waveform};

pub const RESIDUAL_LP_ORDER: usize = 14;
const MBS_SPAN_PERIODS: f64 = 1.75;
const VOICING_THRESHOLD: f64 = 0.3;
/// Peaks weaker than this fraction of the median are discarded.
const WEAK_PEAK_RATIO: f64 = 0.3;
/// Gap-filling peaks must reach this fraction of the median.
const FILL_PEAK_RATIO: f64 = 0.5;
const RESIDUAL_SMOOTHER: [f64; 5] = [1.0, 2.0, 3.0, 2.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GciSource {
    Detected,
    GroundTruth,
}

/// Glottal cycle boundaries in samples, strictly increasing.
///
/// Ground-truth tracks mark the start of each synthesized LF cycle (glottal
/// opening); detected tracks mark the main excitation (closure) instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GciTrack {
    pub instants: Vec<usize>,
    pub source: GciSource,
}

impl GciTrack {
    pub fn new(instants: Vec<usize>, source: GciSource) -> Result<Self> {
        if instants.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "GCI instants must be strictly increasing".into(),
            ));
        }
        Ok(Self { instants, source })
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn periods(&self) -> impl Iterator<Item = usize> + '_ {
        self.instants.windows(2).map(|w| w[1] - w[0])
    }
}

/// Normalised autocorrelation pitch of one frame; `None` when unvoiced.
fn frame_period(frame: &[f64], min_lag: usize, max_lag: usize) -> Option<(usize, f64)> {
    let r = autocorrelation(frame, max_lag);
    if !(r[0] > 0.0) {
        return None;
    }
    let mut best = None;
    for lag in min_lag..=max_lag.min(frame.len().saturating_sub(1)) {
        let v = r[lag] / r[0];
        // Local maxima only, so the decaying lag-0 lobe is never chosen.
        let is_peak = r[lag] >= r[lag - 1] && (lag + 1 > max_lag || r[lag] >= r[lag + 1]);
        if is_peak && best.map_or(true, |(_, b)| v > b) {
            best = Some((lag, v));
        }
    }
    best.filter(|&(_, v)| v >= VOICING_THRESHOLD)
}

/// `x[start..start + len]` with zeros outside the signal.
fn padded_frame(x: &[f64], start: isize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Local period (samples) at every sample of `x[first..last]`.
fn period_track(
    x: &[f64],
    first: usize,
    last: usize,
    min_lag: usize,
    max_lag: usize,
) -> Result<Vec<f64>> {
    let frame_len = 2 * max_lag + 1;
    let hop = (min_lag).max(40);
    let mut centers = Vec::new();
    let mut periods = Vec::new();
    let mut c = first;
    while c < last {
        let frame = padded_frame(x, c as isize - (frame_len / 2) as isize, frame_len);
        if let Some((lag, _)) = frame_period(&frame, min_lag, max_lag) {
            centers.push(c);
            periods.push(lag as f64);
        }
        c += hop;
    }
    if periods.is_empty() {
        return Err(Error::NoVoicedRegion);
    }
    // Median smoothing over five frames removes isolated octave jumps.
    let smoothed: Vec<f64> = (0..periods.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(periods.len());
            median(&mut periods[lo..hi].to_vec())
        })
        .collect();
    let mut track = vec![0.0; x.len()];
    let mut k = 0;
    for (n, t) in track.iter_mut().enumerate() {
        while k + 1 < centers.len() && centers[k + 1] <= n {
            k += 1;
        }
        *t = if n <= centers[0] {
            smoothed[0]
        } else if k + 1 >= centers.len() {
            smoothed[k]
        } else {
            let f = (n - centers[k]) as f64 / (centers[k + 1] - centers[k]) as f64;
            smoothed[k] * (1.0 - f) + smoothed[k + 1] * f
        };
    }
    Ok(track)
}

fn blackman(n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
        })
        .collect()
}

fn mean_based_signal(x: &[f64], track: &[f64]) -> Vec<f64> {
    let mut cache: std::collections::HashMap<usize, (Vec<f64>, f64)> = Default::default();
    (0..x.len())
        .map(|n| {
            let half = ((MBS_SPAN_PERIODS * track[n]) / 2.0).round() as usize;
            let (w, norm) = cache.entry(half).or_insert_with(|| {
                let w = blackman(2 * half + 1);
                let s = w.iter().sum();
                (w, s)
            });
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                let idx = n as isize + i as isize - half as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += wi * x[idx as usize];
                }
            }
            acc / *norm
        })
        .collect()
}

/// Local minima of `y`, at least half a local period apart.
fn cycle_minima(y: &[f64], track: &[f64]) -> Vec<usize> {
    let mut cand: Vec<usize> = (1..y.len().saturating_sub(1))
        .filter(|&n| y[n] < 0.0 && y[n] < y[n - 1] && y[n] <= y[n + 1])
        .collect();
    cand.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for n in cand {
        let radius = 0.5 * track[n];
        if kept.iter().all(|&k| (k as f64 - n as f64).abs() >= radius) {
            kept.push(n);
        }
    }
    kept.sort_unstable();
    kept
}

/// Positions and values of the smoothed LP residual's minimum and maximum
/// in `[lo, hi)`.
fn residual_extremes(
    x: &[f64],
    lo: usize,
    hi: usize,
    period: f64,
) -> Option<((usize, f64), (usize, f64))> {
    if hi <= lo {
        return None;
    }
    let center = (lo + hi) / 2;
    let frame_len = ((2.5 * period) as usize).max(400);
    let frame = padded_frame(x, center as isize - (frame_len / 2) as isize, frame_len);
    let coeffs = lpc(&frame, RESIDUAL_LP_ORDER, Some(&hann(frame_len))).ok()?;
    // A short symmetric smoother merges the split negative lobe around the
    // closure, so the peak does not flip between its two halves.
    let k = RESIDUAL_SMOOTHER.len() / 2;
    let res = fir_segment(&coeffs, x, lo.saturating_sub(k), (hi + k).min(x.len()));
    let offset = lo - lo.saturating_sub(k);
    let smoothed: Vec<f64> = (0..hi - lo)
        .map(|i| {
            RESIDUAL_SMOOTHER
                .iter()
                .enumerate()
                .filter_map(|(j, w)| (i + offset + j).checked_sub(k).and_then(|t| res.get(t)).map(|r| w * r))
                .sum()
        })
        .collect();
    let pick = |sign: f64| {
        smoothed
            .iter()
            .enumerate()
            .min_by(|a, b| (sign * a.1).total_cmp(&(sign * b.1)).then(a.0.cmp(&b.0)))
            .map(|(i, v)| (lo + i, *v))
    };
    Some((pick(1.0)?, pick(-1.0)?))
}

/// Detects one GCI per glottal cycle in `speech` for F0 within `f0_range_hz`.
pub fn detect_gci(speech: &Waveform, f0_range_hz: (f64, f64)) -> Result<GciTrack> {
    let fs = speech.fs_hz;
    let (f0_min, f0_max) = f0_range_hz;
    if !(f0_min > 0.0 && f0_max > f0_min) {
        return Err(Error::InvalidInput(format!("bad F0 range {f0_range_hz:?}")));
    }
    // Zero margins give boundary cycles a full mean-based-signal minimum.
    let pad = 2 * (fs / f0_min).ceil() as usize;
    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(&speech.samples);
    padded.resize(speech.len() + 2 * pad, 0.0);
    let instants: Vec<usize> = detect_padded(&padded, fs, f0_range_hz)?
        .into_iter()
        .filter(|&g| g >= pad && g < pad + speech.len())
        .map(|g| g - pad)
        .collect();
    if instants.len() < 2 {
        return Err(Error::NoVoicedRegion);
    }
    GciTrack::new(instants, GciSource::Detected)
}

fn detect_padded(x: &[f64], fs: f64, (f0_min, f0_max): (f64, f64)) -> Result<Vec<usize>> {
    let first = x.iter().position(|v| *v != 0.0).ok_or(Error::NoVoicedRegion)?;
    let last = x.iter().rposition(|v| *v != 0.0).unwrap() + 1;
    let min_lag = (fs / f0_max).floor().max(2.0) as usize;
    let max_lag = (fs / f0_min).ceil() as usize;
    if last - first < 3 * min_lag {
        return Err(Error::NoVoicedRegion);
    }

    let track = period_track(x, first, last, min_lag, max_lag)?;
    let mbs = mean_based_signal(x, &track);
    let minima = cycle_minima(&mbs, &track);
    if minima.len() < 2 {
        return Err(Error::NoVoicedRegion);
    }

    // First pass: residual extremes between consecutive minima. The
    // excitation polarity is whichever extreme dominates; the strongest
    // negative peak is then taken after flipping to that polarity.
    let mut firsts = Vec::new();
    for w in minima.windows(2) {
        if let Some(ext) = residual_extremes(x, w[0], w[1], track[w[0]]) {
            firsts.push((w[0], w[1], ext));
        }
    }
    if firsts.is_empty() {
        return Err(Error::NoVoicedRegion);
    }
    let mut lows: Vec<f64> = firsts.iter().map(|f| -f.2 .0 .1).collect();
    let mut highs: Vec<f64> = firsts.iter().map(|f| f.2 .1 .1).collect();
    let polarity = if median(&mut highs) > median(&mut lows) { -1.0 } else { 1.0 };
    let strongest = |ext: ((usize, f64), (usize, f64))| {
        let (pos, v) = if polarity > 0.0 { ext.0 } else { ext.1 };
        (pos, polarity * v)
    };
    let mut phases: Vec<f64> = firsts
        .iter()
        .map(|&(a, b, ext)| (strongest(ext).0 - a) as f64 / (b - a) as f64)
        .collect();
    let phase = median(&mut phases);

    // Second pass: intervals of one period centred on the expected closure.
    let mut gcis: Vec<(usize, f64)> = Vec::new();
    let mut push = |g: usize, v: f64, period: f64| {
        if let Some(last) = gcis.last_mut() {
            if (g as f64) - (last.0 as f64) < 0.5 * period {
                if v < last.1 {
                    *last = (g, v);
                }
                return;
            }
        }
        gcis.push((g, v));
    };
    for (i, &m) in minima.iter().enumerate() {
        let period = match (minima.get(i + 1), i.checked_sub(1).map(|j| minima[j])) {
            (Some(&next), _) => (next - m) as f64,
            (None, Some(prev)) => (m - prev) as f64,
            _ => track[m],
        };
        let expected = m as f64 + phase * period;
        let lo = (expected - 0.5 * period).round().max(first as f64) as usize;
        let hi = ((expected + 0.5 * period).round() as usize).min(last);
        if let Some(ext) = residual_extremes(x, lo, hi, period) {
            let (g, v) = strongest(ext);
            push(g, v, period);
        }
    }
    Ok(clean_up(x, gcis, &track, first, last, strongest))
}

/// Drops weak peaks, then fills gaps and edges one local period at a time
/// where a peak of comparable strength exists.
fn clean_up(
    x: &[f64],
    gcis: Vec<(usize, f64)>,
    track: &[f64],
    first: usize,
    last: usize,
    strongest: impl Fn(((usize, f64), (usize, f64))) -> (usize, f64),
) -> Vec<usize> {
    if gcis.is_empty() {
        return vec![];
    }
    // Peak values are negative after polarity flipping; strength is -v.
    let med = median(&mut gcis.iter().map(|g| -g.1).collect::<Vec<_>>());
    let mut out: Vec<usize> = gcis
        .into_iter()
        .filter(|g| -g.1 >= WEAK_PEAK_RATIO * med)
        .map(|g| g.0)
        .collect();
    if out.is_empty() {
        return out;
    }
    let accept = |lo: f64, hi: f64| -> Option<usize> {
        let lo = lo.round().max(first as f64) as usize;
        let hi = (hi.round().max(0.0) as usize).min(last);
        residual_extremes(x, lo, hi, track[lo.min(track.len() - 1)])
            .map(&strongest)
            .filter(|&(_, v)| -v >= FILL_PEAK_RATIO * med)
            .map(|(g, _)| g)
    };
    let local_period = |out: &[usize], i: usize| -> f64 {
        if i > 0 {
            (out[i] - out[i - 1]) as f64
        } else if out.len() > 1 {
            (out[1] - out[0]) as f64
        } else {
            track[out[0]]
        }
    };
    // Forward tracking: each next GCI lies 0.7..1.3 local periods after the
    // previous one. Existing detections are preferred; otherwise the range
    // is searched directly.
    let detected = std::mem::take(&mut out);
    out.push(detected[0]);
    loop {
        let prev = *out.last().unwrap();
        let t = track[prev];
        let (lo, hi) = (prev as f64 + 0.7 * t, prev as f64 + 1.3 * t);
        if lo >= last as f64 {
            break;
        }
        let in_range = detected
            .iter()
            .copied()
            .filter(|&g| (g as f64) >= lo && (g as f64) <= hi)
            .min_by_key(|&g| (g as f64 - prev as f64 - t).abs().round() as i64);
        if let Some(g) = in_range.or_else(|| accept(lo, hi)) {
            out.push(g);
            continue;
        }
        match detected.iter().copied().find(|&g| g as f64 > hi) {
            Some(g) => out.push(g),
            None => break,
        }
    }
    // Backward: the head.
    loop {
        let t = local_period(&out, 1.min(out.len() - 1)).min(track[out[0]] * 1.25);
        let cur = out[0] as f64;
        if cur - (first as f64) < 0.5 * t {
            break;
        }
        match accept(cur - 1.5 * t, cur - 0.5 * t) {
            Some(g) if g < out[0] => out.insert(0, g),
            _ => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_has_no_voiced_region() {
        let s = Waveform::zeros(16000, 16000.0);
        assert!(matches!(
            detect_gci(&s, (60.0, 500.0)),
            Err(Error::NoVoicedRegion)
        ));
    }

    #[test]
    fn track_must_increase() {
        assert!(GciTrack::new(vec![3, 3], GciSource::Detected).is_err());
        let t = GciTrack::new(vec![0, 160, 330], GciSource::GroundTruth).unwrap();
        assert_eq!(t.periods().collect::<Vec<_>>(), vec![160, 170]);
    }

    #[test]
    fn impulse_train_period() {
        let mut x = vec![0.0; 4000];
        for n in (100..4000).step_by(137) {
            x[n] = -1.0;
            if n + 1 < x.len() {
                x[n + 1] = 0.5;
            }
        }
        let t = detect_gci(&Waveform::new(x, 16000.0), (60.0, 500.0)).unwrap();
        for p in t.periods() {
            assert_eq!(p, 137);
        }
    }
}
