//! Iterative adaptive inverse filtering.
//!
//! Per frame: an order-1 LP pre-estimate of the glottal tilt, a first
//! vocal-tract LP on the tilt-compensated frame, leaky integration, an
//! order-`glottal_order` glottal model, a second vocal-tract LP, and finally
//! the speech inverse-filtered by that second model. The last step yields the
//! glottal source derivative directly because the synthetic speech carries
//! no separate lip-radiation term.

use crate::lpc::{fir, fir_segment, hann, leaky_integrate, lpc};
use crate::{Error, Result, Waveform};

pub const FRAME_S: f64 = 0.032;
pub const LEAK: f64 = 0.99;
pub const DEFAULT_VT_ORDER: usize = 14;
pub const DEFAULT_GLOTTAL_ORDER: usize = 4;

/// Second-pass vocal-tract inverse filter for one (unwindowed) frame.
fn vocal_tract_filter(
    frame: &[f64],
    window: &[f64],
    vt_order: usize,
    glottal_order: usize,
) -> Result<Vec<f64>> {
    let hg1 = lpc(frame, 1, Some(window))?;
    let y = fir(&hg1, frame);
    let hvt1 = lpc(&y, vt_order, Some(window))?;
    let g1 = leaky_integrate(&fir(&hvt1, frame), LEAK);
    let hg2 = lpc(&g1, glottal_order, Some(window))?;
    let y = leaky_integrate(&fir(&hg2, frame), LEAK);
    lpc(&y, vt_order, Some(window))
}

/// Estimates the glottal source derivative of `speech`.
///
/// Frames are Hann-windowed, 32 ms long with 50% overlap, and the inverse
/// filtered frames are overlap-added. Frames without energy contribute
/// nothing.
pub fn iaif(speech: &Waveform, vt_order: usize, glottal_order: usize) -> Result<Waveform> {
    let x = &speech.samples;
    if vt_order == 0 || glottal_order == 0 {
        return Err(Error::InvalidInput("LP orders must be positive".into()));
    }
    if x.len() < 4 * vt_order {
        return Err(Error::InvalidInput(format!(
            "{} samples is too short for order {vt_order}",
            x.len()
        )));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateSignal("input is silent".into()));
    }
    let mut frame_len = ((FRAME_S * speech.fs_hz).round() as usize).min(x.len());
    frame_len -= frame_len % 2;
    let hop = frame_len / 2;
    let window = hann(frame_len);

    let mut out = vec![0.0; x.len()];
    // Frames start half a frame before the signal so every sample is covered
    // by two windows summing to one.
    let mut start = -(hop as isize);
    while start < x.len() as isize {
        let lo = start.max(0) as usize;
        let hi = ((start + frame_len as isize) as usize).min(x.len());
        let offset = (lo as isize - start) as usize;
        // Filters come from the nearest frame lying wholly inside the signal;
        // edge frames would otherwise fit order-p models to a handful of samples.
        let a_lo = start.clamp(0, (x.len() - frame_len) as isize) as usize;
        let frame = &x[a_lo..a_lo + frame_len];
        if frame.iter().any(|v| *v != 0.0) {
            let hvt2 = vocal_tract_filter(frame, &window, vt_order, glottal_order)?;
            let dg = fir_segment(&hvt2, x, lo, hi);
            for (i, v) in dg.into_iter().enumerate() {
                out[lo + i] += v * window[offset + i];
            }
        }
        start += hop as isize;
    }
    Ok(Waveform::new(out, speech.fs_hz))
}

/// Zero-lag normalized correlation of two equal-length signals.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let dot: f64 = a[..n].iter().zip(&b[..n]).map(|(x, y)| x * y).sum();
    let ea: f64 = a[..n].iter().map(|x| x * x).sum();
    let eb: f64 = b[..n].iter().map(|x| x * x).sum();
    if ea == 0.0 || eb == 0.0 {
        return 0.0;
    }
    dot / (ea * eb).sqrt()
}

/// Largest normalized correlation of `est` against `truth` over shifts of
/// up to `max_lag` samples either way; inverse-filtered estimates carry a
/// small phase offset that zero-lag correlation would penalize.
pub fn aligned_correlation(est: &[f64], truth: &[f64], max_lag: usize) -> f64 {
    let n = est.len().min(truth.len());
    if n <= 2 * max_lag {
        return normalized_correlation(est, truth);
    }
    let core = &truth[max_lag..n - max_lag];
    (0..=2 * max_lag)
        .map(|s| normalized_correlation(&est[s..s + core.len()], core))
        .fold(f64::NEG_INFINITY, f64::max)
}
