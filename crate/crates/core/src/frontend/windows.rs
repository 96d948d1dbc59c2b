//! Three-period feature windows.

use serde::{Deserialize, Serialize};

use super::gci::GciTrack;
use crate::{Error, Result, Waveform};

/// Length of every network input vector.
pub const FEATURE_DIM: usize = 1000;

/// What the window samples were cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Speech waveform.
    Sw,
    /// Glottal source derivative estimated by inverse filtering.
    Gsd,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sw" => Ok(Self::Sw),
            "gsd" => Ok(Self::Gsd),
            _ => Err(Error::InvalidInput(format!("unknown feature kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    /// Exactly [`FEATURE_DIM`] values, max-abs 1 over the unpadded prefix.
    pub values: Vec<f64>,
    /// Max-abs of the raw samples; `values * norm_gain` restores them.
    pub norm_gain: f64,
    /// Length of the center period.
    pub t0_samples: usize,
    pub kind: FeatureKind,
    /// First sample of the window (start of the preceding period).
    pub start: usize,
    /// Lengths of the preceding, center and following periods.
    pub periods: [usize; 3],
    /// Index of the GCI that opens the center period.
    pub center: usize,
}

impl FeatureWindow {
    pub fn center_start(&self) -> usize {
        self.start + self.periods[0]
    }

    pub fn signal_len(&self) -> usize {
        self.periods.iter().sum()
    }
}

/// Windows plus the per-window rejections, keyed by center GCI index.
#[derive(Debug, Default)]
pub struct Windowing {
    pub windows: Vec<FeatureWindow>,
    pub skipped: Vec<(usize, Error)>,
}

/// One window per interior period: that period and its two neighbours,
/// normalized and zero-padded at the tail to [`FEATURE_DIM`] samples.
pub fn make_windows(signal: &Waveform, gcis: &GciTrack, kind: FeatureKind) -> Result<Windowing> {
    let g = &gcis.instants;
    if g.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 GCIs, got {}",
            g.len()
        )));
    }
    let mut out = Windowing::default();
    for k in 1..g.len() - 2 {
        match cut(signal, g, k, kind) {
            Ok(w) => out.windows.push(w),
            Err(e) => {
                log::debug!("window at GCI {k} skipped: {e}");
                out.skipped.push((k, e));
            }
        }
    }
    Ok(out)
}

fn cut(signal: &Waveform, g: &[usize], k: usize, kind: FeatureKind) -> Result<FeatureWindow> {
    let (start, end) = (g[k - 1], g[k + 2]);
    let len = end - start;
    if len > FEATURE_DIM {
        return Err(Error::WindowOverflow {
            len,
            max: FEATURE_DIM,
        });
    }
    if end > signal.len() {
        return Err(Error::InvalidInput(format!(
            "window ends at {end}, past the signal ({} samples)",
            signal.len()
        )));
    }
    let raw = &signal.samples[start..end];
    let norm_gain = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if norm_gain == 0.0 {
        return Err(Error::DegenerateSignal("silent window".into()));
    }
    let mut values = vec![0.0; FEATURE_DIM];
    for (dst, v) in values.iter_mut().zip(raw) {
        *dst = v / norm_gain;
    }
    let periods = [g[k] - g[k - 1], g[k + 1] - g[k], g[k + 2] - g[k + 1]];
    Ok(FeatureWindow {
        values,
        norm_gain,
        t0_samples: periods[1],
        kind,
        start,
        periods,
        center: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::gci::GciSource;

    fn track(g: Vec<usize>) -> GciTrack {
        GciTrack::new(g, GciSource::GroundTruth).unwrap()
    }

    #[test]
    fn equal_periods() {
        let s = Waveform::new((0..960).map(|n| (n as f64 * 0.1).sin()).collect(), 16000.0);
        let t = track((0..=6).map(|k| k * 160).collect());
        let w = make_windows(&s, &t, FeatureKind::Sw).unwrap();
        assert_eq!(w.windows.len(), 4);
        for win in &w.windows {
            assert_eq!(win.values.len(), FEATURE_DIM);
            assert_eq!(win.signal_len(), 480);
            assert!(win.values[480..].iter().all(|v| *v == 0.0));
            let m = win.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert_eq!(m, 1.0);
            for (i, v) in win.values[..480].iter().enumerate() {
                let raw = s.samples[win.start + i];
                assert!((v * win.norm_gain - raw).abs() <= raw.abs() * f64::EPSILON);
            }
        }
    }

    #[test]
    fn overflow_is_per_window() {
        let s = Waveform::new(vec![0.5; 3000], 16000.0);
        // The long period (400) sits only in windows whose three periods exceed 1000.
        let t = track(vec![0, 300, 600, 1000, 1400, 1700, 2000, 2300]);
        let w = make_windows(&s, &t, FeatureKind::Gsd).unwrap();
        assert_eq!(w.windows.len() + w.skipped.len(), 5);
        assert!(w
            .skipped
            .iter()
            .all(|(_, e)| matches!(e, Error::WindowOverflow { .. })));
        assert_eq!(w.skipped.len(), 2);
    }

    #[test]
    fn too_few_gcis() {
        let s = Waveform::new(vec![1.0; 500], 16000.0);
        assert!(make_windows(&s, &track(vec![0, 100, 200]), FeatureKind::Sw).is_err());
    }

    #[test]
    fn kind_parses() {
        assert_eq!("gsd".parse::<FeatureKind>().unwrap(), FeatureKind::Gsd);
        assert!("x".parse::<FeatureKind>().is_err());
    }
}
