//! Error rates, waveform distances and their aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::estimate::{excitation, resynthesize, EstimationResult};
use crate::dataset::GroundTruth;
use crate::vocal_tract::Resonance;
use crate::{Error, Result, Waveform};

/// Mean relative error in percent: `100/K * sum |est - truth| / |truth|`.
pub fn aer(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch(estimates.len(), truths.len()));
    }
    if truths.is_empty() {
        return Err(Error::InvalidInput("no values to compare".into()));
    }
    let mut sum = 0.0;
    for (i, (e, t)) in estimates.iter().zip(truths).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTruth(i));
        }
        sum += ((e - t) / t).abs();
    }
    Ok(100.0 * sum / truths.len() as f64)
}

fn unit_rms(x: &[f64]) -> Result<Vec<f64>> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if !(rms > 0.0) {
        return Err(Error::DegenerateSignal("zero-energy signal".into()));
    }
    Ok(x.iter().map(|v| v / rms).collect())
}

/// Mean squared difference of two signals scaled to unit RMS, minimized over
/// lags of up to `max_lag` samples either way.
///
/// Ranges from 0 (identical up to gain and shift) to 4 (sign-inverted).
pub fn mse_pair(a: &Waveform, b: &Waveform, max_lag: usize) -> Result<f64> {
    if a.len().abs_diff(b.len()) > max_lag {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let (x, y) = (unit_rms(&a.samples)?, unit_rms(&b.samples)?);
    let mut best = f64::INFINITY;
    for lag in -(max_lag as isize)..=max_lag as isize {
        // Compare x[n] with y[n + lag] over their overlap.
        let lo = 0.max(-lag) as usize;
        let hi = (x.len() as isize).min(y.len() as isize - lag);
        if hi <= lo as isize {
            continue;
        }
        let hi = hi as usize;
        let mse = (lo..hi)
            .map(|n| (x[n] - y[(n as isize + lag) as usize]).powi(2))
            .sum::<f64>()
            / (hi - lo) as f64;
        best = best.min(mse);
    }
    Ok(best)
}

/// Pairs each true resonance with the estimate nearest in frequency; an
/// estimate is used at most once, true resonances are served in order.
pub fn match_resonances(estimated: &[Resonance], truth: &[Resonance]) -> Vec<Option<Resonance>> {
    let mut used = vec![false; estimated.len()];
    truth
        .iter()
        .map(|t| {
            let best = estimated
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .min_by(|a, b| {
                    (a.1.freq_hz - t.freq_hz)
                        .abs()
                        .total_cmp(&(b.1.freq_hz - t.freq_hz).abs())
                })?;
            used[best.0] = true;
            Some(*best.1)
        })
        .collect()
}

/// Columns of the summary table.
pub const REPORT_KEYS: [&str; 9] = ["tp", "te", "ta", "ee", "F1", "F2", "F3", "A1", "A2"];

/// Running sums of relative errors, mergeable across threads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorAccumulator {
    /// Sum of `|est - truth| / |truth|` and count per key.
    pub rel: BTreeMap<String, (f64, usize)>,
    /// True resonances for which no estimate was left to match.
    pub unmatched: BTreeMap<String, usize>,
    pub mse1: (f64, usize),
    pub mse2: (f64, usize),
    pub seconds: (f64, usize),
    pub periods: usize,
    pub rejected: usize,
}

impl ErrorAccumulator {
    pub fn add(&mut self, key: &str, est: f64, truth: f64) -> Result<()> {
        if truth == 0.0 {
            return Err(Error::ZeroTruth(0));
        }
        let e = self.rel.entry(key.to_string()).or_default();
        e.0 += ((est - truth) / truth).abs();
        e.1 += 1;
        Ok(())
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (k, (s, n)) in other.rel {
            let e = self.rel.entry(k).or_default();
            e.0 += s;
            e.1 += n;
        }
        for (k, n) in other.unmatched {
            *self.unmatched.entry(k).or_default() += n;
        }
        let add = |a: &mut (f64, usize), b: (f64, usize)| {
            a.0 += b.0;
            a.1 += b.1;
        };
        add(&mut self.mse1, other.mse1);
        add(&mut self.mse2, other.mse2);
        add(&mut self.seconds, other.seconds);
        self.periods += other.periods;
        self.rejected += other.rejected;
        self
    }

    fn add_resonances(&mut self, prefix: &str, est: &[Resonance], truth: &[Resonance]) -> Result<()> {
        for (i, (t, m)) in truth.iter().zip(match_resonances(est, truth)).enumerate() {
            let key = format!("{prefix}{}", i + 1);
            match m {
                Some(r) => self.add(&key, r.freq_hz, t.freq_hz)?,
                None => *self.unmatched.entry(key).or_default() += 1,
            }
        }
        Ok(())
    }

    /// Adds every period of `result` against the synthetic ground truth, plus
    /// the waveform distances when the truth carries a source signal.
    pub fn add_result(&mut self, result: &EstimationResult, speech: &Waveform, truth: &GroundTruth) -> Result<()> {
        self.seconds.0 += result.elapsed_s;
        self.seconds.1 += 1;
        self.periods += result.periods.len();
        self.rejected += result.rejected.len();
        let starts = truth.gcis.as_ref().map(|g| &g.instants[..truth.lf.len().min(g.len())]);
        for p in &result.periods {
            if let Some(starts) = starts {
                if let Some(idx) = nearest(starts, p.start) {
                    let t = &truth.lf[idx];
                    self.add("tp", p.lf.tp, t.tp)?;
                    self.add("te", p.lf.te, t.te)?;
                    self.add("ta", p.lf.ta, t.ta)?;
                    self.add("ee", p.lf.ee, t.ee)?;
                }
            }
            if let Some(res) = &truth.resonances {
                self.add_resonances("F", &p.resonances.formants, &res.formants)?;
                self.add_resonances("A", &p.resonances.antiformants, &res.antiformants)?;
            }
        }

        let span = result.span();
        let t0 = result.periods[0].len;
        let original = speech.slice(span.clone());
        if let Ok(m) = mse_pair(&resynthesize(result)?, &original, t0 / 2) {
            self.mse2.0 += m;
            self.mse2.1 += 1;
        }
        if let Some(gsd) = &truth.gsd {
            if span.end <= gsd.len() {
                let est_flow = cumulative(&excitation(result)?);
                let true_flow = cumulative(&gsd.slice(span));
                if let Ok(m) = mse_pair(&est_flow, &true_flow, t0 / 2) {
                    self.mse1.0 += m;
                    self.mse1.1 += 1;
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> ErrorReport {
        let mean = |(s, n): (f64, usize)| if n > 0 { Some(s / n as f64) } else { None };
        ErrorReport {
            aer: self
                .rel
                .iter()
                .map(|(k, &(s, n))| (k.clone(), 100.0 * s / n as f64))
                .collect(),
            counts: self.rel.iter().map(|(k, &(_, n))| (k.clone(), n)).collect(),
            unmatched: self.unmatched.clone(),
            mse1: mean(self.mse1),
            mse2: mean(self.mse2),
            mean_seconds: mean(self.seconds),
            utterances: self.seconds.1,
            periods: self.periods,
            rejected: self.rejected,
        }
    }
}

fn nearest(sorted: &[usize], x: usize) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let i = sorted.partition_point(|&v| v < x);
    let cands = [i.checked_sub(1), (i < sorted.len()).then_some(i)];
    cands
        .into_iter()
        .flatten()
        .min_by_key(|&j| sorted[j].abs_diff(x))
}

/// Running sum: glottal flow from its derivative.
pub fn cumulative(x: &Waveform) -> Waveform {
    let mut acc = 0.0;
    Waveform::new(
        x.samples
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect(),
        x.fs_hz,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Percent, keyed `tp`, `te`, `ta`, `ee`, `F1`.., `A1`...
    pub aer: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    pub unmatched: BTreeMap<String, usize>,
    pub mse1: Option<f64>,
    pub mse2: Option<f64>,
    pub mean_seconds: Option<f64>,
    pub utterances: usize,
    pub periods: usize,
    pub rejected: usize,
}

impl ErrorReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.aer.get(key).copied()
    }

    /// Fixed-width table: one header row, one row of AER percentages, then
    /// waveform distances and timing.
    pub fn table(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<16}", "AER (%)");
        for k in REPORT_KEYS {
            let _ = write!(s, "{k:>8}");
        }
        s.push('\n');
        let _ = write!(s, "{label:<16}");
        for k in REPORT_KEYS {
            match self.get(k) {
                Some(v) => {
                    let _ = write!(s, "{v:>8.2}");
                }
                None => {
                    let _ = write!(s, "{:>8}", "-");
                }
            }
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let _ = writeln!(s, "{:<16}{:>16}{:>16}", "", "MSE1", "MSE2");
        let _ = writeln!(s, "{label:<16}{:>16}{:>16}", opt(self.mse1), opt(self.mse2));
        let _ = writeln!(
            s,
            "time/utterance  {} s over {} utterances ({} periods, {} rejected windows)",
            self.mean_seconds.map_or("-".into(), |v| format!("{v:.4}")),
            self.utterances,
            self.periods,
            self.rejected
        );
        if !self.unmatched.is_empty() {
            let _ = writeln!(s, "unmatched resonances: {:?}", self.unmatched);
        }
        s
    }

    /// `metric,value` rows.
    pub fn csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.aer {
            let _ = writeln!(s, "aer_{k},{v}");
        }
        for (name, v) in [("mse1", self.mse1), ("mse2", self.mse2), ("seconds_per_utterance", self.mean_seconds)] {
            if let Some(v) = v {
                let _ = writeln!(s, "{name},{v}");
            }
        }
        let _ = writeln!(s, "utterances,{}", self.utterances);
        let _ = writeln!(s, "periods,{}", self.periods);
        let _ = writeln!(s, "rejected,{}", self.rejected);
        s
    }
}
