use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::armax::ArmaxModel;
use super::roots::poly_roots;
use crate::{Error, Result};

/// Roots whose imaginary part is below this (relative to modulus) are real.
const REAL_ROOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq_hz: f64,
    pub bw_hz: f64,
}

impl Resonance {
    pub fn new(freq_hz: f64, bw_hz: f64) -> Self {
        Self { freq_hz, bw_hz }
    }

    /// Upper root of the conjugate pair, `r = exp(-pi B / fs)`, `theta = 2 pi F / fs`.
    pub fn root(&self, fs_hz: f64) -> Complex64 {
        Complex64::from_polar((-PI * self.bw_hz / fs_hz).exp(), 2.0 * PI * self.freq_hz / fs_hz)
    }

    pub fn from_root(z: Complex64, fs_hz: f64) -> Self {
        let (r, theta) = z.to_polar();
        Self {
            freq_hz: theta * fs_hz / (2.0 * PI),
            // Roots outside the unit circle report the bandwidth of their mirror image.
            bw_hz: (-r.ln() * fs_hz / PI).abs(),
        }
    }
}

/// Formants (from poles) and anti-formants (from zeros), each sorted by frequency.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSet {
    pub formants: Vec<Resonance>,
    pub antiformants: Vec<Resonance>,
}

impl ResonanceSet {
    pub fn new(mut formants: Vec<Resonance>, mut antiformants: Vec<Resonance>) -> Self {
        sort_by_freq(&mut formants);
        sort_by_freq(&mut antiformants);
        Self {
            formants,
            antiformants,
        }
    }
}

fn sort_by_freq(v: &mut [Resonance]) {
    v.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
}

/// Poles and zeros of `model`.
pub fn poles_zeros(model: &ArmaxModel) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    Ok((poly_roots(&model.a)?, poly_roots(&model.b)?))
}

fn is_real(z: &Complex64) -> bool {
    z.im.abs() <= REAL_ROOT_TOL * z.norm().max(1e-300)
}

/// Complex roots with positive imaginary part, as resonances. The second
/// element counts the real roots that carry no resonance.
pub fn roots_to_resonances(roots: &[Complex64], fs_hz: f64) -> (Vec<Resonance>, usize) {
    let mut out = Vec::new();
    let mut real = 0;
    for z in roots {
        if is_real(z) {
            real += 1;
        } else if z.im > 0.0 {
            out.push(Resonance::from_root(*z, fs_hz));
        }
    }
    sort_by_freq(&mut out);
    (out, real)
}

/// Counts of roots excluded from a [`ResonanceSet`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootDiagnostics {
    pub real_poles: usize,
    pub real_zeros: usize,
    pub cancelled_pairs: usize,
}

pub fn resonances(model: &ArmaxModel) -> Result<ResonanceSet> {
    Ok(resonances_with_diagnostics(model, 0.0)?.0)
}

/// Like [`resonances`], but first removes pole-zero pairs closer than
/// `cancel_tol` in the z-plane (they leave the transfer function unchanged).
pub fn resonances_with_diagnostics(
    model: &ArmaxModel,
    cancel_tol: f64,
) -> Result<(ResonanceSet, RootDiagnostics)> {
    let (mut poles, mut zeros) = poles_zeros(model)?;
    let mut cancelled = 0;
    if cancel_tol > 0.0 {
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for (i, p) in poles.iter().enumerate() {
                for (j, z) in zeros.iter().enumerate() {
                    let d = (p - z).norm();
                    if d < cancel_tol && best.map_or(true, |b| d < b.2) {
                        best = Some((i, j, d));
                    }
                }
            }
            match best {
                Some((i, j, _)) => {
                    poles.swap_remove(i);
                    zeros.swap_remove(j);
                    cancelled += 1;
                }
                None => break,
            }
        }
    }
    let (formants, real_poles) = roots_to_resonances(&poles, model.fs_hz);
    let (antiformants, real_zeros) = roots_to_resonances(&zeros, model.fs_hz);
    Ok((
        ResonanceSet {
            formants,
            antiformants,
        },
        RootDiagnostics {
            real_poles,
            real_zeros,
            cancelled_pairs: cancelled,
        },
    ))
}

fn expand_pairs(list: &[Resonance], fs_hz: f64) -> Result<Vec<f64>> {
    let nyquist = fs_hz / 2.0;
    let mut poly = vec![1.0];
    for res in list {
        if !(res.freq_hz > 0.0 && res.freq_hz < nyquist) {
            return Err(Error::NyquistViolation {
                freq_hz: res.freq_hz,
                nyquist_hz: nyquist,
            });
        }
        let z = res.root(fs_hz);
        let quad = [1.0, -2.0 * z.re, z.norm_sqr()];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, &v) in poly.iter().enumerate() {
            for (j, &w) in quad.iter().enumerate() {
                next[i + j] += v * w;
            }
        }
        poly = next;
    }
    Ok(poly)
}

/// Builds the all-real-coefficient filter whose poles/zeros are the
/// conjugate pairs of `res`, with `b0 = gain`.
pub fn resonance_to_model(res: &ResonanceSet, fs_hz: f64, gain: f64) -> Result<ArmaxModel> {
    let a = expand_pairs(&res.formants, fs_hz)?;
    let b = expand_pairs(&res.antiformants, fs_hz)?
        .into_iter()
        .map(|c| c * gain)
        .collect();
    ArmaxModel::new(a, b, fs_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pole_pair_frequency_and_bandwidth() {
        let fs = 16000.0;
        let z = Complex64::from_polar(1.0, PI / 4.0);
        let r = Resonance::from_root(z, fs);
        assert!((r.freq_hz - 2000.0).abs() < 1e-9);
        assert_eq!(r.bw_hz, 0.0);

        let r = Resonance::from_root(Complex64::from_polar(0.9, PI / 4.0), fs);
        let expected = -(0.9f64).ln() * fs / PI;
        assert!((r.bw_hz - expected).abs() < 1e-9);
        assert!((r.bw_hz - 536.5).abs() < 0.1);
    }

    #[test]
    fn empty_set_gives_pure_gain() {
        let m = resonance_to_model(&ResonanceSet::default(), 16000.0, 0.7).unwrap();
        assert_eq!(m.a, vec![1.0]);
        assert_eq!(m.b, vec![0.7]);
        assert_eq!(resonances(&m).unwrap(), ResonanceSet::default());
    }

    #[test]
    fn narrow_formant_approaches_unit_circle() {
        let set = ResonanceSet::new(vec![Resonance::new(2000.0, 1e-6)], vec![]);
        let m = resonance_to_model(&set, 16000.0, 1.0).unwrap();
        let (poles, _) = poles_zeros(&m).unwrap();
        assert_eq!(poles.len(), 2);
        for p in poles {
            assert!((p.norm() - 1.0).abs() < 1e-8);
            assert!((p.arg().abs() - PI / 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn nyquist_is_rejected() {
        let set = ResonanceSet::new(vec![Resonance::new(8000.0, 100.0)], vec![]);
        assert!(matches!(
            resonance_to_model(&set, 16000.0, 1.0),
            Err(Error::NyquistViolation { .. })
        ));
    }

    #[test]
    fn real_roots_are_not_resonances() {
        let m = ArmaxModel::new(vec![1.0, -0.9], vec![1.0, -1.0], 16000.0).unwrap();
        let (poles, zeros) = poles_zeros(&m).unwrap();
        assert!((poles[0].re - 0.9).abs() < 1e-15);
        assert!((zeros[0].re - 1.0).abs() < 1e-15);
        let (set, diag) = resonances_with_diagnostics(&m, 0.0).unwrap();
        assert!(set.formants.is_empty() && set.antiformants.is_empty());
        assert_eq!(diag.real_poles, 1);
        assert_eq!(diag.real_zeros, 1);
    }

    #[test]
    fn cancellation_removes_common_pairs() {
        let shared = Resonance::new(3000.0, 200.0);
        let set = ResonanceSet::new(
            vec![Resonance::new(700.0, 80.0), shared],
            vec![shared],
        );
        let m = resonance_to_model(&set, 16000.0, 1.0).unwrap();
        let (clean, diag) = resonances_with_diagnostics(&m, 1e-6).unwrap();
        assert_eq!(diag.cancelled_pairs, 2);
        assert_eq!(clean.formants.len(), 1);
        assert!(clean.antiformants.is_empty());
    }
}
