use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Waveform};

use super::roots::poly_roots;

/// Pole-zero vocal tract `B(z) / A(z)` with `a[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxModel {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub fs_hz: f64,
}

impl ArmaxModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>, fs_hz: f64) -> Result<Self> {
        if a.is_empty() || a[0] != 1.0 {
            return Err(Error::InvalidInput("a[0] must be 1".into()));
        }
        if b.is_empty() {
            return Err(Error::InvalidInput("b must hold at least b0".into()));
        }
        Ok(Self { a, b, fs_hz })
    }

    pub fn identity(fs_hz: f64) -> Self {
        Self {
            a: vec![1.0],
            b: vec![1.0],
            fs_hz,
        }
    }

    /// Number of poles.
    pub fn p(&self) -> usize {
        self.a.len() - 1
    }

    /// Number of zeros.
    pub fn q(&self) -> usize {
        self.b.len() - 1
    }

    pub fn is_stable(&self) -> bool {
        match poly_roots(&self.a) {
            Ok(poles) => poles.iter().all(|z| z.norm() < 1.0),
            Err(_) => false,
        }
    }

    /// Stable model with the same magnitude response: every pole on or
    /// outside the unit circle is reflected to `1 / conj(z)` and the
    /// numerator rescaled by `1 / |z|` per reflected pole. Stable models come
    /// back unchanged.
    pub fn stabilized(&self) -> Result<Self> {
        let poles = poly_roots(&self.a)?;
        if poles.iter().all(|z| z.norm() < 1.0) {
            return Ok(self.clone());
        }
        let mut gain = 1.0;
        let mut inside: Vec<Complex64> = Vec::with_capacity(poles.len());
        for z in poles {
            let m = z.norm();
            if m < 1.0 {
                inside.push(z);
                continue;
            }
            gain /= m;
            let r = z / (m * m);
            // A pole exactly on the circle reflects onto itself.
            inside.push(if r.norm() >= 1.0 { r * (1.0 - 1e-6) } else { r });
        }
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for z in &inside {
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * z;
            }
            poly = next;
        }
        // Poles at the origin are trimmed by the root finder.
        let mut a: Vec<f64> = poly.iter().map(|c| c.re).collect();
        a.resize(self.a.len(), 0.0);
        let b = self.b.iter().map(|c| c * gain).collect();
        Self::new(a, b, self.fs_hz)
    }

    /// Coefficient vector `[a1..ap, b0..bq]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.a[1..].iter().chain(&self.b).copied().collect()
    }
}

/// Delay line of a direct-form filter: most recent sample first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub past_out: Vec<f64>,
    pub past_in: Vec<f64>,
}

impl FilterState {
    /// State holding the samples just before `start` (zeros before index 0).
    pub fn from_history(output: &[f64], input: &[f64], start: usize, p: usize, q: usize) -> Self {
        let take = |x: &[f64], k: usize| -> Vec<f64> {
            (1..=k)
                .map(|d| if d <= start { x[start - d] } else { 0.0 })
                .collect()
        };
        Self {
            past_out: take(output, p),
            past_in: take(input, q),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub signal: Waveform,
    pub state: FilterState,
    /// Set when some pole lies on or outside the unit circle.
    pub unstable: bool,
}

/// `s(n) = -sum a_i s(n-i) + sum b_j u(n-j)`.
pub fn arma_filter(
    excitation: &Waveform,
    model: &ArmaxModel,
    initial: Option<&FilterState>,
) -> Result<FilterOutput> {
    if excitation.fs_hz != model.fs_hz {
        return Err(Error::SampleRateMismatch(excitation.fs_hz, model.fs_hz));
    }
    let p = model.p();
    let q = model.q();
    let mut out_hist = vec![0.0; p];
    let mut in_hist = vec![0.0; q];
    if let Some(st) = initial {
        for (d, v) in out_hist.iter_mut().zip(&st.past_out) {
            *d = *v;
        }
        for (d, v) in in_hist.iter_mut().zip(&st.past_in) {
            *d = *v;
        }
    }
    let mut y = Vec::with_capacity(excitation.len());
    for &u in &excitation.samples {
        let mut acc = model.b[0] * u;
        for j in 1..=q {
            acc += model.b[j] * in_hist[j - 1];
        }
        for i in 1..=p {
            acc -= model.a[i] * out_hist[i - 1];
        }
        if p > 0 {
            out_hist.rotate_right(1);
            out_hist[0] = acc;
        }
        if q > 0 {
            in_hist.rotate_right(1);
            in_hist[0] = u;
        }
        y.push(acc);
    }
    Ok(FilterOutput {
        signal: Waveform::new(y, excitation.fs_hz),
        state: FilterState {
            past_out: out_hist,
            past_in: in_hist,
        },
        unstable: !model.is_stable(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `||e||^2` over the fitted window.
    pub residual_power: f64,
    /// Ratio of largest to smallest diagonal magnitude of the triangular factor.
    pub condition_estimate: f64,
    pub window_len: usize,
}

/// Relative Tikhonov weight, applied only when the plain least-squares
/// problem is numerically rank-deficient.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Pivot ratio below which the regressor matrix counts as rank-deficient.
const RANK_TOL: f64 = 1e-12;

/// Smallest-to-largest pivot ratio below which the excitation delays are
/// treated as collinear.
const COLLINEAR_PIVOT_RATIO: f64 = 1e-10;

/// Least-squares fit of `(a, b)` over all of `speech`/`excitation`; samples
/// before index 0 are taken as zero.
pub fn fit_armax(
    speech: &Waveform,
    excitation: &Waveform,
    p: usize,
    q: usize,
) -> Result<(ArmaxModel, FitDiagnostics)> {
    if speech.fs_hz != excitation.fs_hz {
        return Err(Error::SampleRateMismatch(speech.fs_hz, excitation.fs_hz));
    }
    if speech.len() != excitation.len() {
        return Err(Error::LengthMismatch(speech.len(), excitation.len()));
    }
    fit_armax_span(
        &speech.samples,
        &excitation.samples,
        0..speech.len(),
        p,
        q,
        speech.fs_hz,
        DEFAULT_RIDGE,
    )
}

/// Fit over the rows `span`, reading delayed samples from before
/// `span.start` when they exist. This lets a window in the middle of an
/// utterance be fitted against its true history.
pub fn fit_armax_span(
    speech: &[f64],
    excitation: &[f64],
    span: Range<usize>,
    p: usize,
    q: usize,
    fs_hz: f64,
    ridge: f64,
) -> Result<(ArmaxModel, FitDiagnostics)> {
    if speech.len() != excitation.len() {
        return Err(Error::LengthMismatch(speech.len(), excitation.len()));
    }
    if span.end > speech.len() || span.start > span.end {
        return Err(Error::InvalidInput(format!(
            "span {span:?} outside signal of {} samples",
            speech.len()
        )));
    }
    if p == 0 {
        return Err(Error::InvalidInput("at least one pole is required".into()));
    }
    let n = span.len();
    if n <= p + q + 2 {
        return Err(Error::OrderTooLarge { n, p, q });
    }
    let cols = p + q + 1;
    let delayed = |x: &[f64], row: usize, d: usize| -> f64 {
        let idx = span.start + row;
        if idx >= d {
            x[idx - d]
        } else {
            0.0
        }
    };

    // Excitation delays alone must be linearly independent.
    let u_block = DMatrix::from_fn(n, q + 1, |r, j| delayed(excitation, r, j));
    let u_pivots = u_block.qr().r().diagonal().map(f64::abs);
    let u_max = u_pivots.max();
    if u_max == 0.0 {
        return Err(Error::SingularNormalEquations(
            "excitation is identically zero over the window".into(),
        ));
    }
    if u_pivots.min() / u_max < COLLINEAR_PIVOT_RATIO {
        return Err(Error::SingularNormalEquations(
            "excitation is collinear with its own delays".into(),
        ));
    }

    // F = [S | -U], e = s0 + F h.
    let f = DMatrix::from_fn(n, cols, |r, c| {
        if c < p {
            delayed(speech, r, c + 1)
        } else {
            -delayed(excitation, r, c - p)
        }
    });
    let s0 = DVector::from_fn(n, |r, _| delayed(speech, r, 0));

    let (h, condition_estimate) = match solve_ls(&f, &s0, 0.0) {
        Some((h, cond)) if cond < 1.0 / RANK_TOL => (h, cond),
        // Rank-deficient (e.g. over-parameterised exact fits): fall back to
        // the ridge, which picks the minimum-norm-like solution.
        _ => {
            let mean_energy =
                f.column_iter().map(|c| c.norm_squared()).sum::<f64>() / cols as f64;
            solve_ls(&f, &s0, ridge * mean_energy).ok_or_else(|| {
                Error::SingularNormalEquations("triangular factor is singular".into())
            })?
        }
    };
    let e = &s0 + &f * &h;
    let mut a = Vec::with_capacity(p + 1);
    a.push(1.0);
    a.extend(h.iter().take(p));
    let b: Vec<f64> = h.iter().skip(p).copied().collect();
    Ok((
        ArmaxModel { a, b, fs_hz },
        FitDiagnostics {
            residual_power: e.norm_squared(),
            condition_estimate,
            window_len: n,
        },
    ))
}

/// Solves `min ||s0 + F h||^2 + lambda ||h||^2` by QR on the augmented
/// system. Returns the solution and the pivot-ratio condition estimate.
fn solve_ls(f: &DMatrix<f64>, s0: &DVector<f64>, lambda: f64) -> Option<(DVector<f64>, f64)> {
    let (n, cols) = f.shape();
    let extra = if lambda > 0.0 { cols } else { 0 };
    let mut aug = DMatrix::zeros(n + extra, cols);
    aug.view_mut((0, 0), (n, cols)).copy_from(f);
    let mut rhs = DVector::zeros(n + extra);
    rhs.rows_mut(0, n).copy_from(&(-s0));
    for c in 0..extra {
        aug[(n + c, c)] = lambda.sqrt();
    }
    let qr = aug.qr();
    let r = qr.r();
    let qt_rhs = qr.q().transpose() * rhs;
    let h = r.solve_upper_triangular(&qt_rhs)?;
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let diag = r.diagonal().map(f64::abs);
    Some((h, diag.max() / diag.min()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(n: usize) -> Waveform {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        Waveform::new(x, 16000.0)
    }

    fn magnitude(m: &ArmaxModel, w: f64) -> f64 {
        let eval = |c: &[f64]| -> Complex64 {
            c.iter()
                .enumerate()
                .map(|(k, v)| Complex64::from_polar(*v, -w * k as f64))
                .sum()
        };
        (eval(&m.b) / eval(&m.a)).norm()
    }

    #[test]
    fn stabilizing_reflects_poles_and_keeps_magnitude() {
        // Poles at 1.05 e^{+-j0.6} and 0.5 (plus one at the origin), one zero.
        let z = Complex64::from_polar(1.05, 0.6);
        let quad = [1.0, -2.0 * z.re, z.norm_sqr()];
        let a = vec![1.0, quad[1] - 0.5, quad[2] - 0.5 * quad[1], -0.5 * quad[2], 0.0];
        let m = ArmaxModel::new(a, vec![0.7, -0.2], 16000.0).unwrap();
        assert!(!m.is_stable());
        let s = m.stabilized().unwrap();
        assert!(s.is_stable());
        assert_eq!(s.a.len(), m.a.len());
        for k in 0..50 {
            let w = 0.06 * k as f64 + 0.01;
            let (x, y) = (magnitude(&m, w), magnitude(&s, w));
            assert!((x - y).abs() < 1e-9 * x, "w={w}: {x} vs {y}");
        }
        assert_eq!(s.stabilized().unwrap(), s);
    }

    #[test]
    fn identity_and_gain() {
        let x = Waveform::new(vec![0.3, -1.0, 2.5, 0.0], 16000.0);
        let y = arma_filter(&x, &ArmaxModel::identity(16000.0), None).unwrap();
        assert_eq!(y.signal, x);
        let m = ArmaxModel::new(vec![1.0], vec![0.5], 16000.0).unwrap();
        let y = arma_filter(&x, &m, None).unwrap();
        assert_eq!(y.signal, x.scaled(0.5));
    }

    #[test]
    fn one_pole_decay() {
        let m = ArmaxModel::new(vec![1.0, -0.9], vec![1.0], 16000.0).unwrap();
        let y = arma_filter(&impulse(20), &m, None).unwrap();
        for (n, v) in y.signal.samples.iter().enumerate() {
            assert!((v - 0.9f64.powi(n as i32)).abs() < 1e-12);
        }
        assert!(!y.unstable);
    }

    #[test]
    fn unstable_filter_is_flagged() {
        let m = ArmaxModel::new(vec![1.0, -1.1], vec![1.0], 16000.0).unwrap();
        assert!(arma_filter(&impulse(5), &m, None).unwrap().unstable);
    }

    #[test]
    fn state_carries_across_blocks() {
        let m = ArmaxModel::new(vec![1.0, -1.2, 0.5], vec![1.0, 0.4, -0.2], 16000.0).unwrap();
        let x = Waveform::new((0..64).map(|i| ((i * 7 % 13) as f64) - 6.0).collect(), 16000.0);
        let whole = arma_filter(&x, &m, None).unwrap().signal;
        let first = arma_filter(&x.slice(0..30), &m, None).unwrap();
        let second = arma_filter(&x.slice(30..64), &m, Some(&first.state)).unwrap();
        let joined: Vec<f64> = first.signal.samples.into_iter().chain(second.signal.samples).collect();
        assert_eq!(joined, whole.samples);

        let hist = FilterState::from_history(&whole.samples, &x.samples, 30, 2, 2);
        assert_eq!(hist, arma_filter(&x.slice(0..30), &m, None).unwrap().state);
    }

    #[test]
    fn rate_mismatch() {
        let m = ArmaxModel::identity(8000.0);
        assert!(matches!(
            arma_filter(&impulse(3), &m, None),
            Err(Error::SampleRateMismatch(..))
        ));
    }

    #[test]
    fn gain_recovery() {
        let u = Waveform::new((0..200).map(|i| ((i as f64) * 0.37).sin() + 0.1 * (i % 7) as f64).collect(), 16000.0);
        let s = u.scaled(0.5);
        let (m, d) = fit_armax(&s, &u, 1, 0).unwrap();
        assert!((m.b[0] - 0.5).abs() < 1e-9);
        assert!(m.a[1].abs() < 1e-9);
        assert!(d.residual_power < 1e-18);
        assert_eq!(d.window_len, 200);
    }

    #[test]
    fn order_too_large() {
        let u = Waveform::new(vec![1.0; 10], 16000.0);
        assert!(matches!(
            fit_armax(&u, &u, 4, 4),
            Err(Error::OrderTooLarge { .. })
        ));
    }

    #[test]
    fn zero_or_collinear_excitation() {
        let s = Waveform::new((0..100).map(|i| (i as f64).sin()).collect(), 16000.0);
        let zero = Waveform::zeros(100, 16000.0);
        assert!(matches!(
            fit_armax(&s, &zero, 2, 1),
            Err(Error::SingularNormalEquations(_))
        ));
        let constant = vec![1.0; 200];
        let speech: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).cos()).collect();
        assert!(matches!(
            fit_armax_span(&speech, &constant, 50..200, 2, 2, 16000.0, DEFAULT_RIDGE),
            Err(Error::SingularNormalEquations(_))
        ));
    }
}
