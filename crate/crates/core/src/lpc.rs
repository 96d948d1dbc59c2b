//! Autocorrelation linear prediction.

use crate::{Error, Result};

/// Periodic Hann window of length `n` (sums to a constant under 50% overlap).
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                0.0
            } else {
                x[..x.len() - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Levinson-Durbin recursion. Returns the inverse filter `[1, a1, .., ap]`
/// and the final prediction error power.
pub fn levinson(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if r.len() <= order {
        return Err(Error::InvalidInput(format!(
            "need {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(Error::DegenerateSignal("zero-energy autocorrelation".into()));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            // Perfectly predictable: stop here, higher coefficients stay zero.
            err = 0.0;
            break;
        }
    }
    Ok((a, err))
}

/// LP inverse filter of `frame` after applying `window` (if any).
pub fn lpc(frame: &[f64], order: usize, window: Option<&[f64]>) -> Result<Vec<f64>> {
    let windowed: Vec<f64> = match window {
        Some(w) => frame.iter().zip(w).map(|(x, w)| x * w).collect(),
        None => frame.to_vec(),
    };
    let mut r = autocorrelation(&windowed, order);
    // Slight lag window keeps the recursion stable on nearly periodic frames.
    r[0] *= 1.0 + 1e-9;
    Ok(levinson(&r, order)?.0)
}

/// Applies the FIR `coeffs` to `x[start..end]`, reading history before `start`
/// (zeros before index 0).
pub fn fir_segment(coeffs: &[f64], x: &[f64], start: usize, end: usize) -> Vec<f64> {
    (start..end)
        .map(|n| {
            coeffs
                .iter()
                .enumerate()
                .filter(|(k, _)| *k <= n)
                .map(|(k, c)| c * x[n - k])
                .sum()
        })
        .collect()
}

pub fn fir(coeffs: &[f64], x: &[f64]) -> Vec<f64> {
    fir_segment(coeffs, x, 0, x.len())
}

/// First-order leaky integrator `y(n) = x(n) + rho * y(n - 1)`.
pub fn leaky_integrate(x: &[f64], rho: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &v in x {
        prev = v + rho * prev;
        y.push(prev);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_ar2_process() {
        // x(n) = 1.3 x(n-1) - 0.6 x(n-2) + impulse train
        let mut x = vec![0.0; 4000];
        for n in 0..x.len() {
            let drive = if n % 97 == 0 { 1.0 } else { 0.0 };
            let x1 = if n >= 1 { x[n - 1] } else { 0.0 };
            let x2 = if n >= 2 { x[n - 2] } else { 0.0 };
            x[n] = 1.3 * x1 - 0.6 * x2 + drive;
        }
        let a = lpc(&x, 2, None).unwrap();
        assert!((a[1] + 1.3).abs() < 1e-2, "{a:?}");
        assert!((a[2] - 0.6).abs() < 1e-2, "{a:?}");
    }

    #[test]
    fn silence_is_degenerate() {
        assert!(matches!(
            lpc(&[0.0; 64], 4, None),
            Err(Error::DegenerateSignal(_))
        ));
    }

    #[test]
    fn hann_overlap_adds_to_one() {
        let w = hann(64);
        for i in 0..32 {
            assert!((w[i] + w[i + 32] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integrator_inverts_leaky_difference() {
        let x = [1.0, -0.5, 0.25, 2.0];
        let d = fir(&[1.0, -0.99], &x);
        let y = leaky_integrate(&d, 0.99);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
