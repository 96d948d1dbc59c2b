//! Liljencrants-Fant (LF) model of the glottal source derivative.
//!
//! One fundamental period is described by the opening phase, an exponentially
//! growing sinusoid that ends at the main excitation instant `te`, and an
//! exponential return phase that reaches zero at `tc`. The direct synthesis
//! constants (`e1`, `e2`, `lambda`, `mu`, `omega`) are obtained from the time
//! parameters by solving two scalar implicit equations on the sampled grid.
//!
//! All rates in [`LfDirect`] are expressed per sample (the signal is
//! `u(n) = e1 * exp(lambda * n) * sin(omega * n)` on the opening phase).

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Waveform};

/// Minimum number of samples in one fundamental period.
pub const MIN_PERIOD_SAMPLES: f64 = 16.0;

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_ITERS: usize = 200;

/// Time parameters of one LF cycle. `tp`, `te`, `ta`, `tc` are fractions of
/// the period `t0_s`; `ee` is the magnitude of the negative peak at `te`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfParams {
    pub t0_s: f64,
    pub tp: f64,
    pub te: f64,
    pub ta: f64,
    pub tc: f64,
    pub ee: f64,
}

impl LfParams {
    /// Parameters with `tc = 1` for a cycle at fundamental frequency `f0_hz`.
    pub fn new(f0_hz: f64, tp: f64, te: f64, ta: f64, ee: f64) -> Self {
        Self {
            t0_s: 1.0 / f0_hz,
            tp,
            te,
            ta,
            tc: 1.0,
            ee,
        }
    }

    pub fn with_period_samples(mut self, n0: usize, fs_hz: f64) -> Self {
        self.t0_s = n0 as f64 / fs_hz;
        self
    }

    pub fn f0_hz(&self) -> f64 {
        1.0 / self.t0_s
    }

    /// Checks the ordering constraints that do not need the solver.
    ///
    /// `te + ta < tc` is left to [`solve_direct`], which reports it as
    /// [`Error::NoRoot`] because the return-phase equation has no positive root.
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{msg}: {self:?}")))
            }
        };
        ok(self.t0_s.is_finite() && self.t0_s > 0.0, "t0 must be positive")?;
        ok(self.ee.is_finite() && self.ee > 0.0, "ee must be positive")?;
        ok(self.tp > 0.0, "tp must be positive")?;
        ok(self.tp < self.te, "tp must precede te")?;
        ok(self.te < self.tc, "te must precede tc")?;
        ok(self.tc <= 1.0, "tc must not exceed the period")?;
        ok(self.ta > 0.0, "ta must be positive")?;
        Ok(())
    }
}

/// Sample counts of the LF time parameters on a given sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteGrid {
    pub n0: usize,
    pub np: usize,
    pub ne: usize,
    pub na: usize,
    pub nc: usize,
}

/// Rounds half away from zero and converts to a sample count.
fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

impl DiscreteGrid {
    pub fn new(params: &LfParams, fs_hz: f64) -> Result<Self> {
        let period = params.t0_s * fs_hz;
        if !(period >= MIN_PERIOD_SAMPLES) {
            return Err(Error::InvalidParams(format!(
                "period of {period:.2} samples is below {MIN_PERIOD_SAMPLES}"
            )));
        }
        let grid = Self {
            n0: round_count(period),
            np: round_count(params.tp * period),
            ne: round_count(params.te * period),
            na: round_count(params.ta * period),
            nc: round_count(params.tc * period),
        };
        if grid.np == 0 || grid.np >= grid.ne || grid.ne >= grid.nc || grid.nc > grid.n0 {
            return Err(Error::DegenerateGrid(format!(
                "need 0 < np < ne < nc <= n0, got {grid:?}"
            )));
        }
        if grid.na == 0 {
            return Err(Error::DegenerateGrid(format!(
                "return phase rounds to zero samples: {grid:?}"
            )));
        }
        Ok(grid)
    }
}

/// Direct synthesis constants of one cycle (per-sample units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfDirect {
    pub e1: f64,
    pub e2: f64,
    pub lambda: f64,
    pub mu: f64,
    pub omega: f64,
    pub grid: DiscreteGrid,
    pub ee: f64,
}

impl LfDirect {
    pub fn lambda_per_s(&self, fs_hz: f64) -> f64 {
        self.lambda * fs_hz
    }

    pub fn mu_per_s(&self, fs_hz: f64) -> f64 {
        self.mu * fs_hz
    }

    pub fn omega_rad_per_s(&self, fs_hz: f64) -> f64 {
        self.omega * fs_hz
    }

    /// Sample `n` of the cycle, `0 <= n < n0`.
    pub fn sample(&self, n: usize) -> f64 {
        let g = &self.grid;
        if n < g.ne {
            let x = n as f64;
            self.e1 * (self.lambda * x).exp() * (self.omega * x).sin()
        } else if n < g.nc {
            let tail = (-self.mu * (g.nc - g.ne) as f64).exp();
            -self.e2 * ((-self.mu * (n - g.ne) as f64).exp() - tail)
        } else {
            0.0
        }
    }

    /// `mu * na - (1 - exp(-mu * (nc - ne)))`.
    pub fn return_phase_residual(&self) -> f64 {
        let g = &self.grid;
        return_phase_equation(self.mu, g.na as f64, (g.nc - g.ne) as f64)
    }

    /// Sum of one cycle; zero when the area balance holds.
    pub fn area_residual(&self) -> f64 {
        (0..self.grid.n0).map(|n| self.sample(n)).sum()
    }
}

fn return_phase_equation(mu: f64, na: f64, d: f64) -> f64 {
    mu * na - 1.0 + (-mu * d).exp()
}

/// Safeguarded Newton iteration inside a sign-changing bracket.
fn bracketed_newton(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    what: &'static str,
) -> Result<f64> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::NoRoot { what });
    }
    if flo > 0.0 {
        std::mem::swap(&mut lo, &mut hi);
    }
    // f(lo) < 0 < f(hi) from here on; lo may exceed hi.
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERS {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            return Err(Error::NoRoot { what });
        }
        if fx.abs() <= RESIDUAL_TOL {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let inside = (newton - lo) * (newton - hi) < 0.0;
        let next = if dfx != 0.0 && newton.is_finite() && inside {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x {
            // No further progress is representable.
            return Ok(x);
        }
        x = next;
    }
    let (fx, _) = f(x);
    if fx.abs() <= 1e3 * RESIDUAL_TOL {
        Ok(x)
    } else {
        Err(Error::NoRoot { what })
    }
}

fn solve_mu(grid: &DiscreteGrid) -> Result<f64> {
    let na = grid.na as f64;
    let d = (grid.nc - grid.ne) as f64;
    if na >= d {
        return Err(Error::NoRoot { what: "mu" });
    }
    let f = |mu: f64| {
        let e = (-mu * d).exp();
        (mu * na - 1.0 + e, na - d * e)
    };
    bracketed_newton(f, 1e-6 / d, 1e6 / d, "mu")
}

/// Solves every direct synthesis constant for `params` sampled at `fs_hz`.
pub fn solve_direct(params: &LfParams, fs_hz: f64) -> Result<LfDirect> {
    params.validate()?;
    let grid = DiscreteGrid::new(params, fs_hz)?;
    // Both implicit equations are homogeneous in ee; solve at unit amplitude.
    let ee = params.ee;
    let omega = std::f64::consts::PI / grid.np as f64;
    let sin_e = (omega * grid.ne as f64).sin();
    if sin_e.abs() < 1e-9 {
        return Err(Error::InvalidParams(format!(
            "sin(omega * ne) vanishes for {grid:?}"
        )));
    }
    let mu = solve_mu(&grid)?;
    let unit_e2 = 1.0 / (mu * grid.na as f64);

    let d = grid.nc - grid.ne;
    let tail = (-mu * d as f64).exp();
    let return_sum: f64 = (0..d)
        .map(|k| -unit_e2 * ((-mu * k as f64).exp() - tail))
        .sum();

    // Opening-phase sum with e1 eliminated: -ee/sin_e * sum exp(lambda (n - ne)) sin(omega n).
    let ne = grid.ne;
    let area = |lambda: f64| {
        let mut s = 0.0;
        let mut ds = 0.0;
        for n in 0..ne {
            let lag = n as f64 - ne as f64;
            let w = (lambda * lag).exp() * (omega * n as f64).sin();
            s += w;
            ds += lag * w;
        }
        let scale = -1.0 / sin_e;
        (scale * s + return_sum, scale * ds)
    };

    // Grow a symmetric bracket until the area balance changes sign.
    let limit = 700.0 / ne as f64;
    let mut half = 1.0 / grid.n0 as f64;
    let bracket = loop {
        let (flo, _) = area(-half);
        let (fhi, _) = area(half);
        if flo.is_finite() && fhi.is_finite() && flo.signum() != fhi.signum() {
            break (-half, half);
        }
        half *= 2.0;
        if half > limit {
            return Err(Error::NoRoot { what: "lambda" });
        }
    };
    let lambda = bracketed_newton(area, bracket.0, bracket.1, "lambda")?;
    let e1 = -ee / ((lambda * ne as f64).exp() * sin_e);
    let e2 = ee / (mu * grid.na as f64);

    Ok(LfDirect {
        e1,
        e2,
        lambda,
        mu,
        omega,
        grid,
        ee,
    })
}

/// One period of the glottal source derivative, `n0` samples long.
pub fn generate_cycle(params: &LfParams, fs_hz: f64) -> Result<Waveform> {
    let direct = solve_direct(params, fs_hz)?;
    Ok(Waveform::new(
        (0..direct.grid.n0).map(|n| direct.sample(n)).collect(),
        fs_hz,
    ))
}

/// Concatenation of one cycle per entry of `cycles`.
pub fn generate_train(cycles: &[LfParams], fs_hz: f64) -> Result<Waveform> {
    if cycles.is_empty() {
        return Err(Error::InvalidInput("empty list of LF cycles".into()));
    }
    let mut samples = Vec::new();
    for p in cycles {
        samples.extend(generate_cycle(p, fs_hz)?.samples);
    }
    Ok(Waveform::new(samples, fs_hz))
}
