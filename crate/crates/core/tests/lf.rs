use armax_lf::{generate_cycle, generate_train, solve_direct, DiscreteGrid, LfParams};
use proptest::prelude::*;

const FS: f64 = 16000.0;

struct Golden {
    lambda: f64,
    mu: f64,
    samples: Vec<f64>,
}

fn golden() -> Golden {
    let text = include_str!("fixtures/lf_golden.txt");
    let mut lambda = None;
    let mut mu = None;
    let mut samples = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                match kv.split_once('=') {
                    Some(("lambda", v)) => lambda = v.parse().ok(),
                    Some(("mu", v)) => mu = v.parse().ok(),
                    _ => {}
                }
            }
        } else if !line.trim().is_empty() {
            samples.push(line.trim().parse().unwrap());
        }
    }
    Golden {
        lambda: lambda.unwrap(),
        mu: mu.unwrap(),
        samples,
    }
}

fn reference() -> LfParams {
    LfParams {
        t0_s: 0.01,
        tp: 0.4,
        te: 0.55,
        ta: 0.05,
        tc: 1.0,
        ee: 1.0,
    }
}

#[test]
fn matches_high_precision_transcription() {
    let g = golden();
    assert_eq!(g.samples.len(), 160);
    let d = solve_direct(&reference(), FS).unwrap();
    assert!((d.lambda - g.lambda).abs() < 1e-12 * g.lambda.abs().max(1.0), "{} {}", d.lambda, g.lambda);
    assert!((d.mu - g.mu).abs() < 1e-12, "{} {}", d.mu, g.mu);
    let cycle = generate_cycle(&reference(), FS).unwrap();
    for (n, (a, b)) in cycle.samples.iter().zip(&g.samples).enumerate() {
        assert!((a - b).abs() < 1e-10, "sample {n}: {a} vs {b}");
    }
}

#[test]
fn implicit_equations_at_reference() {
    let d = solve_direct(&reference(), FS).unwrap();
    assert!(d.return_phase_residual().abs() < 1e-10);
    assert!(d.area_residual().abs() < 1e-10);
    // The five constraints of the direct form.
    let g = d.grid;
    assert!((d.omega - std::f64::consts::PI / g.np as f64).abs() < 1e-15);
    let e1 = -1.0 / ((d.lambda * g.ne as f64).exp() * (d.omega * g.ne as f64).sin());
    assert!((d.e1 - e1).abs() < 1e-12 * e1.abs());
    assert!((d.e2 - 1.0 / (d.mu * g.na as f64)).abs() < 1e-12 * d.e2);
}

/// Sign-change sweep plus bisection, independent of the library solver.
fn bisect_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let xs: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let (mut a, mut b) = xs
        .windows(2)
        .map(|w| (w[0], w[1]))
        .find(|&(a, b)| f(a).signum() != f(b).signum())
        .expect("sign change");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m).signum() == f(a).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn mu_matches_bisection_sweep() {
    for (te, ta) in [(0.55, 0.05), (0.8, 0.03), (0.4, 0.15), (0.9, 0.06)] {
        let p = LfParams { te, ta, tp: 0.7 * te, ..reference() };
        let d = solve_direct(&p, FS).unwrap();
        let g = d.grid;
        let (na, len) = (g.na as f64, (g.nc - g.ne) as f64);
        let mu = bisect_root(|m| m * na - 1.0 + (-m * len).exp(), 1e-6, 10.0, 100_000);
        assert!((d.mu - mu).abs() < 1e-9 * mu, "{te} {ta}: {} {mu}", d.mu);
    }
}

#[test]
fn closure_sample_is_minus_ee() {
    let p = LfParams { ee: 2.5, ..reference() };
    let d = solve_direct(&p, FS).unwrap();
    let c = generate_cycle(&p, FS).unwrap();
    let at = c.samples[d.grid.ne];
    assert!((at + 2.5).abs() <= 0.02 * 2.5, "{at}");
    // The closure sample is also the cycle minimum.
    let min = c.samples.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((min - at).abs() < 1e-12);
}

#[test]
fn train_concatenates_cycles() {
    let a = reference();
    let b = LfParams { t0_s: 0.008, ..a };
    let t = generate_train(&[a, b, a], FS).unwrap();
    assert_eq!(t.len(), 160 + 128 + 160);
    let ca = generate_cycle(&a, FS).unwrap();
    assert_eq!(&t.samples[288..], &ca.samples[..]);
}

fn valid_params() -> impl Strategy<Value = LfParams> {
    (80.0..400.0f64, 0.3..0.9f64, 0.55..0.95f64, 0.005..0.2f64, 0.1..10.0f64).prop_filter_map(
        "return phase must fit",
        |(f0, te, ratio, ta_frac, ee)| {
            let tp = ratio * te;
            // ta as a fraction of the time left after te, keeping a margin.
            let ta = ta_frac * (1.0 - te);
            let p = LfParams::new(f0, tp, te, ta, ee);
            let g = DiscreteGrid::new(&p, FS).ok()?;
            (g.na + g.ne < g.nc && g.ne < 2 * g.np).then_some(p)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn constraints_hold_for_valid_params(p in valid_params()) {
        let d = solve_direct(&p, FS).unwrap();
        let n0 = d.grid.n0 as f64;
        prop_assert!(d.return_phase_residual().abs() < 1e-9);
        prop_assert!(d.area_residual().abs() / (p.ee * n0) < 1e-6);
        let c = generate_cycle(&p, FS).unwrap();
        prop_assert_eq!(c.len(), d.grid.n0);
        prop_assert!(c.samples[d.grid.nc..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_ee_doubles_every_sample(p in valid_params()) {
        let a = generate_cycle(&p, FS).unwrap();
        let b = generate_cycle(&LfParams { ee: 2.0 * p.ee, ..p }, FS).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            prop_assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(p.ee));
        }
    }

    /// Sampling 4x finer and keeping every 4th sample reproduces the cycle.
    /// Parameters sit on the coarse grid so both rates share the same
    /// landmark instants.
    #[test]
    fn finer_sampling_agrees(
        n0 in 60usize..200,
        te in 0.4..0.85f64,
        ratio in 0.6..0.85f64,
        ta in 0.02..0.08f64,
    ) {
        let snap = |v: f64| (v * n0 as f64).round() / n0 as f64;
        let p = LfParams {
            t0_s: n0 as f64 / FS,
            tp: snap(ratio * te),
            te: snap(te),
            ta: snap(ta),
            tc: 1.0,
            ee: 1.0,
        };
        let coarse = generate_cycle(&p, FS).unwrap();
        let fine = generate_cycle(&p, 4.0 * FS).unwrap();
        prop_assert_eq!(fine.len(), 4 * coarse.len());
        let err = coarse
            .samples
            .iter()
            .zip(fine.samples.iter().step_by(4))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(err < 0.01, "max deviation {}", err);
    }
}
