use armax_lf::vocal_tract::{
    arma_filter, fit_armax, resonance_to_model, resonances, ArmaxModel, Resonance, ResonanceSet,
};
use armax_lf::{generate_train, LfParams, Waveform};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 16000.0;

/// `count` resonances at least 250 Hz apart, bandwidths 40..300 Hz.
fn random_resonances(rng: &mut ChaCha8Rng, count: usize) -> Vec<Resonance> {
    let mut out: Vec<Resonance> = Vec::new();
    while out.len() < count {
        let f = rng.gen_range(150.0..7500.0);
        if out.iter().all(|r| (r.freq_hz - f).abs() > 250.0) {
            out.push(Resonance::new(f, rng.gen_range(40.0..300.0)));
        }
    }
    out
}

fn lf_excitation(f0: f64, periods: usize) -> Waveform {
    let cycle = LfParams::new(f0, 0.35, 0.5, 0.04, 1.0);
    generate_train(&vec![cycle; periods], FS).unwrap()
}

fn impulse(len: usize) -> Waveform {
    let mut x = Waveform::zeros(len, FS);
    x.samples[0] = 1.0;
    x
}

fn poly_at(c: &[f64], w: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * w + v)
}

/// h[n] = sum_k c_k p_k^n with c_k = B(1/p_k) / prod_{i != k} (1 - p_i / p_k),
/// using the poles known from construction (no root finding involved).
fn partial_fraction_response(res: &ResonanceSet, b: &[f64], len: usize) -> Vec<f64> {
    let poles: Vec<Complex64> = res
        .formants
        .iter()
        .flat_map(|r| {
            let z = r.root(FS);
            [z, z.conj()]
        })
        .collect();
    let coef: Vec<Complex64> = poles
        .iter()
        .enumerate()
        .map(|(k, &pk)| {
            let den: Complex64 = poles
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, &pi)| 1.0 - pi / pk)
                .product();
            poly_at(b, 1.0 / pk) / den
        })
        .collect();
    (0..len)
        .map(|n| {
            poles
                .iter()
                .zip(&coef)
                .map(|(p, c)| c * p.powu(n as u32))
                .sum::<Complex64>()
                .re
        })
        .collect()
}

#[test]
fn filter_matches_partial_fractions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (p2, q2) in [(1, 0), (3, 1), (5, 2), (7, 3)] {
        let res = ResonanceSet::new(random_resonances(&mut rng, p2), random_resonances(&mut rng, q2));
        let m = resonance_to_model(&res, FS, 0.8).unwrap();
        let h = arma_filter(&impulse(400), &m, None).unwrap().signal;
        let want = partial_fraction_response(&res, &m.b, 400);
        let peak = want.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (n, (a, b)) in h.samples.iter().zip(&want).enumerate() {
            assert!((a - b).abs() < 1e-10 * peak, "({p2},{q2}) n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn exact_recovery_from_clean_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let p2 = rng.gen_range(1..=7);
        let q2 = rng.gen_range(0..=4);
        let truth = ResonanceSet::new(random_resonances(&mut rng, p2), random_resonances(&mut rng, q2));
        let m = resonance_to_model(&truth, FS, rng.gen_range(0.1..3.0)).unwrap();
        let u = lf_excitation(rng.gen_range(90.0..280.0), 6);
        let s = arma_filter(&u, &m, None).unwrap().signal;
        let (fit, diag) = fit_armax(&s, &u, m.p(), m.q()).unwrap();
        let rel = rel_err(&fit.stacked(), &m.stacked());
        assert!(rel < 1e-6, "trial {trial}: coefficient error {rel}");
        assert!(diag.residual_power < 1e-12 * s.energy());
        let got = resonances(&fit).unwrap();
        for (a, b) in got.formants.iter().zip(&truth.formants) {
            assert!((a.freq_hz - b.freq_hz).abs() < 1e-3 * b.freq_hz);
        }
        for (a, b) in got.antiformants.iter().zip(&truth.antiformants) {
            assert!((a.freq_hz - b.freq_hz).abs() < 1e-3 * b.freq_hz);
        }
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn nested_orders_never_increase_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = ResonanceSet::new(random_resonances(&mut rng, 4), random_resonances(&mut rng, 1));
    let m = resonance_to_model(&truth, FS, 1.0).unwrap();
    let u = lf_excitation(150.0, 5);
    let mut s = arma_filter(&u, &m, None).unwrap().signal;
    for v in &mut s.samples {
        *v += 1e-3 * rng.gen_range(-1.0..1.0);
    }
    let mut prev = f64::INFINITY;
    for q in 0..=6 {
        let (_, d) = fit_armax(&s, &u, 8, q).unwrap();
        assert!(d.residual_power <= prev * (1.0 + 1e-9), "q={q}: {} > {prev}", d.residual_power);
        prev = d.residual_power;
    }
    let mut prev = f64::INFINITY;
    for p in 2..=12 {
        let (_, d) = fit_armax(&s, &u, p, 2).unwrap();
        assert!(d.residual_power <= prev * (1.0 + 1e-9), "p={p}");
        prev = d.residual_power;
    }
}

#[test]
fn unstable_model_is_flagged() {
    let m = ArmaxModel::new(vec![1.0, -2.1, 1.1], vec![1.0], FS).unwrap();
    assert!(arma_filter(&impulse(10), &m, None).unwrap().unstable);
    let rate = Waveform::zeros(10, 8000.0);
    assert!(arma_filter(&rate, &m, None).is_err());
}

#[test]
fn nyquist_violation_is_rejected() {
    let bad = ResonanceSet::new(vec![Resonance::new(8000.0, 100.0)], vec![]);
    assert!(resonance_to_model(&bad, FS, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn resonance_round_trip(seed in any::<u64>(), p2 in 1usize..8, q2 in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = ResonanceSet::new(random_resonances(&mut rng, p2), random_resonances(&mut rng, q2));
        let back = resonances(&resonance_to_model(&res, FS, 1.3).unwrap()).unwrap();
        prop_assert_eq!(back.formants.len(), p2);
        prop_assert_eq!(back.antiformants.len(), q2);
        for (a, b) in back.formants.iter().chain(&back.antiformants).zip(res.formants.iter().chain(&res.antiformants)) {
            prop_assert!((a.freq_hz - b.freq_hz).abs() < 1e-6 * b.freq_hz);
            prop_assert!((a.bw_hz - b.bw_hz).abs() < 1e-6 * b.bw_hz.max(1.0));
        }
    }

    /// Scaling speech by g scales the numerator by g and leaves poles alone.
    #[test]
    fn fit_is_gain_equivariant(seed in any::<u64>(), g in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = ResonanceSet::new(random_resonances(&mut rng, 3), random_resonances(&mut rng, 1));
        let m = resonance_to_model(&res, FS, 1.0).unwrap();
        let u = lf_excitation(200.0, 4);
        let mut s = arma_filter(&u, &m, None).unwrap().signal;
        for v in &mut s.samples {
            *v += 1e-4 * rng.gen_range(-1.0..1.0);
        }
        let (a, _) = fit_armax(&s, &u, 6, 2).unwrap();
        let (b, _) = fit_armax(&s.scaled(g), &u, 6, 2).unwrap();
        for (x, y) in a.a.iter().zip(&b.a) {
            prop_assert!((x - y).abs() < 1e-7 * x.abs().max(1.0));
        }
        for (x, y) in a.b.iter().zip(&b.b) {
            prop_assert!((g * x - y).abs() < 1e-7 * (g * x).abs().max(g));
        }
    }
}
