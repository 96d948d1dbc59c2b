//! GCI detection accuracy on synthetic vowels across the pitch grid.

use armax_lf::dataset::{synth_utterance, CorpusSpec, DatasetKind, Syllable, SyllableSpec};
use armax_lf::frontend::detect_gci;
use armax_lf::LfParams;

fn main() -> armax_lf::Result<()> {
    let fs = 16000.0;
    let mut spec = CorpusSpec::full(DatasetKind::One, 0);
    spec.duration_s = 0.5;
    println!("{:<6}{:>8}{:>10}{:>10}", "syl", "F0", "detected", "hit rate");
    for syl in Syllable::ALL {
        for f0 in [80.0, 135.0, 190.0, 245.0, 300.0] {
            let lf = LfParams::new(f0, 0.33, 0.5, 0.05, 1.0);
            let (speech, truth) = synth_utterance(&SyllableSpec::table(syl), &lf, &spec)?;
            let track = detect_gci(&speech, (60.0, 400.0))?;
            let tol = 0.25 * fs / f0;
            let hits = truth
                .closures
                .iter()
                .filter(|&&c| track.instants.iter().any(|&d| (d as f64 - c as f64).abs() <= tol))
                .count();
            println!(
                "{:<6}{f0:>8.0}{:>10}{:>9.1}%",
                syl.name(),
                track.len(),
                100.0 * hits as f64 / truth.closures.len() as f64
            );
        }
    }
    Ok(())
}
