//! Closed-form tract identification: synthesize each syllable through its
//! formant table, fit with the true excitation, and list the recovered
//! resonances.

use armax_lf::dataset::{synth_utterance, CorpusSpec, DatasetKind, SyllableSpec};
use armax_lf::vocal_tract::{fit_armax, resonances};
use armax_lf::LfParams;

fn main() -> armax_lf::Result<()> {
    let mut spec = CorpusSpec::full(DatasetKind::One, 0);
    spec.duration_s = 0.1;
    let lf = LfParams::new(125.0, 0.3, 0.45, 0.05, 1.0);
    for s in SyllableSpec::all() {
        let (speech, truth) = synth_utterance(&s, &lf, &spec)?;
        let (p, q) = s.orders();
        let (model, diag) = fit_armax(&speech, truth.gsd.as_ref().unwrap(), p, q)?;
        let got = resonances(&model)?;
        println!("/{}/  orders ({p},{q})  residual {:.1e}", s.syllable.name(), diag.residual_power);
        let rows = got.formants.iter().zip(&s.resonances.formants).map(|r| ("F", r));
        let anti = got.antiformants.iter().zip(&s.resonances.antiformants).map(|r| ("A", r));
        for (i, (kind, (est, want))) in rows.chain(anti).enumerate() {
            println!(
                "  {kind}{:<2} {:8.2} Hz (table {:6.0})   bw {:7.2} Hz (table {:4.0})",
                i + 1,
                est.freq_hz,
                want.freq_hz,
                est.bw_hz,
                want.bw_hz
            );
        }
    }
    Ok(())
}
