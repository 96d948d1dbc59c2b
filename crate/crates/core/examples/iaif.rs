//! Glottal source estimation by inverse filtering, compared with the true source.

use armax_lf::dataset::{synth_utterance, CorpusSpec, DatasetKind, Syllable, SyllableSpec};
use armax_lf::frontend::iaif::{DEFAULT_GLOTTAL_ORDER, DEFAULT_VT_ORDER};
use armax_lf::frontend::{aligned_correlation, iaif};
use armax_lf::LfParams;

fn main() -> armax_lf::Result<()> {
    let mut spec = CorpusSpec::full(DatasetKind::One, 0);
    spec.duration_s = 0.5;
    for syl in Syllable::ALL {
        for f0 in [100.0, 200.0] {
            let lf = LfParams::new(f0, 0.33, 0.5, 0.05, 1.0);
            let (speech, truth) = synth_utterance(&SyllableSpec::table(syl), &lf, &spec)?;
            let gsd = iaif(&speech, DEFAULT_VT_ORDER, DEFAULT_GLOTTAL_ORDER)?;
            let r = aligned_correlation(&gsd.samples, &truth.gsd.unwrap().samples, 16);
            println!("/{}/ {f0:>5.0} Hz  correlation with true source {r:.3}", syl.name());
        }
    }
    Ok(())
}
