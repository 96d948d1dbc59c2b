//! Two-stage estimation on one synthetic utterance with the true LF shapes
//! standing in for the network, then resynthesis.

use armax_lf::dataset::{synth_utterance, CorpusSpec, DatasetKind, Syllable, SyllableSpec};
use armax_lf::pipeline::{
    mse_pair, resynthesize, run_utterance, ErrorAccumulator, EstimateOptions, GciMode, Method,
};
use armax_lf::LfParams;

fn main() -> armax_lf::Result<()> {
    let mut spec = CorpusSpec::full(DatasetKind::One, 0);
    spec.duration_s = 0.5;
    let lf = LfParams::new(140.0, 0.35, 0.5, 0.04, 1.0);
    let (speech, truth) = synth_utterance(&SyllableSpec::table(Syllable::M), &lf, &spec)?;
    let opts = EstimateOptions::default();
    for mode in [GciMode::Truth, GciMode::Detect] {
        let r = run_utterance(&speech, &truth, &Method::Oracle, &opts, mode)?;
        let y = resynthesize(&r)?;
        let x = speech.slice(r.span());
        // Unit-RMS distance after the best alignment within half a period.
        let d = mse_pair(&y, &x, r.periods[0].len / 2)?;
        println!(
            "{mode:?} GCIs: {} periods, {} rejected, {:.3} s, resynthesis distance {d:.2e}",
            r.periods.len(),
            r.rejected.len(),
            r.elapsed_s,
        );
        let mut acc = ErrorAccumulator::default();
        acc.add_result(&r, &speech, &truth)?;
        print!("{}", acc.finish().table(&format!("{mode:?}")));
    }
    Ok(())
}
