//! Analysis-by-synthesis grid search next to the one-fit-per-period estimator.

use armax_lf::dataset::{synth_utterance, CorpusSpec, DatasetKind, Syllable, SyllableSpec};
use armax_lf::pipeline::{run_utterance, EstimateOptions, GciMode, LfGrid, Method};
use armax_lf::LfParams;

fn main() -> armax_lf::Result<()> {
    let mut spec = CorpusSpec::full(DatasetKind::One, 0);
    spec.duration_s = 0.2;
    let lf = LfParams::new(160.0, 0.42, 0.6, 0.05, 1.0);
    let (speech, truth) = synth_utterance(&SyllableSpec::table(Syllable::A), &lf, &spec)?;
    let grid = LfGrid::standard();
    let opts = EstimateOptions::default();
    for (name, method) in [("oracle", Method::Oracle), ("grid", Method::Grid(&grid))] {
        let r = run_utterance(&speech, &truth, &method, &opts, GciMode::Truth)?;
        let p = &r.periods[r.periods.len() / 2];
        println!(
            "{name:<7} {:>4} periods in {:7.3} s   mid period tp {:.3} te {:.3} ta {:.3}   F1 {:.1} Hz",
            r.periods.len(),
            r.elapsed_s,
            p.lf.tp,
            p.lf.te,
            p.lf.ta,
            p.resonances.formants.first().map_or(f64::NAN, |f| f.freq_hz)
        );
    }
    println!("grid points: {}", grid.len());
    Ok(())
}
