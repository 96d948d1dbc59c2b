//! Writes a small synthetic corpus and reads one utterance back.
//!
//! cargo run --example corpus -- <out_dir> [dataset 1|2] [scale]

use std::path::PathBuf;

use armax_lf::dataset::{load_utterance, write_corpus, CorpusSpec, DatasetKind};

fn main() -> armax_lf::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let kind: DatasetKind = args.next().as_deref().unwrap_or("2").parse()?;
    let scale: f64 = args.next().map_or(0.001, |s| s.parse().expect("scale"));
    let mut spec = CorpusSpec::scaled(kind, scale, 0);
    spec.duration_s = 0.25;
    let manifest = write_corpus(&dir, &spec, 0)?;
    println!("{} utterances in {}", manifest.len(), dir.display());
    let first = &manifest[0];
    let u = load_utterance(&dir, first)?;
    println!(
        "{}: {} samples, {} periods, tp {:.3} te {:.3} ta {:.3}",
        first.id,
        u.speech.len(),
        u.truth.lf.len(),
        first.lf.tp,
        first.lf.te,
        first.lf.ta
    );
    Ok(())
}
