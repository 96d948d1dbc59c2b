//! Trains the LF estimator on a small in-memory corpus and saves a checkpoint.
//!
//! cargo run --release --example train_small -- [epochs] [checkpoint]

use armax_lf::dataset::{build_corpus, generate, CorpusSpec, DatasetKind, Utterance};
use armax_lf::frontend::FeatureKind;
use armax_lf::nn::checkpoint::{self, Metadata};
use armax_lf::nn::{train, TrainConfig};
use armax_lf::pipeline::{training_set, GciMode};

fn main() -> armax_lf::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(5, |s| s.parse().expect("epochs"));
    let out = args.next().unwrap_or_else(|| "small.alfmlp".into());
    let mut spec = CorpusSpec::scaled(DatasetKind::Two, 0.002, 0);
    spec.duration_s = 0.3;
    let utts: Vec<Utterance> = build_corpus(&spec)?
        .iter()
        .map(|e| generate(e, &spec))
        .collect::<armax_lf::Result<_>>()?;
    let data = training_set(&utts, FeatureKind::Sw, GciMode::Truth, (60.0, 400.0), None)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let (model, report) = train(&data, &cfg)?;
    println!("{} windows from {} utterances", data.len(), utts.len());
    for (i, l) in report.loss_curve.iter().enumerate() {
        println!("epoch {:>3}  loss {l:.6}", i + 1);
    }
    let meta = Metadata {
        train_config: Some(cfg),
        frontend: Some(FeatureKind::Sw),
        final_loss: Some(report.final_loss),
    };
    checkpoint::save(out.as_ref(), &model, &meta)?;
    println!("saved {out} ({} parameters)", model.parameter_count());
    Ok(())
}
