use armax_lf::dataset::{
    build_corpus, generate, load_utterance, read_manifest, synth_utterance, write_corpus,
    CorpusSpec, DatasetKind, LfRanges, Syllable, SyllableSpec,
};
use armax_lf::vocal_tract::{arma_filter, fit_armax, resonances};
use armax_lf::{solve_direct, LfParams};

const FS: f64 = 16000.0;

fn short_spec(kind: DatasetKind, scale: f64) -> CorpusSpec {
    let mut spec = CorpusSpec::scaled(kind, scale, 4);
    spec.duration_s = 0.1;
    spec
}

#[test]
fn fitting_with_true_excitation_recovers_the_table() {
    for s in SyllableSpec::all() {
        let lf = LfParams::new(125.0, 0.3, 0.45, 0.05, 1.0).with_period_samples(128, FS);
        let (speech, truth) = synth_utterance(&s, &lf, &short_spec(DatasetKind::One, 1.0)).unwrap();
        let (p, q) = s.orders();
        let (m, _) = fit_armax(&speech, truth.gsd.as_ref().unwrap(), p, q).unwrap();
        let got = resonances(&m).unwrap();
        let want = &s.resonances;
        assert_eq!(got.formants.len(), want.formants.len(), "{:?}", s.syllable);
        assert_eq!(got.antiformants.len(), want.antiformants.len(), "{:?}", s.syllable);
        for (a, b) in got.formants.iter().chain(&got.antiformants).zip(want.formants.iter().chain(&want.antiformants)) {
            assert!((a.freq_hz - b.freq_hz).abs() < 1e-3 * b.freq_hz, "{:?} {a:?} {b:?}", s.syllable);
            assert!((a.bw_hz - b.bw_hz).abs() < 1e-3 * b.bw_hz, "{:?} {a:?} {b:?}", s.syllable);
        }
    }
}

#[test]
fn labels_describe_the_waveforms() {
    let spec = short_spec(DatasetKind::Two, 0.01);
    let entries = build_corpus(&spec).unwrap();
    let ranges = LfRanges::default();
    for e in entries.iter().step_by(37) {
        let u = generate(e, &spec).unwrap();
        let t = &u.truth;
        let gcis = &t.gcis.as_ref().unwrap().instants;
        assert_eq!(gcis.len(), t.lf.len() + 1);
        assert_eq!(t.closures.len(), t.lf.len());
        let gsd = t.gsd.as_ref().unwrap();
        assert_eq!(gsd.len(), u.speech.len());
        assert_eq!(*gcis.last().unwrap(), u.speech.len());
        for (k, lf) in t.lf.iter().enumerate() {
            assert!(lf.te >= ranges.te.0 && lf.te <= ranges.te.1);
            let ratio = lf.tp / lf.te;
            assert!(ratio >= ranges.tp_over_te.0 - 1e-12 && ratio <= ranges.tp_over_te.1 + 1e-12);
            assert!(lf.ta >= ranges.ta.0 && lf.ta <= ranges.ta.1);
            assert_eq!((lf.tc, lf.ee), (1.0, 1.0));
            // Closure = cycle start + Ne, and the GSD there is -Ee.
            let d = solve_direct(lf, FS).unwrap();
            assert_eq!(t.closures[k], gcis[k] + d.grid.ne);
            assert!((gsd.samples[t.closures[k]] + 1.0).abs() < 1e-9);
        }
        // Speech is exactly the tract driven by the stored source.
        let tract = SyllableSpec::table(e.syllable).model(FS).unwrap();
        let again = arma_filter(gsd, &tract, None).unwrap().signal;
        assert_eq!(again.samples, u.speech.samples);
        assert_eq!(t.resonances.as_ref().unwrap(), &SyllableSpec::table(e.syllable).resonances);
    }
}

#[test]
fn dataset_one_uses_one_shape_per_cell() {
    let spec = short_spec(DatasetKind::One, 1.0);
    let entries = build_corpus(&spec).unwrap();
    assert_eq!(entries.len(), 315);
    let (tp, te, ta) = LfRanges::default().center();
    for e in &entries {
        assert_eq!(e.combo, 0);
        assert_eq!((e.lf.tp, e.lf.te, e.lf.ta), (tp, te, ta));
    }
    let ids: std::collections::BTreeSet<_> = entries.iter().map(|e| &e.id).collect();
    assert_eq!(ids.len(), 315);
}

#[test]
fn full_dataset_two_size() {
    let spec = CorpusSpec::full(DatasetKind::Two, 0);
    assert_eq!(spec.utterance_count(), 94_500);
    assert_eq!(spec.f0_grid.first(), Some(&80.0));
    assert_eq!(spec.f0_grid.last(), Some(&300.0));
}

#[test]
fn stored_corpus_reloads_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = short_spec(DatasetKind::Two, 0.0005);
    spec.syllables = vec![Syllable::A, Syllable::M];
    let manifest = write_corpus(dir.path(), &spec, 2).unwrap();
    assert_eq!(read_manifest(&dir.path().join("manifest.jsonl")).unwrap(), manifest);
    let entries = build_corpus(&spec).unwrap();
    for (m, e) in manifest.iter().zip(&entries) {
        let orig = generate(e, &spec).unwrap();
        let back = load_utterance(dir.path(), m).unwrap();
        assert_eq!(back.truth.lf, orig.truth.lf);
        assert_eq!(back.truth.gcis, orig.truth.gcis);
        // PCM16 step, undone by the stored gain.
        let step = 1.0 / 32767.0 / m.wav_gain;
        for (a, b) in back.speech.samples.iter().zip(&orig.speech.samples) {
            assert!((a - b).abs() <= step, "{a} {b}");
        }
        let (g0, g1) = (back.truth.gsd.unwrap(), orig.truth.gsd.unwrap());
        for (a, b) in g0.samples.iter().zip(&g1.samples) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
