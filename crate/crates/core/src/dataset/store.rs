//! On-disk corpus layout.
//!
//! ```text
//! <dir>/corpus.json          CorpusSpec used to build the corpus
//! <dir>/manifest.jsonl       one ManifestEntry per line
//! <dir>/wav/<id>.wav         speech, PCM16, scaled by the entry's wav_gain
//! <dir>/wav/<id>_gsd.wav     true glottal source derivative, float32
//! <dir>/truth/<id>.json      TruthFile
//! ```

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wav::{read_wav, write_wav, WavEncoding};
use super::{build_corpus, generate, CorpusSpec, GroundTruth, Syllable, Utterance, UtteranceSpec};
use crate::frontend::{GciSource, GciTrack};
use crate::vocal_tract::ResonanceSet;
use crate::{Error, LfParams, Result, Waveform};

/// Peak level of speech written to PCM16.
const WAV_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub syllable: Syllable,
    pub f0_hz: f64,
    pub combo: usize,
    pub lf: LfParams,
    pub resonances: ResonanceSet,
    /// Paths relative to the corpus directory.
    pub speech: String,
    pub truth: String,
    /// Samples on disk equal synthesized speech times this gain.
    pub wav_gain: f64,
}

impl ManifestEntry {
    pub fn spec(&self) -> UtteranceSpec {
        UtteranceSpec {
            id: self.id.clone(),
            syllable: self.syllable,
            f0_hz: self.f0_hz,
            combo: self.combo,
            lf: self.lf,
        }
    }
}

/// Ground-truth side file. All channels are optional so that external
/// corpora can supply whichever they have.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthFile {
    pub fs_hz: Option<f64>,
    pub gcis: Option<Vec<usize>>,
    pub closures: Vec<usize>,
    pub lf: Vec<LfParams>,
    pub resonances: Option<ResonanceSet>,
    /// Companion WAV holding the glottal source derivative.
    pub gsd_wav: Option<String>,
    pub gsd: Option<Vec<f64>>,
    pub glottal_flow: Option<Vec<f64>>,
}

fn json_error(text: &str, e: serde_json::Error) -> Error {
    // serde_json reports 1-based line/column; convert to a byte offset.
    let line_start: usize = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum();
    Error::Format {
        offset: (line_start + e.column().saturating_sub(1)) as u64,
        message: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(text, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text)
}

/// Writes one synthesized utterance below `dir` and returns its manifest entry.
pub fn write_utterance(dir: &Path, utt: &Utterance) -> Result<ManifestEntry> {
    let id = &utt.spec.id;
    let speech_rel = format!("wav/{id}.wav");
    let gsd_rel = format!("wav/{id}_gsd.wav");
    let truth_rel = format!("truth/{id}.json");
    create_dir(&dir.join("wav"))?;
    create_dir(&dir.join("truth"))?;

    let peak = utt.speech.max_abs();
    let wav_gain = if peak > 0.0 { WAV_PEAK / peak } else { 1.0 };
    write_wav(
        &dir.join(&speech_rel),
        &utt.speech.scaled(wav_gain),
        WavEncoding::Pcm16,
    )?;
    if let Some(gsd) = &utt.truth.gsd {
        write_wav(&dir.join(&gsd_rel), gsd, WavEncoding::Float32)?;
    }
    let truth = TruthFile {
        fs_hz: Some(utt.speech.fs_hz),
        gcis: utt.truth.gcis.as_ref().map(|g| g.instants.clone()),
        closures: utt.truth.closures.clone(),
        lf: utt.truth.lf.clone(),
        resonances: utt.truth.resonances.clone(),
        gsd_wav: utt.truth.gsd.as_ref().map(|_| format!("{id}_gsd.wav")),
        gsd: None,
        glottal_flow: None,
    };
    write_json(&dir.join(&truth_rel), &truth)?;
    Ok(ManifestEntry {
        id: id.clone(),
        syllable: utt.spec.syllable,
        f0_hz: utt.spec.f0_hz,
        combo: utt.spec.combo,
        lf: utt.spec.lf,
        resonances: utt
            .truth
            .resonances
            .clone()
            .unwrap_or_default(),
        speech: speech_rel,
        truth: truth_rel,
        wav_gain,
    })
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        let line = serde_json::to_string(e)
            .map_err(|err| Error::InvalidInput(format!("serialize manifest: {err}")))?;
        writeln!(w, "{line}").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0usize;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            let entry = serde_json::from_str(&line).map_err(|e| Error::Format {
                offset: (offset + e.column().saturating_sub(1)) as u64,
                message: e.to_string(),
            })?;
            out.push(entry);
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

/// Synthesizes and writes the whole corpus with `jobs` worker threads.
/// The manifest is written in corpus order, so output is deterministic.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec, jobs: usize) -> Result<Vec<ManifestEntry>> {
    create_dir(dir)?;
    let entries = build_corpus(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let manifest: Vec<ManifestEntry> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| write_utterance(dir, &generate(e, spec)?))
            .collect::<Result<_>>()
    })?;
    write_json(&dir.join("corpus.json"), spec)?;
    write_manifest(&dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}

pub fn read_corpus_spec(dir: &Path) -> Result<CorpusSpec> {
    let path = dir.join("corpus.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_json(&text)
}

/// Reloads a written utterance; speech is divided by the entry's `wav_gain`.
pub fn load_utterance(dir: &Path, entry: &ManifestEntry) -> Result<Utterance> {
    let (speech, truth) = load_external(&dir.join(&entry.speech), Some(&dir.join(&entry.truth)))?;
    Ok(Utterance {
        spec: entry.spec(),
        speech: speech.scaled(1.0 / entry.wav_gain),
        truth,
    })
}

/// Loads a WAV and whichever ground-truth channels `truth_path` provides.
/// A missing truth file yields an empty [`GroundTruth`].
pub fn load_external(wav_path: &Path, truth_path: Option<&Path>) -> Result<(Waveform, GroundTruth)> {
    let speech = read_wav(wav_path)?;
    let mut truth = GroundTruth::default();
    let Some(path) = truth_path.filter(|p| p.exists()) else {
        return Ok((speech, truth));
    };
    let file = read_truth(path)?;
    let fs = file.fs_hz.unwrap_or(speech.fs_hz);
    if fs != speech.fs_hz {
        return Err(Error::SampleRateMismatch(speech.fs_hz, fs));
    }
    if let Some(g) = file.gcis {
        truth.gcis = Some(GciTrack::new(g, GciSource::GroundTruth)?);
    }
    truth.closures = file.closures;
    truth.lf = file.lf;
    truth.resonances = file.resonances;
    truth.glottal_flow = file.glottal_flow.map(|s| Waveform::new(s, fs));
    truth.gsd = match (file.gsd, file.gsd_wav) {
        (Some(s), _) => Some(Waveform::new(s, fs)),
        (None, Some(rel)) => {
            let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
            // Companion WAVs live next to the speech file in written corpora.
            let beside_speech = wav_path.parent().map(|p| p.join(&rel));
            let candidate = match beside_speech {
                Some(p) if p.exists() => p,
                _ => base.join(&rel),
            };
            Some(read_wav(&candidate)?)
        }
        (None, None) => None,
    };
    Ok((speech, truth))
}
