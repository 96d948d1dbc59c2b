//! Synthetic corpora: LF excitation through syllable-specific pole-zero
//! vocal tracts, with exact ground truth.

mod store;
pub mod wav;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frontend::{GciSource, GciTrack};
use crate::vocal_tract::{arma_filter, resonance_to_model, ArmaxModel, Resonance, ResonanceSet};
use crate::{generate_train, solve_direct, Error, LfParams, Result, Waveform};

pub use store::{
    load_external, load_utterance, read_corpus_spec, read_manifest, read_truth, write_corpus,
    write_manifest, write_utterance, ManifestEntry, TruthFile,
};

pub const FS_HZ: f64 = 16000.0;
/// Samples of impulse response inspected when normalizing tract gain.
pub const GAIN_PROBE_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Syllable {
    A,
    I,
    U,
    E,
    O,
    M,
    NasalEps,
}

impl Syllable {
    pub const ALL: [Syllable; 7] = [
        Syllable::A,
        Syllable::I,
        Syllable::U,
        Syllable::E,
        Syllable::O,
        Syllable::M,
        Syllable::NasalEps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Syllable::A => "a",
            Syllable::I => "i",
            Syllable::U => "u",
            Syllable::E => "e",
            Syllable::O => "o",
            Syllable::M => "m",
            Syllable::NasalEps => "nasal_eps",
        }
    }

    pub fn is_vowel(self) -> bool {
        !matches!(self, Syllable::M | Syllable::NasalEps)
    }

    fn index(self) -> u64 {
        Syllable::ALL.iter().position(|s| *s == self).unwrap() as u64
    }
}

impl std::fmt::Display for Syllable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Syllable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Syllable::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown syllable '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyllableSpec {
    pub syllable: Syllable,
    pub resonances: ResonanceSet,
}

fn res(pairs: &[(f64, f64)]) -> Vec<Resonance> {
    pairs.iter().map(|&(f, b)| Resonance::new(f, b)).collect()
}

impl SyllableSpec {
    /// Formant and anti-formant table (frequency, bandwidth in Hz).
    pub fn table(syllable: Syllable) -> Self {
        let vowel_tail = [(4200.0, 300.0)];
        let (formants, antiformants): (Vec<(f64, f64)>, Vec<(f64, f64)>) = match syllable {
            Syllable::A => (
                [(750.0, 90.0), (1187.0, 110.0), (2595.0, 170.0), (3781.0, 250.0)].into(),
                vec![],
            ),
            Syllable::I => (
                [(281.0, 90.0), (2281.0, 110.0), (3187.0, 170.0), (3781.0, 250.0)].into(),
                vec![],
            ),
            Syllable::U => (
                [(312.0, 90.0), (1219.0, 110.0), (2469.0, 170.0), (3406.0, 250.0)].into(),
                vec![],
            ),
            Syllable::E => (
                [(469.0, 90.0), (2031.0, 110.0), (2687.0, 170.0), (3375.0, 250.0)].into(),
                vec![],
            ),
            Syllable::O => (
                [(468.0, 90.0), (781.0, 110.0), (2656.0, 170.0), (3281.0, 250.0)].into(),
                vec![],
            ),
            Syllable::M => (
                vec![(220.0, 60.0), (1050.0, 100.0), (2380.0, 120.0), (4100.0, 180.0)],
                vec![(1600.0, 70.0), (3320.0, 130.0)],
            ),
            Syllable::NasalEps => (
                vec![
                    (690.0, 70.0),
                    (1640.0, 100.0),
                    (1940.0, 110.0),
                    (2760.0, 130.0),
                    (3500.0, 160.0),
                    (4500.0, 200.0),
                ],
                vec![(2260.0, 250.0)],
            ),
        };
        let mut formants = formants;
        if syllable.is_vowel() {
            formants.extend(vowel_tail);
        }
        Self {
            syllable,
            resonances: ResonanceSet::new(res(&formants), res(&antiformants)),
        }
    }

    pub fn all() -> Vec<Self> {
        Syllable::ALL.into_iter().map(Self::table).collect()
    }

    /// Pole and zero orders: twice the number of formants and anti-formants.
    pub fn orders(&self) -> (usize, usize) {
        (
            2 * self.resonances.formants.len(),
            2 * self.resonances.antiformants.len(),
        )
    }

    /// The tract filter, scaled so its impulse response peaks at magnitude 1.
    pub fn model(&self, fs_hz: f64) -> Result<ArmaxModel> {
        let unit = resonance_to_model(&self.resonances, fs_hz, 1.0)?;
        let mut impulse = Waveform::zeros(GAIN_PROBE_LEN, fs_hz);
        impulse.samples[0] = 1.0;
        let peak = arma_filter(&impulse, &unit, None)?.signal.max_abs();
        let b = unit.b.iter().map(|c| c / peak).collect();
        ArmaxModel::new(unit.a, b, fs_hz)
    }
}

/// Sampling ranges of the LF shape parameters (fractions of the period).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfRanges {
    pub te: (f64, f64),
    pub tp_over_te: (f64, f64),
    pub ta: (f64, f64),
}

impl Default for LfRanges {
    fn default() -> Self {
        Self {
            te: (0.3, 0.9),
            tp_over_te: (0.65, 0.8),
            ta: (0.03, 0.08),
        }
    }
}

impl LfRanges {
    /// Range midpoints; the single LF shape of dataset 1.
    pub fn center(&self) -> (f64, f64, f64) {
        let mid = |r: (f64, f64)| 0.5 * (r.0 + r.1);
        let te = mid(self.te);
        (mid(self.tp_over_te) * te, te, mid(self.ta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    /// One fixed LF shape per (syllable, F0).
    One,
    /// Seeded uniform LF draws per (syllable, F0).
    Two,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            _ => Err(Error::InvalidInput(format!("dataset must be 1 or 2, got '{s}'"))),
        }
    }
}

/// The full F0 grid: 45 values, 80 to 300 Hz in 5 Hz steps.
pub fn full_f0_grid() -> Vec<f64> {
    (0..45).map(|i| 80.0 + 5.0 * i as f64).collect()
}

/// `n` values spread evenly over the full grid (both ends included).
pub fn subsample_f0_grid(n: usize) -> Vec<f64> {
    let grid = full_f0_grid();
    match n {
        0 => vec![],
        1 => vec![grid[grid.len() / 2]],
        _ if n >= grid.len() => grid,
        _ => (0..n)
            .map(|i| grid[(i as f64 * (grid.len() - 1) as f64 / (n - 1) as f64).round() as usize])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub kind: DatasetKind,
    pub f0_grid: Vec<f64>,
    pub combos_per_cell: usize,
    pub lf_ranges: LfRanges,
    pub syllables: Vec<Syllable>,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn full(kind: DatasetKind, seed: u64) -> Self {
        Self::scaled(kind, 1.0, seed)
    }

    /// Grid subsampled by `scale` in (0, 1]: `round(45 sqrt(s))` F0 values and,
    /// for dataset 2, `round(300 sqrt(s))` combos per cell. `s = 0.01` gives
    /// 5 F0s and 30 combos.
    pub fn scaled(kind: DatasetKind, scale: f64, seed: u64) -> Self {
        let root = scale.clamp(0.0, 1.0).sqrt();
        let n_f0 = ((45.0 * root).round() as usize).max(1);
        let combos = match kind {
            DatasetKind::One => 1,
            DatasetKind::Two => ((300.0 * root).round() as usize).max(1),
        };
        Self {
            kind,
            f0_grid: subsample_f0_grid(n_f0),
            combos_per_cell: combos,
            lf_ranges: LfRanges::default(),
            syllables: Syllable::ALL.to_vec(),
            fs_hz: FS_HZ,
            duration_s: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f0_grid.is_empty() || self.combos_per_cell == 0 || self.syllables.is_empty() {
            return Err(Error::InvalidInput("empty corpus grid".into()));
        }
        if !(self.fs_hz > 0.0 && self.duration_s > 0.0) {
            return Err(Error::InvalidInput("fs and duration must be positive".into()));
        }
        Ok(())
    }

    pub fn utterance_count(&self) -> usize {
        self.f0_grid.len() * self.combos_per_cell * self.syllables.len()
    }
}

/// One corpus entry before synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpec {
    pub id: String,
    pub syllable: Syllable,
    pub f0_hz: f64,
    pub combo: usize,
    /// Period length already snapped to the sample grid.
    pub lf: LfParams,
}

/// Ground truth for one utterance; channels an external corpus lacks are empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// LF parameters of each period.
    pub lf: Vec<LfParams>,
    pub resonances: Option<ResonanceSet>,
    /// Cycle starts (glottal openings), one more than the number of periods.
    pub gcis: Option<GciTrack>,
    /// Main excitation instants (cycle start + Ne) of each period.
    pub closures: Vec<usize>,
    pub gsd: Option<Waveform>,
    pub glottal_flow: Option<Waveform>,
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub spec: UtteranceSpec,
    pub speech: Waveform,
    pub truth: GroundTruth,
}

/// Mixes corpus seed and cell coordinates into an independent stream seed.
fn cell_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn snap_period(f0_hz: f64, fs_hz: f64) -> usize {
    (fs_hz / f0_hz).round() as usize
}

/// Draws one admissible LF shape; shapes the solver rejects are redrawn.
pub fn draw_lf(ranges: &LfRanges, f0_hz: f64, fs_hz: f64, rng: &mut impl Rng) -> Result<LfParams> {
    let n0 = snap_period(f0_hz, fs_hz);
    for _ in 0..1000 {
        let te = rng.gen_range(ranges.te.0..=ranges.te.1);
        let tp = te * rng.gen_range(ranges.tp_over_te.0..=ranges.tp_over_te.1);
        let ta = rng.gen_range(ranges.ta.0..=ranges.ta.1);
        let lf = LfParams::new(f0_hz, tp, te, ta, 1.0).with_period_samples(n0, fs_hz);
        if solve_direct(&lf, fs_hz).is_ok() {
            return Ok(lf);
        }
    }
    Err(Error::NoRoot {
        what: "admissible LF draw",
    })
}

/// Enumerates the corpus in (syllable, F0, combo) order without synthesizing.
pub fn build_corpus(spec: &CorpusSpec) -> Result<Vec<UtteranceSpec>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.utterance_count());
    for &syllable in &spec.syllables {
        for (fi, &f0) in spec.f0_grid.iter().enumerate() {
            let n0 = snap_period(f0, spec.fs_hz);
            for combo in 0..spec.combos_per_cell {
                let lf = match spec.kind {
                    DatasetKind::One => {
                        let (tp, te, ta) = spec.lf_ranges.center();
                        LfParams::new(f0, tp, te, ta, 1.0).with_period_samples(n0, spec.fs_hz)
                    }
                    DatasetKind::Two => {
                        let seed =
                            cell_seed(spec.seed, &[syllable.index(), fi as u64, combo as u64]);
                        draw_lf(
                            &spec.lf_ranges,
                            f0,
                            spec.fs_hz,
                            &mut ChaCha8Rng::seed_from_u64(seed),
                        )?
                    }
                };
                out.push(UtteranceSpec {
                    id: format!("{}_{:03}_{:03}", syllable.name(), f0.round() as u32, combo),
                    syllable,
                    f0_hz: f0,
                    combo,
                    lf,
                });
            }
        }
    }
    Ok(out)
}

/// Synthesizes `round(duration * f0)` identical LF cycles through the
/// syllable's tract.
pub fn synth_utterance(
    syllable: &SyllableSpec,
    lf: &LfParams,
    spec: &CorpusSpec,
) -> Result<(Waveform, GroundTruth)> {
    let fs = spec.fs_hz;
    let n_periods = ((spec.duration_s * lf.f0_hz()).round() as usize).max(1);
    let cycles = vec![*lf; n_periods];
    let excitation = generate_train(&cycles, fs)?;
    let direct = solve_direct(lf, fs)?;
    let n0 = direct.grid.n0;
    let model = syllable.model(fs)?;
    let speech = arma_filter(&excitation, &model, None)?.signal;
    let gcis = GciTrack::new((0..=n_periods).map(|k| k * n0).collect(), GciSource::GroundTruth)?;
    let closures = (0..n_periods).map(|k| k * n0 + direct.grid.ne).collect();
    let truth = GroundTruth {
        lf: cycles,
        resonances: Some(syllable.resonances.clone()),
        gcis: Some(gcis),
        closures,
        gsd: Some(excitation),
        glottal_flow: None,
    };
    Ok((speech, truth))
}

/// Synthesizes one corpus entry.
pub fn generate(entry: &UtteranceSpec, spec: &CorpusSpec) -> Result<Utterance> {
    let (speech, truth) = synth_utterance(&SyllableSpec::table(entry.syllable), &entry.lf, spec)?;
    Ok(Utterance {
        spec: entry.clone(),
        speech,
        truth,
    })
}

/// Seeded utterance-level split; returns (train, held-out) indices.
pub fn split_indices(n: usize, held_out_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cell_seed(seed, &[0x5917])));
    let n_out = ((n as f64 * held_out_fraction).round() as usize).min(n);
    let mut held = idx.split_off(n - n_out);
    idx.sort_unstable();
    held.sort_unstable();
    (idx, held)
}
