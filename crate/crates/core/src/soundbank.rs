//! Source sounds: a procedural bank with a train/val/test split, WAV import
//! and export, and the per-step one-second slicing used by the renderer.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SUPPORTED_RATES: [u32; 2] = [16_000, 44_100];

/// Reference split sizes of the 102-sound corpus.
const SPLIT_WEIGHTS: (usize, usize, usize) = (73, 11, 18);

#[derive(Debug, Error)]
pub enum SoundError {
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("rate mismatch: file is {found} Hz, bank is {expected} Hz")]
    RateMismatch { expected: u32, found: u32 },
    #[error("mono required, file has {0} channels")]
    NotMono(u16),
    #[error("16-bit integer PCM required")]
    NotPcm16,
    #[error("bank needs at least 3 sounds, got {0}")]
    TooFewSounds(usize),
    #[error("duration must be at least 1 s, got {0}")]
    TooShort(f64),
    #[error("asset {0:?} has no samples")]
    EmptyAsset(String),
    #[error("unknown sound id {0:?}")]
    UnknownId(String),
    #[error("bad split manifest line {line}: {text:?}")]
    BadManifest { line: usize, text: String },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoundAsset {
    pub id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SoundSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SoundSplit {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// (train, val, test) sizes for `count` sounds: val and test are rounded
/// proportions of 11/102 and 18/102, the remainder goes to train.
pub fn split_sizes(count: usize) -> (usize, usize, usize) {
    let (tr, va, te) = SPLIT_WEIGHTS;
    let total = (tr + va + te) as f64;
    let val = (count as f64 * va as f64 / total).round() as usize;
    let test = (count as f64 * te as f64 / total).round() as usize;
    (count - val - test, val, test)
}

/// Immutable collection of assets sharing one sample rate, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundBank {
    sample_rate: u32,
    assets: Vec<SoundAsset>,
}

impl SoundBank {
    pub fn new(sample_rate: u32, mut assets: Vec<SoundAsset>) -> Result<Self, SoundError> {
        if !SUPPORTED_RATES.contains(&sample_rate) {
            return Err(SoundError::UnsupportedRate(sample_rate));
        }
        for a in &assets {
            if a.sample_rate != sample_rate {
                return Err(SoundError::RateMismatch {
                    expected: sample_rate,
                    found: a.sample_rate,
                });
            }
            if a.samples.is_empty() {
                return Err(SoundError::EmptyAsset(a.id.clone()));
            }
        }
        assets.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { sample_rate, assets })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn assets(&self) -> &[SoundAsset] {
        &self.assets
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&SoundAsset, SoundError> {
        self.assets
            .binary_search_by(|a| a.id.as_str().cmp(id))
            .map(|i| &self.assets[i])
            .map_err(|_| SoundError::UnknownId(id.to_string()))
    }

    pub fn split(&self) -> SoundSplit {
        let mut s = SoundSplit::default();
        for a in &self.assets {
            match a.split {
                Split::Train => s.train.push(a.id.clone()),
                Split::Val => s.val.push(a.id.clone()),
                Split::Test => s.test.push(a.id.clone()),
            }
        }
        s
    }

    pub fn ids(&self, split: Split) -> Vec<String> {
        self.assets
            .iter()
            .filter(|a| a.split == split)
            .map(|a| a.id.clone())
            .collect()
    }

    /// Writes every asset as `<id>.wav` plus `splits.txt` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), SoundError> {
        fs::create_dir_all(dir)?;
        for a in &self.assets {
            save_wav(a, &dir.join(format!("{}.wav", a.id)))?;
        }
        write_split_manifest(&self.assets, &dir.join("splits.txt"))?;
        Ok(())
    }

    /// Loads `splits.txt` and the WAV file of every id it lists.
    pub fn load_dir(dir: &Path, sample_rate: u32) -> Result<Self, SoundError> {
        let manifest = read_split_manifest(&dir.join("splits.txt"))?;
        let mut assets = Vec::with_capacity(manifest.len());
        for (id, split) in manifest {
            let mut a = load_wav(&dir.join(format!("{id}.wav")), sample_rate)?;
            a.id = id;
            a.split = split;
            assets.push(a);
        }
        SoundBank::new(sample_rate, assets)
    }
}

#[derive(Debug, Clone, Copy)]
enum Family {
    Tone,
    Chirp,
    BandNoise,
    ModulatedTone,
}

/// Procedural stand-in for a licensed sound corpus: cycles through pure
/// tones, linear chirps, band-limited noise (random-phase partials) and
/// amplitude-modulated tones. Every asset is peak-normalized to 1.
pub fn synthesize_bank(seed: u64, count: usize, sample_rate: u32, duration_s: f64) -> Result<SoundBank, SoundError> {
    if !SUPPORTED_RATES.contains(&sample_rate) {
        return Err(SoundError::UnsupportedRate(sample_rate));
    }
    if count < 3 {
        return Err(SoundError::TooFewSounds(count));
    }
    if duration_s.is_nan() || duration_s < 1.0 {
        return Err(SoundError::TooShort(duration_s));
    }
    let len = (duration_s * sample_rate as f64).round() as usize;
    let rate = sample_rate as f64;
    // keep partials below the 16 kHz Nyquist so both rates share a family
    let f_max = 6_000.0_f64.min(rate / 2.0 - 500.0);

    let (n_train, n_val, _) = split_sizes(count);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5B11));
    let mut split_of = vec![Split::Test; count];
    for (rank, &i) in order.iter().enumerate() {
        split_of[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let families = [Family::Tone, Family::Chirp, Family::BandNoise, Family::ModulatedTone];
    let mut assets = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let t = |n: usize| n as f64 / rate;
        let mut x: Vec<f64> = match families[i % families.len()] {
            Family::Tone => {
                let f = rng.gen_range(150.0..f_max);
                let h2 = rng.gen_range(0.0..0.5);
                (0..len)
                    .map(|n| (TAU * f * t(n)).sin() + h2 * (TAU * 2.0 * f * t(n)).sin())
                    .collect()
            }
            Family::Chirp => {
                let f0 = rng.gen_range(150.0..f_max / 2.0);
                let f1 = rng.gen_range(f0..f_max);
                // one sweep per second, restarting
                (0..len)
                    .map(|n| {
                        let tt = t(n).fract();
                        (TAU * (f0 * tt + 0.5 * (f1 - f0) * tt * tt)).sin()
                    })
                    .collect()
            }
            Family::BandNoise => {
                let lo = rng.gen_range(100.0..f_max / 2.0);
                let hi = rng.gen_range(lo + 200.0..f_max);
                let partials: Vec<(f64, f64)> = (0..24)
                    .map(|_| (rng.gen_range(lo..hi), rng.gen_range(0.0..TAU)))
                    .collect();
                (0..len)
                    .map(|n| partials.iter().map(|&(f, ph)| (TAU * f * t(n) + ph).sin()).sum())
                    .collect()
            }
            Family::ModulatedTone => {
                let f = rng.gen_range(200.0..f_max);
                let fm = rng.gen_range(1.0..12.0);
                (0..len)
                    .map(|n| (0.5 + 0.5 * (TAU * fm * t(n)).sin()) * (TAU * f * t(n)).sin())
                    .collect()
            }
        };
        let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            x.iter_mut().for_each(|v| *v /= peak);
        }
        assets.push(SoundAsset {
            id: format!("snd{i:03}"),
            samples: x.into_iter().map(|v| v as f32).collect(),
            sample_rate,
            split: split_of[i],
        });
    }
    SoundBank::new(sample_rate, assets)
}

/// Samples `[step·R, (step+1)·R)` of the asset, wrapping cyclically.
pub fn step_slice(asset: &SoundAsset, step: usize, sample_rate: u32) -> Vec<f32> {
    let r = sample_rate as usize;
    let n = asset.samples.len();
    let start = (step % n) * (r % n) % n;
    (0..r).map(|k| asset.samples[(start + k) % n]).collect()
}

pub fn save_wav(asset: &SoundAsset, path: &Path) -> Result<(), SoundError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: asset.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &asset.samples {
        let q = (s as f64 * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64);
        w.write_sample(q as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Loads a mono PCM-16 WAV recorded at `expected_rate`. The id is the file
/// stem and the split defaults to train.
pub fn load_wav(path: &Path, expected_rate: u32) -> Result<SoundAsset, SoundError> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(SoundError::NotMono(spec.channels));
    }
    if spec.sample_rate != expected_rate {
        return Err(SoundError::RateMismatch {
            expected: expected_rate,
            found: spec.sample_rate,
        });
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(SoundError::NotPcm16);
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if samples.is_empty() {
        return Err(SoundError::EmptyAsset(id));
    }
    Ok(SoundAsset {
        id,
        samples,
        sample_rate: expected_rate,
        split: Split::Train,
    })
}

pub fn write_split_manifest(assets: &[SoundAsset], path: &Path) -> Result<(), SoundError> {
    let body: String = assets.iter().map(|a| format!("{} {}\n", a.id, a.split)).collect();
    fs::write(path, body)?;
    Ok(())
}

pub fn read_split_manifest(path: &Path) -> Result<BTreeMap<String, Split>, SoundError> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || SoundError::BadManifest {
            line: i + 1,
            text: line.to_string(),
        };
        let mut parts = line.split_whitespace();
        let (Some(id), Some(split), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        out.insert(id.to_string(), split.parse().map_err(|_| bad())?);
    }
    Ok(out)
}
