//! Parametric binaural rendering and the log-magnitude spectrogram pipeline.
//!
//! Sound travels along geodesics: the direction of arrival is the first
//! segment of a shortest path from the listener to the source and the level
//! falls off with geodesic (not Euclidean) distance. This keeps the room
//! layout encoded in what the agent hears.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridmap::{first_step_toward, geodesic_field, AgentPose, Cell, GeodesicField, GridMap, Heading, MapError};

pub const WINDOW: usize = 512;
pub const HOP: usize = 160;
pub const DOWNSAMPLE: usize = 4;
pub const FULL_BINS: usize = WINDOW / 2 + 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticError {
    #[error("source {source_cell} is unreachable from {listener}")]
    Unreachable { listener: Cell, source_cell: Cell },
    #[error("frame has {found} samples per ear, expected {expected}")]
    FrameLength { expected: usize, found: usize },
    #[error("sample rate mismatch: {0} vs {1}")]
    RateMismatch(u32, u32),
    #[error("nothing to mix")]
    EmptyMix,
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayTail {
    pub enabled: bool,
    pub tail_gain: f64,
    pub tail_time_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticParams {
    pub reference_gain: f64,
    /// Distances below this are clamped, bounding the near-field gain.
    pub min_distance: f64,
    pub rear_attenuation: f64,
    /// Interaural delay at ±90° in seconds.
    pub itd_max: f64,
    pub decay_tail: DecayTail,
}

impl Default for AcousticParams {
    fn default() -> Self {
        Self {
            reference_gain: 1.0,
            min_distance: 0.1,
            rear_attenuation: 0.5,
            itd_max: 0.0007,
            decay_tail: DecayTail {
                enabled: false,
                tail_gain: 0.3,
                tail_time_constant: 0.05,
            },
        }
    }
}

/// Direction of arrival relative to the listener's heading (positive to the
/// left) and geodesic distance in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Doa {
    pub azimuth: f64,
    pub distance_m: f64,
}

pub fn doa_and_distance(map: &GridMap, pose: AgentPose, source: Cell) -> Result<Doa, AcousticError> {
    map.check_free(pose.cell)?;
    let field = geodesic_field(map, source)?;
    doa_from_field(map, &field, pose)
}

/// As [`doa_and_distance`] with a precomputed field rooted at the source.
pub fn doa_from_field(map: &GridMap, field: &GeodesicField, pose: AgentPose) -> Result<Doa, AcousticError> {
    let distance_m = field.meters(pose.cell).ok_or(AcousticError::Unreachable {
        listener: pose.cell,
        source_cell: field.source(),
    })?;
    let azimuth = match first_step_toward(map, field, pose.cell, pose.heading) {
        None => 0.0,
        Some(h) => relative_azimuth(pose.heading, h),
    };
    Ok(Doa { azimuth, distance_m })
}

fn relative_azimuth(heading: Heading, toward: Heading) -> f64 {
    if toward == heading {
        0.0
    } else if toward == heading.left() {
        FRAC_PI_2
    } else if toward == heading.right() {
        -FRAC_PI_2
    } else {
        PI
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinauralFrame {
    pub left: Vec<f32>,
    pub right: Vec<f32>,
    pub sample_rate: u32,
}

impl BinauralFrame {
    pub fn silence(sample_rate: u32) -> Self {
        let n = sample_rate as usize;
        Self {
            left: vec![0.0; n],
            right: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn rms(&self) -> (f64, f64) {
        let rms = |x: &[f32]| (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt();
        (rms(&self.left), rms(&self.right))
    }
}

/// Renders a mono one-second slice at azimuth `azimuth` and geodesic
/// distance `distance_m`.
///
/// Gain is `reference_gain / max(d, min_distance)`, panned with the
/// equal-power law over the frontal half-plane; rear sources are folded to
/// the side and attenuated. The lagging ear is delayed by
/// `round(R · itd_max · sin θ')` samples.
pub fn render_source(
    slice: &[f32],
    azimuth: f64,
    distance_m: f64,
    params: &AcousticParams,
    sample_rate: u32,
) -> BinauralFrame {
    let gain = params.reference_gain / distance_m.max(params.min_distance);
    let folded = azimuth.clamp(-FRAC_PI_2, FRAC_PI_2);
    let half = folded / 2.0;
    // cos(π/4 − θ'/2) and sin(π/4 − θ'/2), written so that mirroring the
    // azimuth swaps the two gains bit-for-bit
    let mut gl = gain * (FRAC_PI_4 + half).sin();
    let mut gr = gain * (FRAC_PI_4 - half).sin();
    if azimuth.abs() > FRAC_PI_2 {
        gl *= params.rear_attenuation;
        gr *= params.rear_attenuation;
    }
    let mut left: Vec<f64> = slice.iter().map(|&x| gl * x as f64).collect();
    let mut right: Vec<f64> = slice.iter().map(|&x| gr * x as f64).collect();

    let lag = (sample_rate as f64 * params.itd_max * folded.sin()).round() as i64;
    if lag > 0 {
        delay(&mut right, lag as usize);
    } else if lag < 0 {
        delay(&mut left, (-lag) as usize);
    }

    if params.decay_tail.enabled {
        left = apply_tail(&left, &params.decay_tail, sample_rate);
        right = apply_tail(&right, &params.decay_tail, sample_rate);
    }

    BinauralFrame {
        left: left.into_iter().map(|v| v as f32).collect(),
        right: right.into_iter().map(|v| v as f32).collect(),
        sample_rate,
    }
}

fn delay(x: &mut [f64], k: usize) {
    let n = x.len();
    if k >= n {
        x.fill(0.0);
        return;
    }
    x.copy_within(0..n - k, k);
    x[..k].fill(0.0);
}

/// Convolution with `δ[n] + g·exp(−n/(τR))` for `0 ≤ n ≤ ⌊3τR⌋`, evaluated
/// recursively as a running truncated exponential sum.
fn apply_tail(x: &[f64], tail: &DecayTail, sample_rate: u32) -> Vec<f64> {
    let tau = tail.tail_time_constant * sample_rate as f64;
    let len = (3.0 * tau).floor() as usize;
    let a = (-1.0 / tau).exp();
    let a_cut = a.powi(len as i32 + 1);
    let mut acc = 0.0;
    x.iter()
        .enumerate()
        .map(|(n, &v)| {
            acc = a * acc + v;
            if n > len {
                acc -= a_cut * x[n - len - 1];
            }
            v + tail.tail_gain * acc
        })
        .collect()
}

/// Elementwise sum per ear; no clipping.
pub fn mix(frames: &[BinauralFrame]) -> Result<BinauralFrame, AcousticError> {
    let first = frames.first().ok_or(AcousticError::EmptyMix)?;
    let mut out = first.clone();
    for f in &frames[1..] {
        if f.sample_rate != out.sample_rate {
            return Err(AcousticError::RateMismatch(out.sample_rate, f.sample_rate));
        }
        if f.left.len() != out.left.len() || f.right.len() != out.right.len() {
            return Err(AcousticError::FrameLength {
                expected: out.left.len(),
                found: f.left.len(),
            });
        }
        out.left.iter_mut().zip(&f.left).for_each(|(a, b)| *a += b);
        out.right.iter_mut().zip(&f.right).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

/// How the STFT magnitude axes are reduced by four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downsample {
    /// Keep every fourth bin and frame, starting at index 0.
    #[default]
    Stride,
    /// Mean over 4×4 blocks (partial edge blocks average what they cover).
    Average,
}

/// Log-magnitude tensor `[freq][time][ear]`, row-major, ears left then right.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub freq_bins: usize,
    pub time_frames: usize,
    pub sample_rate: u32,
    pub values: Vec<f32>,
}

impl Spectrogram {
    pub const CHANNELS: usize = 2;

    pub fn zeros(freq_bins: usize, time_frames: usize, sample_rate: u32) -> Self {
        Self {
            freq_bins,
            time_frames,
            sample_rate,
            values: vec![0.0; freq_bins * time_frames * 2],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.freq_bins, self.time_frames, Self::CHANNELS)
    }

    pub fn index(&self, f: usize, t: usize, ch: usize) -> usize {
        (f * self.time_frames + t) * Self::CHANNELS + ch
    }

    pub fn get(&self, f: usize, t: usize, ch: usize) -> f32 {
        self.values[self.index(f, t, ch)]
    }

    pub fn set(&mut self, f: usize, t: usize, ch: usize, v: f32) {
        let i = self.index(f, t, ch);
        self.values[i] = v;
    }

    /// Sum of log-magnitudes for one ear.
    pub fn channel_sum(&self, ch: usize) -> f64 {
        self.values.iter().skip(ch).step_by(2).map(|&v| v as f64).sum()
    }

    /// Sum of linear magnitudes (inverting `log(1+x)`) for one ear.
    pub fn channel_magnitude(&self, ch: usize) -> f64 {
        self.values
            .iter()
            .skip(ch)
            .step_by(2)
            .map(|&v| (v as f64).exp_m1())
            .sum()
    }
}

/// Number of STFT frames for a centered transform of `n` samples.
pub fn stft_frames(n: usize) -> usize {
    1 + n / HOP
}

/// Output shape `(bins, frames, 2)` for a one-second frame at `sample_rate`.
pub fn spectrogram_shape(sample_rate: u32) -> (usize, usize, usize) {
    (
        FULL_BINS.div_ceil(DOWNSAMPLE),
        stft_frames(sample_rate as usize).div_ceil(DOWNSAMPLE),
        2,
    )
}

fn fft_plan() -> &'static Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(WINDOW))
}

fn hann() -> &'static [f64] {
    static W: OnceLock<Vec<f64>> = OnceLock::new();
    W.get_or_init(|| {
        (0..WINDOW)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW as f64).cos())
            .collect()
    })
}

/// Reflect-pads by half a window on each side (edge sample not repeated).
pub fn reflect_pad(x: &[f32], pad: usize) -> Vec<f64> {
    let n = x.len() as i64;
    (0..x.len() + 2 * pad)
        .map(|i| {
            let mut j = i as i64 - pad as i64;
            if j < 0 {
                j = -j;
            }
            if j >= n {
                j = 2 * (n - 1) - j;
            }
            x[j.clamp(0, n - 1) as usize] as f64
        })
        .collect()
}

/// STFT magnitudes `[frame][bin]` of the selected frames.
fn stft_magnitudes(x: &[f32], frames: impl Iterator<Item = usize>) -> Vec<Vec<f64>> {
    let padded = reflect_pad(x, WINDOW / 2);
    let w = hann();
    let fft = fft_plan();
    let mut buf = vec![Complex::new(0.0, 0.0); WINDOW];
    frames
        .map(|f| {
            let start = f * HOP;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(padded[start + k] * w[k], 0.0);
            }
            fft.process(&mut buf);
            buf[..FULL_BINS].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

pub fn compute_spectrogram(frame: &BinauralFrame) -> Result<Spectrogram, AcousticError> {
    compute_spectrogram_with(frame, Downsample::Stride)
}

/// Centered STFT (Hann 512, hop 160) per ear, magnitude, reduction by four
/// on both axes, then `log(1 + x)`.
pub fn compute_spectrogram_with(frame: &BinauralFrame, mode: Downsample) -> Result<Spectrogram, AcousticError> {
    let n = frame.sample_rate as usize;
    for ear in [&frame.left, &frame.right] {
        if ear.len() != n {
            return Err(AcousticError::FrameLength {
                expected: n,
                found: ear.len(),
            });
        }
    }
    let total_frames = stft_frames(n);
    let (bins, frames, _) = spectrogram_shape(frame.sample_rate);
    let mut out = Spectrogram::zeros(bins, frames, frame.sample_rate);
    for (ch, ear) in [&frame.left, &frame.right].into_iter().enumerate() {
        match mode {
            Downsample::Stride => {
                let mags = stft_magnitudes(ear, (0..total_frames).step_by(DOWNSAMPLE));
                for (t, col) in mags.iter().enumerate() {
                    for f in 0..bins {
                        out.set(f, t, ch, col[f * DOWNSAMPLE].ln_1p() as f32);
                    }
                }
            }
            Downsample::Average => {
                let mags = stft_magnitudes(ear, 0..total_frames);
                for t in 0..frames {
                    for f in 0..bins {
                        let (mut sum, mut count) = (0.0, 0usize);
                        for col in mags.iter().skip(t * DOWNSAMPLE).take(DOWNSAMPLE) {
                            for v in col.iter().skip(f * DOWNSAMPLE).take(DOWNSAMPLE) {
                                sum += v;
                                count += 1;
                            }
                        }
                        out.set(f, t, ch, (sum / count as f64).ln_1p() as f32);
                    }
                }
            }
        }
    }
    Ok(out)
}
