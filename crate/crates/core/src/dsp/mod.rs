//! Audio front end: fixed-grid segmentation, STFT power spectra, Mel
//! filterbank, log compression and per-night normalisation.
//!
//! The contract is bit-stable: the same night of samples always produces the
//! same feature matrices, and every 30 s segment at 16 kHz yields a
//! `FRAMES_PER_SEGMENT x MEL_BINS` matrix.

pub mod cache;

use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Required input sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Segment length in seconds.
pub const SEGMENT_LEN_S: f64 = 30.0;
/// Segment shift in seconds.
pub const SEGMENT_SHIFT_S: f64 = 10.0;
/// Samples per 30 s segment.
pub const SEGMENT_SAMPLES: usize = 480_000;
/// Samples per 10 s shift.
pub const SHIFT_SAMPLES: usize = 160_000;
/// STFT analysis window: 50 ms Hann.
pub const WINDOW_SAMPLES: usize = 800;
/// STFT hop: 20 ms.
pub const HOP_SAMPLES: usize = 320;
/// FFT size: 800-sample window zero-padded to the next power of two.
pub const FFT_SIZE: usize = 1024;
/// One-sided spectrum size.
pub const FFT_BINS: usize = FFT_SIZE / 2 + 1;
/// Number of Mel filters.
pub const MEL_BINS: usize = 64;
/// Upper edge of the Mel filterbank in Hz.
pub const MEL_FMAX: f64 = 8000.0;
/// Additive floor before log compression.
pub const LOG_EPS: f64 = 1e-10;
/// Lower bound on the per-bin standard deviation used for normalisation.
pub const STD_FLOOR: f64 = 1e-6;
/// STFT frames per 30 s segment: 1 + (480000 - 800) / 320.
pub const FRAMES_PER_SEGMENT: usize = 1 + (SEGMENT_SAMPLES - WINDOW_SAMPLES) / HOP_SAMPLES;
/// STFT frames per 10 s shift (hop-aligned, used to slice night-level frames).
pub const FRAMES_PER_SHIFT: usize = SHIFT_SAMPLES / HOP_SAMPLES;

/// One night of raw audio at the fixed 16 kHz / 16-bit contract.
#[derive(Debug, Clone)]
pub struct AudioNight {
    samples: Vec<i16>,
    sample_rate: u32,
}

impl AudioNight {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(sample_rate));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One 30 s analysis window on the 10 s segment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentWindow {
    pub index: usize,
    pub start_s: f64,
}

impl SegmentWindow {
    pub fn at_index(index: usize) -> Self {
        Self {
            index,
            start_s: index as f64 * SEGMENT_SHIFT_S,
        }
    }

    pub fn length_s(&self) -> f64 {
        SEGMENT_LEN_S
    }

    pub fn shift_s(&self) -> f64 {
        SEGMENT_SHIFT_S
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + SEGMENT_LEN_S
    }

    pub fn center_s(&self) -> f64 {
        self.start_s + SEGMENT_LEN_S / 2.0
    }

    pub fn start_sample(&self) -> usize {
        self.index * SHIFT_SAMPLES
    }
}

/// Magnitude-squared STFT of one segment, `frames x bins`, row-major.
#[derive(Debug, Clone)]
pub struct PowerSpectrogram {
    pub frames: usize,
    pub bins: usize,
    values: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

/// Log-Mel feature matrix for one segment, `frames x MEL_BINS`, row-major.
#[derive(Debug, Clone)]
pub struct MelSegment {
    pub frames: usize,
    pub bins: usize,
    pub normalised: bool,
    values: Vec<f64>,
}

impl MelSegment {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, m: usize) -> f64 {
        self.values[t * self.bins + m]
    }

    /// Compact single-precision copy for training and caching.
    pub fn to_f32(&self) -> FeatureMatrix {
        FeatureMatrix {
            frames: self.frames,
            bins: self.bins,
            data: self.values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Single-precision feature matrix, the storage format used by the model
/// input path and the on-disk feature cache.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f32>,
}

/// Per-Mel-bin night statistics persisted for reuse at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BinStats {
    pub fn denormalise(&self, v: f64, bin: usize) -> f64 {
        v * self.std[bin].max(STD_FLOOR) + self.mean[bin]
    }
}

/// Windows, normalised segments and the normalisation record for one night.
#[derive(Debug, Clone)]
pub struct NightFeatures {
    pub windows: Vec<SegmentWindow>,
    pub segments: Vec<MelSegment>,
    pub stats: BinStats,
}

impl NightFeatures {
    pub fn to_f32(&self) -> Vec<FeatureMatrix> {
        self.segments.iter().map(MelSegment::to_f32).collect()
    }
}

/// Plans the 30 s / 10 s-shift window grid for a night of `n_samples`.
/// Trailing audio shorter than a full window is dropped.
pub fn segment_grid(n_samples: usize) -> Result<Vec<SegmentWindow>> {
    if n_samples < SEGMENT_SAMPLES {
        return Err(Error::NightTooShort {
            duration_s: n_samples as f64 / SAMPLE_RATE as f64,
        });
    }
    let count = (n_samples - SEGMENT_SAMPLES) / SHIFT_SAMPLES + 1;
    Ok((0..count).map(SegmentWindow::at_index).collect())
}

/// Window grid for a planned duration in seconds (no audio needed).
pub fn segment_windows(duration_s: f64) -> Result<Vec<SegmentWindow>> {
    let n = (duration_s * SAMPLE_RATE as f64).round();
    if !(0.0..=u64::MAX as f64).contains(&n) {
        return Err(Error::NightTooShort { duration_s });
    }
    segment_grid(n as usize)
}

pub fn segment_audio(night: &AudioNight) -> Result<Vec<SegmentWindow>> {
    segment_grid(night.samples().len())
}

/// Number of STFT frames for a slice of `n_samples` (valid for any
/// `n_samples >= WINDOW_SAMPLES`).
pub fn frame_count(n_samples: usize) -> usize {
    if n_samples < WINDOW_SAMPLES {
        0
    } else {
        1 + (n_samples - WINDOW_SAMPLES) / HOP_SAMPLES
    }
}

/// Periodic Hann window of `WINDOW_SAMPLES` points.
pub(crate) fn hann_window() -> Vec<f64> {
    (0..WINDOW_SAMPLES)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / WINDOW_SAMPLES as f64).cos()))
        .collect()
}

pub(crate) struct StftEngine {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl StftEngine {
    pub(crate) fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            window: hann_window(),
            buf: vec![Complex::default(); FFT_SIZE],
            scratch,
        }
    }

    /// Power spectrum of the frame starting at `start`, written to `out`
    /// (`FFT_BINS` values). `start + WINDOW_SAMPLES` must be in range.
    pub(crate) fn frame_power(&mut self, samples: &[i16], start: usize, out: &mut [f64]) {
        for (j, (b, &w)) in self.buf.iter_mut().zip(self.window.iter()).enumerate() {
            *b = Complex::new(samples[start + j] as f64 / 32768.0 * w, 0.0);
        }
        for b in self.buf[WINDOW_SAMPLES..].iter_mut() {
            *b = Complex::default();
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(self.buf.iter().take(FFT_BINS)) {
            *o = c.re * c.re + c.im * c.im;
        }
    }

    /// Short-term frame energies (mean square of windowed samples) over a
    /// whole slice, used for the snore-to-non-snore quality metric.
    pub(crate) fn frame_energies(samples: &[i16]) -> Vec<f64> {
        let n_frames = frame_count(samples.len());
        let mut out = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let start = t * HOP_SAMPLES;
            let mut acc = 0.0;
            for &s in &samples[start..start + WINDOW_SAMPLES] {
                let v = s as f64 / 32768.0;
                acc += v * v;
            }
            out.push(acc / WINDOW_SAMPLES as f64);
        }
        out
    }
}

/// Hann-windowed magnitude-squared STFT of one exact 30 s segment.
pub fn stft_power(segment: &[i16]) -> Result<PowerSpectrogram> {
    if segment.len() != SEGMENT_SAMPLES {
        return Err(Error::SegmentLength {
            expected: SEGMENT_SAMPLES,
            got: segment.len(),
        });
    }
    let mut engine = StftEngine::new();
    let frames = frame_count(segment.len());
    let mut values = vec![0.0; frames * FFT_BINS];
    for t in 0..frames {
        engine.frame_power(segment, t * HOP_SAMPLES, &mut values[t * FFT_BINS..(t + 1) * FFT_BINS]);
    }
    Ok(PowerSpectrogram {
        frames,
        bins: FFT_BINS,
        values,
    })
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

struct FilterRow {
    start_bin: usize,
    weights: Vec<f64>,
}

/// Triangular Mel filterbank: HTK scale, peak-normalised filters, centres
/// equally spaced on the Mel scale between 0 Hz and `MEL_FMAX`.
pub struct MelFilterbank {
    pub mel_bins: usize,
    pub fft_bins: usize,
    pub sample_rate: u32,
    rows: Vec<FilterRow>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(mel_bins: usize, sample_rate: u32, fft_bins: usize) -> Self {
        let fft_size = (fft_bins - 1) * 2;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mel_max = hz_to_mel(MEL_FMAX);
        // mel_bins + 2 edge points; filter m spans (edge[m], edge[m+2]) with
        // its peak at edge[m+1]
        let edges_hz: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let mut rows = Vec::with_capacity(mel_bins);
        for m in 0..mel_bins {
            let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let mut start_bin = None;
            let mut weights = Vec::new();
            for k in 0..fft_bins {
                let f = k as f64 * bin_hz;
                let up = (f - lo) / (center - lo);
                let down = (hi - f) / (hi - center);
                let w = up.min(down).max(0.0);
                if w > 0.0 {
                    if start_bin.is_none() {
                        start_bin = Some(k);
                    }
                    weights.push(w);
                } else if start_bin.is_some() {
                    break;
                }
            }
            rows.push(FilterRow {
                start_bin: start_bin.unwrap_or(0),
                weights,
            });
        }
        Self {
            mel_bins,
            fft_bins,
            sample_rate,
            rows,
            centers_hz: edges_hz[1..=mel_bins].to_vec(),
        }
    }

    /// Peak frequency of filter `m` in Hz.
    pub fn center_hz(&self, m: usize) -> f64 {
        self.centers_hz[m]
    }

    /// Mel-scale spacing between adjacent filter centres, in Hz around
    /// filter `m` (the width of its triangle support is two spacings).
    pub fn spacing_hz(&self, m: usize) -> f64 {
        let lo = if m == 0 { 0.0 } else { self.centers_hz[m - 1] };
        let hi = if m + 1 == self.mel_bins {
            MEL_FMAX
        } else {
            self.centers_hz[m + 1]
        };
        (hi - lo) / 2.0
    }

    /// `out[m] = sum_k w[m][k] * power[k]` over the sparse triangle support.
    pub fn apply(&self, power_frame: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.rows.iter()) {
            let mut acc = 0.0;
            for (w, p) in row
                .weights
                .iter()
                .zip(power_frame[row.start_bin..].iter())
            {
                acc += w * p;
            }
            *o = acc;
        }
    }

    /// Dense `mel_bins x fft_bins` filter matrix, row-major.
    pub fn dense(&self) -> Vec<f64> {
        let mut mat = vec![0.0; self.mel_bins * self.fft_bins];
        for (m, row) in self.rows.iter().enumerate() {
            for (j, &w) in row.weights.iter().enumerate() {
                mat[m * self.fft_bins + row.start_bin + j] = w;
            }
        }
        mat
    }
}

/// Builds the 64-filter bank matching the `stft_power` bin layout.
pub fn mel_filterbank() -> MelFilterbank {
    MelFilterbank::new(MEL_BINS, SAMPLE_RATE, FFT_BINS)
}

/// Log-compressed Mel spectrogram: `ln(bank * frame + LOG_EPS)` per frame.
pub fn log_mel(spec: &PowerSpectrogram, bank: &MelFilterbank) -> Result<MelSegment> {
    if spec.bins != bank.fft_bins {
        return Err(Error::DimensionMismatch(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.bins, bank.fft_bins
        )));
    }
    let mut values = vec![0.0; spec.frames * bank.mel_bins];
    let mut mel = vec![0.0; bank.mel_bins];
    for t in 0..spec.frames {
        bank.apply(spec.frame(t), &mut mel);
        for (o, &e) in values[t * bank.mel_bins..(t + 1) * bank.mel_bins]
            .iter_mut()
            .zip(mel.iter())
        {
            *o = (e + LOG_EPS).ln();
        }
    }
    Ok(MelSegment {
        frames: spec.frames,
        bins: bank.mel_bins,
        normalised: false,
        values,
    })
}

/// Normalises every segment of one night per Mel bin: statistics are taken
/// over every frame of every segment, each value becomes
/// `(v - mean) / max(std, STD_FLOOR)`. Returns the transformed segments and
/// the persisted (mean, std) record.
pub fn normalize_per_bin(segments: &[MelSegment]) -> Result<(Vec<MelSegment>, BinStats)> {
    if segments.is_empty() {
        return Err(Error::EmptyInput("no segments to normalise"));
    }
    let bins = segments[0].bins;
    for s in segments {
        if s.bins != bins {
            return Err(Error::DimensionMismatch(
                "segments disagree on Mel bin count".into(),
            ));
        }
    }
    let mut mean = vec![0.0f64; bins];
    let mut count = 0u64;
    for s in segments {
        for t in 0..s.frames {
            for (acc, &v) in mean.iter_mut().zip(s.frame(t)) {
                *acc += v;
            }
        }
        count += s.frames as u64;
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut var = vec![0.0f64; bins];
    for s in segments {
        for t in 0..s.frames {
            for ((acc, &mu), &v) in var.iter_mut().zip(mean.iter()).zip(s.frame(t)) {
                let d = v - mu;
                *acc += d * d;
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|&v| (v / count as f64).sqrt()).collect();
    let out = segments
        .iter()
        .map(|s| {
            let mut values = s.values.clone();
            for t in 0..s.frames {
                for (v, (mu, sd)) in values[t * bins..(t + 1) * bins]
                    .iter_mut()
                    .zip(mean.iter().zip(std.iter()))
                {
                    *v = (*v - mu) / sd.max(STD_FLOOR);
                }
            }
            MelSegment {
                frames: s.frames,
                bins: s.bins,
                normalised: true,
                values,
            }
        })
        .collect();
    Ok((
        out,
        BinStats {
            mean,
            std,
        },
    ))
}

/// Full front end for one night: segmentation, STFT, Mel filterbank, log
/// compression and per-night normalisation.
///
/// STFT frames are computed once on the night-level hop grid and sliced per
/// segment (the 10 s shift is exactly `FRAMES_PER_SHIFT` hops), which is
/// bit-identical to running `stft_power` per segment.
pub fn extract_features(night: &AudioNight) -> Result<NightFeatures> {
    let windows = segment_audio(night)?;
    let bank = mel_filterbank();
    let last = windows.last().expect("segment_audio returns >= 1 window");
    let n_frames = last.index * FRAMES_PER_SHIFT + FRAMES_PER_SEGMENT;

    let mut engine = StftEngine::new();
    let mut night_mel = vec![0.0f64; n_frames * MEL_BINS];
    let mut power = vec![0.0f64; FFT_BINS];
    let mut mel = vec![0.0f64; MEL_BINS];
    for t in 0..n_frames {
        engine.frame_power(night.samples(), t * HOP_SAMPLES, &mut power);
        bank.apply(&power, &mut mel);
        for (o, &e) in night_mel[t * MEL_BINS..(t + 1) * MEL_BINS]
            .iter_mut()
            .zip(mel.iter())
        {
            *o = (e + LOG_EPS).ln();
        }
    }

    let raw: Vec<MelSegment> = windows
        .iter()
        .map(|w| {
            let f0 = w.index * FRAMES_PER_SHIFT;
            MelSegment {
                frames: FRAMES_PER_SEGMENT,
                bins: MEL_BINS,
                normalised: false,
                values: night_mel[f0 * MEL_BINS..(f0 + FRAMES_PER_SEGMENT) * MEL_BINS].to_vec(),
            }
        })
        .collect();
    let (segments, stats) = normalize_per_bin(&raw)?;
    Ok(NightFeatures {
        windows,
        segments,
        stats,
    })
}
