//! Synthetic harmonic tones and a fixed-Q log-frequency transform.
//!
//! Bins are geometrically spaced, `f_min * 2^(i / (12 * bps))`, so
//! transposing a harmonic tone by `s` semitones translates its spectrum by
//! `s * bps` bins. Training pairs are two crops of one wide frame taken at
//! different offsets, which makes the pitch shift between them exact in bin
//! units.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Harmonic tone parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicToneSpec {
    pub f0: f64,
    pub num_harmonics: usize,
    /// Amplitude ratio between consecutive harmonics, in `(0, 1]`.
    pub amplitude_decay: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub noise_snr_db: Option<f64>,
}

impl HarmonicToneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0.is_finite() && self.f0 > 0.0) {
            return Err(Error::Domain(format!("f0 = {} must be positive", self.f0)));
        }
        if self.num_harmonics == 0 {
            return Err(Error::Domain("at least one harmonic is required".into()));
        }
        if !(self.amplitude_decay > 0.0 && self.amplitude_decay <= 1.0) {
            return Err(Error::Domain(format!("amplitude decay {} outside (0, 1]", self.amplitude_decay)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Domain(format!("duration {} must be positive", self.duration)));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Domain(format!("sample rate {} must be positive", self.sample_rate)));
        }
        let top = self.f0 * self.num_harmonics as f64;
        if top >= self.sample_rate / 2.0 {
            return Err(Error::Domain(format!(
                "harmonic {} at {top} Hz aliases at sample rate {}",
                self.num_harmonics, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }
}

/// `sum_h decay^(h-1) sin(2 pi h f0 t + phi_h)` with random phases, peak
/// normalized to 0.9, plus optional white noise at the requested SNR.
pub fn synth_tone(spec: &HarmonicToneSpec, rng: &mut impl Rng) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.num_samples();
    if n == 0 {
        return Err(Error::Domain("duration rounds to zero samples".into()));
    }
    let phases: Vec<f64> = (0..spec.num_harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut out = vec![0.0; n];
    let mut amp = 1.0;
    for (h, phase) in phases.iter().enumerate() {
        let w = 2.0 * PI * (h + 1) as f64 * spec.f0 / spec.sample_rate;
        for (t, s) in out.iter_mut().enumerate() {
            *s += amp * (w * t as f64 + phase).sin();
        }
        amp *= spec.amplitude_decay;
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|s| *s *= 0.9 / peak);
    }
    if let Some(snr) = spec.noise_snr_db {
        let power = out.iter().map(|s| s * s).sum::<f64>() / n as f64;
        let std = (power / 10f64.powf(snr / 10.0)).sqrt();
        let noise = Normal::new(0.0, std).map_err(|e| Error::Domain(e.to_string()))?;
        out.iter_mut().for_each(|s| *s += noise.sample(rng));
    }
    Ok(out)
}

/// Magnitude frames on geometrically spaced bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrogram {
    /// `[time][bin]` magnitudes.
    pub frames: Vec<Vec<f64>>,
    pub bin_frequencies: Vec<f64>,
    pub bins_per_semitone: usize,
    pub hop: usize,
}

/// `f_min * 2^(i / (12 * bps))` for `i in 0..n_bins`.
pub fn bin_frequencies(f_min: f64, n_bins: usize, bins_per_semitone: usize) -> Vec<f64> {
    let per_octave = 12.0 * bins_per_semitone as f64;
    (0..n_bins).map(|i| f_min * (i as f64 / per_octave).exp2()).collect()
}

#[derive(Debug, Clone)]
struct Kernel {
    /// Offset of sample 0 relative to the frame center.
    start: isize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Precomputed constant-Q analysis kernels: for bin `k` a Hann window of
/// length `Q * sr / f_k` modulating `exp(-2 pi i f_k t)`, scaled so that a
/// unit sinusoid at `f_k` has magnitude 0.5.
#[derive(Debug, Clone)]
pub struct LogFreqTransform {
    sample_rate: f64,
    bins_per_semitone: usize,
    hop: usize,
    frequencies: Vec<f64>,
    kernels: Vec<Kernel>,
}

impl LogFreqTransform {
    pub fn new(sample_rate: f64, f_min: f64, n_bins: usize, bins_per_semitone: usize, q: f64, hop: usize) -> Result<Self> {
        if n_bins == 0 || bins_per_semitone == 0 || hop == 0 {
            return Err(Error::Domain("bin count, bins per semitone and hop must be positive".into()));
        }
        if !(f_min > 0.0 && q > 0.0 && sample_rate > 0.0) {
            return Err(Error::Domain("f_min, Q and sample rate must be positive".into()));
        }
        let top = f_min * (n_bins as f64 / (12.0 * bins_per_semitone as f64)).exp2();
        if top >= sample_rate / 2.0 {
            return Err(Error::Domain(format!(
                "top bin edge {top:.1} Hz is above Nyquist ({} Hz)",
                sample_rate / 2.0
            )));
        }
        let frequencies = bin_frequencies(f_min, n_bins, bins_per_semitone);
        let kernels = frequencies
            .iter()
            .map(|&f| {
                let len = ((q * sample_rate / f).round() as usize).max(1);
                let center = (len - 1) as f64 / 2.0;
                let window: Vec<f64> = (0..len)
                    .map(|n| if len == 1 { 1.0 } else { 0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos() })
                    .collect();
                let norm: f64 = window.iter().sum();
                let w = 2.0 * PI * f / sample_rate;
                let (re, im) = window
                    .iter()
                    .enumerate()
                    .map(|(n, &h)| {
                        let phase = w * (n as f64 - center);
                        (h * phase.cos() / norm, -h * phase.sin() / norm)
                    })
                    .unzip();
                Kernel {
                    start: -((len / 2) as isize),
                    re,
                    im,
                }
            })
            .collect();
        Ok(Self {
            sample_rate,
            bins_per_semitone,
            hop,
            frequencies,
            kernels,
        })
    }

    pub fn bin_frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_bins(&self) -> usize {
        self.frequencies.len()
    }

    /// Magnitudes of one frame centered on sample `center`; samples outside
    /// the signal read as zero.
    pub fn frame(&self, samples: &[f64], center: usize) -> Vec<f64> {
        let len = samples.len() as isize;
        self.kernels
            .iter()
            .map(|k| {
                let first = center as isize + k.start;
                let lo = (-first).max(0) as usize;
                let hi = ((len - first).max(0) as usize).min(k.re.len());
                let (mut re, mut im) = (0.0, 0.0);
                if lo < hi {
                    let src = &samples[(first + lo as isize) as usize..(first + hi as isize) as usize];
                    for ((x, kr), ki) in src.iter().zip(&k.re[lo..hi]).zip(&k.im[lo..hi]) {
                        re += x * kr;
                        im += x * ki;
                    }
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    /// Frames centered at `0, hop, 2 hop, ...` over the whole signal.
    pub fn transform(&self, samples: &[f64]) -> LogSpectrogram {
        let count = if samples.is_empty() { 0 } else { (samples.len() - 1) / self.hop + 1 };
        LogSpectrogram {
            frames: (0..count).map(|m| self.frame(samples, m * self.hop)).collect(),
            bin_frequencies: self.frequencies.clone(),
            bins_per_semitone: self.bins_per_semitone,
            hop: self.hop,
        }
    }
}

/// One-shot form of [`LogFreqTransform::transform`].
pub fn log_freq_transform(
    samples: &[f64],
    sample_rate: f64,
    f_min: f64,
    n_bins: usize,
    bins_per_semitone: usize,
    q: f64,
    hop: usize,
) -> Result<LogSpectrogram> {
    Ok(LogFreqTransform::new(sample_rate, f_min, n_bins, bins_per_semitone, q, hop)?.transform(samples))
}

/// `log(1 + gamma |x|)` followed by division by the frame maximum.
pub fn compress(frame: &[f64], gamma: f64) -> Vec<f64> {
    let mut out: Vec<f64> = frame.iter().map(|x| (gamma * x.abs()).ln_1p()).collect();
    let max = out.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    out
}

/// Frontend settings shared by data generation, training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: f64,
    /// Frequency of bin 0 of the model input frame.
    pub f_min: f64,
    pub n_bins: usize,
    pub bins_per_semitone: usize,
    pub q: f64,
    pub hop: usize,
    /// Extra bins on each side of the wide frame; bounds the pair shift.
    pub k_max: usize,
    /// Log-compression factor.
    pub compression: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            // C1; puts 65-1000 Hz well inside the encoder's cropped output range
            f_min: 32.703_195_662_574_83,
            n_bins: 216,
            bins_per_semitone: 3,
            q: 24.0,
            hop: 160,
            k_max: 24,
            compression: 10.0,
        }
    }
}

impl FrontendConfig {
    pub fn bins_per_octave(&self) -> f64 {
        12.0 * self.bins_per_semitone as f64
    }

    /// Fractional input bin of a frequency (bin 0 at `f_min`).
    pub fn bin_of(&self, hz: f64) -> f64 {
        self.bins_per_octave() * (hz / self.f_min).log2()
    }

    pub fn wide_bins(&self) -> usize {
        self.n_bins + 2 * self.k_max
    }

    pub fn wide_f_min(&self) -> f64 {
        self.f_min * (-(self.k_max as f64) / self.bins_per_octave()).exp2()
    }
}

/// Log-frequency analysis producing compressed model inputs.
#[derive(Debug, Clone)]
pub struct Frontend {
    config: FrontendConfig,
    wide: LogFreqTransform,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        let wide = LogFreqTransform::new(
            config.sample_rate,
            config.wide_f_min(),
            config.wide_bins(),
            config.bins_per_semitone,
            config.q,
            config.hop,
        )?;
        Ok(Self { config, wide })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn wide_transform(&self) -> &LogFreqTransform {
        &self.wide
    }

    /// Compressed, max-normalized wide frame (`n_bins + 2 k_max` bins).
    pub fn wide_frame(&self, samples: &[f64], center: usize) -> Vec<f64> {
        compress(&self.wide.frame(samples, center), self.config.compression)
    }

    /// Unshifted model input: the center crop of the wide frame.
    pub fn input_frame(&self, samples: &[f64], center: usize) -> Vec<f64> {
        let wide = self.wide_frame(samples, center);
        let k = self.config.k_max;
        wide[k..k + self.config.n_bins].to_vec()
    }

    /// Frequencies of the model input bins.
    pub fn input_frequencies(&self) -> &[f64] {
        let k = self.config.k_max;
        &self.wide.bin_frequencies()[k..k + self.config.n_bins]
    }
}

/// Record of one pitch-preserving augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub gain_db: f64,
    pub noise_std: f64,
}

/// Two crops of a wide frame related by a known bin shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedPair {
    pub x: Vec<f64>,
    /// `x` transposed up by `k` bins.
    pub x_k: Vec<f64>,
    pub k: i64,
    pub f0_hz: Option<f64>,
    pub augmentations: Vec<Augmentation>,
}

/// Crops `x` at the center and `x_k` at offset `k_max - k`, so content at
/// bin `b` of `x` sits at bin `b + k` of `x_k`.
pub fn crop_pair(wide: &[f64], n_bins: usize, k_max: usize, k: i64) -> Result<ShiftedPair> {
    if wide.len() != n_bins + 2 * k_max {
        return Err(Error::Shape(format!(
            "wide frame has {} bins, expected {} + 2 * {}",
            wide.len(),
            n_bins,
            k_max
        )));
    }
    if k.unsigned_abs() as usize > k_max {
        return Err(Error::ShiftOutOfRange { k, k_max });
    }
    let offset = (k_max as i64 - k) as usize;
    Ok(ShiftedPair {
        x: wide[k_max..k_max + n_bins].to_vec(),
        x_k: wide[offset..offset + n_bins].to_vec(),
        k,
        f0_hz: None,
        augmentations: Vec::new(),
    })
}

/// Draws `k` uniformly from `[-k_max, k_max]` and crops the pair.
pub fn sample_shifted_pair(wide: &[f64], n_bins: usize, k_max: usize, rng: &mut impl Rng) -> Result<ShiftedPair> {
    let k = rng.random_range(-(k_max as i64)..=k_max as i64);
    crop_pair(wide, n_bins, k_max, k)
}

/// Random gain in `gain_range_db` and half-normal additive noise, clamped
/// at zero.
pub fn augment(frame: &[f64], rng: &mut impl Rng, gain_range_db: (f64, f64), noise_std: f64) -> (Vec<f64>, Augmentation) {
    let (lo, hi) = gain_range_db;
    let gain_db = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let gain = 10f64.powf(gain_db / 20.0);
    let noise = (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("positive std"));
    let out = frame
        .iter()
        .map(|&v| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng).abs());
            (v * gain + n).max(0.0)
        })
        .collect();
    (out, Augmentation { gain_db, noise_std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(f0: f64, harmonics: usize, decay: f64) -> HarmonicToneSpec {
        HarmonicToneSpec {
            f0,
            num_harmonics: harmonics,
            amplitude_decay: decay,
            duration: 1.0,
            sample_rate: 16_000.0,
            noise_snr_db: None,
        }
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = tone(220.0, 3, 0.5);
        s.duration = 0.0;
        assert!(matches!(synth_tone(&s, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(synth_tone(&tone(3000.0, 3, 0.5), &mut rng), Err(Error::Domain(_))));
        let ok = synth_tone(&tone(220.0, 3, 0.5), &mut rng).unwrap();
        assert_eq!(ok.len(), 16_000);
        let peak = ok.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((peak - 0.9).abs() < 1e-12);
    }

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let t = LogFreqTransform::new(16_000.0, 55.0, 144, 3, 24.0, 160).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for j in [10, 40, 77, 120] {
            let f = t.bin_frequencies()[j];
            let x = synth_tone(&tone(f, 1, 1.0), &mut rng).unwrap();
            assert_eq!(argmax(&t.frame(&x, 8000)), j);
        }
    }

    #[test]
    fn harmonic_magnitudes_follow_decay() {
        let t = LogFreqTransform::new(16_000.0, 55.0, 216, 3, 24.0, 160).unwrap();
        let f0 = t.bin_frequencies()[30];
        let x = synth_tone(&tone(f0, 3, 0.5), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let frame = t.frame(&x, 8000);
        let mag = |h: f64| frame[(30.0 + 36.0 * h.log2()).round() as usize];
        let (m1, m2, m3) = (mag(1.0), mag(2.0), mag(3.0));
        assert!((m2 / m1 - 0.5).abs() < 0.025, "{}", m2 / m1);
        assert!((m3 / m1 - 0.25).abs() < 0.0125, "{}", m3 / m1);
    }

    #[test]
    fn silence_is_zero() {
        let spec = log_freq_transform(&vec![0.0; 4000], 16_000.0, 55.0, 72, 3, 24.0, 400).unwrap();
        assert_eq!(spec.frames.len(), 10);
        assert!(spec.frames.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn nyquist_violation() {
        assert!(matches!(
            LogFreqTransform::new(16_000.0, 1000.0, 216, 3, 24.0, 160),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bins_are_geometric() {
        let f = bin_frequencies(32.7, 300, 3);
        let ratio = f[1] / f[0];
        for w in f.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn crop_pair_examples() {
        let mut wide = vec![0.0; 20 + 8];
        wide[4 + 7] = 1.0;
        let same = crop_pair(&wide, 20, 4, 0).unwrap();
        assert_eq!(same.x, same.x_k);
        let up = crop_pair(&wide, 20, 4, 3).unwrap();
        assert_eq!(argmax(&up.x), 7);
        assert_eq!(argmax(&up.x_k), 10);
        assert!(matches!(crop_pair(&wide, 21, 4, 0), Err(Error::Shape(_))));
        assert!(matches!(crop_pair(&wide, 20, 4, 5), Err(Error::ShiftOutOfRange { .. })));
    }

    #[test]
    fn augment_identity_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = vec![0.0, 0.3, 1.0, 0.2];
        let (out, rec) = augment(&frame, &mut rng, (0.0, 0.0), 0.0);
        assert_eq!(out, frame);
        assert_eq!(rec.gain_db, 0.0);
        for _ in 0..100 {
            let (out, _) = augment(&frame, &mut rng, (-12.0, 12.0), 0.5);
            assert!(out.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn compression_normalizes_peak() {
        let c = compress(&[0.0, 0.5, 0.25], 10.0);
        assert_eq!(c[1], 1.0);
        assert_eq!(c[0], 0.0);
        assert!((c[2] - 3.5f64.ln() / 6f64.ln()).abs() < 1e-15);
        assert_eq!(compress(&[0.0, 0.0], 10.0), vec![0.0, 0.0]);
    }
}
