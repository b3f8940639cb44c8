//! MFCC feature extraction and the DSP primitives underneath it.
//!
//! The chain for one 0.99 s segment: pre-emphasis, 25 ms Hamming frames with
//! a 10 ms hop, radix-2 FFT, power spectrum, triangular mel filterbank,
//! floored natural-log energies, and an orthonormal DCT-II keeping the first
//! `n_coefficients` cepstra. With the default configuration a segment maps to
//! a 97 x 13 [`FeatureMatrix`].
//!
//! [`fft`], [`mel_filterbank`], and [`dct2`] are exposed on their own; the
//! plotting and inspection examples use them directly.

use crate::audio::{Segment, CANONICAL_SAMPLE_RATE};
pub use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("FFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid mel band {low_hz}..{high_hz} Hz for Nyquist {nyquist_hz} Hz")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        nyquist_hz: f64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input contains a non-finite value")]
    NonFinite,
}

/// Parameters of the MFCC chain. `Default` matches the pipeline settings
/// used everywhere else in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    /// First-difference pre-emphasis coefficient.
    pub pre_emphasis: f64,
    /// Analysis frame length in samples (25 ms at 16 kHz).
    pub frame_length: usize,
    /// Hop between frame starts in samples (10 ms at 16 kHz).
    pub frame_hop: usize,
    /// FFT size; frames are zero-padded up to this length.
    pub fft_size: usize,
    /// Number of triangular mel filters.
    pub n_mel_filters: usize,
    /// Lower edge of the mel band in Hz.
    pub mel_low_hz: f64,
    /// Upper edge of the mel band in Hz; must not exceed Nyquist.
    pub mel_high_hz: f64,
    /// Cepstral coefficients kept per frame.
    pub n_coefficients: usize,
    /// Floor applied to filterbank energies before the log.
    pub energy_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            pre_emphasis: 0.97,
            frame_length: 400,
            frame_hop: 160,
            fft_size: 512,
            n_mel_filters: 40,
            mel_low_hz: 0.0,
            mel_high_hz: 8_000.0,
            n_coefficients: 13,
            energy_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        if !self.fft_size.is_power_of_two() || self.fft_size == 0 {
            return Err(DspError::NotPowerOfTwo(self.fft_size));
        }
        if self.frame_length == 0 || self.frame_hop == 0 {
            return Err(DspError::InvalidConfig(
                "frame length and hop must be positive".into(),
            ));
        }
        if self.frame_length > self.fft_size {
            return Err(DspError::InvalidConfig(format!(
                "frame length {} exceeds FFT size {}",
                self.frame_length, self.fft_size
            )));
        }
        if self.n_mel_filters == 0 {
            return Err(DspError::InvalidConfig("need at least one mel filter".into()));
        }
        if self.n_coefficients == 0 || self.n_coefficients > self.n_mel_filters {
            return Err(DspError::InvalidConfig(format!(
                "coefficient count {} must lie in 1..={}",
                self.n_coefficients, self.n_mel_filters
            )));
        }
        if !(self.energy_floor > 0.0) {
            return Err(DspError::InvalidConfig("energy floor must be positive".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.mel_low_hz >= 0.0
            && self.mel_low_hz < self.mel_high_hz
            && self.mel_high_hz <= nyquist)
        {
            return Err(DspError::InvalidBand {
                low_hz: self.mel_low_hz,
                high_hz: self.mel_high_hz,
                nyquist_hz: nyquist,
            });
        }
        Ok(())
    }
}

/// In-place iterative radix-2 Cooley-Tukey FFT. Input length must be a
/// power of two (length 1 is the identity).
pub fn fft(input: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    let n = input.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(DspError::NotPowerOfTwo(n));
    }
    if input.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(DspError::NonFinite);
    }
    let mut a = input.to_vec();
    if n == 1 {
        return Ok(a);
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            a.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let step = -2.0 * PI / len as f64;
        let w_len = Complex64::new(step.cos(), step.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let even = a[start + k];
                let odd = a[start + k + len / 2] * w;
                a[start + k] = even + odd;
                a[start + k + len / 2] = even - odd;
                w *= w_len;
            }
        }
        len <<= 1;
    }
    Ok(a)
}

/// Frequency in Hz to mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Mel scale to frequency in Hz.
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank as a dense `n_filters x n_bins` weight matrix
/// over the one-sided power spectrum (`n_bins = fft_size / 2 + 1`).
#[derive(Debug, Clone)]
pub struct FilterBank {
    weights: Vec<f64>,
    n_filters: usize,
    n_bins: usize,
    /// Band edges in Hz: `edges[j]..edges[j + 2]` spans filter `j` with its
    /// peak at `edges[j + 1]`.
    edges_hz: Vec<f64>,
}

impl FilterBank {
    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Weight row for one filter.
    pub fn row(&self, filter: usize) -> &[f64] {
        &self.weights[filter * self.n_bins..(filter + 1) * self.n_bins]
    }

    /// `(left, center, right)` band edges of one filter in Hz.
    pub fn band_hz(&self, filter: usize) -> (f64, f64, f64) {
        (
            self.edges_hz[filter],
            self.edges_hz[filter + 1],
            self.edges_hz[filter + 2],
        )
    }

    /// Apply the bank to a one-sided power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        assert_eq!(power.len(), self.n_bins, "power spectrum length mismatch");
        (0..self.n_filters)
            .map(|f| {
                self.row(f)
                    .iter()
                    .zip(power)
                    .map(|(w, p)| w * p)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Build the triangular filterbank for `config` at a given sample rate.
/// Filter peaks are spaced uniformly on the mel scale between the band
/// edges; each triangle rises from its left edge to its center and falls to
/// its right edge, evaluated at the FFT bin center frequencies.
pub fn mel_filterbank(config: &MfccConfig, sample_rate: u32) -> Result<FilterBank, DspError> {
    config.validate(sample_rate)?;
    let n_bins = config.fft_size / 2 + 1;
    let n_filters = config.n_mel_filters;

    let mel_low = hz_to_mel(config.mel_low_hz);
    let mel_high = hz_to_mel(config.mel_high_hz);
    let edges_hz: Vec<f64> = (0..n_filters + 2)
        .map(|i| {
            mel_to_hz(mel_low + (mel_high - mel_low) * i as f64 / (n_filters + 1) as f64)
        })
        .collect();

    let bin_hz = sample_rate as f64 / config.fft_size as f64;
    let mut weights = vec![0.0; n_filters * n_bins];
    for j in 0..n_filters {
        let (left, center, right) = (edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]);
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let w = if f >= left && f <= center && center > left {
                (f - left) / (center - left)
            } else if f > center && f <= right && right > center {
                (right - f) / (right - center)
            } else {
                0.0
            };
            weights[j * n_bins + b] = w;
        }
    }
    Ok(FilterBank {
        weights,
        n_filters,
        n_bins,
        edges_hz,
    })
}

/// Orthonormal DCT-II of `x`, truncated to the first `k` coefficients.
///
/// `y[j] = s_j * sum_t x[t] * cos(pi * j * (2t + 1) / (2n))` with
/// `s_0 = sqrt(1/n)` and `s_j = sqrt(2/n)` otherwise, so the full transform
/// preserves the Euclidean norm.
pub fn dct2(x: &[f64], k: usize) -> Result<Vec<f64>, DspError> {
    let n = x.len();
    if n == 0 || k == 0 || k > n {
        return Err(DspError::InvalidConfig(format!(
            "dct2 requires 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DspError::NonFinite);
    }
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let scale = if j == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        let sum: f64 = x
            .iter()
            .enumerate()
            .map(|(t, &v)| v * (PI * j as f64 * (2 * t + 1) as f64 / (2 * n) as f64).cos())
            .sum();
        out.push(scale * sum);
    }
    Ok(out)
}

/// Row-major `n_frames x n_coefficients` matrix of cepstra.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_frames: usize,
    n_coefficients: usize,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, n_frames: usize, n_coefficients: usize) -> Result<Self, DspError> {
        if values.len() != n_frames * n_coefficients {
            return Err(DspError::InvalidConfig(format!(
                "matrix data length {} does not match {n_frames} x {n_coefficients}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DspError::NonFinite);
        }
        Ok(Self {
            values,
            n_frames,
            n_coefficients,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_coefficients
    }

    pub fn get(&self, frame: usize, coeff: usize) -> f64 {
        self.values[frame * self.n_coefficients + coeff]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_coefficients..(frame + 1) * self.n_coefficients]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV dump, one frame per line, full float precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for frame in 0..self.n_frames {
            let row: Vec<String> = self.row(frame).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Number of frames produced for a signal of `len` samples.
pub fn frame_count(len: usize, config: &MfccConfig) -> usize {
    if len < config.frame_length {
        0
    } else {
        (len - config.frame_length) / config.frame_hop + 1
    }
}

/// Extract MFCCs from a canonical segment.
pub fn mfcc(segment: &Segment, config: &MfccConfig) -> Result<FeatureMatrix, DspError> {
    mfcc_signal(segment.samples(), config)
}

/// Extract MFCCs from a raw canonical-rate sample buffer. Exposed so tests
/// and examples can run the chain on signals of arbitrary length.
pub fn mfcc_signal(samples: &[f64], config: &MfccConfig) -> Result<FeatureMatrix, DspError> {
    config.validate(CANONICAL_SAMPLE_RATE)?;
    let n_frames = frame_count(samples.len(), config);
    if n_frames == 0 {
        return Err(DspError::InvalidConfig(format!(
            "signal of {} samples is shorter than one {}-sample frame",
            samples.len(),
            config.frame_length
        )));
    }

    // Pre-emphasis over the whole signal; the first sample passes through.
    let mut emphasized = Vec::with_capacity(samples.len());
    emphasized.push(samples[0]);
    for t in 1..samples.len() {
        emphasized.push(samples[t] - config.pre_emphasis * samples[t - 1]);
    }

    let window: Vec<f64> = (0..config.frame_length)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (config.frame_length - 1) as f64).cos())
        .collect();
    let bank = mel_filterbank(config, CANONICAL_SAMPLE_RATE)?;
    let n_bins = config.fft_size / 2 + 1;

    let mut values = Vec::with_capacity(n_frames * config.n_coefficients);
    let mut buf = vec![Complex64::new(0.0, 0.0); config.fft_size];
    for frame in 0..n_frames {
        let start = frame * config.frame_hop;
        for i in 0..config.fft_size {
            let v = if i < config.frame_length {
                emphasized[start + i] * window[i]
            } else {
                0.0
            };
            buf[i] = Complex64::new(v, 0.0);
        }
        let spectrum = fft(&buf)?;
        let power: Vec<f64> = spectrum[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        let log_energies: Vec<f64> = bank
            .apply(&power)
            .iter()
            .map(|&e| e.max(config.energy_floor).ln())
            .collect();
        values.extend(dct2(&log_energies, config.n_coefficients)?);
    }
    FeatureMatrix::new(values, n_frames, config.n_coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SEGMENT_SAMPLES;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadratic-time DFT used as the oracle for the fast transform.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|t| {
                        let angle = -2.0 * PI * (k * t) as f64 / n as f64;
                        x[t] * Complex64::new(angle.cos(), angle.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn segment_from(samples: Vec<f64>) -> Segment {
        Segment::new(samples, "test", 0).unwrap()
    }

    #[test]
    fn fft_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[1usize, 2, 4, 64, 512] {
            let x = random_signal(&mut rng, n);
            let fast = fft(&x).unwrap();
            let slow = naive_dft(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fft_rejects_non_power_of_two() {
        let x = vec![Complex64::new(0.0, 0.0); 300];
        assert!(matches!(fft(&x), Err(DspError::NotPowerOfTwo(300))));
        assert!(matches!(fft(&[]), Err(DspError::NotPowerOfTwo(0))));
    }

    #[test]
    fn fft_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_signal(&mut rng, 128);
        let y = random_signal(&mut rng, 128);
        let (a, b) = (Complex64::new(1.7, -0.3), Complex64::new(-0.4, 2.1));
        let combined: Vec<Complex64> = x
            .iter()
            .zip(&y)
            .map(|(xv, yv)| a * xv + b * yv)
            .collect();
        let lhs = fft(&combined).unwrap();
        let fx = fft(&x).unwrap();
        let fy = fft(&y).unwrap();
        for k in 0..128 {
            let rhs = a * fx[k] + b * fy[k];
            assert!((lhs[k] - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn fft_preserves_energy() {
        // Parseval: sum |x|^2 = (1/n) sum |X|^2.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_signal(&mut rng, 256);
        let spec = fft(&x).unwrap();
        let time: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        let freq: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / 256.0;
        assert!((time - freq).abs() < 1e-9 * time.max(1.0));
    }

    #[test]
    fn mel_conversions_invert() {
        for hz in [0.0, 120.0, 1000.0, 4000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.9855371396243).abs() < 1e-9);
    }

    #[test]
    fn two_filter_centers_match_hand_computation() {
        // Two filters over 0..8000 Hz put peaks at 1/3 and 2/3 of the band
        // in mel: the band is 2840.0230467 mel wide, so the centers sit at
        // 946.6743489 and 1893.3486978 mel, i.e. 921.4557863 Hz and
        // 3055.8840958 Hz (hand-computed).
        let config = MfccConfig {
            n_mel_filters: 2,
            n_coefficients: 1,
            ..MfccConfig::default()
        };
        let bank = mel_filterbank(&config, 16_000).unwrap();
        let (_, c0, _) = bank.band_hz(0);
        let (_, c1, _) = bank.band_hz(1);
        assert!((c0 - 921.4557863447225).abs() < 1e-6, "center 0: {c0}");
        assert!((c1 - 3055.8840958154033).abs() < 1e-6, "center 1: {c1}");
    }

    #[test]
    fn filter_rows_are_nonnegative_and_unimodal() {
        let bank = mel_filterbank(&MfccConfig::default(), 16_000).unwrap();
        for f in 0..bank.n_filters() {
            let row = bank.row(f);
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(row[..peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn dct_of_constant_loads_only_the_first_coefficient() {
        let out = dct2(&[3.0; 8], 8).unwrap();
        assert!((out[0] - 3.0 * 8f64.sqrt()).abs() < 1e-12);
        for &c in &out[1..] {
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn dct_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y = dct2(&x, 40).unwrap();
        let nx: f64 = x.iter().map(|v| v * v).sum();
        let ny: f64 = y.iter().map(|v| v * v).sum();
        assert!((nx - ny).abs() < 1e-9 * nx);
    }

    #[test]
    fn dct_length_one_is_identity() {
        let out = dct2(&[2.5], 1).unwrap();
        assert!((out[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn dct_rejects_bad_truncation() {
        assert!(dct2(&[1.0, 2.0], 3).is_err());
        assert!(dct2(&[1.0, 2.0], 0).is_err());
        assert!(dct2(&[], 1).is_err());
    }

    #[test]
    fn default_segment_shape_is_97_by_13() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let samples: Vec<f64> = (0..SEGMENT_SAMPLES).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let fm = mfcc(&segment_from(samples), &MfccConfig::default()).unwrap();
        assert_eq!(fm.n_frames(), 97);
        assert_eq!(fm.n_coefficients(), 13);
        assert!(fm.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mfcc_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let samples: Vec<f64> = (0..SEGMENT_SAMPLES).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let seg = segment_from(samples);
        let a = mfcc(&seg, &MfccConfig::default()).unwrap();
        let b = mfcc(&seg, &MfccConfig::default()).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn zero_segment_hits_the_energy_floor() {
        // All filter energies floor at 1e-10, so each frame's log energies
        // are the constant ln(1e-10) and the DCT loads only coefficient 0:
        // c0 = ln(1e-10) * sqrt(40).
        let config = MfccConfig::default();
        let fm = mfcc(&segment_from(vec![0.0; SEGMENT_SAMPLES]), &config).unwrap();
        let expected_c0 = 1e-10f64.ln() * 40f64.sqrt();
        for frame in 0..fm.n_frames() {
            assert!((fm.get(frame, 0) - expected_c0).abs() < 1e-9);
            for c in 1..13 {
                assert!(fm.get(frame, c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn amplitude_scaling_shifts_only_the_first_coefficient() {
        // Scaling the waveform by c scales every filter energy by c^2, so
        // log energies shift by 2 ln c and only the DCT's constant basis
        // picks it up: delta c0 = 2 ln(c) * sqrt(n_mel).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<f64> = (0..SEGMENT_SAMPLES).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let scaled: Vec<f64> = samples.iter().map(|v| v * 0.5).collect();
        let config = MfccConfig::default();
        let a = mfcc(&segment_from(samples), &config).unwrap();
        let b = mfcc(&segment_from(scaled), &config).unwrap();
        let expected_shift = 2.0 * 0.5f64.ln() * 40f64.sqrt();
        for frame in 0..a.n_frames() {
            let shift = b.get(frame, 0) - a.get(frame, 0);
            assert!((shift - expected_shift).abs() < 1e-6, "frame {frame}: {shift}");
            for c in 1..13 {
                assert!((a.get(frame, c) - b.get(frame, c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pure_tone_peaks_in_the_filter_containing_its_frequency() {
        // Per-frame oracle: window each pre-emphasized frame, take the naive
        // DFT power, apply the bank directly, and check that the strongest
        // filter's band contains 1 kHz.
        let config = MfccConfig::default();
        let samples: Vec<f64> = (0..SEGMENT_SAMPLES)
            .map(|t| 0.6 * (2.0 * PI * 1000.0 * t as f64 / 16_000.0).sin())
            .collect();
        let bank = mel_filterbank(&config, 16_000).unwrap();

        let mut emphasized = vec![samples[0]];
        for t in 1..samples.len() {
            emphasized.push(samples[t] - config.pre_emphasis * samples[t - 1]);
        }
        let window: Vec<f64> = (0..config.frame_length)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (config.frame_length - 1) as f64).cos())
            .collect();

        for frame in 0..frame_count(samples.len(), &config) {
            let start = frame * config.frame_hop;
            let mut buf = vec![Complex64::new(0.0, 0.0); config.fft_size];
            for i in 0..config.frame_length {
                buf[i] = Complex64::new(emphasized[start + i] * window[i], 0.0);
            }
            let spec = naive_dft(&buf);
            let power: Vec<f64> = spec[..config.fft_size / 2 + 1]
                .iter()
                .map(|c| c.norm_sqr())
                .collect();
            let energies = bank.apply(&power);
            let best = energies
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let (left, _, right) = bank.band_hz(best);
            assert!(
                left <= 1000.0 && 1000.0 <= right,
                "frame {frame}: peak filter {best} spans {left:.1}..{right:.1} Hz"
            );
        }
    }

    #[test]
    fn band_above_nyquist_is_rejected() {
        let config = MfccConfig {
            mel_high_hz: 9_000.0,
            ..MfccConfig::default()
        };
        assert!(matches!(
            mel_filterbank(&config, 16_000),
            Err(DspError::InvalidBand { .. })
        ));
    }
}
