//! Deterministic synthetic audio: spoken-digit stand-ins and cough/healthy
//! corpora.
//!
//! Real recordings of either kind are not distributable with the crate, so
//! tests and examples run on generated audio with engineered class structure:
//! digits are harmonic stacks at class-specific fundamentals, "covid" coughs
//! are repeated short broadband bursts, "healthy" coughs single longer
//! low-passed bursts. Jitter ranges overlap between classes to keep the
//! downstream learning problems honest. Everything is a pure function of the
//! spec's seed.

use crate::audio::{Segment, CANONICAL_SAMPLE_RATE, SEGMENT_SAMPLES};
use crate::classify::CovidLabel;
use crate::cnn::DigitLabel;
use crate::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Synthesis parameters. The acoustic constants are fixed; the spec chooses
/// corpus size and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rng_seed: u64,
    pub n_per_class: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rng_seed: 7,
            n_per_class: 100,
        }
    }
}

/// Fundamental frequency of a digit class: 120 Hz for digit 0, rising by
/// 40 Hz per digit. The third harmonic of digit 9 (1,440 Hz) stays well
/// below the 8 kHz Nyquist limit.
pub fn digit_fundamental_hz(digit: DigitLabel) -> f64 {
    120.0 + 40.0 * digit.value() as f64
}

const HARMONIC_AMPLITUDES: [f64; 3] = [1.0, 0.5, 0.25];
const DIGIT_BASE_AMPLITUDE: f64 = 0.45;
const AMPLITUDE_JITTER: f64 = 0.2; // +/-20%
const TIMING_JITTER_S: f64 = 0.05; // +/-50 ms
const COVID_DECAY_S: f64 = 0.030;
const HEALTHY_DECAY_S: f64 = 0.080;
const HEALTHY_LOWPASS_HZ: f64 = 1_500.0;

const DIGIT_STREAM: u64 = 1;
const COUGH_STREAM: u64 = 2;

fn jittered(rng: &mut ChaCha8Rng, base: f64) -> f64 {
    base * (1.0 + rng.gen_range(-AMPLITUDE_JITTER..=AMPLITUDE_JITTER))
}

/// One 0.99 s digit utterance: a three-harmonic tone stack with seeded
/// amplitude, phase, and onset jitter. Deterministic per
/// `(spec.rng_seed, digit, index)`.
pub fn gen_digit(spec: &SynthSpec, digit: DigitLabel, index: usize) -> Segment {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
        spec.rng_seed,
        &[DIGIT_STREAM, digit.value() as u64, index as u64],
    ));
    let f0 = digit_fundamental_hz(digit);
    let overall = jittered(&mut rng, DIGIT_BASE_AMPLITUDE);
    let harmonics: Vec<(f64, f64, f64)> = HARMONIC_AMPLITUDES
        .iter()
        .enumerate()
        .map(|(h, &a)| {
            (
                f0 * (h + 1) as f64,
                jittered(&mut rng, a),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    // Onset sits at 50 ms +/- the timing jitter, so it never goes negative.
    let onset_s = TIMING_JITTER_S + rng.gen_range(-TIMING_JITTER_S..=TIMING_JITTER_S);
    let onset = (onset_s * CANONICAL_SAMPLE_RATE as f64) as usize;
    let fade = (0.010 * CANONICAL_SAMPLE_RATE as f64) as usize;

    let mut samples = vec![0.0f64; SEGMENT_SAMPLES];
    for (i, s) in samples.iter_mut().enumerate().skip(onset) {
        let t = i as f64 / CANONICAL_SAMPLE_RATE as f64;
        let envelope = {
            let rise = ((i - onset) as f64 / fade as f64).min(1.0);
            let fall = ((SEGMENT_SAMPLES - i) as f64 / fade as f64).min(1.0);
            rise.min(fall)
        };
        let tone: f64 = harmonics
            .iter()
            .map(|&(f, a, phase)| a * (std::f64::consts::TAU * f * t + phase).sin())
            .sum();
        *s = (overall * envelope * tone).clamp(-1.0, 1.0);
    }
    Segment::new(samples, &format!("digit{}-{index}", digit.value()), 0)
        .expect("generated digit segment is always valid")
}

/// The full source-task corpus: `n_per_class` utterances of each digit.
pub fn gen_digit_corpus(spec: &SynthSpec) -> Vec<(Segment, DigitLabel)> {
    let mut out = Vec::with_capacity(spec.n_per_class * 10);
    for digit in 0..10u8 {
        let label = DigitLabel::new(digit).expect("0..10 are valid digits");
        for index in 0..spec.n_per_class {
            out.push((gen_digit(spec, label, index), label));
        }
    }
    out
}

/// Add one exponentially decaying noise burst starting at `start`.
/// `lowpass_hz` shapes the noise with two cascaded single-pole filters;
/// `None` leaves it broadband.
fn add_burst(
    samples: &mut [f64],
    rng: &mut ChaCha8Rng,
    start: usize,
    decay_s: f64,
    amplitude: f64,
    lowpass_hz: Option<f64>,
) {
    let tau = decay_s * CANONICAL_SAMPLE_RATE as f64;
    let length = ((5.0 * tau) as usize).min(samples.len() - start);
    let alpha = lowpass_hz.map(|hz| {
        1.0 - (-std::f64::consts::TAU * hz / CANONICAL_SAMPLE_RATE as f64).exp()
    });
    let (mut y1, mut y2) = (0.0f64, 0.0f64);
    for i in 0..length {
        let white: f64 = rng.gen_range(-1.0..=1.0);
        let shaped = match alpha {
            Some(a) => {
                y1 += a * (white - y1);
                y2 += a * (y1 - y2);
                // Make up the passband loss so both classes land in a similar
                // amplitude range.
                y2 * 2.5
            }
            None => white,
        };
        let envelope = (-(i as f64) / tau).exp();
        samples[start + i] += amplitude * envelope * shaped;
    }
}

fn gen_cough_segment(
    spec: &SynthSpec,
    label: CovidLabel,
    subject: usize,
    sample: usize,
    clip_id: &str,
) -> Segment {
    let class_tag = match label {
        CovidLabel::Covid => 0,
        CovidLabel::Healthy => 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
        spec.rng_seed,
        &[COUGH_STREAM, class_tag, subject as u64, sample as u64],
    ));
    let mut samples = vec![0.0f64; SEGMENT_SAMPLES];
    let n_bursts = match label {
        CovidLabel::Covid => rng.gen_range(2..=4),
        CovidLabel::Healthy => 1,
    };
    let decay = match label {
        CovidLabel::Covid => COVID_DECAY_S,
        CovidLabel::Healthy => HEALTHY_DECAY_S,
    };
    let lowpass = match label {
        CovidLabel::Covid => None,
        CovidLabel::Healthy => Some(HEALTHY_LOWPASS_HZ),
    };
    for b in 0..n_bursts {
        // Nominal burst positions spread over the segment, then jittered.
        let nominal = 0.1 + 0.7 * (b as f64 + 0.5) / n_bursts as f64;
        let jitter = rng.gen_range(-TIMING_JITTER_S..=TIMING_JITTER_S);
        let start = ((nominal + jitter) * CANONICAL_SAMPLE_RATE as f64) as usize;
        let amplitude = jittered(&mut rng, 0.55);
        add_burst(&mut samples, &mut rng, start, decay, amplitude, lowpass);
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Segment::new(samples, clip_id, 0).expect("generated cough segment is always valid")
}

/// The target-task corpus: `n_per_class` segments per class, spread over
/// `ceil(n_per_class / 4)` subjects per class with up to four samples
/// (consecutive `day_index` values starting at 0) each. Subject ids are
/// class-prefixed, so no id ever spans both classes.
pub fn gen_cough_corpus(spec: &SynthSpec) -> Vec<(Segment, CovidLabel, String, u32)> {
    let mut out = Vec::with_capacity(spec.n_per_class * 2);
    for label in [CovidLabel::Covid, CovidLabel::Healthy] {
        let prefix = match label {
            CovidLabel::Covid => "cov",
            CovidLabel::Healthy => "hl",
        };
        let mut produced = 0usize;
        let mut subject = 0usize;
        while produced < spec.n_per_class {
            let subject_id = format!("{prefix}-s{subject:03}");
            let n_days = (spec.n_per_class - produced).min(4);
            for day in 0..n_days {
                let clip_id = format!("{subject_id}-d{day}");
                out.push((
                    gen_cough_segment(spec, label, subject, day, &clip_id),
                    label,
                    subject_id.clone(),
                    day as u32,
                ));
            }
            produced += n_days;
            subject += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfcc::fft;
    use num_complex::Complex64;

    fn magnitude_spectrum(samples: &[f64], n: usize) -> Vec<f64> {
        let input: Vec<Complex64> = samples[..n]
            .iter()
            .map(|&s| Complex64::new(s, 0.0))
            .collect();
        fft(&input)
            .unwrap()
            .iter()
            .take(n / 2 + 1)
            .map(|c| c.norm())
            .collect()
    }

    #[test]
    fn digit_generation_is_deterministic() {
        let spec = SynthSpec::default();
        let label = DigitLabel::new(4).unwrap();
        let a = gen_digit(&spec, label, 3);
        let b = gen_digit(&spec, label, 3);
        assert_eq!(a, b);
        let c = gen_digit(&spec, label, 4);
        assert_ne!(a.samples(), c.samples());
        let other_seed = SynthSpec {
            rng_seed: 8,
            ..spec
        };
        assert_ne!(a.samples(), gen_digit(&other_seed, label, 3).samples());
    }

    #[test]
    fn digit_zero_peaks_nearest_120_hz() {
        let spec = SynthSpec::default();
        for index in 0..5 {
            let seg = gen_digit(&spec, DigitLabel::new(0).unwrap(), index);
            // Window well past the onset jitter range.
            let n = 8192;
            let spectrum = magnitude_spectrum(&seg.samples()[4000..4000 + n], n);
            let peak_bin = spectrum
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let peak_hz = peak_bin as f64 * CANONICAL_SAMPLE_RATE as f64 / n as f64;
            let resolution = CANONICAL_SAMPLE_RATE as f64 / n as f64;
            assert!(
                (peak_hz - 120.0).abs() <= resolution,
                "index {index}: peak at {peak_hz} Hz"
            );
        }
    }

    #[test]
    fn all_generated_audio_stays_in_range() {
        let spec = SynthSpec {
            rng_seed: 5,
            n_per_class: 8,
        };
        for (seg, _) in gen_digit_corpus(&spec) {
            assert!(seg.samples().iter().all(|s| s.abs() <= 1.0));
        }
        for (seg, _, _, _) in gen_cough_corpus(&spec) {
            assert!(seg.samples().iter().all(|s| s.abs() <= 1.0));
        }
    }

    #[test]
    fn cough_corpus_counts_subjects_and_days() {
        let spec = SynthSpec {
            rng_seed: 3,
            n_per_class: 10,
        };
        let corpus = gen_cough_corpus(&spec);
        assert_eq!(corpus.len(), 20);
        for label in [CovidLabel::Covid, CovidLabel::Healthy] {
            let class: Vec<_> = corpus.iter().filter(|(_, l, _, _)| *l == label).collect();
            assert_eq!(class.len(), 10);
            let subjects: std::collections::BTreeSet<&str> =
                class.iter().map(|(_, _, s, _)| s.as_str()).collect();
            assert_eq!(subjects.len(), 3); // ceil(10 / 4)
            for subject in subjects {
                let days: Vec<u32> = class
                    .iter()
                    .filter(|(_, _, s, _)| s == subject)
                    .map(|(_, _, _, d)| *d)
                    .collect();
                assert!(!days.is_empty() && days.len() <= 4);
                let expect: Vec<u32> = (0..days.len() as u32).collect();
                assert_eq!(days, expect, "subject {subject}");
            }
        }
    }

    #[test]
    fn subject_ids_never_span_classes() {
        let spec = SynthSpec {
            rng_seed: 11,
            n_per_class: 25,
        };
        let corpus = gen_cough_corpus(&spec);
        let mut by_subject: std::collections::BTreeMap<&str, std::collections::BTreeSet<CovidLabel>> =
            std::collections::BTreeMap::new();
        for (_, label, subject, _) in &corpus {
            by_subject.entry(subject).or_default().insert(*label);
        }
        assert!(by_subject.values().all(|labels| labels.len() == 1));
    }

    #[test]
    fn corpus_regenerates_bit_identically() {
        let spec = SynthSpec {
            rng_seed: 21,
            n_per_class: 6,
        };
        let a = gen_cough_corpus(&spec);
        let b = gen_cough_corpus(&spec);
        assert_eq!(a, b);
    }

    /// Class-conditional spectra: the covid class must carry at least twice
    /// the high-band (> 2 kHz) energy of the healthy class.
    #[test]
    fn covid_class_has_more_high_band_energy() {
        let spec = SynthSpec {
            rng_seed: 17,
            n_per_class: 20,
        };
        let corpus = gen_cough_corpus(&spec);
        let n = 16_384; // covers the whole 15,840-sample segment zero-padded
        let cutoff_bin = 2_000 * n / CANONICAL_SAMPLE_RATE as usize;
        let mut energy = std::collections::BTreeMap::new();
        for (seg, label, _, _) in &corpus {
            let mut padded = seg.samples().to_vec();
            padded.resize(n, 0.0);
            let spectrum = magnitude_spectrum(&padded, n);
            let high: f64 = spectrum[cutoff_bin..].iter().map(|m| m * m).sum();
            let entry = energy.entry(*label).or_insert((0.0, 0usize));
            entry.0 += high;
            entry.1 += 1;
        }
        let mean = |l: CovidLabel| {
            let (sum, count) = energy[&l];
            sum / count as f64
        };
        let ratio = mean(CovidLabel::Covid) / mean(CovidLabel::Healthy);
        assert!(ratio > 2.0, "high-band energy ratio {ratio}");
    }
}
