//! End-to-end screening of a single cough recording, the same flow as
//! `coughscreen predict`: slice the clip into 0.99 s segments, extract
//! 1024-dim transfer features with the digit network, score each segment
//! with a classifier trained on the synthetic corpus, and pool.
//!
//! Everything here trains from scratch on small settings, so expect roughly
//! half a minute on first run.

use coughscreen::audio::{normalize, parse_wav, slice, write_wav, AudioClip};
use coughscreen::classify::{
    train_by_kind, ClassifierHypers, ClassifierKind, CovidLabel, LabeledFeature, Standardizer,
};
use coughscreen::cnn::{train_source, TrainConfig};
use coughscreen::mfcc::{mfcc, MfccConfig};
use coughscreen::synth::{gen_cough_corpus, gen_digit_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mfcc_config = MfccConfig::default();
    let spec = SynthSpec { rng_seed: 42, n_per_class: 20 };

    // 1. Source network on spoken digits.
    println!("training the digit network (small settings)...");
    let mut digits = Vec::new();
    for (segment, label) in &gen_digit_corpus(&spec) {
        digits.push((mfcc(segment, &mfcc_config)?, *label));
    }
    let (params, _) = train_source(&digits, &TrainConfig { epochs: 2, ..TrainConfig::default() })?;

    // 2. Logistic-regression classifier on transfer features.
    println!("training the cough classifier...");
    let mut data = Vec::new();
    for (segment, label, subject, day) in &gen_cough_corpus(&spec) {
        let features = params.extract_features(&mfcc(segment, &mfcc_config)?)?;
        data.push(LabeledFeature::new(features, *label, subject, *day)?);
    }
    let standardizer = Standardizer::fit(&data)?;
    let standardized = standardizer.apply_all(&data)?;
    let model = train_by_kind(
        ClassifierKind::LogisticRegression,
        &standardized,
        &ClassifierHypers::default(),
        42,
    )?;

    // 3. A fresh 3 s "recording" to screen: three covid-shaped segments the
    // classifier has never seen, butted together into one clip.
    let unseen = SynthSpec { rng_seed: 1234, n_per_class: 3 };
    let mut samples = Vec::new();
    for (segment, label, _, _) in &gen_cough_corpus(&unseen) {
        if *label == CovidLabel::Covid {
            samples.extend_from_slice(segment.samples());
        }
    }
    let wav_bytes = write_wav(&AudioClip::mono(samples, 16_000)?);
    println!("screening a {} byte clip...", wav_bytes.len());

    // 4. The predict flow: parse, normalize, slice, score, pool.
    let clip = normalize(&parse_wav(&wav_bytes)?)?;
    let mut scores = Vec::new();
    for segment in slice(&clip, "incoming")? {
        let features = params.extract_features(&mfcc(&segment, &mfcc_config)?)?;
        let (_, score) = model.predict(&standardizer.apply(&features)?)?;
        scores.push(score);
    }
    for (i, score) in scores.iter().enumerate() {
        println!("segment {i}: {score:.6}");
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let decision = if mean >= 0.5 { "covid" } else { "healthy" };
    println!("clip: {decision} {mean:.6} pool=mean");
    Ok(())
}
