//! The full transfer-learning evaluation in miniature: train the digit
//! network briefly, reuse its penultimate layer as a 1024-dim feature
//! extractor for cough segments, and cross-validate the four shallow
//! classifiers with subject-stratified folds.
//!
//! `N_PER_CLASS` and `EPOCHS` env vars trade speed for fidelity; the
//! defaults run in well under a minute.

use coughscreen::classify::{cross_validate, ClassifierHypers, LabeledFeature};
use coughscreen::cnn::{train_source, TrainConfig};
use coughscreen::mfcc::{mfcc, MfccConfig};
use coughscreen::synth::{gen_cough_corpus, gen_digit_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_per_class: usize =
        std::env::var("N_PER_CLASS").ok().and_then(|v| v.parse().ok()).unwrap_or(24);
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(2);
    let mfcc_config = MfccConfig::default();

    // Source task: spoken digits.
    let spec = SynthSpec { rng_seed: 42, n_per_class };
    let mut digits = Vec::new();
    for (segment, label) in &gen_digit_corpus(&spec) {
        digits.push((mfcc(segment, &mfcc_config)?, *label));
    }
    println!("training the source network on {} digit clips...", digits.len());
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let (params, log) = train_source(&digits, &config)?;
    println!(
        "source training done: final train accuracy {:.3}",
        log.last().expect("log has rows").accuracy
    );

    // Target task: cough segments, featurized through the frozen network.
    let mut data = Vec::new();
    for (segment, label, subject, day) in &gen_cough_corpus(&spec) {
        let features = params.extract_features(&mfcc(segment, &mfcc_config)?)?;
        data.push(LabeledFeature::new(features, *label, subject, *day)?);
    }
    println!(
        "featurized {} cough segments ({} dims each)",
        data.len(),
        data[0].features.len()
    );

    let report = cross_validate(&data, 5, &ClassifierHypers::default(), 42)?;
    println!("\nper-fold accuracy:");
    for row in &report.rows {
        println!(
            "  {:<19} fold {}: accuracy {:.3}, sensitivity {:.3}, specificity {:.3}",
            row.classifier.to_string(),
            row.fold,
            row.accuracy,
            row.sensitivity,
            row.specificity
        );
    }
    println!("\nsummary over folds:");
    for s in &report.summaries {
        println!(
            "  {:<19} accuracy {:.3} +/- {:.3}",
            s.classifier.to_string(),
            s.mean_accuracy,
            s.std_accuracy
        );
    }
    Ok(())
}
