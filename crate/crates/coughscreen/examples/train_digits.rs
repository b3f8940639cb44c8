//! Train the spoken-digit source network on the synthetic corpus and
//! measure held-out accuracy.
//!
//! The digit network is the transfer-learning source model: once trained,
//! its penultimate activations become the 1024-dim features used by the
//! cough classifiers. Run with `cargo run --example train_digits`.
//! `EPOCHS` and `N_PER_CLASS` env vars override the defaults.

use std::time::Instant;

use coughscreen::cnn::{train_source, TrainConfig};
use coughscreen::mfcc::{mfcc, MfccConfig};
use coughscreen::synth::{gen_digit_corpus, SynthSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_per_class: usize =
        std::env::var("N_PER_CLASS").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(15);

    let spec = SynthSpec { rng_seed: 42, n_per_class };
    let started = Instant::now();
    let corpus = gen_digit_corpus(&spec);
    let mfcc_config = MfccConfig::default();
    let mut dataset = Vec::with_capacity(corpus.len());
    for (segment, label) in &corpus {
        dataset.push((mfcc(segment, &mfcc_config)?, *label));
    }
    println!("featurized {} clips in {:.1} s", dataset.len(), started.elapsed().as_secs_f64());

    // Deterministic 80/20 split, stratified per digit.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for digit in 0..10u8 {
        let mut of_digit: Vec<_> =
            dataset.iter().filter(|(_, l)| l.value() == digit).cloned().collect();
        of_digit.shuffle(&mut rng);
        let cut = of_digit.len() * 4 / 5;
        test.extend(of_digit.split_off(cut));
        train.extend(of_digit);
    }
    println!("train {} / test {}", train.len(), test.len());

    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let started = Instant::now();
    let (params, log) = train_source(&train, &config)?;
    for row in &log {
        println!("epoch {:2}: loss {:.4}, train accuracy {:.4}", row.epoch, row.loss, row.accuracy);
    }
    let (test_loss, test_accuracy) = params.evaluate(&test)?;
    println!(
        "held-out: loss {:.4}, accuracy {:.4} ({:.1} s to train)",
        test_loss,
        test_accuracy,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
