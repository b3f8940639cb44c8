//! Compute the 97x13 MFCC matrix for one synthetic cough segment and show
//! the property the classifiers rely on: coefficients 1..12 ignore overall
//! recording volume, while coefficient 0 tracks it.

use coughscreen::audio::Segment;
use coughscreen::classify::CovidLabel;
use coughscreen::mfcc::{mfcc, MfccConfig};
use coughscreen::synth::{gen_cough_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { rng_seed: 9, n_per_class: 1 };
    let (segment, label, subject, _) = gen_cough_corpus(&spec)
        .into_iter()
        .find(|(_, l, _, _)| *l == CovidLabel::Covid)
        .expect("corpus contains a covid sample");
    println!("segment from subject {subject} ({label})");

    let config = MfccConfig::default();
    let features = mfcc(&segment, &config)?;
    println!(
        "MFCC matrix: {} frames x {} coefficients",
        features.n_frames(),
        features.n_coefficients()
    );
    // Show the loudest frame; early frames sit in pre-burst silence.
    let peak = (0..features.n_frames())
        .max_by(|&a, &b| features.get(a, 0).total_cmp(&features.get(b, 0)))
        .unwrap_or(0);
    println!("frame {peak} (energy peak), coefficients 0-5:");
    for c in 0..6 {
        println!("  c{c} = {:+.4}", features.get(peak, c));
    }

    // Same audio, half the volume.
    let quieter = Segment::new(
        segment.samples().iter().map(|s| s * 0.5).collect(),
        "quieter",
        0,
    )?;
    let features_quiet = mfcc(&quieter, &config)?;

    let c0_shift = (features.get(peak, 0) - features_quiet.get(peak, 0)).abs();
    let mut rest_shift = 0.0f64;
    for frame in 0..features.n_frames() {
        for coeff in 1..features.n_coefficients() {
            rest_shift =
                rest_shift.max((features.get(frame, coeff) - features_quiet.get(frame, coeff)).abs());
        }
    }
    println!("halving the volume moves c0 by {c0_shift:.3}");
    println!("...but coefficients 1..12 by at most {rest_shift:.2e}");
    Ok(())
}
