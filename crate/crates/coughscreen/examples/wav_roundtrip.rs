//! WAV I/O basics: serialize a clip, parse it back, normalize a stereo
//! 44.1 kHz recording to canonical mono 16 kHz, and slice it into the
//! 0.99 s segments the feature extractor consumes.

use coughscreen::audio::{normalize, parse_wav, slice, write_wav, AudioClip, SEGMENT_SAMPLES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 3 s 440 Hz tone, mono 16 kHz: already canonical.
    let samples: Vec<f64> = (0..3 * 16_000)
        .map(|i| 0.4 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
        .collect();
    let clip = AudioClip::mono(samples, 16_000)?;
    let bytes = write_wav(&clip);
    println!("serialized {} samples -> {} bytes", clip.samples().len(), bytes.len());

    let parsed = parse_wav(&bytes)?;
    let worst = clip
        .samples()
        .iter()
        .zip(parsed.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("round-trip worst-case error: {worst:.2e} (bound 1/32768 = {:.2e})", 1.0 / 32768.0);

    // A stereo 44.1 kHz clip needs normalization first.
    let frames = 2 * 44_100;
    let mut interleaved = Vec::with_capacity(frames * 2);
    for i in 0..frames {
        let t = i as f64 / 44_100.0;
        let s = 0.3 * (2.0 * std::f64::consts::PI * 220.0 * t).sin();
        interleaved.push(s); // left
        interleaved.push(s * 0.5); // right
    }
    let studio = AudioClip::new(interleaved, 44_100, 2)?;
    let canonical = normalize(&studio)?;
    println!(
        "normalized {} ch @ {} Hz -> {} ch @ {} Hz, {} samples",
        studio.channels(),
        studio.sample_rate(),
        canonical.channels(),
        canonical.sample_rate(),
        canonical.samples().len()
    );

    let segments = slice(&canonical, "studio-take-1")?;
    println!(
        "sliced into {} segments of {} samples ({:.2} s each)",
        segments.len(),
        SEGMENT_SAMPLES,
        SEGMENT_SAMPLES as f64 / 16_000.0
    );

    // Truncated streams are rejected rather than parsed into garbage.
    let err = parse_wav(&bytes[..bytes.len() / 2]).unwrap_err();
    println!("parsing a truncated stream fails as expected: {err}");
    Ok(())
}
