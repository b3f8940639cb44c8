//! Generate the two synthetic corpora (spoken digits and cough recordings)
//! on disk, exactly as `coughscreen synth` does, and show how the same seed
//! reproduces the same bytes.

use coughscreen::config::PipelineConfig;
use coughscreen::pipeline::run_synth;
use sha2::{Digest, Sha256};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;

    let mut config = PipelineConfig::default();
    config.corpus_root = dir.path().join("corpus");
    config.rng_seed = 7;
    config.n_per_class = 12;

    let out = run_synth(&config)?;
    println!("digit corpus: {} clips in {}", out.n_digit_wavs, out.digits_dir.display());
    println!("cough corpus: {} clips in {}", out.n_cough_wavs, out.coughs_dir.display());

    let labels = std::fs::read_to_string(out.coughs_dir.join("labels.csv"))?;
    println!("\nfirst cough label rows:");
    for line in labels.lines().take(4) {
        println!("  {line}");
    }

    // Re-run into a second directory: identical artifacts, byte for byte.
    let mut again = config.clone();
    again.corpus_root = dir.path().join("corpus2");
    run_synth(&again)?;

    let digest = |root: &std::path::Path| -> std::io::Result<String> {
        let mut hasher = Sha256::new();
        let mut paths: Vec<_> = walk(root)?;
        paths.sort();
        for p in paths {
            hasher.update(std::fs::read(p)?);
        }
        Ok(hex::encode(hasher.finalize()))
    };
    let first = digest(&config.corpus_root)?;
    let second = digest(&again.corpus_root)?;
    println!("\ncorpus digest, run 1: {first}");
    println!("corpus digest, run 2: {second}");
    assert_eq!(first, second, "same seed, same corpus");
    Ok(())
}

fn walk(root: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() {
            out.extend(walk(&path)?);
        } else {
            out.push(path);
        }
    }
    Ok(out)
}
