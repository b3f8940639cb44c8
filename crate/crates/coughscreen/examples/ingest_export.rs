//! Drive the sample store directly (no HTTP): validate and ingest a few
//! uploads, demonstrate duplicate detection and de-identification
//! rejection, then build the deterministic daily export tar.

use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use coughscreen::audio::{write_wav, AudioClip};
use coughscreen::config::DEFAULT_REGIONS;
use coughscreen::ingest::{build_daily_export, IngestError, SampleKind, Store};
use serde_json::json;

fn tone_wav(seconds: f64, freq: f64) -> Vec<u8> {
    let n = (seconds * 16_000.0) as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
        .collect();
    write_wav(&AudioClip::mono(samples, 16_000).expect("valid clip"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let regions: BTreeSet<String> = DEFAULT_REGIONS.iter().map(|s| s.to_string()).collect();
    let mut store = Store::open(dir.path().join("store"), regions)?;

    let metadata = json!({
        "age_bucket": "50-59",
        "gender": "male",
        "mother_tongue": "pt",
        "region": "americas",
        "days_since_onset": 3,
        "clinical": {
            "rt_pcr": "positive",
            "serology": "pending",
            "thorax_rx_available": true,
            "ct_available": false,
            "icu_admission": false
        }
    });
    let wav = tone_wav(12.0, 440.0);
    let received = Utc.with_ymd_and_hms(2026, 8, 20, 14, 0, 0).unwrap();

    let outcome = store.ingest_at(SampleKind::Cough, &wav, &metadata, received)?;
    println!("stored sample {}", outcome.sample_id);

    // Same content again: recognized, nothing new written.
    let dup = store.ingest_at(SampleKind::Cough, &wav, &metadata, received)?;
    println!("re-upload: duplicate={}, same id={}", dup.duplicate, dup.sample_id == outcome.sample_id);

    // A second, distinct sample on the same day.
    let other = store.ingest_at(
        SampleKind::Cough,
        &tone_wav(11.0, 330.0),
        &json!({
            "age_bucket": "20-29",
            "gender": "female",
            "mother_tongue": "hi",
            "region": "asia"
        }),
        Utc.with_ymd_and_hms(2026, 8, 20, 16, 30, 0).unwrap(),
    )?;
    println!("stored sample {}", other.sample_id);

    // Identifying metadata is rejected with every violation listed.
    let bad = store.ingest_at(
        SampleKind::Cough,
        &wav,
        &json!({ "name": "Ana", "age": 93, "gender": "female",
                 "mother_tongue": "es", "region": "europe" }),
        received,
    );
    match bad {
        Err(IngestError::DeidViolations(violations)) => {
            println!("\nrejected an identifying upload with {} violations:", violations.len());
            for v in &violations {
                println!("  - {v}");
            }
        }
        other => panic!("expected a de-identification rejection, got {other:?}"),
    }

    let day = received.date_naive();
    let export = build_daily_export(&store, day)?;
    println!("\ndaily export for {day}:");
    println!("  {} entries, tar is {} bytes", export.manifest.entries.len(), export.tar_bytes.len());
    println!("  manifest digest {}", export.manifest.manifest_digest);

    let again = build_daily_export(&store, day)?;
    println!("  rebuild is byte-identical: {}", again.tar_bytes == export.tar_bytes);
    Ok(())
}
