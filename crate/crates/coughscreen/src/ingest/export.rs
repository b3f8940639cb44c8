//! Daily export bundles.
//!
//! One bundle covers one UTC calendar day. The tar layout is fixed:
//!
//! ```text
//! LICENSE            data license text (CC-BY-4.0)
//! audio/{id}.wav     canonical audio, sorted by sample id
//! manifest.json      entries sorted by sample id, keys sorted, plus digest
//! ```
//!
//! Every byte is a function of the stored records, so re-running an export
//! for the same day over unchanged data produces an identical file. Tar
//! headers are pinned (mtime 0, uid/gid 0, mode 0644) for the same reason.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ingest::store::{SampleKind, Store};
use crate::ingest::{IngestError, SampleMetadata};

/// SPDX identifier of the license the bundles ship under.
pub const LICENSE_ID: &str = "CC-BY-4.0";

const LICENSE_TEXT: &str = "\
Creative Commons Attribution 4.0 International (CC BY 4.0)

The samples in this bundle are released under the CC BY 4.0 license.
You are free to share and adapt the material for any purpose, provided
you give appropriate credit to the collection project named in the
manifest and indicate if changes were made.

Full license text: https://creativecommons.org/licenses/by/4.0/legalcode
";

/// One sample in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub kind: SampleKind,
    pub received_at: chrono::DateTime<chrono::Utc>,
    pub duration_s: f64,
    pub duration_warning: bool,
    pub metadata: SampleMetadata,
    /// Path of the audio file inside the bundle.
    pub audio_path: String,
}

/// The manifest written into each bundle as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportManifest {
    pub date: NaiveDate,
    pub license: String,
    /// True when the day had no samples; the bundle is still emitted.
    pub empty: bool,
    pub entries: Vec<ManifestEntry>,
    /// SHA-256 (hex) over the manifest serialization with this field absent.
    pub manifest_digest: String,
}

/// A finished export: the manifest plus the bundle bytes.
#[derive(Debug, Clone)]
pub struct ExportOutcome {
    pub manifest: ExportManifest,
    pub tar_bytes: Vec<u8>,
}

fn sorted_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable")
}

/// Builds the export for one day entirely in memory.
pub fn build_daily_export(store: &Store, date: NaiveDate) -> Result<ExportOutcome, IngestError> {
    let records = store.records_for_day(date)?;
    let entries: Vec<ManifestEntry> = records
        .iter()
        .map(|r| ManifestEntry {
            sample_id: r.sample_id.clone(),
            kind: r.kind,
            received_at: r.received_at,
            duration_s: r.duration_s,
            duration_warning: r.duration_warning,
            metadata: r.metadata.clone(),
            audio_path: format!("audio/{}.wav", r.sample_id),
        })
        .collect();

    let mut manifest = ExportManifest {
        date,
        license: LICENSE_ID.to_string(),
        empty: entries.is_empty(),
        entries,
        manifest_digest: String::new(),
    };

    // Digest covers the sorted serialization without the digest field.
    let mut undigested = sorted_json(&manifest);
    undigested.as_object_mut().expect("object").remove("manifest_digest");
    let undigested_text = serde_json::to_string(&undigested).expect("serializable");
    manifest.manifest_digest = hex::encode(Sha256::digest(undigested_text.as_bytes()));

    let mut manifest_text = serde_json::to_string(&sorted_json(&manifest)).expect("serializable");
    manifest_text.push('\n');

    let mut builder = tar::Builder::new(Vec::new());
    append_file(&mut builder, "LICENSE", LICENSE_TEXT.as_bytes())?;
    for entry in &manifest.entries {
        let audio = store.audio_bytes(&entry.sample_id)?.ok_or_else(|| {
            IngestError::CorruptRecord {
                sample_id: entry.sample_id.clone(),
                detail: "audio missing during export".to_string(),
            }
        })?;
        append_file(&mut builder, &entry.audio_path, &audio)?;
    }
    append_file(&mut builder, "manifest.json", manifest_text.as_bytes())?;
    let tar_bytes = builder.into_inner().map_err(|e| IngestError::Storage {
        path: "<export buffer>".into(),
        source: e,
    })?;

    Ok(ExportOutcome { manifest, tar_bytes })
}

/// Builds the export for one day and writes the bundle to `out_path`.
pub fn daily_export(
    store: &Store,
    date: NaiveDate,
    out_path: &Path,
) -> Result<ExportManifest, IngestError> {
    let outcome = build_daily_export(store, date)?;
    fs::write(out_path, &outcome.tar_bytes).map_err(|e| IngestError::Storage {
        path: out_path.to_path_buf(),
        source: e,
    })?;
    Ok(outcome.manifest)
}

/// Adds one file to the tar with pinned (deterministic) header fields.
fn append_file(
    builder: &mut tar::Builder<Vec<u8>>,
    path: &str,
    data: &[u8],
) -> Result<(), IngestError> {
    let mut header = tar::Header::new_ustar();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_uid(0);
    header.set_gid(0);
    header.set_mtime(0);
    builder
        .append_data(&mut header, path, data)
        .map_err(|e| IngestError::Storage { path: path.into(), source: e })
}
