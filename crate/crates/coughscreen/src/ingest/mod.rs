//! Sample ingestion: de-identification checks, content-addressed storage,
//! daily export bundles, and the HTTP collection service.
//!
//! The flow is: a client uploads audio plus key-value metadata; the metadata
//! must pass [`meta::validate_deidentification`]; the audio is normalized to
//! canonical mono 16 kHz form; the pair is stored under a SHA-256 id derived
//! purely from content, so re-uploads are idempotent. Exports bundle one
//! calendar day into a deterministic tar with a signed-off manifest.

pub mod export;
pub mod http;
pub mod meta;
pub mod store;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use export::{build_daily_export, daily_export, ExportManifest, ExportOutcome, ManifestEntry};
pub use http::{serve, serve_with_shutdown, ServeError};
pub use meta::{
    validate_deidentification, ClinicalInfo, Comorbidity, Gender, SampleMetadata, TestResult,
    Violation, AGE_BUCKETS,
};
pub use store::{compute_sample_id, IngestOutcome, SampleKind, SampleRecord, Store};

/// Errors from ingestion and storage.
#[derive(Debug, Error)]
pub enum IngestError {
    /// The uploaded bytes are not a decodable WAV file.
    #[error("invalid audio: {0}")]
    InvalidAudio(#[from] crate::audio::AudioError),

    /// The metadata failed de-identification checks; all violations listed.
    #[error("metadata failed de-identification checks ({} violation(s))", .0.len())]
    DeidViolations(Vec<Violation>),

    /// Normalized duration outside the accepted 1-60 s window.
    #[error("clip duration {seconds:.3} s outside the accepted 1-60 s range")]
    DurationOutOfRange { seconds: f64 },

    /// Filesystem problem underneath the store.
    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// The append-only index has a damaged line before the tail.
    #[error("corrupt index at line {line}: {detail}")]
    CorruptIndex { line: usize, detail: String },

    /// An indexed record is missing files or fails to parse.
    #[error("corrupt record {sample_id}: {detail}")]
    CorruptRecord { sample_id: String, detail: String },
}
