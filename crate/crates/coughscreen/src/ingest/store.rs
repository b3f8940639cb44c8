//! Content-addressed sample store.
//!
//! Layout under the store root:
//!
//! ```text
//! root/
//!   index.jsonl                 append-only, one line per committed sample
//!   store/{id[0..2]}/{id}/audio.wav
//!   store/{id[0..2]}/{id}/meta.json
//! ```
//!
//! `sample_id` is the SHA-256 of the canonical audio bytes plus the
//! canonical metadata serialization (and the sample kind) — never of the
//! receive time — so the same upload always lands on the same id and a
//! duplicate costs nothing. Crash safety comes from ordering: record files
//! are written to temporary names, renamed into place, and only then is the
//! index line appended. A record directory without an index line is a
//! leftover from a crash and is swept away on the next open.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::audio::{normalize, parse_wav, write_wav};
use crate::ingest::meta::{validate_deidentification, SampleMetadata};
use crate::ingest::IngestError;

/// Kind of recording in a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Voluntary cough recording — the screening signal.
    Cough,
    /// Spoken digits 0-9.
    Digits,
    /// Sustained /om/ vocalization.
    Om,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Cough => "cough",
            SampleKind::Digits => "digits",
            SampleKind::Om => "om",
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cough" => Ok(SampleKind::Cough),
            "digits" => Ok(SampleKind::Digits),
            "om" => Ok(SampleKind::Om),
            other => Err(format!("unknown sample kind `{other}` (expected cough, digits, or om)")),
        }
    }
}

/// A committed sample: everything in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub kind: SampleKind,
    pub metadata: SampleMetadata,
    pub received_at: DateTime<Utc>,
    pub duration_s: f64,
    /// Set when the duration falls outside the recommended 10-14 s window.
    pub duration_warning: bool,
}

/// Result of one ingest call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub sample_id: String,
    /// True when an identical sample was already stored; nothing was written.
    pub duplicate: bool,
    /// True when the duration is legal but outside the 10-14 s guidance.
    pub duration_warning: bool,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    sample_id: String,
    received_at: DateTime<Utc>,
}

/// Serializes a value as JSON with keys sorted (serde_json object maps are
/// ordered), giving a canonical byte string for hashing and storage.
fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string(&v).expect("serializable")
}

/// Computes the content-addressed sample id: SHA-256 over a domain tag, the
/// sample kind, the canonical metadata JSON, and the canonical audio bytes.
/// The receive time is deliberately excluded.
pub fn compute_sample_id(
    kind: SampleKind,
    metadata: &SampleMetadata,
    canonical_audio: &[u8],
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"coughscreen-sample-v1");
    hasher.update([0u8]);
    hasher.update(kind.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(canonical_json(metadata).as_bytes());
    hasher.update([0u8]);
    hasher.update(canonical_audio);
    hex::encode(hasher.finalize())
}

/// The on-disk sample store. All mutation goes through `&mut self`, so a
/// single owner (or a mutex) serializes writers by construction.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    region_allowlist: BTreeSet<String>,
    index: BTreeMap<String, DateTime<Utc>>,
}

impl Store {
    /// Opens (or creates) a store rooted at `root`. Replays the append-only
    /// index, tolerating a torn final line, then sweeps record directories
    /// that never made it into the index.
    pub fn open(
        root: impl Into<PathBuf>,
        region_allowlist: BTreeSet<String>,
    ) -> Result<Self, IngestError> {
        let root = root.into();
        let data_dir = root.join("store");
        fs::create_dir_all(&data_dir).map_err(|e| storage_err(&data_dir, e))?;

        let index_path = root.join("index.jsonl");
        let mut index = BTreeMap::new();
        if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(|e| storage_err(&index_path, e))?;
            let mut offset = 0usize;
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            for (line_no, line) in lines.iter().enumerate() {
                let trimmed = line.trim_end_matches('\n').trim_end_matches('\r');
                if trimmed.is_empty() {
                    offset += line.len();
                    continue;
                }
                match serde_json::from_str::<IndexEntry>(trimmed) {
                    Ok(entry) => {
                        index.insert(entry.sample_id, entry.received_at);
                        offset += line.len();
                    }
                    Err(e) => {
                        let is_last = line_no + 1 == lines.len();
                        if is_last {
                            // Torn tail from an interrupted append: drop it.
                            log::warn!(
                                "index {index_path:?}: dropping torn final line ({e})",
                            );
                            truncate_file(&index_path, offset as u64)?;
                            break;
                        }
                        return Err(IngestError::CorruptIndex {
                            line: line_no + 1,
                            detail: e.to_string(),
                        });
                    }
                }
            }
        }

        let store = Store { root, region_allowlist, index };
        store.sweep_orphans()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn region_allowlist(&self) -> &BTreeSet<String> {
        &self.region_allowlist
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.index.contains_key(sample_id)
    }

    /// Sample ids in lexicographic order.
    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Ingests a sample stamped with the current wall-clock time.
    pub fn ingest(
        &mut self,
        kind: SampleKind,
        wav_bytes: &[u8],
        raw_metadata: &Value,
    ) -> Result<IngestOutcome, IngestError> {
        self.ingest_at(kind, wav_bytes, raw_metadata, Utc::now())
    }

    /// Ingests a sample with an explicit receive time (injectable for tests
    /// and replays). Validates metadata, normalizes audio, enforces the
    /// 1-60 s duration window, and commits the record unless an identical
    /// sample already exists.
    pub fn ingest_at(
        &mut self,
        kind: SampleKind,
        wav_bytes: &[u8],
        raw_metadata: &Value,
        received_at: DateTime<Utc>,
    ) -> Result<IngestOutcome, IngestError> {
        let metadata = validate_deidentification(raw_metadata, &self.region_allowlist)
            .map_err(IngestError::DeidViolations)?;
        let clip = parse_wav(wav_bytes)?;
        let normalized = normalize(&clip)?;
        let seconds = normalized.duration_seconds();
        if !(1.0..=60.0).contains(&seconds) {
            return Err(IngestError::DurationOutOfRange { seconds });
        }
        let duration_warning = !(10.0..=14.0).contains(&seconds);

        let canonical_audio = write_wav(&normalized);
        let sample_id = compute_sample_id(kind, &metadata, &canonical_audio);
        if self.index.contains_key(&sample_id) {
            return Ok(IngestOutcome { sample_id, duplicate: true, duration_warning });
        }

        let record = SampleRecord {
            sample_id: sample_id.clone(),
            kind,
            metadata,
            received_at,
            duration_s: seconds,
            duration_warning,
        };
        self.commit(&record, &canonical_audio)?;
        self.index.insert(sample_id.clone(), received_at);
        Ok(IngestOutcome { sample_id, duplicate: false, duration_warning })
    }

    /// Looks up a committed record by id.
    pub fn get(&self, sample_id: &str) -> Result<Option<SampleRecord>, IngestError> {
        if !self.index.contains_key(sample_id) {
            return Ok(None);
        }
        let path = self.record_dir(sample_id).join("meta.json");
        let text = fs::read_to_string(&path).map_err(|e| storage_err(&path, e))?;
        let record = serde_json::from_str(&text).map_err(|e| IngestError::CorruptRecord {
            sample_id: sample_id.to_string(),
            detail: e.to_string(),
        })?;
        Ok(Some(record))
    }

    /// Returns the stored canonical WAV bytes for a sample.
    pub fn audio_bytes(&self, sample_id: &str) -> Result<Option<Vec<u8>>, IngestError> {
        if !self.index.contains_key(sample_id) {
            return Ok(None);
        }
        let path = self.record_dir(sample_id).join("audio.wav");
        let bytes = fs::read(&path).map_err(|e| storage_err(&path, e))?;
        Ok(Some(bytes))
    }

    /// All records received on the given UTC calendar day (00:00:00 through
    /// 23:59:59.999...), sorted by sample id.
    pub fn records_for_day(&self, day: NaiveDate) -> Result<Vec<SampleRecord>, IngestError> {
        let mut records = Vec::new();
        for (id, received_at) in &self.index {
            if received_at.date_naive() == day {
                let record = self.get(id)?.ok_or_else(|| IngestError::CorruptRecord {
                    sample_id: id.clone(),
                    detail: "indexed but missing on disk".to_string(),
                })?;
                records.push(record);
            }
        }
        Ok(records)
    }

    fn record_dir(&self, sample_id: &str) -> PathBuf {
        let shard = &sample_id[..2.min(sample_id.len())];
        self.root.join("store").join(shard).join(sample_id)
    }

    /// Writes the record's files under temporary names, renames them into
    /// place, then appends the index line. The index append is the commit
    /// point; anything on disk without an index line is garbage.
    fn commit(&self, record: &SampleRecord, canonical_audio: &[u8]) -> Result<(), IngestError> {
        let dir = self.record_dir(&record.sample_id);
        fs::create_dir_all(&dir).map_err(|e| storage_err(&dir, e))?;

        let audio_tmp = dir.join("audio.wav.tmp");
        let audio_final = dir.join("audio.wav");
        fs::write(&audio_tmp, canonical_audio).map_err(|e| storage_err(&audio_tmp, e))?;
        fs::rename(&audio_tmp, &audio_final).map_err(|e| storage_err(&audio_final, e))?;

        let meta_tmp = dir.join("meta.json.tmp");
        let meta_final = dir.join("meta.json");
        let mut meta_text = canonical_json(record);
        meta_text.push('\n');
        fs::write(&meta_tmp, meta_text).map_err(|e| storage_err(&meta_tmp, e))?;
        fs::rename(&meta_tmp, &meta_final).map_err(|e| storage_err(&meta_final, e))?;

        let entry = IndexEntry {
            sample_id: record.sample_id.clone(),
            received_at: record.received_at,
        };
        let mut line = serde_json::to_string(&entry).expect("serializable");
        line.push('\n');
        let index_path = self.root.join("index.jsonl");
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)
            .map_err(|e| storage_err(&index_path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| storage_err(&index_path, e))?;
        file.sync_data().map_err(|e| storage_err(&index_path, e))?;
        Ok(())
    }

    /// Removes record directories that are not in the index — leftovers from
    /// ingests interrupted before the commit point.
    fn sweep_orphans(&self) -> Result<(), IngestError> {
        let data_dir = self.root.join("store");
        let shards = fs::read_dir(&data_dir).map_err(|e| storage_err(&data_dir, e))?;
        for shard in shards {
            let shard = shard.map_err(|e| storage_err(&data_dir, e))?;
            if !shard.file_type().map_err(|e| storage_err(&shard.path(), e))?.is_dir() {
                continue;
            }
            let entries = fs::read_dir(shard.path()).map_err(|e| storage_err(&shard.path(), e))?;
            for entry in entries {
                let entry = entry.map_err(|e| storage_err(&shard.path(), e))?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if !self.index.contains_key(&name) {
                    log::warn!("sweeping orphaned record directory {:?}", entry.path());
                    fs::remove_dir_all(entry.path())
                        .map_err(|e| storage_err(&entry.path(), e))?;
                }
            }
        }
        Ok(())
    }
}

fn storage_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Storage { path: path.to_path_buf(), source }
}

fn truncate_file(path: &Path, len: u64) -> Result<(), IngestError> {
    let file = fs::OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| storage_err(path, e))?;
    file.set_len(len).map_err(|e| storage_err(path, e))?;
    Ok(())
}
