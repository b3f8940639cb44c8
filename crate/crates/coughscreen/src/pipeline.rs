//! End-to-end workflows: corpus synthesis, source training, transfer
//! evaluation, single-clip prediction, and store export.
//!
//! Each `run_*` function is one CLI subcommand's engine, kept in the
//! library so examples and tests can drive the same code without spawning
//! processes. Everything is seeded from [`PipelineConfig::rng_seed`]: the
//! synthesizer, the network initialization and shuffles, and the fold
//! assignment all derive from that one number, so a command rerun with the
//! same inputs and seed writes bit-identical artifacts.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::audio::{normalize, parse_wav, slice, write_wav, AudioClip, AudioError};
use crate::classify::{
    cross_validate, save_classifier, train_by_kind, ClassifierKind, ClassifyError, CovidLabel,
    EvalReport, LabeledFeature, SavedClassifier, Standardizer,
};
use crate::cnn::{
    load_checkpoint, save_checkpoint, train_source, CnnError, ConvNetParams, DigitLabel,
    EpochStats,
};
use crate::config::{ConfigError, PipelineConfig};
use crate::ingest::{daily_export, ExportManifest, IngestError, Store};
use crate::mfcc::{mfcc, DspError, FeatureMatrix};
use crate::pca::{fit_pca, PcaError};
use crate::synth::{gen_cough_corpus, gen_digit_corpus, SynthSpec};
use crate::viz::{emit_scatter, ScatterPoint, VizError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad invocation: missing prerequisite paths, unusable arguments.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("audio: {0}")]
    Audio(#[from] AudioError),

    #[error("features: {0}")]
    Dsp(#[from] DspError),

    #[error("network: {0}")]
    Cnn(#[from] CnnError),

    #[error("classifier: {0}")]
    Classify(#[from] ClassifyError),

    #[error("pca: {0}")]
    Pca(#[from] PcaError),

    #[error("plot: {0}")]
    Viz(#[from] VizError),

    #[error("store: {0}")]
    Ingest(#[from] IngestError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("clip holds no full 0.99 s segment")]
    NoFullSegment,

    #[error("{path} line {line}: {detail}")]
    BadLabels { path: PathBuf, line: usize, detail: String },
}

impl PipelineError {
    /// Process exit code: 2 for usage/config problems, 1 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn require_exists(path: &Path, what: &str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Usage(format!("{what} not found: {}", path.display())))
    }
}

/// How per-segment scores combine into one clip-level score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Mean,
    Max,
}

impl FromStr for Pool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pool::Mean),
            "max" => Ok(Pool::Max),
            other => Err(format!("unknown pooling `{other}` (expected mean or max)")),
        }
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pool::Mean => "mean",
            Pool::Max => "max",
        })
    }
}

// ---------------------------------------------------------------- synth --

/// Files written by [`run_synth`].
#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub digits_dir: PathBuf,
    pub coughs_dir: PathBuf,
    pub n_digit_wavs: usize,
    pub n_cough_wavs: usize,
}

/// Generates the synthetic digit and cough corpora under
/// `corpus_root/digits` and `corpus_root/coughs`, each with a `labels.csv`.
///
/// Digit rows are `path,digit`; cough rows are
/// `path,label,subject_id,day_index`. Paths are relative to the labels
/// file. Same seed, same bytes.
pub fn run_synth(config: &PipelineConfig) -> Result<SynthOutcome, PipelineError> {
    let spec = SynthSpec { rng_seed: config.rng_seed, n_per_class: config.n_per_class };

    let digits_dir = config.corpus_root.join("digits");
    let mut digit_labels = String::from("path,digit\n");
    let digit_corpus = gen_digit_corpus(&spec);
    for (segment, label) in &digit_corpus {
        let file = format!("{}.wav", segment.source_clip_id());
        let clip = AudioClip::mono(segment.samples().to_vec(), 16_000)?;
        write_file(&digits_dir.join(&file), &write_wav(&clip))?;
        digit_labels.push_str(&format!("{file},{}\n", label.value()));
    }
    write_file(&digits_dir.join("labels.csv"), digit_labels.as_bytes())?;

    let coughs_dir = config.corpus_root.join("coughs");
    let mut cough_labels = String::from("path,label,subject_id,day_index\n");
    let cough_corpus = gen_cough_corpus(&spec);
    for (segment, label, subject_id, day_index) in &cough_corpus {
        let file = format!("{}.wav", segment.source_clip_id());
        let clip = AudioClip::mono(segment.samples().to_vec(), 16_000)?;
        write_file(&coughs_dir.join(&file), &write_wav(&clip))?;
        cough_labels.push_str(&format!("{file},{},{subject_id},{day_index}\n", label.as_str()));
    }
    write_file(&coughs_dir.join("labels.csv"), cough_labels.as_bytes())?;

    Ok(SynthOutcome {
        digits_dir,
        coughs_dir,
        n_digit_wavs: digit_corpus.len(),
        n_cough_wavs: cough_corpus.len(),
    })
}

// ---------------------------------------------------------------- corpus --

fn read_labels(path: &Path, want_cols: usize) -> Result<Vec<Vec<String>>, PipelineError> {
    require_exists(path, "labels file")?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cols.len() != want_cols {
            return Err(PipelineError::BadLabels {
                path: path.to_path_buf(),
                line: i + 1,
                detail: format!("expected {want_cols} columns, found {}", cols.len()),
            });
        }
        rows.push(cols);
    }
    Ok(rows)
}

fn load_segments(path: &Path) -> Result<Vec<crate::audio::Segment>, PipelineError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let clip = normalize(&parse_wav(&bytes)?)?;
    let clip_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let segments = slice(&clip, &clip_id)?;
    if segments.is_empty() {
        return Err(PipelineError::NoFullSegment);
    }
    Ok(segments)
}

/// Loads the digit corpus written by [`run_synth`] as MFCC matrices. Clips
/// longer than one segment contribute one example per segment.
pub fn load_digit_corpus(
    config: &PipelineConfig,
) -> Result<Vec<(FeatureMatrix, DigitLabel)>, PipelineError> {
    let dir = config.corpus_root.join("digits");
    let labels_path = dir.join("labels.csv");
    let mut out = Vec::new();
    for (row_no, cols) in read_labels(&labels_path, 2)?.into_iter().enumerate() {
        let digit: u8 = cols[1].parse().map_err(|_| PipelineError::BadLabels {
            path: labels_path.clone(),
            line: row_no + 2,
            detail: format!("bad digit {:?}", cols[1]),
        })?;
        let label = DigitLabel::new(digit)?;
        for segment in load_segments(&dir.join(&cols[0]))? {
            out.push((mfcc(&segment, &config.mfcc)?, label));
        }
    }
    Ok(out)
}

/// Loads the cough corpus and extracts 1024-dim transfer features with the
/// given network. One [`LabeledFeature`] per 0.99 s segment.
pub fn load_cough_features(
    config: &PipelineConfig,
    params: &ConvNetParams,
) -> Result<Vec<LabeledFeature>, PipelineError> {
    let dir = config.corpus_root.join("coughs");
    let labels_path = dir.join("labels.csv");
    let mut out = Vec::new();
    for (row_no, cols) in read_labels(&labels_path, 4)?.into_iter().enumerate() {
        let label = CovidLabel::parse(&cols[1]).ok_or_else(|| PipelineError::BadLabels {
            path: labels_path.clone(),
            line: row_no + 2,
            detail: format!("bad label {:?} (expected covid or healthy)", cols[1]),
        })?;
        let day_index: u32 = cols[3].parse().map_err(|_| PipelineError::BadLabels {
            path: labels_path.clone(),
            line: row_no + 2,
            detail: format!("bad day_index {:?}", cols[3]),
        })?;
        for segment in load_segments(&dir.join(&cols[0]))? {
            let features = params.extract_features(&mfcc(&segment, &config.mfcc)?)?;
            out.push(LabeledFeature::new(features, label, &cols[2], day_index)?);
        }
    }
    Ok(out)
}

// ----------------------------------------------------------------- train --

/// Files written by [`run_train_source`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
    /// Row 0 is the untrained network; row `e` the state after epoch `e`.
    pub stats: Vec<EpochStats>,
}

/// Trains the spoken-digit network on the corpus under
/// `corpus_root/digits`, writing the checkpoint and a per-epoch CSV log
/// (`epoch,loss,accuracy`) under the report directory.
pub fn run_train_source(config: &PipelineConfig) -> Result<TrainOutcome, PipelineError> {
    require_exists(&config.corpus_root.join("digits").join("labels.csv"), "digit corpus")?;
    let dataset = load_digit_corpus(config)?;

    let mut train_config = config.train.clone();
    train_config.rng_seed = config.rng_seed;
    let (params, stats) = train_source(&dataset, &train_config)?;

    if let Some(parent) = config.checkpoint.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    save_checkpoint(&config.checkpoint, &params, Some(&train_config))?;

    let mut log = String::from("epoch,loss,accuracy\n");
    for row in &stats {
        log.push_str(&format!("{},{},{}\n", row.epoch, row.loss, row.accuracy));
    }
    let log_path = config.report_dir.join("train-log.csv");
    write_file(&log_path, log.as_bytes())?;

    Ok(TrainOutcome { checkpoint: config.checkpoint.clone(), log_path, stats })
}

// -------------------------------------------------------------- evaluate --

/// Files written by [`run_evaluate`].
#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub report: EvalReport,
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub scatter_svg: PathBuf,
    pub scatter_csv: PathBuf,
    /// One trained classifier file per kind, fit on the full corpus.
    pub classifier_paths: Vec<PathBuf>,
}

/// Runs the transfer evaluation: featurizes the cough corpus through the
/// trained digit network, cross-validates all four classifiers over
/// subject-stratified folds, fits a 2-component PCA for the scatter plot,
/// and writes report CSV/JSON, scatter SVG/CSV, and one ready-to-use
/// classifier file per kind (trained on the full corpus).
pub fn run_evaluate(config: &PipelineConfig) -> Result<EvaluateOutcome, PipelineError> {
    require_exists(&config.checkpoint, "checkpoint")?;
    require_exists(&config.corpus_root.join("coughs").join("labels.csv"), "cough corpus")?;

    let (params, _) = load_checkpoint(&config.checkpoint)?;
    let data = load_cough_features(config, &params)?;

    let report = cross_validate(&data, config.folds, &config.hypers, config.rng_seed)?;
    let report_csv = config.report_dir.join("report.csv");
    let report_json = config.report_dir.join("report.json");
    write_file(&report_csv, report.to_csv().as_bytes())?;
    write_file(&report_json, report.to_json().as_bytes())?;

    // Scatter plot of the full feature set in PCA coordinates.
    let vectors: Vec<Vec<f64>> = data.iter().map(|d| d.features.clone()).collect();
    let pca = fit_pca(&vectors, 2)?;
    let projected = crate::pca::project(&pca, &vectors)?;
    let points: Vec<ScatterPoint> = data
        .iter()
        .zip(&projected)
        .map(|(d, p)| ScatterPoint {
            x: p[0],
            y: p[1],
            label: d.label,
            subject_id: d.subject_id.clone(),
            day_index: d.day_index,
        })
        .collect();
    let scatter = emit_scatter(&points, &config.report_dir.join("scatter"), None)?;

    // Deployable classifiers: standardize on everything, train each kind.
    let standardizer = Standardizer::fit(&data)?;
    let standardized = standardizer.apply_all(&data)?;
    let mut classifier_paths = Vec::new();
    for kind in ClassifierKind::ALL {
        let forest_seed = crate::mix_seed(config.rng_seed, &[u64::MAX]);
        let model = train_by_kind(kind, &standardized, &config.hypers, forest_seed)?;
        let path = config.report_dir.join(format!("classifier-{}.json", kind.as_str()));
        save_classifier(&path, &SavedClassifier { standardizer: standardizer.clone(), model })?;
        classifier_paths.push(path);
    }

    Ok(EvaluateOutcome {
        report,
        report_csv,
        report_json,
        scatter_svg: scatter.svg,
        scatter_csv: scatter.csv,
        classifier_paths,
    })
}

// --------------------------------------------------------------- predict --

/// One screened clip.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Covid score per 0.99 s segment, in clip order.
    pub segment_scores: Vec<f64>,
    pub pool: Pool,
    pub pooled_score: f64,
    /// Covid iff the pooled score is ≥ 0.5.
    pub label: CovidLabel,
}

/// Screens one WAV clip: segments it, extracts transfer features with the
/// checkpointed network, scores each segment with the saved classifier, and
/// pools the scores into a clip-level decision.
pub fn run_predict(
    config: &PipelineConfig,
    classifier_path: &Path,
    wav_path: &Path,
    pool: Pool,
) -> Result<Prediction, PipelineError> {
    require_exists(&config.checkpoint, "checkpoint")?;
    require_exists(classifier_path, "classifier file")?;
    require_exists(wav_path, "input WAV")?;

    let (params, _) = load_checkpoint(&config.checkpoint)?;
    let saved = crate::classify::load_classifier(classifier_path)?;

    let mut segment_scores = Vec::new();
    for segment in load_segments(wav_path)? {
        let features = params.extract_features(&mfcc(&segment, &config.mfcc)?)?;
        let standardized = saved.standardizer.apply(&features)?;
        let (_, score) = saved.model.predict(&standardized)?;
        segment_scores.push(score);
    }

    let pooled_score = match pool {
        Pool::Mean => segment_scores.iter().sum::<f64>() / segment_scores.len() as f64,
        Pool::Max => segment_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let label = if pooled_score >= 0.5 { CovidLabel::Covid } else { CovidLabel::Healthy };
    Ok(Prediction { segment_scores, pool, pooled_score, label })
}

// ---------------------------------------------------------------- export --

/// Writes the daily export bundle for `date` from the store at
/// `storage_root` to `out_path`, returning the manifest.
pub fn run_export(
    storage_root: &Path,
    region_allowlist: BTreeSet<String>,
    date: NaiveDate,
    out_path: &Path,
) -> Result<ExportManifest, PipelineError> {
    require_exists(storage_root, "storage root")?;
    let store = Store::open(storage_root, region_allowlist)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    Ok(daily_export(&store, date, out_path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{save_checkpoint, ConvNetArch, ConvNetParams};

    /// Small, fast settings shared by the tests.
    fn tiny_config(root: &Path) -> PipelineConfig {
        let mut config = PipelineConfig::default();
        config.corpus_root = root.join("corpus");
        config.checkpoint = root.join("model.json");
        config.report_dir = root.join("reports");
        config.rng_seed = 11;
        config.n_per_class = 8;
        config.folds = 2;
        config.train.epochs = 1;
        config.hypers.logreg.epochs = 20;
        config.hypers.svm.epochs = 20;
        config.hypers.forest.n_trees = 5;
        config.hypers.knn_k = 3;
        config
    }

    #[test]
    fn synth_writes_expected_counts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.n_per_class = 10;
        let outcome = run_synth(&config).unwrap();
        assert_eq!(outcome.n_digit_wavs, 100);
        assert_eq!(outcome.n_cough_wavs, 20);

        let cough_labels = fs::read_to_string(outcome.coughs_dir.join("labels.csv")).unwrap();
        assert_eq!(cough_labels.lines().count(), 21); // header + 20 rows
        assert!(cough_labels.starts_with("path,label,subject_id,day_index\n"));
        let wavs = fs::read_dir(&outcome.coughs_dir)
            .unwrap()
            .filter(|e| {
                e.as_ref().unwrap().path().extension().map(|x| x == "wav").unwrap_or(false)
            })
            .count();
        assert_eq!(wavs, 20);

        // Second run over the same seed: identical labels and identical bytes
        // for a spot-checked WAV.
        let sample_wav = fs::read(outcome.coughs_dir.join("cov-s000-d0.wav")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut config2 = tiny_config(dir2.path());
        config2.n_per_class = 10;
        let outcome2 = run_synth(&config2).unwrap();
        assert_eq!(
            cough_labels,
            fs::read_to_string(outcome2.coughs_dir.join("labels.csv")).unwrap()
        );
        assert_eq!(sample_wav, fs::read(outcome2.coughs_dir.join("cov-s000-d0.wav")).unwrap());
    }

    #[test]
    fn train_source_writes_checkpoint_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.n_per_class = 2; // 20 digit clips
        run_synth(&config).unwrap();
        let outcome = run_train_source(&config).unwrap();
        assert!(outcome.checkpoint.exists());
        assert_eq!(outcome.stats.len(), config.train.epochs + 1);
        let log = fs::read_to_string(&outcome.log_path).unwrap();
        assert!(log.starts_with("epoch,loss,accuracy\n"));
        assert_eq!(log.lines().count(), config.train.epochs + 2);

        // Rerun: byte-identical checkpoint.
        let first = fs::read(&outcome.checkpoint).unwrap();
        run_train_source(&config).unwrap();
        assert_eq!(first, fs::read(&outcome.checkpoint).unwrap());
    }

    #[test]
    fn missing_digit_corpus_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let err = run_train_source(&config).unwrap_err();
        assert!(matches!(err, PipelineError::Usage(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn evaluate_emits_all_artifacts_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        run_synth(&config).unwrap();
        // An untrained network is fine here: the test checks plumbing and
        // determinism, not accuracy.
        let arch = ConvNetArch::default_for(97, 13);
        let params = ConvNetParams::he_init(arch, 5, 0.5).unwrap();
        save_checkpoint(&config.checkpoint, &params, None).unwrap();

        let outcome = run_evaluate(&config).unwrap();
        assert_eq!(outcome.report.rows.len(), 4 * config.folds);
        assert_eq!(outcome.classifier_paths.len(), 4);
        for path in [&outcome.report_csv, &outcome.report_json, &outcome.scatter_svg,
                     &outcome.scatter_csv] {
            assert!(path.exists(), "{path:?} missing");
        }
        let first: Vec<Vec<u8>> = [&outcome.report_csv, &outcome.report_json,
                                   &outcome.scatter_svg, &outcome.scatter_csv]
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();

        let outcome2 = run_evaluate(&config).unwrap();
        let second: Vec<Vec<u8>> = [&outcome2.report_csv, &outcome2.report_json,
                                    &outcome2.scatter_svg, &outcome2.scatter_csv]
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        assert_eq!(first, second, "evaluate artifacts must be bit-identical across runs");
    }

    #[test]
    fn predict_scores_every_segment_and_pools() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        run_synth(&config).unwrap();
        let arch = ConvNetArch::default_for(97, 13);
        let params = ConvNetParams::he_init(arch, 5, 0.5).unwrap();
        save_checkpoint(&config.checkpoint, &params, None).unwrap();
        let eval = run_evaluate(&config).unwrap();

        let wav = config.corpus_root.join("coughs").join("hl-s000-d0.wav");
        let prediction =
            run_predict(&config, &eval.classifier_paths[0], &wav, Pool::Mean).unwrap();
        assert_eq!(prediction.segment_scores.len(), 1);
        for s in &prediction.segment_scores {
            assert!((0.0..=1.0).contains(s), "score {s} outside [0,1]");
        }
        let mean =
            prediction.segment_scores.iter().sum::<f64>() / prediction.segment_scores.len() as f64;
        assert_eq!(prediction.pooled_score, mean);
        assert_eq!(prediction.label == CovidLabel::Covid, prediction.pooled_score >= 0.5);
    }

    #[test]
    fn short_clip_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        run_synth(&config).unwrap();
        let arch = ConvNetArch::default_for(97, 13);
        let params = ConvNetParams::he_init(arch, 5, 0.5).unwrap();
        save_checkpoint(&config.checkpoint, &params, None).unwrap();
        let eval = run_evaluate(&config).unwrap();

        // Half a second: parses fine, but no full segment.
        let samples: Vec<f64> = (0..8_000).map(|i| (i as f64 * 0.01).sin() * 0.2).collect();
        let short = dir.path().join("short.wav");
        fs::write(&short, write_wav(&AudioClip::mono(samples, 16_000).unwrap())).unwrap();

        let err = run_predict(&config, &eval.classifier_paths[0], &short, Pool::Mean).unwrap_err();
        assert!(matches!(err, PipelineError::NoFullSegment));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn pool_parsing() {
        assert_eq!("mean".parse::<Pool>().unwrap(), Pool::Mean);
        assert_eq!("max".parse::<Pool>().unwrap(), Pool::Max);
        assert!("median".parse::<Pool>().is_err());
    }
}
