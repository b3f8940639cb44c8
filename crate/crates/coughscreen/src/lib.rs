//! Cough-based COVID-19 pre-screening toolkit.
//!
//! The crate covers the full pipeline: WAV ingestion and normalization
//! ([`audio`]), MFCC feature extraction ([`mfcc`]), a small from-scratch
//! convolutional network trained on spoken digits ([`cnn`]) whose
//! penultimate activations serve as transfer features, four shallow
//! classifiers with a subject-aware evaluation harness ([`classify`]),
//! PCA projection and scatter emission ([`pca`], [`viz`]), a synthetic
//! audio corpus generator ([`synth`]), and an HTTP ingestion service with
//! de-identified, content-addressed storage and deterministic daily
//! exports ([`ingest`]).
//!
//! Every stochastic step is driven by an explicitly seeded ChaCha8 stream,
//! so identical inputs and seeds reproduce identical artifacts down to the
//! byte.
//!
//! See the `examples/` directory for one runnable walkthrough per stage.

pub mod audio;
pub mod classify;
pub mod cnn;
pub mod config;
pub mod ingest;
pub mod mfcc;
pub mod pca;
pub mod pipeline;
pub mod synth;
pub mod viz;

/// Derive a child seed from a base seed and a path of indices, splitmix64
/// style. Used wherever one user-facing seed has to fan out into independent
/// streams (per tree, per fold, per clip) without correlation.
pub(crate) fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base;
    for &part in parts {
        state = state.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(part);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        state = z ^ (z >> 31);
    }
    state
}
