//! From-scratch convolutional network for the spoken-digit source task.
//!
//! Three blocks of 3x3 same-padded convolution, ReLU, and 2x2 max pooling,
//! followed by an adaptive average pool to a fixed grid and one dense layer.
//! With the default architecture the penultimate activation flattens to
//! 1024 values; [`ConvNetParams::extract_features`] exposes that vector for
//! transfer to the downstream classifiers.
//!
//! Everything here is plain `f64` loops: forward, backprop, and SGD with
//! momentum are hand-written so training is reproducible bit for bit from a
//! seed, with no framework in between.

use crate::mfcc::FeatureMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("input shape mismatch: expected {expected_frames}x{expected_coeffs}, got {got_frames}x{got_coeffs}")]
    ShapeMismatch {
        expected_frames: usize,
        expected_coeffs: usize,
        got_frames: usize,
        got_coeffs: usize,
    },
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: u8, n_classes: usize },
    #[error("training diverged: {0}")]
    Diverged(&'static str),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spoken digit 0..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DigitLabel(u8);

impl DigitLabel {
    pub fn new(digit: u8) -> Result<Self, CnnError> {
        if digit > 9 {
            return Err(CnnError::LabelOutOfRange {
                label: digit,
                n_classes: 10,
            });
        }
        Ok(Self(digit))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

/// Network architecture. The input grid is zero-padded on the bottom and
/// right up to multiples of 8 so that three rounds of 2x2 pooling divide
/// evenly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvNetArch {
    pub input_frames: usize,
    pub input_coeffs: usize,
    pub channels: [usize; 3],
    pub pool_rows: usize,
    pub pool_cols: usize,
    pub n_classes: usize,
}

impl ConvNetArch {
    /// Standard architecture for a given input grid: channels 16/32/64,
    /// 4x4 adaptive pool, 10 classes. A 97x13 input yields 1024 features.
    pub fn default_for(input_frames: usize, input_coeffs: usize) -> Self {
        Self {
            input_frames,
            input_coeffs,
            channels: [16, 32, 64],
            pool_rows: 4,
            pool_cols: 4,
            n_classes: 10,
        }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        if self.input_frames == 0 || self.input_coeffs == 0 {
            return Err(CnnError::InvalidArch("input grid must be non-empty".into()));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(CnnError::InvalidArch("channel counts must be positive".into()));
        }
        if self.pool_rows == 0 || self.pool_cols == 0 {
            return Err(CnnError::InvalidArch("pool grid must be non-empty".into()));
        }
        if self.n_classes < 2 {
            return Err(CnnError::InvalidArch("need at least two classes".into()));
        }
        Ok(())
    }

    /// Input dimensions after zero-padding to multiples of 8.
    pub fn padded_input(&self) -> (usize, usize) {
        (
            self.input_frames.div_ceil(8) * 8,
            self.input_coeffs.div_ceil(8) * 8,
        )
    }

    /// Length of the transfer feature vector.
    pub fn feature_len(&self) -> usize {
        self.channels[2] * self.pool_rows * self.pool_cols
    }
}

/// One 3x3 convolution layer. Weights are laid out
/// `[out_channel][in_channel][ky][kx]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }
}

/// All learnable parameters of the network. Doubles as the gradient and
/// velocity container during training, since those share the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvNetParams {
    pub arch: ConvNetArch,
    pub conv: Vec<ConvLayer>,
    pub dense_weights: Vec<f64>,
    pub dense_bias: Vec<f64>,
}

/// A channel-major feature map buffer.
struct Fmap {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Fmap {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    /// Copy with a one-cell zero ring around each plane.
    fn padded(&self) -> Fmap {
        let (ph, pw) = (self.h + 2, self.w + 2);
        let mut out = Fmap::zeros(self.c, ph, pw);
        for c in 0..self.c {
            for y in 0..self.h {
                let src = &self.plane(c)[y * self.w..(y + 1) * self.w];
                let base = c * ph * pw + (y + 1) * pw + 1;
                out.data[base..base + self.w].copy_from_slice(src);
            }
        }
        out
    }

    /// Drop the one-cell ring added by [`Fmap::padded`].
    fn cropped(&self) -> Fmap {
        let (h, w) = (self.h - 2, self.w - 2);
        let mut out = Fmap::zeros(self.c, h, w);
        for c in 0..self.c {
            for y in 0..h {
                let base = c * self.h * self.w + (y + 1) * self.w + 1;
                let dst = c * h * w + y * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[base..base + w]);
            }
        }
        out
    }
}

/// Same-size 3x3 convolution over an already padded input.
fn conv3x3_forward(padded: &Fmap, layer: &ConvLayer) -> Fmap {
    let (h, w) = (padded.h - 2, padded.w - 2);
    let pw = padded.w;
    let mut out = Fmap::zeros(layer.out_channels, h, w);
    for oc in 0..layer.out_channels {
        let out_plane = &mut out.data[oc * h * w..(oc + 1) * h * w];
        out_plane.fill(layer.bias[oc]);
        for ic in 0..layer.in_channels {
            let in_plane = padded.plane(ic);
            for ky in 0..3 {
                for kx in 0..3 {
                    let wgt = layer.weights[((oc * layer.in_channels + ic) * 3 + ky) * 3 + kx];
                    for y in 0..h {
                        let src = &in_plane[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let dst = &mut out_plane[y * w..(y + 1) * w];
                        for x in 0..w {
                            dst[x] += wgt * src[x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a 3x3 convolution: accumulates weight and bias gradients
/// and returns the gradient with respect to the padded input.
fn conv3x3_backward(
    d_out: &Fmap,
    padded_in: &Fmap,
    layer: &ConvLayer,
    d_weights: &mut [f64],
    d_bias: &mut [f64],
) -> Fmap {
    let (h, w) = (d_out.h, d_out.w);
    let pw = padded_in.w;
    let mut d_in = Fmap::zeros(padded_in.c, padded_in.h, padded_in.w);
    for oc in 0..layer.out_channels {
        let d_plane = d_out.plane(oc);
        d_bias[oc] += d_plane.iter().sum::<f64>();
        for ic in 0..layer.in_channels {
            let in_plane = padded_in.plane(ic);
            let din_plane = &mut d_in.data[ic * padded_in.h * pw..(ic + 1) * padded_in.h * pw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((oc * layer.in_channels + ic) * 3 + ky) * 3 + kx;
                    let wgt = layer.weights[widx];
                    let mut dw = 0.0;
                    for y in 0..h {
                        let row = (y + ky) * pw + kx;
                        let src = &in_plane[row..row + w];
                        let dst = &mut din_plane[row..row + w];
                        let dr = &d_plane[y * w..(y + 1) * w];
                        for x in 0..w {
                            dw += dr[x] * src[x];
                            dst[x] += wgt * dr[x];
                        }
                    }
                    d_weights[widx] += dw;
                }
            }
        }
    }
    d_in
}

/// 2x2 max pooling with stride 2. Returns the pooled map and, per output
/// cell, the flat input index of the winning element (first of equals).
fn maxpool_forward(input: &Fmap) -> (Fmap, Vec<usize>) {
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = Fmap::zeros(input.c, oh, ow);
    let mut arg = vec![0usize; input.c * oh * ow];
    for c in 0..input.c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = c * input.h * input.w + (2 * y + dy) * input.w + (2 * x + dx);
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = c * oh * ow + y * ow + x;
                out.data[o] = best;
                arg[o] = best_idx;
            }
        }
    }
    (out, arg)
}

fn maxpool_backward(d_out: &Fmap, arg: &[usize], in_c: usize, in_h: usize, in_w: usize) -> Fmap {
    let mut d_in = Fmap::zeros(in_c, in_h, in_w);
    for (o, &src) in arg.iter().enumerate() {
        d_in.data[src] += d_out.data[o];
    }
    d_in
}

/// Bin edges of the adaptive average pool: output cell `i` of `out` covers
/// input rows `floor(i*in/out) .. ceil((i+1)*in/out)`. Bins overlap when the
/// output grid is finer than the input.
fn adaptive_bins(input: usize, output: usize) -> Vec<(usize, usize)> {
    (0..output)
        .map(|i| (i * input / output, ((i + 1) * input).div_ceil(output)))
        .collect()
}

fn adaptive_avg_forward(input: &Fmap, out_h: usize, out_w: usize) -> Vec<f64> {
    let rows = adaptive_bins(input.h, out_h);
    let cols = adaptive_bins(input.w, out_w);
    let mut out = Vec::with_capacity(input.c * out_h * out_w);
    for c in 0..input.c {
        let plane = input.plane(c);
        for &(y0, y1) in &rows {
            for &(x0, x1) in &cols {
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += plane[y * input.w + x];
                    }
                }
                out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    out
}

fn adaptive_avg_backward(
    d_out: &[f64],
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Fmap {
    let rows = adaptive_bins(in_h, out_h);
    let cols = adaptive_bins(in_w, out_w);
    let mut d_in = Fmap::zeros(in_c, in_h, in_w);
    for c in 0..in_c {
        for (i, &(y0, y1)) in rows.iter().enumerate() {
            for (j, &(x0, x1)) in cols.iter().enumerate() {
                let share = d_out[c * out_h * out_w + i * out_w + j]
                    / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        d_in.data[c * in_h * in_w + y * in_w + x] += share;
                    }
                }
            }
        }
    }
    d_in
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index of the first maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

struct LayerTrace {
    padded_in: Fmap,
    pre: Fmap,
    pool_arg: Vec<usize>,
    act_dims: (usize, usize, usize),
}

struct Trace {
    layers: Vec<LayerTrace>,
    last_pooled_dims: (usize, usize, usize),
}

impl ConvNetParams {
    pub fn zeros(arch: ConvNetArch) -> Result<Self, CnnError> {
        arch.validate()?;
        let conv = vec![
            ConvLayer::zeros(1, arch.channels[0]),
            ConvLayer::zeros(arch.channels[0], arch.channels[1]),
            ConvLayer::zeros(arch.channels[1], arch.channels[2]),
        ];
        let feature_len = arch.feature_len();
        Ok(Self {
            dense_weights: vec![0.0; arch.n_classes * feature_len],
            dense_bias: vec![0.0; arch.n_classes],
            conv,
            arch,
        })
    }

    /// He-uniform initialization: each weight tensor is drawn uniformly from
    /// `(-limit, limit)` with `limit = scale * sqrt(6 / fan_in)`; biases
    /// start at zero. Draw order is fixed (conv1..conv3, then dense) so a
    /// seed pins every parameter.
    pub fn he_init(arch: ConvNetArch, seed: u64, scale: f64) -> Result<Self, CnnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::he_init_with_rng(arch, &mut rng, scale)
    }

    fn he_init_with_rng(
        arch: ConvNetArch,
        rng: &mut ChaCha8Rng,
        scale: f64,
    ) -> Result<Self, CnnError> {
        let mut params = Self::zeros(arch)?;
        for layer in &mut params.conv {
            let limit = scale * (6.0 / (layer.in_channels * 9) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        let limit = scale * (6.0 / params.arch.feature_len() as f64).sqrt();
        for w in &mut params.dense_weights {
            *w = rng.gen_range(-limit..limit);
        }
        Ok(params)
    }

    fn tensor_list(&self) -> Vec<&Vec<f64>> {
        let mut v: Vec<&Vec<f64>> = Vec::with_capacity(8);
        for layer in &self.conv {
            v.push(&layer.weights);
            v.push(&layer.bias);
        }
        v.push(&self.dense_weights);
        v.push(&self.dense_bias);
        v
    }

    fn tensor_list_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::with_capacity(8);
        for layer in &mut self.conv {
            v.push(&mut layer.weights);
            v.push(&mut layer.bias);
        }
        v.push(&mut self.dense_weights);
        v.push(&mut self.dense_bias);
        v
    }

    pub fn n_parameters(&self) -> usize {
        self.tensor_list().iter().map(|t| t.len()).sum()
    }

    fn check_shape(&self, input: &FeatureMatrix) -> Result<(), CnnError> {
        if input.n_frames() != self.arch.input_frames
            || input.n_coefficients() != self.arch.input_coeffs
        {
            return Err(CnnError::ShapeMismatch {
                expected_frames: self.arch.input_frames,
                expected_coeffs: self.arch.input_coeffs,
                got_frames: input.n_frames(),
                got_coeffs: input.n_coefficients(),
            });
        }
        Ok(())
    }

    /// Standardize the input grid to zero mean and unit variance, then place
    /// it in the top-left corner of the zero-padded plane. Raw cepstra carry
    /// the first coefficient tens of log-energy units away from the rest, so
    /// without this step the filters see a nearly rank-one input.
    fn prepare_input(&self, input: &FeatureMatrix) -> Fmap {
        let values = input.values();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);

        let (ph, pw) = self.arch.padded_input();
        let mut plane = Fmap::zeros(1, ph, pw);
        let (h, w) = (self.arch.input_frames, self.arch.input_coeffs);
        for y in 0..h {
            for x in 0..w {
                plane.data[y * pw + x] = (input.get(y, x) - mean) / std;
            }
        }
        plane
    }

    fn conv_stack(&self, input: &FeatureMatrix, want_trace: bool) -> (Vec<f64>, Option<Trace>) {
        let mut current = self.prepare_input(input);
        let mut layers = Vec::with_capacity(3);
        for layer in &self.conv {
            let padded = current.padded();
            let pre = conv3x3_forward(&padded, layer);
            let mut act = Fmap::zeros(pre.c, pre.h, pre.w);
            for (a, &p) in act.data.iter_mut().zip(&pre.data) {
                *a = p.max(0.0);
            }
            let (pooled, arg) = maxpool_forward(&act);
            if want_trace {
                layers.push(LayerTrace {
                    padded_in: padded,
                    pre,
                    pool_arg: arg,
                    act_dims: (act.c, act.h, act.w),
                });
            }
            current = pooled;
        }
        let dims = (current.c, current.h, current.w);
        let features = adaptive_avg_forward(&current, self.arch.pool_rows, self.arch.pool_cols);
        let trace = want_trace.then_some(Trace {
            layers,
            last_pooled_dims: dims,
        });
        (features, trace)
    }

    /// Class logits for one input.
    pub fn forward(&self, input: &FeatureMatrix) -> Result<Vec<f64>, CnnError> {
        let features = self.extract_features(input)?;
        Ok(self.dense(&features))
    }

    /// The flattened adaptive-pool activation: the transfer feature vector.
    /// Independent of the dense layer parameters by construction.
    pub fn extract_features(&self, input: &FeatureMatrix) -> Result<Vec<f64>, CnnError> {
        self.check_shape(input)?;
        Ok(self.conv_stack(input, false).0)
    }

    /// Distance of the forward pass from its nearest non-differentiable
    /// decision: the smallest |pre-activation| over all ReLU inputs, and the
    /// smallest winner-to-runner-up gap over max-pool windows whose winner is
    /// active. Finite-difference gradient checks are only meaningful on
    /// inputs where this margin comfortably exceeds the probe step, since a
    /// ReLU or pooling decision flipping inside the probe interval makes the
    /// numeric derivative diverge from the (one-sided) analytic one.
    pub fn decision_margin(&self, input: &FeatureMatrix) -> Result<f64, CnnError> {
        self.check_shape(input)?;
        let (_, trace) = self.conv_stack(input, true);
        let trace = trace.expect("trace requested");
        let mut margin = f64::INFINITY;
        for lt in &trace.layers {
            for &p in &lt.pre.data {
                margin = margin.min(p.abs());
            }
            let (c, h, w) = lt.act_dims;
            for ci in 0..c {
                for y in 0..h / 2 {
                    for x in 0..w / 2 {
                        let mut vals = [0.0f64; 4];
                        for dy in 0..2 {
                            for dx in 0..2 {
                                vals[2 * dy + dx] = lt.pre.data
                                    [ci * h * w + (2 * y + dy) * w + (2 * x + dx)]
                                    .max(0.0);
                            }
                        }
                        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                        if vals[0] > 0.0 {
                            margin = margin.min(vals[0] - vals[1]);
                        }
                    }
                }
            }
        }
        Ok(margin)
    }

    fn dense(&self, features: &[f64]) -> Vec<f64> {
        let f = features.len();
        (0..self.arch.n_classes)
            .map(|k| {
                self.dense_bias[k]
                    + self.dense_weights[k * f..(k + 1) * f]
                        .iter()
                        .zip(features)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, input: &FeatureMatrix) -> Result<DigitLabel, CnnError> {
        let logits = self.forward(input)?;
        DigitLabel::new(argmax(&logits) as u8)
    }

    /// Mean cross-entropy loss and parameter gradients over a batch.
    /// Examples are accumulated in slice order, so the result is a fixed
    /// function of the batch and parameters.
    pub fn loss_and_gradients(
        &self,
        batch: &[(&FeatureMatrix, DigitLabel)],
    ) -> Result<(f64, ConvNetParams), CnnError> {
        if batch.is_empty() {
            return Err(CnnError::EmptyBatch);
        }
        let mut grads = ConvNetParams::zeros(self.arch.clone())?;
        let scale = 1.0 / batch.len() as f64;
        let mut total_loss = 0.0;
        for &(input, label) in batch {
            total_loss += self.backprop_example(input, label, &mut grads, scale)?;
        }
        let loss = total_loss * scale;
        if !loss.is_finite() {
            return Err(CnnError::Diverged("non-finite loss"));
        }
        Ok((loss, grads))
    }

    /// Backprop for a single example; gradients are scaled by `scale` and
    /// accumulated into `grads`. Returns the example's cross-entropy loss.
    fn backprop_example(
        &self,
        input: &FeatureMatrix,
        label: DigitLabel,
        grads: &mut ConvNetParams,
        scale: f64,
    ) -> Result<f64, CnnError> {
        self.check_shape(input)?;
        let class = label.value() as usize;
        if class >= self.arch.n_classes {
            return Err(CnnError::LabelOutOfRange {
                label: label.value(),
                n_classes: self.arch.n_classes,
            });
        }

        let (features, trace) = self.conv_stack(input, true);
        let trace = trace.unwrap();
        let logits = self.dense(&features);
        let probs = softmax(&logits);
        let loss = -probs[class].max(1e-300).ln();

        // Dense layer.
        let f = features.len();
        let mut d_feat = vec![0.0; f];
        for k in 0..self.arch.n_classes {
            let d_logit = (probs[k] - if k == class { 1.0 } else { 0.0 }) * scale;
            grads.dense_bias[k] += d_logit;
            let w_row = &self.dense_weights[k * f..(k + 1) * f];
            let g_row = &mut grads.dense_weights[k * f..(k + 1) * f];
            for x in 0..f {
                g_row[x] += d_logit * features[x];
                d_feat[x] += d_logit * w_row[x];
            }
        }

        // Adaptive average pool.
        let (lc, lh, lw) = trace.last_pooled_dims;
        let mut d_current = adaptive_avg_backward(
            &d_feat,
            lc,
            lh,
            lw,
            self.arch.pool_rows,
            self.arch.pool_cols,
        );

        // Conv blocks, last to first.
        for (layer_idx, lt) in trace.layers.iter().enumerate().rev() {
            let (ac, ah, aw) = lt.act_dims;
            let d_act = maxpool_backward(&d_current, &lt.pool_arg, ac, ah, aw);
            // ReLU: pass gradient only where the pre-activation was positive.
            let mut d_pre = d_act;
            for (g, &p) in d_pre.data.iter_mut().zip(&lt.pre.data) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            let layer = &self.conv[layer_idx];
            let layer_grad = &mut grads.conv[layer_idx];
            let d_padded = conv3x3_backward(
                &d_pre,
                &lt.padded_in,
                layer,
                &mut layer_grad.weights,
                &mut layer_grad.bias,
            );
            if layer_idx > 0 {
                d_current = d_padded.cropped();
            }
        }
        Ok(loss)
    }

    /// Mean cross-entropy and accuracy over a labeled set, without gradients.
    pub fn evaluate(&self, data: &[(FeatureMatrix, DigitLabel)]) -> Result<(f64, f64), CnnError> {
        if data.is_empty() {
            return Err(CnnError::EmptyBatch);
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (input, label) in data {
            let logits = self.forward(input)?;
            let probs = softmax(&logits);
            let class = label.value() as usize;
            if class >= self.arch.n_classes {
                return Err(CnnError::LabelOutOfRange {
                    label: label.value(),
                    n_classes: self.arch.n_classes,
                });
            }
            loss -= probs[class].max(1e-300).ln();
            if argmax(&logits) == class {
                correct += 1;
            }
        }
        Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
    }
}

/// Hyperparameters for source-task training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Multiplier on the He-uniform limits. The default of 0.5 keeps the
    /// initial logits small enough that an untrained network scores close to
    /// uniform cross-entropy, which makes early training well conditioned.
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            rng_seed: 42,
            weight_init_scale: 0.5,
        }
    }
}

/// One row of the training log. Epoch 0 records the untrained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Train a digit network with the standard architecture for the dataset's
/// input shape. See [`train_source_with_arch`].
pub fn train_source(
    dataset: &[(FeatureMatrix, DigitLabel)],
    config: &TrainConfig,
) -> Result<(ConvNetParams, Vec<EpochStats>), CnnError> {
    if dataset.is_empty() {
        return Err(CnnError::DegenerateDataset("dataset is empty".into()));
    }
    let arch = ConvNetArch::default_for(dataset[0].0.n_frames(), dataset[0].0.n_coefficients());
    train_source_with_arch(dataset, arch, config)
}

/// Minibatch SGD with momentum on the softmax cross-entropy. The RNG seed
/// fixes both the He initialization and every epoch's shuffle, so two runs
/// with the same dataset and config produce bit-identical parameters.
///
/// The returned log has `epochs + 1` rows: row 0 is the loss and accuracy of
/// the freshly initialized network on the full training set, row `e` the
/// state after epoch `e` (training loss averaged over that epoch's batches,
/// accuracy re-measured on the full set).
pub fn train_source_with_arch(
    dataset: &[(FeatureMatrix, DigitLabel)],
    arch: ConvNetArch,
    config: &TrainConfig,
) -> Result<(ConvNetParams, Vec<EpochStats>), CnnError> {
    if dataset.is_empty() {
        return Err(CnnError::DegenerateDataset("dataset is empty".into()));
    }
    let distinct: std::collections::BTreeSet<u8> =
        dataset.iter().map(|(_, l)| l.value()).collect();
    if distinct.len() < 2 {
        return Err(CnnError::DegenerateDataset(format!(
            "all {} examples share one label",
            dataset.len()
        )));
    }
    if config.batch_size == 0 {
        return Err(CnnError::EmptyBatch);
    }
    if !(config.learning_rate.is_finite() && config.momentum.is_finite()) {
        return Err(CnnError::Diverged("non-finite hyperparameters"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut params =
        ConvNetParams::he_init_with_rng(arch.clone(), &mut rng, config.weight_init_scale)?;
    let mut velocity = ConvNetParams::zeros(arch)?;

    let (loss0, acc0) = params.evaluate(dataset)?;
    let mut log = vec![EpochStats {
        epoch: 0,
        loss: loss0,
        accuracy: acc0,
    }];

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&FeatureMatrix, DigitLabel)> =
                chunk.iter().map(|&i| (&dataset[i].0, dataset[i].1)).collect();
            let (loss, grads) = params.loss_and_gradients(&batch)?;
            epoch_loss += loss * chunk.len() as f64;

            let v = velocity.tensor_list_mut();
            let p = params.tensor_list_mut();
            let g = grads.tensor_list();
            for ((vt, pt), gt) in v.into_iter().zip(p).zip(g) {
                for i in 0..vt.len() {
                    vt[i] = config.momentum * vt[i] - config.learning_rate * gt[i];
                    pt[i] += vt[i];
                }
            }
        }
        let (_, accuracy) = params.evaluate(dataset)?;
        log.push(EpochStats {
            epoch,
            loss: epoch_loss / dataset.len() as f64,
            accuracy,
        });
    }
    Ok((params, log))
}

const MODEL_FORMAT: &str = "coughscreen-model";
const CONVNET_KIND: &str = "digit-convnet";

#[derive(Serialize, Deserialize)]
struct TensorBlob {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    kind: String,
    arch: ConvNetArch,
    train: Option<TrainConfig>,
    tensors: BTreeMap<String, TensorBlob>,
}

/// Serialize parameters (and optionally the training config that produced
/// them) as a self-describing JSON checkpoint.
pub fn save_checkpoint(
    path: &Path,
    params: &ConvNetParams,
    train: Option<&TrainConfig>,
) -> Result<(), CnnError> {
    let mut tensors = BTreeMap::new();
    for (i, layer) in params.conv.iter().enumerate() {
        tensors.insert(
            format!("conv{}.weight", i + 1),
            TensorBlob {
                shape: vec![layer.out_channels, layer.in_channels, 3, 3],
                data: layer.weights.clone(),
            },
        );
        tensors.insert(
            format!("conv{}.bias", i + 1),
            TensorBlob {
                shape: vec![layer.out_channels],
                data: layer.bias.clone(),
            },
        );
    }
    tensors.insert(
        "dense.weight".to_string(),
        TensorBlob {
            shape: vec![params.arch.n_classes, params.arch.feature_len()],
            data: params.dense_weights.clone(),
        },
    );
    tensors.insert(
        "dense.bias".to_string(),
        TensorBlob {
            shape: vec![params.arch.n_classes],
            data: params.dense_bias.clone(),
        },
    );
    let file = CheckpointFile {
        format: MODEL_FORMAT.to_string(),
        version: 1,
        kind: CONVNET_KIND.to_string(),
        arch: params.arch.clone(),
        train: train.cloned(),
        tensors,
    };
    let json = serde_json::to_string(&file).expect("checkpoint serialization cannot fail");
    std::fs::write(path, json)?;
    Ok(())
}

/// Load and validate a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(ConvNetParams, Option<TrainConfig>), CnnError> {
    let bytes = std::fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)
        .map_err(|e| CnnError::Checkpoint(format!("unreadable JSON: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(CnnError::Checkpoint(format!("unknown format {:?}", file.format)));
    }
    if file.version != 1 {
        return Err(CnnError::Checkpoint(format!("unsupported version {}", file.version)));
    }
    if file.kind != CONVNET_KIND {
        return Err(CnnError::Checkpoint(format!(
            "expected kind {CONVNET_KIND:?}, found {:?}",
            file.kind
        )));
    }
    let mut params = ConvNetParams::zeros(file.arch.clone())
        .map_err(|e| CnnError::Checkpoint(format!("bad architecture: {e}")))?;

    let take = |name: &str, shape: &[usize]| -> Result<Vec<f64>, CnnError> {
        let blob = file
            .tensors
            .get(name)
            .ok_or_else(|| CnnError::Checkpoint(format!("missing tensor {name:?}")))?;
        if blob.shape != shape {
            return Err(CnnError::Checkpoint(format!(
                "tensor {name:?} has shape {:?}, expected {shape:?}",
                blob.shape
            )));
        }
        if blob.data.len() != shape.iter().product::<usize>() {
            return Err(CnnError::Checkpoint(format!(
                "tensor {name:?} data length {} does not match its shape",
                blob.data.len()
            )));
        }
        if blob.data.iter().any(|v| !v.is_finite()) {
            return Err(CnnError::Checkpoint(format!(
                "tensor {name:?} contains non-finite values"
            )));
        }
        Ok(blob.data.clone())
    };

    for i in 0..3 {
        let (ic, oc) = (params.conv[i].in_channels, params.conv[i].out_channels);
        params.conv[i].weights = take(&format!("conv{}.weight", i + 1), &[oc, ic, 3, 3])?;
        params.conv[i].bias = take(&format!("conv{}.bias", i + 1), &[oc])?;
    }
    let classes = file.arch.n_classes;
    let features = file.arch.feature_len();
    params.dense_weights = take("dense.weight", &[classes, features])?;
    params.dense_bias = take("dense.bias", &[classes])?;
    Ok((params, file.train))
}
