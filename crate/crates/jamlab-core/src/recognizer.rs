//! Fused time/time-frequency jamming recognizer.
//!
//! Two structurally identical convolutional extractors process the STFT and
//! SPWVD images; their token sets are concatenated into a fused TF
//! representation. A third extractor processes the raw I/Q receive window
//! rastered into a two-plane square image. Cross-modal multi-head attention
//! runs in both directions (time queries TF and TF queries time), each
//! result gates the original features per channel, and the pooled gated
//! features feed an MLP softmax classifier over the three jamming classes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{self, Adam, Graph, Mode, ParamSet, Tensor, Var};
use crate::seeds;
use crate::signal::ComplexSeries;
use crate::tf::{self, Spectrogram, SpwvdParams, StftParams, TfImage};
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 3;

/// One layer of a branch stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv2d,
    MaxPool,
    Relu,
    Dropout,
    /// Bottleneck unit (1x1, 3x3, 1x1) with a projection skip.
    ResidualBlock,
}

/// Declarative layer description; which fields matter depends on `kind`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub channels_out: usize,
    pub repeat: usize,
    pub dropout_p: f64,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, channels_out: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2d,
            kernel,
            stride,
            channels_out,
            repeat: 1,
            dropout_p: 0.0,
        }
    }

    pub fn maxpool(kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            kernel,
            stride,
            channels_out: 0,
            repeat: 1,
            dropout_p: 0.0,
        }
    }

    pub fn relu() -> Self {
        LayerSpec {
            kind: LayerKind::Relu,
            kernel: 0,
            stride: 1,
            channels_out: 0,
            repeat: 1,
            dropout_p: 0.0,
        }
    }

    pub fn dropout(p: f64) -> Self {
        LayerSpec {
            kind: LayerKind::Dropout,
            kernel: 0,
            stride: 1,
            channels_out: 0,
            repeat: 1,
            dropout_p: p,
        }
    }

    pub fn residual(stride: usize, channels_out: usize, dropout_p: f64) -> Self {
        LayerSpec {
            kind: LayerKind::ResidualBlock,
            kernel: 3,
            stride,
            channels_out,
            repeat: 1,
            dropout_p,
        }
    }
}

/// Recognizer hyperparameters. `attention_heads * head_dim` must equal the
/// output channel count of both branch stacks.
#[derive(Debug, Clone)]
pub struct RecognizerConfig {
    pub image_side: usize,
    pub time_branch: Vec<LayerSpec>,
    pub tf_branch: Vec<LayerSpec>,
    pub attention_heads: usize,
    pub head_dim: usize,
    /// Hidden widths of the classifier MLP.
    pub classifier: Vec<usize>,
    pub classifier_dropout: f64,
    pub classes: usize,
}

impl Default for RecognizerConfig {
    /// Desk-scale configuration: 64x64 images, time branch 16->32->64 with
    /// the five repeated 3x3 convolutions, TF branch with three bottleneck
    /// units (32/32/64), 4 attention heads of width 16.
    fn default() -> Self {
        RecognizerConfig {
            image_side: 64,
            time_branch: vec![
                LayerSpec::conv(7, 2, 16),
                LayerSpec::relu(),
                LayerSpec::dropout(0.4),
                LayerSpec::maxpool(3, 2),
                LayerSpec::conv(3, 2, 32),
                LayerSpec::relu(),
                LayerSpec::conv(3, 1, 32),
                LayerSpec::relu(),
                LayerSpec::conv(3, 2, 64),
                LayerSpec::relu(),
                LayerSpec::conv(3, 1, 64),
                LayerSpec::relu(),
                LayerSpec::conv(3, 1, 64),
                LayerSpec::relu(),
                LayerSpec::dropout(0.5),
                LayerSpec::conv(1, 1, 64),
            ],
            tf_branch: vec![
                LayerSpec::conv(7, 2, 16),
                LayerSpec::maxpool(3, 2),
                // One (1x1, 3x3, 1x1) unit per width, three units in a row.
                LayerSpec::residual(2, 32, 0.5),
                LayerSpec::residual(2, 32, 0.5),
                LayerSpec::residual(2, 64, 0.5),
            ],
            attention_heads: 4,
            head_dim: 16,
            classifier: vec![64],
            classifier_dropout: 0.4,
            classes: NUM_CLASSES,
        }
    }
}

impl RecognizerConfig {
    pub fn model_width(&self) -> usize {
        self.attention_heads * self.head_dim
    }

    fn stack_out_channels(stack: &[LayerSpec], mut ch: usize) -> usize {
        for spec in stack {
            match spec.kind {
                LayerKind::Conv2d | LayerKind::ResidualBlock => ch = spec.channels_out,
                _ => {}
            }
        }
        ch
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes != NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "recognizer is a {NUM_CLASSES}-class model, got {}",
                self.classes
            )));
        }
        if self.image_side < 16 {
            return Err(Error::InvalidConfig(String::from("image side must be >= 16")));
        }
        let width = self.model_width();
        let t_out = Self::stack_out_channels(&self.time_branch, 2);
        let tf_out = Self::stack_out_channels(&self.tf_branch, 1);
        if t_out != width || tf_out != width {
            return Err(Error::InvalidConfig(format!(
                "branch widths (time {t_out}, tf {tf_out}) must equal heads*head_dim = {width}"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Built model
// ---------------------------------------------------------------------------

enum Built {
    Conv {
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Dropout(f64),
    Residual {
        w1: usize,
        b1: usize,
        w2: usize,
        b2: usize,
        w3: usize,
        b3: usize,
        ws: usize,
        bs: usize,
        stride: usize,
        dropout_p: f64,
    },
}

struct FusionParams {
    /// Q/K/V projections per modality: [(w, b); 3] ordered q, k, v.
    time_qkv: [(usize, usize); 3],
    tf_qkv: [(usize, usize); 3],
    /// Output projections of the two attention directions.
    wo_time_from_tf: usize,
    wo_tf_from_time: usize,
}

/// The recognizer: parameters plus the derived layer structure.
pub struct Recognizer {
    pub cfg: RecognizerConfig,
    pub params: ParamSet,
    time_stack: Vec<Built>,
    stft_stack: Vec<Built>,
    spwvd_stack: Vec<Built>,
    fusion: FusionParams,
    classifier: Vec<(usize, usize)>,
}

fn build_stack(
    prefix: &str,
    specs: &[LayerSpec],
    mut in_ch: usize,
    params: &mut ParamSet,
    rng: &mut impl Rng,
) -> Vec<Built> {
    let mut built = Vec::new();
    let mut block_idx = 0usize;
    for spec in specs {
        let reps = spec.repeat.max(1);
        for _ in 0..reps {
            match spec.kind {
                LayerKind::Conv2d => {
                    let out = spec.channels_out;
                    let fan_in = in_ch * spec.kernel * spec.kernel;
                    let w = params.push(
                        format!("{prefix}.conv{block_idx}.w"),
                        Tensor::he_normal(vec![out, in_ch, spec.kernel, spec.kernel], fan_in, rng),
                    );
                    let b =
                        params.push(format!("{prefix}.conv{block_idx}.b"), Tensor::zeros(vec![out]));
                    built.push(Built::Conv {
                        w,
                        b,
                        stride: spec.stride,
                        pad: spec.kernel / 2,
                    });
                    in_ch = out;
                    block_idx += 1;
                }
                LayerKind::MaxPool => built.push(Built::MaxPool {
                    kernel: spec.kernel,
                    stride: spec.stride,
                    pad: spec.kernel / 2,
                }),
                LayerKind::Relu => built.push(Built::Relu),
                LayerKind::Dropout => built.push(Built::Dropout(spec.dropout_p)),
                LayerKind::ResidualBlock => {
                    let out = spec.channels_out;
                    let name = format!("{prefix}.unit{block_idx}");
                    let w1 = params.push(
                        format!("{name}.reduce.w"),
                        Tensor::he_normal(vec![out, in_ch, 1, 1], in_ch, rng),
                    );
                    let b1 = params.push(format!("{name}.reduce.b"), Tensor::zeros(vec![out]));
                    let w2 = params.push(
                        format!("{name}.mid.w"),
                        Tensor::he_normal(vec![out, out, 3, 3], out * 9, rng),
                    );
                    let b2 = params.push(format!("{name}.mid.b"), Tensor::zeros(vec![out]));
                    let w3 = params.push(
                        format!("{name}.expand.w"),
                        Tensor::he_normal(vec![out, out, 1, 1], out, rng),
                    );
                    let b3 = params.push(format!("{name}.expand.b"), Tensor::zeros(vec![out]));
                    let ws = params.push(
                        format!("{name}.skip.w"),
                        Tensor::he_normal(vec![out, in_ch, 1, 1], in_ch, rng),
                    );
                    let bs = params.push(format!("{name}.skip.b"), Tensor::zeros(vec![out]));
                    built.push(Built::Residual {
                        w1,
                        b1,
                        w2,
                        b2,
                        w3,
                        b3,
                        ws,
                        bs,
                        stride: spec.stride,
                        dropout_p: spec.dropout_p,
                    });
                    in_ch = out;
                    block_idx += 1;
                }
            }
        }
    }
    built
}

impl Recognizer {
    /// Fresh model with He-initialized weights.
    pub fn new(cfg: RecognizerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeds::rng_from_seed(seeds::child_seed(seed, 0x1417, 0));
        let mut params = ParamSet::new();
        let time_stack = build_stack("time", &cfg.time_branch, 2, &mut params, &mut rng);
        let stft_stack = build_stack("stft", &cfg.tf_branch, 1, &mut params, &mut rng);
        let spwvd_stack = build_stack("spwvd", &cfg.tf_branch, 1, &mut params, &mut rng);
        let d = cfg.model_width();
        let qkv = |params: &mut ParamSet, rng: &mut rand_chacha::ChaCha8Rng, tag: &str| {
            let mut out = [(0usize, 0usize); 3];
            for (i, role) in ["q", "k", "v"].iter().enumerate() {
                let w = params.push(
                    format!("fuse.{tag}.{role}.w"),
                    Tensor::he_normal(vec![d, d], d, rng),
                );
                let b = params.push(format!("fuse.{tag}.{role}.b"), Tensor::zeros(vec![d]));
                out[i] = (w, b);
            }
            out
        };
        let time_qkv = qkv(&mut params, &mut rng, "time");
        let tf_qkv = qkv(&mut params, &mut rng, "tf");
        let wo_time_from_tf = params.push(
            "fuse.time_from_tf.wo",
            Tensor::he_normal(vec![d, d], d, &mut rng),
        );
        let wo_tf_from_time = params.push(
            "fuse.tf_from_time.wo",
            Tensor::he_normal(vec![d, d], d, &mut rng),
        );
        let mut classifier = Vec::new();
        let mut width = 2 * d;
        for (i, &h) in cfg.classifier.iter().enumerate() {
            let w = params.push(
                format!("head.fc{i}.w"),
                Tensor::he_normal(vec![width, h], width, &mut rng),
            );
            let b = params.push(format!("head.fc{i}.b"), Tensor::zeros(vec![h]));
            classifier.push((w, b));
            width = h;
        }
        let w = params.push(
            "head.out.w",
            Tensor::he_normal(vec![width, cfg.classes], width, &mut rng),
        );
        let b = params.push("head.out.b", Tensor::zeros(vec![cfg.classes]));
        classifier.push((w, b));
        Ok(Recognizer {
            cfg,
            params,
            time_stack,
            stft_stack,
            spwvd_stack,
            fusion: FusionParams {
                time_qkv,
                tf_qkv,
                wo_time_from_tf,
                wo_tf_from_time,
            },
            classifier,
        })
    }

    fn apply_stack(
        g: &mut Graph,
        stack: &[Built],
        vars: &[Var],
        mut x: Var,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        for layer in stack {
            x = match layer {
                Built::Conv { w, b, stride, pad } => {
                    g.conv2d(x, vars[*w], vars[*b], *stride, *pad)?
                }
                Built::MaxPool { kernel, stride, pad } => g.maxpool2d(x, *kernel, *stride, *pad)?,
                Built::Relu => g.relu(x)?,
                Built::Dropout(p) => g.dropout(x, *p, rng)?,
                Built::Residual {
                    w1,
                    b1,
                    w2,
                    b2,
                    w3,
                    b3,
                    ws,
                    bs,
                    stride,
                    dropout_p,
                } => {
                    let y = g.conv2d(x, vars[*w1], vars[*b1], 1, 0)?;
                    let y = g.conv2d(y, vars[*w2], vars[*b2], *stride, 1)?;
                    let y = g.relu(y)?;
                    let y = g.dropout(y, *dropout_p, rng)?;
                    let y = g.conv2d(y, vars[*w3], vars[*b3], 1, 0)?;
                    let skip = g.conv2d(x, vars[*ws], vars[*bs], *stride, 0)?;
                    g.add(y, skip)?
                }
            };
        }
        Ok(x)
    }

    /// Feature map [N,C,H,W] -> per-sample token matrices [H*W, C].
    fn tokens(g: &mut Graph, fmap: Var, n: usize) -> Result<Vec<Var>> {
        let c = g.value(fmap).dim(1);
        let hw = g.value(fmap).dim(2) * g.value(fmap).dim(3);
        (0..n)
            .map(|i| {
                let item = g.index_batch(fmap, i)?;
                let flat = g.reshape(item, vec![c, hw])?;
                g.transpose(flat)
            })
            .collect()
    }

    /// Forward pass over a batch of scene features. Returns logits [N, 3].
    pub fn forward(
        &self,
        g: &mut Graph,
        vars: &[Var],
        batch: &BatchInputs,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let n = batch.len;
        let stft_in = g.leaf(batch.stft.clone());
        let spwvd_in = g.leaf(batch.spwvd.clone());
        let time_in = g.leaf(batch.time.clone());

        let stft_map = Self::apply_stack(g, &self.stft_stack, vars, stft_in, rng)?;
        let spwvd_map = Self::apply_stack(g, &self.spwvd_stack, vars, spwvd_in, rng)?;
        let time_map = Self::apply_stack(g, &self.time_stack, vars, time_in, rng)?;

        let stft_tokens = Self::tokens(g, stft_map, n)?;
        let spwvd_tokens = Self::tokens(g, spwvd_map, n)?;
        let time_tokens = Self::tokens(g, time_map, n)?;

        let heads = self.cfg.attention_heads;
        let d = self.cfg.model_width();
        let mut pooled_rows = Vec::with_capacity(n);
        for i in 0..n {
            // Fused TF representation: both TF token sets side by side.
            let f_tf = g.concat_rows(&[stft_tokens[i], spwvd_tokens[i]])?;
            let f_t = time_tokens[i];

            let q_t = nn::linear(g, f_t, vars[self.fusion.time_qkv[0].0], vars[self.fusion.time_qkv[0].1])?;
            let k_t = nn::linear(g, f_t, vars[self.fusion.time_qkv[1].0], vars[self.fusion.time_qkv[1].1])?;
            let v_t = nn::linear(g, f_t, vars[self.fusion.time_qkv[2].0], vars[self.fusion.time_qkv[2].1])?;
            let q_tf = nn::linear(g, f_tf, vars[self.fusion.tf_qkv[0].0], vars[self.fusion.tf_qkv[0].1])?;
            let k_tf = nn::linear(g, f_tf, vars[self.fusion.tf_qkv[1].0], vars[self.fusion.tf_qkv[1].1])?;
            let v_tf = nn::linear(g, f_tf, vars[self.fusion.tf_qkv[2].0], vars[self.fusion.tf_qkv[2].1])?;

            // Both cross-modal directions, then per-channel gating.
            let a_t = nn::multi_head_attention(
                g,
                q_t,
                k_tf,
                v_tf,
                heads,
                vars[self.fusion.wo_time_from_tf],
            )?;
            let a_tf = nn::multi_head_attention(
                g,
                q_tf,
                k_t,
                v_t,
                heads,
                vars[self.fusion.wo_tf_from_time],
            )?;
            let gated_t = nn::channel_gate(g, a_t, f_t)?;
            let gated_tf = nn::channel_gate(g, a_tf, f_tf)?;

            let pooled_t = g.mean_rows(gated_t)?;
            let pooled_tf = g.mean_rows(gated_tf)?;
            let row_t = g.reshape(pooled_t, vec![1, d])?;
            let row_tf = g.reshape(pooled_tf, vec![1, d])?;
            pooled_rows.push(g.concat_cols(&[row_t, row_tf])?);
        }
        let mut x = g.concat_rows(&pooled_rows)?;
        for (i, (w, b)) in self.classifier.iter().enumerate() {
            x = nn::linear(g, x, vars[*w], vars[*b])?;
            if i + 1 < self.classifier.len() {
                x = g.relu(x)?;
                x = g.dropout(x, self.cfg.classifier_dropout, rng)?;
            }
        }
        Ok(x)
    }

    /// Eval-mode logits for a batch.
    pub fn predict_logits(&self, batch: &BatchInputs) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(Mode::Eval);
        let vars = self.params.leaves(&mut g);
        let mut rng = seeds::rng_from_seed(0);
        let logits = self.forward(&mut g, &vars, batch, &mut rng)?;
        let t = g.value(logits);
        let k = self.cfg.classes;
        Ok((0..batch.len)
            .map(|i| t.data[i * k..(i + 1) * k].to_vec())
            .collect())
    }

    /// Predicted class per scene (argmax of eval-mode logits).
    pub fn predict(&self, features: &[SceneFeatures]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(16) {
            let batch = BatchInputs::from_features(chunk, self.cfg.image_side)?;
            for row in self.predict_logits(&batch)? {
                out.push(argmax(&row));
            }
        }
        Ok(out)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Feature pipeline
// ---------------------------------------------------------------------------

/// Transform parameters for scene feature extraction.
#[derive(Debug, Clone, Copy)]
pub struct FeatureParams {
    pub stft: StftParams,
    pub spwvd: SpwvdParams,
    pub image_side: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            stft: StftParams::default(),
            spwvd: SpwvdParams::default(),
            image_side: 64,
        }
    }
}

/// Input features of one scene: the two TF images plus the I/Q raster.
#[derive(Debug, Clone)]
pub struct SceneFeatures {
    pub stft_img: TfImage,
    pub spwvd_img: TfImage,
    /// [2, side, side]: I plane and Q plane, scaled by the peak magnitude.
    pub time: Tensor,
}

fn log_magnitude(s: &Spectrogram) -> Spectrogram {
    let mut out = s.clone();
    for v in out.values.iter_mut() {
        *v = (1.0 + *v).ln();
    }
    out
}

/// Raster the I/Q window into two square planes scaled to [-1, 1].
fn time_raster(x: &ComplexSeries, side: usize) -> Tensor {
    let n = x.len();
    let mut grid_side = 1usize;
    while grid_side * grid_side < n {
        grid_side += 1;
    }
    let peak = x.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let mut i_plane = vec![0.0; grid_side * grid_side];
    let mut q_plane = vec![0.0; grid_side * grid_side];
    for (i, v) in x.samples.iter().enumerate() {
        i_plane[i] = v.re * scale;
        q_plane[i] = v.im * scale;
    }
    let i_img = tf::bilinear_resample(&i_plane, grid_side, grid_side, side, side);
    let q_img = tf::bilinear_resample(&q_plane, grid_side, grid_side, side, side);
    let mut data = i_img;
    data.extend_from_slice(&q_img);
    Tensor::new(vec![2, side, side], data)
}

/// Full feature extraction for one composite echo.
pub fn scene_features(x: &ComplexSeries, fp: &FeatureParams) -> Result<SceneFeatures> {
    let stft_spec = tf::stft(x, &fp.stft)?;
    let stft_img = tf::to_image(&log_magnitude(&stft_spec), fp.image_side);
    let spwvd_spec = tf::spwvd(x, &fp.spwvd)?;
    let spwvd_img = tf::to_image(&spwvd_spec, fp.image_side);
    let time = time_raster(x, fp.image_side);
    Ok(SceneFeatures {
        stft_img,
        spwvd_img,
        time,
    })
}

/// Dense batch tensors assembled from per-scene features.
pub struct BatchInputs {
    pub stft: Tensor,
    pub spwvd: Tensor,
    pub time: Tensor,
    pub len: usize,
}

impl BatchInputs {
    pub fn from_features(features: &[SceneFeatures], side: usize) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let hw = side * side;
        let mut stft = vec![0.0; n * hw];
        let mut spwvd = vec![0.0; n * hw];
        let mut time = vec![0.0; n * 2 * hw];
        for (i, f) in features.iter().enumerate() {
            if f.stft_img.side != side || f.spwvd_img.side != side || f.time.dim(1) != side {
                return Err(Error::ShapeMismatch(format!(
                    "feature side {} vs configured {side}",
                    f.stft_img.side
                )));
            }
            stft[i * hw..(i + 1) * hw].copy_from_slice(&f.stft_img.pixels);
            spwvd[i * hw..(i + 1) * hw].copy_from_slice(&f.spwvd_img.pixels);
            time[i * 2 * hw..(i + 1) * 2 * hw].copy_from_slice(&f.time.data);
        }
        Ok(BatchInputs {
            stft: Tensor::new(vec![n, 1, side, side], stft),
            spwvd: Tensor::new(vec![n, 1, side, side], spwvd),
            time: Tensor::new(vec![n, 2, side, side], time),
            len: n,
        })
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Labeled feature sets per split.
pub struct RecognizerDataset {
    pub train: Vec<(SceneFeatures, usize)>,
    pub val: Vec<(SceneFeatures, usize)>,
    pub test: Vec<(SceneFeatures, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop once validation OA reaches this level (the epoch still counts).
    pub early_stop_val_oa: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            early_stop_val_oa: Some(0.99),
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_oa: f64,
}

/// Fraction of correct predictions over a labeled feature set.
pub fn overall_accuracy(model: &Recognizer, set: &[(SceneFeatures, usize)]) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let features: Vec<SceneFeatures> = set.iter().map(|(f, _)| f.clone()).collect();
    let preds = model.predict(&features)?;
    let correct = preds
        .iter()
        .zip(set.iter())
        .filter(|(p, (_, l))| *p == l)
        .count();
    Ok(correct as f64 / set.len() as f64)
}

/// One optimization step on a fixed batch; returns the loss.
pub fn train_step(
    model: &mut Recognizer,
    adam: &mut Adam,
    batch: &BatchInputs,
    labels: &[usize],
    step_seed: u64,
) -> Result<f64> {
    let mut g = Graph::new(Mode::Train);
    let vars = model.params.leaves(&mut g);
    let mut rng = seeds::rng_from_seed(step_seed);
    let logits = model.forward(&mut g, &vars, batch, &mut rng)?;
    let loss = g.softmax_xent(logits, labels)?;
    let value = g.value(loss).item();
    let store = g.backward(loss)?;
    adam.step(&mut model.params, &store, &vars);
    Ok(value)
}

/// Mini-batch training with per-epoch validation accuracy. Deterministic
/// given the seed: shuffling, initialization and dropout all derive from it.
pub fn train_recognizer(
    cfg: RecognizerConfig,
    dataset: &RecognizerDataset,
    opts: &TrainOptions,
) -> Result<(Recognizer, Vec<EpochStats>)> {
    for class in 0..NUM_CLASSES {
        if !dataset.train.iter().any(|(_, l)| *l == class) {
            return Err(Error::MissingClass(class));
        }
    }
    let mut model = Recognizer::new(cfg, opts.seed)?;
    let mut adam = Adam::new(&model.params, opts.lr);
    let side = model.cfg.image_side;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..opts.epochs {
        let mut shuffle_rng =
            seeds::rng_from_seed(seeds::child_seed(opts.seed, 0x51f, epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(opts.batch_size).enumerate() {
            let feats: Vec<SceneFeatures> =
                chunk.iter().map(|&i| dataset.train[i].0.clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.train[i].1).collect();
            let batch = BatchInputs::from_features(&feats, side)?;
            let step_seed = seeds::child_seed(opts.seed, 0xd20 + epoch as u64, bi as u64);
            loss_sum += train_step(&mut model, &mut adam, &batch, &labels, step_seed)?;
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let val_oa = overall_accuracy(&model, &dataset.val)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_oa,
        });
        if let Some(target) = opts.early_stop_val_oa {
            if val_oa >= target {
                break;
            }
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample_jamming, synth_scene, JammingKind, RadarParams, SampleRanges};

    /// Small config for fast tests: 32x32 images, one unit per branch.
    fn toy_config() -> RecognizerConfig {
        RecognizerConfig {
            image_side: 32,
            time_branch: vec![
                LayerSpec::conv(7, 2, 16),
                LayerSpec::relu(),
                LayerSpec::maxpool(3, 2),
                LayerSpec::conv(3, 2, 32),
                LayerSpec::relu(),
            ],
            tf_branch: vec![
                LayerSpec::conv(7, 2, 16),
                LayerSpec::maxpool(3, 2),
                LayerSpec::residual(2, 32, 0.0),
            ],
            attention_heads: 4,
            head_dim: 8,
            classifier: vec![16],
            classifier_dropout: 0.0,
            classes: 3,
        }
    }

    fn toy_features(n: usize, seed: u64) -> Vec<(SceneFeatures, usize)> {
        let p = RadarParams::default();
        let ranges = SampleRanges::default();
        let fp = FeatureParams {
            image_side: 32,
            ..FeatureParams::default()
        };
        let mut rng = crate::seeds::rng_from_seed(seed);
        (0..n)
            .map(|i| {
                let kind = JammingKind::ALL[i % 3];
                let (spec, delay) = sample_jamming(kind, &p, &ranges, &mut rng);
                let scene = synth_scene(&p, &spec, delay, seed ^ (i as u64)).unwrap();
                let f = scene_features(&scene.composite, &fp).unwrap();
                (f, kind.label())
            })
            .collect()
    }

    #[test]
    fn zero_inputs_with_zeroed_head_give_bias_logits() {
        let cfg = toy_config();
        let mut model = Recognizer::new(cfg, 1).unwrap();
        // Zero the final layer; set a recognizable bias.
        let out_w = model.params.find("head.out.w").unwrap();
        let out_b = model.params.find("head.out.b").unwrap();
        for v in model.params.tensor_mut(out_w).data.iter_mut() {
            *v = 0.0;
        }
        model.params.tensor_mut(out_b).data = vec![0.25, -0.5, 1.5];
        let zero = SceneFeatures {
            stft_img: TfImage {
                pixels: vec![0.0; 32 * 32],
                side: 32,
                norm_min: 0.0,
                norm_max: 0.0,
            },
            spwvd_img: TfImage {
                pixels: vec![0.0; 32 * 32],
                side: 32,
                norm_min: 0.0,
                norm_max: 0.0,
            },
            time: Tensor::zeros(vec![2, 32, 32]),
        };
        let batch = BatchInputs::from_features(&[zero], 32).unwrap();
        let logits = model.predict_logits(&batch).unwrap();
        assert_eq!(logits[0], vec![0.25, -0.5, 1.5]);
    }

    #[test]
    fn eval_forward_is_deterministic_and_batch_independent() {
        let data = toy_features(2, 7);
        let model = Recognizer::new(toy_config(), 3).unwrap();
        let single = BatchInputs::from_features(&[data[0].0.clone()], 32).unwrap();
        let l1 = model.predict_logits(&single).unwrap();
        let l2 = model.predict_logits(&single).unwrap();
        assert_eq!(l1, l2);
        // A batch of two identical scenes yields identical rows.
        let twin =
            BatchInputs::from_features(&[data[0].0.clone(), data[0].0.clone()], 32).unwrap();
        let l3 = model.predict_logits(&twin).unwrap();
        assert_eq!(l3[0], l3[1]);
        assert_eq!(l3[0], l1[0]);
    }

    #[test]
    fn permuting_batch_rows_permutes_logits() {
        let data = toy_features(4, 9);
        let model = Recognizer::new(toy_config(), 5).unwrap();
        let feats: Vec<SceneFeatures> = data.iter().map(|(f, _)| f.clone()).collect();
        let fwd = model
            .predict_logits(&BatchInputs::from_features(&feats, 32).unwrap())
            .unwrap();
        let perm = [2usize, 0, 3, 1];
        let shuffled: Vec<SceneFeatures> = perm.iter().map(|&i| feats[i].clone()).collect();
        let out = model
            .predict_logits(&BatchInputs::from_features(&shuffled, 32).unwrap())
            .unwrap();
        for (row, &src) in out.iter().zip(&perm) {
            assert_eq!(row, &fwd[src]);
        }
    }

    #[test]
    fn one_epoch_reduces_or_holds_loss_on_toy_set() {
        let data = toy_features(30, 11);
        let dataset = RecognizerDataset {
            train: data.clone(),
            val: data[..6].to_vec(),
            test: Vec::new(),
        };
        let opts = TrainOptions {
            epochs: 1,
            batch_size: 10,
            lr: 1e-3,
            seed: 2,
            early_stop_val_oa: None,
        };
        let (_, history) = train_recognizer(toy_config(), &dataset, &opts).unwrap();
        assert_eq!(history.len(), 1);
        assert!(history[0].train_loss.is_finite());
        assert!(history[0].train_loss <= (3.0f64).ln() + 0.5);
    }

    #[test]
    fn overfits_a_frozen_batch() {
        let data = toy_features(6, 13);
        let feats: Vec<SceneFeatures> = data.iter().map(|(f, _)| f.clone()).collect();
        let labels: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
        let batch = BatchInputs::from_features(&feats, 32).unwrap();
        let mut model = Recognizer::new(toy_config(), 17).unwrap();
        let mut adam = Adam::new(&model.params, 1e-3);
        let mut losses = Vec::new();
        for step in 0..200 {
            let loss = train_step(&mut model, &mut adam, &batch, &labels, 1000 + step).unwrap();
            losses.push(loss);
        }
        // After warmup the loss must be non-increasing up to tiny upticks on
        // at most 5% of steps.
        let mut upticks = 0;
        for w in losses[10..].windows(2) {
            if w[1] > w[0] + 1e-6 {
                upticks += 1;
            }
        }
        assert!(
            upticks <= (losses.len() - 11) / 20,
            "{upticks} upticks, final loss {}",
            losses.last().unwrap()
        );
        assert!(losses.last().unwrap() < &0.05, "final {}", losses.last().unwrap());
    }

    #[test]
    fn missing_class_is_rejected() {
        let data: Vec<(SceneFeatures, usize)> = toy_features(6, 15)
            .into_iter()
            .filter(|(_, l)| *l != 2)
            .collect();
        let dataset = RecognizerDataset {
            train: data,
            val: Vec::new(),
            test: Vec::new(),
        };
        let err = train_recognizer(toy_config(), &dataset, &TrainOptions::default());
        assert!(matches!(err, Err(Error::MissingClass(2))));
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let data = toy_features(12, 19);
        let dataset = RecognizerDataset {
            train: data.clone(),
            val: data[..3].to_vec(),
            test: Vec::new(),
        };
        let opts = TrainOptions {
            epochs: 2,
            batch_size: 6,
            lr: 1e-3,
            seed: 77,
            early_stop_val_oa: None,
        };
        let (m1, h1) = train_recognizer(toy_config(), &dataset, &opts).unwrap();
        let (m2, h2) = train_recognizer(toy_config(), &dataset, &opts).unwrap();
        for ((_, a), (_, b)) in m1.params.iter().zip(m2.params.iter()) {
            assert_eq!(a.data, b.data);
        }
        for (x, y) in h1.iter().zip(&h2) {
            assert_eq!(x.train_loss, y.train_loss);
            assert_eq!(x.val_oa, y.val_oa);
        }
    }
}
