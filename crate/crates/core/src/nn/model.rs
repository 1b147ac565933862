//! The two-tower network: a spatial tower over the RGB frame, a motion tower
//! over the stack of differences, fused by subtraction at the first embedding
//! layer (`fc6`) and followed by a classification head.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::motion::{StackOfDifferences, SOD_CHANNELS};
use crate::nn::layers::{relu_backward_in_place, relu_in_place, Conv2d, Linear, MaxPool2d};
use crate::nn::params::{Grads, ParamId, ParamSet};
use crate::nn::Real;
use crate::pretext::PRETEXT_CLASSES;
use crate::rng::{self, tag};

pub const FUSION_LAYER: &str = "fc6";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub size: usize,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool: Option<PoolSpec>,
}

impl ConvStage {
    pub const fn new(filters: usize, kernel: usize, stride: usize, pool: Option<PoolSpec>) -> Self {
        ConvStage {
            filters,
            kernel,
            stride,
            pool,
        }
    }
}

const POOL2: Option<PoolSpec> = Some(PoolSpec { size: 2, stride: 2 });
const POOL3S2: Option<PoolSpec> = Some(PoolSpec { size: 3, stride: 2 });

/// Topology shared by both towers; only the input channel count differs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerSpec {
    pub name: String,
    /// `(height, width)` the tower expects.
    pub input_size: (usize, usize),
    pub conv_stages: Vec<ConvStage>,
    /// Width of the `fc6` embedding.
    pub embedding_dim: usize,
}

impl TowerSpec {
    /// Desk-scale default: three conv stages on 32×32 inputs.
    pub fn tiny() -> Self {
        TowerSpec {
            name: "tiny".into(),
            input_size: (32, 32),
            conv_stages: vec![
                ConvStage::new(8, 3, 1, POOL2),
                ConvStage::new(16, 3, 1, POOL2),
                ConvStage::new(32, 3, 1, POOL2),
            ],
            embedding_dim: 256,
        }
    }

    /// Five conv stages on 224×224 inputs with a 4096-wide `fc6`.
    pub fn alexnet_like() -> Self {
        TowerSpec {
            name: "alexnet-like".into(),
            input_size: (224, 224),
            conv_stages: vec![
                ConvStage::new(96, 11, 4, POOL3S2),
                ConvStage::new(256, 5, 1, POOL3S2),
                ConvStage::new(384, 3, 1, None),
                ConvStage::new(384, 3, 1, None),
                ConvStage::new(256, 3, 1, POOL3S2),
            ],
            embedding_dim: 4096,
        }
    }

    /// Two conv stages on 8×8 inputs; small enough for finite differences.
    pub fn micro() -> Self {
        TowerSpec {
            name: "micro".into(),
            input_size: (8, 8),
            conv_stages: vec![ConvStage::new(4, 3, 1, POOL2), ConvStage::new(6, 3, 1, POOL2)],
            embedding_dim: 16,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "alexnet-like" => Some(Self::alexnet_like()),
            "micro" => Some(Self::micro()),
            _ => None,
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_of(self)
    }

    /// Spatial size after every conv stage, or the offending stage.
    pub fn feature_hw(&self) -> Result<Vec<(usize, usize)>> {
        let mut hw = self.input_size;
        let mut out = Vec::new();
        for (i, s) in self.conv_stages.iter().enumerate() {
            let key = format!("model.tower.conv_stages[{i}]");
            if s.filters == 0 || s.kernel == 0 || s.stride == 0 {
                return Err(Error::config(key, "filters, kernel and stride must be positive"));
            }
            hw = Conv2d::output_hw(hw, s.kernel, s.stride, s.kernel / 2)
                .ok_or_else(|| Error::config(&key, "kernel larger than padded input"))?;
            if let Some(p) = s.pool {
                if p.size == 0 || p.stride == 0 {
                    return Err(Error::config(key, "pool size and stride must be positive"));
                }
                hw = MaxPool2d::output_hw(hw, p.size, p.stride)
                    .ok_or_else(|| Error::config(&key, "pool window larger than feature map"))?;
            }
            out.push(hw);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::config("model.tower.input_size", "must be positive"));
        }
        if self.conv_stages.is_empty() {
            return Err(Error::config("model.tower.conv_stages", "needs at least one stage"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::config("model.tower.embedding_dim", "must be positive"));
        }
        self.feature_hw().map(|_| ())
    }
}

fn fingerprint_of<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fusion {
    /// `spatial_embedding - motion_embedding`.
    #[default]
    Subtract,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStreamConfig {
    pub tower: TowerSpec,
    pub fusion: Fusion,
    pub fusion_point: String,
    pub spatial_frozen: bool,
    pub pretext_classes: usize,
    pub downstream_classes: usize,
    /// Width of the hidden `fc7` layer in each head; 0 maps `fc6` straight to logits.
    pub head_hidden: usize,
}

impl Default for TwoStreamConfig {
    fn default() -> Self {
        TwoStreamConfig {
            tower: TowerSpec::tiny(),
            fusion: Fusion::Subtract,
            fusion_point: FUSION_LAYER.into(),
            spatial_frozen: true,
            pretext_classes: PRETEXT_CLASSES,
            downstream_classes: 4,
            head_hidden: 128,
        }
    }
}

#[derive(Serialize)]
struct Architecture<'a> {
    tower: &'a TowerSpec,
    fusion: Fusion,
    fusion_point: &'a str,
    pretext_classes: usize,
    downstream_classes: usize,
    head_hidden: usize,
}

impl TwoStreamConfig {
    pub fn validate(&self) -> Result<()> {
        self.tower.validate()?;
        if self.fusion_point != FUSION_LAYER {
            return Err(Error::config(
                "model.fusion_point",
                format!(
                    "`{}` does not produce equal-width vectors in both towers; only `{FUSION_LAYER}` does",
                    self.fusion_point
                ),
            ));
        }
        if self.pretext_classes != PRETEXT_CLASSES {
            return Err(Error::config("model.pretext_classes", format!("must be {PRETEXT_CLASSES}")));
        }
        if self.downstream_classes < 2 {
            return Err(Error::config("model.downstream_classes", "must be at least 2"));
        }
        Ok(())
    }

    /// Digest of every field that shapes the parameters. Freeze flags are
    /// training policy and excluded.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&Architecture {
            tower: &self.tower,
            fusion: self.fusion,
            fusion_point: &self.fusion_point,
            pretext_classes: self.pretext_classes,
            downstream_classes: self.downstream_classes,
            head_hidden: self.head_hidden,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightProvenance {
    Random,
    Warmstart,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Pretext,
    Downstream,
}

/// Classifier layers start near zero so the initial loss sits at ln K.
const CLASSIFIER_GAIN: f64 = 0.05;

fn init_uniform<T: Real>(seed: u64, name: &str, len: usize, fan_in: usize, gain: f64) -> Vec<T> {
    let bound = gain * (6.0 / fan_in as f64).sqrt();
    let mut rng = rng::stream(seed, &[tag::PARAM, rng::name_key(name)]);
    (0..len)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect()
}

fn add_linear<T: Real>(params: &mut ParamSet<T>, seed: u64, name: String, inputs: usize, outputs: usize, gain: f64) -> Linear {
    let w_name = format!("{name}.weight");
    let weight = params.add(w_name.clone(), vec![outputs, inputs], init_uniform(seed, &w_name, outputs * inputs, inputs, gain));
    let bias = params.add(format!("{name}.bias"), vec![outputs], vec![T::zero(); outputs]);
    Linear {
        name,
        weight,
        bias,
        inputs,
        outputs,
    }
}

#[derive(Clone, Debug)]
struct Stage {
    conv: Conv2d,
    pool: Option<MaxPool2d>,
}

#[derive(Clone, Debug)]
pub struct Tower {
    prefix: String,
    input_channels: usize,
    input_hw: (usize, usize),
    stages: Vec<Stage>,
    fc6: Linear,
}

struct StageCache<T> {
    cols: Vec<T>,
    activated: Vec<T>,
    pool_arg: Option<Vec<u32>>,
}

pub(crate) struct TowerCache<T> {
    stages: Vec<StageCache<T>>,
    flat: Vec<T>,
    embedding: Vec<T>,
}

impl Tower {
    pub(crate) fn build<T: Real>(params: &mut ParamSet<T>, prefix: &str, spec: &TowerSpec, input_channels: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut hw = spec.input_size;
        let mut channels = input_channels;
        let mut stages = Vec::new();
        for (i, s) in spec.conv_stages.iter().enumerate() {
            let name = format!("{prefix}.conv{}", i + 1);
            let pad = s.kernel / 2;
            let out_hw = Conv2d::output_hw(hw, s.kernel, s.stride, pad).expect("validated");
            let fan_in = channels * s.kernel * s.kernel;
            let w_name = format!("{name}.weight");
            let weight = params.add(
                w_name.clone(),
                vec![s.filters, channels, s.kernel, s.kernel],
                init_uniform(seed, &w_name, s.filters * fan_in, fan_in, 1.0),
            );
            let bias = params.add(format!("{name}.bias"), vec![s.filters], vec![T::zero(); s.filters]);
            let conv = Conv2d {
                name,
                weight,
                bias,
                in_channels: channels,
                out_channels: s.filters,
                kernel: s.kernel,
                stride: s.stride,
                pad,
                in_hw: hw,
                out_hw,
            };
            hw = out_hw;
            let pool = s.pool.map(|p| {
                let out = MaxPool2d::output_hw(hw, p.size, p.stride).expect("validated");
                let pool = MaxPool2d {
                    channels: s.filters,
                    size: p.size,
                    stride: p.stride,
                    in_hw: hw,
                    out_hw: out,
                };
                hw = out;
                pool
            });
            channels = s.filters;
            stages.push(Stage { conv, pool });
        }
        let flat = channels * hw.0 * hw.1;
        let fc6 = add_linear(params, seed, format!("{prefix}.{FUSION_LAYER}"), flat, spec.embedding_dim, 1.0);
        Ok(Tower {
            prefix: prefix.to_string(),
            input_channels,
            input_hw: spec.input_size,
            stages,
            fc6,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_hw.0 * self.input_hw.1
    }

    pub fn embedding_dim(&self) -> usize {
        self.fc6.outputs
    }

    pub(crate) fn forward<T: Real>(&self, params: &ParamSet<T>, input: &[T], n: usize) -> (Vec<T>, TowerCache<T>) {
        assert_eq!(input.len(), n * self.input_len(), "{} input length", self.prefix);
        let mut x = input.to_vec();
        let mut caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (mut y, cols) = stage.conv.forward(params, &x, n);
            relu_in_place(&mut y);
            let (next, pool_arg) = match &stage.pool {
                Some(pool) => {
                    let (p, arg) = pool.forward(&y, n);
                    (p, Some(arg))
                }
                None => (y.clone(), None),
            };
            caches.push(StageCache {
                cols,
                activated: y,
                pool_arg,
            });
            x = next;
        }
        let mut embedding = self.fc6.forward(params, &x, n);
        relu_in_place(&mut embedding);
        (
            embedding.clone(),
            TowerCache {
                stages: caches,
                flat: x,
                embedding,
            },
        )
    }

    pub(crate) fn backward<T: Real>(&self, params: &ParamSet<T>, cache: &TowerCache<T>, d_embedding: &[T], n: usize, grads: &mut Grads<T>) {
        let mut d = d_embedding.to_vec();
        relu_backward_in_place(&cache.embedding, &mut d);
        let mut d = self
            .fc6
            .backward(params, &cache.flat, &d, n, grads, true)
            .expect("input gradient requested");
        for (i, (stage, sc)) in self.stages.iter().zip(&cache.stages).enumerate().rev() {
            if let (Some(pool), Some(arg)) = (&stage.pool, &sc.pool_arg) {
                d = pool.backward(arg, &d, n);
            }
            relu_backward_in_place(&sc.activated, &mut d);
            match stage.conv.backward(params, &sc.cols, &d, n, grads, i > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
    }

    pub(crate) fn param_ids(&self) -> Vec<ParamId> {
        self.stages
            .iter()
            .flat_map(|s| [s.conv.weight, s.conv.bias])
            .chain([self.fc6.weight, self.fc6.bias])
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Head {
    fc7: Option<Linear>,
    fc8: Linear,
}

pub(crate) struct HeadCache<T> {
    input: Vec<T>,
    hidden: Option<Vec<T>>,
}

impl Head {
    pub(crate) fn build<T: Real>(params: &mut ParamSet<T>, prefix: &str, inputs: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let (fc7, width) = if hidden > 0 {
            (Some(add_linear(params, seed, format!("{prefix}.fc7"), inputs, hidden, 1.0)), hidden)
        } else {
            (None, inputs)
        };
        let fc8 = add_linear(params, seed, format!("{prefix}.fc8"), width, classes, CLASSIFIER_GAIN);
        Head { fc7, fc8 }
    }

    pub fn classes(&self) -> usize {
        self.fc8.outputs
    }

    pub(crate) fn forward<T: Real>(&self, params: &ParamSet<T>, fused: &[T], n: usize) -> (Vec<T>, HeadCache<T>) {
        let hidden = self.fc7.as_ref().map(|fc7| {
            let mut h = fc7.forward(params, fused, n);
            relu_in_place(&mut h);
            h
        });
        let logits = self.fc8.forward(params, hidden.as_deref().unwrap_or(fused), n);
        (
            logits,
            HeadCache {
                input: fused.to_vec(),
                hidden,
            },
        )
    }

    pub(crate) fn backward<T: Real>(&self, params: &ParamSet<T>, cache: &HeadCache<T>, d_logits: &[T], n: usize, grads: &mut Grads<T>) -> Vec<T> {
        let x8 = cache.hidden.as_deref().unwrap_or(&cache.input);
        let d = self.fc8.backward(params, x8, d_logits, n, grads, true).expect("input gradient requested");
        match (&self.fc7, &cache.hidden) {
            (Some(fc7), Some(h)) => {
                let mut d = d;
                relu_backward_in_place(h, &mut d);
                fc7.backward(params, &cache.input, &d, n, grads, true).expect("input gradient requested")
            }
            _ => d,
        }
    }

    pub(crate) fn param_ids(&self) -> Vec<ParamId> {
        self.fc7
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .chain([self.fc8.weight, self.fc8.bias])
            .collect()
    }
}

/// A batch in channel-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub n: usize,
    pub rgb: Vec<T>,
    pub sod: Vec<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn assemble<'a>(items: impl IntoIterator<Item = (&'a Frame, &'a StackOfDifferences, usize)>) -> Self {
        let mut batch = Batch {
            n: 0,
            rgb: Vec::new(),
            sod: Vec::new(),
            labels: Vec::new(),
        };
        for (rgb, sod, label) in items {
            let r0 = batch.rgb.len();
            batch.rgb.resize(r0 + rgb.data().len(), T::zero());
            rgb.write_chw(&mut batch.rgb[r0..], T::from_f32_lossy);
            let s0 = batch.sod.len();
            batch.sod.resize(s0 + sod.data().len(), T::zero());
            sod.as_frame().write_chw(&mut batch.sod[s0..], T::from_f32_lossy);
            batch.labels.push(label);
            batch.n += 1;
        }
        batch
    }
}

/// Mean loss, number of correct argmax predictions and parameter gradients.
pub struct StepOutput<T> {
    pub loss: f64,
    pub correct: usize,
    pub grads: Grads<T>,
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Summed cross-entropy and `d(sum)/d(logits) * scale`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], labels: &[usize], classes: usize, scale: T) -> (f64, Vec<T>, usize) {
    let mut loss = 0.0;
    let mut correct = 0;
    let mut grad = vec![T::zero(); logits.len()];
    for ((row, g), &y) in logits.chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
        loss += (sum.ln() + max - row[y]).to_f64().unwrap_or(f64::NAN);
        for (j, (gj, &e)) in g.iter_mut().zip(&exps).enumerate() {
            let p = e / sum;
            *gj = (if j == y { p - T::one() } else { p }) * scale;
        }
        if argmax(row) == y {
            correct += 1;
        }
    }
    (loss, grad, correct)
}

#[derive(Clone, Debug)]
pub struct TwoStreamNet<T: Real = f32> {
    config: TwoStreamConfig,
    params: ParamSet<T>,
    spatial: Tower,
    motion: Tower,
    pretext_head: Head,
    downstream_head: Head,
    spatial_frozen: bool,
    spatial_provenance: WeightProvenance,
    step: u64,
}

impl<T: Real> TwoStreamNet<T> {
    /// Fresh network; every parameter tensor draws from a stream keyed by
    /// `(seed, parameter name)`.
    pub fn new(config: TwoStreamConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let spatial = Tower::build(&mut params, "spatial", &config.tower, 3, seed)?;
        let motion = Tower::build(&mut params, "motion", &config.tower, SOD_CHANNELS, seed)?;
        let e = config.tower.embedding_dim;
        let pretext_head = Head::build(&mut params, "pretext_head", e, config.head_hidden, config.pretext_classes, seed);
        let downstream_head = Head::build(&mut params, "downstream_head", e, config.head_hidden, config.downstream_classes, seed);
        Ok(TwoStreamNet {
            spatial_frozen: config.spatial_frozen,
            config,
            params,
            spatial,
            motion,
            pretext_head,
            downstream_head,
            spatial_provenance: WeightProvenance::Random,
            step: 0,
        })
    }

    pub fn config(&self) -> &TwoStreamConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn freeze_spatial(&mut self) {
        self.spatial_frozen = true;
    }

    pub fn unfreeze_spatial(&mut self) {
        self.spatial_frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.spatial_frozen
    }

    pub fn spatial_provenance(&self) -> WeightProvenance {
        self.spatial_provenance
    }

    pub fn set_spatial_provenance(&mut self, p: WeightProvenance) {
        self.spatial_provenance = p;
    }

    pub fn head(&self, kind: HeadKind) -> &Head {
        match kind {
            HeadKind::Pretext => &self.pretext_head,
            HeadKind::Downstream => &self.downstream_head,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.tower.embedding_dim
    }

    /// Parameter names belonging to a tower (`"spatial"` / `"motion"`) or head.
    pub fn group_of(name: &str) -> &str {
        name.split('.').next().unwrap_or(name)
    }

    pub fn spatial_param_ids(&self) -> Vec<ParamId> {
        self.spatial.param_ids()
    }

    pub fn motion_param_ids(&self) -> Vec<ParamId> {
        self.motion.param_ids()
    }

    pub fn head_param_ids(&self, kind: HeadKind) -> Vec<ParamId> {
        self.head(kind).param_ids()
    }

    /// Which parameters an optimizer may update when training `head`.
    pub fn trainable_mask(&self, head: HeadKind) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        let mut ids = self.motion.param_ids();
        ids.extend(self.head(head).param_ids());
        if !self.spatial_frozen {
            ids.extend(self.spatial.param_ids());
        }
        for id in ids {
            mask[id.0] = true;
        }
        mask
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        if batch.rgb.len() != batch.n * self.spatial.input_len() {
            return Err(Error::shape(
                "spatial.conv1",
                format!(
                    "rgb batch holds {} values, expected {} x 3x{}x{}",
                    batch.rgb.len(),
                    batch.n,
                    self.config.tower.input_size.0,
                    self.config.tower.input_size.1
                ),
            ));
        }
        if batch.sod.len() != batch.n * self.motion.input_len() {
            return Err(Error::shape(
                "motion.conv1",
                format!(
                    "sod batch holds {} values, expected {} x {SOD_CHANNELS}x{}x{}",
                    batch.sod.len(),
                    batch.n,
                    self.config.tower.input_size.0,
                    self.config.tower.input_size.1
                ),
            ));
        }
        Ok(())
    }

    pub fn spatial_embedding(&self, rgb: &[T], n: usize) -> Vec<T> {
        self.spatial.forward(&self.params, rgb, n).0
    }

    pub fn motion_embedding(&self, sod: &[T], n: usize) -> Vec<T> {
        self.motion.forward(&self.params, sod, n).0
    }

    /// `spatial - motion`, elementwise.
    pub fn fuse(spatial: &[T], motion: &[T]) -> Vec<T> {
        spatial.iter().zip(motion).map(|(&s, &m)| s - m).collect()
    }

    /// Fused `fc6` features; identical for both heads.
    pub fn trunk(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        self.check_batch(batch)?;
        Ok(Self::fuse(
            &self.spatial_embedding(&batch.rgb, batch.n),
            &self.motion_embedding(&batch.sod, batch.n),
        ))
    }

    pub fn head_logits(&self, kind: HeadKind, fused: &[T], n: usize) -> Vec<T> {
        self.head(kind).forward(&self.params, fused, n).0
    }

    pub fn logits(&self, kind: HeadKind, batch: &Batch<T>) -> Result<Vec<T>> {
        let fused = self.trunk(batch)?;
        Ok(self.head_logits(kind, &fused, batch.n))
    }

    fn single(&self, rgb: &Frame, sod: &StackOfDifferences) -> Result<Batch<T>> {
        let (h, w) = self.config.tower.input_size;
        if rgb.dims() != (h, w, 3) {
            return Err(Error::shape("spatial.conv1", format!("rgb is {:?}, expected {:?}", rgb.dims(), (h, w, 3))));
        }
        if (sod.height(), sod.width()) != (h, w) {
            return Err(Error::shape(
                "motion.conv1",
                format!("sod is {}x{}, expected {h}x{w}", sod.height(), sod.width()),
            ));
        }
        Ok(Batch::assemble([(rgb, sod, 0)]))
    }

    pub fn forward_pretext(&self, rgb: &Frame, sod: &StackOfDifferences) -> Result<Vec<T>> {
        self.logits(HeadKind::Pretext, &self.single(rgb, sod)?)
    }

    pub fn forward_downstream(&self, rgb: &Frame, sod: &StackOfDifferences) -> Result<Vec<T>> {
        self.logits(HeadKind::Downstream, &self.single(rgb, sod)?)
    }

    /// Mean cross-entropy over the batch and its gradients. When
    /// `spatial_embedding` is given it replaces the spatial forward pass; it
    /// must come from the current, frozen spatial weights.
    pub fn loss_and_grads(&self, kind: HeadKind, batch: &Batch<T>, spatial_embedding: Option<&[T]>) -> Result<StepOutput<T>> {
        self.check_batch(batch)?;
        let n = batch.n;
        if n == 0 {
            return Err(Error::Argument("empty batch".into()));
        }
        let head = self.head(kind);
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= head.classes()) {
            return Err(Error::Dataset(format!("label {bad} out of range for {} classes", head.classes())));
        }
        let train_spatial = !self.spatial_frozen;
        let (spatial_emb, spatial_cache) = match (spatial_embedding, train_spatial) {
            (Some(e), false) => {
                if e.len() != n * self.embedding_dim() {
                    return Err(Error::shape("spatial.fc6", "cached embedding has the wrong length"));
                }
                (e.to_vec(), None)
            }
            _ => {
                let (e, cache) = self.spatial.forward(&self.params, &batch.rgb, n);
                (e, train_spatial.then_some(cache))
            }
        };
        let (motion_emb, motion_cache) = self.motion.forward(&self.params, &batch.sod, n);
        let fused = Self::fuse(&spatial_emb, &motion_emb);
        let (logits, head_cache) = head.forward(&self.params, &fused, n);
        let scale = T::one() / T::from_usize(n).expect("batch size fits");
        let (loss_sum, d_logits, correct) = softmax_cross_entropy(&logits, &batch.labels, head.classes(), scale);

        let mut grads = Grads::zeros_like(&self.params);
        let d_fused = head.backward(&self.params, &head_cache, &d_logits, n, &mut grads);
        let d_motion: Vec<T> = d_fused.iter().map(|&g| -g).collect();
        self.motion.backward(&self.params, &motion_cache, &d_motion, n, &mut grads);
        if let Some(cache) = spatial_cache {
            self.spatial.backward(&self.params, &cache, &d_fused, n, &mut grads);
        }
        Ok(StepOutput {
            loss: loss_sum / n as f64,
            correct,
            grads,
        })
    }

    /// Copies every parameter whose name starts with `prefix.` from `other`.
    pub fn copy_group_from(&mut self, other: &ParamSet<T>, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        let lead = format!("{prefix}.");
        for entry in self.params.entries_mut().iter_mut().filter(|e| e.name.starts_with(&lead)) {
            let src = other
                .find(&entry.name)
                .map(|id| &other.entries()[id.0])
                .ok_or_else(|| Error::Dataset(format!("source lacks parameter `{}`", entry.name)))?;
            if src.shape != entry.shape {
                return Err(Error::shape(entry.name.clone(), format!("{:?} vs {:?}", src.shape, entry.shape)));
            }
            entry.value.clone_from(&src.value);
            copied += 1;
        }
        Ok(copied)
    }
}

/// Spatial tower with a linear probe, used to warm-start the spatial tower
/// on single-frame classification.
pub struct SpatialProbe<T: Real = f32> {
    params: ParamSet<T>,
    tower: Tower,
    probe: Linear,
}

impl<T: Real> SpatialProbe<T> {
    pub fn new(spec: &TowerSpec, classes: usize, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let tower = Tower::build(&mut params, "spatial", spec, 3, seed)?;
        let probe = add_linear(&mut params, seed, "probe.fc".into(), spec.embedding_dim, classes, CLASSIFIER_GAIN);
        Ok(SpatialProbe { params, tower, probe })
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn classes(&self) -> usize {
        self.probe.outputs
    }

    pub fn logits(&self, rgb: &[T], n: usize) -> Vec<T> {
        let (emb, _) = self.tower.forward(&self.params, rgb, n);
        self.probe.forward(&self.params, &emb, n)
    }

    pub fn loss_and_grads(&self, rgb: &[T], labels: &[usize]) -> Result<StepOutput<T>> {
        let n = labels.len();
        if rgb.len() != n * self.tower.input_len() {
            return Err(Error::shape("spatial.conv1", "rgb batch has the wrong length"));
        }
        let (emb, cache) = self.tower.forward(&self.params, rgb, n);
        let logits = self.probe.forward(&self.params, &emb, n);
        let scale = T::one() / T::from_usize(n).expect("batch size fits");
        let (loss_sum, d_logits, correct) = softmax_cross_entropy(&logits, labels, self.classes(), scale);
        let mut grads = Grads::zeros_like(&self.params);
        let d_emb = self
            .probe
            .backward(&self.params, &emb, &d_logits, n, &mut grads, true)
            .expect("input gradient requested");
        self.tower.backward(&self.params, &cache, &d_emb, n, &mut grads);
        Ok(StepOutput {
            loss: loss_sum / n as f64,
            correct,
            grads,
        })
    }
}
