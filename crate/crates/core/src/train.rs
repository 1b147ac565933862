//! Pretext pretraining, downstream fine-tuning and the spatial warm start.

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clip::{sample_clips, ClipSampleSpec};
use crate::error::{Error, Result};
use crate::eval::evaluate_with_loss;
use crate::frame::Frame;
use crate::motion::{stack_of_differences, StackOfDifferences};
use crate::nn::checkpoint::CheckpointBundle;
use crate::nn::model::{Batch, HeadKind, SpatialProbe, TwoStreamConfig, TwoStreamNet, WeightProvenance};
use crate::nn::optim::{Optimizer, OptimizerKind};
use crate::pretext::{generate_epoch, ClipStore, PretextTuple, TupleGenSpec, PRETEXT_CLASSES};
use crate::rng::{self, tag};
use crate::synthetic::SourceVideo;

/// Anything the two-stream network can be trained on.
pub trait Example {
    fn rgb(&self) -> &Frame;
    fn sod(&self) -> &StackOfDifferences;
    fn target(&self) -> usize;
}

impl Example for PretextTuple {
    fn rgb(&self) -> &Frame {
        &self.rgb
    }

    fn sod(&self) -> &StackOfDifferences {
        &self.sod
    }

    fn target(&self) -> usize {
        self.label.index()
    }
}

/// A clip's network inputs with its action label; motion is in forward order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub source_id: String,
    pub start_frame: usize,
    pub rgb: Frame,
    pub sod: StackOfDifferences,
    pub action_label: usize,
}

impl Example for LabeledClip {
    fn rgb(&self) -> &Frame {
        &self.rgb
    }

    fn sod(&self) -> &StackOfDifferences {
        &self.sod
    }

    fn target(&self) -> usize {
        self.action_label
    }
}

/// Samples `clip_spec.clips_per_video` clips per video, then keeps the first
/// `per_class` of each class in a seeded shuffled order (all when `None`).
pub fn labeled_clips(
    videos: &[SourceVideo],
    clip_spec: &ClipSampleSpec,
    per_class: Option<usize>,
    input_size: Option<(usize, usize)>,
) -> Result<Vec<LabeledClip>> {
    let mut all = Vec::new();
    for video in videos {
        let label = video.action_label.ok_or_else(|| {
            Error::Dataset(format!("video `{}` has no action label", video.video_id))
        })?;
        for clip in sample_clips(&video.video_id, &video.frames, clip_spec)? {
            let resize = |f: &Frame| match input_size {
                Some((h, w)) => f.resize_bilinear(h, w),
                None => f.clone(),
            };
            let motion: Vec<Frame> = clip.motion_frames().iter().map(|f| resize(f)).collect();
            all.push(LabeledClip {
                source_id: video.video_id.clone(),
                start_frame: clip.start_frame,
                rgb: resize(clip.center_frame()),
                sod: stack_of_differences(&motion)?,
                action_label: label,
            });
        }
    }
    let Some(per_class) = per_class else {
        return Ok(all);
    };
    all.shuffle(&mut rng::stream(clip_spec.seed, &[tag::LABELED]));
    let classes = all.iter().map(|c| c.action_label + 1).max().unwrap_or(0);
    let mut taken = vec![0; classes];
    let mut kept: Vec<LabeledClip> = Vec::new();
    for clip in all {
        if taken[clip.action_label] < per_class {
            taken[clip.action_label] += 1;
            kept.push(clip);
        }
    }
    if let Some(k) = taken.iter().position(|&t| t < per_class) {
        return Err(Error::DatasetTooSmall(format!(
            "class {k} has {} clips, {per_class} requested",
            taken[k]
        )));
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            batch_size: 64,
            iterations: 10_000,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::SgdMomentum,
            seed: 0,
            eval_every: 500,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self, section: &str) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config(format!("{section}.batch_size"), "must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("{section}.learning_rate"), "must be finite and non-negative"));
        }
        if self.eval_every == 0 {
            return Err(Error::config(format!("{section}.eval_every"), "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitMode {
    Random,
    SelfSupervised,
}

/// Seeded mini-batches. Balanced mode takes `batch_size / classes` indices
/// from each class per batch. Incomplete trailing batches are dropped, so an
/// epoch covers each index at most once.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    groups: Vec<Vec<usize>>,
    per_group: usize,
    batches_per_epoch: usize,
    seed: u64,
    epoch: u64,
    current: Vec<Vec<usize>>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(labels: &[usize], classes: usize, batch_size: usize, balanced: bool, seed: u64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("cannot batch an empty dataset".into()));
        }
        if batch_size == 0 || batch_size > labels.len() {
            return Err(Error::Argument(format!(
                "batch size {batch_size} does not fit a dataset of {}",
                labels.len()
            )));
        }
        let (groups, per_group) = if balanced {
            if !batch_size.is_multiple_of(classes) {
                return Err(Error::Argument(format!(
                    "balanced batch size {batch_size} is not a multiple of {classes}"
                )));
            }
            let mut groups = vec![Vec::new(); classes];
            for (i, &y) in labels.iter().enumerate() {
                groups
                    .get_mut(y)
                    .ok_or_else(|| Error::Dataset(format!("label {y} out of range for {classes} classes")))?
                    .push(i);
            }
            if let Some(k) = groups.iter().position(Vec::is_empty) {
                return Err(Error::Dataset(format!("dataset has no examples of class {k}")));
            }
            (groups, batch_size / classes)
        } else {
            ((vec![(0..labels.len()).collect()]), batch_size)
        };
        let batches_per_epoch = groups.iter().map(Vec::len).min().unwrap_or(0) / per_group;
        if batches_per_epoch == 0 {
            return Err(Error::Argument(format!(
                "batch size {batch_size} exceeds the smallest class group"
            )));
        }
        Ok(BatchSampler {
            groups,
            per_group,
            batches_per_epoch,
            seed,
            epoch: 0,
            current: Vec::new(),
            cursor: usize::MAX,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
    }

    /// The shuffled class groups for epoch `epoch`.
    fn epoch_order(&self, epoch: u64) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .enumerate()
            .map(|(g, idx)| {
                let mut idx = idx.clone();
                idx.shuffle(&mut rng::stream(self.seed, &[tag::BATCH, epoch, g as u64]));
                idx
            })
            .collect()
    }

    pub fn epoch_batches(&self, epoch: u64) -> Vec<Vec<usize>> {
        let order = self.epoch_order(epoch);
        (0..self.batches_per_epoch)
            .map(|b| {
                order
                    .iter()
                    .flat_map(|g| g[b * self.per_group..(b + 1) * self.per_group].iter().copied())
                    .collect()
            })
            .collect()
    }
}

impl Iterator for BatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.cursor >= self.batches_per_epoch {
            if self.cursor != usize::MAX {
                self.epoch += 1;
            }
            self.current = self.epoch_order(self.epoch);
            self.cursor = 0;
        }
        let b = self.cursor;
        self.cursor += 1;
        Some(
            self.current
                .iter()
                .flat_map(|g| g[b * self.per_group..(b + 1) * self.per_group].iter().copied())
                .collect(),
        )
    }
}

/// Batch iterator over example labels; balanced for pretext data.
pub fn make_batches<E: Example>(dataset: &[E], classes: usize, spec: &TrainSpec, balanced: bool) -> Result<BatchSampler> {
    let labels: Vec<usize> = dataset.iter().map(Example::target).collect();
    BatchSampler::new(&labels, classes, spec.batch_size, balanced, rng::derive_seed(spec.seed, &[tag::BATCH]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Heldout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy_overall: f64,
    /// Filled for held-out rows only.
    pub accuracy_per_class: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub num_classes: usize,
    pub records: Vec<MetricRecord>,
}

impl RunMetrics {
    pub fn train_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.loss)
            .collect()
    }

    pub fn last_heldout(&self) -> Option<&MetricRecord> {
        self.records.iter().rev().find(|r| r.split == Split::Heldout)
    }

    /// `iteration,split,loss,accuracy_overall,accuracy_class_0,...`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,split,loss,accuracy_overall");
        for k in 0..self.num_classes {
            let _ = write!(out, ",accuracy_class_{k}");
        }
        out.push('\n');
        for r in &self.records {
            let split = match r.split {
                Split::Train => "train",
                Split::Heldout => "heldout",
            };
            let _ = write!(out, "{},{split},{:.6},{:.6}", r.iteration, r.loss, r.accuracy_overall);
            for k in 0..self.num_classes {
                match r.accuracy_per_class.get(k).copied().flatten() {
                    Some(a) => {
                        let _ = write!(out, ",{a:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: CheckpointBundle,
    pub metrics: RunMetrics,
}

/// Frozen-tower embeddings for every example, `n × embedding_dim`.
fn spatial_cache<E: Example>(model: &TwoStreamNet<f32>, examples: &[E]) -> Vec<f32> {
    let mut out = Vec::with_capacity(examples.len() * model.embedding_dim());
    for chunk in examples.chunks(64) {
        let batch: Batch<f32> = Batch::assemble(chunk.iter().map(|x| (x.rgb(), x.sod(), 0)));
        out.extend(model.spatial_embedding(&batch.rgb, batch.n));
    }
    out
}

/// Training examples for one epoch.
pub trait EpochSource<E: Example + Clone> {
    /// Examples for `epoch`; sources that return the same slice every time
    /// report `fixed() == true` so derived caches are built once.
    fn epoch(&self, epoch: u64) -> Result<Cow<'_, [E]>>;

    fn fixed(&self) -> bool;
}

impl<E: Example + Clone> EpochSource<E> for [E] {
    fn epoch(&self, _epoch: u64) -> Result<Cow<'_, [E]>> {
        Ok(Cow::Borrowed(self))
    }

    fn fixed(&self) -> bool {
        true
    }
}

/// Fresh clips and pretext tuples every epoch, drawn from `videos`. Epoch 0
/// uses the specs' own seeds, so it reproduces the stored dataset built from
/// the same videos.
pub struct OnlineTuples<'a> {
    pub videos: &'a [SourceVideo],
    pub clips: ClipSampleSpec,
    pub tuples: TupleGenSpec,
    pub per_epoch: usize,
    pub workers: usize,
}

impl OnlineTuples<'_> {
    pub fn generate(&self, epoch: u64) -> Result<Vec<PretextTuple>> {
        let reseed = |seed: u64| if epoch == 0 { seed } else { rng::derive_seed(seed, &[tag::EPOCH, epoch]) };
        let clips = ClipSampleSpec {
            seed: reseed(self.clips.seed),
            ..self.clips.clone()
        };
        let tuples = TupleGenSpec {
            seed: reseed(self.tuples.seed),
            ..self.tuples.clone()
        };
        let store = ClipStore::build(self.videos, &clips)?;
        generate_epoch(&store, self.per_epoch, &tuples, self.workers)
    }
}

impl EpochSource<PretextTuple> for OnlineTuples<'_> {
    fn epoch(&self, epoch: u64) -> Result<Cow<'_, [PretextTuple]>> {
        self.generate(epoch).map(Cow::Owned)
    }

    fn fixed(&self) -> bool {
        false
    }
}

fn train_loop<E: Example + Clone, S: EpochSource<E> + ?Sized>(
    model: &mut TwoStreamNet<f32>,
    head: HeadKind,
    source: &S,
    heldout: &[E],
    spec: &TrainSpec,
    balanced: bool,
) -> Result<TrainOutcome> {
    spec.validate("train")?;
    let classes = model.head(head).classes();
    let frozen = model.is_frozen();
    let e = model.embedding_dim();
    let mask = model.trainable_mask(head);
    let mut optimizer = Optimizer::new(spec.optimizer, spec.learning_rate, model.params());
    let mut metrics = RunMetrics {
        num_classes: classes,
        records: Vec::with_capacity(spec.iterations + spec.iterations / spec.eval_every + 1),
    };
    let heldout_cache = (frozen && !heldout.is_empty()).then(|| spatial_cache(model, heldout));

    let mut epoch = 0u64;
    let mut train = source.epoch(epoch)?;
    let mut sampler = make_batches(&train, classes, spec, balanced)?;
    let mut train_cache = frozen.then(|| spatial_cache(model, &train));
    let mut batches = sampler.epoch_batches(epoch).into_iter();

    for iteration in 0..spec.iterations {
        let indices = match batches.next() {
            Some(b) => b,
            None => {
                epoch += 1;
                if !source.fixed() {
                    train = source.epoch(epoch)?;
                    sampler = make_batches(&train, classes, spec, balanced)?;
                    train_cache = frozen.then(|| spatial_cache(model, &train));
                }
                batches = sampler.epoch_batches(epoch).into_iter();
                batches.next().expect("every epoch has at least one batch")
            }
        };
        let batch = Batch::assemble(indices.iter().map(|&i| (train[i].rgb(), train[i].sod(), train[i].target())));
        let cached: Option<Vec<f32>> = train_cache.as_ref().map(|all| {
            indices
                .iter()
                .flat_map(|&i| all[i * e..(i + 1) * e].iter().copied())
                .collect()
        });
        let out = model.loss_and_grads(head, &batch, cached.as_deref())?;
        if !out.loss.is_finite() || out.grads.0.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                loss: out.loss,
            });
        }
        metrics.records.push(MetricRecord {
            iteration,
            split: Split::Train,
            loss: out.loss,
            accuracy_overall: out.correct as f64 / batch.n as f64,
            accuracy_per_class: Vec::new(),
        });
        optimizer.step(model.params_mut(), &out.grads, &mask);

        let done = iteration + 1;
        if !heldout.is_empty() && (done % spec.eval_every == 0 || done == spec.iterations) {
            let (report, loss) = evaluate_with_loss(model, head, heldout, heldout_cache.as_deref())?;
            log::info!(
                "iteration {done}: train loss {:.4}, heldout loss {loss:.4}, heldout accuracy {:.4}",
                out.loss,
                report.overall_accuracy
            );
            metrics.records.push(MetricRecord {
                iteration: done,
                split: Split::Heldout,
                loss,
                accuracy_overall: report.overall_accuracy,
                accuracy_per_class: report.per_class_accuracy,
            });
        }
    }
    model.set_step(model.step() + spec.iterations as u64);
    Ok(TrainOutcome {
        checkpoint: CheckpointBundle::from_model(model),
        metrics,
    })
}

/// Minimizes four-way cross-entropy over pretext tuples with balanced
/// batches. `train` is a fixed slice or an [`OnlineTuples`] generator.
pub fn pretrain<S: EpochSource<PretextTuple> + ?Sized>(
    model: &mut TwoStreamNet<f32>,
    train: &S,
    heldout: &[PretextTuple],
    spec: &TrainSpec,
) -> Result<TrainOutcome> {
    if !spec.batch_size.is_multiple_of(PRETEXT_CLASSES) {
        return Err(Error::config(
            "pretrain.batch_size",
            format!("must be a multiple of {PRETEXT_CLASSES} for balanced batches"),
        ));
    }
    train_loop(model, HeadKind::Pretext, train, heldout, spec, true)
}

pub enum MotionInit<'a> {
    Random,
    SelfSupervised(&'a CheckpointBundle),
}

impl MotionInit<'_> {
    pub fn mode(&self) -> InitMode {
        match self {
            MotionInit::Random => InitMode::Random,
            MotionInit::SelfSupervised(_) => InitMode::SelfSupervised,
        }
    }
}

/// Builds the downstream model. Both arms use the same seed, so every tensor
/// except the motion tower starts identical; the spatial tower comes from
/// `spatial` when given.
pub fn prepare_finetune_model(
    config: &TwoStreamConfig,
    seed: u64,
    spatial: Option<&CheckpointBundle>,
    init: MotionInit<'_>,
) -> Result<TwoStreamNet<f32>> {
    let mut model = TwoStreamNet::new(config.clone(), seed)?;
    if let Some(bundle) = spatial {
        let provenance = match bundle.header.spatial_provenance {
            WeightProvenance::Random => WeightProvenance::External,
            p => p,
        };
        model.load_spatial_tower(bundle, provenance)?;
    }
    if let MotionInit::SelfSupervised(bundle) = init {
        model.load_motion_tower(bundle)?;
    }
    Ok(model)
}

/// K-way action recognition over labeled clips with shuffled batches.
pub fn finetune(model: &mut TwoStreamNet<f32>, train: &[LabeledClip], heldout: &[LabeledClip], spec: &TrainSpec) -> Result<TrainOutcome> {
    train_loop(model, HeadKind::Downstream, train, heldout, spec, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmstartSpec {
    pub target: WarmstartTarget,
    /// Cells per side for `ACTION_POSITION`.
    pub position_grid: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for WarmstartSpec {
    fn default() -> Self {
        WarmstartSpec {
            target: WarmstartTarget::ActionPosition,
            position_grid: 3,
            iterations: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

/// What the single-frame warm start is trained to predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarmstartTarget {
    Action,
    /// Action class crossed with the grid cell holding the object centroid.
    ActionPosition,
}

impl WarmstartSpec {
    pub fn validate(&self) -> Result<()> {
        if self.position_grid == 0 {
            return Err(Error::config("warmstart.position_grid", "must be at least 1"));
        }
        Ok(())
    }

    pub fn num_classes(&self, actions: usize) -> usize {
        match self.target {
            WarmstartTarget::Action => actions,
            WarmstartTarget::ActionPosition => actions * self.position_grid * self.position_grid,
        }
    }

    /// Warm-start class of an action-labeled frame.
    pub fn label(&self, frame: &Frame, action: usize) -> usize {
        match self.target {
            WarmstartTarget::Action => action,
            WarmstartTarget::ActionPosition => {
                let g = self.position_grid;
                action * g * g + object_cell(frame, g).unwrap_or(g * g / 2)
            }
        }
    }
}

/// Grid cell (row-major, `grid × grid`) of the centroid of pixels whose luma
/// differs from the frame's median luma by more than 0.125. `None` when no
/// pixel qualifies. Works for one object on a flat background.
pub fn object_cell(frame: &Frame, grid: usize) -> Option<usize> {
    let (h, w) = (frame.height(), frame.width());
    let luma: Vec<f32> = frame
        .data()
        .chunks_exact(frame.channels())
        .map(|px| match px {
            [r, g, b] => 0.299 * r + 0.587 * g + 0.114 * b,
            _ => px[0],
        })
        .collect();
    let mut sorted = luma.clone();
    sorted.sort_by(f32::total_cmp);
    let median = *sorted.get(sorted.len() / 2)?;
    let (mut sy, mut sx, mut n) = (0.0f64, 0.0f64, 0usize);
    for (i, v) in luma.iter().enumerate() {
        if (v - median).abs() > 0.125 {
            sy += (i / w) as f64 + 0.5;
            sx += (i % w) as f64 + 0.5;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let cell = |c: f64, side: usize| ((c / n as f64 / side as f64 * grid as f64) as usize).min(grid - 1);
    Some(cell(sy, h) * grid + cell(sx, w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmstartReport {
    pub accuracy: f64,
    pub chance: f64,
    pub warning: Option<String>,
}

/// Supervised single-frame pretraining of the spatial tower, then freezing.
/// Accuracy is measured on the warm-up frames themselves.
pub fn init_spatial_warmstart(
    model: &mut TwoStreamNet<f32>,
    frames: &[(Frame, usize)],
    classes: usize,
    spec: &WarmstartSpec,
) -> Result<WarmstartReport> {
    if frames.is_empty() {
        return Err(Error::Dataset("warm start needs labeled frames".into()));
    }
    let mut probe = SpatialProbe::<f32>::new(&model.config().tower, classes, spec.seed)?;
    let src = model.params().clone();
    for entry in probe.params_mut().entries_mut() {
        if let Some(id) = src.find(&entry.name) {
            entry.value.clone_from(&src.entries()[id.0].value);
        }
    }
    let labels: Vec<usize> = frames.iter().map(|(_, y)| *y).collect();
    let batch_size = spec.batch_size.min(frames.len());
    let mut sampler = BatchSampler::new(&labels, classes, batch_size, false, rng::derive_seed(spec.seed, &[tag::BATCH]))?;
    let mut optimizer = Optimizer::new(spec.optimizer, spec.learning_rate, probe.params());
    let mask = vec![true; probe.params().len()];
    let input_len = frames[0].0.data().len();
    let chw = |idx: &[usize]| {
        let mut buf = vec![0.0f32; idx.len() * input_len];
        for (s, &i) in idx.iter().enumerate() {
            frames[i].0.write_chw(&mut buf[s * input_len..(s + 1) * input_len], |v| v);
        }
        buf
    };
    for iteration in 0..spec.iterations {
        let idx = sampler.next().expect("sampler is endless");
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let out = probe.loss_and_grads(&chw(&idx), &y)?;
        if !out.loss.is_finite() {
            return Err(Error::Divergence {
                iteration,
                loss: out.loss,
            });
        }
        optimizer.step(probe.params_mut(), &out.grads, &mask);
    }
    let all: Vec<usize> = (0..frames.len()).collect();
    let mut correct = 0;
    for chunk in all.chunks(64) {
        let logits = probe.logits(&chw(chunk), chunk.len());
        for (row, &i) in logits.chunks_exact(classes).zip(chunk) {
            if crate::nn::model::argmax(row) == labels[i] {
                correct += 1;
            }
        }
    }
    model.copy_group_from(probe.params(), "spatial")?;
    model.set_spatial_provenance(WeightProvenance::Warmstart);
    model.freeze_spatial();

    let accuracy = correct as f64 / frames.len() as f64;
    let chance = 1.0 / classes as f64;
    let warning = (accuracy < chance + 0.10).then(|| {
        let msg = format!(
            "spatial warm start reached {:.1}% single-frame accuracy, below chance + 10 points ({:.1}%)",
            accuracy * 100.0,
            (chance + 0.10) * 100.0
        );
        log::warn!("{msg}");
        msg
    });
    Ok(WarmstartReport {
        accuracy,
        chance,
        warning,
    })
}
