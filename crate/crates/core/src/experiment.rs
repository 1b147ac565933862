//! The end-to-end pipeline behind the command line. Every stage reads its
//! inputs from files written by the previous one.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clip::ClipSampleSpec;
use crate::config::ExperimentConfig;
use crate::dataset::{read_dataset, write_dataset_sharded, DatasetManifest};
use crate::error::{Error, IoContext, Result};
use crate::eval::{evaluate, ComparisonTable, EvalReport};
use crate::nn::checkpoint::{load_checkpoint, CheckpointBundle};
use crate::nn::{HeadKind, TwoStreamNet};
use crate::pretext::{generate_epoch, ClipStore, TupleGenSpec};
use crate::report::{export_loss_curve, LossSeries};
use crate::rng::{self, tag};
use crate::synthetic::{corpus_to_disk, generate_corpus, read_corpus, SourceVideo};
use crate::train::{
    finetune, init_spatial_warmstart, labeled_clips, pretrain, prepare_finetune_model, InitMode, LabeledClip,
    MetricRecord, MotionInit, OnlineTuples, RunMetrics, Split, WarmstartReport,
};

pub const CORPUS_DIR: &str = "corpus";
pub const SPLIT_FILE: &str = "split.json";
pub const PRETEXT_TRAIN_DIR: &str = "pretext/train";
pub const PRETEXT_HELDOUT_DIR: &str = "pretext/heldout";
pub const SPATIAL_CHECKPOINT: &str = "checkpoints/spatial.ckpt";
pub const PRETEXT_CHECKPOINT: &str = "checkpoints/pretext.ckpt";
pub const FINAL_CHECKPOINT: &str = "checkpoints/final.ckpt";
pub const LOSS_CURVE_WINDOW: usize = 500;

/// Video ids on each side of the train/held-out split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSplit {
    pub train: Vec<String>,
    pub heldout: Vec<String>,
}

/// Stratified by action label: each class gives up `round(fraction * n)`
/// videos (at least one, and never all of them) chosen by a seeded shuffle.
pub fn split_videos(videos: &[SourceVideo], fraction: f64, seed: u64) -> VideoSplit {
    let mut by_class: std::collections::BTreeMap<Option<usize>, Vec<usize>> = Default::default();
    for (i, v) in videos.iter().enumerate() {
        by_class.entry(v.action_label).or_default().push(i);
    }
    let mut heldout = vec![false; videos.len()];
    for (class, mut idx) in by_class {
        let key = class.map_or(u64::MAX, |c| c as u64);
        idx.shuffle(&mut rng::stream(seed, &[tag::SPLIT, key]));
        let n = idx.len();
        let take = if n < 2 { 0 } else { ((fraction * n as f64).round() as usize).clamp(1, n - 1) };
        for &i in &idx[..take] {
            heldout[i] = true;
        }
    }
    let ids = |want: bool| {
        videos
            .iter()
            .zip(&heldout)
            .filter(|(_, &h)| h == want)
            .map(|(v, _)| v.video_id.clone())
            .collect()
    };
    VideoSplit {
        train: ids(false),
        heldout: ids(true),
    }
}

fn pick(videos: &[SourceVideo], ids: &[String]) -> Result<Vec<SourceVideo>> {
    ids.iter()
        .map(|id| {
            videos
                .iter()
                .find(|v| &v.video_id == id)
                .cloned()
                .ok_or_else(|| Error::Dataset(format!("split names unknown video `{id}`")))
        })
        .collect()
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).at(path)
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, text).at(path)
}

/// Header written next to every run's metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunHeader {
    pub command: String,
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    pub wall_clock_seconds: f64,
    pub config: ExperimentConfig,
}

fn write_run(dir: &Path, command: &str, config: &ExperimentConfig, seeds: Vec<u64>, started: Instant, metrics: &RunMetrics) -> Result<()> {
    write_text(&dir.join("metrics.csv"), &metrics.to_csv())?;
    write_json(
        &dir.join("run.json"),
        &RunHeader {
            command: command.into(),
            config_fingerprint: config.model.fingerprint(),
            seeds,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            config: config.clone(),
        },
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenDataSummary {
    pub corpus_dir: PathBuf,
    pub split: VideoSplit,
    pub train: DatasetManifest,
    pub heldout: DatasetManifest,
}

/// Generates the synthetic corpus, the video split and both pretext datasets
/// under `data.dir`.
pub fn cmd_gen_data(config: &ExperimentConfig) -> Result<GenDataSummary> {
    let dir = &config.data.dir;
    write_text(&dir.join("config.json"), &config.to_json())?;
    let corpus = generate_corpus(&config.corpus)?;
    let corpus_dir = dir.join(CORPUS_DIR);
    corpus_to_disk(&corpus, config.corpus.seed, &corpus_dir)?;
    let videos: Vec<SourceVideo> = corpus.into_iter().map(Into::into).collect();
    let split = split_videos(&videos, config.data.heldout_fraction, config.seed);
    write_json(&dir.join(SPLIT_FILE), &split)?;

    let mut manifests = Vec::new();
    for (ids, n, sub, spec) in [
        (&split.train, config.data.train_tuples, PRETEXT_TRAIN_DIR, config.tuples.clone()),
        (&split.heldout, config.data.heldout_tuples, PRETEXT_HELDOUT_DIR, heldout_tuple_spec(&config.tuples)),
    ] {
        let subset = pick(&videos, ids)?;
        let store = ClipStore::build(&subset, &config.clips)?;
        let tuples = generate_epoch(&store, n, &spec, config.data.workers)?;
        manifests.push(write_dataset_sharded(&tuples, &spec, &dir.join(sub), config.data.shard_size)?);
    }
    let heldout = manifests.pop().expect("two datasets");
    let train = manifests.pop().expect("two datasets");
    Ok(GenDataSummary {
        corpus_dir,
        split,
        train,
        heldout,
    })
}

fn heldout_tuple_spec(spec: &TupleGenSpec) -> TupleGenSpec {
    TupleGenSpec {
        seed: rng::derive_seed(spec.seed, &[tag::SPLIT]),
        ..spec.clone()
    }
}

/// Corpus videos on each side of the recorded split.
pub fn load_split_corpus(config: &ExperimentConfig) -> Result<(Vec<SourceVideo>, Vec<SourceVideo>)> {
    let videos = read_corpus(&config.data.dir.join(CORPUS_DIR))?;
    let split: VideoSplit = read_json(&config.data.dir.join(SPLIT_FILE))?;
    Ok((pick(&videos, &split.train)?, pick(&videos, &split.heldout)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub warmstart: WarmstartReport,
    pub initial_loss: f64,
    pub final_heldout: Option<MetricRecord>,
    pub heldout_report: EvalReport,
}

/// Warm-starts and freezes the spatial tower, then trains the motion tower
/// and pretext head on the pretext dataset.
pub fn cmd_pretrain(config: &ExperimentConfig) -> Result<PretrainSummary> {
    let started = Instant::now();
    let run = config.run_dir();
    write_text(&run.join("config.json"), &config.to_json())?;
    let heldout = read_dataset(&config.data.dir.join(PRETEXT_HELDOUT_DIR))?;
    let (train_videos, _) = load_split_corpus(config)?;

    let mut model = TwoStreamNet::new(config.model.clone(), config.seed)?;
    let frames: Vec<_> = labeled_clips(&train_videos, &config.clips, None, config.tuples.input_size)?
        .into_iter()
        .map(|c| {
            let y = config.warmstart.label(&c.rgb, c.action_label);
            (c.rgb, y)
        })
        .collect();
    let classes = config.warmstart.num_classes(config.corpus.num_action_classes);
    let warmstart = init_spatial_warmstart(&mut model, &frames, classes, &config.warmstart)?;
    if !config.model.spatial_frozen {
        model.unfreeze_spatial();
    }
    CheckpointBundle::from_model(&model).save(&run.join(SPATIAL_CHECKPOINT))?;

    let outcome = if config.data.fresh_epochs {
        let online = OnlineTuples {
            videos: &train_videos,
            clips: config.clips.clone(),
            tuples: config.tuples.clone(),
            per_epoch: config.data.train_tuples,
            workers: config.data.workers,
        };
        pretrain(&mut model, &online, &heldout, &config.pretrain)?
    } else {
        let train = read_dataset(&config.data.dir.join(PRETEXT_TRAIN_DIR))?;
        pretrain(&mut model, &train[..], &heldout, &config.pretrain)?
    };
    outcome.checkpoint.save(&run.join(PRETEXT_CHECKPOINT))?;
    let heldout_report = evaluate(&model, HeadKind::Pretext, &heldout)?;
    write_json(&run.join("report/pretext_eval.json"), &heldout_report)?;
    export_loss_curve(
        &[LossSeries {
            label: "pretext",
            metrics: &outcome.metrics,
        }],
        &run.join("report/loss_curve"),
        LOSS_CURVE_WINDOW,
    )?;
    write_run(&run, "pretrain", config, vec![config.seed, config.pretrain.seed], started, &outcome.metrics)?;
    Ok(PretrainSummary {
        warmstart,
        initial_loss: outcome.metrics.train_losses().first().copied().unwrap_or(f64::NAN),
        final_heldout: outcome.metrics.last_heldout().cloned(),
        heldout_report,
    })
}

/// Downstream train and test clips. Training clips depend on `seed`; the test
/// set is fixed by the config.
pub fn downstream_data(config: &ExperimentConfig, seed: u64) -> Result<(Vec<LabeledClip>, Vec<LabeledClip>)> {
    let (train_videos, heldout_videos) = load_split_corpus(config)?;
    let train_spec = ClipSampleSpec {
        seed: rng::derive_seed(seed, &[tag::LABELED]),
        ..config.clips.clone()
    };
    let test_spec = ClipSampleSpec {
        clips_per_video: config.finetune.test_clips_per_video,
        ..config.clips.clone()
    };
    let input = config.tuples.input_size;
    Ok((
        labeled_clips(&train_videos, &train_spec, Some(config.finetune.clips_per_class), input)?,
        labeled_clips(&heldout_videos, &test_spec, None, input)?,
    ))
}

pub fn finetune_dir(config: &ExperimentConfig, init: InitMode, seed: u64) -> PathBuf {
    let arm = match init {
        InitMode::Random => "random",
        InitMode::SelfSupervised => "self_supervised",
    };
    config.run_dir().join("finetune").join(format!("{arm}-seed{seed}"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub init: InitMode,
    pub seed: u64,
    pub dir: PathBuf,
    pub report: EvalReport,
}

/// One fine-tuning arm; reads the spatial and pretext checkpoints written by
/// `cmd_pretrain`.
pub fn cmd_finetune(config: &ExperimentConfig, init: InitMode, seed: u64) -> Result<FinetuneSummary> {
    let started = Instant::now();
    let dir = finetune_dir(config, init, seed);
    write_text(&dir.join("config.json"), &config.to_json())?;
    let (train, test) = downstream_data(config, seed)?;
    let spatial = load_checkpoint(&config.run_dir().join(SPATIAL_CHECKPOINT))?;
    let pretext = match init {
        InitMode::Random => None,
        InitMode::SelfSupervised => Some(load_checkpoint(&config.run_dir().join(PRETEXT_CHECKPOINT))?),
    };
    let motion = pretext.as_ref().map_or(MotionInit::Random, MotionInit::SelfSupervised);
    let mut model = prepare_finetune_model(&config.model, seed, Some(&spatial), motion)?;
    let spec = crate::train::TrainSpec {
        seed,
        ..config.finetune.train.clone()
    };
    let outcome = finetune(&mut model, &train, &test, &spec)?;
    outcome.checkpoint.save(&dir.join(FINAL_CHECKPOINT))?;
    let report = evaluate(&model, HeadKind::Downstream, &test)?;
    write_json(&dir.join("eval.json"), &report)?;
    write_run(&dir, "finetune", config, vec![seed], started, &outcome.metrics)?;
    Ok(FinetuneSummary { init, seed, dir, report })
}

/// Evaluates a checkpoint on the held-out pretext tuples or downstream test clips.
pub fn cmd_eval(config: &ExperimentConfig, checkpoint: &Path, head: HeadKind) -> Result<EvalReport> {
    let bundle = load_checkpoint(checkpoint)?;
    let mut model = TwoStreamNet::new(bundle.header.config.clone(), config.seed)?;
    model.load_bundle(&bundle)?;
    match head {
        HeadKind::Pretext => evaluate(&model, head, &read_dataset(&config.data.dir.join(PRETEXT_HELDOUT_DIR))?),
        HeadKind::Downstream => evaluate(&model, head, &downstream_data(config, config.seed)?.1),
    }
}

#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub table: ComparisonTable,
    pub dir: PathBuf,
}

/// Table-1 style comparison of two fine-tuning runs plus their loss curves.
pub fn cmd_report(run_a: &Path, run_b: &Path, out: &Path) -> Result<ReportFiles> {
    let report_a: EvalReport = read_json(&run_a.join("eval.json"))?;
    let report_b: EvalReport = read_json(&run_b.join("eval.json"))?;
    let mut table = ComparisonTable::new();
    table.push("synthetic", &report_a, &report_b)?;
    let metrics_a = RunMetrics::read_csv(&run_a.join("metrics.csv"))?;
    let metrics_b = RunMetrics::read_csv(&run_b.join("metrics.csv"))?;
    let label = |p: &Path| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
    let (la, lb) = (label(run_a), label(run_b));
    write_report(&table, out)?;
    export_loss_curve(
        &[
            LossSeries { label: &la, metrics: &metrics_a },
            LossSeries { label: &lb, metrics: &metrics_b },
        ],
        &out.join("loss_curves"),
        LOSS_CURVE_WINDOW.min(metrics_a.train_losses().len().max(1)),
    )?;
    Ok(ReportFiles {
        table,
        dir: out.to_path_buf(),
    })
}

fn write_report(table: &ComparisonTable, dir: &Path) -> Result<()> {
    write_text(&dir.join("comparison.txt"), &table.to_text())?;
    write_text(&dir.join("comparison.csv"), &table.to_csv())
}

#[derive(Clone, Debug)]
pub struct ReproduceSummary {
    pub pretrain: PretrainSummary,
    pub arms: Vec<(FinetuneSummary, FinetuneSummary)>,
    pub table: ComparisonTable,
}

/// gen-data, pretrain, both fine-tuning arms for every seed, then the report.
pub fn cmd_reproduce(config: &ExperimentConfig) -> Result<ReproduceSummary> {
    cmd_gen_data(config)?;
    let pretrain = cmd_pretrain(config)?;
    let mut table = ComparisonTable::new();
    let mut arms = Vec::new();
    for &seed in &config.seeds {
        let random = cmd_finetune(config, InitMode::Random, seed)?;
        let selfsup = cmd_finetune(config, InitMode::SelfSupervised, seed)?;
        table.push(format!("seed {seed}"), &random.report, &selfsup.report)?;
        arms.push((random, selfsup));
    }
    write_report(&table, &config.run_dir().join("report"))?;
    Ok(ReproduceSummary { pretrain, arms, table })
}

impl RunMetrics {
    /// Parses the CSV written by [`RunMetrics::to_csv`].
    pub fn read_csv(path: &Path) -> Result<RunMetrics> {
        let text = fs::read_to_string(path).at(path)?;
        let bad = |line: usize, msg: &str| Error::corrupt(path.display().to_string(), format!("line {line}: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let num_classes = header.split(',').count().saturating_sub(4);
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 + num_classes {
                return Err(bad(i + 2, "wrong column count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            let split = match cols[1] {
                "train" => Split::Train,
                "heldout" => Split::Heldout,
                _ => return Err(bad(i + 2, "unknown split")),
            };
            let per_class = if split == Split::Train {
                Vec::new()
            } else {
                cols[4..]
                    .iter()
                    .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
                    .collect::<Result<_>>()?
            };
            records.push(MetricRecord {
                iteration: cols[0].parse().map_err(|_| bad(i + 2, "bad iteration"))?,
                split,
                loss: num(cols[2])?,
                accuracy_overall: num(cols[3])?,
                accuracy_per_class: per_class,
            });
        }
        Ok(RunMetrics { num_classes, records })
    }
}
