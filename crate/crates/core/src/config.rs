//! Experiment configuration: one JSON document plus dotted `--set` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clip::ClipSampleSpec;
use crate::error::{Error, IoContext, Result};
use crate::nn::{TowerSpec, TwoStreamConfig};
use crate::pretext::{TupleGenSpec, PRETEXT_CLASSES};
use crate::synthetic::SyntheticCorpusSpec;
use crate::train::{TrainSpec, WarmstartSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Where `gen-data` writes the corpus and pretext datasets.
    pub dir: PathBuf,
    /// Fraction of each class's videos held out from every training stage.
    pub heldout_fraction: f64,
    /// Pretext tuples per epoch (and in the stored training dataset).
    pub train_tuples: usize,
    pub heldout_tuples: usize,
    /// Draw fresh clips and tuples from the training videos every epoch
    /// instead of cycling the stored dataset.
    pub fresh_epochs: bool,
    pub shard_size: usize,
    /// Threads for tuple generation; output does not depend on it.
    pub workers: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            dir: PathBuf::from("data/reference"),
            heldout_fraction: 0.2,
            train_tuples: 4000,
            heldout_tuples: 800,
            fresh_epochs: true,
            shard_size: 1000,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamSpec {
    /// Labeled training clips per action class.
    pub clips_per_class: usize,
    /// Clips drawn from every held-out video for testing.
    pub test_clips_per_video: usize,
    pub train: TrainSpec,
}

impl Default for DownstreamSpec {
    fn default() -> Self {
        DownstreamSpec {
            clips_per_class: 50,
            test_clips_per_video: 10,
            train: TrainSpec {
                iterations: 300,
                eval_every: 100,
                ..TrainSpec::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    /// Seeds model initialization and the train/held-out video split.
    pub seed: u64,
    pub corpus: SyntheticCorpusSpec,
    pub clips: ClipSampleSpec,
    pub tuples: TupleGenSpec,
    pub data: DataSpec,
    pub model: TwoStreamConfig,
    pub warmstart: WarmstartSpec,
    pub pretrain: TrainSpec,
    pub finetune: DownstreamSpec,
    /// Seeds for the paired fine-tuning arms of `reproduce`.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "reference".into(),
            output_dir: PathBuf::from("runs"),
            seed: 0,
            corpus: SyntheticCorpusSpec::default(),
            clips: ClipSampleSpec::default(),
            tuples: TupleGenSpec::default(),
            data: DataSpec::default(),
            model: TwoStreamConfig::default(),
            warmstart: WarmstartSpec::default(),
            pretrain: TrainSpec::default(),
            finetune: DownstreamSpec::default(),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (or the defaults) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(ExperimentConfig::default())?;
        if let Some(path) = path {
            let text = fs::read_to_string(path).at(path)?;
            let user: Value = serde_json::from_str(&text).map_err(|e| Error::config("<file>", e.to_string()))?;
            merge(&mut doc, user, "")?;
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.as_str(), "override must look like key.path=value"))?;
            set_dotted(&mut doc, key.trim(), parse_scalar(raw.trim()))?;
        }
        expand_tower_preset(&mut doc)?;
        let config: ExperimentConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            let key = e.path().to_string();
            Error::config(key, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty single path component"));
        }
        self.corpus.validate()?;
        self.clips.validate()?;
        self.model.validate()?;
        if self.model.downstream_classes != self.corpus.num_action_classes {
            return Err(Error::config(
                "model.downstream_classes",
                format!("must equal corpus.num_action_classes ({})", self.corpus.num_action_classes),
            ));
        }
        if !(self.data.heldout_fraction > 0.0 && self.data.heldout_fraction < 1.0) {
            return Err(Error::config("data.heldout_fraction", "must lie strictly between 0 and 1"));
        }
        for (key, n) in [("data.train_tuples", self.data.train_tuples), ("data.heldout_tuples", self.data.heldout_tuples)] {
            if n == 0 || n % PRETEXT_CLASSES != 0 {
                return Err(Error::config(key, format!("must be a positive multiple of {PRETEXT_CLASSES}")));
            }
        }
        if self.data.shard_size == 0 {
            return Err(Error::config("data.shard_size", "must be positive"));
        }
        if self.data.workers == 0 {
            return Err(Error::config("data.workers", "must be positive"));
        }
        self.pretrain.validate("pretrain")?;
        self.warmstart.validate()?;
        self.finetune.train.validate("finetune.train")?;
        if self.finetune.clips_per_class == 0 {
            return Err(Error::config("finetune.clips_per_class", "must be positive"));
        }
        if self.finetune.test_clips_per_video == 0 {
            return Err(Error::config("finetune.test_clips_per_video", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "needs at least one seed"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

/// JSON when it parses, a bare string otherwise.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let here = parts[..=depth].join(".");
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(&here, "parent is not an object"))?;
        let slot = obj.get_mut(*part).ok_or_else(|| Error::config(&here, "unknown key"))?;
        if depth + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::config(key, "empty key"))
}

/// Recursive object merge; unknown keys are rejected with their path.
fn merge(base: &mut Value, user: Value, prefix: &str) -> Result<()> {
    match (base, user) {
        (Value::Object(base), Value::Object(user)) => {
            for (k, v) in user {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                let slot = base.get_mut(&k).ok_or_else(|| Error::config(&path, "unknown key"))?;
                if slot.is_object() && v.is_object() {
                    merge(slot, v, &path)?;
                } else {
                    *slot = v;
                }
            }
            Ok(())
        }
        (_, _) => Err(Error::config(prefix, "expected an object")),
    }
}

/// `model.tower` may name a preset instead of spelling out the topology.
fn expand_tower_preset(doc: &mut Value) -> Result<()> {
    let Some(tower) = doc.pointer_mut("/model/tower") else {
        return Ok(());
    };
    if let Value::String(name) = tower {
        let spec = TowerSpec::preset(name)
            .ok_or_else(|| Error::config("model.tower", format!("unknown preset `{name}` (tiny, alexnet-like, micro)")))?;
        *tower = serde_json::to_value(spec)?;
    }
    Ok(())
}
