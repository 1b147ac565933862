//! Four-class pretext tuples: an RGB center frame paired with a stack of
//! differences, labeled by whether the motion is in valid temporal order and
//! whether it comes from the same clip as the frame.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::{sample_clips, ClipSampleSpec, VideoClip};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::motion::{apply_permutation, stack_of_differences, Permutation, StackOfDifferences};
use crate::rng::{self, tag, Stream};
use crate::synthetic::SourceVideo;

pub const PRETEXT_CLASSES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PretextLabel {
    /// Valid order, same clip.
    #[serde(rename = "CLASS_I")]
    ClassI,
    /// Invalid order, same clip.
    #[serde(rename = "CLASS_II")]
    ClassII,
    /// Valid order, motion from elsewhere.
    #[serde(rename = "CLASS_III")]
    ClassIII,
    /// Invalid order, motion from elsewhere.
    #[serde(rename = "CLASS_IV")]
    ClassIV,
}

impl PretextLabel {
    pub const ALL: [PretextLabel; PRETEXT_CLASSES] = [
        PretextLabel::ClassI,
        PretextLabel::ClassII,
        PretextLabel::ClassIII,
        PretextLabel::ClassIV,
    ];

    pub fn from_flags(order_valid: bool, spatially_matched: bool) -> Self {
        match (order_valid, spatially_matched) {
            (true, true) => PretextLabel::ClassI,
            (false, true) => PretextLabel::ClassII,
            (true, false) => PretextLabel::ClassIII,
            (false, false) => PretextLabel::ClassIV,
        }
    }

    pub fn order_valid(self) -> bool {
        matches!(self, PretextLabel::ClassI | PretextLabel::ClassIII)
    }

    pub fn spatially_matched(self) -> bool {
        matches!(self, PretextLabel::ClassI | PretextLabel::ClassII)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidOrderSet {
    #[default]
    ForwardOnly,
    ForwardAndReverse,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MismatchSource {
    #[default]
    DifferentVideo,
    DifferentClipSameVideo,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassBalance {
    #[default]
    Balanced,
    IidUniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TupleGenSpec {
    pub valid_order_set: ValidOrderSet,
    pub mismatch_source: MismatchSource,
    pub class_balance: ClassBalance,
    /// Share of mismatched tuples whose motion comes from a different action
    /// class, when the source videos carry labels.
    pub cross_action_fraction: f64,
    /// Tower input `(height, width)`; frames are resized bilinearly before
    /// differencing. `None` keeps the native size.
    pub input_size: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for TupleGenSpec {
    fn default() -> Self {
        TupleGenSpec {
            valid_order_set: ValidOrderSet::ForwardOnly,
            mismatch_source: MismatchSource::DifferentVideo,
            class_balance: ClassBalance::Balanced,
            cross_action_fraction: 1.0,
            input_size: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub spatial_source_id: String,
    pub motion_source_id: String,
    /// Start frame of the clip the RGB frame was taken from.
    pub clip_start: usize,
    /// Start frame of the clip the motion frames were taken from.
    pub motion_clip_start: usize,
    pub permutation: Permutation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretextTuple {
    pub rgb: Frame,
    pub sod: StackOfDifferences,
    pub label: PretextLabel,
    pub provenance: Provenance,
}

/// Every candidate for an order-invalid stack: all 720 permutations except
/// identity and reversal. Reversal is kept out of the invalid pool under both
/// valid-order conventions.
fn invalid_pool() -> &'static [Permutation] {
    static POOL: OnceLock<Vec<Permutation>> = OnceLock::new();
    POOL.get_or_init(|| {
        Permutation::all()
            .into_iter()
            .filter(|p| !p.is_identity() && !p.is_reversal())
            .collect()
    })
}

pub fn invalid_permutation_count() -> usize {
    invalid_pool().len()
}

pub fn sample_invalid_permutation(rng: &mut impl Rng) -> Permutation {
    let pool = invalid_pool();
    pool[rng.random_range(0..pool.len())]
}

/// Clips drawn from a set of source videos, indexed by video.
pub struct ClipStore<'a> {
    videos: &'a [SourceVideo],
    clips: Vec<VideoClip<'a>>,
    clip_video: Vec<usize>,
}

impl<'a> ClipStore<'a> {
    pub fn build(videos: &'a [SourceVideo], spec: &ClipSampleSpec) -> Result<Self> {
        let mut clips = Vec::new();
        let mut clip_video = Vec::new();
        for (v, video) in videos.iter().enumerate() {
            for clip in sample_clips(&video.video_id, &video.frames, spec)? {
                clips.push(clip);
                clip_video.push(v);
            }
        }
        Ok(ClipStore {
            videos,
            clips,
            clip_video,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clip(&self, i: usize) -> &VideoClip<'a> {
        &self.clips[i]
    }

    pub fn video_label(&self, clip: usize) -> Option<usize> {
        self.videos[self.clip_video[clip]].action_label
    }

    fn distinct_videos(&self) -> usize {
        let mut seen: Vec<usize> = self.clip_video.clone();
        seen.dedup();
        seen.len()
    }
}

fn prepare(frame: &Frame, input_size: Option<(usize, usize)>) -> Frame {
    match input_size {
        Some((h, w)) => frame.resize_bilinear(h, w),
        None => frame.clone(),
    }
}

/// Builds one tuple of class `target` from `store`.
pub fn make_tuple(store: &ClipStore<'_>, target: PretextLabel, spec: &TupleGenSpec, rng: &mut Stream) -> Result<PretextTuple> {
    if store.is_empty() {
        return Err(Error::DatasetTooSmall("clip store is empty".into()));
    }
    let spatial = rng.random_range(0..store.len());
    let cross_action = rng.random::<f64>() < spec.cross_action_fraction;

    let motion = if target.spatially_matched() {
        spatial
    } else {
        let spatial_video = store.clip_video[spatial];
        let spatial_start = store.clips[spatial].start_frame;
        let spatial_label = store.video_label(spatial);
        let candidates: Vec<usize> = match spec.mismatch_source {
            MismatchSource::DifferentVideo => {
                if store.distinct_videos() < 2 {
                    return Err(Error::DatasetTooSmall(
                        "mismatched tuples need clips from at least two videos".into(),
                    ));
                }
                (0..store.len())
                    .filter(|&c| store.clip_video[c] != spatial_video)
                    .filter(|&c| match (cross_action, spatial_label, store.video_label(c)) {
                        (true, Some(a), Some(b)) => a != b,
                        _ => true,
                    })
                    .collect()
            }
            MismatchSource::DifferentClipSameVideo => (0..store.len())
                .filter(|&c| store.clip_video[c] == spatial_video && store.clips[c].start_frame != spatial_start)
                .collect(),
        };
        if candidates.is_empty() {
            return Err(Error::DatasetTooSmall(format!(
                "no {:?} motion source for clip of `{}`",
                spec.mismatch_source, store.clips[spatial].source_id
            )));
        }
        candidates[rng.random_range(0..candidates.len())]
    };

    let permutation = if target.order_valid() {
        match spec.valid_order_set {
            ValidOrderSet::ForwardOnly => Permutation::IDENTITY,
            ValidOrderSet::ForwardAndReverse => {
                if rng.random_bool(0.5) {
                    Permutation::IDENTITY
                } else {
                    Permutation::REVERSAL
                }
            }
        }
    } else {
        sample_invalid_permutation(rng)
    };

    let spatial_clip = &store.clips[spatial];
    let motion_clip = &store.clips[motion];
    let rgb = prepare(spatial_clip.center_frame(), spec.input_size);
    let motion_frames: Vec<Frame> = motion_clip
        .motion_frames()
        .iter()
        .map(|f| prepare(f, spec.input_size))
        .collect();
    let sod = stack_of_differences(&apply_permutation(&motion_frames, &permutation)?)?;

    Ok(PretextTuple {
        rgb,
        sod,
        label: target,
        provenance: Provenance {
            spatial_source_id: spatial_clip.source_id.to_string(),
            motion_source_id: motion_clip.source_id.to_string(),
            clip_start: spatial_clip.start_frame,
            motion_clip_start: motion_clip.start_frame,
            permutation,
        },
    })
}

/// Recomputes a tuple's label from its provenance alone.
pub fn label_oracle(tuple: &PretextTuple, spec: &TupleGenSpec) -> PretextLabel {
    let p = &tuple.provenance;
    let order = p.permutation.as_array();
    let forward = order == [0, 1, 2, 3, 4, 5];
    let backward = order == [5, 4, 3, 2, 1, 0];
    let order_valid = forward || (backward && spec.valid_order_set == ValidOrderSet::ForwardAndReverse);
    let matched = p.spatial_source_id == p.motion_source_id && p.clip_start == p.motion_clip_start;
    match (order_valid, matched) {
        (true, true) => PretextLabel::ClassI,
        (false, true) => PretextLabel::ClassII,
        (true, false) => PretextLabel::ClassIII,
        (false, false) => PretextLabel::ClassIV,
    }
}

/// Generates `n` tuples. Tuple `i` draws from its own stream, so the output
/// is the same for any `workers` count.
pub fn generate_epoch(store: &ClipStore<'_>, n: usize, spec: &TupleGenSpec, workers: usize) -> Result<Vec<PretextTuple>> {
    let targets: Vec<Option<PretextLabel>> = match spec.class_balance {
        ClassBalance::Balanced => {
            if !n.is_multiple_of(PRETEXT_CLASSES) {
                return Err(Error::Argument(format!(
                    "balanced epochs need a multiple of {PRETEXT_CLASSES} tuples, got {n}"
                )));
            }
            let mut targets: Vec<Option<PretextLabel>> = PretextLabel::ALL
                .iter()
                .flat_map(|&l| std::iter::repeat_n(Some(l), n / PRETEXT_CLASSES))
                .collect();
            targets.shuffle(&mut rng::stream(spec.seed, &[tag::EPOCH]));
            targets
        }
        ClassBalance::IidUniform => vec![None; n],
    };

    let build = |(i, target): (usize, &Option<PretextLabel>)| {
        let mut rng = rng::stream(spec.seed, &[tag::TUPLE, i as u64]);
        let target = target.unwrap_or_else(|| PretextLabel::ALL[rng.random_range(0..PRETEXT_CLASSES)]);
        make_tuple(store, target, spec, &mut rng)
    };

    if workers <= 1 {
        return targets.iter().enumerate().map(build).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| targets.par_iter().enumerate().map(build).collect())
}

pub fn class_histogram(tuples: &[PretextTuple]) -> [usize; PRETEXT_CLASSES] {
    let mut counts = [0; PRETEXT_CLASSES];
    for t in tuples {
        counts[t.label.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_corpus, SyntheticCorpusSpec};

    fn corpus(n: usize) -> Vec<SourceVideo> {
        generate_corpus(&SyntheticCorpusSpec {
            num_videos: n,
            frames_per_video: 80,
            noise_std: 0.0,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
        .into_iter()
        .map(Into::into)
        .collect()
    }

    fn clip_spec() -> ClipSampleSpec {
        ClipSampleSpec { clips_per_video: 3, ..Default::default() }
    }

    #[test]
    fn flags_round_trip_through_labels() {
        for label in PretextLabel::ALL {
            assert_eq!(PretextLabel::from_flags(label.order_valid(), label.spatially_matched()), label);
            assert_eq!(PretextLabel::from_index(label.index()), Some(label));
        }
        assert_eq!(serde_json::to_string(&PretextLabel::ClassIII).unwrap(), "\"CLASS_III\"");
    }

    #[test]
    fn invalid_pool_excludes_identity_and_reversal() {
        assert_eq!(invalid_permutation_count(), 718);
        assert_eq!(720 - invalid_permutation_count(), 2);
        let mut rng = rng::stream(1, &[]);
        for _ in 0..10_000 {
            let p = sample_invalid_permutation(&mut rng);
            assert!(!p.is_identity() && !p.is_reversal());
        }
    }

    #[test]
    fn class_i_and_iii_provenance() {
        let videos = corpus(8);
        let store = ClipStore::build(&videos, &clip_spec()).unwrap();
        let spec = TupleGenSpec::default();
        let mut rng = rng::stream(5, &[]);
        let t = make_tuple(&store, PretextLabel::ClassI, &spec, &mut rng).unwrap();
        assert!(t.provenance.permutation.is_identity());
        assert_eq!(t.provenance.spatial_source_id, t.provenance.motion_source_id);
        let t = make_tuple(&store, PretextLabel::ClassIII, &spec, &mut rng).unwrap();
        assert!(t.provenance.permutation.is_identity());
        assert_ne!(t.provenance.spatial_source_id, t.provenance.motion_source_id);
    }

    #[test]
    fn mismatch_needs_two_videos() {
        let videos = corpus(1);
        let store = ClipStore::build(&videos, &clip_spec()).unwrap();
        let mut rng = rng::stream(5, &[]);
        let err = make_tuple(&store, PretextLabel::ClassIV, &TupleGenSpec::default(), &mut rng);
        assert!(matches!(err, Err(Error::DatasetTooSmall(_))));
        assert!(make_tuple(&store, PretextLabel::ClassII, &TupleGenSpec::default(), &mut rng).is_ok());
    }

    #[test]
    fn same_video_mismatch_uses_another_clip() {
        let videos = corpus(2);
        let store = ClipStore::build(&videos, &ClipSampleSpec { clips_per_video: 6, ..Default::default() }).unwrap();
        let spec = TupleGenSpec {
            mismatch_source: MismatchSource::DifferentClipSameVideo,
            ..Default::default()
        };
        let mut rng = rng::stream(9, &[]);
        for _ in 0..20 {
            let t = make_tuple(&store, PretextLabel::ClassIII, &spec, &mut rng).unwrap();
            let p = &t.provenance;
            assert_eq!(p.spatial_source_id, p.motion_source_id);
            assert_ne!(p.clip_start, p.motion_clip_start);
            assert_eq!(label_oracle(&t, &spec), PretextLabel::ClassIII);
        }
    }

    #[test]
    fn oracle_reference_cases() {
        let videos = corpus(4);
        let store = ClipStore::build(&videos, &clip_spec()).unwrap();
        let mut rng = rng::stream(2, &[]);
        let mut t = make_tuple(&store, PretextLabel::ClassI, &TupleGenSpec::default(), &mut rng).unwrap();
        assert_eq!(label_oracle(&t, &TupleGenSpec::default()), PretextLabel::ClassI);
        t.provenance.permutation = Permutation::new([1, 0, 2, 3, 4, 5]).unwrap();
        assert_eq!(label_oracle(&t, &TupleGenSpec::default()), PretextLabel::ClassII);
        t.provenance.permutation = Permutation::REVERSAL;
        t.provenance.motion_source_id = "elsewhere".into();
        let fr = TupleGenSpec {
            valid_order_set: ValidOrderSet::ForwardAndReverse,
            ..Default::default()
        };
        assert_eq!(label_oracle(&t, &fr), PretextLabel::ClassIII);
        assert_eq!(label_oracle(&t, &TupleGenSpec::default()), PretextLabel::ClassIV);
    }

    #[test]
    fn balanced_epoch_requires_multiple_of_four() {
        let videos = corpus(4);
        let store = ClipStore::build(&videos, &clip_spec()).unwrap();
        let err = generate_epoch(&store, 10, &TupleGenSpec::default(), 1);
        assert!(matches!(err, Err(Error::Argument(_))));
    }
}
