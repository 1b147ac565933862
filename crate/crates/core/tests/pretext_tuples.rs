use std::collections::HashMap;

use twostream_core::clip::ClipSampleSpec;
use twostream_core::error::Error;
use twostream_core::motion::{apply_permutation, stack_of_differences, Permutation};
use twostream_core::pretext::{
    class_histogram, generate_epoch, invalid_permutation_count, label_oracle, make_tuple,
    sample_invalid_permutation, ClassBalance, ClipStore, MismatchSource, PretextLabel, PretextTuple,
    TupleGenSpec, ValidOrderSet,
};
use twostream_core::rng;
use twostream_core::synthetic::{generate_corpus, SourceVideo, SyntheticCorpusSpec};

fn corpus(n: usize) -> Vec<SourceVideo> {
    let spec = SyntheticCorpusSpec {
        num_videos: n,
        frames_per_video: 80,
        frame_size: (16, 16),
        ..Default::default()
    };
    generate_corpus(&spec).unwrap().into_iter().map(Into::into).collect()
}

fn clips() -> ClipSampleSpec {
    ClipSampleSpec { clips_per_video: 4, ..Default::default() }
}

fn by_id(videos: &[SourceVideo]) -> HashMap<&str, &SourceVideo> {
    videos.iter().map(|v| (v.video_id.as_str(), v)).collect()
}

/// Rebuilds a tuple's stack straight from its provenance.
fn rebuild_sod(t: &PretextTuple, videos: &HashMap<&str, &SourceVideo>) -> Vec<f32> {
    let v = videos[t.provenance.motion_source_id.as_str()];
    let idx = [0usize, 14, 28, 41, 55, 69];
    let frames: Vec<_> = idx.iter().map(|&i| v.frames[t.provenance.motion_clip_start + i].clone()).collect();
    let ordered = apply_permutation(&frames, &t.provenance.permutation).unwrap();
    stack_of_differences(&ordered).unwrap().data().to_vec()
}

#[test]
fn invalid_pool_has_718_members() {
    assert_eq!(invalid_permutation_count(), 718);
    // Independent count: 6! minus identity and reversal.
    assert_eq!((1..=6).product::<usize>() - 2, 718);
}

#[test]
fn invalid_permutation_draws_are_uniform() {
    let mut rng = rng::stream(3, &[]);
    let mut counts: HashMap<[u8; 6], usize> = HashMap::new();
    for _ in 0..718_000 {
        let p = sample_invalid_permutation(&mut rng);
        assert!(!p.is_identity() && !p.is_reversal());
        *counts.entry(p.as_array()).or_default() += 1;
    }
    assert_eq!(counts.len(), 718);
    let max = *counts.values().max().unwrap() as f64;
    let min = *counts.values().min().unwrap() as f64;
    assert!(max / min < 1.3, "max/min = {}", max / min);
}

#[test]
fn labels_agree_with_oracle_on_many_tuples() {
    let videos = corpus(40);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let lookup = by_id(&videos);
    for spec in [
        TupleGenSpec::default(),
        TupleGenSpec { valid_order_set: ValidOrderSet::ForwardAndReverse, seed: 1, ..Default::default() },
        TupleGenSpec { mismatch_source: MismatchSource::DifferentClipSameVideo, seed: 2, ..Default::default() },
    ] {
        let tuples = generate_epoch(&store, 4000, &spec, 1).unwrap();
        assert_eq!(class_histogram(&tuples), [1000; 4]);
        for t in &tuples {
            assert_eq!(label_oracle(t, &spec), t.label);
            if !t.label.order_valid() {
                let p = t.provenance.permutation;
                assert!(!p.is_identity() && !p.is_reversal());
            }
            assert_eq!(t.sod.data(), &rebuild_sod(t, &lookup)[..]);
        }
    }
}

#[test]
fn matched_and_mismatched_provenance() {
    let videos = corpus(16);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let lookup = by_id(&videos);
    let spec = TupleGenSpec::default();
    let tuples = generate_epoch(&store, 800, &spec, 1).unwrap();
    for t in &tuples {
        let p = &t.provenance;
        match t.label {
            PretextLabel::ClassI | PretextLabel::ClassII => {
                assert_eq!(p.spatial_source_id, p.motion_source_id);
                assert_eq!(p.clip_start, p.motion_clip_start);
            }
            PretextLabel::ClassIII | PretextLabel::ClassIV => {
                assert_ne!(p.spatial_source_id, p.motion_source_id);
                let a = lookup[p.spatial_source_id.as_str()].action_label;
                let b = lookup[p.motion_source_id.as_str()].action_label;
                assert_ne!(a, b, "cross-action fraction 1.0 keeps labels apart");
            }
        }
        if t.label == PretextLabel::ClassI {
            assert!(t.provenance.permutation.is_identity());
        }
        // The frame is the clip's center frame: index 34 for length 70.
        let v = lookup[p.spatial_source_id.as_str()];
        assert_eq!(t.rgb, v.frames[p.clip_start + 34].clone());
    }
}

#[test]
fn same_video_mismatch_uses_another_clip() {
    let videos = corpus(8);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let spec = TupleGenSpec { mismatch_source: MismatchSource::DifferentClipSameVideo, ..Default::default() };
    for t in generate_epoch(&store, 400, &spec, 1).unwrap() {
        if !t.label.spatially_matched() {
            assert_eq!(t.provenance.spatial_source_id, t.provenance.motion_source_id);
            assert_ne!(t.provenance.clip_start, t.provenance.motion_clip_start);
        }
    }
}

#[test]
fn reversal_counts_as_valid_only_under_forward_and_reverse() {
    let videos = corpus(16);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let spec = TupleGenSpec { valid_order_set: ValidOrderSet::ForwardAndReverse, ..Default::default() };
    let tuples = generate_epoch(&store, 800, &spec, 1).unwrap();
    let reversed: Vec<_> = tuples.iter().filter(|t| t.provenance.permutation.is_reversal()).collect();
    assert!(!reversed.is_empty());
    for t in &reversed {
        assert!(t.label.order_valid());
        assert_eq!(label_oracle(t, &TupleGenSpec::default()), PretextLabel::from_flags(false, t.label.spatially_matched()));
    }
    let fwd = generate_epoch(&store, 800, &TupleGenSpec::default(), 1).unwrap();
    assert!(fwd.iter().all(|t| !t.provenance.permutation.is_reversal()));
}

#[test]
fn iid_uniform_class_counts_within_bounds() {
    let videos = corpus(16);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let spec = TupleGenSpec { class_balance: ClassBalance::IidUniform, ..Default::default() };
    let counts = class_histogram(&generate_epoch(&store, 4000, &spec, 1).unwrap());
    assert_eq!(counts.iter().sum::<usize>(), 4000);
    for c in counts {
        assert!((900..=1100).contains(&c), "{counts:?}");
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let videos = corpus(16);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let spec = TupleGenSpec { seed: 11, ..Default::default() };
    let one = generate_epoch(&store, 400, &spec, 1).unwrap();
    let four = generate_epoch(&store, 400, &spec, 4).unwrap();
    assert_eq!(one, four);
    let other = generate_epoch(&store, 400, &TupleGenSpec { seed: 12, ..Default::default() }, 1).unwrap();
    assert_ne!(one, other);
}

#[test]
fn balanced_epoch_needs_multiple_of_four() {
    let videos = corpus(8);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    assert!(matches!(generate_epoch(&store, 10, &TupleGenSpec::default(), 1), Err(Error::Argument(_))));
}

#[test]
fn single_video_cannot_supply_mismatched_motion() {
    let videos = corpus(1);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let mut rng = rng::stream(0, &[]);
    let err = make_tuple(&store, PretextLabel::ClassIII, &TupleGenSpec::default(), &mut rng).unwrap_err();
    assert!(matches!(err, Error::DatasetTooSmall(_)));
    assert_eq!(err.exit_code(), 3);
    // Matched classes still work.
    assert!(make_tuple(&store, PretextLabel::ClassII, &TupleGenSpec::default(), &mut rng).is_ok());
}

#[test]
fn resized_inputs_have_requested_shape() {
    let videos = corpus(8);
    let store = ClipStore::build(&videos, &clips()).unwrap();
    let spec = TupleGenSpec { input_size: Some((8, 12)), ..Default::default() };
    for t in generate_epoch(&store, 40, &spec, 1).unwrap() {
        assert_eq!(t.rgb.dims(), (8, 12, 3));
        assert_eq!((t.sod.height(), t.sod.width()), (8, 12));
    }
}

#[test]
fn permutation_roundtrips_through_serde() {
    let p = Permutation::new([2, 0, 1, 5, 3, 4]).unwrap();
    let json = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<Permutation>(&json).unwrap(), p);
}
