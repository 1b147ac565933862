use twostream_core::clip::{center_index, motion_frame_indices, sample_clips, ClipSampleSpec, VideoClip};
use twostream_core::error::Error;
use twostream_core::frame::Frame;

/// Frame `i` is filled with `i / 255`, so a frame names its own index.
fn numbered_video(len: usize) -> Vec<Frame> {
    (0..len).map(|i| Frame::filled(2, 2, 3, (i % 256) as f32 / 255.0)).collect()
}

fn spec(clip_length: usize, clips_per_video: usize, seed: u64) -> ClipSampleSpec {
    ClipSampleSpec {
        clip_length,
        clips_per_video,
        seed,
        ..ClipSampleSpec::default()
    }
}

/// round(i * (len - 1) / 5) with ties to even, in exact rational arithmetic.
fn rounded_indices(len: usize) -> Vec<usize> {
    (0..6)
        .map(|i| {
            let num = i * (len - 1);
            let (q, r) = (num / 5, num % 5);
            match (2 * r).cmp(&5) {
                std::cmp::Ordering::Less => q,
                std::cmp::Ordering::Greater => q + 1,
                std::cmp::Ordering::Equal => q + (q % 2),
            }
        })
        .collect()
}

#[test]
fn exact_length_video_has_one_clip_start() {
    let video = numbered_video(70);
    let clips = sample_clips("v", &video, &spec(70, 5, 1)).unwrap();
    assert_eq!(clips.len(), 5);
    assert!(clips.iter().all(|c| c.start_frame == 0 && c.len() == 70));
}

#[test]
fn starts_cover_the_valid_range_only() {
    let video = numbered_video(140);
    let clips = sample_clips("v", &video, &spec(70, 1000, 2)).unwrap();
    assert_eq!(clips.len(), 1000);
    assert!(clips.iter().all(|c| c.start_frame <= 70));
    let distinct: std::collections::BTreeSet<usize> = clips.iter().map(|c| c.start_frame).collect();
    assert!(distinct.contains(&0) && distinct.contains(&70), "endpoints never drawn");
    assert_eq!(distinct.len(), 71);
}

#[test]
fn same_seed_same_starts() {
    let video = numbered_video(140);
    let starts = |seed| -> Vec<usize> {
        sample_clips("v", &video, &spec(70, 20, seed))
            .unwrap()
            .iter()
            .map(|c| c.start_frame)
            .collect()
    };
    assert_eq!(starts(3), starts(3));
    assert_ne!(starts(3), starts(4));
}

#[test]
fn short_video_is_rejected_with_lengths() {
    let video = numbered_video(50);
    match sample_clips("short", &video, &spec(70, 1, 0)) {
        Err(Error::ClipTooShort {
            source_id,
            length,
            required,
        }) => assert_eq!((source_id.as_str(), length, required), ("short", 50, 70)),
        other => panic!("unexpected {:?}", other.map(|c| c.len())),
    }
}

#[test]
fn center_index_convention() {
    assert_eq!(center_index(70), 34);
    assert_eq!(center_index(7), 3);
    assert_eq!(center_index(8), 3);
}

#[test]
fn center_frame_matches_direct_indexing() {
    let video = numbered_video(140);
    for clip in sample_clips("v", &video, &spec(70, 30, 5)).unwrap() {
        assert_eq!(clip.center_frame(), &video[clip.start_frame + 34]);
    }
}

#[test]
fn motion_indices_match_rounding_oracle() {
    assert_eq!(motion_frame_indices(70), [0, 14, 28, 41, 55, 69]);
    assert_eq!(motion_frame_indices(6), [0, 1, 2, 3, 4, 5]);
    assert_eq!(motion_frame_indices(11), [0, 2, 4, 6, 8, 10]);
    for len in 6..400 {
        let idx = motion_frame_indices(len);
        assert_eq!(idx.to_vec(), rounded_indices(len), "L={len}");
        assert!(idx.windows(2).all(|w| w[0] < w[1]), "L={len}");
        assert_eq!((idx[0], idx[5]), (0, len - 1));
        if len >= 8 {
            let c = center_index(len);
            assert!(idx[0] < c && c < idx[5]);
        }
    }
}

#[test]
fn motion_frames_come_from_the_source() {
    let video = numbered_video(140);
    let clip = VideoClip::new("v", &video, 17, 70).unwrap();
    let frames = clip.motion_frames();
    for (f, i) in frames.iter().zip(motion_frame_indices(70)) {
        assert_eq!(*f, &video[17 + i]);
    }
}

#[test]
fn motion_frame_count_is_locked() {
    let bad = ClipSampleSpec {
        motion_frame_count: 5,
        ..ClipSampleSpec::default()
    };
    assert!(matches!(bad.validate(), Err(Error::Config { .. })));
}
