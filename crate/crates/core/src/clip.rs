//! Fixed-length clip sampling and the two per-clip inputs: the center RGB
//! frame and six equi-distant motion frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::{self, tag};

/// Roughly 2.5 s of video at common frame rates.
pub const DEFAULT_CLIP_LENGTH: usize = 70;
/// Six frames give five consecutive differences.
pub const MOTION_FRAME_COUNT: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipSampleSpec {
    pub clip_length: usize,
    pub clips_per_video: usize,
    pub motion_frame_count: usize,
    pub seed: u64,
}

impl Default for ClipSampleSpec {
    fn default() -> Self {
        ClipSampleSpec {
            clip_length: DEFAULT_CLIP_LENGTH,
            clips_per_video: 10,
            motion_frame_count: MOTION_FRAME_COUNT,
            seed: 0,
        }
    }
}

impl ClipSampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.motion_frame_count != MOTION_FRAME_COUNT {
            return Err(Error::config(
                "clips.motion_frame_count",
                format!("must be {MOTION_FRAME_COUNT}"),
            ));
        }
        if self.clip_length < MOTION_FRAME_COUNT {
            return Err(Error::config(
                "clips.clip_length",
                format!("must be at least {MOTION_FRAME_COUNT}"),
            ));
        }
        if self.clips_per_video == 0 {
            return Err(Error::config("clips.clips_per_video", "must be at least 1"));
        }
        Ok(())
    }
}

/// A window of `frames.len()` consecutive frames borrowed from a source video.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VideoClip<'a> {
    pub source_id: &'a str,
    pub start_frame: usize,
    pub frames: &'a [Frame],
}

impl<'a> VideoClip<'a> {
    pub fn new(source_id: &'a str, video: &'a [Frame], start_frame: usize, length: usize) -> Result<Self> {
        if length < MOTION_FRAME_COUNT {
            return Err(Error::Argument(format!(
                "clip length {length} is below {MOTION_FRAME_COUNT}"
            )));
        }
        if start_frame + length > video.len() {
            return Err(Error::ClipTooShort {
                source_id: source_id.to_string(),
                length: video.len().saturating_sub(start_frame),
                required: length,
            });
        }
        Ok(VideoClip {
            source_id,
            start_frame,
            frames: &video[start_frame..start_frame + length],
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn center_frame(&self) -> &'a Frame {
        &self.frames[center_index(self.len())]
    }

    pub fn motion_frames(&self) -> [&'a Frame; MOTION_FRAME_COUNT] {
        motion_frame_indices(self.len()).map(|i| &self.frames[i])
    }
}

/// `floor((len - 1) / 2)`: the earlier middle frame for even lengths.
pub fn center_index(len: usize) -> usize {
    len.saturating_sub(1) / 2
}

/// `round(i * (len - 1) / 5)` for `i = 0..5`.
///
/// The denominator is odd, so `i * (len - 1) / 5` never lands on a half and
/// any round-half rule gives the same indices.
pub fn motion_frame_indices(len: usize) -> [usize; MOTION_FRAME_COUNT] {
    let last = len.saturating_sub(1);
    let steps = MOTION_FRAME_COUNT - 1;
    std::array::from_fn(|i| (2 * i * last + steps) / (2 * steps))
}

/// Draws `clips_per_video` start offsets uniformly from `0..=len - clip_length`,
/// with replacement. The stream is keyed by `source_id`, so the result does
/// not depend on which other videos are sampled.
pub fn sample_clips<'a>(source_id: &'a str, video: &'a [Frame], spec: &ClipSampleSpec) -> Result<Vec<VideoClip<'a>>> {
    spec.validate()?;
    if video.len() < spec.clip_length {
        return Err(Error::ClipTooShort {
            source_id: source_id.to_string(),
            length: video.len(),
            required: spec.clip_length,
        });
    }
    let max_start = video.len() - spec.clip_length;
    let mut rng = rng::stream(spec.seed, &[tag::CLIP, rng::name_key(source_id)]);
    (0..spec.clips_per_video)
        .map(|_| {
            let start = rng.random_range(0..=max_start);
            VideoClip::new(source_id, video, start, spec.clip_length)
        })
        .collect()
}
