//! Deterministic toy video corpora whose action label is carried only by motion.
//!
//! Each video shows one or more flat-colored shapes on a flat background. The
//! class selects a motion program; color, size, shape kind, start position and
//! speed are drawn per video so no single frame reveals the label.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::frame::Frame;
use crate::rng::{self, tag};

pub const CORPUS_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const MIN_FRAME_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub num_videos: usize,
    pub frames_per_video: usize,
    /// `(height, width)` in pixels.
    pub frame_size: (usize, usize),
    pub num_action_classes: usize,
    pub shapes_per_video: usize,
    pub noise_std: f32,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            num_videos: 200,
            frames_per_video: 140,
            frame_size: (32, 32),
            num_action_classes: 4,
            shapes_per_video: 1,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 {
            return Err(Error::config("corpus.num_videos", "must be at least 1"));
        }
        if self.frames_per_video < 6 {
            return Err(Error::config(
                "corpus.frames_per_video",
                "must be at least 6 to hold one motion stack",
            ));
        }
        let (h, w) = self.frame_size;
        if h < MIN_FRAME_SIDE || w < MIN_FRAME_SIDE {
            return Err(Error::config(
                "corpus.frame_size",
                format!("{h}x{w} is too small to render shapes (minimum {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE})"),
            ));
        }
        if self.num_action_classes < 2 || self.num_action_classes > MotionProgram::ALL.len() {
            return Err(Error::config(
                "corpus.num_action_classes",
                format!("must lie in 2..={}", MotionProgram::ALL.len()),
            ));
        }
        if self.shapes_per_video == 0 {
            return Err(Error::config("corpus.shapes_per_video", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_std) {
            return Err(Error::config("corpus.noise_std", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// How the shapes of a video move. Class `k` uses `MotionProgram::ALL[k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionProgram {
    TranslateRight,
    TranslateDown,
    ClockwiseOrbit,
    HorizontalOscillation,
    TranslateLeft,
    TranslateUp,
    CounterClockwiseOrbit,
    VerticalOscillation,
}

impl MotionProgram {
    pub const ALL: [MotionProgram; 8] = [
        MotionProgram::TranslateRight,
        MotionProgram::TranslateDown,
        MotionProgram::ClockwiseOrbit,
        MotionProgram::HorizontalOscillation,
        MotionProgram::TranslateLeft,
        MotionProgram::TranslateUp,
        MotionProgram::CounterClockwiseOrbit,
        MotionProgram::VerticalOscillation,
    ];

    pub fn for_class(class: usize) -> MotionProgram {
        Self::ALL[class]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub action_label: usize,
    pub frames: Vec<Frame>,
}

/// A video from any source; user-supplied frame directories may be unlabeled.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceVideo {
    pub video_id: String,
    pub action_label: Option<usize>,
    pub frames: Vec<Frame>,
}

impl From<SyntheticVideo> for SourceVideo {
    fn from(v: SyntheticVideo) -> Self {
        SourceVideo {
            video_id: v.video_id,
            action_label: Some(v.action_label),
            frames: v.frames,
        }
    }
}

pub fn video_id(index: usize) -> String {
    format!("vid{index:05}")
}

/// Generates `spec.num_videos` videos; video `i` has label `i % num_action_classes`.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<SyntheticVideo>> {
    spec.validate()?;
    Ok((0..spec.num_videos)
        .into_par_iter()
        .map(|i| generate_video(spec, i))
        .collect())
}

/// Renders one video from its own stream; independent of every other index.
pub fn generate_video(spec: &SyntheticCorpusSpec, index: usize) -> SyntheticVideo {
    let mut rng = rng::stream(spec.seed, &[tag::VIDEO, index as u64]);
    let label = index % spec.num_action_classes;
    let program = MotionProgram::for_class(label);
    let (height, width) = spec.frame_size;
    let frames_n = spec.frames_per_video;

    let background = random_color(&mut rng);
    let shapes: Vec<Sprite> = (0..spec.shapes_per_video)
        .map(|_| Sprite::random(&mut rng, spec, background, program))
        .collect();

    let noise = (spec.noise_std > 0.0).then(|| Normal::new(0.0f32, spec.noise_std).unwrap());
    let mut frames = Vec::with_capacity(frames_n);
    for t in 0..frames_n {
        let mut frame = Frame::zeros(height, width, 3);
        for px in frame.data_mut().chunks_exact_mut(3) {
            px.copy_from_slice(&background);
        }
        for sprite in &shapes {
            sprite.render(&mut frame, t);
        }
        if let Some(noise) = &noise {
            for v in frame.data_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(frame.quantized());
    }

    SyntheticVideo {
        video_id: video_id(index),
        action_label: label,
        frames,
    }
}

fn luma(c: &[f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn random_color(rng: &mut impl Rng) -> [f32; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// A filled rectangle or disc following a motion program.
struct Sprite {
    color: [f32; 3],
    /// Pixel offsets relative to the top-left anchor.
    mask: Vec<(usize, usize)>,
    extent: (usize, usize),
    span: f64,
    trajectory: Trajectory,
}

enum Trajectory {
    Linear {
        start: (f64, f64),
        end: (f64, f64),
    },
    Orbit {
        center: (f64, f64),
        radius: f64,
        phase: f64,
        sweep: f64,
    },
    Oscillation {
        center: (f64, f64),
        amplitude: f64,
        period: f64,
        phase: f64,
        horizontal: bool,
    },
}

impl Sprite {
    fn random(
        rng: &mut impl Rng,
        spec: &SyntheticCorpusSpec,
        background: [f32; 3],
        program: MotionProgram,
    ) -> Sprite {
        let (height, width) = spec.frame_size;
        let side = height.min(width);
        let min_size = (side / 6).max(3);
        let max_size = (side / 4).max(min_size);

        // Rejection sampling keeps the shape visible in grayscale.
        let mut color = random_color(rng);
        while (luma(&color) - luma(&background)).abs() < 0.25 {
            color = random_color(rng);
        }

        let (mask, mh, mw) = if rng.random_bool(0.5) {
            let h = rng.random_range(min_size..=max_size);
            let w = rng.random_range(min_size..=max_size);
            let mask = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect();
            (mask, h, w)
        } else {
            let d = rng.random_range(min_size..=max_size);
            let r = d as f64 / 2.0;
            let mask = (0..d)
                .flat_map(|y| (0..d).map(move |x| (y, x)))
                .filter(|&(y, x)| {
                    let dy = y as f64 + 0.5 - r;
                    let dx = x as f64 + 0.5 - r;
                    dy * dy + dx * dx <= r * r
                })
                .collect();
            (mask, d, d)
        };

        // Anchor ranges keep the whole shape inside the frame.
        let room_y = (height - mh) as f64;
        let room_x = (width - mw) as f64;
        let span = (spec.frames_per_video - 1).max(1) as f64;

        let linear = |rng: &mut dyn rand::RngCore, room_along: f64, room_across: f64| {
            let travel = rng.random_range(0.6..0.9) * (room_along - 2.0);
            let start = 1.0 + rng.random_range(0.0..=(room_along - 2.0 - travel));
            let across = rng.random_range(0.0..=room_across);
            (start, start + travel, across)
        };

        let trajectory = match program {
            MotionProgram::TranslateRight | MotionProgram::TranslateLeft => {
                let (a, b, y) = linear(rng, room_x, room_y);
                let (a, b) = if program == MotionProgram::TranslateRight { (a, b) } else { (b, a) };
                Trajectory::Linear {
                    start: (y, a),
                    end: (y, b),
                }
            }
            MotionProgram::TranslateDown | MotionProgram::TranslateUp => {
                let (a, b, x) = linear(rng, room_y, room_x);
                let (a, b) = if program == MotionProgram::TranslateDown { (a, b) } else { (b, a) };
                Trajectory::Linear {
                    start: (a, x),
                    end: (b, x),
                }
            }
            MotionProgram::ClockwiseOrbit | MotionProgram::CounterClockwiseOrbit => {
                let max_radius = (room_y.min(room_x) / 2.0 - 1.0).max(1.0);
                let radius = rng.random_range(0.5..=1.0) * max_radius;
                let cy = rng.random_range(radius..=(room_y - radius));
                let cx = rng.random_range(radius..=(room_x - radius));
                let sweep = rng.random_range(1.5 * PI..2.5 * PI);
                let sweep = if program == MotionProgram::ClockwiseOrbit { sweep } else { -sweep };
                Trajectory::Orbit {
                    center: (cy, cx),
                    radius,
                    phase: rng.random_range(0.0..2.0 * PI),
                    sweep,
                }
            }
            MotionProgram::HorizontalOscillation | MotionProgram::VerticalOscillation => {
                let horizontal = program == MotionProgram::HorizontalOscillation;
                let (room_along, room_across) = if horizontal { (room_x, room_y) } else { (room_y, room_x) };
                let max_amp = (room_along / 2.0 - 1.0).max(1.0);
                let amplitude = rng.random_range(0.5..=1.0) * max_amp;
                let along = rng.random_range(amplitude..=(room_along - amplitude));
                let across = rng.random_range(0.0..=room_across);
                let frames = spec.frames_per_video as f64;
                Trajectory::Oscillation {
                    center: if horizontal { (across, along) } else { (along, across) },
                    amplitude,
                    period: rng.random_range(frames / 4.0..=frames / 2.0),
                    phase: rng.random_range(0.0..2.0 * PI),
                    horizontal,
                }
            }
        };

        Sprite {
            color,
            mask,
            extent: (mh, mw),
            span,
            trajectory,
        }
    }

    /// Top-left anchor `(row, col)` at frame `t`, before pixel snapping.
    fn anchor(&self, t: usize) -> (f64, f64) {
        let s = t as f64 / self.span;
        match self.trajectory {
            Trajectory::Linear { start, end } => {
                (start.0 + (end.0 - start.0) * s, start.1 + (end.1 - start.1) * s)
            }
            Trajectory::Orbit {
                center,
                radius,
                phase,
                sweep,
            } => {
                let theta = phase + sweep * s;
                (center.0 + radius * theta.sin(), center.1 + radius * theta.cos())
            }
            Trajectory::Oscillation {
                center,
                amplitude,
                period,
                phase,
                horizontal,
            } => {
                let offset = amplitude * (2.0 * PI * t as f64 / period + phase).sin();
                if horizontal {
                    (center.0, center.1 + offset)
                } else {
                    (center.0 + offset, center.1)
                }
            }
        }
    }

    /// Integer anchor; rounding the float path without anti-aliasing keeps
    /// the rendered pixel set a pure translate of the mask.
    fn pixel_anchor(&self, t: usize, height: usize, width: usize) -> (usize, usize) {
        let (y, x) = self.anchor(t);
        let max_y = (height - self.extent.0) as f64;
        let max_x = (width - self.extent.1) as f64;
        (y.round().clamp(0.0, max_y) as usize, x.round().clamp(0.0, max_x) as usize)
    }

    fn render(&self, frame: &mut Frame, t: usize) {
        let (row, col) = self.pixel_anchor(t, frame.height(), frame.width());
        for &(dy, dx) in &self.mask {
            for (ch, &v) in self.color.iter().enumerate() {
                frame.set(row + dy, col + dx, ch, v);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub action_label: Option<usize>,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    /// Relative to the manifest directory. A file holds raw frames; a
    /// directory holds numbered PNG images.
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub corpus_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn label_histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for label in self.entries.iter().filter_map(|e| e.action_label) {
            if label < num_classes {
                counts[label] += 1;
            }
        }
        counts
    }

    pub fn read(root: &Path) -> Result<Manifest> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).at(&path)?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != CORPUS_FORMAT_VERSION {
            return Err(Error::corrupt(
                path.display().to_string(),
                format!(
                    "format_version {} (expected {CORPUS_FORMAT_VERSION})",
                    manifest.format_version
                ),
            ));
        }
        Ok(manifest)
    }
}

/// Writes `videos/<id>.bin` per video (u8, `[frame][row][col][channel]`)
/// and `manifest.json`.
pub fn corpus_to_disk(corpus: &[SyntheticVideo], corpus_seed: u64, root: &Path) -> Result<Manifest> {
    let videos_dir = root.join("videos");
    fs::create_dir_all(&videos_dir).at(&videos_dir)?;
    let mut entries = Vec::with_capacity(corpus.len());
    for video in corpus {
        let first = video.frames.first().ok_or_else(|| {
            Error::Validation(format!("video `{}` has no frames", video.video_id))
        })?;
        let (height, width, channels) = first.dims();
        let mut bytes = Vec::with_capacity(video.frames.len() * height * width * channels);
        for frame in &video.frames {
            if frame.dims() != (height, width, 3) {
                return Err(Error::shape(
                    video.video_id.clone(),
                    "frames must share one HxWx3 shape",
                ));
            }
            bytes.extend(frame.to_u8());
        }
        let rel = format!("videos/{}.bin", video.video_id);
        let path = root.join(&rel);
        fs::write(&path, &bytes).at(&path)?;
        entries.push(ManifestEntry {
            video_id: video.video_id.clone(),
            action_label: Some(video.action_label),
            num_frames: video.frames.len(),
            height,
            width,
            path: rel,
        });
    }
    let manifest = Manifest {
        format_version: CORPUS_FORMAT_VERSION,
        corpus_seed,
        entries,
    };
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).at(&path)?;
    Ok(manifest)
}

/// Loads every video listed in `root/manifest.json`.
pub fn read_corpus(root: &Path) -> Result<Vec<SourceVideo>> {
    let manifest = Manifest::read(root)?;
    manifest
        .entries
        .iter()
        .map(|entry| read_entry(root, entry))
        .collect()
}

fn read_entry(root: &Path, entry: &ManifestEntry) -> Result<SourceVideo> {
    let path = root.join(&entry.path);
    let frames = if path.is_dir() {
        let frames = read_frame_dir(&path)?;
        if frames.len() != entry.num_frames {
            return Err(Error::Dataset(format!(
                "{} holds {} frames, manifest says {}",
                path.display(),
                frames.len(),
                entry.num_frames
            )));
        }
        if let Some(f) = frames.iter().find(|f| (f.height(), f.width()) != (entry.height, entry.width)) {
            return Err(Error::shape(
                entry.video_id.clone(),
                format!("frame is {}x{}, manifest says {}x{}", f.height(), f.width(), entry.height, entry.width),
            ));
        }
        frames
    } else {
        let bytes = fs::read(&path).at(&path)?;
        let frame_len = entry.height * entry.width * 3;
        if bytes.len() != frame_len * entry.num_frames {
            return Err(Error::corrupt(
                path.display().to_string(),
                format!(
                    "{} bytes, expected {} ({} frames of {}x{}x3)",
                    bytes.len(),
                    frame_len * entry.num_frames,
                    entry.num_frames,
                    entry.height,
                    entry.width
                ),
            ));
        }
        bytes
            .chunks_exact(frame_len)
            .map(|chunk| Frame::from_u8(entry.height, entry.width, 3, chunk))
            .collect::<Result<_>>()?
    };
    Ok(SourceVideo {
        video_id: entry.video_id.clone(),
        action_label: entry.action_label,
        frames,
    })
}

/// Reads numbered image files (`0.png`, `00001.png`, ...) in numeric order.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<Frame>> {
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for item in fs::read_dir(dir).at(dir)? {
        let path = item.at(dir)?.path();
        let number = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok());
        if let Some(n) = number {
            numbered.push((n, path));
        }
    }
    numbered.sort();
    numbered
        .iter()
        .map(|(_, path)| {
            let img = image::open(path)
                .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?
                .to_rgb8();
            let (w, h) = img.dimensions();
            Frame::from_u8(h as usize, w as usize, 3, img.as_raw())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            num_videos: 8,
            frames_per_video: 20,
            noise_std: 0.0,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_labels() {
        let corpus = generate_corpus(&small_spec()).unwrap();
        assert_eq!(corpus.len(), 8);
        let mut counts = [0; 4];
        for v in &corpus {
            counts[v.action_label] += 1;
            assert_eq!(v.frames.len(), 20);
        }
        assert_eq!(counts, [2, 2, 2, 2]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_corpus(&small_spec()).unwrap();
        let b = generate_corpus(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&SyntheticCorpusSpec { seed: 8, ..small_spec() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frames_lie_on_the_u8_grid() {
        let spec = SyntheticCorpusSpec { noise_std: 0.05, ..small_spec() };
        let video = generate_video(&spec, 3);
        for f in &video.frames {
            assert_eq!(*f, Frame::from_u8(32, 32, 3, &f.to_u8()).unwrap());
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let cases = [
            (SyntheticCorpusSpec { num_videos: 0, ..small_spec() }, "corpus.num_videos"),
            (SyntheticCorpusSpec { frame_size: (8, 32), ..small_spec() }, "corpus.frame_size"),
            (SyntheticCorpusSpec { num_action_classes: 1, ..small_spec() }, "corpus.num_action_classes"),
            (SyntheticCorpusSpec { num_action_classes: 9, ..small_spec() }, "corpus.num_action_classes"),
        ];
        for (spec, key) in cases {
            match generate_corpus(&spec) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key),
                other => panic!("expected config error for {key}, got {other:?}"),
            }
        }
    }
}
