//! Stack-of-differences (SOD) motion encoding.
//!
//! Six frames become five channels: each channel is the luma difference of
//! two consecutive frames. No normalization or clamping is applied.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clip::MOTION_FRAME_COUNT;
use crate::error::{Error, Result};
use crate::frame::Frame;

pub const SOD_CHANNELS: usize = MOTION_FRAME_COUNT - 1;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// `H × W × 5` consecutive grayscale differences, values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackOfDifferences(Frame);

impl StackOfDifferences {
    pub fn from_frame(frame: Frame) -> Result<Self> {
        if frame.channels() != SOD_CHANNELS {
            return Err(Error::shape(
                "stack_of_differences",
                format!("{} channels, expected {SOD_CHANNELS}", frame.channels()),
            ));
        }
        Ok(StackOfDifferences(frame))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        StackOfDifferences(Frame::zeros(height, width, SOD_CHANNELS))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn as_frame(&self) -> &Frame {
        &self.0
    }

    pub fn data(&self) -> &[f32] {
        self.0.data()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.0.get(row, col, channel)
    }

    pub fn is_zero(&self) -> bool {
        self.0.data().iter().all(|&v| v == 0.0)
    }
}

/// `0.299 R + 0.587 G + 0.114 B` per pixel.
pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    if frame.channels() != 3 {
        return Err(Error::shape(
            "to_grayscale",
            format!("{} channels, expected 3", frame.channels()),
        ));
    }
    frame.check_unit_range()?;
    Ok(grayscale_unchecked(frame))
}

fn grayscale_unchecked(frame: &Frame) -> Frame {
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|px| LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2])
        .collect();
    Frame::from_vec(frame.height(), frame.width(), 1, data).expect("one sample per pixel")
}

/// `channel[c] = gray(frames[c + 1]) - gray(frames[c])`.
pub fn stack_of_differences<F: Borrow<Frame>>(frames: &[F]) -> Result<StackOfDifferences> {
    if frames.len() != MOTION_FRAME_COUNT {
        return Err(Error::Argument(format!(
            "stack of differences needs {MOTION_FRAME_COUNT} frames, got {}",
            frames.len()
        )));
    }
    let first = frames[0].borrow();
    let (height, width, _) = first.dims();
    for (i, f) in frames.iter().enumerate() {
        if f.borrow().dims() != (height, width, 3) {
            return Err(Error::shape(
                "stack_of_differences",
                format!(
                    "frame {i} is {:?}, expected {:?}",
                    f.borrow().dims(),
                    (height, width, 3)
                ),
            ));
        }
    }
    let grays = frames
        .iter()
        .map(|f| to_grayscale(f.borrow()))
        .collect::<Result<Vec<_>>>()?;

    let mut out = vec![0.0f32; height * width * SOD_CHANNELS];
    for (p, px) in out.chunks_exact_mut(SOD_CHANNELS).enumerate() {
        for (c, v) in px.iter_mut().enumerate() {
            *v = grays[c + 1].data()[p] - grays[c].data()[p];
        }
    }
    Ok(StackOfDifferences(Frame::from_vec(height, width, SOD_CHANNELS, out)?))
}

/// A bijection on `{0, ..., 5}` applied to the six motion frames.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Permutation([u8; MOTION_FRAME_COUNT]);

impl Permutation {
    pub const IDENTITY: Permutation = Permutation([0, 1, 2, 3, 4, 5]);
    pub const REVERSAL: Permutation = Permutation([5, 4, 3, 2, 1, 0]);

    pub fn new(order: [u8; MOTION_FRAME_COUNT]) -> Result<Self> {
        let mut seen = [false; MOTION_FRAME_COUNT];
        for &i in &order {
            let slot = seen.get_mut(i as usize).ok_or_else(|| {
                Error::Validation(format!("permutation entry {i} is out of range"))
            })?;
            if *slot {
                return Err(Error::Validation(format!(
                    "permutation {order:?} repeats {i}"
                )));
            }
            *slot = true;
        }
        Ok(Permutation(order))
    }

    pub fn as_array(&self) -> [u8; MOTION_FRAME_COUNT] {
        self.0
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = [0u8; MOTION_FRAME_COUNT];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p as usize] = i as u8;
        }
        Permutation(inv)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn is_reversal(&self) -> bool {
        *self == Self::REVERSAL
    }

    /// All 720 permutations in lexicographic order.
    pub fn all() -> Vec<Permutation> {
        use itertools::Itertools;
        (0..MOTION_FRAME_COUNT as u8)
            .permutations(MOTION_FRAME_COUNT)
            .map(|p| Permutation(p.try_into().expect("six entries")))
            .collect()
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl TryFrom<Vec<u8>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        let order: [u8; MOTION_FRAME_COUNT] = v.try_into().map_err(|v: Vec<u8>| {
            Error::Validation(format!("permutation has {} entries, expected 6", v.len()))
        })?;
        Permutation::new(order)
    }
}

impl From<Permutation> for Vec<u8> {
    fn from(p: Permutation) -> Vec<u8> {
        p.0.to_vec()
    }
}

/// `output[i] = frames[perm[i]]`.
pub fn apply_permutation<'a, T>(frames: &'a [T], perm: &Permutation) -> Result<Vec<&'a T>> {
    if frames.len() != MOTION_FRAME_COUNT {
        return Err(Error::Argument(format!(
            "permutation applies to {MOTION_FRAME_COUNT} frames, got {}",
            frames.len()
        )));
    }
    Ok(perm.0.iter().map(|&i| &frames[i as usize]).collect())
}
