//! Batched layers over `N × C × H × W` buffers. Each forward returns the
//! cache its backward needs; weights live in a [`ParamSet`].

use crate::nn::params::{Grads, ParamId, ParamSet};
use crate::nn::real::{gemm, Real, Trans};

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
}

impl Conv2d {
    pub fn output_hw(in_hw: (usize, usize), kernel: usize, stride: usize, pad: usize) -> Option<(usize, usize)> {
        let dim = |d: usize| (d + 2 * pad).checked_sub(kernel).map(|x| x / stride + 1);
        Some((dim(in_hw.0)?, dim(in_hw.1)?))
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_hw.0 * self.out_hw.1
    }

    fn in_len(&self) -> usize {
        self.in_channels * self.in_hw.0 * self.in_hw.1
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_plane()
    }

    fn im2col<T: Real>(&self, input: &[T], cols: &mut [T]) {
        let (ih, iw) = (self.in_hw.0 as isize, self.in_hw.1 as isize);
        let (oh, ow) = self.out_hw;
        let k = self.kernel;
        let plane = oh * ow;
        for c in 0..self.in_channels {
            let channel = &input[c * (ih * iw) as usize..(c + 1) * (ih * iw) as usize];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * plane..][..plane];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let out_row = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= ih {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &channel[(iy * iw) as usize..((iy + 1) * iw) as usize];
                        for (ox, slot) in out_row.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *slot = if ix < 0 || ix >= iw { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], d_input: &mut [T]) {
        let (ih, iw) = (self.in_hw.0 as isize, self.in_hw.1 as isize);
        let (oh, ow) = self.out_hw;
        let k = self.kernel;
        let plane = oh * ow;
        for c in 0..self.in_channels {
            let channel = &mut d_input[c * (ih * iw) as usize..(c + 1) * (ih * iw) as usize];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * plane..][..plane];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= ih {
                            continue;
                        }
                        let dst = &mut channel[(iy * iw) as usize..((iy + 1) * iw) as usize];
                        for (ox, &g) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < iw {
                                dst[ix as usize] = dst[ix as usize] + g;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Returns the output and the unfolded input columns.
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, input: &[T], n: usize) -> (Vec<T>, Vec<T>) {
        let (patch, plane) = (self.patch(), self.out_plane());
        let w = params.value(self.weight);
        let b = params.value(self.bias);
        let mut cols = vec![T::zero(); n * patch * plane];
        let mut out = vec![T::zero(); n * self.out_len()];
        for s in 0..n {
            let x = &input[s * self.in_len()..(s + 1) * self.in_len()];
            let col = &mut cols[s * patch * plane..(s + 1) * patch * plane];
            self.im2col(x, col);
            let y = &mut out[s * self.out_len()..(s + 1) * self.out_len()];
            for (o, chunk) in y.chunks_exact_mut(plane).enumerate() {
                chunk.fill(b[o]);
            }
            gemm(Trans::No, Trans::No, self.out_channels, plane, patch, T::one(), w, col, T::one(), y);
        }
        (out, cols)
    }

    /// Accumulates weight gradients; returns the input gradient when asked.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cols: &[T],
        d_out: &[T],
        n: usize,
        grads: &mut Grads<T>,
        input_grad: bool,
    ) -> Option<Vec<T>> {
        let (patch, plane) = (self.patch(), self.out_plane());
        for s in 0..n {
            let dy = &d_out[s * self.out_len()..(s + 1) * self.out_len()];
            let col = &cols[s * patch * plane..(s + 1) * patch * plane];
            gemm(Trans::No, Trans::Yes, self.out_channels, patch, plane, T::one(), dy, col, T::one(), grads.get_mut(self.weight));
            let db = grads.get_mut(self.bias);
            for (o, chunk) in dy.chunks_exact(plane).enumerate() {
                db[o] = chunk.iter().fold(db[o], |acc, &g| acc + g);
            }
        }
        if !input_grad {
            return None;
        }
        let w = params.value(self.weight);
        let mut d_input = vec![T::zero(); n * self.in_len()];
        let mut d_cols = vec![T::zero(); patch * plane];
        for s in 0..n {
            let dy = &d_out[s * self.out_len()..(s + 1) * self.out_len()];
            gemm(Trans::Yes, Trans::No, patch, plane, self.out_channels, T::one(), w, dy, T::zero(), &mut d_cols);
            self.col2im(&d_cols, &mut d_input[s * self.in_len()..(s + 1) * self.in_len()]);
        }
        Some(d_input)
    }
}

#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub channels: usize,
    pub size: usize,
    pub stride: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
}

impl MaxPool2d {
    pub fn output_hw(in_hw: (usize, usize), size: usize, stride: usize) -> Option<(usize, usize)> {
        let dim = |d: usize| d.checked_sub(size).map(|x| x / stride + 1);
        Some((dim(in_hw.0)?, dim(in_hw.1)?))
    }

    pub fn out_len(&self) -> usize {
        self.channels * self.out_hw.0 * self.out_hw.1
    }

    /// Returns pooled values and, per output, the flat input index that won.
    /// Ties go to the first position in row-major window order.
    pub fn forward<T: Real>(&self, input: &[T], n: usize) -> (Vec<T>, Vec<u32>) {
        let (ih, iw) = self.in_hw;
        let (oh, ow) = self.out_hw;
        let mut out = Vec::with_capacity(n * self.out_len());
        let mut arg = Vec::with_capacity(n * self.out_len());
        for plane_idx in 0..n * self.channels {
            let base = plane_idx * ih * iw;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * self.stride * iw + ox * self.stride;
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let i = base + (oy * self.stride + dy) * iw + ox * self.stride + dx;
                            if input[i] > input[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(input[best]);
                    arg.push(best as u32);
                }
            }
        }
        (out, arg)
    }

    pub fn backward<T: Real>(&self, arg: &[u32], d_out: &[T], n: usize) -> Vec<T> {
        let mut d_input = vec![T::zero(); n * self.channels * self.in_hw.0 * self.in_hw.1];
        for (&i, &g) in arg.iter().zip(d_out) {
            d_input[i as usize] = d_input[i as usize] + g;
        }
        d_input
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    /// `y = x Wᵀ + b` with `W` stored `outputs × inputs`.
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, x: &[T], n: usize) -> Vec<T> {
        let b = params.value(self.bias);
        let mut y: Vec<T> = (0..n).flat_map(|_| b.iter().copied()).collect();
        gemm(Trans::No, Trans::Yes, n, self.outputs, self.inputs, T::one(), x, params.value(self.weight), T::one(), &mut y);
        y
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &[T],
        d_y: &[T],
        n: usize,
        grads: &mut Grads<T>,
        input_grad: bool,
    ) -> Option<Vec<T>> {
        gemm(Trans::Yes, Trans::No, self.outputs, self.inputs, n, T::one(), d_y, x, T::one(), grads.get_mut(self.weight));
        let db = grads.get_mut(self.bias);
        for row in d_y.chunks_exact(self.outputs) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        input_grad.then(|| {
            let mut d_x = vec![T::zero(); n * self.inputs];
            gemm(Trans::No, Trans::No, n, self.inputs, self.outputs, T::one(), d_y, params.value(self.weight), T::zero(), &mut d_x);
            d_x
        })
    }
}

pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose forward output was clipped by the ReLU.
pub fn relu_backward_in_place<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}
