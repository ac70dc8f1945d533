//! Convolution, dense and activation primitives with their gradients.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// 1-D convolution geometry; weights are `[cout][cin][kernel]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.cout, self.cin, self.kernel]
    }

    /// Output positions `t` whose tap `j` reads inside `[0, len)`.
    fn taps(&self, j: usize, len: usize, out: usize) -> std::ops::Range<usize> {
        let (s, p) = (self.stride as i64, self.pad as i64);
        let j = j as i64;
        let lo = (p - j).max(0);
        let lo = (lo + s - 1) / s;
        let hi = (len as i64 - 1 + p - j).div_euclid(s);
        let hi = hi.min(out as i64 - 1);
        if hi < lo {
            0..0
        } else {
            lo as usize..hi as usize + 1
        }
    }

    /// `x` is `[cin][len]`; returns `[cout][out_len]`.
    pub fn forward<T: Real>(&self, w: &[T], b: &[T], x: &[T], len: usize) -> Vec<T> {
        let lo = self.out_len(len);
        let mut y = vec![T::zero(); self.cout * lo];
        for o in 0..self.cout {
            let yo = &mut y[o * lo..(o + 1) * lo];
            yo.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..self.cin {
                let xc = &x[c * len..(c + 1) * len];
                for j in 0..self.kernel {
                    let wv = w[(o * self.cin + c) * self.kernel + j];
                    let r = self.taps(j, len, lo);
                    if self.stride == 1 {
                        let off = r.start + j - self.pad;
                        for (yv, &xv) in yo[r.clone()].iter_mut().zip(&xc[off..off + r.len()]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for t in r {
                            yo[t] += wv * xc[t * self.stride + j - self.pad];
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns `dL/dx`.
    pub fn backward<T: Real>(&self, w: &[T], x: &[T], len: usize, dy: &[T], dw: &mut [T], db: &mut [T], need_dx: bool) -> Vec<T> {
        let lo = self.out_len(len);
        let mut dx = if need_dx { vec![T::zero(); self.cin * len] } else { Vec::new() };
        for o in 0..self.cout {
            let dyo = &dy[o * lo..(o + 1) * lo];
            db[o] += dyo.iter().fold(T::zero(), |a, &v| a + v);
            for c in 0..self.cin {
                let xc = &x[c * len..(c + 1) * len];
                for j in 0..self.kernel {
                    let wi = (o * self.cin + c) * self.kernel + j;
                    let wv = w[wi];
                    let r = self.taps(j, len, lo);
                    if self.stride == 1 {
                        let off = r.start + j - self.pad;
                        let n = r.len();
                        let mut acc = T::zero();
                        for (&g, &xv) in dyo[r.clone()].iter().zip(&xc[off..off + n]) {
                            acc += g * xv;
                        }
                        dw[wi] += acc;
                        if need_dx {
                            let dxc = &mut dx[c * len + off..c * len + off + n];
                            for (d, &g) in dxc.iter_mut().zip(&dyo[r]) {
                                *d += wv * g;
                            }
                        }
                    } else {
                        let mut acc = T::zero();
                        for t in r {
                            let xi = t * self.stride + j - self.pad;
                            acc += dyo[t] * xc[xi];
                            if need_dx {
                                dx[c * len + xi] += wv * dyo[t];
                            }
                        }
                        dw[wi] += acc;
                    }
                }
            }
        }
        dx
    }
}

/// Dense layer with weights `[out][in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.output, self.input]
    }

    pub fn forward<T: Real>(&self, w: &[T], b: &[T], x: &[T]) -> Vec<T> {
        (0..self.output)
            .map(|o| {
                w[o * self.input..(o + 1) * self.input]
                    .iter()
                    .zip(x)
                    .fold(b[o], |a, (&wv, &xv)| a + wv * xv)
            })
            .collect()
    }

    /// Column `i` of `W` plus bias: the response to a one-hot input.
    pub fn forward_one_hot<T: Real>(&self, w: &[T], b: &[T], i: usize) -> Vec<T> {
        (0..self.output).map(|o| b[o] + w[o * self.input + i]).collect()
    }

    pub fn backward<T: Real>(&self, w: &[T], x: &[T], dy: &[T], dw: &mut [T], db: &mut [T], need_dx: bool) -> Vec<T> {
        let mut dx = if need_dx { vec![T::zero(); self.input] } else { Vec::new() };
        for o in 0..self.output {
            let g = dy[o];
            db[o] += g;
            if g == T::zero() {
                continue;
            }
            let row = o * self.input..(o + 1) * self.input;
            for (d, &xv) in dw[row.clone()].iter_mut().zip(x) {
                *d += g * xv;
            }
            if need_dx {
                for (d, &wv) in dx.iter_mut().zip(&w[row]) {
                    *d += g * wv;
                }
            }
        }
        dx
    }

    pub fn backward_one_hot<T: Real>(&self, dy: &[T], i: usize, dw: &mut [T], db: &mut [T]) {
        for o in 0..self.output {
            db[o] += dy[o];
            dw[o * self.input + i] += dy[o];
        }
    }
}

pub fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes the gradient where the activation output is not positive.
pub fn relu_backward<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn loss_mse<T: Real>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let s = pred
        .iter()
        .zip(target)
        .fold(T::zero(), |a, (&p, &t)| a + (p - t) * (p - t));
    Ok(s / T::from_usize_lossy(pred.len()))
}

/// Index of the single hot entry of a one-hot vector.
pub fn hot_index<T: Real>(v: &[T]) -> Result<usize> {
    let hot: Vec<usize> = v
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != T::zero())
        .map(|(i, _)| i)
        .collect();
    match hot.as_slice() {
        [i] if v[*i] == T::one() => Ok(*i),
        _ => Err(Error::Invalid("expected a one-hot vector".into())),
    }
}
