//! Parameter tensors and their binary file format.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"HRTFNN1\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered list of network tensors (weight, bias, weight, bias, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn zeros_like(shapes: &[Vec<usize>]) -> Self {
        Self {
            tensors: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// Weights (even indices) uniform in `±√(6/fan_in)` with fan-in the
    /// product of all but the leading dimension; biases (odd indices) zero.
    pub fn init(shapes: &[Vec<usize>], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut t = Tensor::zeros(s);
                if i % 2 == 0 {
                    let fan_in: usize = s[1..].iter().product();
                    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                    for v in &mut t.data {
                        *v = T::lit(rng.gen_range(-bound..bound));
                    }
                }
                t
            })
            .collect();
        Self { tensors }
    }

    /// Zeroes tensor `i` and its bias `i + 1`.
    pub fn zero_layer(&mut self, i: usize) {
        for t in &mut self.tensors[i..=i + 1] {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape.clone()).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }

    /// `HRTFNN1\0`, u32 version, u32 tensor count, then per tensor
    /// u32 rank, u32 dims, little-endian f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            location: "model file".into(),
            message: m.into(),
        };
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("unexpected end of data"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = u32_at(take(4)?) as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = u32_at(take(4)?) as usize;
            let shape = (0..rank).map(|_| take(4).map(|b| u32_at(b) as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = take(n * 4)?
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            tensors.push(Tensor { shape, data });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let p = Self { tensors };
        if !p.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
