//! Onset-SH predictor: anthropometric and ear embeddings, fusion, conv
//! decoder and a dense output map.

use serde::{Deserialize, Serialize};

use super::decoder::{ConvStack, StackCache};
use super::layers::{hot_index, relu, relu_backward, Linear};
use super::magnitude::{pair_mut, split_grads};
use super::tensor::Params;
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnsetArch {
    pub anthro_dim: usize,
    pub anthro_embed: usize,
    pub ear_embed: usize,
    pub fusion: usize,
    pub kernel: usize,
    pub decoder_channels: Vec<usize>,
    pub output_len: usize,
}

impl Default for OnsetArch {
    fn default() -> Self {
        Self {
            anthro_dim: 13,
            anthro_embed: 32,
            ear_embed: 16,
            fusion: 256,
            kernel: 3,
            decoder_channels: vec![4, 16, 16, 8, 4, 1],
            output_len: 36,
        }
    }
}

impl OnsetArch {
    pub fn decoder_len(&self) -> usize {
        self.fusion / self.decoder_channels[0].max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("onset network: {m}")));
        if self.kernel % 2 == 0 {
            return bad("kernel must be odd");
        }
        if self.decoder_channels.len() < 2 || *self.decoder_channels.last().unwrap() != 1 {
            return bad("decoder must end in one channel");
        }
        if self.fusion % self.decoder_channels[0] != 0 {
            return bad("fusion width is not divisible by the decoder input channels");
        }
        if self.output_len == 0 || self.anthro_dim == 0 {
            return bad("empty input or output");
        }
        Ok(())
    }

    pub(crate) fn decoder(&self) -> ConvStack {
        let strides = vec![1; self.decoder_channels.len() - 1];
        ConvStack::new(&self.decoder_channels, &strides, self.kernel, false)
    }

    fn linears(&self) -> (Linear, Linear, Linear, Linear) {
        (
            Linear { input: self.anthro_dim, output: self.anthro_embed },
            Linear { input: 2, output: self.ear_embed },
            Linear { input: self.anthro_embed + self.ear_embed, output: self.fusion },
            Linear { input: self.decoder_len(), output: self.output_len },
        )
    }

    fn decoder_layers(&self) -> Vec<usize> {
        (0..self.decoder_channels.len() - 1).map(|i| 6 + 2 * i).collect()
    }

    fn output_layer(&self) -> usize {
        6 + 2 * (self.decoder_channels.len() - 1)
    }

    /// Anthro, ear and fusion dense layers, decoder convs, output dense layer.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let (a, e, f, o) = self.linears();
        let mut s = Vec::new();
        for l in [a, e, f] {
            s.push(l.weight_shape());
            s.push(vec![l.output]);
        }
        for c in &self.decoder().convs {
            s.push(c.weight_shape());
            s.push(vec![c.cout]);
        }
        s.push(o.weight_shape());
        s.push(vec![o.output]);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnsetNetInput<T> {
    pub anthro: Vec<T>,
    pub ear_onehot: Vec<T>,
}

/// Training rows: `(anthro, ear index) → target coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetData<T> {
    pub inputs: Vec<(Vec<T>, usize)>,
    pub targets: Vec<Vec<T>>,
}

struct Cache<T> {
    anthro_emb: Vec<T>,
    ear_emb: Vec<T>,
    decoder: StackCache<T>,
    output: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct OnsetNet {
    arch: OnsetArch,
}

impl OnsetNet {
    pub fn new(arch: OnsetArch) -> Result<Self> {
        arch.validate()?;
        Ok(Self { arch })
    }

    pub fn arch(&self) -> &OnsetArch {
        &self.arch
    }

    pub fn init(&self, seed: u64) -> Params<f64> {
        Params::init(&self.arch.shapes(), seed)
    }

    /// Index of the final layer's weight tensor (its bias follows).
    pub fn output_layer(&self) -> usize {
        self.arch.output_layer()
    }

    fn check_params<T: Real>(&self, params: &Params<T>) -> Result<()> {
        let shapes = self.arch.shapes();
        if params.tensors.len() != shapes.len() || params.tensors.iter().zip(&shapes).any(|(t, s)| &t.shape != s) {
            return Err(Error::Invalid("parameter shapes do not match the onset network".into()));
        }
        Ok(())
    }

    fn run<T: Real>(&self, p: &Params<T>, anthro: &[T], ear: usize) -> Result<Cache<T>> {
        let a = &self.arch;
        if anthro.len() != a.anthro_dim || ear > 1 {
            return Err(Error::DimensionMismatch {
                expected: a.anthro_dim,
                got: anthro.len(),
            });
        }
        let t = &p.tensors;
        let (la, le, lf, lo) = a.linears();
        let mut anthro_emb = la.forward(&t[0].data, &t[1].data, anthro);
        relu(&mut anthro_emb);
        let mut ear_emb = le.forward_one_hot(&t[2].data, &t[3].data, ear);
        relu(&mut ear_emb);
        let cat: Vec<T> = anthro_emb.iter().chain(&ear_emb).copied().collect();
        let mut h = lf.forward(&t[4].data, &t[5].data, &cat);
        relu(&mut h);
        let dl = a.decoder_layers();
        let ws: Vec<&[T]> = dl.iter().map(|&i| t[i].data.as_slice()).collect();
        let bs: Vec<&[T]> = dl.iter().map(|&i| t[i + 1].data.as_slice()).collect();
        let decoder = a.decoder().forward(&ws, &bs, h, a.decoder_len());
        let k = a.output_layer();
        let output = lo.forward(&t[k].data, &t[k + 1].data, &decoder.output);
        Ok(Cache {
            anthro_emb,
            ear_emb,
            decoder,
            output,
        })
    }

    pub fn forward<T: Real>(&self, params: &Params<T>, input: &OnsetNetInput<T>) -> Result<Vec<T>> {
        self.check_params(params)?;
        if input.ear_onehot.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: input.ear_onehot.len(),
            });
        }
        let ear = hot_index(&input.ear_onehot)?;
        Ok(self.run(params, &input.anthro, ear)?.output)
    }

    pub(crate) fn predict<T: Real>(&self, params: &Params<T>, anthro: &[T], ear: usize) -> Result<Vec<T>> {
        self.check_params(params)?;
        Ok(self.run(params, anthro, ear)?.output)
    }

    fn batch<T: Real>(&self, p: &Params<T>, data: &OnsetData<T>, rows: &[usize], want_grad: bool) -> Result<(T, Option<Params<T>>)> {
        self.check_params(p)?;
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let a = &self.arch;
        let t = &p.tensors;
        let (la, le, lf, lo) = a.linears();
        let dl = a.decoder_layers();
        let dec = a.decoder();
        let dec_w: Vec<&[T]> = dl.iter().map(|&i| t[i].data.as_slice()).collect();
        let k = a.output_layer();
        let n = a.output_len;
        let scale = T::lit(2.0) / T::from_usize_lossy(rows.len() * n);
        let mut loss = T::zero();
        let mut grads = if want_grad { Some(Params::<T>::zeros_like(&a.shapes())) } else { None };
        for &r in rows {
            let (anthro, ear) = &data.inputs[r];
            let c = self.run(p, anthro, *ear)?;
            let target = &data.targets[r];
            if target.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: target.len() });
            }
            let mut d_out = Vec::with_capacity(n);
            for (&y, &tv) in c.output.iter().zip(target) {
                let d = y - tv;
                loss += d * d;
                d_out.push(scale * d);
            }
            let Some(gr) = grads.as_mut() else { continue };
            let d_dec = {
                let (w, b) = pair_mut(gr, k);
                lo.backward(&t[k].data, &c.decoder.output, &d_out, w, b, true)
            };
            let mut dh = {
                let (mut dws, mut dbs) = split_grads(gr, &dl);
                dec.backward(&dec_w, &c.decoder, d_dec, &mut dws, &mut dbs, true)
            };
            relu_backward(&c.decoder.inputs[0], &mut dh);
            let cat: Vec<T> = c.anthro_emb.iter().chain(&c.ear_emb).copied().collect();
            let dcat = {
                let (w, b) = pair_mut(gr, 4);
                lf.backward(&t[4].data, &cat, &dh, w, b, true)
            };
            let (mut da, mut de) = (dcat[..a.anthro_embed].to_vec(), dcat[a.anthro_embed..].to_vec());
            relu_backward(&c.anthro_emb, &mut da);
            relu_backward(&c.ear_emb, &mut de);
            {
                let (w, b) = pair_mut(gr, 0);
                la.backward(&t[0].data, anthro, &da, w, b, false);
            }
            let (w, b) = pair_mut(gr, 2);
            le.backward_one_hot(&de, *ear, w, b);
        }
        Ok((loss / T::from_usize_lossy(rows.len() * n), grads))
    }
}

pub struct OnsetProblem<'a, T> {
    pub net: &'a OnsetNet,
    pub data: &'a OnsetData<T>,
}

impl<T: Real> Model<T> for OnsetProblem<'_, T> {
    fn shapes(&self) -> Vec<Vec<usize>> {
        self.net.arch.shapes()
    }

    fn len(&self) -> usize {
        self.data.inputs.len()
    }

    fn loss_and_grad(&self, params: &Params<T>, rows: &[usize]) -> Result<(T, Params<T>)> {
        let (l, g) = self.net.batch(params, self.data, rows, true)?;
        Ok((l, g.expect("gradient requested")))
    }

    fn loss(&self, params: &Params<T>, rows: &[usize]) -> Result<T> {
        Ok(self.net.batch(params, self.data, rows, false)?.0)
    }
}
