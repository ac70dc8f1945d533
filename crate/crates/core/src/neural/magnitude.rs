//! Magnitude-SH predictor: ear SCH encoder, condition embeddings, fusion and
//! conv decoder.

use serde::{Deserialize, Serialize};

use super::decoder::{ConvStack, StackCache};
use super::layers::{hot_index, relu, relu_backward, Linear};
use super::tensor::Params;
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Layer plan of the magnitude network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MagnitudeArch {
    /// SCH coefficient count per coordinate channel.
    pub input_len: usize,
    pub encoder_channels: Vec<usize>,
    pub encoder_strides: Vec<usize>,
    pub kernel: usize,
    pub anthro_dim: usize,
    pub anthro_embed: usize,
    pub freq_dim: usize,
    pub freq_embed: usize,
    pub ear_embed: usize,
    pub fusion: usize,
    pub decoder_channels: Vec<usize>,
}

impl Default for MagnitudeArch {
    fn default() -> Self {
        Self {
            input_len: 441,
            encoder_channels: vec![3, 8, 16, 32, 32, 64, 64],
            encoder_strides: vec![2, 2, 2, 2, 2, 1],
            kernel: 3,
            anthro_dim: 13,
            anthro_embed: 32,
            freq_dim: 41,
            freq_embed: 16,
            ear_embed: 16,
            fusion: 256,
            decoder_channels: vec![4, 16, 16, 8, 4, 1],
        }
    }
}

impl MagnitudeArch {
    pub fn embed_dim(&self) -> usize {
        *self.encoder_channels.last().unwrap_or(&0)
    }

    pub fn concat_dim(&self) -> usize {
        self.embed_dim() + self.anthro_embed + self.freq_embed + self.ear_embed
    }

    pub fn decoder_len(&self) -> usize {
        self.fusion / self.decoder_channels[0].max(1)
    }

    pub fn output_len(&self) -> usize {
        self.decoder_len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("magnitude network: {m}")));
        if self.encoder_channels.len() < 2 || self.encoder_strides.len() != self.encoder_channels.len() - 1 {
            return bad("encoder needs one stride per layer".into());
        }
        if self.encoder_channels[0] != 3 {
            return bad("encoder input must have 3 channels (x, y, z)".into());
        }
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return bad("kernel must be odd".into());
        }
        if self.decoder_channels.len() < 2 || *self.decoder_channels.last().unwrap() != 1 {
            return bad("decoder must end in one channel".into());
        }
        if self.fusion % self.decoder_channels[0] != 0 {
            return bad(format!(
                "fusion width {} is not divisible by {} decoder channels",
                self.fusion, self.decoder_channels[0]
            ));
        }
        if self.encoder().out_len(self.input_len) == 0 {
            return bad("input too short for the encoder".into());
        }
        Ok(())
    }

    pub(crate) fn encoder(&self) -> ConvStack {
        ConvStack::new(&self.encoder_channels, &self.encoder_strides, self.kernel, true)
    }

    pub(crate) fn decoder(&self) -> ConvStack {
        let strides = vec![1; self.decoder_channels.len() - 1];
        ConvStack::new(&self.decoder_channels, &strides, self.kernel, false)
    }

    fn layout(&self) -> Layout {
        let ne = self.encoder_channels.len() - 1;
        let nd = self.decoder_channels.len() - 1;
        let anthro = 2 * ne;
        Layout {
            encoder: (0..ne).map(|i| 2 * i).collect(),
            anthro,
            freq: anthro + 2,
            ear: anthro + 4,
            fusion: anthro + 6,
            decoder: (0..nd).map(|i| anthro + 8 + 2 * i).collect(),
        }
    }

    fn linears(&self) -> (Linear, Linear, Linear, Linear) {
        (
            Linear { input: self.anthro_dim, output: self.anthro_embed },
            Linear { input: self.freq_dim, output: self.freq_embed },
            Linear { input: 2, output: self.ear_embed },
            Linear { input: self.concat_dim(), output: self.fusion },
        )
    }

    /// Tensor shapes in file order: encoder convs, anthro, freq, ear and
    /// fusion dense layers, decoder convs; each as weight then bias.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut s = Vec::new();
        for c in &self.encoder().convs {
            s.push(c.weight_shape());
            s.push(vec![c.cout]);
        }
        let (a, f, e, fu) = self.linears();
        for l in [a, f, e, fu] {
            s.push(l.weight_shape());
            s.push(vec![l.output]);
        }
        for c in &self.decoder().convs {
            s.push(c.weight_shape());
            s.push(vec![c.cout]);
        }
        s
    }
}

/// Weight-tensor indices (bias = index + 1).
struct Layout {
    encoder: Vec<usize>,
    anthro: usize,
    freq: usize,
    ear: usize,
    fusion: usize,
    decoder: Vec<usize>,
}

/// One network input.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeNetInput<T> {
    /// Channel-major `[x, y, z][coefficient]`.
    pub sch_xyz: Vec<T>,
    pub anthro: Vec<T>,
    pub freq_onehot: Vec<T>,
    pub ear_onehot: Vec<T>,
}

/// Inputs shared by every frequency of one (subject, ear).
#[derive(Debug, Clone, PartialEq)]
pub struct EarInput<T> {
    /// Channel-major `[x, y, z][coefficient]`.
    pub sch_xyz: Vec<T>,
    pub anthro: Vec<T>,
    pub ear: usize,
}

/// Training rows: `(group, frequency index) → target coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeData<T> {
    pub groups: Vec<EarInput<T>>,
    pub rows: Vec<(usize, usize)>,
    pub targets: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
struct GroupCache<T> {
    encoder: StackCache<T>,
    pooled: Vec<T>,
    anthro_emb: Vec<T>,
    ear_emb: Vec<T>,
    /// Fusion pre-activation contribution of everything but the frequency.
    partial: Vec<T>,
}

#[derive(Debug, Clone)]
struct FreqCache<T> {
    emb: Vec<T>,
    partial: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct MagnitudeNet {
    arch: MagnitudeArch,
}

fn dense_block<T: Real>(w: &[T], row_len: usize, rows: usize, offset: usize, x: &[T], out: &mut [T]) {
    for (o, acc) in out.iter_mut().enumerate().take(rows) {
        let r = &w[o * row_len + offset..o * row_len + offset + x.len()];
        *acc += r.iter().zip(x).fold(T::zero(), |a, (&wv, &xv)| a + wv * xv);
    }
}

fn dense_block_t<T: Real>(w: &[T], row_len: usize, offset: usize, width: usize, dy: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); width];
    for (o, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        for (d, &wv) in dx.iter_mut().zip(&w[o * row_len + offset..o * row_len + offset + width]) {
            *d += g * wv;
        }
    }
    dx
}

fn outer_block<T: Real>(dw: &mut [T], row_len: usize, offset: usize, dy: &[T], x: &[T]) {
    for (o, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        for (d, &xv) in dw[o * row_len + offset..o * row_len + offset + x.len()].iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

impl MagnitudeNet {
    pub fn new(arch: MagnitudeArch) -> Result<Self> {
        arch.validate()?;
        Ok(Self { arch })
    }

    pub fn arch(&self) -> &MagnitudeArch {
        &self.arch
    }

    pub fn init(&self, seed: u64) -> Params<f64> {
        Params::init(&self.arch.shapes(), seed)
    }

    /// Index of the final layer's weight tensor (its bias follows).
    pub fn output_layer(&self) -> usize {
        *self.arch.layout().decoder.last().expect("non-empty decoder")
    }

    fn check_params<T: Real>(&self, params: &Params<T>) -> Result<()> {
        let shapes = self.arch.shapes();
        if params.tensors.len() != shapes.len() || params.tensors.iter().zip(&shapes).any(|(t, s)| &t.shape != s) {
            return Err(Error::Invalid("parameter shapes do not match the magnitude network".into()));
        }
        Ok(())
    }

    fn group_forward<T: Real>(&self, p: &Params<T>, g: &EarInput<T>) -> Result<GroupCache<T>> {
        let a = &self.arch;
        if g.sch_xyz.len() != 3 * a.input_len || g.anthro.len() != a.anthro_dim || g.ear > 1 {
            return Err(Error::DimensionMismatch {
                expected: 3 * a.input_len + a.anthro_dim,
                got: g.sch_xyz.len() + g.anthro.len(),
            });
        }
        let l = a.layout();
        let t = &p.tensors;
        let enc = a.encoder();
        let ws: Vec<&[T]> = l.encoder.iter().map(|&i| t[i].data.as_slice()).collect();
        let bs: Vec<&[T]> = l.encoder.iter().map(|&i| t[i + 1].data.as_slice()).collect();
        let encoder = enc.forward(&ws, &bs, g.sch_xyz.clone(), a.input_len);
        let n = encoder.out_len;
        let pooled: Vec<T> = (0..a.embed_dim())
            .map(|c| encoder.output[c * n..(c + 1) * n].iter().fold(T::zero(), |s, &v| s + v) / T::from_usize_lossy(n))
            .collect();
        let (la, _, le, _) = a.linears();
        let mut anthro_emb = la.forward(&t[l.anthro].data, &t[l.anthro + 1].data, &g.anthro);
        relu(&mut anthro_emb);
        let mut ear_emb = le.forward_one_hot(&t[l.ear].data, &t[l.ear + 1].data, g.ear);
        relu(&mut ear_emb);
        let cd = a.concat_dim();
        let fw = &t[l.fusion].data;
        let mut partial = t[l.fusion + 1].data.clone();
        dense_block(fw, cd, a.fusion, 0, &pooled, &mut partial);
        dense_block(fw, cd, a.fusion, a.embed_dim(), &anthro_emb, &mut partial);
        dense_block(fw, cd, a.fusion, a.embed_dim() + a.anthro_embed + a.freq_embed, &ear_emb, &mut partial);
        Ok(GroupCache {
            encoder,
            pooled,
            anthro_emb,
            ear_emb,
            partial,
        })
    }

    fn freq_forward<T: Real>(&self, p: &Params<T>, f: usize) -> FreqCache<T> {
        let a = &self.arch;
        let l = a.layout();
        let t = &p.tensors;
        let (_, lf, _, _) = a.linears();
        let mut emb = lf.forward_one_hot(&t[l.freq].data, &t[l.freq + 1].data, f);
        relu(&mut emb);
        let mut partial = vec![T::zero(); a.fusion];
        dense_block(&t[l.fusion].data, a.concat_dim(), a.fusion, a.embed_dim() + a.anthro_embed, &emb, &mut partial);
        FreqCache { emb, partial }
    }

    fn decode<T: Real>(&self, p: &Params<T>, g: &GroupCache<T>, f: &FreqCache<T>) -> StackCache<T> {
        let a = &self.arch;
        let l = a.layout();
        let t = &p.tensors;
        let mut h: Vec<T> = g.partial.iter().zip(&f.partial).map(|(&x, &y)| x + y).collect();
        relu(&mut h);
        let ws: Vec<&[T]> = l.decoder.iter().map(|&i| t[i].data.as_slice()).collect();
        let bs: Vec<&[T]> = l.decoder.iter().map(|&i| t[i + 1].data.as_slice()).collect();
        a.decoder().forward(&ws, &bs, h, a.decoder_len())
    }

    /// Predicted SH coefficients for one input.
    pub fn forward<T: Real>(&self, params: &Params<T>, input: &MagnitudeNetInput<T>) -> Result<Vec<T>> {
        self.check_params(params)?;
        if input.freq_onehot.len() != self.arch.freq_dim || input.ear_onehot.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: self.arch.freq_dim + 2,
                got: input.freq_onehot.len() + input.ear_onehot.len(),
            });
        }
        let f = hot_index(&input.freq_onehot)?;
        let ear = hot_index(&input.ear_onehot)?;
        let g = EarInput {
            sch_xyz: input.sch_xyz.clone(),
            anthro: input.anthro.clone(),
            ear,
        };
        let gc = self.group_forward(params, &g)?;
        Ok(self.decode(params, &gc, &self.freq_forward(params, f)).output)
    }

    /// Predictions for every frequency of one (subject, ear).
    pub fn predict_all<T: Real>(&self, params: &Params<T>, group: &EarInput<T>) -> Result<Vec<Vec<T>>> {
        self.check_params(params)?;
        let gc = self.group_forward(params, group)?;
        Ok((0..self.arch.freq_dim)
            .map(|f| self.decode(params, &gc, &self.freq_forward(params, f)).output)
            .collect())
    }

    fn batch<T: Real>(&self, p: &Params<T>, data: &MagnitudeData<T>, rows: &[usize], want_grad: bool) -> Result<(T, Option<Params<T>>)> {
        self.check_params(p)?;
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let a = &self.arch;
        let l = a.layout();
        let out_len = a.output_len();
        // unique groups and frequencies in first-appearance order
        let mut group_slot = vec![usize::MAX; data.groups.len()];
        let mut groups = Vec::new();
        let mut freq_slot = vec![usize::MAX; a.freq_dim];
        let mut freqs = Vec::new();
        for &r in rows {
            let (g, f) = data.rows[r];
            if group_slot[g] == usize::MAX {
                group_slot[g] = groups.len();
                groups.push(g);
            }
            if freq_slot[f] == usize::MAX {
                freq_slot[f] = freqs.len();
                freqs.push(f);
            }
        }
        let gcs = groups.iter().map(|&g| self.group_forward(p, &data.groups[g])).collect::<Result<Vec<_>>>()?;
        let fcs: Vec<FreqCache<T>> = freqs.iter().map(|&f| self.freq_forward(p, f)).collect();
        let scale = T::lit(2.0) / T::from_usize_lossy(rows.len() * out_len);
        let mut loss = T::zero();
        let mut grads = if want_grad { Some(Params::<T>::zeros_like(&a.shapes())) } else { None };
        let mut d_group = vec![vec![T::zero(); a.fusion]; groups.len()];
        let mut d_freq = vec![vec![T::zero(); a.fusion]; freqs.len()];
        let dec = a.decoder();
        let dec_w: Vec<&[T]> = l.decoder.iter().map(|&i| p.tensors[i].data.as_slice()).collect();
        for &r in rows {
            let (g, f) = data.rows[r];
            let (gs, fs) = (group_slot[g], freq_slot[f]);
            let cache = self.decode(p, &gcs[gs], &fcs[fs]);
            let target = &data.targets[r];
            if target.len() != out_len {
                return Err(Error::DimensionMismatch {
                    expected: out_len,
                    got: target.len(),
                });
            }
            let mut d_out = Vec::with_capacity(out_len);
            let mut sq = T::zero();
            for (&y, &t) in cache.output.iter().zip(target) {
                let d = y - t;
                sq += d * d;
                d_out.push(scale * d);
            }
            loss += sq;
            if let Some(gr) = grads.as_mut() {
                let (dws, dbs) = split_grads(gr, &l.decoder);
                let mut dws = dws;
                let mut dbs = dbs;
                let mut dh = dec.backward(&dec_w, &cache, d_out, &mut dws, &mut dbs, true);
                relu_backward(&cache.inputs[0], &mut dh);
                for (a, &b) in d_group[gs].iter_mut().zip(&dh) {
                    *a += b;
                }
                for (a, &b) in d_freq[fs].iter_mut().zip(&dh) {
                    *a += b;
                }
            }
        }
        let loss = loss / T::from_usize_lossy(rows.len() * out_len);
        let Some(mut gr) = grads else {
            return Ok((loss, None));
        };
        let t = &p.tensors;
        let cd = a.concat_dim();
        let (la, lf, le, _) = a.linears();
        let fw = &t[l.fusion].data;
        let off_anthro = a.embed_dim();
        let off_freq = off_anthro + a.anthro_embed;
        let off_ear = off_freq + a.freq_embed;
        for (fs, &f) in freqs.iter().enumerate() {
            let dz = &d_freq[fs];
            outer_block(&mut gr.tensors[l.fusion].data, cd, off_freq, dz, &fcs[fs].emb);
            let mut de = dense_block_t(fw, cd, off_freq, a.freq_embed, dz);
            relu_backward(&fcs[fs].emb, &mut de);
            let (w_part, b_part) = pair_mut(&mut gr, l.freq);
            lf.backward_one_hot(&de, f, w_part, b_part);
        }
        let enc = a.encoder();
        let enc_w: Vec<&[T]> = l.encoder.iter().map(|&i| t[i].data.as_slice()).collect();
        for (gs, &g) in groups.iter().enumerate() {
            let dz = &d_group[gs];
            let gc = &gcs[gs];
            {
                let b = &mut gr.tensors[l.fusion + 1].data;
                for (x, &y) in b.iter_mut().zip(dz) {
                    *x += y;
                }
            }
            let fwg = &mut gr.tensors[l.fusion].data;
            outer_block(fwg, cd, 0, dz, &gc.pooled);
            outer_block(fwg, cd, off_anthro, dz, &gc.anthro_emb);
            outer_block(fwg, cd, off_ear, dz, &gc.ear_emb);
            let mut da = dense_block_t(fw, cd, off_anthro, a.anthro_embed, dz);
            relu_backward(&gc.anthro_emb, &mut da);
            {
                let (w_part, b_part) = pair_mut(&mut gr, l.anthro);
                la.backward(&t[l.anthro].data, &data.groups[g].anthro, &da, w_part, b_part, false);
            }
            let mut dr = dense_block_t(fw, cd, off_ear, a.ear_embed, dz);
            relu_backward(&gc.ear_emb, &mut dr);
            {
                let (w_part, b_part) = pair_mut(&mut gr, l.ear);
                le.backward_one_hot(&dr, data.groups[g].ear, w_part, b_part);
            }
            let dp = dense_block_t(fw, cd, 0, a.embed_dim(), dz);
            let n = gc.encoder.out_len;
            let inv = T::one() / T::from_usize_lossy(n);
            let mut d_last = vec![T::zero(); a.embed_dim() * n];
            for c in 0..a.embed_dim() {
                for v in &mut d_last[c * n..(c + 1) * n] {
                    *v = dp[c] * inv;
                }
            }
            let (mut dws, mut dbs) = split_grads(&mut gr, &l.encoder);
            enc.backward(&enc_w, &gc.encoder, d_last, &mut dws, &mut dbs, false);
        }
        Ok((loss, Some(gr)))
    }
}

/// Disjoint mutable views of the weight/bias gradients of `layers`.
pub(crate) fn split_grads<'a, T>(g: &'a mut Params<T>, layers: &[usize]) -> (Vec<&'a mut [T]>, Vec<&'a mut [T]>) {
    let mut all: Vec<Option<&'a mut [T]>> = g.tensors.iter_mut().map(|t| Some(t.data.as_mut_slice())).collect();
    let mut ws = Vec::with_capacity(layers.len());
    let mut bs = Vec::with_capacity(layers.len());
    for &i in layers {
        ws.push(all[i].take().expect("distinct layers"));
        bs.push(all[i + 1].take().expect("distinct layers"));
    }
    (ws, bs)
}

pub(crate) fn pair_mut<T>(g: &mut Params<T>, i: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = g.tensors.split_at_mut(i + 1);
    (a[i].data.as_mut_slice(), b[0].data.as_mut_slice())
}

/// Training/validation view binding a network to its rows.
pub struct MagnitudeProblem<'a, T> {
    pub net: &'a MagnitudeNet,
    pub data: &'a MagnitudeData<T>,
}

impl<T: Real> Model<T> for MagnitudeProblem<'_, T> {
    fn shapes(&self) -> Vec<Vec<usize>> {
        self.net.arch.shapes()
    }

    fn len(&self) -> usize {
        self.data.rows.len()
    }

    fn loss_and_grad(&self, params: &Params<T>, rows: &[usize]) -> Result<(T, Params<T>)> {
        let (l, g) = self.net.batch(params, self.data, rows, true)?;
        Ok((l, g.expect("gradient requested")))
    }

    fn loss(&self, params: &Params<T>, rows: &[usize]) -> Result<T> {
        Ok(self.net.batch(params, self.data, rows, false)?.0)
    }
}
