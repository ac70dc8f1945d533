//! Fusion output reshaped to channels × length and refined by a conv stack.

use super::layers::{relu, relu_backward, Conv1d};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvStack {
    pub convs: Vec<Conv1d>,
    /// ReLU after every layer except possibly the last.
    pub relu_last: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct StackCache<T> {
    /// Input of each layer; `inputs[0]` is the stack input.
    pub inputs: Vec<Vec<T>>,
    pub lens: Vec<usize>,
    pub output: Vec<T>,
    pub out_len: usize,
}

impl ConvStack {
    pub fn new(channels: &[usize], strides: &[usize], kernel: usize, relu_last: bool) -> Self {
        let convs = channels
            .windows(2)
            .zip(strides)
            .map(|(c, &stride)| Conv1d {
                cin: c[0],
                cout: c[1],
                kernel,
                stride,
                pad: kernel / 2,
            })
            .collect();
        Self { convs, relu_last }
    }

    pub fn out_len(&self, mut len: usize) -> usize {
        for c in &self.convs {
            len = c.out_len(len);
        }
        len
    }

    /// `weights[i]` / `biases[i]` belong to layer `i`.
    pub fn forward<T: Real>(&self, weights: &[&[T]], biases: &[&[T]], x: Vec<T>, len: usize) -> StackCache<T> {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut lens = Vec::with_capacity(self.convs.len());
        let mut cur = x;
        let mut cur_len = len;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            let mut y = conv.forward(weights[i], biases[i], &cur, cur_len);
            if i < last || self.relu_last {
                relu(&mut y);
            }
            inputs.push(cur);
            lens.push(cur_len);
            cur_len = conv.out_len(cur_len);
            cur = y;
        }
        StackCache {
            inputs,
            lens,
            output: cur,
            out_len: cur_len,
        }
    }

    /// Accumulates parameter gradients; returns the gradient of the stack input.
    pub fn backward<T: Real>(
        &self,
        weights: &[&[T]],
        cache: &StackCache<T>,
        d_output: Vec<T>,
        dws: &mut [&mut [T]],
        dbs: &mut [&mut [T]],
        need_dx: bool,
    ) -> Vec<T> {
        let last = self.convs.len() - 1;
        let mut grad = d_output;
        for i in (0..self.convs.len()).rev() {
            let out = if i == last { &cache.output } else { &cache.inputs[i + 1] };
            if i < last || self.relu_last {
                relu_backward(out, &mut grad);
            }
            grad = self.convs[i].backward(
                weights[i],
                &cache.inputs[i],
                cache.lens[i],
                &grad,
                dws[i],
                dbs[i],
                need_dx || i > 0,
            );
        }
        grad
    }
}
