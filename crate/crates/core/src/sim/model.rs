//! Desk-scale classifiers with hand-written backpropagation, operating on a
//! flat parameter vector.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp { hidden: usize },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::SoftmaxLinear => "softmax_linear",
            ModelKind::Mlp { .. } => "mlp",
        }
    }
}

/// Model shape. Parameters live in a flat vector laid out as
/// `W (c x d), b (c)` for the linear model and
/// `W1 (h x d), b1 (h), W2 (c x h), b2 (c)` for the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Model {
    pub kind: ModelKind,
    pub num_classes: usize,
    pub dim: usize,
}

/// Labeled rows drawn from a dataset, optionally with flipped labels.
#[derive(Debug, Clone, Copy)]
pub struct Shard<'a> {
    pub data: &'a Dataset,
    pub indices: &'a [usize],
    pub flip_labels: bool,
}

impl<'a> Shard<'a> {
    pub fn new(data: &'a Dataset, indices: &'a [usize]) -> Self {
        Self {
            data,
            indices,
            flip_labels: false,
        }
    }

    pub fn flipped(self) -> Self {
        Self {
            flip_labels: true,
            ..self
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        let y = self.data.label(i);
        if self.flip_labels {
            self.data.num_classes() - 1 - y
        } else {
            y
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl Model {
    pub fn new(kind: ModelKind, num_classes: usize, dim: usize) -> Result<Self> {
        if num_classes < 2 || dim == 0 || matches!(kind, ModelKind::Mlp { hidden: 0 }) {
            return Err(Error::InvalidParameter(
                "model needs >= 2 classes, dim >= 1 and a nonempty hidden layer".into(),
            ));
        }
        Ok(Self {
            kind,
            num_classes,
            dim,
        })
    }

    pub fn param_count(&self) -> usize {
        let (c, d) = (self.num_classes, self.dim);
        match self.kind {
            ModelKind::SoftmaxLinear => c * d + c,
            ModelKind::Mlp { hidden: h } => h * d + h + c * h + c,
        }
    }

    /// Zeros for the linear model; scaled Gaussian weights for the MLP.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        if let ModelKind::Mlp { hidden: h } = self.kind {
            let mut rng = rng::stream(&[seed, 0x1417]);
            let (c, d) = (self.num_classes, self.dim);
            let s1 = (2.0 / d as f64).sqrt();
            for w in &mut params[..h * d] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = s1 * z;
            }
            let s2 = (1.0 / h as f64).sqrt();
            let w2 = h * d + h;
            for w in &mut params[w2..w2 + c * h] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = s2 * z;
            }
        }
        params
    }

    fn linear(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
        let d = x.len();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &weights[k * d..(k + 1) * d];
            *o = bias[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Class scores for one input.
    pub fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (c, d) = (self.num_classes, self.dim);
        let mut z = vec![0.0; c];
        match self.kind {
            ModelKind::SoftmaxLinear => {
                Self::linear(&params[..c * d], &params[c * d..], x, &mut z);
            }
            ModelKind::Mlp { hidden: h } => {
                let mut a = vec![0.0; h];
                Self::linear(&params[..h * d], &params[h * d..h * d + h], x, &mut a);
                a.iter_mut().for_each(|v| *v = v.max(0.0));
                let w2 = h * d + h;
                Self::linear(&params[w2..w2 + c * h], &params[w2 + c * h..], &a, &mut z);
            }
        }
        z
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        let z = self.logits(params, x);
        let mut best = 0;
        for k in 1..z.len() {
            if z[k] > z[best] {
                best = k;
            }
        }
        best
    }

    /// Mean cross-entropy over `rows` of `shard` and its gradient.
    pub fn loss_and_grad(&self, params: &[f64], shard: &Shard<'_>, rows: &[usize]) -> (f64, Vec<f64>) {
        let (c, d) = (self.num_classes, self.dim);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let inv = 1.0 / rows.len().max(1) as f64;
        for &i in rows {
            let x = shard.data.features(i);
            let y = shard.label(i);
            match self.kind {
                ModelKind::SoftmaxLinear => {
                    let mut p = vec![0.0; c];
                    Self::linear(&params[..c * d], &params[c * d..], x, &mut p);
                    let logit_y = p[y];
                    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    loss += lse - logit_y;
                    softmax_in_place(&mut p);
                    p[y] -= 1.0;
                    for k in 0..c {
                        let g = p[k] * inv;
                        for (gw, xv) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *gw += g * xv;
                        }
                        grad[c * d + k] += g;
                    }
                }
                ModelKind::Mlp { hidden: h } => {
                    let w2 = h * d + h;
                    let mut pre = vec![0.0; h];
                    Self::linear(&params[..h * d], &params[h * d..w2], x, &mut pre);
                    let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                    let mut p = vec![0.0; c];
                    Self::linear(&params[w2..w2 + c * h], &params[w2 + c * h..], &act, &mut p);
                    let logit_y = p[y];
                    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    loss += lse - logit_y;
                    softmax_in_place(&mut p);
                    p[y] -= 1.0;
                    let mut dact = vec![0.0; h];
                    for k in 0..c {
                        let g = p[k] * inv;
                        let row = w2 + k * h;
                        for j in 0..h {
                            grad[row + j] += g * act[j];
                            dact[j] += params[row + j] * g;
                        }
                        grad[w2 + c * h + k] += g;
                    }
                    for j in 0..h {
                        if pre[j] <= 0.0 {
                            continue;
                        }
                        let g = dact[j];
                        for (gw, xv) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *gw += g * xv;
                        }
                        grad[h * d + j] += g;
                    }
                }
            }
        }
        (loss * inv, grad)
    }
}

/// Top-1 accuracy; prediction ties resolve to the lowest class index.
pub fn evaluate_accuracy(model: &Model, params: &[f64], dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty dataset".into()));
    }
    let correct = (0..dataset.len())
        .filter(|&i| model.predict(params, dataset.features(i)) == dataset.label(i))
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}
