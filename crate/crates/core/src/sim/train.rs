use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelKind, Shard};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub model: ModelKind,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            model: ModelKind::SoftmaxLinear,
            local_epochs: 1,
            batch_size: 128,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            clip_norm: 2.0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.learning_rate, self.momentum, self.weight_decay];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter(
                "learning rate, momentum and weight decay must be finite and nonnegative".into(),
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidParameter("clip norm must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    /// `w_before - w_after`.
    pub pseudo_gradient: Vec<f64>,
    pub steps: usize,
    /// Largest norm of a clipped step gradient (before momentum).
    pub max_step_norm: f64,
}

/// Local SGD with momentum, weight decay and per-step gradient clipping.
/// Returns the pseudo-gradient `w_before - w_after`; an empty shard yields zeros.
pub fn local_update(
    model: &Model,
    params: &[f64],
    shard: &Shard<'_>,
    spec: &TrainSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    local_update_traced(model, params, shard, spec, seed).map(|o| o.pseudo_gradient)
}

pub fn local_update_traced(
    model: &Model,
    params: &[f64],
    shard: &Shard<'_>,
    spec: &TrainSpec,
    seed: u64,
) -> Result<LocalOutcome> {
    spec.validate()?;
    let mut w = params.to_vec();
    let mut velocity = vec![0.0; w.len()];
    let mut order = shard.indices.to_vec();
    let mut rng = rng::stream(&[seed, 0x5D]);
    let mut steps = 0;
    let mut max_step_norm = 0.0f64;
    for _ in 0..spec.local_epochs {
        if order.is_empty() {
            break;
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let (loss, mut grad) = model.loss_and_grad(&w, shard, batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            vector::axpy(&mut grad, spec.weight_decay, &w);
            let norm = vector::norm(&grad);
            if norm > spec.clip_norm {
                let c = spec.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= c);
            }
            max_step_norm = max_step_norm.max(vector::norm(&grad));
            for ((v, g), wi) in velocity.iter_mut().zip(&grad).zip(w.iter_mut()) {
                *v = spec.momentum * *v + g;
                *wi -= spec.learning_rate * *v;
            }
            steps += 1;
        }
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    Ok(LocalOutcome {
        pseudo_gradient: vector::sub(params, &w),
        steps,
        max_step_norm,
    })
}
