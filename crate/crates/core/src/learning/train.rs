//! Client-side mini-batch SGD with heavy-ball momentum.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetShard, LearningError, Model, ModelWeights};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub local_epochs: usize,
    /// Examples per mini-batch; the last batch of an epoch may be smaller.
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearningError> {
        let bad = |m: &str| Err(LearningError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.local_epochs == 0 {
            return bad("local_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Runs `local_epochs` passes of momentum SGD over `shard`, starting from
/// `global`:
///
/// ```text
/// v <- momentum * v + grad
/// w <- w - learning_rate * v
/// ```
///
/// The momentum buffer starts at zero for every call.
pub fn local_train(
    model: &Model,
    global: &ModelWeights,
    shard: &DatasetShard,
    cfg: &TrainConfig,
    rng: &mut SimRng,
) -> Result<ModelWeights, LearningError> {
    cfg.validate()?;
    model.check(global)?;
    if shard.is_empty() {
        return Err(LearningError::Empty("client shard"));
    }
    let mut w = global.clone();
    if cfg.learning_rate == 0.0 {
        return Ok(w);
    }
    let mut velocity = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let lg = model.loss_and_grad(&w, &shard.data, batch);
            if !lg.loss.is_finite() {
                return Err(LearningError::Diverged("loss"));
            }
            for ((p, v), g) in w.params_mut().iter_mut().zip(&mut velocity).zip(&lg.grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
        }
    }
    if !w.is_finite() {
        return Err(LearningError::Diverged("weights"));
    }
    Ok(w)
}
