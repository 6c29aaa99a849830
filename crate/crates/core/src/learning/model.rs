//! Multinomial logistic regression and a one-hidden-layer tanh MLP with a
//! softmax cross-entropy objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LayerShape, LearningError, ModelWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Model {
    pub kind: ModelKind,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Mean loss and gradient over a batch.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// `log(sum(exp(z)))` and the softmax of `z` written into `probs`.
fn log_softmax(z: &[f64], probs: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &x) in probs.iter_mut().zip(z) {
        *p = (x - m).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    m + sum.ln()
}

/// `out = W x + b` for one dense layer stored at the front of `params`.
fn dense(params: &[f64], shape: LayerShape, x: &[f64], out: &mut [f64]) {
    let (w, b) = params.split_at(shape.inputs * shape.outputs);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(shape.inputs)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

impl Model {
    pub fn new(kind: ModelKind, n_features: usize, n_classes: usize) -> Self {
        Self {
            kind,
            n_features,
            n_classes,
        }
    }

    pub fn layout(&self) -> Vec<LayerShape> {
        match self.kind {
            ModelKind::Logistic => vec![LayerShape {
                inputs: self.n_features,
                outputs: self.n_classes,
            }],
            ModelKind::Mlp { hidden } => vec![
                LayerShape {
                    inputs: self.n_features,
                    outputs: hidden,
                },
                LayerShape {
                    inputs: hidden,
                    outputs: self.n_classes,
                },
            ],
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().iter().map(LayerShape::n_params).sum()
    }

    /// Zero biases; weights uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelWeights {
        let layout = self.layout();
        let mut params = Vec::with_capacity(self.n_params());
        for shape in &layout {
            let bound = 1.0 / (shape.inputs as f64).sqrt();
            for _ in 0..shape.inputs * shape.outputs {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, shape.outputs));
        }
        ModelWeights::new(params, layout).expect("layout matches")
    }

    pub fn check(&self, w: &ModelWeights) -> Result<(), LearningError> {
        if w.len() != self.n_params() || w.layout() != self.layout().as_slice() {
            return Err(LearningError::Layout {
                expected: self.n_params(),
                got: w.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, w: &ModelWeights, x: &[f64], out: &mut Vec<f64>) {
        let layout = self.layout();
        let p = w.params();
        out.resize(self.n_classes, 0.0);
        match self.kind {
            ModelKind::Logistic => dense(p, layout[0], x, out),
            ModelKind::Mlp { hidden } => {
                let mut h = vec![0.0; hidden];
                dense(p, layout[0], x, &mut h);
                h.iter_mut().for_each(|v| *v = v.tanh());
                dense(&p[layout[0].n_params()..], layout[1], &h, out);
            }
        }
    }

    /// Mean cross-entropy over `batch` (indices into `data`) and its exact
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(&self, w: &ModelWeights, data: &Dataset, batch: &[usize]) -> LossGrad {
        assert!(!batch.is_empty(), "empty batch");
        let layout = self.layout();
        let p = w.params();
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        let k = self.n_classes;
        let mut z = vec![0.0; k];
        let mut probs = vec![0.0; k];
        let inv_b = 1.0 / batch.len() as f64;
        match self.kind {
            ModelKind::Logistic => {
                let d = self.n_features;
                for &i in batch {
                    let (x, y) = data.example(i);
                    dense(p, layout[0], x, &mut z);
                    let lse = log_softmax(&z, &mut probs);
                    loss += lse - z[y];
                    probs[y] -= 1.0;
                    let (gw, gb) = grad.split_at_mut(d * k);
                    for c in 0..k {
                        let delta = probs[c];
                        for (g, xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                            *g += delta * xi;
                        }
                        gb[c] += delta;
                    }
                }
            }
            ModelKind::Mlp { hidden } => {
                let d = self.n_features;
                let l0 = layout[0].n_params();
                let (p0, p1) = p.split_at(l0);
                let w2 = &p1[..hidden * k];
                let mut h = vec![0.0; hidden];
                let mut dh = vec![0.0; hidden];
                for &i in batch {
                    let (x, y) = data.example(i);
                    dense(p0, layout[0], x, &mut h);
                    h.iter_mut().for_each(|v| *v = v.tanh());
                    dense(p1, layout[1], &h, &mut z);
                    let lse = log_softmax(&z, &mut probs);
                    loss += lse - z[y];
                    probs[y] -= 1.0;
                    let (g0, g1) = grad.split_at_mut(l0);
                    let (g0w, g0b) = g0.split_at_mut(d * hidden);
                    let (g1w, g1b) = g1.split_at_mut(hidden * k);
                    dh.iter_mut().for_each(|v| *v = 0.0);
                    for c in 0..k {
                        let delta = probs[c];
                        let row = &w2[c * hidden..(c + 1) * hidden];
                        for j in 0..hidden {
                            g1w[c * hidden + j] += delta * h[j];
                            dh[j] += delta * row[j];
                        }
                        g1b[c] += delta;
                    }
                    for j in 0..hidden {
                        let da = dh[j] * (1.0 - h[j] * h[j]);
                        for (g, xi) in g0w[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *g += da * xi;
                        }
                        g0b[j] += da;
                    }
                }
            }
        }
        grad.iter_mut().for_each(|g| *g *= inv_b);
        LossGrad {
            loss: loss * inv_b,
            grad,
        }
    }

    /// Mean cross-entropy and top-1 accuracy over the whole dataset.
    pub fn evaluate(&self, w: &ModelWeights, data: &Dataset) -> (f64, f64) {
        assert!(!data.is_empty(), "empty evaluation set");
        let mut z = Vec::new();
        let mut probs = vec![0.0; self.n_classes];
        let mut loss = 0.0;
        let mut correct = 0usize;
        for i in 0..data.len() {
            let (x, y) = data.example(i);
            self.logits(w, x, &mut z);
            loss += log_softmax(&z, &mut probs) - z[y];
            if argmax(&z) == y {
                correct += 1;
            }
        }
        let n = data.len() as f64;
        (loss / n, correct as f64 / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::synthetic;
    use crate::rng::Streams;

    fn central_difference(
        model: &Model,
        w: &ModelWeights,
        data: &Dataset,
        batch: &[usize],
        h: f64,
    ) -> Vec<f64> {
        (0..w.len())
            .map(|j| {
                let mut plus = w.clone();
                plus.params_mut()[j] += h;
                let mut minus = w.clone();
                minus.params_mut()[j] -= h;
                let fp = model.loss_and_grad(&plus, data, batch).loss;
                let fm = model.loss_and_grad(&minus, data, batch).loss;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = synthetic(60, 5, 4, 2.0, 3);
        for kind in [ModelKind::Logistic, ModelKind::Mlp { hidden: 6 }] {
            let model = Model::new(kind, 5, 4);
            for seed in 0..4 {
                let w = model.init(&mut Streams::new(seed).rng("init", &[]));
                let batch: Vec<usize> = (0..8).map(|i| (i * 7 + seed as usize) % 60).collect();
                let analytic = model.loss_and_grad(&w, &data, &batch).grad;
                let numeric = central_difference(&model, &w, &data, &batch, 1e-5);
                for (a, n) in analytic.iter().zip(&numeric) {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "{kind:?}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn uniform_predictions_have_zero_bias_gradient() {
        let data = synthetic(40, 3, 10, 1.0, 1);
        let model = Model::new(ModelKind::Logistic, 3, 10);
        let w = ModelWeights::zeros(model.layout());
        // labels are balanced: four of each class
        let batch: Vec<usize> = (0..40).collect();
        let g = model.loss_and_grad(&w, &data, &batch).grad;
        for gb in &g[30..] {
            assert!(gb.abs() < 1e-15);
        }
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let data = synthetic(30, 4, 3, 1.0, 2);
        let model = Model::new(ModelKind::Mlp { hidden: 5 }, 4, 3);
        let w = model.init(&mut Streams::new(1).rng("init", &[]));
        let batch: Vec<usize> = (0..10).collect();
        let twice: Vec<usize> = batch.iter().chain(&batch).copied().collect();
        let a = model.loss_and_grad(&w, &data, &batch);
        let b = model.loss_and_grad(&w, &data, &twice);
        for (x, y) in a.grad.iter().zip(&b.grad) {
            assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn uniform_prediction_loss_is_log_k() {
        let data = synthetic(500, 8, 10, 1.0, 5);
        let model = Model::new(ModelKind::Logistic, 8, 10);
        let (loss, _) = model.evaluate(&ModelWeights::zeros(model.layout()), &data);
        assert!((loss - 10f64.ln()).abs() < 0.05);
    }

    #[test]
    fn random_init_is_near_chance() {
        let data = synthetic(3000, 16, 10, 1.0, 6);
        let model = Model::new(ModelKind::Logistic, 16, 10);
        let accs: Vec<f64> = (0..5)
            .map(|s| {
                model
                    .evaluate(&model.init(&mut Streams::new(s).rng("init", &[])), &data)
                    .1
            })
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.1).abs() <= 0.03, "{accs:?}");
    }

    #[test]
    fn check_rejects_wrong_layout() {
        let model = Model::new(ModelKind::Logistic, 3, 2);
        assert!(model.check(&ModelWeights::from_vec(vec![0.0; 8])).is_err());
        assert!(model.check(&ModelWeights::zeros(model.layout())).is_ok());
    }
}
