//! Trainable model, datasets and client-side SGD.

pub mod data;
pub mod model;
pub mod partition;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{load_dataset, synthetic, Dataset, DatasetSource, IdxError};
pub use model::{Model, ModelKind};
pub use partition::{partition, DatasetShard, PartitionMode};
pub use train::{local_train, TrainConfig};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("infeasible partition: {0}")]
    Partition(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite {0}")]
    Diverged(&'static str),
    #[error("weight layout mismatch: expected {expected} parameters, got {got}")]
    Layout { expected: usize, got: usize },
    #[error("empty dataset: {0}")]
    Empty(&'static str),
}

/// Shape of one dense layer: `inputs -> outputs`, stored as a row-major
/// `outputs x inputs` matrix followed by `outputs` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl LayerShape {
    pub fn n_params(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// A flat parameter vector plus the layer layout it encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    params: Vec<f64>,
    layout: Vec<LayerShape>,
}

impl ModelWeights {
    pub fn new(params: Vec<f64>, layout: Vec<LayerShape>) -> Result<Self, LearningError> {
        let expected: usize = layout.iter().map(LayerShape::n_params).sum();
        if expected != params.len() {
            return Err(LearningError::Layout {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { params, layout })
    }

    /// A bare vector with no layer structure.
    pub fn from_vec(params: Vec<f64>) -> Self {
        let n = params.len();
        Self {
            params,
            layout: vec![LayerShape {
                inputs: 0,
                outputs: n,
            }],
        }
    }

    pub fn zeros(layout: Vec<LayerShape>) -> Self {
        let n = layout.iter().map(LayerShape::n_params).sum();
        Self {
            params: vec![0.0; n],
            layout,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layout(&self) -> &[LayerShape] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.layout == other.layout
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            params: self.params.iter().map(|&x| f(x)).collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            params: self
                .params
                .iter()
                .zip(&other.params)
                .map(|(a, b)| a - b)
                .collect(),
            layout: self.layout.clone(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            *a += scale * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.params.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }
}
