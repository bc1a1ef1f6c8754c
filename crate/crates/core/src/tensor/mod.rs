//! Dense and convolutional network engine with exact backpropagation.
//!
//! Activations are stored row-major in height × width × channel order. A
//! network processes a batch at once: an input tensor either has exactly the
//! network's input shape (batch of one) or a leading batch axis.

mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;

pub use gradcheck::{grad_check, relative_error, GRAD_CHECK_FLOOR};
pub use layer::{Activation, ConvSpec, DenseSpec, Layer, LayerKind, LayerSpec, Padding};
pub use loss::mae_loss;
pub use network::{GradientTape, Network, Trace};
pub use optim::{sgd_step, Adam, Optimizer, OptimizerKind, OptimizerSettings};

use crate::error::{Error, Result};

/// An n-dimensional array of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::config(format!("tensor shape {shape:?} has a zero extent")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::config(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
