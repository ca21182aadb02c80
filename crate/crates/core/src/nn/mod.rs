//! Small CPU neural-network engine: tensors, layers with exact backward
//! passes, MSE loss and Adam.
//!
//! Layers are trait objects composed into a [`Network`]; the engine is
//! generic over the element type so the same code runs in `f32` for
//! training and in `f64` for gradient checking.

mod layers;
mod optim;
mod scalar;
mod tensor;

use thiserror::Error;

pub use layers::{Aux, Conv2d, Dense, Dropout, GlobalMaxPool, Layer, MaxPool2d, Mode, Relu};
pub use optim::{mse_loss, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
}

/// Named layer in a [`Network`].
#[derive(Debug)]
pub struct NamedLayer<S> {
    pub name: String,
    pub layer: Box<dyn Layer<S>>,
}

/// Activations recorded by a training forward pass.
#[derive(Debug)]
pub struct ForwardTrace<S> {
    inputs: Vec<Tensor<S>>,
    aux: Vec<Aux<S>>,
}

/// A feed-forward stack of layers.
#[derive(Debug, Default)]
pub struct Network<S> {
    layers: Vec<NamedLayer<S>>,
}

impl<S: Scalar> Network<S> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer<S> + 'static) -> &mut Self {
        self.layers.push(NamedLayer {
            name: name.into(),
            layer: Box::new(layer),
        });
        self
    }

    pub fn layers(&self) -> &[NamedLayer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [NamedLayer<S>] {
        &mut self.layers
    }

    /// Output shape after each layer for an input of `input` shape.
    pub fn shape_trace(&self, input: &[usize]) -> Result<Vec<(String, Vec<usize>)>, NnError> {
        let mut shape = input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            shape = l.layer.output_shape(&shape)?;
            out.push((l.name.clone(), shape.clone()));
        }
        Ok(out)
    }

    /// Deterministic forward pass with dropout disabled.
    pub fn predict(&self, input: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let mut mode = Mode::Inference;
        let mut x = std::borrow::Cow::Borrowed(input);
        for l in &self.layers {
            let (y, _) = l.layer.forward(&x, &mut mode)?;
            x = std::borrow::Cow::Owned(y);
        }
        Ok(x.into_owned())
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward(&self, input: &Tensor<S>, mode: &mut Mode<'_>) -> Result<(Tensor<S>, ForwardTrace<S>), NnError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for l in &self.layers {
            let (y, a) = l.layer.forward(&x, mode)?;
            inputs.push(x);
            aux.push(a);
            x = y;
        }
        Ok((x, ForwardTrace { inputs, aux }))
    }

    /// Zeroed gradient buffers matching [`Network::params`].
    pub fn zero_grads(&self) -> Vec<Tensor<S>> {
        self.params().map(|p| Tensor::zeros(p.shape().to_vec())).collect()
    }

    /// Back-propagates `grad_out` and accumulates into `grads`. Returns the
    /// gradient with respect to the network input when requested.
    pub fn backward(
        &self,
        trace: &ForwardTrace<S>,
        grad_out: Tensor<S>,
        grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        if trace.inputs.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch("trace does not match network".into()));
        }
        let counts: Vec<usize> = self.layers.iter().map(|l| l.layer.params().len()).collect();
        if grads.len() != counts.iter().sum::<usize>() {
            return Err(NnError::ShapeMismatch("gradient buffer count".into()));
        }
        let mut end = grads.len();
        let mut g = grad_out;
        for (idx, l) in self.layers.iter().enumerate().rev() {
            let start = end - counts[idx];
            let want_input = idx > 0 || need_input_grad;
            let gi = l.layer.backward(
                &g,
                &trace.inputs[idx],
                &trace.aux[idx],
                &mut grads[start..end],
                want_input,
            )?;
            end = start;
            match gi {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.layers.iter().flat_map(|l| l.layer.params().iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<S>> {
        self.layers.iter_mut().flat_map(|l| l.layer.params_mut().iter_mut())
    }

    /// `(layer.param, shape)` for every parameter tensor.
    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|l| l.layer.param_names().iter().map(move |p| format!("{}.{p}", l.name)))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }
}
