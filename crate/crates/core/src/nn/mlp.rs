use rand::Rng;

use crate::error::{contract, Result, SorsError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
        }
    }

    /// Derivative given pre-activation `z` and output `y`.
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn weight_count(&self) -> usize {
        self.inputs * self.outputs
    }

    fn param_count(&self) -> usize {
        self.weight_count() + self.outputs
    }
}

/// Stack of dense layers. All parameters live in one flat buffer, layer by
/// layer, each layer as its row-major `outputs x inputs` weight matrix
/// followed by its bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    shapes: Vec<LayerShape>,
    params: Vec<T>,
}

/// Per-layer activations recorded by [`Mlp::forward_trace`].
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// `inputs[l]` is the input to layer `l`; the network input is `inputs[0]`.
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Pre-activation values of layer `l`.
    pub fn pre_activation(&self, l: usize) -> &[T] {
        &self.pre[l]
    }

    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }
}

impl<T: Scalar> Mlp<T> {
    /// Network with all parameters zero.
    pub fn zeros(input_dim: usize, layers: &[(usize, Activation)]) -> Result<Self> {
        if input_dim == 0 || layers.is_empty() {
            return Err(contract("an MLP needs a positive input size and at least one layer"));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut inputs = input_dim;
        for &(outputs, activation) in layers {
            if outputs == 0 {
                return Err(contract("layer sizes must be positive"));
            }
            shapes.push(LayerShape {
                inputs,
                outputs,
                activation,
            });
            inputs = outputs;
        }
        let count = shapes.iter().map(LayerShape::param_count).sum();
        Ok(Self {
            shapes,
            params: vec![T::zero(); count],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        layers: &[(usize, Activation)],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, layers)?;
        let mut offset = 0;
        for shape in &net.shapes {
            let bound = (6.0 / (shape.inputs + shape.outputs) as f64).sqrt();
            for w in &mut net.params[offset..offset + shape.weight_count()] {
                *w = T::lit(rng.gen_range(-bound..=bound));
            }
            offset += shape.param_count();
        }
        Ok(net)
    }

    pub(crate) fn from_parts(shapes: Vec<LayerShape>, params: Vec<T>) -> Result<Self> {
        for pair in shapes.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(SorsError::DimensionMismatch {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        let count: usize = shapes.iter().map(LayerShape::param_count).sum();
        if shapes.is_empty() || count != params.len() {
            return Err(SorsError::DimensionMismatch {
                expected: count,
                actual: params.len(),
            });
        }
        Ok(Self { shapes, params })
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[self.shapes.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Weight matrix (row-major) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let offset = self.offset(l);
        let shape = self.shapes[l];
        let (w, rest) = self.params[offset..].split_at(shape.weight_count());
        (w, &rest[..shape.outputs])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let offset = self.offset(l);
        let shape = self.shapes[l];
        let (w, rest) = self.params[offset..].split_at_mut(shape.weight_count());
        (w, &mut rest[..shape.outputs])
    }

    fn offset(&self, l: usize) -> usize {
        self.shapes[..l].iter().map(LayerShape::param_count).sum()
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(SorsError::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut offset = 0;
        for shape in &self.shapes {
            x = affine_activate(&self.params[offset..], shape, &x, None);
            offset += shape.param_count();
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[T]) -> Result<ForwardTrace<T>> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.shapes.len());
        let mut pre = Vec::with_capacity(self.shapes.len());
        let mut x = input.to_vec();
        let mut offset = 0;
        for shape in &self.shapes {
            let mut z = Vec::with_capacity(shape.outputs);
            let y = affine_activate(&self.params[offset..], shape, &x, Some(&mut z));
            inputs.push(x);
            pre.push(z);
            x = y;
            offset += shape.param_count();
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Accumulates `upstream^T * d(output)/d(params)` into `grads` (laid out
    /// like [`Mlp::params`]) and returns the gradient with respect to the
    /// network input.
    pub fn backward(&self, trace: &ForwardTrace<T>, upstream: &[T], grads: &mut [T]) -> Result<Vec<T>> {
        if upstream.len() != self.output_dim() {
            return Err(SorsError::DimensionMismatch {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(SorsError::DimensionMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        if trace.inputs.len() != self.shapes.len() {
            return Err(contract("forward trace does not belong to this network"));
        }
        let mut g = upstream.to_vec();
        let mut offset = self.params.len();
        for (l, shape) in self.shapes.iter().enumerate().rev() {
            offset -= shape.param_count();
            let x = &trace.inputs[l];
            let z = &trace.pre[l];
            let y = if l + 1 < self.shapes.len() {
                &trace.inputs[l + 1]
            } else {
                &trace.output
            };
            let delta: Vec<T> = (0..shape.outputs)
                .map(|o| g[o] * shape.activation.derivative(z[o], y[o]))
                .collect();
            let (w, _) = self.params[offset..].split_at(shape.weight_count());
            let (gw, gb) = grads[offset..offset + shape.param_count()].split_at_mut(shape.weight_count());
            let mut g_in = vec![T::zero(); shape.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = o * shape.inputs;
                for i in 0..shape.inputs {
                    gw[row + i] += d * x[i];
                    g_in[i] += w[row + i] * d;
                }
                gb[o] += d;
            }
            g = g_in;
        }
        Ok(g)
    }

    /// Parameter gradient and input gradient of `upstream . forward(input)`.
    pub fn grad(&self, input: &[T], upstream: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let trace = self.forward_trace(input)?;
        let mut grads = vec![T::zero(); self.params.len()];
        let input_grad = self.backward(&trace, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

fn affine_activate<T: Scalar>(
    params: &[T],
    shape: &LayerShape,
    x: &[T],
    mut pre: Option<&mut Vec<T>>,
) -> Vec<T> {
    let (w, rest) = params.split_at(shape.weight_count());
    let b = &rest[..shape.outputs];
    (0..shape.outputs)
        .map(|o| {
            let row = &w[o * shape.inputs..(o + 1) * shape.inputs];
            let z = row.iter().zip(x).fold(b[o], |acc, (&wi, &xi)| acc + wi * xi);
            if let Some(pre) = pre.as_deref_mut() {
                pre.push(z);
            }
            shape.activation.apply(z)
        })
        .collect()
}
