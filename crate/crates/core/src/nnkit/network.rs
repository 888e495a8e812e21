use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::layer::{Cache, Layer, LayerSpec, Mode, Param};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// A sequential stack of layers with optional side inputs joined by
/// [`LayerSpec::Concat`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

/// Activations recorded by [`Network::forward_traced`], consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    range: Range<usize>,
    inputs: Vec<Tensor>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn empty() -> Self {
        Self {
            range: 0..0,
            inputs: Vec::new(),
            caches: Vec::new(),
        }
    }
}

/// Parameter gradients laid out exactly like [`Network::params`], plus the
/// gradient with respect to the (range) input and each side input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Tensor,
    pub side: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.params {
            p.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

impl Network {
    /// Builds the stack for samples of `input_shape` (batch dimension
    /// excluded), initializing weights uniformly in ±1/√fan_in.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::build(i, spec.clone(), &shape, &mut rng)?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map_or(&self.input_shape, |l| &l.out_shape)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().map(Param::len).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Param::len).sum()
    }

    /// Index of the first layer matching `pred`, if any.
    pub fn position(&self, pred: impl Fn(&LayerSpec) -> bool) -> Option<usize> {
        self.layers.iter().position(|l| pred(&l.spec))
    }

    fn check_input(&self, start: usize, input: &Tensor) -> Result<()> {
        let expected = match start {
            0 => &self.input_shape,
            s => &self.layers[s - 1].out_shape,
        };
        if input.shape().len() < 2 || input.sample_shape() != expected.as_slice() {
            let (layer, kind) = self.layers.get(start).map_or((start, "output"), |l| (start, l.spec.kind()));
            return Err(Error::layer(
                layer,
                kind,
                format!("input has shape {:?}, expected [batch, {expected:?}]", input.shape()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor, side: &[&Tensor], mode: Mode, seed: u64) -> Result<Tensor> {
        self.forward_range(0..self.layers.len(), input, side, mode, seed)
    }

    /// Runs layers `range` only; `input` must have the shape entering
    /// `range.start`. Lets callers cache a deterministic prefix and replay
    /// the stochastic suffix.
    pub fn forward_range(&self, range: Range<usize>, input: &Tensor, side: &[&Tensor], mode: Mode, seed: u64) -> Result<Tensor> {
        self.run(range, input, side, mode, seed, None)
    }

    pub fn forward_traced(&self, input: &Tensor, side: &[&Tensor], mode: Mode, seed: u64) -> Result<(Tensor, Trace)> {
        self.forward_range_traced(0..self.layers.len(), input, side, mode, seed)
    }

    pub fn forward_range_traced(
        &self,
        range: Range<usize>,
        input: &Tensor,
        side: &[&Tensor],
        mode: Mode,
        seed: u64,
    ) -> Result<(Tensor, Trace)> {
        let mut trace = Trace {
            range: range.clone(),
            inputs: Vec::with_capacity(range.len()),
            caches: Vec::with_capacity(range.len()),
        };
        let out = self.run(range, input, side, mode, seed, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(
        &self,
        range: Range<usize>,
        input: &Tensor,
        side: &[&Tensor],
        mode: Mode,
        seed: u64,
        mut trace: Option<&mut Trace>,
    ) -> Result<Tensor> {
        if range.end > self.layers.len() || range.start > range.end {
            return Err(Error::Usage(format!(
                "layer range {range:?} outside network of {} layers",
                self.layers.len()
            )));
        }
        self.check_input(range.start, input)?;
        let mut x = input.clone();
        for i in range {
            let (y, cache) = self.layers[i].forward(i, &x, side, mode, seed)?;
            if let Some(t) = trace.as_deref_mut() {
                t.inputs.push(x);
                t.caches.push(cache);
            }
            x = y;
        }
        Ok(x)
    }

    pub fn backward(&self, trace: &Trace, grad_output: &Tensor) -> Result<Gradients> {
        if trace.inputs.len() != trace.range.len()
            || trace.range.end > self.layers.len()
            || (trace.range.is_empty() && !self.layers.is_empty())
        {
            return Err(Error::MissingTrace);
        }
        let mut params: Vec<Vec<Vec<f64>>> = self
            .layers
            .iter()
            .map(|l| l.params.iter().map(|p| vec![0.0; p.len()]).collect())
            .collect();
        let slots = self
            .layers
            .iter()
            .filter_map(|l| match l.spec {
                LayerSpec::Concat { slot, .. } => Some(slot + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut side = vec![None; slots];
        let mut dy = grad_output.clone();
        for (k, i) in trace.range.clone().enumerate().rev() {
            let x = &trace.inputs[k];
            let out_len = x.batch() * self.layers[i].out_shape.iter().product::<usize>();
            if dy.len() != out_len {
                return Err(Error::Shape(format!(
                    "upstream gradient for layer {i} has {} values, expected {out_len}",
                    dy.len()
                )));
            }
            let g = self.layers[i].backward(i, x, &trace.caches[k], &dy)?;
            params[i] = g.params;
            if let Some((slot, t)) = g.side {
                side[slot] = Some(t);
            }
            dy = g.input;
        }
        Ok(Gradients {
            params: params.into_iter().flatten().collect(),
            input: dy,
            side,
        })
    }

    /// Rebuilds a network from specs and stored parameters, validating every
    /// parameter shape against fresh shape inference.
    pub fn from_parts(input_shape: &[usize], specs: &[LayerSpec], params: Vec<Param>) -> Result<Self> {
        let mut net = Self::new(input_shape, specs, 0)?;
        let expected = net.param_count_tensors();
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "checkpoint has {} parameter tensors, architecture needs {expected}",
                params.len()
            )));
        }
        for (slot, p) in net.params_mut().zip(params) {
            if slot.shape != p.shape || p.values.len() != slot.values.len() {
                return Err(Error::Shape(format!(
                    "parameter shape {:?} does not match architecture {:?}",
                    p.shape, slot.shape
                )));
            }
            *slot = p;
        }
        Ok(net)
    }

    fn param_count_tensors(&self) -> usize {
        self.params().count()
    }
}
