use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::matrix::{gemm, Matrix};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Architecture of an MLP: `depth` linear layers, the inner `depth - 1`
/// of them followed by ReLU, hidden layers all `hidden_width` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub output: usize,
    /// Additive skip around every hidden-to-hidden layer.
    pub residual: bool,
}

impl MlpShape {
    fn dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|k| {
                let fan_in = if k == 0 {
                    self.input
                } else {
                    self.hidden_width
                };
                let fan_out = if k + 1 == self.depth {
                    self.output
                } else {
                    self.hidden_width
                };
                (fan_out, fan_in)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Layer {
            weight: Matrix::zeros(out, inp),
            bias: vec![0.0; out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.as_slice().iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight
            .as_mut_slice()
            .iter_mut()
            .chain(self.bias.iter_mut())
    }
}

/// Multilayer perceptron with ReLU hidden activations and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    residual: bool,
    activation: Activation,
}

/// Per-layer quantities recorded by [`Mlp::forward_tape`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer (`n x fan_in`).
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer (`n x fan_out`).
    pre: Vec<Matrix>,
    output: Matrix,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

/// Gradients, shaped exactly like the parameters of the network they were
/// taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_out(), l.fan_in()))
                .collect(),
        }
    }

    /// True when every tensor has the shape of the corresponding parameter of `net`.
    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weight.shape() == l.weight.shape() && g.bias.len() == l.bias.len())
    }

    fn check_shape(&self, other: &Gradients) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape());
        if same {
            Ok(())
        } else {
            Err(Error::invalid("gradient shape mismatch"))
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.values_mut().for_each(|x| *x *= s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(super::math::abs(*v)))
    }

    pub fn norm(&self) -> f64 {
        super::math::sqrt(self.iter().map(|v| v * v).sum())
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }
}

/// Role of a tensor inside a serialized checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Weight => "weight",
            Role::Bias => "bias",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "weight" => Some(Role::Weight),
            "bias" => Some(Role::Bias),
            _ => None,
        }
    }
}

/// One flat tensor of a checkpoint: row-major values for `(layer, role)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub layer: usize,
    pub role: Role,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization for weights and biases.
    pub fn new(shape: MlpShape, rng: &mut Rng) -> Result<Self> {
        if shape.depth == 0 || shape.input == 0 || shape.output == 0 || shape.hidden_width == 0 {
            return Err(Error::invalid("mlp dimensions must be positive"));
        }
        let layers = shape
            .dims()
            .into_iter()
            .map(|(out, inp)| {
                let bound = 1.0 / super::math::sqrt(inp as f64);
                let mut layer = Layer::zeros(out, inp);
                for v in layer.values_mut() {
                    *v = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Ok(Mlp {
            layers,
            residual: shape.residual,
            activation: Activation::Relu,
        })
    }

    /// Builds a network from explicit layers, validating that shapes compose.
    pub fn from_layers(layers: Vec<Layer>, residual: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("mlp needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::invalid(alloc::format!(
                    "layer {k}: bias length mismatch"
                )));
            }
            if l.values().any(|v| !v.is_finite()) {
                return Err(Error::invalid(alloc::format!(
                    "layer {k}: non-finite parameter"
                )));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::invalid(alloc::format!(
                    "layer {} output {} does not feed layer {} input {}",
                    k,
                    pair[0].fan_out(),
                    k + 1,
                    pair[1].fan_in()
                )));
            }
        }
        Ok(Mlp {
            layers,
            residual,
            activation: Activation::Relu,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.values_mut())
    }

    #[inline]
    fn skip(&self, k: usize) -> bool {
        self.residual && k > 0 && k + 1 < self.layers.len() && {
            let l = &self.layers[k];
            l.fan_in() == l.fan_out()
        }
    }

    /// Evaluates one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&m)?.into_vec())
    }

    /// Evaluates every row of `x`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for k in 0..self.layers.len() {
            let mut z = self.affine(k, &h);
            let last = k + 1 == self.layers.len();
            if !last {
                relu_in_place(&mut z);
                if self.skip(k) {
                    add_in_place(&mut z, &h);
                }
            }
            if !z.all_finite() {
                return Err(Error::Numeric {
                    layer: k,
                    context: "forward",
                });
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_tape(&self, x: &Matrix) -> Result<Tape> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = x.clone();
        for k in 0..n_layers {
            let z = self.affine(k, &h);
            if !z.all_finite() {
                return Err(Error::Numeric {
                    layer: k,
                    context: "forward",
                });
            }
            let next = if k + 1 == n_layers {
                z.clone()
            } else {
                let mut a = z.clone();
                relu_in_place(&mut a);
                if self.skip(k) {
                    add_in_place(&mut a, &h);
                }
                a
            };
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        Ok(Tape {
            inputs,
            pre,
            output: h,
        })
    }

    /// Reverse-mode pass: given `d_out = dL/d(output)`, returns parameter
    /// gradients and `dL/d(input)`.
    pub fn backward(&self, tape: &Tape, d_out: &Matrix) -> Result<(Gradients, Matrix)> {
        if d_out.shape() != tape.output.shape() {
            return Err(Error::invalid("output gradient shape mismatch"));
        }
        let n = d_out.rows();
        let mut grads = Gradients::zeros_like(self);
        let mut d_h = d_out.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let (out, inp) = layer.weight.shape();
            let last = k + 1 == self.layers.len();
            let mut dz = d_h.clone();
            if !last {
                let z = &tape.pre[k];
                for (g, zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if *zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let a_in = &tape.inputs[k];
            let g = &mut grads.layers[k];
            // dW = dz^T * a_in
            gemm(
                out,
                n,
                inp,
                dz.as_slice(),
                1,
                out as isize,
                a_in.as_slice(),
                inp as isize,
                1,
                0.0,
                g.weight.as_mut_slice(),
            );
            for r in dz.iter_rows() {
                for (b, v) in g.bias.iter_mut().zip(r) {
                    *b += v;
                }
            }
            // d_in = dz * W
            let mut d_in = Matrix::zeros(n, inp);
            gemm(
                n,
                out,
                inp,
                dz.as_slice(),
                out as isize,
                1,
                layer.weight.as_slice(),
                inp as isize,
                1,
                0.0,
                d_in.as_mut_slice(),
            );
            if self.skip(k) {
                add_in_place(&mut d_in, &d_h);
            }
            if !d_in.all_finite() || g.values().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: k,
                    context: "backward",
                });
            }
            d_h = d_in;
        }
        Ok((grads, d_h))
    }

    /// Value and parameter gradients of `loss(output)` at input batch `x`.
    ///
    /// `loss` returns the scalar loss and its gradient with respect to the
    /// network output.
    pub fn grad<F>(&self, x: &Matrix, loss: F) -> Result<(f64, Gradients)>
    where
        F: FnOnce(&Matrix) -> (f64, Matrix),
    {
        let tape = self.forward_tape(x)?;
        let (value, d_out) = loss(tape.output());
        if !value.is_finite() {
            return Err(Error::Numeric {
                layer: self.layers.len() - 1,
                context: "loss",
            });
        }
        let (grads, _) = self.backward(&tape, &d_out)?;
        Ok((value, grads))
    }

    /// `self <- (1 - rho) * self + rho * online`.
    pub fn polyak_toward(&mut self, online: &Mlp, rho: f64) -> Result<()> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::invalid("polyak rho must be in (0, 1]"));
        }
        if !self.same_shape(online) {
            return Err(Error::invalid(
                "polyak update between differently shaped networks",
            ));
        }
        if rho == 1.0 {
            self.layers.clone_from(&online.layers);
            return Ok(());
        }
        for (t, o) in self.params_mut().zip(online.params()) {
            *t = (1.0 - rho) * *t + rho * o;
        }
        Ok(())
    }

    /// Flattens the network into `(layer, role, shape, values)` records.
    pub fn to_records(&self) -> Vec<TensorRecord> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push(TensorRecord {
                layer: k,
                role: Role::Weight,
                shape: vec![l.fan_out(), l.fan_in()],
                values: l.weight.as_slice().to_vec(),
            });
            out.push(TensorRecord {
                layer: k,
                role: Role::Bias,
                shape: vec![l.fan_out()],
                values: l.bias.clone(),
            });
        }
        out
    }

    pub fn from_records(records: &[TensorRecord], residual: bool) -> Result<Self> {
        let n_layers = records.iter().map(|r| r.layer + 1).max().unwrap_or(0);
        let mut weights: Vec<Option<Matrix>> = vec![None; n_layers];
        let mut biases: Vec<Option<Vec<f64>>> = vec![None; n_layers];
        for r in records {
            let bad = |what: &str| {
                Error::invalid(alloc::format!(
                    "layer {} {}: {what}",
                    r.layer,
                    r.role.as_str()
                ))
            };
            match r.role {
                Role::Weight => {
                    let [rows, cols] = r.shape[..] else {
                        return Err(bad("weight shape must be 2-d"));
                    };
                    if weights[r.layer].is_some() {
                        return Err(bad("duplicate record"));
                    }
                    weights[r.layer] = Some(Matrix::from_vec(rows, cols, r.values.clone())?);
                }
                Role::Bias => {
                    if r.shape.len() != 1 || r.shape[0] != r.values.len() {
                        return Err(bad("bias shape mismatch"));
                    }
                    if biases[r.layer].is_some() {
                        return Err(bad("duplicate record"));
                    }
                    biases[r.layer] = Some(r.values.clone());
                }
            }
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (k, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            match (w, b) {
                (Some(weight), Some(bias)) => layers.push(Layer { weight, bias }),
                _ => {
                    let msg: String = alloc::format!("layer {k} is missing a weight or bias");
                    return Err(Error::invalid(msg));
                }
            }
        }
        Mlp::from_layers(layers, residual)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::invalid(alloc::format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `h * W^T + b`.
    fn affine(&self, k: usize, h: &Matrix) -> Matrix {
        let layer = &self.layers[k];
        let (out, inp) = layer.weight.shape();
        let n = h.rows();
        let mut z = Matrix::zeros(n, out);
        for r in 0..n {
            z.row_mut(r).copy_from_slice(&layer.bias);
        }
        gemm(
            n,
            inp,
            out,
            h.as_slice(),
            inp as isize,
            1,
            layer.weight.as_slice(),
            1,
            inp as isize,
            1.0,
            z.as_mut_slice(),
        );
        z
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn add_in_place(m: &mut Matrix, other: &Matrix) {
    for (a, b) in m.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}
