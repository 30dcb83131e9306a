use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::Matrix;

/// Rows per parallel work unit. Fixed so reductions are independent of the thread count.
const ROW_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

impl OutputActivation {
    pub fn code(self) -> u8 {
        match self {
            Self::Identity => 0,
            Self::Sigmoid => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::Identity),
            1 => Some(Self::Sigmoid),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    /// `out × in`
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

/// Fully connected network: ReLU between layers, configurable output activation.
///
/// Applied row-wise, this is the same map as a stack of 1×1 convolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    output: OutputActivation,
}

/// Intermediate values from [`Mlp::forward`] needed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Input to each layer; `inputs[l + 1]` is the activated output of layer `l`.
    inputs: Vec<Matrix<T>>,
    pre: Vec<Matrix<T>>,
    output: Matrix<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Post-ReLU activations of hidden layer `l`.
    pub fn hidden(&self, l: usize) -> &Matrix<T> {
        &self.inputs[l + 1]
    }

    pub fn output(&self) -> &Matrix<T> {
        &self.output
    }

    pub fn pre_activation(&self, l: usize) -> &Matrix<T> {
        &self.pre[l]
    }
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights in `±√(6/(in+out))`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| T::lit(rng.random_range(-limit..=limit)));
                Layer { weight, bias: vec![T::zero(); fan_out] }
            })
            .collect();
        Ok(Self { layers, output })
    }

    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer { weight: Matrix::zeros(w[1], w[0]), bias: vec![T::zero(); w[1]] })
            .collect();
        Ok(Self { layers, output })
    }

    pub fn from_layers(layers: Vec<Layer<T>>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("an MLP needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::ShapeMismatch(format!("layer {l}: bias length {} vs {} outputs", layer.bias.len(), layer.weight.rows())));
            }
            if l > 0 && layers[l - 1].weight.rows() != layer.weight.cols() {
                return Err(Error::ShapeMismatch(format!("layer {l} input {} does not chain", layer.weight.cols())));
            }
        }
        Ok(Self { layers, output })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes(), self.output).expect("valid sizes")
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    /// Layer widths including input and output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weight.cols()];
        s.extend(self.layers.iter().map(|l| l.weight.rows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    /// Flattened parameters: per layer, the weight (row-major) then the bias.
    pub fn params(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!("{} values for {} parameters", values.len(), self.num_params())));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weight.data_mut() {
                *w = it.next().unwrap();
            }
            for b in &mut l.bias {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for l in &mut self.layers {
            l.weight.data_mut().iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn same_shape(&self, o: &Self) -> bool {
        self.sizes() == o.sizes()
    }

    pub fn add_assign(&mut self, o: &Self) -> Result<()> {
        if !self.same_shape(o) {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.sizes(), o.sizes())));
        }
        for (a, b) in self.layers.iter_mut().zip(&o.layers) {
            a.weight.data_mut().iter_mut().zip(b.weight.data()).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weight: l.weight.cast(), bias: l.bias.iter().map(|b| U::lit(b.to_f64_lossy())).collect() })
                .collect(),
            output: self.output,
        }
    }

    /// Row-wise forward pass on a `batch × in` matrix.
    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!("input has {} columns, network expects {}", x.cols(), self.input_dim())));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = linear_forward(&current, layer);
            let a = if l + 1 < n {
                z.map(relu)
            } else {
                match self.output {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Sigmoid => z.map(sigmoid),
                }
            };
            inputs.push(std::mem::replace(&mut current, a));
            pre.push(z);
        }
        let cache = ForwardCache { inputs, pre, output: current.clone() };
        Ok((current, cache))
    }

    /// Exact gradients given `dL/dy`. Returns `(dL/dx, dL/dθ)`.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Matrix<T>) -> Result<(Matrix<T>, Mlp<T>)> {
        let (dx, grads) = self.backward_impl(cache, dy, &[], true)?;
        Ok((dx.expect("input gradient requested"), grads))
    }

    /// Parameter gradients when the loss also depends on hidden activations:
    /// each tap `(l, g)` adds `g = dL/d(hidden(l))` directly.
    pub fn backward_with_taps(&self, cache: &ForwardCache<T>, dy: &Matrix<T>, taps: &[(usize, &Matrix<T>)]) -> Result<Mlp<T>> {
        Ok(self.backward_impl(cache, dy, taps, false)?.1)
    }

    /// [`Mlp::backward_with_taps`] that also returns `dL/dx`.
    pub fn backward_with_taps_and_input(
        &self,
        cache: &ForwardCache<T>,
        dy: &Matrix<T>,
        taps: &[(usize, &Matrix<T>)],
    ) -> Result<(Matrix<T>, Mlp<T>)> {
        let (dx, grads) = self.backward_impl(cache, dy, taps, true)?;
        Ok((dx.expect("input gradient requested"), grads))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        dy: &Matrix<T>,
        taps: &[(usize, &Matrix<T>)],
        want_dx: bool,
    ) -> Result<(Option<Matrix<T>>, Mlp<T>)> {
        let n = self.layers.len();
        if cache.pre.len() != n || dy.shape() != cache.output.shape() {
            return Err(Error::ShapeMismatch(format!("upstream gradient {:?} vs output {:?}", dy.shape(), cache.output.shape())));
        }
        for (l, g) in taps {
            if *l + 1 >= n || g.shape() != cache.inputs[l + 1].shape() {
                return Err(Error::ShapeMismatch(format!("tap on layer {l} has shape {:?}", g.shape())));
            }
        }
        let mut grads = self.zeros_like();
        let mut g = match self.output {
            OutputActivation::Identity => dy.clone(),
            OutputActivation::Sigmoid => {
                let mut g = dy.clone();
                for (gi, yi) in g.data_mut().iter_mut().zip(cache.output.data()) {
                    *gi *= *yi * (T::one() - *yi);
                }
                g
            }
        };
        for l in (0..n).rev() {
            let (dw, db) = weight_grad(&g, &cache.inputs[l]);
            grads.layers[l] = Layer { weight: dw, bias: db };
            if l == 0 {
                let dx = want_dx.then(|| input_grad(&g, &self.layers[0].weight));
                return Ok((dx, grads));
            }
            let mut upstream = input_grad(&g, &self.layers[l].weight);
            for (tl, tg) in taps {
                if *tl == l - 1 {
                    upstream.data_mut().iter_mut().zip(tg.data()).for_each(|(a, b)| *a += *b);
                }
            }
            for (u, z) in upstream.data_mut().iter_mut().zip(cache.pre[l - 1].data()) {
                if *z <= T::zero() {
                    *u = T::zero();
                }
            }
            g = upstream;
        }
        unreachable!("loop returns at layer 0")
    }
}

fn linear_forward<T: Real>(x: &Matrix<T>, layer: &Layer<T>) -> Matrix<T> {
    let (batch, n_out) = (x.rows(), layer.weight.rows());
    let wt = layer.weight.transpose();
    let mut out = Matrix::zeros(batch, n_out);
    if batch == 0 {
        return out;
    }
    out.data_mut().par_chunks_mut(ROW_CHUNK * n_out).enumerate().for_each(|(c, chunk)| {
        for (r, y) in chunk.chunks_mut(n_out).enumerate() {
            y.copy_from_slice(&layer.bias);
            for (k, &xk) in x.row(c * ROW_CHUNK + r).iter().enumerate() {
                if xk != T::zero() {
                    axpy(y, xk, wt.row(k));
                }
            }
        }
    });
    out
}

/// `dL/dx = dz · W`
fn input_grad<T: Real>(dz: &Matrix<T>, w: &Matrix<T>) -> Matrix<T> {
    let n_in = w.cols();
    let mut dx = Matrix::zeros(dz.rows(), n_in);
    if dz.rows() == 0 {
        return dx;
    }
    dx.data_mut().par_chunks_mut(ROW_CHUNK * n_in).enumerate().for_each(|(c, chunk)| {
        for (r, out) in chunk.chunks_mut(n_in).enumerate() {
            for (o, &g) in dz.row(c * ROW_CHUNK + r).iter().enumerate() {
                if g != T::zero() {
                    axpy(out, g, w.row(o));
                }
            }
        }
    });
    dx
}

/// `dL/dW = dzᵀ · x`, `dL/db = Σ_rows dz`, reduced over fixed row chunks in order.
fn weight_grad<T: Real>(dz: &Matrix<T>, x: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let (n_out, n_in) = (dz.cols(), x.cols());
    let chunks = dz.rows().div_ceil(ROW_CHUNK);
    let partials: Vec<(Matrix<T>, Vec<T>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut dw = Matrix::zeros(n_out, n_in);
            let mut db = vec![T::zero(); n_out];
            for b in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(dz.rows()) {
                let xr = x.row(b);
                for (o, &g) in dz.row(b).iter().enumerate() {
                    if g != T::zero() {
                        db[o] += g;
                        axpy(dw.row_mut(o), g, xr);
                    }
                }
            }
            (dw, db)
        })
        .collect();
    let mut dw = Matrix::zeros(n_out, n_in);
    let mut db = vec![T::zero(); n_out];
    for (pw, pb) in partials {
        dw.data_mut().iter_mut().zip(pw.data()).for_each(|(a, b)| *a += *b);
        db.iter_mut().zip(&pb).for_each(|(a, b)| *a += *b);
    }
    (dw, db)
}
