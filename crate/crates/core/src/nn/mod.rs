//! Dense neural-network engine with reverse-mode gradients.
//!
//! Everything is batched: activations flow as `Array2<f64>` with one sample
//! per row. Gradients mirror the parameter structure (a zeroed copy of the
//! network), so the optimizer walks parameters and gradients in lockstep
//! through [`FlatParams`].

pub mod fpno;
pub mod mionet;

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Exact GELU: x * Phi(x) with the standard normal CDF.
pub fn gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// d/dx gelu(x) = Phi(x) + x phi(x).
pub fn gelu_prime(x: f64) -> f64 {
    let phi_cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi_cdf + x * pdf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Linear,
    Softmax,
    Tanh,
}

/// How a layer's weights were drawn; kept for the model container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// N(0, gain / fan_in) with gain 2 for GELU layers, 1 otherwise.
    KaimingFanIn,
    Zero,
}

/// Fully connected layer: y = act(x W + b), W is (fan_in x fan_out).
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
    pub init: InitScheme,
}

impl DenseLayer {
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, act: Activation, rng: &mut R) -> Self {
        let gain = match act {
            Activation::Gelu => 2.0,
            _ => 1.0,
        };
        let std = (gain / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng));
        DenseLayer {
            w,
            b: Array1::zeros(fan_out),
            act,
            init: InitScheme::KaimingFanIn,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, act: Activation) -> Self {
        DenseLayer {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
            act,
            init: InitScheme::Zero,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    fn zeros_like(&self) -> Self {
        DenseLayer {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
            act: self.act,
            init: self.init,
        }
    }

    /// Pre-activation and activated output.
    fn forward_parts(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if x.ncols() != self.fan_in() {
            return Err(Error::Dimension {
                expected: self.fan_in(),
                got: x.ncols(),
            });
        }
        let mut z = x.dot(&self.w);
        z += &self.b;
        let y = activate(self.act, &z);
        Ok((z, y))
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_parts(x)?.1)
    }

    /// Reverse step: given dL/dy and the cached (x, z, y), accumulates
    /// parameter gradients and returns dL/dx.
    fn backward(
        &self,
        x: &Array2<f64>,
        z: &Array2<f64>,
        y: &Array2<f64>,
        dy: &Array2<f64>,
        grads: &mut DenseLayer,
    ) -> Array2<f64> {
        let dz = activate_backward(self.act, z, y, dy);
        grads.w += &x.t().dot(&dz);
        grads.b += &dz.sum_axis(Axis(0));
        dz.dot(&self.w.t())
    }
}

fn activate(act: Activation, z: &Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Linear => z.clone(),
        Activation::Gelu => z.mapv(gelu),
        Activation::Tanh => z.mapv(f64::tanh),
        Activation::Softmax => {
            let mut y = z.clone();
            for mut row in y.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            y
        }
    }
}

fn activate_backward(
    act: Activation,
    z: &Array2<f64>,
    y: &Array2<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    match act {
        Activation::Linear => dy.clone(),
        Activation::Gelu => {
            let mut dz = dy.clone();
            dz.zip_mut_with(z, |d, &zz| *d *= gelu_prime(zz));
            dz
        }
        Activation::Tanh => {
            let mut dz = dy.clone();
            dz.zip_mut_with(y, |d, &yy| *d *= 1.0 - yy * yy);
            dz
        }
        Activation::Softmax => {
            let mut dz = Array2::zeros(dy.raw_dim());
            for ((mut drow, yrow), gyrow) in
                dz.rows_mut().into_iter().zip(y.rows()).zip(dy.rows())
            {
                let dot: f64 = yrow.iter().zip(gyrow.iter()).map(|(a, b)| a * b).sum();
                for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(gyrow) {
                    *d = yv * (gv - dot);
                }
            }
            dz
        }
    }
}

/// Plain multi-layer perceptron; each layer carries its own activation.
#[derive(Debug, Clone)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

/// Cached intermediates of one forward pass.
pub struct DenseCache {
    xs: Vec<Array2<f64>>,
    zs: Vec<Array2<f64>>,
    ys: Vec<Array2<f64>>,
}

impl DenseNet {
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array2<f64>, DenseCache)> {
        let mut cache = DenseCache {
            xs: Vec::with_capacity(self.layers.len()),
            zs: Vec::with_capacity(self.layers.len()),
            ys: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.clone();
        for layer in &self.layers {
            let (z, y) = layer.forward_parts(&cur)?;
            cache.xs.push(cur);
            cache.zs.push(z);
            cache.ys.push(y.clone());
            cur = y;
        }
        Ok((cur, cache))
    }

    /// Reverse-mode pass; returns dL/dinput and accumulates into `grads`.
    pub fn backward(&self, cache: &DenseCache, dy: &Array2<f64>, grads: &mut DenseNet) -> Array2<f64> {
        let mut cur = dy.clone();
        for i in (0..self.layers.len()).rev() {
            cur = self.layers[i].backward(
                &cache.xs[i],
                &cache.zs[i],
                &cache.ys[i],
                &cur,
                &mut grads.layers[i],
            );
        }
        cur
    }

    pub fn zeros_like(&self) -> Self {
        DenseNet {
            layers: self.layers.iter().map(|l| l.zeros_like()).collect(),
        }
    }
}

/// Squeeze-and-excitation residual block:
/// h = gelu(fc(x)); gate = softmax(g2(gelu(g1(h)))); y = x + gate .* h.
///
/// The gate is computed from the post-activation features and scales the
/// residual branch before the skip addition.
#[derive(Debug, Clone)]
pub struct SeBlock {
    pub fc: DenseLayer,
    pub gate1: DenseLayer,
    pub gate2: DenseLayer,
}

/// SE reduction ratio (width -> width / SE_REDUCTION in the gate).
pub const SE_REDUCTION: usize = 4;

pub struct SeBlockCache {
    x: Array2<f64>,
    z_fc: Array2<f64>,
    h: Array2<f64>,
    z_g1: Array2<f64>,
    a_g1: Array2<f64>,
    z_g2: Array2<f64>,
    gate: Array2<f64>,
}

impl SeBlock {
    pub fn init<R: Rng>(width: usize, rng: &mut R) -> Self {
        let mid = (width / SE_REDUCTION).max(1);
        SeBlock {
            fc: DenseLayer::init(width, width, Activation::Gelu, rng),
            gate1: DenseLayer::init(width, mid, Activation::Gelu, rng),
            gate2: DenseLayer::init(mid, width, Activation::Softmax, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.fc.fan_in()
    }

    fn zeros_like(&self) -> Self {
        SeBlock {
            fc: self.fc.zeros_like(),
            gate1: self.gate1.zeros_like(),
            gate2: self.gate2.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array2<f64>, SeBlockCache)> {
        let (z_fc, h) = self.fc.forward_parts(x)?;
        let (z_g1, a_g1) = self.gate1.forward_parts(&h)?;
        let (z_g2, gate) = self.gate2.forward_parts(&a_g1)?;
        let y = x + &(&gate * &h);
        Ok((
            y,
            SeBlockCache {
                x: x.clone(),
                z_fc,
                h,
                z_g1,
                a_g1,
                z_g2,
                gate,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &SeBlockCache,
        dy: &Array2<f64>,
        grads: &mut SeBlock,
    ) -> Array2<f64> {
        // y = x + gate .* h
        let dgate = dy * &cache.h;
        let mut dh = dy * &cache.gate;
        let da_g1 = self.gate2.backward(
            &cache.a_g1,
            &cache.z_g2,
            &cache.gate,
            &dgate,
            &mut grads.gate2,
        );
        dh += &self.gate1.backward(
            &cache.h,
            &cache.z_g1,
            &cache.a_g1,
            &da_g1,
            &mut grads.gate1,
        );
        let dx_branch = self
            .fc
            .backward(&cache.x, &cache.z_fc, &cache.h, &dh, &mut grads.fc);
        dy + &dx_branch
    }
}

/// Residual MLP with squeeze-and-excitation gates on the hidden blocks:
/// a plain input layer, SE blocks at constant width, and a linear head.
#[derive(Debug, Clone)]
pub struct SeResNet {
    pub input: DenseLayer,
    pub blocks: Vec<SeBlock>,
    pub output: DenseLayer,
}

pub struct SeResNetCache {
    x0: Array2<f64>,
    z0: Array2<f64>,
    y0: Array2<f64>,
    blocks: Vec<SeBlockCache>,
    block_out: Array2<f64>,
    z_out: Array2<f64>,
    y_out: Array2<f64>,
}

impl SeResNet {
    pub fn init<R: Rng>(
        fan_in: usize,
        hidden: usize,
        n_blocks: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        SeResNet {
            input: DenseLayer::init(fan_in, hidden, Activation::Gelu, rng),
            blocks: (0..n_blocks).map(|_| SeBlock::init(hidden, rng)).collect(),
            output: DenseLayer::init(hidden, fan_out, Activation::Linear, rng),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.input.fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.output.fan_out()
    }

    pub fn zeros_like(&self) -> Self {
        SeResNet {
            input: self.input.zeros_like(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            output: self.output.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = self.input.forward(x)?;
        for b in &self.blocks {
            cur = b.forward(&cur)?;
        }
        self.output.forward(&cur)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array2<f64>, SeResNetCache)> {
        let (z0, y0) = self.input.forward_parts(x)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut cur = y0.clone();
        for b in &self.blocks {
            let (y, c) = b.forward_cached(&cur)?;
            blocks.push(c);
            cur = y;
        }
        let (z_out, y_out) = self.output.forward_parts(&cur)?;
        Ok((
            y_out.clone(),
            SeResNetCache {
                x0: x.clone(),
                z0,
                y0,
                blocks,
                block_out: cur,
                z_out,
                y_out,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &SeResNetCache,
        dy: &Array2<f64>,
        grads: &mut SeResNet,
    ) -> Array2<f64> {
        let mut cur = self.output.backward(
            &cache.block_out,
            &cache.z_out,
            &cache.y_out,
            dy,
            &mut grads.output,
        );
        for i in (0..self.blocks.len()).rev() {
            cur = self.blocks[i].backward(&cache.blocks[i], &cur, &mut grads.blocks[i]);
        }
        self.input
            .backward(&cache.x0, &cache.z0, &cache.y0, &cur, &mut grads.input)
    }
}

/// Plain residual MLP (no SE gates); used for the trunk network.
#[derive(Debug, Clone)]
pub struct ResNet {
    pub input: DenseLayer,
    pub blocks: Vec<DenseLayer>,
    pub output: DenseLayer,
}

pub struct ResNetCache {
    x0: Array2<f64>,
    z0: Array2<f64>,
    y0: Array2<f64>,
    block_io: Vec<(Array2<f64>, Array2<f64>, Array2<f64>)>,
    block_out: Array2<f64>,
    z_out: Array2<f64>,
    y_out: Array2<f64>,
}

impl ResNet {
    pub fn init<R: Rng>(
        fan_in: usize,
        hidden: usize,
        n_blocks: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        ResNet {
            input: DenseLayer::init(fan_in, hidden, Activation::Gelu, rng),
            blocks: (0..n_blocks)
                .map(|_| DenseLayer::init(hidden, hidden, Activation::Gelu, rng))
                .collect(),
            output: DenseLayer::init(hidden, fan_out, Activation::Linear, rng),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.input.fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.output.fan_out()
    }

    pub fn zeros_like(&self) -> Self {
        ResNet {
            input: self.input.zeros_like(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            output: self.output.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = self.input.forward(x)?;
        for b in &self.blocks {
            let h = b.forward(&cur)?;
            cur = cur + h;
        }
        self.output.forward(&cur)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array2<f64>, ResNetCache)> {
        let (z0, y0) = self.input.forward_parts(x)?;
        let mut block_io = Vec::with_capacity(self.blocks.len());
        let mut cur = y0.clone();
        for b in &self.blocks {
            let (z, h) = b.forward_parts(&cur)?;
            let next = &cur + &h;
            block_io.push((cur, z, h));
            cur = next;
        }
        let (z_out, y_out) = self.output.forward_parts(&cur)?;
        Ok((
            y_out.clone(),
            ResNetCache {
                x0: x.clone(),
                z0,
                y0,
                block_io,
                block_out: cur,
                z_out,
                y_out,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &ResNetCache,
        dy: &Array2<f64>,
        grads: &mut ResNet,
    ) -> Array2<f64> {
        let mut cur = self.output.backward(
            &cache.block_out,
            &cache.z_out,
            &cache.y_out,
            dy,
            &mut grads.output,
        );
        for i in (0..self.blocks.len()).rev() {
            let (x, z, h) = &cache.block_io[i];
            let dbranch = self.blocks[i].backward(x, z, h, &cur, &mut grads.blocks[i]);
            cur += &dbranch;
        }
        self.input
            .backward(&cache.x0, &cache.z0, &cache.y0, &cur, &mut grads.input)
    }
}

/// Lockstep access to every parameter block of a model (weights and biases
/// in a fixed traversal order). Optimizers and serialization both walk this.
pub trait FlatParams {
    fn flat(&self) -> Vec<&[f64]>;
    fn flat_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_params(&self) -> usize {
        self.flat().iter().map(|s| s.len()).sum()
    }
}

impl FlatParams for DenseLayer {
    fn flat(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().unwrap(), self.b.as_slice().unwrap()]
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
        ]
    }
}

impl FlatParams for SeBlock {
    fn flat(&self) -> Vec<&[f64]> {
        let mut v = self.fc.flat();
        v.extend(self.gate1.flat());
        v.extend(self.gate2.flat());
        v
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.fc.flat_mut();
        v.extend(self.gate1.flat_mut());
        v.extend(self.gate2.flat_mut());
        v
    }
}

impl FlatParams for SeResNet {
    fn flat(&self) -> Vec<&[f64]> {
        let mut v = self.input.flat();
        for b in &self.blocks {
            v.extend(b.flat());
        }
        v.extend(self.output.flat());
        v
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.input.flat_mut();
        for b in &mut self.blocks {
            v.extend(b.flat_mut());
        }
        v.extend(self.output.flat_mut());
        v
    }
}

impl FlatParams for ResNet {
    fn flat(&self) -> Vec<&[f64]> {
        let mut v = self.input.flat();
        for b in &self.blocks {
            v.extend(b.flat());
        }
        v.extend(self.output.flat());
        v
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.input.flat_mut();
        for b in &mut self.blocks {
            v.extend(b.flat_mut());
        }
        v.extend(self.output.flat_mut());
        v
    }
}

impl FlatParams for DenseNet {
    fn flat(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.flat()).collect()
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.flat_mut()).collect()
    }
}
