//! Bias-free ReLU multilayer perceptron in the NTK parameterisation.
//!
//! The network maps `x ∈ ℝ^d` to
//! `f(x; θ) = √m · W_L σ(W_{L-1} σ(… σ(W_1 x)))` with `σ(z) = max(z, 0)`,
//! `W_1 ∈ ℝ^{m×d}`, `W_2 … W_{L-1} ∈ ℝ^{m×m}` and `W_L ∈ ℝ^{1×m}`.
//!
//! Parameters live in one flat vector: `vec(W_1), …, vec(W_L)`, each matrix
//! stored column-major. Matrix views handed out by [`NetworkParams::layer`]
//! borrow that same storage, so flat and matrix views can never disagree.
//! The ReLU derivative at exactly zero is taken to be zero.

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::kernel::{Inputs, Prepared};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    input_dim: usize,
    hidden_width: usize,
    depth: usize,
}

impl NetworkConfig {
    /// `input_dim` and `hidden_width` must be even and at least 2, `depth` at
    /// least 2 (one hidden layer).
    pub fn new(input_dim: usize, hidden_width: usize, depth: usize) -> Result<Self> {
        if input_dim < 2 || !input_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "input_dim must be even and >= 2, got {input_dim}"
            )));
        }
        if hidden_width < 2 || !hidden_width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "hidden_width must be even and >= 2, got {hidden_width}"
            )));
        }
        if depth < 2 {
            return Err(Error::Config(format!("depth must be >= 2, got {depth}")));
        }
        Ok(Self {
            input_dim,
            hidden_width,
            depth,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `m·d + m²·(L−2) + m`.
    pub fn param_count(&self) -> usize {
        let m = self.hidden_width;
        m * self.input_dim + m * m * (self.depth - 2) + m
    }

    /// `(rows, cols)` of layer `l` (0-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        assert!(l < self.depth, "layer {l} out of range");
        let m = self.hidden_width;
        if l == self.depth - 1 {
            (1, m)
        } else if l == 0 {
            (m, self.input_dim)
        } else {
            (m, m)
        }
    }

    /// Offset of layer `l` inside the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|k| {
                let (r, c) = self.layer_shape(k);
                r * c
            })
            .sum()
    }
}

/// Flat-layout gradient `∇_θ f(x; θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    theta: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(config: NetworkConfig) -> Self {
        Self {
            config,
            theta: vec![0.0; config.param_count()],
        }
    }

    pub fn from_flat(config: NetworkConfig, theta: Vec<f64>) -> Result<Self> {
        check_len("flat parameter vector", config.param_count(), theta.len())?;
        Ok(Self { config, theta })
    }

    pub fn from_layers(config: NetworkConfig, layers: &[DMatrix<f64>]) -> Result<Self> {
        check_len("layer count", config.depth(), layers.len())?;
        let mut theta = Vec::with_capacity(config.param_count());
        for (l, w) in layers.iter().enumerate() {
            let (r, c) = config.layer_shape(l);
            check_len("layer rows", r, w.nrows())?;
            check_len("layer cols", c, w.ncols())?;
            theta.extend_from_slice(w.as_slice());
        }
        Ok(Self { config, theta })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Matrix view of layer `l` (0-based) over the flat storage.
    pub fn layer(&self, l: usize) -> DMatrixView<'_, f64> {
        let (r, c) = self.config.layer_shape(l);
        let off = self.config.layer_offset(l);
        DMatrixView::from_slice(&self.theta[off..off + r * c], r, c)
    }

    pub fn layers(&self) -> Vec<DMatrix<f64>> {
        (0..self.config.depth())
            .map(|l| self.layer(l).into_owned())
            .collect()
    }

    /// Symmetric initialisation.
    ///
    /// Every hidden layer is block diagonal `[[W, 0], [0, W]]` with the entries
    /// of `W` drawn i.i.d. from `N(0, 2/m)`; the output layer is `(w, −w)`
    /// with `w ~ N(0, 1/m)`. Inputs whose two halves coincide therefore map
    /// to exactly zero. Draw order: layer by layer, `W` column-major, then `w`.
    pub fn init_symmetric<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Self {
        let m = config.hidden_width();
        let hidden = Normal::new(0.0, (2.0 / m as f64).sqrt()).expect("valid std");
        let output = Normal::new(0.0, (1.0 / m as f64).sqrt()).expect("valid std");
        let mut params = Self::zeros(config);
        for l in 0..config.depth() - 1 {
            let (rows, cols) = config.layer_shape(l);
            let (hr, hc) = (rows / 2, cols / 2);
            let off = config.layer_offset(l);
            for j in 0..hc {
                for i in 0..hr {
                    let v = hidden.sample(rng);
                    params.theta[off + j * rows + i] = v;
                    params.theta[off + (j + hc) * rows + (i + hr)] = v;
                }
            }
        }
        let off = config.layer_offset(config.depth() - 1);
        let half = m / 2;
        for k in 0..half {
            let v = output.sample(rng);
            params.theta[off + k] = v;
            params.theta[off + half + k] = -v;
        }
        params
    }

    /// Plain i.i.d. Gaussian initialisation with the same variances as
    /// [`init_symmetric`](Self::init_symmetric) but no weight tying. The
    /// finite-width kernel of this initialisation converges to the NTK
    /// recursion in [`crate::ntk`].
    pub fn init_gaussian<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Self {
        let m = config.hidden_width();
        let hidden = Normal::new(0.0, (2.0 / m as f64).sqrt()).expect("valid std");
        let output = Normal::new(0.0, (1.0 / m as f64).sqrt()).expect("valid std");
        let last = config.layer_offset(config.depth() - 1);
        let theta = (0..config.param_count())
            .map(|i| {
                if i < last {
                    hidden.sample(rng)
                } else {
                    output.sample(rng)
                }
            })
            .collect();
        Self { config, theta }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_len("context", self.config.input_dim(), x.len())?;
        let prep = Prepared::new(self, false);
        let inputs = Inputs::new([x], x.len());
        Ok(prep.evaluate(&inputs, &mut prep.workspace(), |_, z| (z, 0.0), None))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<GradientVector> {
        check_len("context", self.config.input_dim(), x.len())?;
        let prep = Prepared::new(self, false);
        let inputs = Inputs::new([x], x.len());
        let mut grad = vec![0.0; self.len()];
        prep.evaluate(
            &inputs,
            &mut prep.workspace(),
            |_, _| (0.0, 1.0),
            Some(&mut grad),
        );
        Ok(GradientVector(grad))
    }

    /// `θ + step · direction`.
    pub fn axpy(&self, direction: &[f64], step: f64) -> Result<Self> {
        let mut out = self.clone();
        out.axpy_in_place(direction, step)?;
        Ok(out)
    }

    pub fn axpy_in_place(&mut self, direction: &[f64], step: f64) -> Result<()> {
        check_len("direction", self.len(), direction.len())?;
        axpy(&mut self.theta, step, direction);
        Ok(())
    }

    /// `‖θ_self − θ_other‖₂`.
    pub fn distance(&self, other: &NetworkParams) -> Result<f64> {
        Ok(self.distance_sq(other)?.sqrt())
    }

    pub fn distance_sq(&self, other: &NetworkParams) -> Result<f64> {
        check_len("parameter vector", self.len(), other.len())?;
        Ok(self
            .theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// Result of comparing the analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Largest `|fd − g| / max(|fd|, |g|, 1e-6)` over coordinates.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Smallest `|pre-activation|` at `θ`; a kink lies within a step only
    /// if this is below roughly `h`.
    pub kink_margin: f64,
}

impl NetworkParams {
    /// Smallest absolute hidden pre-activation for input `x`.
    pub fn min_abs_preactivation(&self, x: &[f64]) -> Result<f64> {
        check_len("context", self.config.input_dim(), x.len())?;
        Ok(Prepared::new(self, false).min_abs_preactivation(x))
    }
}

/// Central-difference check of [`NetworkParams::gradient`] at `(params, x)`
/// with step `h`, over every coordinate.
pub fn gradient_check(params: &NetworkParams, x: &[f64], h: f64) -> Result<GradientCheck> {
    let g = params.gradient(x)?;
    let mut probe = params.clone();
    let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
    for i in 0..params.len() {
        let orig = probe.theta[i];
        probe.theta[i] = orig + h;
        let up = probe.forward(x)?;
        probe.theta[i] = orig - h;
        let down = probe.forward(x)?;
        probe.theta[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - g.0[i]).abs();
        max_abs = max_abs.max(err);
        max_rel = max_rel.max(err / fd.abs().max(g.0[i].abs()).max(1e-6));
    }
    Ok(GradientCheck {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        kink_margin: params.min_abs_preactivation(x)?,
    })
}

/// Symmetric initialisation of a fresh parameter vector.
pub fn init_params<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> NetworkParams {
    NetworkParams::init_symmetric(config, rng)
}

pub fn param_distance(a: &NetworkParams, b: &NetworkParams) -> Result<f64> {
    a.distance(b)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight independent partial sums let the loop vectorise.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
