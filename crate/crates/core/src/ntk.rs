//! Neural tangent kernel of the ReLU network, effective dimension, and
//! finite-width diagnostics.
//!
//! The kernel recursion starts from `Σ¹ = H̃¹ = ⟨x_i, x_j⟩` and for each layer
//! sets
//!
//! ```text
//! Σ^{l+1} = 2·E[σ(u)σ(v)],   H̃^{l+1} = 2·H̃^l·E[σ̇(u)σ̇(v)] + Σ^{l+1},
//! ```
//!
//! with `(u, v)` centred Gaussian with covariance taken from `Σ^l`. The
//! reported kernel is `H = (H̃^L + Σ^L)/2`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::net::{dot, NetworkParams};
use crate::par::{map_range, Execution};

/// Slack allowed on `|Σ_ij| ≤ √(Σ_ii Σ_jj)` before it counts as non-PSD.
const PSD_SLACK: f64 = 1e-12;

/// Tolerance on `‖x‖₂ = 1` for kernel inputs.
const UNIT_TOL: f64 = 1e-8;

/// `(E[σ(u)σ(v)], E[σ̇(u)σ̇(v)])` for `(u, v) ~ N(0, [[s_ii, s_ij], [s_ij, s_jj]])`
/// with `σ` the ReLU.
pub fn arc_cosine_expectation(s_ii: f64, s_jj: f64, s_ij: f64) -> Result<(f64, f64)> {
    if !(s_ii >= 0.0 && s_jj >= 0.0) || !s_ij.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            message: format!("invalid covariance ({s_ii}, {s_jj}, {s_ij})"),
        });
    }
    let scale = (s_ii * s_jj).sqrt();
    if s_ij.abs() > scale + PSD_SLACK {
        return Err(Error::Numeric {
            step: 0,
            message: format!("covariance is not PSD: |{s_ij}| > √({s_ii}·{s_jj})"),
        });
    }
    if scale == 0.0 {
        // a degenerate coordinate is identically zero, and σ̇(0) = 0
        return Ok((0.0, 0.0));
    }
    let cos = (s_ij / scale).clamp(-1.0, 1.0);
    let gamma = cos.acos();
    let ss = scale / (2.0 * PI) * (gamma.sin() + (PI - gamma) * cos);
    let dd = (PI - gamma) / (2.0 * PI);
    Ok((ss, dd))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkMatrix {
    pub h: DMatrix<f64>,
    pub depth: usize,
}

impl NtkMatrix {
    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.h)
    }
}

fn sorted_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    if h.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Kernel matrix over unit-norm `contexts` for a depth-`depth` network.
pub fn ntk_matrix<C: AsRef<[f64]> + Sync>(contexts: &[C], depth: usize) -> Result<NtkMatrix> {
    ntk_matrix_with(contexts, depth, Execution::default())
}

pub fn ntk_matrix_with<C: AsRef<[f64]> + Sync>(
    contexts: &[C],
    depth: usize,
    execution: Execution,
) -> Result<NtkMatrix> {
    if depth < 2 {
        return Err(Error::Config(format!(
            "depth must be at least 2, got {depth}"
        )));
    }
    let n = contexts.len();
    if let Some(first) = contexts.first() {
        let d = first.as_ref().len();
        for (i, c) in contexts.iter().enumerate() {
            let x = c.as_ref();
            check_len("kernel context", d, x.len())?;
            let norm = dot(x, x).sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::Contract(format!(
                    "context {i} has norm {norm}, expected 1"
                )));
            }
        }
    }
    let diag: Vec<f64> = contexts
        .iter()
        .map(|c| dot(c.as_ref(), c.as_ref()))
        .collect();
    // The diagonal recursion is shared by every off-diagonal entry.
    let mut diag_sigma = vec![diag.clone()];
    for l in 0..depth - 1 {
        let next = diag_sigma[l]
            .iter()
            .map(|&s| arc_cosine_expectation(s, s, s).map(|(ss, _)| 2.0 * ss))
            .collect::<Result<Vec<_>>>()?;
        diag_sigma.push(next);
    }
    let entry = |i: usize, j: usize| -> Result<f64> {
        let mut sigma = dot(contexts[i].as_ref(), contexts[j].as_ref());
        let mut h_tilde = sigma;
        for levels in diag_sigma.iter().take(depth - 1) {
            let (ss, dd) = arc_cosine_expectation(levels[i], levels[j], sigma)?;
            sigma = 2.0 * ss;
            h_tilde = 2.0 * h_tilde * dd + sigma;
        }
        Ok(0.5 * (h_tilde + sigma))
    };
    let rows: Vec<Result<Vec<f64>>> =
        map_range(execution, n, |i| (i..n).map(|j| entry(i, j)).collect());
    let mut h = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row?.into_iter().enumerate() {
            h[(i, i + off)] = v;
            h[(i + off, i)] = v;
        }
    }
    Ok(NtkMatrix { h, depth })
}

/// `log det(I + H/λ) / log(1 + n/λ)`, through the eigenvalues of `H`.
pub fn effective_dim(h: &DMatrix<f64>, lambda: f64, n: usize) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if h.nrows() != h.ncols() {
        return Err(Error::Shape {
            what: "kernel matrix columns",
            expected: h.nrows(),
            actual: h.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::Config("context count must be positive".into()));
    }
    let log_det: f64 = sorted_eigenvalues(h)
        .iter()
        .map(|&mu| (mu.max(0.0) / lambda).ln_1p())
        .sum();
    Ok(log_det / (n as f64 / lambda).ln_1p())
}

/// `|f(x; θ) − ⟨g(x; θ₀), θ − θ₀⟩|`.
pub fn linearization_error(
    params: &NetworkParams,
    anchor: &NetworkParams,
    x: &[f64],
) -> Result<f64> {
    check_len("parameter vector", anchor.len(), params.len())?;
    let g0 = anchor.gradient(x)?;
    let diff: Vec<f64> = params
        .as_flat()
        .iter()
        .zip(anchor.as_flat())
        .map(|(a, b)| a - b)
        .collect();
    Ok((params.forward(x)? - g0.dot(&diff)).abs())
}

/// Finite-width kernel `⟨g(x_i; θ), g(x_j; θ)⟩ / m`.
pub fn empirical_kernel<C: AsRef<[f64]> + Sync>(
    params: &NetworkParams,
    contexts: &[C],
    execution: Execution,
) -> Result<DMatrix<f64>> {
    let grads = map_range(execution, contexts.len(), |i| {
        params.gradient(contexts[i].as_ref())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let m = params.config().hidden_width() as f64;
    let n = grads.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        grads[i].dot(grads[j].as_slice()) / m
    }))
}

/// Reported facts about a kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkDiagnostics {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub asymmetry: f64,
    /// `H ⪰ λI`.
    pub dominates_lambda: bool,
    /// Index pairs `(i, j)`, `i < j`, with `x_i ∥ x_j`.
    pub parallel_pairs: Vec<(usize, usize)>,
}

pub fn diagnostics<C: AsRef<[f64]>>(
    ntk: &NtkMatrix,
    contexts: &[C],
    lambda: f64,
) -> NtkDiagnostics {
    let ev = ntk.eigenvalues();
    let min_eigenvalue = ev.first().copied().unwrap_or(0.0);
    let max_eigenvalue = ev.last().copied().unwrap_or(0.0);
    let asymmetry = (&ntk.h - ntk.h.transpose()).abs().max();
    let mut parallel_pairs = Vec::new();
    for i in 0..contexts.len() {
        for j in i + 1..contexts.len() {
            let (a, b) = (contexts[i].as_ref(), contexts[j].as_ref());
            let denom = (dot(a, a) * dot(b, b)).sqrt();
            if denom > 0.0 && (dot(a, b).abs() / denom - 1.0).abs() < 1e-12 {
                parallel_pairs.push((i, j));
            }
        }
    }
    NtkDiagnostics {
        min_eigenvalue,
        max_eigenvalue,
        asymmetry,
        dominates_lambda: min_eigenvalue >= lambda,
        parallel_pairs,
    }
}
