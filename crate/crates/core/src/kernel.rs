//! Forward and backward passes used by every fit.
//!
//! Inputs are kept as their nonzero entries, so block-one-hot dataset
//! contexts cost nothing for their zeros. Two-layer networks work on blocks
//! of eight hidden units held in SIMD registers, with the hidden width
//! padded to a multiple of eight. When the inputs are short and dense they
//! are processed block by block over the whole batch, so each block's
//! weights and gradient sums stay in registers across samples. Deeper
//! networks use plain column loops, one sample at a time.
//!
//! A network can be *folded* for inputs whose two halves are equal: the
//! first layer's column halves are summed once, the input is passed as its
//! first half, and the first-layer gradient is written to both halves at the
//! end. This halves the first-layer cost and gives the same values up to
//! rounding.

use std::borrow::Cow;

use wide::f64x8;

use crate::net::{axpy, dot, NetworkConfig, NetworkParams};

const BLOCK: usize = 8;
type Lane = f64x8;
const ZERO: Lane = f64x8::ZERO;

/// Widest dense input taken by the batched two-layer path.
const MAX_DENSE: usize = 8;

/// Nonzero entries `(index, value)` of `x`, in index order.
pub(crate) fn nonzeros(x: &[f64]) -> Vec<(usize, f64)> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, &v)| (j, v))
        .collect()
}

/// Whether `x` has even length and equal halves.
pub(crate) fn has_equal_halves(x: &[f64]) -> bool {
    let h = x.len() / 2;
    x.len().is_multiple_of(2) && h > 0 && x[..h] == x[h..]
}

#[inline(always)]
fn relu(h: f64) -> f64 {
    if h > 0.0 {
        h
    } else {
        0.0
    }
}

/// `ReLU'(p) · v`, lane-wise.
#[inline(always)]
fn gate(p: Lane, v: Lane) -> Lane {
    p.simd_gt(ZERO) & v
}

/// `G += delta · xᵀ` for column-major `g` with `delta.len()` rows.
fn add_outer(g: &mut [f64], delta: &[f64], x: &[(usize, f64)]) {
    let rows = delta.len();
    for &(j, xj) in x {
        axpy(&mut g[j * rows..(j + 1) * rows], xj, delta);
    }
}

/// A batch of network inputs, already cut to the first `k` coordinates.
#[derive(Debug, Clone)]
pub(crate) struct Inputs {
    k: usize,
    sparse: Vec<Vec<(usize, f64)>>,
    /// Row-major `n × k` copy, kept only when `k ≤ MAX_DENSE`.
    dense: Vec<f64>,
}

impl Inputs {
    pub(crate) fn new<'c>(contexts: impl IntoIterator<Item = &'c [f64]>, k: usize) -> Self {
        let mut sparse = Vec::new();
        let mut dense = Vec::new();
        for x in contexts {
            let x = &x[..k];
            sparse.push(nonzeros(x));
            if k <= MAX_DENSE {
                dense.extend_from_slice(x);
            }
        }
        Self { k, sparse, dense }
    }

    pub(crate) fn len(&self) -> usize {
        self.sparse.len()
    }
}

/// Scratch buffers for one sample.
#[derive(Debug, Clone)]
struct Tape {
    lanes: Vec<Lane>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    active: Vec<Vec<(usize, f64)>>,
    delta: Vec<f64>,
    spare: Vec<f64>,
}

impl Tape {
    fn new(config: &NetworkConfig) -> Self {
        let m = config.hidden_width();
        let hidden = config.depth() - 1;
        if hidden == 1 {
            return Self {
                lanes: vec![ZERO; m.div_ceil(BLOCK)],
                pre: Vec::new(),
                act: Vec::new(),
                active: Vec::new(),
                delta: Vec::new(),
                spare: Vec::new(),
            };
        }
        Self {
            lanes: Vec::new(),
            pre: vec![vec![0.0; m]; hidden],
            act: vec![vec![0.0; m]; hidden],
            active: vec![Vec::with_capacity(m); hidden],
            delta: vec![0.0; m],
            spare: vec![0.0; m],
        }
    }
}

/// Gradient sums, in the layout of the path that produced them.
#[derive(Debug, Clone)]
struct Accumulator {
    lanes_first: Vec<Lane>,
    lanes_out: Vec<Lane>,
    first: Vec<f64>,
    rest: Vec<f64>,
}

impl Accumulator {
    fn reset(&mut self) {
        self.lanes_first.iter_mut().for_each(|v| *v = ZERO);
        self.lanes_out.iter_mut().for_each(|v| *v = ZERO);
        self.first.iter_mut().for_each(|v| *v = 0.0);
        self.rest.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Buffers reused across evaluations of one batch shape.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    tape: Tape,
    acc: Accumulator,
    pre: Vec<Lane>,
    out: Vec<Lane>,
    coeffs: Vec<f64>,
}

/// Two-layer weights in lane layout: block `b` of hidden units against input
/// `j` sits at `first[b * k + j]`.
#[derive(Debug, Clone)]
struct Shallow {
    first: Vec<Lane>,
    out: Vec<Lane>,
}

/// Parameters laid out for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<'a> {
    params: &'a NetworkParams,
    /// First layer, `m × k`, column-major.
    first: Cow<'a, [f64]>,
    k: usize,
    folded: bool,
    shallow: Option<Shallow>,
}

fn to_lanes(values: &[f64], blocks: usize) -> Vec<Lane> {
    let mut out = vec![[0.0; BLOCK]; blocks];
    for (i, &v) in values.iter().enumerate() {
        out[i / BLOCK][i % BLOCK] = v;
    }
    out.into_iter().map(f64x8::from).collect()
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(params: &'a NetworkParams, folded: bool) -> Self {
        let cfg = params.config();
        let (m, d) = (cfg.hidden_width(), cfg.input_dim());
        let w1 = &params.as_flat()[..m * d];
        let k = if folded { d / 2 } else { d };
        let first = if folded {
            let mut f = w1[..m * k].to_vec();
            axpy(&mut f, 1.0, &w1[m * k..]);
            Cow::Owned(f)
        } else {
            Cow::Borrowed(w1)
        };
        let shallow = (cfg.depth() == 2).then(|| {
            let nb = m.div_ceil(BLOCK);
            let mut lanes = vec![[0.0; BLOCK]; nb * k];
            for j in 0..k {
                for i in 0..m {
                    lanes[(i / BLOCK) * k + j][i % BLOCK] = first[j * m + i];
                }
            }
            Shallow {
                first: lanes.into_iter().map(f64x8::from).collect(),
                out: to_lanes(&params.as_flat()[cfg.layer_offset(1)..], nb),
            }
        });
        Self {
            params,
            first,
            k,
            folded,
            shallow,
        }
    }

    /// Number of leading input coordinates the network reads.
    pub(crate) fn input_len(&self) -> usize {
        self.k
    }

    pub(crate) fn workspace(&self) -> Workspace {
        let cfg = self.params.config();
        let m = cfg.hidden_width();
        let acc = match &self.shallow {
            Some(s) => Accumulator {
                lanes_first: vec![ZERO; s.first.len()],
                lanes_out: vec![ZERO; s.out.len()],
                first: Vec::new(),
                rest: Vec::new(),
            },
            None => Accumulator {
                lanes_first: Vec::new(),
                lanes_out: Vec::new(),
                first: vec![0.0; m * self.k],
                rest: vec![0.0; cfg.param_count() - cfg.layer_offset(1)],
            },
        };
        Workspace {
            tape: Tape::new(cfg),
            acc,
            pre: Vec::new(),
            out: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    fn sqrt_m(&self) -> f64 {
        (self.params.config().hidden_width() as f64).sqrt()
    }

    /// Evaluates the network on every input. `term(i, f(x_i))` returns a
    /// value and a coefficient; the values are summed and returned, and when
    /// `grad` is given, `Σ_i coeff_i · ∇f(x_i)` is added into it.
    pub(crate) fn evaluate(
        &self,
        inputs: &Inputs,
        ws: &mut Workspace,
        term: impl FnMut(usize, f64) -> (f64, f64),
        grad: Option<&mut [f64]>,
    ) -> f64 {
        debug_assert_eq!(inputs.k, self.k);
        if let (Some(sh), false) = (&self.shallow, inputs.dense.is_empty()) {
            return match self.k {
                1 => self.batched::<1>(sh, inputs, ws, term, grad),
                2 => self.batched::<2>(sh, inputs, ws, term, grad),
                3 => self.batched::<3>(sh, inputs, ws, term, grad),
                4 => self.batched::<4>(sh, inputs, ws, term, grad),
                5 => self.batched::<5>(sh, inputs, ws, term, grad),
                6 => self.batched::<6>(sh, inputs, ws, term, grad),
                7 => self.batched::<7>(sh, inputs, ws, term, grad),
                _ => self.batched::<8>(sh, inputs, ws, term, grad),
            };
        }
        self.per_sample(inputs, ws, term, grad)
    }

    fn per_sample(
        &self,
        inputs: &Inputs,
        ws: &mut Workspace,
        mut term: impl FnMut(usize, f64) -> (f64, f64),
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let sqrt_m = self.sqrt_m();
        ws.acc.reset();
        let mut total = 0.0;
        for (i, x) in inputs.sparse.iter().enumerate() {
            let z = sqrt_m * self.forward_one(x, &mut ws.tape);
            let (v, c) = term(i, z);
            total += v;
            if grad.is_some() && c != 0.0 {
                self.backward_one(x, &mut ws.tape, c * sqrt_m, &mut ws.acc);
            }
        }
        if let Some(g) = grad {
            self.finish(&ws.acc, g);
        }
        total
    }

    fn batched<const K: usize>(
        &self,
        sh: &Shallow,
        inputs: &Inputs,
        ws: &mut Workspace,
        mut term: impl FnMut(usize, f64) -> (f64, f64),
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let n = inputs.len();
        let nb = sh.out.len();
        let xs = inputs
            .dense
            .chunks_exact(K)
            .map(|x| -> &[f64; K] { x.try_into().unwrap() });
        ws.pre.resize(n * nb, ZERO);
        ws.out.clear();
        ws.out.resize(n, ZERO);
        for b in 0..nb {
            let cols: [Lane; K] = std::array::from_fn(|j| sh.first[b * K + j]);
            let w = sh.out[b];
            for (i, x) in xs.clone().enumerate() {
                let mut p = ZERO;
                for j in 0..K {
                    p = cols[j].mul_add(f64x8::splat(x[j]), p);
                }
                ws.pre[i * nb + b] = p;
                ws.out[i] = w.mul_add(p.max(ZERO), ws.out[i]);
            }
        }

        let sqrt_m = self.sqrt_m();
        ws.coeffs.resize(n, 0.0);
        let mut total = 0.0;
        for i in 0..n {
            let (v, c) = term(i, sqrt_m * ws.out[i].reduce_add());
            total += v;
            ws.coeffs[i] = c * sqrt_m;
        }

        if let Some(grad) = grad {
            for b in 0..nb {
                let w = sh.out[b];
                let mut g_first = [ZERO; K];
                let mut g_out = ZERO;
                for (i, x) in xs.clone().enumerate() {
                    let p = ws.pre[i * nb + b];
                    let s = f64x8::splat(ws.coeffs[i]);
                    g_out = s.mul_add(p.max(ZERO), g_out);
                    let delta = gate(p, s * w);
                    for j in 0..K {
                        g_first[j] = delta.mul_add(f64x8::splat(x[j]), g_first[j]);
                    }
                }
                ws.acc.lanes_first[b * K..(b + 1) * K].copy_from_slice(&g_first);
                ws.acc.lanes_out[b] = g_out;
            }
            self.finish(&ws.acc, grad);
        }
        total
    }

    /// `f(x) / √m` for one sparse input, leaving activations in `tape`.
    fn forward_one(&self, x: &[(usize, f64)], tape: &mut Tape) -> f64 {
        if let Some(sh) = &self.shallow {
            let k = self.k;
            let mut z = ZERO;
            for (b, (pre, w)) in tape.lanes.iter_mut().zip(&sh.out).enumerate() {
                let cols = &sh.first[b * k..(b + 1) * k];
                let mut p = ZERO;
                for &(j, xj) in x {
                    p = cols[j].mul_add(f64x8::splat(xj), p);
                }
                *pre = p;
                z = w.mul_add(p.max(ZERO), z);
            }
            return z.reduce_add();
        }

        let cfg = self.params.config();
        let theta = self.params.as_flat();
        let m = cfg.hidden_width();
        let hidden = cfg.depth() - 1;
        for l in 0..hidden {
            let (done, rest) = tape.active.split_at_mut(l);
            let (w, input): (&[f64], &[(usize, f64)]) = if l == 0 {
                (&self.first, x)
            } else {
                let off = cfg.layer_offset(l);
                (&theta[off..off + m * m], &done[l - 1])
            };
            let pre = &mut tape.pre[l];
            pre.iter_mut().for_each(|v| *v = 0.0);
            for &(j, xj) in input {
                axpy(pre, xj, &w[j * m..(j + 1) * m]);
            }
            for (a, &h) in tape.act[l].iter_mut().zip(pre.iter()) {
                *a = relu(h);
            }
            // Only deeper layers read the sparse form.
            if l + 1 < hidden {
                let active = &mut rest[0];
                active.clear();
                active.extend(
                    pre.iter()
                        .enumerate()
                        .filter(|(_, h)| **h > 0.0)
                        .map(|(i, &h)| (i, h)),
                );
            }
        }
        let off = cfg.layer_offset(hidden);
        dot(&theta[off..off + m], &tape.act[hidden - 1])
    }

    /// Adds `s · ∇f(x) / √m` for the sample last passed to
    /// [`forward_one`](Self::forward_one).
    fn backward_one(&self, x: &[(usize, f64)], tape: &mut Tape, s: f64, acc: &mut Accumulator) {
        if let Some(sh) = &self.shallow {
            let k = self.k;
            let s = f64x8::splat(s);
            for (b, ((p, w), g_out)) in tape
                .lanes
                .iter()
                .zip(&sh.out)
                .zip(&mut acc.lanes_out)
                .enumerate()
            {
                *g_out = s.mul_add(p.max(ZERO), *g_out);
                let delta = gate(*p, s * *w);
                let g = &mut acc.lanes_first[b * k..(b + 1) * k];
                for &(j, xj) in x {
                    g[j] = delta.mul_add(f64x8::splat(xj), g[j]);
                }
            }
            return;
        }

        let cfg = self.params.config();
        let theta = self.params.as_flat();
        let m = cfg.hidden_width();
        let hidden = cfg.depth() - 1;
        let base = cfg.layer_offset(1);
        let rest = &mut acc.rest;

        let out_off = cfg.layer_offset(hidden);
        let out = &theta[out_off..out_off + m];
        axpy(
            &mut rest[out_off - base..out_off - base + m],
            s,
            &tape.act[hidden - 1],
        );
        for ((d, &w), &h) in tape.delta.iter_mut().zip(out).zip(&tape.pre[hidden - 1]) {
            *d = if h > 0.0 { s * w } else { 0.0 };
        }

        for l in (1..hidden).rev() {
            let off = cfg.layer_offset(l);
            add_outer(
                &mut rest[off - base..off - base + m * m],
                &tape.delta,
                &tape.active[l - 1],
            );
            let w = &theta[off..off + m * m];
            tape.spare.iter_mut().for_each(|v| *v = 0.0);
            for &(j, _) in &tape.active[l - 1] {
                tape.spare[j] = dot(&w[j * m..(j + 1) * m], &tape.delta);
            }
            std::mem::swap(&mut tape.delta, &mut tape.spare);
        }
        add_outer(&mut acc.first, &tape.delta, x);
    }

    /// Adds the sums in `acc` into the full gradient `grad`.
    fn finish(&self, acc: &Accumulator, grad: &mut [f64]) {
        let cfg = self.params.config();
        let m = cfg.hidden_width();
        let base = cfg.layer_offset(1);
        let (k, halves) = (self.k, if self.folded { 2 } else { 1 });
        if self.shallow.is_some() {
            let first: Vec<[f64; BLOCK]> = acc.lanes_first.iter().map(|l| l.to_array()).collect();
            for h in 0..halves {
                for j in 0..k {
                    let col = &mut grad[(h * k + j) * m..(h * k + j + 1) * m];
                    for (i, g) in col.iter_mut().enumerate() {
                        *g += first[(i / BLOCK) * k + j][i % BLOCK];
                    }
                }
            }
            for (i, g) in grad[base..base + m].iter_mut().enumerate() {
                *g += acc.lanes_out[i / BLOCK].to_array()[i % BLOCK];
            }
        } else {
            for h in 0..halves {
                axpy(&mut grad[h * m * k..(h + 1) * m * k], 1.0, &acc.first);
            }
            axpy(&mut grad[base..], 1.0, &acc.rest);
        }
    }

    /// Smallest absolute hidden pre-activation for input `x`.
    pub(crate) fn min_abs_preactivation(&self, x: &[f64]) -> f64 {
        let mut tape = Tape::new(self.params.config());
        self.forward_one(&nonzeros(&x[..self.k]), &mut tape);
        let m = self.params.config().hidden_width();
        let lanes = tape.lanes.iter().flat_map(|l| l.to_array()).take(m);
        lanes
            .chain(tape.pre.iter().flatten().copied())
            .fold(f64::INFINITY, |a, v| a.min(v.abs()))
    }
}
