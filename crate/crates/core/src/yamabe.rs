//! The CR Laplacian `L = b_nΔ_θ + S` on a grid, the Yamabe functionals,
//! constrained minimization, Green functions and related experiments.
//!
//! The discrete operator is assembled in weak form,
//! `L u = W⁻¹ b_n Σ_j D_jᵀ W (Q D u)_j + S u`, where `D_j` are the grid's
//! first-derivative operators, `Q` is the gradient metric (`|du|²_θ = Q(du, du)`)
//! and `W` the θ-volume quadrature weights. It is therefore symmetric for the
//! weighted inner product by construction.

use crate::conformal::{critical_exponent, rescale, ConformalChange};
use crate::error::{CrError, Result};
use crate::field::{ScalarField, TrigField};
use crate::geometry::{CRManifold, PointGeometry};
use crate::grid::{AxisKind, Grid};
use crate::jet::C64;
use crate::webster::{gradient_metric, webster};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `b_n = 2 + 2/n`.
pub fn b_n(n: usize) -> f64 {
    2.0 + 2.0 / n as f64
}

/// Node values of a function on the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridDensity {
    pub values: Vec<f64>,
    pub positive: bool,
    /// Analytic source, when the values were sampled from a field.
    #[serde(skip)]
    pub source: Option<ScalarField>,
}

impl GridDensity {
    pub fn new(values: Vec<f64>, positive: bool) -> Result<GridDensity> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CrError::NonFiniteField(vec![i as f64]));
        }
        if positive {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(CrError::NonPositiveDensity(min));
            }
        }
        Ok(GridDensity { values, positive, source: None })
    }

    pub fn constant(len: usize, c: f64) -> Result<GridDensity> {
        GridDensity::new(vec![c; len], c > 0.0)
    }

    /// Samples `f` at the grid nodes and keeps it as the analytic source.
    pub fn from_field(m: &CRManifold, f: &ScalarField) -> Result<GridDensity> {
        let g = m.grid()?;
        let values: Vec<f64> = (0..g.len()).into_par_iter().map(|i| f.real(&g.coords(i))).collect::<Result<_>>()?;
        let positive = values.iter().all(|v| *v > 0.0);
        let mut d = GridDensity::new(values, positive)?;
        d.source = Some(f.clone());
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Assembled discrete CR Laplacian (frozen after assembly).
#[derive(Clone, Debug)]
pub struct CrLaplacian {
    pub n: usize,
    pub b: f64,
    manifold: CRManifold,
    grid: Arc<Grid>,
    weights: Vec<f64>,
    /// Row-major `d×d` gradient metric per node.
    q: Vec<f64>,
    scalar: Vec<f64>,
}

impl CrLaplacian {
    pub fn assemble(m: &CRManifold) -> Result<CrLaplacian> {
        let grid = m
            .grid
            .clone()
            .ok_or_else(|| CrError::StencilNotAssembled(format!("{} has no grid", m.label)))?;
        let d = grid.dim();
        let weights = m.node_weights()?;
        let per_node: Vec<(Vec<f64>, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.coords(i);
                let pg = PointGeometry::new(m, &x, 1)?;
                let q = gradient_metric(&pg);
                let s = webster(m, &x)?.scalar.unwrap_or(0.0);
                Ok((q.transpose().as_slice().to_vec(), s))
            })
            .collect::<Result<_>>()?;
        let mut q = Vec::with_capacity(grid.len() * d * d);
        let mut scalar = Vec::with_capacity(grid.len());
        for (qi, s) in per_node {
            q.extend(qi);
            scalar.push(s);
        }
        Ok(CrLaplacian { n: m.n, b: b_n(m.n), manifold: m.clone(), grid, weights, q, scalar })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn manifold(&self) -> &CRManifold {
        &self.manifold
    }
    /// θ-volume quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn scalar(&self) -> &[f64] {
        &self.scalar
    }
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }
    pub fn exponent(&self) -> f64 {
        critical_exponent(self.n)
    }
    fn q_at(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.q[i * d * d..(i + 1) * d * d]
    }

    /// Weighted inner product `Σ W_i a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    fn gradients(&self, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.grid.dim()).map(|a| self.grid.derivative(a).apply(u)).collect()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let du = self.gradients(u);
        let mut out = vec![0.0; u.len()];
        for j in 0..d {
            let flux: Vec<f64> = (0..u.len())
                .map(|i| {
                    let q = self.q_at(i);
                    self.weights[i] * (0..d).map(|k| q[j * d + k] * du[k][i]).sum::<f64>()
                })
                .collect();
            for (o, v) in out.iter_mut().zip(self.grid.derivative(j).apply_transpose(&flux)) {
                *o += v;
            }
        }
        out.iter().enumerate().map(|(i, v)| self.b * v / self.weights[i] + self.scalar[i] * u[i]).collect()
    }

    /// Pointwise `b_n Q(du, du) + S u²` from discrete gradients.
    fn energy_density(&self, u: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let du = self.gradients(u);
        (0..u.len())
            .map(|i| {
                let q = self.q_at(i);
                let mut s = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        s += q[j * d + k] * du[j][i] * du[k][i];
                    }
                }
                self.b * s + self.scalar[i] * u[i] * u[i]
            })
            .collect()
    }

    /// Pointwise `Q(dv, dv)` from the analytic jets of `f`.
    fn analytic_grad_sq(&self, f: &ScalarField) -> Result<Vec<f64>> {
        let d = self.grid.dim();
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let g: Vec<f64> = f.jet(&self.grid.coords(i), 1)?.gradient().iter().map(|c| c.re).collect();
                let q = self.q_at(i);
                let mut s = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        s += q[j * d + k] * g[j] * g[k];
                    }
                }
                Ok(s)
            })
            .collect()
    }
}

/// `L_θ u` on the grid of `m`.
pub fn cr_laplacian_apply(m: &CRManifold, u: &GridDensity) -> Result<GridDensity> {
    let op = CrLaplacian::assemble(m)?;
    GridDensity::new(op.apply(&u.values), false)
}

/// The two discrete forms of `A(θ; u)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyForms {
    /// `∫ (b_n|du|² + S u²)`; gradients from the analytic source when present.
    pub gradient: f64,
    /// `∫ u L u` with the discrete operator.
    pub operator: f64,
    /// `|gradient − operator| / max(1, |gradient|)`.
    pub defect: f64,
}

impl EnergyForms {
    pub fn value(&self) -> f64 {
        self.gradient
    }
}

pub fn functional_a(op: &CrLaplacian, u: &GridDensity) -> Result<EnergyForms> {
    let v = &u.values;
    let operator = op.inner(v, &op.apply(v));
    let gradient = match &u.source {
        Some(f) => {
            let g2 = op.analytic_grad_sq(f)?;
            (0..v.len()).map(|i| op.weights[i] * (op.b * g2[i] + op.scalar[i] * v[i] * v[i])).sum()
        }
        None => op.weights.iter().zip(op.energy_density(v)).map(|(w, e)| w * e).sum(),
    };
    Ok(EnergyForms { gradient, operator, defect: (gradient - operator).abs() / gradient.abs().max(1.0) })
}

/// `B(θ; u) = ∫ |u|^p`.
pub fn functional_b(op: &CrLaplacian, u: &GridDensity) -> f64 {
    let p = op.exponent();
    op.weights.iter().zip(&u.values).map(|(w, v)| w * v.abs().powf(p)).sum()
}

/// Options of [`yamabe_minimize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target for `‖L u − A u^{p−1}‖ / ‖u‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// First trial step of the line search.
    pub step: f64,
    /// Clip floor relative to `max u`.
    pub clip_floor: f64,
    /// Largest tolerated fraction of clipped nodes in one step.
    pub max_clip_fraction: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-7, max_iter: 4000, step: 1.0, clip_floor: 1e-8, max_clip_fraction: 0.05, armijo: 1e-4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct YamabeSolution {
    #[serde(skip)]
    pub u: GridDensity,
    #[serde(rename = "Y_est")]
    pub y_est: f64,
    #[serde(rename = "EL_residual")]
    pub el_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy along the accepted iterates as tracked by the line search
    /// (start value plus accepted decrements), starting with the
    /// normalized init.
    #[serde(skip)]
    pub history: Vec<f64>,
    /// Steps in which clipping touched at least one node.
    pub clipped_steps: usize,
}

impl YamabeSolution {
    pub fn require_converged(self) -> Result<YamabeSolution> {
        if self.converged {
            Ok(self)
        } else {
            Err(CrError::NonConvergence { iterations: self.iterations, residual: self.el_residual })
        }
    }
}

struct Iterate {
    u: Vec<f64>,
    lu: Vec<f64>,
    a: f64,
    grad: Vec<f64>,
    res: f64,
}

fn iterate_from(op: &CrLaplacian, mut u: Vec<f64>) -> Iterate {
    let p = op.exponent();
    let b: f64 = op.weights.iter().zip(&u).map(|(w, v)| w * v.abs().powf(p)).sum();
    let s = b.powf(-1.0 / p);
    u.iter_mut().for_each(|v| *v *= s);
    let lu = op.apply(&u);
    let a = op.inner(&u, &lu);
    let grad: Vec<f64> = u.iter().zip(&lu).map(|(v, l)| l - a * v.abs().powf(p - 2.0) * v).collect();
    let res = op.norm(&grad) / op.norm(&u);
    Iterate { u, lu, a, grad, res }
}

/// `E(α) = A(u+αd) / B(u+αd)^{2/p}` and its derivative, with `A` exact
/// (quadratic in α) and `B` summed directly.
fn line_energy(op: &CrLaplacian, it: &Iterate, d: &[f64], ld_d: f64, d_lu: f64, alpha: f64) -> (f64, f64) {
    let p = op.exponent();
    let a = it.a + 2.0 * alpha * d_lu + alpha * alpha * ld_d;
    let da = 2.0 * d_lu + 2.0 * alpha * ld_d;
    let (mut b, mut db) = (0.0, 0.0);
    for i in 0..d.len() {
        let v = it.u[i] + alpha * d[i];
        let av = v.abs();
        b += op.weights[i] * av.powf(p);
        db += op.weights[i] * p * av.powf(p - 2.0) * v * d[i];
    }
    let s = b.powf(-2.0 / p);
    (a * s, s * (da - 2.0 / p * a * db / b))
}

/// `E(α) − E(0)` without cancellation: `ΔA` is exact in α and the ratio
/// `B(α)/B(0)` is accumulated through `expm1`/`ln1p`. Requires
/// `u + αd > 0`.
fn energy_change(op: &CrLaplacian, it: &Iterate, d: &[f64], ld_d: f64, d_lu: f64, alpha: f64) -> f64 {
    let p = op.exponent();
    let da = 2.0 * alpha * d_lu + alpha * alpha * ld_d;
    let (mut b0, mut db) = (0.0, 0.0);
    for i in 0..d.len() {
        let up = it.u[i].powf(p);
        b0 += op.weights[i] * up;
        db += op.weights[i] * up * (p * (alpha * d[i] / it.u[i]).ln_1p()).exp_m1();
    }
    let ratio = (-2.0 / p * (db / b0).ln_1p()).exp_m1();
    b0.powf(-2.0 / p) * (da * (1.0 + ratio) + it.a * ratio)
}

/// Minimizes `A/B^{2/p}` by Polak–Ribière nonlinear conjugate gradients,
/// renormalizing to `B = 1` after each step. The line search minimizes the
/// restricted energy along the direction (bracketing from `opts.step`) and
/// safeguards the result with Armijo backtracking by halving.
pub fn yamabe_minimize(op: &CrLaplacian, init: &GridDensity, opts: &SolverOptions) -> Result<YamabeSolution> {
    if init.len() != op.len() {
        return Err(CrError::Config(format!("init has {} values, grid has {}", init.len(), op.len())));
    }
    let min0 = init.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min0 > 0.0) {
        return Err(CrError::NonPositiveDensity(min0));
    }
    let mut it = iterate_from(op, init.values.clone());
    let mut energy = it.a;
    let mut history = vec![energy];
    let mut dir: Vec<f64> = it.grad.iter().map(|g| -g).collect();
    let mut clipped_steps = 0;
    let mut iterations = 0;
    while it.res > opts.tol && iterations < opts.max_iter {
        let mut slope = op.inner(&it.grad, &dir);
        if slope >= 0.0 {
            dir = it.grad.iter().map(|g| -g).collect();
            slope = op.inner(&it.grad, &dir);
        }
        if slope >= 0.0 {
            break;
        }
        let ld = op.apply(&dir);
        let ld_d = op.inner(&dir, &ld);
        let d_lu = op.inner(&dir, &it.lu);

        // largest step keeping every value above the floor
        let floor = opts.clip_floor * it.u.iter().copied().fold(0.0, f64::max);
        let mut alpha_max = f64::INFINITY;
        for (u, d) in it.u.iter().zip(&dir) {
            if *d < 0.0 {
                alpha_max = alpha_max.min((u - floor) / -d);
            }
        }
        // bracket the first zero of E'
        let (mut lo, mut hi) = (0.0, opts.step.min(alpha_max));
        let mut d_lo = 2.0 * slope;
        let mut d_hi = line_energy(op, &it, &dir, ld_d, d_lu, hi).1;
        while d_hi < 0.0 && hi < alpha_max && hi < 1e12 {
            lo = hi;
            d_lo = d_hi;
            hi = (2.0 * hi).min(alpha_max);
            d_hi = line_energy(op, &it, &dir, ld_d, d_lu, hi).1;
        }
        let mut alpha = hi;
        if d_hi > 0.0 {
            // safeguarded secant on E'
            for _ in 0..60 {
                let mut c = lo - d_lo * (hi - lo) / (d_hi - d_lo);
                if !(c > lo && c < hi) || (c - lo).min(hi - c) < 1e-3 * (hi - lo) {
                    c = 0.5 * (lo + hi);
                }
                let dc = line_energy(op, &it, &dir, ld_d, d_lu, c).1;
                if dc < 0.0 {
                    lo = c;
                    d_lo = dc;
                } else {
                    hi = c;
                    d_hi = dc;
                }
                alpha = c;
                if dc.abs() <= 1e-10 * slope.abs() || hi - lo <= 1e-14 * hi {
                    break;
                }
            }
        }

        let mut accepted = None;
        for _ in 0..60 {
            let delta = energy_change(op, &it, &dir, ld_d, d_lu, alpha);
            if delta <= opts.armijo * alpha * 2.0 * slope {
                let mut v: Vec<f64> = it.u.iter().zip(&dir).map(|(u, d)| u + alpha * d).collect();
                let clipped = v.iter_mut().filter(|x| **x < floor).map(|x| *x = floor).count();
                let frac = clipped as f64 / v.len() as f64;
                if frac > opts.max_clip_fraction {
                    return Err(CrError::PositivityLoss { fraction: frac });
                }
                let cand = iterate_from(op, v);
                if clipped == 0 {
                    accepted = Some((cand, delta, false));
                    break;
                }
                // clipping changed the iterate: compare energies directly
                let direct = cand.a - it.a;
                if direct <= opts.armijo * alpha * 2.0 * slope {
                    accepted = Some((cand, direct, true));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((next, delta, clipped)) = accepted else {
            break;
        };
        if clipped {
            clipped_steps += 1;
        }
        energy += delta;
        let num: f64 = op.inner(&next.grad, &next.grad) - op.inner(&next.grad, &it.grad);
        let beta = (num / op.inner(&it.grad, &it.grad)).max(0.0);
        dir = next.grad.iter().zip(&dir).map(|(g, d)| -g + beta * d).collect();
        history.push(energy);
        it = next;
        iterations += 1;
    }
    Ok(YamabeSolution {
        y_est: it.a,
        el_residual: it.res,
        iterations,
        converged: it.res <= opts.tol,
        u: GridDensity { values: it.u, positive: true, source: None },
        history,
        clipped_steps,
    })
}

/// Euler–Lagrange residual `‖L u − A u^{p−1}‖ / ‖u‖` of a density, with
/// `A` taken after normalizing to `B = 1`.
pub fn euler_lagrange_residual(op: &CrLaplacian, u: &GridDensity) -> f64 {
    iterate_from(op, u.values.clone()).res
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvatureResidual {
    /// Spread of `S̃` recomputed from the rescaled structure.
    pub direct: f64,
    /// Spread of `S̃ = u^{1−p} L u`.
    pub predicted: f64,
    pub value: f64,
}

fn spread(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Standard deviation over the grid of the scalar curvature of `u^{p−2}θ`.
pub fn constant_curvature_residual(op: &CrLaplacian, u: &GridDensity) -> Result<CurvatureResidual> {
    let p = op.exponent();
    let min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(CrError::NonPositiveDensity(min));
    }
    let lu = op.apply(&u.values);
    let pred: Vec<f64> = lu.iter().zip(&u.values).map(|(l, v)| l * v.powf(1.0 - p)).collect();
    let field = ScalarField::from_grid(op.grid.clone(), &u.values, 3)?;
    let m2 = rescale(&op.manifold, &ConformalChange::from_u(op.n, field))?;
    let direct: Vec<f64> = (0..op.len())
        .into_par_iter()
        .map(|i| Ok(webster(&m2, &op.grid.coords(i))?.scalar.unwrap_or(0.0)))
        .collect::<Result<_>>()?;
    let (d, pr) = (spread(&direct), spread(&pred));
    Ok(CurvatureResidual { direct: d, predicted: pr, value: d.max(pr) })
}

/// Direct solver for operators whose coefficients depend only on axis 0
/// while axes 1 and 2 are untwisted periodic: the operator is block
/// diagonal in the discrete Fourier modes of those axes.
struct FourierBlocks {
    shape: [usize; 3],
    sqrt_w0: Vec<f64>,
    blocks: Vec<Cholesky<C64, Dyn>>,
}

fn fft2(data: &mut [C64], n1: usize, n2: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (f1, f2) = if inverse {
        (planner.plan_fft_inverse(n1), planner.plan_fft_inverse(n2))
    } else {
        (planner.plan_fft_forward(n1), planner.plan_fft_forward(n2))
    };
    for row in data.chunks_mut(n2) {
        f2.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); n1];
    for j in 0..n2 {
        for i in 0..n1 {
            col[i] = data[i * n2 + j];
        }
        f1.process(&mut col);
        for i in 0..n1 {
            data[i * n2 + j] = col[i];
        }
    }
}

impl FourierBlocks {
    fn applicable(op: &CrLaplacian) -> bool {
        let g = &op.grid;
        if g.dim() != 3 || g.twists().next().is_some() {
            return false;
        }
        if g.axes()[1..].iter().any(|a| a.kind != AxisKind::Periodic) {
            return false;
        }
        let s = g.shape();
        let plane = s[1] * s[2];
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()));
        (0..op.len()).all(|i| {
            let r = (i / plane) * plane;
            close(op.weights[i], op.weights[r])
                && close(op.scalar[i], op.scalar[r])
                && op.q_at(i).iter().zip(op.q_at(r)).all(|(a, b)| close(*a, *b))
        })
    }

    fn build(op: &CrLaplacian) -> Result<FourierBlocks> {
        let g = &op.grid;
        let s = g.shape();
        let (n0, n1, n2) = (s[0], s[1], s[2]);
        let plane = n1 * n2;
        let d0 = DMatrix::<f64>::from_fn(n0, n0, |_, _| 0.0);
        let mut d0 = d0;
        for i0 in 0..n0 {
            for (c, v) in g.derivative(0).row(i0 * plane) {
                d0[(i0, c / plane)] += v;
            }
        }
        let symbol = |axis: usize, stride: usize, len: usize, k: usize| -> C64 {
            g.derivative(axis)
                .row(0)
                .map(|(c, v)| {
                    let m = (c / stride) % len;
                    C64::from_polar(v, 2.0 * std::f64::consts::PI * (k * m) as f64 / len as f64)
                })
                .sum()
        };
        let w0: Vec<f64> = (0..n0).map(|i| op.weights[i * plane]).collect();
        let sqrt_w0: Vec<f64> = w0.iter().map(|w| w.sqrt()).collect();
        let qs: Vec<&[f64]> = (0..n0).map(|i| op.q_at(i * plane)).collect();
        let d0c = d0.map(|v| C64::new(v, 0.0));
        let d0t = d0c.transpose();
        let modes: Vec<(usize, usize)> = (0..n1).flat_map(|a| (0..n2).map(move |b| (a, b))).collect();
        let blocks = modes
            .par_iter()
            .map(|&(k1, k2)| {
                let lam = [C64::new(0.0, 0.0), symbol(1, n2, n1, k1), symbol(2, 1, n2, k2)];
                // A_j as dense matrices (A_1, A_2 diagonal)
                let a = |j: usize| -> DMatrix<C64> {
                    if j == 0 {
                        d0c.clone()
                    } else {
                        DMatrix::from_diagonal_element(n0, n0, lam[j])
                    }
                };
                let at = |j: usize| -> DMatrix<C64> {
                    if j == 0 {
                        d0t.clone()
                    } else {
                        DMatrix::from_diagonal_element(n0, n0, lam[j].conj())
                    }
                };
                let mut h = DMatrix::<C64>::zeros(n0, n0);
                for j in 0..3 {
                    for l in 0..3 {
                        let wq = DMatrix::from_diagonal(&DVector::from_fn(n0, |i, _| C64::new(w0[i] * qs[i][j * 3 + l], 0.0)));
                        h += at(j) * wq * a(l);
                    }
                }
                let mut m = DMatrix::<C64>::from_fn(n0, n0, |r, c| h[(r, c)] * op.b / (sqrt_w0[r] * sqrt_w0[c]));
                for i in 0..n0 {
                    m[(i, i)] += C64::new(op.scalar[i * plane], 0.0);
                }
                let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
                match Cholesky::new(m.clone()) {
                    Some(c) => Ok(c),
                    None => {
                        let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
                        Err(CrError::IndefiniteOperator(ev.iter().copied().fold(f64::INFINITY, f64::min)))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FourierBlocks { shape: [n0, n1, n2], sqrt_w0, blocks })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let [n0, n1, n2] = self.shape;
        let plane = n1 * n2;
        let mut data: Vec<C64> = rhs.iter().map(|v| C64::new(*v, 0.0)).collect();
        for s in data.chunks_mut(plane) {
            fft2(s, n1, n2, false);
        }
        for (mode, chol) in self.blocks.iter().enumerate() {
            let b = DVector::from_fn(n0, |i, _| data[i * plane + mode] * self.sqrt_w0[i]);
            let y = chol.solve(&b);
            for i in 0..n0 {
                data[i * plane + mode] = y[i] / self.sqrt_w0[i];
            }
        }
        for s in data.chunks_mut(plane) {
            fft2(s, n1, n2, true);
        }
        let scale = 1.0 / plane as f64;
        data.iter().map(|c| c.re * scale).collect()
    }
}

/// W-orthonormal basis of the discrete kernel of `L`, searched among the
/// constants times parity patterns `(−1)^{i_a}` along even-length stencil
/// axes (central first differences annihilate those patterns).
pub fn discrete_kernel(op: &CrLaplacian) -> Vec<Vec<f64>> {
    let g = &op.grid;
    let axes: Vec<usize> = g
        .axes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == AxisKind::Periodic && !a.spectral && a.len() % 2 == 0)
        .map(|(k, _)| k)
        .collect();
    // operator scale from a fixed smooth-free probe vector
    let probe: Vec<f64> = (0..op.len()).map(|i| (i as f64 * 0.618_033_988_75).fract() - 0.5).collect();
    let scale = op.norm(&op.apply(&probe)) / op.norm(&probe);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mask in 0..(1usize << axes.len()) {
        let mut v: Vec<f64> = (0..op.len())
            .map(|i| {
                let m = g.multi(i);
                let odd = axes.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &a)| m[a]).sum::<usize>();
                if odd % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        if op.norm(&op.apply(&v)) > 1e-10 * scale * op.norm(&v) {
            continue;
        }
        for e in &basis {
            let c = op.inner(&v, e);
            v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
        }
        let nv = op.norm(&v);
        if nv > 1e-8 {
            basis.push(v.iter().map(|x| x / nv).collect());
        }
    }
    basis
}

fn project_out(op: &CrLaplacian, kernel: &[Vec<f64>], v: &mut [f64]) {
    for e in kernel {
        let c = op.inner(v, e);
        v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
    }
}

/// Conjugate gradients in the weighted inner product, on the complement
/// of `kernel`.
fn conjugate_gradient(op: &CrLaplacian, rhs: &[f64], kernel: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let mut x = vec![0.0; rhs.len()];
    let mut r = rhs.to_vec();
    project_out(op, kernel, &mut r);
    let mut p = r.clone();
    let mut rr = op.inner(&r, &r);
    let rr0 = rr;
    let target = tol * tol * rr;
    for k in 0..max_iter {
        if rr <= target {
            break;
        }
        project_out(op, kernel, &mut p);
        let lp = op.apply(&p);
        let curv = op.inner(&p, &lp);
        if !(curv > 0.0) {
            let pp = op.inner(&p, &p);
            if curv < -1e-10 * pp.sqrt() * op.norm(&lp) {
                return Err(CrError::IndefiniteOperator(curv / pp));
            }
            break;
        }
        let alpha = rr / curv;
        x.iter_mut().zip(&p).for_each(|(a, b)| *a += alpha * b);
        r.iter_mut().zip(&lp).for_each(|(a, b)| *a -= alpha * b);
        project_out(op, kernel, &mut r);
        let rr_new = op.inner(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p = r.iter().zip(&p).map(|(a, b)| a + beta * b).collect();
        if k + 1 == max_iter && rr > target {
            return Err(CrError::NonConvergence { iterations: max_iter, residual: (rr / rr0).sqrt() });
        }
    }
    project_out(op, kernel, &mut x);
    Ok(x)
}

/// Solution of `L G = rhs`.
#[derive(Clone, Debug)]
pub struct LinearSolve {
    pub solution: Vec<f64>,
    /// The right-hand side actually solved (its part orthogonal to the
    /// discrete kernel).
    pub rhs: Vec<f64>,
    /// Dimension of the discrete kernel that was projected out.
    pub kernel_dim: usize,
    pub method: &'static str,
}

/// Solves `L G = rhs`, on the orthogonal complement of the discrete kernel
/// when there is one.
pub fn solve_cr_laplacian(op: &CrLaplacian, rhs: &[f64]) -> Result<LinearSolve> {
    let kernel = discrete_kernel(op);
    let mut b = rhs.to_vec();
    project_out(op, &kernel, &mut b);
    if kernel.is_empty() && FourierBlocks::applicable(op) {
        let fb = FourierBlocks::build(op)?;
        let mut x = fb.solve(&b);
        // one step of iterative refinement
        let lx = op.apply(&x);
        let r: Vec<f64> = b.iter().zip(&lx).map(|(a, c)| a - c).collect();
        for (xi, ci) in x.iter_mut().zip(fb.solve(&r)) {
            *xi += ci;
        }
        return Ok(LinearSolve { solution: x, rhs: b, kernel_dim: 0, method: "fourier-blocks" });
    }
    let x = conjugate_gradient(op, &b, &kernel, 1e-12, 20 * op.len().max(100))?;
    Ok(LinearSolve { solution: x, rhs: b, kernel_dim: kernel.len(), method: "conjugate-gradient" })
}

/// Index radius of the pole handling region: nodes this close to the pole
/// do not resolve the singularity and are excluded from normalization and
/// positivity.
pub const POLE_REGION_CELLS: usize = 2;

#[derive(Clone, Debug, Serialize)]
pub struct GreenFunction {
    pub pole: usize,
    #[serde(skip)]
    pub values: Vec<f64>,
    /// Nodes of the pole handling region (within [`POLE_REGION_CELLS`]).
    #[serde(skip)]
    pub pole_region: Vec<bool>,
    /// Minimum of the raw solution outside the pole handling region.
    pub raw_min: f64,
    /// Minimum of the raw solution inside the pole handling region, where
    /// the grid does not resolve the singularity (diagnostic only).
    pub pole_region_min: f64,
    /// Divisor applied by the normalization (1 when an offset was used).
    pub scale: f64,
    /// Additive offset applied (kernel case or non-positive raw minimum).
    pub offset: f64,
    /// Dimension of the discrete kernel projected out of the source.
    pub kernel_dim: usize,
    /// Raw solution positive outside the pole handling region.
    pub positive: bool,
    /// `max |L G − δ|` outside the pole handling region, relative to the
    /// peak of the source.
    pub residual: f64,
    pub method: String,
}

impl GreenFunction {
    /// Minimum over the nodes outside the pole handling region.
    pub fn min(&self) -> f64 {
        self.values.iter().zip(&self.pole_region).filter(|(_, r)| !**r).map(|(v, _)| *v).fold(f64::INFINITY, f64::min)
    }
}

/// Nodes within `r` index cells of `i` on every axis.
pub fn index_neighbourhood(grid: &Grid, i: usize, r: usize) -> Vec<bool> {
    let c = grid.multi(i);
    let shape = grid.shape();
    (0..grid.len())
        .map(|j| {
            grid.multi(j).iter().enumerate().all(|(a, &k)| {
                let diff = (k as i64 - c[a] as i64).unsigned_abs() as usize;
                let dist = if grid.axes()[a].kind == AxisKind::Periodic { diff.min(shape[a] - diff) } else { diff };
                dist <= r
            })
        })
        .collect()
}

/// Green function with pole at node `pole`, normalized so that its
/// minimum outside the pole handling region is exactly 1: by division
/// when the raw solution is positive there, by an offset otherwise.
pub fn green_function(op: &CrLaplacian, pole: usize) -> Result<GreenFunction> {
    if pole >= op.len() {
        return Err(CrError::Config(format!("pole index {pole} out of range")));
    }
    let mut rhs = vec![0.0; op.len()];
    rhs[pole] = 1.0 / op.weights[pole];
    let sol = solve_cr_laplacian(op, &rhs)?;
    let lg = op.apply(&sol.solution);
    let region = index_neighbourhood(&op.grid, pole, POLE_REGION_CELLS);
    let peak = sol.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut residual, mut raw_min, mut pole_region_min) = (0.0f64, f64::INFINITY, f64::INFINITY);
    for i in 0..op.len() {
        if region[i] {
            pole_region_min = pole_region_min.min(sol.solution[i]);
        } else {
            residual = residual.max((lg[i] - sol.rhs[i]).abs());
            raw_min = raw_min.min(sol.solution[i]);
        }
    }
    residual /= peak;
    let positive = raw_min > 0.0;
    let (values, scale, offset) = if sol.kernel_dim > 0 || !positive {
        // (v − min) + 1 keeps the minimum exactly 1
        (sol.solution.iter().map(|v| (v - raw_min) + 1.0).collect(), 1.0, 1.0 - raw_min)
    } else {
        (sol.solution.iter().map(|v| v / raw_min).collect(), raw_min, 0.0)
    };
    Ok(GreenFunction {
        pole,
        values,
        pole_region: region,
        raw_min,
        pole_region_min,
        scale,
        offset,
        kernel_dim: sol.kernel_dim,
        positive,
        residual,
        method: sol.method.to_string(),
    })
}

/// Spearman rank correlation.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut e = k;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
                e += 1;
            }
            let avg = (k + e) as f64 / 2.0;
            for &i in &idx[k..=e] {
                r[i] = avg;
            }
            k = e + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Periodic axes along which random initial data stay single valued
/// (twisted fibre axes excluded), with their periods.
pub fn invariant_axes(grid: &Grid) -> Vec<(usize, f64)> {
    let fibres: Vec<usize> = grid.twists().map(|t| t.t_axis).collect();
    grid.axes()
        .iter()
        .enumerate()
        .filter(|(a, ax)| ax.kind == AxisKind::Periodic && !fibres.contains(a))
        .map(|(a, ax)| (a, ax.hi - ax.lo))
        .collect()
}

/// Random positive initial density `1 + (trig polynomial bounded by 0.3)`.
pub fn random_positive_init(op: &CrLaplacian, rng: &mut ChaCha8Rng) -> Result<GridDensity> {
    let axes = invariant_axes(&op.grid);
    let mut tf = TrigField::random(rng, op.grid.dim(), &axes, 2, 3, 0.3);
    tf.offset = 1.0;
    GridDensity::from_field(&op.manifold, &tf.to_scalar())
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub runs: Vec<YamabeSolution>,
    /// Largest max-norm difference between normalized solutions.
    pub max_pairwise: f64,
    /// `(max − min)/mean` of `u^{p−2}·factor`, when a factor was given.
    pub flatness: Option<f64>,
}

/// Minimizes from `n_inits` seeded random positive initial densities.
/// `factor` holds `e^{2f}` at the nodes when the structure is a known
/// rescaling of a flat one.
pub fn uniqueness_experiment(
    op: &CrLaplacian,
    n_inits: usize,
    seed: u64,
    opts: &SolverOptions,
    factor: Option<&[f64]>,
) -> Result<UniquenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inits: Vec<GridDensity> = (0..n_inits).map(|_| random_positive_init(op, &mut rng)).collect::<Result<_>>()?;
    let runs: Vec<YamabeSolution> =
        inits.iter().map(|u0| yamabe_minimize(op, u0, opts)?.require_converged()).collect::<Result<_>>()?;
    let mut max_pairwise: f64 = 0.0;
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            let d = runs[a].u.values.iter().zip(&runs[b].u.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            max_pairwise = max_pairwise.max(d);
        }
    }
    let p = op.exponent();
    let flatness = factor.map(|fac| {
        runs.iter()
            .map(|r| {
                let v: Vec<f64> = r.u.values.iter().zip(fac).map(|(u, f)| u.powf(p - 2.0) * f).collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
                (hi - lo) / mean
            })
            .fold(0.0, f64::max)
    });
    Ok(UniquenessReport { runs, max_pairwise, flatness })
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevProbe {
    pub ratios: Vec<f64>,
    pub worst: f64,
}

/// `∫|v|^p / ∫(|dv|²_θ + v²)` for each field, gradients from analytic jets.
pub fn sobolev_probe(op: &CrLaplacian, battery: &[ScalarField]) -> Result<SobolevProbe> {
    let p = op.exponent();
    let ratios = battery
        .iter()
        .map(|f| {
            let v = GridDensity::from_field(&op.manifold, f)?;
            let g2 = op.analytic_grad_sq(f)?;
            let num: f64 = op.weights.iter().zip(&v.values).map(|(w, x)| w * x.abs().powf(p)).sum();
            let den: f64 = (0..op.len()).map(|i| op.weights[i] * (g2[i] + v.values[i] * v.values[i])).sum();
            Ok(num / den)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(SobolevProbe { ratios, worst })
}

/// The constant field 1 followed by `count` seeded trig polynomials on the
/// invariant axes of the grid.
pub fn sobolev_battery(grid: &Grid, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = invariant_axes(grid);
    let mut out = vec![ScalarField::constant(1.0)];
    for _ in 0..count {
        let mut tf = TrigField::random(&mut rng, grid.dim(), &axes, 2, 3, 1.0);
        tf.offset = 0.5;
        out.push(tf.to_scalar());
    }
    out
}
