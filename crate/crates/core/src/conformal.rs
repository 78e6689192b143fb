//! Pseudoconformal changes `θ̃ = e^{2f}θ`, the predicted Webster data of the
//! rescaled structure, maps and their pseudoconformal factors, and the
//! adapted Riemannian metric.

use crate::error::{CrError, Result};
use crate::field::{ContactForm, JetFn, ScalarField};
use crate::geometry::{j_hat_jets, CRManifold, PointGeometry};
use crate::jet::{Jet, C64};
use crate::linalg::solve_complex;
use crate::webster::{covariant_jet, webster, CovariantJet, WebsterData};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::sync::Arc;

/// `p = 2 + 2/n`.
pub fn critical_exponent(n: usize) -> f64 {
    2.0 + 2.0 / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Given {
    F,
    U,
}

/// `θ̃ = e^{2f}θ = u^{p−2}θ`.
#[derive(Clone, Debug)]
pub struct ConformalChange {
    pub n: usize,
    pub p: f64,
    pub given: Given,
    pub f: ScalarField,
    pub u: ScalarField,
}

impl ConformalChange {
    pub fn from_f(n: usize, f: ScalarField) -> ConformalChange {
        let p = critical_exponent(n);
        // u = e^{2f/(p−2)} = e^{n f}
        let u = f.map(move |j| (j * n as f64).exp());
        ConformalChange { n, p, given: Given::F, f, u }
    }

    pub fn from_u(n: usize, u: ScalarField) -> ConformalChange {
        let p = critical_exponent(n);
        // f = (p−2)/2 · ln u = ln(u)/n
        let f = u.map(move |j| j.ln() * (1.0 / n as f64));
        ConformalChange { n, p, given: Given::U, f, u }
    }

    /// `e^{2f}` as a field.
    pub fn factor(&self) -> ScalarField {
        match self.given {
            Given::F => self.f.map(|j| (j * 2.0).exp()),
            Given::U => {
                let e = self.p - 2.0;
                self.u.map(move |j| j.powf(e))
            }
        }
    }

    /// Checks `u > 0` and `u^{p−2} = e^{2f}` at the given points.
    pub fn validate(&self, points: &[Vec<f64>]) -> Result<()> {
        for x in points {
            let u = self.u.real(x)?;
            if !(u > 0.0) {
                return Err(CrError::NonPositiveDensity(u));
            }
            let a = u.powf(self.p - 2.0);
            let b = (2.0 * self.f.real(x)?).exp();
            if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
                return Err(CrError::Config(format!("u^(p-2) and e^(2f) disagree at {x:?}")));
            }
        }
        Ok(())
    }
}

/// Same chart and frame, contact form `e^{2f}θ`.
pub fn rescale(m: &CRManifold, c: &ConformalChange) -> Result<CRManifold> {
    if let Some(g) = &m.grid {
        let pts: Vec<Vec<f64>> = (0..g.len()).map(|i| g.coords(i)).collect();
        c.validate(&pts)?;
    }
    let name = format!("{}~", m.theta.name);
    let theta: ContactForm = m.theta.scaled(&name, &c.factor());
    Ok(m.with_theta(theta))
}

fn jet_of(m: &CRManifold, w: &WebsterData, c: &ConformalChange, x: &[f64]) -> Result<CovariantJet> {
    covariant_jet(m, w, &c.f, x)
}

/// `S̃ = e^{−2f}{S + 2(n+1)Δ_θ f − 4n(n+1) f^λ f_λ}`.
pub fn predicted_scalar(m: &CRManifold, w: &WebsterData, c: &ConformalChange, x: &[f64]) -> Result<f64> {
    let j = jet_of(m, w, c, x)?;
    let n = w.n as f64;
    let s = w.scalar.ok_or_else(|| CrError::Config("curvature not computed".into()))?;
    let v = s + 2.0 * (n + 1.0) * j.sublaplacian().re - 4.0 * n * (n + 1.0) * j.grad_sq().re;
    Ok((-2.0 * j.value.re).exp() * v)
}

/// Curvature of `e^{2f}θ` in the coframe `θ̃^α = e^f(θ^α + i f^α θ)`,
/// flattened like [`WebsterData::curvature`].
pub fn predicted_curvature(m: &CRManifold, w: &WebsterData, c: &ConformalChange, x: &[f64]) -> Result<Vec<C64>> {
    let j = jet_of(m, w, c, x)?;
    let n = w.n;
    let g = &w.levi;
    let fu = j.raised_rev();
    let fd = j.raised_mixed();
    let sq = j.grad_sq();
    let pre = (-2.0 * j.value.re).exp();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut out = vec![C64::new(0.0, 0.0); n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for ga in 0..n {
                for s in 0..n {
                    let mut v = w.r(a, b, ga, s);
                    v -= (j.mixed[(ga, s)] + j.mixed_rev[(s, ga)]) * delta(a, b);
                    v -= g[(a, s)] * fu[(b, ga)] * 2.0;
                    v -= j.mixed[(a, s)] * 2.0 * delta(b, ga);
                    v -= (fu[(b, a)] + fd[(a, b)]) * g[(ga, s)];
                    v -= (g[(ga, s)] * delta(a, b) + g[(a, s)] * delta(b, ga)) * sq * 4.0;
                    out[((a * n + b) * n + ga) * n + s] = v * pre;
                }
            }
        }
    }
    Ok(out)
}

/// `Ã^α_β̄ = e^{−2f}(A^α_β̄ − i f^α_β̄ + 2i f^α f_β̄)`.
pub fn predicted_torsion(m: &CRManifold, w: &WebsterData, c: &ConformalChange, x: &[f64]) -> Result<DMatrix<C64>> {
    let j = jet_of(m, w, c, x)?;
    let n = w.n;
    let i = C64::new(0.0, 1.0);
    let up = j.up();
    let fa = j.raised_antihol();
    let pre = (-2.0 * j.value.re).exp();
    Ok(DMatrix::from_fn(n, n, |a, b| (w.torsion[(a, b)] - i * fa[(a, b)] + i * 2.0 * up[a] * j.dbar[b]) * pre))
}

/// Rows `θ̃^α = e^f(θ^α + i f^α θ)` in coordinates.
pub fn predicted_coframe(m: &CRManifold, w: &WebsterData, c: &ConformalChange, x: &[f64]) -> Result<DMatrix<C64>> {
    let j = jet_of(m, w, c, x)?;
    let n = w.n;
    let d = x.len();
    let i = C64::new(0.0, 1.0);
    let up = j.up();
    let e = j.value.re.exp();
    Ok(DMatrix::from_fn(n, d, |a, k| (w.coframe[(a, k)] + i * up[a] * w.coframe[(2 * n, k)]) * e))
}

/// Largest deviations between predicted and directly recomputed data of a
/// rescaled structure at one point. Deviations are relative to
/// `max(1, |direct|_∞)`.
#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct CrossCheck {
    pub scalar: f64,
    pub curvature: f64,
    pub torsion: f64,
    pub coframe: f64,
    /// Trace of the predicted curvature minus the predicted scalar.
    pub contraction: f64,
}

impl CrossCheck {
    pub fn worst(&self) -> f64 {
        self.scalar.max(self.curvature).max(self.torsion).max(self.coframe)
    }

    pub fn merge(self, o: CrossCheck) -> CrossCheck {
        CrossCheck {
            scalar: self.scalar.max(o.scalar),
            curvature: self.curvature.max(o.curvature),
            torsion: self.torsion.max(o.torsion),
            coframe: self.coframe.max(o.coframe),
            contraction: self.contraction.max(o.contraction),
        }
    }
}

fn rel(pred: &[C64], direct: &[C64]) -> f64 {
    let scale = direct.iter().map(|v| v.norm()).fold(1.0, f64::max);
    pred.iter().zip(direct).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
}

/// Compares the transformation laws against direct recomputation on
/// `rescale(m, c)` at `x`.
///
/// The direct computation keeps the frame `W_α`; the coframe of the
/// formulas is dual to `e^{−f}W_α`, so direct curvature is multiplied by
/// `e^{−2f}` (two lower frame indices) while torsion and `S` carry over.
pub fn cross_check(m: &CRManifold, c: &ConformalChange, x: &[f64]) -> Result<CrossCheck> {
    cross_check_against(m, c, m, c, x)
}

/// Predictions from `(m, c)` against direct recomputation from
/// `(reference, reference_change)`. With both pairs equal the laws hold
/// identically at jet level, so derivative errors cancel; comparing
/// finite-difference predictions with an analytic reference exposes them.
pub fn cross_check_against(
    m: &CRManifold,
    c: &ConformalChange,
    reference: &CRManifold,
    reference_change: &ConformalChange,
    x: &[f64],
) -> Result<CrossCheck> {
    let w = webster(m, x)?;
    let mt = rescale(&reference.with_grid(None), reference_change)?;
    let wt = webster(&mt, x)?;
    let f = c.f.real(x)?;
    let n = w.n;
    let s_pred = predicted_scalar(m, &w, c, x)?;
    let r_pred = predicted_curvature(m, &w, c, x)?;
    let a_pred = predicted_torsion(m, &w, c, x)?;
    let cof_pred = predicted_coframe(m, &w, c, x)?;
    let e2 = (-2.0 * f).exp();
    let r_direct: Vec<C64> = wt.curvature.as_ref().expect("curvature").iter().map(|v| v * e2).collect();
    let a_direct: Vec<C64> = wt.torsion.iter().copied().collect();
    let cof_direct: Vec<C64> = (0..n).flat_map(|a| (0..x.len()).map(move |k| (a, k))).map(|(a, k)| wt.coframe[(a, k)] * f.exp()).collect();
    let cof_p: Vec<C64> = (0..n).flat_map(|a| (0..x.len()).map(move |k| (a, k))).map(|(a, k)| cof_pred[(a, k)]).collect();
    let s_direct = wt.scalar.expect("scalar");
    // trace: Ric_{γσ̄} g̃^{γσ̄}, with g̃ = g in the formula's coframe
    let mut trace = C64::new(0.0, 0.0);
    for ga in 0..n {
        for s in 0..n {
            let ric: C64 = (0..n).map(|a| r_pred[((a * n + a) * n + ga) * n + s]).sum();
            trace += ric * w.levi_inv[(ga, s)];
        }
    }
    Ok(CrossCheck {
        scalar: (s_pred - s_direct).abs() / s_direct.abs().max(1.0),
        curvature: rel(&r_pred, &r_direct),
        torsion: rel(a_pred.as_slice(), &a_direct),
        coframe: rel(&cof_p, &cof_direct),
        contraction: (trace - s_pred).norm() / s_pred.abs().max(1.0),
    })
}

/// A smooth map between charts, evaluated in jet arithmetic.
#[derive(Clone)]
pub struct SmoothMap {
    pub name: String,
    pub dim: usize,
    forward: JetFn,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl SmoothMap {
    pub fn new(name: &str, dim: usize, forward: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> SmoothMap {
        SmoothMap { name: name.to_string(), dim, forward: Arc::new(forward) }
    }

    pub fn identity(dim: usize) -> SmoothMap {
        SmoothMap::new("identity", dim, |x| x.to_vec())
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let out = (self.forward)(&Jet::variables(x, order));
        if out.iter().any(|j| !j.value().re.is_finite()) {
            return Err(CrError::MapOutOfDomain(x.to_vec()));
        }
        Ok(out)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jets(x, 0)?.iter().map(|j| j.value().re).collect())
    }

    /// Image point and Jacobian `∂F^k/∂x^j` (rows `k`).
    pub fn differential(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let j = self.jets(x, 1)?;
        let d = self.dim;
        let y: Vec<f64> = j.iter().map(|v| v.value().re).collect();
        let mut e = vec![0u8; d];
        let jac = DMatrix::from_fn(d, d, |k, l| {
            e.iter_mut().for_each(|v| *v = 0);
            e[l] = 1;
            j[k].partial(&e).re
        });
        if jac.determinant().abs() <= 1e-10 {
            return Err(CrError::SingularFrame(x.to_vec()));
        }
        Ok((y, jac))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SmoothMap) -> SmoothMap {
        let (f, g) = (self.forward.clone(), other.forward.clone());
        SmoothMap { name: format!("{}∘{}", self.name, other.name), dim: self.dim, forward: Arc::new(move |x| f(&g(x))) }
    }
}

fn image_in(target: &CRManifold, y: &[f64]) -> Result<Vec<f64>> {
    let mut y = y.to_vec();
    for (k, v) in y.iter_mut().enumerate() {
        if target.chart.periodic[k] {
            let (lo, hi) = (target.chart.lo[k], target.chart.hi[k]);
            *v = lo + (*v - lo).rem_euclid(hi - lo);
        }
    }
    if !target.chart.contains(&y) {
        return Err(CrError::MapOutOfDomain(y));
    }
    target.check_point(&y).map_err(|_| CrError::MapOutOfDomain(y.clone()))?;
    Ok(y)
}

/// `λ = (F*θ̃)(T)` and the sup-norm of `F*θ̃ − λθ` on coordinate vectors.
pub fn pseudoconformal_factor(f: &SmoothMap, source: &CRManifold, target: &CRManifold, x: &[f64]) -> Result<(f64, f64)> {
    let (y, jac) = f.differential(x)?;
    let y = image_in(target, &y)?;
    let tt: Vec<f64> = target.theta.field.values(&y)?.iter().map(|c| c.re).collect();
    let pull = jac.transpose() * DVector::from_vec(tt);
    let pg = PointGeometry::new(source, x, 1)?;
    let theta: Vec<f64> = pg.theta.iter().map(|c| c.value().re).collect();
    let reeb: Vec<f64> = pg.reeb.iter().map(|c| c.value().re).collect();
    let lam: f64 = pull.iter().zip(&reeb).map(|(a, b)| a * b).sum();
    let res = pull.iter().zip(&theta).map(|(a, b)| (a - lam * b).abs()).fold(0.0, f64::max);
    Ok((lam, res))
}

/// Relative size of the part of `F_*W_α` outside `span{W_β(F(x))}`, using
/// the coordinate Hermitian inner product (so only `H^{1,0}` matters).
pub fn cr_automorphism_residual(f: &SmoothMap, m: &CRManifold, x: &[f64]) -> Result<f64> {
    cr_residual_between(f, m, m, x)
}

pub fn cr_residual_between(f: &SmoothMap, source: &CRManifold, target: &CRManifold, x: &[f64]) -> Result<f64> {
    let (y, jac) = f.differential(x)?;
    let y = image_in(target, &y)?;
    let d = x.len();
    let n = source.n;
    let ws: Vec<Vec<C64>> = source.frame.jets(x, 0)?.iter().map(|r| r.iter().map(|c| c.value()).collect()).collect();
    let wt: Vec<Vec<C64>> = target.frame.jets(&y, 0)?.iter().map(|r| r.iter().map(|c| c.value()).collect()).collect();
    let b = DMatrix::from_fn(d, n, |k, a| wt[a][k]);
    let gram = b.adjoint() * &b;
    let jc = jac.map(|v| C64::new(v, 0.0));
    let mut worst: f64 = 0.0;
    for w in &ws {
        let v = &jc * DVector::from_column_slice(w);
        let rhs = b.adjoint() * &v;
        let coef = solve_complex(&gram, &rhs).ok_or_else(|| CrError::SingularFrame(y.clone()))?;
        let r = &v - &b * coef;
        let nv = v.norm();
        if nv > 0.0 {
            worst = worst.max(r.norm() / nv);
        }
    }
    Ok(worst)
}

/// `g = θ⊗θ + dθ(·, Ĵ·)` with `Ĵ = +i` on `W_α`, `−i` on `W̄_α`, `0` on `T`.
pub fn adapted_metric(m: &CRManifold, x: &[f64]) -> Result<DMatrix<f64>> {
    let pg = PointGeometry::new(m, x, 1)?;
    let d = pg.dim();
    let jh = j_hat_jets(&pg);
    let jhat = DMatrix::from_fn(d, d, |k, l| jh[k][l].value().re);
    let f = DMatrix::from_fn(d, d, |a, b| pg.dtheta[a][b].value().re);
    let th = DVector::from_iterator(d, pg.theta.iter().map(|t| t.value().re));
    Ok(&th * th.transpose() + f * jhat)
}

/// Smallest eigenvalue of the symmetrised adapted metric.
pub fn adapted_metric_min_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let s = (g + g.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}
