//! Charts, CR manifolds and the pointwise pseudohermitian pipeline:
//! Levi form, Reeb field, admissible coframe, integrability and volume.
//!
//! Wedge convention: `(α∧β)(X, Y) = α(X)β(Y) − α(Y)β(X)`. With it the
//! exterior derivative of a covector `θ` has coordinate matrix
//! `F_ij = ∂_i θ_j − ∂_j θ_i` and `dθ(X, Y) = Xᵀ F Y`.

use crate::error::{CrError, Result};
use crate::field::{ComplexFrame, ContactForm, ScalarField};
use crate::grid::Grid;
use crate::jet::{Jet, C64};
use crate::linalg::{hermitian_eigenvalues, inverse_jet, solve_jet, values};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};

/// A coordinate box, periodic along flagged axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub id: String,
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl Chart {
    pub fn new(id: &str, lo: Vec<f64>, hi: Vec<f64>, periodic: Vec<bool>) -> Result<Chart> {
        let dim = lo.len();
        if dim < 3 || dim.is_multiple_of(2) || hi.len() != dim || periodic.len() != dim {
            return Err(CrError::Config(format!("chart {id}: dimension must be odd and at least 3")));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(CrError::Config(format!("chart {id}: empty coordinate box")));
        }
        Ok(Chart { id: id.to_string(), dim, lo, hi, periodic })
    }

    pub fn n(&self) -> usize {
        (self.dim - 1) / 2
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, v)| self.periodic[k] || (*v >= self.lo[k] - 1e-12 && *v <= self.hi[k] + 1e-12))
    }

    /// True when a stencil of coordinate radius `r` around `x` stays inside.
    pub fn stencil_fits(&self, x: &[f64], r: f64) -> bool {
        r == 0.0
            || x.iter().enumerate().all(|(k, v)| {
                self.periodic[k] || (*v - r >= self.lo[k] - 1e-12 && *v + r <= self.hi[k] + 1e-12)
            })
    }
}

pub type Exclusion = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A strongly pseudoconvex CR manifold given in one chart, with an optional
/// quadrature grid.
#[derive(Clone)]
pub struct CRManifold {
    pub label: String,
    pub n: usize,
    pub chart: Chart,
    pub frame: ComplexFrame,
    pub theta: ContactForm,
    pub grid: Option<Arc<Grid>>,
    /// Points where the chart is not to be trusted (e.g. caps around a
    /// missing pole).
    pub excluded: Option<Exclusion>,
    density: Arc<OnceLock<Vec<f64>>>,
}

impl std::fmt::Debug for CRManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CRManifold")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("chart", &self.chart)
            .field("theta", &self.theta.name)
            .field("grid", &self.grid.as_ref().map(|g| g.shape()))
            .finish()
    }
}

impl CRManifold {
    pub fn new(label: &str, chart: Chart, frame: ComplexFrame, theta: ContactForm, grid: Option<Arc<Grid>>) -> CRManifold {
        CRManifold {
            label: label.to_string(),
            n: chart.n(),
            chart,
            frame,
            theta,
            grid,
            excluded: None,
            density: Arc::new(OnceLock::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.chart.dim
    }

    /// Same chart, frame and grid with a different contact form.
    pub fn with_theta(&self, theta: ContactForm) -> CRManifold {
        CRManifold { theta, density: Arc::new(OnceLock::new()), ..self.clone() }
    }

    pub fn with_frame(&self, frame: ComplexFrame) -> CRManifold {
        CRManifold { frame, density: Arc::new(OnceLock::new()), ..self.clone() }
    }

    pub fn with_grid(&self, grid: Option<Arc<Grid>>) -> CRManifold {
        CRManifold { grid, density: Arc::new(OnceLock::new()), ..self.clone() }
    }

    pub fn with_exclusion(mut self, e: Exclusion) -> CRManifold {
        self.excluded = Some(e);
        self
    }

    pub fn grid(&self) -> Result<&Arc<Grid>> {
        self.grid.as_ref().ok_or_else(|| CrError::StencilNotAssembled(format!("{} has no grid", self.label)))
    }

    /// Grid node coordinates.
    pub fn nodes(&self) -> Result<Vec<Vec<f64>>> {
        let g = self.grid()?;
        Ok((0..g.len()).map(|i| g.coords(i)).collect())
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if let Some(e) = &self.excluded {
            if e(x) {
                return Err(CrError::CapExclusion(x.to_vec()));
            }
        }
        let r = self.theta.field.stencil_radius().max(self.frame.field.stencil_radius());
        if !self.chart.stencil_fits(x, r) {
            return Err(CrError::StencilOutOfDomain(x.to_vec()));
        }
        Ok(())
    }

    /// Density of `θ∧(dθ)^n` at every grid node (cached).
    pub fn node_density(&self) -> Result<&[f64]> {
        if let Some(d) = self.density.get() {
            return Ok(d);
        }
        let g = self.grid()?;
        let d: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|i| volume_density(self, &g.coords(i)))
            .collect::<Result<_>>()?;
        if let Some(bad) = d.iter().find(|v| !(**v > 0.0)) {
            return Err(CrError::NonPositiveDensity(*bad));
        }
        Ok(self.density.get_or_init(|| d))
    }

    /// Quadrature weights including the volume density.
    pub fn node_weights(&self) -> Result<Vec<f64>> {
        let g = self.grid()?;
        let d = self.node_density()?;
        Ok((0..g.len()).map(|i| g.base_weight(i) * d[i]).collect())
    }

    pub fn volume(&self) -> Result<f64> {
        Ok(self.node_weights()?.iter().sum())
    }
}

/// Everything derivable pointwise from θ and the frame, as jets.
///
/// Basis index convention: `a < n` is `W_a`, `n ≤ a < 2n` is `W̄_{a−n}`,
/// `a = 2n` is the Reeb field `T`.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub x: Vec<f64>,
    pub n: usize,
    pub order: usize,
    /// θ coefficients, jets of the requested order.
    pub theta: Vec<Jet>,
    /// `F_ij = ∂_iθ_j − ∂_jθ_i`, one order lower.
    pub dtheta: Vec<Vec<Jet>>,
    /// Frame `W[α][j]`, one order lower.
    pub frame: Vec<Vec<Jet>>,
    pub reeb: Vec<Jet>,
    /// Basis vectors `E[a][j]`.
    pub basis: Vec<Vec<Jet>>,
    /// Dual covectors `C[a][j]` with `C[a]·E[b] = δ_ab`.
    pub coframe: Vec<Vec<Jet>>,
    /// `g[α][β] = g_{αβ̄}`.
    pub levi: Vec<Vec<Jet>>,
    /// `levi_inv[α][β] = g^{αβ̄}`, i.e. the inverse transpose of `levi`.
    pub levi_inv: Vec<Vec<Jet>>,
    /// Largest violation of `θ(W_α) = 0`.
    pub horizontality: f64,
    /// Residual of the Reeb defining system.
    pub reeb_residual: f64,
}

const PIVOT_TOL: f64 = 1e-12;

fn two_form(theta: &[Jet]) -> Vec<Vec<Jet>> {
    let d = theta.len();
    let der: Vec<Vec<Jet>> = theta.iter().map(|t| (0..d).map(|i| t.derivative(i)).collect()).collect();
    (0..d).map(|i| (0..d).map(|j| der[j][i] - der[i][j]).collect()).collect()
}

pub(crate) fn bilinear(u: &[Jet], f: &[Vec<Jet>], v: &[Jet]) -> Jet {
    let mut acc = Jet::zero(f[0][0].space());
    for (i, ui) in u.iter().enumerate() {
        if ui.is_zero() {
            continue;
        }
        let mut row = Jet::zero(f[0][0].space());
        for (j, vj) in v.iter().enumerate() {
            if !f[i][j].is_zero() && !vj.is_zero() {
                row += f[i][j] * *vj;
            }
        }
        acc += *ui * row;
    }
    acc
}

pub(crate) fn dot(u: &[Jet], v: &[Jet]) -> Jet {
    let mut acc = Jet::zero(u[0].space());
    for (a, b) in u.iter().zip(v) {
        if !a.is_zero() && !b.is_zero() {
            acc += *a * *b;
        }
    }
    acc
}

impl PointGeometry {
    /// Evaluates the pipeline with θ and the frame expanded to `order`
    /// (at least 1); derived quantities carry order `order − 1`.
    pub fn new(m: &CRManifold, x: &[f64], order: usize) -> Result<PointGeometry> {
        assert!(order >= 1);
        m.check_point(x)?;
        let n = m.n;
        let d = m.dim();
        let theta = m.theta.field.jets(x, order)?;
        let f = two_form(&theta);
        let low = order - 1;
        let th_low: Vec<Jet> = theta.iter().map(|t| t.truncate(low)).collect();
        let frame: Vec<Vec<Jet>> =
            m.frame.jets(x, order)?.into_iter().map(|w| w.iter().map(|c| c.truncate(low)).collect()).collect();

        // Reeb field from the normal equations of [F; θᵀ] T = (0, 1).
        let mut normal = vec![vec![Jet::zero(th_low[0].space()); d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut s = th_low[i] * th_low[j];
                for k in 0..d {
                    if !f[k][i].is_zero() && !f[k][j].is_zero() {
                        s += f[k][i] * f[k][j];
                    }
                }
                normal[i][j] = s;
            }
        }
        let rhs: Vec<Vec<Jet>> = th_low.iter().map(|t| vec![*t]).collect();
        let reeb: Vec<Jet> = solve_jet(&normal, &rhs, PIVOT_TOL)
            .ok_or_else(|| CrError::DegenerateContact(x.to_vec()))?
            .into_iter()
            .map(|r| r[0])
            .collect();
        let mut reeb_residual = (dot(&th_low, &reeb).value() - 1.0).norm();
        for row in &f {
            reeb_residual = reeb_residual.max(dot(row, &reeb).value().norm());
        }
        let scale = f.iter().flatten().map(|j| j.value().norm()).fold(0.0, f64::max).max(1.0);
        if reeb_residual > 1e-6 * scale {
            return Err(CrError::DegenerateContact(x.to_vec()));
        }

        let mut basis: Vec<Vec<Jet>> = frame.clone();
        for w in &frame {
            basis.push(w.iter().map(|c| c.conj()).collect());
        }
        basis.push(reeb.clone());
        // E as a matrix with columns = basis vectors: E[j][a]
        let e_mat: Vec<Vec<Jet>> = (0..d).map(|j| (0..d).map(|a| basis[a][j]).collect()).collect();
        let coframe = inverse_jet(&e_mat, PIVOT_TOL).ok_or_else(|| CrError::SingularFrame(x.to_vec()))?;

        let horizontality = frame.iter().map(|w| dot(&th_low, w).value().norm()).fold(0.0, f64::max);

        let half_i = C64::new(0.0, -0.5); // 1/(2i)
        let levi: Vec<Vec<Jet>> = (0..n)
            .map(|a| (0..n).map(|b| bilinear(&frame[a], &f, &basis[n + b]) * half_i).collect())
            .collect();
        let levi_t: Vec<Vec<Jet>> = (0..n).map(|a| (0..n).map(|b| levi[b][a]).collect()).collect();
        let levi_inv = inverse_jet(&levi_t, PIVOT_TOL).ok_or(CrError::NotPositiveDefinite)?;

        Ok(PointGeometry {
            x: x.to_vec(),
            n,
            order,
            theta,
            dtheta: f,
            frame,
            reeb,
            basis,
            coframe,
            levi,
            levi_inv,
            horizontality,
            reeb_residual,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn levi_values(&self) -> DMatrix<C64> {
        values(&self.levi)
    }

    /// Maximum deviation of `C·E` from the identity.
    pub fn coframe_residual(&self) -> f64 {
        let d = self.dim();
        let mut r: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let v = dot(&self.coframe[a], &self.basis[b]).value();
                let want = if a == b { 1.0 } else { 0.0 };
                r = r.max((v - want).norm());
            }
        }
        r
    }
}

/// `g_{αβ̄}` at `x`.
pub fn levi_form(m: &CRManifold, x: &[f64]) -> Result<DMatrix<C64>> {
    Ok(PointGeometry::new(m, x, 1)?.levi_values())
}

/// The pairing `−i dθ(W_α, W̄_β)`, which equals `2 g_{αβ̄}` under the wedge
/// convention above.
pub fn levi_pairing(m: &CRManifold, x: &[f64]) -> Result<DMatrix<C64>> {
    let pg = PointGeometry::new(m, x, 1)?;
    let n = m.n;
    Ok(DMatrix::from_fn(n, n, |a, b| {
        bilinear(&pg.frame[a], &pg.dtheta, &pg.basis[n + b]).value() * C64::new(0.0, -1.0)
    }))
}

/// Smallest eigenvalue of the Levi form; positive iff strongly
/// pseudoconvex at `x`.
pub fn levi_min_eigenvalue(m: &CRManifold, x: &[f64]) -> Result<f64> {
    Ok(hermitian_eigenvalues(&levi_form(m, x)?)[0])
}

/// Reeb field `T` at `x` with the residual of its defining system.
pub fn reeb_field(m: &CRManifold, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let pg = PointGeometry::new(m, x, 1)?;
    Ok((pg.reeb.iter().map(|j| j.value().re).collect(), pg.reeb_residual))
}

/// Admissible coframe: `n` complex covectors `θ^α` in coordinates.
pub fn admissible_coframe(m: &CRManifold, x: &[f64]) -> Result<Vec<Vec<C64>>> {
    let pg = PointGeometry::new(m, x, 1)?;
    Ok(pg.coframe[..m.n].iter().map(|r| r.iter().map(|j| j.value()).collect()).collect())
}

/// Largest coordinate norm of the part of `[W_α, W_β]` outside the span of
/// the frame. Zero by convention when `n = 1`.
pub fn integrability_residual(m: &CRManifold, x: &[f64]) -> Result<f64> {
    let n = m.n;
    if n == 1 {
        return Ok(0.0);
    }
    let pg = PointGeometry::new(m, x, 1)?;
    let d = m.dim();
    let w1 = m.frame.jets(x, 1)?;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let br: Vec<C64> = (0..d)
                .map(|j| {
                    let mut s = C64::new(0.0, 0.0);
                    for k in 0..d {
                        s += w1[a][k].value() * w1[b][j].derivative(k).value()
                            - w1[b][k].value() * w1[a][j].derivative(k).value();
                    }
                    s
                })
                .collect();
            // remove the span{W_γ} component
            let mut rest = br.clone();
            for g in 0..n {
                let c: C64 = (0..d).map(|j| pg.coframe[g][j].value() * br[j]).sum();
                for j in 0..d {
                    rest[j] -= c * pg.frame[g][j].value();
                }
            }
            worst = worst.max(rest.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt());
        }
    }
    Ok(worst)
}

/// Coordinate density of `θ∧(dθ)^n`, which equals `2^n n! det(g) |det C|`.
pub fn volume_density(m: &CRManifold, x: &[f64]) -> Result<f64> {
    let pg = PointGeometry::new(m, x, 1)?;
    let n = m.n;
    let g = pg.levi_values();
    let c = values(&pg.coframe);
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    Ok(2f64.powi(n as i32) * fact * g.determinant().re * c.determinant().norm())
}

/// Quadrature of `s` against the volume form of θ on the grid.
pub fn integrate(m: &CRManifold, s: &ScalarField) -> Result<f64> {
    let g = m.grid()?;
    let vals: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let x = g.coords(i);
            let v = s.real(&x)?;
            if !v.is_finite() {
                return Err(CrError::NonFiniteField(x));
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    integrate_values(m, &vals)
}

/// Quadrature of node values against the volume form of θ.
pub fn integrate_values(m: &CRManifold, vals: &[f64]) -> Result<f64> {
    let w = m.node_weights()?;
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(CrError::NonFiniteField(m.grid()?.coords(i)));
    }
    Ok(w.iter().zip(vals).map(|(a, b)| a * b).sum())
}

/// `Ĵ` as jets: `+i` on `W_α`, `−i` on `W̄_α`, `0` on `T`, i.e.
/// `Ĵ_kl = Σ_a E[a]_k λ_a C[a]_l` (real up to rounding).
pub fn j_hat_jets(pg: &PointGeometry) -> Vec<Vec<Jet>> {
    let n = pg.n;
    let d = pg.dim();
    let i = C64::new(0.0, 1.0);
    (0..d)
        .map(|k| {
            (0..d)
                .map(|l| {
                    let mut s = Jet::zero(pg.basis[0][0].space());
                    for a in 0..2 * n {
                        let lam = if a < n { i } else { -i };
                        s += pg.basis[a][k] * pg.coframe[a][l] * lam;
                    }
                    s.re()
                })
                .collect()
        })
        .collect()
}
