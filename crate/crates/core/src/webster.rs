//! Webster connection, torsion and curvature.
//!
//! The connection is stored as `gamma[β][α][c] = ω_β^α(E_c)` in the basis
//! `{θ^γ, θ^γ̄, θ}` (basis index convention of [`PointGeometry`]), the
//! torsion as `torsion[α][β] = A^α_β̄`.
//!
//! The structure equations are linear in the unknowns. Components along
//! `θ^β∧θ^γ̄`, `θ^β∧θ` and `θ^β̄∧θ` give `ω(W̄)`, `ω(T)` and `A` directly;
//! the metric condition then gives `ω(W)`. The full system (including the
//! equations not used by the elimination and the torsion symmetry) is
//! evaluated afterwards and its residual reported. An independent dense
//! least-squares solve of the same system is available for cross-checks.

use crate::error::{CrError, Result};
use crate::field::ScalarField;
use crate::geometry::{bilinear, CRManifold, PointGeometry};
use crate::jet::{Jet, C64};
use crate::linalg::{pivoted_cholesky, values};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Tolerance of the structure-equation residual on analytic inputs.
pub const CONNECTION_TOL: f64 = 1e-8;

/// Connection and torsion as jets.
#[derive(Clone, Debug)]
pub struct ConnectionJets {
    pub gamma: Vec<Vec<Vec<Jet>>>,
    pub torsion: Vec<Vec<Jet>>,
}

/// Residuals of the defining equations at the base point.
#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct Residuals {
    pub structure: f64,
    pub metric: f64,
    pub torsion_symmetry: f64,
    pub reeb: f64,
    pub coframe: f64,
    pub horizontality: f64,
    /// Largest curvature 2-form component outside `θ^γ∧θ^σ̄`.
    pub discarded_curvature: f64,
}

impl Residuals {
    pub fn connection(&self) -> f64 {
        self.structure.max(self.metric).max(self.torsion_symmetry)
    }
}

/// Pointwise Webster data (values at the base point).
#[derive(Clone, Debug)]
pub struct WebsterData {
    pub x: Vec<f64>,
    pub n: usize,
    pub levi: DMatrix<C64>,
    pub levi_inv: DMatrix<C64>,
    pub reeb: Vec<f64>,
    /// Rows: `θ^α`, `θ^ᾱ`, `θ` in coordinates.
    pub coframe: DMatrix<C64>,
    /// Frame vectors `W_α` in coordinates (rows).
    pub frame: DMatrix<C64>,
    pub gamma: Vec<Vec<Vec<C64>>>,
    pub torsion: DMatrix<C64>,
    /// `R_α^β_{γσ̄}` flattened row-major over (α, β, γ, σ).
    pub curvature: Option<Vec<C64>>,
    pub ricci: Option<DMatrix<C64>>,
    pub scalar: Option<f64>,
    pub scalar_imag: Option<f64>,
    pub residuals: Residuals,
}

impl WebsterData {
    pub fn r(&self, a: usize, b: usize, g: usize, s: usize) -> C64 {
        let n = self.n;
        self.curvature.as_ref().expect("curvature computed")[((a * n + b) * n + g) * n + s]
    }
}

fn conj_index(c: usize, n: usize) -> usize {
    if c < n {
        c + n
    } else if c < 2 * n {
        c - n
    } else {
        c
    }
}

/// Exterior derivative matrices of the coframe rows `θ^α`.
fn coframe_differentials(pg: &PointGeometry) -> Vec<Vec<Vec<Jet>>> {
    let d = pg.dim();
    (0..pg.n)
        .map(|a| {
            let der: Vec<Vec<Jet>> = pg.coframe[a].iter().map(|c| (0..d).map(|i| c.derivative(i)).collect()).collect();
            (0..d).map(|i| (0..d).map(|j| der[j][i] - der[i][j]).collect()).collect()
        })
        .collect()
}

/// Solves the structure equations by elimination (see module docs) and
/// returns the jets together with the residuals of the full system.
pub fn connection_jets(pg: &PointGeometry) -> Result<(ConnectionJets, Residuals)> {
    let n = pg.n;
    let d = pg.dim();
    if pg.order < 2 {
        return Err(CrError::OrderTooHigh { requested: 2, max: pg.order });
    }
    let lo = pg.order - 2;
    let basis: Vec<Vec<Jet>> = pg.basis.iter().map(|v| v.iter().map(|c| c.truncate(lo)).collect()).collect();
    let g: Vec<Vec<Jet>> = pg.levi.iter().map(|r| r.iter().map(|c| c.truncate(lo)).collect()).collect();
    let ginv: Vec<Vec<Jet>> = pg.levi_inv.iter().map(|r| r.iter().map(|c| c.truncate(lo)).collect()).collect();
    let phi = coframe_differentials(pg);
    let comp = |alpha: usize, a: usize, b: usize| bilinear(&basis[a], &phi[alpha], &basis[b]);
    // dg_{αβ̄}(E_c)
    let dg = |alpha: usize, beta: usize, c: usize| {
        let mut s = Jet::zero(basis[0][0].space());
        for j in 0..d {
            if !basis[c][j].is_zero() {
                s += pg.levi[alpha][beta].derivative(j) * basis[c][j];
            }
        }
        s
    };
    let zero = Jet::zero(basis[0][0].space());
    let mut gamma = vec![vec![vec![zero; d]; n]; n];
    let mut torsion = vec![vec![zero; n]; n];
    for alpha in 0..n {
        for beta in 0..n {
            for gam in 0..n {
                gamma[beta][alpha][n + gam] = comp(alpha, beta, n + gam);
            }
            gamma[beta][alpha][2 * n] = comp(alpha, beta, 2 * n);
            torsion[alpha][beta] = -comp(alpha, n + beta, 2 * n);
        }
    }
    // holomorphic components from the metric condition
    for mu in 0..n {
        // rhs[α][β] = dg_{αβ̄}(W_μ) − Σ_γ conj(Γ_β^γ_{μ̄}) g_{αγ̄}
        let mut rhs = vec![vec![zero; n]; n];
        for alpha in 0..n {
            for beta in 0..n {
                let mut s = dg(alpha, beta, mu);
                for gam in 0..n {
                    s -= gamma[beta][gam][n + mu].conj() * g[alpha][gam];
                }
                rhs[alpha][beta] = s;
            }
        }
        // Γ_α^γ_μ = Σ_β rhs[α][β] (g⁻¹)[β][γ], with g⁻¹[β][γ] = ginv[γ][β]
        for alpha in 0..n {
            for gam in 0..n {
                let mut s = zero;
                for beta in 0..n {
                    s += rhs[alpha][beta] * ginv[gam][beta];
                }
                gamma[alpha][gam][mu] = s;
            }
        }
    }
    let conn = ConnectionJets { gamma, torsion };
    let gv: Vec<Vec<C64>> = g.iter().map(|r| r.iter().map(|c| c.value()).collect()).collect();
    let mut phiv = vec![vec![vec![C64::new(0.0, 0.0); d]; d]; n];
    let mut dgv = vec![vec![vec![C64::new(0.0, 0.0); d]; n]; n];
    for alpha in 0..n {
        for a in 0..d {
            for b in 0..d {
                phiv[alpha][a][b] = comp(alpha, a, b).value();
            }
        }
        for beta in 0..n {
            for c in 0..d {
                dgv[alpha][beta][c] = dg(alpha, beta, c).value();
            }
        }
    }
    let gam_v: Vec<Vec<Vec<C64>>> =
        conn.gamma.iter().map(|x| x.iter().map(|y| y.iter().map(|j| j.value()).collect()).collect()).collect();
    let tor_v: Vec<Vec<C64>> = conn.torsion.iter().map(|r| r.iter().map(|j| j.value()).collect()).collect();
    let sys = System { n, phi: phiv, dg: dgv, g: gv };
    let mut res = sys.residuals(&gam_v, &tor_v);
    res.reeb = pg.reeb_residual;
    res.coframe = pg.coframe_residual();
    res.horizontality = pg.horizontality;
    Ok((conn, res))
}

/// The linear system for (Γ, A) at one point.
struct System {
    n: usize,
    phi: Vec<Vec<Vec<C64>>>,
    dg: Vec<Vec<Vec<C64>>>,
    g: Vec<Vec<C64>>,
}

impl System {
    fn equations(&self, gamma: &[Vec<Vec<C64>>], tor: &[Vec<C64>]) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
        let n = self.n;
        let d = 2 * n + 1;
        let mut st = Vec::new();
        for alpha in 0..n {
            for a in 0..d {
                for b in a + 1..d {
                    let mut v = self.phi[alpha][a][b];
                    if a < n {
                        v -= gamma[a][alpha][b];
                    }
                    if b < n {
                        v += gamma[b][alpha][a];
                    }
                    if a >= n && a < 2 * n && b == 2 * n {
                        v += tor[alpha][a - n];
                    }
                    st.push(v);
                }
            }
        }
        let mut me = Vec::new();
        for alpha in 0..n {
            for beta in 0..n {
                for c in 0..d {
                    let mut v = self.dg[alpha][beta][c];
                    for gam in 0..n {
                        v -= gamma[alpha][gam][c] * self.g[gam][beta];
                        v -= gamma[beta][gam][conj_index(c, n)].conj() * self.g[alpha][gam];
                    }
                    me.push(v);
                }
            }
        }
        let mut sy = Vec::new();
        for gam in 0..n {
            for beta in gam + 1..n {
                let l = |p: usize, q: usize| (0..n).map(|a| self.g[a][p] * tor[a][q]).sum::<C64>();
                sy.push(l(gam, beta) - l(beta, gam));
            }
        }
        (st, me, sy)
    }

    fn residuals(&self, gamma: &[Vec<Vec<C64>>], tor: &[Vec<C64>]) -> Residuals {
        let (st, me, sy) = self.equations(gamma, tor);
        let m = |v: &[C64]| v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        Residuals { structure: m(&st), metric: m(&me), torsion_symmetry: m(&sy), ..Default::default() }
    }
}

/// Dense least-squares solve of the full structure system at order 0.
/// Returns `(gamma, torsion, residual)`.
pub fn connection_least_squares(pg: &PointGeometry) -> Result<(Vec<Vec<Vec<C64>>>, DMatrix<C64>, f64)> {
    let n = pg.n;
    let d = pg.dim();
    let lo = pg.order - 2;
    let basis: Vec<Vec<Jet>> = pg.basis.iter().map(|v| v.iter().map(|c| c.truncate(lo)).collect()).collect();
    let phi = coframe_differentials(pg);
    let mut sys = System {
        n,
        phi: vec![vec![vec![C64::new(0.0, 0.0); d]; d]; n],
        dg: vec![vec![vec![C64::new(0.0, 0.0); d]; n]; n],
        g: pg.levi.iter().map(|r| r.iter().map(|c| c.value()).collect()).collect(),
    };
    for alpha in 0..n {
        for a in 0..d {
            for b in 0..d {
                sys.phi[alpha][a][b] = bilinear(&basis[a], &phi[alpha], &basis[b]).value();
            }
        }
        for beta in 0..n {
            for c in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..d {
                    s += pg.levi[alpha][beta].derivative(j).value() * basis[c][j].value();
                }
                sys.dg[alpha][beta][c] = s;
            }
        }
    }
    let n_gamma = n * n * d;
    let n_unknown = n_gamma + n * n;
    let unpack = |u: &[f64]| {
        let mut gamma = vec![vec![vec![C64::new(0.0, 0.0); d]; n]; n];
        let mut tor = vec![vec![C64::new(0.0, 0.0); n]; n];
        for k in 0..n_unknown {
            let v = C64::new(u[2 * k], u[2 * k + 1]);
            if k < n_gamma {
                gamma[k / (n * d)][(k / d) % n][k % d] = v;
            } else {
                let r = k - n_gamma;
                tor[r / n][r % n] = v;
            }
        }
        (gamma, tor)
    };
    let flat = |u: &[f64]| {
        let (g, t) = unpack(u);
        let (a, b, c) = sys.equations(&g, &t);
        let mut out = Vec::new();
        for v in a.iter().chain(&b).chain(&c) {
            out.push(v.re);
            out.push(v.im);
        }
        out
    };
    let zero = vec![0.0; 2 * n_unknown];
    let r0 = flat(&zero);
    let mut jac = DMatrix::<f64>::zeros(r0.len(), 2 * n_unknown);
    for k in 0..2 * n_unknown {
        let mut e = zero.clone();
        e[k] = 1.0;
        let rk = flat(&e);
        for (i, (a, b)) in rk.iter().zip(&r0).enumerate() {
            jac[(i, k)] = a - b;
        }
    }
    let rhs = -DVector::from_vec(r0.clone());
    let svd = jac.clone().svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).map_err(|_| CrError::UnderdeterminedSystem(f64::NAN))?;
    let resid = (&jac * &sol - &rhs).amax();
    let (gamma, tor) = unpack(sol.as_slice());
    if resid > 100.0 * CONNECTION_TOL {
        return Err(CrError::UnderdeterminedSystem(resid));
    }
    let torsion = DMatrix::from_fn(n, n, |a, b| tor[a][b]);
    Ok((gamma, torsion, resid))
}

fn basic_data(pg: &PointGeometry, conn: &ConnectionJets, res: Residuals) -> WebsterData {
    let n = pg.n;
    let d = pg.dim();
    WebsterData {
        x: pg.x.clone(),
        n,
        levi: values(&pg.levi),
        levi_inv: values(&pg.levi_inv),
        reeb: pg.reeb.iter().map(|j| j.value().re).collect(),
        coframe: values(&pg.coframe),
        frame: DMatrix::from_fn(n, d, |a, j| pg.frame[a][j].value()),
        gamma: conn.gamma.iter().map(|x| x.iter().map(|y| y.iter().map(|j| j.value()).collect()).collect()).collect(),
        torsion: DMatrix::from_fn(n, n, |a, b| conn.torsion[a][b].value()),
        curvature: None,
        ricci: None,
        scalar: None,
        scalar_imag: None,
        residuals: res,
    }
}

fn check_residual(res: &Residuals) -> Result<()> {
    let r = res.connection();
    if !(r <= 100.0 * CONNECTION_TOL) {
        return Err(CrError::UnderdeterminedSystem(r));
    }
    Ok(())
}

/// Connection and torsion at `x` (no curvature).
pub fn solve_connection(m: &CRManifold, x: &[f64]) -> Result<WebsterData> {
    let pg = PointGeometry::new(m, x, 2)?;
    let (conn, res) = connection_jets(&pg)?;
    check_residual(&res)?;
    Ok(basic_data(&pg, &conn, res))
}

/// Curvature components `R_α^β_{γσ̄}` and the largest discarded component.
fn curvature_from(pg: &PointGeometry, conn: &ConnectionJets) -> (Vec<C64>, f64) {
    let n = pg.n;
    let d = pg.dim();
    // ω_β^α as coordinate covectors (order ≥ 1)
    let lo = pg.order - 2;
    let cof: Vec<Vec<Jet>> = pg.coframe.iter().map(|r| r.iter().map(|c| c.truncate(lo)).collect()).collect();
    let omega: Vec<Vec<Vec<Jet>>> = (0..n)
        .map(|b| {
            (0..n)
                .map(|a| {
                    (0..d)
                        .map(|j| {
                            let mut s = Jet::zero(cof[0][0].space());
                            for c in 0..d {
                                if !conn.gamma[b][a][c].is_zero() {
                                    s += conn.gamma[b][a][c] * cof[c][j];
                                }
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let e0: Vec<Vec<Jet>> = pg.basis.iter().map(|v| v.iter().map(|c| c.truncate(0)).collect()).collect();
    let mut r = vec![C64::new(0.0, 0.0); n * n * n * n];
    let mut discarded: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            // Ω_a^b = dω_a^b − Σ_g ω_a^g ∧ ω_g^b, coordinate matrix
            let w = &omega[a][b];
            let der: Vec<Vec<Jet>> = w.iter().map(|c| (0..d).map(|i| c.derivative(i)).collect()).collect();
            let mut big = vec![vec![Jet::zero(der[0][0].space()); d]; d];
            for i in 0..d {
                for j in 0..d {
                    let mut s = der[j][i] - der[i][j];
                    for g in 0..n {
                        let (p, q) = (&omega[a][g], &omega[g][b]);
                        s -= (p[i] * q[j] - p[j] * q[i]).truncate(0);
                    }
                    big[i][j] = s;
                }
            }
            for p in 0..d {
                for q in p + 1..d {
                    let v = bilinear(&e0[p], &big, &e0[q]).value();
                    if p < n && q >= n && q < 2 * n {
                        r[((a * n + b) * n + p) * n + (q - n)] = v;
                    } else {
                        discarded = discarded.max(v.norm());
                    }
                }
            }
        }
    }
    (r, discarded)
}

/// Ricci form and scalar curvature from curvature components.
pub fn ricci_scalar(w: &WebsterData) -> (DMatrix<C64>, C64) {
    let n = w.n;
    let ric = DMatrix::from_fn(n, n, |a, b| (0..n).map(|g| w.r(g, g, a, b)).sum());
    let mut s = C64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            s += ric[(a, b)] * w.levi_inv[(a, b)];
        }
    }
    (ric, s)
}

fn finish(mut w: WebsterData, r: Vec<C64>, discarded: f64) -> WebsterData {
    w.curvature = Some(r);
    w.residuals.discarded_curvature = discarded;
    let (ric, s) = ricci_scalar(&w);
    w.ricci = Some(ric);
    w.scalar = Some(s.re);
    w.scalar_imag = Some(s.im);
    w
}

/// Full Webster data (connection, torsion, curvature, Ricci, scalar) at `x`.
pub fn webster(m: &CRManifold, x: &[f64]) -> Result<WebsterData> {
    let pg = PointGeometry::new(m, x, 3)?;
    let (conn, res) = connection_jets(&pg)?;
    check_residual(&res)?;
    let (r, disc) = curvature_from(&pg, &conn);
    Ok(finish(basic_data(&pg, &conn, res), r, disc))
}

/// Adds curvature to connection data computed by [`solve_connection`].
pub fn curvature(m: &CRManifold, x: &[f64], w: WebsterData) -> Result<WebsterData> {
    let pg = PointGeometry::new(m, x, 3)?;
    let (conn, _) = connection_jets(&pg)?;
    let (r, disc) = curvature_from(&pg, &conn);
    Ok(finish(w, r, disc))
}

/// Frame change `Q` (rows = new frame in terms of old) making the Levi form
/// the identity: pivoted Cholesky `Π G Πᵀ = L L*`, `Q = L⁻¹ Π`.
pub fn unitary_frame(levi: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = levi.nrows();
    let (l, perm) = pivoted_cholesky(levi).ok_or(CrError::NotPositiveDefinite)?;
    let linv = l.try_inverse().ok_or(CrError::NotPositiveDefinite)?;
    let pi = DMatrix::from_fn(n, n, |i, mu| if perm[i] == mu { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    Ok(linv * pi)
}

/// `(|R|_θ, |T|_θ)` computed in a unitary frame.
pub fn tensor_norms(w: &WebsterData) -> Result<(f64, f64)> {
    let n = w.n;
    let q = unitary_frame(&w.levi)?;
    let qi = q.clone().try_inverse().ok_or(CrError::NotPositiveDefinite)?;
    let mut rn = 0.0;
    if w.curvature.is_some() {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for s in 0..n {
                        let mut v = C64::new(0.0, 0.0);
                        for al in 0..n {
                            for be in 0..n {
                                for ga in 0..n {
                                    for si in 0..n {
                                        v += q[(a, al)] * qi[(be, b)] * q[(c, ga)] * q[(s, si)].conj() * w.r(al, be, ga, si);
                                    }
                                }
                            }
                        }
                        rn += v.norm_sqr();
                    }
                }
            }
        }
    }
    let mut tn = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut v = C64::new(0.0, 0.0);
            for al in 0..n {
                for be in 0..n {
                    v += qi[(al, a)] * q[(b, be)].conj() * w.torsion[(al, be)];
                }
            }
            tn += v.norm_sqr();
        }
    }
    Ok((rn.sqrt(), tn.sqrt()))
}

/// First and second covariant derivatives of a scalar field.
#[derive(Clone, Debug)]
pub struct CovariantJet {
    pub n: usize,
    pub value: C64,
    /// `f_α`
    pub d: Vec<C64>,
    /// `f_ᾱ`
    pub dbar: Vec<C64>,
    /// `f_{αβ}`
    pub hol: DMatrix<C64>,
    /// `f_{αβ̄}`
    pub mixed: DMatrix<C64>,
    /// `f_{β̄α}` stored as `[β][α]`
    pub mixed_rev: DMatrix<C64>,
    /// `f_{ᾱβ̄}`
    pub antihol: DMatrix<C64>,
    /// `g^{αβ̄}`
    pub levi_inv: DMatrix<C64>,
}

impl CovariantJet {
    /// `f^α = g^{αβ̄} f_β̄`
    pub fn up(&self) -> Vec<C64> {
        (0..self.n).map(|a| (0..self.n).map(|b| self.levi_inv[(a, b)] * self.dbar[b]).sum()).collect()
    }
    /// `f^ᾱ = g^{βᾱ} f_β`
    pub fn up_bar(&self) -> Vec<C64> {
        (0..self.n).map(|a| (0..self.n).map(|b| self.levi_inv[(b, a)] * self.d[b]).sum()).collect()
    }
    /// `f^λ f_λ`
    pub fn grad_sq(&self) -> C64 {
        self.up().iter().zip(&self.d).map(|(a, b)| a * b).sum()
    }
    /// `f^β_γ = g^{βσ̄} f_{σ̄γ}` as `[β][γ]`.
    pub fn raised_rev(&self) -> DMatrix<C64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |b, g| (0..n).map(|s| self.levi_inv[(b, s)] * self.mixed_rev[(s, g)]).sum())
    }
    /// `f_α^β = g^{βσ̄} f_{ασ̄}` as `[α][β]`.
    pub fn raised_mixed(&self) -> DMatrix<C64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| (0..n).map(|s| self.levi_inv[(b, s)] * self.mixed[(a, s)]).sum())
    }
    /// `f^α_β̄ = g^{αγ̄} f_{γ̄β̄}` as `[α][β]`.
    pub fn raised_antihol(&self) -> DMatrix<C64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| (0..n).map(|g| self.levi_inv[(a, g)] * self.antihol[(g, b)]).sum())
    }
    /// `f_{αβ̄} − f_{β̄α}`, reported rather than assumed zero.
    pub fn commutation_defect(&self) -> DMatrix<C64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| self.mixed[(a, b)] - self.mixed_rev[(b, a)])
    }
    /// `Δ_θ f = −(f_α^α + f_ᾱ^ᾱ)`.
    pub fn sublaplacian(&self) -> C64 {
        let n = self.n;
        let mut s = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                s += self.mixed[(a, b)] * self.levi_inv[(a, b)];
                s += self.mixed_rev[(a, b)] * self.levi_inv[(b, a)];
            }
        }
        -s
    }
}

/// Covariant jet of `f` from jets of order 2 and connection values.
pub fn covariant_jet_at(pg: &PointGeometry, gamma: &[Vec<Vec<C64>>], f: &Jet) -> CovariantJet {
    let n = pg.n;
    let d = pg.dim();
    let frame: Vec<Vec<Jet>> = pg.basis[..2 * n].iter().map(|v| v.iter().map(|c| c.truncate(1)).collect()).collect();
    let apply = |v: &[Jet], h: &Jet| -> Jet {
        let mut s = Jet::zero(h.derivative(0).space());
        for j in 0..d {
            if !v[j].is_zero() {
                s += h.derivative(j) * v[j].truncate(h.order().saturating_sub(1));
            }
        }
        s
    };
    let first: Vec<Jet> = (0..2 * n).map(|a| apply(&frame[a], f)).collect();
    let fv: Vec<C64> = first.iter().map(|j| j.value()).collect();
    let second = |a: usize, b: usize| apply(&frame[b], &first[a]).value();
    let mut hol = DMatrix::zeros(n, n);
    let mut mixed = DMatrix::zeros(n, n);
    let mut mixed_rev = DMatrix::zeros(n, n);
    let mut antihol = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut h = second(a, b);
            let mut m = second(a, n + b);
            let mut mr = second(n + a, b);
            let mut ah = second(n + a, n + b);
            for g in 0..n {
                h -= gamma[a][g][b] * fv[g];
                m -= gamma[a][g][n + b] * fv[g];
                mr -= gamma[a][g][n + b].conj() * fv[n + g];
                ah -= gamma[a][g][b].conj() * fv[n + g];
            }
            hol[(a, b)] = h;
            mixed[(a, b)] = m;
            mixed_rev[(a, b)] = mr;
            antihol[(a, b)] = ah;
        }
    }
    CovariantJet {
        n,
        value: f.value(),
        d: fv[..n].to_vec(),
        dbar: fv[n..].to_vec(),
        hol,
        mixed,
        mixed_rev,
        antihol,
        levi_inv: values(&pg.levi_inv),
    }
}

/// Covariant jet of a scalar field at `x`.
pub fn covariant_jet(m: &CRManifold, w: &WebsterData, f: &ScalarField, x: &[f64]) -> Result<CovariantJet> {
    let pg = PointGeometry::new(m, x, 2)?;
    if !m.chart.stencil_fits(x, f.field.stencil_radius()) {
        return Err(CrError::StencilOutOfDomain(x.to_vec()));
    }
    let fj = f.jet(x, 2)?;
    Ok(covariant_jet_at(&pg, &w.gamma, &fj))
}

/// `Δ_θ f` at `x` (real part; the imaginary part is a diagnostic).
pub fn sublaplacian(m: &CRManifold, w: &WebsterData, f: &ScalarField, x: &[f64]) -> Result<C64> {
    Ok(covariant_jet(m, w, f, x)?.sublaplacian())
}

/// `|du|²_θ = 2 g^{αβ̄} u_α u_β̄` expressed as the real symmetric matrix
/// `Q` acting on coordinate gradients.
pub fn gradient_metric(pg: &PointGeometry) -> DMatrix<f64> {
    let n = pg.n;
    let d = pg.dim();
    let mut q = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let mut s = C64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    s += pg.levi_inv[a][b].value() * pg.frame[a][j].value() * pg.frame[b][k].value().conj();
                }
            }
            q[(j, k)] = 2.0 * s.re;
        }
    }
    (&q + q.transpose()) * 0.5
}

/// Flattened CSV header and row for one grid point.
pub fn csv_row(w: &WebsterData) -> (Vec<String>, Vec<f64>) {
    let n = w.n;
    let mut head: Vec<String> = (0..w.x.len()).map(|k| format!("x{k}")).collect();
    let mut row = w.x.clone();
    for a in 0..n {
        for b in 0..n {
            head.push(format!("g_{a}{b}_re"));
            head.push(format!("g_{a}{b}_im"));
            row.push(w.levi[(a, b)].re);
            row.push(w.levi[(a, b)].im);
        }
    }
    for a in 0..n {
        for b in 0..n {
            head.push(format!("A_{a}{b}_re"));
            head.push(format!("A_{a}{b}_im"));
            row.push(w.torsion[(a, b)].re);
            row.push(w.torsion[(a, b)].im);
        }
    }
    if let Some(r) = &w.curvature {
        let mut k = 0;
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    for s in 0..n {
                        head.push(format!("R_{a}{b}{g}{s}_re"));
                        head.push(format!("R_{a}{b}{g}{s}_im"));
                        row.push(r[k].re);
                        row.push(r[k].im);
                        k += 1;
                    }
                }
            }
        }
    }
    head.push("S".into());
    row.push(w.scalar.unwrap_or(f64::NAN));
    (head, row)
}
