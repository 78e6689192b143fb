//! The standard sphere `S^{2n+1} ⊂ C^{n+1}` with `θ = c·Im(Σ ū_j du_j)`.
//!
//! Two Cayley charts carry the analytic structure pointwise: the north chart
//! `Φ(z, t) = (2z/(i+w), (i−w)/(i+w))`, `w = t + i|z|²`, misses `(0, −1)`;
//! the south chart is `Φ` followed by `ξ ↦ −ξ`. Both pull the form back to
//! `c·λ·ϑ_0` with `λ = 2/(t² + (1+|z|²)²)` and the frame to `Z_α`.
//!
//! For `n = 1` a Hopf chart `u = (cos η e^{iα}, sin η e^{iβ})` carries the
//! quadrature grid: Gauss nodes in `η`, uniform periodic nodes in `α, β`.
//! The Reeb field is `T = (i u)/c`, i.e. `(∂_α + ∂_β)/c` in Hopf coordinates,
//! so `θ(T) = +1` with the orientation fixed by the embedded form.

use super::heisenberg::heisenberg_frame;
use crate::error::{CrError, Result};
use crate::field::{ComplexFrame, ContactForm};
use crate::geometry::{CRManifold, Chart};
use crate::grid::{Axis, Grid};
use crate::jet::{Jet, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

/// Multiplier `c` giving total volume one (independent of `n`).
pub const UNIT_VOLUME_FACTOR: f64 = 1.0 / (2.0 * PI);

/// Default cap radius, measured in the ambient `C^{n+1}`.
pub const DEFAULT_CAP: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SphereChart {
    North,
    South,
    Hopf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereOptions {
    /// Form multiplier; `UNIT_VOLUME_FACTOR` normalises the volume to one.
    pub scale: f64,
    pub cap: f64,
    /// Half-widths of the Cayley boxes in `z` and `t`.
    pub cayley_box: (f64, f64),
    /// Nodes per axis on each Cayley box (0 disables the grid).
    pub cayley_points: usize,
    /// Hopf grid shape `(N_η, N_α, N_β)`; ignored for `n > 1`.
    pub hopf_shape: [usize; 3],
}

impl Default for SphereOptions {
    fn default() -> Self {
        SphereOptions { scale: UNIT_VOLUME_FACTOR, cap: DEFAULT_CAP, cayley_box: (1.0, 1.0), cayley_points: 0, hopf_shape: [48, 49, 49] }
    }
}

#[derive(Clone, Debug)]
pub struct SphereAtlas {
    pub n: usize,
    pub scale: f64,
    pub north: CRManifold,
    pub south: CRManifold,
    /// Quadrature chart (`n = 1` only).
    pub hopf: Option<CRManifold>,
}

impl SphereAtlas {
    pub fn chart(&self, c: SphereChart) -> Result<&CRManifold> {
        match c {
            SphereChart::North => Ok(&self.north),
            SphereChart::South => Ok(&self.south),
            SphereChart::Hopf => self.hopf.as_ref().ok_or_else(|| CrError::UnsupportedManifold(format!("no Hopf chart for n = {}", self.n))),
        }
    }

    /// The chart carrying grid operators.
    pub fn quadrature(&self) -> Result<&CRManifold> {
        self.chart(SphereChart::Hopf)
    }

    /// Reeb field of the embedded form at `u`, as a vector in `C^{n+1}`.
    pub fn embedded_reeb(&self, u: &[C64]) -> Vec<C64> {
        u.iter().map(|v| v * C64::new(0.0, 1.0 / self.scale)).collect()
    }
}

/// `Φ` as jets: real chart coordinates to `C^{n+1}`.
pub fn cayley_jets(x: &[Jet]) -> Vec<Jet> {
    let n = (x.len() - 1) / 2;
    let i = C64::new(0.0, 1.0);
    let mut r2 = Jet::zero(x[0].space());
    for k in 0..2 * n {
        r2 += x[k] * x[k];
    }
    let w = x[2 * n] + r2 * i;
    let den = (w + i).recip();
    let mut u: Vec<Jet> = (0..n).map(|a| (x[a] + x[n + a] * i) * den * 2.0).collect();
    u.push((w * -1.0 + i) * den);
    u
}

fn embed_values(x: &[f64], f: impl Fn(&[Jet]) -> Vec<Jet>) -> Vec<C64> {
    let xs = Jet::variables(x, 0);
    f(&xs).iter().map(|j| j.value()).collect()
}

/// Chart coordinates to the embedded point.
pub fn chart_to_embedded(c: SphereChart, x: &[f64]) -> Vec<C64> {
    match c {
        SphereChart::North => embed_values(x, cayley_jets),
        SphereChart::South => {
            let mut u = embed_values(x, cayley_jets);
            let last = u.len() - 1;
            u[last] = -u[last];
            u
        }
        SphereChart::Hopf => hopf_embed(x),
    }
}

/// `Φ^{-1}`: `z = iζ/(1+ξ)`, `t = Re(i(1−ξ)/(1+ξ))`.
pub fn cayley_inverse(u: &[C64]) -> Vec<f64> {
    let n = u.len() - 1;
    let i = C64::new(0.0, 1.0);
    let xi = u[n];
    let z: Vec<C64> = (0..n).map(|a| i * u[a] / (1.0 + xi)).collect();
    let w = i * (1.0 - xi) / (1.0 + xi);
    let mut x: Vec<f64> = z.iter().map(|c| c.re).collect();
    x.extend(z.iter().map(|c| c.im));
    x.push(w.re);
    x
}

/// Jet version of [`cayley_inverse`].
pub fn cayley_inverse_jets(u: &[Jet]) -> Vec<Jet> {
    let n = u.len() - 1;
    let i = C64::new(0.0, 1.0);
    let den = (u[n] + 1.0).recip();
    let z: Vec<Jet> = (0..n).map(|a| u[a] * den * i).collect();
    let w = (u[n] * -1.0 + 1.0) * den * i;
    let mut x: Vec<Jet> = z.iter().map(|c| c.re()).collect();
    x.extend(z.iter().map(|c| c.im()));
    x.push(w.re());
    x
}

/// Embedded point to chart coordinates.
pub fn embedded_to_chart(c: SphereChart, u: &[C64], cap: f64) -> Result<Vec<f64>> {
    let n = u.len() - 1;
    match c {
        SphereChart::North | SphereChart::South => {
            let mut v = u.to_vec();
            if c == SphereChart::South {
                v[n] = -v[n];
            }
            if pole_distance(&v) < cap {
                return Err(CrError::CapExclusion(v.iter().flat_map(|z| [z.re, z.im]).collect()));
            }
            Ok(cayley_inverse(&v))
        }
        SphereChart::Hopf => {
            if n != 1 {
                return Err(CrError::UnsupportedManifold("Hopf chart needs n = 1".into()));
            }
            let eta = u[1].norm().atan2(u[0].norm());
            if eta <= 0.0 || eta >= FRAC_PI_2 {
                return Err(CrError::MapOutOfDomain(vec![eta]));
            }
            Ok(vec![eta, u[0].arg().rem_euclid(2.0 * PI), u[1].arg().rem_euclid(2.0 * PI)])
        }
    }
}

/// Distance from `u` to the point `(0, −1)` missed by the north chart.
fn pole_distance(u: &[C64]) -> f64 {
    let n = u.len() - 1;
    let mut s: f64 = u[..n].iter().map(|z| z.norm_sqr()).sum();
    s += (u[n] + 1.0).norm_sqr();
    s.sqrt()
}

/// `λ = 2/(t² + (1+|z|²)²)`.
pub fn cayley_factor_jet(x: &[Jet]) -> Jet {
    let n = (x.len() - 1) / 2;
    let mut r2 = Jet::zero(x[0].space());
    for k in 0..2 * n {
        r2 += x[k] * x[k];
    }
    let s = r2 + 1.0;
    (x[2 * n] * x[2 * n] + s * s).recip() * 2.0
}

fn cayley_form(n: usize, c: f64) -> ContactForm {
    let d = 2 * n + 1;
    ContactForm::analytic("sphere", d, move |x| {
        let lam = cayley_factor_jet(x) * c;
        let mut out = vec![Jet::zero(x[0].space()); d];
        for a in 0..n {
            out[a] = x[n + a] * lam * -2.0;
            out[n + a] = x[a] * lam * 2.0;
        }
        out[2 * n] = lam;
        out
    })
}

fn cayley_chart(n: usize, which: SphereChart, opts: &SphereOptions) -> Result<CRManifold> {
    let d = 2 * n + 1;
    let (bz, bt) = opts.cayley_box;
    let mut lo = vec![-bz; d];
    let mut hi = vec![bz; d];
    lo[2 * n] = -bt;
    hi[2 * n] = bt;
    let label = if which == SphereChart::North { "sphere_north" } else { "sphere_south" };
    let chart = Chart::new(label, lo.clone(), hi.clone(), vec![false; d])?;
    let grid = if opts.cayley_points > 0 {
        let axes = (0..d).map(|k| Axis::interval(lo[k], hi[k], opts.cayley_points)).collect();
        Some(Arc::new(Grid::new(axes, vec![], 8)?))
    } else {
        None
    };
    let cap = opts.cap;
    let m = CRManifold::new(label, chart, heisenberg_frame(n), cayley_form(n, opts.scale), grid);
    // Both charts see their own missing pole at `(0, −1)` after the flip.
    Ok(m.with_exclusion(Arc::new(move |x: &[f64]| pole_distance(&embed_values(x, cayley_jets)) < cap)))
}

/// `(η, α, β) ↦ (cos η e^{iα}, sin η e^{iβ})`.
pub fn hopf_embed(x: &[f64]) -> Vec<C64> {
    vec![C64::from_polar(x[0].cos(), x[1]), C64::from_polar(x[0].sin(), x[2])]
}

pub fn hopf_embed_jets(x: &[Jet]) -> Vec<Jet> {
    let i = C64::new(0.0, 1.0);
    vec![x[0].cos() * (x[1] * i).exp(), x[0].sin() * (x[2] * i).exp()]
}

fn hopf_chart(opts: &SphereOptions) -> Result<CRManifold> {
    let c = opts.scale;
    let theta = ContactForm::analytic("sphere", 3, move |x| {
        let (co, si) = (x[0].cos(), x[0].sin());
        vec![Jet::zero(x[0].space()), co * co * c, si * si * c]
    });
    // W = ∂_η + i tan η ∂_α − i cot η ∂_β
    let frame = ComplexFrame::analytic(1, 3, |x| {
        let i = C64::new(0.0, 1.0);
        let tan = x[0].tan();
        vec![Jet::constant(x[0].space(), 1.0), tan * i, tan.recip() * -i]
    });
    let chart = Chart::new("sphere_hopf", vec![0.0, 0.0, 0.0], vec![FRAC_PI_2, 2.0 * PI, 2.0 * PI], vec![false, true, true])?;
    let [ne, na, nb] = opts.hopf_shape;
    let grid = Grid::new(vec![Axis::gauss(0.0, FRAC_PI_2, ne), Axis::fourier(0.0, 2.0 * PI, na), Axis::fourier(0.0, 2.0 * PI, nb)], vec![], 8)?;
    Ok(CRManifold::new("sphere_hopf", chart, frame, theta, Some(Arc::new(grid))))
}

/// The standard sphere `S^{2n+1}`.
pub fn sphere(n: usize, opts: &SphereOptions) -> Result<SphereAtlas> {
    if n == 0 {
        return Err(CrError::Config("sphere needs n ≥ 1".into()));
    }
    if !(opts.scale > 0.0) {
        return Err(CrError::Config(format!("form multiplier {} must be positive", opts.scale)));
    }
    Ok(SphereAtlas {
        n,
        scale: opts.scale,
        north: cayley_chart(n, SphereChart::North, opts)?,
        south: cayley_chart(n, SphereChart::South, opts)?,
        hopf: if n == 1 { Some(hopf_chart(opts)?) } else { None },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cayley_round_trip() {
        let x = [0.3, -0.2, 0.7];
        let u = chart_to_embedded(SphereChart::North, &x);
        let norm: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        let back = embedded_to_chart(SphereChart::North, &u, DEFAULT_CAP).unwrap();
        for k in 0..3 {
            assert!((back[k] - x[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn cap_is_excluded() {
        let u = vec![C64::new(0.05, 0.0), C64::new(-(1.0f64 - 0.0025).sqrt(), 0.0)];
        assert!(matches!(embedded_to_chart(SphereChart::North, &u, DEFAULT_CAP), Err(CrError::CapExclusion(_))));
        assert!(embedded_to_chart(SphereChart::South, &u, DEFAULT_CAP).is_ok());
    }
}
