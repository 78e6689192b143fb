//! Normal coordinates `Θ_ξ` on the models: the group difference `ξ⁻¹·η`
//! followed by the dilation that makes `θ` agree with `ϑ_0` at the centre.
//! On the sphere the group difference is taken in a Cayley chart.

use super::heisenberg::{group_law, group_law_jets, inverse, HeisenbergPoint};
use super::nilmanifold::to_heisenberg;
use crate::error::{CrError, Result};
use crate::geometry::CRManifold;
use crate::jet::Jet;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NormalModel {
    Heisenberg,
    Nilmanifold,
    SphereCayley,
}

#[derive(Clone, Debug)]
pub struct NormalCoordinates {
    pub model: NormalModel,
    pub n: usize,
    /// Centre in chart coordinates.
    pub center: Vec<f64>,
    /// Centre in Heisenberg coordinates.
    base: Vec<f64>,
    /// Dilation factor `s`, with `s² = θ(∂_t)` at the centre.
    pub scale: f64,
    /// Lattice scale for the nilmanifold.
    lattice: f64,
    m: CRManifold,
}

/// Recognises the model from the manifold label and contact-form name.
pub fn normal_coordinates(m: &CRManifold, xi: &[f64]) -> Result<NormalCoordinates> {
    let model = match (m.label.as_str(), m.theta.name.as_str()) {
        ("heisenberg", "theta0") => NormalModel::Heisenberg,
        ("nilmanifold", "theta0") => NormalModel::Nilmanifold,
        ("sphere_north" | "sphere_south", "sphere") => NormalModel::SphereCayley,
        _ => return Err(CrError::UnsupportedManifold(format!("{} with form {}", m.label, m.theta.name))),
    };
    m.check_point(xi)?;
    let n = m.n;
    let base = if model == NormalModel::Nilmanifold { to_heisenberg(xi) } else { xi.to_vec() };
    let tt = m.theta.field.values(xi)?[2 * n].re;
    if !(tt > 0.0) {
        return Err(CrError::DegenerateContact(xi.to_vec()));
    }
    Ok(NormalCoordinates { model, n, center: xi.to_vec(), base, scale: tt.sqrt(), lattice: m.chart.hi[0] - m.chart.lo[0], m: m.clone() })
}

fn dilate_coords(s: f64, v: &mut [f64]) {
    let l = v.len() - 1;
    for c in v.iter_mut().take(l) {
        *c *= s;
    }
    v[l] *= s * s;
}

impl NormalCoordinates {
    /// `Θ_ξ(η)` as real coordinates `(x, y, t)`.
    pub fn forward(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let h = match self.model {
            NormalModel::Nilmanifold => self.nearest_lift(eta),
            _ => eta.to_vec(),
        };
        let diff = group_law(&inverse(&HeisenbergPoint::from_coords(&self.base)), &HeisenbergPoint::from_coords(&h));
        let mut v = diff.to_coords();
        dilate_coords(self.scale, &mut v);
        Ok(v)
    }

    /// `Θ_ξ^{-1}` in jets: `ξ · δ_{1/s}(y)`, mapped back to chart coordinates.
    pub fn inverse_jets(&self, y: &[Jet]) -> Vec<Jet> {
        let n = self.n;
        let s = 1.0 / self.scale;
        let mut d: Vec<Jet> = y.iter().map(|v| *v * s).collect();
        d[2 * n] = y[2 * n] * (s * s);
        let h = group_law_jets(&self.base, &d);
        if self.model == NormalModel::Nilmanifold {
            // twisted coordinate t' = t + 2 Σ x y, no wrapping (local lift)
            let mut out = h.clone();
            for a in 0..n {
                out[2 * n] += h[a] * h[n + a] * 2.0;
            }
            out
        } else {
            h
        }
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        self.inverse_jets(&Jet::variables(y, 0)).iter().map(|j| j.value().re).collect()
    }

    /// Lift of a nilmanifold point to Heisenberg coordinates, choosing the
    /// lattice translate closest to the centre.
    fn nearest_lift(&self, eta: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = self.lattice;
        let mut best = to_heisenberg(eta);
        let mut best_norm = f64::INFINITY;
        let c = HeisenbergPoint::from_coords(&self.base);
        let ci = inverse(&c);
        let shifts = [-1.0, 0.0, 1.0];
        let mut idx = vec![0usize; 2 * n + 1];
        loop {
            // lattice element γ = (x-shifts, y-shifts, t-shift), acting by γ·η
            let mut g: Vec<f64> = idx.iter().map(|&k| shifts[k] * l).collect();
            g[2 * n] *= l;
            let h = group_law(&HeisenbergPoint::from_coords(&g), &HeisenbergPoint::from_coords(&to_heisenberg(eta)));
            let nrm = super::heisenberg::heisenberg_norm(&group_law(&ci, &h));
            if nrm < best_norm {
                best_norm = nrm;
                best = h.to_coords();
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < 3 {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
        best
    }

    /// Coefficients of `(Θ_ξ^{-1})*θ − ϑ_0` at `y`, split into the `dt`
    /// part and the largest horizontal (`dx`, `dy`) part.
    pub fn pullback_deviation(&self, y: &[f64]) -> Result<(f64, f64)> {
        let n = self.n;
        let d = 2 * n + 1;
        let j = self.inverse_jets(&Jet::variables(y, 1));
        let p: Vec<f64> = j.iter().map(|v| v.value().re).collect();
        // lifted point: the chart formulas hold on the whole cover
        let th: Vec<f64> = self.m.theta.field.values(&p)?.iter().map(|c| c.re).collect();
        let mut e = vec![0u8; d];
        let mut pull = vec![0.0; d];
        for (l, pl) in pull.iter_mut().enumerate() {
            e[l] = 1;
            *pl = (0..d).map(|k| th[k] * j[k].partial(&e).re).sum();
            e[l] = 0;
        }
        let mut flat = vec![0.0; d];
        for a in 0..n {
            flat[a] = -2.0 * y[n + a];
            flat[n + a] = 2.0 * y[a];
        }
        flat[2 * n] = 1.0;
        let dt = (pull[2 * n] - flat[2 * n]).abs();
        let dz = (0..2 * n).map(|k| (pull[k] - flat[k]).abs()).fold(0.0, f64::max);
        Ok((dt, dz))
    }
}

/// Least-squares slope of `log dev` against `log r`.
pub fn loglog_slope(r: &[f64], dev: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = r.iter().zip(dev).filter(|(_, d)| **d > 1e-300).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Slopes of the `dt` and `dz` deviations over Heisenberg spheres of the
/// given radii. `None` marks a deviation that vanishes identically.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ExpansionOrders {
    pub dt_slope: Option<f64>,
    pub dz_slope: Option<f64>,
    pub max_dt: f64,
    pub max_dz: f64,
}

pub fn expansion_orders(nc: &NormalCoordinates, radii: &[f64]) -> Result<ExpansionOrders> {
    let n = nc.n;
    // fixed directions on the unit Heisenberg sphere
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..8 {
        let ang = k as f64 * std::f64::consts::PI / 4.0 + 0.3;
        for tfrac in [-0.6f64, 0.0, 0.6] {
            let rz = (1.0 - tfrac * tfrac).powf(0.25);
            let mut v = vec![0.0; 2 * n + 1];
            v[0] = rz * ang.cos();
            v[n] = rz * ang.sin();
            v[2 * n] = tfrac;
            dirs.push(v);
        }
    }
    let mut dts = Vec::new();
    let mut dzs = Vec::new();
    for &r in radii {
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for v in &dirs {
            let mut y = v.clone();
            dilate_coords(r, &mut y);
            let (dt, dz) = nc.pullback_deviation(&y)?;
            a = a.max(dt);
            b = b.max(dz);
        }
        dts.push(a);
        dzs.push(b);
    }
    let tiny = |v: &[f64]| v.iter().all(|d| *d < 1e-13);
    Ok(ExpansionOrders {
        dt_slope: if tiny(&dts) { None } else { loglog_slope(radii, &dts) },
        dz_slope: if tiny(&dzs) { None } else { loglog_slope(radii, &dzs) },
        max_dt: dts.iter().copied().fold(0.0, f64::max),
        max_dz: dzs.iter().copied().fold(0.0, f64::max),
    })
}
