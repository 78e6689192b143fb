//! The Heisenberg group `H^n` in real coordinates
//! `(x_1..x_n, y_1..y_n, t)` with `z_α = x_α + i y_α`.
//!
//! Group law `(a, s)·(z, t) = (a + z, s + t + 2 Im⟨a, z⟩)` with
//! `⟨a, z⟩ = Σ a_α z̄_α`; under it `Z_α` and `ϑ_0` are left-invariant.

use crate::error::{CrError, Result};
use crate::field::{ComplexFrame, ContactForm};
use crate::geometry::{CRManifold, Chart};
use crate::grid::{Axis, Grid};
use crate::jet::{Jet, C64};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergPoint {
    pub z: Vec<C64>,
    pub t: f64,
}

impl HeisenbergPoint {
    pub fn new(z: Vec<C64>, t: f64) -> HeisenbergPoint {
        HeisenbergPoint { z, t }
    }

    pub fn origin(n: usize) -> HeisenbergPoint {
        HeisenbergPoint { z: vec![C64::new(0.0, 0.0); n], t: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Real chart coordinates `(x, y, t)`.
    pub fn to_coords(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.z.iter().map(|c| c.re).collect();
        v.extend(self.z.iter().map(|c| c.im));
        v.push(self.t);
        v
    }

    pub fn from_coords(x: &[f64]) -> HeisenbergPoint {
        let n = (x.len() - 1) / 2;
        HeisenbergPoint { z: (0..n).map(|a| C64::new(x[a], x[n + a])).collect(), t: x[2 * n] }
    }
}

/// `Im Σ a_α z̄_α`
fn symplectic(a: &[C64], z: &[C64]) -> f64 {
    a.iter().zip(z).map(|(a, z)| (a * z.conj()).im).sum()
}

pub fn group_law(a: &HeisenbergPoint, b: &HeisenbergPoint) -> HeisenbergPoint {
    HeisenbergPoint {
        z: a.z.iter().zip(&b.z).map(|(p, q)| p + q).collect(),
        t: a.t + b.t + 2.0 * symplectic(&a.z, &b.z),
    }
}

pub fn inverse(a: &HeisenbergPoint) -> HeisenbergPoint {
    HeisenbergPoint { z: a.z.iter().map(|c| -c).collect(), t: -a.t }
}

/// `|(z, t)| = (|z|⁴ + t²)^{1/4}`
pub fn heisenberg_norm(a: &HeisenbergPoint) -> f64 {
    let r2: f64 = a.z.iter().map(|c| c.norm_sqr()).sum();
    (r2 * r2 + a.t * a.t).powf(0.25)
}

/// `δ_λ(z, t) = (λz, λ²t)`
pub fn dilate(lambda: f64, a: &HeisenbergPoint) -> Result<HeisenbergPoint> {
    if !(lambda > 0.0) {
        return Err(CrError::NonPositiveDilation(lambda));
    }
    Ok(HeisenbergPoint { z: a.z.iter().map(|c| c * lambda).collect(), t: lambda * lambda * a.t })
}

/// Jet version of the group law on real coordinates, for building maps.
pub fn group_law_jets(a: &[f64], x: &[Jet]) -> Vec<Jet> {
    let n = (a.len() - 1) / 2;
    let mut out: Vec<Jet> = (0..2 * n).map(|k| x[k] + a[k]).collect();
    // 2 Im(a z̄) = 2 Σ (a_y x − a_x y)
    let mut t = x[2 * n] + a[2 * n];
    for al in 0..n {
        t = t + x[al] * (2.0 * a[n + al]) - x[n + al] * (2.0 * a[al]);
    }
    out.push(t);
    out
}

/// `Z_α = ½(∂_{x_α} − i∂_{y_α}) + i z̄_α ∂_t`.
pub fn heisenberg_frame(n: usize) -> ComplexFrame {
    let d = 2 * n + 1;
    ComplexFrame::analytic(n, d, move |x| {
        let space = x[0].space();
        let mut out = Vec::with_capacity(n * d);
        for a in 0..n {
            for j in 0..d {
                let c = if j == a {
                    Jet::constant(space, 0.5)
                } else if j == n + a {
                    Jet::constant(space, C64::new(0.0, -0.5))
                } else if j == 2 * n {
                    // i z̄ = y + i x
                    x[n + a] + x[a] * C64::new(0.0, 1.0)
                } else {
                    Jet::zero(space)
                };
                out.push(c);
            }
        }
        out
    })
}

/// `ϑ_0 = dt − i z̄ dz + i z dz̄ = dt + 2 Σ (x dy − y dx)`.
pub fn heisenberg_form(n: usize) -> ContactForm {
    let d = 2 * n + 1;
    ContactForm::analytic("theta0", d, move |x| {
        let space = x[0].space();
        let mut out = vec![Jet::zero(space); d];
        for a in 0..n {
            out[a] = x[n + a] * -2.0;
            out[n + a] = x[a] * 2.0;
        }
        out[2 * n] = Jet::constant(space, 1.0);
        out
    })
}

/// `H^n` on the box `|x_α|, |y_α| ≤ r`, `|t| ≤ r²·t_scale`, with an
/// interval grid of `points` nodes per axis.
pub fn heisenberg(n: usize, half_width: f64, t_half_width: f64, points: &[usize]) -> Result<CRManifold> {
    let d = 2 * n + 1;
    let mut lo = vec![-half_width; d];
    let mut hi = vec![half_width; d];
    lo[2 * n] = -t_half_width;
    hi[2 * n] = t_half_width;
    let chart = Chart::new("heisenberg", lo.clone(), hi.clone(), vec![false; d])?;
    let grid = if points.is_empty() {
        None
    } else {
        if points.len() != d {
            return Err(CrError::Config(format!("grid needs {d} axes")));
        }
        let axes = (0..d).map(|k| Axis::interval(lo[k], hi[k], points[k])).collect();
        Some(Arc::new(Grid::new(axes, vec![], 8)?))
    };
    Ok(CRManifold::new("heisenberg", chart, heisenberg_frame(n), heisenberg_form(n), grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        assert_eq!(heisenberg_norm(&HeisenbergPoint::new(vec![C64::new(0.0, 0.0)], 4.0)), 2.0);
        assert_eq!(heisenberg_norm(&HeisenbergPoint::new(vec![C64::new(1.0, 0.0)], 0.0)), 1.0);
    }

    #[test]
    fn dilation_rejects_nonpositive() {
        assert!(matches!(dilate(0.0, &HeisenbergPoint::origin(1)), Err(CrError::NonPositiveDilation(_))));
    }
}
