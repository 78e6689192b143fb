//! Compact quotient of `H^n` by the lattice generated by `x_α ↦ x_α + L`,
//! `y_α ↦ y_α + L` and `t ↦ t + L²`.
//!
//! The chart uses twisted coordinates `t' = t + 2 Σ x_α y_α`, in which the
//! `x` translations act trivially and a `y_α` translation shifts `t'` by
//! `4 L x_α`. There `ϑ_0 = dt' − 4 Σ y_α dx_α` and
//! `Z_α = ½(∂_{x_α} − i∂_{y_α}) + 2 y_α ∂_{t'}`.

use crate::error::{CrError, Result};
use crate::field::{ComplexFrame, ContactForm};
use crate::geometry::{CRManifold, Chart};
use crate::grid::{Axis, Grid, Twist};
use crate::jet::{Jet, C64};
use std::sync::Arc;

/// Multiplier making the quotient volume one: `c = (4^n n! L^{2n+2})^{-1/(n+1)}`.
pub fn unit_volume_factor(n: usize, scale: f64) -> f64 {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let vol = 4f64.powi(n as i32) * fact * scale.powi(2 * n as i32 + 2);
    vol.powf(-1.0 / (n as f64 + 1.0))
}

pub fn nilmanifold_frame(n: usize) -> ComplexFrame {
    let d = 2 * n + 1;
    ComplexFrame::analytic(n, d, move |x| {
        let space = x[0].space();
        let mut out = Vec::with_capacity(n * d);
        for a in 0..n {
            for j in 0..d {
                out.push(if j == a {
                    Jet::constant(space, 0.5)
                } else if j == n + a {
                    Jet::constant(space, C64::new(0.0, -0.5))
                } else if j == 2 * n {
                    x[n + a] * 2.0
                } else {
                    Jet::zero(space)
                });
            }
        }
        out
    })
}

/// `c·ϑ_0` in twisted coordinates.
pub fn nilmanifold_form(n: usize, c: f64) -> ContactForm {
    let d = 2 * n + 1;
    ContactForm::analytic("theta0", d, move |x| {
        let space = x[0].space();
        let mut out = vec![Jet::zero(space); d];
        for a in 0..n {
            out[a] = x[n + a] * (-4.0 * c);
        }
        out[2 * n] = Jet::constant(space, c);
        out
    })
}

/// The unit-volume nilmanifold with lattice scale `scale` and a periodic
/// grid of the given shape (`N_x` must divide `4 N_t` on every pair).
pub fn nilmanifold(n: usize, scale: f64, shape: &[usize]) -> Result<CRManifold> {
    let d = 2 * n + 1;
    if !(scale > 0.0) {
        return Err(CrError::IncompatibleLattice(format!("lattice scale {scale} must be positive")));
    }
    if shape.len() != d {
        return Err(CrError::Config(format!("grid needs {d} axes")));
    }
    let mut hi = vec![scale; d];
    hi[2 * n] = scale * scale;
    let chart = Chart::new("nilmanifold", vec![0.0; d], hi.clone(), vec![true; d])?;
    let axes = (0..d).map(|k| Axis::periodic(0.0, hi[k], shape[k])).collect();
    let twists = (0..n).map(|a| Twist { x_axis: a, y_axis: n + a, t_axis: 2 * n, factor_coord: 4.0 * scale }).collect();
    let grid = Grid::new(axes, twists, 8)?;
    let c = unit_volume_factor(n, scale);
    Ok(CRManifold::new("nilmanifold", chart, nilmanifold_frame(n), nilmanifold_form(n, c), Some(Arc::new(grid))))
}

/// Twisted coordinates to Heisenberg coordinates (on the fundamental domain).
pub fn to_heisenberg(x: &[f64]) -> Vec<f64> {
    let n = (x.len() - 1) / 2;
    let mut h = x.to_vec();
    h[2 * n] = x[2 * n] - 2.0 * (0..n).map(|a| x[a] * x[n + a]).sum::<f64>();
    h
}

/// Heisenberg coordinates to twisted coordinates.
pub fn from_heisenberg(h: &[f64]) -> Vec<f64> {
    let n = (h.len() - 1) / 2;
    let mut x = h.to_vec();
    x[2 * n] = h[2 * n] + 2.0 * (0..n).map(|a| h[a] * h[n + a]).sum::<f64>();
    x
}
