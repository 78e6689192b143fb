//! Tensor-product quadrature grids and the discrete derivative operators
//! living on them.
//!
//! Axes are periodic (uniform, trapezoid weights), closed intervals
//! (uniform, trapezoid weights) or Gauss–Legendre. A *twist* glues the
//! periodic `y` axis with a shift of the `t` index proportional to the `x`
//! index, which is how the Heisenberg lattice acts in twisted coordinates.

use crate::error::{CrError, Result};
use crate::stencil::{central_weights, differentiation_matrix, fornberg, gauss_legendre};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    Periodic,
    Interval,
    Gauss,
}

#[derive(Clone, Debug)]
pub struct Axis {
    pub kind: AxisKind,
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Periodic axis differentiated spectrally (odd length, untwisted).
    pub spectral: bool,
}

impl Axis {
    pub fn periodic(lo: f64, hi: f64, n: usize) -> Axis {
        let h = (hi - lo) / n as f64;
        Axis {
            kind: AxisKind::Periodic,
            lo,
            hi,
            nodes: (0..n).map(|k| lo + k as f64 * h).collect(),
            weights: vec![h; n],
            spectral: false,
        }
    }

    /// Periodic axis with Fourier differentiation. The length must be odd
    /// so that no Nyquist mode is annihilated by the first derivative.
    pub fn fourier(lo: f64, hi: f64, n: usize) -> Axis {
        Axis { spectral: true, ..Axis::periodic(lo, hi, n) }
    }

    pub fn interval(lo: f64, hi: f64, n: usize) -> Axis {
        let h = (hi - lo) / (n - 1) as f64;
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Axis { kind: AxisKind::Interval, lo, hi, nodes: (0..n).map(|k| lo + k as f64 * h).collect(), weights, spectral: false }
    }

    pub fn gauss(lo: f64, hi: f64, n: usize) -> Axis {
        let (nodes, weights) = gauss_legendre(n, lo, hi);
        Axis { kind: AxisKind::Gauss, lo, hi, nodes, weights, spectral: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    /// Uniform spacing (meaningless for Gauss axes).
    pub fn spacing(&self) -> f64 {
        match self.kind {
            AxisKind::Periodic => (self.hi - self.lo) / self.len() as f64,
            _ => (self.hi - self.lo) / (self.len() - 1) as f64,
        }
    }
}

/// Lattice gluing: stepping the `y` axis by one period shifts the `t`
/// index by `factor · i_x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub x_axis: usize,
    pub y_axis: usize,
    pub t_axis: usize,
    /// `t`-period multiple per unit `x`: the coordinate shift is
    /// `factor_coord · x` with `x` in chart units.
    pub factor_coord: f64,
}

/// Rows of a sparse matrix in compressed form.
#[derive(Clone, Debug, Default)]
pub struct SparseRows {
    starts: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.starts.len() - 1)
            .into_par_iter()
            .with_min_len(1024)
            .map(|i| {
                let mut s = 0.0;
                for k in self.starts[i]..self.starts[i + 1] {
                    s += self.vals[k] * u[self.cols[k] as usize];
                }
                s
            })
            .collect()
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.starts.len() - 1 {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for k in self.starts[i]..self.starts[i + 1] {
                out[self.cols[k] as usize] += self.vals[k] * vi;
            }
        }
        out
    }

    /// Row `i` as (column, weight) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.starts[i]..self.starts[i + 1]).map(move |k| (self.cols[k] as usize, self.vals[k]))
    }
}

#[derive(Debug)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
    twists: Vec<(Twist, i64)>,
    accuracy: usize,
    derivative: Vec<SparseRows>,
}

impl Grid {
    /// Builds the grid and its first-derivative operators (central stencils
    /// of the given accuracy on uniform axes, spectral on Gauss axes).
    pub fn new(axes: Vec<Axis>, twists: Vec<Twist>, accuracy: usize) -> Result<Grid> {
        let d = axes.len();
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].len();
        }
        let len = axes.iter().map(|a| a.len()).product();
        for a in &axes {
            if a.spectral && a.len() % 2 == 0 {
                return Err(CrError::Config(format!("spectral axis needs an odd number of nodes, got {}", a.len())));
            }
        }
        let mut tw = Vec::new();
        for t in twists {
            let (ax, ay, at) = (&axes[t.x_axis], &axes[t.y_axis], &axes[t.t_axis]);
            if ax.kind != AxisKind::Periodic || ay.kind != AxisKind::Periodic || at.kind != AxisKind::Periodic {
                return Err(CrError::IncompatibleLattice("twisted axes must be periodic".into()));
            }
            if ax.spectral || ay.spectral || at.spectral {
                return Err(CrError::IncompatibleLattice("twisted axes use stencils, not spectral differentiation".into()));
            }
            // index shift per x index: factor · h_x / h_t
            let shift = t.factor_coord * ax.spacing() / at.spacing();
            if (shift - shift.round()).abs() > 1e-9 {
                return Err(CrError::IncompatibleLattice(format!(
                    "twist shift {shift} is not an integer number of t cells (need N_x | 4 N_t)"
                )));
            }
            tw.push((t, shift.round() as i64));
        }
        let mut g = Grid { axes, strides, len, twists: tw, accuracy, derivative: Vec::new() };
        g.derivative = (0..d).map(|a| g.build_derivative(a)).collect();
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }
    pub fn accuracy(&self) -> usize {
        self.accuracy
    }
    pub fn twists(&self) -> impl Iterator<Item = &Twist> {
        self.twists.iter().map(|(t, _)| t)
    }

    pub fn multi(&self, mut i: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for k in 0..self.dim() {
            m[k] = i / self.strides[k];
            i %= self.strides[k];
        }
        m
    }

    pub fn index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        self.multi(i).iter().zip(&self.axes).map(|(&k, a)| a.nodes[k]).collect()
    }

    /// Product of the per-axis quadrature weights (coordinate measure).
    pub fn base_weight(&self, i: usize) -> f64 {
        self.multi(i).iter().zip(&self.axes).map(|(&k, a)| a.weights[k]).product()
    }

    /// Maps a lifted integer multi-index to its representative node.
    pub fn resolve(&self, lifted: &[i64]) -> Option<usize> {
        let mut m: Vec<i64> = lifted.to_vec();
        for (t, shift) in &self.twists {
            let ny = self.axes[t.y_axis].len() as i64;
            let k = m[t.y_axis].div_euclid(ny);
            if k != 0 {
                m[t.y_axis] -= k * ny;
                m[t.t_axis] -= k * shift * m[t.x_axis];
            }
        }
        let mut idx = 0usize;
        for (a, (v, axis)) in m.iter().zip(&self.axes).enumerate() {
            let n = axis.len() as i64;
            let r = match axis.kind {
                AxisKind::Periodic => v.rem_euclid(n),
                _ => {
                    if *v < 0 || *v >= n {
                        return None;
                    }
                    *v
                }
            };
            idx += r as usize * self.strides[a];
        }
        Some(idx)
    }

    /// Node whose coordinates match `x` to within a small tolerance.
    pub fn node_of(&self, x: &[f64]) -> Option<usize> {
        let mut m = Vec::with_capacity(self.dim());
        for (v, a) in x.iter().zip(&self.axes) {
            let k = match a.kind {
                AxisKind::Gauss => {
                    let (k, dist) = a
                        .nodes
                        .iter()
                        .enumerate()
                        .map(|(k, n)| (k, (n - v).abs()))
                        .min_by(|p, q| p.1.total_cmp(&q.1))?;
                    if dist > 1e-9 {
                        return None;
                    }
                    k
                }
                _ => {
                    let h = a.spacing();
                    let s = (v - a.lo) / h;
                    if (s - s.round()).abs() > 1e-6 {
                        return None;
                    }
                    let k = s.round() as i64;
                    if a.kind == AxisKind::Periodic {
                        k.rem_euclid(a.len() as i64) as usize
                    } else if k < 0 || k >= a.len() as i64 {
                        return None;
                    } else {
                        k as usize
                    }
                }
            };
            m.push(k);
        }
        Some(self.index(&m))
    }

    fn axis_rows(&self, a: usize) -> Vec<Vec<(i64, f64)>> {
        let axis = &self.axes[a];
        let n = axis.len();
        match axis.kind {
            AxisKind::Periodic if axis.spectral => {
                // odd-length Fourier differentiation: (−1)^m / (2 sin(π m / n)) per unit angle
                let scale = 2.0 * std::f64::consts::PI / (axis.hi - axis.lo);
                let half = (n / 2) as i64;
                let row: Vec<(i64, f64)> = (-half..=half)
                    .filter(|&m| m != 0)
                    .map(|m| {
                        let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                        (m, -scale * sign / (2.0 * (std::f64::consts::PI * m as f64 / n as f64).sin()))
                    })
                    .collect();
                vec![row; n]
            }
            AxisKind::Periodic => {
                let w = central_weights(1, self.accuracy);
                let r = (w.len() / 2) as i64;
                let h = axis.spacing();
                let row: Vec<(i64, f64)> = w
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0.0)
                    .map(|(k, &c)| (k as i64 - r, c / h))
                    .collect();
                vec![row; n]
            }
            AxisKind::Interval => {
                let width = self.accuracy + 1;
                let h = axis.spacing();
                (0..n)
                    .map(|p| {
                        let start = (p as i64 - (width / 2) as i64).clamp(0, (n - width.min(n)) as i64);
                        let xs: Vec<f64> = (0..width.min(n)).map(|k| (start + k as i64) as f64).collect();
                        let w = fornberg(1, p as f64, &xs);
                        xs.iter().zip(w).map(|(x, c)| (*x as i64 - p as i64, c / h)).collect()
                    })
                    .collect()
            }
            AxisKind::Gauss => {
                let d = differentiation_matrix(&axis.nodes);
                (0..n).map(|p| (0..n).map(|q| (q as i64 - p as i64, d[p][q])).collect()).collect()
            }
        }
    }

    fn build_derivative(&self, a: usize) -> SparseRows {
        let rows = self.axis_rows(a);
        let mut sr = SparseRows { starts: vec![0], cols: Vec::new(), vals: Vec::new() };
        for i in 0..self.len {
            let m = self.multi(i);
            let lifted: Vec<i64> = m.iter().map(|&v| v as i64).collect();
            for &(off, w) in &rows[m[a]] {
                let mut l = lifted.clone();
                l[a] += off;
                let j = self.resolve(&l).expect("derivative stencil inside the grid");
                sr.cols.push(j as u32);
                sr.vals.push(w);
            }
            sr.starts.push(sr.cols.len());
        }
        sr
    }

    /// First derivative along axis `a`.
    pub fn derivative(&self, a: usize) -> &SparseRows {
        &self.derivative[a]
    }

    /// Mixed partial `∂^e u` at every node. Gauss axes are differentiated by
    /// repeated spectral differentiation, uniform axes by tensor-product
    /// central stencils on lifted neighbours.
    pub fn partial(&self, u: &[f64], e: &[u8]) -> Result<Vec<f64>> {
        let mut v = u.to_vec();
        for (a, axis) in self.axes.iter().enumerate() {
            if axis.kind == AxisKind::Gauss || axis.spectral {
                for _ in 0..e[a] {
                    v = self.derivative[a].apply(&v);
                }
            }
        }
        let uniform: Vec<(usize, Vec<f64>, i64)> = self
            .axes
            .iter()
            .enumerate()
            .filter(|(a, axis)| axis.kind != AxisKind::Gauss && !axis.spectral && e[*a] > 0)
            .map(|(a, axis)| {
                let w = central_weights(e[a] as usize, self.accuracy);
                let r = (w.len() / 2) as i64;
                let s = axis.spacing().powi(e[a] as i32);
                (a, w.iter().map(|c| c / s).collect(), r)
            })
            .collect();
        if uniform.is_empty() {
            return Ok(v);
        }
        (0..self.len)
            .into_par_iter()
            .map(|i| {
                let base: Vec<i64> = self.multi(i).iter().map(|&k| k as i64).collect();
                let mut off: Vec<i64> = uniform.iter().map(|(_, _, r)| -r).collect();
                let mut total = 0.0;
                loop {
                    let mut w = 1.0;
                    let mut l = base.clone();
                    for (k, (a, ws, r)) in uniform.iter().enumerate() {
                        w *= ws[(off[k] + r) as usize];
                        l[*a] += off[k];
                    }
                    if w != 0.0 {
                        let j = self.resolve(&l).ok_or_else(|| CrError::StencilOutOfDomain(self.coords(i)))?;
                        total += w * v[j];
                    }
                    let mut k = 0;
                    while k < off.len() {
                        if off[k] < uniform[k].2 {
                            off[k] += 1;
                            break;
                        }
                        off[k] = -uniform[k].2;
                        k += 1;
                    }
                    if k == off.len() {
                        break;
                    }
                }
                Ok(total)
            })
            .collect()
    }
}
