//! Folland–Stein norms `S^p_k`, `Γ_s`, the Euclidean Hölder norm `Λ_s` and
//! probes of the subelliptic inequalities.
//!
//! Horizontal fields are `X_α = Re W_α`, `X_{α+n} = Im W_α` for the frame
//! made unitary pointwise (Gram–Schmidt in the Levi form, carried in jets so
//! that iterated derivatives see the normalization). Norms are sampled on
//! the grid nodes of a [`Domain`].

use crate::error::{CrError, Result};
use crate::field::ScalarField;
use crate::geometry::{bilinear, CRManifold, PointGeometry};
use crate::grid::AxisKind;
use crate::jet::{Jet, JetSpace, C64};
use crate::models::heisenberg::{heisenberg_norm, HeisenbergPoint};
use crate::models::normal::{normal_coordinates, NormalCoordinates};
use crate::webster::{sublaplacian, webster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Default cap on the length of horizontal multi-indices.
pub const DEFAULT_MAX_ORDER: usize = 3;

/// A word `A = (a_1, …, a_ℓ)` in the horizontal directions, stored
/// zero-based (`0..2n`); `X^A = X_{a_1} ⋯ X_{a_ℓ}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(n: usize, a: Vec<usize>) -> Result<MultiIndex> {
        if let Some(bad) = a.iter().find(|&&j| j >= 2 * n) {
            return Err(CrError::Config(format!("horizontal direction {bad} out of range 0..{}", 2 * n)));
        }
        Ok(MultiIndex(a))
    }

    pub fn empty() -> MultiIndex {
        MultiIndex(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    /// All words of length at most `k` over `2n` letters, shortest first.
    pub fn all(n: usize, k: usize) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::empty()];
        let mut level = vec![MultiIndex::empty()];
        for _ in 0..k {
            let next: Vec<MultiIndex> = level
                .iter()
                .flat_map(|a| {
                    (0..2 * n).map(move |j| {
                        let mut w = vec![j];
                        w.extend_from_slice(&a.0);
                        MultiIndex(w)
                    })
                })
                .collect();
            out.extend(next.iter().cloned());
            level = next;
        }
        out
    }
}

/// Real horizontal fields `X_1 … X_{2n}` as coordinate-component jets of
/// order `order − 1`.
fn horizontal_fields(m: &CRManifold, x: &[f64], order: usize) -> Result<Vec<Vec<Jet>>> {
    let pg = PointGeometry::new(m, x, order.max(1))?;
    let n = m.n;
    let half_i = C64::new(0.0, -0.5);
    let pair = |u: &[Jet], v: &[Jet]| {
        let vb: Vec<Jet> = v.iter().map(|c| c.conj()).collect();
        bilinear(u, &pg.dtheta, &vb) * half_i
    };
    let mut unitary: Vec<Vec<Jet>> = Vec::with_capacity(n);
    for a in 0..n {
        let mut v = pg.frame[a].clone();
        for e in &unitary {
            let c = pair(&pg.frame[a], e);
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi -= c * *ei;
            }
        }
        let g = pair(&v, &v).re();
        if !(g.re_value() > 0.0) {
            return Err(CrError::NotPositiveDefinite);
        }
        let s = g.powf(-0.5);
        unitary.push(v.iter().map(|c| *c * s).collect());
    }
    let mut out: Vec<Vec<Jet>> = unitary.iter().map(|w| w.iter().map(|c| c.re()).collect()).collect();
    out.extend(unitary.iter().map(|w| w.iter().map(|c| c.im()).collect::<Vec<_>>()));
    Ok(out)
}

fn apply_field(xj: &[Jet], g: &Jet) -> Jet {
    let low = g.order().saturating_sub(1);
    let mut acc = Jet::zero(JetSpace::get(g.dim(), low));
    for (i, c) in xj.iter().enumerate() {
        let dg = g.derivative(i);
        if !c.is_zero() && !dg.is_zero() {
            acc += c.truncate(low) * dg;
        }
    }
    acc
}

/// `X^A f(x)` for every word in `words` (each of length ≤ `k`).
fn horizontal_values(m: &CRManifold, f: &ScalarField, x: &[f64], k: usize, max_order: usize) -> Result<Vec<(MultiIndex, f64)>> {
    if k > max_order {
        return Err(CrError::OrderTooHigh { requested: k, max: max_order });
    }
    m.check_point(x)?;
    let fj = f.jet(x, k)?.re();
    if k == 0 {
        return Ok(vec![(MultiIndex::empty(), fj.re_value())]);
    }
    let xs = horizontal_fields(m, x, k)?;
    let mut out = vec![(MultiIndex::empty(), fj.re_value())];
    let mut level = vec![(MultiIndex::empty(), fj)];
    for _ in 0..k {
        let mut next = Vec::with_capacity(level.len() * xs.len());
        for (a, g) in &level {
            for (j, xj) in xs.iter().enumerate() {
                let mut w = vec![j];
                w.extend_from_slice(&a.0);
                next.push((MultiIndex(w), apply_field(xj, g)));
            }
        }
        out.extend(next.iter().map(|(a, g)| (a.clone(), g.re_value())));
        level = next;
    }
    Ok(out)
}

/// `X^A f(x)` with the default order cap.
pub fn horizontal_derivative(m: &CRManifold, f: &ScalarField, a: &MultiIndex, x: &[f64]) -> Result<f64> {
    horizontal_derivative_capped(m, f, a, x, DEFAULT_MAX_ORDER)
}

pub fn horizontal_derivative_capped(m: &CRManifold, f: &ScalarField, a: &MultiIndex, x: &[f64], max_order: usize) -> Result<f64> {
    let k = a.len();
    if k > max_order {
        return Err(CrError::OrderTooHigh { requested: k, max: max_order });
    }
    if a.0.iter().any(|&j| j >= 2 * m.n) {
        return Err(CrError::Config(format!("multi-index {:?} out of range for n = {}", a.0, m.n)));
    }
    m.check_point(x)?;
    let fj = f.jet(x, k)?.re();
    if k == 0 {
        return Ok(fj.re_value());
    }
    let xs = horizontal_fields(m, x, k)?;
    let mut g = fj;
    for &j in a.0.iter().rev() {
        g = apply_field(&xs[j], &g);
    }
    Ok(g.re_value())
}

/// A sampled domain `U`: grid nodes of a manifold together with the model
/// whose normal coordinates define `ρ(x, y) = |Θ(x, y)|`.
#[derive(Clone)]
pub struct Domain {
    pub label: String,
    indices: Vec<usize>,
    nodes: Vec<Vec<f64>>,
    reference: Option<Arc<CRManifold>>,
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain").field("label", &self.label).field("nodes", &self.indices.len()).finish()
    }
}

impl Domain {
    /// Grid nodes at least `margin` index cells from every non-periodic
    /// face.
    pub fn interior(m: &CRManifold, label: &str, margin: usize) -> Result<Domain> {
        let g = m.grid()?;
        let shape = g.shape();
        let indices: Vec<usize> = (0..g.len())
            .filter(|&i| {
                g.multi(i).iter().enumerate().all(|(a, &k)| g.axes()[a].kind == AxisKind::Periodic || (k >= margin && k + margin < shape[a]))
            })
            .collect();
        Domain::from_indices(m, label, indices)
    }

    /// Grid nodes with `ρ(centre, x) ≤ radius`.
    pub fn ball(m: &CRManifold, label: &str, centre: &[f64], radius: f64) -> Result<Domain> {
        let g = m.grid()?;
        let nc = normal_coordinates(m, centre)?;
        let mut indices = Vec::new();
        for i in 0..g.len() {
            if rho_from(&nc, &g.coords(i))? <= radius {
                indices.push(i);
            }
        }
        Domain::from_indices(m, label, indices)
    }

    fn from_indices(m: &CRManifold, label: &str, indices: Vec<usize>) -> Result<Domain> {
        if indices.is_empty() {
            return Err(CrError::Config(format!("domain {label} has no nodes")));
        }
        let g = m.grid()?;
        let nodes = indices.iter().map(|&i| g.coords(i)).collect();
        Ok(Domain { label: label.to_string(), indices, nodes, reference: None })
    }

    /// Measures `ρ` with the normal coordinates of `model` instead of those
    /// of the manifold being normed (e.g. the base of a deformation).
    pub fn with_reference(mut self, model: &CRManifold) -> Domain {
        self.reference = Some(Arc::new(model.clone()));
        self
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn weights(&self, m: &CRManifold) -> Result<Vec<f64>> {
        let w = m.node_weights()?;
        self.indices.iter().map(|&i| w.get(i).copied().ok_or_else(|| CrError::Config(format!("domain {} does not match the grid", self.label)))).collect()
    }
}

fn rho_from(nc: &NormalCoordinates, y: &[f64]) -> Result<f64> {
    Ok(heisenberg_norm(&HeisenbergPoint::from_coords(&nc.forward(y)?)))
}

/// Norm parameters shared by every sampled norm.
#[derive(Clone, Debug, Serialize)]
pub struct NormOptions {
    pub max_order: usize,
    /// Cap on the sampled pair set for the Hölder-type norms.
    pub pair_cap: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { max_order: DEFAULT_MAX_ORDER, pair_cap: 100_000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NormKind {
    #[serde(rename = "S^p_k")]
    Sobolev,
    #[serde(rename = "Gamma_s")]
    Gamma,
    #[serde(rename = "Lambda_s")]
    Lambda,
    #[serde(rename = "L^p")]
    Lp,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Sobolev => "S^p_k",
            NormKind::Gamma => "Gamma_s",
            NormKind::Lambda => "Lambda_s",
            NormKind::Lp => "L^p",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub kind: NormKind,
    pub value: f64,
    pub p: Option<f64>,
    pub k: Option<usize>,
    pub s: Option<f64>,
    pub domain: String,
    /// Pairs sampled (Hölder-type norms).
    pub pairs: Option<usize>,
    /// `(value − value on the first half of the pairs) / value`; small when
    /// the sampled supremum has saturated.
    pub saturation: Option<f64>,
}

impl NormReport {
    pub const CSV_HEADER: [&'static str; 8] = ["kind", "p", "k", "s", "domain", "value", "pairs", "saturation"];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.kind.as_str().to_string(),
            opt(self.p.map(|v| v.to_string())),
            opt(self.k.map(|v| v.to_string())),
            opt(self.s.map(|v| v.to_string())),
            self.domain.clone(),
            self.value.to_string(),
            opt(self.pairs.map(|v| v.to_string())),
            opt(self.saturation.map(|v| v.to_string())),
        ]
    }
}

/// Writes reports as CSV (`.` decimal separator, locale independent).
pub fn write_norm_csv<W: std::io::Write>(reports: &[NormReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CrError::Io(e.to_string());
    w.write_record(NormReport::CSV_HEADER).map_err(io)?;
    for r in reports {
        w.write_record(r.csv_record()).map_err(io)?;
    }
    w.flush().map_err(|e| CrError::Io(e.to_string()))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(CrError::Config(format!("exponent p = {p} must lie in (1, ∞)")));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) || s.fract() == 0.0 {
        return Err(CrError::Config(format!("Hölder index s = {s} must be positive and non-integral")));
    }
    Ok(())
}

/// Weighted `L^p` norm, computed as `M (Σ w (|g|/M)^p)^{1/p}` with
/// `M = max |g|` so that it is exactly homogeneous.
fn lp(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let big = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if big == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().zip(weights).map(|(v, w)| w * (v.abs() / big).powf(p)).sum();
    big * s.powf(1.0 / p)
}

/// Values of `X^A f` over the domain for every word of length ≤ `k`,
/// indexed `[word][node]`.
fn word_table(m: &CRManifold, f: &ScalarField, u: &Domain, k: usize, max_order: usize) -> Result<(Vec<MultiIndex>, Vec<Vec<f64>>)> {
    let per_node = u.nodes.par_iter().map(|x| horizontal_values(m, f, x, k, max_order)).collect::<Result<Vec<_>>>()?;
    let words: Vec<MultiIndex> = per_node[0].iter().map(|(a, _)| a.clone()).collect();
    let table = (0..words.len()).map(|w| per_node.iter().map(|row| row[w].1).collect()).collect();
    Ok((words, table))
}

pub fn lp_norm(m: &CRManifold, f: &ScalarField, p: f64, u: &Domain) -> Result<NormReport> {
    check_p(p)?;
    let vals = u.nodes.par_iter().map(|x| f.real(x)).collect::<Result<Vec<_>>>()?;
    Ok(NormReport { kind: NormKind::Lp, value: lp(&vals, &u.weights(m)?, p), p: Some(p), k: None, s: None, domain: u.label.clone(), pairs: None, saturation: None })
}

/// `sup_{ℓ(A) ≤ k} ‖X^A f‖_{L^p(U)}` over all words.
pub fn sobolev_norm(m: &CRManifold, f: &ScalarField, p: f64, k: usize, u: &Domain, opts: &NormOptions) -> Result<NormReport> {
    check_p(p)?;
    let (_, table) = word_table(m, f, u, k, opts.max_order)?;
    Ok(sobolev_from_table(&table, &u.weights(m)?, p, k, &u.label))
}

fn sobolev_from_table(table: &[Vec<f64>], w: &[f64], p: f64, k: usize, label: &str) -> NormReport {
    let value = table.iter().map(|v| lp(v, w, p)).fold(0.0, f64::max);
    NormReport { kind: NormKind::Sobolev, value, p: Some(p), k: Some(k), s: None, domain: label.to_string(), pairs: None, saturation: None }
}

/// Pair set: every pair when there are at most `cap`, otherwise `cap`
/// seeded random pairs. Prefixes of the list are the smaller samples.
fn sample_pairs(len: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = len * len.saturating_sub(1) / 2;
    if total <= cap {
        return (0..len).flat_map(|i| (i + 1..len).map(move |j| (i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cap)
        .map(|_| loop {
            let (i, j) = (rng.gen_range(0..len), rng.gen_range(0..len));
            if i != j {
                break (i.min(j), i.max(j));
            }
        })
        .collect()
}

/// Distances for a pair list.
pub trait PairDistance: Sync {
    fn distances(&self, u: &Domain, pairs: &[(usize, usize)]) -> Result<Vec<f64>>;
}

/// `ρ(x, y) = |Θ_x(y)|` from the model normal coordinates.
pub struct Quasidistance<'a>(pub &'a CRManifold);

impl PairDistance for Quasidistance<'_> {
    fn distances(&self, u: &Domain, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let model: &CRManifold = u.reference.as_deref().unwrap_or(self.0);
        let mut needed = vec![false; u.len()];
        for &(i, _) in pairs {
            needed[i] = true;
        }
        let centres = (0..u.len())
            .into_par_iter()
            .map(|i| if needed[i] { normal_coordinates(model, &u.nodes[i]).map(Some) } else { Ok(None) })
            .collect::<Result<Vec<_>>>()?;
        pairs.par_iter().map(|&(i, j)| rho_from(centres[i].as_ref().expect("centre computed"), &u.nodes[j])).collect()
    }
}

/// Chart-coordinate Euclidean distance.
pub struct Euclidean;

impl PairDistance for Euclidean {
    fn distances(&self, u: &Domain, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|&(i, j)| u.nodes[i].iter().zip(&u.nodes[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).collect())
    }
}

/// `sup |g| + sup_{pairs, g ∈ table} |g(x) − g(y)| / d^e`, with the value
/// restricted to the first half of the pairs for the saturation check.
fn holder(values: &[f64], table: &[Vec<f64>], pairs: &[(usize, usize)], dist: &[f64], e: f64) -> (f64, f64) {
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let half = pairs.len() / 2;
    let quotient = |range: std::ops::Range<usize>| {
        range
            .into_par_iter()
            .map(|q| {
                let (i, j) = pairs[q];
                let d = dist[q].powf(e);
                if !(d > 0.0) {
                    return 0.0;
                }
                table.iter().map(|g| (g[i] - g[j]).abs() / d).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    };
    let first = quotient(0..half);
    let rest = quotient(half..pairs.len());
    (sup + first.max(rest), sup + first)
}

fn holder_report(kind: NormKind, s: f64, label: &str, full: f64, half: f64, pairs: usize) -> NormReport {
    let saturation = if full > 0.0 { (full - half) / full } else { 0.0 };
    NormReport { kind, value: full, p: None, k: Some(s.floor() as usize), s: Some(s), domain: label.to_string(), pairs: Some(pairs), saturation: Some(saturation) }
}

/// `sup |f| + sup_{ℓ(A) ≤ k, (x,y) ∈ P} |X^A f(x) − X^A f(y)| / ρ(x,y)^{s−k}`
/// with `k = ⌊s⌋`.
pub fn gamma_norm(m: &CRManifold, f: &ScalarField, s: f64, u: &Domain, opts: &NormOptions) -> Result<NormReport> {
    check_s(s)?;
    let k = s.floor() as usize;
    let pairs = sample_pairs(u.len(), opts.pair_cap, opts.seed);
    let dist = Quasidistance(m).distances(u, &pairs)?;
    let (_, table) = word_table(m, f, u, k, opts.max_order)?;
    let (full, half) = holder(&table[0], &table, &pairs, &dist, s - k as f64);
    Ok(holder_report(NormKind::Gamma, s, &u.label, full, half, pairs.len()))
}

/// Euclidean Hölder norm: `sup |f| + sup_{|β| ≤ k} |∂^β f(x) − ∂^β f(y)| / |x − y|^{s−k}`.
pub fn lambda_norm(m: &CRManifold, f: &ScalarField, s: f64, u: &Domain, opts: &NormOptions) -> Result<NormReport> {
    check_s(s)?;
    let k = s.floor() as usize;
    if k > opts.max_order {
        return Err(CrError::OrderTooHigh { requested: k, max: opts.max_order });
    }
    let pairs = sample_pairs(u.len(), opts.pair_cap, opts.seed);
    let dist = Euclidean.distances(u, &pairs)?;
    let space = JetSpace::get(m.dim(), k);
    let per_node = u
        .nodes
        .par_iter()
        .map(|x| {
            let j = f.jet(x, k)?;
            Ok(space.exponents().iter().map(|e| j.partial(e).re).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<Vec<f64>> = (0..space.len()).map(|c| per_node.iter().map(|r| r[c]).collect()).collect();
    let (full, half) = holder(&table[0], &table, &pairs, &dist, s - k as f64);
    Ok(holder_report(NormKind::Lambda, s, &u.label, full, half, pairs.len()))
}

/// Largest ratio `LHS / RHS` over the battery for each inequality.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeRatios {
    /// `‖f‖_{Γ_s} / ‖f‖_{S^{r_a}_k}` with `1/r_a = (k − s)/(2n + 2)`.
    pub a: f64,
    /// `‖f‖_{Λ_{s/2}} / ‖f‖_{Γ_s}`.
    pub b: f64,
    /// `‖f‖_{S^r_2} / (‖Δ_θ f‖_{L^r} + ‖f‖_{L^r})`.
    pub c: f64,
    /// `‖f‖_{Γ_{s+2}} / (‖Δ_θ f‖_{Γ_s} + ‖f‖_{Γ_s})`.
    pub d: f64,
    pub r_a: f64,
    /// Battery members used (identically zero fields are skipped).
    pub fields: usize,
}

impl ProbeRatios {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Largest relative difference `|x − y| / max(x, y)` over the four
    /// ratios.
    pub fn max_relative_change(&self, other: &ProbeRatios) -> f64 {
        self.as_array().iter().zip(other.as_array()).map(|(x, y)| (x - y).abs() / x.max(y)).fold(0.0, f64::max)
    }
}

/// Probes the four subelliptic inequalities on a battery of fields.
/// `Δ_θ f` is evaluated pointwise at the nodes; when `s > 1` its horizontal
/// derivatives come from grid stencils.
pub fn subelliptic_probe(m: &CRManifold, battery: &[ScalarField], u: &Domain, r: f64, s: f64, k: usize, opts: &NormOptions) -> Result<ProbeRatios> {
    check_p(r)?;
    check_s(s)?;
    let n = m.n as f64;
    let r_a = (2.0 * n + 2.0) / (k as f64 - s);
    if !(r_a > 1.0 && r_a.is_finite()) {
        return Err(CrError::Config(format!("k = {k}, s = {s} give no admissible exponent for the embedding inequality")));
    }
    let ks = s.floor() as usize;
    let top = k.max(ks + 2).max(2);
    if top > opts.max_order {
        return Err(CrError::OrderTooHigh { requested: top, max: opts.max_order });
    }
    let pairs = sample_pairs(u.len(), opts.pair_cap, opts.seed);
    let rho = Quasidistance(m).distances(u, &pairs)?;
    let euc = Euclidean.distances(u, &pairs)?;
    let weights = u.weights(m)?;
    let websters = u.nodes.par_iter().map(|x| webster(m, x)).collect::<Result<Vec<_>>>()?;
    let grid = m.grid()?.clone();
    let lambda_k = (s / 2.0).floor() as usize;
    let lambda_space = JetSpace::get(m.dim(), lambda_k);

    let mut best = ProbeRatios { a: 0.0, b: 0.0, c: 0.0, d: 0.0, r_a, fields: 0 };
    for f in battery {
        let (words, table) = word_table(m, f, u, top, opts.max_order)?;
        if table[0].iter().all(|v| *v == 0.0) {
            continue;
        }
        best.fields += 1;
        let upto = |l: usize| -> Vec<Vec<f64>> { words.iter().zip(&table).filter(|(a, _)| a.len() <= l).map(|(_, v)| v.clone()).collect() };
        let gamma = |t: f64| {
            let kk = t.floor() as usize;
            holder(&table[0], &upto(kk), &pairs, &rho, t - kk as f64).0
        };
        let lap = u.nodes.par_iter().zip(&websters).map(|(x, w)| Ok(sublaplacian(m, w, f, x)?.re)).collect::<Result<Vec<f64>>>()?;
        let lap_gamma = if ks == 0 {
            holder(&lap, std::slice::from_ref(&lap), &pairs, &rho, s).0
        } else {
            let all = grid.len();
            let mut full = vec![0.0; all];
            let nodes: Vec<Vec<f64>> = (0..all).map(|i| grid.coords(i)).collect();
            let ws = nodes.par_iter().map(|x| webster(m, x)).collect::<Result<Vec<_>>>()?;
            for (i, (x, w)) in nodes.iter().zip(&ws).enumerate() {
                full[i] = sublaplacian(m, w, f, x)?.re;
            }
            let lf = ScalarField::from_grid(grid.clone(), &full, ks)?;
            let (_, lt) = word_table(m, &lf, u, ks, opts.max_order)?;
            holder(&lt[0], &lt, &pairs, &rho, s - ks as f64).0
        };
        let lam_table = u
            .nodes
            .par_iter()
            .map(|x| {
                let j = f.jet(x, lambda_k)?;
                Ok(lambda_space.exponents().iter().map(|e| j.partial(e).re).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let lam_cols: Vec<Vec<f64>> = (0..lambda_space.len()).map(|c| lam_table.iter().map(|row| row[c]).collect()).collect();
        let lambda = holder(&lam_cols[0], &lam_cols, &pairs, &euc, s / 2.0 - lambda_k as f64).0;

        let gs = gamma(s);
        let a = gs / sobolev_from_table(&upto(k), &weights, r_a, k, "").value;
        let b = lambda / gs;
        let c = sobolev_from_table(&upto(2), &weights, r, 2, "").value / (lp(&lap, &weights, r) + lp(&table[0], &weights, r));
        let d = gamma(s + 2.0) / (lap_gamma + gs);
        best.a = best.a.max(a);
        best.b = best.b.max(b);
        best.c = best.c.max(c);
        best.d = best.d.max(d);
    }
    Ok(best)
}

/// Smooth fields supported at least `margin` grid cells inside the chart
/// box: products of `exp(1 − 1/(1 − τ²))` bumps over every axis, modulated
/// by a random low-frequency cosine.
pub fn probe_battery(m: &CRManifold, count: usize, margin: usize, seed: u64) -> Result<Vec<ScalarField>> {
    let g = m.grid()?;
    let d = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut centre = Vec::with_capacity(d);
        let mut half = Vec::with_capacity(d);
        for (a, axis) in g.axes().iter().enumerate() {
            let (lo, hi) = (m.chart.lo[a], m.chart.hi[a]);
            let inset = margin as f64 * axis.spacing();
            let (lo, hi) = (lo + inset, hi - inset);
            if !(hi > lo) {
                return Err(CrError::Config(format!("margin of {margin} cells leaves no room on axis {a}")));
            }
            let w = (hi - lo) / 2.0 * rng.gen_range(0.6..1.0);
            let c = rng.gen_range(lo + w..=hi - w);
            centre.push(c);
            half.push(w);
        }
        let freq: Vec<f64> = (0..d).map(|a| rng.gen_range(-1i32..=1) as f64 * std::f64::consts::PI / half[a]).collect();
        let amp = rng.gen_range(0.1..0.4);
        out.push(ScalarField::analytic(move |x| {
            let space = x[0].space();
            let mut v = Jet::constant(space, 1.0);
            let mut phase = Jet::zero(space);
            for a in 0..x.len() {
                let tau = (x[a] - centre[a]) / half[a];
                let t0 = tau.re_value();
                if t0.abs() >= 1.0 {
                    return Jet::zero(space);
                }
                v = v * (1.0 - (1.0 - tau * tau).recip()).exp();
                phase += (x[a] - centre[a]) * freq[a];
            }
            v * (phase.cos() * amp + 1.0)
        }));
    }
    Ok(out)
}
