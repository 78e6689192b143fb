//! Families `(θ_ε, J_ε) → (θ_0, J_0)` built from a base manifold.
//!
//! Two linear recipes: a contact multiplier `θ_ε = (1 + ε φ)θ_0` and frame
//! mixing `W_α^ε = W_α + ε μ W̄_α`, with `φ = cos(2π x_1/L)` and
//! `μ = cos(2π y_1/L)` by default (`L` the period of the first axes).

use crate::error::{CrError, Result};
use crate::field::{ComplexFrame, Field, ScalarField};
use crate::geometry::{j_hat_jets, levi_min_eigenvalue, CRManifold, PointGeometry};
use crate::jet::Jet;
use crate::webster::{tensor_norms, webster};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// `θ_ε = (1 + ε φ)θ_0`
    Contact,
    /// `W^ε = W + ε μ W̄`
    Frame,
}

/// C⁰ and C¹ distances of `(θ_ε, Ĵ_ε)` from the base, maxima over nodes.
#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct Deviation {
    pub c0: f64,
    pub c1: f64,
}

#[derive(Clone, Debug)]
pub struct DeformationFamily {
    pub base: CRManifold,
    pub recipe: Recipe,
    pub schedule: Vec<f64>,
    /// Profile `φ` or `μ`.
    pub profile: ScalarField,
    pub deviations: Vec<Deviation>,
    /// Smallest Levi eigenvalue seen for each member.
    pub levi_min: Vec<f64>,
    /// Whether the C⁰ deviation is nonincreasing along the schedule.
    pub monotone: bool,
    members: Vec<CRManifold>,
}

/// The default profile: `cos(2π x_1/L)` (contact) or `cos(2π y_1/L)` (frame).
pub fn default_profile(base: &CRManifold, recipe: Recipe) -> ScalarField {
    let n = base.n;
    let axis = if recipe == Recipe::Contact { 0 } else { n };
    let period = base.chart.hi[axis] - base.chart.lo[axis];
    let k = 2.0 * PI / period;
    ScalarField::analytic(move |x| (x[axis] * k).cos())
}

fn build_member(base: &CRManifold, recipe: Recipe, profile: &ScalarField, eps: f64) -> CRManifold {
    if eps == 0.0 {
        return base.clone();
    }
    match recipe {
        Recipe::Contact => {
            let factor = profile.map(move |p| p * eps + 1.0);
            base.with_theta(base.theta.scaled(&format!("{}+eps", base.theta.name), &factor))
        }
        Recipe::Frame => {
            let n = base.n;
            let total = base.frame.field.outputs();
            let field = Field::combine(vec![base.frame.field.clone(), profile.field.clone()], total, move |x, v| {
                let d = x.len();
                let mu = v[1][0] * eps;
                let mut out = Vec::with_capacity(total);
                for a in 0..n {
                    for j in 0..d {
                        let w = v[0][a * d + j];
                        out.push(w + mu * w.conj());
                    }
                }
                out
            });
            base.with_frame(ComplexFrame { n, field })
        }
    }
}

fn local_data(m: &CRManifold, x: &[f64]) -> Result<(Vec<Jet>, Vec<Vec<Jet>>)> {
    let pg = PointGeometry::new(m, x, 2)?;
    let jh = j_hat_jets(&pg);
    Ok((pg.theta.iter().map(|t| t.truncate(1)).collect(), jh))
}

fn deviation_at(a: &(Vec<Jet>, Vec<Vec<Jet>>), b: &(Vec<Jet>, Vec<Vec<Jet>>)) -> Deviation {
    let mut dev = Deviation::default();
    let d = a.0.len();
    let mut push = |p: &Jet, q: &Jet| {
        let diff = *p - *q;
        dev.c0 = dev.c0.max(diff.value().norm());
        let mut e = vec![0u8; d];
        let mut c1 = diff.value().norm();
        for k in 0..d {
            e[k] = 1;
            c1 = c1.max(diff.partial(&e).norm());
            e[k] = 0;
        }
        dev.c1 = dev.c1.max(c1);
    };
    for k in 0..d {
        push(&a.0[k], &b.0[k]);
        for l in 0..d {
            push(&a.1[k][l], &b.1[k][l]);
        }
    }
    dev
}

/// Builds all members, checks pseudoconvexity on the base grid and measures
/// deviations. Fails with `PseudoconvexityLost(k)` at the first bad member.
pub fn deformation_family(base: &CRManifold, recipe: Recipe, schedule: &[f64], profile: Option<ScalarField>) -> Result<DeformationFamily> {
    let profile = profile.unwrap_or_else(|| default_profile(base, recipe));
    let nodes = base.nodes()?;
    let base_data = nodes.par_iter().map(|x| local_data(base, x)).collect::<Result<Vec<_>>>()?;
    let mut members = Vec::new();
    let mut deviations = Vec::new();
    let mut levi_min = Vec::new();
    for (k, &eps) in schedule.iter().enumerate() {
        let m = build_member(base, recipe, &profile, eps);
        let mins = nodes.par_iter().map(|x| levi_min_eigenvalue(&m, x)).collect::<Result<Vec<_>>>()?;
        let lmin = mins.iter().copied().fold(f64::INFINITY, f64::min);
        if !(lmin > 0.0) {
            return Err(CrError::PseudoconvexityLost(k));
        }
        let dev = nodes
            .par_iter()
            .zip(&base_data)
            .map(|(x, b)| Ok(deviation_at(&local_data(&m, x)?, b)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(Deviation::default(), |a, b| Deviation { c0: a.c0.max(b.c0), c1: a.c1.max(b.c1) });
        members.push(m);
        deviations.push(dev);
        levi_min.push(lmin);
    }
    let monotone = deviations.windows(2).all(|w| w[1].c0 <= w[0].c0 * (1.0 + 1e-12));
    Ok(DeformationFamily { base: base.clone(), recipe, schedule: schedule.to_vec(), profile, deviations, levi_min, monotone, members })
}

impl DeformationFamily {
    pub fn member(&self, k: usize) -> Result<&CRManifold> {
        self.members.get(k).ok_or_else(|| CrError::Config(format!("no member {k} (schedule has {})", self.members.len())))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Largest change of the Webster scalars `S`, `|R|_θ`, `|T|_θ` of
    /// member `k` relative to the base over `points`.
    pub fn webster_change(&self, k: usize, points: &[Vec<f64>]) -> Result<ScalarChange> {
        let m = self.member(k)?;
        points
            .par_iter()
            .map(|x| {
                let (w0, w1) = (webster(&self.base, x)?, webster(m, x)?);
                let (r0, t0) = tensor_norms(&w0)?;
                let (r1, t1) = tensor_norms(&w1)?;
                Ok(ScalarChange {
                    scalar: (w1.scalar.unwrap_or(0.0) - w0.scalar.unwrap_or(0.0)).abs(),
                    curvature: (r1 - r0).abs(),
                    torsion: (t1 - t0).abs(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().fold(ScalarChange::default(), ScalarChange::max))
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct ScalarChange {
    pub scalar: f64,
    pub curvature: f64,
    pub torsion: f64,
}

impl ScalarChange {
    fn max(self, o: ScalarChange) -> ScalarChange {
        ScalarChange { scalar: self.scalar.max(o.scalar), curvature: self.curvature.max(o.curvature), torsion: self.torsion.max(o.torsion) }
    }
}
