//! Evaluator-backed fields: scalars, contact forms and complex frames.
//!
//! Every field hands out Taylor jets at a point. Analytic fields evaluate
//! their closure in jet arithmetic; central-difference fields evaluate the
//! same closure on plain values at stencil points and assemble the jet from
//! difference quotients.

use crate::error::{CrError, Result};
use crate::grid::Grid;
use crate::jet::{Jet, JetSpace, C64};
use crate::stencil::{central_radius, central_weights};
use std::collections::HashMap;
use std::sync::Arc;

pub type JetFn = Arc<dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync>;
pub type Provider = Arc<dyn Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync>;

/// How a field obtains derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Derivatives {
    Analytic,
    CentralDifference { h: f64, accuracy: usize },
    /// Derivatives from discrete operators on a grid (nodes only).
    Grid,
    /// Built from other fields, each with its own strategy.
    Composite,
}

/// Default difference step in chart units.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default accuracy order of the central stencils.
pub const DEFAULT_ACCURACY: usize = 4;

#[derive(Clone)]
pub struct Field {
    outputs: usize,
    provider: Provider,
    strategy: Derivatives,
    source: Option<JetFn>,
    radius: f64,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("outputs", &self.outputs)
            .field("strategy", &self.strategy)
            .finish()
    }
}

fn check_finite(x: &[f64], jets: &[Jet]) -> Result<()> {
    for j in jets {
        if !j.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(CrError::NonFiniteField(x.to_vec()));
        }
    }
    Ok(())
}

/// Jet of `f` at `x` from central differences of plain evaluations.
fn difference_jets(f: &JetFn, outputs: usize, x: &[f64], order: usize, h: f64, acc: usize) -> Result<Vec<Jet>> {
    let d = x.len();
    let space = JetSpace::get(d, order);
    let weights: Vec<Vec<f64>> = (0..=order).map(|m| if m == 0 { vec![1.0] } else { central_weights(m, acc) }).collect();
    let mut cache: HashMap<Vec<i32>, Vec<C64>> = HashMap::new();
    let mut eval = |off: &[i32]| -> Result<Vec<C64>> {
        if let Some(v) = cache.get(off) {
            return Ok(v.clone());
        }
        let p: Vec<f64> = x.iter().zip(off).map(|(xi, &o)| xi + h * o as f64).collect();
        let vals: Vec<C64> = f(&Jet::variables(&p, 0)).iter().map(|j| j.value()).collect();
        if vals.len() != outputs || !vals.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(CrError::NonFiniteField(p));
        }
        cache.insert(off.to_vec(), vals.clone());
        Ok(vals)
    };
    let mut coeffs = vec![vec![C64::new(0.0, 0.0); space.len()]; outputs];
    for (idx, e) in space.exponents().iter().enumerate() {
        // tensor product of 1-D stencils
        let axes: Vec<(usize, i32)> =
            e.iter().enumerate().map(|(v, &m)| (v, central_radius(m as usize, acc) as i32)).collect();
        let mut off: Vec<i32> = axes.iter().map(|&(_, r)| -r).collect();
        let mut acc_vals = vec![C64::new(0.0, 0.0); outputs];
        loop {
            let mut w = 1.0;
            for &(v, r) in &axes {
                w *= weights[e[v] as usize][(off[v] + r) as usize];
            }
            if w != 0.0 {
                let vals = eval(&off)?;
                for (a, v) in acc_vals.iter_mut().zip(vals) {
                    *a += v * w;
                }
            }
            // advance odometer
            let mut k = 0;
            loop {
                if k == d {
                    break;
                }
                let r = axes[k].1;
                if off[k] < r {
                    off[k] += 1;
                    break;
                }
                off[k] = -r;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        let deg = space.degree_of(idx) as i32;
        let scale = h.powi(-deg) / space.factorial_of(idx);
        for (o, a) in acc_vals.iter().enumerate() {
            coeffs[o][idx] = *a * scale;
        }
    }
    Ok(coeffs.iter().map(|c| Jet::from_coeffs(space, c)).collect())
}

impl Field {
    /// A field whose closure is evaluated directly in jet arithmetic.
    pub fn analytic(outputs: usize, f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> Field {
        let f: JetFn = Arc::new(f);
        let g = f.clone();
        Field {
            outputs,
            provider: Arc::new(move |x, order| {
                let out = g(&Jet::variables(x, order));
                check_finite(x, &out)?;
                Ok(out)
            }),
            strategy: Derivatives::Analytic,
            source: Some(f),
            radius: 0.0,
        }
    }

    /// A field whose derivatives come from central differences of its values.
    pub fn central_difference(
        outputs: usize,
        f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
        h: f64,
        accuracy: usize,
    ) -> Field {
        Field::analytic(outputs, f).with_strategy(Derivatives::CentralDifference { h, accuracy })
    }

    /// Wraps an arbitrary jet provider.
    pub fn from_provider(outputs: usize, strategy: Derivatives, radius: f64, provider: Provider) -> Field {
        Field { outputs, provider, strategy, source: None, radius }
    }

    /// Same closure, different derivative strategy. Fields without a closure
    /// (grid or composite) are returned unchanged.
    pub fn with_strategy(&self, strategy: Derivatives) -> Field {
        let Some(src) = self.source.clone() else {
            return self.clone();
        };
        match strategy {
            Derivatives::Analytic => {
                let g = src.clone();
                Field {
                    outputs: self.outputs,
                    provider: Arc::new(move |x, order| {
                        let out = g(&Jet::variables(x, order));
                        check_finite(x, &out)?;
                        Ok(out)
                    }),
                    strategy,
                    source: Some(src),
                    radius: 0.0,
                }
            }
            Derivatives::CentralDifference { h, accuracy } => {
                let g = src.clone();
                let outputs = self.outputs;
                Field {
                    outputs,
                    provider: Arc::new(move |x, order| difference_jets(&g, outputs, x, order, h, accuracy)),
                    strategy,
                    source: Some(src),
                    radius: h * central_radius(3, accuracy) as f64,
                }
            }
            _ => self.clone(),
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }
    pub fn strategy(&self) -> Derivatives {
        self.strategy
    }
    /// Largest coordinate offset touched by a derivative stencil.
    pub fn stencil_radius(&self) -> f64 {
        self.radius
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let out = (self.provider)(x, order)?;
        debug_assert_eq!(out.len(), self.outputs);
        Ok(out)
    }

    pub fn values(&self, x: &[f64]) -> Result<Vec<C64>> {
        Ok(self.jets(x, 0)?.iter().map(|j| j.value()).collect())
    }

    /// Pointwise combination of several fields.
    pub fn combine(
        inputs: Vec<Field>,
        outputs: usize,
        f: impl Fn(&[f64], &[Vec<Jet>]) -> Vec<Jet> + Send + Sync + 'static,
    ) -> Field {
        let radius = inputs.iter().map(|i| i.radius).fold(0.0, f64::max);
        let all_analytic = inputs.iter().all(|i| i.strategy == Derivatives::Analytic);
        Field {
            outputs,
            strategy: if all_analytic { Derivatives::Analytic } else { Derivatives::Composite },
            radius,
            source: None,
            provider: Arc::new(move |x, order| {
                let vals = inputs.iter().map(|i| i.jets(x, order)).collect::<Result<Vec<_>>>()?;
                let out = f(x, &vals);
                check_finite(x, &out)?;
                Ok(out)
            }),
        }
    }
}

/// A real or complex function on a chart.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub field: Field,
}

impl ScalarField {
    pub fn analytic(f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static) -> ScalarField {
        ScalarField { field: Field::analytic(1, move |x| vec![f(x)]) }
    }

    pub fn central_difference(f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static, h: f64) -> ScalarField {
        ScalarField::analytic(f).with_strategy(Derivatives::CentralDifference { h, accuracy: DEFAULT_ACCURACY })
    }

    pub fn constant(c: f64) -> ScalarField {
        ScalarField::analytic(move |x| Jet::constant(x[0].space(), c))
    }

    pub fn with_strategy(&self, s: Derivatives) -> ScalarField {
        ScalarField { field: self.field.with_strategy(s) }
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        Ok(self.field.jets(x, order)?[0])
    }

    pub fn value(&self, x: &[f64]) -> Result<C64> {
        Ok(self.jet(x, 0)?.value())
    }

    pub fn real(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value(x)?.re)
    }

    /// Pointwise `g(self)`.
    pub fn map(&self, g: impl Fn(Jet) -> Jet + Send + Sync + 'static) -> ScalarField {
        ScalarField { field: Field::combine(vec![self.field.clone()], 1, move |_, v| vec![g(v[0][0])]) }
    }

    /// Pointwise `g(self, other)`.
    pub fn zip(&self, other: &ScalarField, g: impl Fn(Jet, Jet) -> Jet + Send + Sync + 'static) -> ScalarField {
        ScalarField {
            field: Field::combine(vec![self.field.clone(), other.field.clone()], 1, move |_, v| {
                vec![g(v[0][0], v[1][0])]
            }),
        }
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(move |j| j * c)
    }

    /// Node values on a grid, with jets (up to `max_order`) assembled from
    /// the grid's discrete partials. Only defined at grid nodes.
    pub fn from_grid(grid: Arc<Grid>, values: &[f64], max_order: usize) -> Result<ScalarField> {
        let d = grid.dim();
        let space = JetSpace::get(d, max_order);
        let partials: Vec<Vec<f64>> = space.exponents().iter().map(|e| grid.partial(values, e)).collect::<Result<_>>()?;
        let facts: Vec<f64> = (0..space.len()).map(|k| space.factorial_of(k)).collect();
        let provider: Provider = Arc::new(move |x, order| {
            if order > max_order {
                return Err(CrError::OrderTooHigh { requested: order, max: max_order });
            }
            let i = grid.node_of(x).ok_or_else(|| CrError::StencilOutOfDomain(x.to_vec()))?;
            let sp = JetSpace::get(d, order);
            let coeffs: Vec<C64> = sp
                .exponents()
                .iter()
                .map(|e| {
                    let k = space.index_of(e).expect("exponent within the stored order");
                    C64::new(partials[k][i] / facts[k], 0.0)
                })
                .collect();
            Ok(vec![Jet::from_coeffs(sp, &coeffs)])
        });
        Ok(ScalarField { field: Field::from_provider(1, Derivatives::Grid, 0.0, provider) })
    }
}

/// A real contact form: `dim` coefficient functions on the coordinate
/// covector basis.
#[derive(Clone, Debug)]
pub struct ContactForm {
    pub name: String,
    pub field: Field,
}

impl ContactForm {
    pub fn analytic(name: &str, dim: usize, f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> ContactForm {
        ContactForm { name: name.to_string(), field: Field::analytic(dim, f) }
    }

    pub fn with_strategy(&self, s: Derivatives) -> ContactForm {
        ContactForm { name: self.name.clone(), field: self.field.with_strategy(s) }
    }

    /// `factor · θ` for a positive scalar factor.
    pub fn scaled(&self, name: &str, factor: &ScalarField) -> ContactForm {
        let d = self.field.outputs();
        ContactForm {
            name: name.to_string(),
            field: Field::combine(vec![self.field.clone(), factor.field.clone()], d, |_, v| {
                v[0].iter().map(|c| *c * v[1][0]).collect()
            }),
        }
    }
}

/// `n` complex vector fields, each with `dim` coordinate coefficients,
/// stored row-major (`W_α` occupies outputs `α·dim .. (α+1)·dim`).
#[derive(Clone, Debug)]
pub struct ComplexFrame {
    pub n: usize,
    pub field: Field,
}

impl ComplexFrame {
    pub fn analytic(n: usize, dim: usize, f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> ComplexFrame {
        ComplexFrame { n, field: Field::analytic(n * dim, f) }
    }

    pub fn with_strategy(&self, s: Derivatives) -> ComplexFrame {
        ComplexFrame { n: self.n, field: self.field.with_strategy(s) }
    }

    /// Frame vectors as jets, `W[α][j]`.
    pub fn jets(&self, x: &[f64], order: usize) -> Result<Vec<Vec<Jet>>> {
        let flat = self.field.jets(x, order)?;
        let d = x.len();
        Ok(flat.chunks(d).map(|c| c.to_vec()).collect())
    }

    /// Pointwise linear recombination `W'_α = Σ_β M_{αβ} W_β` with a
    /// constant complex matrix.
    pub fn remix(&self, m: Vec<Vec<C64>>) -> ComplexFrame {
        let n = self.n;
        let total = self.field.outputs();
        ComplexFrame {
            n,
            field: Field::combine(vec![self.field.clone()], total, move |x, v| {
                let d = x.len();
                let mut out = Vec::with_capacity(total);
                for row in m.iter().take(n) {
                    for j in 0..d {
                        let mut acc = v[0][j] * row[0];
                        for (b, mb) in row.iter().enumerate().skip(1) {
                            acc += v[0][b * d + j] * *mb;
                        }
                        out.push(acc);
                    }
                }
                out
            }),
        }
    }
}


/// A real trigonometric polynomial `Σ a_j cos(k_j·x + φ_j)`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigField {
    pub dim: usize,
    /// Constant term.
    pub offset: f64,
    /// `(angular wave vector, amplitude, phase)`.
    pub terms: Vec<(Vec<f64>, f64, f64)>,
}

impl TrigField {
    /// Random polynomial with integer frequencies `|k_a| ≤ max_k` on the
    /// listed axes (periods given per axis) and the given sup bound.
    pub fn random<R: rand::Rng>(rng: &mut R, dim: usize, axes: &[(usize, f64)], max_k: i32, count: usize, bound: f64) -> TrigField {
        let mut terms = Vec::with_capacity(count);
        let amp = bound / count as f64;
        for _ in 0..count {
            let mut k = vec![0.0; dim];
            loop {
                for &(a, period) in axes {
                    k[a] = rng.gen_range(-max_k..=max_k) as f64 * 2.0 * std::f64::consts::PI / period;
                }
                if k.iter().any(|v| *v != 0.0) {
                    break;
                }
            }
            terms.push((k, amp * rng.gen_range(0.5..1.0), rng.gen_range(0.0..2.0 * std::f64::consts::PI)));
        }
        TrigField { dim, offset: 0.0, terms }
    }

    pub fn eval_jet(&self, x: &[Jet]) -> Jet {
        let mut s = Jet::constant(x[0].space(), self.offset);
        for (k, a, ph) in &self.terms {
            let mut arg = Jet::constant(x[0].space(), *ph);
            for (kj, xj) in k.iter().zip(x) {
                if *kj != 0.0 {
                    arg += *xj * *kj;
                }
            }
            s += arg.cos() * *a;
        }
        s
    }

    pub fn to_scalar(&self) -> ScalarField {
        let me = self.clone();
        ScalarField::analytic(move |x| me.eval_jet(x))
    }

    pub fn scaled(&self, c: f64) -> TrigField {
        TrigField { dim: self.dim, offset: self.offset * c, terms: self.terms.iter().map(|(k, a, p)| (k.clone(), a * c, *p)).collect() }
    }
}
