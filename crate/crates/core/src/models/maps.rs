//! Named map families on the models, as jet-evaluated [`SmoothMap`]s.

use super::heisenberg::{group_law_jets, HeisenbergPoint};
use super::sphere::{cayley_inverse_jets, cayley_jets, hopf_embed_jets, SphereChart};
use crate::conformal::SmoothMap;
use crate::error::{CrError, Result};
use crate::jet::{Jet, C64};
use nalgebra::DMatrix;
use rand::Rng;

/// `δ_λ(z, t) = (λz, λ²t)`.
pub fn heisenberg_dilation(n: usize, lambda: f64) -> Result<SmoothMap> {
    if !(lambda > 0.0) {
        return Err(CrError::NonPositiveDilation(lambda));
    }
    Ok(SmoothMap::new("dilation", 2 * n + 1, move |x| {
        let mut y: Vec<Jet> = x.iter().map(|v| *v * lambda).collect();
        y[2 * n] = x[2 * n] * (lambda * lambda);
        y
    }))
}

/// Left translation by `a`.
pub fn heisenberg_translation(a: &HeisenbergPoint) -> SmoothMap {
    let c = a.to_coords();
    SmoothMap::new("translation", c.len(), move |x| group_law_jets(&c, x))
}

/// `(z, t) ↦ (z̄, t)`, which is not CR.
pub fn heisenberg_conjugation(n: usize) -> SmoothMap {
    SmoothMap::new("conjugation", 2 * n + 1, move |x| {
        let mut y = x.to_vec();
        for v in y.iter_mut().skip(n).take(n) {
            *v = *v * -1.0;
        }
        y
    })
}

fn apply_unitary(u: &DMatrix<C64>, v: &[Jet]) -> Vec<Jet> {
    (0..v.len())
        .map(|r| {
            let mut s = Jet::zero(v[0].space());
            for (c, vc) in v.iter().enumerate() {
                s += *vc * u[(r, c)];
            }
            s
        })
        .collect()
}

/// Checks `U*U = I` within `1e-12`.
pub fn check_unitary(u: &DMatrix<C64>) -> Result<()> {
    let k = u.nrows();
    let defect = (u.adjoint() * u - DMatrix::<C64>::identity(k, k)).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if u.ncols() != k || defect > 1e-12 {
        return Err(CrError::Config(format!("matrix is not unitary (defect {defect:e})")));
    }
    Ok(())
}

/// A unitary `U` of `C^{n+1}` acting on the sphere, in one chart.
pub fn sphere_rotation(chart: SphereChart, u: DMatrix<C64>) -> Result<SmoothMap> {
    check_unitary(&u)?;
    let dim = 2 * (u.nrows() - 1) + 1;
    Ok(match chart {
        SphereChart::North => SmoothMap::new("rotation", dim, move |x| cayley_inverse_jets(&apply_unitary(&u, &cayley_jets(x)))),
        SphereChart::South => SmoothMap::new("rotation", dim, move |x| {
            let flip = |mut v: Vec<Jet>| {
                let l = v.len() - 1;
                v[l] = v[l] * -1.0;
                v
            };
            cayley_inverse_jets(&flip(apply_unitary(&u, &flip(cayley_jets(x)))))
        }),
        SphereChart::Hopf => {
            if u.nrows() != 2 {
                return Err(CrError::UnsupportedManifold("Hopf chart needs n = 1".into()));
            }
            SmoothMap::new("rotation", 3, move |x| {
                let v = apply_unitary(&u, &hopf_embed_jets(x));
                let (r0, i0, r1, i1) = (v[0].re(), v[0].im(), v[1].re(), v[1].im());
                let m0 = (r0 * r0 + i0 * i0).sqrt();
                let m1 = (r1 * r1 + i1 * i1).sqrt();
                vec![Jet::atan2(&m1, &m0), Jet::atan2(&i0, &r0), Jet::atan2(&i1, &r1)]
            })
        }
    })
}

/// North chart coordinates to south chart coordinates.
pub fn cayley_transition(n: usize) -> SmoothMap {
    SmoothMap::new("transition", 2 * n + 1, move |x| {
        let mut u = cayley_jets(x);
        u[n] = u[n] * -1.0;
        cayley_inverse_jets(&u)
    })
}

/// Haar-ish random unitary from QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, k: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(k, k, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    a.qr().q()
}
