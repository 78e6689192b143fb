use crkit::conformal::{rescale, ConformalChange};
use crkit::field::ScalarField;
use crkit::models::cc::CcGraph;
use crkit::models::sphere::hopf_embed;
use crkit::models::{heisenberg, nilmanifold, sphere, SphereOptions};
use crkit::webster::{sublaplacian, webster};
use crkit::yamabe::*;
use crkit::{CrError, Jet, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn nil(n: usize) -> &'static CrLaplacian {
    static OPS: OnceLock<Vec<(usize, CrLaplacian)>> = OnceLock::new();
    let ops = OPS.get_or_init(|| {
        [16, 32, 48].iter().map(|&k| (k, CrLaplacian::assemble(&nilmanifold(1, 1.0, &[k, k, k]).unwrap()).unwrap())).collect()
    });
    &ops.iter().find(|(k, _)| *k == n).unwrap().1
}

fn round_sphere() -> &'static CrLaplacian {
    static OP: OnceLock<CrLaplacian> = OnceLock::new();
    OP.get_or_init(|| {
        let s = sphere(1, &SphereOptions::default()).unwrap();
        CrLaplacian::assemble(s.quadrature().unwrap()).unwrap()
    })
}

fn wave(x: &[Jet]) -> Jet {
    (x[0] * (2.0 * PI)).cos() * 0.2 + 1.0
}

fn bump(x: &[Jet]) -> Jet {
    (x[0] * (2.0 * PI)).cos() * (x[1] * (2.0 * PI)).sin() * 0.3 + (x[1] * (4.0 * PI)).cos() * 0.1 + 1.0
}

#[test]
fn constants_and_symmetry() {
    assert_eq!(b_n(1), 4.0);
    assert_eq!(b_n(2), 3.0);
    let op = nil(16);
    assert!((op.volume() - 1.0).abs() < 1e-12);
    let one = GridDensity::constant(op.len(), 1.0).unwrap();
    assert!(op.apply(&one.values).iter().all(|v| v.abs() < 1e-10));
    let e = functional_a(op, &one).unwrap();
    assert!(e.value().abs() < 1e-12 && e.defect < 1e-12);
    assert!((functional_b(op, &one) - 1.0).abs() < 1e-12);
    let c = GridDensity::constant(op.len(), 1.7).unwrap();
    assert!((functional_b(op, &c) - 1.7f64.powi(4) * op.volume()).abs() < 1e-12);
    assert!(functional_a(op, &c).unwrap().value().abs() < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let u: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (op.inner(&u, &op.apply(&v)), op.inner(&op.apply(&u), &v));
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} {b}");
    }

    let flat = heisenberg(1, 1.0, 1.0, &[]).unwrap();
    assert!(matches!(cr_laplacian_apply(&flat, &one), Err(CrError::StencilNotAssembled(_))));
}

#[test]
fn discrete_operator_matches_pointwise_sublaplacian() {
    let f = ScalarField::analytic(bump);
    let error = |op: &CrLaplacian| {
        let m = op.manifold();
        let u = GridDensity::from_field(m, &f).unwrap();
        let lu = op.apply(&u.values);
        let g = op.grid();
        let mut worst: f64 = 0.0;
        for k in (0..op.len()).step_by(997) {
            let x = g.coords(k);
            let w = webster(m, &x).unwrap();
            let want = 4.0 * sublaplacian(m, &w, &f, &x).unwrap().re + w.scalar.unwrap() * u.values[k];
            worst = worst.max((lu[k] - want).abs() / want.abs().max(1.0));
        }
        worst
    };
    // high-order consistency: small at 32 and shrinking fast under refinement
    let (e32, e48) = (error(nil(32)), error(nil(48)));
    assert!(e32 < 1e-4, "{e32}");
    assert!(e32 / e48 >= 10.0, "{e32} {e48}");

    // on the round sphere the constant scalar term enters
    let s = sphere(1, &SphereOptions { hopf_shape: [16, 17, 17], ..Default::default() }).unwrap();
    let m = s.quadrature().unwrap();
    let op = CrLaplacian::assemble(m).unwrap();
    let f = ScalarField::analytic(|x| x[0].cos() * x[1].cos() + (x[0] * 2.0).sin() * (x[2] - x[1]).sin());
    let u = GridDensity::from_field(m, &f).unwrap();
    let lu = op.apply(&u.values);
    let g = op.grid();
    let mut worst: f64 = 0.0;
    for k in (0..op.len()).step_by(131) {
        let x = g.coords(k);
        let w = webster(m, &x).unwrap();
        let want = 4.0 * sublaplacian(m, &w, &f, &x).unwrap().re + w.scalar.unwrap() * u.values[k];
        worst = worst.max((lu[k] - want).abs());
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn energy_identity_improves_under_refinement() {
    let defects: Vec<f64> = [32, 48]
        .iter()
        .map(|&k| {
            let op = nil(k);
            let u = GridDensity::from_field(op.manifold(), &ScalarField::analytic(bump)).unwrap();
            let e = functional_a(op, &u).unwrap();
            assert!(e.gradient > 0.0);
            e.defect
        })
        .collect();
    assert!(defects[0] <= 1e-6, "{defects:?}");
    assert!(defects[1] < defects[0], "{defects:?}");
}

#[test]
fn flat_nilmanifold_minimizer_is_constant() {
    let op = nil(32);
    let u0 = GridDensity::from_field(op.manifold(), &ScalarField::analytic(wave)).unwrap();
    let opts = SolverOptions::default();
    let sol = yamabe_minimize(op, &u0, &opts).unwrap();
    assert!(sol.converged);
    assert!(sol.y_est.abs() <= 1e-4, "{}", sol.y_est);
    assert!(sol.el_residual <= 1e-6);
    assert!((functional_b(op, &sol.u) - 1.0).abs() <= 1e-10);
    let c = op.volume().powf(-1.0 / op.exponent());
    assert!(sol.u.values.iter().all(|v| (v - c).abs() <= 1e-3));
    assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
    assert!((functional_a(op, &sol.u).unwrap().value() - sol.y_est).abs() < 1e-12);

    let ccr = constant_curvature_residual(op, &sol.u).unwrap();
    assert!(ccr.value <= 1e-3, "{ccr:?}");
    let rough = constant_curvature_residual(op, &u0).unwrap();
    assert!(rough.value > ccr.value, "{rough:?} {ccr:?}");

    // a constant multiple of a critical point is critical with the same value
    let scaled = GridDensity::new(sol.u.values.iter().map(|v| 3.0 * v).collect(), true).unwrap();
    let again = yamabe_minimize(op, &scaled, &opts).unwrap();
    assert_eq!(again.iterations, 0);
    assert!((again.y_est - sol.y_est).abs() <= 1e-9);
    assert!((euler_lagrange_residual(op, &scaled) - sol.el_residual).abs() <= 1e-9);

    // determinism
    let twin = yamabe_minimize(op, &u0, &opts).unwrap();
    assert_eq!(twin.u.values, sol.u.values);
    assert_eq!(twin.y_est.to_bits(), sol.y_est.to_bits());
}

#[test]
fn minimizer_rejects_bad_input() {
    let op = nil(16);
    let mut v = vec![1.0; op.len()];
    v[5] = 0.0;
    let u = GridDensity::new(v, false).unwrap();
    assert!(matches!(yamabe_minimize(op, &u, &SolverOptions::default()), Err(CrError::NonPositiveDensity(_))));
    assert!(GridDensity::new(vec![1.0, -1.0], true).is_err());
    assert!(GridDensity::new(vec![f64::NAN], false).is_err());
    let u0 = GridDensity::from_field(op.manifold(), &ScalarField::analytic(wave)).unwrap();
    let short = SolverOptions { max_iter: 1, tol: 1e-14, ..Default::default() };
    let sol = yamabe_minimize(op, &u0, &short).unwrap();
    assert!(!sol.converged);
    assert!(matches!(sol.require_converged(), Err(CrError::NonConvergence { .. })));
}

#[test]
fn round_sphere_is_critical() {
    let op = round_sphere();
    let s = 8.0 * PI;
    assert!((op.volume() - 1.0).abs() < 1e-10);
    let one = GridDensity::constant(op.len(), 1.0).unwrap();
    assert!(op.apply(&one.values).iter().all(|v| (v - s).abs() < 1e-8));
    let e = functional_a(op, &one).unwrap();
    assert!((e.value() - s).abs() < 1e-8 && e.defect <= 1e-6, "{e:?}");
    assert!(euler_lagrange_residual(op, &one) <= 1e-6);
    let sol = yamabe_minimize(op, &one, &SolverOptions::default()).unwrap();
    assert!(sol.converged && sol.iterations == 0);
    assert!((sol.y_est - s).abs() < 1e-8);
    let ccr = constant_curvature_residual(op, &GridDensity::constant(op.len(), 2.5).unwrap()).unwrap();
    assert!(ccr.value <= 1e-6, "{ccr:?}");
}

#[test]
fn sphere_green_function() {
    let s = sphere(1, &SphereOptions { hopf_shape: [48, 33, 33], ..Default::default() }).unwrap();
    let m = s.quadrature().unwrap();
    let op = CrLaplacian::assemble(m).unwrap();
    let g = op.grid();
    let pole = g.index(&[24, 0, 0]);
    let gf = green_function(&op, pole).unwrap();
    assert_eq!(gf.method, "fourier-blocks");
    assert!(gf.kernel_dim == 0 && gf.positive && gf.offset == 0.0);
    assert_eq!(gf.min(), 1.0);
    assert!(gf.residual <= 1e-8, "{}", gf.residual);
    assert!(gf.values.iter().zip(&gf.pole_region).all(|(v, r)| *r || *v >= 1.0));

    // the continuum Green function is a multiple of |1 − ⟨ζ, ξ̄⟩|^{-1}
    let xi = hopf_embed(&g.coords(pole));
    let (mut gv, mut gauge) = (vec![], vec![]);
    for i in 0..op.len() {
        if gf.pole_region[i] {
            continue;
        }
        let z = hopf_embed(&g.coords(i));
        gv.push(gf.values[i]);
        gauge.push((C64::new(1.0, 0.0) - z[0] * xi[0].conj() - z[1] * xi[1].conj()).norm());
    }
    let rg = rank_correlation(&gv, &gauge);
    assert!(rg < -0.9, "{rg}");

    // decreasing in the cc distance along index rays leaving the pole
    let cc = CcGraph::build(m).unwrap().distances_from(pole).unwrap();
    let c = g.multi(pole);
    let shape = g.shape();
    let (mut gr, mut dr) = (vec![], vec![]);
    for dir in 0..27usize {
        let step = [dir % 3, (dir / 3) % 3, dir / 9].map(|v| v as i64 - 1);
        if step == [0, 0, 0] {
            continue;
        }
        for k in (POLE_REGION_CELLS as i64 + 1)..(shape[1] as i64 / 2) {
            let e = c[0] as i64 + k * step[0];
            if e < 0 || e >= shape[0] as i64 {
                break;
            }
            let a = (c[1] as i64 + k * step[1]).rem_euclid(shape[1] as i64) as usize;
            let b = (c[2] as i64 + k * step[2]).rem_euclid(shape[2] as i64) as usize;
            let i = g.index(&[e as usize, a, b]);
            gr.push(gf.values[i]);
            dr.push(cc[i]);
        }
    }
    let rc = rank_correlation(&gr, &dr);
    assert!(rc < -0.9, "{rc}");

    // linear in the source strength
    let mut rhs = vec![0.0; op.len()];
    rhs[pole] = 1.0 / op.weights()[pole];
    let one = solve_cr_laplacian(&op, &rhs).unwrap().solution;
    rhs[pole] *= 2.0;
    let two = solve_cr_laplacian(&op, &rhs).unwrap().solution;
    assert!(one.iter().zip(&two).all(|(a, b)| 2.0 * a == *b));
}

#[test]
fn nilmanifold_green_function_uses_the_mean_zero_complement() {
    let op = nil(16);
    let gf = green_function(op, op.grid().index(&[8, 8, 8])).unwrap();
    // constants and the seven parity modes of the even grid
    assert_eq!(gf.kernel_dim, 8);
    assert_eq!(gf.method, "conjugate-gradient");
    assert_eq!(gf.min(), 1.0);
    assert!(gf.residual <= 1e-8, "{}", gf.residual);
}

#[test]
fn rescaled_nilmanifold_recovers_the_flat_form() {
    let base = nilmanifold(1, 1.0, &[32, 32, 32]).unwrap();
    let f = ScalarField::analytic(|x| (x[0] * (2.0 * PI)).cos() * 0.1);
    let m = rescale(&base, &ConformalChange::from_f(1, f.clone())).unwrap();
    let op = CrLaplacian::assemble(&m).unwrap();
    let factor: Vec<f64> = (0..op.len()).map(|i| (2.0 * f.real(&op.grid().coords(i)).unwrap()).exp()).collect();
    let rep = uniqueness_experiment(&op, 5, 11, &SolverOptions::default(), Some(&factor)).unwrap();
    assert_eq!(rep.runs.len(), 5);
    assert!(rep.max_pairwise <= 1e-3, "{}", rep.max_pairwise);
    assert!(rep.flatness.unwrap() <= 1e-3, "{:?}", rep.flatness);
    for r in &rep.runs {
        assert!(r.converged && r.y_est.abs() <= 1e-4, "{}", r.y_est);
    }
}

#[test]
fn sobolev_probe_is_refinement_stable() {
    let battery = sobolev_battery(nil(32).grid(), 20, 5);
    let coarse = sobolev_probe(nil(32), &battery).unwrap();
    let fine = sobolev_probe(nil(48), &battery).unwrap();
    assert!((coarse.ratios[0] - 1.0).abs() < 1e-12);
    assert!(coarse.worst.is_finite() && coarse.worst > 0.0);
    assert!((fine.worst / coarse.worst - 1.0).abs() <= 0.2, "{} {}", coarse.worst, fine.worst);
    let doubled: Vec<ScalarField> = battery.iter().map(|f| f.scale(2.0)).collect();
    let twice = sobolev_probe(nil(32), &doubled).unwrap();
    let p = nil(32).exponent();
    for (a, b) in coarse.ratios.iter().zip(&twice.ratios) {
        assert!((b / a - 2f64.powf(p - 2.0)).abs() < 1e-10);
    }
}
