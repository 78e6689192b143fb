use crkit::conformal::*;
use crkit::field::{Derivatives, ScalarField, TrigField};
use crkit::geometry::{admissible_coframe, levi_form};
use crkit::jet::C64;
use crkit::models::{heisenberg, nilmanifold, sphere, SphereOptions};
use crkit::webster::webster;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cos_x(a: f64) -> ScalarField {
    ScalarField::analytic(move |x| (x[0] * (2.0 * std::f64::consts::PI)).cos() * a)
}

#[test]
fn zero_change_is_identity() {
    let m = nilmanifold(1, 1.0, &[4, 4, 4]).unwrap();
    let c = ConformalChange::from_f(1, ScalarField::constant(0.0));
    let mt = rescale(&m, &c).unwrap();
    let x = [0.3, 0.4, 0.1];
    let (a, b) = (webster(&m, &x).unwrap(), webster(&mt, &x).unwrap());
    assert!((a.levi[(0, 0)] - b.levi[(0, 0)]).norm() < 1e-12);
    assert!(b.scalar.unwrap().abs() < 1e-12);
}

#[test]
fn constant_change_on_heisenberg() {
    let m = heisenberg(1, 2.0, 4.0, &[]).unwrap();
    let c = ConformalChange::from_f(1, ScalarField::constant(0.3));
    let mt = rescale(&m, &c).unwrap();
    let x = [0.1, 0.2, 0.3];
    let g = levi_form(&mt, &x).unwrap();
    assert!((g[(0, 0)].re - (0.6f64).exp()).abs() < 1e-12);
    assert!(webster(&mt, &x).unwrap().scalar.unwrap().abs() < 1e-10);
    let ck = cross_check(&m, &c, &x).unwrap();
    assert!(ck.worst() < 1e-10);
}

#[test]
fn given_u_matches_given_f() {
    let f = cos_x(0.1);
    let cf = ConformalChange::from_f(1, f.clone());
    let cu = ConformalChange::from_u(1, cf.u.clone());
    let x = [0.37, 0.2, 0.5];
    assert!((cf.factor().real(&x).unwrap() - cu.factor().real(&x).unwrap()).abs() < 1e-12);
    assert!((cu.f.real(&x).unwrap() - f.real(&x).unwrap()).abs() < 1e-12);
    assert!(cu.validate(&[x.to_vec()]).is_ok());
}

#[test]
fn nonpositive_u_is_rejected() {
    let m = nilmanifold(1, 1.0, &[4, 4, 4]).unwrap();
    let c = ConformalChange::from_u(1, cos_x(1.0));
    assert!(matches!(rescale(&m, &c), Err(crkit::CrError::NonPositiveDensity(_))));
}

#[test]
fn coframe_formula_on_nilmanifold() {
    let m = nilmanifold(1, 1.0, &[4, 4, 4]).unwrap();
    let c = ConformalChange::from_f(1, cos_x(0.1));
    let x = [0.23, 0.61, 0.4];
    let w = webster(&m, &x).unwrap();
    let pred = predicted_coframe(&m, &w, &c, &x).unwrap();
    let mt = rescale(&m, &c).unwrap();
    let cof = admissible_coframe(&mt, &x).unwrap();
    let ef = c.f.real(&x).unwrap().exp();
    for k in 0..3 {
        assert!((pred[(0, k)] - cof[0][k] * ef).norm() < 1e-8);
    }
}

#[test]
fn transformation_laws_on_nilmanifold() {
    let m = nilmanifold(1, 1.0, &[4, 4, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let f = TrigField::random(&mut rng, 3, &[(0, 1.0), (1, 1.0)], 2, 3, 0.3).to_scalar();
        let c = ConformalChange::from_f(1, f);
        for x in [[0.1, 0.2, 0.3], [0.7, 0.45, 0.9]] {
            let ck = cross_check(&m, &c, &x).unwrap();
            assert!(ck.worst() < 1e-6, "{ck:?}");
            assert!(ck.contraction < 1e-9, "{ck:?}");
        }
    }
}

#[test]
fn transformation_laws_in_dimension_five() {
    let m = heisenberg(2, 2.0, 4.0, &[]).unwrap();
    let f = ScalarField::analytic(|x| (x[0] * 1.3 + x[3] * 0.7).sin() * 0.2 + (x[4] * 0.9 - x[1]).cos() * 0.1);
    let c = ConformalChange::from_f(2, f);
    let ck = cross_check(&m, &c, &[0.1, -0.2, 0.3, 0.15, 0.05]).unwrap();
    assert!(ck.worst() < 1e-6 && ck.contraction < 1e-9, "{ck:?}");
}

#[test]
fn constant_change_on_sphere() {
    let s = sphere(1, &SphereOptions { hopf_shape: [6, 7, 7], ..Default::default() }).unwrap();
    let m = s.quadrature().unwrap();
    let x = [0.5, 1.0, 2.0];
    let w = webster(m, &x).unwrap();
    let c = ConformalChange::from_f(1, ScalarField::constant(0.25));
    let ps = predicted_scalar(m, &w, &c, &x).unwrap();
    assert!((ps - (-0.5f64).exp() * w.scalar.unwrap()).abs() < 1e-10);
    let a = predicted_torsion(m, &w, &c, &x).unwrap();
    assert!(a[(0, 0)].norm() < 1e-10);
}

#[test]
fn finite_difference_disagreement_contracts() {
    let base = nilmanifold(1, 1.0, &[4, 4, 4]).unwrap();
    let f = ScalarField::analytic(|x| (x[0] * (2.0 * std::f64::consts::PI)).cos() * 0.1 + (x[1] * (2.0 * std::f64::consts::PI)).sin() * 0.05);
    let x = [0.21, 0.43, 0.5];
    let mut errs = vec![];
    for h in [0.02, 0.01] {
        let s = Derivatives::CentralDifference { h, accuracy: 4 };
        let m = base.with_theta(base.theta.with_strategy(s)).with_frame(base.frame.with_strategy(s));
        let c = ConformalChange::from_f(1, f.with_strategy(s));
        errs.push(cross_check_against(&m, &c, &base, &ConformalChange::from_f(1, f.clone()), &x).unwrap().worst());
        eprintln!("h = {h}: {:e}", errs.last().unwrap());
    }
    assert!(errs[0] / errs[1] >= 12.0, "{errs:?}");
}

#[test]
fn dilation_is_pseudoconformal() {
    let m = heisenberg(1, 3.0, 9.0, &[]).unwrap();
    let lam = 1.7;
    let map = SmoothMap::new("dilation", 3, move |x| vec![x[0] * lam, x[1] * lam, x[2] * (lam * lam)]);
    let x = [0.3, -0.2, 0.5];
    let (k, r) = pseudoconformal_factor(&map, &m, &m, &x).unwrap();
    assert!((k - lam * lam).abs() < 1e-12 && r < 1e-12);
    assert!(cr_automorphism_residual(&map, &m, &x).unwrap() < 1e-12);
    let conj = SmoothMap::new("conjugation", 3, |x| vec![x[0], x[1] * -1.0, x[2]]);
    assert!(cr_automorphism_residual(&conj, &m, &x).unwrap() > 0.5);
}

#[test]
fn heisenberg_adapted_metric() {
    let m = heisenberg(1, 2.0, 4.0, &[]).unwrap();
    let g = adapted_metric(&m, &[0.0, 0.0, 0.0]).unwrap();
    let want = [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((g[(i, j)] - want[i][j]).abs() < 1e-12, "{g}");
        }
    }
    let g = adapted_metric(&m, &[0.4, -0.3, 1.0]).unwrap();
    assert!((&g - g.transpose()).amax() < 1e-9);
    assert!(adapted_metric_min_eigenvalue(&g) > 0.0);
    let _ = C64::new(0.0, 0.0);
}
