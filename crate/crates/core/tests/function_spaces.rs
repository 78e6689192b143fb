use crkit::field::{ScalarField, TrigField};
use crkit::function_spaces::*;
use crkit::models::deformation::{deformation_family, Recipe};
use crkit::models::heisenberg::heisenberg;
use crkit::models::nilmanifold;
use crkit::models::normal::normal_coordinates;
use crkit::models::sphere::{sphere, SphereOptions};
use crkit::CrError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn word(a: &[usize]) -> MultiIndex {
    MultiIndex::new(1, a.to_vec()).unwrap()
}

#[test]
fn words_are_enumerated_by_length() {
    let all = MultiIndex::all(1, 3);
    assert_eq!(all.len(), 1 + 2 + 4 + 8);
    assert!(all.windows(2).all(|w| w[0].len() <= w[1].len()));
    assert!(MultiIndex::new(1, vec![2]).is_err());
}

#[test]
fn horizontal_derivatives_on_the_heisenberg_group() {
    let m = heisenberg(1, 2.0, 2.0, &[]).unwrap();
    // X_1 = Re Z_1 = ½∂_x + y∂_t, so X_1 t = y
    let t = ScalarField::analytic(|x| x[2]);
    assert_eq!(horizontal_derivative(&m, &t, &word(&[0]), &[1.0, 0.0, 0.0]).unwrap(), 0.0);
    assert!((horizontal_derivative(&m, &t, &word(&[0]), &[0.0, 1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);

    let c = ScalarField::constant(3.0);
    for a in MultiIndex::all(1, 3).into_iter().skip(1) {
        assert_eq!(horizontal_derivative(&m, &c, &a, &[0.3, -0.2, 0.1]).unwrap(), 0.0);
    }
    let err = horizontal_derivative(&m, &c, &word(&[0, 1, 0, 1]), &[0.0; 3]);
    assert!(matches!(err, Err(CrError::OrderTooHigh { requested: 4, max: 3 })));
}

#[test]
fn commutator_is_the_reeb_derivative() {
    // X_1 = ½∂_x + y∂_t and X_2 = −½∂_y + x∂_t, so
    // [X_1, X_2] = (X_1 x − X_2 y)∂_t = ∂_t.
    let m = heisenberg(1, 2.0, 2.0, &[]).unwrap();
    let f = |x: &[crkit::Jet]| (x[0] * 1.3).sin() * (x[2] * 0.7).cos() + x[1] * x[1] * x[2];
    let fd = ScalarField::central_difference(f, 1e-3);
    let exact = ScalarField::analytic(f);
    for p in [[0.2, -0.4, 0.3], [-0.5, 0.1, -0.6]] {
        let c = horizontal_derivative(&m, &fd, &word(&[0, 1]), &p).unwrap() - horizontal_derivative(&m, &fd, &word(&[1, 0]), &p).unwrap();
        let dt = exact.jet(&p, 1).unwrap().gradient()[2].re;
        assert!((c - dt).abs() < 1e-4, "{c} {dt}");
    }
}

#[test]
fn sobolev_norm_properties() {
    let m = nilmanifold(1, 1.0, &[12, 12, 12]).unwrap();
    let u = Domain::interior(&m, "torus", 0).unwrap();
    let opts = NormOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = TrigField::random(&mut rng, 3, &[(0, 1.0), (1, 1.0), (2, 1.0)], 1, 3, 1.0).to_scalar();

    let s0 = sobolev_norm(&m, &f, 2.0, 0, &u, &opts).unwrap();
    assert_eq!(s0.value, lp_norm(&m, &f, 2.0, &u).unwrap().value);
    let ks: Vec<f64> = (0..=3).map(|k| sobolev_norm(&m, &f, 3.0, k, &u, &opts).unwrap().value).collect();
    assert!(ks.windows(2).all(|w| w[1] >= w[0]), "{ks:?}");

    // unit volume: a constant has every norm equal to itself
    for k in 0..=3 {
        let v = sobolev_norm(&m, &ScalarField::constant(2.5), 1.5, k, &u, &opts).unwrap().value;
        assert!((v - 2.5).abs() < 1e-12, "{v}");
    }
    assert!(sobolev_norm(&m, &f, 1.0, 1, &u, &opts).is_err());
    assert!(matches!(sobolev_norm(&m, &f, 2.0, 4, &u, &opts), Err(CrError::OrderTooHigh { .. })));

    // homogeneity and the triangle inequality
    let g = TrigField::random(&mut rng, 3, &[(0, 1.0), (1, 1.0), (2, 1.0)], 2, 3, 1.0).to_scalar();
    let f2 = f.scale(2.0);
    assert_eq!(sobolev_norm(&m, &f2, 2.0, 2, &u, &opts).unwrap().value, 2.0 * sobolev_norm(&m, &f, 2.0, 2, &u, &opts).unwrap().value);
    let sum = f.zip(&g, |a, b| a + b);
    let (a, b, c) = (
        sobolev_norm(&m, &f, 2.0, 2, &u, &opts).unwrap().value,
        sobolev_norm(&m, &g, 2.0, 2, &u, &opts).unwrap().value,
        sobolev_norm(&m, &sum, 2.0, 2, &u, &opts).unwrap().value,
    );
    assert!(c <= a + b + 1e-12);
}

#[test]
fn rho_is_symmetric_on_the_heisenberg_group() {
    let m = heisenberg(1, 1.0, 1.0, &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    use rand::Rng;
    for _ in 0..200 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho = |a: &[f64], b: &[f64]| {
            let v = normal_coordinates(&m, a).unwrap().forward(b).unwrap();
            crkit::models::heisenberg::heisenberg_norm(&crkit::models::heisenberg::HeisenbergPoint::from_coords(&v))
        };
        assert_eq!(rho(&x, &y), rho(&y, &x));
    }
}

#[test]
fn gamma_norm_properties() {
    let m = heisenberg(1, 1.0, 1.0, &[17, 17, 17]).unwrap();
    let u = Domain::ball(&m, "ball", &[0.0, 0.0, 0.0], 0.9).unwrap();
    assert!(u.len() * (u.len() - 1) / 2 > 100_000);
    let t = ScalarField::analytic(|x| x[2]);
    let full = gamma_norm(&m, &t, 0.5, &u, &NormOptions::default()).unwrap();
    let half = gamma_norm(&m, &t, 0.5, &u, &NormOptions { pair_cap: 50_000, ..Default::default() }).unwrap();
    assert!(full.value.is_finite() && full.value > 0.0);
    // saturation: doubling the sample moves the value by at most 5%, and
    // the larger sample contains the smaller one
    assert!(full.value >= half.value);
    assert!((full.value - half.value) / full.value <= 0.05, "{} {}", full.value, half.value);
    assert_eq!(full.pairs, Some(100_000));

    let c = gamma_norm(&m, &ScalarField::constant(-1.5), 1.5, &u, &NormOptions::default()).unwrap();
    assert_eq!(c.value, 1.5);
    let t2 = t.scale(2.0);
    assert_eq!(gamma_norm(&m, &t2, 0.5, &u, &NormOptions::default()).unwrap().value, 2.0 * full.value);
    assert!(gamma_norm(&m, &t, 1.0, &u, &NormOptions::default()).is_err());

    // the round sphere in Hopf coordinates has no normal coordinates here
    let s = sphere(1, &SphereOptions { hopf_shape: [6, 7, 7], ..Default::default() }).unwrap();
    let q = s.quadrature().unwrap();
    let uq = Domain::interior(q, "hopf", 0).unwrap();
    assert!(matches!(gamma_norm(q, &t, 0.5, &uq, &NormOptions::default()), Err(CrError::UnsupportedManifold(_))));
}

#[test]
fn holder_norms_satisfy_the_triangle_inequality() {
    let m = nilmanifold(1, 1.0, &[8, 8, 8]).unwrap();
    let u = Domain::interior(&m, "torus", 0).unwrap();
    let opts = NormOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let f = TrigField::random(&mut rng, 3, &[(0, 1.0), (1, 1.0)], 2, 2, 1.0).to_scalar();
        let g = TrigField::random(&mut rng, 3, &[(0, 1.0), (2, 1.0)], 2, 2, 1.0).to_scalar();
        let sum = f.zip(&g, |a, b| a + b);
        for s in [0.5, 1.5] {
            let v = |h: &ScalarField| gamma_norm(&m, h, s, &u, &opts).unwrap().value;
            assert!(v(&sum) <= v(&f) + v(&g) + 1e-12);
            let e = |h: &ScalarField| lambda_norm(&m, h, s, &u, &opts).unwrap().value;
            assert!(e(&sum) <= e(&f) + e(&g) + 1e-12);
        }
    }
}

#[test]
fn norm_reports_serialize_to_csv() {
    let m = nilmanifold(1, 1.0, &[8, 8, 8]).unwrap();
    let u = Domain::interior(&m, "torus", 0).unwrap();
    let f = ScalarField::analytic(|x| (x[0] * std::f64::consts::TAU).sin());
    let reports = vec![
        sobolev_norm(&m, &f, 2.0, 1, &u, &NormOptions::default()).unwrap(),
        gamma_norm(&m, &f, 0.5, &u, &NormOptions::default()).unwrap(),
        lambda_norm(&m, &f, 0.25, &u, &NormOptions::default()).unwrap(),
    ];
    let mut buf = Vec::new();
    write_norm_csv(&reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,p,k,s,domain,value,pairs,saturation");
    assert!(lines[1].starts_with("S^p_k,2,1,,torus,"));
    assert!(lines[2].starts_with("Gamma_s,,0,0.5,torus,"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn subelliptic_probe_is_stable_along_deformations() {
    let base = nilmanifold(1, 1.0, &[16, 16, 16]).unwrap();
    let battery = probe_battery(&base, 4, 4, 3).unwrap();
    let opts = NormOptions::default();
    for recipe in [Recipe::Contact, Recipe::Frame] {
        let fam = deformation_family(&base, recipe, &[0.1, 0.05], None).unwrap();
        let ratios: Vec<ProbeRatios> = (0..2)
            .map(|k| {
                let m = fam.member(k).unwrap();
                let u = Domain::interior(m, "torus", 0).unwrap().with_reference(&base);
                subelliptic_probe(m, &battery, &u, 2.0, 0.5, 1, &opts).unwrap()
            })
            .collect();
        for r in &ratios {
            assert_eq!(r.fields, 4);
            assert!(r.as_array().iter().all(|v| v.is_finite() && *v > 0.0), "{r:?}");
        }
        let change = ratios[0].max_relative_change(&ratios[1]);
        println!("{recipe:?}: {:?} {:?} change {change}", ratios[0], ratios[1]);
        assert!(change <= 0.3, "{change}");
    }
}

#[test]
fn subelliptic_ratios_are_scale_invariant() {
    let m = nilmanifold(1, 1.0, &[12, 12, 12]).unwrap();
    let u = Domain::interior(&m, "torus", 0).unwrap();
    let one = probe_battery(&m, 1, 4, 8).unwrap();
    let two = vec![one[0].scale(2.0)];
    let opts = NormOptions { pair_cap: 20_000, ..Default::default() };
    let a = subelliptic_probe(&m, &one, &u, 2.0, 0.5, 1, &opts).unwrap();
    let b = subelliptic_probe(&m, &two, &u, 2.0, 0.5, 1, &opts).unwrap();
    assert!(a.as_array().iter().all(|v| v.is_finite()));
    assert!(a.max_relative_change(&b) <= 1e-12, "{a:?} {b:?}");
    // the zero field is excluded
    let z = subelliptic_probe(&m, &[ScalarField::constant(0.0)], &u, 2.0, 0.5, 1, &opts).unwrap();
    assert_eq!(z.fields, 0);
}
