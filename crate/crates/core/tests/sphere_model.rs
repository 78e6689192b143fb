use crkit::geometry::{reeb_field, volume_density};
use crkit::models::sphere::{cayley_jets, chart_to_embedded, hopf_embed_jets};
use crkit::models::{sphere, SphereChart, SphereOptions};
use crkit::webster::{tensor_norms, webster};
use crkit::Jet;
use std::f64::consts::PI;

fn opts() -> SphereOptions {
    SphereOptions { hopf_shape: [8, 9, 9], ..Default::default() }
}

#[test]
fn scalar_curvature_matches_in_every_chart() {
    // Expected value for c·Im(ū du): with the form 2·Im(ū du) the Webster
    // scalar in the Lee normalisation is n(n+1)/2; the convention
    // dθ = 2i g θ∧θ̄ halves g and so doubles S, and θ ↦ θ/(2c) multiplies S
    // by 2c. Hence S = 4πn(n+1) at unit volume.
    let s = sphere(1, &opts()).unwrap();
    let expect = 8.0 * PI;
    for (c, x) in [(SphereChart::Hopf, vec![0.7, 1.0, 2.0]), (SphereChart::North, vec![0.2, -0.4, 0.3]), (SphereChart::South, vec![-0.5, 0.1, -0.6])] {
        let w = webster(s.chart(c).unwrap(), &x).unwrap();
        let sc = w.scalar.unwrap();
        assert!((sc - expect).abs() < 1e-8, "{c:?}: {sc}");
        let (r, a) = tensor_norms(&w).unwrap();
        assert!(a < 1e-8, "{c:?} torsion {a}");
        assert!(r > 1.0);
    }
}

#[test]
fn unit_volume_on_hopf_grid() {
    let s = sphere(1, &opts()).unwrap();
    let v = s.quadrature().unwrap().volume().unwrap();
    assert!((v - 1.0).abs() < 1e-12, "{v}");
    let x = [0.4, 0.0, 0.0];
    let rho = volume_density(s.quadrature().unwrap(), &x).unwrap();
    let c = 1.0 / (2.0 * PI);
    assert!((rho - c * c * (0.8f64).sin()).abs() < 1e-14);
}

#[test]
fn reeb_is_the_circle_action() {
    let s = sphere(1, &opts()).unwrap();
    for c in [SphereChart::North, SphereChart::Hopf] {
        let x = if c == SphereChart::Hopf { vec![0.6, 0.3, 1.2] } else { vec![0.3, 0.1, -0.2] };
        let (t, res) = reeb_field(s.chart(c).unwrap(), &x).unwrap();
        assert!(res < 1e-9);
        let jets = Jet::variables(&x, 1);
        let u = if c == SphereChart::Hopf { hopf_embed_jets(&jets) } else { cayley_jets(&jets) };
        let target = s.embedded_reeb(&chart_to_embedded(c, &x));
        for (uj, tj) in u.iter().zip(&target) {
            let push: num_complex::Complex64 = (0..3).map(|k| uj.partial(&unit(k)) * t[k]).sum();
            assert!((push - tj).norm() < 1e-9, "{c:?} {push} vs {tj}");
        }
    }
}

fn unit(k: usize) -> Vec<u8> {
    let mut e = vec![0u8; 3];
    e[k] = 1;
    e
}

#[test]
fn homogeneous_on_cayley_grid() {
    let s = sphere(1, &SphereOptions { cayley_points: 7, ..opts() }).unwrap();
    let m = &s.north;
    let vals: Vec<(f64, f64)> = m
        .nodes()
        .unwrap()
        .iter()
        .map(|x| {
            let w = webster(m, x).unwrap();
            (w.scalar.unwrap(), tensor_norms(&w).unwrap().0)
        })
        .collect();
    for k in 0..2 {
        let v: Vec<f64> = vals.iter().map(|p| if k == 0 { p.0 } else { p.1 }).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(sd / mean < 1e-6);
    }
}

#[test]
fn five_sphere_values() {
    let s = sphere(2, &SphereOptions::default()).unwrap();
    let w = webster(&s.north, &[0.1, 0.2, -0.1, 0.3, 0.2]).unwrap();
    assert!((w.scalar.unwrap() - 24.0 * PI).abs() < 1e-7, "{}", w.scalar.unwrap());
    assert!(crkit::geometry::integrability_residual(&s.north, &[0.1, 0.2, -0.1, 0.3, 0.2]).unwrap() < 1e-8);
}

mod rotations {
    use crkit::conformal::{adapted_metric, cr_automorphism_residual, pseudoconformal_factor};
    use crkit::models::maps::{cayley_transition, random_unitary, sphere_rotation};
    use crkit::models::{sphere, SphereChart, SphereOptions};
    use crkit::webster::webster;
    use rand::SeedableRng;

    #[test]
    fn rotations_have_unit_factor() {
        let s = sphere(1, &SphereOptions { hopf_shape: [6, 7, 7], ..Default::default() }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..5 {
            let u = random_unitary(&mut rng, 2);
            for (c, x) in [(SphereChart::Hopf, vec![0.7, 1.0, 2.0]), (SphereChart::North, vec![0.1, 0.05, -0.1])] {
                let map = sphere_rotation(c, u.clone()).unwrap();
                let m = s.chart(c).unwrap();
                match pseudoconformal_factor(&map, m, m, &x) {
                    Ok((k, r)) => {
                        assert!((k - 1.0).abs() < 1e-9 && r < 1e-9, "{c:?} {k} {r}");
                        assert!(cr_automorphism_residual(&map, m, &x).unwrap() < 1e-9);
                        let (y, jac) = map.differential(&x).unwrap();
                        let y = if c == SphereChart::Hopf { vec![y[0], y[1].rem_euclid(2.0 * std::f64::consts::PI), y[2].rem_euclid(2.0 * std::f64::consts::PI)] } else { y };
                        let gy = adapted_metric(m, &y).unwrap();
                        let gx = adapted_metric(m, &x).unwrap();
                        let pulled = jac.transpose() * gy * &jac;
                        assert!((pulled - gx).amax() < 1e-8);
                        checked += 1;
                    }
                    Err(crkit::CrError::MapOutOfDomain(_)) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
        assert!(checked >= 5, "only {checked} rotations landed in the chart");
    }

    #[test]
    fn charts_agree_on_overlap() {
        let s = sphere(1, &SphereOptions { hopf_shape: [6, 7, 7], cayley_box: (3.0, 3.0), ..Default::default() }).unwrap();
        let t = cayley_transition(1);
        for x in [[0.4, 0.3, 0.5], [0.9, -0.2, 0.1]] {
            let y = t.apply(&x).unwrap();
            let a = webster(&s.north, &x).unwrap().scalar.unwrap();
            let b = webster(&s.south, &y).unwrap().scalar.unwrap();
            assert!((a - b).abs() < 1e-7);
            let (k, r) = pseudoconformal_factor(&t, &s.north, &s.south, &x).unwrap();
            assert!((k - 1.0).abs() < 1e-9 && r < 1e-9, "{k} {r}");
        }
    }
}
