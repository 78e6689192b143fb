use crkit::models::cc::{cc_distance, CcGraph};
use crkit::models::heisenberg::{group_law, inverse, HeisenbergPoint};
use crkit::models::normal::{expansion_orders, normal_coordinates};
use crkit::models::{heisenberg, nilmanifold, sphere, SphereOptions};
use crkit::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng) -> HeisenbergPoint {
    HeisenbergPoint::new(vec![C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))], rng.gen_range(-1.0..1.0))
}

#[test]
fn group_axioms_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (a, b, c) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
        assert_eq!(group_law(&a, &inverse(&a)), HeisenbergPoint::origin(1));
        let l = group_law(&group_law(&a, &b), &c);
        let r = group_law(&a, &group_law(&b, &c));
        assert!((l.t - r.t).abs() < 1e-14 && (l.z[0] - r.z[0]).norm() < 1e-15);
    }
}

#[test]
fn theta_antisymmetric_on_heisenberg() {
    let m = heisenberg(1, 2.0, 4.0, &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let xi = random_point(&mut rng).to_coords();
        let eta = random_point(&mut rng).to_coords();
        let a = normal_coordinates(&m, &xi).unwrap();
        let b = normal_coordinates(&m, &eta).unwrap();
        assert!(a.forward(&xi).unwrap().iter().all(|v| *v == 0.0));
        let p = a.forward(&eta).unwrap();
        let q = b.forward(&xi).unwrap();
        for k in 0..3 {
            assert_eq!(p[k], -q[k]);
        }
    }
}

#[test]
fn expansion_orders_on_models() {
    let radii = [0.08, 0.04, 0.02, 0.01];
    let h = heisenberg(1, 2.0, 4.0, &[]).unwrap();
    let o = expansion_orders(&normal_coordinates(&h, &[0.3, 0.2, 0.1]).unwrap(), &radii).unwrap();
    assert!(o.dt_slope.is_none() && o.dz_slope.is_none());
    let nil = nilmanifold(1, 1.0, &[4, 4, 4]).unwrap();
    let o = expansion_orders(&normal_coordinates(&nil, &[0.5, 0.9, 0.3]).unwrap(), &radii).unwrap();
    assert!(o.max_dt < 1e-12 && o.max_dz < 1e-12, "{o:?}");
    let s = sphere(1, &SphereOptions { hopf_shape: [4, 5, 5], ..Default::default() }).unwrap();
    let nc = normal_coordinates(&s.north, &[0.3, -0.2, 0.4]).unwrap();
    let o = expansion_orders(&nc, &radii).unwrap();
    eprintln!("{o:?}");
    assert!(o.dt_slope.unwrap() >= 0.9 && o.dz_slope.unwrap() >= 1.9, "{o:?}");
    assert!(normal_coordinates(s.quadrature().unwrap(), &[0.5, 0.0, 0.0]).is_err());
}

#[test]
fn cc_distance_basics() {
    let m = heisenberg(1, 1.0, 1.0, &[9, 9, 9]).unwrap();
    let g = CcGraph::build(&m).unwrap();
    let d = g.distances_from(10).unwrap();
    assert_eq!(d[10], 0.0);
    for j in [0, 100, 400, 728] {
        assert_eq!(g.distance(10, j).unwrap(), g.distance(j, 10).unwrap());
    }
}

#[test]
fn cc_dilation_scaling() {
    let (x, y) = ([0.125, 0.0, 0.0], [-0.125, 0.125, 0.125]);
    let dx = |v: &[f64; 3]| [2.0 * v[0], 2.0 * v[1], 4.0 * v[2]];
    let mut ratios = vec![];
    for pts in [17, 33] {
        let m = heisenberg(1, 1.0, 1.0, &[pts, pts, pts]).unwrap();
        let a = cc_distance(&m, &x, &y).unwrap();
        let b = cc_distance(&m, &dx(&x), &dx(&y)).unwrap();
        ratios.push(b / a);
    }
    eprintln!("{ratios:?}");
    assert!((ratios[1] - 2.0).abs() < 0.2, "{ratios:?}");
}
