use crkit::geometry::{levi_form, reeb_field, volume_density, PointGeometry};
use crkit::models::{heisenberg, nilmanifold};
use crkit::webster::{connection_least_squares, tensor_norms, webster};

#[test]
fn heisenberg_levi_and_reeb() {
    let m = heisenberg(1, 2.0, 4.0, &[]).unwrap();
    let x = [0.3, -0.7, 1.1];
    let g = levi_form(&m, &x).unwrap();
    assert!((g[(0, 0)].re - 1.0).abs() < 1e-12 && g[(0, 0)].im.abs() < 1e-12);
    let (t, _) = reeb_field(&m, &x).unwrap();
    assert!((t[0]).abs() < 1e-12 && t[1].abs() < 1e-12 && (t[2] - 1.0).abs() < 1e-12);
    assert!((volume_density(&m, &x).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn heisenberg_is_flat() {
    for n in [1, 2] {
        let m = heisenberg(n, 2.0, 4.0, &[]).unwrap();
        let x: Vec<f64> = (0..2 * n + 1).map(|k| 0.2 + 0.17 * k as f64).collect();
        let w = webster(&m, &x).unwrap();
        let (r, a) = tensor_norms(&w).unwrap();
        assert!(r < 1e-8 && a < 1e-8, "n={n} R={r} A={a}");
        assert!(w.scalar.unwrap().abs() < 1e-8);
        assert!(w.residuals.connection() < 1e-8, "{:?}", w.residuals);
        for b in &w.gamma {
            for c in b {
                for v in c {
                    assert!(v.norm() < 1e-8);
                }
            }
        }
        let pg = PointGeometry::new(&m, &x, 2).unwrap();
        let (_, _, res) = connection_least_squares(&pg).unwrap();
        assert!(res < 1e-8);
    }
}

#[test]
fn nilmanifold_is_flat_with_unit_volume() {
    let m = nilmanifold(1, 1.0, &[8, 8, 8]).unwrap();
    let x = [0.3, 0.6, 0.2];
    let g = levi_form(&m, &x).unwrap();
    assert!((g[(0, 0)].re - 0.5).abs() < 1e-12);
    let w = webster(&m, &x).unwrap();
    let (r, a) = tensor_norms(&w).unwrap();
    assert!(r < 1e-8 && a < 1e-8);
    let v = m.volume().unwrap();
    assert!((v - 1.0).abs() < 1e-10, "volume {v}");
}

#[test]
fn webster_sweep_timing() {
    let m = nilmanifold(1, 1.0, &[32, 32, 32]).unwrap();
    let nodes = m.nodes().unwrap();
    let t0 = std::time::Instant::now();
    let worst = nodes
        .iter()
        .map(|x| {
            let w = webster(&m, x).unwrap();
            w.scalar.unwrap().abs()
        })
        .fold(0.0, f64::max);
    eprintln!("32^3 sweep {:?} worst S {worst:e}", t0.elapsed());
    assert!(worst < 1e-8);
}
