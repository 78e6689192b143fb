//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p crkit-cli --test acceptance -- --nocapture` to
//! see the report.

use crkit::conformal::{cr_automorphism_residual, pseudoconformal_factor, rescale, ConformalChange, SmoothMap};
use crkit::field::ScalarField;
use crkit::models::maps::{random_unitary, sphere_rotation};
use crkit::models::normal::{expansion_orders, normal_coordinates};
use crkit::models::{heisenberg, nilmanifold, sphere, SphereChart, SphereOptions};
use crkit::webster::{tensor_norms, webster};
use crkit::yamabe::*;
use crkit::{CrError, Jet};
use crkit_cli::config::{ExperimentConfig, ModelConfig, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs a configured task in-process; fails on any violated contract.
fn run_task(cfg: &ExperimentConfig) -> Result<crkit_cli::Outcome, String> {
    let out = crkit_cli::run(cfg).map_err(fail)?;
    if let Some(r) = out.failures().next() {
        return Err(r.describe());
    }
    Ok(out)
}

fn flat_certificate() -> Verdict {
    let t0 = Instant::now();
    let mut worst = Vec::new();
    for m in [heisenberg(1, 1.0, 1.0, &[32, 32, 32]).map_err(fail)?, nilmanifold(1, 1.0, &[32, 32, 32]).map_err(fail)?] {
        let (r, t) = m
            .nodes()
            .map_err(fail)?
            .par_iter()
            .map(|x| tensor_norms(&webster(&m, x)?))
            .collect::<Result<Vec<_>, CrError>>()
            .map_err(fail)?
            .into_iter()
            .fold((0.0f64, 0.0f64), |(a, b), (r, t)| (a.max(r), b.max(t)));
        worst.push((r, t));
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = worst.iter().all(|(r, t)| *r <= 1e-8 && *t <= 1e-8) && secs <= 60.0;
    ensure(ok, format!("max |R|,|T| heisenberg {:?} nilmanifold {:?}, {secs:.1} s", worst[0], worst[1]))
}

fn transformation_laws() -> Verdict {
    let cfg = ExperimentConfig::default_for(Task::ConformalCheck);
    let out = run_task(&cfg)?;
    let r = &out.results;
    ensure(
        r["fields"] == 5 && r["fd_ratios"].as_array().is_some_and(|v| v.len() == 5),
        format!("worst {} fd ratios {}", r["max"], r["fd_ratios"]),
    )
}

fn wave(x: &[Jet]) -> Jet {
    (x[0] * (2.0 * PI)).cos() * 0.2 + 1.0
}

fn yamabe_critical_points() -> Verdict {
    let op = CrLaplacian::assemble(&nilmanifold(1, 1.0, &[32, 32, 32]).map_err(fail)?).map_err(fail)?;
    let u0 = GridDensity::from_field(op.manifold(), &ScalarField::analytic(wave)).map_err(fail)?;
    let sol = yamabe_minimize(&op, &u0, &SolverOptions::default()).map_err(fail)?;
    let c = op.volume().powf(-1.0 / op.exponent());
    let dev = sol.u.values.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    let flat = sol.converged && sol.y_est.abs() <= 1e-4 && sol.el_residual <= 1e-6 && dev <= 1e-3;

    let s = sphere(1, &SphereOptions::default()).map_err(fail)?;
    let sop = CrLaplacian::assemble(s.quadrature().map_err(fail)?).map_err(fail)?;
    let one = GridDensity::constant(sop.len(), 1.0).map_err(fail)?;
    let el = euler_lagrange_residual(&sop, &one);
    let ccr = constant_curvature_residual(&sop, &one).map_err(fail)?;
    ensure(
        flat && el <= 1e-6 && ccr.value <= 1e-6,
        format!("nilmanifold Y {:.2e} EL {:.2e} dev {dev:.2e}; sphere EL {el:.2e} curvature {:.2e}", sol.y_est, sol.el_residual, ccr.value),
    )
}

fn uniqueness() -> Verdict {
    let base = nilmanifold(1, 1.0, &[32, 32, 32]).map_err(fail)?;
    let f = ScalarField::analytic(|x| (x[0] * (2.0 * PI)).cos() * 0.1);
    let m = rescale(&base, &ConformalChange::from_f(1, f.clone())).map_err(fail)?;
    let op = CrLaplacian::assemble(&m).map_err(fail)?;
    let factor = (0..op.len()).map(|i| Ok((2.0 * f.real(&op.grid().coords(i))?).exp())).collect::<Result<Vec<f64>, CrError>>().map_err(fail)?;
    let rep = uniqueness_experiment(&op, 5, 11, &SolverOptions::default(), Some(&factor)).map_err(fail)?;
    let flat = rep.flatness.unwrap_or(f64::INFINITY);
    ensure(
        rep.runs.len() == 5 && rep.runs.iter().all(|r| r.converged) && rep.max_pairwise <= 1e-3 && flat <= 1e-3,
        format!("pairwise {:.2e}, u^(p-2)e^(2f) spread {flat:.2e}", rep.max_pairwise),
    )
}

fn green_function() -> Verdict {
    let cfg = ExperimentConfig::default_for(Task::Green);
    assert_eq!(cfg.model, ModelConfig::Sphere { grid: vec![48, 33, 33] });
    let out = run_task(&cfg)?;
    let g = &out.results["green"];
    ensure(
        out.results["pole"] == serde_json::json!([24, 0, 0]) && g["positive"] == true && g["offset"] == 0.0,
        format!("min {} residual {} raw min {}", out.results["min"], g["residual"], g["raw_min"]),
    )
}

fn pseudoconformal_factors() -> Verdict {
    let h = heisenberg(1, 3.0, 9.0, &[]).map_err(fail)?;
    let lam = 1.7;
    let dil = SmoothMap::new("dilation", 3, move |x| vec![x[0] * lam, x[1] * lam, x[2] * (lam * lam)]);
    let x = [0.3, -0.2, 0.5];
    let (k, r) = pseudoconformal_factor(&dil, &h, &h, &x).map_err(fail)?;
    let dil_ok = (k - lam * lam).abs() <= 1e-12 && r <= 1e-12;

    let s = sphere(1, &SphereOptions { hopf_shape: [6, 7, 7], ..Default::default() }).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut checked) = (0.0f64, 0);
    for _ in 0..5 {
        let u = random_unitary(&mut rng, 2);
        for (c, p) in [(SphereChart::Hopf, vec![0.7, 1.0, 2.0]), (SphereChart::North, vec![0.1, 0.05, -0.1])] {
            let m = s.chart(c).map_err(fail)?;
            match pseudoconformal_factor(&sphere_rotation(c, u.clone()).map_err(fail)?, m, m, &p) {
                Ok((k, r)) => {
                    worst = worst.max((k - 1.0).abs()).max(r);
                    checked += 1;
                }
                Err(CrError::MapOutOfDomain(_)) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    let conj = SmoothMap::new("conjugation", 3, |x| vec![x[0], x[1] * -1.0, x[2]]);
    let rej = cr_automorphism_residual(&conj, &h, &x).map_err(fail)?;
    ensure(
        dil_ok && checked >= 5 && worst <= 1e-9 && rej > 0.5,
        format!("dilation factor {k} residual {r}; {checked} rotations within {worst:.1e}; conjugation residual {rej:.3}"),
    )
}

fn energy_identity() -> Verdict {
    let bump = |x: &[Jet]| (x[0] * (2.0 * PI)).cos() * (x[1] * (2.0 * PI)).sin() * 0.3 + (x[1] * (4.0 * PI)).cos() * 0.1 + 1.0;
    let mut defects = Vec::new();
    let mut sym = 0.0f64;
    for k in [32, 48] {
        let op = CrLaplacian::assemble(&nilmanifold(1, 1.0, &[k, k, k]).map_err(fail)?).map_err(fail)?;
        let u = GridDensity::from_field(op.manifold(), &ScalarField::analytic(bump)).map_err(fail)?;
        defects.push(functional_a(&op, &u).map_err(fail)?.defect);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let a: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (ab, ba) = (op.inner(&a, &op.apply(&b)), op.inner(&op.apply(&a), &b));
        sym = sym.max((ab - ba).abs() / ab.abs().max(1.0));
    }
    ensure(
        defects[0] <= 1e-6 && defects[1] < defects[0] && sym <= 1e-8,
        format!("defect 32^3 {:.2e}, 48^3 {:.2e}; symmetry {sym:.1e}", defects[0], defects[1]),
    )
}

fn normal_coordinates_checks() -> Verdict {
    let h = heisenberg(1, 2.0, 4.0, &[]).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact = true;
    for _ in 0..100 {
        let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = normal_coordinates(&h, &xi).map_err(fail)?.forward(&eta).map_err(fail)?;
        let q = normal_coordinates(&h, &eta).map_err(fail)?.forward(&xi).map_err(fail)?;
        exact &= p.iter().zip(&q).all(|(a, b)| *a == -*b);
    }
    let s = sphere(1, &SphereOptions { hopf_shape: [4, 5, 5], ..Default::default() }).map_err(fail)?;
    let o = expansion_orders(&normal_coordinates(&s.north, &[0.3, -0.2, 0.4]).map_err(fail)?, &[0.08, 0.04, 0.02, 0.01]).map_err(fail)?;
    let (dt, dz) = (o.dt_slope.unwrap_or(0.0), o.dz_slope.unwrap_or(0.0));
    ensure(exact && dt >= 0.9 && dz >= 1.9, format!("antisymmetry exact: {exact}; slopes t {dt:.3} (>= 0.9), z {dz:.3} (>= 1.9)"))
}

fn deformation_stability() -> Verdict {
    let out = run_task(&ExperimentConfig::default_for(Task::Deform))?;
    let probe: Vec<f64> = out.records.iter().filter(|r| r.name.contains("probe_change")).map(|r| r.value).collect();
    let linear: Vec<f64> = out.records.iter().filter(|r| r.name.contains("linearity")).map(|r| r.value).collect();
    ensure(probe.len() == 2 && !linear.is_empty(), format!("probe changes {probe:?}; linearity defects {linear:?}"))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(fail)?;
    let mut outputs = Vec::new();
    for task in ["norms", "conformal-check"] {
        for run in 0..2 {
            let out = dir.path().join(format!("{task}-{run}"));
            let o = Command::new(env!("CARGO_BIN_EXE_crkit"))
                .args(["--task", task, "--seed", "7", "--out", out.to_str().unwrap()])
                .output()
                .map_err(fail)?;
            if !o.status.success() {
                return Err(format!("{task}: {}", String::from_utf8_lossy(&o.stderr)));
            }
            outputs.push((task, o.stdout, std::fs::read(out.join("summary.json")).map_err(fail)?));
        }
    }
    let same = outputs.chunks(2).all(|p| p[0].1 == p[1].1 && p[0].2 == p[1].2 && p[0].1 == p[0].2);
    ensure(same, format!("{} runs, summaries byte-identical: {same}", outputs.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("flat-model certificate", flat_certificate),
        ("transformation laws", transformation_laws),
        ("Yamabe critical points", yamabe_critical_points),
        ("uniqueness up to scale", uniqueness),
        ("Green function", green_function),
        ("pseudoconformal factors", pseudoconformal_factors),
        ("energy identity and symmetry", energy_identity),
        ("normal coordinates", normal_coordinates_checks),
        ("deformation stability", deformation_stability),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    println!();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1} s]", k + 1),
            Err(d) => {
                println!("FAIL {:>2} {name}: {d} [{secs:.1} s]", k + 1);
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
