use super::*;
use crate::expr::parse;
use crate::systems::ControlSet;
use alloc::vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

fn system(drift: &[&str], b: &[&str]) -> ControlSystem {
    let n = drift.len();
    let e = |s: &&str| parse(s, n, 0).unwrap();
    ControlSystem::affine(drift.iter().map(e).collect(), vec![b.iter().map(e).collect()], ControlSet::unit_box(1), true)
        .unwrap()
}

fn double_integrator() -> ControlSystem {
    system(&["x2", "0"], &["0", "1"])
}

fn half_norm(epsilon: f64) -> LyapunovSpec {
    LyapunovSpec::new(parse("0.5*(x1^2+x2^2)", 2, 0).unwrap(), 2, epsilon, 3.0).unwrap()
}

fn seed_at(psi: f64) -> Seed {
    let x0 = vec![libm::cos(psi), libm::sin(psi)];
    Seed { psi, nu0: x0.clone(), x0, v0: 0.5 }
}

fn opts(tau_max: f64) -> ManifoldOptions {
    ManifoldOptions { tau_max, ..ManifoldOptions::default() }
}

#[test]
fn seeds_on_unit_circle() {
    let seeds = seed_manifold(&half_norm(0.5), 256).unwrap();
    assert_eq!(seeds.len(), 256);
    assert!((seeds[0].x0[0] - 1.0).abs() < 1e-11 && seeds[0].x0[1].abs() < 1e-12);
    assert_eq!(seeds[0].nu0, seeds[0].x0);
    let q = &seeds[64];
    assert!((q.psi - FRAC_PI_2).abs() < 1e-15);
    assert!(q.x0[0].abs() < 1e-11 && (q.x0[1] - 1.0).abs() < 1e-11);
    for w in seeds.windows(2) {
        assert!((w[1].psi - w[0].psi - 2.0 * PI / 256.0).abs() < 1e-14);
    }
    for s in &seeds {
        assert!((s.v0 - 0.5).abs() <= 1e-12);
    }
    assert!(matches!(seed_manifold(&half_norm(0.5), 4), Err(ManifoldError::TooFewSeeds { .. })));
}

#[test]
fn seed_radius_not_bracketed() {
    let lyap = LyapunovSpec::new(parse("x1^2+x2^2", 2, 0).unwrap(), 2, 1e13, 1.0).unwrap();
    assert!(matches!(seed_manifold(&lyap, 8), Err(ManifoldError::RootNotBracketed { .. })));
}

#[test]
fn switch_at_three_quarter_pi() {
    let br = integrate_bicharacteristic(&double_integrator(), &seed_at(3.0 * FRAC_PI_4), &opts(2.0)).unwrap();
    let sw: Vec<_> = br.events.iter().filter(|e| e.kind == EventKind::Switch).collect();
    assert_eq!(sw.len(), 1);
    let e = sw[0];
    assert!((e.tau - 1.0).abs() < 1e-9, "{}", e.tau);
    assert!((e.x[0] - (-1.914213562)).abs() < 1e-6 && (e.x[1] - 1.707106781).abs() < 1e-6);
    assert!(e.nu[1].abs() <= 1e-10);
    assert!(e.transversality.abs() > 1e-8);
    assert_eq!(br.sample(e.sample).u, &[1.0]);
}

#[test]
fn branch_at_zero_keeps_w_and_s() {
    let br = integrate_bicharacteristic(&double_integrator(), &seed_at(0.0), &opts(3.0)).unwrap();
    assert!(br.events.is_empty());
    for s in br.samples() {
        assert!((s.nu[0] - 1.0).abs() < 1e-12);
        assert!((s.nu[1] - s.tau).abs() < 1e-9);
        assert!(s.s.abs() < 1e-9);
        assert!((s.w - 0.5).abs() < 1e-9);
    }
    assert_eq!(br.grid_len(), 301);
    assert!((br.last_tau() - 3.0).abs() < 1e-12);
}

#[test]
fn branch_at_half_pi_never_switches() {
    let br = integrate_bicharacteristic(&double_integrator(), &seed_at(FRAC_PI_2), &opts(5.0)).unwrap();
    assert!(br.events.is_empty());
    assert!(br.samples().all(|s| (s.nu[1] - 1.0).abs() < 1e-12 && s.u == [-1.0]));
}

#[test]
fn hermite_state_matches_closed_form() {
    let sys = double_integrator();
    let br = integrate_bicharacteristic(&sys, &seed_at(FRAC_PI_2), &opts(2.0)).unwrap();
    // x2 = 1 + tau, x1 = -(tau + tau^2 / 2)
    let (x, nu) = br.state_at(&sys, 1.234567).unwrap();
    let t = 1.234567;
    assert!((x[1] - 1.0 - t).abs() < 1e-10 && (x[0] + t + 0.5 * t * t).abs() < 1e-10);
    assert!((nu[1] - 1.0).abs() < 1e-12);
    assert!(br.state_at(&sys, 2.5).is_err());
}

#[test]
fn manifold_smoke_and_switch_pattern() {
    let sys = double_integrator();
    let o = ManifoldOptions { seeds: 8, ..opts(3.0) };
    let man = build_manifold(&sys, &half_norm(0.5), &o).unwrap();
    assert_eq!(man.branches().len(), 8);
    for br in man.branches() {
        let has = br.events.iter().any(|e| e.kind == EventKind::Switch);
        let t = libm::tan(br.seed.psi);
        // tan psi < 0 switches at tau = -tan psi, if that is within range
        assert_eq!(has, t < -1e-9 && -t < 3.0, "psi {}", br.seed.psi);
    }
}

#[test]
fn queries_and_illumination() {
    let sys = double_integrator();
    let lyap = half_norm(0.5);
    let man = build_manifold(&sys, &lyap, &ManifoldOptions { seeds: 64, ..opts(10.0) }).unwrap();
    let id = SampleId { branch: 5, sample: 7 };
    let x = man.sample(id).x.to_vec();
    let hit = man.query(&x).unwrap();
    assert_eq!(hit.distance, 0.0);
    assert_eq!(hit.id, id);

    let sw = man.query(&[-1.914213562, 1.707106781]).unwrap();
    assert!(sw.nu[1].abs() <= 1e-6, "{:?}", sw);

    let res = man.illumination_check(&lyap, &[vec![0.0, 0.0], vec![3.0, 3.0], vec![100.0, 100.0]]).unwrap();
    assert_eq!(res, vec![Illumination::Inner, Illumination::Illuminated, Illumination::Dark]);

    let short = build_manifold(&sys, &lyap, &ManifoldOptions { seeds: 64, ..opts(0.1) }).unwrap();
    assert_eq!(short.illumination_check(&lyap, &[vec![3.0, 3.0]]).unwrap(), vec![Illumination::Dark]);
    assert!(matches!(short.query(&[100.0, 100.0]), Err(ManifoldError::NotCovered { .. })));
}

#[test]
fn mesh_interpolation_is_exact_at_vertices_and_inside() {
    let sys = double_integrator();
    let man = build_manifold(&sys, &half_norm(0.5), &ManifoldOptions { seeds: 64, ..opts(3.0) }).unwrap();
    let br = man.branch(10).unwrap();
    let s = br.sample(br.grid_sample(50).unwrap());
    let hit = man.interpolate(s.x).unwrap();
    assert!((hit.w - s.w).abs() < 1e-12);
    // a point between two grid samples of neighbouring branches
    let other = man.branch(11).unwrap();
    let t = other.sample(other.grid_sample(50).unwrap());
    let mid = [0.5 * (s.x[0] + t.x[0]), 0.5 * (s.x[1] + t.x[1])];
    let hit = man.interpolate(&mid).unwrap();
    assert!((hit.w - 0.5 * (s.w + t.w)).abs() < 1e-9);
    assert!(man.interpolate(&[0.1, 0.1]).is_none());
}

#[test]
fn jacobian_at_quarter_pi() {
    let sys = double_integrator();
    let man = build_manifold(&sys, &half_norm(0.5), &ManifoldOptions { seeds: 256, ..opts(1.0) }).unwrap();
    let det = man.jacobian_along(&sys, 32, 0.0).unwrap();
    let expected = -SQRT_2 / 2.0 * (1.0 - SQRT_2 / 2.0);
    assert!((det - expected).abs() < 1e-3, "{det} vs {expected}");
    assert!(det.abs() > 1e-6);
    assert!(man.jacobian_along(&sys, 32, 5.0).is_err());
}

#[test]
fn one_dimensional_integrator_has_no_switches() {
    let sys = system(&["0"], &["1"]);
    let lyap = LyapunovSpec::new(parse("0.5*x1^2", 1, 0).unwrap(), 1, 0.5, 2.0).unwrap();
    let man = build_manifold(&sys, &lyap, &opts(2.0)).unwrap();
    assert_eq!(man.branches().len(), 2);
    assert!(man.switching_curve().is_empty());
    assert!(man.branches().iter().all(|b| b.events.is_empty()));
    assert!(man.query(&[1.5]).is_ok() && man.query(&[-2.5]).is_ok());
}

#[test]
fn switching_curve_sits_in_second_and_fourth_quadrants() {
    let sys = double_integrator();
    let lyap = LyapunovSpec::new(parse("0.5*(x1^2+x2^2)", 2, 0).unwrap(), 2, 1.0, 3.0).unwrap();
    let man = build_manifold(&sys, &lyap, &ManifoldOptions { seeds: 64, ..opts(10.0) }).unwrap();
    let curves = man.switching_curve();
    assert_eq!(curves.len(), 2);
    for p in curves.iter().flatten() {
        let q = p.psi;
        assert!((q > FRAC_PI_2 && q < PI) || (q > 3.0 * FRAC_PI_2 && q < 2.0 * PI), "{q}");
    }
}

#[test]
fn reversal_returns_to_seed() {
    let sys = double_integrator();
    let o = ManifoldOptions { seeds: 16, ..opts(3.0) };
    let man = build_manifold(&sys, &half_norm(0.5), &o).unwrap();
    for b in [3usize, 6, 13] {
        let br = man.branch(b).unwrap();
        let id = SampleId { branch: b as u32, sample: (br.len() - 1) as u32 };
        let d = man.reversal_defect(&sys, id, &o).unwrap();
        assert!(d < 1e-6, "branch {b}: {d}");
    }
}

#[test]
fn too_many_failures_is_an_error() {
    let sys = double_integrator();
    let o = opts(1.0);
    let seeds = seed_manifold(&half_norm(0.5), 8).unwrap();
    let branches: Vec<_> = seeds
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if k < 5 {
                Bicharacteristic::failed(s.clone(), 1, ManifoldError::StepUnderflow { tau: 0.0 })
            } else {
                integrate_or_stub(&sys, s, &o)
            }
        })
        .collect();
    assert!(matches!(
        LagrangianManifold::assemble(&sys, 0.5, branches, &o),
        Err(ManifoldError::TooManyFailures { failed: 5, total: 8, .. })
    ));
}

