use pmp_stab_core::expr::parse;
use pmp_stab_core::manifold::{integrate_bicharacteristic, run_flow, EventKind, ManifoldOptions, Seed};
use pmp_stab_core::hamiltonian::Direction;
use pmp_stab_core::systems::{ControlSet, ControlSystem};
use proptest::prelude::*;

fn system(drift: [&str; 2]) -> ControlSystem {
    let e = |s: &str| parse(s, 2, 0).unwrap();
    ControlSystem::affine(vec![e(drift[0]), e(drift[1])], vec![vec![e("0"), e("1")]], ControlSet::unit_box(1), true)
        .unwrap()
}

fn seed(psi: f64, scale: f64) -> Seed {
    let x0 = vec![psi.cos(), psi.sin()];
    Seed { psi, nu0: x0.iter().map(|v| scale * v).collect(), x0, v0: 0.5 }
}

fn opts(tau_max: f64) -> ManifoldOptions {
    ManifoldOptions { tau_max, ..ManifoldOptions::default() }
}

fn any_system() -> impl Strategy<Value = ControlSystem> {
    prop_oneof![Just(system(["x2", "0"])), Just(system(["x2", "-sin(x1)"]))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_the_covector_keeps_the_trajectory(sys in any_system(), psi in 0.0f64..std::f64::consts::TAU, lambda in 0.1f64..10.0) {
        let o = opts(3.0);
        let a = integrate_bicharacteristic(&sys, &seed(psi, 1.0), &o).unwrap();
        let b = integrate_bicharacteristic(&sys, &seed(psi, lambda), &o).unwrap();
        let sa: Vec<_> = a.events.iter().filter(|e| e.kind == EventKind::Switch).collect();
        let sb: Vec<_> = b.events.iter().filter(|e| e.kind == EventKind::Switch).collect();
        prop_assert_eq!(sa.len(), sb.len());
        for (p, q) in sa.iter().zip(&sb) {
            prop_assert!((p.tau - q.tau).abs() <= 1e-9);
            prop_assert!((p.x[0] - q.x[0]).abs() <= 1e-9 && (p.x[1] - q.x[1]).abs() <= 1e-9);
        }
        for j in 0..a.grid_len().min(b.grid_len()) {
            let (p, q) = (a.sample(a.grid_sample(j).unwrap()), b.sample(b.grid_sample(j).unwrap()));
            let scale = 1.0 + p.x[0].abs().max(p.x[1].abs());
            prop_assert!((p.x[0] - q.x[0]).abs() <= 1e-9 * scale && (p.x[1] - q.x[1]).abs() <= 1e-9 * scale, "x at {}", p.tau);
            for i in 0..2 {
                prop_assert!((lambda * p.nu[i] - q.nu[i]).abs() <= 1e-8 * lambda * (1.0 + p.nu[i].abs()));
            }
            prop_assert!((lambda * (p.w - 0.5) - (q.w - 0.5)).abs() <= 1e-8 * lambda * (1.0 + p.w.abs()));
        }
    }

    #[test]
    fn hamiltonian_is_conserved(sys in any_system(), psi in 0.0f64..std::f64::consts::TAU) {
        let br = integrate_bicharacteristic(&sys, &seed(psi, 1.0), &opts(10.0)).unwrap();
        let s0 = br.sample(0).s;
        for s in br.samples() {
            prop_assert!((s.s - s0).abs() <= 1e-7, "tau {} drift {}", s.tau, s.s - s0);
        }
    }

    #[test]
    fn switches_are_transversal(psi in 0.0f64..std::f64::consts::TAU) {
        let sys = system(["x2", "-sin(x1)"]);
        let br = integrate_bicharacteristic(&sys, &seed(psi, 1.0), &opts(10.0)).unwrap();
        for e in &br.events {
            prop_assert_eq!(e.kind, EventKind::Switch);
            prop_assert!(e.nu[1].abs() <= 1e-10);
            // <nu, ad_f b> = -nu1 for this system
            prop_assert!((e.transversality + e.nu[0]).abs() <= 1e-12 * (1.0 + e.nu[0].abs()));
            prop_assert!(e.transversality.abs() > 1e-8);
        }
    }

    #[test]
    fn forward_flow_returns_to_seed(sys in any_system(), psi in 0.0f64..std::f64::consts::TAU, frac in 0.0f64..1.0) {
        let o = opts(4.0);
        let s = seed(psi, 1.0);
        let br = integrate_bicharacteristic(&sys, &s, &o).unwrap();
        let i = ((br.len() - 1) as f64 * frac) as usize;
        let p = br.sample(i);
        let end = run_flow(&sys, p.x, p.nu, p.tau, Direction::Forward, &o).unwrap();
        for k in 0..2 {
            prop_assert!((end.x[k] - s.x0[k]).abs() <= 1e-6, "x {:?}", end.x);
            prop_assert!((end.nu[k] - s.nu0[k]).abs() <= 1e-6, "nu {:?}", end.nu);
        }
    }
}
