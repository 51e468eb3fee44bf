use std::sync::OnceLock;

use pmp_stab_core::expr::parse;
use pmp_stab_core::manifold::{build_manifold, ManifoldOptions};
use pmp_stab_core::observer::*;
use pmp_stab_core::simulate::{simulate_closed_loop, SimOptions};
use pmp_stab_core::synthesis::{assemble_feedback, FeedbackLaw};
use pmp_stab_core::systems::{ControlSet, ControlSystem, LyapunovSpec};
use proptest::prelude::*;

fn pendulum() -> Manipulator {
    let e = |s: &str| parse(s, 2, 0).unwrap();
    let sys = ControlSystem::affine(vec![e("x2"), e("-sin(x1)")], vec![vec![e("0"), e("1")]], ControlSet::unit_box(1), true)
        .unwrap();
    Manipulator::new(sys).unwrap()
}

fn law() -> &'static FeedbackLaw {
    static LAW: OnceLock<FeedbackLaw> = OnceLock::new();
    LAW.get_or_init(|| {
        let e = |s: &str| parse(s, 2, 0).unwrap();
        let p = pendulum();
        let lyap = LyapunovSpec::new(e("0.5*(x1^2+x2^2)"), 2, 0.5, 3.0).unwrap();
        let man = build_manifold(p.system(), &lyap, &ManifoldOptions::default()).unwrap();
        assemble_feedback(p.system(), &lyap, vec![e("sin(x1)-x1-x2")], man, Some(1.0), 1.0).unwrap()
    })
}

fn run(x0: [f64; 2], z0: [f64; 2]) -> OutputFeedbackRun {
    let g = select_gains(1.0).unwrap();
    simulate_output_feedback(&pendulum(), law(), g, x0, z0, &SimOptions::default()).unwrap()
}

#[test]
fn pendulum_output_feedback_converges() {
    let r = run([2.0, 0.0], [2.0, 1.0]);
    let m = covector_lipschitz(law()).unwrap();
    assert!(r.trajectory.converged());
    assert!(r.error_settles(1e-3).unwrap() <= 20.0);
    for w in r.errors.windows(2) {
        assert!(w[1].v_e <= w[0].v_e, "t {}", w[1].t);
    }
    for s in &r.mismatches {
        assert!(s.within_bound(m, 1.0), "{s:?}");
    }
}

#[test]
fn exact_estimate_keeps_zero_error() {
    let r = run([2.0, 0.0], [2.0, 0.0]);
    assert!(r.errors.iter().all(|s| s.e.e1 == 0.0 && s.e.e2 == 0.0));
    let full = simulate_closed_loop(pendulum().system(), law(), &[2.0, 0.0], &SimOptions::default()).unwrap();
    assert!(r.trajectory.converged() && full.converged());
    let (a, b) = (r.plant(), full);
    assert!(a.dim() == 2 && (a.t(a.len() - 1) - b.t(b.len() - 1)).abs() < 0.5);
}

fn eigen_min(a: f64, b: f64, c: f64) -> f64 {
    // smallest eigenvalue of [[a, b], [b, c]]
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn error_lyapunov_is_positive_definite(b1 in 1e-3f64..1e3, b2 in 1e-3f64..1e3) {
        let g = ObserverGains::new(b1, b2, 0.5, 1.0).unwrap();
        let a = error_lyapunov(&g, ErrorState { e1: 1.0, e2: 0.0 });
        let c = error_lyapunov(&g, ErrorState { e1: 0.0, e2: 1.0 });
        let off = 0.5 * (error_lyapunov(&g, ErrorState { e1: 1.0, e2: 1.0 }) - a - c);
        prop_assert!(a > 0.0 && a * c - off * off > 0.0);
        prop_assert!(eigen_min(a, off, c) > 0.0);
    }

    #[test]
    fn selected_gains_are_feasible(l in 0.0f64..1000.0) {
        let g = select_gains(l).unwrap();
        prop_assert!(g.e1_coefficient() <= -0.1);
        prop_assert!(g.e2_condition() <= -0.1);
        prop_assert!(g.e2_coefficient() <= -0.1);
        prop_assert_eq!(g, select_gains(l).unwrap());
    }

    #[test]
    fn rate_respects_the_quadratic_bound(x1 in -3.0f64..3.0, x2 in -3.0f64..3.0, e1 in -2.0f64..2.0, e2 in -2.0f64..2.0) {
        // f = -sin x1 - 0.5 sin x2 is 0.5-Lipschitz in x2
        let f = |a: f64, b: f64| -a.sin() - 0.5 * b.sin();
        let g = select_gains(0.5).unwrap();
        let e = ErrorState { e1, e2 };
        let df = f(x1, x2 + e2) - f(x1, x2);
        prop_assert!(error_rate(&g, e, df) <= error_rate_bound(&g, e) + 1e-6);
        prop_assert!(error_rate_bound(&g, e) <= 0.0);
    }
}
