use std::sync::OnceLock;

use pmp_stab_core::expr::parse;
use pmp_stab_core::manifold::{build_manifold, ManifoldOptions};
use pmp_stab_core::simulate::{simulate_closed_loop, ExprFeedback, Outcome, SimEventKind, SimOptions, Trajectory};
use pmp_stab_core::synthesis::{assemble_feedback, FeedbackLaw};
use pmp_stab_core::systems::{ControlSet, ControlSystem, LyapunovSpec};
use proptest::prelude::*;

fn double_integrator() -> ControlSystem {
    let e = |s: &str| parse(s, 2, 0).unwrap();
    ControlSystem::affine(vec![e("x2"), e("0")], vec![vec![e("0"), e("1")]], ControlSet::unit_box(1), true).unwrap()
}

fn law() -> &'static FeedbackLaw {
    static LAW: OnceLock<FeedbackLaw> = OnceLock::new();
    LAW.get_or_init(|| {
        let e = |s: &str| parse(s, 2, 0).unwrap();
        let sys = double_integrator();
        let lyap = LyapunovSpec::new(e("0.5*(x1^2+x2^2)"), 2, 0.5, 3.0).unwrap();
        let man = build_manifold(&sys, &lyap, &ManifoldOptions { tau_max: 15.0, ..Default::default() }).unwrap();
        assemble_feedback(&sys, &lyap, vec![e("-(abs(x1+x2+1)-abs(x1+x2-1))/2")], man, Some(1.0), 1.0).unwrap()
    })
}

fn run(x0: [f64; 2]) -> Trajectory {
    simulate_closed_loop(law().system(), law(), &x0, &SimOptions::default()).unwrap()
}

fn outside(x: &[f64]) -> bool {
    0.5 * (x[0] * x[0] + x[1] * x[1]) > 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn converges_with_bounded_control(x1 in -4.0f64..4.0, x2 in -4.0f64..4.0) {
        let tr = run([x1, x2]);
        prop_assert!(matches!(tr.outcome, Outcome::Converged { .. }), "{:?}", tr.outcome);
        for i in 0..tr.len() {
            prop_assert!(tr.control(i)[0].abs() <= 1.0 + 1e-12);
        }
        prop_assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn runs_are_bit_identical(x1 in -4.0f64..4.0, x2 in -4.0f64..4.0) {
        prop_assert_eq!(run([x1, x2]), run([x1, x2]));
    }

    #[test]
    fn bang_bang_arcs_are_parabolas(x1 in -4.0f64..4.0, x2 in -4.0f64..4.0) {
        // x2^2/2 - u x1 is a first integral while u = +-1 is held
        let tr = run([x1, x2]);
        let energy = |i: usize| {
            let (x, u) = (tr.state(i), tr.control(i)[0]);
            0.5 * x[1] * x[1] - u * x[0]
        };
        let mut start = 0;
        for i in 1..tr.len() {
            let held = tr.flag(i) == 0 && tr.control(i) == tr.control(start) && outside(tr.state(i));
            if !held || !outside(tr.state(start)) || tr.control(start)[0].abs() != 1.0 {
                start = i;
                continue;
            }
            prop_assert!((energy(i) - energy(start)).abs() <= 1e-7, "t {}", tr.t(i));
        }
    }

    #[test]
    fn sliding_stays_on_the_line(x1 in -0.8f64..0.8, x2 in -0.5f64..0.5) {
        // u = -sign(x1 + x2) slides on x1 + x2 = 0 where |x2| < 1
        let e = |s: &str| parse(s, 2, 0).unwrap();
        let l = ExprFeedback::new(vec![e("-sign(x1+x2)")], 2);
        let o = SimOptions { t_max: 8.0, ..Default::default() };
        let tr = simulate_closed_loop(&double_integrator(), &l, &[x1, x2], &o).unwrap();
        if let Some(enter) = tr.events.iter().find(|e| e.kind == SimEventKind::SlidingEnter) {
            for i in enter.sample..tr.len() {
                let x = tr.state(i);
                prop_assert!((x[1] + tr.control(i)[0]).abs() <= 1e-6);
                prop_assert!(tr.control(i)[0].abs() <= 1.0);
            }
        }
    }
}

#[test]
fn single_switch_from_three_three() {
    let tr = run([3.0, 3.0]);
    assert!(tr.converged());
    let outer: Vec<f64> = (0..tr.len()).filter(|&i| outside(tr.state(i))).map(|i| tr.control(i)[0]).collect();
    let changes = outer.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(changes, 1, "{outer:?}");
    assert_eq!(outer[0], -1.0);
}

#[test]
fn inner_law_never_increases_v() {
    let tr = run([0.6, 0.8]);
    assert!(tr.converged());
    let v = |i: usize| 0.5 * (tr.state(i)[0].powi(2) + tr.state(i)[1].powi(2));
    for i in 1..tr.len() {
        assert!(v(i) <= v(i - 1) + 1e-9, "t {}", tr.t(i));
    }
}
