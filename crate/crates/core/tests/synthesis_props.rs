use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use pmp_stab_core::expr::parse;
use pmp_stab_core::hamiltonian::hamiltonian_value;
use pmp_stab_core::manifold::{build_manifold, ManifoldOptions};
use pmp_stab_core::synthesis::{assemble_feedback, reference_switching_curve, FeedbackLaw, SynthesisError};
use pmp_stab_core::systems::{ControlSet, ControlSystem, LyapunovSpec};
use proptest::prelude::*;

fn law() -> &'static FeedbackLaw {
    static LAW: OnceLock<FeedbackLaw> = OnceLock::new();
    LAW.get_or_init(|| {
        let e = |s: &str| parse(s, 2, 0).unwrap();
        let sys = ControlSystem::affine(vec![e("x2"), e("0")], vec![vec![e("0"), e("1")]], ControlSet::unit_box(1), true)
            .unwrap();
        let lyap = LyapunovSpec::new(e("0.5*(x1^2+x2^2)"), 2, 0.5, 3.0).unwrap();
        let man = build_manifold(&sys, &lyap, &ManifoldOptions { tau_max: 15.0, ..Default::default() }).unwrap();
        assemble_feedback(&sys, &lyap, vec![e("-(abs(x1+x2+1)-abs(x1+x2-1))/2")], man, Some(1.0), 1.0).unwrap()
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn branch_tau() -> impl Strategy<Value = f64> {
    prop_oneof![FRAC_PI_2 + 0.05..PI - 1e-6, 3.0 * FRAC_PI_2 + 0.05..2.0 * PI - 1e-6]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reference_curve_is_point_symmetric(tau in branch_tau()) {
        let other = if tau < PI { tau + PI } else { tau - PI };
        let p = reference_switching_curve(&[tau, other]).unwrap();
        let scale = 1.0 + p[0].x[0].abs() + p[0].x[1].abs();
        prop_assert!((p[0].x[0] + p[1].x[0]).abs() <= 1e-12 * scale);
        prop_assert!((p[0].x[1] + p[1].x[1]).abs() <= 1e-12 * scale);
    }

    #[test]
    fn eval_is_deterministic(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0) {
        let x = [x1, x2];
        let a = law().eval(&x);
        let b = law().eval(&x);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn outer_control_attains_the_hamiltonian_minimum(x1 in -4.0f64..4.0, x2 in -4.0f64..4.0) {
        let law = law();
        let x = [x1, x2];
        prop_assume!(!law.is_inner(&x).unwrap());
        let q = match law.outer_covector(&x) {
            Ok(q) => q,
            Err(SynthesisError::Manifold(_)) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let u = law.eval(&x).unwrap();
        let sys = law.system();
        let f = sys.eval_dynamics(0.0, &x, &u).unwrap();
        let best = hamiltonian_value(sys, 0.0, &x, &q.nu, &Default::default()).unwrap();
        prop_assert!((dot(&q.nu, &f) - best).abs() <= 1e-9 * (1.0 + best.abs()), "{} vs {}", dot(&q.nu, &f), best);
        prop_assert!(u[0].abs() <= law.bound());
    }

    #[test]
    fn inner_law_inside_disk(r in 0.0f64..0.999, a in 0.0f64..2.0 * PI) {
        let x = [r * a.cos(), r * a.sin()];
        let u = law().eval(&x).unwrap()[0];
        let s = x[0] + x[1];
        prop_assert!((u + s.clamp(-1.0, 1.0)).abs() <= 1e-12);
    }
}
