//! Rayon drivers for the embarrassingly parallel parts: branch integration
//! and grid simulation. Results are always returned in input order, so the
//! thread count never changes the output.

use std::env;

use pmp_stab_core::manifold::{integrate_or_stub, prepare_seeds, LagrangianManifold, ManifoldError, ManifoldOptions};
use pmp_stab_core::simulate::{simulate_closed_loop, SimError, SimOptions, Trajectory};
use pmp_stab_core::synthesis::FeedbackLaw;
use pmp_stab_core::systems::{ControlSystem, LyapunovSpec};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "PMP_STAB_THREADS";

fn thread_cap() -> Option<usize> {
    env::var(THREADS_VAR).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// A pool honouring [`THREADS_VAR`]; rayon's default size otherwise.
pub fn pool() -> ThreadPool {
    let mut b = ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

/// Same result as `pmp_stab_core::manifold::build_manifold`, with branches
/// integrated concurrently.
pub fn build_manifold(
    sys: &ControlSystem,
    lyap: &LyapunovSpec,
    opts: &ManifoldOptions,
) -> Result<LagrangianManifold, ManifoldError> {
    opts.validate()?;
    let seeds = prepare_seeds(sys, lyap, opts)?;
    let branches = pool().install(|| seeds.par_iter().map(|s| integrate_or_stub(sys, s, opts)).collect());
    LagrangianManifold::assemble(sys, lyap.epsilon(), branches, opts)
}

/// Closed-loop runs from every initial state, in input order.
pub fn simulate_grid(law: &FeedbackLaw, points: &[Vec<f64>], opts: &SimOptions) -> Vec<Result<Trajectory, SimError>> {
    pool().install(|| points.par_iter().map(|x0| simulate_closed_loop(law.system(), law, x0, opts)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmp_stab_core::expr::parse;
    use pmp_stab_core::manifold::build_manifold as serial;
    use pmp_stab_core::systems::ControlSet;

    #[test]
    fn parallel_build_matches_serial() {
        let e = |s: &str| parse(s, 2, 0).unwrap();
        let sys = ControlSystem::affine(vec![e("x2"), e("0")], vec![vec![e("0"), e("1")]], ControlSet::unit_box(1), true)
            .unwrap();
        let lyap = LyapunovSpec::new(e("0.5*(x1^2+x2^2)"), 2, 0.5, 3.0).unwrap();
        let opts = ManifoldOptions { seeds: 16, tau_max: 2.0, ..Default::default() };
        let a = build_manifold(&sys, &lyap, &opts).unwrap();
        let b = serial(&sys, &lyap, &opts).unwrap();
        assert_eq!(a.branches(), b.branches());
    }
}
