//! The work behind each subcommand, kept free of argument parsing so that
//! tests can drive it directly.

use std::f64::consts::{FRAC_PI_2, PI};

use pmp_stab_core::manifold::{Illumination, LagrangianManifold};
use pmp_stab_core::observer::{
    covector_lipschitz, hamiltonian_margin, simulate_output_feedback, Manipulator, ObserverGains, OutputFeedbackRun,
};
use pmp_stab_core::simulate::{Outcome, SimError, Trajectory};
use pmp_stab_core::synthesis::{assemble_feedback, distance_to_polyline, reference_switching_curve_with_radius, FeedbackLaw};

use crate::config::{Problem, RunConfig};
use crate::error::CliError;
use crate::io::{Arc, Table};
use crate::parallel;
use crate::svg::{Figure, Series};

/// Builds the manifold and the composite law.
pub fn synthesize(p: &Problem) -> Result<FeedbackLaw, CliError> {
    let man = parallel::build_manifold(&p.system, &p.lyapunov, &p.manifold).map_err(CliError::numerical)?;
    assemble_feedback(&p.system, &p.lyapunov, p.inner.clone(), man, p.amplitude, p.bound).map_err(CliError::numerical)
}

/// Distance of the reference switching curve to the computed one.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveComparison {
    pub radius: f64,
    pub taus: Vec<f64>,
    pub distances: Vec<f64>,
}

impl CurveComparison {
    pub fn max_deviation(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

/// `count` parameters spread evenly over both reference arcs, keeping
/// `margin` away from the asymptotes.
pub fn reference_taus(count: usize, margin: f64) -> Vec<f64> {
    let half = count / 2;
    let arc = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        if k < 2 {
            return vec![0.5 * (lo + hi); k];
        }
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    };
    let mut out = arc(FRAC_PI_2 + margin, PI - margin, count - half);
    out.extend(arc(1.5 * PI + margin, 2.0 * PI - margin, half));
    out
}

/// Mean seed radius; the reference curve assumes a circular level set.
pub fn seed_radius(man: &LagrangianManifold) -> f64 {
    let b = man.branches();
    b.iter().map(|br| br.seed.x0.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / b.len().max(1) as f64
}

/// Compares the computed switching curve of a planar manifold with the
/// closed-form double-integrator curve at `taus`.
pub fn compare_switching_curve(man: &LagrangianManifold, taus: &[f64]) -> Result<CurveComparison, CliError> {
    if man.dim() != 2 {
        return Err(CliError::validation("system.n", "the switching-curve comparison needs a planar system"));
    }
    let radius = seed_radius(man);
    let refs = reference_switching_curve_with_radius(radius, taus).map_err(CliError::numerical)?;
    let lines: Vec<Vec<[f64; 2]>> =
        man.switching_curve().iter().map(|c| c.iter().map(|p| [p.x[0], p.x[1]]).collect()).collect();
    let distances = refs
        .iter()
        .map(|r| lines.iter().map(|l| distance_to_polyline(&r.x, l)).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(CurveComparison { radius, taus: taus.to_vec(), distances })
}

/// Densely sampled reference arcs for export.
pub fn reference_arcs(radius: f64, per_arc: usize, margin: f64) -> Vec<Arc> {
    [(FRAC_PI_2, PI), (1.5 * PI, 2.0 * PI)]
        .iter()
        .map(|&(lo, hi)| {
            let taus: Vec<f64> = (0..per_arc)
                .map(|i| lo + margin + (hi - lo - 2.0 * margin) * i as f64 / (per_arc.max(2) - 1) as f64)
                .collect();
            let pts = reference_switching_curve_with_radius(radius, &taus).unwrap_or_default();
            taus.into_iter().zip(pts).map(|(t, p)| (t, p.x)).collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IlluminationCounts {
    pub inner: usize,
    pub illuminated: usize,
    pub dark: usize,
}

pub fn count_illumination(classes: &[Illumination]) -> IlluminationCounts {
    let mut c = IlluminationCounts::default();
    for k in classes {
        match k {
            Illumination::Inner => c.inner += 1,
            Illumination::Illuminated => c.illuminated += 1,
            Illumination::Dark => c.dark += 1,
        }
    }
    c
}

pub fn illuminate(p: &Problem, man: &LagrangianManifold) -> Result<Vec<Illumination>, CliError> {
    man.illumination_check(&p.lyapunov, &p.grid).map_err(CliError::numerical)
}

/// Integer code of an outcome in the grid summary.
pub fn outcome_code(o: &Outcome) -> i64 {
    match o {
        Outcome::Converged { .. } => 0,
        Outcome::Horizon => 1,
        Outcome::Diverged { .. } => 2,
        Outcome::Failed { .. } => 3,
    }
}

/// Per-run summary of a grid simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub x0: Vec<f64>,
    pub outcome: i64,
    pub t_end: f64,
    pub max_abs_u: f64,
}

impl RunSummary {
    pub fn of(x0: &[f64], r: &Result<Trajectory, SimError>) -> Self {
        match r {
            Ok(tr) => RunSummary {
                x0: x0.to_vec(),
                outcome: outcome_code(&tr.outcome),
                t_end: if tr.is_empty() { 0.0 } else { tr.t(tr.len() - 1) },
                max_abs_u: (0..tr.len()).flat_map(|i| tr.control(i).iter().map(|u| u.abs())).fold(0.0, f64::max),
            },
            Err(_) => RunSummary { x0: x0.to_vec(), outcome: 3, t_end: f64::NAN, max_abs_u: f64::NAN },
        }
    }
}

/// Output-feedback run plus the certificate quantities.
#[derive(Debug)]
pub struct ObserverReport {
    pub gains: ObserverGains,
    pub run: OutputFeedbackRun,
    /// Lipschitz estimate of the second covector component.
    pub slope: Option<f64>,
    /// Negated largest Hamiltonian value outside the sublevel set.
    pub margin: f64,
}

pub fn run_observer(cfg: &RunConfig, p: &Problem, law: &FeedbackLaw) -> Result<ObserverReport, CliError> {
    let o = cfg.observer.as_ref().ok_or_else(|| CliError::validation("observer", "missing observer block"))?;
    let gains = cfg.observer_gains()?.expect("observer block present");
    let plant = Manipulator::new(p.system.clone()).map_err(|e| CliError::validation("system", e))?;
    let run = simulate_output_feedback(&plant, law, gains, o.x0, o.z0, &p.simulation).map_err(CliError::numerical)?;
    let margin = hamiltonian_margin(law).map_err(CliError::numerical)?;
    Ok(ObserverReport { gains, run, slope: covector_lipschitz(law), margin })
}

/// Chooses the plotted columns: the named ones, else `x1`/`x2`, else the
/// first two.
fn axes(t: &Table, x: Option<&str>, y: Option<&str>) -> Result<(usize, usize), CliError> {
    let pick = |name: Option<&str>, fallback: &str, idx: usize| -> Result<usize, CliError> {
        match name {
            Some(n) => t.column(n).ok_or_else(|| CliError::validation("plot", format!("no column named {n}"))),
            None => t.column(fallback).or((idx < t.headers.len()).then_some(idx)).ok_or_else(|| {
                CliError::validation("plot", "the table needs at least two columns")
            }),
        }
    };
    Ok((pick(x, "x1", 0)?, pick(y, "x2", 1)?))
}

/// Turns an export into a figure. Rows are split into separate polylines
/// whenever the `curve` or `psi` column changes; rows with a nonzero
/// `event_flag` become markers, and a `class` column gives one scatter
/// series per class.
pub fn plot_table(t: &Table, x: Option<&str>, y: Option<&str>, title: &str) -> Result<Figure, CliError> {
    let (ix, iy) = axes(t, x, y)?;
    let mut fig = Figure { title: title.to_string(), x_label: t.headers[ix].clone(), y_label: t.headers[iy].clone(), series: vec![] };
    let pt = |r: &Vec<f64>| (r[ix], r[iy]);
    if let Some(ic) = t.column("class") {
        let mut classes: Vec<i64> = t.rows.iter().map(|r| r[ic] as i64).collect();
        classes.sort_unstable();
        classes.dedup();
        for c in classes {
            let markers = t.rows.iter().filter(|r| r[ic] as i64 == c).map(pt).collect();
            fig.series.push(Series { label: format!("class {c}"), line: vec![], markers });
        }
        return Ok(fig);
    }
    let group = t.column("curve").or_else(|| t.column("psi"));
    let flag = t.column("event_flag");
    let mut cur = Series::default();
    let mut key: Option<u64> = None;
    for r in &t.rows {
        if let Some(g) = group {
            let k = r[g].to_bits();
            if key.is_some_and(|old| old != k) && !cur.line.is_empty() {
                fig.series.push(std::mem::take(&mut cur));
            }
            if key != Some(k) {
                cur.label = format!("{} {}", t.headers[g], r[g]);
            }
            key = Some(k);
        }
        cur.line.push(pt(r));
        if flag.is_some_and(|f| r[f] != 0.0) {
            cur.markers.push(pt(r));
        }
    }
    if !cur.line.is_empty() {
        fig.series.push(cur);
    }
    Ok(fig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_taus_avoid_the_asymptotes() {
        let t = reference_taus(50, 0.05);
        assert_eq!(t.len(), 50);
        for &v in &t {
            let inside = (FRAC_PI_2 + 0.05 - 1e-12..=PI - 0.05 + 1e-12).contains(&v)
                || (1.5 * PI + 0.05 - 1e-12..=2.0 * PI - 0.05 + 1e-12).contains(&v);
            assert!(inside, "{v}");
        }
    }

    #[test]
    fn plot_splits_groups() {
        let t = Table {
            headers: vec!["curve".into(), "x1".into(), "x2".into()],
            rows: vec![vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 2.0], vec![1.0, 3.0, 2.0]],
        };
        let f = plot_table(&t, None, None, "").unwrap();
        assert_eq!(f.series.len(), 2);
        assert_eq!(f.series[1].line, vec![(2.0, 2.0), (3.0, 2.0)]);
        assert!(plot_table(&t, Some("nope"), None, "").is_err());
    }
}
