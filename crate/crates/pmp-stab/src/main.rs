use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmp_stab::commands::{self, RunSummary};
use pmp_stab::io::{self, num, to_file};
use pmp_stab::svg;
use pmp_stab::{load_config, CliError, Problem, RunConfig};

#[derive(Parser)]
#[command(name = "pmp-stab", version, about = "Synthesize and check stabilizing feedback laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `manifold.tau_max`.
    #[arg(long)]
    tau_max: Option<f64>,
    /// Overrides `manifold.seeds`.
    #[arg(long)]
    seeds: Option<usize>,
    /// Do not echo the resolved configuration on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the manifold and write it.
    Synthesize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the law file (manifold plus header block).
        #[arg(long)]
        law: Option<PathBuf>,
    },
    /// Closed-loop simulation from one state or the configured grid.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "grid", required_unless_present = "grid")]
        x0: Option<Vec<f64>>,
        /// Run every point of `simulation.grid`.
        #[arg(long)]
        grid: bool,
        /// Trajectory file, or a directory with `--grid`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the computed and reference switching curves.
    SwitchingCurve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Print the largest distance from the reference curve.
        #[arg(long)]
        compare: bool,
    },
    /// Classify the grid as inner, illuminated or dark.
    Illuminate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gain selection and an output-feedback run.
    Observer {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Error log.
        #[arg(long)]
        out: PathBuf,
        /// Also write the coupled plant and estimator trajectory.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Render an exported CSV file as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

fn prepare(a: &ConfigArgs) -> Result<(RunConfig, Problem), CliError> {
    let mut cfg = load_config(&a.config)?;
    if let Some(t) = a.tau_max {
        cfg.manifold.tau_max = t;
    }
    if let Some(s) = a.seeds {
        cfg.manifold.seeds = s;
    }
    let p = cfg.build()?;
    if !a.quiet {
        eprintln!("{}", cfg.echo());
    }
    Ok((cfg, p))
}

fn print(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn simulate_one(p: &Problem, x0: &[f64], out: &Path) -> Result<(), CliError> {
    let law = commands::synthesize(p)?;
    let r = pmp_stab::parallel::simulate_grid(&law, &[x0.to_vec()], &p.simulation).remove(0);
    let tr = r.map_err(CliError::numerical)?;
    to_file(out, |w| io::write_trajectory(w, &tr))?;
    let s = RunSummary::of(x0, &Ok(tr.clone()));
    let last = tr.last_state().map_or(f64::NAN, |x| x.iter().map(|v| v * v).sum::<f64>().sqrt());
    print(format!("outcome={} t_end={} final_norm={} max_abs_u={}", s.outcome, num(s.t_end), num(last), num(s.max_abs_u)));
    if !tr.converged() {
        return Err(CliError::numerical(format!("no convergence: {:?}", tr.outcome)));
    }
    Ok(())
}

fn simulate_grid(p: &Problem, dir: &Path) -> Result<(), CliError> {
    let law = commands::synthesize(p)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let runs = pmp_stab::parallel::simulate_grid(&law, &p.grid, &p.simulation);
    let summaries: Vec<RunSummary> = p.grid.iter().zip(&runs).map(|(x, r)| RunSummary::of(x, r)).collect();
    for (i, r) in runs.iter().enumerate() {
        if let Ok(tr) = r {
            to_file(&dir.join(format!("traj_{i:04}.csv")), |w| io::write_trajectory(w, tr))?;
        }
    }
    to_file(&dir.join("summary.csv"), |w| {
        let n = p.system.n();
        let head: Vec<String> = (1..=n).map(|i| format!("x0_{i}")).collect();
        writeln!(w, "index,{},outcome,t_end,max_abs_u", head.join(","))?;
        for (i, s) in summaries.iter().enumerate() {
            let x: Vec<String> = s.x0.iter().map(|&v| num(v)).collect();
            writeln!(w, "{i},{},{},{},{}", x.join(","), s.outcome, num(s.t_end), num(s.max_abs_u))?;
        }
        Ok(())
    })?;
    let failed = summaries.iter().filter(|s| s.outcome != 0).count();
    print(format!("runs={} converged={} not_converged={failed}", summaries.len(), summaries.len() - failed));
    if failed > 0 {
        return Err(CliError::numerical(format!("{failed} runs did not converge")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synthesize { cfg, out, law } => {
            let (_, p) = prepare(&cfg)?;
            let l = commands::synthesize(&p)?;
            let m = l.manifold();
            to_file(&out, |w| io::write_manifold(w, m))?;
            if let Some(path) = law {
                to_file(&path, |w| io::write_law(w, &l))?;
            }
            print(format!(
                "branches={} failed={} samples={} query_radius={}",
                m.branches().len(),
                m.failed_branches(),
                m.sample_count(),
                num(m.query_radius())
            ));
        }
        Command::Simulate { cfg, x0, grid, out } => {
            let (_, p) = prepare(&cfg)?;
            match x0 {
                Some(x0) if !grid => {
                    if x0.len() != p.system.n() {
                        return Err(CliError::validation("x0", format!("expected {} components", p.system.n())));
                    }
                    simulate_one(&p, &x0, &out)?;
                }
                _ => simulate_grid(&p, &out)?,
            }
        }
        Command::SwitchingCurve { cfg, out, compare } => {
            let (_, p) = prepare(&cfg)?;
            if p.system.n() != 2 {
                return Err(CliError::validation("system.n", "switching curves need a planar system"));
            }
            let man = pmp_stab::parallel::build_manifold(&p.system, &p.lyapunov, &p.manifold)
                .map_err(CliError::numerical)?;
            let curves = man.switching_curve();
            let arcs = commands::reference_arcs(commands::seed_radius(&man), 200, 0.05);
            to_file(&out, |w| io::write_switching_curves(w, &curves, &arcs))?;
            let events: usize = curves.iter().map(Vec::len).sum();
            print(format!("curves={} events={events}", curves.len()));
            if compare {
                let c = commands::compare_switching_curve(&man, &commands::reference_taus(50, 0.05))?;
                print(format!("max_deviation={}", num(c.max_deviation())));
            }
        }
        Command::Illuminate { cfg, out } => {
            let (_, p) = prepare(&cfg)?;
            let man = pmp_stab::parallel::build_manifold(&p.system, &p.lyapunov, &p.manifold)
                .map_err(CliError::numerical)?;
            let classes = commands::illuminate(&p, &man)?;
            to_file(&out, |w| io::write_illumination(w, &p.grid, &classes))?;
            let c = commands::count_illumination(&classes);
            print(format!("inner={} illuminated={} dark={}", c.inner, c.illuminated, c.dark));
        }
        Command::Observer { cfg, out, trajectory } => {
            let (rc, p) = prepare(&cfg)?;
            if rc.observer.is_none() {
                return Err(CliError::validation("observer", "missing observer block"));
            }
            let law = commands::synthesize(&p)?;
            let r = commands::run_observer(&rc, &p, &law)?;
            to_file(&out, |w| io::write_error_log(w, &r.run.errors))?;
            if let Some(path) = trajectory {
                to_file(&path, |w| io::write_trajectory(w, &r.run.trajectory))?;
            }
            let g = &r.gains;
            let settle = r.run.error_settles(1e-3).map_or("none".to_string(), num);
            print(format!(
                "beta1={} beta2={} delta={} slope={} margin={} error_settles={settle} converged={} mismatches={}",
                num(g.beta1),
                num(g.beta2),
                num(g.delta),
                r.slope.map_or("none".to_string(), num),
                num(r.margin),
                r.run.trajectory.converged(),
                r.run.mismatches.len()
            ));
            if !r.run.trajectory.converged() {
                return Err(CliError::numerical(format!("no convergence: {:?}", r.run.trajectory.outcome)));
            }
        }
        Command::Plot { input, out, x, y, title } => {
            let t = io::read_table(&input)?;
            let fig = commands::plot_table(&t, x.as_deref(), y.as_deref(), &title)?;
            fs::write(&out, svg::render(&fig)).map_err(|e| CliError::io(&out, e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            eprintln!("error=usage message={msg:?}");
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
