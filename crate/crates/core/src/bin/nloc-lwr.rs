use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nloc_lwr::cases::{region_map, SolverPolicy};
use nloc_lwr::flux::PiecewiseLinearFlux;
use nloc_lwr::monitor::validate_entropy;
use nloc_lwr::output::{output_dir, read_fronts, read_xi, write_region_map, write_run};
use nloc_lwr::scenario::{sec5_scenario, EngineSpec, Scenario};
use nloc_lwr::{Error, Result};

#[derive(Parser)]
#[command(name = "nloc-lwr", version, about = "Exact front tracking for LWR with a non-local exit constraint")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write its outputs.
    Run { scenario: PathBuf },
    /// Classify a grid of Riemann data at the exit.
    RegionMap {
        scenario: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Run the bundled corridor evacuation.
    Sec5 {
        #[arg(long, default_value_t = 12)]
        n_fan: u32,
        #[arg(long, default_value = "rq")]
        policy: SolverPolicy,
    },
    /// Re-check the fronts of a run directory.
    Validate { dir: PathBuf },
}

fn default_dir(name: &str) -> PathBuf {
    output_dir(Path::new("out").join(name))
}

fn run(sc: &Scenario) -> Result<bool> {
    sc.validate()?;
    let out = sc.run()?;
    let dir = default_dir(&sc.name);
    write_run(&dir, sc, &out)?;
    let traj = &out.trajectory;
    println!("{}: {} events, {} fronts, T = {}", sc.name, traj.events.len(), traj.paths.len(), traj.t_end);
    for c in &out.checks {
        println!("  {:<18} {}  worst {:.3e}", c.check, if c.pass { "pass" } else { "FAIL" }, c.worst_violation);
    }
    if let Some(ev) = &out.evacuation {
        match ev.time {
            Some(t) => println!("  evacuated at t = {t:.6}"),
            None => println!("  not evacuated by T, {:.6} left", ev.remaining_mass),
        }
    }
    if let Some(cp) = &out.corridor {
        let show = |name: &str, v: Option<f64>| match v {
            Some(v) => println!("  {name:<4} = {v:.6}"),
            None => println!("  {name:<4} = -"),
        };
        show("t_C", cp.t_c);
        show("t_D", cp.t_d);
        show("t_E", cp.t_e);
        show("x_M", cp.x_m);
        show("t_F", cp.t_f);
        show("x_O", cp.x_o);
        show("t_G", cp.t_g);
        show("t_H", cp.t_h);
        show("t_I", cp.t_i);
    }
    println!("  wrote {}", dir.display());
    Ok(out.checks.iter().all(|c| c.pass))
}

fn map(sc: &Scenario, grid: Option<usize>) -> Result<bool> {
    let n = grid.or(sc.output.grid).unwrap_or(201);
    if n < 2 {
        return Err(Error::InvalidInput(format!("grid must be at least 2, got {n}")));
    }
    sc.validate()?;
    let f = sc.flux.build()?;
    let p = sc.step_constraint()?;
    let cells = region_map(&f, &p, n);
    let dir = default_dir(&sc.name);
    write_region_map(&dir, &cells, n)?;
    let classical = cells.iter().filter(|c| c.label.is_classical()).count();
    let nonclassical = cells.iter().filter(|c| c.label.is_nonclassical()).count();
    println!("{n}x{n} grid: {classical} C, {nonclassical} N, {} other", cells.len() - classical - nonclassical);
    println!("  wrote {}", dir.display());
    Ok(true)
}

fn validate(dir: &Path) -> Result<bool> {
    let sc = Scenario::load(&dir.join("scenario.json"))?;
    let f = sc.flux.build()?;
    let fronts = read_fronts(&dir.join("fronts.csv"))?;
    let (mesh, levels) = match sc.engine {
        EngineSpec::Split { n, .. } => {
            let mut levels: Vec<f64> = read_xi(&dir.join("xi.csv"))?.iter().map(|s| s.q).collect();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            (PiecewiseLinearFlux::from_mesh(&f.mesh(n)?), levels)
        }
        EngineSpec::Exact { n_fan, .. } => {
            let p = sc.constraint.step()?;
            (PiecewiseLinearFlux::with_levels(&f, n_fan, p.values())?, p.values().to_vec())
        }
    };
    let rep = validate_entropy(&fronts, &mesh, &levels);
    println!("{} fronts: {}", fronts.len(), if rep.pass { "pass" } else { "FAIL" });
    for line in &rep.context {
        println!("  {line}");
    }
    Ok(rep.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Run { scenario } => Scenario::load(scenario).and_then(|sc| run(&sc)),
        Cmd::RegionMap { scenario, grid } => Scenario::load(scenario).and_then(|sc| map(&sc, *grid)),
        Cmd::Sec5 { n_fan, policy } => {
            let mut sc = sec5_scenario();
            sc.engine = EngineSpec::Exact { n_fan: *n_fan, policy: *policy };
            run(&sc).and_then(|ok| Ok(map(&sc, None)? && ok))
        }
        Cmd::Validate { dir } => validate(dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
