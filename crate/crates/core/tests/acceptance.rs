//! Acceptance criteria, one pass/fail line each. Runs under `cargo test`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{random_constraint, random_datum, random_flux, random_weight, rng, Rng64};
use nloc_lwr::cases::{
    enumerate_local_solutions, region_map, solve_rp, solve_rq, CaseLabel, LocalSolution, SideValues, SolverPolicy,
};
use nloc_lwr::constraint::StepConstraint;
use nloc_lwr::exact::{corridor_points, run_exact, CorridorPoints, ExactConfig};
use nloc_lwr::flux::{BellFlux, FluxModel, PiecewiseLinearFlux};
use nloc_lwr::monitor::{
    check_conservation, check_efficiency_jumps, check_exit_level, check_temple_monotone, check_tv_bound,
    stability_pair, validate_entropy, CheckReport,
};
use nloc_lwr::profile::DensityProfile;
use nloc_lwr::riemann::constrained_local_riemann;
use nloc_lwr::scenario::sec5_scenario;
use nloc_lwr::split::{compute_dt, run_splitting, SplitConfig};
use nloc_lwr::tracker::FrontPath;
use nloc_lwr::trajectory::Trajectory;
use rand::Rng;

struct Outcome {
    pass: bool,
    summary: String,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self { pass, summary: summary.into() }
    }
}

/// Reports accumulated over several runs of one check.
#[derive(Default)]
struct Tally {
    violations: usize,
    worst: f64,
    first: Option<String>,
}

impl Tally {
    fn add(&mut self, run: usize, rep: &CheckReport) {
        if !rep.pass {
            self.violations += rep.context.len().max(1);
            self.worst = self.worst.max(rep.worst_violation);
            if self.first.is_none() {
                self.first = Some(format!("run {run}: {}", rep.context.first().cloned().unwrap_or_default()));
            }
        }
    }

    fn outcome(&self, what: &str) -> Outcome {
        match &self.first {
            None => Outcome::new(true, format!("{what}: 0 violations")),
            Some(first) => Outcome::new(
                false,
                format!("{what}: {} violations, worst {:.3e}, first at {first}", self.violations, self.worst),
            ),
        }
    }
}

fn sec5_run(n_fan: u32) -> (Trajectory, CorridorPoints, f64) {
    let sc = sec5_scenario();
    let f = sc.flux.build().unwrap();
    let w = sc.weight.build().unwrap();
    let p = sc.constraint.step().unwrap();
    let start = Instant::now();
    let traj =
        run_exact(&sc.initial().unwrap(), &f, &w, &p, &ExactConfig::new(n_fan, sc.t_end, SolverPolicy::Rq)).unwrap();
    let cp = corridor_points(&traj, &f, &w, &p).unwrap();
    (traj, cp, start.elapsed().as_secs_f64())
}

fn criterion_1(sec5: &[(u32, Trajectory, CorridorPoints, f64)]) -> Outcome {
    let (_, _, cp, secs) = sec5.iter().find(|r| r.0 == 12).expect("n_fan = 12 run");
    let mut fails = Vec::new();
    let mut check = |name: &str, v: Option<f64>, ok: &dyn Fn(f64) -> bool| match v {
        Some(v) if ok(v) => {}
        Some(v) => fails.push(format!("{name} = {v}")),
        None => fails.push(format!("{name} missing")),
    };
    check("t_C", cp.t_c, &|v| (v - 2.0).abs() <= 1e-6);
    check("t_D", cp.t_d, &|v| (v - 5.0).abs() <= 5e-3);
    check("t_E", cp.t_e, &|v| (v - 9.651).abs() <= 0.01 * 9.651);
    check("t_G", cp.t_g, &|v| (v - 85.045).abs() <= 0.01 * 85.045);
    check("t_I", cp.t_i, &|v| (v - 87.498).abs() <= 0.01 * 87.498);
    check("x_M", cp.x_m, &|v| (v + 0.4002).abs() <= 5e-3);
    if *secs >= 10.0 {
        fails.push(format!("runtime {secs:.2} s"));
    }
    let errors: Vec<f64> = sec5.iter().map(|r| r.2.t_i.map_or(f64::INFINITY, |t| (t - 87.498).abs())).collect();
    if !errors.windows(2).all(|e| e[1] < e[0]) {
        fails.push(format!("|t_I - 87.498| not decreasing over n_fan: {errors:?}"));
    }
    for (name, ok) in &cp.assumptions {
        if !ok {
            fails.push(format!("assumption '{name}' fails"));
        }
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    let trend: Vec<String> = sec5.iter().map(|r| format!("{}:{}", r.0, fmt(r.2.t_i))).collect();
    let summary = format!(
        "t_C {} (front {}), t_D {}, t_E {}, x_M {}, t_G {}, t_I {}, {secs:.2} s; t_I by n_fan [{}]",
        fmt(cp.t_c),
        fmt(cp.t_c_front),
        fmt(cp.t_d),
        fmt(cp.t_e),
        fmt(cp.x_m),
        fmt(cp.t_g),
        fmt(cp.t_i),
        trend.join(", ")
    );
    if fails.is_empty() {
        Outcome::new(true, summary)
    } else {
        Outcome::new(false, format!("{summary}; {}", fails.join("; ")))
    }
}

struct SplitSample {
    traj: Trajectory,
}

fn random_split_run(rng: &mut Rng64) -> SplitSample {
    let f = random_flux(rng);
    let w = random_weight(rng);
    let p = random_constraint(rng, &f);
    let rho0 = random_datum(rng, f.max_density());
    let n = rng.gen_range(5..=8);
    let h = rng.gen_range(1..=3.min(n - 1));
    let dt = compute_dt(h, &w, p.lip()).unwrap();
    let traj = run_splitting(&rho0, &f, &w, &p, &SplitConfig::new(n, h, 20.0 * dt)).unwrap();
    SplitSample { traj }
}

/// Levels differ by exactly zero or one lattice step `2^{-h} f(rho_bar)`.
fn exact_level_steps(traj: &Trajectory) -> CheckReport {
    let meta = traj.split.expect("split run");
    let step = meta.f_bar / (1u64 << meta.h) as f64;
    let mut rep = CheckReport { check: "level_steps".into(), pass: true, worst_violation: 0.0, context: Vec::new() };
    for s in traj.steps.windows(2) {
        let d = (s[1].q - s[0].q).abs();
        if d != 0.0 && d != step {
            rep.pass = false;
            rep.worst_violation = rep.worst_violation.max((d - step).abs());
            rep.context.push(format!("step {}: level jump {d} vs {step}", s[1].ell));
        }
    }
    rep
}

fn criterion_2(runs: &[SplitSample]) -> Outcome {
    let mut tally = Tally::default();
    for (i, r) in runs.iter().enumerate() {
        tally.add(i, &check_efficiency_jumps(&r.traj));
        tally.add(i, &exact_level_steps(&r.traj));
    }
    tally.outcome(&format!("{} split runs, jumps and xi drift", runs.len()))
}

fn criterion_3(runs: &[SplitSample]) -> Outcome {
    let mut tally = Tally::default();
    let mut events = 0;
    for (i, r) in runs.iter().enumerate() {
        events += r.traj.events.len();
        tally.add(i, &check_temple_monotone(&r.traj));
    }
    tally.outcome(&format!("{events} logged interactions"))
}

fn criterion_4(runs: &[SplitSample]) -> Outcome {
    let mut tally = Tally::default();
    let mut instants = 0;
    for (i, r) in runs.iter().enumerate() {
        instants += r.traj.temple.len();
        tally.add(i, &check_tv_bound(&r.traj));
    }
    tally.outcome(&format!("{instants} logged instants"))
}

fn perturb(rng: &mut Rng64, rho0: &DensityProfile, r: f64) -> DensityProfile {
    let mut values = rho0.values().to_vec();
    for v in values.iter_mut().filter(|v| **v > 0.0) {
        *v = (*v + rng.gen_range(-0.1..0.1) * r).clamp(0.0, r);
    }
    let bps: Vec<f64> = rho0.breakpoints().iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
    let mut sorted = bps.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted != bps || sorted.windows(2).any(|p| p[0] == p[1]) || sorted.contains(&0.0) {
        return DensityProfile::new(rho0.breakpoints().to_vec(), values).unwrap();
    }
    DensityProfile::new(bps, values).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = rng(5);
    let mut fails = Vec::new();
    let mut tightest = 0.0_f64;
    for i in 0..20 {
        let f = random_flux(&mut rng);
        let w = random_weight(&mut rng);
        let p = random_constraint(&mut rng, &f);
        let rho0 = random_datum(&mut rng, f.max_density());
        let rho1 = perturb(&mut rng, &rho0, f.max_density());
        let h = 3;
        let dt = compute_dt(h, &w, p.lip()).unwrap();
        let cfg = SplitConfig::new(7, h, 20.0 * dt);
        let l = rng.gen_range(1.0..4.0);
        let rep = stability_pair(&rho0, &rho1, &f, &w, &p, &cfg, l).unwrap();
        if rep.rhs > 0.0 {
            tightest = tightest.max(rep.lhs / rep.rhs);
        }
        if !rep.pass {
            fails.push(format!("pair {i}: {} > {}", rep.lhs, rep.rhs));
        }
    }
    let summary = format!("20 pairs, largest lhs/rhs {tightest:.4}");
    if fails.is_empty() {
        Outcome::new(true, summary)
    } else {
        Outcome::new(false, format!("{summary}; {}", fails.join("; ")))
    }
}

fn criterion_6() -> Outcome {
    let sc = sec5_scenario();
    let f = sc.flux.build().unwrap();
    let p = sc.constraint.step().unwrap();
    let n = 201;
    let cells = region_map(&f, &p, n);
    let mut fails = Vec::new();
    for c in &cells {
        let sides = SideValues::at(&p, c.rho_l);
        let fluxes: Vec<f64> = enumerate_local_solutions(&f, sides, c.rho_l, c.rho_r)
            .iter()
            .map(|s| s.flux_at_zero(&f, c.rho_l, c.rho_r))
            .collect();
        let max = fluxes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = fluxes.iter().copied().fold(f64::INFINITY, f64::min);
        let rq = solve_rq(&f, sides, c.rho_l, c.rho_r).flux_at_zero(&f, c.rho_l, c.rho_r);
        let rp = solve_rp(&f, sides, c.rho_l, c.rho_r).flux_at_zero(&f, c.rho_l, c.rho_r);
        if rq != max || rp != min || c.flux_rq != rq || c.flux_rp != rp {
            fails.push(format!("({}, {}) {}: rq {rq} rp {rp} over [{min}, {max}]", c.rho_l, c.rho_r, c.label));
        }
        if !c.label.is_pathological() && rq != rp {
            fails.push(format!("({}, {}) {}: rq {rq} != rp {rp}", c.rho_l, c.rho_r, c.label));
        }
    }
    let count = |pred: &dyn Fn(CaseLabel) -> bool| cells.iter().filter(|c| pred(c.label)).count();
    let c4 = count(&|l| l == CaseLabel::C4);
    let classical = count(&|l| l.is_classical());
    let nonclassical = count(&|l| l.is_nonclassical());
    if c4 != 0 {
        fails.push(format!("{c4} C4 cells"));
    }
    // light traffic passes freely; a dense left state over a free right state queues
    let at = |rl: f64, rr: f64| {
        let i = (rl * (n - 1) as f64).round() as usize;
        let j = (rr * (n - 1) as f64).round() as usize;
        cells[j * n + i].label
    };
    if !at(0.1, 0.1).is_classical() || !at(0.9, 0.2).is_nonclassical() || classical == 0 || nonclassical == 0 {
        fails.push("gray/white partition is degenerate".into());
    }
    let summary = format!("{}x{} grid: {classical} C, {nonclassical} N, C4 empty: {}", n, n, c4 == 0);
    if fails.is_empty() {
        Outcome::new(true, summary)
    } else {
        let shown: Vec<String> = fails.iter().take(5).cloned().collect();
        Outcome::new(false, format!("{summary}; {} failures: {}", fails.len(), shown.join("; ")))
    }
}

fn criterion_7(runs: &[SplitSample], sec5: &[(u32, Trajectory, CorridorPoints, f64)]) -> Outcome {
    let mut tally = Tally::default();
    let mut worst_drift = 0.0_f64;
    for (i, r) in runs.iter().enumerate() {
        worst_drift = worst_drift.max(r.traj.mass_drift());
        tally.add(i, &check_conservation(&r.traj));
    }
    for (n_fan, traj, _, _) in sec5 {
        worst_drift = worst_drift.max(traj.mass_drift());
        tally.add(*n_fan as usize, &check_conservation(traj));
        tally.add(*n_fan as usize, &check_exit_level(traj));
    }
    tally.outcome(&format!("{} runs, worst mass drift {worst_drift:.2e}", runs.len() + sec5.len()))
}

fn fan_paths(flux: &PiecewiseLinearFlux, rho_l: f64, rho_r: f64, level: f64) -> Vec<FrontPath> {
    let fan = constrained_local_riemann(flux, rho_l, rho_r, level).unwrap();
    fan.densities(flux)
        .into_iter()
        .enumerate()
        .map(|(id, (speed, l, r, kind))| FrontPath {
            id,
            t_start: 0.0,
            x_start: 0.0,
            t_end: 1.0,
            x_end: speed,
            rho_left: l,
            rho_right: r,
            kind,
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let f = FluxModel::lwr(1.0, 1.0).unwrap();
    let p = StepConstraint::new(vec![0.7], vec![0.24, 0.16]).unwrap();
    let (rho_l, rho_r) = (0.7, 0.5);
    let label = nloc_lwr::cases::classify(&f, &p, rho_l, rho_r);
    let sols = enumerate_local_solutions(&f, SideValues::at(&p, rho_l), rho_l, rho_r);
    let levels: Vec<f64> = sols
        .iter()
        .map(|s| match *s {
            LocalSolution::Nonclassical { level } => level,
            LocalSolution::Classical => f.peak_flux(),
        })
        .collect();
    let flux = PiecewiseLinearFlux::with_levels(&f, 6, &levels).unwrap();
    let mut fails = Vec::new();
    let mut at_zero = Vec::new();
    let mut fans = Vec::new();
    for (s, &q) in sols.iter().zip(&levels) {
        let paths = fan_paths(&flux, rho_l, rho_r, q);
        let rep = validate_entropy(&paths, &flux, &levels);
        if !rep.pass {
            fails.push(format!("level {q}: {:?}", rep.context));
        }
        at_zero.push(s.flux_at_zero(&f, rho_l, rho_r));
        fans.push(paths);
    }
    let mut distinct = at_zero.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if label != CaseLabel::NNN4 {
        fails.push(format!("datum labeled {label}"));
    }
    if sols.len() < 2 || distinct.len() != sols.len() {
        fails.push(format!("{} solutions with exit fluxes {at_zero:?}", sols.len()));
    }
    if fans.windows(2).any(|w| w[0] == w[1]) {
        fails.push("two fans coincide".into());
    }
    let summary = format!("{label} datum (0.7, 0.5): {} entropy solutions, exit fluxes {at_zero:?}", sols.len());
    if fails.is_empty() {
        Outcome::new(true, summary)
    } else {
        Outcome::new(false, format!("{summary}; {}", fails.join("; ")))
    }
}

fn main() -> ExitCode {
    let sec5: Vec<(u32, Trajectory, CorridorPoints, f64)> = [8, 10, 12]
        .into_iter()
        .map(|n| {
            let (traj, cp, secs) = sec5_run(n);
            (n, traj, cp, secs)
        })
        .collect();
    let mut seeds = rng(2);
    let runs: Vec<SplitSample> = (0..50).map(|_| random_split_run(&mut seeds)).collect();

    let results = [
        ("1 corridor evacuation", criterion_1(&sec5)),
        ("2 efficiency jumps", criterion_2(&runs)),
        ("3 Temple functional", criterion_3(&runs)),
        ("4 TV bound", criterion_4(&runs)),
        ("5 stability", criterion_5()),
        ("6 Riemann extremality", criterion_6()),
        ("7 conservation and traces", criterion_7(&runs, &sec5)),
        ("8 non-uniqueness", criterion_8()),
    ];
    let mut all = true;
    for (name, o) in &results {
        all &= o.pass;
        println!("criterion {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
