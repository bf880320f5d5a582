//! Exact tracking under a step efficiency. Between interactions every front
//! moves at constant speed, so `xi(t)` is a quadratic polynomial until some
//! front crosses a node of `w`; threshold crossings of `xi` are found in
//! closed form and treated as interactions at the exit.

use serde::{Deserialize, Serialize};

use crate::cases::{classify, SolverPolicy};
use crate::constraint::StepConstraint;
use crate::error::{invalid, Error, Result};
use crate::flux::{BellFlux, FluxModel, PiecewiseLinearFlux};
use crate::monitor::label_interaction;
use crate::profile::{nonlocal_average, quantize_to_mesh, DensityProfile, WeightFunction};
use crate::riemann::FrontKind;
use crate::tracker::{Cause, FrontPath, Interaction, Tracker};
use crate::trajectory::{Direction, EventKind, EventRecord, Trajectory, WaveRecord, XiCrossing};

/// Relative guard under which a discriminant counts as a double root.
pub const DISC_GUARD: f64 = 1e-12;

/// A jump of the profile moving at constant speed, states as densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingJump {
    pub x: f64,
    pub speed: f64,
    pub rho_left: f64,
    pub rho_right: f64,
}

/// `xi(t0 + tau) = a + b tau + c tau^2` for `tau` in `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiPiece {
    pub start: f64,
    pub end: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl XiPiece {
    pub fn eval(&self, tau: f64) -> f64 {
        self.a + tau * (self.b + tau * self.c)
    }

    pub fn slope(&self, tau: f64) -> f64 {
        self.b + 2.0 * self.c * tau
    }
}

/// Coefficients in `tau` of `drho * W(x + s tau)` on the `w` segment the
/// jump enters at `tau0`, where it sits at `y`.
fn contribution(j: &MovingJump, w: &WeightFunction, tau0: f64, y: f64) -> [f64; 3] {
    let drho = j.rho_left - j.rho_right;
    let big_w = w.antiderivative(y);
    if j.speed == 0.0 {
        return [drho * big_w, 0.0, 0.0];
    }
    let b = w.value_dir(y, j.speed) * j.speed;
    let c = 0.5 * w.slope_dir(y, j.speed) * j.speed * j.speed;
    // expand A + B d + C d^2 with d = tau - tau0
    [drho * (big_w - b * tau0 + c * tau0 * tau0), drho * (b - 2.0 * c * tau0), drho * c]
}

/// Piecewise-quadratic form of `xi` on `[0, horizon]`, split where a jump
/// crosses a node of `w`. `rho_right` is the state right of every jump.
pub fn xi_pieces(jumps: &[MovingJump], rho_right: f64, w: &WeightFunction, horizon: f64) -> Vec<XiPiece> {
    let nodes = w.nodes();
    let lo = -w.i_w();
    let mut coef = [rho_right * w.antiderivative(f64::INFINITY), 0.0, 0.0];
    let mut parts: Vec<[f64; 3]> = vec![[0.0; 3]; jumps.len()];
    let mut breaks: Vec<(f64, usize, f64)> = Vec::new();
    for (k, j) in jumps.iter().enumerate() {
        let reach = j.x + j.speed * horizon;
        if j.x <= lo && reach <= lo {
            continue;
        }
        let part = contribution(j, w, 0.0, j.x);
        for i in 0..3 {
            coef[i] += part[i];
        }
        parts[k] = part;
        if j.speed == 0.0 || (j.x >= 0.0 && reach >= 0.0) {
            continue;
        }
        for &node in nodes {
            let tau = (node - j.x) / j.speed;
            if tau > 0.0 && tau < horizon {
                breaks.push((tau, k, node));
            }
        }
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(breaks.len() + 1);
    let mut start = 0.0;
    for (tau, k, node) in breaks {
        if tau > start {
            out.push(XiPiece { start, end: tau, a: coef[0], b: coef[1], c: coef[2] });
            start = tau;
        }
        let next = contribution(&jumps[k], w, tau, node);
        for i in 0..3 {
            coef[i] += next[i] - parts[k][i];
        }
        parts[k] = next;
    }
    out.push(XiPiece { start, end: horizon.max(start), a: coef[0], b: coef[1], c: coef[2] });
    out
}

/// Roots of `piece = level` in `[piece.start, piece.end]` with the sign of
/// the slope there; double roots are not crossings.
fn piece_roots(piece: &XiPiece, level: f64) -> Vec<(f64, Direction)> {
    let (a, b, c) = (piece.a - level, piece.b, piece.c);
    let mut roots = Vec::with_capacity(2);
    if c == 0.0 {
        if b != 0.0 {
            roots.push(-a / b);
        }
    } else {
        let disc = b * b - 4.0 * c * a;
        let guard = DISC_GUARD * (b * b + 4.0 * (c * a).abs());
        if disc > guard {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            roots.push(q / c);
            if q != 0.0 {
                roots.push(a / q);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
        .into_iter()
        .filter(|&tau| tau >= piece.start && tau <= piece.end)
        .filter_map(|tau| {
            let s = piece.slope(tau);
            (s != 0.0).then_some((tau, if s > 0.0 { Direction::Up } else { Direction::Down }))
        })
        .collect()
}

/// Every crossing of a threshold by `xi` in `[t0, t0 + horizon]`, sorted by
/// time. Fronts are assumed to keep their speeds over the window.
pub fn xi_crossing_times(
    jumps: &[MovingJump],
    rho_right: f64,
    w: &WeightFunction,
    thresholds: &[f64],
    t0: f64,
    horizon: f64,
) -> Vec<XiCrossing> {
    let pieces = xi_pieces(jumps, rho_right, w, horizon);
    let mut out = Vec::new();
    for (k, piece) in pieces.iter().enumerate() {
        let last = k + 1 == pieces.len();
        for (index, &level) in thresholds.iter().enumerate() {
            for (tau, direction) in piece_roots(piece, level) {
                if last || tau < piece.end {
                    out.push(XiCrossing { time: t0 + tau, index, direction });
                }
            }
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.index.cmp(&b.index)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    /// Mesh exponent of the discretized rarefactions.
    pub n_fan: u32,
    pub t_end: f64,
    #[serde(default)]
    pub policy: SolverPolicy,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub profile_times: Vec<f64>,
    #[serde(default = "default_true")]
    pub record_paths: bool,
}

fn default_max_events() -> u64 {
    10_000_000
}

fn default_true() -> bool {
    true
}

impl ExactConfig {
    pub fn new(n_fan: u32, t_end: f64, policy: SolverPolicy) -> Self {
        Self { n_fan, t_end, policy, max_events: default_max_events(), profile_times: Vec::new(), record_paths: true }
    }
}

/// Relative distance past a threshold that forces a level change.
const XI_TOL: f64 = 1e-10;

/// Interactions allowed at one instant before the run counts as stalled.
const STALL_LIMIT: u64 = 1_000_000;

struct ExactRun<'a> {
    tr: Tracker,
    traj: Trajectory,
    f: &'a FluxModel,
    p: &'a StepConstraint,
    pending_profiles: std::iter::Peekable<std::vec::IntoIter<f64>>,
}

impl ExactRun<'_> {
    fn jumps(&self) -> Vec<MovingJump> {
        let f = self.tr.flux();
        self.tr
            .fronts()
            .map(|v| MovingJump {
                x: v.x,
                speed: v.wave.speed,
                rho_left: f.rho(v.wave.left),
                rho_right: f.rho(v.wave.right),
            })
            .collect()
    }

    fn take_profiles_until(&mut self, t: f64) -> Result<()> {
        while let Some(&tp) = self.pending_profiles.peek() {
            if tp > t {
                break;
            }
            self.pending_profiles.next();
            if tp >= self.tr.now() {
                self.tr.set_time(tp)?;
            }
            let rho = self.tr.profile();
            self.traj.snapshot(self.tr.now(), &rho);
        }
        Ok(())
    }

    /// Logs an interaction; `xi_before` is the left limit of `xi`.
    fn log(&mut self, it: &Interaction, kind: EventKind, waves_before: usize, xi_before: f64, detail: Option<String>) {
        let fl = self.tr.flux();
        let label = match kind {
            EventKind::XiCrossing => None,
            _ => Some(label_interaction(it).to_string()),
        };
        let rec = EventRecord {
            time: it.time,
            kind,
            location: it.x,
            label,
            delta_upsilon: None,
            waves_before,
            waves_after: self.tr.front_count(),
            detail,
            incoming: WaveRecord::list(&it.incoming, fl),
            outgoing: WaveRecord::list(&it.outgoing, fl),
        };
        self.traj.events.push(rec);
        self.traj.sample_invariants(&self.tr);
        self.traj.xi.push(it.time, xi_before, self.tr.level());
    }

    /// Case label of the exit datum, when it is pathological.
    fn pathology(&self, it: &Interaction) -> Option<String> {
        if !it.at_exit {
            return None;
        }
        let fl = self.tr.flux();
        let label = classify(self.f, self.p, fl.rho(it.left), fl.rho(it.right));
        label.is_pathological().then(|| format!("pathological exit datum {label}"))
    }
}

/// Index of the active value of `p` at `xi`; on a threshold the policy
/// picks the side: `Rq` the larger value `p(xi-)`, `Rp` the smaller `p(xi+)`.
pub fn initial_index(p: &StepConstraint, xi: f64, policy: SolverPolicy) -> usize {
    match policy {
        SolverPolicy::Rq => p.index_minus(xi),
        SolverPolicy::Rp => p.index_plus(xi),
    }
}

/// Runs the exact tracker from `rho0`, quantized onto the `n_fan` mesh.
pub fn run_exact(
    rho0: &DensityProfile,
    f: &FluxModel,
    w: &WeightFunction,
    p: &StepConstraint,
    cfg: &ExactConfig,
) -> Result<Trajectory> {
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return invalid("horizon T must be finite and non-negative");
    }
    p.validate(f.peak_flux(), f.max_density())?;
    rho0.check_range(f.max_density())?;
    let flux = PiecewiseLinearFlux::with_levels(f, cfg.n_fan, p.values())?;
    let rho0q = quantize_to_mesh(rho0, f, &f.mesh(cfg.n_fan)?).profile;
    let xi0 = nonlocal_average(&rho0q, w);
    let mut idx = initial_index(p, xi0, cfg.policy);
    let mut tr = Tracker::new(flux, &rho0q, p.values()[idx])?;
    tr.set_record_paths(cfg.record_paths);

    let mut traj = Trajectory::new("exact", cfg.t_end, f.peak_flux());
    traj.initial = Some(rho0q);
    traj.xi.push(0.0, xi0, p.values()[idx]);
    traj.sample_invariants(&tr);
    let mut times = cfg.profile_times.clone();
    times.retain(|t| (0.0..=cfg.t_end).contains(t));
    times.sort_by(f64::total_cmp);
    let mut run = ExactRun { tr, traj, f, p, pending_profiles: times.into_iter().peekable() };
    run.take_profiles_until(0.0)?;

    let mut events = 0u64;
    let mut stalled = 0u64;
    loop {
        let now = run.tr.now();
        let next = run.tr.peek_time().filter(|&t| t <= cfg.t_end);
        let until = next.unwrap_or(cfg.t_end);
        let jumps = run.jumps();
        let rho_right = run.tr.flux().rho(run.tr.right_tail());
        let pieces = xi_pieces(&jumps, rho_right, w, until - now);
        let thr = p.thresholds();
        let (xi_start, drift) = (pieces[0].a, pieces[0].b);
        if run.traj.events.last().is_some_and(|e| e.time == now) {
            run.traj.xi.push(now, xi_start, run.tr.level());
        }
        // rounding can leave xi just past the threshold of the active level
        let tol = XI_TOL * f.max_density();
        let overdue = if idx < thr.len() && xi_start > thr[idx] && (drift > 0.0 || xi_start > thr[idx] + tol) {
            Some(XiCrossing { time: now, index: idx, direction: Direction::Up })
        } else if idx > 0 && xi_start < thr[idx - 1] && (drift < 0.0 || xi_start < thr[idx - 1] - tol) {
            Some(XiCrossing { time: now, index: idx - 1, direction: Direction::Down })
        } else {
            None
        };
        let crossing =
            overdue.into_iter().chain(xi_crossing_times(&jumps, rho_right, w, thr, now, until - now)).find(|c| {
                let target = match c.direction {
                    Direction::Up => c.index + 1,
                    Direction::Down => c.index,
                };
                target != idx
            });
        let t_next = crossing.map_or(until, |c| c.time.min(until));
        run.take_profiles_until(t_next)?;
        let xi_at = |t: f64| {
            let tau = t - now;
            let k = pieces.partition_point(|pc| pc.end < tau).min(pieces.len() - 1);
            pieces[k].eval(tau)
        };

        events += 1;
        if events > cfg.max_events {
            return Err(Error::Aborted(format!("event cap {} reached at t = {now}", cfg.max_events)));
        }
        stalled = if t_next > now { 0 } else { stalled + 1 };
        if stalled > STALL_LIMIT {
            return Err(Error::Aborted(format!("no progress past t = {now}")));
        }

        if let Some(c) = crossing.filter(|c| c.time <= until) {
            let xi_before = xi_at(c.time);
            run.tr.set_time(c.time)?;
            let waves_before = run.tr.front_count();
            idx = match c.direction {
                Direction::Up => c.index + 1,
                Direction::Down => c.index,
            };
            let q = p.values()[idx];
            let (minus, plus) = run.tr.exit_traces();
            let it = run.tr.resolve_at_exit(q, Cause::LevelChange)?.unwrap_or(Interaction {
                time: c.time,
                x: 0.0,
                cause: Cause::LevelChange,
                at_exit: true,
                incoming: Vec::new(),
                outgoing: Vec::new(),
                left: minus,
                right: plus,
                level: q,
            });
            run.traj.crossings.push(c);
            let dir = match c.direction {
                Direction::Up => "up",
                Direction::Down => "down",
            };
            let detail = format!("threshold {} {dir}, level {q}", c.index + 1);
            run.log(&it, EventKind::XiCrossing, waves_before, xi_before, Some(detail));
            continue;
        }
        let Some(te) = next else {
            run.tr.set_time(cfg.t_end)?;
            break;
        };
        let xi_before = xi_at(te);
        let waves_before = run.tr.front_count();
        let Some(it) = run.tr.step()? else { break };
        let kind = if it.at_exit { EventKind::ExitHit } else { EventKind::Collision };
        let detail = run.pathology(&it);
        run.log(&it, kind, waves_before, xi_before, detail);
    }
    run.take_profiles_until(cfg.t_end)?;
    let ExactRun { tr, mut traj, .. } = run;
    traj.final_profile = Some(tr.profile());
    traj.paths = tr.finish();
    Ok(traj)
}

/// Evacuation time and the history of the exit efficiency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvacuationReport {
    pub evacuated: bool,
    /// First logged time after which `x < 0` stays empty.
    pub time: Option<f64>,
    /// Mass left on `x < 0` at the horizon.
    pub remaining_mass: f64,
    pub crossings: Vec<XiCrossing>,
    /// Times at which the efficiency falls (`xi` crosses up).
    pub falls: Vec<f64>,
    /// Times at which the efficiency recovers (`xi` crosses down).
    pub recoveries: Vec<f64>,
}

/// Mass below this counts as an empty upstream region.
const EMPTY_MASS: f64 = 1e-12;

pub fn evacuation_time(traj: &Trajectory) -> EvacuationReport {
    let samples = &traj.invariants;
    let last_busy = samples.iter().rposition(|s| s.upstream > EMPTY_MASS);
    let time = match last_busy {
        None => Some(samples.first().map_or(0.0, |s| s.t)),
        Some(k) => samples.get(k + 1).map(|s| s.t),
    };
    let pick = |d: Direction| traj.crossings.iter().filter(|c| c.direction == d).map(|c| c.time).collect();
    EvacuationReport {
        evacuated: time.is_some(),
        time,
        remaining_mass: samples.last().map_or(0.0, |s| s.upstream),
        crossings: traj.crossings.clone(),
        falls: pick(Direction::Up),
        recoveries: pick(Direction::Down),
    }
}

/// Characteristic points of the corridor evacuation extracted from an exact
/// run: arrival at the exit, queue formation, the efficiency drops and
/// recoveries, and the shock meetings upstream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorridorPoints {
    /// Arrival of the rarefaction head, from the origin of the first front
    /// reaching the exit and the exact characteristic speed of its right state.
    pub t_c: Option<f64>,
    /// Arrival time of that (discrete) front itself.
    pub t_c_front: Option<f64>,
    pub t_d: Option<f64>,
    pub t_e: Option<f64>,
    pub x_m: Option<f64>,
    pub t_f: Option<f64>,
    pub x_o: Option<f64>,
    pub t_g: Option<f64>,
    pub t_h: Option<f64>,
    pub t_i: Option<f64>,
    /// Ordering assumptions of the construction, with whether they hold.
    pub assumptions: Vec<(String, bool)>,
}

fn position_at(pa: &FrontPath, t: f64) -> f64 {
    let span = pa.t_end - pa.t_start;
    if span > 0.0 {
        pa.x_start + (t - pa.t_start) * (pa.x_end - pa.x_start) / span
    } else {
        pa.x_start
    }
}

fn alive_at(pa: &FrontPath, t: f64) -> bool {
    pa.t_start <= t && t <= pa.t_end
}

/// Position at `t` of the leftmost front with vacuum on its left.
fn vacuum_edge(traj: &Trajectory, t: f64) -> Option<f64> {
    traj.paths
        .iter()
        .filter(|pa| pa.rho_left == 0.0 && pa.rho_right > 0.0 && alive_at(pa, t))
        .map(|pa| position_at(pa, t))
        .min_by(f64::total_cmp)
}

pub fn corridor_points(
    traj: &Trajectory,
    f: &FluxModel,
    w: &WeightFunction,
    p: &StepConstraint,
) -> Result<CorridorPoints> {
    let tol = 1e-9;
    let first_cross = |index: usize, d: Direction| {
        traj.crossings.iter().find(|c| c.index == index && c.direction == d).map(|c| c.time)
    };
    let hat = |k: usize| -> Result<f64> { Ok(f.branches(p.values()[k])?.1) };

    let first_hit = traj.events.iter().find(|e| e.kind == EventKind::ExitHit);
    let t_c_front = first_hit.map(|e| e.time);
    let t_c = first_hit.and_then(|e| {
        let arriving = e.incoming.iter().find(|wv| wv.speed > 0.0)?;
        let path = traj.paths.iter().find(|pa| {
            alive_at(pa, e.time)
                && position_at(pa, e.time).abs() <= tol
                && pa.rho_right == arriving.rho_right
                && pa.rho_left == arriving.rho_left
        })?;
        Some(path.t_start - path.x_start / f.char_speed(arriving.rho_right))
    });
    let t_d = traj
        .events
        .iter()
        .find(|e| e.kind == EventKind::ExitHit && e.outgoing.iter().any(|wv| wv.kind == FrontKind::Nonclassical))
        .map(|e| e.time);
    let t_e = first_cross(0, Direction::Up);
    let t_f = first_cross(1, Direction::Up);
    let t_g = first_cross(1, Direction::Down);
    let t_h = first_cross(0, Direction::Down);
    let n_levels = p.values().len();
    let x_m = match (t_e, n_levels >= 2) {
        (Some(te), true) => {
            let (h0, h1) = (hat(0)?, hat(1)?);
            traj.events
                .iter()
                .filter(|e| e.kind == EventKind::Collision && e.time > te)
                .find(|e| e.incoming.iter().any(|wv| wv.joins(h0, h1, tol)))
                .map(|e| e.location)
        }
        _ => None,
    };
    let x_o = if n_levels >= 3 {
        let h2 = hat(2)?;
        // before t_F the fan itself carries a front ending at that state
        let after = t_f.unwrap_or(f64::INFINITY);
        traj.events
            .iter()
            .filter(|e| e.kind == EventKind::Collision && e.time > after)
            .find(|e| e.outgoing.iter().any(|wv| wv.joins(0.0, h2, tol)))
            .map(|e| e.location)
    } else {
        None
    };
    let t_i = evacuation_time(traj).time;

    let i_w = w.i_w();
    let mut assumptions = Vec::new();
    let edge_behind = |t: Option<f64>| t.and_then(|t| vacuum_edge(traj, t)).is_some_and(|x| x < -i_w);
    assumptions.push(("vacuum edge left of the weight support at t_E".to_string(), edge_behind(t_e)));
    assumptions.push(("vacuum edge left of the weight support at t_F".to_string(), edge_behind(t_f)));
    assumptions.push(("x_O left of the weight support".to_string(), x_o.is_some_and(|x| x < -i_w)));
    let order = [t_c_front, t_d, t_e, t_f, t_g, t_h, t_i];
    let ordered = order.iter().all(Option::is_some) && order.windows(2).all(|pr| pr[0].unwrap() < pr[1].unwrap());
    assumptions.push(("t_C < t_D < t_E < t_F < t_G < t_H < t_I".to_string(), ordered));

    Ok(CorridorPoints { t_c, t_c_front, t_d, t_e, x_m, t_f, x_o, t_g, t_h, t_i, assumptions })
}
