//! Post-hoc checks of engine runs: the Temple functional and its interaction
//! table, the BV bound, lattice jumps of the efficiency, L1 stability and
//! entropy admissibility of every front.

use std::fmt;

use serde::Serialize;

use crate::constraint::LipschitzConstraint;
use crate::error::Result;
use crate::flux::{BellFlux, FluxModel, PiecewiseLinearFlux};
use crate::profile::{l1_distance, DensityProfile, WeightFunction};
use crate::riemann::FrontKind;
use crate::split::{run_splitting, SplitConfig};
use crate::tracker::{FrontPath, Interaction, Tracker};
use crate::trajectory::{SplitMeta, TempleRecord, Trajectory};

/// Interaction classes of the Temple functional analysis. `Imulti` marks
/// several fronts reaching the exit at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum InteractionLabel {
    I0,
    I1a,
    I1b,
    I1c,
    I2a,
    I2b,
    I2c,
    I3a,
    I3b,
    I3c,
    I4a,
    I4b,
    I4c,
    Imulti,
    U1a,
    U1b,
    U2a,
    U2b,
    U2c,
    UNoop,
}

impl fmt::Display for InteractionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InteractionLabel::UNoop => f.write_str("U-noop"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

impl std::str::FromStr for InteractionLabel {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        use InteractionLabel::*;
        let all =
            [I0, I1a, I1b, I1c, I2a, I2b, I2c, I3a, I3b, I3c, I4a, I4b, I4c, Imulti, U1a, U1b, U2a, U2b, U2c, UNoop];
        all.into_iter()
            .find(|l| l.to_string() == s)
            .ok_or_else(|| crate::error::Error::InvalidInput(format!("unknown interaction label '{s}'")))
    }
}

/// Change of the Temple functional predicted for a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expected {
    Exactly(f64),
    AtMost(f64),
}

impl Expected {
    pub fn holds(self, delta: f64, tol: f64) -> bool {
        match self {
            Expected::Exactly(v) => (delta - v).abs() <= tol,
            Expected::AtMost(v) => delta <= v + tol,
        }
    }
}

pub fn expected_delta(label: InteractionLabel, n: u32, h: u32, f_bar: f64) -> Expected {
    use InteractionLabel::*;
    let unit = f_bar / (1u64 << n) as f64;
    let step = f_bar / (1u64 << h) as f64;
    match label {
        I0 | Imulti => Expected::AtMost(0.0),
        I1a | I2a | I3a | I3b | I3c | I4a | I4b | I4c => Expected::Exactly(0.0),
        I1b | I1c | I2b | I2c => Expected::Exactly(-2.0 * unit),
        U1a => Expected::Exactly(-9.0 * step),
        U1b | UNoop => Expected::Exactly(-5.0 * step),
        U2a | U2b | U2c => Expected::Exactly(-step),
    }
}

/// Label of an interaction produced by the tracker inside a frozen step.
pub fn label_interaction(it: &Interaction) -> InteractionLabel {
    use InteractionLabel::*;
    if !it.at_exit {
        return I0;
    }
    let arriving: Vec<_> = it.incoming.iter().filter(|w| w.speed != 0.0).collect();
    let resting: Vec<_> = it.incoming.iter().filter(|w| w.speed == 0.0).collect();
    if arriving.len() != 1 {
        return Imulti;
    }
    let a = arriving[0];
    let from_left = a.speed > 0.0;
    // node indices of the exit traces just before the arrival
    let (minus, plus) = if from_left {
        (a.right, resting.last().map_or(a.right, |w| w.right))
    } else {
        (resting.first().map_or(a.left, |w| w.left), a.left)
    };
    let blocked = it.outgoing.iter().any(|w| w.kind == FrontKind::Nonclassical);
    match (a.kind == FrontKind::Fan, from_left) {
        (true, true) if minus != plus => I1c,
        (true, true) if blocked => I1b,
        (true, true) => I1a,
        (true, false) if minus != plus => I2c,
        (true, false) if blocked => I2b,
        (true, false) => I2a,
        (false, true) if minus == plus => I3a,
        (false, true) if minus < plus => I3b,
        (false, true) => I3c,
        (false, false) if minus == plus => I4a,
        (false, false) if minus < plus => I4b,
        (false, false) => I4c,
    }
}

/// Label of a constraint update at a step boundary, from the levels before
/// and after and the exit traces (node indices) before the update.
pub fn label_update(
    f: &PiecewiseLinearFlux,
    q_before: f64,
    q_after: f64,
    minus: usize,
    plus: usize,
) -> InteractionLabel {
    use InteractionLabel::*;
    if q_after == q_before {
        UNoop
    } else if q_after > q_before {
        if minus <= plus {
            U1a
        } else {
            U1b
        }
    } else if plus < minus {
        U2c
    } else if f.flux(minus) <= q_after {
        U2a
    } else {
        U2b
    }
}

/// Temple functional of the tracker state with level `q` during step `ell`.
pub fn temple(tr: &Tracker, q: f64, ell: u64, meta: &SplitMeta) -> TempleRecord {
    let f = tr.flux();
    let (m, p) = tr.exit_traces();
    let rho_bar = f.rho_bar();
    let tol = 1e-12 * meta.f_bar;
    let queued =
        f.rho(m) > rho_bar && rho_bar > f.rho(p) && (f.flux(m) - q).abs() <= tol && (f.flux(p) - q).abs() <= tol;
    let gamma = if queued { 0.0 } else { 4.0 * (meta.f_bar - q) };
    let step = meta.f_bar / (1u64 << meta.h) as f64;
    let big_gamma = 5.0 * step * (meta.t_end / meta.dt - ell as f64);
    let tv_psi = tr.tv_psi();
    TempleRecord {
        t: tr.now(),
        tv_psi,
        gamma,
        big_gamma,
        upsilon: tv_psi + gamma + big_gamma,
        wave_count: tr.front_count(),
    }
}

/// Outcome of one check, as written to `reports.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub worst_violation: f64,
    pub context: Vec<String>,
}

impl CheckReport {
    fn new(check: &str) -> Self {
        Self { check: check.to_string(), pass: true, worst_violation: 0.0, context: Vec::new() }
    }

    /// Records a violation of size `amount` (positive means violated).
    fn note(&mut self, amount: f64, context: impl FnOnce() -> String) {
        if amount > 0.0 {
            self.pass = false;
            self.worst_violation = self.worst_violation.max(amount);
            if self.context.len() < 20 {
                self.context.push(context());
            }
        }
    }
}

/// Temple functional: non-increasing, per-label table values, and a strict
/// decrease whenever the wave count grows.
pub fn check_temple_monotone(traj: &Trajectory) -> CheckReport {
    let mut rep = CheckReport::new("temple_monotone");
    let Some(meta) = traj.split else {
        rep.note(f64::INFINITY, || "not a splitting trajectory".into());
        return rep;
    };
    let unit = meta.f_bar / (1u64 << meta.n) as f64;
    let tol = 1e-10;
    for e in &traj.events {
        let (Some(label), Some(delta)) = (&e.label, e.delta_upsilon) else {
            continue;
        };
        rep.note(delta - tol, || format!("t={} {label}: upsilon rose by {delta}", e.time));
        if let Ok(l) = label.parse::<InteractionLabel>() {
            let exp = expected_delta(l, meta.n, meta.h, meta.f_bar);
            if !exp.holds(delta, tol) {
                rep.note(delta.abs().max(tol), || format!("t={} {label}: delta {delta} vs {exp:?}", e.time));
            }
        }
        if e.waves_after > e.waves_before {
            rep.note(delta + unit - tol, || {
                format!("t={} {label}: {} -> {} waves with delta {delta}", e.time, e.waves_before, e.waves_after)
            });
        }
    }
    for w in traj.temple.windows(2) {
        rep.note(w[1].upsilon - w[0].upsilon - tol, || format!("upsilon rose between t={} and t={}", w[0].t, w[1].t));
    }
    rep
}

/// `TV(Psi(rho(t))) <= TV(Psi(rho_0)) + 4 f(rho_bar) + 10 w(0-) Lip(p) f(rho_bar) t`.
pub fn check_tv_bound(traj: &Trajectory) -> CheckReport {
    let mut rep = CheckReport::new("tv_bound");
    let Some(meta) = traj.split else {
        rep.note(f64::INFINITY, || "not a splitting trajectory".into());
        return rep;
    };
    let Some(first) = traj.temple.first() else { return rep };
    let c = 10.0 * meta.w0 * meta.lip_p * meta.f_bar;
    for r in &traj.temple {
        let bound = first.tv_psi + 4.0 * meta.f_bar + c * r.t;
        rep.note(r.tv_psi - bound - 1e-12, || format!("t={}: TV {} > bound {bound}", r.t, r.tv_psi));
    }
    rep
}

/// Consecutive levels differ by zero or one lattice step, and `xi` drifts
/// at most `dt f(rho_bar) w(0-)` per step.
pub fn check_efficiency_jumps(traj: &Trajectory) -> CheckReport {
    let mut rep = CheckReport::new("efficiency_jumps");
    let Some(meta) = traj.split else {
        rep.note(f64::INFINITY, || "not a splitting trajectory".into());
        return rep;
    };
    let drift_max = meta.dt * meta.f_bar * meta.w0;
    for w in traj.steps.windows(2) {
        let jump = w[1].lattice_index.abs_diff(w[0].lattice_index);
        rep.note(jump.saturating_sub(1) as f64, || {
            format!("step {}: lattice index {} -> {}", w[1].ell, w[0].lattice_index, w[1].lattice_index)
        });
        let drift = (w[1].xi - w[0].xi).abs();
        rep.note(drift - drift_max * (1.0 + 1e-12) - 1e-15, || {
            format!("step {}: xi drift {drift} > {drift_max}", w[1].ell)
        });
    }
    rep
}

/// Mass drift and flux-trace equality at the exit.
pub fn check_conservation(traj: &Trajectory) -> CheckReport {
    let mut rep = CheckReport::new("conservation");
    let drift = traj.mass_drift();
    rep.note(drift - 1e-9, || format!("mass drift {drift}"));
    let tol = 1e-12 * traj.f_bar.max(1.0);
    let mismatch = traj.trace_mismatch();
    rep.note(mismatch - tol, || format!("flux traces differ by {mismatch}"));
    rep
}

/// Whenever a queue stands at the exit, both flux traces equal the level.
pub fn check_exit_level(traj: &Trajectory) -> CheckReport {
    let mut rep = CheckReport::new("exit_level");
    let tol = 1e-12 * traj.f_bar.max(1.0);
    for s in traj.invariants.iter().filter(|s| s.queue) {
        let gap = (s.flux_minus - s.level).abs().max((s.flux_plus - s.level).abs());
        rep.note(gap - tol, || format!("t={}: queue flux off the level {} by {gap}", s.t, s.level));
    }
    rep
}

/// `xi` is continuous across every logged event.
pub fn check_xi_continuity(traj: &Trajectory) -> CheckReport {
    let mut rep = CheckReport::new("xi_continuity");
    let jump = traj.xi.max_jump_at_equal_times();
    rep.note(jump - 1e-9, || format!("xi jumps by {jump}"));
    rep
}

/// Entropy admissibility of every front path: Rankine-Hugoniot, chord
/// condition away from the exit, nonclassical fronts only at `x = 0`
/// carrying one of the `levels`.
pub fn validate_entropy(paths: &[FrontPath], f: &PiecewiseLinearFlux, levels: &[f64]) -> CheckReport {
    let mut rep = CheckReport::new("entropy");
    let scale = f.peak_flux().max(1.0);
    for p in paths {
        let (Some(l), Some(r)) = (f.node_of(p.rho_left), f.node_of(p.rho_right)) else {
            rep.note(f64::INFINITY, || format!("front {}: states off the mesh", p.id));
            continue;
        };
        let df = f.flux(r) - f.flux(l);
        let dr = f.rho(r) - f.rho(l);
        let speed = if p.kind == FrontKind::Nonclassical { 0.0 } else { f.speed(l, r) };
        let dt = p.t_end - p.t_start;
        if dt > 1e-9 {
            let moved = (p.x_end - p.x_start) / dt;
            rep.note((moved - speed).abs() - 1e-8 * (1.0 + speed.abs()), || {
                format!("front {}: path slope {moved} vs speed {speed}", p.id)
            });
        }
        rep.note((speed * dr - df).abs() - 1e-10 * scale, || format!("front {}: RH residual", p.id));
        match p.kind {
            FrontKind::Nonclassical => {
                let at_exit = p.x_start == 0.0 && p.x_end == 0.0;
                let level_ok = levels.iter().any(|&q| (f.flux(l) - q).abs() <= 1e-12 * scale);
                let sides = f.rho(l) > f.rho_bar() && f.rho_bar() > f.rho(r);
                if !(at_exit && level_ok && sides) {
                    rep.note(1.0, || format!("front {}: invalid nonclassical front", p.id));
                }
            }
            _ => {
                // chord above the flux for decreasing jumps, below for increasing ones
                let (lo, hi) = (l.min(r), l.max(r));
                let worst = (lo + 1..hi)
                    .map(|k| {
                        let chord = f.flux(l) + speed * (f.rho(k) - f.rho(l));
                        let gap = f.flux(k) - chord;
                        if l < r {
                            -gap
                        } else {
                            gap
                        }
                    })
                    .fold(0.0, f64::max);
                rep.note(worst - 1e-12 * scale, || format!("front {}: chord condition fails by {worst}", p.id));
            }
        }
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub t: f64,
    pub l: f64,
    pub m: f64,
    pub c: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Runs both data to time `cfg.t_end` and compares the localized L1 distance
/// to `e^{CT}` times the initial distance on the widened window.
pub fn stability_pair(
    rho0: &DensityProfile,
    rho0_tilde: &DensityProfile,
    f: &FluxModel,
    w: &WeightFunction,
    p: &LipschitzConstraint,
    cfg: &SplitConfig,
    l: f64,
) -> Result<StabilityReport> {
    let a = run_splitting(rho0, f, w, p, cfg)?;
    let b = run_splitting(rho0_tilde, f, w, p, cfg)?;
    let t = cfg.t_end;
    let m = f.lip();
    let c = 2.0 * p.lip() * w.at_zero();
    let (ua, ub) = (a.final_profile.unwrap(), b.final_profile.unwrap());
    let (ia, ib) = (a.initial.unwrap(), b.initial.unwrap());
    let lhs = l1_distance(&ua, &ub, -l, l);
    let wide = l + m * t;
    let rhs = (c * t).exp() * l1_distance(&ia, &ib, -wide, wide);
    Ok(StabilityReport { t, l, m, c, lhs, rhs, pass: lhs <= rhs * (1.0 + 1e-6) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::FluxModel;
    use crate::riemann::WaveFront;
    use crate::tracker::Cause;

    #[test]
    fn table_values() {
        let e = expected_delta(InteractionLabel::U1a, 6, 3, 0.25);
        assert_eq!(e, Expected::Exactly(-9.0 * 0.25 / 8.0));
        assert!(expected_delta(InteractionLabel::I0, 6, 3, 0.25).holds(-0.1, 1e-10));
        assert!(!expected_delta(InteractionLabel::I0, 6, 3, 0.25).holds(0.1, 1e-10));
        assert_eq!("U-noop".parse::<InteractionLabel>().unwrap(), InteractionLabel::UNoop);
    }

    #[test]
    fn labels_of_exit_arrivals() {
        let fan = WaveFront { speed: 0.5, left: 3, right: 2, kind: FrontKind::Fan };
        let nc = WaveFront { speed: 0.0, left: 10, right: 2, kind: FrontKind::Nonclassical };
        let it = Interaction {
            time: 1.0,
            x: 0.0,
            cause: Cause::ExitHit,
            at_exit: true,
            incoming: vec![fan],
            outgoing: vec![WaveFront { speed: -0.1, left: 3, right: 10, kind: FrontKind::Shock }, nc],
            left: 3,
            right: 2,
            level: 0.1,
        };
        assert_eq!(label_interaction(&it), InteractionLabel::I1b);
        let pass = Interaction { outgoing: vec![fan], ..it.clone() };
        assert_eq!(label_interaction(&pass), InteractionLabel::I1a);
    }

    #[test]
    fn entropy_accepts_classical_and_exit_queue() {
        let model = FluxModel::lwr(1.0, 1.0).unwrap();
        let f = PiecewiseLinearFlux::with_levels(&model, 4, &[0.1]).unwrap();
        let (c, h) = f.level_nodes(0.1).unwrap();
        let nc = FrontPath {
            id: 0,
            t_start: 0.0,
            x_start: 0.0,
            t_end: 1.0,
            x_end: 0.0,
            rho_left: f.rho(h),
            rho_right: f.rho(c),
            kind: FrontKind::Nonclassical,
        };
        assert!(validate_entropy(std::slice::from_ref(&nc), &f, &[0.1]).pass);
        let moved = FrontPath { x_start: 1.0, x_end: 1.0, ..nc.clone() };
        assert!(!validate_entropy(&[moved], &f, &[0.1]).pass);
        let wrong_level = validate_entropy(&[nc], &f, &[0.2]);
        assert!(!wrong_level.pass);
        let a = f.node_of(0.2).map(|i| f.rho(i)).unwrap_or(f.rho(2));
        let b = f.rho(f.len() - 1 - f.node_of(a).unwrap());
        let shock = FrontPath {
            id: 1,
            t_start: 0.0,
            x_start: 0.0,
            t_end: 1.0,
            x_end: 0.0,
            rho_left: a,
            rho_right: b,
            kind: FrontKind::Shock,
        };
        assert!(validate_entropy(std::slice::from_ref(&shock), &f, &[]).pass);
        let reversed = FrontPath { rho_left: b, rho_right: a, ..shock };
        assert!(!validate_entropy(&[reversed], &f, &[]).pass);
    }
}
