//! Operator splitting: the efficiency is frozen on each step of length
//! `dt_h` and updated from the non-local average at the step boundaries;
//! inside a step the solution is tracked exactly.

use serde::{Deserialize, Serialize};

use crate::constraint::{LipschitzConstraint, StepConstraintApprox};
use crate::error::{invalid, Error, Result};
use crate::flux::{BellFlux, FluxModel, PiecewiseLinearFlux};
use crate::monitor::{label_interaction, label_update, temple};
use crate::profile::{nonlocal_average, quantize_to_mesh, DensityProfile, WeightFunction};
use crate::tracker::{Cause, Interaction, Tracker};
use crate::trajectory::{
    BoundaryShift, EventKind, EventRecord, SplitMeta, StepRecord, TempleRecord, Trajectory, WaveRecord,
};

/// Events this close after a step boundary are processed before the update.
pub const BOUNDARY_WINDOW: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Flux mesh exponent.
    pub n: u32,
    /// Efficiency lattice exponent, `h < n`.
    pub h: u32,
    pub t_end: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// Replaces the CFL step; only meant for negative tests.
    #[serde(default)]
    pub dt_override: Option<f64>,
    #[serde(default)]
    pub profile_times: Vec<f64>,
    #[serde(default = "default_true")]
    pub record_paths: bool,
}

fn default_max_steps() -> u64 {
    10_000_000
}

fn default_true() -> bool {
    true
}

impl SplitConfig {
    pub fn new(n: u32, h: u32, t_end: f64) -> Self {
        Self {
            n,
            h,
            t_end,
            max_steps: default_max_steps(),
            dt_override: None,
            profile_times: Vec::new(),
            record_paths: true,
        }
    }
}

/// `dt_h = 1 / (2^{h+1} w(0-) Lip(p))`.
pub fn compute_dt(h: u32, w: &WeightFunction, lip_p: f64) -> Result<f64> {
    if !(lip_p > 0.0) {
        return invalid("Lip(p) = 0: the efficiency is constant, so no splitting is needed; run a single frozen step");
    }
    let w0 = w.at_zero();
    if !(w0 > 0.0) {
        return invalid("w(0-) must be positive");
    }
    Ok(1.0 / ((1u64 << (h + 1)) as f64 * w0 * lip_p))
}

struct Run<'a> {
    tr: Tracker,
    traj: Trajectory,
    meta: SplitMeta,
    pending_profiles: std::iter::Peekable<std::vec::IntoIter<f64>>,
    w: &'a WeightFunction,
}

impl Run<'_> {
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

    fn log(&mut self, it: &Interaction, kind: EventKind, label: String, before: &TempleRecord, ell: u64, q: f64) {
        let rec = temple(&self.tr, q, ell, &self.meta);
        self.traj.events.push(EventRecord {
            time: it.time,
            kind,
            location: it.x,
            label: Some(label),
            delta_upsilon: Some(rec.upsilon - before.upsilon),
            waves_before: before.wave_count,
            waves_after: rec.wave_count,
            detail: None,
            incoming: WaveRecord::list(&it.incoming, self.tr.flux()),
            outgoing: WaveRecord::list(&it.outgoing, self.tr.flux()),
        });
        self.traj.temple.push(rec);
        self.traj.sample_invariants(&self.tr);
        let xi = nonlocal_average(&self.tr.profile(), self.w);
        self.traj.xi.push(self.tr.now(), xi, q);
    }
}

/// Runs the splitting scheme from `rho0`, quantized onto the flux mesh first.
pub fn run_splitting(
    rho0: &DensityProfile,
    f: &FluxModel,
    w: &WeightFunction,
    p: &LipschitzConstraint,
    cfg: &SplitConfig,
) -> Result<Trajectory> {
    if cfg.h >= cfg.n {
        return invalid(format!("splitting needs h < n, got h = {} and n = {}", cfg.h, cfg.n));
    }
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return invalid("horizon T must be finite and non-negative");
    }
    let f_bar = f.peak_flux();
    rho0.check_range(f.max_density())?;
    let dt = match cfg.dt_override {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return invalid(format!("step override must be positive, got {dt}")),
        None => compute_dt(cfg.h, w, p.lip())?,
    };
    let steps = (cfg.t_end / dt - 1e-12).ceil().max(0.0);
    if steps > cfg.max_steps as f64 {
        return invalid(format!("{steps} steps exceed the cap of {}", cfg.max_steps));
    }
    let steps = steps as u64;
    let ph = StepConstraintApprox::build(p, f_bar, f.max_density(), cfg.h)?;
    let mesh = f.mesh(cfg.n)?;
    let flux = PiecewiseLinearFlux::from_mesh(&mesh);
    let rho0q = quantize_to_mesh(rho0, f, &mesh).profile;

    let xi0 = nonlocal_average(&rho0q, w);
    let mut q = ph.eval(xi0);
    let mut tr = Tracker::new(flux, &rho0q, q)?;
    tr.set_record_paths(cfg.record_paths);
    let meta = SplitMeta { n: cfg.n, h: cfg.h, dt, f_bar, w0: w.at_zero(), lip_p: p.lip(), t_end: cfg.t_end };
    let mut traj = Trajectory::new("split", cfg.t_end, f_bar);
    traj.split = Some(meta);
    traj.initial = Some(rho0q.clone());
    traj.steps.push(StepRecord { ell: 0, t: 0.0, xi: xi0, q, lattice_index: ph.lattice_index(xi0) });
    traj.xi.push(0.0, xi0, q);
    traj.temple.push(temple(&tr, q, 0, &meta));
    traj.sample_invariants(&tr);

    let mut times = cfg.profile_times.clone();
    times.retain(|t| (0.0..=cfg.t_end).contains(t));
    times.sort_by(f64::total_cmp);
    let mut run = Run { tr, traj, meta, pending_profiles: times.into_iter().peekable(), w };
    run.take_profiles_until(0.0)?;

    for ell in 0..steps {
        let last = ell + 1 == steps;
        let boundary = if last { cfg.t_end } else { (ell + 1) as f64 * dt };
        let window = if last { 0.0 } else { BOUNDARY_WINDOW };
        while let Some(te) = run.tr.peek_time() {
            if te > boundary + window {
                break;
            }
            run.take_profiles_until(te)?;
            let before = temple(&run.tr, q, ell, &meta);
            let Some(it) = run.tr.step()? else { break };
            if te > boundary {
                run.traj.shifts.push(BoundaryShift { ell: ell + 1, boundary, event_time: te });
            }
            let kind = if it.at_exit { EventKind::ExitHit } else { EventKind::Collision };
            let label = label_interaction(&it).to_string();
            run.log(&it, kind, label, &before, ell, q);
        }
        run.take_profiles_until(boundary)?;
        if run.tr.now() < boundary {
            run.tr.set_time(boundary)?;
        }
        if last {
            break;
        }
        let rho = run.tr.profile();
        let xi = nonlocal_average(&rho, w);
        let q_new = ph.eval(xi);
        run.traj.steps.push(StepRecord {
            ell: ell + 1,
            t: boundary,
            xi,
            q: q_new,
            lattice_index: ph.lattice_index(xi),
        });
        let before = temple(&run.tr, q, ell, &meta);
        let (minus, plus) = run.tr.exit_traces();
        let label = label_update(run.tr.flux(), q, q_new, minus, plus).to_string();
        let it = match run.tr.resolve_at_exit(q_new, Cause::LevelChange)? {
            Some(it) => it,
            None => Interaction {
                time: run.tr.now(),
                x: 0.0,
                cause: Cause::LevelChange,
                at_exit: true,
                incoming: Vec::new(),
                outgoing: Vec::new(),
                left: minus,
                right: plus,
                level: q_new,
            },
        };
        q = q_new;
        run.log(&it, EventKind::StepBoundary, label, &before, ell + 1, q);
    }
    run.take_profiles_until(cfg.t_end)?;
    let Run { tr, mut traj, .. } = run;
    traj.final_profile = Some(tr.profile());
    traj.paths = tr.finish();
    if traj.mass_drift() > 1e-6 {
        return Err(Error::Internal(format!("mass drift {} in splitting run", traj.mass_drift())));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cfl_step() {
        let w2 = WeightFunction::linear(1.0).unwrap();
        assert_eq!(compute_dt(3, &w2, 1.0).unwrap(), 1.0 / 32.0);
        let w1 = WeightFunction::pwl(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(compute_dt(0, &w1, 0.5).unwrap(), 1.0);
        assert_eq!(compute_dt(4, &w2, 1.0).unwrap(), 0.5 * compute_dt(3, &w2, 1.0).unwrap());
        assert!(compute_dt(3, &w2, 0.0).is_err());
    }

    #[test]
    fn empty_datum_stays_empty() {
        let f = FluxModel::lwr(1.0, 1.0).unwrap();
        let w = WeightFunction::linear(1.0).unwrap();
        let p = LipschitzConstraint::new(vec![0.0, 1.0], vec![0.25, 0.05]).unwrap();
        let rho0 = DensityProfile::constant(0.0).unwrap();
        let traj = run_splitting(&rho0, &f, &w, &p, &SplitConfig::new(6, 3, 1.0)).unwrap();
        assert!(traj.paths.is_empty());
        assert!(traj.steps.iter().all(|s| s.q == 0.25));
    }

    #[test]
    fn queue_forms_with_lattice_drops() {
        let f = FluxModel::lwr(1.0, 1.0).unwrap();
        let w = WeightFunction::linear(1.0).unwrap();
        let p = LipschitzConstraint::new(vec![0.0, 1.0], vec![0.25, 0.05]).unwrap();
        let rho0 = DensityProfile::new(vec![-3.0, -0.5], vec![0.0, 1.0, 0.0]).unwrap();
        let traj = run_splitting(&rho0, &f, &w, &p, &SplitConfig::new(7, 3, 6.0)).unwrap();
        let step = 0.25 / 8.0;
        let drops: Vec<f64> = traj.steps.windows(2).map(|s| s[0].q - s[1].q).collect();
        assert!(drops.iter().any(|&d| d != 0.0));
        assert!(drops.iter().all(|&d| d == 0.0 || (d.abs() - step).abs() < 1e-15));
        assert!(traj.mass_drift() < 1e-9);
    }
}
