//! Everything an engine run leaves behind.

use serde::Serialize;

use crate::flux::PiecewiseLinearFlux;
use crate::profile::{mass, mass_left_of, DensityProfile, XiTrace};
use crate::riemann::{FrontKind, WaveFront};
use crate::tracker::{FrontPath, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Collision,
    ExitHit,
    StepBoundary,
    XiCrossing,
    LevelChange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub location: f64,
    pub label: Option<String>,
    pub delta_upsilon: Option<f64>,
    pub waves_before: usize,
    pub waves_after: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub incoming: Vec<WaveRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outgoing: Vec<WaveRecord>,
}

/// A front with its states as densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveRecord {
    pub speed: f64,
    pub rho_left: f64,
    pub rho_right: f64,
    pub kind: FrontKind,
}

impl WaveRecord {
    pub fn new(w: &WaveFront, f: &PiecewiseLinearFlux) -> Self {
        Self { speed: w.speed, rho_left: f.rho(w.left), rho_right: f.rho(w.right), kind: w.kind }
    }

    pub fn list(ws: &[WaveFront], f: &PiecewiseLinearFlux) -> Vec<Self> {
        ws.iter().map(|w| Self::new(w, f)).collect()
    }

    /// Whether the states match `(l, r)` up to `tol`.
    pub fn joins(&self, l: f64, r: f64, tol: f64) -> bool {
        (self.rho_left - l).abs() <= tol && (self.rho_right - r).abs() <= tol
    }
}

/// Direction of a threshold crossing of `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// `xi(time)` crosses the threshold `thresholds[index]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiCrossing {
    pub time: f64,
    pub index: usize,
    pub direction: Direction,
}

/// Terms of the Temple functional at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TempleRecord {
    pub t: f64,
    pub tv_psi: f64,
    pub gamma: f64,
    pub big_gamma: f64,
    pub upsilon: f64,
    pub wave_count: usize,
}

/// Constraint update at the start of step `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub ell: u64,
    pub t: f64,
    pub xi: f64,
    pub q: f64,
    pub lattice_index: u64,
}

/// Conservation and trace data sampled at a logged instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantSample {
    pub t: f64,
    pub mass: Option<f64>,
    pub flux_minus: f64,
    pub flux_plus: f64,
    pub level: f64,
    pub queue: bool,
    /// Mass on `x < 0`.
    pub upstream: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSnapshot {
    pub t: f64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

/// An event that fell within the boundary window and was processed before
/// the constraint update of step `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryShift {
    pub ell: u64,
    pub boundary: f64,
    pub event_time: f64,
}

/// Parameters of a splitting run needed by the post-hoc checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMeta {
    pub n: u32,
    pub h: u32,
    pub dt: f64,
    pub f_bar: f64,
    pub w0: f64,
    pub lip_p: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub engine: String,
    pub t_end: f64,
    pub f_bar: f64,
    pub initial: Option<DensityProfile>,
    pub final_profile: Option<DensityProfile>,
    pub paths: Vec<FrontPath>,
    pub xi: XiTrace,
    pub events: Vec<EventRecord>,
    pub temple: Vec<TempleRecord>,
    pub steps: Vec<StepRecord>,
    pub invariants: Vec<InvariantSample>,
    pub profiles: Vec<ProfileSnapshot>,
    pub shifts: Vec<BoundaryShift>,
    pub split: Option<SplitMeta>,
    pub crossings: Vec<XiCrossing>,
}

impl Trajectory {
    pub fn new(engine: &str, t_end: f64, f_bar: f64) -> Self {
        Self { engine: engine.to_string(), t_end, f_bar, ..Default::default() }
    }

    pub fn snapshot(&mut self, t: f64, rho: &DensityProfile) {
        self.profiles.push(ProfileSnapshot {
            t,
            breakpoints: rho.breakpoints().to_vec(),
            values: rho.values().to_vec(),
        });
    }

    /// Samples mass and exit traces from the tracker.
    pub fn sample_invariants(&mut self, tr: &Tracker) {
        let (m, p) = tr.exit_traces();
        let f = tr.flux();
        let rho = tr.profile();
        self.invariants.push(InvariantSample {
            t: tr.now(),
            mass: mass(&rho).ok(),
            flux_minus: f.flux(m),
            flux_plus: f.flux(p),
            level: tr.level(),
            queue: tr.has_exit_queue(),
            upstream: mass_left_of(&rho, 0.0),
        });
    }

    /// Largest `|mass(t) - mass(0)|` over the samples with finite mass.
    pub fn mass_drift(&self) -> f64 {
        let mut it = self.invariants.iter().filter_map(|s| s.mass);
        let Some(m0) = it.next() else { return 0.0 };
        it.map(|m| (m - m0).abs()).fold(0.0, f64::max)
    }

    /// Largest `|f(rho(0-)) - f(rho(0+))|` over the samples.
    pub fn trace_mismatch(&self) -> f64 {
        self.invariants.iter().map(|s| (s.flux_minus - s.flux_plus).abs()).fold(0.0, f64::max)
    }
}
