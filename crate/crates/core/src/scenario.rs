//! Scenario files: a versioned JSON description of one run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cases::SolverPolicy;
use crate::constraint::{LipschitzConstraint, StepConstraint, StepConstraintApprox};
use crate::error::{invalid, Error, Result};
use crate::exact::{corridor_points, evacuation_time, run_exact, CorridorPoints, EvacuationReport, ExactConfig};
use crate::flux::{BellFlux, FluxModel, PiecewiseLinearFlux};
use crate::monitor::{
    check_conservation, check_efficiency_jumps, check_exit_level, check_temple_monotone, check_tv_bound,
    check_xi_continuity, validate_entropy, CheckReport,
};
use crate::profile::{DensityProfile, WeightFunction};
use crate::split::{run_splitting, SplitConfig};
use crate::trajectory::Trajectory;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FluxSpec {
    Lwr {
        v_max: f64,
        #[serde(rename = "R")]
        r: f64,
    },
    Table {
        rho: Vec<f64>,
        f: Vec<f64>,
    },
}

impl FluxSpec {
    pub fn build(&self) -> Result<FluxModel> {
        match self {
            FluxSpec::Lwr { v_max, r } => FluxModel::lwr(*v_max, *r),
            FluxSpec::Table { rho, f } => FluxModel::table(rho.clone(), f.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightSpec {
    Linear { i_w: f64 },
    Pwl { x: Vec<f64>, w: Vec<f64> },
}

impl WeightSpec {
    pub fn build(&self) -> Result<WeightFunction> {
        match self {
            WeightSpec::Linear { i_w } => WeightFunction::linear(*i_w),
            WeightSpec::Pwl { x, w } => WeightFunction::pwl(x.clone(), w.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstraintSpec {
    /// Piecewise constant in `xi`: `values[i]` on `[thresholds[i-1], thresholds[i])`.
    Step { thresholds: Vec<f64>, values: Vec<f64> },
    /// Linear between samples `(xi, p)`.
    Lipschitz { xi: Vec<f64>, p: Vec<f64> },
}

impl ConstraintSpec {
    pub fn step(&self) -> Result<StepConstraint> {
        match self {
            ConstraintSpec::Step { thresholds, values } => StepConstraint::new(thresholds.clone(), values.clone()),
            ConstraintSpec::Lipschitz { .. } => invalid("exact requires step p"),
        }
    }

    pub fn lipschitz(&self) -> Result<LipschitzConstraint> {
        match self {
            ConstraintSpec::Lipschitz { xi, p } => LipschitzConstraint::new(xi.clone(), p.clone()),
            ConstraintSpec::Step { .. } => invalid("split requires Lipschitz p"),
        }
    }
}

/// Piecewise constant datum: `values` has one more entry than `breakpoints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EngineSpec {
    Split {
        n: u32,
        h: u32,
    },
    Exact {
        n_fan: u32,
        #[serde(default)]
        policy: SolverPolicy,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub profile_times: Vec<f64>,
    #[serde(default)]
    pub svg: bool,
    /// Resolution of the region map raster.
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub flux: FluxSpec,
    pub weight: WeightSpec,
    pub constraint: ConstraintSpec,
    pub initial: InitialSpec,
    pub engine: EngineSpec,
    pub t_end: f64,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Everything a run produces besides the files.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub checks: Vec<CheckReport>,
    pub evacuation: Option<EvacuationReport>,
    pub corridor: Option<CorridorPoints>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Builds every model once, so assumption violations surface at load.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return invalid(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return invalid("t_end must be finite and non-negative");
        }
        let f = self.flux.build()?;
        self.weight.build()?;
        self.initial()?.check_range(f.max_density())?;
        match self.engine {
            EngineSpec::Split { n, h } => {
                if h >= n {
                    return invalid(format!("splitting needs h < n, got h = {h} and n = {n}"));
                }
                self.constraint.lipschitz()?.validate(f.peak_flux())
            }
            EngineSpec::Exact { .. } => self.constraint.step()?.validate(f.peak_flux(), f.max_density()),
        }
    }

    pub fn initial(&self) -> Result<DensityProfile> {
        DensityProfile::new(self.initial.breakpoints.clone(), self.initial.values.clone())
    }

    /// Step efficiency for classification; a Lipschitz one is replaced by
    /// its lattice approximation at the run's `h`.
    pub fn step_constraint(&self) -> Result<StepConstraint> {
        match (&self.constraint, &self.engine) {
            (ConstraintSpec::Step { .. }, _) => self.constraint.step(),
            (ConstraintSpec::Lipschitz { .. }, EngineSpec::Split { h, .. }) => {
                let f = self.flux.build()?;
                let ph =
                    StepConstraintApprox::build(&self.constraint.lipschitz()?, f.peak_flux(), f.max_density(), *h)?;
                StepConstraint::new(ph.thresholds().to_vec(), ph.values())
            }
            (ConstraintSpec::Lipschitz { .. }, EngineSpec::Exact { .. }) => self.constraint.step(),
        }
    }

    pub fn run(&self) -> Result<RunOutput> {
        let f = self.flux.build()?;
        let w = self.weight.build()?;
        let rho0 = self.initial()?;
        match self.engine {
            EngineSpec::Split { n, h } => {
                let p = self.constraint.lipschitz()?;
                let mut cfg = SplitConfig::new(n, h, self.t_end);
                cfg.profile_times = self.output.profile_times.clone();
                let traj = run_splitting(&rho0, &f, &w, &p, &cfg)?;
                let pl = PiecewiseLinearFlux::from_mesh(&f.mesh(n)?);
                let levels: Vec<f64> = traj.steps.iter().map(|s| s.q).collect();
                let checks = vec![
                    check_efficiency_jumps(&traj),
                    check_temple_monotone(&traj),
                    check_tv_bound(&traj),
                    check_conservation(&traj),
                    validate_entropy(&traj.paths, &pl, &levels),
                ];
                Ok(RunOutput { trajectory: traj, checks, evacuation: None, corridor: None })
            }
            EngineSpec::Exact { n_fan, policy } => {
                let p = self.constraint.step()?;
                let mut cfg = ExactConfig::new(n_fan, self.t_end, policy);
                cfg.profile_times = self.output.profile_times.clone();
                let traj = run_exact(&rho0, &f, &w, &p, &cfg)?;
                let pl = PiecewiseLinearFlux::with_levels(&f, n_fan, p.values())?;
                let checks = vec![
                    check_conservation(&traj),
                    check_exit_level(&traj),
                    check_xi_continuity(&traj),
                    validate_entropy(&traj.paths, &pl, p.values()),
                ];
                let evacuation = Some(evacuation_time(&traj));
                let corridor = Some(corridor_points(&traj, &f, &w, &p)?);
                Ok(RunOutput { trajectory: traj, checks, evacuation, corridor })
            }
        }
    }
}

/// The corridor evacuation: unit LWR flux, linear weight on `[-1, 0]`, a
/// three-level exit efficiency and a block of maximal density behind it.
pub fn sec5_scenario() -> Scenario {
    Scenario {
        schema: SCHEMA_VERSION,
        name: "sec5".into(),
        flux: FluxSpec::Lwr { v_max: 1.0, r: 1.0 },
        weight: WeightSpec::Linear { i_w: 1.0 },
        constraint: ConstraintSpec::Step { thresholds: vec![0.566, 0.731], values: vec![0.21, 0.168, 0.021] },
        initial: InitialSpec { breakpoints: vec![-5.75, -2.0], values: vec![0.0, 1.0, 0.0] },
        engine: EngineSpec::Exact { n_fan: 12, policy: SolverPolicy::Rq },
        t_end: 95.0,
        output: OutputSpec { profile_times: vec![2.0, 5.0, 10.0, 20.0, 50.0, 86.0], svg: true, grid: Some(201) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let sc = sec5_scenario();
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sec5_scenario().to_json()).unwrap();
        v["colour"] = serde_json::json!("blue");
        assert!(Scenario::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&sec5_scenario().to_json()).unwrap();
        v["flux"]["vmax"] = serde_json::json!(1.0);
        assert!(Scenario::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&sec5_scenario().to_json()).unwrap();
        v["schema"] = serde_json::json!(2);
        assert!(Scenario::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn engine_constraint_compatibility() {
        let mut sc = sec5_scenario();
        sc.engine = EngineSpec::Split { n: 6, h: 3 };
        let err = sc.validate().unwrap_err();
        assert!(err.to_string().contains("split requires Lipschitz p"));
        sc.engine = EngineSpec::Exact { n_fan: 6, policy: SolverPolicy::Rq };
        sc.constraint = ConstraintSpec::Lipschitz { xi: vec![0.0, 1.0], p: vec![0.2, 0.1] };
        assert!(sc.validate().unwrap_err().to_string().contains("exact requires step p"));
    }

    #[test]
    fn assumption_names_surface() {
        let mut sc = sec5_scenario();
        sc.flux = FluxSpec::Table { rho: vec![0.0, 0.5, 1.0], f: vec![0.0, 0.2, 0.1] };
        assert!(matches!(sc.validate(), Err(Error::Assumption { name: "F", .. })));
    }
}
