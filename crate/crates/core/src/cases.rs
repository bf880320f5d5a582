//! Case analysis of Riemann data against a step efficiency and the two
//! extremal solvers `R^q` (maximal exit flux) and `R^p` (minimal exit flux).

use std::fmt;

use serde::Serialize;

use crate::constraint::StepConstraint;
use crate::error::Result;
use crate::flux::BellFlux;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CaseLabel {
    C1,
    C2,
    C3,
    C4,
    C5,
    N1,
    N2,
    N3,
    N4a,
    N4b,
    N5a,
    N5b,
    CN2,
    CN3,
    NNN4,
    CNN5,
    NNN5,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 17] = [
        CaseLabel::C1,
        CaseLabel::C2,
        CaseLabel::C3,
        CaseLabel::C4,
        CaseLabel::C5,
        CaseLabel::N1,
        CaseLabel::N2,
        CaseLabel::N3,
        CaseLabel::N4a,
        CaseLabel::N4b,
        CaseLabel::N5a,
        CaseLabel::N5b,
        CaseLabel::CN2,
        CaseLabel::CN3,
        CaseLabel::NNN4,
        CaseLabel::CNN5,
        CaseLabel::NNN5,
    ];

    pub fn is_classical(self) -> bool {
        matches!(self, CaseLabel::C1 | CaseLabel::C2 | CaseLabel::C3 | CaseLabel::C4 | CaseLabel::C5)
    }

    pub fn is_pathological(self) -> bool {
        matches!(self, CaseLabel::CN2 | CaseLabel::CN3 | CaseLabel::NNN4 | CaseLabel::CNN5 | CaseLabel::NNN5)
    }

    pub fn is_nonclassical(self) -> bool {
        !self.is_classical() && !self.is_pathological()
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).unwrap()
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which of the two one-sided values of the efficiency a level came from.
/// Outside thresholds both coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideValues {
    pub minus: f64,
    pub plus: f64,
}

impl SideValues {
    pub fn at(p: &StepConstraint, xi: f64) -> Self {
        Self { minus: p.minus(xi), plus: p.plus(xi) }
    }

    pub fn constant(v: f64) -> Self {
        Self { minus: v, plus: v }
    }
}

/// Classification with the efficiency evaluated at `xi = rho_l`.
pub fn classify<F: BellFlux + ?Sized>(f: &F, p: &StepConstraint, rho_l: f64, rho_r: f64) -> CaseLabel {
    classify_with(f, SideValues::at(p, rho_l), rho_l, rho_r)
}

/// Classification against explicit one-sided values. Conditions are tested in
/// the order C1..C5, N1..N5b, then the pathological cases; equality gaps that
/// none of them covers are closed by the fallbacks at the end of each region.
pub fn classify_with<F: BellFlux + ?Sized>(f: &F, p: SideValues, rho_l: f64, rho_r: f64) -> CaseLabel {
    use CaseLabel::*;
    let (fl, fr) = (f.eval(rho_l), f.eval(rho_r));
    let (pm, pp) = (p.minus, p.plus);
    let rho_bar = f.rho_bar();
    let f_bar = f.peak_flux();
    if rho_l < rho_r {
        if fr < fl {
            return if fr <= pp { C1 } else { N1 };
        }
        return if fl <= pp {
            C2
        } else if fl > pm {
            N2
        } else {
            CN2
        };
    }
    if rho_l <= rho_bar {
        return if fl <= pp {
            C3
        } else if fl > pm {
            N3
        } else {
            CN3
        };
    }
    if rho_r <= rho_bar {
        if f_bar == pp {
            return C4;
        }
        if f_bar != pm && fl < pp {
            return N4a;
        }
        if f_bar != pm && fl > pm {
            return N4b;
        }
        if pm != pp && pp <= fl && fl <= pm {
            return NNN4;
        }
        return if fl > pm { N4b } else { N4a };
    }
    if fr <= pm && fl < pp {
        return C5;
    }
    if fr > pm && fl < pp {
        return N5a;
    }
    if fl > pm {
        return N5b;
    }
    if pm != pp && fr <= pm && pp <= fl {
        return CNN5;
    }
    if pm != pp && rho_r < rho_l && fr > pm && pm >= fl && fl >= pp {
        return NNN5;
    }
    // continuous p with f(rho_l) = p
    if fr <= pm {
        C5
    } else {
        N5a
    }
}

/// A self-similar solution at the exit: classical, or nonclassical at a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalSolution {
    Classical,
    Nonclassical { level: f64 },
}

impl LocalSolution {
    /// Flux through `x = 0` of this solution for the data `(rho_l, rho_r)`.
    pub fn flux_at_zero<F: BellFlux + ?Sized>(&self, f: &F, rho_l: f64, rho_r: f64) -> f64 {
        let g = godunov_flux(f, rho_l, rho_r);
        match *self {
            LocalSolution::Classical => g,
            LocalSolution::Nonclassical { level } => g.min(level),
        }
    }

    /// The constraint level to hand to a constrained Riemann solver.
    pub fn level(&self, f_bar: f64) -> f64 {
        match *self {
            LocalSolution::Classical => f_bar,
            LocalSolution::Nonclassical { level } => level,
        }
    }
}

/// Flux at `x = 0` of the classical Riemann solution.
pub fn godunov_flux<F: BellFlux + ?Sized>(f: &F, rho_l: f64, rho_r: f64) -> f64 {
    if rho_l <= rho_r {
        f.eval(rho_l).min(f.eval(rho_r))
    } else {
        f.eval(f.rho_bar().clamp(rho_r, rho_l))
    }
}

/// All admissible self-similar solutions for the data, without duplicates.
pub fn enumerate_local_solutions<F: BellFlux + ?Sized>(
    f: &F,
    p: SideValues,
    rho_l: f64,
    rho_r: f64,
) -> Vec<LocalSolution> {
    use CaseLabel::*;
    use LocalSolution::*;
    let fl = f.eval(rho_l);
    let nc = |level: f64| Nonclassical { level };
    let mut out = match classify_with(f, p, rho_l, rho_r) {
        C1 | C2 | C3 | C4 | C5 => vec![Classical],
        N4a | N5a => vec![nc(p.minus)],
        N1 | N2 | N3 | N4b | N5b => vec![nc(p.plus)],
        CN2 | CN3 => vec![Classical, nc(p.plus)],
        NNN4 | NNN5 => vec![nc(p.plus), nc(fl), nc(p.minus)],
        CNN5 => vec![Classical, nc(p.plus), nc(fl)],
    };
    let mut seen = Vec::new();
    out.retain(|s| {
        let key = match *s {
            Classical => None,
            Nonclassical { level } => Some(level.to_bits()),
        };
        if seen.contains(&key) {
            false
        } else {
            seen.push(key);
            true
        }
    });
    out
}

/// Solver selection when the efficiency is two-valued at the datum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverPolicy {
    /// Maximal exit flux.
    #[default]
    Rq,
    /// Minimal exit flux.
    Rp,
}

impl SolverPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverPolicy::Rq => "rq",
            SolverPolicy::Rp => "rp",
        }
    }
}

impl std::str::FromStr for SolverPolicy {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rq" => Ok(SolverPolicy::Rq),
            "rp" => Ok(SolverPolicy::Rp),
            other => crate::error::invalid(format!("unknown policy '{other}', expected rq or rp")),
        }
    }
}

pub fn solve<F: BellFlux + ?Sized>(
    f: &F,
    p: SideValues,
    rho_l: f64,
    rho_r: f64,
    policy: SolverPolicy,
) -> LocalSolution {
    use CaseLabel::*;
    use LocalSolution::*;
    let label = classify_with(f, p, rho_l, rho_r);
    match (label, policy) {
        (C1 | C2 | C3 | C4 | C5, _) => Classical,
        (N4a | N5a, _) => Nonclassical { level: p.minus },
        (N1 | N2 | N3 | N4b | N5b, _) => Nonclassical { level: p.plus },
        (CN2 | CN3 | CNN5, SolverPolicy::Rq) => Classical,
        (NNN4 | NNN5, SolverPolicy::Rq) => Nonclassical { level: p.minus },
        (_, SolverPolicy::Rp) => Nonclassical { level: p.plus },
    }
}

pub fn solve_rq<F: BellFlux + ?Sized>(f: &F, p: SideValues, rho_l: f64, rho_r: f64) -> LocalSolution {
    solve(f, p, rho_l, rho_r, SolverPolicy::Rq)
}

pub fn solve_rp<F: BellFlux + ?Sized>(f: &F, p: SideValues, rho_l: f64, rho_r: f64) -> LocalSolution {
    solve(f, p, rho_l, rho_r, SolverPolicy::Rp)
}

/// One elementary wave of an exact self-similar solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolicWave {
    Shock { speed: f64, left: f64, right: f64 },
    Rarefaction { left: f64, right: f64, head: f64, tail: f64 },
    Nonclassical { left: f64, right: f64 },
}

fn classical_waves<F: BellFlux + ?Sized>(f: &F, l: f64, r: f64, out: &mut Vec<SymbolicWave>) {
    if l < r {
        let speed = crate::flux::secant(f.eval(l), f.eval(r), l, r);
        out.push(SymbolicWave::Shock { speed, left: l, right: r });
    } else if l > r {
        out.push(SymbolicWave::Rarefaction { left: l, right: r, head: f.char_speed(l), tail: f.char_speed(r) });
    }
}

/// Exact waves of a local solution, with `hat`/`check` states from the flux branches.
pub fn symbolic_fan<F: BellFlux + ?Sized>(
    f: &F,
    rho_l: f64,
    rho_r: f64,
    sol: LocalSolution,
) -> Result<Vec<SymbolicWave>> {
    let mut out = Vec::new();
    match sol {
        LocalSolution::Nonclassical { level } if godunov_flux(f, rho_l, rho_r) > level => {
            let (check, hat) = f.branches(level)?;
            classical_waves(f, rho_l, hat, &mut out);
            out.push(SymbolicWave::Nonclassical { left: hat, right: check });
            classical_waves(f, check, rho_r, &mut out);
        }
        _ => classical_waves(f, rho_l, rho_r, &mut out),
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCell {
    pub rho_l: f64,
    pub rho_r: f64,
    pub label: CaseLabel,
    pub flux_rq: f64,
    pub flux_rp: f64,
    pub solutions: usize,
}

/// Labels and extremal exit fluxes on an `n x n` grid over `[0, R]^2`.
pub fn region_map<F: BellFlux + Sync + ?Sized>(f: &F, p: &StepConstraint, n: usize) -> Vec<RegionCell> {
    let r = f.max_density();
    let denom = (n.max(2) - 1) as f64;
    let row = |j: usize| -> Vec<RegionCell> {
        let rho_r = r * j as f64 / denom;
        (0..n)
            .map(|i| {
                let rho_l = r * i as f64 / denom;
                let sides = SideValues::at(p, rho_l);
                RegionCell {
                    rho_l,
                    rho_r,
                    label: classify_with(f, sides, rho_l, rho_r),
                    flux_rq: solve_rq(f, sides, rho_l, rho_r).flux_at_zero(f, rho_l, rho_r),
                    flux_rp: solve_rp(f, sides, rho_l, rho_r).flux_at_zero(f, rho_l, rho_r),
                    solutions: enumerate_local_solutions(f, sides, rho_l, rho_r).len(),
                }
            })
            .collect()
    };
    let workers = std::thread::available_parallelism().map_or(1, |k| k.get()).min(n.max(1));
    let rows_per = n.div_ceil(workers.max(1)).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(rows_per)
            .map(|start| {
                let row = &row;
                scope.spawn(move || (start..(start + rows_per).min(n)).flat_map(row).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("region map worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::FluxModel;

    fn lwr() -> FluxModel {
        FluxModel::lwr(1.0, 1.0).unwrap()
    }

    #[test]
    fn labels_from_condition_table() {
        let f = lwr();
        let c = |v| StepConstraint::constant(v).unwrap();
        assert_eq!(classify(&f, &c(0.25), 0.2, 0.3), CaseLabel::C2);
        assert_eq!(classify(&f, &c(0.1), 0.9, 0.1), CaseLabel::N4a);
        let step = StepConstraint::new(vec![0.7], vec![0.24, 0.16]).unwrap();
        assert_eq!(classify(&f, &step, 0.7, 0.5), CaseLabel::NNN4);
    }

    #[test]
    fn nnn4_extremal_fluxes() {
        let f = lwr();
        let step = StepConstraint::new(vec![0.7], vec![0.24, 0.16]).unwrap();
        let sides = SideValues::at(&step, 0.7);
        let all = enumerate_local_solutions(&f, sides, 0.7, 0.5);
        assert_eq!(all.len(), 3);
        let q = solve_rq(&f, sides, 0.7, 0.5).flux_at_zero(&f, 0.7, 0.5);
        let p = solve_rp(&f, sides, 0.7, 0.5).flux_at_zero(&f, 0.7, 0.5);
        assert!((q - 0.24).abs() < 1e-15 && (p - 0.16).abs() < 1e-15);
    }

    #[test]
    fn every_grid_point_has_one_consistent_label() {
        let f = lwr();
        let p = StepConstraint::new(vec![0.3, 0.7], vec![0.25, 0.2, 0.1]).unwrap();
        for cell in region_map(&f, &p, 101) {
            let s = SideValues::at(&p, cell.rho_l);
            if cell.label.is_pathological() {
                let fl = f.eval(cell.rho_l);
                assert!(s.minus != s.plus && s.minus >= fl && fl >= s.plus, "{cell:?}");
            }
            assert_eq!(cell.solutions == 1, !cell.label.is_pathological(), "{cell:?}");
            assert!(cell.flux_rq >= cell.flux_rp);
        }
    }

    #[test]
    fn nonclassical_fan_states() {
        let f = lwr();
        let waves = symbolic_fan(&f, 1.0, 0.0, LocalSolution::Nonclassical { level: 0.1 }).unwrap();
        assert_eq!(waves.len(), 3);
        match waves[1] {
            SymbolicWave::Nonclassical { left, right } => {
                assert!((left - 0.887298).abs() < 1e-6 && (right - 0.112702).abs() < 1e-6);
            }
            w => panic!("unexpected {w:?}"),
        }
    }
}
