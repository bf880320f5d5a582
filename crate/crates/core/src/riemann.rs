//! Riemann solvers for a piecewise-linear flux, with and without the
//! point constraint at `x = 0`. States are node indices of the flux.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flux::{BellFlux, PiecewiseLinearFlux};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontKind {
    Shock,
    /// One element of a discretized rarefaction.
    Fan,
    /// Stationary non-entropic jump at the exit carrying the constraint flux.
    Nonclassical,
}

impl FrontKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrontKind::Shock => "shock",
            FrontKind::Fan => "fan",
            FrontKind::Nonclassical => "nonclassical",
        }
    }
}

/// A single self-similar front, states given as node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveFront {
    pub speed: f64,
    pub left: usize,
    pub right: usize,
    pub kind: FrontKind,
}

/// Ordered fronts of a self-similar solution, slowest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveFan {
    pub fronts: Vec<WaveFront>,
}

impl WaveFan {
    pub fn is_empty(&self) -> bool {
        self.fronts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.fronts.len()
    }

    pub fn has_nonclassical(&self) -> bool {
        self.fronts.iter().any(|f| f.kind == FrontKind::Nonclassical)
    }

    /// Node index of the state seen at `x = 0+` (right of any stationary front).
    pub fn trace_right(&self, left: usize) -> usize {
        self.fronts.iter().take_while(|f| f.speed <= 0.0).last().map_or(left, |f| f.right)
    }

    /// Node index of the state seen at `x = 0-`.
    pub fn trace_left(&self, left: usize) -> usize {
        self.fronts.iter().take_while(|f| f.speed < 0.0).last().map_or(left, |f| f.right)
    }

    /// Flux through `x = 0`.
    pub fn flux_at_zero(&self, flux: &PiecewiseLinearFlux, left: usize) -> f64 {
        flux.flux(self.trace_right(left))
    }

    pub fn densities(&self, flux: &PiecewiseLinearFlux) -> Vec<(f64, f64, f64, FrontKind)> {
        self.fronts.iter().map(|f| (f.speed, flux.rho(f.left), flux.rho(f.right), f.kind)).collect()
    }
}

/// Entropy solution of the unconstrained problem between nodes `l` and `r`:
/// the lower convex hull of the flux for `l < r`, the upper concave hull
/// for `l > r`. Hull edges joining adjacent nodes on a decreasing jump are
/// fan fronts; all other edges are shocks.
pub fn classical_fronts(f: &PiecewiseLinearFlux, l: usize, r: usize) -> Vec<WaveFront> {
    if l == r {
        return Vec::new();
    }
    let (lo, hi) = (l.min(r), l.max(r));
    let upper = l > r;
    let cross = |o: usize, a: usize, b: usize| {
        (f.rho(a) - f.rho(o)) * (f.flux(b) - f.flux(o)) - (f.flux(a) - f.flux(o)) * (f.rho(b) - f.rho(o))
    };
    let mut hull: Vec<usize> = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        while hull.len() >= 2 {
            let c = cross(hull[hull.len() - 2], hull[hull.len() - 1], k);
            if (upper && c >= 0.0) || (!upper && c <= 0.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    if upper {
        hull.reverse();
    }
    hull.windows(2)
        .map(|e| {
            let (a, b) = (e[0], e[1]);
            let kind = if upper && a == b + 1 { FrontKind::Fan } else { FrontKind::Shock };
            WaveFront { speed: f.speed(a, b), left: a, right: b, kind }
        })
        .collect()
}

pub fn classical_riemann(f: &PiecewiseLinearFlux, rho_l: f64, rho_r: f64) -> Result<WaveFan> {
    let (l, r) = (f.require_node(rho_l)?, f.require_node(rho_r)?);
    Ok(WaveFan { fronts: classical_fronts(f, l, r) })
}

/// Constrained solution at the exit with efficiency `q`, on node indices.
/// Returns the classical fan when its flux at `x = 0` does not exceed `q`.
pub fn constrained_fronts(f: &PiecewiseLinearFlux, l: usize, r: usize, q: f64) -> Result<Vec<WaveFront>> {
    if !(q > 0.0) {
        return invalid(format!("exit efficiency must be positive, got {q}"));
    }
    let classical = classical_fronts(f, l, r);
    let fan = WaveFan { fronts: classical };
    let tol = 1e-12 * f.peak_flux();
    if fan.flux_at_zero(f, l) <= q + tol {
        return Ok(fan.fronts);
    }
    let (check, hat) = f.level_nodes(q)?;
    let mut out = classical_fronts(f, l, hat);
    let mut nc = WaveFront { speed: 0.0, left: hat, right: check, kind: FrontKind::Nonclassical };
    // fold stationary neighbours into the nonclassical jump
    while out.last().is_some_and(|w| w.speed == 0.0) {
        nc.left = out.pop().unwrap().left;
    }
    debug_assert!(out.iter().all(|w| w.speed < 0.0));
    let mut right = classical_fronts(f, check, r);
    debug_assert!(right.iter().all(|w| w.speed >= 0.0));
    let skip = right.iter().take_while(|w| w.speed == 0.0).count();
    if skip > 0 {
        nc.right = right[skip - 1].right;
        right.drain(..skip);
    }
    if nc.left != nc.right {
        out.push(nc);
    }
    out.extend(right);
    Ok(out)
}

pub fn constrained_local_riemann(f: &PiecewiseLinearFlux, rho_l: f64, rho_r: f64, q: f64) -> Result<WaveFan> {
    let (l, r) = (f.require_node(rho_l)?, f.require_node(rho_r)?);
    Ok(WaveFan { fronts: constrained_fronts(f, l, r, q)? })
}
