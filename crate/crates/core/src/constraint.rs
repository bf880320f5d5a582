//! Exit efficiency `p(xi)`: step functions, Lipschitz functions and the
//! lattice staircase that replaces a Lipschitz `p` in the splitting scheme.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

fn check_levels(values: &[f64], f_bar: f64) -> Result<()> {
    if let Some(v) = values.iter().find(|&&v| !(v > 0.0 && v <= f_bar * (1.0 + 1e-14))) {
        return Err(Error::Assumption {
            name: "P0",
            detail: format!("efficiency value {v} outside (0, f(rho_bar)] = (0, {f_bar}]"),
        });
    }
    Ok(())
}

/// Decreasing step efficiency: `p = values[i]` on `(thresholds[i-1], thresholds[i])`.
/// At a threshold only the two one-sided values are exposed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepConstraint {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl StepConstraint {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != thresholds.len() + 1 {
            return invalid("a step efficiency with m thresholds needs m + 1 values");
        }
        if thresholds.windows(2).any(|w| !(w[1] > w[0])) || thresholds.first().is_some_and(|&x| !(x > 0.0)) {
            return Err(Error::Assumption {
                name: "P2",
                detail: "thresholds must be positive and strictly increasing".into(),
            });
        }
        if values.windows(2).any(|w| !(w[1] < w[0])) || values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Assumption {
                name: "P2",
                detail: "efficiency values must be positive and strictly decreasing".into(),
            });
        }
        Ok(Self { thresholds, values })
    }

    /// Constant efficiency.
    pub fn constant(p: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![p])
    }

    /// Checks the levels against the flux peak and thresholds against `R`.
    pub fn validate(&self, f_bar: f64, r: f64) -> Result<()> {
        check_levels(&self.values, f_bar)?;
        if self.thresholds.last().is_some_and(|&x| !(x < r)) {
            return Err(Error::Assumption { name: "P2", detail: format!("thresholds must lie in (0, R) = (0, {r})") });
        }
        Ok(())
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the value `p(xi-)`.
    pub fn index_minus(&self, xi: f64) -> usize {
        self.thresholds.partition_point(|&t| t < xi)
    }

    /// Index of the value `p(xi+)`.
    pub fn index_plus(&self, xi: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= xi)
    }

    pub fn minus(&self, xi: f64) -> f64 {
        self.values[self.index_minus(xi)]
    }

    pub fn plus(&self, xi: f64) -> f64 {
        self.values[self.index_plus(xi)]
    }

    pub fn is_threshold(&self, xi: f64) -> bool {
        self.index_minus(xi) != self.index_plus(xi)
    }
}

/// Non-increasing Lipschitz efficiency, linear between samples and constant
/// outside them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzConstraint {
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl LipschitzConstraint {
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() != ps.len() || xs.is_empty() {
            return invalid("a Lipschitz efficiency needs matching, non-empty xi and p samples");
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().chain(&ps).any(|v| !v.is_finite()) {
            return invalid("efficiency samples must be finite with strictly increasing xi");
        }
        if ps.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Assumption { name: "P1", detail: "efficiency must be non-increasing".into() });
        }
        Ok(Self { xs, ps })
    }

    pub fn validate(&self, f_bar: f64) -> Result<()> {
        check_levels(&self.ps, f_bar)
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ps)
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let n = self.xs.len();
        if xi <= self.xs[0] {
            return self.ps[0];
        }
        if xi >= self.xs[n - 1] {
            return self.ps[n - 1];
        }
        let j = self.xs.partition_point(|&x| x <= xi) - 1;
        let t = (xi - self.xs[j]) / (self.xs[j + 1] - self.xs[j]);
        self.ps[j] + t * (self.ps[j + 1] - self.ps[j])
    }

    pub fn lip(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ps.windows(2))
            .map(|(x, p)| ((p[1] - p[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest `xi >= lo` with `p(xi) <= v`, or `None` if `p > v` on `[lo, hi]`.
    pub fn preimage(&self, v: f64, lo: f64, hi: f64) -> Option<f64> {
        if self.eval(lo) <= v {
            return Some(lo);
        }
        if self.eval(hi) > v {
            return None;
        }
        let n = self.xs.len();
        for j in 0..n - 1 {
            let (a, b) = (self.xs[j].max(lo), self.xs[j + 1].min(hi));
            if !(b > a) {
                continue;
            }
            let (pa, pb) = (self.eval(a), self.eval(b));
            if pb <= v {
                if pa <= v {
                    return Some(a);
                }
                return Some(a + (pa - v) / (pa - pb) * (b - a));
            }
        }
        Some(hi)
    }
}

/// Lattice staircase `p^h`: values drop by exactly `2^{-h} f(rho_bar)` at
/// each threshold. Values are kept as integer multiples of the lattice step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepConstraintApprox {
    h: u32,
    step: f64,
    thresholds: Vec<f64>,
    lattice: Vec<u64>,
    /// `p(0)` was not a lattice value and the first level was snapped down.
    pub snapped_top: bool,
    /// A final threshold closer to `R` than the minimal gap was dropped.
    pub dropped_last: bool,
}

impl StepConstraintApprox {
    pub fn build(p: &LipschitzConstraint, f_bar: f64, r: f64, h: u32) -> Result<Self> {
        p.validate(f_bar)?;
        let step = f_bar / (1u64 << h) as f64;
        let snap = |x: f64| if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
        let top_exact = snap(p.eval(0.0) / step);
        let k_top = top_exact.floor() as u64;
        let k_bot = snap(p.eval(r) / step).ceil().max(1.0) as u64;
        if k_top == 0 {
            return Err(Error::Assumption {
                name: "P1",
                detail: format!("p(0) is below the first lattice level {step}"),
            });
        }
        let lip = p.lip();
        let mut thresholds = Vec::new();
        let mut lattice = vec![k_top];
        let mut k = k_top;
        while k > k_bot {
            k -= 1;
            match p.preimage(k as f64 * step, 0.0, r) {
                Some(x) if x > 0.0 && x < r => {
                    thresholds.push(x);
                    lattice.push(k);
                }
                _ => break,
            }
        }
        let mut dropped_last = false;
        if lip > 0.0 {
            if let Some(&last) = thresholds.last() {
                if r - last < step / lip * (1.0 - 1e-12) {
                    thresholds.pop();
                    lattice.pop();
                    dropped_last = true;
                }
            }
        }
        Ok(Self { h, step, thresholds, lattice, snapped_top: top_exact.fract() != 0.0, dropped_last })
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    /// Lattice step `2^{-h} f(rho_bar)`.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> Vec<f64> {
        self.lattice.iter().map(|&k| k as f64 * self.step).collect()
    }

    /// Lattice index of `p^h(xi)`.
    pub fn lattice_index(&self, xi: f64) -> u64 {
        self.lattice[self.thresholds.partition_point(|&t| t <= xi)]
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.lattice_index(xi) as f64 * self.step
    }

    /// Smallest gap between consecutive thresholds, including `0` and `R`.
    pub fn min_gap(&self, r: f64) -> f64 {
        let mut pts = vec![0.0];
        pts.extend(&self.thresholds);
        pts.push(r);
        pts.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}
