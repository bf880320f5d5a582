//! Piecewise-constant densities, the exit weight `w` and the non-local average.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flux::{BellFlux, FluxMesh};

/// Piecewise-constant density with finitely many jumps and constant tails.
///
/// `values[0]` holds on `(-inf, breakpoints[0])`, `values[i]` on
/// `[breakpoints[i-1], breakpoints[i])` and the last value on the right tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return invalid(format!(
                "a profile with {} breakpoints needs {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            ));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("breakpoints must be finite and strictly increasing");
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("densities must be finite and non-negative");
        }
        let mut p = Self { breakpoints, values };
        p.merge_equal();
        Ok(p)
    }

    pub fn constant(v: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![v])
    }

    /// `v` on `[a, b)` and zero elsewhere.
    pub fn block(a: f64, b: f64, v: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![0.0, v, 0.0])
    }

    /// Builds a profile from jumps that may share a position; coincident
    /// jumps collapse into one.
    pub fn from_jumps(left_tail: f64, jumps: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut breakpoints: Vec<f64> = Vec::new();
        let mut values = vec![left_tail];
        for (x, right) in jumps {
            if breakpoints.last() == Some(&x) {
                *values.last_mut().unwrap() = right;
            } else {
                breakpoints.push(x);
                values.push(right);
            }
        }
        let mut p = Self { breakpoints, values };
        p.merge_equal();
        p
    }

    fn merge_equal(&mut self) {
        let mut bp = Vec::with_capacity(self.breakpoints.len());
        let mut vals = vec![self.values[0]];
        for (i, &x) in self.breakpoints.iter().enumerate() {
            let v = self.values[i + 1];
            if v != *vals.last().unwrap() {
                bp.push(x);
                vals.push(v);
            }
        }
        self.breakpoints = bp;
        self.values = vals;
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jump_count(&self) -> usize {
        self.breakpoints.len()
    }

    /// Right-continuous evaluation.
    pub fn value_at(&self, x: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|&b| b <= x)]
    }

    /// Value immediately left of `x`.
    pub fn left_limit(&self, x: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|&b| b < x)]
    }

    /// Pieces `(a, b, value)` with infinite ends for the tails.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.breakpoints.len();
        (0..=n).map(move |i| {
            let a = if i == 0 { f64::NEG_INFINITY } else { self.breakpoints[i - 1] };
            let b = if i == n { f64::INFINITY } else { self.breakpoints[i] };
            (a, b, self.values[i])
        })
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut p = Self { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|&v| f(v)).collect() };
        p.merge_equal();
        p
    }

    pub fn check_range(&self, r: f64) -> Result<()> {
        match self.values.iter().find(|&&v| v > r) {
            Some(v) => invalid(format!("density {v} exceeds the maximal density {r}")),
            None => Ok(()),
        }
    }
}

/// Non-decreasing piecewise-linear weight on `[-i_w, 0]` with unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    xs: Vec<f64>,
    ws: Vec<f64>,
    cum: Vec<f64>,
}

impl WeightFunction {
    /// `w(x) = 2 (i_w + x) / i_w^2` on `[-i_w, 0]`.
    pub fn linear(i_w: f64) -> Result<Self> {
        if !(i_w > 0.0 && i_w.is_finite()) {
            return invalid(format!("weight support i_w must be positive, got {i_w}"));
        }
        Self::pwl(vec![-i_w, 0.0], vec![0.0, 2.0 / i_w])
    }

    pub fn pwl(xs: Vec<f64>, ws: Vec<f64>) -> Result<Self> {
        if xs.len() != ws.len() || xs.len() < 2 {
            return invalid("weight needs at least two (x, w) samples of equal length");
        }
        if *xs.last().unwrap() != 0.0 || !(xs[0] < 0.0) || xs.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::Assumption {
                name: "W",
                detail: "weight nodes must increase strictly from -i_w < 0 to 0".into(),
            });
        }
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || ws.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::Assumption {
                name: "W",
                detail: "weight must be non-negative and non-decreasing".into(),
            });
        }
        let mut cum = vec![0.0];
        for j in 0..xs.len() - 1 {
            let area = 0.5 * (ws[j] + ws[j + 1]) * (xs[j + 1] - xs[j]);
            cum.push(cum[j] + area);
        }
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Assumption { name: "W", detail: format!("weight integrates to {total}, expected 1") });
        }
        Ok(Self { xs, ws, cum })
    }

    pub fn i_w(&self) -> f64 {
        -self.xs[0]
    }

    /// `w(0-)`, which is also `sup w`.
    pub fn at_zero(&self) -> f64 {
        *self.ws.last().unwrap()
    }

    /// Weight nodes, `-i_w` first and `0` last.
    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ws)
    }

    fn segment(&self, x: f64, dir: f64) -> Option<usize> {
        let (lo, hi) = (self.xs[0], 0.0);
        if x < lo || x > hi || (x == lo && dir < 0.0) || (x == hi && dir >= 0.0) {
            return None;
        }
        let k = if dir >= 0.0 { self.xs.partition_point(|&v| v <= x) } else { self.xs.partition_point(|&v| v < x) };
        Some(k.saturating_sub(1).min(self.xs.len() - 2))
    }

    fn seg_slope(&self, j: usize) -> f64 {
        (self.ws[j + 1] - self.ws[j]) / (self.xs[j + 1] - self.xs[j])
    }

    /// One-sided value: `w(x+)` for `dir >= 0`, `w(x-)` otherwise.
    pub fn value_dir(&self, x: f64, dir: f64) -> f64 {
        match self.segment(x, dir) {
            Some(j) => self.ws[j] + self.seg_slope(j) * (x - self.xs[j]),
            None => 0.0,
        }
    }

    /// One-sided derivative of `w`, matching [`Self::value_dir`].
    pub fn slope_dir(&self, x: f64, dir: f64) -> f64 {
        self.segment(x, dir).map_or(0.0, |j| self.seg_slope(j))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.value_dir(x, 1.0)
    }

    /// `W(x) = int_{-inf}^x w`, equal to 1 for `x >= 0`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= 0.0 {
            return *self.cum.last().unwrap();
        }
        let j = self.xs.partition_point(|&v| v <= x) - 1;
        let d = x - self.xs[j];
        self.cum[j] + self.ws[j] * d + 0.5 * self.seg_slope(j) * d * d
    }
}

/// `xi = int w rho dx`, evaluated exactly per piece.
pub fn nonlocal_average(rho: &DensityProfile, w: &WeightFunction) -> f64 {
    let lo = -w.i_w();
    rho.pieces()
        .filter(|&(a, b, v)| v != 0.0 && b > lo && a < 0.0)
        .map(|(a, b, v)| v * (w.antiderivative(b) - w.antiderivative(a)))
        .sum()
}

/// `TV(Psi o rho)`.
pub fn tv_psi<F: BellFlux + ?Sized>(rho: &DensityProfile, flux: &F) -> f64 {
    rho.values().windows(2).map(|p| (flux.psi(p[1]) - flux.psi(p[0])).abs()).sum()
}

/// Total mass of a profile with zero tails.
pub fn mass(rho: &DensityProfile) -> Result<f64> {
    let vals = rho.values();
    if vals[0] != 0.0 || *vals.last().unwrap() != 0.0 {
        return invalid("mass is undefined for a profile with nonzero tails");
    }
    Ok(rho.pieces().filter(|p| p.2 != 0.0).map(|(a, b, v)| v * (b - a)).sum())
}

/// Mass restricted to `(-inf, x)`; requires a zero left tail.
pub fn mass_left_of(rho: &DensityProfile, x: f64) -> f64 {
    rho.pieces().filter(|p| p.2 != 0.0 && p.0 < x).map(|(a, b, v)| v * (b.min(x) - a)).sum()
}

/// Exact `L1` distance of two profiles on `[a, b]` by breakpoint merging.
pub fn l1_distance(u: &DensityProfile, v: &DensityProfile, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut cuts: Vec<f64> =
        u.breakpoints().iter().chain(v.breakpoints()).copied().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).map(|s| (u.value_at(s[0]) - v.value_at(s[0])).abs() * (s[1] - s[0])).sum()
}

/// Outcome of [`quantize_to_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub profile: DensityProfile,
    /// Rounding offset used in `Psi` space; `0.5` is nearest-node rounding.
    pub offset: f64,
    pub l1_before: Option<f64>,
    pub l1_after: Option<f64>,
}

impl Quantized {
    /// Whether `||rho_0^n||_1 <= ||rho_0||_1` holds; `None` for infinite mass.
    pub fn l1_not_increased(&self) -> Option<bool> {
        Some(self.l1_after? <= self.l1_before? + 1e-12)
    }
}

/// Rounds every value to a node of the mesh.
///
/// Mesh nodes are equally spaced in `Psi`, so rounding is done there:
/// nearest node first (ties toward `rho_bar`). If that increases
/// `TV(Psi)`, the rounding offset is moved to the candidate with the
/// smallest total variation, which by the coarea formula never exceeds
/// the original one.
pub fn quantize_to_mesh<F: BellFlux + ?Sized>(rho: &DensityProfile, flux: &F, mesh: &FluxMesh) -> Quantized {
    let unit = mesh.unit();
    let top = (1i64) << mesh.n();
    let nodes = mesh.nodes();
    let scaled: Vec<f64> = rho.values().iter().map(|&v| flux.psi(v) / unit).collect();
    let round = |s: f64, offset: f64| -> i64 {
        let k = if offset == 0.5 {
            // nearest, ties toward zero (toward rho_bar)
            let fl = s.floor();
            let frac = s - fl;
            if frac > 0.5 || (frac == 0.5 && fl < 0.0) {
                fl as i64 + 1
            } else {
                fl as i64
            }
        } else {
            (s + offset).floor() as i64
        };
        // snap values that are nodes up to rounding noise
        let k = if (s - s.round()).abs() < 1e-9 { s.round() as i64 } else { k };
        k.clamp(-top, top)
    };
    let tv = |ks: &[i64]| ks.windows(2).map(|p| (p[1] - p[0]).unsigned_abs()).sum::<u64>() as f64 * unit;
    let tv_orig: f64 = scaled.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>() * unit;
    let mut offset = 0.5;
    let mut ks: Vec<i64> = scaled.iter().map(|&s| round(s, offset)).collect();
    if tv(&ks) > tv_orig * (1.0 + 1e-12) + 1e-15 {
        let mut candidates: Vec<f64> = scaled.iter().map(|&s| 1.0 - (s - s.floor())).collect();
        candidates.push(0.0);
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let mut best = (f64::INFINITY, 0.5, ks.clone());
        for c in candidates {
            let c = c.rem_euclid(1.0);
            let trial: Vec<i64> = scaled.iter().map(|&s| round(s, c)).collect();
            let t = tv(&trial);
            if t < best.0 {
                best = (t, c, trial);
            }
        }
        offset = best.1;
        ks = best.2;
    }
    let node = |k: i64| nodes[(k + top) as usize];
    let profile =
        DensityProfile { breakpoints: rho.breakpoints.clone(), values: ks.iter().map(|&k| node(k)).collect() };
    let mut profile = profile;
    profile.merge_equal();
    let l1 = |p: &DensityProfile| mass(p).ok();
    Quantized { l1_before: l1(rho), l1_after: l1(&profile), profile, offset }
}

/// Sampled record of `t -> xi(t)` and the active efficiency.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct XiTrace {
    pub samples: Vec<XiSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiSample {
    pub t: f64,
    pub xi: f64,
    pub q: f64,
}

impl XiTrace {
    pub fn push(&mut self, t: f64, xi: f64, q: f64) {
        // adding +0.0 turns -0.0 into 0.0
        self.samples.push(XiSample { t, xi: xi + 0.0, q });
    }

    /// Largest jump of `xi` between samples taken at the same instant.
    pub fn max_jump_at_equal_times(&self) -> f64 {
        self.samples.windows(2).filter(|p| p[0].t == p[1].t).map(|p| (p[1].xi - p[0].xi).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::FluxModel;

    #[test]
    fn average_of_block() {
        let w = WeightFunction::linear(1.0).unwrap();
        let full = DensityProfile::block(-1.0, 0.0, 1.0).unwrap();
        assert!((nonlocal_average(&full, &w) - 1.0).abs() < 1e-15);
        let half = DensityProfile::block(-0.5, 0.0, 1.0).unwrap();
        assert!((nonlocal_average(&half, &w) - 0.75).abs() < 1e-15);
        assert_eq!(nonlocal_average(&DensityProfile::constant(0.0).unwrap(), &w), 0.0);
        assert!((nonlocal_average(&DensityProfile::constant(1.0).unwrap(), &w) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        assert!(WeightFunction::pwl(vec![-1.0, 0.0], vec![1.0, 1.0]).is_ok());
        assert!(WeightFunction::pwl(vec![-1.0, 0.0], vec![2.0, 0.0]).is_err());
        assert!(WeightFunction::pwl(vec![-1.0, 0.0], vec![1.0, 2.0]).is_err());
        let w = WeightFunction::linear(2.0).unwrap();
        assert_eq!(w.at_zero(), 1.0);
        assert_eq!(w.value_dir(0.0, 1.0), 0.0);
        assert_eq!(w.value_dir(0.0, -1.0), 1.0);
    }

    #[test]
    fn tv_and_mass() {
        let f = FluxModel::lwr(1.0, 1.0).unwrap();
        let jump = DensityProfile::new(vec![0.0], vec![0.0, 1.0]).unwrap();
        assert!((tv_psi(&jump, &f) - 0.5).abs() < 1e-15);
        let block = DensityProfile::block(-5.75, -2.0, 1.0).unwrap();
        assert!((tv_psi(&block, &f) - 1.0).abs() < 1e-15);
        assert!((mass(&block).unwrap() - 3.75).abs() < 1e-15);
        assert!(mass(&jump).is_err());
        let two = DensityProfile::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        assert!((mass(&two).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_neighbours_merge() {
        let p = DensityProfile::new(vec![0.0, 1.0], vec![0.2, 0.2, 0.4]).unwrap();
        assert_eq!(p.breakpoints(), &[1.0]);
    }

    #[test]
    fn quantize_examples() {
        let f = FluxModel::lwr(1.0, 1.0).unwrap();
        let mesh = f.mesh(2).unwrap();
        let p = DensityProfile::block(-1.0, 0.0, 0.07).unwrap();
        let q = quantize_to_mesh(&p, &f, &mesh);
        assert!((q.profile.values()[1] - (1.0 - 0.75f64.sqrt()) / 2.0).abs() < 1e-15);
        let full = DensityProfile::constant(1.0).unwrap();
        assert_eq!(quantize_to_mesh(&full, &f, &mesh).profile.values(), &[1.0]);
    }

    #[test]
    fn quantize_never_raises_tv() {
        let f = FluxModel::lwr(1.0, 1.0).unwrap();
        let mesh = f.mesh(2).unwrap();
        // values straddling a rounding midpoint
        let p = DensityProfile::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.1, 0.11, 0.1, 0.0]).unwrap();
        let q = quantize_to_mesh(&p, &f, &mesh);
        assert!(tv_psi(&q.profile, &f) <= tv_psi(&p, &f) + 1e-15);
    }

    #[test]
    fn l1_window() {
        let u = DensityProfile::block(0.0, 2.0, 1.0).unwrap();
        let v = DensityProfile::block(1.0, 3.0, 1.0).unwrap();
        assert!((l1_distance(&u, &v, -10.0, 10.0) - 2.0).abs() < 1e-15);
        assert!((l1_distance(&u, &v, 0.5, 1.5) - 0.5).abs() < 1e-15);
    }
}
