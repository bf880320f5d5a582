//! Bell-shaped fluxes, the level mesh and its piecewise-linear interpolant.

use crate::error::{invalid, Error, Result};

/// Absolute tolerance in density used when matching states to mesh nodes.
pub const NODE_TOL: f64 = 1e-12;

/// Common interface of the exact flux and its piecewise-linear approximation.
pub trait BellFlux {
    fn eval(&self, rho: f64) -> f64;
    fn max_density(&self) -> f64;
    fn rho_bar(&self) -> f64;
    /// `f(rho_bar)`.
    fn peak_flux(&self) -> f64;
    /// Characteristic speed. At kinks of a piecewise-linear flux the
    /// right-hand slope is returned (left-hand at the maximal density).
    fn char_speed(&self, rho: f64) -> f64;
    /// The two preimages `(check, hat)` of a flux level, `check <= rho_bar <= hat`.
    fn branches(&self, p: f64) -> Result<(f64, f64)>;

    fn shock_speed(&self, rho_l: f64, rho_r: f64) -> Result<f64> {
        if rho_l == rho_r {
            return invalid("shock speed of equal states is undefined");
        }
        Ok(secant(self.eval(rho_l), self.eval(rho_r), rho_l, rho_r))
    }

    fn psi(&self, rho: f64) -> f64 {
        let gap = self.peak_flux() - self.eval(rho);
        if rho < self.rho_bar() {
            -gap
        } else if rho > self.rho_bar() {
            gap
        } else {
            0.0
        }
    }

    fn psi_inverse(&self, v: f64) -> Result<f64> {
        let top = self.peak_flux();
        if !(v.abs() <= top * (1.0 + 1e-14)) {
            return invalid(format!("psi value {v} outside [-{top}, {top}]"));
        }
        if v < 0.0 {
            Ok(self.branches((top + v).max(0.0))?.0)
        } else if v > 0.0 {
            Ok(self.branches((top - v).max(0.0))?.1)
        } else {
            Ok(self.rho_bar())
        }
    }
}

/// Slope of the chord through `(a, fa)` and `(b, fb)`. Swapping the
/// endpoints negates numerator and denominator, so the result is symmetric.
#[inline]
pub fn secant(fa: f64, fb: f64, a: f64, b: f64) -> f64 {
    (fa - fb) / (a - b)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FluxKind {
    /// `f(rho) = v_max * rho * (1 - rho / R)`.
    Lwr { v_max: f64 },
    /// Strictly concave interpolation of concave samples: the linear
    /// interpolant plus `bend * (rho - x_i) * (x_{i+1} - rho)` on each
    /// segment, so no three mesh nodes are ever collinear.
    Table { rho: Vec<f64>, f: Vec<f64>, bend: f64 },
}

/// The exact flux `f` on `[0, R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxModel {
    kind: FluxKind,
    r: f64,
    rho_bar: f64,
    f_bar: f64,
    lip: f64,
}

impl FluxModel {
    pub fn lwr(v_max: f64, r: f64) -> Result<Self> {
        if !(v_max > 0.0 && v_max.is_finite()) || !(r > 0.0 && r.is_finite()) {
            return invalid(format!("LWR flux needs v_max > 0 and R > 0, got ({v_max}, {r})"));
        }
        Ok(Self { kind: FluxKind::Lwr { v_max }, r, rho_bar: r / 2.0, f_bar: v_max * r / 4.0, lip: v_max })
    }

    /// Tabulated flux. Samples must start at `(0, 0)`, end at `(R, 0)`
    /// and have strictly decreasing chord slopes.
    pub fn table(rho: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if rho.len() != f.len() || rho.len() < 3 {
            return invalid("flux table needs at least three (rho, f) samples of equal length");
        }
        if rho[0] != 0.0 || f[0] != 0.0 || *f.last().unwrap() != 0.0 {
            return Err(Error::Assumption { name: "F", detail: "tabulated flux must satisfy f(0) = 0 = f(R)".into() });
        }
        if rho.windows(2).any(|w| !(w[1] > w[0])) || rho.iter().chain(&f).any(|v| !v.is_finite()) {
            return invalid("flux table densities must be finite and strictly increasing");
        }
        let slopes: Vec<f64> = (0..rho.len() - 1).map(|i| secant(f[i + 1], f[i], rho[i + 1], rho[i])).collect();
        if slopes.windows(2).any(|s| !(s[1] < s[0])) || slopes.contains(&0.0) {
            return Err(Error::Assumption {
                name: "F",
                detail: "tabulated flux must be strictly concave with a single peak node".into(),
            });
        }
        let peak = (1..rho.len() - 1)
            .find(|&i| slopes[i - 1] > 0.0 && slopes[i] < 0.0)
            .ok_or_else(|| Error::Assumption { name: "F", detail: "tabulated flux has no interior maximum".into() })?;
        let widths: Vec<f64> = rho.windows(2).map(|w| w[1] - w[0]).collect();
        // largest admissible bend keeps kinks concave and branches monotone
        let kinks = (1..slopes.len()).map(|i| (slopes[i - 1] - slopes[i]) / (widths[i - 1] + widths[i]));
        let sides = (0..slopes.len()).map(|i| slopes[i].abs() / widths[i]);
        let bend = 0.5 * kinks.chain(sides).fold(f64::INFINITY, f64::min);
        let lip = (0..slopes.len()).fold(0.0_f64, |m, i| m.max(slopes[i].abs() + bend * widths[i]));
        Ok(Self {
            r: *rho.last().unwrap(),
            rho_bar: rho[peak],
            f_bar: f[peak],
            lip,
            kind: FluxKind::Table { rho, f, bend },
        })
    }

    pub fn kind(&self) -> &FluxKind {
        &self.kind
    }

    /// `Lip(f)`, the maximal wave speed.
    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn mesh(&self, n: u32) -> Result<FluxMesh> {
        FluxMesh::build(self, n)
    }
}

impl BellFlux for FluxModel {
    fn eval(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Lwr { v_max } => v_max * rho * (1.0 - rho / self.r),
            FluxKind::Table { rho: xs, f, bend } => {
                let i = segment_of(xs, rho);
                let t = (rho - xs[i]) / (xs[i + 1] - xs[i]);
                f[i] + t * (f[i + 1] - f[i]) + bend * (rho - xs[i]) * (xs[i + 1] - rho)
            }
        }
    }

    fn max_density(&self) -> f64 {
        self.r
    }

    fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    fn peak_flux(&self) -> f64 {
        self.f_bar
    }

    fn char_speed(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Lwr { v_max } => v_max * (1.0 - 2.0 * rho / self.r),
            FluxKind::Table { rho: xs, f, bend } => {
                let i = segment_of(xs, rho);
                secant(f[i + 1], f[i], xs[i + 1], xs[i]) + bend * (xs[i] + xs[i + 1] - 2.0 * rho)
            }
        }
    }

    fn branches(&self, p: f64) -> Result<(f64, f64)> {
        if !(p >= 0.0) || p > self.f_bar * (1.0 + 1e-14) {
            return invalid(format!("flux level {p} outside [0, {}]", self.f_bar));
        }
        let p = p.min(self.f_bar);
        match &self.kind {
            FluxKind::Lwr { v_max } => {
                let r = self.r;
                let disc = (r * r - 4.0 * p * r / v_max).max(0.0).sqrt();
                let hat = 0.5 * (r + disc);
                // Vieta keeps the small root accurate for small p.
                let check = if hat > 0.0 { (p * r / v_max) / hat } else { 0.0 };
                Ok((check.min(self.rho_bar), hat.max(self.rho_bar)))
            }
            FluxKind::Table { rho: xs, f, bend } => {
                let peak = xs.iter().position(|&x| x == self.rho_bar).unwrap();
                // root in the segment of `bend u^2 - b u + (p - f_i) = 0`, in
                // the cancellation-free form
                let invert = |i: usize| {
                    let (x0, x1, f0, f1) = (xs[i], xs[i + 1], f[i], f[i + 1]);
                    let b = secant(f1, f0, x1, x0) + bend * (x1 - x0);
                    let c = p - f0;
                    let disc = (b * b - 4.0 * bend * c).max(0.0).sqrt();
                    let u = 2.0 * c / (b + b.signum() * disc);
                    (x0 + u).clamp(x0, x1)
                };
                let check = if p == self.f_bar {
                    self.rho_bar
                } else {
                    let i = (0..peak).find(|&i| f[i] <= p && p < f[i + 1]).unwrap();
                    invert(i)
                };
                let hat = if p == self.f_bar {
                    self.rho_bar
                } else if p == 0.0 {
                    self.r
                } else {
                    let i = (peak..xs.len() - 1).find(|&i| f[i] > p && p >= f[i + 1]).unwrap();
                    invert(i)
                };
                Ok((check, hat))
            }
        }
    }
}

/// Index `i` of the segment `[xs[i], xs[i+1]]` holding `x`, clamped to the table.
fn segment_of(xs: &[f64], x: f64) -> usize {
    let k = xs.partition_point(|&v| v <= x);
    k.saturating_sub(1).min(xs.len() - 2)
}

/// The level mesh `f^{-1}(2^{-n} f(rho_bar) N)`: `2^{n+1} + 1` sorted densities.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMesh {
    n: u32,
    unit: f64,
    nodes: Vec<f64>,
    levels: Vec<u64>,
}

impl FluxMesh {
    pub fn build(f: &FluxModel, n: u32) -> Result<Self> {
        if !(1..=30).contains(&n) {
            return invalid(format!("mesh exponent must lie in 1..=30, got {n}"));
        }
        let top = 1u64 << n;
        let unit = f.peak_flux() / top as f64;
        let mut nodes = Vec::with_capacity(2 * top as usize + 1);
        let mut levels = Vec::with_capacity(nodes.capacity());
        for k in 0..top {
            nodes.push(if k == 0 { 0.0 } else { f.branches(k as f64 * unit)?.0 });
            levels.push(k);
        }
        nodes.push(f.rho_bar());
        levels.push(top);
        for k in (0..top).rev() {
            nodes.push(if k == 0 { f.max_density() } else { f.branches(k as f64 * unit)?.1 });
            levels.push(k);
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Internal(format!("mesh nodes at n={n} are not strictly sorted")));
        }
        Ok(Self { n, unit, nodes, levels })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Flux spacing `2^{-n} f(rho_bar)`.
    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Integer lattice index of each node's flux value.
    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    pub fn level_values(&self) -> Vec<f64> {
        (0..=(1u64 << self.n)).map(|k| k as f64 * self.unit).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Continuous piecewise-linear flux through a sorted set of nodes that
/// contains `0`, `rho_bar` and `R`. Node fluxes are stored exactly:
/// mesh nodes carry `k * unit`, extra nodes carry the level they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFlux {
    rho: Vec<f64>,
    flux: Vec<f64>,
    peak: usize,
    n: u32,
}

impl PiecewiseLinearFlux {
    pub fn from_mesh(mesh: &FluxMesh) -> Self {
        let flux = mesh.levels.iter().map(|&k| k as f64 * mesh.unit).collect();
        Self { rho: mesh.nodes.clone(), flux, peak: 1usize << mesh.n, n: mesh.n }
    }

    pub fn new(f: &FluxModel, n: u32) -> Result<Self> {
        Ok(Self::from_mesh(&f.mesh(n)?))
    }

    /// Mesh of exponent `n` augmented with the two preimages of each extra level,
    /// so that states such as `hat(p_i)` are represented exactly.
    pub fn with_levels(f: &FluxModel, n: u32, extra: &[f64]) -> Result<Self> {
        let base = Self::new(f, n)?;
        let mut pts: Vec<(f64, f64)> = base.rho.iter().copied().zip(base.flux.iter().copied()).collect();
        for &p in extra {
            if !(p > 0.0 && p <= f.peak_flux()) {
                return invalid(format!("extra level {p} outside (0, f(rho_bar)]"));
            }
            let (c, h) = f.branches(p)?;
            for x in [c, h] {
                let k = pts.partition_point(|&(r, _)| r < x);
                let near = |j: usize| pts.get(j).is_some_and(|&(r, _)| (r - x).abs() <= NODE_TOL);
                if near(k) || (k > 0 && near(k - 1)) {
                    continue;
                }
                pts.insert(k, (x, p));
            }
        }
        let peak = pts.iter().position(|&(r, _)| r == f.rho_bar()).unwrap();
        Ok(Self { rho: pts.iter().map(|p| p.0).collect(), flux: pts.iter().map(|p| p.1).collect(), peak, n })
    }

    /// Mesh exponent the node set was built from.
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.rho
    }

    pub fn node_fluxes(&self) -> &[f64] {
        &self.flux
    }

    #[inline]
    pub fn rho(&self, i: usize) -> f64 {
        self.rho[i]
    }

    #[inline]
    pub fn flux(&self, i: usize) -> f64 {
        self.flux[i]
    }

    pub fn peak_index(&self) -> usize {
        self.peak
    }

    /// Slope of the segment between nodes `i` and `i + 1`.
    #[inline]
    pub fn slope(&self, i: usize) -> f64 {
        secant(self.flux[i + 1], self.flux[i], self.rho[i + 1], self.rho[i])
    }

    /// Speed of the front joining nodes `a` and `b`.
    #[inline]
    pub fn speed(&self, a: usize, b: usize) -> f64 {
        secant(self.flux[a], self.flux[b], self.rho[a], self.rho[b])
    }

    pub fn lip(&self) -> f64 {
        (0..self.len() - 1).fold(0.0_f64, |m, i| m.max(self.slope(i).abs()))
    }

    /// Index of the node equal to `rho` within [`NODE_TOL`].
    pub fn node_of(&self, rho: f64) -> Option<usize> {
        let k = self.rho.partition_point(|&r| r < rho);
        [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.len())
            .find(|&j| (self.rho[j] - rho).abs() <= NODE_TOL)
    }

    pub fn require_node(&self, rho: f64) -> Result<usize> {
        self.node_of(rho).ok_or(Error::OffMesh(rho))
    }

    /// The nodes `(check, hat)` carrying flux `q` on either side of the peak.
    pub fn level_nodes(&self, q: f64) -> Result<(usize, usize)> {
        let tol = 1e-12 * self.flux[self.peak];
        let left = (0..=self.peak).find(|&i| (self.flux[i] - q).abs() <= tol);
        let right = (self.peak..self.len()).rev().find(|&i| (self.flux[i] - q).abs() <= tol);
        match (left, right) {
            (Some(l), Some(r)) => Ok((l, r)),
            _ => Err(Error::LevelNotOnMesh(q)),
        }
    }

    /// `Psi` at node `i`, computed from the exact node flux.
    #[inline]
    pub fn psi_node(&self, i: usize) -> f64 {
        let gap = self.flux[self.peak] - self.flux[i];
        match i.cmp(&self.peak) {
            std::cmp::Ordering::Less => -gap,
            std::cmp::Ordering::Greater => gap,
            std::cmp::Ordering::Equal => 0.0,
        }
    }
}

impl BellFlux for PiecewiseLinearFlux {
    fn eval(&self, rho: f64) -> f64 {
        let i = segment_of(&self.rho, rho);
        let t = (rho - self.rho[i]) / (self.rho[i + 1] - self.rho[i]);
        if t == 0.0 {
            return self.flux[i];
        }
        if t == 1.0 {
            return self.flux[i + 1];
        }
        self.flux[i] + t * (self.flux[i + 1] - self.flux[i])
    }

    fn max_density(&self) -> f64 {
        *self.rho.last().unwrap()
    }

    fn rho_bar(&self) -> f64 {
        self.rho[self.peak]
    }

    fn peak_flux(&self) -> f64 {
        self.flux[self.peak]
    }

    fn char_speed(&self, rho: f64) -> f64 {
        self.slope(segment_of(&self.rho, rho))
    }

    fn branches(&self, p: f64) -> Result<(f64, f64)> {
        let top = self.peak_flux();
        if !(p >= 0.0) || p > top * (1.0 + 1e-14) {
            return invalid(format!("flux level {p} outside [0, {top}]"));
        }
        if let Ok((c, h)) = self.level_nodes(p) {
            return Ok((self.rho[c], self.rho[h]));
        }
        let invert = |i: usize| {
            let (x0, x1, f0, f1) = (self.rho[i], self.rho[i + 1], self.flux[i], self.flux[i + 1]);
            x0 + (p - f0) * (x1 - x0) / (f1 - f0)
        };
        let l = (0..self.peak).find(|&i| self.flux[i] <= p && p < self.flux[i + 1]).unwrap();
        let r = (self.peak..self.len() - 1).find(|&i| self.flux[i] > p && p >= self.flux[i + 1]).unwrap();
        Ok((invert(l), invert(r)))
    }
}

/// `Psi(rho) = sign(rho - rho_bar) (f(rho_bar) - f(rho))` over a given flux.
#[derive(Debug, Clone, Copy)]
pub struct PsiMap<'a, F: BellFlux + ?Sized> {
    flux: &'a F,
}

impl<'a, F: BellFlux + ?Sized> PsiMap<'a, F> {
    pub fn new(flux: &'a F) -> Self {
        Self { flux }
    }

    pub fn psi(&self, rho: f64) -> Result<f64> {
        if !(0.0..=self.flux.max_density()).contains(&rho) {
            return invalid(format!("density {rho} outside [0, R]"));
        }
        Ok(self.flux.psi(rho))
    }

    pub fn inverse(&self, v: f64) -> Result<f64> {
        self.flux.psi_inverse(v)
    }
}
