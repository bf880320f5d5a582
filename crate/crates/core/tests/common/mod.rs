#![allow(dead_code)]

use nloc_lwr::constraint::LipschitzConstraint;
use nloc_lwr::flux::{BellFlux, FluxModel};
use nloc_lwr::profile::{DensityProfile, WeightFunction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// LWR with random speed and jam density, or a random strictly concave table.
pub fn random_flux(rng: &mut Rng64) -> FluxModel {
    let r = rng.gen_range(0.5..2.0);
    if rng.gen_bool(0.5) {
        return FluxModel::lwr(rng.gen_range(0.5..2.0), r).unwrap();
    }
    let k = rng.gen_range(3..7);
    let xs: Vec<f64> = (0..=k).map(|i| r * i as f64 / k as f64).collect();
    let mut d = vec![0.0];
    for _ in 1..k {
        let last = *d.last().unwrap();
        d.push(last + rng.gen_range(0.2..1.0));
    }
    let width = r / k as f64;
    let c = d.iter().sum::<f64>() * width / r;
    let mut fs = vec![0.0];
    for di in &d {
        let last = *fs.last().unwrap();
        fs.push(last + (c - di) * width);
    }
    *fs.last_mut().unwrap() = 0.0;
    FluxModel::table(xs, fs).unwrap()
}

/// Non-increasing piecewise-linear efficiency with values in `(0, f(rho_bar)]`.
pub fn random_constraint(rng: &mut Rng64, f: &FluxModel) -> LipschitzConstraint {
    let r = f.max_density();
    let top = f.peak_flux() * rng.gen_range(0.6..1.0);
    let bottom = top * rng.gen_range(0.1..0.6);
    let k = rng.gen_range(1..4);
    let mut xs: Vec<f64> = (0..=k).map(|_| rng.gen_range(0.0..r)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ps: Vec<f64> = (0..xs.len()).map(|_| rng.gen_range(bottom..top)).collect();
    ps.sort_by(|a, b| b.total_cmp(a));
    if xs.len() == 1 {
        xs.push(xs[0] + 0.1 * r);
        ps.push(bottom);
    }
    ps[0] = top;
    *ps.last_mut().unwrap() = bottom;
    LipschitzConstraint::new(xs, ps).unwrap()
}

pub fn random_weight(rng: &mut Rng64) -> WeightFunction {
    if rng.gen_bool(0.5) {
        WeightFunction::linear(rng.gen_range(0.5..2.0)).unwrap()
    } else {
        let i_w = rng.gen_range(0.5..2.0);
        WeightFunction::pwl(vec![-i_w, 0.0], vec![1.0 / i_w, 1.0 / i_w]).unwrap()
    }
}

/// A few blocks of random density left of, around and right of the exit.
pub fn random_datum(rng: &mut Rng64, r: f64) -> DensityProfile {
    let k = rng.gen_range(1..5);
    let mut xs: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(-3.0..1.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.retain(|&x| x != 0.0);
    if xs.len() % 2 == 1 {
        xs.pop();
    }
    let mut values = vec![0.0];
    for i in 0..xs.len() {
        values.push(if i % 2 == 0 { rng.gen_range(0.0..=r) } else { 0.0 });
    }
    if xs.is_empty() {
        return DensityProfile::block(-2.0, -1.0, 0.9 * r).unwrap();
    }
    DensityProfile::new(xs, values).unwrap()
}
