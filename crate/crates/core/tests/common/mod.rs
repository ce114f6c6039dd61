#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochum_core::{
    AdaptedField, CoefficientProcess, FieldRole, ScenarioTree, SpatialGrid, TerminalData,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_control(rng: &mut ChaCha8Rng, tree: &ScenarioTree, n: usize) -> AdaptedField {
    AdaptedField::from_fn(tree, n, tree.depth(), FieldRole::Control, |_, _| {
        rng.gen_range(-1.0..1.0)
    })
}

pub fn random_terminal(rng: &mut ChaCha8Rng, tree: &ScenarioTree, n: usize) -> TerminalData {
    TerminalData::from_fn(tree, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Per-node coefficient with values in `[-bound, bound]`.
pub fn random_coefficient(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    bound: f64,
) -> CoefficientProcess {
    let count = tree.level_offset(tree.depth());
    CoefficientProcess::PerNode((0..count).map(|_| rng.gen_range(-bound..=bound)).collect())
}

pub fn grid(n: usize, lo: f64, hi: f64) -> SpatialGrid {
    SpatialGrid::new(n, 1.0, lo, hi).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
