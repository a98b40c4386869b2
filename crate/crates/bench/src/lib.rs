//! Fixtures shared by the kernel benchmarks.

use mhr_core::harness::{generate_initial, ExperimentSpec};
use mhr_core::{Grid, NetworkState, Parameters};

/// All-ones parameters at `P = 2 Pmin` for `m` neurons.
pub fn parameters(m: usize) -> Parameters {
    let mut p = Parameters::all_ones(m);
    p.m = m;
    p.coupling_p = 21.375;
    p
}

/// Seeded uniform-random network on `grid`.
pub fn network(grid: &Grid, m: usize, seed: u64) -> NetworkState {
    let mut spec = ExperimentSpec::all_ones_default();
    spec.parameters = parameters(m);
    spec.grid = grid.clone();
    generate_initial(&spec, seed).expect("valid fixture spec")
}
