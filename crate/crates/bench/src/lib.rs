//! Benchmark fixtures.

use std::sync::Arc;

use gfrag_core::{make_grid, Coefficients, FragmentKernel, Grid, GridMeasure, GridScheme};

/// `g = x`, `B = x^b` on a dyadic grid over `[1e-4, x_max]` with `q` cells per octave.
pub fn selfsim_fixture(b: f64, q: usize, x_max: f64) -> (Arc<Grid>, Coefficients, FragmentKernel) {
    let grid = make_grid(1e-4, x_max, GridScheme::DyadicLog(q)).expect("valid grid");
    let coeffs = Coefficients::power_law(1.0, 1.0, b, 1.0).expect("valid coefficients");
    (grid, coeffs, FragmentKernel::Uniform)
}

/// Normalised `x e^{-x}` on the grid.
pub fn smooth_state(grid: &Arc<Grid>) -> GridMeasure {
    GridMeasure::from_density(grid, |x| x * (-x).exp())
}

/// Random-looking but fixed `n`-state stochastic matrix.
pub fn fixed_chain(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..n).map(|j| 1.0 + ((i * 7 + j * 13) % 11) as f64).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect()
}
