//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use lpgeo_core::{build_grid, sample_factor, ExampleFamily, Grid, Manifold, ScalarField};

pub const SEED: u64 = 20240917;

pub fn unit_torus(n: usize) -> Arc<Grid> {
    Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), n).unwrap())
}

/// Spike member `j` with `alpha = 1/2` sampled on the unit torus.
pub fn spike_field(n: usize, j: u64) -> ScalarField {
    let fam = ExampleFamily::spike(0.5, vec![j]).unwrap();
    sample_factor(&fam.factor_spec(j).unwrap(), &unit_torus(n)).unwrap()
}

/// The same member with its closed form dropped, forcing sampled edge
/// quadrature and plain Dijkstra.
pub fn sampled_spike_field(n: usize, j: u64) -> ScalarField {
    spike_field(n, j).samples_only()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(spike_field(16, 8).values().len(), 256);
        assert!(sampled_spike_field(16, 8).analytic().is_none());
    }
}
