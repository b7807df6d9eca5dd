//! Property tests for the structural invariants of distances, potentials,
//! bad sets and the example profiles.

use std::sync::Arc;

use lpgeo_core::field::bridge;
use lpgeo_core::*;
use proptest::prelude::*;

const N: usize = 10;

fn unit_grid(n: usize) -> Arc<Grid> {
    Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), n).unwrap())
}

fn field(values: Vec<f64>) -> ScalarField {
    ScalarField::from_values(unit_grid(N), values).unwrap()
}

/// Node indices of the axis and diagonal neighbors of `i` on the `N x N` torus.
fn neighbors(i: usize) -> Vec<usize> {
    let (a, b) = (i % N, i / N);
    let mut out = Vec::new();
    for (da, db) in [(1, 0), (0, 1), (1, 1), (1, N - 1)] {
        out.push((a + da) % N + ((b + db) % N) * N);
    }
    out
}

fn positive_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..5.0, N * N)
}

fn point() -> impl Strategy<Value = Point> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(x, y)| Point::new(&[x, y]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distance_field_is_lipschitz_in_edge_weights(values in positive_values(), source in 0..N * N) {
        let f = field(values);
        let solver = Solver::new(&f, SolverConfig::with_radius(2)).unwrap();
        let d = solver.single_source(source).unwrap();
        prop_assert_eq!(d.dist[source], 0.0);
        for u in 0..N * N {
            prop_assert!(d.dist[u].is_finite());
            for v in neighbors(u) {
                let w = solver.edge_weight(u, v).unwrap();
                prop_assert!((d.dist[u] - d.dist[v]).abs() <= w * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn distances_are_monotone_in_the_factor(
        values in positive_values(),
        bumps in prop::collection::vec(0.0f64..2.0, N * N),
        source in 0..N * N,
    ) {
        let bigger: Vec<f64> = values.iter().zip(&bumps).map(|(v, b)| v + b).collect();
        let cfg = SolverConfig::with_radius(2);
        let d = single_source(&field(values), source, cfg).unwrap();
        let e = single_source(&field(bigger), source, cfg).unwrap();
        for (a, b) in d.dist.iter().zip(&e.dist) {
            prop_assert!(*a <= b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn distances_scale_with_the_factor(values in positive_values(), c in 0.1f64..10.0, source in 0..N * N) {
        let f = field(values);
        let cfg = SolverConfig::with_radius(2);
        let d = single_source(&f, source, cfg).unwrap();
        let e = single_source(&f.scale(c), source, cfg).unwrap();
        for (a, b) in d.dist.iter().zip(&e.dist) {
            prop_assert!((c * a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn factors_above_one_never_shorten_distances(values in prop::collection::vec(1.0f64..4.0, N * N), a in 0..N * N, b in 0..N * N) {
        let f = field(values);
        let g = f.grid().clone();
        let d = Solver::new(&f, SolverConfig::with_radius(3)).unwrap().node_distance(a, b).unwrap();
        prop_assert!(d >= g0_distance(g.manifold(), g.node(a), g.node(b)) * (1.0 - 1e-12));
    }

    #[test]
    fn g0_distance_is_a_metric(x in point(), y in point(), z in point()) {
        let m = Manifold::torus(2, 1.0).unwrap();
        let (xy, yz, xz) = (g0_distance(&m, &x, &y), g0_distance(&m, &y, &z), g0_distance(&m, &x, &z));
        prop_assert!((xy - g0_distance(&m, &y, &x)).abs() < 1e-15);
        prop_assert!(xz <= xy + yz + 1e-12);
        prop_assert!(xy <= m.diameter() + 1e-12);
    }

    #[test]
    fn potential_is_linear(values in prop::collection::vec(0.0f64..3.0, N * N), a in 0.0f64..5.0) {
        let cfg = PotentialConfig::for_dim(2);
        let f = field(values);
        let v = potential_field(&f, &cfg).unwrap();
        let w = potential_field(&f.scale(a), &cfg).unwrap();
        for (x, y) in v.values().iter().zip(w.values()) {
            prop_assert!((a * x - y).abs() <= 1e-10 * y.max(1.0));
        }
    }

    #[test]
    fn potential_is_monotone(
        values in prop::collection::vec(0.0f64..3.0, N * N),
        bumps in prop::collection::vec(0.0f64..1.0, N * N),
    ) {
        let cfg = PotentialConfig::for_dim(2);
        let bigger: Vec<f64> = values.iter().zip(&bumps).map(|(v, b)| v + b).collect();
        let v = potential_field(&field(values), &cfg).unwrap();
        let w = potential_field(&field(bigger), &cfg).unwrap();
        for (x, y) in v.values().iter().zip(w.values()) {
            prop_assert!(*x <= y + 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn bad_sets_shrink_as_delta_grows(
        members in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 256), 2..4),
        d1 in 0.5f64..4.0,
        extra in 0.0f64..4.0,
    ) {
        let g = unit_grid(16);
        let family: Vec<(f64, ScalarField)> = members
            .into_iter()
            .enumerate()
            .map(|(j, v)| ((j + 1) as f64, ScalarField::from_values(g.clone(), v).unwrap()))
            .collect();
        let cfg = PotentialConfig::for_dim(2);
        let low = bad_set_estimate(&family, d1, 1.0, &cfg).unwrap();
        let high = bad_set_estimate(&family, d1 + extra, 1.0, &cfg).unwrap();
        prop_assert!(high.area <= low.area);
        for (h, l) in high.members().iter().zip(low.members()) {
            prop_assert!(!h || l);
        }
        prop_assert!((0.0..=2.0).contains(&low.box_dimension));
    }

    #[test]
    fn bridge_is_decreasing_between_its_ends(top in 1.0f64..1e4, s in 1.0f64..2.0, ds in 0.0f64..1.0) {
        prop_assert_eq!(bridge(top, 1.0), top);
        prop_assert!((bridge(top, 2.0) - 1.0).abs() < 1e-12 * top);
        let t = (s + ds).min(2.0);
        prop_assert!(bridge(top, t) <= bridge(top, s) + 1e-12 * top);
    }

    #[test]
    fn spike_profile_is_continuous_and_at_least_one(alpha in 0.05f64..0.95, j in 2u64..5000, r in 0.0f64..0.5) {
        let spec = ExampleFamily::spike(alpha, vec![j]).unwrap().factor_spec(j).unwrap();
        let value = spec.profile.radial_value(r).unwrap();
        prop_assert!(value >= 1.0);
        for b in spec.profile.radial_breaks() {
            let below = spec.profile.radial_value(b * (1.0 - 1e-10)).unwrap();
            let above = spec.profile.radial_value(b * (1.0 + 1e-10)).unwrap();
            prop_assert!((below - above).abs() < 1e-6 * below);
        }
    }

    #[test]
    fn singular_profile_is_at_least_one_and_bridged(eta in 1.1f64..3.0, j in 2u64..100_000, r in 0.0f64..2.0) {
        let spec = ExampleFamily::singular_set(eta, vec![j]).unwrap().factor_spec(j).unwrap();
        prop_assert!(spec.profile.radial_value(r).unwrap() >= 1.0);
        for b in spec.profile.radial_breaks().into_iter().skip(1) {
            let below = spec.profile.radial_value(b * (1.0 - 1e-10)).unwrap();
            let above = spec.profile.radial_value(b * (1.0 + 1e-10)).unwrap();
            prop_assert!((below - above).abs() < 1e-6 * below);
        }
    }

    #[test]
    fn metrication_floor_decreases_in_k(k in 1usize..64) {
        prop_assert!(delta(k + 1) < delta(k));
        prop_assert!(delta(k) > 0.0);
    }

    #[test]
    fn constant_factor_norm_on_unit_torus(c in 0.01f64..100.0, p in 0.5f64..8.0) {
        let f = ScalarField::constant(unit_grid(8), c).unwrap();
        prop_assert!((lp_norm(&f, p).unwrap() - c).abs() <= 1e-12 * c);
    }
}
