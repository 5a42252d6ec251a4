use ksenergy::config::EnergyConfig;
use ksenergy::map::smooth_jacobian;
use ksenergy::metric_space::MetricSpace;
use ksenergy::oracles::{
    frobenius_density, linear_euclidean_density_2d, maxnorm_sphere_average_p2,
};
use ksenergy::{
    approx_density, density_limit, rep_energy_sphere, DomainGrid, MapSpec, MetricMap, Space,
};

fn build(map: &str, space: &str) -> MetricMap {
    MapSpec::parse(map)
        .unwrap()
        .build(Space::parse(space).unwrap().into_handle(), 2)
        .unwrap()
}

fn grid() -> DomainGrid {
    DomainGrid::cube(2, 0.0, 1.0, 16).unwrap()
}

#[test]
fn linear_rep_density_matches_the_oracle() {
    let grid = grid();
    let cfg = EnergyConfig::for_dimension(2);
    for spec in [
        "linear:1,0;0,1",
        "linear:1,0;0,2",
        "linear:0.3,-1.2;2,0.7",
        "linear:1,2;0,0",
        "linear:0,0;0,0",
    ] {
        let m = build(spec, "euclidean:2");
        let rows = match MapSpec::parse(spec).unwrap() {
            MapSpec::Linear(r) => r,
            _ => unreachable!(),
        };
        let oracle = linear_euclidean_density_2d(&rows, 2.0, 1_000_000);
        assert!((oracle - frobenius_density(&rows)).abs() < 1e-9);
        let r = rep_energy_sphere(&m, &grid, &cfg).unwrap();
        for v in &r.density.values {
            assert!((v - oracle).abs() < 1e-6, "{spec}: {v} vs {oracle}");
        }
    }
}

#[test]
fn linear_into_three_space() {
    let grid = grid();
    let cfg = EnergyConfig::for_dimension(2);
    let rows = vec![vec![1.0, 0.5], vec![0.0, 1.0], vec![-0.5, 2.0]];
    let m = MapSpec::Linear(rows.clone())
        .build(Space::parse("euclidean:3").unwrap().into_handle(), 2)
        .unwrap();
    let expected = frobenius_density(&rows);
    let r = rep_energy_sphere(&m, &grid, &cfg).unwrap();
    for v in &r.density.values {
        assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
    }
}

#[test]
fn smooth_map_rep_density_is_dirichlet() {
    let grid = grid();
    let mut cfg = EnergyConfig::for_dimension(2);
    cfg.fd_step = Some(1e-4);
    let m = build("smooth", "euclidean:2");
    let r = rep_energy_sphere(&m, &grid, &cfg).unwrap();
    for (&i, v) in r.density.indices.iter().zip(&r.density.values) {
        let j = smooth_jacobian(&grid.node(i));
        let expected = j.iter().flatten().map(|c| c * c).sum::<f64>() / 2.0;
        assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
    }
}

#[test]
fn ks_density_limit_matches_for_linear_maps() {
    let grid = grid();
    let cfg = EnergyConfig::for_dimension(2);
    for spec in ["linear:1,0;0,2", "linear:0.3,-1.2;2,0.7"] {
        let m = build(spec, "euclidean:2");
        let rows = match MapSpec::parse(spec).unwrap() {
            MapSpec::Linear(r) => r,
            _ => unreachable!(),
        };
        let expected = frobenius_density(&rows);
        let f = density_limit(&m, &grid, &cfg).unwrap();
        for v in &f.values {
            assert!((v - expected).abs() < 1e-3, "{spec}: {v} vs {expected}");
        }
    }
}

#[test]
fn max_norm_ball_average_is_the_counterexample_constant() {
    let grid = grid();
    let cfg = EnergyConfig::for_dimension(2);
    let m = build("identity", "max_norm_plane");
    for h in [0.05, 0.01] {
        let e = approx_density(&m, &grid, &[0.5, 0.5], h, &cfg).unwrap();
        assert!((e - maxnorm_sphere_average_p2()).abs() < 1e-3, "{e}");
    }
}

/// Largest distance from a fine scan of `[-1, 1]^2` to the nearest of the
/// first `count` dense points.
fn covering_radius(space: &dyn MetricSpace, count: usize, scan: usize) -> f64 {
    let pts = space.dense_prefix(count);
    let mut worst = 0.0f64;
    for i in 0..=scan {
        for j in 0..=scan {
            let y = [
                -1.0 + 2.0 * i as f64 / scan as f64,
                -1.0 + 2.0 * j as f64 / scan as f64,
            ];
            let best = pts
                .iter()
                .map(|p| (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best.sqrt());
        }
    }
    worst
}

#[test]
fn dense_lattice_covers_the_square() {
    let space = Space::parse("euclidean:2").unwrap();
    let r = covering_radius(&space, 10_000, 200);
    assert!(r <= 0.05, "covering radius {r}");
}
