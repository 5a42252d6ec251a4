//! Ball-average energy densities `e_{h,p}` and their `h → 0` limit.

use rayon::prelude::*;

use crate::config::EnergyConfig;
use crate::domain::DomainGrid;
use crate::error::{Error, Result};
use crate::map::MetricMap;
use crate::quadrature::{self, ball_constant, ball_nodes, extrapolate, tree_sum, QuadratureRule};
use crate::report::{HIntegral, KsReport, NodeField};

/// Relative size below which successive changes in `I(h)` count as noise.
const TREND_TOLERANCE: f64 = 1e-8;

pub fn ball_rule(grid: &DomainGrid, cfg: &EnergyConfig) -> Result<QuadratureRule> {
    ball_nodes(
        grid.dim(),
        cfg.ball_radial,
        &cfg.ball_sphere_order,
        cfg.seed,
    )
}

/// `c_{n,p} Σ_j w_j d^p(u(x), u(x + h v_j)) / h^p` with `u(x)` precomputed.
fn density_at(
    map: &MetricMap,
    x: &[f64],
    ux: &[f64],
    h: f64,
    p: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let n = x.len();
    let space = map.target();
    let mut y = vec![0.0; n];
    let mut terms = Vec::with_capacity(rule.len());
    for (v, w) in rule.nodes.iter().zip(&rule.weights) {
        for i in 0..n {
            y[i] = x[i] + h * v[i];
        }
        let uy = map.eval(&y)?;
        let ratio = space.distance_unchecked(ux, &uy) / h;
        terms.push(w * ratio.powf(p));
    }
    Ok(ball_constant(n, p) * tree_sum(&terms))
}

/// Approximate energy density `e_{h,p}(x)` for `x ∈ Ω_h`.
pub fn approx_density(
    map: &MetricMap,
    grid: &DomainGrid,
    x: &[f64],
    h: f64,
    cfg: &EnergyConfig,
) -> Result<f64> {
    if !(h > 0.0) || !grid.in_inner(x, h) {
        return Err(Error::OutOfInnerDomain { x: x.to_vec(), h });
    }
    let rule = ball_rule(grid, cfg)?;
    let map = map.for_grid(grid, cfg.margin_for(grid).max(h));
    let ux = map.eval(x)?;
    density_at(&map, x, &ux, h, cfg.p, &rule)
}

struct Densities {
    indices: Vec<usize>,
    /// `[node][h]`
    values: Vec<Vec<f64>>,
    rule: QuadratureRule,
    region_measure: f64,
}

fn densities_on_inner(map: &MetricMap, grid: &DomainGrid, cfg: &EnergyConfig) -> Result<Densities> {
    cfg.validate(grid.dim())?;
    check_dimensions(map, grid)?;
    let rule = ball_rule(grid, cfg)?;
    let map = map.for_grid(grid, cfg.margin_for(grid));
    let mask = grid.inner_mask(cfg.h0)?;
    let indices = mask.indices();
    let values = indices
        .par_iter()
        .map(|&i| {
            let x = grid.node(i);
            let ux = map.eval(&x)?;
            cfg.h_sequence
                .iter()
                .map(|&h| density_at(&map, &x, &ux, h, cfg.p, &rule))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Densities {
        region_measure: indices.len() as f64 * grid.weight(),
        indices,
        values,
        rule,
    })
}

pub(crate) fn check_dimensions(map: &MetricMap, grid: &DomainGrid) -> Result<()> {
    if map.domain_dim() != grid.dim() {
        return Err(Error::config(
            "map",
            format!(
                "map is defined on R^{} but the domain is {}-dimensional",
                map.domain_dim(),
                grid.dim()
            ),
        ));
    }
    Ok(())
}

fn extrapolated_field(cfg: &EnergyConfig, d: &Densities) -> Result<NodeField> {
    let values = d
        .values
        .iter()
        .map(|row| {
            let pairs: Vec<(f64, f64)> = cfg
                .h_sequence
                .iter()
                .copied()
                .zip(row.iter().copied())
                .collect();
            if pairs.len() < 3 {
                return Ok(*row.last().unwrap_or(&0.0));
            }
            Ok(extrapolate(&pairs)?.limit.max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NodeField {
        indices: d.indices.clone(),
        values,
    })
}

/// Per-node extrapolated density on `Ω_{h0}`.
pub fn density_limit(map: &MetricMap, grid: &DomainGrid, cfg: &EnergyConfig) -> Result<NodeField> {
    let d = densities_on_inner(map, grid, cfg)?;
    extrapolated_field(cfg, &d)
}

/// `I(h)` over `Ω_{h0}` for every `h` in the sequence, extrapolated to
/// `h = 0`.
pub fn ks_energy(map: &MetricMap, grid: &DomainGrid, cfg: &EnergyConfig) -> Result<KsReport> {
    let d = densities_on_inner(map, grid, cfg)?;
    let w = grid.weight();
    let per_h: Vec<HIntegral> = cfg
        .h_sequence
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let terms: Vec<f64> = d.values.iter().map(|row| row[j] * w).collect();
            HIntegral {
                h,
                integral: tree_sum(&terms),
            }
        })
        .collect();

    let pairs: Vec<(f64, f64)> = per_h.iter().map(|s| (s.h, s.integral)).collect();
    let extrapolation = if pairs.len() >= 3 {
        extrapolate(&pairs)?
    } else {
        let last = pairs.last().map_or(0.0, |p| p.1);
        quadrature::Extrapolation {
            limit: last,
            order: None,
            error_estimate: pairs.first().map_or(0.0, |p| (p.1 - last).abs()),
            method: quadrature::FitMethod::LinearFallback,
        }
    };

    let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let diffs: Vec<f64> = pairs.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let significant: Vec<f64> = diffs
        .into_iter()
        .filter(|dv| dv.abs() > TREND_TOLERANCE * scale)
        .collect();
    let non_monotone = significant
        .windows(2)
        .any(|w| w[0].signum() != w[1].signum());

    let density = extrapolated_field(cfg, &d)?;
    let sup_density = density.max();
    let domain_measure = grid.len() as f64 * w;
    Ok(KsReport {
        per_h,
        energy: extrapolation.limit.max(0.0),
        extrapolation,
        region_measure: d.region_measure,
        domain_measure,
        localization_deficit_bound: (domain_measure - d.region_measure).max(0.0) * sup_density,
        sup_density,
        non_monotone,
        ball_rule: d.rule.description.clone(),
        ball_nodes: d.rule.len(),
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapSpec;
    use crate::metric_space::Space;
    use std::f64::consts::PI;

    fn build(map: &str, space: &str) -> MetricMap {
        MapSpec::parse(map)
            .unwrap()
            .build(Space::parse(space).unwrap().into_handle(), 2)
            .unwrap()
    }

    #[test]
    fn density_examples() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 16).unwrap();
        let cfg = EnergyConfig::for_dimension(2);
        let x = [0.5, 0.5];
        let c = build("constant", "euclidean:2");
        assert_eq!(approx_density(&c, &grid, &x, 0.1, &cfg).unwrap(), 0.0);
        let id = build("identity", "euclidean:2");
        for h in [0.2, 0.05, 0.001] {
            let e = approx_density(&id, &grid, &x, h, &cfg).unwrap();
            assert!((e - 1.0).abs() < 1e-12, "{h}: {e}");
        }
        let mx = build("identity", "max_norm_plane");
        let e = approx_density(&mx, &grid, &x, 0.05, &cfg).unwrap();
        assert!((e - (2.0 + PI) / (2.0 * PI)).abs() < 1e-3, "{e}");
    }

    #[test]
    fn density_outside_inner_domain_errors() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 16).unwrap();
        let cfg = EnergyConfig::for_dimension(2);
        let id = build("identity", "euclidean:2");
        assert!(matches!(
            approx_density(&id, &grid, &[0.05, 0.5], 0.1, &cfg),
            Err(Error::OutOfInnerDomain { .. })
        ));
    }

    #[test]
    fn linear_density_matches_frobenius_over_n() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 16).unwrap();
        let cfg = EnergyConfig::for_dimension(2);
        let a = build("linear:1,0;0,2", "euclidean:2");
        let e = approx_density(&a, &grid, &[0.4, 0.6], 0.03, &cfg).unwrap();
        assert!((e - 2.5).abs() < 1e-12);
    }

    #[test]
    fn constant_map_has_zero_energy() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 16).unwrap();
        let cfg = EnergyConfig::for_dimension(2);
        let r = ks_energy(&build("constant", "euclidean:2"), &grid, &cfg).unwrap();
        assert_eq!(r.energy, 0.0);
        assert!(!r.flagged());
    }

    #[test]
    fn linear_integrals_do_not_depend_on_h() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 20).unwrap();
        let cfg = EnergyConfig::for_dimension(2);
        let r = ks_energy(&build("identity", "euclidean:2"), &grid, &cfg).unwrap();
        let first = r.per_h[0].integral;
        for s in &r.per_h {
            assert!((s.integral - first).abs() < 1e-12 * first);
        }
        assert!((r.energy - r.region_measure).abs() < 1e-12);
        assert!(!r.flagged());
        // |Ω \ Ω_h0| · 1
        assert!((r.localization_deficit_bound - (1.0 - r.region_measure)).abs() < 1e-12);
    }

    #[test]
    fn larger_h0_never_increases_integrals() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 20).unwrap();
        let m = build("winding:2", "circle");
        let small = EnergyConfig::for_dimension(2);
        let mut large = small.clone();
        large.h0 = 0.2;
        let a = ks_energy(&m, &grid, &small).unwrap();
        let b = ks_energy(&m, &grid, &large).unwrap();
        for (x, y) in a.per_h.iter().zip(&b.per_h) {
            assert!(y.integral <= x.integral);
        }
        assert!(b.region_measure < a.region_measure);
    }
}
