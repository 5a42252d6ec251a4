//! Directional moduli `|∂_ν u|(x) = sup_ξ |ν · ∇ d(u(x), ξ)|`, the minimal
//! gradient, and the representation energy built from them.
//!
//! Suprema run over a finite anchor set: the first `K` dense points of the
//! target plus, for targets with a linear representation, a pair of far
//! anchors `u(x) ± R w` for each probe direction `ν`, where `w` is the
//! normalized difference quotient of `u` along `ν`. Every anchor is a point
//! of the target, so the computed value is a lower bound of the supremum
//! over the whole space, nondecreasing in `K`. All directions evaluated at a
//! node share that node's anchor set, which makes `g_ν ≤ g_min` and
//! `g_ν = g_{−ν}` hold exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EnergyConfig, TRUNCATION_TOLERANCE};
use crate::domain::DomainGrid;
use crate::error::{Error, Result};
use crate::ks::check_dimensions;
use crate::map::{MetricMap, Stencil};
use crate::quadrature::{
    ball_constant, gauss_legendre, radial_relative_error, sphere_nodes, tree_sum, unit_ball_volume,
    QuadratureRule,
};
use crate::report::{FormReport, NodeField, TruncationCheck};

/// Far anchors sit at `R = FAR_ANCHOR_SCALE · (1 + |u(x)|∞)` from `u(x)`.
const FAR_ANCHOR_SCALE: f64 = 10.0;
/// Probe directions are rounded to multiples of this before placing anchors,
/// so that rounding-level changes of `ν` leave the anchor set unchanged.
const PROBE_QUANTUM: f64 = 1.0 / (1u64 << 24) as f64;
/// `|ν|` must be within this of 1.
const UNIT_TOLERANCE: f64 = 1e-12;

/// Dense anchors and probe directions shared by every node of a run.
struct AnchorContext {
    map: MetricMap,
    dense: Vec<Vec<f64>>,
    probes: Vec<Vec<f64>>,
    delta: f64,
}

impl AnchorContext {
    fn new(
        map: &MetricMap,
        grid: &DomainGrid,
        cfg: &EnergyConfig,
        dense_len: usize,
        probes: Vec<Vec<f64>>,
    ) -> Self {
        let map = map.for_grid(grid, cfg.margin_for(grid));
        let dense = map.target().dense_prefix(dense_len);
        let probes = if cfg.accelerate {
            canonical_directions(probes)
        } else {
            Vec::new()
        };
        Self {
            map,
            dense,
            probes,
            delta: cfg.fd_step_for(grid),
        }
    }
}

/// Sign-normalizes directions (first nonzero component positive) and drops
/// near-duplicates, keeping the first of each.
fn canonical_directions(dirs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(dirs.len());
    for d in dirs {
        let lead = d.iter().copied().find(|c| *c != 0.0).unwrap_or(0.0);
        let d: Vec<f64> = if lead < 0.0 {
            d.iter().map(|c| -c).collect()
        } else {
            d
        };
        let dup = out
            .iter()
            .any(|e| e.iter().zip(&d).all(|(a, b)| (a - b).abs() <= 1e-12));
        if !dup {
            out.push(d);
        }
    }
    out
}

/// Gradients of `d(u(·), ξ)` at one node for every anchor: probe anchors
/// first, then the dense anchors in enumeration order.
struct NodeAnchors {
    n: usize,
    probe_count: usize,
    grads: Vec<f64>,
}

impl NodeAnchors {
    fn build(ctx: &AnchorContext, x: &[f64], extra: &[Vec<f64>]) -> Result<Self> {
        let stencil = Stencil::new(&ctx.map, x, ctx.delta)?;
        let space = ctx.map.target().as_ref();
        let n = x.len();

        let mut anchors: Vec<Vec<f64>> = Vec::new();
        let radius =
            FAR_ANCHOR_SCALE * (1.0 + stencil.center.iter().fold(0.0f64, |m, c| m.max(c.abs())));
        for nu in ctx.probes.iter().chain(extra) {
            let w = stencil.jacobian_apply(nu);
            let norm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                continue;
            }
            let w: Vec<f64> = w
                .iter()
                .map(|c| (c / norm / PROBE_QUANTUM).round() * PROBE_QUANTUM)
                .collect();
            for r in [-radius, radius] {
                if let Some(a) = space.displace(&stencil.center, &w, r) {
                    anchors.push(a);
                }
            }
        }
        let probe_count = anchors.len();

        let mut grads = vec![0.0; (probe_count + ctx.dense.len()) * n];
        for (k, a) in anchors.iter().chain(&ctx.dense).enumerate() {
            stencil.gradient_into(space, a, &mut grads[k * n..(k + 1) * n]);
        }
        Ok(Self {
            n,
            probe_count,
            grads,
        })
    }

    fn active(&self, dense_len: usize) -> &[f64] {
        let total = self.grads.len() / self.n;
        let end = (self.probe_count + dense_len).min(total);
        &self.grads[..end * self.n]
    }

    /// `max_k |v · ∇ d(u, ξ_k)|` over probes and the first `dense_len` dense anchors.
    fn sup_dot(&self, v: &[f64], dense_len: usize) -> f64 {
        let mut best = 0.0f64;
        for g in self.active(dense_len).chunks_exact(self.n) {
            let d: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
            best = best.max(d.abs());
        }
        best
    }

    /// `sup_dot` for every prefix length in `prefixes` (ascending) in one pass.
    fn sup_dots(&self, v: &[f64], prefixes: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(prefixes.len());
        let mut best = 0.0f64;
        let mut start = 0;
        for &k in prefixes {
            let active = self.active(k);
            for g in active[start..].chunks_exact(self.n) {
                let d: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
                best = best.max(d.abs());
            }
            start = active.len();
            out.push(best);
        }
        out
    }

    fn sup_norm(&self, dense_len: usize) -> f64 {
        let mut best = 0.0f64;
        for g in self.active(dense_len).chunks_exact(self.n) {
            best = best.max(g.iter().map(|a| a * a).sum::<f64>().sqrt());
        }
        best
    }
}

fn check_unit(nu: &[f64]) -> Result<()> {
    let norm = nu.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidDirection(format!("|ν| = {norm}, expected 1")));
    }
    Ok(())
}

fn sphere_rule(grid: &DomainGrid, cfg: &EnergyConfig) -> Result<QuadratureRule> {
    sphere_nodes(grid.dim(), &cfg.sphere_order, cfg.seed)
}

/// Direction rule used for probes; `n = 1` uses `S^0 = {±1}`.
fn probe_rule_directions(grid: &DomainGrid, cfg: &EnergyConfig) -> Result<Vec<Vec<f64>>> {
    if grid.dim() == 1 {
        return Ok(vec![vec![1.0]]);
    }
    Ok(sphere_rule(grid, cfg)?.nodes)
}

/// `|∂_ν u|(x)` for a unit vector `ν`.
pub fn directional_derivative(
    map: &MetricMap,
    grid: &DomainGrid,
    x: &[f64],
    nu: &[f64],
    cfg: &EnergyConfig,
) -> Result<f64> {
    check_dimensions(map, grid)?;
    if nu.len() != grid.dim() {
        return Err(Error::InvalidDirection(format!(
            "direction has {} components, domain is {}-dimensional",
            nu.len(),
            grid.dim()
        )));
    }
    check_unit(nu)?;
    let ctx = AnchorContext::new(map, grid, cfg, cfg.dense_truncation, Vec::new());
    let extra = if cfg.accelerate {
        vec![nu.to_vec()]
    } else {
        Vec::new()
    };
    let node = NodeAnchors::build(&ctx, x, &extra)?;
    Ok(node.sup_dot(nu, cfg.dense_truncation))
}

/// `|∂_v u|(x) = |v| · |∂_{v/|v|} u|(x)` for nonzero `v`.
pub fn directional_vector(
    map: &MetricMap,
    grid: &DomainGrid,
    x: &[f64],
    v: &[f64],
    cfg: &EnergyConfig,
) -> Result<f64> {
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidDirection(format!(
            "zero or non-finite vector {v:?}"
        )));
    }
    let nu: Vec<f64> = v.iter().map(|c| c / norm).collect();
    Ok(norm * directional_derivative(map, grid, x, &nu, cfg)?)
}

/// `g_min(x) = sup_ξ |∇ d(u(x), ξ)|`, with probes along the configured
/// sphere directions.
pub fn minimal_gradient(
    map: &MetricMap,
    grid: &DomainGrid,
    x: &[f64],
    cfg: &EnergyConfig,
) -> Result<f64> {
    check_dimensions(map, grid)?;
    let ctx = AnchorContext::new(
        map,
        grid,
        cfg,
        cfg.dense_truncation,
        probe_rule_directions(grid, cfg)?,
    );
    let node = NodeAnchors::build(&ctx, x, &[])?;
    Ok(node.sup_norm(cfg.dense_truncation))
}

/// `g_ν(x)` for a set of directions at every node of `Ω_{h0}`, with `g_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalField {
    pub indices: Vec<usize>,
    pub directions: Vec<Vec<f64>>,
    /// `values[node][direction]`
    pub values: Vec<Vec<f64>>,
    pub minimal_gradient: Vec<f64>,
    pub dense_truncation: usize,
    pub fd_step: f64,
}

impl DirectionalField {
    /// Probes come from the configured sphere rule, so the anchor set does
    /// not depend on `directions`.
    pub fn compute(
        map: &MetricMap,
        grid: &DomainGrid,
        directions: &[Vec<f64>],
        cfg: &EnergyConfig,
    ) -> Result<Self> {
        cfg.validate(grid.dim())?;
        check_dimensions(map, grid)?;
        for d in directions {
            if d.len() != grid.dim() {
                return Err(Error::InvalidDirection(format!(
                    "{d:?} has the wrong length"
                )));
            }
            check_unit(d)?;
        }
        let ctx = AnchorContext::new(
            map,
            grid,
            cfg,
            cfg.dense_truncation,
            probe_rule_directions(grid, cfg)?,
        );
        let indices = grid.inner_mask(cfg.h0)?.indices();
        let rows = indices
            .par_iter()
            .map(|&i| {
                let node = NodeAnchors::build(&ctx, &grid.node(i), &[])?;
                let k = cfg.dense_truncation;
                let g: Vec<f64> = directions.iter().map(|d| node.sup_dot(d, k)).collect();
                Ok((g, node.sup_norm(k)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (values, minimal_gradient) = rows.into_iter().unzip();
        Ok(Self {
            indices,
            directions: directions.to_vec(),
            values,
            minimal_gradient,
            dense_truncation: cfg.dense_truncation,
            fd_step: ctx.delta,
        })
    }
}

/// Per-node integrand values on `Ω_{h0}`, one column per dense prefix length.
struct NodeRows {
    indices: Vec<usize>,
    rows: Vec<Vec<f64>>,
    probe_anchors: usize,
    fd_step: f64,
}

/// Per-node integrand evaluated for several dense prefix lengths at once.
fn integrate_nodes<F>(
    map: &MetricMap,
    grid: &DomainGrid,
    cfg: &EnergyConfig,
    probes: Vec<Vec<f64>>,
    prefixes: &[usize],
    integrand: F,
) -> Result<NodeRows>
where
    F: Fn(&NodeAnchors, &[usize]) -> Vec<f64> + Sync,
{
    cfg.validate(grid.dim())?;
    check_dimensions(map, grid)?;
    let longest = prefixes
        .iter()
        .copied()
        .max()
        .unwrap_or(cfg.dense_truncation);
    let ctx = AnchorContext::new(map, grid, cfg, longest, probes);
    let indices = grid.inner_mask(cfg.h0)?.indices();
    let rows = indices
        .par_iter()
        .map(|&i| {
            let node = NodeAnchors::build(&ctx, &grid.node(i), &[])?;
            Ok(integrand(&node, prefixes))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeRows {
        indices,
        rows,
        probe_anchors: 2 * ctx.probes.len(),
        fd_step: ctx.delta,
    })
}

fn assemble(
    grid: &DomainGrid,
    cfg: &EnergyConfig,
    data: NodeRows,
    (rule, rule_nodes, quadrature_tolerance): (&str, usize, f64),
) -> FormReport {
    let NodeRows {
        indices,
        rows,
        probe_anchors,
        fd_step,
    } = data;
    let w = grid.weight();
    let energy_for = |j: usize| tree_sum(&rows.iter().map(|r| r[j] * w).collect::<Vec<_>>());
    let energy = energy_for(0);
    let truncation = cfg.truncation_check.then(|| {
        let doubled = energy_for(1);
        let relative_change = if doubled > 0.0 {
            (doubled - energy) / doubled
        } else {
            0.0
        };
        TruncationCheck {
            k: cfg.dense_truncation,
            doubled_k: 2 * cfg.dense_truncation,
            energy_doubled: doubled,
            relative_change,
            under_truncated: relative_change > TRUNCATION_TOLERANCE,
        }
    });
    FormReport {
        energy,
        rule: rule.to_string(),
        rule_nodes,
        quadrature_tolerance,
        dense_truncation: cfg.dense_truncation,
        probe_anchors,
        fd_step,
        region_measure: indices.len() as f64 * w,
        truncation,
        density: NodeField {
            values: rows.iter().map(|r| r[0]).collect(),
            indices,
        },
    }
}

fn prefixes(cfg: &EnergyConfig) -> Vec<usize> {
    if cfg.truncation_check {
        vec![cfg.dense_truncation, 2 * cfg.dense_truncation]
    } else {
        vec![cfg.dense_truncation]
    }
}

/// `ℰ^p = Σ_x w(x) ⨍_{S^{n-1}} |∂_ν u|^p(x)` over `Ω_{h0}`.
pub fn rep_energy_sphere(
    map: &MetricMap,
    grid: &DomainGrid,
    cfg: &EnergyConfig,
) -> Result<FormReport> {
    let rule = sphere_rule(grid, cfg)?;
    let p = cfg.p;
    let data = integrate_nodes(
        map,
        grid,
        cfg,
        rule.nodes.clone(),
        &prefixes(cfg),
        |node, ks| {
            let mut terms = vec![Vec::with_capacity(rule.len()); ks.len()];
            for (nu, w) in rule.nodes.iter().zip(&rule.weights) {
                for (t, g) in terms.iter_mut().zip(node.sup_dots(nu, ks)) {
                    t.push(w * g.powf(p));
                }
            }
            terms.iter().map(|t| tree_sum(t)).collect()
        },
    )?;
    Ok(assemble(
        grid,
        cfg,
        data,
        (&rule.description, rule.len(), rule.angular_tolerance),
    ))
}

/// `ℰ^p = c_{n,p} Σ_x w(x) ∫_{B_1} |∂_v u|^p(x) dv` over `Ω_{h0}`, with
/// `|∂_v u| = |v| |∂_{v/|v|} u|` at every ball node.
pub fn rep_energy_ball(
    map: &MetricMap,
    grid: &DomainGrid,
    cfg: &EnergyConfig,
) -> Result<FormReport> {
    let n = grid.dim();
    let rule = crate::ks::ball_rule(grid, cfg)?;
    let p = cfg.p;
    let c = ball_constant(n, p);
    // Unit directions and radii of the ball nodes; the origin never occurs
    // because Gauss–Legendre radii are interior.
    let polar: Vec<(f64, Vec<f64>)> = rule
        .nodes
        .iter()
        .map(|v| {
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            (r, v.iter().map(|a| a / r).collect())
        })
        .collect();
    let data = integrate_nodes(
        map,
        grid,
        cfg,
        probe_rule_directions(grid, cfg)?,
        &prefixes(cfg),
        |node, ks| {
            let mut terms = vec![Vec::with_capacity(polar.len()); ks.len()];
            for ((r, nu), w) in polar.iter().zip(&rule.weights) {
                for (t, g) in terms.iter_mut().zip(node.sup_dots(nu, ks)) {
                    t.push(w * (r * g).powf(p));
                }
            }
            terms.iter().map(|t| c * tree_sum(t)).collect()
        },
    )?;
    let tol = rule.angular_tolerance + radial_relative_error(n, cfg.ball_radial, p);
    Ok(assemble(
        grid,
        cfg,
        data,
        (&rule.description, rule.len(), tol),
    ))
}

/// Relative tolerance within which the sphere and ball forms must agree.
pub fn combined_quadrature_tolerance(sphere: &FormReport, ball: &FormReport) -> f64 {
    sphere.quadrature_tolerance + ball.quadrature_tolerance
}

/// `Σ_x w(x) Σ_i |∂_{e_i} u|^p(x)` over `Ω_{h0}`, together with the
/// per-node frame sums.
pub fn frame_sum_energy(
    map: &MetricMap,
    grid: &DomainGrid,
    cfg: &EnergyConfig,
) -> Result<FormReport> {
    let n = grid.dim();
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut probes = probe_rule_directions(grid, cfg)?;
    probes.extend(basis.iter().cloned());
    let p = cfg.p;
    let mut cfg = cfg.clone();
    cfg.truncation_check = false;
    let data = integrate_nodes(map, grid, &cfg, probes, &prefixes(&cfg), |node, ks| {
        ks.iter()
            .map(|&k| basis.iter().map(|e| node.sup_dot(e, k).powf(p)).sum())
            .collect()
    })?;
    Ok(assemble(grid, &cfg, data, ("standard basis", n, 0.0)))
}

/// Both sides of `∫_{Ω_h} d^p(u(x+hv), u(x)) ≤ h^p ∫_Ω |∂_v u|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementCheck {
    pub v: Vec<f64>,
    pub h: f64,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
}

pub const INCREMENT_TOLERANCE: f64 = 1e-3;

pub fn check_increment_bound(
    map: &MetricMap,
    grid: &DomainGrid,
    v: &[f64],
    h: f64,
    cfg: &EnergyConfig,
) -> Result<IncrementCheck> {
    check_dimensions(map, grid)?;
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if v.len() != grid.dim() || norm > 1.0 + 1e-12 {
        return Err(Error::InvalidDirection(format!(
            "need v in the closed unit ball, got {v:?}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::config("h", format!("need h > 0, got {h}")));
    }
    let p = cfg.p;
    let w = grid.weight();
    let margin = cfg.margin_for(grid).max(h);
    let map_r = map.for_grid(grid, margin);
    let space = map_r.target().clone();

    let lhs_terms = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.node(i);
            if !grid.in_inner(&x, h) {
                return Ok(0.0);
            }
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
            let d = space.distance_unchecked(&map_r.eval(&y)?, &map_r.eval(&x)?);
            Ok(w * d.powf(p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let lhs = tree_sum(&lhs_terms);

    let rhs_terms: Vec<f64> = if norm == 0.0 {
        vec![0.0]
    } else {
        let nu: Vec<f64> = v.iter().map(|c| c / norm).collect();
        let mut cfg_local = cfg.clone();
        cfg_local.h_sequence = vec![h.min(cfg.h0)];
        let ctx = AnchorContext {
            map: map_r.clone(),
            dense: map_r.target().dense_prefix(cfg.dense_truncation),
            probes: if cfg.accelerate {
                vec![nu.clone()]
            } else {
                Vec::new()
            },
            delta: cfg.fd_step_for(grid),
        };
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let node = NodeAnchors::build(&ctx, &grid.node(i), &[])?;
                Ok(w * (norm * node.sup_dot(&nu, cfg.dense_truncation)).powf(p))
            })
            .collect::<Result<Vec<f64>>>()?
    };
    let rhs = h.powf(p) * tree_sum(&rhs_terms);
    Ok(IncrementCheck {
        v: v.to_vec(),
        h,
        p,
        lhs,
        rhs,
        tolerance: INCREMENT_TOLERANCE,
        holds: lhs <= rhs * (1.0 + INCREMENT_TOLERANCE),
    })
}

/// `⨍_{S^{n-1}} |∂_ν u|^p` at one node, with `c_{n,p} ∫_{B_1} |∂_v u|^p` from
/// a radial rule of `radial` nodes for comparison.
pub fn node_sphere_and_ball_density(
    map: &MetricMap,
    grid: &DomainGrid,
    x: &[f64],
    cfg: &EnergyConfig,
    radial: usize,
) -> Result<(f64, f64)> {
    let n = grid.dim();
    let rule = sphere_rule(grid, cfg)?;
    let ctx = AnchorContext::new(map, grid, cfg, cfg.dense_truncation, rule.nodes.clone());
    let node = NodeAnchors::build(&ctx, x, &[])?;
    let p = cfg.p;
    let k = cfg.dense_truncation;
    let g: Vec<f64> = rule
        .nodes
        .iter()
        .map(|nu| node.sup_dot(nu, k).powf(p))
        .collect();
    let sphere = tree_sum(
        &g.iter()
            .zip(&rule.weights)
            .map(|(a, w)| a * w)
            .collect::<Vec<_>>(),
    );
    let (t, wr) = gauss_legendre(radial);
    let area = n as f64 * unit_ball_volume(n);
    let mut terms = Vec::new();
    for (ti, wi) in t.iter().zip(&wr) {
        let r = 0.5 * (ti + 1.0);
        for (gj, wj) in g.iter().zip(&rule.weights) {
            terms.push(0.5 * wi * r.powi(n as i32 - 1) * area * wj * r.powf(p) * gj);
        }
    }
    Ok((sphere, ball_constant(n, p) * tree_sum(&terms)))
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

    fn small() -> (DomainGrid, EnergyConfig) {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 8).unwrap();
        let mut cfg = EnergyConfig::for_dimension(2).with_h0(0.1, 3);
        cfg.sphere_order = vec![64];
        cfg.dense_truncation = 128;
        (grid, cfg)
    }

    #[test]
    fn max_norm_directional_modulus() {
        let (grid, cfg) = small();
        let m = build("identity", "max_norm_plane");
        for theta in [0.1, 0.7, 1.3, 2.9, 4.0] {
            let nu = [f64::cos(theta), f64::sin(theta)];
            let g = directional_derivative(&m, &grid, &[0.4, 0.55], &nu, &cfg).unwrap();
            let expected = nu[0].abs().max(nu[1].abs());
            assert!((g - expected).abs() < 1e-9, "{theta}: {g} vs {expected}");
        }
    }

    #[test]
    fn constant_map_has_zero_moduli() {
        let (grid, cfg) = small();
        let m = build("constant", "euclidean:2");
        let g = directional_derivative(&m, &grid, &[0.5, 0.5], &[0.6, 0.8], &cfg).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(minimal_gradient(&m, &grid, &[0.5, 0.5], &cfg).unwrap(), 0.0);
    }

    #[test]
    fn linear_modulus_is_image_length() {
        let (grid, cfg) = small();
        let m = build("linear:1,0.5;-0.3,2", "euclidean:2");
        let nu = [0.28, 0.96];
        let g = directional_derivative(&m, &grid, &[0.3, 0.6], &nu, &cfg).unwrap();
        let a_nu = [nu[0] + 0.5 * nu[1], -0.3 * nu[0] + 2.0 * nu[1]];
        let expected = (a_nu[0] * a_nu[0] + a_nu[1] * a_nu[1]).sqrt();
        assert!((g - expected).abs() < 1e-8, "{g} {expected}");
    }

    #[test]
    fn directional_vector_homogeneity() {
        let (grid, cfg) = small();
        let m = build("identity", "max_norm_plane");
        let x = [0.45, 0.5];
        assert!(
            (directional_vector(&m, &grid, &x, &[2.0, 0.0], &cfg).unwrap() - 2.0).abs() < 1e-12
        );
        let nu = [0.6, 0.8];
        let g = directional_derivative(&m, &grid, &x, &nu, &cfg).unwrap();
        let half = directional_vector(&m, &grid, &x, &[0.3, 0.4], &cfg).unwrap();
        assert!((half - 0.5 * g).abs() < 1e-12);
        let neg = directional_vector(&m, &grid, &x, &[-0.6, -0.8], &cfg).unwrap();
        assert_eq!(neg, g);
        assert!(matches!(
            directional_vector(&m, &grid, &x, &[0.0, 0.0], &cfg),
            Err(Error::InvalidDirection(_))
        ));
        assert!(directional_derivative(&m, &grid, &x, &[1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn minimal_gradient_examples() {
        let (grid, cfg) = small();
        let id = build("identity", "euclidean:2");
        let g = minimal_gradient(&id, &grid, &[0.3, 0.7], &cfg).unwrap();
        assert!((g - 1.0).abs() < 1e-8, "{g}");
        // u = (f1, f2) into the max-norm plane: g_min = max(|∇f1|, |∇f2|)
        let m = build("linear:1,1;0,0.5", "max_norm_plane");
        let g = minimal_gradient(&m, &grid, &[0.3, 0.7], &cfg).unwrap();
        assert!((g - 2f64.sqrt()).abs() < 1e-8, "{g}");
    }

    #[test]
    fn field_domination_and_evenness() {
        let (grid, cfg) = small();
        let rule = sphere_nodes(2, &cfg.sphere_order, 0).unwrap();
        let mut dirs = rule.nodes.clone();
        dirs.extend(
            rule.nodes
                .iter()
                .map(|v| v.iter().map(|c| -c).collect::<Vec<_>>()),
        );
        let half = rule.len();
        for (map, space) in [
            ("identity", "max_norm_plane"),
            ("qsplit", "q:2:1"),
            ("winding:2", "circle"),
        ] {
            let m = build(map, space);
            let f = DirectionalField::compute(&m, &grid, &dirs, &cfg).unwrap();
            for (row, gmin) in f.values.iter().zip(&f.minimal_gradient) {
                for j in 0..half {
                    assert_eq!(row[j], row[j + half]);
                    assert!(row[j] <= gmin + 1e-9);
                }
            }
        }
    }

    #[test]
    fn sphere_form_max_norm_constant() {
        let grid = DomainGrid::cube(2, 0.0, 1.0, 8).unwrap();
        let mut cfg = EnergyConfig::for_dimension(2).with_h0(0.1, 3);
        cfg.dense_truncation = 64;
        let m = build("identity", "max_norm_plane");
        let r = rep_energy_sphere(&m, &grid, &cfg).unwrap();
        let expected = (2.0 + PI) / (2.0 * PI);
        for v in &r.density.values {
            assert!((v - expected).abs() < 1e-4, "{v}");
        }
        let t = r.truncation.unwrap();
        assert!(!t.under_truncated);
    }

    #[test]
    fn frame_sum_for_max_norm_identity_is_two() {
        let (grid, cfg) = small();
        let m = build("identity", "max_norm_plane");
        let r = frame_sum_energy(&m, &grid, &cfg).unwrap();
        for v in &r.density.values {
            assert!((v - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn increment_bound_for_identity() {
        let (grid, cfg) = small();
        let m = build("identity", "euclidean:2");
        let c = check_increment_bound(&m, &grid, &[1.0, 0.0], 0.1, &cfg).unwrap();
        assert!(c.holds);
        assert!(c.lhs < c.rhs);
        let constant = build("constant", "euclidean:2");
        let c = check_increment_bound(&constant, &grid, &[0.0, 1.0], 0.1, &cfg).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        assert!(c.holds);
        assert!(check_increment_bound(&m, &grid, &[1.0, 1.0], 0.1, &cfg).is_err());
    }

    #[test]
    fn canonical_directions_merge_antipodes() {
        let d = canonical_directions(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
            vec![0.0, 1.0],
        ]);
        assert_eq!(d, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn node_sphere_ball_identity() {
        let (grid, cfg) = small();
        let m = build("identity", "max_norm_plane");
        let (s, b) = node_sphere_and_ball_density(&m, &grid, &[0.5, 0.5], &cfg, 6).unwrap();
        assert!((s - b).abs() < 1e-12 * s.max(1.0), "{s} {b}");
    }
}
