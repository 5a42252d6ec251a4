//! Maps `u: Ω → X`, the composed scalar fields `x ↦ d(u(x), ξ)` and their
//! central-difference gradients.

use std::fmt;
use std::sync::Arc;

use crate::domain::DomainGrid;
use crate::error::{Error, Result};
use crate::metric_space::{MetricSpace, Space, SpaceHandle};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> std::result::Result<Vec<f64>, String> + Send + Sync>;

/// Closed forms the oracles and tests know about.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedForm {
    Constant,
    /// `u(x) = A x` in the target's linear representation; `rows` is `m × n`.
    Linear {
        rows: Vec<Vec<f64>>,
    },
    /// `u(x) = k x_1` as an angle on the circle.
    Winding {
        k: f64,
    },
    /// `u(x) = {φ(x), −φ(x)}` with `φ` affine of gradient `gradient`.
    QSplit {
        gradient: Vec<f64>,
    },
    /// `(x_1 + x_2²/2, x_2 + sin(x_1 + x_2)/4)`.
    Smooth,
}

/// A map from a box in `R^n` into a target metric space.
#[derive(Clone)]
pub struct MetricMap {
    target: SpaceHandle,
    domain_dim: usize,
    evaluator: Evaluator,
    label: String,
    region: Option<(Vec<f64>, Vec<f64>)>,
    closed_form: Option<ClosedForm>,
}

impl fmt::Debug for MetricMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricMap")
            .field("label", &self.label)
            .field("target", &self.target.spec())
            .field("domain_dim", &self.domain_dim)
            .field("region", &self.region)
            .finish()
    }
}

impl MetricMap {
    pub fn new(
        target: SpaceHandle,
        domain_dim: usize,
        label: impl Into<String>,
        evaluator: Evaluator,
    ) -> Self {
        Self {
            target,
            domain_dim,
            evaluator,
            label: label.into(),
            region: None,
            closed_form: None,
        }
    }

    pub fn with_closed_form(mut self, form: ClosedForm) -> Self {
        self.closed_form = Some(form);
        self
    }

    /// Restricts evaluation to the closed box `[lower, upper]`.
    pub fn with_region(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.region = Some((lower, upper));
        self
    }

    /// Restricts evaluation to the grid box grown by `margin`.
    pub fn for_grid(&self, grid: &DomainGrid, margin: f64) -> Self {
        let (lo, hi) = grid.expanded_bounds(margin);
        self.clone().with_region(lo, hi)
    }

    pub fn target(&self) -> &SpaceHandle {
        &self.target
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn closed_form(&self) -> Option<&ClosedForm> {
        self.closed_form.as_ref()
    }

    pub fn region(&self) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.region.as_ref()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.region {
            None => true,
            Some((lo, hi)) => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(xi, (l, h))| *xi >= *l && *xi <= *h),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let fail = |reason: String| Error::MapEvaluation {
            label: self.label.clone(),
            x: x.to_vec(),
            reason,
        };
        if x.len() != self.domain_dim {
            return Err(fail(format!(
                "expected a point of R^{}, got {} coordinates",
                self.domain_dim,
                x.len()
            )));
        }
        if !self.contains(x) {
            return Err(fail("outside the evaluable region".into()));
        }
        let y = (self.evaluator)(x).map_err(fail)?;
        if y.len() != self.target.point_dim() || y.iter().any(|c| !c.is_finite()) {
            return Err(fail(format!("evaluator returned an invalid point {y:?}")));
        }
        Ok(y)
    }
}

/// Built-in map catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    Identity,
    /// Constant map; `None` means the target's first dense point.
    Constant(Option<Vec<f64>>),
    /// Row-major `m × n` matrix.
    Linear(Vec<Vec<f64>>),
    Winding(f64),
    QSplit,
    Smooth,
}

impl MapSpec {
    /// Parses `identity`, `constant[:c1,c2,..]`, `linear:a11,a12;a21,a22`,
    /// `winding:k`, `qsplit` or `smooth`.
    pub fn parse(spec: &str) -> Result<Self> {
        let unknown = || Error::UnknownSpec {
            kind: "map",
            spec: spec.to_string(),
        };
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| unknown()))
                .collect()
        };
        let spec_t = spec.trim();
        let (head, tail) = match spec_t.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (spec_t, None),
        };
        match (head, tail) {
            ("identity", None) => Ok(MapSpec::Identity),
            ("constant", None) => Ok(MapSpec::Constant(None)),
            ("constant", Some(t)) => Ok(MapSpec::Constant(Some(nums(t)?))),
            ("linear", Some(t)) => {
                let rows = t.split(';').map(nums).collect::<Result<Vec<_>>>()?;
                let width = rows.first().map_or(0, Vec::len);
                if width == 0 || rows.iter().any(|r| r.len() != width) {
                    return Err(Error::config(
                        "map",
                        "linear matrix rows must have equal, nonzero length",
                    ));
                }
                Ok(MapSpec::Linear(rows))
            }
            ("winding", Some(t)) => Ok(MapSpec::Winding(t.trim().parse().map_err(|_| unknown())?)),
            ("qsplit", None) => Ok(MapSpec::QSplit),
            ("smooth", None) => Ok(MapSpec::Smooth),
            _ => Err(unknown()),
        }
    }

    pub fn spec(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            MapSpec::Identity => "identity".into(),
            MapSpec::Constant(None) => "constant".into(),
            MapSpec::Constant(Some(c)) => format!("constant:{}", join(c)),
            MapSpec::Linear(rows) => format!(
                "linear:{}",
                rows.iter().map(|r| join(r)).collect::<Vec<_>>().join(";")
            ),
            MapSpec::Winding(k) => format!("winding:{k}"),
            MapSpec::QSplit => "qsplit".into(),
            MapSpec::Smooth => "smooth".into(),
        }
    }

    /// Instantiates the map on a domain of dimension `n` into `target`.
    pub fn build(&self, target: SpaceHandle, n: usize) -> Result<MetricMap> {
        let label = self.spec();
        let mismatch =
            |why: String| Error::config("map", format!("{label} into {}: {why}", target.spec()));
        let vector_target = target
            .displace(
                &vec![0.0; target.point_dim()],
                &vec![0.0; target.point_dim()],
                0.0,
            )
            .is_some();
        match self {
            MapSpec::Identity => {
                let linear = (0..n)
                    .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect();
                if target.point_dim() != n {
                    return Err(mismatch(format!(
                        "identity needs a target of point dimension {n}"
                    )));
                }
                let eval: Evaluator = Arc::new(|x: &[f64]| Ok(x.to_vec()));
                let map = MetricMap::new(target.clone(), n, label, eval);
                Ok(if vector_target {
                    map.with_closed_form(ClosedForm::Linear { rows: linear })
                } else {
                    map
                })
            }
            MapSpec::Constant(value) => {
                let point = match value {
                    Some(v) => {
                        target.check_point(v)?;
                        v.clone()
                    }
                    None => target.dense_point(0),
                };
                let eval: Evaluator = Arc::new(move |_x: &[f64]| Ok(point.clone()));
                Ok(MetricMap::new(target.clone(), n, label, eval)
                    .with_closed_form(ClosedForm::Constant))
            }
            MapSpec::Linear(rows) => {
                if !vector_target {
                    return Err(mismatch("linear maps need a vector target".into()));
                }
                if rows.len() != target.point_dim() || rows[0].len() != n {
                    return Err(mismatch(format!(
                        "matrix must be {} x {n}, got {} x {}",
                        target.point_dim(),
                        rows.len(),
                        rows[0].len()
                    )));
                }
                let a = rows.clone();
                let eval: Evaluator = Arc::new(move |x: &[f64]| {
                    Ok(a.iter()
                        .map(|r| r.iter().zip(x).map(|(c, xi)| c * xi).sum())
                        .collect())
                });
                Ok(MetricMap::new(target.clone(), n, label, eval)
                    .with_closed_form(ClosedForm::Linear { rows: rows.clone() }))
            }
            MapSpec::Winding(k) => {
                if target.spec() != Space::Circle.spec() {
                    return Err(mismatch("winding maps need the circle target".into()));
                }
                let k = *k;
                let eval: Evaluator = Arc::new(move |x: &[f64]| Ok(vec![k * x[0]]));
                Ok(MetricMap::new(target.clone(), n, label, eval)
                    .with_closed_form(ClosedForm::Winding { k }))
            }
            MapSpec::QSplit => {
                if target.spec() != "q:2:1" {
                    return Err(mismatch("qsplit needs the q:2:1 target".into()));
                }
                let gradient: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
                let g = gradient.clone();
                let eval: Evaluator = Arc::new(move |x: &[f64]| {
                    let phi: f64 = g.iter().zip(x).map(|(c, xi)| c * (xi - 0.5)).sum();
                    Ok(vec![phi, -phi])
                });
                Ok(MetricMap::new(target.clone(), n, label, eval)
                    .with_closed_form(ClosedForm::QSplit { gradient }))
            }
            MapSpec::Smooth => {
                if n != 2 || target.spec() != "euclidean:2" {
                    return Err(mismatch("smooth is defined on R^2 into euclidean:2".into()));
                }
                let eval: Evaluator = Arc::new(|x: &[f64]| {
                    Ok(vec![
                        x[0] + 0.5 * x[1] * x[1],
                        x[1] + 0.25 * (x[0] + x[1]).sin(),
                    ])
                });
                Ok(MetricMap::new(target.clone(), n, label, eval)
                    .with_closed_form(ClosedForm::Smooth))
            }
        }
    }
}

/// Analytic Jacobian of the smooth catalog map.
pub fn smooth_jacobian(x: &[f64]) -> [[f64; 2]; 2] {
    let c = 0.25 * (x[0] + x[1]).cos();
    [[1.0, x[1]], [c, 1.0 + c]]
}

/// Map values at `x` and `x ± δ e_i`, the shared input of every
/// finite-difference gradient at `x`.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub x: Vec<f64>,
    pub delta: f64,
    pub center: Vec<f64>,
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
}

impl Stencil {
    pub fn new(map: &MetricMap, x: &[f64], delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::StencilOutOfRange {
                x: x.to_vec(),
                delta,
            });
        }
        let n = map.domain_dim();
        let mut plus = Vec::with_capacity(n);
        let mut minus = Vec::with_capacity(n);
        let mut y = x.to_vec();
        for i in 0..n {
            for (sign, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                y[i] = x[i] + sign * delta;
                if !map.contains(&y) {
                    return Err(Error::StencilOutOfRange {
                        x: x.to_vec(),
                        delta,
                    });
                }
                out.push(map.eval(&y)?);
            }
            y[i] = x[i];
        }
        Ok(Self {
            x: x.to_vec(),
            delta,
            center: map.eval(x)?,
            plus,
            minus,
        })
    }

    /// Central-difference gradient of `d(u(·), ξ)` at the stencil center.
    pub fn gradient_into(&self, space: &dyn MetricSpace, anchor: &[f64], out: &mut [f64]) {
        let inv = 0.5 / self.delta;
        for (i, g) in out.iter_mut().enumerate() {
            let dp = space.distance_unchecked(&self.plus[i], anchor);
            let dm = space.distance_unchecked(&self.minus[i], anchor);
            *g = (dp - dm) * inv;
        }
    }

    pub fn gradient(&self, space: &dyn MetricSpace, anchor: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.x.len()];
        self.gradient_into(space, anchor, &mut g);
        g
    }

    /// Central-difference Jacobian applied to `nu`, in the target's
    /// representation coordinates.
    pub fn jacobian_apply(&self, nu: &[f64]) -> Vec<f64> {
        let inv = 0.5 / self.delta;
        let mut out = vec![0.0; self.center.len()];
        for (i, ni) in nu.iter().enumerate() {
            for (o, (p, m)) in out.iter_mut().zip(self.plus[i].iter().zip(&self.minus[i])) {
                *o += ni * (p - m) * inv;
            }
        }
        out
    }
}

/// `x ↦ d(u(x), ξ)` with its values cached on a grid.
#[derive(Debug, Clone)]
pub struct ComposedField {
    pub map: MetricMap,
    pub anchor: Vec<f64>,
    pub values: Vec<f64>,
}

impl ComposedField {
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        let y = self.map.eval(x)?;
        Ok(self.map.target().distance_unchecked(&y, &self.anchor))
    }
}

/// Caches `d(u(x), ξ)` at every grid node. A map without an explicit region
/// is restricted to the closed grid box.
pub fn compose_distance(
    map: &MetricMap,
    anchor: &[f64],
    grid: &DomainGrid,
) -> Result<ComposedField> {
    map.target().check_point(anchor)?;
    let map = if map.region().is_some() {
        map.clone()
    } else {
        map.for_grid(grid, 0.0)
    };
    let values = grid
        .nodes()
        .map(|x| {
            let y = map.eval(&x)?;
            Ok(map.target().distance_unchecked(&y, anchor))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComposedField {
        map,
        anchor: anchor.to_vec(),
        values,
    })
}

/// `((f(x + δe_i) − f(x − δe_i)) / 2δ)_i`, evaluating the map directly.
pub fn fd_gradient(field: &ComposedField, x: &[f64], delta: f64) -> Result<Vec<f64>> {
    let stencil = Stencil::new(&field.map, x, delta)?;
    Ok(stencil.gradient(field.map.target().as_ref(), &field.anchor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn handle(s: &str) -> SpaceHandle {
        Space::parse(s).unwrap().into_handle()
    }

    #[test]
    fn eval_examples() {
        let id = MapSpec::Identity.build(handle("euclidean:2"), 2).unwrap();
        assert_eq!(id.eval(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);

        let c = MapSpec::Constant(Some(vec![1.0, -2.0]))
            .build(handle("euclidean:2"), 2)
            .unwrap();
        assert_eq!(c.eval(&[0.1, 0.9]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(c.eval(&[5.0, 5.0]).unwrap(), vec![1.0, -2.0]);

        let w = MapSpec::Winding(2.0).build(handle("circle"), 2).unwrap();
        assert_eq!(w.eval(&[PI / 2.0, 0.0]).unwrap(), vec![PI]);
    }

    #[test]
    fn eval_outside_region_errors() {
        let id = MapSpec::Identity
            .build(handle("euclidean:1"), 1)
            .unwrap()
            .with_region(vec![0.0], vec![1.0]);
        assert!(matches!(id.eval(&[1.5]), Err(Error::MapEvaluation { .. })));
        let failing = MetricMap::new(
            handle("euclidean:1"),
            1,
            "broken",
            Arc::new(|_x: &[f64]| Err("boom".to_string())),
        );
        match failing.eval(&[0.2]) {
            Err(Error::MapEvaluation { x, reason, .. }) => {
                assert_eq!(x, vec![0.2]);
                assert_eq!(reason, "boom");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn catalog_parsing() {
        assert_eq!(
            MapSpec::parse("linear:1,0;0,2").unwrap(),
            MapSpec::Linear(vec![vec![1.0, 0.0], vec![0.0, 2.0]])
        );
        assert_eq!(MapSpec::parse("winding:2").unwrap(), MapSpec::Winding(2.0));
        assert!(MapSpec::parse("linear:1,0;2").is_err());
        assert!(MapSpec::parse("spiral").is_err());
        for s in [
            "identity",
            "constant",
            "qsplit",
            "smooth",
            "winding:3",
            "linear:1,2;3,4",
        ] {
            assert_eq!(MapSpec::parse(s).unwrap().spec(), s);
        }
    }

    #[test]
    fn incompatible_targets_rejected() {
        assert!(MapSpec::Winding(1.0)
            .build(handle("euclidean:2"), 2)
            .is_err());
        assert!(MapSpec::Identity.build(handle("euclidean:3"), 2).is_err());
        assert!(MapSpec::QSplit.build(handle("euclidean:2"), 2).is_err());
        assert!(MapSpec::Linear(vec![vec![1.0, 0.0]])
            .build(handle("circle"), 2)
            .is_err());
    }

    #[test]
    fn composed_field_examples() {
        let grid = DomainGrid::new(vec![-1.0], vec![1.0], vec![8]).unwrap();
        let id = MapSpec::Identity.build(handle("euclidean:1"), 1).unwrap();
        let f = compose_distance(&id, &[0.0], &grid).unwrap();
        for (x, v) in grid.nodes().zip(&f.values) {
            assert_eq!(*v, x[0].abs());
        }

        let grid2 = DomainGrid::cube(2, -1.0, 1.0, 6).unwrap();
        let c = MapSpec::Constant(Some(vec![0.5, 0.5]))
            .build(handle("euclidean:2"), 2)
            .unwrap();
        let f = compose_distance(&c, &[0.5, 0.5], &grid2).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));

        let mx = MapSpec::Identity
            .build(handle("max_norm_plane"), 2)
            .unwrap();
        let f = compose_distance(&mx, &[0.0, 0.0], &grid2).unwrap();
        for (x, v) in grid2.nodes().zip(&f.values) {
            assert_eq!(*v, x[0].abs().max(x[1].abs()));
        }
        assert!(compose_distance(&mx, &[0.0], &grid2).is_err());
    }

    #[test]
    fn fd_gradient_examples() {
        let grid = DomainGrid::new(vec![-1.0], vec![1.0], vec![8]).unwrap();
        let id = MapSpec::Identity.build(handle("euclidean:1"), 1).unwrap();
        let f = compose_distance(&id, &[0.0], &grid).unwrap();
        let g = fd_gradient(&f, &[0.5], 1e-4).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);

        let grid2 = DomainGrid::cube(2, -1.0, 1.0, 6).unwrap();
        let c = MapSpec::Constant(None)
            .build(handle("euclidean:2"), 2)
            .unwrap();
        let f = compose_distance(&c, &[0.3, 0.1], &grid2).unwrap();
        assert_eq!(fd_gradient(&f, &[0.2, 0.2], 1e-3).unwrap(), vec![0.0, 0.0]);

        let mx = MapSpec::Identity
            .build(handle("max_norm_plane"), 2)
            .unwrap();
        let f = compose_distance(&mx, &[0.0, 0.0], &grid2).unwrap();
        let g = fd_gradient(&f, &[0.7, 0.2], 1e-4).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && g[1].abs() < 1e-8, "{g:?}");
    }

    #[test]
    fn stencil_outside_region_errors() {
        let grid = DomainGrid::new(vec![0.0], vec![1.0], vec![4]).unwrap();
        let id = MapSpec::Identity.build(handle("euclidean:1"), 1).unwrap();
        let f = compose_distance(&id, &[0.0], &grid).unwrap();
        assert!(matches!(
            fd_gradient(&f, &[0.125], 0.2),
            Err(Error::StencilOutOfRange { .. })
        ));
        assert!(fd_gradient(&f, &[0.125], 0.1).is_ok());
    }

    #[test]
    fn fd_of_linear_field_is_exact_for_any_step() {
        // d(u(x), ξ) for u(x) = x into R^1 with ξ far to the left is x - ξ
        let grid = DomainGrid::new(vec![0.0], vec![1.0], vec![4]).unwrap();
        let id = MapSpec::Identity.build(handle("euclidean:1"), 1).unwrap();
        let f = compose_distance(&id, &[-10.0], &grid).unwrap();
        for delta in [1e-6, 1e-4, 1e-2, 0.1] {
            let g = fd_gradient(&f, &[0.5], delta).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-9, "{delta}: {g:?}");
        }
    }

    #[test]
    fn smooth_jacobian_matches_differences() {
        let m = MapSpec::Smooth.build(handle("euclidean:2"), 2).unwrap();
        let x = [0.3, 0.6];
        let s = Stencil::new(&m, &x, 1e-5).unwrap();
        let j = smooth_jacobian(&x);
        for col in 0..2 {
            let mut e = [0.0; 2];
            e[col] = 1.0;
            let d = s.jacobian_apply(&e);
            for row in 0..2 {
                assert!((d[row] - j[row][col]).abs() < 1e-9);
            }
        }
    }
}
