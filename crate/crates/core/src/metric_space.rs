//! Target metric spaces: a distance plus an enumerated countable dense subset.
//!
//! Points are flat `f64` vectors whose length is fixed by the space. The
//! built-in spaces are Euclidean `R^m`, the plane with the maximum norm, the
//! unit circle with its geodesic distance, and Almgren-style unordered
//! `Q`-tuples of points in `R^m`.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Shared, immutable handle to a target space.
pub type SpaceHandle = Arc<dyn MetricSpace>;

/// A complete separable metric space with a deterministic dense enumeration.
pub trait MetricSpace: Send + Sync + fmt::Debug {
    /// Configuration string this space was built from, e.g. `euclidean:3`.
    fn spec(&self) -> String;

    /// Number of reals in a point's representation.
    fn point_dim(&self) -> usize;

    /// Distance between two well-formed points.
    fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64;

    /// First `count` points of the dense enumeration.
    fn dense_prefix(&self, count: usize) -> Vec<Vec<f64>>;

    /// Draws a point from a bounded sampler used by the axiom checks.
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// `base + scale * direction` for spaces with a linear point
    /// representation. Used to place far anchors along a ray; spaces without
    /// vector structure return `None`.
    fn displace(&self, _base: &[f64], _direction: &[f64], _scale: f64) -> Option<Vec<f64>> {
        None
    }

    /// Representation-level equality (multiset equality for `Q`-points,
    /// angle equality modulo `2π` for the circle).
    fn same_point(&self, a: &[f64], b: &[f64]) -> bool {
        a == b
    }

    fn check_point(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.point_dim() {
            return Err(Error::InvalidPoint {
                space: self.spec(),
                expected: self.point_dim(),
                got: a.len(),
            });
        }
        Ok(())
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    fn dense_point(&self, k: usize) -> Vec<f64> {
        self.dense_prefix(k + 1).swap_remove(k)
    }
}

/// The built-in spaces.
#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Euclidean(usize),
    MaxNormPlane,
    Circle,
    QPoints(QPoints),
}

impl Space {
    pub fn euclidean(m: usize) -> Self {
        Space::Euclidean(m)
    }

    pub fn q_points(q: usize, m: usize) -> Result<Self> {
        Ok(Space::QPoints(QPoints::new(q, m)?))
    }

    /// Parses `euclidean:M`, `max_norm_plane`, `circle` or `q:Q:M`.
    pub fn parse(spec: &str) -> Result<Self> {
        let unknown = || Error::UnknownSpec {
            kind: "space",
            spec: spec.to_string(),
        };
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| unknown());
        match parts.as_slice() {
            ["euclidean", m] => {
                let m = num(m)?;
                if m == 0 {
                    return Err(Error::config("space", "euclidean dimension must be >= 1"));
                }
                Ok(Space::Euclidean(m))
            }
            ["max_norm_plane"] => Ok(Space::MaxNormPlane),
            ["circle"] => Ok(Space::Circle),
            ["q", q, m] => Space::q_points(num(q)?, num(m)?),
            _ => Err(unknown()),
        }
    }

    pub fn into_handle(self) -> SpaceHandle {
        Arc::new(self)
    }
}

impl MetricSpace for Space {
    fn spec(&self) -> String {
        match self {
            Space::Euclidean(m) => format!("euclidean:{m}"),
            Space::MaxNormPlane => "max_norm_plane".to_string(),
            Space::Circle => "circle".to_string(),
            Space::QPoints(qp) => format!("q:{}:{}", qp.q, qp.m),
        }
    }

    fn point_dim(&self) -> usize {
        match self {
            Space::Euclidean(m) => *m,
            Space::MaxNormPlane => 2,
            Space::Circle => 1,
            Space::QPoints(qp) => qp.q * qp.m,
        }
    }

    fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Space::Euclidean(_) => euclidean_distance(a, b),
            Space::MaxNormPlane => (a[0] - b[0]).abs().max((a[1] - b[1]).abs()),
            Space::Circle => circle_distance(a[0], b[0]),
            Space::QPoints(qp) => qp.distance(a, b),
        }
    }

    fn dense_prefix(&self, count: usize) -> Vec<Vec<f64>> {
        match self {
            Space::Euclidean(m) => dyadic_lattice_prefix(*m, count),
            Space::MaxNormPlane => dyadic_lattice_prefix(2, count),
            Space::Circle => dyadic_angles(count).into_iter().map(|a| vec![a]).collect(),
            Space::QPoints(qp) => qp.dense_prefix(count),
        }
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            Space::Circle => vec![rng.gen_range(0.0..TAU)],
            _ => (0..self.point_dim())
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect(),
        }
    }

    fn displace(&self, base: &[f64], direction: &[f64], scale: f64) -> Option<Vec<f64>> {
        match self {
            Space::Circle => None,
            _ => Some(
                base.iter()
                    .zip(direction)
                    .map(|(b, d)| b + scale * d)
                    .collect(),
            ),
        }
    }

    fn same_point(&self, a: &[f64], b: &[f64]) -> bool {
        match self {
            Space::Circle => circle_distance(a[0], b[0]) == 0.0,
            Space::QPoints(qp) => qp.same_multiset(a, b),
            _ => a == b,
        }
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Geodesic distance on the unit circle between two angles.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let t = (a - b).rem_euclid(TAU);
    t.min(TAU - t)
}

/// Unordered `Q`-tuples of points in `R^m` with the `ℓ²` matching metric:
/// `d(a, b)² = min_σ Σ_i |a_i − b_σ(i)|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QPoints {
    pub q: usize,
    pub m: usize,
    permutations: Vec<Vec<usize>>,
}

/// Largest `Q` accepted; the matching is brute-forced over `Q!` permutations.
pub const MAX_Q: usize = 7;

impl QPoints {
    pub fn new(q: usize, m: usize) -> Result<Self> {
        if q == 0 || m == 0 {
            return Err(Error::config("space", "q-points need Q >= 1 and m >= 1"));
        }
        if q > MAX_Q {
            return Err(Error::config(
                "space",
                format!("q-points support Q <= {MAX_Q}, got {q}"),
            ));
        }
        Ok(Self {
            q,
            m,
            permutations: permutations(q),
        })
    }

    fn sheet<'a>(&self, a: &'a [f64], i: usize) -> &'a [f64] {
        &a[i * self.m..(i + 1) * self.m]
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let q = self.q;
        let mut pair = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                pair[i * q + j] = self
                    .sheet(a, i)
                    .iter()
                    .zip(self.sheet(b, j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
            }
        }
        // Terms are summed in sorted order so the result does not depend on
        // how either multiset happens to be listed.
        let mut terms = vec![0.0; q];
        let mut best = f64::INFINITY;
        for perm in &self.permutations {
            for (i, &j) in perm.iter().enumerate() {
                terms[i] = pair[i * q + j];
            }
            terms.sort_by(f64::total_cmp);
            let s: f64 = terms.iter().sum();
            if s < best {
                best = s;
            }
        }
        best.sqrt()
    }

    fn same_multiset(&self, a: &[f64], b: &[f64]) -> bool {
        let sorted = |x: &[f64]| {
            let mut sheets: Vec<&[f64]> = (0..self.q).map(|i| self.sheet(x, i)).collect();
            sheets.sort_by(|s, t| lex_cmp(s, t));
            sheets.concat()
        };
        sorted(a) == sorted(b)
    }

    /// Multisets of lattice indices enumerated through the combinatorial
    /// number system, so each multiset appears exactly once.
    fn dense_prefix(&self, count: usize) -> Vec<Vec<f64>> {
        let tuples: Vec<Vec<usize>> = (0..count).map(|k| multiset_unrank(k, self.q)).collect();
        let needed = tuples
            .iter()
            .flat_map(|t| t.iter().copied())
            .max()
            .map_or(0, |m| m + 1);
        let base = dyadic_lattice_prefix(self.m, needed);
        tuples
            .iter()
            .map(|t| t.iter().flat_map(|&i| base[i].iter().copied()).collect())
            .collect()
    }
}

fn permutations(q: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(q), &mut vec![false; q], &mut out);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Unranks `k` into a nondecreasing `q`-tuple of naturals.
pub(crate) fn multiset_unrank(k: usize, q: usize) -> Vec<usize> {
    let mut rest = k;
    let mut out = vec![0; q];
    for i in (1..=q).rev() {
        let mut d = i - 1;
        while binomial(d + 1, i) <= rest {
            d += 1;
        }
        rest -= binomial(d, i);
        out[i - 1] = d - (i - 1);
    }
    out
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Dyadic angles `2π j / 2^ℓ`: `0`, then the odd `j` of each level in order.
fn dyadic_angles(count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(0.0);
    let mut level = 1u32;
    while out.len() < count {
        let denom = (1u64 << level) as f64;
        let mut j = 1u64;
        while j < (1u64 << level) && out.len() < count {
            out.push(2.0 * PI * j as f64 / denom);
            j += 2;
        }
        level += 1;
    }
    out
}

/// Enumerates dyadic points of `R^m` stage by stage.
///
/// A point with denominator level `λ` (smallest `λ` such that all coordinates
/// are multiples of `2^-λ`) and sup-norm shell `k` (`0` for `|p|∞ ≤ 1`,
/// otherwise `|p|∞ ∈ (2^(k-1), 2^k]`) belongs to stage `λ + k`. After stage
/// `s` the prefix contains the grid of step `2^-s` on `[-1, 1]^m`, the grid
/// of step `2^-(s-1)` on `[-2, 2]^m`, and so on out to the integer points of
/// `[-2^s, 2^s]^m`. Within a stage, points are ordered by sup norm, then
/// Euclidean norm, then lexicographically.
fn dyadic_lattice_prefix(m: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut stage = 0u32;
    while out.len() < count {
        let mut pts = lattice_stage(m, stage);
        pts.sort_by(|a, b| {
            let sup = |p: &[f64]| p.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            let sq = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
            sup(a)
                .total_cmp(&sup(b))
                .then(sq(a).total_cmp(&sq(b)))
                .then(lex_cmp(a, b))
        });
        let take = (count - out.len()).min(pts.len());
        out.extend(pts.into_iter().take(take));
        stage += 1;
    }
    out
}

fn lattice_stage(m: usize, stage: u32) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for shell in 0..=stage {
        let level = stage - shell;
        let scale = (1i64 << level) as f64;
        let hi = 1i64 << (shell + level);
        let lo = if shell == 0 {
            -1
        } else {
            1i64 << (shell - 1 + level)
        };
        let mut j = vec![-hi; m];
        loop {
            let sup = j.iter().map(|v| v.abs()).max().unwrap_or(0);
            let exact_level = level == 0 || j.iter().any(|v| v % 2 != 0);
            if sup > lo && exact_level {
                pts.push(j.iter().map(|&v| v as f64 / scale).collect());
            }
            if !odometer_step(&mut j, -hi, hi) {
                break;
            }
        }
    }
    pts
}

/// Advances `j` through `[lo, hi]^m`; returns false after the last tuple.
fn odometer_step(j: &mut [i64], lo: i64, hi: i64) -> bool {
    for v in j.iter_mut() {
        if *v < hi {
            *v += 1;
            return true;
        }
        *v = lo;
    }
    false
}

/// Counts of metric-axiom violations over random triples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub nonnegativity: usize,
    pub identity: usize,
    pub symmetry: usize,
    pub triangle: usize,
}

impl AxiomReport {
    pub fn violations(&self) -> usize {
        self.nonnegativity + self.identity + self.symmetry + self.triangle
    }
}

/// Tolerance applied to every axiom comparison.
pub const AXIOM_TOLERANCE: f64 = 1e-12;

pub fn verify_metric_axioms(space: &dyn MetricSpace, samples: usize, seed: u64) -> AxiomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AxiomReport {
        samples,
        ..Default::default()
    };
    let tol = AXIOM_TOLERANCE;
    for _ in 0..samples {
        let a = space.sample_point(&mut rng);
        let b = space.sample_point(&mut rng);
        let c = space.sample_point(&mut rng);
        let ab = space.distance_unchecked(&a, &b);
        let ba = space.distance_unchecked(&b, &a);
        let bc = space.distance_unchecked(&b, &c);
        let ac = space.distance_unchecked(&a, &c);
        let aa = space.distance_unchecked(&a, &a);

        if [ab, bc, ac, aa].iter().any(|d| !(*d >= 0.0)) {
            report.nonnegativity += 1;
        }
        let distinct_zero = !space.same_point(&a, &b) && ab == 0.0;
        if aa > tol || distinct_zero {
            report.identity += 1;
        }
        if (ab - ba).abs() > tol {
            report.symmetry += 1;
        }
        if ac > ab + bc + tol {
            report.triangle += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn distance_examples() {
        let mx = Space::MaxNormPlane;
        assert_eq!(mx.distance(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 2.0);
        let e2 = Space::euclidean(2);
        assert_eq!(e2.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let c = Space::Circle;
        let d = c.distance(&[0.0], &[1.5 * PI]).unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let e3 = Space::euclidean(3);
        let err = e3.distance(&[0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidPoint {
                expected: 3,
                got: 2,
                ..
            }
        ));
    }

    #[test]
    fn parse_round_trips() {
        for s in ["euclidean:3", "max_norm_plane", "circle", "q:2:2"] {
            assert_eq!(Space::parse(s).unwrap().spec(), s);
        }
        assert!(Space::parse("hyperbolic").is_err());
        assert!(Space::parse("q:2").is_err());
        assert!(Space::parse("euclidean:0").is_err());
    }

    #[test]
    fn dense_enumeration_starts_at_origin() {
        assert_eq!(Space::euclidean(1).dense_point(0), vec![0.0]);
        assert_eq!(Space::euclidean(3).dense_point(0), vec![0.0; 3]);
    }

    #[test]
    fn circle_dense_refinement_order() {
        let pts: Vec<f64> = Space::Circle.dense_prefix(4).iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, PI, PI / 2.0, 1.5 * PI]);
    }

    #[test]
    fn lattice_prefix_is_injective_and_stable() {
        let pts = dyadic_lattice_prefix(2, 3000);
        let set: HashSet<Vec<u64>> = pts
            .iter()
            .map(|p| p.iter().map(|x| x.to_bits()).collect())
            .collect();
        assert_eq!(set.len(), pts.len());
        let again = dyadic_lattice_prefix(2, 1000);
        assert_eq!(&pts[..1000], &again[..]);
    }

    #[test]
    fn lattice_stage_sizes() {
        // stage 0 in 1-d: {-1, 0, 1}; stage 1: ±1/2 and ±2
        assert_eq!(lattice_stage(1, 0).len(), 3);
        let mut s1: Vec<f64> = lattice_stage(1, 1).into_iter().map(|p| p[0]).collect();
        s1.sort_by(f64::total_cmp);
        assert_eq!(s1, vec![-2.0, -0.5, 0.5, 2.0]);
    }

    #[test]
    fn multiset_unrank_is_bijective_on_prefix() {
        let mut seen = HashSet::new();
        for k in 0..500 {
            let t = multiset_unrank(k, 3);
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
            assert!(seen.insert(t));
        }
        assert_eq!(multiset_unrank(0, 2), vec![0, 0]);
        assert_eq!(multiset_unrank(1, 2), vec![0, 1]);
        assert_eq!(multiset_unrank(2, 2), vec![1, 1]);
    }

    #[test]
    fn q_points_dense_prefix_has_no_repeated_multisets() {
        let space = QPoints::new(2, 1).unwrap();
        let pts = space.dense_prefix(200);
        for i in 0..pts.len() {
            for j in 0..i {
                assert!(!space.same_multiset(&pts[i], &pts[j]), "{i} {j}");
            }
        }
    }

    #[test]
    fn q_points_matching() {
        let s = QPoints::new(2, 1).unwrap();
        // {0, 1} vs {1, 0}: same multiset
        assert_eq!(s.distance(&[0.0, 1.0], &[1.0, 0.0]), 0.0);
        // {0, 1} vs {1, 3}: best pairing 0-1, 1-3 -> sqrt(1 + 4)
        assert!((s.distance(&[0.0, 1.0], &[3.0, 1.0]) - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn axioms_hold_for_builtin_spaces() {
        for space in [
            Space::euclidean(3),
            Space::MaxNormPlane,
            Space::Circle,
            Space::q_points(2, 2).unwrap(),
        ] {
            let r = verify_metric_axioms(&space, 1000, 7);
            assert_eq!(r.violations(), 0, "{}: {r:?}", space.spec());
        }
    }
}
