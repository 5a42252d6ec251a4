//! Deterministic sphere and ball quadrature, unit-ball volumes, pairwise
//! summation and Richardson extrapolation.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Normalized to total weight 1 (an average over `S^{n-1}`).
    Sphere,
    /// Normalized to total weight `ω_n` (an integral over `B_1(0)`).
    Ball,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub normalization: f64,
    /// Relative error budget of the angular factor on piecewise-smooth
    /// integrands (trapezoid `O(N^-2)` for uniform angles).
    pub angular_tolerance: f64,
    /// Human-readable construction, echoed into reports.
    pub description: String,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * f(v))
            .collect();
        tree_sum(&terms)
    }

    pub fn total_weight(&self) -> f64 {
        tree_sum(&self.weights)
    }

    /// One row per node: coordinates then weight.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        let _ = writeln!(out, "{},weight", header.join(","));
        for (v, w) in self.nodes.iter().zip(&self.weights) {
            let coords: Vec<String> = v.iter().map(|c| format!("{c:.17e}")).collect();
            let _ = writeln!(out, "{},{w:.17e}", coords.join(","));
        }
        out
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// `Γ(n/2 + 1)` for integer `n ≥ 0`.
fn gamma_half_plus_one(n: usize) -> f64 {
    // Γ(1) = 1, Γ(3/2) = √π/2, Γ(s + 1) = s Γ(s)
    let (mut s, mut g) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (1.5, PI.sqrt() / 2.0)
    };
    let target = n as f64 / 2.0 + 1.0;
    while s < target - 0.25 {
        g *= s;
        s += 1.0;
    }
    g
}

/// Volume of the unit ball in `R^n`, `π^{n/2} / Γ(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma_half_plus_one(n)
}

/// `c_{n,p} = (n + p) / (n ω_n)`.
pub fn ball_constant(n: usize, p: f64) -> f64 {
    (n as f64 + p) / (n as f64 * unit_ball_volume(n))
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Sphere rule normalized to total weight 1.
///
/// * `n = 2`: `order = [N]` uniform angles `2πj/N`.
/// * `n = 3`: `order = [P, A]`, Gauss–Legendre in `cos θ` with `P` nodes times
///   `A` uniform azimuths.
/// * `n > 3`: `order = [N]` points of a Halton sequence with a seeded
///   Cranley–Patterson shift, pushed through the normal quantile and
///   projected onto the sphere.
pub fn sphere_nodes(n: usize, order: &[usize], seed: u64) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::UnsupportedDimension {
            n,
            reason: "sphere rules need n >= 2".into(),
        });
    }
    let bad_order = |what: &str| Error::config("sphere_order", what.to_string());
    let (nodes, weights, tol, desc) = match n {
        2 => {
            let count = match order {
                [c] if *c >= 1 => *c,
                _ => return Err(bad_order("n = 2 expects one positive count")),
            };
            let nodes = (0..count)
                .map(|j| {
                    let t = TAU * j as f64 / count as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            let h = TAU / count as f64;
            (
                nodes,
                vec![1.0 / count as f64; count],
                h * h,
                format!("uniform circle, {count} angles"),
            )
        }
        3 => {
            let (polar, azim) = match order {
                [p, a] if *p >= 1 && *a >= 1 => (*p, *a),
                _ => return Err(bad_order("n = 3 expects [polar, azimuth] counts")),
            };
            let (t, w) = gauss_legendre(polar);
            let mut nodes = Vec::with_capacity(polar * azim);
            let mut weights = Vec::with_capacity(polar * azim);
            for (ti, wi) in t.iter().zip(&w) {
                let s = (1.0 - ti * ti).max(0.0).sqrt();
                for j in 0..azim {
                    let phi = TAU * j as f64 / azim as f64;
                    nodes.push(vec![s * phi.cos(), s * phi.sin(), *ti]);
                    weights.push(0.5 * wi / azim as f64);
                }
            }
            let ha = TAU / azim as f64;
            let hp = PI / polar as f64;
            (
                nodes,
                weights,
                ha * ha + hp * hp,
                format!("layered sphere, {polar} Gauss-Legendre x {azim} azimuths"),
            )
        }
        _ => {
            let count = match order {
                [c] if *c >= 1 => *c,
                _ => return Err(bad_order("n > 3 expects one positive count")),
            };
            if n > PRIMES.len() {
                return Err(Error::UnsupportedDimension {
                    n,
                    reason: format!("quasi-Monte Carlo rule supports n <= {}", PRIMES.len()),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            let nodes = (0..count)
                .map(|i| {
                    let g: Vec<f64> = (0..n)
                        .map(|d| {
                            let u = (radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d]).fract();
                            normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
                        })
                        .collect();
                    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    g.iter().map(|x| x / norm).collect()
                })
                .collect();
            (
                nodes,
                vec![1.0 / count as f64; count],
                1.0 / (count as f64).sqrt(),
                format!("shifted Halton sphere, {count} points, seed {seed}"),
            )
        }
    };
    Ok(QuadratureRule {
        kind: RuleKind::Sphere,
        dim: n,
        nodes,
        weights,
        normalization: 1.0,
        angular_tolerance: tol,
        description: desc,
    })
}

/// Ball rule with total weight `ω_n`: Gauss–Legendre in the radius (the
/// Jacobian `r^{n-1}` folded into the weights) tensored with a sphere rule.
pub fn ball_nodes(
    n: usize,
    radial: usize,
    sphere_order: &[usize],
    seed: u64,
) -> Result<QuadratureRule> {
    if n < 1 {
        return Err(Error::UnsupportedDimension {
            n,
            reason: "ball rules need n >= 1".into(),
        });
    }
    if radial < 1 {
        return Err(Error::config(
            "ball_radial",
            "need at least one radial node",
        ));
    }
    let sphere = if n == 1 {
        QuadratureRule {
            kind: RuleKind::Sphere,
            dim: 1,
            nodes: vec![vec![-1.0], vec![1.0]],
            weights: vec![0.5, 0.5],
            normalization: 1.0,
            angular_tolerance: 0.0,
            description: "S^0".into(),
        }
    } else {
        sphere_nodes(n, sphere_order, seed)?
    };
    let (t, w) = gauss_legendre(radial);
    let area = n as f64 * unit_ball_volume(n);
    let mut nodes = Vec::with_capacity(radial * sphere.len());
    let mut weights = Vec::with_capacity(radial * sphere.len());
    for (ti, wi) in t.iter().zip(&w) {
        let r = 0.5 * (ti + 1.0);
        let wr = 0.5 * wi * r.powi(n as i32 - 1);
        for (nu, wn) in sphere.nodes.iter().zip(&sphere.weights) {
            nodes.push(nu.iter().map(|c| r * c).collect());
            weights.push(wr * area * wn);
        }
    }
    Ok(QuadratureRule {
        kind: RuleKind::Ball,
        dim: n,
        nodes,
        weights,
        normalization: unit_ball_volume(n),
        angular_tolerance: sphere.angular_tolerance,
        description: format!("{radial} radial Gauss-Legendre x {}", sphere.description),
    })
}

/// Relative error of the `radial`-point rule on `∫_0^1 r^{p+n-1} dr`.
pub fn radial_relative_error(n: usize, radial: usize, p: f64) -> f64 {
    let (t, w) = gauss_legendre(radial);
    let approx: f64 = t
        .iter()
        .zip(&w)
        .map(|(ti, wi)| {
            let r = 0.5 * (ti + 1.0);
            0.5 * wi * r.powf(p + n as f64 - 1.0)
        })
        .sum();
    (approx * (p + n as f64) - 1.0).abs()
}

/// Pairwise (tree) summation with a fixed association order.
pub fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        len => {
            let mid = len / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// The last three samples agree to rounding; the limit is the last one.
    Constant,
    /// `L + c h^q` solved exactly through the last three samples.
    Power,
    /// The order solve was ill-conditioned; least-squares `L + c h`.
    LinearFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub limit: f64,
    /// Fitted order `q`; `None` for constant sequences.
    pub order: Option<f64>,
    pub error_estimate: f64,
    pub method: FitMethod,
}

impl Extrapolation {
    pub fn flagged(&self) -> bool {
        self.method == FitMethod::LinearFallback
    }
}

const ORDER_RANGE: (f64, f64) = (0.05, 12.0);

/// Fits `value = L + c h^q` through the last three `(h, value)` pairs.
///
/// The error estimate is the fit's miss on the fourth-to-last sample when
/// one exists, otherwise the size of the extrapolation step `|L − v_last|`.
pub fn extrapolate(pairs: &[(f64, f64)]) -> Result<Extrapolation> {
    let len = pairs.len();
    let decreasing = pairs.windows(2).all(|w| w[1].0 < w[0].0) && pairs.iter().all(|p| p.0 > 0.0);
    if len < 3 || !decreasing {
        return Err(Error::InsufficientData(len));
    }
    let (h1, v1) = pairs[len - 3];
    let (h2, v2) = pairs[len - 2];
    let (h3, v3) = pairs[len - 1];
    let scale = v1.abs().max(v2.abs()).max(v3.abs());
    let d1 = v1 - v2;
    let d2 = v2 - v3;
    let flat = 1e-13 * scale;
    if d1.abs() <= flat && d2.abs() <= flat {
        return Ok(Extrapolation {
            limit: v3,
            order: None,
            error_estimate: d1.abs().max(d2.abs()),
            method: FitMethod::Constant,
        });
    }

    let ratio = d1 / d2;
    let q = if ratio.is_finite() && ratio > 0.0 {
        solve_order(h1, h2, h3, ratio)
    } else {
        None
    };
    match q {
        Some(q) => {
            let c = d2 / (h2.powf(q) - h3.powf(q));
            let limit = v3 - c * h3.powf(q);
            let error_estimate = if len >= 4 {
                let (h0, v0) = pairs[len - 4];
                (limit + c * h0.powf(q) - v0).abs()
            } else {
                (limit - v3).abs()
            };
            Ok(Extrapolation {
                limit,
                order: Some(q),
                error_estimate,
                method: FitMethod::Power,
            })
        }
        None => {
            let hs = [h1, h2, h3];
            let vs = [v1, v2, v3];
            let hm = hs.iter().sum::<f64>() / 3.0;
            let vm = vs.iter().sum::<f64>() / 3.0;
            let sxy: f64 = hs.iter().zip(&vs).map(|(h, v)| (h - hm) * (v - vm)).sum();
            let sxx: f64 = hs.iter().map(|h| (h - hm) * (h - hm)).sum();
            let c = sxy / sxx;
            let limit = vm - c * hm;
            let resid = hs
                .iter()
                .zip(&vs)
                .map(|(h, v)| (limit + c * h - v).abs())
                .fold(0.0, f64::max);
            Ok(Extrapolation {
                limit,
                order: Some(1.0),
                error_estimate: resid.max((limit - v3).abs()),
                method: FitMethod::LinearFallback,
            })
        }
    }
}

/// Solves `(h1^q − h2^q)/(h2^q − h3^q) = ratio` for `q` in `ORDER_RANGE`.
fn solve_order(h1: f64, h2: f64, h3: f64, ratio: f64) -> Option<f64> {
    let a = (h1 / h2).ln();
    let b = (h2 / h3).ln();
    if ((a - b) / b).abs() < 1e-12 {
        // geometric spacing: the ratio is exactly (h1/h2)^q
        let q = ratio.ln() / a;
        return (q >= ORDER_RANGE.0 && q <= ORDER_RANGE.1).then_some(q);
    }
    let f = |q: f64| (h1.powf(q) - h2.powf(q)) / (h2.powf(q) - h3.powf(q)) - ratio;
    let (mut lo, mut hi) = ORDER_RANGE;
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}
