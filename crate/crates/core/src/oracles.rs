//! Reference values computed without the quadrature, anchor, or map
//! machinery of the crate. Used to check the pipelines.

use std::f64::consts::PI;

/// Equally weighted midpoint angles on `[0, 2π)`.
fn circle_average(count: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let step = 2.0 * PI / count as f64;
    let mut acc = 0.0;
    let mut comp = 0.0;
    for k in 0..count {
        let t = (k as f64 + 0.5) * step;
        // Kahan summation
        let y = f(t.cos(), t.sin()) - comp;
        let s = acc + y;
        comp = (s - acc) - y;
        acc = s;
    }
    acc / count as f64
}

/// `⨍_{S^1} |A ν|^p` for a linear map `A: R^2 → R^m`, which is both the
/// ball-average density and the representation density of `x ↦ A x` into
/// Euclidean space.
pub fn linear_euclidean_density_2d(a: &[Vec<f64>], p: f64, count: usize) -> f64 {
    circle_average(count, |c, s| {
        let sq: f64 = a.iter().map(|row| (row[0] * c + row[1] * s).powi(2)).sum();
        sq.powf(p / 2.0)
    })
}

/// `|A|_F^2 / n`, the closed form of the density at `p = 2`.
pub fn frobenius_density(a: &[Vec<f64>]) -> f64 {
    let n = a.first().map_or(1, |r| r.len());
    a.iter().flatten().map(|c| c * c).sum::<f64>() / n as f64
}

/// `⨍_{S^2} |A ν|^p` by a midpoint rule in `(cos θ, φ)`, which is uniform
/// on the sphere.
pub fn linear_euclidean_density_3d(a: &[Vec<f64>], p: f64, count: usize) -> f64 {
    let mut acc = 0.0;
    let dz = 2.0 / count as f64;
    let dphi = 2.0 * PI / (2 * count) as f64;
    for i in 0..count {
        let z = -1.0 + (i as f64 + 0.5) * dz;
        let r = (1.0 - z * z).sqrt();
        let mut ring = 0.0;
        for j in 0..2 * count {
            let phi = (j as f64 + 0.5) * dphi;
            let nu = [r * phi.cos(), r * phi.sin(), z];
            let sq: f64 = a
                .iter()
                .map(|row| row.iter().zip(&nu).map(|(x, y)| x * y).sum::<f64>().powi(2))
                .sum();
            ring += sq.powf(p / 2.0);
        }
        acc += ring;
    }
    acc / (count * 2 * count) as f64
}

/// For `u = (f1, f2)` into the max-norm plane with constant gradients `g1`,
/// `g2`: returns `(Σ_i |∂_{e_i} u|^p, ⨍_{S^1} |∂_ν u|^p)` where
/// `|∂_ν u| = max(|g1·ν|, |g2·ν|)`.
pub fn maxnorm_frame_and_sphere(g1: [f64; 2], g2: [f64; 2], p: f64, count: usize) -> (f64, f64) {
    let modulus = |c: f64, s: f64| {
        (g1[0] * c + g1[1] * s)
            .abs()
            .max((g2[0] * c + g2[1] * s).abs())
    };
    let frame = modulus(1.0, 0.0).powf(p) + modulus(0.0, 1.0).powf(p);
    (frame, circle_average(count, |c, s| modulus(c, s).powf(p)))
}

/// Counterexample constants for the identity into the max-norm plane:
/// frame sum and sphere average of `max(|ν1|, |ν2|)^p`.
pub fn maxnorm_counterexample_constants(p: f64, count: usize) -> (f64, f64) {
    maxnorm_frame_and_sphere([1.0, 0.0], [0.0, 1.0], p, count)
}

/// `(2 + π) / (2π)`, the `p = 2` sphere average of `max(|ν1|, |ν2|)^2`.
pub fn maxnorm_sphere_average_p2() -> f64 {
    (2.0 + PI) / (2.0 * PI)
}
