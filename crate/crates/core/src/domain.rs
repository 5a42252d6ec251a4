//! Axis-aligned box domains, their cell-centered sample grids and the eroded
//! inner domains `Ω_h = {x : dist(x, ∂Ω) > h}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-centered uniform grid on a box. Each node carries the Lebesgue weight
/// of its cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
}

impl DomainGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || resolution.len() != n {
            return Err(Error::InvalidDomain(format!(
                "lower/upper/resolution lengths must agree and be >= 1 (got {}, {}, {})",
                lower.len(),
                upper.len(),
                resolution.len()
            )));
        }
        for i in 0..n {
            if !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if resolution[i] < 2 {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: resolution must be >= 2, got {}",
                    resolution[i]
                )));
            }
        }
        let spacing = (0..n)
            .map(|i| (upper[i] - lower[i]) / resolution[i] as f64)
            .collect();
        Ok(Self {
            lower,
            upper,
            resolution,
            spacing,
        })
    }

    /// `[lo, hi]^n` with `res` points per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, res: usize) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n], vec![res; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// `|Ω|`, the product of side lengths.
    pub fn measure(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    /// Coordinates of node `index` (axis 0 varies fastest).
    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut rest = index;
        (0..self.dim())
            .map(|i| {
                let k = rest % self.resolution[i];
                rest /= self.resolution[i];
                self.lower[i] + (k as f64 + 0.5) * self.spacing[i]
            })
            .collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Distance from `x` to the box boundary (negative outside).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| (xi - self.lower[i]).min(self.upper[i] - xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// `x ∈ Ω_h`.
    pub fn in_inner(&self, x: &[f64], h: f64) -> bool {
        self.boundary_distance(x) > h
    }

    pub fn inner_mask(&self, h: f64) -> Result<InnerMask> {
        if !(h > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "erosion depth must be > 0, got {h}"
            )));
        }
        let flags: Vec<bool> = self.nodes().map(|x| self.in_inner(&x, h)).collect();
        let half_side = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(f64::INFINITY, f64::min);
        let count = flags.iter().filter(|f| **f).count();
        Ok(InnerMask {
            h,
            degenerate: h >= half_side || count == 0,
            flags,
            count,
        })
    }

    /// Box grown by `margin` on every side.
    pub fn expanded_bounds(&self, margin: f64) -> (Vec<f64>, Vec<f64>) {
        (
            self.lower.iter().map(|l| l - margin).collect(),
            self.upper.iter().map(|u| u + margin).collect(),
        )
    }
}

/// Boolean field marking the nodes of `Ω_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMask {
    pub h: f64,
    pub flags: Vec<bool>,
    pub count: usize,
    /// Set when the erosion swallows the box (empty mask).
    pub degenerate: bool,
}

impl InnerMask {
    pub fn indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.then_some(i))
            .collect()
    }

    pub fn is_subset_of(&self, other: &InnerMask) -> bool {
        self.flags.iter().zip(&other.flags).all(|(a, b)| !*a || *b)
    }
}
