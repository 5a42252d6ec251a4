use serde::{Deserialize, Serialize};

use crate::domain::DomainGrid;
use crate::error::{Error, Result};

/// Numerical knobs shared by both energy pipelines.
///
/// The cutoff in the energy definition is replaced by the indicator of
/// `Ω_{h0}`: every integral runs over the nodes of the inner domain `Ω_{h0}`
/// and the mass outside it is reported as a localization deficit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub p: f64,
    pub h0: f64,
    /// Strictly decreasing, all `≤ h0`.
    pub h_sequence: Vec<f64>,
    pub ball_radial: usize,
    /// Sphere factor of the ball rule used for `e_{h,p}` and the ball form.
    pub ball_sphere_order: Vec<usize>,
    /// Direction rule for the sphere average of `|∂_ν u|^p`.
    pub sphere_order: Vec<usize>,
    /// Number `K` of dense anchors `ξ_0..ξ_{K-1}`.
    pub dense_truncation: usize,
    /// Central-difference step; `None` means `min spacing / DEFAULT_FD_DIVISOR`.
    pub fd_step: Option<f64>,
    pub seed: u64,
    /// Adds far anchors along the difference-quotient direction for targets
    /// with a linear point representation.
    pub accelerate: bool,
    /// Recomputes the representation energy with `2K` anchors and flags a
    /// relative change above `TRUNCATION_TOLERANCE`.
    pub truncation_check: bool,
}

pub const DEFAULT_H0: f64 = 0.05;
pub const DEFAULT_H_COUNT: usize = 6;
pub const DEFAULT_K: usize = 512;
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_FD_DIVISOR: f64 = 1024.0;

/// `h0 / 2^j` for `j = 1..=count`.
pub fn geometric_h_sequence(h0: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|j| h0 / (1u64 << j) as f64).collect()
}

pub fn default_sphere_order(n: usize) -> Vec<usize> {
    match n {
        2 => vec![256],
        3 => vec![16, 32],
        _ => vec![1024],
    }
}

pub fn default_ball_sphere_order(n: usize) -> Vec<usize> {
    match n {
        2 => vec![128],
        3 => vec![8, 16],
        _ => vec![256],
    }
}

impl EnergyConfig {
    pub fn for_dimension(n: usize) -> Self {
        Self {
            p: 2.0,
            h0: DEFAULT_H0,
            h_sequence: geometric_h_sequence(DEFAULT_H0, DEFAULT_H_COUNT),
            ball_radial: 8,
            ball_sphere_order: default_ball_sphere_order(n),
            sphere_order: default_sphere_order(n),
            dense_truncation: DEFAULT_K,
            fd_step: None,
            seed: 0,
            accelerate: true,
            truncation_check: true,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    /// Sets `h0` and regenerates a geometric sequence of `count` terms.
    pub fn with_h0(mut self, h0: f64, count: usize) -> Self {
        self.h0 = h0;
        self.h_sequence = geometric_h_sequence(h0, count);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.dense_truncation = k;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::config(
                "p",
                format!("need finite p >= 1, got {}", self.p),
            ));
        }
        if !(self.h0 > 0.0) {
            return Err(Error::config("h0", format!("need h0 > 0, got {}", self.h0)));
        }
        if self.h_sequence.is_empty() {
            return Err(Error::config("h_sequence", "must not be empty"));
        }
        if self.h_sequence.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::config("h_sequence", "entries must be > 0"));
        }
        if self.h_sequence.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("h_sequence", "must be strictly decreasing"));
        }
        if self.h_sequence[0] > self.h0 {
            return Err(Error::config(
                "h_sequence",
                format!("max h = {} exceeds h0 = {}", self.h_sequence[0], self.h0),
            ));
        }
        if self.dense_truncation < 1 {
            return Err(Error::config("dense_truncation", "K must be >= 1"));
        }
        if self.ball_radial < 1 {
            return Err(Error::config("ball_radial", "must be >= 1"));
        }
        if let Some(d) = self.fd_step {
            if !(d > 0.0) {
                return Err(Error::config("fd_step", format!("must be > 0, got {d}")));
            }
        }
        if n >= 2 {
            let expected = if n == 3 { 2 } else { 1 };
            if self.sphere_order.len() != expected {
                return Err(Error::config(
                    "sphere_order",
                    format!("dimension {n} expects {expected} count(s)"),
                ));
            }
            if self.ball_sphere_order.len() != expected {
                return Err(Error::config(
                    "ball_sphere_order",
                    format!("dimension {n} expects {expected} count(s)"),
                ));
            }
        }
        Ok(())
    }

    pub fn fd_step_for(&self, grid: &DomainGrid) -> f64 {
        self.fd_step
            .unwrap_or(grid.min_spacing() / DEFAULT_FD_DIVISOR)
    }

    /// Margin around the box on which maps must be evaluable.
    pub fn margin_for(&self, grid: &DomainGrid) -> f64 {
        let h_max = self.h_sequence.iter().copied().fold(0.0, f64::max);
        h_max.max(self.fd_step_for(grid))
    }
}
