//! Result records produced by the two pipelines.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::EnergyConfig;
use crate::domain::DomainGrid;
use crate::quadrature::Extrapolation;

/// Values on a subset of grid nodes, in increasing node order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeField {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl NodeField {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `x0,..,x{n-1},<name>` rows. Shared indices only; `other` may be used
    /// to append a second column and their difference.
    pub fn to_csv(
        &self,
        grid: &DomainGrid,
        name: &str,
        other: Option<(&str, &NodeField)>,
    ) -> String {
        let mut out = String::new();
        let coords: Vec<String> = (0..grid.dim()).map(|i| format!("x{i}")).collect();
        match other {
            Some((oname, _)) => {
                let _ = writeln!(out, "{},{name},{oname},gap", coords.join(","));
            }
            None => {
                let _ = writeln!(out, "{},{name}", coords.join(","));
            }
        }
        for (k, (&i, v)) in self.indices.iter().zip(&self.values).enumerate() {
            let x: Vec<String> = grid.node(i).iter().map(|c| format!("{c:.17e}")).collect();
            match other {
                Some((_, f)) => {
                    let w = f.values[k];
                    let _ = writeln!(out, "{},{v:.17e},{w:.17e},{:.17e}", x.join(","), v - w);
                }
                None => {
                    let _ = writeln!(out, "{},{v:.17e}", x.join(","));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HIntegral {
    pub h: f64,
    pub integral: f64,
}

/// Ball-average side: `I(h) = Σ_{x ∈ Ω_{h0}} e_{h,p}(x) w(x)` and its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub per_h: Vec<HIntegral>,
    /// Extrapolated `I(0)`, clamped at zero.
    pub energy: f64,
    pub extrapolation: Extrapolation,
    /// Grid measure of `Ω_{h0}`.
    pub region_measure: f64,
    pub domain_measure: f64,
    /// `|Ω \ Ω_{h0}| · sup density`.
    pub localization_deficit_bound: f64,
    pub sup_density: f64,
    /// `I(h)` changes direction by more than rounding.
    pub non_monotone: bool,
    pub ball_rule: String,
    pub ball_nodes: usize,
    /// Per-node extrapolated density on `Ω_{h0}`.
    #[serde(skip)]
    pub density: NodeField,
}

impl KsReport {
    pub fn flagged(&self) -> bool {
        self.non_monotone || self.extrapolation.flagged()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    pub k: usize,
    pub doubled_k: usize,
    pub energy_doubled: f64,
    pub relative_change: f64,
    pub under_truncated: bool,
}

/// One form (sphere average or ball integral) of the representation energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormReport {
    pub energy: f64,
    pub rule: String,
    pub rule_nodes: usize,
    /// Relative angular quadrature budget of the rule.
    pub quadrature_tolerance: f64,
    pub dense_truncation: usize,
    pub probe_anchors: usize,
    pub fd_step: f64,
    pub region_measure: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationCheck>,
    #[serde(skip)]
    pub density: NodeField,
}

impl FormReport {
    pub fn flagged(&self) -> bool {
        self.truncation.as_ref().is_some_and(|t| t.under_truncated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere: Option<FormReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball: Option<FormReport>,
}

impl RepReport {
    /// Sphere form when present, otherwise ball form.
    pub fn primary(&self) -> Option<&FormReport> {
        self.sphere.as_ref().or(self.ball.as_ref())
    }
}

/// Both energies for one map, with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub config: EnergyConfig,
    pub p: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<KsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rep: Option<RepReport>,
    pub warnings: Vec<String>,
}

impl EnergyReport {
    pub fn new(config: &EnergyConfig, n: usize) -> Self {
        Self {
            config: config.clone(),
            p: config.p,
            n,
            ks: None,
            rep: None,
            warnings: Vec::new(),
        }
    }

    /// `|E − ℰ| / ℰ` when both sides are present (absolute gap when `ℰ = 0`).
    pub fn relative_gap(&self) -> Option<f64> {
        let ks = self.ks.as_ref()?.energy;
        let rep = self.rep.as_ref()?.primary()?.energy;
        let gap = (ks - rep).abs();
        Some(if rep > 0.0 { gap / rep } else { gap })
    }

    pub fn is_flagged(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// Collects warnings from the pieces into `warnings`.
    pub fn collect_warnings(&mut self) {
        self.warnings.clear();
        if let Some(ks) = &self.ks {
            if ks.non_monotone {
                self.warnings
                    .push("ks: I(h) is not monotone in h; extrapolation unreliable".into());
            }
            if ks.extrapolation.flagged() {
                self.warnings
                    .push("ks: order fit ill-conditioned; fell back to a linear fit".into());
            }
        }
        if let Some(rep) = &self.rep {
            for (name, form) in [("sphere", &rep.sphere), ("ball", &rep.ball)] {
                if let Some(t) = form.as_ref().and_then(|f| f.truncation.as_ref()) {
                    if t.under_truncated {
                        self.warnings.push(format!(
                            "rep/{name}: doubling K from {} to {} changed the energy by {:.3e} (relative)",
                            t.k, t.doubled_k, t.relative_change
                        ));
                    }
                }
            }
        }
    }
}
