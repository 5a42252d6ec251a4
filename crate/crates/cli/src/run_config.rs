use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use ksenergy::config::EnergyConfig;
use ksenergy::{DomainGrid, MapSpec, MetricMap, Space};
use serde::{Deserialize, Serialize};

/// Raised for anything that should exit with the configuration status.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "invalid configuration: field `{}`: {}",
            self.field, self.reason
        )
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(field: &str, reason: impl Into<String>) -> anyhow::Error {
    ConfigError {
        field: field.to_string(),
        reason: reason.into(),
    }
    .into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl DomainSpec {
    pub fn cube(n: usize, lo: f64, hi: f64, res: usize) -> Self {
        Self {
            lower: vec![lo; n],
            upper: vec![hi; n],
            resolution: vec![res; n],
        }
    }

    pub fn grid(&self) -> Result<DomainGrid> {
        Ok(DomainGrid::new(
            self.lower.clone(),
            self.upper.clone(),
            self.resolution.clone(),
        )?)
    }
}

/// Everything needed to reproduce a run. Echoed verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: String,
    pub map: String,
    pub domain: DomainSpec,
    pub energy: EnergyConfig,
}

impl RunConfig {
    pub fn n(&self) -> usize {
        self.domain.lower.len()
    }

    pub fn build(&self) -> Result<(DomainGrid, MetricMap)> {
        let grid = self.domain.grid()?;
        let space = Space::parse(&self.space)?.into_handle();
        let map = MapSpec::parse(&self.map)?.build(space, grid.dim())?;
        self.energy.validate(grid.dim())?;
        Ok((grid, map))
    }

    /// Reads either a bare run config or a report that echoes one under
    /// `"config"`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            config_error(
                "config",
                format!(
                    "{}: line {} column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ),
            )
        })?;
        let inner = match value.get("config") {
            Some(c) if value.get("space").is_none() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner)
            .map_err(|e| config_error("config", format!("{}: {e}", path.display())))
    }
}

fn parse_list<T: std::str::FromStr>(field: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| config_error(field, format!("cannot parse `{t}` in `{s}`")))
        })
        .collect()
}

/// Flags shared by the energy subcommands. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Target space: euclidean:M, max_norm_plane, circle, q:Q:M
    #[arg(long)]
    pub space: Option<String>,
    /// Map: identity, constant[:c,..], linear:a,b;c,d, winding:k, qsplit, smooth
    #[arg(long)]
    pub map: Option<String>,
    /// Domain dimension
    #[arg(long)]
    pub n: Option<usize>,
    /// Cube bounds as LO,HI
    #[arg(long)]
    pub bounds: Option<String>,
    /// Nodes per axis
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Energy exponent, >= 1
    #[arg(long)]
    pub p: Option<f64>,
    /// Largest ball radius
    #[arg(long)]
    pub h0: Option<f64>,
    /// Length of the geometric sequence h0/2, h0/4, ...
    #[arg(long)]
    pub h_count: Option<usize>,
    /// Explicit h sequence, comma separated, strictly decreasing
    #[arg(long)]
    pub h_sequence: Option<String>,
    /// Radial Gauss-Legendre nodes of the ball rule
    #[arg(long)]
    pub ball_radial: Option<usize>,
    /// Angular counts of the ball rule, comma separated
    #[arg(long)]
    pub ball_sphere_order: Option<String>,
    /// Angular counts of the direction rule, comma separated
    #[arg(long)]
    pub sphere_order: Option<String>,
    /// Number of dense anchors
    #[arg(long, short = 'k')]
    pub dense_truncation: Option<usize>,
    /// Finite-difference step; defaults to the grid spacing / 1024
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Disable the far-anchor probes
    #[arg(long)]
    pub no_accelerate: bool,
    /// Skip the 2K recomputation
    #[arg(long)]
    pub no_truncation_check: bool,
}

pub struct Defaults {
    pub space: &'static str,
    pub map: &'static str,
    pub resolution: usize,
}

pub const DEFAULTS: Defaults = Defaults {
    space: "euclidean:2",
    map: "identity",
    resolution: 64,
};

impl RunArgs {
    pub fn resolve(
        &self,
        file: Option<&RunConfig>,
        seed: Option<u64>,
        defaults: &Defaults,
    ) -> Result<RunConfig> {
        let n = self.n.or(file.map(RunConfig::n)).unwrap_or(2);
        if n == 0 {
            return Err(config_error("n", "domain dimension must be >= 1"));
        }
        let mut energy = match file {
            Some(f) if f.n() == n => f.energy.clone(),
            _ => EnergyConfig::for_dimension(n),
        };
        let mut domain = match file {
            Some(f) if f.n() == n => f.domain.clone(),
            _ => DomainSpec::cube(n, 0.0, 1.0, defaults.resolution),
        };
        if let Some(b) = &self.bounds {
            let v: Vec<f64> = parse_list("bounds", b)?;
            if v.len() != 2 {
                return Err(config_error("bounds", "expected LO,HI"));
            }
            domain.lower = vec![v[0]; n];
            domain.upper = vec![v[1]; n];
        }
        if let Some(r) = self.resolution {
            domain.resolution = vec![r; n];
        }
        if let Some(p) = self.p {
            energy.p = p;
        }
        if self.h0.is_some() || self.h_count.is_some() {
            let h0 = self.h0.unwrap_or(energy.h0);
            let count = self.h_count.unwrap_or(energy.h_sequence.len());
            energy = energy.with_h0(h0, count);
        }
        if let Some(s) = &self.h_sequence {
            energy.h_sequence = parse_list("h_sequence", s)?;
        }
        if let Some(r) = self.ball_radial {
            energy.ball_radial = r;
        }
        if let Some(s) = &self.ball_sphere_order {
            energy.ball_sphere_order = parse_list("ball_sphere_order", s)?;
        }
        if let Some(s) = &self.sphere_order {
            energy.sphere_order = parse_list("sphere_order", s)?;
        }
        if let Some(k) = self.dense_truncation {
            energy.dense_truncation = k;
        }
        if self.fd_step.is_some() {
            energy.fd_step = self.fd_step;
        }
        if self.no_accelerate {
            energy.accelerate = false;
        }
        if self.no_truncation_check {
            energy.truncation_check = false;
        }
        if let Some(s) = seed {
            energy.seed = s;
        }
        let cfg = RunConfig {
            space: self
                .space
                .clone()
                .or(file.map(|f| f.space.clone()))
                .unwrap_or_else(|| defaults.space.to_string()),
            map: self
                .map
                .clone()
                .or(file.map(|f| f.map.clone()))
                .unwrap_or_else(|| defaults.map.to_string()),
            domain,
            energy,
        };
        Ok(cfg)
    }
}
