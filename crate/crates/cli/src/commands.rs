use std::fmt::Write as _;

use anyhow::{bail, Result};
use clap::ValueEnum;
use ksenergy::config::EnergyConfig;
use ksenergy::directional::combined_quadrature_tolerance;
use ksenergy::oracles;
use ksenergy::quadrature::extrapolate;
use ksenergy::report::NodeField;
use ksenergy::{
    frame_sum_energy, ks_energy, rep_energy_ball, rep_energy_sphere, DomainGrid, EnergyReport,
    MetricMap, RepReport,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::run_config::{config_error, RunConfig};

/// Result of one subcommand: the JSON body plus CSV side files.
pub struct Outcome {
    pub result: Value,
    pub warnings: Vec<String>,
    pub csv: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Form {
    Sphere,
    Ball,
    Both,
}

fn rep_report(
    map: &MetricMap,
    grid: &DomainGrid,
    cfg: &EnergyConfig,
    form: Form,
) -> Result<RepReport> {
    let sphere = match form {
        Form::Sphere | Form::Both => Some(rep_energy_sphere(map, grid, cfg)?),
        Form::Ball => None,
    };
    let ball = match form {
        Form::Ball | Form::Both => Some(rep_energy_ball(map, grid, cfg)?),
        Form::Sphere => None,
    };
    Ok(RepReport { sphere, ball })
}

fn per_h_csv(report: &ksenergy::KsReport) -> String {
    let mut out = String::from("h,integral\n");
    for s in &report.per_h {
        let _ = writeln!(out, "{:.17e},{:.17e}", s.h, s.integral);
    }
    out
}

pub fn ks(run: &RunConfig) -> Result<Outcome> {
    let (grid, map) = run.build()?;
    let mut report = EnergyReport::new(&run.energy, grid.dim());
    let ks = ks_energy(&map, &grid, &run.energy)?;
    let csv = vec![
        ("per_h.csv".to_string(), per_h_csv(&ks)),
        (
            "ks_density.csv".to_string(),
            ks.density.to_csv(&grid, "ks_density", None),
        ),
    ];
    report.ks = Some(ks);
    report.collect_warnings();
    Ok(Outcome {
        warnings: report.warnings.clone(),
        result: serde_json::to_value(&report)?,
        csv,
    })
}

pub fn rep(run: &RunConfig, form: Form) -> Result<Outcome> {
    let (grid, map) = run.build()?;
    let mut report = EnergyReport::new(&run.energy, grid.dim());
    let rep = rep_report(&map, &grid, &run.energy, form)?;
    let mut csv = Vec::new();
    for (name, f) in [("sphere", &rep.sphere), ("ball", &rep.ball)] {
        if let Some(f) = f {
            csv.push((
                format!("rep_{name}_density.csv"),
                f.density.to_csv(&grid, "rep_density", None),
            ));
        }
    }
    fill(&mut report, None, Some(rep));
    let mut result = serde_json::to_value(&report)?;
    if let Some(RepReport {
        sphere: Some(s),
        ball: Some(b),
    }) = &report.rep
    {
        let rel = (s.energy - b.energy).abs() / s.energy.max(f64::MIN_POSITIVE);
        result["sphere_ball_relative_difference"] = json!(rel);
        result["sphere_ball_tolerance"] = json!(combined_quadrature_tolerance(s, b));
    }
    Ok(Outcome {
        warnings: report.warnings.clone(),
        result,
        csv,
    })
}

fn fill(report: &mut EnergyReport, ks: Option<ksenergy::KsReport>, rep: Option<RepReport>) {
    report.ks = ks;
    report.rep = rep;
    report.collect_warnings();
}

/// Per-source error budget of a comparison, all relative to `ℰ^p`.
#[derive(Debug, Serialize)]
struct Budget {
    extrapolation: f64,
    truncation: f64,
    quadrature: f64,
    fd_step: f64,
    localization_deficit_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sphere_ball_difference: Option<f64>,
}

pub fn compare(run: &RunConfig, form: Form) -> Result<Outcome> {
    let (grid, map) = run.build()?;
    let cfg = &run.energy;
    let mut report = EnergyReport::new(cfg, grid.dim());
    let ks = ks_energy(&map, &grid, cfg)?;
    let rep = rep_report(&map, &grid, cfg, form)?;
    fill(&mut report, Some(ks), Some(rep));
    let ks = report.ks.as_ref().unwrap();
    let rep = report.rep.as_ref().unwrap();
    let primary = rep.primary().unwrap();
    let scale = primary.energy.max(f64::MIN_POSITIVE);
    let budget = Budget {
        extrapolation: ks.extrapolation.error_estimate / scale,
        truncation: primary
            .truncation
            .as_ref()
            .map_or(0.0, |t| t.relative_change.abs()),
        quadrature: primary.quadrature_tolerance,
        fd_step: primary.fd_step,
        localization_deficit_bound: ks.localization_deficit_bound,
        sphere_ball_difference: match (&rep.sphere, &rep.ball) {
            (Some(s), Some(b)) => Some((s.energy - b.energy).abs() / scale),
            _ => None,
        },
    };
    let gap = report.relative_gap().unwrap();
    let mut csv = vec![("per_h.csv".to_string(), per_h_csv(ks))];
    csv.push((
        "density_gap.csv".to_string(),
        ks.density
            .to_csv(&grid, "ks_density", Some(("rep_density", &primary.density))),
    ));
    let gap_field = NodeField {
        indices: ks.density.indices.clone(),
        values: ks
            .density
            .values
            .iter()
            .zip(&primary.density.values)
            .map(|(a, b)| (a - b).abs())
            .collect(),
    };
    let result = json!({
        "report": &report,
        "relative_gap": gap,
        "max_density_gap": gap_field.max(),
        "budget": budget,
    });
    Ok(Outcome {
        warnings: report.warnings.clone(),
        result,
        csv,
    })
}

fn node_mean(f: &NodeField) -> f64 {
    if f.is_empty() {
        0.0
    } else {
        f.values.iter().sum::<f64>() / f.len() as f64
    }
}

fn node_spread(f: &NodeField, target: f64) -> f64 {
    f.values
        .iter()
        .map(|v| (v - target).abs())
        .fold(0.0, f64::max)
}

pub fn frame_vs_sphere(run: &RunConfig) -> Result<Outcome> {
    let (grid, map) = run.build()?;
    let cfg = &run.energy;
    let frame = frame_sum_energy(&map, &grid, cfg)?;
    let sphere = rep_energy_sphere(&map, &grid, cfg)?;
    let mut csv_body = String::new();
    let _ = write!(
        csv_body,
        "{}",
        frame.density.to_csv(
            &grid,
            "frame_sum",
            Some(("sphere_average", &sphere.density))
        )
    );
    let result = json!({
        "frame_sum_energy": frame.energy,
        "sphere_energy": sphere.energy,
        "frame_sum_density_mean": node_mean(&frame.density),
        "sphere_density_mean": node_mean(&sphere.density),
        "frame": frame,
        "sphere": sphere,
    });
    Ok(Outcome {
        warnings: Vec::new(),
        result,
        csv: vec![("frame_vs_sphere.csv".to_string(), csv_body)],
    })
}

/// Oracle nodes for the circle averages.
const ORACLE_NODES: usize = 10_000_000;

pub fn counterexample(run: &RunConfig) -> Result<Outcome> {
    if run.n() != 2 {
        return Err(config_error(
            "n",
            "the counterexample lives on a 2-dimensional domain",
        ));
    }
    if run.map != "identity" {
        return Err(config_error(
            "map",
            format!(
                "the counterexample needs the identity map, got `{}`",
                run.map
            ),
        ));
    }
    if run.space != "max_norm_plane" {
        return Err(config_error(
            "space",
            format!(
                "the counterexample needs max_norm_plane, got `{}`",
                run.space
            ),
        ));
    }
    let (grid, map) = run.build()?;
    let cfg = &run.energy;
    let frame = frame_sum_energy(&map, &grid, cfg)?;
    let sphere = rep_energy_sphere(&map, &grid, cfg)?;
    let (oracle_frame, oracle_sphere) =
        oracles::maxnorm_counterexample_constants(cfg.p, ORACLE_NODES);
    let frame_density = node_mean(&frame.density);
    let sphere_density = node_mean(&sphere.density);
    let strict = frame
        .density
        .values
        .iter()
        .zip(&sphere.density.values)
        .all(|(f, s)| f > s);
    if !strict {
        bail!("frame sum does not exceed the sphere average at every node");
    }
    let mut result = json!({
        "p": cfg.p,
        "frame_sum_density": frame_density,
        "sphere_average_density": sphere_density,
        "frame_sum_max_deviation": node_spread(&frame.density, oracle_frame),
        "sphere_average_max_deviation": node_spread(&sphere.density, oracle_sphere),
        "oracle": { "frame_sum": oracle_frame, "sphere_average": oracle_sphere, "nodes": ORACLE_NODES },
        "strict_inequality": strict,
        "frame_sum_energy": frame.energy,
        "sphere_energy": sphere.energy,
        "nodes": frame.density.len(),
    });
    if cfg.p == 2.0 {
        result["closed_form_sphere_average"] = json!(oracles::maxnorm_sphere_average_p2());
    }
    let mut warnings = Vec::new();
    if let Some(t) = sphere.truncation.as_ref().filter(|t| t.under_truncated) {
        warnings.push(format!(
            "rep/sphere: doubling K changed the energy by {:.3e}",
            t.relative_change
        ));
    }
    Ok(Outcome {
        warnings,
        result,
        csv: vec![(
            "counterexample.csv".to_string(),
            frame.density.to_csv(
                &grid,
                "frame_sum",
                Some(("sphere_average", &sphere.density)),
            ),
        )],
    })
}

fn sphere_order_sweep(n: usize) -> Vec<Vec<usize>> {
    match n {
        2 => vec![vec![16], vec![32], vec![64], vec![128], vec![256]],
        3 => vec![vec![4, 8], vec![8, 16], vec![16, 32]],
        _ => vec![vec![64], vec![256], vec![1024]],
    }
}

fn table(header: &str, rows: &[(String, f64)]) -> String {
    let mut out = format!("{header}\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v:.17e}");
    }
    out
}

pub fn convergence(run: &RunConfig, deltas: usize) -> Result<Outcome> {
    let (grid, map) = run.build()?;
    let cfg = &run.energy;
    let ks = ks_energy(&map, &grid, cfg)?;

    let mut fast = cfg.clone();
    fast.truncation_check = false;

    let mut k_rows = Vec::new();
    let mut k = 16.min(cfg.dense_truncation);
    loop {
        let e = rep_energy_sphere(&map, &grid, &fast.clone().with_k(k))?.energy;
        k_rows.push((k.to_string(), e));
        if k >= cfg.dense_truncation {
            break;
        }
        k = (2 * k).min(cfg.dense_truncation);
    }
    let k_monotone = k_rows.windows(2).all(|w| w[1].1 >= w[0].1);

    let mut order_rows = Vec::new();
    for order in sphere_order_sweep(grid.dim()) {
        let mut c = fast.clone();
        c.sphere_order = order.clone();
        let label = order
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("x");
        order_rows.push((label, rep_energy_sphere(&map, &grid, &c)?.energy));
    }

    let mut delta_rows = Vec::new();
    let mut pairs = Vec::new();
    for j in 1..=deltas {
        let d = grid.min_spacing() / (1u64 << j) as f64;
        let mut c = fast.clone();
        c.fd_step = Some(d);
        let e = rep_energy_sphere(&map, &grid, &c)?.energy;
        delta_rows.push((format!("{d:.17e}"), e));
        pairs.push((d, e));
    }
    let delta_fit = if pairs.len() >= 3 {
        Some(extrapolate(&pairs)?)
    } else {
        None
    };

    let csv = vec![
        ("per_h.csv".to_string(), per_h_csv(&ks)),
        ("k_sweep.csv".to_string(), table("k,energy", &k_rows)),
        (
            "sphere_order_sweep.csv".to_string(),
            table("sphere_order,energy", &order_rows),
        ),
        (
            "delta_sweep.csv".to_string(),
            table("delta,energy", &delta_rows),
        ),
    ];
    let rows = |r: &[(String, f64)], key: &str| -> Vec<Value> {
        r.iter()
            .map(|(k, v)| json!({ key: k, "energy": v }))
            .collect()
    };
    let mut warnings = Vec::new();
    if ks.non_monotone {
        warnings.push("ks: I(h) is not monotone in h".to_string());
    }
    if !k_monotone {
        warnings.push("rep: energy decreased when K grew".to_string());
    }
    let result = json!({
        "per_h": ks.per_h,
        "ks_extrapolation": ks.extrapolation,
        "k_sweep": rows(&k_rows, "k"),
        "k_monotone": k_monotone,
        "sphere_order_sweep": rows(&order_rows, "sphere_order"),
        "delta_sweep": pairs.iter().map(|(d, e)| json!({"delta": d, "energy": e})).collect::<Vec<_>>(),
        "delta_fit": delta_fit,
    });
    Ok(Outcome {
        result,
        warnings,
        csv,
    })
}

pub fn oracle(matrix: &str, p: f64) -> Result<Outcome> {
    if !(p >= 1.0) {
        return Err(config_error("p", format!("need p >= 1, got {p}")));
    }
    let rows: Vec<Vec<f64>> = matrix
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| config_error("matrix", format!("bad entry `{t}`")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if !(width == 2 || width == 3) || rows.iter().any(|r| r.len() != width) {
        return Err(config_error(
            "matrix",
            "need an m x 2 or m x 3 matrix with equal rows",
        ));
    }
    let density = if width == 2 {
        oracles::linear_euclidean_density_2d(&rows, p, 1_000_000)
    } else {
        oracles::linear_euclidean_density_3d(&rows, p, 1000)
    };
    let (frame, sphere) = oracles::maxnorm_counterexample_constants(p, ORACLE_NODES);
    let mut result = json!({
        "p": p,
        "linear_euclidean": { "matrix": rows, "density": density },
        "maxnorm_counterexample": { "frame_sum": frame, "sphere_average": sphere },
    });
    if p == 2.0 {
        result["linear_euclidean"]["frobenius_over_n"] = json!(oracles::frobenius_density(&rows));
        result["maxnorm_counterexample"]["closed_form"] =
            json!(oracles::maxnorm_sphere_average_p2());
    }
    Ok(Outcome {
        result,
        warnings: Vec::new(),
        csv: Vec::new(),
    })
}
