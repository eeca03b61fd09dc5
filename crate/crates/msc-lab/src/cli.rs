//! Command implementations behind the `msc-lab` binary: validate, spectral
//! analysis, simulation with CSV export, declared-tolerance checking, seed
//! sweeps, and plot-ready long-format data.
//!
//! Exit-code contract: 0 success, 1 check failure, 2 validation/parse error,
//! 3 i/o error.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;

use crate::metrics::MetricReport;
use crate::protocols::Protocol;
use crate::scenario::{self, builtins, Scenario, ScenarioError};
use crate::sim::{self, Trajectory};
use crate::spectral;

#[derive(Debug)]
pub enum CliError {
    Scenario(ScenarioError),
    Io(String),
    CheckFailed,
    SpectralInvariantFailed(String),
    BadArgument(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Scenario(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::CheckFailed => write!(f, "one or more declared checks failed"),
            CliError::SpectralInvariantFailed(what) => {
                write!(f, "spectral invariant failed: {what}")
            }
            CliError::BadArgument(what) => write!(f, "{what}"),
        }
    }
}

impl CliError {
    /// Stable exit-code mapping.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed | CliError::SpectralInvariantFailed(_) => 1,
            CliError::Scenario(ScenarioError::Io(_)) | CliError::Io(_) => 3,
            CliError::Scenario(_) | CliError::BadArgument(_) => 2,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

/// Overrides shared by the run-style commands.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub h: Option<f64>,
    pub t_final: Option<f64>,
}

/// Resolves a scenario argument: an existing file path wins, otherwise a
/// built-in name.
pub fn resolve_scenario(arg: &str, ov: Overrides) -> Result<Scenario, CliError> {
    let mut file = if Path::new(arg).exists() {
        let text = std::fs::read_to_string(arg)
            .map_err(|e| CliError::Scenario(ScenarioError::Io(e.to_string())))?;
        scenario::parse_scenario(&text)?
    } else if let Some(b) = builtins::by_name(arg) {
        b
    } else {
        return Err(CliError::BadArgument(format!(
            "`{arg}` is neither a scenario file nor a built-in (known: {})",
            builtins::names().join(", ")
        )));
    };
    if let Some(h) = ov.h {
        file.sim.h = h;
    }
    if let Some(t) = ov.t_final {
        file.sim.t_final = t;
    }
    Ok(scenario::build_scenario(&file, ov.seed)?)
}

pub fn cmd_validate(arg: &str) -> Result<(), CliError> {
    let scenario = resolve_scenario(arg, Overrides::default())?;
    println!(
        "{}: ok (n = {}, d = {}, variant = {:?})",
        scenario.name(),
        scenario.spec.agent_count(),
        scenario.spec.dim(),
        scenario.spec.protocol().tag()
    );
    for w in scenario.spec.warnings() {
        println!("  warning: {w}");
    }
    Ok(())
}

fn out_dir(dir: &Option<PathBuf>) -> PathBuf {
    dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn protocol_drift(p: &Protocol) -> Option<DMatrix<f64>> {
    match p {
        Protocol::LinearHomogeneous { a, .. }
        | Protocol::AdaptiveGain { a, .. }
        | Protocol::ObserverHomogeneous { a, .. } => Some(a.clone()),
        Protocol::HeteroFullInput { a_nominal, .. }
        | Protocol::ObserverHeterogeneous { a_nominal, .. } => Some(a_nominal.clone()),
        _ => None,
    }
}

/// Runs the spectral pipeline and writes `<name>_spectral.json`. Fails (exit
/// 1) unless every spectral invariant holds.
pub fn cmd_spectral(arg: &str, ov: Overrides, dir: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let scenario = resolve_scenario(arg, ov)?;
    let ml = spectral::msc_laplacian(&scenario.graph, &scenario.scalings)
        .map_err(|e| CliError::SpectralInvariantFailed(e.to_string()))?;
    let drift = protocol_drift(scenario.spec.protocol());
    let report = spectral::spectral_report(&ml, drift.as_ref(), 1.05)
        .map_err(|e| CliError::SpectralInvariantFailed(e.to_string()))?;

    let dir = out_dir(&dir);
    let path = dir.join(format!("{}_spectral.json", scenario.name()));
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    sim::atomic_write(&path, text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;

    if !report.kernel_count_ok {
        return Err(CliError::SpectralInvariantFailed(format!(
            "kernel dimension {} != d = {}",
            report.kernel_dimension, report.d
        )));
    }
    if !report.positive_count_ok {
        return Err(CliError::SpectralInvariantFailed(
            "wrong number of eigenvalues with positive real part".into(),
        ));
    }
    if report.kernel_residual > 1e-9 {
        return Err(CliError::SpectralInvariantFailed(format!(
            "kernel residual {:.3e}",
            report.kernel_residual
        )));
    }
    if report.reduction_biorthogonality_residual > 1e-8 {
        return Err(CliError::SpectralInvariantFailed(format!(
            "biorthogonality residual {:.3e}",
            report.reduction_biorthogonality_residual
        )));
    }
    if report.reduction_offblock_residual > 1e-7 {
        return Err(CliError::SpectralInvariantFailed(format!(
            "off-block residual {:.3e}",
            report.reduction_offblock_residual
        )));
    }
    if let Some(inter) = &report.interlacing {
        if !inter.all_real || !inter.nonzero_contained {
            return Err(CliError::SpectralInvariantFailed(
                "symmetric-scaling spectrum not real or outside its interval".into(),
            ));
        }
    }
    Ok(path)
}

/// Integrates the scenario and returns the trajectory (metadata carries the
/// materialized draws).
pub fn run_scenario(scenario: &Scenario) -> Result<Trajectory, CliError> {
    let init = sim::random_initial_state(&scenario.spec, &scenario.initial, scenario.seed())
        .map_err(|e| CliError::BadArgument(e.to_string()))?;
    let mut traj = sim::integrate(&scenario.spec, &init, &scenario.config)
        .map_err(|e| CliError::BadArgument(e.to_string()))?;
    traj.metadata.resolved_params = Some(scenario.resolved.clone());
    Ok(traj)
}

/// Simulate and export `<name>_seed<k>.csv` plus metadata sidecar.
pub fn cmd_simulate(arg: &str, ov: Overrides, dir: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let scenario = resolve_scenario(arg, ov)?;
    let traj = run_scenario(&scenario)?;
    let dir = out_dir(&dir);
    let path = dir.join(format!("{}_seed{}.csv", scenario.name(), scenario.seed()));
    sim::write_trajectory_csv(&traj, &path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}

/// Simulate, evaluate the declared checks, and write `<name>_report.json`.
pub fn cmd_check(
    arg: &str,
    ov: Overrides,
    dir: Option<PathBuf>,
) -> Result<MetricReport, CliError> {
    let scenario = resolve_scenario(arg, ov)?;
    let report = check_scenario(&scenario)?;
    if let Some(dir) = dir {
        let path = dir.join(format!("{}_report.json", scenario.name()));
        let text =
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
        sim::atomic_write(&path, text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(report)
}

pub fn check_scenario(scenario: &Scenario) -> Result<MetricReport, CliError> {
    let traj = run_scenario(scenario)?;
    let results = scenario
        .file
        .checks
        .iter()
        .map(|c| c.evaluate(scenario, &traj))
        .collect::<Vec<_>>();
    Ok(MetricReport::new(
        scenario.name().to_string(),
        scenario.seed(),
        traj.metadata.diverged,
        results,
    ))
}

/// Runs `runs` seeds (base, base+1, …) in parallel; parallelism is capped by
/// the `MSC_LAB_THREADS` environment variable when set.
pub fn cmd_sweep(
    arg: &str,
    ov: Overrides,
    runs: usize,
    dir: Option<PathBuf>,
) -> Result<(PathBuf, usize), CliError> {
    use rayon::prelude::*;
    let base = resolve_scenario(arg, ov)?;
    let base_seed = base.seed();
    let seeds: Vec<u64> = (0..runs as u64).map(|k| base_seed + k).collect();

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Ok(cap) = std::env::var("MSC_LAB_THREADS") {
            if let Ok(k) = cap.parse::<usize>() {
                builder = builder.num_threads(k.max(1));
            }
        }
        builder.build().map_err(|e| CliError::Io(e.to_string()))?
    };

    let results: Vec<Result<MetricReport, String>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|seed| {
                let sc = resolve_scenario(arg, Overrides { seed: Some(*seed), ..ov })
                    .map_err(|e| e.to_string())?;
                check_scenario(&sc).map_err(|e| e.to_string())
            })
            .collect()
    });

    let dir = out_dir(&dir);
    let mut passed = 0usize;
    let mut rows = Vec::new();
    for (seed, res) in seeds.iter().zip(&results) {
        match res {
            Ok(report) => {
                if report.passed {
                    passed += 1;
                }
                rows.push(json!({
                    "seed": seed,
                    "passed": report.passed,
                    "diverged": report.diverged,
                    "results": report.results,
                }));
            }
            Err(e) => rows.push(json!({ "seed": seed, "error": e })),
        }
    }
    let summary = json!({
        "scenario": base.name(),
        "runs": runs,
        "passed": passed,
        "rows": rows,
    });
    let path = dir.join(format!("{}_sweep.json", base.name()));
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    sim::atomic_write(&path, text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok((path, passed))
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Xy,
    Component,
    Norm,
    Gains,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xy" => Ok(PlotKind::Xy),
            "component" => Ok(PlotKind::Component),
            "norm" => Ok(PlotKind::Norm),
            "gains" => Ok(PlotKind::Gains),
            other => Err(format!("unknown plot kind `{other}` (xy|component|norm|gains)")),
        }
    }
}

/// Converts trajectory CSVs into one tidy long-format CSV
/// `source,t,agent,series,value`. The header is self-describing, so no
/// metadata sidecar is needed.
pub fn cmd_plotdata(kind: PlotKind, files: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut body = String::from("source,t,agent,series,value\n");
    for file in files {
        let text = std::fs::read_to_string(file).map_err(|e| CliError::Io(e.to_string()))?;
        let source = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trajectory".into());
        append_plot_rows(&mut body, kind, &source, &text)
            .map_err(|e| CliError::BadArgument(format!("{}: {e}", file.display())))?;
    }
    sim::atomic_write(out, body.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
}

fn append_plot_rows(
    body: &mut String,
    kind: PlotKind,
    source: &str,
    csv: &str,
) -> Result<(), String> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or("empty file")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") {
        return Err("first column must be t".into());
    }
    // Column map: (block label, agent, component) per column.
    struct Col {
        agent: usize,
        component: usize,
        label: &'static str,
    }
    let mut mapping: Vec<Option<Col>> = vec![None];
    for c in &cols[1..] {
        let parts: Vec<&str> = c.split('_').collect();
        let mapped = match parts.as_slice() {
            ["x", i, k] => Some(("x", i, Some(k))),
            ["c", i] => Some(("c", i, None)),
            ["theta", i, k] => Some(("theta", i, Some(k))),
            ["xhat", i, k] => Some(("xhat", i, Some(k))),
            ["eta", i, k] => Some(("eta", i, Some(k))),
            ["z", i, k] => Some(("z", i, Some(k))),
            _ => None,
        };
        mapping.push(mapped.and_then(|(label, i, k)| {
            let agent: usize = i.parse().ok()?;
            let component: usize = match k {
                Some(k) => k.parse().ok()?,
                None => 1,
            };
            let label = match label {
                "x" => "x",
                "c" => "c",
                "theta" => "theta",
                "xhat" => "xhat",
                "eta" => "eta",
                _ => "z",
            };
            Some(Col { agent, component, label })
        }));
    }

    for line in lines {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        let t = vals[0];
        let mut norms: std::collections::BTreeMap<usize, f64> = Default::default();
        for (idx, v) in vals.iter().enumerate().skip(1) {
            let Some(col) = &mapping[idx] else { continue };
            match kind {
                PlotKind::Xy => {
                    if col.label == "x" && col.component <= 2 {
                        let series = if col.component == 1 { "x" } else { "y" };
                        body.push_str(&format!("{source},{t},{},{series},{v}\n", col.agent));
                    }
                }
                PlotKind::Component => {
                    if col.label == "x" {
                        body.push_str(&format!(
                            "{source},{t},{},x_{},{v}\n",
                            col.agent, col.component
                        ));
                    }
                }
                PlotKind::Norm => {
                    if col.label == "x" {
                        let val: f64 = v.parse().map_err(|_| "bad float")?;
                        *norms.entry(col.agent).or_insert(0.0) += val * val;
                    }
                }
                PlotKind::Gains => {
                    if col.label == "c" {
                        body.push_str(&format!("{source},{t},{},c,{v}\n", col.agent));
                    }
                }
            }
        }
        if kind == PlotKind::Norm {
            for (agent, sq) in norms {
                body.push_str(&format!("{source},{t},{agent},norm,{}\n", sq.sqrt()));
            }
        }
    }
    Ok(())
}
