//! Quantitative verdicts on trajectories: scaled disagreement, settling
//! time, conservation drift, input bounds, persistent-excitation windows,
//! estimate errors and reference tracking.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::protocols::{Block, ProtocolSpec, VariantTag};
use crate::scaling::ScalingSet;
use crate::sim::Trajectory;
use crate::spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric `{metric}` does not apply to the {variant:?} variant")]
    WrongVariant { metric: &'static str, variant: VariantTag },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("recording grid too coarse: spacing {spacing} exceeds {limit} (need ≥ 10 samples per reference period)")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("dimension mismatch: trajectory carries {got} agent states, scaling set expects {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// One evaluated check: the metric value, the tolerance it was held to, and
/// the time window it was evaluated on.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub window: String,
    pub passed: bool,
}

/// All checks of one scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub scenario: String,
    pub seed: u64,
    pub diverged: bool,
    pub results: Vec<CheckResult>,
    pub passed: bool,
}

impl MetricReport {
    pub fn new(scenario: String, seed: u64, diverged: bool, results: Vec<CheckResult>) -> Self {
        let passed = results.iter().all(|r| r.passed);
        Self { scenario, seed, diverged, results, passed }
    }
}

fn check_dims(traj: &Trajectory, ss: &ScalingSet) -> Result<(), MetricError> {
    if traj.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let (_, len) = traj.layout.block_range(Block::Agents).expect("agent block");
    if len != ss.len() * ss.dim() {
        return Err(MetricError::DimensionMismatch { got: len, want: ss.len() * ss.dim() });
    }
    Ok(())
}

/// `D(t) = max_{i<j} ‖S_i x_i(t) − S_j x_j(t)‖₂`, one value per recorded step.
pub fn disagreement(traj: &Trajectory, ss: &ScalingSet) -> Result<Vec<f64>, MetricError> {
    check_dims(traj, ss)?;
    let (n, d) = (ss.len(), ss.dim());
    let mut out = Vec::with_capacity(traj.len());
    let mut scaled = vec![DVector::zeros(d); n];
    for k in 0..traj.len() {
        let x = traj.agents_at(k);
        for i in 0..n {
            scaled[i] = ss.get(i).entries() * x.rows(i * d, d);
        }
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((&scaled[i] - &scaled[j]).norm());
            }
        }
        out.push(worst);
    }
    Ok(out)
}

/// Scaled-state radii `‖S_i x_i(t)‖`, indexed `[step][agent]`.
pub fn scaled_radii(traj: &Trajectory, ss: &ScalingSet) -> Result<Vec<Vec<f64>>, MetricError> {
    check_dims(traj, ss)?;
    let (n, d) = (ss.len(), ss.dim());
    Ok((0..traj.len())
        .map(|k| {
            let x = traj.agents_at(k);
            (0..n).map(|i| (ss.get(i).entries() * x.rows(i * d, d)).norm()).collect()
        })
        .collect())
}

/// First recorded time after which the agent block stays inside the
/// `fraction`-ball around `reference` (scale = ‖x(0) − x_∞‖). When no
/// analytic limit exists, pass `None`: the final recorded state stands in
/// for `x_∞`, and settling must happen within the first 90% of the horizon
/// to count.
pub fn settling_time(
    traj: &Trajectory,
    reference: Option<&DVector<f64>>,
    fraction: f64,
) -> Result<Option<f64>, MetricError> {
    if traj.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    if traj.metadata.diverged {
        return Ok(None);
    }
    let self_referenced = reference.is_none();
    let x_inf = match reference {
        Some(r) => r.clone(),
        None => traj.agents_at(traj.len() - 1).into_owned(),
    };
    let scale = (traj.agents_at(0) - &x_inf).norm();
    if scale == 0.0 {
        return Ok(Some(0.0));
    }
    let mut settle: Option<f64> = None;
    for k in 0..traj.len() {
        let dist = (traj.agents_at(k) - &x_inf).norm();
        if dist < fraction * scale {
            settle.get_or_insert(traj.times[k]);
        } else {
            settle = None;
        }
    }
    if self_referenced {
        if let Some(t) = settle {
            if t > 0.9 * traj.final_time() {
                return Ok(None);
            }
        }
    }
    Ok(settle)
}

/// Sup-norm drift of the virtual consensus point
/// `x₀(t) = P Σ_i sign(S_i) x_i(t)` relative to its initial value. Only the
/// basic and nonlinear laws conserve it.
pub fn conservation_drift(traj: &Trajectory, ss: &ScalingSet) -> Result<f64, MetricError> {
    match traj.metadata.protocol {
        VariantTag::Basic | VariantTag::Nonlinear => {}
        v => return Err(MetricError::WrongVariant { metric: "conservation_drift", variant: v }),
    }
    check_dims(traj, ss)?;
    let x0 = crate::protocols::virtual_consensus_point(ss, &traj.agents_at(0));
    let mut worst: f64 = 0.0;
    for k in 1..traj.len() {
        let xk = crate::protocols::virtual_consensus_point(ss, &traj.agents_at(k));
        worst = worst.max((xk - &x0).abs().max());
    }
    Ok(worst)
}

/// `max_i ‖u_i(t)‖_∞` per recorded step, re-evaluating the control law along
/// the recorded states.
pub fn input_sup_norm(traj: &Trajectory, spec: &ProtocolSpec) -> Result<Vec<f64>, MetricError> {
    if traj.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let field = spec.vector_field();
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, y)| {
            field
                .control_inputs(*t, y)
                .iter()
                .map(|u| u.abs().max())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Sliding-window persistent-excitation report for a time-only regressor.
#[derive(Debug, Clone, Serialize)]
pub struct PeReport {
    pub t_window: f64,
    pub mu2_min: f64,
    pub mu1_max: f64,
    /// `μ₂_min > 1e−6·T_window`.
    pub persistently_exciting: bool,
}

/// Integrates `∫ φ(τ)φ(τ)ᵀ dτ` over sliding windows `[t, t + T_window]`
/// (composite Simpson, 1000 sub-intervals per window) and reports the
/// extremal Gram eigenvalues across window starts on `[0, horizon]`.
pub fn pe_window<F>(phi: F, t_window: f64, window_starts: usize, horizon: f64) -> PeReport
where
    F: Fn(f64) -> DMatrix<f64>,
{
    assert!(t_window > 0.0, "window length must be positive");
    let starts = window_starts.max(1);
    let span = (horizon - t_window).max(0.0);
    let mut mu2_min = f64::INFINITY;
    let mut mu1_max = f64::NEG_INFINITY;
    for w in 0..starts {
        let start = if starts == 1 { 0.0 } else { span * w as f64 / (starts - 1) as f64 };
        let gram = simpson_gram(&phi, start, t_window, 1000);
        let eig = gram.symmetric_eigen().eigenvalues;
        mu2_min = mu2_min.min(eig.min());
        mu1_max = mu1_max.max(eig.max());
    }
    PeReport {
        t_window,
        mu2_min,
        mu1_max,
        persistently_exciting: mu2_min > 1e-6 * t_window,
    }
}

fn simpson_gram<F>(phi: &F, start: f64, t_window: f64, intervals: usize) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let m = intervals + intervals % 2;
    let h = t_window / m as f64;
    let outer = |t: f64| {
        let p = phi(t);
        &p * p.transpose()
    };
    let mut sum = outer(start) + outer(start + t_window);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += outer(start + k as f64 * h) * w;
    }
    sum * (h / 3.0)
}

/// Per-agent estimate error series `‖θ̂_i(t) − θ_i‖` plus the stacked
/// aggregate, for adaptive runs.
#[derive(Debug, Clone)]
pub struct EstimateError {
    pub per_agent: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
}

pub fn estimate_error(
    traj: &Trajectory,
    theta: &[DVector<f64>],
) -> Result<EstimateError, MetricError> {
    if traj.metadata.protocol != VariantTag::Adaptive {
        return Err(MetricError::WrongVariant {
            metric: "estimate_error",
            variant: traj.metadata.protocol,
        });
    }
    if traj.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let n = traj.layout.n;
    let r = traj.layout.r;
    let mut per_agent = vec![Vec::with_capacity(traj.len()); n];
    let mut aggregate = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let th = traj.block_at(Block::ThetaHat, k).expect("adaptive block");
        let mut total = 0.0;
        for i in 0..n {
            let err = (th.rows(i * r, r) - &theta[i]).norm();
            per_agent[i].push(err);
            total += err * err;
        }
        aggregate.push(total.sqrt());
    }
    Ok(EstimateError { per_agent, aggregate })
}

/// Best-common-reference tracking for linear and observer variants: the
/// reference is `r(t) = mean_i S_i x_i(t)`; `max_residual` is
/// `max_i ‖S_i x_i − r‖` and `defect` estimates `‖ṙ − PAP⁻¹ r‖` by central
/// differences on the recorded grid.
#[derive(Debug, Clone)]
pub struct ReferenceTracking {
    pub times: Vec<f64>,
    pub max_residual: Vec<f64>,
    /// Defect on interior samples (times[1..len-1]).
    pub defect: Vec<f64>,
}

pub fn reference_tracking(
    traj: &Trajectory,
    ss: &ScalingSet,
    a_ref: &DMatrix<f64>,
) -> Result<ReferenceTracking, MetricError> {
    check_dims(traj, ss)?;
    if traj.len() < 3 {
        return Err(MetricError::EmptyTrajectory);
    }
    let (n, d) = (ss.len(), ss.dim());
    let p = spectral::p_matrix(ss);
    let reference_matrix = &p * a_ref * p.lu().try_inverse().expect("P invertible");
    let spacing = traj.times[1] - traj.times[0];
    let omega_max = reference_matrix
        .complex_eigenvalues()
        .iter()
        .map(|e| e.im.abs())
        .fold(0.0, f64::max);
    if omega_max > 0.0 {
        let limit = 2.0 * std::f64::consts::PI / omega_max / 10.0;
        if spacing > limit {
            return Err(MetricError::GridTooCoarse { spacing, limit });
        }
    }
    let mut refs = Vec::with_capacity(traj.len());
    let mut max_residual = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let x = traj.agents_at(k);
        let mut mean = DVector::zeros(d);
        let scaled: Vec<DVector<f64>> =
            (0..n).map(|i| ss.get(i).entries() * x.rows(i * d, d)).collect();
        for s in &scaled {
            mean += s;
        }
        mean /= n as f64;
        let res = scaled.iter().map(|s| (s - &mean).norm()).fold(0.0, f64::max);
        refs.push(mean);
        max_residual.push(res);
    }
    let mut defect = Vec::with_capacity(traj.len().saturating_sub(2));
    for k in 1..traj.len() - 1 {
        let rdot = (&refs[k + 1] - &refs[k - 1]) / (2.0 * spacing);
        defect.push((rdot - &reference_matrix * &refs[k]).norm());
    }
    Ok(ReferenceTracking { times: traj.times.clone(), max_residual, defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::protocols::{ExtendedState, Protocol, ProtocolSpec, Regressor, UncertaintyModel};
    use crate::scaling::{ScalingMatrix, ScalingSet};
    use crate::sim::{integrate, Method, SimConfig};

    fn identity_set(n: usize, d: usize) -> ScalingSet {
        ScalingSet::new(
            (0..n).map(|_| ScalingMatrix::new(DMatrix::identity(d, d)).unwrap()).collect(),
        )
        .unwrap()
    }

    fn p2_basic_traj(x0: &[f64], t: f64) -> (ProtocolSpec, Trajectory) {
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        let spec = ProtocolSpec::new(g, identity_set(2, 2), Protocol::Basic).unwrap();
        let mut init = ExtendedState::zeros(spec.layout());
        init.set_agent(Block::Agents, 0, &x0[0..2]);
        init.set_agent(Block::Agents, 1, &x0[2..4]);
        let cfg = SimConfig { h: 1e-3, t_final: t, method: Method::Rk4, stride: 10, seed: 0 };
        let traj = integrate(&spec, &init, &cfg).unwrap();
        (spec, traj)
    }

    #[test]
    fn disagreement_examples() {
        let (_, traj) = p2_basic_traj(&[1.0, 0.0, 0.0, 0.0], 1.0);
        let ss = identity_set(2, 2);
        let d = disagreement(&traj, &ss).unwrap();
        assert!((d[0] - 1.0).abs() <= 1e-15);
        assert!(d.last().unwrap() < &d[0]);

        // Consensus start: identically zero.
        let (_, traj) = p2_basic_traj(&[0.5, -1.0, 0.5, -1.0], 0.1);
        let d = disagreement(&traj, &ss).unwrap();
        assert!(d.iter().all(|v| *v <= 1e-12));
    }

    #[test]
    fn disagreement_permutation_invariant() {
        let g = Graph::new(3, &[(1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let ss = identity_set(3, 2);
        let spec = ProtocolSpec::new(g, ss.clone(), Protocol::Basic).unwrap();
        let mut init = ExtendedState::zeros(spec.layout());
        init.set_agent(Block::Agents, 0, &[1.0, 2.0]);
        init.set_agent(Block::Agents, 1, &[-1.0, 0.5]);
        init.set_agent(Block::Agents, 2, &[0.0, -2.0]);
        let cfg = SimConfig { h: 1e-2, t_final: 0.1, method: Method::Rk4, stride: 1, seed: 0 };
        let traj = integrate(&spec, &init, &cfg).unwrap();
        let d1 = disagreement(&traj, &ss).unwrap();

        let mut permuted = ExtendedState::zeros(spec.layout());
        permuted.set_agent(Block::Agents, 0, &[0.0, -2.0]);
        permuted.set_agent(Block::Agents, 1, &[1.0, 2.0]);
        permuted.set_agent(Block::Agents, 2, &[-1.0, 0.5]);
        let traj2 = Trajectory {
            times: vec![0.0],
            states: vec![permuted.data.clone()],
            layout: traj.layout.clone(),
            metadata: traj.metadata.clone(),
        };
        let d2 = disagreement(&traj2, &ss).unwrap();
        assert!((d1[0] - d2[0]).abs() <= 1e-15);
    }

    #[test]
    fn settling_examples() {
        // Already settled: time 0.
        let (_, traj) = p2_basic_traj(&[0.5, -1.0, 0.5, -1.0], 0.5);
        let reference = traj.agents_at(0).into_owned();
        assert_eq!(settling_time(&traj, Some(&reference), 0.05).unwrap(), Some(0.0));

        // Monotone in the fraction.
        let (_, traj) = p2_basic_traj(&[4.0, 0.0, -4.0, 2.0], 12.0);
        let limit = crate::protocols::theorem1_limit(&identity_set(2, 2), &traj.agents_at(0));
        let t05 = settling_time(&traj, Some(&limit), 0.05).unwrap().unwrap();
        let t10 = settling_time(&traj, Some(&limit), 0.10).unwrap().unwrap();
        assert!(t10 <= t05);
        assert!(t05 > 0.0);
    }

    #[test]
    fn conservation_drift_basic() {
        let (_, traj) = p2_basic_traj(&[3.0, -1.0, 0.5, 2.0], 5.0);
        let drift = conservation_drift(&traj, &identity_set(2, 2)).unwrap();
        assert!(drift <= 1e-12, "drift {drift}");
    }

    #[test]
    fn conservation_drift_rejects_wrong_variant() {
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        let spec = ProtocolSpec::new(
            g,
            identity_set(2, 2),
            Protocol::LinearHomogeneous { a: DMatrix::zeros(2, 2), c: 1.0 },
        )
        .unwrap();
        let init = ExtendedState::zeros(spec.layout());
        let cfg = SimConfig { h: 1e-2, t_final: 0.1, method: Method::Rk4, stride: 1, seed: 0 };
        let traj = integrate(&spec, &init, &cfg).unwrap();
        assert!(matches!(
            conservation_drift(&traj, &identity_set(2, 2)),
            Err(MetricError::WrongVariant { .. })
        ));
    }

    #[test]
    fn pe_constant_identity() {
        let report = pe_window(|_| DMatrix::identity(2, 2), 3.0, 20, 10.0);
        assert!((report.mu2_min - 3.0).abs() <= 1e-9);
        assert!((report.mu1_max - 3.0).abs() <= 1e-9);
        assert!(report.persistently_exciting);
    }

    #[test]
    fn pe_rank_deficient() {
        let phi = |t: f64| DMatrix::from_row_slice(2, 2, &[t.sin(), 0.0, 0.0, 0.0]);
        let report = pe_window(phi, 2.0 * std::f64::consts::PI, 10, 30.0);
        assert!(report.mu2_min.abs() <= 1e-9);
        assert!(!report.persistently_exciting);
    }

    #[test]
    fn pe_paper_regressors() {
        for agent in 0..6 {
            let phi = move |t: f64| {
                let x = DVector::zeros(2);
                Regressor::PaperSec62.eval(agent, t, &x.rows(0, 2))
            };
            let report = pe_window(phi, 2.0 * std::f64::consts::PI, 40, 100.0);
            assert!(report.persistently_exciting, "agent {agent}: {report:?}");
        }
    }

    #[test]
    fn pe_quadratic_homogeneity() {
        let phi = |t: f64| DMatrix::from_row_slice(2, 2, &[t.sin(), 0.3, -0.2, t.cos()]);
        let base = pe_window(phi, 4.0, 15, 20.0);
        let c = 2.5;
        let scaled = pe_window(move |t| phi(t) * c, 4.0, 15, 20.0);
        assert!((scaled.mu2_min - c * c * base.mu2_min).abs() <= 1e-6 * scaled.mu2_min.abs());
        assert!((scaled.mu1_max - c * c * base.mu1_max).abs() <= 1e-6 * scaled.mu1_max.abs());
    }

    #[test]
    fn estimate_error_wrong_variant() {
        let (_, traj) = p2_basic_traj(&[1.0, 0.0, 0.0, 0.0], 0.1);
        assert!(matches!(
            estimate_error(&traj, &[]),
            Err(MetricError::WrongVariant { .. })
        ));
    }

    #[test]
    fn estimate_error_perfect_initialization() {
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        let ss = identity_set(2, 2);
        let theta: Vec<DVector<f64>> =
            vec![DVector::from_row_slice(&[0.5, 1.0]), DVector::from_row_slice(&[1.5, 2.0])];
        let spec = ProtocolSpec::new(
            g,
            ss.clone(),
            Protocol::Adaptive {
                uncertainty: UncertaintyModel {
                    regressor: Regressor::PaperSec62,
                    theta: theta.clone(),
                },
                gamma: vec![1.0, 1.0],
            },
        )
        .unwrap();
        let mut init = ExtendedState::zeros(spec.layout());
        // Start at consensus with perfect estimates: both stay put.
        init.set_agent(Block::Agents, 0, &[1.0, 1.0]);
        init.set_agent(Block::Agents, 1, &[1.0, 1.0]);
        init.set_agent(Block::ThetaHat, 0, theta[0].as_slice());
        init.set_agent(Block::ThetaHat, 1, theta[1].as_slice());
        let cfg = SimConfig { h: 1e-3, t_final: 1.0, method: Method::Rk4, stride: 10, seed: 0 };
        let traj = integrate(&spec, &init, &cfg).unwrap();
        let err = estimate_error(&traj, &theta).unwrap();
        assert!(err.aggregate.iter().all(|v| *v <= 1e-9));
    }

    #[test]
    fn reference_tracking_exact_solution() {
        // Hand-built trajectory: x_i(t) = S_i⁻¹ r(t) with ṙ = A r exactly.
        let ss = identity_set(3, 2);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let h = 1e-2;
        let steps = 200;
        let layout =
            crate::protocols::StateLayout::new(3, 2, 0, &[Block::Agents]);
        let mut times = Vec::new();
        let mut states = Vec::new();
        for k in 0..=steps {
            let t = k as f64 * h;
            let r = DVector::from_row_slice(&[t.cos(), -t.sin()]);
            let mut y = DVector::zeros(6);
            for i in 0..3 {
                y.rows_mut(i * 2, 2).copy_from(&r);
            }
            times.push(t);
            states.push(y);
        }
        let traj = Trajectory {
            times,
            states,
            layout,
            metadata: crate::sim::TrajectoryMetadata {
                protocol: VariantTag::LinearHomogeneous,
                n: 3,
                d: 2,
                r: 0,
                config: SimConfig {
                    h,
                    t_final: 2.0,
                    method: Method::Rk4,
                    stride: 1,
                    seed: 0,
                },
                prng: "",
                graph_hash: String::new(),
                scaling_hash: String::new(),
                diverged: false,
                divergence_time: None,
                warnings: vec![],
                resolved_params: None,
            },
        };
        // P = I/3, so PAP⁻¹ = A and r solves the reference ODE.
        let rt = reference_tracking(&traj, &ss, &a).unwrap();
        assert!(rt.max_residual.iter().all(|v| *v <= 1e-12));
        let bound = 10.0 * h * h * spectral::spectral_norm(&a).powi(2) * 1.0;
        assert!(rt.defect.iter().all(|v| *v <= bound), "max defect {:?}", rt.defect.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn reference_tracking_rejects_coarse_grid() {
        let ss = identity_set(2, 2);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, -10.0, 0.0]);
        let (_, mut traj) = p2_basic_traj(&[1.0, 0.0, 0.0, 1.0], 5.0);
        // Thin the grid to 1s spacing: period/10 = 2π/10/10 ≈ 0.063 < 1.
        traj.times = traj.times.iter().step_by(100).copied().collect();
        traj.states = traj.states.iter().step_by(100).cloned().collect();
        assert!(matches!(
            reference_tracking(&traj, &ss, &a),
            Err(MetricError::GridTooCoarse { .. })
        ));
    }
}
