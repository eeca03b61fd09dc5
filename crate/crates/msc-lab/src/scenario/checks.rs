//! Declared pass/fail checks evaluated against a finished trajectory.
//! Every check names its tolerance and the window it was evaluated on.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::metrics::{self, CheckResult};
use crate::protocols::{theorem1_limit, Block, Protocol, ProtocolSpec};
use crate::scaling::rotation2;
use crate::sim::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum CheckSpec {
    /// Final scaled disagreement `D(T) ≤ max`.
    DisagreementFinal { max: f64 },
    /// The basic/nonlinear endpoint lies within `max` of the analytic limit
    /// `S⁻¹(1 ⊗ x₀)` computed from the initial state.
    EndpointVsAnalyticLimit { max: f64 },
    /// Virtual-consensus-point drift ≤ `max` (basic/nonlinear only).
    ConservationDrift { max: f64 },
    /// `max_i ‖u_i(t)‖_∞ ≤ max` at every recorded step.
    InputSupNorm { max: f64 },
    /// Settling time into the `fraction`-ball lies in `[min, max]`;
    /// `analytic` uses the basic-protocol limit, otherwise the last state.
    SettlingTime { fraction: f64, min: f64, max: f64, analytic: bool },
    /// Disagreement reaches ≤ `reach` at some recorded time and stays
    /// ≤ `stay` afterwards.
    DisagreementReachesAndStays { reach: f64, stay: f64 },
    /// Final adaptive estimate error `‖θ̂_i − θ_i‖/‖θ_i‖ ≤ max` per agent.
    EstimateErrorRelFinal { max: f64 },
    /// Every agent's regressor is persistently exciting over windows of
    /// `t_window` on the horizon.
    PersistentExcitation { t_window: f64 },
    /// Final stacked agent norm ≤ max (regulation).
    FinalNormAtMost { max: f64 },
    /// Final stacked agent norm ≥ min, or the divergence flag is set.
    FinalNormAtLeastOrDiverged { min: f64 },
    /// Expect the divergence flag.
    Diverges { expect: bool },
    /// `max_i ‖S_i x_i(t) − r(t)‖ ≤ max` for all recorded `t ≥ after`.
    ReferenceResidualAfter { after: f64, max: f64 },
    /// Finite-difference defect `‖ṙ − PAP⁻¹r‖ ≤ max` for `t ≥ after`.
    ReferenceDefectAfter { after: f64, max: f64 },
    /// Scaled radii `‖S_i x_i(t)‖` over the last quarter horizon vary by at
    /// most `max_rel` relative to their mean (skew-symmetric drift).
    RadiusConstancyLastQuarter { max_rel: f64 },
    /// Every adaptive gain is non-decreasing up to `tol` per step.
    GainsMonotone { tol: f64 },
    /// Every gain varies at most `max` over the last tenth of the horizon.
    GainsLastDecileVariation { max: f64 },
    /// Sliding errors fall below `factor·(β₁ + β₂·max‖x‖₁)·h` at some
    /// recorded time and stay there.
    SlidingBandEntry { factor: f64 },
    /// After the sliding band is reached, `D(t_{k+1}) ≤ D(t_k) + tol_factor·h`
    /// at every recorded step.
    DisagreementMonotoneAfterBand { band_factor: f64, tol_factor: f64 },
    /// At the first recorded `t ≥ at`, every agent position (planar part for
    /// d = 3) is within `max` of its analytic target `S_i⁻¹ x₀`.
    TargetsReachedAt { at: f64, max: f64 },
    /// The final planar positions map onto themselves under a rotation by
    /// π/3 (orbit match ≤ max).
    SixFoldSymmetry { max: f64 },
}

impl CheckSpec {
    /// Structural validation against the protocol (variant applicability).
    pub fn validate(&self, spec: &ProtocolSpec) -> Result<(), String> {
        use crate::protocols::VariantTag as V;
        let tag = spec.protocol().tag();
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(format!("check `{what}` does not apply to the {tag:?} variant"))
            }
        };
        match self {
            CheckSpec::ConservationDrift { .. } | CheckSpec::EndpointVsAnalyticLimit { .. } => {
                need(matches!(tag, V::Basic | V::Nonlinear), "conservation/analytic limit")
            }
            CheckSpec::EstimateErrorRelFinal { .. } | CheckSpec::PersistentExcitation { .. } => {
                need(tag == V::Adaptive, "estimate error / PE")
            }
            CheckSpec::GainsMonotone { .. } | CheckSpec::GainsLastDecileVariation { .. } => {
                need(tag == V::AdaptiveGain, "adaptive gains")
            }
            CheckSpec::SlidingBandEntry { .. }
            | CheckSpec::DisagreementMonotoneAfterBand { .. } => need(
                matches!(tag, V::HeteroFullInput | V::ObserverHeterogeneous),
                "sliding band",
            ),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, scenario: &Scenario, traj: &Trajectory) -> CheckResult {
        evaluate_check(self, scenario, traj)
    }
}

fn result(name: String, value: f64, threshold: String, window: String, passed: bool) -> CheckResult {
    CheckResult { name, value, threshold, window, passed }
}

fn sliding_errors(scenario: &Scenario, traj: &Trajectory, k: usize) -> Option<DVector<f64>> {
    let (n, d) = (traj.layout.n, traj.layout.d);
    let z = traj.block_at(Block::Aux, k)?;
    match scenario.spec.protocol() {
        Protocol::HeteroFullInput { .. } => {
            let x = traj.agents_at(k);
            Some(DVector::from_fn(n * d, |i, _| z[i] - x[i]))
        }
        Protocol::ObserverHeterogeneous { .. } => {
            let xh = traj.block_at(Block::Observer, k)?;
            let eta = traj.block_at(Block::Eta, k)?;
            Some(DVector::from_fn(n * d, |i, _| z[i] - (xh[i] - eta[i])))
        }
        _ => None,
    }
}

fn sliding_band(scenario: &Scenario, traj: &Trajectory, factor: f64) -> f64 {
    let (beta1, beta2) = match scenario.spec.protocol() {
        Protocol::HeteroFullInput { beta1, beta2, .. }
        | Protocol::ObserverHeterogeneous { beta1, beta2, .. } => (*beta1, *beta2),
        _ => (0.0, 0.0),
    };
    let (n, d) = (traj.layout.n, traj.layout.d);
    // For the observer variant the sliding surface acts on ζ, so the band is
    // driven by ‖ζ‖₁; for the full-input variant by ‖x‖₁.
    let observer = matches!(scenario.spec.protocol(), Protocol::ObserverHeterogeneous { .. });
    let mut max_l1: f64 = 0.0;
    for k in 0..traj.len() {
        for i in 0..n {
            let l1: f64 = if observer {
                let xh = traj.block_at(Block::Observer, k).expect("observer block");
                let eta = traj.block_at(Block::Eta, k).expect("eta block");
                (0..d).map(|c| (xh[i * d + c] - eta[i * d + c]).abs()).sum()
            } else {
                let x = traj.agents_at(k);
                (0..d).map(|c| x[i * d + c].abs()).sum()
            };
            max_l1 = max_l1.max(l1);
        }
    }
    factor * (beta1 + beta2 * max_l1) * traj.metadata.config.h
}

/// Index of the first recorded step from which `‖e‖_∞` stays within `band`.
fn band_entry_index(scenario: &Scenario, traj: &Trajectory, band: f64) -> Option<usize> {
    let mut entry = None;
    for k in 0..traj.len() {
        let e = sliding_errors(scenario, traj, k)?;
        if e.abs().max() <= band {
            entry.get_or_insert(k);
        } else {
            entry = None;
        }
    }
    entry
}

fn evaluate_check(check: &CheckSpec, scenario: &Scenario, traj: &Trajectory) -> CheckResult {
    let ss = &scenario.scalings;
    let full = format!("[0, {}]", traj.final_time());
    match check {
        CheckSpec::DisagreementFinal { max } => {
            let d = metrics::disagreement(traj, ss).unwrap_or_default();
            let value = d.last().copied().unwrap_or(f64::NAN);
            result(
                "disagreement_final".into(),
                value,
                format!("<= {max:e}"),
                format!("t = {}", traj.final_time()),
                value <= *max && !traj.metadata.diverged,
            )
        }
        CheckSpec::EndpointVsAnalyticLimit { max } => {
            let limit = theorem1_limit(ss, &traj.agents_at(0));
            let value = (traj.agents_at(traj.len() - 1) - &limit).norm();
            result(
                "endpoint_vs_analytic_limit".into(),
                value,
                format!("<= {max:e}"),
                format!("t = {}", traj.final_time()),
                value <= *max && !traj.metadata.diverged,
            )
        }
        CheckSpec::ConservationDrift { max } => {
            let value = metrics::conservation_drift(traj, ss).unwrap_or(f64::NAN);
            result("conservation_drift".into(), value, format!("<= {max:e}"), full, value <= *max)
        }
        CheckSpec::InputSupNorm { max } => {
            let series = metrics::input_sup_norm(traj, &scenario.spec).unwrap_or_default();
            let value = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            result("input_sup_norm".into(), value, format!("<= {max}"), full, value <= *max)
        }
        CheckSpec::SettlingTime { fraction, min, max, analytic } => {
            let reference = analytic.then(|| theorem1_limit(ss, &traj.agents_at(0)));
            let settle = metrics::settling_time(traj, reference.as_ref(), *fraction)
                .unwrap_or(None);
            let value = settle.unwrap_or(f64::NAN);
            result(
                "settling_time".into(),
                value,
                format!("in [{min}, {max}] at {fraction:.0}%", fraction = fraction * 100.0),
                full,
                settle.map(|t| t >= *min && t <= *max).unwrap_or(false),
            )
        }
        CheckSpec::DisagreementReachesAndStays { reach, stay } => {
            let d = metrics::disagreement(traj, ss).unwrap_or_default();
            let mut reach_idx = None;
            for (k, v) in d.iter().enumerate() {
                if *v <= *reach {
                    reach_idx = Some(k);
                    break;
                }
            }
            let passed = match reach_idx {
                Some(k) => d[k..].iter().all(|v| *v <= *stay),
                None => false,
            };
            let value = reach_idx.map(|k| traj.times[k]).unwrap_or(f64::NAN);
            result(
                "disagreement_reaches_and_stays".into(),
                value,
                format!("reach <= {reach:e}, stay <= {stay:e}"),
                full,
                passed && !traj.metadata.diverged,
            )
        }
        CheckSpec::EstimateErrorRelFinal { max } => {
            let theta = match scenario.spec.protocol() {
                Protocol::Adaptive { uncertainty, .. } => uncertainty.theta.clone(),
                _ => vec![],
            };
            let err = metrics::estimate_error(traj, &theta);
            let value = match err {
                Ok(e) => e
                    .per_agent
                    .iter()
                    .zip(&theta)
                    .map(|(series, th)| series.last().copied().unwrap_or(f64::NAN) / th.norm())
                    .fold(f64::NEG_INFINITY, f64::max),
                Err(_) => f64::NAN,
            };
            result(
                "estimate_error_rel_final".into(),
                value,
                format!("<= {max}"),
                format!("t = {}", traj.final_time()),
                value <= *max,
            )
        }
        CheckSpec::PersistentExcitation { t_window } => {
            let (regressor, n) = match scenario.spec.protocol() {
                Protocol::Adaptive { uncertainty, .. } => {
                    (uncertainty.regressor.clone(), scenario.spec.agent_count())
                }
                _ => {
                    return result(
                        "persistent_excitation".into(),
                        f64::NAN,
                        "PE".into(),
                        full,
                        false,
                    )
                }
            };
            let horizon = traj.final_time();
            let mut worst = f64::INFINITY;
            let mut all = true;
            for agent in 0..n {
                let reg = regressor.clone();
                let phi = move |t: f64| {
                    let x = DVector::zeros(reg.dims().0);
                    reg.eval(agent, t, &x.rows(0, x.len()))
                };
                let report = metrics::pe_window(phi, *t_window, 50, horizon);
                worst = worst.min(report.mu2_min);
                all &= report.persistently_exciting;
            }
            result(
                "persistent_excitation".into(),
                worst,
                format!("mu2_min > {:e}", 1e-6 * t_window),
                format!("windows of {t_window} on [0, {horizon}]"),
                all,
            )
        }
        CheckSpec::FinalNormAtMost { max } => {
            let value = traj.agents_at(traj.len() - 1).norm();
            result(
                "final_norm_at_most".into(),
                value,
                format!("<= {max:e}"),
                format!("t = {}", traj.final_time()),
                value <= *max && !traj.metadata.diverged,
            )
        }
        CheckSpec::FinalNormAtLeastOrDiverged { min } => {
            let value = traj.agents_at(traj.len() - 1).norm();
            let passed = traj.metadata.diverged || value >= *min;
            result(
                "final_norm_at_least_or_diverged".into(),
                value,
                format!(">= {min:e} (or divergence flag)"),
                format!("t = {}", traj.final_time()),
                passed,
            )
        }
        CheckSpec::Diverges { expect } => {
            let value = traj.metadata.diverged as u8 as f64;
            result(
                "diverges".into(),
                value,
                format!("diverged == {expect}"),
                full,
                traj.metadata.diverged == *expect,
            )
        }
        CheckSpec::ReferenceResidualAfter { after, max } => {
            let a_ref = reference_drift(&scenario.spec);
            let rt = metrics::reference_tracking(traj, ss, &a_ref);
            let value = match &rt {
                Ok(rt) => rt
                    .times
                    .iter()
                    .zip(&rt.max_residual)
                    .filter(|(t, _)| **t >= *after)
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max),
                Err(_) => f64::NAN,
            };
            result(
                "reference_residual_after".into(),
                value,
                format!("<= {max:e}"),
                format!("t >= {after}"),
                value <= *max,
            )
        }
        CheckSpec::ReferenceDefectAfter { after, max } => {
            let a_ref = reference_drift(&scenario.spec);
            let rt = metrics::reference_tracking(traj, ss, &a_ref);
            let value = match &rt {
                Ok(rt) => rt
                    .defect
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| rt.times[k + 1] >= *after)
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max),
                Err(_) => f64::NAN,
            };
            result(
                "reference_defect_after".into(),
                value,
                format!("<= {max:e}"),
                format!("t >= {after}"),
                value <= *max,
            )
        }
        CheckSpec::RadiusConstancyLastQuarter { max_rel } => {
            let radii = metrics::scaled_radii(traj, ss).unwrap_or_default();
            let t_from = 0.75 * traj.final_time();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut sum = 0.0;
            let mut count = 0usize;
            for (k, row) in radii.iter().enumerate() {
                if traj.times[k] >= t_from {
                    for v in row {
                        lo = lo.min(*v);
                        hi = hi.max(*v);
                        sum += *v;
                        count += 1;
                    }
                }
            }
            let mean = sum / count.max(1) as f64;
            let value = if mean > 0.0 { (hi - lo) / mean } else { f64::NAN };
            result(
                "radius_constancy_last_quarter".into(),
                value,
                format!("<= {max_rel}"),
                format!("t >= {t_from}"),
                value <= *max_rel,
            )
        }
        CheckSpec::GainsMonotone { tol } => {
            let n = traj.layout.n;
            let mut worst_drop: f64 = 0.0;
            for k in 1..traj.len() {
                let prev = traj.block_at(Block::Gains, k - 1).expect("gains block");
                let cur = traj.block_at(Block::Gains, k).expect("gains block");
                for i in 0..n {
                    worst_drop = worst_drop.max(prev[i] - cur[i]);
                }
            }
            result(
                "gains_monotone".into(),
                worst_drop,
                format!("decrease <= {tol:e}"),
                full,
                worst_drop <= *tol,
            )
        }
        CheckSpec::GainsLastDecileVariation { max } => {
            let n = traj.layout.n;
            let t_from = 0.9 * traj.final_time();
            let mut value: f64 = 0.0;
            for i in 0..n {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for k in 0..traj.len() {
                    if traj.times[k] >= t_from {
                        let c = traj.block_at(Block::Gains, k).expect("gains block")[i];
                        lo = lo.min(c);
                        hi = hi.max(c);
                    }
                }
                value = value.max(hi - lo);
            }
            result(
                "gains_last_decile_variation".into(),
                value,
                format!("<= {max:e}"),
                format!("t >= {t_from}"),
                value <= *max,
            )
        }
        CheckSpec::SlidingBandEntry { factor } => {
            let band = sliding_band(scenario, traj, *factor);
            let entry = band_entry_index(scenario, traj, band);
            let value = entry.map(|k| traj.times[k]).unwrap_or(f64::NAN);
            result(
                "sliding_band_entry".into(),
                value,
                format!("enters and stays below band {band:.3e}"),
                full,
                entry.is_some(),
            )
        }
        CheckSpec::DisagreementMonotoneAfterBand { band_factor, tol_factor } => {
            let band = sliding_band(scenario, traj, *band_factor);
            let tol = tol_factor * traj.metadata.config.h;
            let d = metrics::disagreement(traj, ss).unwrap_or_default();
            let (value, passed) = match band_entry_index(scenario, traj, band) {
                Some(entry) => {
                    let mut worst_rise: f64 = f64::NEG_INFINITY;
                    for k in entry..d.len() - 1 {
                        worst_rise = worst_rise.max(d[k + 1] - d[k]);
                    }
                    (worst_rise, worst_rise <= tol)
                }
                None => (f64::NAN, false),
            };
            result(
                "disagreement_monotone_after_band".into(),
                value,
                format!("per-step rise <= {tol:e}"),
                "after band entry".into(),
                passed,
            )
        }
        CheckSpec::TargetsReachedAt { at, max } => {
            let (n, d) = (traj.layout.n, traj.layout.d);
            let targets = theorem1_limit(ss, &traj.agents_at(0));
            let planar = if d >= 3 { 2 } else { d };
            let k = traj
                .times
                .iter()
                .position(|t| *t >= *at)
                .unwrap_or(traj.len() - 1);
            let x = traj.agents_at(k);
            let mut value: f64 = 0.0;
            for i in 0..n {
                let mut err = 0.0;
                for c in 0..planar {
                    err += (x[i * d + c] - targets[i * d + c]).powi(2);
                }
                value = value.max(err.sqrt());
            }
            result(
                "targets_reached_at".into(),
                value,
                format!("<= {max:e}"),
                format!("t = {}", traj.times[k]),
                value <= *max,
            )
        }
        CheckSpec::SixFoldSymmetry { max } => {
            let (n, d) = (traj.layout.n, traj.layout.d);
            let x = traj.agents_at(traj.len() - 1);
            let rot = rotation2(std::f64::consts::FRAC_PI_3);
            let pts: Vec<(f64, f64)> = (0..n).map(|i| (x[i * d], x[i * d + 1])).collect();
            let mut value: f64 = 0.0;
            for &(px, py) in &pts {
                let rx = rot[(0, 0)] * px + rot[(0, 1)] * py;
                let ry = rot[(1, 0)] * px + rot[(1, 1)] * py;
                let nearest = pts
                    .iter()
                    .map(|&(qx, qy)| ((rx - qx).powi(2) + (ry - qy).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                value = value.max(nearest);
            }
            result(
                "six_fold_symmetry".into(),
                value,
                format!("orbit match <= {max:e}"),
                format!("t = {}", traj.final_time()),
                value <= *max,
            )
        }
    }
}

fn reference_drift(spec: &ProtocolSpec) -> nalgebra::DMatrix<f64> {
    match spec.protocol() {
        Protocol::LinearHomogeneous { a, .. } => a.clone(),
        Protocol::AdaptiveGain { a, .. } => a.clone(),
        Protocol::ObserverHomogeneous { a, .. } => a.clone(),
        Protocol::HeteroFullInput { a_nominal, .. }
        | Protocol::ObserverHeterogeneous { a_nominal, .. } => a_nominal.clone(),
        _ => nalgebra::DMatrix::zeros(spec.dim(), spec.dim()),
    }
}
