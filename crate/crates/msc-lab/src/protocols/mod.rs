//! The MSC control laws, each exposed as a right-hand-side vector field over
//! an extended state that the integrator consumes uniformly.
//!
//! Variants: basic single-integrator consensus, nonlinear couplings,
//! finite-time laws, adaptive parameter estimation, linear agents with a
//! fixed or adaptively tuned coupling gain, sliding-mode compensation of
//! heterogeneous drift, and observer-based output feedback for homogeneous
//! and heterogeneous linear agents.

pub mod models;
pub mod state;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::scaling::ScalingSet;
use crate::spectral;
pub use models::{
    build_hetero_observer_plants, place_output_injection_2x2, place_single_input_2x2, sgn_eps,
    sig_alpha, Nonlinearity, ObserverPlant, Regressor, UncertaintyModel,
};
pub use state::{Block, ExtendedState, StateLayout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("graph must be connected")]
    Disconnected,
    #[error("scaling set has {set} members but the graph has {graph} vertices")]
    AgentCountMismatch { set: usize, graph: usize },
    #[error("matrix `{name}` has shape {got:?}, expected {want:?}")]
    BadShape { name: &'static str, got: (usize, usize), want: (usize, usize) },
    #[error("parameter `{name}` must be positive (agent {agent})")]
    NonPositiveParameter { name: &'static str, agent: usize },
    #[error("finite-time exponent alpha = {0} is outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("finite-time law without |S|⁻¹ modification requires symmetric scalings (member {0})")]
    AsymmetricScaling(usize),
    #[error("scaling matrix {agent} does not commute with the drift matrix (‖SA − AS‖ = {norm:.3e}); adaptive gain tuning requires commuting scalings")]
    CommutationFailure { agent: usize, norm: f64 },
    #[error("interaction function invalid: {0}")]
    InvalidNonlinearity(String),
    #[error("per-agent parameter list has {got} entries, expected {want}")]
    BadAgentList { got: usize, want: usize },
    #[error("matrix `{name}` for agent {agent} is not Hurwitz (max Re λ = {max_re:.4})")]
    NotHurwitz { name: &'static str, agent: usize, max_re: f64 },
    #[error("coupling gain does not stabilize the reduced dynamics: {0}")]
    UnstableCoupling(String),
    #[error("pole placement failed: {0}")]
    PlacementFailed(String),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
}

/// Stable variant names, used in scenario files and trajectory metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantTag {
    Basic,
    Nonlinear,
    FiniteTime,
    FiniteTimeModified,
    Adaptive,
    LinearHomogeneous,
    AdaptiveGain,
    HeteroFullInput,
    ObserverHomogeneous,
    ObserverHeterogeneous,
}

/// The control law plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    Basic,
    Nonlinear {
        f: Nonlinearity,
    },
    FiniteTime {
        alpha: f64,
        modified: bool,
    },
    Adaptive {
        uncertainty: UncertaintyModel,
        gamma: Vec<f64>,
    },
    LinearHomogeneous {
        a: DMatrix<f64>,
        c: f64,
    },
    AdaptiveGain {
        a: DMatrix<f64>,
        kappa: Vec<f64>,
        t0: f64,
    },
    HeteroFullInput {
        a_nominal: DMatrix<f64>,
        plant_a: Vec<DMatrix<f64>>,
        c: f64,
        beta1: f64,
        beta2: f64,
        /// Boundary-layer width for the signum terms; 0 keeps the exact
        /// discontinuous law.
        epsilon: f64,
    },
    ObserverHomogeneous {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c_out: DMatrix<f64>,
        k: DMatrix<f64>,
        h_obs: DMatrix<f64>,
        c: f64,
    },
    ObserverHeterogeneous {
        a_nominal: DMatrix<f64>,
        plants: Vec<ObserverPlant>,
        c: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Protocol {
    pub fn tag(&self) -> VariantTag {
        match self {
            Protocol::Basic => VariantTag::Basic,
            Protocol::Nonlinear { .. } => VariantTag::Nonlinear,
            Protocol::FiniteTime { modified: false, .. } => VariantTag::FiniteTime,
            Protocol::FiniteTime { modified: true, .. } => VariantTag::FiniteTimeModified,
            Protocol::Adaptive { .. } => VariantTag::Adaptive,
            Protocol::LinearHomogeneous { .. } => VariantTag::LinearHomogeneous,
            Protocol::AdaptiveGain { .. } => VariantTag::AdaptiveGain,
            Protocol::HeteroFullInput { .. } => VariantTag::HeteroFullInput,
            Protocol::ObserverHomogeneous { .. } => VariantTag::ObserverHomogeneous,
            Protocol::ObserverHeterogeneous { .. } => VariantTag::ObserverHeterogeneous,
        }
    }

    /// Whether the law contains an active signum discontinuity.
    pub fn uses_signum(&self) -> bool {
        match self {
            Protocol::HeteroFullInput { beta1, beta2, epsilon, .. }
            | Protocol::ObserverHeterogeneous { beta1, beta2, epsilon, .. } => {
                *epsilon == 0.0 && (*beta1 != 0.0 || *beta2 != 0.0)
            }
            _ => false,
        }
    }

    pub fn is_finite_time(&self) -> bool {
        matches!(self, Protocol::FiniteTime { .. })
    }
}

/// A validated protocol bound to its graph and scaling set.
#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    graph: Graph,
    scalings: ScalingSet,
    protocol: Protocol,
    warnings: Vec<String>,
}

impl ProtocolSpec {
    pub fn new(
        graph: Graph,
        scalings: ScalingSet,
        protocol: Protocol,
    ) -> Result<Self, ProtocolError> {
        let mut warnings = Vec::new();
        validate(&graph, &scalings, &protocol, &mut warnings)?;
        Ok(Self { graph, scalings, protocol, warnings })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn scalings(&self) -> &ScalingSet {
        &self.scalings
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn agent_count(&self) -> usize {
        self.scalings.len()
    }

    pub fn dim(&self) -> usize {
        self.scalings.dim()
    }

    pub fn r_dim(&self) -> usize {
        match &self.protocol {
            Protocol::Adaptive { uncertainty, .. } => uncertainty.r_dim(),
            _ => 0,
        }
    }

    pub fn layout(&self) -> StateLayout {
        let (n, d, r) = (self.agent_count(), self.dim(), self.r_dim());
        let blocks: &[Block] = match &self.protocol {
            Protocol::Basic
            | Protocol::Nonlinear { .. }
            | Protocol::FiniteTime { .. }
            | Protocol::LinearHomogeneous { .. } => &[Block::Agents],
            Protocol::Adaptive { .. } => &[Block::Agents, Block::ThetaHat],
            Protocol::AdaptiveGain { .. } => &[Block::Agents, Block::Gains],
            Protocol::HeteroFullInput { .. } => &[Block::Agents, Block::Aux],
            Protocol::ObserverHomogeneous { .. } => {
                &[Block::Agents, Block::Observer, Block::Eta]
            }
            Protocol::ObserverHeterogeneous { .. } => {
                &[Block::Agents, Block::Observer, Block::Eta, Block::Aux]
            }
        };
        StateLayout::new(n, d, r, blocks)
    }

    pub fn vector_field(&self) -> VectorField<'_> {
        VectorField::new(self)
    }
}

fn check_shape(
    name: &'static str,
    m: &DMatrix<f64>,
    want: (usize, usize),
) -> Result<(), ProtocolError> {
    if m.shape() != want {
        return Err(ProtocolError::BadShape { name, got: m.shape(), want });
    }
    Ok(())
}

fn check_hurwitz(
    name: &'static str,
    agent: usize,
    m: &DMatrix<f64>,
) -> Result<(), ProtocolError> {
    if !spectral::is_hurwitz(m) {
        return Err(ProtocolError::NotHurwitz {
            name,
            agent,
            max_re: spectral::max_real_eigenvalue(m),
        });
    }
    Ok(())
}

fn check_theta_c(
    graph: &Graph,
    scalings: &ScalingSet,
    a: &DMatrix<f64>,
    c: f64,
) -> Result<(), ProtocolError> {
    let ml = spectral::msc_laplacian(graph, scalings)?;
    let rp = spectral::reduce(&ml)?;
    spectral::verify_gain(&rp, a, c)
        .map(|_| ())
        .map_err(|e| ProtocolError::UnstableCoupling(e.to_string()))
}

fn validate(
    graph: &Graph,
    scalings: &ScalingSet,
    protocol: &Protocol,
    warnings: &mut Vec<String>,
) -> Result<(), ProtocolError> {
    if !graph.is_connected() {
        return Err(ProtocolError::Disconnected);
    }
    if scalings.len() != graph.vertex_count() {
        return Err(ProtocolError::AgentCountMismatch {
            set: scalings.len(),
            graph: graph.vertex_count(),
        });
    }
    let (n, d) = (scalings.len(), scalings.dim());
    match protocol {
        Protocol::Basic => {}
        Protocol::Nonlinear { f } => f.validate(graph)?,
        Protocol::FiniteTime { alpha, modified } => {
            if !(*alpha > 0.0 && *alpha < 1.0) {
                return Err(ProtocolError::AlphaOutOfRange(*alpha));
            }
            if !modified {
                for (i, m) in scalings.matrices().iter().enumerate() {
                    if (m.entries() - m.entries().transpose()).abs().max() > 1e-12 {
                        return Err(ProtocolError::AsymmetricScaling(i + 1));
                    }
                }
            }
        }
        Protocol::Adaptive { uncertainty, gamma } => {
            if gamma.len() != n {
                return Err(ProtocolError::BadAgentList { got: gamma.len(), want: n });
            }
            for (i, g) in gamma.iter().enumerate() {
                if *g <= 0.0 {
                    return Err(ProtocolError::NonPositiveParameter {
                        name: "gamma",
                        agent: i + 1,
                    });
                }
            }
            let (pd, pr) = uncertainty.regressor.dims();
            if pd != d {
                return Err(ProtocolError::BadShape {
                    name: "phi",
                    got: (pd, pr),
                    want: (d, pr),
                });
            }
            if uncertainty.theta.len() != n {
                return Err(ProtocolError::BadAgentList {
                    got: uncertainty.theta.len(),
                    want: n,
                });
            }
            for th in &uncertainty.theta {
                if th.len() != pr {
                    return Err(ProtocolError::BadShape {
                        name: "theta",
                        got: (th.len(), 1),
                        want: (pr, 1),
                    });
                }
            }
        }
        Protocol::LinearHomogeneous { a, c } => {
            check_shape("A", a, (d, d))?;
            if *c <= 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "c", agent: 0 });
            }
        }
        Protocol::AdaptiveGain { a, kappa, .. } => {
            check_shape("A", a, (d, d))?;
            if kappa.len() != n {
                return Err(ProtocolError::BadAgentList { got: kappa.len(), want: n });
            }
            for (i, k) in kappa.iter().enumerate() {
                if *k <= 0.0 {
                    return Err(ProtocolError::NonPositiveParameter {
                        name: "kappa",
                        agent: i + 1,
                    });
                }
            }
            for (i, s) in scalings.matrices().iter().enumerate() {
                let comm = (s.entries() * a - a * s.entries()).abs().max();
                if comm > 1e-9 {
                    return Err(ProtocolError::CommutationFailure { agent: i + 1, norm: comm });
                }
            }
        }
        Protocol::HeteroFullInput { a_nominal, plant_a, c, beta1, beta2, epsilon } => {
            check_shape("A", a_nominal, (d, d))?;
            if plant_a.len() != n {
                return Err(ProtocolError::BadAgentList { got: plant_a.len(), want: n });
            }
            for (i, ai) in plant_a.iter().enumerate() {
                check_shape("A_i", ai, (d, d)).map_err(|_| ProtocolError::BadShape {
                    name: "A_i",
                    got: ai.shape(),
                    want: (d, d),
                })?;
                let _ = i;
            }
            if *c <= 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "c", agent: 0 });
            }
            if *beta1 < 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "beta1", agent: 0 });
            }
            if *epsilon < 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "epsilon", agent: 0 });
            }
            if *beta1 == 0.0 && *beta2 == 0.0 {
                warnings.push("signum compensation disabled (beta1 = beta2 = 0)".into());
            }
            let bound = plant_a
                .iter()
                .map(|ai| (ai - a_nominal).abs().max())
                .fold(0.0, f64::max);
            if *beta2 < bound {
                warnings.push(format!(
                    "beta2 = {beta2} is below the heterogeneity bound max‖vec(A_i − A)‖_∞ = {bound:.4}; finite-time compensation is not guaranteed"
                ));
            }
        }
        Protocol::ObserverHomogeneous { a, b, c_out, k, h_obs, c } => {
            check_shape("A", a, (d, d))?;
            let p = b.ncols();
            let q = c_out.nrows();
            check_shape("B", b, (d, p))?;
            check_shape("C", c_out, (q, d))?;
            check_shape("K", k, (p, d))?;
            check_shape("H", h_obs, (d, q))?;
            if *c <= 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "c", agent: 0 });
            }
            check_hurwitz("A + BK", 0, &(a + b * k))?;
            check_hurwitz("A + HC", 0, &(a + h_obs * c_out))?;
            check_theta_c(graph, scalings, a, *c)?;
        }
        Protocol::ObserverHeterogeneous { a_nominal, plants, c, beta1, beta2, epsilon } => {
            check_shape("A", a_nominal, (d, d))?;
            if plants.len() != n {
                return Err(ProtocolError::BadAgentList { got: plants.len(), want: n });
            }
            if *c <= 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "c", agent: 0 });
            }
            if *beta1 < 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "beta1", agent: 0 });
            }
            if *epsilon < 0.0 {
                return Err(ProtocolError::NonPositiveParameter { name: "epsilon", agent: 0 });
            }
            if *beta1 == 0.0 && *beta2 == 0.0 {
                warnings.push("signum compensation disabled (beta1 = beta2 = 0)".into());
            }
            for (i, pl) in plants.iter().enumerate() {
                check_shape("A_i", &pl.a, (d, d))?;
                let p = pl.b.ncols();
                let q = pl.c.nrows();
                check_shape("B_i", &pl.b, (d, p))?;
                check_shape("C_i", &pl.c, (q, d))?;
                check_shape("K_i", &pl.k, (p, d))?;
                check_shape("H_i", &pl.h, (d, q))?;
                check_hurwitz("A_i + B_iK_i", i + 1, &(&pl.a + &pl.b * &pl.k))?;
                check_hurwitz("A_i + H_iC_i", i + 1, &(&pl.a + &pl.h * &pl.c))?;
            }
            check_theta_c(graph, scalings, a_nominal, *c)?;
            let bound = plants
                .iter()
                .map(|pl| (&pl.a - a_nominal).abs().max())
                .fold(0.0, f64::max);
            if *beta2 < bound {
                warnings.push(format!(
                    "beta2 = {beta2} is below the heterogeneity bound max‖vec(A_i − A)‖_∞ = {bound:.4}; finite-time compensation is not guaranteed"
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

/// Per-agent weighted scaled disagreement sums
/// `acc_i = Σ_{j∈N_i} w_ij (S_i x_i − S_j x_j)`, computed edgewise.
fn disagreement_sums(
    x: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
) -> Vec<DVector<f64>> {
    let (n, d) = (ss.len(), ss.dim());
    let scaled: Vec<DVector<f64>> =
        (0..n).map(|i| ss.get(i).entries() * x.rows(i * d, d)).collect();
    let mut acc = vec![DVector::zeros(d); n];
    for e in g.edges() {
        let diff = (&scaled[e.tail] - &scaled[e.head]) * e.weight;
        acc[e.tail] += &diff;
        acc[e.head] -= &diff;
    }
    acc
}

/// Like `disagreement_sums`, but applies `f` componentwise to each edge
/// difference before weighting (f odd, so both endpoints share one
/// evaluation).
fn nonlinear_sums(
    x: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    f: &Nonlinearity,
    scale: f64,
) -> Vec<DVector<f64>> {
    let (n, d) = (ss.len(), ss.dim());
    let scaled: Vec<DVector<f64>> =
        (0..n).map(|i| ss.get(i).entries() * x.rows(i * d, d)).collect();
    let mut acc = vec![DVector::zeros(d); n];
    for e in g.edges() {
        let mut diff = &scaled[e.tail] - &scaled[e.head];
        for v in diff.iter_mut() {
            *v = f.apply(*v, scale);
        }
        diff *= e.weight;
        acc[e.tail] += &diff;
        acc[e.head] -= &diff;
    }
    acc
}

/// `ẋ_i = −sign(S_i) Σ_j w_ij (S_i x_i − S_j x_j)`.
pub fn rhs_basic(x: &DVectorView<'_, f64>, g: &Graph, ss: &ScalingSet) -> DVector<f64> {
    let (n, d) = (ss.len(), ss.dim());
    let acc = disagreement_sums(x, g, ss);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        out.rows_mut(i * d, d).copy_from(&(&acc[i] * (-ss.get(i).sign())));
    }
    out
}

/// Virtual consensus point `x₀ = P Σ_i sign(S_i) x_i`, the conserved
/// quantity of the basic and nonlinear protocols.
pub fn virtual_consensus_point(ss: &ScalingSet, x: &DVectorView<'_, f64>) -> DVector<f64> {
    let (n, d) = (ss.len(), ss.dim());
    assert_eq!(x.len(), n * d);
    let mut sum = DVector::zeros(d);
    for i in 0..n {
        sum += x.rows(i * d, d) * ss.get(i).sign();
    }
    spectral::p_matrix(ss) * sum
}

/// The analytic limit `S⁻¹(1_n ⊗ x₀)` of the basic protocol.
pub fn theorem1_limit(ss: &ScalingSet, x0_state: &DVectorView<'_, f64>) -> DVector<f64> {
    let (n, d) = (ss.len(), ss.dim());
    let x0 = virtual_consensus_point(ss, x0_state);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        out.rows_mut(i * d, d).copy_from(&(ss.get(i).inverse() * &x0));
    }
    out
}

/// `u_i = −sign(S_i) Σ_j w_ij f(S_i x_i − S_j x_j)` with componentwise odd f.
pub fn rhs_nonlinear(
    x: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    f: &Nonlinearity,
) -> DVector<f64> {
    let (n, d) = (ss.len(), ss.dim());
    let scale = f.scale_for(g);
    let acc = nonlinear_sums(x, g, ss, f, scale);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        out.rows_mut(i * d, d).copy_from(&(&acc[i] * (-ss.get(i).sign())));
    }
    out
}

/// `u_i = −sign(S_i)·[|S_i|⁻¹]·sig^α(Σ_j w_ij (S_i x_i − S_j x_j))`; the
/// `|S_i|⁻¹` factor is the modified form that lifts the symmetry requirement.
pub fn rhs_finite_time(
    x: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    alpha: f64,
    modified: bool,
) -> DVector<f64> {
    let (n, d) = (ss.len(), ss.dim());
    let acc = disagreement_sums(x, g, ss);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        let mut sig = acc[i].clone();
        for v in sig.iter_mut() {
            *v = sig_alpha(*v, alpha);
        }
        let u = if modified {
            ss.get(i).abs().lu().try_inverse().expect("|S_i| invertible") * sig
                * (-ss.get(i).sign())
        } else {
            sig * (-ss.get(i).sign())
        };
        out.rows_mut(i * d, d).copy_from(&u);
    }
    out
}

/// Certainty-equivalence adaptive law: plant `ẋ_i = u_i + φ_i θ_i` with
/// `u_i = −sign(S_i)·acc_i − φ_i θ̂_i`, estimator
/// `θ̂̇_i = γ_i φ_iᵀ S_iᵀ acc_i`.
pub fn rhs_adaptive(
    t: f64,
    x: &DVectorView<'_, f64>,
    theta_hat: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    unc: &UncertaintyModel,
    gamma: &[f64],
) -> (DVector<f64>, DVector<f64>) {
    let (n, d) = (ss.len(), ss.dim());
    let r = unc.r_dim();
    let acc = disagreement_sums(x, g, ss);
    let mut dx = DVector::zeros(n * d);
    let mut dtheta = DVector::zeros(n * r);
    for i in 0..n {
        let xi = x.rows(i * d, d);
        let phi = unc.regressor.eval(i, t, &xi);
        let err = &unc.theta[i] - theta_hat.rows(i * r, r);
        // u_i + φθ_i = −s_i·acc_i + φ(θ_i − θ̂_i).
        let dxi = &acc[i] * (-ss.get(i).sign()) + &phi * err;
        dx.rows_mut(i * d, d).copy_from(&dxi);
        let dth = phi.transpose() * ss.get(i).entries().transpose() * &acc[i] * gamma[i];
        dtheta.rows_mut(i * r, r).copy_from(&dth);
    }
    (dx, dtheta)
}

/// `ẋ = (I_n ⊗ A − cΩ)x` evaluated agentwise.
pub fn rhs_linear_homogeneous(
    x: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    a: &DMatrix<f64>,
    c: f64,
) -> DVector<f64> {
    let (n, d) = (ss.len(), ss.dim());
    let acc = disagreement_sums(x, g, ss);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        let dxi = a * x.rows(i * d, d) - &acc[i] * (c * ss.get(i).sign());
        out.rows_mut(i * d, d).copy_from(&dxi);
    }
    out
}

/// Gain-tuned linear law: `ẋ_i = A x_i − c_i sign(S_i) acc_i` with
/// `ċ_i = κ_i χ_iᵀ |S_i| χ_i`, `χ_i = exp(−A(t−t₀)) acc_i`.
pub fn rhs_adaptive_gain(
    t: f64,
    x: &DVectorView<'_, f64>,
    gains: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    a: &DMatrix<f64>,
    kappa: &[f64],
    t0: f64,
) -> (DVector<f64>, DVector<f64>) {
    let (n, d) = (ss.len(), ss.dim());
    let acc = disagreement_sums(x, g, ss);
    let decay = (a * (-(t - t0))).exp();
    let mut dx = DVector::zeros(n * d);
    let mut dc = DVector::zeros(n);
    for i in 0..n {
        let dxi = a * x.rows(i * d, d) - &acc[i] * (gains[i] * ss.get(i).sign());
        dx.rows_mut(i * d, d).copy_from(&dxi);
        let chi = &decay * &acc[i];
        dc[i] = kappa[i] * (chi.transpose() * ss.get(i).abs() * &chi)[(0, 0)];
    }
    (dx, dc)
}

/// Sliding-mode compensation of unknown heterogeneous drift (full input):
/// plant `ẋ_i = A_i x_i + u_i`, integrator
/// `ż_i = A x_i − c sign(S_i) acc_i`, error `e_i = z_i − x_i`, and
/// `u_i = −c sign(S_i) acc_i + (β₁ + β₂‖x_i‖₁)·sgn(e_i)` componentwise.
#[allow(clippy::too_many_arguments)]
pub fn rhs_hetero_full_input(
    x: &DVectorView<'_, f64>,
    z: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    a_nominal: &DMatrix<f64>,
    plant_a: &[DMatrix<f64>],
    c: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> (DVector<f64>, DVector<f64>) {
    let (n, d) = (ss.len(), ss.dim());
    let acc = disagreement_sums(x, g, ss);
    let mut dx = DVector::zeros(n * d);
    let mut dz = DVector::zeros(n * d);
    for i in 0..n {
        let xi = x.rows(i * d, d);
        let coupling = &acc[i] * (-c * ss.get(i).sign());
        let x1norm: f64 = xi.iter().map(|v| v.abs()).sum();
        let mut u = coupling.clone();
        for k in 0..d {
            let e = z[i * d + k] - xi[k];
            u[k] += (beta1 + beta2 * x1norm) * sgn_eps(e, epsilon);
        }
        dx.rows_mut(i * d, d).copy_from(&(&plant_a[i] * xi + u));
        dz.rows_mut(i * d, d).copy_from(&(a_nominal * xi + coupling));
    }
    (dx, dz)
}

/// Observer-based law for identical linear agents: Luenberger observer on
/// `x̂`, auxiliary state `η` with scaled coupling on `ζ = x̂ − η`, and
/// `u_i = K η_i`.
#[allow(clippy::too_many_arguments)]
pub fn rhs_observer_homogeneous(
    x: &DVectorView<'_, f64>,
    xhat: &DVectorView<'_, f64>,
    eta: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c_out: &DMatrix<f64>,
    k: &DMatrix<f64>,
    h_obs: &DMatrix<f64>,
    c: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (n, d) = (ss.len(), ss.dim());
    let zeta = DVector::from_fn(n * d, |idx, _| xhat[idx] - eta[idx]);
    let acc = disagreement_sums(&zeta.rows(0, n * d), g, ss);
    let mut dx = DVector::zeros(n * d);
    let mut dxhat = DVector::zeros(n * d);
    let mut deta = DVector::zeros(n * d);
    for i in 0..n {
        let xi = x.rows(i * d, d);
        let xhi = xhat.rows(i * d, d);
        let eti = eta.rows(i * d, d);
        let u = k * eti;
        let bu = b * &u;
        let innov = h_obs * (c_out * (xhi - xi));
        dx.rows_mut(i * d, d).copy_from(&(a * xi + &bu));
        dxhat.rows_mut(i * d, d).copy_from(&(a * xhi + &bu + &innov));
        let coupling = &acc[i] * (c * ss.get(i).sign());
        deta.rows_mut(i * d, d).copy_from(&(a * eti + &bu + &innov + coupling));
    }
    (dx, dxhat, deta)
}

/// Observer-based law for heterogeneous agents: combines the homogeneous
/// observer structure with the sliding-mode disturbance observer acting on
/// `ζ = x̂ − η`, `e_i = z_i − ζ_i`.
#[allow(clippy::too_many_arguments)]
pub fn rhs_observer_heterogeneous(
    x: &DVectorView<'_, f64>,
    xhat: &DVectorView<'_, f64>,
    eta: &DVectorView<'_, f64>,
    z: &DVectorView<'_, f64>,
    g: &Graph,
    ss: &ScalingSet,
    a_nominal: &DMatrix<f64>,
    plants: &[ObserverPlant],
    c: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let (n, d) = (ss.len(), ss.dim());
    let zeta = DVector::from_fn(n * d, |idx, _| xhat[idx] - eta[idx]);
    let acc = disagreement_sums(&zeta.rows(0, n * d), g, ss);
    let mut dx = DVector::zeros(n * d);
    let mut dxhat = DVector::zeros(n * d);
    let mut deta = DVector::zeros(n * d);
    let mut dz = DVector::zeros(n * d);
    for i in 0..n {
        let pl = &plants[i];
        let xi = x.rows(i * d, d);
        let xhi = xhat.rows(i * d, d);
        let eti = eta.rows(i * d, d);
        let zti = zeta.rows(i * d, d);
        let u = &pl.k * eti;
        let bu = &pl.b * &u;
        let innov = &pl.h * (&pl.c * (xhi - xi));
        let coupling = &acc[i] * (-c * ss.get(i).sign());
        let z1norm: f64 = zti.iter().map(|v| v.abs()).sum();
        let mut uhat = coupling.clone();
        for kk in 0..d {
            let e = z[i * d + kk] - zti[kk];
            uhat[kk] += (beta1 + beta2 * z1norm) * sgn_eps(e, epsilon);
        }
        dx.rows_mut(i * d, d).copy_from(&(&pl.a * xi + &bu));
        dxhat.rows_mut(i * d, d).copy_from(&(&pl.a * xhi + &bu + &innov));
        deta.rows_mut(i * d, d).copy_from(&(&pl.a * eti + &bu + &innov - &uhat));
        dz.rows_mut(i * d, d).copy_from(&(a_nominal * zti + coupling));
    }
    (dx, dxhat, deta, dz)
}

// ---------------------------------------------------------------------------
// Uniform vector-field interface for the integrator
// ---------------------------------------------------------------------------

/// Evaluates a protocol's extended-state derivative at `(t, y)`.
pub struct VectorField<'a> {
    spec: &'a ProtocolSpec,
    layout: StateLayout,
}

impl<'a> VectorField<'a> {
    fn new(spec: &'a ProtocolSpec) -> Self {
        Self { spec, layout: spec.layout() }
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn spec(&self) -> &ProtocolSpec {
        self.spec
    }

    /// Maximum componentwise scaled disagreement over edges, used by the
    /// integrator's near-origin switch for the finite-time law.
    pub fn max_component_disagreement(&self, y: &DVector<f64>) -> f64 {
        let (g, ss) = (self.spec.graph(), self.spec.scalings());
        let (n, d) = (ss.len(), ss.dim());
        let x = y.rows(0, n * d);
        let scaled: Vec<DVector<f64>> =
            (0..n).map(|i| ss.get(i).entries() * x.rows(i * d, d)).collect();
        let mut worst: f64 = 0.0;
        for e in g.edges() {
            for k in 0..d {
                worst = worst.max((scaled[e.tail][k] - scaled[e.head][k]).abs());
            }
        }
        worst
    }

    pub fn eval(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let spec = self.spec;
        let (g, ss) = (spec.graph(), spec.scalings());
        let (n, d) = (ss.len(), ss.dim());
        let nd = n * d;
        let mut out = DVector::zeros(self.layout.total_len());
        let x = y.rows(0, nd);
        match spec.protocol() {
            Protocol::Basic => {
                out.rows_mut(0, nd).copy_from(&rhs_basic(&x, g, ss));
            }
            Protocol::Nonlinear { f } => {
                out.rows_mut(0, nd).copy_from(&rhs_nonlinear(&x, g, ss, f));
            }
            Protocol::FiniteTime { alpha, modified } => {
                out.rows_mut(0, nd)
                    .copy_from(&rhs_finite_time(&x, g, ss, *alpha, *modified));
            }
            Protocol::Adaptive { uncertainty, gamma } => {
                let r = uncertainty.r_dim();
                let theta = y.rows(nd, n * r);
                let (dx, dth) = rhs_adaptive(t, &x, &theta, g, ss, uncertainty, gamma);
                out.rows_mut(0, nd).copy_from(&dx);
                out.rows_mut(nd, n * r).copy_from(&dth);
            }
            Protocol::LinearHomogeneous { a, c } => {
                out.rows_mut(0, nd).copy_from(&rhs_linear_homogeneous(&x, g, ss, a, *c));
            }
            Protocol::AdaptiveGain { a, kappa, t0 } => {
                let gains = y.rows(nd, n);
                let (dx, dc) = rhs_adaptive_gain(t, &x, &gains, g, ss, a, kappa, *t0);
                out.rows_mut(0, nd).copy_from(&dx);
                out.rows_mut(nd, n).copy_from(&dc);
            }
            Protocol::HeteroFullInput { a_nominal, plant_a, c, beta1, beta2, epsilon } => {
                let z = y.rows(nd, nd);
                let (dx, dz) = rhs_hetero_full_input(
                    &x, &z, g, ss, a_nominal, plant_a, *c, *beta1, *beta2, *epsilon,
                );
                out.rows_mut(0, nd).copy_from(&dx);
                out.rows_mut(nd, nd).copy_from(&dz);
            }
            Protocol::ObserverHomogeneous { a, b, c_out, k, h_obs, c } => {
                let xhat = y.rows(nd, nd);
                let eta = y.rows(2 * nd, nd);
                let (dx, dxh, det) = rhs_observer_homogeneous(
                    &x, &xhat, &eta, g, ss, a, b, c_out, k, h_obs, *c,
                );
                out.rows_mut(0, nd).copy_from(&dx);
                out.rows_mut(nd, nd).copy_from(&dxh);
                out.rows_mut(2 * nd, nd).copy_from(&det);
            }
            Protocol::ObserverHeterogeneous { a_nominal, plants, c, beta1, beta2, epsilon } => {
                let xhat = y.rows(nd, nd);
                let eta = y.rows(2 * nd, nd);
                let z = y.rows(3 * nd, nd);
                let (dx, dxh, det, dz) = rhs_observer_heterogeneous(
                    &x, &xhat, &eta, &z, g, ss, a_nominal, plants, *c, *beta1, *beta2, *epsilon,
                );
                out.rows_mut(0, nd).copy_from(&dx);
                out.rows_mut(nd, nd).copy_from(&dxh);
                out.rows_mut(2 * nd, nd).copy_from(&det);
                out.rows_mut(3 * nd, nd).copy_from(&dz);
            }
        }
        out
    }

    /// The control inputs `u_i` at `(t, y)`; for single-integrator variants
    /// this coincides with the agent-block derivative minus the plant drift.
    pub fn control_inputs(&self, t: f64, y: &DVector<f64>) -> Vec<DVector<f64>> {
        let spec = self.spec;
        let (g, ss) = (spec.graph(), spec.scalings());
        let (n, d) = (ss.len(), ss.dim());
        let nd = n * d;
        let x = y.rows(0, nd);
        match spec.protocol() {
            Protocol::Basic | Protocol::Nonlinear { .. } | Protocol::FiniteTime { .. } => {
                let dx = self.eval(t, y);
                (0..n).map(|i| dx.rows(i * d, d).into_owned()).collect()
            }
            Protocol::Adaptive { uncertainty, gamma } => {
                let r = uncertainty.r_dim();
                let theta = y.rows(nd, n * r);
                let (dx, _) = rhs_adaptive(t, &x, &theta, g, ss, uncertainty, gamma);
                // u_i = ẋ_i − φ_i θ_i.
                (0..n)
                    .map(|i| {
                        let xi = x.rows(i * d, d);
                        let phi = uncertainty.regressor.eval(i, t, &xi);
                        dx.rows(i * d, d) - phi * &uncertainty.theta[i]
                    })
                    .collect()
            }
            Protocol::LinearHomogeneous { a, c } => {
                let acc = disagreement_sums(&x, g, ss);
                let _ = (a, c);
                (0..n)
                    .map(|i| &acc[i] * (-*c * ss.get(i).sign()))
                    .collect()
            }
            Protocol::AdaptiveGain { .. } => {
                let gains = y.rows(nd, n);
                let acc = disagreement_sums(&x, g, ss);
                (0..n)
                    .map(|i| &acc[i] * (-gains[i] * ss.get(i).sign()))
                    .collect()
            }
            Protocol::HeteroFullInput { plant_a, .. } => {
                let dx = self.eval(t, y);
                (0..n)
                    .map(|i| dx.rows(i * d, d) - &plant_a[i] * x.rows(i * d, d))
                    .collect()
            }
            Protocol::ObserverHomogeneous { k, .. } => {
                let eta = y.rows(2 * nd, nd);
                (0..n).map(|i| k * eta.rows(i * d, d)).collect()
            }
            Protocol::ObserverHeterogeneous { plants, .. } => {
                let eta = y.rows(2 * nd, nd);
                (0..n).map(|i| &plants[i].k * eta.rows(i * d, d)).collect()
            }
        }
    }
}
