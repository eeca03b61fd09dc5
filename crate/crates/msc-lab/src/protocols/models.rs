//! Agent-side model ingredients: interaction nonlinearities, uncertainty
//! regressors, linear plant bundles and single-input pole placement.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::graph::Graph;

/// Componentwise odd interaction functions admitted by the nonlinear MSC law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// f(y) = y, recovering the basic protocol.
    Identity,
    /// f(y) = tanh(y).
    Tanh,
    /// f(y) = (beta / max_i |N_i|) · tanh(y); keeps ‖u‖_∞ < beta.
    TanhScaled { beta: f64 },
    /// f(y) = sin(y) (Kuramoto coupling). The sector condition only holds on
    /// (−π/2, π/2); excursions are surfaced as warnings, not errors.
    Sin,
}

impl Nonlinearity {
    /// Pre-multiplier resolved against the interaction graph.
    pub fn scale_for(&self, g: &Graph) -> f64 {
        match self {
            Nonlinearity::TanhScaled { beta } => beta / g.max_degree().max(1) as f64,
            _ => 1.0,
        }
    }

    pub fn apply(&self, y: f64, scale: f64) -> f64 {
        match self {
            Nonlinearity::Identity => y,
            Nonlinearity::Tanh => y.tanh(),
            Nonlinearity::TanhScaled { .. } => scale * y.tanh(),
            Nonlinearity::Sin => y.sin(),
        }
    }

    /// Half-width of the sector domain, if restricted.
    pub fn domain_halfwidth(&self) -> Option<f64> {
        match self {
            Nonlinearity::Sin => Some(std::f64::consts::FRAC_PI_2),
            _ => None,
        }
    }

    /// Sampled check of `f(0) = 0`, oddness and the sector condition
    /// `y·f(y) > 0` inside the domain.
    pub fn validate(&self, g: &Graph) -> Result<(), ProtocolError> {
        let scale = self.scale_for(g);
        if self.apply(0.0, scale).abs() > 0.0 {
            return Err(ProtocolError::InvalidNonlinearity("f(0) != 0".into()));
        }
        let half = self.domain_halfwidth().unwrap_or(10.0) * 0.999;
        for k in 1..=100 {
            let y = half * k as f64 / 100.0;
            let fy = self.apply(y, scale);
            if y * fy <= 0.0 {
                return Err(ProtocolError::InvalidNonlinearity(format!(
                    "sector condition fails at y = {y}"
                )));
            }
            if (fy + self.apply(-y, scale)).abs() > 1e-12 {
                return Err(ProtocolError::InvalidNonlinearity(format!(
                    "not odd at y = {y}"
                )));
            }
        }
        Ok(())
    }
}

/// Known regressor matrices `φ_i(t, x_i) ∈ ℝ^{d×r}` of the uncertain
/// single-integrator model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Regressor {
    /// φ ≡ 0 (no uncertainty; the estimator freezes).
    Zero { d: usize, r: usize },
    /// The six-agent 2×2 time-only regressors used alongside the paper's
    /// adaptive runs:
    /// `[[0.2 sin t, 0.5 − 0.2 sin(i t/π)], [−0.2 sin(t/(iπ)), 0.1 cos(t/π)]]`
    /// for 1-based agent index i.
    PaperSec62,
    /// State regressor `I_d ⊗ x_iᵀ` pairing with `θ_i = vec_rows(Ā_i)`; turns
    /// an unknown drift `Ā_i x_i` into the parametric form `φ_i θ_i`.
    StateKronecker { d: usize },
}

impl Regressor {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Regressor::Zero { d, r } => (*d, *r),
            Regressor::PaperSec62 => (2, 2),
            Regressor::StateKronecker { d } => (*d, d * d),
        }
    }

    /// Evaluates φ for 0-based agent index `agent`.
    pub fn eval(&self, agent: usize, t: f64, x: &DVectorView<'_, f64>) -> DMatrix<f64> {
        match self {
            Regressor::Zero { d, r } => DMatrix::zeros(*d, *r),
            Regressor::PaperSec62 => {
                let i = (agent + 1) as f64;
                let pi = std::f64::consts::PI;
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        0.2 * t.sin(),
                        0.5 - 0.2 * (i * t / pi).sin(),
                        -0.2 * (t / (i * pi)).sin(),
                        0.1 * (t / pi).cos(),
                    ],
                )
            }
            Regressor::StateKronecker { d } => {
                let mut phi = DMatrix::zeros(*d, d * d);
                for row in 0..*d {
                    for col in 0..*d {
                        phi[(row, row * d + col)] = x[col];
                    }
                }
                phi
            }
        }
    }
}

/// Plant-side uncertainty: the regressor (known to the controller) and the
/// true parameters (known only to the plant).
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    pub regressor: Regressor,
    pub theta: Vec<DVector<f64>>,
}

impl UncertaintyModel {
    pub fn r_dim(&self) -> usize {
        self.regressor.dims().1
    }
}

/// Output-feedback plant bundle for the heterogeneous observer protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverPlant {
    /// d×d drift.
    pub a: DMatrix<f64>,
    /// d×p input map.
    pub b: DMatrix<f64>,
    /// q×d output map.
    pub c: DMatrix<f64>,
    /// p×d state-feedback gain (A + BK Hurwitz).
    pub k: DMatrix<f64>,
    /// d×q output-injection gain (A + HC Hurwitz).
    pub h: DMatrix<f64>,
}

/// Assembles heterogeneous observer plants from the nominal `(A, B, C)`,
/// per-agent drift offsets `Ā_i` and input offsets `δ_bᵢ` (added to the last
/// row of B), placing `K_i` and `H_i` at the requested pole pairs.
pub fn build_hetero_observer_plants(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    a_bars: &[DMatrix<f64>],
    delta_b: &[f64],
    poles_k: (f64, f64),
    poles_h: (f64, f64),
) -> Result<Vec<ObserverPlant>, ProtocolError> {
    let d = a.nrows();
    let mut plants = Vec::with_capacity(a_bars.len());
    for (abar, db) in a_bars.iter().zip(delta_b) {
        let ai = a + abar;
        let mut bi = b.clone();
        bi[(d - 1, 0)] += *db;
        let k = place_single_input_2x2(&ai, &bi, poles_k)?;
        let h = place_output_injection_2x2(&ai, c, poles_h)?;
        plants.push(ObserverPlant { a: ai, b: bi, c: c.clone(), k, h });
    }
    Ok(plants)
}

/// Signum with an optional boundary layer: `sgn(0) = 0` exactly when
/// `eps = 0`, else the smooth surrogate `y / (|y| + eps)`.
pub fn sgn_eps(y: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        if y > 0.0 {
            1.0
        } else if y < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        y / (y.abs() + eps)
    }
}

/// `sig^α(y) = sgn(y)|y|^α` componentwise.
pub fn sig_alpha(y: f64, alpha: f64) -> f64 {
    y.signum() * y.abs().powf(alpha)
}

/// Single-input pole placement for d = 2: returns the 1×2 gain `K` such that
/// `A + BK` has characteristic polynomial `(λ − p₁)(λ − p₂)`.
///
/// For 2×2 `M = A + BK`: `tr M = tr A + KB` and
/// `det M = det A + k₁(a₂₂b₁ − a₁₂b₂) + k₂(a₁₁b₂ − a₂₁b₁)`, both affine in K,
/// so placement reduces to a 2×2 linear solve (singular iff uncontrollable).
pub fn place_single_input_2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    poles: (f64, f64),
) -> Result<DMatrix<f64>, ProtocolError> {
    assert_eq!(a.shape(), (2, 2));
    assert_eq!(b.shape(), (2, 1));
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let (b1, b2) = (b[(0, 0)], b[(1, 0)]);
    let target_tr = poles.0 + poles.1;
    let target_det = poles.0 * poles.1;
    let system = DMatrix::from_row_slice(
        2,
        2,
        &[b1, b2, a22 * b1 - a12 * b2, a11 * b2 - a21 * b1],
    );
    let rhs = DVector::from_row_slice(&[
        target_tr - (a11 + a22),
        target_det - (a11 * a22 - a12 * a21),
    ]);
    let k = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ProtocolError::PlacementFailed("pair (A, B) is not controllable".into()))?;
    Ok(DMatrix::from_row_slice(1, 2, &[k[0], k[1]]))
}

/// Output-injection placement: `H` such that `A + HC` has the given poles
/// (dual of `place_single_input_2x2`).
pub fn place_output_injection_2x2(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    poles: (f64, f64),
) -> Result<DMatrix<f64>, ProtocolError> {
    assert_eq!(c.shape(), (1, 2));
    let kt = place_single_input_2x2(&a.transpose(), &c.transpose(), poles)
        .map_err(|_| ProtocolError::PlacementFailed("pair (A, C) is not observable".into()))?;
    Ok(kt.transpose())
}
