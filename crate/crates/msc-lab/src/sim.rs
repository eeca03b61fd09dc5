//! Fixed-step integration of protocol vector fields with dense trajectory
//! recording, deterministic seeding, and CSV/metadata export.
//!
//! RK4 is the default for smooth laws. Laws containing an active signum
//! (hetero full-input, heterogeneous observer with `epsilon = 0`) integrate
//! with explicit Euler sub-steps of at most `EULER_CAP`, since RK4 stages
//! straddling a sliding surface produce inconsistent stage signs. The
//! finite-time law drops from RK4 to Euler sub-steps once the largest
//! componentwise scaled disagreement falls below `FINITE_TIME_SWITCH`, where
//! `sig^α` loses its Lipschitz constant.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::graph::Graph;
use crate::protocols::{Block, ExtendedState, ProtocolSpec, StateLayout, VariantTag};
use crate::scaling::ScalingSet;

/// Maximum Euler sub-step for discontinuous right-hand sides.
pub const EULER_CAP: f64 = 1e-4;
/// Componentwise scaled-disagreement threshold below which the finite-time
/// law switches from RK4 to Euler sub-steps.
pub const FINITE_TIME_SWITCH: f64 = 1e-3;
/// Any state component beyond this magnitude stops the run with a
/// divergence flag.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("initial state has length {got}, protocol expects {want}")]
    LayoutMismatch { got: usize, want: usize },
    #[error("initial adaptive gain must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

/// Fixed-step configuration. `stride` records every k-th step; the seed
/// feeds both the initial state and any scenario-level random draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub h: f64,
    pub t_final: f64,
    pub method: Method,
    pub stride: usize,
    pub seed: u64,
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.h > 0.0) {
            return Err(SimError::BadConfig(format!("step h = {} must be positive", self.h)));
        }
        if self.h > self.t_final {
            return Err(SimError::BadConfig(format!(
                "step h = {} exceeds horizon T = {}",
                self.h, self.t_final
            )));
        }
        if self.stride == 0 {
            return Err(SimError::BadConfig("stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMetadata {
    pub protocol: VariantTag,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub config: SimConfig,
    /// The PRNG contract: ChaCha8, 64-bit seed via `seed_from_u64`, one
    /// stream per (block, agent) pair with stream id `block_index·n + agent`.
    pub prng: &'static str,
    pub graph_hash: String,
    pub scaling_hash: String,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub warnings: Vec<String>,
    /// Scenario-level materialized draws (set by the CLI layer).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_params: Option<serde_json::Value>,
}

/// Time-indexed record of extended states on a uniform grid of spacing
/// `h·stride`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub layout: StateLayout,
    pub metadata: TrajectoryMetadata,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial state")
    }

    /// Agent block of snapshot `k`.
    pub fn agents_at(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        let (offset, len) = self.layout.block_range(Block::Agents).expect("agent block");
        self.states[k].rows(offset, len)
    }

    pub fn block_at(&self, kind: Block, k: usize) -> Option<nalgebra::DVectorView<'_, f64>> {
        self.layout.block_range(kind).map(|(o, l)| self.states[k].rows(o, l))
    }
}

pub fn graph_hash(g: &Graph) -> String {
    let mut hasher = Sha256::new();
    hasher.update((g.vertex_count() as u64).to_le_bytes());
    for e in g.edges() {
        hasher.update((e.tail as u64).to_le_bytes());
        hasher.update((e.head as u64).to_le_bytes());
        hasher.update(e.weight.to_bits().to_le_bytes());
    }
    hex_prefix(&hasher.finalize())
}

pub fn scaling_hash(ss: &ScalingSet) -> String {
    let mut hasher = Sha256::new();
    hasher.update((ss.len() as u64).to_le_bytes());
    hasher.update((ss.dim() as u64).to_le_bytes());
    for m in ss.matrices() {
        for v in m.entries().iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex_prefix(&hasher.finalize())
}

fn hex_prefix(digest: &[u8]) -> String {
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

fn rk4_step(
    field: &crate::protocols::VectorField<'_>,
    t: f64,
    h: f64,
    y: &DVector<f64>,
) -> DVector<f64> {
    let k1 = field.eval(t, y);
    let k2 = field.eval(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = field.eval(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = field.eval(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn euler_substeps(
    field: &crate::protocols::VectorField<'_>,
    t: f64,
    h: f64,
    y: &DVector<f64>,
    cap: f64,
) -> DVector<f64> {
    let m = (h / cap).ceil().max(1.0) as usize;
    let hs = h / m as f64;
    let mut out = y.clone();
    for k in 0..m {
        let dk = field.eval(t + k as f64 * hs, &out);
        out += dk * hs;
    }
    out
}

fn state_ok(y: &DVector<f64>) -> bool {
    y.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
}

/// Integrates the protocol from `init` over the configured horizon.
///
/// Deterministic for identical `(spec, init, cfg)`. A non-finite or
/// out-of-range state truncates the run and sets the divergence flag (the
/// offending state is not recorded).
pub fn integrate(
    spec: &ProtocolSpec,
    init: &ExtendedState,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let layout = spec.layout();
    if init.data.len() != layout.total_len() {
        return Err(SimError::LayoutMismatch {
            got: init.data.len(),
            want: layout.total_len(),
        });
    }
    let field = spec.vector_field();
    let n_steps = (cfg.t_final / cfg.h).round() as usize;
    let forced_euler = spec.protocol().uses_signum();
    let finite_time = spec.protocol().is_finite_time();
    let euler_cap = EULER_CAP.min(cfg.h);

    let mut times = Vec::with_capacity(n_steps / cfg.stride + 2);
    let mut states = Vec::with_capacity(n_steps / cfg.stride + 2);
    let mut y = init.data.clone();
    let mut diverged = false;
    let mut divergence_time = None;
    times.push(0.0);
    states.push(y.clone());

    let mut ft_switched = false;
    for k in 0..n_steps {
        let t = k as f64 * cfg.h;
        let use_euler = if forced_euler {
            true
        } else if finite_time {
            if !ft_switched && field.max_component_disagreement(&y) < FINITE_TIME_SWITCH {
                ft_switched = true;
            }
            ft_switched
        } else {
            cfg.method == Method::Euler
        };
        let next = if use_euler {
            euler_substeps(&field, t, cfg.h, &y, euler_cap)
        } else {
            rk4_step(&field, t, cfg.h, &y)
        };
        if !state_ok(&next) {
            diverged = true;
            divergence_time = Some(t + cfg.h);
            break;
        }
        y = next;
        if (k + 1) % cfg.stride == 0 {
            times.push((k + 1) as f64 * cfg.h);
            states.push(y.clone());
        }
    }

    let mut warnings = spec.warnings().to_vec();
    // Sector nonlinearities with a restricted domain are only locally valid;
    // surface excursions instead of blocking the run.
    if let crate::protocols::Protocol::Nonlinear { f } = spec.protocol() {
        if let Some(half) = f.domain_halfwidth() {
            let worst = states
                .iter()
                .map(|s| field.max_component_disagreement(s))
                .fold(0.0, f64::max);
            if worst >= half {
                warnings.push(format!(
                    "scaled disagreements reach {worst:.3}, outside the interaction function's domain (±{half:.3}); convergence is only guaranteed inside it"
                ));
            }
        }
    }

    Ok(Trajectory {
        times,
        states,
        layout,
        metadata: TrajectoryMetadata {
            protocol: spec.protocol().tag(),
            n: spec.agent_count(),
            d: spec.dim(),
            r: spec.r_dim(),
            config: *cfg,
            prng: "chacha8/seed_from_u64, stream = block_index*n + agent",
            graph_hash: graph_hash(spec.graph()),
            scaling_hash: scaling_hash(spec.scalings()),
            diverged,
            divergence_time,
            warnings,
            resolved_params: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Initial states
// ---------------------------------------------------------------------------

/// Per-coordinate initial distribution of a state block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitRule {
    Zero,
    /// Independent uniform draws on [low, high] per coordinate.
    Uniform { low: f64, high: f64 },
    /// The snowflake rule: coordinate 1 is `3·sign(S_i) + U[−2,2]`,
    /// coordinate 2 is `U[−2,2]`, and a third (signed homogeneous)
    /// coordinate is pinned to `sign(S_i)`.
    Snowflake,
    /// Explicit full block, stacked agent-major.
    Explicit { values: Vec<f64> },
}

/// Initial-state specification: the agent rule plus optional per-block
/// overrides (auxiliary blocks are zero unless overridden) and the initial
/// adaptive gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub agents: InitRule,
    #[serde(default = "InitRule::zero")]
    pub theta_hat: InitRule,
    #[serde(default = "InitRule::zero")]
    pub observer: InitRule,
    #[serde(default = "InitRule::zero")]
    pub eta: InitRule,
    #[serde(default = "InitRule::zero")]
    pub aux: InitRule,
    /// Initial coupling gain for the adaptive-gain law, shared by agents.
    #[serde(default = "default_gain")]
    pub gain_c0: f64,
}

impl InitRule {
    fn zero() -> Self {
        InitRule::Zero
    }
}

fn default_gain() -> f64 {
    1.0
}

impl InitialStateSpec {
    pub fn uniform(low: f64, high: f64) -> Self {
        Self {
            agents: InitRule::Uniform { low, high },
            theta_hat: InitRule::Zero,
            observer: InitRule::Zero,
            eta: InitRule::Zero,
            aux: InitRule::Zero,
            gain_c0: default_gain(),
        }
    }

    pub fn snowflake() -> Self {
        Self { agents: InitRule::Snowflake, ..Self::uniform(0.0, 0.0) }
    }
}

fn block_stream_index(kind: Block) -> u64 {
    match kind {
        Block::Agents => 0,
        Block::ThetaHat => 1,
        Block::Observer => 2,
        Block::Eta => 3,
        Block::Aux => 4,
        Block::Gains => 5,
    }
}

fn fill_block(
    state: &mut ExtendedState,
    kind: Block,
    rule: &InitRule,
    ss: &ScalingSet,
    seed: u64,
) -> Result<(), SimError> {
    let Some((_, block_len)) = state.layout.block_range(kind) else {
        return Ok(());
    };
    let n = state.layout.n;
    let width = block_len / n;
    match rule {
        InitRule::Zero => {}
        InitRule::Uniform { low, high } => {
            for i in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(block_stream_index(kind) * n as u64 + i as u64);
                let draws: Vec<f64> = (0..width).map(|_| rng.gen_range(*low..=*high)).collect();
                state.set_agent(kind, i, &draws);
            }
        }
        InitRule::Snowflake => {
            if width < 2 {
                return Err(SimError::BadConfig(
                    "snowflake initial rule needs at least 2 coordinates".into(),
                ));
            }
            for i in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(block_stream_index(kind) * n as u64 + i as u64);
                let sign = ss.get(i).sign();
                let mut draws = vec![0.0; width];
                draws[0] = 3.0 * sign + rng.gen_range(-2.0..=2.0);
                draws[1] = rng.gen_range(-2.0..=2.0);
                if width >= 3 {
                    // Signed homogeneous coordinate.
                    draws[2] = sign;
                }
                state.set_agent(kind, i, &draws);
            }
        }
        InitRule::Explicit { values } => {
            if values.len() != block_len {
                return Err(SimError::BadConfig(format!(
                    "explicit initial block has {} values, expected {block_len}",
                    values.len()
                )));
            }
            for i in 0..n {
                state.set_agent(kind, i, &values[i * width..(i + 1) * width]);
            }
        }
    }
    Ok(())
}

/// Draws a reproducible initial extended state. Every (block, agent) pair
/// reads its own ChaCha8 stream, so adding agents or blocks never shifts
/// other draws.
pub fn random_initial_state(
    spec: &ProtocolSpec,
    init: &InitialStateSpec,
    seed: u64,
) -> Result<ExtendedState, SimError> {
    let layout = spec.layout();
    let mut state = ExtendedState::zeros(layout);
    fill_block(&mut state, Block::Agents, &init.agents, spec.scalings(), seed)?;
    fill_block(&mut state, Block::ThetaHat, &init.theta_hat, spec.scalings(), seed)?;
    fill_block(&mut state, Block::Observer, &init.observer, spec.scalings(), seed)?;
    fill_block(&mut state, Block::Eta, &init.eta, spec.scalings(), seed)?;
    fill_block(&mut state, Block::Aux, &init.aux, spec.scalings(), seed)?;
    if state.layout.has_block(Block::Gains) {
        if init.gain_c0 <= 0.0 {
            return Err(SimError::NonPositiveGain(init.gain_c0));
        }
        let n = state.layout.n;
        for i in 0..n {
            state.set_agent(Block::Gains, i, &[init.gain_c0]);
        }
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Column headers in layout order: `t`, then `x_i_k`, then per-block labels.
pub fn csv_header(layout: &StateLayout) -> String {
    let mut cols = vec!["t".to_string()];
    for (kind, _, len) in layout.blocks() {
        let n = layout.n;
        let width = len / n;
        for i in 0..n {
            if width == 1 {
                cols.push(format!("{}_{}", kind.label(), i + 1));
            } else {
                for k in 0..width {
                    cols.push(format!("{}_{}_{}", kind.label(), i + 1, k + 1));
                }
            }
        }
    }
    cols.join(",")
}

/// Writes the trajectory as CSV (17 significant digits) plus a JSON metadata
/// sidecar at `<path>.meta.json`; both writes are atomic (temp + rename).
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), SimError> {
    let mut body = String::with_capacity(traj.len() * traj.layout.total_len() * 26);
    body.push_str(&csv_header(&traj.layout));
    body.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        body.push_str(&format!("{t:.16e}"));
        for v in state.iter() {
            body.push_str(&format!(",{v:.16e}"));
        }
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())?;
    let meta = serde_json::to_string_pretty(&traj.metadata)
        .map_err(|e| SimError::Io(e.to_string()))?;
    let meta_path = path.with_extension("meta.json");
    atomic_write(&meta_path, meta.as_bytes())
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| SimError::Io(e.to_string()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| SimError::Io(e.to_string()))?;
        f.write_all(bytes).map_err(|e| SimError::Io(e.to_string()))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| SimError::Io(e.to_string()))
}
