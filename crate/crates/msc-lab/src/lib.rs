//! Matrix-scaled consensus (MSC) laboratory: graph algebra, scaling-matrix
//! geometry, spectral analysis of the matrix-scaled Laplacian, the full family
//! of MSC protocols for single-integrator and linear agents, fixed-step
//! simulation, trajectory metrics, and a scenario-driven CLI.
//!
//! The central object is the matrix-scaled Laplacian
//! `Ω = (sign(S) L ⊗ I_d) S`, where `L` is a weighted graph Laplacian and
//! `S = blkdiag(S_1, …, S_n)` collects one definite scaling matrix per agent.
//! Protocols drive every agent's scaled state `S_i x_i` to a common value, so
//! the agents themselves converge to `S_i⁻¹ x₀` for a shared virtual
//! consensus point `x₀`.

pub mod cli;
pub mod graph;
pub mod metrics;
pub mod protocols;
pub mod scaling;
pub mod scenario;
pub mod sim;
pub mod spectral;
