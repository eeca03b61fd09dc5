//! The matrix-scaled Laplacian `Ω = (sign(S) L ⊗ I_d) S`: spectrum, kernel
//! bases, biorthogonal reduction to the stable block `Ω′`, Lyapunov-equation
//! solves, and coupling-gain synthesis for linear-agent protocols.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;
use crate::scaling::ScalingSet;

/// Eigenvalues of a matrix pre-scaled to unit spectral norm are treated as
/// zero below this threshold.
pub const ZERO_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("scaling set has {set} members but the graph has {graph} vertices")]
    DimensionMismatch { set: usize, graph: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("matrix is not stable: eigenvalue with real part {0} found")]
    NotStable(f64),
    #[error("Lyapunov solve failed: {0}")]
    LyapunovFailure(String),
    #[error("reduction is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("interval check requires symmetric scaling matrices (member {0} is not)")]
    NonSymmetricScaling(usize),
    #[error("coupling gain c = {c} fails the stability check: max Re λ(Θ_c) = {max_re}")]
    GainVerificationFailed { c: f64, max_re: f64 },
}

/// `Ω` together with its source graph and scaling set.
#[derive(Debug, Clone)]
pub struct MscLaplacian {
    graph: Graph,
    scalings: ScalingSet,
    omega: DMatrix<f64>,
}

impl MscLaplacian {
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn scalings(&self) -> &ScalingSet {
        &self.scalings
    }

    pub fn agent_count(&self) -> usize {
        self.scalings.len()
    }

    pub fn dim(&self) -> usize {
        self.scalings.dim()
    }

    /// Complex eigenvalues sorted by real part (ties by imaginary part).
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        sorted_eigenvalues(&self.omega)
    }
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let mut eig: Vec<Complex64> = m
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    eig
}

/// Builds `Ω = (sign(S) L ⊗ I_d) S`; blockwise `Ω_ij = sign(S_i) l_ij S_j`.
pub fn msc_laplacian(g: &Graph, ss: &ScalingSet) -> Result<MscLaplacian, SpectralError> {
    if ss.len() != g.vertex_count() {
        return Err(SpectralError::DimensionMismatch { set: ss.len(), graph: g.vertex_count() });
    }
    let (n, d) = (ss.len(), ss.dim());
    let l = g.laplacian();
    let signs = ss.signs();
    let mut omega = DMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            if l[(i, j)] != 0.0 {
                let block = ss.get(j).entries() * (signs[i] * l[(i, j)]);
                omega.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            }
        }
    }
    Ok(MscLaplacian { graph: g.clone(), scalings: ss.clone(), omega })
}

/// `P = (Σ_i |S_i|⁻¹)⁻¹`, the weighting of the virtual consensus point.
pub fn p_matrix(ss: &ScalingSet) -> DMatrix<f64> {
    let d = ss.dim();
    let mut sum = DMatrix::zeros(d, d);
    for m in ss.matrices() {
        sum += m.abs().lu().try_inverse().expect("|S_i| is invertible");
    }
    sum.lu().try_inverse().expect("sum of positive definite matrices is invertible")
}

/// Right kernel `S⁻¹(1_n ⊗ I_d)` and left kernel `sign(S) 1_n ⊗ I_d`
/// of `Ω`, as dn×d column blocks.
pub fn kernel_bases(ml: &MscLaplacian) -> Result<(DMatrix<f64>, DMatrix<f64>), SpectralError> {
    if !ml.graph.is_connected() {
        return Err(SpectralError::Disconnected);
    }
    let (n, d) = (ml.agent_count(), ml.dim());
    let mut right = DMatrix::zeros(n * d, d);
    let mut left = DMatrix::zeros(n * d, d);
    for i in 0..n {
        right.view_mut((i * d, 0), (d, d)).copy_from(&ml.scalings.get(i).inverse());
        let s = ml.scalings.get(i).sign();
        left.view_mut((i * d, 0), (d, d))
            .copy_from(&(DMatrix::identity(d, d) * s));
    }
    Ok((right, left))
}

/// The biorthogonal pair `(V, Z)` with `ZᵀV = I`, `V_[1:d] = S⁻¹(1_n ⊗ P)`,
/// `Z_[1:d] = sign(S)1_n ⊗ I_d`, and the reduced matrix
/// `Ω′ = Z_[d+1:dn]ᵀ Ω V_[d+1:dn]` (−Ω′ Hurwitz for connected graphs).
#[derive(Debug, Clone)]
pub struct ReducedPair {
    pub v: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub omega_prime: DMatrix<f64>,
    pub p: DMatrix<f64>,
    n: usize,
    d: usize,
}

impl ReducedPair {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn v_tail(&self) -> DMatrix<f64> {
        let nd = self.n * self.d;
        self.v.columns(self.d, nd - self.d).into_owned()
    }

    pub fn z_tail(&self) -> DMatrix<f64> {
        let nd = self.n * self.d;
        self.z.columns(self.d, nd - self.d).into_owned()
    }
}

/// Block-diagonalizes `Ω` as `V⁻¹ΩV = blkdiag(0_d, Ω′)`.
///
/// The trailing dn−d columns of `V` are an orthonormal basis of the
/// complement of `span(Z_[1:d])`: columns 2..n of the Householder reflector
/// sending `e₁` to `s/√n` (s the sign vector) span `s⊥`, and their Kronecker
/// products with `I_d` span the complement exactly.
pub fn reduce(ml: &MscLaplacian) -> Result<ReducedPair, SpectralError> {
    if !ml.graph.is_connected() {
        return Err(SpectralError::Disconnected);
    }
    let (n, d) = (ml.agent_count(), ml.dim());
    let nd = n * d;
    let p = p_matrix(&ml.scalings);
    let signs = ml.scalings.signs();

    let mut v = DMatrix::zeros(nd, nd);
    for i in 0..n {
        v.view_mut((i * d, 0), (d, d)).copy_from(&(ml.scalings.get(i).inverse() * &p));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut u = DVector::from_iterator(n, signs.iter().map(|s| s / sqrt_n));
    u[0] -= 1.0;
    let reflector = if u.norm() < 1e-12 {
        DMatrix::identity(n, n)
    } else {
        DMatrix::identity(n, n) - &u * u.transpose() * (2.0 / u.norm_squared())
    };
    for k in 1..n {
        for i in 0..n {
            for r in 0..d {
                v[(i * d + r, d * k + r)] = reflector[(i, k)];
            }
        }
    }

    let v_inv = v
        .clone()
        .lu()
        .try_inverse()
        .ok_or(SpectralError::IllConditioned(f64::INFINITY))?;
    let cond = v.norm() * v_inv.norm();
    if cond > 1e12 {
        return Err(SpectralError::IllConditioned(cond));
    }
    let z = v_inv.transpose();
    let z_tail = z.columns(d, nd - d);
    let v_tail = v.columns(d, nd - d);
    let omega_prime = (z_tail.transpose() * &ml.omega) * v_tail;
    Ok(ReducedPair { v, z, omega_prime, p, n, d })
}

/// Solves `QM + MᵀQ = I` by Kronecker vectorization, for `−M` Hurwitz.
///
/// Returns the symmetrized positive definite solution; fails if `M` has an
/// eigenvalue with non-positive real part, if the solve is singular, or if
/// the residual/definiteness checks fail.
pub fn lyapunov_solve(m: &DMatrix<f64>) -> Result<DMatrix<f64>, SpectralError> {
    let k = m.nrows();
    assert_eq!(k, m.ncols(), "lyapunov_solve needs a square matrix");
    let scale = m.norm().max(1.0);
    for ev in m.complex_eigenvalues().iter() {
        if ev.re <= 1e-9 * scale {
            return Err(SpectralError::NotStable(ev.re));
        }
    }
    // vec(QM) = (Mᵀ⊗I)vec(Q), vec(MᵀQ) = (I⊗Mᵀ)vec(Q)  (column-major vec).
    let mt = m.transpose();
    let eye = DMatrix::identity(k, k);
    let system = mt.kronecker(&eye) + eye.kronecker(&mt);
    let rhs = DVector::from_iterator(k * k, DMatrix::identity(k, k).iter().copied());
    let qvec = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SpectralError::LyapunovFailure("singular Kronecker system".into()))?;
    let q_raw = DMatrix::from_iterator(k, k, qvec.iter().copied());
    let q = (&q_raw + q_raw.transpose()) * 0.5;
    let residual = (&q * m + m.transpose() * &q - DMatrix::identity(k, k)).abs().max();
    if residual > 1e-8 {
        return Err(SpectralError::LyapunovFailure(format!("residual {residual:.3e}")));
    }
    let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(SpectralError::LyapunovFailure(format!(
            "solution not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(q)
}

/// Spectral 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Stability with a norm-aware threshold: Hurwitz iff
/// `max Re λ < −1e−9·(1 + ‖M‖)`.
pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    max_real_eigenvalue(m) < -1e-9 * (1.0 + m.norm())
}

pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Result of a coupling-gain synthesis or verification.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingGain {
    pub c: f64,
    pub lambda_max_q: f64,
    pub a_norm: f64,
    /// Spectrum of `Θ_c = Z_tailᵀ(I_n ⊗ A)V_tail − cΩ′`, sorted by real part.
    pub theta_spectrum: Vec<(f64, f64)>,
    pub max_real_part: f64,
}

/// `Θ_c = Z_[d+1:dn]ᵀ (I_n ⊗ A) V_[d+1:dn] − c·Ω′` for agent drift `A`.
pub fn theta_c(rp: &ReducedPair, a: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let (n, d) = (rp.agent_count(), rp.dim());
    assert_eq!(a.nrows(), d);
    let mut ia = DMatrix::zeros(n * d, n * d);
    for i in 0..n {
        ia.view_mut((i * d, i * d), (d, d)).copy_from(a);
    }
    rp.z_tail().transpose() * ia * rp.v_tail() - &rp.omega_prime * c
}

/// Synthesizes `c = margin · 2‖A‖₂ λ_max(Q)` with `Q` solving
/// `QΩ′ + Ω′ᵀQ = I`, then verifies that `Θ_c` is Hurwitz.
pub fn coupling_gain(
    rp: &ReducedPair,
    a: &DMatrix<f64>,
    margin: f64,
) -> Result<CouplingGain, SpectralError> {
    assert!(margin >= 1.0, "margin must be at least 1");
    let q = lyapunov_solve(&rp.omega_prime)?;
    let lambda_max_q = q.symmetric_eigen().eigenvalues.max();
    let a_norm = spectral_norm(a);
    // A = 0 admits any positive gain; keep the synthesis well-defined.
    let c = if a_norm == 0.0 { margin } else { margin * 2.0 * a_norm * lambda_max_q };
    verify_gain(rp, a, c).map(|mut g| {
        g.lambda_max_q = lambda_max_q;
        g
    })
}

/// Verifies that a given `c` renders `Θ_c` Hurwitz.
pub fn verify_gain(
    rp: &ReducedPair,
    a: &DMatrix<f64>,
    c: f64,
) -> Result<CouplingGain, SpectralError> {
    let theta = theta_c(rp, a, c);
    let spectrum = sorted_eigenvalues(&theta);
    let max_re = spectrum.last().map(|e| e.re).unwrap_or(f64::NEG_INFINITY);
    if !is_hurwitz(&theta) {
        return Err(SpectralError::GainVerificationFailed { c, max_re });
    }
    Ok(CouplingGain {
        c,
        lambda_max_q: f64::NAN,
        a_norm: spectral_norm(a),
        theta_spectrum: spectrum.iter().map(|e| (e.re, e.im)).collect(),
        max_real_part: max_re,
    })
}

/// Outcome of the real-spectrum interval check for symmetric scaling sets.
#[derive(Debug, Clone, Serialize)]
pub struct InterlacingReport {
    pub p_min: f64,
    pub p_max: f64,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub interval: (f64, f64),
    pub all_real: bool,
    pub nonzero_contained: bool,
    pub eigenvalues: Vec<(f64, f64)>,
}

/// For symmetric definite scalings, verifies that the spectrum of `Ω` is
/// real and that every nonzero eigenvalue lies in
/// `[p_min·λ₂(L), p_max·λ_n(L)]`, where `p_min`/`p_max` are the extremal
/// eigenvalues over all `|S_i|`.
pub fn interlacing_check(ml: &MscLaplacian) -> Result<InterlacingReport, SpectralError> {
    for (i, m) in ml.scalings.matrices().iter().enumerate() {
        if (m.entries() - m.entries().transpose()).abs().max() > 1e-12 {
            return Err(SpectralError::NonSymmetricScaling(i + 1));
        }
    }
    let mut p_min = f64::INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    for m in ml.scalings.matrices() {
        let eig = m.abs().symmetric_eigen().eigenvalues;
        p_min = p_min.min(eig.min());
        p_max = p_max.max(eig.max());
    }
    let mut lap_eig: Vec<f64> = ml
        .graph
        .laplacian()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    lap_eig.sort_by(f64::total_cmp);
    let lambda2 = lap_eig.get(1).copied().unwrap_or(0.0);
    let lambda_n = lap_eig.last().copied().unwrap_or(0.0);
    let (lo, hi) = (p_min * lambda2, p_max * lambda_n);

    let eig = ml.eigenvalues();
    let scale = spectral_norm(&ml.omega).max(1.0);
    let all_real = eig.iter().all(|e| e.im.abs() <= 1e-8 * scale);
    let tol = 1e-7 * scale;
    let nonzero_contained = eig
        .iter()
        .filter(|e| e.norm() > ZERO_EIG_TOL * scale)
        .all(|e| e.re >= lo - tol && e.re <= hi + tol);
    Ok(InterlacingReport {
        p_min,
        p_max,
        lambda2,
        lambda_n,
        interval: (lo, hi),
        all_real,
        nonzero_contained,
        eigenvalues: eig.iter().map(|e| (e.re, e.im)).collect(),
    })
}

/// Full spectral summary written by the `spectral` CLI command.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub d: usize,
    /// Eigenvalues of Ω as (re, im), sorted by real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub kernel_dimension: usize,
    pub kernel_residual: f64,
    pub p: Vec<Vec<f64>>,
    pub omega_prime_spectrum: Vec<(f64, f64)>,
    pub reduction_biorthogonality_residual: f64,
    pub reduction_offblock_residual: f64,
    pub lyapunov_lambda_max: Option<f64>,
    pub coupling: Option<CouplingGain>,
    pub interlacing: Option<InterlacingReport>,
    pub kernel_count_ok: bool,
    pub positive_count_ok: bool,
}

/// Runs the whole spectral pipeline; `a` optionally triggers gain synthesis.
pub fn spectral_report(
    ml: &MscLaplacian,
    a: Option<&DMatrix<f64>>,
    margin: f64,
) -> Result<SpectralReport, SpectralError> {
    let (n, d) = (ml.agent_count(), ml.dim());
    let eig = ml.eigenvalues();
    let scale = spectral_norm(&ml.omega).max(1.0);
    let kernel_dimension = eig.iter().filter(|e| e.norm() <= ZERO_EIG_TOL * scale).count();
    let positive = eig.iter().filter(|e| e.re > 1e-9 * scale).count();

    let (right, left) = kernel_bases(ml)?;
    let kernel_residual = (ml.omega() * &right)
        .abs()
        .max()
        .max((left.transpose() * ml.omega()).abs().max());

    let rp = reduce(ml)?;
    let nd = n * d;
    let biorth = (rp.z.transpose() * &rp.v - DMatrix::identity(nd, nd)).abs().max();
    let full = rp.z.transpose() * ml.omega() * &rp.v;
    let mut offblock: f64 = 0.0;
    for r in 0..nd {
        for c in 0..nd {
            let in_zero = r < d && c < d;
            let in_prime = r >= d && c >= d;
            if !in_zero && !in_prime {
                offblock = offblock.max(full[(r, c)].abs());
            }
        }
    }
    let omega_prime_spectrum = sorted_eigenvalues(&rp.omega_prime);

    let lyap = lyapunov_solve(&rp.omega_prime)
        .ok()
        .map(|q| q.symmetric_eigen().eigenvalues.max());
    let coupling = match a {
        Some(a) => Some(coupling_gain(&rp, a, margin)?),
        None => None,
    };
    let interlacing = interlacing_check(ml).ok();

    Ok(SpectralReport {
        n,
        d,
        eigenvalues: eig.iter().map(|e| (e.re, e.im)).collect(),
        kernel_dimension,
        kernel_residual,
        p: rp.p.row_iter().map(|r| r.iter().copied().collect()).collect(),
        omega_prime_spectrum: omega_prime_spectrum.iter().map(|e| (e.re, e.im)).collect(),
        reduction_biorthogonality_residual: biorth,
        reduction_offblock_residual: offblock,
        lyapunov_lambda_max: lyap,
        coupling,
        interlacing,
        kernel_count_ok: kernel_dimension == d,
        positive_count_ok: positive == nd - d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::{make_transform, ScalingMatrix, TransformKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_3;

    fn cycle(n: usize) -> Graph {
        let mut edges: Vec<_> = (1..n).map(|i| (i, i + 1, 1.0)).collect();
        edges.push((n, 1, 1.0));
        Graph::new(n, &edges).unwrap()
    }

    fn identity_set(n: usize, d: usize) -> ScalingSet {
        ScalingSet::new(
            (0..n)
                .map(|_| ScalingMatrix::new(DMatrix::identity(d, d)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn remark1_set() -> ScalingSet {
        let s12 = ScalingMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[2.0, -3f64.sqrt() / 4.0, -3f64.sqrt() / 4.0, 7.0 / 4.0],
        ))
        .unwrap();
        let s34 =
            ScalingMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        let s56 =
            ScalingMatrix::new(DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, -1.0])).unwrap();
        ScalingSet::new(vec![s12.clone(), s12, s34.clone(), s34, s56.clone(), s56]).unwrap()
    }

    fn sec6_set() -> ScalingSet {
        let r1 = make_transform(TransformKind::Rotation { theta: FRAC_PI_3 }).unwrap();
        let ni = ScalingMatrix::new(-DMatrix::identity(2, 2)).unwrap();
        let r5 = make_transform(TransformKind::Rotation { theta: 5.0 * FRAC_PI_3 }).unwrap();
        ScalingSet::new(vec![r1.clone(), r1, ni.clone(), ni, r5.clone(), r5]).unwrap()
    }

    fn random_definite(rng: &mut ChaCha8Rng, d: usize) -> ScalingMatrix {
        loop {
            let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0));
            if let Ok(s) = ScalingMatrix::new(m) {
                return s;
            }
        }
    }

    fn random_symmetric_definite(rng: &mut ChaCha8Rng, d: usize) -> ScalingMatrix {
        loop {
            let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0));
            let sym = (&m + m.transpose()) * 0.5;
            if let Ok(s) = ScalingMatrix::new(sym) {
                return s;
            }
        }
    }

    fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> Graph {
        let mut edges = Vec::new();
        for v in 2..=n {
            let p = rng.gen_range(1..v);
            edges.push((p, v, rng.gen_range(0.2..3.0)));
        }
        for _ in 0..n {
            let i = rng.gen_range(1..=n);
            let j = rng.gen_range(1..=n);
            if i != j && !edges.iter().any(|&(a, b, _)| (a, b) == (i.min(j), i.max(j))) {
                edges.push((i.min(j), i.max(j), rng.gen_range(0.2..3.0)));
            }
        }
        Graph::new(n, &edges).unwrap()
    }

    #[test]
    fn identity_scalings_give_kronecker_laplacian() {
        let g = cycle(6);
        let ss = identity_set(6, 2);
        let ml = msc_laplacian(&g, &ss).unwrap();
        let expect = g.laplacian().kronecker(&DMatrix::identity(2, 2));
        assert_eq!(ml.omega(), &expect);
    }

    #[test]
    fn p2_hand_oracle() {
        // S₁ = 2I (positive), S₂ = −I (negative), single unit edge.
        // sign(S) = diag(1,−1), L = [[1,−1],[−1,1]], sign(S)L = [[1,−1],[1,−1]];
        // Ω = (sign(S)L ⊗ I₂)·blkdiag(2I,−I) = [[2I, I],[2I, I]].
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        let s1 = ScalingMatrix::new(DMatrix::identity(2, 2) * 2.0).unwrap();
        let s2 = ScalingMatrix::new(-DMatrix::identity(2, 2)).unwrap();
        let ss = ScalingSet::new(vec![s1, s2]).unwrap();
        let ml = msc_laplacian(&g, &ss).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.0, 1.0, 0.0,
                0.0, 2.0, 0.0, 1.0,
                2.0, 0.0, 1.0, 0.0,
                0.0, 2.0, 0.0, 1.0,
            ],
        );
        assert_eq!(ml.omega(), &expect);
    }

    #[test]
    fn remark1_spectrum_matches_paper() {
        let ml = msc_laplacian(&cycle(6), &remark1_set()).unwrap();
        let eig = ml.eigenvalues();
        let expect = [
            0.0, 0.0, 1.059, 1.264, 2.088, 2.387, 3.406, 3.477, 5.051, 6.657, 7.388, 10.222,
        ];
        assert_eq!(eig.len(), expect.len());
        for (e, x) in eig.iter().zip(expect) {
            assert!(e.im.abs() <= 1e-8, "imaginary part {}", e.im);
            assert!((e.re - x).abs() <= 2e-3, "{} vs {}", e.re, x);
        }
    }

    #[test]
    fn omega_construction_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let d = if rng.gen_bool(0.5) { 2 } else { 3 };
            let g = random_connected(&mut rng, n);
            let ss =
                ScalingSet::new((0..n).map(|_| random_definite(&mut rng, d)).collect()).unwrap();
            let ml = msc_laplacian(&g, &ss).unwrap();
            let signs = DMatrix::from_diagonal(&DVector::from_vec(ss.signs()));
            let direct =
                (signs * g.laplacian()).kronecker(&DMatrix::identity(d, d)) * ss.block_diag();
            assert!((ml.omega() - direct).abs().max() <= 1e-12);
            let (right, left) = kernel_bases(&ml).unwrap();
            assert!((ml.omega() * right).abs().max() <= 1e-9);
            assert!((left.transpose() * ml.omega()).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn kernel_matches_svd_null_space() {
        let ml = msc_laplacian(&cycle(6), &remark1_set()).unwrap();
        let (right, _) = kernel_bases(&ml).unwrap();
        let svd = nalgebra::SVD::new(ml.omega().clone(), true, true);
        let vt = svd.v_t.unwrap();
        let sv = &svd.singular_values;
        let mut null = Vec::new();
        for (k, s) in sv.iter().enumerate() {
            if *s <= 1e-9 * sv.max() {
                null.push(vt.row(k).transpose());
            }
        }
        assert_eq!(null.len(), 2);
        let mut null_m = DMatrix::zeros(12, 2);
        for (k, c) in null.iter().enumerate() {
            null_m.set_column(k, c);
        }
        // Projector gap = sine of the largest principal angle.
        let proj = |m: &DMatrix<f64>| {
            let gram_inv = (m.transpose() * m).lu().try_inverse().unwrap();
            m * gram_inv * m.transpose()
        };
        let gap = (proj(&right) - proj(&null_m)).abs().max();
        assert!(gap <= 1e-7, "principal angle gap {gap}");
    }

    #[test]
    fn reduce_identity_scalings() {
        let ml = msc_laplacian(&cycle(6), &identity_set(6, 2)).unwrap();
        let rp = reduce(&ml).unwrap();
        let mut eig: Vec<f64> =
            sorted_eigenvalues(&rp.omega_prime).iter().map(|e| e.re).collect();
        eig.sort_by(f64::total_cmp);
        let expect = [1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0, 4.0, 4.0];
        for (a, b) in eig.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn reduce_remark1_matches_nonzero_spectrum() {
        let ml = msc_laplacian(&cycle(6), &remark1_set()).unwrap();
        let rp = reduce(&ml).unwrap();
        assert!((rp.z.transpose() * &rp.v - DMatrix::identity(12, 12)).abs().max() <= 1e-8);
        let mut prime: Vec<f64> =
            sorted_eigenvalues(&rp.omega_prime).iter().map(|e| e.re).collect();
        prime.sort_by(f64::total_cmp);
        let expect = [1.059, 1.264, 2.088, 2.387, 3.406, 3.477, 5.051, 6.657, 7.388, 10.222];
        for (a, b) in prime.iter().zip(expect) {
            assert!((a - b).abs() <= 2e-3, "{a} vs {b}");
        }
        assert!(is_hurwitz(&(-rp.omega_prime.clone())));
    }

    #[test]
    fn reduction_properties_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let d = 2;
            let g = random_connected(&mut rng, n);
            let ss =
                ScalingSet::new((0..n).map(|_| random_definite(&mut rng, d)).collect()).unwrap();
            let ml = msc_laplacian(&g, &ss).unwrap();
            let rp = reduce(&ml).unwrap();
            let nd = n * d;
            assert!(
                (rp.z.transpose() * &rp.v - DMatrix::identity(nd, nd)).abs().max() <= 1e-8
            );
            let full = rp.z.transpose() * ml.omega() * &rp.v;
            for r in 0..nd {
                for c in 0..nd {
                    if (r < d) != (c < d) {
                        assert!(full[(r, c)].abs() <= 1e-7, "off-block {}", full[(r, c)]);
                    }
                }
            }
            // Nonzero spectrum of Ω equals the spectrum of Ω′ as multisets.
            let scale = spectral_norm(ml.omega()).max(1.0);
            let mut nonzero: Vec<Complex64> = ml
                .eigenvalues()
                .into_iter()
                .filter(|e| e.norm() > ZERO_EIG_TOL * scale)
                .collect();
            let mut prime = sorted_eigenvalues(&rp.omega_prime);
            assert_eq!(nonzero.len(), prime.len());
            nonzero.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            prime.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            for (a, b) in nonzero.iter().zip(&prime) {
                assert!((a - b).norm() <= 1e-6 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn eigenvalue_counts_lemma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let d = if rng.gen_bool(0.5) { 2 } else { 3 };
            let g = random_connected(&mut rng, n);
            let ss =
                ScalingSet::new((0..n).map(|_| random_definite(&mut rng, d)).collect()).unwrap();
            let ml = msc_laplacian(&g, &ss).unwrap();
            let eig = ml.eigenvalues();
            let scale = spectral_norm(ml.omega()).max(1.0);
            let zeros = eig.iter().filter(|e| e.norm() <= ZERO_EIG_TOL * scale).count();
            let positive = eig.iter().filter(|e| e.re > 1e-9 * scale).count();
            assert_eq!(zeros, d, "kernel dimension");
            assert_eq!(positive, n * d - d, "positive eigenvalue count");
        }
    }

    #[test]
    fn p_matrix_examples() {
        let p = p_matrix(&identity_set(3, 2));
        assert!((p - DMatrix::identity(2, 2) / 3.0).abs().max() <= 1e-14);

        // §6 set: Σ|S_i|⁻¹ = 2R(−π/3) + 2I + 2R(π/3) = 4I, so P = I/4.
        let p = p_matrix(&sec6_set());
        assert!((p - DMatrix::identity(2, 2) * 0.25).abs().max() <= 1e-12);

        let p = p_matrix(&remark1_set());
        let mut sum = DMatrix::zeros(2, 2);
        for m in remark1_set().matrices() {
            sum += m.abs().lu().try_inverse().unwrap();
        }
        assert!((p.lu().try_inverse().unwrap() - sum).abs().max() <= 1e-12);
    }

    #[test]
    fn lyapunov_closed_forms() {
        let q = lyapunov_solve(&DMatrix::from_row_slice(1, 1, &[2.0])).unwrap();
        assert!((q[(0, 0)] - 0.25).abs() <= 1e-14);

        let q = lyapunov_solve(&DMatrix::identity(2, 2)).unwrap();
        assert!((q - DMatrix::identity(2, 2) * 0.5).abs().max() <= 1e-14);

        assert!(matches!(
            lyapunov_solve(&DMatrix::from_row_slice(1, 1, &[-1.0])),
            Err(SpectralError::NotStable(_))
        ));
    }

    #[test]
    fn lyapunov_residuals_random_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let k = rng.gen_range(1..=8);
            let m = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0))
                + DMatrix::identity(k, k) * (k as f64 + 1.0);
            let q = lyapunov_solve(&m).unwrap();
            let residual =
                (&q * &m + m.transpose() * &q - DMatrix::identity(k, k)).abs().max();
            assert!(residual <= 1e-8);
            assert!(q.symmetric_eigen().eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn coupling_gain_zero_drift() {
        let ml = msc_laplacian(&cycle(6), &sec6_set()).unwrap();
        let rp = reduce(&ml).unwrap();
        let gain = coupling_gain(&rp, &DMatrix::zeros(2, 2), 1.05).unwrap();
        assert!(gain.c > 0.0);
        assert!(gain.max_real_part < 0.0);
    }

    #[test]
    fn coupling_gain_oscillator_and_paper_choice() {
        let ml = msc_laplacian(&cycle(6), &sec6_set()).unwrap();
        let rp = reduce(&ml).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let gain = coupling_gain(&rp, &a, 1.05).unwrap();
        assert!((gain.a_norm - 1.0).abs() <= 1e-12);
        assert!((gain.c - 1.05 * 2.0 * gain.lambda_max_q).abs() <= 1e-12);
        assert!(gain.max_real_part < 0.0);

        // The paper's simulations use c = 2; it must verify as Hurwitz too.
        let fixed = verify_gain(&rp, &a, 2.0).unwrap();
        assert!(fixed.max_real_part < 0.0);
    }

    #[test]
    fn interlacing_remark1() {
        let ml = msc_laplacian(&cycle(6), &remark1_set()).unwrap();
        let report = interlacing_check(&ml).unwrap();
        assert!(report.all_real);
        assert!(report.nonzero_contained);
        // The computed interval sits inside the printed [0.5, 12], so
        // containment there follows a fortiori.
        assert!(report.interval.0 >= 0.5 - 1e-12);
        assert!((report.interval.1 - 12.0).abs() <= 1e-9);
    }

    #[test]
    fn interlacing_uniform_scaling_exact() {
        let s = ScalingMatrix::new(DMatrix::identity(2, 2) * 2.0).unwrap();
        let ss =
            ScalingSet::new(vec![s.clone(), s.clone(), s.clone(), s.clone(), s.clone(), s])
                .unwrap();
        let ml = msc_laplacian(&cycle(6), &ss).unwrap();
        let mut eig: Vec<f64> = ml.eigenvalues().iter().map(|e| e.re).collect();
        eig.sort_by(f64::total_cmp);
        let expect = [0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 8.0, 8.0];
        for (a, b) in eig.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn interlacing_random_symmetric_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let ss = ScalingSet::new(
                (0..6).map(|_| random_symmetric_definite(&mut rng, 2)).collect(),
            )
            .unwrap();
            let ml = msc_laplacian(&cycle(6), &ss).unwrap();
            let report = interlacing_check(&ml).unwrap();
            assert!(report.all_real);
            assert!(report.nonzero_contained);
        }
    }

    #[test]
    fn interlacing_rejects_non_symmetric() {
        let ml = msc_laplacian(&cycle(6), &sec6_set()).unwrap();
        assert!(matches!(
            interlacing_check(&ml),
            Err(SpectralError::NonSymmetricScaling(_))
        ));
    }

    #[test]
    fn report_runs_end_to_end() {
        let ml = msc_laplacian(&cycle(6), &remark1_set()).unwrap();
        let report = spectral_report(&ml, None, 1.05).unwrap();
        assert!(report.kernel_count_ok);
        assert!(report.positive_count_ok);
        assert!(report.kernel_residual <= 1e-9);
        assert!(report.reduction_biorthogonality_residual <= 1e-8);
        assert!(report.reduction_offblock_residual <= 1e-7);
    }
}
