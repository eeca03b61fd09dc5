//! Scaling-matrix algebra: definiteness classification, sign/abs
//! decomposition, the elementary 2×2 transform constructors, the 3×3
//! homogeneous-coordinate augmentation that turns a planar translation into
//! a linear map, and the 18-agent snowflake scaling set.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues of the symmetric part within ±`DEFINITENESS_TOL` classify as
/// Indefinite; boundary matrices (|c| = 2 shears, θ = π/2 rotations) are
/// analytically non-definite.
pub const DEFINITENESS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix must be at least 2×2")]
    TooSmall,
    #[error("matrix is indefinite (not usable as a scaling matrix)")]
    Indefinite,
    #[error("scaling matrices have mismatched dimensions")]
    DimensionMismatch,
    #[error("scaling set is empty")]
    EmptySet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Definiteness {
    Positive,
    Negative,
    Indefinite,
}

/// Classifies via the eigenvalues of the symmetric part `(M + Mᵀ)/2`.
pub fn classify_definiteness(m: &DMatrix<f64>) -> Result<Definiteness, ScalingError> {
    if m.nrows() != m.ncols() {
        return Err(ScalingError::NotSquare);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen().eigenvalues;
    let min = eig.min();
    let max = eig.max();
    if min > DEFINITENESS_TOL {
        Ok(Definiteness::Positive)
    } else if max < -DEFINITENESS_TOL {
        Ok(Definiteness::Negative)
    } else {
        Ok(Definiteness::Indefinite)
    }
}

/// Closed-form 2×2 test: `[a b; c d]` is positive (negative) definite iff
/// `a + d > 0` (`< 0`) and `4ad > (b + c)²`.
pub fn classify_closed_form_2x2(m: &Matrix2<f64>) -> Definiteness {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let trace = a + d;
    let disc = 4.0 * a * d - (b + c) * (b + c);
    if disc > 0.0 && trace > 0.0 {
        Definiteness::Positive
    } else if disc > 0.0 && trace < 0.0 {
        Definiteness::Negative
    } else {
        Definiteness::Indefinite
    }
}

/// A strictly definite d×d scaling matrix with its cached sign.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    entries: DMatrix<f64>,
    sign: f64,
}

impl ScalingMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, ScalingError> {
        if entries.nrows() != entries.ncols() {
            return Err(ScalingError::NotSquare);
        }
        if entries.nrows() < 2 {
            return Err(ScalingError::TooSmall);
        }
        let sign = match classify_definiteness(&entries)? {
            Definiteness::Positive => 1.0,
            Definiteness::Negative => -1.0,
            Definiteness::Indefinite => return Err(ScalingError::Indefinite),
        };
        Ok(Self { entries, sign })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// +1 for positive definite, −1 for negative definite.
    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// `|S| = sign(S)·S`, always positive definite.
    pub fn abs(&self) -> DMatrix<f64> {
        &self.entries * self.sign
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.entries
            .clone()
            .lu()
            .try_inverse()
            .expect("definite matrices are invertible")
    }
}

/// Elementary planar transforms of the 2×2 catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransformKind {
    /// `diag(a, d)`; definite iff both factors share a sign.
    AxisScale { a: f64, d: f64 },
    /// SO(2) rotation by `theta`; positive definite on [0, π/2) ∪ (3π/2, 2π),
    /// negative definite on (π/2, 3π/2).
    Rotation { theta: f64 },
    /// `[1 c; 0 1]`; definite iff |c| < 2.
    ShearX { c: f64 },
    /// `[1 0; c 1]` (transpose form); definite iff |c| < 2.
    ShearY { c: f64 },
}

pub fn rotation2(theta: f64) -> Matrix2<f64> {
    Matrix2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos())
}

/// Builds the 2×2 matrix of the named transform, rejecting indefinite
/// parameter choices.
pub fn make_transform(kind: TransformKind) -> Result<ScalingMatrix, ScalingError> {
    let m = match kind {
        TransformKind::AxisScale { a, d } => Matrix2::new(a, 0.0, 0.0, d),
        TransformKind::Rotation { theta } => rotation2(theta),
        TransformKind::ShearX { c } => Matrix2::new(1.0, c, 0.0, 1.0),
        TransformKind::ShearY { c } => Matrix2::new(1.0, 0.0, c, 1.0),
    };
    ScalingMatrix::new(DMatrix::from_column_slice(2, 2, m.as_slice()))
}

/// A 2×2 base scaling augmented with a translation in homogeneous
/// coordinates:
///
/// ```text
/// S' = [ S   sign(S)·t ]
///      [ 0   sign(S)   ]
/// ```
///
/// The 3×3 result keeps the base's definiteness exactly when `a² + b² < 4`;
/// otherwise `definite` is false and the matrix cannot be used as an agent
/// scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedScaling {
    base: ScalingMatrix,
    translation: (f64, f64),
    matrix: DMatrix<f64>,
    definite: bool,
}

impl AugmentedScaling {
    pub fn base(&self) -> &ScalingMatrix {
        &self.base
    }

    pub fn translation(&self) -> (f64, f64) {
        self.translation
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// True when the 3×3 matrix is strictly definite (same sign as the base).
    pub fn is_definite(&self) -> bool {
        self.definite
    }

    pub fn into_scaling(self) -> Result<ScalingMatrix, ScalingError> {
        ScalingMatrix::new(self.matrix)
    }
}

/// Augments a definite 2×2 base with translation `(a, b)`. Translations with
/// `a² + b² ≥ 4` are allowed through with `definite = false` so scenario
/// validation can surface them.
pub fn augment_homogeneous(
    base: &ScalingMatrix,
    a: f64,
    b: f64,
) -> Result<AugmentedScaling, ScalingError> {
    if base.dim() != 2 {
        return Err(ScalingError::DimensionMismatch);
    }
    let s = base.sign();
    let e = base.entries();
    let matrix = DMatrix::from_row_slice(
        3,
        3,
        &[
            e[(0, 0)], e[(0, 1)], a * s,
            e[(1, 0)], e[(1, 1)], b * s,
            0.0,       0.0,       s,
        ],
    );
    let definite = matches!(
        classify_definiteness(&matrix)?,
        Definiteness::Positive | Definiteness::Negative
    );
    Ok(AugmentedScaling { base: base.clone(), translation: (a, b), matrix, definite })
}

/// One definite scaling matrix per agent, all of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSet {
    matrices: Vec<ScalingMatrix>,
    d: usize,
}

impl ScalingSet {
    pub fn new(matrices: Vec<ScalingMatrix>) -> Result<Self, ScalingError> {
        let d = matrices.first().ok_or(ScalingError::EmptySet)?.dim();
        if matrices.iter().any(|m| m.dim() != d) {
            return Err(ScalingError::DimensionMismatch);
        }
        Ok(Self { matrices, d })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrices(&self) -> &[ScalingMatrix] {
        &self.matrices
    }

    pub fn get(&self, i: usize) -> &ScalingMatrix {
        &self.matrices[i]
    }

    pub fn signs(&self) -> Vec<f64> {
        self.matrices.iter().map(|m| m.sign()).collect()
    }

    /// Block-diagonal `S = blkdiag(S_1, …, S_n)`.
    pub fn block_diag(&self) -> DMatrix<f64> {
        let (n, d) = (self.len(), self.d);
        let mut s = DMatrix::zeros(n * d, n * d);
        for (i, m) in self.matrices.iter().enumerate() {
            s.view_mut((i * d, i * d), (d, d)).copy_from(m.entries());
        }
        s
    }

    /// Block-diagonal `|S|`.
    pub fn abs_block_diag(&self) -> DMatrix<f64> {
        let (n, d) = (self.len(), self.d);
        let mut s = DMatrix::zeros(n * d, n * d);
        for (i, m) in self.matrices.iter().enumerate() {
            s.view_mut((i * d, i * d), (d, d)).copy_from(&m.abs());
        }
        s
    }

    /// Block-diagonal `S⁻¹`.
    pub fn inverse_block_diag(&self) -> DMatrix<f64> {
        let (n, d) = (self.len(), self.d);
        let mut s = DMatrix::zeros(n * d, n * d);
        for (i, m) in self.matrices.iter().enumerate() {
            s.view_mut((i * d, i * d), (d, d)).copy_from(&m.inverse());
        }
        s
    }
}

/// Per-agent MSC targets `x_i = S_i⁻¹ x₀` for a chosen virtual consensus
/// point.
pub fn msc_targets(ss: &ScalingSet, x0: &DVector<f64>) -> Vec<DVector<f64>> {
    assert_eq!(x0.len(), ss.dim(), "virtual consensus point has wrong dimension");
    ss.matrices().iter().map(|m| m.inverse() * x0).collect()
}

/// The 18-member snowflake scaling set: bases `R(π/4 + kπ/3)` shared by
/// agent triples, translations `[1,0]`, `R(2π/3)[1,0]`, `R(4π/3)[1,0]`
/// within each triple, packaged as 3×3 homogeneous scalings.
///
/// Rotation bases with `π/4 + kπ/3 ∈ (π/2, 3π/2)` (k = 1, 2, 3) are negative
/// definite; the augmentation inherits those signs.
pub fn snowflake_set() -> ScalingSet {
    let theta = std::f64::consts::FRAC_PI_3;
    let unit = Vector2::new(1.0, 0.0);
    let translations = [unit, rotation2(2.0 * theta) * unit, rotation2(4.0 * theta) * unit];
    let mut matrices = Vec::with_capacity(18);
    for k in 0..6 {
        let base = make_transform(TransformKind::Rotation {
            theta: std::f64::consts::FRAC_PI_4 + k as f64 * theta,
        })
        .expect("snowflake rotations avoid the definiteness boundary");
        for t in &translations {
            let aug = augment_homogeneous(&base, t.x, t.y)
                .expect("2x2 base")
                .into_scaling()
                .expect("unit translations keep the augmentation definite");
            matrices.push(aug);
        }
    }
    ScalingSet::new(matrices).expect("18 matrices of dimension 3")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn dm2(m: Matrix2<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
    }

    #[test]
    fn classify_rotation_and_boundaries() {
        assert_eq!(
            classify_definiteness(&dm2(rotation2(FRAC_PI_3))).unwrap(),
            Definiteness::Positive
        );
        assert_eq!(
            classify_definiteness(&(-DMatrix::identity(2, 2))).unwrap(),
            Definiteness::Negative
        );
        // x-shear with c = 2 sits exactly on the |c| < 2 boundary.
        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert_eq!(classify_definiteness(&shear).unwrap(), Definiteness::Indefinite);
    }

    #[test]
    fn make_transform_examples() {
        let s56 = make_transform(TransformKind::Rotation { theta: 5.0 * FRAC_PI_3 }).unwrap();
        assert_eq!(s56.sign(), 1.0);

        let axis = make_transform(TransformKind::AxisScale { a: 2.0, d: 1.0 }).unwrap();
        assert_eq!(axis.entries(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert_eq!(axis.sign(), 1.0);

        assert_eq!(
            make_transform(TransformKind::AxisScale { a: 1.0, d: -1.0 }).unwrap_err(),
            ScalingError::Indefinite
        );
    }

    #[test]
    fn shear_y_is_transpose_form() {
        let sy = make_transform(TransformKind::ShearY { c: 0.5 }).unwrap();
        assert_eq!(sy.entries(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]));
    }

    #[test]
    fn augment_identity_is_identity3() {
        let base = ScalingMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let aug = augment_homogeneous(&base, 0.0, 0.0).unwrap();
        assert!(aug.is_definite());
        assert_eq!(aug.matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn augment_rotation_is_positive() {
        let base = make_transform(TransformKind::Rotation { theta: FRAC_PI_4 }).unwrap();
        let aug = augment_homogeneous(&base, 1.0, 0.0).unwrap();
        assert!(aug.is_definite());
        assert_eq!(classify_definiteness(aug.matrix()).unwrap(), Definiteness::Positive);
    }

    #[test]
    fn augment_boundary_translation_flagged() {
        let base = ScalingMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let aug = augment_homogeneous(&base, 2.0, 0.0).unwrap();
        assert!(!aug.is_definite());
        assert!(aug.into_scaling().is_err());
    }

    #[test]
    fn snowflake_members() {
        let set = snowflake_set();
        assert_eq!(set.len(), 18);
        assert_eq!(set.dim(), 3);
        // Member 1 base block is R(π/4).
        let r = rotation2(FRAC_PI_4);
        let m0 = set.get(0).entries();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m0[(i, j)] - r[(i, j)]).abs() <= 1e-14);
            }
        }
        // Member 2 translation is R(2π/3)[1,0]ᵀ = [−1/2, √3/2]ᵀ.
        let m1 = set.get(1).entries();
        let s1 = set.get(1).sign();
        assert!((m1[(0, 2)] / s1 - (-0.5)).abs() <= 1e-14);
        assert!((m1[(1, 2)] / s1 - 3f64.sqrt() / 2.0).abs() <= 1e-14);
        // Signs follow the base rotations: k = 1, 2, 3 (members 4..=12) are
        // negative definite, the rest positive.
        let signs = set.signs();
        for (i, s) in signs.iter().enumerate() {
            let k = i / 3;
            let expect = if (1..=3).contains(&k) { -1.0 } else { 1.0 };
            assert_eq!(*s, expect, "member {i}");
            let class = classify_definiteness(set.get(i).entries()).unwrap();
            let class_sign = match class {
                Definiteness::Positive => 1.0,
                Definiteness::Negative => -1.0,
                Definiteness::Indefinite => f64::NAN,
            };
            assert_eq!(*s, class_sign);
        }
    }

    #[test]
    fn msc_targets_identity_and_triangle() {
        let id = ScalingMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let ss = ScalingSet::new(vec![id.clone(), id.clone(), id]).unwrap();
        let x0 = DVector::from_row_slice(&[1.0, 2.0]);
        for t in msc_targets(&ss, &x0) {
            assert_eq!(t, x0);
        }

        // §6 set: three distinct cluster points, pairwise equidistant.
        let ss = sec6_like_set();
        let x0 = DVector::from_row_slice(&[1.3, -0.4]);
        let targets = msc_targets(&ss, &x0);
        let points = [&targets[0], &targets[2], &targets[4]];
        let d01 = (points[0] - points[1]).norm();
        let d02 = (points[0] - points[2]).norm();
        let d12 = (points[1] - points[2]).norm();
        assert!((d01 - d02).abs() <= 1e-12);
        assert!((d01 - d12).abs() <= 1e-12);
        // Plugging back satisfies S_i x_i = x₀.
        for (m, t) in ss.matrices().iter().zip(&targets) {
            assert!((m.entries() * t - &x0).norm() <= 1e-10);
        }
    }

    #[test]
    fn msc_targets_snowflake_homogeneous() {
        let set = snowflake_set();
        let x0 = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let targets = msc_targets(&set, &x0);
        for (m, t) in set.matrices().iter().zip(&targets) {
            assert!((m.entries() * t - &x0).norm() <= 1e-10);
        }
        // At x₀ = 0 the planar parts −S_base⁻¹t_i collapse onto 6 distinct
        // points (3 agents each), and the point set is 6-fold symmetric.
        let points: Vec<Vector2<f64>> =
            targets.iter().map(|t| Vector2::new(t[0], t[1])).collect();
        let mut distinct: Vec<Vector2<f64>> = Vec::new();
        for p in &points {
            if !distinct.iter().any(|q| (p - q).norm() <= 1e-9) {
                distinct.push(*p);
            }
        }
        assert_eq!(distinct.len(), 6);
        let rot = rotation2(FRAC_PI_3);
        for p in &distinct {
            let rp = rot * p;
            assert!(distinct.iter().any(|q| (rp - q).norm() <= 1e-9));
        }
    }

    fn sec6_like_set() -> ScalingSet {
        let r1 = make_transform(TransformKind::Rotation { theta: FRAC_PI_3 }).unwrap();
        let ni = ScalingMatrix::new(-DMatrix::identity(2, 2)).unwrap();
        let r5 = make_transform(TransformKind::Rotation { theta: 5.0 * FRAC_PI_3 }).unwrap();
        ScalingSet::new(vec![r1.clone(), r1, ni.clone(), ni, r5.clone(), r5]).unwrap()
    }

    #[test]
    fn sign_invariance_and_abs_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(991);
        let mut kept = 0;
        while kept < 200 {
            let m = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-3.0..3.0));
            let Ok(s) = ScalingMatrix::new(m) else { continue };
            kept += 1;
            let st = ScalingMatrix::new(s.entries().transpose()).unwrap();
            let si = ScalingMatrix::new(s.inverse()).unwrap();
            assert_eq!(s.sign(), st.sign());
            assert_eq!(s.sign(), si.sign());
            // |S⁻¹| = |S|⁻¹.
            let abs_inv = si.abs();
            let inv_abs = s.abs().lu().try_inverse().unwrap();
            assert!((abs_inv - inv_abs).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn closed_form_agrees_with_eigen_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..10_000 {
            let m = Matrix2::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let closed = classify_closed_form_2x2(&m);
            let eig = classify_definiteness(&dm2(m)).unwrap();
            assert_eq!(closed, eig, "disagreement on {m}");
        }
    }

    #[test]
    fn rotation_grid_definiteness() {
        let step = PI / 180.0;
        for k in 0..360 {
            let theta = k as f64 * step;
            // Exclude the analytic boundaries θ = π/2, 3π/2.
            if (theta - FRAC_PI_2).abs() < 1e-12 || (theta - 3.0 * FRAC_PI_2).abs() < 1e-12 {
                continue;
            }
            let class = classify_definiteness(&dm2(rotation2(theta))).unwrap();
            let expect = if theta < FRAC_PI_2 || theta > 3.0 * FRAC_PI_2 {
                Definiteness::Positive
            } else {
                Definiteness::Negative
            };
            assert_eq!(class, expect, "theta = {theta}");
        }
    }

    #[test]
    fn augmented_set_block_structure() {
        let set = snowflake_set();
        let m = set.get(4);
        let s = m.sign();
        let e = m.entries();
        assert_eq!(e[(2, 0)], 0.0);
        assert_eq!(e[(2, 1)], 0.0);
        assert_eq!(e[(2, 2)], s);
        let _ = Vector3::new(e[(0, 2)], e[(1, 2)], e[(2, 2)]);
    }
}
