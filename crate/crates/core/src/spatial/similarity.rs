use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Wraps an angle difference into [−π, π): mod(δ + π, 2π) − π with a
/// floored modulus.
pub fn wrap<T: Scalar>(delta: T) -> T {
    let tau = T::TAU();
    let pi = T::PI();
    let mut r = (delta + pi) % tau;
    if r < T::zero() {
        r += tau;
    }
    if r >= tau {
        r -= tau;
    }
    r - pi
}

/// Translation (normalized coordinates), counter-clockwise rotation in
/// radians, and uniform scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidParams<T> {
    pub tx: T,
    pub ty: T,
    pub theta: T,
    pub s: T,
}

impl<T: Scalar> RigidParams<T> {
    pub fn new(tx: T, ty: T, theta: T, s: T) -> Self {
        Self { tx, ty, theta, s }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    pub fn from_slice(v: &[T]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.tx, self.ty, self.theta, self.s]
    }

    pub fn cast<U: Scalar>(&self) -> RigidParams<U> {
        let c = |v: T| U::from_f64c(v.to_f64c());
        RigidParams::new(c(self.tx), c(self.ty), c(self.theta), c(self.s))
    }

    /// Same transform with θ in its canonical range [−π, π).
    pub fn canonical(&self) -> Self {
        Self {
            theta: wrap(self.theta),
            ..*self
        }
    }
}

/// 3×3 homogeneous matrix of a similarity transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityMatrix<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Self { m }
    }

    /// Inverse of a matrix whose upper-left block is s·R.
    pub fn inverse(&self) -> Self {
        let m = &self.m;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let a = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let tx = -(a[0][0] * m[0][2] + a[0][1] * m[1][2]);
        let ty = -(a[1][0] * m[0][2] + a[1][1] * m[1][2]);
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[a[0][0], a[0][1], tx], [a[1][0], a[1][1], ty], [z, z, o]],
        }
    }

    pub fn apply(&self, x: T, y: T) -> (T, T) {
        apply_rows(&self.affine_rows(), x, y)
    }

    pub fn affine_rows(&self) -> [[T; 3]; 2] {
        [self.m[0], self.m[1]]
    }

    /// Checks the similarity invariants: last row (0, 0, 1), equal-norm
    /// orthogonal columns in the upper-left block.
    pub fn is_similarity(&self, tol: T) -> bool {
        let m = &self.m;
        let (z, o) = (T::zero(), T::one());
        let bottom = (m[2][0] - z).abs() <= tol && (m[2][1] - z).abs() <= tol && (m[2][2] - o).abs() <= tol;
        let n0 = m[0][0] * m[0][0] + m[1][0] * m[1][0];
        let n1 = m[0][1] * m[0][1] + m[1][1] * m[1][1];
        let dot = m[0][0] * m[0][1] + m[1][0] * m[1][1];
        let scale = n0.max(o);
        bottom && (n0 - n1).abs() <= tol * scale && dot.abs() <= tol * scale
    }
}

pub(crate) fn apply_rows<T: Scalar>(m: &[[T; 3]; 2], x: T, y: T) -> (T, T) {
    (
        m[0][0] * x + m[0][1] * y + m[0][2],
        m[1][0] * x + m[1][1] * y + m[1][2],
    )
}

/// M = S·R·T.
pub fn compose_similarity<T: Scalar>(p: &RigidParams<T>) -> SimilarityMatrix<T> {
    GridKind::Full.matrix(p)
}

fn similarity_tolerance<T: Scalar>() -> T {
    T::from_f64c(1e-9).max(T::epsilon() * T::from_f64c(64.0))
}

/// Recovers (t_x, t_y, θ, s) from a similarity matrix, with θ in [−π, π).
pub fn decompose_similarity<T: Scalar>(m: &SimilarityMatrix<T>) -> Result<RigidParams<T>> {
    let tol = similarity_tolerance::<T>();
    let s = (m.m[0][0] * m.m[0][0] + m.m[1][0] * m.m[1][0]).sqrt();
    if !(s > T::from_f64c(1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "degenerate similarity matrix (scale {s})"
        )));
    }
    if !m.is_similarity(tol) {
        return Err(Error::InvalidArgument(
            "matrix is not a rotation-scale-translation similarity".into(),
        ));
    }
    let theta = wrap(m.m[1][0].atan2(m.m[0][0]));
    let (c, sn) = (theta.cos(), theta.sin());
    let (vx, vy) = (m.m[0][2] / s, m.m[1][2] / s);
    // t = Rᵀ v
    let tx = c * vx + sn * vy;
    let ty = -sn * vx + c * vy;
    Ok(RigidParams::new(tx, ty, theta, s))
}

/// Which prefix of the S·R·T chain a grid is transformed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// T
    Translation,
    /// R·T
    RotationTranslation,
    /// S·R·T
    Full,
}

impl GridKind {
    pub const ALL: [GridKind; 3] = [
        GridKind::Translation,
        GridKind::RotationTranslation,
        GridKind::Full,
    ];

    pub fn matrix<T: Scalar>(self, p: &RigidParams<T>) -> SimilarityMatrix<T> {
        let (o, z) = (T::one(), T::zero());
        let (c, sn, scale) = match self {
            GridKind::Translation => (o, z, o),
            GridKind::RotationTranslation => (p.theta.cos(), p.theta.sin(), o),
            GridKind::Full => (p.theta.cos(), p.theta.sin(), p.s),
        };
        SimilarityMatrix {
            m: [
                [scale * c, -(scale * sn), scale * (c * p.tx - sn * p.ty)],
                [scale * sn, scale * c, scale * (sn * p.tx + c * p.ty)],
                [z, z, o],
            ],
        }
    }

    /// Chains dL/d(affine rows) back to dL/d(t_x, t_y, θ, s).
    pub fn param_gradient<T: Scalar>(self, p: &RigidParams<T>, dm: &[[T; 3]; 2]) -> [T; 4] {
        match self {
            GridKind::Translation => [dm[0][2], dm[1][2], T::zero(), T::zero()],
            GridKind::RotationTranslation | GridKind::Full => {
                let (c, sn) = (p.theta.cos(), p.theta.sin());
                let sigma = if self == GridKind::Full { p.s } else { T::one() };
                let dtx = sigma * (c * dm[0][2] + sn * dm[1][2]);
                let dty = sigma * (-sn * dm[0][2] + c * dm[1][2]);
                let dtheta = sigma
                    * (-sn * dm[0][0] - c * dm[0][1]
                        + (-sn * p.tx - c * p.ty) * dm[0][2]
                        + c * dm[1][0]
                        - sn * dm[1][1]
                        + (c * p.tx - sn * p.ty) * dm[1][2]);
                let ds = if self == GridKind::Full {
                    c * dm[0][0] - sn * dm[0][1]
                        + (c * p.tx - sn * p.ty) * dm[0][2]
                        + sn * dm[1][0]
                        + c * dm[1][1]
                        + (sn * p.tx + c * p.ty) * dm[1][2]
                } else {
                    T::zero()
                };
                [dtx, dty, dtheta, ds]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &SimilarityMatrix<f64>, b: [[f64; 3]; 3]) -> bool {
        a.m.iter()
            .flatten()
            .zip(b.iter().flatten())
            .all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn identity_params_compose_to_identity() {
        let m = compose_similarity(&RigidParams::<f64>::identity());
        assert!(close(&m, SimilarityMatrix::identity().m));
    }

    #[test]
    fn translation_then_scale() {
        let m = compose_similarity(&RigidParams::new(0.5, 0.0, 0.0, 2.0));
        assert!(close(&m, [[2., 0., 1.], [0., 2., 0.], [0., 0., 1.]]));
    }

    #[test]
    fn quarter_turn() {
        let m = compose_similarity(&RigidParams::new(0.0, 0.0, PI / 2.0, 1.0));
        assert!(close(&m, [[0., -1., 0.], [1., 0., 0.], [0., 0., 1.]]));
    }

    #[test]
    fn compose_equals_product_of_factors() {
        let p = RigidParams::new(0.3, -0.2, 0.9, 1.7);
        let t = GridKind::Translation.matrix(&p);
        let r = GridKind::RotationTranslation.matrix(&RigidParams::new(0.0, 0.0, p.theta, 1.0));
        let s = SimilarityMatrix::from_rows([[p.s, 0., 0.], [0., p.s, 0.], [0., 0., 1.]]);
        let srt = s.mul(&r).mul(&t);
        assert!(close(&compose_similarity(&p), srt.m));
        assert!(close(&GridKind::RotationTranslation.matrix(&p), r.mul(&t).m));
    }

    #[test]
    fn decompose_inverts_examples() {
        let p = decompose_similarity(&SimilarityMatrix::<f64>::identity()).unwrap();
        assert_eq!(p, RigidParams::identity());
        let m = SimilarityMatrix::<f64>::from_rows([[2., 0., 1.], [0., 2., 0.], [0., 0., 1.]]);
        let p = decompose_similarity(&m).unwrap();
        assert!((p.tx - 0.5).abs() < 1e-12 && p.ty.abs() < 1e-12);
        assert!(p.theta.abs() < 1e-12 && (p.s - 2.0).abs() < 1e-12);
        let q = RigidParams::<f64>::new(0.3, -0.1, 1.0, 0.7);
        let r = decompose_similarity(&compose_similarity(&q)).unwrap();
        for (a, b) in r.to_array().iter().zip(q.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn decompose_rejects_degenerate_and_shear() {
        let zero = SimilarityMatrix::from_rows([[0., 0., 1.], [0., 0., 0.], [0., 0., 1.]]);
        assert!(decompose_similarity(&zero).is_err());
        let shear = SimilarityMatrix::from_rows([[1., 0.5, 0.], [0., 1., 0.], [0., 0., 1.]]);
        assert!(decompose_similarity(&shear).is_err());
    }

    #[test]
    fn inverse_undoes_matrix() {
        let m = compose_similarity(&RigidParams::new(0.2, 0.1, -2.0, 0.6));
        assert!(close(&m.mul(&m.inverse()), SimilarityMatrix::identity().m));
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(0.0f64), 0.0);
        assert_eq!(wrap(PI), -PI);
        assert!((wrap(1.5 * PI) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap(-PI), -PI);
    }
}
