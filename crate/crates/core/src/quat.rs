//! Unit quaternions stored as `(v, u)` = `[w, x, y, z]`, with the Hamilton
//! matrix operators that turn quaternion products into matrix-vector
//! products.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    /// Real part.
    pub v: f64,
    /// Vector part.
    pub u: Vector3<f64>,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuaternion {
    /// Builds a quaternion from `[w, x, y, z]`, renormalizing to unit norm.
    /// A zero input yields the identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Self::identity();
        }
        Self {
            v: w / n,
            u: Vector3::new(x / n, y / n, z / n),
        }
    }

    pub fn identity() -> Self {
        Self {
            v: 1.0,
            u: Vector3::zeros(),
        }
    }

    pub fn from_vector(c: &Vector4<f64>) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Rotation about +z, the planar embedding of an angle.
    pub fn from_yaw(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    /// `[w, x, y, z]`.
    pub fn coords(&self) -> Vector4<f64> {
        Vector4::new(self.v, self.u.x, self.u.y, self.u.z)
    }

    pub fn norm(&self) -> f64 {
        self.coords().norm()
    }

    pub fn conjugate(&self) -> Self {
        Self {
            v: self.v,
            u: -self.u,
        }
    }

    /// Quaternion product `self * rhs`.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let v = self.v * rhs.v - self.u.dot(&rhs.u);
        let u = self.v * rhs.u + rhs.v * self.u + self.u.cross(&rhs.u);
        Self::new(v, u.x, u.y, u.z)
    }

    /// Sign-flipped copy with non-negative real part (same rotation).
    pub fn canonical(&self) -> Self {
        if self.v < 0.0 {
            Self {
                v: -self.v,
                u: -self.u,
            }
        } else {
            *self
        }
    }

    /// Yaw angle of a rotation about z; meaningful for planar embeddings.
    pub fn yaw(&self) -> f64 {
        2.0 * self.u.z.atan2(self.v)
    }

    pub fn rotate(&self, p: &Vector3<f64>) -> Vector3<f64> {
        // p + 2v(u x p) + 2u x (u x p)
        let t = 2.0 * self.u.cross(p);
        p + self.v * t + self.u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.v, self.u.x, self.u.y, self.u.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Shepperd's method.
    pub fn from_rotation_matrix(r: &Matrix3<f64>) -> Self {
        let tr = r.trace();
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Self::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            Self::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        }
    }
}

/// `H⁺(α)` with `H⁺(α) β = α * β`.
pub fn hamilton_plus(a: &UnitQuaternion) -> Matrix4<f64> {
    let (a0, a1, a2, a3) = (a.v, a.u.x, a.u.y, a.u.z);
    Matrix4::new(
        a0, -a1, -a2, -a3, //
        a1, a0, -a3, a2, //
        a2, a3, a0, -a1, //
        a3, -a2, a1, a0,
    )
}

/// `H̄(β)` with `H̄(β) α = α * β`.
pub fn hamilton_bar(b: &UnitQuaternion) -> Matrix4<f64> {
    let (b0, b1, b2, b3) = (b.v, b.u.x, b.u.y, b.u.z);
    Matrix4::new(
        b0, -b1, -b2, -b3, //
        b1, b0, b3, -b2, //
        b2, -b3, b0, b1, //
        b3, b2, -b1, b0,
    )
}

/// Bottom three rows of [`hamilton_bar`]: `H̄*(β) α = vec(α * β)`.
pub fn hamilton_bar_star(b: &UnitQuaternion) -> Matrix3x4<f64> {
    hamilton_bar(b).fixed_rows::<3>(1).into_owned()
}

/// Angular velocity rotating `prev` into `current` over `dt`:
/// `vec(current * conj(prev)) / dt`, after flipping the product to the
/// shortest arc.
pub fn angular_velocity(
    current: &UnitQuaternion,
    prev: &UnitQuaternion,
    dt: f64,
) -> Result<Vector3<f64>> {
    if !(dt > 0.0) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    let rel = current.multiply(&prev.conjugate()).canonical();
    Ok(rel.u / dt)
}

impl Serialize for UnitQuaternion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.v, self.u.x, self.u.y, self.u.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitQuaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = <[f64; 4]>::deserialize(d)?;
        Ok(Self::new(c[0], c[1], c[2], c[3]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> UnitQuaternion {
        loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = c.iter().map(|x| x * x).sum::<f64>();
            if n > 1e-3 && n <= 1.0 {
                return UnitQuaternion::new(c[0], c[1], c[2], c[3]);
            }
        }
    }

    fn assert_quat_eq(a: &UnitQuaternion, b: &UnitQuaternion, tol: f64) {
        assert_relative_eq!(a.coords(), b.coords(), epsilon = tol);
    }

    #[test]
    fn conjugate_examples() {
        assert_quat_eq(
            &UnitQuaternion::identity().conjugate(),
            &UnitQuaternion::identity(),
            0.0,
        );
        let i = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0);
        assert_eq!(i.conjugate().coords(), Vector4::new(0.0, -1.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let e = random_quat(&mut rng);
            assert_quat_eq(&e.multiply(&e.conjugate()), &UnitQuaternion::identity(), 1e-12);
        }
    }

    #[test]
    fn basis_products() {
        let i = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = UnitQuaternion::new(0.0, 0.0, 1.0, 0.0);
        let k = UnitQuaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_quat_eq(&i.multiply(&j), &k, 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = random_quat(&mut rng);
        assert_quat_eq(&UnitQuaternion::identity().multiply(&e), &e, 1e-15);
    }

    #[test]
    fn product_matches_rotation_matrix_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a = random_quat(&mut rng);
            let b = random_quat(&mut rng);
            let via_matrix = UnitQuaternion::from_rotation_matrix(
                &(a.to_rotation_matrix() * b.to_rotation_matrix()),
            );
            let direct = a.multiply(&b);
            let d1 = (via_matrix.coords() - direct.coords()).norm();
            let d2 = (via_matrix.coords() + direct.coords()).norm();
            assert!(d1.min(d2) < 1e-9, "mismatch {d1} {d2}");
        }
    }

    #[test]
    fn hamilton_identity_and_star() {
        let id = UnitQuaternion::identity();
        assert_eq!(hamilton_plus(&id), Matrix4::identity());
        let star = hamilton_bar_star(&id);
        let mut expected = Matrix3x4::zeros();
        expected.fixed_view_mut::<3, 3>(0, 1).copy_from(&Matrix3::identity());
        assert_eq!(star, expected);
    }

    #[test]
    fn hamilton_star_rows_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let e = random_quat(&mut rng);
            let m = hamilton_bar_star(&e);
            for r in 0..3 {
                assert_relative_eq!(m.row(r).norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn star_operator_is_vector_part_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let prev = random_quat(&mut rng);
            let cur = random_quat(&mut rng);
            let lhs = hamilton_bar_star(&prev.conjugate()) * cur.coords();
            let rhs = cur.multiply(&prev.conjugate()).u;
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn angular_velocity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let e = random_quat(&mut rng);
        assert_eq!(angular_velocity(&e, &e, 0.1).unwrap().norm(), 0.0);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let w = angular_velocity(
            &UnitQuaternion::new(h, 0.0, 0.0, h),
            &UnitQuaternion::identity(),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(w, Vector3::new(0.0, 0.0, h), epsilon = 1e-15);

        assert!(angular_velocity(&e, &e, 0.0).is_err());
        assert!(angular_velocity(&e, &e, -1.0).is_err());
    }

    #[test]
    fn angular_velocity_small_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let prev = random_quat(&mut rng);
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let theta = rng.random_range(0.0..1e-3);
            let dt = 0.01;
            // rotation applied in the world frame: cur = r * prev
            let cur = UnitQuaternion::from_axis_angle(&axis, theta).multiply(&prev);
            let w = angular_velocity(&cur, &prev, dt).unwrap();
            assert_relative_eq!(w, axis * (theta / 2.0) / dt, epsilon = 1e-6);
        }
    }

    #[test]
    fn renormalizes_and_serializes_wxyz() {
        let q = UnitQuaternion::new(2.0, 0.0, 0.0, 0.0);
        assert_eq!(q, UnitQuaternion::identity());
        let s = serde_json::to_string(&UnitQuaternion::new(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(s, "[0.0,0.0,1.0,0.0]");
        let back: UnitQuaternion = serde_json::from_str("[0.0, 0.0, 0.0, 3.0]").unwrap();
        assert_eq!(back.coords(), Vector4::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn yaw_round_trip() {
        for &a in &[-3.0, -1.0, 0.0, 0.5, 2.9] {
            assert_relative_eq!(UnitQuaternion::from_yaw(a).yaw(), a, epsilon = 1e-12);
        }
    }
}
