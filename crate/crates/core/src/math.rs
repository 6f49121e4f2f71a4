//! Small rotation and vector helpers shared by the kinematics and energy code.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Cross-product matrix: `skew(x) * y == x.cross(&y)`.
pub fn skew(x: &Vec3) -> Mat3 {
    Matrix3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Rotation matrix for an axis-angle vector (direction = axis, norm = angle).
pub fn axis_angle_to_matrix(r: &Vec3) -> Mat3 {
    Rotation3::new(*r).into_inner()
}

pub fn matrix_to_axis_angle(m: &Mat3) -> Vec3 {
    Rotation3::from_matrix_unchecked(*m).scaled_axis()
}

pub fn quaternion_to_axis_angle(q: &UnitQuaternion<f64>) -> Vec3 {
    q.scaled_axis()
}

/// Left Jacobian of SO(3) at `r`.
///
/// For `R(r) = exp([r]x)`, a parameter perturbation `dr` rotates the frame by the
/// world-frame angle `J_l(r) * dr`:  `R(r + dr) ~ exp([J_l dr]x) R(r)`.
pub fn so3_left_jacobian(r: &Vec3) -> Mat3 {
    let theta2 = r.norm_squared();
    let k = skew(r);
    let (a, b) = if theta2 < 1e-10 {
        // series expansions of (1 - cos t)/t^2 and (t - sin t)/t^3
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Mat3::identity() + k * a + k * k * b
}

/// Rotation from roll-pitch-yaw angles (fixed-axis X, then Y, then Z).
pub fn rpy_to_matrix(rpy: &[f64; 3]) -> Mat3 {
    Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).into_inner()
}

pub fn matrix_to_rpy(m: &Mat3) -> [f64; 3] {
    let (r, p, y) = Rotation3::from_matrix_unchecked(*m).euler_angles();
    [r, p, y]
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Any unit vector orthogonal to `n` (which must be unit length).
pub fn orthonormal_tangent(n: &Vec3) -> Vec3 {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    (helper - n * n.dot(&helper)).normalize()
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
