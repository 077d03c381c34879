//! Small numeric helpers shared across the crate.

use nalgebra::{Matrix3, Quaternion, Vector3, Vector4};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`] with respect to its argument.
pub fn sigmoid_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Inverse of [`sigmoid`]; `p` must lie strictly inside (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix for a quaternion, normalizing first.
///
/// Optimizer steps leave quaternions slightly off unit length, so every
/// consumer goes through this normalization. Gradients must account for it;
/// see [`quat_rotation_backward`].
pub fn quat_to_rotation(q: &Quaternion<f64>) -> Matrix3<f64> {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
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

/// Pull a gradient with respect to the rotation matrix back onto the raw
/// (unnormalized) quaternion, including the normalization Jacobian.
///
/// Returns the gradient in `(w, x, y, z)` order.
pub fn quat_rotation_backward(q: &Quaternion<f64>, grad_r: &Matrix3<f64>) -> Vector4<f64> {
    let n = q.norm();
    let qn = Vector4::new(q.w / n, q.i / n, q.j / n, q.k / n);
    let (w, x, y, z) = (qn[0], qn[1], qn[2], qn[3]);

    // dR/dq at the normalized quaternion.
    let dr_dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dr_dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dr_dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dr_dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;

    let dot = |m: &Matrix3<f64>| m.component_mul(grad_r).sum();
    let g_unit = Vector4::new(dot(&dr_dw), dot(&dr_dx), dot(&dr_dy), dot(&dr_dz));

    // Through q_n = q / |q|: (I - q_n q_nᵀ) / |q|.
    (g_unit - qn * qn.dot(&g_unit)) / n
}

/// Peak signal-to-noise ratio in dB for signals in [0, 1].
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Deterministic quasi-uniform directions on the unit sphere.
///
/// Fibonacci lattice; `i` in `0..n`.
pub fn fibonacci_sphere(i: usize, n: usize) -> Vector3<f64> {
    debug_assert!(n > 0 && i < n);
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let z = if n == 1 {
        0.0
    } else {
        1.0 - 2.0 * (i as f64 + 0.5) / n as f64
    };
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden * i as f64;
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_symmetry_and_midpoint() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(3.0) + sigmoid(-3.0), 1.0, epsilon = 1e-15);
        assert!(sigmoid(40.0) <= 1.0 && sigmoid(40.0) > 0.999_999);
        assert!(sigmoid(-40.0) >= 0.0 && sigmoid(-40.0) < 1e-6);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &p in &[1e-6, 0.25, 0.5, 0.75, 1.0 - 1e-6] {
            assert_relative_eq!(sigmoid(logit(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_is_orthonormal_for_random_quaternions() {
        let mut state = 0x12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..100 {
            let q = Quaternion::new(next(), next(), next(), next());
            if q.norm() < 1e-3 {
                continue;
            }
            let r = quat_to_rotation(&q);
            let should_be_eye = r.transpose() * r;
            assert_relative_eq!(should_be_eye, Matrix3::identity(), epsilon = 1e-12);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quat_backward_matches_finite_differences() {
        let q = Quaternion::new(0.9, -0.3, 0.2, 0.1);
        // Arbitrary smooth scalar of R: weighted element sum.
        let weights = Matrix3::new(0.3, -1.2, 0.7, 0.05, 0.9, -0.4, 1.1, -0.6, 0.2);
        let f = |q: &Quaternion<f64>| quat_to_rotation(q).component_mul(&weights).sum();
        let grad = quat_rotation_backward(&q, &weights);
        let h = 1e-6;
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            match k {
                0 => {
                    qp.w += h;
                    qm.w -= h;
                }
                1 => {
                    qp.i += h;
                    qm.i -= h;
                }
                2 => {
                    qp.j += h;
                    qm.j -= h;
                }
                _ => {
                    qp.k += h;
                    qm.k -= h;
                }
            }
            let fd = (f(&qp) - f(&qm)) / (2.0 * h);
            assert_relative_eq!(grad[k], fd, epsilon = 1e-8, max_relative = 1e-6);
        }
    }

    #[test]
    fn fibonacci_sphere_is_unit_and_spread() {
        let n = 500;
        let mut mean = Vector3::zeros();
        for i in 0..n {
            let v = fibonacci_sphere(i, n);
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
            mean += v;
        }
        assert!((mean / n as f64).norm() < 0.01);
    }
}
