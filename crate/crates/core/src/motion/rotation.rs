//! 3×3 rotation matrices, intrinsic Euler angles and the exponential map.

use core::f64::consts::PI;

use crate::math;

pub type Vec3 = [f64; 3];

/// Row-major 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

pub fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn apply(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn frobenius_distance(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = a[i][j] - b[i][j];
            s += d * d;
        }
    }
    math::sqrt(s)
}

/// Rotation by `angle` radians about a coordinate axis.
pub fn axis_rotation(axis: Axis, angle: f64) -> Mat3 {
    let (s, c) = (math::sin(angle), math::cos(angle));
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// Intrinsic composition `R = R_a(α)·R_b(β)·R_c(γ)` for channel order `(a, b, c)`.
pub fn from_euler(order: [Axis; 3], angles: Vec3) -> Mat3 {
    let r = mul(
        &axis_rotation(order[0], angles[0]),
        &axis_rotation(order[1], angles[1]),
    );
    mul(&r, &axis_rotation(order[2], angles[2]))
}

/// Inverse of [`from_euler`] for Tait-Bryan orders (three distinct axes).
/// At gimbal lock the last angle is set to zero.
pub fn to_euler(order: [Axis; 3], r: &Mat3) -> Vec3 {
    let (i, j, k) = (order[0].index(), order[1].index(), order[2].index());
    let s = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let sb = (s * r[i][k]).clamp(-1.0, 1.0);
    let beta = math::asin(sb);
    if sb.abs() < 1.0 - 1e-12 {
        let alpha = math::atan2(-s * r[j][k], r[k][k]);
        let gamma = math::atan2(-s * r[i][j], r[i][i]);
        [alpha, beta, gamma]
    } else {
        let alpha = math::atan2(s * r[k][j], r[j][j]);
        [alpha, beta, 0.0]
    }
}

/// Unit quaternion `(w, x, y, z)` with `w ≥ 0`.
fn quaternion(r: &Mat3) -> [f64; 4] {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let q = if tr > 0.0 {
        let s = math::sqrt(tr + 1.0) * 2.0;
        [
            0.25 * s,
            (r[2][1] - r[1][2]) / s,
            (r[0][2] - r[2][0]) / s,
            (r[1][0] - r[0][1]) / s,
        ]
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = math::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]) * 2.0;
        [
            (r[2][1] - r[1][2]) / s,
            0.25 * s,
            (r[0][1] + r[1][0]) / s,
            (r[0][2] + r[2][0]) / s,
        ]
    } else if r[1][1] > r[2][2] {
        let s = math::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]) * 2.0;
        [
            (r[0][2] - r[2][0]) / s,
            (r[0][1] + r[1][0]) / s,
            0.25 * s,
            (r[1][2] + r[2][1]) / s,
        ]
    } else {
        let s = math::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]) * 2.0;
        [
            (r[1][0] - r[0][1]) / s,
            (r[0][2] + r[2][0]) / s,
            (r[1][2] + r[2][1]) / s,
            0.25 * s,
        ]
    };
    let n = math::sqrt(q.iter().map(|c| c * c).sum());
    let mut q = q.map(|c| c / n);
    if q[0] < 0.0 {
        q = q.map(|c| -c);
    }
    q
}

/// Rotation vector (axis · angle) of `r`, with the angle in `[0, π]`.
///
/// At exactly π the axis sign is fixed so that its first nonzero component
/// is positive.
pub fn log_map(r: &Mat3) -> Vec3 {
    let [w, x, y, z] = quaternion(r);
    let vn = math::sqrt(x * x + y * y + z * z);
    if vn < 1e-300 {
        return [0.0; 3];
    }
    let angle = 2.0 * math::atan2(vn, w);
    let mut v = [x / vn * angle, y / vn * angle, z / vn * angle];
    if w == 0.0 {
        canonicalize_half_turn(&mut v);
    }
    v
}

fn canonicalize_half_turn(v: &mut Vec3) {
    if let Some(first) = v.iter().copied().find(|c| *c != 0.0) {
        if first < 0.0 {
            *v = v.map(|c| -c);
        }
    }
}

/// Wrap a rotation vector so its angle lies in `[0, π]`.
pub fn canonicalize(v: Vec3) -> Vec3 {
    let angle = norm(&v);
    if angle <= PI {
        let mut v = v;
        if angle == PI {
            canonicalize_half_turn(&mut v);
        }
        return v;
    }
    log_map(&exp_map(v))
}

pub fn norm(v: &Vec3) -> f64 {
    math::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Rodrigues' formula.
pub fn exp_map(v: Vec3) -> Mat3 {
    let theta2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let theta = math::sqrt(theta2);
    let (a, b) = if theta < 1e-6 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (math::sin(theta) / theta, (1.0 - math::cos(theta)) / theta2)
    };
    let k = [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]];
    let k2 = mul(&k, &k);
    let mut out = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    const ORDERS: [[Axis; 3]; 6] = [
        [Axis::X, Axis::Y, Axis::Z],
        [Axis::X, Axis::Z, Axis::Y],
        [Axis::Y, Axis::X, Axis::Z],
        [Axis::Y, Axis::Z, Axis::X],
        [Axis::Z, Axis::X, Axis::Y],
        [Axis::Z, Axis::Y, Axis::X],
    ];

    fn random_rotation(rng: &mut Rng) -> Mat3 {
        let v = [rng.normal(), rng.normal(), rng.normal()];
        let n = norm(&v);
        let angle = rng.uniform() * PI;
        exp_map([v[0] / n * angle, v[1] / n * angle, v[2] / n * angle])
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_rotation(Axis::Z, PI / 2.0);
        let v = log_map(&r);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
        assert!((v[2] - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn half_turn_sign_is_fixed() {
        let a = exp_map([PI, 0.0, 0.0]);
        let b = exp_map([-PI, 0.0, 0.0]);
        assert!(frobenius_distance(&a, &b) < 1e-12);
        assert!(frobenius_distance(&a, &axis_rotation(Axis::X, PI)) < 1e-12);
        let v = log_map(&axis_rotation(Axis::X, PI));
        assert!((v[0] - PI).abs() < 1e-12, "{v:?}");
        assert_eq!(canonicalize([-PI, 0.0, 0.0]), [PI, 0.0, 0.0]);
    }

    #[test]
    fn angle_near_two_pi_wraps() {
        let v = canonicalize([2.0 * PI - 1e-3, 0.0, 0.0]);
        assert!((v[0] + 1e-3).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn euler_round_trip_all_orders() {
        let mut rng = Rng::new(3);
        for order in ORDERS {
            for _ in 0..200 {
                let r = random_rotation(&mut rng);
                let back = from_euler(order, to_euler(order, &r));
                assert!(frobenius_distance(&r, &back) < 1e-9, "{order:?}");
            }
            // gimbal lock
            let r = from_euler(order, [0.3, PI / 2.0, 0.2]);
            let back = from_euler(order, to_euler(order, &r));
            assert!(frobenius_distance(&r, &back) < 1e-9, "{order:?}");
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = Rng::new(9);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let v = log_map(&r);
            assert!(norm(&v) <= PI + 1e-12);
            assert!(frobenius_distance(&exp_map(v), &r) < 1e-9);
        }
    }
}
