// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Rotation algebra for single-qubit gates.
//!
//! A gate on the Bloch sphere is a unit quaternion q = (w, x, y, z). The
//! quaternions q and -q describe the same physical rotation, so equality and
//! distances are always taken sign-invariantly, and the SO(3) matrix view is
//! the canonical representation when two gates are compared.
//!
//! Conventions, fixed once here and used everywhere:
//!
//! * Rotations are right-handed about their axis.
//! * `a * b` means "apply `b` first, then `a`"; the SO(3) view satisfies
//!   M(a * b) = M(a) M(b).
//! * A resonant drive pulse with phase phi rotates about the equatorial axis
//!   (cos phi, sin phi, 0).

mod clifford;

pub use clifford::{build_clifford_table, CliffordTable, Generator};

use crate::util::wrap_angle;
use std::ops::Mul;

/// A proper rotation, stored as a unit quaternion.
///
/// Construction and composition renormalize, so long products stay on the
/// unit sphere to machine precision.
#[derive(Clone, Copy, Debug)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(n > 1e-12, "degenerate quaternion");
        Rotation {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    /// Rotation by `theta` about the equatorial axis with azimuth `phi`,
    /// i.e. the axis (cos phi, sin phi, 0). This is exactly what a resonant
    /// pulse with drive phase `phi` and total area `theta` does.
    pub fn from_axis_angle(phi: f64, theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Rotation::renormalized(c, s * phi.cos(), s * phi.sin(), 0.0)
    }

    /// Rotation by `angle` about +z.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Rotation::renormalized(c, 0.0, 0.0, s)
    }

    /// Rotation by `angle` about an arbitrary (not necessarily unit) axis.
    pub fn about_axis(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        assert!(n > 1e-12, "zero rotation axis");
        let (s, c) = (angle / 2.0).sin_cos();
        Rotation::renormalized(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Quaternion components (w, x, y, z).
    pub fn quat(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn inverse(&self) -> Self {
        Rotation {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }

    /// Unit rotation axis, or None for (numerically) the identity. The sign
    /// is chosen so the angle is in [0, pi].
    pub fn axis(&self) -> Option<[f64; 3]> {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        if v < 1e-12 {
            return None;
        }
        let sign = if self.w < 0.0 { -1.0 } else { 1.0 };
        Some([
            sign * self.x / v,
            sign * self.y / v,
            sign * self.z / v,
        ])
    }

    /// SO(3) matrix view; rows index the output components of v' = M v.
    /// Identical for q and -q.
    pub fn so3(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Apply to a Bloch vector.
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.so3();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Hilbert-Schmidt (Frobenius) distance between the SO(3) views.
    /// Sign-invariant; zero iff the rotations are physically equal.
    pub fn distance_hs(&self, other: &Rotation) -> f64 {
        let a = self.so3();
        let b = other.so3();
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = a[i][j] - b[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Sign-invariant quaternion distance min(|q - p|, |q + p|). Cheaper
    /// than `distance_hs` and equivalent as an equality test.
    pub fn quat_distance(&self, other: &Rotation) -> f64 {
        let d2 = |s: f64| -> f64 { s * s };
        let minus = d2(self.w - other.w) + d2(self.x - other.x) + d2(self.y - other.y)
            + d2(self.z - other.z);
        let plus = d2(self.w + other.w) + d2(self.x + other.x) + d2(self.y + other.y)
            + d2(self.z + other.z);
        minus.min(plus).sqrt()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    /// Composition: `a * b` applies `b` first, then `a`, so that
    /// M(a * b) = M(a) M(b).
    fn mul(self, rhs: Rotation) -> Rotation {
        let (aw, ax, ay, az) = (self.w, self.x, self.y, self.z);
        let (bw, bx, by, bz) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Rotation::renormalized(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )
    }
}

/// Compose two rotations; `compose(a, b)` applies `b` first, then `a`.
pub fn compose(a: Rotation, b: Rotation) -> Rotation {
    a * b
}

/// Target gate parameterization (theta, phi, delta).
///
/// theta is the polar rotation content, phi the azimuth of the equatorial
/// part, and delta a z-axis phase: (theta, 0, 0) is a rotation in the x-z
/// plane and (0, phi, delta) is the z-rotation by -2*delta. The
/// parameterization is redundant under (theta, phi, delta) ->
/// (theta, phi + pi, delta + pi) and under theta -> 2*pi - theta with
/// delta -> delta + pi; `from_rotation` returns the canonical member with
/// theta in [0, pi].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TargetGate {
    pub theta: f64,
    pub phi: f64,
    pub delta: f64,
}

impl TargetGate {
    /// Wraps all three angles into [0, 2*pi).
    pub fn new(theta: f64, phi: f64, delta: f64) -> Self {
        TargetGate {
            theta: wrap_angle(theta),
            phi: wrap_angle(phi),
            delta: wrap_angle(delta),
        }
    }

    pub fn identity() -> Self {
        TargetGate {
            theta: 0.0,
            phi: 0.0,
            delta: 0.0,
        }
    }

    /// The rotation this gate performs.
    ///
    /// Quaternion components follow from matching the SU(2) matrix
    /// [[e^{i d} cos(t/2), e^{i p} sin(t/2)],
    ///  [-e^{-i p} sin(t/2), e^{-i d} cos(t/2)]]
    /// against w*I - i(x sx + y sy + z sz):
    /// q = (c cos d, -s sin p, -s cos p, -c sin d) with c = cos(t/2),
    /// s = sin(t/2). Unit norm for any (t, p, d).
    pub fn rotation(&self) -> Rotation {
        let (s, c) = (self.theta / 2.0).sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        let (sd, cd) = self.delta.sin_cos();
        Rotation::renormalized(c * cd, -s * sp, -s * cp, -c * sd)
    }

    /// Canonical parameters of a rotation: theta in [0, pi], phi and delta
    /// in [0, 2*pi). At theta = 0 phi is reported as 0; at theta = pi delta
    /// is reported as 0 (both are gauge there).
    pub fn from_rotation(r: &Rotation) -> Self {
        let [w, x, y, z] = r.quat();
        let c = (w * w + z * z).sqrt();
        let s = (x * x + y * y).sqrt();
        let theta = 2.0 * s.atan2(c);
        let phi = if s < 1e-12 {
            0.0
        } else {
            wrap_angle((-x).atan2(-y))
        };
        let delta = if c < 1e-12 {
            0.0
        } else {
            wrap_angle((-z).atan2(w))
        };
        TargetGate { theta, phi, delta }
    }
}
