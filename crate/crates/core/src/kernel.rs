//! Per-step state updates: relaxation/rotation splitting and the stepped
//! 4- and 7-element magnetization updates.
//!
//! All fields are gamma-premultiplied and expressed in rad/s, so the
//! gyromagnetic ratio appears only where sequences are loaded. A step rotates
//! by `theta = -|b| * dt` about `u = b / |b|`, then applies relaxation. The
//! rotation is split into an xy-axis part (from B1) and a z part (from the
//! effective Bz), which is what lets the z rotation's frequency derivative be
//! propagated alongside the magnetization.

/// 7-element state: (Mx, My, Mz, 1, dMx/dw, dMy/dw, dMz/dw).
///
/// Element 3 is the affine constant and stays exactly 1 through every update.
/// The derivative block has units of seconds (w is in rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mag7(pub [f64; 7]);

impl Mag7 {
    /// Thermal equilibrium: magnetization along +z, zero derivative.
    pub fn equilibrium() -> Self {
        Mag7([0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn mx(&self) -> f64 {
        self.0[0]
    }
    pub fn my(&self) -> f64 {
        self.0[1]
    }
    pub fn mz(&self) -> f64 {
        self.0[2]
    }
    pub fn dmx(&self) -> f64 {
        self.0[4]
    }
    pub fn dmy(&self) -> f64 {
        self.0[5]
    }
    pub fn dmz(&self) -> f64 {
        self.0[6]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// One piecewise-constant field interval. `b1x`, `b1y`, `bz` are
/// gamma-scaled (rad/s); `bz` is the effective z field evaluated at zero
/// off-resonance perturbation. `dt` is in seconds.
#[derive(Debug, Clone, Copy)]
pub struct FieldStep {
    pub b1x: f64,
    pub b1y: f64,
    pub bz: f64,
    pub dt: f64,
}

/// Relaxation factors for a fixed step length and tissue.
#[derive(Debug, Clone, Copy)]
pub struct StepFactors {
    pub e2: f64,
    pub e1: f64,
    pub recovery: f64,
}

impl StepFactors {
    pub fn new(dt_s: f64, t1_s: f64, t2_s: f64) -> Self {
        let e1 = (-dt_s / t1_s).exp();
        StepFactors {
            e2: (-dt_s / t2_s).exp(),
            e1,
            recovery: 1.0 - e1,
        }
    }
}

/// Row-major 3x3 matrix. Used for rotation construction and test oracles;
/// the stepping hot path applies rotations without materializing matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub fn identity() -> Self {
        Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Rotation by `theta` about the unit axis `u` (Rodrigues form).
///
/// The caller owns the field convention `u = b/|b|`, `theta = -|b| dt`;
/// see [`rot3_from_field`] for that wrapper.
pub fn rot3(u: [f64; 3], theta: f64) -> Mat3 {
    debug_assert!(
        ((u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt() - 1.0).abs() < 1e-12,
        "rot3 axis must be unit length"
    );
    let (s, c) = theta.sin_cos();
    let v = 1.0 - c;
    let (ux, uy, uz) = (u[0], u[1], u[2]);
    Mat3([
        [
            c + ux * ux * v,
            -uz * s + ux * uy * v,
            uy * s + ux * uz * v,
        ],
        [
            uz * s + ux * uy * v,
            c + uy * uy * v,
            -ux * s + uy * uz * v,
        ],
        [
            -uy * s + ux * uz * v,
            ux * s + uy * uz * v,
            c + uz * uz * v,
        ],
    ])
}

/// Rotation for one field step: `u = b/|b|`, `theta = -|b| dt`.
/// A zero field has no defined axis; the limit is the identity.
pub fn rot3_from_field(b: [f64; 3], dt: f64) -> Mat3 {
    let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if norm == 0.0 {
        return Mat3::identity();
    }
    rot3([b[0] / norm, b[1] / norm, b[2] / norm], -norm * dt)
}

/// Splits a field step into (R3xy, R3z, dR3z/dw).
///
/// R3xy is the rotation with bz zeroed, R3z the z rotation by
/// `theta_z = -bz dt`, and dR3z the derivative of R3z with respect to the
/// frequency perturbation (`d theta_z / dw = -dt`).
pub fn split_rotation(field: &FieldStep) -> (Mat3, Mat3, Mat3) {
    let rxy = rot3_from_field([field.b1x, field.b1y, 0.0], field.dt);
    let theta_z = -field.bz * field.dt;
    let (s, c) = theta_z.sin_cos();
    let rz = Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]);
    let dtheta = -field.dt;
    let drz = Mat3([
        [-s * dtheta, -c * dtheta, 0.0],
        [c * dtheta, -s * dtheta, 0.0],
        [0.0, 0.0, 0.0],
    ]);
    (rxy, rz, drz)
}

/// Precomputed xy rotation of one step: axis and angle terms shared by every
/// isochromat (B1 does not depend on position).
#[derive(Debug, Clone, Copy)]
pub struct XyRot {
    pub ux: f64,
    pub uy: f64,
    pub sin: f64,
    pub cos: f64,
}

impl XyRot {
    /// `None` when B1 is zero for the step (identity rotation).
    pub fn from_b1(b1x: f64, b1y: f64, dt: f64) -> Option<XyRot> {
        let norm = (b1x * b1x + b1y * b1y).sqrt();
        if norm == 0.0 {
            return None;
        }
        let (sin, cos) = (-norm * dt).sin_cos();
        Some(XyRot {
            ux: b1x / norm,
            uy: b1y / norm,
            sin,
            cos,
        })
    }

    #[inline]
    fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let d = self.ux * v[0] + self.uy * v[1];
        let vc = 1.0 - self.cos;
        [
            v[0] * self.cos + self.uy * v[2] * self.sin + self.ux * d * vc,
            v[1] * self.cos - self.ux * v[2] * self.sin + self.uy * d * vc,
            v[2] * self.cos + (self.ux * v[1] - self.uy * v[0]) * self.sin,
        ]
    }
}

#[inline]
fn rotate_z(x: f64, y: f64, zc: f64, zs: f64) -> (f64, f64) {
    (x * zc - y * zs, x * zs + y * zc)
}

/// Stepped update of the first four elements with prepared rotation terms.
///
/// `(zc, zs)` are cos/sin of `theta_z = -bz dt`. Element 3 is untouched.
#[inline]
pub fn step_m4_prepared(
    m: &mut [f64; 4],
    xy: Option<&XyRot>,
    zc: f64,
    zs: f64,
    f: &StepFactors,
) {
    let (x, y) = rotate_z(m[0], m[1], zc, zs);
    let v = match xy {
        Some(r) => r.apply([x, y, m[2]]),
        None => [x, y, m[2]],
    };
    m[0] = f.e2 * v[0];
    m[1] = f.e2 * v[1];
    m[2] = f.e1 * v[2] + f.recovery;
}

/// New derivative block computed from the OLD state: the rotated old
/// derivative plus the frequency sensitivity of the z rotation applied to
/// the old magnetization, then relaxation.
#[inline]
fn deriv_update(s: &[f64; 7], xy: Option<&XyRot>, zc: f64, zs: f64, dt: f64, f: &StepFactors) -> [f64; 3] {
    // dR3z * m_old, with d(theta_z)/dw = -dt; third component is zero.
    let wx = -dt * (-zs * s[0] - zc * s[1]);
    let wy = -dt * (zc * s[0] - zs * s[1]);
    // R3z * dm_old.
    let (rdx, rdy) = rotate_z(s[4], s[5], zc, zs);
    let t = [wx + rdx, wy + rdy, s[6]];
    let d = match xy {
        Some(r) => r.apply(t),
        None => t,
    };
    [f.e2 * d[0], f.e2 * d[1], f.e1 * d[2]]
}

/// Stepped update of the full 7-element state with prepared rotation terms.
///
/// The first four elements get exactly the [`step_m4_prepared`] arithmetic.
#[inline]
pub fn step_m7_prepared(
    m: &mut Mag7,
    xy: Option<&XyRot>,
    zc: f64,
    zs: f64,
    dt: f64,
    f: &StepFactors,
) {
    let s = &mut m.0;
    let d = deriv_update(s, xy, zc, zs, dt, f);
    let mut m4 = [s[0], s[1], s[2], s[3]];
    step_m4_prepared(&mut m4, xy, zc, zs, f);
    s[0] = m4[0];
    s[1] = m4[1];
    s[2] = m4[2];
    s[4] = d[0];
    s[5] = d[1];
    s[6] = d[2];
}

/// Updates only the derivative block, leaving elements 0..4 untouched.
/// Used by the combined-transition seed construction, where the shared
/// magnetization part is stepped once and copied.
#[inline]
pub fn step_deriv_prepared(
    m: &mut Mag7,
    xy: Option<&XyRot>,
    zc: f64,
    zs: f64,
    dt: f64,
    f: &StepFactors,
) {
    let d = deriv_update(&m.0, xy, zc, zs, dt, f);
    m.0[4] = d[0];
    m.0[5] = d[1];
    m.0[6] = d[2];
}

/// Stepped M4 update for one piecewise-constant field interval.
pub fn step_m4(m: &mut [f64; 4], field: &FieldStep, f: &StepFactors) {
    let xy = XyRot::from_b1(field.b1x, field.b1y, field.dt);
    let (zs, zc) = (-field.bz * field.dt).sin_cos();
    step_m4_prepared(m, xy.as_ref(), zc, zs, f);
}

/// Stepped M7 update for one piecewise-constant field interval.
pub fn step_m7(m: &mut Mag7, field: &FieldStep, f: &StepFactors) {
    let xy = XyRot::from_b1(field.b1x, field.b1y, field.dt);
    let (zs, zc) = (-field.bz * field.dt).sin_cos();
    step_m7_prepared(m, xy.as_ref(), zc, zs, field.dt, f);
}

/// Pure rotation of magnetization and derivative block, no relaxation and no
/// derivative accrual. Models an instantaneous RF pulse: rotation by `flip`
/// about the in-plane axis `(cos phase, sin phase, 0)`.
pub fn apply_ideal_pulse(m: &mut Mag7, flip: f64, phase: f64) {
    let r = rot3([phase.cos(), phase.sin(), 0.0], -flip);
    let m3 = r.mul_vec([m.0[0], m.0[1], m.0[2]]);
    let d3 = r.mul_vec([m.0[4], m.0[5], m.0[6]]);
    m.0[0] = m3[0];
    m.0[1] = m3[1];
    m.0[2] = m3[2];
    m.0[4] = d3[0];
    m.0[5] = d3[1];
    m.0[6] = d3[2];
}

/// Perfect spoiling: transverse magnetization and its frequency derivative
/// are destroyed; longitudinal components survive.
pub fn apply_spoil(m: &mut Mag7) {
    m.0[0] = 0.0;
    m.0[1] = 0.0;
    m.0[4] = 0.0;
    m.0[5] = 0.0;
}
