//! Closed-form propagation of the state across RF-free intervals.
//!
//! Without B1 the transverse magnetization just rotates and decays, so an
//! interval of any length collapses to one update: the accumulated z-field
//! phase plus the two relaxation factors. The frequency derivative has an
//! equally simple closed form: it co-rotates and additionally accrues
//! `-i * duration * Mxy` because the phase integral is linear in the
//! off-resonance perturbation.

use crate::{Error, Result};

/// One RF-free interval reduced to the two numbers the propagator needs.
///
/// `bz_integral` is the accumulated z-field phase in rad at zero frequency
/// perturbation: gradients evaluated at the isochromat position plus the
/// static off-resonance terms times the duration.
#[derive(Debug, Clone, Copy)]
pub struct FreeSegment {
    pub duration_s: f64,
    pub bz_integral: f64,
}

impl FreeSegment {
    pub fn new(duration_s: f64, bz_integral: f64) -> Result<Self> {
        if duration_s < 0.0 || !duration_s.is_finite() {
            return Err(Error::Argument(format!(
                "free segment duration must be non-negative, got {duration_s}"
            )));
        }
        Ok(FreeSegment {
            duration_s,
            bz_integral,
        })
    }
}

/// Accumulated z-field phase for a piecewise-constant gradient train.
///
/// Returns `2*pi*gamma * sum(G.r * dtau) + 2*pi*(db0 + shift) * duration`
/// in rad, with `gamma_hz_per_t` in Hz/T, gradients in T/m, position in m
/// and frequency offsets in Hz.
pub fn bz_integral(
    gradient_segments: &[(f64, [f64; 3])],
    position: [f64; 3],
    db0_hz: f64,
    shift_hz: f64,
    duration_s: f64,
    gamma_hz_per_t: f64,
) -> Result<f64> {
    let total: f64 = gradient_segments.iter().map(|(d, _)| d).sum();
    if (total - duration_s).abs() > 1e-12 * duration_s.max(1e-9) {
        return Err(Error::Argument(format!(
            "gradient segment durations sum to {total} s, expected {duration_s} s"
        )));
    }
    let two_pi = std::f64::consts::TAU;
    let mut phase = 0.0;
    for (dtau, g) in gradient_segments {
        let proj = g[0] * position[0] + g[1] * position[1] + g[2] * position[2];
        phase += two_pi * gamma_hz_per_t * proj * dtau;
    }
    Ok(phase + two_pi * (db0_hz + shift_hz) * duration_s)
}

/// Relaxation factors of one free interval, reusable across isochromats or
/// equal-length pieces.
#[derive(Debug, Clone, Copy)]
pub struct FreeFactors {
    pub e2: f64,
    pub e1: f64,
}

impl FreeFactors {
    pub fn new(duration_s: f64, t1_s: f64, t2_s: f64) -> Self {
        FreeFactors {
            e2: (-duration_s / t2_s).exp(),
            e1: (-duration_s / t1_s).exp(),
        }
    }
}

/// Shared magnetization part of the free update; both state widths run this
/// exact arithmetic.
#[inline]
fn free_m3(v: &mut [f64], f: &FreeFactors, s: f64, c: f64) -> (f64, f64) {
    let rx = v[0] * c - v[1] * s;
    let ry = v[0] * s + v[1] * c;
    v[0] = f.e2 * rx;
    v[1] = f.e2 * ry;
    v[2] = 1.0 + (v[2] - 1.0) * f.e1;
    (rx, ry)
}

/// In-place update of the first four state elements across a free interval,
/// with precomputed relaxation factors.
#[inline]
pub fn propagate_free_m4_with(m: &mut [f64; 4], f: &FreeFactors, bz_integral: f64) {
    let (s, c) = (-bz_integral).sin_cos();
    free_m3(m, f, s, c);
}

/// In-place update of the full 7-element state across a free interval, with
/// precomputed relaxation factors.
///
/// The magnetization part is the exact arithmetic of
/// [`propagate_free_m4_with`]; the transverse derivative co-rotates and
/// accrues `-i * tau * Mxy_rotated` before the shared T2 decay, and the
/// longitudinal derivative only decays.
#[inline]
pub fn propagate_free_m7_with(
    m: &mut crate::kernel::Mag7,
    f: &FreeFactors,
    duration_s: f64,
    bz_integral: f64,
) {
    let (s, c) = (-bz_integral).sin_cos();
    let v = &mut m.0;
    // Rotated old transverse derivative, before the magnetization moves.
    let rdx = v[4] * c - v[5] * s;
    let rdy = v[4] * s + v[5] * c;
    let (rx, ry) = free_m3(v, f, s, c);
    // -i * (rx + i ry) = ry - i rx
    v[4] = f.e2 * (rdx + duration_s * ry);
    v[5] = f.e2 * (rdy - duration_s * rx);
    v[6] = f.e1 * v[6];
}

/// In-place update of the first four state elements across a free interval.
#[inline]
pub fn propagate_free_m4(m: &mut [f64; 4], seg: &FreeSegment, t1_s: f64, t2_s: f64) {
    let f = FreeFactors::new(seg.duration_s, t1_s, t2_s);
    propagate_free_m4_with(m, &f, seg.bz_integral);
}

/// In-place update of the full 7-element state across a free interval.
#[inline]
pub fn propagate_free_m7(m: &mut crate::kernel::Mag7, seg: &FreeSegment, t1_s: f64, t2_s: f64) {
    let f = FreeFactors::new(seg.duration_s, t1_s, t2_s);
    propagate_free_m7_with(m, &f, seg.duration_s, seg.bz_integral);
}

/// Free-interval propagation with an argument-checked segment.
pub fn propagate_free(
    m: &mut crate::kernel::Mag7,
    seg: &FreeSegment,
    t1_s: f64,
    t2_s: f64,
) -> Result<()> {
    if seg.duration_s < 0.0 {
        return Err(Error::Argument("negative free duration".into()));
    }
    propagate_free_m7(m, seg, t1_s, t2_s);
    Ok(())
}
