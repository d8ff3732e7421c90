//! ADC signal formation and accumulation.
//!
//! The continuous-representation sample of one isochromat is its transverse
//! magnetization scaled by the closed-form Lorentzian factor
//! `exp(-|dphi/dw| / T2')`, where the phase slope `dphi/dw` comes from the
//! propagated frequency derivative. Accumulation over isochromats uses a
//! fixed-order pairwise reduction so results do not depend on worker count.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::kernel::Mag7;
use crate::seqio::SequenceMeta;
use crate::{Error, Result};

/// Division floor of the phase-slope extraction.
pub const SLOPE_EPS: f64 = 1e-10;

/// Which denominator the phase-slope extraction uses.
///
/// `Squared` is the exact derivative of atan2 and reproduces the
/// `exp(-t/T2*)` free-induction decay independent of the transverse
/// magnitude. `PaperSqrt` keeps the square-root form some writeups print,
/// as a compatibility switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DenominatorMode {
    Squared,
    PaperSqrt,
}

/// Phase slope `dphi/dw` (seconds) of a state's transverse magnetization.
#[inline]
pub fn phase_slope(state: &Mag7, mode: DenominatorMode) -> f64 {
    let (mx, my) = (state.mx(), state.my());
    let num = mx * state.dmy() - my * state.dmx();
    match mode {
        DenominatorMode::Squared => num / (mx * mx + my * my).max(SLOPE_EPS * SLOPE_EPS),
        DenominatorMode::PaperSqrt => num / (mx * mx + my * my).sqrt().max(SLOPE_EPS),
    }
}

/// Transverse magnetization as a bare complex sample, scaled by `m0` and the
/// coil weight. This is the discrete-representation summand.
#[inline]
pub fn base_sample(state_mx: f64, state_my: f64, m0: f64, coil_weight: Complex64) -> Complex64 {
    coil_weight * Complex64::new(m0 * state_mx, m0 * state_my)
}

/// Lorentzian reversible-decay factor for a given phase slope. Exactly 1
/// for infinite `t2prime`.
#[inline]
pub fn t2prime_factor(slope_s: f64, t2prime_s: f64) -> f64 {
    if t2prime_s.is_infinite() {
        1.0
    } else {
        (-slope_s.abs() / t2prime_s).exp()
    }
}

/// Continuous-representation sample of one isochromat.
#[inline]
pub fn sample_continuous(
    state: &Mag7,
    m0: f64,
    t2prime_s: f64,
    coil_weight: Complex64,
    mode: DenominatorMode,
) -> Complex64 {
    let base = base_sample(state.mx(), state.my(), m0, coil_weight);
    base.scale(t2prime_factor(phase_slope(state, mode), t2prime_s))
}

/// Discrete-representation sample: plain weighted sum over isochromats.
pub fn sample_discrete(
    states: &[[f64; 4]],
    m0s: &[f64],
    coil_weights: &[Complex64],
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((s, m0), w) in states.iter().zip(m0s).zip(coil_weights) {
        acc += base_sample(s[0], s[1], *m0, *w);
    }
    acc
}

/// Receiver sensitivity profile, evaluated per isochromat position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoilProfile {
    Uniform,
    Gaussian {
        center_m: [f64; 3],
        sigma_m: f64,
        gain: f64,
        phase_rad: f64,
    },
}

impl CoilProfile {
    pub fn weight(&self, r: [f64; 3]) -> Complex64 {
        match self {
            CoilProfile::Uniform => Complex64::new(1.0, 0.0),
            CoilProfile::Gaussian {
                center_m,
                sigma_m,
                gain,
                phase_rad,
            } => {
                let d2 = (r[0] - center_m[0]).powi(2)
                    + (r[1] - center_m[1]).powi(2)
                    + (r[2] - center_m[2]).powi(2);
                let mag = gain * (-d2 / (2.0 * sigma_m * sigma_m)).exp();
                Complex64::from_polar(mag, *phase_rad)
            }
        }
    }
}

/// One sampling event: absolute times plus the coils that record it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcEvent {
    pub times_s: Vec<f64>,
    pub dwell_s: f64,
    pub coils: Vec<u32>,
}

impl AdcEvent {
    pub fn validate(&self) -> Result<()> {
        if !self.times_s.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Integrity(
                "adc sample times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Per-coil complex sample series aligned with the sample times, coil-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcStream {
    pub sample_times_us: Vec<u64>,
    pub num_coils: usize,
    /// `data[coil * num_samples + sample]`.
    pub data: Vec<Complex64>,
    pub meta: SequenceMeta,
}

impl AdcStream {
    pub fn zeros(sample_times_us: Vec<u64>, num_coils: usize, meta: SequenceMeta) -> Self {
        let n = sample_times_us.len() * num_coils;
        AdcStream {
            sample_times_us,
            num_coils,
            data: vec![Complex64::new(0.0, 0.0); n],
            meta,
        }
    }

    pub fn num_samples(&self) -> usize {
        self.sample_times_us.len()
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = self.num_samples();
        &self.data[c * n..(c + 1) * n]
    }
}

/// One worker partition's contribution to the sample sums.
#[derive(Debug, Clone)]
pub struct AdcPartial {
    pub index: usize,
    pub data: Vec<Complex64>,
}

/// Fixed-order pairwise reduction of a complete set of partitions.
///
/// Exactly the indices `0..num_partitions` must be present; the reduction
/// tree depends only on the partition count, never on scheduling.
pub fn accumulate(partials: Vec<AdcPartial>, num_partitions: usize) -> Result<Vec<Complex64>> {
    if partials.len() != num_partitions {
        return Err(Error::Integrity(format!(
            "expected {num_partitions} partitions, got {}",
            partials.len()
        )));
    }
    let mut seen = vec![false; num_partitions];
    let len = partials.first().map(|p| p.data.len()).unwrap_or(0);
    let mut bufs: Vec<Option<Vec<Complex64>>> = vec![None; num_partitions];
    for p in partials {
        if p.index >= num_partitions || seen[p.index] {
            return Err(Error::Integrity(format!(
                "bad or duplicate partition index {}",
                p.index
            )));
        }
        if p.data.len() != len {
            return Err(Error::Integrity(format!(
                "partition {} has {} samples, expected {len}",
                p.index,
                p.data.len()
            )));
        }
        seen[p.index] = true;
        bufs[p.index] = Some(p.data);
    }
    let mut level: Vec<Vec<Complex64>> = bufs.into_iter().map(|b| b.unwrap()).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    *x += *y;
                }
            }
            next.push(a);
        }
        level = next;
    }
    Ok(level.pop().unwrap_or_default())
}

#[derive(Serialize, Deserialize)]
struct StreamHeader {
    num_samples: usize,
    num_coils: usize,
    sample_times_us: Vec<u64>,
    meta: SequenceMeta,
}

/// Writes the stream file: one JSON header line, then (re, im) pairs of
/// little-endian f32, coil-major.
pub fn write_stream(stream: &AdcStream, w: &mut impl Write) -> Result<()> {
    let header = StreamHeader {
        num_samples: stream.num_samples(),
        num_coils: stream.num_coils,
        sample_times_us: stream.sample_times_us.clone(),
        meta: stream.meta.clone(),
    };
    let mut line = serde_json::to_string(&header)
        .map_err(|e| Error::Integrity(format!("stream header encode: {e}")))?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    for v in &stream.data {
        w.write_all(&(v.re as f32).to_le_bytes())?;
        w.write_all(&(v.im as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a stream file written by [`write_stream`]. Sample values come back
/// at f32 precision.
pub fn read_stream(r: &mut impl BufRead) -> Result<AdcStream> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: StreamHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Parse(format!("stream header: {e}")))?;
    if header.sample_times_us.len() != header.num_samples {
        return Err(Error::Integrity(format!(
            "stream header: {} sample times for {} samples",
            header.sample_times_us.len(),
            header.num_samples
        )));
    }
    let n = header.num_samples * header.num_coils;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Integrity(format!("stream file truncated: {e}")))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
            )
        })
        .collect();
    Ok(AdcStream {
        sample_times_us: header.sample_times_us,
        num_coils: header.num_coils,
        data,
        meta: header.meta,
    })
}
