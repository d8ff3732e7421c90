//! Sequence intermediate representation, its JSON text format, RF waveform
//! synthesis, and segmentation into with-RF and RF-free execution entries.
//!
//! Durations are integer microseconds throughout; RF waveforms are sampled on
//! the sequence raster. B1 amplitudes are stored as gamma*B1/(2*pi) in Hz, so
//! the flip angle of a constant-phase pulse is `2*pi * sum(b1_hz) * dt`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_RASTER_US: u64 = 1;

/// ADC attachment: `num` samples at `delay + i * dwell` from block start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adc {
    pub delay_us: u64,
    pub num: u32,
    pub dwell_us: u64,
}

/// Per-sample gradient waveforms during an RF block, T/m. Empty axes mean
/// zero gradient on that axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GradWaveforms {
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
}

/// One sequence block.
///
/// `Rf` and `Free` are the two physical block kinds; `IdealRf` (instantaneous
/// rotation) and `Spoil` (perfect transverse spoiling) are zero-duration
/// idealizations used by demos and closed-form test sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Block {
    Rf {
        b1_hz: Vec<f64>,
        b1_phase_rad: Vec<f64>,
        #[serde(
            default,
            rename = "g_T_per_m",
            skip_serializing_if = "Option::is_none"
        )]
        g_t_per_m: Option<GradWaveforms>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adc: Option<Adc>,
    },
    Free {
        duration_us: u64,
        /// Piecewise-constant gradients as `[dur_us, gx, gy, gz]` rows.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        grad_segments: Vec<(u64, f64, f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adc: Option<Adc>,
    },
    IdealRf {
        flip_rad: f64,
        phase_rad: f64,
    },
    Spoil,
}

impl Block {
    pub fn duration_us(&self, raster_us: u64) -> u64 {
        match self {
            Block::Rf { b1_hz, .. } => b1_hz.len() as u64 * raster_us,
            Block::Free { duration_us, .. } => *duration_us,
            Block::IdealRf { .. } | Block::Spoil => 0,
        }
    }

    pub fn adc(&self) -> Option<&Adc> {
        match self {
            Block::Rf { adc, .. } | Block::Free { adc, .. } => adc.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_mm: Option<[f64; 2]>,
    /// Cartesian acquisition matrix, `[readout, lines]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[u32; 2]>,
    /// Per acquired line: readout direction reversed (EPI).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversed_lines: Option<Vec<bool>>,
    /// Grid row for each acquired line when acquisition order is not
    /// monotone in ky (RARE interleaving).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_order: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    #[serde(default = "default_raster")]
    pub raster_us: u64,
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub meta: SequenceMeta,
}

fn default_raster() -> u64 {
    DEFAULT_RASTER_US
}

impl Sequence {
    pub fn total_duration_us(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| b.duration_us(self.raster_us))
            .sum()
    }

    /// Enforces every IR invariant; diagnostics name the offending block and
    /// field.
    pub fn validate(&self) -> Result<()> {
        if self.raster_us == 0 {
            return Err(Error::Parse("raster_us must be positive".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::Parse("sequence has no blocks".into()));
        }
        for (bi, block) in self.blocks.iter().enumerate() {
            match block {
                Block::Rf {
                    b1_hz,
                    b1_phase_rad,
                    g_t_per_m,
                    adc,
                } => {
                    let n = b1_hz.len();
                    if n == 0 {
                        return Err(Error::Parse(format!("block {bi}: rf has no samples")));
                    }
                    if b1_phase_rad.len() != n {
                        return Err(Error::Parse(format!(
                            "block {bi}: b1_phase_rad has {} samples, b1_hz has {n}",
                            b1_phase_rad.len()
                        )));
                    }
                    if let Some(g) = g_t_per_m {
                        for (axis, arr) in [("x", &g.x), ("y", &g.y), ("z", &g.z)] {
                            if !arr.is_empty() && arr.len() != n {
                                return Err(Error::Parse(format!(
                                    "block {bi}: g_T_per_m.{axis} has {} samples, b1_hz has {n}",
                                    arr.len()
                                )));
                            }
                        }
                    }
                    if let Some(a) = adc {
                        validate_adc(a, bi, n as u64 * self.raster_us)?;
                        let last = a.delay_us + (a.num as u64 - 1) * a.dwell_us;
                        for t in [a.delay_us, last] {
                            if t % self.raster_us != 0 {
                                return Err(Error::Parse(format!(
                                    "block {bi}: adc sample at {t} us is off the {} us raster",
                                    self.raster_us
                                )));
                            }
                        }
                        if a.dwell_us % self.raster_us != 0 {
                            return Err(Error::Parse(format!(
                                "block {bi}: adc dwell {} us is off the {} us raster",
                                a.dwell_us, self.raster_us
                            )));
                        }
                    }
                }
                Block::Free {
                    duration_us,
                    grad_segments,
                    adc,
                } => {
                    if !grad_segments.is_empty() {
                        let sum: u64 = grad_segments.iter().map(|s| s.0).sum();
                        if sum != *duration_us {
                            return Err(Error::Parse(format!(
                                "block {bi}: gradient segments sum to {sum} us, block lasts {duration_us} us"
                            )));
                        }
                    }
                    if let Some(a) = adc {
                        validate_adc(a, bi, *duration_us)?;
                    }
                }
                Block::IdealRf { flip_rad, .. } => {
                    if !flip_rad.is_finite() {
                        return Err(Error::Parse(format!(
                            "block {bi}: ideal_rf flip must be finite"
                        )));
                    }
                }
                Block::Spoil => {}
            }
        }
        Ok(())
    }
}

fn validate_adc(a: &Adc, block: usize, duration_us: u64) -> Result<()> {
    if a.num == 0 {
        return Err(Error::Parse(format!("block {block}: adc num must be >= 1")));
    }
    if a.num > 1 && a.dwell_us == 0 {
        return Err(Error::Parse(format!(
            "block {block}: adc dwell must be positive for multiple samples"
        )));
    }
    let last = a.delay_us + (a.num as u64 - 1) * a.dwell_us;
    if last > duration_us {
        return Err(Error::Parse(format!(
            "block {block}: adc sample at {last} us falls past block end ({duration_us} us)"
        )));
    }
    Ok(())
}

/// Parses the JSON sequence format and validates the result.
pub fn parse_sequence(text: &str) -> Result<Sequence> {
    let seq: Sequence = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("sequence JSON: {e}")))?;
    seq.validate()?;
    Ok(seq)
}

/// Canonical single-line JSON serialization; `parse(serialize(s)) == s`.
pub fn serialize_sequence(seq: &Sequence) -> Result<String> {
    serde_json::to_string(seq).map_err(|e| Error::Integrity(format!("sequence encode: {e}")))
}

/// Hann-apodized sinc RF block. `lobes = 0` degenerates to a rectangle
/// (hard pulse). The amplitude is scaled so the pulse area equals the flip
/// angle: `2*pi * sum(b1_hz) * dt = flip`.
pub fn make_sinc_rf(
    duration_us: u64,
    lobes: u32,
    flip_rad: f64,
    phase_rad: f64,
    raster_us: u64,
) -> Result<Block> {
    if duration_us == 0 || duration_us % raster_us != 0 {
        return Err(Error::Argument(format!(
            "rf duration {duration_us} us must be a positive multiple of the {raster_us} us raster"
        )));
    }
    let n = (duration_us / raster_us) as usize;
    let dt_s = raster_us as f64 * 1e-6;
    let raw: Vec<f64> = if lobes == 0 {
        vec![1.0; n]
    } else {
        let x_max = (lobes as f64 + 1.0) * std::f64::consts::FRAC_PI_2;
        (0..n)
            .map(|k| {
                // Midpoint sampling keeps the waveform symmetric.
                let tau = 2.0 * (k as f64 + 0.5) / n as f64 - 1.0;
                let hann = 0.5 * (1.0 + (std::f64::consts::PI * tau).cos());
                let x = x_max * tau;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                hann * sinc
            })
            .collect()
    };
    let area: f64 = raw.iter().sum::<f64>() * dt_s;
    let scale = if flip_rad == 0.0 {
        0.0
    } else {
        flip_rad / (std::f64::consts::TAU * area)
    };
    Ok(Block::Rf {
        b1_hz: raw.iter().map(|v| v * scale).collect(),
        b1_phase_rad: vec![phase_rad; n],
        g_t_per_m: None,
        adc: None,
    })
}

/// One ADC instant inside an RF block: sample the state once `after_step`
/// raster steps of the block have been applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcTick {
    pub after_step: usize,
    pub sample: usize,
}

/// Execution plan entry. Free blocks are split at their ADC instants, so a
/// `Free` entry carries at most one trailing sample.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanEntry {
    Rf {
        block: usize,
        adc: Vec<AdcTick>,
    },
    Free {
        duration_us: u64,
        /// Gradient first moment over the piece, T*s/m per axis.
        moment: [f64; 3],
        sample: Option<usize>,
    },
    IdealRf {
        flip_rad: f64,
        phase_rad: f64,
    },
    Spoil,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub raster_us: u64,
    pub entries: Vec<PlanEntry>,
    /// Absolute start time of each entry, microseconds.
    pub entry_start_us: Vec<u64>,
    /// Absolute sample times, microseconds, in acquisition order.
    pub sample_times_us: Vec<u64>,
    pub total_duration_us: u64,
}

/// Splits a sequence into the stepped/analytic execution plan, slicing free
/// blocks at their ADC sample times. Absolute time is preserved.
pub fn segment(seq: &Sequence) -> Result<Plan> {
    seq.validate()?;
    let mut entries = Vec::new();
    let mut entry_start_us = Vec::new();
    let mut sample_times_us = Vec::new();
    let mut now_us: u64 = 0;

    for (bi, block) in seq.blocks.iter().enumerate() {
        match block {
            Block::Rf { adc, .. } => {
                let ticks = match adc {
                    Some(a) => (0..a.num as u64)
                        .map(|i| {
                            let t = a.delay_us + i * a.dwell_us;
                            sample_times_us.push(now_us + t);
                            AdcTick {
                                after_step: (t / seq.raster_us) as usize,
                                sample: sample_times_us.len() - 1,
                            }
                        })
                        .collect(),
                    None => Vec::new(),
                };
                entry_start_us.push(now_us);
                entries.push(PlanEntry::Rf { block: bi, adc: ticks });
                now_us += block.duration_us(seq.raster_us);
            }
            Block::Free {
                duration_us,
                grad_segments,
                adc,
            } => {
                let mut cuts: Vec<(u64, bool)> = Vec::new();
                if let Some(a) = adc {
                    for i in 0..a.num as u64 {
                        cuts.push((a.delay_us + i * a.dwell_us, true));
                    }
                }
                cuts.push((*duration_us, false));
                let mut prev = 0u64;
                for (t, is_sample) in cuts {
                    if t == *duration_us && !is_sample && prev == t {
                        break; // no trailing piece needed
                    }
                    let moment = segment_moment(grad_segments, prev, t);
                    let sample = if is_sample {
                        sample_times_us.push(now_us + t);
                        Some(sample_times_us.len() - 1)
                    } else {
                        None
                    };
                    entry_start_us.push(now_us + prev);
                    entries.push(PlanEntry::Free {
                        duration_us: t - prev,
                        moment,
                        sample,
                    });
                    prev = t;
                }
                now_us += duration_us;
            }
            Block::IdealRf {
                flip_rad,
                phase_rad,
            } => {
                entry_start_us.push(now_us);
                entries.push(PlanEntry::IdealRf {
                    flip_rad: *flip_rad,
                    phase_rad: *phase_rad,
                });
            }
            Block::Spoil => {
                entry_start_us.push(now_us);
                entries.push(PlanEntry::Spoil);
            }
        }
    }
    Ok(Plan {
        raster_us: seq.raster_us,
        entries,
        entry_start_us,
        sample_times_us,
        total_duration_us: now_us,
    })
}

/// Gradient first moment of `[a_us, b_us]` within a piecewise-constant
/// gradient train.
fn segment_moment(segments: &[(u64, f64, f64, f64)], a_us: u64, b_us: u64) -> [f64; 3] {
    let mut moment = [0.0; 3];
    let mut start = 0u64;
    for (dur, gx, gy, gz) in segments {
        let end = start + dur;
        let lo = a_us.max(start);
        let hi = b_us.min(end);
        if hi > lo {
            let w = (hi - lo) as f64 * 1e-6;
            moment[0] += gx * w;
            moment[1] += gy * w;
            moment[2] += gz * w;
        }
        start = end;
    }
    moment
}

/// Replaces every free block by an RF block with all-zero pulse shapes so the
/// whole sequence runs through the stepped path (the "update" baseline).
pub fn force_stepped(seq: &Sequence) -> Result<Sequence> {
    let raster = seq.raster_us;
    let mut out = seq.clone();
    for (bi, block) in out.blocks.iter_mut().enumerate() {
        if let Block::Free {
            duration_us,
            grad_segments,
            adc,
        } = block
        {
            if *duration_us % raster != 0 {
                return Err(Error::Argument(format!(
                    "block {bi}: free duration {duration_us} us not on the raster"
                )));
            }
            let n = (*duration_us / raster) as usize;
            let mut g = GradWaveforms::default();
            if !grad_segments.is_empty() {
                for (dur, _, _, _) in grad_segments.iter() {
                    if dur % raster != 0 {
                        return Err(Error::Argument(format!(
                            "block {bi}: gradient segment of {dur} us not on the raster"
                        )));
                    }
                }
                g.x = vec![0.0; n];
                g.y = vec![0.0; n];
                g.z = vec![0.0; n];
                let mut step0 = 0usize;
                for (dur, gx, gy, gz) in grad_segments.iter() {
                    let steps = (dur / raster) as usize;
                    for s in step0..step0 + steps {
                        g.x[s] = *gx;
                        g.y[s] = *gy;
                        g.z[s] = *gz;
                    }
                    step0 += steps;
                }
            }
            *block = Block::Rf {
                b1_hz: vec![0.0; n],
                b1_phase_rad: vec![0.0; n],
                g_t_per_m: if grad_segments.is_empty() { None } else { Some(g) },
                adc: adc.take(),
            };
        }
    }
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Builtin sequences
// ---------------------------------------------------------------------------

/// RF pulse realization used by the builtin generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RfKind {
    Sinc { duration_us: u64, lobes: u32 },
    Hard { duration_us: u64 },
    Ideal,
}

impl RfKind {
    fn duration_us(&self) -> u64 {
        match self {
            RfKind::Sinc { duration_us, .. } | RfKind::Hard { duration_us } => *duration_us,
            RfKind::Ideal => 0,
        }
    }

    fn make(&self, flip_rad: f64, phase_rad: f64, raster_us: u64) -> Result<Block> {
        match self {
            RfKind::Sinc { duration_us, lobes } => {
                make_sinc_rf(*duration_us, *lobes, flip_rad, phase_rad, raster_us)
            }
            RfKind::Hard { duration_us } => {
                make_sinc_rf(*duration_us, 0, flip_rad, phase_rad, raster_us)
            }
            RfKind::Ideal => Ok(Block::IdealRf {
                flip_rad,
                phase_rad,
            }),
        }
    }
}

/// FID: one 500 us sinc excitation, then a 9500 us delay sampled by the ADC.
pub fn fid_sequence() -> Sequence {
    let exc = make_sinc_rf(500, 3, std::f64::consts::FRAC_PI_2, 0.0, 1).unwrap();
    Sequence {
        raster_us: 1,
        blocks: vec![
            exc,
            Block::Free {
                duration_us: 9500,
                grad_segments: vec![],
                adc: Some(Adc {
                    delay_us: 0,
                    num: 191,
                    dwell_us: 50,
                }),
            },
        ],
        meta: SequenceMeta {
            name: Some("fid".into()),
            ..Default::default()
        },
    }
}

/// 15 ms CPMG demo: 90x excitation, free interval, 180y refocusing, free
/// interval. The sinc variant uses 2 ms pulses with 3 and 8 ms delays; the
/// ideal variant puts the instantaneous pulses at 0 and 5 ms (echo at 10 ms).
pub fn cpmg_demo_sequence(ideal: bool) -> Sequence {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let pi = std::f64::consts::PI;
    let blocks = if ideal {
        vec![
            Block::IdealRf {
                flip_rad: half_pi,
                phase_rad: 0.0,
            },
            Block::Free {
                duration_us: 5000,
                grad_segments: vec![],
                adc: None,
            },
            Block::IdealRf {
                flip_rad: pi,
                phase_rad: half_pi,
            },
            Block::Free {
                duration_us: 10000,
                grad_segments: vec![],
                adc: None,
            },
        ]
    } else {
        vec![
            make_sinc_rf(2000, 3, half_pi, 0.0, 1).unwrap(),
            Block::Free {
                duration_us: 3000,
                grad_segments: vec![],
                adc: None,
            },
            make_sinc_rf(2000, 3, pi, half_pi, 1).unwrap(),
            Block::Free {
                duration_us: 8000,
                grad_segments: vec![],
                adc: None,
            },
        ]
    };
    Sequence {
        raster_us: 1,
        blocks,
        meta: SequenceMeta {
            name: Some(if ideal { "cpmg-demo-ideal" } else { "cpmg-demo" }.into()),
            ..Default::default()
        },
    }
}

#[derive(Debug, Clone)]
pub struct SpgrParams {
    pub n_ro: u32,
    pub n_pe: u32,
    pub fov_m: [f64; 2],
    pub tr_us: u64,
    pub te_us: u64,
    pub flip_rad: f64,
    pub rf: RfKind,
    pub dwell_us: u64,
    pub dummies: u32,
    pub gamma_hz_per_t: f64,
}

impl Default for SpgrParams {
    fn default() -> Self {
        SpgrParams {
            n_ro: 64,
            n_pe: 64,
            fov_m: [0.24, 0.24],
            tr_us: 12_000,
            te_us: 5_000,
            flip_rad: std::f64::consts::FRAC_PI_2,
            rf: RfKind::Sinc {
                duration_us: 2000,
                lobes: 3,
            },
            dwell_us: 10,
            dummies: 1,
            gamma_hz_per_t: crate::GAMMA_HZ_PER_T,
        }
    }
}

/// Spoiled gradient-echo: identical excitations, per-line phase encode,
/// readout centered on TE, perfect spoiling, fill to TR.
pub fn spgr_sequence(p: &SpgrParams) -> Result<Sequence> {
    let rf_dur = p.rf.duration_us();
    if rf_dur % 2 != 0 {
        return Err(Error::Argument("rf duration must be even".into()));
    }
    let t_ro = p.n_ro as u64 * p.dwell_us;
    let half_ro = (p.n_ro as u64 / 2) * p.dwell_us;
    let needed = rf_dur / 2 + half_ro;
    if p.te_us <= needed {
        return Err(Error::Argument(format!(
            "te {} us too short: needs > {} us",
            p.te_us, needed
        )));
    }
    let t_enc = p.te_us - needed;
    let span = rf_dur + t_enc + t_ro;
    if p.tr_us < span {
        return Err(Error::Argument(format!(
            "tr {} us shorter than line span {span} us",
            p.tr_us
        )));
    }
    let t_fill = p.tr_us - span;

    let exc = p.rf.make(p.flip_rad, 0.0, 1)?;
    let dk = [1.0 / p.fov_m[0], 1.0 / p.fov_m[1]];
    let t_enc_s = t_enc as f64 * 1e-6;
    let g_ro = dk[0] / (p.gamma_hz_per_t * p.dwell_us as f64 * 1e-6);
    let gx_pre = -(p.n_ro as f64 / 2.0) * dk[0] / (p.gamma_hz_per_t * t_enc_s);

    let mut blocks = Vec::new();
    let mut line_of_shot = vec![None; p.dummies as usize];
    line_of_shot.extend((0..p.n_pe).map(Some));
    for line in line_of_shot {
        let ky = match line {
            Some(j) => (j as f64 - p.n_pe as f64 / 2.0) * dk[1],
            None => 0.0,
        };
        let gy = ky / (p.gamma_hz_per_t * t_enc_s);
        blocks.push(exc.clone());
        blocks.push(Block::Free {
            duration_us: t_enc,
            grad_segments: vec![(t_enc, gx_pre, gy, 0.0)],
            adc: None,
        });
        blocks.push(Block::Free {
            duration_us: t_ro,
            grad_segments: vec![(t_ro, g_ro, 0.0, 0.0)],
            adc: line.map(|_| Adc {
                delay_us: 0,
                num: p.n_ro,
                dwell_us: p.dwell_us,
            }),
        });
        blocks.push(Block::Spoil);
        if t_fill > 0 {
            blocks.push(Block::Free {
                duration_us: t_fill,
                grad_segments: vec![],
                adc: None,
            });
        }
    }
    Ok(Sequence {
        raster_us: 1,
        blocks,
        meta: SequenceMeta {
            name: Some("spgr".into()),
            fov_mm: Some([p.fov_m[0] * 1e3, p.fov_m[1] * 1e3]),
            matrix: Some([p.n_ro, p.n_pe]),
            reversed_lines: None,
            line_order: None,
        },
    })
}

#[derive(Debug, Clone)]
pub struct RareParams {
    pub etl: u32,
    pub n_ro: u32,
    pub n_pe: u32,
    pub fov_m: [f64; 2],
    /// Echo spacing; the e-th echo of a shot peaks at `(e+1) * esp` after
    /// the excitation center.
    pub esp_us: u64,
    pub tr_us: u64,
    pub rf: RfKind,
    pub dwell_us: u64,
    pub dummies: u32,
    pub gamma_hz_per_t: f64,
}

impl Default for RareParams {
    fn default() -> Self {
        RareParams {
            etl: 1,
            n_ro: 64,
            n_pe: 64,
            fov_m: [0.24, 0.24],
            esp_us: 10_000,
            tr_us: 5_000_000,
            rf: RfKind::Ideal,
            dwell_us: 10,
            dummies: 1,
            gamma_hz_per_t: crate::GAMMA_HZ_PER_T,
        }
    }
}

/// RARE / spin-echo train: 90x excitation, CPMG 180y refocusing pulses,
/// each echo readout rewound to k-space center before the next pulse.
/// `etl = 1` is a classic spin echo with TE = esp.
pub fn rare_sequence(p: &RareParams) -> Result<Sequence> {
    if p.etl == 0 || p.n_pe % p.etl != 0 {
        return Err(Error::Argument(format!(
            "echo train length {} must divide the {} phase encodes",
            p.etl, p.n_pe
        )));
    }
    let n_shots = p.n_pe / p.etl;
    let rf_dur = p.rf.duration_us();
    if rf_dur % 2 != 0 {
        return Err(Error::Argument("rf duration must be even".into()));
    }
    let half_rf = rf_dur / 2;
    let t_ro = p.n_ro as u64 * p.dwell_us;
    let half_ro = (p.n_ro as u64 / 2) * p.dwell_us;
    if p.esp_us / 2 <= half_rf + half_ro || p.esp_us / 2 <= half_rf * 2 {
        return Err(Error::Argument(format!(
            "echo spacing {} us too short for the pulse and readout",
            p.esp_us
        )));
    }
    // Excitation center to first refocusing center is esp/2; between the
    // refocusing center and the echo sits the encode, and the rewind after
    // the readout mirrors it (even n_ro keeps the readout echo-centered).
    let t_pre = p.esp_us / 2 - half_rf - half_rf;
    let t_enc = p.esp_us / 2 - half_rf - half_ro;
    let t_rew = t_enc;

    let exc = p.rf.make(std::f64::consts::FRAC_PI_2, 0.0, 1)?;
    let refocus = p
        .rf
        .make(std::f64::consts::PI, std::f64::consts::FRAC_PI_2, 1)?;

    let dk = [1.0 / p.fov_m[0], 1.0 / p.fov_m[1]];
    let t_enc_s = t_enc as f64 * 1e-6;
    let t_rew_s = t_rew as f64 * 1e-6;
    let g_ro = dk[0] / (p.gamma_hz_per_t * p.dwell_us as f64 * 1e-6);
    let gx_pre = -(p.n_ro as f64 / 2.0) * dk[0] / (p.gamma_hz_per_t * t_enc_s);
    // Readout ends at +n/2 * dk; rewind x back to 0.
    let gx_rew = -(p.n_ro as f64 / 2.0) * dk[0] / (p.gamma_hz_per_t * t_rew_s);

    let shot_span = rf_dur + t_pre + p.etl as u64 * (rf_dur + t_enc + t_ro + t_rew);
    if p.tr_us < shot_span {
        return Err(Error::Argument(format!(
            "tr {} us shorter than shot span {shot_span} us",
            p.tr_us
        )));
    }
    let t_fill = p.tr_us - shot_span;

    let mut blocks = Vec::new();
    let mut line_order = Vec::new();
    for shot in 0..p.dummies as i64 + n_shots as i64 {
        let real_shot = shot >= p.dummies as i64;
        let s = (shot - p.dummies as i64).max(0) as u32;
        blocks.push(exc.clone());
        blocks.push(Block::Free {
            duration_us: t_pre,
            grad_segments: vec![],
            adc: None,
        });
        for e in 0..p.etl {
            let line = e * n_shots + s;
            let ky = (line as f64 - p.n_pe as f64 / 2.0) * dk[1];
            let gy_enc = ky / (p.gamma_hz_per_t * t_enc_s);
            let gy_rew = -ky / (p.gamma_hz_per_t * t_rew_s);
            blocks.push(refocus.clone());
            blocks.push(Block::Free {
                duration_us: t_enc,
                grad_segments: vec![(t_enc, gx_pre, gy_enc, 0.0)],
                adc: None,
            });
            blocks.push(Block::Free {
                duration_us: t_ro,
                grad_segments: vec![(t_ro, g_ro, 0.0, 0.0)],
                adc: if real_shot {
                    Some(Adc {
                        delay_us: 0,
                        num: p.n_ro,
                        dwell_us: p.dwell_us,
                    })
                } else {
                    None
                },
            });
            blocks.push(Block::Free {
                duration_us: t_rew,
                grad_segments: vec![(t_rew, gx_rew, gy_rew, 0.0)],
                adc: None,
            });
            if real_shot {
                line_order.push(line);
            }
        }
        blocks.push(Block::Spoil);
        if t_fill > 0 {
            blocks.push(Block::Free {
                duration_us: t_fill,
                grad_segments: vec![],
                adc: None,
            });
        }
    }
    Ok(Sequence {
        raster_us: 1,
        blocks,
        meta: SequenceMeta {
            name: Some("rare".into()),
            fov_mm: Some([p.fov_m[0] * 1e3, p.fov_m[1] * 1e3]),
            matrix: Some([p.n_ro, p.n_pe]),
            reversed_lines: None,
            line_order: Some(line_order),
        },
    })
}

#[derive(Debug, Clone)]
pub struct EpiParams {
    pub n_ro: u32,
    pub n_pe: u32,
    pub fov_m: [f64; 2],
    pub dwell_us: u64,
    pub rf: RfKind,
    pub blip_us: u64,
    pub gamma_hz_per_t: f64,
}

impl Default for EpiParams {
    fn default() -> Self {
        EpiParams {
            n_ro: 32,
            n_pe: 32,
            fov_m: [0.24, 0.24],
            dwell_us: 4,
            rf: RfKind::Ideal,
            blip_us: 10,
            gamma_hz_per_t: crate::GAMMA_HZ_PER_T,
        }
    }
}

/// Single-shot EPI: one excitation, alternating-polarity readouts with
/// phase-encode blips between lines. Odd lines are acquired reversed.
pub fn epi_sequence(p: &EpiParams) -> Result<Sequence> {
    let t_ro = p.n_ro as u64 * p.dwell_us;
    let dk = [1.0 / p.fov_m[0], 1.0 / p.fov_m[1]];
    let g_ro = dk[0] / (p.gamma_hz_per_t * p.dwell_us as f64 * 1e-6);
    let t_prep = 500u64;
    let t_prep_s = t_prep as f64 * 1e-6;
    let gx_pre = -(p.n_ro as f64 / 2.0) * dk[0] / (p.gamma_hz_per_t * t_prep_s);
    let gy_pre = -(p.n_pe as f64 / 2.0) * dk[1] / (p.gamma_hz_per_t * t_prep_s);
    let blip_s = p.blip_us as f64 * 1e-6;
    let gy_blip = dk[1] / (p.gamma_hz_per_t * blip_s);

    let mut blocks = vec![
        p.rf.make(std::f64::consts::FRAC_PI_2, 0.0, 1)?,
        Block::Free {
            duration_us: t_prep,
            grad_segments: vec![(t_prep, gx_pre, gy_pre, 0.0)],
            adc: None,
        },
    ];
    let mut reversed = Vec::new();
    for l in 0..p.n_pe {
        let rev = l % 2 == 1;
        reversed.push(rev);
        let sign = if rev { -1.0 } else { 1.0 };
        blocks.push(Block::Free {
            duration_us: t_ro,
            grad_segments: vec![(t_ro, sign * g_ro, 0.0, 0.0)],
            adc: Some(Adc {
                // Reversed lines sample one dwell late so the k-space
                // positions mirror the forward lines exactly.
                delay_us: if rev { p.dwell_us } else { 0 },
                num: p.n_ro,
                dwell_us: p.dwell_us,
            }),
        });
        if l + 1 < p.n_pe {
            blocks.push(Block::Free {
                duration_us: p.blip_us,
                grad_segments: vec![(p.blip_us, 0.0, gy_blip, 0.0)],
                adc: None,
            });
        }
    }
    Ok(Sequence {
        raster_us: 1,
        blocks,
        meta: SequenceMeta {
            name: Some("epi".into()),
            fov_mm: Some([p.fov_m[0] * 1e3, p.fov_m[1] * 1e3]),
            matrix: Some([p.n_ro, p.n_pe]),
            reversed_lines: Some(reversed),
            line_order: None,
        },
    })
}
