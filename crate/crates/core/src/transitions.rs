//! Combined per-block transition matrices and their reuse.
//!
//! A with-RF block is, per isochromat, a fixed affine map of the 7-element
//! state. Building that map once and replaying it as a matrix-vector product
//! turns `steps x repeats` stepping work into `steps + repeats`. The matrix
//! is built by pushing seven seed vectors through the block (unit vectors
//! with the constant element forced to 1) and subtracting the affine column,
//! which avoids any 7x7 matrix-matrix products.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::kernel::{
    step_deriv_prepared, step_m4_prepared, step_m7_prepared, Mag7, StepFactors, XyRot,
};
use crate::model::Isochromat;
use crate::seqio::{Block, Sequence};
use crate::{Error, Result};

/// Per-step data of one RF block shared by every isochromat: the xy rotation
/// terms (B1 is position-independent) and the raw gradients.
#[derive(Debug, Clone)]
pub struct PreparedRf {
    pub dt_s: f64,
    pub xy: Vec<Option<XyRot>>,
    pub g: Vec<[f64; 3]>,
    pub has_grad: bool,
}

impl PreparedRf {
    pub fn from_block(block: &Block, raster_us: u64) -> Result<Self> {
        let (b1_hz, b1_phase_rad, g_t_per_m) = match block {
            Block::Rf {
                b1_hz,
                b1_phase_rad,
                g_t_per_m,
                ..
            } => (b1_hz, b1_phase_rad, g_t_per_m),
            _ => return Err(Error::Argument("not an rf block".into())),
        };
        let dt_s = raster_us as f64 * 1e-6;
        let n = b1_hz.len();
        let two_pi = std::f64::consts::TAU;
        let xy = (0..n)
            .map(|i| {
                let w1 = two_pi * b1_hz[i];
                XyRot::from_b1(w1 * b1_phase_rad[i].cos(), w1 * b1_phase_rad[i].sin(), dt_s)
            })
            .collect();
        let axis = |arr: &Vec<f64>, i: usize| if arr.is_empty() { 0.0 } else { arr[i] };
        let g: Vec<[f64; 3]> = match g_t_per_m {
            Some(gw) => (0..n)
                .map(|i| [axis(&gw.x, i), axis(&gw.y, i), axis(&gw.z, i)])
                .collect(),
            None => vec![[0.0; 3]; n],
        };
        let has_grad = g.iter().any(|v| v.iter().any(|&x| x != 0.0));
        Ok(PreparedRf {
            dt_s,
            xy,
            g,
            has_grad,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.xy.len()
    }
}

/// Per-isochromat stepping context: relaxation factors for the raster, the
/// static off-resonance in rad/s, and the position pre-scaled by `2*pi*gamma`
/// so a gradient dot product yields rad/s directly.
#[derive(Debug, Clone, Copy)]
pub struct IsoCtx {
    pub factors: StepFactors,
    pub offres_rad: f64,
    pub r_scaled: [f64; 3],
}

impl IsoCtx {
    pub fn new(iso: &Isochromat, gamma_hz_per_t: f64, dt_s: f64) -> Self {
        let two_pi = std::f64::consts::TAU;
        let t = &iso.tissue;
        IsoCtx {
            factors: StepFactors::new(dt_s, t.t1_s, t.t2_s),
            offres_rad: two_pi * (t.db0_hz + t.shift_hz + iso.db0_extra_hz),
            r_scaled: [
                two_pi * gamma_hz_per_t * iso.position_m[0],
                two_pi * gamma_hz_per_t * iso.position_m[1],
                two_pi * gamma_hz_per_t * iso.position_m[2],
            ],
        }
    }

    #[inline]
    pub fn bz_at(&self, prep: &PreparedRf, step: usize) -> f64 {
        let g = prep.g[step];
        g[0] * self.r_scaled[0] + g[1] * self.r_scaled[1] + g[2] * self.r_scaled[2]
            + self.offres_rad
    }
}

/// Steps the full 7-element state through a block, no sampling.
pub fn run_block_m7(prep: &PreparedRf, ctx: &IsoCtx, state: &mut Mag7) {
    let dt = prep.dt_s;
    if prep.has_grad {
        for (i, xy) in prep.xy.iter().enumerate() {
            let (zs, zc) = (-ctx.bz_at(prep, i) * dt).sin_cos();
            step_m7_prepared(state, xy.as_ref(), zc, zs, dt, &ctx.factors);
        }
    } else {
        let (zs, zc) = (-ctx.offres_rad * dt).sin_cos();
        for xy in &prep.xy {
            step_m7_prepared(state, xy.as_ref(), zc, zs, dt, &ctx.factors);
        }
    }
}

/// Steps the 4-element state through a block, no sampling.
pub fn run_block_m4(prep: &PreparedRf, ctx: &IsoCtx, state: &mut [f64; 4]) {
    let dt = prep.dt_s;
    if prep.has_grad {
        for (i, xy) in prep.xy.iter().enumerate() {
            let (zs, zc) = (-ctx.bz_at(prep, i) * dt).sin_cos();
            step_m4_prepared(state, xy.as_ref(), zc, zs, &ctx.factors);
        }
    } else {
        let (zs, zc) = (-ctx.offres_rad * dt).sin_cos();
        for xy in &prep.xy {
            step_m4_prepared(state, xy.as_ref(), zc, zs, &ctx.factors);
        }
    }
}

/// Combined 7x7 transition of one RF block for one isochromat, row-major.
///
/// Structure: row 3 is the affine row (0,0,0,1,0,0,0); rows 0..4 have zeros
/// in columns 4..7 because the magnetization never depends on the derivative
/// block; the top-left 4x4 equals the plain magnetization transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition7 {
    pub m: [[f64; 7]; 7],
}

impl Transition7 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 7]; 7];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Transition7 { m }
    }

    /// Matrix-vector product exploiting the block structure; the constant
    /// element stays exactly 1.
    #[inline]
    pub fn apply(&self, s: &mut Mag7) {
        let m = &self.m;
        let x = s.0;
        let top = |row: &[f64; 7]| row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3];
        let full = |row: &[f64; 7]| {
            row[0] * x[0]
                + row[1] * x[1]
                + row[2] * x[2]
                + row[3]
                + row[4] * x[4]
                + row[5] * x[5]
                + row[6] * x[6]
        };
        s.0 = [
            top(&m[0]),
            top(&m[1]),
            top(&m[2]),
            1.0,
            full(&m[4]),
            full(&m[5]),
            full(&m[6]),
        ];
    }

    pub fn top_left_c4(&self) -> Transition4 {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i].copy_from_slice(&self.m[i][..4]);
        }
        Transition4 { m }
    }

    /// Asserts the three structural invariants exactly.
    pub fn check_structure(&self) -> Result<()> {
        if self.m[3] != [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0] {
            return Err(Error::Numerics(format!(
                "combined transition row 3 is not the affine row: {:?}",
                self.m[3]
            )));
        }
        for (i, row) in self.m.iter().enumerate().take(4) {
            if row[4] != 0.0 || row[5] != 0.0 || row[6] != 0.0 {
                return Err(Error::Numerics(format!(
                    "combined transition row {i} depends on the derivative block"
                )));
            }
        }
        Ok(())
    }
}

/// Combined 4x4 transition (derivative-free path).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition4 {
    pub m: [[f64; 4]; 4],
}

impl Transition4 {
    #[inline]
    pub fn apply(&self, s: &mut [f64; 4]) {
        let m = &self.m;
        let x = *s;
        let top = |row: &[f64; 4]| row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3];
        *s = [top(&m[0]), top(&m[1]), top(&m[2]), 1.0];
    }
}

/// Seed vectors of the combined construction: the 7 unit vectors with the
/// constant element forced to 1.
fn seed_vectors() -> [Mag7; 7] {
    let mut seeds = [Mag7([0.0; 7]); 7];
    for (v, seed) in seeds.iter_mut().enumerate() {
        seed.0[3] = 1.0;
        if v != 3 {
            seed.0[v] = 1.0;
        }
    }
    seeds
}

/// Builds the combined 7x7 transition by stepping the seven seed vectors
/// through the block. The derivative seeds share the magnetization part of
/// seed 3, so their magnetization update is a copy, and their derivative
/// update runs before seed 3 advances (it needs the pre-step magnetization).
pub fn build_combined(prep: &PreparedRf, ctx: &IsoCtx) -> Transition7 {
    let mut seeds = seed_vectors();
    let dt = prep.dt_s;
    let const_z: Option<(f64, f64)> = if prep.has_grad {
        None
    } else {
        Some((-ctx.offres_rad * dt).sin_cos())
    };
    for (i, xy) in prep.xy.iter().enumerate() {
        let (zs, zc) = match const_z {
            Some(v) => v,
            None => (-ctx.bz_at(prep, i) * dt).sin_cos(),
        };
        let xy = xy.as_ref();
        for v in 4..7 {
            step_deriv_prepared(&mut seeds[v], xy, zc, zs, dt, &ctx.factors);
        }
        for v in 0..4 {
            step_m7_prepared(&mut seeds[v], xy, zc, zs, dt, &ctx.factors);
        }
        let m3 = [seeds[3].0[0], seeds[3].0[1], seeds[3].0[2]];
        for v in 4..7 {
            seeds[v].0[..3].copy_from_slice(&m3);
        }
    }
    // The seeds carry the affine column on top of their unit component;
    // subtracting seed 3 separates the two.
    let base = seeds[3];
    let mut m = [[0.0; 7]; 7];
    for col in 0..7 {
        for row in 0..7 {
            m[row][col] = if col == 3 {
                base.0[row]
            } else {
                seeds[col].0[row] - base.0[row]
            };
        }
    }
    Transition7 { m }
}

/// Builds the combined 4x4 transition with the 4-seed variant of the same
/// construction. Bitwise equal to the top-left block of [`build_combined`].
pub fn build_combined_m4(prep: &PreparedRf, ctx: &IsoCtx) -> Transition4 {
    let mut seeds = [[0.0f64; 4]; 4];
    for (v, seed) in seeds.iter_mut().enumerate() {
        seed[3] = 1.0;
        if v != 3 {
            seed[v] = 1.0;
        }
    }
    let dt = prep.dt_s;
    let const_z: Option<(f64, f64)> = if prep.has_grad {
        None
    } else {
        Some((-ctx.offres_rad * dt).sin_cos())
    };
    for (i, xy) in prep.xy.iter().enumerate() {
        let (zs, zc) = match const_z {
            Some(v) => v,
            None => (-ctx.bz_at(prep, i) * dt).sin_cos(),
        };
        for seed in seeds.iter_mut() {
            step_m4_prepared(seed, xy.as_ref(), zc, zs, &ctx.factors);
        }
    }
    let base = seeds[3];
    let mut m = [[0.0; 4]; 4];
    for col in 0..4 {
        for row in 0..4 {
            m[row][col] = if col == 3 {
                base[row]
            } else {
                seeds[col][row] - base[row]
            };
        }
    }
    Transition4 { m }
}

/// Content identity of an RF block: equal waveforms (and raster) give equal
/// keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PulseKey(pub [u8; 32]);

impl PulseKey {
    pub fn short_hex(&self) -> String {
        self.0[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Hashes the B1 and gradient waveforms plus the raster.
pub fn pulse_key(block: &Block, raster_us: u64) -> Option<PulseKey> {
    let (b1_hz, b1_phase_rad, g_t_per_m) = match block {
        Block::Rf {
            b1_hz,
            b1_phase_rad,
            g_t_per_m,
            ..
        } => (b1_hz, b1_phase_rad, g_t_per_m),
        _ => return None,
    };
    let mut h = Sha256::new();
    h.update(raster_us.to_le_bytes());
    h.update((b1_hz.len() as u64).to_le_bytes());
    let mut feed = |arr: &[f64]| {
        for v in arr {
            h.update(v.to_le_bytes());
        }
    };
    feed(b1_hz);
    feed(b1_phase_rad);
    if let Some(g) = g_t_per_m {
        for (tag, arr) in [(1u8, &g.x), (2, &g.y), (3, &g.z)] {
            if !arr.is_empty() {
                h.update([tag]);
                h.update((arr.len() as u64).to_le_bytes());
                for v in arr {
                    h.update(v.to_le_bytes());
                }
            }
        }
    }
    Some(PulseKey(h.finalize().into()))
}

/// One distinct RF waveform and the blocks that carry it.
#[derive(Debug, Clone)]
pub struct UniqueBlock {
    pub key: PulseKey,
    pub first_block: usize,
    pub uses: usize,
    /// The block, or any of its repeats, carries an ADC.
    pub has_adc: bool,
}

/// Waveform-identity grouping of a sequence's RF blocks.
#[derive(Debug, Clone)]
pub struct Dedup {
    /// In first-occurrence order.
    pub uniques: Vec<UniqueBlock>,
    /// Unique index per sequence block (`None` for non-RF blocks).
    pub unique_of_block: Vec<Option<usize>>,
}

impl Dedup {
    pub fn num_unique(&self) -> usize {
        self.uniques.len()
    }

    pub fn num_repeated(&self) -> usize {
        self.uniques.iter().map(|u| u.uses - 1).sum()
    }
}

/// Groups the sequence's RF blocks by waveform identity.
pub fn dedup_blocks(seq: &Sequence) -> Dedup {
    let mut by_key: HashMap<PulseKey, usize> = HashMap::new();
    let mut uniques: Vec<UniqueBlock> = Vec::new();
    let mut unique_of_block = Vec::with_capacity(seq.blocks.len());
    for (bi, block) in seq.blocks.iter().enumerate() {
        let entry = match pulse_key(block, seq.raster_us) {
            Some(key) => {
                let idx = *by_key.entry(key).or_insert_with(|| {
                    uniques.push(UniqueBlock {
                        key,
                        first_block: bi,
                        uses: 0,
                        has_adc: false,
                    });
                    uniques.len() - 1
                });
                uniques[idx].uses += 1;
                uniques[idx].has_adc |= block.adc().is_some();
                Some(idx)
            }
            None => None,
        };
        unique_of_block.push(entry);
    }
    Dedup {
        uniques,
        unique_of_block,
    }
}
