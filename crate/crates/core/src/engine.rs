//! Full-simulation orchestration.
//!
//! Each isochromat starts at equilibrium and walks the execution plan:
//! with-RF blocks are stepped (or replayed through a cached combined
//! transition when the waveform repeats), RF-free pieces use the analytic
//! propagator, and ADC instants add the isochromat's weighted sample into a
//! chunk-local buffer. Chunks are fixed-size slices of the isochromat index
//! space, so the reduction order is identical for any worker count.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytic::{propagate_free_m4_with, propagate_free_m7_with, FreeFactors};
use crate::kernel::{rot3, step_m4_prepared, step_m7_prepared, Mag7, Mat3};
use crate::model::{lorentzian_from_uniform, Isochromat, Phantom, TissueParams};
use crate::sampling::{
    accumulate, base_sample, sample_continuous, AdcPartial, AdcStream, CoilProfile,
    DenominatorMode,
};
use crate::seqio::{
    cpmg_demo_sequence, fid_sequence, force_stepped, segment, AdcTick, Block, PlanEntry, Sequence,
};
use crate::transitions::{
    build_combined, build_combined_m4, dedup_blocks, IsoCtx, PreparedRf, Transition4, Transition7,
};
use crate::{Error, Result};

/// Isochromats per work unit; fixed so the reduction tree does not depend on
/// the worker count.
const CHUNK: usize = 1024;
/// Non-finite state checks happen at least this often (in raster steps).
const FINITE_CHECK_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum T2PrimeMode {
    /// No reversible decay: derivative propagation skipped entirely.
    Off,
    /// Lorentzian linear-phase model, one isochromat per point.
    Continuous,
    /// Monte-Carlo baseline: each isochromat is replicated `k` times with
    /// frequency offsets drawn from its Lorentzian line.
    Discrete { k: u32, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinedMode {
    Off,
    /// Combine only when a waveform repeats at least three times.
    Auto,
    /// Combine every ADC-free RF block, even single-use ones.
    On,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub mode: T2PrimeMode,
    pub denominator: DenominatorMode,
    pub workers: usize,
    pub partials: usize,
    pub combined: CombinedMode,
    pub gamma_hz_per_t: f64,
    pub coils: Vec<CoilProfile>,
    /// Per-phase timers; disable for wall-clock benchmarking.
    pub detailed_timing: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mode: T2PrimeMode::Continuous,
            denominator: DenominatorMode::Squared,
            workers: 1,
            partials: 1,
            combined: CombinedMode::Auto,
            gamma_hz_per_t: crate::GAMMA_HZ_PER_T,
            coils: vec![CoilProfile::Uniform],
            detailed_timing: true,
        }
    }
}

impl SimOptions {
    fn mode_label(&self) -> String {
        match self.mode {
            T2PrimeMode::Off => "off".into(),
            T2PrimeMode::Continuous => "continuous".into(),
            T2PrimeMode::Discrete { k, seed } => format!("discrete(k={k},seed={seed})"),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Argument("workers must be >= 1".into()));
        }
        if self.partials == 0 {
            return Err(Error::Argument("partials must be >= 1".into()));
        }
        if let T2PrimeMode::Discrete { k, .. } = self.mode {
            if k == 0 {
                return Err(Error::Argument("discrete mode needs k >= 1".into()));
            }
        }
        if self.coils.is_empty() {
            return Err(Error::Argument("need at least one coil".into()));
        }
        if !(self.gamma_hz_per_t > 0.0) {
            return Err(Error::Argument("gamma must be positive".into()));
        }
        Ok(())
    }
}

/// Wall time plus per-phase worker-core seconds of one run.
#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub mode_label: String,
    pub isochromats: usize,
    pub wall_s: f64,
    pub stepping_s: f64,
    pub analytic_s: f64,
    pub combining_s: f64,
    pub sampling_s: f64,
}

impl TimingReport {
    pub const CSV_HEADER: &'static str = "phase,seconds,isochromats,mode";

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (phase, secs) in [
            ("wall", self.wall_s),
            ("stepping", self.stepping_s),
            ("analytic", self.analytic_s),
            ("combining", self.combining_s),
            ("sampling", self.sampling_s),
        ] {
            out.push_str(&format!(
                "{phase},{secs},{},{}\n",
                self.isochromats, self.mode_label
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Timers {
    stepping: f64,
    analytic: f64,
    combining: f64,
    sampling: f64,
}

impl Timers {
    fn add(&mut self, other: &Timers) {
        self.stepping += other.stepping;
        self.analytic += other.analytic;
        self.combining += other.combining;
        self.sampling += other.sampling;
    }
}

#[inline]
fn tick(detailed: bool) -> Option<Instant> {
    if detailed {
        Some(Instant::now())
    } else {
        None
    }
}

#[inline]
fn tock(t: Option<Instant>, acc: &mut f64) {
    if let Some(t) = t {
        *acc += t.elapsed().as_secs_f64();
    }
}

enum ExecEntry {
    Rf { unique: usize, adc: Vec<AdcTick> },
    Free {
        duration_s: f64,
        moment: [f64; 3],
        sample: Option<usize>,
    },
    Ideal { rot: Mat3 },
    Spoil,
}

struct RfExec {
    prep: PreparedRf,
    combine: bool,
}

struct ExecPlan {
    raster_s: f64,
    entries: Vec<ExecEntry>,
    entry_start_us: Vec<u64>,
    uniques: Vec<RfExec>,
    sample_times_us: Vec<u64>,
}

impl ExecPlan {
    fn num_samples(&self) -> usize {
        self.sample_times_us.len()
    }
}

fn build_exec(seq: &Sequence, opts: &SimOptions) -> Result<ExecPlan> {
    let plan = segment(seq)?;
    let dedup = dedup_blocks(seq);
    let uniques = dedup
        .uniques
        .iter()
        .map(|u| {
            let prep = PreparedRf::from_block(&seq.blocks[u.first_block], seq.raster_us)?;
            let combine = match opts.combined {
                CombinedMode::Off => false,
                CombinedMode::Auto => u.uses >= 3,
                CombinedMode::On => true,
            };
            Ok(RfExec { prep, combine })
        })
        .collect::<Result<Vec<_>>>()?;
    let entries = plan
        .entries
        .iter()
        .map(|e| match e {
            PlanEntry::Rf { block, adc } => ExecEntry::Rf {
                unique: dedup.unique_of_block[*block].expect("rf block has a key"),
                adc: adc.clone(),
            },
            PlanEntry::Free {
                duration_us,
                moment,
                sample,
            } => ExecEntry::Free {
                duration_s: *duration_us as f64 * 1e-6,
                moment: *moment,
                sample: *sample,
            },
            PlanEntry::IdealRf {
                flip_rad,
                phase_rad,
            } => ExecEntry::Ideal {
                rot: rot3([phase_rad.cos(), phase_rad.sin(), 0.0], -flip_rad),
            },
            PlanEntry::Spoil => ExecEntry::Spoil,
        })
        .collect();
    Ok(ExecPlan {
        raster_s: seq.raster_us as f64 * 1e-6,
        entries,
        entry_start_us: plan.entry_start_us,
        uniques,
        sample_times_us: plan.sample_times_us,
    })
}

enum Cached {
    Seven(Transition7),
    Four(Transition4),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Isochromat provider over either a phantom or an explicit list, expanded
/// by the discrete-mode replica count.
enum Provider<'a> {
    Phantom(crate::model::IsochromatSource<'a>),
    Slice(&'a [Isochromat]),
}

impl Provider<'_> {
    fn base_len(&self) -> usize {
        match self {
            Provider::Phantom(s) => s.len(),
            Provider::Slice(s) => s.len(),
        }
    }

    fn base(&self, i: usize) -> Isochromat {
        match self {
            Provider::Phantom(s) => s.get(i),
            Provider::Slice(s) => s[i],
        }
    }

    /// Expanded isochromat for a flat index: in discrete mode, replica
    /// `flat % k` of base isochromat `flat / k`, with its own Lorentzian
    /// frequency draw and `m0 / k`.
    fn make(&self, flat: usize, mode: &T2PrimeMode) -> Isochromat {
        match mode {
            T2PrimeMode::Discrete { k, seed } => {
                let k = *k as usize;
                let mut iso = self.base(flat / k);
                let h = splitmix64(splitmix64(*seed) ^ (flat as u64).wrapping_mul(0xA24B_AED4_963E_E407));
                let w = lorentzian_from_uniform(uniform_from_hash(h), iso.tissue.t2prime_s);
                iso.db0_extra_hz = w / std::f64::consts::TAU;
                iso.tissue.m0 /= k as f64;
                iso
            }
            _ => self.base(flat),
        }
    }
}

/// Full simulation of a phantom under a sequence.
pub fn run(
    phantom: &Phantom,
    sequence: &Sequence,
    options: &SimOptions,
) -> Result<(AdcStream, TimingReport)> {
    validate_phantom(phantom)?;
    let source = phantom.isochromats();
    driver(Provider::Phantom(source), sequence, options)
}

/// Full simulation of an explicit isochromat list.
pub fn run_isochromats(
    isochromats: &[Isochromat],
    sequence: &Sequence,
    options: &SimOptions,
) -> Result<(AdcStream, TimingReport)> {
    driver(Provider::Slice(isochromats), sequence, options)
}

fn validate_phantom(ph: &Phantom) -> Result<()> {
    let n = ph.num_voxels();
    for map in [&ph.m0, &ph.t1_s, &ph.t2_s, &ph.t2prime_s, &ph.db0_hz, &ph.shift_hz] {
        if map.len() != n {
            return Err(Error::Integrity(format!(
                "phantom map length {} does not match dims product {n}",
                map.len()
            )));
        }
    }
    for idx in 0..n {
        if ph.m0[idx] > 0.0 {
            ph.tissue_at(idx).validate().map_err(|e| {
                Error::Argument(format!("phantom voxel {idx}: {e}"))
            })?;
        }
    }
    Ok(())
}

fn driver(provider: Provider<'_>, sequence: &Sequence, options: &SimOptions) -> Result<(AdcStream, TimingReport)> {
    options.validate()?;
    let wall0 = Instant::now();
    let exec = build_exec(sequence, options)?;
    let replicas = match options.mode {
        T2PrimeMode::Discrete { k, .. } => k as usize,
        _ => 1,
    };
    let total = provider.base_len() * replicas;
    let n_coils = options.coils.len();
    let num_values = exec.num_samples() * n_coils;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Argument(format!("worker pool: {e}")))?;

    let deriv = matches!(options.mode, T2PrimeMode::Continuous);
    let mut partial_bufs = Vec::with_capacity(options.partials);
    let mut timers = Timers::default();
    for p in 0..options.partials {
        let lo = p * total / options.partials;
        let hi = (p + 1) * total / options.partials;
        let ranges: Vec<(usize, usize)> = (lo..hi)
            .step_by(CHUNK)
            .map(|s| (s, (s + CHUNK).min(hi)))
            .collect();
        let chunk_results: Result<Vec<(Vec<Complex64>, Timers)>> = pool.install(|| {
            ranges
                .par_iter()
                .map(|&(a, b)| {
                    let mut buf = vec![Complex64::new(0.0, 0.0); num_values];
                    let mut t = Timers::default();
                    let mut cache: Vec<Option<Cached>> = Vec::new();
                    let mut weights = Vec::new();
                    for flat in a..b {
                        let iso = provider.make(flat, &options.mode);
                        cache.clear();
                        cache.resize_with(exec.uniques.len(), || None);
                        weights.clear();
                        weights.extend(options.coils.iter().map(|c| c.weight(iso.position_m)));
                        if deriv {
                            simulate_one::<true>(
                                &iso, &exec, options, &weights, &mut buf, &mut cache, &mut t, flat,
                            )?;
                        } else {
                            simulate_one::<false>(
                                &iso, &exec, options, &weights, &mut buf, &mut cache, &mut t, flat,
                            )?;
                        }
                    }
                    Ok((buf, t))
                })
                .collect()
        });
        let chunks = chunk_results?;
        let n_chunks = chunks.len();
        let mut parts = Vec::with_capacity(n_chunks);
        for (i, (buf, t)) in chunks.into_iter().enumerate() {
            timers.add(&t);
            parts.push(AdcPartial { index: i, data: buf });
        }
        let merged = if n_chunks == 0 {
            vec![Complex64::new(0.0, 0.0); num_values]
        } else {
            accumulate(parts, n_chunks)?
        };
        partial_bufs.push(AdcPartial {
            index: p,
            data: merged,
        });
    }
    let data = accumulate(partial_bufs, options.partials)?;

    let stream = AdcStream {
        sample_times_us: exec.sample_times_us.clone(),
        num_coils: n_coils,
        data,
        meta: sequence.meta.clone(),
    };
    let report = TimingReport {
        mode_label: options.mode_label(),
        isochromats: total,
        wall_s: wall0.elapsed().as_secs_f64(),
        stepping_s: timers.stepping,
        analytic_s: timers.analytic,
        combining_s: timers.combining,
        sampling_s: timers.sampling,
    };
    Ok((stream, report))
}

/// Simulates one isochromat through the plan, accumulating its sample
/// contributions. `DERIV` selects the 7-element path (continuous T2') or
/// the plain 4-element path (off / discrete).
#[allow(clippy::too_many_arguments)]
fn simulate_one<const DERIV: bool>(
    iso: &Isochromat,
    exec: &ExecPlan,
    opts: &SimOptions,
    weights: &[Complex64],
    buf: &mut [Complex64],
    cache: &mut [Option<Cached>],
    timers: &mut Timers,
    flat_index: usize,
) -> Result<()> {
    let detailed = opts.detailed_timing;
    let ctx = IsoCtx::new(iso, opts.gamma_hz_per_t, exec.raster_s);
    let t = &iso.tissue;
    let (m0, t2p) = (t.m0, t.t2prime_s);
    let n_samples = exec.num_samples();

    let mut m7 = Mag7::equilibrium();
    let mut m4 = [0.0, 0.0, 1.0, 1.0];
    let mut steps_done: u64 = 0;
    let mut next_check: u64 = FINITE_CHECK_INTERVAL;
    // Free pieces repeat durations (ADC dwell); memoize the last factors.
    let mut memo_dur = f64::NAN;
    let mut memo = FreeFactors { e2: 1.0, e1: 1.0 };

    for (ei, entry) in exec.entries.iter().enumerate() {
        match entry {
            ExecEntry::Rf { unique, adc } => {
                let rf = &exec.uniques[*unique];
                let prep = &rf.prep;
                if rf.combine && adc.is_empty() {
                    if cache[*unique].is_none() {
                        let t0 = tick(detailed);
                        cache[*unique] = Some(if DERIV {
                            Cached::Seven(build_combined(prep, &ctx))
                        } else {
                            Cached::Four(build_combined_m4(prep, &ctx))
                        });
                        tock(t0, &mut timers.combining);
                    }
                    let t0 = tick(detailed);
                    match cache[*unique].as_ref().unwrap() {
                        Cached::Seven(c) => c.apply(&mut m7),
                        Cached::Four(c) => c.apply(&mut m4),
                    }
                    tock(t0, &mut timers.stepping);
                } else {
                    // Direct stepping; in-block samples are emitted between
                    // steps and counted with the stepping phase.
                    let t0 = tick(detailed);
                    let dt = prep.dt_s;
                    let n = prep.num_steps();
                    let const_z: Option<(f64, f64)> = if prep.has_grad {
                        None
                    } else {
                        Some((-ctx.offres_rad * dt).sin_cos())
                    };
                    let mut next_tick = 0;
                    for step in 0..=n {
                        while next_tick < adc.len() && adc[next_tick].after_step == step {
                            emit::<DERIV>(
                                buf, n_samples, adc[next_tick].sample, &m7, &m4, m0, t2p,
                                weights, opts.denominator,
                            );
                            next_tick += 1;
                        }
                        if step == n {
                            break;
                        }
                        let (zs, zc) = match const_z {
                            Some(v) => v,
                            None => (-ctx.bz_at(prep, step) * dt).sin_cos(),
                        };
                        let xy = prep.xy[step].as_ref();
                        if DERIV {
                            step_m7_prepared(&mut m7, xy, zc, zs, dt, &ctx.factors);
                        } else {
                            step_m4_prepared(&mut m4, xy, zc, zs, &ctx.factors);
                        }
                    }
                    tock(t0, &mut timers.stepping);
                }
                steps_done += prep.num_steps() as u64;
            }
            ExecEntry::Free {
                duration_s,
                moment,
                sample,
            } => {
                let t0 = tick(detailed);
                if *duration_s != memo_dur {
                    memo = FreeFactors::new(*duration_s, t.t1_s, t.t2_s);
                    memo_dur = *duration_s;
                }
                let bz_integral = moment[0] * ctx.r_scaled[0]
                    + moment[1] * ctx.r_scaled[1]
                    + moment[2] * ctx.r_scaled[2]
                    + ctx.offres_rad * duration_s;
                if DERIV {
                    propagate_free_m7_with(&mut m7, &memo, *duration_s, bz_integral);
                } else {
                    propagate_free_m4_with(&mut m4, &memo, bz_integral);
                }
                tock(t0, &mut timers.analytic);
                if let Some(s) = sample {
                    let t1 = tick(detailed);
                    emit::<DERIV>(
                        buf, n_samples, *s, &m7, &m4, m0, t2p, weights, opts.denominator,
                    );
                    tock(t1, &mut timers.sampling);
                }
                steps_done += 1;
            }
            ExecEntry::Ideal { rot } => {
                if DERIV {
                    let v = &mut m7.0;
                    let m3 = rot.mul_vec([v[0], v[1], v[2]]);
                    let d3 = rot.mul_vec([v[4], v[5], v[6]]);
                    v[0] = m3[0];
                    v[1] = m3[1];
                    v[2] = m3[2];
                    v[4] = d3[0];
                    v[5] = d3[1];
                    v[6] = d3[2];
                } else {
                    let m3 = rot.mul_vec([m4[0], m4[1], m4[2]]);
                    m4[0] = m3[0];
                    m4[1] = m3[1];
                    m4[2] = m3[2];
                }
            }
            ExecEntry::Spoil => {
                if DERIV {
                    crate::kernel::apply_spoil(&mut m7);
                } else {
                    m4[0] = 0.0;
                    m4[1] = 0.0;
                }
            }
        }
        if steps_done >= next_check {
            next_check = steps_done + FINITE_CHECK_INTERVAL;
            let finite = if DERIV {
                m7.is_finite()
            } else {
                m4.iter().all(|v| v.is_finite())
            };
            if !finite {
                return Err(Error::Numerics(format!(
                    "non-finite state for isochromat {flat_index} near t = {} us",
                    exec.entry_start_us[ei]
                )));
            }
        }
    }
    let finite = if DERIV {
        m7.is_finite()
    } else {
        m4.iter().all(|v| v.is_finite())
    };
    if !finite {
        return Err(Error::Numerics(format!(
            "non-finite state for isochromat {flat_index} at sequence end"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn emit<const DERIV: bool>(
    buf: &mut [Complex64],
    n_samples: usize,
    sample: usize,
    m7: &Mag7,
    m4: &[f64; 4],
    m0: f64,
    t2prime_s: f64,
    weights: &[Complex64],
    denominator: DenominatorMode,
) {
    for (c, w) in weights.iter().enumerate() {
        let v = if DERIV {
            sample_continuous(m7, m0, t2prime_s, *w, denominator)
        } else {
            base_sample(m4[0], m4[1], m0, *w)
        };
        buf[c * n_samples + sample] += v;
    }
}

/// One row of the CPMG demo time series, sampled at the raster.
#[derive(Debug, Clone, Copy)]
pub struct CpmgDemoRow {
    pub t_us: u64,
    pub b1x_hz: f64,
    pub b1y_hz: f64,
    pub m: [f64; 3],
    pub dm: [f64; 3],
    /// Phase slope dphi/dw in seconds.
    pub slope_s: f64,
    /// |sample| without reversible decay.
    pub sample_t2: f64,
    /// |sample| with reversible decay.
    pub sample_t2star: f64,
}

/// Dense one-isochromat CPMG trace: with-RF intervals stepped at the raster,
/// RF-free intervals advanced analytically one raster tick at a time.
pub fn run_cpmg_demo(
    tissue: &TissueParams,
    ideal: bool,
    denominator: DenominatorMode,
) -> Result<Vec<CpmgDemoRow>> {
    let seq = cpmg_demo_sequence(ideal);
    let raster_s = seq.raster_us as f64 * 1e-6;
    let iso = Isochromat {
        position_m: [0.0; 3],
        tissue: *tissue,
        db0_extra_hz: 0.0,
    };
    let ctx = IsoCtx::new(&iso, crate::GAMMA_HZ_PER_T, raster_s);
    let one = Complex64::new(1.0, 0.0);
    let mut rows = Vec::with_capacity((seq.total_duration_us() / seq.raster_us) as usize);
    let mut state = Mag7::equilibrium();
    let mut t_us = 0u64;

    let mut push = |state: &Mag7, b1x_hz: f64, b1y_hz: f64, t_us: u64| {
        let sample =
            sample_continuous(state, tissue.m0, tissue.t2prime_s, one, denominator).norm();
        rows.push(CpmgDemoRow {
            t_us,
            b1x_hz,
            b1y_hz,
            m: [state.mx(), state.my(), state.mz()],
            dm: [state.dmx(), state.dmy(), state.dmz()],
            slope_s: crate::sampling::phase_slope(state, denominator),
            sample_t2: tissue.m0 * (state.mx() * state.mx() + state.my() * state.my()).sqrt(),
            sample_t2star: sample,
        });
    };

    for block in &seq.blocks {
        match block {
            Block::Rf {
                b1_hz,
                b1_phase_rad,
                ..
            } => {
                let prep = PreparedRf::from_block(block, seq.raster_us)?;
                let (zs, zc) = (-ctx.offres_rad * raster_s).sin_cos();
                for step in 0..prep.num_steps() {
                    step_m7_prepared(
                        &mut state,
                        prep.xy[step].as_ref(),
                        zc,
                        zs,
                        raster_s,
                        &ctx.factors,
                    );
                    t_us += seq.raster_us;
                    let ph = b1_phase_rad[step];
                    push(&state, b1_hz[step] * ph.cos(), b1_hz[step] * ph.sin(), t_us);
                }
            }
            Block::Free { duration_us, .. } => {
                let f = FreeFactors::new(raster_s, tissue.t1_s, tissue.t2_s);
                for _ in 0..(*duration_us / seq.raster_us) {
                    propagate_free_m7_with(
                        &mut state,
                        &f,
                        raster_s,
                        ctx.offres_rad * raster_s,
                    );
                    t_us += seq.raster_us;
                    push(&state, 0.0, 0.0, t_us);
                }
            }
            Block::IdealRf {
                flip_rad,
                phase_rad,
            } => {
                crate::kernel::apply_ideal_pulse(&mut state, *flip_rad, *phase_rad);
            }
            Block::Spoil => crate::kernel::apply_spoil(&mut state),
        }
    }
    Ok(rows)
}

/// One benchmark table row.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub label: String,
    pub report: TimingReport,
    /// Max relative sample deviation against the matching direct-stepping
    /// run, for the combined rows.
    pub max_rel_dev: Option<f64>,
}

fn max_rel_dev(a: &AdcStream, b: &AdcStream) -> f64 {
    a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (x - y).norm() / y.norm().max(1e-12))
        .fold(0.0, f64::max)
}

/// Benchmark protocol: the four {T2' off/on} x {combined off/on} runs of the
/// given sequence, plus the FID pair (analytic free interval vs the same
/// interval forced through the stepped path as an all-zero RF pulse).
pub fn benchmark(
    phantom: &Phantom,
    sequence: &Sequence,
    base: &SimOptions,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let opts = |mode: T2PrimeMode, combined: CombinedMode| SimOptions {
        mode,
        combined,
        detailed_timing: false,
        ..base.clone()
    };

    let (off_direct, r1) = run(phantom, sequence, &opts(T2PrimeMode::Off, CombinedMode::Off))?;
    rows.push(BenchRow {
        label: "no-t2p".into(),
        report: r1,
        max_rel_dev: None,
    });
    let (on_direct, r2) = run(
        phantom,
        sequence,
        &opts(T2PrimeMode::Continuous, CombinedMode::Off),
    )?;
    rows.push(BenchRow {
        label: "t2p".into(),
        report: r2,
        max_rel_dev: None,
    });
    let (off_comb, r3) = run(phantom, sequence, &opts(T2PrimeMode::Off, CombinedMode::On))?;
    rows.push(BenchRow {
        label: "no-t2p+combined".into(),
        report: r3,
        max_rel_dev: Some(max_rel_dev(&off_comb, &off_direct)),
    });
    let (on_comb, r4) = run(
        phantom,
        sequence,
        &opts(T2PrimeMode::Continuous, CombinedMode::On),
    )?;
    rows.push(BenchRow {
        label: "t2p+combined".into(),
        report: r4,
        max_rel_dev: Some(max_rel_dev(&on_comb, &on_direct)),
    });

    let fid = fid_sequence();
    let fid_stepped = force_stepped(&fid)?;
    let (_, r5) = run(
        phantom,
        &fid,
        &opts(T2PrimeMode::Continuous, CombinedMode::Off),
    )?;
    rows.push(BenchRow {
        label: "fid-analytic".into(),
        report: r5,
        max_rel_dev: None,
    });
    let (_, r6) = run(
        phantom,
        &fid_stepped,
        &opts(T2PrimeMode::Continuous, CombinedMode::Off),
    )?;
    rows.push(BenchRow {
        label: "fid-update".into(),
        report: r6,
        max_rel_dev: None,
    });
    Ok(rows)
}
