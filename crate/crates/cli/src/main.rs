//! `mrsim` command line: phantom generation, simulation, reconstruction,
//! the CPMG demo, and the benchmark grid. Emits CSV / PGM / binary files;
//! no interactive UI.
//!
//! Exit codes: 0 success, 2 usage, 3 input integrity, 4 numerical failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mrsim_core::engine::{
    benchmark, run, run_cpmg_demo, CombinedMode, SimOptions, T2PrimeMode, TimingReport,
};
use mrsim_core::model::{
    circles_layout, make_circles_phantom, pair_region_masks, read_phantom, table1_rows,
    write_phantom, CircleRow, TissueParams,
};
use mrsim_core::recon::{grid_cartesian, ifft2_magnitude, write_image};
use mrsim_core::sampling::{read_stream, write_stream, DenominatorMode};
use mrsim_core::seqio::{
    cpmg_demo_sequence, epi_sequence, fid_sequence, parse_sequence, rare_sequence,
    serialize_sequence, spgr_sequence, EpiParams, RareParams, RfKind, Sequence, SpgrParams,
};
use mrsim_core::Error;

#[derive(Parser)]
#[command(name = "mrsim", version, about = "MR acquisition simulator with exact reversible dephasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom file.
    Phantom(PhantomArgs),
    /// Generate a builtin sequence file.
    Seq(SeqArgs),
    /// Simulate a sequence over a phantom into an ADC stream.
    Simulate(SimulateArgs),
    /// One-isochromat CPMG trace as CSV.
    DemoCpmg(DemoArgs),
    /// Timing grid: T2' on/off x combined on/off, plus the FID pair.
    Bench(BenchArgs),
    /// Cartesian reconstruction of a stream into PGM + raw images.
    Recon(ReconArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Phantom kind; only `circles` is built in.
    kind: String,
    /// Grid size, e.g. 64,64,4
    #[arg(long, value_parser = parse_triplet_usize, default_value = "64,64,4")]
    dims: [usize; 3],
    /// Voxel spacing in mm, e.g. 3.75,3.75,3
    #[arg(long, value_parser = parse_triplet_f64, default_value = "3.75,3.75,3")]
    spacing_mm: [f64; 3],
    /// Subvoxel split factors.
    #[arg(long, value_parser = parse_triplet_u32, default_value = "1,1,1")]
    subvoxels: [u32; 3],
    /// JSON file with parameter rows overriding the builtin table.
    #[arg(long)]
    rows_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeqArgs {
    /// fid | cpmg | cpmg-ideal | spgr | rare | epi
    name: String,
    #[arg(long, default_value_t = 64)]
    n_ro: u32,
    #[arg(long, default_value_t = 64)]
    n_pe: u32,
    #[arg(long, value_parser = parse_pair_f64, default_value = "240,240")]
    fov_mm: [f64; 2],
    #[arg(long, default_value_t = 12.0)]
    tr_ms: f64,
    #[arg(long, default_value_t = 5.0)]
    te_ms: f64,
    /// Echo spacing for rare.
    #[arg(long, default_value_t = 10.0)]
    esp_ms: f64,
    #[arg(long, default_value_t = 1)]
    etl: u32,
    #[arg(long, default_value_t = 90.0)]
    flip_deg: f64,
    /// RF realization: sinc | hard | ideal
    #[arg(long, value_enum, default_value_t = RfArg::Sinc)]
    rf: RfArg,
    #[arg(long, default_value_t = 2000)]
    rf_dur_us: u64,
    #[arg(long, default_value_t = 3)]
    lobes: u32,
    #[arg(long, default_value_t = 10)]
    dwell_us: u64,
    #[arg(long, default_value_t = 1)]
    dummies: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RfArg {
    Sinc,
    Hard,
    Ideal,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long)]
    phantom: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = T2PrimeArg::Continuous)]
    t2prime: T2PrimeArg,
    /// Replicas per isochromat in discrete mode.
    #[arg(long, default_value_t = 100)]
    k: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    partials: usize,
    #[arg(long, value_enum, default_value_t = CombinedArg::Auto)]
    combined: CombinedArg,
    #[arg(long, value_enum, default_value_t = DenominatorArg::Squared)]
    denominator: DenominatorArg,
    /// Gyromagnetic ratio over 2*pi, Hz/T.
    #[arg(long, default_value_t = mrsim_core::GAMMA_HZ_PER_T)]
    gamma_hz: f64,
    /// Timing report CSV path.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum T2PrimeArg {
    Off,
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombinedArg {
    On,
    Off,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenominatorArg {
    Squared,
    Paper,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    /// Instantaneous pulses instead of 2 ms sinc pulses.
    #[arg(long)]
    ideal: bool,
    #[arg(long, default_value_t = 0.1)]
    t1: f64,
    #[arg(long, default_value_t = 0.02)]
    t2: f64,
    #[arg(long, default_value_t = 0.005)]
    t2prime: f64,
    #[arg(long, value_enum, default_value_t = DenominatorArg::Squared)]
    denominator: DenominatorArg,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    phantom: PathBuf,
    #[arg(long)]
    seq: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Output prefix; writes PREFIX.pgm, PREFIX.f32, PREFIX.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    coil: usize,
    /// Phantom file for region statistics.
    #[arg(long)]
    phantom: Option<PathBuf>,
    /// Concentric pair index for the inner/outer ratio (needs --phantom).
    #[arg(long)]
    pair: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrsim: {e}");
            ExitCode::from(match e {
                Error::Argument(_) => 2,
                Error::Parse(_) | Error::Integrity(_) | Error::Layout(_) | Error::Io(_) => 3,
                Error::Numerics(_) => 4,
            })
        }
    }
}

fn dispatch(cli: Cli) -> mrsim_core::Result<()> {
    match cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Seq(a) => cmd_seq(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::DemoCpmg(a) => cmd_demo_cpmg(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Recon(a) => cmd_recon(a),
    }
}

fn create(path: &Path) -> mrsim_core::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> mrsim_core::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn load_phantom(path: &Path) -> mrsim_core::Result<mrsim_core::model::Phantom> {
    read_phantom(&mut open(path)?)
}

fn load_sequence(path: &Path) -> mrsim_core::Result<Sequence> {
    parse_sequence(&std::fs::read_to_string(path)?)
}

fn cmd_phantom(a: PhantomArgs) -> mrsim_core::Result<()> {
    if a.kind != "circles" {
        return Err(Error::Argument(format!(
            "unknown phantom kind '{}' (expected 'circles')",
            a.kind
        )));
    }
    let rows: Vec<CircleRow> = match &a.rows_file {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Parse(format!("rows file: {e}")))?,
        None => table1_rows(),
    };
    let spacing = [
        a.spacing_mm[0] * 1e-3,
        a.spacing_mm[1] * 1e-3,
        a.spacing_mm[2] * 1e-3,
    ];
    let mut ph = make_circles_phantom(a.dims, spacing, &rows)?;
    ph.subvoxel_factors = a.subvoxels;
    // Surface tissue warnings without failing the build; first one verbatim,
    // the rest counted.
    let mut warned = 0usize;
    for idx in 0..ph.num_voxels() {
        if ph.m0[idx] > 0.0 {
            for w in ph.tissue_at(idx).validate()? {
                if warned == 0 {
                    eprintln!("mrsim: warning: voxel {idx}: {w}");
                }
                warned += 1;
            }
        }
    }
    if warned > 1 {
        eprintln!("mrsim: warning: {} more voxels with warnings", warned - 1);
    }
    write_phantom(&ph, &mut create(&a.out)?)?;
    println!(
        "phantom: {}x{}x{} voxels, {} nonzero, {} isochromats after splitting",
        ph.dims[0],
        ph.dims[1],
        ph.dims[2],
        ph.nonzero_voxels(),
        ph.total_isochromats()
    );
    Ok(())
}

fn cmd_seq(a: SeqArgs) -> mrsim_core::Result<()> {
    let rf = match a.rf {
        RfArg::Sinc => RfKind::Sinc {
            duration_us: a.rf_dur_us,
            lobes: a.lobes,
        },
        RfArg::Hard => RfKind::Hard {
            duration_us: a.rf_dur_us,
        },
        RfArg::Ideal => RfKind::Ideal,
    };
    let fov_m = [a.fov_mm[0] * 1e-3, a.fov_mm[1] * 1e-3];
    let ms = |v: f64| (v * 1000.0).round() as u64;
    let seq = match a.name.as_str() {
        "fid" => fid_sequence(),
        "cpmg" => cpmg_demo_sequence(false),
        "cpmg-ideal" => cpmg_demo_sequence(true),
        "spgr" => spgr_sequence(&SpgrParams {
            n_ro: a.n_ro,
            n_pe: a.n_pe,
            fov_m,
            tr_us: ms(a.tr_ms),
            te_us: ms(a.te_ms),
            flip_rad: a.flip_deg.to_radians(),
            rf,
            dwell_us: a.dwell_us,
            dummies: a.dummies,
            gamma_hz_per_t: mrsim_core::GAMMA_HZ_PER_T,
        })?,
        "rare" => rare_sequence(&RareParams {
            etl: a.etl,
            n_ro: a.n_ro,
            n_pe: a.n_pe,
            fov_m,
            esp_us: ms(a.esp_ms),
            tr_us: ms(a.tr_ms),
            rf,
            dwell_us: a.dwell_us,
            dummies: a.dummies,
            gamma_hz_per_t: mrsim_core::GAMMA_HZ_PER_T,
        })?,
        "epi" => epi_sequence(&EpiParams {
            n_ro: a.n_ro,
            n_pe: a.n_pe,
            fov_m,
            dwell_us: a.dwell_us,
            rf,
            blip_us: 10,
            gamma_hz_per_t: mrsim_core::GAMMA_HZ_PER_T,
        })?,
        other => {
            return Err(Error::Argument(format!(
                "unknown sequence '{other}' (fid, cpmg, cpmg-ideal, spgr, rare, epi)"
            )))
        }
    };
    let mut w = create(&a.out)?;
    w.write_all(serialize_sequence(&seq)?.as_bytes())?;
    w.write_all(b"\n")?;
    println!(
        "sequence '{}': {} blocks, {} us total",
        a.name,
        seq.blocks.len(),
        seq.total_duration_us()
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> mrsim_core::Result<()> {
    let phantom = load_phantom(&a.phantom)?;
    let sequence = load_sequence(&a.seq)?;
    let options = SimOptions {
        mode: match a.t2prime {
            T2PrimeArg::Off => T2PrimeMode::Off,
            T2PrimeArg::Continuous => T2PrimeMode::Continuous,
            T2PrimeArg::Discrete => T2PrimeMode::Discrete {
                k: a.k,
                seed: a.seed,
            },
        },
        denominator: match a.denominator {
            DenominatorArg::Squared => DenominatorMode::Squared,
            DenominatorArg::Paper => DenominatorMode::PaperSqrt,
        },
        workers: a.workers,
        partials: a.partials,
        combined: match a.combined {
            CombinedArg::On => CombinedMode::On,
            CombinedArg::Off => CombinedMode::Off,
            CombinedArg::Auto => CombinedMode::Auto,
        },
        gamma_hz_per_t: a.gamma_hz,
        detailed_timing: true,
        ..Default::default()
    };
    let dedup = mrsim_core::transitions::dedup_blocks(&sequence);
    let (stream, report) = run(&phantom, &sequence, &options)?;
    write_stream(&stream, &mut create(&a.out)?)?;
    if let Some(path) = &a.timing {
        let mut w = create(path)?;
        writeln!(w, "{}", TimingReport::CSV_HEADER)?;
        w.write_all(report.csv_rows().as_bytes())?;
    }
    println!(
        "simulated {} isochromats, {} samples x {} coils in {:.3} s ({} unique rf pulses, {} repeated)",
        report.isochromats,
        stream.num_samples(),
        stream.num_coils,
        report.wall_s,
        dedup.num_unique(),
        dedup.num_repeated(),
    );
    Ok(())
}

fn cmd_demo_cpmg(a: DemoArgs) -> mrsim_core::Result<()> {
    let tissue = TissueParams {
        m0: 1.0,
        t1_s: a.t1,
        t2_s: a.t2,
        t2prime_s: a.t2prime,
        db0_hz: 0.0,
        shift_hz: 0.0,
    };
    tissue.validate()?;
    let denom = match a.denominator {
        DenominatorArg::Squared => DenominatorMode::Squared,
        DenominatorArg::Paper => DenominatorMode::PaperSqrt,
    };
    let rows = run_cpmg_demo(&tissue, a.ideal, denom)?;
    let mut w = create(&a.out)?;
    writeln!(
        w,
        "t_us,b1x_hz,b1y_hz,mx,my,mz,dmx,dmy,dmz,sample_t2,sample_t2star"
    )?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t_us,
            r.b1x_hz,
            r.b1y_hz,
            r.m[0],
            r.m[1],
            r.m[2],
            r.dm[0],
            r.dm[1],
            r.dm[2],
            r.sample_t2,
            r.sample_t2star
        )?;
    }
    println!("wrote {} rows", rows.len());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> mrsim_core::Result<()> {
    let phantom = load_phantom(&a.phantom)?;
    let sequence = load_sequence(&a.seq)?;
    let base = SimOptions {
        workers: a.workers,
        ..Default::default()
    };
    let rows = benchmark(&phantom, &sequence, &base)?;
    let wall = |label: &str| {
        rows.iter()
            .find(|r| r.label == label)
            .map(|r| r.report.wall_s)
            .unwrap_or(f64::NAN)
    };
    let mut w = create(&a.out)?;
    writeln!(w, "kind,label,value,isochromats,max_rel_dev,paper")?;
    for r in &rows {
        writeln!(
            w,
            "run,{},{},{},{},",
            r.label,
            r.report.wall_s,
            r.report.isochromats,
            r.max_rel_dev.map(|v| v.to_string()).unwrap_or_default()
        )?;
    }
    let ratios = [
        ("fid_update_over_analytic", wall("fid-update") / wall("fid-analytic"), "19"),
        ("t2p_over_no_t2p", wall("t2p") / wall("no-t2p"), "2.0-2.7"),
        (
            "direct_over_combined_t2p",
            wall("t2p") / wall("t2p+combined"),
            "17",
        ),
        (
            "direct_over_combined_no_t2p",
            wall("no-t2p") / wall("no-t2p+combined"),
            "16",
        ),
    ];
    for (label, value, paper) in ratios {
        writeln!(w, "ratio,{label},{value},,,{paper}")?;
        println!("{label}: {value:.2} (paper: {paper})");
    }
    Ok(())
}

fn cmd_recon(a: ReconArgs) -> mrsim_core::Result<()> {
    let stream = read_stream(&mut open(&a.stream)?)?;
    let grid = grid_cartesian(&stream, a.coil)?;
    let img = ifft2_magnitude(&grid);

    let base = a.out.clone();
    let with_ext = |ext: &str| {
        let mut p = base.clone();
        let name = format!(
            "{}.{ext}",
            p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        );
        p.set_file_name(name);
        p
    };
    write_image(
        &img,
        grid.n_ro,
        grid.n_lines,
        &mut create(&with_ext("pgm"))?,
        &mut create(&with_ext("f32"))?,
        &mut create(&with_ext("json"))?,
    )?;
    println!("image {}x{}", grid.n_ro, grid.n_lines);

    if let (Some(phantom_path), Some(pair)) = (&a.phantom, a.pair) {
        let ph = load_phantom(phantom_path)?;
        if ph.dims[0] != grid.n_ro || ph.dims[1] != grid.n_lines {
            return Err(Error::Integrity(format!(
                "phantom grid {}x{} does not match image {}x{}",
                ph.dims[0], ph.dims[1], grid.n_ro, grid.n_lines
            )));
        }
        let layout = circles_layout(ph.dims, ph.spacing_m, 9)?;
        let erode = ph.spacing_m[0].max(ph.spacing_m[1]);
        let (inner, outer) = pair_region_masks(ph.dims, ph.spacing_m, &layout, pair, erode)?;
        if !inner.contains(&true) || !outer.contains(&true) {
            return Err(Error::Integrity(format!(
                "phantom grid too coarse for region statistics on pair {pair}"
            )));
        }
        let mean = |mask: &[bool]| {
            let vals: Vec<f64> = img
                .iter()
                .zip(mask.iter())
                .filter_map(|(v, &m)| m.then_some(*v))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let ratio = mean(&inner) / mean(&outer);
        println!("pair {pair} inner/outer region-mean ratio: {ratio:.4}");
    }
    Ok(())
}

fn parse_triplet_usize(s: &str) -> Result<[usize; 3], String> {
    parse_n(s).map(|v: Vec<usize>| [v[0], v[1], v[2]])
}

fn parse_triplet_u32(s: &str) -> Result<[u32; 3], String> {
    parse_n(s).map(|v: Vec<u32>| [v[0], v[1], v[2]])
}

fn parse_triplet_f64(s: &str) -> Result<[f64; 3], String> {
    parse_n(s).map(|v: Vec<f64>| [v[0], v[1], v[2]])
}

fn parse_pair_f64(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 2 {
        return Err(format!("expected 2 comma-separated values, got {}", v.len()));
    }
    Ok([v[0], v[1]])
}

fn parse_n<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 3 {
        return Err(format!("expected 3 comma-separated values, got {}", v.len()));
    }
    Ok(v)
}
