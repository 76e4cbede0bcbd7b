//! `twinbeam`: simulate twin-beam frame stacks and calibrate detector
//! efficiency from them.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use twinbeam::estimation::{
    area_scan::AreaScan, calibrate, estimators, extract_series, sigma_spatial_map,
};
use twinbeam::io::stack::{config_digest, digest_hex, StackReader, StackWriter};
use twinbeam::io::{tables, RunConfig};
use twinbeam::scenarios::{self, PUBLISHED_TABLE1, PUBLISHED_TABLE1_U};
use twinbeam::simulator::{Frame, FrameKind, Simulator};
use twinbeam::{selftest, Error};

const PDC_FILE: &str = "pdc.tbs";
const BACKGROUND_FILE: &str = "background.tbs";

#[derive(Parser)]
#[command(name = "twinbeam", version, about = "Absolute CCD calibration with spatially multimode twin beams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Directory holding pdc.tbs and background.tbs; defaults to --out.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Override the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Only log errors.
    #[arg(long, short)]
    quiet: bool,
    /// More logging (-v info, -vv debug).
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate PDC-on and background stacks.
    Simulate(Common),
    /// Map sigma_spatial over idler displacements and report the argmin.
    FindCs(Common),
    /// Noise reduction against detection area.
    AreaScan(Common),
    /// Full calibration chain with uncertainty budget.
    Calibrate(Common),
    /// Canned Table-1-like run, tabulated next to the published values.
    ReproduceTable1(Common),
    /// Reduced-scale analytic-vs-Monte-Carlo checks.
    Selftest(Common),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0} self-test check(s) failed")]
    Selftest(usize),
}

impl CliError {
    /// Stable exit codes per error family.
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Selftest(_) => 10,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Json(_) | Error::UnknownStrategy { .. } => 3,
                Error::Io { .. } | Error::Csv(_) => 4,
                Error::CorruptHeader { .. }
                | Error::TruncatedPayload { .. }
                | Error::DigestMismatch { .. }
                | Error::NonIntegerCounts { .. } => 5,
                Error::Domain(_) | Error::Geometry(_) | Error::Bounds { .. } => 6,
                Error::DivisionByZero(_) | Error::Degenerate(_) => 7,
                Error::Resource(_) => 8,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            2 => "usage",
            3 => "config",
            4 => "io",
            5 => "format",
            6 => "domain",
            7 => "numeric",
            8 => "resource",
            _ => "selftest",
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

impl Common {
    fn input_dir(&self) -> &Path {
        self.input.as_deref().unwrap_or(&self.out)
    }

    fn run_config(&self) -> CliResult<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("--config is required for this command".into()))?;
        let mut cfg = RunConfig::load(path)?;
        self.apply_seed(&mut cfg);
        Ok(cfg)
    }

    fn apply_seed(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.experiment.master_seed = seed;
        }
    }
}

fn ensure_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })?;
    Ok(())
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn simulate(c: &Common) -> CliResult {
    let run = c.run_config()?;
    ensure_dir(&c.out)?;
    let sim = Simulator::new(run.experiment.clone())?;
    let chunk = run.analysis.chunk_frames;
    let mut files = Vec::new();
    for (kind, name, count) in [
        (FrameKind::PdcOn, PDC_FILE, run.analysis.n_pdc),
        (FrameKind::Background, BACKGROUND_FILE, run.analysis.n_background),
    ] {
        let path = c.out.join(name);
        let mut writer = StackWriter::create(&path, &run.experiment, kind)?;
        let (mut s1, mut s2) = (0.0, 0.0);
        sim.for_each_chunk(kind, count, chunk, |frames| {
            for f in frames {
                s1 += f.pulse_energy;
                s2 += f.pulse_energy * f.pulse_energy;
            }
            writer.push(frames)
        })?;
        let header = writer.finish()?;
        let n = count as f64;
        let energy_std = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0).sqrt();
        let digest = digest_hex(&header.digest);
        info!("wrote {} ({count} {} frames), config digest {digest}, pulse-energy std {energy_std:.4}", path.display(), kind.label());
        files.push(json!({
            "file": path.display().to_string(),
            "kind": kind.label(),
            "frames": count,
            "config_digest": digest,
            "pulse_energy_std": energy_std,
        }));
    }
    run.save(&c.out.join("run.json"))?;
    emit(json!({ "command": "simulate", "stacks": files }));
    Ok(())
}

fn open_stack(dir: &Path, name: &str, run: &RunConfig) -> CliResult<StackReader> {
    let reader = StackReader::open(&dir.join(name))?;
    if reader.header().digest != config_digest(&run.experiment)? {
        warn!("{name} was generated from a different experiment configuration than --config");
    }
    Ok(reader)
}

fn read_all(reader: &mut StackReader) -> CliResult<Vec<Frame>> {
    Ok(reader.next_chunk(usize::MAX)?)
}

fn find_cs(c: &Common) -> CliResult {
    let run = c.run_config()?;
    let mut reader = open_stack(c.input_dir(), PDC_FILE, &run)?;
    let geometry = reader.config().geometry;
    let frames = read_all(&mut reader)?;
    let map = sigma_spatial_map(&frames, &run.analysis.signal, run.analysis.search_extent, &geometry)?;
    ensure_dir(&c.out)?;
    tables::write_cs_map(&c.out.join("cs_map.csv"), &map)?;
    tables::write_cs_summary(&c.out.join("cs_summary.csv"), &map)?;
    if !map.ties.is_empty() {
        warn!("{} displacements tie with the minimum", map.ties.len());
    }
    emit(json!({
        "command": "find-cs",
        "argmin": [map.argmin.0, map.argmin.1],
        "min": map.min,
        "plateau": map.plateau,
        "dip": map.dip_depth(),
        "ties": map.ties.len(),
    }));
    Ok(())
}

fn area_scan(c: &Common) -> CliResult {
    let run = c.run_config()?;
    let a = &run.analysis;
    if a.areas.is_empty() {
        return Err(CliError::Usage("analysis.areas is empty".into()));
    }
    let mut pdc = open_stack(c.input_dir(), PDC_FILE, &run)?;
    let mut bg = open_stack(c.input_dir(), BACKGROUND_FILE, &run)?;
    let cfg = pdc.config().clone();
    let mut scan = AreaScan::new(cfg.geometry, cfg.modes.coherence_cell_px, a.cs_shift, a.anchor(), &a.areas)?;
    loop {
        let frames = pdc.next_chunk(a.chunk_frames)?;
        if frames.is_empty() {
            break;
        }
        scan.push_pdc(&frames)?;
    }
    loop {
        let frames = bg.next_chunk(a.chunk_frames)?;
        if frames.is_empty() {
            break;
        }
        scan.push_background(&frames)?;
    }
    let points = scan.finish()?;
    ensure_dir(&c.out)?;
    tables::write_area_scan(&c.out.join("area_scan.csv"), &points)?;
    emit(json!({ "command": "area-scan", "points": points }));
    Ok(())
}

fn calibrate_cmd(c: &Common) -> CliResult {
    let run = c.run_config()?;
    let a = &run.analysis;
    let mut pdc_reader = open_stack(c.input_dir(), PDC_FILE, &run)?;
    let mut bg_reader = open_stack(c.input_dir(), BACKGROUND_FILE, &run)?;
    let cfg = pdc_reader.config().clone();
    let pdc = read_all(&mut pdc_reader)?;
    let bg = read_all(&mut bg_reader)?;
    let m_tot = cfg.modes.total_modes(a.signal.area());
    let settings = a.calibration(Some(m_tot));
    let result = calibrate(&pdc, &bg, &cfg.geometry, &settings)?;

    let idler = settings.idler_region(&cfg.geometry)?;
    let series = extract_series(&pdc, Some(&bg), &a.signal, &idler)?;
    let headline = estimators().build(&a.estimator)?.estimate(&series)?;

    ensure_dir(&c.out)?;
    tables::write_calibration_summary(&c.out.join("calibration_summary.csv"), &result)?;
    tables::write_batches(&c.out.join("batches.csv"), &result.batches)?;
    let report = json!({ "command": "calibrate", "result": result, "estimator": headline });
    write_json(&c.out.join("calibration.json"), &report)?;
    info!("eta_s = {:.4} +- {:.4} over Z = {}", result.eta_s, result.u_eta_s, result.z_repeats);
    emit(report);
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(())
}

fn reproduce_table1(c: &Common) -> CliResult {
    let mut run = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => scenarios::table1_run(),
    };
    c.apply_seed(&mut run);
    let report = scenarios::reproduce_table1(&run)?;
    ensure_dir(&c.out)?;
    tables::write_table1(
        &c.out.join("table1.csv"),
        &[
            ("published", PUBLISHED_TABLE1),
            ("published_u", PUBLISHED_TABLE1_U),
            ("sim", report.sim),
            ("sim_u", report.sim_u),
        ],
    )?;
    tables::write_calibration_summary(&c.out.join("calibration_summary.csv"), &report.calibration)?;
    tables::write_batches(&c.out.join("batches.csv"), &report.calibration.batches)?;
    run.save(&c.out.join("run.json"))?;
    let cal = &report.calibration;
    info!(
        "eta_s = {:.4} +- {:.4} (truth {}), alpha_B = {:.5} +- {:.5}",
        cal.eta_s,
        cal.u_eta_s,
        run.experiment.channel.eta_s,
        cal.alpha_b,
        cal.u_alpha_b
    );
    emit(json!({
        "command": "reproduce-table1",
        "eta_s": cal.eta_s,
        "u_eta_s": cal.u_eta_s,
        "truth_eta_s": run.experiment.channel.eta_s,
        "sim": report.sim,
        "sim_u": report.sim_u,
    }));
    Ok(())
}

fn selftest_cmd() -> CliResult {
    let started = std::time::Instant::now();
    let checks = selftest::run();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} checks, {failed} failed, {:.1} s", checks.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        return Err(CliError::Selftest(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c)
        | Command::FindCs(c)
        | Command::AreaScan(c)
        | Command::Calibrate(c)
        | Command::ReproduceTable1(c)
        | Command::Selftest(c) => c.clone(),
    };
    let level = match (common.quiet, common.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::FindCs(c) => find_cs(c),
        Command::AreaScan(c) => area_scan(c),
        Command::Calibrate(c) => calibrate_cmd(c),
        Command::ReproduceTable1(c) => reproduce_table1(c),
        Command::Selftest(_) => selftest_cmd(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "code": e.code(), "message": e.to_string() }));
            ExitCode::from(e.code())
        }
    }
}
