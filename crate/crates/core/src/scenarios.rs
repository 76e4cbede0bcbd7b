//! Canned configurations: the Table-1-like calibration run and the reduced
//! scenarios used by the self test and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{
    calibrate, estimate_alpha, estimate_alpha_b, estimate_sigma_alpha, estimate_sigma_alpha_b,
    extract_series, CalibrationResult, RegionPairSeries, VarianceConvention,
};
use crate::io::{AnalysisConfig, RunConfig};
use crate::model::{
    BackgroundModel, ChannelEfficiencies, FrameGeometry, ModeStructure, PulseModel, Readout, Region,
    Side,
};
use crate::registry::StrategyRef;
use crate::simulator::{ExperimentConfig, FrameKind, Simulator};

pub const TABLE1_ETA_S: f64 = 0.613;
pub const TABLE1_ALPHA_B: f64 = 0.99416;
pub const TABLE1_U_ETA_S: f64 = 0.011;

/// One row of the published table, in its column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub mean_ns: f64,
    pub std_ns: f64,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub alpha: f64,
    pub alpha_b: f64,
    pub sigma: f64,
    pub sigma_alpha: f64,
    pub sigma_alpha_b: f64,
}

impl Table1Row {
    pub const COLUMNS: [&'static str; 9] = [
        "mean_ns",
        "std_ns",
        "mean_ms",
        "std_ms",
        "alpha",
        "alpha_b",
        "sigma",
        "sigma_alpha",
        "sigma_alpha_b",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.mean_ns,
            self.std_ns,
            self.mean_ms,
            self.std_ms,
            self.alpha,
            self.alpha_b,
            self.sigma,
            self.sigma_alpha,
            self.sigma_alpha_b,
        ]
    }
}

pub const PUBLISHED_TABLE1: Table1Row = Table1Row {
    mean_ns: 262710.0,
    std_ns: 35982.0,
    mean_ms: 12751.0,
    std_ms: 1318.0,
    alpha: 0.99952,
    alpha_b: 0.99416,
    sigma: 0.454,
    sigma_alpha: 0.449,
    sigma_alpha_b: 0.384,
};

pub const PUBLISHED_TABLE1_U: Table1Row = Table1Row {
    mean_ns: 620.0,
    std_ns: 437.0,
    mean_ms: 158.0,
    std_ms: 30.0,
    alpha: 0.00003,
    alpha_b: 0.00004,
    sigma: 0.010,
    sigma_alpha: 0.010,
    sigma_alpha_b: 0.011,
};

/// 7x10 cells of 16 coherence areas each, one cell per 24x24-binned superpixel.
pub fn table1_modes() -> ModeStructure {
    ModeStructure {
        temporal_modes: 5000,
        coherence_cell_px: 1,
        grid: (7, 10),
        subcells: 16,
    }
}

/// Signal detection area of 5x8 superpixels (640 coherence areas).
pub fn table1_signal_region() -> Region {
    Region::new((2, 2), (5, 8), Side::Signal)
}

/// Total mode number of a region of the Table-1 geometry.
pub fn table1_m_tot() -> f64 {
    table1_modes().total_modes(table1_signal_region().area())
}

/// Ground truth eta_s = 0.613 and alpha_B = 0.99416, 10% pump jitter through a
/// sinh^2 gain, 5% pulse-tracking straylight and 4 e- read noise per
/// hardware-binned 24x24 superpixel.
pub fn table1_experiment(seed: u64) -> ExperimentConfig {
    let modes = table1_modes();
    ExperimentConfig {
        channel: ChannelEfficiencies {
            eta_s: TABLE1_ETA_S,
            eta_i: TABLE1_ETA_S / TABLE1_ALPHA_B,
        },
        modes,
        pulse: PulseModel {
            mean_mu: 0.12684,
            relative_energy_jitter: 0.10,
            gain_map: StrategyRef::named("sinh2").with_param("gain", 1.13),
        },
        background: BackgroundModel {
            straylight_mean: 318.775,
            straylight_tracks_pulse: true,
            read_noise_std: 4.0,
            binning: 24,
            readout: Readout::HardwareBinned,
        },
        geometry: FrameGeometry::centered(&modes, 1),
        cs_offset: (0.0, 0.0),
        cosmic_ray_rate: 0.0,
        master_seed: seed,
        quantize: true,
    }
}

/// Z = 8 batches of N = M = 500 frames.
pub fn table1_run() -> RunConfig {
    RunConfig {
        experiment: table1_experiment(2013),
        analysis: AnalysisConfig {
            n_pdc: 4000,
            n_background: 4000,
            signal: table1_signal_region(),
            idler: None,
            cs_shift: (0, 0),
            z: 8,
            search_extent: (2, 2),
            areas: vec![(1, 1), (1, 2), (2, 2), (2, 4), (3, 4), (4, 6), (5, 8)],
            anchor: None,
            filter: StrategyRef::named("median-mad"),
            estimator: StrategyRef::named("sigma-alpha-b"),
            variance: VarianceConvention::Unbiased,
            chunk_frames: 2000,
        },
    }
}

/// 40 single-area cells at mu = 0.1 with M_t = 5000, balanced eta.
pub fn moment_laws(eta: f64, seed: u64) -> ExperimentConfig {
    let modes = ModeStructure {
        temporal_modes: 5000,
        coherence_cell_px: 1,
        grid: (5, 8),
        subcells: 1,
    };
    ExperimentConfig::ideal(ChannelEfficiencies::balanced(eta).unwrap(), modes, 0.1, 0, seed)
}

/// Table-1 count levels with unbalanced channels and 10% linear pump jitter,
/// no background.
pub fn jitter(eta_s: f64, eta_i: f64, seed: u64) -> ExperimentConfig {
    let mut cfg = table1_experiment(seed);
    cfg.channel = ChannelEfficiencies { eta_s, eta_i };
    cfg.pulse.gain_map = StrategyRef::named("linear");
    cfg.background = BackgroundModel::none();
    cfg
}

/// 16x16 single-superpixel cells with a 4-superpixel guard, for CS searches.
pub fn cs_search(offset: (f64, f64), seed: u64) -> ExperimentConfig {
    let modes = ModeStructure {
        temporal_modes: 5000,
        coherence_cell_px: 1,
        grid: (16, 16),
        subcells: 1,
    };
    let mut cfg = ExperimentConfig::ideal(ChannelEfficiencies::balanced(TABLE1_ETA_S).unwrap(), modes, 0.555, 4, seed);
    cfg.cs_offset = offset;
    cfg
}

/// The 10x10 signal region centred in the `cs_search` grid.
pub fn cs_search_region() -> Region {
    Region::new((7, 7), (10, 10), Side::Signal)
}

/// A 20x32 grid of single-superpixel cells for area scans up to 640 cells.
pub fn area_scan(cell_px: usize, cs_offset: (f64, f64), seed: u64) -> ExperimentConfig {
    let modes = ModeStructure {
        temporal_modes: 5000,
        coherence_cell_px: cell_px,
        grid: (20 / cell_px, 32 / cell_px),
        subcells: 1,
    };
    let guard = if cs_offset == (0.0, 0.0) { 0 } else { 2 };
    let mut cfg = ExperimentConfig::ideal(ChannelEfficiencies::new(TABLE1_ETA_S, TABLE1_ETA_S / TABLE1_ALPHA_B).unwrap(), modes, 0.1, guard, seed);
    cfg.cs_offset = cs_offset;
    cfg.background = BackgroundModel {
        straylight_mean: 2.0,
        ..BackgroundModel::none()
    };
    cfg
}

/// Area-scan extents from one superpixel to the full 20x32 grid, ascending.
pub fn area_scan_extents() -> Vec<(usize, usize)> {
    vec![(1, 1), (2, 2), (3, 5), (5, 8), (8, 13), (10, 16), (15, 24), (20, 32)]
}

/// The nine table columns for one batch. Raw and loss-balanced sigma are
/// computed on the background-inclusive sums, as in the published table.
pub fn table1_row(batch: &RegionPairSeries) -> Result<Table1Row> {
    let sd = |xs: &[f64]| crate::estimation::series::variance(xs, VarianceConvention::Unbiased).sqrt();
    let mean = crate::estimation::series::mean;
    let bg = batch
        .background
        .as_ref()
        .ok_or_else(|| crate::Error::Degenerate("table needs background frames".into()))?;
    let alpha = estimate_alpha(batch)?;
    let alpha_b = estimate_alpha_b(batch)?;
    Ok(Table1Row {
        mean_ns: mean(&batch.n_s),
        std_ns: sd(&batch.n_s),
        mean_ms: mean(&bg.m_s),
        std_ms: sd(&bg.m_s),
        alpha,
        alpha_b,
        sigma: estimate_sigma_alpha(batch, 1.0)?,
        sigma_alpha: estimate_sigma_alpha(batch, alpha)?,
        sigma_alpha_b: estimate_sigma_alpha_b(batch, alpha_b)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    /// Mean of the per-batch columns.
    pub sim: Table1Row,
    /// Standard error of that mean over the Z batches.
    pub sim_u: Table1Row,
    pub calibration: CalibrationResult,
}

fn row_from(v: [f64; 9]) -> Table1Row {
    Table1Row {
        mean_ns: v[0],
        std_ns: v[1],
        mean_ms: v[2],
        std_ms: v[3],
        alpha: v[4],
        alpha_b: v[5],
        sigma: v[6],
        sigma_alpha: v[7],
        sigma_alpha_b: v[8],
    }
}

/// Simulates `run` and tabulates it in the published layout next to the
/// full calibration.
pub fn reproduce_table1(run: &RunConfig) -> Result<Table1Report> {
    run.validate()?;
    let sim = Simulator::new(run.experiment.clone())?;
    let a = &run.analysis;
    let pdc = sim.generate_stack(a.n_pdc, FrameKind::PdcOn)?;
    let bg = sim.generate_stack(a.n_background, FrameKind::Background)?;
    let m_tot = run.experiment.modes.total_modes(a.signal.area());
    let calibration = calibrate(&pdc, &bg, &run.experiment.geometry, &a.calibration(Some(m_tot)))?;
    let idler = a.calibration(None).idler_region(&run.experiment.geometry)?;
    let series = extract_series(&pdc, Some(&bg), &a.signal, &idler)?;
    let rows = series
        .partition(a.z.max(2))?
        .iter()
        .map(|b| table1_row(b).map(|r| r.values()))
        .collect::<Result<Vec<_>>>()?;
    let z = rows.len() as f64;
    let mut mean = [0.0; 9];
    let mut sem = [0.0; 9];
    for c in 0..9 {
        mean[c] = rows.iter().map(|r| r[c]).sum::<f64>() / z;
        let ss: f64 = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum();
        sem[c] = (ss / (z * (z - 1.0))).sqrt();
    }
    Ok(Table1Report {
        sim: row_from(mean),
        sim_u: row_from(sem),
        calibration,
    })
}
