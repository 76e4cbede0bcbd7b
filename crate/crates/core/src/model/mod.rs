//! Domain types shared by the simulator and the estimators, plus the
//! closed-form moment predictors of the multithermal twin-beam model.

mod gain;
mod theory;

pub use gain::{gain_maps, GainMap, LinearGain, Sinh2Gain};
pub use theory::{
    predict_covariance, predict_sigma, predict_sigma_alpha, predict_sigma_with_jitter,
    predict_variance,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::StrategyRef;

/// Whole-channel detection efficiencies of the signal and idler arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEfficiencies {
    pub eta_s: f64,
    pub eta_i: f64,
}

impl ChannelEfficiencies {
    pub fn new(eta_s: f64, eta_i: f64) -> Result<Self> {
        let ch = Self { eta_s, eta_i };
        ch.validate()?;
        Ok(ch)
    }

    pub fn balanced(eta: f64) -> Result<Self> {
        Self::new(eta, eta)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_s", self.eta_s), ("eta_i", self.eta_i)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Mean efficiency `(eta_s + eta_i) / 2`.
    pub fn eta_plus(&self) -> f64 {
        0.5 * (self.eta_s + self.eta_i)
    }

    /// Imbalance `eta_s - eta_i`.
    pub fn eta_minus(&self) -> f64 {
        self.eta_s - self.eta_i
    }

    /// The loss-balancing ratio `eta_s / eta_i`.
    pub fn ratio(&self) -> f64 {
        self.eta_s / self.eta_i
    }

    pub fn swapped(&self) -> Self {
        Self {
            eta_s: self.eta_i,
            eta_i: self.eta_s,
        }
    }
}

fn one_u64() -> u64 {
    1
}

/// Mode content of one shot.
///
/// A coherence cell is a disjoint `coherence_cell_px x coherence_cell_px`
/// block of superpixels. `subcells` lumps several coherence areas into one
/// cell when the binning makes a superpixel larger than a coherence area;
/// the cell then carries `temporal_modes * subcells` thermal modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeStructure {
    pub temporal_modes: u64,
    pub coherence_cell_px: usize,
    /// Cells per beam half, `(rows, cols)`.
    pub grid: (usize, usize),
    #[serde(default = "one_u64")]
    pub subcells: u64,
}

impl ModeStructure {
    pub fn validate(&self) -> Result<()> {
        if self.temporal_modes < 1 {
            return Err(Error::domain("temporal_modes must be >= 1"));
        }
        if self.coherence_cell_px < 1 {
            return Err(Error::domain("coherence_cell_px must be >= 1"));
        }
        if self.grid.0 < 1 || self.grid.1 < 1 {
            return Err(Error::domain("cell grid dimensions must be >= 1"));
        }
        if self.subcells < 1 {
            return Err(Error::domain("subcells must be >= 1"));
        }
        Ok(())
    }

    /// Thermal modes drawn for one coherence cell.
    pub fn modes_per_cell(&self) -> u64 {
        self.temporal_modes * self.subcells
    }

    /// `M_tot` for a region holding `cells` whole coherence cells.
    pub fn total_modes(&self, cells: usize) -> f64 {
        self.modes_per_cell() as f64 * cells as f64
    }

    pub fn cell_count(&self) -> usize {
        self.grid.0 * self.grid.1
    }
}

/// Pulse-to-pulse pump model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseModel {
    pub mean_mu: f64,
    pub relative_energy_jitter: f64,
    #[serde(default = "default_gain_map")]
    pub gain_map: StrategyRef,
}

fn default_gain_map() -> StrategyRef {
    StrategyRef::named("linear")
}

impl PulseModel {
    pub fn steady(mean_mu: f64) -> Self {
        Self {
            mean_mu,
            relative_energy_jitter: 0.0,
            gain_map: default_gain_map(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_mu > 0.0 && self.mean_mu.is_finite()) {
            return Err(Error::domain(format!("mean_mu = {} must be > 0", self.mean_mu)));
        }
        if !(0.0..1.0).contains(&self.relative_energy_jitter) {
            return Err(Error::domain(format!(
                "relative_energy_jitter = {} outside [0, 1)",
                self.relative_energy_jitter
            )));
        }
        gain_maps().build(&self.gain_map)?;
        Ok(())
    }
}

/// How CCD read noise scales with binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// Each physical pixel is read independently: variance `binning^2 * r^2` per superpixel.
    #[default]
    PerPhysicalPixel,
    /// Charge is summed on chip and read once: variance `r^2` per superpixel.
    HardwareBinned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    /// Mean straylight counts per superpixel at nominal pulse energy.
    pub straylight_mean: f64,
    pub straylight_tracks_pulse: bool,
    /// Read noise in electrons (counts) per physical pixel.
    pub read_noise_std: f64,
    /// Physical pixels per superpixel side.
    pub binning: u32,
    #[serde(default)]
    pub readout: Readout,
}

impl Default for BackgroundModel {
    fn default() -> Self {
        Self::none()
    }
}

impl BackgroundModel {
    pub fn none() -> Self {
        Self {
            straylight_mean: 0.0,
            straylight_tracks_pulse: false,
            read_noise_std: 0.0,
            binning: 1,
            readout: Readout::PerPhysicalPixel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.straylight_mean >= 0.0 && self.straylight_mean.is_finite()) {
            return Err(Error::domain("straylight_mean must be >= 0"));
        }
        if !(self.read_noise_std >= 0.0 && self.read_noise_std.is_finite()) {
            return Err(Error::domain("read_noise_std must be >= 0"));
        }
        if self.binning < 1 {
            return Err(Error::domain("binning must be >= 1"));
        }
        Ok(())
    }

    pub fn read_noise_variance(&self) -> f64 {
        let r2 = self.read_noise_std * self.read_noise_std;
        match self.readout {
            Readout::PerPhysicalPixel => f64::from(self.binning).powi(2) * r2,
            Readout::HardwareBinned => r2,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.straylight_mean == 0.0 && self.read_noise_std == 0.0
    }
}

/// Superpixel layout of a full frame.
///
/// Columns `[0, beam_split)` hold the signal beam, `[beam_split, cols)` the
/// idler. The conjugate of superpixel `x` is `2 * cs - x`, so `2 * cs` must
/// be integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub rows: usize,
    pub cols: usize,
    pub cs: (f64, f64),
    pub beam_split: usize,
    /// Top-left superpixel of the emitting cell grid in the signal half.
    pub emission_origin: (usize, usize),
}

impl FrameGeometry {
    /// A frame with the cell grid surrounded by `guard` dark superpixels on
    /// every side of each half, and the centre of symmetry in the middle.
    pub fn centered(modes: &ModeStructure, guard: usize) -> Self {
        let c = modes.coherence_cell_px;
        let rows = modes.grid.0 * c + 2 * guard;
        let half = modes.grid.1 * c + 2 * guard;
        let cols = 2 * half;
        Self {
            rows,
            cols,
            cs: ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0),
            beam_split: half,
            emission_origin: (guard, guard),
        }
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    fn twice_cs(&self) -> (i64, i64) {
        ((2.0 * self.cs.0).round() as i64, (2.0 * self.cs.1).round() as i64)
    }

    pub fn validate(&self, modes: &ModeStructure) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Geometry("frame has zero size".into()));
        }
        if self.beam_split == 0 || self.beam_split >= self.cols {
            return Err(Error::Geometry(format!(
                "beam_split {} must lie inside (0, {})",
                self.beam_split, self.cols
            )));
        }
        for v in [self.cs.0, self.cs.1] {
            if (2.0 * v - (2.0 * v).round()).abs() > 1e-9 {
                return Err(Error::Geometry(format!(
                    "centre of symmetry coordinate {v} is not a multiple of 1/2"
                )));
            }
        }
        let c = modes.coherence_cell_px;
        let (r0, c0) = self.emission_origin;
        let r1 = r0 + modes.grid.0 * c;
        let c1 = c0 + modes.grid.1 * c;
        if r1 > self.rows || c1 > self.beam_split {
            return Err(Error::Geometry(format!(
                "cell grid [{r0},{r1})x[{c0},{c1}) leaves the signal half"
            )));
        }
        Ok(())
    }

    /// Conjugate position `2 * cs - x + shift`, possibly out of bounds.
    pub fn conjugate(&self, pos: (usize, usize), shift: (i64, i64)) -> (i64, i64) {
        let (tr, tc) = self.twice_cs();
        (tr - pos.0 as i64 + shift.0, tc - pos.1 as i64 + shift.1)
    }

    pub fn in_half(&self, pos: (i64, i64), side: Side) -> bool {
        let (r, c) = pos;
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            return false;
        }
        match side {
            Side::Signal => (c as usize) < self.beam_split,
            Side::Idler => (c as usize) >= self.beam_split,
        }
    }

    pub fn index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Signal,
    Idler,
}

/// A rectangular detection area in superpixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub origin: (usize, usize),
    pub extent: (usize, usize),
    pub side: Side,
}

impl Region {
    pub fn new(origin: (usize, usize), extent: (usize, usize), side: Side) -> Self {
        Self {
            origin,
            extent,
            side,
        }
    }

    /// A region of the given extent whose centre is `anchor`
    /// (origin = anchor - extent / 2, integer division).
    pub fn centered_on(anchor: (usize, usize), extent: (usize, usize), side: Side) -> Result<Self> {
        let (h, w) = extent;
        if anchor.0 < h / 2 || anchor.1 < w / 2 {
            return Err(Error::Geometry(format!(
                "region {h}x{w} centred on {anchor:?} starts before the frame edge"
            )));
        }
        Ok(Self::new((anchor.0 - h / 2, anchor.1 - w / 2), extent, side))
    }

    pub fn area(&self) -> usize {
        self.extent.0 * self.extent.1
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.origin.0..self.origin.0 + self.extent.0
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.origin.1..self.origin.1 + self.extent.1
    }

    /// Checks the region is non-empty and lies fully inside its beam half.
    pub fn validate(&self, geometry: &FrameGeometry) -> Result<()> {
        if self.area() == 0 {
            return Err(Error::Geometry("region has zero area".into()));
        }
        let last = (
            (self.origin.0 + self.extent.0 - 1) as i64,
            (self.origin.1 + self.extent.1 - 1) as i64,
        );
        let first = (self.origin.0 as i64, self.origin.1 as i64);
        if !geometry.in_half(first, self.side) || !geometry.in_half(last, self.side) {
            return Err(Error::Geometry(format!(
                "region {:?}+{:?} is not inside the {:?} half",
                self.origin, self.extent, self.side
            )));
        }
        Ok(())
    }

    /// The point-mirrored region in the opposite half, displaced by `shift`.
    pub fn conjugate(&self, geometry: &FrameGeometry, shift: (i64, i64)) -> Result<Region> {
        let far = (
            self.origin.0 + self.extent.0 - 1,
            self.origin.1 + self.extent.1 - 1,
        );
        let (r, c) = geometry.conjugate(far, shift);
        let side = match self.side {
            Side::Signal => Side::Idler,
            Side::Idler => Side::Signal,
        };
        if r < 0 || c < 0 {
            return Err(Error::Geometry(format!(
                "conjugate of region {:?}+{:?} (shift {shift:?}) leaves the frame",
                self.origin, self.extent
            )));
        }
        let region = Region::new((r as usize, c as usize), self.extent, side);
        region.validate(geometry)?;
        Ok(region)
    }
}
