//! Synthetic twin-beam frame stacks with known ground truth.
//!
//! One frame is one pump shot. Each coherence cell of the signal half draws
//! a multithermal photon number shared with its conjugate cell in the idler
//! half; both are thinned by their channel efficiency and spread uniformly
//! over the cell's superpixels. Straylight, read noise and cosmic rays are
//! added on top, then counts are quantized.

mod sampling;
pub mod streams;

pub use sampling::{sample_cell_pair, sample_pulse, CellSampler};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    gain_maps, BackgroundModel, ChannelEfficiencies, FrameGeometry, GainMap, ModeStructure,
    PulseModel,
};
use sampling::{poisson, split_uniform};
use streams::{frame_stream, Component, MAX_PULSE_INDEX};

/// Frames larger than this many superpixels are refused.
pub const MAX_FRAME_PIXELS: usize = 1 << 24;
/// Stacks holding more than this many superpixel values in memory are refused.
pub const MAX_STACK_VALUES: usize = 1 << 30;

fn yes() -> bool {
    true
}

/// Every physical and statistical parameter of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub channel: ChannelEfficiencies,
    pub modes: ModeStructure,
    pub pulse: PulseModel,
    #[serde(default)]
    pub background: BackgroundModel,
    pub geometry: FrameGeometry,
    /// Misalignment of the idler deposition, in superpixels.
    #[serde(default)]
    pub cs_offset: (f64, f64),
    /// Mean cosmic-ray events per frame.
    #[serde(default)]
    pub cosmic_ray_rate: f64,
    pub master_seed: u64,
    /// Round counts to integers (clamped at zero) at the end of rendering.
    #[serde(default = "yes")]
    pub quantize: bool,
}

impl ExperimentConfig {
    /// A quiet experiment: no jitter, background, misalignment or cosmic rays.
    pub fn ideal(channel: ChannelEfficiencies, modes: ModeStructure, mean_mu: f64, guard: usize, seed: u64) -> Self {
        let geometry = FrameGeometry::centered(&modes, guard);
        Self {
            channel,
            modes,
            pulse: PulseModel::steady(mean_mu),
            background: BackgroundModel::none(),
            geometry,
            cs_offset: (0.0, 0.0),
            cosmic_ray_rate: 0.0,
            master_seed: seed,
            quantize: true,
        }
    }

    /// The idler deposition shift in whole superpixels.
    pub fn offset_shift(&self) -> (i64, i64) {
        (self.cs_offset.0.round() as i64, self.cs_offset.1.round() as i64)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.modes.validate()?;
        self.pulse.validate()?;
        self.background.validate()?;
        if self.geometry.pixels() > MAX_FRAME_PIXELS {
            return Err(Error::Resource(format!(
                "frame of {}x{} superpixels exceeds the {MAX_FRAME_PIXELS} limit",
                self.geometry.rows, self.geometry.cols
            )));
        }
        self.geometry.validate(&self.modes)?;
        if !(self.cosmic_ray_rate >= 0.0 && self.cosmic_ray_rate.is_finite()) {
            return Err(Error::domain("cosmic_ray_rate must be >= 0"));
        }
        if !(self.cs_offset.0.is_finite() && self.cs_offset.1.is_finite()) {
            return Err(Error::domain("cs_offset must be finite"));
        }
        // Corners of the emitting grid must land in the idler half once mirrored.
        let c = self.modes.coherence_cell_px;
        let (r0, c0) = self.geometry.emission_origin;
        let r1 = r0 + self.modes.grid.0 * c - 1;
        let c1 = c0 + self.modes.grid.1 * c - 1;
        let shift = self.offset_shift();
        for corner in [(r0, c0), (r0, c1), (r1, c0), (r1, c1)] {
            let conj = self.geometry.conjugate(corner, shift);
            if !self.geometry.in_half(conj, crate::model::Side::Idler) {
                return Err(Error::Geometry(format!(
                    "conjugate {conj:?} of emitting superpixel {corner:?} falls outside the idler half"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    PdcOn,
    Background,
}

impl FrameKind {
    pub fn label(&self) -> &'static str {
        match self {
            FrameKind::PdcOn => "pdc_on",
            FrameKind::Background => "background",
        }
    }
}

/// One shot's superpixel counts, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<f64>,
    pub pulse_index: u64,
    pub pulse_energy: f64,
    pub kind: FrameKind,
    /// Cosmic-ray events injected while rendering.
    pub cosmic_rays: u32,
}

impl Frame {
    pub fn zeros(rows: usize, cols: usize, kind: FrameKind) -> Self {
        Self {
            rows,
            cols,
            counts: vec![0.0; rows * cols],
            pulse_index: 0,
            pulse_energy: 1.0,
            kind,
            cosmic_rays: 0,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.counts[r * self.cols + c]
    }

    pub fn max(&self) -> f64 {
        self.counts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut v = self.counts.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Adds one cosmic-ray spike at a uniformly random superpixel. The spike is
/// twenty times the brightest superpixel (at least twenty counts), hence at
/// least twenty times the frame median.
pub fn inject_cosmic_ray<R: Rng + ?Sized>(mut frame: Frame, rng: &mut R) -> Frame {
    if frame.counts.is_empty() {
        return frame;
    }
    let amplitude = 20.0 * frame.max().max(1.0);
    let at = rng.gen_range(0..frame.counts.len());
    frame.counts[at] += amplitude;
    frame.cosmic_rays += 1;
    frame
}

/// A validated configuration with its strategies resolved.
#[derive(Debug)]
pub struct Simulator {
    cfg: ExperimentConfig,
    gain: Box<dyn GainMap>,
    read_noise: Option<Normal<f64>>,
}

impl Simulator {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let gain = gain_maps().build(&cfg.pulse.gain_map)?;
        let var = cfg.background.read_noise_variance();
        let read_noise = if var > 0.0 {
            Some(Normal::new(0.0, var.sqrt()).map_err(|e| Error::domain(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            gain,
            read_noise,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn sample_pulse<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        sample_pulse(&self.cfg.pulse, self.gain.as_ref(), rng)
    }

    /// Renders frame `pulse_index` of the given kind from its own streams.
    pub fn render_frame(&self, kind: FrameKind, pulse_index: u64) -> Result<Frame> {
        if pulse_index > MAX_PULSE_INDEX {
            return Err(Error::Resource(format!("pulse index {pulse_index} too large")));
        }
        let cfg = &self.cfg;
        let g = &cfg.geometry;
        let seed = cfg.master_seed;
        let mut frame = Frame::zeros(g.rows, g.cols, kind);
        frame.pulse_index = pulse_index;

        let mut pulse_rng = frame_stream(seed, kind, pulse_index, Component::Pulse);
        let (energy, mu) = self.sample_pulse(&mut pulse_rng);
        frame.pulse_energy = energy;

        if kind == FrameKind::PdcOn {
            self.deposit_pdc(&mut frame, mu, &mut frame_stream(seed, kind, pulse_index, Component::Pdc))?;
        }
        self.add_background(&mut frame, energy, &mut frame_stream(seed, kind, pulse_index, Component::Background));

        if cfg.cosmic_ray_rate > 0.0 {
            let mut rng = frame_stream(seed, kind, pulse_index, Component::Cosmic);
            let events = poisson(cfg.cosmic_ray_rate, &mut rng);
            for _ in 0..events {
                frame = inject_cosmic_ray(frame, &mut rng);
            }
        }

        if cfg.quantize {
            for v in frame.counts.iter_mut() {
                *v = v.round().max(0.0);
            }
        }
        Ok(frame)
    }

    fn deposit_pdc<R: Rng + ?Sized>(&self, frame: &mut Frame, mu: f64, rng: &mut R) -> Result<()> {
        let cfg = &self.cfg;
        let g = &cfg.geometry;
        let c = cfg.modes.coherence_cell_px;
        let sampler = CellSampler::new(mu, cfg.modes.modes_per_cell(), &cfg.channel)?;
        let shift = cfg.offset_shift();
        let (r0, c0) = g.emission_origin;
        let mut bins = vec![0u64; c * c];
        for i in 0..cfg.modes.grid.0 {
            for j in 0..cfg.modes.grid.1 {
                let (ns, ni) = sampler.sample(rng);
                let top = r0 + i * c;
                let left = c0 + j * c;
                split_uniform(ns, &mut bins, rng);
                for (k, &x) in bins.iter().enumerate() {
                    frame.counts[g.index(top + k / c, left + k % c)] += x as f64;
                }
                split_uniform(ni, &mut bins, rng);
                for (k, &x) in bins.iter().enumerate() {
                    let (r, cc) = g.conjugate((top + k / c, left + k % c), shift);
                    // Bounds were checked against the grid corners in validate().
                    frame.counts[g.index(r as usize, cc as usize)] += x as f64;
                }
            }
        }
        Ok(())
    }

    fn add_background<R: Rng + ?Sized>(&self, frame: &mut Frame, energy: f64, rng: &mut R) {
        let bg = &self.cfg.background;
        let stray = if bg.straylight_tracks_pulse {
            bg.straylight_mean * energy
        } else {
            bg.straylight_mean
        };
        if stray <= 0.0 && self.read_noise.is_none() {
            return;
        }
        for v in frame.counts.iter_mut() {
            if stray > 0.0 {
                *v += poisson(stray, rng) as f64;
            }
            if let Some(noise) = &self.read_noise {
                *v += noise.sample(rng);
            }
        }
    }

    /// Frames `start .. start + count` of one kind, rendered in parallel.
    pub fn generate_range(&self, kind: FrameKind, start: u64, count: usize) -> Result<Vec<Frame>> {
        let values = count.saturating_mul(self.cfg.geometry.pixels());
        if values > MAX_STACK_VALUES {
            return Err(Error::Resource(format!(
                "stack of {count} frames x {} superpixels is too large to hold in memory",
                self.cfg.geometry.pixels()
            )));
        }
        (0..count as u64)
            .into_par_iter()
            .map(|k| self.render_frame(kind, start + k))
            .collect()
    }

    pub fn generate_stack(&self, count: usize, kind: FrameKind) -> Result<Vec<Frame>> {
        if count < 1 {
            return Err(Error::domain("a stack needs at least one frame"));
        }
        self.generate_range(kind, 0, count)
    }

    /// Streams `count` frames in chunks of `chunk` to `sink`, keeping memory bounded.
    pub fn for_each_chunk<F>(&self, kind: FrameKind, count: usize, chunk: usize, mut sink: F) -> Result<()>
    where
        F: FnMut(&[Frame]) -> Result<()>,
    {
        let chunk = chunk.max(1);
        let mut start = 0usize;
        while start < count {
            let n = chunk.min(count - start);
            let frames = self.generate_range(kind, start as u64, n)?;
            sink(&frames)?;
            start += n;
        }
        Ok(())
    }
}

/// Validates `cfg` and renders `count` frames of `kind`.
pub fn generate_stack(cfg: &ExperimentConfig, count: usize, kind: FrameKind) -> Result<Vec<Frame>> {
    Simulator::new(cfg.clone())?.generate_stack(count, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Readout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn modes(grid: (usize, usize), c: usize) -> ModeStructure {
        ModeStructure {
            temporal_modes: 5000,
            coherence_cell_px: c,
            grid,
            subcells: 1,
        }
    }

    fn quiet(eta: f64, c: usize) -> ExperimentConfig {
        ExperimentConfig::ideal(ChannelEfficiencies::balanced(eta).unwrap(), modes((4, 6), c), 0.1, 1, 11)
    }

    #[test]
    fn lossless_quiet_frame_is_point_symmetric() {
        for c in [1, 2] {
            let sim = Simulator::new(quiet(1.0, c)).unwrap();
            let frame = sim.render_frame(FrameKind::PdcOn, 0).unwrap();
            let g = sim.config().geometry;
            // Equal totals per conjugate cell block; with c = 1 every superpixel mirrors exactly.
            if c == 1 {
                for r in 0..g.rows {
                    for col in 0..g.beam_split {
                        let (rr, cc) = g.conjugate((r, col), (0, 0));
                        assert_eq!(frame.get(r, col), frame.get(rr as usize, cc as usize));
                    }
                }
            }
            let (sig, idl): (f64, f64) = (0..g.rows).fold((0.0, 0.0), |acc, r| {
                let s: f64 = (0..g.beam_split).map(|col| frame.get(r, col)).sum();
                let i: f64 = (g.beam_split..g.cols).map(|col| frame.get(r, col)).sum();
                (acc.0 + s, acc.1 + i)
            });
            assert_eq!(sig, idl);
            assert!(sig > 0.0);
        }
    }

    #[test]
    fn background_frames_have_no_pdc() {
        let sim = Simulator::new(quiet(0.6, 1)).unwrap();
        let stack = sim.generate_stack(5, FrameKind::Background).unwrap();
        assert!(stack.iter().all(|f| f.counts.iter().all(|&v| v == 0.0)));
        assert!(stack.iter().all(|f| f.kind == FrameKind::Background));
    }

    #[test]
    fn background_moments() {
        let mut cfg = quiet(0.6, 1);
        cfg.background = BackgroundModel {
            straylight_mean: 50.0,
            straylight_tracks_pulse: false,
            read_noise_std: 4.0,
            binning: 2,
            readout: Readout::PerPhysicalPixel,
        };
        cfg.quantize = false;
        let sim = Simulator::new(cfg).unwrap();
        let stack = sim.generate_stack(400, FrameKind::Background).unwrap();
        let values: Vec<f64> = stack.iter().flat_map(|f| f.counts.iter().copied()).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected_var = 50.0 + 4.0 * 16.0;
        assert!((mean - 50.0).abs() < 3.0 * (expected_var / n).sqrt(), "mean {mean}");
        assert!((var - expected_var).abs() < 3.0 * expected_var * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn stacks_are_reproducible() {
        let mut cfg = quiet(0.6, 2);
        cfg.pulse.relative_energy_jitter = 0.1;
        cfg.background.straylight_mean = 3.0;
        cfg.background.read_noise_std = 1.0;
        cfg.cosmic_ray_rate = 0.3;
        let a = generate_stack(&cfg, 12, FrameKind::PdcOn).unwrap();
        let b = generate_stack(&cfg, 12, FrameKind::PdcOn).unwrap();
        assert_eq!(a, b);
        cfg.master_seed += 1;
        let c = generate_stack(&cfg, 12, FrameKind::PdcOn).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chunked_generation_matches_whole_stack() {
        let cfg = quiet(0.6, 1);
        let sim = Simulator::new(cfg).unwrap();
        let whole = sim.generate_stack(10, FrameKind::PdcOn).unwrap();
        let mut pieces = Vec::new();
        sim.for_each_chunk(FrameKind::PdcOn, 10, 3, |chunk| {
            pieces.extend_from_slice(chunk);
            Ok(())
        })
        .unwrap();
        assert_eq!(whole, pieces);
    }

    #[test]
    fn zero_rate_never_injects() {
        let sim = Simulator::new(quiet(0.6, 1)).unwrap();
        let stack = sim.generate_stack(50, FrameKind::PdcOn).unwrap();
        assert!(stack.iter().all(|f| f.cosmic_rays == 0));
    }

    #[test]
    fn spike_exceeds_twenty_medians() {
        let sim = Simulator::new(quiet(0.6, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..200 {
            let frame = sim.render_frame(FrameKind::PdcOn, k).unwrap();
            let median = frame.median();
            let hit = inject_cosmic_ray(frame.clone(), &mut rng);
            let (idx, delta) = hit
                .counts
                .iter()
                .zip(&frame.counts)
                .map(|(a, b)| a - b)
                .enumerate()
                .find(|(_, d)| *d != 0.0)
                .unwrap();
            assert!(delta >= 20.0 * median && delta >= 20.0, "frame {k} idx {idx}");
            assert_eq!(hit.cosmic_rays, 1);
        }
    }

    #[test]
    fn offset_pushing_outside_idler_half_is_rejected() {
        let mut cfg = quiet(0.6, 1);
        cfg.cs_offset = (0.0, 2.0);
        assert!(matches!(Simulator::new(cfg.clone()), Err(Error::Geometry(_))));
        cfg.cs_offset = (0.4, 0.6);
        assert_eq!(cfg.offset_shift(), (0, 1));
        assert!(Simulator::new(cfg).is_ok());
    }

    #[test]
    fn absurd_frames_are_refused() {
        let mut cfg = quiet(0.6, 1);
        cfg.geometry.rows = 1 << 13;
        cfg.geometry.cols = 1 << 13;
        assert!(matches!(Simulator::new(cfg), Err(Error::Resource(_))));
        let sim = Simulator::new(quiet(0.6, 1)).unwrap();
        assert!(matches!(
            sim.generate_range(FrameKind::PdcOn, 0, usize::MAX / 4),
            Err(Error::Resource(_))
        ));
        assert!(sim.generate_stack(0, FrameKind::PdcOn).is_err());
    }
}
