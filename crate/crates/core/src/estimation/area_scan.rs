//! Noise reduction as a function of the detection area.

use serde::{Deserialize, Serialize};

use super::estimators::{NoiseReductionEstimator, SigmaAlpha, SigmaAlphaB};
use super::series::{region_sum, RegionPairSeries};
use crate::error::{Error, Result};
use crate::model::{FrameGeometry, Region, Side};
use crate::simulator::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaPoint {
    pub extent: (usize, usize),
    /// Detection area in superpixels.
    pub area: usize,
    /// Detection area in coherence cells.
    pub cells: f64,
    pub sigma_alpha: f64,
    pub u_sigma_alpha: f64,
    pub sigma_alpha_b: Option<f64>,
    pub u_sigma_alpha_b: Option<f64>,
}

#[derive(Debug, Clone)]
struct Slot {
    signal: Region,
    idler: Region,
    n_s: Vec<f64>,
    n_i: Vec<f64>,
    m_s: Vec<f64>,
    m_i: Vec<f64>,
}

/// Streaming accumulator of region sums for a list of nested areas, so that
/// long stacks never need to be held in memory.
#[derive(Debug, Clone)]
pub struct AreaScan {
    geometry: FrameGeometry,
    cell_area: f64,
    slots: Vec<Slot>,
}

impl AreaScan {
    /// `extents` are centred on `anchor` in the signal half, sorted by
    /// ascending area; idler regions are the conjugates displaced by `cs_shift`.
    pub fn new(
        geometry: FrameGeometry,
        coherence_cell_px: usize,
        cs_shift: (i64, i64),
        anchor: (usize, usize),
        extents: &[(usize, usize)],
    ) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::domain("area list is empty"));
        }
        if extents.windows(2).any(|w| w[0].0 * w[0].1 > w[1].0 * w[1].1) {
            return Err(Error::domain("areas must be sorted in ascending order"));
        }
        let mut slots = Vec::with_capacity(extents.len());
        for &extent in extents {
            let signal = Region::centered_on(anchor, extent, Side::Signal)?;
            signal.validate(&geometry)?;
            let idler = signal.conjugate(&geometry, cs_shift)?;
            slots.push(Slot {
                signal,
                idler,
                n_s: Vec::new(),
                n_i: Vec::new(),
                m_s: Vec::new(),
                m_i: Vec::new(),
            });
        }
        Ok(Self {
            geometry,
            cell_area: (coherence_cell_px * coherence_cell_px) as f64,
            slots,
        })
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn push_pdc(&mut self, frames: &[Frame]) -> Result<()> {
        for f in frames {
            for s in &mut self.slots {
                s.n_s.push(region_sum(f, &s.signal)?);
                s.n_i.push(region_sum(f, &s.idler)?);
            }
        }
        Ok(())
    }

    pub fn push_background(&mut self, frames: &[Frame]) -> Result<()> {
        for f in frames {
            for s in &mut self.slots {
                s.m_s.push(region_sum(f, &s.signal)?);
                s.m_i.push(region_sum(f, &s.idler)?);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<AreaPoint>> {
        let cell_area = self.cell_area;
        self.slots
            .into_iter()
            .map(|s| {
                let area = s.signal.area();
                let has_background = !s.m_s.is_empty();
                let mut series = RegionPairSeries::new(s.n_s, s.n_i)?;
                let plain = SigmaAlpha::default().estimate(&series)?;
                let (sigma_alpha_b, u_sigma_alpha_b) = if has_background {
                    series = series.with_background(s.m_s, s.m_i)?;
                    let corrected = SigmaAlphaB::default().estimate(&series)?;
                    (Some(corrected.value), Some(corrected.uncertainty))
                } else {
                    (None, None)
                };
                Ok(AreaPoint {
                    extent: s.signal.extent,
                    area,
                    cells: area as f64 / cell_area,
                    sigma_alpha: plain.value,
                    u_sigma_alpha: plain.uncertainty,
                    sigma_alpha_b,
                    u_sigma_alpha_b,
                })
            })
            .collect()
    }
}

/// One-shot scan over in-memory stacks.
pub fn area_scan(
    pdc: &[Frame],
    background: Option<&[Frame]>,
    geometry: &FrameGeometry,
    coherence_cell_px: usize,
    cs_shift: (i64, i64),
    anchor: (usize, usize),
    extents: &[(usize, usize)],
) -> Result<Vec<AreaPoint>> {
    let mut scan = AreaScan::new(*geometry, coherence_cell_px, cs_shift, anchor, extents)?;
    scan.push_pdc(pdc)?;
    if let Some(bg) = background {
        scan.push_background(bg)?;
    }
    scan.finish()
}
