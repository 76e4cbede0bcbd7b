//! Centre-of-symmetry search through spatial noise-reduction maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameGeometry, Region, Side};
use crate::simulator::Frame;

/// `sigma_spatial` over a grid of idler displacements `xi`.
///
/// Row `r`, column `c` of `values` holds `xi = (r - extent.0, c - extent.1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMap {
    pub extent: (usize, usize),
    pub values: Vec<f64>,
    pub argmin: (i64, i64),
    pub min: f64,
    /// Other displacements whose value equals the minimum exactly.
    pub ties: Vec<(i64, i64)>,
    /// Median of the map at Chebyshev distance >= 3 from the argmin.
    pub plateau: Option<f64>,
    /// Second differences at the argmin along rows and columns.
    pub curvature: (Option<f64>, Option<f64>),
}

impl SpatialMap {
    pub fn rows(&self) -> usize {
        2 * self.extent.0 + 1
    }

    pub fn cols(&self) -> usize {
        2 * self.extent.1 + 1
    }

    pub fn at(&self, xi: (i64, i64)) -> Option<f64> {
        let r = xi.0 + self.extent.0 as i64;
        let c = xi.1 + self.extent.1 as i64;
        if r < 0 || c < 0 || r as usize >= self.rows() || c as usize >= self.cols() {
            return None;
        }
        Some(self.values[r as usize * self.cols() + c as usize])
    }

    pub fn displacement(&self, index: usize) -> (i64, i64) {
        let r = (index / self.cols()) as i64 - self.extent.0 as i64;
        let c = (index % self.cols()) as i64 - self.extent.1 as i64;
        (r, c)
    }

    /// `plateau - min`.
    pub fn dip_depth(&self) -> Option<f64> {
        self.plateau.map(|p| p - self.min)
    }
}

/// Pair-ensemble statistic of one frame: variance of `n_s - n_i` over the
/// superpixel pairs divided by the mean of `n_s + n_i`.
fn frame_statistic(frame: &Frame, pairs: &[(usize, usize)]) -> f64 {
    let n = pairs.len() as f64;
    let (mut sd, mut ssum) = (0.0, 0.0);
    for &(a, b) in pairs {
        sd += frame.counts[a] - frame.counts[b];
        ssum += frame.counts[a] + frame.counts[b];
    }
    let md = sd / n;
    let var: f64 = pairs
        .iter()
        .map(|&(a, b)| {
            let d = frame.counts[a] - frame.counts[b] - md;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    let msum = ssum / n;
    if msum > 0.0 {
        var / msum
    } else {
        f64::NAN
    }
}

/// Maps `sigma_spatial(xi)` for idler displacements `|xi_k| <= search_extent.k`
/// around the nominal conjugate of `region_s`.
///
/// The argmin is the smallest value; ties go to the first displacement in
/// row-major order.
pub fn sigma_spatial_map(
    frames: &[Frame],
    region_s: &Region,
    search_extent: (usize, usize),
    geometry: &FrameGeometry,
) -> Result<SpatialMap> {
    if frames.is_empty() {
        return Err(Error::domain("no frames supplied"));
    }
    if region_s.side != Side::Signal {
        return Err(Error::Geometry("search region must lie in the signal half".into()));
    }
    region_s.validate(geometry)?;
    if region_s.area() < 2 {
        return Err(Error::Geometry("search region needs at least two superpixels".into()));
    }
    for f in frames {
        if f.rows != geometry.rows || f.cols != geometry.cols {
            return Err(Error::Geometry(format!(
                "frame is {}x{}, geometry expects {}x{}",
                f.rows, f.cols, geometry.rows, geometry.cols
            )));
        }
    }
    let (h, w) = (search_extent.0 as i64, search_extent.1 as i64);
    let shifts: Vec<(i64, i64)> = (-h..=h).flat_map(|r| (-w..=w).map(move |c| (r, c))).collect();
    for &xi in &shifts {
        region_s.conjugate(geometry, xi)?;
    }

    let values: Vec<f64> = shifts
        .par_iter()
        .map(|&xi| {
            let pairs: Vec<(usize, usize)> = region_s
                .rows()
                .flat_map(|r| region_s.cols().map(move |c| (r, c)))
                .map(|(r, c)| {
                    let (ri, ci) = geometry.conjugate((r, c), xi);
                    (geometry.index(r, c), geometry.index(ri as usize, ci as usize))
                })
                .collect();
            frames.iter().map(|f| frame_statistic(f, &pairs)).sum::<f64>() / frames.len() as f64
        })
        .collect();

    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if values[best].is_nan() || *v < values[best] {
            best = k;
        }
    }
    let min = values[best];
    if min.is_nan() {
        return Err(Error::Degenerate("every map cell is empty".into()));
    }

    let mut map = SpatialMap {
        extent: search_extent,
        values,
        argmin: (0, 0),
        min,
        ties: Vec::new(),
        plateau: None,
        curvature: (None, None),
    };
    map.argmin = map.displacement(best);
    map.ties = (0..map.values.len())
        .filter(|&k| k != best && map.values[k] == min)
        .map(|k| map.displacement(k))
        .collect();

    let (ar, ac) = map.argmin;
    let mut far: Vec<f64> = (0..map.values.len())
        .filter(|&k| {
            let (r, c) = map.displacement(k);
            (r - ar).abs().max((c - ac).abs()) >= 3 && !map.values[k].is_nan()
        })
        .map(|k| map.values[k])
        .collect();
    if !far.is_empty() {
        far.sort_by(f64::total_cmp);
        let m = far.len();
        map.plateau = Some(if m % 2 == 1 { far[m / 2] } else { 0.5 * (far[m / 2 - 1] + far[m / 2]) });
    }
    let second = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => Some(a + b - 2.0 * min),
        _ => None,
    };
    map.curvature = (
        second(map.at((ar - 1, ac)), map.at((ar + 1, ac))),
        second(map.at((ar, ac - 1)), map.at((ar, ac + 1))),
    );
    Ok(map)
}
