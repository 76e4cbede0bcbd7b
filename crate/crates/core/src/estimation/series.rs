use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Region;
use crate::simulator::Frame;

/// Divisor used for sample variances and covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceConvention {
    /// Divide by `n - 1`.
    #[default]
    Unbiased,
    /// Divide by `n`, as in the plain `E[x^2] - E[x]^2` form.
    Biased,
}

impl VarianceConvention {
    pub fn divisor(&self, n: usize) -> f64 {
        match self {
            VarianceConvention::Unbiased => n as f64 - 1.0,
            VarianceConvention::Biased => n as f64,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample covariance of two equally long series.
pub fn covariance(xs: &[f64], ys: &[f64], conv: VarianceConvention) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    s / conv.divisor(xs.len())
}

pub fn variance(xs: &[f64], conv: VarianceConvention) -> f64 {
    covariance(xs, xs, conv)
}

/// Background-only region sums `M_s(p)`, `M_i(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSeries {
    pub m_s: Vec<f64>,
    pub m_i: Vec<f64>,
}

/// Per-frame signal and idler region sums, with optional background series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPairSeries {
    pub n_s: Vec<f64>,
    pub n_i: Vec<f64>,
    pub background: Option<BackgroundSeries>,
}

fn check_pair(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "{what}: signal and idler series differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::domain(format!("{what}: need at least two frames, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("{what}: counts must be finite and >= 0")));
    }
    Ok(())
}

impl RegionPairSeries {
    pub fn new(n_s: Vec<f64>, n_i: Vec<f64>) -> Result<Self> {
        check_pair(&n_s, &n_i, "PDC series")?;
        Ok(Self {
            n_s,
            n_i,
            background: None,
        })
    }

    pub fn with_background(mut self, m_s: Vec<f64>, m_i: Vec<f64>) -> Result<Self> {
        check_pair(&m_s, &m_i, "background series")?;
        self.background = Some(BackgroundSeries { m_s, m_i });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_s.is_empty()
    }

    pub fn background_len(&self) -> usize {
        self.background.as_ref().map_or(0, |b| b.m_s.len())
    }

    /// Sub-series of PDC frames `pdc` and background frames `bg`.
    pub fn slice(&self, pdc: std::ops::Range<usize>, bg: Option<std::ops::Range<usize>>) -> Result<Self> {
        let out = Self::new(self.n_s[pdc.clone()].to_vec(), self.n_i[pdc].to_vec())?;
        match (&self.background, bg) {
            (Some(b), Some(r)) => out.with_background(b.m_s[r.clone()].to_vec(), b.m_i[r].to_vec()),
            _ => Ok(out),
        }
    }

    /// Splits into `z` contiguous batches of near-equal size.
    pub fn partition(&self, z: usize) -> Result<Vec<Self>> {
        if z < 1 {
            return Err(Error::domain("need at least one batch"));
        }
        let bounds = |len: usize, k: usize| (k * len / z)..((k + 1) * len / z);
        (0..z)
            .map(|k| {
                let bg = self.background.as_ref().map(|b| bounds(b.m_s.len(), k));
                self.slice(bounds(self.len(), k), bg)
            })
            .collect()
    }
}

/// Sum of superpixel counts over `region`.
pub fn region_sum(frame: &Frame, region: &Region) -> Result<f64> {
    let (r1, c1) = (region.origin.0 + region.extent.0, region.origin.1 + region.extent.1);
    if r1 > frame.rows || c1 > frame.cols {
        return Err(Error::Bounds {
            region: format!("{:?}+{:?}", region.origin, region.extent),
            rows: frame.rows,
            cols: frame.cols,
        });
    }
    let mut total = 0.0;
    for r in region.rows() {
        let row = &frame.counts[r * frame.cols..(r + 1) * frame.cols];
        total += row[region.cols()].iter().sum::<f64>();
    }
    Ok(total)
}

/// Region sums of every frame for a signal/idler region pair.
pub fn extract_sums(frames: &[Frame], signal: &Region, idler: &Region) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut n_s = Vec::with_capacity(frames.len());
    let mut n_i = Vec::with_capacity(frames.len());
    for f in frames {
        n_s.push(region_sum(f, signal)?);
        n_i.push(region_sum(f, idler)?);
    }
    Ok((n_s, n_i))
}

/// Builds the series for a PDC stack and an optional background stack.
pub fn extract_series(pdc: &[Frame], background: Option<&[Frame]>, signal: &Region, idler: &Region) -> Result<RegionPairSeries> {
    let (n_s, n_i) = extract_sums(pdc, signal, idler)?;
    let series = RegionPairSeries::new(n_s, n_i)?;
    match background {
        Some(bg) => {
            let (m_s, m_i) = extract_sums(bg, signal, idler)?;
            series.with_background(m_s, m_i)
        }
        None => Ok(series),
    }
}
