//! JSON run configuration: the experiment plus analysis parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimators, frame_filters, CalibrationSettings, VarianceConvention};
use crate::model::Region;
use crate::registry::StrategyRef;
use crate::simulator::ExperimentConfig;

fn one() -> usize {
    1
}

fn default_search() -> (usize, usize) {
    (3, 3)
}

fn default_filter() -> StrategyRef {
    StrategyRef::named("median-mad")
}

fn default_estimator() -> StrategyRef {
    StrategyRef::named("sigma-alpha-b")
}

fn default_chunk() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// PDC-on frames to simulate.
    pub n_pdc: usize,
    /// Background frames to simulate.
    pub n_background: usize,
    /// Signal detection region.
    pub signal: Region,
    /// Explicit idler region; defaults to the conjugate of `signal`.
    #[serde(default)]
    pub idler: Option<Region>,
    /// Idler displacement from the nominal centre of symmetry, superpixels.
    #[serde(default)]
    pub cs_shift: (i64, i64),
    /// Number of batches Z.
    #[serde(default = "one")]
    pub z: usize,
    /// Half-widths of the centre-of-symmetry search grid.
    #[serde(default = "default_search")]
    pub search_extent: (usize, usize),
    /// Area-scan extents, ascending; centred on `anchor`.
    #[serde(default)]
    pub areas: Vec<(usize, usize)>,
    /// Area-scan centre; defaults to the centre of `signal`.
    #[serde(default)]
    pub anchor: Option<(usize, usize)>,
    #[serde(default = "default_filter")]
    pub filter: StrategyRef,
    /// Headline estimator reported by `calibrate` next to the full budget.
    #[serde(default = "default_estimator")]
    pub estimator: StrategyRef,
    #[serde(default)]
    pub variance: VarianceConvention,
    /// Frames per chunk for streamed generation and reading.
    #[serde(default = "default_chunk")]
    pub chunk_frames: usize,
}

impl AnalysisConfig {
    pub fn anchor(&self) -> (usize, usize) {
        self.anchor.unwrap_or((
            self.signal.origin.0 + self.signal.extent.0 / 2,
            self.signal.origin.1 + self.signal.extent.1 / 2,
        ))
    }

    pub fn calibration(&self, m_tot: Option<f64>) -> CalibrationSettings {
        CalibrationSettings {
            signal: self.signal,
            idler: self.idler,
            cs_shift: self.cs_shift,
            z: self.z,
            filter: self.filter.clone(),
            m_tot,
            variance: self.variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        let a = &self.analysis;
        let g = &self.experiment.geometry;
        if a.n_pdc < 2 || a.n_background < 2 {
            return Err(Error::Config("n_pdc and n_background must be at least 2".into()));
        }
        if a.z == 0 || a.n_pdc < 2 * a.z || a.n_background < 2 * a.z {
            return Err(Error::Config(format!(
                "z = {} batches need at least two frames each of both kinds",
                a.z
            )));
        }
        if a.chunk_frames == 0 {
            return Err(Error::Config("chunk_frames must be positive".into()));
        }
        a.signal.validate(g)?;
        a.calibration(None).idler_region(g)?;
        frame_filters().build(&a.filter)?;
        estimators().build(&a.estimator)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn round_trip_is_lossless() {
        let cfg = scenarios::table1_run();
        let text = cfg.to_json().unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_json(&text).unwrap().to_json().unwrap(), text);
    }

    #[test]
    fn errors_carry_positions() {
        let err = RunConfig::from_json("{\n  \"experiment\": 3\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let mut cfg = scenarios::table1_run();
        cfg.analysis.z = 3000;
        assert!(RunConfig::from_json(&cfg.to_json().unwrap()).is_err());
        let mut cfg = scenarios::table1_run();
        cfg.analysis.filter = StrategyRef::named("sieve");
        assert!(matches!(cfg.validate(), Err(Error::UnknownStrategy { .. })));
    }
}
