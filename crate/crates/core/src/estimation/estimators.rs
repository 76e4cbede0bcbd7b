//! Balancing factors and the three noise-reduction estimators.
//!
//! | name            | statistic                                              |
//! |-----------------|--------------------------------------------------------|
//! | `sigma`         | `Var(N_s - N_i) / (E[N_s] + E[N_i])`                   |
//! | `sigma-alpha`   | `Var(N_s - a N_i) / (E[N_s] + a E[N_i])`, `a = E[N_s]/E[N_i]` |
//! | `sigma-alpha-b` | background-subtracted variance over `2 (E[N'_s] - E[M_s])` |

use std::sync::OnceLock;

use log::warn;
use serde::{Deserialize, Serialize};

use super::series::{mean, variance, RegionPairSeries, VarianceConvention};
use super::uncertainty::{propagate, Balancing};
use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaVariant {
    /// Raw difference, balancing forced to 1.
    Raw,
    /// A-posteriori loss balancing.
    Alpha,
    /// Loss balancing plus background subtraction.
    AlphaB,
}

impl SigmaVariant {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaVariant::Raw => "sigma",
            SigmaVariant::Alpha => "sigma-alpha",
            SigmaVariant::AlphaB => "sigma-alpha-b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseReductionEstimate {
    pub value: f64,
    pub variant: SigmaVariant,
    pub alpha_used: f64,
    pub n_frames: usize,
    /// Delta-method standard uncertainty.
    pub uncertainty: f64,
    /// Set when the estimate came out below zero (reported, never clamped).
    pub negative: bool,
}

/// `E[N_s] / E[N_i]`.
pub fn estimate_alpha(series: &RegionPairSeries) -> Result<f64> {
    let mi = mean(&series.n_i);
    if mi == 0.0 {
        return Err(Error::DivisionByZero("mean idler count is zero"));
    }
    Ok(mean(&series.n_s) / mi)
}

/// `Var(N_s - alpha N_i) / (E[N_s] + alpha E[N_i])`, unbiased variance.
pub fn estimate_sigma_alpha(series: &RegionPairSeries, alpha: f64) -> Result<f64> {
    estimate_sigma_alpha_with(series, alpha, VarianceConvention::Unbiased)
}

pub fn estimate_sigma_alpha_with(series: &RegionPairSeries, alpha: f64, conv: VarianceConvention) -> Result<f64> {
    let den = mean(&series.n_s) + alpha * mean(&series.n_i);
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("denominator {den} is not positive")));
    }
    let d: Vec<f64> = series.n_s.iter().zip(&series.n_i).map(|(s, i)| s - alpha * i).collect();
    Ok(variance(&d, conv) / den)
}

/// `(E[N'_s] - E[M_s]) / (E[N'_i] - E[M_i])`.
pub fn estimate_alpha_b(series: &RegionPairSeries) -> Result<f64> {
    let bg = series
        .background
        .as_ref()
        .ok_or_else(|| Error::Degenerate("alpha_B needs a background series".into()))?;
    let num = mean(&series.n_s) - mean(&bg.m_s);
    let den = mean(&series.n_i) - mean(&bg.m_i);
    if den == 0.0 {
        return Err(Error::DivisionByZero("background-corrected idler mean is zero"));
    }
    if num < 0.0 {
        warn!("background exceeds signal: corrected signal mean {num} is negative");
    }
    Ok(num / den)
}

/// `[Var(N'_s - a N'_i) - Var(M_s - a M_i)] / [2 (E[N'_s] - E[M_s])]`.
///
/// Negative results are returned unchanged.
pub fn estimate_sigma_alpha_b(series: &RegionPairSeries, alpha_b: f64) -> Result<f64> {
    estimate_sigma_alpha_b_with(series, alpha_b, VarianceConvention::Unbiased)
}

pub fn estimate_sigma_alpha_b_with(series: &RegionPairSeries, alpha_b: f64, conv: VarianceConvention) -> Result<f64> {
    let bg = series
        .background
        .as_ref()
        .ok_or_else(|| Error::Degenerate("sigma_alpha,B needs a background series".into()))?;
    let den = 2.0 * (mean(&series.n_s) - mean(&bg.m_s));
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("denominator {den} is not positive")));
    }
    let d: Vec<f64> = series.n_s.iter().zip(&series.n_i).map(|(s, i)| s - alpha_b * i).collect();
    let e: Vec<f64> = bg.m_s.iter().zip(&bg.m_i).map(|(s, i)| s - alpha_b * i).collect();
    let value = (variance(&d, conv) - variance(&e, conv)) / den;
    if value < 0.0 {
        warn!("sigma_alpha,B = {value} is negative");
    }
    Ok(value)
}

/// A noise-reduction estimator selectable by name.
pub trait NoiseReductionEstimator: Send + Sync {
    fn variant(&self) -> SigmaVariant;

    fn estimate(&self, series: &RegionPairSeries) -> Result<NoiseReductionEstimate>;
}

fn finish(variant: SigmaVariant, value: f64, alpha: f64, series: &RegionPairSeries, balancing: Balancing, conv: VarianceConvention) -> Result<NoiseReductionEstimate> {
    let background_free;
    let target = if variant == SigmaVariant::AlphaB {
        series
    } else {
        background_free = RegionPairSeries {
            background: None,
            ..series.clone()
        };
        &background_free
    };
    let u = propagate(target, balancing, conv)?;
    Ok(NoiseReductionEstimate {
        value,
        variant,
        alpha_used: alpha,
        n_frames: series.len(),
        uncertainty: u.u_sigma,
        negative: value < 0.0,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RawSigma {
    pub convention: VarianceConvention,
}

impl NoiseReductionEstimator for RawSigma {
    fn variant(&self) -> SigmaVariant {
        SigmaVariant::Raw
    }

    fn estimate(&self, series: &RegionPairSeries) -> Result<NoiseReductionEstimate> {
        let value = estimate_sigma_alpha_with(series, 1.0, self.convention)?;
        finish(SigmaVariant::Raw, value, 1.0, series, Balancing::Fixed(1.0), self.convention)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SigmaAlpha {
    pub convention: VarianceConvention,
}

impl NoiseReductionEstimator for SigmaAlpha {
    fn variant(&self) -> SigmaVariant {
        SigmaVariant::Alpha
    }

    fn estimate(&self, series: &RegionPairSeries) -> Result<NoiseReductionEstimate> {
        let alpha = estimate_alpha(series)?;
        let value = estimate_sigma_alpha_with(series, alpha, self.convention)?;
        finish(SigmaVariant::Alpha, value, alpha, series, Balancing::Estimated, self.convention)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SigmaAlphaB {
    pub convention: VarianceConvention,
}

impl NoiseReductionEstimator for SigmaAlphaB {
    fn variant(&self) -> SigmaVariant {
        SigmaVariant::AlphaB
    }

    fn estimate(&self, series: &RegionPairSeries) -> Result<NoiseReductionEstimate> {
        let alpha = estimate_alpha_b(series)?;
        let value = estimate_sigma_alpha_b_with(series, alpha, self.convention)?;
        finish(SigmaVariant::AlphaB, value, alpha, series, Balancing::Estimated, self.convention)
    }
}

fn convention_param(p: &serde_json::Map<String, serde_json::Value>) -> Result<VarianceConvention> {
    match p.get("variance") {
        None => Ok(VarianceConvention::Unbiased),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::Config(format!("bad `variance` parameter: {e}"))),
    }
}

/// Built-in estimators: `sigma`, `sigma-alpha`, `sigma-alpha-b`
/// (optional parameter `variance`: `"unbiased"` | `"biased"`).
pub fn estimators() -> &'static Registry<dyn NoiseReductionEstimator> {
    static REGISTRY: OnceLock<Registry<dyn NoiseReductionEstimator>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn NoiseReductionEstimator> = Registry::new("noise-reduction estimator");
        r.register("sigma", |p| Ok(Box::new(RawSigma { convention: convention_param(p)? })));
        r.register("sigma-alpha", |p| Ok(Box::new(SigmaAlpha { convention: convention_param(p)? })));
        r.register("sigma-alpha-b", |p| Ok(Box::new(SigmaAlphaB { convention: convention_param(p)? })));
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::StrategyRef;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn poisson_series(n: usize, lambda: f64, seed: u64) -> RegionPairSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Poisson::new(lambda).unwrap();
        let n_s = (0..n).map(|_| d.sample(&mut rng)).collect();
        let n_i = (0..n).map(|_| d.sample(&mut rng)).collect();
        RegionPairSeries::new(n_s, n_i).unwrap()
    }

    #[test]
    fn identical_series() {
        let v = vec![10.0, 12.0, 9.0, 15.0];
        let s = RegionPairSeries::new(v.clone(), v.clone()).unwrap();
        assert_eq!(estimate_alpha(&s).unwrap(), 1.0);
        assert_eq!(estimate_sigma_alpha(&s, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_idler_mean() {
        let s = RegionPairSeries::new(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(estimate_alpha(&s), Err(Error::DivisionByZero(_))));
        let z = RegionPairSeries::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(estimate_sigma_alpha(&z, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn independent_poisson_is_shot_noise() {
        let s = poisson_series(20_000, 500.0, 1);
        let est = SigmaAlpha::default().estimate(&s).unwrap();
        assert!((est.value - 1.0).abs() < 3.0 * est.uncertainty, "{est:?}");
        // A Gaussian-difference reference: u ~ sigma * sqrt(2 / n).
        let rough = (2.0f64 / 20_000.0).sqrt();
        assert!((est.uncertainty / rough - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_background_reduces_to_plain_estimators() {
        let s = poisson_series(500, 300.0, 2);
        let zeros = vec![0.0; 100];
        let sb = s.clone().with_background(zeros.clone(), zeros).unwrap();
        let a = estimate_alpha(&s).unwrap();
        assert_eq!(estimate_alpha_b(&sb).unwrap(), a);
        let plain = estimate_sigma_alpha(&s, a).unwrap();
        let corrected = estimate_sigma_alpha_b(&sb, a).unwrap();
        assert!((plain - corrected).abs() < 1e-12);
    }

    #[test]
    fn alpha_b_requires_background() {
        let s = poisson_series(10, 30.0, 3);
        assert!(estimate_alpha_b(&s).is_err());
        assert!(SigmaAlphaB::default().estimate(&s).is_err());
    }

    #[test]
    fn negative_sigma_is_flagged_not_clamped() {
        // PDC-on difference quieter than the background difference.
        let s = RegionPairSeries::new(vec![100.0, 101.0, 100.0, 101.0], vec![100.0, 101.0, 100.0, 101.0])
            .unwrap()
            .with_background(vec![0.0, 10.0, 0.0, 10.0], vec![10.0, 0.0, 10.0, 0.0])
            .unwrap();
        let est = SigmaAlphaB::default().estimate(&s).unwrap();
        assert!(est.value < 0.0);
        assert!(est.negative);
    }

    #[test]
    fn conventions_differ_by_n_over_n_minus_one() {
        let s = poisson_series(50, 100.0, 4);
        let u = estimate_sigma_alpha_with(&s, 1.0, VarianceConvention::Unbiased).unwrap();
        let b = estimate_sigma_alpha_with(&s, 1.0, VarianceConvention::Biased).unwrap();
        assert!((u * 49.0 / 50.0 - b).abs() < 1e-12);
    }

    #[test]
    fn registry_resolves_all_variants() {
        for (name, variant) in [
            ("sigma", SigmaVariant::Raw),
            ("sigma-alpha", SigmaVariant::Alpha),
            ("sigma-alpha-b", SigmaVariant::AlphaB),
        ] {
            let e = estimators().build_named(name).unwrap();
            assert_eq!(e.variant(), variant);
            assert_eq!(variant.name(), name);
        }
        let biased = StrategyRef::named("sigma").with_param("variance", "biased");
        assert!(estimators().build(&biased).is_ok());
        let bad = StrategyRef::named("sigma").with_param("variance", "sloppy");
        assert!(estimators().build(&bad).is_err());
    }
}
