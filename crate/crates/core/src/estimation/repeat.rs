//! Aggregation over Z independent repetitions of the measurement.

use serde::{Deserialize, Serialize};

use super::estimators::{estimate_alpha_b, estimate_sigma_alpha_b_with};
use super::inversion::eta_from_sigma;
use super::series::{RegionPairSeries, VarianceConvention};
use super::uncertainty::{propagate, Balancing};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchEstimate {
    pub alpha_b: f64,
    pub sigma_ab: f64,
    pub eta_s: f64,
    pub u_alpha_b: f64,
    pub u_sigma_ab: f64,
    pub u_eta_s: f64,
    pub n: usize,
    pub m: usize,
}

/// Mean, two standard errors of that mean and the spread of the batch values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Propagated Type A uncertainty `sqrt(sum u_k^2) / Z`.
    pub u_propagated: f64,
    /// Empirical standard error `sqrt(sum (x_k - mean)^2 / (Z (Z - 1)))`.
    pub sem: f64,
    /// Unbiased standard deviation of the batch values.
    pub population_std: f64,
}

impl Aggregate {
    fn of(values: &[f64], uncertainties: &[f64]) -> Self {
        let z = values.len() as f64;
        let mean = values.iter().sum::<f64>() / z;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let u2: f64 = uncertainties.iter().map(|u| u * u).sum();
        Self {
            mean,
            u_propagated: u2.sqrt() / z,
            sem: (ss / (z * (z - 1.0))).sqrt(),
            population_std: (ss / (z - 1.0)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub batches: Vec<BatchEstimate>,
    pub alpha_b: Aggregate,
    pub sigma_ab: Aggregate,
    /// Efficiency from the averaged `alpha_b` and `sigma_ab`.
    pub eta_s: Aggregate,
    pub eta_i: f64,
}

impl RepeatSummary {
    pub fn z(&self) -> usize {
        self.batches.len()
    }
}

/// Background-corrected estimate of one self-contained batch, with the
/// balancing factor recomputed from that batch alone.
pub fn estimate_batch(batch: &RegionPairSeries, conv: VarianceConvention) -> Result<BatchEstimate> {
    let alpha_b = estimate_alpha_b(batch)?;
    let sigma_ab = estimate_sigma_alpha_b_with(batch, alpha_b, conv)?;
    let u = propagate(batch, Balancing::Estimated, conv)?;
    Ok(BatchEstimate {
        alpha_b,
        sigma_ab,
        eta_s: eta_from_sigma(alpha_b, sigma_ab).eta_s,
        u_alpha_b: u.u_alpha,
        u_sigma_ab: u.u_sigma,
        u_eta_s: u.u_eta_s,
        n: u.n,
        m: u.m,
    })
}

pub fn repeat_experiment(batches: &[RegionPairSeries]) -> Result<RepeatSummary> {
    repeat_experiment_with(batches, VarianceConvention::Unbiased)
}

pub fn repeat_experiment_with(batches: &[RegionPairSeries], conv: VarianceConvention) -> Result<RepeatSummary> {
    if batches.len() < 2 {
        return Err(Error::domain(format!("need Z >= 2 batches, got {}", batches.len())));
    }
    let estimates = batches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            estimate_batch(b, conv).map_err(|e| Error::Degenerate(format!("batch {k}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&BatchEstimate) -> f64| estimates.iter().map(f).collect::<Vec<_>>();
    let alpha_b = Aggregate::of(&pick(|b| b.alpha_b), &pick(|b| b.u_alpha_b));
    let sigma_ab = Aggregate::of(&pick(|b| b.sigma_ab), &pick(|b| b.u_sigma_ab));
    let mut eta_s = Aggregate::of(&pick(|b| b.eta_s), &pick(|b| b.u_eta_s));
    let combined = eta_from_sigma(alpha_b.mean, sigma_ab.mean);
    eta_s.mean = combined.eta_s;
    Ok(RepeatSummary {
        batches: estimates,
        alpha_b,
        sigma_ab,
        eta_s,
        eta_i: combined.eta_i,
    })
}
