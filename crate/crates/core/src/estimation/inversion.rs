//! Efficiency from a noise-reduction measurement.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub eta_s: f64,
    pub eta_i: f64,
    /// False when `eta_s` falls outside `(0, 1]`.
    pub in_range: bool,
}

/// `eta_s = (1 + alpha_b) / 2 - sigma_ab` and, since `alpha_b = eta_s / eta_i`,
/// `eta_i = eta_s / alpha_b`.
pub fn eta_from_sigma(alpha_b: f64, sigma_ab: f64) -> EfficiencyEstimate {
    let eta_s = (1.0 + alpha_b) / 2.0 - sigma_ab;
    let in_range = eta_s > 0.0 && eta_s <= 1.0;
    if !in_range {
        warn!("efficiency {eta_s} is outside (0, 1]");
    }
    EfficiencyEstimate {
        eta_s,
        eta_i: eta_s / alpha_b,
        in_range,
    }
}

/// Removes the optical transmittance `tau` of the channel: `eta / tau`.
pub fn correct_for_transmittance(eta: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(format!("transmittance {tau} must lie in (0, 1]")));
    }
    let out = eta / tau;
    if out > 1.0 {
        warn!("corrected efficiency {out} exceeds 1");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_point() {
        let e = eta_from_sigma(0.99416, 0.384);
        assert!((e.eta_s - 0.61308).abs() < 1e-12);
        assert!((e.eta_s / e.eta_i - 0.99416).abs() < 1e-12);
        assert!(e.in_range);
    }

    #[test]
    fn limits() {
        assert_eq!(eta_from_sigma(1.0, 0.0).eta_s, 1.0);
        let coherent = eta_from_sigma(1.0, 1.0);
        assert_eq!(coherent.eta_s, 0.0);
        assert!(!coherent.in_range);
    }

    #[test]
    fn transmittance() {
        assert_eq!(correct_for_transmittance(0.613, 1.0).unwrap(), 0.613);
        let v = correct_for_transmittance(0.613, 0.9025).unwrap();
        assert!((v - 0.679_224_376_731_301_9).abs() < 1e-12);
        assert_eq!(correct_for_transmittance(0.5, 0.4).unwrap(), 1.25);
        assert!(correct_for_transmittance(0.5, 0.0).is_err());
        assert!(correct_for_transmittance(0.5, -0.1).is_err());
        assert!(correct_for_transmittance(0.5, 1.2).is_err());
    }
}
