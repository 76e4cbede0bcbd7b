//! Excess-noise diagnostics.

use serde::{Deserialize, Serialize};

use super::series::{mean, variance, RegionPairSeries, VarianceConvention};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessNoise {
    /// `Var(N_s + N_i) / E[N_s + N_i]`.
    pub sum_ratio: f64,
    /// `Var(N_s) / E[N_s]`.
    pub signal_ratio: f64,
    /// `Var(N_i) / E[N_i]`.
    pub idler_ratio: f64,
    /// Thermal excess `E = <N> / M_tot` per arm (mean of the two arms).
    pub thermal_excess: Option<f64>,
}

/// Fano-type ratios of the region sums; with `m_tot` the single-arm thermal
/// prediction `Var/E = 1 + <N>/M_tot` can be compared with `signal_ratio`.
///
/// For a balanced thermal twin beam the sum ratio is `1 + eta mu + eta (1 + mu)`,
/// because the pair correlation adds to the single-arm excess.
pub fn excess_noise(series: &RegionPairSeries, m_tot: Option<f64>) -> ExcessNoise {
    let conv = VarianceConvention::Unbiased;
    let sum: Vec<f64> = series.n_s.iter().zip(&series.n_i).map(|(s, i)| s + i).collect();
    let ratio = |xs: &[f64]| {
        let m = mean(xs);
        if m > 0.0 {
            variance(xs, conv) / m
        } else {
            f64::NAN
        }
    };
    ExcessNoise {
        sum_ratio: ratio(&sum),
        signal_ratio: ratio(&series.n_s),
        idler_ratio: ratio(&series.n_i),
        thermal_excess: m_tot.filter(|m| *m > 0.0).map(|m| 0.5 * (mean(&series.n_s) + mean(&series.n_i)) / m),
    }
}
