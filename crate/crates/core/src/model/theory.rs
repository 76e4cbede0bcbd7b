//! Closed-form moments of multithermal twin beams after independent
//! binomial losses.

use super::ChannelEfficiencies;
use crate::error::{Error, Result};

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("mean photons per mode {mu} must be > 0")))
    }
}

fn check_modes(m_tot: f64) -> Result<()> {
    if m_tot >= 1.0 && m_tot.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("mode count {m_tot} must be >= 1")))
    }
}

fn check_eta(eta: f64, allow_zero: bool) -> Result<()> {
    let lower_ok = if allow_zero { eta >= 0.0 } else { eta > 0.0 };
    if lower_ok && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("efficiency {eta} out of range")))
    }
}

/// Variance of the detected photon number in one arm:
/// `M_tot * eta * mu * (1 + eta * mu)`.
pub fn predict_variance(mu: f64, eta: f64, m_tot: f64) -> Result<f64> {
    check_mu(mu)?;
    check_eta(eta, false)?;
    check_modes(m_tot)?;
    Ok(m_tot * eta * mu * (1.0 + eta * mu))
}

/// Signal/idler covariance: `M_tot * eta_s * eta_i * mu * (1 + mu)`.
///
/// Either efficiency may be zero (no detection on that arm).
pub fn predict_covariance(mu: f64, eta_s: f64, eta_i: f64, m_tot: f64) -> Result<f64> {
    check_mu(mu)?;
    check_eta(eta_s, true)?;
    check_eta(eta_i, true)?;
    check_modes(m_tot)?;
    Ok(m_tot * eta_s * eta_i * mu * (1.0 + mu))
}

/// Noise reduction factor of the raw difference `N_s - N_i`.
pub fn predict_sigma(ch: &ChannelEfficiencies, mu: f64, m_tot: f64) -> Result<f64> {
    ch.validate()?;
    check_mu(mu)?;
    check_modes(m_tot)?;
    let ep = ch.eta_plus();
    let em = ch.eta_minus();
    Ok(1.0 - ep + em * em / (2.0 * ep) * (mu + 0.5))
}

/// Noise reduction factor when the per-mode mean fluctuates from shot to
/// shot with mean `mu_bar` and variance `var_mu`.
pub fn predict_sigma_with_jitter(
    ch: &ChannelEfficiencies,
    mu_bar: f64,
    var_mu: f64,
    m_tot: f64,
) -> Result<f64> {
    ch.validate()?;
    check_mu(mu_bar)?;
    check_modes(m_tot)?;
    if !(var_mu >= 0.0 && var_mu.is_finite()) {
        return Err(Error::domain(format!("V(mu) = {var_mu} must be >= 0")));
    }
    let ep = ch.eta_plus();
    let em = ch.eta_minus();
    let bracket = mu_bar + 0.5 + var_mu / mu_bar * (1.0 + m_tot);
    Ok(1.0 - ep + em * em / (2.0 * ep) * bracket)
}

/// Loss-balanced noise reduction factor `(1 + alpha) / 2 - eta_s`.
pub fn predict_sigma_alpha(alpha: f64, eta_s: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha = {alpha} must be > 0")));
    }
    check_eta(eta_s, false)?;
    Ok(0.5 * (1.0 + alpha) - eta_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Moments of one thermal mode, by direct summation of the geometric
    /// pmf p(n) = mu^n / (1 + mu)^(n + 1).
    fn geometric_moments(mu: f64) -> (f64, f64) {
        let q = mu / (1.0 + mu);
        let mut p = 1.0 / (1.0 + mu);
        let (mut m1, mut m2) = (0.0, 0.0);
        for n in 0..2000 {
            let x = n as f64;
            m1 += p * x;
            m2 += p * x * x;
            p *= q;
        }
        (m1, m2 - m1 * m1)
    }

    /// Joint moments of a single perfectly paired mode after binomial
    /// thinning, by summing over the geometric pmf and both binomials.
    fn thinned_pair_moments(mu: f64, eta_s: f64, eta_i: f64) -> (f64, f64, f64) {
        let q = mu / (1.0 + mu);
        let mut p = 1.0 / (1.0 + mu);
        let (mut es, mut ei, mut ess, mut esi) = (0.0, 0.0, 0.0, 0.0);
        for n in 0..400u32 {
            let nf = n as f64;
            // Conditional moments of independent binomials given n.
            let ms = nf * eta_s;
            let mi = nf * eta_i;
            let vs = nf * eta_s * (1.0 - eta_s);
            es += p * ms;
            ei += p * mi;
            ess += p * (vs + ms * ms);
            esi += p * ms * mi;
            p *= q;
        }
        (es, ess - es * es, esi - es * ei)
    }

    #[test]
    fn variance_examples() {
        assert!((predict_variance(0.1, 0.6, 5000.0).unwrap() - 318.0).abs() < 1e-9);
        let (_, v) = geometric_moments(0.1);
        assert!((v - 0.11).abs() < 1e-12);
        assert!((predict_variance(0.1, 1.0, 1.0).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_thinned_brute_force() {
        let (mean, var, _) = thinned_pair_moments(0.3, 0.45, 0.8);
        assert!((mean - 0.3 * 0.45).abs() < 1e-12);
        assert!((predict_variance(0.3, 0.45, 1.0).unwrap() - var).abs() < 1e-12);
    }

    #[test]
    fn shot_noise_limit_with_many_modes() {
        let mean = 1000.0;
        for m_tot in [1e4, 1e6, 1e9, 1e12] {
            let mu = mean / (0.5 * m_tot);
            let var = predict_variance(mu, 0.5, m_tot).unwrap();
            assert!((var / mean - 1.0 - mean / m_tot).abs() < 1e-12);
        }
        let var = predict_variance(1000.0 / 0.5e12, 0.5, 1e12).unwrap();
        assert!((var / 1000.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn covariance_examples() {
        assert!((predict_covariance(0.1, 0.6, 0.6, 5000.0).unwrap() - 198.0).abs() < 1e-9);
        assert_eq!(predict_covariance(0.1, 0.0, 0.6, 5000.0).unwrap(), 0.0);
        assert_eq!(predict_covariance(0.1, 0.6, 0.0, 5000.0).unwrap(), 0.0);
        let (_, v) = geometric_moments(0.1);
        assert!((predict_covariance(0.1, 1.0, 1.0, 1.0).unwrap() - v).abs() < 1e-12);
        let (_, _, cov) = thinned_pair_moments(0.3, 0.45, 0.8);
        assert!((predict_covariance(0.3, 0.45, 0.8, 1.0).unwrap() - cov).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        let ch = ChannelEfficiencies::new(0.7, 0.5).unwrap();
        assert!((predict_sigma(&ch, 0.1, 5000.0).unwrap() - 0.42).abs() < 1e-12);
        let perfect = ChannelEfficiencies::balanced(1.0).unwrap();
        assert_eq!(predict_sigma(&perfect, 0.3, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn sigma_matches_difference_variance_from_moments() {
        // Var(N_s - N_i) / <N_s + N_i> assembled from the variance and
        // covariance predictors.
        let (mu, es, ei, m) = (0.25, 0.7, 0.5, 3000.0);
        let vs = predict_variance(mu, es, m).unwrap();
        let vi = predict_variance(mu, ei, m).unwrap();
        let c = predict_covariance(mu, es, ei, m).unwrap();
        let direct = (vs + vi - 2.0 * c) / (m * mu * (es + ei));
        let ch = ChannelEfficiencies::new(es, ei).unwrap();
        assert!((predict_sigma(&ch, mu, m).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn jitter_examples() {
        let ch = ChannelEfficiencies::new(0.62, 0.60).unwrap();
        let a = predict_sigma(&ch, 0.1, 5000.0).unwrap();
        let b = predict_sigma_with_jitter(&ch, 0.1, 0.0, 5000.0).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let bal = ChannelEfficiencies::balanced(0.6).unwrap();
        let s = predict_sigma_with_jitter(&bal, 0.1, 0.05, 1e6).unwrap();
        assert!((s - 0.4).abs() < 1e-15);
        assert!(predict_sigma_with_jitter(&ch, 0.1, -1.0, 10.0).is_err());
    }

    #[test]
    fn sigma_alpha_examples() {
        assert!((predict_sigma_alpha(0.99416, 0.613).unwrap() - 0.384).abs() < 1e-3);
        assert_eq!(predict_sigma_alpha(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(predict_sigma_alpha(1.0, 0.5).unwrap(), 0.5);
        assert!(predict_sigma_alpha(0.0, 0.5).is_err());
        assert!(predict_sigma_alpha(1.0, 1.5).is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(predict_variance(0.0, 0.5, 10.0).is_err());
        assert!(predict_variance(0.1, 0.0, 10.0).is_err());
        assert!(predict_variance(0.1, 0.5, 0.5).is_err());
        assert!(predict_covariance(0.1, 1.1, 0.5, 10.0).is_err());
        let ch = ChannelEfficiencies { eta_s: 0.0, eta_i: 0.5 };
        assert!(predict_sigma(&ch, 0.1, 10.0).is_err());
    }

    proptest! {
        #[test]
        fn balanced_loss_identity(eta in 1e-6f64..=1.0, mu in 1e-4f64..10.0, m in 1.0f64..1e7) {
            let ch = ChannelEfficiencies::balanced(eta).unwrap();
            prop_assert_eq!(predict_sigma(&ch, mu, m).unwrap(), 1.0 - eta);
        }

        #[test]
        fn excess_term_is_non_negative(es in 1e-3f64..=1.0, ei in 1e-3f64..=1.0, mu in 1e-4f64..10.0) {
            let ch = ChannelEfficiencies::new(es, ei).unwrap();
            prop_assert!(predict_sigma(&ch, mu, 100.0).unwrap() >= 1.0 - ch.eta_plus());
        }

        #[test]
        fn zero_jitter_is_bitwise_sigma(es in 1e-3f64..=1.0, ei in 1e-3f64..=1.0, mu in 1e-4f64..10.0, m in 1.0f64..1e7) {
            let ch = ChannelEfficiencies::new(es, ei).unwrap();
            let a = predict_sigma(&ch, mu, m).unwrap();
            let b = predict_sigma_with_jitter(&ch, mu, 0.0, m).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn excess_noise_identity(mu in 1e-4f64..10.0, eta in 1e-3f64..=1.0, m in 1.0f64..1e7) {
            let var = predict_variance(mu, eta, m).unwrap();
            let mean = m * eta * mu;
            prop_assert!((var / mean - 1.0 - mean / m).abs() <= 1e-12 * (1.0 + mean / m));
        }

        #[test]
        fn jitter_monotonicity(
            es in 0.05f64..=1.0, delta in 0.01f64..0.5, mu in 1e-3f64..2.0,
            v1 in 0.0f64..1.0, dv in 0.0f64..1.0, m1 in 1.0f64..1e6, dm in 0.0f64..1e6,
        ) {
            let ei = (es - delta).max(0.01);
            prop_assume!(es != ei);
            let ch = ChannelEfficiencies::new(es, ei).unwrap();
            let base = predict_sigma_with_jitter(&ch, mu, v1, m1).unwrap();
            prop_assert!(predict_sigma_with_jitter(&ch, mu, v1 + dv, m1).unwrap() >= base);
            prop_assert!(predict_sigma_with_jitter(&ch, mu, v1, m1 + dm).unwrap() >= base);
        }
    }
}
