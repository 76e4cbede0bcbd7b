use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ChannelEfficiencies, GainMap, PulseModel};

/// Draws one pulse: relative energy `E ~ N(1, jitter)` restricted to `E > 0`
/// by rejection, and the per-mode mean photon number `mu = gain(E)`.
pub fn sample_pulse<R: Rng + ?Sized>(pulse: &PulseModel, gain: &dyn GainMap, rng: &mut R) -> (f64, f64) {
    let jitter = pulse.relative_energy_jitter;
    if jitter == 0.0 {
        return (1.0, gain.mu(pulse.mean_mu, 1.0));
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let energy = 1.0 + jitter * z;
        if energy > 0.0 {
            let mu = gain.mu(pulse.mean_mu, energy);
            if mu > 0.0 {
                return (energy, mu);
            }
        }
    }
}

/// Samples detected photon pairs for coherence cells sharing one pulse.
///
/// The pre-detection number of a cell is a sum of `modes` geometric variates
/// of mean `mu`, drawn as a gamma-mixed Poisson (negative binomial). Signal
/// and idler start from the same number and are thinned independently.
#[derive(Debug, Clone)]
pub struct CellSampler {
    mixing: Gamma<f64>,
    eta_s: f64,
    eta_i: f64,
}

impl CellSampler {
    pub fn new(mu: f64, modes: u64, ch: &ChannelEfficiencies) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::domain(format!("mu = {mu} must be > 0")));
        }
        if modes < 1 {
            return Err(Error::domain("a cell needs at least one mode"));
        }
        ch.validate()?;
        let mixing = Gamma::new(modes as f64, mu).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Self {
            mixing,
            eta_s: ch.eta_s,
            eta_i: ch.eta_i,
        })
    }

    pub fn pre_detection<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let lambda = self.mixing.sample(rng);
        poisson(lambda, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        let n = self.pre_detection(rng);
        (thin(n, self.eta_s, rng), thin(n, self.eta_i, rng))
    }
}

/// One-shot form of [`CellSampler::sample`].
pub fn sample_cell_pair<R: Rng + ?Sized>(
    mu: f64,
    modes: u64,
    ch: &ChannelEfficiencies,
    rng: &mut R,
) -> Result<(u64, u64)> {
    Ok(CellSampler::new(mu, modes, ch)?.sample(rng))
}

pub(crate) fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    // Valid for any finite positive mean.
    let d = Poisson::new(lambda).expect("positive finite poisson mean");
    let x: f64 = d.sample(rng);
    x as u64
}

pub(crate) fn thin<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

/// Splits `n` photons uniformly at random over `out.len()` bins.
pub(crate) fn split_uniform<R: Rng + ?Sized>(n: u64, out: &mut [u64], rng: &mut R) {
    let mut remaining = n;
    let bins = out.len();
    for (k, slot) in out.iter_mut().enumerate() {
        let left = bins - k;
        let x = if left == 1 {
            remaining
        } else {
            thin(remaining, 1.0 / left as f64, rng)
        };
        *slot = x;
        remaining -= x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gain_maps;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn steady_pulse_is_nominal() {
        let lin = gain_maps().build_named("linear").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pulse = PulseModel::steady(0.1);
        for _ in 0..10 {
            assert_eq!(sample_pulse(&pulse, lin.as_ref(), &mut rng), (1.0, 0.1));
        }
    }

    #[test]
    fn jittered_mu_spread() {
        let lin = gain_maps().build_named("linear").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pulse = PulseModel {
            relative_energy_jitter: 0.1,
            ..PulseModel::steady(0.1)
        };
        let mus: Vec<f64> = (0..100_000)
            .map(|_| sample_pulse(&pulse, lin.as_ref(), &mut rng).1)
            .collect();
        let (_, v) = mean_var(&mus);
        let sd = v.sqrt();
        // Standard error of a Gaussian sample std: sd / sqrt(2 (n - 1)).
        let se = 0.01 / (2.0 * 99_999.0f64).sqrt();
        assert!((sd - 0.01).abs() < 3.0 * se, "sd {sd}");
        assert!(mus.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn large_jitter_stays_positive() {
        let lin = gain_maps().build_named("linear").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pulse = PulseModel {
            relative_energy_jitter: 0.9,
            ..PulseModel::steady(0.1)
        };
        for _ in 0..10_000 {
            let (e, mu) = sample_pulse(&pulse, lin.as_ref(), &mut rng);
            assert!(e > 0.0 && mu > 0.0);
        }
    }

    #[test]
    fn lossless_pairs_are_identical() {
        let ch = ChannelEfficiencies::balanced(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let (s, i) = sample_cell_pair(0.5, 20, &ch, &mut rng).unwrap();
            assert_eq!(s, i);
        }
    }

    #[test]
    fn cell_pair_moments() {
        let ch = ChannelEfficiencies::balanced(0.6).unwrap();
        let sampler = CellSampler::new(0.1, 5000, &ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let (s, i) = sampler.sample(&mut rng);
                (s as f64, i as f64)
            })
            .collect();
        let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let i: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (ms, vs) = mean_var(&s);
        let (mi, _) = mean_var(&i);
        // Mean 300, variance 318, covariance 198.
        assert!((ms - 300.0).abs() < 3.0 * (318.0 / n as f64).sqrt(), "mean {ms}");
        assert!((vs - 318.0).abs() < 3.0 * 318.0 * (2.0 / n as f64).sqrt(), "var {vs}");
        let cov = pairs.iter().map(|(a, b)| (a - ms) * (b - mi)).sum::<f64>() / (n as f64 - 1.0);
        // Var of the product of near-Gaussian deviations: vs*vi + cov^2.
        let se_cov = ((318.0 * 318.0 + 198.0 * 198.0) / n as f64).sqrt();
        assert!((cov - 198.0).abs() < 3.0 * se_cov, "cov {cov}");
    }

    #[test]
    fn invalid_cell_params() {
        let ch = ChannelEfficiencies::balanced(0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(sample_cell_pair(0.0, 10, &ch, &mut rng).is_err());
        assert!(sample_cell_pair(0.1, 0, &ch, &mut rng).is_err());
        let bad = ChannelEfficiencies { eta_s: 1.5, eta_i: 0.5 };
        assert!(sample_cell_pair(0.1, 10, &bad, &mut rng).is_err());
    }

    #[test]
    fn split_conserves_photons() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut bins = [0u64; 9];
        for n in [0u64, 1, 17, 10_000] {
            split_uniform(n, &mut bins, &mut rng);
            assert_eq!(bins.iter().sum::<u64>(), n);
        }
    }
}
