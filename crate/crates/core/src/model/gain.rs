use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::registry::{param_f64, Registry};

/// Maps a relative pulse energy `E` (nominally 1) to the mean photon number
/// per mode of that shot.
pub trait GainMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn mu(&self, mean_mu: f64, energy: f64) -> f64;
}

/// `mu = mean_mu * E`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearGain;

impl GainMap for LinearGain {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn mu(&self, mean_mu: f64, energy: f64) -> f64 {
        mean_mu * energy
    }
}

/// Parametric gain law `mu ∝ sinh^2(g * sqrt(E))`, normalised so that
/// `mu(E = 1) = mean_mu`.
#[derive(Debug, Clone, Copy)]
pub struct Sinh2Gain {
    gain: f64,
    norm: f64,
}

impl Sinh2Gain {
    pub fn new(gain: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::Config(format!("sinh2 gain constant {gain} must be > 0")));
        }
        Ok(Self {
            gain,
            norm: gain.sinh().powi(2),
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }
}

impl GainMap for Sinh2Gain {
    fn name(&self) -> &'static str {
        "sinh2"
    }

    fn mu(&self, mean_mu: f64, energy: f64) -> f64 {
        mean_mu * (self.gain * energy.sqrt()).sinh().powi(2) / self.norm
    }
}

/// Built-in gain maps: `linear` and `sinh2` (parameter `gain`).
pub fn gain_maps() -> &'static Registry<dyn GainMap> {
    static REGISTRY: OnceLock<Registry<dyn GainMap>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn GainMap> = Registry::new("gain map");
        r.register("linear", |_| Ok(Box::new(LinearGain)));
        r.register("sinh2", |p| {
            let gain = param_f64(p, "gain")?
                .ok_or_else(|| Error::Config("sinh2 gain map needs a `gain` parameter".into()))?;
            Ok(Box::new(Sinh2Gain::new(gain)?))
        });
        r
    })
}
