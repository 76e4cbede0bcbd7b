//! Rejection of frames hit by cosmic rays.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::Error;
use crate::registry::{param_f64, Registry};
use crate::simulator::Frame;

pub const DEFAULT_K: f64 = 10.0;

/// Normal-consistency factor turning a MAD into a standard deviation.
const MAD_SCALE: f64 = 1.4826;

/// Flags frames to be discarded from a stack.
pub trait FrameFilter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Indices of discarded frames, ascending.
    fn flag(&self, frames: &[Frame]) -> Vec<usize>;
}

#[derive(Debug, Clone, Copy)]
pub struct KeepAll;

impl FrameFilter for KeepAll {
    fn name(&self) -> &'static str {
        "none"
    }

    fn flag(&self, _frames: &[Frame]) -> Vec<usize> {
        Vec::new()
    }
}

/// Discards a frame when any superpixel exceeds `median + k * scale`, with
/// median and scale taken per superpixel across the stack and
/// `scale = max(1.4826 * MAD, 1)` so that a dispersion-free pixel still
/// tolerates unit count jitter.
#[derive(Debug, Clone, Copy)]
pub struct MedianMadFilter {
    pub k: f64,
}

impl Default for MedianMadFilter {
    fn default() -> Self {
        Self { k: DEFAULT_K }
    }
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

impl MedianMadFilter {
    /// Per-superpixel rejection thresholds.
    pub fn thresholds(&self, frames: &[Frame]) -> Vec<f64> {
        let pixels = frames[0].counts.len();
        (0..pixels)
            .into_par_iter()
            .map(|p| {
                let mut column: Vec<f64> = frames.iter().map(|f| f.counts[p]).collect();
                let median = median_in_place(&mut column);
                column.iter_mut().for_each(|v| *v = (*v - median).abs());
                let mad = median_in_place(&mut column);
                median + self.k * (MAD_SCALE * mad).max(1.0)
            })
            .collect()
    }
}

impl FrameFilter for MedianMadFilter {
    fn name(&self) -> &'static str {
        "median-mad"
    }

    fn flag(&self, frames: &[Frame]) -> Vec<usize> {
        if frames.len() < 3 {
            return Vec::new();
        }
        let limits = self.thresholds(frames);
        frames
            .par_iter()
            .enumerate()
            .filter(|(_, f)| f.counts.iter().zip(&limits).any(|(v, t)| v > t))
            .map(|(k, _)| k)
            .collect()
    }
}

/// Built-in filters: `median-mad` (parameter `k`, default 10) and `none`.
pub fn frame_filters() -> &'static Registry<dyn FrameFilter> {
    static REGISTRY: OnceLock<Registry<dyn FrameFilter>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn FrameFilter> = Registry::new("frame filter");
        r.register("none", |_| Ok(Box::new(KeepAll)));
        r.register("median-mad", |p| {
            let k = param_f64(p, "k")?.unwrap_or(DEFAULT_K);
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("median-mad threshold k = {k} must be positive")));
            }
            Ok(Box::new(MedianMadFilter { k }))
        });
        r
    })
}

/// Splits a stack into kept frames and discarded indices using the default
/// median/MAD filter. Stacks of fewer than three frames are kept whole.
pub fn cosmic_ray_filter(frames: &[Frame]) -> (Vec<Frame>, Vec<usize>) {
    let discarded = MedianMadFilter::default().flag(frames);
    (retain_unflagged(frames, &discarded), discarded)
}

pub fn retain_unflagged(frames: &[Frame], discarded: &[usize]) -> Vec<Frame> {
    let mut skip = discarded.iter().peekable();
    frames
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            if skip.peek() == Some(&k) {
                skip.next();
                false
            } else {
                true
            }
        })
        .map(|(_, f)| f.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::StrategyRef;
    use crate::simulator::{inject_cosmic_ray, FrameKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn poisson_stack(n: usize, lambda: f64, seed: u64) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Poisson::new(lambda).unwrap();
        (0..n)
            .map(|_| {
                let mut f = Frame::zeros(4, 6, FrameKind::PdcOn);
                f.counts.iter_mut().for_each(|v| *v = d.sample(&mut rng));
                f
            })
            .collect()
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn identical_frames_kept() {
        let f = Frame::zeros(3, 4, FrameKind::PdcOn);
        let (kept, gone) = cosmic_ray_filter(&vec![f; 10]);
        assert_eq!(kept.len(), 10);
        assert!(gone.is_empty());
    }

    #[test]
    fn injected_spikes_removed() {
        let mut stack = poisson_stack(60, 200.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in [3, 17, 40] {
            stack[k] = inject_cosmic_ray(stack[k].clone(), &mut rng);
        }
        let (kept, gone) = cosmic_ray_filter(&stack);
        assert_eq!(gone, vec![3, 17, 40]);
        assert_eq!(kept.len(), 57);
    }

    #[test]
    fn short_stacks_untouched() {
        let mut stack = poisson_stack(2, 5.0, 3);
        stack[0].counts[0] = 1e9;
        assert!(cosmic_ray_filter(&stack).1.is_empty());
    }

    #[test]
    fn registry() {
        assert_eq!(frame_filters().build_named("none").unwrap().name(), "none");
        let f = frame_filters()
            .build(&StrategyRef::named("median-mad").with_param("k", 5.0))
            .unwrap();
        assert_eq!(f.name(), "median-mad");
        assert!(frame_filters()
            .build(&StrategyRef::named("median-mad").with_param("k", -1.0))
            .is_err());
    }
}
