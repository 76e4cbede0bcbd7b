//! First-order (delta-method) Type A uncertainty of the balancing factor,
//! the noise reduction factor and the inverted efficiency.
//!
//! Every frame contributes an influence value: the linear response of the
//! statistic to that frame's pair of region sums. Frames are independent,
//! while the signal and idler sums of the same frame are not, so the
//! influence of a frame combines both of its sums. The squared standard
//! uncertainty is `sum(psi_k^2) / (N (N - 1))` over PDC frames plus the same
//! over background frames.

use super::series::{covariance, mean, RegionPairSeries, VarianceConvention};
use crate::error::{Error, Result};

/// How the balancing factor enters the noise reduction factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Balancing {
    /// Held fixed at the given value (e.g. `1` for the raw difference).
    Fixed(f64),
    /// Estimated from the same data as the ratio of background-corrected means.
    Estimated,
}

/// Point estimates with their propagated standard uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeA {
    pub alpha: f64,
    pub sigma: f64,
    /// `(1 + alpha) / 2 - sigma`.
    pub eta_s: f64,
    pub u_alpha: f64,
    pub u_sigma: f64,
    pub u_eta_s: f64,
    /// Covariance of the alpha and sigma estimates.
    pub cov_alpha_sigma: f64,
    pub n: usize,
    pub m: usize,
}

struct Influences {
    value_alpha: f64,
    value_sigma: f64,
    pdc: Vec<(f64, f64)>,
    bg: Vec<(f64, f64)>,
}

fn influences(series: &RegionPairSeries, balancing: Balancing, conv: VarianceConvention) -> Result<Influences> {
    let n = series.len();
    let s = &series.n_s;
    let i = &series.n_i;
    let s_bar = mean(s);
    let i_bar = mean(i);
    let (bs_bar, bi_bar) = match &series.background {
        Some(b) => (mean(&b.m_s), mean(&b.m_i)),
        None => (0.0, 0.0),
    };
    let p = s_bar - bs_bar;
    let q = i_bar - bi_bar;
    let (a, estimated) = match balancing {
        Balancing::Fixed(a) => (a, false),
        Balancing::Estimated => {
            if q == 0.0 {
                return Err(Error::DivisionByZero("idler mean (minus background) is zero"));
            }
            (p / q, true)
        }
    };

    let d: Vec<f64> = s.iter().zip(i).map(|(x, y)| x - a * y).collect();
    let d_bar = mean(&d);
    let v_n = d.iter().map(|x| (x - d_bar).powi(2)).sum::<f64>() / conv.divisor(n);
    let dvn_da = -2.0 * covariance(&d, i, conv);

    let (e, e_bar, v_m, dvm_da) = match &series.background {
        Some(b) => {
            let e: Vec<f64> = b.m_s.iter().zip(&b.m_i).map(|(x, y)| x - a * y).collect();
            let e_bar = mean(&e);
            let m = e.len();
            let v_m = e.iter().map(|x| (x - e_bar).powi(2)).sum::<f64>() / conv.divisor(m);
            let dvm_da = -2.0 * covariance(&e, &b.m_i, conv);
            (e, e_bar, v_m, dvm_da)
        }
        None => (Vec::new(), 0.0, 0.0, 0.0),
    };

    let den = p + a * q;
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("shot-noise normalisation {den} is not positive")));
    }
    let sigma = (v_n - v_m) / den;

    let pdc = (0..n)
        .map(|k| {
            let ds = s[k] - s_bar;
            let di = i[k] - i_bar;
            let psi_a = if estimated { (ds - a * di) / q } else { 0.0 };
            let infl_vn = (d[k] - d_bar).powi(2) - v_n + dvn_da * psi_a;
            let infl_vm = dvm_da * psi_a;
            let infl_den = ds + a * di + q * psi_a;
            let psi_sigma = (infl_vn - infl_vm) / den - sigma * infl_den / den;
            (psi_a, psi_sigma)
        })
        .collect();

    let bg = match &series.background {
        Some(b) => (0..e.len())
            .map(|p_idx| {
                let dbs = b.m_s[p_idx] - bs_bar;
                let dbi = b.m_i[p_idx] - bi_bar;
                let phi_a = if estimated { -(dbs - a * dbi) / q } else { 0.0 };
                let infl_vn = dvn_da * phi_a;
                let infl_vm = (e[p_idx] - e_bar).powi(2) - v_m + dvm_da * phi_a;
                let infl_den = -dbs - a * dbi + q * phi_a;
                let phi_sigma = (infl_vn - infl_vm) / den - sigma * infl_den / den;
                (phi_a, phi_sigma)
            })
            .collect(),
        None => Vec::new(),
    };

    Ok(Influences {
        value_alpha: a,
        value_sigma: sigma,
        pdc,
        bg,
    })
}

fn second_moments(values: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.len() < 2 {
        return (0.0, 0.0, 0.0);
    }
    let norm = n * (n - 1.0);
    let (mut aa, mut ss, mut as_) = (0.0, 0.0, 0.0);
    for (a, s) in values {
        aa += a * a;
        ss += s * s;
        as_ += a * s;
    }
    (aa / norm, ss / norm, as_ / norm)
}

/// Delta-method uncertainties of `alpha`, `sigma` and `eta_s` for any
/// balancing mode, with or without background.
pub fn propagate(series: &RegionPairSeries, balancing: Balancing, conv: VarianceConvention) -> Result<TypeA> {
    let inf = influences(series, balancing, conv)?;
    let (pa, ps, pas) = second_moments(&inf.pdc);
    let (ba, bs, bas) = second_moments(&inf.bg);
    let var_a = pa + ba;
    let var_s = ps + bs;
    let cov = pas + bas;
    let var_eta = (0.25 * var_a + var_s - cov).max(0.0);
    if !(var_s.is_finite() && var_a.is_finite()) {
        return Err(Error::Degenerate("non-finite propagated covariance".into()));
    }
    Ok(TypeA {
        alpha: inf.value_alpha,
        sigma: inf.value_sigma,
        eta_s: 0.5 * (1.0 + inf.value_alpha) - inf.value_sigma,
        u_alpha: var_a.sqrt(),
        u_sigma: var_s.sqrt(),
        u_eta_s: var_eta.sqrt(),
        cov_alpha_sigma: cov,
        n: series.len(),
        m: series.background_len(),
    })
}

/// Type A uncertainties of `alpha_B`, `sigma_alpha,B` and `eta_s` from the
/// `2N + 2M` region sums, with `u(eta_s)^2 = u(alpha_B)^2 / 4 + u(sigma)^2 - cov`.
pub fn propagate_type_a(series: &RegionPairSeries) -> Result<TypeA> {
    match &series.background {
        Some(b) if b.m_s.len() >= 2 => propagate(series, Balancing::Estimated, VarianceConvention::Unbiased),
        _ => Err(Error::Degenerate("background series with at least two frames is required".into())),
    }
}
