//! Reduced-scale analytic-vs-Monte-Carlo checks, fast enough for CI.

use serde::Serialize;

use crate::error::Result;
use crate::estimation::series::{mean, variance};
use crate::estimation::{
    calibrate, cosmic_ray_filter, estimators, extract_sums, sigma_spatial_map, CalibrationSettings,
    RegionPairSeries, VarianceConvention,
};
use crate::model::{predict_covariance, predict_sigma_alpha, predict_variance, Region, Side};
use crate::scenarios;
use crate::simulator::{generate_stack, FrameKind, Simulator};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Standard errors of the sample mean, variance and covariance from the
/// fourth central moments.
pub fn moment_standard_errors(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let vx = variance(xs, VarianceConvention::Biased);
    let cxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
    let m4: f64 = xs.iter().map(|x| (x - mx).powi(4)).sum::<f64>() / n;
    let m22: f64 = xs.iter().zip(ys).map(|(x, y)| ((x - mx) * (y - my)).powi(2)).sum::<f64>() / n;
    ((vx / n).sqrt(), ((m4 - vx * vx) / n).sqrt(), ((m22 - cxy * cxy) / n).sqrt())
}

fn within(x: f64, target: f64, u: f64, k: f64) -> bool {
    (x - target).abs() <= k * u
}

fn balanced_identity() -> Result<Check> {
    let cfg = scenarios::moment_laws(0.6, 11);
    let frames = generate_stack(&cfg, 800, FrameKind::PdcOn)?;
    let signal = Region::new((0, 0), (5, 8), Side::Signal);
    let idler = signal.conjugate(&cfg.geometry, (0, 0))?;
    let (n_s, n_i) = extract_sums(&frames, &signal, &idler)?;
    let series = RegionPairSeries::new(n_s.clone(), n_i)?;
    let est = estimators().build_named("sigma-alpha")?.estimate(&series)?;
    let m_tot = cfg.modes.total_modes(40);
    let (se_m, se_v, _) = moment_standard_errors(&n_s, &n_s);
    let ok_sigma = within(est.value, 0.4, est.uncertainty, 3.0);
    let ok_mean = within(mean(&n_s), m_tot * 0.06, se_m, 3.0);
    let ok_var = within(variance(&n_s, VarianceConvention::Unbiased), predict_variance(0.1, 0.6, m_tot)?, se_v, 3.0);
    Ok(check(
        "balanced sigma_alpha = 1 - eta and single-arm moments",
        ok_sigma && ok_mean && ok_var,
        format!("sigma_alpha = {:.4} +- {:.4} (expect 0.4)", est.value, est.uncertainty),
    ))
}

fn covariance_law() -> Result<Check> {
    let cfg = scenarios::moment_laws(0.6, 12);
    let frames = generate_stack(&cfg, 800, FrameKind::PdcOn)?;
    let signal = Region::new((0, 0), (5, 8), Side::Signal);
    let idler = signal.conjugate(&cfg.geometry, (0, 0))?;
    let (n_s, n_i) = extract_sums(&frames, &signal, &idler)?;
    let (_, _, se_c) = moment_standard_errors(&n_s, &n_i);
    let cov = crate::estimation::series::covariance(&n_s, &n_i, VarianceConvention::Unbiased);
    let expect = predict_covariance(0.1, 0.6, 0.6, cfg.modes.total_modes(40))?;
    Ok(check(
        "signal-idler covariance law",
        within(cov, expect, se_c, 3.0),
        format!("cov = {cov:.1} +- {se_c:.1} (expect {expect:.1})"),
    ))
}

fn jitter_balancing() -> Result<Check> {
    let cfg = scenarios::jitter(0.613, 0.45, 13);
    let frames = generate_stack(&cfg, 600, FrameKind::PdcOn)?;
    let signal = scenarios::table1_signal_region();
    let idler = signal.conjugate(&cfg.geometry, (0, 0))?;
    let (n_s, n_i) = extract_sums(&frames, &signal, &idler)?;
    let series = RegionPairSeries::new(n_s, n_i)?;
    let raw = estimators().build_named("sigma")?.estimate(&series)?;
    let bal = estimators().build_named("sigma-alpha")?.estimate(&series)?;
    let expect = predict_sigma_alpha(0.613 / 0.45, 0.613)?;
    Ok(check(
        "a-posteriori balancing removes pump jitter",
        raw.value > 100.0 * bal.value && within(bal.value, expect, bal.uncertainty, 3.0),
        format!("raw sigma = {:.1}, sigma_alpha = {:.4} +- {:.4} (expect {expect:.4})", raw.value, bal.value, bal.uncertainty),
    ))
}

fn closed_loop() -> Result<Check> {
    let mut cfg = scenarios::table1_experiment(14);
    cfg.cosmic_ray_rate = 0.01;
    let sim = Simulator::new(cfg.clone())?;
    let pdc = sim.generate_stack(1000, FrameKind::PdcOn)?;
    let bg = sim.generate_stack(1000, FrameKind::Background)?;
    let injected = pdc.iter().chain(&bg).filter(|f| f.cosmic_rays > 0).count();
    let mut settings = CalibrationSettings::new(scenarios::table1_signal_region());
    settings.z = 4;
    let r = calibrate(&pdc, &bg, &cfg.geometry, &settings)?;
    Ok(check(
        "background-corrected closed loop recovers eta_s",
        within(r.eta_s, scenarios::TABLE1_ETA_S, r.u_eta_s, 3.0) && r.diagnostics.discarded() == injected,
        format!(
            "eta_s = {:.4} +- {:.4} (truth 0.613), discarded {} of {injected} cosmic-ray frames",
            r.eta_s,
            r.u_eta_s,
            r.diagnostics.discarded()
        ),
    ))
}

fn cs_search() -> Result<Check> {
    let cfg = scenarios::cs_search((2.0, -1.0), 15);
    let frames = generate_stack(&cfg, 20, FrameKind::PdcOn)?;
    let map = sigma_spatial_map(&frames, &scenarios::cs_search_region(), (5, 5), &cfg.geometry)?;
    let plateau = map.plateau.unwrap_or(f64::NAN);
    Ok(check(
        "centre-of-symmetry search finds the injected offset",
        map.argmin == (2, -1) && map.min < plateau / 2.0,
        format!("argmin {:?}, dip {:.3} vs plateau {plateau:.3}", map.argmin, map.min),
    ))
}

fn classical_bound() -> Result<Check> {
    // Same configuration with the idler rendered from an independent seed.
    let cfg = scenarios::moment_laws(0.6, 16);
    let mut other = cfg.clone();
    other.master_seed = 17;
    let a = generate_stack(&cfg, 1500, FrameKind::PdcOn)?;
    let b = generate_stack(&other, 1500, FrameKind::PdcOn)?;
    let signal = Region::new((0, 0), (5, 8), Side::Signal);
    let (n_s, _) = extract_sums(&a, &signal, &signal)?;
    let (n_i, _) = extract_sums(&b, &signal, &signal)?;
    let series = RegionPairSeries::new(n_s, n_i)?;
    let est = estimators().build_named("sigma-alpha")?.estimate(&series)?;
    // Uncorrelated thermal arms sit at 1 + E rather than 1.
    let expect = 1.0 + 0.6 * 0.1;
    Ok(check(
        "uncorrelated beams give no noise reduction",
        within(est.value, expect, est.uncertainty, 3.0),
        format!("sigma_alpha = {:.4} +- {:.4} (expect {expect:.2})", est.value, est.uncertainty),
    ))
}

fn determinism() -> Result<Check> {
    let cfg = scenarios::table1_experiment(18);
    let a = generate_stack(&cfg, 30, FrameKind::PdcOn)?;
    let b = generate_stack(&cfg, 30, FrameKind::PdcOn)?;
    let (kept, gone) = cosmic_ray_filter(&a);
    Ok(check(
        "identical configs give identical stacks",
        a == b && gone.is_empty() && kept.len() == 30,
        format!("{} frames compared", a.len()),
    ))
}

/// Runs every check; an error inside a check counts as a failure.
pub fn run() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<Check>); 7] = [
        ("balanced identity", balanced_identity),
        ("covariance law", covariance_law),
        ("jitter balancing", jitter_balancing),
        ("closed loop", closed_loop),
        ("cs search", cs_search),
        ("classical bound", classical_bound),
        ("determinism", determinism),
    ];
    checks
        .iter()
        .map(|(name, f)| f().unwrap_or_else(|e| check(name, false, format!("error: {e}"))))
        .collect()
}
