use twinbeam::estimation::series::{mean, variance};
use twinbeam::estimation::{
    calibrate, cosmic_ray_filter, estimate_alpha, estimate_alpha_b, extract_series, extract_sums,
    CalibrationSettings, MedianMadFilter, RegionPairSeries, VarianceConvention,
};
use twinbeam::model::{BackgroundModel, ChannelEfficiencies, Region, Side};
use twinbeam::scenarios;
use twinbeam::simulator::{generate_stack, inject_cosmic_ray, FrameKind, Simulator};

const U: VarianceConvention = VarianceConvention::Unbiased;

fn z_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let zm = (mean(a) - mean(b)) / (variance(a, U) / na + variance(b, U) / nb).sqrt();
    // Log-variance comparison, near-normal for large samples.
    let zv = (variance(a, U).ln() - variance(b, U).ln()) / (2.0 / (na - 1.0) + 2.0 / (nb - 1.0)).sqrt();
    (zm, zv)
}

#[test]
fn swapping_channels_mirrors_the_statistics() {
    let mut a = scenarios::moment_laws(0.6, 1);
    a.channel = ChannelEfficiencies::new(0.7, 0.5).unwrap();
    let mut b = a.clone();
    b.channel = a.channel.swapped();
    b.master_seed = 2;
    let signal = Region::new((0, 0), (5, 8), Side::Signal);
    let idler = signal.conjugate(&a.geometry, (0, 0)).unwrap();
    let sa = generate_stack(&a, 3000, FrameKind::PdcOn).unwrap();
    let sb = generate_stack(&b, 3000, FrameKind::PdcOn).unwrap();
    let (as_, ai) = extract_sums(&sa, &signal, &idler).unwrap();
    let (bs, bi) = extract_sums(&sb, &signal, &idler).unwrap();
    for (x, y) in [(&as_, &bi), (&ai, &bs)] {
        let (zm, zv) = z_two_sample(x, y);
        assert!(zm.abs() < 2.576 && zv.abs() < 2.576, "zm {zm}, zv {zv}");
    }
}

#[test]
fn balanced_alpha_is_one() {
    let cfg = scenarios::moment_laws(0.6, 3);
    let frames = generate_stack(&cfg, 4000, FrameKind::PdcOn).unwrap();
    let signal = Region::new((0, 0), (5, 8), Side::Signal);
    let idler = signal.conjugate(&cfg.geometry, (0, 0)).unwrap();
    let (n_s, n_i) = extract_sums(&frames, &signal, &idler).unwrap();
    let s = RegionPairSeries::new(n_s, n_i).unwrap();
    let blocks: Vec<f64> = s.partition(20).unwrap().iter().map(|b| estimate_alpha(b).unwrap()).collect();
    let se = variance(&blocks, U).sqrt() / 20f64.sqrt();
    assert!((estimate_alpha(&s).unwrap() - 1.0).abs() < 3.0 * se);
}

#[test]
fn alpha_b_recovers_the_efficiency_ratio_under_straylight() {
    let mut cfg = scenarios::moment_laws(0.6, 4);
    cfg.channel = ChannelEfficiencies::new(0.6, 0.57).unwrap();
    // 5% of the PDC level per superpixel.
    cfg.background = BackgroundModel {
        straylight_mean: 0.05 * 5000.0 * 0.1 * 0.6,
        ..BackgroundModel::none()
    };
    let sim = Simulator::new(cfg.clone()).unwrap();
    let pdc = sim.generate_stack(3000, FrameKind::PdcOn).unwrap();
    let bg = sim.generate_stack(3000, FrameKind::Background).unwrap();
    let signal = Region::new((0, 0), (5, 8), Side::Signal);
    let idler = signal.conjugate(&cfg.geometry, (0, 0)).unwrap();
    let s = extract_series(&pdc, Some(&bg), &signal, &idler).unwrap();
    let u = twinbeam::estimation::propagate_type_a(&s).unwrap();
    let a = estimate_alpha_b(&s).unwrap();
    assert!((a - 0.6 / 0.57).abs() < 3.0 * u.u_alpha, "{a} +- {}", u.u_alpha);
}

#[test]
fn background_correction_is_unbiased() {
    let with_bg = scenarios::table1_experiment(5);
    let mut without = with_bg.clone();
    without.background = BackgroundModel::none();
    let mut settings = CalibrationSettings::new(scenarios::table1_signal_region());
    settings.z = 4;
    let run = |cfg: &twinbeam::simulator::ExperimentConfig| {
        let sim = Simulator::new(cfg.clone()).unwrap();
        let pdc = sim.generate_stack(2000, FrameKind::PdcOn).unwrap();
        let bg = sim.generate_stack(2000, FrameKind::Background).unwrap();
        calibrate(&pdc, &bg, &cfg.geometry, &settings).unwrap()
    };
    let (a, b) = (run(&with_bg), run(&without));
    // Same PDC photons in both runs, so only the background noise separates them.
    let u = (a.u_eta_s.powi(2) - b.u_eta_s.powi(2)).abs().sqrt();
    assert!((a.eta_s - b.eta_s).abs() < 3.0 * u, "{} vs {} (u {u})", a.eta_s, b.eta_s);
}

#[test]
fn clean_stacks_rarely_lose_frames() {
    let cfg = scenarios::table1_experiment(6);
    let sim = Simulator::new(cfg.clone()).unwrap();
    let frames = sim.generate_stack(20_000, FrameKind::PdcOn).unwrap();
    let clean = frames.chunks(20).filter(|stack| cosmic_ray_filter(stack).1.is_empty()).count();
    assert!(clean >= 990, "{clean} of 1000 stacks untouched");
}

#[test]
fn spikes_always_exceed_the_threshold() {
    use rand::SeedableRng;
    for (kind, seed) in [(FrameKind::PdcOn, 7), (FrameKind::Background, 8)] {
        let cfg = scenarios::table1_experiment(seed);
        let frames = generate_stack(&cfg, 1000, kind).unwrap();
        let limits = MedianMadFilter::default().thresholds(&frames);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for f in &frames {
            let hit = inject_cosmic_ray(f.clone(), &mut rng);
            let p = hit.counts.iter().zip(&f.counts).position(|(a, b)| a != b).unwrap();
            assert!(hit.counts[p] > limits[p]);
            assert!(hit.counts[p] >= 20.0 * f.median());
        }
    }
}

#[test]
fn pdc_part_does_not_depend_on_background() {
    let a = scenarios::table1_experiment(9);
    let mut b = a.clone();
    b.background = BackgroundModel::none();
    let fa = generate_stack(&a, 5, FrameKind::PdcOn).unwrap();
    let fb = generate_stack(&b, 5, FrameKind::PdcOn).unwrap();
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.pulse_energy, y.pulse_energy);
        assert!(x.counts.iter().zip(&y.counts).all(|(p, q)| p >= q));
    }
}
