//! Split-step link behaviour on a shortened desk configuration.

use nlilab::alphabet::{draw_iid_stream, AmplitudeAlphabet};
use nlilab::experiment::{calibrate_link, ModulationKind, ModulationSpec};
use nlilab::ssfm::{best_launch, run_experiment, Link, LinkConfig, RunMode};
use nlilab::windowed::windowed_moments;

fn short_desk() -> LinkConfig {
    LinkConfig { symbols: 1 << 13, ..LinkConfig::desk() }
}

#[test]
fn step_halving_moves_nli_less_than_a_tenth_db() {
    let cfg = short_desk();
    let link = Link::new(cfg.clone()).unwrap();
    let tx = vec![draw_iid_stream(&AmplitudeAlphabet::qam(4).unwrap(), cfg.symbols, 1).unwrap()];
    let db = link.step_convergence_db(&tx, cfg.channel_power(-2.0)).unwrap();
    assert!(db.abs() < 0.1, "{db}");
}

#[test]
fn receiver_preserves_windowed_moments() {
    let cfg = LinkConfig { noise_figure_db: f64::NEG_INFINITY, ..short_desk() };
    let link = Link::new(cfg.clone()).unwrap();
    let spec = ModulationSpec::shaped(ModulationKind::Ess1d, 5, 1.6);
    let tx = spec.source().unwrap().stream(cfg.symbols, 2).unwrap();
    let rx = link
        .simulate(std::slice::from_ref(&tx), 1e-3, 0, RunMode::LINEAR, &[true], 0)
        .unwrap();
    for w in [1, 4, 16] {
        let (a, b) = (windowed_moments(&tx, w).unwrap(), windowed_moments(&rx.recovered, w).unwrap());
        assert!((a.mu4 - b.mu4).abs() <= 3.0 * a.se_mu4 + 1e-9, "w={w}: {} vs {}", a.mu4, b.mu4);
    }
}

#[test]
fn runs_are_bit_identical_per_seed() {
    let cfg = LinkConfig { launch_dbm: vec![-3.0], symbols: 1 << 11, ..LinkConfig::desk() };
    let src = ModulationSpec::new(ModulationKind::IidQam).source().unwrap();
    let go = || run_experiment(&cfg, |s| src.channel_streams(1, cfg.symbols, s), &[5, 6]).unwrap();
    let (a, b) = (go(), go());
    assert_eq!(a, b);
    assert_ne!(a[0].snr_eff, a[1].snr_eff);
}

#[test]
fn short_blocks_and_4d_shaping_win_at_low_dispersion() {
    let cfg = short_desk();
    let best = |spec: ModulationSpec| {
        let src = spec.source().unwrap();
        let runs = run_experiment(&cfg, |s| src.channel_streams(1, cfg.symbols, s), &[3]).unwrap();
        best_launch(&runs).unwrap().1
    };
    let n5 = best(ModulationSpec::shaped(ModulationKind::Ess1d, 5, 1.6));
    let n40 = best(ModulationSpec::shaped(ModulationKind::Ess1d, 40, 1.6));
    let four = best(ModulationSpec::shaped(ModulationKind::Ess4d, 5, 1.6));
    assert!(n5 > n40, "{n5} vs {n40}");
    assert!(four > n5, "{four} vs {n5}");
}

#[test]
fn calibration_repeats_across_seeds() {
    let cfg = LinkConfig { symbols: 1 << 12, ..LinkConfig::desk() };
    let dbm = [-4.0, -2.0, 0.0];
    let a = calibrate_link(&cfg, &dbm, &[1, 2, 3, 4, 5]).unwrap().spm;
    let b = calibrate_link(&cfg, &dbm, &[6, 7, 8, 9, 10]).unwrap().spm;
    assert!(a.kappa2 / a.kappa3 > 5.0, "{} / {}", a.kappa2, a.kappa3);
    // coefficients agree within the spread implied by the per-format
    // standard errors
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs());
    let se = a.eta_rel_se.iter().chain(&b.eta_rel_se).fold(0.0f64, |m, v| m.max(*v));
    assert!(rel(a.kappa1, b.kappa1) < 10.0 * se.max(0.005), "{a:?} {b:?}");
    assert!(rel(a.kappa2, b.kappa2) < 20.0 * se.max(0.005), "{a:?} {b:?}");
    assert_eq!(a.fingerprint, cfg.fingerprint());
}
