//! The reference packet passing through the reference design.

use std::path::PathBuf;
use std::sync::OnceLock;

use backflow_core::capscatter::*;
use backflow_core::wavepacket::{Packet, PacketParams};

// mean dwell time of the reference absorber
const REFERENCE_DWELL: f64 = 1.0515e-5;
const ZERO_START: f64 = 3.980_523_956_439_068_672_4e-4;
const ZERO_END: f64 = 4.037_620_037_309_277_586_7e-4;

fn design() -> LayeredPotential {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/design_seed1.txt");
    LayeredPotential::read(&path).unwrap()
}

fn reference() -> Packet {
    Packet::atomic(PacketParams::reference()).unwrap()
}

fn reference_history() -> &'static (DwellTime, TotalAbsorption) {
    static H: OnceLock<(DwellTime, TotalAbsorption)> = OnceLock::new();
    H.get_or_init(|| history(&design(), &reference(), HISTORY_WINDOW).unwrap())
}

fn window_evolution() -> &'static CapEvolution {
    static E: OnceLock<CapEvolution> = OnceLock::new();
    E.get_or_init(|| {
        CapEvolution::converged(&design(), &reference(), &Window::new((0.0, 0.0), (0.0, 1.6e-3)), 1e-10).unwrap()
    })
}

#[test]
fn absorber_flux_tracks_free_flux() {
    let evo = window_evolution();
    let probe = evo.detector();
    let p = reference();
    let (mut worst, mut peak) = (0.0f64, 0.0f64);
    for k in 0..=400 {
        let t = 1.6e-3 * k as f64 / 400.0;
        let jf = p.flux(0.0, t).unwrap();
        let jc = evo.sample(&probe, t).unwrap().flux_origin;
        worst = worst.max((jf - jc).abs());
        peak = peak.max(jf);
    }
    assert!(worst <= 1e-3 * peak, "{worst} vs {peak}");
}

#[test]
fn absorber_flux_follows_backflow() {
    let evo = window_evolution();
    for k in 1..10 {
        let t = ZERO_START + (ZERO_END - ZERO_START) * k as f64 / 10.0;
        assert!(evo.flux(0.0, t).unwrap() < 0.0, "t = {t}");
    }
}

#[test]
fn time_and_momentum_absorption_agree() {
    let (_, total) = reference_history();
    assert!(total.momentum_domain >= 0.999);
    assert!((total.time_domain - total.momentum_domain).abs() < 1e-6, "{:e}", total.time_domain - total.momentum_domain);
    // 99.97 % for the reference absorber
    assert!((total.momentum_domain - 0.9997).abs() < 5e-4);
}

#[test]
fn dwell_time_near_reference_value() {
    let (dwell, _) = reference_history();
    let rel = dwell.value / REFERENCE_DWELL - 1.0;
    assert!(rel.abs() < 0.15, "{}", dwell.value);
    assert!(dwell.tail < 1e-3 * dwell.value);
}

#[test]
fn mean_arrival_delay_equals_dwell_time() {
    let (dwell, _) = reference_history();
    let ti = dwell.integrals;
    let absorbed = ti.absorbed_moment / ti.absorbed;
    let arrived = ti.flux_origin_moment / ti.flux_origin;
    let free = ti.free_flux_moment / ti.free_flux;
    let delay = absorbed - arrived;
    assert!((delay / dwell.value - 1.0).abs() < 0.01, "{delay:e} vs {:e}", dwell.value);
    assert!(((absorbed - free) / dwell.value - 1.0).abs() < 0.01);
}

#[test]
fn absorption_rate_methods_agree() {
    let pot = design();
    let p = reference();
    let peak = window_evolution().detector().state(&window_evolution().phases(5.9e-4)).rate;
    for t in [2e-4, 5.9e-4, 9e-4] {
        let r = absorption_rate(&pot, &p, t).unwrap();
        r.check(peak, 1e-6).unwrap();
        assert!(r.volume >= 0.0);
    }
}

#[test]
fn absorber_emits_while_norm_falls() {
    let pot = design();
    let p = reference();
    for k in 1..3 {
        let t = ZERO_START + (ZERO_END - ZERO_START) * k as f64 / 3.0;
        let r = absorption_rate(&pot, &p, t).unwrap();
        // the left half space gains probability from the absorber...
        assert!(r.left_rate > 0.0, "t = {t}");
        assert!((r.left_rate + r.flux_origin).abs() < 1e-6 * r.left_rate.abs().max(1.0));
        // ...while the total only ever falls
        assert!(r.finite_difference > 0.0 && r.volume > 0.0);
    }
    let evo = window_evolution();
    let probe = evo.detector();
    for k in 0..=400 {
        let t = 1.6e-3 * k as f64 / 400.0;
        assert!(evo.sample(&probe, t).unwrap().detector.rate >= 0.0);
    }
}

#[test]
fn norm_loss_matches_integrated_rate() {
    let pot = design();
    let p = reference();
    let (a, b) = (3e-4, 7e-4);
    let na = norms(&pot, &p, a).unwrap();
    let nb = norms(&pot, &p, b).unwrap();
    let evo = window_evolution();
    let probe = evo.detector();
    let absorbed = backflow_core::quadrature::adaptive_scalar(
        |t| evo.sample(&probe, t).unwrap().detector.rate,
        a,
        b,
        &[5.8e-4],
        backflow_core::quadrature::Tolerance::new(1e-12, 1e-10),
    )
    .unwrap();
    assert!(nb.total < na.total);
    assert!((na.total - nb.total - absorbed).abs() < 1e-8, "{:e}", na.total - nb.total - absorbed);
    assert!((nb.left + nb.right - nb.total).abs() < 1e-15);
}

#[test]
fn zero_potential_reproduces_free_packet() {
    let pot = LayeredPotential::free(0.01, 4);
    let p = reference();
    let evo = CapEvolution::converged(&pot, &p, &Window::new((-0.5, 0.01), (3e-4, 1.2e-3)), 1e-11).unwrap();
    for t in [3e-4, 7e-4, 1.2e-3] {
        for k in 0..=102 {
            let x = -0.5 + 0.51 * k as f64 / 102.0;
            let d = (evo.amplitude(x, t).unwrap() - p.amplitude(x, t).unwrap()).norm();
            assert!(d < 1e-9, "x = {x}, t = {t}: {d:e}");
        }
    }
}
