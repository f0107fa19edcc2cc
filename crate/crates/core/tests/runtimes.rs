use fogline::apps::{AppTag, reference_result, sample_input};
use fogline::bench::{self, ExperimentPlan, LayoutKind};
use fogline::runtime::{Mode, Pattern, SimConfig, SimRuntime, SocketRuntime, TopologySpec};
use fogline::simnet::{LatencyMatrix, Layout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn socket_and_sim_agree_on_results() {
    for pattern in [Pattern::HostNetwork, Pattern::ProxyServer] {
        let spec = || TopologySpec::new(Mode::Native, Layout::hybrid()).with_pattern(pattern);
        let sockets = SocketRuntime::boot(spec(), 3).unwrap();
        let mut sim = SimRuntime::boot(spec(), SimConfig::new(3, LatencyMatrix::default())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for app in AppTag::ALL {
            for _ in 0..4 {
                let input = sample_input(app, &mut rng);
                let real = sockets.submit(app.as_str(), input.clone(), 10_000.0).unwrap().output;
                let simulated = sim.submit(app.as_str(), input.clone(), 10_000.0).unwrap().output;
                assert_eq!(real, simulated, "{app} {pattern:?}");
                assert_eq!(real.unwrap(), reference_result(app, &input).unwrap());
            }
        }
        assert!(sockets.errors().is_empty(), "{:?}", sockets.errors());
    }
}

#[test]
fn fast_probing_shows_up_as_overhead() {
    let plan = |mode| {
        let mut p = ExperimentPlan::new(AppTag::Formula, mode, LayoutKind::Hybrid, 5).with_samples(bench::MIN_SAMPLES);
        p.probe_period_ms = 1.0;
        p
    };
    let orch = bench::run_experiment(&plan(Mode::Orchestrated)).unwrap().summary;
    let native = bench::run_experiment(&plan(Mode::Native)).unwrap().summary;
    let overhead = bench::compare(&orch, &native).unwrap();
    assert!(overhead > 0.0, "{overhead}");
}

#[test]
fn different_seeds_give_different_samples() {
    let raw = |seed| {
        let plan = ExperimentPlan::new(AppTag::FD240, Mode::Native, LayoutKind::Cloud, seed).with_samples(bench::MIN_SAMPLES);
        bench::raw_csv(&bench::run_experiment(&plan).unwrap().samples).unwrap()
    };
    assert_eq!(raw(1), raw(1));
    assert_ne!(raw(1), raw(2));
}
