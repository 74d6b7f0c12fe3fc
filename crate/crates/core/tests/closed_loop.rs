use realgap::ads::AdsChoice;
use realgap::experiments::gap_preset;
use realgap::metrics::evaluate_run;
use realgap::mixing::Modality;
use realgap::plant::GapProfile;
use realgap::runtime::{run_closed_loop, RunConfig, RunLog};
use realgap::world::build_scenario;

#[test]
fn saved_log_loads_back_identically() {
    let sc = build_scenario("N2").unwrap();
    let config = RunConfig::default();
    let gap = gap_preset("perception_dominant", &config.twin, &config.rates).unwrap();
    let log = run_closed_loop(&sc, Modality::MR, &AdsChoice::modular(), &gap, 3, 6.0, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    log.save(dir.path()).unwrap();
    let back = RunLog::load(dir.path()).unwrap();
    assert_eq!(back.body_bytes(), log.body_bytes());
    assert_eq!(back.outcome, log.outcome);
    assert_eq!(back.header.seed, 3);
}

#[test]
fn rerun_from_header_reproduces_the_log() {
    let sc = build_scenario("N1").unwrap();
    let config = RunConfig::default();
    let log = run_closed_loop(&sc, Modality::VIL, &AdsChoice::E2e, &GapProfile::zero(), 11, 5.0, &config).unwrap();
    let h = &log.header;
    let again = run_closed_loop(&sc, h.modality, &h.ads, &h.gap, h.seed, h.max_duration, &config).unwrap();
    assert_eq!(again.body_bytes(), log.body_bytes());
}

#[test]
fn run_against_itself_scores_zero_distance() {
    let sc = build_scenario("G").unwrap();
    let log = run_closed_loop(&sc, Modality::SIL, &AdsChoice::modular(), &GapProfile::zero(), 0, 5.0, &RunConfig::default()).unwrap();
    let m = evaluate_run(&log, &log, &sc).unwrap();
    assert_eq!(m.frechet_to_reference, 0.0);
    assert_eq!(m.completion_delta_vs_reference, 0.0);
}
