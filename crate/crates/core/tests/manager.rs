mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{mixed_fleet, quick_config, vector_fleet};
use orca_core::manager::{load_state, save_state, Engine, ManagerError};
use orca_core::{BehaviorLevel, DeviceId};

fn trained(cfg: orca_core::OrcaConfig) -> Engine {
    let mut e = Engine::new(cfg, None).unwrap();
    e.train_all().unwrap();
    e
}

#[test]
fn one_vector_level_scores_every_device_each_tick() {
    let mut e = trained(quick_config(vector_fleet(40), 3));
    for r in e.run(3).unwrap() {
        assert_eq!(r.samples_scored, 120);
        assert_eq!(r.rejected, 0);
        assert_eq!(r.allocations.len(), 3);
        assert!(r.phase_times.observe > std::time::Duration::ZERO);
    }
}

#[test]
fn sequences_scored_only_on_cadence_ticks() {
    let mut e = trained(quick_config(mixed_fleet(5), 4));
    let per_tick: Vec<usize> = e.run(32).unwrap().iter().map(|r| r.samples_scored).collect();
    // 15 vectors every tick, plus 10 sequences on multiples of 30
    assert_eq!(per_tick[0], 25);
    assert_eq!(per_tick[29], 15);
    assert_eq!(per_tick[30], 25);
    assert_eq!(per_tick[31], 15);
    let out = e.last_outputs().unwrap();
    assert!(out.records.iter().all(|r| r.level == BehaviorLevel::B1));
}

#[test]
fn untrained_registry_is_an_error() {
    let mut e = Engine::new(quick_config(vector_fleet(2), 1), None).unwrap();
    let err = e.run_cycle(0).unwrap_err();
    assert!(matches!(err, ManagerError::UntrainedModel { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn fresh_fleet_flags_only_devices_that_alarmed() {
    let mut e = trained(quick_config(vector_fleet(40), 11));
    let window = e.config.synth.window;
    let (mut scored, mut alarms) = (0, 0);
    let mut last_alarm: BTreeMap<DeviceId, u64> = BTreeMap::new();
    for _ in 0..60 {
        let r = e.run(1).unwrap().remove(0);
        scored += r.samples_scored;
        alarms += r.alarms;
        let out = e.last_outputs().unwrap();
        for rec in out.records.iter().filter(|x| x.score.alarming) {
            last_alarm.insert(rec.device_id.clone(), rec.tick);
        }
        // Forecasts on a flat score history only turn upward after a real alarm.
        for item in &out.maintenance.items {
            let seen = last_alarm.get(&item.device_id).is_some_and(|&t| r.tick - t < window);
            assert!(seen, "{} listed at tick {} without a recent alarm", item.device_id, r.tick);
        }
    }
    assert!(alarms as f64 <= 0.10 * scored as f64, "{alarms} alarms in {scored}");
}

#[test]
fn runs_are_deterministic_and_logged() {
    let run = |dir: &std::path::Path| {
        let mut e = trained(quick_config(mixed_fleet(4), 5));
        e.set_log_dir(dir);
        e.run(31).unwrap().iter().map(|r| r.summary()).collect::<Vec<_>>()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path()), run(b.path()));
    for log in ["scores.log", "allocation.log", "cycles.log", "insights.log"] {
        let x = fs::read(a.path().join(log)).unwrap();
        assert!(!x.is_empty(), "{log} is empty");
        assert_eq!(x, fs::read(b.path().join(log)).unwrap(), "{log} differs");
    }
    let scores = fs::read_to_string(a.path().join("scores.log")).unwrap();
    assert_eq!(scores.lines().count(), 31 * 12 + 2 * 8);
    assert_eq!(scores.lines().next().unwrap().split(',').count(), 6);
}

#[test]
fn seed_override_changes_the_fleet() {
    let cfg = quick_config(vector_fleet(3), 5);
    let a = Engine::new(cfg.clone(), None).unwrap();
    let b = Engine::new(cfg, Some(6)).unwrap();
    assert_eq!(a.seed, 5);
    assert_eq!(b.seed, 6);
    assert_ne!(a.fleet.emit(0, 0, 0, false), b.fleet.emit(0, 0, 0, false));
}

#[test]
fn save_load_resumes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = trained(quick_config(mixed_fleet(4), 8));
    e.set_log_dir(dir.path());
    e.run(35).unwrap();
    save_state(&e, dir.path()).unwrap();
    let mut back = load_state(dir.path()).unwrap();
    assert_eq!(back.ol_states, e.ol_states);
    assert_eq!(back.policy, e.policy);
    // continuing both must give the same reports and scores
    let (x, y) = (e.run(30).unwrap(), back.run(30).unwrap());
    assert_eq!(x.iter().map(|r| r.summary()).collect::<Vec<_>>(), y.iter().map(|r| r.summary()).collect::<Vec<_>>());
    assert_eq!(e.last_outputs().unwrap().records, back.last_outputs().unwrap().records);
    assert_eq!(e.policy, back.policy);
}

#[test]
fn damaged_state_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let e = trained(quick_config(vector_fleet(2), 9));
    save_state(&e, dir.path()).unwrap();

    let model = dir.path().join("models").join("thermo__B1.orca");
    let bytes = fs::read(&model).unwrap();
    fs::write(&model, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_state(dir.path()).map(|_| ()).unwrap_err();
    assert!(matches!(err, ManagerError::Model(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    fs::write(&model, &bytes).unwrap();
    assert!(load_state(dir.path()).is_ok());

    let engine_json = dir.path().join("engine.json");
    let text = fs::read_to_string(&engine_json).unwrap();
    fs::write(&engine_json, text.replacen("\"format_version\":1", "\"format_version\":2", 1)).unwrap();
    let err = load_state(dir.path()).map(|_| ()).unwrap_err();
    assert!(matches!(err, ManagerError::StateVersion { found: 2, expected: 1 }), "{err}");
}
