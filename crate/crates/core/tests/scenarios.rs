mod support;

use careflow_core::connector::{PlugMode, INTERFACE6_ONTOLOGY};
use careflow_core::scenario::{Stimulus, EXIT_FAULT, EXIT_GOLDEN_MISMATCH, EXIT_OK};
use careflow_core::system::data_dir;
use careflow_core::wfms::InstanceStatus;
use tempfile::tempdir;

use support::{demo_scenario, final_histories, run_in};

fn interface6_messages(outcome: &careflow_core::scenario::RunOutcome) -> usize {
    outcome.trace.messages().filter(|m| m.ontology == INTERFACE6_ONTOLOGY).count()
}

#[test]
fn accident_care_runs_without_faults() {
    let dir = tempdir().unwrap();
    let outcome = run_in(dir.path(), &demo_scenario("accident-care"), |_| {});
    assert_eq!(outcome.faults, Vec::<String>::new());
    assert_eq!(outcome.exit_code, EXIT_OK);
    let statuses: Vec<_> = outcome.report.instances.values().map(|i| i.status).collect();
    assert_eq!(statuses, [InstanceStatus::Completed; 3]);
    assert!(outcome.trace_path.as_ref().unwrap().exists());
    assert!(outcome.report_path.as_ref().unwrap().exists());
    outcome.trace.check_invariants().unwrap();
}

#[test]
fn same_seed_gives_identical_traces() {
    let scenario = demo_scenario("accident-care");
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let first = run_in(a.path(), &scenario, |_| {});
    let second = run_in(b.path(), &scenario, |_| {});
    assert_eq!(first.trace_ndjson(), second.trace_ndjson());
    let on_disk = |o: &careflow_core::scenario::RunOutcome| std::fs::read(o.trace_path.as_ref().unwrap()).unwrap();
    assert_eq!(on_disk(&first), on_disk(&second));
}

#[test]
fn seed_changes_interleaving_but_not_histories() {
    let scenario = demo_scenario("accident-care");
    let dir = tempdir().unwrap();
    let base = run_in(dir.path(), &scenario, |_| {});
    let mut interleavings = std::collections::BTreeSet::new();
    interleavings.insert(base.trace_ndjson());
    for seed in [1, 7, 99, 2024, 31337] {
        let other = run_in(dir.path(), &scenario, |o| o.seed = Some(seed));
        assert_eq!(other.exit_code, EXIT_OK, "seed {seed}: {:?}", other.faults);
        assert_eq!(final_histories(&other), final_histories(&base), "seed {seed}");
        assert_eq!(other.report.archive, base.report.archive, "seed {seed}");
        interleavings.insert(other.trace_ndjson());
    }
    assert!(interleavings.len() > 1, "the seed never changed the delivery order");
}

#[test]
fn eager_and_lazy_plugging_agree_on_histories() {
    let scenario = demo_scenario("accident-care");
    let dir = tempdir().unwrap();
    let lazy = run_in(dir.path(), &scenario, |o| o.mode = Some(PlugMode::Lazy));
    let eager = run_in(dir.path(), &scenario, |o| o.mode = Some(PlugMode::Eager));
    assert_eq!(lazy.exit_code, EXIT_OK);
    assert_eq!(eager.exit_code, EXIT_OK);
    assert_eq!(final_histories(&lazy), final_histories(&eager));
    // Eager plugs at start-up, before any workflow needs the analyzer.
    let first_i6 = |o: &careflow_core::scenario::RunOutcome| {
        o.trace.messages().position(|m| m.ontology == INTERFACE6_ONTOLOGY).unwrap()
    };
    assert!(first_i6(&eager) < first_i6(&lazy));
}

#[test]
fn workflow_without_prescribing_never_plugs() {
    let dir = tempdir().unwrap();
    let outcome = run_in(dir.path(), &demo_scenario("bed-transfer"), |_| {});
    assert_eq!(outcome.exit_code, EXIT_OK, "{:?}", outcome.faults);
    assert_eq!(interface6_messages(&outcome), 0);
    assert!(outcome.trace.messages().count() > 0);
}

#[test]
fn resume_from_snapshot_matches_uninterrupted_run() {
    let scenario = demo_scenario("accident-care");
    let (full_dir, cut_dir, resumed_dir) = (tempdir().unwrap(), tempdir().unwrap(), tempdir().unwrap());
    let full = run_in(full_dir.path(), &scenario, |_| {});

    let cut = run_in(cut_dir.path(), &scenario, |o| o.stop_at_snapshot = true);
    assert_eq!(cut.exit_code, EXIT_OK);
    let snapshot = cut.snapshot_path.clone().expect("snapshot written");
    assert!(snapshot.exists());
    assert_ne!(final_histories(&cut), final_histories(&full));

    let resumed = run_in(resumed_dir.path(), &scenario, |o| o.resume = Some(snapshot));
    assert_eq!(resumed.exit_code, EXIT_OK, "{:?}", resumed.faults);
    assert_eq!(final_histories(&resumed), final_histories(&full));
    assert_eq!(resumed.report.archive, full.report.archive);
}

#[test]
fn in_process_restore_matches_uninterrupted_run() {
    let mut scenario = demo_scenario("accident-care");
    let dir = tempdir().unwrap();
    let full = run_in(dir.path(), &scenario, |_| {});
    let at = scenario.scenario.stimuli.iter().position(|s| matches!(s, Stimulus::Snapshot)).unwrap();
    scenario.scenario.stimuli.insert(at + 1, Stimulus::Restore);
    let restored = run_in(dir.path(), &scenario, |_| {});
    assert_eq!(restored.exit_code, EXIT_OK, "{:?}", restored.faults);
    assert_eq!(final_histories(&restored), final_histories(&full));
    assert_eq!(restored.report.archive, full.report.archive);
}

#[test]
fn golden_trace_is_reproduced() {
    let golden = data_dir().join("scenarios").join("accident-care.golden.ndjson");
    let dir = tempdir().unwrap();
    let outcome = run_in(dir.path(), &demo_scenario("accident-care"), |o| o.golden = Some(golden.clone()));
    assert_eq!(outcome.divergence, None);
    assert_eq!(outcome.exit_code, EXIT_OK);

    let mut tampered: Vec<String> = std::fs::read_to_string(&golden).unwrap().lines().map(str::to_owned).collect();
    tampered[3] = tampered[3].replace("\"seq_no\":3", "\"seq_no\": 3");
    let tampered_path = dir.path().join("tampered.ndjson");
    std::fs::write(&tampered_path, tampered.join("\n") + "\n").unwrap();
    let outcome = run_in(dir.path(), &demo_scenario("accident-care"), |o| o.golden = Some(tampered_path));
    assert_eq!(outcome.exit_code, EXIT_GOLDEN_MISMATCH);
    assert!(outcome.divergence.unwrap().contains("line 4"));
}

#[test]
fn unknown_patient_faults_the_run() {
    let dir = tempdir().unwrap();
    let outcome = run_in(dir.path(), &demo_scenario("unknown-patient"), |_| {});
    assert_eq!(outcome.exit_code, EXIT_FAULT);
    assert!(outcome.faults.iter().any(|f| f.contains("UnknownPatient")), "{:?}", outcome.faults);
}
