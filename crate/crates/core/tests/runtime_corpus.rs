//! End-to-end runs against the corpus firmwares: instrumentation transparency,
//! benign enforcement, and the attack scenarios.

use std::collections::BTreeSet;

use modeguard_core::callgraph::{build_callgraph, prune_address_taken, prune_signature};
use modeguard_core::instrument::{instrument_guard, instrument_profile};
use modeguard_core::ir::{FirmwareModule, FuncName};
use modeguard_core::modeanalysis::{dynamic_config, static_mode_entries, static_reachable, ModeConfig};
use modeguard_core::pointsto::solve_andersen;
use modeguard_core::runtime::{
    parse_mission, run_mission, MissionScript, MonitorMode, RunConfig, RunReport, ShadowEvent,
    ViolationKind,
};
use modeguard_testkit::load_corpus_module;

fn static_config(module: &FirmwareModule, id: &str) -> ModeConfig {
    let pts = solve_andersen(module).unwrap();
    let graph = build_callgraph(module, &pts).unwrap();
    let pruned = prune_address_taken(&prune_signature(&graph, module), module);
    let entries = static_mode_entries(module).unwrap();
    let roots = BTreeSet::from([module.entry.clone()]);
    static_reachable(id, module, &pruned, &entries, &roots).unwrap()
}

fn dynamic_cfg(module: &FirmwareModule, id: &str) -> ModeConfig {
    let static_cfg = static_config(module, id);
    let profiled = instrument_profile(module).unwrap();
    let scripts = [
        "mission g\nwait 1\nsetmode GUIDED\ninput wp 1\nwait 1\ninput alt 1\nwait 1\ninput wp 0\nwait 1\n",
        "mission r\nsetmode RTL\ninput wp 1\nwait 1\ninput alt 1\nwait 1\n",
        "mission l\nsetmode LAND\nwait 2\n",
        "mission f\nsetmode FAILSAFE\nwait 2\n",
    ];
    let reports: Vec<RunReport> = scripts
        .iter()
        .map(|s| run_mission(&profiled, &parse_mission(s).unwrap(), &RunConfig::default()).unwrap())
        .collect();
    dynamic_config(id, module, &reports, Some(&static_cfg)).unwrap().0
}

fn mission(text: &str) -> MissionScript {
    parse_mission(text).unwrap()
}

/// Effect stream: (name, args) per emitted effect.
type EffectStream = Vec<(String, Vec<String>)>;
/// Mode trajectory: (from, to) per transition.
type ModeTrajectory = Vec<(String, String)>;

/// Observable behavior: effect stream and the mode trajectory, independent of
/// tick numbering (instrumentation adds instructions, shifting ticks).
fn behavior(report: &RunReport) -> (EffectStream, ModeTrajectory) {
    (
        report
            .effects
            .iter()
            .map(|e| (e.name.clone(), e.args.clone()))
            .collect(),
        report
            .mode_transitions
            .iter()
            .map(|(_, from, to)| (from.clone(), to.clone()))
            .collect(),
    )
}

fn effect_names(report: &RunReport) -> Vec<&str> {
    report.effects.iter().map(|e| e.name.as_str()).collect()
}

const BENIGN_ALL_MODES: &str = "\
mission tour
wait 1
setmode GUIDED
input wp 1
wait 2
input alt 1
wait 1
setmode RTL
input alt 0
wait 1
setmode LAND
wait 1
setmode FAILSAFE
wait 1
";

#[test]
fn instrumentation_is_behavior_transparent() {
    let module = load_corpus_module("toycopter.fir");
    let profiled = instrument_profile(&module).unwrap();
    let guarded = instrument_guard(&module).unwrap();
    let script = mission(BENIGN_ALL_MODES);

    let off = RunConfig::default();
    let raw = run_mission(&module, &script, &off).unwrap();
    let prof = run_mission(&profiled, &script, &off).unwrap();
    let guard_off = run_mission(&guarded, &script, &off).unwrap();
    let permissive = RunConfig {
        firmware_id: "toycopter".to_string(),
        monitor: MonitorMode::PermitAll,
        mode_config: Some(static_config(&module, "toycopter")),
        ..RunConfig::default()
    };
    let guard_watched = run_mission(&guarded, &script, &permissive).unwrap();

    let baseline = behavior(&raw);
    assert_eq!(behavior(&prof), baseline);
    assert_eq!(behavior(&guard_off), baseline);
    assert_eq!(behavior(&guard_watched), baseline);
    assert!(guard_watched.violations.is_empty());

    // The raw module drives the same indirect targets the guard monitors.
    let raw_targets: Vec<&str> = raw.indirect_transfers.iter().map(|t| t.target.as_str()).collect();
    let guarded_targets: Vec<&str> = guard_watched
        .indirect_transfers
        .iter()
        .map(|t| t.target.as_str())
        .collect();
    assert_eq!(raw_targets, guarded_targets);
}

#[test]
fn runs_are_deterministic() {
    let module = load_corpus_module("toycopter.fir");
    let guarded = instrument_guard(&module).unwrap();
    let config = RunConfig {
        firmware_id: "toycopter".to_string(),
        monitor: MonitorMode::Enforce,
        mode_config: Some(static_config(&module, "toycopter")),
        ..RunConfig::default()
    };
    let script = mission(
        "mission det\nsetmode GUIDED\ninput wp 1\nwait 2\nhijack disarm_motors at 4\nwait 2\n",
    );
    let first = run_mission(&guarded, &script, &config).unwrap();
    let second = run_mission(&guarded, &script, &config).unwrap();
    assert_eq!(first, second);
}

#[test]
fn benign_enforcement_is_silent_under_both_configs() {
    let module = load_corpus_module("toycopter.fir");
    let guarded = instrument_guard(&module).unwrap();
    let script = mission(BENIGN_ALL_MODES);
    let baseline = behavior(&run_mission(&module, &script, &RunConfig::default()).unwrap());

    for config in [
        static_config(&module, "toycopter"),
        dynamic_cfg(&module, "toycopter"),
    ] {
        let enforce = RunConfig {
            firmware_id: "toycopter".to_string(),
            monitor: MonitorMode::Enforce,
            mode_config: Some(config),
            ..RunConfig::default()
        };
        let report = run_mission(&guarded, &script, &enforce).unwrap();
        assert!(report.violations.is_empty());
        assert!(!report.fail_safe);
        assert_eq!(behavior(&report), baseline);
    }
}

/// In-flight disarm: hijack the scheduler's update dispatch onto the motor
/// shutdown chain while flying GUIDED.
const DISARM_HIJACK: &str = "\
mission inflight_disarm
setmode GUIDED
input wp 1
wait 1
hijack disarm_motors at 1
wait 1
wait 3
";

#[test]
fn unprotected_disarm_hijack_succeeds() {
    let module = load_corpus_module("toycopter.fir");
    let report = run_mission(&module, &mission(DISARM_HIJACK), &RunConfig::default()).unwrap();
    // Without enforcement the hijack reaches the shutdown chain mid-flight.
    let names = effect_names(&report);
    assert!(names.contains(&"motors_disarming"));
    assert!(names.contains(&"disarm"));
    assert!(!report.fail_safe);
    let hijacked: Vec<&str> = report
        .indirect_transfers
        .iter()
        .filter(|t| t.hijacked)
        .map(|t| t.target.as_str())
        .collect();
    assert_eq!(hijacked, vec!["disarm_motors"]);
}

#[test]
fn enforcement_blocks_the_disarm_hijack() {
    let module = load_corpus_module("toycopter.fir");
    let guarded = instrument_guard(&module).unwrap();
    for config in [
        static_config(&module, "toycopter"),
        dynamic_cfg(&module, "toycopter"),
    ] {
        let enforce = RunConfig {
            firmware_id: "toycopter".to_string(),
            monitor: MonitorMode::Enforce,
            mode_config: Some(config),
            ..RunConfig::default()
        };
        let report = run_mission(&guarded, &mission(DISARM_HIJACK), &enforce).unwrap();
        assert!(report.fail_safe);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.kind, ViolationKind::DisallowedIndirectTarget);
        assert_eq!(v.mode, "GUIDED");
        assert_eq!(v.function, FuncName::new("disarm_motors"));
        // The shutdown chain never ran; the vehicle entered FAILSAFE instead.
        let names = effect_names(&report);
        assert!(!names.contains(&"motors_disarming"));
        assert!(!names.contains(&"disarm"));
        assert!(names.contains(&"safe_land"));
        let (_, _, last_mode) = report.mode_transitions.last().unwrap();
        assert_eq!(last_mode, "FAILSAFE");
    }
}

#[test]
fn enforcement_blocks_an_output_min_hijack() {
    let module = load_corpus_module("toycopter.fir");
    let guarded = instrument_guard(&module).unwrap();
    let script = mission(
        "mission throttle_cut\nsetmode GUIDED\ninput wp 1\nwait 1\nhijack output_min at 2\nwait 2\n",
    );
    // Unprotected, the motors get forced to minimum output mid-flight.
    let raw = run_mission(&module, &script, &RunConfig::default()).unwrap();
    assert!(effect_names(&raw).contains(&"motors_off"));

    let enforce = RunConfig {
        firmware_id: "toycopter".to_string(),
        monitor: MonitorMode::Enforce,
        mode_config: Some(dynamic_cfg(&module, "toycopter")),
        ..RunConfig::default()
    };
    let report = run_mission(&guarded, &script, &enforce).unwrap();
    assert!(report.fail_safe);
    assert!(!effect_names(&report).contains(&"motors_off"));
    assert_eq!(report.violations[0].function, FuncName::new("output_min"));
}

#[test]
fn return_corruption_is_detected_only_by_the_monitor() {
    let module = load_corpus_module("toycopter.fir");
    let guarded = instrument_guard(&module).unwrap();
    let script = mission(
        "mission ret_corrupt\nsetmode GUIDED\ninput wp 1\nwait 1\ncorrupt_return at 0\nwait 2\n",
    );

    // Invisible without the shadow stack: the run completes benignly.
    let raw = run_mission(&module, &script, &RunConfig::default()).unwrap();
    assert!(raw.violations.is_empty());
    assert!(!raw.fail_safe);

    let enforce = RunConfig {
        firmware_id: "toycopter".to_string(),
        monitor: MonitorMode::Enforce,
        mode_config: Some(static_config(&module, "toycopter")),
        ..RunConfig::default()
    };
    let report = run_mission(&guarded, &script, &enforce).unwrap();
    assert!(report.fail_safe);
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].kind, ViolationKind::ReturnMismatch);
    assert!(report
        .shadow_events
        .iter()
        .any(|e| matches!(e, ShadowEvent::Pop { matched: false, .. })));
}

#[test]
fn shadow_stack_nests_and_pairs_lifo() {
    let module = load_corpus_module("toycopter.fir");
    let guarded = instrument_guard(&module).unwrap();
    let config = RunConfig {
        firmware_id: "toycopter".to_string(),
        monitor: MonitorMode::PermitAll,
        mode_config: Some(static_config(&module, "toycopter")),
        ..RunConfig::default()
    };
    let script = mission("mission nest\nsetmode GUIDED\ninput wp 1\nwait 3\n");
    let report = run_mission(&guarded, &script, &config).unwrap();

    let mut stack: Vec<&str> = Vec::new();
    let mut max_depth = 0usize;
    for event in &report.shadow_events {
        match event {
            ShadowEvent::Push { descriptor, .. } => {
                stack.push(descriptor);
                max_depth = max_depth.max(stack.len());
            }
            ShadowEvent::Pop {
                expected,
                actual,
                matched,
                ..
            } => {
                assert!(matched);
                assert_eq!(actual, expected);
                assert_eq!(stack.pop().expect("balanced events"), expected.as_str());
            }
        }
    }
    assert!(stack.is_empty());
    // main -> update handler -> nav routine gives two live frames at once.
    assert_eq!(max_depth, 2);
}

#[test]
fn toyrover_attack_is_blocked_in_manual_and_auto() {
    let module = load_corpus_module("toyrover.fir");
    let guarded = instrument_guard(&module).unwrap();
    let config = static_config(&module, "toyrover");
    for (mode, at) in [("MANUAL", 1), ("AUTO", 2)] {
        let script = mission(&format!(
            "mission rover_disarm\nsetmode {mode}\ninput hdg 1\nwait 1\nhijack disarm at {at}\nwait 2\n"
        ));
        let raw = run_mission(&module, &script, &RunConfig::default()).unwrap();
        assert!(effect_names(&raw).contains(&"disarm"), "mode {mode}");

        let enforce = RunConfig {
            firmware_id: "toyrover".to_string(),
            monitor: MonitorMode::Enforce,
            mode_config: Some(config.clone()),
            ..RunConfig::default()
        };
        let report = run_mission(&guarded, &script, &enforce).unwrap();
        assert!(report.fail_safe, "mode {mode}");
        assert_eq!(report.violations[0].function, FuncName::new("disarm"));
        assert!(!effect_names(&report).contains(&"disarm"), "mode {mode}");
        assert!(effect_names(&report).contains(&"safe_stop"), "mode {mode}");
    }
}

#[test]
fn rtl_mode_legitimately_reaches_the_shutdown_chain() {
    // The same function that is an attack target elsewhere is legitimate
    // inside RTL docking: enforcement must not flag it there.
    let module = load_corpus_module("toyrover.fir");
    let guarded = instrument_guard(&module).unwrap();
    let enforce = RunConfig {
        firmware_id: "toyrover".to_string(),
        monitor: MonitorMode::Enforce,
        mode_config: Some(static_config(&module, "toyrover")),
        ..RunConfig::default()
    };
    let script = mission("mission dock\nsetmode RTL\ninput spd 1\nwait 2\n");
    let report = run_mission(&guarded, &script, &enforce).unwrap();
    assert!(report.violations.is_empty());
    assert!(!report.fail_safe);
    let names = effect_names(&report);
    assert!(names.contains(&"docking"));
    assert!(names.contains(&"brakes"));
    assert!(names.contains(&"disarm"));
}
