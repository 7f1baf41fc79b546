//! Workspace acceptance suite: ten end-to-end checks covering metric
//! arithmetic against full-scale reference measurements, analysis soundness,
//! profile convergence, enforcement quality, and whole-pipeline determinism.
//!
//! This target runs without the default test harness (`harness = false`):
//! its `main` drives the checks in order, prints exactly one pass/fail line
//! per check, and exits nonzero if any check fails. A check that fails or
//! panics does not stop the ones after it, so the full scorecard always
//! prints.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;

use modeguard_cli::attack;
use modeguard_cli::gen::{generate_missions, write_missions, GenOptions};
use modeguard_cli::pipeline::{analyze, profile_missions, run_pipeline, Analysis, PipelineOptions};
use modeguard_core::callgraph::precision;
use modeguard_core::runtime::ShadowEvent;
use modeguard_core::{
    dynamic_config, fpr_fnr, instrument_guard, missed_functions, parse_firmware, reduction,
    run_mission, solve_andersen, CallKind, CallSiteId, FirmwareModule, MissionScript, MissionStep,
    ModeConfig, MonitorMode, RunConfig, RunReport, ViolationKind,
};
use modeguard_testkit::{load_corpus_module, points_to_oracle, random_module_text, toycopter_path};

/// Percentages reproduced to two decimals must land within a hundredth of a
/// point; the epsilon absorbs binary floating-point representation error.
const TWO_DECIMAL_TOLERANCE: f64 = 0.01 + 1e-9;

fn check(number: usize, name: &str, body: impl FnOnce() -> Result<(), String>) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "check panicked".to_string());
        Err(msg)
    });
    match outcome {
        Ok(()) => {
            println!("acceptance {number:>2}/10 {name}: pass");
            true
        }
        Err(msg) => {
            println!("acceptance {number:>2}/10 {name}: FAIL ({msg})");
            false
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// The standard benign corpus for a firmware: deterministic, covers every
/// (mode, input-combination) pair within the first ten missions.
fn benign_missions(module: &FirmwareModule, seed: u64, count: usize) -> Vec<MissionScript> {
    generate_missions(module, &GenOptions { count, seed })
        .expect("mission generation is infallible on a valid module")
        .into_iter()
        .map(|m| m.script)
        .collect()
}

struct Workbench {
    module: FirmwareModule,
    analysis: Analysis,
    missions: Vec<MissionScript>,
    reports: Vec<RunReport>,
}

/// Load a corpus firmware and run the full profiling workflow on the
/// standard 40-mission benign corpus (seed 7, the pipeline default).
fn workbench(file: &str, id: &str) -> Result<Workbench, String> {
    let module = load_corpus_module(file);
    let analysis = analyze(&module, id).map_err(|e| e.to_string())?;
    let missions = benign_missions(&module, 7, 40);
    let reports = profile_missions(&module, id, &missions).map_err(|e| e.to_string())?;
    Ok(Workbench {
        module,
        analysis,
        missions,
        reports,
    })
}

fn converged_dynamic(bench: &Workbench, id: &str) -> Result<ModeConfig, String> {
    let (config, _) = dynamic_config(id, &bench.module, &bench.reports, Some(&bench.analysis.static_config))
        .map_err(|e| e.to_string())?;
    Ok(config)
}

// --- 1. metric arithmetic fidelity -----------------------------------------

/// Call-graph pruning measurements from four full-scale autopilot builds:
/// (label, baseline indirect+direct edge count, edges left after pruning,
/// reported precision as an integer percentage).
const PRECISION_ROWS: &[(&str, usize, usize, i64)] = &[
    ("copter", 104_000, 66_800, 36),
    ("rover", 115_300, 60_100, 48),
    ("plane", 122_000, 67_100, 45),
    ("px-copter", 193_000, 98_500, 49),
];

/// Per-mode allowed-set measurements from the same four builds: (label,
/// total functions, allowed functions, reported reduction percentage to two
/// decimals). Dynamic rows come from profiled allowed sets, static rows from
/// reachability-based ones.
const REDUCTION_ROWS: &[(&str, usize, usize, f64)] = &[
    // copter build, 22 653 functions
    ("copter AUTO dynamic", 22_653, 2_869, 87.33),
    ("copter CIRCLE dynamic", 22_653, 3_106, 86.28),
    ("copter STABILIZE dynamic", 22_653, 7_054, 68.86),
    ("copter GUIDED dynamic", 22_653, 3_271, 85.56),
    ("copter RTL dynamic", 22_653, 3_153, 86.08),
    ("copter LOITER dynamic", 22_653, 2_757, 87.83),
    ("copter AUTO static", 22_653, 13_520, 40.31),
    ("copter CIRCLE static", 22_653, 13_450, 40.62),
    ("copter STABILIZE static", 22_653, 13_447, 40.64),
    ("copter GUIDED static", 22_653, 13_469, 40.54),
    ("copter RTL static", 22_653, 13_470, 40.53),
    ("copter LOITER static", 22_653, 13_452, 40.61),
    // plane build, 22 514 functions
    ("plane MANUAL dynamic", 22_514, 6_891, 69.39),
    ("plane AUTO dynamic", 22_514, 2_823, 87.46),
    // 2 756 of 22 514 leaves 87.76%; an earlier tabulation of this dataset
    // carried a digit-transposed 88.75 for this row.
    ("plane CIRCLE dynamic", 22_514, 2_756, 87.76),
    ("plane GUIDED dynamic", 22_514, 2_692, 88.04),
    ("plane QLOITER dynamic", 22_514, 3_120, 86.14),
    ("plane RTL dynamic", 22_514, 2_692, 88.04),
    ("plane QHOVER dynamic", 22_514, 2_700, 88.00),
    ("plane MANUAL static", 22_514, 13_235, 41.21),
    ("plane AUTO static", 22_514, 13_253, 41.13),
    ("plane CIRCLE static", 22_514, 13_232, 41.22),
    ("plane GUIDED static", 22_514, 13_238, 41.20),
    ("plane QLOITER static", 22_514, 13_252, 41.14),
    ("plane RTL static", 22_514, 13_239, 41.19),
    ("plane QHOVER static", 22_514, 13_238, 41.20),
    // rover build, 20 990 functions
    ("rover AUTO dynamic", 20_990, 2_513, 88.02),
    ("rover CIRCLE dynamic", 20_990, 2_435, 88.40),
    ("rover MANUAL dynamic", 20_990, 6_246, 70.24),
    ("rover RTL dynamic", 20_990, 2_433, 88.40),
    ("rover GUIDED dynamic", 20_990, 2_647, 87.39),
    ("rover LOITER dynamic", 20_990, 2_255, 89.26),
    ("rover AUTO static", 20_990, 12_637, 39.80),
    ("rover CIRCLE static", 20_990, 12_558, 40.17),
    ("rover MANUAL static", 20_990, 12_549, 40.21),
    ("rover RTL static", 20_990, 12_566, 40.13),
    ("rover GUIDED static", 20_990, 12_583, 40.05),
    ("rover LOITER static", 20_990, 12_550, 40.20),
    // px-copter build, 20 805 functions
    ("px-copter TAKEOFF dynamic", 20_805, 4_320, 79.23),
    ("px-copter MISSION dynamic", 20_805, 2_765, 86.71),
    ("px-copter LOITER dynamic", 20_805, 2_660, 87.21),
    ("px-copter RTL dynamic", 20_805, 2_853, 86.29),
    ("px-copter TAKEOFF static", 20_805, 12_244, 41.15),
    ("px-copter MISSION static", 20_805, 12_238, 41.18),
    ("px-copter LOITER static", 20_805, 12_208, 41.32),
    ("px-copter RTL static", 20_805, 12_227, 41.23),
];

fn c01_metric_arithmetic_fidelity() -> bool {
    check(1, "metric arithmetic fidelity", || {
        for &(label, original, pruned, expected) in PRECISION_ROWS {
            let p = precision(original, pruned).map_err(|e| e.to_string())?;
            let rounded = (p * 100.0).round() as i64;
            ensure(rounded == expected, || {
                format!("{label}: precision({original}, {pruned}) renders as {rounded}%, reference says {expected}%")
            })?;
        }
        for &(label, total, allowed, expected) in REDUCTION_ROWS {
            let r = reduction(total, allowed).map_err(|e| e.to_string())? * 100.0;
            ensure((r - expected).abs() <= TWO_DECIMAL_TOLERANCE, || {
                format!("{label}: reduction({total}, {allowed}) = {r:.4}%, reference says {expected}%")
            })?;
        }
        Ok(())
    })
}

// --- 2. relationship fidelity ----------------------------------------------

fn c02_relationship_fidelity() -> bool {
    check(2, "relationship fidelity (dynamic within static, per mode)", || {
        let bench = workbench("toycopter.fir", "toycopter")?;
        let (dynamic, warnings) =
            dynamic_config("toycopter", &bench.module, &bench.reports, Some(&bench.analysis.static_config))
                .map_err(|e| e.to_string())?;
        ensure(warnings.is_empty(), || {
            format!("profiling left modes uncovered, so rows fell back to static: {warnings:?}")
        })?;
        let static_config = &bench.analysis.static_config;
        ensure(
            dynamic.rows.keys().eq(static_config.rows.keys()),
            || "dynamic and static configs disagree on the mode set".into(),
        )?;
        let total = bench.module.functions.len();
        for (mode, dyn_row) in &dynamic.rows {
            let static_row = &static_config.rows[mode];
            ensure(dyn_row.functions.is_subset(&static_row.functions), || {
                let extra: Vec<_> = dyn_row.functions.difference(&static_row.functions).collect();
                format!("mode {mode}: profiled functions outside the static allowed set: {extra:?}")
            })?;
            let dyn_red = reduction(total, dyn_row.functions.len()).map_err(|e| e.to_string())?;
            let static_red = reduction(total, static_row.functions.len()).map_err(|e| e.to_string())?;
            ensure(static_red < dyn_red, || {
                format!(
                    "mode {mode}: static reduction {:.4} is not strictly below dynamic {:.4}",
                    static_red, dyn_red
                )
            })?;
        }
        Ok(())
    })
}

// --- 3. points-to oracle equivalence ---------------------------------------

fn c03_points_to_oracle_equivalence() -> bool {
    check(3, "points-to solver matches declarative oracle on 200 modules", || {
        for seed in 0..200u64 {
            let text = random_module_text(seed);
            let module = parse_firmware(&text)
                .map_err(|d| format!("seed {seed}: generated module failed to parse: {d:?}"))?;
            let solved = solve_andersen(&module).map_err(|e| format!("seed {seed}: {e}"))?;
            let oracle = points_to_oracle(&module);
            ensure(solved.pts == oracle, || {
                format!("seed {seed}: worklist result diverges from the declarative fixpoint")
            })?;
        }
        Ok(())
    })
}

// --- 4. pruning soundness ---------------------------------------------------

fn pruning_sound_on(file: &str, id: &str) -> Result<(), String> {
    let bench = workbench(file, id)?;
    ensure(
        bench.analysis.edges.address < bench.analysis.edges.original,
        || {
            format!(
                "{id}: pruning removed nothing ({} edges before and after)",
                bench.analysis.edges.original
            )
        },
    )?;
    ensure(bench.analysis.precision > 0.0, || {
        format!("{id}: precision is zero")
    })?;
    // Dynamic traversals must come from an uninstrumented run so that call
    // site indices line up with the analyzed module.
    let run_config = RunConfig {
        firmware_id: id.to_string(),
        ..RunConfig::default()
    };
    let mut traversed = 0usize;
    for mission in &bench.missions {
        let report = run_mission(&bench.module, mission, &run_config).map_err(|e| e.to_string())?;
        for t in &report.indirect_transfers {
            traversed += 1;
            let kept = bench.analysis.pruned.edges.iter().any(|e| {
                e.kind == CallKind::Indirect
                    && e.caller == t.caller
                    && e.site == CallSiteId(t.site)
                    && e.callee == t.target
            });
            ensure(kept, || {
                format!(
                    "{id}, mission {}: executed transfer {}#{} -> {} is missing from the pruned graph",
                    mission.name, t.caller, t.site, t.target
                )
            })?;
        }
    }
    ensure(traversed > 0, || {
        format!("{id}: the benign corpus exercised no indirect transfers")
    })?;
    Ok(())
}

fn c04_pruning_soundness() -> bool {
    check(4, "no dynamically traversed indirect edge is pruned", || {
        pruning_sound_on("toycopter.fir", "toycopter")?;
        pruning_sound_on("toyrover.fir", "toyrover")?;
        Ok(())
    })
}

// --- 5. profile convergence --------------------------------------------------

fn c05_profile_convergence() -> bool {
    check(5, "missed-function curve converges to zero", || {
        let bench = workbench("toycopter.fir", "toycopter")?;
        let held_out = &bench.reports[20..];
        let mut previous = usize::MAX;
        for k in (2..=20).step_by(2) {
            // No static fallback here: the curve measures what profiling
            // alone has learned after k missions.
            let (config, _) = dynamic_config("toycopter", &bench.module, &bench.reports[..k], None)
                .map_err(|e| e.to_string())?;
            let missed = missed_functions(&config, held_out);
            ensure(missed <= previous, || {
                format!("missed({k}) = {missed} rose above missed({}) = {previous}", k - 2)
            })?;
            if k == 2 {
                ensure(missed > 0, || {
                    "missed(2) is already zero; the curve demonstrates nothing".into()
                })?;
            }
            if k >= 10 {
                ensure(missed == 0, || format!("missed({k}) = {missed}, expected 0 from k = 10 on"))?;
            }
            previous = missed;
        }
        // A fresh mission set from a different seed must also be covered.
        let fresh = benign_missions(&bench.module, 99, 20);
        let fresh_reports =
            profile_missions(&bench.module, "toycopter", &fresh).map_err(|e| e.to_string())?;
        let (full, _) = dynamic_config("toycopter", &bench.module, &bench.reports, None)
            .map_err(|e| e.to_string())?;
        let missed_fresh = missed_functions(&full, &fresh_reports);
        ensure(missed_fresh == 0, || {
            format!("held-out mission set still hits {missed_fresh} unprofiled (mode, function) pairs")
        })?;
        Ok(())
    })
}

// --- 6. zero false positives --------------------------------------------------

fn zero_fpr_on(file: &str, id: &str) -> Result<(), String> {
    let bench = workbench(file, id)?;
    let dynamic = converged_dynamic(&bench, id)?;
    let guarded = instrument_guard(&bench.module).map_err(|e| e.to_string())?;
    for (label, config) in [("static", &bench.analysis.static_config), ("dynamic", &dynamic)] {
        let (fpr, _) = fpr_fnr(&guarded, config, &bench.missions, &[]).map_err(|e| e.to_string())?;
        ensure(fpr == 0.0, || {
            format!("{id}: {label} config tripped fail-safe on benign missions (fpr = {fpr})")
        })?;
    }
    Ok(())
}

fn c06_zero_false_positives() -> bool {
    check(6, "benign missions never trip enforcement", || {
        zero_fpr_on("toycopter.fir", "toycopter")?;
        zero_fpr_on("toyrover.fir", "toyrover")?;
        Ok(())
    })
}

// --- 7. attack detection --------------------------------------------------------

fn attack_detected(file: &str, id: &str, scenario: &str) -> Result<(), String> {
    let module = load_corpus_module(file);
    let plan = attack::plan(&module, scenario)
        .map_err(|e| e.to_string())?
        .map_err(|inapplicable| format!("{scenario} should apply to {id}: {}", inapplicable.0))?;

    // Unprotected firmware: the hijack lands and its effect executes.
    let baseline = plan.run_baseline(&module, id).map_err(|e| e.to_string())?;
    ensure(baseline.forbidden_effect_fired, || {
        format!("{scenario} on {id}: with the monitor off, the hijack never reached its effect")
    })?;
    ensure(!baseline.fail_safe && baseline.violations == 0, || {
        format!("{scenario} on {id}: an unmonitored run reported monitor activity")
    })?;

    // Guarded firmware under the converged dynamic config: exactly one
    // disallowed-target violation, fail-safe entered, effect suppressed.
    let bench = workbench(file, id)?;
    let dynamic = converged_dynamic(&bench, id)?;
    let guarded = instrument_guard(&bench.module).map_err(|e| e.to_string())?;
    let outcome = plan.run_enforced(&guarded, &dynamic).map_err(|e| e.to_string())?;
    ensure(outcome.violations == 1, || {
        format!("{scenario} on {id}: expected exactly one violation, saw {}", outcome.violations)
    })?;
    let violation = &outcome.report.violations[0];
    ensure(violation.kind == ViolationKind::DisallowedIndirectTarget, || {
        format!("{scenario} on {id}: wrong violation kind {:?}", violation.kind)
    })?;
    ensure(violation.function == plan.target, || {
        format!(
            "{scenario} on {id}: violation names {}, hijack targeted {}",
            violation.function, plan.target
        )
    })?;
    ensure(outcome.fail_safe, || {
        format!("{scenario} on {id}: enforcement never entered fail-safe")
    })?;
    ensure(!outcome.forbidden_effect_fired, || {
        format!("{scenario} on {id}: the forbidden effect fired despite enforcement")
    })?;
    ensure(outcome.detected, || {
        format!("{scenario} on {id}: outcome not classified as detected")
    })?;
    Ok(())
}

fn c07_attack_detection() -> bool {
    check(7, "all three hijack scenarios detected and contained", || {
        attack_detected("toycopter.fir", "toycopter", "a1")?;
        attack_detected("toycopter.fir", "toycopter", "a2")?;
        attack_detected("toyrover.fir", "toyrover", "a3")?;
        Ok(())
    })
}

// --- 8. shadow-return integrity ----------------------------------------------

/// Replay a report's shadow-stack events and confirm LIFO pairing: every pop
/// matches the most recent unmatched push and the stack drains to empty.
fn lifo_paired(report: &RunReport) -> Result<usize, String> {
    let mut stack: Vec<&str> = Vec::new();
    let mut pushes = 0usize;
    for event in &report.shadow_events {
        match event {
            ShadowEvent::Push { descriptor, .. } => {
                stack.push(descriptor);
                pushes += 1;
            }
            ShadowEvent::Pop {
                expected,
                actual,
                matched,
                ..
            } => {
                ensure(*matched && expected == actual, || {
                    format!(
                        "mission {}: return descriptor mismatch (expected {expected}, popped {actual})",
                        report.mission
                    )
                })?;
                let top = stack.pop().ok_or_else(|| {
                    format!("mission {}: pop on an empty shadow stack", report.mission)
                })?;
                ensure(top == actual, || {
                    format!(
                        "mission {}: pop of {actual} is not the most recent push {top}",
                        report.mission
                    )
                })?;
            }
        }
    }
    ensure(stack.is_empty(), || {
        format!("mission {}: {} frames never returned", report.mission, stack.len())
    })?;
    Ok(pushes)
}

fn c08_shadow_return_integrity() -> bool {
    check(8, "corrupted returns detected; benign returns pair LIFO", || {
        let bench = workbench("toycopter.fir", "toycopter")?;
        let guarded = instrument_guard(&bench.module).map_err(|e| e.to_string())?;
        let dynamic = converged_dynamic(&bench, "toycopter")?;
        let enforce = RunConfig {
            firmware_id: "toycopter".to_string(),
            monitor: MonitorMode::Enforce,
            mode_config: Some(dynamic),
            ..RunConfig::default()
        };

        // A mission that corrupts the first checked return after arming.
        let first_input = bench.module.functions[&bench.module.entry]
            .params
            .first()
            .map(|(var, _)| var.as_str().to_string())
            .ok_or_else(|| "toycopter's entry takes no inputs".to_string())?;
        let corrupting = MissionScript {
            name: "corrupted_return".to_string(),
            steps: vec![
                MissionStep::SetMode("GUIDED".to_string()),
                MissionStep::Input {
                    register: first_input,
                    value: 1,
                },
                MissionStep::Wait(1),
                MissionStep::CorruptReturn { at: 0 },
                MissionStep::Wait(1),
            ],
        };
        let report = run_mission(&guarded, &corrupting, &enforce).map_err(|e| e.to_string())?;
        ensure(report.fail_safe, || "corrupted return did not trigger fail-safe".into())?;
        ensure(
            report
                .violations
                .iter()
                .any(|v| v.kind == ViolationKind::ReturnMismatch),
            || "corrupted return produced no return-mismatch violation".into(),
        )?;

        // All benign runs: monitored call/return events pair LIFO with zero
        // mismatches.
        let mut pushes = 0usize;
        for mission in &bench.missions {
            let report = run_mission(&guarded, mission, &enforce).map_err(|e| e.to_string())?;
            ensure(!report.fail_safe && report.violations.is_empty(), || {
                format!("benign mission {} tripped the monitor", mission.name)
            })?;
            pushes += lifo_paired(&report)?;
        }
        ensure(pushes > 0, || {
            "no benign mission ever exercised the shadow stack".into()
        })?;
        Ok(())
    })
}

// --- 9. behavior preservation --------------------------------------------------

fn behavior_preserved_on(file: &str, id: &str) -> Result<(), String> {
    let bench = workbench(file, id)?;
    let guarded = instrument_guard(&bench.module).map_err(|e| e.to_string())?;
    let raw_config = RunConfig {
        firmware_id: id.to_string(),
        ..RunConfig::default()
    };
    let permit_all = RunConfig {
        firmware_id: id.to_string(),
        monitor: MonitorMode::PermitAll,
        mode_config: Some(bench.analysis.static_config.clone()),
        ..RunConfig::default()
    };
    let mut effects = 0usize;
    for mission in &bench.missions {
        let raw = run_mission(&bench.module, mission, &raw_config).map_err(|e| e.to_string())?;
        let instrumented = run_mission(&guarded, mission, &permit_all).map_err(|e| e.to_string())?;
        ensure(raw.effects == instrumented.effects, || {
            format!("{id}, mission {}: effect traces diverge under instrumentation", mission.name)
        })?;
        ensure(raw.mode_transitions == instrumented.mode_transitions, || {
            format!("{id}, mission {}: mode transitions diverge under instrumentation", mission.name)
        })?;
        effects += raw.effects.len();
    }
    ensure(effects > 0, || {
        format!("{id}: the benign corpus produced no effects to compare")
    })?;
    Ok(())
}

fn c09_behavior_preservation() -> bool {
    check(9, "guard instrumentation leaves behavior unchanged", || {
        behavior_preserved_on("toycopter.fir", "toycopter")?;
        behavior_preserved_on("toyrover.fir", "toyrover")?;
        Ok(())
    })
}

// --- 10. determinism --------------------------------------------------------------

/// Read every file directly inside `dir` into a name -> bytes map.
fn dir_contents(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for entry in entries {
        let entry = entry.map_err(|e| format!("{}: {e}", dir.display()))?;
        let path = entry.path();
        if path.is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            files.insert(name, bytes);
        }
    }
    Ok(files)
}

fn c10_pipeline_determinism() -> bool {
    check(10, "repeated pipeline runs are byte-identical", || {
        let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
        let module = load_corpus_module("toycopter.fir");
        let mut rounds: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        for round in 0..2 {
            let root = scratch.path().join(format!("round{round}"));
            let missions_dir = root.join("missions");
            let out_dir = root.join("out");
            let generated = generate_missions(&module, &GenOptions { count: 40, seed: 7 })
                .map_err(|e| e.to_string())?;
            write_missions(&missions_dir, &generated).map_err(|e| e.to_string())?;
            let outcome = run_pipeline(
                &toycopter_path(),
                &missions_dir,
                &out_dir,
                &PipelineOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            ensure(outcome.success, || {
                format!("round {round}: pipeline did not reach its enforcement goals")
            })?;
            let mut files = BTreeMap::new();
            for (prefix, dir) in [("missions", &missions_dir), ("out", &out_dir)] {
                for (name, bytes) in dir_contents(dir)? {
                    files.insert(format!("{prefix}/{name}"), bytes);
                }
            }
            rounds.push(files);
        }
        let (first, second) = (&rounds[0], &rounds[1]);
        ensure(first.len() >= 46, || {
            format!("pipeline produced only {} artifacts; expected the full set", first.len())
        })?;
        ensure(
            first.keys().eq(second.keys()),
            || "the two rounds produced different artifact sets".into(),
        )?;
        for (name, bytes) in first {
            ensure(second[name] == *bytes, || {
                format!("artifact {name} differs between identical pipeline runs")
            })?;
        }
        Ok(())
    })
}

// --- driver -------------------------------------------------------------------

fn main() -> ExitCode {
    let results = [
        c01_metric_arithmetic_fidelity(),
        c02_relationship_fidelity(),
        c03_points_to_oracle_equivalence(),
        c04_pruning_soundness(),
        c05_profile_convergence(),
        c06_zero_false_positives(),
        c07_attack_detection(),
        c08_shadow_return_integrity(),
        c09_behavior_preservation(),
        c10_pipeline_determinism(),
    ];
    let failed = results.iter().filter(|passed| !**passed).count();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} of {} acceptance checks failed", results.len());
        ExitCode::FAILURE
    }
}
