//! End-to-end orchestration: parse → points-to → call graph → prune →
//! per-mode allowed sets → instrument → profile → enforce → report.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use modeguard_core::callgraph::{
    build_callgraph, precision, prune_address_taken, prune_signature, CallGraph,
};
use modeguard_core::instrument::{instrument_guard, instrument_profile};
use modeguard_core::ir::{parse_firmware, serialize_firmware, validate, FirmwareModule, InvalidModule};
use modeguard_core::modeanalysis::{
    dynamic_config, emit_mode_config, reduction, static_mode_entries, static_reachable,
    ModeConfig, ModeEntryMap,
};
use modeguard_core::pointsto::{solve_andersen, PointsToResult};
use modeguard_core::runtime::{
    fpr_fnr, missed_functions, parse_mission, run_mission, serialize_mission, MissionScript,
    RunConfig, RunReport,
};

use crate::attack;
use crate::report;
use crate::CliError;

/// Read, parse, and validate a firmware module.
pub fn load_module(path: &Path) -> Result<FirmwareModule, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let module = parse_firmware(&text)?;
    let diags = validate(&module);
    if !diags.is_empty() {
        return Err(CliError::Analysis(InvalidModule(diags).to_string()));
    }
    Ok(module)
}

pub fn load_mission(path: &Path) -> Result<MissionScript, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_mission(&text)?)
}

/// All `*.mission` files in a directory, in file-name order.
pub fn load_missions_dir(dir: &Path) -> Result<Vec<MissionScript>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "mission"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no .mission files found",
            dir.display()
        )));
    }
    paths.iter().map(|p| load_mission(p)).collect()
}

/// Fallback firmware identifier: the input file's stem.
pub fn default_firmware_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "firmware".to_string())
}

/// Call-graph sizes as edges survive each pruning pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeCounts {
    pub original: usize,
    pub signature: usize,
    pub address: usize,
}

/// Static-analysis products shared by several subcommands.
pub struct Analysis {
    pub pts: PointsToResult,
    pub baseline: CallGraph,
    pub signature_pruned: CallGraph,
    pub pruned: CallGraph,
    pub edges: EdgeCounts,
    pub precision: f64,
    pub entries: ModeEntryMap,
    pub static_config: ModeConfig,
}

pub fn analyze(module: &FirmwareModule, firmware_id: &str) -> Result<Analysis, CliError> {
    let pts = solve_andersen(module)?;
    let baseline = build_callgraph(module, &pts)?;
    let signature_pruned = prune_signature(&baseline, module);
    let pruned = prune_address_taken(&signature_pruned, module);
    let edges = EdgeCounts {
        original: baseline.edges.len(),
        signature: signature_pruned.edges.len(),
        address: pruned.edges.len(),
    };
    let precision = precision(edges.original, edges.address)?;
    let entries = static_mode_entries(module)?;
    let roots = BTreeSet::from([module.entry.clone()]);
    let static_config = static_reachable(firmware_id, module, &pruned, &entries, &roots)?;
    Ok(Analysis {
        pts,
        baseline,
        signature_pruned,
        pruned,
        edges,
        precision,
        entries,
        static_config,
    })
}

/// Run every mission on a profiling build of the module, monitor off.
pub fn profile_missions(
    module: &FirmwareModule,
    firmware_id: &str,
    missions: &[MissionScript],
) -> Result<Vec<RunReport>, CliError> {
    let profiled = instrument_profile(module)?;
    let config = RunConfig {
        firmware_id: firmware_id.to_string(),
        ..RunConfig::default()
    };
    missions
        .iter()
        .map(|m| run_mission(&profiled, m, &config).map_err(CliError::from))
        .collect()
}

/// One row of the per-mode summary table.
#[derive(Debug, Clone)]
pub struct ModeRowSummary {
    pub mode: String,
    pub dynamic: usize,
    pub static_count: usize,
    pub total: usize,
    pub reduction_dynamic: f64,
    pub reduction_static: f64,
}

pub fn mode_rows(
    module: &FirmwareModule,
    static_cfg: &ModeConfig,
    dynamic_cfg: &ModeConfig,
) -> Result<Vec<ModeRowSummary>, CliError> {
    let total = module.functions.len();
    let mut rows = Vec::new();
    for (mode, dyn_row) in &dynamic_cfg.rows {
        let static_count = static_cfg
            .rows
            .get(mode)
            .map(|r| r.functions.len())
            .unwrap_or(0);
        rows.push(ModeRowSummary {
            mode: mode.clone(),
            dynamic: dyn_row.functions.len(),
            static_count,
            total,
            reduction_dynamic: reduction(total, dyn_row.functions.len())?,
            reduction_static: reduction(total, static_count)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub enum AttackSummary {
    Ran {
        scenario: String,
        target: String,
        mode: String,
        detected: bool,
    },
    Skipped {
        scenario: String,
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub firmware_id: String,
    pub functions: usize,
    pub edges: EdgeCounts,
    pub precision: f64,
    pub per_mode: Vec<ModeRowSummary>,
    /// Missed-function counts for configs built from the first k missions,
    /// evaluated against the held-out second half.
    pub missed_curve: Vec<(usize, usize)>,
    pub attacks: Vec<AttackSummary>,
    pub benign_missions: usize,
    pub fpr_dynamic: f64,
    pub fnr_dynamic: f64,
    pub fpr_static: f64,
    pub fnr_static: f64,
    pub dynamic_fallback_warnings: Vec<String>,
}

pub struct PipelineOutcome {
    pub report: PipelineReport,
    /// Zero false positives on the benign set and every applicable attack
    /// detected.
    pub success: bool,
}

pub struct PipelineOptions {
    pub firmware_id: Option<String>,
    pub scenarios: Vec<String>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            firmware_id: None,
            scenarios: attack::SCENARIO_IDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn write_artifact(out_dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = out_dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

/// The whole workflow against one firmware and a benign mission set,
/// writing configs, instrumented builds, attack scripts, and the report
/// into `out_dir`.
pub fn run_pipeline(
    fir: &Path,
    missions_dir: &Path,
    out_dir: &Path,
    opts: &PipelineOptions,
) -> Result<PipelineOutcome, CliError> {
    let module = load_module(fir)?;
    let firmware_id = opts
        .firmware_id
        .clone()
        .unwrap_or_else(|| default_firmware_id(fir));
    if !module.mode_names.iter().any(|m| m == "FAILSAFE") {
        return Err(CliError::Analysis(
            "firmware declares no FAILSAFE mode; the monitor has nowhere to escalate".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let analysis = analyze(&module, &firmware_id)?;
    write_artifact(
        out_dir,
        &format!("{firmware_id}.static.config"),
        &emit_mode_config(&analysis.static_config),
    )?;

    let profiled = instrument_profile(&module)?;
    write_artifact(
        out_dir,
        &format!("{firmware_id}.profile.fir"),
        &serialize_firmware(&profiled)?,
    )?;

    let missions = load_missions_dir(missions_dir)?;
    let reports = profile_missions(&module, &firmware_id, &missions)?;

    let (dynamic_cfg, warnings) =
        dynamic_config(&firmware_id, &module, &reports, Some(&analysis.static_config))?;
    write_artifact(
        out_dir,
        &format!("{firmware_id}.dynamic.config"),
        &emit_mode_config(&dynamic_cfg),
    )?;

    let guarded = instrument_guard(&module)?;
    write_artifact(
        out_dir,
        &format!("{firmware_id}.guard.fir"),
        &serialize_firmware(&guarded)?,
    )?;

    // Convergence: configs from growing prefixes, without static fill-in so
    // unvisited modes actually count, scored against the held-out half.
    let half = missions.len() / 2;
    let eval = &reports[half..];
    let mut missed_curve = Vec::new();
    let mut k = 2;
    while k <= half {
        let (prefix_cfg, _) = dynamic_config(&firmware_id, &module, &reports[..k], None)?;
        missed_curve.push((k, missed_functions(&prefix_cfg, eval)));
        k += 2;
    }

    let mut attacks = Vec::new();
    let mut attack_missions = Vec::new();
    let mut all_detected = true;
    for scenario in &opts.scenarios {
        match attack::plan(&module, scenario)? {
            Ok(plan) => {
                write_artifact(
                    out_dir,
                    &format!("{firmware_id}.{scenario}.mission"),
                    &serialize_mission(&plan.mission),
                )?;
                let outcome = plan.run_enforced(&guarded, &dynamic_cfg)?;
                all_detected &= outcome.detected;
                attacks.push(AttackSummary::Ran {
                    scenario: scenario.clone(),
                    target: plan.target.as_str().to_string(),
                    mode: plan.mode.clone(),
                    detected: outcome.detected,
                });
                attack_missions.push(plan.mission);
            }
            Err(inapplicable) => attacks.push(AttackSummary::Skipped {
                scenario: scenario.clone(),
                reason: inapplicable.0,
            }),
        }
    }

    let (fpr_dynamic, fnr_dynamic) = fpr_fnr(&guarded, &dynamic_cfg, &missions, &attack_missions)?;
    let (fpr_static, fnr_static) =
        fpr_fnr(&guarded, &analysis.static_config, &missions, &attack_missions)?;

    let report = PipelineReport {
        firmware_id: firmware_id.clone(),
        functions: module.functions.len(),
        edges: analysis.edges,
        precision: analysis.precision,
        per_mode: mode_rows(&module, &analysis.static_config, &dynamic_cfg)?,
        missed_curve,
        attacks,
        benign_missions: missions.len(),
        fpr_dynamic,
        fnr_dynamic,
        fpr_static,
        fnr_static,
        dynamic_fallback_warnings: warnings,
    };
    write_artifact(
        out_dir,
        &format!("{firmware_id}.report.txt"),
        &report::render_pipeline_text(&report),
    )?;

    let success = fpr_dynamic == 0.0 && all_detected;
    Ok(PipelineOutcome { report, success })
}
