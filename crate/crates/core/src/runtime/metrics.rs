//! Detection-quality metrics over recorded runs.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{FirmwareModule, FuncName};
use crate::modeanalysis::ModeConfig;
use crate::runtime::interp::{run_mission, MonitorMode, RunConfig, RunReport, RuntimeError};
use crate::runtime::mission::MissionScript;

/// Count the distinct `(mode, function)` pairs that executed in the given
/// runs but are missing from the config's row for that mode — the executions
/// enforcement would have blocked. Zero means the config covers everything
/// the runs exercised.
pub fn missed_functions(config: &ModeConfig, reports: &[RunReport]) -> usize {
    let mut observed: BTreeMap<&String, BTreeSet<&FuncName>> = BTreeMap::new();
    for report in reports {
        for (mode, funcs) in &report.per_mode_executed {
            observed.entry(mode).or_default().extend(funcs.iter());
        }
    }
    observed
        .iter()
        .map(|(mode, funcs)| match config.allowed(mode) {
            Some(allowed) => funcs.iter().filter(|f| !allowed.contains(**f)).count(),
            None => funcs.len(),
        })
        .sum()
}

/// Run every mission under enforcement and measure detection quality:
/// the false-positive rate is the fraction of benign missions that tripped
/// the monitor, the false-negative rate the fraction of attack missions that
/// did not. An empty mission slice contributes a rate of zero.
pub fn fpr_fnr(
    module: &FirmwareModule,
    config: &ModeConfig,
    benign: &[MissionScript],
    attacks: &[MissionScript],
) -> Result<(f64, f64), RuntimeError> {
    let run_config = RunConfig {
        firmware_id: config.firmware_id.clone(),
        monitor: MonitorMode::Enforce,
        mode_config: Some(config.clone()),
        ..RunConfig::default()
    };
    let tripped = |mission: &MissionScript| -> Result<bool, RuntimeError> {
        let report = run_mission(module, mission, &run_config)?;
        Ok(report.fail_safe || !report.violations.is_empty())
    };
    let mut false_positives = 0usize;
    for mission in benign {
        if tripped(mission)? {
            false_positives += 1;
        }
    }
    let mut false_negatives = 0usize;
    for mission in attacks {
        if !tripped(mission)? {
            false_negatives += 1;
        }
    }
    let rate = |count: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        }
    };
    Ok((
        rate(false_positives, benign.len()),
        rate(false_negatives, attacks.len()),
    ))
}
