//! Canned control-flow-hijack scenarios.
//!
//! Each scenario redirects one indirect call onto a sensitive function while
//! the vehicle is in a mode whose allowed set should exclude it: `a1` turns
//! the scheduler dispatch into a motor-disarm call mid-flight, `a2` forces
//! the throttle output to minimum, and `a3` reuses the final disarm step
//! directly. The scenario binds to the first of its preferred modes the
//! firmware declares, and the forbidden observable is the effect set of the
//! target's direct-call cone.

use std::collections::BTreeSet;

use modeguard_core::ir::{FirmwareModule, FuncName, Instruction};
use modeguard_core::modeanalysis::ModeConfig;
use modeguard_core::runtime::{
    run_mission, MissionScript, MissionStep, MonitorMode, RunConfig, RunReport, ViolationKind,
};

use crate::CliError;

pub const SCENARIO_IDS: [&str; 3] = ["a1", "a2", "a3"];

struct ScenarioSpec {
    id: &'static str,
    target: &'static str,
    preferred_modes: &'static [&'static str],
}

const SPECS: [ScenarioSpec; 3] = [
    ScenarioSpec {
        id: "a1",
        target: "disarm_motors",
        preferred_modes: &["GUIDED"],
    },
    ScenarioSpec {
        id: "a2",
        target: "output_min",
        preferred_modes: &["GUIDED"],
    },
    ScenarioSpec {
        id: "a3",
        target: "disarm",
        preferred_modes: &["MANUAL", "GUIDED"],
    },
];

/// A scenario bound to a concrete firmware.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    pub scenario: String,
    pub target: FuncName,
    pub mode: String,
    pub mission: MissionScript,
    /// Effects that must never fire once the attack is blocked.
    pub forbidden_effects: BTreeSet<String>,
}

/// How one run of the scenario went.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub detected: bool,
    pub fail_safe: bool,
    pub violations: usize,
    pub forbidden_effect_fired: bool,
    pub report: RunReport,
}

/// Why a scenario cannot run on this firmware.
#[derive(Debug, Clone)]
pub struct Inapplicable(pub String);

/// Effect names reachable from `root` through direct calls only — the
/// observable footprint of executing the target legitimately or otherwise.
fn effect_cone(module: &FirmwareModule, root: &FuncName) -> BTreeSet<String> {
    let mut effects = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(name) = stack.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        let Some(func) = module.functions.get(&name) else {
            continue;
        };
        for instr in &func.body {
            match instr {
                Instruction::Effect { name, .. } => {
                    effects.insert(name.clone());
                }
                Instruction::CallDirect { callee, .. } => stack.push(callee.clone()),
                _ => {}
            }
        }
    }
    effects
}

/// Bind a scenario to a firmware, or explain why it does not apply.
pub fn plan(module: &FirmwareModule, scenario: &str) -> Result<Result<AttackPlan, Inapplicable>, CliError> {
    let spec = SPECS
        .iter()
        .find(|s| s.id == scenario)
        .ok_or_else(|| CliError::Usage(format!("unknown attack scenario '{scenario}'")))?;
    let target = FuncName::new(spec.target);
    if !module.functions.contains_key(&target) {
        return Ok(Err(Inapplicable(format!(
            "firmware has no function '{}'",
            spec.target
        ))));
    }
    let Some(mode) = spec
        .preferred_modes
        .iter()
        .find(|m| module.mode_names.iter().any(|n| n == *m))
    else {
        return Ok(Err(Inapplicable(format!(
            "firmware declares none of the modes {:?}",
            spec.preferred_modes
        ))));
    };

    // Fly one ordinary iteration, then retarget the scheduler dispatch —
    // the second indirect transfer of the next iteration — onto the target.
    let mut steps = vec![MissionStep::SetMode(mode.to_string())];
    if let Some((first_param, _)) = module.functions[&module.entry].params.first() {
        steps.push(MissionStep::Input {
            register: first_param.as_str().to_string(),
            value: 1,
        });
    }
    steps.extend([
        MissionStep::Wait(1),
        MissionStep::InjectHijack {
            target: target.clone(),
            at_call_index: 1,
        },
        MissionStep::Wait(2),
    ]);

    Ok(Ok(AttackPlan {
        scenario: spec.id.to_string(),
        target: target.clone(),
        mode: mode.to_string(),
        mission: MissionScript {
            name: format!("{}_{}", spec.id, spec.target),
            steps,
        },
        forbidden_effects: effect_cone(module, &target),
    }))
}

impl AttackPlan {
    fn outcome(&self, report: RunReport) -> AttackOutcome {
        let forbidden_effect_fired = report
            .effects
            .iter()
            .any(|e| self.forbidden_effects.contains(&e.name));
        let detected = report.fail_safe
            && report.violations.len() == 1
            && report.violations[0].kind == ViolationKind::DisallowedIndirectTarget
            && report.violations[0].function == self.target
            && !forbidden_effect_fired;
        AttackOutcome {
            detected,
            fail_safe: report.fail_safe,
            violations: report.violations.len(),
            forbidden_effect_fired,
            report,
        }
    }

    /// Run against an unprotected module (monitor off) to show the attack
    /// landing.
    pub fn run_baseline(&self, module: &FirmwareModule, firmware_id: &str) -> Result<AttackOutcome, CliError> {
        let config = RunConfig {
            firmware_id: firmware_id.to_string(),
            ..RunConfig::default()
        };
        Ok(self.outcome(run_mission(module, &self.mission, &config)?))
    }

    /// Run against a guard-instrumented module under enforcement.
    pub fn run_enforced(
        &self,
        guarded: &FirmwareModule,
        mode_config: &ModeConfig,
    ) -> Result<AttackOutcome, CliError> {
        let config = RunConfig {
            firmware_id: mode_config.firmware_id.clone(),
            monitor: MonitorMode::Enforce,
            mode_config: Some(mode_config.clone()),
            ..RunConfig::default()
        };
        Ok(self.outcome(run_mission(guarded, &self.mission, &config)?))
    }
}
