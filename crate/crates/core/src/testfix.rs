//! Shared in-crate test fixture: a compact three-mode module with an
//! installable task pointer, plus helpers for instrumented variants and
//! hand-built configs.

use std::collections::{BTreeMap, BTreeSet};

use crate::instrument::{instrument_guard, instrument_profile};
use crate::ir::{parse_firmware, FirmwareModule, FuncName, INIT_MODE};
use crate::modeanalysis::{ModeConfig, ModeRow, Provenance};
use crate::runtime::{parse_mission, MissionScript};

pub const DEMO: &str = r#"
modes ALPHA, BETA, FAILSAFE
modeid 1 ALPHA
modeid 2 BETA
modeid 3 FAILSAFE
entry tick
switcher flip

record Ctl { task: fnref(int) -> void, booted: int }
global %ctl : Ctl

fn tick(%x: int) -> void {
  %b = %ctl.booted
  ifgoto %b Lrun
  effect idle()
  ret
label Lrun
  %t = %ctl.task
  icall %t(%x) : (int) -> void
  ret
}

fn flip(%a: int, %b: int, %f: int) -> void {
  ifgoto %a La
  ifgoto %b Lb
  ifgoto %f Lf
  ret
label La
  %m = const 1
  setmode %m
  call alpha_init()
  ret
label Lb
  %m = const 2
  setmode %m
  call beta_init()
  ret
label Lf
  %m = const 3
  setmode %m
  call failsafe_init()
  ret
}

fn alpha_init() -> void {
  %h = addrof alpha_task
  %ctl.task = %h
  %one = const 1
  %ctl.booted = %one
  ret
}

fn beta_init() -> void {
  %h = addrof beta_task
  %ctl.task = %h
  %one = const 1
  %ctl.booted = %one
  ret
}

fn failsafe_init() -> void {
  effect safe_hold()
  %h = addrof failsafe_task
  %ctl.task = %h
  %one = const 1
  %ctl.booted = %one
  ret
}

fn alpha_task(%x: int) -> void {
  %me = addrof alpha_task
  %ctl.task = %me
  effect alpha_work(%x)
  ret
}

fn beta_task(%x: int) -> void {
  %me = addrof beta_task
  %ctl.task = %me
  effect beta_work(%x)
  ret
}

fn failsafe_task(%x: int) -> void {
  %me = addrof failsafe_task
  %ctl.task = %me
  effect safe_work(%x)
  ret
}

fn rogue(%x: int) -> void {
  effect rogue_cut(%x)
  ret
}
"#;

pub fn demo() -> FirmwareModule {
    parse_firmware(DEMO).expect("fixture parses")
}

pub fn demo_guarded() -> FirmwareModule {
    instrument_guard(&demo()).expect("fixture guards")
}

pub fn demo_profiled() -> FirmwareModule {
    instrument_profile(&demo()).expect("fixture profiles")
}

pub fn mission(text: &str) -> MissionScript {
    parse_mission(text).expect("fixture mission parses")
}

/// A config whose every row (each declared mode plus `INIT`) allows all of
/// the module's functions except the listed ones.
pub fn config_without(module: &FirmwareModule, banned: &[&str]) -> ModeConfig {
    let functions: BTreeSet<FuncName> = module
        .functions
        .keys()
        .filter(|f| !banned.contains(&f.as_str()))
        .cloned()
        .collect();
    let mut rows = BTreeMap::new();
    for mode in std::iter::once(&INIT_MODE.to_string()).chain(module.mode_names.iter()) {
        rows.insert(
            mode.clone(),
            ModeRow {
                functions: functions.clone(),
                fallback: false,
            },
        );
    }
    ModeConfig {
        firmware_id: "demo".to_string(),
        provenance: Provenance::Static,
        rows,
    }
}

pub fn permissive_config(module: &FirmwareModule) -> ModeConfig {
    config_without(module, &[])
}
