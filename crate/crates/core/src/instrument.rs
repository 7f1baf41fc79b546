//! Instrumentation passes.
//!
//! Two flavors, applied to a clean module (never stacked):
//!
//! - **Profiling** ([`instrument_profile`]): prepends a log trampoline to
//!   every non-switcher function and follows every `setmode` with a
//!   mode-entry trampoline. The interpreter uses the markers to attribute
//!   executed functions to the operating mode that was active when they ran.
//! - **Guarding** ([`instrument_guard`]): rewrites every indirect call into a
//!   monitored call and every return into a monitored return, again outside
//!   switchers. The runtime monitor checks monitored calls against the active
//!   mode's allowed set and monitored returns against a shadow stack.
//!
//! Mode switchers are trusted transition infrastructure: they are invoked
//! directly by the harness, make only direct calls, and are excluded from
//! logging and monitoring so they never appear in per-mode profiles.

use crate::ir::{
    validate, CallTarget, FirmwareModule, Instruction, InvalidModule,
};

/// Why an instrumentation pass refused to run.
#[derive(Debug, Clone, thiserror::Error)]
pub enum InstrumentError {
    #[error("module failed validation: {0}")]
    Invalid(#[from] InvalidModule),
    #[error("module declares no mode switcher; nothing can enter a mode")]
    NoSwitcher,
    #[error("module is already instrumented")]
    AlreadyInstrumented,
}

fn check_clean(module: &FirmwareModule) -> Result<(), InstrumentError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InstrumentError::Invalid(InvalidModule(diags)));
    }
    if module.mode_switchers.is_empty() {
        return Err(InstrumentError::NoSwitcher);
    }
    if module.is_instrumented() {
        return Err(InstrumentError::AlreadyInstrumented);
    }
    Ok(())
}

/// The output of a pass must still validate; a failure here is a bug in the
/// pass, not in the input.
fn assert_valid(module: &FirmwareModule, pass: &str) {
    let diags = validate(module);
    assert!(
        diags.is_empty(),
        "{pass} produced an invalid module: {diags:?}"
    );
}

/// Add profiling markers: a log trampoline first in every non-switcher
/// function, and a mode-entry trampoline after every `setmode`.
pub fn instrument_profile(module: &FirmwareModule) -> Result<FirmwareModule, InstrumentError> {
    check_clean(module)?;
    let mut out = module.clone();
    for func in out.functions.values_mut() {
        if func.is_mode_switcher {
            let mut body = Vec::with_capacity(func.body.len() * 2);
            for instr in func.body.drain(..) {
                let mode_var = match &instr {
                    Instruction::SetMode { mode_var } => Some(mode_var.clone()),
                    _ => None,
                };
                body.push(instr);
                if let Some(mode_var) = mode_var {
                    body.push(Instruction::TrampolineModeEntry {
                        cur: mode_var.clone(),
                        new: mode_var,
                    });
                }
            }
            func.body = body;
        } else {
            let mut body = Vec::with_capacity(func.body.len() + 1);
            body.push(Instruction::TrampolineLogFn {
                func: func.name.clone(),
            });
            body.append(&mut func.body);
            func.body = body;
        }
    }
    assert_valid(&out, "profiling pass");
    Ok(out)
}

/// Add enforcement markers: every indirect call becomes a monitored call and
/// every return becomes a monitored return, outside switchers.
pub fn instrument_guard(module: &FirmwareModule) -> Result<FirmwareModule, InstrumentError> {
    check_clean(module)?;
    let mut out = module.clone();
    for func in out.functions.values_mut() {
        if func.is_mode_switcher {
            continue;
        }
        func.body = func
            .body
            .drain(..)
            .map(|instr| match instr {
                Instruction::CallIndirect {
                    ref_var,
                    args,
                    dst,
                    declared,
                } => Instruction::MonitoredCall {
                    target: CallTarget::Ref(ref_var),
                    args,
                    dst,
                    declared,
                },
                Instruction::Return { value } => Instruction::MonitoredReturn { value },
                other => other,
            })
            .collect();
    }
    assert_valid(&out, "guard pass");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_firmware, FuncName};

    const BASE: &str = "\
modes ALPHA, BETA
modeid 1 ALPHA
modeid 2 BETA
entry main
switcher flip

record Box { hook: fnref(int) -> void }
global %bx : Box

fn main(%x: int) -> void {
  %a = addrof handler
  %bx.hook = %a
  %h = %bx.hook
  icall %h(%x) : (int) -> void
  ret
}

fn handler(%v: int) -> void {
  effect run(%v)
  ret
}

fn flip(%a: int, %b: int) -> void {
  ifgoto %a Lalpha
  ifgoto %b Lbeta
  ret
  label Lalpha
  %m = const 1
  setmode %m
  ret
  label Lbeta
  %n = const 2
  setmode %n
  ret
}
";

    #[test]
    fn profile_adds_log_and_mode_entry_markers() {
        let module = parse_firmware(BASE).unwrap();
        let out = instrument_profile(&module).unwrap();
        for (name, func) in &out.functions {
            if func.is_mode_switcher {
                continue;
            }
            assert!(
                matches!(&func.body[0], Instruction::TrampolineLogFn { func } if func == name),
                "{name} does not start with its log trampoline"
            );
        }
        let flip = &out.functions[&FuncName::new("flip")];
        let mode_entries = flip
            .body
            .iter()
            .filter(|i| matches!(i, Instruction::TrampolineModeEntry { .. }))
            .count();
        assert_eq!(mode_entries, 2, "one marker per setmode");
        let setmode_positions: Vec<usize> = flip
            .body
            .iter()
            .enumerate()
            .filter(|(_, i)| matches!(i, Instruction::SetMode { .. }))
            .map(|(idx, _)| idx)
            .collect();
        for idx in setmode_positions {
            assert!(matches!(
                flip.body[idx + 1],
                Instruction::TrampolineModeEntry { .. }
            ));
        }
        assert!(!flip
            .body
            .iter()
            .any(|i| matches!(i, Instruction::TrampolineLogFn { .. })));
    }

    #[test]
    fn guard_rewrites_indirect_calls_and_returns() {
        let module = parse_firmware(BASE).unwrap();
        let out = instrument_guard(&module).unwrap();
        let main = &out.functions[&FuncName::new("main")];
        assert!(main
            .body
            .iter()
            .any(|i| matches!(i, Instruction::MonitoredCall { .. })));
        assert!(!main
            .body
            .iter()
            .any(|i| matches!(i, Instruction::CallIndirect { .. })));
        assert!(!main
            .body
            .iter()
            .any(|i| matches!(i, Instruction::Return { .. })));
        let flip = &out.functions[&FuncName::new("flip")];
        assert!(
            flip.body.iter().all(|i| !i.is_instrumentation()),
            "switchers stay untouched"
        );
    }

    #[test]
    fn guard_preserves_call_payload() {
        let module = parse_firmware(BASE).unwrap();
        let out = instrument_guard(&module).unwrap();
        let main = &out.functions[&FuncName::new("main")];
        let mcall = main
            .body
            .iter()
            .find_map(|i| match i {
                Instruction::MonitoredCall {
                    target: CallTarget::Ref(r),
                    args,
                    declared,
                    ..
                } => Some((r.clone(), args.clone(), declared.clone())),
                _ => None,
            })
            .expect("monitored call present");
        assert_eq!(mcall.0.as_str(), "h");
        assert_eq!(mcall.1.len(), 1);
        assert_eq!(mcall.2.params.len(), 1);
    }

    #[test]
    fn passes_refuse_instrumented_input() {
        let module = parse_firmware(BASE).unwrap();
        let profiled = instrument_profile(&module).unwrap();
        assert!(matches!(
            instrument_profile(&profiled),
            Err(InstrumentError::AlreadyInstrumented)
        ));
        assert!(matches!(
            instrument_guard(&profiled),
            Err(InstrumentError::AlreadyInstrumented)
        ));
        let guarded = instrument_guard(&module).unwrap();
        assert!(matches!(
            instrument_profile(&guarded),
            Err(InstrumentError::AlreadyInstrumented)
        ));
    }

    #[test]
    fn passes_require_a_switcher() {
        let text = "\
modes ALPHA
entry main

fn main(%x: int) -> void {
  ret
}
";
        let module = parse_firmware(text).unwrap();
        assert!(matches!(
            instrument_profile(&module),
            Err(InstrumentError::NoSwitcher)
        ));
        assert!(matches!(
            instrument_guard(&module),
            Err(InstrumentError::NoSwitcher)
        ));
    }

    #[test]
    fn instrumented_modules_round_trip_through_text() {
        let module = parse_firmware(BASE).unwrap();
        for out in [
            instrument_profile(&module).unwrap(),
            instrument_guard(&module).unwrap(),
        ] {
            let text = crate::ir::serialize_firmware(&out).unwrap();
            let reparsed = parse_firmware(&text).unwrap();
            assert_eq!(out, reparsed);
        }
    }
}
