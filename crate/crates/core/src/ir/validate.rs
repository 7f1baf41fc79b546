//! Module-level invariant checking.
//!
//! The IR is deliberately weakly typed: assignments, field stores, and call
//! arguments are *not* checked for type agreement. The validator enforces only
//! the structural invariants below, which is exactly what leaves room for
//! spurious indirect-call candidates that the call-graph pruning passes then
//! remove:
//!
//! - every used variable is a parameter or a local of the enclosing function
//! - every control path ends in a return, and return values match the
//!   function's return type (present iff non-void)
//! - goto/ifgoto targets name labels that exist; labels are unique
//! - addrof and direct-call targets name functions that exist
//! - direct calls pass the callee's arity
//! - indirect calls go through a fnref-typed variable whose signature equals
//!   the declared signature, with matching arity
//! - ifgoto conditions are int or bool; setmode operands are int
//! - parameters and locals are scalar (no records, no void); entry parameters
//!   are int so the harness can drive them from input registers
//! - fnref return types nest at most two deep
//! - record fields are unique and scalar; globals name declared records;
//!   field accesses resolve
//! - mode names are unique uppercase identifiers, never the reserved boot
//!   mode; mode ids biject with mode names
//! - the entry function exists and is not a mode switcher
//! - setmode appears in mode switchers and only there; declared switchers
//!   exist
//! - instrumentation markers are placed correctly: mode-entry trampolines
//!   only inside switchers, at most one log trampoline per function and only
//!   as the first instruction, monitored calls/returns never inside switchers

use std::collections::BTreeSet;

use super::{
    CallTarget, Diagnostic, DiagnosticKind, FirmwareModule, FunctionDef, Instruction, TypeDesc,
    Var, INIT_MODE,
};

const MAX_FUNC_REF_RETURN_DEPTH: usize = 2;

fn inv(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(0, 0, DiagnosticKind::Invariant, msg)
}

fn res(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(0, 0, DiagnosticKind::Resolution, msg)
}

fn terr(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(0, 0, DiagnosticKind::Type, msg)
}

fn is_mode_name(name: &str) -> bool {
    !name.is_empty()
        && name.chars().next().unwrap().is_ascii_uppercase()
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Check every module invariant; an empty result means the module is valid.
pub fn validate(module: &FirmwareModule) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    check_modes(module, &mut diags);
    check_records_and_globals(module, &mut diags);
    check_entry_and_switchers(module, &mut diags);
    for func in module.functions.values() {
        check_function(module, func, &mut diags);
    }
    diags
}

fn check_modes(module: &FirmwareModule, diags: &mut Vec<Diagnostic>) {
    if module.mode_names.is_empty() {
        diags.push(inv("module declares no modes"));
    }
    let mut seen = BTreeSet::new();
    for name in &module.mode_names {
        if !is_mode_name(name) {
            diags.push(inv(format!(
                "mode name '{name}' must be an uppercase identifier"
            )));
        }
        if name == INIT_MODE {
            diags.push(inv(format!(
                "mode name '{INIT_MODE}' is reserved for the boot mode"
            )));
        }
        if !seen.insert(name.clone()) {
            diags.push(inv(format!("duplicate mode name '{name}'")));
        }
    }
    for (id, name) in &module.mode_ids {
        if !module.mode_names.contains(name) {
            diags.push(res(format!("mode id {id} names undeclared mode '{name}'")));
        }
    }
    for name in &module.mode_names {
        let count = module.mode_ids.values().filter(|n| *n == name).count();
        if count != 1 {
            diags.push(inv(format!(
                "mode '{name}' must have exactly one id, found {count}"
            )));
        }
    }
}

fn check_records_and_globals(module: &FirmwareModule, diags: &mut Vec<Diagnostic>) {
    for (name, rec) in &module.records {
        if name != &rec.name {
            diags.push(inv(format!(
                "record registered as '{name}' but named '{}'",
                rec.name
            )));
        }
        let mut seen = BTreeSet::new();
        for (fname, fty) in &rec.fields {
            if !seen.insert(fname.clone()) {
                diags.push(inv(format!("duplicate field '{fname}' in record '{name}'")));
            }
            match fty {
                TypeDesc::Void => {
                    diags.push(terr(format!(
                        "field '{fname}' of record '{name}' cannot be void"
                    )));
                }
                TypeDesc::Record(_) => {
                    diags.push(terr(format!(
                        "field '{fname}' of record '{name}' cannot be a record"
                    )));
                }
                _ => {}
            }
            if fty.func_ref_return_depth() > MAX_FUNC_REF_RETURN_DEPTH {
                diags.push(terr(format!(
                    "field '{fname}' of record '{name}' nests fnref returns too deeply"
                )));
            }
        }
    }
    for (gname, rec_name) in &module.globals {
        if !module.records.contains_key(rec_name) {
            diags.push(res(format!(
                "global '%{gname}' names unknown record '{rec_name}'"
            )));
        }
    }
}

fn check_entry_and_switchers(module: &FirmwareModule, diags: &mut Vec<Diagnostic>) {
    match module.functions.get(&module.entry) {
        None => diags.push(res(format!(
            "entry function '{}' is not defined",
            module.entry
        ))),
        Some(entry) => {
            if module.mode_switchers.contains(&module.entry) {
                diags.push(inv(format!(
                    "entry function '{}' cannot be a mode switcher",
                    module.entry
                )));
            }
            for (pvar, pty) in &entry.params {
                if *pty != TypeDesc::Int {
                    diags.push(terr(format!(
                        "entry parameter '{pvar}' must be int so it can be driven from input registers, got {pty}"
                    )));
                }
            }
        }
    }
    for name in &module.mode_switchers {
        if !module.functions.contains_key(name) {
            diags.push(res(format!("mode switcher '{name}' is not defined")));
        }
    }
    for func in module.functions.values() {
        let declared = module.mode_switchers.contains(&func.name);
        if func.is_mode_switcher != declared {
            diags.push(inv(format!(
                "function '{}' switcher flag disagrees with the module switcher set",
                func.name
            )));
        }
        let has_setmode = func
            .body
            .iter()
            .any(|i| matches!(i, Instruction::SetMode { .. }));
        if declared && !has_setmode {
            diags.push(inv(format!(
                "mode switcher '{}' never executes setmode",
                func.name
            )));
        }
        if !declared && has_setmode {
            diags.push(inv(format!(
                "function '{}' executes setmode but is not a declared mode switcher",
                func.name
            )));
        }
    }
}

fn check_function(module: &FirmwareModule, func: &FunctionDef, diags: &mut Vec<Diagnostic>) {
    let fname = &func.name;

    for (pvar, pty) in &func.params {
        check_scalar(pty, &format!("parameter '{pvar}' of '{fname}'"), diags);
        if func.locals.contains_key(pvar) {
            diags.push(inv(format!(
                "'{pvar}' of '{fname}' is both a parameter and a local"
            )));
        }
    }
    let mut param_seen = BTreeSet::new();
    for (pvar, _) in &func.params {
        if !param_seen.insert(pvar.clone()) {
            diags.push(inv(format!("duplicate parameter '{pvar}' of '{fname}'")));
        }
    }
    for (lvar, lty) in &func.locals {
        check_scalar(lty, &format!("local '{lvar}' of '{fname}'"), diags);
    }
    if func.return_type == TypeDesc::Void {
        // fine
    } else {
        check_scalar(&func.return_type, &format!("return type of '{fname}'"), diags);
    }

    // Labels.
    let mut labels = BTreeSet::new();
    for instr in &func.body {
        if let Instruction::Label { name } = instr {
            if !labels.insert(name.clone()) {
                diags.push(inv(format!("duplicate label '{name}' in '{fname}'")));
            }
        }
    }
    let check_label = |label: &str, diags: &mut Vec<Diagnostic>| {
        if !labels.contains(label) {
            diags.push(res(format!(
                "jump to unknown label '{label}' in '{fname}'"
            )));
        }
    };

    let check_var = |v: &Var, diags: &mut Vec<Diagnostic>| {
        if func.var_type(v).is_none() {
            diags.push(res(format!(
                "variable '{v}' in '{fname}' is neither a parameter nor a local"
            )));
        }
    };

    let is_switcher = func.is_mode_switcher;
    for (idx, instr) in func.body.iter().enumerate() {
        match instr {
            Instruction::ConstInt { dst, .. } => check_var(dst, diags),
            Instruction::Assign { dst, src } => {
                check_var(dst, diags);
                check_var(src, diags);
            }
            Instruction::AddrOf { dst, func: target } => {
                check_var(dst, diags);
                if !module.functions.contains_key(target) {
                    diags.push(res(format!(
                        "addrof of unknown function '{target}' in '{fname}'"
                    )));
                }
            }
            Instruction::FieldStore { global, field, src } => {
                check_var(src, diags);
                check_field_access(module, fname, global, field, diags);
            }
            Instruction::FieldLoad { dst, global, field } => {
                check_var(dst, diags);
                check_field_access(module, fname, global, field, diags);
            }
            Instruction::CallDirect { callee, args, dst } => {
                for a in args {
                    check_var(a, diags);
                }
                if let Some(d) = dst {
                    check_var(d, diags);
                }
                match module.functions.get(callee) {
                    None => diags.push(res(format!(
                        "call to unknown function '{callee}' in '{fname}'"
                    ))),
                    Some(target) => {
                        if target.params.len() != args.len() {
                            diags.push(terr(format!(
                                "call to '{callee}' in '{fname}' passes {} args, expected {}",
                                args.len(),
                                target.params.len()
                            )));
                        }
                        if dst.is_some() && target.return_type == TypeDesc::Void {
                            diags.push(terr(format!(
                                "void call to '{callee}' in '{fname}' cannot bind a result"
                            )));
                        }
                    }
                }
            }
            Instruction::CallIndirect {
                ref_var,
                args,
                dst,
                declared,
            } => {
                for a in args {
                    check_var(a, diags);
                }
                if let Some(d) = dst {
                    check_var(d, diags);
                }
                check_var(ref_var, diags);
                check_indirect_sig(func, ref_var, declared, args.len(), dst.is_some(), diags);
            }
            Instruction::MonitoredCall {
                target,
                args,
                dst,
                declared,
            } => {
                if is_switcher {
                    diags.push(inv(format!(
                        "monitored call inside mode switcher '{fname}'"
                    )));
                }
                for a in args {
                    check_var(a, diags);
                }
                if let Some(d) = dst {
                    check_var(d, diags);
                }
                match target {
                    CallTarget::Ref(ref_var) => {
                        check_var(ref_var, diags);
                        check_indirect_sig(
                            func,
                            ref_var,
                            declared,
                            args.len(),
                            dst.is_some(),
                            diags,
                        );
                    }
                    CallTarget::Direct(callee) => match module.functions.get(callee) {
                        None => diags.push(res(format!(
                            "monitored call to unknown function '{callee}' in '{fname}'"
                        ))),
                        Some(target_fn) => {
                            if target_fn.signature() != *declared {
                                diags.push(terr(format!(
                                    "monitored call to '{callee}' in '{fname}' declares {declared} but the function has {}",
                                    target_fn.signature()
                                )));
                            }
                        }
                    },
                }
            }
            Instruction::Return { value } | Instruction::MonitoredReturn { value } => {
                if matches!(instr, Instruction::MonitoredReturn { .. }) && is_switcher {
                    diags.push(inv(format!(
                        "monitored return inside mode switcher '{fname}'"
                    )));
                }
                if let Some(v) = value {
                    check_var(v, diags);
                }
                match (&func.return_type, value) {
                    (TypeDesc::Void, Some(_)) => diags.push(terr(format!(
                        "'{fname}' returns void but a return carries a value"
                    ))),
                    (TypeDesc::Void, None) => {}
                    (_, None) => diags.push(terr(format!(
                        "'{fname}' returns {} but a return carries no value",
                        func.return_type
                    ))),
                    (_, Some(_)) => {}
                }
            }
            Instruction::SetMode { mode_var } => {
                check_var(mode_var, diags);
                if let Some(ty) = func.var_type(mode_var) {
                    if *ty != TypeDesc::Int {
                        diags.push(terr(format!(
                            "setmode operand '{mode_var}' in '{fname}' must be int, got {ty}"
                        )));
                    }
                }
            }
            Instruction::Effect { args, .. } => {
                for a in args {
                    check_var(a, diags);
                }
            }
            Instruction::CondGoto { cond, label } => {
                check_var(cond, diags);
                check_label(label, diags);
                if let Some(ty) = func.var_type(cond) {
                    if *ty != TypeDesc::Int && *ty != TypeDesc::Bool {
                        diags.push(terr(format!(
                            "ifgoto condition '{cond}' in '{fname}' must be int or bool, got {ty}"
                        )));
                    }
                }
            }
            Instruction::Goto { label } => check_label(label, diags),
            Instruction::Label { .. } => {}
            Instruction::TrampolineModeEntry { cur, new } => {
                check_var(cur, diags);
                check_var(new, diags);
                if !is_switcher {
                    diags.push(inv(format!(
                        "mode-entry trampoline outside mode switcher, in '{fname}'"
                    )));
                }
            }
            Instruction::TrampolineLogFn { func: target } => {
                if idx != 0 {
                    diags.push(inv(format!(
                        "log trampoline in '{fname}' must be the first instruction"
                    )));
                }
                if *target != func.name {
                    diags.push(inv(format!(
                        "log trampoline in '{fname}' names '{target}'"
                    )));
                }
            }
        }
    }
    let log_count = func
        .body
        .iter()
        .filter(|i| matches!(i, Instruction::TrampolineLogFn { .. }))
        .count();
    if log_count > 1 {
        diags.push(inv(format!(
            "function '{fname}' has {log_count} log trampolines, at most one is allowed"
        )));
    }

    check_termination(func, &labels, diags);
}

fn check_scalar(ty: &TypeDesc, what: &str, diags: &mut Vec<Diagnostic>) {
    match ty {
        TypeDesc::Void => diags.push(terr(format!("{what} cannot be void"))),
        TypeDesc::Record(_) => diags.push(terr(format!("{what} cannot be a record"))),
        _ => {}
    }
    if ty.func_ref_return_depth() > MAX_FUNC_REF_RETURN_DEPTH {
        diags.push(terr(format!("{what} nests fnref returns too deeply")));
    }
}

fn check_field_access(
    module: &FirmwareModule,
    fname: &super::FuncName,
    global: &str,
    field: &str,
    diags: &mut Vec<Diagnostic>,
) {
    match module.global_record(global) {
        None => diags.push(res(format!("unknown global '%{global}' in '{fname}'"))),
        Some(rec) => {
            if rec.field_type(field).is_none() {
                diags.push(res(format!(
                    "record '{}' has no field '{field}' (accessed in '{fname}')",
                    rec.name
                )));
            }
        }
    }
}

fn check_indirect_sig(
    func: &FunctionDef,
    ref_var: &Var,
    declared: &super::Signature,
    arg_count: usize,
    has_dst: bool,
    diags: &mut Vec<Diagnostic>,
) {
    let fname = &func.name;
    if declared.params.len() != arg_count {
        diags.push(terr(format!(
            "indirect call in '{fname}' passes {arg_count} args but declares {} params",
            declared.params.len()
        )));
    }
    if has_dst && declared.return_type == TypeDesc::Void {
        diags.push(terr(format!(
            "void indirect call in '{fname}' cannot bind a result"
        )));
    }
    match func.var_type(ref_var) {
        Some(TypeDesc::FuncRef(sig)) => {
            if **sig != *declared {
                diags.push(terr(format!(
                    "indirect call in '{fname}' declares {declared} but '{ref_var}' has type fnref{sig}"
                )));
            }
        }
        Some(other) => diags.push(terr(format!(
            "indirect call in '{fname}' through '{ref_var}' of non-fnref type {other}"
        ))),
        None => {} // unknown-variable diagnostic already emitted
    }
}

/// Every control path must end in a return. Successors: returns have none,
/// goto jumps, ifgoto jumps or falls through, everything else falls through.
/// Falling past the last instruction is a violation, as is an empty body.
fn check_termination(func: &FunctionDef, labels: &BTreeSet<String>, diags: &mut Vec<Diagnostic>) {
    let fname = &func.name;
    if func.body.is_empty() {
        diags.push(inv(format!("function '{fname}' has an empty body")));
        return;
    }
    let label_index: std::collections::BTreeMap<&str, usize> = func
        .body
        .iter()
        .enumerate()
        .filter_map(|(i, instr)| match instr {
            Instruction::Label { name } => Some((name.as_str(), i)),
            _ => None,
        })
        .collect();

    let mut visited = vec![false; func.body.len()];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        if i >= func.body.len() {
            diags.push(inv(format!(
                "control can fall off the end of '{fname}' without returning"
            )));
            continue;
        }
        if visited[i] {
            continue;
        }
        visited[i] = true;
        match &func.body[i] {
            Instruction::Return { .. } | Instruction::MonitoredReturn { .. } => {}
            Instruction::Goto { label } => {
                if let Some(&t) = label_index.get(label.as_str()) {
                    stack.push(t);
                }
                // unknown label already diagnosed
                let _ = labels;
            }
            Instruction::CondGoto { label, .. } => {
                if let Some(&t) = label_index.get(label.as_str()) {
                    stack.push(t);
                }
                stack.push(i + 1);
            }
            _ => stack.push(i + 1),
        }
    }
}
