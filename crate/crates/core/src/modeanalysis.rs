//! Per-mode allowed-function sets.
//!
//! A mode's allowed set answers: "which functions may legitimately run while
//! this mode is active?" Two derivations are supported:
//!
//! - **Static** ([`static_reachable`]): reachability over the pruned call
//!   graph from the always-on roots (by default the entry function) unioned
//!   with reachability from the mode's entry handlers. The boot pseudo-mode
//!   `INIT` gets the always-on roots alone.
//! - **Dynamic** ([`dynamic_config`]): exactly the functions observed running
//!   under each mode across profiling runs, unioned over runs. Modes never
//!   visited fall back to their static row (marked `fallback` in the config
//!   file) so enforcement still has an answer for them.
//!
//! Mode entry handlers are found two ways: statically, by tracing constant
//! mode ids into `setmode` and collecting the direct calls that follow it in
//! the same straight-line block ([`static_mode_entries`]); and from a recorded
//! run's trace ([`detect_mode_entries`]), which is used to cross-check the
//! static scan.
//!
//! Config files are plain text, emitted canonically so identical analyses
//! produce byte-identical files. Loading a config re-derives the analysis
//! internally and refuses configs whose `FAILSAFE` row would not cover the
//! fail-safe entry cone.

use std::collections::{BTreeMap, BTreeSet};

use crate::callgraph::{build_callgraph, prune_address_taken, prune_signature, CallGraph};
use crate::ir::{
    validate, CallTarget, FirmwareModule, FuncName, Instruction, InvalidModule, Var,
    FAILSAFE_MODE, INIT_MODE,
};
use crate::pointsto::solve_andersen;
use crate::runtime::RunReport;

/// Mode name → entry handler functions (the direct calls a switcher makes
/// right after `setmode`).
pub type ModeEntryMap = BTreeMap<String, BTreeSet<FuncName>>;

/// How a config's rows were derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Static,
    Dynamic,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Static => "static",
            Provenance::Dynamic => "dynamic",
        }
    }
}

/// One mode's allowed functions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModeRow {
    pub functions: BTreeSet<FuncName>,
    /// True when a dynamic config substituted the static row because the mode
    /// was never visited during profiling.
    pub fallback: bool,
}

/// A complete per-mode allowed-set configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeConfig {
    pub firmware_id: String,
    pub provenance: Provenance,
    /// Rows for every declared mode plus the boot pseudo-mode `INIT`.
    pub rows: BTreeMap<String, ModeRow>,
}

impl ModeConfig {
    pub fn allowed(&self, mode: &str) -> Option<&BTreeSet<FuncName>> {
        self.rows.get(mode).map(|r| &r.functions)
    }
}

/// Mode-analysis failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ModeAnalysisError {
    #[error("module failed validation: {0}")]
    Invalid(#[from] InvalidModule),
    #[error("setmode in '{0}' has an operand the constant tracer cannot resolve")]
    UntraceableSetMode(FuncName),
    #[error("setmode in '{func}' sets mode id {id}, which maps to no mode")]
    UnknownModeId { func: FuncName, id: i64 },
    #[error("trace references unknown function '{0}'")]
    UnknownFunction(FuncName),
    #[error("always-root '{0}' is not a function in the module")]
    UnknownRoot(FuncName),
    #[error("trace references unknown mode '{0}'")]
    UnknownMode(String),
    #[error("reduction is undefined for a module with no functions")]
    EmptyModule,
    #[error("allowed set ({allowed}) exceeds the function total ({total})")]
    AllowedExceedsTotal { total: usize, allowed: usize },
}

/// Find mode entry handlers by static scan: trace constants into `setmode`,
/// then collect the direct calls that follow it up to the next control
/// transfer (jump, branch, return, or another `setmode`).
pub fn static_mode_entries(module: &FirmwareModule) -> Result<ModeEntryMap, ModeAnalysisError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags).into());
    }
    let mut entries: ModeEntryMap = module
        .mode_names
        .iter()
        .map(|m| (m.clone(), BTreeSet::new()))
        .collect();
    for switcher in &module.mode_switchers {
        let func = &module.functions[switcher];
        // Straight-line constant tracking in program order: each dispatch arm
        // defines its constant id textually before its `setmode`, so the map
        // state at the `setmode` is the arm's id even when arms reuse a
        // variable name.
        let mut consts: BTreeMap<&Var, i64> = BTreeMap::new();
        for (idx, instr) in func.body.iter().enumerate() {
            match instr {
                Instruction::ConstInt { dst, value } => {
                    consts.insert(dst, *value);
                }
                Instruction::Assign { dst, src } => {
                    match consts.get(src).copied() {
                        Some(v) => consts.insert(dst, v),
                        None => consts.remove(dst),
                    };
                }
                Instruction::SetMode { mode_var } => {
                    let id = *consts
                        .get(mode_var)
                        .ok_or_else(|| ModeAnalysisError::UntraceableSetMode(switcher.clone()))?;
                    let mode = module
                        .mode_name_of(id)
                        .ok_or(ModeAnalysisError::UnknownModeId {
                            func: switcher.clone(),
                            id,
                        })?
                        .to_string();
                    // The arm's entry handlers: direct calls up to the next
                    // control transfer.
                    for later in &func.body[idx + 1..] {
                        match later {
                            Instruction::CallDirect { callee, .. }
                            | Instruction::MonitoredCall {
                                target: CallTarget::Direct(callee),
                                ..
                            } => {
                                entries
                                    .get_mut(&mode)
                                    .expect("declared mode")
                                    .insert(callee.clone());
                            }
                            Instruction::Goto { .. }
                            | Instruction::CondGoto { .. }
                            | Instruction::Return { .. }
                            | Instruction::MonitoredReturn { .. }
                            | Instruction::SetMode { .. } => break,
                            _ => {}
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(entries)
}

/// Recover mode entry handlers from a recorded run: every direct call a
/// switcher made after `setmode` is attributed to the mode that was just set.
/// Returns the map plus warnings for declared modes the run never entered.
pub fn detect_mode_entries(
    module: &FirmwareModule,
    report: &RunReport,
) -> Result<(ModeEntryMap, Vec<String>), ModeAnalysisError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags).into());
    }
    let mut entries: ModeEntryMap = BTreeMap::new();
    for (mode, callee) in &report.mode_entry_calls {
        if !module.mode_names.contains(mode) {
            return Err(ModeAnalysisError::UnknownMode(mode.clone()));
        }
        if !module.functions.contains_key(callee) {
            return Err(ModeAnalysisError::UnknownFunction(callee.clone()));
        }
        entries.entry(mode.clone()).or_default().insert(callee.clone());
    }
    let warnings: Vec<String> = module
        .mode_names
        .iter()
        .filter(|m| !entries.contains_key(*m))
        .map(|m| format!("mode {m} was never entered in the recorded run"))
        .collect();
    for mode in &module.mode_names {
        entries.entry(mode.clone()).or_default();
    }
    Ok((entries, warnings))
}

/// Build the static config: per mode, everything reachable from the always-on
/// roots plus the mode's entry handlers; for `INIT`, the roots alone.
pub fn static_reachable(
    firmware_id: &str,
    module: &FirmwareModule,
    graph: &CallGraph,
    entries: &ModeEntryMap,
    always_roots: &BTreeSet<FuncName>,
) -> Result<ModeConfig, ModeAnalysisError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags).into());
    }
    for root in always_roots {
        if !module.functions.contains_key(root) {
            return Err(ModeAnalysisError::UnknownRoot(root.clone()));
        }
    }
    let reach_from = |roots: &BTreeSet<FuncName>| -> BTreeSet<FuncName> {
        let mut out = BTreeSet::new();
        for root in roots {
            out.extend(graph.reachable_from(root));
        }
        out
    };
    let base = reach_from(always_roots);
    let mut rows: BTreeMap<String, ModeRow> = BTreeMap::new();
    rows.insert(
        INIT_MODE.to_string(),
        ModeRow {
            functions: base.clone(),
            fallback: false,
        },
    );
    for mode in &module.mode_names {
        let empty = BTreeSet::new();
        let mode_entries = entries.get(mode).unwrap_or(&empty);
        for entry in mode_entries {
            if !module.functions.contains_key(entry) {
                return Err(ModeAnalysisError::UnknownFunction(entry.clone()));
            }
        }
        let mut functions = base.clone();
        functions.extend(reach_from(mode_entries));
        rows.insert(
            mode.clone(),
            ModeRow {
                functions,
                fallback: false,
            },
        );
    }
    Ok(ModeConfig {
        firmware_id: firmware_id.to_string(),
        provenance: Provenance::Static,
        rows,
    })
}

/// Build the dynamic config from profiling runs: per mode, the union of
/// functions observed executing under that mode. Modes never visited fall
/// back to the static row (when provided) and are marked as such; without a
/// static config they get an empty row. Warnings describe every fallback.
pub fn dynamic_config(
    firmware_id: &str,
    module: &FirmwareModule,
    profiles: &[RunReport],
    static_config: Option<&ModeConfig>,
) -> Result<(ModeConfig, Vec<String>), ModeAnalysisError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags).into());
    }
    let mut observed: BTreeMap<String, BTreeSet<FuncName>> = BTreeMap::new();
    for report in profiles {
        for (mode, funcs) in &report.per_mode_executed {
            if mode != INIT_MODE && !module.mode_names.contains(mode) {
                return Err(ModeAnalysisError::UnknownMode(mode.clone()));
            }
            for func in funcs {
                if !module.functions.contains_key(func) {
                    return Err(ModeAnalysisError::UnknownFunction(func.clone()));
                }
            }
            observed
                .entry(mode.clone())
                .or_default()
                .extend(funcs.iter().cloned());
        }
    }
    let mut warnings = Vec::new();
    let mut rows: BTreeMap<String, ModeRow> = BTreeMap::new();
    let mut mode_names: Vec<String> = vec![INIT_MODE.to_string()];
    mode_names.extend(module.mode_names.iter().cloned());
    for mode in mode_names {
        match observed.get(&mode) {
            Some(funcs) if !funcs.is_empty() => {
                rows.insert(
                    mode,
                    ModeRow {
                        functions: funcs.clone(),
                        fallback: false,
                    },
                );
            }
            _ => {
                let functions = static_config
                    .and_then(|sc| sc.allowed(&mode))
                    .cloned()
                    .unwrap_or_default();
                warnings.push(if functions.is_empty() {
                    format!("mode {mode} was never profiled and no static row is available")
                } else {
                    format!("mode {mode} was never profiled; falling back to its static row")
                });
                rows.insert(
                    mode,
                    ModeRow {
                        functions,
                        fallback: true,
                    },
                );
            }
        }
    }
    Ok((
        ModeConfig {
            firmware_id: firmware_id.to_string(),
            provenance: Provenance::Dynamic,
            rows,
        },
        warnings,
    ))
}

/// Fraction of the module's functions a mode cannot run, in `[0, 1]`.
pub fn reduction(total_functions: usize, allowed: usize) -> Result<f64, ModeAnalysisError> {
    if total_functions == 0 {
        return Err(ModeAnalysisError::EmptyModule);
    }
    if allowed > total_functions {
        return Err(ModeAnalysisError::AllowedExceedsTotal {
            total: total_functions,
            allowed,
        });
    }
    Ok((total_functions - allowed) as f64 / total_functions as f64)
}

/// Config file rejection.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ModeConfigError {
    #[error("line {line}: {message}")]
    FileFormat { line: usize, message: String },
    #[error("config references unknown function '{0}'")]
    UnknownFunction(FuncName),
    #[error("config names undeclared mode '{0}'")]
    UnknownMode(String),
    #[error("config is missing a row for mode '{0}'")]
    MissingMode(String),
    #[error("config invariant violated: {0}")]
    InvariantViolation(String),
    #[error("module failed validation: {0}")]
    Invalid(#[from] InvalidModule),
}

/// Canonical text form of a config: header lines, then one block per mode in
/// sorted order, each block a `mode` line followed by sorted function names
/// and terminated by a blank line.
pub fn emit_mode_config(config: &ModeConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("firmware {}\n", config.firmware_id));
    out.push_str(&format!("provenance {}\n", config.provenance.as_str()));
    for (mode, row) in &config.rows {
        out.push('\n');
        if row.fallback {
            out.push_str(&format!("mode {mode} fallback\n"));
        } else {
            out.push_str(&format!("mode {mode}\n"));
        }
        for func in &row.functions {
            out.push_str(&format!("{func}\n"));
        }
    }
    out
}

/// Parse a config file without validating it against any module.
pub fn parse_mode_config(text: &str) -> Result<ModeConfig, ModeConfigError> {
    let bad = |line: usize, message: &str| ModeConfigError::FileFormat {
        line,
        message: message.to_string(),
    };
    let mut firmware_id: Option<String> = None;
    let mut provenance: Option<Provenance> = None;
    let mut rows: BTreeMap<String, ModeRow> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap();
        match head {
            "firmware" => {
                let id = parts.next().ok_or_else(|| bad(line_no, "missing firmware id"))?;
                if firmware_id.replace(id.to_string()).is_some() {
                    return Err(bad(line_no, "duplicate firmware line"));
                }
            }
            "provenance" => {
                let p = match parts.next() {
                    Some("static") => Provenance::Static,
                    Some("dynamic") => Provenance::Dynamic,
                    _ => return Err(bad(line_no, "provenance must be 'static' or 'dynamic'")),
                };
                if provenance.replace(p).is_some() {
                    return Err(bad(line_no, "duplicate provenance line"));
                }
            }
            "mode" => {
                let name = parts
                    .next()
                    .ok_or_else(|| bad(line_no, "missing mode name"))?
                    .to_string();
                let fallback = match parts.next() {
                    None => false,
                    Some("fallback") => true,
                    Some(other) => {
                        return Err(bad(line_no, &format!("unexpected token '{other}'")))
                    }
                };
                if rows.contains_key(&name) {
                    return Err(bad(line_no, &format!("duplicate mode row '{name}'")));
                }
                rows.insert(
                    name.clone(),
                    ModeRow {
                        functions: BTreeSet::new(),
                        fallback,
                    },
                );
                current = Some(name);
            }
            func => {
                if parts.next().is_some() {
                    return Err(bad(line_no, "function lines hold a single name"));
                }
                let mode = current
                    .as_ref()
                    .ok_or_else(|| bad(line_no, "function line before any mode row"))?;
                rows.get_mut(mode)
                    .unwrap()
                    .functions
                    .insert(FuncName::new(func));
            }
        }
    }
    Ok(ModeConfig {
        firmware_id: firmware_id.ok_or_else(|| bad(0, "missing firmware line"))?,
        provenance: provenance.ok_or_else(|| bad(0, "missing provenance line"))?,
        rows,
    })
}

/// Parse a config and validate it against a module: every row function must
/// exist, every declared mode plus `INIT` must have a row, row names must be
/// declared modes, and the `FAILSAFE` row must cover the fail-safe entry cone
/// (recomputed here from scratch) so enforcement can never block the
/// transition into fail-safe operation.
pub fn load_mode_config(
    text: &str,
    module: &FirmwareModule,
) -> Result<ModeConfig, ModeConfigError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags).into());
    }
    let config = parse_mode_config(text)?;
    for (mode, row) in &config.rows {
        if mode != INIT_MODE && !module.mode_names.contains(mode) {
            return Err(ModeConfigError::UnknownMode(mode.clone()));
        }
        for func in &row.functions {
            if !module.functions.contains_key(func) {
                return Err(ModeConfigError::UnknownFunction(func.clone()));
            }
        }
    }
    for mode in std::iter::once(&INIT_MODE.to_string()).chain(module.mode_names.iter()) {
        if !config.rows.contains_key(mode) {
            return Err(ModeConfigError::MissingMode(mode.clone()));
        }
    }
    if module.mode_names.iter().any(|m| m == FAILSAFE_MODE) {
        let cone = failsafe_entry_cone(module).map_err(|e| {
            ModeConfigError::InvariantViolation(format!(
                "cannot derive the fail-safe entry cone: {e}"
            ))
        })?;
        let row = &config.rows[FAILSAFE_MODE].functions;
        let missing: Vec<String> = cone
            .difference(row)
            .map(|f| f.0.clone())
            .collect();
        if !missing.is_empty() {
            return Err(ModeConfigError::InvariantViolation(format!(
                "{FAILSAFE_MODE} row does not cover the fail-safe entry cone: missing {}",
                missing.join(", ")
            )));
        }
    }
    Ok(config)
}

/// Functions reachable from the fail-safe mode's entry handlers over the
/// pruned call graph, derived from scratch.
fn failsafe_entry_cone(module: &FirmwareModule) -> Result<BTreeSet<FuncName>, ModeAnalysisError> {
    let pts = solve_andersen(module)?;
    let graph = build_callgraph(module, &pts)?;
    let pruned = prune_address_taken(&prune_signature(&graph, module), module);
    let entries = static_mode_entries(module)?;
    let mut cone = BTreeSet::new();
    if let Some(handlers) = entries.get(FAILSAFE_MODE) {
        for handler in handlers {
            cone.extend(pruned.reachable_from(handler));
        }
    }
    Ok(cone)
}
