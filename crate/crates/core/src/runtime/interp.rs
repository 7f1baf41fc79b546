//! The deterministic interpreter and runtime monitor.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{
    validate, CallTarget, FirmwareModule, FuncName, FunctionDef, Instruction, InvalidModule,
    TypeDesc, Var, FAILSAFE_MODE, INIT_MODE,
};
use crate::modeanalysis::ModeConfig;
use crate::runtime::mission::{MissionScript, MissionStep};

/// What the monitor does with the instrumented call/return forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MonitorMode {
    /// No checking and no shadow stack; `mcall`/`mret` behave like
    /// `icall`/`ret`.
    Off,
    /// Full checking and recording, but violations never intervene.
    PermitAll,
    /// A violation triggers the fail-safe and halts the mission.
    Enforce,
}

/// Execution parameters for a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Identifier stamped into the report (typically the firmware file stem).
    pub firmware_id: String,
    pub monitor: MonitorMode,
    /// Per-mode allowed sets; required unless the monitor is off.
    pub mode_config: Option<ModeConfig>,
    /// Instruction budget for the whole mission.
    pub max_steps: u64,
    /// Call-depth budget.
    pub max_depth: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            firmware_id: "firmware".to_string(),
            monitor: MonitorMode::Off,
            mode_config: None,
            max_steps: 2_000_000,
            max_depth: 64,
        }
    }
}

/// Why a run could not complete.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("module failed validation: {0}")]
    Invalid(#[from] InvalidModule),
    #[error("module declares no mode switcher")]
    NoSwitcher,
    #[error("switcher '{switcher}' takes {params} parameters but the module declares {modes} modes")]
    SwitcherArity {
        switcher: FuncName,
        params: usize,
        modes: usize,
    },
    #[error("the monitor is enabled but no mode config was supplied")]
    MissingConfig,
    #[error("mode config has no row for mode '{0}'")]
    MissingModeRow(String),
    #[error("mission sets undeclared mode '{0}'")]
    UnknownMode(String),
    #[error("setmode executed with id {0}, which maps to no mode")]
    UnknownModeId(i64),
    #[error("hijack target '{0}' is not a defined function")]
    UnknownHijackTarget(FuncName),
    #[error("indirect call through a null reference in '{0}'")]
    NullIndirectCall(FuncName),
    #[error("instruction budget of {0} exhausted")]
    StepLimit(u64),
    #[error("call depth exceeded {0}")]
    DepthLimit(usize),
    #[error("fail-safe triggered but no '{FAILSAFE_MODE}' mode is declared")]
    NoFailsafeMode,
}

/// One executed indirect transfer (`icall` or `mcall`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndirectTransfer {
    pub tick: u64,
    pub caller: FuncName,
    /// Instruction index of the call site within the caller.
    pub site: usize,
    pub target: FuncName,
    /// True when an armed hijack replaced the original target here.
    pub hijacked: bool,
}

/// One shadow-stack operation (recorded only while the monitor is on).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShadowEvent {
    Push {
        tick: u64,
        descriptor: String,
    },
    Pop {
        tick: u64,
        expected: String,
        actual: String,
        matched: bool,
    },
}

/// One `effect` execution, with its argument values rendered canonically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectRecord {
    pub tick: u64,
    pub name: String,
    pub args: Vec<String>,
}

/// What kind of policy the monitor saw violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// A monitored call targeted a function outside the active mode's
    /// allowed set.
    DisallowedIndirectTarget,
    /// A checked return popped a descriptor that did not match the shadow
    /// stack.
    ReturnMismatch,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViolationKind::DisallowedIndirectTarget => "disallowed-indirect-target",
            ViolationKind::ReturnMismatch => "return-mismatch",
        })
    }
}

/// One detected violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationEvent {
    pub tick: u64,
    pub kind: ViolationKind,
    /// Mode that was active when the violation occurred.
    pub mode: String,
    /// The disallowed target, or the returning function for mismatches.
    pub function: FuncName,
    pub context: String,
}

/// The complete, deterministic record of one mission run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mission: String,
    pub firmware_id: String,
    pub monitor: MonitorMode,
    /// `(tick, from, to)` per executed `setmode`, after a synthetic
    /// `(0, INIT, INIT)` marking boot.
    pub mode_transitions: Vec<(u64, String, String)>,
    /// Direct calls a switcher made after `setmode`, labelled with the mode
    /// just set: the observed mode entry handlers.
    pub mode_entry_calls: Vec<(String, FuncName)>,
    /// Functions the profiling trampolines saw executing, keyed by the mode
    /// the profiler believed was active.
    pub per_mode_executed: BTreeMap<String, BTreeSet<FuncName>>,
    pub indirect_transfers: Vec<IndirectTransfer>,
    pub shadow_events: Vec<ShadowEvent>,
    pub effects: Vec<EffectRecord>,
    pub violations: Vec<ViolationEvent>,
    /// True when enforcement abandoned the mission and entered `FAILSAFE`.
    pub fail_safe: bool,
    /// Total instructions executed.
    pub steps: u64,
}

/// A runtime value. Function references are nullable: record fields hold
/// null until something stores into them.
#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Fn(Option<FuncName>),
}

fn default_of(ty: &TypeDesc) -> Value {
    match ty {
        TypeDesc::Int => Value::Int(0),
        TypeDesc::Float => Value::Float(0.0),
        TypeDesc::Bool => Value::Bool(false),
        TypeDesc::FuncRef(_) => Value::Fn(None),
        TypeDesc::Void | TypeDesc::Record(_) => Value::Int(0),
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format!("{x:?}"),
        Value::Bool(b) => b.to_string(),
        Value::Fn(Some(f)) => format!("&{f}"),
        Value::Fn(None) => "null".to_string(),
    }
}

/// Why execution is unwinding: a hard fault aborts the run; a fail-safe
/// abandons the stack, enters `FAILSAFE`, and halts the mission.
enum Interrupt {
    Fault(RuntimeError),
    FailSafe,
}

impl From<RuntimeError> for Interrupt {
    fn from(e: RuntimeError) -> Self {
        Interrupt::Fault(e)
    }
}

struct HijackState {
    target: FuncName,
    at: u64,
    seen: u64,
}

struct CorruptState {
    at: u64,
    seen: u64,
}

struct Interp<'m, 'c> {
    module: &'m FirmwareModule,
    config: &'c RunConfig,
    globals: BTreeMap<(String, String), Value>,
    registers: BTreeMap<String, i64>,
    /// The monitor's notion of the active mode, driven by `setmode`.
    current_mode: String,
    /// The profiler's notion, driven by `tramp_mode_entry`.
    profiler_mode: String,
    shadow: Vec<String>,
    hijack: Option<HijackState>,
    corrupt: Option<CorruptState>,
    steps: u64,
    /// Set while the fail-safe transition runs so it can never re-trip.
    monitor_suspended: bool,
    halted: bool,
    report: RunReport,
}

impl<'m, 'c> Interp<'m, 'c> {
    fn monitor_on(&self) -> bool {
        !self.monitor_suspended && self.config.monitor != MonitorMode::Off
    }

    fn allowed_row(&self) -> &BTreeSet<FuncName> {
        self.config
            .mode_config
            .as_ref()
            .and_then(|c| c.allowed(&self.current_mode))
            .expect("row coverage checked before the run")
    }

    fn tick(&mut self) -> Result<u64, Interrupt> {
        self.steps += 1;
        if self.steps > self.config.max_steps {
            return Err(RuntimeError::StepLimit(self.config.max_steps).into());
        }
        Ok(self.steps)
    }

    /// Apply an armed hijack to a resolved indirect target.
    fn apply_hijack(&mut self, resolved: FuncName) -> (FuncName, bool) {
        if let Some(h) = &mut self.hijack {
            if h.seen == h.at {
                let target = h.target.clone();
                self.hijack = None;
                return (target, true);
            }
            h.seen += 1;
        }
        (resolved, false)
    }

    /// Apply an armed return corruption to a popped descriptor.
    fn apply_corruption(&mut self, expected: &str) -> String {
        if let Some(c) = &mut self.corrupt {
            if c.seen == c.at {
                self.corrupt = None;
                return format!("{expected}+corrupted");
            }
            c.seen += 1;
        }
        expected.to_string()
    }

    fn violation(
        &mut self,
        tick: u64,
        kind: ViolationKind,
        function: FuncName,
        context: String,
    ) -> Result<(), Interrupt> {
        self.report.violations.push(ViolationEvent {
            tick,
            kind,
            mode: self.current_mode.clone(),
            function,
            context,
        });
        if self.config.monitor == MonitorMode::Enforce {
            return Err(Interrupt::FailSafe);
        }
        Ok(())
    }

    /// Check a monitored transfer target against the active mode's allowed
    /// set.
    fn check_transfer(
        &mut self,
        tick: u64,
        caller: &FuncName,
        site: usize,
        target: &FuncName,
    ) -> Result<(), Interrupt> {
        if !self.monitor_on() {
            return Ok(());
        }
        if self.allowed_row().contains(target) {
            return Ok(());
        }
        self.violation(
            tick,
            ViolationKind::DisallowedIndirectTarget,
            target.clone(),
            format!("{caller} transferred to {target} at site #{site}"),
        )
    }

    /// Execute one function to completion. `monitored_entry` marks frames
    /// entered through `mcall`: only those participate in return checking.
    fn exec_function(
        &mut self,
        name: &FuncName,
        args: Vec<Value>,
        monitored_entry: bool,
        depth: usize,
    ) -> Result<Option<Value>, Interrupt> {
        if depth > self.config.max_depth {
            return Err(RuntimeError::DepthLimit(self.config.max_depth).into());
        }
        let module = self.module;
        let func: &'m FunctionDef = module
            .functions
            .get(name)
            .expect("call targets resolve to defined functions");
        let mut vars: BTreeMap<Var, Value> = BTreeMap::new();
        for (i, (param, ty)) in func.params.iter().enumerate() {
            // Positional binding, tolerant of arity mismatch: extra arguments
            // are dropped, missing ones default — hijacked transfers may force
            // a target whose arity differs from the site's.
            let value = args.get(i).cloned().unwrap_or_else(|| default_of(ty));
            vars.insert(param.clone(), value);
        }
        let labels: BTreeMap<&str, usize> = func
            .body
            .iter()
            .enumerate()
            .filter_map(|(i, instr)| match instr {
                Instruction::Label { name } => Some((name.as_str(), i)),
                _ => None,
            })
            .collect();
        let read = |vars: &BTreeMap<Var, Value>, var: &Var| -> Value {
            vars.get(var).cloned().unwrap_or_else(|| {
                default_of(func.var_type(var).expect("validated variable"))
            })
        };
        let mut post_setmode = false;
        let mut pc = 0usize;
        loop {
            assert!(pc < func.body.len(), "validated functions return on every path");
            let tick = self.tick()?;
            match &func.body[pc] {
                Instruction::ConstInt { dst, value } => {
                    vars.insert(dst.clone(), Value::Int(*value));
                }
                Instruction::Assign { dst, src } => {
                    let v = read(&vars, src);
                    vars.insert(dst.clone(), v);
                }
                Instruction::AddrOf { dst, func: target } => {
                    vars.insert(dst.clone(), Value::Fn(Some(target.clone())));
                }
                Instruction::FieldStore { global, field, src } => {
                    let v = read(&vars, src);
                    self.globals.insert((global.clone(), field.clone()), v);
                }
                Instruction::FieldLoad { dst, global, field } => {
                    let v = self
                        .globals
                        .get(&(global.clone(), field.clone()))
                        .cloned()
                        .unwrap_or_else(|| {
                            let record =
                                module.global_record(global).expect("validated global");
                            default_of(record.field_type(field).expect("validated field"))
                        });
                    vars.insert(dst.clone(), v);
                }
                Instruction::CallDirect { callee, args, dst } => {
                    if func.is_mode_switcher && post_setmode {
                        self.report
                            .mode_entry_calls
                            .push((self.current_mode.clone(), callee.clone()));
                    }
                    let argv: Vec<Value> = args.iter().map(|a| read(&vars, a)).collect();
                    let ret = self.exec_function(callee, argv, false, depth + 1)?;
                    if let (Some(d), Some(v)) = (dst, ret) {
                        vars.insert(d.clone(), v);
                    }
                }
                Instruction::CallIndirect {
                    ref_var, args, dst, ..
                } => {
                    let Value::Fn(resolved) = read(&vars, ref_var) else {
                        unreachable!("validated icall reference");
                    };
                    let resolved = resolved
                        .ok_or_else(|| RuntimeError::NullIndirectCall(name.clone()))?;
                    let (target, hijacked) = self.apply_hijack(resolved);
                    self.report.indirect_transfers.push(IndirectTransfer {
                        tick,
                        caller: name.clone(),
                        site: pc,
                        target: target.clone(),
                        hijacked,
                    });
                    let argv: Vec<Value> = args.iter().map(|a| read(&vars, a)).collect();
                    let ret = self.exec_function(&target, argv, false, depth + 1)?;
                    if let (Some(d), Some(v)) = (dst, ret) {
                        vars.insert(d.clone(), v);
                    }
                }
                Instruction::MonitoredCall {
                    target, args, dst, ..
                } => {
                    let resolved = match target {
                        CallTarget::Direct(callee) => callee.clone(),
                        CallTarget::Ref(ref_var) => {
                            let Value::Fn(resolved) = read(&vars, ref_var) else {
                                unreachable!("validated mcall reference");
                            };
                            resolved
                                .ok_or_else(|| RuntimeError::NullIndirectCall(name.clone()))?
                        }
                    };
                    let (target, hijacked) = self.apply_hijack(resolved);
                    self.report.indirect_transfers.push(IndirectTransfer {
                        tick,
                        caller: name.clone(),
                        site: pc,
                        target: target.clone(),
                        hijacked,
                    });
                    self.check_transfer(tick, name, pc, &target)?;
                    let monitored = self.monitor_on();
                    let shadow_before = self.shadow.len();
                    if monitored {
                        let descriptor = format!("{name}#{pc}");
                        self.shadow.push(descriptor.clone());
                        self.report
                            .shadow_events
                            .push(ShadowEvent::Push { tick, descriptor });
                    }
                    let argv: Vec<Value> = args.iter().map(|a| read(&vars, a)).collect();
                    let ret = self.exec_function(&target, argv, monitored, depth + 1)?;
                    // A callee that returned through a plain `ret` (possible
                    // when a hijack forces an uninstrumented target) leaves
                    // its descriptor behind; drop it to keep the stack
                    // aligned with real frames.
                    self.shadow.truncate(shadow_before);
                    if let (Some(d), Some(v)) = (dst, ret) {
                        vars.insert(d.clone(), v);
                    }
                }
                Instruction::Return { value } => {
                    return Ok(value.as_ref().map(|v| read(&vars, v)));
                }
                Instruction::MonitoredReturn { value } => {
                    if monitored_entry && self.monitor_on() {
                        let expected = self.shadow.pop().expect("push/pop pairing");
                        let actual = self.apply_corruption(&expected);
                        let matched = actual == expected;
                        self.report.shadow_events.push(ShadowEvent::Pop {
                            tick,
                            expected: expected.clone(),
                            actual: actual.clone(),
                            matched,
                        });
                        if !matched {
                            self.violation(
                                tick,
                                ViolationKind::ReturnMismatch,
                                name.clone(),
                                format!("expected {expected}, popped {actual}"),
                            )?;
                        }
                    }
                    return Ok(value.as_ref().map(|v| read(&vars, v)));
                }
                Instruction::SetMode { mode_var } => {
                    let Value::Int(id) = read(&vars, mode_var) else {
                        unreachable!("validated setmode operand");
                    };
                    let mode = module
                        .mode_name_of(id)
                        .ok_or(RuntimeError::UnknownModeId(id))?
                        .to_string();
                    self.report
                        .mode_transitions
                        .push((tick, self.current_mode.clone(), mode.clone()));
                    self.current_mode = mode;
                    post_setmode = true;
                }
                Instruction::Effect { name, args } => {
                    let rendered = args.iter().map(|a| render_value(&read(&vars, a))).collect();
                    self.report.effects.push(EffectRecord {
                        tick,
                        name: name.clone(),
                        args: rendered,
                    });
                }
                Instruction::CondGoto { cond, label } => {
                    let taken = match read(&vars, cond) {
                        Value::Int(i) => i != 0,
                        Value::Bool(b) => b,
                        _ => unreachable!("validated branch condition"),
                    };
                    if taken {
                        pc = labels[label.as_str()];
                        continue;
                    }
                }
                Instruction::Goto { label } => {
                    pc = labels[label.as_str()];
                    continue;
                }
                Instruction::Label { .. } => {}
                Instruction::TrampolineModeEntry { new, .. } => {
                    let Value::Int(id) = read(&vars, new) else {
                        unreachable!("validated trampoline operand");
                    };
                    let mode = module
                        .mode_name_of(id)
                        .ok_or(RuntimeError::UnknownModeId(id))?
                        .to_string();
                    self.profiler_mode = mode;
                }
                Instruction::TrampolineLogFn { func } => {
                    self.report
                        .per_mode_executed
                        .entry(self.profiler_mode.clone())
                        .or_default()
                        .insert(func.clone());
                }
            }
            pc += 1;
        }
    }

    fn one_hot_args(&self, mode: &str) -> Vec<Value> {
        self.module
            .mode_names
            .iter()
            .map(|m| Value::Int(i64::from(m == mode)))
            .collect()
    }

    fn switcher(&self) -> Result<&'m FuncName, RuntimeError> {
        self.module
            .mode_switchers
            .iter()
            .next()
            .ok_or(RuntimeError::NoSwitcher)
    }

    /// Run one scheduler iteration: call the entry with its parameters bound
    /// by name from the input registers.
    fn entry_iteration(&mut self) -> Result<Option<Value>, Interrupt> {
        let entry = &self.module.functions[&self.module.entry];
        let args: Vec<Value> = entry
            .params
            .iter()
            .map(|(v, _)| Value::Int(self.registers.get(v.as_str()).copied().unwrap_or(0)))
            .collect();
        let name = entry.name.clone();
        self.exec_function(&name, args, false, 0)
    }

    /// Resolve an interrupt: faults abort, a fail-safe runs the transition
    /// into `FAILSAFE` and halts the mission. Idempotent.
    fn settle(&mut self, outcome: Result<Option<Value>, Interrupt>) -> Result<(), RuntimeError> {
        match outcome {
            Ok(_) => Ok(()),
            Err(Interrupt::Fault(e)) => Err(e),
            Err(Interrupt::FailSafe) => {
                if !self.report.fail_safe {
                    self.report.fail_safe = true;
                    self.monitor_suspended = true;
                    self.shadow.clear();
                    if self.module.mode_id_of(FAILSAFE_MODE).is_none() {
                        return Err(RuntimeError::NoFailsafeMode);
                    }
                    let switcher = self.switcher()?.clone();
                    let args = self.one_hot_args(FAILSAFE_MODE);
                    match self.exec_function(&switcher, args, false, 0) {
                        Ok(_) => {}
                        Err(Interrupt::Fault(e)) => return Err(e),
                        Err(Interrupt::FailSafe) => {
                            unreachable!("monitor suspended during fail-safe")
                        }
                    }
                }
                self.halted = true;
                Ok(())
            }
        }
    }
}

/// Execute a mission against a module and record everything that happened.
///
/// The module must validate. When the monitor is on, `config.mode_config`
/// must be present and hold a row for every declared mode plus `INIT`.
pub fn run_mission(
    module: &FirmwareModule,
    mission: &MissionScript,
    config: &RunConfig,
) -> Result<RunReport, RuntimeError> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags).into());
    }
    if config.monitor != MonitorMode::Off {
        let mode_config = config.mode_config.as_ref().ok_or(RuntimeError::MissingConfig)?;
        for mode in std::iter::once(&INIT_MODE.to_string()).chain(module.mode_names.iter()) {
            if !mode_config.rows.contains_key(mode) {
                return Err(RuntimeError::MissingModeRow(mode.clone()));
            }
        }
    }
    let mut interp = Interp {
        module,
        config,
        globals: BTreeMap::new(),
        registers: BTreeMap::new(),
        current_mode: INIT_MODE.to_string(),
        profiler_mode: INIT_MODE.to_string(),
        shadow: Vec::new(),
        hijack: None,
        corrupt: None,
        steps: 0,
        monitor_suspended: false,
        halted: false,
        report: RunReport {
            mission: mission.name.clone(),
            firmware_id: config.firmware_id.clone(),
            monitor: config.monitor,
            mode_transitions: vec![(0, INIT_MODE.to_string(), INIT_MODE.to_string())],
            mode_entry_calls: Vec::new(),
            per_mode_executed: BTreeMap::new(),
            indirect_transfers: Vec::new(),
            shadow_events: Vec::new(),
            effects: Vec::new(),
            violations: Vec::new(),
            fail_safe: false,
            steps: 0,
        },
    };
    let switcher = interp.switcher()?.clone();
    let switcher_params = module.functions[&switcher].params.len();
    if switcher_params != module.mode_names.len() {
        return Err(RuntimeError::SwitcherArity {
            switcher,
            params: switcher_params,
            modes: module.mode_names.len(),
        });
    }
    for step in &mission.steps {
        if interp.halted {
            break;
        }
        match step {
            MissionStep::Input { register, value } => {
                interp.registers.insert(register.clone(), *value);
            }
            MissionStep::Wait(n) => {
                for _ in 0..*n {
                    if interp.halted {
                        break;
                    }
                    let outcome = interp.entry_iteration();
                    interp.settle(outcome)?;
                }
            }
            MissionStep::SetMode(mode) => {
                if module.mode_id_of(mode).is_none() {
                    return Err(RuntimeError::UnknownMode(mode.clone()));
                }
                let switcher = interp.switcher()?.clone();
                let args = interp.one_hot_args(mode);
                let outcome = interp.exec_function(&switcher, args, false, 0);
                interp.settle(outcome)?;
            }
            MissionStep::InjectHijack {
                target,
                at_call_index,
            } => {
                if !module.functions.contains_key(target) {
                    return Err(RuntimeError::UnknownHijackTarget(target.clone()));
                }
                interp.hijack = Some(HijackState {
                    target: target.clone(),
                    at: *at_call_index,
                    seen: 0,
                });
            }
            MissionStep::CorruptReturn { at } => {
                interp.corrupt = Some(CorruptState { at: *at, seen: 0 });
            }
        }
    }
    interp.report.steps = interp.steps;
    Ok(interp.report)
}
