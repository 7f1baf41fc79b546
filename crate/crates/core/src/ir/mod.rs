//! The firmware IR: a small, line-oriented, weakly typed intermediate
//! representation for robotic-vehicle firmware models.
//!
//! A module declares its operational modes, an entry function (the scheduler
//! loop body), one or more mode-switcher functions, record types whose fields
//! carry function references (the indirect-dispatch fabric), and a set of
//! functions. Function names are global identities — there are no numeric
//! addresses. `const` is the only constant-introducing instruction and there is
//! no arithmetic; control flow is `goto`/`ifgoto` (branch on non-zero) only.
//!
//! Four instruction kinds exist only as instrumentation output and never appear
//! in hand-written firmware: the two trampolines and the monitored call/return
//! forms produced by [`crate::instrument`].

mod parse;
mod serialize;
mod validate;

pub use parse::parse_firmware;
pub use serialize::serialize_firmware;
pub use validate::validate;

use std::fmt;

/// A local variable or parameter name, stored without the `%` sigil.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub String);

impl Var {
    pub fn new(name: impl Into<String>) -> Self {
        Var(name.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// A function name. Function names are the only notion of code identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuncName(pub String);

impl FuncName {
    pub fn new(name: impl Into<String>) -> Self {
        FuncName(name.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FuncName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A type descriptor. Record types are structural (name plus ordered fields)
/// and may only type statically named globals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeDesc {
    Void,
    Int,
    Float,
    Bool,
    FuncRef(Box<Signature>),
    Record(RecordType),
}

impl TypeDesc {
    pub fn is_func_ref(&self) -> bool {
        matches!(self, TypeDesc::FuncRef(_))
    }

    /// Depth of nested function-reference return chains: `fnref(..)->int` is 1,
    /// `fnref(..)->fnref(..)->int` is 2. Bounded to 2 by the parser.
    pub fn func_ref_return_depth(&self) -> usize {
        match self {
            TypeDesc::FuncRef(sig) => 1 + sig.return_type.func_ref_return_depth(),
            _ => 0,
        }
    }
}

impl fmt::Display for TypeDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeDesc::Void => f.write_str("void"),
            TypeDesc::Int => f.write_str("int"),
            TypeDesc::Float => f.write_str("float"),
            TypeDesc::Bool => f.write_str("bool"),
            TypeDesc::FuncRef(sig) => {
                f.write_str("fnref")?;
                sig.fmt_params(f)?;
                write!(f, "->{}", sig.return_type)
            }
            TypeDesc::Record(r) => f.write_str(&r.name),
        }
    }
}

/// A record type: a named, ordered list of fields. Fields of function-reference
/// type are the carriers for field-sensitive points-to analysis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordType {
    pub name: String,
    pub fields: Vec<(String, TypeDesc)>,
}

impl RecordType {
    pub fn field_type(&self, field: &str) -> Option<&TypeDesc> {
        self.fields.iter().find(|(n, _)| n == field).map(|(_, t)| t)
    }
}

/// A function signature: parameter types (never Void) and a return type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub params: Vec<TypeDesc>,
    pub return_type: TypeDesc,
}

impl Signature {
    fn fmt_params(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_params(f)?;
        write!(f, "->{}", self.return_type)
    }
}

/// Target of a monitored call: either a function-reference variable (from a
/// rewritten indirect call) or a direct callee.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CallTarget {
    Ref(Var),
    Direct(FuncName),
}

/// One IR instruction. The last four variants are instrumentation-only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Instruction {
    ConstInt {
        dst: Var,
        value: i64,
    },
    Assign {
        dst: Var,
        src: Var,
    },
    AddrOf {
        dst: Var,
        func: FuncName,
    },
    FieldStore {
        global: String,
        field: String,
        src: Var,
    },
    FieldLoad {
        dst: Var,
        global: String,
        field: String,
    },
    CallDirect {
        callee: FuncName,
        args: Vec<Var>,
        dst: Option<Var>,
    },
    CallIndirect {
        ref_var: Var,
        args: Vec<Var>,
        dst: Option<Var>,
        declared: Signature,
    },
    Return {
        value: Option<Var>,
    },
    SetMode {
        mode_var: Var,
    },
    Effect {
        name: String,
        args: Vec<Var>,
    },
    CondGoto {
        cond: Var,
        label: String,
    },
    Goto {
        label: String,
    },
    Label {
        name: String,
    },
    /// Profiler/monitor notification that a mode switch succeeded. Both
    /// operands name the variable the preceding `setmode` consumed; the
    /// runtime keeps the from-mode itself.
    TrampolineModeEntry {
        cur: Var,
        new: Var,
    },
    /// Profiler notification that the named function started executing.
    TrampolineLogFn {
        func: FuncName,
    },
    /// An indirect (or direct) call routed through the runtime monitor.
    MonitoredCall {
        target: CallTarget,
        args: Vec<Var>,
        dst: Option<Var>,
        declared: Signature,
    },
    /// A return routed through the runtime monitor's shadow stack check.
    MonitoredReturn {
        value: Option<Var>,
    },
}

impl Instruction {
    /// True for the variants only instrumentation passes may introduce.
    pub fn is_instrumentation(&self) -> bool {
        matches!(
            self,
            Instruction::TrampolineModeEntry { .. }
                | Instruction::TrampolineLogFn { .. }
                | Instruction::MonitoredCall { .. }
                | Instruction::MonitoredReturn { .. }
        )
    }

    /// True if this instruction terminates a control path.
    pub fn is_return(&self) -> bool {
        matches!(
            self,
            Instruction::Return { .. } | Instruction::MonitoredReturn { .. }
        )
    }
}

fn fmt_args(f: &mut fmt::Formatter<'_>, args: &[Var]) -> fmt::Result {
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Instruction {
    /// The canonical single-line spelling used by the serializer.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        match self {
            ConstInt { dst, value } => write!(f, "{dst} = const {value}"),
            Assign { dst, src } => write!(f, "{dst} = {src}"),
            AddrOf { dst, func } => write!(f, "{dst} = addrof {func}"),
            FieldStore { global, field, src } => write!(f, "%{global}.{field} = {src}"),
            FieldLoad { dst, global, field } => write!(f, "{dst} = %{global}.{field}"),
            CallDirect { callee, args, dst } => {
                if let Some(d) = dst {
                    write!(f, "{d} = ")?;
                }
                write!(f, "call {callee}")?;
                fmt_args(f, args)
            }
            CallIndirect {
                ref_var,
                args,
                dst,
                declared,
            } => {
                if let Some(d) = dst {
                    write!(f, "{d} = ")?;
                }
                write!(f, "icall {ref_var}")?;
                fmt_args(f, args)?;
                write!(f, " : {declared}")
            }
            Return { value: Some(v) } => write!(f, "ret {v}"),
            Return { value: None } => f.write_str("ret"),
            SetMode { mode_var } => write!(f, "setmode {mode_var}"),
            Effect { name, args } => {
                write!(f, "effect {name}")?;
                fmt_args(f, args)
            }
            CondGoto { cond, label } => write!(f, "ifgoto {cond} {label}"),
            Goto { label } => write!(f, "goto {label}"),
            Label { name } => write!(f, "label {name}"),
            TrampolineModeEntry { cur, new } => write!(f, "tramp_mode_entry {cur}, {new}"),
            TrampolineLogFn { func } => write!(f, "tramp_log_fn {func}"),
            MonitoredCall {
                target,
                args,
                dst,
                declared,
            } => {
                if let Some(d) = dst {
                    write!(f, "{d} = ")?;
                }
                match target {
                    CallTarget::Ref(v) => write!(f, "mcall {v}")?,
                    CallTarget::Direct(c) => write!(f, "mcall {c}")?,
                }
                fmt_args(f, args)?;
                write!(f, " : {declared}")
            }
            MonitoredReturn { value: Some(v) } => write!(f, "mret {v}"),
            MonitoredReturn { value: None } => f.write_str("mret"),
        }
    }
}

/// A function definition. Locals are inferred by the parser from each
/// variable's first definition; every variable used in the body appears in
/// `locals` or `params`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: FuncName,
    pub params: Vec<(Var, TypeDesc)>,
    pub return_type: TypeDesc,
    pub locals: std::collections::BTreeMap<Var, TypeDesc>,
    pub body: Vec<Instruction>,
    pub is_mode_switcher: bool,
}

impl FunctionDef {
    pub fn signature(&self) -> Signature {
        Signature {
            params: self.params.iter().map(|(_, t)| t.clone()).collect(),
            return_type: self.return_type.clone(),
        }
    }

    /// Type of a variable in this function's scope (param or local).
    pub fn var_type(&self, var: &Var) -> Option<&TypeDesc> {
        self.params
            .iter()
            .find(|(v, _)| v == var)
            .map(|(_, t)| t)
            .or_else(|| self.locals.get(var))
    }
}

/// A complete firmware module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareModule {
    pub functions: std::collections::BTreeMap<FuncName, FunctionDef>,
    pub entry: FuncName,
    pub mode_switchers: std::collections::BTreeSet<FuncName>,
    /// Declared mode names, in declaration order (drives the switcher ABI).
    pub mode_names: Vec<String>,
    /// Bijection from mode number (the value `setmode` consumes) to mode name.
    pub mode_ids: std::collections::BTreeMap<i64, String>,
    pub records: std::collections::BTreeMap<String, RecordType>,
    /// Global name (without `%`) to record-type name.
    pub globals: std::collections::BTreeMap<String, String>,
}

impl FirmwareModule {
    pub fn mode_name_of(&self, id: i64) -> Option<&str> {
        self.mode_ids.get(&id).map(|s| s.as_str())
    }

    pub fn mode_id_of(&self, name: &str) -> Option<i64> {
        self.mode_ids
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(i, _)| *i)
    }

    pub fn global_record(&self, global: &str) -> Option<&RecordType> {
        self.globals.get(global).and_then(|r| self.records.get(r))
    }

    /// True once either instrumentation pass has run.
    pub fn is_instrumented(&self) -> bool {
        self.functions
            .values()
            .any(|f| f.body.iter().any(Instruction::is_instrumentation))
    }
}

/// Category of a parse or validation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagnosticKind {
    /// Malformed tokens or line structure.
    Syntax,
    /// A name (function, label, variable, global, field, record) that does not
    /// resolve.
    Resolution,
    /// A type rule violation (icall through a non-fnref, void binding, ...).
    Type,
    /// A module-level invariant violation found by [`validate`].
    Invariant,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::Resolution => "resolution error",
            DiagnosticKind::Type => "type error",
            DiagnosticKind::Invariant => "invariant violation",
        })
    }
}

/// One parse/validation finding, with a 1-based source location. Diagnostics
/// produced by [`validate`] on in-memory modules carry line 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, col: usize, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            col,
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.kind, self.message)
        } else {
            write!(
                f,
                "{}:{}: {}: {}",
                self.line, self.col, self.kind, self.message
            )
        }
    }
}

/// Error returned by operations that require a module passing [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid module: {}", format_diags(.0))]
pub struct InvalidModule(pub Vec<Diagnostic>);

fn format_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The mode name the runtime starts in, before the first `setmode`.
pub const INIT_MODE: &str = "INIT";

/// The mode name fail-safe escalation switches to.
pub const FAILSAFE_MODE: &str = "FAILSAFE";
