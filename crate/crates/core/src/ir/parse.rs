//! Line-oriented parser for the firmware IR text format.
//!
//! Parsing happens in two phases: a structural phase that turns each line into
//! a directive or instruction, and a resolution phase that checks names, infers
//! local variable types from first definitions, and enforces the parser-level
//! type rules (indirect calls through fnref variables, no void bindings,
//! fnref return-nesting bound). A module that survives both phases is handed
//! to [`validate`] so `parse_firmware` only ever returns invariant-clean
//! modules.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    validate, CallTarget, Diagnostic, DiagnosticKind, FirmwareModule, FuncName, FunctionDef,
    Instruction, RecordType, Signature, TypeDesc, Var,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Punct(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    col: usize,
}

fn lex_line(line_no: usize, line: &str) -> Result<Vec<SpannedTok>, Diagnostic> {
    let bytes: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let col = i + 1;
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => break,
            '%' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && (bytes[j].is_alphanumeric() || bytes[j] == '_') {
                    j += 1;
                }
                if j == start {
                    return Err(Diagnostic::new(
                        line_no,
                        col,
                        DiagnosticKind::Syntax,
                        "expected variable name after '%'",
                    ));
                }
                toks.push(SpannedTok {
                    tok: Tok::Var(bytes[start..j].iter().collect()),
                    col,
                });
                i = j;
            }
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '>' {
                    toks.push(SpannedTok {
                        tok: Tok::Arrow,
                        col,
                    });
                    i += 2;
                } else if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() {
                    let mut j = i + 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    let text: String = bytes[i..j].iter().collect();
                    let value = text.parse().map_err(|_| {
                        Diagnostic::new(line_no, col, DiagnosticKind::Syntax, "bad integer literal")
                    })?;
                    toks.push(SpannedTok {
                        tok: Tok::Int(value),
                        col,
                    });
                    i = j;
                } else {
                    return Err(Diagnostic::new(
                        line_no,
                        col,
                        DiagnosticKind::Syntax,
                        "unexpected '-'",
                    ));
                }
            }
            _ if c.is_ascii_digit() => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let text: String = bytes[i..j].iter().collect();
                let value = text.parse().map_err(|_| {
                    Diagnostic::new(line_no, col, DiagnosticKind::Syntax, "bad integer literal")
                })?;
                toks.push(SpannedTok {
                    tok: Tok::Int(value),
                    col,
                });
                i = j;
            }
            _ if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_alphanumeric() || bytes[j] == '_') {
                    j += 1;
                }
                toks.push(SpannedTok {
                    tok: Tok::Ident(bytes[i..j].iter().collect()),
                    col,
                });
                i = j;
            }
            '(' | ')' | '{' | '}' | ',' | ':' | '.' | '=' => {
                toks.push(SpannedTok {
                    tok: Tok::Punct(c),
                    col,
                });
                i += 1;
            }
            _ => {
                return Err(Diagnostic::new(
                    line_no,
                    col,
                    DiagnosticKind::Syntax,
                    format!("unexpected character '{c}'"),
                ));
            }
        }
    }
    Ok(toks)
}

/// Cursor over one line's tokens.
struct Cur<'a> {
    toks: &'a [SpannedTok],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> Cur<'a> {
    fn new(toks: &'a [SpannedTok], line: usize, line_len: usize) -> Self {
        Cur {
            toks,
            pos: 0,
            line,
            line_len,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|t| t.col)
            .unwrap_or(self.line_len + 1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(self.line, self.col(), DiagnosticKind::Syntax, msg)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), Diagnostic> {
        match self.next() {
            Some(Tok::Punct(p)) if p == c => Ok(()),
            _ => Err(Diagnostic::new(
                self.line,
                self.prev_col(),
                DiagnosticKind::Syntax,
                format!("expected '{c}'"),
            )),
        }
    }

    fn prev_col(&self) -> usize {
        self.toks
            .get(self.pos.saturating_sub(1))
            .map(|t| t.col)
            .unwrap_or(self.line_len + 1)
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => Err(Diagnostic::new(
                self.line,
                self.prev_col(),
                DiagnosticKind::Syntax,
                format!("expected {what}"),
            )),
        }
    }

    fn expect_var(&mut self) -> Result<Var, Diagnostic> {
        match self.next() {
            Some(Tok::Var(s)) => Ok(Var(s)),
            _ => Err(Diagnostic::new(
                self.line,
                self.prev_col(),
                DiagnosticKind::Syntax,
                "expected variable",
            )),
        }
    }

    fn expect_int(&mut self) -> Result<i64, Diagnostic> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(v),
            _ => Err(Diagnostic::new(
                self.line,
                self.prev_col(),
                DiagnosticKind::Syntax,
                "expected integer",
            )),
        }
    }

    fn expect_end(&self) -> Result<(), Diagnostic> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.err("trailing tokens"))
        }
    }
}

/// Maximum nesting of fnref return types (`fnref(..)->fnref(..)->T` is the
/// deepest allowed form).
const MAX_FUNC_REF_RETURN_DEPTH: usize = 2;

struct FnInProgress {
    name: FuncName,
    name_line: usize,
    params: Vec<(Var, TypeDesc)>,
    return_type: TypeDesc,
    body: Vec<(usize, Instruction)>,
}

struct Parser {
    diags: Vec<Diagnostic>,
    mode_names: Vec<String>,
    explicit_mode_ids: Vec<(usize, i64, String)>,
    entry: Option<(usize, FuncName)>,
    switchers: BTreeSet<FuncName>,
    records: BTreeMap<String, RecordType>,
    globals: BTreeMap<String, String>,
    functions: Vec<FnInProgress>,
    current: Option<FnInProgress>,
}

impl Parser {
    fn new() -> Self {
        Parser {
            diags: Vec::new(),
            mode_names: Vec::new(),
            explicit_mode_ids: Vec::new(),
            entry: None,
            switchers: BTreeSet::new(),
            records: BTreeMap::new(),
            globals: BTreeMap::new(),
            functions: Vec::new(),
            current: None,
        }
    }

    fn parse_type(&mut self, cur: &mut Cur) -> Result<TypeDesc, Diagnostic> {
        let col = cur.col();
        let ty = match cur.next() {
            Some(Tok::Ident(name)) => match name.as_str() {
                "void" => TypeDesc::Void,
                "int" => TypeDesc::Int,
                "float" => TypeDesc::Float,
                "bool" => TypeDesc::Bool,
                "fnref" => {
                    cur.expect_punct('(')?;
                    let mut params = Vec::new();
                    if cur.peek() != Some(&Tok::Punct(')')) {
                        loop {
                            params.push(self.parse_type(cur)?);
                            match cur.peek() {
                                Some(Tok::Punct(',')) => {
                                    cur.next();
                                }
                                _ => break,
                            }
                        }
                    }
                    cur.expect_punct(')')?;
                    match cur.next() {
                        Some(Tok::Arrow) => {}
                        _ => {
                            return Err(Diagnostic::new(
                                cur.line,
                                cur.prev_col(),
                                DiagnosticKind::Syntax,
                                "expected '->' in fnref type",
                            ))
                        }
                    }
                    let ret = self.parse_type(cur)?;
                    TypeDesc::FuncRef(Box::new(Signature {
                        params,
                        return_type: ret,
                    }))
                }
                other => match self.records.get(other) {
                    Some(rec) => TypeDesc::Record(rec.clone()),
                    None => {
                        return Err(Diagnostic::new(
                            cur.line,
                            col,
                            DiagnosticKind::Resolution,
                            format!("unknown type '{other}'"),
                        ))
                    }
                },
            },
            _ => {
                return Err(Diagnostic::new(
                    cur.line,
                    col,
                    DiagnosticKind::Syntax,
                    "expected type",
                ))
            }
        };
        if ty.func_ref_return_depth() > MAX_FUNC_REF_RETURN_DEPTH {
            return Err(Diagnostic::new(
                cur.line,
                col,
                DiagnosticKind::Type,
                format!(
                    "fnref return nesting deeper than {MAX_FUNC_REF_RETURN_DEPTH} is not allowed"
                ),
            ));
        }
        Ok(ty)
    }

    fn parse_args(&mut self, cur: &mut Cur) -> Result<Vec<Var>, Diagnostic> {
        cur.expect_punct('(')?;
        let mut args = Vec::new();
        if cur.peek() != Some(&Tok::Punct(')')) {
            loop {
                args.push(cur.expect_var()?);
                match cur.peek() {
                    Some(Tok::Punct(',')) => {
                        cur.next();
                    }
                    _ => break,
                }
            }
        }
        cur.expect_punct(')')?;
        Ok(args)
    }

    fn parse_declared_sig(&mut self, cur: &mut Cur) -> Result<Signature, Diagnostic> {
        cur.expect_punct(':')?;
        cur.expect_punct('(')?;
        let mut params = Vec::new();
        if cur.peek() != Some(&Tok::Punct(')')) {
            loop {
                params.push(self.parse_type(cur)?);
                match cur.peek() {
                    Some(Tok::Punct(',')) => {
                        cur.next();
                    }
                    _ => break,
                }
            }
        }
        cur.expect_punct(')')?;
        match cur.next() {
            Some(Tok::Arrow) => {}
            _ => {
                return Err(Diagnostic::new(
                    cur.line,
                    cur.prev_col(),
                    DiagnosticKind::Syntax,
                    "expected '->' in call signature",
                ))
            }
        }
        let return_type = self.parse_type(cur)?;
        Ok(Signature {
            params,
            return_type,
        })
    }

    /// Parse what comes after `dst =` or as a bare statement starting with a
    /// call keyword. `dst` is None for statement position.
    fn parse_rhs(&mut self, cur: &mut Cur, dst: Option<Var>) -> Result<Instruction, Diagnostic> {
        match cur.peek().cloned() {
            Some(Tok::Int(_)) => Err(cur.err("bare integer is not an instruction (use 'const')")),
            Some(Tok::Ident(kw)) if kw == "const" => {
                cur.next();
                let value = cur.expect_int()?;
                let dst = dst.ok_or_else(|| cur.err("const requires a destination"))?;
                Ok(Instruction::ConstInt { dst, value })
            }
            Some(Tok::Ident(kw)) if kw == "addrof" => {
                cur.next();
                let func = FuncName(cur.expect_ident("function name")?);
                let dst = dst.ok_or_else(|| cur.err("addrof requires a destination"))?;
                Ok(Instruction::AddrOf { dst, func })
            }
            Some(Tok::Ident(kw)) if kw == "call" => {
                cur.next();
                let callee = FuncName(cur.expect_ident("function name")?);
                let args = self.parse_args(cur)?;
                Ok(Instruction::CallDirect { callee, args, dst })
            }
            Some(Tok::Ident(kw)) if kw == "icall" => {
                cur.next();
                let ref_var = cur.expect_var()?;
                let args = self.parse_args(cur)?;
                let declared = self.parse_declared_sig(cur)?;
                Ok(Instruction::CallIndirect {
                    ref_var,
                    args,
                    dst,
                    declared,
                })
            }
            Some(Tok::Ident(kw)) if kw == "mcall" => {
                cur.next();
                let target = match cur.peek() {
                    Some(Tok::Var(_)) => CallTarget::Ref(cur.expect_var()?),
                    _ => CallTarget::Direct(FuncName(cur.expect_ident("call target")?)),
                };
                let args = self.parse_args(cur)?;
                let declared = self.parse_declared_sig(cur)?;
                Ok(Instruction::MonitoredCall {
                    target,
                    args,
                    dst,
                    declared,
                })
            }
            Some(Tok::Var(_)) => {
                let src = cur.expect_var()?;
                if cur.peek() == Some(&Tok::Punct('.')) {
                    cur.next();
                    let field = cur.expect_ident("field name")?;
                    let dst = dst.ok_or_else(|| cur.err("field load requires a destination"))?;
                    Ok(Instruction::FieldLoad {
                        dst,
                        global: src.0,
                        field,
                    })
                } else {
                    let dst = dst.ok_or_else(|| cur.err("assignment requires a destination"))?;
                    Ok(Instruction::Assign { dst, src })
                }
            }
            _ => Err(cur.err("expected instruction")),
        }
    }

    fn parse_instruction(&mut self, cur: &mut Cur) -> Result<Instruction, Diagnostic> {
        let instr = match cur.peek().cloned() {
            Some(Tok::Ident(kw)) => match kw.as_str() {
                "ret" => {
                    cur.next();
                    let value = if cur.peek().is_some() {
                        Some(cur.expect_var()?)
                    } else {
                        None
                    };
                    Instruction::Return { value }
                }
                "mret" => {
                    cur.next();
                    let value = if cur.peek().is_some() {
                        Some(cur.expect_var()?)
                    } else {
                        None
                    };
                    Instruction::MonitoredReturn { value }
                }
                "setmode" => {
                    cur.next();
                    let mode_var = cur.expect_var()?;
                    Instruction::SetMode { mode_var }
                }
                "effect" => {
                    cur.next();
                    let name = cur.expect_ident("effect name")?;
                    let args = self.parse_args(cur)?;
                    Instruction::Effect { name, args }
                }
                "label" => {
                    cur.next();
                    let name = cur.expect_ident("label name")?;
                    Instruction::Label { name }
                }
                "goto" => {
                    cur.next();
                    let label = cur.expect_ident("label name")?;
                    Instruction::Goto { label }
                }
                "ifgoto" => {
                    cur.next();
                    let cond = cur.expect_var()?;
                    let label = cur.expect_ident("label name")?;
                    Instruction::CondGoto { cond, label }
                }
                "tramp_mode_entry" => {
                    cur.next();
                    let curv = cur.expect_var()?;
                    cur.expect_punct(',')?;
                    let newv = cur.expect_var()?;
                    Instruction::TrampolineModeEntry {
                        cur: curv,
                        new: newv,
                    }
                }
                "tramp_log_fn" => {
                    cur.next();
                    let func = FuncName(cur.expect_ident("function name")?);
                    Instruction::TrampolineLogFn { func }
                }
                "call" | "icall" | "mcall" => self.parse_rhs(cur, None)?,
                _ => return Err(cur.err(format!("unknown instruction '{kw}'"))),
            },
            Some(Tok::Var(_)) => {
                // Either `%x = ...` or `%g.field = %src`.
                let first = cur.expect_var()?;
                if cur.peek() == Some(&Tok::Punct('.')) {
                    cur.next();
                    let field = cur.expect_ident("field name")?;
                    cur.expect_punct('=')?;
                    let src = cur.expect_var()?;
                    Instruction::FieldStore {
                        global: first.0,
                        field,
                        src,
                    }
                } else {
                    cur.expect_punct('=')?;
                    self.parse_rhs(cur, Some(first))?
                }
            }
            _ => return Err(cur.err("expected instruction")),
        };
        cur.expect_end()?;
        Ok(instr)
    }

    fn parse_top_level(&mut self, cur: &mut Cur) -> Result<(), Diagnostic> {
        let kw = cur.expect_ident("directive")?;
        match kw.as_str() {
            "modes" => {
                if !self.mode_names.is_empty() {
                    return Err(cur.err("duplicate 'modes' directive"));
                }
                loop {
                    let name = cur.expect_ident("mode name")?;
                    if self.mode_names.contains(&name) {
                        return Err(Diagnostic::new(
                            cur.line,
                            cur.prev_col(),
                            DiagnosticKind::Invariant,
                            format!("duplicate mode name '{name}'"),
                        ));
                    }
                    self.mode_names.push(name);
                    match cur.peek() {
                        Some(Tok::Punct(',')) => {
                            cur.next();
                        }
                        _ => break,
                    }
                }
                cur.expect_end()
            }
            "modeid" => {
                let id = cur.expect_int()?;
                let name = cur.expect_ident("mode name")?;
                self.explicit_mode_ids.push((cur.line, id, name));
                cur.expect_end()
            }
            "entry" => {
                let name = FuncName(cur.expect_ident("function name")?);
                if self.entry.is_some() {
                    return Err(cur.err("duplicate 'entry' directive"));
                }
                self.entry = Some((cur.line, name));
                cur.expect_end()
            }
            "switcher" => {
                let name = FuncName(cur.expect_ident("function name")?);
                self.switchers.insert(name);
                cur.expect_end()
            }
            "record" => {
                let name = cur.expect_ident("record name")?;
                if self.records.contains_key(&name) {
                    return Err(Diagnostic::new(
                        cur.line,
                        cur.prev_col(),
                        DiagnosticKind::Resolution,
                        format!("duplicate record '{name}'"),
                    ));
                }
                cur.expect_punct('{')?;
                let mut fields: Vec<(String, TypeDesc)> = Vec::new();
                if cur.peek() != Some(&Tok::Punct('}')) {
                    loop {
                        let fname = cur.expect_ident("field name")?;
                        if fields.iter().any(|(n, _)| *n == fname) {
                            return Err(Diagnostic::new(
                                cur.line,
                                cur.prev_col(),
                                DiagnosticKind::Invariant,
                                format!("duplicate field '{fname}' in record '{name}'"),
                            ));
                        }
                        cur.expect_punct(':')?;
                        let ty = self.parse_type(cur)?;
                        fields.push((fname, ty));
                        match cur.peek() {
                            Some(Tok::Punct(',')) => {
                                cur.next();
                                if cur.peek() == Some(&Tok::Punct('}')) {
                                    break;
                                }
                            }
                            _ => break,
                        }
                    }
                }
                cur.expect_punct('}')?;
                self.records.insert(name.clone(), RecordType { name, fields });
                cur.expect_end()
            }
            "global" => {
                let var = cur.expect_var()?;
                cur.expect_punct(':')?;
                let rec_name = cur.expect_ident("record name")?;
                if !self.records.contains_key(&rec_name) {
                    return Err(Diagnostic::new(
                        cur.line,
                        cur.prev_col(),
                        DiagnosticKind::Resolution,
                        format!("unknown record '{rec_name}'"),
                    ));
                }
                if self.globals.contains_key(&var.0) {
                    return Err(cur.err(format!("duplicate global '{var}'")));
                }
                self.globals.insert(var.0, rec_name);
                cur.expect_end()
            }
            "fn" => {
                let name = FuncName(cur.expect_ident("function name")?);
                cur.expect_punct('(')?;
                let mut params: Vec<(Var, TypeDesc)> = Vec::new();
                if cur.peek() != Some(&Tok::Punct(')')) {
                    loop {
                        let pvar = cur.expect_var()?;
                        if params.iter().any(|(v, _)| *v == pvar) {
                            return Err(Diagnostic::new(
                                cur.line,
                                cur.prev_col(),
                                DiagnosticKind::Resolution,
                                format!("duplicate parameter '{pvar}'"),
                            ));
                        }
                        cur.expect_punct(':')?;
                        let ty = self.parse_type(cur)?;
                        params.push((pvar, ty));
                        match cur.peek() {
                            Some(Tok::Punct(',')) => {
                                cur.next();
                            }
                            _ => break,
                        }
                    }
                }
                cur.expect_punct(')')?;
                match cur.next() {
                    Some(Tok::Arrow) => {}
                    _ => {
                        return Err(Diagnostic::new(
                            cur.line,
                            cur.prev_col(),
                            DiagnosticKind::Syntax,
                            "expected '->' after parameter list",
                        ))
                    }
                }
                let return_type = self.parse_type(cur)?;
                cur.expect_punct('{')?;
                cur.expect_end()?;
                self.current = Some(FnInProgress {
                    name,
                    name_line: cur.line,
                    params,
                    return_type,
                    body: Vec::new(),
                });
                Ok(())
            }
            other => Err(cur.err(format!("unknown directive '{other}'"))),
        }
    }

    fn feed_line(&mut self, line_no: usize, line: &str) {
        let toks = match lex_line(line_no, line) {
            Ok(t) => t,
            Err(d) => {
                self.diags.push(d);
                return;
            }
        };
        if toks.is_empty() {
            return;
        }
        let mut cur = Cur::new(&toks, line_no, line.len());
        if self.current.is_some() {
            if toks.len() == 1 && toks[0].tok == Tok::Punct('}') {
                let fip = self.current.take().unwrap();
                self.functions.push(fip);
                return;
            }
            match self.parse_instruction(&mut cur) {
                Ok(instr) => self
                    .current
                    .as_mut()
                    .unwrap()
                    .body
                    .push((line_no, instr)),
                Err(d) => self.diags.push(d),
            }
        } else if let Err(d) = self.parse_top_level(&mut cur) {
            self.diags.push(d);
        }
    }

    /// Infer local variable types from first definitions, to a fixpoint.
    fn infer_locals(
        &mut self,
        fip: &FnInProgress,
        functions: &BTreeMap<FuncName, Signature>,
    ) -> BTreeMap<Var, TypeDesc> {
        let mut types: BTreeMap<Var, TypeDesc> = fip.params.iter().cloned().collect();
        let mut locals: BTreeMap<Var, TypeDesc> = BTreeMap::new();
        let define = |types: &mut BTreeMap<Var, TypeDesc>,
                          locals: &mut BTreeMap<Var, TypeDesc>,
                          var: &Var,
                          ty: TypeDesc| {
            // First definition pins the type; later writes are permitted and do
            // not re-type (the IR is weakly typed).
            if !types.contains_key(var) {
                types.insert(var.clone(), ty.clone());
                locals.insert(var.clone(), ty);
                true
            } else {
                false
            }
        };
        loop {
            let mut changed = false;
            for (line_no, instr) in &fip.body {
                let _ = line_no;
                match instr {
                    Instruction::ConstInt { dst, .. } => {
                        changed |= define(&mut types, &mut locals, dst, TypeDesc::Int);
                    }
                    Instruction::Assign { dst, src } => {
                        if let Some(ty) = types.get(src).cloned() {
                            changed |= define(&mut types, &mut locals, dst, ty);
                        }
                    }
                    Instruction::AddrOf { dst, func } => {
                        if let Some(sig) = functions.get(func) {
                            changed |= define(
                                &mut types,
                                &mut locals,
                                dst,
                                TypeDesc::FuncRef(Box::new(sig.clone())),
                            );
                        }
                    }
                    Instruction::FieldLoad { dst, global, field } => {
                        let ft = self
                            .globals
                            .get(global)
                            .and_then(|r| self.records.get(r))
                            .and_then(|r| r.field_type(field))
                            .cloned();
                        if let Some(ty) = ft {
                            changed |= define(&mut types, &mut locals, dst, ty);
                        }
                    }
                    Instruction::CallDirect {
                        callee,
                        dst: Some(dst),
                        ..
                    } => {
                        if let Some(sig) = functions.get(callee) {
                            if sig.return_type != TypeDesc::Void {
                                changed |= define(
                                    &mut types,
                                    &mut locals,
                                    dst,
                                    sig.return_type.clone(),
                                );
                            }
                        }
                    }
                    Instruction::CallIndirect {
                        dst: Some(dst),
                        declared,
                        ..
                    }
                    | Instruction::MonitoredCall {
                        dst: Some(dst),
                        declared,
                        ..
                    }
                        if declared.return_type != TypeDesc::Void => {
                            changed |= define(
                                &mut types,
                                &mut locals,
                                dst,
                                declared.return_type.clone(),
                            );
                        }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        locals
    }
}

/// Parse firmware IR text into a validated [`FirmwareModule`].
///
/// On failure, returns every diagnostic found (syntax, resolution, and type
/// errors carry 1-based line/column positions).
pub fn parse_firmware(text: &str) -> Result<FirmwareModule, Vec<Diagnostic>> {
    let mut p = Parser::new();
    for (idx, line) in text.lines().enumerate() {
        p.feed_line(idx + 1, line);
    }
    if p.current.is_some() {
        let fip = p.current.take().unwrap();
        p.diags.push(Diagnostic::new(
            fip.name_line,
            1,
            DiagnosticKind::Syntax,
            format!("function '{}' is missing its closing '}}'", fip.name),
        ));
    }

    // Assemble the signature map up front so inference can see every callee.
    let mut signatures: BTreeMap<FuncName, Signature> = BTreeMap::new();
    for fip in &p.functions {
        let sig = Signature {
            params: fip.params.iter().map(|(_, t)| t.clone()).collect(),
            return_type: fip.return_type.clone(),
        };
        if signatures.insert(fip.name.clone(), sig).is_some() {
            p.diags.push(Diagnostic::new(
                fip.name_line,
                1,
                DiagnosticKind::Resolution,
                format!("duplicate function '{}'", fip.name),
            ));
        }
    }

    // Resolution checks that need line positions.
    let mut inferred: Vec<(FuncName, BTreeMap<Var, TypeDesc>)> = Vec::new();
    let fips = std::mem::take(&mut p.functions);
    for fip in &fips {
        let locals = p.infer_locals(fip, &signatures);
        let known = |v: &Var| {
            locals.contains_key(v) || fip.params.iter().any(|(pv, _)| pv == v)
        };
        let ty_of = |v: &Var| -> Option<TypeDesc> {
            locals
                .get(v)
                .cloned()
                .or_else(|| fip.params.iter().find(|(pv, _)| pv == v).map(|(_, t)| t.clone()))
        };
        for (line_no, instr) in &fip.body {
            let check_var = |v: &Var, p: &mut Parser| {
                if !known(v) {
                    p.diags.push(Diagnostic::new(
                        *line_no,
                        1,
                        DiagnosticKind::Resolution,
                        format!("variable '{v}' in '{}' is never defined", fip.name),
                    ));
                }
            };
            match instr {
                Instruction::Assign { src, .. } => check_var(src, &mut p),
                Instruction::AddrOf { func, .. } => {
                    if !signatures.contains_key(func) {
                        p.diags.push(Diagnostic::new(
                            *line_no,
                            1,
                            DiagnosticKind::Resolution,
                            format!("addrof of unknown function '{func}'"),
                        ));
                    }
                }
                Instruction::FieldStore { global, field, src } => {
                    check_var(src, &mut p);
                    p.check_field(*line_no, global, field);
                }
                Instruction::FieldLoad { global, field, .. } => {
                    p.check_field(*line_no, global, field);
                }
                Instruction::CallDirect { callee, args, dst } => {
                    for a in args {
                        check_var(a, &mut p);
                    }
                    match signatures.get(callee) {
                        None => p.diags.push(Diagnostic::new(
                            *line_no,
                            1,
                            DiagnosticKind::Resolution,
                            format!("call to unknown function '{callee}'"),
                        )),
                        Some(sig) => {
                            if sig.params.len() != args.len() {
                                p.diags.push(Diagnostic::new(
                                    *line_no,
                                    1,
                                    DiagnosticKind::Type,
                                    format!(
                                        "call to '{callee}' passes {} args, expected {}",
                                        args.len(),
                                        sig.params.len()
                                    ),
                                ));
                            }
                            if dst.is_some() && sig.return_type == TypeDesc::Void {
                                p.diags.push(Diagnostic::new(
                                    *line_no,
                                    1,
                                    DiagnosticKind::Type,
                                    format!("cannot bind result of void call to '{callee}'"),
                                ));
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
                        check_var(a, &mut p);
                    }
                    check_var(ref_var, &mut p);
                    p.check_icall_ref(*line_no, &fip.name, ref_var, declared, ty_of(ref_var));
                    if dst.is_some() && declared.return_type == TypeDesc::Void {
                        p.diags.push(Diagnostic::new(
                            *line_no,
                            1,
                            DiagnosticKind::Type,
                            "cannot bind result of void indirect call".to_string(),
                        ));
                    }
                }
                Instruction::MonitoredCall {
                    target,
                    args,
                    declared,
                    ..
                } => {
                    for a in args {
                        check_var(a, &mut p);
                    }
                    match target {
                        CallTarget::Ref(ref_var) => {
                            check_var(ref_var, &mut p);
                            p.check_icall_ref(
                                *line_no,
                                &fip.name,
                                ref_var,
                                declared,
                                ty_of(ref_var),
                            );
                        }
                        CallTarget::Direct(callee) => {
                            if !signatures.contains_key(callee) {
                                p.diags.push(Diagnostic::new(
                                    *line_no,
                                    1,
                                    DiagnosticKind::Resolution,
                                    format!("monitored call to unknown function '{callee}'"),
                                ));
                            }
                        }
                    }
                }
                Instruction::Return { value: Some(v) }
                | Instruction::MonitoredReturn { value: Some(v) } => check_var(v, &mut p),
                Instruction::SetMode { mode_var } => {
                    check_var(mode_var, &mut p);
                    if let Some(ty) = ty_of(mode_var) {
                        if ty != TypeDesc::Int {
                            p.diags.push(Diagnostic::new(
                                *line_no,
                                1,
                                DiagnosticKind::Type,
                                format!("setmode operand '{mode_var}' must be int, got {ty}"),
                            ));
                        }
                    }
                }
                Instruction::Effect { args, .. } => {
                    for a in args {
                        check_var(a, &mut p);
                    }
                }
                Instruction::CondGoto { cond, .. } => {
                    check_var(cond, &mut p);
                    if let Some(ty) = ty_of(cond) {
                        if ty != TypeDesc::Int && ty != TypeDesc::Bool {
                            p.diags.push(Diagnostic::new(
                                *line_no,
                                1,
                                DiagnosticKind::Type,
                                format!("ifgoto condition '{cond}' must be int or bool, got {ty}"),
                            ));
                        }
                    }
                }
                Instruction::TrampolineModeEntry { cur, new } => {
                    check_var(cur, &mut p);
                    check_var(new, &mut p);
                }
                _ => {}
            }
        }
        inferred.push((fip.name.clone(), locals));
    }

    // Mode id table: explicit entries first, then auto-assignment in
    // declaration order using the smallest unused non-negative ids.
    let mut mode_ids: BTreeMap<i64, String> = BTreeMap::new();
    for (line, id, name) in &p.explicit_mode_ids {
        if !p.mode_names.contains(name) {
            p.diags.push(Diagnostic::new(
                *line,
                1,
                DiagnosticKind::Resolution,
                format!("modeid names undeclared mode '{name}'"),
            ));
            continue;
        }
        if mode_ids.contains_key(id) || mode_ids.values().any(|n| n == name) {
            p.diags.push(Diagnostic::new(
                *line,
                1,
                DiagnosticKind::Invariant,
                format!("modeid {id} {name} conflicts with an earlier modeid"),
            ));
            continue;
        }
        mode_ids.insert(*id, name.clone());
    }
    let mut next_id = 0i64;
    for name in &p.mode_names {
        if mode_ids.values().any(|n| n == name) {
            continue;
        }
        while mode_ids.contains_key(&next_id) {
            next_id += 1;
        }
        mode_ids.insert(next_id, name.clone());
    }

    if p.mode_names.is_empty() {
        p.diags.push(Diagnostic::new(
            0,
            0,
            DiagnosticKind::Invariant,
            "module declares no modes",
        ));
    }
    let entry = match &p.entry {
        Some((_, name)) => name.clone(),
        None => {
            p.diags.push(Diagnostic::new(
                0,
                0,
                DiagnosticKind::Invariant,
                "module declares no entry function",
            ));
            FuncName::new("")
        }
    };

    if !p.diags.is_empty() {
        p.diags.sort_by_key(|d| (d.line, d.col));
        return Err(p.diags);
    }

    let switchers = p.switchers.clone();
    let mut functions = BTreeMap::new();
    let locals_by_name: BTreeMap<FuncName, BTreeMap<Var, TypeDesc>> =
        inferred.into_iter().collect();
    for fip in fips {
        let locals = locals_by_name.get(&fip.name).cloned().unwrap_or_default();
        let is_mode_switcher = switchers.contains(&fip.name);
        functions.insert(
            fip.name.clone(),
            FunctionDef {
                name: fip.name,
                params: fip.params,
                return_type: fip.return_type,
                locals,
                body: fip.body.into_iter().map(|(_, i)| i).collect(),
                is_mode_switcher,
            },
        );
    }

    let module = FirmwareModule {
        functions,
        entry,
        mode_switchers: switchers,
        mode_names: p.mode_names,
        mode_ids,
        records: p.records,
        globals: p.globals,
    };

    let invariant_diags = validate(&module);
    if invariant_diags.is_empty() {
        Ok(module)
    } else {
        Err(invariant_diags)
    }
}

impl Parser {
    fn check_field(&mut self, line: usize, global: &str, field: &str) {
        match self.globals.get(global) {
            None => self.diags.push(Diagnostic::new(
                line,
                1,
                DiagnosticKind::Resolution,
                format!("unknown global '%{global}'"),
            )),
            Some(rec_name) => {
                let rec = self.records.get(rec_name).expect("global checked at decl");
                if rec.field_type(field).is_none() {
                    self.diags.push(Diagnostic::new(
                        line,
                        1,
                        DiagnosticKind::Resolution,
                        format!("record '{rec_name}' has no field '{field}'"),
                    ));
                }
            }
        }
    }

    fn check_icall_ref(
        &mut self,
        line: usize,
        func: &FuncName,
        ref_var: &Var,
        declared: &Signature,
        ref_ty: Option<TypeDesc>,
    ) {
        match ref_ty {
            Some(TypeDesc::FuncRef(sig)) => {
                if *sig != *declared {
                    self.diags.push(Diagnostic::new(
                        line,
                        1,
                        DiagnosticKind::Type,
                        format!(
                            "indirect call in '{func}' declares {declared} but '{ref_var}' has type fnref{sig}"
                        ),
                    ));
                }
            }
            Some(other) => self.diags.push(Diagnostic::new(
                line,
                1,
                DiagnosticKind::Type,
                format!("indirect call in '{func}' through '{ref_var}' of non-fnref type {other}"),
            )),
            None => {} // undefined-variable diagnostic already emitted
        }
    }
}
