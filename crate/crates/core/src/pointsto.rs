//! Field-sensitive inclusion-based points-to analysis for function references.
//!
//! The only pointer-like values in the IR are function references, and the
//! only memory they flow through is named fields of record globals, so the
//! abstract locations are concrete: one location per function-local variable,
//! per `global.field` pair, and per function object. There is nothing to
//! dereference on the left-hand side, which keeps every constraint a direct
//! inclusion between two known locations:
//!
//! - `%d = addrof F`      seeds `F` into the function-object location and
//!   copies it into `%d`
//! - `%d = %s`            copy edge `s → d`
//! - `%g.f = %s`          copy edge `s → (g, f)`
//! - `%d = %g.f`          copy edge `(g, f) → d`
//! - direct calls         argument edges into the callee's parameters and a
//!   return edge from the callee's return location into the bound result
//! - `ret %v`             copy edge `v → ` the function's return location
//! - indirect calls       resolved on the fly: whenever a new function shows
//!   up in the callee expression's points-to set, the site is wired to that
//!   function like a direct call
//!
//! The solver is flow- and context-insensitive, performs no strong updates,
//! and runs a FIFO worklist seeded in program order. Every successful
//! insertion of a function into a points-to set is counted; the total is
//! bounded by `|locations| * |functions|`, which also bounds the running time.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::ir::{
    validate, CallTarget, FirmwareModule, FuncName, Instruction, InvalidModule, Var,
};

/// Name of the pseudo-variable holding a function's returned references.
const RETURN_SLOT: &str = "__ret";

/// An abstract memory location.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Loc {
    /// A local variable or parameter of a function (including the return
    /// slot pseudo-variable).
    Var(FuncName, Var),
    /// A record global as a whole. Globals are only ever accessed through
    /// their fields, so this location never accumulates references; it exists
    /// so every named memory region has a location.
    Global(String),
    /// One field of a record global: `(global, field)`.
    Field(String, String),
    /// The immutable function object created by `addrof`.
    FuncObj(FuncName),
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Var(func, var) => write!(f, "{func}:{var}"),
            Loc::Global(g) => write!(f, "{g}"),
            Loc::Field(g, field) => write!(f, "{g}.{field}"),
            Loc::FuncObj(func) => write!(f, "&{func}"),
        }
    }
}

/// Result of the points-to analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointsToResult {
    /// Points-to sets; locations with empty sets may be absent.
    pub pts: BTreeMap<Loc, BTreeSet<FuncName>>,
    /// Number of successful set insertions the solver performed.
    pub insertions: usize,
}

static EMPTY: BTreeSet<FuncName> = BTreeSet::new();

impl PointsToResult {
    /// The points-to set of `loc` (empty if the location never received a
    /// reference).
    pub fn pts_of(&self, loc: &Loc) -> &BTreeSet<FuncName> {
        self.pts.get(loc).unwrap_or(&EMPTY)
    }
}

/// One indirect call site awaiting resolution.
struct IndirectSite {
    args: Vec<Loc>,
    dst: Option<Loc>,
}

struct Solver<'m> {
    module: &'m FirmwareModule,
    pts: BTreeMap<Loc, BTreeSet<FuncName>>,
    succs: BTreeMap<Loc, BTreeSet<Loc>>,
    worklist: VecDeque<Loc>,
    queued: BTreeSet<Loc>,
    insertions: usize,
    /// Indirect call sites indexed by the location of their callee expression.
    sites: Vec<IndirectSite>,
    sites_by_ref: BTreeMap<Loc, Vec<usize>>,
    /// `(site, callee)` pairs already wired, so each pairing happens once.
    wired: BTreeSet<(usize, FuncName)>,
}

impl<'m> Solver<'m> {
    fn new(module: &'m FirmwareModule) -> Self {
        Solver {
            module,
            pts: BTreeMap::new(),
            succs: BTreeMap::new(),
            worklist: VecDeque::new(),
            queued: BTreeSet::new(),
            insertions: 0,
            sites: Vec::new(),
            sites_by_ref: BTreeMap::new(),
            wired: BTreeSet::new(),
        }
    }

    fn queue(&mut self, loc: Loc) {
        if self.queued.insert(loc.clone()) {
            self.worklist.push_back(loc);
        }
    }

    /// Record `func ∈ pts(loc)`; queues `loc` when the set grows.
    fn insert_fact(&mut self, loc: Loc, func: FuncName) {
        if self.pts.entry(loc.clone()).or_default().insert(func) {
            self.insertions += 1;
            self.queue(loc);
        }
    }

    /// Add the inclusion edge `from → to`, propagating what `from` already
    /// holds.
    fn add_edge(&mut self, from: Loc, to: Loc) {
        if self
            .succs
            .entry(from.clone())
            .or_default()
            .insert(to.clone())
        {
            let known: Vec<FuncName> = self.pts.get(&from).into_iter().flatten().cloned().collect();
            for func in known {
                self.insert_fact(to.clone(), func);
            }
        }
    }

    /// Wire one indirect call site to a newly discovered callee, exactly like
    /// a direct call: pairwise argument edges and a return edge. Arity
    /// mismatches wire only the shared prefix; the signature pruning pass is
    /// what rejects such candidates, not the points-to solver.
    fn wire_site(&mut self, site_idx: usize, callee: FuncName) {
        if !self.wired.insert((site_idx, callee.clone())) {
            return;
        }
        let Some(target) = self.module.functions.get(&callee) else {
            return;
        };
        let (args, dst) = {
            let site = &self.sites[site_idx];
            (site.args.clone(), site.dst.clone())
        };
        for (arg, (param, _)) in args.iter().zip(&target.params) {
            self.add_edge(arg.clone(), Loc::Var(callee.clone(), param.clone()));
        }
        if let Some(dst) = dst {
            self.add_edge(Loc::Var(callee.clone(), Var::new(RETURN_SLOT)), dst);
        }
    }

    fn seed(&mut self) {
        // Program order: functions in module order, instructions in body
        // order.
        for (fname, func) in &self.module.functions {
            for instr in &func.body {
                let var_loc = |v: &Var| Loc::Var(fname.clone(), v.clone());
                match instr {
                    Instruction::AddrOf { dst, func: target } => {
                        self.insert_fact(Loc::FuncObj(target.clone()), target.clone());
                        self.add_edge(Loc::FuncObj(target.clone()), var_loc(dst));
                    }
                    Instruction::Assign { dst, src } => {
                        self.add_edge(var_loc(src), var_loc(dst));
                    }
                    Instruction::FieldStore { global, field, src } => {
                        self.add_edge(var_loc(src), Loc::Field(global.clone(), field.clone()));
                    }
                    Instruction::FieldLoad { dst, global, field } => {
                        self.add_edge(Loc::Field(global.clone(), field.clone()), var_loc(dst));
                    }
                    Instruction::CallDirect { callee, args, dst } => {
                        self.wire_direct(fname, callee, args, dst.as_ref());
                    }
                    Instruction::MonitoredCall {
                        target: CallTarget::Direct(callee),
                        args,
                        dst,
                        ..
                    } => {
                        self.wire_direct(fname, callee, args, dst.as_ref());
                    }
                    Instruction::CallIndirect {
                        ref_var, args, dst, ..
                    }
                    | Instruction::MonitoredCall {
                        target: CallTarget::Ref(ref_var),
                        args,
                        dst,
                        ..
                    } => {
                        let site = IndirectSite {
                            args: args.iter().map(&var_loc).collect(),
                            dst: dst.as_ref().map(&var_loc),
                        };
                        let idx = self.sites.len();
                        self.sites.push(site);
                        self.sites_by_ref
                            .entry(var_loc(ref_var))
                            .or_default()
                            .push(idx);
                    }
                    Instruction::Return { value: Some(v) }
                    | Instruction::MonitoredReturn { value: Some(v) } => {
                        self.add_edge(var_loc(v), Loc::Var(fname.clone(), Var::new(RETURN_SLOT)));
                    }
                    _ => {}
                }
            }
        }
    }

    fn wire_direct(
        &mut self,
        caller: &FuncName,
        callee: &FuncName,
        args: &[Var],
        dst: Option<&Var>,
    ) {
        let Some(target) = self.module.functions.get(callee) else {
            return;
        };
        let params: Vec<Var> = target.params.iter().map(|(p, _)| p.clone()).collect();
        for (arg, param) in args.iter().zip(params) {
            self.add_edge(
                Loc::Var(caller.clone(), arg.clone()),
                Loc::Var(callee.clone(), param),
            );
        }
        if let Some(dst) = dst {
            self.add_edge(
                Loc::Var(callee.clone(), Var::new(RETURN_SLOT)),
                Loc::Var(caller.clone(), dst.clone()),
            );
        }
    }

    fn run(&mut self) {
        self.seed();
        while let Some(loc) = self.worklist.pop_front() {
            self.queued.remove(&loc);
            let held: Vec<FuncName> = self.pts.get(&loc).into_iter().flatten().cloned().collect();
            let succ: Vec<Loc> = self
                .succs
                .get(&loc)
                .into_iter()
                .flatten()
                .cloned()
                .collect();
            for to in succ {
                for func in &held {
                    self.insert_fact(to.clone(), func.clone());
                }
            }
            // Resolve indirect call sites whose callee expression is this
            // location.
            let site_idxs: Vec<usize> = self
                .sites_by_ref
                .get(&loc).cloned()
                .unwrap_or_default();
            for idx in site_idxs {
                for func in &held {
                    self.wire_site(idx, func.clone());
                }
            }
        }
    }

    /// Number of abstract locations in the module, used for the insertion
    /// bound: per-function variables plus a return slot, record-global
    /// fields, whole globals, and one object per function.
    fn location_count(&self) -> usize {
        let per_fn: usize = self
            .module
            .functions
            .values()
            .map(|f| f.params.len() + f.locals.len() + 1)
            .sum();
        let fields: usize = self
            .module
            .globals
            .values()
            .filter_map(|rec| self.module.records.get(rec))
            .map(|rec| rec.fields.len())
            .sum();
        per_fn + fields + self.module.globals.len() + self.module.functions.len()
    }
}

/// Run the inclusion-based points-to analysis on a valid module.
pub fn solve_andersen(module: &FirmwareModule) -> Result<PointsToResult, InvalidModule> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags));
    }
    let mut solver = Solver::new(module);
    solver.run();
    let bound = solver.location_count() * module.functions.len().max(1);
    assert!(
        solver.insertions <= bound,
        "points-to solver exceeded its insertion bound: {} > {bound}",
        solver.insertions
    );
    Ok(PointsToResult {
        pts: solver.pts,
        insertions: solver.insertions,
    })
}
