//! Slow-but-obvious reference implementations.
//!
//! These are written as declarative fixpoints with no worklists, no edge
//! graphs, and no incremental state: every pass re-derives every consequence
//! from scratch until nothing changes. They exist purely to check the
//! production algorithms.

use std::collections::{BTreeMap, BTreeSet};

use modeguard_core::ir::CallTarget;
use modeguard_core::{
    CallEdge, CallGraph, CallKind, CallSiteId, FirmwareModule, FuncName, Instruction, Loc,
    TypeDesc, Var,
};

type Pts = BTreeMap<Loc, BTreeSet<FuncName>>;

fn union_into(pts: &mut Pts, dst: Loc, add: &BTreeSet<FuncName>) -> bool {
    if add.is_empty() {
        return false;
    }
    let set = pts.entry(dst).or_default();
    let before = set.len();
    set.extend(add.iter().cloned());
    set.len() != before
}

fn get(pts: &Pts, loc: &Loc) -> BTreeSet<FuncName> {
    pts.get(loc).cloned().unwrap_or_default()
}

/// Declarative points-to fixpoint: apply every inference rule to every
/// instruction until a full pass changes nothing.
pub fn points_to_oracle(module: &FirmwareModule) -> Pts {
    let mut pts: Pts = BTreeMap::new();
    loop {
        let mut changed = false;
        for (fname, func) in &module.functions {
            let var_loc = |v: &Var| Loc::Var(fname.clone(), v.clone());
            for instr in &func.body {
                match instr {
                    Instruction::AddrOf { dst, func: target } => {
                        let obj = Loc::FuncObj(target.clone());
                        let singleton: BTreeSet<FuncName> =
                            std::iter::once(target.clone()).collect();
                        changed |= union_into(&mut pts, obj.clone(), &singleton);
                        let held = get(&pts, &obj);
                        changed |= union_into(&mut pts, var_loc(dst), &held);
                    }
                    Instruction::Assign { dst, src } => {
                        let held = get(&pts, &var_loc(src));
                        changed |= union_into(&mut pts, var_loc(dst), &held);
                    }
                    Instruction::FieldStore { global, field, src } => {
                        let held = get(&pts, &var_loc(src));
                        changed |= union_into(
                            &mut pts,
                            Loc::Field(global.clone(), field.clone()),
                            &held,
                        );
                    }
                    Instruction::FieldLoad { dst, global, field } => {
                        let held = get(&pts, &Loc::Field(global.clone(), field.clone()));
                        changed |= union_into(&mut pts, var_loc(dst), &held);
                    }
                    Instruction::CallDirect { callee, args, dst }
                    | Instruction::MonitoredCall {
                        target: CallTarget::Direct(callee),
                        args,
                        dst,
                        ..
                    } => {
                        changed |= wire(module, &mut pts, fname, callee, args, dst);
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
                        for callee in get(&pts, &var_loc(ref_var)) {
                            changed |= wire(module, &mut pts, fname, &callee, args, dst);
                        }
                    }
                    Instruction::Return { value: Some(v) }
                    | Instruction::MonitoredReturn { value: Some(v) } => {
                        let held = get(&pts, &var_loc(v));
                        changed |= union_into(
                            &mut pts,
                            Loc::Var(fname.clone(), Var::new("__ret")),
                            &held,
                        );
                    }
                    _ => {}
                }
            }
        }
        if !changed {
            return pts;
        }
    }
}

/// Flow one call's arguments into the callee's parameters and its return slot
/// into the bound destination.
fn wire(
    module: &FirmwareModule,
    pts: &mut Pts,
    caller: &FuncName,
    callee: &FuncName,
    args: &[Var],
    dst: &Option<Var>,
) -> bool {
    let Some(target) = module.functions.get(callee) else {
        return false;
    };
    let mut changed = false;
    for (arg, (param, _)) in args.iter().zip(&target.params) {
        let held = get(pts, &Loc::Var(caller.clone(), arg.clone()));
        changed |= union_into(pts, Loc::Var(callee.clone(), param.clone()), &held);
    }
    if let Some(dst) = dst {
        let held = get(pts, &Loc::Var(callee.clone(), Var::new("__ret")));
        changed |= union_into(pts, Loc::Var(caller.clone(), dst.clone()), &held);
    }
    changed
}

/// Brute-force reachability: grow the set by scanning every edge until a full
/// pass adds nothing.
pub fn reachable_oracle(graph: &CallGraph, root: &FuncName) -> BTreeSet<FuncName> {
    let mut reach: BTreeSet<FuncName> = std::iter::once(root.clone()).collect();
    loop {
        let mut changed = false;
        for edge in &graph.edges {
            if reach.contains(&edge.caller) && reach.insert(edge.callee.clone()) {
                changed = true;
            }
        }
        if !changed {
            return reach;
        }
    }
}

/// Independent baseline call-graph derivation from an oracle points-to map.
pub fn callgraph_oracle(module: &FirmwareModule, pts: &Pts) -> CallGraph {
    let mut edges = BTreeSet::new();
    for (fname, func) in &module.functions {
        for (idx, instr) in func.body.iter().enumerate() {
            match instr {
                Instruction::CallDirect { callee, .. }
                | Instruction::MonitoredCall {
                    target: CallTarget::Direct(callee),
                    ..
                } => {
                    edges.insert(CallEdge {
                        caller: fname.clone(),
                        site: CallSiteId(idx),
                        callee: callee.clone(),
                        kind: CallKind::Direct,
                    });
                }
                Instruction::CallIndirect { ref_var, .. }
                | Instruction::MonitoredCall {
                    target: CallTarget::Ref(ref_var),
                    ..
                } => {
                    for callee in get(pts, &Loc::Var(fname.clone(), ref_var.clone())) {
                        edges.insert(CallEdge {
                            caller: fname.clone(),
                            site: CallSiteId(idx),
                            callee,
                            kind: CallKind::Indirect,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    CallGraph {
        nodes: module.functions.keys().cloned().collect(),
        edges,
    }
}

/// Independent signature filter over indirect edges.
pub fn signature_filter_oracle(module: &FirmwareModule, graph: &CallGraph) -> CallGraph {
    let mut out = graph.clone();
    out.edges.retain(|edge| {
        if edge.kind == CallKind::Direct {
            return true;
        }
        let func = &module.functions[&edge.caller];
        let (declared, has_dst) = match &func.body[edge.site.0] {
            Instruction::CallIndirect { declared, dst, .. }
            | Instruction::MonitoredCall { declared, dst, .. } => (declared, dst.is_some()),
            _ => return true,
        };
        let callee = match module.functions.get(&edge.callee) {
            Some(c) => c,
            None => return false,
        };
        let callee_params: Vec<TypeDesc> = callee.params.iter().map(|(_, t)| t.clone()).collect();
        callee_params == declared.params
            && !(has_dst && callee.return_type == TypeDesc::Void)
    });
    out
}

/// Independent address-taken fixpoint using the brute-force reachability
/// oracle for each round.
pub fn address_taken_filter_oracle(module: &FirmwareModule, graph: &CallGraph) -> CallGraph {
    let mut out = graph.clone();
    loop {
        let region = reachable_oracle(&out, &module.entry);
        let mut taken: BTreeSet<FuncName> = BTreeSet::new();
        for fname in &region {
            if let Some(func) = module.functions.get(fname) {
                for instr in &func.body {
                    if let Instruction::AddrOf { func: target, .. } = instr {
                        taken.insert(target.clone());
                    }
                }
            }
        }
        let before = out.edges.len();
        out.edges
            .retain(|e| e.kind == CallKind::Direct || taken.contains(&e.callee));
        if out.edges.len() == before {
            return out;
        }
    }
}
