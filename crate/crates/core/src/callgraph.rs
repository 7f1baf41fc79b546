//! Call-graph construction and pruning.
//!
//! The baseline graph has one edge per `(call site, possible callee)` pair:
//! direct calls contribute their single static target, indirect calls
//! contribute every function in the callee expression's points-to set. Two
//! passes then remove spurious indirect edges; direct edges are never touched:
//!
//! 1. **Signature pruning** keeps an indirect edge only if the candidate's
//!    parameter list structurally equals the signature declared at the site,
//!    and, when the site binds a result, the candidate returns non-void.
//! 2. **Address-taken pruning** repeatedly deletes indirect edges whose callee
//!    is never address-taken inside the entry-reachable region, recomputing
//!    reachability after each round until a fixpoint. A cheaper single-round
//!    variant is provided for comparison; it can keep edges the fixpoint
//!    removes, because deleting an edge may strand the only function whose
//!    body kept another callee's address alive.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::ir::{
    validate, CallTarget, FirmwareModule, FuncName, Instruction, InvalidModule, Signature,
    TypeDesc,
};
use crate::pointsto::{Loc, PointsToResult};

/// Index of a call instruction within its function's body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallSiteId(pub usize);

impl fmt::Display for CallSiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// How a call edge was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CallKind {
    /// Static target named at the site.
    Direct,
    /// Candidate resolved from a points-to set.
    Indirect,
}

/// One possible transfer of control from a call site to a callee.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallEdge {
    pub caller: FuncName,
    pub site: CallSiteId,
    pub callee: FuncName,
    pub kind: CallKind,
}

/// A call graph over a firmware module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub nodes: BTreeSet<FuncName>,
    pub edges: BTreeSet<CallEdge>,
}

impl CallGraph {
    /// Functions reachable from `root` over the current edges, including
    /// `root` itself.
    pub fn reachable_from(&self, root: &FuncName) -> BTreeSet<FuncName> {
        let mut seen: BTreeSet<FuncName> = BTreeSet::new();
        let mut queue: VecDeque<FuncName> = VecDeque::new();
        seen.insert(root.clone());
        queue.push_back(root.clone());
        // Group edges by caller once so the walk is linear in edges.
        let mut by_caller: BTreeMap<&FuncName, Vec<&FuncName>> = BTreeMap::new();
        for edge in &self.edges {
            by_caller.entry(&edge.caller).or_default().push(&edge.callee);
        }
        while let Some(func) = queue.pop_front() {
            if let Some(callees) = by_caller.get(&func) {
                for callee in callees {
                    if seen.insert((*callee).clone()) {
                        queue.push_back((*callee).clone());
                    }
                }
            }
        }
        seen
    }

    pub fn indirect_edges(&self) -> impl Iterator<Item = &CallEdge> {
        self.edges.iter().filter(|e| e.kind == CallKind::Indirect)
    }
}

/// Build the baseline call graph from a module and its points-to result.
pub fn build_callgraph(
    module: &FirmwareModule,
    points_to: &PointsToResult,
) -> Result<CallGraph, InvalidModule> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags));
    }
    let mut edges = BTreeSet::new();
    for (fname, func) in &module.functions {
        for (idx, instr) in func.body.iter().enumerate() {
            let site = CallSiteId(idx);
            match instr {
                Instruction::CallDirect { callee, .. }
                | Instruction::MonitoredCall {
                    target: CallTarget::Direct(callee),
                    ..
                } => {
                    edges.insert(CallEdge {
                        caller: fname.clone(),
                        site,
                        callee: callee.clone(),
                        kind: CallKind::Direct,
                    });
                }
                Instruction::CallIndirect { ref_var, .. }
                | Instruction::MonitoredCall {
                    target: CallTarget::Ref(ref_var),
                    ..
                } => {
                    let loc = Loc::Var(fname.clone(), ref_var.clone());
                    for callee in points_to.pts_of(&loc) {
                        edges.insert(CallEdge {
                            caller: fname.clone(),
                            site,
                            callee: callee.clone(),
                            kind: CallKind::Indirect,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    Ok(CallGraph {
        nodes: module.functions.keys().cloned().collect(),
        edges,
    })
}

/// The signature declared at an indirect call site, plus whether the site
/// binds a result.
fn site_signature<'m>(
    module: &'m FirmwareModule,
    edge: &CallEdge,
) -> Option<(&'m Signature, bool)> {
    let func = module.functions.get(&edge.caller)?;
    match func.body.get(edge.site.0)? {
        Instruction::CallIndirect { declared, dst, .. }
        | Instruction::MonitoredCall { declared, dst, .. } => Some((declared, dst.is_some())),
        _ => None,
    }
}

/// Remove indirect edges whose callee cannot satisfy the signature declared
/// at the call site. Direct edges pass through untouched.
pub fn prune_signature(graph: &CallGraph, module: &FirmwareModule) -> CallGraph {
    let mut pruned = graph.clone();
    pruned.edges.retain(|edge| {
        if edge.kind == CallKind::Direct {
            return true;
        }
        let Some((declared, has_dst)) = site_signature(module, edge) else {
            return true; // site not found in this module; leave the edge alone
        };
        let Some(callee) = module.functions.get(&edge.callee) else {
            return false;
        };
        let callee_params: Vec<&TypeDesc> = callee.params.iter().map(|(_, t)| t).collect();
        let declared_params: Vec<&TypeDesc> = declared.params.iter().collect();
        if callee_params != declared_params {
            return false;
        }
        if has_dst && callee.return_type == TypeDesc::Void {
            return false;
        }
        true
    });
    pruned
}

/// Functions whose address is taken inside `region`.
fn address_taken_in(module: &FirmwareModule, region: &BTreeSet<FuncName>) -> BTreeSet<FuncName> {
    let mut taken = BTreeSet::new();
    for fname in region {
        let Some(func) = module.functions.get(fname) else {
            continue;
        };
        for instr in &func.body {
            if let Instruction::AddrOf { func: target, .. } = instr {
                taken.insert(target.clone());
            }
        }
    }
    taken
}

fn address_taken_round(graph: &mut CallGraph, module: &FirmwareModule) -> bool {
    let reachable = graph.reachable_from(&module.entry);
    let taken = address_taken_in(module, &reachable);
    let before = graph.edges.len();
    graph
        .edges
        .retain(|edge| edge.kind == CallKind::Direct || taken.contains(&edge.callee));
    graph.edges.len() != before
}

/// Remove indirect edges to functions that are never address-taken in the
/// entry-reachable region, iterating to a fixpoint: each deletion round can
/// shrink the region, which can invalidate further address-taken sites.
pub fn prune_address_taken(graph: &CallGraph, module: &FirmwareModule) -> CallGraph {
    let mut pruned = graph.clone();
    while address_taken_round(&mut pruned, module) {}
    pruned
}

/// Single-round variant of [`prune_address_taken`]: computes reachability and
/// address-taken sets once and deletes once. Sound but weaker — edges kept in
/// the first round may only be removable after the region shrinks.
pub fn prune_address_taken_single_pass(
    graph: &CallGraph,
    module: &FirmwareModule,
) -> CallGraph {
    let mut pruned = graph.clone();
    address_taken_round(&mut pruned, module);
    pruned
}

/// Precision arithmetic failure.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("precision is undefined for an empty baseline call graph")]
    EmptyBaseline,
    #[error("pruned graph has {pruned} edges, more than the baseline {original}")]
    PrunedExceedsBaseline { original: usize, pruned: usize },
}

/// Fraction of baseline edges removed by pruning, in `[0, 1]`.
pub fn precision(original_edges: usize, pruned_edges: usize) -> Result<f64, DomainError> {
    if original_edges == 0 {
        return Err(DomainError::EmptyBaseline);
    }
    if pruned_edges > original_edges {
        return Err(DomainError::PrunedExceedsBaseline {
            original: original_edges,
            pruned: pruned_edges,
        });
    }
    Ok((original_edges - pruned_edges) as f64 / original_edges as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_firmware;
    use crate::pointsto::solve_andersen;

    /// The second round matters: deleting the edge to `helper_f` (whose
    /// address is taken only in dead code) removes the only body that kept
    /// `helper_g` address-taken, so the fixpoint also deletes the edge to
    /// `helper_g` while the single-round variant keeps it.
    const TWO_ROUND: &str = "\
modes ALPHA
entry main
switcher flip

record Tbl { a: fnref() -> void, b: fnref() -> void }
global %t : Tbl

fn main(%x: int) -> void {
  %fa = %t.a
  icall %fa() : () -> void
  %fb = %t.b
  icall %fb() : () -> void
  ret
}

fn helper_f() -> void {
  %h = addrof helper_g
  %t.b = %h
  ret
}

fn helper_g() -> void {
  effect done()
  ret
}

fn dead_seed() -> void {
  %h = addrof helper_f
  %t.a = %h
  ret
}

fn flip(%w: int) -> void {
  ifgoto %w Lset
  ret
  label Lset
  %m = const 1
  setmode %m
  ret
}
";

    fn graph_of(text: &str) -> (crate::ir::FirmwareModule, CallGraph) {
        let module = parse_firmware(text).unwrap();
        let pts = solve_andersen(&module).unwrap();
        let graph = build_callgraph(&module, &pts).unwrap();
        (module, graph)
    }

    fn indirect_callees(graph: &CallGraph) -> Vec<String> {
        graph.indirect_edges().map(|e| e.callee.0.clone()).collect()
    }

    #[test]
    fn baseline_includes_all_points_to_candidates() {
        let (_, graph) = graph_of(TWO_ROUND);
        assert_eq!(indirect_callees(&graph), vec!["helper_f", "helper_g"]);
    }

    #[test]
    fn address_taken_fixpoint_needs_a_second_round() {
        let (module, graph) = graph_of(TWO_ROUND);
        let sig = prune_signature(&graph, &module);
        assert_eq!(sig.edges.len(), graph.edges.len(), "both candidates match");

        let single = prune_address_taken_single_pass(&sig, &module);
        assert_eq!(indirect_callees(&single), vec!["helper_g"]);

        let fixpoint = prune_address_taken(&sig, &module);
        assert!(indirect_callees(&fixpoint).is_empty());
    }

    #[test]
    fn reachability_includes_root_and_follows_edges() {
        let (module, graph) = graph_of(TWO_ROUND);
        let reach = graph.reachable_from(&module.entry);
        assert!(reach.contains(&FuncName::new("main")));
        assert!(reach.contains(&FuncName::new("helper_f")));
        assert!(reach.contains(&FuncName::new("helper_g")));
        assert!(!reach.contains(&FuncName::new("dead_seed")));
        let lonely = graph.reachable_from(&FuncName::new("helper_g"));
        assert_eq!(lonely.len(), 1);
    }

    #[test]
    fn precision_fraction_and_domain_errors() {
        assert_eq!(precision(27, 24).unwrap(), 3.0 / 27.0);
        assert_eq!(precision(5, 5).unwrap(), 0.0);
        assert_eq!(precision(0, 0), Err(DomainError::EmptyBaseline));
        assert_eq!(
            precision(3, 4),
            Err(DomainError::PrunedExceedsBaseline {
                original: 3,
                pruned: 4
            })
        );
    }

    #[test]
    fn signature_pruning_checks_arity_params_and_result_binding() {
        let text = "\
modes ALPHA
entry main
switcher flip

record Tbl { hook: fnref(int) -> void }
global %t : Tbl

fn main(%x: int) -> void {
  %a = addrof no_args
  %t.hook = %a
  %b = addrof right_shape
  %t.hook = %b
  %c = addrof wrong_param
  %t.hook = %c
  %h = %t.hook
  icall %h(%x) : (int) -> void
  ret
}

fn no_args() -> void {
  ret
}

fn right_shape(%v: int) -> void {
  ret
}

fn wrong_param(%v: fnref() -> void) -> void {
  ret
}

fn flip(%w: int) -> void {
  ifgoto %w Lset
  ret
  label Lset
  %m = const 1
  setmode %m
  ret
}
";
        let (module, graph) = graph_of(text);
        assert_eq!(graph.indirect_edges().count(), 3);
        let sig = prune_signature(&graph, &module);
        assert_eq!(indirect_callees(&sig), vec!["right_shape"]);
    }

    #[test]
    fn direct_edges_are_never_pruned() {
        let text = "\
modes ALPHA
entry main
switcher flip

fn main(%x: int) -> void {
  call orphan_target(%x)
  ret
}

fn orphan_target(%v: int) -> void {
  effect run(%v)
  ret
}

fn flip(%w: int) -> void {
  ifgoto %w Lset
  ret
  label Lset
  %m = const 1
  setmode %m
  ret
}
";
        let (module, graph) = graph_of(text);
        let sig = prune_signature(&graph, &module);
        let addr = prune_address_taken(&sig, &module);
        assert_eq!(addr.edges.len(), 1, "direct edge survives both passes");
    }
}
