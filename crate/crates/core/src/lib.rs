//! Mode-based firmware debloating for robotic-vehicle control loops.
//!
//! A firmware image ships every flight mode it supports, but any given mission
//! exercises only a few. This crate analyzes a firmware module written in a
//! small textual IR, computes which functions each operating mode can actually
//! reach, and enforces those per-mode allowlists at run time through an
//! instrumented indirect-call monitor.
//!
//! Pipeline stages, one module each:
//!
//! - [`ir`] — parse, validate, and serialize the textual IR
//! - [`pointsto`] — field-sensitive inclusion-based points-to analysis for
//!   function references
//! - [`callgraph`] — call-graph construction plus signature and address-taken
//!   pruning of spurious indirect edges
//! - [`modeanalysis`] — mode-entry detection, per-mode allowed-function sets
//!   (static and profile-based), and config file I/O
//! - [`instrument`] — profiling and guard instrumentation passes
//! - [`runtime`] — deterministic interpreter, indirect-transfer monitor with
//!   fail-safe, attack injection, and evaluation metrics

pub mod callgraph;
pub mod instrument;
pub mod ir;
pub mod modeanalysis;
pub mod pointsto;
pub mod runtime;

#[cfg(test)]
pub(crate) mod testfix;

pub use callgraph::{build_callgraph, CallEdge, CallGraph, CallKind, CallSiteId};
pub use instrument::{instrument_guard, instrument_profile, InstrumentError};
pub use ir::{
    parse_firmware, serialize_firmware, validate, Diagnostic, FirmwareModule, FuncName,
    FunctionDef, Instruction, Signature, TypeDesc, Var,
};
pub use modeanalysis::{
    detect_mode_entries, dynamic_config, reduction, static_reachable, ModeConfig, ModeEntryMap,
    Provenance,
};
pub use pointsto::{solve_andersen, Loc, PointsToResult};
pub use runtime::{
    fpr_fnr, missed_functions, parse_mission, run_mission, MissionScript, MissionStep,
    MonitorMode, RunConfig, RunReport, ViolationEvent, ViolationKind,
};
