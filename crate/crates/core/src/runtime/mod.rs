//! Deterministic firmware execution: mission scripts, the interpreter, the
//! runtime monitor, attack injection, and detection metrics.
//!
//! A [`MissionScript`] drives a module the way a ground station drives a
//! vehicle: it sets input registers, commands mode changes, and lets the
//! scheduler loop run. [`run_mission`] executes a script against a module and
//! produces a [`RunReport`] — a complete, deterministic record of transitions,
//! indirect transfers, logged executions, effects, and monitor events. Equal
//! inputs produce equal reports, byte for byte once rendered.
//!
//! The monitor watches only the instrumented forms (`mcall`/`mret`); plain
//! `icall`/`ret` pass unchecked, which is exactly why enforcement requires the
//! guard instrumentation pass. Under [`MonitorMode::Enforce`] a violation
//! triggers the fail-safe: the call stack is abandoned, the switcher is driven
//! into `FAILSAFE`, and the mission halts. [`MonitorMode::PermitAll`] records
//! the same violations without intervening, for measurement.
//!
//! Two attack injections model control-flow hijacks: `hijack F at N` replaces
//! the target of the N-th indirect transfer after arming (counting from 0)
//! with `F`, and `corrupt_return at N` corrupts the N-th checked return
//! descriptor after arming.

mod interp;
mod metrics;
mod mission;

pub use interp::{
    run_mission, EffectRecord, IndirectTransfer, MonitorMode, RunConfig, RunReport, RuntimeError,
    ShadowEvent, ViolationEvent, ViolationKind,
};
pub use metrics::{fpr_fnr, missed_functions};
pub use mission::{parse_mission, serialize_mission, MissionParseError, MissionScript, MissionStep};
