//! Synthetic firmware builders for the benchmarks: corpus images exercise
//! realistic shapes, these scale one dimension at a time.

use modeguard_core::{parse_firmware, FirmwareModule};

/// A module whose single dispatch slot accumulates `handlers` possible
/// targets: `boot` takes the address of every handler and stores each into
/// the same record field, so the points-to set at the dispatch site — and
/// the indirect edge count at the call graph's one interesting site — grows
/// linearly with `handlers`.
pub fn dispatch_module_text(handlers: usize) -> String {
    assert!(handlers > 0, "a dispatch table needs at least one handler");
    let mut text = String::from(
        "modes A, FAILSAFE\n\
         modeid 1 A\n\
         modeid 2 FAILSAFE\n\
         entry main\n\
         switcher sw\n\
         record Tbl { slot: fnref(int) -> int, live: int }\n\
         global %tbl : Tbl\n\
         \n\
         fn main(%x: int, %y: int) -> void {\n  \
           call boot()\n  \
           %f = %tbl.slot\n  \
           %r = icall %f(%x) : (int) -> int\n  \
           ret\n\
         }\n\
         \n",
    );
    text.push_str("fn boot() -> void {\n");
    for i in 0..handlers {
        text.push_str(&format!("  %t{i} = addrof h{i}\n  %tbl.slot = %t{i}\n"));
    }
    text.push_str("  ret\n}\n\n");
    for i in 0..handlers {
        text.push_str(&format!(
            "fn h{i}(%v: int) -> int {{\n  %c = const {i}\n  ret %c\n}}\n\n"
        ));
    }
    text.push_str(
        "fn sw(%a: int, %f: int) -> void {\n  \
           ifgoto %a La\n  \
           ifgoto %f Lf\n  \
           ret\n  \
           label La\n  \
           %m1 = const 1\n  \
           setmode %m1\n  \
           ret\n  \
           label Lf\n  \
           %m2 = const 2\n  \
           setmode %m2\n  \
           ret\n\
         }\n",
    );
    text
}

/// Parse [`dispatch_module_text`], panicking on any diagnostic.
pub fn dispatch_module(handlers: usize) -> FirmwareModule {
    parse_firmware(&dispatch_module_text(handlers))
        .unwrap_or_else(|d| panic!("synthetic module with {handlers} handlers is invalid: {d:?}"))
}
