//! Seeded random firmware generator for differential testing.
//!
//! Generated modules are always valid: straight-line bodies that end in a
//! return, every variable defined by its own op, and every indirect call
//! declared with the one worker signature `(int) -> int`. The shapes exercise
//! every points-to rule: address-taking, assignment chains, field stores and
//! loads, indirect calls through fields, passing references into parameters
//! (`carrier`), and returning references (`producer`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Instruction budget per module (generator stays well under the parser's
/// tolerance; small modules shrink better when a differential test fails).
const MAX_INSTRUCTIONS: usize = 40;
/// Address-taken budget per module.
const MAX_ADDR_OF: usize = 8;

struct Gen {
    rng: ChaCha8Rng,
    instructions: usize,
    addr_ofs: usize,
    workers: usize,
    fields: usize,
    has_carrier: bool,
    has_producer: bool,
}

impl Gen {
    fn worker(&mut self) -> String {
        format!("f{}", self.rng.gen_range(0..self.workers))
    }

    fn field(&mut self) -> String {
        format!("h{}", self.rng.gen_range(0..self.fields))
    }

    /// Emit up to `max_ops` random ops into `body`. `src_int` is an
    /// always-available int variable. Returns nothing; ops track their own
    /// fresh variables via `counter`.
    fn emit_ops(&mut self, body: &mut String, src_int: &str, max_ops: usize) {
        let mut counter = 0usize;
        let mut last_ref: Option<String> = None;
        let ops = self.rng.gen_range(0..=max_ops);
        for _ in 0..ops {
            if self.instructions >= MAX_INSTRUCTIONS {
                break;
            }
            counter += 1;
            match self.rng.gen_range(0u8..6) {
                0 => {
                    // Address-take a worker and store it into a field.
                    if self.addr_ofs >= MAX_ADDR_OF {
                        continue;
                    }
                    let w = self.worker();
                    let fld = self.field();
                    let var = format!("t{counter}");
                    body.push_str(&format!("  %{var} = addrof {w}\n"));
                    body.push_str(&format!("  %hk.{fld} = %{var}\n"));
                    self.addr_ofs += 1;
                    self.instructions += 2;
                    last_ref = Some(var);
                }
                1 => {
                    // Load a field and call through it.
                    let fld = self.field();
                    body.push_str(&format!("  %l{counter} = %hk.{fld}\n"));
                    if self.rng.gen_bool(0.5) {
                        body.push_str(&format!(
                            "  %r{counter} = icall %l{counter}(%{src_int}) : (int) -> int\n"
                        ));
                    } else {
                        body.push_str(&format!(
                            "  icall %l{counter}(%{src_int}) : (int) -> int\n"
                        ));
                    }
                    self.instructions += 2;
                }
                2 => {
                    // Direct call to a worker.
                    let w = self.worker();
                    if self.rng.gen_bool(0.5) {
                        body.push_str(&format!("  %d{counter} = call {w}(%{src_int})\n"));
                    } else {
                        body.push_str(&format!("  call {w}(%{src_int})\n"));
                    }
                    self.instructions += 1;
                }
                3 => {
                    // Copy the last reference (or the int source).
                    match &last_ref {
                        Some(prev) => {
                            let var = format!("c{counter}");
                            body.push_str(&format!("  %{var} = %{prev}\n"));
                            if self.rng.gen_bool(0.5) {
                                let fld = self.field();
                                body.push_str(&format!("  %hk.{fld} = %{var}\n"));
                                self.instructions += 1;
                            }
                            last_ref = Some(var);
                        }
                        None => {
                            body.push_str(&format!("  %c{counter} = %{src_int}\n"));
                        }
                    }
                    self.instructions += 1;
                }
                4 => {
                    // Hand a reference to the carrier, which stores it.
                    if let (true, Some(prev)) = (self.has_carrier, &last_ref) {
                        body.push_str(&format!("  call carrier(%{prev})\n"));
                        self.instructions += 1;
                    }
                }
                _ => {
                    // Fetch a reference from the producer and store it.
                    if self.has_producer {
                        let fld = self.field();
                        body.push_str(&format!("  %g{counter} = call producer()\n"));
                        body.push_str(&format!("  %hk.{fld} = %g{counter}\n"));
                        self.instructions += 2;
                        last_ref = Some(format!("g{counter}"));
                    }
                }
            }
        }
    }
}

/// Generate the text of a random, always-valid firmware module.
pub fn random_module_text(seed: u64) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        instructions: 0,
        addr_ofs: 0,
        workers: 0,
        fields: 0,
        has_carrier: false,
        has_producer: false,
    };
    g.workers = g.rng.gen_range(3..=7);
    g.fields = g.rng.gen_range(2..=3);
    g.has_carrier = g.rng.gen_bool(0.6);
    g.has_producer = g.rng.gen_bool(0.6);

    let mut out = String::new();
    out.push_str("modes ALPHA\nmodeid 1 ALPHA\nentry main\nswitcher flip\n\n");
    let fields: Vec<String> = (0..g.fields)
        .map(|i| format!("h{i}: fnref(int) -> int"))
        .collect();
    out.push_str(&format!("record Hooks {{ {} }}\n", fields.join(", ")));
    out.push_str("global %hk : Hooks\n");

    // main: seed at least one address-take so points-to sets are inhabited.
    let mut body = String::new();
    let w = g.worker();
    let fld = g.field();
    body.push_str(&format!("  %t0 = addrof {w}\n  %hk.{fld} = %t0\n"));
    g.addr_ofs += 1;
    g.instructions += 2;
    g.emit_ops(&mut body, "x", 6);
    out.push_str(&format!(
        "\nfn main(%x: int) -> void {{\n{body}  ret\n}}\n"
    ));

    for i in 0..g.workers {
        let mut body = format!("  %acc = const {i}\n");
        g.instructions += 1;
        g.emit_ops(&mut body, "p", 3);
        out.push_str(&format!(
            "\nfn f{i}(%p: int) -> int {{\n{body}  ret %acc\n}}\n"
        ));
    }

    if g.has_carrier {
        let fld = g.field();
        out.push_str(&format!(
            "\nfn carrier(%h: fnref(int) -> int) -> int {{\n  %hk.{fld} = %h\n  %acc = const 99\n  ret %acc\n}}\n"
        ));
    }
    if g.has_producer {
        let w = g.worker();
        out.push_str(&format!(
            "\nfn producer() -> fnref(int) -> int {{\n  %t = addrof {w}\n  ret %t\n}}\n"
        ));
    }

    out.push_str(
        "\nfn flip(%want_alpha: int) -> void {\n  ifgoto %want_alpha Lalpha\n  ret\n  label Lalpha\n  %m = const 1\n  setmode %m\n  ret\n}\n",
    );
    out
}
