//! Canonical text serialization of firmware modules.
//!
//! The output is deterministic: directives come in a fixed order, maps are
//! emitted in sorted order, and each instruction uses its canonical spelling.
//! `parse_firmware(serialize_firmware(m)?) == m` holds for every valid module.

use std::fmt::Write as _;

use super::{validate, FirmwareModule, InvalidModule, TypeDesc};

/// Serialize a module to canonical IR text.
///
/// Fails with the validator's diagnostics if the module violates an invariant,
/// so serialized text is always re-parseable.
pub fn serialize_firmware(module: &FirmwareModule) -> Result<String, InvalidModule> {
    let diags = validate(module);
    if !diags.is_empty() {
        return Err(InvalidModule(diags));
    }

    let mut out = String::new();
    writeln!(out, "modes {}", module.mode_names.join(", ")).unwrap();
    for (id, name) in &module.mode_ids {
        writeln!(out, "modeid {id} {name}").unwrap();
    }
    writeln!(out, "entry {}", module.entry).unwrap();
    for name in &module.mode_switchers {
        writeln!(out, "switcher {name}").unwrap();
    }
    for (name, rec) in &module.records {
        let fields: Vec<String> = rec
            .fields
            .iter()
            .map(|(fname, fty)| format!("{fname}: {}", type_text(fty)))
            .collect();
        writeln!(out, "record {name} {{ {} }}", fields.join(", ")).unwrap();
    }
    for (gname, rec_name) in &module.globals {
        writeln!(out, "global %{gname} : {rec_name}").unwrap();
    }

    for func in module.functions.values() {
        out.push('\n');
        let params: Vec<String> = func
            .params
            .iter()
            .map(|(pvar, pty)| format!("{pvar}: {}", type_text(pty)))
            .collect();
        writeln!(
            out,
            "fn {}({}) -> {} {{",
            func.name,
            params.join(", "),
            type_text(&func.return_type)
        )
        .unwrap();
        for instr in &func.body {
            writeln!(out, "  {instr}").unwrap();
        }
        out.push_str("}\n");
    }
    Ok(out)
}

/// Type spelling used in directives and signatures (matches `TypeDesc`'s
/// `Display`, which spells records by name).
fn type_text(ty: &TypeDesc) -> String {
    ty.to_string()
}
