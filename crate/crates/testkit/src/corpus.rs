//! Locate and load the shared firmware corpus from anywhere in the workspace.

use std::path::PathBuf;

use modeguard_core::{parse_firmware, FirmwareModule};

/// Absolute path of the workspace `corpus/` directory.
pub fn corpus_dir() -> PathBuf {
    // CARGO_MANIFEST_DIR points at crates/testkit; the corpus lives two up.
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .and_then(|p| p.parent())
        .expect("testkit sits two levels below the workspace root")
        .join("corpus")
}

/// Path of the toycopter firmware image.
pub fn toycopter_path() -> PathBuf {
    corpus_dir().join("toycopter.fir")
}

/// Path of the toyrover firmware image.
pub fn toyrover_path() -> PathBuf {
    corpus_dir().join("toyrover.fir")
}

/// Parse a corpus module by file name (e.g. `"toycopter.fir"`), panicking on
/// any diagnostic: corpus files are expected to always be valid.
pub fn load_corpus_module(file_name: &str) -> FirmwareModule {
    let path = corpus_dir().join(file_name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    match parse_firmware(&text) {
        Ok(m) => m,
        Err(diags) => {
            let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            panic!("{file_name} failed to parse:\n{}", msgs.join("\n"));
        }
    }
}
