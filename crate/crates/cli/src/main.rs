//! `modeguard` — mode-based firmware debloating toolkit.
//!
//! Exit codes: 0 success; 1 usage; 2 input file malformed; 3 analysis or
//! validation rejected the input; 4 enforcement tripped or a pipeline goal
//! was missed.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use modeguard_core::callgraph::{
    build_callgraph, precision, prune_address_taken, prune_address_taken_single_pass,
    prune_signature,
};
use modeguard_core::instrument::{instrument_guard, instrument_profile};
use modeguard_core::ir::{serialize_firmware, FirmwareModule, FuncName};
use modeguard_core::modeanalysis::{
    dynamic_config, emit_mode_config, load_mode_config, static_reachable, ModeConfig,
};
use modeguard_core::pointsto::solve_andersen;
use modeguard_core::runtime::{run_mission, MonitorMode, RunConfig};

use modeguard_cli::pipeline::{self, EdgeCounts, PipelineOptions};
use modeguard_cli::{attack, gen, report, CliError};

#[derive(Parser)]
#[command(
    name = "modeguard",
    version,
    about = "Mode-based firmware debloating: per-mode allowed sets, guard instrumentation, and runtime enforcement"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Report style for run/pipeline output
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PruneLevel {
    /// Signature-based pruning only
    Sig,
    /// Signature-based then address-taken pruning
    #[value(name = "sig+addr")]
    SigAddr,
}

#[derive(Clone, Copy, ValueEnum)]
enum InstrumentKind {
    Profile,
    Guard,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve points-to sets for function-reference locations
    Pts {
        fir: PathBuf,
        /// Print every location's set, sorted
        #[arg(long)]
        dump: bool,
    },
    /// Build the call graph; optionally prune it and export DOT
    Callgraph {
        fir: PathBuf,
        #[arg(long, value_enum)]
        prune: Option<PruneLevel>,
        /// One round of address-taken pruning instead of the fixpoint
        #[arg(long)]
        single_pass: bool,
        /// Write the (pruned) graph as GraphViz
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Print the edge-count and precision summary line
        #[arg(long)]
        stats: bool,
    },
    /// Derive the static per-mode allowed sets
    Reach {
        fir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        firmware_id: Option<String>,
        /// Functions treated as reachable in every mode (comma-separated)
        #[arg(long, value_delimiter = ',', conflicts_with = "no_always_roots")]
        always_roots: Option<Vec<String>>,
        /// Root each mode's set at its entry handlers only
        #[arg(long)]
        no_always_roots: bool,
    },
    /// Insert profiling or monitoring trampolines
    Instrument {
        fir: PathBuf,
        #[arg(long, value_enum)]
        mode: InstrumentKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Profile a mission set and derive the dynamic allowed sets
    Profile {
        fir: PathBuf,
        /// Directory of .mission files
        #[arg(long)]
        missions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        firmware_id: Option<String>,
    },
    /// Execute one mission, optionally monitored
    Run {
        fir: PathBuf,
        #[arg(long)]
        mission: PathBuf,
        /// Per-mode allowed-set config (required when monitoring)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Enforce: violations escalate to fail-safe (exit 4 if tripped)
        #[arg(long, conflicts_with = "permit_all")]
        enforce: bool,
        /// Record violations without intervening
        #[arg(long)]
        permit_all: bool,
    },
    /// Run a canned hijack scenario without and with enforcement
    Attack {
        fir: PathBuf,
        /// One of a1, a2, a3
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-mode reduction summary from a static and a dynamic config
    Metrics {
        fir: PathBuf,
        #[arg(long)]
        static_config: PathBuf,
        #[arg(long)]
        dynamic_config: PathBuf,
        /// Print the aligned table instead of machine lines
        #[arg(long)]
        table: bool,
    },
    /// Run the whole workflow and write all artifacts
    Pipeline {
        fir: PathBuf,
        /// Directory of benign .mission files
        #[arg(long)]
        missions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        firmware_id: Option<String>,
    },
    /// Generate a seeded benign mission corpus
    GenMissions {
        fir: PathBuf,
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version print and succeed; everything else is a
            // usage error.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn write_or_print(out: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, contents).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read_config(path: &Path, module: &FirmwareModule) -> Result<ModeConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(load_mode_config(&text, module)?)
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::Pts { fir, dump } => {
            let module = pipeline::load_module(&fir)?;
            let result = solve_andersen(&module)?;
            if dump {
                print!("{}", report::render_pts_dump(&result));
            } else {
                println!("locations={} insertions={}", result.pts.len(), result.insertions);
            }
            Ok(0)
        }
        Cmd::Callgraph {
            fir,
            prune,
            single_pass,
            dot,
            stats,
        } => {
            if single_pass && prune != Some(PruneLevel::SigAddr) {
                return Err(CliError::Usage(
                    "--single-pass only affects address-taken pruning; pass --prune sig+addr".into(),
                ));
            }
            let module = pipeline::load_module(&fir)?;
            let pts = solve_andersen(&module)?;
            let baseline = build_callgraph(&module, &pts)?;
            let sig = prune_signature(&baseline, &module);
            let addr = if single_pass {
                prune_address_taken_single_pass(&sig, &module)
            } else {
                prune_address_taken(&sig, &module)
            };
            let selected = match prune {
                None => &baseline,
                Some(PruneLevel::Sig) => &sig,
                Some(PruneLevel::SigAddr) => &addr,
            };
            if let Some(path) = dot {
                fs::write(&path, report::render_dot(selected))
                    .map_err(|e| CliError::io(&path, e))?;
            }
            if stats {
                let edges = EdgeCounts {
                    original: baseline.edges.len(),
                    signature: sig.edges.len(),
                    address: addr.edges.len(),
                };
                let p = precision(edges.original, edges.address)?;
                println!("{}", report::render_stats(&edges, p));
            } else {
                println!(
                    "nodes={} edges={}",
                    selected.nodes.len(),
                    selected.edges.len()
                );
            }
            Ok(0)
        }
        Cmd::Reach {
            fir,
            out,
            firmware_id,
            always_roots,
            no_always_roots,
        } => {
            let module = pipeline::load_module(&fir)?;
            let id = firmware_id.unwrap_or_else(|| pipeline::default_firmware_id(&fir));
            let analysis = pipeline::analyze(&module, &id)?;
            let config = match (no_always_roots, always_roots) {
                (false, None) => analysis.static_config,
                (roots_off, roots) => {
                    let roots: BTreeSet<FuncName> = if roots_off {
                        BTreeSet::new()
                    } else {
                        roots.unwrap_or_default().iter().map(FuncName::new).collect()
                    };
                    static_reachable(&id, &module, &analysis.pruned, &analysis.entries, &roots)?
                }
            };
            write_or_print(&out, &emit_mode_config(&config))?;
            Ok(0)
        }
        Cmd::Instrument { fir, mode, out } => {
            let module = pipeline::load_module(&fir)?;
            let instrumented = match mode {
                InstrumentKind::Profile => instrument_profile(&module)?,
                InstrumentKind::Guard => instrument_guard(&module)?,
            };
            write_or_print(&out, &serialize_firmware(&instrumented)?)?;
            Ok(0)
        }
        Cmd::Profile {
            fir,
            missions,
            out,
            firmware_id,
        } => {
            let module = pipeline::load_module(&fir)?;
            let id = firmware_id.unwrap_or_else(|| pipeline::default_firmware_id(&fir));
            let scripts = pipeline::load_missions_dir(&missions)?;
            let reports = pipeline::profile_missions(&module, &id, &scripts)?;
            let analysis = pipeline::analyze(&module, &id)?;
            let (config, warnings) =
                dynamic_config(&id, &module, &reports, Some(&analysis.static_config))?;
            for warning in &warnings {
                eprintln!("warning: {warning}");
            }
            write_or_print(&out, &emit_mode_config(&config))?;
            Ok(0)
        }
        Cmd::Run {
            fir,
            mission,
            config,
            enforce,
            permit_all,
        } => {
            let module = pipeline::load_module(&fir)?;
            let script = pipeline::load_mission(&mission)?;
            let monitor = if enforce {
                MonitorMode::Enforce
            } else if permit_all {
                MonitorMode::PermitAll
            } else {
                MonitorMode::Off
            };
            let (module, mode_config) = if monitor == MonitorMode::Off {
                (module, None)
            } else {
                let path = config.ok_or_else(|| {
                    CliError::Usage("--enforce and --permit-all require --config".into())
                })?;
                // Monitoring needs the guard build; instrument on the fly
                // unless the input already carries trampolines.
                let module = if module.is_instrumented() {
                    module
                } else {
                    instrument_guard(&module)?
                };
                let mode_config = read_config(&path, &module)?;
                (module, Some(mode_config))
            };
            let run_config = RunConfig {
                firmware_id: mode_config
                    .as_ref()
                    .map(|c| c.firmware_id.clone())
                    .unwrap_or_else(|| pipeline::default_firmware_id(&fir)),
                monitor,
                mode_config,
                ..RunConfig::default()
            };
            let run = run_mission(&module, &script, &run_config)?;
            match cli.format {
                Format::Text => print!("{}", report::render_run_text(&run)),
                Format::Machine => print!("{}", report::render_run_machine(&run)),
            }
            let tripped = run.fail_safe || !run.violations.is_empty();
            Ok(if monitor == MonitorMode::Enforce && tripped {
                4
            } else {
                0
            })
        }
        Cmd::Attack {
            fir,
            scenario,
            config,
        } => {
            let module = pipeline::load_module(&fir)?;
            let plan = attack::plan(&module, &scenario)?
                .map_err(|inapplicable| CliError::Analysis(inapplicable.0))?;
            let guarded = if module.is_instrumented() {
                module.clone()
            } else {
                instrument_guard(&module)?
            };
            let mode_config = read_config(&config, &guarded)?;
            println!(
                "attack={} target={} mode={}",
                plan.scenario,
                plan.target.as_str(),
                plan.mode
            );
            let baseline = plan.run_baseline(&module, &mode_config.firmware_id)?;
            println!(
                "baseline fail_safe={} forbidden_effect_fired={}",
                if baseline.fail_safe { "yes" } else { "no" },
                if baseline.forbidden_effect_fired { "yes" } else { "no" }
            );
            let enforced = plan.run_enforced(&guarded, &mode_config)?;
            println!(
                "enforced detected={} violations={} fail_safe={} forbidden_effect_fired={}",
                if enforced.detected { "yes" } else { "no" },
                enforced.violations,
                if enforced.fail_safe { "yes" } else { "no" },
                if enforced.forbidden_effect_fired { "yes" } else { "no" }
            );
            Ok(if enforced.detected { 0 } else { 4 })
        }
        Cmd::Metrics {
            fir,
            static_config,
            dynamic_config,
            table,
        } => {
            let module = pipeline::load_module(&fir)?;
            let static_cfg = read_config(&static_config, &module)?;
            let dynamic_cfg = read_config(&dynamic_config, &module)?;
            let rows = pipeline::mode_rows(&module, &static_cfg, &dynamic_cfg)?;
            if table {
                print!("{}", report::render_mode_table(&rows));
            } else {
                print!("{}", report::mode_machine_lines(&rows));
            }
            Ok(0)
        }
        Cmd::Pipeline {
            fir,
            missions,
            out,
            firmware_id,
        } => {
            let opts = PipelineOptions {
                firmware_id,
                ..PipelineOptions::default()
            };
            let outcome = pipeline::run_pipeline(&fir, &missions, &out, &opts)?;
            match cli.format {
                Format::Text => print!("{}", report::render_pipeline_text(&outcome.report)),
                Format::Machine => print!("{}", report::render_pipeline_machine(&outcome.report)),
            }
            Ok(if outcome.success { 0 } else { 4 })
        }
        Cmd::GenMissions {
            fir,
            count,
            seed,
            out,
        } => {
            let module = pipeline::load_module(&fir)?;
            let missions = gen::generate_missions(&module, &gen::GenOptions { count, seed })?;
            gen::write_missions(&out, &missions)?;
            println!("wrote {} missions to {}", missions.len(), out.display());
            Ok(0)
        }
    }
}
