//! Text rendering for analysis results and run reports.
//!
//! Each report comes in two flavors: an aligned human-readable block, and
//! flat `key=value` machine lines that scripts and integration tests parse.
//! Both are fully deterministic — no timestamps, no absolute paths.

use std::collections::BTreeSet;

use modeguard_core::callgraph::{CallGraph, CallKind};
use modeguard_core::pointsto::PointsToResult;
use modeguard_core::runtime::{MonitorMode, RunReport, ShadowEvent};

use crate::pipeline::{AttackSummary, EdgeCounts, ModeRowSummary, PipelineReport};

/// A fraction rendered as a percentage with two decimals, e.g. `87.33%`.
pub fn format_pct(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

/// A fraction rendered as a whole-number percentage, e.g. `36%`.
pub fn format_pct_int(fraction: f64) -> String {
    format!("{}%", (fraction * 100.0).round() as i64)
}

pub fn monitor_name(mode: MonitorMode) -> &'static str {
    match mode {
        MonitorMode::Off => "off",
        MonitorMode::PermitAll => "permit-all",
        MonitorMode::Enforce => "enforce",
    }
}

/// The pruning summary line consumed by scripts.
pub fn render_stats(edges: &EdgeCounts, precision: f64) -> String {
    format!(
        "edges_original={} edges_sig={} edges_addr={} precision={}",
        edges.original,
        edges.signature,
        edges.address,
        format_pct_int(precision)
    )
}

/// One `loc -> {callees}` line per location, sorted lexicographically.
pub fn render_pts_dump(result: &PointsToResult) -> String {
    let mut lines: Vec<String> = result
        .pts
        .iter()
        .map(|(loc, set)| {
            let names: Vec<&str> = set.iter().map(|f| f.as_str()).collect();
            format!("{} -> {{{}}}", loc, names.join(", "))
        })
        .collect();
    lines.sort();
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// GraphViz rendering; indirect edges are dashed. Parallel edges from
/// distinct sites collapse to one line.
pub fn render_dot(graph: &CallGraph) -> String {
    let mut out = String::from("digraph callgraph {\n");
    for node in &graph.nodes {
        out.push_str(&format!("  \"{}\";\n", node.as_str()));
    }
    let mut drawn: BTreeSet<(&str, &str, CallKind)> = BTreeSet::new();
    for edge in &graph.edges {
        drawn.insert((edge.caller.as_str(), edge.callee.as_str(), edge.kind));
    }
    for (caller, callee, kind) in drawn {
        let style = match kind {
            CallKind::Direct => "",
            CallKind::Indirect => " [style=dashed]",
        };
        out.push_str(&format!("  \"{caller}\" -> \"{callee}\"{style};\n"));
    }
    out.push_str("}\n");
    out
}

pub fn render_mode_table(rows: &[ModeRowSummary]) -> String {
    let mut table = vec![vec![
        "mode".to_string(),
        "dynamic".to_string(),
        "static".to_string(),
        "total".to_string(),
        "reduction_dynamic".to_string(),
        "reduction_static".to_string(),
    ]];
    for row in rows {
        table.push(vec![
            row.mode.clone(),
            row.dynamic.to_string(),
            row.static_count.to_string(),
            row.total.to_string(),
            format_pct(row.reduction_dynamic),
            format_pct(row.reduction_static),
        ]);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn mode_machine_lines(rows: &[ModeRowSummary]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&format!(
            "mode={} dynamic={} static={} total={} reduction_dynamic={} reduction_static={}\n",
            row.mode,
            row.dynamic,
            row.static_count,
            row.total,
            format_pct(row.reduction_dynamic),
            format_pct(row.reduction_static)
        ));
    }
    out
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

/// Human-readable account of one run.
pub fn render_run_text(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("mission {}\n", report.mission));
    out.push_str(&format!("firmware {}\n", report.firmware_id));
    out.push_str(&format!("monitor {}\n", monitor_name(report.monitor)));
    out.push_str(&format!("steps {}\n", report.steps));
    out.push_str(&format!("fail_safe {}\n", yes_no(report.fail_safe)));
    out.push_str("mode transitions:\n");
    for (tick, from, to) in &report.mode_transitions {
        out.push_str(&format!("  tick {tick}: {from} -> {to}\n"));
    }
    if !report.violations.is_empty() {
        out.push_str("violations:\n");
        for v in &report.violations {
            out.push_str(&format!(
                "  tick {}: {} in {} targeting {} at {}\n",
                v.tick,
                v.kind,
                v.mode,
                v.function.as_str(),
                v.context
            ));
        }
    }
    out.push_str("effects:\n");
    for effect in &report.effects {
        out.push_str(&format!(
            "  tick {}: {}({})\n",
            effect.tick,
            effect.name,
            effect.args.join(", ")
        ));
    }
    let mismatches = report
        .shadow_events
        .iter()
        .filter(|e| matches!(e, ShadowEvent::Pop { matched: false, .. }))
        .count();
    out.push_str(&format!(
        "indirect transfers {} (hijacked {})\n",
        report.indirect_transfers.len(),
        report.indirect_transfers.iter().filter(|t| t.hijacked).count()
    ));
    out.push_str(&format!(
        "shadow events {} (mismatched {})\n",
        report.shadow_events.len(),
        mismatches
    ));
    out
}

/// Flat `key=value` lines for one run; violations get one line each.
pub fn render_run_machine(report: &RunReport) -> String {
    let mut out = format!(
        "mission={} firmware={} monitor={} steps={} fail_safe={} violations={} transfers={} effects={}\n",
        report.mission,
        report.firmware_id,
        monitor_name(report.monitor),
        report.steps,
        yes_no(report.fail_safe),
        report.violations.len(),
        report.indirect_transfers.len(),
        report.effects.len()
    );
    for v in &report.violations {
        out.push_str(&format!(
            "violation kind={} mode={} target={}\n",
            v.kind,
            v.mode,
            v.function.as_str()
        ));
    }
    out
}

pub fn attack_machine_line(attack: &AttackSummary) -> String {
    match attack {
        AttackSummary::Ran {
            scenario,
            target,
            mode,
            detected,
        } => format!(
            "attack {scenario} target={target} mode={mode} detected={}",
            yes_no(*detected)
        ),
        AttackSummary::Skipped { scenario, reason } => {
            format!("attack {scenario} skipped reason=\"{reason}\"")
        }
    }
}

/// Machine block of the full pipeline report.
pub fn render_pipeline_machine(report: &PipelineReport) -> String {
    let mut out = format!(
        "firmware={} functions={}\n",
        report.firmware_id, report.functions
    );
    out.push_str(&render_stats(&report.edges, report.precision));
    out.push('\n');
    out.push_str(&mode_machine_lines(&report.per_mode));
    for (k, count) in &report.missed_curve {
        out.push_str(&format!("missed k={k} count={count}\n"));
    }
    out.push_str(&format!(
        "benign={} fpr_dynamic={} fnr_dynamic={} fpr_static={} fnr_static={}\n",
        report.benign_missions,
        format_pct(report.fpr_dynamic),
        format_pct(report.fnr_dynamic),
        format_pct(report.fpr_static),
        format_pct(report.fnr_static)
    ));
    for attack in &report.attacks {
        out.push_str(&attack_machine_line(attack));
        out.push('\n');
    }
    out
}

/// Full pipeline report: human sections followed by the machine block.
pub fn render_pipeline_text(report: &PipelineReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("firmware {}\n", report.firmware_id));
    out.push_str(&format!("functions {}\n\n", report.functions));

    out.push_str("call-graph pruning:\n  ");
    out.push_str(&render_stats(&report.edges, report.precision));
    out.push_str("\n\n");

    out.push_str("per-mode allowed functions:\n");
    for line in render_mode_table(&report.per_mode).lines() {
        out.push_str(&format!("  {line}\n"));
    }
    out.push('\n');

    if !report.missed_curve.is_empty() {
        out.push_str("profile convergence (missed functions vs. held-out missions):\n");
        for (k, count) in &report.missed_curve {
            out.push_str(&format!("  k={k:<3} missed={count}\n"));
        }
        out.push('\n');
    }

    out.push_str("enforcement over benign missions:\n");
    out.push_str(&format!(
        "  benign={} fpr_dynamic={} fnr_dynamic={} fpr_static={} fnr_static={}\n\n",
        report.benign_missions,
        format_pct(report.fpr_dynamic),
        format_pct(report.fnr_dynamic),
        format_pct(report.fpr_static),
        format_pct(report.fnr_static)
    ));

    out.push_str("attack scenarios:\n");
    for attack in &report.attacks {
        out.push_str(&format!("  {}\n", attack_machine_line(attack)));
    }
    out.push('\n');

    if !report.dynamic_fallback_warnings.is_empty() {
        out.push_str("warnings:\n");
        for warning in &report.dynamic_fallback_warnings {
            out.push_str(&format!("  {warning}\n"));
        }
        out.push('\n');
    }

    out.push_str("machine-readable:\n");
    out.push_str(&render_pipeline_machine(report));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_formatting_rounds_as_expected() {
        assert_eq!(format_pct_int(0.3576923), "36%");
        assert_eq!(format_pct(0.8733), "87.33%");
        assert_eq!(format_pct(0.0), "0.00%");
    }

    #[test]
    fn stats_line_is_exactly_the_documented_shape() {
        let edges = EdgeCounts {
            original: 104_000,
            signature: 87_400,
            address: 66_800,
        };
        assert_eq!(
            render_stats(&edges, 0.3576923076923077),
            "edges_original=104000 edges_sig=87400 edges_addr=66800 precision=36%"
        );
    }
}
