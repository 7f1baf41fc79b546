//! Benchmarks along the whole toolchain: parsing, points-to solving,
//! call-graph pruning, mission interpretation, and bulk profiling.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use modeguard_bench::{dispatch_module, dispatch_module_text};
use modeguard_cli::gen::{generate_missions, GenOptions};
use modeguard_cli::pipeline::{analyze, profile_missions};
use modeguard_core::callgraph::{prune_address_taken, prune_signature};
use modeguard_core::{
    build_callgraph, instrument_guard, parse_firmware, run_mission, solve_andersen, MissionScript,
    MonitorMode, RunConfig,
};
use modeguard_testkit::load_corpus_module;

const FAN_OUTS: [usize; 3] = [64, 256, 1024];

fn parse(c: &mut Criterion) {
    let mut group = c.benchmark_group("parse");
    for n in FAN_OUTS {
        let text = dispatch_module_text(n);
        group.throughput(Throughput::Bytes(text.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &text, |b, text| {
            b.iter(|| parse_firmware(text).unwrap())
        });
    }
    group.finish();
}

fn points_to(c: &mut Criterion) {
    let mut group = c.benchmark_group("points_to");
    for n in FAN_OUTS {
        let module = dispatch_module(n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &module, |b, module| {
            b.iter(|| solve_andersen(module).unwrap())
        });
    }
    group.finish();
}

fn callgraph_and_pruning(c: &mut Criterion) {
    let mut group = c.benchmark_group("callgraph_and_pruning");
    for n in FAN_OUTS {
        let module = dispatch_module(n);
        let pts = solve_andersen(&module).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(
            BenchmarkId::from_parameter(n),
            &(module, pts),
            |b, (module, pts)| {
                b.iter(|| {
                    let graph = build_callgraph(module, pts).unwrap();
                    let sig = prune_signature(&graph, module);
                    prune_address_taken(&sig, module)
                })
            },
        );
    }
    group.finish();
}

fn corpus_missions(module_file: &str, id: &str, count: usize) -> Vec<MissionScript> {
    generate_missions(&load_corpus_module(module_file), &GenOptions { count, seed: 7 })
        .unwrap_or_else(|e| panic!("mission generation failed for {id}: {e}"))
        .into_iter()
        .map(|m| m.script)
        .collect()
}

fn enforced_run(c: &mut Criterion) {
    let module = load_corpus_module("toycopter.fir");
    let analysis = analyze(&module, "toycopter").unwrap();
    let guarded = instrument_guard(&module).unwrap();
    let mission = corpus_missions("toycopter.fir", "toycopter", 1).remove(0);
    let config = RunConfig {
        firmware_id: "toycopter".to_string(),
        monitor: MonitorMode::Enforce,
        mode_config: Some(analysis.static_config),
        ..RunConfig::default()
    };
    c.bench_function("enforced_run", |b| {
        b.iter(|| run_mission(&guarded, &mission, &config).unwrap())
    });
}

fn profile_corpus(c: &mut Criterion) {
    let module = load_corpus_module("toycopter.fir");
    let missions = corpus_missions("toycopter.fir", "toycopter", 40);
    c.bench_function("profile_40_missions", |b| {
        b.iter(|| profile_missions(&module, "toycopter", &missions).unwrap())
    });
}

criterion_group!(
    benches,
    parse,
    points_to,
    callgraph_and_pruning,
    enforced_run,
    profile_corpus
);
criterion_main!(benches);
