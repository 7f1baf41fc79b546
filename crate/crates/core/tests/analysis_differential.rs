//! Differential tests: the production points-to solver and call-graph passes
//! must agree with the declarative oracles on a corpus of random modules.

use modeguard_core::{
    build_callgraph, parse_firmware, solve_andersen, FuncName,
};
use modeguard_core::callgraph::{
    prune_address_taken, prune_address_taken_single_pass, prune_signature,
};
use modeguard_testkit::{
    address_taken_filter_oracle, callgraph_oracle, load_corpus_module, points_to_oracle,
    random_module_text, reachable_oracle, signature_filter_oracle,
};

const SEEDS: u64 = 200;

#[test]
fn points_to_matches_oracle_on_random_modules() {
    for seed in 0..SEEDS {
        let text = random_module_text(seed);
        let module = parse_firmware(&text)
            .unwrap_or_else(|d| panic!("seed {seed} generated an invalid module: {d:?}\n{text}"));
        let solved = solve_andersen(&module).unwrap();
        let oracle = points_to_oracle(&module);
        assert_eq!(
            solved.pts, oracle,
            "seed {seed}: solver disagrees with the declarative fixpoint\n{text}"
        );
    }
}

#[test]
fn pruning_pipeline_matches_oracle_on_random_modules() {
    for seed in 0..SEEDS {
        let text = random_module_text(seed);
        let module = parse_firmware(&text).unwrap();
        let solved = solve_andersen(&module).unwrap();
        let graph = build_callgraph(&module, &solved).unwrap();

        let oracle_graph = callgraph_oracle(&module, &points_to_oracle(&module));
        assert_eq!(graph, oracle_graph, "seed {seed}: baseline graphs differ");

        let sig = prune_signature(&graph, &module);
        let sig_oracle = signature_filter_oracle(&module, &oracle_graph);
        assert_eq!(sig, sig_oracle, "seed {seed}: signature pruning differs");

        let addr = prune_address_taken(&sig, &module);
        let addr_oracle = address_taken_filter_oracle(&module, &sig_oracle);
        assert_eq!(addr, addr_oracle, "seed {seed}: address pruning differs");

        // The single-round variant never removes fewer edges than zero rounds
        // and never more than the fixpoint.
        let single = prune_address_taken_single_pass(&sig, &module);
        assert!(single.edges.len() >= addr.edges.len());
        assert!(single.edges.len() <= sig.edges.len());
    }
}

#[test]
fn reachability_matches_oracle_on_random_modules() {
    for seed in 0..SEEDS {
        let text = random_module_text(seed);
        let module = parse_firmware(&text).unwrap();
        let solved = solve_andersen(&module).unwrap();
        let graph = build_callgraph(&module, &solved).unwrap();
        for root in ["main", "f0", "flip"] {
            let root = FuncName::new(root);
            assert_eq!(
                graph.reachable_from(&root),
                reachable_oracle(&graph, &root),
                "seed {seed}: reachability from {root} differs"
            );
        }
    }
}

#[test]
fn corpus_modules_match_oracles() {
    for name in ["toycopter.fir", "toyrover.fir"] {
        let module = load_corpus_module(name);
        let solved = solve_andersen(&module).unwrap();
        assert_eq!(solved.pts, points_to_oracle(&module), "{name} points-to");
        let graph = build_callgraph(&module, &solved).unwrap();
        assert_eq!(
            graph,
            callgraph_oracle(&module, &solved.pts),
            "{name} call graph"
        );
        let sig = prune_signature(&graph, &module);
        let addr = prune_address_taken(&sig, &module);
        assert_eq!(
            addr,
            address_taken_filter_oracle(&module, &signature_filter_oracle(&module, &graph)),
            "{name} pruning"
        );
    }
}
