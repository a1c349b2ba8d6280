mod common;

use common::{best_modularity, brute_modularity, planted_graph, random_graph, random_partition, running_example};
use gpart::graph::coarsen;
use gpart::metrics::{ari, modularity};
use gpart::refine::{refine_from_coarse, refine_from_scratch, refine_weighted, RefinerConfig};
use gpart::sbmgen::{generate, GeneratorParams};
use gpart::{Graph, Partition};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refinement_never_lowers_modularity(
        seed in 0u64..10_000, n in 4usize..150, k in 1usize..20, rseed in 0u64..100,
    ) {
        let (g, _) = planted_graph(n, 4, 0.3, 0.03, seed);
        let init = random_partition(n, k, seed + 1);
        let cfg = RefinerConfig { seed: rseed, ..Default::default() };
        let out = refine_from_coarse(&g, &init, &cfg).unwrap();
        prop_assert!(modularity(&g, &out).unwrap() >= modularity(&g, &init).unwrap() - 1e-12);
        prop_assert!(out.k() <= init.k());

        let sp = coarsen(&g, &init).unwrap();
        let winit = random_partition(sp.n_super(), 3, seed + 2);
        let wout = refine_weighted(&sp.coarse, &winit, &cfg).unwrap();
        prop_assert!(
            modularity(&sp.coarse, &wout).unwrap() >= modularity(&sp.coarse, &winit).unwrap() - 1e-12
        );
    }
}

/// Averaged over the graphs with a positive optimum. Single graphs can sit
/// well below it when the optimum needs a merged pair split apart again.
#[test]
fn near_optimal_on_tiny_graphs() {
    let cfg = RefinerConfig::default();
    let mut ratios = Vec::new();
    for seed in 0..50u64 {
        let n = 4 + (seed as usize % 5);
        let g = random_graph(n, 0.45, seed);
        let best = best_modularity(&g);
        let got = brute_modularity(&g, &refine_from_scratch(&g, &cfg).unwrap());
        assert!(got <= best + 1e-12);
        if best > 1e-12 {
            ratios.push(got / best);
        } else {
            assert!(got >= best - 1e-12);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean >= 0.95, "mean ratio to optimum {mean}");
    assert!(ratios.iter().all(|&r| r > 0.5));
}

#[test]
fn two_triangles_reach_the_optimum() {
    let g = Graph::from_edge_list(&[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], None).unwrap();
    assert!((best_modularity(&g) - 0.5).abs() < 1e-12);
    let p = refine_from_scratch(&g, &RefinerConfig::default()).unwrap();
    assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn running_example_refines_four_super_nodes() {
    let ex = running_example();
    let init = Partition::from_labels(&[0, 0, 0, 0, 1, 1, 1, 2, 2, 3, 3]);
    let sp = coarsen(&ex.graph, &init).unwrap();
    assert_eq!(sp.coarse.n(), 4);
    let out = refine_from_coarse(&ex.graph, &init, &RefinerConfig::default()).unwrap();
    assert!(init.refines(&out));
    assert!(modularity(&ex.graph, &out).unwrap() >= modularity(&ex.graph, &init).unwrap() - 1e-12);
}

#[test]
fn truth_initialization_survives() {
    let (g, truth) = generate(&GeneratorParams::hardest(3000, 17)).unwrap();
    let out = refine_from_coarse(&g, &truth, &RefinerConfig::default()).unwrap();
    assert!(ari(&out, &truth).unwrap() >= 1.0 - 0.01);
}

#[test]
fn scratch_recovers_planted_blocks() {
    let (g, truth) = generate(&GeneratorParams::hardest(10_000, 3)).unwrap();
    let p = refine_from_scratch(&g, &RefinerConfig::default()).unwrap();
    assert!(ari(&p, &truth).unwrap() >= 0.9);
}

#[test]
fn config_validation() {
    let g = random_graph(10, 0.5, 0);
    let bad = RefinerConfig {
        max_sweeps: 0,
        ..Default::default()
    };
    assert!(refine_from_scratch(&g, &bad).is_err());
    let frozen = RefinerConfig {
        max_sweeps: 1,
        min_gain: f64::INFINITY,
        ..Default::default()
    };
    let init = random_partition(10, 3, 1);
    assert_eq!(refine_from_coarse(&g, &init, &frozen).unwrap(), init);
}
