//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{
    brute_accuracy, brute_ari, brute_modularity, brute_prf, dense_modularity_matrix, pair_counts,
    planted_graph, random_graph, random_partition,
};
use gpart::bench::{
    bench_static, bench_stream, static_graph_seed, stream_split_seed, Arm, BenchConfig, BenchReport,
    BenchRow, Status,
};
use gpart::graph::{coarsen, project_partition};
use gpart::infer::{derive_partition, derive_partition_from_scores, generalize_and_refine, stream_partition};
use gpart::metrics::{ari, contingency, matched_accuracy, modularity, pairwise_prf};
use gpart::model::{forward_edges, project, projection_matrix, ModelCheckpoint, ModelConfig};
use gpart::pretrain::{generate_corpus, pretrain_with, TrainHyper};
use gpart::refine::RefinerConfig;
use gpart::sbmgen::{generate, snowball_split, GeneratorParams, ParamRanges};
use gpart::{Graph, Partition};

const RUN_SEED: u64 = 20_240;
const TRIALS: usize = 5;

struct Suite {
    lines: Vec<(String, bool)>,
}

impl Suite {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        let line = format!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((line, pass));
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn projection_identity(s: &mut Suite) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let n = 2 + (seed as usize * 61) % 199;
        let g = random_graph(n, 0.05 + 0.01 * (seed % 10) as f64, seed);
        let omega = projection_matrix(n, 16, seed);
        let x = project(&g, &omega).unwrap();
        let q = dense_modularity_matrix(&g);
        for i in 0..n {
            for c in 0..16 {
                let dense: f64 = (0..n).map(|j| q[i][j] * omega[(j, c)]).sum();
                worst = worst.max((dense - x[(i, c)]).abs());
            }
        }
    }
    let el = secs(t);
    s.record(
        "1 projection identity",
        worst < 1e-9 && el < 10.0,
        format!("50 graphs, max |X - Q Omega| = {worst:.2e} (< 1e-9), {el:.2} s (< 10 s)"),
    );
}

fn coarsening_preservation(s: &mut Suite) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut conserved = true;
    for seed in 0..100u64 {
        let n = 2 + (seed as usize * 97) % 499;
        let g = random_graph(n, 8.0 / n as f64, seed);
        let p = random_partition(n, 1 + (seed as usize % 40), seed + 1);
        let sp = coarsen(&g, &p).unwrap();
        let mut total = 0.0;
        for (_, _, w) in sp.coarse.edges() {
            conserved &= w.fract() == 0.0;
            total += w;
        }
        conserved &= total == g.num_edges() as f64;
        let cp = random_partition(sp.n_super(), 1 + (seed as usize % 5), seed + 2);
        let fine = project_partition(&sp, &cp).unwrap();
        let a = modularity(&g, &fine).unwrap();
        let b = modularity(&sp.coarse, &cp).unwrap();
        worst = worst.max((a - b).abs());
    }
    let el = secs(t);
    s.record(
        "2 coarsening preserves modularity",
        worst < 1e-12 && conserved && el < 30.0,
        format!(
            "100 fixtures, max |dQ| = {worst:.2e} (< 1e-12), weights conserved exactly: {conserved}, {el:.2} s (< 30 s)"
        ),
    );
}

fn gradient_checks(s: &mut Suite) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for seed in 0..5 {
        match common::gradcheck::check(seed, common::gradcheck::small_config(true), 1.0, 1e-4) {
            Ok(e) => worst = worst.max(e),
            Err(msg) => {
                failure = Some(msg);
                break;
            }
        }
    }
    let el = secs(t);
    let detail = match &failure {
        Some(msg) => format!("{msg} ({el:.1} s)"),
        None => format!("5 fixtures, all blocks, worst relative error {worst:.2e} (< 1e-4), {el:.1} s (< 60 s)"),
    };
    s.record("3 gradient correctness", failure.is_none() && el < 60.0, detail);
}

fn metric_oracles(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut counts_exact = true;
    let mut ac_exact = true;
    for seed in 0..100u64 {
        let n = 4 + (seed as usize * 41) % 197;
        let (g, truth) = planted_graph(n, 1 + (seed as usize % 5), 0.3, 0.05, seed);
        let pred = random_partition(n, 1 + (seed as usize % 6), seed + 500);
        if truth.k() == n {
            continue;
        }
        let (n11, n10, n01, _) = pair_counts(&pred, &truth);
        let cells = contingency(&pred, &truth).unwrap();
        counts_exact &= cells.iter().map(|c| c.2 * (c.2 - 1) / 2).sum::<u64>() == n11;
        let pred_pairs: usize = pred.block_sizes().iter().map(|&x| x * (x - 1) / 2).sum();
        counts_exact &= pred_pairs as u64 == n11 + n10;
        let truth_pairs: usize = truth.block_sizes().iter().map(|&x| x * (x - 1) / 2).sum();
        counts_exact &= truth_pairs as u64 == n11 + n01;

        let prf = pairwise_prf(&pred, &truth).unwrap();
        let (p, r, f) = brute_prf(&pred, &truth);
        for (a, b) in [
            (modularity(&g, &pred).unwrap(), brute_modularity(&g, &pred)),
            (ari(&pred, &truth).unwrap(), brute_ari(&pred, &truth)),
            (prf.precision, p),
            (prf.recall, r),
            (prf.f1, f),
        ] {
            worst = worst.max((a - b).abs());
        }
        ac_exact &= matched_accuracy(&pred, &truth).unwrap() == brute_accuracy(&pred, &truth);
    }
    s.record(
        "4 metric oracles",
        worst < 1e-12 && counts_exact && ac_exact,
        format!(
            "100 fixtures, pair counts exact: {counts_exact}, AC exact: {ac_exact}, max real deviation {worst:.2e} (< 1e-12)"
        ),
    );
}

fn train(s: &mut Suite) -> ModelCheckpoint {
    let t = Instant::now();
    let corpus = generate_corpus(100, &ParamRanges::default(), RUN_SEED).unwrap();
    let gen_s = secs(t);
    let hyper = TrainHyper {
        seed: RUN_SEED,
        ..Default::default()
    };
    let t = Instant::now();
    let (ckpt, trace) = pretrain_with(&corpus, ModelConfig::default(), &hyper, |e, l, _| {
        eprintln!("  pretrain epoch {:>2}: loss {l:.5}", e + 1);
    })
    .unwrap();
    let train_s = secs(t);
    println!(
        "  pre-trained on {} graphs ({} epochs) in {:.0} s, corpus generated in {:.1} s",
        corpus.len(),
        hyper.epochs,
        train_s,
        gen_s
    );
    let decreasing = trace[..5].windows(2).all(|w| w[1] < w[0] + 1e-6);
    let drop = (trace[0] - trace[9]) / trace[0].abs();
    s.record(
        "extra pretraining",
        train_s + gen_s < 900.0 && decreasing && drop >= 0.2,
        format!(
            "{:.0} s (< 15 min), first 5 epoch losses decreasing: {decreasing}, epoch 1 to 10 drop {:.0}% (>= 20%)",
            train_s + gen_s,
            100.0 * drop
        ),
    );
    ckpt
}

fn held_out_initial_partition(s: &mut Suite, ckpt: &ModelCheckpoint) {
    let mut f1 = 0.0;
    for trial in 0..TRIALS {
        let (g, truth) = generate(&GeneratorParams::hardest(2000, static_graph_seed(RUN_SEED, 2000, trial))).unwrap();
        let init = derive_partition(&g, ckpt, 0.5).unwrap();
        f1 += pairwise_prf(&init, &truth).unwrap().f1;
    }
    f1 /= TRIALS as f64;
    s.record(
        "extra held-out initial partition",
        f1 >= 0.9,
        format!("{TRIALS} graphs at N=2000, mean pairwise F1 of the model-only partition {f1:.4} (>= 0.9)"),
    );
}

/// Modularity of the model's initial partition and of the final output for
/// every completed row of a static benchmark.
fn static_monotone(report: &BenchReport, ckpt: &ModelCheckpoint, violations: &mut Vec<String>) {
    for row in report.rows.iter().filter(|r| r.status == Status::Ok) {
        let (g, _) = generate(&GeneratorParams::hardest(row.n, row.graph_seed)).unwrap();
        let start = match row.arm {
            Arm::Model => derive_partition(&g, ckpt, 0.5).unwrap(),
            Arm::Scratch => Partition::singletons(g.n()),
        };
        check_monotone(&g, &start, row, violations);
    }
}

fn check_monotone(g: &Graph, start: &Partition, row: &BenchRow, violations: &mut Vec<String>) {
    let before = modularity(g, start).unwrap();
    let after = row.metrics.as_ref().and_then(|m| m.modularity).unwrap();
    if after < before - 1e-12 {
        violations.push(format!("{:?} n={} trial {}: {before} -> {after}", row.arm, row.n, row.trial));
    }
}

fn pipeline_rows(report: &BenchReport) -> Vec<&BenchRow> {
    report.rows.iter().filter(|r| r.arm == Arm::Model).collect()
}

fn desk_scale(s: &mut Suite, ckpt: &ModelCheckpoint, cfg: &RefinerConfig, violations: &mut Vec<String>) {
    let bench = BenchConfig {
        trials: TRIALS,
        seed: RUN_SEED,
        ..Default::default()
    };
    let report = bench_static(&[10_000], ckpt, cfg, &bench).unwrap();
    print!("{}", gpart::bench::format_summary(&report));
    let rows = pipeline_rows(&report);
    let ok = rows.iter().all(|r| r.status == Status::Ok) && rows.len() == TRIALS;
    let sum = &report.summary[0].model;
    let max_time = rows.iter().filter_map(|r| r.time_s).fold(0.0, f64::max);
    s.record(
        "5 desk-scale quality",
        ok && sum.ari >= 0.9 && sum.f1 >= 0.9 && max_time < 60.0,
        format!(
            "{TRIALS} graphs at N=10K, mean ARI {:.4} (>= 0.90), mean F1 {:.4} (>= 0.90), slowest pipeline {max_time:.2} s (< 60 s)",
            sum.ari, sum.f1
        ),
    );
    let ratio: f64 = rows
        .iter()
        .filter_map(|r| r.n_super.map(|ns| ns as f64 / r.n as f64))
        .sum::<f64>()
        / rows.len().max(1) as f64;
    s.record(
        "6 scale reduction",
        ok && ratio <= 0.9,
        format!("mean N~/N {ratio:.4} (<= 0.9)"),
    );
    static_monotone(&report, ckpt, violations);
}

fn init_speedup(s: &mut Suite, ckpt: &ModelCheckpoint, cfg: &RefinerConfig, violations: &mut Vec<String>) {
    let bench = BenchConfig {
        trials: TRIALS,
        seed: RUN_SEED,
        ..Default::default()
    };
    let report = bench_static(&[50_000], ckpt, cfg, &bench).unwrap();
    print!("{}", gpart::bench::format_summary(&report));
    let row = &report.summary[0];
    let ok = row.model.completed == TRIALS && row.scratch.completed == TRIALS;
    let speedup = row.scratch.refine_s / row.model.refine_s;
    let degradation = row.scratch.ari - row.model.ari;
    s.record(
        "7 initialization speedup",
        ok && speedup >= 1.1 && degradation <= 0.02,
        format!(
            "{TRIALS} graphs at N=50K, refine {:.4} s vs scratch {:.3} s: {speedup:.1}x (>= 1.1x), ARI {:.4} vs {:.4}, degradation {degradation:.4} (<= 0.02)",
            row.model.refine_s, row.scratch.refine_s, row.model.ari, row.scratch.ari
        ),
    );
    static_monotone(&report, ckpt, violations);
}

fn streaming(s: &mut Suite, ckpt: &ModelCheckpoint, cfg: &RefinerConfig, violations: &mut Vec<String>) {
    const N: usize = 10_000;
    const T: usize = 10;
    let bench = BenchConfig {
        trials: 1,
        seed: RUN_SEED,
        ..Default::default()
    };
    let report = bench_stream(N, T, ckpt, cfg, &bench).unwrap();
    print!("{}", gpart::bench::format_summary(&report));

    // closure: the last step against a static run with the same seeds
    let seed = static_graph_seed(RUN_SEED, N, 0);
    let (g, truth) = generate(&GeneratorParams::hardest(N, seed)).unwrap();
    let (_, steps) = snowball_split(&g, &truth, T, stream_split_seed(RUN_SEED, N, 0)).unwrap();
    let graphs: Vec<Graph> = steps.iter().map(|st| st.graph.clone()).collect();
    let out = stream_partition(&graphs, ckpt, cfg);
    let (static_p, _) = generalize_and_refine(&g, ckpt, cfg).unwrap();
    let closed = out.error.is_none() && out.results.last().map(|r| &r.0) == Some(&static_p);

    let mut reduced = true;
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut complete = out.error.is_none();
    for row in &report.summary {
        complete &= row.model.completed == 1 && row.scratch.completed == 1;
        reduced &= row.model.n_super.is_some_and(|ns| ns < row.n as f64);
        worst_gap = worst_gap.max(row.scratch.ari - row.model.ari);
    }
    for ((p, rep), st) in out.results.iter().zip(&steps) {
        let init = derive_partition(&st.graph, ckpt, 0.5).unwrap();
        let before = modularity(&st.graph, &init).unwrap();
        let after = modularity(&st.graph, p).unwrap();
        if after < before - 1e-12 {
            violations.push(format!("stream step {:?}: {before} -> {after}", rep.phase));
        }
    }
    for row in report.rows.iter().filter(|r| r.arm == Arm::Scratch && r.status == Status::Ok) {
        let st = &steps[match row.phase {
            gpart::infer::Phase::Stream { step } => step - 1,
            _ => unreachable!(),
        }];
        check_monotone(&st.graph, &Partition::singletons(st.graph.n()), row, violations);
    }
    s.record(
        "8 streaming closure and reduction",
        complete && closed && reduced && worst_gap <= 0.05,
        format!(
            "T={T} at N=10K, step {T} identical to static: {closed}, N~_t < N_t at every step: {reduced}, worst per-step ARI gap to scratch {worst_gap:.4} (<= 0.05)"
        ),
    );
}

fn threshold_monotone(ckpt: &ModelCheckpoint) -> (bool, usize) {
    let mut ok = true;
    for seed in 0..20u64 {
        let (g, _) = generate(&GeneratorParams {
            avg_degree: 30.0,
            ..GeneratorParams::hardest(1000, 9000 + seed)
        })
        .unwrap();
        let fwd = forward_edges(&g, ckpt).unwrap();
        let mut prev = derive_partition_from_scores(g.n(), &fwd.edges, &fwd.scores, 0.0).unwrap();
        for t in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let p = derive_partition_from_scores(g.n(), &fwd.edges, &fwd.scores, t).unwrap();
            ok &= p.refines(&prev);
            prev = p;
        }
    }
    (ok, 20)
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags; a name filter that does not match
    // this suite skips it.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    let mut s = Suite { lines: Vec::new() };
    let start = Instant::now();
    projection_identity(&mut s);
    coarsening_preservation(&mut s);
    gradient_checks(&mut s);
    metric_oracles(&mut s);

    let ckpt = train(&mut s);
    held_out_initial_partition(&mut s, &ckpt);
    let cfg = RefinerConfig {
        seed: RUN_SEED,
        ..Default::default()
    };
    let mut violations = Vec::new();
    desk_scale(&mut s, &ckpt, &cfg, &mut violations);
    init_speedup(&mut s, &ckpt, &cfg, &mut violations);
    streaming(&mut s, &ckpt, &cfg, &mut violations);
    let (thr_ok, fixtures) = threshold_monotone(&ckpt);
    for v in &violations {
        println!("  modularity decreased: {v}");
    }
    s.record(
        "9 monotonicity",
        violations.is_empty() && thr_ok,
        format!(
            "refinement never lowered modularity in any benchmark run: {}, threshold refinement on {fixtures} fixtures: {thr_ok}",
            violations.is_empty()
        ),
    );

    println!("\nacceptance summary ({:.0} s):", secs(start));
    for (line, _) in &s.lines {
        println!("  {line}");
    }
    if s.lines.iter().all(|(_, p)| *p) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
