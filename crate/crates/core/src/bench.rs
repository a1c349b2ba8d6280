//! Benchmark harness: generated hardest-setting graphs, the pre-trained
//! pipeline against refinement from scratch, averaged per scale or per
//! streaming step.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::infer::{generalize_and_refine, Phase, RunReport};
use crate::metrics::{evaluate, QualityMetrics};
use crate::model::ModelCheckpoint;
use crate::refine::{refine_from_scratch, RefinerConfig, DEFAULT_TIMEOUT_S};
use crate::sbmgen::{generate, snowball_split, GeneratorParams};

pub const BENCH_SCHEMA_VERSION: u32 = 1;

/// Expands one run seed into independent per-component seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_GRAPH: u64 = 1;
const TAG_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Model-derived initialization, super-graph refinement.
    Model,
    /// The refiner alone on the full graph.
    Scratch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// Exceeded the time limit.
    Oot,
    Error(String),
}

/// One JSON-lines record: an arm on one graph or streaming step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub schema_version: u32,
    pub arm: Arm,
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    pub graph_seed: u64,
    pub phase: Phase,
    pub status: Status,
    pub time_s: Option<f64>,
    /// Refiner wall time (the whole run for the scratch arm).
    pub refine_s: Option<f64>,
    pub n_super: Option<usize>,
    pub metrics: Option<QualityMetrics>,
    pub report: Option<RunReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub completed: usize,
    pub oot: usize,
    pub failed: usize,
    pub time_s: f64,
    pub refine_s: f64,
    pub ac: f64,
    pub ari: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub n_super: Option<f64>,
}

/// Relative improvement of the pipeline over the scratch arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    /// `(scratch - pipeline) / scratch` total time, in percent.
    pub time_pct: f64,
    pub speedup: f64,
    /// `scratch refine time / pipeline refine time`.
    pub refine_speedup: f64,
    pub ac: f64,
    pub ari: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    /// Streaming step, if any.
    pub step: Option<usize>,
    pub model: ArmSummary,
    pub scratch: ArmSummary,
    pub improv: Option<Improvement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub run_seed: u64,
    pub refiner_seed: u64,
    pub projection_seed: u64,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub trials: usize,
    pub seed: u64,
    /// Concurrent trials.
    pub jobs: usize,
    pub time_limit_s: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            trials: 5,
            seed: 0,
            jobs: 1,
            time_limit_s: DEFAULT_TIMEOUT_S,
        }
    }
}

fn status_of(e: &Error) -> Status {
    match e {
        Error::Timeout { .. } => Status::Oot,
        other => Status::Error(other.to_string()),
    }
}

fn empty_row(arm: Arm, g: &Graph, trial: usize, graph_seed: u64, phase: Phase) -> BenchRow {
    BenchRow {
        schema_version: BENCH_SCHEMA_VERSION,
        arm,
        n: g.n(),
        m: g.num_edges(),
        trial,
        graph_seed,
        phase,
        status: Status::Ok,
        time_s: None,
        refine_s: None,
        n_super: None,
        metrics: None,
        report: None,
    }
}

/// Runs both arms on one graph.
pub fn run_arms(
    g: &Graph,
    truth: &Partition,
    ckpt: &ModelCheckpoint,
    cfg: &RefinerConfig,
    trial: usize,
    graph_seed: u64,
    phase: Phase,
    time_limit_s: f64,
) -> [BenchRow; 2] {
    let mut pipe = empty_row(Arm::Model, g, trial, graph_seed, phase);
    match generalize_and_refine(g, ckpt, cfg) {
        Ok((p, mut report)) => {
            report.phase = phase;
            let t = report.timings.total_s;
            if t > time_limit_s {
                pipe.status = Status::Oot;
            } else {
                match evaluate(&p, truth, Some(g)) {
                    Ok(q) => {
                        report.metrics = Some(q.clone());
                        pipe.metrics = Some(q);
                    }
                    Err(e) => pipe.status = status_of(&e),
                }
                pipe.time_s = Some(t);
                pipe.refine_s = Some(report.timings.refine_s);
                pipe.n_super = Some(report.n_super);
            }
            pipe.report = Some(report);
        }
        Err(e) => pipe.status = status_of(&e),
    }

    let mut scratch = empty_row(Arm::Scratch, g, trial, graph_seed, phase);
    let start = Instant::now();
    match refine_from_scratch(g, cfg) {
        Ok(p) => {
            let t = start.elapsed().as_secs_f64();
            if t > time_limit_s {
                scratch.status = Status::Oot;
            } else {
                match evaluate(&p, truth, Some(g)) {
                    Ok(q) => scratch.metrics = Some(q),
                    Err(e) => scratch.status = status_of(&e),
                }
                scratch.time_s = Some(t);
                scratch.refine_s = Some(t);
                scratch.n_super = Some(g.n());
            }
        }
        Err(e) => scratch.status = status_of(&e),
    }
    [pipe, scratch]
}

fn summarize_arm<'a>(rows: impl Iterator<Item = &'a BenchRow>) -> ArmSummary {
    let mut s = ArmSummary::default();
    let mut n_super = 0.0;
    for r in rows {
        match (&r.status, &r.metrics, r.time_s) {
            (Status::Ok, Some(q), Some(t)) => {
                s.completed += 1;
                s.time_s += t;
                s.refine_s += r.refine_s.unwrap_or(t);
                s.ac += q.ac;
                s.ari += q.ari;
                s.f1 += q.f1;
                s.recall += q.recall;
                s.precision += q.precision;
                n_super += r.n_super.unwrap_or(r.n) as f64;
            }
            (Status::Oot, ..) => s.oot += 1,
            _ => s.failed += 1,
        }
    }
    if s.completed > 0 {
        let c = s.completed as f64;
        for v in [
            &mut s.time_s,
            &mut s.refine_s,
            &mut s.ac,
            &mut s.ari,
            &mut s.f1,
            &mut s.recall,
            &mut s.precision,
        ] {
            *v /= c;
        }
        s.n_super = Some(n_super / c);
    }
    s
}

fn summarize(n: usize, step: Option<usize>, rows: &[&BenchRow]) -> SummaryRow {
    let model = summarize_arm(rows.iter().copied().filter(|r| r.arm == Arm::Model));
    let scratch = summarize_arm(rows.iter().copied().filter(|r| r.arm == Arm::Scratch));
    let improv = (model.completed > 0 && scratch.completed > 0).then(|| Improvement {
        time_pct: 100.0 * (scratch.time_s - model.time_s) / scratch.time_s,
        speedup: scratch.time_s / model.time_s,
        refine_speedup: scratch.refine_s / model.refine_s,
        ac: model.ac - scratch.ac,
        ari: model.ari - scratch.ari,
        f1: model.f1 - scratch.f1,
    });
    SummaryRow {
        n,
        step,
        model,
        scratch,
        improv,
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Graph seed of trial `trial` at scale `n`.
pub fn static_graph_seed(run_seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(run_seed, &[TAG_GRAPH, n as u64, trial as u64])
}

/// Snowball seed of stream trial `trial` at scale `n`.
pub fn stream_split_seed(run_seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(run_seed, &[TAG_STREAM, n as u64, trial as u64])
}

pub fn bench_static(
    scales: &[usize],
    ckpt: &ModelCheckpoint,
    cfg: &RefinerConfig,
    bench: &BenchConfig,
) -> Result<BenchReport> {
    cfg.validate()?;
    let work: Vec<(usize, usize)> = scales
        .iter()
        .flat_map(|&n| (0..bench.trials).map(move |t| (n, t)))
        .collect();
    let results: Vec<Result<[BenchRow; 2]>> = with_pool(bench.jobs, || {
        work.par_iter()
            .map(|&(n, trial)| {
                let seed = static_graph_seed(bench.seed, n, trial);
                let (g, truth) = generate(&GeneratorParams::hardest(n, seed))?;
                Ok(run_arms(&g, &truth, ckpt, cfg, trial, seed, Phase::Static, bench.time_limit_s))
            })
            .collect()
    })?;
    let mut rows = Vec::with_capacity(2 * work.len());
    for r in results {
        rows.extend(r?);
    }
    let summary = scales
        .iter()
        .map(|&n| {
            let at: Vec<&BenchRow> = rows.iter().filter(|r| r.n == n).collect();
            summarize(n, None, &at)
        })
        .collect();
    Ok(BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        run_seed: bench.seed,
        refiner_seed: cfg.seed,
        projection_seed: ckpt.config.projection_seed,
        rows,
        summary,
    })
}

/// Snowball streams over `n_total`-node graphs, `steps` steps each. Trial
/// graphs use the same seeds as [`bench_static`] at that scale, so the final
/// step reproduces the static numbers.
pub fn bench_stream(
    n_total: usize,
    steps: usize,
    ckpt: &ModelCheckpoint,
    cfg: &RefinerConfig,
    bench: &BenchConfig,
) -> Result<BenchReport> {
    cfg.validate()?;
    let results: Vec<Result<Vec<BenchRow>>> = with_pool(bench.jobs, || {
        (0..bench.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = static_graph_seed(bench.seed, n_total, trial);
                let (g, truth) = generate(&GeneratorParams::hardest(n_total, seed))?;
                let split_seed = stream_split_seed(bench.seed, n_total, trial);
                let (_, snapshots) = snowball_split(&g, &truth, steps, split_seed)?;
                let mut rows = Vec::with_capacity(2 * steps);
                for s in &snapshots {
                    rows.extend(run_arms(
                        &s.graph,
                        &s.truth,
                        ckpt,
                        cfg,
                        trial,
                        seed,
                        Phase::Stream { step: s.t },
                        bench.time_limit_s,
                    ));
                }
                Ok(rows)
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let summary = (1..=steps)
        .map(|t| {
            let at: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.phase == Phase::Stream { step: t })
                .collect();
            let n = at.first().map_or(0, |r| r.n);
            summarize(n, Some(t), &at)
        })
        .collect();
    Ok(BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        run_seed: bench.seed,
        refiner_seed: cfg.seed,
        projection_seed: ckpt.config.projection_seed,
        rows,
        summary,
    })
}

/// Fixed-width text table of a report's summary rows.
pub fn format_summary(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>8} {:>4} {:>8} | {:>9} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9}\n",
        "N", "step", "arm", "time(s)", "AC", "ARI", "F1", "RCL", "PCN", "N~"
    ));
    for row in &report.summary {
        let step = row.step.map_or("-".to_string(), |s| s.to_string());
        for (name, a) in [("model", &row.model), ("scratch", &row.scratch)] {
            if a.completed == 0 {
                let what = if a.oot > 0 { "OOT" } else { "failed" };
                out.push_str(&format!("{:>8} {:>4} {:>8} | {what}\n", row.n, step, name));
                continue;
            }
            out.push_str(&format!(
                "{:>8} {:>4} {:>8} | {:>9.3} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>9.0}\n",
                row.n,
                step,
                name,
                a.time_s,
                a.ac,
                a.ari,
                a.f1,
                a.recall,
                a.precision,
                a.n_super.unwrap_or(f64::NAN)
            ));
        }
        if let Some(i) = &row.improv {
            out.push_str(&format!(
                "{:>8} {:>4} {:>8} | {:>+8.1}% {:>+7.4} {:>+7.4} {:>+7.4}   speedup {:.2}x, refine {:.2}x\n",
                row.n, step, "improv", i.time_pct, i.ac, i.ari, i.f1, i.speedup, i.refine_speedup
            ));
        }
    }
    out
}

/// Metrics for a prediction file against a truth file, optionally with the
/// graph for modularity.
pub fn eval_files(
    pred: &std::path::Path,
    truth: &std::path::Path,
    graph: Option<&std::path::Path>,
    one_based: bool,
) -> Result<QualityMetrics> {
    let p = crate::io::read_partition(pred, one_based)?;
    let t = crate::io::read_partition(truth, one_based)?;
    if p.n() != t.n() {
        return Err(Error::input(format!(
            "prediction covers {} nodes, truth {}",
            p.n(),
            t.n()
        )));
    }
    let g = graph
        .map(|path| crate::io::read_edge_list(path, one_based, Some(t.n())).map(|(g, _)| g))
        .transpose()?;
    evaluate(&p, &t, g.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[TAG_GRAPH, 100, 0]);
        let b = derive_seed(1, &[TAG_GRAPH, 100, 1]);
        let c = derive_seed(2, &[TAG_GRAPH, 100, 0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[TAG_GRAPH, 100, 0]));
    }

    #[test]
    fn small_static_bench_is_reproducible() {
        let ckpt = ModelCheckpoint::init(Default::default(), 0).unwrap();
        let cfg = RefinerConfig::default();
        let bench = BenchConfig {
            trials: 1,
            seed: 5,
            ..Default::default()
        };
        let a = bench_static(&[1000], &ckpt, &cfg, &bench).unwrap();
        let b = bench_static(&[1000], &ckpt, &cfg, &bench).unwrap();
        let strip = |r: &BenchReport| r.rows.iter().map(|x| x.metrics.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.rows.len(), 2);
        assert!(format_summary(&a).contains("improv"));
    }

    #[test]
    fn stream_rows_per_step() {
        let ckpt = ModelCheckpoint::init(Default::default(), 0).unwrap();
        let cfg = RefinerConfig::default();
        let bench = BenchConfig {
            trials: 1,
            ..Default::default()
        };
        let r = bench_stream(1000, 3, &ckpt, &cfg, &bench).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert_eq!(r.summary.len(), 3);
        assert_eq!(r.summary[2].n, 1000);
    }
}
