use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpart::bench::{self, BenchConfig, BenchReport};
use gpart::error::{Error, Result};
use gpart::infer::{generalize_and_refine, stream_partition, RunReport};
use gpart::metrics::evaluate;
use gpart::model::{load_checkpoint, save_checkpoint, ModelConfig};
use gpart::pretrain::{generate_corpus, pretrain_with, TrainHyper};
use gpart::refine::{RefinerConfig, RefinerKind, DEFAULT_TIMEOUT_S};
use gpart::sbmgen::{generate, snowball_split, GeneratorParams, ParamRanges};
use gpart::{io, Partition};

#[derive(Parser)]
#[command(name = "gpart", version, about = "Graph partitioning with a pre-trained pair classifier")]
struct Cli {
    /// Node and block ids in TSV files start at 1 (pass `--one-based false` for 0-based).
    #[arg(long, global = true, default_value_t = true, action = clap::ArgAction::Set)]
    one_based: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark graph, or a training corpus with `--corpus`.
    Generate(GenerateArgs),
    /// Split a graph into cumulative snowball steps.
    StreamSplit(StreamSplitArgs),
    /// Pre-train a model on a corpus directory.
    Pretrain(PretrainArgs),
    /// Partition one graph with a checkpoint.
    Partition(PartitionArgs),
    /// Partition every step of a stream manifest.
    Stream(StreamArgs),
    /// Score a partition against ground truth.
    Eval(EvalArgs),
    /// Compare the pipeline with refinement from scratch on generated graphs.
    BenchStatic(BenchStaticArgs),
    /// The same comparison over snowball streaming steps.
    BenchStream(BenchStreamArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, env = "GPART_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Block count; derived from `n` when omitted.
    #[arg(long)]
    blocks: Option<usize>,
    /// Within/between edge-count ratio.
    #[arg(long, default_value_t = 2.5)]
    ratio: f64,
    /// Largest over smallest expected block size.
    #[arg(long, default_value_t = 3.0)]
    heterogeneity: f64,
    #[arg(long, default_value_t = 81.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 1.5)]
    degree_exponent: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write this many graphs with randomized parameters instead.
    #[arg(long)]
    corpus: Option<usize>,
}

#[derive(Args)]
struct StreamSplitArgs {
    #[arg(long, env = "GPART_GRAPH")]
    graph: PathBuf,
    #[arg(long, env = "GPART_TRUTH")]
    truth: PathBuf,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "GPART_OUT_DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    /// Directory of `*.edges.tsv` / `*.truth.tsv` pairs. When omitted, a
    /// default corpus is generated in memory.
    #[arg(long, env = "GPART_CORPUS_DIR")]
    corpus_dir: Option<PathBuf>,
    /// Size of the generated corpus when no directory is given.
    #[arg(long, default_value_t = 100)]
    corpus_size: usize,
    #[arg(long, env = "GPART_CKPT")]
    out_ckpt: PathBuf,
    /// Per-epoch loss as CSV; defaults to `<out-ckpt>.loss.csv`.
    #[arg(long)]
    loss_trace: Option<PathBuf>,
    #[arg(long, default_value_t = TrainHyper::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainHyper::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainHyper::default().neg_ratio)]
    neg_ratio: f64,
    #[arg(long, default_value_t = TrainHyper::default().lambda_mod)]
    lambda_mod: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ModelConfig::default().k)]
    k: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefinerChoice {
    Builtin,
    External,
}

#[derive(Args)]
struct RefinerArgs {
    #[arg(long, value_enum, default_value_t = RefinerChoice::Builtin)]
    refiner: RefinerChoice,
    /// Command for the external refiner, with `{graph}`, `{init}` and `{out}` placeholders.
    #[arg(long)]
    refiner_cmd: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    timeout: f64,
    #[arg(long, default_value_t = RefinerConfig::default().max_sweeps)]
    max_sweeps: usize,
    #[arg(long, default_value_t = RefinerConfig::default().min_gain)]
    min_gain: f64,
    #[arg(long, default_value_t = 0)]
    refiner_seed: u64,
}

impl RefinerArgs {
    fn config(&self, one_based: bool) -> Result<RefinerConfig> {
        let kind = match self.refiner {
            RefinerChoice::Builtin => RefinerKind::Builtin,
            RefinerChoice::External => RefinerKind::External {
                cmd_template: self
                    .refiner_cmd
                    .clone()
                    .ok_or_else(|| Error::Input("--refiner external needs --refiner-cmd".into()))?,
                timeout_s: self.timeout,
                one_based,
            },
        };
        let cfg = RefinerConfig {
            kind,
            max_sweeps: self.max_sweeps,
            min_gain: self.min_gain,
            seed: self.refiner_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long, env = "GPART_GRAPH")]
    graph: PathBuf,
    #[arg(long, env = "GPART_CKPT")]
    ckpt: PathBuf,
    #[arg(long)]
    out_partition: PathBuf,
    /// JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Ground truth; adds quality metrics to the report.
    #[arg(long, env = "GPART_TRUTH")]
    truth: Option<PathBuf>,
    #[command(flatten)]
    refiner: RefinerArgs,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, env = "GPART_CKPT")]
    ckpt: PathBuf,
    /// Per-step partitions (step-local ids) go here.
    #[arg(long, env = "GPART_OUT_DIR")]
    out_dir: PathBuf,
    /// JSON-lines report, one object per step; defaults to `<out-dir>/report.jsonl`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Score each step against the truth files in the manifest.
    #[arg(long)]
    with_truth: bool,
    #[command(flatten)]
    refiner: RefinerArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, env = "GPART_TRUTH")]
    truth: PathBuf,
    /// Graph file, for modularity.
    #[arg(long, env = "GPART_GRAPH")]
    graph: Option<PathBuf>,
}

#[derive(Args)]
struct BenchCommon {
    #[arg(long, env = "GPART_CKPT")]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// JSON-lines output, one object per arm and graph or step.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-arm time limit in seconds; slower runs are reported as OOT.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    time_limit: f64,
    #[command(flatten)]
    refiner: RefinerArgs,
}

#[derive(Args)]
struct BenchStaticArgs {
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 50_000])]
    scales: Vec<usize>,
    #[command(flatten)]
    common: BenchCommon,
}

#[derive(Args)]
struct BenchStreamArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[command(flatten)]
    common: BenchCommon,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json_line<T: serde::Serialize>(out: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut out = create(path)?;
    write_json_line(&mut out, path, value)?;
    out.flush().map_err(|e| io_err(path, e))
}

fn cmd_generate(a: &GenerateArgs, one_based: bool) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    if let Some(m) = a.corpus {
        let corpus = generate_corpus(m, &ParamRanges::default(), a.seed)?;
        io::write_corpus(&a.out_dir, &corpus, one_based)?;
        eprintln!("wrote {m} graphs to {}", a.out_dir.display());
        return Ok(());
    }
    let params = GeneratorParams {
        n: a.n,
        k_target: a.blocks,
        within_between_ratio: a.ratio,
        size_heterogeneity: a.heterogeneity,
        avg_degree: a.avg_degree,
        degree_exponent: a.degree_exponent,
        seed: a.seed,
    };
    let (g, truth) = generate(&params)?;
    io::write_edge_list(&a.out_dir.join("graph.tsv"), &g, one_based)?;
    io::write_partition(&a.out_dir.join("truth.tsv"), &truth, one_based)?;
    write_json(&a.out_dir.join("params.json"), &params)?;
    eprintln!(
        "n={} m={} blocks={} -> {}",
        g.n(),
        g.num_edges(),
        truth.k(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_stream_split(a: &StreamSplitArgs, one_based: bool) -> Result<()> {
    let truth = io::read_partition(&a.truth, one_based)?;
    let (g, _) = io::read_edge_list(&a.graph, one_based, Some(truth.n()))?;
    let (_, steps) = snowball_split(&g, &truth, a.steps, a.seed)?;
    let manifest = io::write_stream(&a.out_dir, &steps, one_based)?;
    eprintln!("{} steps, manifest {}", steps.len(), manifest.display());
    Ok(())
}

fn cmd_pretrain(a: &PretrainArgs, one_based: bool) -> Result<()> {
    let corpus = match &a.corpus_dir {
        Some(dir) => io::read_corpus(dir, one_based)?,
        None => generate_corpus(a.corpus_size, &ParamRanges::default(), a.seed)?,
    };
    eprintln!("corpus: {} graphs", corpus.len());
    let hyper = TrainHyper {
        epochs: a.epochs,
        learning_rate: a.lr,
        neg_ratio: a.neg_ratio,
        lambda_mod: a.lambda_mod,
        seed: a.seed,
        ..Default::default()
    };
    let config = ModelConfig {
        k: a.k,
        ..Default::default()
    };
    let (ckpt, trace) = pretrain_with(&corpus, config, &hyper, |epoch, loss, _| {
        eprintln!("epoch {:>3}  loss {loss:.6}", epoch + 1);
    })?;
    save_checkpoint(&a.out_ckpt, &ckpt)?;
    let trace_path = a
        .loss_trace
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", a.out_ckpt.display())));
    let mut out = create(&trace_path)?;
    let res: std::io::Result<()> = (|| {
        writeln!(out, "epoch,loss")?;
        for (i, l) in trace.iter().enumerate() {
            writeln!(out, "{},{l}", i + 1)?;
        }
        out.flush()
    })();
    res.map_err(|e| io_err(&trace_path, e))?;
    eprintln!("checkpoint {}", a.out_ckpt.display());
    Ok(())
}

fn cmd_partition(a: &PartitionArgs, one_based: bool) -> Result<()> {
    let truth = a
        .truth
        .as_ref()
        .map(|t| io::read_partition(t, one_based))
        .transpose()?;
    let (g, stats) = io::read_edge_list(&a.graph, one_based, truth.as_ref().map(Partition::n))?;
    if stats.self_loops + stats.duplicates > 0 {
        eprintln!(
            "dropped {} self-loops and {} duplicate edges",
            stats.self_loops, stats.duplicates
        );
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let cfg = a.refiner.config(one_based)?;
    let (p, mut report) = generalize_and_refine(&g, &ckpt, &cfg)?;
    if let Some(t) = &truth {
        report.metrics = Some(evaluate(&p, t, Some(&g))?);
    }
    io::write_partition(&a.out_partition, &p, one_based)?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    print_report(&report);
    Ok(())
}

fn print_report(r: &RunReport) {
    let t = &r.timings;
    eprintln!(
        "n={} m={} n_super={} k_init={} k={} | feat {:.3}s ffp {:.3}s init {:.3}s refine {:.3}s total {:.3}s",
        r.n, r.m, r.n_super, r.k_init, r.k_final, t.feat_s, t.ffp_s, t.init_s, t.refine_s, t.total_s
    );
    if let Some(q) = &r.metrics {
        eprintln!(
            "AC {:.4} ARI {:.4} F1 {:.4} (RCL {:.4}, PCN {:.4})",
            q.ac, q.ari, q.f1, q.recall, q.precision
        );
    }
}

fn cmd_stream(a: &StreamArgs, one_based: bool) -> Result<()> {
    let (manifest, graphs) = io::read_stream_graphs(&a.manifest)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let cfg = a.refiner.config(one_based)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let report_path = a.report.clone().unwrap_or_else(|| a.out_dir.join("report.jsonl"));
    let mut out = create(&report_path)?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));

    let outcome = stream_partition(&graphs, &ckpt, &cfg);
    for ((p, report), step) in outcome.results.iter().zip(&manifest.steps) {
        let mut report = report.clone();
        if a.with_truth {
            let truth = io::read_partition(&dir.join(&step.truth), manifest.one_based)?;
            report.metrics = Some(evaluate(p, &truth, Some(&graphs[step.t - 1]))?);
        }
        io::write_partition(
            &a.out_dir.join(format!("step{:03}.partition.tsv", step.t)),
            p,
            one_based,
        )?;
        write_json_line(&mut out, &report_path, &report)?;
        print_report(&report);
    }
    out.flush().map_err(|e| io_err(&report_path, e))?;
    match outcome.error {
        Some((step, e)) => {
            eprintln!("step {step} failed; earlier steps were written");
            Err(e)
        }
        None => Ok(()),
    }
}

fn cmd_eval(a: &EvalArgs, one_based: bool) -> Result<()> {
    let q = bench::eval_files(&a.pred, &a.truth, a.graph.as_deref(), one_based)?;
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &q)?;
    match writeln!(out) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_err(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn bench_setup(c: &BenchCommon, one_based: bool) -> Result<(gpart::model::ModelCheckpoint, RefinerConfig, BenchConfig)> {
    let ckpt = load_checkpoint(&c.ckpt)?;
    let cfg = c.refiner.config(one_based)?;
    let bench = BenchConfig {
        trials: c.trials,
        seed: c.seed,
        jobs: c.jobs,
        time_limit_s: c.time_limit,
    };
    Ok((ckpt, cfg, bench))
}

fn emit_bench(report: &BenchReport, path: Option<&Path>) -> Result<()> {
    if let Some(path) = path {
        let mut out = create(path)?;
        for row in &report.rows {
            write_json_line(&mut out, path, row)?;
        }
        for row in &report.summary {
            write_json_line(&mut out, path, row)?;
        }
        out.flush().map_err(|e| io_err(path, e))?;
    }
    print!("{}", bench::format_summary(report));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ob = cli.one_based;
    match &cli.cmd {
        Cmd::Generate(a) => cmd_generate(a, ob),
        Cmd::StreamSplit(a) => cmd_stream_split(a, ob),
        Cmd::Pretrain(a) => cmd_pretrain(a, ob),
        Cmd::Partition(a) => cmd_partition(a, ob),
        Cmd::Stream(a) => cmd_stream(a, ob),
        Cmd::Eval(a) => cmd_eval(a, ob),
        Cmd::BenchStatic(a) => {
            let (ckpt, cfg, b) = bench_setup(&a.common, ob)?;
            let report = bench::bench_static(&a.scales, &ckpt, &cfg, &b)?;
            emit_bench(&report, a.common.report.as_deref())
        }
        Cmd::BenchStream(a) => {
            let (ckpt, cfg, b) = bench_setup(&a.common, ob)?;
            let report = bench::bench_stream(a.n, a.steps, &ckpt, &cfg, &b)?;
            emit_bench(&report, a.common.report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
