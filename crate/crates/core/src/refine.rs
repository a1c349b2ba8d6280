//! Modularity refinement of (possibly weighted) graphs.
//!
//! The builtin refiner is Louvain-style: local moving of single nodes to the
//! neighboring block with the largest modularity gain, then aggregation of
//! blocks into super-nodes, repeated until a level makes no move. It can
//! start from any partition. The external kind shells out to another tool
//! through TSV files.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{coarsen, project_partition, Graph, Partition};
use crate::io::{read_partition, write_edge_list, write_partition};

/// Upper bound on aggregation levels; real runs stop after a handful.
const MAX_LEVELS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RefinerKind {
    Builtin,
    /// `cmd_template` is run through `sh -c` after substituting `{graph}`,
    /// `{init}` and `{out}` with file paths. The graph is written as a
    /// weighted edge list and the command must write a partition file.
    External {
        cmd_template: String,
        timeout_s: f64,
        one_based: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerConfig {
    pub kind: RefinerKind,
    /// Local-moving sweeps per aggregation level.
    pub max_sweeps: usize,
    /// A move must raise modularity by more than this.
    pub min_gain: f64,
    /// Seeds the node scan order.
    pub seed: u64,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            kind: RefinerKind::Builtin,
            max_sweeps: 32,
            min_gain: 1e-7,
            seed: 0,
        }
    }
}

pub const DEFAULT_TIMEOUT_S: f64 = 10_000.0;

impl RefinerConfig {
    pub fn external(cmd_template: impl Into<String>) -> Self {
        RefinerConfig {
            kind: RefinerKind::External {
                cmd_template: cmd_template.into(),
                timeout_s: DEFAULT_TIMEOUT_S,
                one_based: true,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::input("max_sweeps must be at least 1"));
        }
        if self.min_gain.is_nan() || self.min_gain < 0.0 {
            return Err(Error::input("min_gain must be non-negative"));
        }
        if let RefinerKind::External { timeout_s, .. } = &self.kind {
            if timeout_s.is_nan() || *timeout_s <= 0.0 {
                return Err(Error::input("timeout must be positive"));
            }
        }
        Ok(())
    }
}

/// Refines `init` on `wg`; never lowers modularity for the builtin kind.
pub fn refine_weighted(wg: &Graph, init: &Partition, cfg: &RefinerConfig) -> Result<Partition> {
    cfg.validate()?;
    if init.n() != wg.n() {
        return Err(Error::input("initial partition does not cover the graph"));
    }
    if wg.total_weight() <= 0.0 {
        return Err(Error::Domain("cannot refine a graph without edges".into()));
    }
    match &cfg.kind {
        RefinerKind::Builtin => Ok(louvain(wg, init, cfg)),
        RefinerKind::External {
            cmd_template,
            timeout_s,
            one_based,
        } => run_external(wg, init, cmd_template, *timeout_s, *one_based),
    }
}

/// Coarsens `g` by `init`, refines the super-graph from singletons and
/// maps the result back to the nodes of `g`.
pub fn refine_from_coarse(g: &Graph, init: &Partition, cfg: &RefinerConfig) -> Result<Partition> {
    let sp = coarsen(g, init)?;
    let coarse = refine_weighted(&sp.coarse, &Partition::singletons(sp.n_super()), cfg)?;
    project_partition(&sp, &coarse)
}

pub fn refine_from_scratch(g: &Graph, cfg: &RefinerConfig) -> Result<Partition> {
    refine_weighted(g, &Partition::singletons(g.n()), cfg)
}

struct Level {
    /// Weighted degree, self-loops counted twice.
    k: Vec<f64>,
    /// Total weight per block.
    tot: Vec<f64>,
    comm: Vec<u32>,
}

/// Moves nodes between blocks until a sweep makes no move. Returns the
/// number of moves.
fn local_moving(g: &Graph, lv: &mut Level, m: f64, cfg: &RefinerConfig, rng: &mut ChaCha8Rng) -> usize {
    let n = g.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut w_to = vec![0.0f64; n];
    let mut touched: Vec<u32> = Vec::new();
    let mut moves = 0;
    let two_m = 2.0 * m;
    for _ in 0..cfg.max_sweeps {
        let mut sweep_moves = 0;
        for &i in &order {
            let own = lv.comm[i];
            let ki = lv.k[i];
            for (j, w) in g.weighted_neighbors(i) {
                if j as usize == i {
                    continue;
                }
                let c = lv.comm[j as usize];
                if w_to[c as usize] == 0.0 {
                    touched.push(c);
                }
                w_to[c as usize] += w;
            }
            lv.tot[own as usize] -= ki;
            let gain = |c: u32, w: f64| w - lv.tot[c as usize] * ki / two_m;
            let own_gain = gain(own, w_to[own as usize]);
            let mut best = own;
            let mut best_gain = own_gain;
            for &c in &touched {
                let gc = gain(c, w_to[c as usize]);
                if gc > best_gain || (gc == best_gain && c < best) {
                    best = c;
                    best_gain = gc;
                }
            }
            // the gain terms are m times the modularity change
            if best != own && (best_gain - own_gain) / m > cfg.min_gain {
                lv.comm[i] = best;
                sweep_moves += 1;
            }
            lv.tot[lv.comm[i] as usize] += ki;
            for &c in &touched {
                w_to[c as usize] = 0.0;
            }
            w_to[own as usize] = 0.0;
            touched.clear();
        }
        moves += sweep_moves;
        if sweep_moves == 0 {
            break;
        }
    }
    moves
}

fn level_state(g: &Graph, comm: Vec<u32>) -> Level {
    let k = g.degrees();
    let mut tot = vec![0.0; g.n()];
    for (i, &c) in comm.iter().enumerate() {
        tot[c as usize] += k[i];
    }
    Level { k, tot, comm }
}

/// Multilevel local moving. After the last aggregation the result is
/// pushed back down one level at a time and local moving runs again on
/// each finer graph.
fn louvain(g: &Graph, init: &Partition, cfg: &RefinerConfig) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = g.total_weight();
    // (graph, node -> node of the next level) for every aggregated level
    let mut levels: Vec<(Graph, Vec<u32>)> = Vec::new();
    let mut level_graph = g.clone();
    let mut level_comm: Vec<u32> = init.assign().to_vec();
    let mut any_move = false;
    for level in 0..MAX_LEVELS {
        let mut lv = level_state(&level_graph, level_comm);
        let moves = local_moving(&level_graph, &mut lv, m, cfg, &mut rng);
        any_move |= moves > 0;
        let merged_init = level == 0 && init.k() < init.n();
        if moves == 0 && !merged_init {
            level_comm = lv.comm;
            break;
        }
        let p = Partition::from_labels_first_seen(&lv.comm);
        let sp = coarsen(&level_graph, &p).expect("partition built from this level");
        levels.push((std::mem::replace(&mut level_graph, sp.coarse), sp.block_of));
        level_comm = (0..level_graph.n() as u32).collect();
    }
    if !any_move {
        return init.clone();
    }
    while let Some((fine, up)) = levels.pop() {
        let comm = up.iter().map(|&u| level_comm[u as usize]).collect();
        let mut lv = level_state(&fine, comm);
        local_moving(&fine, &mut lv, m, cfg, &mut rng);
        level_comm = lv.comm;
    }
    Partition::from_labels_first_seen(&level_comm)
}

fn run_external(
    wg: &Graph,
    init: &Partition,
    template: &str,
    timeout_s: f64,
    one_based: bool,
) -> Result<Partition> {
    let dir = tempfile::tempdir().map_err(|e| Error::Refiner(format!("temp dir: {e}")))?;
    let graph_path = dir.path().join("graph.tsv");
    let init_path = dir.path().join("init.tsv");
    let out_path = dir.path().join("out.tsv");
    write_edge_list(&graph_path, &as_weighted(wg), one_based)?;
    write_partition(&init_path, init, one_based)?;
    let cmd = template
        .replace("{graph}", &shell_path(&graph_path))
        .replace("{init}", &shell_path(&init_path))
        .replace("{out}", &shell_path(&out_path));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Refiner(format!("spawn `{cmd}`: {e}")))?;
    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed().as_secs_f64() > timeout_s => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout { limit_s: timeout_s });
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(Error::Refiner(format!("wait: {e}"))),
        }
    };
    let mut stderr = String::new();
    if let Some(mut pipe) = child.stderr.take() {
        use std::io::Read;
        let _ = pipe.read_to_string(&mut stderr);
    }
    if !status.success() {
        return Err(Error::Refiner(format!(
            "`{cmd}` exited with {status}: {}",
            stderr.trim()
        )));
    }
    let p = read_partition(&out_path, one_based)
        .map_err(|e| Error::Refiner(format!("reading refiner output: {e}; stderr: {}", stderr.trim())))?;
    if p.n() != wg.n() {
        return Err(Error::Refiner(format!(
            "refiner returned {} nodes, expected {}",
            p.n(),
            wg.n()
        )));
    }
    Ok(p)
}

/// The external protocol always carries a weight column.
fn as_weighted(g: &Graph) -> Graph {
    if g.is_weighted() {
        return g.clone();
    }
    let edges: Vec<_> = g
        .edges()
        .map(|(i, j, w)| (i as usize, j as usize, w))
        .collect();
    Graph::from_weighted_edges(g.n(), &edges).expect("edges of a valid graph")
}

fn shell_path(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}
