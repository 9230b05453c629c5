//! `repart`: hash-partition, enhance, measure and simulate labelled graphs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use repart_core::engine::{run_scenario, run_stream, EngineConfig, ScenarioFile, ScenarioRun};
use repart_core::gen::{generate, GenConfig};
use repart_core::io::{
    read_graph, read_partition, read_stream, read_workload, write_edges, write_partition, write_swap_log,
    write_vertices, IdMap, FORMAT_VERSION,
};
use repart_core::query_exec::{measure, IptMode};
use repart_core::swapper::{enhance, EnhanceConfig, InvocationReport, RejectReason};
use repart_core::vm::VmParams;
use repart_core::{hash_partition, LabeledGraph, Partitioning, Tpstry};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "repart", version, about = "Workload-aware graph re-partitioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hash-partition a graph into k parts.
    Partition(PartitionArgs),
    /// Improve a partitioning for a query workload.
    Enhance(EnhanceArgs),
    /// Count inter-partition traversals of a workload.
    Measure(MeasureArgs),
    /// Simulate a query stream with periodic enhancement.
    StreamSim(StreamArgs),
    /// Generate a seeded random labelled graph.
    GenGraph(GenArgs),
}

#[derive(Args)]
struct GraphFiles {
    /// Vertex file: `id<TAB>label` per line.
    #[arg(long)]
    vertices: PathBuf,
    /// Edge file: `src<TAB>dst` per line.
    #[arg(long)]
    edges: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    graph: GraphFiles,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output partition file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Tuning {
    /// Maximum pattern length; defaults to the longest query string.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0.85)]
    safe_threshold: f64,
    #[arg(long)]
    length_cutoff: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 8)]
    max_iterations: usize,
    #[arg(long, default_value_t = 10)]
    family_cap: usize,
    #[arg(long, default_value_t = 0.5)]
    family_threshold: f64,
    /// Candidates offered per partition and iteration.
    #[arg(long)]
    top_k: Option<usize>,
    /// Star unrolling bound used when expanding queries.
    #[arg(long, default_value_t = 4)]
    star_cap: usize,
}

impl Tuning {
    fn enhance_config(&self) -> Result<EnhanceConfig> {
        if self.epsilon < 0.0 {
            bail!("--epsilon must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.family_threshold) {
            bail!("--family-threshold must lie in [0, 1]");
        }
        Ok(EnhanceConfig {
            max_iterations: self.max_iterations,
            epsilon: self.epsilon,
            family_cap: self.family_cap,
            family_threshold: self.family_threshold,
            vm: VmParams {
                max_path_len: self.t,
                safe_threshold: self.safe_threshold,
                length_cutoff: self.length_cutoff,
            },
            top_k: self.top_k,
        })
    }
}

#[derive(Args)]
struct EnhanceArgs {
    #[command(flatten)]
    graph: GraphFiles,
    #[arg(long)]
    partition: PathBuf,
    /// Workload file: `frequency<TAB>rpq` per line.
    #[arg(long)]
    workload: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    /// Output partition file.
    #[arg(long)]
    out: PathBuf,
    /// Invocation report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Swap log (JSON lines).
    #[arg(long)]
    swap_log: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    graph: GraphFiles,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, default_value_t = 4)]
    star_cap: usize,
    /// Count only crossings on completed matches.
    #[arg(long)]
    complete_only: bool,
    /// Report as JSON; standard output if neither output is given.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    graph: GraphFiles,
    #[arg(long)]
    partition: PathBuf,
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "stream", required_unless_present = "stream")]
    scenario: Option<PathBuf>,
    /// Recorded stream: `tick<TAB>rpq` per line.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Window length in ticks for a recorded stream.
    #[arg(long, default_value_t = 10)]
    window: u64,
    /// Measurement interval in ticks for a recorded stream.
    #[arg(long, default_value_t = 1)]
    interval: u64,
    /// Invocation ticks for a recorded stream, comma separated.
    #[arg(long, value_delimiter = ',')]
    schedule: Vec<u64>,
    #[command(flatten)]
    tuning: Tuning,
    /// Time series CSV; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    swap_log: Option<PathBuf>,
    /// Final partition file.
    #[arg(long)]
    final_partition: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "num-vertices", default_value_t = 1000)]
    num_vertices: usize,
    #[arg(long, default_value_t = 6.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 4)]
    labels: usize,
    #[arg(long, default_value_t = 50)]
    communities: usize,
    #[arg(long, default_value_t = 0.1)]
    mixing: f64,
    #[arg(long, default_value_t = 0.7)]
    label_skew: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_vertices: PathBuf,
    #[arg(long)]
    out_edges: PathBuf,
}

/// JSON report with a format name and version in front.
#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn versioned_json<T: Serialize>(format: &str, body: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&Versioned {
        format,
        version: FORMAT_VERSION,
        body,
    })?;
    text.push('\n');
    Ok(text)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(files: &GraphFiles) -> Result<(LabeledGraph, IdMap)> {
    let (g, ids) = read_graph(&read(&files.vertices)?, &read(&files.edges)?).with_context(|| {
        format!(
            "loading graph from {} and {}",
            files.vertices.display(),
            files.edges.display()
        )
    })?;
    info!("graph: {} vertices, {} edges", g.len(), g.edge_count());
    Ok((g, ids))
}

fn load_partition(path: &Path, ids: &IdMap) -> Result<Partitioning> {
    read_partition(&read(path)?, ids).with_context(|| format!("loading {}", path.display()))
}

fn cmd_partition(a: PartitionArgs) -> Result<()> {
    let (g, ids) = load_graph(&a.graph)?;
    let p = hash_partition(&g, a.k, a.seed)?;
    emit(a.out.as_deref(), &write_partition(&p, &ids))?;
    eprintln!("imbalance {:.6}", p.imbalance());
    Ok(())
}

#[derive(Serialize)]
struct EnhanceSummary<'a> {
    #[serde(flatten)]
    report: &'a InvocationReport,
    swaps: usize,
    rejected_for_balance: usize,
    rejected_for_gain: usize,
}

fn cmd_enhance(a: EnhanceArgs) -> Result<()> {
    let cfg = a.tuning.enhance_config()?;
    let (g, ids) = load_graph(&a.graph)?;
    let p0 = load_partition(&a.partition, &ids)?;
    let workload = read_workload(&read(&a.workload)?).with_context(|| format!("loading {}", a.workload.display()))?;
    let mut trie = Tpstry::new(g.vocabulary().clone());
    let mut freqs = std::collections::BTreeMap::new();
    for (q, f) in &workload {
        let h = trie.insert_expr(q, a.tuning.star_cap)?;
        *freqs.entry(h).or_insert(0.0) += f;
    }
    trie.recompute_probabilities(&freqs)?;
    let (p, report) = enhance(&g, &p0, &trie, &cfg)?;
    info!("{} swaps, {} vertices moved", report.swaps(), report.total_moved);
    write(&a.out, &write_partition(&p, &ids))?;
    if let Some(path) = &a.report {
        let summary = EnhanceSummary {
            report: &report,
            swaps: report.swaps(),
            rejected_for_balance: report.rejections(RejectReason::Balance),
            rejected_for_gain: report.rejections(RejectReason::InsufficientGain),
        };
        write(path, &versioned_json("invocation-report", &summary)?)?;
    }
    if let Some(path) = &a.swap_log {
        write(path, &write_swap_log(&report.log)?)?;
    }
    Ok(())
}

fn cmd_measure(a: MeasureArgs) -> Result<()> {
    let (g, ids) = load_graph(&a.graph)?;
    let p = load_partition(&a.partition, &ids)?;
    let workload = read_workload(&read(&a.workload)?).with_context(|| format!("loading {}", a.workload.display()))?;
    let mode = if a.complete_only {
        IptMode::CompleteOnly
    } else {
        IptMode::Partial
    };
    let report = measure(&g, &p, workload.iter().map(|(q, f)| (q, *f)), a.star_cap, mode)?;
    let json = versioned_json("ipt-report", &report)?;
    if a.json.is_none() && a.csv.is_none() {
        print!("{json}");
    }
    if let Some(path) = &a.json {
        write(path, &json)?;
    }
    if let Some(path) = &a.csv {
        write(path, &report.to_csv())?;
    }
    Ok(())
}

fn cmd_stream_sim(a: StreamArgs) -> Result<()> {
    let cfg = EngineConfig {
        enhance: a.tuning.enhance_config()?,
        star_cap: a.tuning.star_cap,
        mode: IptMode::Partial,
    };
    let (g, ids) = load_graph(&a.graph)?;
    let p0 = load_partition(&a.partition, &ids)?;
    let run: ScenarioRun = match (&a.scenario, &a.stream) {
        (Some(path), _) => {
            let file: ScenarioFile =
                serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            run_scenario(&g, &p0, &file.into_scenario(), &cfg)?
        }
        (None, Some(path)) => {
            let events = read_stream(&read(path)?).with_context(|| format!("loading {}", path.display()))?;
            run_stream(&g, &p0, &events, a.window, a.interval, &a.schedule, &cfg)?
        }
        (None, None) => bail!("either --scenario or --stream is required"),
    };
    info!("{} invocations", run.invocations.len());
    emit(a.out.as_deref(), &run.to_csv())?;
    if let Some(path) = &a.swap_log {
        let log: Vec<_> = run
            .invocations
            .iter()
            .flat_map(|(_, r)| r.log.iter().cloned())
            .collect();
        write(path, &write_swap_log(&log)?)?;
    }
    if let Some(path) = &a.final_partition {
        write(path, &write_partition(&run.partitioning, &ids))?;
    }
    Ok(())
}

fn cmd_gen_graph(a: GenArgs) -> Result<()> {
    let cfg = GenConfig {
        vertices: a.num_vertices,
        avg_degree: a.avg_degree,
        labels: a.labels,
        communities: a.communities,
        mixing: a.mixing,
        label_skew: a.label_skew,
        seed: a.seed,
    };
    let g = generate(&cfg)?;
    let ids = IdMap::identity(g.len());
    write(&a.out_vertices, &write_vertices(&g, &ids))?;
    write(&a.out_edges, &write_edges(&g, &ids))?;
    eprintln!("{} vertices, {} edges", g.len(), g.edge_count());
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REPART_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Partition(a) => cmd_partition(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Measure(a) => cmd_measure(a),
        Command::StreamSim(a) => cmd_stream_sim(a),
        Command::GenGraph(a) => cmd_gen_graph(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
