//! Command-line front end: matrix generation, schedule synthesis, simulation,
//! scheduler comparison and parameter sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use a2a_sched::sim::simulate_spreadout_raw;
use a2a_sched::workload::{gen_adversarial, gen_uniform, gen_zipf, load_trace};
use a2a_sched::{
    reduce_to_server_level, DemandMatrix, Schedule, ScheduleDoc, Scheduler, SimReport, Topology,
    CSV_HEADER,
};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] a2a_sched::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 3 for broken internal invariants, 2 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_invariant() => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "a2a-sched", version, about = "Skew-aware All-to-All(v) scheduling for two-tier GPU clusters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a demand matrix file
    Gen(GenArgs),
    /// Synthesize a schedule for a demand matrix
    Schedule(ScheduleArgs),
    /// Simulate a schedule file and report timing and bounds
    Simulate(SimulateArgs),
    /// Compare FAST, SpreadOut and the optimum on one matrix (CSV)
    Compare(CompareArgs),
    /// Sweep server counts or bandwidth ratios (CSV)
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Uniform,
    Zipf,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchedulerArg {
    Fast,
    Spreadout,
}

impl From<SchedulerArg> for Scheduler {
    fn from(s: SchedulerArg) -> Self {
        match s {
            SchedulerArg::Fast => Scheduler::Fast,
            SchedulerArg::Spreadout => Scheduler::Spreadout,
        }
    }
}

/// Workload shape shared by `gen` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct WorkloadArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub kind: Kind,
    /// Mean bytes per GPU pair (uniform)
    #[arg(long, default_value_t = 50_000_000)]
    pub mean: u64,
    /// Zipf skew factor in [0, 1)
    #[arg(long, default_value_t = 0.8)]
    pub skew: f64,
    /// Total bytes (zipf); defaults to `mean` bytes per GPU pair
    #[arg(long)]
    pub total: Option<u64>,
    /// Bytes per cross-server tile (adversarial)
    #[arg(long, default_value_t = 1 << 30)]
    pub tile_bytes: u64,
}

impl WorkloadArgs {
    pub fn generate(&self, seed: u64, t: &Topology) -> Result<DemandMatrix> {
        let g = t.gpu_count() as u64;
        Ok(match self.kind {
            Kind::Uniform => gen_uniform(seed, t, self.mean)?,
            Kind::Zipf => {
                let total = match self.total {
                    Some(v) => v,
                    None => self
                        .mean
                        .checked_mul(g * g.saturating_sub(1))
                        .ok_or(a2a_sched::Error::Overflow("sizing zipf total"))?,
                };
                gen_zipf(seed, t, self.skew, total)?
            }
            Kind::Adversarial => gen_adversarial(t, self.tile_bytes)?,
        })
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of servers
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// GPUs per server
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    /// Output format; inferred from the `--out` extension when omitted
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Topology from a JSON file or inline JSON, with per-field overrides.
/// Unset fields fall back to 4 servers x 8 GPUs, 450 GB/s, 50 GB/s, no wake-up.
#[derive(Debug, Clone, Default, Args)]
pub struct TopoArgs {
    /// Topology JSON: a file path or an inline object such as '{"b1":9e11}'
    #[arg(long)]
    pub topo: Option<String>,
    /// Scale-up bandwidth per GPU, bytes/s
    #[arg(long)]
    pub b1: Option<f64>,
    /// Scale-out bandwidth per GPU, bytes/s
    #[arg(long)]
    pub b2: Option<f64>,
    /// Wake-up delay per transfer step, seconds
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopoFile {
    #[serde(alias = "n_servers")]
    n: Option<usize>,
    #[serde(alias = "gpus_per_server")]
    m: Option<usize>,
    #[serde(alias = "scaleup_bw")]
    b1: Option<f64>,
    #[serde(alias = "scaleout_bw")]
    b2: Option<f64>,
    #[serde(alias = "wakeup_delay")]
    alpha: Option<f64>,
}

impl TopoArgs {
    /// Builds the topology, starting from `base` when no `--topo` is given.
    pub fn resolve(&self, base: Topology) -> Result<Topology> {
        let file = match &self.topo {
            None => TopoFile::default(),
            Some(src) => {
                let text = if src.trim_start().starts_with('{') {
                    src.clone()
                } else {
                    read(Path::new(src))?
                };
                serde_json::from_str(&text).map_err(a2a_sched::Error::from)?
            }
        };
        let t = Topology {
            n_servers: file.n.unwrap_or(base.n_servers),
            gpus_per_server: file.m.unwrap_or(base.gpus_per_server),
            scaleup_bw: self.b1.or(file.b1).unwrap_or(base.scaleup_bw),
            scaleout_bw: self.b2.or(file.b2).unwrap_or(base.scaleout_bw),
            wakeup_delay: self.alpha.or(file.alpha).unwrap_or(base.wakeup_delay),
        };
        Ok(t.validate()?)
    }

    /// Topology for a given matrix; a `--topo` shape that disagrees is an error.
    pub fn for_matrix(&self, d: &DemandMatrix) -> Result<Topology> {
        let base = Topology {
            n_servers: d.n_servers(),
            gpus_per_server: d.gpus_per_server(),
            ..Topology::default()
        };
        let t = self.resolve(base)?;
        d.check_topology(&t)?;
        Ok(t)
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Demand matrix file (CSV or JSON)
    #[arg(long)]
    pub matrix: PathBuf,
    #[command(flatten)]
    pub topo: TopoArgs,
    #[arg(long, value_enum, default_value = "fast")]
    pub scheduler: SchedulerArg,
    /// Output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Schedule file written by `schedule`
    #[arg(long)]
    pub schedule: PathBuf,
    #[command(flatten)]
    pub topo: TopoArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[command(flatten)]
    pub topo: TopoArgs,
    /// Seed label for the `seed` column
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also report SpreadOut with per-GPU loads instead of an even split
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("axis").required(true).args(["servers", "ratio"])))]
pub struct SweepArgs {
    /// Server counts to sweep, e.g. 4,8,16
    #[arg(long, value_delimiter = ',', conflicts_with = "ratio")]
    pub servers: Option<Vec<usize>>,
    /// Scale-up/scale-out bandwidth ratios to sweep, e.g. 2,4,9
    #[arg(long, value_delimiter = ',')]
    pub ratio: Option<Vec<f64>>,
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Servers for a ratio sweep
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    /// Seeds 0..seeds are run at every point
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Also report SpreadOut with per-GPU loads instead of an even split
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub topo: TopoArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn load_matrix(path: &Path) -> Result<DemandMatrix> {
    load_trace(path).map_err(|e| match e {
        a2a_sched::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Schedule(a) => cmd_schedule(a, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Compare(a) => cmd_compare(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
    }
}

pub fn cmd_gen(a: GenArgs, stdout: &mut dyn Write) -> Result<()> {
    let t = Topology {
        n_servers: a.n,
        gpus_per_server: a.m,
        ..Topology::default()
    }
    .validate()?;
    let d = a.workload.generate(a.seed, &t)?;
    let format = a.format.unwrap_or_else(|| {
        match a.out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        }
    });
    let text = match format {
        Format::Csv => d.to_csv(),
        Format::Json => d.to_json() + "\n",
    };
    emit(&a.out, stdout, &text)
}

pub fn cmd_schedule(a: ScheduleArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let d = load_matrix(&a.matrix)?;
    let t = a.topo.for_matrix(&d)?;
    let start = Instant::now();
    let schedule = Schedule::build(a.scheduler.into(), &d, &t)?;
    let micros = start.elapsed().as_micros();
    writeln!(stderr, "synthesis_us={micros}")?;
    let doc = ScheduleDoc {
        topology: t,
        schedule,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(a2a_sched::Error::from)? + "\n";
    emit(&a.out, stdout, &text)
}

pub fn cmd_simulate(a: SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let doc: ScheduleDoc =
        serde_json::from_str(&read(&a.schedule)?).map_err(a2a_sched::Error::from)?;
    let t = a.topo.resolve(doc.topology)?;
    if (t.n_servers, t.gpus_per_server) != (doc.topology.n_servers, doc.topology.gpus_per_server) {
        return Err(CliError::Usage(format!(
            "topology is {}x{} but the schedule was built for {}x{}",
            t.n_servers, t.gpus_per_server, doc.topology.n_servers, doc.topology.gpus_per_server
        )));
    }
    let report = doc.schedule.report(&t)?;
    let text = serde_json::to_string_pretty(&report).map_err(a2a_sched::Error::from)? + "\n";
    emit(&a.out, stdout, &text)
}

/// FAST, SpreadOut and optimal rows for one matrix, plus a `spreadout_raw`
/// row (true per-GPU loads) when `raw` is set.
pub fn compare_rows(d: &DemandMatrix, t: &Topology, seed: Option<u64>, raw: bool) -> Result<Vec<String>> {
    let fast = Schedule::build(Scheduler::Fast, d, t)?.report(t)?;
    let spread: SimReport = Schedule::build(Scheduler::Spreadout, d, t)?.report(t)?;
    let mut rows = vec![fast.row(seed).to_csv_line(), spread.row(seed).to_csv_line()];
    if raw {
        let s = reduce_to_server_level(d, t)?;
        let tl = simulate_spreadout_raw(d, t)?;
        let mut row = SimReport::new(Scheduler::Spreadout, &s, tl, t)?.row(seed);
        row.scheduler = "spreadout_raw".into();
        rows.push(row.to_csv_line());
    }
    rows.push(fast.optimal_row(seed).to_csv_line());
    Ok(rows)
}

fn csv_text(rows: impl IntoIterator<Item = String>) -> String {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    text
}

pub fn cmd_compare(a: CompareArgs, stdout: &mut dyn Write) -> Result<()> {
    let d = load_matrix(&a.matrix)?;
    let t = a.topo.for_matrix(&d)?;
    emit(&a.out, stdout, &csv_text(compare_rows(&d, &t, a.seed, a.raw)?))
}

pub fn cmd_sweep(a: SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let base = a.topo.resolve(Topology {
        n_servers: a.n,
        gpus_per_server: a.m,
        ..Topology::default()
    })?;
    let points: Vec<Topology> = match (&a.servers, &a.ratio) {
        (Some(servers), None) => servers
            .iter()
            .map(|&n| Topology { n_servers: n, ..base }.validate())
            .collect::<a2a_sched::Result<_>>()?,
        (None, Some(ratios)) => ratios
            .iter()
            .map(|&r| base.with_ratio(r).validate())
            .collect::<a2a_sched::Result<_>>()?,
        _ => return Err(CliError::Usage("give exactly one of --servers or --ratio".into())),
    };
    let jobs: Vec<(Topology, u64)> = points
        .iter()
        .flat_map(|&t| (0..a.seeds).map(move |s| (t, s)))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(t, seed)| {
            let d = a.workload.generate(seed, &t)?;
            compare_rows(&d, &t, Some(seed), a.raw)
        })
        .collect::<Result<_>>()?;
    emit(&a.out, stdout, &csv_text(rows.into_iter().flatten()))
}
