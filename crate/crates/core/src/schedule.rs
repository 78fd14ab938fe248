//! End-to-end synthesis: balance, reduce, embed, decompose, strip, sort.

use serde::{Deserialize, Serialize};

use crate::balance::{build_balance_plan, redistribution_schedule, BalancePlan, IntraMove};
use crate::birkhoff::{decompose_server_matrix, delivered_per_pair, strip_auxiliary, Decomposition};
use crate::bounds::{algorithmic_bandwidth, optimal_time, BoundsReport};
use crate::error::{Error, Result};
use crate::matrix::{reduce_to_server_level, DemandMatrix, ServerMatrix};
use crate::sim::{simulate_fast, simulate_spreadout, Timeline};
use crate::spreadout::spreadout_stages;
use crate::stage::{sort_stages_ascending, PermutationStage};
use crate::topology::Topology;

/// A complete FAST schedule. Identical inputs give identical schedules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FastSchedule {
    #[serde(rename = "balance")]
    pub plan: BalancePlan,
    #[serde(with = "server_rows")]
    pub server_matrix: ServerMatrix,
    pub decomposition: Decomposition,
    /// Real-traffic stages in execution order (ascending weight).
    pub stages: Vec<PermutationStage>,
    /// Scale-up moves released after each stage, aligned with `stages`.
    pub redistribution: Vec<Vec<IntraMove>>,
}

pub fn synthesize_fast(d: &DemandMatrix, t: &Topology) -> Result<FastSchedule> {
    let t = t.validate()?;
    let plan = build_balance_plan(d, &t)?;
    let server_matrix = reduce_to_server_level(&plan.reshaped, &t)?;
    let decomposition = decompose_server_matrix(&server_matrix)?;
    let stripped = strip_auxiliary(&decomposition.stages, &decomposition.aux)?;
    if delivered_per_pair(t.n_servers, &stripped) != server_matrix.off_diagonal() {
        return Err(Error::Invariant(
            "stripped stages do not deliver the server matrix".into(),
        ));
    }
    let stages = sort_stages_ascending(stripped);
    let redistribution = redistribution_schedule(&plan, &stages)?;
    Ok(FastSchedule {
        plan,
        server_matrix,
        decomposition,
        stages,
        redistribution,
    })
}

impl FastSchedule {
    pub fn simulate(&self, t: &Topology) -> Result<Timeline> {
        simulate_fast(&self.plan, &self.stages, t)
    }
}

/// Server-level SpreadOut baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadoutSchedule {
    #[serde(with = "server_rows")]
    pub server_matrix: ServerMatrix,
    pub stages: Vec<PermutationStage>,
}

pub fn synthesize_spreadout(d: &DemandMatrix, t: &Topology) -> Result<SpreadoutSchedule> {
    let t = t.validate()?;
    let server_matrix = reduce_to_server_level(d, &t)?;
    let stages = spreadout_stages(&server_matrix);
    Ok(SpreadoutSchedule {
        server_matrix,
        stages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Fast,
    Spreadout,
}

impl std::fmt::Display for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheduler::Fast => "fast",
            Scheduler::Spreadout => "spreadout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheduler", rename_all = "lowercase")]
pub enum Schedule {
    Fast(FastSchedule),
    Spreadout(SpreadoutSchedule),
}

/// A schedule together with the topology it was built for; this is the
/// document the `schedule` command writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDoc {
    pub topology: Topology,
    #[serde(flatten)]
    pub schedule: Schedule,
}

impl Schedule {
    pub fn build(kind: Scheduler, d: &DemandMatrix, t: &Topology) -> Result<Self> {
        Ok(match kind {
            Scheduler::Fast => Schedule::Fast(synthesize_fast(d, t)?),
            Scheduler::Spreadout => Schedule::Spreadout(synthesize_spreadout(d, t)?),
        })
    }

    pub fn kind(&self) -> Scheduler {
        match self {
            Schedule::Fast(_) => Scheduler::Fast,
            Schedule::Spreadout(_) => Scheduler::Spreadout,
        }
    }

    pub fn server_matrix(&self) -> &ServerMatrix {
        match self {
            Schedule::Fast(f) => &f.server_matrix,
            Schedule::Spreadout(s) => &s.server_matrix,
        }
    }

    pub fn stages(&self) -> &[PermutationStage] {
        match self {
            Schedule::Fast(f) => &f.stages,
            Schedule::Spreadout(s) => &s.stages,
        }
    }

    pub fn simulate(&self, t: &Topology) -> Result<Timeline> {
        if self.server_matrix().dim() != t.n_servers {
            return Err(Error::Dimension("schedule and topology disagree".into()));
        }
        match self {
            Schedule::Fast(f) => f.simulate(t),
            Schedule::Spreadout(s) => simulate_spreadout(&s.server_matrix, t),
        }
    }

    pub fn report(&self, t: &Topology) -> Result<SimReport> {
        SimReport::new(self.kind(), self.server_matrix(), self.simulate(t)?, t)
    }
}

/// Simulated timeline plus the closed-form bounds for the same workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scheduler: Scheduler,
    pub topology: Topology,
    pub total_bytes: u64,
    pub timeline: Timeline,
    pub algo_bw: f64,
    pub optimal_s: f64,
    pub ratio: f64,
    pub bounds: BoundsReport,
}

impl SimReport {
    pub fn new(
        scheduler: Scheduler,
        s: &ServerMatrix,
        timeline: Timeline,
        t: &Topology,
    ) -> Result<Self> {
        let total_bytes = s.totals().total();
        let optimal_s = optimal_time(s, t);
        let algo_bw = algorithmic_bandwidth(total_bytes, t.gpu_count(), timeline.total)?;
        let ratio = if optimal_s > 0.0 {
            timeline.total / optimal_s
        } else {
            1.0
        };
        Ok(SimReport {
            scheduler,
            topology: *t,
            total_bytes,
            algo_bw,
            optimal_s,
            ratio,
            bounds: BoundsReport::new(s, t),
            timeline,
        })
    }

    pub fn row(&self, seed: Option<u64>) -> CsvRow {
        CsvRow::new(&self.scheduler.to_string(), &self.topology, seed, self.timeline.total, self.algo_bw, self.optimal_s)
    }

    /// The `optimal` comparison row for the same workload.
    pub fn optimal_row(&self, seed: Option<u64>) -> CsvRow {
        let bw = algorithmic_bandwidth(self.total_bytes, self.topology.gpu_count(), self.optimal_s)
            .unwrap_or(f64::INFINITY);
        CsvRow::new("optimal", &self.topology, seed, self.optimal_s, bw, self.optimal_s)
    }
}

/// `scheduler,n,m,b1,b2,alpha,seed,total_s,algo_bw_Bps,optimal_s,ratio`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheduler: String,
    pub n: usize,
    pub m: usize,
    pub b1: f64,
    pub b2: f64,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub total_s: f64,
    pub algo_bw_bps: f64,
    pub optimal_s: f64,
    pub ratio: f64,
}

pub const CSV_HEADER: &str = "scheduler,n,m,b1,b2,alpha,seed,total_s,algo_bw_Bps,optimal_s,ratio";

impl CsvRow {
    fn new(scheduler: &str, t: &Topology, seed: Option<u64>, total_s: f64, algo_bw_bps: f64, optimal_s: f64) -> Self {
        CsvRow {
            scheduler: scheduler.to_string(),
            n: t.n_servers,
            m: t.gpus_per_server,
            b1: t.scaleup_bw,
            b2: t.scaleout_bw,
            alpha: t.wakeup_delay,
            seed,
            total_s,
            algo_bw_bps,
            optimal_s,
            ratio: if optimal_s > 0.0 { total_s / optimal_s } else { 1.0 },
        }
    }

    pub fn to_csv_line(&self) -> String {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheduler,
            self.n,
            self.m,
            self.b1,
            self.b2,
            self.alpha,
            seed,
            self.total_s,
            self.algo_bw_bps,
            self.optimal_s,
            self.ratio
        )
    }
}

mod server_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::matrix::ServerMatrix;

    pub fn serialize<S: Serializer>(s: &ServerMatrix, ser: S) -> Result<S::Ok, S::Error> {
        s.to_rows().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<ServerMatrix, D::Error> {
        let rows = Vec::<Vec<u64>>::deserialize(de)?;
        ServerMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
