//! Analytical completion-time model.
//!
//! Every transfer step costs a fixed wake-up delay plus bytes over bandwidth.
//! There is no queueing or congestion: a step's duration is set by its most
//! loaded GPU. For FAST the steps are pipelined: balancing runs first, the
//! intra-server share of the exchange runs alongside the first scale-out
//! stage, and each stage's redistribution overlaps the next stage's
//! scale-out. Only the last redistribution is exposed.

use serde::{Deserialize, Serialize};

use crate::balance::{redistribution_schedule, BalancePlan, IntraMove};
use crate::error::{Error, Result};
use crate::matrix::{DemandMatrix, ServerMatrix};
use crate::spreadout::spreadout_stages;
use crate::stage::{is_sorted_ascending, PermutationStage};
use crate::topology::Topology;

/// Wake-up delay plus transmission time; absent steps cost nothing.
pub fn step_cost(bytes: f64, bw: f64, t: &Topology) -> f64 {
    if bytes <= 0.0 {
        0.0
    } else {
        t.wakeup_delay + bytes / bw
    }
}

/// Duration of one synchronized scale-up phase: the busiest GPU's
/// `max(sent, received)` over the scale-up bandwidth, maximized over servers.
pub fn intra_phase_time(moves: &[IntraMove], t: &Topology) -> Result<f64> {
    let m = t.gpus_per_server;
    let mut send = vec![0u64; t.gpu_count()];
    let mut recv = vec![0u64; t.gpu_count()];
    for mv in moves {
        if mv.server >= t.n_servers || mv.from_gpu >= m || mv.to_gpu >= m {
            return Err(Error::InvalidArgument(format!("move outside topology: {mv:?}")));
        }
        if mv.from_gpu == mv.to_gpu {
            return Err(Error::InvalidArgument(format!("move to self: {mv:?}")));
        }
        send[mv.server * m + mv.from_gpu] += mv.bytes;
        recv[mv.server * m + mv.to_gpu] += mv.bytes;
    }
    let busiest = send
        .iter()
        .zip(&recv)
        .map(|(&s, &r)| s.max(r))
        .max()
        .unwrap_or(0);
    Ok(step_cost(busiest as f64, t.scaleup_bw, t))
}

/// The same-server share of the exchange expressed as scale-up moves.
pub fn intra_exchange_moves(d: &DemandMatrix) -> Vec<IntraMove> {
    let m = d.gpus_per_server();
    let mut out = Vec::new();
    for server in 0..d.n_servers() {
        for p in 0..m {
            for q in (0..m).filter(|&q| q != p) {
                let bytes = d.get(server * m + p, server * m + q);
                if bytes > 0 {
                    out.push(IntraMove {
                        server,
                        from_gpu: p,
                        to_gpu: q,
                        for_dst_server: server,
                        bytes,
                    });
                }
            }
        }
    }
    out
}

/// Per-component durations of one simulated exchange, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub t_balance: f64,
    pub t_intra_a2a: f64,
    pub scaleout: Vec<f64>,
    pub redistribution: Vec<f64>,
    pub total: f64,
}

impl Timeline {
    pub fn scaleout_total(&self) -> f64 {
        self.scaleout.iter().sum()
    }

    pub fn final_redistribution(&self) -> f64 {
        self.redistribution.last().copied().unwrap_or(0.0)
    }

    /// Balancing plus the exposed final redistribution, relative to the time
    /// spent on scale-out.
    pub fn overhead_ratio(&self) -> f64 {
        let so = self.scaleout_total();
        if so > 0.0 {
            (self.t_balance + self.final_redistribution()) / so
        } else {
            0.0
        }
    }

    /// Start and end of every step on a common clock, for plotting.
    pub fn spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        let push = |out: &mut Vec<Span>, kind, stage, start: f64, dur: f64| {
            if dur > 0.0 {
                out.push(Span {
                    kind,
                    stage,
                    start,
                    end: start + dur,
                });
            }
        };
        push(&mut out, SpanKind::Balance, None, 0.0, self.t_balance);
        let mut clock = self.t_balance;
        if self.scaleout.is_empty() {
            push(&mut out, SpanKind::IntraExchange, None, clock, self.t_intra_a2a);
            return out;
        }
        for (k, &so) in self.scaleout.iter().enumerate() {
            push(&mut out, SpanKind::ScaleOut, Some(k), clock, so);
            let slot = if k == 0 {
                push(&mut out, SpanKind::IntraExchange, None, clock, self.t_intra_a2a);
                so.max(self.t_intra_a2a)
            } else {
                let rd = self.redistribution.get(k - 1).copied().unwrap_or(0.0);
                push(&mut out, SpanKind::Redistribute, Some(k - 1), clock, rd);
                so.max(rd)
            };
            clock += slot;
        }
        push(
            &mut out,
            SpanKind::Redistribute,
            Some(self.scaleout.len() - 1),
            clock,
            self.final_redistribution(),
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Balance,
    IntraExchange,
    ScaleOut,
    Redistribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub kind: SpanKind,
    pub stage: Option<usize>,
    pub start: f64,
    pub end: f64,
}

/// Completion time of the pipelined two-tier schedule.
///
/// `stages` must be sorted by ascending weight. Stage `k` moves
/// `weight_k / m` bytes per GPU over scale-out.
pub fn simulate_fast(
    plan: &BalancePlan,
    stages: &[PermutationStage],
    t: &Topology,
) -> Result<Timeline> {
    plan.reshaped.check_topology(t)?;
    if !is_sorted_ascending(stages) {
        return Err(Error::InvalidArgument(
            "stages must be sorted by ascending weight".into(),
        ));
    }
    let m = t.gpus_per_server as f64;
    let t_balance = intra_phase_time(&plan.moves, t)?;
    let t_intra_a2a = intra_phase_time(&intra_exchange_moves(&plan.reshaped), t)?;
    let scaleout: Vec<f64> = stages
        .iter()
        .map(|s| step_cost(s.weight as f64 / m, t.scaleout_bw, t))
        .collect();
    let redistribution = redistribution_schedule(plan, stages)?
        .iter()
        .map(|moves| intra_phase_time(moves, t))
        .collect::<Result<Vec<f64>>>()?;

    let mut total = t_balance;
    if scaleout.is_empty() {
        total += t_intra_a2a;
    } else {
        for (k, &so) in scaleout.iter().enumerate() {
            let hidden = if k == 0 {
                t_intra_a2a
            } else {
                redistribution[k - 1]
            };
            total += so.max(hidden);
        }
        total += redistribution[redistribution.len() - 1];
    }
    Ok(Timeline {
        t_balance,
        t_intra_a2a,
        scaleout,
        redistribution,
        total,
    })
}

/// Completion time of server-level SpreadOut: the sum over stages of the
/// stage's largest edge, with each edge's load split evenly over the `m`
/// GPUs of the sender.
pub fn simulate_spreadout(s: &ServerMatrix, t: &Topology) -> Result<Timeline> {
    if s.dim() != t.n_servers {
        return Err(Error::Dimension(format!(
            "server matrix is {0}x{0} but topology has {1} servers",
            s.dim(),
            t.n_servers
        )));
    }
    let m = t.gpus_per_server as f64;
    let scaleout: Vec<f64> = spreadout_stages(s)
        .iter()
        .map(|st| step_cost(st.weight as f64 / m, t.scaleout_bw, t))
        .collect();
    Ok(Timeline {
        t_balance: 0.0,
        t_intra_a2a: 0.0,
        total: scaleout.iter().sum(),
        scaleout,
        redistribution: Vec::new(),
    })
}

/// SpreadOut on the raw GPU matrix: in each stage every GPU of server `s`
/// sends its own row of tile `(s, s + k)` and receivers absorb their own
/// column, so the stage lasts as long as the busiest GPU sender or receiver.
pub fn simulate_spreadout_raw(d: &DemandMatrix, t: &Topology) -> Result<Timeline> {
    d.check_topology(t)?;
    let n = t.n_servers;
    let mut scaleout = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let mut busiest = 0u64;
        for src in 0..n {
            let tile = d.tile(src, (src + k) % n)?;
            let rows = tile.row_sums().into_iter();
            let cols = tile.entries.col_sums().into_iter();
            busiest = busiest.max(rows.chain(cols).max().unwrap_or(0));
        }
        scaleout.push(step_cost(busiest as f64, t.scaleout_bw, t));
    }
    Ok(Timeline {
        t_balance: 0.0,
        t_intra_a2a: 0.0,
        total: scaleout.iter().sum(),
        scaleout,
        redistribution: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::build_balance_plan;

    fn topo(n: usize, m: usize, b1: f64, b2: f64, alpha: f64) -> Topology {
        Topology::new(n, m, b1, b2, alpha).unwrap()
    }

    #[test]
    fn step_cost_examples() {
        let t0 = topo(2, 1, 50e9, 50e9, 0.0);
        assert_eq!(step_cost(50e9, 50e9, &t0), 1.0);
        let ta = topo(2, 1, 50e9, 50e9, 1e-3);
        assert_eq!(step_cost(0.0, 50e9, &ta), 0.0);
        let t10 = topo(2, 1, 50e9, 12.5e9, 10e-6);
        assert!((step_cost(1e9, 12.5e9, &t10) - 0.080010).abs() < 1e-12);
    }

    fn mv(server: usize, from: usize, to: usize, bytes: u64) -> IntraMove {
        IntraMove {
            server,
            from_gpu: from,
            to_gpu: to,
            for_dst_server: server,
            bytes,
        }
    }

    #[test]
    fn intra_phase_single_move() {
        let t = topo(2, 4, 100.0, 1.0, 0.5);
        assert_eq!(intra_phase_time(&[mv(0, 0, 1, 300)], &t).unwrap(), 0.5 + 3.0);
        assert_eq!(intra_phase_time(&[], &t).unwrap(), 0.0);
    }

    #[test]
    fn intra_phase_fan_out_counts_sender_total() {
        // one GPU ships (m-1)/m of T = 800 bytes to the other three GPUs
        let t = topo(2, 4, 100.0, 1.0, 0.0);
        let moves: Vec<_> = (1..4).map(|q| mv(1, 0, q, 200)).collect();
        let got = intra_phase_time(&moves, &t).unwrap();
        assert!((got - 3.0 * 800.0 / (4.0 * 100.0)).abs() < 1e-12);
    }

    #[test]
    fn intra_phase_balanced_ring() {
        // every GPU sends and receives c = 50
        let t = topo(2, 4, 10.0, 1.0, 0.25);
        let moves: Vec<_> = (0..4).map(|p| mv(0, p, (p + 1) % 4, 50)).collect();
        assert_eq!(intra_phase_time(&moves, &t).unwrap(), 0.25 + 5.0);
    }

    #[test]
    fn intra_phase_rejects_bad_moves() {
        let t = topo(2, 2, 10.0, 1.0, 0.0);
        assert!(intra_phase_time(&[mv(0, 0, 2, 1)], &t).is_err());
        assert!(intra_phase_time(&[mv(0, 1, 1, 1)], &t).is_err());
        assert!(intra_phase_time(&[mv(2, 0, 1, 1)], &t).is_err());
    }

    #[test]
    fn zero_workload_takes_no_time() {
        let t = topo(3, 2, 10.0, 1.0, 1.0);
        let plan = build_balance_plan(&DemandMatrix::zeros(3, 2), &t).unwrap();
        let tl = simulate_fast(&plan, &[], &t).unwrap();
        assert_eq!(tl.total, 0.0);
        assert!(tl.spans().is_empty());
    }

    #[test]
    fn unsorted_stages_rejected() {
        let t = topo(2, 1, 10.0, 1.0, 0.0);
        let d = DemandMatrix::from_rows(2, 1, &[vec![0, 5], vec![5, 0]]).unwrap();
        let plan = build_balance_plan(&d, &t).unwrap();
        let stages = vec![
            PermutationStage::uniform(3, [(0, 1), (1, 0)]),
            PermutationStage::uniform(2, [(0, 1), (1, 0)]),
        ];
        assert!(matches!(
            simulate_fast(&plan, &stages, &t),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn pipeline_accounting_by_hand() {
        // m = 2, one pair each way; tile 0->1 has all 8 bytes on GPU 0 -> GPU 0
        let d = DemandMatrix::from_rows(
            2,
            2,
            &[vec![0, 0, 8, 0], vec![0, 0, 0, 0], vec![0, 0, 0, 0], vec![8, 0, 0, 0]],
        )
        .unwrap();
        let t = topo(2, 2, 4.0, 1.0, 0.0);
        let plan = build_balance_plan(&d, &t).unwrap();
        let stages = vec![PermutationStage::uniform(8, [(0, 1), (1, 0)])];
        let tl = simulate_fast(&plan, &stages, &t).unwrap();
        // balancing: each server moves 4 bytes between its GPUs -> 1 s
        assert_eq!(tl.t_balance, 1.0);
        // scale-out: 8 / 2 per GPU over B2 = 1 -> 4 s
        assert_eq!(tl.scaleout, vec![4.0]);
        // redistribution: 4 bytes forwarded per server -> 1 s, exposed
        assert_eq!(tl.redistribution, vec![1.0]);
        assert_eq!(tl.total, 6.0);
        assert!((tl.overhead_ratio() - 0.5).abs() < 1e-12);
        let spans = tl.spans();
        assert_eq!(spans.last().unwrap().end, tl.total);
    }

    #[test]
    fn spreadout_sim_matches_units() {
        let s = ServerMatrix::from_rows(&[vec![0, 5, 3], vec![1, 0, 4], vec![6, 2, 0]]).unwrap();
        let t = topo(3, 1, 1.0, 1.0, 0.0);
        assert_eq!(simulate_spreadout(&s, &t).unwrap().total, 9.0);
        assert!(simulate_spreadout(&s, &topo(4, 1, 1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn spreadout_raw_sees_gpu_stragglers() {
        // tile 0->1 puts everything on one GPU pair
        let d = DemandMatrix::from_rows(
            2,
            2,
            &[vec![0, 0, 8, 0], vec![0, 0, 0, 0], vec![0, 0, 0, 0], vec![0, 0, 0, 0]],
        )
        .unwrap();
        let t = topo(2, 2, 4.0, 1.0, 0.0);
        assert_eq!(simulate_spreadout_raw(&d, &t).unwrap().total, 8.0);
        let s = crate::matrix::reduce_to_server_level(&d, &t).unwrap();
        assert_eq!(simulate_spreadout(&s, &t).unwrap().total, 4.0);
    }
}
