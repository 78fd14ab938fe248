//! Closed-form optimum, adversarial worst case, and algorithmic bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ServerMatrix;
use crate::topology::Topology;

/// True when every server's intra volume is at most the average of its
/// outgoing inter-server volumes, the regime the worst-case bound covers.
pub fn intra_assumption_holds(s: &ServerMatrix) -> bool {
    let n = s.dim() as u128;
    s.cross_row_sums()
        .iter()
        .enumerate()
        .all(|(i, &row)| s.intra(i) as u128 * n <= row as u128)
}

/// Scale-out lower bound: the heaviest server row or column spread over the
/// server's `m` NICs.
pub fn optimal_time(s: &ServerMatrix, t: &Topology) -> f64 {
    s.max_rc() as f64 / (t.gpus_per_server as f64 * t.scaleout_bw)
}

/// The four additive terms of the adversarial completion time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseTerms {
    pub balance: f64,
    pub intra: f64,
    pub scaleout: f64,
    pub final_redistribution: f64,
}

impl WorstCaseTerms {
    pub fn total(&self) -> f64 {
        self.balance + self.intra + self.scaleout + self.final_redistribution
    }
}

pub fn fast_worstcase_terms(s: &ServerMatrix, t: &Topology) -> WorstCaseTerms {
    let m = t.gpus_per_server as f64;
    let n = t.n_servers as f64;
    let b1 = t.scaleup_bw;
    let max_row = s.cross_row_sums().into_iter().max().unwrap_or(0) as f64;
    let max_entry = s.max_cross_entry() as f64;
    WorstCaseTerms {
        balance: (m - 1.0) / (m * b1) * max_row,
        intra: max_row / (n * b1),
        scaleout: optimal_time(s, t),
        final_redistribution: max_entry / (m * b1),
    }
}

/// Adversarial completion-time bound: balancing, intra exchange, optimal
/// scale-out, and one exposed redistribution, added up.
pub fn fast_worstcase_time(s: &ServerMatrix, t: &Topology) -> f64 {
    fast_worstcase_terms(s, t).total()
}

/// `1 + (B2 / B1) * (m + m / n)`.
pub fn ratio_bound(t: &Topology) -> f64 {
    let m = t.gpus_per_server as f64;
    let n = t.n_servers as f64;
    1.0 + (t.scaleout_bw / t.scaleup_bw) * (m + m / n)
}

/// Total bytes over (GPU count x completion time).
pub fn algorithmic_bandwidth(total_bytes: u64, gpu_count: usize, completion_s: f64) -> Result<f64> {
    if total_bytes == 0 {
        return Ok(0.0);
    }
    if gpu_count == 0 || completion_s.is_nan() || completion_s <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "algorithmic bandwidth needs GPUs and positive time (got {gpu_count} GPUs, {completion_s} s)"
        )));
    }
    Ok(total_bytes as f64 / (gpu_count as f64 * completion_s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub t_optimal: f64,
    pub t_fast_worstcase: f64,
    pub ratio_bound: f64,
    /// Algorithmic bandwidth of an exchange finishing at `t_optimal`.
    pub algo_bw: f64,
    /// Whether the intra-volume assumption behind the worst case holds.
    pub assumption_holds: bool,
}

impl BoundsReport {
    pub fn new(s: &ServerMatrix, t: &Topology) -> Self {
        let t_optimal = optimal_time(s, t);
        let total = s.totals().total();
        BoundsReport {
            t_optimal,
            t_fast_worstcase: fast_worstcase_time(s, t),
            ratio_bound: ratio_bound(t),
            algo_bw: algorithmic_bandwidth(total, t.gpu_count(), t_optimal).unwrap_or(f64::INFINITY),
            assumption_holds: intra_assumption_holds(s),
        }
    }
}
