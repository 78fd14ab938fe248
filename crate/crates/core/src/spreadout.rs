//! Shifted-diagonal (SpreadOut) scheduling.
//!
//! In round `k` every participant `s` sends to `(s + k) mod n`. Used on the
//! server level as the baseline, and inside a server to group scale-up moves.

use crate::balance::IntraMove;
use crate::error::{Error, Result};
use crate::matrix::ServerMatrix;
use crate::stage::{PermutationStage, StageEdge};
use crate::topology::Topology;

/// `n - 1` stages; stage `k` pairs `s -> (s + k) mod n` and each edge carries
/// its own matrix entry. The stage weight is the largest entry on the
/// diagonal, which is what the stage takes to drain.
pub fn spreadout_stages(s: &ServerMatrix) -> Vec<PermutationStage> {
    let n = s.dim();
    (1..n)
        .map(|k| {
            PermutationStage::from_edges(
                (0..n)
                    .map(|src| {
                        let dst = (src + k) % n;
                        StageEdge {
                            src,
                            dst,
                            bytes: s.get(src, dst),
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Sum over shifted diagonals of the largest entry on each.
pub fn spreadout_completion_units(s: &ServerMatrix) -> u64 {
    spreadout_stages(s).iter().map(|st| st.weight).sum()
}

/// Groups moves of one server into shifted-diagonal rounds over local GPU
/// indices. Round `k` (1-based) holds the moves with `to = (from + k) mod m`.
/// Only rounds that carry at least one move are returned.
pub fn spreadout_intra(moves: &[IntraMove], t: &Topology) -> Result<Vec<(usize, Vec<IntraMove>)>> {
    let m = t.gpus_per_server;
    let Some(first) = moves.first() else {
        return Ok(Vec::new());
    };
    if let Some(mv) = moves.iter().find(|mv| mv.server != first.server) {
        return Err(Error::InvalidArgument(format!(
            "moves span servers {} and {}",
            first.server, mv.server
        )));
    }
    if let Some(mv) = moves
        .iter()
        .find(|mv| mv.from_gpu >= m || mv.to_gpu >= m || mv.from_gpu == mv.to_gpu)
    {
        return Err(Error::InvalidArgument(format!("bad local GPU pair in {mv:?}")));
    }
    let mut rounds: Vec<Vec<IntraMove>> = vec![Vec::new(); m];
    for mv in moves {
        rounds[(mv.to_gpu + m - mv.from_gpu) % m].push(*mv);
    }
    Ok(rounds
        .into_iter()
        .enumerate()
        .skip(1)
        .filter(|(_, r)| !r.is_empty())
        .collect())
}
