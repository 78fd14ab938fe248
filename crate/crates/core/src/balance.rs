//! Intra-server reshaping of cross-server tiles.
//!
//! Each cross-server tile goes through two steps. Sender balancing shifts
//! bytes between GPUs of the source server until every GPU sends the same
//! amount (within one byte) to the destination server. Merged peer transfer
//! then has GPU `p` ship its whole quota to GPU `p` of the destination, which
//! turns the tile into a scalar (diagonal) block. Bytes that land on the wrong
//! GPU are recorded in a per-pair redistribution table and forwarded inside
//! the destination server as stages complete.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DemandMatrix, SquareMatrix, Tile};
use crate::stage::{PermutationStage, StageEdge};
use crate::topology::Topology;

/// A scale-up transfer between two GPUs of the same server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntraMove {
    pub server: usize,
    #[serde(rename = "from")]
    pub from_gpu: usize,
    #[serde(rename = "to")]
    pub to_gpu: usize,
    /// Server the moved bytes are ultimately headed for.
    #[serde(rename = "dst_server")]
    pub for_dst_server: usize,
    pub bytes: u64,
}

/// Equalizes the row sums of a cross-server tile.
///
/// Row targets are `floor(T/m)`, with the `T mod m` currently heaviest rows
/// (lowest index first on ties) targeted at `ceil(T/m)`. Bytes flow from the
/// most overloaded row to the most underloaded one; a donor row gives up its
/// largest cells first and the receiver takes them in the same column, so
/// every byte keeps its destination GPU.
pub fn balance_senders(tile: &Tile) -> Result<(Tile, Vec<IntraMove>)> {
    if tile.is_intra() {
        return Err(Error::InvalidArgument(format!(
            "sender balancing applies to cross-server tiles, got ({0},{0})",
            tile.src_server
        )));
    }
    let m = tile.entries.dim();
    let mut out = tile.clone();
    let mut moves = Vec::new();
    if m <= 1 {
        return Ok((out, moves));
    }

    let mut load = tile.row_sums();
    let total: u64 = load.iter().sum();
    let (base, rem) = (total / m as u64, (total % m as u64) as usize);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&p| (std::cmp::Reverse(load[p]), p));
    let mut target = vec![base; m];
    for &p in &order[..rem] {
        target[p] += 1;
    }

    loop {
        let donor = argmax_by(m, |p| load[p].saturating_sub(target[p]));
        let taker = argmax_by(m, |p| target[p].saturating_sub(load[p]));
        let excess = load[donor].saturating_sub(target[donor]);
        let deficit = target[taker].saturating_sub(load[taker]);
        if excess == 0 || deficit == 0 {
            break;
        }
        let amount = excess.min(deficit);
        let mut left = amount;
        while left > 0 {
            let col = argmax_by(m, |q| out.entries.get(donor, q));
            let take = out.entries.get(donor, col).min(left);
            *out.entries.get_mut(donor, col) -= take;
            *out.entries.get_mut(taker, col) += take;
            left -= take;
        }
        load[donor] -= amount;
        load[taker] += amount;
        moves.push(IntraMove {
            server: tile.src_server,
            from_gpu: donor,
            to_gpu: taker,
            for_dst_server: tile.dst_server,
            bytes: amount,
        });
    }
    Ok((out, moves))
}

/// Index of the largest key, lowest index on ties.
fn argmax_by(len: usize, key: impl Fn(usize) -> u64) -> usize {
    (0..len)
        .max_by(|&a, &b| key(a).cmp(&key(b)).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Collapses a balanced tile to scalar form.
///
/// Returns the diagonal tile (entry `(p, p)` is row sum `p`) and the
/// redistribution table: entry `(p, q)` is the number of bytes that arrive on
/// proxy GPU `p` of the destination server but belong to GPU `q`.
pub fn merge_peer(balanced: &Tile) -> (Tile, SquareMatrix) {
    let m = balanced.entries.dim();
    let mut scalar = SquareMatrix::zeros(m);
    for (p, s) in balanced.row_sums().into_iter().enumerate() {
        scalar.set(p, p, s);
    }
    (
        Tile {
            src_server: balanced.src_server,
            dst_server: balanced.dst_server,
            entries: scalar,
        },
        balanced.entries.clone(),
    )
}

/// Result of reshaping every cross-server tile of a demand matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancePlan {
    pub moves: Vec<IntraMove>,
    pub reshaped: DemandMatrix,
    redist: Vec<SquareMatrix>,
}

impl BalancePlan {
    pub fn n_servers(&self) -> usize {
        self.reshaped.n_servers()
    }

    pub fn gpus_per_server(&self) -> usize {
        self.reshaped.gpus_per_server()
    }

    /// Redistribution table for the ordered pair `i -> j`.
    pub fn redist(&self, i: usize, j: usize) -> &SquareMatrix {
        &self.redist[i * self.n_servers() + j]
    }

    /// Total of tile `(i, j)` of the reshaped matrix.
    pub fn tile_total(&self, i: usize, j: usize) -> u64 {
        self.redist(i, j).total()
    }

    pub fn balanced_bytes(&self) -> u64 {
        self.moves.iter().map(|mv| mv.bytes).sum()
    }

    /// Bytes that land on a proxy GPU and must be forwarded afterwards.
    pub fn misplaced_bytes(&self) -> u64 {
        let n = self.n_servers();
        let mut sum = 0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let r = self.redist(i, j);
                for p in 0..r.dim() {
                    for q in (0..r.dim()).filter(|&q| q != p) {
                        sum += r.get(p, q);
                    }
                }
            }
        }
        sum
    }

    /// Structural checks that hold for every plan produced here: cross tiles
    /// of `reshaped` are diagonal, each diagonal entry equals the matching
    /// redistribution row sum, diagonal entries differ by at most one byte,
    /// and moves stay inside their server.
    pub fn check_consistency(&self) -> Result<()> {
        let n = self.n_servers();
        let m = self.gpus_per_server();
        if self.redist.len() != n * n {
            return Err(Error::Invariant("redistribution table count".into()));
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let tile = self.reshaped.tile(i, j)?;
                let table = self.redist(i, j);
                if table.dim() != m {
                    return Err(Error::Invariant(format!("redist {i}->{j} has wrong size")));
                }
                let sums = table.row_sums();
                for p in 0..m {
                    for q in 0..m {
                        let want = if p == q { sums[p] } else { 0 };
                        if tile.entries.get(p, q) != want {
                            return Err(Error::Invariant(format!(
                                "reshaped tile {i}->{j} entry ({p},{q}) is not scalar form"
                            )));
                        }
                    }
                }
                let (lo, hi) = (sums.iter().min(), sums.iter().max());
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    if hi - lo > 1 {
                        return Err(Error::Invariant(format!(
                            "tile {i}->{j} rows differ by {}",
                            hi - lo
                        )));
                    }
                }
            }
        }
        for mv in &self.moves {
            if mv.server >= n
                || mv.from_gpu >= m
                || mv.to_gpu >= m
                || mv.from_gpu == mv.to_gpu
                || mv.for_dst_server == mv.server
                || mv.bytes == 0
            {
                return Err(Error::Invariant(format!("malformed balancing move {mv:?}")));
            }
        }
        Ok(())
    }
}

/// Balances and peer-merges every cross-server tile; same-server tiles are
/// copied untouched.
pub fn build_balance_plan(d: &DemandMatrix, t: &Topology) -> Result<BalancePlan> {
    d.check_topology(t)?;
    let n = d.n_servers();
    let m = d.gpus_per_server();
    let mut reshaped = d.clone();
    let mut moves = Vec::new();
    let mut redist = vec![SquareMatrix::zeros(m); n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let tile = d.tile(i, j)?;
            let (balanced, mut tile_moves) = balance_senders(&tile)?;
            let (scalar, table) = merge_peer(&balanced);
            reshaped.put_tile(&scalar)?;
            redist[i * n + j] = table;
            moves.append(&mut tile_moves);
        }
    }
    Ok(BalancePlan {
        moves,
        reshaped,
        redist,
    })
}

/// Hands out each pair's redistribution table stage by stage.
///
/// A stage that delivers `w` of the `T` bytes of pair `i -> j` releases
/// `floor(cell * w / T)` of every off-diagonal table cell; the stage that
/// completes the pair releases whatever is left.
#[derive(Debug, Clone)]
pub struct Redistributor<'a> {
    plan: &'a BalancePlan,
    delivered: Vec<u64>,
    released: Vec<SquareMatrix>,
}

impl<'a> Redistributor<'a> {
    pub fn new(plan: &'a BalancePlan) -> Self {
        let n = plan.n_servers();
        let m = plan.gpus_per_server();
        Redistributor {
            plan,
            delivered: vec![0; n * n],
            released: vec![SquareMatrix::zeros(m); n * n],
        }
    }

    /// Moves inside each receiving server of `edges` that route this stage's
    /// share of misplaced bytes from proxy GPU `p` to true GPU `q`.
    pub fn stage_redistribution(&mut self, edges: &[StageEdge]) -> Result<Vec<IntraMove>> {
        PermutationStage {
            weight: 0,
            edges: edges.to_vec(),
        }
        .check_one_to_one()?;
        let n = self.plan.n_servers();
        let m = self.plan.gpus_per_server();
        let mut moves = Vec::new();
        for e in edges {
            if e.src >= n || e.dst >= n || e.src == e.dst {
                return Err(Error::InvalidArgument(format!(
                    "unknown server pair {}->{}",
                    e.src, e.dst
                )));
            }
            if e.bytes == 0 {
                continue;
            }
            let k = e.src * n + e.dst;
            let total = self.plan.tile_total(e.src, e.dst);
            let after = self.delivered[k]
                .checked_add(e.bytes)
                .ok_or(Error::Overflow("tracking delivered bytes"))?;
            if after > total {
                return Err(Error::Invariant(format!(
                    "pair {}->{} delivers {after} bytes but only {total} exist",
                    e.src, e.dst
                )));
            }
            self.delivered[k] = after;
            let last = after == total;
            let table = self.plan.redist(e.src, e.dst);
            let released = &mut self.released[k];
            for p in 0..m {
                for q in (0..m).filter(|&q| q != p) {
                    let cell = table.get(p, q);
                    if cell == 0 {
                        continue;
                    }
                    let amount = if last {
                        cell - released.get(p, q)
                    } else {
                        (cell as u128 * e.bytes as u128 / total as u128) as u64
                    };
                    *released.get_mut(p, q) += amount;
                    if amount > 0 {
                        moves.push(IntraMove {
                            server: e.dst,
                            from_gpu: p,
                            to_gpu: q,
                            for_dst_server: e.dst,
                            bytes: amount,
                        });
                    }
                }
            }
        }
        Ok(moves)
    }

    /// Fails unless every cross-server pair has been fully delivered.
    pub fn finish(&self) -> Result<()> {
        let n = self.plan.n_servers();
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let (got, want) = (self.delivered[i * n + j], self.plan.tile_total(i, j));
                if got != want {
                    return Err(Error::Invariant(format!(
                        "pair {i}->{j} delivered {got} of {want} bytes"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-stage redistribution moves for a full stage list.
pub fn redistribution_schedule(
    plan: &BalancePlan,
    stages: &[PermutationStage],
) -> Result<Vec<Vec<IntraMove>>> {
    let mut r = Redistributor::new(plan);
    let out = stages
        .iter()
        .map(|s| r.stage_redistribution(&s.edges))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    moves: Vec<IntraMove>,
    reshaped: DemandMatrix,
    redist: BTreeMap<String, Vec<Vec<u64>>>,
}

impl Serialize for BalancePlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n_servers();
        let mut redist = BTreeMap::new();
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                redist.insert(format!("{i}->{j}"), self.redist(i, j).to_rows());
            }
        }
        PlanRepr {
            moves: self.moves.clone(),
            reshaped: self.reshaped.clone(),
            redist,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BalancePlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PlanRepr::deserialize(d)?;
        let n = repr.reshaped.n_servers();
        let m = repr.reshaped.gpus_per_server();
        let mut redist = vec![SquareMatrix::zeros(m); n * n];
        for (key, rows) in &repr.redist {
            let (i, j) = key
                .split_once("->")
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .filter(|&(i, j)| i < n && j < n && i != j)
                .ok_or_else(|| D::Error::custom(format!("bad redistribution key `{key}`")))?;
            let table = SquareMatrix::from_rows(rows).map_err(D::Error::custom)?;
            if table.dim() != m {
                return Err(D::Error::custom(format!("redistribution {key} has wrong size")));
            }
            redist[i * n + j] = table;
        }
        let plan = BalancePlan {
            moves: repr.moves,
            reshaped: repr.reshaped,
            redist,
        };
        plan.check_consistency().map_err(D::Error::custom)?;
        Ok(plan)
    }
}
