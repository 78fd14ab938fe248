//! Birkhoff-von Neumann staging of the server-level matrix.
//!
//! An arbitrary server matrix is first padded with virtual traffic until every
//! row and column sums to the largest row/column sum. The padded matrix is
//! then peeled into weighted permutations by repeated perfect matching on its
//! nonzero support. Virtual bytes are charged to each edge before its real
//! bytes, and edges left with no real traffic are dropped from the schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{max_rc, ServerMatrix, SquareMatrix};
use crate::stage::{PermutationStage, StageEdge};

const UNMATCHED: usize = usize::MAX;

/// Worst-case number of terms for an `n x n` matrix: `(n - 1)^2 + 1`.
pub fn stage_bound(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) * (n - 1) + 1
    }
}

/// Padding of a server matrix to uniform row and column sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub embedded: SquareMatrix,
    pub aux: SquareMatrix,
    pub common_sum: u64,
}

/// Adds virtual traffic to the lighter rows and columns until every sum
/// equals the heaviest one. The server diagonal is ignored.
///
/// Deficits are filled in row-major order, placing `min(row deficit, column
/// deficit)` at each cell; this exhausts both deficit vectors because they
/// have the same total.
pub fn embed_doubly_stochastic(s: &ServerMatrix) -> Result<Embedding> {
    let real = s.off_diagonal();
    let n = real.dim();
    let rows = checked_sums(&real, true)?;
    let cols = checked_sums(&real, false)?;
    let common_sum = rows.iter().chain(&cols).copied().max().unwrap_or(0);
    let mut row_def: Vec<u64> = rows.iter().map(|r| common_sum - r).collect();
    let mut col_def: Vec<u64> = cols.iter().map(|c| common_sum - c).collect();
    let mut aux = SquareMatrix::zeros(n);
    let mut embedded = real;
    for i in 0..n {
        for j in 0..n {
            let add = row_def[i].min(col_def[j]);
            if add > 0 {
                aux.set(i, j, add);
                *embedded.get_mut(i, j) += add;
                row_def[i] -= add;
                col_def[j] -= add;
            }
        }
    }
    if row_def.iter().chain(&col_def).any(|&d| d != 0) {
        return Err(Error::Invariant("embedding left a deficit".into()));
    }
    Ok(Embedding {
        embedded,
        aux,
        common_sum,
    })
}

fn checked_sums(m: &SquareMatrix, by_row: bool) -> Result<Vec<u64>> {
    let n = m.dim();
    (0..n)
        .map(|a| {
            (0..n).try_fold(0u64, |acc, b| {
                let v = if by_row { m.get(a, b) } else { m.get(b, a) };
                acc.checked_add(v).ok_or(Error::Overflow("summing server matrix"))
            })
        })
        .collect()
}

/// Hopcroft-Karp maximum matching on a bipartite graph with `n` rows and `n`
/// columns. `match_row` may hold a partial matching to start from.
/// Neighbor lists are scanned in the order given.
fn hopcroft_karp(adj: &[Vec<usize>], match_row: &mut [usize], match_col: &mut [usize]) -> usize {
    let n = adj.len();
    let mut dist = vec![0u32; n];
    let mut next = vec![0usize; n];
    let mut queue = Vec::with_capacity(n);
    let mut size = match_row.iter().filter(|&&c| c != UNMATCHED).count();
    loop {
        // layer the free rows
        queue.clear();
        for r in 0..n {
            if match_row[r] == UNMATCHED {
                dist[r] = 0;
                queue.push(r);
            } else {
                dist[r] = u32::MAX;
            }
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let r = queue[head];
            head += 1;
            for &c in &adj[r] {
                let owner = match_col[c];
                if owner == UNMATCHED {
                    found = true;
                } else if dist[owner] == u32::MAX {
                    dist[owner] = dist[r] + 1;
                    queue.push(owner);
                }
            }
        }
        if !found {
            return size;
        }
        next.iter_mut().for_each(|x| *x = 0);
        for r in 0..n {
            if match_row[r] == UNMATCHED && augment(r, adj, match_row, match_col, &mut dist, &mut next)
            {
                size += 1;
            }
        }
    }
}

fn augment(
    r: usize,
    adj: &[Vec<usize>],
    match_row: &mut [usize],
    match_col: &mut [usize],
    dist: &mut [u32],
    next: &mut [usize],
) -> bool {
    while next[r] < adj[r].len() {
        let c = adj[r][next[r]];
        next[r] += 1;
        let owner = match_col[c];
        let ok = owner == UNMATCHED
            || (dist[owner] == dist[r] + 1 && augment(owner, adj, match_row, match_col, dist, next));
        if ok {
            match_row[r] = c;
            match_col[c] = r;
            return true;
        }
    }
    dist[r] = u32::MAX;
    false
}

/// Perfect matching on a square boolean support; entry `k` of the result is
/// the column matched to row `k`.
pub fn find_perfect_matching(support: &[Vec<bool>]) -> Result<Vec<usize>> {
    let n = support.len();
    if support.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("support must be square".into()));
    }
    let adj: Vec<Vec<usize>> = support
        .iter()
        .map(|row| (0..n).filter(|&c| row[c]).collect())
        .collect();
    let mut match_row = vec![UNMATCHED; n];
    let mut match_col = vec![UNMATCHED; n];
    if hopcroft_karp(&adj, &mut match_row, &mut match_col) != n {
        return Err(Error::Invariant(
            "support has no perfect matching (residual is not doubly stochastic)".into(),
        ));
    }
    Ok(match_row)
}

/// Peels a matrix with equal row and column sums into weighted permutations.
///
/// Each round matches every row on the current nonzero support, takes the
/// smallest matched entry as the weight, and subtracts. The matching from the
/// previous round is kept wherever its edges are still nonzero, so only rows
/// that lost their edge are re-augmented.
pub fn decompose(embedded: &SquareMatrix) -> Result<Vec<PermutationStage>> {
    let n = embedded.dim();
    let rows = checked_sums(embedded, true)?;
    let cols = checked_sums(embedded, false)?;
    let sum = rows.first().copied().unwrap_or(0);
    if rows.iter().chain(&cols).any(|&s| s != sum) {
        return Err(Error::InvalidArgument(
            "matrix is not doubly stochastic (row/column sums differ)".into(),
        ));
    }

    let mut residual = embedded.clone();
    let mut remaining = sum;
    let mut match_row = vec![UNMATCHED; n];
    let mut match_col = vec![UNMATCHED; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(n); n];
    let mut stages = Vec::new();
    while remaining > 0 {
        for (r, list) in adj.iter_mut().enumerate() {
            list.clear();
            list.extend((0..n).filter(|&c| residual.get(r, c) > 0));
        }
        for r in 0..n {
            let c = match_row[r];
            if c != UNMATCHED && residual.get(r, c) == 0 {
                match_row[r] = UNMATCHED;
                match_col[c] = UNMATCHED;
            }
        }
        if hopcroft_karp(&adj, &mut match_row, &mut match_col) != n {
            return Err(Error::Invariant(format!(
                "no perfect matching on residual support after {} stages",
                stages.len()
            )));
        }
        let weight = (0..n)
            .map(|r| residual.get(r, match_row[r]))
            .min()
            .unwrap_or(0);
        for r in 0..n {
            *residual.get_mut(r, match_row[r]) -= weight;
        }
        remaining -= weight;
        stages.push(PermutationStage::uniform(
            weight,
            (0..n).map(|r| (r, match_row[r])),
        ));
        if stages.len() > stage_bound(n) {
            return Err(Error::Invariant(format!(
                "decomposition exceeded {} stages",
                stage_bound(n)
            )));
        }
    }
    if !residual.is_zero() {
        return Err(Error::Invariant("residual not exhausted".into()));
    }
    Ok(stages)
}

/// Raw decomposition of the padded matrix, auxiliary edges included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "DecompositionRepr", try_from = "DecompositionRepr")]
pub struct Decomposition {
    pub common_sum: u64,
    pub stages: Vec<PermutationStage>,
    pub aux: SquareMatrix,
}

impl Decomposition {
    /// `sum over stages of weight * permutation`.
    pub fn reconstruct(&self) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.aux.dim());
        for s in &self.stages {
            for e in &s.edges {
                *out.get_mut(e.src, e.dst) += e.bytes;
            }
        }
        out
    }

    pub fn weight_sum(&self) -> u64 {
        self.stages.iter().map(|s| s.weight).sum()
    }
}

/// Embeds and decomposes `s`, checking exact reconstruction, the weight-sum
/// witness, and the stage bound before returning.
pub fn decompose_server_matrix(s: &ServerMatrix) -> Result<Decomposition> {
    let emb = embed_doubly_stochastic(s)?;
    let stages = decompose(&emb.embedded)?;
    let dec = Decomposition {
        common_sum: emb.common_sum,
        stages,
        aux: emb.aux,
    };
    if dec.reconstruct() != emb.embedded {
        return Err(Error::Invariant("decomposition does not reconstruct input".into()));
    }
    if dec.weight_sum() != dec.common_sum || dec.common_sum != max_rc(&s.off_diagonal()) {
        return Err(Error::Invariant(format!(
            "stage weights sum to {} but bottleneck is {}",
            dec.weight_sum(),
            dec.common_sum
        )));
    }
    Ok(dec)
}

/// Removes virtual traffic from decomposition stages.
///
/// On every edge the auxiliary bytes are consumed by the earliest stages that
/// use the edge; only what is left is real. Edges with no real bytes are
/// dropped, as are stages that end up empty.
pub fn strip_auxiliary(
    stages: &[PermutationStage],
    aux: &SquareMatrix,
) -> Result<Vec<PermutationStage>> {
    let mut aux_left = aux.clone();
    let mut out = Vec::with_capacity(stages.len());
    for s in stages {
        let mut edges = Vec::with_capacity(s.edges.len());
        for e in &s.edges {
            let cell = aux_left.get_mut(e.src, e.dst);
            let virt = (*cell).min(e.bytes);
            *cell -= virt;
            let real = e.bytes - virt;
            if real > 0 {
                if e.src == e.dst {
                    return Err(Error::Invariant(format!(
                        "real self-traffic on server {}",
                        e.src
                    )));
                }
                edges.push(StageEdge { bytes: real, ..*e });
            }
        }
        if !edges.is_empty() {
            out.push(PermutationStage::from_edges(edges));
        }
    }
    if !aux_left.is_zero() {
        return Err(Error::Invariant("auxiliary bytes left unaccounted".into()));
    }
    Ok(out)
}

/// Per-edge real bytes summed over a stage list.
pub fn delivered_per_pair(n: usize, stages: &[PermutationStage]) -> SquareMatrix {
    let mut out = SquareMatrix::zeros(n);
    for s in stages {
        for e in &s.edges {
            *out.get_mut(e.src, e.dst) += e.bytes;
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DecompositionRepr {
    common_sum: u64,
    stages: Vec<PermutationStage>,
    aux: Vec<Vec<u64>>,
}

impl From<Decomposition> for DecompositionRepr {
    fn from(d: Decomposition) -> Self {
        DecompositionRepr {
            common_sum: d.common_sum,
            stages: d.stages,
            aux: d.aux.to_rows(),
        }
    }
}

impl TryFrom<DecompositionRepr> for Decomposition {
    type Error = String;

    fn try_from(r: DecompositionRepr) -> std::result::Result<Self, String> {
        Ok(Decomposition {
            common_sum: r.common_sum,
            stages: r.stages,
            aux: SquareMatrix::from_rows(&r.aux).map_err(|e| e.to_string())?,
        })
    }
}
