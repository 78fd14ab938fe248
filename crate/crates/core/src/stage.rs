//! Server-level transfer stages shared by every scheduler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One server pair inside a stage and the bytes it carries in that stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StageEdge {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
}

/// A one-to-one server matching plus the volume each edge moves.
///
/// For a raw Birkhoff term every edge carries exactly `weight`. After the
/// auxiliary traffic is stripped, edges carry only real bytes and `weight` is
/// the largest of them, which is what sets the stage's scale-out duration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "StageRepr", try_from = "StageRepr")]
pub struct PermutationStage {
    pub weight: u64,
    pub edges: Vec<StageEdge>,
}

impl PermutationStage {
    /// A stage where every edge carries `weight` bytes.
    pub fn uniform(weight: u64, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        PermutationStage {
            weight,
            edges: pairs
                .into_iter()
                .map(|(src, dst)| StageEdge {
                    src,
                    dst,
                    bytes: weight,
                })
                .collect(),
        }
    }

    /// Builds a stage from per-edge volumes; the weight is the largest of them.
    pub fn from_edges(edges: Vec<StageEdge>) -> Self {
        let weight = edges.iter().map(|e| e.bytes).max().unwrap_or(0);
        PermutationStage { weight, edges }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|e| (e.src, e.dst))
    }

    pub fn bytes(&self) -> u64 {
        self.edges.iter().map(|e| e.bytes).sum()
    }

    /// Fails if a server appears twice as a sender or twice as a receiver.
    pub fn check_one_to_one(&self) -> Result<()> {
        let mut srcs: Vec<usize> = self.edges.iter().map(|e| e.src).collect();
        let mut dsts: Vec<usize> = self.edges.iter().map(|e| e.dst).collect();
        srcs.sort_unstable();
        dsts.sort_unstable();
        if srcs.windows(2).any(|w| w[0] == w[1]) || dsts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "stage matching is not one-to-one: {:?}",
                self.pairs().collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    fn first_pair(&self) -> Option<(usize, usize)> {
        self.pairs().min()
    }
}

/// Stable ascending sort by weight; equal weights are ordered by their
/// lexicographically smallest `(src, dst)` pair, then by input position.
pub fn sort_stages_ascending(mut stages: Vec<PermutationStage>) -> Vec<PermutationStage> {
    stages.sort_by_key(|s| (s.weight, s.first_pair()));
    stages
}

pub fn is_sorted_ascending(stages: &[PermutationStage]) -> bool {
    stages.windows(2).all(|w| w[0].weight <= w[1].weight)
}

#[derive(Serialize, Deserialize)]
struct StageRepr {
    weight: u64,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes: Option<Vec<u64>>,
}

impl From<PermutationStage> for StageRepr {
    fn from(s: PermutationStage) -> Self {
        let uniform = s.edges.iter().all(|e| e.bytes == s.weight);
        StageRepr {
            weight: s.weight,
            edges: s.edges.iter().map(|e| [e.src, e.dst]).collect(),
            bytes: (!uniform).then(|| s.edges.iter().map(|e| e.bytes).collect()),
        }
    }
}

impl TryFrom<StageRepr> for PermutationStage {
    type Error = String;

    fn try_from(r: StageRepr) -> std::result::Result<Self, String> {
        let bytes = match r.bytes {
            Some(b) if b.len() != r.edges.len() => {
                return Err(format!(
                    "stage has {} edges but {} byte counts",
                    r.edges.len(),
                    b.len()
                ))
            }
            Some(b) => b,
            None => vec![r.weight; r.edges.len()],
        };
        let edges = r
            .edges
            .iter()
            .zip(bytes)
            .map(|(&[src, dst], bytes)| StageEdge { src, dst, bytes })
            .collect();
        Ok(PermutationStage {
            weight: r.weight,
            edges,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_by_weight() {
        let s = |w| PermutationStage::uniform(w, [(0, 1), (1, 0)]);
        let sorted = sort_stages_ascending(vec![s(5), s(2), s(7)]);
        let w: Vec<u64> = sorted.iter().map(|s| s.weight).collect();
        assert_eq!(w, vec![2, 5, 7]);
    }

    #[test]
    fn equal_weights_keep_order_within_same_key() {
        let a = PermutationStage::uniform(3, [(0, 1), (1, 0)]);
        let b = PermutationStage::uniform(3, [(0, 1), (1, 0)]);
        let c = PermutationStage::uniform(3, [(1, 0)]);
        let mut b2 = b.clone();
        b2.edges[0].bytes = 3;
        let sorted = sort_stages_ascending(vec![c.clone(), a.clone(), b2.clone()]);
        assert_eq!(sorted, vec![a, b2, c]);
    }

    #[test]
    fn one_to_one_check() {
        assert!(PermutationStage::uniform(1, [(0, 1), (1, 0)])
            .check_one_to_one()
            .is_ok());
        assert!(PermutationStage::uniform(1, [(0, 1), (0, 2)])
            .check_one_to_one()
            .is_err());
        assert!(PermutationStage::uniform(1, [(0, 2), (1, 2)])
            .check_one_to_one()
            .is_err());
    }

    #[test]
    fn json_shape() {
        let s = PermutationStage::uniform(5, [(0, 1), (1, 0)]);
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"weight":5,"edges":[[0,1],[1,0]]}"#
        );
        let p = PermutationStage::from_edges(vec![
            StageEdge { src: 0, dst: 1, bytes: 5 },
            StageEdge { src: 1, dst: 0, bytes: 3 },
        ]);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"weight":5,"edges":[[0,1],[1,0]],"bytes":[5,3]}"#);
        assert_eq!(serde_json::from_str::<PermutationStage>(&text).unwrap(), p);
        assert!(serde_json::from_str::<PermutationStage>(
            r#"{"weight":5,"edges":[[0,1]],"bytes":[5,3]}"#
        )
        .is_err());
    }
}
