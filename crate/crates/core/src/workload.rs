//! Seeded demand-matrix generators and trace loading.
//!
//! Every generator is a pure function of its seed and parameters. Randomness
//! comes from SplitMix64 (state += 0x9E3779B97F4A7C15; output mixed with
//! multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, shifts 30/27/31).
//! Integers in `[0, k)` are drawn as the high 64 bits of `next() * k`, and
//! shuffles are Fisher-Yates from the last index down. Porting those three
//! rules reproduces the matrices byte for byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DemandMatrix;
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, bound)`; `bound == 0` yields 0.
    pub fn below(&mut self, bound: u64) -> u64 {
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Every ordered GPU pair `(g, h)` with `g != h`, row-major.
fn gpu_pairs(g: usize) -> Vec<(usize, usize)> {
    (0..g)
        .flat_map(|a| (0..g).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect()
}

/// Each off-diagonal entry uniform on `[0, 2 * mean_bytes]`, drawn in
/// row-major order.
pub fn gen_uniform(seed: u64, t: &Topology, mean_bytes: u64) -> Result<DemandMatrix> {
    if mean_bytes == 0 {
        return Err(Error::InvalidArgument("mean_bytes must be positive".into()));
    }
    let span = mean_bytes
        .checked_mul(2)
        .and_then(|x| x.checked_add(1))
        .ok_or(Error::Overflow("sizing uniform range"))?;
    let mut rng = SplitMix64::new(seed);
    let mut d = DemandMatrix::zeros(t.n_servers, t.gpus_per_server);
    for (a, b) in gpu_pairs(t.gpu_count()) {
        d.set(a, b, rng.below(span))?;
    }
    Ok(d)
}

/// Zipf-weighted sizes over a seeded random ranking of GPU pairs.
///
/// The pair at rank `r` (1-based) gets weight `r^-skew`; sizes are
/// `floor(total * w / W)` and the leftover bytes go one each to the
/// highest-ranked pairs.
pub fn gen_zipf(seed: u64, t: &Topology, skew: f64, total_bytes: u64) -> Result<DemandMatrix> {
    if !(0.0..1.0).contains(&skew) {
        return Err(Error::InvalidArgument(format!("skew {skew} outside [0, 1)")));
    }
    if total_bytes == 0 {
        return Err(Error::InvalidArgument("total_bytes must be positive".into()));
    }
    let mut pairs = gpu_pairs(t.gpu_count());
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut pairs);
    let weights: Vec<f64> = (1..=pairs.len()).map(|r| (r as f64).powf(-skew)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut sizes: Vec<u64> = weights
        .iter()
        .map(|w| (total_bytes as f64 * w / wsum).floor() as u64)
        .collect();
    let assigned: u64 = sizes.iter().sum();
    // float rounding can only undershoot, and by less than one byte per pair
    let mut left = total_bytes.saturating_sub(assigned);
    for k in 0..pairs.len() * 2 {
        if left == 0 {
            break;
        }
        sizes[k % pairs.len()] += 1;
        left -= 1;
    }
    if left != 0 {
        return Err(Error::Invariant("zipf remainder not distributed".into()));
    }
    let mut d = DemandMatrix::zeros(t.n_servers, t.gpus_per_server);
    for (&(a, b), &s) in pairs.iter().zip(&sizes) {
        d.set(a, b, s)?;
    }
    Ok(d)
}

/// The balancing/redistribution worst case: every cross-server tile holds
/// `tile_bytes` in the single cell from local GPU 0 to local GPU 0.
pub fn gen_adversarial(t: &Topology, tile_bytes: u64) -> Result<DemandMatrix> {
    if tile_bytes == 0 {
        return Err(Error::InvalidArgument("tile_bytes must be positive".into()));
    }
    let m = t.gpus_per_server;
    let mut d = DemandMatrix::zeros(t.n_servers, m);
    for i in 0..t.n_servers {
        for j in (0..t.n_servers).filter(|&j| j != i) {
            d.set(i * m, j * m, tile_bytes)?;
        }
    }
    Ok(d)
}

/// Reads a matrix file in either the CSV or the JSON format.
pub fn load_trace(path: impl AsRef<Path>) -> Result<DemandMatrix> {
    let text = std::fs::read_to_string(path)?;
    DemandMatrix::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n: usize, m: usize) -> Topology {
        Topology::new(n, m, 450e9, 50e9, 0.0).unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // first outputs for seed 0 of the published SplitMix64
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(r.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = SplitMix64::new(7);
        assert!((0..1000).all(|_| r.below(5) < 5));
        assert_eq!(r.below(0), 0);
    }

    #[test]
    fn uniform_is_deterministic() {
        let t = topo(3, 2);
        assert_eq!(gen_uniform(9, &t, 100).unwrap(), gen_uniform(9, &t, 100).unwrap());
        assert_ne!(gen_uniform(9, &t, 100).unwrap(), gen_uniform(10, &t, 100).unwrap());
    }

    #[test]
    fn uniform_range_and_mean() {
        let t = topo(13, 8); // 104 GPUs, 10712 pairs
        let mean = 50_000_000u64;
        let d = gen_uniform(1, &t, mean).unwrap();
        let n = (t.gpu_count() * (t.gpu_count() - 1)) as f64;
        assert!(d.sizes().as_slice().iter().all(|&v| v <= 2 * mean));
        let avg = d.total() as f64 / n;
        assert!((avg / mean as f64 - 1.0).abs() < 0.05, "mean {avg}");
        assert!(gen_uniform(1, &t, 0).is_err());
    }

    #[test]
    fn zipf_conserves_total() {
        let t = topo(4, 8);
        for skew in [0.0, 0.4, 0.8, 0.99] {
            let d = gen_zipf(3, &t, skew, 1_000_000_007).unwrap();
            assert_eq!(d.total(), 1_000_000_007);
        }
    }

    #[test]
    fn zipf_zero_skew_is_flat() {
        let t = topo(3, 2);
        let d = gen_zipf(5, &t, 0.0, 1001).unwrap();
        let vals: Vec<u64> = (0..6)
            .flat_map(|a| (0..6).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| d.get(a, b))
            .collect();
        let (lo, hi) = (vals.iter().min().unwrap(), vals.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn zipf_rejects_bad_skew() {
        let t = topo(2, 2);
        assert!(gen_zipf(0, &t, 1.0, 10).is_err());
        assert!(gen_zipf(0, &t, -0.1, 10).is_err());
        assert!(gen_zipf(0, &t, 0.5, 0).is_err());
    }

    #[test]
    fn zipf_max_over_median_grows_with_skew() {
        let t = topo(4, 4);
        let ratio = |skew: f64| {
            (0..10u64)
                .map(|seed| {
                    let d = gen_zipf(seed, &t, skew, 1 << 40).unwrap();
                    let mut v: Vec<u64> = d.sizes().as_slice().iter().copied().filter(|&x| x > 0).collect();
                    v.sort_unstable();
                    *v.last().unwrap() as f64 / v[v.len() / 2] as f64
                })
                .sum::<f64>()
        };
        let r: Vec<f64> = [0.2, 0.4, 0.6, 0.8].iter().map(|&s| ratio(s)).collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
    }

    #[test]
    fn adversarial_shape() {
        let t = topo(3, 4);
        let d = gen_adversarial(&t, 40).unwrap();
        assert_eq!(d.total(), 6 * 40);
        assert_eq!(d.get(0, 4), 40);
        assert_eq!(d.get(1, 5), 0);
        assert_eq!(d.intra_total(), 0);
        assert!(gen_adversarial(&t, 0).is_err());
    }

    #[test]
    fn load_trace_reads_both_formats() {
        let t = topo(2, 2);
        let d = gen_uniform(4, &t, 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        let json = dir.path().join("m.json");
        std::fs::write(&csv, d.to_csv()).unwrap();
        std::fs::write(&json, d.to_json()).unwrap();
        assert_eq!(load_trace(&csv).unwrap(), d);
        assert_eq!(load_trace(&json).unwrap(), d);
        assert!(load_trace(dir.path().join("missing.csv")).is_err());
    }
}
