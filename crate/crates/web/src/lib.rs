//! Browser demo bindings. The plain functions do the work and are tested
//! natively; the `#[wasm_bindgen]` wrappers only move JSON across the boundary.

use a2a_sched::bounds::{optimal_time, ratio_bound};
use a2a_sched::sim::simulate_spreadout_raw;
use a2a_sched::workload::{gen_adversarial, gen_uniform, gen_zipf};
use a2a_sched::{
    algorithmic_bandwidth, simulate_spreadout, synthesize_fast, DemandMatrix, Span, Topology,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Largest cluster the page will build, to keep the UI responsive.
pub const MAX_SERVERS: usize = 16;
pub const MAX_GPUS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    Uniform,
    Zipf,
    Adversarial,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DemoParams {
    pub n: usize,
    pub m: usize,
    pub workload: Workload,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_skew")]
    pub skew: f64,
    /// Scale-up over scale-out bandwidth.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

fn default_skew() -> f64 {
    0.8
}

fn default_ratio() -> f64 {
    9.0
}

const PAIR_BYTES: u64 = 50_000_000;
const SCALEOUT_BW: f64 = 50e9;

impl DemoParams {
    fn topology(&self) -> Result<Topology, String> {
        if self.n > MAX_SERVERS || self.m > MAX_GPUS {
            return Err(format!(
                "demo is limited to {MAX_SERVERS} servers of {MAX_GPUS} GPUs"
            ));
        }
        Topology::new(self.n, self.m, self.ratio * SCALEOUT_BW, SCALEOUT_BW, 0.0)
            .map_err(|e| e.to_string())
    }

    fn matrix(&self, t: &Topology) -> Result<DemandMatrix, String> {
        let g = t.gpu_count() as u64;
        match self.workload {
            Workload::Uniform => gen_uniform(self.seed, t, PAIR_BYTES),
            Workload::Zipf => gen_zipf(self.seed, t, self.skew, PAIR_BYTES * g * (g - 1).max(1)),
            Workload::Adversarial => gen_adversarial(t, PAIR_BYTES * t.gpus_per_server as u64),
        }
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SchedulerView {
    pub total_s: f64,
    pub ratio: f64,
    pub stages: usize,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoResult {
    pub n: usize,
    pub m: usize,
    pub gpu_matrix: Vec<Vec<u64>>,
    pub balanced_matrix: Vec<Vec<u64>>,
    pub server_matrix: Vec<Vec<u64>>,
    pub max_rc: u64,
    pub optimal_s: f64,
    pub ratio_bound: f64,
    pub balanced_bytes: u64,
    pub misplaced_bytes: u64,
    pub fast: SchedulerView,
    pub spreadout: SchedulerView,
    /// SpreadOut with each GPU sending its own row instead of an even split.
    pub spreadout_raw_s: f64,
}

pub fn run_demo(p: &DemoParams) -> Result<DemoResult, String> {
    let t = p.topology()?;
    let d = p.matrix(&t)?;
    let f = synthesize_fast(&d, &t).map_err(|e| e.to_string())?;
    let fast = f.simulate(&t).map_err(|e| e.to_string())?;
    let so = simulate_spreadout(&f.server_matrix, &t).map_err(|e| e.to_string())?;
    let raw = simulate_spreadout_raw(&d, &t).map_err(|e| e.to_string())?;
    let optimal_s = optimal_time(&f.server_matrix, &t);
    let rel = |x: f64| if optimal_s > 0.0 { x / optimal_s } else { 1.0 };
    Ok(DemoResult {
        n: t.n_servers,
        m: t.gpus_per_server,
        gpu_matrix: d.sizes().to_rows(),
        balanced_matrix: f.plan.reshaped.sizes().to_rows(),
        server_matrix: f.server_matrix.to_rows(),
        max_rc: f.server_matrix.max_rc(),
        optimal_s,
        ratio_bound: ratio_bound(&t),
        balanced_bytes: f.plan.balanced_bytes(),
        misplaced_bytes: f.plan.misplaced_bytes(),
        fast: SchedulerView {
            total_s: fast.total,
            ratio: rel(fast.total),
            stages: f.stages.len(),
            spans: fast.spans(),
        },
        spreadout: SchedulerView {
            total_s: so.total,
            ratio: rel(so.total),
            stages: so.scaleout.len(),
            spans: so.spans(),
        },
        spreadout_raw_s: raw.total,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepPoint {
    pub ratio: f64,
    /// Algorithmic bandwidths normalized by the scale-out bandwidth.
    pub fast: f64,
    pub spreadout: f64,
    pub optimal: f64,
    /// Worst-case completion ratio bound at this bandwidth ratio.
    pub bound: f64,
}

/// Normalized algorithmic bandwidth of each scheduler as the scale-up to
/// scale-out ratio varies, on the workload described by `p`.
pub fn ratio_sweep(p: &DemoParams, ratios: &[f64]) -> Result<Vec<SweepPoint>, String> {
    let t0 = p.topology()?;
    let d = p.matrix(&t0)?;
    ratios
        .iter()
        .map(|&r| {
            let t = t0.with_ratio(r).validate().map_err(|e| e.to_string())?;
            let f = synthesize_fast(&d, &t).map_err(|e| e.to_string())?;
            let fast = f.simulate(&t).map_err(|e| e.to_string())?.total;
            let so = simulate_spreadout(&f.server_matrix, &t)
                .map_err(|e| e.to_string())?
                .total;
            let opt = optimal_time(&f.server_matrix, &t);
            let norm = |secs: f64| {
                algorithmic_bandwidth(d.total(), t.gpu_count(), secs)
                    .map(|bw| bw / t.scaleout_bw)
                    .map_err(|e| e.to_string())
            };
            Ok(SweepPoint {
                ratio: r,
                fast: norm(fast)?,
                spreadout: norm(so)?,
                optimal: norm(opt)?,
                bound: ratio_bound(&t),
            })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

fn parse_params(json: &str) -> Result<DemoParams, String> {
    serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))
}

/// Schedules one generated workload with FAST and SpreadOut.
#[wasm_bindgen]
pub fn schedule_demo(params_json: &str) -> Result<String, JsValue> {
    to_js(parse_params(params_json).and_then(|p| run_demo(&p)))
}

/// Bandwidth-ratio sweep for the workload in `params_json`.
#[wasm_bindgen]
pub fn bandwidth_sweep(params_json: &str, ratios: Vec<f64>) -> Result<String, JsValue> {
    to_js(parse_params(params_json).and_then(|p| ratio_sweep(&p, &ratios)))
}
