//! Cluster shape and link speeds of a two-tier GPU cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n_servers` servers, each with `gpus_per_server` GPUs and one NIC per GPU.
///
/// Bandwidths are per GPU, full duplex, in bytes per second. `wakeup_delay`
/// is the fixed latency charged once per synchronized transfer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(alias = "n")]
    pub n_servers: usize,
    #[serde(alias = "m")]
    pub gpus_per_server: usize,
    #[serde(alias = "b1")]
    pub scaleup_bw: f64,
    #[serde(alias = "b2")]
    pub scaleout_bw: f64,
    #[serde(default, alias = "alpha")]
    pub wakeup_delay: f64,
}

impl Default for Topology {
    /// Four 8-GPU servers, 450 GB/s scale-up and 50 GB/s scale-out.
    fn default() -> Self {
        Topology {
            n_servers: 4,
            gpus_per_server: 8,
            scaleup_bw: 450e9,
            scaleout_bw: 50e9,
            wakeup_delay: 0.0,
        }
    }
}

impl Topology {
    pub fn new(
        n_servers: usize,
        gpus_per_server: usize,
        scaleup_bw: f64,
        scaleout_bw: f64,
        wakeup_delay: f64,
    ) -> Result<Self> {
        Topology {
            n_servers,
            gpus_per_server,
            scaleup_bw,
            scaleout_bw,
            wakeup_delay,
        }
        .validate()
    }

    /// Returns the topology unchanged if every invariant holds.
    pub fn validate(self) -> Result<Self> {
        let fail = |field, reason: &str| {
            Err(Error::Topology {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n_servers < 2 {
            return fail("n_servers", "need at least 2 servers");
        }
        if self.gpus_per_server < 1 {
            return fail("gpus_per_server", "need at least 1 GPU per server");
        }
        if self.scaleout_bw.is_nan() || self.scaleout_bw <= 0.0 {
            return fail("scaleout_bw", "must be positive");
        }
        if self.scaleup_bw.is_nan() || self.scaleup_bw < self.scaleout_bw {
            return fail(
                "scaleup_bw",
                "scale-up bandwidth must be at least the scale-out bandwidth",
            );
        }
        if !(self.wakeup_delay >= 0.0 && self.wakeup_delay.is_finite()) {
            return fail("wakeup_delay", "must be finite and non-negative");
        }
        Ok(self)
    }

    pub fn gpu_count(&self) -> usize {
        self.n_servers * self.gpus_per_server
    }

    pub fn bandwidth_ratio(&self) -> f64 {
        self.scaleup_bw / self.scaleout_bw
    }

    pub fn with_ratio(self, ratio: f64) -> Self {
        Topology {
            scaleup_bw: self.scaleout_bw * ratio,
            ..self
        }
    }

    pub fn server_of(&self, gpu: usize) -> usize {
        gpu / self.gpus_per_server
    }

    pub fn local_index(&self, gpu: usize) -> usize {
        gpu % self.gpus_per_server
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn testbed_shape_is_valid() {
        let t = Topology::new(4, 8, 450e9, 50e9, 0.0).unwrap();
        assert_eq!(t, Topology::default());
        assert_eq!(t.gpu_count(), 32);
        assert_eq!(t.bandwidth_ratio(), 9.0);
    }

    #[test]
    fn rejects_single_server() {
        let err = Topology::new(1, 8, 450e9, 50e9, 0.0).unwrap_err();
        assert!(matches!(err, Error::Topology { field: "n_servers", .. }));
    }

    #[test]
    fn rejects_inverted_tiers() {
        let err = Topology::new(4, 8, 10e9, 50e9, 0.0).unwrap_err();
        assert!(matches!(err, Error::Topology { field: "scaleup_bw", .. }));
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(Topology::new(4, 0, 450e9, 50e9, 0.0).is_err());
        assert!(Topology::new(4, 8, 450e9, 0.0, 0.0).is_err());
        assert!(Topology::new(4, 8, 450e9, 50e9, -1.0).is_err());
        assert!(Topology::new(4, 8, f64::NAN, 50e9, 0.0).is_err());
    }

    #[test]
    fn infinite_scaleup_is_allowed() {
        assert!(Topology::new(2, 2, f64::INFINITY, 1.0, 0.0).is_ok());
    }

    #[test]
    fn json_aliases() {
        let t: Topology =
            serde_json::from_str(r#"{"n":3,"m":2,"b1":10.0,"b2":1.0}"#).unwrap();
        assert_eq!(t.n_servers, 3);
        assert_eq!(t.wakeup_delay, 0.0);
    }
}
