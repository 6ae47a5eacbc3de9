use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tracker parameters. Every field has a default; see [`TrackerConfig::default`].
///
/// Speeds are in pixels per frame. Callers working from pixels per second
/// scale by the sequence frame rate before building the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Maximum target speed, pixels per frame.
    pub v_max: f64,
    /// Maximum appearance distance (RGB, 0-255 scale).
    pub a_max: f64,
    /// Maximum frame gap bridged by a link.
    pub f_max: u32,
    pub sigma_dist: f64,
    pub mu_dist: f64,
    /// Degrees.
    pub sigma_angle: f64,
    pub batch_len: u32,
    pub ncut_runs: u32,
    pub k_sweep_halfwidth: u32,
    /// Sweep every k in `[1, F]` instead of the window around the detection
    /// track count.
    pub k_sweep_full: bool,
    pub affinity_floor: f64,
    pub c_in: f64,
    pub c_out: f64,
    pub confidence_epsilon: f64,
    /// Pixels.
    pub static_dpt_threshold: f64,
    /// Squared degrees.
    pub direction_variance_threshold: f64,
    pub iou_match_threshold: f64,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            v_max: 25.0,
            a_max: 20.0,
            f_max: 15,
            sigma_dist: 0.4,
            mu_dist: 0.05,
            sigma_angle: 50.0,
            batch_len: 50,
            ncut_runs: 50,
            k_sweep_halfwidth: 5,
            k_sweep_full: false,
            affinity_floor: 0.05,
            c_in: 10.0,
            c_out: 10.0,
            confidence_epsilon: 0.05,
            static_dpt_threshold: 2.0,
            direction_variance_threshold: 400.0,
            iou_match_threshold: 0.5,
            seed: 42,
        }
    }
}

impl TrackerConfig {
    /// Longest extrapolation past the first or last detection of a trajectory.
    pub fn max_extrapolation(&self) -> u32 {
        self.f_max / 3
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {v}")))
            }
        }
        fn nonnegative(name: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "`{name}` must be nonnegative, got {v}"
                )))
            }
        }
        positive("v_max", self.v_max)?;
        positive("a_max", self.a_max)?;
        positive("sigma_dist", self.sigma_dist)?;
        nonnegative("mu_dist", self.mu_dist)?;
        positive("sigma_angle", self.sigma_angle)?;
        nonnegative("c_in", self.c_in)?;
        nonnegative("c_out", self.c_out)?;
        nonnegative("static_dpt_threshold", self.static_dpt_threshold)?;
        nonnegative(
            "direction_variance_threshold",
            self.direction_variance_threshold,
        )?;
        if self.f_max == 0 {
            return Err(Error::Config("`f_max` must be at least 1".into()));
        }
        if self.batch_len < 2 {
            return Err(Error::Config("`batch_len` must be at least 2".into()));
        }
        if self.ncut_runs == 0 {
            return Err(Error::Config("`ncut_runs` must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.affinity_floor) {
            return Err(Error::Config(format!(
                "`affinity_floor` must lie in [0, 1), got {}",
                self.affinity_floor
            )));
        }
        if !(self.confidence_epsilon > 0.0 && self.confidence_epsilon < 0.5) {
            return Err(Error::Config(format!(
                "`confidence_epsilon` must lie in (0, 0.5), got {}",
                self.confidence_epsilon
            )));
        }
        if !(self.iou_match_threshold > 0.0 && self.iou_match_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "`iou_match_threshold` must lie in (0, 1], got {}",
                self.iou_match_threshold
            )));
        }
        Ok(())
    }

    /// Parses a JSON object. Missing keys take their defaults, unknown keys
    /// are rejected and errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        if !text.trim_start().starts_with('{') {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let mut de = serde_json::Deserializer::from_str(text);
        let config: TrackerConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            if msg.starts_with("unknown field") {
                Error::Config(format!("unknown key: {msg}"))
            } else if path.is_empty() || path == "." {
                Error::Config(msg)
            } else {
                Error::Config(format!("key `{path}`: {msg}"))
            }
        })?;
        de.end()
            .map_err(|e| Error::Config(format!("trailing data: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}
