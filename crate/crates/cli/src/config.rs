use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use coalflow::disturbance::Family;
use coalflow::dsl::CoefficientField;

/// A scalar `h` or a ladder of values.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum HSpec {
    Scalar(f64),
    Ladder(Vec<f64>),
}

impl HSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            HSpec::Scalar(h) => vec![*h],
            HSpec::Ladder(v) => v.clone(),
        }
    }
}

fn default_window() -> (f64, f64) {
    (0.0, 1.0)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub a: String,
    pub b: String,
    pub h: Option<HSpec>,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    #[serde(default)]
    pub starts: Vec<(f64, f64)>,
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub seeds: Option<usize>,
    pub bins: Option<(usize, usize)>,
    #[serde(default = "default_family")]
    pub family: Family,

    /// time of the disturbance or moment evaluation
    pub t: Option<f64>,
    /// disturbance centre; drawn from the seed when absent
    pub theta: Option<f64>,
    /// evaluation point for moments
    pub x: Option<f64>,
    pub samples: Option<usize>,
    #[serde(default)]
    pub reversed: bool,
    /// starting points per increment time in `reverse-check`
    pub points: Option<usize>,
    /// `δ / h` in `reverse-check`
    pub horizon_factor: Option<f64>,
    /// KS bound on the smallest `h` in `path-convergence`
    pub ks_threshold: Option<f64>,
    /// two stored flows for `metric`, relative to the config file
    pub flows: Option<(PathBuf, PathBuf)>,
    /// cutoff `n` of the flow metrics
    pub n: Option<u32>,
    /// grid size for the sampled `d_C`
    pub grid: Option<usize>,
}

fn default_family() -> Family {
    Family::Full
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{name} must be finite and positive, got {v}");
    }
    Ok(())
}

fn finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        bail!("{name} must be finite, got {v}");
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_slice(&bytes).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.check()?;
        Ok((cfg, bytes))
    }

    pub fn check(&self) -> Result<()> {
        let (t0, t1) = self.window;
        finite("window[0]", t0)?;
        finite("window[1]", t1)?;
        if t0 >= t1 {
            bail!("window must satisfy t0 < t1, got [{t0}, {t1}]");
        }
        if let Some(h) = &self.h {
            let values = h.values();
            if values.is_empty() {
                bail!("h ladder is empty");
            }
            for v in values {
                positive("h", v)?;
            }
        }
        for (i, &(s, x)) in self.starts.iter().enumerate() {
            finite(&format!("starts[{i}][0]"), s)?;
            finite(&format!("starts[{i}][1]"), x)?;
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if self.seeds == Some(0) {
            bail!("seeds must be positive");
        }
        if let Some((n_t, n_x)) = self.bins {
            if n_t == 0 || n_x == 0 {
                bail!("bins must be positive, got [{n_t}, {n_x}]");
            }
        }
        for (name, v) in [("t", self.t), ("theta", self.theta), ("x", self.x)] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }
        if let Some(f) = self.horizon_factor {
            positive("horizon_factor", f)?;
        }
        if let Some(k) = self.ks_threshold {
            positive("ks_threshold", k)?;
        }
        for (name, v) in [("samples", self.samples), ("points", self.points), ("grid", self.grid)] {
            if v == Some(0) {
                bail!("{name} must be positive");
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Result<CoefficientField> {
        use coalflow::dsl::{parse_expression, validate_field, DEFAULT_GRID};
        let a = parse_expression(&self.a).with_context(|| format!("field a = \"{}\"", self.a))?;
        let b = parse_expression(&self.b).with_context(|| format!("field b = \"{}\"", self.b))?;
        Ok(validate_field(a, b, self.window, DEFAULT_GRID)?)
    }

    pub fn ladder(&self) -> Result<Vec<f64>> {
        match &self.h {
            Some(h) => Ok(h.values()),
            None => bail!("h is required for this command"),
        }
    }

    pub fn scalar_h(&self) -> Result<f64> {
        match &self.h {
            Some(HSpec::Scalar(h)) => Ok(*h),
            Some(HSpec::Ladder(v)) if v.len() == 1 => Ok(v[0]),
            Some(HSpec::Ladder(_)) => bail!("h must be a single value for this command"),
            None => bail!("h is required for this command"),
        }
    }

    pub fn starts_or_default(&self) -> Vec<(f64, f64)> {
        if self.starts.is_empty() {
            vec![(self.window.0, 0.0)]
        } else {
            self.starts.clone()
        }
    }
}
