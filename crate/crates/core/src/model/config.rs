use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Per-dimension similarity metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Jaccard coefficient of the token supports.
    Jaccard,
    /// Cosine of the token frequency vectors.
    CosineTf,
}

impl Metric {
    /// Categorical dimensions default to Jaccard, free text to cosine.
    pub fn default_for(dimension: &str) -> Metric {
        match dimension.to_ascii_lowercase().as_str() {
            "title" | "text" | "body" | "summary" => Metric::CosineTf,
            _ => Metric::Jaccard,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jaccard" => Ok(Metric::Jaccard),
            "cosine" | "cosine_tf" | "cosinetf" => Ok(Metric::CosineTf),
            other => Err(Error::Validation(format!("unknown metric '{other}'"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Jaccard => "jaccard",
            Metric::CosineTf => "cosine_tf",
        })
    }
}

/// Execution model for the ingestion pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One lane per source with intra- and inter-source worker pools.
    Sp,
    /// Snippets dealt round-robin to workers regardless of source.
    Round,
    /// A single worker in strict arrival order.
    Sequ,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sp" => Ok(Mode::Sp),
            "round" => Ok(Mode::Round),
            "sequ" | "seq" => Ok(Mode::Sequ),
            other => Err(Error::Validation(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sp => "sp",
            Mode::Round => "round",
            Mode::Sequ => "sequ",
        })
    }
}

/// One snippet dimension: its weight, metric and top-k retention.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionConfig {
    pub name: String,
    pub weight: f64,
    pub metric: Metric,
    /// `None` keeps every token (full aggregation).
    pub top_k: Option<usize>,
}

impl DimensionConfig {
    pub fn new(name: impl Into<String>, weight: f64) -> Self {
        let name = name.into();
        let metric = Metric::default_for(&name);
        DimensionConfig {
            name,
            weight,
            metric,
            top_k: None,
        }
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = Some(k);
        self
    }
}

/// Engine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Length of a base time window in hours.
    pub window_hours: f64,
    /// Number of windows searched for cross-window sketch matches (m′).
    pub comparison_interval: u32,
    /// Sketch similarity threshold.
    pub alpha_v: f64,
    /// Cluster alignment threshold.
    pub alpha_c: f64,
    /// Minimum number of dimensions with a shared token for two objects to
    /// be compared at all.
    pub min_match_dims: usize,
    /// Base windows per top-level sketch.
    pub top_window_span: u32,
    /// Target false-positive rate of the per-sketch bloom filters.
    pub bloom_fpr: f64,
    pub mode: Mode,
    pub workers: usize,
    /// Epoch second at which window 0 starts.
    pub origin: i64,
    pub dimensions: Vec<DimensionConfig>,
    /// Maximum number of queued snippets a worker integrates before it runs
    /// one coalesced alignment pass.
    pub align_batch: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window_hours: 12.0,
            comparison_interval: 30,
            alpha_v: 0.3,
            alpha_c: 0.1,
            min_match_dims: 2,
            top_window_span: 14,
            bloom_fpr: 0.01,
            mode: Mode::Sp,
            workers: 4,
            origin: 0,
            dimensions: vec![
                DimensionConfig::new("entities", 0.5),
                DimensionConfig::new("topics", 0.5),
            ],
            align_batch: 32,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !(self.window_hours > 0.0 && self.window_hours.is_finite()) {
            return fail(format!(
                "window_hours must be positive, got {}",
                self.window_hours
            ));
        }
        if self.comparison_interval < 1 {
            return fail("comparison_interval must be >= 1".into());
        }
        for (name, a) in [("alpha_v", self.alpha_v), ("alpha_c", self.alpha_c)] {
            if !(a > 0.0 && a < 1.0) {
                return fail(format!("{name} must lie in (0,1), got {a}"));
            }
        }
        if !(self.bloom_fpr > 0.0 && self.bloom_fpr < 1.0) {
            return fail(format!(
                "bloom_fpr must lie in (0,1), got {}",
                self.bloom_fpr
            ));
        }
        if self.top_window_span < 1 {
            return fail("top_window_span must be >= 1".into());
        }
        if self.workers < 1 {
            return fail("workers must be >= 1".into());
        }
        if self.align_batch < 1 {
            return fail("align_batch must be >= 1".into());
        }
        if self.dimensions.is_empty() {
            return fail("at least one dimension is required".into());
        }
        if self.min_match_dims < 1 || self.min_match_dims > self.dimensions.len() {
            return fail(format!(
                "min_match_dims must lie in 1..={}, got {}",
                self.dimensions.len(),
                self.min_match_dims
            ));
        }
        let mut total = 0.0;
        for (i, d) in self.dimensions.iter().enumerate() {
            if d.name.is_empty() {
                return fail("dimension names must be non-empty".into());
            }
            if self.dimensions[..i].iter().any(|o| o.name == d.name) {
                return fail(format!("dimension '{}' declared twice", d.name));
            }
            if !(d.weight >= 0.0 && d.weight.is_finite()) {
                return fail(format!("weight of '{}' must be non-negative", d.name));
            }
            if d.top_k == Some(0) {
                return fail(format!("top_k of '{}' must be >= 1", d.name));
            }
            total += d.weight;
        }
        if total <= 0.0 {
            return fail("dimension weights must sum to a positive value".into());
        }
        Ok(())
    }

    /// Position of a dimension in [`EngineConfig::dimensions`].
    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.name == name)
    }

    pub fn total_weight(&self) -> f64 {
        self.dimensions.iter().map(|d| d.weight).sum()
    }

    pub fn window_seconds(&self) -> f64 {
        self.window_hours * 3600.0
    }

    /// Parses the flat `key = value` format. Unknown keys are rejected.
    /// Dimensions are given as `dimension.<name>.<field>`; when present they
    /// replace the default dimension list, in order of first appearance.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = EngineConfig::default();
        let mut dims: Vec<DimensionConfig> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |m: String| Error::Parse {
                line: lineno + 1,
                message: m,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| parse_err(format!("'{key}' expects a number, got '{v}'")))
            };
            let int = |v: &str| -> Result<i64> {
                v.parse::<i64>()
                    .map_err(|_| parse_err(format!("'{key}' expects an integer, got '{v}'")))
            };
            if let Some(rest) = key.strip_prefix("dimension.") {
                let (name, field) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| parse_err(format!("malformed dimension key '{key}'")))?;
                let idx = match dims.iter().position(|d| d.name == name) {
                    Some(i) => i,
                    None => {
                        dims.push(DimensionConfig::new(name, 1.0));
                        dims.len() - 1
                    }
                };
                let dim = &mut dims[idx];
                match field {
                    "weight" => dim.weight = num(value)?,
                    "metric" => {
                        dim.metric = value.parse().map_err(|e: Error| parse_err(e.to_string()))?
                    }
                    "top_k" => {
                        dim.top_k = match value {
                            "inf" | "∞" | "all" => None,
                            v => Some(int(v)?.max(0) as usize),
                        }
                    }
                    other => return Err(parse_err(format!("unknown dimension field '{other}'"))),
                }
                continue;
            }
            match key {
                "window_hours" | "h" => cfg.window_hours = num(value)?,
                "comparison_interval" | "m_prime" => {
                    cfg.comparison_interval = int(value)?.max(0) as u32
                }
                "alpha_v" => cfg.alpha_v = num(value)?,
                "alpha_c" => cfg.alpha_c = num(value)?,
                "min_match_dims" => cfg.min_match_dims = int(value)?.max(0) as usize,
                "top_window_span" => cfg.top_window_span = int(value)?.max(0) as u32,
                "bloom_fpr" => cfg.bloom_fpr = num(value)?,
                "mode" => cfg.mode = value.parse().map_err(|e: Error| parse_err(e.to_string()))?,
                "workers" => cfg.workers = int(value)?.max(0) as usize,
                "origin" => cfg.origin = int(value)?,
                "align_batch" => cfg.align_batch = int(value)?.max(0) as usize,
                other => return Err(parse_err(format!("unknown key '{other}'"))),
            }
        }
        if !dims.is_empty() {
            cfg.dimensions = dims;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the configuration in the format read by [`EngineConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut out = format!(
            "window_hours = {}\ncomparison_interval = {}\nalpha_v = {}\nalpha_c = {}\n\
             min_match_dims = {}\ntop_window_span = {}\nbloom_fpr = {}\nmode = {}\n\
             workers = {}\norigin = {}\nalign_batch = {}\n",
            self.window_hours,
            self.comparison_interval,
            self.alpha_v,
            self.alpha_c,
            self.min_match_dims,
            self.top_window_span,
            self.bloom_fpr,
            self.mode,
            self.workers,
            self.origin,
            self.align_batch,
        );
        for d in &self.dimensions {
            out.push_str(&format!("dimension.{}.weight = {}\n", d.name, d.weight));
            out.push_str(&format!("dimension.{}.metric = {}\n", d.name, d.metric));
            match d.top_k {
                Some(k) => out.push_str(&format!("dimension.{}.top_k = {}\n", d.name, k)),
                None => out.push_str(&format!("dimension.{}.top_k = inf\n", d.name)),
            }
        }
        out
    }
}
