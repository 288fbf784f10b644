//! Run configuration: a TOML file with `[model]`, `[bridge]`, `[grid]`,
//! `[guide]`, `[run]`, `[tuner]`, `[scan]` and `[figure]` sections.
//!
//! Every problem found while reading is collected, so a bad file is reported
//! in one pass.

use std::f64::consts::PI;

use bridgesim::models::{brownian_with_drift, ornstein_uhlenbeck_guide, polynomial, sine_drift};
use bridgesim::{BridgeSpec, DiffusionModel, LinearGuide, TimeGrid};
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    BmDrift { beta1: f64, sigma: f64 },
    Ou { rate: f64, mean: f64, sigma: f64 },
    SineDrift { beta1: f64, beta2: f64, sigma: f64 },
    Polynomial { coeffs: Vec<f64>, sigma: f64 },
}

impl ModelConfig {
    pub fn sigma(&self) -> f64 {
        match self {
            Self::BmDrift { sigma, .. }
            | Self::Ou { sigma, .. }
            | Self::SineDrift { sigma, .. }
            | Self::Polynomial { sigma, .. } => *sigma,
        }
    }

    pub fn build(&self) -> anyhow::Result<DiffusionModel> {
        Ok(match self {
            Self::BmDrift { beta1, sigma } => brownian_with_drift(*beta1, *sigma),
            Self::Ou { rate, mean, sigma } => ornstein_uhlenbeck_guide(*rate, *mean, *sigma)?.as_model(),
            Self::SineDrift { beta1, beta2, sigma } => sine_drift(*beta1, *beta2, *sigma),
            Self::Polynomial { coeffs, sigma } => polynomial(coeffs.clone(), *sigma)?,
        })
    }

    /// The model as a linear process, when it is one.
    pub fn as_linear(&self) -> anyhow::Result<Option<LinearGuide>> {
        Ok(match self {
            Self::BmDrift { beta1, sigma } => Some(LinearGuide::scalar_brownian(*sigma, *beta1)?),
            Self::Ou { rate, mean, sigma } => Some(ornstein_uhlenbeck_guide(*rate, *mean, *sigma)?),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GuideConfig {
    /// Scaled Brownian motion with constant drift `theta`.
    Drift { theta: f64, scale: f64 },
    Ou { rate: f64, mean: f64, sigma: f64 },
    /// The model itself (linear models only).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeConfig {
    pub start: f64,
    pub end: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub steps: usize,
    pub nodes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub method: String,
    pub paths: usize,
    pub iterations: usize,
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TunerSection {
    pub theta0: f64,
    pub n_outer: usize,
    pub batch_size: usize,
    pub inner_steps: usize,
    pub alpha0: f64,
    pub gamma: f64,
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub points: usize,
    pub paths: usize,
    pub theta_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureConfig {
    pub time: f64,
    pub tuned_theta: f64,
    pub paths: usize,
    pub oracle_paths: usize,
    pub epsilon: f64,
    pub max_forward: usize,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub model: ModelConfig,
    pub bridge: BridgeConfig,
    pub grid: GridConfig,
    pub guide: GuideConfig,
    pub run: RunConfig,
    pub tuner: TunerSection,
    pub scan: ScanConfig,
    pub figure: FigureConfig,
}

pub const METHODS: [&str; 4] = ["guided", "pulled", "pulled-nodrift", "exact-linear"];

impl Config {
    pub fn spec(&self) -> anyhow::Result<BridgeSpec> {
        Ok(BridgeSpec::scalar(self.bridge.start, self.bridge.end, self.bridge.horizon)?)
    }

    /// Quadratic bridge grid with the extra `nodes` inserted.
    pub fn bridge_grid(&self) -> anyhow::Result<TimeGrid> {
        let g = bridgesim::make_bridge_grid(self.bridge.horizon, self.grid.steps)?;
        Ok(if self.grid.nodes.is_empty() { g } else { g.with_nodes(&self.grid.nodes)? })
    }

    pub fn guide(&self) -> anyhow::Result<LinearGuide> {
        Ok(match &self.guide {
            GuideConfig::Drift { theta, scale } => LinearGuide::scalar_brownian(*scale, *theta)?,
            GuideConfig::Ou { rate, mean, sigma } => ornstein_uhlenbeck_guide(*rate, *mean, *sigma)?,
            GuideConfig::Exact => self
                .model
                .as_linear()?
                .ok_or_else(|| anyhow::anyhow!("guide.kind = \"exact\" needs a linear model"))?,
        })
    }

    /// Normalized TOML with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Collects type and range problems while reading a TOML table.
struct Reader<'a> {
    root: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn section(&mut self, name: &str, known: &[&str]) -> Option<&'a Table> {
        match self.root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                for key in t.keys() {
                    if !known.contains(&key.as_str()) {
                        self.errors.push(format!("{name}.{key}: unknown field"));
                    }
                }
                Some(t)
            }
            Some(_) => {
                self.errors.push(format!("{name}: expected a table"));
                None
            }
        }
    }

    fn value(&self, table: Option<&'a Table>, key: &str) -> Option<&'a Value> {
        table.and_then(|t| t.get(key))
    }

    fn f64(&mut self, table: Option<&'a Table>, path: &str, key: &str, default: Option<f64>) -> f64 {
        match self.value(table, key) {
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(_) => {
                self.errors.push(format!("{path}.{key}: expected a number"));
                f64::NAN
            }
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("{path}.{key}: missing"));
                f64::NAN
            }),
        }
    }

    fn usize(&mut self, table: Option<&'a Table>, path: &str, key: &str, default: usize) -> usize {
        match self.value(table, key) {
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(_) => {
                self.errors.push(format!("{path}.{key}: expected a non-negative integer"));
                0
            }
            None => default,
        }
    }

    fn str(&mut self, table: Option<&'a Table>, path: &str, key: &str, default: Option<&str>) -> String {
        match self.value(table, key) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.errors.push(format!("{path}.{key}: expected a string"));
                String::new()
            }
            None => default.map(str::to_string).unwrap_or_else(|| {
                self.errors.push(format!("{path}.{key}: missing"));
                String::new()
            }),
        }
    }

    fn f64_list(&mut self, table: Option<&'a Table>, path: &str, key: &str, required: bool) -> Vec<f64> {
        match self.value(table, key) {
            Some(Value::Array(items)) => {
                let out: Vec<f64> = items
                    .iter()
                    .filter_map(|v| match v {
                        Value::Float(x) => Some(*x),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                if out.len() != items.len() {
                    self.errors.push(format!("{path}.{key}: expected an array of numbers"));
                }
                out
            }
            Some(_) => {
                self.errors.push(format!("{path}.{key}: expected an array of numbers"));
                Vec::new()
            }
            None => {
                if required {
                    self.errors.push(format!("{path}.{key}: missing"));
                }
                Vec::new()
            }
        }
    }

    fn require(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }
}

/// Parses and validates a configuration; the error lists every problem.
pub fn parse(text: &str) -> Result<Config, Vec<String>> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| vec![format!("invalid TOML: {}", e.message())])?;
    let mut r = Reader { root: &root, errors: Vec::new() };
    const SECTIONS: [&str; 9] = ["seed", "model", "bridge", "grid", "guide", "run", "tuner", "scan", "figure"];
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            r.errors.push(format!("{key}: unknown field"));
        }
    }
    let seed = match root.get("seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            r.errors.push("seed: expected a non-negative integer".into());
            0
        }
    };

    let m = r.section("model", &["kind", "sigma", "beta1", "beta2", "rate", "mean", "coeffs"]);
    if m.is_none() {
        r.errors.push("model: missing section".into());
    }
    let kind = r.str(m, "model", "kind", None);
    let sigma = r.f64(m, "model", "sigma", None);
    r.require(sigma > 0.0, format!("model.sigma: must be positive, got {sigma}"));
    let model = match kind.as_str() {
        "bm-drift" => ModelConfig::BmDrift { beta1: r.f64(m, "model", "beta1", None), sigma },
        "ou" => ModelConfig::Ou {
            rate: r.f64(m, "model", "rate", None),
            mean: r.f64(m, "model", "mean", Some(0.0)),
            sigma,
        },
        "sine-drift" => ModelConfig::SineDrift {
            beta1: r.f64(m, "model", "beta1", None),
            beta2: r.f64(m, "model", "beta2", None),
            sigma,
        },
        "polynomial" => {
            let coeffs = r.f64_list(m, "model", "coeffs", true);
            r.require(!coeffs.is_empty(), "model.coeffs: needs at least one coefficient");
            ModelConfig::Polynomial { coeffs, sigma }
        }
        other => {
            if !other.is_empty() {
                r.errors.push(format!(
                    "model.kind: unknown model \"{other}\" (expected bm-drift, ou, sine-drift or polynomial)"
                ));
            }
            ModelConfig::BmDrift { beta1: 0.0, sigma }
        }
    };

    let b = r.section("bridge", &["start", "end", "horizon"]);
    let bridge = BridgeConfig {
        start: r.f64(b, "bridge", "start", Some(0.0)),
        end: r.f64(b, "bridge", "end", Some(PI / 2.0)),
        horizon: r.f64(b, "bridge", "horizon", Some(1.0)),
    };
    r.require(bridge.horizon > 0.0, format!("bridge.horizon: must be positive, got {}", bridge.horizon));
    r.require(bridge.start.is_finite() && bridge.end.is_finite(), "bridge.start/end: must be finite");

    let g = r.section("grid", &["steps", "nodes"]);
    let grid = GridConfig {
        steps: r.usize(g, "grid", "steps", 400),
        nodes: r.f64_list(g, "grid", "nodes", false),
    };
    r.require(grid.steps >= 2, format!("grid.steps: must be at least 2, got {}", grid.steps));
    for t in &grid.nodes {
        r.require(*t > 0.0 && *t < bridge.horizon, format!("grid.nodes: {t} is not inside (0, horizon)"));
    }

    let gd = r.section("guide", &["kind", "theta", "scale", "rate", "mean", "sigma"]);
    let guide_kind = r.str(gd, "guide", "kind", Some("drift"));
    let guide = match guide_kind.as_str() {
        "drift" => {
            let scale = r.f64(gd, "guide", "scale", Some(model.sigma()));
            r.require(scale > 0.0, format!("guide.scale: must be positive, got {scale}"));
            GuideConfig::Drift { theta: r.f64(gd, "guide", "theta", Some(0.0)), scale }
        }
        "ou" => {
            let s = r.f64(gd, "guide", "sigma", Some(model.sigma()));
            r.require(s > 0.0, format!("guide.sigma: must be positive, got {s}"));
            GuideConfig::Ou {
                rate: r.f64(gd, "guide", "rate", None),
                mean: r.f64(gd, "guide", "mean", Some(0.0)),
                sigma: s,
            }
        }
        "exact" => {
            r.require(
                matches!(model, ModelConfig::BmDrift { .. } | ModelConfig::Ou { .. }),
                "guide.kind: \"exact\" needs a linear model (bm-drift or ou)",
            );
            GuideConfig::Exact
        }
        other => {
            r.errors.push(format!("guide.kind: unknown guide \"{other}\" (expected drift, ou or exact)"));
            GuideConfig::Exact
        }
    };

    let rn = r.section("run", &["method", "paths", "iterations", "thin"]);
    let run = RunConfig {
        method: r.str(rn, "run", "method", Some("guided")),
        paths: r.usize(rn, "run", "paths", 1000),
        iterations: r.usize(rn, "run", "iterations", 10_000),
        thin: r.usize(rn, "run", "thin", 10),
    };
    r.require(
        METHODS.contains(&run.method.as_str()),
        format!("run.method: unknown method \"{}\" (expected one of {METHODS:?})", run.method),
    );
    r.require(run.paths >= 1, "run.paths: must be at least 1");
    r.require(run.iterations >= 1, "run.iterations: must be at least 1");
    r.require(run.thin >= 1, "run.thin: must be at least 1");

    let t = r.section("tuner", &["theta0", "n_outer", "batch_size", "inner_steps", "alpha0", "gamma", "tail_fraction"]);
    let tuner = TunerSection {
        theta0: r.f64(t, "tuner", "theta0", Some(0.0)),
        n_outer: r.usize(t, "tuner", "n_outer", 1000),
        batch_size: r.usize(t, "tuner", "batch_size", 1),
        inner_steps: r.usize(t, "tuner", "inner_steps", 1),
        alpha0: r.f64(t, "tuner", "alpha0", Some(0.1)),
        gamma: r.f64(t, "tuner", "gamma", Some(5.0)),
        tail_fraction: r.f64(t, "tuner", "tail_fraction", Some(0.25)),
    };
    r.require(tuner.batch_size >= 1, "tuner.batch_size: must be at least 1");
    r.require(tuner.inner_steps >= 1, "tuner.inner_steps: must be at least 1");
    r.require(tuner.alpha0 > 0.0, "tuner.alpha0: must be positive");
    r.require(tuner.gamma > 0.0, "tuner.gamma: must be positive");
    r.require(
        tuner.tail_fraction > 0.0 && tuner.tail_fraction <= 1.0,
        "tuner.tail_fraction: must lie in (0, 1]",
    );

    let s = r.section("scan", &["theta_min", "theta_max", "points", "paths", "theta_ref"]);
    let scan = ScanConfig {
        theta_min: r.f64(s, "scan", "theta_min", Some(-1.0)),
        theta_max: r.f64(s, "scan", "theta_max", Some(4.0)),
        points: r.usize(s, "scan", "points", 26),
        paths: r.usize(s, "scan", "paths", 10_000),
        theta_ref: r.f64(s, "scan", "theta_ref", Some(1.5)),
    };
    r.require(scan.theta_max > scan.theta_min, "scan.theta_max: must exceed scan.theta_min");
    r.require(scan.points >= 2, "scan.points: must be at least 2");
    r.require(scan.paths >= 1, "scan.paths: must be at least 1");

    let f = r.section(
        "figure",
        &["time", "tuned_theta", "paths", "oracle_paths", "epsilon", "max_forward", "bins", "lo", "hi"],
    );
    let figure = FigureConfig {
        time: r.f64(f, "figure", "time", Some(bridge.horizon / 2.0)),
        tuned_theta: r.f64(f, "figure", "tuned_theta", Some(1.36)),
        paths: r.usize(f, "figure", "paths", 10_000),
        oracle_paths: r.usize(f, "figure", "oracle_paths", 2000),
        epsilon: r.f64(f, "figure", "epsilon", Some(0.02)),
        max_forward: r.usize(f, "figure", "max_forward", 4_000_000),
        bins: r.usize(f, "figure", "bins", 40),
        lo: r.f64(f, "figure", "lo", Some(0.0)),
        hi: r.f64(f, "figure", "hi", Some(2.0)),
    };
    r.require(
        figure.time > 0.0 && figure.time < bridge.horizon,
        format!("figure.time: {} is not inside (0, horizon)", figure.time),
    );
    r.require(figure.paths >= 1 && figure.oracle_paths >= 1, "figure.paths/oracle_paths: must be at least 1");
    r.require(figure.epsilon > 0.0, "figure.epsilon: must be positive");
    r.require(figure.bins >= 1, "figure.bins: must be at least 1");
    r.require(figure.hi > figure.lo, "figure.hi: must exceed figure.lo");

    if r.errors.is_empty() {
        Ok(Config { seed, model, bridge, grid, guide, run, tuner, scan, figure })
    } else {
        Err(r.errors)
    }
}
