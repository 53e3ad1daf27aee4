//! Run configuration: every knob of the analysis and the simulator, with the
//! standard city parameters as defaults. Configs load from TOML files whose
//! schema mirrors these structs one to one (see `configs/default.toml` and
//! the README for the documented schema).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Stochasticity tolerance for probability rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One failed invariant: which field broke which rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self { field: field.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// A named speed band; vehicles of this class draw a speed uniformly from
/// `[v_min, v_max]` (other distributions can be added behind the tag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedClass {
    pub name: String,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub distribution: SpeedDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedDistribution {
    #[default]
    Uniform,
}

impl SpeedClass {
    pub fn uniform(name: &str, v_min: f64, v_max: f64) -> Self {
        Self {
            name: name.to_string(),
            v_min,
            v_max,
            distribution: SpeedDistribution::Uniform,
        }
    }

    /// Mean reciprocal speed E[1/V]; finite because v_min > 0.
    pub fn mean_reciprocal_speed(&self) -> f64 {
        if self.v_min == self.v_max {
            1.0 / self.v_min
        } else {
            (self.v_max / self.v_min).ln() / (self.v_max - self.v_min)
        }
    }
}

/// Lengths of the three physical parts of a street, in meters. The middle
/// length is the span the one-dimensional connectivity formulas act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreetGeometry {
    pub len_front: f64,
    pub len_middle: f64,
    pub len_end: f64,
}

impl StreetGeometry {
    pub fn total_length(&self) -> f64 {
        self.len_front + self.len_middle + self.len_end
    }
}

/// Speed classes per segment role: two on the front part (arriving slow or at
/// cruising pace), three in the middle (low, medium, fast), two at the end
/// (blocked by a stoplight or rolling through).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedClasses {
    pub front: [SpeedClass; 2],
    pub middle: [SpeedClass; 3],
    pub end: [SpeedClass; 2],
}

/// Row-stochastic class maps applied at segment boundaries. The end-to-front
/// matrix also applies across intersections onto the next street.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTransitions {
    pub front_to_middle: [[f64; 3]; 2],
    pub middle_to_end: [[f64; 2]; 3],
    pub end_to_front: [[f64; 2]; 2],
}

/// Base turn probabilities at an intersection, relative to the travel
/// direction. At boundary intersections the mass of missing directions
/// becomes the exit probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnProbs {
    pub straight: f64,
    pub left: f64,
    pub right: f64,
}

/// Per-intersection override of the base turn probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnOverride {
    pub intersection: usize,
    pub straight: f64,
    pub left: f64,
    pub right: f64,
}

/// Radio model: one shared range, or two ranges where each vehicle draws the
/// short one with probability `prob_short`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TransmissionModel {
    Single { range: f64 },
    Dual { x1: f64, x2: f64, prob_short: f64 },
}

/// Simulator clocking: step size, warm-up to discard (computed from the
/// slowest traversal when absent), measured run length, and snapshot spacing,
/// all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    pub warm_up: Option<f64>,
    pub run_length: f64,
    pub sample_interval: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            warm_up: None,
            run_length: 3600.0,
            sample_interval: 30.0,
        }
    }
}

/// Complete description of one experiment: city shape, mobility parameters,
/// radio model, and solver/simulator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub grid_side: usize,
    pub geometry: StreetGeometry,
    pub speeds: SpeedClasses,
    pub transitions: ClassTransitions,
    pub turns: TurnProbs,
    pub turn_overrides: Vec<TurnOverride>,
    /// Per-intersection traffic weights (row-major); all ones when empty.
    pub traffic_weights: Vec<f64>,
    /// Exogenous vehicle arrival rate at every entrance, vehicles/second.
    pub entrance_rate: f64,
    /// How exogenous arrivals split across the two front classes.
    pub entrance_class_split: [f64; 2],
    pub transmission: TransmissionModel,
    pub percolation_iterations: u64,
    pub sim: SimParams,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_side: 7,
            geometry: StreetGeometry {
                len_front: 200.0,
                len_middle: 1600.0,
                len_end: 200.0,
            },
            speeds: SpeedClasses {
                front: [
                    SpeedClass::uniform("low", 0.3, 3.0),
                    SpeedClass::uniform("medium", 3.0, 14.0),
                ],
                middle: [
                    SpeedClass::uniform("low", 3.0, 14.0),
                    SpeedClass::uniform("medium", 14.0, 22.0),
                    SpeedClass::uniform("fast", 22.0, 33.0),
                ],
                end: [
                    SpeedClass::uniform("low", 0.3, 1.5),
                    SpeedClass::uniform("medium", 1.5, 14.0),
                ],
            },
            // Slow arrivals stay slow or reach medium pace; medium arrivals
            // cruise at medium or fast. Every middle class has a coin-flip
            // chance of hitting an obstacle at the street end, and the end
            // class carries over to the next street's front class.
            transitions: ClassTransitions {
                front_to_middle: [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]],
                middle_to_end: [[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]],
                end_to_front: [[1.0, 0.0], [0.0, 1.0]],
            },
            turns: TurnProbs { straight: 0.5, left: 0.25, right: 0.25 },
            turn_overrides: Vec::new(),
            traffic_weights: Vec::new(),
            entrance_rate: 0.05,
            entrance_class_split: [0.5, 0.5],
            transmission: TransmissionModel::Single { range: 200.0 },
            percolation_iterations: 1000,
            sim: SimParams::default(),
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Traffic weight of an intersection (1.0 unless configured).
    pub fn weight_of(&self, intersection: usize) -> f64 {
        self.traffic_weights.get(intersection).copied().unwrap_or(1.0)
    }
}

fn check_speed_class(out: &mut Vec<Violation>, field: &str, class: &SpeedClass) {
    if !(class.v_min > 0.0) {
        out.push(Violation::new(
            format!("{field}.{}", class.name),
            "v_min must be positive (mean reciprocal speed diverges otherwise)",
        ));
    }
    if !(class.v_min < class.v_max) {
        out.push(Violation::new(
            format!("{field}.{}", class.name),
            "requires 0 < v_min < v_max",
        ));
    }
}

fn check_row(out: &mut Vec<Violation>, field: String, row: &[f64]) {
    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        out.push(Violation::new(field.clone(), "entries must lie in [0, 1]"));
        return;
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        out.push(Violation::new(field, format!("row sums to {sum}, expected 1")));
    }
}

/// Check every invariant of the configuration. An empty list means the
/// config is valid; each entry names the offending field and the rule.
pub fn validate_config(config: &RunConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.grid_side < 2 {
        out.push(Violation::new("grid_side", "must be at least 2"));
    }
    for (name, len) in [
        ("geometry.len_front", config.geometry.len_front),
        ("geometry.len_middle", config.geometry.len_middle),
        ("geometry.len_end", config.geometry.len_end),
    ] {
        if !(len > 0.0) {
            out.push(Violation::new(name, "length must be positive"));
        }
    }
    for class in &config.speeds.front {
        check_speed_class(&mut out, "speeds.front", class);
    }
    for class in &config.speeds.middle {
        check_speed_class(&mut out, "speeds.middle", class);
    }
    for class in &config.speeds.end {
        check_speed_class(&mut out, "speeds.end", class);
    }
    for (u, row) in config.transitions.front_to_middle.iter().enumerate() {
        check_row(&mut out, format!("transitions.front_to_middle[{u}]"), row);
    }
    for (u, row) in config.transitions.middle_to_end.iter().enumerate() {
        check_row(&mut out, format!("transitions.middle_to_end[{u}]"), row);
    }
    for (u, row) in config.transitions.end_to_front.iter().enumerate() {
        check_row(&mut out, format!("transitions.end_to_front[{u}]"), row);
    }
    check_row(
        &mut out,
        "turns".to_string(),
        &[config.turns.straight, config.turns.left, config.turns.right],
    );
    let intersections = config.grid_side * config.grid_side;
    for ov in &config.turn_overrides {
        if ov.intersection >= intersections {
            out.push(Violation::new(
                format!("turn_overrides[intersection {}]", ov.intersection),
                "intersection id out of range",
            ));
        }
        check_row(
            &mut out,
            format!("turn_overrides[intersection {}]", ov.intersection),
            &[ov.straight, ov.left, ov.right],
        );
    }
    if !config.traffic_weights.is_empty() {
        if config.traffic_weights.len() != intersections {
            out.push(Violation::new(
                "traffic_weights",
                format!(
                    "expected {} entries (one per intersection), got {}",
                    intersections,
                    config.traffic_weights.len()
                ),
            ));
        }
        for (i, &w) in config.traffic_weights.iter().enumerate() {
            if !(w > 0.0) {
                out.push(Violation::new(
                    format!("traffic_weights[{i}]"),
                    "traffic weight must be positive",
                ));
            }
        }
    }
    if !(config.entrance_rate >= 0.0) {
        out.push(Violation::new("entrance_rate", "must be non-negative"));
    }
    check_row(&mut out, "entrance_class_split".to_string(), &config.entrance_class_split);
    match config.transmission {
        TransmissionModel::Single { range } => {
            if !(range > 0.0) {
                out.push(Violation::new("transmission.range", "must be positive"));
            }
        }
        TransmissionModel::Dual { x1, x2, prob_short } => {
            if !(x1 > 0.0) {
                out.push(Violation::new("transmission.x1", "must be positive"));
            }
            if !(x1 < x2) {
                out.push(Violation::new("transmission", "x1 < x2 required"));
            }
            if !(0.0..=1.0).contains(&prob_short) {
                out.push(Violation::new("transmission.prob_short", "must lie in [0, 1]"));
            }
        }
    }
    if config.percolation_iterations == 0 {
        out.push(Violation::new("percolation_iterations", "must be at least 1"));
    }
    if !(config.sim.dt > 0.0) {
        out.push(Violation::new("sim.dt", "must be positive"));
    }
    if !(config.sim.sample_interval > 0.0) {
        out.push(Violation::new("sim.sample_interval", "must be positive"));
    }
    if !(config.sim.run_length > 0.0) {
        out.push(Violation::new("sim.run_length", "must be positive"));
    }
    out
}
