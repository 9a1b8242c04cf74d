//! Scenario configuration files.
//!
//! A config file holds one scenario object, an array of them, or
//! `{"scenarios": [...]}`. Unknown fields are rejected; errors carry the JSON
//! path of the offending field.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use crate::angle::{Angle, IntervalArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Index,
    Inequality,
    Span,
    Transverse,
    #[serde(rename = "theorem_A")]
    TheoremA,
    #[serde(rename = "theorem_B")]
    TheoremB,
    Foliation,
    Submanifold,
    RandomSuite,
}

impl Scenario {
    pub fn id(self) -> &'static str {
        match self {
            Scenario::Index => "index",
            Scenario::Inequality => "inequality",
            Scenario::Span => "span",
            Scenario::Transverse => "transverse",
            Scenario::TheoremA => "theorem_A",
            Scenario::TheoremB => "theorem_B",
            Scenario::Foliation => "foliation",
            Scenario::Submanifold => "submanifold",
            Scenario::RandomSuite => "random_suite",
        }
    }
}

/// Curvature family along the geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawSystem")]
pub enum SystemSpec {
    /// `R = delta I` on `R^m`.
    Constant { delta: Angle, m: usize },
    /// Total space of a bundled submersion model.
    ModelTotal { model: String },
    /// Base of a bundled submersion model.
    ModelBase { model: String },
    /// Seeded random trigonometric system.
    Random { m: usize, seed: u64 },
}

/// Subspace of Jacobi fields of the chosen system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawSubspace")]
pub enum SubspaceSpec {
    /// Fields vanishing at `a`.
    Vanishing { a: Angle },
    /// Explicit initial data at `anchor`: each column lists `m` values then `m` derivatives.
    Basis {
        anchor: Angle,
        columns: Vec<Vec<f64>>,
    },
    /// Fields with `J(0) = P J(0)` and `(J'(0) + S J(0))` normal, for a
    /// submanifold with tangent projector `P` and shape operator `S`.
    Submanifold { projector: Vec<Vec<f64>>, shape: Vec<Vec<f64>> },
    /// Lifted Lagrangian of a submersion model (holonomy plus horizontal fields).
    Lifted,
    /// Holonomy fields of a submersion model.
    Holonomy,
}

fn zero() -> Angle {
    Angle::new(0.0)
}

// Tagged specs are read through flat structs: serde buffers internally tagged
// enums, which would hide the path of a bad field below `kind`.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SystemKind {
    Constant,
    ModelTotal,
    ModelBase,
    Random,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kind: SystemKind,
    delta: Option<Angle>,
    m: Option<usize>,
    model: Option<String>,
    seed: Option<u64>,
}

fn need<T>(v: Option<T>, field: &str, kind: &str) -> Result<T, String> {
    v.ok_or_else(|| format!("missing field `{field}` for kind `{kind}`"))
}

fn forbid(present: &[(&str, bool)], kind: &str) -> Result<(), String> {
    match present.iter().find(|(_, p)| *p) {
        Some((field, _)) => Err(format!("field `{field}` does not apply to kind `{kind}`")),
        None => Ok(()),
    }
}

impl TryFrom<RawSystem> for SystemSpec {
    type Error = String;

    fn try_from(r: RawSystem) -> Result<Self, String> {
        match r.kind {
            SystemKind::Constant => {
                forbid(&[("model", r.model.is_some()), ("seed", r.seed.is_some())], "constant")?;
                Ok(SystemSpec::Constant { delta: need(r.delta, "delta", "constant")?, m: need(r.m, "m", "constant")? })
            }
            SystemKind::ModelTotal | SystemKind::ModelBase => {
                let kind = if r.kind == SystemKind::ModelTotal { "model_total" } else { "model_base" };
                forbid(&[("delta", r.delta.is_some()), ("m", r.m.is_some()), ("seed", r.seed.is_some())], kind)?;
                let model = need(r.model, "model", kind)?;
                Ok(if r.kind == SystemKind::ModelTotal {
                    SystemSpec::ModelTotal { model }
                } else {
                    SystemSpec::ModelBase { model }
                })
            }
            SystemKind::Random => {
                forbid(&[("delta", r.delta.is_some()), ("model", r.model.is_some())], "random")?;
                Ok(SystemSpec::Random { m: need(r.m, "m", "random")?, seed: need(r.seed, "seed", "random")? })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SubspaceKind {
    Vanishing,
    Basis,
    Submanifold,
    Lifted,
    Holonomy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubspace {
    kind: SubspaceKind,
    a: Option<Angle>,
    anchor: Option<Angle>,
    columns: Option<Vec<Vec<f64>>>,
    projector: Option<Vec<Vec<f64>>>,
    shape: Option<Vec<Vec<f64>>>,
}

impl TryFrom<RawSubspace> for SubspaceSpec {
    type Error = String;

    fn try_from(r: RawSubspace) -> Result<Self, String> {
        let present = [
            ("a", r.a.is_some()),
            ("anchor", r.anchor.is_some()),
            ("columns", r.columns.is_some()),
            ("projector", r.projector.is_some()),
            ("shape", r.shape.is_some()),
        ];
        let others = |allowed: &[&str]| -> Vec<(&str, bool)> {
            present.iter().copied().filter(|(f, _)| !allowed.contains(f)).collect()
        };
        match r.kind {
            SubspaceKind::Vanishing => {
                forbid(&others(&["a"]), "vanishing")?;
                Ok(SubspaceSpec::Vanishing { a: r.a.unwrap_or_else(zero) })
            }
            SubspaceKind::Basis => {
                forbid(&others(&["anchor", "columns"]), "basis")?;
                Ok(SubspaceSpec::Basis {
                    anchor: r.anchor.unwrap_or_else(zero),
                    columns: need(r.columns, "columns", "basis")?,
                })
            }
            SubspaceKind::Submanifold => {
                forbid(&others(&["projector", "shape"]), "submanifold")?;
                Ok(SubspaceSpec::Submanifold {
                    projector: need(r.projector, "projector", "submanifold")?,
                    shape: need(r.shape, "shape", "submanifold")?,
                })
            }
            SubspaceKind::Lifted => {
                forbid(&others(&[]), "lifted")?;
                Ok(SubspaceSpec::Lifted)
            }
            SubspaceKind::Holonomy => {
                forbid(&others(&[]), "holonomy")?;
                Ok(SubspaceSpec::Holonomy)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    Lytchak,
    ConjUpper,
    DeltaLower,
    PeriodicUpper,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

/// One scenario. Which fields are required depends on `scenario`; see
/// [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<SubspaceSpec>,
    /// Second subspace: `L2` for lytchak, `W` for transverse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<SubspaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalArg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<IntervalArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Angle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Angle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Angle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Angle>,
    /// Dimension `n` of the ambient manifold (submanifold scenario).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Largest `r` of the index chain (theorem scenarios).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_tol: Option<f64>,
    /// Samples per unit time for `trace`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// Contents of a config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigFile {
    pub scenarios: Vec<ScenarioConfig>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawFile {
    Batch { scenarios: Vec<serde_json::Value> },
    List(Vec<serde_json::Value>),
    Single(serde_json::Value),
}

fn parse_scenario(value: serde_json::Value, path: &str) -> anyhow::Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let at = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
        anyhow!("{at}: {}", e.inner())
    })?;
    cfg.validate(path)?;
    Ok(cfg)
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let raw: RawFile = serde_json::from_str(text).context("config is not valid JSON")?;
        let scenarios = match raw {
            RawFile::Batch { scenarios } => scenarios
                .into_iter()
                .enumerate()
                .map(|(i, v)| parse_scenario(v, &format!("scenarios[{i}]")))
                .collect::<anyhow::Result<Vec<_>>>()?,
            RawFile::List(list) => list
                .into_iter()
                .enumerate()
                .map(|(i, v)| parse_scenario(v, &format!("[{i}]")))
                .collect::<anyhow::Result<Vec<_>>>()?,
            RawFile::Single(v) => vec![parse_scenario(v, "$")?],
        };
        Ok(ConfigFile { scenarios })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }
}

impl ScenarioConfig {
    /// Checks that the fields `scenario` needs are present.
    pub fn validate(&self, path: &str) -> anyhow::Result<()> {
        let need = |ok: bool, field: &str| -> anyhow::Result<()> {
            if ok {
                Ok(())
            } else {
                bail!("{path}.{field}: required for scenario {}", self.scenario.id())
            }
        };
        let has_system = self.system.is_some() || self.model.is_some();
        match self.scenario {
            Scenario::Index => {
                need(has_system, "system")?;
                need(self.subspace.is_some(), "subspace")?;
                need(self.interval.is_some(), "interval")?;
            }
            Scenario::Inequality => {
                need(self.kind.is_some(), "kind")?;
                need(has_system, "system")?;
                need(self.subspace.is_some(), "subspace")?;
                let kind = self.inequality_kind().map_err(|e| anyhow!("{path}.kind: {e}"))?;
                match kind {
                    InequalityKind::Lytchak => {
                        need(self.other.is_some(), "other")?;
                        need(self.interval.is_some(), "interval")?;
                    }
                    InequalityKind::ConjUpper => {
                        need(self.r.is_some(), "r")?;
                        need(self.c.is_some(), "c")?;
                    }
                    InequalityKind::DeltaLower => {
                        need(self.r.is_some(), "r")?;
                        need(self.delta.is_some(), "delta")?;
                    }
                    InequalityKind::PeriodicUpper => {
                        need(self.r.is_some(), "r")?;
                        need(self.l.is_some(), "l")?;
                    }
                }
            }
            Scenario::Span => {
                need(has_system, "system")?;
                need(self.subspace.is_some(), "subspace")?;
                need(self.delta.is_some(), "delta")?;
            }
            Scenario::Transverse => {
                if self.model.is_none() {
                    need(self.system.is_some(), "system")?;
                    need(self.subspace.is_some(), "subspace")?;
                    need(self.other.is_some(), "other")?;
                }
                need(self.interval.is_some() || !self.intervals.is_empty(), "intervals")?;
            }
            Scenario::TheoremA | Scenario::TheoremB | Scenario::Foliation => need(self.model.is_some(), "model")?,
            Scenario::Submanifold => {
                if self.model.is_none() {
                    need(self.system.is_some(), "system")?;
                    need(self.subspace.is_some(), "subspace")?;
                }
                need(self.n.is_some() || self.model.is_some(), "n")?;
            }
            Scenario::RandomSuite => {
                need(self.kind.is_some(), "kind")?;
                need(self.seed.is_some(), "seed")?;
                need(self.trials.is_some(), "trials")?;
                jacobi_index::models::SuiteKind::parse(self.kind.as_deref().unwrap_or_default())
                    .map_err(|e| anyhow!("{path}.kind: {e}"))?;
            }
        }
        if let Some(h) = self.scan_step {
            if !(h > 0.0 && h.is_finite()) {
                bail!("{path}.scan_step: must be positive, got {h}");
            }
        }
        if let Some(t) = self.refine_tol {
            if !(t > 0.0 && t.is_finite()) {
                bail!("{path}.refine_tol: must be positive, got {t}");
            }
        }
        Ok(())
    }

    pub fn inequality_kind(&self) -> Result<InequalityKind, String> {
        let k = self.kind.as_deref().unwrap_or_default();
        serde_json::from_value(serde_json::Value::String(k.to_string()))
            .map_err(|_| format!("unknown inequality kind '{k}' (lytchak, conj_upper, delta_lower, periodic_upper)"))
    }

    /// Report id: the configured one or the scenario name with its position.
    pub fn label(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("{}#{index}", self.scenario.id()))
    }
}
