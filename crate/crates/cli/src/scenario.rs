//! Dispatch of one scenario to the library operations.

use std::sync::Arc;
use std::time::Instant;

use jacobi_index::models::{
    evaluate_dimension_bound, focal_count_check, holonomy_subspace, index_chain, model_by_name, random_suite,
    reduce_model, seeded_system, submanifold_lagrangian, submersion_lagrangian, SubmersionModel, SuiteKind, Theorem,
};
use jacobi_index::{
    index_on_interval, vanishing_lagrangian_of, verify_inequality, verify_span_property, Error, ErrorClass,
    FieldSubspace, FundamentalSolution, IndexReport, Inequality, IntervalSpec, JacobiSystem, ScanOptions,
    TransverseSystem, VerdictRecord,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{InequalityKind, Scenario, ScenarioConfig, SubspaceSpec, SystemSpec};

/// Largest entrywise gap allowed between the reduced curvature of a model
/// and its base curvature.
pub const MODEL_CURVATURE_GAP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Hypothesis,
    Numerical,
    Input,
}

impl From<ErrorClass> for ErrorKind {
    fn from(c: ErrorClass) -> Self {
        match c {
            ErrorClass::Hypothesis => ErrorKind::Hypothesis,
            ErrorClass::Numerical => ErrorKind::Numerical,
            ErrorClass::Input => ErrorKind::Input,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub class: ErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord {
            class: e.class().into(),
            message: e.to_string(),
            trial: None,
            seed: None,
        }
    }
}

/// Bookkeeping of a random suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub kind: SuiteKind,
    pub root_seed: u64,
    pub trials: u64,
    pub retried: u64,
    pub redrawn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: String,
    pub scenario: Scenario,
    pub verdicts: Vec<VerdictRecord>,
    #[serde(default)]
    pub indices: Vec<IndexReport>,
    #[serde(default)]
    pub errors: Vec<ErrorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteSummary>,
    pub timing_s: f64,
}

impl ScenarioResult {
    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }
}

fn options(cfg: &ScenarioConfig) -> ScanOptions {
    let mut o = ScanOptions::default();
    o.scan_step = cfg.scan_step;
    if let Some(t) = cfg.refine_tol {
        o.refine_tol = t;
    }
    o
}

fn model(cfg: &ScenarioConfig) -> jacobi_index::Result<SubmersionModel> {
    let name = cfg
        .model
        .as_deref()
        .ok_or_else(|| Error::InputContract(format!("scenario {} needs a model", cfg.scenario.id())))?;
    model_by_name(name)
}

/// The system of the scenario; a bare `model` stands for its total space.
pub fn build_system(cfg: &ScenarioConfig) -> jacobi_index::Result<Arc<JacobiSystem>> {
    let sys = match &cfg.system {
        Some(SystemSpec::Constant { delta, m }) => {
            JacobiSystem::constant(delta.value, *m)?.with_label(format!("constant(delta={}, m={m})", delta.value))
        }
        Some(SystemSpec::ModelTotal { model }) => return Ok(model_by_name(model)?.total_system().clone()),
        Some(SystemSpec::ModelBase { model }) => return Ok(model_by_name(model)?.base_system().clone()),
        Some(SystemSpec::Random { m, seed }) => seeded_system(*seed, *m)?,
        None => return Ok(model(cfg)?.total_system().clone()),
    };
    Ok(Arc::new(sys))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> jacobi_index::Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InputContract(format!("{what} must be a square matrix given as rows")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn build_subspace(
    cfg: &ScenarioConfig,
    spec: &SubspaceSpec,
    system: &Arc<JacobiSystem>,
) -> jacobi_index::Result<FieldSubspace> {
    let m = system.dim();
    match spec {
        SubspaceSpec::Vanishing { a } => vanishing_lagrangian_of(system.clone(), a.value),
        SubspaceSpec::Basis { anchor, columns } => {
            if columns.iter().any(|c| c.len() != 2 * m) {
                return Err(Error::InputContract(format!(
                    "every basis column needs {} entries (values then derivatives)",
                    2 * m
                )));
            }
            let data = DMatrix::from_fn(2 * m, columns.len(), |i, j| columns[j][i]);
            let flow = Arc::new(FundamentalSolution::new(system.clone(), anchor.value, (anchor.value, anchor.value))?);
            FieldSubspace::from_matrix(flow, anchor.value, &data)
        }
        SubspaceSpec::Submanifold { projector, shape } => {
            submanifold_lagrangian(system, &matrix(projector, "projector")?, &matrix(shape, "shape")?)
        }
        SubspaceSpec::Lifted => submersion_lagrangian(&model(cfg)?),
        SubspaceSpec::Holonomy => holonomy_subspace(&model(cfg)?),
    }
}

fn subspace(cfg: &ScenarioConfig, system: &Arc<JacobiSystem>) -> jacobi_index::Result<FieldSubspace> {
    let spec = cfg
        .subspace
        .as_ref()
        .ok_or_else(|| Error::InputContract("missing subspace".into()))?;
    build_subspace(cfg, spec, system)
}

fn other(cfg: &ScenarioConfig, system: &Arc<JacobiSystem>) -> jacobi_index::Result<FieldSubspace> {
    let spec = cfg.other.as_ref().ok_or_else(|| Error::InputContract("missing other".into()))?;
    build_subspace(cfg, spec, system)
}

fn intervals(cfg: &ScenarioConfig) -> Vec<IntervalSpec> {
    cfg.interval.iter().chain(&cfg.intervals).map(|i| i.spec).collect()
}

fn missing(field: &str) -> Error {
    Error::InputContract(format!("missing {field}"))
}

struct Outcome {
    verdicts: Vec<VerdictRecord>,
    indices: Vec<IndexReport>,
    errors: Vec<ErrorRecord>,
    suite: Option<SuiteSummary>,
}

impl Outcome {
    fn verdicts(verdicts: Vec<VerdictRecord>) -> Self {
        Outcome {
            verdicts,
            indices: Vec::new(),
            errors: Vec::new(),
            suite: None,
        }
    }
}

fn dispatch(cfg: &ScenarioConfig) -> jacobi_index::Result<Outcome> {
    let opts = options(cfg);
    match cfg.scenario {
        Scenario::Index => {
            let system = build_system(cfg)?;
            let w = subspace(cfg, &system)?;
            let iv = cfg.interval.as_ref().ok_or_else(|| missing("interval"))?.spec;
            let rep = index_on_interval(&w, &iv, &opts)?;
            let mut out = Outcome::verdicts(Vec::new());
            if let Some(e) = cfg.expect {
                out.verdicts.push(
                    VerdictRecord::equality("index", rep.total as f64, e as f64, 0.0)
                        .with_note(format!("ind {iv} of {}", w.label())),
                );
            }
            out.indices.push(rep);
            Ok(out)
        }
        Scenario::Inequality => {
            let system = build_system(cfg)?;
            let l = subspace(cfg, &system)?;
            let a = cfg.a.as_ref().map_or(0.0, |a| a.value);
            let r = cfg.r.unwrap_or(1);
            let kind = cfg.inequality_kind().map_err(Error::InputContract)?;
            let l2;
            let ineq = match kind {
                InequalityKind::Lytchak => {
                    l2 = other(cfg, &system)?;
                    let interval = cfg.interval.as_ref().ok_or_else(|| missing("interval"))?.spec;
                    Inequality::Lytchak { l1: &l, l2: &l2, interval }
                }
                InequalityKind::ConjUpper => Inequality::ConjUpper {
                    l: &l,
                    a,
                    r,
                    c: cfg.c.as_ref().ok_or_else(|| missing("c"))?.value,
                },
                InequalityKind::DeltaLower => Inequality::DeltaLower {
                    l: &l,
                    a,
                    r,
                    delta: cfg.delta.as_ref().ok_or_else(|| missing("delta"))?.value,
                },
                InequalityKind::PeriodicUpper => Inequality::PeriodicUpper {
                    l: &l,
                    a,
                    r,
                    period: cfg.l.as_ref().ok_or_else(|| missing("l"))?.value,
                },
            };
            Ok(Outcome::verdicts(vec![verify_inequality(ineq, &opts)?]))
        }
        Scenario::Span => {
            let system = build_system(cfg)?;
            let l = subspace(cfg, &system)?;
            let a = cfg.a.as_ref().map_or(0.0, |a| a.value);
            let delta = cfg.delta.as_ref().ok_or_else(|| missing("delta"))?.value;
            Ok(Outcome::verdicts(vec![verify_span_property(&l, a, delta, &opts)?]))
        }
        Scenario::Transverse => transverse(cfg, &opts),
        Scenario::TheoremA | Scenario::TheoremB | Scenario::Foliation => {
            let md = model(cfg)?;
            let theorem = match cfg.scenario {
                Scenario::TheoremA => Theorem::A,
                Scenario::TheoremB => Theorem::B,
                _ => Theorem::Foliation,
            };
            let mut verdicts = vec![evaluate_dimension_bound(&md, theorem, &opts)?];
            if let (Some(r_max), Theorem::A | Theorem::B) = (cfg.r_max, theorem) {
                verdicts.extend(index_chain(&md, theorem, r_max, &opts)?);
            }
            Ok(Outcome::verdicts(verdicts))
        }
        Scenario::Submanifold => {
            let (l, n) = match (&cfg.subspace, &cfg.model) {
                (None, Some(_)) => {
                    let md = model(cfg)?;
                    let v0 = md.vertical(0.0);
                    let l = submanifold_lagrangian(md.total_system(), &(&v0 * v0.transpose()), &md.shape(0.0))?;
                    (l, cfg.n.unwrap_or(md.total_dim() + 1))
                }
                _ => {
                    let system = build_system(cfg)?;
                    (subspace(cfg, &system)?, cfg.n.ok_or_else(|| missing("n"))?)
                }
            };
            Ok(Outcome::verdicts(vec![focal_count_check(&l, n, &opts)?]))
        }
        Scenario::RandomSuite => {
            let kind = SuiteKind::parse(cfg.kind.as_deref().unwrap_or_default())?;
            let seed = cfg.seed.ok_or_else(|| missing("seed"))?;
            let trials = cfg.trials.ok_or_else(|| missing("trials"))?;
            let rep = random_suite(kind, seed, trials, &opts);
            let errors = rep
                .errors
                .iter()
                .map(|e| ErrorRecord {
                    class: if e.hypothesis { ErrorKind::Hypothesis } else { ErrorKind::Numerical },
                    message: e.message.clone(),
                    trial: Some(e.trial),
                    seed: Some(e.seed),
                })
                .collect();
            Ok(Outcome {
                suite: Some(SuiteSummary {
                    kind,
                    root_seed: seed,
                    trials,
                    retried: rep.retried,
                    redrawn: rep.redrawn.len() as u64,
                }),
                verdicts: rep.verdicts,
                indices: Vec::new(),
                errors,
            })
        }
    }
}

fn transverse(cfg: &ScenarioConfig, opts: &ScanOptions) -> jacobi_index::Result<Outcome> {
    let ivs = intervals(cfg);
    let lo = ivs.iter().map(|i| i.lo).fold(f64::INFINITY, f64::min);
    let hi = ivs.iter().map(|i| i.hi).fold(f64::NEG_INFINITY, f64::max);
    let mut verdicts = Vec::new();
    let index_sum = |l: &FieldSubspace, w: &FieldSubspace, p: &FieldSubspace, iv: &IntervalSpec| {
        let il = index_on_interval(l, iv, opts)?.total;
        let iw = index_on_interval(w, iv, opts)?.total;
        let ip = index_on_interval(p, iv, opts)?.total;
        Ok::<_, Error>(
            VerdictRecord::equality("index_sum", il as f64, (iw + ip) as f64, 0.0)
                .with_note(format!("{iv}: ind_L = {il}, ind_W = {iw}, ind_(L/W) = {ip}")),
        )
    };
    if cfg.subspace.is_none() && cfg.model.is_some() {
        if lo < 0.0 {
            return Err(Error::InputContract("model reductions start at t = 0".into()));
        }
        let md = model(cfg)?;
        let red = reduce_model(&md, hi)?;
        let gap = red.base_curvature_gap(&md, 64)?;
        verdicts.push(
            VerdictRecord::upper("curvature_gap", gap, MODEL_CURVATURE_GAP_TOL, 0.0)
                .with_note("sup |R^W - base curvature| on 65 samples"),
        );
        for iv in &ivs {
            verdicts.push(index_sum(&red.lagrangian, &red.holonomy, &red.projected, iv)?);
        }
    } else {
        let system = build_system(cfg)?;
        let l = subspace(cfg, &system)?;
        let w = other(cfg, &system)?;
        let ts = TransverseSystem::new(&w, (lo, hi))?;
        let p = ts.project_subspace(&l)?;
        for iv in &ivs {
            verdicts.push(index_sum(&l, &w, &p, iv)?);
        }
    }
    Ok(Outcome::verdicts(verdicts))
}

/// Runs one scenario; library errors become error records.
pub fn run_scenario(cfg: &ScenarioConfig, index: usize) -> ScenarioResult {
    let start = Instant::now();
    let outcome = dispatch(cfg).unwrap_or_else(|e| Outcome {
        verdicts: Vec::new(),
        indices: Vec::new(),
        errors: vec![ErrorRecord::from(&e)],
        suite: None,
    });
    ScenarioResult {
        id: cfg.label(index),
        scenario: cfg.scenario,
        verdicts: outcome.verdicts,
        indices: outcome.indices,
        errors: outcome.errors,
        suite: outcome.suite,
        timing_s: start.elapsed().as_secs_f64(),
    }
}
