//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Built with `harness = false`; run with `cargo test -p jacobi-index --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use jacobi_index::models::{
    evaluate_dimension_bound, focal_count_check, hopf_model, index_chain, random_suite, reduce_model,
    rederive_constant, submanifold_lagrangian, submersion_lagrangian, tight_lytchak_example, SuiteKind,
    SuiteReport, Theorem, MODEL_NAMES,
};
use jacobi_index::{
    index_on_interval, vanishing_lagrangian, verify_span_property, FundamentalSolution, IntervalSpec,
    JacobiSystem, Result, ScanOptions,
};
use nalgebra::DMatrix;

const ROOT_SEED: u64 = 20261017;

struct Check {
    pass: bool,
    detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check {
            pass,
            detail: detail.into(),
        }
    }
}

/// Accumulates sub-checks; the criterion passes only if all of them do.
#[derive(Default)]
struct Tally {
    failed: Vec<String>,
    done: usize,
}

impl Tally {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        self.done += 1;
        if !ok {
            self.failed.push(what.into());
        }
    }

    fn finish(self, summary: impl Into<String>) -> Check {
        let summary = summary.into();
        if self.failed.is_empty() {
            Check::new(true, format!("{summary}; {} checks", self.done))
        } else {
            let shown: Vec<_> = self.failed.iter().take(5).cloned().collect();
            Check::new(
                false,
                format!("{summary}; {} of {} checks failed: {}", self.failed.len(), self.done, shown.join("; ")),
            )
        }
    }
}

fn opts() -> ScanOptions {
    ScanOptions::default()
}

/// Zeros of `sin(sqrt(delta) t)` in the interval, each counted `m` times.
fn closed_form_index(delta: f64, m: usize, iv: &IntervalSpec) -> usize {
    let period = PI / delta.sqrt();
    let mut count = 0;
    let mut k = 0usize;
    loop {
        let t = k as f64 * period;
        if t > iv.hi + 1e-12 {
            break;
        }
        let inside_lo = if (t - iv.lo).abs() < 1e-12 { iv.include_lo } else { t > iv.lo };
        let inside_hi = if (t - iv.hi).abs() < 1e-12 { iv.include_hi } else { t < iv.hi };
        if inside_lo && inside_hi {
            count += m;
        }
        k += 1;
    }
    count
}

fn l0(delta: f64, m: usize, hi: f64) -> Result<jacobi_index::FieldSubspace> {
    let sys = Arc::new(JacobiSystem::constant(delta, m)?);
    let flow = Arc::new(FundamentalSolution::new(sys, 0.0, (0.0, hi))?);
    vanishing_lagrangian(flow, 0.0)
}

fn suite_summary(rep: &SuiteReport) -> String {
    format!(
        "{}: {} trials, {} verdicts, {} failures, {} reruns, {} redraws",
        rep.kind.id(),
        rep.trials,
        rep.verdicts.len(),
        rep.failures(),
        rep.retried,
        rep.redrawn.len()
    )
}

fn theorem_a_equality() -> Result<Check> {
    let start = Instant::now();
    let mut t = Tally::default();
    for name in MODEL_NAMES {
        let md = hopf_model(name)?;
        let v = evaluate_dimension_bound(&md, Theorem::A, &opts())?;
        t.expect(v.pass && v.hypothesis_ok && v.slack == 0.0, format!("{name}: slack {}", v.slack));
        let c = rederive_constant(&md, Theorem::A, &opts())?;
        t.expect(c.discrepancy() <= 1e-6, format!("{name}: conj radius {} stored {}", c.derived, c.stored));
        t.expect((c.derived - PI / 2.0).abs() <= 1e-6, format!("{name}: conj radius {} vs pi/2", c.derived));
    }
    let secs = start.elapsed().as_secs_f64();
    t.expect(secs < 5.0, format!("runtime {secs:.2} s >= 5 s"));
    Ok(t.finish(format!("3 models, {secs:.2} s")))
}

fn theorem_b() -> Result<Check> {
    let start = Instant::now();
    let mut t = Tally::default();
    let md = hopf_model("s3_s2")?;
    let v = evaluate_dimension_bound(&md, Theorem::B, &opts())?;
    t.expect(v.lhs == 1.0 && v.rhs == 2.0 && v.slack == 1.0 && v.pass, format!("k {} bound {} slack {}", v.lhs, v.rhs, v.slack));
    let chain = index_chain(&md, Theorem::B, 6, &opts())?;
    let rungs = chain.iter().filter(|v| v.statement.contains("[r=")).count();
    t.expect(rungs == 18, format!("{rungs} chain rungs for r = 1..6"));
    for v in &chain {
        t.expect(v.pass && v.lhs.fract() == 0.0 && v.rhs.fract() == 0.0, format!("{}: {} vs {}", v.statement, v.lhs, v.rhs));
    }
    let secs = start.elapsed().as_secs_f64();
    t.expect(secs < 10.0, format!("runtime {secs:.2} s >= 10 s"));
    Ok(t.finish(format!("bound {} with k = {}, {} chain verdicts, {secs:.2} s", v.rhs, v.lhs, chain.len())))
}

fn foliation() -> Result<Check> {
    let mut t = Tally::default();
    let md = hopf_model("s3_s2")?;
    let c = rederive_constant(&md, Theorem::Foliation, &opts())?;
    t.expect((c.derived - PI / 2.0).abs() <= 1e-6, format!("focal radius {}", c.derived));
    let v = evaluate_dimension_bound(&md, Theorem::Foliation, &opts())?;
    t.expect(v.pass && v.rhs == 1.0 && v.slack == 0.0, format!("bound {} slack {}", v.rhs, v.slack));
    Ok(t.finish(format!("focal radius {:.12}", c.derived)))
}

fn focal_counts() -> Result<Check> {
    let mut t = Tally::default();
    let md = hopf_model("s3_s2")?;
    let v0 = md.vertical(0.0);
    let fiber = submanifold_lagrangian(md.total_system(), &(&v0 * v0.transpose()), &md.shape(0.0))?;
    let v = focal_count_check(&fiber, md.total_dim() + 1, &opts())?;
    t.expect(v.pass && v.slack == 0.0, format!("hopf fiber: {} >= {}", v.lhs, v.rhs));
    let sys = Arc::new(JacobiSystem::constant(1.0, 2)?);
    let point = submanifold_lagrangian(&sys, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2))?;
    let v = focal_count_check(&point, 3, &opts())?;
    t.expect(v.pass && v.slack == 0.0, format!("point: {} >= {}", v.lhs, v.rhs));
    Ok(t.finish("hopf fiber and point"))
}

fn index_tables() -> Result<Check> {
    let mut t = Tally::default();
    for delta in [1.0, 4.0] {
        for m in 1..=3 {
            let l = l0(delta, m, 2.0 * PI)?;
            for iv in [
                IntervalSpec::closed(0.0, PI)?,
                IntervalSpec::open(0.0, PI)?,
                IntervalSpec::open_closed(0.0, PI)?,
                IntervalSpec::closed(0.0, 2.0 * PI)?,
            ] {
                let want = closed_form_index(delta, m, &iv);
                let got = index_on_interval(&l, &iv, &opts())?;
                t.expect(got.total == want, format!("delta {delta} m {m} {iv}: {} vs {want}", got.total));
                let fixed = ScanOptions {
                    stability_check: false,
                    ..opts()
                };
                let coarse = index_on_interval(&l, &iv, &fixed.with_scan_step(got.scan_step))?.total;
                let fine = index_on_interval(&l, &iv, &fixed.with_scan_step(got.scan_step / 2.0))?.total;
                t.expect(coarse == want && fine == want, format!("delta {delta} m {m} {iv}: step {coarse}, half step {fine}"));
            }
        }
    }
    Ok(t.finish("delta in {1, 4}, m in 1..3, 4 intervals"))
}

fn lytchak() -> Result<Check> {
    let start = Instant::now();
    let mut t = Tally::default();
    let rep = random_suite(SuiteKind::Lytchak, ROOT_SEED, 1000, &opts());
    t.expect(rep.all_pass() && rep.verdicts.len() == 1000, suite_summary(&rep));
    let tight = tight_lytchak_example(&opts())?;
    t.expect(
        tight.pass && tight.lhs == 1.0 && tight.rhs == 1.0 && tight.slack == 0.0,
        format!("tight example {} <= {}", tight.lhs, tight.rhs),
    );
    let secs = start.elapsed().as_secs_f64();
    t.expect(secs < 120.0, format!("runtime {secs:.1} s >= 120 s"));
    Ok(t.finish(format!("{}; {secs:.1} s", suite_summary(&rep))))
}

fn bound_suites() -> Result<Check> {
    let mut t = Tally::default();
    let mut lines = Vec::new();
    for (kind, trials, per_trial) in [
        (SuiteKind::DeltaLower, 200, 3),
        (SuiteKind::ConjUpper, 50, 1),
        (SuiteKind::PeriodicUpper, 40, 5),
    ] {
        let rep = random_suite(kind, ROOT_SEED, trials, &opts());
        t.expect(rep.all_pass() && rep.verdicts.len() as u64 == trials * per_trial, suite_summary(&rep));
        lines.push(suite_summary(&rep));
    }
    Ok(t.finish(lines.join("; ")))
}

fn transverse_fidelity() -> Result<Check> {
    let mut t = Tally::default();
    let mut worst_gap: f64 = 0.0;
    for name in MODEL_NAMES {
        let md = hopf_model(name)?;
        let red = reduce_model(&md, 2.0 * PI)?;
        let gap = red.base_curvature_gap(&md, 64)?;
        worst_gap = worst_gap.max(gap);
        t.expect(gap <= 1e-7, format!("{name}: curvature gap {gap:.3e}"));
        for iv in [
            IntervalSpec::closed(0.0, PI)?,
            IntervalSpec::open_closed(0.0, PI)?,
            IntervalSpec::open(0.0, 2.0 * PI)?,
            IntervalSpec::closed(0.0, 2.0 * PI)?,
        ] {
            let (il, iw, ip) = red.index_triple(&iv, &opts())?;
            t.expect(il == iw + ip, format!("{name} {iv}: {il} != {iw} + {ip}"));
        }
    }
    let rep = random_suite(SuiteKind::Transverse, ROOT_SEED, 100, &opts());
    t.expect(rep.all_pass() && rep.verdicts.len() == 300, suite_summary(&rep));
    Ok(t.finish(format!("worst gap {worst_gap:.2e}; {}", suite_summary(&rep))))
}

fn engine_health() -> Result<Check> {
    let mut t = Tally::default();
    let mut systems: Vec<Arc<JacobiSystem>> = Vec::new();
    for delta in [1.0, 4.0] {
        for m in 1..=3 {
            systems.push(Arc::new(JacobiSystem::constant(delta, m)?));
        }
    }
    for name in MODEL_NAMES {
        let md = hopf_model(name)?;
        systems.push(md.total_system().clone());
        systems.push(md.base_system().clone());
    }
    let (mut worst_def, mut worst_fd): (f64, f64) = (0.0, 0.0);
    for sys in &systems {
        let flow = FundamentalSolution::new(sys.clone(), 0.0, (0.0, 8.0 * PI))?;
        let def = flow.max_symplectic_defect(0.0, 8.0 * PI, 200)?;
        worst_def = worst_def.max(def);
        t.expect(def <= 1e-8, format!("{}: symplectic defect {def:.3e}", sys.label()));
        for i in 1..16 {
            let fd = flow.derivative_check(i as f64 * PI / 2.0 + 0.1, 1e-3)?;
            worst_fd = worst_fd.max(fd);
            t.expect(fd <= 1e-6, format!("{}: derivative check {fd:.3e}", sys.label()));
        }
    }
    Ok(t.finish(format!("{} systems, defect {worst_def:.2e}, derivative {worst_fd:.2e}", systems.len())))
}

fn span_property() -> Result<Check> {
    let mut t = Tally::default();
    for (delta, m) in [(1.0, 2), (4.0, 1), (1.0, 3)] {
        let v = verify_span_property(&l0(delta, m, PI)?, 0.0, delta, &opts())?;
        t.expect(v.pass && v.lhs == m as f64, format!("L_0 delta {delta} m {m}: rank {}", v.lhs));
    }
    for name in MODEL_NAMES {
        let md = hopf_model(name)?;
        let l = submersion_lagrangian(&md)?;
        let v = verify_span_property(&l, 0.0, 1.0, &opts())?;
        t.expect(v.pass && v.lhs == md.total_dim() as f64, format!("{name}: rank {} of {}", v.lhs, md.total_dim()));
    }
    Ok(t.finish("L_0 and 3 lifted Lagrangians"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Check>); 10] = [
        ("theorem A equality on Hopf models", theorem_a_equality),
        ("theorem B and index chain on s3_s2", theorem_b),
        ("foliation focal radius", foliation),
        ("submanifold focal counts", focal_counts),
        ("constant curvature index tables", index_tables),
        ("randomized Lytchak suite", lytchak),
        ("lower and upper bound suites", bound_suites),
        ("transverse reduction fidelity", transverse_fidelity),
        ("engine health", engine_health),
        ("span property", span_property),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let check = run().unwrap_or_else(|e| Check::new(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {:>2} {}: {} ({}) [{secs:.1} s]",
            i + 1,
            if check.pass { "PASS" } else { "FAIL" },
            name,
            check.detail
        );
        failures += usize::from(!check.pass);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
