//! Zero detection for subspaces of Jacobi fields.
//!
//! Let `theta(t)` be the smallest principal angle between the subspace of
//! states `(J(t), J'(t))` and the vertical `{J = 0}`; a field vanishes at `t`
//! exactly when `theta(t) = 0`. The flow moves subspaces at angular speed at
//! most `kappa = max(1, |R|)`, so `[a, b]` holds no zero once
//! `theta(a) + theta(b) > kappa (b - a)`. Grid intervals that fail this test
//! are halved down to a small width; each surviving cluster is refined by
//! bisection on the sign of `d/dt |U(t) x|^2 = 2 <U x, V x>`, with `x` the
//! right singular vector of the smallest singular value of `U(t)`. The
//! multiplicity at a refined root is the number of singular values below
//! `MULT_THRESHOLD` relative to the largest singular value of the full state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSubspace;
use crate::index::interval::IntervalSpec;
use crate::linalg::{self, Svd};

pub const MULT_THRESHOLD: f64 = 1e-7;
/// Singular values in `(MULT_THRESHOLD, MULT_BAND_HI] * scale` are ambiguous.
pub const MULT_BAND_HI: f64 = 1e-6;
pub const DEFAULT_REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroTime {
    pub time: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Grid step; `None` picks `0.1 / sqrt(1 + max(Lambda, 0))` with
    /// `Lambda` the largest sampled eigenvalue of the curvature.
    pub scan_step: Option<f64>,
    pub refine_tol: f64,
    /// Repeat the scan at half the step and require the same total.
    pub stability_check: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            scan_step: None,
            refine_tol: DEFAULT_REFINE_TOL,
            stability_check: true,
        }
    }
}

impl ScanOptions {
    pub fn with_scan_step(mut self, h: f64) -> Self {
        self.scan_step = Some(h);
        self
    }

    /// Distance within which a root is identified with an interval endpoint.
    pub fn snap_tol(&self) -> f64 {
        snap_tol(self.refine_tol)
    }
}

pub(crate) fn snap_tol(refine_tol: f64) -> f64 {
    (100.0 * refine_tol).max(1e-8)
}

struct Probe {
    t: f64,
    /// Smallest principal angle to the vertical.
    theta: f64,
    /// Operator norm of `R(t)`; only sampled on the grid.
    rnorm: f64,
}

fn state_scale(s: &DMatrix<f64>) -> f64 {
    Svd::new(s).sigma_max().max(f64::MIN_POSITIVE)
}

fn probe(w: &FieldSubspace, t: f64, with_curvature: bool) -> Result<Probe> {
    let s = w.states(t)?;
    let m = w.ambient_dim();
    let q = s.qr().q();
    let sv = Svd::new(&q.rows(0, m).into_owned());
    let rnorm = if with_curvature {
        let r = w.system().curvature(t)?;
        linalg::max_eigenvalue(&r).abs().max(linalg::min_eigenvalue(&r).abs())
    } else {
        0.0
    };
    Ok(Probe {
        t,
        theta: sv.sigma_min().clamp(0.0, 1.0).asin(),
        rnorm,
    })
}

/// Whether `[p.t, q.t]` provably holds no zero.
fn excluded(p: &Probe, q: &Probe, kappa: f64) -> bool {
    p.theta + q.theta > kappa * (q.t - p.t)
}

/// Sign of the derivative of the smallest singular value of `U(t)`.
fn slope(w: &FieldSubspace, t: f64) -> Result<f64> {
    let s = w.states(t)?;
    let m = w.ambient_dim();
    let u = s.rows(0, m).into_owned();
    let v = s.rows(m, m).into_owned();
    let sv = Svd::new(&u);
    let d = w.dim();
    let x = sv.v.column(d - 1).into_owned();
    Ok((&u * &x).dot(&(&v * &x)))
}

fn bisect(w: &FieldSubspace, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if slope(w, mid)? > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Grid intervals are halved down to `step / LEAF_SPLIT` before refinement.
const LEAF_SPLIT: f64 = 64.0;
/// Subdivisions of a bracket sampled for slope sign changes.
const BRACKET_SPLIT: usize = 8;

/// Local minima of `sigma_min` in `[a, b]`: every `-`/`+` slope change on a
/// sub-grid is bisected. An end that is also an end of the scanned range is a
/// candidate when the slope points away from the inside.
fn refine(w: &FieldSubspace, a: f64, b: f64, tol: f64, at_lo: bool, at_hi: bool, splits: usize) -> Result<Vec<f64>> {
    let splits = splits.max(BRACKET_SPLIT);
    let ts: Vec<f64> = (0..=splits)
        .map(|j| if j == splits { b } else { a + (b - a) * j as f64 / splits as f64 })
        .collect();
    let sl: Vec<f64> = ts.iter().map(|&t| slope(w, t)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    if at_lo && sl[0] >= 0.0 {
        out.push(a);
    }
    for j in 0..splits {
        if sl[j] < 0.0 && sl[j + 1] >= 0.0 {
            if sl[j + 1] == 0.0 {
                out.push(ts[j + 1]);
            } else {
                out.push(bisect(w, ts[j], ts[j + 1], tol)?);
            }
        }
    }
    if at_hi && sl[splits] <= 0.0 {
        out.push(b);
    }
    Ok(out)
}

/// Kernel dimension of `U(t)` with the ambiguity band; `Ok(None)` when a
/// singular value falls inside the band.
fn kernel_dim(w: &FieldSubspace, t: f64) -> Result<(Option<usize>, f64)> {
    let s = w.states(t)?;
    let m = w.ambient_dim();
    let scale = state_scale(&s);
    let sv = Svd::new(&s.rows(0, m).into_owned());
    let mut k = 0;
    let mut ambiguous = None;
    for &x in sv.sigma.iter().take(w.dim()) {
        let rel = x / scale;
        if rel <= MULT_THRESHOLD {
            k += 1;
        } else if rel <= MULT_BAND_HI {
            ambiguous = Some(rel);
        }
    }
    Ok(match ambiguous {
        Some(rel) => (None, rel),
        None => (Some(k), 0.0),
    })
}

/// `dim ker ev_t`, the number of independent fields of `w` vanishing at `t`.
pub fn index_at_time(w: &FieldSubspace, t: f64) -> Result<usize> {
    check_dims(w)?;
    if w.dim() == 0 {
        return Ok(0);
    }
    match kernel_dim(w, t)? {
        (Some(k), _) => Ok(k),
        (None, rel) => Err(Error::Conditioning {
            context: format!("kernel dimension at t = {t}"),
            value: rel,
            band_lo: MULT_THRESHOLD,
            band_hi: MULT_BAND_HI,
        }),
    }
}

fn check_dims(w: &FieldSubspace) -> Result<()> {
    if w.dim() > w.ambient_dim() {
        return Err(Error::input(format!(
            "zero counting needs dim W <= m (dim {}, m {})",
            w.dim(),
            w.ambient_dim()
        )));
    }
    Ok(())
}

/// Default grid step for `[lo, hi]`.
pub fn default_scan_step(w: &FieldSubspace, lo: f64, hi: f64) -> Result<f64> {
    let lambda = w.system().max_eigenvalue_on(lo, hi)?;
    Ok(0.1 / (1.0 + lambda.max(0.0)).sqrt())
}

/// All zeros on the closed range `[lo, hi]` at a fixed grid step, with
/// warnings for roots that could not be separated.
pub(crate) fn scan(
    w: &FieldSubspace,
    lo: f64,
    hi: f64,
    step: f64,
    refine_tol: f64,
) -> Result<(Vec<ZeroTime>, Vec<String>)> {
    check_dims(w)?;
    let mut warnings = Vec::new();
    if w.dim() == 0 {
        return Ok((Vec::new(), warnings));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::input(format!("scan step must be positive, got {step}")));
    }
    let snap = snap_tol(refine_tol);
    if hi - lo <= snap {
        let k = index_at_time(w, lo)?;
        let zeros = if k > 0 {
            vec![ZeroTime {
                time: lo,
                multiplicity: k,
            }]
        } else {
            Vec::new()
        };
        return Ok((zeros, warnings));
    }
    w.flow().ensure_span(lo, hi)?;
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n)
        .map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 })
        .collect();
    let probes: Vec<Probe> = times.iter().map(|&t| probe(w, t, true)).collect::<Result<_>>()?;
    let h = (hi - lo) / n as f64;
    // Curvature is only sampled, hence the safety factor.
    let kappa = 1.25 * probes.iter().map(|p| p.rnorm).fold(1.0, f64::max);
    let leaf = h / LEAF_SPLIT;

    // Clusters of unexcluded leaves, tagged with their grid interval.
    let mut clusters: Vec<(f64, f64, usize)> = Vec::new();
    for i in 0..n {
        let mut stack = vec![(probes[i].t, probes[i].theta, probes[i].rnorm, probes[i + 1].t, probes[i + 1].theta, probes[i + 1].rnorm)];
        let mut leaves: Vec<(f64, f64)> = Vec::new();
        while let Some((ta, tha, ra, tb, thb, rb)) = stack.pop() {
            let (pa, pb) = (
                Probe { t: ta, theta: tha, rnorm: ra },
                Probe { t: tb, theta: thb, rnorm: rb },
            );
            if excluded(&pa, &pb, kappa) {
                continue;
            }
            if tb - ta <= leaf * 1.0001 {
                leaves.push((ta, tb));
                continue;
            }
            let mid = probe(w, 0.5 * (ta + tb), false)?;
            stack.push((mid.t, mid.theta, mid.rnorm, tb, thb, rb));
            stack.push((ta, tha, ra, mid.t, mid.theta, mid.rnorm));
        }
        leaves.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (a, b) in leaves {
            match clusters.last_mut() {
                Some(last) if last.1 >= a => last.1 = b,
                _ => clusters.push((a, b, i)),
            }
        }
    }

    let mut roots: Vec<(f64, usize, usize)> = Vec::new();
    for &(a, b, i) in &clusters {
        let splits = (4.0 * (b - a) / leaf).round() as usize;
        for cand in refine(w, a, b, refine_tol, a == lo, b == hi, splits)? {
            let mut root = cand;
            let mut kd = kernel_dim(w, root)?;
            if kd.0.is_none() {
                // Re-bisect a tighter neighbourhood of the candidate.
                let r = 2.0 * refine_tol;
                let (lo2, hi2) = ((root - r).max(lo), (root + r).min(hi));
                if slope(w, lo2)? < 0.0 && slope(w, hi2)? > 0.0 {
                    root = bisect(w, lo2, hi2, refine_tol / 10.0)?;
                    kd = kernel_dim(w, root)?;
                }
            }
            let k = match kd {
                (Some(k), _) => k,
                (None, rel) => {
                    return Err(Error::Conditioning {
                        context: format!("zero multiplicity near t = {root}"),
                        value: rel,
                        band_lo: MULT_THRESHOLD,
                        band_hi: MULT_BAND_HI,
                    })
                }
            };
            if k > 0 {
                roots.push((root, k, i));
            }
        }
    }

    roots.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, usize, usize)> = Vec::new();
    for r in roots {
        if let Some(last) = merged.last_mut() {
            if (r.0 - last.0).abs() <= 10.0 * refine_tol {
                if r.2.abs_diff(last.2) > 1 {
                    warnings.push(format!("clustered zeros near t = {:.12}", r.0));
                }
                last.1 = last.1.max(r.1);
                continue;
            }
        }
        merged.push(r);
    }

    let zeros = merged
        .into_iter()
        .map(|(t, k, _)| {
            let time = if (t - lo).abs() <= snap {
                lo
            } else if (t - hi).abs() <= snap {
                hi
            } else {
                t
            };
            ZeroTime { time, multiplicity: k }
        })
        .collect();
    Ok((zeros, warnings))
}

/// Zeros on `[lo, hi]` of an interval, reported regardless of the endpoint flags.
pub fn zero_times(w: &FieldSubspace, interval: &IntervalSpec, opts: &ScanOptions) -> Result<Vec<ZeroTime>> {
    let step = match opts.scan_step {
        Some(h) => h,
        None => default_scan_step(w, interval.lo, interval.hi)?,
    };
    Ok(scan(w, interval.lo, interval.hi, step, opts.refine_tol)?.0)
}

/// Coefficient vectors (columns, in the basis of `w`) of the fields vanishing at `t`.
pub fn kernel_fields(w: &FieldSubspace, t: f64) -> Result<DMatrix<f64>> {
    let k = index_at_time(w, t)?;
    let m = w.ambient_dim();
    let u = w.states(t)?.rows(0, m).into_owned();
    let sv = Svd::new(&u);
    let d = w.dim();
    Ok(sv.v.columns(d - k, k).into_owned())
}
