//! Small dense linear-algebra helpers shared by the field, flow and index code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative rank threshold for subspace algebra (intersections, spans).
pub const RANK_THRESHOLD: f64 = 1e-8;
/// Lower edge of the rank ambiguity band; singular values in
/// `[RANK_BAND_LO, RANK_THRESHOLD] * sigma_max` are undecidable.
pub const RANK_BAND_LO: f64 = 1e-10;
/// Minimum `sigma_min / sigma_max` for a set of vectors to count as a basis.
pub const BASIS_CONDITION: f64 = 1e-8;

/// Singular value decomposition with singular values in descending order and
/// the full set of right singular vectors (kernel included), even when the
/// matrix has fewer rows than columns.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// Columns are right singular vectors, matched to `sigma` and padded with
    /// kernel directions up to the column count of the input.
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn new(mat: &DMatrix<f64>) -> Self {
        Self::nalgebra(mat).unwrap_or_else(|| Self::faer(mat))
    }

    fn padded_square(mat: &DMatrix<f64>) -> DMatrix<f64> {
        let (rows, cols) = mat.shape();
        let mut padded = DMatrix::zeros(rows.max(cols), cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(mat);
        padded
    }

    fn nalgebra(mat: &DMatrix<f64>) -> Option<Self> {
        let work = Self::padded_square(mat);
        let svd = work.clone().try_svd(true, true, f64::EPSILON, 0)?;
        let full = Svd {
            u: svd.u?,
            sigma: svd.singular_values.iter().copied().collect(),
            v: svd.v_t?.transpose(),
        };
        if !full.reproduces(&work) {
            return None;
        }
        Some(Svd {
            u: full.u.rows(0, mat.nrows()).into_owned(),
            ..full
        })
    }

    fn faer(mat: &DMatrix<f64>) -> Self {
        let (rows, cols) = mat.shape();
        let work = Self::padded_square(mat);
        let work = faer::Mat::<f64>::from_fn(work.nrows(), cols, |i, j| work[(i, j)]);
        match work.thin_svd() {
            Ok(svd) => Svd {
                u: DMatrix::from_fn(rows, cols, |i, j| svd.U()[(i, j)]),
                sigma: (0..cols).map(|i| svd.S()[i]).collect(),
                v: DMatrix::from_fn(cols, cols, |i, j| svd.V()[(i, j)]),
            },
            Err(_) => Svd {
                u: DMatrix::from_element(rows, cols, f64::NAN),
                sigma: vec![f64::NAN; cols],
                v: DMatrix::from_element(cols, cols, f64::NAN),
            },
        }
    }

    // nalgebra's bidiagonal SVD occasionally returns factors that do not
    // reproduce rank-deficient inputs; those fall back to faer.
    fn reproduces(&self, mat: &DMatrix<f64>) -> bool {
        let cols = mat.ncols();
        let tol = 1e-12 * (1.0 + self.sigma_max()) * (mat.nrows() + cols) as f64;
        let scaled = DMatrix::from_fn(self.u.nrows(), cols, |i, j| self.u[(i, j)] * self.sigma[j]);
        let recon = (scaled * self.v.transpose() - mat).amax();
        let id = DMatrix::<f64>::identity(cols, cols);
        let orth = (self.v.transpose() * &self.v - &id).amax().max((self.u.transpose() * &self.u - &id).amax());
        recon <= tol && orth <= tol && self.sigma.windows(2).all(|w| w[0] >= w[1])
    }

    /// Least-squares solution of `mat * x = rhs`, dropping singular values
    /// at or below `eps * sigma_max`.
    pub fn solve(&self, rhs: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
        let cut = eps * self.sigma_max();
        let mut coeff = self.u.transpose() * rhs;
        for (i, mut row) in coeff.row_iter_mut().enumerate() {
            let s = self.sigma[i];
            if s > cut && s > 0.0 {
                row /= s;
            } else {
                row.fill(0.0);
            }
        }
        self.v.columns(0, coeff.nrows()) * coeff
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }
}

/// Canonical matrix of the symplectic form on value/derivative pairs:
/// `omega(x, y) = x^T Omega y` with `Omega = [[0, I], [-I, 0]]`.
pub fn omega_matrix(m: usize) -> DMatrix<f64> {
    let mut om = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        om[(i, m + i)] = 1.0;
        om[(m + i, i)] = -1.0;
    }
    om
}

/// `omega(x, y) = <x_val, y_der> - <x_der, y_val>` for stacked 2m-vectors.
pub fn omega(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let m = x.len() / 2;
    let mut acc = 0.0;
    for i in 0..m {
        acc += x[i] * y[m + i] - x[m + i] * y[i];
    }
    acc
}

/// Inverse of a symplectic matrix, `-Omega Phi^T Omega`.
pub fn symplectic_inverse(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = phi.nrows();
    let m = n / 2;
    // Block form: Phi = [[a, b], [c, d]]  =>  Phi^{-1} = [[d^T, -b^T], [-c^T, a^T]].
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..m {
        for j in 0..m {
            inv[(i, j)] = phi[(m + j, m + i)];
            inv[(i, m + j)] = -phi[(j, m + i)];
            inv[(m + i, j)] = -phi[(m + j, i)];
            inv[(m + i, m + j)] = phi[(j, i)];
        }
    }
    inv
}

pub fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    (mat + mat.transpose()) * 0.5
}

pub fn asymmetry(mat: &DMatrix<f64>) -> f64 {
    (mat - mat.transpose()).amax()
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass. Directions and
/// signs of an already orthonormal input are preserved.
pub fn orthonormalize_columns(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = mat.ncols();
    if cols == 0 {
        return Ok(mat.clone());
    }
    for j in 0..cols {
        if mat.column(j).iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("basis vector {j} has non-finite entries")));
        }
        if mat.column(j).norm() == 0.0 {
            return Err(Error::input(format!("basis vector {j} is zero")));
        }
    }
    let mut normalized = mat.clone();
    for mut c in normalized.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let svd = Svd::new(&normalized);
    let ratio = svd.sigma_min() / svd.sigma_max();
    if ratio < BASIS_CONDITION {
        return Err(Error::Conditioning {
            context: "basis independence".into(),
            value: ratio,
            band_lo: 0.0,
            band_hi: BASIS_CONDITION,
        });
    }
    let mut q = normalized;
    for j in 0..cols {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let n = q.column(j).norm();
        q.column_mut(j).unscale_mut(n);
    }
    Ok(q)
}

/// Numerical rank with an ambiguity band relative to the largest singular
/// value. Returns an error rather than guessing when a singular value falls
/// inside `[band_lo, threshold] * sigma_max`.
pub fn numerical_rank(
    sigma: &[f64],
    threshold: f64,
    band_lo: f64,
    context: &str,
) -> Result<usize> {
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    let mut rank = 0;
    for &s in sigma {
        let rel = s / smax;
        if rel > threshold {
            rank += 1;
        } else if rel >= band_lo {
            return Err(Error::Conditioning {
                context: context.to_string(),
                value: rel,
                band_lo,
                band_hi: threshold,
            });
        }
    }
    Ok(rank)
}

/// Orthonormal basis of the orthogonal complement of the column span of an
/// orthonormal `basis`, built by pivoted Gram-Schmidt over the standard basis
/// so the result is deterministic.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let m = basis.nrows();
    let d = basis.ncols();
    let r = m - d;
    let mut out = DMatrix::zeros(m, r);
    let mut candidates: Vec<DVector<f64>> = (0..m)
        .map(|i| {
            let mut e = DVector::zeros(m);
            e[i] = 1.0;
            for k in 0..d {
                let p = basis.column(k).dot(&e);
                e.axpy(-p, &basis.column(k).into_owned(), 1.0);
            }
            e
        })
        .collect();
    for j in 0..r {
        let (best, _) = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });
        let mut v = candidates.swap_remove(best);
        for _pass in 0..2 {
            for k in 0..d {
                let p = basis.column(k).dot(&v);
                v.axpy(-p, &basis.column(k).into_owned(), 1.0);
            }
            for k in 0..j {
                let p = out.column(k).dot(&v);
                v.axpy(-p, &out.column(k).into_owned(), 1.0);
            }
        }
        v.unscale_mut(v.norm());
        out.set_column(j, &v);
        for c in candidates.iter_mut() {
            let p = v.dot(c);
            c.axpy(-p, &v, 1.0);
        }
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(sym)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(sym)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}
