//! Small dense kernels: Cholesky, symmetric eigenvalues, symmetrization.
//!
//! Matrices here are at most a few hundred on a side, so plain loops over
//! `ndarray` storage are adequate and keep results bit-reproducible.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    lower: Array2<F>,
    /// `Lᵀ`, kept so both triangular solves walk contiguous rows.
    upper: Array2<F>,
}

impl<F: Scalar> Cholesky<F> {
    /// Factorizes a symmetric matrix; only the lower triangle is read.
    pub fn new(a: ArrayView2<'_, F>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<F>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        let upper = l.t().as_standard_layout().into_owned();
        Ok(Self { lower: l, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<F> {
        &self.lower
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [F]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let l = self.lower.as_slice().expect("standard layout");
        let u = self.upper.as_slice().expect("standard layout");
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let s = row.iter().zip(&x[..i]).fold(x[i], |s, (&a, &b)| s - a * b);
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let row = &u[i * n + i + 1..(i + 1) * n];
            let s = row.iter().zip(&x[i + 1..]).fold(x[i], |s, (&a, &b)| s - a * b);
            x[i] = s / u[i * n + i];
        }
    }

    pub fn solve(&self, b: ArrayView1<'_, F>) -> Array1<F> {
        let mut x = b.to_owned();
        self.solve_in_place(x.as_slice_mut().expect("owned array is contiguous"));
        x
    }

    /// `A⁻¹`, symmetrized exactly.
    pub fn inverse(&self) -> Array2<F> {
        let n = self.dim();
        let mut inv = Array2::<F>::zeros((n, n));
        let mut col = vec![F::zero(); n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = F::zero());
            col[j] = F::one();
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[[i, j]] = col[i];
            }
        }
        symmetrize(&mut inv);
        inv
    }

    /// `log |A|`.
    pub fn log_det(&self) -> F {
        let two = F::lit(2.0);
        self.lower.diag().iter().map(|&d| two * d.ln()).sum()
    }
}

/// Replaces `a` by `(a + aᵀ) / 2`.
pub fn symmetrize<F: Scalar>(a: &mut Array2<F>) {
    let n = a.nrows();
    let half = F::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a[[i, j]] + a[[j, i]]) * half;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Largest elementwise absolute difference.
pub fn max_abs_diff<F: Scalar>(a: ArrayView2<'_, F>, b: ArrayView2<'_, F>) -> F {
    let mut m = F::zero();
    Zip::from(a).and(b).for_each(|&x, &y| {
        let d = (x - y).abs();
        if d > m || d.is_nan() {
            m = d;
        }
    });
    m
}

pub fn max_asymmetry<F: Scalar>(a: ArrayView2<'_, F>) -> F {
    let n = a.nrows();
    let mut m = F::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    m
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<F: Scalar>(a: ArrayView2<'_, F>) -> Array1<F> {
    let n = a.nrows();
    let mut m = a.to_owned();
    symmetrize(&mut m);
    let eps = F::epsilon();
    for _sweep in 0..100 {
        let mut off = F::zero();
        let mut diag = F::zero();
        for i in 0..n {
            diag += m[[i, i]] * m[[i, i]];
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off <= eps * eps * diag || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<F> = m.diag().to_vec();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Array1::from(ev)
}

pub fn min_eigenvalue<F: Scalar>(a: ArrayView2<'_, F>) -> F {
    let ev = symmetric_eigenvalues(a);
    ev.first().copied().unwrap_or_else(F::nan)
}
