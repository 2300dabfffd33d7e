//! Smallest eigenpair of a sparse symmetric definite pencil `A w = θ M w`.
//!
//! Lanczos with full reorthogonalization runs on `A⁻¹M`, which is
//! self-adjoint in the `M` inner product; its largest Ritz value is `1/θ_min`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::CsrMatrix;

/// Eigen-decomposition of a symmetric tridiagonal matrix by the implicit QL
/// method. Returns eigenvalues and the row-major `n × n` matrix whose
/// columns are the eigenvectors; neither is sorted.
pub(crate) fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    Error::check_len(n.saturating_sub(1), off.len())?;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = math::abs(d[m]) + math::abs(d[m + 1]);
                if math::abs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NotConverged {
                    iterations: iter,
                    residual: math::abs(e[l]),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = math::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = math::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Dense Cholesky of a small SPD matrix (row-major), in place.
pub(crate) fn dense_cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= a[j * n + k] * a[j * n + k];
        }
        if !(s > 0.0) {
            return Err(Error::NotPositiveDefinite { row: j });
        }
        let ljj = math::sqrt(s);
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

pub(crate) fn dense_cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Eigenpair {
    pub value: f64,
    #[allow(dead_code)]
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Smallest eigenpair of `A w = θ M w`. `apply_a` computes `A x`,
/// `solve_a` overwrites `x` with `A⁻¹ x`. The residual is
/// `‖A w - θ M w‖ / (θ ‖M w‖)` for the returned `M`-normalized `w`.
pub(crate) fn smallest_generalized(
    mass: &CsrMatrix,
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    solve_a: &dyn Fn(&mut [f64]),
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Eigenpair> {
    let n = mass.dim();
    Error::check_len(n, start.len())?;
    let max_iter = max_iter.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut mbasis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();

    let mut q = start.to_vec();
    let mut mq = mass.apply(&q);
    let nrm = math::sqrt(math::dot(&q, &mq));
    if !(nrm > 0.0) {
        return Err(Error::invalid("start vector has zero mass norm"));
    }
    q.iter_mut().for_each(|x| *x /= nrm);
    mq.iter_mut().for_each(|x| *x /= nrm);

    let mut best: Option<Eigenpair> = None;
    for it in 0..max_iter {
        let mut w = mq.clone();
        solve_a(&mut w);
        let a = math::dot(&w, &mq);
        basis.push(q);
        mbasis.push(mq);
        alpha.push(a);
        // full reorthogonalization in the M inner product, twice
        for _ in 0..2 {
            for (v, mv) in basis.iter().zip(&mbasis) {
                let c = math::dot(&w, mv);
                math::axpy(-c, v, &mut w);
            }
        }
        let mw = mass.apply(&w);
        let b = math::sqrt(math::dot(&w, &mw).max(0.0));

        let (vals, vecs) = tridiagonal_eigen(&alpha, &beta)?;
        let m = alpha.len();
        let (imax, &top) = vals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        let ritz_est = math::abs(b * vecs[(m - 1) * m + imax]) / math::abs(top);
        if ritz_est < 0.1 * tol || b < 1e-14 || it + 1 == max_iter {
            let mut x = vec![0.0; n];
            for (j, v) in basis.iter().enumerate() {
                math::axpy(vecs[j * m + imax], v, &mut x);
            }
            let mx = mass.apply(&x);
            let xn = math::sqrt(math::dot(&x, &mx));
            x.iter_mut().for_each(|v| *v /= xn);
            let mx: Vec<f64> = mx.iter().map(|v| v / xn).collect();
            let theta = 1.0 / top;
            let ax = apply_a(&x);
            let res: Vec<f64> = ax.iter().zip(&mx).map(|(a, m)| a - theta * m).collect();
            let residual = math::norm2(&res) / (math::abs(theta) * math::norm2(&mx));
            let pair = Eigenpair {
                value: theta,
                vector: x,
                residual,
                iterations: it + 1,
            };
            if residual < tol {
                return Ok(pair);
            }
            best = Some(pair);
            if b < 1e-14 || it + 1 == max_iter {
                break;
            }
        }
        beta.push(b);
        q = w.iter().map(|v| v / b).collect();
        mq = mw.iter().map(|v| v / b).collect();
    }
    let best = best.expect("at least one Ritz pair is evaluated");
    Err(Error::NotConverged {
        iterations: best.iterations,
        residual: best.residual,
    })
}
