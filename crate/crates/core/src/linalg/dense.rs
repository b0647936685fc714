//! Dense symmetric eigenvalue kernels: Cholesky, Householder tridiagonalization and
//! implicit-shift QL. Matrices are row-major `n * n` slices.

use crate::error::{Error, Result};

/// In-place Cholesky `M = L L^T`; the lower triangle of `a` receives `L`, the strict
/// upper triangle is zeroed.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::MassNotSpd { pivot: j, value: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// `C = L^{-1} A L^{-T}` for a Cholesky factor `l` (lower triangle used).
pub fn reduce_pencil(a: &[f64], l: &[f64], n: usize) -> Vec<f64> {
    // X = L^{-1} A, column by column; stored transposed so rows are contiguous
    let mut xt = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            let mut s = a[i * n + j];
            for k in 0..i {
                s -= l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        xt[j * n..(j + 1) * n].copy_from_slice(&col);
    }
    // C = L^{-1} X^T; column j of X^T is row j of X, i.e. column j of xt^T
    let mut c = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let mut s = xt[i * n + j];
            for k in 0..i {
                s -= l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        for i in 0..n {
            c[i * n + j] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (c[i * n + j] + c[j * n + i]);
            c[i * n + j] = s;
            c[j * n + i] = s;
        }
    }
    c
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// Returns `(diag, offdiag)` with `offdiag[i]` coupling `i` and `i + 1`
/// (`offdiag.len() == n`, last entry zero). `a` is destroyed.
pub fn tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut e = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let m = k + 1;
        let alpha: f64 = (m..n).map(|i| a[i * n + k] * a[i * n + k]).sum::<f64>().sqrt();
        if alpha == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let x0 = a[m * n + k];
        let beta_sign = if x0 >= 0.0 { -alpha } else { alpha };
        // v = x - beta e1, H = I - 2 v v^T / v^T v maps x to beta e1
        for i in m..n {
            v[i] = a[i * n + k];
        }
        v[m] -= beta_sign;
        let vtv: f64 = (m..n).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            e[k] = x0;
            continue;
        }
        let tau = 2.0 / vtv;
        // p = tau * A22 v
        for i in m..n {
            let row = &a[i * n..i * n + n];
            p[i] = tau * (m..n).map(|j| row[j] * v[j]).sum::<f64>();
        }
        let kk = 0.5 * tau * (m..n).map(|i| v[i] * p[i]).sum::<f64>();
        for i in m..n {
            p[i] -= kk * v[i];
        }
        // A22 -= v p^T + p v^T
        for i in m..n {
            let (vi, pi) = (v[i], p[i]);
            let row = &mut a[i * n..i * n + n];
            for j in m..n {
                row[j] -= vi * p[j] + pi * v[j];
            }
        }
        e[k] = beta_sign;
        for i in m + 1..n {
            a[i * n + k] = 0.0;
            a[k * n + i] = 0.0;
        }
        a[m * n + k] = beta_sign;
        a[k * n + m] = beta_sign;
    }
    if n >= 2 {
        e[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    let d = (0..n).map(|i| a[i * n + i]).collect();
    (d, e)
}

/// Eigenvalues (and optionally eigenvectors) of a symmetric tridiagonal matrix by the
/// implicit-shift QL method.
///
/// `e[i]` couples `i` and `i + 1`. If `z` is given (row-major `n * n`, usually the
/// identity) its columns are rotated into the eigenvectors. Eigenvalues are returned
/// unsorted in `d`.
pub fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    best_residuals: vec![e[l].abs()],
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let zf = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * zf;
                        z[k * n + i] = c * z[k * n + i] - s * zf;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &mut [f64], n: usize) -> Result<Vec<f64>> {
    let (mut d, mut e) = tridiagonalize(a, n);
    tridiagonal_ql(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// All eigenvalues of `A x = lambda M x` with `M` SPD, ascending.
pub fn generalized_eigenvalues(a: &[f64], m: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = m.to_vec();
    cholesky(&mut l, n)?;
    let mut c = reduce_pencil(a, &l, n);
    symmetric_eigenvalues(&mut c, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_ql_recovers_known_spectrum() {
        // 1D Dirichlet Laplacian: 2 - 2 cos(k pi / (n + 1))
        let n = 12;
        let mut d = vec![2.0; n];
        let mut e = vec![-1.0; n];
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        tridiagonal_ql(&mut d, &mut e, Some(&mut z)).unwrap();
        let mut got = d.clone();
        got.sort_by(f64::total_cmp);
        for (k, g) in got.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((g - exact).abs() < 1e-13);
        }
        // columns of z are eigenvectors
        for j in 0..n {
            for i in 0..n {
                let mut tv = 2.0 * z[i * n + j];
                if i > 0 {
                    tv -= z[(i - 1) * n + j];
                }
                if i + 1 < n {
                    tv -= z[(i + 1) * n + j];
                }
                assert!((tv - d[j] * z[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn householder_preserves_trace_and_frobenius() {
        let n = 7;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 31 + j * 17) % 11) as f64 - 5.0;
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let frob: f64 = a.iter().map(|v| v * v).sum();
        let (d, e) = tridiagonalize(&mut a.clone(), n);
        let t2: f64 = d.iter().sum();
        let f2: f64 = d.iter().map(|v| v * v).sum::<f64>() + 2.0 * e.iter().map(|v| v * v).sum::<f64>();
        assert!((trace - t2).abs() < 1e-12);
        assert!((frob - f2).abs() < 1e-10);
    }

    #[test]
    fn diagonal_pencil() {
        let a = [2.0, 0.0, 0.0, -3.0];
        let m = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(generalized_eigenvalues(&a, &m, 2).unwrap(), vec![-3.0, 2.0]);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(cholesky(&mut m, 2), Err(Error::MassNotSpd { pivot: 1, .. })));
    }

    #[test]
    fn generalized_matches_scaled_problem() {
        // A x = lambda (2 I) x  has eigenvalues eig(A) / 2
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, -2.0];
        let m = [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0];
        let g = generalized_eigenvalues(&a, &m, 3).unwrap();
        let s = symmetric_eigenvalues(&mut a.to_vec(), 3).unwrap();
        for (x, y) in g.iter().zip(&s) {
            assert!((x - y / 2.0).abs() < 1e-13);
        }
    }
}
