//! Eigenvalues of small dense matrices: balancing, Householder reduction to
//! upper-Hessenberg form, then Francis double-shift QR.
//!
//! Validation utility only; the solvers never need spectra.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const MAX_DIM: usize = 128;

const MAX_SWEEPS_PER_ROOT: usize = 60;

pub fn eigen_spectrum(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::InvalidConfig(format!("eigenvalues need a square matrix, got {}x{}", n, a.cols())));
    }
    if n > MAX_DIM {
        return Err(Error::InvalidConfig(format!("eigen utility is capped at n = {MAX_DIM}, got {n}")));
    }
    if !a.is_finite() {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    balance(&mut h);
    to_hessenberg(&mut h);
    hessenberg_qr(&mut h)
}

/// Diagonal similarity by powers of two so rows and columns have comparable
/// norms.
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let ginv = 1.0 / f;
                a[i].iter_mut().for_each(|x| *x *= ginv);
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
}

fn to_hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let len = n - k - 1;
        let x_norm = (k + 1..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if x_norm == 0.0 {
            continue;
        }
        let x0 = a[k + 1][k];
        let alpha = if x0 >= 0.0 { -x_norm } else { x_norm };
        for (t, i) in (k + 1..n).enumerate() {
            v[t] = a[i][k];
        }
        v[0] -= alpha;
        let v_norm = v[..len].iter().map(|x| x * x).sum::<f64>().sqrt();
        if v_norm == 0.0 {
            continue;
        }
        v[..len].iter_mut().for_each(|x| *x /= v_norm);

        // A ← (I - 2vvᵀ) A on rows k+1..n.
        for j in k..n {
            let s: f64 = (0..len).map(|t| v[t] * a[k + 1 + t][j]).sum();
            for t in 0..len {
                a[k + 1 + t][j] -= 2.0 * v[t] * s;
            }
        }
        // A ← A (I - 2vvᵀ) on columns k+1..n.
        for row in a.iter_mut() {
            let s: f64 = (0..len).map(|t| row[k + 1 + t] * v[t]).sum();
            for t in 0..len {
                row[k + 1 + t] -= 2.0 * s * v[t];
            }
        }
        a[k + 1][k] = alpha;
        for row in a.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper-Hessenberg matrix, destroying it.
fn hessenberg_qr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = a.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(out);
    }
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for (i, row) in a.iter().enumerate() {
        for x in &row[i.saturating_sub(1)..] {
            anorm += x.abs();
        }
    }

    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let u = nn as usize;
            let mut l = u;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= eps * s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[u][u];
            if l == u {
                out[u] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[u - 1][u - 1];
            let mut w = a[u][u - 1] * a[u - 1][u];
            if l == u - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let zr = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + zr.copysign(p);
                    out[u - 1] = Complex64::new(x + z, 0.0);
                    out[u] = if z != 0.0 {
                        Complex64::new(x - w / z, 0.0)
                    } else {
                        Complex64::new(x + z, 0.0)
                    };
                } else {
                    out[u - 1] = Complex64::new(x + p, zr);
                    out[u] = Complex64::new(x + p, -zr);
                }
                nn -= 2;
                break;
            }
            if its == MAX_SWEEPS_PER_ROOT {
                return Err(Error::Numerical(format!(
                    "QR iteration did not converge: {} of {n} eigenvalues deflated, active block 0..={u}",
                    n - 1 - u
                )));
            }
            if its == 10 || its == 20 || its == 40 {
                t += x;
                for (i, row) in a.iter_mut().enumerate().take(u + 1) {
                    row[i] -= x;
                }
                let s = a[u][u - 1].abs() + a[u - 1][u - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            let (mut p, mut q, mut r);
            let mut m = u - 2;
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let uu = a[m][m - 1].abs() * (q.abs() + r.abs());
                let vv = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if uu <= eps * vv {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=u {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < u {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != u - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=u {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != u - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = u.min(k + 3);
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != u - 1 {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}
