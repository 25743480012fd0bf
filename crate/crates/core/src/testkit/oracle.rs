//! Direct-formula reference implementations. Slow on purpose; tests only.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::linalg::Matrix;

/// X(k) = Σ_n x(n)·e^{−2πikn/N}, with x zero-padded to `n`.
pub fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    // reduce k·t mod n first so the angle stays small and exact
                    let phase = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    Complex64::from_polar(v, phase)
                })
                .sum()
        })
        .collect()
}

pub fn naive_idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| v * Complex64::from_polar(1.0, 2.0 * PI * ((k * t) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// Real cepstrum by the naive DFT pair.
pub fn naive_real_cepstrum(h: &[f64], n: usize) -> Vec<f64> {
    let log_mag: Vec<Complex64> = naive_dft(h, n)
        .iter()
        .map(|c| Complex64::new(c.norm().ln(), 0.0))
        .collect();
    naive_idft(&log_mag).iter().map(|c| c.re).collect()
}

/// Column means with compensated summation.
pub fn kahan_mean(h: &Matrix) -> Vec<f64> {
    (0..h.rows())
        .map(|i| {
            let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
            for &v in h.row(i) {
                let y = v - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            sum / h.cols() as f64
        })
        .collect()
}

/// S(i, j) = Σ_m D(i, m)·D(j, m) / (M − 1), one entry at a time.
pub fn naive_covariance(d: &Matrix) -> Matrix {
    let (n, m) = (d.rows(), d.cols());
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..m {
                acc += d[(i, k)] * d[(j, k)];
            }
            s[(i, j)] = acc / (m as f64 - 1.0);
        }
    }
    s
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .expect("non-empty range");
        if m[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            m.swap(p, k);
            det = -det;
        }
        det *= m[k][k];
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    det
}

fn shifted(a: &Matrix, x: f64) -> Matrix {
    let mut b = a.clone();
    for i in 0..a.rows() {
        b[(i, i)] -= x;
    }
    b
}

/// Eigenvalues of a symmetric matrix as roots of det(A − λI), descending.
///
/// Roots are bracketed by sign changes on a grid over the Gershgorin interval
/// and polished by bisection. Assumes distinct eigenvalues.
pub fn charpoly_eigs(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        lo = lo.min(a[(i, i)] - r);
        hi = hi.max(a[(i, i)] + r);
    }
    let pad = 1e-6 * (hi - lo).abs().max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let p = |x: f64| determinant(&shifted(a, x));
    let mut cells = 1024;
    loop {
        let mut roots = Vec::new();
        let step = (hi - lo) / cells as f64;
        let mut x0 = lo;
        let mut f0 = p(x0);
        for c in 1..=cells {
            let x1 = lo + c as f64 * step;
            let f1 = p(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0.signum() != f1.signum() && f1 != 0.0 {
                let (mut a_, mut b_, mut fa) = (x0, x1, f0);
                for _ in 0..200 {
                    let mid = 0.5 * (a_ + b_);
                    if mid <= a_ || mid >= b_ {
                        break;
                    }
                    let fm = p(mid);
                    if fm == 0.0 {
                        a_ = mid;
                        b_ = mid;
                        break;
                    }
                    if fm.signum() == fa.signum() {
                        a_ = mid;
                        fa = fm;
                    } else {
                        b_ = mid;
                    }
                }
                roots.push(0.5 * (a_ + b_));
            }
            x0 = x1;
            f0 = f1;
        }
        if roots.len() >= n || cells > 1 << 20 {
            roots.sort_by(|x, y| y.total_cmp(x));
            return roots;
        }
        cells *= 8;
    }
}

/// Solves a square system by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .expect("non-empty range");
        m.swap(p, k);
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// β = (XᵀX)⁻¹Xᵀw, formed literally.
pub fn normal_equation_fit(x: &Matrix, w: &[f64]) -> Vec<f64> {
    let (m, n) = (x.rows(), x.cols());
    let mut xtx = Matrix::zeros(n, n);
    let mut xtw = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            xtx[(i, j)] = (0..m).map(|r| x[(r, i)] * x[(r, j)]).sum();
        }
        xtw[i] = (0..m).map(|r| x[(r, i)] * w[r]).sum();
    }
    gauss_solve(&xtx, &xtw)
}

/// Real polynomial coefficients (ascending powers of z⁻¹) with the given zeros.
/// Complex zeros must come in conjugate pairs.
pub fn polynomial_from_zeros(zeros: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &z in zeros {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * z;
        }
        c = next;
    }
    c.iter().map(|v| v.re).collect()
}

/// arg of a + b·e^{−iω} at ω = 2πk/N.
pub fn two_tap_phase(a: f64, b: f64, k: usize, n: usize) -> f64 {
    let w = 2.0 * PI * k as f64 / n as f64;
    (Complex64::new(a, 0.0) + Complex64::from_polar(b, -w)).arg()
}

/// Σ_{n≤K} x(n)² for every K.
pub fn partial_energy(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |acc, v| {
            *acc += v * v;
            Some(*acc)
        })
        .collect()
}
