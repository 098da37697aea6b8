//! Small numerical helpers: Gauss–Legendre rules, stable sums, sample
//! statistics and weighted least squares.

use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "empty Gauss-Legendre rule");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|&t| a + h * (t + 1.0)).collect(),
        w.iter().map(|&v| v * h).collect(),
    )
}

/// Pairwise summation; the split points depend only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
}

pub fn pairwise_sum_c(v: &[Complex64]) -> Complex64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise_sum_c(&v[..m]) + pairwise_sum_c(&v[m..])
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(v) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Complex mean and standard error (`sqrt(E|X - mean|^2 / n)`).
pub fn mean_stderr_c(v: &[Complex64]) -> (Complex64, f64) {
    let n = v.len();
    if n == 0 {
        return (Complex64::new(f64::NAN, f64::NAN), f64::NAN);
    }
    let mean = pairwise_sum_c(v) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean).norm_sqr()).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Weighted least squares fit `y ≈ Σ_j β_j φ_j(x)`; returns coefficients and
/// their standard errors from `(Φᵀ W Φ)^{-1}` with `W = diag(1/σ²)`.
pub fn weighted_lsq(design: &[Vec<f64>], y: &[f64], sigma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = design.first().map_or(0, Vec::len);
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((row, &yi), &s) in design.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s);
        for j in 0..p {
            b[j] += w * row[j] * yi;
            for k in 0..p {
                a[j][k] += w * row[j] * row[k];
            }
        }
    }
    let inv = invert(&a);
    let beta: Vec<f64> = (0..p).map(|j| (0..p).map(|k| inv[j][k] * b[k]).sum()).collect();
    let se: Vec<f64> = (0..p).map(|j| inv[j][j].max(0.0).sqrt()).collect();
    (beta, se)
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for k in 0..16 {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "k={k}");
        }
        let (x, w) = gauss_legendre_on(40, 0.0, 3.0);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.exp()).sum();
        assert!((s - (3f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn fits() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (s, i) = linear_fit(&xs, &ys);
        assert!((s + 0.5).abs() < 1e-14 && (i - 2.0).abs() < 1e-14);
        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let (b, se) = weighted_lsq(&design, &ys, &[1.0; 4]);
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] + 0.5).abs() < 1e-12);
        assert!(se.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn stats() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let v: Vec<f64> = (0..1000).map(|k| k as f64 * 0.1).collect();
        assert!((pairwise_sum(&v) - 49950.0).abs() < 1e-9);
    }
}
