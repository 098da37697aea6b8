//! Experiment runners. Each returns its tables and optional plots.

use faer::complex_native::c64;
use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;

use super::config::*;
use super::parse::parse_poly;
use super::{svg_errorbars, HarnessError, Table, Value};
use crate::expansion::{
    alpha, alpha0, expansion_fit, fit_seed, matrix_context, pattern_base, patterns_at, AlphaInput, FourierSpec,
    QuadConfig, ZPattern,
};
use crate::freetrace::{comb_mul, expand_ncpoly, Assignment, Evaluator, FreeWord, LinComb, SeriesOptions, TraceError};
use crate::fubm::{moment_by_quadrature, DensityTable};
use crate::indexsets::build_universe;
use crate::ncalg::NCPoly;
use crate::rmt::{
    covariance_check_many, eigenvalues_hermitian, eval_poly, haar_sample, mc_expect_trace, sample_values,
    ts, ts_prod, DenseMatrix, MatOp, MatrixAssignment, McEstimate, RngStream,
};
use crate::weingarten::{exact_word_expectation, series_coefficients};

type Output = (Vec<Table>, Vec<(String, String)>);

fn matops(zs: &[ZPattern], n: usize) -> Result<Vec<MatOp>, HarnessError> {
    Ok(patterns_at(zs, n)?.into_iter().map(MatOp::from_matrix).collect())
}

fn f(x: f64) -> Value {
    Value::Float(x)
}

pub fn run_expand(c: &ExpandConfig) -> Result<Output, HarnessError> {
    let p = parse_poly(&c.poly)?;
    let fs = parse_fspec(&c.f)?;
    let n = c.n.unwrap_or_else(|| pattern_base(&c.zs));
    let zs = patterns_at(&c.zs, n)?;
    let r = alpha(c.order, &AlphaInput::Function { p, f: fs }, &zs, n, &c.quad)?;
    let mut t = Table::new(
        "alpha",
        &["order", "alpha0_re", "alpha0_im", "alpha1_re", "alpha1_im", "quadrature_error", "truncation_t"],
    );
    t.push(vec![
        c.order.into(),
        f(r.alpha0.re),
        f(r.alpha0.im),
        f(r.alpha1.re),
        f(r.alpha1.im),
        f(r.quadrature_error),
        f(r.truncation_t),
    ]);
    Ok((vec![t], vec![]))
}

/// `α₀`, `α₁` (real parts) of `f(P)` at the pattern base size.
pub fn reference_alphas(
    p: &NCPoly,
    fs: &FourierSpec,
    zs: &[ZPattern],
    quad: &QuadConfig,
) -> Result<(f64, f64), HarnessError> {
    let n = pattern_base(zs);
    let r = alpha(1, &AlphaInput::Function { p: p.clone(), f: fs.clone() }, &patterns_at(zs, n)?, n, quad)?;
    Ok((r.alpha0.re, r.alpha1.re))
}

pub fn run_expansion_fit(c: &FitConfig, seed: u64) -> Result<Output, HarnessError> {
    let p = parse_poly(&c.poly)?;
    let fs = parse_fspec(&c.f)?;
    let counts = c.samples.counts(&c.ns)?;
    let reference = if c.reference { Some(reference_alphas(&p, &fs, &c.zs, &c.quad)?) } else { None };
    let r = expansion_fit(&p, &fs, &c.zs, &c.ns, &counts, seed, reference)?;
    let mut pts = Table::new("points", &["n", "samples", "mean_re", "mean_im", "stderr"]);
    for q in &r.points {
        pts.push(vec![q.n.into(), q.samples.into(), f(q.mean.re), f(q.mean.im), f(q.stderr)]);
    }
    let mut sum = Table::new(
        "summary",
        &[
            "intercept",
            "intercept_se",
            "slope",
            "slope_se",
            "residual_slope",
            "alpha0",
            "alpha1",
            "intercept_z",
            "slope_z",
            "insufficient_samples",
        ],
    );
    let nan = f64::NAN;
    sum.push(vec![
        f(r.intercept),
        f(r.intercept_se),
        f(r.slope),
        f(r.slope_se),
        f(r.residual_slope),
        f(r.reference.map_or(nan, |x| x.0)),
        f(r.reference.map_or(nan, |x| x.1)),
        f(r.intercept_z.unwrap_or(nan)),
        f(r.slope_z.unwrap_or(nan)),
        r.insufficient_samples.into(),
    ]);
    let mut plots = Vec::new();
    if c.svg {
        let data: Vec<(f64, f64, f64)> =
            r.points.iter().map(|q| ((q.n as f64).powi(-2), q.mean.re, q.stderr)).collect();
        plots.push(("fit".to_string(), svg_errorbars(&c.poly, "N^-2", &data, Some((r.intercept, r.slope)))));
    }
    Ok((vec![pts, sum], plots))
}

pub fn run_covcheck(c: &CovcheckConfig, seed: u64) -> Result<Output, HarnessError> {
    let pairs: Vec<(NCPoly, NCPoly)> =
        c.pairs.iter().map(|(p, q)| Ok((parse_poly(p)?, parse_poly(q)?))).collect::<Result<_, HarnessError>>()?;
    let zs = matops(&c.zs, c.n)?;
    let res = covariance_check_many(&pairs, &zs, c.n, c.t, c.samples, seed, &c.cov)?;
    let mut t = Table::new(
        "covariance",
        &["p", "q", "lhs_re", "lhs_im", "lhs_se", "rhs_re", "rhs_im", "rhs_se", "z"],
    );
    for ((p, q), (l, r)) in c.pairs.iter().zip(&res) {
        t.push(vec![
            p.as_str().into(),
            q.as_str().into(),
            f(l.mean.re),
            f(l.mean.im),
            f(l.stderr),
            f(r.mean.re),
            f(r.mean.im),
            f(r.stderr),
            f(l.z_score(r)),
        ]);
    }
    Ok((vec![t], vec![]))
}

pub fn run_fubm_density(c: &DensityConfig) -> Result<Output, HarnessError> {
    let table = DensityTable::new(c.t, c.grid)?;
    let mut t = Table::new("density", &["k", "angle", "kappa", "G"]);
    for k in 0..table.angles.len() {
        t.push(vec![k.into(), f(table.angles[k]), f(table.values[k]), f(table.cumulative[k])]);
    }
    let mut s = Table::new("summary", &["t", "grid", "normalization_error", "min_kappa", "moment1", "moment1_exact"]);
    s.push(vec![
        f(c.t),
        c.grid.into(),
        f((table.total() / (2.0 * std::f64::consts::PI) - 1.0).abs()),
        f(table.min_value()),
        f(moment_by_quadrature(1, c.t, &table)?),
        f((-c.t / 2.0).exp()),
    ]);
    Ok((vec![t, s], vec![]))
}

/// Support estimate of the distribution of a self-adjoint `P(u, Z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportEstimate {
    pub intervals: Vec<(f64, f64)>,
    pub nodes: Vec<f64>,
    /// Chebyshev moments computed.
    pub moments: usize,
    /// The moments determine a finitely supported measure.
    pub finite: bool,
    /// Norm bound used to scale `P` into `[-1, 1]`.
    pub radius: f64,
}

impl SupportEstimate {
    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| if x < a { a - x } else if x > b { x - b } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Chebyshev moments `τ(T_k(P/R))`, `k < count`, stopping early if the
/// expansion grows past `max_terms`.
pub fn chebyshev_moments(
    p: &NCPoly,
    zs: &[Mat<c64>],
    n: usize,
    count: usize,
    max_terms: usize,
) -> Result<(Vec<f64>, f64), HarnessError> {
    let (ctx, hs) = matrix_context(zs, n)?;
    let (d, _) = p.alphabet();
    let asg = Assignment::standard(d, &hs, &ctx)?;
    let (comb, _) = expand_ncpoly(p, &asg, &SeriesOptions { max_terms, ..SeriesOptions::default() })?;
    let mut radius = 0.0;
    for (w, c) in p.terms() {
        let mut b = c.norm();
        for fct in &w.0 {
            if let crate::ncalg::Factor::L(l) = fct {
                b *= asg.image(l)?.1;
            }
        }
        radius += b;
    }
    if radius == 0.0 {
        return Ok((vec![1.0], 0.0));
    }
    let scale = |c: &LinComb, s: f64| -> LinComb { c.iter().map(|(w, v)| (w.clone(), v * s)).collect() };
    let x = scale(&comb, 1.0 / radius);
    let mut ev = Evaluator::new(&ctx);
    let mut prev: LinComb = [(FreeWord::one(), Complex64::new(1.0, 0.0))].into_iter().collect();
    let mut cur = x.clone();
    let mut out = vec![1.0, ev.trace_comb(&cur)?.re];
    while out.len() < count {
        let next = match comb_mul(&x, &cur, max_terms) {
            Ok(m) => {
                let mut m = scale(&m, 2.0);
                for (w, v) in &prev {
                    crate::freetrace::comb_add(&mut m, w.clone(), -v);
                }
                m.retain(|_, v| v.norm() > 1e-300);
                m
            }
            Err(TraceError::TooManyTerms(_)) => break,
            Err(e) => return Err(e.into()),
        };
        if next.len() > max_terms {
            break;
        }
        out.push(ev.trace_comb(&next)?.re);
        prev = std::mem::replace(&mut cur, next);
    }
    out.truncate(count);
    Ok((out, radius))
}

/// Jacobi matrix of a measure on `[-1, 1]` from its Chebyshev moments, by
/// the modified Chebyshev algorithm. Stops when `β_k` drops to rounding level.
pub fn jacobi_from_chebyshev(mu: &[f64]) -> (Vec<f64>, Vec<f64>, bool) {
    let len = mu.len();
    if len < 2 {
        return (vec![0.0], vec![mu.first().copied().unwrap_or(1.0)], true);
    }
    // Monic Chebyshev recurrence: a_l = 0, b_1 = 1/2, b_l = 1/4.
    let bl = |l: usize| match l {
        0 => 0.0,
        1 => 0.5,
        _ => 0.25,
    };
    let m: Vec<f64> = (0..len).map(|k| if k == 0 { mu[0] } else { mu[k] / 2f64.powi(k as i32 - 1) }).collect();
    let nmax = len / 2;
    let mut alpha = vec![m[1] / m[0]];
    let mut beta = vec![m[0]];
    let mut sig_prev = vec![0.0; len];
    let mut sig = m.clone();
    let mut finite = false;
    for k in 1..nmax {
        let mut next = vec![0.0; len];
        for l in k..(len - k) {
            next[l] = sig[l + 1] - alpha[k - 1] * sig[l] - beta[k - 1] * sig_prev[l] + bl(l) * sig[l - 1];
        }
        let b = next[k] / sig[k - 1];
        if !(b > 1e-12 * beta[0]) {
            finite = true;
            break;
        }
        alpha.push(next[k + 1] / next[k] - sig[k] / sig[k - 1]);
        beta.push(b);
        sig_prev = std::mem::replace(&mut sig, next);
    }
    (alpha, beta, finite)
}

fn tridiag_eigenvalues(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let t = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            a[i]
        } else if i + 1 == j {
            b[j].sqrt()
        } else if j + 1 == i {
            b[i].sqrt()
        } else {
            0.0
        }
    });
    let mut v = t.selfadjoint_eigenvalues(Side::Lower);
    v.sort_by(f64::total_cmp);
    v
}

/// Gauss nodes of the limiting distribution grouped into intervals: nodes
/// closer than four median gaps are merged, and each interval is widened by
/// its outermost gaps. Finitely supported measures give their atoms.
pub fn reference_support(
    p: &NCPoly,
    zs: &[Mat<c64>],
    n: usize,
    moments: usize,
    max_terms: usize,
) -> Result<SupportEstimate, HarnessError> {
    let (mu, radius) = chebyshev_moments(p, zs, n, moments, max_terms)?;
    if radius == 0.0 {
        return Ok(SupportEstimate { intervals: vec![(0.0, 0.0)], nodes: vec![0.0], moments: 1, finite: true, radius });
    }
    let (a, b, finite) = jacobi_from_chebyshev(&mu);
    let nodes: Vec<f64> = tridiag_eigenvalues(&a, &b).into_iter().map(|x| x * radius).collect();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    if finite {
        for &x in &nodes {
            match intervals.last_mut() {
                Some(last) if x - last.1 < 1e-9 * radius => last.1 = x,
                _ => intervals.push((x, x)),
            }
        }
    } else {
        let gaps: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let mut sorted = gaps.clone();
        sorted.sort_by(f64::total_cmp);
        let med = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
        let mut groups: Vec<(usize, usize)> = vec![(0, 0)];
        for (j, g) in gaps.iter().enumerate() {
            if *g <= 4.0 * med {
                groups.last_mut().unwrap().1 = j + 1;
            } else {
                groups.push((j + 1, j + 1));
            }
        }
        for (lo, hi) in groups {
            let left = if hi > lo { nodes[lo + 1] - nodes[lo] } else { 0.0 };
            let right = if hi > lo { nodes[hi] - nodes[hi - 1] } else { 0.0 };
            intervals.push((nodes[lo] - left, nodes[hi] + right));
        }
    }
    Ok(SupportEstimate { intervals, nodes, moments: mu.len(), finite, radius })
}

fn sample_unitaries(d: usize, n: usize, rng: &mut RngStream) -> Vec<MatOp> {
    (0..d).map(|_| MatOp::Dense(haar_sample(n, rng))).collect()
}

pub fn run_spectrum_confinement(c: &ConfineConfig, seed: u64) -> Result<Output, HarnessError> {
    let p = parse_poly(&c.poly)?;
    let (d, _) = p.alphabet();
    let base = pattern_base(&c.zs);
    let sup = reference_support(&p, &patterns_at(&c.zs, base)?, base, c.moments, c.max_terms)?;
    let mut st = Table::new("support", &["lo", "hi"]);
    for &(a, b) in &sup.intervals {
        st.push(vec![f(a), f(b)]);
    }
    let mut proxy_excess = f64::NAN;
    if c.proxy_n > 0 {
        let zs = matops(&c.zs, c.proxy_n)?;
        let mut rng = RngStream::new(seed, u64::MAX);
        let us = sample_unitaries(d, c.proxy_n, &mut rng);
        let h = eval_poly(&p, &MatrixAssignment::new(us, zs))?;
        proxy_excess = eigenvalues_hermitian(&h)?.iter().map(|&x| sup.distance(x)).fold(0.0, f64::max);
    }
    let mut rt = Table::new("reference", &["moments", "finite", "radius", "proxy_n", "proxy_excess"]);
    rt.push(vec![sup.moments.into(), sup.finite.into(), f(sup.radius), c.proxy_n.into(), f(proxy_excess)]);

    let mut runs = Table::new("runs", &["n", "run", "outliers", "fraction", "max_distance"]);
    let mut summary = Table::new("summary", &["n", "window", "runs", "mean_fraction", "zero_rate", "max_distance"]);
    for &n in &c.ns {
        let zs = matops(&c.zs, n)?;
        let window = (n as f64).powf(-c.exponent);
        let res: Vec<(usize, f64)> = (0..c.runs)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(fit_seed(seed, n), r as u64);
                let us = sample_unitaries(d, n, &mut rng);
                let h = eval_poly(&p, &MatrixAssignment::new(us, zs.clone()))?;
                let ev = eigenvalues_hermitian(&h)?;
                let dist: Vec<f64> = ev.iter().map(|&x| sup.distance(x)).collect();
                Ok((dist.iter().filter(|&&x| x > window).count(), dist.iter().copied().fold(0.0, f64::max)))
            })
            .collect::<Result<_, HarnessError>>()?;
        let mut zero = 0;
        let mut fr = 0.0;
        let mut mx: f64 = 0.0;
        for (r, &(o, m)) in res.iter().enumerate() {
            let frac = o as f64 / n as f64;
            runs.push(vec![n.into(), r.into(), o.into(), f(frac), f(m)]);
            zero += usize::from(o == 0);
            fr += frac;
            mx = mx.max(m);
        }
        let k = c.runs.max(1) as f64;
        summary.push(vec![n.into(), f(window), c.runs.into(), f(fr / k), f(zero as f64 / k), f(mx)]);
    }
    Ok((vec![st, rt, runs, summary], vec![]))
}

pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (p, q) = (a.nrows(), b.nrows());
    Mat::from_fn(p * q, p * q, |i, j| a.read(i / q, j / q) * b.read(i % q, j % q))
}

fn ginibre(m: usize, rng: &mut RngStream) -> DenseMatrix {
    Mat::from_fn(m, m, |_, _| rng.complex_normal(1.0 / m as f64))
}

/// `ts(ABCD)` against `M² E[ts(B W₁ A W₂ D W₁* C W₂*)]` for random `A, B, C, D`.
pub fn tensor_trace_check(m: usize, samples: usize, seed: u64) -> Result<(Complex64, McEstimate), HarnessError> {
    let mut rng = RngStream::new(seed, u64::MAX);
    let (a, b, cc, dd) = (ginibre(m, &mut rng), ginibre(m, &mut rng), ginibre(m, &mut rng), ginibre(m, &mut rng));
    let target = ts(&(&(&a * &b) * &(&cc * &dd)));
    let mf = (m * m) as f64;
    let v = sample_values(samples, seed, |rng| {
        let w1 = haar_sample(m, rng);
        let w2 = haar_sample(m, rng);
        let left = &(&(&b * &w1) * &a) * &(&w2 * &dd);
        let right = &(w1.adjoint() * &cc) * w2.adjoint();
        Ok(ts_prod(&left, &right) * mf)
    })?;
    Ok((target, McEstimate::from_samples(&v)))
}

fn op_norm(h: &DenseMatrix) -> Result<f64, HarnessError> {
    let g = h.adjoint() * h;
    Ok(eigenvalues_hermitian(&g)?.iter().fold(0.0f64, |a, &x| a.max(x)).sqrt())
}

pub fn run_tensor_probe(c: &TensorConfig, seed: u64) -> Result<Output, HarnessError> {
    let (target, est) = tensor_trace_check(c.lemma_m, c.lemma_samples, seed)?;
    let mut lemma = Table::new("lemma", &["m", "samples", "exact_re", "exact_im", "mc_re", "mc_im", "stderr", "z"]);
    lemma.push(vec![
        c.lemma_m.into(),
        c.lemma_samples.into(),
        f(target.re),
        f(target.im),
        f(est.mean.re),
        f(est.mean.im),
        f(est.stderr),
        f(est.z_against(target)),
    ]);
    let p = parse_poly(&c.poly)?;
    let (d, _) = p.alphabet();
    let mut norms = Table::new("norms", &["n", "m", "samples", "mean_norm", "stderr"]);
    for &(n, m) in &c.grid {
        let ys: Vec<MatOp> = patterns_at(&c.zs, m)?
            .iter()
            .map(|y| MatOp::Dense(kron(&Mat::identity(n, n), y)))
            .collect();
        let idm = Mat::<c64>::identity(m, m);
        let v = sample_values(c.samples, fit_seed(seed, n * 1_000_003 + m), |rng| {
            let us: Vec<MatOp> = (0..d).map(|_| MatOp::Dense(kron(&haar_sample(n, rng), &idm))).collect();
            let h = eval_poly(&p, &MatrixAssignment::new(us, ys.clone()))?;
            Ok(Complex64::new(op_norm(&h).map_err(|e| crate::rmt::RmtError::Invalid(e.to_string()))?, 0.0))
        })?;
        let e = McEstimate::from_samples(&v);
        norms.push(vec![n.into(), m.into(), c.samples.into(), f(e.mean.re), f(e.stderr)]);
    }
    Ok((vec![lemma, norms], vec![]))
}

/// `τ(e^{i y P(u)})` for free Haar `u`.
fn free_exp_trace(p: &NCPoly, y: f64) -> Result<Complex64, HarnessError> {
    let q = NCPoly::exp(Complex64::new(0.0, y), p.clone());
    Ok(alpha0(&q, &[], 1, &QuadConfig::default())?.0)
}

pub fn run_conjugation_freeness(c: &FreenessConfig, seed: u64) -> Result<Output, HarnessError> {
    let p = parse_poly(&c.poly)?;
    let (d, _) = p.alphabet();
    let base = pattern_base(&c.matrices);
    let means: Vec<Complex64> =
        c.matrices.iter().map(|z| z.values.iter().sum::<Complex64>() / z.values.len() as f64).collect();
    // Limit of the p = 2 product by freeness: τ(A_i'A_j') |τ(e^{iΔy P})|².
    let limit = if c.indices.len() == 2 {
        let (i, j) = (c.indices[0] - 1, c.indices[1] - 1);
        let ai = patterns_at(&c.matrices[i..=i], base)?.remove(0);
        let aj = patterns_at(&c.matrices[j..=j], base)?.remove(0);
        let cov = ts_prod(&ai, &aj) - means[i] * means[j];
        if i == j {
            cov
        } else {
            cov * free_exp_trace(&p, c.ys[j] - c.ys[i])?.norm_sqr()
        }
    } else {
        Complex64::new(f64::NAN, f64::NAN)
    };
    let mut gaps: Vec<f64> = Vec::new();
    for a in 0..c.ys.len() {
        for b in a + 1..c.ys.len() {
            gaps.push((c.ys[a] - c.ys[b]).abs());
        }
    }
    let gmin = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = gaps.iter().copied().fold(0.0, f64::max);
    let mut t = Table::new(
        "mixed_moment",
        &["n", "samples", "mean_re", "mean_im", "stderr", "limit_re", "limit_im", "z_limit", "window_ok"],
    );
    for &n in &c.ns {
        let amats = patterns_at(&c.matrices, n)?;
        let v = sample_values(c.samples, fit_seed(seed, n), |rng| {
            let us: Vec<MatOp> = sample_unitaries(d, n, rng);
            let h = eval_poly(&p, &MatrixAssignment::new(us, vec![]))?;
            let evd = h.selfadjoint_eigendecomposition(Side::Lower);
            let s = evd.s().column_vector();
            let v = evd.u();
            let centered: Vec<DenseMatrix> = amats
                .iter()
                .zip(&c.ys)
                .zip(&means)
                .map(|((a, &y), &m)| {
                    let vd = Mat::from_fn(n, n, |i, j| {
                        v.read(i, j) * crate::rmt::fx(Complex64::from_polar(1.0, y * s.read(j).re))
                    });
                    let w = &vd * v.adjoint();
                    let mut x = &(&w * a) * w.adjoint();
                    for i in 0..n {
                        x.write(i, i, x.read(i, i) - crate::rmt::fx(m));
                    }
                    x
                })
                .collect();
            let (last, head) = match c.indices.split_last() {
                Some(x) => x,
                None => return Ok(Complex64::new(1.0, 0.0)),
            };
            let Some((first, mid)) = head.split_first() else {
                return Ok(ts(&centered[last - 1]));
            };
            let mut acc = centered[first - 1].clone();
            for &i in mid {
                acc = &acc * &centered[i - 1];
            }
            Ok(ts_prod(&acc, &centered[last - 1]))
        })?;
        let e = McEstimate::from_samples(&v);
        let nf = n as f64;
        let window_ok = gaps.is_empty() || (gmin > 1.0 && gmax < (nf / nf.ln()).sqrt());
        t.push(vec![
            n.into(),
            c.samples.into(),
            f(e.mean.re),
            f(e.mean.im),
            f(e.stderr),
            f(limit.re),
            f(limit.im),
            f(e.z_against(limit)),
            window_ok.into(),
        ]);
    }
    Ok((vec![t], vec![]))
}

pub fn run_oracle(c: &OracleConfig) -> Result<Output, HarnessError> {
    let p = parse_poly(&c.word)?;
    let (w, coef) = p.terms().next().map(|(w, c)| (w.clone(), *c)).ok_or_else(|| HarnessError::Config("empty word".into()))?;
    let mut vals = Table::new("values", &["n", "re", "im"]);
    let mut series = Table::new("series", &["power", "re", "im"]);
    for (k, &n) in c.ns.iter().enumerate() {
        let e = exact_word_expectation(&w, &patterns_at(&c.zs, n)?, n)?;
        let v = e.value_at(n)? * coef;
        vals.push(vec![n.into(), f(v.re), f(v.im)]);
        if k == 0 {
            for (i, a) in series_coefficients(&e, c.order, 1e-9)?.iter().enumerate() {
                let a = a * coef;
                series.push(vec![(2 * i).into(), f(a.re), f(a.im)]);
            }
        }
    }
    Ok((vec![vals, series], vec![]))
}

pub fn run_indexsets(c: &IndexsetsConfig) -> Result<Output, HarnessError> {
    let u = build_universe(c.n)?;
    let mut sets = Table::new("sets", &["branch", "set"]);
    for key in u.branch_keys() {
        let label = key.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(".");
        for s in u.branch(key)? {
            sets.push(vec![label.clone().into(), s.to_string().into()]);
        }
    }
    let mut depth = Table::new("depth", &["element", "depth"]);
    for (x, dp) in u.depth_map() {
        depth.push(vec![(*x as usize).into(), (*dp).into()]);
    }
    let mut s = Table::new("summary", &["n", "sets", "collisions"]);
    s.push(vec![c.n.into(), u.all_sets.len().into(), u.collisions.into()]);
    Ok((vec![sets, depth, s], vec![]))
}

/// A fixed battery of quick checks.
pub fn run_selftest(seed: u64) -> Result<Output, HarnessError> {
    let mut t = Table::new("checks", &["check", "value", "expected", "error", "pass"]);
    let mut add = |name: &str, v: f64, e: f64, tol: f64| {
        let err = (v - e).abs();
        t.push(vec![name.into(), f(v), f(e), f(err), (err <= tol).into()]);
    };
    let p = parse_poly("(0.5-1.25i) U1 Z1 U1* Z2* + 3 + U2^2")?;
    add("parse_round_trip", f64::from(u8::from(parse_poly(&p.to_string())? == p)), 1.0, 0.0);

    let uv = parse_poly("U1 + U1*")?;
    let a = alpha(0, &AlphaInput::Poly(uv.pow(2)), &[], 1, &QuadConfig::default())?;
    add("alpha0_x2", a.alpha0.re, 2.0, 1e-12);

    let word = parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1")?;
    let z = ZPattern::sign_split();
    let zs = patterns_at(std::slice::from_ref(&z), 2)?;
    let a = alpha(1, &AlphaInput::Poly(word.clone()), &zs, 2, &QuadConfig { nodes: 8, ..QuadConfig::default() })?;
    add("alpha1_headline", a.alpha1.re, -1.0, 1e-3);

    let (w, _) = word.terms().next().unwrap();
    let e = exact_word_expectation(w, &zs, 2)?;
    add("weingarten_a1", series_coefficients(&e, 1, 1e-9)?[1].re, -1.0, 1e-12);

    let table = DensityTable::new(10.0, 1024)?;
    add("fubm_moment1", moment_by_quadrature(1, 10.0, &table)?, (-5.0f64).exp(), 1e-6);

    let z8 = matops(std::slice::from_ref(&z), 8)?;
    let k1 = parse_poly("U1 Z1 U1* Z1")?;
    let est = mc_expect_trace(&k1, &FourierSpec::Polynomial(1), &z8, 8, 2000, seed)?;
    add("mc_uzuz_z", est.z_against(Complex64::new(0.0, 0.0)), 0.0, 4.0);

    add("index_sets_j2", build_universe(2)?.all_sets.len() as f64, 48.0, 0.0);
    Ok((vec![t], vec![]))
}
