//! Finite-N simulation: Haar unitaries, Hermitian and unitary Brownian
//! motion, functional calculus and Monte Carlo estimators.
//!
//! Every sample draws from its own [`RngStream`] keyed by `(seed, index)`,
//! so estimates do not depend on the number of worker threads.

use std::f64::consts::PI;

use faer::complex_native::c64;
use faer::linalg::matmul::matmul;
use faer::{Mat, Parallelism, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expansion::FourierSpec;
use crate::ncalg::{cyclic, Factor, Kind, NCPoly, Word};
use crate::numeric::{mean_stderr_c, pairwise_sum_c};

/// Largest Euler step accepted for unitary Brownian motion.
pub const MAX_STEP: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("time step {0} exceeds the limit 1e-2")]
    StepTooLarge(f64),
    #[error("polar projection did not converge (defect {0:e})")]
    Polar(f64),
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("a non-polynomial function needs a self-adjoint polynomial")]
    NotSelfAdjoint,
    #[error("letter {0} has no matrix")]
    Unassigned(String),
    #[error("matrix has size {got}, expected {want}")]
    Size { got: usize, want: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type DenseMatrix = Mat<c64>;

pub fn cx(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

pub fn fx(z: Complex64) -> c64 {
    c64::new(z.re, z.im)
}

/// A ChaCha8 stream selected by `(seed, index)`, with Box–Muller normals.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RngStream { rng, spare: None }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        if let Some(x) = self.spare.take() {
            return x;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Complex normal with `E|z|² = var`.
    pub fn complex_normal(&mut self, var: f64) -> c64 {
        let s = (var / 2.0).sqrt();
        c64::new(s * self.normal(), s * self.normal())
    }
}

pub fn identity(n: usize) -> DenseMatrix {
    Mat::identity(n, n)
}

/// `max |(U*U - I)_{ij}|`.
pub fn unitarity_defect(u: &DenseMatrix) -> f64 {
    let p = u.adjoint() * u;
    max_abs_diff(&p, &identity(u.nrows()))
}

pub fn hermitian_defect(h: &DenseMatrix) -> f64 {
    max_abs_diff(h, &h.adjoint().to_owned())
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a.read(i, j) - b.read(i, j)).abs());
        }
    }
    m
}

/// `(1/N) Tr`.
pub fn ts(a: &DenseMatrix) -> Complex64 {
    let n = a.nrows();
    (0..n).map(|i| cx(a.read(i, i))).sum::<Complex64>() / n as f64
}

/// `(1/N) Tr(AB)` without forming `AB`.
pub fn ts_prod(a: &DenseMatrix, b: &DenseMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += cx(a.read(i, j)) * cx(b.read(j, i));
        }
    }
    acc / n as f64
}

/// Haar unitary: QR of a Ginibre matrix, columns rescaled by `r_kk/|r_kk|`.
pub fn haar_sample(n: usize, rng: &mut RngStream) -> DenseMatrix {
    let g = Mat::from_fn(n, n, |_, _| rng.complex_normal(1.0));
    let qr = g.qr();
    let q = qr.compute_q();
    let r = qr.compute_r();
    Mat::from_fn(n, n, |i, j| {
        let d = r.read(j, j);
        let a = d.abs();
        let ph = if a > 0.0 { c64::new(d.re / a, d.im / a) } else { c64::new(1.0, 0.0) };
        q.read(i, j) * ph
    })
}

/// Increment of Hermitian Brownian motion over `dt`, normalized so that
/// `E[ts(X_t²)] = t`.
pub fn hbm_increment(n: usize, dt: f64, rng: &mut RngStream) -> DenseMatrix {
    let mut h = Mat::<c64>::zeros(n, n);
    let sd = (dt / n as f64).sqrt();
    for i in 0..n {
        h.write(i, i, c64::new(sd * rng.normal(), 0.0));
        for j in i + 1..n {
            let z = rng.complex_normal(dt / n as f64);
            h.write(i, j, z);
            h.write(j, i, z.conj());
        }
    }
    h
}

/// Unitary polar factor by Newton–Schulz, `Y ← ½ Y (3I - Y*Y)`.
pub fn polar_project(m: &DenseMatrix) -> Result<DenseMatrix, RmtError> {
    let mut ws = UbmWorkspace::new(m.nrows());
    ws.y.copy_from(m);
    ws.polar()?;
    Ok(ws.y)
}

/// Buffers for repeated unitary Brownian steps at one size.
pub struct UbmWorkspace {
    n: usize,
    u: DenseMatrix,
    a: DenseMatrix,
    y: DenseMatrix,
    p: DenseMatrix,
}

impl UbmWorkspace {
    pub fn new(n: usize) -> Self {
        UbmWorkspace {
            n,
            u: identity(n),
            a: Mat::zeros(n, n),
            y: Mat::zeros(n, n),
            p: Mat::zeros(n, n),
        }
    }

    pub fn reset(&mut self, u0: &DenseMatrix) {
        self.u.copy_from(u0);
    }

    pub fn current(&self) -> &DenseMatrix {
        &self.u
    }

    fn polar(&mut self) -> Result<(), RmtError> {
        let n = self.n;
        let one = c64::new(1.0, 0.0);
        let mut last = false;
        for _ in 0..60 {
            matmul(self.p.as_mut(), self.y.adjoint(), self.y.as_ref(), None, one, Parallelism::None);
            let mut defect: f64 = 0.0;
            for j in 0..n {
                let col = self.p.col_as_slice_mut(j);
                for (i, v) in col.iter_mut().enumerate() {
                    let d = if i == j { *v - one } else { *v };
                    defect = defect.max(d.abs());
                    // K = (3I - P)/2, stored in place.
                    *v = if i == j { (c64::new(3.0, 0.0) - *v) * 0.5 } else { -*v * 0.5 };
                }
            }
            if defect < 1e-13 {
                return Ok(());
            }
            if defect > 0.5 {
                return Err(RmtError::Polar(defect));
            }
            matmul(self.a.as_mut(), self.y.as_ref(), self.p.as_ref(), None, one, Parallelism::None);
            std::mem::swap(&mut self.a, &mut self.y);
            if last {
                return Ok(());
            }
            // Quadratic convergence: one more update from here lands at rounding level.
            last = defect < 1e-7;
        }
        Err(RmtError::Polar(unitarity_defect(&self.y)))
    }

    /// One Euler step `U ← U + iU·ΔX - ½U·Δt`, projected back to the unitary group.
    pub fn step(&mut self, dt: f64, rng: &mut RngStream) -> Result<(), RmtError> {
        let n = self.n;
        let sd = (dt / n as f64).sqrt();
        let var = dt / n as f64;
        let diag = 1.0 - 0.5 * dt;
        // Upper triangle first, column by column, then mirror; i·ΔX has
        // entries i·z above the diagonal and i·z̄ below.
        for j in 0..n {
            let col = self.a.col_as_slice_mut(j);
            for v in col.iter_mut().take(j) {
                let z = rng.complex_normal(var);
                *v = c64::new(-z.im, z.re);
            }
            col[j] = c64::new(diag, sd * rng.normal());
        }
        for j in 0..n {
            for i in j + 1..n {
                let z = self.a.read(j, i);
                self.a.write(i, j, c64::new(-z.re, z.im));
            }
        }
        matmul(self.y.as_mut(), self.u.as_ref(), self.a.as_ref(), None, c64::new(1.0, 0.0), Parallelism::None);
        self.polar()?;
        std::mem::swap(&mut self.u, &mut self.y);
        Ok(())
    }

    /// Runs `steps` steps of size `dt`.
    pub fn run(&mut self, dt: f64, steps: usize, rng: &mut RngStream) -> Result<(), RmtError> {
        // Splitting a gap into equal steps can overshoot the cap by rounding.
        if dt > MAX_STEP * (1.0 + 1e-12) {
            return Err(RmtError::StepTooLarge(dt));
        }
        for _ in 0..steps {
            self.step(dt, rng)?;
        }
        Ok(())
    }
}

/// One Euler step `U ← U + iU·ΔX - ½U·Δt`, projected back to the unitary group.
pub fn ubm_step(u: &DenseMatrix, dt: f64, rng: &mut RngStream) -> Result<DenseMatrix, RmtError> {
    let mut ws = UbmWorkspace::new(u.nrows());
    ws.reset(u);
    ws.step(dt, rng)?;
    Ok(ws.u)
}

/// Unitary Brownian motion started at `u0`, run for time `t` in `steps` steps.
pub fn ubm_evolve(u0: &DenseMatrix, t: f64, steps: usize, rng: &mut RngStream) -> Result<DenseMatrix, RmtError> {
    if t == 0.0 {
        return Ok(u0.clone());
    }
    let dt = t / steps.max(1) as f64;
    let mut ws = UbmWorkspace::new(u0.nrows());
    ws.reset(u0);
    ws.run(dt, steps, rng)?;
    Ok(ws.u)
}

/// Steps per unit time so that every grid interval of length `h` is a whole
/// number of steps no longer than `dt_max`.
pub fn steps_for(h: f64, dt_max: f64) -> usize {
    (h / dt_max - 1e-9).ceil().max(1.0) as usize
}

/// A unitary Brownian path from `I` recorded at `times` (increasing, from 0),
/// each gap split into steps no longer than `dt_max`.
pub fn ubm_path(
    ws: &mut UbmWorkspace,
    times: &[f64],
    dt_max: f64,
    rng: &mut RngStream,
) -> Result<Vec<DenseMatrix>, RmtError> {
    if dt_max > MAX_STEP {
        return Err(RmtError::StepTooLarge(dt_max));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(RmtError::Invalid("times must be non-negative and increasing".into()));
    }
    ws.reset(&identity(ws.n));
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &s in times {
        let gap = s - t;
        if gap > 0.0 {
            let k = steps_for(gap, dt_max);
            ws.run(gap / k as f64, k, rng)?;
        }
        t = s;
        out.push(ws.u.clone());
    }
    Ok(out)
}

/// `E[ts(U_t^k)]` for `k = 1..=k_max` at each time, over `paths` matrix paths
/// at size `n`. Paths not finished by `deadline` are dropped; the count of
/// finished paths is in each estimate.
pub fn ubm_moments(
    n: usize,
    k_max: usize,
    times: &[f64],
    paths: usize,
    dt_max: f64,
    seed: u64,
    deadline: Option<std::time::Instant>,
) -> Result<Vec<Vec<McEstimate>>, RmtError> {
    let rows: Vec<Option<Vec<Vec<Complex64>>>> = (0..paths)
        .into_par_iter()
        .map_init(
            || UbmWorkspace::new(n),
            |ws, k| {
                if deadline.is_some_and(|d| std::time::Instant::now() >= d) {
                    return Ok(None);
                }
                let mut rng = RngStream::new(seed, k as u64);
                let us = ubm_path(ws, times, dt_max, &mut rng)?;
                Ok(Some(us.iter().map(|u| power_traces(u, k_max)).collect()))
            },
        )
        .collect::<Result<_, RmtError>>()?;
    let done: Vec<&Vec<Vec<Complex64>>> = rows.iter().flatten().collect();
    Ok((0..times.len())
        .map(|ti| {
            (0..k_max)
                .map(|k| McEstimate::from_samples(&done.iter().map(|r| r[ti][k]).collect::<Vec<_>>()))
                .collect()
        })
        .collect())
}

/// `ts(U^k)` for `k = 1..=k_max`.
pub fn power_traces(u: &DenseMatrix, k_max: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(k_max);
    if k_max == 0 {
        return out;
    }
    out.push(ts(u));
    let mut acc = u.clone();
    for k in 2..=k_max {
        out.push(ts_prod(&acc, u));
        if k < k_max {
            acc = &acc * u;
        }
    }
    out
}

/// `f(H)` through the eigendecomposition.
pub fn apply_fn(h: &DenseMatrix, f: &dyn Fn(f64) -> Complex64) -> Result<DenseMatrix, RmtError> {
    let d = hermitian_defect(h);
    let scale = h.norm_max().max(1.0);
    if d > 1e-10 * scale {
        return Err(RmtError::NotHermitian(d));
    }
    let n = h.nrows();
    let evd = h.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    let us = Mat::from_fn(n, n, |i, j| u.read(i, j) * fx(f(s.read(j).re)));
    Ok(&us * u.adjoint())
}

pub fn eigenvalues_hermitian(h: &DenseMatrix) -> Result<Vec<f64>, RmtError> {
    let d = hermitian_defect(h);
    if d > 1e-10 * h.norm_max().max(1.0) {
        return Err(RmtError::NotHermitian(d));
    }
    Ok(h.selfadjoint_eigenvalues(Side::Lower))
}

/// `f(H)` for a function given by a [`FourierSpec`].
pub fn apply_function(h: &DenseMatrix, f: &FourierSpec) -> Result<DenseMatrix, RmtError> {
    match f {
        FourierSpec::Polynomial(m) => {
            let m = *m as i32;
            apply_fn(h, &|x| Complex64::new(x.powi(m), 0.0))
        }
        FourierSpec::Atomic(atoms) => apply_fn(h, &|x| {
            atoms.iter().map(|(y, c)| c * Complex64::from_polar(1.0, x * y)).sum()
        }),
    }
}

/// A matrix argument; diagonal ones are applied by scaling.
#[derive(Clone, Debug)]
pub enum MatOp {
    Dense(DenseMatrix),
    Diag(Vec<c64>),
}

impl MatOp {
    pub fn from_matrix(m: DenseMatrix) -> MatOp {
        let n = m.nrows();
        let off = (0..n).any(|j| (0..n).any(|i| i != j && m.read(i, j) != c64::new(0.0, 0.0)));
        if off {
            MatOp::Dense(m)
        } else {
            MatOp::Diag((0..n).map(|i| m.read(i, i)).collect())
        }
    }

    pub fn size(&self) -> usize {
        match self {
            MatOp::Dense(m) => m.nrows(),
            MatOp::Diag(d) => d.len(),
        }
    }

    pub fn adjoint(&self) -> MatOp {
        match self {
            MatOp::Dense(m) => MatOp::Dense(m.adjoint().to_owned()),
            MatOp::Diag(d) => MatOp::Diag(d.iter().map(|z| z.conj()).collect()),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MatOp::Dense(m) => m.clone(),
            MatOp::Diag(d) => Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { c64::new(0.0, 0.0) }),
        }
    }

    /// `acc · self`.
    fn right_apply(&self, acc: &DenseMatrix) -> DenseMatrix {
        match self {
            MatOp::Dense(m) => acc * m,
            MatOp::Diag(d) => Mat::from_fn(acc.nrows(), acc.ncols(), |i, j| acc.read(i, j) * d[j]),
        }
    }
}

/// Matrices for the letters: `us[i-1]` for `U_i`, `zs[j-1]` for `Z_j`.
#[derive(Clone, Debug)]
pub struct MatrixAssignment {
    pub us: Vec<MatOp>,
    pub zs: Vec<MatOp>,
    us_adj: Vec<MatOp>,
    zs_adj: Vec<MatOp>,
}

impl MatrixAssignment {
    pub fn new(us: Vec<MatOp>, zs: Vec<MatOp>) -> Self {
        let us_adj = us.iter().map(MatOp::adjoint).collect();
        let zs_adj = zs.iter().map(MatOp::adjoint).collect();
        MatrixAssignment { us, zs, us_adj, zs_adj }
    }

    pub fn size(&self) -> usize {
        self.us.first().or(self.zs.first()).map_or(0, MatOp::size)
    }

    fn letter(&self, kind: Kind, index: u16) -> Result<&MatOp, RmtError> {
        let i = index as usize - 1;
        let v = match kind {
            Kind::U => self.us.get(i),
            Kind::V => self.us_adj.get(i),
            Kind::Z => self.zs.get(i),
            Kind::Y => self.zs_adj.get(i),
        };
        v.ok_or_else(|| RmtError::Unassigned(format!("{kind:?}{index}")))
    }
}

fn factor_op(f: &Factor, asg: &MatrixAssignment) -> Result<MatOp, RmtError> {
    match f {
        Factor::L(l) => Ok(asg.letter(l.kind, l.index)?.clone()),
        Factor::E(e) => {
            let h = eval_poly(&e.poly, asg)?;
            let s = e.scalar;
            Ok(MatOp::Dense(apply_fn(&h, &|x| (s * x).exp())?))
        }
    }
}

fn eval_word(w: &Word, asg: &MatrixAssignment) -> Result<DenseMatrix, RmtError> {
    let n = asg.size();
    let mut acc: Option<DenseMatrix> = None;
    for f in &w.0 {
        let op = factor_op(f, asg)?;
        acc = Some(match acc {
            None => op.to_dense(),
            Some(a) => op.right_apply(&a),
        });
    }
    Ok(acc.unwrap_or_else(|| identity(n)))
}

/// `P` evaluated at matrices.
pub fn eval_poly(p: &NCPoly, asg: &MatrixAssignment) -> Result<DenseMatrix, RmtError> {
    let n = asg.size();
    let mut out = Mat::<c64>::zeros(n, n);
    for (w, c) in p.terms() {
        let m = eval_word(w, asg)?;
        out += m * faer::scale(fx(*c));
    }
    Ok(out)
}

/// `ts(P)` evaluated at matrices; the last factor of each word is traced
/// against the prefix.
pub fn trace_poly(p: &NCPoly, asg: &MatrixAssignment) -> Result<Complex64, RmtError> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, c) in p.terms() {
        let k = w.0.len();
        let v = if k == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            let prefix = eval_word(&w.slice(0, k - 1), asg)?;
            match factor_op(&w.0[k - 1], asg)? {
                MatOp::Dense(m) => ts_prod(&prefix, &m),
                MatOp::Diag(d) => {
                    (0..d.len()).map(|i| cx(prefix.read(i, i) * d[i])).sum::<Complex64>() / d.len() as f64
                }
            }
        };
        acc += c * v;
    }
    Ok(acc)
}

/// `ts(A B)` for the product `A B` of two evaluated polynomials.
pub fn ts_of_product(a: &DenseMatrix, b: &DenseMatrix) -> Complex64 {
    ts_prod(a, b)
}

/// `ts f(P)` at the given matrices.
pub fn trace_function(p: &NCPoly, f: &FourierSpec, asg: &MatrixAssignment) -> Result<Complex64, RmtError> {
    match f {
        FourierSpec::Polynomial(m) if *m <= 1 => {
            if *m == 0 {
                Ok(Complex64::new(1.0, 0.0))
            } else {
                trace_poly(p, asg)
            }
        }
        FourierSpec::Polynomial(m) => {
            let x = eval_poly(p, asg)?;
            let mut acc = x.clone();
            for _ in 1..m - 1 {
                acc = &acc * &x;
            }
            Ok(ts_prod(&acc, &x))
        }
        FourierSpec::Atomic(_) => Ok(ts(&apply_function(&eval_poly(p, asg)?, f)?)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: Complex64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_samples(v: &[Complex64]) -> Self {
        let (mean, stderr) = mean_stderr_c(v);
        McEstimate { mean, stderr, samples: v.len() }
    }

    /// `|a - b| / sqrt(σ_a² + σ_b²)` on the real parts, or on the moduli of
    /// the differences when imaginary parts are present.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let s = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        let d = (self.mean - other.mean).norm();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    /// `|mean - x| / stderr`.
    pub fn z_against(&self, x: Complex64) -> f64 {
        let d = (self.mean - x).norm();
        if self.stderr == 0.0 {
            if d < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.stderr
        }
    }
}

/// Per-sample values in index order, in parallel.
pub fn sample_values<F>(samples: usize, seed: u64, f: F) -> Result<Vec<Complex64>, RmtError>
where
    F: Fn(&mut RngStream) -> Result<Complex64, RmtError> + Sync,
{
    (0..samples)
        .into_par_iter()
        .map(|k| f(&mut RngStream::new(seed, k as u64)))
        .collect()
}

/// Monte Carlo estimate of `E[ts f(P(U, Z))]` with independent Haar `U_i`.
pub fn mc_expect_trace(
    p: &NCPoly,
    f: &FourierSpec,
    zs: &[MatOp],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, RmtError> {
    if matches!(f, FourierSpec::Atomic(_)) && !p.is_self_adjoint() {
        return Err(RmtError::NotSelfAdjoint);
    }
    for z in zs {
        if z.size() != n {
            return Err(RmtError::Size { got: z.size(), want: n });
        }
    }
    let (d, _) = p.alphabet();
    let v = sample_values(samples, seed, |rng| {
        let us = (0..d).map(|_| MatOp::Dense(haar_sample(n, rng))).collect();
        trace_function(p, f, &MatrixAssignment::new(us, zs.to_vec()))
    })?;
    Ok(McEstimate::from_samples(&v))
}

/// Settings for [`covariance_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovConfig {
    /// Intervals of the trapezoid rule in `t`.
    pub grid: usize,
    /// Largest Euler step.
    pub dt_max: f64,
    /// Samples for the right-hand side.
    pub rhs_samples: usize,
}

impl Default for CovConfig {
    fn default() -> Self {
        CovConfig { grid: 20, dt_max: 1e-3, rhs_samples: 1000 }
    }
}

/// Both sides of
/// `cov(Tr P(U_T), Tr Q(U_T)) = -(1/N) Σ_i ∫_0^T E[Tr(𝒟_iP(V_t U_{T-t}) 𝒟_iQ(W_t U_{T-t}))] dt`
/// for unitary Brownian motions started at `I`. The left side uses `samples`
/// paths.
#[allow(clippy::too_many_arguments)]
pub fn covariance_check(
    p: &NCPoly,
    q: &NCPoly,
    zs: &[MatOp],
    n: usize,
    t_end: f64,
    samples: usize,
    seed: u64,
    cfg: &CovConfig,
) -> Result<(McEstimate, McEstimate), RmtError> {
    Ok(covariance_check_many(&[(p.clone(), q.clone())], zs, n, t_end, samples, seed, cfg)?.remove(0))
}

/// [`covariance_check`] for several pairs on shared paths.
pub fn covariance_check_many(
    pairs: &[(NCPoly, NCPoly)],
    zs: &[MatOp],
    n: usize,
    t_end: f64,
    samples: usize,
    seed: u64,
    cfg: &CovConfig,
) -> Result<Vec<(McEstimate, McEstimate)>, RmtError> {
    if !(t_end > 0.0) {
        return Err(RmtError::Invalid("T must be positive".into()));
    }
    if samples < 2 || cfg.rhs_samples < 2 || cfg.grid == 0 {
        return Err(RmtError::Invalid("need at least two samples and one interval".into()));
    }
    if cfg.dt_max > MAX_STEP {
        return Err(RmtError::StepTooLarge(cfg.dt_max));
    }
    let d = pairs.iter().map(|(p, q)| p.alphabet().0.max(q.alphabet().0)).max().unwrap_or(0);
    let nf = n as f64;
    let steps = steps_for(t_end, cfg.dt_max);
    let dt = t_end / steps as f64;

    // Left side: (Tr P, Tr Q) at time T.
    let rows: Vec<Vec<(Complex64, Complex64)>> = (0..samples)
        .into_par_iter()
        .map_init(
            || UbmWorkspace::new(n),
            |ws, k| {
                let mut rng = RngStream::new(seed, k as u64);
                let mut us = Vec::with_capacity(d);
                for _ in 0..d {
                    ws.reset(&identity(n));
                    ws.run(dt, steps, &mut rng)?;
                    us.push(MatOp::Dense(ws.current().clone()));
                }
                let asg = MatrixAssignment::new(us, zs.to_vec());
                pairs
                    .iter()
                    .map(|(p, q)| Ok((trace_poly(p, &asg)? * nf, trace_poly(q, &asg)? * nf)))
                    .collect()
            },
        )
        .collect::<Result<_, RmtError>>()?;
    let sf = samples as f64;
    let lhs: Vec<McEstimate> = (0..pairs.len())
        .map(|j| {
            let xs: Vec<Complex64> = rows.iter().map(|r| r[j].0).collect();
            let ys: Vec<Complex64> = rows.iter().map(|r| r[j].1).collect();
            let (mx, my) = (pairwise_sum_c(&xs) / sf, pairwise_sum_c(&ys) / sf);
            let prods: Vec<Complex64> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect();
            let mut e = McEstimate::from_samples(&prods);
            e.mean *= sf / (sf - 1.0);
            e
        })
        .collect();

    // Right side.
    let derivs = |p: &NCPoly| -> Result<Vec<NCPoly>, RmtError> {
        (1..=d)
            .map(|i| cyclic(i, d, p))
            .collect::<Result<_, _>>()
            .map_err(|e| RmtError::Invalid(e.to_string()))
    };
    let ders: Vec<(Vec<NCPoly>, Vec<NCPoly>)> =
        pairs.iter().map(|(p, q)| Ok((derivs(p)?, derivs(q)?))).collect::<Result<_, RmtError>>()?;
    let h = t_end / cfg.grid as f64;
    let grid: Vec<f64> = (0..=cfg.grid).map(|k| k as f64 * h).collect();
    let kk = grid.len();
    let rhs_rows: Vec<Vec<Complex64>> = (0..cfg.rhs_samples)
        .into_par_iter()
        .map_init(
            || UbmWorkspace::new(n),
            |ws, k| {
                let mut rng = RngStream::new(seed ^ 0x5ca1_ab1e, k as u64);
                let mut vs = Vec::with_capacity(d);
                let mut wt = Vec::with_capacity(d);
                let mut uu = Vec::with_capacity(d);
                for _ in 0..d {
                    vs.push(ubm_path(ws, &grid, cfg.dt_max, &mut rng)?);
                    wt.push(ubm_path(ws, &grid, cfg.dt_max, &mut rng)?);
                    uu.push(ubm_path(ws, &grid, cfg.dt_max, &mut rng)?);
                }
                let mut terms = vec![Vec::with_capacity(kk); pairs.len()];
                for k in 0..kk {
                    // U_{T-t_k} is the (K-k)-th grid point of its path.
                    let ax: Vec<MatOp> = (0..d).map(|i| MatOp::Dense(&vs[i][k] * &uu[i][kk - 1 - k])).collect();
                    let ay: Vec<MatOp> = (0..d).map(|i| MatOp::Dense(&wt[i][k] * &uu[i][kk - 1 - k])).collect();
                    let ax = MatrixAssignment::new(ax, zs.to_vec());
                    let ay = MatrixAssignment::new(ay, zs.to_vec());
                    let w = if k == 0 || k == kk - 1 { 0.5 * h } else { h };
                    for (j, (dp, dq)) in ders.iter().enumerate() {
                        let mut s = Complex64::new(0.0, 0.0);
                        for i in 0..d {
                            if dp[i].is_zero() || dq[i].is_zero() {
                                continue;
                            }
                            let a = eval_poly(&dp[i], &ax)?;
                            let b = eval_poly(&dq[i], &ay)?;
                            s += ts_prod(&a, &b) * nf;
                        }
                        terms[j].push(s * w);
                    }
                }
                Ok(terms.iter().map(|t| -pairwise_sum_c(t) / nf).collect())
            },
        )
        .collect::<Result<_, RmtError>>()?;
    Ok(lhs
        .into_iter()
        .enumerate()
        .map(|(j, l)| {
            let v: Vec<Complex64> = rhs_rows.iter().map(|r| r[j]).collect();
            (l, McEstimate::from_samples(&v))
        })
        .collect())
}
