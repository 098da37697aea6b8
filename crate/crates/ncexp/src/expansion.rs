//! The operators `L` and the coefficients `α₀`, `α₁` of the `1/N²` expansion
//! of `E[ts_N(Q(U^N, Z^N))]`.
//!
//! For `Q` of order `n` (letters `U_{i,I}` with `I ∈ J_n`) and `s ∈ [1, 2n+1]`,
//!
//! `L_s(Q) = ½ Σ_{i,j} Σ_{I,J} A2(X_{s,1}) A1(X̃_{s,1}) B2(X̃_{s,2}) B1(X_{s,2})`
//!
//! where `δ_{β,i} 𝒟_{ρ,i} Q = Σ c A ⊗ B`, `δ_{δ,j,I} A = Σ A1 ⊗ A2`,
//! `δ_{γ,j,J} B = Σ B1 ⊗ B2`, the pairs `(I, J)` agree from position `s` on,
//! and evaluating at `X_{s,v}` (resp. `X̃_{s,v}`) replaces every tag `K` by
//! `F^{s,v}(K)` (resp. `F̃^{s,v}(K)`).

use std::collections::BTreeSet;
use std::sync::Arc;

use faer::complex_native::c64;
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freetrace::{
    expand_ncpoly, Assignment, Evaluator, FreeAtom, FreeWord, SeriesOptions, Time, TraceContext,
    TraceError,
};
use crate::indexsets::{apply_map, IndexError, IndexSet, Variant};
use crate::ncalg::{delta_alpha_sel, delta_word, ExpAtom, Factor, Kind, Letter, NCPoly, Selector, Word};
use crate::numeric::{gauss_legendre_on, linear_fit, pairwise_sum_c, weighted_lsq};
use crate::rmt::{eigenvalues_hermitian, hbm_increment, mc_expect_trace, MatOp, RngStream};

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("order {0} is not supported (max {1})")]
    UnsupportedOrder(usize, usize),
    #[error("position s = {s} outside [1, {max}]")]
    BadPosition { s: usize, max: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("quadrature error estimate {0:e} exceeds tolerance {1:e}")]
    Tolerance(f64, f64),
    #[error("all matrices must have size {0}")]
    MatrixSize(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Largest order `n` for which `L_s^n` is built symbolically.
pub const MAX_SYMBOLIC_ORDER: usize = 2;

/// One term of `L_s`: a coefficient and the four slot words, in the order
/// `X_{s,1}, X̃_{s,1}, X̃_{s,2}, X_{s,2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTerm {
    pub coef: Complex64,
    pub slots: [Word; 4],
}

/// The four slot evaluations of `L_s`.
pub const SLOT_VARIANTS: [Variant; 4] = [Variant::F1, Variant::Ft1, Variant::Ft2, Variant::F2];

/// Sorted times `t̃` and the gap sequence for a time vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeVector {
    pub times: Vec<f64>,
}

impl TimeVector {
    /// Checks the constraints of `A_i`.
    pub fn new(times: Vec<f64>) -> Result<Self, ExpansionError> {
        if !times.len().is_multiple_of(2) {
            return Err(ExpansionError::Invalid("odd number of times".into()));
        }
        let i = times.len() / 2;
        for s in 1..=i {
            let (a, b) = (times[2 * s - 2], times[2 * s - 1]);
            if !(a >= 0.0 && a <= b) {
                return Err(ExpansionError::Invalid(format!("t{} not in [0, t{}]", 2 * s - 1, 2 * s)));
            }
            if s > 1 && times[2 * s - 1] < times[2 * s - 3] {
                return Err(ExpansionError::Invalid("even times must increase".into()));
            }
        }
        Ok(TimeVector { times })
    }

    pub fn order(&self) -> usize {
        self.times.len() / 2
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.times.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `t̃_l - t̃_{l-1}` for `l = 1..2i`.
    pub fn gaps(&self) -> Vec<f64> {
        let s = self.sorted();
        let mut prev = 0.0;
        s.iter()
            .map(|&t| {
                let g = t - prev;
                prev = t;
                g
            })
            .collect()
    }
}

/// Which `L_s` is active for `t_{2n+1}` given the sorted first `2n` times:
/// `s` with `t ∈ [t̃_{s-1}, t̃_s)`, and `2n+1` beyond `t̃_{2n}`.
pub fn active_position(sorted_prefix: &[f64], t: f64) -> usize {
    let mut prev = 0.0;
    for (k, &ts) in sorted_prefix.iter().enumerate() {
        if t >= prev && t < ts {
            return k + 1;
        }
        prev = ts;
    }
    sorted_prefix.len() + 1
}

fn tags_of(w: &Word, i: usize) -> BTreeSet<IndexSet> {
    let mut out = BTreeSet::new();
    fn walk(w: &Word, i: usize, out: &mut BTreeSet<IndexSet>) {
        for f in &w.0 {
            match f {
                Factor::L(l) if l.kind.is_unitary() && l.index as usize == i => {
                    out.insert(l.tag);
                }
                Factor::L(_) => {}
                Factor::E(e) => {
                    for (ww, _) in e.poly.terms() {
                        walk(ww, i, out);
                    }
                }
            }
        }
    }
    walk(w, i, &mut out);
    out
}

fn tails_match(a: &IndexSet, b: &IndexSet, s: usize) -> bool {
    let n2 = a.len();
    (s.max(1)..=n2).all(|l| a.get(l) == b.get(l))
}

/// The slot terms of `L_s^n(Q)` at Duhamel parameters `(ρ, β, γ, δ)`.
/// For polynomial `Q` the result does not depend on them.
pub fn slot_terms(
    s: usize,
    n: usize,
    q: &NCPoly,
    d: usize,
    params: [f64; 4],
) -> Result<Vec<SlotTerm>, ExpansionError> {
    if n > MAX_SYMBOLIC_ORDER {
        return Err(ExpansionError::UnsupportedOrder(n, MAX_SYMBOLIC_ORDER));
    }
    if s == 0 || s > 2 * n + 1 {
        return Err(ExpansionError::BadPosition { s, max: 2 * n + 1 });
    }
    let [rho, beta, gamma, dl] = params;
    let mut out = Vec::new();
    for i in 1..=d {
        let cyc = delta_alpha_sel(Selector::plain(i), rho, q).m();
        if cyc.is_zero() {
            continue;
        }
        let t = delta_alpha_sel(Selector::plain(i), beta, &cyc);
        for (a, b, c) in t.terms() {
            for j in 1..=d {
                let ta = tags_of(a, j);
                let tb = tags_of(b, j);
                for ti in &ta {
                    for tj in &tb {
                        if !tails_match(ti, tj, s) {
                            continue;
                        }
                        let da = delta_word(Selector::tagged(j, *ti), dl, a);
                        if da.is_zero() {
                            continue;
                        }
                        let db = delta_word(Selector::tagged(j, *tj), gamma, b);
                        for (a1, a2, ca) in da.terms() {
                            for (b1, b2, cb) in db.terms() {
                                out.push(SlotTerm {
                                    coef: c * ca * cb * 0.5,
                                    slots: [a2.clone(), a1.clone(), b2.clone(), b1.clone()],
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Replace every tag `K` by `variant^s(K)` (order `n` → `n+1`).
pub fn retag(w: &Word, variant: Variant, s: usize) -> Result<Word, ExpansionError> {
    let mut out = Vec::with_capacity(w.0.len());
    for f in &w.0 {
        out.push(match f {
            Factor::L(l) if l.kind.is_unitary() => {
                Factor::L(Letter { tag: apply_map(variant, s, &l.tag)?, ..*l })
            }
            Factor::L(l) => Factor::L(*l),
            Factor::E(e) => {
                let mut p = NCPoly::zero();
                for (ww, c) in e.poly.terms() {
                    p.add_term(retag(ww, variant, s)?, *c);
                }
                Factor::E(Arc::new(ExpAtom::new(e.scalar, p)))
            }
        });
    }
    Ok(Word(out))
}

/// `⊠`: evaluate each slot word in its family and concatenate.
pub fn boxtimes_eval(terms: &[SlotTerm], s: usize) -> Result<NCPoly, ExpansionError> {
    let mut p = NCPoly::zero();
    for t in terms {
        let mut w = Word::unit();
        for (slot, v) in t.slots.iter().zip(SLOT_VARIANTS) {
            w = w.concat(&retag(slot, v, s)?);
        }
        p.add_term(w, t.coef);
    }
    Ok(p)
}

/// `L_s^n(Q)` as a polynomial of order `n+1`.
pub fn build_l(
    s: usize,
    n: usize,
    q: &NCPoly,
    d: usize,
    params: [f64; 4],
) -> Result<NCPoly, ExpansionError> {
    boxtimes_eval(&slot_terms(s, n, q, d, params)?, s)
}

/// Images of the tagged letters at sorted times: `U_{i,I} ↦ Π_l u^{I_l}_{i,gap_l} · u_i`.
pub fn tagged_assignment(
    q: &NCPoly,
    gaps: &[f64],
    zs: &[u16],
    ctx: &TraceContext,
) -> Result<Assignment, ExpansionError> {
    let mut asg = Assignment::new();
    for l in q.letters() {
        if !l.kind.is_unitary() {
            continue;
        }
        let base = Letter { kind: Kind::U, ..l };
        if l.tag.len() != gaps.len() {
            return Err(ExpansionError::Invalid(format!(
                "letter {l} has {} tags but {} time gaps were supplied",
                l.tag.len(),
                gaps.len()
            )));
        }
        let mut w = FreeWord::one();
        for (pos, &g) in gaps.iter().enumerate() {
            w.push(
                FreeAtom::Fubm { family: l.tag.get(pos + 1), dir: l.index, time: Time::new(g) },
                1,
            );
        }
        w.push(FreeAtom::Haar(l.index), 1);
        asg.set_unitary(base, w);
    }
    for (j, &h) in zs.iter().enumerate() {
        asg.set_matrix(j + 1, h, ctx)?;
    }
    Ok(asg)
}

/// How a function enters: `f(x) = x^m` or `f(x) = Σ c_j e^{i x y_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FourierSpec {
    Polynomial(u32),
    Atomic(Vec<(f64, Complex64)>),
}

impl FourierSpec {
    /// Whether `f` is real on the real line.
    pub fn is_self_adjoint(&self) -> bool {
        match self {
            FourierSpec::Polynomial(_) => true,
            FourierSpec::Atomic(v) => v.iter().all(|(y, c)| {
                v.iter()
                    .any(|(y2, c2)| (*y2 + *y).abs() < 1e-15 && (*c2 - c.conj()).norm() < 1e-15)
            }),
        }
    }

    /// The elements `Q` whose traces are summed, with weights.
    pub fn inputs(&self, p: &NCPoly) -> Vec<(Complex64, NCPoly)> {
        match self {
            FourierSpec::Polynomial(m) => vec![(Complex64::new(1.0, 0.0), p.pow(*m as usize))],
            FourierSpec::Atomic(v) => v
                .iter()
                .map(|(y, c)| (*c, NCPoly::exp(Complex64::new(0.0, *y), p.clone())))
                .collect(),
        }
    }
}

/// Quadrature settings for `α₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes per time axis.
    pub nodes: usize,
    /// Scale `a` of the map `τ = -a ln(1 - x)`.
    pub scale: f64,
    /// Gauss–Legendre nodes per Duhamel parameter (exponential inputs only).
    pub alpha_nodes: usize,
    /// Abort if the error estimate exceeds this.
    pub tolerance: Option<f64>,
    /// Truncation of exponential series.
    pub series_order: usize,
    pub series_tolerance: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            nodes: 32,
            scale: 4.0,
            alpha_nodes: 8,
            tolerance: None,
            series_order: 30,
            series_tolerance: 1e-8,
        }
    }
}

impl QuadConfig {
    fn series(&self) -> SeriesOptions {
        SeriesOptions {
            max_order: self.series_order,
            tolerance: self.series_tolerance,
            ..SeriesOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub alpha0: Complex64,
    pub alpha1: Complex64,
    /// Difference between the full and the half-size rule, plus series error.
    pub quadrature_error: f64,
    /// Largest time node used.
    pub truncation_t: f64,
}

/// Build the context holding `zs` and return their handles.
pub fn matrix_context(zs: &[Mat<c64>], n: usize) -> Result<(TraceContext, Vec<u16>), ExpansionError> {
    let mut ctx = TraceContext::new(n);
    let mut hs = Vec::new();
    for z in zs {
        if z.nrows() != n || z.ncols() != n {
            return Err(ExpansionError::MatrixSize(n));
        }
        hs.push(ctx.add_matrix(z.clone()));
    }
    Ok((ctx, hs))
}

/// `α₀(Q) = τ(Q(u, Z))` with free Haar `u`.
pub fn alpha0(q: &NCPoly, zs: &[Mat<c64>], n: usize, cfg: &QuadConfig) -> Result<(Complex64, f64), ExpansionError> {
    let (ctx, hs) = matrix_context(zs, n)?;
    let (d, _) = q.alphabet();
    let asg = Assignment::standard(d, &hs, &ctx)?;
    let (comb, err) = expand_ncpoly(q, &asg, &cfg.series())?;
    let mut ev = Evaluator::new(&ctx);
    Ok((ev.trace_comb(&comb)?, err))
}

/// Per-node evaluation of `τ(L(Q)(u^{T_1}, Z))` at `t1 = τ1`, `t2 = τ1 + τ2`.
pub struct Alpha1Integrand<'a> {
    ctx: &'a TraceContext,
    handles: Vec<u16>,
    /// `L_1^0(Q)` at each Duhamel node, with its weight.
    ls: Vec<(f64, NCPoly)>,
    series: SeriesOptions,
}

impl<'a> Alpha1Integrand<'a> {
    pub fn new(
        q: &NCPoly,
        ctx: &'a TraceContext,
        handles: Vec<u16>,
        cfg: &QuadConfig,
    ) -> Result<Self, ExpansionError> {
        let (d, _) = q.alphabet();
        let ls = if q.has_exp() {
            let (x, w) = gauss_legendre_on(cfg.alpha_nodes, 0.0, 1.0);
            let m = x.len();
            let mut v = Vec::with_capacity(m.pow(4));
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        for e in 0..m {
                            let l = build_l(1, 0, q, d, [x[a], x[b], x[c], x[e]])?;
                            v.push((w[a] * w[b] * w[c] * w[e], l));
                        }
                    }
                }
            }
            v
        } else {
            vec![(1.0, build_l(1, 0, q, d, [0.0; 4])?)]
        };
        Ok(Alpha1Integrand { ctx, handles, ls, series: SeriesOptions { ..cfg.series() } })
    }

    /// Total number of words across the Duhamel nodes.
    pub fn size(&self) -> usize {
        self.ls.iter().map(|(_, l)| l.len()).sum()
    }

    pub fn eval(&self, ev: &mut Evaluator<'_>, tau1: f64, tau2: f64) -> Result<(Complex64, f64), ExpansionError> {
        let mut total = Complex64::new(0.0, 0.0);
        let mut err = 0.0;
        ev.clear();
        for (w, l) in &self.ls {
            let asg = tagged_assignment(l, &[tau1, tau2], &self.handles, self.ctx)?;
            let (comb, e) = expand_ncpoly(l, &asg, &self.series)?;
            total += ev.trace_comb(&comb)? * *w;
            err += e * w;
        }
        Ok((total, err))
    }
}

/// Tensor Gauss–Legendre rule in `(τ1, τ2) ∈ [0, ∞)²` after `τ = -a ln(1-x)`.
fn time_rule(nodes: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre_on(nodes, 0.0, 1.0);
    let t: Vec<f64> = x.iter().map(|&x| -a * (1.0 - x).ln()).collect();
    let wt: Vec<f64> = x.iter().zip(&w).map(|(&x, &w)| w * a / (1.0 - x)).collect();
    (t, wt)
}

fn integrate(
    integrand: &Alpha1Integrand<'_>,
    nodes: usize,
    a: f64,
) -> Result<(Complex64, f64, f64), ExpansionError> {
    let (t, w) = time_rule(nodes, a);
    let rows: Vec<Result<(Vec<Complex64>, f64), ExpansionError>> = (0..nodes)
        .into_par_iter()
        .map_init(
            || Evaluator::new(integrand.ctx),
            |ev, i| {
                let mut row = Vec::with_capacity(nodes);
                let mut err = 0.0;
                for j in 0..nodes {
                    let (v, e) = integrand.eval(ev, t[i], t[j])?;
                    row.push(v * w[i] * w[j]);
                    err += e * w[i] * w[j];
                }
                Ok((row, err))
            },
        )
        .collect();
    let mut vals = Vec::with_capacity(nodes * nodes);
    let mut err = 0.0;
    for r in rows {
        let (row, e) = r?;
        vals.extend(row);
        err += e;
    }
    Ok((pairwise_sum_c(&vals), err, t[nodes - 1]))
}

/// `α₁(Q) = ∫_{0 ≤ t1 ≤ t2} τ(L_1^0(Q)(u^{T_1}, Z)) dt`.
pub fn alpha1(
    q: &NCPoly,
    zs: &[Mat<c64>],
    n: usize,
    cfg: &QuadConfig,
) -> Result<(Complex64, f64, f64), ExpansionError> {
    let (ctx, hs) = matrix_context(zs, n)?;
    let integrand = Alpha1Integrand::new(q, &ctx, hs, cfg)?;
    if integrand.size() == 0 {
        return Ok((Complex64::new(0.0, 0.0), 0.0, 0.0));
    }
    let (full, serr, tmax) = integrate(&integrand, cfg.nodes, cfg.scale)?;
    let (half, _, _) = integrate(&integrand, (cfg.nodes / 2).max(1), cfg.scale)?;
    let qerr = (full - half).norm() + serr;
    if let Some(tol) = cfg.tolerance.filter(|&t| qerr > t) {
        return Err(ExpansionError::Tolerance(qerr, tol));
    }
    Ok((full, qerr, tmax))
}

/// What `alpha` is applied to.
#[derive(Clone, Debug)]
pub enum AlphaInput {
    Poly(NCPoly),
    Function { p: NCPoly, f: FourierSpec },
}

impl AlphaInput {
    fn inputs(&self) -> Vec<(Complex64, NCPoly)> {
        match self {
            AlphaInput::Poly(q) => vec![(Complex64::new(1.0, 0.0), q.clone())],
            AlphaInput::Function { p, f } => f.inputs(p),
        }
    }
}

/// `α₀` and, if `order ≥ 1`, `α₁`.
pub fn alpha(
    order: usize,
    input: &AlphaInput,
    zs: &[Mat<c64>],
    n: usize,
    cfg: &QuadConfig,
) -> Result<ExpansionResult, ExpansionError> {
    if order > 1 {
        return Err(ExpansionError::UnsupportedOrder(order, 1));
    }
    let mut res = ExpansionResult {
        alpha0: Complex64::new(0.0, 0.0),
        alpha1: Complex64::new(0.0, 0.0),
        quadrature_error: 0.0,
        truncation_t: 0.0,
    };
    for (c, q) in input.inputs() {
        let (a0, e0) = alpha0(&q, zs, n, cfg)?;
        res.alpha0 += c * a0;
        res.quadrature_error += c.norm() * e0;
        if order == 1 {
            let (a1, e1, t) = alpha1(&q, zs, n, cfg)?;
            res.alpha1 += c * a1;
            res.quadrature_error += c.norm() * e1;
            res.truncation_t = res.truncation_t.max(t);
        }
    }
    Ok(res)
}

/// The right-hand side of the remainder estimate of order `k`,
/// `‖f‖ (C K_N^{n+1} C_max 𝐦 n(n+1))^{4k+6} k^{14k}`, with `0⁰ = 1`.
pub fn remainder_bound(p: &NCPoly, f_norm: f64, k_n: f64, k: usize, c: f64) -> f64 {
    f_norm * base_factor(p, k_n, c).powi(4 * k as i32 + 6) * kpow(k, 14)
}

/// Bound on `|α_i|`: `‖f‖ (C K_N^{n+1} C_max 𝐦 n(n+1))^{4i+2} i^{14i}`.
pub fn coefficient_bound(p: &NCPoly, f_norm: f64, k_n: f64, i: usize, c: f64) -> f64 {
    f_norm * base_factor(p, k_n, c).powi(4 * i as i32 + 2) * kpow(i, 14)
}

fn base_factor(p: &NCPoly, k_n: f64, c: f64) -> f64 {
    let n = p.degree() as f64;
    let m = p.len() as f64;
    let cmax = p.max_abs_coeff().max(1.0);
    c * k_n.max(1.0).powf(n + 1.0) * cmax * m * n * (n + 1.0)
}

fn kpow(k: usize, e: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        (k as f64).powi((e * k) as i32)
    }
}

/// A matrix family whose distribution does not depend on `N`: a diagonal
/// matrix whose entries repeat `values` in equal blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZPattern {
    pub values: Vec<Complex64>,
}

impl ZPattern {
    pub fn real(values: &[f64]) -> Self {
        ZPattern { values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    /// `diag(1, …, 1, -1, …, -1)`.
    pub fn sign_split() -> Self {
        ZPattern::real(&[1.0, -1.0])
    }

    pub fn divides(&self, n: usize) -> bool {
        !self.values.is_empty() && n.is_multiple_of(self.values.len())
    }

    pub fn at(&self, n: usize) -> Result<Mat<c64>, ExpansionError> {
        if !self.divides(n) {
            return Err(ExpansionError::Invalid(format!(
                "N = {n} is not a multiple of the pattern length {}",
                self.values.len()
            )));
        }
        let b = n / self.values.len();
        Ok(Mat::from_fn(n, n, |i, j| {
            if i == j {
                let v = self.values[i / b];
                c64::new(v.re, v.im)
            } else {
                c64::new(0.0, 0.0)
            }
        }))
    }

    /// Smallest `N` carrying the pattern.
    pub fn base(&self) -> usize {
        self.values.len()
    }
}

/// Matrices for all patterns at `N`.
pub fn patterns_at(zs: &[ZPattern], n: usize) -> Result<Vec<Mat<c64>>, ExpansionError> {
    zs.iter().map(|z| z.at(n)).collect()
}

/// Least common multiple of the pattern lengths (1 with no patterns).
pub fn pattern_base(zs: &[ZPattern]) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    zs.iter().fold(1, |acc, z| acc / gcd(acc, z.base()) * z.base())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub n: usize,
    pub mean: Complex64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub points: Vec<FitPoint>,
    /// Weighted least squares of `Re mean` on `{1, N^{-2}}`.
    pub intercept: f64,
    pub intercept_se: f64,
    pub slope: f64,
    pub slope_se: f64,
    /// Slope of `log|mean - α₀ - α₁ N^{-2}|` against `log N`, using the
    /// reference coefficients if given and the fitted ones otherwise.
    pub residual_slope: f64,
    /// Reference `α₀`, `α₁` and their distances from the fit in standard errors.
    pub reference: Option<(f64, f64)>,
    pub intercept_z: Option<f64>,
    pub slope_z: Option<f64>,
    /// The standard error of the slope exceeds both `|slope|` and the
    /// `N^{-2}` signal the largest sample count can resolve.
    pub insufficient_samples: bool,
}

/// Monte Carlo estimates of `E[ts f(P(U^N, Z^N))]` over `ns`, regressed on
/// `{1, N^{-2}}`.
#[allow(clippy::too_many_arguments)]
pub fn expansion_fit(
    p: &NCPoly,
    f: &FourierSpec,
    zs: &[ZPattern],
    ns: &[usize],
    samples: &[usize],
    seed: u64,
    reference: Option<(f64, f64)>,
) -> Result<FitReport, ExpansionError> {
    if ns.len() < 4 {
        return Err(ExpansionError::Invalid("expansion_fit needs at least four values of N".into()));
    }
    if samples.len() != ns.len() {
        return Err(ExpansionError::Invalid("one sample count per N is required".into()));
    }
    let mut points = Vec::with_capacity(ns.len());
    for (&n, &s) in ns.iter().zip(samples) {
        let mats: Vec<MatOp> = patterns_at(zs, n)?.into_iter().map(MatOp::from_matrix).collect();
        let est = mc_expect_trace(p, f, &mats, n, s, fit_seed(seed, n))
            .map_err(|e| ExpansionError::Invalid(e.to_string()))?;
        points.push(FitPoint { n, mean: est.mean, stderr: est.stderr, samples: s });
    }
    Ok(fit_points(points, reference))
}

/// Seed of the `N` run inside a fit.
pub fn fit_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// The regression part of [`expansion_fit`].
pub fn fit_points(points: Vec<FitPoint>, reference: Option<(f64, f64)>) -> FitReport {
    let floor = points.iter().map(|p| p.stderr).fold(0.0, f64::max).max(1e-300) * 1e-6;
    let design: Vec<Vec<f64>> = points.iter().map(|p| vec![1.0, (p.n as f64).powi(-2)]).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean.re).collect();
    let sig: Vec<f64> = points.iter().map(|p| p.stderr.max(floor)).collect();
    let (beta, se) = weighted_lsq(&design, &y, &sig);
    let (a0, a1) = reference.unwrap_or((beta[0], beta[1]));
    let (lx, ly): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|p| {
            let nf = p.n as f64;
            let r = (p.mean.re - a0 - a1 / (nf * nf)).abs().max(1e-300);
            (nf.ln(), r.ln())
        })
        .unzip();
    let (residual_slope, _) = linear_fit(&lx, &ly);
    let z = |x: f64, m: f64, s: f64| if s > 0.0 { (x - m).abs() / s } else { f64::INFINITY };
    let nmin = points.iter().map(|p| p.n).min().unwrap_or(1) as f64;
    let resolvable = points.iter().map(|p| p.stderr).fold(f64::INFINITY, f64::min) * nmin * nmin;
    FitReport {
        intercept: beta[0],
        intercept_se: se[0],
        slope: beta[1],
        slope_se: se[1],
        residual_slope,
        reference,
        intercept_z: reference.map(|(r0, _)| z(beta[0], r0, se[0])),
        slope_z: reference.map(|(_, r1)| z(beta[1], r1, se[1])),
        insufficient_samples: se[1] > beta[1].abs() && se[1] > resolvable,
        points,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub base_alpha1: Complex64,
    pub eps: Vec<f64>,
    /// `|α₁(Z + εH) - α₁(Z)|` for each `ε`.
    pub deltas: Vec<f64>,
    /// `deltas / ε`.
    pub lipschitz: Vec<f64>,
    /// `deltas[0] / deltas[1]`, about 2 when `eps[1] = eps[0] / 2`.
    pub ratio: f64,
}

/// Finite differences of `α₁` along a random Hermitian direction of unit
/// operator norm in each perturbed letter. `perturb[j]` selects `Z_{j+1}`.
/// The differences are taken at `ε`, `ε/2` and `ε/10`.
#[allow(clippy::too_many_arguments)]
pub fn coefficient_continuity_check(
    input: &AlphaInput,
    zs: &[Mat<c64>],
    n: usize,
    perturb: &[bool],
    eps: f64,
    seed: u64,
    cfg: &QuadConfig,
) -> Result<ContinuityReport, ExpansionError> {
    let base = alpha(1, input, zs, n, cfg)?.alpha1;
    let mut rng = RngStream::new(seed, 0);
    let dirs: Vec<Option<Mat<c64>>> = zs
        .iter()
        .enumerate()
        .map(|(j, _)| {
            if perturb.get(j).copied().unwrap_or(false) {
                let h = hbm_increment(n, 1.0, &mut rng);
                let norm = eigenvalues_hermitian(&h)
                    .map_err(|e| ExpansionError::Invalid(e.to_string()))?
                    .iter()
                    .fold(0.0f64, |m, x| m.max(x.abs()));
                Ok(Some(&h * faer::scale(c64::new(1.0 / norm.max(1e-300), 0.0))))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_, ExpansionError>>()?;
    let epss = vec![eps, eps / 2.0, eps / 10.0];
    let mut deltas = Vec::with_capacity(3);
    for &e in &epss {
        let moved: Vec<Mat<c64>> = zs
            .iter()
            .zip(&dirs)
            .map(|(z, d)| match d {
                Some(h) => z + h * faer::scale(c64::new(e, 0.0)),
                None => z.clone(),
            })
            .collect();
        deltas.push((alpha(1, input, &moved, n, cfg)?.alpha1 - base).norm());
    }
    let lipschitz = deltas.iter().zip(&epss).map(|(d, e)| d / e).collect();
    let ratio = if deltas[1] > 0.0 { deltas[0] / deltas[1] } else if deltas[0] == 0.0 { 2.0 } else { f64::INFINITY };
    Ok(ContinuityReport { base_alpha1: base, eps: epss, deltas, lipschitz, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncalg::delta;

    #[test]
    fn l_of_u_free_input_vanishes() {
        assert!(build_l(1, 0, &NCPoly::z(1), 1, [0.0; 4]).unwrap().is_zero());
        assert!(build_l(2, 0, &NCPoly::u(1), 1, [0.0; 4]).is_err());
        assert!(build_l(1, 3, &NCPoly::u(1), 1, [0.0; 4]).is_err());
    }

    #[test]
    fn l_of_single_letter() {
        // 𝒟U = U, δ(U) = U⊗1, δ_j(U) = U⊗1, δ_j(1) = 0: nothing survives.
        assert!(build_l(1, 0, &NCPoly::u(1), 1, [0.0; 4]).unwrap().is_zero());
        // 𝒟(UZVZ) = UZVZ - UZVZ = 0.
        let q = NCPoly::u(1).mul(&NCPoly::z(1)).mul(&NCPoly::v(1)).mul(&NCPoly::z(1));
        assert!(slot_terms(1, 0, &q, 1, [0.0; 4]).unwrap().is_empty());
        let q = NCPoly::u(1).mul(&NCPoly::z(1)).mul(&NCPoly::u(1)).mul(&NCPoly::z(1));
        let terms = slot_terms(1, 0, &q, 1, [0.0; 4]).unwrap();
        assert!(!terms.is_empty());
        // Brute-force count: enumerate Leibniz terms directly.
        let cyc = delta(1, 1, &q).unwrap().m();
        let t = delta(1, 1, &cyc).unwrap();
        let mut expected = 0;
        for (a, b, _) in t.terms() {
            let da = delta_word(Selector::tagged(1, IndexSet::EMPTY), 0.0, a).len();
            let db = delta_word(Selector::tagged(1, IndexSet::EMPTY), 0.0, b).len();
            expected += da * db;
        }
        assert_eq!(terms.len(), expected);
    }

    #[test]
    fn active_positions() {
        let pre = [1.0, 3.0];
        assert_eq!(active_position(&pre, 0.5), 1);
        assert_eq!(active_position(&pre, 1.0), 2);
        assert_eq!(active_position(&pre, 2.9), 2);
        assert_eq!(active_position(&pre, 3.0), 3);
        assert_eq!(active_position(&[], 7.0), 1);
        assert!(TimeVector::new(vec![2.0, 1.0]).is_err());
        let tv = TimeVector::new(vec![0.5, 1.0, 3.0, 4.0]).unwrap();
        assert_eq!(tv.gaps(), vec![0.5, 0.5, 2.0, 1.0]);
    }

    #[test]
    fn bounds() {
        let p = NCPoly::u(1).add(&NCPoly::v(1));
        assert_eq!(remainder_bound(&p, 1.0, 1.0, 0, 1.0), 4096.0);
        let b1 = remainder_bound(&p, 1.0, 1.0, 1, 1.0);
        let b2 = remainder_bound(&p, 1.0, 2.0, 1, 1.0);
        assert!((b2 / b1 - 2f64.powi(20)).abs() < 1e-6 * 2f64.powi(20));
        assert_eq!(coefficient_bound(&p, 1.0, 1.0, 0, 1.0), 16.0);
    }
}

#[cfg(test)]
mod alpha_tests {
    use super::*;

    fn zdiag(v: &[f64]) -> Mat<c64> {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { c64::new(v[i], 0.0) } else { c64::new(0.0, 0.0) })
    }

    #[test]
    fn headline_alpha1() {
        let (u, v, z) = (NCPoly::u(1), NCPoly::v(1), NCPoly::z(1));
        let q = u.mul(&z).mul(&v).mul(&z).mul(&u).mul(&z).mul(&v).mul(&z);
        let r = alpha(1, &AlphaInput::Poly(q), &[zdiag(&[1.0, -1.0])], 2, &QuadConfig { nodes: 16, ..QuadConfig::default() }).unwrap();
        assert!(r.alpha0.norm() < 1e-12);
        assert!((r.alpha1 - Complex64::new(-1.0, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn fit_recovers_exact_coefficients() {
        let points = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| {
                let nf = n as f64;
                FitPoint { n, mean: Complex64::new(2.0 - 3.0 / (nf * nf) + 5.0 / nf.powi(4), 0.0), stderr: 1e-3, samples: 100 }
            })
            .collect();
        let r = fit_points(points, Some((2.0, -3.0)));
        assert!((r.residual_slope + 4.0).abs() < 1e-9);
        assert!((r.intercept - 2.0).abs() < 1e-3);
        assert!((r.slope + 3.0).abs() < 0.5);
        assert!(!r.insufficient_samples);
    }

    #[test]
    fn continuity_of_alpha1() {
        let (u, v, z) = (NCPoly::u(1), NCPoly::v(1), NCPoly::z(1));
        let q = AlphaInput::Poly(u.mul(&z).mul(&v).mul(&z).mul(&u).mul(&z).mul(&v).mul(&z));
        let zs = [zdiag(&[1.0, -1.0]), zdiag(&[0.5, 2.0])];
        let cfg = QuadConfig { nodes: 8, ..QuadConfig::default() };
        let r = coefficient_continuity_check(&q, &zs, 2, &[true, false], 1e-3, 4, &cfg).unwrap();
        assert!((r.ratio - 2.0).abs() < 0.6, "{r:?}");
        assert!(r.lipschitz.iter().all(|l| l.is_finite() && *l < 1e3));
        let r = coefficient_continuity_check(&q, &zs, 2, &[false, true], 1e-3, 4, &cfg).unwrap();
        assert!(r.deltas.iter().all(|d| *d == 0.0));
        let r = coefficient_continuity_check(&q, &zs, 2, &[false, false], 1e-3, 4, &cfg).unwrap();
        assert!(r.deltas.iter().all(|d| *d == 0.0));
    }
}
