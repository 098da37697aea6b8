//! The trace on a free product of Haar unitaries, free unitary Brownian
//! motions and a matrix algebra `M_N(C)`.
//!
//! A word is cut into maximal blocks that live in one algebra. Writing
//! `c_i = τ(m_i)`, freeness gives `τ(Π (m_i - c_i)) = 0` for cyclically
//! alternating words, hence
//!
//! `τ(m_1 … m_k) = -Σ_{S ⊊ [k]} Π_{i ∉ S} (-c_i) τ(Π_{i ∈ S} m_i)`,
//!
//! and every term on the right is shorter once adjacent blocks from the same
//! algebra are multiplied together. Blocks with `c_i = 0` can never be dropped,
//! an algebra met exactly once factors out, and Haar words with nonzero total
//! power vanish by rotation invariance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use faer::complex_native::c64;
use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

use crate::ncalg::{Factor, Kind, Letter, NCPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("free Brownian family ({family}, {dir}) used at two different times")]
    InconsistentTime { family: u32, dir: u16 },
    #[error("unknown matrix handle {0}")]
    UnknownMatrix(u16),
    #[error("matrix letters only take positive exponents")]
    MatrixExponent,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("expansion has more than {0} words")]
    TooManyTerms(usize),
    #[error("exponential series error bound {0} exceeds tolerance {1}")]
    Divergent(f64, f64),
    #[error("no free variable assigned to {0}")]
    Unassigned(String),
    #[error("too many centred blocks ({0}) for the freeness recursion")]
    TooWide(usize),
}

/// A nonnegative time, ordered and hashed through its bit pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Time(u64);

impl Time {
    pub fn new(t: f64) -> Self {
        Time((t + 0.0).to_bits())
    }

    pub fn value(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FreeAtom {
    Haar(u16),
    /// `u^{family}_{dir, time}`.
    Fubm { family: u32, dir: u16, time: Time },
    /// A matrix from the context table. Handles come in pairs: `h ^ 1` is
    /// the adjoint of `h`.
    Matrix(u16),
}

impl FreeAtom {
    fn adjoint_atom(self) -> FreeAtom {
        match self {
            FreeAtom::Matrix(h) => FreeAtom::Matrix(h ^ 1),
            a => a,
        }
    }
}

/// Product of atoms with nonzero integer exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreeWord(pub Vec<(FreeAtom, i32)>);

impl FreeWord {
    pub fn one() -> Self {
        FreeWord(Vec::new())
    }

    pub fn atom(a: FreeAtom) -> Self {
        FreeWord(vec![(a, 1)])
    }

    /// Builds a word, merging equal neighbours and dropping zero exponents.
    pub fn new(factors: impl IntoIterator<Item = (FreeAtom, i32)>) -> Self {
        let mut w = FreeWord::one();
        for (a, e) in factors {
            w.push(a, e);
        }
        w
    }

    pub fn push(&mut self, a: FreeAtom, e: i32) {
        if e == 0 {
            return;
        }
        if let Some(last) = self.0.last_mut() {
            if last.0 == a {
                last.1 += e;
                if last.1 == 0 {
                    self.0.pop();
                }
                return;
            }
        }
        self.0.push((a, e));
    }

    pub fn mul(&self, other: &FreeWord) -> FreeWord {
        let mut w = self.clone();
        for &(a, e) in &other.0 {
            w.push(a, e);
        }
        w
    }

    pub fn adjoint(&self) -> FreeWord {
        FreeWord::new(self.0.iter().rev().map(|&(a, e)| match a {
            FreeAtom::Matrix(_) => (a.adjoint_atom(), e),
            _ => (a, -e),
        }))
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, (a, e)) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            match a {
                FreeAtom::Haar(i) => write!(f, "u{i}")?,
                FreeAtom::Fubm { family, dir, time } => write!(f, "b{family}.{dir}@{time}")?,
                FreeAtom::Matrix(h) => write!(f, "M{h}")?,
            }
            if *e != 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// Moments `m_n(t) = τ(u_t^n)` of a free unitary Brownian motion from the
/// closed system `m_n' = -(n/2) m_n - (n/2) Σ_{k=1}^{n-1} m_k m_{n-k}`,
/// integrated with classical RK4.
pub fn fubm_moments(nmax: usize, t: f64) -> Vec<f64> {
    fubm_moments_with_step(nmax, t, 1e-3)
}

pub fn fubm_moments_with_step(nmax: usize, t: f64, h: f64) -> Vec<f64> {
    let mut m = vec![1.0; nmax + 1];
    if t <= 0.0 || nmax == 0 {
        return m;
    }
    let rhs = |m: &[f64], out: &mut [f64]| {
        out[0] = 0.0;
        for n in 1..m.len() {
            let mut s = m[n];
            for k in 1..n {
                s += m[k] * m[n - k];
            }
            out[n] = -0.5 * n as f64 * s;
        }
    };
    let steps = (t / h).ceil() as usize;
    let dt = t / steps as f64;
    let len = nmax + 1;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for _ in 0..steps {
        rhs(&m, &mut k1);
        for j in 0..len {
            tmp[j] = m[j] + 0.5 * dt * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..len {
            tmp[j] = m[j] + 0.5 * dt * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..len {
            tmp[j] = m[j] + dt * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 1..len {
            m[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    m
}

/// `τ(u_t^n)`, with `m_{-n} = m_n`.
pub fn fubm_moment(n: i64, t: f64) -> f64 {
    let a = n.unsigned_abs() as usize;
    fubm_moments(a, t)[a]
}

/// Matrices living in the free product, all of one size `N`.
#[derive(Clone, Debug)]
pub struct TraceContext {
    pub n: usize,
    mats: Vec<Mat<c64>>,
}

impl TraceContext {
    pub fn new(n: usize) -> Self {
        TraceContext { n, mats: Vec::new() }
    }

    /// Stores `m` and its adjoint; returns the handle of `m`.
    pub fn add_matrix(&mut self, m: Mat<c64>) -> u16 {
        assert_eq!(m.nrows(), self.n);
        assert_eq!(m.ncols(), self.n);
        let h = self.mats.len() as u16;
        let adj = m.adjoint().to_owned();
        self.mats.push(m);
        self.mats.push(adj);
        h
    }

    pub fn matrix(&self, h: u16) -> Result<&Mat<c64>, TraceError> {
        self.mats.get(h as usize).ok_or(TraceError::UnknownMatrix(h))
    }

    pub fn matrix_count(&self) -> usize {
        self.mats.len() / 2
    }

    /// Operator norm of matrix `h`.
    pub fn op_norm(&self, h: u16) -> Result<f64, TraceError> {
        let m = self.matrix(h)?;
        let g = m.adjoint() * m;
        let ev = g.selfadjoint_eigenvalues(faer::Side::Lower);
        Ok(ev.iter().fold(0.0f64, |a, &b| a.max(b)).max(0.0).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Block {
    Haar(u16, i32),
    Fubm(u32, u16, Time, i32),
    Mat(Vec<u16>),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Alg {
    Haar(u16),
    Fubm(u32, u16),
    Mat,
}

impl Block {
    fn alg(&self) -> Alg {
        match self {
            Block::Haar(i, _) => Alg::Haar(*i),
            Block::Fubm(c, i, _, _) => Alg::Fubm(*c, *i),
            Block::Mat(_) => Alg::Mat,
        }
    }

    fn is_identity(&self) -> bool {
        match self {
            Block::Haar(_, p) | Block::Fubm(_, _, _, p) => *p == 0,
            Block::Mat(v) => v.is_empty(),
        }
    }

    /// `self · other`, both in the same algebra.
    fn merge(&mut self, other: &Block) -> Result<(), TraceError> {
        match (self, other) {
            (Block::Haar(_, p), Block::Haar(_, q)) => *p += q,
            (Block::Fubm(c, i, t, p), Block::Fubm(_, _, s, q)) => {
                if t != s {
                    return Err(TraceError::InconsistentTime { family: *c, dir: *i });
                }
                *p += q;
            }
            (Block::Mat(a), Block::Mat(b)) => a.extend_from_slice(b),
            _ => unreachable!("merge across algebras"),
        }
        Ok(())
    }
}

fn min_rotation<T: Ord + Clone>(v: &[T]) -> Vec<T> {
    let n = v.len();
    let mut best = 0;
    for s in 1..n {
        for k in 0..n {
            let a = &v[(s + k) % n];
            let b = &v[(best + k) % n];
            if a != b {
                if a < b {
                    best = s;
                }
                break;
            }
        }
    }
    (0..n).map(|k| v[(best + k) % n].clone()).collect()
}

/// Merge neighbours (cyclically) and drop identities.
fn normalize(blocks: Vec<Block>) -> Result<Vec<Block>, TraceError> {
    let mut out: Vec<Block> = Vec::with_capacity(blocks.len());
    for b in blocks {
        if b.is_identity() {
            continue;
        }
        match out.last_mut() {
            Some(top) if top.alg() == b.alg() => {
                top.merge(&b)?;
                if top.is_identity() {
                    out.pop();
                }
            }
            _ => out.push(b),
        }
    }
    while out.len() >= 2 && out[0].alg() == out[out.len() - 1].alg() {
        let mut last = out.pop().unwrap();
        last.merge(&out[0])?;
        if last.is_identity() {
            out.remove(0);
        } else {
            out[0] = last;
        }
    }
    Ok(out)
}

/// Per-worker evaluator holding the memo tables.
pub struct Evaluator<'a> {
    ctx: &'a TraceContext,
    memo: HashMap<Vec<Block>, Complex64>,
    mat_memo: HashMap<Vec<u16>, Complex64>,
    moments: HashMap<Time, Vec<f64>>,
    /// Upper limit on the number of centred blocks in one recursion step.
    pub max_width: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(ctx: &'a TraceContext) -> Self {
        Evaluator {
            ctx,
            memo: HashMap::new(),
            mat_memo: HashMap::new(),
            moments: HashMap::new(),
            max_width: 22,
        }
    }

    pub fn context(&self) -> &TraceContext {
        self.ctx
    }

    /// Forget memoised traces (moments are kept).
    pub fn clear(&mut self) {
        self.memo.clear();
    }

    pub fn moment(&mut self, n: i32, t: Time) -> f64 {
        let a = n.unsigned_abs() as usize;
        if a == 0 || t.value() == 0.0 {
            return 1.0;
        }
        if let Some(v) = self.moments.get(&t) {
            if v.len() > a {
                return v[a];
            }
        }
        let v = fubm_moments(a.max(8), t.value());
        let r = v[a];
        self.moments.insert(t, v);
        r
    }

    fn mat_trace(&mut self, hs: &[u16]) -> Result<Complex64, TraceError> {
        if hs.is_empty() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let key = min_rotation(hs);
        if let Some(v) = self.mat_memo.get(&key) {
            return Ok(*v);
        }
        let n = self.ctx.n;
        let mut acc = self.ctx.matrix(key[0])?.clone();
        for &h in &key[1..] {
            acc = &acc * self.ctx.matrix(h)?;
        }
        let mut s = c64::new(0.0, 0.0);
        for i in 0..n {
            s += acc.read(i, i);
        }
        let v = Complex64::new(s.re / n as f64, s.im / n as f64);
        self.mat_memo.insert(key, v);
        Ok(v)
    }

    fn block_trace(&mut self, b: &Block) -> Result<Complex64, TraceError> {
        Ok(match b {
            Block::Haar(_, p) => {
                if *p == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            Block::Fubm(_, _, t, p) => Complex64::new(self.moment(*p, *t), 0.0),
            Block::Mat(v) => self.mat_trace(v)?,
        })
    }

    /// `τ(w)`.
    pub fn trace(&mut self, w: &FreeWord) -> Result<Complex64, TraceError> {
        let mut blocks: Vec<Block> = Vec::with_capacity(w.0.len());
        for &(a, e) in &w.0 {
            let b = match a {
                FreeAtom::Haar(i) => Block::Haar(i, e),
                FreeAtom::Fubm { family, dir, time } => {
                    if time.value() < 0.0 {
                        return Err(TraceError::NegativeTime(time.value()));
                    }
                    if time.value() == 0.0 {
                        continue;
                    }
                    Block::Fubm(family, dir, time, e)
                }
                FreeAtom::Matrix(h) => {
                    if e <= 0 {
                        return Err(TraceError::MatrixExponent);
                    }
                    self.ctx.matrix(h)?;
                    Block::Mat(vec![h; e as usize])
                }
            };
            blocks.push(b);
        }
        let blocks = normalize(blocks)?;
        self.rec(blocks)
    }

    fn rec(&mut self, blocks: Vec<Block>) -> Result<Complex64, TraceError> {
        let zero = Complex64::new(0.0, 0.0);
        match blocks.len() {
            0 => return Ok(Complex64::new(1.0, 0.0)),
            1 => return self.block_trace(&blocks[0]),
            _ => {}
        }
        let key = min_rotation(&blocks);
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let blocks = key.clone();
        let k = blocks.len();

        // Rotation invariance of each Haar unitary.
        let mut haar_power: BTreeMap<u16, i32> = BTreeMap::new();
        for b in &blocks {
            if let Block::Haar(i, p) = b {
                *haar_power.entry(*i).or_insert(0) += p;
            }
        }
        if haar_power.values().any(|&p| p != 0) {
            self.memo.insert(key, zero);
            return Ok(zero);
        }

        let mut count: HashMap<Alg, usize> = HashMap::new();
        for b in &blocks {
            *count.entry(b.alg()).or_insert(0) += 1;
        }
        if let Some(p) = (0..k).find(|&p| count[&blocks[p].alg()] == 1) {
            let c = self.block_trace(&blocks[p])?;
            let v = if c == zero {
                zero
            } else {
                let rest: Vec<Block> = blocks[p + 1..].iter().chain(&blocks[..p]).cloned().collect();
                c * self.rec(normalize(rest)?)?
            };
            self.memo.insert(key, v);
            return Ok(v);
        }

        let mut cs = Vec::with_capacity(k);
        for b in &blocks {
            cs.push(self.block_trace(b)?);
        }
        let optional: Vec<usize> = (0..k).filter(|&i| cs[i] != zero).collect();
        let m = optional.len();
        if m > self.max_width {
            return Err(TraceError::TooWide(m));
        }
        let mut total = zero;
        for mask in 1u64..(1u64 << m) {
            let mut coef = Complex64::new(1.0, 0.0);
            let mut drop = vec![false; k];
            for (bit, &i) in optional.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    coef *= -cs[i];
                    drop[i] = true;
                }
            }
            let sub: Vec<Block> = blocks
                .iter()
                .zip(&drop)
                .filter(|(_, &d)| !d)
                .map(|(b, _)| b.clone())
                .collect();
            total -= coef * self.rec(normalize(sub)?)?;
        }
        self.memo.insert(key, total);
        Ok(total)
    }

    /// `Σ c · τ(w)` in the (deterministic) order of the combination.
    pub fn trace_comb(&mut self, comb: &LinComb) -> Result<Complex64, TraceError> {
        let mut s = Complex64::new(0.0, 0.0);
        for (w, c) in comb.iter() {
            s += c * self.trace(w)?;
        }
        Ok(s)
    }
}

/// `τ(w)` with a throwaway evaluator.
pub fn trace(w: &FreeWord, ctx: &TraceContext) -> Result<Complex64, TraceError> {
    Evaluator::new(ctx).trace(w)
}

/// A finite combination of free words.
pub type LinComb = BTreeMap<FreeWord, Complex64>;

pub fn comb_add(c: &mut LinComb, w: FreeWord, v: Complex64) {
    if v == Complex64::new(0.0, 0.0) {
        return;
    }
    let e = c.entry(w.clone()).or_insert(Complex64::new(0.0, 0.0));
    *e += v;
    if *e == Complex64::new(0.0, 0.0) {
        c.remove(&w);
    }
}

pub fn comb_mul(a: &LinComb, b: &LinComb, limit: usize) -> Result<LinComb, TraceError> {
    let mut out = LinComb::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            comb_add(&mut out, wa.mul(wb), ca * cb);
        }
        if out.len() > limit {
            return Err(TraceError::TooManyTerms(limit));
        }
    }
    Ok(out)
}

/// Images of the letters `U_i` (possibly tagged) and `Z_j`; adjoints are
/// derived.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    map: BTreeMap<Letter, (FreeWord, f64)>,
}

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    /// `U_i ↦ u_i` for `i ≤ d` and `Z_j ↦ handles[j-1]`.
    pub fn standard(d: usize, handles: &[u16], ctx: &TraceContext) -> Result<Self, TraceError> {
        let mut a = Assignment::new();
        for i in 1..=d {
            a.set_unitary(Letter::new(Kind::U, i), FreeWord::atom(FreeAtom::Haar(i as u16)));
        }
        for (j, &h) in handles.iter().enumerate() {
            a.set_matrix(j + 1, h, ctx)?;
        }
        Ok(a)
    }

    /// `letter` must be a `U` letter; its image must be unitary.
    pub fn set_unitary(&mut self, letter: Letter, w: FreeWord) {
        debug_assert_eq!(letter.kind, Kind::U);
        self.map.insert(letter, (w, 1.0));
    }

    pub fn set_matrix(&mut self, j: usize, h: u16, ctx: &TraceContext) -> Result<(), TraceError> {
        let norm = ctx.op_norm(h)?;
        self.map.insert(
            Letter::new(Kind::Z, j),
            (FreeWord::atom(FreeAtom::Matrix(h)), norm),
        );
        Ok(())
    }

    /// Image of a letter and a bound on its norm.
    pub fn image(&self, l: &Letter) -> Result<(FreeWord, f64), TraceError> {
        let base = Letter { kind: match l.kind { Kind::V => Kind::U, Kind::Y => Kind::Z, k => k }, ..*l };
        let (w, n) = self
            .map
            .get(&base)
            .ok_or_else(|| TraceError::Unassigned(l.to_string()))?;
        Ok(match l.kind {
            Kind::U | Kind::Z => (w.clone(), *n),
            _ => (w.adjoint(), *n),
        })
    }
}

/// Controls for evaluating exponential atoms by truncated series.
#[derive(Clone, Copy, Debug)]
pub struct SeriesOptions {
    pub max_order: usize,
    pub tolerance: f64,
    pub max_terms: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            max_order: 30,
            tolerance: 1e-8,
            max_terms: 200_000,
        }
    }
}

/// Expansion of a polynomial into free words, with a bound on the error made
/// by truncating the exponential series.
pub fn expand_ncpoly(
    q: &NCPoly,
    asg: &Assignment,
    opts: &SeriesOptions,
) -> Result<(LinComb, f64), TraceError> {
    let (comb, _, err) = expand_rec(q, asg, opts)?;
    if err > opts.tolerance {
        return Err(TraceError::Divergent(err, opts.tolerance));
    }
    Ok((comb, err))
}

/// Returns (combination, norm bound, truncation error bound).
fn expand_rec(
    q: &NCPoly,
    asg: &Assignment,
    opts: &SeriesOptions,
) -> Result<(LinComb, f64, f64), TraceError> {
    let mut out = LinComb::new();
    let mut norm = 0.0;
    let mut err = 0.0;
    for (w, c) in q.terms() {
        let mut acc = LinComb::new();
        acc.insert(FreeWord::one(), *c);
        let mut nb = c.norm();
        let mut eb = 0.0;
        for f in &w.0 {
            let (img, fnorm, ferr) = match f {
                Factor::L(l) => {
                    let (fw, n) = asg.image(l)?;
                    let mut lc = LinComb::new();
                    lc.insert(fw, Complex64::new(1.0, 0.0));
                    (lc, n, 0.0)
                }
                Factor::E(e) => exp_series(e.scalar, &e.poly, asg, opts)?,
            };
            // (nb + eb)(fnorm + ferr) - nb·fnorm bounds the propagated error.
            eb = (nb + eb) * (fnorm + ferr) - nb * fnorm;
            nb *= fnorm;
            acc = comb_mul(&acc, &img, opts.max_terms)?;
        }
        norm += nb;
        err += eb;
        for (fw, v) in acc {
            comb_add(&mut out, fw, v);
        }
        if out.len() > opts.max_terms {
            return Err(TraceError::TooManyTerms(opts.max_terms));
        }
    }
    Ok((out, norm, err))
}

fn exp_series(
    lambda: Complex64,
    r: &NCPoly,
    asg: &Assignment,
    opts: &SeriesOptions,
) -> Result<(LinComb, f64, f64), TraceError> {
    let (rc, rn, re) = expand_rec(r, asg, opts)?;
    let x = lambda.norm() * (rn + re);
    let mut out = LinComb::new();
    out.insert(FreeWord::one(), Complex64::new(1.0, 0.0));
    let mut power = out.clone();
    let mut fact = 1.0;
    let mut lam_k = Complex64::new(1.0, 0.0);
    let mut term_bound = 1.0;
    let mut order = 0;
    for k in 1..=opts.max_order {
        power = comb_mul(&power, &rc, opts.max_terms)?;
        fact *= k as f64;
        lam_k *= lambda;
        for (w, v) in &power {
            comb_add(&mut out, w.clone(), v * lam_k / fact);
        }
        if out.len() > opts.max_terms {
            return Err(TraceError::TooManyTerms(opts.max_terms));
        }
        term_bound = x.powi(k as i32) / fact;
        order = k;
        if term_bound < 1e-17 {
            break;
        }
    }
    // Tail Σ_{k>K} x^k/k! ≤ x^{K+1}/(K+1)! / (1 - x/(K+2)).
    let k1 = (order + 1) as f64;
    let tail = if x < k1 + 1.0 {
        term_bound * x / k1 / (1.0 - x / (k1 + 1.0))
    } else {
        f64::INFINITY
    };
    // Errors inside R propagate through e^{λR}: |e^{a+b} - e^a| ≤ e^{|a|}(e^{|b|} - 1).
    let inner = (lambda.norm() * rn).exp() * ((lambda.norm() * re).exp() - 1.0);
    Ok((out, x.exp(), tail + inner))
}

/// `τ(Q(assignment))` and the truncation error bound.
pub fn eval_ncpoly(
    q: &NCPoly,
    asg: &Assignment,
    ctx: &TraceContext,
    opts: &SeriesOptions,
) -> Result<(Complex64, f64), TraceError> {
    let (comb, err) = expand_ncpoly(q, asg, opts)?;
    let mut ev = Evaluator::new(ctx);
    Ok((ev.trace_comb(&comb)?, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn haar(i: u16, e: i32) -> (FreeAtom, i32) {
        (FreeAtom::Haar(i), e)
    }

    fn diag_ctx(entries: &[f64]) -> (TraceContext, u16) {
        let n = entries.len();
        let mut ctx = TraceContext::new(n);
        let m = Mat::from_fn(n, n, |i, j| if i == j { c64::new(entries[i], 0.0) } else { c64::new(0.0, 0.0) });
        let h = ctx.add_matrix(m);
        (ctx, h)
    }

    #[test]
    fn haar_moments() {
        let ctx = TraceContext::new(1);
        assert_eq!(trace(&FreeWord::new([haar(1, 3)]), &ctx).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(trace(&FreeWord::new([haar(1, 2), haar(1, -2)]), &ctx).unwrap(), Complex64::new(1.0, 0.0));
        let mut s = Complex64::new(0.0, 0.0);
        for mask in 0..16u32 {
            let w = FreeWord::new((0..4).map(|b| haar(1, if mask >> b & 1 == 1 { 1 } else { -1 })));
            s += trace(&w, &ctx).unwrap();
        }
        assert_eq!(s, Complex64::new(6.0, 0.0));
    }

    #[test]
    fn conjugated_matrix() {
        let (ctx, h) = diag_ctx(&[1.0, 2.0, -0.5, 3.0]);
        let z = FreeAtom::Matrix(h);
        let w = FreeWord::new([haar(1, 1), (z, 1), haar(1, -1), (z, 1)]);
        let tz: f64 = (1.0 + 2.0 - 0.5 + 3.0) / 4.0;
        assert!((trace(&w, &ctx).unwrap() - tz * tz).norm() < 1e-14);
    }

    #[test]
    fn two_haar_products() {
        // τ(u v u* v*) = 0 and τ(u v u* v* v u v* u*) = 1 for free Haar u, v.
        let ctx = TraceContext::new(1);
        let w = FreeWord::new([haar(1, 1), haar(2, 1), haar(1, -1), haar(2, -1)]);
        assert_eq!(trace(&w, &ctx).unwrap(), Complex64::new(0.0, 0.0));
        let ww = w.mul(&w.adjoint());
        assert_eq!(trace(&ww, &ctx).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn fubm_first_moment() {
        for t in [0.5, 2.0, 7.0] {
            assert!((fubm_moment(1, t) - (-t / 2.0f64).exp()).abs() < 1e-12);
            assert_eq!(fubm_moment(3, t), fubm_moment(-3, t));
        }
        assert_eq!(fubm_moment(4, 0.0), 1.0);
    }

    #[test]
    fn fubm_and_haar_product() {
        // τ(b u b* u*) with b free Brownian, u Haar: = |τ(b)|² τ(uu*)... reduces to m_1².
        let ctx = TraceContext::new(1);
        let b = FreeAtom::Fubm { family: 1, dir: 1, time: Time::new(1.0) };
        let w = FreeWord::new([(b, 1), haar(1, 1), (b, -1), haar(1, -1)]);
        let m1 = (-0.5f64).exp();
        assert!((trace(&w, &ctx).unwrap().re - m1 * m1).abs() < 1e-12);
        let b2 = FreeAtom::Fubm { family: 1, dir: 1, time: Time::new(2.0) };
        assert!(trace(&FreeWord::new([(b, 1), haar(1, 1), (b2, 1)]), &ctx).is_err());
    }

    #[test]
    fn polynomial_evaluation() {
        let ctx = TraceContext::new(1);
        let asg = Assignment::standard(1, &[], &ctx).unwrap();
        let o = SeriesOptions::default();
        let uv = NCPoly::u(1).mul(&NCPoly::v(1));
        assert_eq!(eval_ncpoly(&uv, &asg, &ctx, &o).unwrap().0, Complex64::new(1.0, 0.0));
        let p = NCPoly::u(1).add(&NCPoly::v(1));
        assert_eq!(eval_ncpoly(&p.pow(2), &asg, &ctx, &o).unwrap().0, Complex64::new(2.0, 0.0));
        let e0 = NCPoly::exp(Complex64::new(0.0, 0.0), p.clone());
        assert_eq!(eval_ncpoly(&e0, &asg, &ctx, &o).unwrap().0, Complex64::new(1.0, 0.0));
        // τ(e^{iy(u+u*)}) = J_0(2y).
        let y = 0.3;
        let (v, err) = eval_ncpoly(&NCPoly::exp(Complex64::new(0.0, y), p), &asg, &ctx, &o).unwrap();
        let j0: f64 = (0..20)
            .map(|k| {
                let f: f64 = (1..=k).map(|i| i as f64).product();
                (-1.0f64).powi(k) * y.powi(2 * k) / (f * f)
            })
            .sum();
        assert!((v.re - j0).abs() < 1e-12 && v.im.abs() < 1e-12 && err < 1e-8);
    }
}
