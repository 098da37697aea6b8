//! Exact Haar integrals through the Weingarten function of `S_k`.
//!
//! `Wg(·, N)` is a class function. It is obtained from the class-reduced Gram
//! system `Σ_τ N^{#cyc(στ⁻¹)} Wg(τ) = 1_{σ = id}`, either exactly at an integer
//! `N` (rational arithmetic) or as a Laurent series in `1/N`.

use std::collections::{BTreeMap, HashMap};

use faer::complex_native::c64;
use faer::Mat;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::ncalg::{Factor, Kind, Word};

pub const MAX_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WgError {
    #[error("k = {0} exceeds the supported maximum {MAX_K}")]
    KTooLarge(usize),
    #[error("Gram matrix is singular for N = {n} < k = {k}")]
    Singular { k: usize, n: usize },
    #[error("only words in at most two unitaries are supported")]
    TooManyUnitaries,
    #[error("with two unitaries each may appear at most 3 times")]
    TwoUnitaryLimit,
    #[error("matrix Z{0} not supplied")]
    MissingMatrix(usize),
    #[error("exponential atoms are not allowed in oracle words")]
    ExpAtom,
    #[error("positive power N^{0} has coefficient {1:e}")]
    PolarTerm(usize, f64),
    #[error("odd power N^-{0} has coefficient {1:e}")]
    OddPower(usize, f64),
}

pub type Perm = Vec<u8>;

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Perm> {
    let mut p: Perm = (0..k as u8).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..k).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

/// `(a ∘ b)(x) = a(b(x))`.
pub fn compose(a: &[u8], b: &[u8]) -> Perm {
    b.iter().map(|&x| a[x as usize]).collect()
}

pub fn inverse(a: &[u8]) -> Perm {
    let mut r = vec![0u8; a.len()];
    for (i, &x) in a.iter().enumerate() {
        r[x as usize] = i as u8;
    }
    r
}

/// Cycle lengths in decreasing order.
pub fn cycle_type(a: &[u8]) -> Vec<usize> {
    let mut seen = vec![false; a.len()];
    let mut out = Vec::new();
    for s in 0..a.len() {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut x = s;
        while !seen[x] {
            seen[x] = true;
            x = a[x] as usize;
            len += 1;
        }
        out.push(len);
    }
    out.sort_unstable_by(|x, y| y.cmp(x));
    out
}

pub fn cycle_count(a: &[u8]) -> usize {
    cycle_type(a).len()
}

/// Partitions of `k` in reverse lexicographic order, `[k]` first.
pub fn partitions(k: usize) -> Vec<Vec<usize>> {
    fn rec(rem: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rem == 0 {
            out.push(cur.clone());
            return;
        }
        for p in (1..=rem.min(max)).rev() {
            cur.push(p);
            rec(rem - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut Vec::new(), &mut out);
    out
}

/// Conjugacy-class data for `S_k`.
#[derive(Clone, Debug)]
pub struct Classes {
    pub k: usize,
    pub types: Vec<Vec<usize>>,
    pub perms: Vec<Perm>,
    pub class_of: Vec<usize>,
    /// `counts[C][D][c]` = #{τ ∈ D : #cyc(σ_C τ⁻¹) = c}.
    counts: Vec<Vec<Vec<u64>>>,
    identity: usize,
}

impl Classes {
    pub fn new(k: usize) -> Result<Self, WgError> {
        if k > MAX_K {
            return Err(WgError::KTooLarge(k));
        }
        let types = partitions(k);
        let index: HashMap<Vec<usize>, usize> =
            types.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let perms = permutations(k);
        let class_of: Vec<usize> = perms.iter().map(|p| index[&cycle_type(p)]).collect();
        let p = types.len();
        let mut reps = vec![usize::MAX; p];
        for (i, &c) in class_of.iter().enumerate() {
            if reps[c] == usize::MAX {
                reps[c] = i;
            }
        }
        let mut counts = vec![vec![vec![0u64; k + 1]; p]; p];
        for c in 0..p {
            let sigma = &perms[reps[c]];
            for (ti, tau) in perms.iter().enumerate() {
                let cyc = cycle_count(&compose(sigma, &inverse(tau)));
                counts[c][class_of[ti]][cyc] += 1;
            }
        }
        let identity = index[&vec![1; k]];
        Ok(Classes { k, types, perms, class_of, counts, identity })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn class_index(&self, perm: &[u8]) -> usize {
        let t = cycle_type(perm);
        self.types.iter().position(|x| *x == t).unwrap()
    }
}

/// `Wg(·, N)` on `S_k` at an integer `N`.
#[derive(Clone, Debug)]
pub struct WgTable {
    pub k: usize,
    pub n: usize,
    pub classes: Classes,
    /// Value on each conjugacy class.
    pub by_class: Vec<BigRational>,
}

impl WgTable {
    pub fn value(&self, perm: &[u8]) -> &BigRational {
        &self.by_class[self.classes.class_index(perm)]
    }

    pub fn value_f64(&self, class: usize) -> f64 {
        self.by_class[class].to_f64().unwrap_or(f64::NAN)
    }

    /// `max_σ |Σ_τ N^{#cyc(στ⁻¹)} Wg(τ) - 1_{σ=id}|` over the full group,
    /// computed exactly.
    pub fn residual(&self) -> BigRational {
        let n = BigRational::from_integer(BigInt::from(self.n));
        let perms = &self.classes.perms;
        let mut worst = BigRational::zero();
        for (si, s) in perms.iter().enumerate() {
            let mut acc = BigRational::zero();
            for (ti, t) in perms.iter().enumerate() {
                let c = cycle_count(&compose(s, &inverse(t)));
                acc += pow(&n, c) * &self.by_class[self.classes.class_of[ti]];
            }
            if self.classes.class_of[si] == self.classes.identity {
                acc -= BigRational::one();
            }
            let a = if acc < BigRational::zero() { -acc } else { acc };
            if a > worst {
                worst = a;
            }
        }
        worst
    }
}

fn pow(x: &BigRational, e: usize) -> BigRational {
    let mut r = BigRational::one();
    for _ in 0..e {
        r *= x;
    }
    r
}

/// Exact Weingarten table for `S_k` at dimension `N`.
pub fn wg(k: usize, n: usize) -> Result<WgTable, WgError> {
    let classes = Classes::new(k)?;
    if n < k {
        return Err(WgError::Singular { k, n });
    }
    let p = classes.len();
    let nb = BigRational::from_integer(BigInt::from(n));
    let mut a: Vec<Vec<BigRational>> = (0..p)
        .map(|c| {
            (0..p)
                .map(|d| {
                    let mut s = BigRational::zero();
                    for (e, &cnt) in classes.counts[c][d].iter().enumerate() {
                        if cnt > 0 {
                            s += pow(&nb, e) * BigRational::from_integer(BigInt::from(cnt));
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let mut b: Vec<BigRational> = (0..p)
        .map(|c| if c == classes.identity { BigRational::one() } else { BigRational::zero() })
        .collect();
    for col in 0..p {
        let piv = (col..p)
            .find(|&r| !a[r][col].is_zero())
            .ok_or(WgError::Singular { k, n })?;
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col].clone();
        for x in a[col].iter_mut() {
            *x = &*x / &d;
        }
        b[col] = &b[col] / &d;
        for r in 0..p {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c2 in 0..p {
                    let v = &a[col][c2] * &f;
                    a[r][c2] -= v;
                }
                let v = &b[col] * &f;
                b[r] -= v;
            }
        }
    }
    Ok(WgTable { k, n, classes, by_class: b })
}

/// Laurent coefficients of `Wg` in `x = 1/N`: `Wg_C = Σ_m coef[m][C] x^{k+m}`.
pub fn wg_series(classes: &Classes, terms: usize) -> Vec<Vec<BigRational>> {
    let k = classes.k;
    let p = classes.len();
    let mut w: Vec<Vec<BigRational>> = Vec::with_capacity(terms);
    for m in 0..terms {
        let mut row = vec![BigRational::zero(); p];
        for c in 0..p {
            let mut v = if m == 0 && c == classes.identity {
                BigRational::one()
            } else {
                BigRational::zero()
            };
            for j in 1..=m.min(k) {
                for d in 0..p {
                    let cnt = classes.counts[c][d][k - j];
                    if cnt > 0 {
                        v -= BigRational::from_integer(BigInt::from(cnt)) * &w[m - j][d];
                    }
                }
            }
            row[c] = v;
        }
        w.push(row);
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OLetter {
    U { which: usize, adj: bool },
}

/// `E[ts_N(word)]` as `Σ coef · Π_u Wg_{k_u}(class_u, N) · N^power`.
#[derive(Clone, Debug)]
pub struct ExactExpectation {
    /// Half-lengths `k_u` for each unitary.
    pub ks: Vec<usize>,
    pub terms: BTreeMap<(Vec<usize>, i32), Complex64>,
    classes: Vec<Classes>,
}

impl ExactExpectation {
    fn constant(v: Complex64) -> Self {
        let mut terms = BTreeMap::new();
        if v != Complex64::new(0.0, 0.0) {
            terms.insert((Vec::new(), 0), v);
        }
        ExactExpectation { ks: Vec::new(), terms, classes: Vec::new() }
    }

    /// Value at dimension `N`, using the exact Weingarten tables.
    pub fn value_at(&self, n: usize) -> Result<Complex64, WgError> {
        let tables: Vec<WgTable> = self.ks.iter().map(|&k| wg(k, n)).collect::<Result<_, _>>()?;
        let mut s = Complex64::new(0.0, 0.0);
        for ((cls, power), c) in &self.terms {
            let mut w = 1.0;
            for (t, &cl) in tables.iter().zip(cls) {
                w *= t.value_f64(cl);
            }
            s += c * w * (n as f64).powi(*power);
        }
        Ok(s)
    }

    /// Coefficients of `x^0, x^1, …, x^max_power` (`x = 1/N`). Individual
    /// pairings may carry positive powers of `N`; these cancel in the sum, and
    /// whatever survives is returned by [`ExactExpectation::polar_part`].
    pub fn laurent(&self, max_power: usize) -> Vec<Complex64> {
        self.laurent_full(max_power).1
    }

    /// Largest coefficient of a positive power of `N` (zero for valid input).
    pub fn polar_part(&self) -> f64 {
        self.laurent_full(0).0.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn laurent_full(&self, max_power: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let off = self.ks.iter().sum::<usize>();
        let len = max_power + 1 + off;
        let series: Vec<Vec<Vec<f64>>> = self
            .classes
            .iter()
            .map(|c| {
                wg_series(c, len)
                    .into_iter()
                    .map(|row| row.iter().map(|v| v.to_f64().unwrap()).collect())
                    .collect()
            })
            .collect();
        // Index e + off holds the coefficient of x^e.
        let mut acc = vec![Complex64::new(0.0, 0.0); len];
        for ((cls, power), c) in &self.terms {
            let mut prod = vec![0.0; len];
            prod[0] = 1.0;
            for (u, &cl) in cls.iter().enumerate() {
                let mut next = vec![0.0; len];
                for (i, &a) in prod.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for m in 0..len - i {
                        next[i + m] += a * series[u][m][cl];
                    }
                }
                prod = next;
            }
            // Wg products start at x^{Σk}; N^power shifts by -power.
            let shift = off as i64 - *power as i64;
            for (i, &a) in prod.iter().enumerate() {
                let idx = i as i64 + shift + off as i64;
                if idx >= 0 && (idx as usize) < len {
                    acc[idx as usize] += c * a;
                }
            }
        }
        let pos = acc.split_off(off);
        (acc, pos)
    }
}

/// Coefficients `a_0, …, a_order` of `Σ a_i N^{-2i}`; odd powers must vanish
/// to within `tol` (relative to the largest coefficient).
pub fn series_coefficients(
    e: &ExactExpectation,
    order: usize,
    tol: f64,
) -> Result<Vec<Complex64>, WgError> {
    let (polar, l) = e.laurent_full(2 * order + 1);
    let scale = l.iter().map(|c| c.norm()).fold(1.0f64, f64::max);
    for (i, c) in polar.iter().enumerate() {
        if c.norm() > tol * scale {
            // Index i holds x^{i - len(polar)}, a positive power of N.
            return Err(WgError::PolarTerm(polar.len() - i, c.norm()));
        }
    }
    for (p, c) in l.iter().enumerate() {
        if p % 2 == 1 && c.norm() > tol * scale {
            return Err(WgError::OddPower(p, c.norm()));
        }
    }
    Ok((0..=order).map(|i| l[2 * i]).collect())
}

fn ts(m: &Mat<c64>) -> Complex64 {
    let n = m.nrows();
    let mut s = c64::new(0.0, 0.0);
    for i in 0..n {
        s += m.read(i, i);
    }
    Complex64::new(s.re / n as f64, s.im / n as f64)
}

/// `E[ts_N(word)]` for a word in at most two Haar unitaries `U1, U2` and
/// matrices `Z_j = zs[j-1]` (adjoints `Y_j`). `n` is the dimension.
pub fn exact_word_expectation(
    word: &Word,
    zs: &[Mat<c64>],
    n: usize,
) -> Result<ExactExpectation, WgError> {
    // Cut the cyclic word into unitary letters and the matrix products between them.
    let ident = Mat::<c64>::identity(n, n);
    let mut letters: Vec<OLetter> = Vec::new();
    let mut blocks: Vec<Mat<c64>> = Vec::new();
    let mut lead = ident.clone();
    let mut cur: Option<Mat<c64>> = None;
    let mut unitaries: Vec<usize> = Vec::new();
    for f in &word.0 {
        let l = match f {
            Factor::L(l) => l,
            Factor::E(_) => return Err(WgError::ExpAtom),
        };
        match l.kind {
            Kind::U | Kind::V => {
                let idx = l.index as usize;
                let which = match unitaries.iter().position(|&u| u == idx) {
                    Some(p) => p,
                    None => {
                        unitaries.push(idx);
                        unitaries.len() - 1
                    }
                };
                if unitaries.len() > 2 {
                    return Err(WgError::TooManyUnitaries);
                }
                if let Some(m) = cur.take() {
                    blocks.push(m);
                }
                letters.push(OLetter::U { which, adj: l.kind == Kind::V });
                cur = Some(ident.clone());
            }
            Kind::Z | Kind::Y => {
                let j = l.index as usize;
                let z = zs.get(j.wrapping_sub(1)).ok_or(WgError::MissingMatrix(j))?;
                let z = if l.kind == Kind::Y { z.adjoint().to_owned() } else { z.clone() };
                match cur.as_mut() {
                    Some(m) => *m = &*m * &z,
                    None => lead = &lead * &z,
                }
            }
        }
    }
    if letters.is_empty() {
        return Ok(ExactExpectation::constant(ts(&lead)));
    }
    // The block after the last letter wraps around to the leading matrices.
    let last = cur.take().unwrap();
    blocks.push(&last * &lead);
    let big_l = letters.len();

    // Occurrence lists per unitary.
    let nu = unitaries.len();
    let mut ups: Vec<Vec<usize>> = vec![Vec::new(); nu];
    let mut vps: Vec<Vec<usize>> = vec![Vec::new(); nu];
    for (p, l) in letters.iter().enumerate() {
        let OLetter::U { which, adj } = *l;
        if adj {
            vps[which].push(p);
        } else {
            ups[which].push(p);
        }
    }
    for u in 0..nu {
        if ups[u].len() != vps[u].len() {
            // Invariance under U ↦ e^{iφ}U.
            return Ok(ExactExpectation::constant(Complex64::new(0.0, 0.0)));
        }
        if ups[u].len() > MAX_K {
            return Err(WgError::KTooLarge(ups[u].len()));
        }
        if nu == 2 && ups[u].len() > 3 {
            return Err(WgError::TwoUnitaryLimit);
        }
    }
    let ks: Vec<usize> = ups.iter().map(Vec::len).collect();
    let classes: Vec<Classes> = ks.iter().map(|&k| Classes::new(k)).collect::<Result<_, _>>()?;
    let perm_lists: Vec<Vec<Perm>> = ks.iter().map(|&k| permutations(k)).collect();

    // Position of each letter within its own occurrence list.
    let mut occ = vec![0usize; big_l];
    for u in 0..nu {
        for (a, &p) in ups[u].iter().enumerate() {
            occ[p] = a;
        }
        for (b, &p) in vps[u].iter().enumerate() {
            occ[p] = b;
        }
    }

    let mut cycle_memo: HashMap<Vec<usize>, Complex64> = HashMap::new();
    let mut terms: BTreeMap<(Vec<usize>, i32), Complex64> = BTreeMap::new();

    // Iterate over all (σ_u, τ_u) for every unitary.
    let sizes: Vec<usize> = perm_lists.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().map(|s| s * s).product();
    let mut next = vec![0usize; big_l];
    for idx in 0..total {
        let mut r = idx;
        let mut choice: Vec<(usize, usize)> = Vec::with_capacity(nu);
        for &s in &sizes {
            let a = r % s;
            r /= s;
            let b = r % s;
            r /= s;
            choice.push((a, b));
        }
        // next(p): partner of the left slot of letter p+1 is the right slot of letter q.
        for p in 0..big_l {
            let np = (p + 1) % big_l;
            let OLetter::U { which, adj } = letters[np];
            let (si, ti) = choice[which];
            let sigma = &perm_lists[which][si];
            let tau = &perm_lists[which][ti];
            let q = if !adj {
                // U-left(a) pairs with V-right(σ(a)).
                vps[which][sigma[occ[np]] as usize]
            } else {
                // V-left(b) pairs with U-right(τ⁻¹(b)).
                let b = occ[np] as u8;
                let a = tau.iter().position(|&x| x == b).unwrap();
                ups[which][a]
            };
            next[p] = q;
        }
        let mut seen = vec![false; big_l];
        let mut value = Complex64::new(1.0, 0.0);
        let mut cycles = 0i32;
        for s in 0..big_l {
            if seen[s] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut x = s;
            while !seen[x] {
                seen[x] = true;
                cyc.push(x);
                x = next[x];
            }
            cycles += 1;
            let key = min_rot(&cyc);
            let v = *cycle_memo.entry(key.clone()).or_insert_with(|| {
                let mut m = blocks[key[0]].clone();
                for &b in &key[1..] {
                    m = &m * &blocks[b];
                }
                ts(&m)
            });
            value *= v;
        }
        let cls: Vec<usize> = (0..nu)
            .map(|u| {
                let (si, ti) = choice[u];
                let g = compose(&perm_lists[u][si], &inverse(&perm_lists[u][ti]));
                classes[u].class_of[perm_index(&perm_lists[u], &g)]
            })
            .collect();
        *terms.entry((cls, cycles - 1)).or_insert(Complex64::new(0.0, 0.0)) += value;
    }
    Ok(ExactExpectation { ks, terms, classes })
}

fn perm_index(list: &[Perm], p: &[u8]) -> usize {
    list.binary_search_by(|x| x.as_slice().cmp(p)).unwrap()
}

fn min_rot(v: &[usize]) -> Vec<usize> {
    (0..v.len())
        .map(|s| v[s..].iter().chain(&v[..s]).copied().collect::<Vec<_>>())
        .min()
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncalg::{Letter, NCPoly};
    use num_traits::FromPrimitive;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn small_tables() {
        let t = wg(1, 7).unwrap();
        assert_eq!(t.value(&[0]), &r(1, 7));
        let t = wg(2, 5).unwrap();
        assert_eq!(t.value(&[0, 1]), &r(1, 24));
        assert_eq!(t.value(&[1, 0]), &r(-1, 120));
        for (k, n) in [(3, 3), (4, 6), (5, 5)] {
            assert!(wg(k, n).unwrap().residual().is_zero());
        }
        assert!(wg(3, 2).is_err());
    }

    #[test]
    fn series_matches_exact() {
        let c = Classes::new(3).unwrap();
        let s = wg_series(&c, 12);
        let t = wg(3, 40).unwrap();
        let x: f64 = 1.0 / 40.0;
        for cl in 0..c.len() {
            let approx: f64 = (0..12).map(|m| s[m][cl].to_f64().unwrap() * x.powi(3 + m as i32)).sum();
            assert!((approx - t.value_f64(cl)).abs() < 1e-12 * t.value_f64(cl).abs(), "class {cl}: {approx} {}", t.value_f64(cl));
        }
        // 1/(N²-1) = x² + x⁴ + …
        let c2 = Classes::new(2).unwrap();
        let s2 = wg_series(&c2, 5);
        let id = c2.identity();
        assert_eq!(s2[0][id], BigRational::from_i64(1).unwrap());
        assert!(s2[1][id].is_zero());
        assert_eq!(s2[2][id], BigRational::from_i64(1).unwrap());
    }

    fn diag(v: &[f64]) -> Mat<c64> {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { c64::new(v[i], 0.0) } else { c64::new(0.0, 0.0) })
    }

    fn word(spec: &str) -> Word {
        Word::from_letters(
            &spec
                .split_whitespace()
                .map(|t| {
                    let kind = match &t[..1] {
                        "U" => Kind::U,
                        "V" => Kind::V,
                        "Z" => Kind::Z,
                        _ => Kind::Y,
                    };
                    Letter::new(kind, t[1..].parse().unwrap())
                })
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn factorising_word() {
        let z1 = diag(&[1.0, 2.0, 3.0, -1.0]);
        let z2 = diag(&[0.5, 0.0, 1.0, 1.0]);
        let e = exact_word_expectation(&word("U1 Z1 V1 Z2"), &[z1, z2], 4).unwrap();
        let v = e.value_at(4).unwrap();
        assert!((v.re - 1.25 * 0.625).abs() < 1e-14);
        let s = series_coefficients(&e, 2, 1e-12).unwrap();
        assert!((s[0].re - 1.25 * 0.625).abs() < 1e-14 && s[1].norm() < 1e-14);
    }

    #[test]
    fn unbalanced_vanishes() {
        for n in 1..=5 {
            let w = Word::from_letters(&vec![Letter::new(Kind::U, 1); n]);
            let e = exact_word_expectation(&w, &[], 6).unwrap();
            assert_eq!(e.value_at(6).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn headline_word() {
        let z = diag(&[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        let e = exact_word_expectation(&word("U1 Z1 V1 Z1 U1 Z1 V1 Z1"), &[z], 8).unwrap();
        let v = e.value_at(8).unwrap();
        assert!((v.re + 1.0 / 63.0).abs() < 1e-14, "{v}");
        let s = series_coefficients(&e, 3, 1e-12).unwrap();
        assert!(s[0].norm() < 1e-14);
        assert!((s[1].re + 1.0).abs() < 1e-12 && (s[2].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_of_u_plus_adjoint() {
        let p = NCPoly::u(1).add(&NCPoly::v(1)).pow(4);
        let mut total = Complex64::new(0.0, 0.0);
        for (w, c) in p.terms() {
            total += c * exact_word_expectation(w, &[], 5).unwrap().value_at(5).unwrap();
        }
        assert!((total.re - 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_unitaries() {
        // E ts(U V U* V*) = 1/N² ... exactly ts(U A U* B) with A = V, B = V*: E = |ts V|² → 1/N².
        let e = exact_word_expectation(&word("U1 U2 V1 V2"), &[], 3).unwrap();
        assert!((e.value_at(3).unwrap().re - 1.0 / 9.0).abs() < 1e-14);
        assert!(exact_word_expectation(&word("U1 U1 U1 U1 V1 V1 V1 V1 U2 V2"), &[], 5).is_err());
    }
}
