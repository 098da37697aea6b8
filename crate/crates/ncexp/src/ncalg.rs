//! Noncommutative polynomials over the letters `U_i, V_i = U_i*, Z_j, Y_j = Z_j*`,
//! extended by opaque exponential atoms `e^{λR}`.
//!
//! Letters may carry an [`IndexSet`] tag; untagged letters are the ordinary
//! variables, tagged ones are the variables `U_{i,I}` used when the operators
//! `L` are iterated.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::indexsets::IndexSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgError {
    #[error("unitary index {0} out of range 1..={1}")]
    IndexOutOfRange(usize, usize),
    #[error("exponential atoms need delta_alpha, not delta")]
    ExpAtom,
    #[error("alpha = {0} is outside [0, 1]")]
    AlphaRange(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    U,
    V,
    Z,
    Y,
}

impl Kind {
    pub fn adjoint(self) -> Kind {
        match self {
            Kind::U => Kind::V,
            Kind::V => Kind::U,
            Kind::Z => Kind::Y,
            Kind::Y => Kind::Z,
        }
    }

    pub fn is_unitary(self) -> bool {
        matches!(self, Kind::U | Kind::V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub kind: Kind,
    pub index: u16,
    pub tag: IndexSet,
}

impl Letter {
    pub fn new(kind: Kind, index: usize) -> Self {
        Letter {
            kind,
            index: index as u16,
            tag: IndexSet::EMPTY,
        }
    }

    pub fn tagged(kind: Kind, index: usize, tag: IndexSet) -> Self {
        Letter {
            kind,
            index: index as u16,
            tag,
        }
    }

    pub fn adjoint(self) -> Self {
        Letter {
            kind: self.kind.adjoint(),
            ..self
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (k, star) = match self.kind {
            Kind::U => ("U", ""),
            Kind::V => ("U", "*"),
            Kind::Z => ("Z", ""),
            Kind::Y => ("Z", "*"),
        };
        write!(f, "{k}{}", self.index)?;
        if !self.tag.is_empty() {
            write!(f, "{}", self.tag)?;
        }
        write!(f, "{star}")
    }
}

fn canon(z: Complex64) -> Complex64 {
    Complex64::new(z.re + 0.0, z.im + 0.0)
}

fn cmp_c(a: &Complex64, b: &Complex64) -> Ordering {
    (a.re.to_bits(), a.im.to_bits()).cmp(&(b.re.to_bits(), b.im.to_bits()))
}

/// `e^{scalar · poly}`. The unitary `e^{iR}` of a self-adjoint `R` is `scalar = i`, `poly = R`.
#[derive(Clone, Debug)]
pub struct ExpAtom {
    pub scalar: Complex64,
    pub poly: NCPoly,
}

impl ExpAtom {
    pub fn new(scalar: Complex64, poly: NCPoly) -> Self {
        ExpAtom {
            scalar: canon(scalar),
            poly,
        }
    }

    pub fn adjoint(&self) -> Self {
        ExpAtom::new(self.scalar.conj(), self.poly.adjoint())
    }
}

impl PartialEq for ExpAtom {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ExpAtom {}
impl PartialOrd for ExpAtom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ExpAtom {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_c(&self.scalar, &other.scalar).then_with(|| self.poly.cmp(&other.poly))
    }
}
impl Hash for ExpAtom {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.scalar.re.to_bits().hash(state);
        self.scalar.im.to_bits().hash(state);
        self.poly.hash(state);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    L(Letter),
    E(Arc<ExpAtom>),
}

impl Factor {
    pub fn adjoint(&self) -> Factor {
        match self {
            Factor::L(l) => Factor::L(l.adjoint()),
            Factor::E(e) => Factor::E(Arc::new(e.adjoint())),
        }
    }
}

/// An ordered product of factors; the empty word is the unit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<Factor>);

impl Word {
    pub fn unit() -> Self {
        Word(Vec::new())
    }

    pub fn from_letters(ls: &[Letter]) -> Self {
        Word(ls.iter().map(|&l| Factor::L(l)).collect())
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of letter factors; exponential atoms do not count.
    pub fn degree(&self) -> usize {
        self.0.iter().filter(|f| matches!(f, Factor::L(_))).count()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn adjoint(&self) -> Word {
        Word(self.0.iter().rev().map(Factor::adjoint).collect())
    }

    pub fn has_exp(&self) -> bool {
        self.0.iter().any(|f| matches!(f, Factor::E(_)))
    }

    pub fn slice(&self, a: usize, b: usize) -> Word {
        Word(self.0[a..b].to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            match x {
                Factor::L(l) => write!(f, "{l}")?,
                Factor::E(e) => write!(f, "exp[{}; {}]", fmt_c(e.scalar), e.poly)?,
            }
        }
        Ok(())
    }
}

/// `(a+bi)`, the coefficient syntax accepted by the parser.
pub fn fmt_c(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("({}{}{}i)", z.re, sign, z.im.abs())
}

/// Finite complex combination of words, stored without zero coefficients.
#[derive(Clone, Debug, Default)]
pub struct NCPoly {
    terms: BTreeMap<Word, Complex64>,
}

impl PartialEq for NCPoly {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for NCPoly {}
impl PartialOrd for NCPoly {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for NCPoly {
    fn cmp(&self, other: &Self) -> Ordering {
        let mut a = self.terms.iter();
        let mut b = other.terms.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((wa, ca)), Some((wb, cb))) => {
                    let o = wa.cmp(wb).then_with(|| cmp_c(ca, cb));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
            }
        }
    }
}
impl Hash for NCPoly {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for (w, c) in &self.terms {
            w.hash(state);
            c.re.to_bits().hash(state);
            c.im.to_bits().hash(state);
        }
    }
}

impl NCPoly {
    pub fn zero() -> Self {
        NCPoly::default()
    }

    pub fn one() -> Self {
        NCPoly::monomial(Complex64::new(1.0, 0.0), Word::unit())
    }

    pub fn constant(c: Complex64) -> Self {
        NCPoly::monomial(c, Word::unit())
    }

    pub fn letter(l: Letter) -> Self {
        NCPoly::monomial(Complex64::new(1.0, 0.0), Word(vec![Factor::L(l)]))
    }

    pub fn u(i: usize) -> Self {
        NCPoly::letter(Letter::new(Kind::U, i))
    }
    pub fn v(i: usize) -> Self {
        NCPoly::letter(Letter::new(Kind::V, i))
    }
    pub fn z(i: usize) -> Self {
        NCPoly::letter(Letter::new(Kind::Z, i))
    }
    pub fn y(i: usize) -> Self {
        NCPoly::letter(Letter::new(Kind::Y, i))
    }

    /// `e^{scalar · poly}` as a one-factor word.
    pub fn exp(scalar: Complex64, poly: NCPoly) -> Self {
        NCPoly::monomial(
            Complex64::new(1.0, 0.0),
            Word(vec![Factor::E(Arc::new(ExpAtom::new(scalar, poly)))]),
        )
    }

    pub fn monomial(c: Complex64, w: Word) -> Self {
        let mut p = NCPoly::zero();
        p.add_term(w, c);
        p
    }

    pub fn from_terms(it: impl IntoIterator<Item = (Word, Complex64)>) -> Self {
        let mut p = NCPoly::zero();
        for (w, c) in it {
            p.add_term(w, c);
        }
        p
    }

    pub fn add_term(&mut self, w: Word, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry(w) {
            Entry::Vacant(v) => {
                v.insert(canon(c));
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == Complex64::new(0.0, 0.0) {
                    o.remove();
                } else {
                    *o.get_mut() = canon(s);
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, w: &Word) -> Complex64 {
        self.terms.get(w).copied().unwrap_or_default()
    }

    pub fn add(&self, other: &NCPoly) -> NCPoly {
        let mut p = self.clone();
        for (w, c) in &other.terms {
            p.add_term(w.clone(), *c);
        }
        p
    }

    pub fn sub(&self, other: &NCPoly) -> NCPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, a: Complex64) -> NCPoly {
        NCPoly::from_terms(self.terms.iter().map(|(w, c)| (w.clone(), c * a)))
    }

    pub fn mul(&self, other: &NCPoly) -> NCPoly {
        let mut p = NCPoly::zero();
        for (w1, c1) in &self.terms {
            for (w2, c2) in &other.terms {
                p.add_term(w1.concat(w2), c1 * c2);
            }
        }
        p
    }

    pub fn pow(&self, k: usize) -> NCPoly {
        let mut p = NCPoly::one();
        for _ in 0..k {
            p = p.mul(self);
        }
        p
    }

    pub fn adjoint(&self) -> NCPoly {
        NCPoly::from_terms(self.terms.iter().map(|(w, c)| (w.adjoint(), c.conj())))
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.adjoint() == *self
    }

    /// Largest word degree (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    pub fn has_exp(&self) -> bool {
        self.terms.keys().any(Word::has_exp)
    }

    /// `Σ_M |c_M| A^{deg M}`.
    pub fn norm_a(&self, a: f64) -> f64 {
        self.terms
            .iter()
            .map(|(w, c)| c.norm() * a.powi(w.degree() as i32))
            .sum()
    }

    /// Replace every letter by a polynomial (exponential atoms are mapped
    /// recursively). Letters without an image are kept.
    pub fn substitute(&self, f: &dyn Fn(&Letter) -> Option<NCPoly>) -> NCPoly {
        let mut out = NCPoly::zero();
        for (w, c) in &self.terms {
            let mut acc = NCPoly::constant(*c);
            for fac in &w.0 {
                let img = match fac {
                    Factor::L(l) => f(l).unwrap_or_else(|| NCPoly::letter(*l)),
                    Factor::E(e) => NCPoly::exp(e.scalar, e.poly.substitute(f)),
                };
                acc = acc.mul(&img);
            }
            out = out.add(&acc);
        }
        out
    }

    /// Letters appearing anywhere, including inside exponents.
    pub fn letters(&self) -> Vec<Letter> {
        let mut v = Vec::new();
        fn walk(p: &NCPoly, v: &mut Vec<Letter>) {
            for w in p.terms.keys() {
                for f in &w.0 {
                    match f {
                        Factor::L(l) => {
                            if !v.contains(l) {
                                v.push(*l)
                            }
                        }
                        Factor::E(e) => walk(&e.poly, v),
                    }
                }
            }
        }
        walk(self, &mut v);
        v.sort();
        v
    }

    /// Largest unitary index and matrix index used.
    pub fn alphabet(&self) -> (usize, usize) {
        let ls = self.letters();
        let d = ls
            .iter()
            .filter(|l| l.kind.is_unitary())
            .map(|l| l.index as usize)
            .max()
            .unwrap_or(0);
        let q = ls
            .iter()
            .filter(|l| !l.kind.is_unitary())
            .map(|l| l.index as usize)
            .max()
            .unwrap_or(0);
        (d, q)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl fmt::Display for NCPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (w, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if w.is_unit() {
                write!(f, "{}", fmt_c(*c))?;
            } else {
                write!(f, "{} {}", fmt_c(*c), w)?;
            }
        }
        Ok(())
    }
}

/// Finite sum of simple tensors `c · A ⊗ B`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorPoly {
    terms: BTreeMap<(Word, Word), Complex64>,
}

impl TensorPoly {
    pub fn zero() -> Self {
        TensorPoly::default()
    }

    pub fn simple(c: Complex64, a: Word, b: Word) -> Self {
        let mut t = TensorPoly::zero();
        t.add_term(a, b, c);
        t
    }

    pub fn add_term(&mut self, a: Word, b: Word, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry((a, b)) {
            Entry::Vacant(v) => {
                v.insert(canon(c));
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == Complex64::new(0.0, 0.0) {
                    o.remove();
                } else {
                    *o.get_mut() = canon(s);
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Word, Complex64)> {
        self.terms.iter().map(|((a, b), c)| (a, b, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &TensorPoly) -> TensorPoly {
        let mut t = self.clone();
        for ((a, b), c) in &other.terms {
            t.add_term(a.clone(), b.clone(), *c);
        }
        t
    }

    pub fn scale(&self, s: Complex64) -> TensorPoly {
        let mut t = TensorPoly::zero();
        for ((a, b), c) in &self.terms {
            t.add_term(a.clone(), b.clone(), c * s);
        }
        t
    }

    /// `(P ⊗ 1) · T`.
    pub fn left_mul(&self, p: &NCPoly) -> TensorPoly {
        let mut t = TensorPoly::zero();
        for (w, c) in p.terms() {
            for ((a, b), d) in &self.terms {
                t.add_term(w.concat(a), b.clone(), c * d);
            }
        }
        t
    }

    /// `T · (1 ⊗ Q)`.
    pub fn right_mul(&self, q: &NCPoly) -> TensorPoly {
        let mut t = TensorPoly::zero();
        for ((a, b), d) in &self.terms {
            for (w, c) in q.terms() {
                t.add_term(a.clone(), b.concat(w), c * d);
            }
        }
        t
    }

    /// Product in the tensor algebra, `(A⊗B)(C⊗D) = AC ⊗ BD`.
    pub fn mul(&self, other: &TensorPoly) -> TensorPoly {
        let mut t = TensorPoly::zero();
        for ((a, b), c) in &self.terms {
            for ((x, y), d) in &other.terms {
                t.add_term(a.concat(x), b.concat(y), c * d);
            }
        }
        t
    }

    /// `m(A ⊗ B) = BA`.
    pub fn m(&self) -> NCPoly {
        NCPoly::from_terms(self.terms.iter().map(|((a, b), c)| (b.concat(a), *c)))
    }

    /// `𝔪(A ⊗ B) = AB`.
    pub fn mult(&self) -> NCPoly {
        NCPoly::from_terms(self.terms.iter().map(|((a, b), c)| (a.concat(b), *c)))
    }

    /// Swap legs and take adjoints: the adjoint on the tensor product.
    pub fn adjoint(&self) -> TensorPoly {
        let mut t = TensorPoly::zero();
        for ((a, b), c) in &self.terms {
            t.add_term(a.adjoint(), b.adjoint(), c.conj());
        }
        t
    }
}

impl fmt::Display for TensorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, ((a, b), c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{} [{}] ⊗ [{}]", fmt_c(*c), a, b)?;
        }
        Ok(())
    }
}

/// `A ⊗ B # C = ACB`.
pub fn sharp(t: &TensorPoly, c: &NCPoly) -> NCPoly {
    let mut p = NCPoly::zero();
    for (a, b, x) in t.terms() {
        for (w, y) in c.terms() {
            p.add_term(a.concat(w).concat(b), x * y);
        }
    }
    p
}

/// `A ⊗ B ~# C = BCA`.
pub fn sharp_tilde(t: &TensorPoly, c: &NCPoly) -> NCPoly {
    let mut p = NCPoly::zero();
    for (a, b, x) in t.terms() {
        for (w, y) in c.terms() {
            p.add_term(b.concat(w).concat(a), x * y);
        }
    }
    p
}

/// Which letters a derivation acts on: `δ_i` (any tag) or `δ_{i,I}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selector {
    pub index: u16,
    pub tag: Option<IndexSet>,
}

impl Selector {
    pub fn plain(i: usize) -> Self {
        Selector {
            index: i as u16,
            tag: None,
        }
    }

    pub fn tagged(i: usize, tag: IndexSet) -> Self {
        Selector {
            index: i as u16,
            tag: Some(tag),
        }
    }

    fn hits(&self, l: &Letter) -> bool {
        l.kind.is_unitary() && l.index == self.index && self.tag.is_none_or(|t| t == l.tag)
    }
}

/// `δ_i` on polynomials. `d` is the number of unitary variables.
pub fn delta(i: usize, d: usize, p: &NCPoly) -> Result<TensorPoly, AlgError> {
    if i == 0 || i > d {
        return Err(AlgError::IndexOutOfRange(i, d));
    }
    delta_sel(Selector::plain(i), p)
}

/// `δ_i` or `δ_{i,I}` on polynomials without exponential atoms.
pub fn delta_sel(sel: Selector, p: &NCPoly) -> Result<TensorPoly, AlgError> {
    if p.has_exp() {
        return Err(AlgError::ExpAtom);
    }
    Ok(delta_alpha_sel(sel, 0.0, p))
}

/// `𝒟_i P = m ∘ δ_i P`.
pub fn cyclic(i: usize, d: usize, p: &NCPoly) -> Result<NCPoly, AlgError> {
    Ok(delta(i, d, p)?.m())
}

/// `δ_{α,i}`: Leibniz rule plus
/// `δ_α e^{λR} = (e^{αλR} ⊗ 1)(λ δR)(1 ⊗ e^{(1-α)λR})`.
pub fn delta_alpha(i: usize, d: usize, alpha: f64, p: &NCPoly) -> Result<TensorPoly, AlgError> {
    if i == 0 || i > d {
        return Err(AlgError::IndexOutOfRange(i, d));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AlgError::AlphaRange(alpha));
    }
    Ok(delta_alpha_sel(Selector::plain(i), alpha, p))
}

pub fn cyclic_alpha(i: usize, d: usize, alpha: f64, p: &NCPoly) -> Result<NCPoly, AlgError> {
    Ok(delta_alpha(i, d, alpha, p)?.m())
}

fn exp_factor(scalar: Complex64, poly: &NCPoly) -> Option<Factor> {
    if scalar == Complex64::new(0.0, 0.0) || poly.is_zero() {
        None
    } else {
        Some(Factor::E(Arc::new(ExpAtom::new(scalar, poly.clone()))))
    }
}

/// Derivative of a single word, as a tensor polynomial.
pub fn delta_word(sel: Selector, alpha: f64, w: &Word) -> TensorPoly {
    let mut t = TensorPoly::zero();
    let one = Complex64::new(1.0, 0.0);
    for (p, f) in w.0.iter().enumerate() {
        match f {
            Factor::L(l) if sel.hits(l) => {
                if l.kind == Kind::U {
                    t.add_term(w.slice(0, p + 1), w.slice(p + 1, w.0.len()), one);
                } else {
                    t.add_term(w.slice(0, p), w.slice(p, w.0.len()), -one);
                }
            }
            Factor::L(_) => {}
            Factor::E(e) => {
                let inner = delta_alpha_sel(sel, alpha, &e.poly);
                if inner.is_zero() {
                    continue;
                }
                let left_exp = exp_factor(e.scalar * alpha, &e.poly);
                let right_exp = exp_factor(e.scalar * (1.0 - alpha), &e.poly);
                for (a, b, c) in inner.terms() {
                    let mut lw = w.0[..p].to_vec();
                    lw.extend(left_exp.iter().cloned());
                    lw.extend_from_slice(&a.0);
                    let mut rw = b.0.clone();
                    rw.extend(right_exp.iter().cloned());
                    rw.extend_from_slice(&w.0[p + 1..]);
                    t.add_term(Word(lw), Word(rw), c * e.scalar);
                }
            }
        }
    }
    t
}

/// `δ_{α,i}` / `δ_{α,i,I}` without range checks.
pub fn delta_alpha_sel(sel: Selector, alpha: f64, p: &NCPoly) -> TensorPoly {
    let mut t = TensorPoly::zero();
    for (w, c) in p.terms() {
        let dw = delta_word(sel, alpha, w);
        for (a, b, x) in dw.terms() {
            t.add_term(a.clone(), b.clone(), x * c);
        }
    }
    t
}

/// Apply a derivation to each leg: returns `Σ c · δ(A) ⊗ B` or `Σ c · A ⊗ δ(B)`
/// flattened as triples `(c, A1, A2, B)` for the left leg.
pub fn delta_left_leg(sel: Selector, alpha: f64, t: &TensorPoly) -> Vec<(Complex64, Word, Word, Word)> {
    let mut out = Vec::new();
    for (a, b, c) in t.terms() {
        for (a1, a2, x) in delta_word(sel, alpha, a).terms() {
            out.push((c * x, a1.clone(), a2.clone(), b.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn products_and_adjoints() {
        let p = NCPoly::u(1).mul(&NCPoly::v(1));
        assert_eq!(p.len(), 1);
        assert_eq!(p.coeff(&Word::from_letters(&[Letter::new(Kind::U, 1), Letter::new(Kind::V, 1)])), c(1.0, 0.0));
        let q = NCPoly::u(1).add(&NCPoly::z(1)).mul(&NCPoly::one());
        assert_eq!(q, NCPoly::u(1).add(&NCPoly::z(1)));
        let r = NCPoly::u(1).scale(c(2.0, 0.0)).mul(&NCPoly::z(1).scale(c(0.0, 3.0)));
        assert_eq!(r, NCPoly::u(1).mul(&NCPoly::z(1)).scale(c(0.0, 6.0)));
        assert_eq!(NCPoly::u(1).mul(&NCPoly::z(1)).adjoint(), NCPoly::y(1).mul(&NCPoly::v(1)));
        assert_eq!(NCPoly::u(1).scale(c(0.0, 1.0)).adjoint(), NCPoly::v(1).scale(c(0.0, -1.0)));
        let sa = NCPoly::u(1).add(&NCPoly::v(1));
        let e = NCPoly::exp(c(0.0, 0.7), sa.clone());
        assert_eq!(e.adjoint(), NCPoly::exp(c(0.0, -0.7), sa));
    }

    #[test]
    fn norm() {
        let p = NCPoly::u(1).add(&NCPoly::z(1).mul(&NCPoly::u(1)).scale(c(2.0, 0.0)));
        assert_eq!(p.norm_a(3.0), 21.0);
        assert_eq!(NCPoly::zero().norm_a(3.0), 0.0);
    }

    #[test]
    fn derivatives() {
        let t = delta(1, 1, &NCPoly::u(1)).unwrap();
        assert_eq!(t, TensorPoly::simple(c(1.0, 0.0), Word::from_letters(&[Letter::new(Kind::U, 1)]), Word::unit()));
        assert!(delta(1, 1, &NCPoly::u(1).mul(&NCPoly::v(1))).unwrap().is_zero());
        assert!(delta(1, 1, &NCPoly::z(1)).unwrap().is_zero());
        assert!(delta(2, 1, &NCPoly::u(1)).is_err());
        assert_eq!(cyclic(1, 1, &NCPoly::u(1).mul(&NCPoly::z(1))).unwrap(), NCPoly::z(1).mul(&NCPoly::u(1)));
        assert_eq!(cyclic(1, 1, &NCPoly::u(1).pow(3)).unwrap(), NCPoly::u(1).pow(3).scale(c(3.0, 0.0)));
        assert_eq!(cyclic(1, 1, &NCPoly::v(1)).unwrap(), NCPoly::v(1).scale(c(-1.0, 0.0)));
    }

    #[test]
    fn sharps() {
        let t = TensorPoly::simple(c(1.0, 0.0), Word::from_letters(&[Letter::new(Kind::U, 1)]), Word::from_letters(&[Letter::new(Kind::Z, 1)]));
        let y = NCPoly::y(1);
        assert_eq!(sharp(&t, &y), NCPoly::u(1).mul(&y).mul(&NCPoly::z(1)));
        assert_eq!(sharp_tilde(&t, &y), NCPoly::z(1).mul(&y).mul(&NCPoly::u(1)));
        assert!(sharp(&TensorPoly::zero(), &y).is_zero());
    }

    #[test]
    fn duhamel_split() {
        let i = c(0.0, 1.0);
        let uv = NCPoly::u(1).mul(&NCPoly::v(1));
        assert!(delta_alpha(1, 1, 0.3, &NCPoly::exp(i * 0.5, uv)).unwrap().is_zero());
        let q = NCPoly::u(1).mul(&NCPoly::z(1)).mul(&NCPoly::v(1));
        for a in [0.0, 0.25, 1.0] {
            assert_eq!(delta_alpha(1, 1, a, &q).unwrap(), delta(1, 1, &q).unwrap());
        }
        let e = NCPoly::exp(i * 0.5, NCPoly::u(1));
        let t = delta_alpha(1, 1, 0.0, &e).unwrap();
        let expected = TensorPoly::simple(
            i * 0.5,
            Word::from_letters(&[Letter::new(Kind::U, 1)]),
            e.terms().next().unwrap().0.clone(),
        );
        assert_eq!(t, expected);
        assert!(delta_alpha(1, 1, 1.5, &e).is_err());
    }
}
