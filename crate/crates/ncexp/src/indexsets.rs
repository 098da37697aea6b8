//! Recursive index families `J_n`, the maps `F^{j,v}` / `F̃^{j,v}` and the
//! depth function.
//!
//! An [`IndexSet`] of order `n` is an ordered list of `2n` distinct positive
//! integers. Positions matter: the depth of an integer is the position it
//! occupies in every set that contains it.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Largest order for which sets are stored inline.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("order {0} is too large (max {MAX_ORDER})")]
    OrderTooLarge(usize),
    #[error("position j={j} is invalid for an input set of order {n}")]
    BadPosition { j: usize, n: usize },
    #[error("branch key {0:?} is invalid")]
    BadBranch(Vec<usize>),
    #[error("integer {0} does not occur in J_{1}")]
    Missing(u32, usize),
    #[error("integer {0} occurs at several positions in J_{1}")]
    Inconsistent(u32, usize),
    #[error("sequence value c_{0} overflows")]
    Overflow(usize),
}

/// `c_0 = 0`, `c_{n+1} = 6 c_n + 6`.
pub fn c_seq(n: usize) -> Result<u64, IndexError> {
    let mut c: u64 = 0;
    for _ in 0..n {
        c = c
            .checked_mul(6)
            .and_then(|x| x.checked_add(6))
            .ok_or(IndexError::Overflow(n))?;
    }
    Ok(c)
}

/// An ordered list of `2n` integers, `n <= MAX_ORDER`. Cheap to copy so that
/// it can tag polynomial letters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct IndexSet {
    len: u8,
    e: [u16; 2 * MAX_ORDER],
}

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet {
        len: 0,
        e: [0; 2 * MAX_ORDER],
    };

    pub fn new(entries: &[u32]) -> Result<Self, IndexError> {
        if entries.len() > 2 * MAX_ORDER || !entries.len().is_multiple_of(2) {
            return Err(IndexError::OrderTooLarge(entries.len() / 2));
        }
        let mut e = [0u16; 2 * MAX_ORDER];
        for (k, &x) in entries.iter().enumerate() {
            e[k] = u16::try_from(x).map_err(|_| IndexError::OrderTooLarge(entries.len() / 2))?;
        }
        Ok(IndexSet {
            len: entries.len() as u8,
            e,
        })
    }

    pub fn order(&self) -> usize {
        self.len as usize / 2
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = u32> + '_ {
        self.e[..self.len as usize].iter().map(|&x| x as u32)
    }

    pub fn to_vec(&self) -> Vec<u32> {
        self.entries().collect()
    }

    /// 1-based access.
    pub fn get(&self, pos: usize) -> u32 {
        self.e[pos - 1] as u32
    }

    pub fn contains(&self, s: u32) -> bool {
        self.entries().any(|x| x == s)
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, x) in self.entries().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The four maps `F^{j,1}`, `F^{j,2}`, `F̃^{j,1}`, `F̃^{j,2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    F1,
    F2,
    Ft1,
    Ft2,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::F1, Variant::F2, Variant::Ft1, Variant::Ft2];

    fn parts(self) -> (u64, bool) {
        match self {
            Variant::F1 => (1, false),
            Variant::F2 => (2, false),
            Variant::Ft1 => (1, true),
            Variant::Ft2 => (2, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::F1 => "F1",
            Variant::F2 => "F2",
            Variant::Ft1 => "Ft1",
            Variant::Ft2 => "Ft2",
        }
    }
}

/// Apply `F_{n+1}^{j,v}` (or its shifted version) to a set of order `n`.
pub fn apply_map(variant: Variant, j: usize, set: &IndexSet) -> Result<IndexSet, IndexError> {
    let n = set.order();
    if n + 1 > MAX_ORDER {
        return Err(IndexError::OrderTooLarge(n + 1));
    }
    if j == 0 || j > 2 * n + 1 {
        return Err(IndexError::BadPosition { j, n });
    }
    let c = c_seq(n)?;
    let (v, tilde) = variant.parts();
    let shift = v * c;
    let ent: Vec<u64> = set.entries().map(u64::from).collect();
    let mut out: Vec<u64> = Vec::with_capacity(2 * n + 2);
    if j <= 2 * n {
        out.extend(ent[..j].iter().map(|x| x + shift));
        out.extend(ent[j - 1..].iter().copied());
        out.push(3 * c + 1);
    } else {
        out.extend(ent.iter().map(|x| x + shift));
        out.push(3 * c + 1 + v);
        out.push(3 * c + 1);
    }
    if tilde {
        for x in out.iter_mut() {
            *x += 3 * c + 3;
        }
    }
    let out: Vec<u32> = out.into_iter().map(|x| x as u32).collect();
    IndexSet::new(&out)
}

/// `J_n` with its branch decomposition and depth map.
#[derive(Clone, Debug)]
pub struct IndexUniverse {
    pub order: usize,
    pub all_sets: Vec<IndexSet>,
    branches: BTreeMap<Vec<usize>, Vec<IndexSet>>,
    images: BTreeMap<(Variant, usize), Vec<IndexSet>>,
    depth: BTreeMap<u32, usize>,
    /// Number of sets produced more than once by the defining union.
    pub collisions: usize,
}

/// Build `J_n` together with its branches `J_{i_0,…,i_{n-1}}`.
pub fn build_universe(n: usize) -> Result<IndexUniverse, IndexError> {
    if n > MAX_ORDER {
        return Err(IndexError::OrderTooLarge(n));
    }
    let mut branches: BTreeMap<Vec<usize>, Vec<IndexSet>> = BTreeMap::new();
    branches.insert(Vec::new(), vec![IndexSet::EMPTY]);
    let mut images = BTreeMap::new();
    let mut collisions = 0;
    for m in 0..n {
        let mut next = BTreeMap::new();
        let whole: Vec<IndexSet> = branches.values().flatten().copied().collect();
        for (key, sets) in &branches {
            for i in 1..=(2 * m + 1) {
                let mut out = Vec::with_capacity(4 * sets.len());
                for var in Variant::ALL {
                    for s in sets {
                        out.push(apply_map(var, i, s)?);
                    }
                }
                let mut k = key.clone();
                k.push(i);
                next.insert(k, out);
            }
        }
        if m + 1 == n {
            for i in 1..=(2 * m + 1) {
                for var in Variant::ALL {
                    let img = whole
                        .iter()
                        .map(|s| apply_map(var, i, s))
                        .collect::<Result<Vec<_>, _>>()?;
                    images.insert((var, i), img);
                }
            }
        }
        branches = next;
    }
    let mut all_sets: Vec<IndexSet> = branches.values().flatten().copied().collect();
    let before = all_sets.len();
    let mut seen = std::collections::BTreeSet::new();
    all_sets.retain(|s| seen.insert(*s));
    collisions += before - all_sets.len();

    let mut depth: BTreeMap<u32, usize> = BTreeMap::new();
    let mut clash = None;
    for s in &all_sets {
        for (pos, x) in s.entries().enumerate() {
            match depth.get(&x) {
                Some(&p) if p != pos + 1 => clash = Some(x),
                _ => {
                    depth.insert(x, pos + 1);
                }
            }
        }
    }
    if let Some(x) = clash {
        return Err(IndexError::Inconsistent(x, n));
    }
    Ok(IndexUniverse {
        order: n,
        all_sets,
        branches,
        images,
        depth,
        collisions,
    })
}

impl IndexUniverse {
    /// The branch `J_{i_0,…,i_{n-1}}`, with `i_j ∈ [1, 2j+1]`.
    pub fn branch(&self, key: &[usize]) -> Result<&[IndexSet], IndexError> {
        if key.len() != self.order || key.iter().enumerate().any(|(j, &i)| i == 0 || i > 2 * j + 1) {
            return Err(IndexError::BadBranch(key.to_vec()));
        }
        self.branches
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| IndexError::BadBranch(key.to_vec()))
    }

    pub fn branch_keys(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.branches.keys()
    }

    /// `F_n^{j,v}(J_{n-1})`, e.g. `J_2^{1,1}` is `map_image(F1, 1)` on `J_2`.
    pub fn map_image(&self, variant: Variant, j: usize) -> Result<&[IndexSet], IndexError> {
        self.images
            .get(&(variant, j))
            .map(|v| v.as_slice())
            .ok_or(IndexError::BadPosition {
                j,
                n: self.order.saturating_sub(1),
            })
    }

    /// Position of `s` in every set of `J_n` containing it (1-based).
    pub fn depth(&self, s: u32) -> Result<usize, IndexError> {
        self.depth
            .get(&s)
            .copied()
            .ok_or(IndexError::Missing(s, self.order))
    }

    pub fn depth_map(&self) -> &BTreeMap<u32, usize> {
        &self.depth
    }

    /// Ordered pairs `(I, J)` of the branch with `I_l = J_l` for all `l >= s`.
    pub fn tail_matching_pairs(
        &self,
        key: &[usize],
        s: usize,
    ) -> Result<Vec<(IndexSet, IndexSet)>, IndexError> {
        let sets = self.branch(key)?;
        let n2 = 2 * self.order;
        let mut out = Vec::new();
        for a in sets {
            for b in sets {
                if (s.max(1)..=n2).all(|l| a.get(l) == b.get(l)) {
                    out.push((*a, *b));
                }
            }
        }
        Ok(out)
    }

    /// The branch containing `set`, if any.
    pub fn branch_of(&self, set: &IndexSet) -> Option<&Vec<usize>> {
        self.branches
            .iter()
            .find(|(_, v)| v.contains(set))
            .map(|(k, _)| k)
    }
}

/// Build the four images of a set in one call: `I^{1,s}, I^{2,s}, Ĩ^{1,s}, Ĩ^{2,s}`.
pub fn images_of(set: &IndexSet, s: usize) -> Result<[IndexSet; 4], IndexError> {
    Ok([
        apply_map(Variant::F1, s, set)?,
        apply_map(Variant::F2, s, set)?,
        apply_map(Variant::Ft1, s, set)?,
        apply_map(Variant::Ft2, s, set)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(v: &[&[u32]]) -> Vec<IndexSet> {
        v.iter().map(|s| IndexSet::new(s).unwrap()).collect()
    }

    #[test]
    fn sequence() {
        assert_eq!(c_seq(0).unwrap(), 0);
        assert_eq!(c_seq(1).unwrap(), 6);
        assert_eq!(c_seq(3).unwrap(), 258);
        assert_eq!(c_seq(4).unwrap(), 1554);
        assert!(c_seq(40).is_err());
    }

    #[test]
    fn maps_on_empty_set() {
        let e = IndexSet::EMPTY;
        assert_eq!(apply_map(Variant::F1, 1, &e).unwrap().to_vec(), vec![2, 1]);
        assert_eq!(apply_map(Variant::F2, 1, &e).unwrap().to_vec(), vec![3, 1]);
        assert_eq!(apply_map(Variant::Ft1, 1, &e).unwrap().to_vec(), vec![5, 4]);
        assert!(apply_map(Variant::F2, 2, &e).is_err());
    }

    #[test]
    fn first_orders() {
        let u1 = build_universe(1).unwrap();
        assert_eq!(u1.all_sets, sets(&[&[2, 1], &[3, 1], &[5, 4], &[6, 4]]));
        let u2 = build_universe(2).unwrap();
        assert_eq!(
            u2.map_image(Variant::F1, 1).unwrap(),
            sets(&[&[8, 2, 1, 19], &[9, 3, 1, 19], &[11, 5, 4, 19], &[12, 6, 4, 19]]).as_slice()
        );
        assert_eq!(
            u2.map_image(Variant::Ft2, 3).unwrap(),
            sets(&[&[35, 34, 42, 40], &[36, 34, 42, 40], &[38, 37, 42, 40], &[39, 37, 42, 40]])
                .as_slice()
        );
        assert_eq!(u2.all_sets.len(), 48);
        assert_eq!(u2.branch(&[1, 1]).unwrap().len(), 16);
        assert!(u2.branch(&[1, 4]).is_err());
    }

    #[test]
    fn depths() {
        let u1 = build_universe(1).unwrap();
        assert_eq!(u1.depth(2).unwrap(), 1);
        assert_eq!(u1.depth(1).unwrap(), 2);
        let u2 = build_universe(2).unwrap();
        assert_eq!(u2.depth(19).unwrap(), 4);
        assert!(u2.depth(10_000).is_err());
    }

    #[test]
    fn tail_pairs() {
        let u0 = build_universe(0).unwrap();
        assert_eq!(u0.tail_matching_pairs(&[], 1).unwrap().len(), 1);
        let u1 = build_universe(1).unwrap();
        assert_eq!(u1.tail_matching_pairs(&[1], 3).unwrap().len(), 16);
        assert_eq!(u1.tail_matching_pairs(&[1], 2).unwrap().len(), 8);
    }
}
