use ncexp::indexsets::build_universe;
use ncexp::ncalg::{cyclic, delta, Kind, Letter, NCPoly, Word};
use ncexp::Complex64;
use proptest::prelude::*;

fn letter() -> impl Strategy<Value = Letter> {
    (prop_oneof![Just(Kind::U), Just(Kind::V), Just(Kind::Z), Just(Kind::Y)], 1usize..=2)
        .prop_map(|(k, i)| Letter::new(k, i))
}

fn word(max: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(letter(), 0..=max).prop_map(|ls| Word::from_letters(&ls))
}

fn poly() -> impl Strategy<Value = NCPoly> {
    prop::collection::vec((word(5), -3i32..=3, -3i32..=3), 1..=4).prop_map(|terms| {
        NCPoly::from_terms(terms.into_iter().map(|(w, a, b)| (w, Complex64::new(a as f64, b as f64))))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn leibniz(p in poly(), q in poly(), i in 1usize..=2) {
        let lhs = delta(i, 2, &p.mul(&q)).unwrap();
        let rhs = delta(i, 2, &p).unwrap().right_mul(&q).add(&delta(i, 2, &q).unwrap().left_mul(&p));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn adjoint_is_an_involutive_antihomomorphism(p in poly(), q in poly()) {
        prop_assert_eq!(p.adjoint().adjoint(), p.clone());
        prop_assert_eq!(p.mul(&q).adjoint(), q.adjoint().mul(&p.adjoint()));
        prop_assert_eq!(p.add(&q).adjoint(), p.adjoint().add(&q.adjoint()));
    }

    #[test]
    fn cyclic_derivative_of_adjoint(p in poly(), i in 1usize..=2) {
        let lhs = cyclic(i, 2, &p.adjoint()).unwrap();
        let rhs = cyclic(i, 2, &p).unwrap().adjoint().scale(Complex64::new(-1.0, 0.0));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn delta_lowers_degree(w in word(8), i in 1usize..=2) {
        let p = NCPoly::monomial(Complex64::new(1.0, 0.0), w.clone());
        for (a, b, _) in delta(i, 2, &p).unwrap().terms() {
            prop_assert!(a.degree() + b.degree() <= w.degree());
        }
    }
}

#[test]
fn delta_of_u_times_adjoint_vanishes() {
    for d in 1..=2 {
        for i in 1..=d {
            let p = NCPoly::u(i).mul(&NCPoly::v(i));
            assert!(delta(i, d, &p).unwrap().is_zero());
        }
    }
}

#[test]
fn index_families_for_small_orders() {
    let mut prev = 1;
    for n in 1..=3 {
        let u = build_universe(n).unwrap();
        // Union of the branches is disjoint and has the expected size.
        assert_eq!(u.collisions, 0, "collision at n = {n}");
        let expected = 4 * (2 * n - 1) * prev;
        assert_eq!(u.all_sets.len(), expected);
        prev = u.all_sets.len();

        let mut pos = std::collections::BTreeMap::new();
        for s in &u.all_sets {
            for (k, x) in s.entries().enumerate() {
                assert_eq!(*pos.entry(x).or_insert(k), k, "value {x} at two depths in J_{n}");
                assert_eq!(u.depth(x).unwrap(), k + 1);
            }
        }
        for key in u.branch_keys() {
            let b = u.branch(key).unwrap();
            for i in b {
                for k in b {
                    for l in 1..=2 * n {
                        if i.get(l) == k.get(l) {
                            assert!((l..=2 * n).all(|m| i.get(m) == k.get(m)), "tail of {i} and {k} from {l}");
                        }
                    }
                }
            }
        }
    }
}
