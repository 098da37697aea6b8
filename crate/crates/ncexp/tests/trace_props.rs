use faer::complex_native::c64;
use faer::Mat;
use ncexp::expansion::{active_position, alpha, alpha0, matrix_context, patterns_at, Alpha1Integrand, AlphaInput, FourierSpec, QuadConfig, ZPattern};
use ncexp::freetrace::{Evaluator, FreeAtom, FreeWord, Time, TraceContext};
use ncexp::harness::parse_poly;
use ncexp::ncalg::{Kind, Letter, NCPoly, Word};
use ncexp::rmt::{mc_expect_trace, MatOp};
use ncexp::weingarten::{cycle_count, exact_word_expectation, series_coefficients, wg};
use ncexp::Complex64;
use proptest::prelude::*;

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn context() -> (TraceContext, Vec<u16>) {
    let mut ctx = TraceContext::new(4);
    let mut a = Mat::<c64>::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            a.write(i, j, c64::new((i + 2 * j) as f64 * 0.25 - 1.0, (i as f64 - j as f64) * 0.3));
        }
    }
    let d = Mat::<c64>::from_fn(4, 4, |i, j| if i == j { c64::new([1.0, -1.0, 0.5, 2.0][i], 0.0) } else { c64::new(0.0, 0.0) });
    let h1 = ctx.add_matrix(a);
    let h2 = ctx.add_matrix(d);
    (ctx, vec![h1, h1 ^ 1, h2])
}

fn factor(handles: Vec<u16>) -> impl Strategy<Value = (FreeAtom, i32)> {
    let power = prop::sample::select(vec![-2, -1, 1, 2]);
    prop_oneof![
        ((1u16..=2).prop_map(FreeAtom::Haar), power.clone()),
        (prop::sample::select(handles).prop_map(FreeAtom::Matrix), 1i32..=2),
        (
            (1u32..=2).prop_map(|c| FreeAtom::Fubm { family: c, dir: 1, time: Time::new(c as f64 - 0.5) }),
            power,
        ),
    ]
}

fn free_word(max: usize, handles: Vec<u16>) -> impl Strategy<Value = FreeWord> {
    prop::collection::vec(factor(handles), 0..=max).prop_map(FreeWord::new)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn trace_is_tracial(w in free_word(4, context().1), v in free_word(4, context().1)) {
        let (ctx, _) = context();
        let mut ev = Evaluator::new(&ctx);
        let a = ev.trace(&w.mul(&v)).unwrap();
        let b = ev.trace(&v.mul(&w)).unwrap();
        prop_assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()), "{a} vs {b}");
    }

    #[test]
    fn trace_is_positive(w in free_word(6, context().1)) {
        let (ctx, _) = context();
        let mut ev = Evaluator::new(&ctx);
        let a = ev.trace(&w.mul(&w.adjoint())).unwrap();
        prop_assert!(a.re >= -1e-9 && a.im.abs() <= 1e-9 * (1.0 + a.re), "{a}");
    }
}

fn one_unitary_word(max: usize) -> impl Strategy<Value = Word> {
    let letter = prop::sample::select(vec![Kind::U, Kind::V, Kind::Z, Kind::Y]).prop_map(|k| Letter::new(k, 1));
    prop::collection::vec(letter, 1..=max).prop_map(|ls| Word::from_letters(&ls))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn free_trace_is_the_large_n_limit(w in one_unitary_word(8)) {
        let z = ZPattern { values: vec![Complex64::new(1.0, 0.0), Complex64::new(-0.5, 0.5), Complex64::new(2.0, 0.0), Complex64::new(0.25, -1.0)] };
        let zs = patterns_at(std::slice::from_ref(&z), 4).unwrap();
        let q = NCPoly::monomial(one(), w.clone());
        let (a0, _) = alpha0(&q, &zs, 4, &QuadConfig::default()).unwrap();
        let e = exact_word_expectation(&w, &zs, 4).unwrap();
        let lead = series_coefficients(&e, 0, 1e-9).unwrap()[0];
        prop_assert!((a0 - lead).norm() <= 1e-9, "{w}: {a0} vs {lead}");
    }
}

#[test]
fn weingarten_leading_constants_are_finite() {
    // N^{k + |σ|} Wg(σ, N) tends to a Möbius constant.
    for k in 1..=4 {
        let a = wg(k, 200).unwrap();
        let b = wg(k, 400).unwrap();
        for (c, t) in a.classes.types.iter().enumerate() {
            let len = k - t.len();
            let sa = a.value_f64(c) * 200f64.powi((k + len) as i32);
            let sb = b.value_f64(c) * 400f64.powi((k + len) as i32);
            assert!(sa.is_finite() && sa.abs() < 1e3, "k={k} {t:?}: {sa}");
            assert!((sa - sb).abs() <= 1e-3 * sb.abs(), "k={k} {t:?}: {sa} vs {sb}");
            assert_eq!(sb.signum(), if len % 2 == 0 { 1.0 } else { -1.0 });
        }
    }
    assert_eq!(cycle_count(&[0, 1, 2]), 3);
}

fn headline_words() -> Vec<&'static str> {
    vec!["U1 Z1 U1* Z1 U1 Z1 U1* Z1", "U1 Z1 U1 Z1 U1* Z1 U1* Z1", "U1 Z1 U1* Z1", "U1 U1 Z1 U1* U1* Z1"]
}

#[test]
fn odd_coefficients_vanish() {
    let z = ZPattern::real(&[1.0, 2.0, -0.5, 3.0]);
    let zs = patterns_at(std::slice::from_ref(&z), 4).unwrap();
    for text in headline_words() {
        let p = parse_poly(text).unwrap();
        let (w, _) = p.terms().next().unwrap();
        let e = exact_word_expectation(w, &zs, 4).unwrap();
        // series_coefficients rejects odd powers above the tolerance.
        let c = series_coefficients(&e, 3, 1e-10).unwrap();
        assert_eq!(c.len(), 4);
    }
}

#[test]
fn oracle_agrees_with_monte_carlo() {
    let z = ZPattern::sign_split();
    let zs = patterns_at(std::slice::from_ref(&z), 16).unwrap();
    let ops: Vec<MatOp> = zs.iter().cloned().map(MatOp::from_matrix).collect();
    for (k, text) in headline_words().into_iter().enumerate() {
        let p = parse_poly(text).unwrap();
        let (w, _) = p.terms().next().unwrap();
        let exact = exact_word_expectation(w, &zs, 16).unwrap().value_at(16).unwrap();
        let est = mc_expect_trace(&p, &FourierSpec::Polynomial(1), &ops, 16, 4000, 77 + k as u64).unwrap();
        assert!(est.z_against(exact) <= 3.0, "{text}: {exact} vs {:?}", est);
    }
}

#[test]
fn self_adjoint_inputs_give_real_coefficients() {
    let z = ZPattern::real(&[1.0, 2.0, -0.5, 3.0]);
    let zs = patterns_at(std::slice::from_ref(&z), 4).unwrap();
    let cfg = QuadConfig { nodes: 12, ..QuadConfig::default() };
    for text in ["U1 Z1 U1* + U1 Z1* U1*", "U1 Z1 U1* Z1* + Z1 U1 Z1* U1*", "(U1 + U1* + Z1 + Z1*)^2"] {
        let q = parse_poly(text).unwrap();
        assert!(q.is_self_adjoint());
        let r = alpha(1, &AlphaInput::Poly(q), &zs, 4, &cfg).unwrap();
        assert_eq!(r.alpha0.im, 0.0, "{text}");
        assert!(r.alpha1.im.abs() <= r.quadrature_error.max(1e-12), "{text}: {} vs {}", r.alpha1.im, r.quadrature_error);
    }
}

#[test]
fn alpha1_integrand_decays_with_the_largest_gap() {
    let z = ZPattern::sign_split();
    let zs = patterns_at(std::slice::from_ref(&z), 2).unwrap();
    let q = parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1").unwrap();
    let (ctx, hs) = matrix_context(&zs, 2).unwrap();
    let integrand = Alpha1Integrand::new(&q, &ctx, hs, &QuadConfig::default()).unwrap();
    let mut ev = Evaluator::new(&ctx);
    let grid = [0.0, 1.0, 2.0, 4.0, 8.0, 12.0, 16.0];
    let mut scaled = Vec::new();
    for &a in &grid {
        for &b in &grid {
            let (v, _) = integrand.eval(&mut ev, a, b).unwrap();
            scaled.push(v.norm() * (a.max(b) / 4.0).exp());
        }
    }
    let c = scaled[0].max(1.0);
    for s in &scaled {
        assert!(*s <= 4.0 * c, "{s} vs {c}");
    }
}

#[test]
fn indicators_partition_the_time_range() {
    let prefix = [0.5, 1.25, 1.25, 3.0];
    let mut counts = [0usize; 5];
    for k in 0..=4000 {
        let t = k as f64 * 1e-3;
        let s = active_position(&prefix, t);
        let mut owners = 0;
        let mut prev = 0.0;
        for (j, &p) in prefix.iter().enumerate() {
            if t >= prev && t < p {
                owners += 1;
                assert_eq!(s, j + 1, "t = {t}");
            }
            prev = p;
        }
        if t >= prefix[3] {
            owners += 1;
            assert_eq!(s, 5);
        }
        assert_eq!(owners, 1, "t = {t}");
        counts[s - 1] += 1;
    }
    // The repeated node gives an empty piece.
    assert_eq!(counts[2], 0);
    assert!(counts.iter().enumerate().all(|(i, &c)| i == 2 || c > 0));
}
