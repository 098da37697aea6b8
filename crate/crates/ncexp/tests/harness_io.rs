use std::path::PathBuf;

use ncexp::expansion::{QuadConfig, ZPattern};
use ncexp::harness::config::*;
use ncexp::harness::{parse_poly, run, ExperimentConfig};
use ncexp::ncalg::{Kind, Letter, NCPoly, Word};
use ncexp::Complex64;
use proptest::prelude::*;

fn letter() -> impl Strategy<Value = Letter> {
    (prop_oneof![Just(Kind::U), Just(Kind::V), Just(Kind::Z), Just(Kind::Y)], 1usize..=3)
        .prop_map(|(k, i)| Letter::new(k, i))
}

fn coeff() -> impl Strategy<Value = Complex64> {
    (-8i32..=8, -8i32..=8).prop_map(|(a, b)| Complex64::new(a as f64 / 4.0, b as f64 / 4.0))
}

fn simple_poly() -> impl Strategy<Value = NCPoly> {
    prop::collection::vec((prop::collection::vec(letter(), 0..=5), coeff()), 1..=4)
        .prop_map(|ts| NCPoly::from_terms(ts.into_iter().map(|(ls, c)| (Word::from_letters(&ls), c))))
}

fn poly() -> impl Strategy<Value = NCPoly> {
    (simple_poly(), simple_poly(), coeff(), any::<bool>()).prop_map(|(p, r, c, with_exp)| {
        if with_exp {
            p.mul(&NCPoly::exp(c, r))
        } else {
            p
        }
    })
}

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn printed_polynomials_parse_back(p in poly()) {
        let text = p.to_string();
        let q = parse_poly(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(q, p);
    }

    #[test]
    fn malformed_input_is_reported_with_a_position(
        tokens in prop::collection::vec(
            prop::sample::select(vec![
                "U1", "V2", "Z1", "Y3", "*", "+", "-", "(", ")", "^", "2", "0.5", "i", "exp", "[", "]", ",", " ", "x", "1e", "{", "}",
            ]),
            0..12,
        )
    ) {
        let text: String = tokens.concat();
        if let Err(e) = parse_poly(&text) {
            prop_assert!(e.pos <= text.chars().count(), "{text:?}: {e}");
            prop_assert!(!e.msg.is_empty());
        }
    }
}

#[test]
fn specific_errors_point_at_the_problem() {
    for (text, pos) in [("U1 + ", 5), ("U1 (Z1", 6), ("U1 V1", 3), ("U0", 1), ("U1 & V1", 3)] {
        let e = parse_poly(text).unwrap_err();
        assert_eq!(e.pos, pos, "{text}: {e}");
    }
}

fn pattern() -> impl Strategy<Value = ZPattern> {
    prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..=2)
        .prop_map(|v| ZPattern { values: v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect() })
}

fn experiment() -> impl Strategy<Value = Experiment> {
    let fit = (
        poly().prop_map(|p| p.to_string()),
        pattern(),
        prop::collection::vec(1usize..64, 4..7),
        any::<bool>(),
        (1.0f64..1e6, 0.0f64..4.0),
        any::<bool>(),
    )
        .prop_map(|(poly, z, ns, list, (base, power), reference)| {
            let k = z.values.len();
            let ns: Vec<usize> = ns.into_iter().map(|n| n * k).collect();
            let samples = if list {
                Samples::List(ns.iter().map(|n| n * 10).collect())
            } else {
                Samples::Rule { base, n_ref: ns[0], power, min: 7 }
            };
            Experiment::Fit(FitConfig {
                poly,
                f: "moment:2".into(),
                zs: vec![z],
                ns,
                samples,
                reference,
                quad: QuadConfig { nodes: 8, ..QuadConfig::default() },
                svg: false,
            })
        });
    let oracle = (pattern(), 1usize..4).prop_map(|(z, order)| {
        let k = z.values.len();
        Experiment::Oracle(OracleConfig { word: "U1 Z1 U1* Z1".into(), zs: vec![z], ns: vec![8 * k, 16 * k], order })
    });
    let density = (4.01f64..30.0, 16usize..5000).prop_map(|(t, grid)| Experiment::FubmDensity(DensityConfig { t, grid }));
    let freeness = (prop::collection::vec(-10.0f64..10.0, 2), 1usize..500).prop_map(|(ys, samples)| {
        Experiment::ConjugateFreeness(FreenessConfig {
            poly: "U1 + U1*".into(),
            matrices: vec![ZPattern::real(&[1.0, 0.0]), ZPattern::real(&[0.0, 1.0])],
            ys,
            indices: vec![1, 2],
            ns: vec![16, 32],
            samples,
        })
    });
    prop_oneof![fit, oracle, density, freeness]
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn configs_survive_json(seed in any::<u64>(), e in experiment()) {
        let c = ExperimentConfig::new(seed, e);
        c.validate().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let good = ExperimentConfig::new(1, Experiment::FubmDensity(DensityConfig { t: 6.0, grid: 64 })).to_json();
    assert!(ExperimentConfig::from_json(&good).is_ok());
    assert!(ExperimentConfig::from_json(&good.replace("\"schema_version\": 1", "\"schema_version\": 7")).is_err());
    assert!(ExperimentConfig::from_json(&good.replace("\"grid\"", "\"gird\"")).is_err());
    assert!(ExperimentConfig::from_json(&good.replace("6.0", "3.0")).is_err());
}

fn small_fit(seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        seed,
        Experiment::Fit(FitConfig {
            poly: "U1 Z1 U1* Z1".into(),
            f: "moment:1".into(),
            zs: vec![ZPattern::sign_split()],
            ns: vec![2, 4, 6, 8],
            samples: Samples::List(vec![200; 4]),
            reference: false,
            quad: QuadConfig::default(),
            svg: false,
        }),
    )
}

fn small_oracle() -> ExperimentConfig {
    ExperimentConfig::new(
        0,
        Experiment::Oracle(OracleConfig {
            word: "U1 Z1 U1 Z1 U1* Z1 U1* Z1".into(),
            zs: vec![ZPattern::sign_split()],
            ns: vec![2, 4, 8, 16],
            order: 2,
        }),
    )
}

#[test]
fn runs_are_reproducible_from_config_and_seed() {
    let a = run(&small_fit(5)).unwrap().csv_files().unwrap();
    let b = run(&small_fit(5)).unwrap().csv_files().unwrap();
    let c = run(&small_fit(6)).unwrap().csv_files().unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn csv_output_matches_golden_files() {
    let bless = std::env::var_os("NCEXP_BLESS").is_some();
    for cfg in [small_fit(5), small_oracle()] {
        for (name, bytes) in run(&cfg).unwrap().csv_files().unwrap() {
            let path = golden_dir().join(&name);
            if bless {
                std::fs::create_dir_all(golden_dir()).unwrap();
                std::fs::write(&path, &bytes).unwrap();
                continue;
            }
            let want = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(String::from_utf8(bytes).unwrap(), String::from_utf8(want).unwrap(), "{name}");
        }
    }
}

#[test]
fn reports_are_written_as_named_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&small_oracle()).unwrap();
    let paths = report.write(dir.path()).unwrap();
    let mut names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["oracle-series.csv", "oracle-values.csv"]);
    for (name, bytes) in report.csv_files().unwrap() {
        assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), bytes);
    }
}
