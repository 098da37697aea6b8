use std::f64::consts::PI;

use faer::complex_native::c64;
use faer::Mat;
use ncexp::freetrace::fubm_moment;
use ncexp::fubm::{moment_by_quadrature, solve, DensityTable};
use ncexp::harness::parse_poly;
use ncexp::expansion::{patterns_at, FourierSpec, ZPattern};
use ncexp::rmt::{
    haar_sample, hbm_increment, identity, mc_expect_trace, polar_project, power_traces, ubm_moments, DenseMatrix,
    MatOp, McEstimate, RngStream,
};
use ncexp::Complex64;

#[test]
fn implicit_equation_residual() {
    for t in [4.5, 5.0, 8.0, 12.0] {
        for k in 0..64 {
            let s = 2.0 * PI * k as f64 / 64.0;
            let z = solve(t, s).unwrap();
            let lhs = (z - 1.0) / (z + 1.0) * (t * z / 2.0).exp();
            let r = (lhs - Complex64::from_polar(1.0, s)).norm();
            assert!(r <= 1e-10, "t={t} s={s}: {r:e}");
            assert!(z.re > 0.0);
        }
    }
}

fn sup_deviation(t: f64) -> f64 {
    let table = DensityTable::new(t, 4096).unwrap();
    table.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
}

#[test]
fn density_flattens_at_the_expected_rate() {
    let ratio = sup_deviation(10.0) / sup_deviation(8.0);
    let expected = (-1.0f64).exp();
    assert!((ratio / expected - 1.0).abs() <= 0.25, "ratio {ratio}");
}

#[test]
fn cumulative_density_is_increasing() {
    for t in [4.5, 6.0, 10.0] {
        let table = DensityTable::new(t, 4096).unwrap();
        let min_slope = table
            .cumulative
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        assert!(min_slope > 0.0, "t={t}");
        assert!((table.total() - 2.0 * PI).abs() < 1e-10);
    }
}

#[test]
fn quadrature_moments_match_the_ode() {
    let table = DensityTable::new(8.0, 4096).unwrap();
    for n in 0..=4 {
        let q = moment_by_quadrature(n, 8.0, &table).unwrap();
        assert!((q - fubm_moment(n as i64, 8.0)).abs() <= 1e-6, "n={n}");
    }
}

#[test]
fn rng_streams_are_reproducible() {
    let mut a = RngStream::new(9, 4);
    let mut b = RngStream::new(9, 4);
    let mut c = RngStream::new(9, 5);
    let xs: Vec<f64> = (0..100).map(|_| a.normal()).collect();
    let ys: Vec<f64> = (0..100).map(|_| b.normal()).collect();
    let zs: Vec<f64> = (0..100).map(|_| c.normal()).collect();
    assert_eq!(xs, ys);
    assert_ne!(xs, zs);
}

#[test]
fn estimates_do_not_depend_on_threads() {
    let p = parse_poly("U1 Z1 U1* Z1 + U1 U1").unwrap();
    let zs: Vec<MatOp> = patterns_at(&[ZPattern::sign_split()], 8)
        .unwrap()
        .into_iter()
        .map(MatOp::from_matrix)
        .collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_expect_trace(&p, &FourierSpec::Polynomial(1), &zs, 8, 500, 3).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.mean.re.to_bits(), b.mean.re.to_bits());
    assert_eq!(a.mean.im.to_bits(), b.mean.im.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}

fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a * b
}

#[test]
fn haar_measure_is_left_invariant() {
    let n = 6;
    let w = haar_sample(n, &mut RngStream::new(1, 999_999));
    let samples = 4000;
    let mut plain = vec![Vec::new(); 3];
    let mut shifted = vec![Vec::new(); 3];
    for k in 0..samples {
        let u = haar_sample(n, &mut RngStream::new(2, k));
        let v = haar_sample(n, &mut RngStream::new(3, k));
        for (i, x) in power_traces(&u, 3).into_iter().enumerate() {
            plain[i].push(x);
        }
        for (i, x) in power_traces(&matmul(&w, &v), 3).into_iter().enumerate() {
            shifted[i].push(x);
        }
    }
    for i in 0..3 {
        let a = McEstimate::from_samples(&plain[i]);
        let b = McEstimate::from_samples(&shifted[i]);
        assert!(a.z_score(&b) <= 3.0, "moment {}: {:?} vs {:?}", i + 1, a, b);
    }
}

fn euler_polar(u: &DenseMatrix, h: &DenseMatrix, dt: f64) -> DenseMatrix {
    let n = u.nrows();
    let a = Mat::<c64>::from_fn(n, n, |i, j| {
        let x = h.read(i, j);
        let d = if i == j { 1.0 - 0.5 * dt } else { 0.0 };
        c64::new(d - x.im, x.re)
    });
    polar_project(&matmul(u, &a)).unwrap()
}

#[test]
fn halving_the_step_moves_moments_less_than_the_noise() {
    let (n, t, paths, fine): (usize, f64, usize, usize) = (8, 1.0, 300, 200);
    let dt = t / fine as f64;
    let mut coarse_v = vec![Vec::new(); 2];
    let mut fine_v = vec![Vec::new(); 2];
    for p in 0..paths {
        let mut rng = RngStream::new(41, p as u64);
        let mut uf = identity(n);
        let mut uc = identity(n);
        for _ in 0..fine / 2 {
            let h1 = hbm_increment(n, dt, &mut rng);
            let h2 = hbm_increment(n, dt, &mut rng);
            uf = euler_polar(&euler_polar(&uf, &h1, dt), &h2, dt);
            uc = euler_polar(&uc, &(&h1 + &h2), 2.0 * dt);
        }
        for (i, x) in power_traces(&uf, 2).into_iter().enumerate() {
            fine_v[i].push(x);
        }
        for (i, x) in power_traces(&uc, 2).into_iter().enumerate() {
            coarse_v[i].push(x);
        }
    }
    let library = ubm_moments(n, 2, &[t], paths, dt, 41, None).unwrap();
    for i in 0..2 {
        let f = McEstimate::from_samples(&fine_v[i]);
        let c = McEstimate::from_samples(&coarse_v[i]);
        assert!((f.mean - c.mean).norm() < f.stderr, "moment {}: {:?} vs {:?}", i + 1, f, c);
        assert!(library[0][i].z_score(&f) <= 3.0, "moment {}: {:?} vs {:?}", i + 1, library[0][i], f);
    }
}
