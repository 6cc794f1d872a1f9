use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeloc_core::disorder::DisorderDensity;
use treeloc_core::kernel::*;
use treeloc_core::rde::ModelParams;

fn kernel(d: &DisorderDensity, k: usize, t: f64, s: f64, n: usize, x_max: f64) -> DiscreteKernel {
    let p = ModelParams::with_hopping(k, t, 0.0, s).unwrap();
    let g = build_grid(1e-6 * t * t, x_max, n).unwrap();
    assemble_kernel(DensitySource::Bare(d.clone()), p, g).unwrap()
}

fn cell_kernel(d: &DisorderDensity, t: f64, n: usize, x_max: f64) -> DiscreteKernel {
    let p = ModelParams::with_hopping(2, t, 0.0, 1.0).unwrap();
    let g = build_grid(1e-6 * t * t, x_max, n).unwrap();
    assemble_kernel_with(DensitySource::Bare(d.clone()), p, g, Quadrature::CellIntegrated).unwrap()
}

fn lambda(k: &DiscreteKernel) -> f64 {
    leading_eigen(k, 1e-12, 100_000).unwrap().lambda
}

fn unif() -> DisorderDensity {
    DisorderDensity::uniform(1.0).unwrap()
}

#[test]
fn coarse_refinement_is_within_one_percent() {
    let d = unif();
    let a = lambda(&kernel(&d, 2, 0.11, 1.0, 64, 1000.0));
    let b = lambda(&kernel(&d, 2, 0.11, 1.0, 128, 1000.0));
    assert!(((b - a) / a).abs() < 0.01, "{a} -> {b}");
}

#[test]
fn refinement_differences_shrink() {
    let d = unif();
    let ls: Vec<f64> = [250, 500, 1000, 2000, 4000, 8000].iter().map(|&n| lambda(&kernel(&d, 2, 0.11, 1.0, n, 1000.0))).collect();
    let diffs: Vec<f64> = ls.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).collect();
    for w in diffs.windows(2) {
        assert!(w[1] < w[0], "λ {ls:?}, differences {diffs:?}");
    }
}

// Same points per decade on both domains.
#[test]
fn doubling_the_domain_barely_moves_lambda() {
    let d = unif();
    let t: f64 = 0.11;
    let x_min = 1e-6 * t * t;
    let n10 = 1000;
    let n20 = 1 + ((n10 - 1) as f64 * (20.0 / x_min).ln() / (10.0 / x_min).ln()).round() as usize;
    let a = lambda(&kernel(&d, 2, t, 1.0, n10, 10.0));
    let b = lambda(&kernel(&d, 2, t, 1.0, n20, 20.0));
    assert!(((b - a) / a).abs() < 0.005, "{a} -> {b}");
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..10 {
        let k = rng.gen_range(2..=6);
        let s = rng.gen_range(0.5..=1.0);
        let d = if case % 2 == 0 {
            DisorderDensity::uniform(rng.gen_range(0.5..2.0)).unwrap()
        } else {
            DisorderDensity::cauchy(rng.gen_range(0.5..2.0)).unwrap()
        };
        let t = rng.gen_range(0.05..0.5);
        let ker = kernel(&d, k, t, s, 100, 10.0);
        let n = ker.dim();
        let power = leading_eigen(&ker, 1e-14, 1_000_000).unwrap().lambda;
        let dense = DMatrix::from_row_slice(n, n, ker.matrix())
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(((power - dense) / dense).abs() < 1e-8, "case {case}: power {power}, dense {dense}");
    }
}

#[test]
fn eigenvector_positive_where_rows_live() {
    for (d, t) in [(unif(), 0.11), (DisorderDensity::cauchy(1.0).unwrap(), 0.23)] {
        let ker = kernel(&d, 2, t, 1.0, 500, 1000.0);
        let res = leading_eigen(&ker, 1e-12, 100_000).unwrap();
        let n = ker.dim();
        for i in 0..n {
            let live = ker.matrix()[i * n..(i + 1) * n].iter().any(|&m| m > 0.0);
            if live {
                assert!(res.eigenvector[i] > 0.0, "{}: a({}) = {}", d.label(), ker.grid().abscissas()[i], res.eigenvector[i]);
            }
        }
    }
}

#[test]
fn lambda_increases_with_hopping() {
    for d in [unif(), DisorderDensity::cauchy(1.0).unwrap()] {
        let ls: Vec<f64> = [0.05, 0.1, 0.2, 0.4, 0.8]
            .iter()
            .map(|&g| lambda(&kernel(&d, 2, g / (2.0 * 2f64.ln()), 1.0, 500, 1000.0)))
            .collect();
        assert!(ls.windows(2).all(|w| w[1] > w[0]), "{}: {ls:?}", d.label());
    }
}

#[test]
fn rows_match_the_formula() {
    let ker = kernel(&DisorderDensity::cauchy(1.0).unwrap(), 3, 0.2, 0.7, 64, 10.0);
    let xs = ker.grid().abscissas();
    let ws = ker.grid().weights();
    for i in (0..128).step_by(7) {
        for j in (0..128).step_by(5) {
            let direct = ker.formula(xs[i], xs[j]) * ws[j];
            assert!((ker.entry(i, j) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn uniform_profile_is_flat_in_the_bulk() {
    let ker = kernel(&unif(), 2, 0.11, 1.0, 2000, 1e5);
    let res = leading_eigen(&ker, 1e-12, 100_000).unwrap();
    let prof = eigenvector_profile(&res, ker.grid());
    let window: Vec<f64> = prof.iter().filter(|p| p.0 >= 0.02 && p.0 <= 0.5).map(|p| p.1).collect();
    let (lo, hi) = window.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 1.5, "max/min {}", hi / lo);
}

#[test]
fn cauchy_profile_is_flat_in_the_bulk() {
    let ker = kernel(&DisorderDensity::cauchy(1.0).unwrap(), 2, 0.23, 1.0, 2000, 1e5);
    let res = leading_eigen(&ker, 1e-12, 100_000).unwrap();
    let prof = eigenvector_profile(&res, ker.grid());
    let window: Vec<f64> = prof.iter().filter(|p| p.0 >= 0.02 && p.0 <= 0.5).map(|p| p.1).collect();
    let (lo, hi) = window.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 1.5, "max/min {}", hi / lo);
}

// |x| a(x) vanishes linearly: a itself settles to a finite positive value.
// Rows with x below t²/x_max are empty (their mass sits beyond the domain), and
// at small x the density occupies a sliver of a coarse cell, so the midpoint
// rule samples it erratically; the exact cell rule is used here.
#[test]
fn eigenvector_has_a_finite_limit_at_zero() {
    for (d, t) in [(unif(), 0.11), (DisorderDensity::cauchy(1.0).unwrap(), 0.23)] {
        let ker = cell_kernel(&d, t, 2000, 1e5);
        let res = leading_eigen(&ker, 1e-12, 100_000).unwrap();
        assert!(res.eigenvector.iter().all(|a| a.is_finite()));
        let small: Vec<f64> = ker
            .grid()
            .abscissas()
            .iter()
            .zip(&res.eigenvector)
            .filter(|(x, _)| **x >= 10.0 * t * t / ker.grid().x_max() && **x <= 1e-3)
            .map(|(_, &a)| a)
            .collect();
        let (lo, hi) = small.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(small.len() > 100 && lo > 0.0 && hi / lo < 1.1, "{}: a ranges over [{lo}, {hi}]", d.label());
    }
}

#[test]
fn quadratures_agree_on_lambda() {
    for (d, t) in [(unif(), 0.11), (DisorderDensity::cauchy(1.0).unwrap(), 0.23)] {
        let a = lambda(&kernel(&d, 2, t, 1.0, 2000, 1000.0));
        let b = lambda(&cell_kernel(&d, t, 2000, 1000.0));
        assert!(((a - b) / a).abs() < 5e-4, "{}: midpoint {a}, cell {b}", d.label());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lambda_scales_with_the_density(c in 0.1f64..10.0, t in 0.05f64..0.4) {
        let p = ModelParams::with_hopping(2, t, 0.0, 1.0).unwrap();
        let g = build_grid(1e-6 * t * t, 100.0, 200).unwrap();
        let src = DensitySource::Bare(DisorderDensity::cauchy(1.0).unwrap());
        let base = assemble_kernel(src.clone(), p, g.clone()).unwrap();
        let scaled = assemble_kernel(src.scaled(c), p, g).unwrap();
        for (a, b) in base.matrix().iter().zip(scaled.matrix()) {
            prop_assert!((b - c * a).abs() <= 1e-14 * (c * a).abs());
        }
        let (la, lb) = (lambda(&base), lambda(&scaled));
        prop_assert!((lb / la - c).abs() < 1e-9 * c);
    }
}
