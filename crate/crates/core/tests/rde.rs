use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeloc_core::disorder::DisorderDensity;
use treeloc_core::rde::{
    cauchy_fixed_point, effective_density, effective_density_from_pool, init_pool, ConvergenceRule, EffectiveDensity,
    EffectiveGridSpec, ModelParams, ResolventPool, SparseTail,
};
use treeloc_core::stats;

fn unif() -> DisorderDensity {
    DisorderDensity::uniform(1.0).unwrap()
}

fn cauchy() -> DisorderDensity {
    DisorderDensity::cauchy(1.0).unwrap()
}

fn params(k: usize, t: f64, e: f64) -> ModelParams {
    ModelParams::with_hopping(k, t, e, 1.0).unwrap()
}

fn converged(d: &DisorderDensity, p: ModelParams, n: usize, seed: u64) -> ResolventPool {
    let (pool, report) = init_pool(d, p, n, seed).unwrap().converge(d, ConvergenceRule::default());
    assert!(report.converged, "pool did not converge: {report:?}");
    pool
}

fn spec(samples: usize) -> EffectiveGridSpec {
    EffectiveGridSpec { samples, ..EffectiveGridSpec::default() }
}

/// Two-sample KS critical value at level 1e-3.
fn ks_critical(n: usize, m: usize) -> f64 {
    1.95 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Cauchy fixed point by plain iteration of the closure map, written out
/// from the stability of the Cauchy family under sums and reciprocals.
fn cauchy_oracle(k: usize, t: f64, e: f64, gamma: f64, steps: usize) -> ((f64, f64), (f64, f64)) {
    let recip = |x: f64, c: f64| (x / (x * x + c * c), c / (x * x + c * c));
    let mut cur = recip(-e, gamma);
    for _ in 0..steps {
        let x0 = -e - t * t * k as f64 * cur.0;
        let c = gamma + t * t * k as f64 * cur.1;
        cur = recip(x0, c);
    }
    let eff = (-e - t * t * (k - 1) as f64 * cur.0, gamma + t * t * (k - 1) as f64 * cur.1);
    (cur, eff)
}

#[test]
fn cauchy_initial_pool_is_standard_cauchy() {
    let pool = init_pool(&cauchy(), params(2, 0.1, 0.0), 1_000_000, 7).unwrap();
    let xs = stats::sorted(pool.samples());
    let ks = stats::ks_one_sample(&xs, |g| 0.5 + g.atan() / std::f64::consts::PI);
    assert!(ks < 0.002, "KS {ks}");
}

#[test]
fn shifted_uniform_pool_median() {
    // 1/(V − 1/2) with V uniform on [−1, 1]: P(Γ ≤ m) = −1/(2m) for m ≤ −2/3,
    // so the median is exactly −1.
    let pool = init_pool(&unif(), params(2, 0.1, 0.5), 100_000, 8).unwrap();
    let med = stats::quantile(&stats::sorted(pool.samples()), 0.5);
    assert!((med + 1.0).abs() < 0.01, "median {med}");
}

#[test]
fn zero_hopping_sweep_preserves_the_law() {
    let d = unif();
    let pool = init_pool(&d, params(3, 0.0, 0.0), 1_000_000, 9).unwrap();
    let next = pool.sweep(&d);
    assert_eq!(next.depth(), 2);
    let ks = stats::ks_two_sample(&stats::sorted(pool.samples()), &stats::sorted(next.samples()));
    assert!(ks < 0.005, "KS {ks}");
}

#[test]
fn first_sweep_matches_direct_iteration() {
    let (k, t) = (2usize, 0.11);
    let d = unif();
    let pool = init_pool(&d, params(k, t, 0.0), 100_000, 10).unwrap().sweep(&d);
    // 1/(V − t² Σ_{i=1}^{K} 1/V_i) sampled directly with a separate generator.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut u = || loop {
        let v: f64 = rng.gen_range(-1.0..1.0);
        if v != 0.0 {
            break v;
        }
    };
    let direct: Vec<f64> = (0..10_000_000)
        .map(|_| {
            let v = u();
            let s: f64 = (0..k).map(|_| 1.0 / u()).sum();
            1.0 / (v - t * t * s)
        })
        .collect();
    let ks = stats::ks_two_sample(&stats::sorted(pool.samples()), &stats::sorted(&direct));
    assert!(ks < ks_critical(100_000, 10_000_000), "KS {ks}");
}

#[test]
fn cauchy_pool_reaches_closed_form_fixed_point() {
    let d = cauchy();
    let p = params(4, 0.1, 0.0);
    let mut pool = init_pool(&d, p, 1_000_000, 11).unwrap();
    for _ in 0..20 {
        pool = pool.sweep(&d);
    }
    let (law, _) = cauchy_fixed_point(&p, 1.0).unwrap();
    let ks = stats::ks_one_sample(&stats::sorted(pool.samples()), |g| law.cdf(g));
    assert!(ks < 0.01, "KS {ks}");
}

#[test]
fn cauchy_fixed_point_matches_long_iteration() {
    for &(k, t, e, gamma) in &[(4usize, 0.1, 0.0, 1.0), (3, 0.2, 0.7, 0.5), (2, 0.4, -1.3, 2.0)] {
        let (law, eff) = cauchy_fixed_point(&params(k, t, e), gamma).unwrap();
        let (o_law, o_eff) = cauchy_oracle(k, t, e, gamma, 10_000);
        assert!((law.location - o_law.0).abs() < 1e-10 && (law.scale - o_law.1).abs() < 1e-10);
        assert!((eff.location - o_eff.0).abs() < 1e-10 && (eff.scale - o_eff.1).abs() < 1e-10);
    }
}

#[test]
fn zero_hopping_effective_density_is_the_disorder() {
    for d in [unif(), cauchy()] {
        let pool = init_pool(&d, params(2, 0.0, 0.0), 100_000, 12).unwrap();
        let eff = effective_density_from_pool(&pool, &d, &spec(10_000_000)).unwrap();
        let worst = (0..=4000)
            .map(|i| -2.0 + 1e-3 * i as f64)
            .filter(|z| (z.abs() - 1.0).abs() > 1e-9)
            .map(|z| (eff.eval(z) - d.density(z)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.01, "{}: {worst}", d.label());
    }
}

#[test]
fn cauchy_effective_density_matches_closed_form() {
    let d = cauchy();
    let p = params(4, 0.1, 0.0);
    let pool = converged(&d, p, 200_000, 13);
    let eff = effective_density(&pool, &d, &spec(1_000_000)).unwrap();
    let (_, law) = cauchy_fixed_point(&p, 1.0).unwrap();
    let worst = eff.grid().iter().map(|&z| (eff.eval(z) - law.density(z)).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
}

fn sup_within_bound(eff: &EffectiveDensity, bound: f64) -> bool {
    eff.values().iter().zip(eff.std_errors()).all(|(&v, &se)| v <= bound + 3.0 * se)
}

#[test]
fn uniform_effective_density_respects_sup_norm() {
    let d = unif();
    let pool = converged(&d, params(2, 0.11, 0.0), 200_000, 14);
    let eff = effective_density(&pool, &d, &spec(1_000_000)).unwrap();
    assert!(sup_within_bound(&eff, 0.5));
    assert!(eff.values().iter().all(|&v| v >= 0.0));
    assert!((eff.normalization() - 1.0).abs() < 0.01, "{}", eff.normalization());
    assert!((eff.mass(f64::NEG_INFINITY, f64::INFINITY) - eff.normalization()).abs() < 1e-9);
    for (a, b) in [(-3.0, 2.5), (25.0, 80.0), (-0.3, 19.0)] {
        let n = 400_000;
        let h = (b - a) / n as f64;
        let direct: f64 = (0..n).map(|i| eff.eval(a + h * (i as f64 + 0.5))).sum::<f64>() * h;
        assert!((eff.mass(a, b) - direct).abs() < 1e-6 * direct.max(1e-3), "[{a}, {b}]: {} vs {direct}", eff.mass(a, b));
    }
}

#[test]
fn depth_one_pool_is_rejected_for_effective_density() {
    let pool = init_pool(&unif(), params(2, 0.1, 0.0), 10_000, 15).unwrap();
    assert!(effective_density(&pool, &unif(), &spec(10_000)).is_err());
}

#[test]
fn pools_are_reproducible_and_thread_independent() {
    let d = cauchy();
    let p = params(3, 0.2, 0.1);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let run = || init_pool(&d, p, 50_000, 16).unwrap().sweep(&d).sweep(&d);
    let a = one.install(run);
    let b = three.install(run);
    assert_eq!(a.samples(), b.samples());
}

#[test]
fn positivity_of_converged_uniform_pool() {
    let d = unif();
    let pool = converged(&d, params(2, 0.11, 0.0), 1_000_000, 17);
    let width = (5.0 - 0.05) / 50.0;
    let mut counts = [0usize; 100];
    for &g in pool.samples() {
        let a = g.abs();
        if (0.05..5.0).contains(&a) {
            let b = (((a - 0.05) / width) as usize).min(49);
            counts[if g < 0.0 { 49 - b } else { 50 + b }] += 1;
        }
    }
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn large_k_effective_density_approaches_the_disorder() {
    let d = cauchy();
    let mut dists = Vec::new();
    for &k in &[2usize, 8, 32] {
        let p = params(k, 1.0 / k as f64, 0.0);
        let pool = converged(&d, p, 200_000, 18);
        let eff = effective_density(&pool, &d, &spec(1_000_000)).unwrap();
        let sup = (0..=2000)
            .map(|i| -1.0 + 1e-3 * i as f64)
            .map(|e| (eff.eval(e) - d.density(e)).abs())
            .fold(0.0, f64::max);
        dists.push(sup);
    }
    assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");
    assert!(dists[2] < 0.02, "{dists:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn survival_obeys_quadratic_tail(k in 2usize..5, t in 0.02f64..0.3, cauchy_law in any::<bool>(), seed in 0u64..1000) {
        let d = if cauchy_law { cauchy() } else { unif() };
        let pool = converged(&d, params(k, t, 0.0), 100_000, seed);
        let abs = stats::sorted(&pool.samples().iter().map(|g| g.abs()).collect::<Vec<_>>());
        let n = abs.len() as f64;
        for i in 0..=40 {
            let x = 10f64.powf(i as f64 / 20.0);
            let p = (abs.len() - abs.partition_point(|&a| a <= x)) as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            // Each tail is bounded by ‖ρ‖∞/x.
            prop_assert!(p <= 2.0 * d.sup_norm() / x + 3.0 * se, "x={x} p={p}");
        }
    }

    #[test]
    fn lipschitz_transfers_to_effective_density(k in 2usize..5, t in 0.05f64..0.4, seed in 0u64..1000) {
        let d = cauchy();
        let pool = converged(&d, params(k, t, 0.0), 100_000, seed);
        let eff = effective_density(&pool, &d, &spec(1_000_000)).unwrap();
        let se_at = |z: f64| {
            let g = eff.grid();
            eff.std_errors()[g.partition_point(|&x| x < z).min(g.len() - 1)]
        };
        for h in [0.01, 0.1, 0.5] {
            for i in 0..=200 {
                let e = -2.0 + 0.02 * i as f64;
                let diff = (eff.eval(e) - eff.eval(e + h)).abs();
                prop_assert!(diff <= d.lipschitz() * h + 3.0 * (se_at(e) + se_at(e + h)), "e={e} h={h} diff={diff}");
            }
        }
    }

    #[test]
    fn positive_part_is_pareto_dominated(k in 2usize..6, t in 0.02f64..0.3, seed in 0u64..1000) {
        let d = unif();
        let pool = converged(&d, params(k, t, 0.0), 100_000, seed);
        let mean_pos = pool.samples().iter().map(|g| g.max(0.0).min(1e3)).sum::<f64>() / pool.len() as f64;
        let value = t * t * (k - 1) as f64 * mean_pos;
        let scale = d.sup_norm() * k as f64 * t * t * 1e3f64.ln();
        prop_assert!(value > scale / 10.0 && value < scale * 10.0, "{value} vs {scale}");
    }

    #[test]
    fn effective_density_normalized(k in 2usize..5, t in 0.02f64..0.3, cauchy_law in any::<bool>(), seed in 0u64..1000) {
        let d = if cauchy_law { cauchy() } else { unif() };
        let pool = converged(&d, params(k, t, 0.0), 50_000, seed);
        let eff = effective_density(&pool, &d, &spec(1_000_000)).unwrap();
        prop_assert!((eff.normalization() - 1.0).abs() < 0.01, "{}", eff.normalization());
        prop_assert!(eff.values().iter().all(|&v| v >= 0.0));
        prop_assert!(sup_within_bound(&eff, d.sup_norm()));
    }
}

#[test]
fn sparse_tail_falls_back_to_quadratic_when_asked() {
    let d = unif();
    let pool = converged(&d, params(12, 0.004, 0.0), 100_000, 15);
    let strict = effective_density(&pool, &d, &spec(1_000_000));
    assert!(matches!(strict, Err(treeloc_core::Error::TailUnfittable { .. })));
    let loose = EffectiveGridSpec { sparse_tail: SparseTail::Quadratic, ..spec(1_000_000) };
    let eff = effective_density(&pool, &d, &loose).unwrap();
    let (amp, exponent) = eff.tail();
    assert_eq!(exponent, 2.0);
    assert!(amp >= 0.0 && amp < 1e-3, "{amp}");
    assert!((eff.normalization() - 1.0).abs() < 0.01);
}
