//! Statistical checks of converged pools and effective densities against the
//! a-priori density bounds.

use crate::disorder::{DisorderDensity, DisorderKind};
use crate::rde::{EffectiveDensity, ResolventPool};
use crate::stats;
use crate::thresholds::appendix_constants;

/// Outcome of one check: the worst observed value against its bound.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `P(|Γ| > x) ≤ 2‖ρ‖∞ / x` on a log grid of `x ∈ [1, 100]`, allowing three
/// standard errors. Reports the worst ratio of empirical to bound.
pub fn quadratic_tail(pool: &ResolventPool, d: &DisorderDensity) -> Check {
    let abs = stats::sorted(&pool.samples().iter().map(|g| g.abs()).collect::<Vec<_>>());
    let n = abs.len() as f64;
    let mut pass = true;
    let mut worst = 0.0f64;
    for i in 0..=40 {
        let x = 10f64.powf(i as f64 / 20.0);
        let p = (abs.len() - abs.partition_point(|&a| a <= x)) as f64 / n;
        let bound = 2.0 * d.sup_norm() / x;
        let se = (p * (1.0 - p) / n).sqrt().max(1.0 / n);
        pass &= p <= bound + 3.0 * se;
        worst = worst.max(p / bound);
    }
    Check { name: "quadratic_tail", value: worst, bound: 1.0, pass }
}

/// Every estimated value stays below `‖ρ‖∞` plus three standard errors.
pub fn sup_norm(eff: &EffectiveDensity, d: &DisorderDensity) -> Check {
    let mut pass = true;
    let (mut value, mut bound) = (0.0f64, d.sup_norm());
    for (&v, &se) in eff.values().iter().zip(eff.std_errors()) {
        pass &= v <= d.sup_norm() + 3.0 * se;
        if v > value {
            value = v;
            bound = d.sup_norm() + 3.0 * se;
        }
    }
    Check { name: "sup_norm", value, bound, pass }
}

fn nearest_se(eff: &EffectiveDensity, z: f64) -> f64 {
    let g = eff.grid();
    let i = g.partition_point(|&x| x < z).min(g.len() - 1);
    eff.std_errors()[i]
}

/// `|ρ̂(e) − ρ̂(e′)| ≤ C |e − e′| + 3 (SE(e) + SE(e′))` for pairs in `[−2, 2]`
/// at separations 0.01, 0.1 and 0.5. Reports the worst excess over the
/// Lipschitz term in units of the allowance. `None` for the uniform law,
/// whose density has jumps.
pub fn lipschitz_transfer(eff: &EffectiveDensity, d: &DisorderDensity) -> Option<Check> {
    if matches!(d.kind(), DisorderKind::Uniform { .. }) {
        return None;
    }
    let c = d.lipschitz();
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for h in [0.01f64, 0.1, 0.5] {
        let steps = ((4.0 - h) / 0.005).floor() as usize;
        for i in 0..=steps {
            let e = -2.0 + 0.005 * i as f64;
            let e2 = e + h;
            let diff = (eff.eval(e) - eff.eval(e2)).abs();
            let allowance = 3.0 * (nearest_se(eff, e) + nearest_se(eff, e2));
            pass &= diff <= c * h + allowance;
            worst = worst.max((diff - c * h) / allowance.max(f64::MIN_POSITIVE));
        }
    }
    Some(Check { name: "lipschitz_transfer", value: worst, bound: 1.0, pass })
}

/// Mean of `t² Σ_{i=1}^{K−1} min(Γ_i⁺, 10³)` within a factor 10 of
/// `‖ρ‖∞ K t² log 10³`.
pub fn pareto_domination(pool: &ResolventPool, d: &DisorderDensity) -> Check {
    let p = pool.params();
    let t2 = p.hopping() * p.hopping();
    let mean_pos = pool.samples().iter().map(|g| g.max(0.0).min(1e3)).sum::<f64>() / pool.len() as f64;
    let value = t2 * (p.k() - 1) as f64 * mean_pos;
    let scale = d.sup_norm() * p.k() as f64 * t2 * 1e3f64.ln();
    let ratio = value / scale;
    Check { name: "pareto_domination", value, bound: scale, pass: (0.1..=10.0).contains(&ratio) }
}

/// Every bin of a 100-bin histogram of `Γ` over `[−5, −0.05] ∪ [0.05, 5]`
/// holds at least one sample. Reports the smallest count.
pub fn positivity(pool: &ResolventPool) -> Check {
    let mut counts = [0usize; 100];
    let width = (5.0 - 0.05) / 50.0;
    for &g in pool.samples() {
        let a = g.abs();
        if (0.05..5.0).contains(&a) {
            let b = (((a - 0.05) / width) as usize).min(49);
            counts[if g < 0.0 { 49 - b } else { 50 + b }] += 1;
        }
    }
    let min = *counts.iter().min().unwrap_or(&0);
    Check { name: "positivity", value: min as f64, bound: 1.0, pass: min >= 1 }
}

/// `sup_z (ρ̂(y + z) − 3 SE) |z|^{1−s+ς} ≤ max(C₁, small-z bound)` for
/// `y ∈ {−1, 0, 1}` and `|z| ∈ [10⁻³, 10³]`.
pub fn envelope(eff: &EffectiveDensity, d: &DisorderDensity, s: f64, g: f64) -> Check {
    let consts = appendix_constants(d, g);
    let bound = consts.c1_bound.max(consts.small_z_bound);
    let power = 1.0 - s + d.tail().exponent;
    let mut value = 0.0f64;
    for &y in &[-1.0, 0.0, 1.0] {
        for i in 0..=600 {
            let a = 10f64.powf(-3.0 + i as f64 / 100.0);
            for z in [a, -a] {
                let arg = y + z;
                let se = if arg.abs() <= eff.z_max() { nearest_se(eff, arg) } else { 0.0 };
                value = value.max((eff.eval(arg) - 3.0 * se).max(0.0) * a.powf(power));
            }
        }
    }
    Check { name: "envelope", value, bound, pass: value <= bound }
}
