//! Critical couplings by every route, closed-form bounds and unit conversions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::cavity::{extrapolated_free_energy, free_energy_run_with, ExtrapolationPlan};
use crate::disorder::{DisorderDensity, DisorderKind};
use crate::error::{invalid, Error, Result};
use crate::kernel::{assemble_kernel_with, build_grid, leading_eigen, DensitySource, Quadrature};
use crate::rde::{
    cauchy_fixed_point, coupling_scale, effective_density, init_pool, ConvergenceRule, EffectiveGridSpec,
    ModelParams, SparseTail,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Kernel eigenvalue with the bare disorder density.
    A,
    /// Kernel eigenvalue with the effective density.
    B,
    /// Cavity free energy with size extrapolation.
    C,
    /// Large-K closed form.
    D,
    /// Large-K closed form with the second-order correction.
    E,
    /// Infinite-K limit.
    Asymptotic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::A => "A",
            Method::B => "B",
            Method::C => "C",
            Method::D => "D",
            Method::E => "E",
            Method::Asymptotic => "asymptotic",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Method::A),
            "B" | "b" => Ok(Method::B),
            "C" | "c" => Ok(Method::C),
            "D" | "d" => Ok(Method::D),
            "E" | "e" => Ok(Method::E),
            "asymptotic" => Ok(Method::Asymptotic),
            other => invalid(format!("unknown method {other:?}")),
        }
    }
}

/// A critical coupling with its provenance.
#[derive(Clone, Debug)]
pub struct ThresholdResult {
    pub method: Method,
    pub disorder: String,
    pub k: usize,
    pub energy: f64,
    pub g_c: Option<f64>,
    pub uncertainty: f64,
    pub diagnostics: Map<String, Value>,
}

impl ThresholdResult {
    fn new(method: Method, d: &DisorderDensity, k: usize, energy: f64, g_c: Option<f64>, uncertainty: f64) -> Self {
        ThresholdResult { method, disorder: d.label(), k, energy, g_c, uncertainty, diagnostics: Map::new() }
    }

    /// `t_c = g_c / (K log K)`.
    pub fn t_c(&self) -> Option<f64> {
        self.g_c.map(|g| g / coupling_scale(self.k))
    }
}

/// Critical disorder width of the uniform law in units of the hopping.
pub fn uniform_width_from_coupling(g: f64, k: usize) -> f64 {
    2.0 / g * coupling_scale(k)
}

pub fn coupling_from_uniform_width(w: f64, k: usize) -> f64 {
    2.0 / w * coupling_scale(k)
}

/// Critical Cauchy scale in units of the hopping.
pub fn cauchy_scale_from_coupling(g: f64, k: usize) -> f64 {
    coupling_scale(k) / g
}

pub fn coupling_from_cauchy_scale(gamma: f64, k: usize) -> f64 {
    coupling_scale(k) / gamma
}

/// Critical disorder strength in the natural units of the disorder family, or
/// `None` for tabulated densities.
pub fn disorder_strength(d: &DisorderDensity, g: f64, k: usize) -> Option<f64> {
    match d.kind() {
        DisorderKind::Uniform { .. } => Some(uniform_width_from_coupling(g, k)),
        DisorderKind::Cauchy { .. } => Some(cauchy_scale_from_coupling(g, k)),
        DisorderKind::Tabulated(_) => None,
    }
}

/// Options for [`threshold_eigen`].
#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub grid_n: usize,
    pub x_max: f64,
    /// `x_min = x_min_factor · t²`.
    pub x_min_factor: f64,
    pub quadrature: Quadrature,
    pub power_tol: f64,
    pub max_iter: usize,
    pub bracket: (f64, f64),
    /// Target bisection half-width in `g`.
    pub tol: f64,
    pub max_expansions: usize,
    pub pool_size: usize,
    pub seed: u64,
    pub convergence: ConvergenceRule,
    pub effective: EffectiveGridSpec,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            grid_n: 2000,
            x_max: 1000.0,
            x_min_factor: 1e-6,
            quadrature: Quadrature::Midpoint,
            power_tol: 1e-10,
            max_iter: 10_000,
            bracket: (0.05, 2.0),
            tol: 2.5e-4,
            max_expansions: 4,
            pool_size: 200_000,
            seed: 2024,
            convergence: ConvergenceRule::default(),
            effective: EffectiveGridSpec::default(),
        }
    }
}

/// Leading kernel eigenvalue at one coupling with diagnostics.
#[derive(Clone, Debug)]
pub struct LambdaEvaluation {
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub pool_sweeps: Option<usize>,
    pub pool_converged: Option<bool>,
}

/// Density source used by method A or B at the given parameters.
pub fn kernel_source(method: Method, d: &DisorderDensity, params: &ModelParams, opts: &EigenOptions) -> Result<(DensitySource, Option<(usize, bool)>)> {
    match method {
        Method::A => Ok((DensitySource::Bare(d.clone()), None)),
        Method::B => {
            if let DisorderKind::Cauchy { scale } = d.kind() {
                let (_, eff) = cauchy_fixed_point(params, *scale)?;
                return Ok((DensitySource::CauchyClosed(eff), None));
            }
            let pool = init_pool(d, *params, opts.pool_size, opts.seed)?;
            let (pool, report) = pool.converge(d, opts.convergence);
            let mut spec = opts.effective;
            let mut attempts = 0;
            loop {
                match effective_density(&pool, d, &spec) {
                    Ok(eff) => return Ok((DensitySource::Effective(eff), Some((report.sweeps, report.converged)))),
                    Err(Error::TailUnfittable { .. }) if attempts < 3 => {
                        // More samples first; at small hopping the tail stays
                        // sparse however far the grid reaches, so fall back to
                        // the quadratic tail.
                        if attempts < 2 {
                            spec.samples *= 2;
                        } else {
                            spec.sparse_tail = SparseTail::Quadratic;
                        }
                        attempts += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        _ => invalid(format!("method {method} has no kernel")),
    }
}

/// `λ(g)` for method A or B at `s = 1`.
pub fn lambda_at(method: Method, d: &DisorderDensity, k: usize, energy: f64, g: f64, opts: &EigenOptions) -> Result<LambdaEvaluation> {
    let params = ModelParams::with_coupling(k, g, energy, 1.0)?;
    let t = params.hopping();
    let grid = build_grid(opts.x_min_factor * t * t, opts.x_max, opts.grid_n)?;
    let (source, pool) = kernel_source(method, d, &params, opts)?;
    let kernel = assemble_kernel_with(source, params, grid, opts.quadrature)?;
    let res = leading_eigen(&kernel, opts.power_tol, opts.max_iter)?;
    Ok(LambdaEvaluation {
        lambda: res.lambda,
        iterations: res.iterations,
        residual: res.residual,
        pool_sweeps: pool.map(|p| p.0),
        pool_converged: pool.map(|p| p.1),
    })
}

/// Bisects `g` on the sign of `λ(g) − 1/K` for method A or B.
pub fn threshold_eigen(method: Method, d: &DisorderDensity, k: usize, energy: f64, opts: &EigenOptions) -> Result<ThresholdResult> {
    if !matches!(method, Method::A | Method::B) {
        return invalid("threshold_eigen handles methods A and B");
    }
    if !(d.density(energy) > 0.0) {
        return invalid(format!("disorder density vanishes at E = {energy}"));
    }
    let (mut lo, mut hi) = opts.bracket;
    if !(lo > 0.0 && hi > lo) {
        return invalid("bracket must satisfy 0 < lo < hi");
    }
    let target = 1.0 / k as f64;
    let mut evals = 0usize;
    let mut worst_pool: Option<bool> = None;
    let mut f = |g: f64| -> Result<f64> {
        let ev = lambda_at(method, d, k, energy, g, opts)?;
        evals += 1;
        if let Some(c) = ev.pool_converged {
            worst_pool = Some(worst_pool.unwrap_or(true) && c);
        }
        Ok(ev.lambda - target)
    };
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    let mut expansions = 0;
    while f_lo.signum() == f_hi.signum() && expansions < opts.max_expansions {
        if f_lo > 0.0 {
            lo *= 0.5;
            f_lo = f(lo)?;
        } else {
            hi *= 2.0;
            f_hi = f(hi)?;
        }
        expansions += 1;
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NotBracketed { lo, hi, f_lo: f_lo + target, f_hi: f_hi + target });
    }
    let mut steps = 0;
    while 0.5 * (hi - lo) > opts.tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    let mut r = ThresholdResult::new(method, d, k, energy, Some(0.5 * (lo + hi)), 0.5 * (hi - lo));
    let dg = &mut r.diagnostics;
    dg.insert("grid_n".into(), json!(opts.grid_n));
    dg.insert("x_max".into(), json!(opts.x_max));
    dg.insert("bisection_steps".into(), json!(steps));
    dg.insert("evaluations".into(), json!(evals));
    dg.insert("bracket".into(), json!([lo, hi]));
    if method == Method::B {
        if d.is_cauchy() {
            dg.insert("density".into(), json!("cauchy-closed"));
        } else {
            dg.insert("pool_size".into(), json!(opts.pool_size));
            dg.insert("pools_converged".into(), json!(worst_pool.unwrap_or(true)));
        }
    }
    Ok(r)
}

/// Options for [`threshold_cavity`].
#[derive(Clone, Debug)]
pub struct CavityOptions {
    pub plan: ExtrapolationPlan,
    pub bracket: (f64, f64),
    /// Bracket width at which bisection stops.
    pub tol: f64,
    /// Points of the cheap geometric scan locating the sign change.
    pub scout_points: usize,
    pub max_bisections: usize,
    /// Standard errors required to call the sign of the criterion.
    pub sign_threshold: f64,
}

impl Default for CavityOptions {
    fn default() -> Self {
        CavityOptions {
            plan: ExtrapolationPlan::default(),
            bracket: (0.05, 2.0),
            tol: 0.005,
            scout_points: 9,
            max_bisections: 12,
            sign_threshold: 2.0,
        }
    }
}

/// Root of `φ(g) + log K` with the extrapolated cavity free energy.
pub fn threshold_cavity(d: &DisorderDensity, k: usize, energy: f64, opts: &CavityOptions) -> Result<ThresholdResult> {
    if !(d.density(energy) > 0.0) {
        return invalid(format!("disorder density vanishes at E = {energy}"));
    }
    let (lo0, hi0) = opts.bracket;
    if !(lo0 > 0.0 && hi0 > lo0) || opts.scout_points < 2 {
        return invalid("cavity bracket must satisfy 0 < lo < hi with at least two scan points");
    }
    let log_k = (k as f64).ln();
    let plan = &opts.plan;
    let n_min = *plan.pool_sizes.iter().min().ok_or_else(|| Error::InvalidParameter("empty pool-size list".into()))?;
    let r_min = *plan.sweeps.iter().min().ok_or_else(|| Error::InvalidParameter("empty sweep list".into()))?;

    // Cheap scan: one run at the smallest size on a geometric grid.
    let scout = |g: f64| -> Result<f64> {
        let p = ModelParams::with_coupling(k, g, energy, 1.0)?;
        Ok(free_energy_run_with(d, p, n_min, r_min, plan.replica_seed(0), plan.burn_in_frac)?.estimate + log_k)
    };
    let (mut lo, mut hi) = (lo0, hi0);
    let mut cell = None;
    for _ in 0..=4 {
        let ratio = (hi / lo).powf(1.0 / (opts.scout_points - 1) as f64);
        let gs: Vec<f64> = (0..opts.scout_points).map(|i| lo * ratio.powi(i as i32)).collect();
        let mut prev: Option<(f64, f64)> = None;
        for &g in &gs {
            let v = scout(g)?;
            if let Some((pg, pv)) = prev {
                if pv < 0.0 && v >= 0.0 {
                    cell = Some((pg, g, ratio));
                    break;
                }
            }
            prev = Some((g, v));
        }
        if cell.is_some() {
            break;
        }
        if scout(lo)? >= 0.0 {
            lo *= 0.5;
        } else {
            hi *= 2.0;
        }
    }
    let (mut a, mut b, ratio) = cell.ok_or(Error::NotBracketed { lo, hi, f_lo: f64::NAN, f_hi: f64::NAN })?;

    let full = |g: f64| -> Result<(f64, f64)> {
        let p = ModelParams::with_coupling(k, g, energy, 1.0)?;
        let x = extrapolated_free_energy(d, p, plan)?;
        Ok((x.value + log_k, x.standard_error))
    };
    let mut evals = 0usize;
    let (mut fa, mut sa) = full(a)?;
    evals += 1;
    let mut widen = 0;
    while fa >= 0.0 && widen < 4 {
        a /= ratio;
        (fa, sa) = full(a)?;
        evals += 1;
        widen += 1;
    }
    let (mut fb, mut sb) = full(b)?;
    evals += 1;
    widen = 0;
    while fb < 0.0 && widen < 4 {
        b *= ratio;
        (fb, sb) = full(b)?;
        evals += 1;
        widen += 1;
    }
    if fa >= 0.0 || fb < 0.0 {
        return Err(Error::NotBracketed { lo: a, hi: b, f_lo: fa - log_k, f_hi: fb - log_k });
    }

    let mut resolved = true;
    let mut steps = 0;
    let mut mid_value = None;
    while b - a > opts.tol && steps < opts.max_bisections {
        let mid = 0.5 * (a + b);
        let (fm, sm) = full(mid)?;
        evals += 1;
        steps += 1;
        if fm.abs() < opts.sign_threshold * sm {
            resolved = false;
            mid_value = Some((mid, fm, sm));
            break;
        }
        if fm < 0.0 {
            (a, fa, sa) = (mid, fm, sm);
        } else {
            (b, fb, sb) = (mid, fm, sm);
        }
    }
    let (g_c, uncertainty) = match mid_value {
        Some((mid, _, _)) => (mid, 0.5 * (b - a)),
        // Secant point inside the final bracket.
        None => {
            let g = a + (b - a) * (-fa) / (fb - fa);
            (g.clamp(a, b), 0.5 * (b - a))
        }
    };
    let mut r = ThresholdResult::new(Method::C, d, k, energy, Some(g_c), uncertainty);
    let dg = &mut r.diagnostics;
    dg.insert("pool_sizes".into(), json!(plan.pool_sizes));
    dg.insert("sweeps".into(), json!(plan.sweeps));
    dg.insert("seeds".into(), json!(plan.seeds));
    dg.insert("bracket".into(), json!([a, b]));
    dg.insert("criterion_at_bracket".into(), json!([[fa, sa], [fb, sb]]));
    dg.insert("bisection_steps".into(), json!(steps));
    dg.insert("evaluations".into(), json!(evals));
    dg.insert("resolved".into(), json!(resolved));
    if let Some((_, fm, sm)) = mid_value {
        dg.insert("criterion_at_midpoint".into(), json!([fm, sm]));
    }
    Ok(r)
}

/// Smallest root of `h` on `(g_floor, g_max)`: scan downward from `g_max` in
/// `steps` log-spaced points, keep the lowest sign change, then bisect.
fn smallest_root(h: impl Fn(f64) -> f64, g_max: f64) -> Option<f64> {
    const G_FLOOR: f64 = 1e-6;
    const STEPS: usize = 10_000;
    let ratio = (g_max / G_FLOOR).ln() / STEPS as f64;
    let at = |i: usize| if i == 0 { g_max } else { g_max * (-ratio * i as f64).exp() };
    let mut found = None;
    let mut prev = (at(0), h(at(0)));
    for i in 1..=STEPS {
        let g = at(i);
        let v = h(g);
        if v.is_finite() && prev.1.is_finite() && (v > 0.0) != (prev.1 > 0.0) {
            found = Some((g, prev.0));
        }
        prev = (g, v);
    }
    let (mut lo, mut hi) = found?;
    let up = h(hi) > 0.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if (h(mid) > 0.0) == up {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Coefficient of the second-order correction in [`gc_formula_e`].
pub const E_CORRECTION: f64 = PI * PI / 48.0;

/// Large-K closed form: the smallest root in `g` of
/// `log g − log log K + log[−4ρ(E) u]`, `u = log g − log(K log K)`.
pub fn gc_formula_d(d: &DisorderDensity, k: usize, energy: f64) -> Option<f64> {
    let rho = d.density(energy);
    if !(rho > 0.0) || k < 2 {
        return None;
    }
    let scale = coupling_scale(k);
    let llk = (k as f64).ln().ln();
    smallest_root(|g| g.ln() - llk + (-4.0 * rho * (g.ln() - scale.ln())).ln(), scale * (1.0 - 1e-12))
}

/// As [`gc_formula_d`] at `E = 0` with the factor `1 + c/u²`, `c = π²/48`.
pub fn gc_formula_e(d: &DisorderDensity, k: usize) -> Option<f64> {
    let rho = d.density(0.0);
    if !(rho > 0.0) || k < 2 {
        return None;
    }
    let scale = coupling_scale(k);
    let llk = (k as f64).ln().ln();
    smallest_root(
        |g| {
            let u = g.ln() - scale.ln();
            g.ln() - llk + (-4.0 * rho * (1.0 + E_CORRECTION / (u * u)) * u).ln()
        },
        scale * (1.0 - 1e-12),
    )
}

/// Method D or E packaged as a [`ThresholdResult`] with zero uncertainty.
/// A missing root is reported as an absent `g_c`.
pub fn threshold_closed_form(method: Method, d: &DisorderDensity, k: usize, energy: f64) -> Result<ThresholdResult> {
    if k < 2 {
        return invalid(format!("K must be at least 2, got {k}"));
    }
    if !(d.density(energy) > 0.0) {
        return invalid(format!("disorder density vanishes at E = {energy}"));
    }
    let g_c = match method {
        Method::D => gc_formula_d(d, k, energy),
        Method::E if energy == 0.0 => gc_formula_e(d, k),
        Method::E => return invalid("formula E is defined at E = 0 only"),
        Method::Asymptotic => Some(gc_asymptotic(d, energy)?),
        _ => return invalid(format!("method {method} is not a closed form")),
    };
    let mut r = ThresholdResult::new(method, d, k, energy, g_c, 0.0);
    r.diagnostics.insert("root".into(), json!(if g_c.is_some() { "found" } else { "absent" }));
    Ok(r)
}

/// Infinite-K critical coupling `1/(4ρ(E))`.
pub fn gc_asymptotic(d: &DisorderDensity, energy: f64) -> Result<f64> {
    let rho = d.density(energy);
    if !(rho > 0.0) {
        return invalid(format!("disorder density vanishes at E = {energy}"));
    }
    Ok(1.0 / (4.0 * rho))
}

/// Hopping window `((1 ∓ ε) / (K log K) · 1/(4‖ρ‖∞))`.
pub fn corollary_bounds(d: &DisorderDensity, k: usize, eps: f64) -> (f64, f64) {
    let base = 1.0 / (coupling_scale(k) * 4.0 * d.sup_norm());
    ((1.0 - eps) * base, (1.0 + eps) * base)
}

/// `log t + log[−4 m log t + 2 M log α − 2C]_+` with `(m, M)` the window
/// extrema of the density around `E`; `−∞` when the bracket is not positive.
pub fn free_energy_lower_bound(d: &DisorderDensity, params: &ModelParams, alpha: f64) -> Result<f64> {
    let t = params.hopping();
    if !(t > 0.0 && t < 1.0) {
        return invalid(format!("lower bound needs t in (0, 1), got {t}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("lower bound needs alpha in (0, 1), got {alpha}"));
    }
    let (m, big) = d.window_extrema(params.energy(), alpha);
    let bracket = -4.0 * m * t.ln() + 2.0 * big * alpha.ln() - 2.0 * d.lipschitz();
    Ok(if bracket > 0.0 { t.ln() + bracket.ln() } else { f64::NEG_INFINITY })
}

/// Envelope constants for the effective density away from and near zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppendixConstants {
    /// `8^{1+ς} C_ς + 4 G² ‖ρ‖∞²`.
    pub c1_bound: f64,
    /// `2^{1+ς} ‖ρ‖∞`.
    pub small_z_bound: f64,
}

pub fn appendix_constants(d: &DisorderDensity, g: f64) -> AppendixConstants {
    let tail = d.tail();
    let sup = d.sup_norm();
    AppendixConstants {
        c1_bound: 8f64.powf(1.0 + tail.exponent) * tail.constant + 4.0 * g * g * sup * sup,
        small_z_bound: 2f64.powf(1.0 + tail.exponent) * sup,
    }
}
