//! Quenched free energy of the cavity recursion by pooled iteration, with the
//! two-stage extrapolation in the number of sweeps `R` and the pool size `N`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::disorder::DisorderDensity;
use crate::error::{invalid, Error, Result};
use crate::rde::{ModelParams, TINY_DENOMINATOR};
use crate::rng::{self, tag};
use crate::stats::{self, LeastSquares};

/// Pool of pairs `(Γ, y)`: a cavity resolvent and the normalized weight of the
/// paths ending at it.
#[derive(Clone, Debug)]
pub struct CavityPool {
    gamma: Vec<f64>,
    weight: Vec<f64>,
}

impl CavityPool {
    /// Starting pool `Γ = 1/(V − E)`, `y = 1`.
    pub fn new(d: &DisorderDensity, params: &ModelParams, n: usize, seed: u64) -> CavityPool {
        let mut gamma = vec![0.0; n];
        let e = params.energy();
        rng::par_fill(&mut gamma, seed, &[tag::CAVITY, u64::MAX], |r| loop {
            let den = d.sample(r) - e;
            if den.abs() >= TINY_DENOMINATOR {
                return 1.0 / den;
            }
        });
        CavityPool { gamma, weight: vec![1.0; n] }
    }

    /// Pool built from given resolvents and weights.
    pub fn from_parts(gamma: Vec<f64>, weight: Vec<f64>) -> Result<CavityPool> {
        if gamma.len() != weight.len() || gamma.is_empty() {
            return invalid("resolvent and weight arrays must have equal nonzero length");
        }
        Ok(CavityPool { gamma, weight })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// One sweep: every new element picks `K` predecessors with replacement and
    /// sets `Γ' = 1/(V − E − t² ΣΓ)`, `y' = |tΓ'|^s Σy`. Returns the log of the
    /// mean of the new weights, which are then divided by that mean.
    pub fn sweep(&mut self, d: &DisorderDensity, params: &ModelParams, seed: u64, index: usize) -> Result<f64> {
        let n = self.len();
        let (k, t, e, s) = (params.k(), params.hopping(), params.energy(), params.s());
        let t2 = t * t;
        let mut gamma = vec![0.0; n];
        let mut weight = vec![0.0; n];
        let (old_g, old_w) = (&self.gamma, &self.weight);
        gamma
            .par_chunks_mut(rng::CHUNK)
            .zip(weight.par_chunks_mut(rng::CHUNK))
            .enumerate()
            .for_each(|(c, (gs, ws))| {
                let mut r = rng::substream(seed, &[tag::CAVITY, index as u64, c as u64]);
                for (g, w) in gs.iter_mut().zip(ws.iter_mut()) {
                    let (mut sg, mut sw) = (0.0, 0.0);
                    for _ in 0..k {
                        let j = r.gen_range(0..n);
                        sg += old_g[j];
                        sw += old_w[j];
                    }
                    let den = loop {
                        let den = d.sample(&mut r) - e - t2 * sg;
                        if den.abs() >= TINY_DENOMINATOR {
                            break den;
                        }
                    };
                    *g = 1.0 / den;
                    let amp = (t * *g).abs();
                    *w = if s == 1.0 { amp } else { amp.powf(s) } * sw;
                }
            });
        let mean = weight.iter().sum::<f64>() / n as f64;
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::BadNormalizer { sweep: index, value: mean });
        }
        for w in &mut weight {
            *w /= mean;
        }
        self.gamma = gamma;
        self.weight = weight;
        Ok(mean.ln())
    }
}

/// One cavity run of `R` sweeps on a pool of `N` pairs.
#[derive(Clone, Debug)]
pub struct FreeEnergyRun {
    pub params: ModelParams,
    pub pool_size: usize,
    pub sweeps: usize,
    /// Log-normalizer of every sweep.
    pub increments: Vec<f64>,
    pub burn_in: usize,
    /// Mean increment after burn-in, minus `log K`.
    pub estimate: f64,
    pub seed: u64,
}

impl FreeEnergyRun {
    /// Writes `sweep_index,delta_phi` rows after a header line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "sweep_index,delta_phi")?;
        for (i, x) in self.increments.iter().enumerate() {
            writeln!(w, "{},{x:e}", i + 1)?;
        }
        Ok(())
    }
}

/// Default fraction of sweeps discarded before averaging.
pub const DEFAULT_BURN_IN: f64 = 0.1;

/// Free-energy run with the default burn-in of `R/10` sweeps.
pub fn free_energy_run(d: &DisorderDensity, params: ModelParams, n: usize, r: usize, seed: u64) -> Result<FreeEnergyRun> {
    free_energy_run_with(d, params, n, r, seed, DEFAULT_BURN_IN)
}

/// Free-energy run discarding the first `burn_in_frac · R` sweeps.
pub fn free_energy_run_with(
    d: &DisorderDensity,
    params: ModelParams,
    n: usize,
    r: usize,
    seed: u64,
    burn_in_frac: f64,
) -> Result<FreeEnergyRun> {
    if !(params.s() >= 1.0 && params.s() <= 2.0) {
        return invalid(format!("free-energy runs need s in [1, 2], got {}", params.s()));
    }
    if n < 10_000 {
        return invalid(format!("free-energy runs need N >= 10000, got {n}"));
    }
    if !(0.0..1.0).contains(&burn_in_frac) {
        return invalid(format!("burn-in fraction must lie in [0, 1), got {burn_in_frac}"));
    }
    let burn_in = (burn_in_frac * r as f64).floor() as usize;
    if r <= burn_in {
        return invalid("need at least one sweep after burn-in");
    }
    let mut pool = CavityPool::new(d, &params, n, seed);
    let mut increments = Vec::with_capacity(r);
    for i in 0..r {
        increments.push(pool.sweep(d, &params, seed, i)?);
    }
    let kept = &increments[burn_in..];
    let estimate = kept.iter().sum::<f64>() / kept.len() as f64 - (params.k() as f64).ln();
    Ok(FreeEnergyRun { params, pool_size: n, sweeps: r, increments, burn_in, estimate, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStage {
    RExtrapolation,
    NExtrapolation,
}

/// Result of an extrapolation fit. The first coefficient is the limit value.
#[derive(Clone, Debug)]
pub struct ScalingFit {
    pub stage: FitStage,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub residual_rms: f64,
    pub points: usize,
}

impl ScalingFit {
    pub fn limit(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn limit_se(&self) -> f64 {
        self.standard_errors[0]
    }

    fn from_lsq(stage: FitStage, fit: LeastSquares, points: usize) -> ScalingFit {
        ScalingFit {
            stage,
            coefficients: fit.coefficients,
            standard_errors: fit.standard_errors,
            residual_rms: fit.residual_rms,
            points,
        }
    }

    /// Writes one `stage,coefficients...,residual_rms` row.
    pub fn csv_row(&self) -> String {
        let stage = match self.stage {
            FitStage::RExtrapolation => "R",
            FitStage::NExtrapolation => "N",
        };
        let coeffs: Vec<String> = self.coefficients.iter().map(|c| format!("{c:e}")).collect();
        format!("{stage},{},{:e}", coeffs.join(","), self.residual_rms)
    }
}

fn distinct(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.collect();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

/// Fits `φ(R) = φ_∞ + a / R` to runs at a common pool size.
pub fn fit_r(runs: &[FreeEnergyRun]) -> Result<ScalingFit> {
    if let Some(first) = runs.first() {
        if runs.iter().any(|r| r.pool_size != first.pool_size) {
            return invalid("R-extrapolation needs runs at a single pool size");
        }
    }
    let points: Vec<(f64, f64)> = runs.iter().map(|r| (r.sweeps as f64, r.estimate)).collect();
    fit_r_points(&points, None)
}

/// Fits `φ(R) = φ_∞ + a / R` to `(R, φ)` points. Needs at least three points
/// and two distinct `R`.
pub fn fit_r_points(points: &[(f64, f64)], se: Option<&[f64]>) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("R-extrapolation needs >= 3 points, got {}", points.len())));
    }
    if distinct(points.iter().map(|p| p.0)).len() < 2 {
        return Err(Error::DegenerateFit("R-extrapolation needs at least two distinct R".into()));
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![1.0, 1.0 / p.0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = stats::least_squares(&rows, &ys, se)?;
    Ok(ScalingFit::from_lsq(FitStage::RExtrapolation, fit, points.len()))
}

/// Largest accepted condition number of the pool-size design.
pub const MAX_CONDITION: f64 = 1e12;

/// Fits `φ(N) = φ_∞ + b / log N + c / (log N)²`. Needs four distinct `N`
/// spanning two decades.
pub fn fit_n(points: &[(f64, f64)], se: Option<&[f64]>) -> Result<ScalingFit> {
    let ns = distinct(points.iter().map(|p| p.0));
    if ns.len() < 4 {
        return Err(Error::DegenerateFit(format!("N-extrapolation needs >= 4 distinct N, got {}", ns.len())));
    }
    if ns[ns.len() - 1] / ns[0] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::DegenerateFit("N-extrapolation needs N spanning at least two decades".into()));
    }
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let u = 1.0 / p.0.ln();
            vec![1.0, u, u * u]
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = stats::least_squares(&rows, &ys, se)?;
    if fit.condition > MAX_CONDITION {
        return Err(Error::DegenerateFit(format!(
            "design condition number {:.3e} exceeds {MAX_CONDITION:e}; widen the range of N",
            fit.condition
        )));
    }
    Ok(ScalingFit::from_lsq(FitStage::NExtrapolation, fit, points.len()))
}

/// Two-parameter fit `φ(N) = φ_∞ + b / log N` for pool-size lists too short
/// for [`fit_n`].
pub fn fit_n_linear(points: &[(f64, f64)], se: Option<&[f64]>) -> Result<ScalingFit> {
    if distinct(points.iter().map(|p| p.0)).len() < 2 {
        return Err(Error::DegenerateFit("N-extrapolation needs at least two distinct N".into()));
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![1.0, 1.0 / p.0.ln()]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = stats::least_squares(&rows, &ys, se)?;
    Ok(ScalingFit::from_lsq(FitStage::NExtrapolation, fit, points.len()))
}

/// Pool sizes, sweep counts and replication for [`extrapolated_free_energy`].
#[derive(Clone, Debug)]
pub struct ExtrapolationPlan {
    pub pool_sizes: Vec<usize>,
    pub sweeps: Vec<usize>,
    pub seeds: usize,
    pub burn_in_frac: f64,
    pub master_seed: u64,
}

impl Default for ExtrapolationPlan {
    fn default() -> Self {
        ExtrapolationPlan {
            pool_sizes: vec![10_000, 30_000, 100_000],
            sweeps: vec![1000, 3000],
            seeds: 4,
            burn_in_frac: DEFAULT_BURN_IN,
            master_seed: 2024,
        }
    }
}

impl ExtrapolationPlan {
    /// Seed of replica `i`; shared across couplings so that neighbouring
    /// evaluations use common random numbers.
    pub fn replica_seed(&self, i: usize) -> u64 {
        self.master_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1)
    }
}

/// Infinite-`R`, infinite-`N` estimate of the free energy at one coupling.
#[derive(Clone, Debug)]
pub struct Extrapolation {
    pub value: f64,
    pub standard_error: f64,
    /// `(N, φ(∞, N), standard error)` per pool size.
    pub per_pool: Vec<(usize, f64, f64)>,
    pub r_fits: Vec<ScalingFit>,
    pub n_fit: Option<ScalingFit>,
    /// Which pool-size model was used: "quadratic", "linear" or "none".
    pub n_model: &'static str,
}

/// Runs every `(N, R, replica)` combination and extrapolates in `1/R` per pool
/// size, then in `1/log N`. The three-term pool-size model is used when the
/// sizes allow it, the two-term model otherwise.
pub fn extrapolated_free_energy(d: &DisorderDensity, params: ModelParams, plan: &ExtrapolationPlan) -> Result<Extrapolation> {
    let runs = plan_runs(d, params, plan)?;
    extrapolate_runs(&runs, plan)
}

/// Every `(N, R, replica)` run of the plan, in plan order.
pub fn plan_runs(d: &DisorderDensity, params: ModelParams, plan: &ExtrapolationPlan) -> Result<Vec<FreeEnergyRun>> {
    if plan.pool_sizes.is_empty() || plan.sweeps.is_empty() || plan.seeds == 0 {
        return invalid("extrapolation plan needs pool sizes, sweep counts and seeds");
    }
    let jobs: Vec<(usize, usize, usize)> = plan
        .pool_sizes
        .iter()
        .flat_map(|&n| plan.sweeps.iter().flat_map(move |&r| (0..plan.seeds).map(move |i| (n, r, i))))
        .collect();
    jobs.par_iter()
        .map(|&(n, r, i)| free_energy_run_with(d, params, n, r, plan.replica_seed(i), plan.burn_in_frac))
        .collect()
}

/// Extrapolation of runs produced by [`plan_runs`].
pub fn extrapolate_runs(runs: &[FreeEnergyRun], plan: &ExtrapolationPlan) -> Result<Extrapolation> {
    if runs.is_empty() {
        return invalid("no runs to extrapolate");
    }
    let mut per_pool = Vec::new();
    let mut r_fits = Vec::new();
    for &n in &plan.pool_sizes {
        let group: Vec<FreeEnergyRun> = runs.iter().filter(|r| r.pool_size == n).cloned().collect();
        let distinct_r = distinct(group.iter().map(|r| r.sweeps as f64)).len();
        if distinct_r >= 2 && group.len() >= 3 {
            let fit = fit_r(&group)?;
            per_pool.push((n, fit.limit(), fit.limit_se()));
            r_fits.push(fit);
        } else {
            let values: Vec<f64> = group.iter().map(|r| r.estimate).collect();
            let (m, se) = stats::mean_se(&values);
            per_pool.push((n, m, se));
        }
    }

    let points: Vec<(f64, f64)> = per_pool.iter().map(|p| (p.0 as f64, p.1)).collect();
    let ses: Vec<f64> = per_pool.iter().map(|p| p.2).collect();
    let se_opt = if ses.iter().all(|s| s.is_finite()) { Some(ses.as_slice()) } else { None };
    let (value, standard_error, n_fit, n_model) = match fit_n(&points, se_opt) {
        Ok(fit) => (fit.limit(), fit.limit_se(), Some(fit), "quadratic"),
        Err(_) if points.len() >= 2 => {
            let fit = fit_n_linear(&points, se_opt)?;
            (fit.limit(), fit.limit_se(), Some(fit), "linear")
        }
        Err(_) => (points[0].1, ses[0], None, "none"),
    };
    Ok(Extrapolation { value, standard_error, per_pool, r_fits, n_fit, n_model })
}
