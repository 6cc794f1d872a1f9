//! Population dynamics for the real cavity recursion
//! `Γ = 1 / (V − E − t² Σ_{i=1}^{K} Γ_i)` and the effective density of
//! `V − E − t² Σ_{i=1}^{K−1} Γ_i` derived from a converged pool.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::disorder::{DisorderDensity, DisorderKind};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, tag};
use crate::stats;

/// Denominators smaller than this in magnitude trigger a redraw of `V`.
pub const TINY_DENOMINATOR: f64 = 1e-300;

/// Model parameters. The coupling is stored as given and the other form is
/// derived through `t = g / (K log K)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    k: usize,
    hopping: f64,
    energy: f64,
    s: f64,
}

impl ModelParams {
    /// Parameters from the hopping `t ≥ 0`. `s` may range over `(0, 2]`.
    pub fn with_hopping(k: usize, t: f64, energy: f64, s: f64) -> Result<Self> {
        if k < 2 {
            return invalid(format!("K must be >= 2, got {k}"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return invalid(format!("hopping must be non-negative, got {t}"));
        }
        if !energy.is_finite() {
            return invalid("energy must be finite");
        }
        if !(s > 0.0 && s <= 2.0) {
            return invalid(format!("moment exponent s must lie in (0, 2], got {s}"));
        }
        Ok(ModelParams { k, hopping: t, energy, s })
    }

    /// Parameters from the scaled coupling `g`.
    pub fn with_coupling(k: usize, g: f64, energy: f64, s: f64) -> Result<Self> {
        if k < 2 {
            return invalid(format!("K must be >= 2, got {k}"));
        }
        Self::with_hopping(k, g / coupling_scale(k), energy, s)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// The scaled coupling `g = t K log K`.
    pub fn coupling(&self) -> f64 {
        self.hopping * coupling_scale(self.k)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn with_s(mut self, s: f64) -> Result<Self> {
        self = Self::with_hopping(self.k, self.hopping, self.energy, s)?;
        Ok(self)
    }
}

/// `K log K`, the natural scale of the hopping.
pub fn coupling_scale(k: usize) -> f64 {
    let k = k as f64;
    k * k.ln()
}

/// Draws `V − E − t² Σ Γ_{j}` over `count` random pool members, redrawing `V`
/// if the result is numerically zero.
#[inline]
fn denominator<R: rand::Rng>(
    rng: &mut R,
    d: &DisorderDensity,
    pool: &[f64],
    count: usize,
    t2: f64,
    energy: f64,
) -> f64 {
    let mut sum = 0.0;
    for _ in 0..count {
        sum += pool[rng::index(rng, pool.len())];
    }
    loop {
        let den = d.sample(rng) - energy - t2 * sum;
        if den.abs() >= TINY_DENOMINATOR {
            return den;
        }
    }
}

/// A population of real cavity resolvents.
#[derive(Clone, Debug)]
pub struct ResolventPool {
    samples: Vec<f64>,
    depth: usize,
    params: ModelParams,
    seed: u64,
}

/// Stopping rule for [`ResolventPool::converge`].
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRule {
    /// Sweeps between compared snapshots.
    pub spacing: usize,
    /// KS threshold is `factor / sqrt(N)`.
    pub factor: f64,
    /// Consecutive passing checks required.
    pub consecutive: usize,
    pub max_sweeps: usize,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        ConvergenceRule { spacing: 10, factor: 2.0, consecutive: 3, max_sweeps: 500 }
    }
}

/// Outcome of [`ResolventPool::converge`].
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceReport {
    pub sweeps: usize,
    pub converged: bool,
    pub last_ks: f64,
}

/// Starting pool of `N` draws of `1 / (V − E)`.
pub fn init_pool(d: &DisorderDensity, params: ModelParams, n: usize, seed: u64) -> Result<ResolventPool> {
    if n < 1000 {
        return invalid(format!("pool size must be >= 1000, got {n}"));
    }
    let mut samples = vec![0.0; n];
    let e = params.energy;
    rng::par_fill(&mut samples, seed, &[tag::INIT], |r| loop {
        let den = d.sample(r) - e;
        if den.abs() >= TINY_DENOMINATOR {
            return 1.0 / den;
        }
    });
    Ok(ResolventPool { samples, depth: 1, params, seed })
}

impl ResolventPool {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One application of the recursion, resampling predecessors with
    /// replacement. The random stream is keyed by the seed and current depth.
    pub fn sweep(&self, d: &DisorderDensity) -> ResolventPool {
        let p = self.params;
        let t2 = p.hopping * p.hopping;
        let mut out = vec![0.0; self.samples.len()];
        rng::par_fill(&mut out, self.seed, &[tag::SWEEP, self.depth as u64], |r| {
            1.0 / denominator(r, d, &self.samples, p.k, t2, p.energy)
        });
        ResolventPool { samples: out, depth: self.depth + 1, params: p, seed: self.seed }
    }

    /// Sweeps until the KS distance between snapshots `spacing` sweeps apart
    /// stays below `factor / sqrt(N)` for `consecutive` checks, or the cap is hit.
    pub fn converge(self, d: &DisorderDensity, rule: ConvergenceRule) -> (ResolventPool, ConvergenceReport) {
        let threshold = rule.factor / (self.len() as f64).sqrt();
        let mut pool = self;
        let mut snapshot = stats::sorted(&pool.samples);
        let mut passes = 0;
        let mut last_ks = f64::NAN;
        let mut sweeps = 0;
        while sweeps < rule.max_sweeps {
            pool = pool.sweep(d);
            sweeps += 1;
            if sweeps % rule.spacing == 0 {
                let current = stats::sorted(&pool.samples);
                last_ks = stats::ks_two_sample(&snapshot, &current);
                snapshot = current;
                passes = if last_ks < threshold { passes + 1 } else { 0 };
                if passes >= rule.consecutive {
                    return (pool, ConvergenceReport { sweeps, converged: true, last_ks });
                }
            }
        }
        log::warn!("pool did not meet the KS stopping rule within {} sweeps (last KS {last_ks:.3e})", rule.max_sweeps);
        (pool, ConvergenceReport { sweeps, converged: false, last_ks })
    }

    /// `M` draws of `t² Σ_{i=1}^{K−1} Γ_i`.
    fn composite_sums(&self, m: usize, stream: u64) -> Vec<f64> {
        let p = self.params;
        let t2 = p.hopping * p.hopping;
        let mut out = vec![0.0; m];
        rng::par_fill(&mut out, self.seed, &[tag::COMPOSITE, self.depth as u64, stream], |r| {
            let mut s = 0.0;
            for _ in 0..p.k - 1 {
                s += self.samples[rng::index(r, self.samples.len())];
            }
            t2 * s
        });
        out
    }

    /// Writes `index,value` rows after a header line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "index,value")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(w, "{i},{v:e}")?;
        }
        Ok(())
    }
}

/// Density estimator used by [`effective_density`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Average of the exact disorder density shifted by each composite sum.
    Convolution,
    /// Gaussian kernel density estimate of the composite samples.
    Kde,
}

/// What to do when too few composite samples reach the tail window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SparseTail {
    /// Report [`Error::TailUnfittable`].
    #[default]
    Fail,
    /// Use an `A/z²` tail with `A` set by the count beyond `z_max/2`.
    Quadratic,
}

/// Grid and sampling options for [`effective_density`].
#[derive(Clone, Copy, Debug)]
pub struct EffectiveGridSpec {
    pub z_max: f64,
    /// Half-width of the uniformly spaced core; `None` picks it from the disorder.
    pub linear_halfwidth: Option<f64>,
    pub linear_step: f64,
    /// Ratio between successive log-spaced points beyond the core.
    pub log_ratio: f64,
    pub samples: usize,
    pub estimator: Estimator,
    pub sparse_tail: SparseTail,
    /// Distinguishes independent composite draws from the same pool.
    pub stream: u64,
}

impl Default for EffectiveGridSpec {
    fn default() -> Self {
        EffectiveGridSpec {
            z_max: 20.0,
            linear_halfwidth: None,
            linear_step: 5e-4,
            log_ratio: 1.005,
            samples: 1_000_000,
            estimator: Estimator::Convolution,
            sparse_tail: SparseTail::Fail,
            stream: 0,
        }
    }
}

/// Grid-tabulated density with a symmetric power-law tail `A / |z|^p` beyond
/// `z_max`.
#[derive(Clone, Debug)]
pub struct EffectiveDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
    std_errors: Vec<f64>,
    tail_amplitude: f64,
    tail_exponent: f64,
    normalization: f64,
    z_max: f64,
    core_halfwidth: f64,
    core_step: f64,
    core_points: usize,
    /// Index of the first core point in `grid`.
    core_start: usize,
}

impl EffectiveDensity {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn tail(&self) -> (f64, f64) {
        (self.tail_amplitude, self.tail_exponent)
    }

    /// Grid quadrature plus the tail integral.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    /// Linear interpolation on the grid, tail model outside.
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        let a = z.abs();
        if a > self.z_max {
            return self.tail_amplitude * a.powf(-self.tail_exponent);
        }
        let i = if a <= self.core_halfwidth {
            let pos = (z + self.core_halfwidth) / self.core_step;
            self.core_start + (pos as usize).min(self.core_points - 2)
        } else {
            (self.grid.partition_point(|&g| g <= z).clamp(1, self.grid.len() - 1)) - 1
        };
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let f = ((z - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// Exact integral of [`eval`](Self::eval) over `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let z = self.z_max;
        let mut total = self.tail_mass(a.max(z), b) + self.tail_mass((-b).max(z), -a);
        let (lo, hi) = (a.max(-z), b.min(z));
        if hi > lo {
            let first = self.grid.partition_point(|&g| g <= lo).clamp(1, self.grid.len() - 1) - 1;
            for i in first..self.grid.len() - 1 {
                let (x0, x1) = (self.grid[i], self.grid[i + 1]);
                if x0 >= hi {
                    break;
                }
                let (u, v) = (lo.max(x0), hi.min(x1));
                if v > u {
                    total += 0.5 * (v - u) * (self.eval(u) + self.eval(v));
                }
            }
        }
        total
    }

    /// Integral of the right tail model over `[u, v]`, `u ≥ z_max`.
    fn tail_mass(&self, u: f64, v: f64) -> f64 {
        if !(v > u) || self.tail_amplitude == 0.0 {
            return 0.0;
        }
        let p = self.tail_exponent;
        if (p - 1.0).abs() < 1e-12 {
            return self.tail_amplitude * (v / u).ln();
        }
        let upper = if v.is_finite() { v.powf(1.0 - p) } else { 0.0 };
        self.tail_amplitude * (u.powf(1.0 - p) - upper) / (p - 1.0)
    }

    /// Writes the tail comment line, a header and `z,density` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# tail_amplitude={:e} tail_exponent={:e}", self.tail_amplitude, self.tail_exponent)?;
        writeln!(w, "z,density")?;
        for (z, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{z:e},{v:e}")?;
        }
        Ok(())
    }
}

fn build_effective_grid(z_max: f64, core: f64, step: f64, ratio: f64) -> (Vec<f64>, usize, usize) {
    let half_points = ((core / step).round() as usize).max(1);
    let step = core / half_points as f64;
    let positive_core: Vec<f64> = (1..=half_points).map(|i| if i == half_points { core } else { step * i as f64 }).collect();
    let core_points = 2 * half_points + 1;
    let mut outer = Vec::new();
    let mut z = core;
    loop {
        z *= ratio;
        if z >= z_max * (1.0 - 1e-12) {
            outer.push(z_max);
            break;
        }
        outer.push(z);
    }
    let mut positive = positive_core;
    positive.extend(outer);
    let mut grid: Vec<f64> = positive.iter().rev().map(|&z| -z).collect();
    let core_start = grid.len() - half_points;
    grid.push(0.0);
    grid.extend(positive);
    (grid, core_start, core_points)
}

/// Estimates the density of `V − E − t² Σ_{i=1}^{K−1} Γ_i` from a pool.
pub fn effective_density(pool: &ResolventPool, d: &DisorderDensity, spec: &EffectiveGridSpec) -> Result<EffectiveDensity> {
    if pool.depth() < 2 {
        return invalid("effective density needs a pool of depth >= 2");
    }
    effective_density_from_pool(pool, d, spec)
}

/// As [`effective_density`] without the depth requirement (used for the
/// zero-hopping reference case).
pub fn effective_density_from_pool(
    pool: &ResolventPool,
    d: &DisorderDensity,
    spec: &EffectiveGridSpec,
) -> Result<EffectiveDensity> {
    if spec.samples < 1000 || !(spec.z_max > 0.0) || !(spec.linear_step > 0.0) || !(spec.log_ratio > 1.0) {
        return invalid("effective density grid specification out of range");
    }
    let e = pool.params().energy;
    let core = spec
        .linear_halfwidth
        .unwrap_or_else(|| (2.0 * d.bulk_halfwidth()).max(4.0))
        .min(0.5 * spec.z_max);
    let (grid, core_start, core_points) = build_effective_grid(spec.z_max, core, spec.linear_step, spec.log_ratio);
    let core_step = grid[core_start + 1] - grid[core_start];

    let mut sums = pool.composite_sums(spec.samples, spec.stream);
    sums.par_sort_unstable_by(|a, b| a.total_cmp(b));

    // The sign of V − E − S beyond z_max/2 needs fresh V draws; the tail count
    // uses the same composite sums with independent V.
    let half = 0.5 * spec.z_max;
    let mut vdraws = vec![0.0; sums.len()];
    rng::par_fill(&mut vdraws, pool.seed(), &[tag::COMPOSITE, pool.depth() as u64, spec.stream, 1], |r| {
        d.sample(r)
    });
    let beyond = sums.iter().zip(&vdraws).filter(|(s, v)| (**v - e - **s).abs() > half).count();
    // Without hopping the law is the disorder itself; a support inside the
    // grid has no tail at all.
    let no_tail = pool.params().hopping == 0.0
        && d.support().is_some_and(|(a, b)| (a - e).abs().max((b - e).abs()) < half);
    let sparse = beyond < 100 && !no_tail;
    if sparse && spec.sparse_tail == SparseTail::Fail {
        return Err(Error::TailUnfittable { count: beyond, threshold: half });
    }

    let (values, std_errors) = match spec.estimator {
        Estimator::Convolution => convolve(&grid, &sums, d, e),
        Estimator::Kde => {
            let samples: Vec<f64> = sums.iter().zip(&vdraws).map(|(s, v)| v - e - s).collect();
            kde(&grid, &samples, spec.z_max)
        }
    };

    // Power-law tail A/|z|^p by maximum likelihood (Hill) on the composite
    // samples beyond z_max/2: P(|Z| > z) = 2A z^{1−p}/(p − 1).
    let m = sums.len() as f64;
    let (tail_amplitude, tail_exponent) = if no_tail {
        (0.0, 2.0)
    } else if sparse {
        // P(|Z| > h) = 2A/h for a symmetric A/z² tail.
        log::debug!("sparse tail: {beyond} samples beyond {half}; using a quadratic tail");
        (beyond as f64 * half / (2.0 * m), 2.0)
    } else {
        let log_excess: f64 = sums
            .iter()
            .zip(&vdraws)
            .map(|(s, v)| (v - e - s).abs())
            .filter(|&z| z > half)
            .map(|z| (z / half).ln())
            .sum();
        let index = beyond as f64 / log_excess;
        (index * beyond as f64 * half.powf(index) / (2.0 * m), 1.0 + index)
    };
    let n = grid.len();

    let mut normalization = 0.0;
    for i in 0..n - 1 {
        normalization += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
    }
    if tail_exponent > 1.0 {
        normalization += 2.0 * tail_amplitude * spec.z_max.powf(1.0 - tail_exponent) / (tail_exponent - 1.0);
    } else {
        normalization = f64::INFINITY;
    }

    Ok(EffectiveDensity {
        grid,
        values,
        std_errors,
        tail_amplitude,
        tail_exponent,
        normalization,
        z_max: spec.z_max,
        core_halfwidth: core,
        core_step,
        core_points,
        core_start,
    })
}

/// `(1/M) Σ ρ(z + E + S_m)` with its standard error, on every grid point.
fn convolve(grid: &[f64], sorted_sums: &[f64], d: &DisorderDensity, e: f64) -> (Vec<f64>, Vec<f64>) {
    let m = sorted_sums.len() as f64;
    if let DisorderKind::Uniform { halfwidth } = d.kind() {
        // Exact counting: ρ(z + E + S) ≠ 0 iff S ∈ [−w − z − E, w − z − E].
        let h = 0.5 / halfwidth;
        return grid
            .par_iter()
            .map(|&z| {
                let lo = sorted_sums.partition_point(|&s| s < -halfwidth - z - e);
                let hi = sorted_sums.partition_point(|&s| s <= halfwidth - z - e);
                let p = (hi - lo) as f64 / m;
                (h * p, h * (p * (1.0 - p) / m).sqrt())
            })
            .unzip();
    }
    // Compress the sums into weighted atoms: fine linear bins near zero and
    // logarithmic bins beyond.
    let bin_of = |s: f64| -> i64 {
        let a = s.abs();
        let b = if a <= 1.0 { (a / 1e-3) as i64 } else { 1000 + (a.ln() / 1e-3) as i64 };
        if s < 0.0 {
            -b - 1
        } else {
            b
        }
    };
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < sorted_sums.len() {
        let b = bin_of(sorted_sums[i]);
        let mut j = i;
        let mut acc = 0.0;
        while j < sorted_sums.len() && bin_of(sorted_sums[j]) == b {
            acc += sorted_sums[j];
            j += 1;
        }
        let count = (j - i) as f64;
        atoms.push((acc / count, count / m));
        i = j;
    }
    grid.par_iter()
        .map(|&z| {
            let (mut mean, mut second) = (0.0, 0.0);
            for &(s, w) in &atoms {
                let r = d.density(z + e + s);
                mean += w * r;
                second += w * r * r;
            }
            (mean, ((second - mean * mean).max(0.0) / m).sqrt())
        })
        .unzip()
}

/// Binned Gaussian KDE with the clipped Silverman bandwidth.
fn kde(grid: &[f64], samples: &[f64], z_max: f64) -> (Vec<f64>, Vec<f64>) {
    let m = samples.len() as f64;
    let sd = stats::std_dev(samples);
    let h = (1.06 * sd * m.powf(-0.2)).clamp(1e-4, 0.1);
    let delta = h / 8.0;
    let reach = 8.0 * h;
    let lo = -z_max - reach;
    let nbins = ((2.0 * (z_max + reach)) / delta).ceil() as usize + 1;
    // Linear binning onto the mesh lo + k δ.
    let mut mass = vec![0.0; nbins];
    for &x in samples {
        let pos = (x - lo) / delta;
        if pos < 0.0 || pos >= (nbins - 1) as f64 {
            continue;
        }
        let k = pos as usize;
        let f = pos - k as f64;
        mass[k] += 1.0 - f;
        mass[k + 1] += f;
    }
    let taps = (reach / delta).ceil() as i64;
    let weights: Vec<f64> = (-taps..=taps)
        .map(|j| {
            let u = j as f64 * delta / h;
            (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * h * m)
        })
        .collect();
    let smooth: Vec<f64> = (0..nbins as i64)
        .into_par_iter()
        .map(|k| {
            let mut acc = 0.0;
            for (idx, j) in (-taps..=taps).enumerate() {
                let q = k + j;
                if q >= 0 && (q as usize) < nbins {
                    acc += weights[idx] * mass[q as usize];
                }
            }
            acc
        })
        .collect();
    let roughness = 1.0 / (2.0 * PI.sqrt());
    grid.iter()
        .map(|&z| {
            let pos = ((z - lo) / delta).clamp(0.0, (nbins - 1) as f64);
            let k = (pos as usize).min(nbins - 2);
            let f = pos - k as f64;
            let v = smooth[k] * (1.0 - f) + smooth[k + 1] * f;
            (v, (v * roughness / (m * h)).sqrt())
        })
        .unzip()
}

/// Location and scale of a Cauchy law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyParams {
    pub location: f64,
    pub scale: f64,
}

impl CauchyParams {
    pub fn density(&self, z: f64) -> f64 {
        let u = z - self.location;
        self.scale / (PI * (self.scale * self.scale + u * u))
    }

    pub fn cdf(&self, z: f64) -> f64 {
        0.5 + ((z - self.location) / self.scale).atan() / PI
    }

    /// Law of the reciprocal of a Cauchy variable.
    pub fn reciprocal(&self) -> CauchyParams {
        let r = self.location * self.location + self.scale * self.scale;
        CauchyParams { location: self.location / r, scale: self.scale / r }
    }
}

/// Law of `V − E − t² Σ_{i=1}^{count} Γ_i` for Cauchy `V` and `Γ_i`.
fn cauchy_denominator(p: &ModelParams, gamma: f64, pool: CauchyParams, count: usize) -> CauchyParams {
    let t2 = p.hopping * p.hopping;
    CauchyParams {
        location: -p.energy - t2 * count as f64 * pool.location,
        scale: gamma + t2 * count as f64 * pool.scale,
    }
}

/// One step of the two-parameter map induced by the recursion on Cauchy laws.
pub fn cauchy_map(p: &ModelParams, gamma: f64, pool: CauchyParams) -> CauchyParams {
    cauchy_denominator(p, gamma, pool, p.k).reciprocal()
}

/// Fixed point of the Cauchy closure: returns the law of `Γ` and the
/// effective law of `V − E − t² Σ_{i=1}^{K−1} Γ_i`.
pub fn cauchy_fixed_point(params: &ModelParams, gamma: f64) -> Result<(CauchyParams, CauchyParams)> {
    if !(gamma > 0.0) {
        return invalid(format!("Cauchy scale must be positive, got {gamma}"));
    }
    let mut cur = CauchyParams { location: -params.energy, scale: gamma }.reciprocal();
    const MAX_ITER: usize = 100_000;
    for _ in 0..MAX_ITER {
        let next = cauchy_map(params, gamma, cur);
        let done = (next.location - cur.location).abs() < 1e-12 && (next.scale - cur.scale).abs() < 1e-12;
        cur = next;
        if done {
            return Ok((cur, cauchy_denominator(params, gamma, cur, params.k - 1)));
        }
    }
    Err(Error::FixedPointNotConverged(MAX_ITER))
}
