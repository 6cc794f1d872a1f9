//! Discretized transfer kernel
//! `𝒦(x, y) = t^{2−s} / |x|^{2−s} · ρ_eff(−t²/x − y)` and its leading
//! eigenpair.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::disorder::{DisorderDensity, DisorderKind};
use crate::error::{invalid, Error, Result};
use crate::rde::{CauchyParams, EffectiveDensity, ModelParams};

/// Symmetric grid, log-spaced in `|x|`, with dual-cell quadrature weights.
#[derive(Clone, Debug)]
pub struct KernelGrid {
    abscissas: Vec<f64>,
    weights: Vec<f64>,
    n_per_sign: usize,
    x_min: f64,
    x_max: f64,
}

impl KernelGrid {
    pub fn abscissas(&self) -> &[f64] {
        &self.abscissas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_per_sign(&self) -> usize {
        self.n_per_sign
    }

    pub fn len(&self) -> usize {
        self.abscissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissas.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Quadrature cell `[lo, hi]` of every abscissa.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let n = self.n_per_sign;
        let pos = &self.abscissas[n..];
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(self.x_min);
        edges.extend(pos.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        edges.push(self.x_max);
        let mut cells: Vec<(f64, f64)> = edges.windows(2).rev().map(|e| (-e[1], -e[0])).collect();
        cells.extend(edges.windows(2).map(|e| (e[0], e[1])));
        cells
    }
}

/// `2n` abscissas, `n` per sign, geometrically spaced in `[x_min, x_max]`.
/// Each point owns the cell between the midpoints to its neighbours, clipped
/// to `[x_min, x_max]`, so the weights sum to `2 (x_max − x_min)`.
pub fn build_grid(x_min: f64, x_max: f64, n: usize) -> Result<KernelGrid> {
    if !(x_min > 0.0) {
        return invalid(format!("x_min must be positive, got {x_min}"));
    }
    if !(x_max > x_min && x_max.is_finite()) {
        return invalid(format!("x_max must exceed x_min, got {x_max}"));
    }
    if n < 64 {
        return invalid(format!("need at least 64 points per sign, got {n}"));
    }
    let ratio = (x_max / x_min).ln() / (n - 1) as f64;
    let pos: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => x_min,
            _ if i == n - 1 => x_max,
            _ => x_min * (ratio * i as f64).exp(),
        })
        .collect();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(x_min);
    edges.extend(pos.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(x_max);
    let w: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();

    let mut abscissas: Vec<f64> = pos.iter().rev().map(|&x| -x).collect();
    abscissas.extend(&pos);
    let mut weights: Vec<f64> = w.iter().rev().copied().collect();
    weights.extend(&w);
    Ok(KernelGrid { abscissas, weights, n_per_sign: n, x_min, x_max })
}

/// Where the kernel takes its density from.
#[derive(Clone, Debug)]
pub enum DensitySource {
    /// The bare disorder density shifted by the energy.
    Bare(DisorderDensity),
    /// A population-dynamics estimate of the effective density.
    Effective(EffectiveDensity),
    /// The exact effective density for Cauchy disorder.
    CauchyClosed(CauchyParams),
    /// Another source multiplied by a positive constant.
    Scaled(Box<DensitySource>, f64),
}

impl DensitySource {
    /// Density of `V − E − …` at `z`.
    #[inline]
    pub fn eval(&self, z: f64, energy: f64) -> f64 {
        match self {
            DensitySource::Bare(d) => d.density(z + energy),
            DensitySource::Effective(e) => e.eval(z),
            DensitySource::CauchyClosed(c) => c.density(z),
            DensitySource::Scaled(inner, c) => c * inner.eval(z, energy),
        }
    }

    /// Integral of [`eval`](Self::eval) over `[a, b]`.
    pub fn mass(&self, a: f64, b: f64, energy: f64) -> f64 {
        match self {
            DensitySource::Bare(d) => match d.kind() {
                DisorderKind::Cauchy { scale } => cauchy_mass(0.0, *scale, a + energy, b + energy),
                _ => (d.cdf(b + energy) - d.cdf(a + energy)).max(0.0),
            },
            DensitySource::Effective(e) => e.mass(a, b),
            DensitySource::CauchyClosed(c) => cauchy_mass(c.location, c.scale, a, b),
            DensitySource::Scaled(inner, c) => c * inner.mass(a, b, energy),
        }
    }

    pub fn scaled(self, factor: f64) -> DensitySource {
        DensitySource::Scaled(Box::new(self), factor)
    }

    pub fn name(&self) -> &'static str {
        match self {
            DensitySource::Bare(_) => "bare",
            DensitySource::Effective(_) => "effective",
            DensitySource::CauchyClosed(_) => "cauchy-closed",
            DensitySource::Scaled(inner, _) => inner.name(),
        }
    }
}

// Difference of arctangents without cancellation far out in the tails.
fn cauchy_mass(location: f64, scale: f64, a: f64, b: f64) -> f64 {
    let (u, v) = ((a - location) / scale, (b - location) / scale);
    let m = if u * v > -1.0 {
        ((v - u) / (1.0 + u * v)).atan()
    } else {
        v.atan() - u.atan()
    };
    (m / PI).max(0.0)
}

/// How a kernel row is integrated against the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    /// `M_ij = 𝒦(x_i, y_j) w_j`.
    #[default]
    Midpoint,
    /// `M_ij = ∫_{cell j} 𝒦(x_i, y) dy`, exact in `y`. Resolves rows whose
    /// density is narrower than the cells, which happens for small `|x|`
    /// where the density sits near `y = −t²/x` on a coarse part of the grid.
    CellIntegrated,
}

/// Dense kernel matrix, `M_ij = 𝒦(x_i, y_j) w_j` by default.
#[derive(Clone, Debug)]
pub struct DiscreteKernel {
    grid: KernelGrid,
    params: ModelParams,
    source: DensitySource,
    quadrature: Quadrature,
    matrix: Vec<f64>,
}

/// Evaluates every entry of the kernel matrix with the midpoint rule.
pub fn assemble_kernel(source: DensitySource, params: ModelParams, grid: KernelGrid) -> Result<DiscreteKernel> {
    assemble_kernel_with(source, params, grid, Quadrature::Midpoint)
}

pub fn assemble_kernel_with(source: DensitySource, params: ModelParams, grid: KernelGrid, quadrature: Quadrature) -> Result<DiscreteKernel> {
    let t = params.hopping();
    if !(t > 0.0) {
        return invalid("kernel needs a positive hopping");
    }
    let n = grid.len();
    let mut matrix = vec![0.0; n * n];
    let cells = grid.cells();
    matrix.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = grid.abscissas[i];
        let pre = prefactor(&params, x);
        let shift = -t * t / x;
        match quadrature {
            Quadrature::Midpoint => {
                for ((m, &y), &w) in row.iter_mut().zip(&grid.abscissas).zip(&grid.weights) {
                    *m = pre * source.eval(shift - y, params.energy()) * w;
                }
            }
            Quadrature::CellIntegrated => {
                for (m, &(lo, hi)) in row.iter_mut().zip(&cells) {
                    *m = pre * source.mass(shift - hi, shift - lo, params.energy());
                }
            }
        }
    });
    if let Some(pos) = matrix.iter().position(|m| !m.is_finite()) {
        return Err(Error::NonFiniteKernel { row: pos / n, col: pos % n });
    }
    Ok(DiscreteKernel { grid, params, source, quadrature, matrix })
}

#[inline]
fn prefactor(params: &ModelParams, x: f64) -> f64 {
    let e = 2.0 - params.s();
    params.hopping().powf(e) / x.abs().powf(e)
}

impl DiscreteKernel {
    pub fn grid(&self) -> &KernelGrid {
        &self.grid
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn source(&self) -> &DensitySource {
        &self.source
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Row-major matrix entries.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim() + j]
    }

    /// The continuum kernel `𝒦(x, y)` evaluated directly.
    pub fn formula(&self, x: f64, y: f64) -> f64 {
        let t = self.params.hopping();
        prefactor(&self.params, x) * self.source.eval(-t * t / x - y, self.params.energy())
    }

    /// Binary dump: rows and cols as little-endian `u64`, then the entries as
    /// little-endian `f64` in row-major order.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let n = self.dim() as u64;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&n.to_le_bytes())?;
        for v in &self.matrix {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Leading eigenpair from power iteration.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub lambda: f64,
    /// Normalized to unit weighted L¹ norm.
    pub eigenvector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration for a nonnegative kernel.
pub fn leading_eigen(kernel: &DiscreteKernel, tol: f64, max_iter: usize) -> Result<EigenResult> {
    power_iteration(&kernel.matrix, &kernel.grid.weights, tol, max_iter)
}

/// Power iteration on a row-major `n × n` nonnegative matrix, with the L¹ norm
/// `‖a‖ = Σ w_i |a_i|`. Starts from the constant vector; the eigenvalue is the
/// norm growth ratio and iteration stops once successive normalized iterates
/// differ by less than `tol`.
pub fn power_iteration(matrix: &[f64], weights: &[f64], tol: f64, max_iter: usize) -> Result<EigenResult> {
    let n = weights.len();
    if matrix.len() != n * n {
        return invalid("matrix and weight dimensions disagree");
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let norm = |v: &[f64]| v.iter().zip(weights).map(|(a, w)| a.abs() * w).sum::<f64>();
    let total: f64 = weights.iter().sum();
    let mut a = vec![1.0 / total; n];
    let mut b = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        b.par_iter_mut().enumerate().for_each(|(i, bi)| {
            let row = &matrix[i * n..(i + 1) * n];
            *bi = row.iter().zip(&a).map(|(m, x)| m * x).sum();
        });
        lambda = norm(&b);
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("iterate has norm {lambda}; the kernel is not positive"));
        }
        for x in &mut b {
            *x /= lambda;
        }
        residual = a.iter().zip(&b).zip(weights).map(|((x, y), w)| (x - y).abs() * w).sum();
        std::mem::swap(&mut a, &mut b);
        if residual < tol {
            return Ok(EigenResult { lambda, eigenvector: a, iterations: it, residual });
        }
    }
    log::debug!("power iteration stopped at λ = {lambda} with residual {residual:e}");
    Err(Error::EigenNotConverged { iterations: max_iter, residual })
}

/// Points `(x, |x| a(x))`, scaled so that the median over `x ∈ [0.05, 0.5]` is 1.
pub fn eigenvector_profile(res: &EigenResult, grid: &KernelGrid) -> Vec<(f64, f64)> {
    let mut profile: Vec<(f64, f64)> =
        grid.abscissas.iter().zip(&res.eigenvector).map(|(&x, &a)| (x, x.abs() * a)).collect();
    let mut window: Vec<f64> = profile.iter().filter(|p| p.0 >= 0.05 && p.0 <= 0.5).map(|p| p.1).collect();
    if !window.is_empty() {
        window.sort_unstable_by(|a, b| a.total_cmp(b));
        let median = crate::stats::quantile(&window, 0.5);
        if median > 0.0 {
            for p in &mut profile {
                p.1 /= median;
            }
        }
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_is_symmetric_with_exact_weight_sum() {
        let g = build_grid(1e-4, 10.0, 64).unwrap();
        assert_eq!(g.len(), 128);
        for i in 0..128 {
            assert_eq!(g.abscissas()[i], -g.abscissas()[127 - i]);
        }
        let sum: f64 = g.weights().iter().sum();
        assert_relative_eq!(sum, 2.0 * (10.0 - 1e-4), max_relative = 1e-9);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!(g.abscissas().iter().all(|&x| x != 0.0));
    }

    #[test]
    fn grid_rejects_bad_bounds() {
        assert!(build_grid(0.0, 10.0, 64).is_err());
        assert!(build_grid(1.0, 0.5, 64).is_err());
        assert!(build_grid(1e-3, 1.0, 10).is_err());
    }

    #[test]
    fn diagonal_matrix_eigenpair() {
        let m = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let r = power_iteration(&m, &[1.0; 3], 1e-12, 200).unwrap();
        assert_relative_eq!(r.lambda, 2.0, max_relative = 1e-10);
        assert!(r.eigenvector[0] > 1.0 - 1e-10);
        assert!(r.eigenvector[1] < 1e-10 && r.eigenvector[2] < 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        // Eigenvalues ±√2: the iterates oscillate forever.
        let m = [0.0, 1.0, 2.0, 0.0];
        let err = power_iteration(&m, &[1.0, 3.0], 1e-12, 5).unwrap_err();
        assert!(matches!(err, Error::EigenNotConverged { iterations: 5, .. }));
    }

    #[test]
    fn s_one_prefactor_is_t_over_x() {
        let p = ModelParams::with_hopping(2, 0.11, 0.0, 1.0).unwrap();
        let g = build_grid(1e-6 * 0.0121, 10.0, 64).unwrap();
        let d = DisorderDensity::uniform(1.0).unwrap();
        let k = assemble_kernel(DensitySource::Bare(d.clone()), p, g.clone()).unwrap();
        for &(i, j) in &[(3, 70), (64, 64), (100, 5), (127, 0), (70, 90)] {
            let (x, y) = (g.abscissas()[i], g.abscissas()[j]);
            let hand = 0.11 / x.abs() * d.density(-0.0121 / x - y) * g.weights()[j];
            assert_relative_eq!(k.entry(i, j), hand, max_relative = 1e-14, epsilon = 1e-300);
        }
    }

    #[test]
    fn cells_tile_the_domain() {
        let g = build_grid(1e-4, 10.0, 64).unwrap();
        let cells = g.cells();
        for ((lo, hi), w) in cells.iter().zip(g.weights()) {
            assert_relative_eq!(hi - lo, *w, max_relative = 1e-12);
        }
        for (c, x) in cells.iter().zip(g.abscissas()) {
            assert!(c.0 <= *x && *x <= c.1);
        }
    }

    #[test]
    fn source_mass_matches_quadrature() {
        let e = DisorderDensity::cauchy(1.3).unwrap();
        let sources = [
            DensitySource::Bare(DisorderDensity::uniform(1.0).unwrap()),
            DensitySource::Bare(e),
            DensitySource::CauchyClosed(CauchyParams { location: 0.4, scale: 0.7 }),
        ];
        for src in &sources {
            for &(a, b) in &[(-3.0, 0.5), (0.2, 0.9), (-1.5, -0.99), (40.0, 55.0)] {
                let n = 200_000;
                let h = (b - a) / n as f64;
                let direct: f64 = (0..n).map(|i| src.eval(a + h * (i as f64 + 0.5), 0.1)).sum::<f64>() * h;
                // The midpoint sum errs by O(h) across the uniform jumps.
                assert_relative_eq!(src.mass(a, b, 0.1), direct, max_relative = 1e-4, epsilon = 1e-9);
            }
        }
        // Far tail, where a difference of CDFs would cancel.
        let c = CauchyParams { location: 0.0, scale: 1.0 };
        let m = DensitySource::CauchyClosed(c).mass(1e8, 1e8 + 1.0, 0.0);
        assert_relative_eq!(m, 1.0 / (PI * 1e16), max_relative = 1e-6);
    }

    #[test]
    fn cell_rows_carry_the_row_mass() {
        let p = ModelParams::with_hopping(2, 0.2, 0.0, 1.0).unwrap();
        let g = build_grid(1e-3, 100.0, 400).unwrap();
        let src = DensitySource::Bare(DisorderDensity::cauchy(1.0).unwrap());
        let k = assemble_kernel_with(src.clone(), p, g.clone(), Quadrature::CellIntegrated).unwrap();
        let n = k.dim();
        let i = 300;
        let x = g.abscissas()[i];
        let row: f64 = k.matrix()[i * n..(i + 1) * n].iter().sum();
        let shift = -0.04 / x;
        let total = src.mass(shift - 100.0, shift + 100.0, 0.0) - src.mass(shift - 1e-3, shift + 1e-3, 0.0);
        assert_relative_eq!(row, 0.2 / x.abs() * total, max_relative = 1e-10);
    }
}
