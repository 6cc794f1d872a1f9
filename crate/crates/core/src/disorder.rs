//! Disorder densities and the scalar functionals of them used downstream.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Power-law envelope `ρ(v) ≤ constant / |v|^(1 + exponent)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailEnvelope {
    pub exponent: f64,
    pub constant: f64,
}

/// Functionals of a tabulated density that the caller may supply instead of
/// having them estimated from the table.
#[derive(Clone, Copy, Debug)]
pub struct TabulatedProperties {
    pub sup_norm: f64,
    pub lipschitz: f64,
    pub tail: TailEnvelope,
}

/// Piecewise-linear density with power-law tails beyond the table.
#[derive(Clone, Debug)]
pub struct Tabulated {
    v: Vec<f64>,
    rho: Vec<f64>,
    /// CDF at each node.
    cdf: Vec<f64>,
    tail_power: f64,
    left_scale: f64,
    right_scale: f64,
    source: String,
}

#[derive(Clone, Debug)]
pub enum DisorderKind {
    Uniform { halfwidth: f64 },
    Cauchy { scale: f64 },
    Tabulated(Tabulated),
}

/// A disorder law with density, sampler and the constants of its regularity
/// assumptions.
#[derive(Clone, Debug)]
pub struct DisorderDensity {
    kind: DisorderKind,
    sup_norm: f64,
    lipschitz: f64,
    tail: TailEnvelope,
}

const DEFAULT_TAIL_EXPONENT: f64 = 0.5;

impl DisorderDensity {
    /// Uniform density on `[-w, w]`.
    pub fn uniform(halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return invalid(format!("uniform half-width must be positive, got {halfwidth}"));
        }
        let mut d = DisorderDensity {
            kind: DisorderKind::Uniform { halfwidth },
            sup_norm: 0.5 / halfwidth,
            // Only meaningful inside the support.
            lipschitz: 0.0,
            tail: TailEnvelope { exponent: DEFAULT_TAIL_EXPONENT, constant: 0.0 },
        };
        d.tail = d.envelope_for(DEFAULT_TAIL_EXPONENT);
        Ok(d)
    }

    /// Cauchy density with scale `γ` centred at zero.
    pub fn cauchy(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("Cauchy scale must be positive, got {scale}"));
        }
        let mut d = DisorderDensity {
            kind: DisorderKind::Cauchy { scale },
            sup_norm: 1.0 / (PI * scale),
            lipschitz: 3.0 * 3f64.sqrt() / (8.0 * PI * scale * scale),
            tail: TailEnvelope { exponent: DEFAULT_TAIL_EXPONENT, constant: 0.0 },
        };
        d.tail = d.envelope_for(DEFAULT_TAIL_EXPONENT);
        Ok(d)
    }

    /// Piecewise-linear density through `(v, ρ(v))` nodes, renormalized to unit
    /// mass, with tails decaying like `|v|^-tail_power` outside the table.
    ///
    /// Without `props`, the sup-norm, Lipschitz constant and tail envelope are
    /// estimated by scanning the table and a warning is logged.
    pub fn tabulated(
        points: &[(f64, f64)],
        tail_power: f64,
        props: Option<TabulatedProperties>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let table = Tabulated::new(points, tail_power, source.into())?;
        let mut d = DisorderDensity {
            kind: DisorderKind::Tabulated(table),
            sup_norm: 0.0,
            lipschitz: 0.0,
            tail: TailEnvelope { exponent: DEFAULT_TAIL_EXPONENT, constant: 0.0 },
        };
        match props {
            Some(p) => {
                if p.sup_norm < 0.0 || p.lipschitz < 0.0 || !(p.tail.exponent > 0.0 && p.tail.exponent < 1.0) {
                    return invalid("tabulated density properties out of range");
                }
                d.sup_norm = p.sup_norm;
                d.lipschitz = p.lipschitz;
                d.tail = p.tail;
            }
            None => {
                let DisorderKind::Tabulated(t) = &d.kind else { unreachable!() };
                log::warn!(
                    "tabulated density {}: sup-norm, Lipschitz constant and tail envelope estimated by grid scan",
                    t.source
                );
                d.sup_norm = t.rho.iter().copied().fold(0.0, f64::max);
                d.lipschitz = t.max_slope();
                let exponent = DEFAULT_TAIL_EXPONENT.min(tail_power - 1.0);
                d.tail = d.envelope_for(exponent);
            }
        }
        Ok(d)
    }

    /// Loads a two-column whitespace-separated file of `(v, ρ(v))` rows.
    pub fn from_file(path: &Path, tail_power: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Tabulated(format!("line {}: cannot parse {s:?}", lineno + 1)))
            };
            if cols.len() != 2 {
                return Err(Error::Tabulated(format!("line {}: expected two columns", lineno + 1)));
            }
            points.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::tabulated(&points, tail_power, None, path.display().to_string())
    }

    /// Replaces the stored tail envelope by the tightest one with the given
    /// exponent.
    pub fn with_tail_exponent(mut self, exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent < 1.0) {
            return invalid(format!("tail exponent must lie in (0, 1), got {exponent}"));
        }
        if let DisorderKind::Tabulated(t) = &self.kind {
            if exponent > t.tail_power - 1.0 {
                return invalid("tail exponent exceeds what the tabulated tail supports");
            }
        }
        self.tail = self.envelope_for(exponent);
        Ok(self)
    }

    pub fn kind(&self) -> &DisorderKind {
        &self.kind
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn tail(&self) -> TailEnvelope {
        self.tail
    }

    pub fn is_cauchy(&self) -> bool {
        matches!(self.kind, DisorderKind::Cauchy { .. })
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, DisorderKind::Uniform { .. })
    }

    /// Bounded support, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.kind {
            DisorderKind::Uniform { halfwidth } => Some((-halfwidth, *halfwidth)),
            _ => None,
        }
    }

    /// Half-width of the region holding the bulk of the mass.
    pub fn bulk_halfwidth(&self) -> f64 {
        match &self.kind {
            DisorderKind::Uniform { halfwidth } => *halfwidth,
            DisorderKind::Cauchy { scale } => *scale,
            DisorderKind::Tabulated(t) => t.v[0].abs().max(t.v[t.v.len() - 1].abs()),
        }
    }

    /// The density `ρ(v)`.
    pub fn density(&self, v: f64) -> f64 {
        match &self.kind {
            DisorderKind::Uniform { halfwidth } => {
                if v.abs() <= *halfwidth {
                    0.5 / halfwidth
                } else {
                    0.0
                }
            }
            DisorderKind::Cauchy { scale } => scale / (PI * (scale * scale + v * v)),
            DisorderKind::Tabulated(t) => t.density(v),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match &self.kind {
            DisorderKind::Uniform { halfwidth } => ((v + halfwidth) / (2.0 * halfwidth)).clamp(0.0, 1.0),
            DisorderKind::Cauchy { scale } => 0.5 + (v / scale).atan() / PI,
            DisorderKind::Tabulated(t) => t.cdf(v),
        }
    }

    /// Inverse CDF on `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.kind {
            DisorderKind::Uniform { halfwidth } => halfwidth * (2.0 * u - 1.0),
            DisorderKind::Cauchy { scale } => scale * (PI * (u - 0.5)).tan(),
            DisorderKind::Tabulated(t) => t.quantile(u),
        }
    }

    /// One draw by inversion.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }

    /// `(inf, sup)` of `ρ(z + e)` over `|z| ≤ alpha`.
    pub fn window_extrema(&self, e: f64, alpha: f64) -> (f64, f64) {
        let (lo, hi) = (e - alpha, e + alpha);
        match &self.kind {
            DisorderKind::Uniform { halfwidth } => {
                let h = 0.5 / halfwidth;
                let w = *halfwidth;
                if lo >= -w && hi <= w {
                    (h, h)
                } else if hi < -w || lo > w {
                    (0.0, 0.0)
                } else {
                    (0.0, h)
                }
            }
            DisorderKind::Cauchy { .. } => {
                let nearest = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
                let farthest = lo.abs().max(hi.abs());
                (self.density(farthest), self.density(nearest))
            }
            DisorderKind::Tabulated(t) => {
                // Extrema of a piecewise-linear function sit at nodes or ends.
                let mut m = self.density(lo).min(self.density(hi));
                let mut big = self.density(lo).max(self.density(hi));
                for (&v, &r) in t.v.iter().zip(&t.rho) {
                    if v > lo && v < hi {
                        m = m.min(r);
                        big = big.max(r);
                    }
                }
                (m, big)
            }
        }
    }

    /// Short label used in output files.
    pub fn label(&self) -> String {
        self.to_string()
    }

    fn envelope_for(&self, exponent: f64) -> TailEnvelope {
        let p = 1.0 + exponent;
        let constant = match &self.kind {
            DisorderKind::Uniform { halfwidth } => 0.5 / halfwidth * halfwidth.powf(p),
            DisorderKind::Cauchy { scale } => {
                // ρ(v)|v|^p is unimodal in log v; golden-section search.
                let f = |lv: f64| {
                    let v = lv.exp();
                    self.density(v) * v.powf(p)
                };
                let (mut a, mut b) = ((scale * 1e-3).ln(), (scale * 1e3).ln());
                let r = (5f64.sqrt() - 1.0) / 2.0;
                for _ in 0..200 {
                    let c = b - r * (b - a);
                    let d = a + r * (b - a);
                    if f(c) > f(d) {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                f(0.5 * (a + b)) * (1.0 + 1e-12)
            }
            DisorderKind::Tabulated(t) => t.envelope_scan(p) * (1.0 + 1e-9),
        };
        TailEnvelope { exponent, constant }
    }
}

impl fmt::Display for DisorderDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DisorderKind::Uniform { halfwidth } if *halfwidth == 1.0 => write!(f, "uniform"),
            DisorderKind::Uniform { halfwidth } => write!(f, "uniform:{halfwidth}"),
            DisorderKind::Cauchy { scale } if *scale == 1.0 => write!(f, "cauchy"),
            DisorderKind::Cauchy { scale } => write!(f, "cauchy:{scale}"),
            DisorderKind::Tabulated(t) => write!(f, "file:{}", t.source),
        }
    }
}

impl Tabulated {
    fn new(points: &[(f64, f64)], tail_power: f64, source: String) -> Result<Self> {
        if points.len() < 64 {
            return Err(Error::Tabulated(format!("need at least 64 rows, got {}", points.len())));
        }
        if !(tail_power > 1.0) {
            return Err(Error::Tabulated(format!("tail power must exceed 1, got {tail_power}")));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Tabulated(format!("abscissas not strictly increasing at {}", w[1].0)));
            }
        }
        if points.iter().any(|&(v, r)| !v.is_finite() || !r.is_finite() || r < 0.0) {
            return Err(Error::Tabulated("non-finite value or negative density".into()));
        }
        let v: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut rho: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = v.len();
        let half_span = 0.5 * (v[n - 1] - v[0]);
        let left_scale = v[0].abs().max(half_span);
        let right_scale = v[n - 1].abs().max(half_span);

        let tail_mass = |r: f64, scale: f64| r * scale / (tail_power - 1.0);
        let mut total = tail_mass(rho[0], left_scale) + tail_mass(rho[n - 1], right_scale);
        for i in 0..n - 1 {
            total += 0.5 * (rho[i] + rho[i + 1]) * (v[i + 1] - v[i]);
        }
        if !(total > 0.0) {
            return Err(Error::Tabulated("density has zero mass".into()));
        }
        for r in &mut rho {
            *r /= total;
        }
        let mut cdf = Vec::with_capacity(n);
        let mut acc = tail_mass(rho[0], left_scale);
        cdf.push(acc);
        for i in 0..n - 1 {
            acc += 0.5 * (rho[i] + rho[i + 1]) * (v[i + 1] - v[i]);
            cdf.push(acc);
        }
        Ok(Tabulated { v, rho, cdf, tail_power, left_scale, right_scale, source })
    }

    fn density(&self, x: f64) -> f64 {
        let n = self.v.len();
        if x < self.v[0] {
            let d = self.v[0] - x;
            self.rho[0] * (self.left_scale / (self.left_scale + d)).powf(self.tail_power)
        } else if x > self.v[n - 1] {
            let d = x - self.v[n - 1];
            self.rho[n - 1] * (self.right_scale / (self.right_scale + d)).powf(self.tail_power)
        } else {
            let i = self.v.partition_point(|&a| a <= x).clamp(1, n - 1) - 1;
            let f = (x - self.v[i]) / (self.v[i + 1] - self.v[i]);
            self.rho[i] * (1.0 - f) + self.rho[i + 1] * f
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.v.len();
        let q = self.tail_power - 1.0;
        if x < self.v[0] {
            let d = self.v[0] - x;
            self.rho[0] * self.left_scale / q * (self.left_scale / (self.left_scale + d)).powf(q)
        } else if x > self.v[n - 1] {
            let d = x - self.v[n - 1];
            let right = self.rho[n - 1] * self.right_scale / q;
            self.cdf[n - 1] + right * (1.0 - (self.right_scale / (self.right_scale + d)).powf(q))
        } else {
            let i = self.v.partition_point(|&a| a <= x).clamp(1, n - 1) - 1;
            let dx = x - self.v[i];
            let h = self.v[i + 1] - self.v[i];
            let (a, b) = (self.rho[i], self.rho[i + 1]);
            self.cdf[i] + a * dx + (b - a) * dx * dx / (2.0 * h)
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.v.len();
        let q = self.tail_power - 1.0;
        if u < self.cdf[0] {
            let mass = self.rho[0] * self.left_scale / q;
            let d = self.left_scale * ((mass / u.max(f64::MIN_POSITIVE)).powf(1.0 / q) - 1.0);
            return self.v[0] - d;
        }
        if u >= self.cdf[n - 1] {
            let mass = self.rho[n - 1] * self.right_scale / q;
            let rem = (1.0 - (u - self.cdf[n - 1]) / mass).max(f64::MIN_POSITIVE);
            let d = self.right_scale * (rem.powf(-1.0 / q) - 1.0);
            return self.v[n - 1] + d;
        }
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1) - 1;
        let m = u - self.cdf[i];
        let h = self.v[i + 1] - self.v[i];
        let (a, b) = (self.rho[i], self.rho[i + 1]);
        // Solve a x + (b - a) x^2 / (2h) = m in the stable form.
        let slope = (b - a) / h;
        let disc = (a * a + 2.0 * slope * m).max(0.0);
        let denom = a + disc.sqrt();
        let x = if denom > 0.0 { 2.0 * m / denom } else { 0.0 };
        self.v[i] + x.clamp(0.0, h)
    }

    fn max_slope(&self) -> f64 {
        let mut s = 0.0f64;
        for i in 0..self.v.len() - 1 {
            s = s.max((self.rho[i + 1] - self.rho[i]).abs() / (self.v[i + 1] - self.v[i]));
        }
        let n = self.v.len();
        s.max(self.rho[0] * self.tail_power / self.left_scale)
            .max(self.rho[n - 1] * self.tail_power / self.right_scale)
    }

    fn envelope_scan(&self, p: f64) -> f64 {
        let mut best = 0.0f64;
        let mut probe = |x: f64| best = best.max(self.density(x) * x.abs().powf(p));
        for i in 0..self.v.len() - 1 {
            for k in 0..=8 {
                probe(self.v[i] + (self.v[i + 1] - self.v[i]) * k as f64 / 8.0);
            }
        }
        let reach = self.v[0].abs().max(self.v[self.v.len() - 1].abs()).max(1.0);
        for k in 0..=600 {
            let x = reach * 10f64.powf(k as f64 / 100.0);
            probe(x);
            probe(-x);
        }
        best
    }
}
