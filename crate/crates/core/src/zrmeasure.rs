//! Zero-range jump rates and the thermodynamics of their product invariant
//! measures.
//!
//! For a rate `g` with `g(0) = 0`, the single-site grand-canonical law at
//! fugacity `α` is `ν̄_α(k) = α^k / (g(k)! Z_α)` with
//! `Z_α = Σ_k α^k / g(k)!` and `g(k)! = g(1)⋯g(k)`. The fugacity map
//! `φ(ρ)` inverts the mean density `ρ(α) = E_{ν̄_α}[k]`. Everything here
//! is computed from the series directly: moments by summing up to a
//! truncation index fixed at construction, `φ` by safeguarded Newton using
//! `dρ/dα = Var/α`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{LatticeField, TorusGrid};
use crate::simulator::ParticleConfig;
use crate::{Error, Result};

/// Relative size below which a series term counts as negligible.
const SERIES_EPS: f64 = 1e-16;
/// Number of consecutive negligible terms required before truncating.
const SERIES_RUN: usize = 10;
/// Tail mass left out by the inverse-CDF samplers.
const SAMPLER_TAIL: f64 = 1e-14;
/// Largest working density accepted by [`ThermoTable::new`]; keeps `Z_α`
/// comfortably inside `f64` range.
const MAX_WORKING_DENSITY: f64 = 200.0;

/// Built-in zero-range rate catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateKind {
    /// `g(k) = k`; independent walkers, `φ = id`.
    Linear,
    /// `g(k) = k + a·1{k ≥ 1}`; genuinely nonlinear `φ`.
    Affine {
        #[serde(default = "default_affine_a")]
        a: f64,
    },
}

fn default_affine_a() -> f64 {
    1.0
}

/// A zero-range rate together with its Lipschitz and linear-growth
/// constants: `sup|g(k+1) - g(k)| ≤ lipschitz`, `g(k) ≤ C k`,
/// `g(k + r₂) - g(k) ≥ r₁` for `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRateSpec {
    kind: RateKind,
    lipschitz: f64,
    growth_c: f64,
    r1: f64,
    r2: u32,
}

impl JumpRateSpec {
    pub fn linear() -> Self {
        Self { kind: RateKind::Linear, lipschitz: 1.0, growth_c: 1.0, r1: 1.0, r2: 1 }
    }

    /// `g(k) = k + a` for `k ≥ 1`; requires `a > -1` so that `g(1) > 0`.
    pub fn affine(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > -1.0) {
            return Err(Error::config(format!("affine rate needs a > -1, got {a}")));
        }
        Ok(Self {
            kind: RateKind::Affine { a },
            lipschitz: (1.0 + a).abs().max(1.0),
            growth_c: (1.0 + a).max(1.0),
            r1: 1.0,
            r2: 1,
        })
    }

    pub fn from_kind(kind: RateKind) -> Result<Self> {
        match kind {
            RateKind::Linear => Ok(Self::linear()),
            RateKind::Affine { a } => Self::affine(a),
        }
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `(C, r₁, r₂)` of the linear-growth condition.
    pub fn growth_constants(&self) -> (f64, f64, u32) {
        (self.growth_c, self.r1, self.r2)
    }

    #[inline]
    pub fn rate(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self.kind {
            RateKind::Linear => k as f64,
            RateKind::Affine { a } => k as f64 + a,
        }
    }

    /// Checks the rate conditions for `k ≤ k_max`.
    pub fn validate(&self, k_max: u32) -> Result<()> {
        if self.rate(0) != 0.0 {
            return Err(Error::domain("g(0) must vanish"));
        }
        for k in 1..=k_max {
            let g = self.rate(k);
            if g <= 0.0 {
                return Err(Error::domain(format!("g({k}) = {g} is not positive")));
            }
            if g > self.growth_c * k as f64 * (1.0 + 1e-12) {
                return Err(Error::domain(format!("g({k}) = {g} exceeds C·k with C = {}", self.growth_c)));
            }
            let inc = self.rate(k + self.r2) - g;
            if inc < self.r1 * (1.0 - 1e-12) {
                return Err(Error::domain(format!("g({k}+r2) - g({k}) = {inc} below r1 = {}", self.r1)));
            }
            let step = (self.rate(k) - self.rate(k - 1)).abs();
            if step > self.lipschitz * (1.0 + 1e-12) {
                return Err(Error::domain(format!("|g({k}) - g({})| = {step} exceeds the Lipschitz bound", k - 1)));
            }
        }
        Ok(())
    }
}

/// Moments of the single-site law at a fixed fugacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteMoments {
    pub partition: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Series sums until `SERIES_RUN` consecutive terms fall below
/// `SERIES_EPS` relative to the partial sum; returns the last index used.
fn dynamic_truncation(spec: &JumpRateSpec, alpha: f64) -> usize {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut run = 0;
    let mut k = 0usize;
    while run < SERIES_RUN {
        k += 1;
        term *= alpha / spec.rate(k as u32);
        sum += term;
        if term < SERIES_EPS * sum {
            run += 1;
        } else {
            run = 0;
        }
    }
    k
}

/// Immutable thermodynamic table for one rate on the working density range
/// `[0, M_u]`.
#[derive(Debug, Clone, Serialize)]
pub struct ThermoTable {
    spec: JumpRateSpec,
    max_density: f64,
    alpha_max: f64,
    k_trunc: usize,
    tail_bound: f64,
    tolerance: f64,
}

impl ThermoTable {
    /// Builds the table for densities in `[0, max_density]`. The working
    /// fugacity range is `[0, 2 φ(max_density)]`.
    pub fn new(spec: JumpRateSpec, max_density: f64) -> Result<Self> {
        Self::with_tolerance(spec, max_density, 1e-15)
    }

    pub fn with_tolerance(spec: JumpRateSpec, max_density: f64, tolerance: f64) -> Result<Self> {
        if !(max_density > 0.0 && max_density <= MAX_WORKING_DENSITY) {
            return Err(Error::config(format!(
                "working density bound must lie in (0, {MAX_WORKING_DENSITY}], got {max_density}"
            )));
        }
        // Provisional bracket: ρ(α) ≥ α / C, so φ(M) ≤ C·M.
        let provisional = Self {
            spec,
            max_density,
            alpha_max: spec.growth_c * max_density + 1.0,
            k_trunc: 0,
            tail_bound: 0.0,
            tolerance,
        };
        let provisional = Self {
            k_trunc: dynamic_truncation(&spec, provisional.alpha_max),
            ..provisional
        };
        let phi_max = provisional.fugacity_of_density(max_density)?;
        let alpha_max = 2.0 * phi_max;
        let k_trunc = dynamic_truncation(&spec, alpha_max);

        // Certify the tail: beyond k_trunc consecutive ratios are bounded by
        // q = α_max / g(k_trunc + 1) < 1 for the increasing catalog rates.
        let mut term = 1.0;
        let mut z = 1.0;
        for k in 1..=k_trunc {
            term *= alpha_max / spec.rate(k as u32);
            z += term;
        }
        let q = alpha_max / spec.rate(k_trunc as u32 + 1);
        if q >= 1.0 {
            return Err(Error::Solver(format!("series tail not geometric at k = {k_trunc}")));
        }
        let tail_bound = term * q / (1.0 - q) / z;
        if tail_bound > tolerance {
            return Err(Error::Solver(format!(
                "series tail bound {tail_bound:e} above tolerance {tolerance:e}"
            )));
        }
        Ok(Self { spec, max_density, alpha_max, k_trunc, tail_bound, tolerance })
    }

    pub fn spec(&self) -> &JumpRateSpec {
        &self.spec
    }

    /// Largest density `M_u` accepted by the density-side maps.
    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn truncation(&self) -> usize {
        self.k_trunc
    }

    /// Certified relative tail of the partition series at `α_max`.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn check_fugacity(&self, alpha: f64) -> Result<()> {
        if !(alpha >= 0.0) {
            return Err(Error::domain(format!("fugacity must be non-negative, got {alpha}")));
        }
        if alpha > self.alpha_max * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "fugacity {alpha} outside the working range [0, {}]",
                self.alpha_max
            )));
        }
        Ok(())
    }

    fn check_density(&self, rho: f64) -> Result<()> {
        if !(rho >= 0.0) {
            return Err(Error::domain(format!("density must be non-negative, got {rho}")));
        }
        if rho > self.max_density * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "density {rho} beyond the working bound M_u = {}",
                self.max_density
            )));
        }
        Ok(())
    }

    fn moments_unchecked(&self, alpha: f64) -> SiteMoments {
        let mut term = 1.0;
        let mut z = 1.0;
        let mut m1 = 0.0;
        for k in 1..=self.k_trunc {
            term *= alpha / self.spec.rate(k as u32);
            z += term;
            m1 += k as f64 * term;
        }
        let mean = m1 / z;
        // Centered second pass keeps the variance accurate for small α.
        let mut term = 1.0;
        let mut m2 = mean * mean;
        for k in 1..=self.k_trunc {
            term *= alpha / self.spec.rate(k as u32);
            let d = k as f64 - mean;
            m2 += d * d * term;
        }
        SiteMoments { partition: z, mean, variance: m2 / z }
    }

    pub fn moments(&self, alpha: f64) -> Result<SiteMoments> {
        self.check_fugacity(alpha)?;
        Ok(self.moments_unchecked(alpha))
    }

    /// `Z_α = Σ_k α^k / g(k)!`.
    pub fn partition_function(&self, alpha: f64) -> Result<f64> {
        Ok(self.moments(alpha)?.partition)
    }

    /// `ρ(α) = α d/dα log Z_α`.
    pub fn mean_density(&self, alpha: f64) -> Result<f64> {
        Ok(self.moments(alpha)?.mean)
    }

    /// The fugacity map `φ(ρ)`: the unique `α` with `ρ(α) = ρ`.
    pub fn fugacity_of_density(&self, rho: f64) -> Result<f64> {
        self.check_density(rho)?;
        if rho == 0.0 {
            return Ok(0.0);
        }
        Ok(self.solve_fugacity(rho, None))
    }

    fn solve_fugacity(&self, rho: f64, guess: Option<f64>) -> f64 {
        let (mut lo, mut hi) = (0.0, self.alpha_max);
        let mut alpha = guess
            .unwrap_or(rho * self.spec.rate(1))
            .clamp(0.0, hi);
        for _ in 0..200 {
            let m = self.moments_unchecked(alpha);
            let f = m.mean - rho;
            if f == 0.0 {
                return alpha;
            }
            if f < 0.0 {
                lo = alpha;
            } else {
                hi = alpha;
            }
            let slope = if alpha > 0.0 && m.variance > 0.0 {
                m.variance / alpha
            } else {
                1.0 / self.spec.rate(1)
            };
            let mut next = alpha - f / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - alpha).abs() <= 4.0 * f64::EPSILON * alpha.max(f64::MIN_POSITIVE) {
                return next;
            }
            alpha = next;
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        alpha
    }

    /// Single-site variance under `ν_ρ`, i.e. the incompressibility
    /// `χ₁(ρ) = φ(ρ)/φ'(ρ)`.
    pub fn chi1(&self, rho: f64) -> Result<f64> {
        let alpha = self.fugacity_of_density(rho)?;
        Ok(self.moments_unchecked(alpha).variance)
    }

    /// `φ'(ρ) = φ(ρ) / Var_{ν_ρ}`, with the limit `φ'(0) = g(1)`.
    pub fn phi_prime(&self, rho: f64) -> Result<f64> {
        let alpha = self.fugacity_of_density(rho)?;
        Ok(self.phi_prime_at(alpha))
    }

    fn phi_prime_at(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return self.phi_prime_at_zero();
        }
        let var = self.moments_unchecked(alpha).variance;
        if var > 0.0 {
            alpha / var
        } else {
            self.phi_prime_at_zero()
        }
    }

    /// `φ'(0) = 1 / (dρ/dα)(0) = g(1)`; the per-rate value of the constant
    /// `c₀` bounding `φ'` at the origin.
    pub fn phi_prime_at_zero(&self) -> f64 {
        self.spec.rate(1)
    }

    /// Probabilities `ν_ρ(k)` for `k = 0, 1, …` until the remaining mass
    /// drops below `1e-14`.
    pub fn pmf(&self, rho: f64) -> Result<Vec<f64>> {
        let alpha = self.fugacity_of_density(rho)?;
        let z = self.moments_unchecked(alpha).partition;
        let mut out = vec![1.0 / z];
        let mut cum = 1.0 / z;
        let mut p = 1.0 / z;
        let mut k = 0u32;
        while 1.0 - cum >= SAMPLER_TAIL && (k as usize) < self.k_trunc {
            k += 1;
            p *= alpha / self.spec.rate(k);
            cum += p;
            out.push(p);
        }
        Ok(out)
    }

    /// One exact inverse-CDF draw from `ν_ρ`.
    pub fn sample_site<R: Rng + ?Sized>(&self, rho: f64, rng: &mut R) -> Result<u32> {
        self.check_density(rho)?;
        if rho == 0.0 {
            return Ok(0);
        }
        let alpha = self.solve_fugacity(rho, None);
        let z = self.moments_unchecked(alpha).partition;
        Ok(self.draw(alpha, z, rng))
    }

    fn draw<R: Rng + ?Sized>(&self, alpha: f64, z: f64, rng: &mut R) -> u32 {
        let target: f64 = rng.random();
        let mut p = 1.0 / z;
        let mut cum = p;
        let mut k = 0u32;
        while cum <= target && 1.0 - cum >= SAMPLER_TAIL && (k as usize) < self.k_trunc {
            k += 1;
            p *= alpha / self.spec.rate(k);
            cum += p;
        }
        k
    }

    /// Precomputed sampler for repeated draws at one density.
    pub fn site_sampler(&self, rho: f64) -> Result<SiteSampler> {
        let pmf = self.pmf(rho)?;
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in pmf {
            acc += p;
            cdf.push(acc);
        }
        Ok(SiteSampler { cdf })
    }

    /// Writes `alpha, partition, density, chi1` rows on an even fugacity
    /// grid over the working range.
    pub fn write_csv<W: Write>(&self, mut w: W, points: usize) -> Result<()> {
        writeln!(w, "alpha,partition,density,chi1")?;
        let points = points.max(2);
        for i in 0..points {
            let alpha = self.alpha_max * i as f64 / (points - 1) as f64;
            let m = self.moments_unchecked(alpha);
            writeln!(w, "{alpha:e},{:e},{:e},{:e}", m.partition, m.mean, m.variance)?;
        }
        Ok(())
    }

    /// Monotone cubic interpolant of `φ` on `[0, M_u]` with `knots` intervals.
    pub fn phi_interpolant(&self, knots: usize) -> Result<PhiInterpolant> {
        PhiInterpolant::build(self, knots)
    }

    /// Interpolant with the default resolution.
    pub fn default_phi_interpolant(&self) -> Result<PhiInterpolant> {
        let knots = ((self.max_density / 5e-4).ceil() as usize).clamp(2000, 400_000);
        self.phi_interpolant(knots)
    }
}

/// `χ₂(ρ) = ρ(1 - ρ)`, the Bernoulli variance.
pub fn chi2(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("exclusion density must lie in [0,1], got {rho}")));
    }
    Ok(rho * (1.0 - rho))
}

/// Inverse-CDF sampler with a cached table.
#[derive(Debug, Clone)]
pub struct SiteSampler {
    cdf: Vec<f64>,
}

impl SiteSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let target: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= target);
        k.min(self.cdf.len() - 1) as u32
    }
}

/// Draws `η₁(x) ~ ν_{u(x)}` and `η₂(x) ~ Bernoulli(v(x))` independently.
pub fn sample_product_config<R: Rng + ?Sized>(
    table: &ThermoTable,
    u: &LatticeField,
    v: &LatticeField,
    rng: &mut R,
) -> Result<ParticleConfig> {
    let grid: TorusGrid = u.grid();
    if v.grid() != grid {
        return Err(Error::domain("u and v live on different grids"));
    }
    if let Some(x) = v.values().iter().position(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::domain(format!("v({x}) = {} outside [0,1]", v.values()[x])));
    }
    let mut eta1 = Vec::with_capacity(grid.sites());
    let mut prev: Option<(f64, f64, f64)> = None;
    for (x, &rho) in u.values().iter().enumerate() {
        table
            .check_density(rho)
            .map_err(|e| Error::domain(format!("u({x}): {e}")))?;
        if rho == 0.0 {
            eta1.push(0);
            continue;
        }
        let (alpha, z) = match prev {
            Some((r, a, z)) if r == rho => (a, z),
            _ => {
                let a = table.solve_fugacity(rho, prev.map(|p| p.1));
                let z = table.moments_unchecked(a).partition;
                prev = Some((rho, a, z));
                (a, z)
            }
        };
        eta1.push(table.draw(alpha, z, rng));
    }
    let eta2 = v
        .values()
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < p))
        .collect();
    ParticleConfig::new(grid, eta1, eta2)
}

/// Cubic Hermite interpolant of the fugacity map on a uniform density grid,
/// with exact knot slopes `φ'(ρ_i)` limited to keep it monotone.
#[derive(Debug, Clone)]
pub struct PhiInterpolant {
    max_density: f64,
    step: f64,
    alpha: Vec<f64>,
    slope: Vec<f64>,
}

impl PhiInterpolant {
    fn build(table: &ThermoTable, intervals: usize) -> Result<Self> {
        let intervals = intervals.max(2);
        let m = table.max_density;
        let step = m / intervals as f64;
        let mut alpha = Vec::with_capacity(intervals + 1);
        let mut slope = Vec::with_capacity(intervals + 1);
        let mut guess = None;
        for i in 0..=intervals {
            let rho = (i as f64 * step).min(m);
            let a = if rho == 0.0 { 0.0 } else { table.solve_fugacity(rho, guess) };
            guess = Some(a);
            alpha.push(a);
            slope.push(table.phi_prime_at(a));
        }
        // Fritsch-Carlson limiter; inactive for smooth increasing φ on a
        // fine grid but guarantees monotonicity regardless.
        for i in 0..intervals {
            let secant = (alpha[i + 1] - alpha[i]) / step;
            if secant <= 0.0 {
                return Err(Error::Solver(format!("fugacity map not increasing near ρ = {}", i as f64 * step)));
            }
            let (a, b) = (slope[i] / secant, slope[i + 1] / secant);
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slope[i] = tau * a * secant;
                slope[i + 1] = tau * b * secant;
            }
        }
        Ok(Self { max_density: m, step, alpha, slope })
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// Largest derivative over the knots.
    pub fn max_slope(&self) -> f64 {
        self.slope.iter().copied().fold(0.0, f64::max)
    }

    #[inline]
    fn hermite(h: f64, t: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> (f64, f64) {
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let deriv = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        (value, deriv)
    }

    /// `(φ(ρ), φ'(ρ))`. Below zero the map is continued linearly; slightly
    /// above `M_u` the last cubic piece is extrapolated.
    #[inline]
    pub fn eval_with_slope(&self, rho: f64) -> (f64, f64) {
        if rho <= 0.0 {
            return (self.slope[0] * rho, self.slope[0]);
        }
        let last = self.alpha.len() - 2;
        let i = ((rho / self.step) as usize).min(last);
        let t = rho / self.step - i as f64;
        Self::hermite(self.step, t, self.alpha[i], self.alpha[i + 1], self.slope[i], self.slope[i + 1])
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        self.eval_with_slope(rho).0
    }

    /// Inverse map `α ↦ ρ` (the mean density) on `[0, φ(M_u)]`, with slope
    /// `dρ/dα`.
    pub fn inverse_with_slope(&self, alpha: f64) -> (f64, f64) {
        if alpha <= 0.0 {
            return (alpha / self.slope[0], 1.0 / self.slope[0]);
        }
        let last = self.alpha.len() - 2;
        let i = (self.alpha.partition_point(|&a| a <= alpha)).saturating_sub(1).min(last);
        let h = self.alpha[i + 1] - self.alpha[i];
        let t = (alpha - self.alpha[i]) / h;
        let y0 = i as f64 * self.step;
        let y1 = (i + 1) as f64 * self.step;
        Self::hermite(h, t, y0, y1, 1.0 / self.slope[i], 1.0 / self.slope[i + 1])
    }

    /// `sup φ'` over a uniform grid of `points` densities in `[0, M_u]`.
    pub fn sup_slope_on_grid(&self, points: usize) -> f64 {
        let points = points.max(2);
        (0..points)
            .map(|i| self.eval_with_slope(self.max_density * i as f64 / (points - 1) as f64).1)
            .fold(0.0, f64::max)
    }
}
