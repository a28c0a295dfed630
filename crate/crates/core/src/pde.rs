//! Semi-discrete reaction-diffusion system on the torus
//!
//! ```text
//! u' = Δᴺ φ(u) - K u v,    v' = ε Δᴺ v - K u v,
//! ```
//!
//! with explicit and semi-implicit time stepping, floored initial data and
//! numerical checks of the a priori bounds (barriers, comparison, reaction
//! integral, energies).

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lattice::{gradient_energy, gradient_max, laplacian_into, write_snapshot, LatticeField, TorusGrid};
use crate::linsolve;
use crate::observables::{periodic_offset, smooth_bump, trapezoid};
use crate::simulator::ScalingSchedule;
use crate::zrmeasure::{PhiInterpolant, ThermoTable};
use crate::{Error, Result};

/// Safety factor of the explicit stability bound.
pub const STABILITY_SAFETY: f64 = 0.2;
/// Grid size used to bound `sup φ'` on `[0, M_u]`.
pub const LIPSCHITZ_GRID: usize = 10_000;
/// Damped Newton iterations before the step is halved.
pub const MAX_NEWTON_ITERATIONS: usize = 50;
/// Step halvings before a Newton failure becomes fatal.
pub const MAX_STEP_HALVINGS: usize = 8;

/// `(u, v)` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: LatticeField,
    pub v: LatticeField,
    pub time: f64,
}

impl FieldPair {
    pub fn new(u: LatticeField, v: LatticeField, time: f64) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::domain("u and v live on different grids"));
        }
        Ok(Self { u, v, time })
    }

    pub fn grid(&self) -> TorusGrid {
        self.u.grid()
    }

    /// `Σ_x (u - v)`, conserved by the dynamics.
    pub fn mass_difference(&self) -> f64 {
        self.u.values().iter().zip(self.v.values()).map(|(a, b)| a - b).sum()
    }

    /// `N^{-d} Σ_x u v`.
    pub fn overlap(&self) -> f64 {
        let s: f64 = self.u.values().iter().zip(self.v.values()).map(|(a, b)| a * b).sum();
        s / self.grid().volume()
    }

    /// Site whose cell `Π_j [x_j/N - 1/(2N), x_j/N + 1/(2N))` contains `θ`.
    pub fn cell_of(grid: TorusGrid, theta: [f64; 2]) -> usize {
        let n = grid.side();
        let idx = |t: f64| -> usize {
            let k = (t * n as f64 + 0.5).floor() as i64;
            k.rem_euclid(n as i64) as usize
        };
        match grid.dim() {
            1 => idx(theta[0]),
            _ => idx(theta[0]) * n + idx(theta[1]),
        }
    }

    /// Piecewise-constant extension `(u(θ), v(θ))` on the continuous torus.
    pub fn eval_step(&self, theta: [f64; 2]) -> (f64, f64) {
        let x = Self::cell_of(self.grid(), theta);
        (self.u.values()[x], self.v.values()[x])
    }
}

/// Spatial profile families for initial data above the density floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProfileFamily {
    /// Smooth compactly supported bumps of the given radius.
    Bump {
        #[serde(default = "default_u_center")]
        u_center: [f64; 2],
        #[serde(default = "default_v_center")]
        v_center: [f64; 2],
        #[serde(default = "default_width")]
        width: f64,
    },
    /// Value one on radius `inner`, smooth transition to zero at `width`.
    Plateau {
        #[serde(default = "default_u_center")]
        u_center: [f64; 2],
        #[serde(default = "default_v_center")]
        v_center: [f64; 2],
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_inner")]
        inner: f64,
    },
    /// `u₀ = ū + a_u cos(2πkθ₁)`, `v₀ = v̄ - a_v cos(2πkθ₁)` (no floor added).
    Cosine { u_mean: f64, u_amplitude: f64, v_mean: f64, v_amplitude: f64, mode: u32 },
    /// Site values given directly (row-major).
    Custom { u: Vec<f64>, v: Vec<f64> },
}

fn default_u_center() -> [f64; 2] {
    [0.25, 0.25]
}
fn default_v_center() -> [f64; 2] {
    [0.75, 0.75]
}
fn default_width() -> f64 {
    0.2
}
fn default_inner() -> f64 {
    0.1
}

impl Default for ProfileFamily {
    fn default() -> Self {
        ProfileFamily::Bump { u_center: default_u_center(), v_center: default_v_center(), width: default_width() }
    }
}

/// Smooth step: 1 on `[0, inner]`, 0 on `[outer, ∞)`.
fn smooth_plateau(r: f64, inner: f64, outer: f64) -> f64 {
    if r <= inner {
        return 1.0;
    }
    if r >= outer {
        return 0.0;
    }
    let s = (r - inner) / (outer - inner);
    let a = (-1.0 / (1.0 - s)).exp();
    let b = (-1.0 / s).exp();
    a / (a + b)
}

fn radius(theta: [f64; 2], center: [f64; 2], dim: usize) -> f64 {
    (0..dim).map(|j| periodic_offset(theta[j], center[j]).powi(2)).sum::<f64>().sqrt()
}

/// Initial data `u₀ = f + (M_u - f) b_L`, `v₀ = f + (M_v - f) b_R` with floor
/// `f = e^{-C₁K}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialProfileSpec {
    #[serde(default)]
    pub profile: ProfileFamily,
    #[serde(default = "one")]
    pub m_u: f64,
    #[serde(default = "one")]
    pub m_v: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn one() -> f64 {
    1.0
}
fn default_c0() -> f64 {
    100.0
}

impl Default for InitialProfileSpec {
    fn default() -> Self {
        Self { profile: ProfileFamily::default(), m_u: 1.0, m_v: 1.0, c1: 1.0, c0: default_c0() }
    }
}

/// Measured derivative sizes of an initial pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientBudget {
    pub grad_u: f64,
    pub hessian_u: f64,
    pub grad_v: f64,
    pub grad_u_bound: f64,
    pub hessian_u_bound: f64,
    pub grad_v_bound: f64,
}

/// `max_{x,i,j} |∂ᴺᵢ∂ᴺⱼ f(x)|` with forward differences.
pub fn hessian_max(grid: TorusGrid, f: &[f64]) -> f64 {
    let n2 = (grid.side() * grid.side()) as f64;
    let mut best: f64 = 0.0;
    for x in 0..grid.sites() {
        for i in 0..grid.dim() {
            for j in 0..grid.dim() {
                let xi = grid.shift(x, i, true);
                let xj = grid.shift(x, j, true);
                let xij = grid.shift(xi, j, true);
                best = best.max((n2 * (f[xij] - f[xi] - f[xj] + f[x])).abs());
            }
        }
    }
    best
}

impl InitialProfileSpec {
    pub fn floor(&self, k: f64) -> f64 {
        (-self.c1 * k).exp()
    }

    /// Builds and validates the data against the floor, the amplitudes and
    /// the gradient budgets `C₀K`, `C₀K³`, `C₀ε^{-1/2}K`.
    pub fn build(&self, grid: TorusGrid, sched: &ScalingSchedule) -> Result<FieldPair> {
        if !(self.m_u > 0.0) || !(0.0..=1.0).contains(&self.m_v) || !(self.c1 > 0.0) || !(self.c0 > 0.0) {
            return Err(Error::config(format!(
                "initial data needs M_u > 0, M_v in [0,1], C1 > 0, C0 > 0 (got {}, {}, {}, {})",
                self.m_u, self.m_v, self.c1, self.c0
            )));
        }
        let floor = self.floor(sched.k);
        let (u, v) = self.profiles(grid, floor)?;
        for (name, f, m) in [("u0", &u, self.m_u), ("v0", &v, self.m_v)] {
            if let Some(x) = f.values().iter().position(|&a| !(a >= floor && a <= m)) {
                return Err(Error::config(format!(
                    "{name}({x}) = {} outside [e^(-C1 K), {m}] = [{floor:e}, {m}]",
                    f.values()[x]
                )));
            }
        }
        let budget = self.gradient_budget(&u, &v, sched);
        if budget.grad_u > budget.grad_u_bound
            || budget.hessian_u > budget.hessian_u_bound
            || budget.grad_v > budget.grad_v_bound
        {
            return Err(Error::config(format!("initial data exceeds its gradient budget: {budget:?}")));
        }
        FieldPair::new(u, v, 0.0)
    }

    /// Site profiles for a given floor; `floor = 0` gives the limiting datum.
    fn profiles(&self, grid: TorusGrid, floor: f64) -> Result<(LatticeField, LatticeField)> {
        let dim = grid.dim();
        Ok(match &self.profile {
            ProfileFamily::Bump { u_center, v_center, width } => {
                let (uc, vc, w) = (*u_center, *v_center, *width);
                if !(w > 0.0 && w <= 0.5) {
                    return Err(Error::config(format!("bump width must lie in (0, 1/2], got {w}")));
                }
                (
                    LatticeField::from_fn(grid, |p| floor + (self.m_u - floor) * smooth_bump(radius(p, uc, dim), w)),
                    LatticeField::from_fn(grid, |p| floor + (self.m_v - floor) * smooth_bump(radius(p, vc, dim), w)),
                )
            }
            ProfileFamily::Plateau { u_center, v_center, width, inner } => {
                let (uc, vc, w, i) = (*u_center, *v_center, *width, *inner);
                if !(i >= 0.0 && i < w && w <= 0.5) {
                    return Err(Error::config(format!("plateau needs 0 <= inner < width <= 1/2, got {i}, {w}")));
                }
                (
                    LatticeField::from_fn(grid, |p| floor + (self.m_u - floor) * smooth_plateau(radius(p, uc, dim), i, w)),
                    LatticeField::from_fn(grid, |p| floor + (self.m_v - floor) * smooth_plateau(radius(p, vc, dim), i, w)),
                )
            }
            ProfileFamily::Cosine { u_mean, u_amplitude, v_mean, v_amplitude, mode } => {
                let k = 2.0 * std::f64::consts::PI * *mode as f64;
                (
                    LatticeField::from_fn(grid, |p| u_mean + u_amplitude * (k * p[0]).cos()),
                    LatticeField::from_fn(grid, |p| v_mean - v_amplitude * (k * p[0]).cos()),
                )
            }
            ProfileFamily::Custom { u, v } => (
                LatticeField::from_values(grid, u.clone())?,
                LatticeField::from_values(grid, v.clone())?,
            ),
        })
    }

    /// `w₀ = u₀ - v₀` of the floor-free profiles, resampled on `grid`.
    pub fn limit_datum(&self, grid: TorusGrid) -> Result<LatticeField> {
        if matches!(self.profile, ProfileFamily::Custom { .. }) {
            return Err(Error::config("site-valued profiles cannot be resampled on another grid"));
        }
        let (u, v) = self.profiles(grid, 0.0)?;
        LatticeField::from_values(grid, u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect())
    }

    pub fn gradient_budget(&self, u: &LatticeField, v: &LatticeField, sched: &ScalingSchedule) -> GradientBudget {
        let grid = u.grid();
        let k = sched.k.max(1.0);
        GradientBudget {
            grad_u: gradient_max(grid, u.values()),
            hessian_u: hessian_max(grid, u.values()),
            grad_v: gradient_max(grid, v.values()),
            grad_u_bound: self.c0 * k,
            hessian_u_bound: self.c0 * k.powi(3),
            grad_v_bound: if sched.epsilon > 0.0 { self.c0 * k / sched.epsilon.sqrt() } else { f64::INFINITY },
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Explicit,
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepper {
    pub scheme: Scheme,
    pub dt: f64,
    /// Newton residual target, relative to `N^{d/2}` (2-norm).
    pub newton_tolerance: f64,
}

impl TimeStepper {
    pub fn explicit(dt: f64) -> Self {
        Self { scheme: Scheme::Explicit, dt, newton_tolerance: 1e-11 }
    }

    pub fn semi_implicit(dt: f64) -> Self {
        Self { scheme: Scheme::SemiImplicit, dt, newton_tolerance: 1e-11 }
    }
}

/// `sup φ'` over an `LIPSCHITZ_GRID`-point uniform grid of `[0, M_u]`.
pub fn phi_lipschitz(table: &ThermoTable) -> Result<f64> {
    let m = table.max_density();
    let mut best: f64 = 0.0;
    for i in 0..=LIPSCHITZ_GRID {
        best = best.max(table.phi_prime(m * i as f64 / LIPSCHITZ_GRID as f64)?);
    }
    Ok(best)
}

/// `θ / (2d N² L_φ + K M_v)` with `θ = 0.2`.
pub fn stable_dt(sched: &ScalingSchedule, table: &ThermoTable, grid: TorusGrid, m_v: f64) -> Result<f64> {
    Ok(stable_dt_with(sched, phi_lipschitz(table)?, grid, m_v))
}

fn stable_dt_with(sched: &ScalingSchedule, l_phi: f64, grid: TorusGrid, m_v: f64) -> f64 {
    let n2 = (grid.side() * grid.side()) as f64;
    STABILITY_SAFETY / (2.0 * grid.dim() as f64 * n2 * l_phi + sched.k * m_v)
}

/// One computed step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub pair: FieldPair,
    /// `h · N^{-d} Σ K u v` evaluated at the start of the step.
    pub reaction: f64,
    pub newton_iterations: usize,
}

/// Recorded solution.
#[derive(Debug, Clone)]
pub struct PdeTrajectory {
    pub snapshots: Vec<FieldPair>,
    /// Running `∫₀ᵗ N^{-d} Σ K u v` at each snapshot, accumulated per step.
    pub reaction: Vec<f64>,
    pub steps: u64,
    pub k: f64,
    pub epsilon: f64,
}

impl PdeTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn grid(&self) -> TorusGrid {
        self.snapshots[0].grid()
    }

    pub fn last(&self) -> &FieldPair {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    /// Frames `[u, v]` in the binary snapshot format, one per time.
    pub fn write_snapshots<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.snapshots {
            write_snapshot(&mut w, &[&s.u, &s.v])?;
        }
        Ok(())
    }
}

/// The semi-discrete system for one schedule and rate.
#[derive(Debug, Clone)]
pub struct PdeSystem {
    grid: TorusGrid,
    sched: ScalingSchedule,
    phi: Arc<PhiInterpolant>,
    l_phi: f64,
    m_u: f64,
    m_v: f64,
}

impl PdeSystem {
    pub fn new(grid: TorusGrid, sched: ScalingSchedule, table: &ThermoTable, m_v: f64) -> Result<Self> {
        let phi = Arc::new(table.default_phi_interpolant()?);
        let l_phi = phi_lipschitz(table)?;
        Self::with_interpolant(grid, sched, phi, l_phi, m_v)
    }

    /// Shares a prebuilt interpolant (and its Lipschitz bound) across systems.
    pub fn with_interpolant(
        grid: TorusGrid,
        sched: ScalingSchedule,
        phi: Arc<PhiInterpolant>,
        l_phi: f64,
        m_v: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&m_v) {
            return Err(Error::config(format!("M_v must lie in [0,1], got {m_v}")));
        }
        let m_u = phi.max_density();
        Ok(Self { grid, sched, phi, l_phi, m_u, m_v })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn schedule(&self) -> &ScalingSchedule {
        &self.sched
    }

    pub fn phi(&self) -> &PhiInterpolant {
        &self.phi
    }

    pub fn lipschitz(&self) -> f64 {
        self.l_phi
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.m_u, self.m_v)
    }

    pub fn stable_dt(&self) -> f64 {
        stable_dt_with(&self.sched, self.l_phi, self.grid, self.m_v)
    }

    fn check_pair(&self, pair: &FieldPair) -> Result<()> {
        if pair.grid() != self.grid {
            return Err(Error::domain("field pair lives on a different grid than the system"));
        }
        Ok(())
    }

    /// `(Δᴺφ(u) - Kuv, εΔᴺv - Kuv)`.
    pub fn rhs(&self, pair: &FieldPair) -> Result<(LatticeField, LatticeField)> {
        self.check_pair(pair)?;
        let m = self.grid.sites();
        let (u, v) = (pair.u.values(), pair.v.values());
        let phi_u: Vec<f64> = u.iter().map(|&a| self.phi.eval(a)).collect();
        let mut du = vec![0.0; m];
        let mut dv = vec![0.0; m];
        laplacian_into(self.grid, &phi_u, &mut du);
        laplacian_into(self.grid, v, &mut dv);
        let k = self.sched.k;
        let eps = self.sched.epsilon;
        for x in 0..m {
            let r = k * u[x] * v[x];
            du[x] -= r;
            dv[x] = eps * dv[x] - r;
        }
        Ok((LatticeField::from_values(self.grid, du)?, LatticeField::from_values(self.grid, dv)?))
    }

    fn invariant_slack(&self, scheme: Scheme, tol: f64) -> f64 {
        match scheme {
            Scheme::Explicit => 64.0 * f64::EPSILON * self.m_u.max(1.0),
            Scheme::SemiImplicit => 10.0 * tol * self.m_u.max(1.0),
        }
    }

    fn check_bounds(&self, pair: &FieldPair, slack: f64) -> Result<()> {
        for (name, f, m) in [("u", &pair.u, self.m_u), ("v", &pair.v, self.m_v)] {
            if let Some(x) = f.values().iter().position(|&a| !(a >= -slack && a <= m + slack)) {
                return Err(Error::Invariant(format!(
                    "{name}({x}) = {:e} left [0, {m}] at t = {} (time step too large for the scheme?)",
                    f.values()[x],
                    pair.time
                )));
            }
        }
        Ok(())
    }

    /// Advances by `h`; the post-state is validated, never clamped.
    pub fn step(&self, pair: &FieldPair, stepper: &TimeStepper, h: f64) -> Result<StepReport> {
        self.check_pair(pair)?;
        let report = match stepper.scheme {
            Scheme::Explicit => self.explicit_step(pair, h)?,
            Scheme::SemiImplicit => self.semi_implicit_step(pair, h, stepper.newton_tolerance)?,
        };
        self.check_bounds(&report.pair, self.invariant_slack(stepper.scheme, stepper.newton_tolerance))?;
        Ok(report)
    }

    fn reaction_sum(&self, u: &[f64], v: &[f64]) -> f64 {
        self.sched.k * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / self.grid.volume()
    }

    fn explicit_step(&self, pair: &FieldPair, h: f64) -> Result<StepReport> {
        let (du, dv) = self.rhs(pair)?;
        let u: Vec<f64> = pair.u.values().iter().zip(du.values()).map(|(a, d)| a + h * d).collect();
        let v: Vec<f64> = pair.v.values().iter().zip(dv.values()).map(|(a, d)| a + h * d).collect();
        Ok(StepReport {
            reaction: h * self.reaction_sum(pair.u.values(), pair.v.values()),
            pair: FieldPair::new(
                LatticeField::from_values(self.grid, u)?,
                LatticeField::from_values(self.grid, v)?,
                pair.time + h,
            )?,
            newton_iterations: 0,
        })
    }

    fn semi_implicit_step(&self, pair: &FieldPair, h: f64, tol: f64) -> Result<StepReport> {
        let (u0, v0) = (pair.u.values(), pair.v.values());
        let k = self.sched.k;
        let react: Vec<f64> = u0.iter().zip(v0).map(|(a, b)| k * a * b).collect();
        let ru: Vec<f64> = u0.iter().zip(&react).map(|(a, r)| a - h * r).collect();
        let rv: Vec<f64> = v0.iter().zip(&react).map(|(a, r)| a - h * r).collect();
        let target = tol * self.grid.volume().sqrt();

        let mut v = rv.clone();
        let eps = self.sched.epsilon;
        if eps > 0.0 {
            linsolve::solve(self.grid, &vec![1.0; rv.len()], h * eps, &rv, &mut v, 0.1 * target)?;
        }
        let (u, iterations) = newton_diffusion(self.grid, h, &ru, u0, target, |s| self.phi.eval_with_slope(s))?;
        Ok(StepReport {
            reaction: h * self.reaction_sum(u0, v0),
            pair: FieldPair::new(
                LatticeField::from_values(self.grid, u)?,
                LatticeField::from_values(self.grid, v)?,
                pair.time + h,
            )?,
            newton_iterations: iterations,
        })
    }

    /// Largest step the scheme accepts: the stable step for the explicit
    /// branch; `dt` capped by `K·max(M_u, M_v)·h ≤ 1/2` for the implicit one.
    pub fn effective_dt(&self, stepper: &TimeStepper) -> Result<f64> {
        if !(stepper.dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {}", stepper.dt)));
        }
        match stepper.scheme {
            Scheme::Explicit => {
                let limit = self.stable_dt();
                if stepper.dt > limit * (1.0 + 1e-12) {
                    return Err(Error::config(format!(
                        "explicit step {} exceeds the stability bound {limit:e}",
                        stepper.dt
                    )));
                }
                Ok(stepper.dt)
            }
            Scheme::SemiImplicit => {
                let react = self.sched.k * self.m_u.max(self.m_v);
                Ok(if react > 0.0 { stepper.dt.min(0.5 / react) } else { stepper.dt })
            }
        }
    }

    /// Integrates to `horizon` recording the initial state and every time in
    /// `snapshot_times` (sorted, within `(0, horizon]`). Newton failures are
    /// retried with halved steps.
    pub fn solve(
        &self,
        initial: FieldPair,
        stepper: &TimeStepper,
        horizon: f64,
        snapshot_times: &[f64],
    ) -> Result<PdeTrajectory> {
        self.check_pair(&initial)?;
        self.check_bounds(&initial, 0.0)?;
        validate_times(snapshot_times, horizon)?;
        let dt = self.effective_dt(stepper)?;
        let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > 0.0).collect();
        if targets.last().is_none_or(|&t| t < horizon) {
            targets.push(horizon);
        }
        let mut state = initial;
        state.time = 0.0;
        let mut snapshots = vec![state.clone()];
        let mut reaction = vec![0.0];
        let mut cumulative = 0.0;
        let mut steps = 0u64;
        for &target in &targets {
            while target - state.time > 1e-13 * target.max(1.0) {
                let h = dt.min(target - state.time);
                let report = self.step_with_retry(&state, stepper, h)?;
                cumulative += report.reaction;
                state = report.pair;
                steps += 1;
            }
            state.time = target;
            snapshots.push(state.clone());
            reaction.push(cumulative);
        }
        Ok(PdeTrajectory { snapshots, reaction, steps, k: self.sched.k, epsilon: self.sched.epsilon })
    }

    fn step_with_retry(&self, state: &FieldPair, stepper: &TimeStepper, h: f64) -> Result<StepReport> {
        match self.step(state, stepper, h) {
            Err(Error::Solver(msg)) if stepper.scheme == Scheme::SemiImplicit => {
                let mut pieces = 2usize;
                for _ in 0..MAX_STEP_HALVINGS {
                    if let Ok(r) = self.substeps(state, stepper, h, pieces) {
                        return Ok(r);
                    }
                    pieces *= 2;
                }
                Err(Error::Solver(format!("{msg}; still failing after {MAX_STEP_HALVINGS} step halvings")))
            }
            other => other,
        }
    }

    fn substeps(&self, state: &FieldPair, stepper: &TimeStepper, h: f64, pieces: usize) -> Result<StepReport> {
        let mut cur = state.clone();
        let mut reaction = 0.0;
        let mut iterations = 0;
        for _ in 0..pieces {
            let r = self.step(&cur, stepper, h / pieces as f64)?;
            reaction += r.reaction;
            iterations += r.newton_iterations;
            cur = r.pair;
        }
        Ok(StepReport { pair: cur, reaction, newton_iterations: iterations })
    }
}

pub(crate) fn validate_times(times: &[f64], horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!("horizon must be positive and finite, got {horizon}")));
    }
    if times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(Error::config("snapshot times must lie in [0, horizon]"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("snapshot times must be strictly increasing"));
    }
    Ok(())
}

/// Solves `u - h Δᴺ D(u) = r` for a non-decreasing `D` by damped Newton.
///
/// `slope_of(s)` returns `(D(s), D'(s))` with `D'(s) > 0`. The Newton system
/// `(I - hΔ S) δ = -F` is symmetrised by `y = Sδ`, giving the SPD system
/// `(S⁻¹ - hΔ) y = -F`.
pub(crate) fn newton_diffusion(
    grid: TorusGrid,
    h: f64,
    r: &[f64],
    guess: &[f64],
    target: f64,
    slope_of: impl Fn(f64) -> (f64, f64),
) -> Result<(Vec<f64>, usize)> {
    let m = r.len();
    let mut u = guess.to_vec();
    let mut d = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut lap = vec![0.0; m];
    let residual = |u: &[f64], d: &mut [f64], s: &mut [f64], lap: &mut [f64]| -> Vec<f64> {
        for i in 0..m {
            let (a, b) = slope_of(u[i]);
            d[i] = a;
            s[i] = b;
        }
        laplacian_into(grid, d, lap);
        (0..m).map(|i| u[i] - h * lap[i] - r[i]).collect()
    };
    let norm = |f: &[f64]| f.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut f = residual(&u, &mut d, &mut s, &mut lap);
    let mut fnorm = norm(&f);
    for it in 0..MAX_NEWTON_ITERATIONS {
        if fnorm <= target {
            return Ok((u, it));
        }
        let inv: Vec<f64> = s.iter().map(|&b| 1.0 / b).collect();
        let rhs: Vec<f64> = f.iter().map(|a| -a).collect();
        let mut y = vec![0.0; m];
        linsolve::solve(grid, &inv, h, &rhs, &mut y, (1e-3 * fnorm).max(0.01 * target))?;
        let delta: Vec<f64> = y.iter().zip(&inv).map(|(a, b)| a * b).collect();
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + lambda * b).collect();
            let ft = residual(&trial, &mut d, &mut s, &mut lap);
            let tn = norm(&ft);
            if tn < fnorm || lambda < 1e-4 {
                u = trial;
                f = ft;
                fnorm = tn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if fnorm <= target {
        return Ok((u, MAX_NEWTON_ITERATIONS));
    }
    Err(Error::Solver(format!(
        "Newton did not converge in {MAX_NEWTON_ITERATIONS} iterations (residual {fnorm:e}, target {target:e})"
    )))
}

/// Spatially homogeneous barriers: the sub-solutions
/// `(e^{-C₁K} e^{-M_v K t}, e^{-C₁K} e^{-M_u K t})` and the constant
/// super-solution `(M_u, M_v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barriers {
    pub c1: f64,
    pub k: f64,
    pub m_u: f64,
    pub m_v: f64,
}

impl Barriers {
    pub fn lower(&self, t: f64) -> (f64, f64) {
        (
            (-(self.c1 * self.k + self.m_v * self.k * t)).exp(),
            (-(self.c1 * self.k + self.m_u * self.k * t)).exp(),
        )
    }

    pub fn upper(&self) -> (f64, f64) {
        (self.m_u, self.m_v)
    }

    /// Uniform-in-time lower envelope `e^{-CK(1+t)}` with `C = C₁ + max(M_u, M_v)`.
    pub fn envelope(&self, t: f64) -> f64 {
        let c = self.c1 + self.m_u.max(self.m_v);
        (-c * self.k * (1.0 + t)).exp()
    }

    fn trajectory(&self, grid: TorusGrid, times: &[f64], mut f: impl FnMut(f64) -> (f64, f64)) -> PdeTrajectory {
        let snapshots = times
            .iter()
            .map(|&t| {
                let (a, b) = f(t);
                FieldPair { u: LatticeField::constant(grid, a), v: LatticeField::constant(grid, b), time: t }
            })
            .collect();
        PdeTrajectory { snapshots, reaction: vec![0.0; times.len()], steps: 0, k: self.k, epsilon: 0.0 }
    }

    pub fn lower_trajectory(&self, grid: TorusGrid, times: &[f64]) -> PdeTrajectory {
        self.trajectory(grid, times, |t| self.lower(t))
    }

    pub fn upper_trajectory(&self, grid: TorusGrid, times: &[f64]) -> PdeTrajectory {
        self.trajectory(grid, times, |_| self.upper())
    }

    /// Sub-solution of the time-discrete scheme on the step grid used by
    /// [`PdeSystem::solve`] with step `dt`: each step of size `h` multiplies
    /// the components by `1 - hKM_v` and `1 - hKM_u`.
    ///
    /// The continuous barrier is not a sub-solution of forward Euler, since
    /// `1 - x < e^{-x}`.
    pub fn discrete_lower_trajectory(&self, grid: TorusGrid, times: &[f64], dt: f64) -> PdeTrajectory {
        let floor = (-self.c1 * self.k).exp();
        let (mut a, mut b) = (floor, floor);
        let mut t = 0.0;
        let mut values = Vec::with_capacity(times.len());
        for &target in times {
            while target - t > 1e-13 * target.max(1.0) {
                let h = dt.min(target - t);
                a *= 1.0 - h * self.k * self.m_v;
                b *= 1.0 - h * self.k * self.m_u;
                t += h;
            }
            t = target.max(t);
            values.push((a, b));
        }
        let mut i = 0;
        self.trajectory(grid, times, |_| {
            i += 1;
            values[i - 1]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonViolation {
    pub time: f64,
    pub site: usize,
    pub component: Component,
    /// `true` when the upper trajectory was crossed.
    pub upper: bool,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub holds: bool,
    /// Largest ordering defect over all snapshots (≤ 0 when strictly ordered).
    pub max_defect: f64,
    pub first_violation: Option<ComparisonViolation>,
}

/// Absolute slack allowed by [`check_comparison`].
pub const COMPARISON_SLACK: f64 = 1e-10;

/// Verifies `sub ≤ sol ≤ sup` in both components at every snapshot.
pub fn check_comparison(sub: &PdeTrajectory, sol: &PdeTrajectory, sup: &PdeTrajectory) -> Result<ComparisonReport> {
    let n = sol.snapshots.len();
    if sub.snapshots.len() != n || sup.snapshots.len() != n || n == 0 {
        return Err(Error::domain("trajectories have different snapshot counts"));
    }
    for i in 0..n {
        let (a, b, c) = (&sub.snapshots[i], &sol.snapshots[i], &sup.snapshots[i]);
        if a.grid() != b.grid() || c.grid() != b.grid() {
            return Err(Error::domain("trajectories live on different grids"));
        }
        if (a.time - b.time).abs() > 1e-12 || (c.time - b.time).abs() > 1e-12 {
            return Err(Error::domain(format!("snapshot {i} times differ")));
        }
    }
    let mut report = ComparisonReport { holds: true, max_defect: f64::NEG_INFINITY, first_violation: None };
    for i in 0..n {
        let (lo, mid, hi) = (&sub.snapshots[i], &sol.snapshots[i], &sup.snapshots[i]);
        for (component, l, m, h) in [
            (Component::U, lo.u.values(), mid.u.values(), hi.u.values()),
            (Component::V, lo.v.values(), mid.v.values(), hi.v.values()),
        ] {
            for x in 0..m.len() {
                for (upper, defect) in [(false, l[x] - m[x]), (true, m[x] - h[x])] {
                    report.max_defect = report.max_defect.max(defect);
                    if defect > COMPARISON_SLACK {
                        if i == 0 {
                            return Err(Error::domain(format!(
                                "initial data not ordered at site {x} ({component:?}, defect {defect:e})"
                            )));
                        }
                        report.holds = false;
                        if report.first_violation.is_none() {
                            report.first_violation =
                                Some(ComparisonViolation { time: mid.time, site: x, component, upper, amount: defect });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Energies, reaction integral and gradient maxima of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `∫ Σ_x |∇ᴺu|² dt` (trapezoid over snapshots).
    pub e_u: f64,
    /// `ε ∫ Σ_x |∇ᴺv|² dt`.
    pub e_v: f64,
    /// `∫ N^{-d} Σ K u v dt` by trapezoid over snapshots.
    pub reaction_integral: f64,
    /// The same integral accumulated step by step during the solve.
    pub reaction_integral_steps: f64,
    pub grad_max_u: f64,
    pub grad_max_v: f64,
    /// `max |Δᴺφ(u)| / K³` over snapshots (`K ≥ 1` assumed in the scaling).
    pub laplacian_phi_ratio: f64,
}

pub fn energy_report(traj: &PdeTrajectory, phi: &PhiInterpolant) -> Result<EnergyReport> {
    if traj.snapshots.len() < 2 {
        return Err(Error::domain("energy report needs at least two snapshots"));
    }
    let grid = traj.grid();
    let times = traj.times();
    let mut eu = Vec::with_capacity(times.len());
    let mut ev = Vec::with_capacity(times.len());
    let mut rr = Vec::with_capacity(times.len());
    let (mut gu, mut gv, mut lap_max) = (0.0f64, 0.0f64, 0.0f64);
    let mut lap = vec![0.0; grid.sites()];
    for s in &traj.snapshots {
        eu.push(gradient_energy(grid, s.u.values()));
        ev.push(traj.epsilon * gradient_energy(grid, s.v.values()));
        rr.push(traj.k * s.overlap());
        gu = gu.max(gradient_max(grid, s.u.values()));
        gv = gv.max(gradient_max(grid, s.v.values()));
        let phi_u: Vec<f64> = s.u.values().iter().map(|&a| phi.eval(a)).collect();
        laplacian_into(grid, &phi_u, &mut lap);
        lap_max = lap.iter().fold(lap_max, |m, a| m.max(a.abs()));
    }
    Ok(EnergyReport {
        e_u: trapezoid(&times, &eu),
        e_v: trapezoid(&times, &ev),
        reaction_integral: trapezoid(&times, &rr),
        reaction_integral_steps: *traj.reaction.last().unwrap_or(&0.0),
        grad_max_u: gu,
        grad_max_v: gv,
        laplacian_phi_ratio: lap_max / traj.k.max(1.0).powi(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zrmeasure::JumpRateSpec;
    use std::f64::consts::PI;

    fn system(d: usize, n: usize, k: f64, eps: f64, spec: JumpRateSpec, m_u: f64) -> PdeSystem {
        let table = ThermoTable::new(spec, m_u).unwrap();
        PdeSystem::new(TorusGrid::new(d, n).unwrap(), ScalingSchedule::explicit(k, eps).unwrap(), &table, 1.0).unwrap()
    }

    #[test]
    fn stable_dt_example() {
        let table = ThermoTable::new(JumpRateSpec::linear(), 1.0).unwrap();
        let sched = ScalingSchedule::explicit(10.0, 0.1).unwrap();
        let g = TorusGrid::new(1, 100).unwrap();
        let dt = stable_dt(&sched, &table, g, 0.5).unwrap();
        assert!((dt - 0.2 / 20005.0).abs() < 1e-15);
        assert!((dt - 9.99750e-6).abs() < 1e-10);
        let g2 = TorusGrid::new(1, 200).unwrap();
        let ratio = stable_dt(&sched, &table, g, 0.0).unwrap() / stable_dt(&sched, &table, g2, 0.0).unwrap();
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn affine_lipschitz_is_slope_at_origin() {
        let table = ThermoTable::new(JumpRateSpec::affine(1.0).unwrap(), 2.0).unwrap();
        let l = phi_lipschitz(&table).unwrap();
        // φ' decreases from g(1) = 2 for the affine rate.
        assert!((l - 2.0).abs() < 1e-12, "{l}");
    }

    #[test]
    fn rhs_examples() {
        let sys = system(1, 16, 3.0, 0.5, JumpRateSpec::affine(1.0).unwrap(), 2.0);
        let g = sys.grid();
        let pair = FieldPair::new(LatticeField::constant(g, 1.5), LatticeField::zeros(g), 0.0).unwrap();
        let (du, dv) = sys.rhs(&pair).unwrap();
        assert!(du.values().iter().all(|&a| a.abs() < 1e-9));
        assert!(dv.values().iter().all(|&a| a == 0.0));
        let pair = FieldPair::new(LatticeField::constant(g, 1.5), LatticeField::constant(g, 0.4), 0.0).unwrap();
        let (du, dv) = sys.rhs(&pair).unwrap();
        for (a, b) in du.values().iter().zip(dv.values()) {
            assert!((a + 3.0 * 1.5 * 0.4).abs() < 1e-9);
            assert!((b + 3.0 * 1.5 * 0.4).abs() < 1e-12);
        }
        let lin = system(1, 16, 3.0, 0.5, JumpRateSpec::linear(), 2.0);
        let u = LatticeField::from_fn(g, |p| smooth_bump(periodic_offset(p[0], 0.5).abs(), 0.2));
        let pair = FieldPair::new(u.clone(), LatticeField::zeros(g), 0.0).unwrap();
        let (du, _) = lin.rhs(&pair).unwrap();
        assert!(du.max_abs_diff(&crate::lattice::discrete_laplacian(&u)) < 1e-8);
    }

    #[test]
    fn heat_eigenmode() {
        let sys = system(1, 64, 0.0, 0.0, JumpRateSpec::linear(), 1.0);
        let g = sys.grid();
        let u0 = LatticeField::from_fn(g, |p| 0.5 + 0.25 * (2.0 * PI * p[0]).cos());
        let init = FieldPair::new(u0, LatticeField::zeros(g), 0.0).unwrap();
        let traj = sys.solve(init, &TimeStepper::explicit(1e-7), 0.01, &[0.01]).unwrap();
        let n = 64.0f64;
        let lambda = 4.0 * n * n * (PI / n).sin().powi(2);
        let exact = LatticeField::from_fn(g, |p| 0.5 + 0.25 * (-lambda * 0.01).exp() * (2.0 * PI * p[0]).cos());
        assert!(traj.last().u.max_abs_diff(&exact) <= 1e-6);
    }

    /// Classical RK4 with a fine step: an independent integrator for the
    /// homogeneous reduction `u' = v' = -Kuv`.
    fn ode_oracle(a: f64, b: f64, k: f64, t: f64) -> (f64, f64) {
        let steps = 200_000;
        let h = t / steps as f64;
        let f = |u: f64, v: f64| -k * u * v;
        let (mut u, mut v) = (a, b);
        for _ in 0..steps {
            let k1 = f(u, v);
            let k2 = f(u + 0.5 * h * k1, v + 0.5 * h * k1);
            let k3 = f(u + 0.5 * h * k2, v + 0.5 * h * k2);
            let k4 = f(u + h * k3, v + h * k3);
            let du = h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            u += du;
            v += du;
        }
        (u, v)
    }

    #[test]
    fn homogeneous_reduction_matches_ode() {
        let (a, b, k) = (0.8, 0.5, 5.0);
        let sys = system(1, 8, k, 0.3, JumpRateSpec::affine(1.0).unwrap(), 1.0);
        let g = sys.grid();
        let init = FieldPair::new(LatticeField::constant(g, a), LatticeField::constant(g, b), 0.0).unwrap();
        // Forward Euler is first order; 1e-8 needs a small step.
        let traj = sys.solve(init, &TimeStepper::explicit(2e-9), 0.1, &[0.1]).unwrap();
        let (ue, ve) = ode_oracle(a, b, k, 0.1);
        let last = traj.last();
        for x in 0..g.sites() {
            assert!((last.u.values()[x] - ue).abs() < 1e-8, "{} vs {ue}", last.u.values()[x]);
            assert!((last.v.values()[x] - ve).abs() < 1e-8);
            assert!((last.u.values()[x] - last.v.values()[x] - (a - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_step_violations_abort() {
        let sys = system(1, 16, 0.0, 0.0, JumpRateSpec::linear(), 1.0);
        let g = sys.grid();
        let u0 = LatticeField::from_fn(g, |p| if p[0] == 0.5 { 1.0 } else { 0.0 });
        let init = FieldPair::new(u0, LatticeField::zeros(g), 0.0).unwrap();
        let huge = TimeStepper::explicit(10.0 * sys.stable_dt());
        assert!(sys.solve(init.clone(), &huge, 0.01, &[]).is_err());
        let err = sys.step(&init, &huge, 10.0 * sys.stable_dt()).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    fn bump_data(sys: &PdeSystem, c1: f64) -> FieldPair {
        let spec = InitialProfileSpec { c1, ..Default::default() };
        spec.build(sys.grid(), sys.schedule()).unwrap()
    }

    #[test]
    fn conservation_and_mass_identity() {
        for scheme in [Scheme::Explicit, Scheme::SemiImplicit] {
            let sys = system(1, 64, 20.0, 0.1, JumpRateSpec::affine(1.0).unwrap(), 1.0);
            let init = bump_data(&sys, 0.5);
            let m0 = init.mass_difference();
            let u0 = init.u.sum();
            let dt = match scheme {
                Scheme::Explicit => sys.stable_dt(),
                Scheme::SemiImplicit => 1e-3,
            };
            let stepper = TimeStepper { scheme, dt, newton_tolerance: 1e-11 };
            let traj = sys.solve(init, &stepper, 0.05, &[0.01, 0.02, 0.03, 0.04, 0.05]).unwrap();
            for s in &traj.snapshots {
                let drift = (s.mass_difference() - m0).abs() / m0.abs().max(1.0);
                assert!(drift < 1e-9, "{scheme:?} drift {drift}");
            }
            let lhs = (traj.last().u.sum() - u0) / sys.grid().volume();
            let rhs = -traj.reaction.last().unwrap();
            assert!((lhs - rhs).abs() < 1e-6, "{scheme:?} {lhs} vs {rhs}");
            let rep = energy_report(&traj, sys.phi()).unwrap();
            assert!(rep.reaction_integral_steps <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn semi_implicit_matches_explicit() {
        let sys = system(2, 16, 10.0, 0.2, JumpRateSpec::affine(1.0).unwrap(), 1.0);
        let init = bump_data(&sys, 0.5);
        let a = sys.solve(init.clone(), &TimeStepper::explicit(sys.stable_dt()), 0.02, &[0.02]).unwrap();
        let b = sys.solve(init, &TimeStepper::semi_implicit(2e-5), 0.02, &[0.02]).unwrap();
        assert!(a.last().u.max_abs_diff(&b.last().u) < 5e-3);
        assert!(a.last().v.max_abs_diff(&b.last().v) < 5e-3);
    }

    #[test]
    fn frozen_v_is_pure_diffusion() {
        let sys = system(1, 32, 7.0, 0.4, JumpRateSpec::affine(1.0).unwrap(), 1.0);
        let g = sys.grid();
        let u0 = LatticeField::from_fn(g, |p| 0.2 + 0.5 * smooth_bump(periodic_offset(p[0], 0.3).abs(), 0.25));
        let init = FieldPair::new(u0, LatticeField::zeros(g), 0.0).unwrap();
        let traj = sys.solve(init, &TimeStepper::explicit(sys.stable_dt()), 0.01, &[0.005, 0.01]).unwrap();
        for s in &traj.snapshots {
            assert!(s.v.values().iter().all(|&a| a == 0.0));
        }
        assert_eq!(*traj.reaction.last().unwrap(), 0.0);
    }

    #[test]
    fn barriers_and_comparison() {
        let sys = system(1, 32, 10.0, 0.1, JumpRateSpec::affine(1.0).unwrap(), 1.0);
        let init = bump_data(&sys, 0.3);
        let times = [0.0, 0.01, 0.02, 0.03];
        let traj = sys.solve(init, &TimeStepper::explicit(sys.stable_dt()), 0.03, &times[1..]).unwrap();
        let b = Barriers { c1: 0.3, k: 10.0, m_u: 1.0, m_v: 1.0 };
        let g = sys.grid();
        let lower = b.discrete_lower_trajectory(g, &times, sys.stable_dt());
        let rep = check_comparison(&lower, &traj, &b.upper_trajectory(g, &times)).unwrap();
        assert!(rep.holds, "{rep:?}");
        for (d, c) in lower.snapshots.iter().zip(&b.lower_trajectory(g, &times).snapshots) {
            assert!(d.u.values()[0] <= c.u.values()[0] && d.u.values()[0] >= b.envelope(d.time));
        }
        let same = check_comparison(&traj, &traj, &traj).unwrap();
        assert!(same.holds && same.max_defect == 0.0);
        for s in &traj.snapshots {
            assert!(s.u.min() >= b.envelope(s.time) && s.v.min() >= b.envelope(s.time));
        }
        // Reversed roles fail the precondition.
        assert!(check_comparison(&b.upper_trajectory(g, &times), &traj, &b.lower_trajectory(g, &times)).is_err());
    }

    #[test]
    fn comparison_reports_first_violation() {
        let g = TorusGrid::new(1, 4).unwrap();
        let mk = |vals: [f64; 2]| PdeTrajectory {
            snapshots: vals
                .iter()
                .enumerate()
                .map(|(i, &a)| FieldPair {
                    u: LatticeField::constant(g, a),
                    v: LatticeField::zeros(g),
                    time: i as f64,
                })
                .collect(),
            reaction: vec![0.0; 2],
            steps: 0,
            k: 0.0,
            epsilon: 0.0,
        };
        let rep = check_comparison(&mk([0.0, 0.5]), &mk([0.5, 0.4]), &mk([1.0, 1.0])).unwrap();
        assert!(!rep.holds);
        let v = rep.first_violation.unwrap();
        assert_eq!((v.site, v.component, v.upper, v.time), (0, Component::U, false, 1.0));
    }

    #[test]
    fn initial_builder_enforces_budgets() {
        let sched = ScalingSchedule::explicit(10.0, 0.01).unwrap();
        let g = TorusGrid::new(1, 128).unwrap();
        let ok = InitialProfileSpec::default().build(g, &sched).unwrap();
        assert!(ok.u.min() >= (-10.0f64).exp() * (1.0 - 1e-15));
        assert!(ok.overlap() < 2.0 * (-10.0f64).exp());
        let tight = InitialProfileSpec { c0: 0.01, ..Default::default() };
        assert!(tight.build(g, &sched).is_err());
        let plateau = InitialProfileSpec {
            profile: ProfileFamily::Plateau { u_center: [0.25; 2], v_center: [0.75; 2], width: 0.2, inner: 0.1 },
            ..Default::default()
        };
        let p = plateau.build(g, &sched).unwrap();
        assert_eq!(p.u.max(), 1.0);
        let custom = InitialProfileSpec {
            profile: ProfileFamily::Custom { u: vec![2.0; 128], v: vec![0.5; 128] },
            ..Default::default()
        };
        assert!(custom.build(g, &sched).is_err());
    }

    #[test]
    fn step_function_extension() {
        let g = TorusGrid::new(1, 4).unwrap();
        assert_eq!(FieldPair::cell_of(g, [0.0, 0.0]), 0);
        assert_eq!(FieldPair::cell_of(g, [0.124, 0.0]), 0);
        assert_eq!(FieldPair::cell_of(g, [0.125, 0.0]), 1);
        assert_eq!(FieldPair::cell_of(g, [0.9, 0.0]), 0);
        let g2 = TorusGrid::new(2, 4).unwrap();
        assert_eq!(FieldPair::cell_of(g2, [0.25, 0.5]), 4 + 2);
    }

    #[test]
    fn constant_trajectory_energies_vanish() {
        let sys = system(1, 16, 5.0, 0.1, JumpRateSpec::linear(), 1.0);
        let g = sys.grid();
        let init = FieldPair::new(LatticeField::constant(g, 0.7), LatticeField::zeros(g), 0.0).unwrap();
        let traj = sys.solve(init, &TimeStepper::explicit(sys.stable_dt()), 0.001, &[]).unwrap();
        let rep = energy_report(&traj, sys.phi()).unwrap();
        assert_eq!((rep.e_u, rep.e_v, rep.reaction_integral), (0.0, 0.0, 0.0));
    }
}
