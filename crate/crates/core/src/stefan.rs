//! One-phase Stefan problem `∂t w = Δ D_φ(w)`, `D_φ(s) = φ(s) 1{s ≥ 0}`,
//! solved by backward Euler with damped Newton, plus the weak-form residual
//! and segregation diagnostics.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lattice::{discrete_gradient, LatticeField, TorusGrid};
use crate::observables::{trapezoid, TestFunction};
use crate::pde::{newton_diffusion, validate_times, MAX_STEP_HALVINGS};
use crate::zrmeasure::{PhiInterpolant, ThermoTable};
use crate::{Error, Result};

/// Newton slope on the degenerate set `{w ≤ 0}`.
pub const DELTA_REG: f64 = 1e-8;
/// Threshold defining the negative phase `{w < -τ}` for drift reports.
pub const NEGATIVE_THRESHOLD: f64 = 1e-6;
/// Support threshold of the segregation gap.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

/// `D_φ(s)` with the exact fugacity map; domain error for `s > M_u`.
pub fn d_phi(table: &ThermoTable, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Ok(0.0);
    }
    table.fugacity_of_density(s)
}

/// Signed field `w = u - v` with `u = w₊`, `v = w₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedField {
    w: LatticeField,
}

impl SignedField {
    pub fn new(w: LatticeField) -> Self {
        Self { w }
    }

    /// `u - v`; both must be non-negative.
    pub fn from_pair(u: &LatticeField, v: &LatticeField) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::domain("u and v live on different grids"));
        }
        let values = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
        Ok(Self { w: LatticeField::from_values(u.grid(), values)? })
    }

    pub fn w(&self) -> &LatticeField {
        &self.w
    }

    pub fn positive_part(&self) -> LatticeField {
        self.w.map(|s| s.max(0.0))
    }

    pub fn negative_part(&self) -> LatticeField {
        self.w.map(|s| (-s).max(0.0))
    }
}

/// `D_φ` backed by the monotone interpolant of `φ`.
#[derive(Debug, Clone)]
pub struct DPhi {
    phi: Arc<PhiInterpolant>,
    delta_reg: f64,
}

impl DPhi {
    pub fn new(phi: Arc<PhiInterpolant>) -> Self {
        Self { phi, delta_reg: DELTA_REG }
    }

    pub fn with_regularization(phi: Arc<PhiInterpolant>, delta_reg: f64) -> Self {
        Self { phi, delta_reg }
    }

    pub fn max_density(&self) -> f64 {
        self.phi.max_density()
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.phi.eval(s)
        }
    }

    /// `(D_φ(s), max(φ'(s), δ_reg))` for `s > 0`, `(0, δ_reg)` otherwise.
    #[inline]
    pub fn eval_with_slope(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            (0.0, self.delta_reg)
        } else {
            let (a, b) = self.phi.eval_with_slope(s);
            (a, b.max(self.delta_reg))
        }
    }
}

/// Recorded Stefan solution.
#[derive(Debug, Clone)]
pub struct StefanTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<LatticeField>,
    pub steps: u64,
    pub max_newton_iterations: usize,
    /// Largest `|Σ w(t) - Σ w₀|` over recorded states.
    pub mass_drift: f64,
}

impl StefanTrajectory {
    pub fn grid(&self) -> TorusGrid {
        self.states[0].grid()
    }

    pub fn last(&self) -> &LatticeField {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one state")
    }

    /// `max |w(t,x) - w₀(x)|` over sites whose closed neighbourhood lies in
    /// `{w(t) < -τ}` at the final time.
    pub fn frozen_drift(&self) -> f64 {
        let grid = self.grid();
        let (w0, wt) = (self.states[0].values(), self.last().values());
        (0..grid.sites())
            .filter(|&x| {
                wt[x] < -NEGATIVE_THRESHOLD
                    && grid.neighbors_unchecked(x).iter().all(|&y| wt[y] < -NEGATIVE_THRESHOLD)
            })
            .map(|x| (wt[x] - w0[x]).abs())
            .fold(0.0, f64::max)
    }

    /// CSV `time,interface_index,position` of sign changes (d = 1 only).
    pub fn write_interfaces<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,interface,position")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for (i, p) in interfaces(s)?.iter().enumerate() {
                writeln!(w, "{t:e},{i},{p:e}")?;
            }
        }
        Ok(())
    }
}

/// Zero crossings of the linear interpolation of `w` in macroscopic units.
pub fn interfaces(w: &LatticeField) -> Result<Vec<f64>> {
    let grid = w.grid();
    if grid.dim() != 1 {
        return Err(Error::domain("interface locator is defined for d = 1 only"));
    }
    let n = grid.side();
    let v = w.values();
    let mut out = Vec::new();
    for x in 0..n {
        let y = (x + 1) % n;
        if (v[x] > 0.0) != (v[y] > 0.0) {
            let frac = v[x] / (v[x] - v[y]);
            out.push(((x as f64 + frac) / n as f64).rem_euclid(1.0));
        }
    }
    Ok(out)
}

/// Backward-Euler solver.
#[derive(Debug, Clone)]
pub struct StefanSolver {
    grid: TorusGrid,
    d: DPhi,
    dt: f64,
    /// Newton target on the residual 2-norm, relative to `N^{d/2}`.
    pub newton_tolerance: f64,
}

impl StefanSolver {
    pub fn new(grid: TorusGrid, phi: Arc<PhiInterpolant>, dt: f64) -> Result<Self> {
        Self::with_d_phi(grid, DPhi::new(phi), dt)
    }

    pub fn with_d_phi(grid: TorusGrid, d: DPhi, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("Stefan time step must be positive, got {dt}")));
        }
        Ok(Self { grid, d, dt, newton_tolerance: 1e-13 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn d_phi(&self) -> &DPhi {
        &self.d
    }

    fn check_range(&self, w: &LatticeField, t: f64) -> Result<()> {
        let m = self.d.max_density();
        if let Some(x) = w.values().iter().position(|&s| !(s <= m * (1.0 + 1e-9)) || !s.is_finite()) {
            return Err(Error::domain(format!(
                "w({x}) = {} above the working bound M_u = {m} at t = {t}",
                w.values()[x]
            )));
        }
        Ok(())
    }

    /// One step of size `h`: solves `w - h Δ D_φ(w) = w_prev`.
    pub fn step(&self, w_prev: &LatticeField, h: f64) -> Result<(LatticeField, usize)> {
        let target = self.newton_tolerance * self.grid.volume().sqrt();
        let (w, it) = newton_diffusion(self.grid, h, w_prev.values(), w_prev.values(), target, |s| {
            self.d.eval_with_slope(s)
        })?;
        Ok((LatticeField::from_values(self.grid, w)?, it))
    }

    fn step_with_retry(&self, w_prev: &LatticeField, h: f64) -> Result<(LatticeField, usize)> {
        match self.step(w_prev, h) {
            Err(Error::Solver(msg)) => {
                let mut pieces = 2usize;
                for _ in 0..MAX_STEP_HALVINGS {
                    let mut cur = w_prev.clone();
                    let mut ok = true;
                    let mut iters = 0;
                    for _ in 0..pieces {
                        match self.step(&cur, h / pieces as f64) {
                            Ok((w, it)) => {
                                cur = w;
                                iters = iters.max(it);
                            }
                            Err(_) => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        return Ok((cur, iters));
                    }
                    pieces *= 2;
                }
                Err(Error::Solver(format!("{msg}; still failing after {MAX_STEP_HALVINGS} step halvings")))
            }
            other => other,
        }
    }

    /// Integrates to `horizon`. With `record_all` every step is stored
    /// (needed by the weak-form residual); otherwise only the initial state
    /// and `snapshot_times` (plus the horizon).
    pub fn solve(
        &self,
        w0: &SignedField,
        horizon: f64,
        snapshot_times: &[f64],
        record_all: bool,
    ) -> Result<StefanTrajectory> {
        let w0 = w0.w().clone();
        if w0.grid() != self.grid {
            return Err(Error::domain("initial datum lives on a different grid"));
        }
        self.check_range(&w0, 0.0)?;
        validate_times(snapshot_times, horizon)?;
        let mass0 = w0.sum();
        let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > 0.0).collect();
        if targets.last().is_none_or(|&t| t < horizon) {
            targets.push(horizon);
        }
        let mut traj = StefanTrajectory {
            times: vec![0.0],
            states: vec![w0.clone()],
            steps: 0,
            max_newton_iterations: 0,
            mass_drift: 0.0,
        };
        let mut t = 0.0;
        let mut w = w0;
        for &target in &targets {
            while target - t > 1e-13 * target.max(1.0) {
                let h = self.dt.min(target - t);
                let (next, it) = self.step_with_retry(&w, h)?;
                self.check_range(&next, t + h)?;
                w = next;
                t += h;
                traj.steps += 1;
                traj.max_newton_iterations = traj.max_newton_iterations.max(it);
                traj.mass_drift = traj.mass_drift.max((w.sum() - mass0).abs());
                if record_all && target - t > 1e-13 * target.max(1.0) {
                    traj.times.push(t);
                    traj.states.push(w.clone());
                }
            }
            t = target;
            traj.times.push(t);
            traj.states.push(w.clone());
        }
        Ok(traj)
    }
}

/// Time envelope of a separable test function `ψ(t,θ) = E(t) S(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeEnvelope {
    /// `(1 - t/T)^p`, `p ≥ 1`.
    Vanishing { power: u32 },
    /// `E ≡ 1`; inadmissible since `ψ(T,·) ≠ 0`.
    Constant,
}

impl TimeEnvelope {
    pub fn value(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            TimeEnvelope::Vanishing { power } => (1.0 - t / horizon).powi(power as i32),
            TimeEnvelope::Constant => 1.0,
        }
    }

    pub fn derivative(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            TimeEnvelope::Vanishing { power } => {
                -(power as f64) / horizon * (1.0 - t / horizon).powi(power as i32 - 1)
            }
            TimeEnvelope::Constant => 0.0,
        }
    }
}

/// Which time-derivative term enters the residual: the full signed field
/// (the identity satisfied by the limit of `u - v`) or its positive part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakFormVariant {
    Full,
    PositivePart,
}

/// Space-time test function `E(t) S(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeTest {
    pub envelope: TimeEnvelope,
    pub space: TestFunction,
}

impl SpaceTimeTest {
    pub fn quadratic(space: TestFunction) -> Self {
        Self { envelope: TimeEnvelope::Vanishing { power: 2 }, space }
    }

    /// The default eight-member catalog.
    pub fn catalog(dim: usize) -> Vec<Self> {
        TestFunction::weak_form_catalog(dim).into_iter().map(Self::quadratic).take(8).collect()
    }
}

/// `|N^{-d}Σ w₀ψ(0) + ∫ N^{-d}Σ (w̃ ∂tψ - ∇ᴺD_φ(w)·∇ᴺψ) dt|` with `w̃ = w` or
/// `w₊`, trapezoidal in time over all recorded states.
pub fn weak_form_residual(
    traj: &StefanTrajectory,
    d: &DPhi,
    test: &SpaceTimeTest,
    variant: WeakFormVariant,
) -> Result<f64> {
    let horizon = traj.horizon();
    if test.envelope.value(horizon, horizon).abs() > 1e-14 {
        return Err(Error::domain("test function does not vanish at the terminal time"));
    }
    let grid = traj.grid();
    let vol = grid.volume();
    let s = test.space.sample(grid);
    let grad_s = discrete_gradient(&s);
    let w0 = &traj.states[0];
    let initial: f64 =
        test.envelope.value(0.0, horizon) * w0.values().iter().zip(s.values()).map(|(a, b)| a * b).sum::<f64>() / vol;
    let integrand: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, w)| {
            let pair: f64 = match variant {
                WeakFormVariant::Full => w.values().iter().zip(s.values()).map(|(a, b)| a * b).sum(),
                WeakFormVariant::PositivePart => w.values().iter().zip(s.values()).map(|(a, b)| a.max(0.0) * b).sum(),
            };
            let dw = w.map(|a| d.eval(a));
            let grad_d = discrete_gradient(&dw);
            let flux: f64 = grad_d
                .iter()
                .zip(&grad_s)
                .map(|(a, b)| a.values().iter().zip(b.values()).map(|(p, q)| p * q).sum::<f64>())
                .sum();
            (test.envelope.derivative(t, horizon) * pair - test.envelope.value(t, horizon) * flux) / vol
        })
        .collect();
    Ok((initial + trapezoid(&traj.times, &integrand)).abs())
}

/// Overlap and support-gap diagnostics of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegregationReport {
    /// `N^{-d} Σ u v`.
    pub overlap: f64,
    /// Minimal torus distance between `{u > τ}` and `{v > τ}`; `None` when
    /// either set is empty.
    pub support_gap: Option<f64>,
}

pub fn segregation_report(u: &LatticeField, v: &LatticeField) -> Result<SegregationReport> {
    let grid = u.grid();
    if v.grid() != grid {
        return Err(Error::domain("u and v live on different grids"));
    }
    let overlap = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>() / grid.volume();
    let a: Vec<usize> = (0..grid.sites()).filter(|&x| u.values()[x] > SUPPORT_THRESHOLD).collect();
    let b: Vec<usize> = (0..grid.sites()).filter(|&x| v.values()[x] > SUPPORT_THRESHOLD).collect();
    let support_gap = if a.is_empty() || b.is_empty() {
        None
    } else {
        let mut best = f64::INFINITY;
        'outer: for &x in &a {
            for &y in &b {
                best = best.min(grid.torus_distance(x, y));
                if best == 0.0 {
                    break 'outer;
                }
            }
        }
        Some(best)
    };
    Ok(SegregationReport { overlap, support_gap })
}

/// Values on the half-cell grid of side `2·side` (per axis) for a field on
/// a grid of side `side / r`, using the centred-cell step extension.
pub fn to_half_cells(f: &LatticeField, side: usize) -> Result<Vec<f64>> {
    let grid = f.grid();
    let n = grid.side();
    if !side.is_multiple_of(n) {
        return Err(Error::domain(format!("grid side {n} does not divide {side}")));
    }
    let r = side / n;
    let h = 2 * side;
    let cell = |k: usize| ((k + r) / (2 * r)) % n;
    Ok(match grid.dim() {
        1 => (0..h).map(|k| f.values()[cell(k)]).collect(),
        _ => (0..h * h).map(|k| f.values()[cell(k / h) * n + cell(k % h)]).collect(),
    })
}

/// Space-time `L²(Q_T)` distance between two step-function trajectories
/// sampled at common times, over the common half-cell refinement.
pub fn l2_space_time(a: &[LatticeField], b: &[LatticeField], times: &[f64]) -> Result<f64> {
    if a.len() != times.len() || b.len() != times.len() || times.is_empty() {
        return Err(Error::domain("trajectories and times differ in length"));
    }
    let (na, nb) = (a[0].grid().side(), b[0].grid().side());
    let side = na.max(nb);
    if a[0].grid().dim() != b[0].grid().dim() {
        return Err(Error::domain("trajectories differ in dimension"));
    }
    let cells = (2.0 * side as f64).powi(a[0].grid().dim() as i32);
    let mut sq = Vec::with_capacity(times.len());
    for (fa, fb) in a.iter().zip(b) {
        let (ha, hb) = (to_half_cells(fa, side)?, to_half_cells(fb, side)?);
        sq.push(ha.iter().zip(&hb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / cells);
    }
    Ok(trapezoid(times, &sq).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zrmeasure::JumpRateSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn phi(spec: JumpRateSpec, m: f64) -> Arc<PhiInterpolant> {
        Arc::new(ThermoTable::new(spec, m).unwrap().default_phi_interpolant().unwrap())
    }

    #[test]
    fn d_phi_examples() {
        let lin = ThermoTable::new(JumpRateSpec::linear(), 3.0).unwrap();
        assert_eq!(d_phi(&lin, -1.0).unwrap(), 0.0);
        assert_eq!(d_phi(&lin, 0.0).unwrap(), 0.0);
        assert!((d_phi(&lin, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(d_phi(&lin, 4.0).is_err());
    }

    #[test]
    fn nonnegative_data_is_heat_equation() {
        let g = TorusGrid::new(1, 64).unwrap();
        let solver = StefanSolver::new(g, phi(JumpRateSpec::linear(), 1.0), 1e-6).unwrap();
        let w0 = LatticeField::from_fn(g, |p| 0.5 + 0.25 * (2.0 * PI * p[0]).cos());
        let traj = solver.solve(&SignedField::new(w0), 0.01, &[], false).unwrap();
        let n = 64.0f64;
        let lambda = 4.0 * n * n * (PI / n).sin().powi(2);
        let exact = LatticeField::from_fn(g, |p| 0.5 + 0.25 * (-lambda * 0.01).exp() * (2.0 * PI * p[0]).cos());
        // Backward Euler, first order: error ≈ dt λ² t a e^{-λt} / 2.
        assert!(traj.last().max_abs_diff(&exact) < 2e-5);
    }

    #[test]
    fn nonpositive_data_is_frozen() {
        let g = TorusGrid::new(2, 8).unwrap();
        let solver = StefanSolver::new(g, phi(JumpRateSpec::affine(1.0).unwrap(), 1.0), 1e-3).unwrap();
        let w0 = LatticeField::from_fn(g, |p| -0.3 - 0.2 * (2.0 * PI * p[1]).sin().powi(2));
        let traj = solver.solve(&SignedField::new(w0.clone()), 0.05, &[0.02], true).unwrap();
        for s in &traj.states {
            assert_eq!(s, &w0);
        }
    }

    fn two_phase(g: TorusGrid) -> LatticeField {
        LatticeField::from_fn(g, |p| if p[0] < 0.5 { 0.8 } else { -0.4 })
    }

    #[test]
    fn interface_advances_and_mass_is_conserved() {
        let g = TorusGrid::new(1, 128).unwrap();
        let solver = StefanSolver::new(g, phi(JumpRateSpec::affine(1.0).unwrap(), 1.0), 1e-4).unwrap();
        let w0 = SignedField::new(two_phase(g));
        let traj = solver.solve(&w0, 0.02, &[0.01], false).unwrap();
        assert!(traj.mass_drift < 1e-9, "{}", traj.mass_drift);
        let before = interfaces(&traj.states[0]).unwrap();
        let after = interfaces(traj.last()).unwrap();
        assert_eq!(before.len(), 2);
        assert_eq!(after.len(), 2);
        // Positive phase [0, 1/2) grows on both sides.
        let width = |v: &[f64]| (v[1] - v[0]).rem_euclid(1.0);
        assert!(width(&after) < width(&before) || after[0] < before[0]);
        let last = SignedField::new(traj.last().clone());
        let (u0, v0) = (w0.positive_part().sum(), w0.negative_part().sum());
        let (u1, v1) = (last.positive_part().sum(), last.negative_part().sum());
        assert!(u1 < u0 && v1 < v0);
        assert!(((u0 - u1) - (v0 - v1)).abs() < 1e-8);
        assert!(traj.frozen_drift() < 1e-9);
    }

    #[test]
    fn refined_solutions_converge() {
        let m = phi(JumpRateSpec::affine(1.0).unwrap(), 1.0);
        let run = |n: usize, dt: f64| {
            let g = TorusGrid::new(1, n).unwrap();
            let w0 = LatticeField::from_fn(g, |p| 0.8 * (2.0 * PI * p[0]).cos() - 0.1);
            let s = StefanSolver::new(g, m.clone(), dt).unwrap();
            s.solve(&SignedField::new(w0), 0.01, &[0.005], false).unwrap()
        };
        let reference = run(1024, 1e-4 / 16.0);
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let t = run(n, 1e-4);
            errs.push(l2_space_time(&t.states, &reference.states, &t.times).unwrap());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn residual_examples() {
        let g = TorusGrid::new(1, 32).unwrap();
        let m = phi(JumpRateSpec::affine(1.0).unwrap(), 1.0);
        let solver = StefanSolver::new(g, m.clone(), 1e-3).unwrap();
        let d = DPhi::new(m);
        let w0 = LatticeField::from_fn(g, |p| -0.2 - 0.1 * (2.0 * PI * p[0]).cos());
        let traj = solver.solve(&SignedField::new(w0.clone()), 0.02, &[], true).unwrap();
        let zero = SpaceTimeTest::quadratic(TestFunction::Constant { value: 0.0 });
        assert_eq!(weak_form_residual(&traj, &d, &zero, WeakFormVariant::PositivePart).unwrap(), 0.0);
        for test in SpaceTimeTest::catalog(1) {
            let psi0 = test.space.sample(g);
            let pairing: f64 = w0.values().iter().zip(psi0.values()).map(|(a, b)| a * b).sum::<f64>() / 32.0;
            let pos = weak_form_residual(&traj, &d, &test, WeakFormVariant::PositivePart).unwrap();
            assert!((pos - pairing.abs()).abs() < 1e-14, "{pos} vs {pairing}");
            let full = weak_form_residual(&traj, &d, &test, WeakFormVariant::Full).unwrap();
            assert!(full < 1e-14, "{full}");
        }
        let bad = SpaceTimeTest { envelope: TimeEnvelope::Constant, space: TestFunction::Constant { value: 1.0 } };
        assert!(weak_form_residual(&traj, &d, &bad, WeakFormVariant::Full).is_err());
    }

    #[test]
    fn segregation_examples() {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = LatticeField::from_fn(g, |p| if p[0] < 0.25 { 1.0 } else { 0.0 });
        let v = LatticeField::from_fn(g, |p| if p[0] >= 0.5 && p[0] < 0.75 { 1.0 } else { 0.0 });
        let r = segregation_report(&u, &v).unwrap();
        assert_eq!(r.overlap, 0.0);
        assert!((r.support_gap.unwrap() - 5.0 / 16.0).abs() < 1e-12);
        let one = LatticeField::constant(g, 1.0);
        let r = segregation_report(&one, &one).unwrap();
        assert_eq!((r.overlap, r.support_gap), (1.0, Some(0.0)));
        assert_eq!(segregation_report(&one, &LatticeField::zeros(g)).unwrap().support_gap, None);
    }

    #[test]
    fn half_cell_refinement() {
        let g = TorusGrid::new(1, 4).unwrap();
        let f = LatticeField::from_values(g, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(to_half_cells(&f, 4).unwrap(), vec![0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 0.0]);
        let h = to_half_cells(&f, 8).unwrap();
        assert_eq!(&h[..6], &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(h[15], 0.0);
        let same = l2_space_time(&[f.clone(), f.clone()], &[f.clone(), f], &[0.0, 1.0]).unwrap();
        assert_eq!(same, 0.0);
    }

    proptest! {
        #[test]
        fn d_phi_is_monotone(a in -2.0f64..1.0, b in -2.0f64..1.0) {
            let d = DPhi::new(phi(JumpRateSpec::affine(1.0).unwrap(), 1.0));
            prop_assert!((a - b) * (d.eval(a) - d.eval(b)) >= 0.0);
        }
    }

    #[test]
    fn ordered_data_stay_ordered() {
        let g = TorusGrid::new(1, 64).unwrap();
        let solver = StefanSolver::new(g, phi(JumpRateSpec::affine(1.0).unwrap(), 1.0), 5e-4).unwrap();
        let lo = LatticeField::from_fn(g, |p| 0.7 * (2.0 * PI * p[0]).cos() - 0.2);
        let hi = lo.map(|a| (a + 0.1).min(1.0));
        let a = solver.solve(&SignedField::new(lo), 0.02, &[0.01], false).unwrap();
        let b = solver.solve(&SignedField::new(hi), 0.02, &[0.01], false).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(x.values().iter().zip(y.values()).all(|(p, q)| p <= &(q + 1e-10)));
        }
    }
}
