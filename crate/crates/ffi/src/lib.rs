//! C ABI over the thermodynamic tables, the particle simulator and both
//! deterministic solvers.
//!
//! Every entry point returns a [`ZrsStatus`]. On failure the message is kept
//! in a thread-local slot readable through [`zrs_last_error_message`].
//! Handles are opaque, created by `*_new` and released by `*_free`; passing
//! a null handle yields [`ZrsStatus::NullPointer`]. Panics never cross the
//! boundary and surface as [`ZrsStatus::Panic`].

// Entry points are called from C, where `unsafe` carries no meaning; the
// pointer contract (non-null is checked, lengths are trusted) is documented
// per function instead.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use zr_stefan::harness::config::load_plan;
use zr_stefan::harness::execute;
use zr_stefan::pde::{FieldPair, PdeSystem, TimeStepper};
use zr_stefan::rng::replica_stream;
use zr_stefan::simulator::{ScalingSchedule, Simulator};
use zr_stefan::stefan::{SignedField, StefanSolver};
use zr_stefan::zrmeasure::{sample_product_config, PhiInterpolant};
use zr_stefan::{Error, JumpRateSpec, LatticeField, ThermoTable, TorusGrid};

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZrsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Argument outside the mathematical domain (bad density, site, size).
    Domain = 2,
    /// Invalid configuration or parameters.
    InvalidConfig = 3,
    /// Event budget exhausted before the horizon.
    BudgetExceeded = 4,
    /// Newton or linear solver failure.
    Solver = 5,
    /// A maintained invariant (bounds, conservation) was violated.
    Invariant = 6,
    /// File system or serialization failure.
    Io = 7,
    Panic = 8,
}

/// Jump-rate family selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZrsRate {
    /// `g(k) = k`.
    Linear = 0,
    /// `g(k) = k + a 1{k >= 1}`.
    Affine = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> ZrsStatus {
    match e {
        Error::Index { .. } | Error::Domain(_) => ZrsStatus::Domain,
        Error::Config(_) | Error::Toml(_) => ZrsStatus::InvalidConfig,
        Error::BudgetExceeded { .. } => ZrsStatus::BudgetExceeded,
        Error::Solver(_) => ZrsStatus::Solver,
        Error::Invariant(_) => ZrsStatus::Invariant,
        Error::Format(_) | Error::Io(_) | Error::Json(_) => ZrsStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ZrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ZrsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ZrsStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ZrsStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or valid
    // caller-owned storage; null is rejected here.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn non_null_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: as in `non_null`; the caller guarantees exclusive access.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn rate_spec(rate: ZrsRate, a: f64) -> Result<JumpRateSpec, Error> {
    match rate {
        ZrsRate::Linear => Ok(JumpRateSpec::linear()),
        ZrsRate::Affine => JumpRateSpec::affine(a),
    }
}

fn field(grid: TorusGrid, values: &[f64]) -> Result<LatticeField, Error> {
    LatticeField::from_values(grid, values.to_vec())
}

fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    *non_null_mut(out, "out")? = Box::into_raw(Box::new(value));
    Ok(())
}

fn free<T>(h: *mut T) {
    if !h.is_null() {
        // SAFETY: `h` came from `Box::into_raw` in a `*_new` function and is
        // released exactly once by the caller.
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len - 1` bytes) and returns the full message
/// length in bytes. `buf` may be null to query the length.
#[no_mangle]
pub extern "C" fn zrs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: the caller provides `len` writable bytes at `buf`.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn zrs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Thermodynamic table of one jump rate up to density `max_density`.
pub struct ZrsThermo {
    table: ThermoTable,
}

#[no_mangle]
pub extern "C" fn zrs_thermo_new(rate: ZrsRate, a: f64, max_density: f64, out: *mut *mut ZrsThermo) -> ZrsStatus {
    guard(|| boxed(out, ZrsThermo { table: ThermoTable::new(rate_spec(rate, a)?, max_density)? }))
}

#[no_mangle]
pub extern "C" fn zrs_thermo_free(h: *mut ZrsThermo) {
    free(h)
}

/// Fugacity `φ(ρ)`.
#[no_mangle]
pub extern "C" fn zrs_thermo_phi(h: *const ZrsThermo, rho: f64, out: *mut f64) -> ZrsStatus {
    guard(|| {
        let t = non_null(h, "thermo")?;
        *non_null_mut(out, "out")? = t.table.fugacity_of_density(rho)?;
        Ok(())
    })
}

/// Mean density `ρ(α)`.
#[no_mangle]
pub extern "C" fn zrs_thermo_density(h: *const ZrsThermo, alpha: f64, out: *mut f64) -> ZrsStatus {
    guard(|| {
        let t = non_null(h, "thermo")?;
        *non_null_mut(out, "out")? = t.table.mean_density(alpha)?;
        Ok(())
    })
}

/// Partition function `Z_α`.
#[no_mangle]
pub extern "C" fn zrs_thermo_partition(h: *const ZrsThermo, alpha: f64, out: *mut f64) -> ZrsStatus {
    guard(|| {
        let t = non_null(h, "thermo")?;
        *non_null_mut(out, "out")? = t.table.partition_function(alpha)?;
        Ok(())
    })
}

/// Model parameters shared by the simulator and PDE constructors.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ZrsModel {
    pub dim: usize,
    pub side: usize,
    pub k: f64,
    pub epsilon: f64,
    pub rate: ZrsRate,
    /// Offset of the affine rate; ignored for the linear one.
    pub a: f64,
}

impl ZrsModel {
    fn resolve(&self) -> Result<(TorusGrid, ScalingSchedule, JumpRateSpec), Error> {
        Ok((
            TorusGrid::new(self.dim, self.side)?,
            ScalingSchedule::explicit(self.k, self.epsilon)?,
            rate_spec(self.rate, self.a)?,
        ))
    }
}

/// Particle system started from the product measure with profiles `(u, v)`.
pub struct ZrsSimulator {
    sim: Simulator,
}

/// `u` and `v` hold `side^dim` site densities each.
#[no_mangle]
pub extern "C" fn zrs_simulator_new(
    model: *const ZrsModel,
    u: *const f64,
    v: *const f64,
    len: usize,
    seed: u64,
    out: *mut *mut ZrsSimulator,
) -> ZrsStatus {
    guard(|| {
        let (grid, sched, spec) = non_null(model, "model")?.resolve()?;
        let (u, v) = (field(grid, slice(u, len, "u")?)?, field(grid, slice(v, len, "v")?)?);
        let table = ThermoTable::new(spec, u.max().max(f64::MIN_POSITIVE))?;
        let mut rng = replica_stream(seed, 0);
        let cfg = sample_product_config(&table, &u, &v, &mut rng)?;
        boxed(out, ZrsSimulator { sim: Simulator::new(cfg, sched, spec, rng) })
    })
}

#[no_mangle]
pub extern "C" fn zrs_simulator_free(h: *mut ZrsSimulator) {
    free(h)
}

/// Runs until time `horizon` or until `budget` further events fire.
#[no_mangle]
pub extern "C" fn zrs_simulator_run(h: *mut ZrsSimulator, horizon: f64, budget: u64) -> ZrsStatus {
    guard(|| {
        let s = non_null_mut(h, "simulator")?;
        s.sim.run(horizon, &[], budget)?;
        Ok(())
    })
}

/// Current time and particle totals; any output pointer may be null.
#[no_mangle]
pub extern "C" fn zrs_simulator_state(h: *const ZrsSimulator, time: *mut f64, n1: *mut u64, n2: *mut u64) -> ZrsStatus {
    guard(|| {
        let s = non_null(h, "simulator")?;
        if let Ok(t) = non_null_mut(time, "time") {
            *t = s.sim.time();
        }
        if let Ok(n) = non_null_mut(n1, "n1") {
            *n = s.sim.config().n1();
        }
        if let Ok(n) = non_null_mut(n2, "n2") {
            *n = s.sim.config().n2();
        }
        Ok(())
    })
}

/// Copies the occupations into caller arrays of length `len`.
#[no_mangle]
pub extern "C" fn zrs_simulator_occupations(
    h: *const ZrsSimulator,
    eta1: *mut u32,
    eta2: *mut u8,
    len: usize,
) -> ZrsStatus {
    guard(|| {
        let cfg = non_null(h, "simulator")?.sim.config();
        if len != cfg.grid().sites() {
            return Err(Error::Domain(format!("buffer holds {len} sites, torus has {}", cfg.grid().sites())).into());
        }
        slice_mut(eta1, len, "eta1")?.copy_from_slice(cfg.eta1());
        slice_mut(eta2, len, "eta2")?.copy_from_slice(cfg.eta2());
        Ok(())
    })
}

/// Semi-discrete reaction-diffusion system with its current state.
pub struct ZrsPde {
    sys: PdeSystem,
    state: FieldPair,
    time: f64,
    reaction: f64,
}

/// `u`, `v` hold `side^dim` values; `m_v` bounds `v` (at most 1).
#[no_mangle]
pub extern "C" fn zrs_pde_new(
    model: *const ZrsModel,
    m_u: f64,
    m_v: f64,
    u: *const f64,
    v: *const f64,
    len: usize,
    out: *mut *mut ZrsPde,
) -> ZrsStatus {
    guard(|| {
        let (grid, sched, spec) = non_null(model, "model")?.resolve()?;
        let table = ThermoTable::new(spec, m_u)?;
        let sys = PdeSystem::new(grid, sched, &table, m_v)?;
        let state = FieldPair::new(field(grid, slice(u, len, "u")?)?, field(grid, slice(v, len, "v")?)?, 0.0)?;
        boxed(out, ZrsPde { sys, state, time: 0.0, reaction: 0.0 })
    })
}

#[no_mangle]
pub extern "C" fn zrs_pde_free(h: *mut ZrsPde) {
    free(h)
}

/// Explicit stability bound of the system.
#[no_mangle]
pub extern "C" fn zrs_pde_stable_dt(h: *const ZrsPde, out: *mut f64) -> ZrsStatus {
    guard(|| {
        *non_null_mut(out, "out")? = non_null(h, "pde")?.sys.stable_dt();
        Ok(())
    })
}

/// Advances by `duration`; `semi_implicit != 0` selects the semi-implicit
/// scheme, `dt <= 0` the explicit stability bound.
#[no_mangle]
pub extern "C" fn zrs_pde_advance(h: *mut ZrsPde, duration: f64, dt: f64, semi_implicit: i32) -> ZrsStatus {
    guard(|| {
        let p = non_null_mut(h, "pde")?;
        let dt = if dt > 0.0 { dt } else { p.sys.stable_dt() };
        let stepper = if semi_implicit != 0 { TimeStepper::semi_implicit(dt) } else { TimeStepper::explicit(dt) };
        let traj = p.sys.solve(p.state.clone(), &stepper, duration, &[])?;
        p.reaction += traj.reaction.last().copied().unwrap_or(0.0);
        p.time += duration;
        p.state = traj.last().clone();
        Ok(())
    })
}

/// Copies `u`, `v` into caller arrays; `time` and `reaction` (the running
/// `∫ N^{-d} Σ K u v dt`) may be null.
#[no_mangle]
pub extern "C" fn zrs_pde_state(
    h: *const ZrsPde,
    u: *mut f64,
    v: *mut f64,
    len: usize,
    time: *mut f64,
    reaction: *mut f64,
) -> ZrsStatus {
    guard(|| {
        let p = non_null(h, "pde")?;
        if len != p.state.grid().sites() {
            return Err(Error::Domain(format!("buffer holds {len} sites, torus has {}", p.state.grid().sites())).into());
        }
        slice_mut(u, len, "u")?.copy_from_slice(p.state.u.values());
        slice_mut(v, len, "v")?.copy_from_slice(p.state.v.values());
        if let Ok(t) = non_null_mut(time, "time") {
            *t = p.time;
        }
        if let Ok(r) = non_null_mut(reaction, "reaction") {
            *r = p.reaction;
        }
        Ok(())
    })
}

/// Backward-Euler Stefan solver with its current state `w`.
pub struct ZrsStefan {
    solver: StefanSolver,
    w: LatticeField,
    time: f64,
}

/// `w` holds `side^dim` values, each at most `m_u`.
#[no_mangle]
pub extern "C" fn zrs_stefan_new(
    dim: usize,
    side: usize,
    rate: ZrsRate,
    a: f64,
    m_u: f64,
    dt: f64,
    w: *const f64,
    len: usize,
    out: *mut *mut ZrsStefan,
) -> ZrsStatus {
    guard(|| {
        let grid = TorusGrid::new(dim, side)?;
        let table = ThermoTable::new(rate_spec(rate, a)?, m_u)?;
        let phi: Arc<PhiInterpolant> = Arc::new(table.default_phi_interpolant()?);
        let solver = StefanSolver::new(grid, phi, dt)?;
        let w = field(grid, slice(w, len, "w")?)?;
        boxed(out, ZrsStefan { solver, w, time: 0.0 })
    })
}

#[no_mangle]
pub extern "C" fn zrs_stefan_free(h: *mut ZrsStefan) {
    free(h)
}

#[no_mangle]
pub extern "C" fn zrs_stefan_advance(h: *mut ZrsStefan, duration: f64) -> ZrsStatus {
    guard(|| {
        let s = non_null_mut(h, "stefan")?;
        let traj = s.solver.solve(&SignedField::new(s.w.clone()), duration, &[], false)?;
        s.w = traj.last().clone();
        s.time += duration;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn zrs_stefan_state(h: *const ZrsStefan, w: *mut f64, len: usize, time: *mut f64) -> ZrsStatus {
    guard(|| {
        let s = non_null(h, "stefan")?;
        if len != s.w.grid().sites() {
            return Err(Error::Domain(format!("buffer holds {len} sites, torus has {}", s.w.grid().sites())).into());
        }
        slice_mut(w, len, "w")?.copy_from_slice(s.w.values());
        if let Ok(t) = non_null_mut(time, "time") {
            *t = s.time;
        }
        Ok(())
    })
}

/// Loads a TOML plan, runs it and writes its outputs.
#[no_mangle]
pub extern "C" fn zrs_run_config(path: *const c_char) -> ZrsStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        // SAFETY: non-null and NUL-terminated by contract.
        let path = unsafe { CStr::from_ptr(path) };
        let path = path.to_str().map_err(|_| Error::Config("config path is not UTF-8".into()))?;
        execute(&load_plan(Path::new(path))?)?;
        Ok(())
    })
}
