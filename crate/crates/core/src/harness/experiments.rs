//! Experiment drivers: particle-vs-PDE sweeps, stationarity, the
//! fast-reaction ladder and Stefan refinement studies.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentKind, ExperimentPlan, SchedulePlan};
use super::output::{ResultRow, ResultTable};
use crate::lattice::{LatticeField, TorusGrid};
use crate::observables::{
    block_profile, default_block_radius, empirical_pairing, l1_distance, trapezoid, ReplicaStats, TestFunction,
};
use crate::pde::{
    check_comparison, energy_report, phi_lipschitz, Barriers, EnergyReport, FieldPair, PdeSystem, PdeTrajectory,
    TimeStepper,
};
use crate::rng::replica_stream;
use crate::simulator::{ParticleConfig, ScalingSchedule, Simulator, Species};
use crate::stefan::{
    l2_space_time, segregation_report, weak_form_residual, SegregationReport, SignedField, SpaceTimeTest,
    StefanSolver, StefanTrajectory,
};
use crate::zrmeasure::{sample_product_config, PhiInterpolant, ThermoTable};
use crate::{Error, Result};

/// SplitMix64 finaliser, used to derive per-level master seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed of the level with side `n` and schedule index `j`.
pub fn level_seed(seed: u64, n: usize, j: usize) -> u64 {
    mix(seed ^ mix(n as u64) ^ mix(0x5EED_0000 + j as u64))
}

/// Thermodynamic table and shared `φ` interpolant for one plan.
#[derive(Debug, Clone)]
pub struct Thermo {
    pub table: ThermoTable,
    pub phi: Arc<PhiInterpolant>,
    pub lipschitz: f64,
}

impl Thermo {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        let m = plan.homogeneous.map_or(plan.initial.m_u, |h| h.rho1.max(plan.initial.m_u));
        let table = ThermoTable::new(plan.rate_spec()?, m)?;
        let phi = Arc::new(table.default_phi_interpolant()?);
        let lipschitz = phi_lipschitz(&table)?;
        Ok(Self { table, phi, lipschitz })
    }

    pub fn system(&self, grid: TorusGrid, sched: ScalingSchedule, m_v: f64) -> Result<PdeSystem> {
        PdeSystem::with_interpolant(grid, sched, self.phi.clone(), self.lipschitz, m_v)
    }
}

fn stepper(plan: &ExperimentPlan, sys: &PdeSystem) -> TimeStepper {
    TimeStepper {
        scheme: plan.solver.scheme,
        dt: plan.solver.dt.unwrap_or_else(|| sys.stable_dt()),
        newton_tolerance: plan.solver.newton_tolerance,
    }
}

fn expect_kind(plan: &ExperimentPlan, kinds: &[ExperimentKind]) -> Result<()> {
    if !kinds.contains(&plan.kind) {
        return Err(Error::config(format!("plan kind {} not valid here (expected {kinds:?})", plan.kind.name())));
    }
    Ok(())
}

/// `N^{-d} Σ_x f(x) ψ(x)` for a sampled test function.
fn lattice_pairing(f: &LatticeField, psi: &LatticeField) -> f64 {
    f.values().iter().zip(psi.values()).map(|(a, b)| a * b).sum::<f64>() / f.grid().volume()
}

/// Per-level result of the particle-vs-PDE sweep.
#[derive(Debug, Clone, Serialize)]
pub struct HydroLevel {
    pub n: usize,
    pub k: f64,
    pub epsilon: f64,
    pub block_radius: usize,
    /// Per-replica `|∫(⟨π,ψ⟩ - ⟨(u,v),ψ⟩)dt|`, averaged over the catalog and
    /// both species.
    pub pairing_gap: ReplicaStats,
    /// Time average of `N^{-d}Σ|B̄(t,x) - u(t,x)|`, `B̄` the replica-mean
    /// block profile.
    pub l1_mean_profile: f64,
    /// Time-averaged per-replica block-profile distance.
    pub l1_per_replica: ReplicaStats,
    pub incomplete_replicas: usize,
    pub events: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HydroResult {
    pub levels: Vec<HydroLevel>,
    #[serde(skip)]
    pub table: ResultTable,
}

struct ReplicaOutput {
    gap: f64,
    l1: f64,
    blocks: Vec<Vec<f64>>,
    events: u64,
}

/// Samples `ν_{(u₀,v₀)}`, runs `R` replicas and compares with the PDE.
pub fn hydrodynamic_experiment(plan: &ExperimentPlan) -> Result<HydroResult> {
    expect_kind(plan, &[ExperimentKind::Hydrodynamic])?;
    let thermo = Thermo::new(plan)?;
    let spec = plan.rate_spec()?;
    let times = &plan.snapshot_times;
    let horizon = plan.horizon;
    let mut levels = Vec::new();
    let mut table = ResultTable::default();
    for &n in &plan.grids {
        let grid = TorusGrid::new(plan.dimension, n)?;
        for (j, sched) in plan.schedule.at(n)?.into_iter().enumerate() {
            let started = Instant::now();
            let init = plan.initial.build(grid, &sched)?;
            let sys = thermo.system(grid, sched, plan.initial.m_v)?;
            let pde = sys.solve(init.clone(), &stepper(plan, &sys), horizon, &times[1..])?;
            let catalog: Vec<LatticeField> = TestFunction::catalog(plan.dimension).iter().map(|p| p.sample(grid)).collect();
            let reference: Vec<Vec<[f64; 2]>> = pde
                .snapshots
                .iter()
                .map(|s| catalog.iter().map(|p| [lattice_pairing(&s.u, p), lattice_pairing(&s.v, p)]).collect())
                .collect();
            let radius = plan.solver.block_radius.unwrap_or_else(|| default_block_radius(grid));
            let master = level_seed(plan.seed, n, j);
            let outputs: Vec<Result<Option<ReplicaOutput>>> = (0..plan.replicas as u64)
                .into_par_iter()
                .map(|r| -> Result<Option<ReplicaOutput>> {
                    let mut rng = replica_stream(master, r);
                    let cfg = sample_product_config(&thermo.table, &init.u, &init.v, &mut rng)?;
                    let mut sim = Simulator::new(cfg, sched, spec, rng);
                    let traj = match sim.run(horizon, times, plan.budget) {
                        Ok(t) => t,
                        Err(Error::BudgetExceeded { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let mut diffs = vec![vec![0.0; times.len()]; 2 * catalog.len()];
                    let mut l1 = Vec::with_capacity(times.len());
                    let mut blocks = Vec::with_capacity(times.len());
                    for (i, cfg) in traj.configs.iter().enumerate() {
                        for (q, p) in catalog.iter().enumerate() {
                            diffs[2 * q][i] = empirical_pairing(cfg, p, Species::One)? - reference[i][q][0];
                            diffs[2 * q + 1][i] = empirical_pairing(cfg, p, Species::Two)? - reference[i][q][1];
                        }
                        let b = block_profile(cfg, Species::One, radius)?;
                        l1.push(l1_distance(&b, &pde.snapshots[i].u)?);
                        blocks.push(b.into_values());
                    }
                    let gap = diffs.iter().map(|d| trapezoid(times, d).abs()).sum::<f64>() / diffs.len() as f64;
                    Ok(Some(ReplicaOutput {
                        gap,
                        l1: trapezoid(times, &l1) / horizon,
                        blocks,
                        events: traj.summary.events.total(),
                    }))
                })
                .collect();
            let mut gap = ReplicaStats::default();
            let mut l1r = ReplicaStats::default();
            let mut incomplete = 0;
            let mut events = 0;
            let mut mean_blocks = vec![vec![0.0; grid.sites()]; times.len()];
            let mut complete = 0usize;
            for out in outputs {
                match out? {
                    None => incomplete += 1,
                    Some(o) => {
                        complete += 1;
                        gap.push(o.gap);
                        l1r.push(o.l1);
                        events += o.events;
                        for (acc, b) in mean_blocks.iter_mut().zip(&o.blocks) {
                            for (a, v) in acc.iter_mut().zip(b) {
                                *a += v;
                            }
                        }
                    }
                }
            }
            let l1_series: Vec<f64> = mean_blocks
                .into_iter()
                .zip(&pde.snapshots)
                .map(|(b, s)| {
                    let b = LatticeField::from_values(grid, b.into_iter().map(|v| v / complete.max(1) as f64).collect())?;
                    l1_distance(&b, &s.u)
                })
                .collect::<Result<_>>()?;
            let level = HydroLevel {
                n,
                k: sched.k,
                epsilon: sched.epsilon,
                block_radius: radius,
                pairing_gap: gap,
                l1_mean_profile: trapezoid(times, &l1_series) / horizon,
                l1_per_replica: l1r,
                incomplete_replicas: incomplete,
                events,
            };
            let wall = started.elapsed().as_secs_f64();
            let ok = incomplete == 0;
            let name = plan.kind.name();
            for mut row in [
                ResultRow::averaged(name, n, sched.k, sched.epsilon, complete, "pairing_gap", gap.mean(), gap.std_error()),
                ResultRow::deterministic(name, n, sched.k, sched.epsilon, "l1_mean_profile", level.l1_mean_profile),
                ResultRow::averaged(name, n, sched.k, sched.epsilon, complete, "l1_per_replica", l1r.mean(), l1r.std_error()),
            ] {
                row.wall_seconds = wall;
                row.complete = ok;
                if row.std_error.is_none() {
                    row.replicas = complete;
                }
                table.push(row);
            }
            log::info!("hydrodynamic N={n}: gap {:.4e}, L1 {:.4e} ({wall:.1}s)", gap.mean(), level.l1_mean_profile);
            levels.push(level);
        }
    }
    Ok(HydroResult { levels, table })
}

/// Per-test-function outcome of the stationarity check.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityItem {
    pub test_function: String,
    /// Replica statistics of `T^{-1}∫⟨π₁,ψ⟩dt`.
    pub stats: ReplicaStats,
    /// `ρ₁ N^{-d} Σ_x ψ(x/N)`.
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityResult {
    pub n: usize,
    pub items: Vec<StationarityItem>,
    #[serde(skip)]
    pub table: ResultTable,
}

/// Runs the chain from a homogeneous product measure with `K = 0`.
pub fn stationarity_experiment(plan: &ExperimentPlan) -> Result<StationarityResult> {
    expect_kind(plan, &[ExperimentKind::Stationarity])?;
    let h = plan.homogeneous.ok_or_else(|| Error::config("stationarity needs densities"))?;
    let thermo = Thermo::new(plan)?;
    let spec = plan.rate_spec()?;
    let n = plan.grids[0];
    let grid = TorusGrid::new(plan.dimension, n)?;
    let sched = plan.schedule.at(n)?[0];
    if sched.k != 0.0 {
        return Err(Error::config("stationarity runs need K = 0"));
    }
    let started = Instant::now();
    let u = LatticeField::constant(grid, h.rho1);
    let v = LatticeField::constant(grid, h.rho2);
    let catalog = TestFunction::catalog(plan.dimension);
    let sampled: Vec<LatticeField> = catalog.iter().map(|p| p.sample(grid)).collect();
    let master = level_seed(plan.seed, n, 0);
    let times = &plan.snapshot_times;
    let per_replica: Vec<Result<Vec<f64>>> = (0..plan.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master, r);
            let cfg = sample_product_config(&thermo.table, &u, &v, &mut rng)?;
            let mut sim = Simulator::new(cfg, sched, spec, rng);
            let traj = sim.run(plan.horizon, times, plan.budget)?;
            sampled
                .iter()
                .map(|p| {
                    let series =
                        traj.configs.iter().map(|c| empirical_pairing(c, p, Species::One)).collect::<Result<Vec<_>>>()?;
                    Ok(trapezoid(times, &series) / plan.horizon)
                })
                .collect()
        })
        .collect();
    let mut stats = vec![ReplicaStats::default(); catalog.len()];
    for r in per_replica {
        for (s, v) in stats.iter_mut().zip(r?) {
            s.push(v);
        }
    }
    let wall = started.elapsed().as_secs_f64();
    let mut table = ResultTable::default();
    let items: Vec<StationarityItem> = catalog
        .iter()
        .zip(&sampled)
        .zip(stats)
        .map(|((p, s), st)| StationarityItem { test_function: p.name(), stats: st, expected: h.rho1 * s.mean() })
        .collect();
    for it in &items {
        let name = plan.kind.name();
        let mut row = ResultRow::averaged(
            name,
            n,
            0.0,
            sched.epsilon,
            plan.replicas,
            &format!("pairing[{}]", it.test_function),
            it.stats.mean(),
            it.stats.std_error(),
        );
        row.wall_seconds = wall;
        table.push(row);
        table.push(ResultRow::deterministic(name, n, 0.0, sched.epsilon, &format!("expected[{}]", it.test_function), it.expected));
    }
    Ok(StationarityResult { n, items, table })
}

/// One rung of the fast-reaction ladder.
#[derive(Debug, Clone, Serialize)]
pub struct FastReactionRung {
    pub k: f64,
    pub epsilon: f64,
    /// `‖(u - v) - w_stefan‖_{L²(Q_T)}`.
    pub l2_error: f64,
    /// `∫₀ᵀ N^{-d} Σ u v dt`, from the step-level reaction integral.
    pub overlap_integral: f64,
    /// The same integral by trapezoid over snapshots.
    pub overlap_trapezoid: f64,
    /// `M_u / K`.
    pub overlap_bound: f64,
    pub final_segregation: SegregationReport,
    pub energy: EnergyReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct FastReactionResult {
    pub n: usize,
    pub reference_n: usize,
    pub reference_dt: f64,
    pub rungs: Vec<FastReactionRung>,
    #[serde(skip)]
    pub table: ResultTable,
}

/// Fine-grid Stefan reference for the plan's limiting datum.
pub fn stefan_reference(plan: &ExperimentPlan, thermo: &Thermo, n: usize) -> Result<StefanTrajectory> {
    let n_ref = plan.solver.reference_factor * n;
    let grid = TorusGrid::new(plan.dimension, n_ref)?;
    let w0 = plan.initial.limit_datum(grid)?;
    let dt = plan.solver.stefan_dt / plan.solver.reference_dt_divisor as f64;
    let solver = StefanSolver::new(grid, thermo.phi.clone(), dt)?;
    solver.solve(&SignedField::new(w0), plan.horizon, &plan.snapshot_times[1..], false)
}

/// Solves the PDE along the `(K, ε)` ladder on the finest grid of the plan
/// and compares `u - v` with the Stefan reference.
pub fn fast_reaction_sweep(plan: &ExperimentPlan) -> Result<FastReactionResult> {
    expect_kind(plan, &[ExperimentKind::FastReaction])?;
    let thermo = Thermo::new(plan)?;
    let n = *plan.grids.last().expect("validated non-empty");
    let grid = TorusGrid::new(plan.dimension, n)?;
    let ladder = match &plan.schedule {
        SchedulePlan::Explicit(l) => l.clone(),
        SchedulePlan::Rule(r) => vec![r.at(n)?],
    };
    let started = Instant::now();
    let reference = stefan_reference(plan, &thermo, n)?;
    log::info!("Stefan reference on N = {} in {:.1}s", reference.grid().side(), started.elapsed().as_secs_f64());
    let rungs: Vec<Result<(FastReactionRung, f64)>> = ladder
        .par_iter()
        .map(|&sched| {
            let t0 = Instant::now();
            let init = plan.initial.build(grid, &sched)?;
            let sys = thermo.system(grid, sched, plan.initial.m_v)?;
            let traj = sys.solve(init, &stepper(plan, &sys), plan.horizon, &plan.snapshot_times[1..])?;
            let w: Vec<LatticeField> = traj
                .snapshots
                .iter()
                .map(|s| SignedField::from_pair(&s.u, &s.v).map(|f| f.w().clone()))
                .collect::<Result<_>>()?;
            let l2_error = l2_space_time(&w, &reference.states, &traj.times())?;
            let energy = energy_report(&traj, &thermo.phi)?;
            let last = traj.last();
            let overlaps: Vec<f64> = traj.snapshots.iter().map(FieldPair::overlap).collect();
            let rung = FastReactionRung {
                k: sched.k,
                epsilon: sched.epsilon,
                l2_error,
                overlap_integral: if sched.k > 0.0 { energy.reaction_integral_steps / sched.k } else { f64::NAN },
                overlap_trapezoid: trapezoid(&traj.times(), &overlaps),
                overlap_bound: plan.initial.m_u / sched.k,
                final_segregation: segregation_report(&last.u, &last.v)?,
                energy,
            };
            Ok((rung, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let mut table = ResultTable::default();
    let mut out = Vec::new();
    for r in rungs {
        let (rung, wall) = r?;
        let name = plan.kind.name();
        for (metric, value) in [
            ("l2_error", rung.l2_error),
            ("overlap_integral", rung.overlap_integral),
            ("overlap_bound", rung.overlap_bound),
            ("reaction_integral", rung.energy.reaction_integral_steps),
            ("final_overlap", rung.final_segregation.overlap),
        ] {
            let mut row = ResultRow::deterministic(name, n, rung.k, rung.epsilon, metric, value);
            row.wall_seconds = wall;
            table.push(row);
        }
        log::info!("fast reaction K={} eps={}: L2 {:.4e}", rung.k, rung.epsilon, rung.l2_error);
        out.push(rung);
    }
    Ok(FastReactionResult {
        n,
        reference_n: reference.grid().side(),
        reference_dt: plan.solver.stefan_dt / plan.solver.reference_dt_divisor as f64,
        rungs: out,
        table,
    })
}

/// Weak-form residuals of one refinement level.
#[derive(Debug, Clone, Serialize)]
pub struct StefanLevel {
    pub n: usize,
    pub dt: f64,
    pub residuals: Vec<(String, f64)>,
    pub max_residual: f64,
    /// `max_residual / (1/N + dt)`.
    pub fitted_constant: f64,
    pub frozen_drift: f64,
    pub mass_drift: f64,
    pub steps: u64,
    pub max_newton_iterations: usize,
    /// Interface positions at the horizon (d = 1).
    pub final_interfaces: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StefanStudy {
    pub levels: Vec<StefanLevel>,
    #[serde(skip)]
    pub table: ResultTable,
    #[serde(skip)]
    pub trajectories: Vec<StefanTrajectory>,
}

/// Refinement study: for each `N` the step is `stefan_dt · N₀ / N` so that
/// space and time are refined together.
pub fn stefan_study(plan: &ExperimentPlan) -> Result<StefanStudy> {
    expect_kind(plan, &[ExperimentKind::Stefan])?;
    let thermo = Thermo::new(plan)?;
    let n0 = plan.grids[0];
    let catalog = SpaceTimeTest::catalog(plan.dimension);
    let levels: Vec<Result<(StefanLevel, StefanTrajectory, f64)>> = plan
        .grids
        .par_iter()
        .map(|&n| {
            let t0 = Instant::now();
            let grid = TorusGrid::new(plan.dimension, n)?;
            let dt = plan.solver.stefan_dt * n0 as f64 / n as f64;
            let solver = StefanSolver::new(grid, thermo.phi.clone(), dt)?;
            let w0 = plan.initial.limit_datum(grid)?;
            let traj = solver.solve(&SignedField::new(w0), plan.horizon, &plan.snapshot_times[1..], true)?;
            let residuals = catalog
                .iter()
                .map(|t| Ok((t.space.name(), weak_form_residual(&traj, solver.d_phi(), t, plan.solver.weak_form)?)))
                .collect::<Result<Vec<_>>>()?;
            let max_residual = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
            let level = StefanLevel {
                n,
                dt,
                max_residual,
                fitted_constant: max_residual / (1.0 / n as f64 + dt),
                residuals,
                frozen_drift: traj.frozen_drift(),
                mass_drift: traj.mass_drift,
                steps: traj.steps,
                max_newton_iterations: traj.max_newton_iterations,
                final_interfaces: if plan.dimension == 1 { crate::stefan::interfaces(traj.last())? } else { vec![] },
            };
            Ok((level, traj, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let mut table = ResultTable::default();
    let mut out = Vec::new();
    let mut trajectories = Vec::new();
    for l in levels {
        let (level, traj, wall) = l?;
        let name = plan.kind.name();
        for (metric, value) in [
            ("max_residual", level.max_residual),
            ("fitted_constant", level.fitted_constant),
            ("frozen_drift", level.frozen_drift),
            ("mass_drift", level.mass_drift),
        ] {
            let mut row = ResultRow::deterministic(name, level.n, 0.0, 0.0, metric, value);
            row.wall_seconds = wall;
            table.push(row);
        }
        out.push(level);
        trajectories.push(traj);
    }
    Ok(StefanStudy { levels: out, table, trajectories })
}

/// Single PDE runs for every grid and schedule of the plan.
#[derive(Debug, Clone, Serialize)]
pub struct PdeRun {
    pub n: usize,
    pub k: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub steps: u64,
    pub energy: EnergyReport,
    pub mass_drift: f64,
    pub barriers_hold: bool,
    pub segregation: SegregationReport,
    #[serde(skip)]
    pub trajectory: PdeTrajectory,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeStudy {
    pub runs: Vec<PdeRun>,
    #[serde(skip)]
    pub table: ResultTable,
}

pub fn pde_study(plan: &ExperimentPlan) -> Result<PdeStudy> {
    expect_kind(plan, &[ExperimentKind::Pde])?;
    let thermo = Thermo::new(plan)?;
    let mut runs = Vec::new();
    let mut table = ResultTable::default();
    for &n in &plan.grids {
        let grid = TorusGrid::new(plan.dimension, n)?;
        for sched in plan.schedule.at(n)? {
            let t0 = Instant::now();
            let init = plan.initial.build(grid, &sched)?;
            let m0 = init.mass_difference();
            let sys = thermo.system(grid, sched, plan.initial.m_v)?;
            let st = stepper(plan, &sys);
            let traj = sys.solve(init, &st, plan.horizon, &plan.snapshot_times[1..])?;
            let energy = energy_report(&traj, &thermo.phi)?;
            let barriers = Barriers { c1: plan.initial.c1, k: sched.k, m_u: plan.initial.m_u, m_v: plan.initial.m_v };
            let times = traj.times();
            let lower = barriers.discrete_lower_trajectory(grid, &times, sys.effective_dt(&st)?);
            let cmp = check_comparison(&lower, &traj, &barriers.upper_trajectory(grid, &times))?;
            let mass_drift = traj.snapshots.iter().map(|s| (s.mass_difference() - m0).abs()).fold(0.0, f64::max);
            let last = traj.last();
            let run = PdeRun {
                n,
                k: sched.k,
                epsilon: sched.epsilon,
                dt: st.dt,
                steps: traj.steps,
                energy,
                mass_drift,
                barriers_hold: cmp.holds,
                segregation: segregation_report(&last.u, &last.v)?,
                trajectory: traj,
            };
            let name = plan.kind.name();
            let wall = t0.elapsed().as_secs_f64();
            for (metric, value) in [
                ("e_u", energy.e_u),
                ("e_v", energy.e_v),
                ("reaction_integral", energy.reaction_integral_steps),
                ("grad_max_u", energy.grad_max_u),
                ("grad_max_v", energy.grad_max_v),
                ("laplacian_phi_ratio", energy.laplacian_phi_ratio),
                ("mass_drift", mass_drift),
                ("final_overlap", run.segregation.overlap),
            ] {
                let mut row = ResultRow::deterministic(name, n, sched.k, sched.epsilon, metric, value);
                row.wall_seconds = wall;
                table.push(row);
            }
            runs.push(run);
        }
    }
    Ok(PdeStudy { runs, table })
}

/// Replica runs of the particle system from the plan's initial profile.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReplica {
    pub replica: u64,
    pub summary: crate::simulator::RunSummary,
    pub initial_n1: u64,
    pub initial_n2: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationStudy {
    pub n: usize,
    pub k: f64,
    pub epsilon: f64,
    pub replicas: Vec<SimulationReplica>,
    #[serde(skip)]
    pub table: ResultTable,
    /// Snapshots of replica 0.
    #[serde(skip)]
    pub first_replica: Vec<ParticleConfig>,
}

pub fn simulation_study(plan: &ExperimentPlan) -> Result<SimulationStudy> {
    expect_kind(plan, &[ExperimentKind::Simulate])?;
    let thermo = Thermo::new(plan)?;
    let spec = plan.rate_spec()?;
    let n = plan.grids[0];
    let grid = TorusGrid::new(plan.dimension, n)?;
    let sched = plan.schedule.at(n)?[0];
    let (u, v) = match plan.homogeneous {
        Some(h) => (LatticeField::constant(grid, h.rho1), LatticeField::constant(grid, h.rho2)),
        None => {
            let p = plan.initial.build(grid, &sched)?;
            (p.u, p.v)
        }
    };
    let master = level_seed(plan.seed, n, 0);
    let results: Vec<Result<(SimulationReplica, Vec<ParticleConfig>)>> = (0..plan.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master, r);
            let cfg = sample_product_config(&thermo.table, &u, &v, &mut rng)?;
            let (n1, n2) = (cfg.n1(), cfg.n2());
            let mut sim = Simulator::new(cfg, sched, spec, rng);
            let traj = sim.run(plan.horizon, &plan.snapshot_times, plan.budget)?;
            Ok((
                SimulationReplica { replica: r, summary: traj.summary, initial_n1: n1, initial_n2: n2 },
                if r == 0 { traj.configs } else { Vec::new() },
            ))
        })
        .collect();
    let mut replicas = Vec::new();
    let mut first = Vec::new();
    for r in results {
        let (rep, cfgs) = r?;
        if rep.replica == 0 {
            first = cfgs;
        }
        replicas.push(rep);
    }
    let mut table = ResultTable::default();
    let name = plan.kind.name();
    let events = ReplicaStats::from_slice(&replicas.iter().map(|r| r.summary.events.total() as f64).collect::<Vec<_>>());
    let killed =
        ReplicaStats::from_slice(&replicas.iter().map(|r| (r.initial_n1 - r.summary.final_n1) as f64).collect::<Vec<_>>());
    table.push(ResultRow::averaged(name, n, sched.k, sched.epsilon, replicas.len(), "events", events.mean(), events.std_error()));
    table.push(ResultRow::averaged(name, n, sched.k, sched.epsilon, replicas.len(), "killed_pairs", killed.mean(), killed.std_error()));
    Ok(SimulationStudy { n, k: sched.k, epsilon: sched.epsilon, replicas, table, first_replica: first })
}
