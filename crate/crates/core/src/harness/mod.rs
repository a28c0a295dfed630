//! Experiment orchestration.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod output;

use std::fs;

use config::{ExperimentKind, ExperimentPlan};
use output::{emit, EmittedFiles, ResultRow, ResultTable};

use crate::lattice::TorusGrid;
use crate::Result;

/// Tables, JSON details and extra plot-ready files of one plan.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: ResultTable,
    pub details: serde_json::Value,
    /// `(file name, contents)` written next to the tables.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

/// Runs a plan of any kind without touching the file system.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RunOutput> {
    let mut artifacts = Vec::new();
    let (table, details) = match plan.kind {
        ExperimentKind::Hydrodynamic => {
            let r = experiments::hydrodynamic_experiment(plan)?;
            (r.table.clone(), serde_json::to_value(&r)?)
        }
        ExperimentKind::Stationarity => {
            let r = experiments::stationarity_experiment(plan)?;
            (r.table.clone(), serde_json::to_value(&r)?)
        }
        ExperimentKind::FastReaction => {
            let r = experiments::fast_reaction_sweep(plan)?;
            (r.table.clone(), serde_json::to_value(&r)?)
        }
        ExperimentKind::Stefan => {
            let r = experiments::stefan_study(plan)?;
            if plan.dimension == 1 {
                for (level, traj) in r.levels.iter().zip(&r.trajectories) {
                    let mut buf = Vec::new();
                    traj.write_interfaces(&mut buf)?;
                    artifacts.push((format!("interfaces_N{}.csv", level.n), buf));
                }
            }
            let residuals: serde_json::Map<String, serde_json::Value> = r
                .levels
                .iter()
                .map(|l| {
                    let by_name: serde_json::Map<String, serde_json::Value> =
                        l.residuals.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
                    (format!("N{}", l.n), by_name.into())
                })
                .collect();
            artifacts.push(("residuals.json".into(), serde_json::to_vec_pretty(&residuals)?));
            (r.table.clone(), serde_json::to_value(&r)?)
        }
        ExperimentKind::Pde => {
            let r = experiments::pde_study(plan)?;
            for run in &r.runs {
                let mut buf = Vec::new();
                run.trajectory.write_snapshots(&mut buf)?;
                artifacts.push((format!("snapshots_N{}_K{}.txt", run.n, run.k), buf));
            }
            (r.table.clone(), serde_json::to_value(&r)?)
        }
        ExperimentKind::Simulate => {
            let r = experiments::simulation_study(plan)?;
            let mut buf = b"time,site,eta1,eta2\n".to_vec();
            let grid: Option<TorusGrid> = r.first_replica.first().map(|c| c.grid());
            for (t, cfg) in plan.snapshot_times.iter().zip(&r.first_replica) {
                for x in 0..grid.map_or(0, |g| g.sites()) {
                    buf.extend(format!("{t:e},{x},{},{}\n", cfg.eta1()[x], cfg.eta2()[x]).bytes());
                }
            }
            artifacts.push(("replica0.csv".into(), buf));
            (r.table.clone(), serde_json::to_value(&r)?)
        }
        ExperimentKind::UnitOracles => {
            let outcomes: Vec<_> = [
                acceptance::thermo_oracles,
                acceptance::heat_eigenmode,
                acceptance::invariant_region_and_reaction,
                acceptance::comparison_triples,
                acceptance::macroscopic_conservation,
                acceptance::stefan_weak_form,
            ]
            .iter()
            .map(|c| c())
            .collect();
            let mut table = ResultTable::default();
            for o in &outcomes {
                let mut row = ResultRow::deterministic(plan.kind.name(), 0, 0.0, 0.0, o.name, f64::from(u8::from(o.passed)));
                row.wall_seconds = o.wall_seconds;
                table.push(row);
            }
            (table, serde_json::to_value(&outcomes)?)
        }
    };
    Ok(RunOutput { table, details, artifacts })
}

/// Runs a plan and writes tables, manifest and artifacts under
/// `<output_dir>/<kind>/`.
pub fn execute(plan: &ExperimentPlan) -> Result<(RunOutput, EmittedFiles)> {
    let out = run_plan(plan)?;
    let files = emit(plan, &out.table, Some(&out.details))?;
    for (name, bytes) in &out.artifacts {
        fs::write(files.dir.join(name), bytes)?;
    }
    Ok((out, files))
}
