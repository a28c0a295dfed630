//! Experiment configuration: TOML schema, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pde::{InitialProfileSpec, Scheme};
use crate::simulator::{ScalingSchedule, ScheduleRule, DEFAULT_EVENT_BUDGET};
use crate::stefan::WeakFormVariant;
use crate::zrmeasure::{JumpRateSpec, RateKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Hydrodynamic,
    FastReaction,
    Stationarity,
    UnitOracles,
    Simulate,
    Pde,
    Stefan,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Hydrodynamic => "hydrodynamic",
            ExperimentKind::FastReaction => "fast_reaction",
            ExperimentKind::Stationarity => "stationarity",
            ExperimentKind::UnitOracles => "unit_oracles",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Pde => "pde",
            ExperimentKind::Stefan => "stefan",
        }
    }

    fn is_sweep(&self) -> bool {
        matches!(self, ExperimentKind::Hydrodynamic | ExperimentKind::FastReaction)
    }
}

/// `[schedule]`: either the rule `(delta1, delta2, alpha_eps)`, a single
/// explicit `(k, epsilon)`, or an explicit `ladder` of `[k, epsilon]` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<[f64; 2]>>,
}

/// `[homogeneous]`: constant densities for stationarity runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousSection {
    pub rho1: f64,
    pub rho2: f64,
}

/// `[solver]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub scheme: Scheme,
    /// PDE step; defaults to the explicit stability bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_newton_tolerance")]
    pub newton_tolerance: f64,
    #[serde(default = "default_stefan_dt")]
    pub stefan_dt: f64,
    #[serde(default = "default_reference_factor")]
    pub reference_factor: usize,
    #[serde(default = "default_reference_dt_divisor")]
    pub reference_dt_divisor: usize,
    #[serde(default = "default_variant")]
    pub weak_form: WeakFormVariant,
    /// Block radius `ℓ`; defaults to `round(N^{1/(2d)})`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_radius: Option<usize>,
}

fn default_newton_tolerance() -> f64 {
    1e-11
}
fn default_stefan_dt() -> f64 {
    1e-4
}
fn default_reference_factor() -> usize {
    4
}
fn default_reference_dt_divisor() -> usize {
    16
}
fn default_variant() -> WeakFormVariant {
    WeakFormVariant::Full
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Explicit,
            dt: None,
            newton_tolerance: default_newton_tolerance(),
            stefan_dt: default_stefan_dt(),
            reference_factor: default_reference_factor(),
            reference_dt_divisor: default_reference_dt_divisor(),
            weak_form: default_variant(),
            block_radius: None,
        }
    }
}

/// On-disk configuration. Every key is optional except `kind`; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    /// Single side length.
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// List of side lengths for sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialProfileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homogeneous: Option<HomogeneousSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
}

/// Documented defaults.
pub mod defaults {
    pub const DIMENSION: usize = 1;
    pub const N: usize = 64;
    pub const SEED: u64 = 1;
    pub const HORIZON: f64 = 0.05;
    pub const SNAPSHOT_COUNT: usize = 10;
    pub const REPLICAS: usize = 32;
    pub const OUTPUT_DIR: &str = "out";
    pub const DELTA1: f64 = 2.0;
    pub const DELTA2: f64 = 1.0;
    pub const ALPHA_EPS: f64 = 0.5;
}

/// How `(K, ε)` is chosen per grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePlan {
    Rule(ScheduleRule),
    Explicit(Vec<ScalingSchedule>),
}

impl SchedulePlan {
    /// Schedules to run at side length `n`.
    pub fn at(&self, n: usize) -> Result<Vec<ScalingSchedule>> {
        match self {
            SchedulePlan::Rule(r) => Ok(vec![r.at(n)?]),
            SchedulePlan::Explicit(list) => Ok(list.clone()),
        }
    }
}

/// Fully resolved experiment plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub dimension: usize,
    pub grids: Vec<usize>,
    pub schedule: SchedulePlan,
    pub rate: RateKind,
    pub initial: InitialProfileSpec,
    pub homogeneous: Option<HomogeneousSection>,
    pub replicas: usize,
    pub seed: u64,
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub budget: u64,
    pub solver: SolverSection,
}

/// `count` equispaced times in `(0, horizon]`, preceded by zero.
pub fn uniform_snapshots(horizon: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    // The last entry is the horizon itself, not a rounded product.
    (0..=count).map(|i| if i == count { horizon } else { horizon * i as f64 / count as f64 }).collect()
}

impl ExperimentPlan {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let dimension = raw.dimension.unwrap_or(defaults::DIMENSION);
        if !(1..=2).contains(&dimension) {
            return Err(Error::config(format!("dimension must be 1 or 2, got {dimension}")));
        }
        let grids = match (raw.n, raw.grid) {
            (Some(_), Some(_)) => return Err(Error::config("give either `N` or `grid`, not both")),
            (Some(n), None) => vec![n],
            (None, Some(g)) => g,
            (None, None) => vec![defaults::N],
        };
        if grids.is_empty() || grids.iter().any(|&n| n < 2) {
            return Err(Error::config("grid sides must be at least 2"));
        }
        if raw.kind.is_sweep() && grids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("grid list must be strictly increasing"));
        }
        let horizon = raw.horizon.unwrap_or(defaults::HORIZON);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        let snapshot_times = match (raw.snapshot_times, raw.snapshot_count) {
            (Some(_), Some(_)) => return Err(Error::config("give either snapshot_times or snapshot_count")),
            (Some(mut t), None) => {
                if t.first() != Some(&0.0) {
                    t.insert(0, 0.0);
                }
                if t.last().is_none_or(|&l| l < horizon) {
                    t.push(horizon);
                }
                t
            }
            (None, c) => uniform_snapshots(horizon, c.unwrap_or(defaults::SNAPSHOT_COUNT)),
        };
        crate::pde::validate_times(&snapshot_times, horizon)?;
        let schedule = resolve_schedule(raw.kind, raw.schedule.unwrap_or_default(), &grids)?;
        let rate = raw.rate.unwrap_or(RateKind::Linear);
        JumpRateSpec::from_kind(rate)?;
        let replicas = raw.replicas.unwrap_or(defaults::REPLICAS);
        if replicas == 0 {
            return Err(Error::config("replicas must be at least 1"));
        }
        if raw.kind == ExperimentKind::Stationarity && raw.homogeneous.is_none() {
            return Err(Error::config("stationarity runs need a [homogeneous] section"));
        }
        if let Some(h) = raw.homogeneous {
            if !(h.rho1 >= 0.0) || !(0.0..=1.0).contains(&h.rho2) {
                return Err(Error::config("homogeneous densities need rho1 >= 0 and rho2 in [0,1]"));
            }
        }
        let solver = raw.solver.unwrap_or_default();
        if solver.reference_factor == 0 || solver.reference_dt_divisor == 0 || !(solver.stefan_dt > 0.0) {
            return Err(Error::config("solver reference factors and stefan_dt must be positive"));
        }
        Ok(Self {
            kind: raw.kind,
            dimension,
            grids,
            schedule,
            rate,
            initial: raw.initial.unwrap_or_default(),
            homogeneous: raw.homogeneous,
            replicas,
            seed: raw.seed.unwrap_or(defaults::SEED),
            horizon,
            snapshot_times,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(defaults::OUTPUT_DIR)),
            budget: raw.budget.unwrap_or(DEFAULT_EVENT_BUDGET),
            solver,
        })
    }

    /// Equivalent configuration with every key explicit.
    pub fn to_raw(&self) -> RawConfig {
        let schedule = match &self.schedule {
            SchedulePlan::Rule(r) => ScheduleSection {
                delta1: Some(r.delta1),
                delta2: Some(r.delta2),
                alpha_eps: Some(r.alpha_eps),
                ..Default::default()
            },
            SchedulePlan::Explicit(list) if list.len() == 1 => ScheduleSection {
                k: Some(list[0].k),
                epsilon: Some(list[0].epsilon),
                ..Default::default()
            },
            SchedulePlan::Explicit(list) => ScheduleSection {
                ladder: Some(list.iter().map(|s| [s.k, s.epsilon]).collect()),
                ..Default::default()
            },
        };
        RawConfig {
            kind: self.kind,
            dimension: Some(self.dimension),
            n: None,
            grid: Some(self.grids.clone()),
            seed: Some(self.seed),
            horizon: Some(self.horizon),
            snapshot_times: Some(self.snapshot_times.clone()),
            snapshot_count: None,
            replicas: Some(self.replicas),
            output_dir: Some(self.output_dir.clone()),
            budget: Some(self.budget),
            schedule: Some(schedule),
            rate: Some(self.rate),
            initial: Some(self.initial.clone()),
            homogeneous: self.homogeneous,
            solver: Some(self.solver.clone()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_raw()).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_raw(toml::from_str(text)?)
    }

    pub fn rate_spec(&self) -> Result<JumpRateSpec> {
        JumpRateSpec::from_kind(self.rate)
    }
}

fn resolve_schedule(kind: ExperimentKind, s: ScheduleSection, grids: &[usize]) -> Result<SchedulePlan> {
    let has_rule = s.delta1.is_some() || s.delta2.is_some() || s.alpha_eps.is_some();
    let has_single = s.k.is_some() || s.epsilon.is_some();
    let has_ladder = s.ladder.is_some();
    if [has_rule, has_single, has_ladder].iter().filter(|&&b| b).count() > 1 {
        return Err(Error::config("[schedule] mixes the rule, a single (k, epsilon) and a ladder"));
    }
    if has_single {
        let sched = ScalingSchedule::explicit(s.k.unwrap_or(0.0), s.epsilon.unwrap_or(0.0))?;
        return Ok(SchedulePlan::Explicit(vec![sched]));
    }
    if let Some(ladder) = s.ladder {
        if ladder.is_empty() {
            return Err(Error::config("schedule ladder is empty"));
        }
        let list = ladder
            .iter()
            .map(|p| ScalingSchedule::explicit(p[0], p[1]))
            .collect::<Result<Vec<_>>>()?;
        if kind.is_sweep() && list.windows(2).any(|w| !(w[1].k > w[0].k && w[1].epsilon < w[0].epsilon)) {
            return Err(Error::config("schedule ladder must have K increasing and epsilon decreasing"));
        }
        return Ok(SchedulePlan::Explicit(list));
    }
    let rule = ScheduleRule {
        delta1: s.delta1.unwrap_or(defaults::DELTA1),
        delta2: s.delta2.unwrap_or(defaults::DELTA2),
        alpha_eps: s.alpha_eps.unwrap_or(defaults::ALPHA_EPS),
    };
    for &n in grids {
        rule.at(n)?;
    }
    Ok(SchedulePlan::Rule(rule))
}

/// Reads and validates a TOML configuration file.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = std::fs::read_to_string(path)?;
    let plan = ExperimentPlan::from_toml(&text)?;
    log::info!("resolved plan from {}: {:?}", path.display(), plan);
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let plan = ExperimentPlan::from_toml("kind = \"pde\"").unwrap();
        assert_eq!(plan.dimension, 1);
        assert_eq!(plan.grids, vec![64]);
        assert_eq!(plan.replicas, 32);
        assert_eq!(plan.snapshot_times.len(), 11);
        assert_eq!(plan.rate, RateKind::Linear);
        assert!(matches!(plan.schedule, SchedulePlan::Rule(r) if r.delta1 == 2.0));
        assert_eq!(plan.solver.stefan_dt, 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentPlan::from_toml("kind = \"pde\"\nfoo = 1").is_err());
        assert!(ExperimentPlan::from_toml("kind = \"pde\"\n[solver]\nbar = 2").is_err());
        assert!(ExperimentPlan::from_toml("kind = \"pde\"\n[initial]\nm_u = 1.0\nzeta = 2").is_err());
    }

    #[test]
    fn rule_violating_b1_is_rejected() {
        let err = ExperimentPlan::from_toml(
            "kind = \"hydrodynamic\"\ngrid = [64, 256]\n[schedule]\ndelta1 = 0.5\ndelta2 = 0.5\nalpha_eps = 0.5",
        )
        .unwrap_err();
        assert!(err.to_string().contains("killing-rate cap"), "{err}");
    }

    #[test]
    fn ladder_must_be_monotone_for_sweeps() {
        let bad = "kind = \"fast_reaction\"\n[schedule]\nladder = [[100.0, 0.01], [10.0, 0.1]]";
        assert!(ExperimentPlan::from_toml(bad).is_err());
        let good = "kind = \"fast_reaction\"\n[schedule]\nladder = [[10.0, 0.1], [100.0, 0.01]]";
        assert!(ExperimentPlan::from_toml(good).is_ok());
    }

    #[test]
    fn resolved_plan_round_trips() {
        let text = r#"
kind = "fast_reaction"
N = 128
horizon = 0.02
snapshot_count = 4
[schedule]
ladder = [[10.0, 0.1], [100.0, 0.01]]
[rate]
kind = "affine"
a = 1.0
[initial]
m_u = 1.0
m_v = 0.8
[initial.profile]
family = "bump"
width = 0.15
[solver]
scheme = "semi_implicit"
dt = 1e-5
"#;
        let plan = ExperimentPlan::from_toml(text).unwrap();
        let again = ExperimentPlan::from_toml(&plan.to_toml().unwrap()).unwrap();
        assert_eq!(plan, again);
    }
}
