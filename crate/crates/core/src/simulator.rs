//! Exact event-driven simulation of the two-species chain with generator
//! `N² L_Z + ε N² L_K + K L_G` on the discrete torus.
//!
//! * zero-range: a type-1 particle leaves `x` towards each neighbor at rate
//!   `N² g(η₁(x))`;
//! * Kawasaki: a type-2 particle crosses each bond `x → y` with `η₂(y) = 0`
//!   at rate `ε N²`;
//! * killing: at rate `K η₁(x) η₂(x)` one particle of each type is removed
//!   from `x`.
//!
//! One exponential clock with the total rate drives the chain; the firing
//! site is drawn from a sum tree over per-site totals and the channel from
//! the site's three rates.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::lattice::{LatticeField, TorusGrid};
use crate::rng::SimRng;
use crate::zrmeasure::JumpRateSpec;
use crate::{Error, Result};

/// Default cap on the number of events in one run.
pub const DEFAULT_EVENT_BUDGET: u64 = 5_000_000_000;

/// Paired occupation fields `(η₁, η₂) ∈ Z₊^{T} × {0,1}^{T}` with running totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleConfig {
    grid: TorusGrid,
    eta1: Vec<u32>,
    eta2: Vec<u8>,
    n1: u64,
    n2: u64,
}

impl ParticleConfig {
    pub fn empty(grid: TorusGrid) -> Self {
        Self { grid, eta1: vec![0; grid.sites()], eta2: vec![0; grid.sites()], n1: 0, n2: 0 }
    }

    pub fn new(grid: TorusGrid, eta1: Vec<u32>, eta2: Vec<u8>) -> Result<Self> {
        if eta1.len() != grid.sites() || eta2.len() != grid.sites() {
            return Err(Error::domain("occupation arrays do not match the torus size"));
        }
        if let Some(x) = eta2.iter().position(|&b| b > 1) {
            return Err(Error::domain(format!("eta2({x}) = {} violates exclusion", eta2[x])));
        }
        let n1 = eta1.iter().map(|&k| k as u64).sum();
        let n2 = eta2.iter().map(|&b| b as u64).sum();
        Ok(Self { grid, eta1, eta2, n1, n2 })
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn eta1(&self) -> &[u32] {
        &self.eta1
    }

    #[inline]
    pub fn eta2(&self) -> &[u8] {
        &self.eta2
    }

    /// Total number of type-1 particles.
    #[inline]
    pub fn n1(&self) -> u64 {
        self.n1
    }

    #[inline]
    pub fn n2(&self) -> u64 {
        self.n2
    }

    /// Occupation of species `1` or `2` at `x` as a float.
    #[inline]
    pub fn occupation(&self, species: Species, x: usize) -> f64 {
        match species {
            Species::One => self.eta1[x] as f64,
            Species::Two => self.eta2[x] as f64,
        }
    }

    /// Occupation field of one species.
    pub fn field(&self, species: Species) -> LatticeField {
        let values = (0..self.grid.sites()).map(|x| self.occupation(species, x)).collect();
        LatticeField::from_values(self.grid, values).expect("sizes agree")
    }

    fn move_type1(&mut self, from: usize, to: usize) {
        self.eta1[from] -= 1;
        self.eta1[to] += 1;
    }

    fn move_type2(&mut self, from: usize, to: usize) {
        debug_assert!(self.eta2[from] == 1 && self.eta2[to] == 0);
        self.eta2[from] = 0;
        self.eta2[to] = 1;
    }

    fn kill(&mut self, x: usize) {
        self.eta1[x] -= 1;
        self.eta2[x] -= 1;
        self.n1 -= 1;
        self.n2 -= 1;
    }

    /// Recomputes both totals from scratch and compares with the running ones.
    pub fn counts_consistent(&self) -> bool {
        let n1: u64 = self.eta1.iter().map(|&k| k as u64).sum();
        let n2: u64 = self.eta2.iter().map(|&b| b as u64).sum();
        n1 == self.n1 && n2 == self.n2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    One,
    Two,
}

/// Rule deriving `(K(N), ε(N))` from the system size:
/// `K(N) = max(1, (δ₁ log(δ₂ log N))^{1/2})`, `ε(N) = N^{-α_ε}`.
///
/// The rule is rejected at any `N` where it would leave the band
/// `1 ≤ K(N) ≤ (δ₁ log(δ₂ log N))^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRule {
    pub delta1: f64,
    pub delta2: f64,
    pub alpha_eps: f64,
}

impl ScheduleRule {
    /// Upper bound `(δ₁ log(δ₂ log N))^{1/2}` on the killing rate, or `None`
    /// when the inner logarithm is not positive.
    pub fn k_cap(&self, n: usize) -> Option<f64> {
        let inner = self.delta2 * (n as f64).ln();
        if inner <= 1.0 {
            return None;
        }
        Some((self.delta1 * inner.ln()).sqrt())
    }

    pub fn at(&self, n: usize) -> Result<ScalingSchedule> {
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return Err(Error::config("schedule rule needs delta1 > 0 and delta2 > 0"));
        }
        if !(self.alpha_eps > 0.0) {
            return Err(Error::config("schedule rule needs alpha_eps > 0"));
        }
        let cap = self.k_cap(n).unwrap_or(0.0);
        let k = cap.max(1.0);
        if k > cap {
            return Err(Error::config(format!(
                "killing-rate cap violated at N = {n}: K(N) = {k} exceeds the cap (delta1 log(delta2 log N))^(1/2) = {cap:.4}"
            )));
        }
        let eps = (n as f64).powf(-self.alpha_eps);
        Ok(ScalingSchedule { k, epsilon: eps, rule: Some(*self) })
    }
}

/// Killing rate `K ≥ 0` and Kawasaki intensity `ε ∈ [0, 1]`.
///
/// `K = 0` and `ε = 0` are admitted for the degenerate benchmark cases
/// (pure zero-range, frozen exclusion particles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSchedule {
    pub k: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<ScheduleRule>,
}

impl ScalingSchedule {
    pub fn explicit(k: f64, epsilon: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::config(format!("killing rate K must be finite and >= 0, got {k}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::config(format!("epsilon must lie in [0,1], got {epsilon}")));
        }
        Ok(Self { k, epsilon, rule: None })
    }
}

/// Rates of the three channels out of one site.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SiteRates {
    pub zero_range: f64,
    pub kawasaki: f64,
    pub killing: f64,
}

impl SiteRates {
    #[inline]
    pub fn total(&self) -> f64 {
        self.zero_range + self.kawasaki + self.killing
    }
}

/// Which channels are active; all three in the physical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channels {
    pub zero_range: bool,
    pub kawasaki: bool,
    pub killing: bool,
}

impl Default for Channels {
    fn default() -> Self {
        Self { zero_range: true, kawasaki: true, killing: true }
    }
}

/// Rates out of site `x`.
pub fn site_rates(cfg: &ParticleConfig, sched: &ScalingSchedule, spec: &JumpRateSpec, x: usize) -> Result<SiteRates> {
    cfg.grid.check_site(x)?;
    Ok(site_rates_unchecked(cfg, sched, spec, Channels::default(), x))
}

#[inline]
fn site_rates_unchecked(
    cfg: &ParticleConfig,
    sched: &ScalingSchedule,
    spec: &JumpRateSpec,
    channels: Channels,
    x: usize,
) -> SiteRates {
    let grid = cfg.grid;
    let n2 = (grid.side() * grid.side()) as f64;
    let k1 = cfg.eta1[x];
    let occupied2 = cfg.eta2[x] == 1;
    let zero_range = if channels.zero_range {
        n2 * spec.rate(k1) * (2 * grid.dim()) as f64
    } else {
        0.0
    };
    let kawasaki = if channels.kawasaki && occupied2 && sched.epsilon > 0.0 {
        let free = grid.neighbors_unchecked(x).iter().filter(|&&y| cfg.eta2[y] == 0).count();
        sched.epsilon * n2 * free as f64
    } else {
        0.0
    };
    let killing = if channels.killing && occupied2 { sched.k * k1 as f64 } else { 0.0 };
    SiteRates { zero_range, kawasaki, killing }
}

/// Per-site channel rates with a complete binary sum tree over site totals.
///
/// Internal nodes are recomputed from their children on every update, so the
/// stored total never accumulates incremental drift.
#[derive(Debug, Clone)]
pub struct EventRateIndex {
    rates: Vec<SiteRates>,
    leaves: usize,
    tree: Vec<f64>,
}

impl EventRateIndex {
    pub fn new(rates: Vec<SiteRates>) -> Self {
        let leaves = rates.len().next_power_of_two().max(1);
        let mut idx = Self { rates, leaves, tree: vec![0.0; 2 * leaves] };
        idx.rebuild();
        idx
    }

    pub fn rebuild(&mut self) {
        for (i, r) in self.rates.iter().enumerate() {
            self.tree[self.leaves + i] = r.total();
        }
        for node in (1..self.leaves).rev() {
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    #[inline]
    pub fn rates(&self, x: usize) -> SiteRates {
        self.rates[x]
    }

    pub fn update(&mut self, x: usize, rates: SiteRates) {
        self.rates[x] = rates;
        let mut node = self.leaves + x;
        self.tree[node] = rates.total();
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }

    /// Site whose cumulative rate interval contains `target ∈ [0, total)`,
    /// together with the offset of `target` inside that site's interval.
    pub fn locate(&self, mut target: f64) -> (usize, f64) {
        let mut node = 1;
        while node < self.leaves {
            let left = self.tree[2 * node];
            if target < left {
                node *= 2;
            } else {
                target -= left;
                node = 2 * node + 1;
            }
        }
        let mut x = node - self.leaves;
        // Rounding can land on an empty trailing leaf; step back to the last
        // site with positive rate.
        while x >= self.rates.len() || self.tree[self.leaves + x] <= 0.0 {
            if x == 0 {
                break;
            }
            x -= 1;
            target = self.tree[self.leaves + x];
        }
        (x, target.min(self.tree[self.leaves + x]))
    }

    /// Relative gap between the stored total and a fresh left-to-right sum.
    pub fn relative_drift(&self) -> f64 {
        let fresh: f64 = self.rates.iter().map(|r| r.total()).sum();
        if fresh == 0.0 {
            self.total().abs()
        } else {
            (self.total() - fresh).abs() / fresh
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ZeroRange,
    Kawasaki,
    Killing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Fired { kind: EventKind, site: usize, time: f64 },
    /// Total rate zero: the chain is absorbed.
    Frozen,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub zero_range: u64,
    pub kawasaki: u64,
    pub killing: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.zero_range + self.kawasaki + self.killing
    }
}

/// JSON run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events: EventCounts,
    pub final_time: f64,
    pub final_n1: u64,
    pub final_n2: u64,
    pub wall_seconds: f64,
    pub absorbed: bool,
}

/// Snapshots recorded at the requested times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub configs: Vec<ParticleConfig>,
    pub summary: RunSummary,
}

/// The Markov chain together with its event index, clock and random stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ParticleConfig,
    sched: ScalingSchedule,
    spec: JumpRateSpec,
    channels: Channels,
    index: EventRateIndex,
    time: f64,
    counts: EventCounts,
    rng: SimRng,
}

impl Simulator {
    pub fn new(cfg: ParticleConfig, sched: ScalingSchedule, spec: JumpRateSpec, rng: SimRng) -> Self {
        Self::with_channels(cfg, sched, spec, Channels::default(), rng)
    }

    pub fn with_channels(
        cfg: ParticleConfig,
        sched: ScalingSchedule,
        spec: JumpRateSpec,
        channels: Channels,
        rng: SimRng,
    ) -> Self {
        let rates = (0..cfg.grid.sites())
            .map(|x| site_rates_unchecked(&cfg, &sched, &spec, channels, x))
            .collect();
        Self {
            index: EventRateIndex::new(rates),
            cfg,
            sched,
            spec,
            channels,
            time: 0.0,
            counts: EventCounts::default(),
            rng,
        }
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    pub fn index(&self) -> &EventRateIndex {
        &self.index
    }

    pub fn total_rate(&self) -> f64 {
        self.index.total()
    }

    #[inline]
    fn refresh(&mut self, x: usize) {
        let r = site_rates_unchecked(&self.cfg, &self.sched, &self.spec, self.channels, x);
        self.index.update(x, r);
    }

    fn refresh_with_neighbors(&mut self, x: usize) {
        self.refresh(x);
        for &y in self.cfg.grid.neighbors_unchecked(x).iter() {
            self.refresh(y);
        }
    }

    /// Draws the next holding time without applying anything; `None` when
    /// the chain is absorbed.
    fn holding_time(&mut self) -> Option<f64> {
        let total = self.index.total();
        if total <= 0.0 {
            return None;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        Some(e / total)
    }

    fn fire(&mut self) -> (EventKind, usize) {
        let total = self.index.total();
        let target = self.rng.random::<f64>() * total;
        let (x, offset) = self.index.locate(target);
        let r = self.index.rates(x);
        let grid = self.cfg.grid;
        if offset < r.zero_range || (r.kawasaki == 0.0 && r.killing == 0.0) {
            let nb = grid.neighbors_unchecked(x);
            let y = nb[self.rng.random_range(0..nb.len())];
            self.cfg.move_type1(x, y);
            self.refresh(x);
            self.refresh(y);
            self.counts.zero_range += 1;
            (EventKind::ZeroRange, x)
        } else if offset < r.zero_range + r.kawasaki || r.killing == 0.0 {
            let nb = grid.neighbors_unchecked(x);
            let free = nb.iter().filter(|&&y| self.cfg.eta2[y] == 0).count();
            let pick = self.rng.random_range(0..free);
            let y = *nb.iter().filter(|&&y| self.cfg.eta2[y] == 0).nth(pick).expect("free bond");
            self.cfg.move_type2(x, y);
            self.refresh_with_neighbors(x);
            self.refresh_with_neighbors(y);
            self.counts.kawasaki += 1;
            (EventKind::Kawasaki, x)
        } else {
            self.cfg.kill(x);
            self.refresh_with_neighbors(x);
            self.counts.killing += 1;
            (EventKind::Killing, x)
        }
    }

    /// Advances the chain by one event.
    pub fn step(&mut self) -> StepOutcome {
        let Some(dt) = self.holding_time() else {
            return StepOutcome::Frozen;
        };
        self.time += dt;
        let (kind, site) = self.fire();
        StepOutcome::Fired { kind, site, time: self.time }
    }

    /// Runs to `horizon`, recording the configuration at each snapshot time
    /// (the state after all events up to and including that time).
    pub fn run(&mut self, horizon: f64, snapshot_times: &[f64], budget: u64) -> Result<Trajectory> {
        if snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("snapshot times must be sorted"));
        }
        if snapshot_times.iter().any(|&t| t < self.time || t > horizon) {
            return Err(Error::domain(format!("snapshot times must lie in [{}, {horizon}]", self.time)));
        }
        let started = Instant::now();
        let start_events = self.counts.total();
        let mut times = Vec::with_capacity(snapshot_times.len());
        let mut configs = Vec::with_capacity(snapshot_times.len());
        let mut next = 0;
        let mut absorbed = false;
        loop {
            let Some(dt) = self.holding_time() else {
                absorbed = true;
                break;
            };
            let t_next = self.time + dt;
            while next < snapshot_times.len() && snapshot_times[next] < t_next {
                times.push(snapshot_times[next]);
                configs.push(self.cfg.clone());
                next += 1;
            }
            if t_next > horizon {
                break;
            }
            if self.counts.total() - start_events >= budget {
                return Err(Error::BudgetExceeded { budget, time: self.time, horizon });
            }
            self.time = t_next;
            self.fire();
        }
        // Absorbed chains jump straight to the horizon.
        while next < snapshot_times.len() {
            times.push(snapshot_times[next]);
            configs.push(self.cfg.clone());
            next += 1;
        }
        self.time = horizon;
        Ok(Trajectory {
            times,
            configs,
            summary: RunSummary {
                events: self.counts,
                final_time: self.time,
                final_n1: self.cfg.n1,
                final_n2: self.cfg.n2,
                wall_seconds: started.elapsed().as_secs_f64(),
                absorbed,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn site_rate_examples() {
        let g = grid1(10);
        let spec = JumpRateSpec::linear();
        let sched = ScalingSchedule::explicit(5.0, 0.5).unwrap();
        let mut eta1 = vec![0; 10];
        let mut eta2 = vec![0; 10];
        eta1[3] = 3;
        eta2[3] = 1;
        eta2[4] = 1;
        let cfg = ParticleConfig::new(g, eta1, eta2).unwrap();
        let r0 = site_rates(&cfg, &sched, &spec, 0).unwrap();
        assert_eq!((r0.zero_range, r0.killing), (0.0, 0.0));
        let r3 = site_rates(&cfg, &sched, &spec, 3).unwrap();
        assert_eq!(r3.zero_range, 600.0);
        assert_eq!(r3.killing, 15.0);
        // one free neighbor (site 2), ε N² = 50
        assert_eq!(r3.kawasaki, 50.0);
        assert!(site_rates(&cfg, &sched, &spec, 10).is_err());
    }

    #[test]
    fn two_site_ring_counts_both_bonds() {
        // On N = 2 both neighbors of a site are the same site, reached over
        // two distinct bonds, so each channel rate is doubled.
        let spec = JumpRateSpec::linear();
        let sched = ScalingSchedule::explicit(0.0, 0.5).unwrap();
        let cfg = ParticleConfig::new(grid1(2), vec![1, 0], vec![1, 0]).unwrap();
        let r = site_rates(&cfg, &sched, &spec, 0).unwrap();
        assert_eq!(r.zero_range, 4.0 * 2.0);
        assert_eq!(r.kawasaki, 0.5 * 4.0 * 2.0);
    }

    #[test]
    fn exclusion_is_enforced_on_construction() {
        assert!(ParticleConfig::new(grid1(3), vec![0; 3], vec![0, 2, 0]).is_err());
        assert!(ParticleConfig::new(grid1(3), vec![0; 2], vec![0; 3]).is_err());
    }

    #[test]
    fn schedule_rule_bounds() {
        let ok = ScheduleRule { delta1: 2.0, delta2: 1.0, alpha_eps: 0.5 };
        let s = ok.at(256).unwrap();
        assert!(s.k >= 1.0 && s.k <= ok.k_cap(256).unwrap() + 1e-15);
        assert!((s.epsilon - 1.0 / 16.0).abs() < 1e-15);
        let too_small = ScheduleRule { delta1: 0.5, delta2: 0.5, alpha_eps: 0.5 };
        let err = too_small.at(256).unwrap_err().to_string();
        assert!(err.contains("killing-rate cap"), "{err}");
        assert!(ScheduleRule { alpha_eps: 0.0, ..ok }.at(64).is_err());
        assert!(ScalingSchedule::explicit(1.0, 1.5).is_err());
        assert!(ScalingSchedule::explicit(-1.0, 0.5).is_err());
    }

    #[test]
    fn sum_tree_locates_and_updates() {
        let rates = (0..5)
            .map(|i| SiteRates { zero_range: i as f64, kawasaki: 0.0, killing: 0.0 })
            .collect();
        let mut idx = EventRateIndex::new(rates);
        assert_eq!(idx.total(), 10.0);
        assert_eq!(idx.locate(0.5).0, 1);
        assert_eq!(idx.locate(3.5).0, 3);
        assert_eq!(idx.locate(9.99).0, 4);
        idx.update(4, SiteRates::default());
        assert_eq!(idx.total(), 6.0);
        assert_eq!(idx.locate(5.999).0, 3);
        assert!(idx.relative_drift() < 1e-15);
    }

    #[test]
    fn frozen_state_is_reported_and_run_jumps_to_horizon() {
        let g = grid1(8);
        let cfg = ParticleConfig::empty(g);
        let sched = ScalingSchedule::explicit(1.0, 0.5).unwrap();
        let mut sim = Simulator::new(cfg, sched, JumpRateSpec::linear(), replica_stream(0, 0));
        assert_eq!(sim.step(), StepOutcome::Frozen);
        let traj = sim.run(1.0, &[0.5, 1.0], 10).unwrap();
        assert!(traj.summary.absorbed);
        assert_eq!(traj.configs.len(), 2);
        assert_eq!(sim.time(), 1.0);
    }

    #[test]
    fn only_kawasaki_fires_without_type_one() {
        let g = grid1(16);
        let eta2 = (0..16).map(|x| (x % 3 == 0) as u8).collect();
        let cfg = ParticleConfig::new(g, vec![0; 16], eta2).unwrap();
        let n2 = cfg.n2();
        let sched = ScalingSchedule::explicit(10.0, 0.5).unwrap();
        let mut sim = Simulator::new(cfg, sched, JumpRateSpec::linear(), replica_stream(4, 0));
        for _ in 0..10_000 {
            match sim.step() {
                StepOutcome::Fired { kind, .. } => assert_eq!(kind, EventKind::Kawasaki),
                StepOutcome::Frozen => panic!("exclusion particles cannot freeze here"),
            }
        }
        assert_eq!(sim.config().n2(), n2);
        assert!(sim.config().counts_consistent());
    }

    #[test]
    fn budget_exhaustion_aborts() {
        let g = grid1(16);
        let cfg = ParticleConfig::new(g, vec![2; 16], vec![0; 16]).unwrap();
        let sched = ScalingSchedule::explicit(0.0, 0.0).unwrap();
        let mut sim = Simulator::new(cfg, sched, JumpRateSpec::linear(), replica_stream(5, 0));
        let err = sim.run(10.0, &[], 100).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 100, .. }));
    }

    #[test]
    fn identical_seeds_give_identical_snapshots() {
        let g = TorusGrid::new(2, 8).unwrap();
        let eta1 = (0..64).map(|x| (x % 5) as u32).collect();
        let eta2 = (0..64).map(|x| (x % 2) as u8).collect();
        let cfg = ParticleConfig::new(g, eta1, eta2).unwrap();
        let sched = ScalingSchedule::explicit(3.0, 0.2).unwrap();
        let run = |seed| {
            let mut sim = Simulator::new(cfg.clone(), sched, JumpRateSpec::affine(1.0).unwrap(), replica_stream(seed, 9));
            sim.run(0.01, &[0.0025, 0.005, 0.01], u64::MAX).unwrap()
        };
        let (a, b, c) = (run(1), run(1), run(2));
        assert_eq!(a.configs, b.configs);
        assert_eq!(a.summary.events, b.summary.events);
        assert_ne!(a.configs, c.configs);
    }

    #[test]
    fn unsorted_snapshots_are_rejected() {
        let g = grid1(4);
        let sched = ScalingSchedule::explicit(0.0, 0.0).unwrap();
        let mut sim = Simulator::new(ParticleConfig::empty(g), sched, JumpRateSpec::linear(), replica_stream(0, 0));
        assert!(sim.run(1.0, &[0.5, 0.2], 10).is_err());
        assert!(sim.run(1.0, &[2.0], 10).is_err());
    }
}
