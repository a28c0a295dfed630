//! Distributional checks of the sampler and the Markov chain against
//! independent oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use zr_stefan::rng::replica_stream;
use zr_stefan::simulator::{Channels, ParticleConfig, ScalingSchedule, Simulator, StepOutcome};
use zr_stefan::zrmeasure::sample_product_config;
use zr_stefan::{JumpRateSpec, LatticeField, ThermoTable, TorusGrid};

/// Pearson statistic against `pmf`, pooling the tail so every expected
/// count is at least 5. Returns the upper-tail p-value.
fn chi2_p_value(counts: &[u64], pmf: &[f64], total: u64) -> f64 {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    let len = counts.len().max(pmf.len());
    for k in 0..len {
        o_acc += *counts.get(k).unwrap_or(&0) as f64;
        e_acc += pmf.get(k).copied().unwrap_or(0.0) * total as f64;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
        *o += o_acc;
        *e += e_acc;
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (obs.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn product_measure_marginals_pass_chi_squared() {
    for (spec, rho) in [(JumpRateSpec::linear(), 1.3), (JumpRateSpec::affine(1.0).unwrap(), 0.8)] {
        let table = ThermoTable::new(spec, 2.0).unwrap();
        let grid = TorusGrid::new(2, 200).unwrap();
        let u = LatticeField::constant(grid, rho);
        let v = LatticeField::constant(grid, 0.35);
        let mut rng = replica_stream(11, 0);
        let cfg = sample_product_config(&table, &u, &v, &mut rng).unwrap();
        let mut counts = vec![0u64; 64];
        for &k in cfg.eta1() {
            counts[k as usize] += 1;
        }
        let p = chi2_p_value(&counts, &table.pmf(rho).unwrap(), grid.sites() as u64);
        assert!(p > 1e-3, "{:?} at rho = {rho}: p = {p}", spec.kind());
        let ones = cfg.n2();
        let p2 = chi2_p_value(&[grid.sites() as u64 - ones, ones], &[0.65, 0.35], grid.sites() as u64);
        assert!(p2 > 1e-3, "Bernoulli marginal p = {p2}");
    }
}

#[test]
fn single_particle_holding_time_and_symmetric_walk() {
    let n = 16;
    let grid = TorusGrid::new(1, n).unwrap();
    let mut eta1 = vec![0; n];
    eta1[5] = 1;
    let cfg = ParticleConfig::new(grid, eta1, vec![0; n]).unwrap();
    let sched = ScalingSchedule::explicit(3.0, 0.5).unwrap();
    let mut sim = Simulator::new(cfg, sched, JumpRateSpec::linear(), replica_stream(3, 0));
    let events = 100_000;
    let (mut right, mut prev_time, mut pos) = (0u64, 0.0, 5usize);
    let mut sum = 0.0;
    for _ in 0..events {
        let StepOutcome::Fired { time, site, .. } = sim.step() else { panic!("chain absorbed") };
        assert_eq!(site, pos);
        sum += time - prev_time;
        prev_time = time;
        let next = sim.config().eta1().iter().position(|&k| k == 1).unwrap();
        if next == (pos + 1) % n {
            right += 1;
        } else {
            assert_eq!(next, (pos + n - 1) % n);
        }
        pos = next;
    }
    let mean = sum / events as f64;
    let expected = 1.0 / (2.0 * (n * n) as f64);
    let sigma = expected / (events as f64).sqrt();
    assert!((mean - expected).abs() <= 3.0 * sigma, "mean {mean:e}, expected {expected:e} ± {sigma:e}");
    let z = (right as f64 - events as f64 / 2.0) / (events as f64 / 4.0).sqrt();
    assert!(z.abs() <= 4.0, "right-jump z = {z}");
}

/// Kill times of independent sites `x` with `η₁(x) = n_x`, `η₂(x) = 1` and
/// rates `K n_x`, sorted: a pure-death chain.
fn pure_death_oracle(ns: &[u32], k: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut t: Vec<f64> = ns.iter().map(|&n| Exp::new(k * n as f64).unwrap().sample(rng)).collect();
    t.sort_by(f64::total_cmp);
    t
}

#[test]
fn kill_times_match_pure_death_chain() {
    let ns: Vec<u32> = vec![1, 2, 3, 5, 8];
    let k = 4.0;
    let grid = TorusGrid::new(1, ns.len()).unwrap();
    let sched = ScalingSchedule::explicit(k, 0.3).unwrap();
    let channels = Channels { zero_range: false, kawasaki: false, killing: true };
    let reps = 4000;
    let mut sim_times = vec![Vec::with_capacity(reps); ns.len()];
    let mut oracle_times = vec![Vec::with_capacity(reps); ns.len()];
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(99);
    for r in 0..reps {
        let cfg = ParticleConfig::new(grid, ns.clone(), vec![1; ns.len()]).unwrap();
        let mut sim = Simulator::with_channels(cfg, sched, JumpRateSpec::linear(), channels, replica_stream(5, r as u64));
        for slot in sim_times.iter_mut() {
            let StepOutcome::Fired { time, .. } = sim.step() else { panic!("absorbed early") };
            slot.push(time);
        }
        assert!(matches!(sim.step(), StepOutcome::Frozen));
        for (slot, t) in oracle_times.iter_mut().zip(pure_death_oracle(&ns, k, &mut oracle_rng)) {
            slot.push(t);
        }
    }
    // First kill is Exp(K Σ n): one-sample Kolmogorov-Smirnov at level 1e-3.
    let rate = k * ns.iter().sum::<u32>() as f64;
    let mut first = sim_times[0].clone();
    first.sort_by(f64::total_cmp);
    let d = first
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = 1.0 - (-rate * t).exp();
            (f - i as f64 / reps as f64).abs().max(((i + 1) as f64 / reps as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.95 / (reps as f64).sqrt(), "KS distance {d}");
    // Every order statistic agrees in mean with the oracle chain.
    for (j, (s, o)) in sim_times.iter().zip(&oracle_times).enumerate() {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let (ms, mo) = (mean(s), mean(o));
        let se = ((var(s, ms) + var(o, mo)) / reps as f64).sqrt();
        assert!((ms - mo).abs() <= 4.0 * se, "kill {j}: {ms} vs oracle {mo} (se {se})");
    }
}

#[test]
fn rate_index_is_consistent_after_a_million_events() {
    let grid = TorusGrid::new(2, 24).unwrap();
    let table = ThermoTable::new(JumpRateSpec::affine(1.0).unwrap(), 3.0).unwrap();
    let u = LatticeField::from_fn(grid, |p| 1.0 + 0.8 * (6.0 * p[0]).sin() * (6.0 * p[1]).cos());
    let v = LatticeField::from_fn(grid, |p| 0.5 + 0.3 * (4.0 * p[1]).sin());
    let mut rng = replica_stream(8, 0);
    let cfg = sample_product_config(&table, &u, &v, &mut rng).unwrap();
    let sched = ScalingSchedule::explicit(2.0, 0.7).unwrap();
    let mut sim = Simulator::new(cfg, sched, JumpRateSpec::affine(1.0).unwrap(), rng);
    for _ in 0..1_000_000 {
        if let StepOutcome::Frozen = sim.step() {
            break;
        }
    }
    assert!(sim.counts().total() == 1_000_000);
    assert!(sim.index().relative_drift() <= 1e-9, "drift {}", sim.index().relative_drift());
    assert!(sim.config().counts_consistent());
}

#[test]
fn without_killing_both_totals_are_constant() {
    let grid = TorusGrid::new(1, 32).unwrap();
    let table = ThermoTable::new(JumpRateSpec::linear(), 2.0).unwrap();
    let mut rng = replica_stream(21, 0);
    let cfg = sample_product_config(&table, &LatticeField::constant(grid, 1.5), &LatticeField::constant(grid, 0.5), &mut rng)
        .unwrap();
    let (n1, n2) = (cfg.n1(), cfg.n2());
    let mut sim = Simulator::new(cfg, ScalingSchedule::explicit(0.0, 1.0).unwrap(), JumpRateSpec::linear(), rng);
    for _ in 0..200_000 {
        sim.step();
        assert_eq!((sim.config().n1(), sim.config().n2()), (n1, n2));
    }
    assert_eq!(sim.counts().killing, 0);
}
