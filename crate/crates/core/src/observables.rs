//! Empirical measures, block averages, rescaled fluctuation fields and
//! replica statistics.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::lattice::{LatticeField, TorusGrid};
use crate::simulator::{ParticleConfig, Species};
use crate::zrmeasure::{chi2, ThermoTable};
use crate::{Error, Result};

/// Smooth periodic test functions on `T^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    Cos { axis: usize, mode: u32 },
    Sin { axis: usize, mode: u32 },
    /// `exp(1 - 1/(1 - (r/w)²))` for torus distance `r < w` from `center`.
    Bump { center: [f64; 2], width: f64 },
}

/// Signed periodic offset `θ - c` in `[-1/2, 1/2)`.
#[inline]
pub(crate) fn periodic_offset(theta: f64, c: f64) -> f64 {
    let d = theta - c;
    d - d.round()
}

/// The compactly supported smooth bump profile on `[0, ∞)`.
#[inline]
pub(crate) fn smooth_bump(r: f64, width: f64) -> f64 {
    let s = r / width;
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("const({value})"),
            TestFunction::Cos { axis, mode } => format!("cos{}({})", 2 * mode, axis + 1),
            TestFunction::Sin { axis, mode } => format!("sin{}({})", 2 * mode, axis + 1),
            TestFunction::Bump { center, width } => format!("bump({},{};{width})", center[0], center[1]),
        }
    }

    pub fn eval(&self, theta: [f64; 2], dim: usize) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Cos { axis, mode } => (2.0 * PI * mode as f64 * theta[axis]).cos(),
            TestFunction::Sin { axis, mode } => (2.0 * PI * mode as f64 * theta[axis]).sin(),
            TestFunction::Bump { center, width } => {
                let r2: f64 = (0..dim).map(|j| periodic_offset(theta[j], center[j]).powi(2)).sum();
                smooth_bump(r2.sqrt(), width)
            }
        }
    }

    /// Lattice sampling `ψ(x/N)`.
    pub fn sample(&self, grid: TorusGrid) -> LatticeField {
        LatticeField::from_fn(grid, |p| self.eval(p, grid.dim()))
    }

    /// Four-member catalog used by the stationarity and hydrodynamic checks.
    pub fn catalog(dim: usize) -> Vec<TestFunction> {
        let _ = dim;
        vec![
            TestFunction::Constant { value: 1.0 },
            TestFunction::Cos { axis: 0, mode: 1 },
            TestFunction::Sin { axis: 0, mode: 1 },
            TestFunction::Bump { center: [0.5, 0.5], width: 0.3 },
        ]
    }

    /// Eight spatial modes for the weak-form residual.
    pub fn weak_form_catalog(dim: usize) -> Vec<TestFunction> {
        let mut out = vec![TestFunction::Constant { value: 1.0 }];
        for axis in 0..dim {
            out.push(TestFunction::Cos { axis, mode: 1 });
            out.push(TestFunction::Sin { axis, mode: 1 });
            out.push(TestFunction::Cos { axis, mode: 2 });
        }
        out.push(TestFunction::Bump { center: [0.3, 0.5], width: 0.25 });
        out.push(TestFunction::Bump { center: [0.7, 0.5], width: 0.2 });
        if dim == 1 {
            out.push(TestFunction::Sin { axis: 0, mode: 2 });
            out.push(TestFunction::Bump { center: [0.5, 0.5], width: 0.35 });
        }
        out
    }
}

/// `N^{-d} Σ_x η_i(x) ψ(x/N)` with `ψ` already sampled on the lattice.
pub fn empirical_pairing(cfg: &ParticleConfig, psi: &LatticeField, species: Species) -> Result<f64> {
    if psi.grid() != cfg.grid() {
        return Err(Error::domain("test function sampled on a different grid"));
    }
    let grid = cfg.grid();
    let acc: f64 = psi
        .values()
        .iter()
        .enumerate()
        .map(|(x, &p)| cfg.occupation(species, x) * p)
        .sum();
    Ok(acc / grid.volume())
}

fn check_box(grid: TorusGrid, radius: usize) -> Result<()> {
    if 2 * radius + 1 > grid.side() {
        return Err(Error::domain(format!(
            "box of radius {radius} does not fit in a torus of side {}",
            grid.side()
        )));
    }
    Ok(())
}

/// Average of `η_i` over the box `x + [-ℓ, ℓ]^d`.
pub fn block_average(cfg: &ParticleConfig, species: Species, x: usize, radius: usize) -> Result<f64> {
    let grid = cfg.grid();
    grid.check_site(x)?;
    check_box(grid, radius)?;
    let n = grid.side();
    let c = grid.coords(x);
    let l = radius as isize;
    let wrap = |a: usize, o: isize| ((a as isize + o).rem_euclid(n as isize)) as usize;
    let mut acc = 0.0;
    match grid.dim() {
        1 => {
            for o in -l..=l {
                acc += cfg.occupation(species, wrap(c[0], o));
            }
        }
        _ => {
            for o0 in -l..=l {
                for o1 in -l..=l {
                    acc += cfg.occupation(species, wrap(c[0], o0) * n + wrap(c[1], o1));
                }
            }
        }
    }
    Ok(acc / ((2 * radius + 1).pow(grid.dim() as u32)) as f64)
}

/// All block averages of one species, via periodic running sums.
pub fn block_profile(cfg: &ParticleConfig, species: Species, radius: usize) -> Result<LatticeField> {
    let grid = cfg.grid();
    check_box(grid, radius)?;
    let n = grid.side();
    let raw = cfg.field(species);
    let window = |line: &[f64]| -> Vec<f64> {
        let len = line.len();
        let mut out = vec![0.0; len];
        let mut s: f64 = (0..=2 * radius).map(|o| line[(o + len - radius) % len]).sum();
        out[0] = s;
        for x in 1..len {
            s += line[(x + radius) % len] - line[(x + len - radius - 1) % len];
            out[x] = s;
        }
        out
    };
    let count = ((2 * radius + 1).pow(grid.dim() as u32)) as f64;
    let values = match grid.dim() {
        1 => window(raw.values()),
        _ => {
            let mut rows = vec![0.0; n * n];
            for c0 in 0..n {
                let line = window(&raw.values()[c0 * n..(c0 + 1) * n]);
                rows[c0 * n..(c0 + 1) * n].copy_from_slice(&line);
            }
            let mut out = vec![0.0; n * n];
            for c1 in 0..n {
                let col: Vec<f64> = (0..n).map(|c0| rows[c0 * n + c1]).collect();
                for (c0, v) in window(&col).into_iter().enumerate() {
                    out[c0 * n + c1] = v;
                }
            }
            out
        }
    };
    LatticeField::from_values(grid, values.into_iter().map(|s| s / count).collect())
}

/// Mesoscopic default radius `round(N^{1/(2d)})`, capped to fit the torus.
pub fn default_block_radius(grid: TorusGrid) -> usize {
    let l = (grid.side() as f64).powf(1.0 / (2.0 * grid.dim() as f64)).round() as usize;
    l.min((grid.side() - 1) / 2)
}

/// Rescaled fields `ω₁ = (η₁ - u)/χ₁(u)` and `ω₂ = (η₂ - v)/χ₂(v)`.
pub fn omega_fields(
    cfg: &ParticleConfig,
    u: &LatticeField,
    v: &LatticeField,
    table: &ThermoTable,
) -> Result<(LatticeField, LatticeField)> {
    let grid = cfg.grid();
    if u.grid() != grid || v.grid() != grid {
        return Err(Error::domain("reference fields live on a different grid"));
    }
    let mut w1 = Vec::with_capacity(grid.sites());
    let mut w2 = Vec::with_capacity(grid.sites());
    for x in 0..grid.sites() {
        let (ux, vx) = (u.values()[x], v.values()[x]);
        let c1 = if ux > 0.0 { table.chi1(ux)? } else { 0.0 };
        if c1 <= 0.0 {
            return Err(Error::domain(format!("chi1(u) vanishes at site {x} (u = {ux})")));
        }
        let c2 = chi2(vx)?;
        if c2 <= 0.0 {
            return Err(Error::domain(format!("chi2(v) vanishes at site {x} (v = {vx})")));
        }
        w1.push((cfg.occupation(Species::One, x) - ux) / c1);
        w2.push((cfg.occupation(Species::Two, x) - vx) / c2);
    }
    Ok((LatticeField::from_values(grid, w1)?, LatticeField::from_values(grid, w2)?))
}

/// `N^{-d} Σ_x |η₁^ℓ(x) - u(x)|`.
pub fn l1_profile_distance(cfg: &ParticleConfig, u: &LatticeField, radius: usize) -> Result<f64> {
    let blocks = block_profile(cfg, Species::One, radius)?;
    l1_distance(&blocks, u)
}

/// `N^{-d} Σ_x |a(x) - b(x)|`.
pub fn l1_distance(a: &LatticeField, b: &LatticeField) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::domain("fields live on different grids"));
    }
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / a.grid().volume())
}

/// Trapezoidal `∫ f dt` over a (possibly non-uniform) grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Mergeable running mean/variance (Welford with Chan's pairwise merge).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl ReplicaStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &ReplicaStats) -> ReplicaStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / n as f64;
        ReplicaStats { count: n, mean, m2 }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::default();
        for &x in xs {
            s.push(x);
        }
        s
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// One row of an observable time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: f64,
    pub observable: String,
    pub stats: ReplicaStats,
}

/// CSV `time,observable,mean,se,count`.
pub fn write_series_csv<W: Write>(mut w: W, points: &[SeriesPoint]) -> Result<()> {
    writeln!(w, "time,observable,mean,se,count")?;
    for p in points {
        writeln!(
            w,
            "{:e},{},{:e},{:e},{}",
            p.time,
            p.observable,
            p.stats.mean(),
            p.stats.std_error(),
            p.stats.count()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;
    use crate::zrmeasure::{sample_product_config, JumpRateSpec};
    use proptest::prelude::*;

    fn cfg1(eta1: Vec<u32>) -> ParticleConfig {
        let n = eta1.len();
        ParticleConfig::new(TorusGrid::new(1, n).unwrap(), eta1, vec![0; n]).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let cfg = cfg1(vec![2, 0, 1, 0]);
        let g = cfg.grid();
        let one = TestFunction::Constant { value: 1.0 }.sample(g);
        assert_eq!(empirical_pairing(&cfg, &one, Species::One).unwrap(), 0.75);
        assert_eq!(empirical_pairing(&cfg, &one, Species::Two).unwrap(), 0.0);
        let cos = TestFunction::Cos { axis: 0, mode: 1 }.sample(g);
        assert!((empirical_pairing(&cfg, &cos, Species::One).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn block_average_examples() {
        let mut eta = vec![0; 8];
        eta[0] = 3;
        eta[1] = 1;
        let cfg = cfg1(eta);
        assert_eq!(block_average(&cfg, Species::One, 0, 0).unwrap(), 3.0);
        assert!((block_average(&cfg, Species::One, 0, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(block_average(&cfg, Species::One, 0, 4).is_err());
        let c = cfg1(vec![5; 9]);
        assert_eq!(block_average(&c, Species::One, 4, 2).unwrap(), 5.0);
    }

    #[test]
    fn maximal_block_is_global_density() {
        let cfg = cfg1(vec![1, 4, 0, 2, 7, 0, 0, 3, 1]);
        let prof = block_profile(&cfg, Species::One, 4).unwrap();
        for &v in prof.values() {
            assert!((v - 18.0 / 9.0).abs() < 1e-14);
        }
    }

    #[test]
    fn omega_examples() {
        let g = TorusGrid::new(1, 4).unwrap();
        let lin = ThermoTable::new(JumpRateSpec::linear(), 10.0).unwrap();
        let cfg = ParticleConfig::new(g, vec![4, 2, 2, 2], vec![1, 0, 0, 0]).unwrap();
        let u = LatticeField::constant(g, 2.0);
        let v = LatticeField::constant(g, 0.5);
        let (w1, w2) = omega_fields(&cfg, &u, &v, &lin).unwrap();
        assert!((w1.values()[0] - 1.0).abs() < 1e-12);
        assert!(w1.values()[1].abs() < 1e-12);
        assert!((w2.values()[0] - 2.0).abs() < 1e-12);
        let err = omega_fields(&cfg, &LatticeField::zeros(g), &v, &lin).unwrap_err();
        assert!(err.to_string().contains("site 0"));
        assert!(omega_fields(&cfg, &u, &LatticeField::constant(g, 1.0), &lin).is_err());
    }

    #[test]
    fn omega_replica_mean_vanishes() {
        let g = TorusGrid::new(1, 16).unwrap();
        let aff = ThermoTable::new(JumpRateSpec::affine(1.0).unwrap(), 2.0).unwrap();
        let u = LatticeField::from_fn(g, |p| 0.5 + 0.4 * (2.0 * PI * p[0]).cos());
        let v = LatticeField::from_fn(g, |p| 0.3 + 0.2 * (2.0 * PI * p[0]).sin());
        let reps = 10_000;
        let mut s1 = vec![ReplicaStats::default(); 16];
        for r in 0..reps {
            let mut rng = replica_stream(21, r);
            let cfg = sample_product_config(&aff, &u, &v, &mut rng).unwrap();
            let (w1, _) = omega_fields(&cfg, &u, &v, &aff).unwrap();
            for (s, &w) in s1.iter_mut().zip(w1.values()) {
                s.push(w);
            }
        }
        for s in &s1 {
            assert!(s.mean().abs() < 4.5 * s.std_error(), "mean {} se {}", s.mean(), s.std_error());
        }
    }

    #[test]
    fn l1_distance_examples() {
        let g = TorusGrid::new(1, 9).unwrap();
        let u = LatticeField::constant(g, 2.0);
        let cfg = ParticleConfig::new(g, vec![2; 9], vec![0; 9]).unwrap();
        assert_eq!(l1_profile_distance(&cfg, &u, 2).unwrap(), 0.0);
        let empty = ParticleConfig::empty(g);
        assert!((l1_profile_distance(&empty, &LatticeField::constant(g, 0.7), 1).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn stats_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let all = ReplicaStats::from_slice(&xs);
        let merged = ReplicaStats::from_slice(&xs[..31]).merge(&ReplicaStats::from_slice(&xs[31..]));
        assert_eq!(merged.count(), 100);
        assert!((merged.mean() - all.mean()).abs() < 1e-13);
        assert!((merged.variance() - all.variance()).abs() < 1e-12);
        assert_eq!(ReplicaStats::default().std_error(), 0.0);
    }

    #[test]
    fn series_csv_layout() {
        let mut buf = Vec::new();
        let stats = ReplicaStats::from_slice(&[1.0, 2.0]);
        write_series_csv(&mut buf, &[SeriesPoint { time: 0.5, observable: "gap".into(), stats }]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,observable,mean,se,count\n5e-1,gap,1.5e0,"));
    }

    fn config_strategy() -> impl Strategy<Value = (ParticleConfig, ParticleConfig)> {
        (1usize..=2, 3usize..9).prop_flat_map(|(d, n)| {
            let g = TorusGrid::new(d, n).unwrap();
            let m = g.sites();
            (prop::collection::vec(0u32..6, m), prop::collection::vec(0u32..6, m)).prop_map(move |(a, b)| {
                (
                    ParticleConfig::new(g, a, vec![0; m]).unwrap(),
                    ParticleConfig::new(g, b, vec![0; m]).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn pairing_linear_and_additive((a, b) in config_strategy(), s in -3.0f64..3.0) {
            let g = a.grid();
            let p1 = TestFunction::Cos { axis: 0, mode: 1 }.sample(g);
            let p2 = TestFunction::Bump { center: [0.4, 0.6], width: 0.3 }.sample(g);
            let combo = LatticeField::from_values(
                g,
                p1.values().iter().zip(p2.values()).map(|(x, y)| x + s * y).collect(),
            ).unwrap();
            let lhs = empirical_pairing(&a, &combo, Species::One).unwrap();
            let rhs = empirical_pairing(&a, &p1, Species::One).unwrap() + s * empirical_pairing(&a, &p2, Species::One).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);

            let sum: Vec<u32> = a.eta1().iter().zip(b.eta1()).map(|(x, y)| x + y).collect();
            let ab = ParticleConfig::new(g, sum, vec![0; g.sites()]).unwrap();
            let lhs = empirical_pairing(&ab, &p2, Species::One).unwrap();
            let rhs = empirical_pairing(&a, &p2, Species::One).unwrap() + empirical_pairing(&b, &p2, Species::One).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn block_sums_preserve_totals((a, _) in config_strategy(), l in 0usize..2) {
            let g = a.grid();
            let prof = block_profile(&a, Species::One, l).unwrap();
            prop_assert!((prof.sum() - a.n1() as f64).abs() < 1e-9);
            for x in 0..g.sites() {
                prop_assert!((prof.values()[x] - block_average(&a, Species::One, x, l).unwrap()).abs() < 1e-12);
            }
        }
    }
}
