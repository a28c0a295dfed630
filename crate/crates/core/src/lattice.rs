//! Discrete torus geometry and the lattice operators shared by the particle
//! simulator and the deterministic solvers.
//!
//! Sites are indexed row-major over `{0, …, N-1}^d`; for `d = 2` the site
//! `(c0, c1)` has index `c0 * N + c1`. Axis `j` shifts coordinate `c_j`.

use std::io::{self, BufRead, Read, Write};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The discrete torus `T^d_N` with `d ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    side: usize,
}

/// Up to `2d ≤ 4` neighbor indices, ordered `x - e_1, x + e_1, x - e_2, x + e_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbors {
    buf: [usize; 4],
    len: usize,
}

impl Deref for Neighbors {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.buf[..self.len]
    }
}

impl TorusGrid {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if side < 2 {
            return Err(Error::config(format!("torus side must be at least 2, got {side}")));
        }
        Ok(Self { dim, side })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// `N^d` as a float, the volume normalisation of empirical measures.
    #[inline]
    pub fn volume(&self) -> f64 {
        self.sites() as f64
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.side
        } else {
            1
        }
    }

    /// Coordinates of site `x`; unused trailing entries are zero.
    pub fn coords(&self, x: usize) -> [usize; 2] {
        match self.dim {
            1 => [x, 0],
            _ => [x / self.side, x % self.side],
        }
    }

    pub fn index_of(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dim || coords.iter().any(|&c| c >= self.side) {
            return Err(Error::domain(format!(
                "coordinates {coords:?} invalid for d={}, N={}",
                self.dim, self.side
            )));
        }
        Ok(match self.dim {
            1 => coords[0],
            _ => coords[0] * self.side + coords[1],
        })
    }

    /// Macroscopic position `x/N ∈ [0,1)^d` of site `x`.
    pub fn position(&self, x: usize) -> [f64; 2] {
        let c = self.coords(x);
        let n = self.side as f64;
        [c[0] as f64 / n, c[1] as f64 / n]
    }

    /// `x ± e_axis` with periodic wrap.
    #[inline]
    pub fn shift(&self, x: usize, axis: usize, forward: bool) -> usize {
        let n = self.side;
        let stride = self.stride(axis);
        let c = (x / stride) % n;
        if forward {
            if c + 1 == n {
                x + stride - n * stride
            } else {
                x + stride
            }
        } else if c == 0 {
            x + (n - 1) * stride
        } else {
            x - stride
        }
    }

    /// Neighbors without bounds checking of `x`.
    #[inline]
    pub fn neighbors_unchecked(&self, x: usize) -> Neighbors {
        let mut buf = [0usize; 4];
        for axis in 0..self.dim {
            buf[2 * axis] = self.shift(x, axis, false);
            buf[2 * axis + 1] = self.shift(x, axis, true);
        }
        Neighbors { buf, len: 2 * self.dim }
    }

    pub fn neighbors(&self, x: usize) -> Result<Neighbors> {
        self.check_site(x)?;
        Ok(self.neighbors_unchecked(x))
    }

    pub fn check_site(&self, x: usize) -> Result<()> {
        if x >= self.sites() {
            return Err(Error::Index { index: x, sites: self.sites() });
        }
        Ok(())
    }

    /// Minimal torus distance between two sites in macroscopic units.
    pub fn torus_distance(&self, x: usize, y: usize) -> f64 {
        let (a, b) = (self.coords(x), self.coords(y));
        let n = self.side;
        let mut sq = 0.0;
        for j in 0..self.dim {
            let raw = a[j].abs_diff(b[j]);
            let d = raw.min(n - raw) as f64 / n as f64;
            sq += d * d;
        }
        sq.sqrt()
    }
}

/// A real value per site of a torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.sites()] }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(Error::domain(format!(
                "field has {} values, torus has {} sites",
                values.len(),
                grid.sites()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x/N)` at every site.
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.sites()).map(|x| f(grid.position(x))).collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `N^{-d} Σ_x f(x)`.
    pub fn mean(&self) -> f64 {
        self.sum() / self.grid.volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &LatticeField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `N² Σ_j [f(x+e_j) + f(x-e_j) - 2 f(x)]` written into `out`.
pub fn laplacian_into(grid: TorusGrid, f: &[f64], out: &mut [f64]) {
    let n2 = (grid.side() * grid.side()) as f64;
    let n = grid.side();
    match grid.dim() {
        1 => {
            for x in 0..n {
                let l = if x == 0 { n - 1 } else { x - 1 };
                let r = if x + 1 == n { 0 } else { x + 1 };
                out[x] = n2 * (f[l] + f[r] - 2.0 * f[x]);
            }
        }
        _ => {
            for x in 0..grid.sites() {
                let nb = grid.neighbors_unchecked(x);
                let s: f64 = nb.iter().map(|&y| f[y]).sum();
                out[x] = n2 * (s - 4.0 * f[x]);
            }
        }
    }
}

/// Discrete gradient: component `j` at `x` is `N (f(x+e_j) - f(x))`.
pub fn discrete_gradient(f: &LatticeField) -> Vec<LatticeField> {
    let grid = f.grid;
    let n = grid.side() as f64;
    (0..grid.dim())
        .map(|axis| {
            let values = (0..grid.sites())
                .map(|x| n * (f.values[grid.shift(x, axis, true)] - f.values[x]))
                .collect();
            LatticeField { grid, values }
        })
        .collect()
}

pub fn discrete_laplacian(f: &LatticeField) -> LatticeField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(f.grid, &f.values, &mut out);
    LatticeField { grid: f.grid, values: out }
}

/// `Σ_x |∇^N f(x)|²`.
pub fn gradient_energy(grid: TorusGrid, f: &[f64]) -> f64 {
    let n = grid.side() as f64;
    let mut acc = 0.0;
    for x in 0..grid.sites() {
        for axis in 0..grid.dim() {
            let d = n * (f[grid.shift(x, axis, true)] - f[x]);
            acc += d * d;
        }
    }
    acc
}

/// `max_x |∇^N f(x)|` (Euclidean norm over components).
pub fn gradient_max(grid: TorusGrid, f: &[f64]) -> f64 {
    let n = grid.side() as f64;
    (0..grid.sites())
        .map(|x| {
            (0..grid.dim())
                .map(|axis| {
                    let d = n * (f[grid.shift(x, axis, true)] - f[x]);
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Writes one row per site: `index, c0[, c1], <field columns…>`.
pub fn write_csv<W: Write>(mut w: W, columns: &[(&str, &LatticeField)]) -> Result<()> {
    let Some((_, first)) = columns.first() else {
        return Ok(());
    };
    let grid = first.grid;
    if columns.iter().any(|(_, f)| f.grid != grid) {
        return Err(Error::domain("CSV columns live on different grids"));
    }
    write!(w, "index,c0")?;
    if grid.dim() == 2 {
        write!(w, ",c1")?;
    }
    for (name, _) in columns {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for x in 0..grid.sites() {
        let c = grid.coords(x);
        write!(w, "{x},{}", c[0])?;
        if grid.dim() == 2 {
            write!(w, ",{}", c[1])?;
        }
        for (_, f) in columns {
            write!(w, ",{:e}", f.values[x])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Binary snapshot frame.
///
/// Layout (all little-endian): `u32 d`, `u32 N`, `u32 field_count`, then
/// `field_count` blocks of `N^d` `f64` values in site order. Frames may be
/// concatenated to form a trajectory stream.
pub fn write_snapshot<W: Write>(mut w: W, fields: &[&LatticeField]) -> Result<()> {
    let Some(first) = fields.first() else {
        return Err(Error::domain("snapshot needs at least one field"));
    };
    let grid = first.grid;
    if fields.iter().any(|f| f.grid != grid) {
        return Err(Error::domain("snapshot fields live on different grids"));
    }
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.side() as u32).to_le_bytes())?;
    w.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        for v in &f.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads the next frame; `Ok(None)` at a clean end of stream.
pub fn read_snapshot<R: BufRead>(r: &mut R) -> Result<Option<Vec<LatticeField>>> {
    if r.fill_buf()?.is_empty() {
        return Ok(None);
    }
    let dim = read_u32(r)? as usize;
    let side = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    let grid = TorusGrid::new(dim, side).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        let mut values = Vec::with_capacity(grid.sites());
        for _ in 0..grid.sites() {
            r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated frame: {e}")))?;
            values.push(f64::from_le_bytes(b));
        }
        out.push(LatticeField { grid, values });
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neighbors_wrap_in_one_dimension() {
        let g = TorusGrid::new(1, 5).unwrap();
        assert_eq!(&*g.neighbors(0).unwrap(), &[4, 1]);
        let g2 = TorusGrid::new(1, 2).unwrap();
        assert_eq!(&*g2.neighbors(0).unwrap(), &[1, 1]);
    }

    #[test]
    fn neighbors_wrap_in_two_dimensions() {
        let g = TorusGrid::new(2, 4).unwrap();
        let nb = g.neighbors(0).unwrap();
        let got: Vec<_> = nb.iter().map(|&y| g.coords(y)).collect();
        assert_eq!(got, vec![[3, 0], [1, 0], [0, 3], [0, 1]]);
    }

    #[test]
    fn out_of_range_site_is_an_index_error() {
        let g = TorusGrid::new(2, 3).unwrap();
        assert!(matches!(g.neighbors(9), Err(Error::Index { index: 9, sites: 9 })));
        assert!(TorusGrid::new(3, 4).is_err());
        assert!(TorusGrid::new(1, 1).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = TorusGrid::new(1, 4).unwrap();
        let f = LatticeField::from_values(g, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(discrete_gradient(&f)[0].values(), &[4.0, -4.0, 0.0, 0.0]);

        let c = LatticeField::constant(g, 2.5);
        assert!(discrete_gradient(&c)[0].values().iter().all(|&v| v == 0.0));

        let n = 8;
        let g = TorusGrid::new(1, n).unwrap();
        let saw = LatticeField::from_fn(g, |p| p[0]);
        let grad = &discrete_gradient(&saw)[0];
        for x in 0..n - 1 {
            assert!((grad.values()[x] - 1.0).abs() < 1e-12);
        }
        assert!((grad.values()[n - 1] - (1.0 - n as f64)).abs() < 1e-12);
    }

    #[test]
    fn laplacian_examples() {
        let g = TorusGrid::new(1, 4).unwrap();
        let f = LatticeField::from_values(g, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(discrete_laplacian(&f).values(), &[-32.0, 16.0, 0.0, 16.0]);
        let c = LatticeField::constant(TorusGrid::new(2, 5).unwrap(), 3.0);
        assert!(discrete_laplacian(&c).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snapshot_and_csv_round_trip() {
        let g = TorusGrid::new(2, 3).unwrap();
        let a = LatticeField::from_fn(g, |p| p[0] + 10.0 * p[1]);
        let b = a.map(|v| -v);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &[&a, &b]).unwrap();
        write_snapshot(&mut buf, &[&b]).unwrap();
        assert_eq!(&buf[..12], &[2, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0]);
        let mut r = io::Cursor::new(buf);
        let f1 = read_snapshot(&mut r).unwrap().unwrap();
        let f2 = read_snapshot(&mut r).unwrap().unwrap();
        assert!(read_snapshot(&mut r).unwrap().is_none());
        assert_eq!(f1, vec![a.clone(), b.clone()]);
        assert_eq!(f2, vec![b]);

        let mut csv = Vec::new();
        write_csv(&mut csv, &[("u", &a)]).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("index,c0,c1,u\n"));
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let g = TorusGrid::new(1, 4).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &[&LatticeField::zeros(g)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_snapshot(&mut io::Cursor::new(buf)), Err(Error::Format(_))));
    }

    fn grid_and_field() -> impl Strategy<Value = (TorusGrid, Vec<f64>, Vec<f64>)> {
        (1usize..=2, 2usize..12).prop_flat_map(|(d, n)| {
            let g = TorusGrid::new(d, n).unwrap();
            let m = g.sites();
            (
                Just(g),
                prop::collection::vec(-10.0f64..10.0, m),
                prop::collection::vec(-10.0f64..10.0, m),
            )
        })
    }

    proptest! {
        #[test]
        fn neighbor_relation_is_symmetric(d in 1usize..=2, n in 2usize..20, seed in 0usize..10_000) {
            let g = TorusGrid::new(d, n).unwrap();
            let x = seed % g.sites();
            let nb = g.neighbors(x).unwrap();
            prop_assert_eq!(nb.len(), 2 * d);
            for &y in nb.iter() {
                prop_assert!(g.neighbors(y).unwrap().contains(&x));
            }
        }

        #[test]
        fn laplacian_sums_to_zero((g, f, _) in grid_and_field()) {
            let f = LatticeField::from_values(g, f).unwrap();
            let lap = discrete_laplacian(&f);
            let scale: f64 = lap.values().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(lap.sum().abs() <= 1e-12 * scale);
        }

        #[test]
        fn summation_by_parts((g, f, h) in grid_and_field()) {
            let f = LatticeField::from_values(g, f).unwrap();
            let h = LatticeField::from_values(g, h).unwrap();
            let lap = discrete_laplacian(&f);
            let lhs: f64 = h.values().iter().zip(lap.values()).map(|(a, b)| a * b).sum();
            let gf = discrete_gradient(&f);
            let gh = discrete_gradient(&h);
            let rhs: f64 = -(0..g.dim())
                .map(|j| gf[j].values().iter().zip(gh[j].values()).map(|(a, b)| a * b).sum::<f64>())
                .sum::<f64>();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        }
    }
}
