//! Cell-centred tensor grids closed under a reflection group, quadrature,
//! and grid functions.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reflection::{euclid, ReflectionGroup};

/// A grid point must land within `ACTION_TOL · spacing` of its image.
const ACTION_TOL: f64 = 1e-9;

/// Uniform midpoint-rule grid on an origin-centred box.
///
/// Points are cell centres `−L + (i + ½)·h`, `h = 2L/n`, indexed row-major
/// with the last axis fastest. With `n` odd the origin is a grid point.
#[derive(Debug)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_widths: Vec<f64>,
    spacing: Vec<f64>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    group: Arc<ReflectionGroup>,
    action: Vec<Vec<usize>>,
    distances: OnceLock<Vec<f64>>,
}

impl Grid {
    pub fn new(half_widths: &[f64], points_per_axis: usize, group: Arc<ReflectionGroup>) -> Result<Arc<Self>> {
        let dim = group.dim();
        if half_widths.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: half_widths.len() });
        }
        if points_per_axis % 2 == 0 || points_per_axis == 0 {
            return Err(Error::InvalidGrid(format!("points per axis must be odd, got {points_per_axis}")));
        }
        if half_widths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidGrid("half-widths must be positive".into()));
        }
        let n = points_per_axis;
        let total = n.checked_pow(dim as u32).ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        let spacing: Vec<f64> = half_widths.iter().map(|l| 2.0 * l / n as f64).collect();
        let cell: f64 = spacing.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            points.push(
                (0..dim)
                    .map(|a| -half_widths[a] + (idx[a] as f64 + 0.5) * spacing[a])
                    .collect::<Vec<_>>(),
            );
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
            }
        }
        let weights = vec![cell; total];

        let mut grid = Grid {
            dim,
            n,
            half_widths: half_widths.to_vec(),
            spacing,
            points,
            weights,
            group,
            action: Vec::new(),
            distances: OnceLock::new(),
        };
        grid.action = grid.build_action()?;
        grid.check_action_homomorphism()?;
        Ok(Arc::new(grid))
    }

    /// Same half-width on every axis.
    pub fn cube(half_width: f64, points_per_axis: usize, group: Arc<ReflectionGroup>) -> Result<Arc<Self>> {
        let dim = group.dim();
        Grid::new(&vec![half_width; dim], points_per_axis, group)
    }

    fn build_action(&self) -> Result<Vec<Vec<usize>>> {
        let g = &self.group;
        (0..g.order())
            .map(|s| {
                let mut perm = vec![usize::MAX; self.len()];
                let mut hit = vec![false; self.len()];
                for (i, p) in self.points.iter().enumerate() {
                    let img = g.act(s, p);
                    let j = self
                        .locate(&img)
                        .filter(|&j| euclid(&img, &self.points[j]) <= ACTION_TOL * self.min_spacing())
                        .ok_or(Error::IncompatibleGroup { element: s, point: i })?;
                    if hit[j] {
                        return Err(Error::IncompatibleGroup { element: s, point: i });
                    }
                    hit[j] = true;
                    perm[i] = j;
                }
                Ok(perm)
            })
            .collect()
    }

    fn check_action_homomorphism(&self) -> Result<()> {
        let g = &self.group;
        for s in 0..g.order() {
            for t in 0..g.order() {
                let st = g.product_index(s, t);
                for i in 0..self.len() {
                    if self.action[st][i] != self.action[s][self.action[t][i]] {
                        return Err(Error::IncompatibleGroup { element: st, point: i });
                    }
                }
            }
        }
        Ok(())
    }

    /// Index of the grid point nearest to `x`, if `x` lies inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for a in 0..self.dim {
            let t = ((x[a] + self.half_widths[a]) / self.spacing[a] - 0.5).round();
            if t < 0.0 || t >= self.n as f64 {
                return None;
            }
            idx = idx * self.n + t as usize;
        }
        Some(idx)
    }

    /// Per-axis integer coordinates of point `i`.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = i % self.n;
            i /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &m| acc * self.n + m)
    }

    /// Point reached from `i` by moving `delta` cells along each axis.
    pub fn shifted(&self, i: usize, delta: &[i64]) -> Option<usize> {
        let mut m = self.multi_index(i);
        for (a, d) in delta.iter().enumerate() {
            let t = m[a] as i64 + d;
            if t < 0 || t >= self.n as i64 {
                return None;
            }
            m[a] = t as usize;
        }
        Some(self.flat_index(&m))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_half_width(&self) -> f64 {
        self.half_widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|l| 2.0 * l).product()
    }

    pub fn group(&self) -> &Arc<ReflectionGroup> {
        &self.group
    }

    /// `action(σ)[i] = j` with `σ(p_i) = p_j`.
    pub fn action(&self, element: usize) -> &[usize] {
        &self.action[element]
    }

    pub fn origin_index(&self) -> Option<usize> {
        let zero = vec![0.0; self.dim];
        self.locate(&zero).filter(|&i| euclid(&self.points[i], &zero) <= ACTION_TOL * self.min_spacing())
    }

    /// Orbit distance between grid points, through the action table. The
    /// value depends only on the two orbits and is symmetric, bit for bit.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if let Some(d) = self.distances.get() {
            return d[i * self.len() + j];
        }
        let (a, b) = (self.orbit_rep(i), self.orbit_rep(j));
        self.distance_uncached(a, b).min(self.distance_uncached(b, a))
    }

    fn orbit_rep(&self, i: usize) -> usize {
        self.action.iter().map(|perm| perm[i]).min().unwrap_or(i)
    }

    fn distance_uncached(&self, i: usize, j: usize) -> f64 {
        let p = &self.points[i];
        self.action
            .iter()
            .map(|perm| euclid(p, &self.points[perm[j]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Dense `d(x_i, x_j)` table, built on first use.
    pub fn distance_matrix(&self) -> &[f64] {
        self.distances.get_or_init(|| {
            let n = self.len();
            let reps: Vec<usize> = (0..n).map(|i| self.orbit_rep(i)).collect();
            let mut d = vec![0.0; n * n];
            d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                if reps[i] == i {
                    for (j, v) in row.iter_mut().enumerate() {
                        if reps[j] == j {
                            *v = self.distance_uncached(i, j);
                        }
                    }
                }
            });
            for i in 0..n {
                for j in 0..i {
                    let v = d[i * n + j].min(d[j * n + i]);
                    d[i * n + j] = v;
                    d[j * n + i] = v;
                }
            }
            // spread representative values over whole orbits
            let rep_rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d[reps[i] * n + reps[j]]).collect()).collect();
            for (i, row) in rep_rows.into_iter().enumerate() {
                d[i * n..(i + 1) * n].copy_from_slice(&row);
            }
            d
        })
    }

    /// Distance from point `i` to the box boundary.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        self.points[i]
            .iter()
            .zip(&self.half_widths)
            .map(|(x, l)| l - x.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Points at least `margin` away from the box boundary.
    pub fn interior_mask(&self, margin: f64) -> Vec<bool> {
        (0..self.len()).map(|i| self.boundary_distance(i) >= margin - 1e-12).collect()
    }

    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other)
            || (self.dim == other.dim
                && self.n == other.n
                && self.half_widths == other.half_widths
                && *self.group == *other.group)
    }
}

/// Which norm to compute in [`GridFunction::norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    /// Measure of `{|f| > λ}`.
    WeakL1(f64),
}

/// Real samples on a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at point {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.points().iter().map(|p| f(p)).collect();
        GridFunction { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        GridFunction { grid, values: vec![c; n] }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        GridFunction::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Weighted inner product `Σ w_i f_i g_i`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(weighted_dot(self.grid.weights(), &self.values, &other.values))
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(v, w)| v * w).sum()
    }

    pub fn norm(&self, which: NormKind) -> f64 {
        let w = self.grid.weights();
        match which {
            NormKind::L1 => self.values.iter().zip(w).map(|(v, w)| v.abs() * w).sum(),
            NormKind::L2 => weighted_dot(w, &self.values, &self.values).sqrt(),
            NormKind::Linf => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            NormKind::WeakL1(lambda) => {
                self.values.iter().zip(w).filter(|(v, _)| v.abs() > lambda).map(|(_, w)| w).sum()
            }
        }
    }

    /// Group average `|G|⁻¹ Σ_σ f∘σ`.
    pub fn symmetrize(&self) -> Self {
        let g = self.grid.group().order();
        let mut out = vec![0.0; self.values.len()];
        for s in 0..g {
            let perm = self.grid.action(s);
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.values[perm[i]];
            }
        }
        let inv = 1.0 / g as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        // make orbit values bitwise equal
        for i in 0..out.len() {
            let m = (0..g).map(|s| self.grid.action(s)[i]).min().unwrap_or(i);
            out[i] = out[m];
        }
        GridFunction { grid: self.grid.clone(), values: out }
    }

    /// `max_{σ,i} |f(p_i) − f(σ p_i)|`.
    pub fn invariance_defect(&self) -> f64 {
        self.invariance_witness().0
    }

    /// Defect together with the offending pair of indices.
    pub fn invariance_witness(&self) -> (f64, usize, usize) {
        let mut best = (0.0, 0, 0);
        for s in 0..self.grid.group().order() {
            let perm = self.grid.action(s);
            for (i, &j) in perm.iter().enumerate() {
                let d = (self.values[i] - self.values[j]).abs();
                if d > best.0 {
                    best = (d, i, j);
                }
            }
        }
        best
    }

    /// Header `x1,…,xN,value`, one row per point in grid order.
    pub fn to_csv(&self) -> String {
        let dim = self.grid.dim();
        let mut s = String::new();
        for a in 1..=dim {
            let _ = write!(s, "x{a},");
        }
        s.push_str("value\n");
        for (p, v) in self.grid.points().iter().zip(&self.values) {
            for x in p {
                let _ = write!(s, "{},", fmt_e(*x));
            }
            let _ = writeln!(s, "{}", fmt_e(*v));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses a CSV written by [`GridFunction::to_csv`]; coordinates must
    /// match `grid` point by point.
    pub fn read_csv(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let perr = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        if header.split(',').count() != grid.dim() + 1 {
            return Err(perr(1, format!("expected {} columns", grid.dim() + 1)));
        }
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| perr(k + 2, e.to_string()))?;
            if cols.len() != grid.dim() + 1 {
                return Err(perr(k + 2, "wrong column count".into()));
            }
            let i = values.len();
            if i >= grid.len() || euclid(&cols[..grid.dim()], grid.point(i)) > 1e-9 * grid.min_spacing().max(1.0) {
                return Err(perr(k + 2, "coordinates do not match the grid".into()));
            }
            values.push(cols[grid.dim()]);
        }
        GridFunction::new(grid, values)
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// C-style `%.12e`.
pub fn fmt_e(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::{RootSystem, DEFAULT_MAX_ORDER};

    fn group(name: &str, dim: usize) -> Arc<ReflectionGroup> {
        Arc::new(ReflectionGroup::generate(&RootSystem::preset(name, dim).unwrap(), DEFAULT_MAX_ORDER).unwrap())
    }

    #[test]
    fn one_dimensional_sign_grid() {
        let g = Grid::cube(4.0, 9, group("A1", 1)).unwrap();
        assert_eq!(g.len(), 9);
        assert!((g.spacing()[0] - 8.0 / 9.0).abs() < 1e-15);
        assert!(g.weights().iter().all(|&w| (w - 8.0 / 9.0).abs() < 1e-15));
        assert!((g.weights().iter().sum::<f64>() - 8.0).abs() < 1e-12);
        let minus = g.action(1);
        for i in 0..9 {
            assert_eq!(minus[i], 8 - i);
        }
        assert_eq!(g.origin_index(), Some(4));
    }

    #[test]
    fn b2_accepted_on_square_a2_rejected() {
        let g = Grid::cube(2.0, 11, group("B2", 2)).unwrap();
        assert!((g.weights().iter().sum::<f64>() - g.volume()).abs() < 1e-8 * g.volume());
        for s in 0..8 {
            for i in 0..g.len() {
                let img = g.group().act(s, g.point(i));
                assert!(euclid(&img, g.point(g.action(s)[i])) <= 1e-9 * g.min_spacing());
            }
        }
        assert!(matches!(Grid::cube(2.0, 11, group("A2", 2)), Err(Error::IncompatibleGroup { .. })));
        // axis swap fails on a rectangular box
        assert!(matches!(Grid::new(&[2.0, 1.0], 11, group("B2", 2)), Err(Error::IncompatibleGroup { .. })));
        assert!(Grid::cube(2.0, 10, group("B2", 2)).is_err());
    }

    #[test]
    fn symmetrize_examples() {
        let g = Grid::cube(4.0, 9, group("A1", 1)).unwrap();
        let odd = GridFunction::from_fn(g.clone(), |x| x[0]);
        assert!(odd.symmetrize().values().iter().all(|&v| v.abs() < 1e-15));
        let f = GridFunction::from_fn(g.clone(), |x| x[0] + x[0] * x[0]);
        let s = f.symmetrize();
        for (p, v) in g.points().iter().zip(s.values()) {
            assert!((v - p[0] * p[0]).abs() < 1e-13);
        }
        assert_eq!(s.invariance_defect(), 0.0);
        let again = s.symmetrize();
        assert_eq!(again.values(), s.values());
    }

    #[test]
    fn invariance_defect_of_identity_function() {
        let g = Grid::cube(4.0, 9, group("A1", 1)).unwrap();
        let f = GridFunction::from_fn(g.clone(), |x| x[0]);
        // oracle: max over points of |x − (−x)|
        let oracle = g.points().iter().map(|p| 2.0 * p[0].abs()).fold(0.0, f64::max);
        assert!((f.invariance_defect() - oracle).abs() < 1e-14);
        assert_eq!(GridFunction::constant(g, 3.0).invariance_defect(), 0.0);
    }

    #[test]
    fn norms() {
        let g = Grid::cube(4.0, 9, group("A1", 1)).unwrap();
        let one = GridFunction::constant(g.clone(), 1.0);
        assert!((one.norm(NormKind::L1) - 8.0).abs() < 1e-8);
        let zero = GridFunction::zeros(g.clone());
        for k in [NormKind::L1, NormKind::L2, NormKind::Linf, NormKind::WeakL1(0.1)] {
            assert_eq!(zero.norm(k), 0.0);
        }
        let half = GridFunction::from_fn(g.clone(), |x| if x[0] > 0.0 { 1.0 } else { 0.0 });
        // four of nine points positive
        let w = g.weights()[0];
        assert!((half.norm(NormKind::WeakL1(0.5)) - 4.0 * w).abs() < 1e-14);
        let f = GridFunction::from_fn(g, |x| x[0].sin());
        assert_eq!(f.norm(NormKind::L2), f.inner(&f).unwrap().sqrt());
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::cube(2.0, 5, group("B2", 2)).unwrap();
        let f = GridFunction::from_fn(g.clone(), |x| x[0] * x[0] - 0.3 * x[1]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        f.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x1,x2,value\n"));
        let back = GridFunction::read_csv(g, &p).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0));
        }
    }

    #[test]
    fn c_style_exponent_format() {
        assert_eq!(fmt_e(1.5e-5), "1.500000000000e-05");
        assert_eq!(fmt_e(-250.0), "-2.500000000000e+02");
        assert_eq!(fmt_e(0.0), "0.000000000000e+00");
    }
}
