//! G-averaged Calderón–Zygmund decomposition: maximal function, Whitney
//! cubes, good/bad split, and the weak-(1,1) experiment.

use std::fmt::Write as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fmt_e, Grid, GridFunction, NormKind};
use crate::operator::OperatorMatrix;
use crate::reflection::euclid;
use crate::report::{Metric, VerificationReport};

/// Uncentred maximal function over grid-centred Euclidean balls of radii
/// `m·spacing`. The result is maximized over each orbit, which is exact
/// for G-invariant input and removes summation-order noise.
pub fn maximal_function(f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let n = grid.len();
    let w = grid.weights();
    let a: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let h = grid.min_spacing();
    let raw = (0..n)
        .into_par_iter()
        .fold(
            || vec![0.0f64; n],
            |mut acc, c| {
                let mut order: Vec<(f64, usize)> = (0..n).map(|j| (euclid(grid.point(c), grid.point(j)), j)).collect();
                order.sort_by(|x, y| x.0.total_cmp(&y.0));
                // ball t holds order[..counts[t]]
                let mut counts = Vec::new();
                let mut means = Vec::new();
                let (mut mass, mut sum, mut count) = (0.0, 0.0, 0usize);
                let mut m = 1usize;
                while count < n {
                    let r = m as f64 * h;
                    let before = count;
                    while count < n && order[count].0 < r - 1e-9 * h {
                        mass += w[order[count].1];
                        sum += w[order[count].1] * a[order[count].1];
                        count += 1;
                    }
                    if count > before {
                        counts.push(count);
                        means.push(sum / mass);
                    }
                    m += 1;
                }
                let mut suffix = means.clone();
                for t in (0..suffix.len().saturating_sub(1)).rev() {
                    suffix[t] = suffix[t].max(suffix[t + 1]);
                }
                let mut t = 0;
                for (p, &(_, j)) in order.iter().enumerate() {
                    while counts[t] <= p {
                        t += 1;
                    }
                    acc[j] = acc[j].max(suffix[t]);
                }
                acc
            },
        )
        .reduce(|| vec![0.0; n], |x, y| x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect());
    let mut out = raw.clone();
    for s in 0..grid.group().order() {
        let p = grid.action(s);
        for i in 0..n {
            out[i] = out[i].max(raw[p[i]]);
        }
    }
    GridFunction::new(grid.clone(), out).expect("finite")
}

/// Dyadic cube of the box: level `ℓ` halves the box side `ℓ` times.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicCube {
    pub level: u32,
    pub corner: Vec<u64>,
    pub center: Vec<f64>,
    pub side: f64,
}

impl DyadicCube {
    pub fn diameter(&self) -> f64 {
        self.side * (self.center.len() as f64).sqrt()
    }
}

/// Axis cell `i` of an `n`-cell axis lies in dyadic slot
/// `⌊(2i+1)·2^ℓ / 2n⌋`, computed in integers.
fn slot(i: usize, n: usize, level: u32) -> u64 {
    ((2 * i as u128 + 1) << level) as u64 / (2 * n as u64)
}

fn cube_points(grid: &Grid, level: u32, corner: &[u64]) -> Vec<usize> {
    let n = grid.points_per_axis();
    let axes: Vec<Vec<usize>> = corner.iter().map(|&c| (0..n).filter(|&i| slot(i, n, level) == c).collect()).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    if axes.iter().any(|a| a.is_empty()) {
        return out;
    }
    loop {
        let multi: Vec<usize> = idx.iter().zip(&axes).map(|(&k, a)| a[k]).collect();
        out.push(grid.flat_index(&multi));
        let mut a = axes.len();
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Whitney {
    pub cubes: Vec<DyadicCube>,
    /// Grid indices inside each cube.
    pub members: Vec<Vec<usize>>,
    /// Points of `E` not covered by any admissible cube.
    pub slivers: usize,
    pub complement_empty: bool,
}

/// Maximal dyadic cubes `Q ⊆ E` with `dist(Q, Eᶜ) ≥ diam(Q)`, found top
/// down; subdivision stops when the side would drop below the spacing.
pub fn whitney(grid: &Grid, e: &[bool]) -> Result<Whitney> {
    let hw = grid.half_widths();
    if hw.iter().any(|l| (l - hw[0]).abs() > 1e-12 * hw[0]) {
        return Err(Error::NonCubicBox);
    }
    if !e.iter().any(|&b| b) {
        return Err(Error::EmptySet);
    }
    let n = grid.len();
    let dim = grid.dim();
    let box_side = 2.0 * hw[0];
    let complement: Vec<usize> = (0..n).filter(|&i| !e[i]).collect();
    let to_complement: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| complement.iter().map(|&j| euclid(grid.point(i), grid.point(j))).fold(f64::INFINITY, f64::min))
        .collect();
    let mut max_level = 0u32;
    while box_side / 2f64.powi(max_level as i32 + 1) >= grid.min_spacing() - 1e-12 {
        max_level += 1;
    }
    let mut out = Whitney { cubes: Vec::new(), members: Vec::new(), slivers: 0, complement_empty: complement.is_empty() };
    let mut stack = vec![(0u32, vec![0u64; dim])];
    let mut covered = vec![false; n];
    while let Some((level, corner)) = stack.pop() {
        let pts = cube_points(grid, level, &corner);
        if pts.is_empty() || !pts.iter().any(|&i| e[i]) {
            continue;
        }
        let side = box_side / 2f64.powi(level as i32);
        let diam = side * (dim as f64).sqrt();
        let all_in = pts.iter().all(|&i| e[i]);
        let dist = pts.iter().map(|&i| to_complement[i]).fold(f64::INFINITY, f64::min);
        if all_in && dist >= diam {
            let center = corner.iter().map(|&c| -hw[0] + (c as f64 + 0.5) * side).collect();
            pts.iter().for_each(|&i| covered[i] = true);
            out.cubes.push(DyadicCube { level, corner, center, side });
            out.members.push(pts);
            continue;
        }
        if level == max_level {
            continue;
        }
        // children in reverse so the stack pops them in lexicographic order
        for code in (0..1u64 << dim).rev() {
            let child: Vec<u64> = corner.iter().enumerate().map(|(a, &c)| 2 * c + ((code >> (dim - 1 - a)) & 1)).collect();
            stack.push((level + 1, child));
        }
    }
    out.slivers = (0..n).filter(|&i| e[i] && !covered[i]).count();
    Ok(out)
}

/// Brute-force `dist(Q, Eᶜ) / diam(Q)` for every cube, from all point
/// pairs.
pub fn whitney_ratios(grid: &Grid, e: &[bool], w: &Whitney) -> Vec<f64> {
    w.cubes
        .iter()
        .zip(&w.members)
        .map(|(q, pts)| {
            let mut d = f64::INFINITY;
            for &i in pts {
                for j in 0..grid.len() {
                    if !e[j] {
                        d = d.min(euclid(grid.point(i), grid.point(j)));
                    }
                }
            }
            d / q.diameter()
        })
        .collect()
}

pub fn cubes_csv(cubes: &[DyadicCube]) -> String {
    let mut s = String::new();
    let dim = cubes.first().map_or(1, |c| c.center.len());
    s.push_str("level");
    for a in 1..=dim {
        let _ = write!(s, ",corner{a}");
    }
    for a in 1..=dim {
        let _ = write!(s, ",center{a}");
    }
    s.push_str(",side\n");
    for c in cubes {
        let _ = write!(s, "{}", c.level);
        for k in &c.corner {
            let _ = write!(s, ",{k}");
        }
        for x in &c.center {
            let _ = write!(s, ",{}", fmt_e(*x));
        }
        let _ = writeln!(s, ",{}", fmt_e(c.side));
    }
    s
}

#[derive(Debug, Clone)]
pub struct CzOutput {
    pub lambda: f64,
    pub good: GridFunction,
    pub bad: Vec<(DyadicCube, GridFunction)>,
    pub e_lambda: Vec<usize>,
    pub orbit_dilate: Vec<usize>,
    /// Indices of each cube's points.
    pub cube_members: Vec<Vec<usize>>,
    pub slivers: usize,
}

pub fn cz_decompose(f: &GridFunction, lambda: f64) -> Result<CzOutput> {
    if !(lambda > 0.0) {
        return Err(Error::config("lambda", "must be positive"));
    }
    let (defect, i, j) = f.invariance_witness();
    if defect > 1e-9 * f.norm(NormKind::Linf).max(1.0) {
        return Err(Error::NotInvariant { defect, i, j });
    }
    let grid = f.grid().clone();
    let n = grid.len();
    let mf = maximal_function(f);
    let e: Vec<bool> = mf.values().iter().map(|&v| v > lambda).collect();
    let e_lambda: Vec<usize> = (0..n).filter(|&i| e[i]).collect();
    if e_lambda.is_empty() {
        return Ok(CzOutput {
            lambda,
            good: f.clone(),
            bad: Vec::new(),
            e_lambda,
            orbit_dilate: Vec::new(),
            cube_members: Vec::new(),
            slivers: 0,
        });
    }
    if e_lambda.len() == n {
        return Err(Error::LambdaTooSmall { lambda });
    }
    let wh = whitney(&grid, &e)?;
    let order = grid.group().order();
    let w = grid.weights();
    let v = f.values();
    let inv = 1.0 / order as f64;
    let mut good = vec![0.0; n];
    let mut bad = Vec::with_capacity(wh.cubes.len());
    let mut mean_sigma: Vec<Vec<f64>> = vec![Vec::with_capacity(wh.cubes.len()); order];
    for pts in &wh.members {
        let mut b = vec![0.0; n];
        for (s, means) in mean_sigma.iter_mut().enumerate() {
            let p = grid.action(s);
            let img: Vec<usize> = pts.iter().map(|&i| p[i]).collect();
            let mass: f64 = img.iter().map(|&i| w[i]).sum();
            let mean = img.iter().map(|&i| w[i] * v[i]).sum::<f64>() / mass;
            means.push(mean);
            for &i in &img {
                b[i] += inv * (v[i] - mean);
            }
        }
        bad.push(b);
    }
    // g^σ = f off ∪σ(Q_j) and the σ(Q_j) mean on it
    for (s, means) in mean_sigma.iter().enumerate() {
        let p = grid.action(s);
        let mut gs = v.to_vec();
        for (pts, &mean) in wh.members.iter().zip(means) {
            for &i in pts {
                gs[p[i]] = mean;
            }
        }
        good.iter_mut().zip(&gs).for_each(|(g, x)| *g += inv * x);
    }
    let scale = 4.0 * (grid.dim() as f64).sqrt();
    let group = grid.group();
    let orbit_dilate: Vec<usize> = (0..n)
        .filter(|&i| {
            wh.cubes.iter().any(|q| group.orbit_distance(grid.point(i), &q.center).map_or(false, |d| d <= scale * q.side))
        })
        .collect();
    Ok(CzOutput {
        lambda,
        good: GridFunction::new(grid.clone(), good)?,
        bad: wh.cubes.into_iter().zip(bad).map(|(q, b)| (q, GridFunction::from_raw(grid.clone(), b))).collect(),
        e_lambda,
        orbit_dilate,
        cube_members: wh.members,
        slivers: wh.slivers,
    })
}

/// Levels `min Mf + c·(max Mf − min Mf)`; for `0 < c < 1` the level set is
/// neither empty nor the whole grid.
pub fn lambda_ladder(f: &GridFunction, fractions: &[f64]) -> Vec<f64> {
    let mf = maximal_function(f);
    let lo = mf.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mf.values().iter().cloned().fold(0.0, f64::max);
    fractions.iter().map(|c| lo + c * (hi - lo)).collect()
}

/// Constants and identities of the decomposition.
#[derive(Debug, Clone)]
pub struct CzCheck {
    pub exact_tol: f64,
    pub good_ceiling: f64,
}

impl CzCheck {
    /// `2^N·|G|` ceiling for property (iii).
    pub fn for_grid(grid: &Grid) -> Self {
        CzCheck { exact_tol: 1e-10, good_ceiling: 2f64.powi(grid.dim() as i32) * grid.group().order() as f64 }
    }
}

pub fn verify_cz(out: &CzOutput, f: &GridFunction, check: &CzCheck) -> VerificationReport {
    let grid = f.grid();
    let n = grid.len();
    let w = grid.weights();
    let lambda = out.lambda;
    let mut rep = VerificationReport::new("cz");
    let mut sum = out.good.values().to_vec();
    for (_, b) in &out.bad {
        sum.iter_mut().zip(b.values()).for_each(|(s, x)| *s += x);
    }
    let recon = sum.iter().zip(f.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    rep.push(Metric::new("reconstruction", recon, "1").at_most(check.exact_tol));

    let mut in_e = vec![false; n];
    out.e_lambda.iter().for_each(|&i| in_e[i] = true);
    let g = out.good.values();
    let off = (0..n).filter(|&i| !in_e[i]).map(|i| (g[i].abs() - lambda).max(0.0)).fold(0.0, f64::max);
    rep.push(Metric::new("good_off_e_excess", off, "1").at_most(check.exact_tol));
    let on = out.e_lambda.iter().map(|&i| g[i].abs() / lambda).fold(0.0, f64::max);
    rep.push(Metric::new("good_on_e_const", on, "1").at_most(check.good_ceiling));

    let f1 = f.norm(NormKind::L1);
    let covered: f64 = out.cube_members.iter().flatten().map(|&i| w[i]).sum();
    rep.push(Metric::new("cube_measure_const", covered * lambda / f1, "1").finite());
    let g2 = out.good.norm(NormKind::L2);
    rep.push(Metric::new("good_l2_const", g2 / (lambda.sqrt() * f1.sqrt()), "1").finite());
    let mut b1: f64 = 0.0;
    let mut integral: f64 = 0.0;
    for ((_, b), pts) in out.bad.iter().zip(&out.cube_members) {
        let q: f64 = pts.iter().map(|&i| w[i]).sum();
        b1 = b1.max(b.norm(NormKind::L1) / (lambda * q));
        integral = integral.max(b.integral().abs());
    }
    rep.push(Metric::new("bad_l1_const", b1, "1").finite());
    rep.push(Metric::new("bad_integral", integral, "1").at_most(check.exact_tol));
    rep.push(Metric::new("good_invariance_defect", out.good.invariance_defect(), "1").at_most(check.exact_tol));

    let mut support_leak: f64 = 0.0;
    for ((_, b), pts) in out.bad.iter().zip(&out.cube_members) {
        let mut orbit = vec![false; n];
        for s in 0..grid.group().order() {
            pts.iter().for_each(|&i| orbit[grid.action(s)[i]] = true);
        }
        for (i, x) in b.values().iter().enumerate() {
            if !orbit[i] {
                support_leak = support_leak.max(x.abs());
            }
        }
    }
    rep.push(Metric::new("bad_support_leak", support_leak, "1").at_most(0.0));
    let e_sym = (0..grid.group().order()).all(|s| out.e_lambda.iter().all(|&i| in_e[grid.action(s)[i]]));
    rep.push(Metric::new("e_lambda_invariant", e_sym as u8 as f64, "bool").flag(e_sym));
    rep.push(Metric::new("cubes", out.bad.len() as f64, "count"));
    rep.push(Metric::new("slivers", out.slivers as f64, "count").note("uncovered points of E assigned to the good part"));
    rep
}

/// `λ·|{|Tf| > λ}| / ‖f‖₁` over a corpus and a λ grid.
#[derive(Debug, Clone)]
pub struct WeakTypeTable {
    /// `(λ, max ratio over the corpus)` per grid value, λ relative to ‖f‖∞.
    pub rows: Vec<(f64, f64)>,
    pub max_ratio: f64,
    /// Max over the upper half of the λ grid divided by max over the lower.
    pub growth: f64,
}

/// Relative λ grid: nine log-spaced values spanning `[0.1, 10]·‖f‖∞`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-1.0 + i as f64 * 0.25)).collect()
}

pub fn weak11_table(t: &OperatorMatrix, corpus: &[GridFunction], rel_lambdas: &[f64]) -> Result<WeakTypeTable> {
    let mut rows: Vec<(f64, f64)> = rel_lambdas.iter().map(|&l| (l, 0.0)).collect();
    for f in corpus {
        let tf = t.apply(f)?;
        let f1 = f.norm(NormKind::L1);
        let finf = f.norm(NormKind::Linf);
        if f1 == 0.0 {
            continue;
        }
        for row in rows.iter_mut() {
            let lambda = row.0 * finf;
            let r = lambda * tf.norm(NormKind::WeakL1(lambda)) / f1;
            row.1 = row.1.max(r);
        }
    }
    let max_ratio = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let half = rows.len() / 2;
    let lower = rows[..half].iter().map(|r| r.1).fold(0.0, f64::max);
    let upper = rows[half..].iter().map(|r| r.1).fold(0.0, f64::max);
    let growth = if upper == 0.0 { 0.0 } else { upper / lower };
    Ok(WeakTypeTable { rows, max_ratio, growth })
}

pub fn weak11_experiment(
    t: &OperatorMatrix,
    corpus: &[GridFunction],
    rel_lambdas: &[f64],
    ceiling: f64,
    growth_ceiling: f64,
) -> Result<VerificationReport> {
    let table = weak11_table(t, corpus, rel_lambdas)?;
    let mut rep = VerificationReport::new("weak11");
    rep.push(
        Metric::new("max_ratio", table.max_ratio, "1")
            .at_most(ceiling)
            .witness(table.rows.iter().map(|r| r.1).collect()),
    );
    rep.push(Metric::new("growth", table.growth, "1").at_most(growth_ceiling));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::cz_inputs;
    use std::sync::Arc;
    use crate::reflection::{ReflectionGroup, RootSystem, DEFAULT_MAX_ORDER};

    fn grid(preset: &str, dim: usize, l: f64, n: usize) -> Arc<Grid> {
        let g = ReflectionGroup::generate(&RootSystem::preset(preset, dim).unwrap(), DEFAULT_MAX_ORDER).unwrap();
        Grid::cube(l, n, Arc::new(g)).unwrap()
    }

    #[test]
    fn maximal_of_constant_and_pointwise_floor() {
        let g = grid("A1", 1, 4.0, 17);
        let c = maximal_function(&GridFunction::constant(g.clone(), -2.5));
        assert!(c.values().iter().all(|v| (v - 2.5).abs() < 1e-14));
        let f = GridFunction::from_fn(g, |x| (3.0 * x[0]).cos());
        let m = maximal_function(&f);
        assert!(m.values().iter().zip(f.values()).all(|(m, f)| *m >= f.abs()));
        assert_eq!(m.invariance_defect(), 0.0);
    }

    #[test]
    fn slots_partition_the_axis() {
        for level in 0..6 {
            let mut prev = 0;
            for i in 0..33 {
                let s = slot(i, 33, level);
                assert!(s >= prev && s < 1 << level);
                prev = s;
            }
        }
    }

    #[test]
    fn whitney_geometry() {
        let g = grid("TRIVIAL", 1, 4.0, 65);
        let e: Vec<bool> = g.points().iter().map(|x| x[0].abs() < 1.3).collect();
        let w = whitney(&g, &e).unwrap();
        for r in whitney_ratios(&g, &e, &w) {
            assert!((1.0..=4.0).contains(&r), "ratio {r}");
        }
        let full = whitney(&g, &vec![true; g.len()]).unwrap();
        assert!(full.complement_empty && full.cubes.len() == 1 && full.cubes[0].level == 0);
        assert!(matches!(whitney(&g, &vec![false; g.len()]), Err(Error::EmptySet)));
    }

    #[test]
    fn decomposition_identities() {
        let g = grid("A1", 1, 8.0, 129);
        let f = GridFunction::from_fn(g.clone(), |x| (-(x[0] - 2.0).powi(2)).exp() * 3.0).symmetrize();
        let big = cz_decompose(&f, f.norm(NormKind::Linf) * 1.01).unwrap();
        assert!(big.bad.is_empty() && big.good.values() == f.values());
        let out = cz_decompose(&f, 1.0).unwrap();
        assert!(!out.bad.is_empty());
        assert!(matches!(cz_decompose(&f, 0.3), Err(Error::LambdaTooSmall { .. })));
        let rep = verify_cz(&out, &f, &CzCheck::for_grid(&g));
        assert!(rep.all_pass(), "{}", rep.summary());
        let odd = GridFunction::from_fn(g, |x| x[0]);
        assert!(matches!(cz_decompose(&odd, 0.5), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn chebyshev_floor_for_identity() {
        let g = grid("A1", 1, 8.0, 65);
        let id = OperatorMatrix::identity(g.clone());
        let corpus = cz_inputs(&g, 5, 3);
        let t = weak11_table(&id, &corpus, &default_lambda_grid()).unwrap();
        assert!(t.max_ratio <= 1.0);
        let doubled: Vec<GridFunction> = corpus.iter().map(|f| f.scale(2.0)).collect();
        let t2 = weak11_table(&id, &doubled, &default_lambda_grid()).unwrap();
        assert_eq!(t.rows, t2.rows);
    }
}
