//! The G-invariant approximation of identity `S_k = M_k T_k W_k T_k M_k`
//! and the Littlewood–Paley pieces `D_k`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, NormKind};
use crate::operator::OperatorMatrix;
use crate::report::{Metric, VerificationReport};
use crate::stats;

/// Normalizers below this are treated as degenerate.
const NORMALIZER_FLOOR: f64 = 1e-14;

/// Radial cutoff `h` with `h = 1` on `[0,1]` and `h = 0` beyond 2.
#[derive(Clone, Copy)]
pub struct BumpProfile {
    rule: fn(f64) -> f64,
    lipschitz: f64,
}

impl std::fmt::Debug for BumpProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BumpProfile").field("lipschitz", &self.lipschitz).finish()
    }
}

impl BumpProfile {
    pub fn new(rule: fn(f64) -> f64, lipschitz: f64) -> Self {
        BumpProfile { rule, lipschitz }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.rule)(t)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Cubic smoothstep `1 − 3s² + 2s³`, `s = |t| − 1`, on `1 ≤ |t| ≤ 2`.
pub fn smoothstep(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let s = a - 1.0;
        1.0 - 3.0 * s * s + 2.0 * s * s * s
    }
}

pub fn default_bump() -> BumpProfile {
    BumpProfile::new(smoothstep, 1.5)
}

/// Whether scale `k` is usable on `grid`, and if so whether it is resolved
/// (`2^{−k} ≥ 4·spacing`). Unresolved scales are kept but excluded from
/// sup-type comparability metrics.
pub fn scale_status(grid: &Grid, k: i32) -> Result<bool> {
    let r = 2f64.powi(-k);
    let h = grid.min_spacing();
    if 2.0 * r > grid.min_half_width() {
        return Err(Error::ScaleOutOfRange {
            k,
            reason: format!("support radius {} exceeds the box half-width {}", 2.0 * r, grid.min_half_width()),
        });
    }
    if r < 0.25 * h {
        return Err(Error::ScaleOutOfRange { k, reason: format!("2^-k = {r} is below a quarter grid spacing {h}") });
    }
    Ok(r >= 4.0 * h - 1e-12)
}

/// `T_k(x_i, x_j) = h(2^k d(x_i, x_j))`.
pub fn build_tk(grid: &Arc<Grid>, h: &BumpProfile, k: i32) -> Result<OperatorMatrix> {
    scale_status(grid, k)?;
    let s = 2f64.powi(k);
    let n = grid.len();
    let d = grid.distance_matrix();
    Ok(OperatorMatrix::from_kernel(grid.clone(), |i, j| h.eval(s * d[i * n + j])))
}

#[derive(Debug, Clone)]
struct Level {
    s: OperatorMatrix,
    d: OperatorMatrix,
    m: Vec<f64>,
    w: Vec<f64>,
    resolved: bool,
}

/// `{S_k, D_k}` over `k_min ..= k_max`, with the normalizing diagonals.
#[derive(Debug, Clone)]
pub struct ScaleFamily {
    grid: Arc<Grid>,
    bump: BumpProfile,
    k_min: i32,
    k_max: i32,
    levels: Vec<Level>,
}

fn build_level(grid: &Arc<Grid>, h: &BumpProfile, k: i32) -> Result<(OperatorMatrix, Vec<f64>, Vec<f64>, bool)> {
    let resolved = scale_status(grid, k)?;
    let t = build_tk(grid, h, k)?;
    let t1 = t.row_sums();
    if let Some(&v) = t1.iter().find(|&&v| !(v > NORMALIZER_FLOOR)) {
        return Err(Error::DegenerateNormalizer { k, value: v });
    }
    let m: Vec<f64> = t1.iter().map(|v| 1.0 / v).collect();
    let wgt = grid.weights();
    let n = grid.len();
    let tm: Vec<f64> = (0..n).map(|i| t.row(i).iter().zip(wgt).zip(&m).map(|((a, w), m)| a * w * m).sum()).collect();
    if let Some(&v) = tm.iter().find(|&&v| !(v > NORMALIZER_FLOOR)) {
        return Err(Error::DegenerateNormalizer { k, value: v });
    }
    let w: Vec<f64> = tm.iter().map(|v| 1.0 / v).collect();
    // S_ij = m_i Σ_l T_il w_l u_l T_lj m_j
    let left = t.scale_rows(&m).scale_cols(&w);
    let right = t.scale_cols(&m);
    let mut s = left.compose(&right)?;
    symmetrize_entries(&mut s);
    Ok((s, m, w, resolved))
}

fn symmetrize_entries(a: &mut OperatorMatrix) {
    let n = a.size();
    let e = a.entries_mut();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (e[i * n + j] + e[j * n + i]);
            e[i * n + j] = v;
            e[j * n + i] = v;
        }
    }
}

impl ScaleFamily {
    pub fn build(grid: Arc<Grid>, bump: BumpProfile, k_min: i32, k_max: i32) -> Result<Self> {
        if k_max < k_min {
            return Err(Error::config("k_max", format!("k_max {k_max} below k_min {k_min}")));
        }
        let built: Vec<_> = (k_min..=k_max).into_par_iter().map(|k| build_level(&grid, &bump, k)).collect();
        let mut levels: Vec<Level> = Vec::with_capacity(built.len());
        for r in built {
            let (s, m, w, resolved) = r?;
            let d = match levels.last() {
                Some(prev) => s.sub(&prev.s)?,
                None => s.clone(),
            };
            levels.push(Level { s, d, m, w, resolved });
        }
        Ok(ScaleFamily { grid, bump, k_min, k_max, levels })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn bump(&self) -> &BumpProfile {
        &self.bump
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    pub fn ks(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min..=self.k_max
    }

    fn level(&self, k: i32) -> &Level {
        assert!(k >= self.k_min && k <= self.k_max, "scale {k} outside family range");
        &self.levels[(k - self.k_min) as usize]
    }

    pub fn s(&self, k: i32) -> &OperatorMatrix {
        &self.level(k).s
    }

    pub fn d(&self, k: i32) -> &OperatorMatrix {
        &self.level(k).d
    }

    /// Diagonal of `M_k = 1/T_k(1)`.
    pub fn m(&self, k: i32) -> &[f64] {
        &self.level(k).m
    }

    /// Diagonal of `W_k = 1/T_k(M_k)`.
    pub fn w(&self, k: i32) -> &[f64] {
        &self.level(k).w
    }

    pub fn is_resolved(&self, k: i32) -> bool {
        self.level(k).resolved
    }

    pub fn resolved_ks(&self) -> Vec<i32> {
        self.ks().filter(|&k| self.is_resolved(k)).collect()
    }

    /// Margin `2·2^{−k_min}` from the box boundary.
    pub fn interior_margin(&self) -> f64 {
        2.0 * 2f64.powi(-self.k_min)
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        self.grid.interior_mask(self.interior_margin())
    }

    /// `D_k^M = Σ_{|j|≤M} D_{k+j}`, clipped to the range, for every `k`.
    pub fn dkm(&self, m: usize) -> Vec<OperatorMatrix> {
        build_dkm(self, m)
    }
}

pub fn build_family(grid: Arc<Grid>, bump: BumpProfile, k_min: i32, k_max: i32) -> Result<ScaleFamily> {
    ScaleFamily::build(grid, bump, k_min, k_max)
}

/// Telescoped form `S_{min(k+M, k_max)} − S_{k−M−1}` (the second term absent
/// below `k_min`), indexed from `k_min`.
pub fn build_dkm(family: &ScaleFamily, m: usize) -> Vec<OperatorMatrix> {
    let m = m as i32;
    family
        .ks()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let top = family.s((k + m).min(family.k_max)).clone();
            let lo = k - m - 1;
            if lo >= family.k_min {
                top.sub(family.s(lo)).expect("same grid")
            } else {
                top
            }
        })
        .collect()
}

/// Limits and sampling for [`verify_aoi`] and [`verify_almost_orthogonality`].
#[derive(Debug, Clone)]
pub struct AoiCheck {
    pub sample_budget: usize,
    pub seed: u64,
    pub row_sum_tol: f64,
    pub symmetry_tol: f64,
    pub dk_sum_tol: f64,
    pub sup_variation: f64,
    pub lipschitz_ceiling: f64,
    pub second_difference_ceiling: f64,
    pub decay_slope_ceiling: f64,
    /// Regularity exponent in the pointwise `D_kD_l` ratio.
    pub epsilon: f64,
}

impl Default for AoiCheck {
    fn default() -> Self {
        AoiCheck {
            sample_budget: 100_000,
            seed: 42,
            row_sum_tol: 1e-12,
            symmetry_tol: 1e-10,
            dk_sum_tol: 1e-11,
            sup_variation: 2.0,
            lipschitz_ceiling: 50.0,
            second_difference_ceiling: 500.0,
            decay_slope_ceiling: -0.5,
            epsilon: 0.5,
        }
    }
}

/// Largest `d(x,y)` with `A(x,y) ≠ 0`.
pub fn support_radius(a: &OperatorMatrix) -> f64 {
    let d = a.grid().distance_matrix();
    a.entries().iter().zip(d).fold(0.0, |r: f64, (v, d)| if *v != 0.0 { r.max(*d) } else { r })
}

fn offsets_within(grid: &Grid, radius: f64) -> Vec<Vec<i64>> {
    let dim = grid.dim();
    let h = grid.spacing();
    let reach: Vec<i64> = h.iter().map(|h| (radius / h).floor().max(1.0) as i64).collect();
    let mut out = Vec::new();
    let mut cur: Vec<i64> = reach.iter().map(|r| -r).collect();
    loop {
        let r2: f64 = cur.iter().zip(h).map(|(c, h)| (*c as f64 * h).powi(2)).sum();
        if cur.iter().any(|&c| c != 0) && r2.sqrt() <= radius.max(h[0]) + 1e-12 {
            out.push(cur.clone());
        }
        let mut a = dim;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            cur[a] += 1;
            if cur[a] <= reach[a] {
                break;
            }
            cur[a] = -reach[a];
        }
    }
}

fn smooth_test_function(grid: &Arc<Grid>) -> GridFunction {
    let dim = grid.dim();
    let c: Vec<f64> = (0..dim).map(|a| 0.5 + 0.25 * a as f64).collect();
    GridFunction::from_fn(grid.clone(), |x| {
        let r2: f64 = x.iter().zip(&c).map(|(x, c)| (x - c).powi(2)).sum();
        (-r2).exp()
    })
    .symmetrize()
}

/// Properties (i)–(vii) of the approximation of identity.
pub fn verify_aoi(family: &ScaleFamily, check: &AoiCheck) -> VerificationReport {
    let grid = family.grid().clone();
    let n = grid.len();
    let dim = grid.dim() as i32;
    let d = grid.distance_matrix();
    let interior = family.interior_mask();
    let mut rep = VerificationReport::new("aoi");

    let mut row_dev: f64 = 0.0;
    let mut col_dev: f64 = 0.0;
    let mut asym: f64 = 0.0;
    let mut supp_viol: f64 = 0.0;
    let mut conj: f64 = 0.0;
    let mut radii = Vec::new();
    let mut sups = Vec::new();
    for k in family.ks() {
        let s = family.s(k);
        row_dev = row_dev.max(stats::max_abs(&s.row_sums().iter().map(|v| v - 1.0).collect::<Vec<_>>()));
        col_dev = col_dev.max(stats::max_abs(&s.col_sums().iter().map(|v| v - 1.0).collect::<Vec<_>>()));
        asym = asym.max(s.asymmetry());
        conj = conj.max(s.conjugation_defect());
        let cut = 2f64.powi(2 - k);
        for (v, dd) in s.entries().iter().zip(d) {
            if *dd >= cut {
                supp_viol = supp_viol.max(v.abs());
            }
        }
        radii.push(support_radius(s));
        let mut sup: f64 = 0.0;
        for i in (0..n).filter(|&i| interior[i]) {
            sup = sup.max(stats::max_abs(s.row(i)));
        }
        let scaled = sup * 2f64.powi(-k * dim);
        rep.push(Metric::new(format!("sup_scaled_k{k}"), scaled, "1").note(if family.is_resolved(k) {
            "resolved"
        } else {
            "unresolved"
        }));
        if family.is_resolved(k) {
            sups.push(scaled);
        }
    }
    rep.push(Metric::new("row_sum_dev", row_dev, "1").at_most(check.row_sum_tol));
    rep.push(Metric::new("col_sum_dev", col_dev, "1").at_most(check.row_sum_tol));
    rep.push(Metric::new("symmetry_dev", asym, "1/volume").at_most(check.symmetry_tol));
    rep.push(Metric::new("support_violation", supp_viol, "1/volume").at_most(0.0));
    rep.push(Metric::new("conjugation_defect", conj, "1/volume").at_most(1e-9));
    let variation = stats::spread(&sups).unwrap_or(f64::NAN);
    rep.push(Metric::new("sup_scaled_variation", variation, "ratio").at_most(check.sup_variation));
    let monotone = radii.windows(2).all(|w| w[1] < w[0]);
    rep.push(Metric::new("support_radius_monotone", monotone as u8 as f64, "bool").flag(monotone).witness(radii));
    let unresolved = family.ks().filter(|&k| !family.is_resolved(k)).count();
    if unresolved > 0 {
        rep.push(
            Metric::new("unresolved_scales", unresolved as f64, "count")
                .note("scales with 2^-k < 4 spacing excluded from sup comparisons"),
        );
    }

    let mut dk_row: f64 = 0.0;
    let mut dk_col: f64 = 0.0;
    for k in family.ks().skip(1) {
        let dk = family.d(k);
        dk_row = dk_row.max(stats::max_abs(&dk.row_sums()));
        dk_col = dk_col.max(stats::max_abs(&dk.col_sums()));
    }
    rep.push(Metric::new("dk_row_sum_dev", dk_row, "1").at_most(check.dk_sum_tol));
    rep.push(Metric::new("dk_col_sum_dev", dk_col, "1").at_most(check.dk_sum_tol));

    let (lip, lip_w, sec, sec_w) = sampled_smoothness(family, check);
    rep.push(Metric::new("lipschitz_const", lip, "1").at_most(check.lipschitz_ceiling).witness(lip_w));
    rep.push(Metric::new("second_difference_const", sec, "1").at_most(check.second_difference_ceiling).witness(sec_w));

    let f = smooth_test_function(&grid);
    let fnorm = f.norm(NormKind::L2);
    let top = family.s(family.k_max()).apply(&f).expect("same grid");
    let resid = top.sub(&f).expect("same grid").norm(NormKind::L2) / fnorm;
    rep.push(Metric::new("fine_scale_residual", resid, "relative").at_most(0.05));
    let coarse = family.s(family.k_min()).apply(&f).expect("same grid");
    let ratio = coarse.norm(NormKind::L2) / (2f64.powf(family.k_min() as f64 * dim as f64 / 2.0) * fnorm);
    rep.push(Metric::new("coarse_scale_ratio", ratio, "relative"));
    let defect = family
        .ks()
        .map(|k| family.d(k).apply(&f).expect("same grid").invariance_defect())
        .fold(0.0, f64::max);
    rep.push(Metric::new("dk_invariance_defect", defect, "1").at_most(1e-9 * f.norm(NormKind::Linf)));
    rep
}

/// Sampled sup of the Lipschitz and second-difference ratios, normalized by
/// `2^{k(N+1)}` and `2^{k(N+2)}`, over resolved scales and interior points.
fn sampled_smoothness(family: &ScaleFamily, check: &AoiCheck) -> (f64, Vec<f64>, f64, Vec<f64>) {
    let grid = family.grid();
    let dim = grid.dim();
    let interior: Vec<usize> = family.interior_mask().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let ks = family.resolved_ks();
    if ks.is_empty() || interior.is_empty() {
        return (0.0, vec![], 0.0, vec![]);
    }
    let per_k = (check.sample_budget / ks.len()).max(1);
    let h = grid.min_spacing();
    let results: Vec<(f64, Vec<f64>, f64, Vec<f64>)> = ks
        .par_iter()
        .map(|&k| {
            let s = family.s(k);
            let r = 2f64.powi(-k);
            let near = offsets_within(grid, r);
            let far = offsets_within(grid, 4.0 * r);
            let mut rng = stats::rng(check.seed, 100 + k as u64);
            let norm1 = 2f64.powi(k * (dim as i32 + 1));
            let norm2 = 2f64.powi(k * (dim as i32 + 2));
            let (mut lip, mut lw, mut sec, mut sw) = (0.0f64, vec![], 0.0f64, vec![]);
            for _ in 0..per_k {
                let x = interior[rng.gen_range(0..interior.len())];
                let Some(xp) = grid.shifted(x, &near[rng.gen_range(0..near.len())]) else { continue };
                let Some(y) = grid.shifted(x, &far[rng.gen_range(0..far.len())]) else { continue };
                let Some(yp) = grid.shifted(y, &near[rng.gen_range(0..near.len())]) else { continue };
                let dx = grid.distance(x, xp);
                if dx < 0.5 * h {
                    continue;
                }
                let v = (s.get(x, y) - s.get(xp, y)).abs() / (norm1 * dx);
                if v > lip {
                    lip = v;
                    lw = [grid.point(x), grid.point(xp), grid.point(y)].concat();
                }
                let dy = grid.distance(y, yp);
                if dy < 0.5 * h {
                    continue;
                }
                let dd = (s.get(x, y) - s.get(xp, y) - s.get(x, yp) + s.get(xp, yp)).abs() / (norm2 * dx * dy);
                if dd > sec {
                    sec = dd;
                    sw = [grid.point(x), grid.point(xp), grid.point(y), grid.point(yp)].concat();
                }
            }
            (lip, lw, sec, sw)
        })
        .collect();
    let mut out = (0.0, vec![], 0.0, vec![]);
    for (l, lw, s, sw) in results {
        if l > out.0 {
            out.0 = l;
            out.1 = lw;
        }
        if s > out.2 {
            out.2 = s;
            out.3 = sw;
        }
    }
    out
}

/// Norms `‖D_kD_l‖` over all pairs and the fitted decay of `log₂‖D_kD_l‖`
/// against `|k − l|`.
pub fn verify_almost_orthogonality(family: &ScaleFamily, check: &AoiCheck) -> VerificationReport {
    let mut rep = VerificationReport::new("almost_orthogonality");
    let ks: Vec<i32> = family.ks().collect();
    let pairs: Vec<(i32, i32)> = ks.iter().flat_map(|&k| ks.iter().map(move |&l| (k, l))).filter(|(k, l)| k <= l).collect();
    let grid = family.grid().clone();
    let dim = grid.dim() as f64;
    let interior: Vec<usize> = family.interior_mask().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let per_pair = (check.sample_budget / pairs.len().max(1)).max(1);
    let dk_norms: Vec<f64> = ks.par_iter().map(|&k| family.d(k).norm()).collect();

    let measured: Vec<(i32, i32, f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(k, l)| {
            let p = family.d(k).compose(family.d(l)).expect("same grid");
            let norm = p.norm();
            let row = if k > family.k_min() && l > family.k_min() {
                stats::max_abs(&p.row_sums())
            } else {
                0.0
            };
            let kl = k.min(l);
            let r = 2f64.powi(-kl);
            let mut rng = stats::rng(check.seed, 10_000 + (k - family.k_min()) as u64 * 1000 + (l - family.k_min()) as u64);
            let mut ratio: f64 = 0.0;
            if !interior.is_empty() {
                for _ in 0..per_pair {
                    let x = interior[rng.gen_range(0..interior.len())];
                    let y = interior[rng.gen_range(0..interior.len())];
                    let dxy = grid.distance(x, y);
                    let v = p.get(x, y).abs() * (r + dxy).powf(dim + check.epsilon) / r.powf(check.epsilon);
                    ratio = ratio.max(v);
                }
            }
            (k, l, norm, row, ratio)
        })
        .collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut row_dev: f64 = 0.0;
    let mut point_const: f64 = 0.0;
    let mut submult = true;
    for &(k, l, norm, row, ratio) in &measured {
        rep.push(Metric::new(format!("norm_DkDl_{k}_{l}"), norm, "1"));
        if k == l {
            let bound = dk_norms[(k - family.k_min()) as usize].powi(2);
            submult &= norm <= bound * (1.0 + 1e-8);
        }
        if norm > 0.0 {
            xs.push((l - k) as f64);
            ys.push(norm.log2());
        }
        row_dev = row_dev.max(row);
        point_const = point_const.max(ratio);
    }
    let slope = stats::linear_fit(&xs, &ys).map(|(s, _)| s).unwrap_or(f64::NAN);
    rep.push(Metric::new("decay_slope", slope, "log2 per scale").at_most(check.decay_slope_ceiling));
    rep.push(Metric::new("submultiplicative_diagonal", submult as u8 as f64, "bool").flag(submult));
    rep.push(Metric::new("interior_row_sum_dev", row_dev, "1").at_most(1e-10));
    rep.push(Metric::new("pointwise_const", point_const, "1"));
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::{ReflectionGroup, RootSystem, DEFAULT_MAX_ORDER};

    fn grid(preset: &str, dim: usize, l: f64, n: usize) -> Arc<Grid> {
        let g = ReflectionGroup::generate(&RootSystem::preset(preset, dim).unwrap(), DEFAULT_MAX_ORDER).unwrap();
        Grid::cube(l, n, Arc::new(g)).unwrap()
    }

    #[test]
    fn bump_values() {
        let h = default_bump();
        assert_eq!(h.eval(0.5), 1.0);
        assert_eq!(h.eval(2.5), 0.0);
        assert_eq!(h.eval(1.5), 0.5);
        assert_eq!(h.eval(-1.5), 0.5);
        // C¹ at the joins, slope bounded by 3/2
        let e = 1e-7;
        assert!((h.eval(1.0 + e) - 1.0).abs() < 1e-12);
        assert!(h.eval(2.0 - e).abs() < 1e-12);
        let slope = (h.eval(1.5 + e) - h.eval(1.5 - e)) / (2.0 * e);
        assert!((slope + 1.5).abs() < 1e-6);
    }

    #[test]
    fn tk_mass_is_comparable() {
        let g = grid("TRIVIAL", 1, 8.0, 257);
        let h = default_bump();
        for k in 0..=2 {
            let t = build_tk(&g, &h, k).unwrap();
            let r = 2f64.powi(-k);
            let sums = t.row_sums();
            let interior = g.interior_mask(2.0);
            let slack = 2.0 * g.min_spacing();
            for i in (0..g.len()).filter(|&i| interior[i]) {
                assert!(sums[i] >= 2.0 * r - slack && sums[i] <= 4.0 * r + slack, "k={k} sum={}", sums[i]);
            }
            assert_eq!(t.asymmetry(), 0.0);
        }
    }

    #[test]
    fn scale_window() {
        let g = grid("A1", 1, 8.0, 257);
        assert!(scale_status(&g, 0).unwrap());
        assert!(!scale_status(&g, 4).unwrap());
        assert!(matches!(scale_status(&g, -3), Err(Error::ScaleOutOfRange { .. })));
        assert!(matches!(scale_status(&g, 9), Err(Error::ScaleOutOfRange { .. })));
    }

    #[test]
    fn family_identities() {
        let g = grid("A1", 1, 4.0, 65);
        let fam = build_family(g.clone(), default_bump(), 0, 3).unwrap();
        for k in fam.ks() {
            let s = fam.s(k);
            assert!(s.row_sums().iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!(s.asymmetry() < 1e-10);
            let n = g.len();
            let cut = 2f64.powi(2 - k);
            for i in 0..n {
                for j in 0..n {
                    if g.distance(i, j) >= cut {
                        assert_eq!(s.get(i, j), 0.0);
                    }
                }
            }
        }
        assert_eq!(fam.d(0).entries(), fam.s(0).entries());
        for k in 1..=3 {
            assert!(fam.d(k).row_sums().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn dkm_telescopes() {
        let g = grid("A1", 1, 4.0, 33);
        let fam = build_family(g, default_bump(), 0, 4).unwrap();
        let d0 = fam.dkm(0);
        for k in fam.ks() {
            assert!(d0[k as usize].max_abs_diff(fam.d(k)) < 1e-12);
        }
        let d1 = fam.dkm(1);
        // direct sum for an interior scale
        let direct = fam.d(1).add(fam.d(2)).unwrap().add(fam.d(3)).unwrap();
        assert!(d1[2].max_abs_diff(&direct) < 1e-10);
        let clipped = fam.d(3).add(fam.d(4)).unwrap();
        assert!(d1[4].max_abs_diff(&clipped) < 1e-10);
    }

    #[test]
    fn trivial_group_reproduces_constants() {
        let g = grid("TRIVIAL", 1, 4.0, 33);
        let fam = build_family(g.clone(), default_bump(), 0, 2).unwrap();
        let one = GridFunction::constant(g, 1.0);
        for k in fam.ks() {
            let r = fam.s(k).apply(&one).unwrap().sub(&one).unwrap();
            assert!(r.norm(NormKind::L2) < 1e-12);
        }
    }
}
