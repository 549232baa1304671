//! Discretized G-invariant singular integrals `K(x,y) = Σ_k c_k 2^{kN} φ(2^k d(x,y))`,
//! kernel-condition estimators, T1/WBP diagnostics, the L∞ extension,
//! paraproducts and the T1 reduction.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aoi::{smoothstep, ScaleFamily};
use crate::calderon::CalderonSystem;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, NormKind};
use crate::norms::{bmo_norm_with, holder_norm, BallMetric};
use crate::operator::{OperatorMatrix, DEFAULT_NORM_MAX_ITER};
use crate::reflection::{euclid, ReflectionGroup, RootSystem, DEFAULT_MAX_ORDER};
use crate::report::{Metric, VerificationReport};
use crate::stats;

const NORM_TOL: f64 = 1e-9;

/// Quintic cutoff: 1 on `[0,1]`, 0 beyond 2, C² in between.
pub fn smootherstep(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let s = a - 1.0;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `q(t)(1 − a_N t²)` with `a_N` fixing `∫_{ℝᴺ} φ(|z|) dz = 0`.
    SmoothstepD2,
    /// The cutoff `q` itself; nonzero mean.
    Smoothstep,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::SmoothstepD2 => "smoothstep_d2",
            Profile::Smoothstep => "smoothstep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smoothstep_d2" => Ok(Profile::SmoothstepD2),
            "smoothstep" => Ok(Profile::Smoothstep),
            _ => Err(Error::config("profile", format!("unknown profile `{s}`"))),
        }
    }
}

/// `∫_0^2 q(r) r^{N−1} dr / ∫_0^2 q(r) r^{N+1} dr` by composite Simpson.
pub fn zero_mean_coefficient(dim: usize) -> f64 {
    let steps = 20_000;
    let h = 2.0 / steps as f64;
    let simpson = |p: i32| {
        let mut s = 0.0;
        for i in 0..=steps {
            let r = i as f64 * h;
            let c = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += c * smootherstep(r) * r.powi(p);
        }
        s * h / 3.0
    };
    simpson(dim as i32 - 1) / simpson(dim as i32 + 1)
}

fn default_dim() -> usize {
    1
}

/// JSON descriptor of an example kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub group: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub profile: Profile,
    pub k_min: i32,
    pub k_max: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

impl KernelSpec {
    pub fn new(group: &str, dim: usize, profile: Profile, k_min: i32, k_max: i32) -> Self {
        KernelSpec { group: group.into(), dim, profile, k_min, k_max, coefficients: None }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn compile(&self) -> Result<Kernel> {
        if self.k_max < self.k_min {
            return Err(Error::config("k_max", "must be at least k_min"));
        }
        let count = (self.k_max - self.k_min + 1) as usize;
        let coefficients = match &self.coefficients {
            Some(c) if c.len() != count => {
                return Err(Error::config("coefficients", format!("expected {count} values, got {}", c.len())))
            }
            Some(c) => c.clone(),
            None => vec![1.0; count],
        };
        let rs = RootSystem::from_name_or_file(&self.group, self.dim)?;
        let group = Arc::new(ReflectionGroup::generate(&rs, DEFAULT_MAX_ORDER)?);
        let a = match self.profile {
            Profile::SmoothstepD2 => zero_mean_coefficient(group.dim()),
            Profile::Smoothstep => 0.0,
        };
        Ok(Kernel { spec: self.clone(), group, a, coefficients })
    }
}

/// A compiled [`KernelSpec`].
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    group: Arc<ReflectionGroup>,
    a: f64,
    coefficients: Vec<f64>,
}

impl Kernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn group(&self) -> &Arc<ReflectionGroup> {
        &self.group
    }

    pub fn profile(&self, t: f64) -> f64 {
        smootherstep(t) * (1.0 - self.a * t * t)
    }

    /// `Σ_k c_k 2^{kN} φ(2^k d)`.
    pub fn radial(&self, d: f64) -> f64 {
        let n = self.group.dim() as i32;
        (self.spec.k_min..=self.spec.k_max)
            .zip(&self.coefficients)
            .map(|(k, c)| {
                let s = 2f64.powi(k);
                c * s.powi(n) * self.profile(s * d)
            })
            .sum()
    }
}

pub fn eval_kernel(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(kernel.radial(kernel.group.orbit_distance(x, y)?))
}

fn same_group(a: &ReflectionGroup, b: &ReflectionGroup) -> bool {
    a.dim() == b.dim()
        && a.order() == b.order()
        && a.elements().iter().all(|m| {
            b.elements()
                .iter()
                .any(|o| (0..a.dim()).all(|i| (0..a.dim()).all(|j| (m.get(i, j) - o.get(i, j)).abs() < 1e-9)))
        })
}

#[derive(Debug, Clone)]
pub struct DiscreteSIO {
    pub operator: OperatorMatrix,
    pub spec: KernelSpec,
    /// Regularity exponent used when reporting kernel constants.
    pub epsilon: f64,
}

impl DiscreteSIO {
    pub fn grid(&self) -> &Arc<Grid> {
        self.operator.grid()
    }
}

pub fn build_discrete_sio(kernel: &Kernel, grid: &Arc<Grid>) -> Result<DiscreteSIO> {
    if !same_group(kernel.group(), grid.group()) {
        return Err(Error::GridMismatch);
    }
    let n = grid.len();
    let d = grid.distance_matrix();
    let operator = OperatorMatrix::from_kernel(grid.clone(), |i, j| kernel.radial(d[i * n + j]));
    Ok(DiscreteSIO { operator, spec: kernel.spec.clone(), epsilon: 1.0 })
}

/// Size, both first differences and the double difference of the kernel,
/// measured on grid points.
pub fn estimate_kernel_constants(
    kernel: &Kernel,
    grid: &Grid,
    epsilon: f64,
    sample_budget: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::config("epsilon", "must lie in (0, 1]"));
    }
    if !same_group(kernel.group(), grid.group()) {
        return Err(Error::GridMismatch);
    }
    let n = grid.len();
    let dim = grid.dim() as i32;
    let k = |i: usize, j: usize| kernel.radial(grid.distance(i, j));
    let mut rep = VerificationReport::new("kernel");

    let size_score = |i: usize, j: usize| {
        let d = grid.distance(i, j);
        if d > 0.0 {
            k(i, j).abs() * d.powi(dim)
        } else {
            0.0
        }
    };
    let (size, si, sj, exhaustive) = if n * n <= sample_budget {
        let best = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (size_score(i, j), i, j))
            .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 { b } else { a });
        (best.0, best.1, best.2, true)
    } else {
        let mut rng = stats::rng(seed, 11);
        let mut best = (0.0, 0, 0);
        for _ in 0..sample_budget {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let s = size_score(i, j);
            if s > best.0 {
                best = (s, i, j);
            }
        }
        (best.0, best.1, best.2, false)
    };
    let mut m = Metric::new("size_const", size, "1").finite().witness([grid.point(si), grid.point(sj)].concat());
    if !exhaustive {
        m = m.note("sampled pairs");
    }
    rep.push(m);

    // triples (x, x', y, y') with x' near x and y' near y
    let h = grid.min_spacing();
    let mut rng = stats::rng(seed, 12);
    let near = |rng: &mut rand_chacha::ChaCha8Rng, i: usize, reach: f64| -> Option<usize> {
        let m = ((reach / h).floor() as i64).max(1);
        let delta: Vec<i64> = (0..grid.dim()).map(|_| rng.gen_range(-m..=m)).collect();
        grid.shifted(i, &delta)
    };
    let mut samples = Vec::with_capacity(sample_budget / 4);
    let mut rejected = 0usize;
    for _ in 0..sample_budget / 4 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let d = grid.distance(i, j);
        if d == 0.0 {
            rejected += 1;
            continue;
        }
        let (Some(i2), Some(j2)) = (near(&mut rng, i, 0.5 * d), near(&mut rng, j, 0.5 * d)) else {
            rejected += 1;
            continue;
        };
        let (dx, dy) = (grid.distance(i, i2), grid.distance(j, j2));
        if dx == 0.0 || dy == 0.0 || dx > 0.5 * d || dy > 0.5 * d {
            rejected += 1;
            continue;
        }
        samples.push((i, i2, j, j2));
    }
    let scores: Vec<[f64; 3]> = samples
        .par_iter()
        .map(|&(i, i2, j, j2)| {
            let d = grid.distance(i, j);
            let (dx, dy) = (grid.distance(i, i2), grid.distance(j, j2));
            let sx = (k(i, j) - k(i2, j)).abs() * d.powf(dim as f64 + epsilon) / dx.powf(epsilon);
            let sy = (k(i, j) - k(i, j2)).abs() * d.powf(dim as f64 + epsilon) / dy.powf(epsilon);
            let dd = (k(i, j) - k(i2, j) - k(i, j2) + k(i2, j2)).abs() * d.powf(dim as f64 + 2.0 * epsilon)
                / (dx * dy).powf(epsilon);
            [sx, sy, dd]
        })
        .collect();
    let violations = samples
        .iter()
        .filter(|&&(i, i2, j, j2)| {
            let d = grid.distance(i, j);
            grid.distance(i, i2) > 0.5 * d || grid.distance(j, j2) > 0.5 * d
        })
        .count();
    for (c, name) in ["smooth_x_const", "smooth_y_const", "double_difference_const"].iter().enumerate() {
        let (mut best, mut at) = (0.0, 0);
        for (t, s) in scores.iter().enumerate() {
            if s[c] > best {
                best = s[c];
                at = t;
            }
        }
        let mut m = Metric::new(*name, best, "1").finite();
        if let Some(&(i, i2, j, j2)) = samples.get(at) {
            m = m.witness([grid.point(i), grid.point(i2), grid.point(j), grid.point(j2)].concat());
        }
        rep.push(m);
    }
    rep.push(Metric::new("admissible_triples", samples.len() as f64, "count").note(format!("{rejected} rejected")));
    rep.push(Metric::new("admissibility_violations", violations as f64, "count").at_most(0.0));
    rep.push(Metric::new("epsilon", epsilon, "1"));
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct SioCheck {
    /// `bmo(T1)`, `bmo(T*1)` as a fraction of `‖T‖`.
    pub bmo_ratio_ceiling: f64,
    pub invariance_tol: f64,
}

impl Default for SioCheck {
    fn default() -> Self {
        SioCheck { bmo_ratio_ceiling: 0.1, invariance_tol: 1e-9 }
    }
}

/// `T1`, `T*1`, their oscillation on the interior, invariance, and `‖T‖`.
pub fn t1_diagnostics(t: &OperatorMatrix, family: &ScaleFamily, check: &SioCheck) -> Result<VerificationReport> {
    let grid = t.grid();
    if !grid.same_as(family.grid()) {
        return Err(Error::GridMismatch);
    }
    let one = GridFunction::constant(grid.clone(), 1.0);
    let t1 = t.apply(&one)?;
    let ts1 = t.adjoint().apply(&one)?;
    let mask = family.interior_mask();
    let norm = t.l2_norm(NORM_TOL, DEFAULT_NORM_MAX_ITER)?;
    let mut rep = VerificationReport::new("t1");
    rep.push(Metric::new("operator_norm", norm, "1"));
    for (name, f) in [("t1", &t1), ("tstar1", &ts1)] {
        let b = bmo_norm_with(f, BallMetric::Euclidean, Some(&mask));
        let m = Metric::new(format!("bmo_{name}"), b.value, "1").witness(b.witness.clone());
        rep.push(if norm > 0.0 { m.at_most(check.bmo_ratio_ceiling * norm) } else { m.at_most(0.0) });
        rep.push(Metric::new(format!("{name}_invariance_defect"), f.invariance_defect(), "1").at_most(check.invariance_tol));
        let interior_sup = f.values().iter().zip(&mask).filter(|(_, &m)| m).fold(0.0f64, |a, (v, _)| a.max(v.abs()));
        rep.push(Metric::new(format!("{name}_interior_sup"), interior_sup, "1"));
    }
    Ok(rep)
}

/// `T1` as a CSV table over the grid.
pub fn t1_table(t: &OperatorMatrix) -> Result<String> {
    let one = GridFunction::constant(t.grid().clone(), 1.0);
    Ok(t.apply(&one)?.to_csv())
}

/// Normalized test bump supported in the orbit ball of `center`, radius `radius`.
#[derive(Debug, Clone)]
pub struct WbpBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub f: GridFunction,
}

/// Tensor quintic bumps of half-width `r/√N` (and half that), averaged
/// over G and scaled so that `‖·‖∞ ≤ 1` and the η-Hölder norm is at most
/// `r^{−η}`. Radii `2^{−k}` span `ks`; centres are seeded draws from the
/// even-integer sublattice of the inner half of the box, plus the origin.
pub fn bump_library(grid: &Arc<Grid>, eta: f64, ks: &[i32], centers: usize, seed: u64) -> Result<Vec<WbpBump>> {
    let mut rng = stats::rng(seed, 21);
    let half = grid.min_half_width() / 2.0;
    let lattice: Vec<i64> = (-(half / 2.0).floor() as i64..=(half / 2.0).floor() as i64).collect();
    let mut cs = vec![vec![0.0; grid.dim()]];
    while cs.len() < centers.max(1) {
        cs.push((0..grid.dim()).map(|_| 2.0 * lattice[rng.gen_range(0..lattice.len())] as f64).collect());
    }
    let root = (grid.dim() as f64).sqrt();
    let mut out = Vec::new();
    for c in &cs {
        for &k in ks {
            let r = 2f64.powi(-k);
            for shrink in [1.0, 0.5] {
                let rho = shrink * r / root;
                let raw = GridFunction::from_fn(grid.clone(), |x| {
                    x.iter().zip(c).map(|(x, c)| smootherstep(2.0 * (x - c) / rho)).product()
                })
                .symmetrize();
                if raw.norm(NormKind::Linf) == 0.0 {
                    continue;
                }
                let hn = holder_norm(&raw, eta)?.value;
                let s = if hn > 0.0 { (r.powf(-eta) / hn).min(1.0) } else { 1.0 };
                out.push(WbpBump { center: c.clone(), radius: r, f: raw.scale(s) });
            }
        }
    }
    Ok(out)
}

/// `sup |⟨g, Tf⟩| / rᴺ` over library pairs sharing centre and radius.
pub fn wbp_constant(t: &OperatorMatrix, library: &[WbpBump]) -> Result<VerificationReport> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let dim = t.grid().dim() as i32;
    let images: Vec<GridFunction> = library.par_iter().map(|b| t.apply(&b.f)).collect::<Result<_>>()?;
    let mut best = (0.0, 0usize, 0usize);
    for (a, fa) in library.iter().enumerate() {
        for (b, gb) in library.iter().enumerate() {
            if fa.center != gb.center || fa.radius != gb.radius {
                continue;
            }
            let v = gb.f.inner(&images[a])?.abs() / fa.radius.powi(dim);
            if v > best.0 {
                best = (v, a, b);
            }
        }
    }
    let mut rep = VerificationReport::new("wbp");
    let w = &library[best.1];
    rep.push(
        Metric::new("wbp_const", best.0, "1")
            .finite()
            .witness([w.center.as_slice(), &[w.radius]].concat()),
    );
    rep.push(Metric::new("library_size", library.len() as f64, "count"));
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct DecayCheck {
    pub alpha: f64,
    /// Smoothness index for the smoothing ratios.
    pub s: f64,
    /// Larger exponent for ratio (iii).
    pub beta: f64,
    pub order: usize,
    pub uniformity: f64,
    pub flatness_ceiling: f64,
}

impl Default for DecayCheck {
    fn default() -> Self {
        DecayCheck { alpha: 0.5, s: 0.5, beta: 0.75, order: 3, uniformity: 4.0, flatness_ceiling: 0.5 }
    }
}

fn interior_sup(f: &GridFunction, mask: &[bool]) -> f64 {
    f.values().iter().zip(mask).filter(|(_, &m)| m).fold(0.0, |a, (v, _)| a.max(v.abs()))
}

/// Per-scale `2^{αk} sup|D_k(Tf)|` with its fitted slope in `k`, and the
/// four smoothing ratios of `D_k` and `D_k^M` on `f`. Values are listed
/// for every `k > k_min`; slope and max/min spread use resolved scales.
pub fn dk_tf_decay(t: &OperatorMatrix, f: &GridFunction, family: &ScaleFamily, check: &DecayCheck) -> Result<VerificationReport> {
    let mask = family.interior_mask();
    let tf = t.apply(f)?;
    let ks: Vec<i32> = family.ks().skip(1).collect();
    let mut rep = VerificationReport::new("dk_tf");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &k in &ks {
        let v = 2f64.powf(check.alpha * k as f64) * interior_sup(&family.d(k).apply(&tf)?, &mask);
        rep.push(Metric::new(format!("scaled_dk_tf_k{k}"), v, "1"));
        if v > 0.0 && family.is_resolved(k) {
            xs.push(k as f64);
            ys.push(v.log2());
        }
    }
    let slope = stats::linear_fit(&xs, &ys).map_or(0.0, |p| p.0);
    rep.push(Metric::new("dk_tf_slope", slope, "1").at_most(check.flatness_ceiling));

    // constants and zero have no smoothing ratios
    match smoothing_ratios(f, family, check) {
        Ok(r) => r.metrics.into_iter().for_each(|m| {
            rep.push(m);
        }),
        Err(Error::ZeroInput) => {}
        Err(e) => return Err(e),
    }
    Ok(rep)
}

/// The four smoothing ratios of `D_k` and `D_k^M` on `f` per scale
/// `k > k_min`, with max/min spreads over resolved scales.
pub fn smoothing_ratios(f: &GridFunction, family: &ScaleFamily, check: &DecayCheck) -> Result<VerificationReport> {
    let mask = family.interior_mask();
    let ks: Vec<i32> = family.ks().skip(1).collect();
    let mut rep = VerificationReport::new("smoothing");
    let fs = holder_norm(f, check.s)?.value;
    let finf = f.norm(NormKind::Linf);
    if fs == 0.0 || finf == 0.0 {
        return Err(Error::ZeroInput);
    }
    let dkm = family.dkm(check.order);
    let mut ratios: [Vec<f64>; 4] = Default::default();
    for &k in &ks {
        let dk = family.d(k).apply(f)?;
        let p = 2f64.powf(k as f64);
        ratios[0].push(interior_sup(&dk, &mask) * p.powf(check.s) / fs);
        ratios[1].push(holder_norm(&dk, check.s)?.value / (p.powf(check.s) * finf));
        ratios[2].push(holder_norm(&dk, check.beta)?.value / (p.powf(check.beta - check.s) * fs));
        let dm = dkm[(k - family.k_min()) as usize].apply(f)?;
        ratios[3].push(holder_norm(&dm, check.s)?.value / (check.order as f64 * fs));
    }
    for (name, r) in ["smoothing_i", "smoothing_ii", "smoothing_iii", "smoothing_iv"].iter().zip(&ratios) {
        let hi = r.iter().cloned().fold(0.0, f64::max);
        let kept: Vec<f64> = ks.iter().zip(r).filter(|(&k, _)| family.is_resolved(k)).map(|(_, &v)| v).collect();
        rep.push(Metric::new(format!("{name}_max"), hi, "1").witness(r.clone()));
        rep.push(match stats::spread(&kept) {
            Some(spread) => Metric::new(format!("{name}_spread"), spread, "1").at_most(check.uniformity),
            None => Metric::new(format!("{name}_spread"), f64::NAN, "1").note("no resolved scale above k_min"),
        });
    }
    Ok(rep)
}

/// `F^R` on the region `|x| < R`.
#[derive(Debug, Clone)]
pub struct Extension {
    pub values: GridFunction,
    pub region: Vec<bool>,
    pub constant: f64,
}

/// `F^R(x) = T(f·1_{|y|<2R})(x) + Σ_{|y|≥2R} [K(x,y) − K(0,y)] f(y) w_y − C(R)`
/// with `C(R) = Σ_{|y|<2R} K(0,y) f w − Σ_{|y|<1} K(0,y) f w`, which is the
/// annulus sum `1 ≤ |y| < 2R` for `R ≥ ½` and keeps `F^R` nested for all `R`.
pub fn extend_to_linfty(t: &OperatorMatrix, f: &GridFunction, r: f64) -> Result<Extension> {
    let grid = t.grid();
    if !grid.same_as(f.grid()) {
        return Err(Error::GridMismatch);
    }
    let o = grid.origin_index().ok_or(Error::OriginMissing)?;
    let hw = grid.min_half_width();
    if !(r > 0.0) || r > hw / 4.0 {
        return Err(Error::RTooLarge { r, half_width: hw });
    }
    let (defect, i, j) = f.invariance_witness();
    if defect > 1e-9 * f.norm(NormKind::Linf).max(1.0) {
        return Err(Error::NotInvariant { defect, i, j });
    }
    let n = grid.len();
    let w = grid.weights();
    let v = f.values();
    let zero = vec![0.0; grid.dim()];
    let radius: Vec<f64> = (0..n).map(|i| euclid(grid.point(i), &zero)).collect();
    let k0 = t.row(o);
    let near: Vec<bool> = radius.iter().map(|&d| d < 2.0 * r).collect();
    let constant: f64 = (0..n)
        .map(|y| {
            let inner = near[y] as u8 as f64 - (radius[y] < 1.0) as u8 as f64;
            inner * k0[y] * v[y] * w[y]
        })
        .sum();
    let region: Vec<bool> = radius.iter().map(|&d| d < r).collect();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x| {
            if !region[x] {
                return 0.0;
            }
            let row = t.row(x);
            let mut s = 0.0;
            for y in 0..n {
                let kern = if near[y] { row[y] } else { row[y] - k0[y] };
                s += kern * v[y] * w[y];
            }
            s - constant
        })
        .collect();
    Ok(Extension { values: GridFunction::new(grid.clone(), values)?, region, constant })
}

/// Nested consistency of `F^R` and its measured BMO constant.
pub fn linfty_extension_report(t: &OperatorMatrix, f: &GridFunction, radii: &[f64]) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("linfty");
    let exts: Vec<Extension> = radii.iter().map(|&r| extend_to_linfty(t, f, r)).collect::<Result<_>>()?;
    let mut nested: f64 = 0.0;
    for a in 0..exts.len() {
        for b in 0..exts.len() {
            if radii[a] < radii[b] {
                for i in 0..f.values().len() {
                    if exts[a].region[i] {
                        nested = nested.max((exts[a].values.values()[i] - exts[b].values.values()[i]).abs());
                    }
                }
            }
        }
    }
    rep.push(Metric::new("nested_consistency", nested, "1").at_most(1e-9));
    let finf = f.norm(NormKind::Linf);
    if let Some((e, &r)) = exts.iter().zip(radii).last() {
        let b = bmo_norm_with(&e.values, BallMetric::Euclidean, Some(&e.region));
        let c = if finf > 0.0 { b.value / finf } else { 0.0 };
        rep.push(Metric::new("bmo_const", c, "1").finite().witness(vec![r]));
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct ParaproductSystem {
    pub b: GridFunction,
    pub operator: OperatorMatrix,
    /// `b̃ = Σ_k D̃_k D_k b` over the same scales.
    pub b_tilde: GridFunction,
    pub ks: Vec<i32>,
}

/// `Π_b = Σ_k D̃_k · diag(D_k b) · S_k` over the system's interior scales.
pub fn build_paraproduct(b: &GridFunction, sys: &CalderonSystem) -> Result<ParaproductSystem> {
    let (defect, i, j) = b.invariance_witness();
    if defect > 1e-9 * b.norm(NormKind::Linf).max(1.0) {
        return Err(Error::NotInvariant { defect, i, j });
    }
    let family = sys.family();
    let ks = sys.interior_ks();
    let grid = family.grid().clone();
    let parts: Vec<(OperatorMatrix, Vec<f64>)> = ks
        .par_iter()
        .map(|&k| {
            let dkb = family.d(k).apply(b)?;
            let term = sys.tilde(k).scale_cols(dkb.values()).compose(family.s(k))?;
            let tilde = sys.tilde(k).apply(&dkb)?.into_values();
            Ok((term, tilde))
        })
        .collect::<Result<_>>()?;
    let mut operator = OperatorMatrix::zeros(grid.clone());
    let mut bt = vec![0.0; grid.len()];
    for (term, tilde) in &parts {
        operator.axpy(1.0, term)?;
        bt.iter_mut().zip(tilde).for_each(|(a, v)| *a += v);
    }
    Ok(ParaproductSystem { b: b.clone(), operator, b_tilde: GridFunction::new(grid, bt)?, ks })
}

#[derive(Debug, Clone)]
pub struct ParaproductCheck {
    pub reproduction_ceiling: f64,
    pub adjoint_ceiling: f64,
    pub spread_ceiling: f64,
}

impl Default for ParaproductCheck {
    fn default() -> Self {
        ParaproductCheck { reproduction_ceiling: 0.05, adjoint_ceiling: 1e-8, spread_ceiling: 10.0 }
    }
}

pub fn verify_paraproduct(ps: &ParaproductSystem, check: &ParaproductCheck) -> Result<VerificationReport> {
    let grid = ps.operator.grid().clone();
    let one = GridFunction::constant(grid, 1.0);
    let p1 = ps.operator.apply(&one)?;
    let diff = p1.sub(&ps.b_tilde)?.norm(NormKind::L2);
    let bt = ps.b_tilde.norm(NormKind::L2);
    let rel = if bt > 0.0 { diff / bt } else { diff };
    let adj = ps.operator.adjoint().apply(&one)?.norm(NormKind::L2);
    let mut rep = VerificationReport::new("paraproduct");
    rep.push(Metric::new("reproduction", rel, "1").at_most(check.reproduction_ceiling).note("‖Π_b1 − b̃‖₂/‖b̃‖₂"));
    rep.push(Metric::new("adjoint_one", adj, "1").at_most(check.adjoint_ceiling));
    rep.push(Metric::new("b_tilde_l2", bt, "1"));
    Ok(rep)
}

/// `‖Π_b‖ / bmo(b)` over a corpus, with the max/min spread.
pub fn paraproduct_corpus_report(corpus: &[GridFunction], sys: &CalderonSystem, check: &ParaproductCheck) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("paraproduct_corpus");
    let mut ratios = Vec::new();
    let mask = sys.family().interior_mask();
    for (i, b) in corpus.iter().enumerate() {
        let ps = build_paraproduct(b, sys)?;
        let norm = ps.operator.l2_norm(NORM_TOL, DEFAULT_NORM_MAX_ITER)?;
        let bmo = bmo_norm_with(b, BallMetric::Euclidean, Some(&mask)).value;
        let r = norm / bmo;
        rep.push(Metric::new(format!("norm_over_bmo_{i}"), r, "1").witness(vec![norm, bmo]));
        ratios.push(r);
    }
    let spread = stats::spread(&ratios).unwrap_or(f64::INFINITY);
    rep.push(Metric::new("norm_over_bmo_spread", spread, "1").at_most(check.spread_ceiling));
    Ok(rep)
}

/// `T̃ = T − Π_{T1} − (Π_{T*1})*`.
pub fn reduce(t: &OperatorMatrix, sys: &CalderonSystem) -> Result<OperatorMatrix> {
    let one = GridFunction::constant(t.grid().clone(), 1.0);
    let t1 = t.apply(&one)?;
    let ts1 = t.adjoint().apply(&one)?;
    let p = build_paraproduct(&t1, sys)?;
    let q = build_paraproduct(&ts1, sys)?;
    let mut out = t.sub(&p.operator)?;
    out.axpy(-1.0, &q.operator.adjoint())?;
    Ok(out)
}

/// Audits `T̃1` and `T̃*1` against the truncation residuals `T1 − (T1)~`,
/// measures idempotence of the reduction and the decay of `‖D_{k′} T̃ D_k‖`.
pub fn t1_reduction(t: &OperatorMatrix, sys: &CalderonSystem) -> Result<VerificationReport> {
    let grid = t.grid().clone();
    let one = GridFunction::constant(grid.clone(), 1.0);
    let reduced = reduce(t, sys)?;
    let mut rep = VerificationReport::new("t1_reduction");
    for (name, op, base) in [("t", &reduced, t.clone()), ("tstar", &reduced.adjoint(), t.adjoint())] {
        let r1 = op.apply(&one)?.norm(NormKind::L2);
        let b = base.apply(&one)?;
        let ps = build_paraproduct(&b, sys)?;
        let repro = ps.operator.apply(&one)?.sub(&ps.b_tilde)?.norm(NormKind::L2);
        let trunc = b.sub(&ps.b_tilde)?.norm(NormKind::L2);
        let adj = {
            let other = if name == "t" { t.adjoint() } else { t.clone() };
            let c = build_paraproduct(&other.apply(&one)?, sys)?;
            c.operator.adjoint().apply(&one)?.norm(NormKind::L2)
        };
        rep.push(Metric::new(format!("reduced_{name}_one"), r1, "1").witness(vec![repro, trunc, adj]));
        rep.push(
            Metric::new(format!("reduced_{name}_one_audit"), r1 - (repro + trunc + adj), "1")
                .at_most(1e-10 * (1.0 + b.norm(NormKind::L2)))
                .note("‖T̃1‖ − (reproduction + truncation + adjoint residuals)"),
        );
        rep.push(Metric::new(format!("truncation_residual_{name}"), trunc, "1"));
    }
    let t_norm = t.l2_norm(NORM_TOL, DEFAULT_NORM_MAX_ITER)?;
    let r_norm = reduced.l2_norm(NORM_TOL, DEFAULT_NORM_MAX_ITER)?;
    rep.push(Metric::new("operator_norm", t_norm, "1"));
    rep.push(Metric::new("reduced_norm", r_norm, "1"));
    let again = reduce(&reduced, sys)?;
    let idem = again.sub(&reduced)?.l2_norm(NORM_TOL, DEFAULT_NORM_MAX_ITER)? / t_norm.max(f64::MIN_POSITIVE);
    rep.push(
        Metric::new("idempotence_defect", idem, "1")
            .at_most(1e-8)
            .note("‖R(R(T)) − R(T)‖/‖T‖; nonzero iff the truncation residual is"),
    );
    let rebuilt = reduce(t, sys)?;
    rep.push(Metric::new("rebuild_defect", rebuilt.max_abs_diff(&reduced), "1").at_most(0.0));

    let family = sys.family();
    let ks = sys.interior_ks();
    let pairs: Vec<(i32, i32)> = ks.iter().flat_map(|&a| ks.iter().map(move |&b| (a, b))).collect();
    let norms: Vec<(i32, i32, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let m = family.d(a).compose(&reduced)?.compose(family.d(b))?;
            Ok((a, b, m.l2_norm(NORM_TOL, DEFAULT_NORM_MAX_ITER)?))
        })
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        norms.iter().filter(|p| p.2 > 0.0).map(|&(a, b, v)| ((a - b).abs() as f64, v.log2())).unzip();
    let slope = stats::linear_fit(&xs, &ys).map_or(f64::NAN, |p| p.0);
    rep.push(Metric::new("reduced_decay_slope", slope, "1").at_most(0.0));
    Ok(rep)
}

/// `h_ε(x) = Σ_y ψ(d(x,y)/ε) f(y) w_y / c(x)` with the smoothstep cutoff ψ
/// and `c(x)` making rows sum to one.
pub fn mollify_g(f: &GridFunction, eps: f64) -> Result<GridFunction> {
    let grid = f.grid();
    let min = 4.0 * grid.min_spacing();
    if !(eps >= min - 1e-12) {
        return Err(Error::EpsTooSmall { eps, min });
    }
    let n = grid.len();
    let w = grid.weights();
    let v = f.values();
    let d = grid.distance_matrix();
    let out: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                let p = smoothstep(d[i * n + j] / eps) * w[j];
                num += p * v[j];
                den += p;
            }
            num / den
        })
        .collect();
    GridFunction::new(grid.clone(), out)
}

/// `‖h_ε − f‖₂` at `ε ∈ {16, 8, 4}·spacing` and the output invariance.
pub fn mollify_report(f: &GridFunction) -> Result<VerificationReport> {
    let h = f.grid().min_spacing();
    let mut rep = VerificationReport::new("mollify");
    let mut errs = Vec::new();
    let mut defect: f64 = 0.0;
    for m in [16.0, 8.0, 4.0] {
        let g = mollify_g(f, m * h)?;
        defect = defect.max(g.invariance_defect());
        let e = g.sub(f)?.norm(NormKind::L2);
        rep.push(Metric::new(format!("error_eps{m}"), e, "1"));
        errs.push(e);
    }
    let decreasing = errs.windows(2).all(|p| p[1] < p[0]);
    rep.push(Metric::new("error_decreasing", decreasing as u8 as f64, "bool").flag(decreasing));
    rep.push(Metric::new("invariance_defect", defect, "1").at_most(1e-9));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aoi::{build_family, default_bump};
    use crate::calderon::Ordering;

    fn grid(preset: &str, dim: usize, l: f64, n: usize) -> Arc<Grid> {
        let g = ReflectionGroup::generate(&RootSystem::preset(preset, dim).unwrap(), DEFAULT_MAX_ORDER).unwrap();
        Grid::cube(l, n, Arc::new(g)).unwrap()
    }

    #[test]
    fn zero_mean_profile_integrates_to_zero() {
        for dim in 1..=2 {
            let a = zero_mean_coefficient(dim);
            let steps = 200_000;
            let h = 2.0 / steps as f64;
            let s: f64 = (0..steps)
                .map(|i| {
                    let r = (i as f64 + 0.5) * h;
                    smootherstep(r) * (1.0 - a * r * r) * r.powi(dim as i32 - 1)
                })
                .sum::<f64>()
                * h;
            assert!(s.abs() < 1e-9, "dim {dim}: {s}");
        }
    }

    #[test]
    fn single_scale_trivial_kernel_is_the_profile() {
        let k = KernelSpec::new("TRIVIAL", 1, Profile::SmoothstepD2, 0, 0).compile().unwrap();
        for x in [-1.3, 0.0, 0.4, 2.5] {
            assert_eq!(eval_kernel(&k, &[x], &[0.2]).unwrap(), k.profile((x - 0.2f64).abs()));
        }
    }

    #[test]
    fn kernel_is_bi_invariant_and_symmetric() {
        let k = KernelSpec::new("B2", 2, Profile::SmoothstepD2, 0, 2).compile().unwrap();
        let (x, y) = ([0.3, -0.7], [0.1, 0.45]);
        let v = eval_kernel(&k, &x, &y).unwrap();
        assert_eq!(v, eval_kernel(&k, &y, &x).unwrap());
        let g = k.group().clone();
        for s in 0..g.order() {
            for t in 0..g.order() {
                assert!((eval_kernel(&k, &g.act(s, &x), &g.act(t, &y)).unwrap() - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"group":"A1","profile":"smoothstep_d2","k_min":0,"k_max":2}"#;
        let s = KernelSpec::from_json(text).unwrap();
        assert_eq!(s.dim, 1);
        assert_eq!(KernelSpec::from_json(&serde_json::to_string(&s).unwrap()).unwrap(), s);
        let bad = KernelSpec { coefficients: Some(vec![1.0]), ..s };
        assert!(matches!(bad.compile(), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn sio_mismatch_and_symmetry() {
        let g = grid("A1", 1, 8.0, 65);
        let k = KernelSpec::new("A1", 1, Profile::SmoothstepD2, 0, 2).compile().unwrap();
        let t = build_discrete_sio(&k, &g).unwrap();
        assert_eq!(t.operator.asymmetry(), 0.0);
        assert_eq!(t.operator.conjugation_defect(), 0.0);
        let other = KernelSpec::new("TRIVIAL", 1, Profile::SmoothstepD2, 0, 2).compile().unwrap();
        assert!(matches!(build_discrete_sio(&other, &g), Err(Error::GridMismatch)));
    }

    #[test]
    fn size_constant_matches_brute_force_scan() {
        let g = grid("TRIVIAL", 1, 4.0, 65);
        let k = KernelSpec::new("TRIVIAL", 1, Profile::SmoothstepD2, 0, 0).compile().unwrap();
        let rep = estimate_kernel_constants(&k, &g, 1.0, 10_000, 1).unwrap();
        let h = g.min_spacing();
        let scan = (1..65).map(|m| k.profile(m as f64 * h).abs() * m as f64 * h).fold(0.0, f64::max);
        assert!((rep.value("size_const").unwrap() - scan).abs() < 1e-12 * scan);
        assert_eq!(rep.value("admissibility_violations"), Some(0.0));
    }

    #[test]
    fn wbp_is_linear_and_vanishes_for_zero() {
        let g = grid("A1", 1, 8.0, 65);
        let k = KernelSpec::new("A1", 1, Profile::SmoothstepD2, 0, 1).compile().unwrap();
        let t = build_discrete_sio(&k, &g).unwrap().operator;
        let lib = bump_library(&g, 0.5, &[0, 1], 3, 5).unwrap();
        let c = wbp_constant(&t, &lib).unwrap().value("wbp_const").unwrap();
        let c2 = wbp_constant(&t.scale(2.0), &lib).unwrap().value("wbp_const").unwrap();
        assert_eq!(c2, 2.0 * c);
        assert_eq!(wbp_constant(&OperatorMatrix::zeros(g.clone()), &lib).unwrap().value("wbp_const"), Some(0.0));
        assert!(matches!(wbp_constant(&t, &[]), Err(Error::EmptyLibrary)));
        for b in &lib {
            assert!(b.f.norm(NormKind::Linf) <= 1.0 + 1e-15);
            assert!(holder_norm(&b.f, 0.5).unwrap().value <= b.radius.powf(-0.5) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn extension_nests_and_degenerates_on_compact_support() {
        let g = grid("A1", 1, 8.0, 129);
        let k = KernelSpec::new("A1", 1, Profile::SmoothstepD2, 0, 2).compile().unwrap();
        let t = build_discrete_sio(&k, &g).unwrap().operator;
        let f = GridFunction::from_fn(g.clone(), |x| (1.7 * x[0]).cos());
        let rep = linfty_extension_report(&t, &f, &[0.75, 1.25, 2.0]).unwrap();
        assert!(rep.all_pass(), "{}", rep.summary());
        let bump = GridFunction::from_fn(g.clone(), |x| smootherstep(x[0] / 0.5));
        let e = extend_to_linfty(&t, &bump, 1.0).unwrap();
        let tf = t.apply(&bump).unwrap();
        for i in 0..g.len() {
            if e.region[i] {
                assert!((e.values.values()[i] - (tf.values()[i] - e.constant)).abs() < 1e-12);
            }
        }
        assert!(matches!(extend_to_linfty(&t, &f, 2.5), Err(Error::RTooLarge { .. })));
    }

    #[test]
    fn paraproduct_identities() {
        let g = grid("A1", 1, 8.0, 65);
        let fam = Arc::new(build_family(g.clone(), default_bump(), 0, 4).unwrap());
        let sys = CalderonSystem::build(fam, 1, Ordering::DkmFirst, 1e-10, 500).unwrap();
        let c = build_paraproduct(&GridFunction::constant(g.clone(), 3.0), &sys).unwrap();
        assert!(c.operator.max_abs() <= 1e-12);
        let b1 = GridFunction::from_fn(g.clone(), |x| (2.0 * x[0]).cos() * (-x[0] * x[0] / 8.0).exp());
        let b2 = GridFunction::from_fn(g.clone(), |x| (-(x[0].abs() - 2.0).powi(2)).exp());
        let p1 = build_paraproduct(&b1, &sys).unwrap();
        let p2 = build_paraproduct(&b2, &sys).unwrap();
        let p12 = build_paraproduct(&b1.add(&b2).unwrap(), &sys).unwrap();
        assert!(p12.operator.max_abs_diff(&p1.operator.add(&p2.operator).unwrap()) <= 1e-10);
        let rep = verify_paraproduct(&p1, &ParaproductCheck::default()).unwrap();
        assert!(rep.all_pass(), "{}", rep.summary());
        let odd = GridFunction::from_fn(g, |x| x[0]);
        assert!(matches!(build_paraproduct(&odd, &sys), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn mollifier_normalization() {
        let g = grid("A1", 1, 8.0, 129);
        let c = mollify_g(&GridFunction::constant(g.clone(), 2.0), 0.5).unwrap();
        assert!(c.values().iter().all(|v| (v - 2.0).abs() < 1e-10));
        assert!(matches!(mollify_g(&c, 0.1), Err(Error::EpsTooSmall { .. })));
        let f = GridFunction::from_fn(g, |x| (-x[0] * x[0]).exp() * (3.0 * x[0]).cos());
        let rep = mollify_report(&f).unwrap();
        assert!(rep.all_pass(), "{}", rep.summary());
    }
}
