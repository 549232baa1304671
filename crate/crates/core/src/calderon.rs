//! `T_M = Σ_k D_k^M D_k`, its Neumann inverse, the dual families `D̃_k`,
//! `D̃̃_k`, and reproduction residuals.
//!
//! The identity here is the identity of the G-invariant subspace, i.e. the
//! averaging projection `P_G`; every operator in the system annihilates the
//! non-invariant complement.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::aoi::ScaleFamily;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, NormKind};
use crate::operator::OperatorMatrix;
use crate::report::{Metric, VerificationReport};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// `Σ_k D_k^M D_k`
    DkmFirst,
    /// `Σ_k D_k D_k^M`
    DkFirst,
}

impl Ordering {
    pub fn name(self) -> &'static str {
        match self {
            Ordering::DkmFirst => "DkM_Dk",
            Ordering::DkFirst => "Dk_DkM",
        }
    }
}

fn check_order(family: &ScaleFamily, m: usize) -> Result<()> {
    let width = family.k_max() - family.k_min();
    if 2 * m as i32 > width {
        return Err(Error::RangeTooNarrow { m, width });
    }
    Ok(())
}

/// `(T_M, R_M)` with `R_M = P_G − T_M`, summed over the whole scale range.
pub fn build_tm(family: &ScaleFamily, m: usize, ordering: Ordering) -> Result<(OperatorMatrix, OperatorMatrix)> {
    check_order(family, m)?;
    let dkm = family.dkm(m);
    Ok(tm_from_dkm(family, &dkm, ordering))
}

fn tm_from_dkm(family: &ScaleFamily, dkm: &[OperatorMatrix], ordering: Ordering) -> (OperatorMatrix, OperatorMatrix) {
    let grid = family.grid().clone();
    let products: Vec<OperatorMatrix> = family
        .ks()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let a = &dkm[(k - family.k_min()) as usize];
            let d = family.d(k);
            match ordering {
                Ordering::DkmFirst => a.compose(d),
                Ordering::DkFirst => d.compose(a),
            }
            .expect("same grid")
        })
        .collect();
    let mut tm = OperatorMatrix::zeros(grid.clone());
    for p in &products {
        tm.axpy(1.0, p).expect("same grid");
    }
    let rm = OperatorMatrix::invariant_identity(grid).sub(&tm).expect("same grid");
    (tm, rm)
}

/// Smallest `m*` with `r^{m*+1}/(1−r) < tol`.
pub fn neumann_terms(r: f64, tol: f64) -> Option<usize> {
    if !(r < 1.0) || !(tol > 0.0) {
        return None;
    }
    if r <= 0.0 {
        return Some(0);
    }
    let mut m = 0usize;
    let mut p = r;
    while p / (1.0 - r) >= tol {
        m += 1;
        p *= r;
        if m > 1_000_000 {
            return None;
        }
    }
    Some(m)
}

#[derive(Debug, Clone)]
pub struct NeumannInverse {
    pub operator: OperatorMatrix,
    pub terms: usize,
    pub rm_norm: f64,
    /// `‖R‖^{m*+1}/(1−‖R‖)`
    pub tail_bound: f64,
}

/// Partial Neumann sum `Σ_{m=0}^{m*} R^m`, with `R^0 = P_G`.
pub fn invert_tm(rm: &OperatorMatrix, tol: f64, max_terms: usize) -> Result<NeumannInverse> {
    let r = rm.norm();
    if !(r < 1.0) {
        return Err(Error::NotContractive { norm: r });
    }
    let terms = neumann_terms(r, tol).ok_or(Error::NotContractive { norm: r })?;
    if terms > max_terms {
        return Err(Error::NoConvergence { estimate: r.powi(terms as i32 + 1) / (1.0 - r), iterations: max_terms });
    }
    let p = OperatorMatrix::invariant_identity(rm.grid().clone());
    // Horner: X ← P + R·X
    let mut x = p.clone();
    for _ in 0..terms {
        let mut next = rm.compose(&x)?;
        next.axpy(1.0, &p)?;
        x = next;
    }
    Ok(NeumannInverse { operator: x, terms, rm_norm: r, tail_bound: r.powi(terms as i32 + 1) / (1.0 - r) })
}

#[derive(Debug, Clone)]
pub struct CalderonSystem {
    family: Arc<ScaleFamily>,
    m: usize,
    ordering: Ordering,
    tm: OperatorMatrix,
    rm: OperatorMatrix,
    inverse: NeumannInverse,
    inversion_error: f64,
    dkm: Vec<OperatorMatrix>,
    tilde: Vec<OperatorMatrix>,
    tilde_tilde: Vec<OperatorMatrix>,
}

impl CalderonSystem {
    /// Builds `T_M`, `R_M`, the inverse and both dual families.
    pub fn build(family: Arc<ScaleFamily>, m: usize, ordering: Ordering, tol: f64, max_terms: usize) -> Result<Self> {
        check_order(&family, m)?;
        let dkm = family.dkm(m);
        let (tm, rm) = tm_from_dkm(&family, &dkm, ordering);
        let inverse = invert_tm(&rm, tol, max_terms)?;
        let p = OperatorMatrix::invariant_identity(family.grid().clone());
        let inversion_error = tm.compose(&inverse.operator)?.sub(&p)?.norm();
        let mut sys = CalderonSystem {
            family,
            m,
            ordering,
            tm,
            rm,
            inverse,
            inversion_error,
            dkm,
            tilde: Vec::new(),
            tilde_tilde: Vec::new(),
        };
        sys.build_tilde_families();
        Ok(sys)
    }

    /// `D̃_k = T_M⁻¹ D_k^M` and `D̃̃_k = D_k^M T_M⁻¹`.
    pub fn build_tilde_families(&mut self) {
        let inv = &self.inverse.operator;
        let pairs: Vec<(OperatorMatrix, OperatorMatrix)> = self
            .dkm
            .par_iter()
            .map(|a| (inv.compose(a).expect("same grid"), a.compose(inv).expect("same grid")))
            .collect();
        let (t, tt): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        self.tilde = t;
        self.tilde_tilde = tt;
    }

    pub fn family(&self) -> &Arc<ScaleFamily> {
        &self.family
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn tm(&self) -> &OperatorMatrix {
        &self.tm
    }

    pub fn rm(&self) -> &OperatorMatrix {
        &self.rm
    }

    pub fn rm_norm(&self) -> f64 {
        self.inverse.rm_norm
    }

    pub fn inverse(&self) -> &NeumannInverse {
        &self.inverse
    }

    /// `‖T_M·T_M⁻¹ − P_G‖`.
    pub fn inversion_error(&self) -> f64 {
        self.inversion_error
    }

    fn idx(&self, k: i32) -> usize {
        (k - self.family.k_min()) as usize
    }

    pub fn dkm(&self, k: i32) -> &OperatorMatrix {
        &self.dkm[self.idx(k)]
    }

    pub fn tilde(&self, k: i32) -> &OperatorMatrix {
        &self.tilde[self.idx(k)]
    }

    pub fn tilde_tilde(&self, k: i32) -> &OperatorMatrix {
        &self.tilde_tilde[self.idx(k)]
    }

    /// Scales whose `D_k^M` is not clipped at the coarse end, so that it
    /// and the dual operators built from it cancel constants.
    pub fn interior_ks(&self) -> Vec<i32> {
        self.family.ks().filter(|&k| k > self.family.k_min() + self.m as i32).collect()
    }

    /// `Σ_k D̃_k D_k f`.
    pub fn reconstruct(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut acc = vec![0.0; f.values().len()];
        for k in self.family.ks() {
            let dkf = self.family.d(k).apply(f)?;
            let v = self.tilde(k).apply(&dkf)?;
            acc.iter_mut().zip(v.values()).for_each(|(a, b)| *a += b);
        }
        GridFunction::new(f.grid().clone(), acc)
    }

    /// `Σ_k D_k D̃̃_k f`.
    pub fn reconstruct_dual(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut acc = vec![0.0; f.values().len()];
        for k in self.family.ks() {
            let v = self.tilde_tilde(k).apply(f)?;
            let v = self.family.d(k).apply(&v)?;
            acc.iter_mut().zip(v.values()).for_each(|(a, b)| *a += b);
        }
        GridFunction::new(f.grid().clone(), acc)
    }

    /// Largest row and column quadrature sums of `D̃_k` over interior scales.
    pub fn tilde_cancellation(&self) -> (f64, f64) {
        let mut rows: f64 = 0.0;
        let mut cols: f64 = 0.0;
        for k in self.interior_ks() {
            rows = rows.max(stats::max_abs(&self.tilde(k).row_sums()));
            cols = cols.max(stats::max_abs(&self.tilde(k).col_sums()));
        }
        (rows, cols)
    }
}

/// `‖R_M‖` for each `M`, strict decrease, and the fitted per-unit ratio.
pub fn rm_contraction_curve(family: &ScaleFamily, ms: &[usize], ordering: Ordering, ceiling: f64) -> Result<(VerificationReport, Vec<(usize, f64)>)> {
    let mut curve = Vec::new();
    for &m in ms {
        let (_, rm) = build_tm(family, m, ordering)?;
        curve.push((m, rm.norm()));
    }
    let mut rep = VerificationReport::new("contraction");
    for (m, r) in &curve {
        rep.push(Metric::new(format!("rm_norm_M{m}"), *r, "1"));
    }
    let decreasing = curve.windows(2).all(|w| w[1].1 < w[0].1);
    rep.push(Metric::new("rm_strictly_decreasing", decreasing as u8 as f64, "bool").flag(decreasing));
    let last = curve.last().map(|c| c.1).unwrap_or(f64::NAN);
    rep.push(Metric::new("rm_norm_last", last, "1").at_most(0.9));
    let xs: Vec<f64> = curve.iter().filter(|c| c.1 > 0.0).map(|c| c.0 as f64).collect();
    let ys: Vec<f64> = curve.iter().filter(|c| c.1 > 0.0).map(|c| c.1.log2()).collect();
    let ratio = stats::linear_fit(&xs, &ys).map(|(s, _)| 2f64.powf(s)).unwrap_or(f64::NAN);
    rep.push(Metric::new("rm_fitted_ratio", ratio, "per unit M").at_most(ceiling));
    let chosen = curve.iter().find(|c| c.1 < 0.9).map(|c| c.0 as f64).unwrap_or(f64::NAN);
    rep.push(Metric::new("smallest_contractive_M", chosen, "M").note("smallest probed M with norm below 0.9"));
    Ok((rep, curve))
}

/// `M_or_k,value` rows.
pub fn curve_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("M_or_k,value\n");
    for (x, y) in rows {
        let _ = writeln!(s, "{},{}", x, crate::grid::fmt_e(*y));
    }
    s
}

/// Reproduction residuals of both formulas for one input.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub residual: f64,
    pub dual_residual: f64,
    /// `‖D_k f‖₂` per scale.
    pub energy: Vec<f64>,
    pub mean: f64,
}

pub fn reproduce(f: &GridFunction, system: &CalderonSystem) -> Result<Reproduction> {
    let fnorm = f.norm(NormKind::L2);
    if fnorm == 0.0 {
        return Err(Error::ZeroInput);
    }
    let (defect, i, j) = f.invariance_witness();
    if defect > 1e-9 * f.norm(NormKind::Linf) {
        return Err(Error::NotInvariant { defect, i, j });
    }
    let rec = system.reconstruct(f)?;
    let dual = system.reconstruct_dual(f)?;
    let energy = system.family().ks().map(|k| system.family().d(k).apply(f).map(|g| g.norm(NormKind::L2))).collect::<Result<Vec<_>>>()?;
    Ok(Reproduction {
        residual: rec.sub(f)?.norm(NormKind::L2) / fnorm,
        dual_residual: dual.sub(f)?.norm(NormKind::L2) / fnorm,
        energy,
        mean: f.integral(),
    })
}

/// Report for one reproduction; inputs with nonzero mean are recorded but
/// carry no pass flag.
pub fn reproduce_report(f: &GridFunction, system: &CalderonSystem, ceiling: f64) -> Result<VerificationReport> {
    let r = reproduce(f, system)?;
    let mut rep = VerificationReport::new("reproduce");
    let mean_zero = r.mean.abs() <= 1e-8;
    let mut a = Metric::new("residual", r.residual, "relative");
    let mut b = Metric::new("dual_residual", r.dual_residual, "relative");
    if mean_zero {
        a = a.at_most(ceiling);
        b = b.at_most(ceiling);
    } else {
        a = a.note("input has nonzero mean; excluded from pass/fail");
        b = b.note("input has nonzero mean; excluded from pass/fail");
    }
    rep.push(a);
    rep.push(b);
    rep.push(Metric::new("energy_profile", r.energy.iter().cloned().fold(0.0, f64::max), "L2").witness(r.energy));
    Ok(rep)
}
