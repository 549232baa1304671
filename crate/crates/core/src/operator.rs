//! Dense quadrature-weighted operators: `(Af)(x_i) = Σ_j A_ij · w_j · f(x_j)`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{weighted_dot, Grid, GridFunction};

const BINARY_VERSION: u32 = 1;
const ROW_BLOCK: usize = 32;
const LANCZOS_BLOCK: usize = 48;

pub const DEFAULT_NORM_TOL: f64 = 1e-10;
pub const DEFAULT_NORM_MAX_ITER: usize = 20_000;

fn normalize(w: &[f64], v: &mut [f64]) {
    let nv = weighted_dot(w, v, v).sqrt();
    if nv > 0.0 {
        v.iter_mut().for_each(|x| *x /= nv);
    }
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    entries: Vec<f64>,
}

impl OperatorMatrix {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        OperatorMatrix { grid, entries: vec![0.0; n * n] }
    }

    pub fn from_entries(grid: Arc<Grid>, entries: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite operator entry".into()));
        }
        Ok(OperatorMatrix { grid, entries })
    }

    /// Kernel sampled on grid pairs, rows in parallel.
    pub fn from_kernel(grid: Arc<Grid>, kernel: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let n = grid.len();
        let mut entries = vec![0.0; n * n];
        entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel(i, j);
            }
        });
        OperatorMatrix { grid, entries }
    }

    /// Kernel `δ_ij / w_j`: the identity map.
    pub fn identity(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0 / grid.weights()[i];
        }
        OperatorMatrix { grid, entries }
    }

    /// Identity of the G-invariant subspace: the group-averaging projection.
    /// Equals [`OperatorMatrix::identity`] for the trivial group.
    pub fn invariant_identity(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        let order = grid.group().order();
        let mut entries = vec![0.0; n * n];
        for s in 0..order {
            let perm = grid.action(s);
            for i in 0..n {
                let j = perm[i];
                entries[i * n + j] += 1.0 / (order as f64 * grid.weights()[j]);
            }
        }
        OperatorMatrix { grid, entries }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let n = self.size();
        (0..n).map(|i| self.entries[i * n + j]).collect()
    }

    fn check(&self, other: &OperatorMatrix) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if !self.grid.same_as(f.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(GridFunction::from_raw(self.grid.clone(), self.apply_raw(f.values())))
    }

    pub(crate) fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        let n = self.size();
        let w = self.grid.weights();
        let wf: Vec<f64> = w.iter().zip(f).map(|(w, f)| w * f).collect();
        self.entries.par_chunks(n).map(|row| row.iter().zip(&wf).map(|(a, b)| a * b).sum()).collect()
    }

    /// Kernel of `x ↦ A(B(x))`: `Σ_k A_ik w_k B_kj`.
    pub fn compose(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check(other)?;
        let n = self.size();
        let w = self.grid.weights();
        let mut aw = self.entries.clone();
        aw.par_chunks_mut(n).for_each(|row| row.iter_mut().zip(w).for_each(|(a, w)| *a *= w));
        let mut out = vec![0.0; n * n];
        let b = &other.entries;
        out.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(|(blk, c)| {
            let r0 = blk * ROW_BLOCK;
            let rows = c.len() / n;
            // SAFETY: slices are sized rows×n, n×n and rows×n with the strides given.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    n,
                    n,
                    1.0,
                    aw[r0 * n..].as_ptr(),
                    n as isize,
                    1,
                    b.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
        Ok(OperatorMatrix { grid: self.grid.clone(), entries: out })
    }

    /// Adjoint in the weighted inner product; the kernel transposes.
    pub fn adjoint(&self) -> OperatorMatrix {
        let n = self.size();
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.entries[i * n + j];
            }
        });
        OperatorMatrix { grid: self.grid.clone(), entries: out }
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> OperatorMatrix {
        OperatorMatrix { grid: self.grid.clone(), entries: self.entries.iter().map(|v| c * v).collect() }
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &OperatorMatrix) -> Result<()> {
        self.check(other)?;
        self.entries.par_iter_mut().zip(&other.entries).for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    fn zip(&self, other: &OperatorMatrix, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<OperatorMatrix> {
        self.check(other)?;
        let entries = self.entries.par_iter().zip(&other.entries).map(|(&a, &b)| f(a, b)).collect();
        Ok(OperatorMatrix { grid: self.grid.clone(), entries })
    }

    /// Kernel of `diag(v) ∘ A`: rows scaled by `v`.
    pub fn scale_rows(&self, v: &[f64]) -> OperatorMatrix {
        let n = self.size();
        let mut out = self.entries.clone();
        out.par_chunks_mut(n).zip(v).for_each(|(row, s)| row.iter_mut().for_each(|a| *a *= s));
        OperatorMatrix { grid: self.grid.clone(), entries: out }
    }

    /// Kernel of `A ∘ diag(v)`: columns scaled by `v`.
    pub fn scale_cols(&self, v: &[f64]) -> OperatorMatrix {
        let n = self.size();
        let mut out = self.entries.clone();
        out.par_chunks_mut(n).for_each(|row| row.iter_mut().zip(v).for_each(|(a, s)| *a *= s));
        OperatorMatrix { grid: self.grid.clone(), entries: out }
    }

    /// `Σ_j A_ij w_j` for each row.
    pub fn row_sums(&self) -> Vec<f64> {
        let w = self.grid.weights();
        self.entries.par_chunks(self.size()).map(|row| row.iter().zip(w).map(|(a, w)| a * w).sum()).collect()
    }

    /// `Σ_i w_i A_ij` for each column.
    pub fn col_sums(&self) -> Vec<f64> {
        self.adjoint().row_sums()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `max |A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.size();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                m = m.max((self.entries[i * n + j] - self.entries[j * n + i]).abs());
            }
        }
        m
    }

    /// `max_{σ,i,j} |A(σ x_i, σ x_j) − A(x_i, x_j)|` via the action table.
    pub fn conjugation_defect(&self) -> f64 {
        let n = self.size();
        let mut m: f64 = 0.0;
        for s in 0..self.grid.group().order() {
            let p = self.grid.action(s);
            for i in 0..n {
                for j in 0..n {
                    m = m.max((self.entries[p[i] * n + p[j]] - self.entries[i * n + j]).abs());
                }
            }
        }
        m
    }

    /// `max_{σ,i,j} |A(σ x_i, x_j) − A(x_i, x_j)|`: left invariance, which
    /// together with symmetry gives G-bi-invariance.
    pub fn left_invariance_defect(&self) -> f64 {
        let n = self.size();
        let mut m: f64 = 0.0;
        for s in 0..self.grid.group().order() {
            let p = self.grid.action(s);
            for i in 0..n {
                let (a, b) = (self.row(p[i]), self.row(i));
                for j in 0..n {
                    m = m.max((a[j] - b[j]).abs());
                }
            }
        }
        m
    }

    /// Largest singular value in the weighted inner product.
    ///
    /// Power iteration on `A*A`, accelerated by running it inside a Krylov
    /// (Lanczos) block with full reorthogonalization and restarting from the
    /// top Ritz vector. Converged once the Ritz residual falls below
    /// `tol · ‖A‖²`, or the Ritz value repeats to `tol` across a restart.
    /// `max_iter` caps applications of `A*A`.
    pub fn l2_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::config("tol", "must be positive"));
        }
        let n = self.size();
        if n == 0 || self.entries.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let w = self.grid.weights();
        let adj = self.adjoint();
        let apply_b = |v: &[f64]| adj.apply_raw(&self.apply_raw(v));
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_0b5);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(w, &mut v);
        let block = LANCZOS_BLOCK.min(n);
        let mut used = 0;
        let mut best = 0.0;
        while used < max_iter {
            let mut basis: Vec<Vec<f64>> = vec![v.clone()];
            let mut alpha = Vec::new();
            let mut beta = Vec::new();
            let tail;
            loop {
                let j = basis.len() - 1;
                let mut z = apply_b(&basis[j]);
                used += 1;
                alpha.push(weighted_dot(w, &basis[j], &z));
                for _ in 0..2 {
                    for q in &basis {
                        let c = weighted_dot(w, q, &z);
                        z.iter_mut().zip(q).for_each(|(z, q)| *z -= c * q);
                    }
                }
                let b = weighted_dot(w, &z, &z).sqrt();
                if basis.len() == block || used >= max_iter || b <= 1e-14 * alpha[0].abs().max(f64::MIN_POSITIVE) {
                    tail = b;
                    break;
                }
                beta.push(b);
                z.iter_mut().for_each(|x| *x /= b);
                basis.push(z);
            }
            let m = alpha.len();
            let mut t = nalgebra::DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = nalgebra::SymmetricEigen::new(t);
            let (top, &theta) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty tridiagonal");
            if theta <= 0.0 {
                return Ok(0.0);
            }
            let prev = best;
            best = theta.sqrt();
            let y = eig.eigenvectors.column(top);
            if tail * y[m - 1].abs() <= tol * theta {
                return Ok(best);
            }
            // on tiny products roundoff in A*A can hold the residual above
            // tol·θ; a Ritz value frozen across a restart is converged
            if (best - prev).abs() <= tol * best {
                return Ok(best);
            }
            let mut next = vec![0.0; n];
            for (c, q) in y.iter().zip(&basis) {
                next.iter_mut().zip(q).for_each(|(x, q)| *x += c * q);
            }
            normalize(w, &mut next);
            v = next;
        }
        Err(Error::NoConvergence { estimate: best, iterations: used })
    }

    /// [`OperatorMatrix::l2_norm`] with default tolerances; a non-converged
    /// run yields its best estimate.
    pub fn norm(&self) -> f64 {
        match self.l2_norm(DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER) {
            Ok(v) => v,
            Err(Error::NoConvergence { estimate, iterations }) => {
                log::warn!("operator norm not converged after {iterations} iterations; using {estimate}");
                estimate
            }
            Err(e) => panic!("unexpected norm failure: {e}"),
        }
    }

    /// 16-byte little-endian header (`u64` size, `u32` version, `u32` grid
    /// dimension) followed by row-major `f64` entries.
    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        out.write_all(&(self.size() as u64).to_le_bytes())?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.entries.len() * 8);
        for v in &self.entries {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(grid: Arc<Grid>, mut input: impl Read) -> Result<Self> {
        let mut head = [0u8; 16];
        input.read_exact(&mut head)?;
        let n = u64::from_le_bytes(head[0..8].try_into().expect("8 bytes")) as usize;
        let version = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
        let dim = u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as usize;
        if version != BINARY_VERSION {
            return Err(Error::InvalidGrid(format!("unsupported operator file version {version}")));
        }
        if n != grid.len() || dim != grid.dim() {
            return Err(Error::GridMismatch);
        }
        let mut buf = vec![0u8; n * n * 8];
        input.read_exact(&mut buf)?;
        let entries = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        OperatorMatrix::from_entries(grid, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(f))
    }

    pub fn load(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        OperatorMatrix::read_binary(grid, std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::ReflectionGroup;

    fn line(n: usize) -> Arc<Grid> {
        Grid::cube(1.0, n, Arc::new(ReflectionGroup::trivial(1))).unwrap()
    }

    fn random_op(grid: &Arc<Grid>, seed: u64) -> OperatorMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.len();
        OperatorMatrix::from_entries(grid.clone(), (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_applies_exactly() {
        let g = line(7);
        let f = GridFunction::from_fn(g.clone(), |x| (3.0 * x[0]).cos());
        let id = OperatorMatrix::identity(g.clone());
        let out = id.apply(&f).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        let a = random_op(&g, 1);
        assert!(a.compose(&id).unwrap().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn compose_matches_naive_sum() {
        let g = line(45);
        let (a, b) = (random_op(&g, 2), random_op(&g, 3));
        let c = a.compose(&b).unwrap();
        let w = g.weights();
        for i in [0, 7, 44] {
            for j in [0, 13, 44] {
                let naive: f64 = (0..45).map(|k| a.get(i, k) * w[k] * b.get(k, j)).sum();
                assert!((c.get(i, j) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity_in_weighted_product() {
        let g = line(21);
        let a = random_op(&g, 4);
        let f = GridFunction::from_fn(g.clone(), |x| x[0].exp());
        let h = GridFunction::from_fn(g.clone(), |x| 1.0 - x[0] * x[0]);
        let lhs = a.apply(&f).unwrap().inner(&h).unwrap();
        // direct double sum ⟨f, A*h⟩ = Σ_j w_j f_j Σ_i A_ij w_i h_i
        let w = g.weights();
        let rhs: f64 = (0..21)
            .map(|j| w[j] * f.values()[j] * (0..21).map(|i| a.get(i, j) * w[i] * h.values()[i]).sum::<f64>())
            .sum();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
        let via_adj = f.inner(&a.adjoint().apply(&h).unwrap()).unwrap();
        assert!((lhs - via_adj).abs() <= 1e-10 * rhs.abs());
        assert_eq!(a.adjoint().adjoint().entries(), a.entries());
    }

    #[test]
    fn norm_examples() {
        let g = line(3);
        assert!((OperatorMatrix::identity(g.clone()).norm() - 1.0).abs() < 1e-9);
        // diagonal multipliers {3, 1, 1}
        let w = g.weights()[0];
        let mut d = OperatorMatrix::zeros(g.clone());
        d.entries_mut()[0] = 3.0 / w;
        d.entries_mut()[4] = 1.0 / w;
        d.entries_mut()[8] = 1.0 / w;
        assert!((d.norm() - 3.0).abs() < 1e-8);
        assert_eq!(OperatorMatrix::zeros(g).norm(), 0.0);
    }

    #[test]
    fn norm_matches_svd_oracle() {
        let g = line(11);
        let w = g.weights()[0];
        for seed in 0..4 {
            let a = random_op(&g, 40 + seed);
            let m = nalgebra::DMatrix::from_fn(11, 11, |i, j| a.get(i, j) * w);
            let oracle = m.singular_values().max();
            assert!((a.norm() - oracle).abs() <= 1e-6 * oracle, "seed {seed}");
        }
    }

    #[test]
    fn binary_round_trip() {
        let g = line(9);
        let a = random_op(&g, 5);
        let mut buf = Vec::new();
        a.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 81 * 8);
        let b = OperatorMatrix::read_binary(g.clone(), buf.as_slice()).unwrap();
        assert_eq!(a.entries(), b.entries());
        let other = line(11);
        assert!(matches!(OperatorMatrix::read_binary(other, buf.as_slice()), Err(Error::GridMismatch)));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let (g1, g2) = (line(5), line(7));
        let a = OperatorMatrix::identity(g1);
        let b = OperatorMatrix::identity(g2.clone());
        assert!(matches!(a.compose(&b), Err(Error::GridMismatch)));
        assert!(matches!(a.apply(&GridFunction::zeros(g2)), Err(Error::GridMismatch)));
    }
}
