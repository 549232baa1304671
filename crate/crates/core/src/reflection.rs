//! Root systems, the reflection groups they generate, orbits, and the orbit
//! distance `d(x, y) = min_σ |x − σ(y)|`.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the root-system axioms.
pub const ROOT_TOL: f64 = 1e-10;
/// Two group elements (or orbit points) closer than this are identified.
pub const DEDUP_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ORDER: usize = 1024;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `σ_α(x) = x − 2⟨x,α⟩/|α|² · α`.
pub fn reflect(root: &[f64], point: &[f64]) -> Result<Vec<f64>> {
    if root.len() != point.len() {
        return Err(Error::DimensionMismatch { expected: root.len(), got: point.len() });
    }
    let nsq = dot(root, root);
    if nsq == 0.0 {
        return Err(Error::ZeroRoot);
    }
    let c = 2.0 * dot(point, root) / nsq;
    Ok(point.iter().zip(root).map(|(x, a)| x - c * a).collect())
}

/// A validated, √2-normalized root system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSystem {
    ambient_dim: usize,
    roots: Vec<Vec<f64>>,
}

impl RootSystem {
    /// Validates explicit roots. Vectors are never rescaled.
    pub fn new(ambient_dim: usize, roots: Vec<Vec<f64>>) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::config("dim", "ambient dimension must be positive"));
        }
        for r in &roots {
            if r.len() != ambient_dim {
                return Err(Error::DimensionMismatch { expected: ambient_dim, got: r.len() });
            }
        }
        for (i, a) in roots.iter().enumerate() {
            let nsq = dot(a, a);
            if (nsq - 2.0).abs() > ROOT_TOL {
                return Err(Error::NormViolation { index: i, norm_sq: nsq });
            }
        }
        for (i, a) in roots.iter().enumerate() {
            let mut has_negative = false;
            for (j, b) in roots.iter().enumerate() {
                if i == j {
                    continue;
                }
                let ab = dot(a, b);
                // |⟨a,b⟩| = |a||b| = 2 exactly when parallel
                if (ab.abs() - 2.0).abs() <= ROOT_TOL {
                    if ab > 0.0 {
                        return Err(Error::ParallelViolation { first: i, second: j });
                    }
                    has_negative = true;
                }
            }
            if !has_negative {
                return Err(Error::ParallelViolation { first: i, second: i });
            }
        }
        for (i, a) in roots.iter().enumerate() {
            for b in &roots {
                let img = reflect(a, b)?;
                if !roots.iter().any(|c| max_abs_diff(c, &img) <= ROOT_TOL) {
                    return Err(Error::ClosureViolation { index: i });
                }
            }
        }
        Ok(RootSystem { ambient_dim, roots })
    }

    /// The empty root system in `dim` dimensions; generates the trivial group.
    pub fn trivial(dim: usize) -> Result<Self> {
        RootSystem::new(dim, Vec::new())
    }

    /// Dihedral system `I₂(m)`: `m` root pairs at angles `πj/m`.
    pub fn dihedral(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::UnknownPreset("I2(0)".into()));
        }
        let s = 2f64.sqrt();
        let mut roots = Vec::with_capacity(2 * m);
        for j in 0..m {
            let t = std::f64::consts::PI * j as f64 / m as f64;
            let (sin, cos) = t.sin_cos();
            roots.push(vec![s * cos, s * sin]);
            roots.push(vec![-s * cos, -s * sin]);
        }
        RootSystem::new(2, roots)
    }

    /// Presets: `A1`, `A1xA1`, `B2`, `A2`, `I2(m)`, and `TRIVIAL` (in `dim`
    /// dimensions, `dim` ignored otherwise).
    pub fn preset(name: &str, dim: usize) -> Result<Self> {
        let s = 2f64.sqrt();
        let upper = name.trim().to_ascii_uppercase();
        match upper.as_str() {
            "A1" => RootSystem::new(1, vec![vec![s], vec![-s]]),
            "A1XA1" => RootSystem::new(
                2,
                vec![vec![s, 0.0], vec![-s, 0.0], vec![0.0, s], vec![0.0, -s]],
            ),
            "B2" => RootSystem::new(
                2,
                vec![
                    vec![s, 0.0],
                    vec![-s, 0.0],
                    vec![0.0, s],
                    vec![0.0, -s],
                    vec![1.0, 1.0],
                    vec![-1.0, -1.0],
                    vec![1.0, -1.0],
                    vec![-1.0, 1.0],
                ],
            ),
            "A2" => RootSystem::dihedral(3),
            "TRIVIAL" => RootSystem::trivial(dim.max(1)),
            _ => {
                if let Some(m) = upper.strip_prefix("I2(").and_then(|r| r.strip_suffix(')')) {
                    let m: usize = m.parse().map_err(|_| Error::UnknownPreset(name.into()))?;
                    RootSystem::dihedral(m)
                } else {
                    Err(Error::UnknownPreset(name.into()))
                }
            }
        }
    }

    /// One root per line, whitespace-separated coordinates. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut roots: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: ln + 1,
                    message: e.to_string(),
                })?;
            roots.push(v);
        }
        let dim = roots.first().map(Vec::len).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no roots (use the TRIVIAL preset for the empty system)".into(),
        })?;
        RootSystem::new(dim, roots)
    }

    /// Preset name, or a path to a root file when the name is not a preset.
    pub fn from_name_or_file(name: &str, dim: usize) -> Result<Self> {
        match RootSystem::preset(name, dim) {
            Err(Error::UnknownPreset(_)) if Path::new(name).exists() => RootSystem::from_file(name),
            other => other,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn roots(&self) -> &[Vec<f64>] {
        &self.roots
    }
}

/// A real `N×N` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl Matrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Matrix { dim, entries }
    }

    pub fn reflection(root: &[f64]) -> Result<Self> {
        let dim = root.len();
        let mut entries = Vec::with_capacity(dim * dim);
        let mut e = vec![0.0; dim];
        let mut cols = Vec::with_capacity(dim);
        for j in 0..dim {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            cols.push(reflect(root, &e)?);
        }
        for i in 0..dim {
            for col in &cols {
                entries.push(col[i]);
            }
        }
        Ok(Matrix { dim, entries })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.dim;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    entries[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Matrix { dim: n, entries }
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.dim;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.get(i, j);
            }
        }
        Matrix { dim: n, entries }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n).map(|i| dot(&self.entries[i * n..(i + 1) * n], x)).collect()
    }

    fn close_to(&self, other: &Matrix, tol: f64) -> bool {
        max_abs_diff(&self.entries, &other.entries) <= tol
    }

    fn lex_cmp(&self, other: &Matrix) -> Ordering {
        for (a, b) in self.entries.iter().zip(&other.entries) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

/// Finite group generated by the root reflections. Element 0 is the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectionGroup {
    dim: usize,
    elements: Vec<Matrix>,
    generator_indices: Vec<usize>,
    /// `product[i * |G| + j]` is the index of `elements[i] · elements[j]`.
    product: Vec<usize>,
    inverse: Vec<usize>,
}

impl PartialEq for ReflectionGroup {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.elements.len() == other.elements.len()
            && self.elements.iter().zip(&other.elements).all(|(a, b)| a.close_to(b, DEDUP_TOL))
    }
}

impl ReflectionGroup {
    /// Breadth-first closure of `{σ_α} ∪ {I}`; each layer is sorted
    /// lexicographically by matrix entries.
    pub fn generate(rs: &RootSystem, max_order: usize) -> Result<Self> {
        let dim = rs.ambient_dim();
        let mut gens: Vec<Matrix> = Vec::new();
        for r in rs.roots() {
            let m = Matrix::reflection(r)?;
            if !gens.iter().any(|g| g.close_to(&m, DEDUP_TOL)) {
                gens.push(m);
            }
        }
        let find = |elems: &[Matrix], m: &Matrix| elems.iter().position(|e| e.close_to(m, DEDUP_TOL));

        let mut elements = vec![Matrix::identity(dim)];
        let mut layer = vec![0usize];
        while !layer.is_empty() {
            let mut next: Vec<Matrix> = Vec::new();
            for &idx in &layer {
                for g in &gens {
                    let m = elements[idx].mul(g);
                    if find(&elements, &m).is_none() && find(&next, &m).is_none() {
                        next.push(m);
                    }
                }
            }
            next.sort_by(Matrix::lex_cmp);
            let start = elements.len();
            elements.extend(next);
            if elements.len() > max_order {
                return Err(Error::OrderCapExceeded { cap: max_order });
            }
            layer = (start..elements.len()).collect();
        }

        let order = elements.len();
        let mut product = vec![0usize; order * order];
        for i in 0..order {
            for j in 0..order {
                let m = elements[i].mul(&elements[j]);
                product[i * order + j] = find(&elements, &m).ok_or(Error::OrderCapExceeded { cap: max_order })?;
            }
        }
        let inverse = (0..order)
            .map(|i| (0..order).find(|&j| product[i * order + j] == 0).expect("finite group has inverses"))
            .collect();
        let generator_indices = rs
            .roots()
            .iter()
            .map(|r| {
                let m = Matrix::reflection(r).expect("validated root");
                find(&elements, &m).expect("generator in closure")
            })
            .collect();
        Ok(ReflectionGroup { dim, elements, generator_indices, product, inverse })
    }

    pub fn trivial(dim: usize) -> Self {
        ReflectionGroup {
            dim,
            elements: vec![Matrix::identity(dim)],
            generator_indices: Vec::new(),
            product: vec![0],
            inverse: vec![0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Matrix] {
        &self.elements
    }

    pub fn generator_indices(&self) -> &[usize] {
        &self.generator_indices
    }

    pub fn product_index(&self, i: usize, j: usize) -> usize {
        self.product[i * self.order() + j]
    }

    pub fn inverse_index(&self, i: usize) -> usize {
        self.inverse[i]
    }

    pub fn act(&self, element: usize, x: &[f64]) -> Vec<f64> {
        self.elements[element].apply(x)
    }

    pub fn orbit(&self, x: &[f64]) -> Result<OrbitSet> {
        self.check_dim(x)?;
        let mut points: Vec<Vec<f64>> = Vec::new();
        for m in &self.elements {
            let p = m.apply(x);
            if !points.iter().any(|q| max_abs_diff(q, &p) <= DEDUP_TOL) {
                points.push(p);
            }
        }
        Ok(OrbitSet { representative: x.to_vec(), points })
    }

    /// `min_σ |x − σ(y)|`, exact over the finite group.
    pub fn orbit_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self
            .elements
            .iter()
            .map(|m| euclid(x, &m.apply(y)))
            .fold(f64::INFINITY, f64::min))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }
}

/// Deduplicated orbit `{σ(x) : σ ∈ G}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSet {
    pub representative: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl OrbitSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
