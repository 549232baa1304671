//! Seeded test-function corpora shared by the suites, tests and examples.

use std::sync::Arc;

use rand::Rng;

use crate::grid::{Grid, GridFunction};
use crate::singular::smootherstep;
use crate::stats;

/// `q(|x − c|/r)` averaged over G; equals 1 on the orbit ball of radius `r`
/// and vanishes beyond `2r`.
pub fn orbit_bump(grid: &Arc<Grid>, center: &[f64], radius: f64) -> GridFunction {
    GridFunction::from_fn(grid.clone(), |x| {
        let d = x.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
        smootherstep(d / radius)
    })
    .symmetrize()
}

/// Bump at radius `r` minus the rescaled bump at `2r`, with the second
/// weighted so the quadrature integral is zero.
pub fn mean_zero_bump(grid: &Arc<Grid>, center: &[f64], radius: f64) -> GridFunction {
    let a = orbit_bump(grid, center, radius);
    let b = orbit_bump(grid, center, 2.0 * radius);
    let c = a.integral() / b.integral();
    a.zip_with(&b, |x, y| x - c * y).expect("same grid")
}

fn random_center(rng: &mut impl Rng, dim: usize, reach: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-reach..reach)).collect()
}

/// Mean-zero bumps with radii in `[1/4, 1]` and centres in the inner
/// quarter of the box.
pub fn mean_zero_bumps(grid: &Arc<Grid>, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = stats::rng(seed, 41);
    let reach = grid.min_half_width() / 4.0;
    (0..count)
        .map(|_| {
            let c = random_center(&mut rng, grid.dim(), reach);
            mean_zero_bump(grid, &c, rng.gen_range(0.25..1.0))
        })
        .collect()
}

/// Eight radial cubic-smoothstep bumps `h(|x|/w_j)`, `w_j = 2^{j/2}/4`.
pub fn holder_suite(grid: &Arc<Grid>) -> Vec<GridFunction> {
    (0..8)
        .map(|j| {
            let w = 0.25 * 2f64.powf(j as f64 / 2.0);
            GridFunction::from_fn(grid.clone(), |x| crate::aoi::smoothstep(x.iter().map(|v| v * v).sum::<f64>().sqrt() / w))
        })
        .collect()
}

/// Sums of three symmetrized Gaussians of random sign, centre and width.
pub fn cz_inputs(grid: &Arc<Grid>, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = stats::rng(seed, 31);
    let l = grid.min_half_width();
    (0..count)
        .map(|_| {
            let bumps: Vec<(Vec<f64>, f64, f64)> = (0..3)
                .map(|_| {
                    let c = random_center(&mut rng, grid.dim(), 0.6 * l);
                    (c, rng.gen_range(0.05 * l..0.2 * l), rng.gen_range(-1.0..1.0))
                })
                .collect();
            GridFunction::from_fn(grid.clone(), |x| {
                bumps
                    .iter()
                    .map(|(c, r, a)| {
                        let d2: f64 = x.iter().zip(c).map(|(x, c)| (x - c).powi(2)).sum();
                        a * (-d2 / (r * r)).exp()
                    })
                    .sum()
            })
            .symmetrize()
        })
        .collect()
}

/// Five mid-scale mean-zero symbols with radii `2^{−2}` to `2^{−1}`.
pub fn b_corpus(grid: &Arc<Grid>, seed: u64) -> Vec<GridFunction> {
    let mut rng = stats::rng(seed, 51);
    let reach = grid.min_half_width() / 4.0;
    (0..5)
        .map(|i| {
            let c = random_center(&mut rng, grid.dim(), reach);
            mean_zero_bump(grid, &c, 0.25 * 2f64.powf(i as f64 / 4.0))
        })
        .collect()
}

/// `|x|^s q(|x|/2)`: exactly `s`-Hölder at the origin at every scale.
pub fn cusp(grid: &Arc<Grid>, s: f64) -> GridFunction {
    GridFunction::from_fn(grid.clone(), |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.powf(s) * smootherstep(r / 2.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::NormKind;
    use crate::reflection::{ReflectionGroup, RootSystem, DEFAULT_MAX_ORDER};

    #[test]
    fn corpora_are_invariant_and_mean_zero_where_claimed() {
        let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1).unwrap(), DEFAULT_MAX_ORDER).unwrap();
        let grid = Grid::cube(8.0, 129, Arc::new(g)).unwrap();
        for f in mean_zero_bumps(&grid, 4, 42).iter().chain(&b_corpus(&grid, 42)) {
            assert!(f.integral().abs() < 1e-13 * f.norm(NormKind::L1));
            assert_eq!(f.invariance_defect(), 0.0);
        }
        assert_eq!(holder_suite(&grid).len(), 8);
        assert!(cz_inputs(&grid, 3, 1).iter().all(|f| f.invariance_defect() < 1e-15));
        assert_eq!(cz_inputs(&grid, 3, 1)[2].values(), cz_inputs(&grid, 3, 1)[2].values());
    }
}
