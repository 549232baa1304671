//! Contraction of R_M, the Neumann inverse of T_M, and reproduction of a
//! mean-zero bump.
use std::sync::Arc;

use orbitcz::aoi::{build_family, default_bump};
use orbitcz::calderon::{reproduce, rm_contraction_curve, CalderonSystem, Ordering};
use orbitcz::corpus::mean_zero_bump;
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::{Grid, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(8.0, 257, Arc::new(g))?;
    let family = Arc::new(build_family(grid.clone(), default_bump(), 0, 6)?);

    let (_, curve) = rm_contraction_curve(&family, &[1, 2, 3], Ordering::DkmFirst, 0.9)?;
    for (m, r) in curve {
        println!("‖R_{m}‖ = {r:.4}");
    }
    let sys = CalderonSystem::build(family, 3, Ordering::DkmFirst, 1e-6, 1000)?;
    println!("Neumann terms {}, inversion error {:.2e}", sys.inverse().terms, sys.inversion_error());

    let f = mean_zero_bump(&grid, &[1.0], 0.5);
    let r = reproduce(&f, &sys)?;
    println!("relative residual {:.3e}, dual {:.3e}", r.residual, r.dual_residual);
    Ok(())
}
