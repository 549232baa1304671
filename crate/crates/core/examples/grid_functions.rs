//! Quadrature grid, orbit distances and G-averaging of a lopsided function.
use std::sync::Arc;

use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::{Grid, GridFunction, NormKind, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("A1xA1", 2)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(2.0, 9, Arc::new(g))?;
    println!("{} points, spacing {:.4}, volume {}", grid.len(), grid.min_spacing(), grid.volume());

    let f = GridFunction::from_fn(grid.clone(), |x| (x[0] + 2.0 * x[1]).exp());
    let sym = f.symmetrize();
    println!("defect before {:.3e}, after {:.3e}", f.invariance_defect(), sym.invariance_defect());
    println!("integral {:.6} = {:.6}", f.integral(), sym.integral());
    println!("L1 {:.4}  L2 {:.4}  Linf {:.4}", sym.norm(NormKind::L1), sym.norm(NormKind::L2), sym.norm(NormKind::Linf));

    let (i, j) = (0, grid.len() - 1);
    println!("corners {:?} and {:?} are at orbit distance {}", grid.point(i), grid.point(j), grid.distance(i, j));
    Ok(())
}
