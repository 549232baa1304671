//! Π_b for a mid-scale symbol, its defining identities, and the reduction
//! T ↦ T − Π_{T1} − Π*_{T*1}.
use std::sync::Arc;

use orbitcz::aoi::{build_family, default_bump};
use orbitcz::calderon::{CalderonSystem, Ordering};
use orbitcz::corpus::b_corpus;
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::singular::{build_discrete_sio, build_paraproduct, t1_reduction, verify_paraproduct, KernelSpec, ParaproductCheck, Profile};
use orbitcz::{Grid, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(8.0, 257, Arc::new(g))?;
    let family = Arc::new(build_family(grid.clone(), default_bump(), 0, 6)?);
    let sys = CalderonSystem::build(family, 1, Ordering::DkmFirst, 1e-6, 1000)?;

    let b = &b_corpus(&grid, 42)[0];
    let p = build_paraproduct(b, &sys)?;
    print!("{}", verify_paraproduct(&p, &ParaproductCheck::default())?.summary());

    let t = build_discrete_sio(&KernelSpec::new("A1", 1, Profile::SmoothstepD2, 0, 2).compile()?, &grid)?.operator;
    print!("{}", t1_reduction(&t, &sys)?.summary());
    Ok(())
}
