//! The zero-mean example kernel: constants, T1 and the weak boundedness
//! constant. Prints T1 as CSV at the end.
use std::sync::Arc;

use orbitcz::aoi::{build_family, default_bump};
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::singular::{
    build_discrete_sio, bump_library, estimate_kernel_constants, t1_diagnostics, t1_table, wbp_constant, KernelSpec, SioCheck,
};
use orbitcz::{Grid, ReflectionGroup, RootSystem};

const SPEC: &str = r#"{"group": "A1", "profile": "smoothstep_d2", "k_min": 0, "k_max": 2}"#;

fn main() -> orbitcz::Result<()> {
    let kernel = KernelSpec::from_json(SPEC)?.compile()?;
    let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(8.0, 257, Arc::new(g))?;
    let family = build_family(grid.clone(), default_bump(), 0, 6)?;
    let t = build_discrete_sio(&kernel, &grid)?.operator;

    print!("{}", estimate_kernel_constants(&kernel, &grid, 1.0, 50_000, 42)?.summary());
    print!("{}", t1_diagnostics(&t, &family, &SioCheck::default())?.summary());
    let lib = bump_library(&grid, 0.5, &family.resolved_ks(), 6, 42)?;
    print!("{}", wbp_constant(&t, &lib)?.summary());
    if std::env::args().any(|a| a == "--table") {
        print!("{}", t1_table(&t)?);
    }
    Ok(())
}
