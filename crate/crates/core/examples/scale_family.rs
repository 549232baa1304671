//! Build S_k and D_k on the reference line and check the AoI identities.
use std::sync::Arc;

use orbitcz::aoi::{build_family, default_bump, verify_almost_orthogonality, verify_aoi, AoiCheck};
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::{Grid, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(8.0, 129, Arc::new(g))?;
    let family = build_family(grid, default_bump(), 0, 4)?;
    println!("resolved scales {:?}", family.resolved_ks());
    let check = AoiCheck::default();
    print!("{}", verify_aoi(&family, &check).summary());
    print!("{}", verify_almost_orthogonality(&family, &check).summary());
    Ok(())
}
