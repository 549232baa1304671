//! Whitney cubes and the good/bad split of one input; cube table as CSV.
use std::sync::Arc;

use orbitcz::corpus::cz_inputs;
use orbitcz::cz::{cubes_csv, cz_decompose, lambda_ladder, verify_cz, CzCheck};
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::{Grid, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("B2", 2)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(4.0, 33, Arc::new(g))?;
    let f = &cz_inputs(&grid, 1, 42)[0];
    let lambda = lambda_ladder(f, &[0.5])[0];
    let out = cz_decompose(f, lambda)?;
    println!("λ = {lambda:.4}: |E| = {} points, {} cubes, {} slivers", out.e_lambda.len(), out.bad.len(), out.slivers);
    print!("{}", verify_cz(&out, f, &CzCheck::for_grid(&grid)).summary());
    let cubes: Vec<_> = out.bad.iter().map(|(q, _)| q.clone()).collect();
    print!("{}", cubes_csv(&cubes));
    Ok(())
}
