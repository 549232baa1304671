//! λ·|{|Tf| > λ}| / ‖f‖₁ for the identity and the example kernel.
use std::sync::Arc;

use orbitcz::corpus::cz_inputs;
use orbitcz::cz::{default_lambda_grid, weak11_table};
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::singular::{build_discrete_sio, KernelSpec, Profile};
use orbitcz::{Grid, OperatorMatrix, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(8.0, 257, Arc::new(g))?;
    let corpus = cz_inputs(&grid, 10, 42);
    let kernel = KernelSpec::new("A1", 1, Profile::SmoothstepD2, 0, 2).compile()?;
    for (name, t) in [
        ("identity", OperatorMatrix::identity(grid.clone())),
        ("kernel", build_discrete_sio(&kernel, &grid)?.operator),
    ] {
        let table = weak11_table(&t, &corpus, &default_lambda_grid())?;
        println!("{name}: max ratio {:.4}, growth {:.4}", table.max_ratio, table.growth);
    }
    Ok(())
}
