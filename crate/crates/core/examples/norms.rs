//! Hölder, Besov, BMO and molecule norms of a few G-invariant functions.
use std::sync::Arc;

use orbitcz::aoi::{build_family, default_bump};
use orbitcz::corpus::{cusp, holder_suite, mean_zero_bump};
use orbitcz::norms::{besov_inf, bmo_norm, holder_besov_equivalence, holder_norm, molecule_norm, MoleculeParams};
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::{Grid, GridFunction, ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    let g = ReflectionGroup::generate(&RootSystem::preset("A1", 1)?, DEFAULT_MAX_ORDER)?;
    let grid = Grid::cube(8.0, 257, Arc::new(g))?;
    let family = build_family(grid.clone(), default_bump(), 0, 6)?;

    let c = cusp(&grid, 0.5);
    println!("cusp: Hölder-½ {:.4}, Besov {:.4}", holder_norm(&c, 0.5)?.value, besov_inf(&c, 0.5, &family)?.value);
    let log = GridFunction::from_fn(grid.clone(), |x| x[0].abs().max(0.01).ln());
    println!("log|x|: BMO {:.4}", bmo_norm(&log).value);
    let m = mean_zero_bump(&grid, &[0.0], 0.5);
    let p = MoleculeParams::new(0.5, 0.5, 0.5, vec![0.0])?;
    println!("molecule norm {:.4}", molecule_norm(&m, &p)?.value);
    print!("{}", holder_besov_equivalence(&holder_suite(&grid), 0.5, &family, 10.0)?.summary());
    Ok(())
}
