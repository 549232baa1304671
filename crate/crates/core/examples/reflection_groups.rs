//! Generate the preset groups, print orders, an orbit and a few orbit
//! distances.
use orbitcz::reflection::DEFAULT_MAX_ORDER;
use orbitcz::{ReflectionGroup, RootSystem};

fn main() -> orbitcz::Result<()> {
    for (name, dim) in [("A1", 1), ("A1xA1", 2), ("B2", 2), ("I2(5)", 2)] {
        let g = ReflectionGroup::generate(&RootSystem::preset(name, dim)?, DEFAULT_MAX_ORDER)?;
        println!("{name:6} |G| = {}", g.order());
    }
    let b2 = ReflectionGroup::generate(&RootSystem::preset("B2", 2)?, DEFAULT_MAX_ORDER)?;
    let x = [1.0, 0.5];
    println!("orbit of {x:?}: {} points", b2.orbit(&x)?.len());
    for y in [[0.5, 1.0], [-1.0, 0.5], [2.0, 2.0]] {
        println!("d({x:?}, {y:?}) = {:.6}", b2.orbit_distance(&x, &y)?);
    }
    Ok(())
}
