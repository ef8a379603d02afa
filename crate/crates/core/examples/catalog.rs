//! The built-in problem catalog: dimensions, constraints, references and
//! the objective at each documented start.
//!
//! ```text
//! cargo run --example catalog
//! ```

use cemads::problems::catalog;

fn main() -> cemads::Result<()> {
    println!("{:<14} {:>3} {:>3} {:>8} {:>14} {:>14}", "name", "n", "m", "bounded", "f(start)", "reference");
    for spec in catalog() {
        let e = spec.problem().evaluate(&spec.start)?;
        let reference = spec
            .reference_best
            .map_or_else(|| "-".to_string(), |(f, _)| format!("{f:.6}"));
        println!(
            "{:<14} {:>3} {:>3} {:>8} {:>14.6e} {:>14}",
            spec.name,
            spec.n,
            spec.m,
            spec.is_bounded(),
            e.f,
            reference
        );
    }
    Ok(())
}
