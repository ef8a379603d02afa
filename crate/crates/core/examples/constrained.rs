//! A constrained problem under the progressive barrier: how the incumbents
//! evolve and when the search step fires.
//!
//! ```text
//! cargo run --release --example constrained
//! ```

use cemads::ce::CeMode;
use cemads::{problems, solve, CeSearchConfig, MadsConfig};

fn main() -> cemads::Result<()> {
    let spec = problems::spec("HS19")?;
    let cfg = MadsConfig::new(3000, 3).with_ce(CeSearchConfig::for_dimension(spec.n));
    let run = solve(&spec.problem(), &spec.start, &cfg)?;

    let first_feasible = run.records.iter().find(|r| r.is_feasible());
    match first_feasible {
        Some(r) => println!("first feasible point at evaluation {} (f = {:.4})", r.eval, r.f),
        None => println!("no feasible point found"),
    }
    let (normal, escape) = run.ce_activations.iter().fold((0, 0), |(n, e), a| match a.mode {
        CeMode::Escape => (n, e + 1),
        _ => (n + 1, e),
    });
    println!("search activations: {normal} normal, {escape} escape");

    let mut best = f64::INFINITY;
    let mut improvements = Vec::new();
    for r in run.records.iter().filter(|r| r.is_feasible()) {
        if r.f < best {
            best = r.f;
            improvements.push(r);
        }
    }
    println!("{} feasible improvements, the first and last five:", improvements.len());
    let tail = improvements.len().saturating_sub(5).max(5);
    for r in improvements.iter().take(5).chain(improvements.iter().skip(tail)) {
        println!("  eval {:>5}  {:?}  f = {:.6}", r.eval, r.source, r.f);
    }
    if let Some((reference, origin)) = spec.reference_best {
        println!("reference {reference} ({origin}), stop: {:?}", run.stop);
    }
    Ok(())
}
