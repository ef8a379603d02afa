//! Plain MADS against MADS with the cross-entropy search step on a
//! multimodal problem, from random starting points.
//!
//! ```text
//! cargo run --release --example mads_vs_cemads [PROBLEM]
//! ```

use cemads::util::rng_from_seed;
use cemads::{problems, solve, CeSearchConfig, MadsConfig, RunHistory};

fn main() -> cemads::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "RASTRIGIN".into());
    let spec = problems::spec(&name)?;
    let budget = 1000 * (spec.n + 1);
    println!("{name}: n = {}, budget = {budget}", spec.n);
    println!("start  mads          ce-mads       searches");
    let f = |r: &RunHistory| r.best_feasible.as_ref().map_or(f64::INFINITY, |e| e.f);
    let mut rng = rng_from_seed(42);
    let (mut sum_plain, mut sum_ce) = (0.0, 0.0);
    for start in 0..10 {
        let x0 = spec.random_start(&mut rng);
        let plain = solve(&spec.problem(), &x0, &MadsConfig::new(budget, 0))?;
        let cfg = MadsConfig::new(budget, 0).with_ce(CeSearchConfig::for_dimension(spec.n));
        let ce = solve(&spec.problem(), &x0, &cfg)?;
        sum_plain += f(&plain);
        sum_ce += f(&ce);
        println!(
            "{start:>5}  {:<12.6e}  {:<12.6e}  {}",
            f(&plain),
            f(&ce),
            ce.ce_activations.len()
        );
    }
    println!("mean   {:<12.6e}  {:<12.6e}", sum_plain / 10.0, sum_ce / 10.0);
    Ok(())
}
