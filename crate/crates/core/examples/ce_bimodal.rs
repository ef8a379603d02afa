//! Standalone cross-entropy on a one-dimensional function with a local
//! minimum near -2 and the global one near 2.
//!
//! ```text
//! cargo run --example ce_bimodal
//! ```

use cemads::ce::{ce_optimize, CeParams};
use cemads::problems;
use cemads::util::rng_from_seed;

fn main() -> cemads::Result<()> {
    let p = problems::make("BIMODAL")?;
    let params = CeParams {
        n_s: 50,
        n_e: 10,
        ..CeParams::for_dimension(1)
    };
    let out = ce_optimize(&p, &params, &[0.0], &[10.0], &mut rng_from_seed(7), 2000)?;

    println!("iter        mu     sigma     gamma");
    for t in out.trace.iter().take(10) {
        println!("{:>4} {:>9.4} {:>9.4} {:>9.4}", t.iter, t.mu[0], t.sigma[0], t.gamma);
    }
    println!(
        "best x = {:.6}, f = {:.6} after {} evaluations",
        out.best.x[0], out.best.f, out.evaluations
    );
    Ok(())
}
