//! Plugging a user-defined search step into the MADS loop. This one tries
//! the reflection of the frame center through the best cached point.
//!
//! ```text
//! cargo run --example custom_search
//! ```

use cemads::mads::SearchContext;
use cemads::util::Rng;
use cemads::{problems, solve, solve_with, MadsConfig, SearchStep, Source};

#[derive(Default)]
struct Reflection {
    proposed: usize,
}

impl SearchStep for Reflection {
    fn source(&self) -> Source {
        Source::Other
    }

    fn propose(&mut self, ctx: &SearchContext<'_>, _rng: &mut Rng) -> Vec<Vec<f64>> {
        let Some(best) = ctx.cache.sorted().nth(1) else {
            return Vec::new();
        };
        self.proposed += 1;
        // Step from the second best point through the frame center.
        let point = ctx
            .mesh
            .center
            .iter()
            .zip(&best.x)
            .map(|(c, b)| 2.0 * c - b)
            .collect();
        vec![point]
    }
}

fn main() -> cemads::Result<()> {
    let spec = problems::spec("ROSENBROCK")?;
    let cfg = MadsConfig::new(1500, 2);
    let plain = solve(&spec.problem(), &spec.start, &cfg)?;
    let mut reflection = Reflection::default();
    let run = solve_with(&spec.problem(), &spec.start, &cfg, &mut [&mut reflection])?;

    let wins = run.records.iter().filter(|r| r.source == Source::Other).count();
    println!("plain MADS      f = {:.3e}", plain.best().unwrap().f);
    println!("with reflection f = {:.3e}", run.best().unwrap().f);
    println!("{} reflections proposed, {wins} evaluated", reflection.proposed);
    Ok(())
}
