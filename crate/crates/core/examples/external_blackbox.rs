//! Optimizing a blackbox that lives in a separate executable. The program
//! reads the point from a file (one coordinate per line) and prints
//! `f c_1 .. c_m` on standard output.
//!
//! ```text
//! cargo run --example external_blackbox
//! ```

use std::os::unix::fs::PermissionsExt;

use cemads::blackbox::{spawn_external, ExternalSpec};
use cemads::{solve, BoundBox, MadsConfig};

const SCRIPT: &str = r#"#!/bin/sh
# f = (x - 1)^2 + (y + 2)^2 subject to x + y >= 1
awk 'NR == 1 { x = $1 } NR == 2 { y = $1 }
     END { printf "%.17g %.17g\n", (x - 1)^2 + (y + 2)^2, 1 - x - y }' "$1"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let program = dir.path().join("blackbox.sh");
    std::fs::write(&program, SCRIPT)?;
    std::fs::set_permissions(&program, std::fs::Permissions::from_mode(0o755))?;

    let p = spawn_external(ExternalSpec {
        name: "SHELL".into(),
        program,
        args: vec![],
        m: 1,
        bounds: BoundBox::uniform(2, -5.0, 5.0)?,
    })?;
    let run = solve(&p, &[0.0, 0.0], &MadsConfig::new(400, 1).with_workers(4))?;
    let best = run.best().expect("at least the start was evaluated");
    // The constraint is active at the optimum (2, -1), where f = 2.
    println!("x = {:?}, f = {:.6}, h = {:.2e}", best.x, best.f, best.h);
    println!("{} evaluations, stop: {:?}", run.evaluations(), run.stop);
    Ok(())
}
