//! A small benchmark campaign followed by data profiles recomputed from the
//! persisted run logs.
//!
//! ```text
//! cargo run --release --example campaign_profile
//! ```

use cemads::bench::{self, CampaignConfig};

const CAMPAIGN: &str = r#"
problems = ["BRANIN", "RASTRIGIN", "HS19", "SNAKE"]
starts = 5
seeds = [0, 1]
budget = "200(n+1)"
workers = 4

[[algorithm]]
name = "mads"
ce = false

[[algorithm]]
name = "ce-mads"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = CampaignConfig::from_toml(CAMPAIGN)?;
    cfg.output = Some(dir.path().to_path_buf());
    bench::run_campaign(&cfg)?;

    let input = bench::load_histories(dir.path())?;
    let profiles = [1e-1, 1e-3]
        .iter()
        .map(|tau| bench::data_profile(&input, *tau))
        .collect::<cemads::Result<Vec<_>>>()?;
    for p in &profiles {
        for (alg, curve) in &p.curves {
            println!("tau {:e}  {alg:<8} solved {:.3}", p.tau, curve.final_fraction());
        }
    }
    let csv = dir.path().join("profiles.csv");
    bench::write_profile_csv(&profiles, std::fs::File::create(&csv)?)?;
    println!("{} profile rows written", std::fs::read_to_string(&csv)?.lines().count() - 1);
    Ok(())
}
