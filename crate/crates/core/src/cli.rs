//! Command-line front end: `solve`, `ce`, `bench`, `profile` and
//! `list-problems`.
//!
//! Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::{self, AlgorithmConfig, BudgetRule, CampaignConfig, SampleCount};
use crate::blackbox::{spawn_external, BoundBox, ExternalSpec, Problem};
use crate::ce::{ce_optimize, write_trace_csv, CeParams};
use crate::error::{Error, Result};
use crate::mads::{solve, MadsConfig};
use crate::problems;
use crate::util::{rng_from_seed, Rng};

#[derive(Debug, Parser)]
#[command(name = "cemads", version, about = "MADS with a cross-entropy search step")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize a problem with CE-MADS (or plain MADS with --no-ce).
    Solve(SolveArgs),
    /// Run the standalone cross-entropy optimizer.
    Ce(CeArgs),
    /// Run a benchmark campaign described by a TOML file.
    Bench(BenchArgs),
    /// Recompute data profiles from a history directory.
    Profile(ProfileArgs),
    /// Print the problem catalog as TSV.
    ListProblems,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Built-in problem name (see list-problems).
    #[arg(long, conflicts_with = "external", required_unless_present = "external")]
    pub problem: Option<String>,
    /// TOML description of an external blackbox executable.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Starting point, comma separated (defaults to the documented start).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Evaluation budget (default 1000(n+1)).
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Disable the CE search step.
    #[arg(long)]
    pub no_ce: bool,
    /// Elite count of the search step.
    #[arg(long)]
    pub ne: Option<usize>,
    /// Sample count of the search step, e.g. 20 or 2n.
    #[arg(long)]
    pub ns: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub stall_limit: Option<usize>,
    /// Worker threads for batch evaluation.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Write the run log (JSON lines) here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write the evaluation cache (CSV) here.
    #[arg(long)]
    pub cache_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub ns: Option<String>,
    #[arg(long)]
    pub ne: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Initial mean, comma separated (defaults to the starting point).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu0: Option<Vec<f64>>,
    /// Initial deviation: one value for all coordinates or one per coordinate.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub sigma0: Vec<f64>,
    /// Write the per-iteration trace (CSV) here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Campaign file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the history directory of the campaign file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides the number of worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// History directory written by `bench`.
    #[arg(long)]
    pub histories: PathBuf,
    /// Tolerance; repeat for several profiles.
    #[arg(long = "tau", default_values_t = [1e-3])]
    pub tau: Vec<f64>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalFile {
    name: Option<String>,
    program: PathBuf,
    #[serde(default)]
    args: Vec<String>,
    #[serde(default)]
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x0: Option<Vec<f64>>,
    budget: Option<usize>,
}

struct Loaded {
    problem: Problem,
    start: Vec<f64>,
    budget: usize,
}

fn load_problem(a: &ProblemArgs) -> Result<Loaded> {
    let (problem, start, default_budget) = match (&a.problem, &a.external) {
        (Some(name), _) => {
            let spec = problems::spec(name)?;
            let budget = BudgetRule::default().budget(spec.n);
            (spec.problem(), spec.start.clone(), budget)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let f: ExternalFile =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let bounds = BoundBox::new(f.lower, f.upper)?;
            let n = bounds.dim();
            let start = f.x0.unwrap_or_else(|| bounds.clamp(&vec![0.0; n]));
            let budget = f.budget.unwrap_or(BudgetRule::default().budget(n));
            let program = resolve_relative(path, &f.program);
            let problem = spawn_external(ExternalSpec {
                name: f.name.unwrap_or_else(|| "EXTERNAL".into()),
                program,
                args: f.args,
                m: f.m,
                bounds,
            })?;
            (problem, start, budget)
        }
        (None, None) => return Err(Error::Usage("give --problem or --external".into())),
    };
    let start = a.x0.clone().unwrap_or(start);
    if start.len() != problem.n() {
        return Err(Error::Usage(format!(
            "--x0 has {} values, the problem has {} variables",
            start.len(),
            problem.n()
        )));
    }
    Ok(Loaded {
        budget: a.budget.unwrap_or(default_budget),
        problem,
        start,
    })
}

/// Program paths with a directory part are taken relative to the spec file.
fn resolve_relative(spec_path: &Path, program: &Path) -> PathBuf {
    if program.is_relative() && program.components().count() > 1 {
        spec_path.parent().unwrap_or(Path::new(".")).join(program)
    } else {
        program.to_path_buf()
    }
}

fn fmt6(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.5e}")
    } else {
        crate::util::fmt_real(v)
    }
}

fn fmt_vec(x: &[f64]) -> String {
    x.iter().map(|v| fmt6(*v)).collect::<Vec<_>>().join(" ")
}

fn parse_samples(s: &Option<String>) -> Result<Option<SampleCount>> {
    s.as_deref().map(str::parse).transpose()
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_problem(&a.problem)?;
    let n = l.problem.n();
    let alg = AlgorithmConfig {
        name: String::new(),
        ce: !a.no_ce,
        ne: a.ne,
        ns: parse_samples(&a.ns)?,
        alpha: a.alpha,
        stall_limit: a.stall_limit,
    };
    if a.workers == 0 {
        return Err(Error::Usage("--workers must be at least 1".into()));
    }
    let cfg: MadsConfig = alg
        .mads_config(n, l.budget, a.problem.seed)
        .with_workers(a.workers);
    if let Some(ce) = &cfg.ce {
        ce.params.validate()?;
    }
    let hist = solve(&l.problem, &l.start, &cfg)?;
    if let Some(path) = &a.log {
        hist.save_jsonl(path)?;
    }
    if let Some(path) = &a.cache_out {
        let mut cache = crate::cache::Cache::new();
        for r in &hist.records {
            cache.insert(&crate::blackbox::Evaluation {
                x: r.x.clone(),
                f: r.f,
                h: r.h,
                c: Vec::new(),
                status: r.status,
            });
        }
        cache.write_csv(path)?;
    }
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(out, "problem: {}", l.problem.name()).map_err(w)?;
    match hist.best() {
        Some(b) => {
            writeln!(out, "x: {}", fmt_vec(&b.x)).map_err(w)?;
            writeln!(out, "f: {}", fmt6(b.f)).map_err(w)?;
            writeln!(out, "h: {}", fmt6(b.h)).map_err(w)?;
        }
        None => writeln!(out, "no point evaluated").map_err(w)?,
    }
    writeln!(out, "evaluations: {}", hist.evaluations()).map_err(w)?;
    Ok(())
}

fn cmd_ce(a: &CeArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_problem(&a.problem)?;
    let n = l.problem.n();
    let mut params = CeParams::for_dimension(n);
    if let Some(ns) = parse_samples(&a.ns)? {
        params.n_s = ns.count(n);
    }
    if let Some(ne) = a.ne {
        params.n_e = ne;
    }
    if let Some(al) = a.alpha {
        params.alpha = al;
    }
    let mu0 = a.mu0.clone().unwrap_or_else(|| l.start.clone());
    let sigma0 = match a.sigma0.as_slice() {
        [s] => vec![*s; n],
        s => s.to_vec(),
    };
    if mu0.len() != n || sigma0.len() != n || sigma0.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Usage(format!(
            "--mu0 and --sigma0 need {n} values (sigma0 non-negative)"
        )));
    }
    let mut rng: Rng = rng_from_seed(a.problem.seed);
    let res = ce_optimize(&l.problem, &params, &mu0, &sigma0, &mut rng, l.budget)?;
    if let Some(path) = &a.trace {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_trace_csv(&res.trace, file)?;
    }
    let last = res.trace.last().expect("non-empty trace");
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(out, "problem: {}", l.problem.name()).map_err(w)?;
    writeln!(out, "iterations: {}", res.trace.len()).map_err(w)?;
    writeln!(out, "mu: {}", fmt_vec(&last.mu)).map_err(w)?;
    writeln!(out, "sigma: {}", fmt_vec(&last.sigma)).map_err(w)?;
    writeln!(out, "x: {}", fmt_vec(&res.best.x)).map_err(w)?;
    writeln!(out, "f: {}", fmt6(res.best.f)).map_err(w)?;
    writeln!(out, "h: {}", fmt6(res.best.h)).map_err(w)?;
    writeln!(out, "evaluations: {}", res.evaluations).map_err(w)?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = CampaignConfig::load(&a.config)?;
    if let Some(o) = &a.output {
        cfg.output = Some(o.clone());
    }
    if let Some(wk) = a.workers {
        cfg.workers = wk.max(1);
    }
    let input = bench::run_campaign(&cfg)?;
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(out, "algorithm\tproblem\truns\tfeasible").map_err(w)?;
    for s in bench::feasibility_summary(&input) {
        writeln!(out, "{}\t{}\t{}\t{}", s.algorithm, s.problem, s.runs, s.feasible).map_err(w)?;
    }
    Ok(())
}

fn cmd_profile(a: &ProfileArgs, out: &mut dyn Write) -> Result<()> {
    let input = bench::load_histories(&a.histories)?;
    if input.runs.is_empty() {
        return Err(Error::Config(format!(
            "no run logs found under {}",
            a.histories.display()
        )));
    }
    let profiles = a
        .tau
        .iter()
        .map(|t| bench::data_profile(&input, *t))
        .collect::<Result<Vec<_>>>()?;
    for p in profiles.first().map(|p| &p.excluded).into_iter().flatten() {
        eprintln!("excluded (no feasible point in any run): {p}");
    }
    match &a.output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            bench::write_profile_csv(&profiles, file)
        }
        None => bench::write_profile_csv(&profiles, out),
    }
}

fn cmd_list(out: &mut dyn Write) -> Result<()> {
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(out, "name\tn\tm\tbounded\treference_best\tprovenance").map_err(w)?;
    for s in problems::catalog() {
        let (r, tag) = match s.reference_best {
            Some((v, t)) => (crate::util::fmt_real(v), t.to_string()),
            None => ("-".into(), "-".into()),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.name,
            s.n,
            s.m,
            if s.is_bounded() { "yes" } else { "no" },
            r,
            tag
        )
        .map_err(w)?;
    }
    Ok(())
}

/// Runs a parsed command line, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Ce(a) => cmd_ce(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Profile(a) => cmd_profile(a, out),
        Command::ListProblems => cmd_list(out),
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::UnknownProblem { .. } | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<String> {
        let cli = Cli::try_parse_from(std::iter::once("cemads").chain(args.iter().copied()))
            .map_err(|e| Error::Usage(e.to_string()))?;
        let mut buf = Vec::new();
        run(&cli, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    #[test]
    fn malformed_flags_are_usage_errors() {
        assert!(Cli::try_parse_from(["cemads", "solve", "--budget", "x"]).is_err());
        assert!(Cli::try_parse_from(["cemads", "frobnicate"]).is_err());
    }

    #[test]
    fn list_problems_is_tsv() {
        let s = run_args(&["list-problems"]).unwrap();
        let rows: Vec<&str> = s.lines().collect();
        assert!(rows.iter().all(|r| r.split('\t').count() == 6));
        assert!(rows.iter().any(|r| r.starts_with("HS83\t5\t6\tyes")));
    }

    #[test]
    fn unknown_problem_exits_two() {
        let e = run_args(&["solve", "--problem", "NOPE"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn solve_prints_summary() {
        let s = run_args(&["solve", "--problem", "SPHERE", "--budget", "200"]).unwrap();
        assert!(s.contains("evaluations: 200") || s.contains("evaluations: "));
        assert!(s.lines().any(|l| l.starts_with("f: ")));
    }
}
