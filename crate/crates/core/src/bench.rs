//! Benchmark campaigns and data profiles.
//!
//! A campaign runs every algorithm variant on every instance (problem,
//! random start, seed) and stores each run log as
//! `{algorithm}/{problem}/{start_idx}_{seed}.jsonl`. Profiles are computed
//! from those logs alone, so they can be recomputed offline.
//!
//! A run solves its instance after `e` evaluations when the best feasible
//! value among the first `e` satisfies
//! `f_fea - f >= (1 - tau) (f_fea - f_star)`, where `f_fea` is the worst
//! first-feasible value over all runs on the problem and `f_star` the best
//! feasible value found by any run. Time is counted in groups of `n + 1`
//! evaluations.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ce::CeSearchConfig;
use crate::error::{Error, Result};
use crate::mads::{read_jsonl, solve, EvalRecord, MadsConfig, RunHistory};
use crate::problems;
use crate::util::{mix_seed, rng_from_seed};

/// Evaluation budget, either fixed or proportional to `n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetRule {
    Fixed(usize),
    PerGroup(usize),
}

impl BudgetRule {
    pub fn budget(&self, n: usize) -> usize {
        match *self {
            BudgetRule::Fixed(b) => b,
            BudgetRule::PerGroup(k) => k * (n + 1),
        }
    }
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::PerGroup(1000)
    }
}

impl FromStr for BudgetRule {
    type Err = Error;

    /// Accepts `3000` or `1000(n+1)`.
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("invalid budget rule '{s}', expected N or K(n+1)"));
        if let Some(k) = t.strip_suffix("(n+1)") {
            let k = if k.is_empty() { 1 } else { k.trim_end_matches('*').parse().map_err(|_| bad())? };
            return Ok(BudgetRule::PerGroup(k));
        }
        t.parse().map(BudgetRule::Fixed).map_err(|_| bad())
    }
}

impl fmt::Display for BudgetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetRule::Fixed(b) => write!(f, "{b}"),
            BudgetRule::PerGroup(k) => write!(f, "{k}(n+1)"),
        }
    }
}

/// Sample size of the CE step, fixed or proportional to `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Fixed(usize),
    PerDim(usize),
}

impl SampleCount {
    pub fn count(&self, n: usize) -> usize {
        match *self {
            SampleCount::Fixed(k) => k,
            SampleCount::PerDim(k) => k * n,
        }
    }
}

impl FromStr for SampleCount {
    type Err = Error;

    /// Accepts `20` or `2n`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::Config(format!("invalid sample count '{s}', expected N or Kn"));
        if let Some(k) = t.strip_suffix('n') {
            let k = if k.is_empty() { 1 } else { k.trim_end_matches('*').parse().map_err(|_| bad())? };
            return Ok(SampleCount::PerDim(k));
        }
        t.parse().map(SampleCount::Fixed).map_err(|_| bad())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(usize),
    Text(String),
}

impl NumOrText {
    fn text(self) -> String {
        match self {
            NumOrText::Num(v) => v.to_string(),
            NumOrText::Text(s) => s,
        }
    }
}

fn de_budget<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BudgetRule, D::Error> {
    NumOrText::deserialize(d)?
        .text()
        .parse()
        .map_err(serde::de::Error::custom)
}

fn de_samples<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<SampleCount>, D::Error> {
    Option::<NumOrText>::deserialize(d)?
        .map(|v| v.text().parse().map_err(serde::de::Error::custom))
        .transpose()
}

/// One algorithm variant of a campaign.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: String,
    /// Enables the CE search step.
    #[serde(default = "yes")]
    pub ce: bool,
    pub ne: Option<usize>,
    #[serde(default, deserialize_with = "de_samples")]
    pub ns: Option<SampleCount>,
    pub alpha: Option<f64>,
    pub stall_limit: Option<usize>,
}

fn yes() -> bool {
    true
}

impl AlgorithmConfig {
    pub fn mads(name: &str) -> Self {
        AlgorithmConfig {
            name: name.to_string(),
            ce: false,
            ne: None,
            ns: None,
            alpha: None,
            stall_limit: None,
        }
    }

    pub fn ce_mads(name: &str) -> Self {
        AlgorithmConfig {
            ce: true,
            ..AlgorithmConfig::mads(name)
        }
    }

    /// CE search settings for dimension `n`, defaults filled in.
    pub fn ce_config(&self, n: usize) -> CeSearchConfig {
        let mut cfg = CeSearchConfig::for_dimension(n);
        if let Some(ns) = self.ns {
            cfg.params.n_s = ns.count(n);
        }
        if let Some(ne) = self.ne {
            cfg.params.n_e = ne;
        }
        if let Some(a) = self.alpha {
            cfg.params.alpha = a;
        }
        if let Some(s) = self.stall_limit {
            cfg.stall_limit = s;
        }
        cfg
    }

    pub fn mads_config(&self, n: usize, budget: usize, seed: u64) -> MadsConfig {
        let cfg = MadsConfig::new(budget, seed);
        if self.ce {
            cfg.with_ce(self.ce_config(n))
        } else {
            cfg
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid algorithm name '{}'", self.name)));
        }
        if self.ce {
            self.ce_config(2).params.validate()?;
        }
        Ok(())
    }
}

/// Campaign description, read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub problems: Vec<String>,
    /// Random starts per problem.
    #[serde(default = "one")]
    pub starts: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, deserialize_with = "de_budget")]
    pub budget: BudgetRule,
    /// Seed of the random starting points.
    #[serde(default)]
    pub start_seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmConfig>,
}

fn one() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CampaignConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Config("a campaign needs problems and algorithms".into()));
        }
        if self.starts == 0 || self.seeds.is_empty() {
            return Err(Error::Config("a campaign needs starts >= 1 and a seed".into()));
        }
        for p in &self.problems {
            problems::spec(p)?;
        }
        let mut names: Vec<&str> = self.algorithms.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("algorithm names must be unique".into()));
        }
        self.algorithms.iter().try_for_each(AlgorithmConfig::validate)
    }

    pub fn instances(&self) -> Result<Vec<Instance>> {
        let mut out = Vec::new();
        for p in &self.problems {
            out.extend(instances(p, self.starts, &self.seeds, self.start_seed)?);
        }
        Ok(out)
    }
}

/// A problem with a starting point and a solver seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub problem: String,
    pub start_idx: usize,
    pub start: Vec<f64>,
    pub seed: u64,
}

fn name_tag(name: &str) -> u64 {
    // FNV-1a, stable across platforms and releases.
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// `starts` random starting points of a problem, each paired with every seed.
pub fn instances(problem: &str, starts: usize, seeds: &[u64], start_seed: u64) -> Result<Vec<Instance>> {
    let spec = problems::spec(problem)?;
    let mut out = Vec::with_capacity(starts * seeds.len());
    for idx in 0..starts {
        let mut rng = rng_from_seed(mix_seed(start_seed, &[name_tag(spec.name), idx as u64]));
        let start = spec.random_start(&mut rng);
        for &seed in seeds {
            out.push(Instance {
                problem: spec.name.to_string(),
                start_idx: idx,
                start: start.clone(),
                seed,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub algorithm: String,
    pub problem: String,
    pub start_idx: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn path(&self, root: &Path) -> PathBuf {
        root.join(&self.algorithm)
            .join(&self.problem)
            .join(format!("{}_{}.jsonl", self.start_idx, self.seed))
    }
}

/// One run log with its problem dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub n: usize,
    pub records: Vec<EvalRecord>,
}

/// All run logs of a campaign.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileInput {
    pub runs: BTreeMap<RunKey, RunLog>,
}

fn run_one(alg: &AlgorithmConfig, inst: &Instance, budget: &BudgetRule) -> (RunLog, Option<String>) {
    let spec = problems::spec(&inst.problem).expect("validated problem");
    let n = spec.n;
    let cfg = alg.mads_config(n, budget.budget(n), inst.seed);
    let p = spec.problem();
    let res = catch_unwind(AssertUnwindSafe(|| solve(&p, &inst.start, &cfg)));
    let (records, err) = match res {
        Ok(Ok(h)) => (h.records, None),
        Ok(Err(e)) => (Vec::new(), Some(e.to_string())),
        Err(_) => (Vec::new(), Some("solver panicked".to_string())),
    };
    (RunLog { n, records }, err)
}

/// Runs every (algorithm, instance) pair. Failed runs are logged and kept as
/// empty histories. Logs are written under `cfg.output` when set.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<ProfileInput> {
    cfg.validate()?;
    let instances = cfg.instances()?;
    let pairs: Vec<(&AlgorithmConfig, &Instance)> = cfg
        .algorithms
        .iter()
        .flat_map(|a| instances.iter().map(move |i| (a, i)))
        .collect();

    let go = || {
        pairs
            .par_iter()
            .map(|(a, i)| run_one(a, i, &cfg.budget))
            .collect::<Vec<_>>()
    };
    let results = if cfg.workers > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(go)
    } else {
        pairs.iter().map(|(a, i)| run_one(a, i, &cfg.budget)).collect()
    };

    let mut input = ProfileInput::default();
    for ((alg, inst), (log, err)) in pairs.iter().zip(results) {
        let key = RunKey {
            algorithm: alg.name.clone(),
            problem: inst.problem.clone(),
            start_idx: inst.start_idx,
            seed: inst.seed,
        };
        if let Some(e) = err {
            log::error!("{}/{}/{}_{}: {e}", key.algorithm, key.problem, key.start_idx, key.seed);
        }
        if let Some(root) = &cfg.output {
            save_records(&key.path(root), &log.records)?;
        }
        input.runs.insert(key, log);
    }
    Ok(input)
}

fn save_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let hist = RunHistory {
        problem: String::new(),
        n: 0,
        records: records.to_vec(),
        best_feasible: None,
        best_infeasible: None,
        iterations: 0,
        stop: crate::mads::StopReason::Budget,
        ce_activations: Vec::new(),
    };
    hist.save_jsonl(path)
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Reads a history directory laid out as `{algorithm}/{problem}/{start}_{seed}.jsonl`.
/// Problems outside the catalog take their dimension from the logged points.
pub fn load_histories(root: &Path) -> Result<ProfileInput> {
    let mut input = ProfileInput::default();
    for alg in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        for prob in sorted_dir(&alg)?.into_iter().filter(|p| p.is_dir()) {
            for file in sorted_dir(&prob)? {
                if file.extension().is_none_or(|e| e != "jsonl") {
                    continue;
                }
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let parsed = stem
                    .split_once('_')
                    .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
                let Some((start_idx, seed)) = parsed else {
                    log::warn!("skipping {}: name is not START_SEED.jsonl", file.display());
                    continue;
                };
                let records = read_jsonl(&file)?;
                let name = prob.file_name().unwrap().to_string_lossy().into_owned();
                let n = match problems::spec(&name) {
                    Ok(s) => s.n,
                    Err(_) => match records.first() {
                        Some(r) => r.x.len(),
                        None => continue,
                    },
                };
                let key = RunKey {
                    algorithm: alg.file_name().unwrap().to_string_lossy().into_owned(),
                    problem: name,
                    start_idx,
                    seed,
                };
                input.runs.insert(key, RunLog { n, records });
            }
        }
    }
    Ok(input)
}

/// `(f_fea, f_star)` over the histories of one problem, or `None` when no
/// history reaches feasibility.
pub fn references<'a>(histories: impl IntoIterator<Item = &'a [EvalRecord]>) -> Option<(f64, f64)> {
    let mut f_fea = f64::NEG_INFINITY;
    let mut f_star = f64::INFINITY;
    let mut any = false;
    for h in histories {
        let mut feasible = h.iter().filter(|r| r.is_feasible());
        if let Some(first) = feasible.next() {
            any = true;
            f_fea = f_fea.max(first.f);
            f_star = f_star.min(feasible.fold(first.f, |m, r| m.min(r.f)));
        }
    }
    any.then_some((f_fea, f_star))
}

/// Number of evaluations after which the run solves the problem at
/// tolerance `tau`.
pub fn solved_at(history: &[EvalRecord], tau: f64, f_fea: f64, f_star: f64) -> Option<usize> {
    let target = (1.0 - tau) * (f_fea - f_star);
    let mut best = f64::INFINITY;
    for (e, r) in history.iter().enumerate() {
        if r.is_feasible() && r.f < best {
            best = r.f;
            if f_fea - best >= target {
                return Some(e + 1);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    /// `(t, fraction)` for `t = 0, 1, ..`.
    pub points: Vec<(usize, f64)>,
}

impl ProfileCurve {
    pub fn final_fraction(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub tau: f64,
    pub curves: BTreeMap<String, ProfileCurve>,
    /// Problems where no run found a feasible point.
    pub excluded: Vec<String>,
}

/// Data profiles of every algorithm at tolerance `tau`. The horizon is the
/// longest history, in groups of `n + 1`.
pub fn data_profile(input: &ProfileInput, tau: f64) -> Result<Profile> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Usage(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut by_problem: BTreeMap<&str, Vec<&RunLog>> = BTreeMap::new();
    for (k, log) in &input.runs {
        by_problem.entry(&k.problem).or_default().push(log);
    }
    let mut refs = BTreeMap::new();
    let mut excluded = Vec::new();
    for (p, logs) in &by_problem {
        match references(logs.iter().map(|l| l.records.as_slice())) {
            Some(r) => {
                refs.insert(*p, r);
            }
            None => {
                log::warn!("{p}: no feasible point in any run, excluded from profiles");
                excluded.push(p.to_string());
            }
        }
    }

    // Solve time in groups of n + 1, per algorithm.
    let mut times: BTreeMap<&str, Vec<Option<usize>>> = BTreeMap::new();
    let mut horizon = 0;
    for (k, log) in &input.runs {
        let group = log.n + 1;
        horizon = horizon.max(log.records.len().div_ceil(group));
        let entry = times.entry(&k.algorithm).or_default();
        if let Some(&(f_fea, f_star)) = refs.get(k.problem.as_str()) {
            entry.push(solved_at(&log.records, tau, f_fea, f_star).map(|e| e.div_ceil(group)));
        }
    }

    let curves = times
        .into_iter()
        .map(|(alg, t)| {
            let total = t.len();
            let points = (0..=horizon)
                .map(|step| {
                    let solved = t.iter().filter(|s| s.is_some_and(|s| s <= step)).count();
                    let frac = if total == 0 { 0.0 } else { solved as f64 / total as f64 };
                    (step, frac)
                })
                .collect();
            (alg.to_string(), ProfileCurve { points })
        })
        .collect();
    Ok(Profile {
        tau,
        curves,
        excluded,
    })
}

/// CSV with columns `algorithm,tau,t,fraction`.
pub fn write_profile_csv(profiles: &[Profile], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["algorithm", "tau", "t", "fraction"])?;
    for p in profiles {
        for (alg, c) in &p.curves {
            for (t, frac) in &c.points {
                out.write_record([
                    alg.clone(),
                    format!("{:e}", p.tau),
                    t.to_string(),
                    crate::util::fmt_real(*frac),
                ])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("<profile csv>", e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub algorithm: String,
    pub problem: String,
    pub runs: usize,
    pub feasible: usize,
}

/// Per (algorithm, problem) count of runs that reached feasibility.
pub fn feasibility_summary(input: &ProfileInput) -> Vec<SolveSummary> {
    let mut map: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
    for (k, log) in &input.runs {
        let e = map.entry((&k.algorithm, &k.problem)).or_default();
        e.0 += 1;
        e.1 += usize::from(log.records.iter().any(EvalRecord::is_feasible));
    }
    map.into_iter()
        .map(|((a, p), (runs, feasible))| SolveSummary {
            algorithm: a.to_string(),
            problem: p.to_string(),
            runs,
            feasible,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::EvalStatus;
    use crate::mads::Source;

    fn rec(eval: usize, f: f64, h: f64) -> EvalRecord {
        EvalRecord {
            eval,
            iteration: 0,
            source: Source::Poll,
            x: vec![0.0],
            f,
            h,
            status: EvalStatus::Ok,
        }
    }

    fn hist(fs: &[f64]) -> Vec<EvalRecord> {
        fs.iter().enumerate().map(|(i, &f)| rec(i, f, 0.0)).collect()
    }

    #[test]
    fn budget_rules() {
        assert_eq!("1000(n+1)".parse::<BudgetRule>().unwrap().budget(2), 3000);
        assert_eq!("1500".parse::<BudgetRule>().unwrap().budget(7), 1500);
        assert!("lots".parse::<BudgetRule>().is_err());
        assert_eq!("2n".parse::<SampleCount>().unwrap().count(5), 10);
        assert_eq!("12".parse::<SampleCount>().unwrap().count(5), 12);
    }

    #[test]
    fn instance_count() {
        assert_eq!(instances("BRANIN", 20, &[0, 1, 2], 0).unwrap().len(), 60);
    }

    #[test]
    fn reference_examples() {
        assert_eq!(references([hist(&[5.0, 3.0, 1.0]).as_slice()]), Some((5.0, 1.0)));
        let a = hist(&[5.0, 1.0]);
        let b = hist(&[7.0, 2.0]);
        assert_eq!(references([a.as_slice(), b.as_slice()]), Some((7.0, 1.0)));
        let inf = vec![rec(0, 1.0, 2.0)];
        assert_eq!(references([inf.as_slice()]), None);
    }

    #[test]
    fn solved_at_examples() {
        assert_eq!(solved_at(&hist(&[10.0, 5.0, 0.5]), 0.1, 10.0, 0.0), Some(3));
        assert_eq!(solved_at(&hist(&[4.0, 4.0]), 0.1, 4.0, 4.0), Some(1));
        assert_eq!(solved_at(&[rec(0, 0.0, 1.0)], 0.1, 1.0, 0.0), None);
    }

    #[test]
    fn instance_solved_at_first_group() {
        let mut input = ProfileInput::default();
        let key = RunKey {
            algorithm: "a".into(),
            problem: "P".into(),
            start_idx: 0,
            seed: 0,
        };
        input.runs.insert(key, RunLog { n: 2, records: hist(&[3.0, 2.0, 0.0, 0.0]) });
        let p = data_profile(&input, 1e-3).unwrap();
        let c = &p.curves["a"];
        assert_eq!(c.points[0], (0, 0.0));
        assert_eq!(c.points[1], (1, 1.0));
    }

    #[test]
    fn campaign_config_parses() {
        let cfg = CampaignConfig::from_toml(
            r#"
            problems = ["BRANIN"]
            starts = 2
            seeds = [0, 1]
            budget = "10"
            [[algorithm]]
            name = "mads"
            ce = false
            [[algorithm]]
            name = "ce-mads"
            ns = "2n"
            ne = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.budget, BudgetRule::Fixed(10));
        let input = run_campaign(&cfg).unwrap();
        assert_eq!(input.runs.len(), 8);
        assert!(input.runs.values().all(|r| r.records.len() <= 10));
    }
}
