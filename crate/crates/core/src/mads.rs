//! The MADS loop with a simplified progressive barrier.
//!
//! Each iteration runs the registered search steps in order; if none of them
//! improves an incumbent, the poll step evaluates `2n` mesh points around the
//! frame center, stopping at the first improvement. Sizes grow (up to their
//! initial value) on success and shrink on failure. The frame center is the
//! best feasible point, or the best infeasible one when no feasible point is
//! known.
//!
//! Evaluations of a batch may run on several worker threads. Results are
//! always committed in generation order, and with opportunistic polling the
//! points evaluated speculatively past the first success are discarded, so
//! the run log does not depend on the worker count.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blackbox::{EvalStatus, Evaluation, Problem};
use crate::cache::{dominates, Cache, CacheEntry, InsertOutcome};
use crate::ce::{CeActivation, CeSearch, CeSearchConfig};
use crate::error::{Error, Result};
use crate::mesh::{
    init_mesh, poll_directions, poll_points, project_within, update_sizes, MeshState, SizeUpdate,
};
use crate::util::{mix_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Initial,
    Poll,
    CeSearch,
    Other,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Initial => "initial",
            Source::Poll => "poll",
            Source::CeSearch => "ce_search",
            Source::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadsConfig {
    /// Maximum number of blackbox evaluations.
    pub budget: usize,
    pub seed: u64,
    /// CE search step, registered first when present.
    pub ce: Option<CeSearchConfig>,
    /// Initial barrier threshold on `h`.
    pub h_max_init: f64,
    pub opportunistic: bool,
    /// Stop once the largest poll size falls below this.
    pub stop_delta: f64,
    /// Worker threads for batch evaluation.
    pub workers: usize,
}

impl MadsConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        MadsConfig {
            budget,
            seed,
            ce: None,
            h_max_init: f64::INFINITY,
            opportunistic: true,
            stop_delta: 1e-9,
            workers: 1,
        }
    }

    pub fn with_ce(mut self, ce: CeSearchConfig) -> Self {
        self.ce = Some(ce);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// Read-only view handed to search plugins.
pub struct SearchContext<'a> {
    pub problem: &'a Problem,
    pub cache: &'a Cache,
    pub mesh: &'a MeshState,
    pub iteration: usize,
    pub budget_left: usize,
    pub h_max: f64,
}

/// A search step. Proposed points are projected onto the mesh (inside the
/// bounds) by the loop before evaluation; points already in the cache are
/// skipped.
pub trait SearchStep {
    fn source(&self) -> Source;

    fn propose(&mut self, ctx: &SearchContext<'_>, rng: &mut Rng) -> Vec<Vec<f64>>;

    /// Called after the proposed points were evaluated and cached.
    fn absorb(&mut self, _ctx: &SearchContext<'_>) {}

    /// Called once at the end of every iteration.
    fn end_iteration(&mut self, _ctx: &SearchContext<'_>) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    SearchSuccess,
    PollSuccess,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub kind: OutcomeKind,
    pub new_incumbent: Option<CacheEntry>,
}

impl IterationOutcome {
    fn failure() -> Self {
        IterationOutcome {
            kind: OutcomeKind::Failure,
            new_incumbent: None,
        }
    }
}

/// Progressive-barrier threshold on the violation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    pub h_max: f64,
}

impl Barrier {
    pub fn new(h_max_init: f64) -> Self {
        Barrier { h_max: h_max_init }
    }

    /// Whether `e` improves on the incumbents of its feasibility class:
    /// a feasible point with a lower objective, or an infeasible point under
    /// the threshold that dominates the infeasible incumbent or lowers `h`.
    pub fn improves(
        &self,
        e: &CacheEntry,
        best_feasible: Option<&CacheEntry>,
        best_infeasible: Option<&CacheEntry>,
    ) -> bool {
        if e.is_feasible() {
            return best_feasible.is_none_or(|b| e.f < b.f);
        }
        if !e.h.is_finite() || e.h > self.h_max {
            return false;
        }
        match best_infeasible {
            None => e.h < self.h_max || self.h_max.is_infinite(),
            Some(b) => dominates(e, b) || e.h < self.h_max.min(b.h),
        }
    }

    /// Infeasible incumbent admitted by the threshold.
    pub fn admitted<'a>(&self, cache: &'a Cache) -> Option<&'a CacheEntry> {
        cache.best_infeasible().filter(|e| e.h <= self.h_max)
    }
}

/// Tightens the threshold to the violation of the infeasible incumbent.
pub fn barrier_update(barrier: Barrier, cache: &Cache) -> Barrier {
    match cache.best_infeasible() {
        Some(e) if e.h.is_finite() => Barrier {
            h_max: barrier.h_max.min(e.h),
        },
        _ => barrier,
    }
}

mod ext_real {
    use super::*;

    // JSON has no infinity; `null` stands for +inf.
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub eval: usize,
    pub iteration: usize,
    pub source: Source,
    pub x: Vec<f64>,
    #[serde(with = "ext_real")]
    pub f: f64,
    #[serde(with = "ext_real")]
    pub h: f64,
    pub status: EvalStatus,
}

impl EvalRecord {
    pub fn is_feasible(&self) -> bool {
        self.h == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    MeshSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub problem: String,
    pub n: usize,
    pub records: Vec<EvalRecord>,
    pub best_feasible: Option<CacheEntry>,
    pub best_infeasible: Option<CacheEntry>,
    pub iterations: usize,
    pub stop: StopReason,
    pub ce_activations: Vec<CeActivation>,
}

impl RunHistory {
    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    /// Best point by the `Best` ordering.
    pub fn best(&self) -> Option<&CacheEntry> {
        self.best_feasible.as_ref().or(self.best_infeasible.as_ref())
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<run log>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads the per-evaluation records of a run log.
pub fn read_jsonl(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

struct Evaluator<'p> {
    problem: &'p Problem,
    pool: Option<rayon::ThreadPool>,
    workers: usize,
}

impl<'p> Evaluator<'p> {
    fn new(problem: &'p Problem, workers: usize) -> Result<Self> {
        let workers = workers.max(1);
        let pool = if workers > 1 && problem.is_concurrent() {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Evaluator {
            problem,
            pool,
            workers,
        })
    }

    fn chunk_size(&self) -> usize {
        if self.pool.is_some() {
            self.workers
        } else {
            1
        }
    }

    fn batch(&self, points: &[Vec<f64>]) -> Result<Vec<Evaluation>> {
        match &self.pool {
            Some(pool) => pool.install(|| {
                points
                    .par_iter()
                    .map(|x| self.problem.evaluate(x))
                    .collect()
            }),
            None => points.iter().map(|x| self.problem.evaluate(x)).collect(),
        }
    }
}

struct Run<'p> {
    problem: &'p Problem,
    cfg: &'p MadsConfig,
    eval: Evaluator<'p>,
    cache: Cache,
    records: Vec<EvalRecord>,
    mesh: MeshState,
    barrier: Barrier,
    iteration: usize,
}

impl Run<'_> {
    fn budget_left(&self) -> usize {
        self.cfg.budget - self.records.len()
    }

    fn commit(&mut self, e: &Evaluation, source: Source) -> Option<CacheEntry> {
        let InsertOutcome::Inserted(gen) = self.cache.insert(e) else {
            return None;
        };
        self.records.push(EvalRecord {
            eval: self.records.len(),
            iteration: self.iteration,
            source,
            x: e.x.clone(),
            f: e.f,
            h: e.h,
            status: e.status,
        });
        self.cache.get(gen).cloned()
    }

    /// Mesh-projects, deduplicates and truncates candidate points to the
    /// remaining budget.
    fn admissible(&self, points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut seen = std::collections::HashSet::new();
        points
            .into_iter()
            .map(|x| project_within(&self.mesh, &x, self.problem.bounds()))
            .filter(|x| !self.cache.contains(x))
            .filter(|x| seen.insert(x.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<_>>()))
            .take(self.budget_left())
            .collect()
    }

    /// Evaluates a batch in order. With `opportunistic`, stops after the
    /// first improving point. Returns the first improving entry, if any.
    fn evaluate_batch(
        &mut self,
        points: Vec<Vec<f64>>,
        source: Source,
        opportunistic: bool,
    ) -> Result<Option<CacheEntry>> {
        let (bf, bi) = {
            let (bf, _) = self.cache.incumbents();
            (bf.cloned(), self.barrier.admitted(&self.cache).cloned())
        };
        let chunk = if opportunistic {
            self.eval.chunk_size()
        } else {
            points.len().max(1)
        };
        let mut improvement = None;
        for group in points.chunks(chunk) {
            let results = self.eval.batch(group)?;
            for e in &results {
                let Some(entry) = self.commit(e, source) else {
                    continue;
                };
                if improvement.is_none() && self.barrier.improves(&entry, bf.as_ref(), bi.as_ref()) {
                    improvement = Some(entry);
                    if opportunistic {
                        return Ok(improvement);
                    }
                }
            }
        }
        Ok(improvement)
    }

    fn context(&self) -> SearchContext<'_> {
        SearchContext {
            problem: self.problem,
            cache: &self.cache,
            mesh: &self.mesh,
            iteration: self.iteration,
            budget_left: self.budget_left(),
            h_max: self.barrier.h_max,
        }
    }

    fn poll_step(&mut self, rng: &mut Rng) -> Result<IterationOutcome> {
        if self.budget_left() == 0 {
            return Ok(IterationOutcome::failure());
        }
        let dirs = poll_directions(&self.mesh, rng);
        let points = self.admissible(poll_points(&self.mesh, &dirs));
        let found = self.evaluate_batch(points, Source::Poll, self.cfg.opportunistic)?;
        Ok(match found {
            Some(e) => IterationOutcome {
                kind: OutcomeKind::PollSuccess,
                new_incumbent: Some(e),
            },
            None => IterationOutcome::failure(),
        })
    }

    fn frame_center(&self) -> Vec<f64> {
        self.cache
            .best_feasible()
            .or_else(|| self.barrier.admitted(&self.cache))
            .or_else(|| self.cache.sorted().next())
            .map(|e| e.x.clone())
            .unwrap_or_else(|| self.mesh.center.clone())
    }
}

/// Runs MADS (with the CE search step when configured).
pub fn solve(p: &Problem, x0: &[f64], cfg: &MadsConfig) -> Result<RunHistory> {
    solve_with(p, x0, cfg, &mut [])
}

/// Runs MADS with additional search steps, applied after the CE search.
pub fn solve_with(
    p: &Problem,
    x0: &[f64],
    cfg: &MadsConfig,
    extra: &mut [&mut dyn SearchStep],
) -> Result<RunHistory> {
    if cfg.budget < 1 {
        return Err(Error::Usage("budget must be at least 1".into()));
    }
    if x0.len() != p.n() {
        return Err(Error::Dimension {
            expected: p.n(),
            got: x0.len(),
        });
    }

    let mut ce = cfg
        .ce
        .clone()
        .map(|c| CeSearch::new(c, p.n()))
        .transpose()?;
    let mut searches: Vec<&mut dyn SearchStep> = Vec::new();
    if let Some(ce) = ce.as_mut() {
        searches.push(ce);
    }
    for s in extra.iter_mut() {
        searches.push(&mut **s);
    }

    let mesh = init_mesh(p.bounds(), x0);
    let mut run = Run {
        problem: p,
        cfg,
        eval: Evaluator::new(p, cfg.workers)?,
        cache: Cache::new(),
        records: Vec::new(),
        barrier: Barrier::new(cfg.h_max_init),
        iteration: 0,
        mesh,
    };
    let mut poll_rng = rng_from_seed(mix_seed(cfg.seed, &[0]));
    let mut search_rngs: Vec<Rng> = (0..searches.len())
        .map(|i| rng_from_seed(mix_seed(cfg.seed, &[1 + i as u64])))
        .collect();

    let start = run.mesh.center.clone();
    let e0 = p.evaluate(&start)?;
    run.commit(&e0, Source::Initial);
    run.barrier = barrier_update(run.barrier, &run.cache);

    let stop = loop {
        if run.budget_left() == 0 {
            break StopReason::Budget;
        }
        if run.mesh.max_poll() < cfg.stop_delta {
            break StopReason::MeshSize;
        }

        let mut outcome = IterationOutcome::failure();
        for (search, rng) in searches.iter_mut().zip(search_rngs.iter_mut()) {
            if run.budget_left() == 0 {
                break;
            }
            let proposed = search.propose(&run.context(), rng);
            let points = run.admissible(proposed);
            let found = run.evaluate_batch(points, search.source(), false)?;
            search.absorb(&run.context());
            if let Some(e) = found {
                outcome = IterationOutcome {
                    kind: OutcomeKind::SearchSuccess,
                    new_incumbent: Some(e),
                };
                break;
            }
        }
        if outcome.kind == OutcomeKind::Failure {
            outcome = run.poll_step(&mut poll_rng)?;
        }

        let update = if outcome.kind == OutcomeKind::Failure {
            SizeUpdate::Failure
        } else {
            SizeUpdate::Success
        };
        run.barrier = barrier_update(run.barrier, &run.cache);
        let center = run.frame_center();
        run.mesh = update_sizes(&run.mesh, update).with_center(center);
        for search in searches.iter_mut() {
            search.end_iteration(&run.context());
        }
        run.iteration += 1;
    };

    let (bf, bi) = run.cache.incumbents();
    Ok(RunHistory {
        problem: p.name().to_string(),
        n: p.n(),
        best_feasible: bf.cloned(),
        best_infeasible: bi.cloned(),
        records: run.records,
        iterations: run.iteration,
        stop,
        ce_activations: ce.map(CeSearch::into_activations).unwrap_or_default(),
    })
}

/// A single poll step around `ms.center` against an existing cache, outside
/// the main loop. Evaluated points are added to `cache`.
pub fn poll_step(
    p: &Problem,
    cache: &mut Cache,
    ms: &MeshState,
    barrier: Barrier,
    rng: &mut Rng,
    budget_left: usize,
    opportunistic: bool,
) -> Result<(IterationOutcome, usize)> {
    let cfg = MadsConfig {
        opportunistic,
        ..MadsConfig::new(budget_left.max(1), 0)
    };
    let mut run = Run {
        problem: p,
        cfg: &cfg,
        eval: Evaluator::new(p, 1)?,
        cache: std::mem::take(cache),
        records: Vec::new(),
        mesh: ms.clone(),
        barrier,
        iteration: 0,
    };
    let outcome = if budget_left == 0 {
        IterationOutcome::failure()
    } else {
        run.poll_step(rng)?
    };
    *cache = run.cache;
    Ok((outcome, run.records.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{BoundBox, EvalOutput};

    fn sphere(n: usize) -> Problem {
        Problem::new("SPHERE", 0, BoundBox::unbounded(n), |x| {
            EvalOutput::ok(x.iter().map(|v| v * v).sum(), vec![])
        })
        .unwrap()
    }

    fn entry(f: f64, h: f64, gen: usize) -> CacheEntry {
        CacheEntry {
            x: vec![gen as f64],
            f,
            h,
            status: EvalStatus::Ok,
            gen,
        }
    }

    #[test]
    fn budget_one_evaluates_only_the_start() {
        let h = solve(&sphere(2), &[2.0, 2.0], &MadsConfig::new(1, 0)).unwrap();
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.records[0].source, Source::Initial);
    }

    #[test]
    fn zero_budget_is_a_usage_error() {
        assert!(matches!(
            solve(&sphere(2), &[2.0, 2.0], &MadsConfig::new(0, 0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn sphere_converges() {
        let h = solve(&sphere(2), &[2.0, 2.0], &MadsConfig::new(500, 0)).unwrap();
        assert!(h.best_feasible.unwrap().f <= 1e-6);
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = MadsConfig::new(300, 5).with_ce(CeSearchConfig::for_dimension(2));
        let a = solve(&sphere(2), &[2.0, -1.0], &cfg).unwrap();
        let b = solve(&sphere(2), &[2.0, -1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn barrier_examples() {
        let b = barrier_update(Barrier::new(f64::INFINITY), &Cache::new());
        assert_eq!(b.h_max, f64::INFINITY);

        let mut cache = Cache::new();
        let ev = |x: f64, f: f64, h: f64| Evaluation {
            x: vec![x],
            f,
            h,
            c: vec![],
            status: EvalStatus::Ok,
        };
        cache.insert(&ev(0.0, 1.0, 4.0));
        let b = barrier_update(b, &cache);
        assert_eq!(b.h_max, 4.0);
        cache.insert(&ev(1.0, 3.0, 2.0));
        let b = barrier_update(b, &cache);
        assert_eq!(b.h_max, 2.0);

        let mut feasible = Cache::new();
        feasible.insert(&ev(0.0, 1.0, 0.0));
        assert_eq!(barrier_update(Barrier::new(f64::INFINITY), &feasible).h_max, f64::INFINITY);
    }

    #[test]
    fn improvement_rules() {
        let bar = Barrier::new(2.0);
        let bi = entry(5.0, 2.0, 0);
        assert!(bar.improves(&entry(4.0, 2.0, 1), None, Some(&bi)));
        assert!(bar.improves(&entry(9.0, 1.0, 1), None, Some(&bi)));
        assert!(!bar.improves(&entry(1.0, 3.0, 1), None, Some(&bi)));
        let bf = entry(1.0, 0.0, 0);
        assert!(bar.improves(&entry(0.5, 0.0, 1), Some(&bf), None));
        assert!(!bar.improves(&entry(1.0, 0.0, 1), Some(&bf), None));
        assert!(!bar.improves(&entry(f64::INFINITY, f64::INFINITY, 1), None, None));
    }

    #[test]
    fn poll_at_minimum_fails() {
        let p = sphere(2);
        let mut cache = Cache::new();
        cache.insert(&p.evaluate(&[0.0, 0.0]).unwrap());
        let ms = MeshState::from_sizes(vec![1e-4; 2], vec![1e-2; 2], vec![0.0, 0.0]);
        let (out, used) = poll_step(
            &p,
            &mut cache,
            &ms,
            Barrier::new(f64::INFINITY),
            &mut rng_from_seed(1),
            100,
            true,
        )
        .unwrap();
        assert_eq!(out.kind, OutcomeKind::Failure);
        assert_eq!(used, 4);
    }

    #[test]
    fn poll_with_zero_budget_is_a_failure() {
        let p = sphere(2);
        let mut cache = Cache::new();
        cache.insert(&p.evaluate(&[1.0, 1.0]).unwrap());
        let ms = MeshState::from_sizes(vec![0.5; 2], vec![0.5; 2], vec![1.0, 1.0]);
        let (out, used) = poll_step(
            &p,
            &mut cache,
            &ms,
            Barrier::new(f64::INFINITY),
            &mut rng_from_seed(1),
            0,
            true,
        )
        .unwrap();
        assert_eq!((out.kind, used), (OutcomeKind::Failure, 0));
    }

    #[test]
    fn jsonl_round_trip_keeps_infinities() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let hist = RunHistory {
            problem: "P".into(),
            n: 1,
            records: vec![EvalRecord {
                eval: 0,
                iteration: 0,
                source: Source::Initial,
                x: vec![0.1],
                f: f64::INFINITY,
                h: f64::INFINITY,
                status: EvalStatus::Failed,
            }],
            best_feasible: None,
            best_infeasible: None,
            iterations: 0,
            stop: StopReason::Budget,
            ce_activations: vec![],
        };
        hist.save_jsonl(&path).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), hist.records);
    }
}
