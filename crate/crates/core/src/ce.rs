//! Cross-entropy machinery: the standalone optimizer with a normal sampling
//! law, and the CE search step plugged into MADS.
//!
//! The standalone optimizer repeatedly samples `N_s` points from
//! `N(mu, sigma)`, keeps the `N_e` best under the `Best` ordering, and moves
//! `(mu, sigma)` toward the elite mean and standard deviation with a convex
//! combination of weight `alpha`.
//!
//! The search step differs in three ways: elites come from the whole MADS
//! cache, the first activations use a wide cold-start distribution inside
//! synthesized finite bounds, and it only runs when the elite spread has
//! dropped below the spread recorded at the previous activation. When no
//! feasible point has been found for `stall_limit` iterations it switches to
//! an escape mode centered on the best infeasible point.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blackbox::{BoundBox, Evaluation, Problem};
use crate::cache::{Cache, CacheEntry};
use crate::error::{Error, Result};
use crate::mads::{SearchContext, SearchStep, Source};
use crate::mesh::{project_within, MeshState};
use crate::util::{fmt_real, norm2, Rng};

/// Rejection attempts per coordinate before falling back to clamping.
const MAX_REJECTIONS: usize = 100;

/// Parameters of the sampling/elite update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeParams {
    /// Samples per iteration.
    pub n_s: usize,
    /// Elite count.
    pub n_e: usize,
    /// Smoothing weight of the new elite statistics.
    pub alpha: f64,
    /// Quantile level for the level estimate (standalone optimizer only).
    pub rho: f64,
    /// Stop once `||sigma||_2` drops below this (standalone optimizer only).
    pub sigma_stop: f64,
}

impl CeParams {
    /// `N_e = 4`, `N_s = 2n` (at least `N_e`), `alpha = 0.7`, `rho = 0.1`.
    pub fn for_dimension(n: usize) -> Self {
        CeParams {
            n_s: (2 * n).max(4),
            n_e: 4,
            alpha: 0.7,
            rho: 0.1,
            sigma_stop: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_e == 0 || self.n_s == 0 {
            return Err(Error::Usage("N_e and N_s must be positive".into()));
        }
        if self.n_e > self.n_s {
            return Err(Error::Usage(format!(
                "N_e ({}) must not exceed N_s ({})",
                self.n_e, self.n_s
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Usage(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Usage(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }
}

/// Draws one point, each coordinate from `N(mu_i, sigma_i)` restricted to
/// `[lower_i, upper_i]` by rejection. After 100 rejected draws the last one
/// is clamped to the box; `sigma_i = 0` yields the clamped mean.
pub fn sample_truncated_normal(mu: &[f64], sigma: &[f64], b: &BoundBox, rng: &mut Rng) -> Vec<f64> {
    (0..mu.len())
        .map(|i| {
            let (l, u) = (b.lower()[i], b.upper()[i]);
            if sigma[i] == 0.0 {
                return mu[i].clamp(l, u);
            }
            let mut z = mu[i];
            for _ in 0..MAX_REJECTIONS {
                let g: f64 = rng.sample(StandardNormal);
                z = mu[i] + sigma[i] * g;
                if l <= z && z <= u {
                    return z;
                }
            }
            z.clamp(l, u)
        })
        .collect()
}

/// Level estimate: the `ceil(rho * N)`-th smallest value, so that at least a
/// fraction `rho` of the sample lies at or below it.
pub fn quantile_gamma(fvals: &[f64], rho: f64) -> Result<f64> {
    if fvals.is_empty() {
        return Err(Error::Usage("quantile of an empty sample".into()));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Usage(format!("rho must lie in (0, 1), got {rho}")));
    }
    let mut sorted = fvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((rho * sorted.len() as f64) - 1e-9).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Componentwise mean and sample standard deviation (divisor `N_e - 1`).
/// A single elite gives a zero deviation.
pub fn elite_stats<X: AsRef<[f64]>>(elites: &[X]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = elites
        .first()
        .ok_or_else(|| Error::Usage("elite statistics need at least one point".into()))?
        .as_ref();
    let n = first.len();
    let count = elites.len() as f64;
    let mut mean = vec![0.0; n];
    for x in elites {
        for (m, v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    if elites.len() == 1 {
        return Ok((first.to_vec(), vec![0.0; n]));
    }
    let mut var = vec![0.0; n];
    for x in elites {
        for ((s, v), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd = var.into_iter().map(|s| (s / (count - 1.0)).sqrt()).collect();
    Ok((mean, sd))
}

/// `alpha * new + (1 - alpha) * old`, componentwise on mean and deviation.
pub fn smooth(
    mu: &[f64],
    sigma: &[f64],
    mu_tilde: &[f64],
    sigma_tilde: &[f64],
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mix = |old: &[f64], new: &[f64]| -> Vec<f64> {
        old.iter()
            .zip(new)
            .map(|(o, t)| alpha * t + (1.0 - alpha) * o)
            .collect()
    };
    (mix(mu, mu_tilde), mix(sigma, sigma_tilde))
}

/// One row of the standalone optimizer trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CeIteration {
    pub iter: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: f64,
    pub best_f: f64,
    pub best_h: f64,
}

#[derive(Debug, Clone)]
pub struct CeOutcome {
    pub best: Evaluation,
    pub trace: Vec<CeIteration>,
    pub evaluations: usize,
}

fn eval_order(a: &Evaluation, b: &Evaluation) -> std::cmp::Ordering {
    a.h.total_cmp(&b.h).then(a.f.total_cmp(&b.f))
}

/// Standalone cross-entropy optimizer with a normal sampling law.
///
/// Samples are truncated to the problem bounds where those are finite.
/// Elites are the `N_e` best points of the current sample under the `Best`
/// ordering, so constraints are handled through `(h, f)` without penalties.
pub fn ce_optimize(
    p: &Problem,
    params: &CeParams,
    mu0: &[f64],
    sigma0: &[f64],
    rng: &mut Rng,
    budget: usize,
) -> Result<CeOutcome> {
    params.validate()?;
    for v in [mu0, sigma0] {
        if v.len() != p.n() {
            return Err(Error::Dimension {
                expected: p.n(),
                got: v.len(),
            });
        }
    }
    if budget < params.n_s {
        return Err(Error::EmptyTrace {
            budget,
            samples: params.n_s,
        });
    }

    let (mut mu, mut sigma) = (mu0.to_vec(), sigma0.to_vec());
    let mut best: Option<Evaluation> = None;
    let mut trace = Vec::new();
    let mut used = 0;

    while used + params.n_s <= budget {
        let mut sample = (0..params.n_s)
            .map(|_| p.evaluate(&sample_truncated_normal(&mu, &sigma, p.bounds(), rng)))
            .collect::<Result<Vec<_>>>()?;
        used += params.n_s;

        let fvals: Vec<f64> = sample.iter().map(|e| e.f).collect();
        let gamma = quantile_gamma(&fvals, params.rho)?;

        // Stable sort keeps sample order as the age tiebreak.
        sample.sort_by(eval_order);
        let elites: Vec<&[f64]> = sample[..params.n_e].iter().map(|e| e.x.as_slice()).collect();
        let (mu_t, sigma_t) = elite_stats(&elites)?;
        (mu, sigma) = smooth(&mu, &sigma, &mu_t, &sigma_t, params.alpha);

        if best
            .as_ref()
            .is_none_or(|b| eval_order(&sample[0], b).is_lt())
        {
            best = Some(sample[0].clone());
        }
        let b = best.as_ref().expect("at least one iteration ran");
        trace.push(CeIteration {
            iter: trace.len(),
            mu: mu.clone(),
            sigma: sigma.clone(),
            gamma,
            best_f: b.f,
            best_h: b.h,
        });

        if norm2(&sigma) < params.sigma_stop {
            break;
        }
    }

    Ok(CeOutcome {
        best: best.expect("at least one iteration ran"),
        trace,
        evaluations: used,
    })
}

/// Writes `iter, mu_1..mu_n, sigma_1..sigma_n, gamma, best_f, best_h` rows.
pub fn write_trace_csv(trace: &[CeIteration], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = trace.first().map_or(0, |t| t.mu.len());
    let mut header = vec!["iter".to_string()];
    header.extend((1..=n).map(|i| format!("mu_{i}")));
    header.extend((1..=n).map(|i| format!("sigma_{i}")));
    header.extend(["gamma", "best_f", "best_h"].map(String::from));
    out.write_record(&header)?;
    for t in trace {
        let mut row = vec![t.iter.to_string()];
        row.extend(t.mu.iter().chain(&t.sigma).map(|v| fmt_real(*v)));
        row.extend([t.gamma, t.best_f, t.best_h].map(fmt_real));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io(Path::new("<trace>"), e))
}

/// Finite sampling box around the frame center. Infinite sides are replaced
/// by `center -/+ 10 * poll_size`.
pub fn synth_bounds(b: &BoundBox, center: &[f64], poll: &[f64]) -> BoundBox {
    let (lower, upper) = (0..b.dim())
        .map(|i| {
            let (l, u) = (b.lower()[i], b.upper()[i]);
            let l = if l.is_finite() { l } else { center[i] - 10.0 * poll[i] };
            let u = if u.is_finite() { u } else { center[i] + 10.0 * poll[i] };
            (l, u)
        })
        .unzip();
    BoundBox::new(lower, upper).expect("center lies inside the native bounds")
}

/// Mean and deviation at the start of a search step. With fewer than `N_e`
/// cached points the mean is the frame center and the deviation twice the
/// width of the sampling box; otherwise the elite statistics of the cache.
pub fn cold_start(cache: &Cache, n_e: usize, center: &[f64], synth: &BoundBox) -> (Vec<f64>, Vec<f64>) {
    if cache.len() < n_e || n_e == 0 {
        let sigma = synth
            .lower()
            .iter()
            .zip(synth.upper())
            .map(|(l, u)| 2.0 * (u - l))
            .collect();
        return (center.to_vec(), sigma);
    }
    let elites: Vec<&[f64]> = cache.elites(n_e).iter().map(|e| e.x.as_slice()).collect();
    elite_stats(&elites).expect("non-empty elite set")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CeMode {
    No,
    Normal,
    Escape,
}

/// Mutable state of the search step across MADS iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct CeState {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Spread recorded at the last activation; `+inf` before the first.
    pub sigma_p: Vec<f64>,
    /// Consecutive MADS iterations that ended without a feasible point.
    pub infeasible_stall: usize,
    /// Deviation at the first activation.
    pub sigma_init: Option<Vec<f64>>,
}

impl CeState {
    pub fn new(n: usize) -> Self {
        CeState {
            mu: vec![0.0; n],
            sigma: vec![f64::INFINITY; n],
            sigma_p: vec![f64::INFINITY; n],
            infeasible_stall: 0,
            sigma_init: None,
        }
    }

    pub fn sigma_p_norm(&self) -> f64 {
        norm2(&self.sigma_p)
    }
}

/// Decides whether the search step runs this iteration.
pub fn should_search(
    state: &CeState,
    sigma_k_norm: f64,
    feasible_found: bool,
    stall_limit: usize,
) -> CeMode {
    if !feasible_found && state.infeasible_stall >= stall_limit {
        CeMode::Escape
    } else if sigma_k_norm < state.sigma_p_norm() {
        CeMode::Normal
    } else {
        CeMode::No
    }
}

/// CE search step settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeSearchConfig {
    pub params: CeParams,
    /// Iterations without a feasible point before escape mode kicks in.
    pub stall_limit: usize,
}

impl CeSearchConfig {
    pub fn for_dimension(n: usize) -> Self {
        CeSearchConfig {
            params: CeParams::for_dimension(n),
            stall_limit: 10,
        }
    }
}

/// Record of one activation of the search step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeActivation {
    pub iteration: usize,
    pub mode: CeMode,
    /// Mean the sample was drawn around.
    pub mu: Vec<f64>,
    /// Deviation parameter; samples are drawn with twice this value.
    pub sigma: Vec<f64>,
    /// `||sigma^k||` of the elite statistics that were tested.
    pub sigma_k_norm: f64,
    pub sigma_p_before: f64,
    pub sigma_p_after: f64,
    pub infeasible_stall: usize,
    pub samples: usize,
}

#[derive(Debug, Clone)]
struct Pending {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    /// Elite spread tested by the trigger.
    sigma_k: Vec<f64>,
}

/// The CE search step as a MADS plugin.
#[derive(Debug, Clone)]
pub struct CeSearch {
    cfg: CeSearchConfig,
    state: CeState,
    pending: Option<Pending>,
    log: Vec<CeActivation>,
}

impl CeSearch {
    pub fn new(cfg: CeSearchConfig, n: usize) -> Result<Self> {
        cfg.params.validate()?;
        Ok(CeSearch {
            cfg,
            state: CeState::new(n),
            pending: None,
            log: Vec::new(),
        })
    }

    pub fn state(&self) -> &CeState {
        &self.state
    }

    pub fn activations(&self) -> &[CeActivation] {
        &self.log
    }

    pub fn into_activations(self) -> Vec<CeActivation> {
        self.log
    }

    /// Draws the trial points of this iteration (already on the mesh and
    /// inside the native bounds); empty when the trigger refuses.
    pub fn propose_points(
        &mut self,
        problem: &Problem,
        cache: &Cache,
        ms: &MeshState,
        iteration: usize,
        budget_left: usize,
        rng: &mut Rng,
    ) -> Vec<Vec<f64>> {
        self.pending = None;
        if budget_left == 0 {
            return Vec::new();
        }
        let synth = synth_bounds(problem.bounds(), &ms.center, &ms.poll);
        let (mu_k, sigma_k) = cold_start(cache, self.cfg.params.n_e, &ms.center, &synth);
        let sigma_k_norm = norm2(&sigma_k);
        let feasible_found = cache.best_feasible().is_some();
        let mode = should_search(&self.state, sigma_k_norm, feasible_found, self.cfg.stall_limit);

        let (mu, sigma) = match mode {
            CeMode::No => return Vec::new(),
            CeMode::Normal => {
                self.state.sigma_init.get_or_insert_with(|| sigma_k.clone());
                (mu_k, sigma_k.clone())
            }
            CeMode::Escape => {
                let init = self.state.sigma_init.get_or_insert_with(|| sigma_k.clone());
                let sigma = init.iter().map(|s| 2.0 * s).collect();
                let mu = cache
                    .sorted()
                    .next()
                    .map_or_else(|| ms.center.clone(), |e| e.x.clone());
                (mu, sigma)
            }
        };

        let draw_sd: Vec<f64> = sigma.iter().map(|s| 2.0 * s).collect();
        let count = self.cfg.params.n_s.min(budget_left);
        let points = (0..count)
            .map(|_| {
                let x = sample_truncated_normal(&mu, &draw_sd, &synth, rng);
                project_within(ms, &x, problem.bounds())
            })
            .collect();

        self.log.push(CeActivation {
            iteration,
            mode,
            mu: mu.clone(),
            sigma: sigma.clone(),
            sigma_k_norm,
            sigma_p_before: self.state.sigma_p_norm(),
            sigma_p_after: f64::NAN,
            infeasible_stall: self.state.infeasible_stall,
            samples: count,
        });
        self.pending = Some(Pending { mu, sigma, sigma_k });
        points
    }

    /// Refits the distribution on the updated cache after the trial points
    /// were evaluated and updates the trigger reference `sigma_p`.
    pub fn absorb_results(&mut self, cache: &Cache) {
        let Some(Pending { mu, sigma, sigma_k }) = self.pending.take() else {
            return;
        };
        let elites: Vec<&[f64]> = cache
            .elites(self.cfg.params.n_e)
            .iter()
            .map(|e| e.x.as_slice())
            .collect();
        let (mu_t, sigma_t) = elite_stats(&elites).expect("cache holds the starting point");
        let (mu_next, sigma_next) = smooth(&mu, &sigma, &mu_t, &sigma_t, self.cfg.params.alpha);
        self.state.mu = mu_next;
        self.state.sigma = sigma_next.clone();
        // The refitted spread becomes the reference unless it is wider than
        // the spread that triggered this step, so the reference can only
        // shrink from one activation to the next.
        for candidate in [sigma_k, sigma_next] {
            if norm2(&candidate) < self.state.sigma_p_norm() {
                self.state.sigma_p = candidate;
            }
        }
        if let Some(last) = self.log.last_mut() {
            last.sigma_p_after = self.state.sigma_p_norm();
        }
    }

    /// Updates the stall counter at the end of a MADS iteration.
    pub fn finish_iteration(&mut self, cache: &Cache) {
        if cache.best_feasible().is_some() {
            self.state.infeasible_stall = 0;
        } else {
            self.state.infeasible_stall += 1;
        }
    }
}

impl SearchStep for CeSearch {
    fn source(&self) -> Source {
        Source::CeSearch
    }

    fn propose(&mut self, ctx: &SearchContext<'_>, rng: &mut Rng) -> Vec<Vec<f64>> {
        self.propose_points(ctx.problem, ctx.cache, ctx.mesh, ctx.iteration, ctx.budget_left, rng)
    }

    fn absorb(&mut self, ctx: &SearchContext<'_>) {
        self.absorb_results(ctx.cache);
    }

    fn end_iteration(&mut self, ctx: &SearchContext<'_>) {
        self.finish_iteration(ctx.cache);
    }
}

/// One CE search step outside the MADS loop: proposes, evaluates serially,
/// caches, and refits. Returns the new evaluations in draw order.
pub fn ce_search_step(
    search: &mut CeSearch,
    cache: &mut Cache,
    ms: &MeshState,
    problem: &Problem,
    rng: &mut Rng,
    budget_left: usize,
) -> Result<Vec<Evaluation>> {
    let points = search.propose_points(problem, cache, ms, 0, budget_left, rng);
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        if cache.contains(&x) {
            continue;
        }
        let e = problem.evaluate(&x)?;
        cache.insert(&e);
        out.push(e);
    }
    search.absorb_results(cache);
    Ok(out)
}

/// Entries of the cache as coordinate slices, in `Best` order.
pub fn elite_points(elites: &[&CacheEntry]) -> Vec<Vec<f64>> {
    elites.iter().map(|e| e.x.clone()).collect()
}
