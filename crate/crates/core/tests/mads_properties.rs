//! Run-level properties of the MADS loop, fuzzed over problems and seeds.

use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cemads::mads::{poll_step, solve_with, Barrier, OutcomeKind, SearchContext};
use cemads::mesh::{init_mesh, project, MeshState};
use cemads::util::{rng_from_seed, Rng};
use cemads::{
    problems, solve, BoundBox, Cache, CeSearchConfig, EvalOutput, MadsConfig, Problem, SearchStep,
    Source,
};

const SMALL: [&str; 8] = [
    "ROSENBROCK", "BRANIN", "BEALE", "HS19", "SNAKE", "MEZMONTES", "CRESCENT", "BIMODAL",
];

/// Proposes random points and records what the loop exposed to it.
#[derive(Default)]
struct Observer {
    meshes: Vec<(usize, MeshState)>,
    h_max: Vec<f64>,
    best_f: Vec<f64>,
}

impl SearchStep for Observer {
    fn source(&self) -> Source {
        Source::Other
    }

    fn propose(&mut self, ctx: &SearchContext<'_>, rng: &mut Rng) -> Vec<Vec<f64>> {
        self.meshes.push((ctx.iteration, ctx.mesh.clone()));
        self.h_max.push(ctx.h_max);
        self.best_f
            .push(ctx.cache.best_feasible().map_or(f64::INFINITY, |e| e.f));
        (0..2)
            .map(|_| {
                ctx.mesh
                    .center
                    .iter()
                    .zip(&ctx.mesh.poll)
                    .map(|(c, p)| c + p * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect()
    }
}

struct Silent;

impl SearchStep for Silent {
    fn source(&self) -> Source {
        Source::Other
    }

    fn propose(&mut self, _: &SearchContext<'_>, _: &mut Rng) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_respect_budget_and_monotone_incumbents(
        which in 0..SMALL.len(),
        budget in 1usize..400,
        seed in any::<u64>(),
        with_ce in any::<bool>(),
        workers in 1usize..4,
    ) {
        let spec = problems::spec(SMALL[which]).unwrap();
        let mut cfg = MadsConfig::new(budget, seed).with_workers(workers);
        if with_ce {
            cfg = cfg.with_ce(CeSearchConfig::for_dimension(spec.n));
        }
        let mut observer = Observer::default();
        let run = solve_with(&spec.problem(), &spec.start, &cfg, &mut [&mut observer]).unwrap();

        prop_assert!(run.evaluations() <= budget);
        for (i, r) in run.records.iter().enumerate() {
            prop_assert_eq!(r.eval, i);
        }
        prop_assert_eq!(run.records[0].source, Source::Initial);

        // Best feasible f along the history, recomputed from the records.
        let mut best = f64::INFINITY;
        for r in &run.records {
            if r.is_feasible() {
                best = best.min(r.f);
            }
        }
        prop_assert_eq!(run.best_feasible.as_ref().map_or(f64::INFINITY, |e| e.f), best);

        for w in observer.best_f.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for w in observer.h_max.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }

        // Plugin points are snapped onto the mesh of their iteration.
        for r in run.records.iter().filter(|r| r.source == Source::Other) {
            let (_, ms) = observer
                .meshes
                .iter()
                .rev()
                .find(|(it, _)| *it == r.iteration)
                .unwrap();
            prop_assert_eq!(&project(ms, &r.x), &r.x);
        }
    }

    #[test]
    fn silent_plugin_leaves_mads_unchanged(which in 0..SMALL.len(), seed in any::<u64>()) {
        let spec = problems::spec(SMALL[which]).unwrap();
        let cfg = MadsConfig::new(300, seed);
        let plain = solve(&spec.problem(), &spec.start, &cfg).unwrap();
        let with = solve_with(&spec.problem(), &spec.start, &cfg, &mut [&mut Silent]).unwrap();
        prop_assert_eq!(plain.records, with.records);
    }
}

fn linear(n: usize, grad: Vec<f64>) -> Problem {
    Problem::new("linear", 0, BoundBox::unbounded(n), move |x| {
        EvalOutput::ok(x.iter().zip(&grad).map(|(a, b)| a * b).sum(), vec![])
    })
    .unwrap()
}

#[test]
fn linear_objective_polls_succeed_within_2n() {
    let mut case = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..500 {
        let n = case.random_range(1..7);
        let grad: Vec<f64> = (0..n).map(|_| case.random_range(-1.0..1.0)).collect();
        let center: Vec<f64> = (0..n).map(|_| case.random_range(-10.0..10.0)).collect();
        let p = linear(n, grad);
        let ms = init_mesh(p.bounds(), &center);
        let mut cache = Cache::new();
        cache.insert(&p.evaluate(&center).unwrap());
        let (out, used) = poll_step(
            &p,
            &mut cache,
            &ms,
            Barrier::new(f64::INFINITY),
            &mut rng_from_seed(trial),
            1000,
            true,
        )
        .unwrap();
        assert_eq!(out.kind, OutcomeKind::PollSuccess, "trial {trial}");
        assert!(used <= 2 * n);
    }
}

#[test]
fn opportunistic_poll_stops_at_first_success() {
    let p = Problem::new("peak", 0, BoundBox::unbounded(3), |x| {
        EvalOutput::ok(-x.iter().map(|v| v * v).sum::<f64>(), vec![])
    })
    .unwrap();
    let ms = init_mesh(p.bounds(), &[0.0; 3]);
    for (opportunistic, expected) in [(true, 1), (false, 6)] {
        let mut cache = Cache::new();
        cache.insert(&p.evaluate(&[0.0; 3]).unwrap());
        let (out, used) = poll_step(
            &p,
            &mut cache,
            &ms,
            Barrier::new(f64::INFINITY),
            &mut rng_from_seed(1),
            100,
            opportunistic,
        )
        .unwrap();
        assert_eq!(out.kind, OutcomeKind::PollSuccess);
        assert_eq!(used, expected);
    }
}
