//! Built-in analytical test problems.
//!
//! Reference values are either analytic (substitution at a known minimizer)
//! or obtained offline by an independent oracle (dense grid or multi-start
//! SQP polish); the provenance tag says which.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng as _;

use crate::blackbox::{BoundBox, EvalOutput, Problem};
use crate::error::{Error, Result};
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Value at a known minimizer, by substitution.
    Analytic,
    /// Dense grid search followed by a local polish.
    OracleGrid,
    /// Best of a multi-start SQP run from many random points.
    OracleMultistart,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "analytic",
            Provenance::OracleGrid => "oracle-grid",
            Provenance::OracleMultistart => "oracle-multistart",
        })
    }
}

/// Where a catalog entry comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// A row of the benchmark table of the method's authors.
    Table,
    /// Small illustrative problems outside that table.
    Extra,
}

type Objective = fn(&[f64]) -> (f64, Vec<f64>);

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub n: usize,
    pub m: usize,
    pub bounds: BoundBox,
    /// Documented starting point.
    pub start: Vec<f64>,
    /// Box for random starts; the bounds when the problem is bounded.
    pub start_box: BoundBox,
    pub reference_best: Option<(f64, Provenance)>,
    pub multimodal: bool,
    pub origin: Origin,
    eval: Objective,
}

impl ProblemSpec {
    pub fn is_bounded(&self) -> bool {
        self.bounds.is_finite()
    }

    /// An evaluable problem.
    pub fn problem(&self) -> Problem {
        let eval = self.eval;
        Problem::new(self.name, self.m, self.bounds.clone(), move |x| {
            let (f, c) = eval(x);
            EvalOutput::ok(f, c)
        })
        .expect("catalog entries are well formed")
    }

    /// A starting point drawn uniformly in the start box.
    pub fn random_start(&self, rng: &mut Rng) -> Vec<f64> {
        self.start_box
            .lower()
            .iter()
            .zip(self.start_box.upper())
            .map(|(l, u)| rng.random_range(*l..=*u))
            .collect()
    }
}

fn unconstrained(f: f64) -> (f64, Vec<f64>) {
    (f, Vec::new())
}

fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    unconstrained(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2))
}

fn rastrigin(x: &[f64]) -> (f64, Vec<f64>) {
    let s: f64 = x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum();
    unconstrained(10.0 * x.len() as f64 + s)
}

fn griewank(x: &[f64]) -> (f64, Vec<f64>) {
    let s: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let p: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    unconstrained(1.0 + s - p)
}

fn branin(x: &[f64]) -> (f64, Vec<f64>) {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    unconstrained(
        (x[1] - b * x[0] * x[0] + c * x[0] - 6.0).powi(2) + 10.0 * (1.0 - t) * x[0].cos() + 10.0,
    )
}

fn beale(x: &[f64]) -> (f64, Vec<f64>) {
    let (a, b) = (x[0], x[1]);
    unconstrained(
        (1.5 - a + a * b).powi(2)
            + (2.25 - a + a * b * b).powi(2)
            + (2.625 - a + a * b.powi(3)).powi(2),
    )
}

fn helical_valley(x: &[f64]) -> (f64, Vec<f64>) {
    let theta = if x[0] > 0.0 {
        (x[1] / x[0]).atan() / (2.0 * PI)
    } else if x[0] < 0.0 {
        (x[1] / x[0]).atan() / (2.0 * PI) + 0.5
    } else {
        0.25f64.copysign(x[1])
    };
    let r = x[0].hypot(x[1]);
    unconstrained(100.0 * ((x[2] - 10.0 * theta).powi(2) + (r - 1.0).powi(2)) + x[2] * x[2])
}

fn arwhead(x: &[f64]) -> (f64, Vec<f64>) {
    let xn2 = x[x.len() - 1].powi(2);
    unconstrained(
        x[..x.len() - 1]
            .iter()
            .map(|v| (v * v + xn2).powi(2) - 4.0 * v + 3.0)
            .sum(),
    )
}

fn bdqrtic(x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let xn2 = x[n - 1].powi(2);
    unconstrained(
        (0..n - 4)
            .map(|i| {
                let q = x[i].powi(2)
                    + 2.0 * x[i + 1].powi(2)
                    + 3.0 * x[i + 2].powi(2)
                    + 4.0 * x[i + 3].powi(2)
                    + 5.0 * xn2;
                (-4.0 * x[i] + 3.0).powi(2) + q * q
            })
            .sum(),
    )
}

fn powell_singular(x: &[f64]) -> (f64, Vec<f64>) {
    unconstrained(
        x.chunks(4)
            .map(|g| {
                (g[0] + 10.0 * g[1]).powi(2)
                    + 5.0 * (g[2] - g[3]).powi(2)
                    + (g[1] - 2.0 * g[2]).powi(4)
                    + 10.0 * (g[0] - g[3]).powi(4)
            })
            .sum(),
    )
}

fn vardim(x: &[f64]) -> (f64, Vec<f64>) {
    let s: f64 = x.iter().map(|v| (v - 1.0).powi(2)).sum();
    let w: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (i + 1) as f64 * (v - 1.0))
        .sum();
    unconstrained(s + w * w + w.powi(4))
}

fn tridia(x: &[f64]) -> (f64, Vec<f64>) {
    let tail: f64 = (1..x.len())
        .map(|i| (i + 1) as f64 * (2.0 * x[i] - x[i - 1]).powi(2))
        .sum();
    unconstrained((x[0] - 1.0).powi(2) + tail)
}

fn srosenbr(x: &[f64]) -> (f64, Vec<f64>) {
    unconstrained(
        x.chunks(2)
            .map(|p| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (p[0] - 1.0).powi(2))
            .sum(),
    )
}

fn crescent(x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let a: f64 = x.iter().map(|v| (v - 1.0).powi(2)).sum();
    let b: f64 = x.iter().map(|v| (v + 1.0).powi(2)).sum();
    (x[x.len() - 1], vec![a - n * n, n * n - b])
}

fn snake(x: &[f64]) -> (f64, Vec<f64>) {
    let s = x[0].sin();
    ((x[0] - 20.0).hypot(x[1] - 1.0), vec![s - 0.1 - x[1], x[1] - s])
}

fn disk(x: &[f64]) -> (f64, Vec<f64>) {
    let r: f64 = x.iter().map(|v| v * v).sum();
    (x.iter().sum(), vec![r - 3.0 * x.len() as f64])
}

fn hs19(x: &[f64]) -> (f64, Vec<f64>) {
    (
        (x[0] - 10.0).powi(3) + (x[1] - 20.0).powi(3),
        vec![
            100.0 - (x[0] - 5.0).powi(2) - (x[1] - 5.0).powi(2),
            (x[1] - 5.0).powi(2) + (x[0] - 6.0).powi(2) - 82.81,
        ],
    )
}

fn hs83(x: &[f64]) -> (f64, Vec<f64>) {
    let u = 85.334407 + 0.0056858 * x[1] * x[4] + 0.0006262 * x[0] * x[3]
        - 0.0022053 * x[2] * x[4];
    let v = 80.51249 + 0.0071317 * x[1] * x[4] + 0.0029955 * x[0] * x[1]
        + 0.0021813 * x[2] * x[2];
    let w = 9.300961 + 0.0047026 * x[2] * x[4] + 0.0012547 * x[0] * x[2]
        + 0.0019085 * x[2] * x[3];
    (
        5.3578547 * x[2] * x[2] + 0.8356891 * x[0] * x[4] + 37.293239 * x[0] - 40792.141,
        vec![-u, u - 92.0, 90.0 - v, v - 110.0, 20.0 - w, w - 25.0],
    )
}

fn g2(x: &[f64]) -> (f64, Vec<f64>) {
    let s4: f64 = x.iter().map(|v| v.cos().powi(4)).sum();
    let p2: f64 = x.iter().map(|v| v.cos().powi(2)).product();
    let d: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (i + 1) as f64 * v * v)
        .sum();
    let prod: f64 = x.iter().product();
    let sum: f64 = x.iter().sum();
    (
        -(s4 - 2.0 * p2).abs() / d.sqrt(),
        vec![0.75 - prod, sum - 7.5 * x.len() as f64],
    )
}

fn mezmontes(x: &[f64]) -> (f64, Vec<f64>) {
    let f = -(2.0 * PI * x[0]).sin().powi(3) * (2.0 * PI * x[1]).sin()
        / (x[0].powi(3) * (x[0] + x[1]));
    (
        f,
        vec![x[0] * x[0] - x[1] + 1.0, 1.0 - x[0] + (x[1] - 4.0).powi(2)],
    )
}

fn sphere_eval(x: &[f64]) -> (f64, Vec<f64>) {
    unconstrained(x.iter().map(|v| v * v).sum())
}

/// `-exp(-(x-2)^2) - 0.8 exp(-(x+2)^2)`: a local minimum near -2 and the
/// global one near 2.
pub fn bimodal(x: &[f64]) -> f64 {
    -(-(x[0] - 2.0).powi(2)).exp() - 0.8 * (-(x[0] + 2.0).powi(2)).exp()
}

fn bimodal_eval(x: &[f64]) -> (f64, Vec<f64>) {
    unconstrained(bimodal(x))
}

struct Row {
    name: &'static str,
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    start: Vec<f64>,
    /// Random-start box for unbounded problems.
    start_box: Option<(f64, f64)>,
    reference: Option<(f64, Provenance)>,
    multimodal: bool,
    origin: Origin,
    eval: Objective,
}

impl Row {
    fn unbounded(name: &'static str, n: usize, m: usize, eval: Objective) -> Self {
        Row {
            name,
            n,
            m,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            start: vec![0.0; n],
            start_box: Some((-5.0, 5.0)),
            reference: None,
            multimodal: false,
            origin: Origin::Table,
            eval,
        }
    }

    fn boxed(name: &'static str, m: usize, lower: Vec<f64>, upper: Vec<f64>, eval: Objective) -> Self {
        Row {
            start_box: None,
            lower,
            upper,
            ..Row::unbounded(name, 0, m, eval)
        }
        .fix_dim()
    }

    fn fix_dim(mut self) -> Self {
        self.n = self.lower.len();
        self.start = vec![0.0; self.n];
        self
    }

    fn start(mut self, start: Vec<f64>) -> Self {
        self.start = start;
        self
    }

    fn start_box(mut self, lo: f64, hi: f64) -> Self {
        self.start_box = Some((lo, hi));
        self
    }

    fn reference(mut self, value: f64, tag: Provenance) -> Self {
        self.reference = Some((value, tag));
        self
    }

    fn multimodal(mut self) -> Self {
        self.multimodal = true;
        self
    }

    fn extra(mut self) -> Self {
        self.origin = Origin::Extra;
        self
    }

    fn build(self) -> ProblemSpec {
        let bounds = BoundBox::new(self.lower, self.upper).expect("valid catalog bounds");
        let start_box = match self.start_box {
            Some((lo, hi)) => BoundBox::uniform(self.n, lo, hi).expect("valid start box"),
            None => bounds.clone(),
        };
        ProblemSpec {
            name: self.name,
            n: self.n,
            m: self.m,
            bounds,
            start: self.start,
            start_box,
            reference_best: self.reference,
            multimodal: self.multimodal,
            origin: self.origin,
            eval: self.eval,
        }
    }
}

fn repeat(pattern: &[f64], n: usize) -> Vec<f64> {
    pattern.iter().copied().cycle().take(n).collect()
}

/// The full catalog, table rows first, then the extras.
pub fn catalog() -> Vec<ProblemSpec> {
    use Provenance::*;
    let rows = vec![
        Row::boxed("ROSENBROCK", 0, vec![-10.0; 2], vec![10.0; 2], rosenbrock)
            .start(vec![-1.2, 1.0])
            .reference(0.0, Analytic),
        Row::boxed("RASTRIGIN", 0, vec![-5.12; 2], vec![5.12; 2], rastrigin)
            .start(vec![3.0, 3.0])
            .reference(0.0, Analytic)
            .multimodal(),
        Row::boxed("GRIEWANK", 0, vec![-600.0; 10], vec![600.0; 10], griewank)
            .start(vec![100.0; 10])
            .reference(0.0, Analytic)
            .multimodal(),
        Row::boxed("BRANIN", 0, vec![-5.0, 0.0], vec![10.0, 15.0], branin)
            .start(vec![2.5, 7.5])
            .reference(0.39788735772973816, OracleGrid)
            .multimodal(),
        Row::unbounded("BEALE", 2, 0, beale)
            .start(vec![1.0, 1.0])
            .start_box(-4.5, 4.5)
            .reference(0.0, Analytic),
        Row::unbounded("HELICALVALLEY", 3, 0, helical_valley)
            .start(vec![-1.0, 0.0, 0.0])
            .reference(0.0, Analytic),
        Row::unbounded("ARWHEAD10", 10, 0, arwhead)
            .start(vec![1.0; 10])
            .reference(0.0, Analytic),
        Row::unbounded("BDQRTIC10", 10, 0, bdqrtic)
            .start(vec![1.0; 10])
            .reference(18.28116175359354, OracleMultistart),
        Row::unbounded("POWELLSG4", 4, 0, powell_singular)
            .start(repeat(&[3.0, -1.0, 0.0, 1.0], 4))
            .reference(0.0, Analytic),
        Row::unbounded("POWELLSG8", 8, 0, powell_singular)
            .start(repeat(&[3.0, -1.0, 0.0, 1.0], 8))
            .reference(0.0, Analytic),
        Row::unbounded("POWELLSG12", 12, 0, powell_singular)
            .start(repeat(&[3.0, -1.0, 0.0, 1.0], 12))
            .reference(0.0, Analytic),
        Row::unbounded("VARDIM10", 10, 0, vardim)
            .start((1..=10).map(|i| 1.0 - i as f64 / 10.0).collect())
            .reference(0.0, Analytic),
        Row::unbounded("TRIDIA10", 10, 0, tridia)
            .start(vec![1.0; 10])
            .reference(0.0, Analytic),
        Row::unbounded("SROSENBR6", 6, 0, srosenbr)
            .start(repeat(&[-1.2, 1.0], 6))
            .reference(0.0, Analytic),
        Row::unbounded("SROSENBR8", 8, 0, srosenbr)
            .start(repeat(&[-1.2, 1.0], 8))
            .reference(0.0, Analytic),
        Row::unbounded("SROSENBR10", 10, 0, srosenbr)
            .start(repeat(&[-1.2, 1.0], 10))
            .reference(0.0, Analytic),
        Row::unbounded("CRESCENT", 10, 2, crescent)
            .start({
                let mut s = vec![0.0; 10];
                s[0] = 10.0;
                s
            })
            .start_box(-10.0, 10.0)
            .reference(-9.0, Analytic),
        Row::unbounded("SNAKE", 2, 2, snake)
            .start(vec![0.0, -10.0])
            .start_box(-10.0, 10.0)
            .reference(0.08097672506678648, OracleMultistart)
            .multimodal(),
        Row::unbounded("DISK", 10, 1, disk)
            .start(vec![5.0; 10])
            .start_box(-10.0, 10.0)
            .reference(-(300f64.sqrt()), Analytic),
        Row::boxed("HS19", 2, vec![13.0, 0.0], vec![100.0, 100.0], hs19)
            .start(vec![20.1, 5.84])
            .reference(-6961.8138755801665, OracleMultistart),
        Row::boxed(
            "HS83",
            6,
            vec![78.0, 33.0, 27.0, 27.0, 27.0],
            vec![102.0, 45.0, 45.0, 45.0, 45.0],
            hs83,
        )
        .start(vec![78.0, 33.0, 27.0, 27.0, 27.0])
        .reference(-30665.53867178242, OracleMultistart),
        Row::boxed("G2_10", 2, vec![0.0; 10], vec![10.0; 10], g2)
            .start(vec![5.0; 10])
            .multimodal(),
        Row::boxed("MEZMONTES", 2, vec![0.0; 2], vec![10.0; 2], mezmontes)
            .start(vec![5.0, 5.0])
            .reference(-0.09582504141803536, OracleMultistart)
            .multimodal(),
        Row::unbounded("SPHERE", 2, 0, sphere_eval)
            .start(vec![2.0, 2.0])
            .reference(0.0, Analytic)
            .extra(),
        Row::unbounded("BIMODAL", 1, 0, bimodal_eval)
            .start(vec![0.0])
            .start_box(-10.0, 10.0)
            .reference(bimodal(&[2.0]), Analytic)
            .multimodal()
            .extra(),
    ];
    rows.into_iter().map(Row::build).collect()
}

pub fn names() -> Vec<&'static str> {
    catalog().iter().map(|s| s.name).collect()
}

/// Catalog entry by (case-insensitive) name.
pub fn spec(name: &str) -> Result<ProblemSpec> {
    catalog()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownProblem {
            name: name.to_string(),
            valid: names().join(", "),
        })
}

pub fn make(name: &str) -> Result<Problem> {
    spec(name).map(|s| s.problem())
}

/// Unconstrained sphere in `n` dimensions.
pub fn sphere(n: usize) -> Problem {
    Problem::new("SPHERE", 0, BoundBox::unbounded(n), |x| {
        EvalOutput::ok(x.iter().map(|v| v * v).sum(), Vec::new())
    })
    .expect("n >= 1")
}
