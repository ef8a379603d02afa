//! Problem abstraction: bound box, blackbox evaluator, constraint violation
//! and the subprocess protocol used to drive external simulations.
//!
//! A problem is `min f(x)` subject to `c_j(x) <= 0` for `j = 1..m` and
//! `lower <= x <= upper`. The violation `h` aggregates the constraints as
//! `sum_j max(c_j, 0)^2` inside the box and is `+inf` outside it or when the
//! simulation fails.

use std::fmt;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-coordinate bounds. Either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY
            {
                return Err(Error::Usage(format!(
                    "invalid bounds on coordinate {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(BoundBox { lower, upper })
    }

    /// The box `[lower, upper]^n`.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    /// No bounds at all.
    pub fn unbounded(n: usize) -> Self {
        BoundBox {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// True when every bound on every coordinate is finite.
    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// True when at least one bound is finite.
    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).any(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        within_bounds(self, x)
    }

    /// Componentwise clamp of `x` into the box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.max(*l).min(*u))
            .collect()
    }
}

/// True iff `lower[i] <= x[i] <= upper[i]` for every coordinate.
pub fn within_bounds(b: &BoundBox, x: &[f64]) -> bool {
    debug_assert_eq!(b.dim(), x.len());
    x.iter()
        .zip(b.lower.iter().zip(&b.upper))
        .all(|(v, (l, u))| l <= v && v <= u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed,
}

impl fmt::Display for EvalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalStatus::Ok => f.write_str("ok"),
            EvalStatus::Failed => f.write_str("failed"),
        }
    }
}

/// Raw output of a blackbox call.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub status: EvalStatus,
    pub f: f64,
    pub c: Vec<f64>,
}

impl EvalOutput {
    pub fn ok(f: f64, c: Vec<f64>) -> Self {
        EvalOutput {
            status: EvalStatus::Ok,
            f,
            c,
        }
    }

    pub fn failed() -> Self {
        EvalOutput {
            status: EvalStatus::Failed,
            f: f64::INFINITY,
            c: Vec::new(),
        }
    }
}

/// A point together with its objective, constraints and violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub f: f64,
    pub h: f64,
    pub c: Vec<f64>,
    pub status: EvalStatus,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.h == 0.0
    }
}

/// Constraint violation `h`.
///
/// `sum_j max(c_j, 0)^2` for an in-bounds successful evaluation, `+inf`
/// otherwise.
pub fn violation(c: &[f64], in_bounds: bool, status: EvalStatus) -> f64 {
    if !in_bounds || status == EvalStatus::Failed {
        return f64::INFINITY;
    }
    c.iter()
        .map(|&cj| {
            let v = cj.max(0.0);
            v * v
        })
        .sum()
}

type Evaluator = dyn Fn(&[f64]) -> EvalOutput + Send + Sync;

/// An optimization problem backed by a deterministic evaluator.
#[derive(Clone)]
pub struct Problem {
    name: String,
    n: usize,
    m: usize,
    bounds: BoundBox,
    evaluator: Arc<Evaluator>,
    concurrent: bool,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("bounds", &self.bounds)
            .field("concurrent", &self.concurrent)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new<F>(name: impl Into<String>, m: usize, bounds: BoundBox, evaluator: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> EvalOutput + Send + Sync + 'static,
    {
        let n = bounds.dim();
        if n == 0 {
            return Err(Error::Usage("problem dimension must be at least 1".into()));
        }
        Ok(Problem {
            name: name.into(),
            n,
            m,
            bounds,
            evaluator: Arc::new(evaluator),
            concurrent: true,
        })
    }

    /// Declares the evaluator unsafe to call from several workers at once.
    /// The solver then evaluates batches one point at a time.
    pub fn serial(mut self) -> Self {
        self.concurrent = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bounds(&self) -> &BoundBox {
        &self.bounds
    }

    pub fn is_concurrent(&self) -> bool {
        self.concurrent
    }

    /// Calls the evaluator and computes the violation.
    ///
    /// Panics inside the evaluator, non-finite outputs and a wrong number of
    /// constraint values all produce a failed evaluation with `f = h = +inf`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        let out = panic::catch_unwind(AssertUnwindSafe(|| (self.evaluator)(x)))
            .unwrap_or_else(|_| EvalOutput::failed());

        let sane = out.status == EvalStatus::Ok
            && !out.f.is_nan()
            && out.f != f64::NEG_INFINITY
            && out.f != f64::INFINITY
            && out.c.len() == self.m
            && out.c.iter().all(|v| v.is_finite());

        if !sane {
            return Ok(Evaluation {
                x: x.to_vec(),
                f: f64::INFINITY,
                h: f64::INFINITY,
                c: vec![f64::INFINITY; self.m],
                status: EvalStatus::Failed,
            });
        }
        let h = violation(&out.c, self.bounds.contains(x), EvalStatus::Ok);
        Ok(Evaluation {
            x: x.to_vec(),
            f: out.f,
            h,
            c: out.c,
            status: EvalStatus::Ok,
        })
    }
}

/// Free-function form of [`Problem::evaluate`].
pub fn evaluate(p: &Problem, x: &[f64]) -> Result<Evaluation> {
    p.evaluate(x)
}

/// Placeholder substituted by the input file path in external arguments.
pub const INPUT_PLACEHOLDER: &str = "{input}";

/// Description of an external blackbox executable.
///
/// The executable is invoked once per evaluation with `args`, where every
/// occurrence of `{input}` is replaced by the path of a file holding `x`
/// (one real per line). When no argument mentions `{input}` the path is
/// appended as the last argument. Standard output must contain `1 + m`
/// whitespace separated reals: `f c_1 .. c_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSpec {
    pub name: String,
    pub program: PathBuf,
    pub args: Vec<String>,
    pub m: usize,
    pub bounds: BoundBox,
}

fn resolve_program(program: &Path) -> Option<PathBuf> {
    if program.components().count() > 1 || program.is_absolute() {
        return program.is_file().then(|| program.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|p| p.is_file())
}

/// Builds a [`Problem`] that evaluates points through an external process.
pub fn spawn_external(spec: ExternalSpec) -> Result<Problem> {
    let program = resolve_program(&spec.program).ok_or_else(|| {
        Error::Config(format!(
            "blackbox executable not found: {}",
            spec.program.display()
        ))
    })?;
    let m = spec.m;
    let args = spec.args.clone();
    Problem::new(spec.name, m, spec.bounds, move |x| {
        run_external(&program, &args, m, x).unwrap_or_else(EvalOutput::failed)
    })
}

fn run_external(program: &Path, args: &[String], m: usize, x: &[f64]) -> Option<EvalOutput> {
    let mut input = tempfile::Builder::new()
        .prefix("bb-input-")
        .suffix(".txt")
        .tempfile()
        .ok()?;
    for v in x {
        writeln!(input, "{v}").ok()?;
    }
    input.flush().ok()?;
    let path = input.path().to_string_lossy().into_owned();

    let mut argv: Vec<String> = args
        .iter()
        .map(|a| a.replace(INPUT_PLACEHOLDER, &path))
        .collect();
    if !args.iter().any(|a| a.contains(INPUT_PLACEHOLDER)) {
        argv.push(path);
    }

    let output = Command::new(program).args(&argv).output().ok()?;
    if !output.status.success() {
        return None;
    }
    let stdout = String::from_utf8(output.stdout).ok()?;
    let values = stdout
        .split_whitespace()
        .take(1 + m)
        .map(|tok| tok.parse::<f64>().ok())
        .collect::<Option<Vec<f64>>>()?;
    if values.len() != 1 + m {
        return None;
    }
    Some(EvalOutput::ok(values[0], values[1..].to_vec()))
}
