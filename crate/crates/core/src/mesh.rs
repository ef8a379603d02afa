//! Mesh and poll sizes, projection onto the mesh, and poll directions.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::blackbox::BoundBox;
use crate::util::Rng;

/// Mesh size `delta`, poll size `poll` (per coordinate) and the frame center.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub delta: Vec<f64>,
    pub poll: Vec<f64>,
    pub center: Vec<f64>,
    poll_init: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeUpdate {
    Success,
    Failure,
}

fn coupled_mesh_size(poll: f64) -> f64 {
    poll.min(poll * poll)
}

/// Initial sizes: a tenth of the range on doubly bounded coordinates, 1
/// elsewhere. `x0` is clamped into the box (with a warning) if needed.
pub fn init_mesh(bounds: &BoundBox, x0: &[f64]) -> MeshState {
    let center = bounds.clamp(x0);
    if center.as_slice() != x0 {
        log::warn!("starting point outside bounds, clamped to {center:?}");
    }
    let poll: Vec<f64> = bounds
        .lower()
        .iter()
        .zip(bounds.upper())
        .map(|(l, u)| {
            let width = u - l;
            if width.is_finite() && width > 0.0 {
                width / 10.0
            } else {
                1.0
            }
        })
        .collect();
    MeshState {
        delta: poll.iter().map(|&p| coupled_mesh_size(p)).collect(),
        poll_init: poll.clone(),
        poll,
        center,
    }
}

impl MeshState {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn poll_init(&self) -> &[f64] {
        &self.poll_init
    }

    pub fn max_poll(&self) -> f64 {
        self.poll.iter().copied().fold(0.0, f64::max)
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Self {
        self.center = center;
        self
    }

    /// Builds a state from explicit sizes (the initial poll size is taken as
    /// the current one).
    pub fn from_sizes(delta: Vec<f64>, poll: Vec<f64>, center: Vec<f64>) -> Self {
        MeshState {
            delta,
            poll_init: poll.clone(),
            poll,
            center,
        }
    }

    fn point(&self, steps: &[i64]) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.delta)
            .zip(steps)
            .map(|((c, d), k)| c + d * *k as f64)
            .collect()
    }

    fn steps(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.center)
            .zip(&self.delta)
            .map(|((v, c), d)| ((v - c) / d).round() as i64)
            .collect()
    }
}

/// Nearest mesh point: `center + delta * round((x - center) / delta)`.
pub fn project(ms: &MeshState, x: &[f64]) -> Vec<f64> {
    ms.point(&ms.steps(x))
}

/// Like [`project`] but the mesh index on each coordinate is pulled back
/// toward the center until the point lies inside `bounds`. The frame center
/// must itself be inside the box.
pub fn project_within(ms: &MeshState, x: &[f64], bounds: &BoundBox) -> Vec<f64> {
    let mut steps = ms.steps(x);
    for i in 0..steps.len() {
        let (c, d) = (ms.center[i], ms.delta[i]);
        let (l, u) = (bounds.lower()[i], bounds.upper()[i]);
        if l.is_finite() {
            steps[i] = steps[i].max(((l - c) / d).ceil() as i64);
        }
        if u.is_finite() {
            steps[i] = steps[i].min(((u - c) / d).floor() as i64);
        }
        while steps[i] > 0 && c + d * steps[i] as f64 > u {
            steps[i] -= 1;
        }
        while steps[i] < 0 && c + d * (steps[i] as f64) < l {
            steps[i] += 1;
        }
    }
    ms.point(&steps)
}

fn unit_sphere(n: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn full_rank(cols: &[Vec<i64>]) -> bool {
    let n = cols.len();
    let m = DMatrix::from_fn(n, n, |i, j| cols[j][i] as f64);
    m.rank(1e-9) == n
}

/// `2n` integer directions in mesh units, closed under negation.
///
/// A random Householder basis `I - 2 v v^T` is scaled column by column so
/// that its largest entry reaches the poll size, then rounded onto the mesh.
/// If rounding makes the basis rank deficient the coordinate basis at the
/// same scale is used instead.
pub fn poll_directions(ms: &MeshState, rng: &mut Rng) -> Vec<Vec<i64>> {
    let n = ms.dim();
    let v = unit_sphere(n, rng);
    // Largest admissible step in mesh units along each coordinate.
    let reach: Vec<f64> = ms
        .poll
        .iter()
        .zip(&ms.delta)
        .map(|(p, d)| (p / d + 1e-9).floor().max(1.0))
        .collect();

    let mut basis: Vec<Vec<i64>> = (0..n)
        .map(|j| {
            let col: Vec<f64> = (0..n)
                .map(|i| f64::from(u8::from(i == j)) - 2.0 * v[i] * v[j])
                .collect();
            let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut d: Vec<i64> = col
                .iter()
                .zip(&reach)
                .map(|(h, r)| (h / scale * r).round().clamp(-r, *r) as i64)
                .collect();
            if d.iter().all(|&k| k == 0) {
                d[j] = 1;
            }
            d
        })
        .collect();

    if !full_rank(&basis) {
        basis = (0..n)
            .map(|j| {
                let mut d = vec![0; n];
                d[j] = reach[j] as i64;
                d
            })
            .collect();
    }

    let negated: Vec<Vec<i64>> = basis
        .iter()
        .map(|d| d.iter().map(|k| -k).collect())
        .collect();
    basis.extend(negated);
    basis
}

/// Poll points `center + delta * d` for the given directions.
pub fn poll_points(ms: &MeshState, dirs: &[Vec<i64>]) -> Vec<Vec<f64>> {
    dirs.iter().map(|d| ms.point(d)).collect()
}

/// Halves the poll size on failure, doubles it (capped at the initial size)
/// on success, and recouples the mesh size as `min(poll, poll^2)`.
pub fn update_sizes(ms: &MeshState, outcome: SizeUpdate) -> MeshState {
    let poll: Vec<f64> = ms
        .poll
        .iter()
        .zip(&ms.poll_init)
        .map(|(p, p0)| match outcome {
            SizeUpdate::Failure => p / 2.0,
            SizeUpdate::Success => (2.0 * p).min(*p0),
        })
        .collect();
    MeshState {
        delta: poll.iter().map(|&p| coupled_mesh_size(p)).collect(),
        poll,
        center: ms.center.clone(),
        poll_init: ms.poll_init.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    #[test]
    fn init_examples() {
        let b = BoundBox::uniform(2, 0.0, 100.0).unwrap();
        let ms = init_mesh(&b, &[50.0, 50.0]);
        assert_eq!(ms.poll, vec![10.0, 10.0]);
        assert_eq!(ms.delta, vec![10.0, 10.0]);

        let ms = init_mesh(&BoundBox::unbounded(1), &[3.0]);
        assert_eq!((ms.poll[0], ms.delta[0]), (1.0, 1.0));

        let ms = init_mesh(&BoundBox::uniform(1, 0.0, 1.0).unwrap(), &[0.5]);
        assert!((ms.poll[0] - 0.1).abs() < 1e-15);
        assert!((ms.delta[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn init_clamps_start() {
        let ms = init_mesh(&BoundBox::uniform(2, 0.0, 1.0).unwrap(), &[-3.0, 0.5]);
        assert_eq!(ms.center, vec![0.0, 0.5]);
    }

    #[test]
    fn project_examples() {
        let ms = MeshState::from_sizes(vec![1.0; 2], vec![1.0; 2], vec![0.0; 2]);
        assert_eq!(project(&ms, &[0.4, 0.6]), vec![0.0, 1.0]);
        let ms = MeshState::from_sizes(vec![0.5], vec![1.0], vec![1.0]);
        assert_eq!(project(&ms, &[1.74]), vec![1.5]);
        assert_eq!(project(&ms, &[1.5]), vec![1.5]);
    }

    #[test]
    fn project_within_stays_in_box() {
        let b = BoundBox::uniform(1, 0.0, 1.0).unwrap();
        let ms = MeshState::from_sizes(vec![0.3], vec![0.3], vec![0.5]);
        let p = project_within(&ms, &[1.0], &b);
        assert_eq!(p, vec![0.8]);
        let p = project_within(&ms, &[-5.0], &b);
        assert!((p[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_poll_is_plus_minus() {
        let ms = MeshState::from_sizes(vec![0.25], vec![0.5], vec![0.0]);
        let dirs = poll_directions(&ms, &mut rng_from_seed(3));
        assert_eq!(dirs.len(), 2);
        assert_eq!(dirs[0][0], -dirs[1][0]);
        let k = dirs[0][0].abs();
        assert!(k >= 1 && k as f64 * 0.25 <= 0.5);
    }

    #[test]
    fn update_examples() {
        let ms = MeshState::from_sizes(vec![1.0], vec![1.0], vec![0.0]);
        let f = update_sizes(&ms, SizeUpdate::Failure);
        assert_eq!((f.poll[0], f.delta[0]), (0.5, 0.25));
        let s = update_sizes(&ms, SizeUpdate::Success);
        assert_eq!(s.poll[0], 1.0);
        let s = update_sizes(&f, SizeUpdate::Success);
        assert_eq!(s.poll[0], 1.0);
    }

    #[test]
    fn consecutive_failures_halve() {
        let mut ms = init_mesh(&BoundBox::uniform(1, 0.0, 10.0).unwrap(), &[5.0]);
        for k in 1..=20 {
            ms = update_sizes(&ms, SizeUpdate::Failure);
            assert_eq!(ms.poll[0], 1.0 / 2f64.powi(k));
        }
        assert!(ms.delta[0] / ms.poll[0] < 1e-5);
    }
}
