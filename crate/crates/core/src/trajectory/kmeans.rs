//! k-means++ seeding followed by Lloyd iterations, best of several restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrajectoryError;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no center moves farther than this (same units as the points).
    pub tol: f64,
    /// After Lloyd converges, move single points between clusters while that
    /// lowers the SSE, then resume Lloyd.
    pub refine: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            seed: 0,
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Point>,
    pub assignments: Vec<usize>,
    pub sse: f64,
}

#[inline]
pub(crate) fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(p: &Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_centers(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            // every point coincides with a center already
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centers.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(p, &c));
        }
    }
    centers
}

fn assign(points: &[Point], centers: &[Point], labels: &mut [usize]) -> f64 {
    let mut sse = 0.0;
    for (l, p) in labels.iter_mut().zip(points) {
        let (i, d) = nearest(p, centers);
        *l = i;
        sse += d;
    }
    sse
}

fn lloyd(points: &[Point], mut centers: Vec<Point>, cfg: &KMeansConfig) -> KMeansResult {
    let k = centers.len();
    let mut labels = vec![0usize; points.len()];
    let mut sse = assign(points, &centers, &mut labels);
    for _ in 0..cfg.max_iter {
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        let mut moved = 0.0f64;
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                let n = counts[c] as f64;
                let next = [sums[c][0] / n, sums[c][1] / n];
                moved = moved.max(dist2(&next, &centers[c]).sqrt());
                centers[c] = next;
            }
        }
        let next_sse = assign(points, &centers, &mut labels);
        debug_assert!(
            next_sse <= sse + 1e-9 * sse.max(1.0),
            "Lloyd step increased SSE: {sse} -> {next_sse}"
        );
        sse = next_sse;
        if moved < cfg.tol {
            break;
        }
    }
    KMeansResult {
        centers,
        assignments: labels,
        sse,
    }
}

/// One sweep of single-point transfers (Hartigan's criterion). Returns the
/// cluster means if any point moved.
fn transfer_pass(points: &[Point], labels: &[usize], k: usize) -> Option<Vec<Point>> {
    let mut labels = labels.to_vec();
    let mut counts = vec![0usize; k];
    let mut means = vec![[0.0f64; 2]; k];
    for (&l, p) in labels.iter().zip(points) {
        counts[l] += 1;
        means[l][0] += p[0];
        means[l][1] += p[1];
    }
    for c in 0..k {
        if counts[c] > 0 {
            means[c][0] /= counts[c] as f64;
            means[c][1] /= counts[c] as f64;
        }
    }
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let a = labels[i];
        let na = counts[a] as f64;
        if counts[a] < 2 {
            continue;
        }
        let remove = na / (na - 1.0) * dist2(p, &means[a]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let add = nb / (nb + 1.0) * dist2(p, &means[b]);
            if best.is_none_or(|(_, v)| add < v) {
                best = Some((b, add));
            }
        }
        let Some((b, add)) = best else { continue };
        if add < remove * (1.0 - 1e-12) {
            let nb = counts[b] as f64;
            for d in 0..2 {
                means[a][d] = (means[a][d] * na - p[d]) / (na - 1.0);
                means[b][d] = (means[b][d] * nb + p[d]) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
    }
    moved.then_some(means)
}

/// Clusters `points` into `k` groups. Deterministic for a given config.
pub fn kmeans_pp(
    points: &[Point],
    k: usize,
    cfg: &KMeansConfig,
) -> Result<KMeansResult, TrajectoryError> {
    if points.is_empty() {
        return Err(TrajectoryError::NoPoints);
    }
    if k == 0 || k > points.len() {
        return Err(TrajectoryError::BadClusterCount {
            k,
            points: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let centers = seed_centers(points, k, &mut rng);
        let mut run = lloyd(points, centers, cfg);
        if cfg.refine {
            for _ in 0..cfg.max_iter {
                let Some(means) = transfer_pass(points, &run.assignments, k) else {
                    break;
                };
                let next = lloyd(points, means, cfg);
                debug_assert!(next.sse <= run.sse + 1e-9 * run.sse.max(1.0));
                run = next;
            }
        }
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
