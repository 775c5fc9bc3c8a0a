//! K-means (k-means++ seeding, Lloyd iterations) with elbow selection and
//! silhouette scoring. Generic over the float type.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<F: Float> {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tol: F,
    pub seed: u64,
    /// Follow Lloyd with single-point moves (Hartigan's rule) until none
    /// lowers the SSE.
    pub refine: bool,
}

pub type KMeans64 = KMeans<f64>;
pub type KMeans32 = KMeans<f32>;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<F: Float> {
    pub centroids: Vec<Vec<F>>,
    pub assignments: Vec<usize>,
    pub sse: F,
    /// SSE after every Lloyd iteration of the winning restart.
    pub sse_history: Vec<F>,
}

pub fn sq_dist<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest<F: Float>(p: &[F], centroids: &[Vec<F>]) -> usize {
    let mut best = 0;
    let mut best_d = F::infinity();
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn sse_of<F: Float>(data: &[Vec<F>], centroids: &[Vec<F>], assignments: &[usize]) -> F {
    data.iter()
        .zip(assignments)
        .fold(F::zero(), |acc, (p, &a)| acc + sq_dist(p, &centroids[a]))
}

fn means<F: Float>(data: &[Vec<F>], assignments: &[usize], previous: &[Vec<F>]) -> Vec<Vec<F>> {
    let dim = data.first().map_or(0, Vec::len);
    let mut sums = vec![vec![F::zero(); dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &a) in data.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s = *s + *x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((s, n), prev)| {
            if n == 0 {
                // empty cluster keeps its centroid
                prev.clone()
            } else {
                let nf = F::from(n).expect("count fits the float type");
                s.into_iter().map(|x| x / nf).collect()
            }
        })
        .collect()
}

fn plus_plus<F: Float>(data: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let mut centroids = vec![data[rng.gen_range(0..data.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = data
            .iter()
            .map(|p| sq_dist(p, &centroids[nearest(p, &centroids)]).to_f64().unwrap_or(0.0))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..data.len())
        } else {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = d.len() - 1;
            for (i, w) in d.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        };
        centroids.push(data[pick].clone());
    }
    centroids
}

impl<F: Float> KMeans<F> {
    pub fn new(k: usize) -> Self {
        KMeans {
            k,
            restarts: 20,
            max_iterations: 300,
            tol: F::from(1e-6).expect("tolerance fits the float type"),
            seed: 42,
            refine: true,
        }
    }

    fn lloyd(&self, data: &[Vec<F>], mut centroids: Vec<Vec<F>>) -> KMeansFit<F> {
        let mut assignments: Vec<usize> = data.iter().map(|p| nearest(p, &centroids)).collect();
        let mut sse = sse_of(data, &centroids, &assignments);
        let mut history = vec![sse];
        for _ in 0..self.max_iterations {
            centroids = means(data, &assignments, &centroids);
            assignments = data.iter().map(|p| nearest(p, &centroids)).collect();
            let next = sse_of(data, &centroids, &assignments);
            history.push(next);
            let improved = sse - next;
            sse = next;
            if improved <= self.tol * (F::one() + sse.abs()) {
                break;
            }
        }
        KMeansFit {
            centroids,
            assignments,
            sse,
            sse_history: history,
        }
    }

    /// Move one point at a time to the cluster that lowers the SSE most,
    /// keeping centroids exact. Lloyd stops at partitions where no point is
    /// nearer another centroid; this also escapes ones where moving a point
    /// pays off once both centroids shift.
    fn hartigan(&self, data: &[Vec<F>], fit: &mut KMeansFit<F>) {
        let k = fit.centroids.len();
        let mut sizes = vec![0usize; k];
        for &a in &fit.assignments {
            sizes[a] += 1;
        }
        let eps = self.tol * (F::one() + fit.sse.abs());
        for _ in 0..self.max_iterations {
            let mut moved = false;
            for (i, p) in data.iter().enumerate() {
                let a = fit.assignments[i];
                if sizes[a] < 2 {
                    continue;
                }
                let na = F::from(sizes[a]).expect("size fits");
                let remove = na / (na - F::one()) * sq_dist(p, &fit.centroids[a]);
                let mut best: Option<(usize, F)> = None;
                for b in (0..k).filter(|&b| b != a) {
                    let nb = F::from(sizes[b]).expect("size fits");
                    let delta = nb / (nb + F::one()) * sq_dist(p, &fit.centroids[b]) - remove;
                    if delta < -eps && best.map_or(true, |(_, d)| delta < d) {
                        best = Some((b, delta));
                    }
                }
                if let Some((b, _)) = best {
                    let (na, nb) = (na, F::from(sizes[b]).expect("size fits"));
                    for d in 0..p.len() {
                        fit.centroids[a][d] = (fit.centroids[a][d] * na - p[d]) / (na - F::one());
                        fit.centroids[b][d] = (fit.centroids[b][d] * nb + p[d]) / (nb + F::one());
                    }
                    sizes[a] -= 1;
                    sizes[b] += 1;
                    fit.assignments[i] = b;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            // recompute rather than accumulate rounding from the updates
            fit.centroids = means(data, &fit.assignments, &fit.centroids);
            fit.sse = sse_of(data, &fit.centroids, &fit.assignments);
            fit.sse_history.push(fit.sse);
        }
    }

    /// Best of `restarts` runs by SSE; the first restart wins ties. Small
    /// inputs additionally try every k-subset of points as seeds.
    pub fn fit(&self, data: &[Vec<F>]) -> KMeansFit<F> {
        assert!(!data.is_empty(), "k-means needs at least one point");
        let k = self.k.clamp(1, data.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut seeds: Vec<Vec<Vec<F>>> = (0..self.restarts.max(1))
            .map(|_| plus_plus(data, k, &mut rng))
            .collect();
        if binomial(data.len(), k) <= EXHAUSTIVE_SEEDS {
            seeds.extend(k_subsets(data.len(), k).into_iter().map(|idx| {
                idx.into_iter().map(|i| data[i].clone()).collect::<Vec<_>>()
            }));
        }
        let mut best: Option<KMeansFit<F>> = None;
        for centroids in seeds {
            let mut fit = self.lloyd(data, centroids);
            if self.refine {
                self.hartigan(data, &mut fit);
            }
            if best.as_ref().map_or(true, |b| fit.sse < b.sse) {
                best = Some(fit);
            }
        }
        best.expect("at least one restart")
    }
}

/// Inputs with at most this many k-subsets are also seeded exhaustively.
const EXHAUSTIVE_SEEDS: usize = 256;

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Pick k by the largest second difference of the SSE curve, where
/// `sse[i]` belongs to k = i + 1.
pub fn elbow<F: Float>(sse: &[F]) -> usize {
    if sse.len() < 3 {
        // too short for a second difference: 2 if splitting helps at all
        return if sse.len() == 2 && sse[1] < sse[0] { 2 } else { 1 };
    }
    let two = F::one() + F::one();
    let mut best_k = 1;
    let mut best = F::neg_infinity();
    for i in 1..sse.len() - 1 {
        let d2 = sse[i - 1] - two * sse[i] + sse[i + 1];
        if d2 > best {
            best = d2;
            best_k = i + 1;
        }
    }
    best_k
}

/// Mean silhouette coefficient; `None` unless 2 ≤ k ≤ n − 1.
pub fn silhouette<F: Float>(data: &[Vec<F>], assignments: &[usize]) -> Option<f64> {
    let n = data.len();
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let used: std::collections::BTreeSet<usize> = assignments.iter().copied().collect();
    if used.len() < 2 || used.len() > n.saturating_sub(1) {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0f64; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            sums[assignments[j]] += sq_dist(&data[i], &data[j]).to_f64()?.sqrt();
            counts[assignments[j]] += 1;
        }
        let own = assignments[i];
        if counts[own] == 0 {
            continue; // singleton: s = 0
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / n as f64)
}

/// Exhaustive optimum over partitions into at most `k` clusters. Only for
/// tiny inputs; used to check the heuristic.
pub fn brute_force_sse<F: Float>(data: &[Vec<F>], k: usize) -> F {
    let n = data.len();
    assert!(n <= 10, "exhaustive search is exponential");
    let mut labels = vec![0usize; n];
    let mut best = F::infinity();
    // restricted growth strings enumerate each partition once
    fn rec<F: Float>(i: usize, max_label: usize, k: usize, labels: &mut [usize], data: &[Vec<F>], best: &mut F) {
        if i == labels.len() {
            let groups = max_label + 1;
            let init = vec![vec![F::zero(); data[0].len()]; groups];
            let centroids = means(data, labels, &init);
            let s = sse_of(data, &centroids, labels);
            if s < *best {
                *best = s;
            }
            return;
        }
        let limit = (max_label + 2).min(k);
        for l in 0..limit {
            labels[i] = l;
            rec(i + 1, max_label.max(l), k, labels, data, best);
        }
    }
    if n == 0 {
        return F::zero();
    }
    labels[0] = 0;
    rec(1, 0, k.max(1), &mut labels, data, &mut best);
    best
}
