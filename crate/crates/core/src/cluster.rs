//! Kernel k-means over actuator profiles and per-frame class labelling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::TimeSeriesTable;

/// Profiles longer than this are subsampled with a fixed stride.
pub const MAX_PROFILE_LEN: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("K = {k} is invalid for {n} points")]
    BadK { k: usize, n: usize },
    #[error("rbf gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("points must be finite and have equal length")]
    BadPoints,
    #[error("actuator `{0}` has no class in the assignment")]
    Unassigned(String),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum Kernel {
    Linear,
    /// `exp(−γ‖x−y‖²)`; `gamma = None` uses one over the median squared
    /// pairwise distance.
    Rbf { gamma: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub kernel: Kernel,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Polish the Lloyd fixed point with single-point moves.
    pub refine: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 6,
            kernel: Kernel::Rbf { gamma: None },
            seed: 0,
            max_iter: 100,
            restarts: 10,
            refine: true,
        }
    }
}

/// One run from a fixed initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansRun {
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Objective after initialization and after every iteration.
    pub inertia_history: Vec<f64>,
    pub reseeds: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// Cluster of each point. Ids are ordered by the first point of each cluster.
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub inertia_history: Vec<f64>,
    pub reseeds: usize,
    pub best_restart: usize,
    /// Gamma actually used by an rbf kernel.
    pub gamma: Option<f64>,
}

/// Gram matrix of `points` (each of equal length), row-major `n×n`.
pub fn gram_matrix(points: &[Vec<f64>], kernel: Kernel) -> Result<(Vec<f64>, Option<f64>), ClusterError> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
        return Err(ClusterError::BadPoints);
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut lin = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&points[i], &points[j]);
            lin[i * n + j] = v;
            lin[j * n + i] = v;
        }
    }
    match kernel {
        Kernel::Linear => Ok((lin, None)),
        Kernel::Rbf { gamma } => {
            let sq = |i: usize, j: usize| (lin[i * n + i] + lin[j * n + j] - 2.0 * lin[i * n + j]).max(0.0);
            let gamma = match gamma {
                Some(g) if g > 0.0 && g.is_finite() => g,
                Some(g) => return Err(ClusterError::BadGamma(g)),
                None => {
                    let mut d2: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| sq(i, j)).collect();
                    d2.sort_by(f64::total_cmp);
                    let med = if d2.is_empty() { 0.0 } else { d2[d2.len() / 2] };
                    if med > 0.0 { 1.0 / med } else { 1.0 }
                }
            };
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] = (-gamma * sq(i, j)).exp();
                }
            }
            Ok((g, Some(gamma)))
        }
    }
}

/// Squared feature-space distance of every point to every cluster mean.
fn distances(gram: &[f64], n: usize, k: usize, assign: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut size = vec![0usize; k];
    for &a in assign {
        size[a] += 1;
    }
    // Σ_{j∈c} K_ij per point and cluster, then Σ_{j,l∈c} K_jl per cluster.
    let mut cross = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..n {
            cross[i * k + assign[j]] += gram[i * n + j];
        }
    }
    let mut within = vec![0.0; k];
    for j in 0..n {
        within[assign[j]] += cross[j * k + assign[j]];
    }
    let mut dist = vec![f64::INFINITY; n * k];
    for i in 0..n {
        for c in 0..k {
            if size[c] > 0 {
                let s = size[c] as f64;
                dist[i * k + c] = (gram[i * n + i] - 2.0 * cross[i * k + c] / s + within[c] / (s * s)).max(0.0);
            }
        }
    }
    (dist, size)
}

fn objective_of(dist: &[f64], k: usize, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &a)| dist[i * k + a]).sum()
}

/// Moves the farthest point into each empty cluster. Returns the number of moves.
fn fill_empty(gram: &[f64], n: usize, k: usize, assign: &mut [usize]) -> usize {
    let mut moves = 0;
    loop {
        let (dist, size) = distances(gram, n, k, assign);
        let Some(empty) = size.iter().position(|&s| s == 0) else {
            return moves;
        };
        // Only points from clusters with more than one member can move.
        let far = (0..n)
            .filter(|&i| size[assign[i]] > 1)
            .max_by(|&a, &b| dist[a * k + assign[a]].total_cmp(&dist[b * k + assign[b]]).then(b.cmp(&a)))
            .expect("k ≤ n guarantees a cluster with two members");
        assign[far] = empty;
        moves += 1;
    }
}

/// Kernel k-means from the clusters seeded at points `init` (one per cluster).
/// Points go to the nearest seed first, then Lloyd iterations run until
/// the assignment is stable; with `refine`, single-point moves follow
/// until none lowers the objective.
pub fn kernel_kmeans_single(gram: &[f64], n: usize, init: &[usize], max_iter: usize, refine: bool) -> KMeansRun {
    let k = init.len();
    assert!(k >= 1 && k <= n && gram.len() == n * n, "invalid kernel k-means input");
    let seed_dist = |i: usize, c: usize| gram[i * n + i] - 2.0 * gram[i * n + c] + gram[c * n + c];
    let mut assign: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if seed_dist(i, init[c]) < seed_dist(i, init[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();
    for (c, &p) in init.iter().enumerate() {
        if init[..c].iter().all(|&q| seed_dist(p, q) > 0.0) {
            assign[p] = c;
        }
    }
    let mut reseeds = fill_empty(gram, n, k, &mut assign);
    let (dist, _) = distances(gram, n, k, &assign);
    let mut history = vec![objective_of(&dist, k, &assign)];
    let mut iterations = 0;
    let mut dist = dist;
    while iterations < max_iter {
        iterations += 1;
        let next: Vec<usize> = (0..n)
            .map(|i| {
                let row = &dist[i * k..(i + 1) * k];
                let mut best = 0;
                for c in 1..k {
                    if row[c] < row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        let changed = next != assign;
        assign = next;
        reseeds += fill_empty(gram, n, k, &mut assign);
        dist = distances(gram, n, k, &assign).0;
        history.push(objective_of(&dist, k, &assign));
        if !changed {
            break;
        }
    }
    if refine {
        let moved = hartigan(gram, n, k, &mut assign);
        if moved > 0 {
            dist = distances(gram, n, k, &assign).0;
            history.push(objective_of(&dist, k, &assign));
        }
    }
    KMeansRun {
        objective: *history.last().expect("history is never empty"),
        assignment: assign,
        inertia_history: history,
        reseeds,
        iterations,
    }
}

/// Applies improving single-point moves until none is left.
fn hartigan(gram: &[f64], n: usize, k: usize, assign: &mut [usize]) -> usize {
    let mut moved = 0;
    // Each move strictly lowers the objective, so this terminates; the cap
    // only guards against rounding cycles.
    for _ in 0..n * n * k.max(1) {
        let (dist, size) = distances(gram, n, k, assign);
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            let a = assign[i];
            if size[a] <= 1 {
                continue;
            }
            let sa = size[a] as f64;
            let loss = sa / (sa - 1.0) * dist[i * k + a];
            for c in (0..k).filter(|&c| c != a) {
                let sc = size[c] as f64;
                let delta = sc / (sc + 1.0) * dist[i * k + c] - loss;
                if delta < -1e-12 * (1.0 + loss) && best.is_none_or(|(d, _, _)| delta < d) {
                    best = Some((delta, i, c));
                }
            }
        }
        match best {
            Some((_, i, c)) => {
                assign[i] = c;
                moved += 1;
            }
            None => break,
        }
    }
    moved
}

/// k-means++ seeding in kernel space.
fn plus_plus(gram: &[f64], n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut seeds = vec![rng.random_range(0..n)];
    let d = |i: usize, c: usize| (gram[i * n + i] - 2.0 * gram[i * n + c] + gram[c * n + c]).max(0.0);
    while seeds.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| if seeds.contains(&i) { 0.0 } else { seeds.iter().map(|&c| d(i, c)).fold(f64::INFINITY, f64::min) })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !seeds.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        seeds.push(next);
    }
    seeds
}

/// Relabels clusters in order of their first member.
fn canonical(assign: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    assign
        .iter()
        .map(|&a| {
            if map[a] == usize::MAX {
                map[a] = next;
                next += 1;
            }
            map[a]
        })
        .collect()
}

/// Best of `cfg.restarts` seeded runs by objective; ties go to the earliest restart.
pub fn kernel_kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    let n = points.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(ClusterError::BadK { k: cfg.k, n });
    }
    let (gram, gamma) = gram_matrix(points, cfg.kernel)?;
    Ok(kmeans_on_gram(&gram, n, cfg, gamma))
}

fn kmeans_on_gram(gram: &[f64], n: usize, cfg: &KMeansConfig, gamma: Option<f64>) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, KMeansRun)> = None;
    for r in 0..cfg.restarts.max(1) {
        let init = plus_plus(gram, n, cfg.k, &mut rng);
        let run = kernel_kmeans_single(gram, n, &init, cfg.max_iter, cfg.refine);
        if best.as_ref().is_none_or(|(_, b)| run.objective < b.objective) {
            best = Some((r, run));
        }
    }
    let (best_restart, run) = best.expect("at least one restart");
    KMeansResult {
        assignment: canonical(&run.assignment, cfg.k),
        objective: run.objective,
        inertia_history: run.inertia_history,
        reseeds: run.reseeds,
        best_restart,
        gamma,
    }
}

/// Mean silhouette with feature-space distances; singletons score 0.
pub fn silhouette(gram: &[f64], n: usize, assign: &[usize]) -> f64 {
    let k = assign.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return 0.0;
    }
    let dist = |i: usize, j: usize| (gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j]).max(0.0).sqrt();
    let mut size = vec![0usize; k];
    for &a in assign {
        size[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        if size[assign[i]] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in (0..n).filter(|&j| j != i) {
            sums[assign[j]] += dist(i, j);
        }
        let a = sums[assign[i]] / (size[assign[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != assign[i] && size[c] > 0)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        total += if m > 0.0 { (b - a) / m } else { 0.0 };
    }
    total / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSelectionRow {
    pub k: usize,
    pub objective: f64,
    pub silhouette: f64,
    pub reseeds: usize,
}

/// Objective and silhouette of the best-of-restarts clustering for each K.
pub fn k_selection_report(points: &[Vec<f64>], k_range: &[usize], cfg: &KMeansConfig) -> Result<Vec<KSelectionRow>, ClusterError> {
    let n = points.len();
    let (gram, gamma) = gram_matrix(points, cfg.kernel)?;
    k_range
        .iter()
        .map(|&k| {
            if k < 2 || k > n.min(16) {
                return Err(ClusterError::BadK { k, n });
            }
            let res = kmeans_on_gram(&gram, n, &KMeansConfig { k, ..cfg.clone() }, gamma);
            Ok(KSelectionRow {
                k,
                objective: res.objective,
                silhouette: silhouette(&gram, n, &res.assignment),
                reseeds: res.reseeds,
            })
        })
        .collect()
}

pub fn write_k_selection_csv(rows: &[KSelectionRow], path: &Path) -> Result<(), ClusterError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Standardizes each column of `values` (`rows×cols`, row-major) in place.
/// Constant columns become zero.
fn standardize_columns(values: &mut [f64], cols: usize) {
    let rows = values.len() / cols;
    for c in 0..cols {
        let mean = (0..rows).map(|r| values[r * cols + c]).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| (values[r * cols + c] - mean).powi(2)).sum::<f64>() / rows as f64;
        let std = var.sqrt();
        for r in 0..rows {
            let v = &mut values[r * cols + c];
            *v = if std > 1e-12 * mean.abs().max(1.0) { (*v - mean) / std } else { 0.0 };
        }
    }
}

/// One standardized, possibly subsampled, series per actuator column.
pub fn actuator_profiles(actuators: &TimeSeriesTable) -> Vec<Vec<f64>> {
    let (n, a) = (actuators.n_rows(), actuators.n_features());
    let mut vals = actuators.values().to_vec();
    standardize_columns(&mut vals, a);
    let stride = n.div_ceil(MAX_PROFILE_LEN).max(1);
    (0..a).map(|c| (0..n).step_by(stride).map(|r| vals[r * a + c]).collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    #[serde(rename = "K")]
    pub k: usize,
    /// Actuator name → class id in `0..K`.
    pub classes: BTreeMap<String, usize>,
    pub objective: f64,
    #[serde(default)]
    pub inertia_history: Vec<f64>,
    #[serde(default)]
    pub reseeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
}

impl ClusterAssignment {
    /// Clusters the actuator columns of `actuators`.
    pub fn fit(actuators: &TimeSeriesTable, cfg: &KMeansConfig) -> Result<Self, ClusterError> {
        if actuators.has_missing() {
            return Err(ClusterError::Invalid("actuator table has missing values; preprocess first".into()));
        }
        let profiles = actuator_profiles(actuators);
        let res = kernel_kmeans(&profiles, cfg)?;
        let kernel = match cfg.kernel {
            Kernel::Rbf { .. } => Kernel::Rbf { gamma: res.gamma },
            k => k,
        };
        Ok(ClusterAssignment {
            k: cfg.k,
            classes: actuators.feature_names().iter().cloned().zip(res.assignment).collect(),
            objective: res.objective,
            inertia_history: res.inertia_history,
            reseeds: res.reseeds,
            kernel: Some(kernel),
        })
    }

    fn column_classes(&self, actuators: &TimeSeriesTable) -> Result<Vec<usize>, ClusterError> {
        actuators
            .feature_names()
            .iter()
            .map(|name| match self.classes.get(name) {
                Some(&c) if c < self.k => Ok(c),
                Some(&c) => Err(ClusterError::Invalid(format!("class {c} of `{name}` outside 0..{}", self.k))),
                None => Err(ClusterError::Unassigned(name.clone())),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ClusterError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        let a: ClusterAssignment = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if a.k == 0 || a.classes.values().any(|&c| c >= a.k) {
            return Err(ClusterError::Invalid(format!("assignment has classes outside 0..{}", a.k)));
        }
        Ok(a)
    }
}

/// Per-frame class: the class whose actuators have the highest mean
/// standardized activation at that frame, lowest id on ties. Columns are
/// standardized here, so any per-column affine rescaling of the input
/// (with positive scale) gives the same labels.
pub fn label_frames(actuators: &TimeSeriesTable, assignment: &ClusterAssignment) -> Result<Vec<usize>, ClusterError> {
    let cls = assignment.column_classes(actuators)?;
    let (n, a, k) = (actuators.n_rows(), actuators.n_features(), assignment.k);
    let mut vals = actuators.values().to_vec();
    standardize_columns(&mut vals, a);
    let mut count = vec![0usize; k];
    for &c in &cls {
        count[c] += 1;
    }
    Ok((0..n)
        .map(|t| {
            let mut sums = vec![0.0; k];
            for (j, &c) in cls.iter().enumerate() {
                sums[c] += vals[t * a + j];
            }
            let mut best: Option<(usize, f64)> = None;
            for c in (0..k).filter(|&c| count[c] > 0) {
                let m = sums[c] / count[c] as f64;
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((c, m));
                }
            }
            best.map_or(0, |(c, _)| c)
        })
        .collect())
}

/// Mean standardized actuator vector of the frames carrying each class;
/// classes that never occur map to the zero vector.
pub fn command_map(actuators: &TimeSeriesTable, labels: &[usize], k: usize) -> Result<Vec<Vec<f64>>, ClusterError> {
    let (n, a) = (actuators.n_rows(), actuators.n_features());
    if labels.len() != n {
        return Err(ClusterError::Invalid(format!("{} labels for {n} frames", labels.len())));
    }
    let mut vals = actuators.values().to_vec();
    standardize_columns(&mut vals, a);
    let mut sums = vec![vec![0.0; a]; k];
    let mut count = vec![0usize; k];
    for (t, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(ClusterError::Invalid(format!("label {l} outside 0..{k}")));
        }
        count[l] += 1;
        for j in 0..a {
            sums[l][j] += vals[t * a + j];
        }
    }
    for (s, &c) in sums.iter_mut().zip(&count) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    Ok(sums)
}
