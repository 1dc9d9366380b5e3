//! K-means partitioning of image feature vectors.
//!
//! Initialization is k-means++ driven by a ChaCha8 stream seeded from the
//! caller's seed. All passes walk the points in lexicographic id order, so
//! the result depends only on the set of records, not on their file order.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-SSE run is kept.
    #[serde(default = "default_n_init")]
    pub n_init: usize,
}

fn default_n_init() -> usize {
    DEFAULT_N_INIT
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            n_init: DEFAULT_N_INIT,
        }
    }
}

/// One cluster member with its distance to the cluster centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub distance: f64,
}

/// Orders by ascending distance, ties by id.
pub fn member_order(a: &Member, b: &Member) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    k: usize,
    centroids: Vec<Vec<f64>>,
    /// Image ids in lexicographic order; `labels` and `distances` align with it.
    ids: Vec<String>,
    labels: Vec<usize>,
    distances: Vec<f64>,
    sse: f64,
    iterations: usize,
    seed: u64,
    sse_trace: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// SSE after every centroid update, in iteration order.
    pub fn sse_trace(&self) -> &[f64] {
        &self.sse_trace
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn assignment(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.labels[i])
    }

    pub fn distance(&self, id: &str) -> Option<f64> {
        self.index.get(id).map(|&i| self.distances[i])
    }

    /// `(id, cluster, distance)` for every image in id order.
    pub fn assignments(&self) -> impl Iterator<Item = (&str, usize, f64)> + '_ {
        self.ids
            .iter()
            .zip(&self.labels)
            .zip(&self.distances)
            .map(|((id, &c), &d)| (id.as_str(), c, d))
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Members of one cluster sorted by (distance, id).
    pub fn cluster_members(&self, cluster_id: usize) -> Result<Vec<Member>> {
        if cluster_id >= self.k {
            return Err(Error::Clustering(format!(
                "cluster id {cluster_id} out of range (k = {})",
                self.k
            )));
        }
        let mut members: Vec<Member> = self
            .assignments()
            .filter(|&(_, c, _)| c == cluster_id)
            .map(|(id, _, d)| Member {
                id: id.to_string(),
                distance: d,
            })
            .collect();
        members.sort_by(member_order);
        Ok(members)
    }

    /// Members of every cluster, indexed by cluster id.
    pub fn all_members(&self) -> Vec<Vec<Member>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, c, d) in self.assignments() {
            out[c].push(Member {
                id: id.to_string(),
                distance: d,
            });
        }
        for m in &mut out {
            m.sort_by(member_order);
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest(p, centroids)).unzip()
}

fn distinct_points(points: &[&[f64]]) -> usize {
    let mut seen = HashSet::with_capacity(points.len());
    for p in points {
        // +0.0 folds -0.0 into 0.0 so bit patterns compare as values.
        let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
        seen.insert(key);
    }
    seen.len()
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("k <= distinct points leaves positive mass");
        let c = points[pick].to_vec();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn update_centroids(points: &[&[f64]], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        let n = n as f64;
        for v in s.iter_mut() {
            *v /= n;
        }
    }
    sums
}

/// Moves the point farthest from its centroid into each empty cluster. The
/// donor cluster must keep at least one member.
fn repair_empty(labels: &mut [usize], d2: &mut [f64], k: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &c in labels.iter() {
        sizes[c] += 1;
    }
    let mut repaired = false;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a)));
        let Some(i) = donor else { break };
        sizes[labels[i]] -= 1;
        sizes[empty] += 1;
        labels[i] = empty;
        d2[i] = 0.0;
        repaired = true;
    }
    repaired
}

fn total_sse(points: &[&[f64]], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

struct LloydRun {
    centroids: Vec<Vec<f64>>,
    sse_trace: Vec<f64>,
    iterations: usize,
    labels: Vec<usize>,
    d2: Vec<f64>,
}

fn lloyd(
    points: &[&[f64]],
    k: usize,
    dim: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> LloydRun {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut sse_trace = Vec::new();
    let mut iterations = 0;
    let mut prev_labels: Option<Vec<usize>> = None;

    while iterations < max_iter {
        iterations += 1;
        let (mut labels, mut d2) = assign(points, &centroids);
        repair_empty(&mut labels, &mut d2, k);
        let unchanged = prev_labels.as_deref() == Some(labels.as_slice());
        let updated = update_centroids(points, &labels, k, dim);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        let sse = total_sse(points, &labels, &centroids);
        if let Some(&prev) = sse_trace.last() {
            debug_assert!(
                sse <= prev * (1.0 + 1e-12),
                "SSE increased from {prev} to {sse} at iteration {iterations}"
            );
        }
        sse_trace.push(sse);
        log::debug!("kmeans iteration {iterations}: sse={sse} shift={shift}");
        if unchanged || shift < tol {
            break;
        }
        prev_labels = Some(labels);
    }

    let (labels, d2) = assign(points, &centroids);
    LloydRun {
        centroids,
        sse_trace,
        iterations,
        labels,
        d2,
    }
}

/// Fits K-means on the dataset's feature vectors. Restarts draw from one
/// seeded stream in sequence; ties in final SSE keep the earlier restart.
pub fn kmeans_fit(dataset: &Dataset, params: &KMeansParams) -> Result<ClusterModel> {
    let KMeansParams {
        k,
        seed,
        max_iter,
        tol,
        n_init,
    } = *params;
    if k == 0 {
        return Err(Error::Clustering("k must be at least 1".into()));
    }
    if max_iter == 0 {
        return Err(Error::Clustering("max_iter must be at least 1".into()));
    }
    if n_init == 0 {
        return Err(Error::Clustering("n_init must be at least 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::Clustering(format!("tol must be >= 0, got {tol}")));
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let recs = dataset.records();
    order.sort_by(|&a, &b| recs[a].id.cmp(&recs[b].id));
    let ids: Vec<String> = order.iter().map(|&i| recs[i].id.clone()).collect();
    let points: Vec<&[f64]> = order.iter().map(|&i| recs[i].features.as_slice()).collect();
    if let Some((id, _)) = ids
        .iter()
        .zip(&points)
        .find(|(_, p)| p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Clustering(format!(
            "non-finite feature value in image {id:?}"
        )));
    }
    let distinct = distinct_points(&points);
    if k > distinct {
        return Err(Error::Clustering(format!(
            "k = {k} exceeds the number of distinct feature vectors ({distinct})"
        )));
    }

    let dim = dataset.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, LloydRun)> = None;
    for restart in 0..n_init {
        let run = lloyd(&points, k, dim, max_iter, tol, &mut rng);
        let sse: f64 = run.d2.iter().sum();
        log::debug!(
            "kmeans restart {restart}: sse={sse} iterations={}",
            run.iterations
        );
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, run));
        }
    }
    let (sse, run) = best.expect("n_init >= 1");
    let distances: Vec<f64> = run.d2.iter().map(|v| v.sqrt()).collect();
    let index = ids
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    Ok(ClusterModel {
        k,
        centroids: run.centroids,
        ids,
        labels: run.labels,
        distances,
        sse,
        iterations: run.iterations,
        seed,
        sse_trace: run.sse_trace,
        index,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DumpLine {
    Header {
        k: usize,
        dim: usize,
        seed: u64,
        sse: f64,
        iterations: usize,
        sse_trace: Vec<f64>,
    },
    Centroid {
        cluster: usize,
        values: Vec<f64>,
    },
    Member {
        id: String,
        cluster: usize,
        distance: f64,
    },
}

/// Writes the model as line-delimited JSON: a header, k centroid lines, then
/// one member line per image in id order.
pub fn save_model(model: &ClusterModel, path: &Path) -> Result<()> {
    let dim = model.centroids.first().map_or(0, Vec::len);
    let header = DumpLine::Header {
        k: model.k,
        dim,
        seed: model.seed,
        sse: model.sse,
        iterations: model.iterations,
        sse_trace: model.sse_trace.clone(),
    };
    let centroids =
        model
            .centroids
            .iter()
            .enumerate()
            .map(|(cluster, values)| DumpLine::Centroid {
                cluster,
                values: values.clone(),
            });
    let members = model
        .assignments()
        .map(|(id, cluster, distance)| DumpLine::Member {
            id: id.to_string(),
            cluster,
            distance,
        });
    crate::io::write_jsonl(
        path,
        std::iter::once(header).chain(centroids).chain(members),
    )
}

pub fn load_model(path: &Path) -> Result<ClusterModel> {
    let lines: Vec<DumpLine> = crate::io::read_jsonl(path)?;
    let bad = |msg: String| Error::Clustering(format!("{}: {msg}", path.display()));
    let mut iter = lines.into_iter();
    let Some(DumpLine::Header {
        k,
        dim,
        seed,
        sse,
        iterations,
        sse_trace,
    }) = iter.next()
    else {
        return Err(bad("missing header line".into()));
    };
    let mut centroids = vec![None; k];
    let mut members = Vec::new();
    for line in iter {
        match line {
            DumpLine::Centroid { cluster, values } => {
                if cluster >= k || values.len() != dim {
                    return Err(bad(format!("bad centroid line for cluster {cluster}")));
                }
                centroids[cluster] = Some(values);
            }
            DumpLine::Member {
                id,
                cluster,
                distance,
            } => {
                if cluster >= k {
                    return Err(bad(format!("member {id:?} has cluster {cluster} >= k")));
                }
                members.push((id, cluster, distance));
            }
            DumpLine::Header { .. } => return Err(bad("duplicate header".into())),
        }
    }
    let centroids = centroids
        .into_iter()
        .enumerate()
        .map(|(c, v)| v.ok_or_else(|| bad(format!("missing centroid {c}"))))
        .collect::<Result<Vec<_>>>()?;
    members.sort_by(|a, b| a.0.cmp(&b.0));
    let mut ids = Vec::with_capacity(members.len());
    let mut labels = Vec::with_capacity(members.len());
    let mut distances = Vec::with_capacity(members.len());
    let mut index = HashMap::with_capacity(members.len());
    for (id, c, d) in members {
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(bad(format!("duplicate member {id:?}")));
        }
        ids.push(id);
        labels.push(c);
        distances.push(d);
    }
    Ok(ClusterModel {
        k,
        centroids,
        ids,
        labels,
        distances,
        sse,
        iterations,
        seed,
        sse_trace,
        index,
    })
}

impl ClusterModel {
    /// Checks that every dataset image is assigned and no unknown id is present.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        if self.len() != dataset.len() {
            return Err(Error::Clustering(format!(
                "model covers {} images, dataset has {}",
                self.len(),
                dataset.len()
            )));
        }
        if let Some(r) = dataset
            .records()
            .iter()
            .find(|r| self.assignment(&r.id).is_none())
        {
            return Err(Error::Clustering(format!(
                "image {:?} missing from the cluster model",
                r.id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageRecord;
    use std::collections::BTreeMap;

    fn dataset(points: &[Vec<f64>]) -> Dataset {
        let recs = points
            .iter()
            .enumerate()
            .map(|(i, p)| ImageRecord {
                id: format!("p{i:04}"),
                features: p.clone(),
                captions: vec!["x".into()],
            })
            .collect();
        Dataset::new(recs, BTreeMap::new()).unwrap()
    }

    fn params(k: usize, seed: u64) -> KMeansParams {
        KMeansParams {
            k,
            seed,
            ..KMeansParams::default()
        }
    }

    #[test]
    fn unit_square_corners_each_own_cluster() {
        let ds = dataset(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ]);
        let m = kmeans_fit(&ds, &params(4, 7)).unwrap();
        assert_eq!(m.sse(), 0.0);
        let mut cents: Vec<Vec<f64>> = m.centroids().to_vec();
        cents.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            cents,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
        assert_eq!(m.cluster_sizes(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn k1_centroid_is_the_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 6.0]];
        let m = kmeans_fit(&dataset(&pts), &params(1, 3)).unwrap();
        let c = &m.centroids()[0];
        assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
        assert!(m.assignments().all(|(_, c, _)| c == 0));
    }

    #[test]
    fn k_above_distinct_points_errors() {
        let ds = dataset(&[vec![1.0], vec![1.0], vec![2.0]]);
        let err = kmeans_fit(&ds, &params(3, 0)).unwrap_err();
        assert!(err.to_string().contains("distinct"), "{err}");
        assert!(kmeans_fit(&ds, &params(2, 0)).is_ok());
    }

    #[test]
    fn non_finite_feature_names_image() {
        let ds = dataset(&[vec![1.0], vec![f64::NAN]]);
        let err = kmeans_fit(&ds, &params(1, 0)).unwrap_err();
        assert!(err.to_string().contains("p0001"), "{err}");
    }

    #[test]
    fn members_sorted_with_id_tiebreak() {
        let ds = dataset(&[vec![0.0], vec![0.1], vec![-0.1], vec![0.2]]);
        let m = kmeans_fit(&ds, &params(1, 0)).unwrap();
        let members = m.cluster_members(0).unwrap();
        let ids: Vec<&str> = members.iter().map(|m| m.id.as_str()).collect();
        // mean 0.05: distances p0000 .05, p0001 .05, p0002 .15, p0003 .15
        assert_eq!(ids, vec!["p0000", "p0001", "p0002", "p0003"]);
        assert!(m.cluster_members(1).is_err());
    }

    #[test]
    fn member_order_breaks_ties_by_id() {
        let mut v = vec![
            Member {
                id: "b".into(),
                distance: 0.1,
            },
            Member {
                id: "a".into(),
                distance: 0.1,
            },
            Member {
                id: "c".into(),
                distance: 0.05,
            },
        ];
        v.sort_by(member_order);
        let ids: Vec<&str> = v.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
    }

    #[test]
    fn repair_moves_farthest_point() {
        let mut labels = vec![0, 0, 0, 1];
        let mut d2 = vec![1.0, 9.0, 4.0, 0.0];
        assert!(repair_empty(&mut labels, &mut d2, 3));
        assert_eq!(labels, vec![0, 2, 0, 1]);
    }

    #[test]
    fn model_dump_round_trips() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 7) as f64 * 0.37, (i / 7) as f64])
            .collect();
        let m = kmeans_fit(&dataset(&pts), &params(3, 11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.jsonl");
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }
}
