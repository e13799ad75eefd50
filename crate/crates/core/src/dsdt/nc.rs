use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dsdt, DsdtNode, Predicate, TreeKind, DEFAULT_SNR_THRESHOLD_DB};
use crate::corpus::UtterancePair;
use crate::dsp::{Stft, StftConfig};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squares after each update step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ndarray::ArrayView1<f64>, centroids: &Array2<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Lloyd's algorithm with seeded initial centroids drawn from the data.
/// An emptied cluster is re-seeded on the point farthest from its centroid;
/// if every point already sits on its centroid no re-seed is possible and
/// an error is returned.
pub fn kmeans(features: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = features.nrows();
    if k < 2 {
        return Err(Error::invalid(format!("cluster count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} clusters requested for {n} points")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means features".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut picks = sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut centroids = Array2::zeros((k, features.ncols()));
    for (j, &i) in picks.iter().enumerate() {
        centroids.row_mut(j).assign(&features.row(i));
    }

    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next: Vec<usize> = features.outer_iter().map(|p| nearest(p, &centroids)).collect();
        let changed = next != assignments;
        assignments = next;

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let (far, dist) = assignments
                .iter()
                .enumerate()
                .filter(|&(_, &a)| counts[a] > 1)
                .map(|(i, &a)| (i, sq_dist(features.row(i), centroids.row(a))))
                .fold((usize::MAX, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if far == usize::MAX {
                return Err(Error::invalid(format!("cannot form {k} non-empty clusters: too few distinct feature vectors")));
            }
            debug_assert!(dist > 0.0);
            counts[assignments[far]] -= 1;
            assignments[far] = empty;
            counts[empty] = 1;
            centroids.row_mut(empty).assign(&features.row(far));
        }

        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &features.row(i);
        }
        for j in 0..k {
            let mean: Array1<f64> = sums.row(j).mapv(|v| v / counts[j] as f64);
            centroids.row_mut(j).assign(&mean);
        }
        let objective: f64 = assignments
            .iter()
            .enumerate()
            .map(|(i, &a)| sq_dist(features.row(i), centroids.row(a)))
            .sum();
        history.push(objective);
        if !changed || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    Ok(KMeansResult { assignments, centroids, objective_history: history, iterations })
}

/// Per-utterance noise proxy: frame average of noisy LPS minus clean LPS.
pub fn nc_features(pairs: &[UtterancePair]) -> Result<Array2<f64>> {
    let stft = Stft::new(StftConfig::SPEECH_16K);
    let rows: Vec<Array1<f64>> = pairs
        .par_iter()
        .map(|p| {
            let noisy = stft.analyze(p.noisy.samples())?.0;
            let clean = stft.analyze(p.clean.samples())?.0;
            let diff = &noisy.frames - &clean.frames;
            Ok(diff.mean_axis(Axis(0)).expect("at least one frame"))
        })
        .collect::<Result<_>>()?;
    let dims = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), dims));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcClustering {
    pub clusters: usize,
    pub seed: u64,
    pub ids: Vec<String>,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective_history: Vec<f64>,
}

pub fn nc_partition(pairs: &[UtterancePair], clusters: usize, seed: u64) -> Result<NcClustering> {
    if clusters < 2 {
        return Err(Error::invalid(format!("cluster count must be at least 2, got {clusters}")));
    }
    if clusters > pairs.len() {
        return Err(Error::invalid(format!("{clusters} clusters requested for {} pairs", pairs.len())));
    }
    let features = nc_features(pairs)?;
    let km = kmeans(features.view(), clusters, seed)?;
    Ok(NcClustering {
        clusters,
        seed,
        ids: pairs.iter().map(|p| p.id.clone()).collect(),
        assignments: km.assignments,
        centroids: km.centroids.outer_iter().map(|r| r.to_vec()).collect(),
        objective_history: km.objective_history,
    })
}

impl NcClustering {
    /// Root plus one depth-1 node per cluster.
    pub fn to_tree(&self) -> Dsdt {
        let mut nodes = vec![DsdtNode {
            id: 0,
            depth: 0,
            label: "root".into(),
            predicate: Predicate::All,
            members: self.ids.clone(),
            parent: None,
            children: (1..=self.clusters).collect(),
        }];
        for j in 0..self.clusters {
            nodes.push(DsdtNode {
                id: j + 1,
                depth: 1,
                label: format!("C{j}"),
                predicate: Predicate::Cluster(j),
                members: self
                    .ids
                    .iter()
                    .zip(&self.assignments)
                    .filter(|(_, &a)| a == j)
                    .map(|(id, _)| id.clone())
                    .collect(),
                parent: Some(0),
                children: Vec::new(),
            });
        }
        Dsdt {
            kind: TreeKind::Nc { seed: self.seed, clusters: self.clusters },
            nodes,
            layer_labels: vec!["root".into(), "cluster".into()],
            snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn two_blobs_are_separated_perfectly() {
        let mut rng = rng_from_seed(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut x = Array2::zeros((40, 3));
        for i in 0..40 {
            let centre = if i % 2 == 0 { -5.0 } else { 5.0 };
            for d in 0..3 {
                x[[i, d]] = centre + noise.sample(&mut rng);
            }
        }
        for seed in 0..10 {
            let km = kmeans(x.view(), 2, seed).unwrap();
            let even = km.assignments[0];
            for (i, &a) in km.assignments.iter().enumerate() {
                assert_eq!(a == even, i % 2 == 0, "seed {seed}");
            }
        }
    }

    #[test]
    fn distinct_points_each_anchor_a_cluster() {
        let x = ndarray::array![[0.0, 0.0], [1.0, 1.0]];
        let km = kmeans(x.view(), 2, 3).unwrap();
        assert_ne!(km.assignments[0], km.assignments[1]);
    }

    #[test]
    fn identical_points_cannot_fill_two_clusters() {
        let x = ndarray::array![[1.0, 2.0], [1.0, 2.0]];
        assert!(kmeans(x.view(), 2, 0).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Three tight points plus one far outlier; whichever init, no cluster stays empty.
        let x = ndarray::array![[0.0], [0.1], [0.2], [100.0], [0.05]];
        for seed in 0..20 {
            let km = kmeans(x.view(), 3, seed).unwrap();
            for j in 0..3 {
                assert!(km.assignments.contains(&j));
            }
        }
    }

    #[test]
    fn precondition_errors() {
        let x = ndarray::array![[0.0], [1.0]];
        assert!(kmeans(x.view(), 1, 0).is_err());
        assert!(kmeans(x.view(), 3, 0).is_err());
    }

    #[test]
    fn cluster_tree_obeys_partition_law() {
        let c = NcClustering {
            clusters: 2,
            seed: 0,
            ids: vec!["a".into(), "b".into(), "c".into()],
            assignments: vec![1, 0, 1],
            centroids: vec![vec![0.0], vec![1.0]],
            objective_history: vec![0.0],
        };
        let t = c.to_tree();
        t.check_partition_law().unwrap();
        assert_eq!(t.nodes[2].members, vec!["a", "c"]);
    }

    proptest! {
        #[test]
        fn objective_never_increases(
            data in proptest::collection::vec(-10.0f64..10.0, 24..120),
            k in 2usize..5,
            seed in any::<u64>(),
        ) {
            let rows = data.len() / 2;
            let x = Array2::from_shape_vec((rows, 2), data[..rows * 2].to_vec()).unwrap();
            if let Ok(km) = kmeans(x.view(), k, seed) {
                for w in km.objective_history.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
                }
                prop_assert!(km.iterations <= MAX_ITERATIONS);
                let mut counts = vec![0; k];
                for a in &km.assignments { counts[a.to_owned()] += 1; }
                prop_assert!(counts.iter().all(|&c| c > 0));
            }
        }
    }
}
