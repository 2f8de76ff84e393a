//! Hierarchical agglomerative clustering over a proximity matrix and the
//! square-root dendrogram cut that turns one topic class into bundles.
//!
//! [`agglomerate`] is the production path: the nearest-neighbor-chain
//! algorithm (Müllner 2011), O(n²) time and O(n) extra space, exact for the
//! reducible linkages offered here. [`naive_agglomerate`] is the O(n³)
//! reference that repeatedly merges the globally closest pair; the two must
//! produce identical dendrograms, which is what the test suite leans on.
//!
//! Tie-breaking is deterministic everywhere: a cluster is represented by its
//! smallest leaf index, and among equal dissimilarities the lexicographically
//! smallest representative pair merges first.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::distance::ProximityMatrix;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("matrix has {0} row(s); at least 2 are required")]
    MatrixTooSmall(usize),
    #[error("cannot cut a dendrogram over {n} leaves into {k} bundles")]
    BadK { k: usize, n: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Linkage criterion: how the dissimilarity between merged clusters and the
/// rest is derived. Ward is deliberately absent; the blended dissimilarity
/// is not squared-Euclidean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

impl Linkage {
    /// Lance-Williams update: dissimilarity from the merger of a (with
    /// `size_a`) and b (with `size_b`) to another cluster.
    fn update(self, d_ax: f64, d_bx: f64, size_a: usize, size_b: usize) -> f64 {
        match self {
            Linkage::Single => d_ax.min(d_bx),
            Linkage::Complete => d_ax.max(d_bx),
            Linkage::Average => {
                let sa = size_a as f64;
                let sb = size_b as f64;
                (sa * d_ax + sb * d_bx) / (sa + sb)
            }
        }
    }
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Linkage::Single => write!(f, "single"),
            Linkage::Complete => write!(f, "complete"),
            Linkage::Average => write!(f, "average"),
        }
    }
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(format!(
                "unknown linkage {other:?} (expected single, complete or average)"
            )),
        }
    }
}

/// One agglomeration step. Node ids 0..n-1 are leaves; merge i creates node
/// n+i. `left < right` always.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Full merge history of one clustering run, heights non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Assembles a dendrogram from a merge list, rejecting anything that
    /// violates the structural invariants.
    pub fn from_merges(n: usize, merges: Vec<Merge>) -> Result<Self, String> {
        if n < 2 {
            return Err(format!("a dendrogram needs at least 2 leaves, got {n}"));
        }
        let dendro = Dendrogram { n, merges };
        dendro.check()?;
        Ok(dendro)
    }

    pub fn leaf_count(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Validates the structural invariants; used by tests and the pipeline's
    /// sanity pass.
    pub fn check(&self) -> Result<(), String> {
        if self.merges.len() != self.n - 1 {
            return Err(format!(
                "expected {} merges, found {}",
                self.n - 1,
                self.merges.len()
            ));
        }
        let mut consumed = vec![false; 2 * self.n - 1];
        let mut sizes = vec![1usize; 2 * self.n - 1];
        let mut prev_height = f64::NEG_INFINITY;
        for (step, m) in self.merges.iter().enumerate() {
            let created = self.n + step;
            if m.left >= created || m.right >= created || m.left == m.right {
                return Err(format!("merge {step} references invalid nodes"));
            }
            for node in [m.left, m.right] {
                if consumed[node] {
                    return Err(format!("node {node} consumed twice"));
                }
                consumed[node] = true;
            }
            if m.size != sizes[m.left] + sizes[m.right] {
                return Err(format!("merge {step} size mismatch"));
            }
            sizes[created] = m.size;
            if m.height < prev_height {
                return Err(format!("merge {step} decreases height"));
            }
            prev_height = m.height;
        }
        if self.merges.last().map(|m| m.size) != Some(self.n) {
            return Err("final merge does not cover all leaves".into());
        }
        Ok(())
    }

    /// Writes the text table: `merge_index left right height size`.
    pub fn write_text(&self, path: &Path) -> Result<(), ClusterError> {
        let file = File::create(path).map_err(|e| ClusterError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut out = BufWriter::new(file);
        for (idx, m) in self.merges.iter().enumerate() {
            writeln!(out, "{idx} {} {} {} {}", m.left, m.right, m.height, m.size).map_err(
                |e| ClusterError::Io {
                    path: path.display().to_string(),
                    source: e,
                },
            )?;
        }
        out.flush().map_err(|e| ClusterError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// One flat cluster from cutting a dendrogram. Members are leaf indices,
/// ascending; bundles are numbered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub bundle_id: usize,
    pub members: Vec<usize>,
}

struct RawMerge {
    slot_a: usize,
    slot_b: usize,
    height: f64,
    size: usize,
}

/// Nearest-neighbor-chain agglomeration.
///
/// Grows a chain of successive nearest neighbors until it finds a reciprocal
/// pair, merges it, and resumes from the remaining chain. Reducible linkages
/// guarantee earlier chain links stay valid across merges, so every merge is
/// a mutual nearest neighbor and the sorted result equals the greedy
/// global-minimum dendrogram.
pub fn agglomerate(m: &ProximityMatrix, linkage: Linkage) -> Result<Dendrogram, ClusterError> {
    let n = m.n();
    if n < 2 {
        return Err(ClusterError::MatrixTooSmall(n));
    }

    // Working state, all indexed by slot = smallest leaf of a cluster.
    let mut dist = m.condensed().to_vec();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut raw: Vec<RawMerge> = Vec::with_capacity(n - 1);

    let idx = |i: usize, j: usize| -> usize {
        debug_assert!(i != j);
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        crate::distance::condensed_index(n, i, j)
    };

    for _ in 0..n - 1 {
        if chain.is_empty() {
            let start = active
                .iter()
                .position(|&a| a)
                .expect("an active cluster always exists");
            chain.push(start);
        }

        // Extend the chain until the top and its predecessor are mutual
        // nearest neighbors. Preferring the predecessor on ties guarantees
        // termination.
        loop {
            let top = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|p| chain[p]);

            let mut nearest = usize::MAX;
            let mut nearest_d = f64::INFINITY;
            for x in (0..n).filter(|&x| active[x] && x != top) {
                let d = dist[idx(top, x)];
                if d < nearest_d {
                    nearest_d = d;
                    nearest = x;
                }
            }
            debug_assert!(nearest != usize::MAX);

            if let Some(p) = prev {
                if dist[idx(top, p)] <= nearest_d {
                    break; // reciprocal pair (top, prev)
                }
            }
            chain.push(nearest);
        }

        let b = chain.pop().unwrap();
        let a = chain.pop().unwrap();
        let height = dist[idx(a, b)];
        let merged_size = size[a] + size[b];
        raw.push(RawMerge {
            slot_a: a,
            slot_b: b,
            height,
            size: merged_size,
        });

        // Merge into the smaller slot so the representative stays the
        // smallest leaf of the cluster.
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        for x in (0..n).filter(|&x| active[x] && x != keep && x != drop) {
            let merged = linkage.update(dist[idx(keep, x)], dist[idx(drop, x)], size[keep], size[drop]);
            dist[idx(keep, x)] = merged;
        }
        size[keep] = merged_size;
        active[drop] = false;
    }

    Ok(canonicalize(n, raw))
}

/// Reference agglomeration: scan every active pair, merge the global
/// minimum (ties to the lexicographically smallest slot pair), update with
/// the same linkage definitions computed inline. O(n³), kept deliberately
/// simple.
pub fn naive_agglomerate(
    m: &ProximityMatrix,
    linkage: Linkage,
) -> Result<Dendrogram, ClusterError> {
    let n = m.n();
    if n < 2 {
        return Err(ClusterError::MatrixTooSmall(n));
    }

    // Full square matrix and per-slot node ids; a merged cluster lives in
    // the slot of its smallest leaf.
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m.get(i, j)).collect())
        .collect();
    let mut node_id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(usize, usize)> = None;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if !alive[j] {
                    continue;
                }
                if dist[i][j] < best_d {
                    best_d = dist[i][j];
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("at least two clusters remain");

        let (left, right) = if node_id[i] < node_id[j] {
            (node_id[i], node_id[j])
        } else {
            (node_id[j], node_id[i])
        };
        let merged_size = size[i] + size[j];
        merges.push(Merge {
            left,
            right,
            height: best_d,
            size: merged_size,
        });

        for x in 0..n {
            if !alive[x] || x == i || x == j {
                continue;
            }
            let updated = match linkage {
                Linkage::Single => dist[i][x].min(dist[j][x]),
                Linkage::Complete => dist[i][x].max(dist[j][x]),
                Linkage::Average => {
                    (size[i] as f64 * dist[i][x] + size[j] as f64 * dist[j][x])
                        / (size[i] + size[j]) as f64
                }
            };
            dist[i][x] = updated;
            dist[x][i] = updated;
        }
        node_id[i] = n + step;
        size[i] = merged_size;
        alive[j] = false;
    }

    Ok(Dendrogram { n, merges })
}

/// Sorts raw chain merges by height (stable, so equal heights keep their
/// discovery order) and relabels clusters with sequential node ids.
fn canonicalize(n: usize, mut raw: Vec<RawMerge>) -> Dendrogram {
    raw.sort_by(|a, b| a.height.partial_cmp(&b.height).expect("finite heights"));

    let mut parent: Vec<usize> = (0..n).collect();
    let mut label: Vec<usize> = (0..n).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut merges = Vec::with_capacity(raw.len());
    for (step, rm) in raw.into_iter().enumerate() {
        let root_a = find(&mut parent, rm.slot_a);
        let root_b = find(&mut parent, rm.slot_b);
        let (left, right) = if label[root_a] < label[root_b] {
            (label[root_a], label[root_b])
        } else {
            (label[root_b], label[root_a])
        };
        merges.push(Merge {
            left,
            right,
            height: rm.height,
            size: rm.size,
        });
        parent[root_b] = root_a;
        label[root_a] = n + step;
    }

    Dendrogram { n, merges }
}

/// Number of bundles for a class of n articles: ⌈√n⌉, clamped to [1, n].
pub fn bundle_count(n: usize) -> usize {
    assert!(n >= 1, "bundle_count requires at least one article");
    let mut k = (n as f64).sqrt().ceil() as usize;
    while k > 1 && (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    while k * k < n {
        k += 1;
    }
    k.clamp(1, n)
}

/// Cuts the dendrogram into exactly k bundles by undoing the k-1 highest
/// merges (among equal heights the later merge counts as higher).
pub fn cut_dendrogram(d: &Dendrogram, k: usize) -> Result<Vec<Bundle>, ClusterError> {
    let n = d.n;
    if k < 1 || k > n {
        return Err(ClusterError::BadK { k, n });
    }

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    // Heights are non-decreasing, so the k-1 highest merges are exactly the
    // trailing records; replay the rest.
    let mut node_root: Vec<usize> = vec![usize::MAX; 2 * n - 1];
    for (leaf, slot) in node_root.iter_mut().enumerate().take(n) {
        *slot = leaf;
    }
    for (step, m) in d.merges.iter().take(n - k).enumerate() {
        let ra = find(&mut parent, node_root[m.left]);
        let rb = find(&mut parent, node_root[m.right]);
        parent[rb] = ra;
        node_root[n + step] = ra;
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        groups.entry(root).or_default().push(leaf);
    }

    let mut bundles: Vec<Bundle> = groups.into_values().map(|members| Bundle { bundle_id: 0, members }).collect();
    bundles.sort_by_key(|b| b.members[0]);
    for (i, bundle) in bundles.iter_mut().enumerate() {
        bundle.bundle_id = i;
    }
    debug_assert_eq!(bundles.len(), k);
    Ok(bundles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::MatrixKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn matrix(n: usize, entries: Vec<f64>) -> ProximityMatrix {
        let labels = (0..n).map(|i| format!("d{i}")).collect();
        ProximityMatrix::from_condensed(labels, MatrixKind::Content, entries).unwrap()
    }

    fn random_matrix(rng: &mut impl Rng, n: usize) -> ProximityMatrix {
        let entries: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random::<f64>()).collect();
        matrix(n, entries)
    }

    fn assert_same_dendrogram(a: &Dendrogram, b: &Dendrogram) {
        assert_eq!(a.leaf_count(), b.leaf_count());
        assert_eq!(a.merges().len(), b.merges().len());
        for (ma, mb) in a.merges().iter().zip(b.merges()) {
            assert_eq!((ma.left, ma.right, ma.size), (mb.left, mb.right, mb.size));
            assert!(
                (ma.height - mb.height).abs() < 1e-9,
                "height {} vs {}",
                ma.height,
                mb.height
            );
        }
    }

    #[test]
    fn two_leaves_single_merge_any_linkage() {
        let m = matrix(2, vec![0.4]);
        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            for dendro in [
                agglomerate(&m, linkage).unwrap(),
                naive_agglomerate(&m, linkage).unwrap(),
            ] {
                assert_eq!(dendro.merges().len(), 1);
                let m0 = &dendro.merges()[0];
                assert_eq!((m0.left, m0.right, m0.size), (0, 1, 2));
                assert_eq!(m0.height, 0.4);
            }
        }
    }

    #[test]
    fn four_point_two_cluster_structure() {
        // d(0,1) = d(2,3) = 0.1, everything across = 0.9.
        let entries = vec![0.1, 0.9, 0.9, 0.9, 0.9, 0.1];
        let m = matrix(4, entries);
        let expected = [(0, 1, 0.1, 2), (2, 3, 0.1, 2), (4, 5, 0.9, 4)];
        for dendro in [
            agglomerate(&m, Linkage::Average).unwrap(),
            naive_agglomerate(&m, Linkage::Average).unwrap(),
        ] {
            dendro.check().unwrap();
            for (merge, (l, r, h, s)) in dendro.merges().iter().zip(expected) {
                assert_eq!((merge.left, merge.right, merge.size), (l, r, s));
                assert!((merge.height - h).abs() < 1e-12);
            }
        }

        let bundles = cut_dendrogram(&agglomerate(&m, Linkage::Average).unwrap(), 2).unwrap();
        assert_eq!(bundles[0].members, [0, 1]);
        assert_eq!(bundles[1].members, [2, 3]);
    }

    #[test]
    fn all_equal_distances_merge_in_tie_break_order() {
        let n = 5;
        let m = matrix(n, vec![0.5; n * (n - 1) / 2]);
        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            let naive = naive_agglomerate(&m, linkage).unwrap();
            // (0,1) first, then the growing cluster absorbs leaves in order.
            let expected = [(0, 1), (2, 5), (3, 6), (4, 7)];
            for (merge, (l, r)) in naive.merges().iter().zip(expected) {
                assert_eq!((merge.left, merge.right), (l, r));
            }
            assert_same_dendrogram(&agglomerate(&m, linkage).unwrap(), &naive);
        }
    }

    #[test]
    fn matrix_too_small() {
        let m = matrix(1, vec![]);
        assert!(matches!(
            agglomerate(&m, Linkage::Average),
            Err(ClusterError::MatrixTooSmall(1))
        ));
        assert!(matches!(
            naive_agglomerate(&m, Linkage::Average),
            Err(ClusterError::MatrixTooSmall(1))
        ));
    }

    #[test]
    fn bundle_count_examples() {
        assert_eq!(bundle_count(16), 4);
        assert_eq!(bundle_count(17), 5);
        assert_eq!(bundle_count(1), 1);
        assert_eq!(bundle_count(2), 2);
        assert_eq!(bundle_count(3), 2);
    }

    #[test]
    fn cut_extremes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 9);
        let dendro = agglomerate(&m, Linkage::Complete).unwrap();
        let all = cut_dendrogram(&dendro, 1).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].members, (0..9).collect::<Vec<_>>());
        let singletons = cut_dendrogram(&dendro, 9).unwrap();
        assert_eq!(singletons.len(), 9);
        assert!(singletons.iter().enumerate().all(|(i, b)| b.members == [i]));
        assert!(matches!(
            cut_dendrogram(&dendro, 0),
            Err(ClusterError::BadK { k: 0, n: 9 })
        ));
        assert!(matches!(
            cut_dendrogram(&dendro, 10),
            Err(ClusterError::BadK { k: 10, n: 9 })
        ));
    }

    #[test]
    fn dendrogram_text_export_format() {
        let m = matrix(3, vec![0.2, 0.8, 0.9]);
        let dendro = agglomerate(&m, Linkage::Single).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        dendro.write_text(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "0 0 1 0.2 2");
        let fields: Vec<&str> = lines[1].split(' ').collect();
        assert_eq!(fields[0], "1");
        assert_eq!(fields[4], "3");
    }

    #[test]
    fn permutation_equivariance_on_distinct_entries() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 8;
        let base = random_matrix(&mut rng, n);
        // rotate leaves by 3
        let perm: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
        let permuted = ProximityMatrix::from_fn(
            (0..n).map(|i| format!("d{i}")).collect(),
            MatrixKind::Content,
            |i, j| base.get(perm[i], perm[j]),
        )
        .unwrap();

        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            let k = bundle_count(n);
            let bundles_base = cut_dendrogram(&agglomerate(&base, linkage).unwrap(), k).unwrap();
            let bundles_perm =
                cut_dendrogram(&agglomerate(&permuted, linkage).unwrap(), k).unwrap();
            let as_sets = |bundles: &[Bundle], map: &dyn Fn(usize) -> usize| {
                let mut sets: Vec<Vec<usize>> = bundles
                    .iter()
                    .map(|b| {
                        let mut v: Vec<usize> = b.members.iter().map(|&m| map(m)).collect();
                        v.sort_unstable();
                        v
                    })
                    .collect();
                sets.sort();
                sets
            };
            assert_eq!(
                as_sets(&bundles_perm, &|leaf| perm[leaf]),
                as_sets(&bundles_base, &|leaf| leaf)
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn chain_matches_naive_oracle(seed in 0u64..10_000, n in 3usize..20) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, n);
            for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
                let fast = agglomerate(&m, linkage).unwrap();
                let naive = naive_agglomerate(&m, linkage).unwrap();
                fast.check().unwrap();
                naive.check().unwrap();
                assert_same_dendrogram(&fast, &naive);
            }
        }

        #[test]
        fn cuts_are_sound_and_nested(seed in 0u64..10_000, n in 2usize..16) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, n);
            let dendro = agglomerate(&m, Linkage::Average).unwrap();
            let mut previous: Option<Vec<Bundle>> = None;
            for k in 1..=n {
                let bundles = cut_dendrogram(&dendro, k).unwrap();
                prop_assert_eq!(bundles.len(), k);
                let mut seen = vec![false; n];
                for b in &bundles {
                    prop_assert!(b.members.windows(2).all(|w| w[0] < w[1]));
                    for &leaf in &b.members {
                        prop_assert!(!seen[leaf]);
                        seen[leaf] = true;
                    }
                }
                prop_assert!(seen.into_iter().all(|s| s));
                if let Some(coarser) = previous {
                    // every finer bundle sits inside one coarser bundle
                    for fine in &bundles {
                        let hits = coarser
                            .iter()
                            .filter(|c| fine.members.iter().all(|m| c.members.contains(m)))
                            .count();
                        prop_assert_eq!(hits, 1);
                    }
                }
                previous = Some(bundles);
            }
        }

        #[test]
        fn heights_monotone_for_all_linkages(seed in 0u64..10_000, n in 2usize..14) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, n);
            for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
                for dendro in [agglomerate(&m, linkage).unwrap(), naive_agglomerate(&m, linkage).unwrap()] {
                    let heights: Vec<f64> = dendro.merges().iter().map(|m| m.height).collect();
                    prop_assert!(heights.windows(2).all(|w| w[0] <= w[1]));
                }
            }
        }

        #[test]
        fn bundle_count_contract(n in 1usize..=1000) {
            let k = bundle_count(n);
            prop_assert!(k >= 1 && k <= n);
            prop_assert!(k * k >= n);
            prop_assert!((k - 1) * (k - 1) < n);
        }
    }
}
