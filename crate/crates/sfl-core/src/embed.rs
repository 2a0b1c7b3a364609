//! Random embedding of a finite metric into a hierarchically
//! well-separated tree (HST), FRT-style.
//!
//! Every point maps to a leaf; all leaves sit at depth `D` and edge weights
//! on any leaf-to-root path are `1, 2, 4, ..., 2^{D-1}`. Tree distances never
//! contract the metric (guaranteed per seed, not just in expectation), and
//! over a random permutation and radius scale the expected stretch of any
//! pair is `O(log N)`.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metric::Metric;

/// Rooted tree with the root at level 0 and all leaves at level `depth`;
/// the edge from a level-l node to its parent weighs `2^{depth-l}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hst {
    depth: usize,
    parent: Vec<Option<usize>>,
    level: Vec<usize>,
    children: Vec<Vec<usize>>,
    leaf_of_point: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HstWire {
    depth: usize,
    parent: Vec<Option<usize>>,
    level_weights: Vec<f64>,
    leaf_map: Vec<usize>,
}

impl Serialize for Hst {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        HstWire {
            depth: self.depth,
            parent: self.parent.clone(),
            level_weights: (1..=self.depth)
                .map(|l| (1u64 << (self.depth - l)) as f64)
                .collect(),
            leaf_map: self.leaf_of_point.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Hst {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = HstWire::deserialize(de)?;
        let expected: Vec<f64> = (1..=wire.depth)
            .map(|l| (1u64 << (wire.depth - l)) as f64)
            .collect();
        if wire.level_weights != expected {
            return Err(serde::de::Error::custom(
                "level weights must be 2^{D-1},...,2,1",
            ));
        }
        Hst::from_parts(wire.depth, wire.parent, wire.leaf_map)
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}

impl Hst {
    /// Builds and validates a tree from its parent array and point->leaf map.
    pub fn from_parts(
        depth: usize,
        parent: Vec<Option<usize>>,
        leaf_of_point: Vec<usize>,
    ) -> Result<Hst> {
        let size = parent.len();
        if size == 0 {
            return Err(Error::domain("tree must have at least one node"));
        }
        let mut children = vec![Vec::new(); size];
        let mut roots = 0usize;
        for (v, &p) in parent.iter().enumerate() {
            match p {
                None => roots += 1,
                Some(p) => {
                    if p >= size {
                        return Err(Error::domain(format!("node {v} has bad parent {p}")));
                    }
                    children[p].push(v);
                }
            }
        }
        if roots != 1 || parent[0].is_some() {
            return Err(Error::domain("tree needs exactly one root, at index 0"));
        }
        // Levels via the parent chain; parents must precede children so a
        // single forward pass suffices (and guarantees acyclicity).
        let mut level = vec![0usize; size];
        for v in 1..size {
            let p = parent[v].unwrap();
            if p >= v {
                return Err(Error::domain("nodes must be ordered parent-first"));
            }
            level[v] = level[p] + 1;
            if level[v] > depth {
                return Err(Error::domain(format!("node {v} deeper than {depth}")));
            }
        }
        for v in 0..size {
            let is_leaf = children[v].is_empty();
            if is_leaf != (level[v] == depth) {
                return Err(Error::domain(format!(
                    "node {v}: leaves and only leaves may sit at depth {depth}"
                )));
            }
        }
        for (p, &leaf) in leaf_of_point.iter().enumerate() {
            if leaf >= size || level[leaf] != depth {
                return Err(Error::domain(format!("point {p} mapped to a non-leaf")));
            }
        }
        Ok(Hst {
            depth,
            parent,
            level,
            children,
            leaf_of_point,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn num_points(&self) -> usize {
        self.leaf_of_point.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent_of(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn level_of(&self, v: usize) -> usize {
        self.level[v]
    }

    pub fn children_of(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.level[v] == self.depth
    }

    pub fn leaf_of_point(&self, p: usize) -> usize {
        self.leaf_of_point[p]
    }

    /// Weight of the edge from `v` to its parent (`v` must not be the root).
    pub fn edge_weight(&self, v: usize) -> f64 {
        debug_assert!(self.level[v] > 0);
        (1u64 << (self.depth - self.level[v])) as f64
    }

    /// Level of the lowest common ancestor of two nodes.
    pub fn lca_level(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.level[a] > self.level[b] {
            a = self.parent[a].unwrap();
        }
        while self.level[b] > self.level[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        self.level[a]
    }

    /// Path length between two nodes (sum of edge weights).
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        let lca = self.lca_level(a, b);
        // Climbing from level l to the LCA sums 2^{D-l} + ... + 2^{D-lca-1},
        // which telescopes to 2^{D-lca} - 2^{D-l}.
        let up = |v: usize| (1u64 << (self.depth - lca)) - (1u64 << (self.depth - self.level[v]));
        (up(a) + up(b)) as f64
    }

    /// Distance between the leaves of two points; 0 iff they share a leaf.
    pub fn tree_distance(&self, a: usize, b: usize) -> f64 {
        self.node_distance(self.leaf_of_point[a], self.leaf_of_point[b])
    }

    /// The full point-to-point tree metric.
    pub fn tree_metric(&self) -> Metric {
        let n = self.leaf_of_point.len();
        let mut d = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let t = self.tree_distance(a, b);
                d[a * n + b] = t;
                d[b * n + a] = t;
            }
        }
        Metric::from_flat(n, d).expect("tree metric is a valid metric")
    }
}

/// Embeds all points of `metric` into a random HST.
///
/// Construction: points at distance exactly 0 collapse to one representative
/// (and share a leaf). A radius scale `beta = 2^u` with `u` uniform in `[0, 1)`
/// and then a uniform permutation `pi` are drawn from a ChaCha8 generator
/// seeded with `seed` (in that order). With `D = ceil(log2 d_max) + 1`, the
/// cluster of a point at internal level `l in {1..D-1}` is owned by the first
/// point in `pi` within distance `beta*2^{D-l-2}`; clusters nest level by level
/// under the whole-set root, and leaves at level `D` are the singleton
/// representatives. Requires all positive distances to exceed 1, which makes
/// non-contraction unconditional: two points sharing a level-`l` cluster are
/// within `beta*2^{D-l-1} < 2(2^{D-l}-1)`, their minimum possible tree distance.
pub fn frt_embed(metric: &Metric, seed: u64) -> Result<Hst> {
    let n = metric.len();
    if n == 0 {
        return Err(Error::domain("cannot embed an empty metric"));
    }
    // Collapse exact-zero distances (an equivalence relation on valid
    // metrics) onto the smallest point id of each class.
    let mut rep_of = vec![0usize; n]; // point -> index into `reps`
    let mut reps: Vec<usize> = Vec::new();
    for p in 0..n {
        match reps.iter().position(|&r| metric.dist(r, p) == 0.0) {
            Some(idx) => rep_of[p] = idx,
            None => {
                rep_of[p] = reps.len();
                reps.push(p);
            }
        }
    }
    let r = reps.len();
    if r == 1 {
        let leaf_map = vec![0; n];
        return Hst::from_parts(0, vec![None], leaf_map);
    }
    let mut d_max = 0.0f64;
    let mut d_min = f64::INFINITY;
    for i in 0..r {
        for j in (i + 1)..r {
            let d = metric.dist(reps[i], reps[j]);
            d_max = d_max.max(d);
            d_min = d_min.min(d);
        }
    }
    if d_min <= 1.0 {
        return Err(Error::domain(format!(
            "embedding requires all positive distances > 1 (got {d_min}); rescale first"
        )));
    }
    let mut depth = 1usize;
    while ((1u64 << (depth - 1)) as f64) < d_max {
        depth += 1;
    }
    // depth = ceil(log2 d_max) + 1 >= 2 since d_max > 1.

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = (2.0f64).powf(rng.gen::<f64>());
    let mut pi: Vec<usize> = (0..r).collect();
    pi.shuffle(&mut rng);

    let mut parent: Vec<Option<usize>> = vec![None];
    let mut leaf_of_rep = vec![usize::MAX; r];
    // frontier: clusters of the current level as (node id, member rep ids).
    let mut frontier: Vec<(usize, Vec<usize>)> = vec![(0, (0..r).collect())];
    for l in 1..=depth {
        let mut next = Vec::new();
        for (node, members) in frontier {
            if l == depth {
                for &rep in &members {
                    leaf_of_rep[rep] = parent.len();
                    parent.push(Some(node));
                }
                continue;
            }
            let rho = beta * (2.0f64).powi(depth as i32 - l as i32 - 2);
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &rep in &members {
                let owner = pi
                    .iter()
                    .position(|&cand| metric.dist(reps[cand], reps[rep]) <= rho)
                    .expect("a point is within any radius of itself");
                groups.entry(owner).or_default().push(rep);
            }
            for (_, group) in groups {
                let id = parent.len();
                parent.push(Some(node));
                next.push((id, group));
            }
        }
        frontier = next;
    }
    let leaf_map: Vec<usize> = (0..n).map(|p| leaf_of_rep[rep_of[p]]).collect();
    let hst = Hst::from_parts(depth, parent, leaf_map)?;
    #[cfg(debug_assertions)]
    for a in 0..n {
        for b in (a + 1)..n {
            debug_assert!(
                hst.tree_distance(a, b) >= metric.dist(a, b) - 1e-9,
                "tree contracted pair ({a},{b})"
            );
        }
    }
    Ok(hst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_metric(n: usize, d: f64) -> Metric {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { d }).collect())
            .collect();
        Metric::new(rows).unwrap()
    }

    #[test]
    fn single_point_tree() {
        let hst = frt_embed(&uniform_metric(1, 0.0), 7).unwrap();
        assert_eq!(hst.depth(), 0);
        assert_eq!(hst.num_nodes(), 1);
        assert_eq!(hst.tree_distance(0, 0), 0.0);
    }

    #[test]
    fn colocated_points_share_a_leaf() {
        let m = Metric::new(vec![
            vec![0.0, 0.0, 4.0],
            vec![0.0, 0.0, 4.0],
            vec![4.0, 4.0, 0.0],
        ])
        .unwrap();
        for seed in 0..20 {
            let hst = frt_embed(&m, seed).unwrap();
            assert_eq!(hst.leaf_of_point(0), hst.leaf_of_point(1));
            assert_eq!(hst.tree_distance(0, 1), 0.0);
            assert!(hst.tree_distance(0, 2) >= 4.0);
        }
    }

    #[test]
    fn all_points_colocated_collapse_to_root() {
        let m = Metric::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let hst = frt_embed(&m, 3).unwrap();
        assert_eq!(hst.depth(), 0);
        assert_eq!(hst.tree_distance(0, 1), 0.0);
    }

    #[test]
    fn rejects_small_distances() {
        assert!(matches!(
            frt_embed(&uniform_metric(3, 1.0), 0),
            Err(Error::Domain(_))
        ));
        assert!(frt_embed(&uniform_metric(3, 1.0 + 1e-9), 0).is_ok());
    }

    #[test]
    fn root_separated_triple_at_depth_three() {
        // d_max = 4 forces depth 3; the level-1/level-2 radii are both below
        // 4, so every pair splits at the root: distance 2*(1+2+4) = 14.
        let m = uniform_metric(3, 4.0);
        for seed in 0..50 {
            let hst = frt_embed(&m, seed).unwrap();
            assert_eq!(hst.depth(), 3);
            for a in 0..3 {
                for b in (a + 1)..3 {
                    assert_eq!(hst.tree_distance(a, b), 14.0);
                }
            }
        }
    }

    #[test]
    fn shape_invariants_hold() {
        let line = [0.0f64, 1.5, 3.0, 6.0, 12.0];
        let rows: Vec<Vec<f64>> = line
            .iter()
            .map(|a| line.iter().map(|b| (a - b).abs()).collect())
            .collect();
        let m = Metric::new(rows).unwrap();
        for seed in 0..200 {
            let hst = frt_embed(&m, seed).unwrap();
            assert_eq!(hst.depth(), 5); // d_max = 12 -> ceil(log2 12) + 1
            for v in 0..hst.num_nodes() {
                if let Some(p) = hst.parent_of(v) {
                    assert_eq!(hst.level_of(v), hst.level_of(p) + 1);
                    assert_eq!(hst.edge_weight(v), (1u64 << (5 - hst.level_of(v))) as f64);
                }
                assert_eq!(hst.children_of(v).is_empty(), hst.is_leaf(v));
            }
            // Non-contraction, exactly.
            for a in 0..5 {
                for b in (a + 1)..5 {
                    assert!(hst.tree_distance(a, b) >= m.dist(a, b));
                }
            }
        }
    }

    #[test]
    fn trees_vary_with_seed() {
        let line = [0.0f64, 1.5, 3.0, 6.0, 12.0];
        let rows: Vec<Vec<f64>> = line
            .iter()
            .map(|a| line.iter().map(|b| (a - b).abs()).collect())
            .collect();
        let m = Metric::new(rows).unwrap();
        let first = frt_embed(&m, 0).unwrap();
        assert_eq!(first, frt_embed(&m, 0).unwrap());
        assert!((1..100).any(|s| frt_embed(&m, s).unwrap() != first));
    }

    #[test]
    fn serde_roundtrip() {
        let m = uniform_metric(4, 3.0);
        let hst = frt_embed(&m, 11).unwrap();
        let json = serde_json::to_string(&hst).unwrap();
        let back: Hst = serde_json::from_str(&json).unwrap();
        assert_eq!(hst, back);

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["level_weights"][0] = serde_json::json!(3.0);
        assert!(serde_json::from_value::<Hst>(value).is_err());
    }

    #[test]
    fn from_parts_validates() {
        // Root with two leaves at depth 1.
        let ok = Hst::from_parts(1, vec![None, Some(0), Some(0)], vec![0; 0]);
        assert!(ok.is_ok());
        // A node at depth 1 with no children while depth = 2.
        assert!(Hst::from_parts(2, vec![None, Some(0)], vec![]).is_err());
        // Two roots.
        assert!(Hst::from_parts(1, vec![None, None], vec![]).is_err());
        // Point mapped to an internal node.
        assert!(Hst::from_parts(1, vec![None, Some(0)], vec![0]).is_err());
    }

    #[test]
    fn node_distance_examples() {
        // depth 2: root(0) -> a(1), b(2); a -> leaves 3,4; b -> leaf 5.
        let hst = Hst::from_parts(
            2,
            vec![None, Some(0), Some(0), Some(1), Some(1), Some(2)],
            vec![3, 4, 5],
        )
        .unwrap();
        assert_eq!(hst.tree_distance(0, 0), 0.0);
        assert_eq!(hst.tree_distance(0, 1), 2.0); // siblings: 1 + 1
        assert_eq!(hst.tree_distance(0, 2), 6.0); // root-separated: 2*(1+2)
        assert_eq!(hst.node_distance(3, 1), 1.0);
        assert_eq!(hst.node_distance(3, 0), 3.0);
        assert_eq!(hst.lca_level(3, 4), 1);
        assert_eq!(hst.lca_level(3, 5), 0);
    }
}
