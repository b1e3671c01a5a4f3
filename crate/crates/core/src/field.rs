//! Bernoulli external fields and the pruning map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tree::{Tree, TreeBuilder, VertexId};

/// Where the Bernoulli field lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Independent bits on every vertex.
    WholeTree,
    /// Independent bits on the deepest generation only.
    LeavesOnly,
    /// All ones on the deepest generation: the plus boundary external field.
    PlusBoundary,
}

/// A `{0, 1}` field on the vertices of one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldAssignment {
    mode: FieldMode,
    h: Vec<bool>,
}

impl FieldAssignment {
    /// Wraps explicit bits, zeroing those outside the mode's vertex set.
    pub fn from_bits(tree: &Tree, mode: FieldMode, mut h: Vec<bool>) -> Self {
        assert_eq!(h.len(), tree.len(), "field length must match the tree");
        let n = tree.depth();
        match mode {
            FieldMode::WholeTree => {}
            FieldMode::LeavesOnly => {
                let first_leaf = tree.generation(n).start;
                h[..first_leaf].fill(false);
            }
            FieldMode::PlusBoundary => {
                let deepest = tree.generation(n);
                for (v, bit) in h.iter_mut().enumerate() {
                    *bit = deepest.contains(&v);
                }
            }
        }
        Self { mode, h }
    }

    /// The all-zero field.
    pub fn zero(tree: &Tree, mode: FieldMode) -> Self {
        Self::from_bits(tree, mode, vec![false; tree.len()])
    }

    /// The plus boundary field.
    pub fn plus_boundary(tree: &Tree) -> Self {
        Self::from_bits(tree, FieldMode::PlusBoundary, vec![false; tree.len()])
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn h(&self, v: VertexId) -> bool {
        self.h[v]
    }

    pub fn bits(&self) -> &[bool] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Vertices carrying a one, in increasing id order.
    pub fn sites(&self) -> Vec<VertexId> {
        self.h.iter().enumerate().filter(|e| *e.1).map(|e| e.0).collect()
    }
}

/// Vertex ids that the field of `mode` may set to one.
pub fn field_support(tree: &Tree, mode: FieldMode) -> std::ops::Range<VertexId> {
    match mode {
        FieldMode::WholeTree => 0..tree.len(),
        FieldMode::LeavesOnly | FieldMode::PlusBoundary => tree.generation(tree.depth()),
    }
}

/// Independent Bernoulli(`p`) bits on the vertex set of `mode`.
///
/// For [`FieldMode::PlusBoundary`] no randomness is drawn.
pub fn sample_field<R: Rng + ?Sized>(
    tree: &Tree,
    mode: FieldMode,
    p: f64,
    rng: &mut R,
) -> FieldAssignment {
    assert!((0.0..=1.0).contains(&p), "field probability {p} outside [0, 1]");
    if mode == FieldMode::PlusBoundary {
        return FieldAssignment::plus_boundary(tree);
    }
    let mut h = vec![false; tree.len()];
    for v in field_support(tree, mode) {
        h[v] = rng.random::<f64>() < p;
    }
    FieldAssignment { mode, h }
}

/// Ids in `range` that carry a one, drawn by geometric gap skipping.
///
/// Same law as independent Bernoulli(`p`) bits on `range`, at a cost
/// proportional to the number of ones rather than the range length.
pub fn sample_sparse_sites<R: Rng + ?Sized>(
    range: std::ops::Range<VertexId>,
    p: f64,
    rng: &mut R,
) -> Vec<VertexId> {
    assert!((0.0..=1.0).contains(&p), "field probability {p} outside [0, 1]");
    if p == 0.0 {
        return Vec::new();
    }
    if p == 1.0 {
        return range.collect();
    }
    let ln_q = (-p).ln_1p();
    let mut out = Vec::new();
    let mut v = range.start;
    loop {
        // Number of failures before the next success.
        let u: f64 = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / ln_q).floor();
        if gap >= (range.end - v) as f64 {
            return out;
        }
        v += gap as usize;
        out.push(v);
        v += 1;
    }
}

/// `Y(u) = 1` iff some deepest-generation descendant of `u` carries a one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivalMap {
    y: Vec<bool>,
}

impl SurvivalMap {
    pub fn y(&self, v: VertexId) -> bool {
        self.y[v]
    }

    pub fn bits(&self) -> &[bool] {
        &self.y
    }

    pub fn count(&self) -> usize {
        self.y.iter().filter(|&&b| b).count()
    }
}

/// Bottom-up survival pass: leaves copy the field (deepest generation only),
/// internal vertices take the OR of their children.
pub fn survival(tree: &Tree, field: &FieldAssignment) -> SurvivalMap {
    let n = tree.depth();
    let mut y = vec![false; tree.len()];
    for v in (0..tree.len()).rev() {
        y[v] = if tree.is_leaf(v) {
            tree.depth_of(v) == n && field.h(v)
        } else {
            tree.children(v).any(|c| y[c])
        };
    }
    SurvivalMap { y }
}

/// A pruned tree together with the id of each kept vertex in the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pruned {
    pub tree: Tree,
    /// `original[new_id] = old_id`.
    pub original: Vec<VertexId>,
}

impl Pruned {
    /// `old_id -> new_id`, `None` for pruned-away vertices.
    pub fn forward_map(&self, original_len: usize) -> Vec<Option<VertexId>> {
        let mut map = vec![None; original_len];
        for (new, &old) in self.original.iter().enumerate() {
            map[old] = Some(new);
        }
        map
    }
}

/// Induced subtree on `{Y = 1}`; `None` when the root itself is pruned.
///
/// Only the bits on the deepest generation matter, so any field mode is
/// accepted; bits on shallower vertices are ignored.
pub fn prune(tree: &Tree, field: &FieldAssignment) -> Option<Pruned> {
    let y = survival(tree, field);
    if !y.y(tree.root()) {
        return None;
    }
    let mut b = TreeBuilder::new();
    let mut original = vec![tree.root()];
    let mut frontier = 0;
    while frontier < original.len() {
        let end = original.len();
        for i in frontier..end {
            let kept: Vec<VertexId> = tree.children(original[i]).filter(|&c| y.y(c)).collect();
            b.push_children(kept.len());
            original.extend(kept);
        }
        b.close_generation();
        frontier = end;
    }
    Some(Pruned { tree: b.finish(), original })
}

/// Graphviz overlay: field ones are circled, surviving vertices are black and
/// pruned vertices grey.
pub fn overlay_dot(tree: &Tree, field: &FieldAssignment) -> String {
    let y = survival(tree, field);
    tree.to_dot(|v| {
        let color = if y.y(v) { "black" } else { "gray70" };
        let attrs = if field.h(v) {
            format!("shape=circle, width=0.2, label=\"\", color={color}, fillcolor=red, style=filled")
        } else {
            format!("color={color}")
        };
        Some(attrs)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn sample_field_extremes() {
        let t = Tree::complete(2, 3);
        let mut rng = seeded(1);
        let f = sample_field(&t, FieldMode::WholeTree, 0.0, &mut rng);
        assert!(f.sites().is_empty());
        let f = sample_field(&t, FieldMode::LeavesOnly, 1.0, &mut rng);
        assert_eq!(f.sites(), (7..15).collect::<Vec<_>>());
        let f = sample_field(&t, FieldMode::PlusBoundary, 0.0, &mut rng);
        assert_eq!(f.sites(), (7..15).collect::<Vec<_>>());
    }

    #[test]
    fn leaf_rate_matches_p() {
        let t = Tree::spherical(&[10, 10]);
        let mut rng = seeded(2);
        let reps = 100_000;
        let mut hits = vec![0u32; t.len()];
        for _ in 0..reps {
            for v in sample_field(&t, FieldMode::LeavesOnly, 0.3, &mut rng).sites() {
                hits[v] += 1;
            }
        }
        let se = (0.3f64 * 0.7 / reps as f64).sqrt();
        for v in t.generation(2) {
            let rate = hits[v] as f64 / reps as f64;
            // 100 leaves at 3 std errors: allow the rare 4-sigma straggler.
            assert!((rate - 0.3).abs() < 4.5 * se, "leaf {v}: {rate}");
        }
        assert!(hits[..11].iter().all(|&h| h == 0));
    }

    #[test]
    fn sparse_sites_match_bernoulli_rate() {
        let mut rng = seeded(5);
        let reps = 20_000;
        let mut hits = vec![0u32; 50];
        let mut total = 0usize;
        for _ in 0..reps {
            let sites = sample_sparse_sites(100..150, 0.2, &mut rng);
            assert!(sites.windows(2).all(|w| w[0] < w[1]));
            for v in sites {
                hits[v - 100] += 1;
                total += 1;
            }
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 10.0).abs() < 0.1, "{mean}");
        let se = (0.2f64 * 0.8 / reps as f64).sqrt();
        for h in hits {
            assert!((h as f64 / reps as f64 - 0.2).abs() < 5.0 * se);
        }
        assert!(sample_sparse_sites(0..10, 0.0, &mut rng).is_empty());
        assert_eq!(sample_sparse_sites(3..6, 1.0, &mut rng), vec![3, 4, 5]);
    }

    #[test]
    fn survival_examples() {
        let t = Tree::complete(2, 2);
        let zero = FieldAssignment::zero(&t, FieldMode::LeavesOnly);
        assert_eq!(survival(&t, &zero).count(), 0);
        let mut bits = vec![false; t.len()];
        bits[3] = true;
        let f = FieldAssignment::from_bits(&t, FieldMode::LeavesOnly, bits);
        let y = survival(&t, &f);
        let set: Vec<_> = (0..t.len()).filter(|&v| y.y(v)).collect();
        assert_eq!(set, vec![0, 1, 3]);
    }

    #[test]
    fn prune_examples() {
        let t = Tree::complete(2, 2);
        let plus = FieldAssignment::plus_boundary(&t);
        let p = prune(&t, &plus).unwrap();
        assert_eq!(p.tree, t);
        assert_eq!(p.original, (0..t.len()).collect::<Vec<_>>());
        assert!(prune(&t, &FieldAssignment::zero(&t, FieldMode::LeavesOnly)).is_none());
        let mut bits = vec![false; t.len()];
        bits[3] = true;
        let f = FieldAssignment::from_bits(&t, FieldMode::LeavesOnly, bits);
        let p = prune(&t, &f).unwrap();
        assert_eq!(p.tree, Tree::path(2));
        assert_eq!(p.original, vec![0, 1, 3]);
        let fwd = p.forward_map(t.len());
        assert_eq!(fwd[3], Some(2));
        assert_eq!(fwd[2], None);
    }

    #[test]
    fn leaves_only_zeroes_internal_bits() {
        let t = Tree::complete(2, 2);
        let f = FieldAssignment::from_bits(&t, FieldMode::LeavesOnly, vec![true; t.len()]);
        assert_eq!(f.sites(), vec![3, 4, 5, 6]);
    }

    #[test]
    fn overlay_marks_field_sites() {
        let t = Tree::complete(2, 1);
        let mut bits = vec![false; 3];
        bits[2] = true;
        let f = FieldAssignment::from_bits(&t, FieldMode::LeavesOnly, bits);
        let dot = overlay_dot(&t, &f);
        assert!(dot.contains("v2 [shape=circle"));
        assert!(dot.contains("v1 [color=gray70]"));
    }
}
