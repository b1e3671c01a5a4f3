//! Rooted trees stored as breadth-first arenas.
//!
//! Vertices are numbered in breadth-first order, so every generation is a
//! contiguous id range and the children of a vertex are a contiguous range in
//! the next generation. Bottom-up recursions are then a single reverse sweep
//! over the ids.

use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{OffspringPmf, PmfError};

/// Default cap on the number of vertices a sampler may create.
pub const DEFAULT_POPULATION_CAP: usize = 100_000_000;

/// Default cap on the number of trees [`enumerate_trees`] may yield.
pub const DEFAULT_ENUMERATION_GUARD: usize = 1_000_000;

pub type VertexId = usize;

const NO_PARENT: VertexId = VertexId::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("population cap of {cap} vertices exceeded while building generation {generation} ({size} vertices so far)")]
    PopulationCap { cap: usize, generation: usize, size: usize },
    #[error("enumeration would exceed {guard} trees")]
    EnumerationGuard { guard: usize },
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error("parent array is empty")]
    NoVertices,
    #[error("vertex 0 must be the root (parent -1)")]
    RootNotFirst,
    #[error("vertex {vertex} has invalid parent {parent}")]
    InvalidParent { vertex: usize, parent: i64 },
    #[error("parent array is not in breadth-first order at vertex {vertex}")]
    NotBreadthFirst { vertex: usize },
    #[error("declared depth {declared} does not match the deepest generation {actual}")]
    DepthMismatch { declared: usize, actual: usize },
    #[error("vertex {0} is not in the tree")]
    UnknownVertex(VertexId),
}

/// A rooted tree. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    /// `NO_PARENT` for the root.
    parent: Vec<VertexId>,
    /// `children(v) = child_start[v]..child_start[v + 1]`.
    child_start: Vec<VertexId>,
    depth_of: Vec<u32>,
    /// `generation(k) = generation_start[k]..generation_start[k + 1]`.
    generation_start: Vec<VertexId>,
}

/// Wire format: `{"n": depth, "parent": [-1, 0, 0, ...]}` in breadth-first order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeRepr {
    n: usize,
    parent: Vec<i64>,
}

impl Serialize for Tree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TreeRepr {
            n: self.depth(),
            parent: self.parent.iter().map(|&p| if p == NO_PARENT { -1 } else { p as i64 }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = TreeRepr::deserialize(d)?;
        let tree = Tree::from_parent_array(&repr.parent).map_err(serde::de::Error::custom)?;
        if tree.depth() != repr.n {
            return Err(serde::de::Error::custom(TreeError::DepthMismatch {
                declared: repr.n,
                actual: tree.depth(),
            }));
        }
        Ok(tree)
    }
}

impl Tree {
    /// Builds a tree from per-vertex child counts listed in breadth-first order.
    ///
    /// `counts[v]` is the number of children of vertex `v`; the list must cover
    /// exactly the vertices it generates.
    pub fn from_child_counts(counts: &[usize]) -> Tree {
        let mut b = TreeBuilder::new();
        let mut next = 0;
        while next < b.len() {
            let end = b.len();
            for &c in &counts[next..end] {
                b.push_children(c);
            }
            b.close_generation();
            next = end;
        }
        debug_assert_eq!(b.len(), counts.len());
        b.finish()
    }

    /// Builds a tree from a breadth-first parent array (`-1` for the root).
    pub fn from_parent_array(parent: &[i64]) -> Result<Tree, TreeError> {
        if parent.is_empty() {
            return Err(TreeError::NoVertices);
        }
        if parent[0] != -1 {
            return Err(TreeError::RootNotFirst);
        }
        let n = parent.len();
        let mut counts = vec![0usize; n];
        for (v, &p) in parent.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= v {
                return Err(TreeError::InvalidParent { vertex: v, parent: p });
            }
            if p < parent[v - 1] {
                return Err(TreeError::NotBreadthFirst { vertex: v });
            }
            counts[p as usize] += 1;
        }
        let tree = Tree::from_child_counts(&counts);
        // Child counts pin the shape; the parent array must also agree with the
        // breadth-first numbering (generations in order).
        if let Some(v) = (1..n).find(|&v| tree.parent[v] != parent[v] as usize) {
            return Err(TreeError::NotBreadthFirst { vertex: v });
        }
        Ok(tree)
    }

    /// A single vertex.
    pub fn singleton() -> Tree {
        Tree::from_child_counts(&[0])
    }

    /// A path with `n` edges.
    pub fn path(n: usize) -> Tree {
        Tree::spherical(&vec![1; n])
    }

    /// Complete `d`-ary tree of depth `n`.
    pub fn complete(d: usize, n: usize) -> Tree {
        Tree::spherical(&vec![d; n])
    }

    /// Spherically symmetric tree: every vertex of generation `k` has
    /// `branching[k]` children.
    pub fn spherical(branching: &[usize]) -> Tree {
        let mut b = TreeBuilder::new();
        for &d in branching {
            let size = b.generation_size(b.current_generation());
            for _ in 0..size {
                b.push_children(d);
            }
            b.close_generation();
        }
        b.finish()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> VertexId {
        0
    }

    /// Deepest generation index.
    pub fn depth(&self) -> usize {
        self.generation_start.len() - 2
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        let p = self.parent[v];
        (p != NO_PARENT).then_some(p)
    }

    pub fn children(&self, v: VertexId) -> Range<VertexId> {
        self.child_start[v]..self.child_start[v + 1]
    }

    pub fn out_degree(&self, v: VertexId) -> usize {
        self.child_start[v + 1] - self.child_start[v]
    }

    pub fn is_leaf(&self, v: VertexId) -> bool {
        self.out_degree(v) == 0
    }

    pub fn depth_of(&self, v: VertexId) -> usize {
        self.depth_of[v] as usize
    }

    /// Vertex ids of generation `k` (empty past the depth).
    pub fn generation(&self, k: usize) -> Range<VertexId> {
        if k + 1 >= self.generation_start.len() {
            let end = self.len();
            return end..end;
        }
        self.generation_start[k]..self.generation_start[k + 1]
    }

    pub fn generation_size(&self, k: usize) -> usize {
        self.generation(k).len()
    }

    /// Sizes `|t_0|, ..., |t_n|`.
    pub fn generation_sizes(&self) -> Vec<usize> {
        (0..=self.depth()).map(|k| self.generation_size(k)).collect()
    }

    /// True when every leaf sits in the deepest generation.
    pub fn leaves_only_at_depth(&self) -> bool {
        let n = self.depth();
        (0..self.len()).all(|v| !self.is_leaf(v) || self.depth_of(v) == n)
    }

    /// Ids of the descendants of `v` in generation `at_depth` (a contiguous range).
    pub fn descendants_at(&self, v: VertexId, at_depth: usize) -> Range<VertexId> {
        let d = self.depth_of(v);
        if at_depth < d {
            return 0..0;
        }
        let (mut lo, mut hi) = (v, v + 1);
        for _ in d..at_depth {
            if lo >= hi {
                break;
            }
            lo = self.child_start[lo];
            hi = self.child_start[hi];
        }
        lo..hi
    }

    /// Number of descendants of `v` in generation `at_depth`.
    pub fn leaves_under(&self, v: VertexId, at_depth: usize) -> usize {
        self.descendants_at(v, at_depth).len()
    }

    /// `leaves_under(v, depth())` for every vertex, in one reverse sweep.
    pub fn deepest_descendant_counts(&self) -> Vec<u64> {
        let n = self.depth();
        let mut count = vec![0u64; self.len()];
        for v in (0..self.len()).rev() {
            count[v] = if self.is_leaf(v) {
                (self.depth_of(v) == n) as u64
            } else {
                self.children(v).map(|c| count[c]).sum()
            };
        }
        count
    }

    /// Copy of the subtree rooted at `v`, re-rooted with `v` at depth 0.
    pub fn subtree(&self, v: VertexId) -> Tree {
        let mut b = TreeBuilder::new();
        let (mut lo, mut hi) = (v, v + 1);
        while lo < hi {
            for u in lo..hi {
                b.push_children(self.out_degree(u));
            }
            b.close_generation();
            lo = self.child_start[lo];
            hi = self.child_start[hi];
        }
        b.finish()
    }

    /// Graphviz rendering. `style(v)` may return extra node attributes.
    pub fn to_dot(&self, style: impl Fn(VertexId) -> Option<String>) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=point, width=0.12];\n");
        for v in 0..self.len() {
            match style(v) {
                Some(attrs) => writeln!(out, "  v{v} [{attrs}];").unwrap(),
                None => writeln!(out, "  v{v};").unwrap(),
            }
        }
        for v in 1..self.len() {
            writeln!(out, "  v{} -> v{v};", self.parent[v]).unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Generation-by-generation construction of a breadth-first arena.
#[derive(Debug)]
pub(crate) struct TreeBuilder {
    parent: Vec<VertexId>,
    child_start: Vec<VertexId>,
    depth_of: Vec<u32>,
    generation_start: Vec<VertexId>,
    /// Next vertex of the open generation to receive children.
    cursor: VertexId,
}

impl TreeBuilder {
    pub(crate) fn new() -> Self {
        Self {
            parent: vec![NO_PARENT],
            child_start: Vec::new(),
            depth_of: vec![0],
            generation_start: vec![0, 1],
            cursor: 0,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.parent.len()
    }

    pub(crate) fn current_generation(&self) -> usize {
        self.generation_start.len() - 2
    }

    pub(crate) fn generation_size(&self, k: usize) -> usize {
        self.generation_start[k + 1] - self.generation_start[k]
    }

    /// Gives the next vertex of the current generation `count` children.
    pub(crate) fn push_children(&mut self, count: usize) {
        let v = self.cursor;
        let depth = self.depth_of[v] + 1;
        self.child_start.push(self.parent.len());
        for _ in 0..count {
            self.parent.push(v);
            self.depth_of.push(depth);
        }
        self.cursor += 1;
    }

    /// Ends the current generation; returns the size of the new one.
    pub(crate) fn close_generation(&mut self) -> usize {
        debug_assert_eq!(self.cursor, *self.generation_start.last().unwrap());
        let end = self.parent.len();
        let size = end - self.cursor;
        if size > 0 {
            self.generation_start.push(end);
        }
        size
    }

    pub(crate) fn finish(mut self) -> Tree {
        // Vertices that never received children (the last generation) are leaves.
        while self.child_start.len() < self.parent.len() {
            self.child_start.push(self.parent.len());
        }
        self.child_start.push(self.parent.len());
        Tree {
            parent: self.parent,
            child_start: self.child_start,
            depth_of: self.depth_of,
            generation_start: self.generation_start,
        }
    }
}

/// Galton-Watson tree of depth exactly `n` with offspring law `pmf`.
///
/// The law must put no mass on zero children and must not be a point mass at
/// one, so the tree survives to generation `n` and all leaves sit there.
pub fn sample_gw<R: Rng + ?Sized>(
    pmf: &OffspringPmf,
    n: usize,
    rng: &mut R,
    cap: usize,
) -> Result<Tree, TreeError> {
    pmf.check_supercritical_no_death()?;
    let mut b = TreeBuilder::new();
    for generation in 0..n {
        let size = b.generation_size(generation);
        for _ in 0..size {
            b.push_children(pmf.sample(rng) as usize);
            if b.len() > cap {
                return Err(TreeError::PopulationCap { cap, generation: generation + 1, size: b.len() });
            }
        }
        b.close_generation();
    }
    Ok(b.finish())
}

/// Branching process where vertices of generation `k` reproduce with
/// `pmfs[k]`. Stops early if a generation is empty.
pub fn sample_inhomogeneous_bp<R: Rng + ?Sized>(
    pmfs: &[OffspringPmf],
    rng: &mut R,
    cap: usize,
) -> Result<Tree, TreeError> {
    let mut b = TreeBuilder::new();
    for (generation, pmf) in pmfs.iter().enumerate() {
        let size = b.generation_size(generation);
        for _ in 0..size {
            b.push_children(pmf.sample(rng) as usize);
            if b.len() > cap {
                return Err(TreeError::PopulationCap { cap, generation: generation + 1, size: b.len() });
            }
        }
        if b.close_generation() == 0 {
            break;
        }
    }
    Ok(b.finish())
}

/// Every depth-`n` tree whose internal out-degrees lie in the support of
/// `pmf`, with its Galton-Watson probability `prod_u pmf(d_u)`.
///
/// Only positive-mass degrees are used; degree 0 is skipped so every leaf is
/// at depth `n`. Trees are plane trees (children are ordered).
pub fn enumerate_trees(
    pmf: &OffspringPmf,
    n: usize,
    guard: usize,
) -> Result<Vec<(Tree, f64)>, TreeError> {
    let support: Vec<(usize, f64)> = pmf
        .entries()
        .iter()
        .filter(|e| e.0 > 0 && e.1 > 0.0)
        .map(|e| (e.0 as usize, e.1))
        .collect();
    let mut out = Vec::new();
    let mut counts = Vec::new();
    enumerate_generation(&support, n, 0, 1, &mut counts, 1.0, guard, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_generation(
    support: &[(usize, f64)],
    n: usize,
    generation: usize,
    size: usize,
    counts: &mut Vec<usize>,
    prob: f64,
    guard: usize,
    out: &mut Vec<(Tree, f64)>,
) -> Result<(), TreeError> {
    if generation == n {
        if out.len() >= guard {
            return Err(TreeError::EnumerationGuard { guard });
        }
        let mut all = counts.clone();
        all.extend(std::iter::repeat_n(0, size));
        out.push((Tree::from_child_counts(&all), prob));
        return Ok(());
    }
    // Choose a degree for each of the `size` vertices of this generation.
    let base = counts.len();
    let mut choice = vec![0usize; size];
    loop {
        counts.truncate(base);
        let mut p = prob;
        let mut next = 0;
        for &c in &choice {
            let (d, m) = support[c];
            counts.push(d);
            p *= m;
            next += d;
        }
        enumerate_generation(support, n, generation + 1, next, counts, p, guard, out)?;
        // Odometer increment.
        let mut i = size;
        loop {
            if i == 0 {
                counts.truncate(base);
                return Ok(());
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < support.len() {
                break;
            }
            choice[i] = 0;
        }
    }
}
