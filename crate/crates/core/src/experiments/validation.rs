//! Oracle-equivalence suites: each compares a fast routine with an
//! independent exact computation on many instances.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::capacity::{
    capacity_bruteforce, capacity_recursion, capacity_spherical, flow_energy, uniform_flow, ResistanceProfile,
};
use crate::distributions::OffspringPmf;
use crate::field::{prune, sample_field, FieldAssignment, FieldMode};
use crate::ising::{gibbs_bruteforce, gibbs_bruteforce_plus, g_beta_finite, lyons_field_with, lyons_plus};
use crate::pruned_law::{gamma_profile, pruned_tree_probability};
use crate::rng::{stream, RandomStream, StreamKey};
use crate::tree::{enumerate_trees, sample_gw, Tree, DEFAULT_ENUMERATION_GUARD};

use super::{experiment_id, ExperimentError};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// One line per failing instance.
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(suite: &str, tolerance: f64) -> Self {
        Self { suite: suite.into(), instances: 0, max_error: 0.0, tolerance, pass: true, failures: Vec::new() }
    }

    /// Records one instance with error `err`; `what` describes it on failure.
    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.instances += 1;
        if err.is_nan() || err > self.max_error {
            self.max_error = if err.is_nan() { f64::NAN } else { err };
        }
        if err.is_nan() || err > self.tolerance {
            self.pass = false;
            self.failures.push(format!("{} (error {err:e})", what()));
        }
    }

    fn fail(&mut self, what: String) {
        self.instances += 1;
        self.pass = false;
        self.failures.push(what);
    }
}

/// Whole validation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub master_seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == name)
    }
}

pub const LYONS_TOL: f64 = 1e-10;
pub const PRUNING_TOL: f64 = 1e-12;
pub const PRUNED_LAW_TOL: f64 = 1e-12;
pub const GAMMA_TOL: f64 = 1e-12;
pub const CAPACITY_ORACLE_TOL: f64 = 1e-6;
pub const SPHERICAL_TOL: f64 = 1e-10;
pub const THOMSON_TOL: f64 = 1e-10;

pub const LYONS_INSTANCES: usize = 500;
pub const PRUNING_INSTANCES: usize = 500;
pub const CAPACITY_INSTANCES: usize = 50;

/// Suite ids double as stream ids below the validation experiment.
mod suite_id {
    pub const LYONS: u64 = 0;
    pub const PRUNING: u64 = 1;
    pub const CAPACITY: u64 = 2;
}

fn suite_rng(seed: u64, suite: u64, instance: usize) -> RandomStream {
    stream(seed, StreamKey::new(experiment_id::VALIDATION, suite, instance as u64))
}

/// Random breadth-first tree with at most `max_vertices` vertices and
/// out-degrees at most `max_degree`; leaves may sit at any depth.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, max_vertices: usize, max_degree: usize) -> Tree {
    let mut counts = Vec::new();
    let mut total = 1;
    let mut pending = 1;
    while pending > 0 {
        let room = (max_vertices - total).min(max_degree);
        let d = rng.random_range(0..=room);
        counts.push(d);
        total += d;
        pending += d;
        pending -= 1;
    }
    Tree::from_child_counts(&counts)
}

/// Random Galton-Watson tree (all leaves at the deepest generation) with at
/// most `max_vertices` vertices, out-degrees in `1..=max_degree` and depth in
/// `depths`.
pub fn random_leveled_tree<R: Rng + ?Sized>(
    rng: &mut R,
    max_vertices: usize,
    max_degree: u32,
    depths: std::ops::RangeInclusive<usize>,
) -> Tree {
    loop {
        let weights: Vec<(u32, f64)> = (1..=max_degree).map(|d| (d, rng.random::<f64>() + 0.05)).collect();
        let pmf = OffspringPmf::from_weights(weights).expect("positive weights");
        let n = rng.random_range(depths.clone());
        if let Ok(t) = sample_gw(&pmf, n, rng, max_vertices) {
            if t.len() <= max_vertices {
                return t;
            }
        }
    }
}

const BETAS: [f64; 3] = [0.3, 0.7, 1.2];
const MODES: [FieldMode; 3] = [FieldMode::WholeTree, FieldMode::LeavesOnly, FieldMode::PlusBoundary];

/// Lyons recursion against exhaustive enumeration, with the recursion's
/// `g_beta` replaced by `g` (the identity test passes [`g_beta_finite`]).
pub fn lyons_suite_with(seed: u64, instances: usize, g: impl Fn(f64, f64) -> f64) -> Result<SuiteReport, ExperimentError> {
    let mut report = SuiteReport::new("lyons_vs_bruteforce", LYONS_TOL);
    for i in 0..instances {
        let mut rng = suite_rng(seed, suite_id::LYONS, i);
        let tree = random_tree(&mut rng, 14, 3);
        let beta = BETAS[i % 3];
        let mode = MODES[(i / 3) % 3];
        let p = rng.random::<f64>();
        let field = sample_field(&tree, mode, p, &mut rng);
        let fast = lyons_field_with(&tree, &field, beta, &g)[tree.root()];
        let (_, exact) = gibbs_bruteforce(&tree, &field, beta)?;
        let exact = exact.to_f64();
        report.record((fast - exact).abs(), || {
            format!("instance {i}: {} vertices, beta {beta}, {mode:?}: lyons {fast} vs {exact}", tree.len())
        });
        if !tree.is_leaf(tree.root()) {
            let fast = lyons_plus(&tree, beta)[tree.root()].to_f64();
            let exact = gibbs_bruteforce_plus(&tree, beta)?.1.to_f64();
            report.record((fast - exact).abs(), || {
                format!("instance {i}: plus boundary condition, beta {beta}: lyons {fast} vs {exact}")
            });
        }
    }
    Ok(report)
}

pub fn lyons_suite(seed: u64, instances: usize) -> Result<SuiteReport, ExperimentError> {
    lyons_suite_with(seed, instances, g_beta_finite)
}

/// The leaf-field recursion on a tree equals the plus-boundary-field
/// recursion on its pruned tree, vertex by vertex, and vanishes exactly on
/// pruned-away vertices.
pub fn pruning_suite(seed: u64, instances: usize) -> Result<SuiteReport, ExperimentError> {
    let mut report = SuiteReport::new("pruning_equivalence", PRUNING_TOL);
    for i in 0..instances {
        let mut rng = suite_rng(seed, suite_id::PRUNING, i);
        let tree = random_leveled_tree(&mut rng, 80, 3, 0..=6);
        let beta = BETAS[i % 3];
        let p = rng.random::<f64>();
        let field = sample_field(&tree, FieldMode::LeavesOnly, p, &mut rng);
        let r = lyons_field_with(&tree, &field, beta, g_beta_finite);
        let Some(pruned) = prune(&tree, &field) else {
            let nonzero = r.iter().filter(|&&x| x != 0.0).count();
            if nonzero > 0 {
                report.fail(format!("instance {i}: empty pruned tree but {nonzero} nonzero values"));
            } else {
                report.record(0.0, String::new);
            }
            continue;
        };
        let plus = FieldAssignment::plus_boundary(&pruned.tree);
        let r_star = lyons_field_with(&pruned.tree, &plus, beta, g_beta_finite);
        let map = pruned.forward_map(tree.len());
        let mut err: f64 = 0.0;
        let mut leaked = 0;
        for v in 0..tree.len() {
            match map[v] {
                Some(w) => err = err.max((r[v] - r_star[w]).abs()),
                None if r[v] != 0.0 => leaked += 1,
                None => {}
            }
        }
        if leaked > 0 {
            report.fail(format!("instance {i}: {leaked} pruned-away vertices with nonzero value"));
        } else {
            report.record(err, || format!("instance {i}: {} vertices, beta {beta}", tree.len()));
        }
    }
    Ok(report)
}

/// Exact law of the pruned tree by enumerating every (tree, leaf field) pair,
/// compared with the branching-process product formula on every shape.
pub fn pruned_law_suite() -> Result<SuiteReport, ExperimentError> {
    let mut report = SuiteReport::new("pruned_law_exact", PRUNED_LAW_TOL);
    let pmfs = [OffspringPmf::dirac(2), OffspringPmf::new(vec![(1, 0.5), (2, 0.5)])?];
    for pmf in &pmfs {
        for p in [0.3, 0.5, 0.8] {
            for n in [1, 2] {
                let (max_error, shapes) = pruned_law_gap(pmf, p, n)?;
                report.record(max_error, || format!("{pmf:?}, p {p}, n {n}: {shapes} shapes"));
            }
        }
    }
    Ok(report)
}

/// Largest pointwise gap between enumerated and formula probabilities, and
/// the number of shapes compared.
pub fn pruned_law_gap(pmf: &OffspringPmf, p: f64, n: usize) -> Result<(f64, usize), ExperimentError> {
    let mut exact: HashMap<Option<Tree>, f64> = HashMap::new();
    for (tree, tree_prob) in enumerate_trees(pmf, n, DEFAULT_ENUMERATION_GUARD)? {
        let leaves = tree.generation(n);
        let width = leaves.len();
        for mask in 0u64..(1u64 << width) {
            let ones = mask.count_ones() as i32;
            let field_prob = p.powi(ones) * (1.0 - p).powi(width as i32 - ones);
            let mut bits = vec![false; tree.len()];
            for (j, v) in leaves.clone().enumerate() {
                bits[v] = mask >> j & 1 == 1;
            }
            let field = FieldAssignment::from_bits(&tree, FieldMode::LeavesOnly, bits);
            let key = prune(&tree, &field).map(|pr| pr.tree);
            *exact.entry(key).or_insert(0.0) += tree_prob * field_prob;
        }
    }
    // Every plane tree the pruning could produce: degrees up to the maximum.
    let max_degree = pmf.max_degree();
    let all_degrees = OffspringPmf::from_weights((1..=max_degree).map(|d| (d, 1.0)).collect())?;
    let mut shapes: Vec<Option<Tree>> = vec![None];
    shapes.extend(enumerate_trees(&all_degrees, n, DEFAULT_ENUMERATION_GUARD)?.into_iter().map(|e| Some(e.0)));
    for key in exact.keys() {
        if !shapes.contains(key) {
            shapes.push(key.clone());
        }
    }
    let profile = gamma_profile(pmf, p, n)?;
    let mut max_error: f64 = 0.0;
    let mut total = 0.0;
    for shape in &shapes {
        let formula = pruned_tree_probability(shape.as_ref(), &profile)?;
        total += formula;
        let enumerated = exact.get(shape).copied().unwrap_or(0.0);
        max_error = max_error.max((formula - enumerated).abs());
    }
    max_error = max_error.max((total - 1.0).abs());
    Ok((max_error, shapes.len()))
}

/// Pruning-probability iteration: start value, one-step identity and the
/// binary-tree closed form `gamma_bar_k = (1 - p)^(2^k)` in log space.
pub fn gamma_identity_suite() -> Result<SuiteReport, ExperimentError> {
    let mut report = SuiteReport::new("gamma_iteration", GAMMA_TOL);
    let pmfs = [
        OffspringPmf::dirac(2),
        OffspringPmf::new(vec![(1, 0.5), (3, 0.5)])?,
        OffspringPmf::new(vec![(1, 0.2), (2, 0.5), (4, 0.3)])?,
    ];
    for (idx, pmf) in pmfs.iter().enumerate() {
        for p in [0.1, 0.3, 0.5, 0.9] {
            let profile = gamma_profile(pmf, p, 20)?;
            let mut err = (profile.gamma_bar(0) - (1.0 - p)).abs();
            for k in 1..=20 {
                err = err.max((profile.gamma_bar(k) - pmf.generating_function(profile.gamma_bar(k - 1))).abs());
            }
            if idx == 0 {
                for k in 0..=20 {
                    let ln_closed = (1u64 << k) as f64 * (-p).ln_1p();
                    err = err.max((profile.ln_gamma_bar(k) - ln_closed).abs() / ln_closed.abs());
                    err = err.max((profile.gamma_bar(k) - ln_closed.exp()).abs());
                }
            }
            report.record(err, || format!("{pmf:?}, p {p}"));
        }
    }
    Ok(report)
}

/// Spherically symmetric closed form against the recursion on regular trees.
pub fn spherical_suite() -> Result<SuiteReport, ExperimentError> {
    let mut report = SuiteReport::new("spherical_closed_form", SPHERICAL_TOL);
    for d in 1..=3usize {
        for n in 1..=8usize {
            let tree = Tree::complete(d, n);
            let sizes: Vec<usize> = (1..=n).map(|k| tree.generation_size(k)).collect();
            for r in [0.5, 1.0, 1.0 / 0.8f64.tanh()] {
                let res = ResistanceProfile::GeometricBase(r);
                let resistances: Vec<f64> = (1..=n).map(|k| res.resistance(k)).collect();
                for p in [1.5, 2.0, 3.0] {
                    let closed = capacity_spherical(&sizes, &resistances, p)?;
                    let rec = capacity_recursion(&tree, &res, p)?.capacity;
                    report.record((closed - rec).abs() / rec, || format!("degree {d}, depth {n}, R {r}, p {p}"));
                }
            }
        }
    }
    Ok(report)
}

pub const CAPACITY_EXPONENTS: [f64; 3] = [1.5, 2.0, 3.0];

/// One weighted tree of the capacity corpus.
#[derive(Debug, Clone)]
pub struct CapacityInstance {
    pub tree: Tree,
    pub resistance: ResistanceProfile,
}

/// The random weighted trees shared by the capacity suites.
pub fn capacity_corpus(seed: u64, instances: usize) -> Vec<CapacityInstance> {
    (0..instances)
        .map(|i| {
            let mut rng = suite_rng(seed, suite_id::CAPACITY, i);
            let tree = random_leveled_tree(&mut rng, 200, 3, 1..=7);
            let resistance = if i % 2 == 0 {
                ResistanceProfile::GeometricBase(rng.random_range(0.5..1.5))
            } else {
                ResistanceProfile::PerGeneration((0..=tree.depth()).map(|_| rng.random_range(0.5..2.0)).collect())
            };
            CapacityInstance { tree, resistance }
        })
        .collect()
}

/// Recursion against the convex flow oracle, Thomson dominance of the
/// uniform flow, and monotonicity in the exponent.
pub fn capacity_suites(seed: u64, instances: usize) -> Result<[SuiteReport; 3], ExperimentError> {
    let mut oracle = SuiteReport::new("capacity_recursion_vs_oracle", CAPACITY_ORACLE_TOL);
    let mut thomson = SuiteReport::new("thomson_dominance", THOMSON_TOL);
    let mut monotone = SuiteReport::new("capacity_monotone_in_p", 0.0);
    for (i, inst) in capacity_corpus(seed, instances).iter().enumerate() {
        let mut caps = Vec::new();
        for p in CAPACITY_EXPONENTS {
            let rec = capacity_recursion(&inst.tree, &inst.resistance, p)?.capacity;
            let brute = capacity_bruteforce(&inst.tree, &inst.resistance, p)?;
            oracle.record((rec - brute.capacity).abs() / rec, || {
                format!("instance {i}: {} vertices, p {p}: recursion {rec} vs oracle {}", inst.tree.len(), brute.capacity)
            });
            let exact_resistance = 1.0 / rec;
            let uniform = flow_energy(&inst.tree, &uniform_flow(&inst.tree)?, &inst.resistance, p)?;
            thomson.record((exact_resistance - uniform).max(0.0) / exact_resistance.max(1.0), || {
                format!("instance {i}, p {p}: uniform flow {uniform} below exact resistance {exact_resistance}")
            });
            caps.push(rec);
        }
        // Capacities are compared after rounding away the last few ulps.
        let slack = 1e-12 * caps[0];
        let violation = (caps[1] - caps[0]).max(caps[2] - caps[1]).max(0.0);
        monotone.record((violation - slack).max(0.0), || format!("instance {i}: capacities {caps:?} for p = 1.5, 2, 3"));
    }
    Ok([oracle, thomson, monotone])
}

/// Every oracle suite with its default instance count.
pub fn run_validation(master_seed: u64) -> Result<ValidationReport, ExperimentError> {
    let mut suites = vec![
        lyons_suite(master_seed, LYONS_INSTANCES)?,
        pruning_suite(master_seed, PRUNING_INSTANCES)?,
        pruned_law_suite()?,
        gamma_identity_suite()?,
        spherical_suite()?,
    ];
    suites.extend(capacity_suites(master_seed, CAPACITY_INSTANCES)?);
    Ok(ValidationReport { master_seed, suites })
}
