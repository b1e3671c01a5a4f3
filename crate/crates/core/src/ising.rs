//! Root log-likelihood ratios of the ferromagnetic Ising model on trees.
//!
//! The Gibbs weight of a spin configuration `sigma` is
//! `exp(beta * (sum_{edges} sigma_u sigma_v + sum_v h_v sigma_v))` with
//! coupling one. The log-likelihood ratio of a vertex is
//! `r(u) = log(Z^+(u) / Z^-(u))` over the subtree below `u`, and satisfies
//! `r(u) = 2 beta h_u + sum_children g_beta(r(v))`.

use thiserror::Error;

use crate::field::FieldAssignment;
use crate::numerics::{log_add_exp, LogSumExp};
use crate::tree::{Tree, VertexId};

/// Largest tree accepted by the enumeration oracle.
pub const BRUTEFORCE_MAX_VERTICES: usize = 24;

/// Bisection tolerance for the critical fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Distance from one at which `nu tanh(beta)` counts as critical.
pub const CRITICALITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsingError {
    #[error("tree has {0} vertices; the enumeration oracle accepts at most {BRUTEFORCE_MAX_VERTICES}")]
    TooLarge(usize),
    #[error("field covers {field} vertices but the tree has {tree}")]
    FieldMismatch { field: usize, tree: usize },
}

/// A log-likelihood ratio: a finite real or the plus-boundary value `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLikelihoodRatio {
    Finite(f64),
    PlusInfinity,
}

impl LogLikelihoodRatio {
    pub fn is_infinite(self) -> bool {
        matches!(self, Self::PlusInfinity)
    }

    /// The value as a float, `f64::INFINITY` for the infinite tag.
    pub fn to_f64(self) -> f64 {
        match self {
            Self::Finite(x) => x,
            Self::PlusInfinity => f64::INFINITY,
        }
    }
}

impl From<f64> for LogLikelihoodRatio {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            Self::PlusInfinity
        } else {
            Self::Finite(x)
        }
    }
}

/// `g_beta(x) = log((e^{2 beta} e^x + 1) / (e^{2 beta} + e^x))`, with
/// `g_beta(+inf) = 2 beta`.
pub fn g_beta(beta: f64, x: LogLikelihoodRatio) -> f64 {
    match x {
        LogLikelihoodRatio::PlusInfinity => 2.0 * beta,
        LogLikelihoodRatio::Finite(x) => g_beta_finite(beta, x),
    }
}

/// `g_beta` on a finite argument.
///
/// The map is symmetric in `(2 beta, x)` and equals
/// `ln1p((e^a - 1)(e^x - 1) / (e^a + e^x))`; writing it with the smaller
/// argument in `expm1` keeps full relative accuracy near zero and avoids
/// overflow for large arguments.
pub fn g_beta_finite(beta: f64, x: f64) -> f64 {
    let a = 2.0 * beta;
    let (small, big) = if a <= x { (a, x) } else { (x, a) };
    if small > 30.0 {
        return log_add_exp(a + x, 0.0) - log_add_exp(a, x);
    }
    let t = small.exp_m1() * -(-big).exp_m1() / (1.0 + (small - big).exp());
    t.ln_1p()
}

/// Magnetization `tanh(r / 2)`; `+inf` maps to one.
pub fn magnetization(r: LogLikelihoodRatio) -> f64 {
    match r {
        LogLikelihoodRatio::PlusInfinity => 1.0,
        LogLikelihoodRatio::Finite(x) => (x / 2.0).tanh(),
    }
}

/// Plus boundary recursion: leaves are `+inf`, every other vertex sums
/// `g_beta` over its children.
pub fn lyons_plus(tree: &Tree, beta: f64) -> Vec<LogLikelihoodRatio> {
    let mut r = vec![LogLikelihoodRatio::PlusInfinity; tree.len()];
    for v in (0..tree.len()).rev() {
        if !tree.is_leaf(v) {
            let s = tree.children(v).map(|c| g_beta(beta, r[c])).sum();
            r[v] = LogLikelihoodRatio::Finite(s);
        }
    }
    r
}

/// Field recursion `r(u) = 2 beta h_u + sum_children g_beta(r(v))`.
pub fn lyons_field(tree: &Tree, field: &FieldAssignment, beta: f64) -> Vec<f64> {
    lyons_field_with(tree, field, beta, g_beta_finite)
}

/// [`lyons_field`] with a caller-supplied edge map in place of `g_beta`.
pub fn lyons_field_with(
    tree: &Tree,
    field: &FieldAssignment,
    beta: f64,
    g: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    assert_eq!(field.len(), tree.len(), "field length must match the tree");
    let mut r = vec![0.0; tree.len()];
    for v in (0..tree.len()).rev() {
        let own = if field.h(v) { 2.0 * beta } else { 0.0 };
        r[v] = own + tree.children(v).map(|c| g(beta, r[c])).sum::<f64>();
    }
    r
}

/// Root value of [`lyons_field`] for a field given by its sorted one-sites.
///
/// Only ancestors of field sites can be nonzero (`g_beta(0) = 0`), so the
/// sweep touches `O(sites * depth)` vertices instead of the whole tree.
pub fn lyons_root_sparse(tree: &Tree, sites: &[VertexId], beta: f64) -> f64 {
    debug_assert!(sites.windows(2).all(|w| w[0] < w[1]));
    let n = tree.depth();
    let two_beta = 2.0 * beta;
    // Sites grouped by generation; sorted ids keep each group sorted.
    let mut by_depth: Vec<Vec<VertexId>> = vec![Vec::new(); n + 1];
    for &v in sites {
        by_depth[tree.depth_of(v)].push(v);
    }
    let mut level: Vec<(VertexId, f64)> = by_depth[n].iter().map(|&v| (v, two_beta)).collect();
    for k in (1..=n).rev() {
        // Collapse children onto parents; parents of a sorted level are sorted.
        let mut up: Vec<(VertexId, f64)> = Vec::with_capacity(level.len());
        for &(v, r) in &level {
            let p = tree.parent(v).expect("non-root vertex");
            let contribution = g_beta_finite(beta, r);
            match up.last_mut() {
                Some(last) if last.0 == p => last.1 += contribution,
                _ => up.push((p, contribution)),
            }
        }
        level = merge_sites(up, &by_depth[k - 1], two_beta);
    }
    level.first().map_or(0.0, |e| e.1)
}

fn merge_sites(level: Vec<(VertexId, f64)>, sites: &[VertexId], two_beta: f64) -> Vec<(VertexId, f64)> {
    if sites.is_empty() {
        return level;
    }
    let mut out = Vec::with_capacity(level.len() + sites.len());
    let mut i = 0;
    for &s in sites {
        while i < level.len() && level[i].0 < s {
            out.push(level[i]);
            i += 1;
        }
        if i < level.len() && level[i].0 == s {
            out.push((s, level[i].1 + two_beta));
            i += 1;
        } else {
            out.push((s, two_beta));
        }
    }
    out.extend_from_slice(&level[i..]);
    out
}

/// Exact root magnetization and log-likelihood ratio by enumerating every
/// spin configuration.
pub fn gibbs_bruteforce(
    tree: &Tree,
    field: &FieldAssignment,
    beta: f64,
) -> Result<(f64, LogLikelihoodRatio), IsingError> {
    if field.len() != tree.len() {
        return Err(IsingError::FieldMismatch { field: field.len(), tree: tree.len() });
    }
    let h: Vec<f64> = (0..tree.len()).map(|v| if field.h(v) { 1.0 } else { 0.0 }).collect();
    enumerate(tree, beta, &h, &vec![false; tree.len()])
}

/// Oracle for [`lyons_plus`]: every leaf spin is hard-fixed to `+1`.
pub fn gibbs_bruteforce_plus(tree: &Tree, beta: f64) -> Result<(f64, LogLikelihoodRatio), IsingError> {
    let fixed: Vec<bool> = (0..tree.len()).map(|v| tree.is_leaf(v)).collect();
    enumerate(tree, beta, &vec![0.0; tree.len()], &fixed)
}

/// Log-space partition sums split by the root spin. Vertices flagged in
/// `fixed_plus` are pinned to `+1`.
fn enumerate(
    tree: &Tree,
    beta: f64,
    h: &[f64],
    fixed_plus: &[bool],
) -> Result<(f64, LogLikelihoodRatio), IsingError> {
    let size = tree.len();
    if size > BRUTEFORCE_MAX_VERTICES {
        return Err(IsingError::TooLarge(size));
    }
    let free: Vec<VertexId> = (0..size).filter(|&v| !fixed_plus[v]).collect();
    let mut plus = LogSumExp::default();
    let mut minus = LogSumExp::default();
    let mut spin = vec![1.0f64; size];
    for mask in 0u64..(1u64 << free.len()) {
        for (bit, &v) in free.iter().enumerate() {
            spin[v] = if mask >> bit & 1 == 1 { -1.0 } else { 1.0 };
        }
        let mut energy = 0.0;
        for v in 0..size {
            energy += h[v] * spin[v];
            if let Some(p) = tree.parent(v) {
                energy += spin[p] * spin[v];
            }
        }
        if spin[0] > 0.0 {
            plus.push(beta * energy);
        } else {
            minus.push(beta * energy);
        }
    }
    let (lp, lm) = (plus.value(), minus.value());
    if lm == f64::NEG_INFINITY {
        return Ok((1.0, LogLikelihoodRatio::PlusInfinity));
    }
    let r = lp - lm;
    Ok(((r / 2.0).tanh(), LogLikelihoodRatio::Finite(r)))
}

/// Analytic upper bound on the mean root log-likelihood ratio when every
/// vertex of a depth-`n` tree with mean offspring `nu` carries an independent
/// Bernoulli(`p_n`) field.
///
/// Off criticality this is `2 beta p_n sum_{k=0}^n (nu tanh beta)^k`; at
/// criticality it is `max(2 beta p_n, x_n)` with `x_n` the fixed point of
/// `x -> 2 beta p_n + nu g_beta(x)`.
pub fn upper_bound_mean_r(beta: f64, nu: f64, p_n: f64, n: usize) -> f64 {
    if p_n == 0.0 {
        return 0.0;
    }
    let rho = nu * beta.tanh();
    if (rho - 1.0).abs() < CRITICALITY_TOL {
        (2.0 * beta * p_n).max(critical_fixed_point(beta, nu, p_n))
    } else {
        let series: f64 = (0..=n).map(|k| rho.powi(k as i32)).sum();
        2.0 * beta * p_n * series
    }
}

/// Analytic upper bound on the mean root log-likelihood ratio when only the
/// deepest generation carries Bernoulli(`p_n`) fields: `2 beta p_n (nu tanh beta)^n`.
pub fn upper_bound_mean_r_leaves(beta: f64, nu: f64, p_n: f64, n: usize) -> f64 {
    2.0 * beta * p_n * (nu * beta.tanh()).powi(n as i32)
}

/// Positive fixed point of `f(x) = 2 beta p + nu g_beta(x)` by bisection.
pub fn critical_fixed_point(beta: f64, nu: f64, p: f64) -> f64 {
    let f = |x: f64| 2.0 * beta * p + nu * g_beta_finite(beta, x);
    let mut lo = 0.0;
    let mut hi = 1.0 + 2.0 * beta * p;
    while f(hi) >= hi {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > FIXED_POINT_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
