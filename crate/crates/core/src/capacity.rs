//! Nonlinear p-capacity of resistance-weighted trees.
//!
//! The edge above a non-root vertex `u` carries resistance `R_u`, with
//! `R_root = 1`. For `p > 1` let `s = 1/(p-1)` and `q = p/(p-1)`. The
//! p-resistance is `(inf_theta sum_{u != root} R_u^s theta(u)^q)^(p-1)` over
//! unit flows from the root to the deepest generation, and the capacity is its
//! inverse. Along the tree, `phi(u) = R_u capa(t(u))` satisfies
//! `phi(u) = sum_v (R_u/R_v) phi(v) / (1 + phi(v)^s)^(1/s)`; a leaf below the
//! root has `phi = +inf`, and its term is one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::Tree;

/// Largest tree accepted by [`capacity_bruteforce`].
pub const BRUTEFORCE_MAX_VERTICES: usize = 200;

/// Iteration cap of the flow optimizer.
pub const OPTIMIZER_MAX_ITERATIONS: usize = 100_000;

/// Relative objective change that counts as stalled.
pub const OPTIMIZER_REL_TOL: f64 = 1e-12;

/// Consecutive stalled iterations that end the optimization.
pub const OPTIMIZER_PATIENCE: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("capacity exponent p = {0} must exceed 1")]
    InvalidExponent(f64),
    #[error("resistance {value} at generation {generation} must be positive and finite")]
    InvalidResistance { generation: usize, value: f64 },
    #[error("resistance profile covers generations 0..={covered} but the tree has depth {depth}")]
    ProfileTooShort { covered: usize, depth: usize },
    #[error("tree has {0} vertices; the flow optimizer accepts at most {BRUTEFORCE_MAX_VERTICES}")]
    TooLarge(usize),
    #[error("flow needs every leaf at the deepest generation")]
    InternalLeaf,
}

/// Edge resistances by generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResistanceProfile {
    /// `R_u = R^(-|u|)`.
    GeometricBase(f64),
    /// `R_u = r[|u|]`; `r[0]` is ignored and treated as one.
    PerGeneration(Vec<f64>),
}

impl ResistanceProfile {
    fn validate(&self, depth: usize) -> Result<(), CapacityError> {
        match self {
            Self::GeometricBase(r) => {
                if !(r.is_finite() && *r > 0.0) {
                    return Err(CapacityError::InvalidResistance { generation: 1, value: *r });
                }
            }
            Self::PerGeneration(rs) => {
                if rs.len() <= depth {
                    return Err(CapacityError::ProfileTooShort {
                        covered: rs.len().saturating_sub(1),
                        depth,
                    });
                }
                for (k, &r) in rs.iter().enumerate().skip(1) {
                    if !(r.is_finite() && r > 0.0) {
                        return Err(CapacityError::InvalidResistance { generation: k, value: r });
                    }
                }
            }
        }
        Ok(())
    }

    /// `ln R_u` for `|u| = k`.
    pub fn ln_resistance(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            Self::GeometricBase(r) => -(k as f64) * r.ln(),
            Self::PerGeneration(rs) => rs[k].ln(),
        }
    }

    pub fn resistance(&self, k: usize) -> f64 {
        self.ln_resistance(k).exp()
    }

    /// `R_u / R_v` for a parent at generation `k` and its child.
    pub fn ratio(&self, k: usize) -> f64 {
        match self {
            Self::GeometricBase(r) => *r,
            Self::PerGeneration(_) => (self.ln_resistance(k) - self.ln_resistance(k + 1)).exp(),
        }
    }
}

/// Nonnegative flow values per vertex (`theta(root)` is the strength).
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub theta: Vec<f64>,
}

impl Flow {
    /// Largest `|theta(u) - sum_children theta(v)|` over internal vertices.
    pub fn conservation_residual(&self, tree: &Tree) -> f64 {
        (0..tree.len())
            .filter(|&v| !tree.is_leaf(v))
            .map(|v| (self.theta[v] - tree.children(v).map(|c| self.theta[c]).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    pub fn strength(&self) -> f64 {
        self.theta[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub capacity: f64,
    /// `phi(u) = R_u capa(t(u))`; `+inf` on leaves below the root.
    pub phi: Vec<f64>,
    pub witness_flow: Option<Flow>,
    pub p: f64,
    /// False only when the optimizer hit its iteration cap.
    pub converged: bool,
}

/// `s = 1/(p-1)` and `q = p/(p-1)`.
pub fn conjugates(p: f64) -> Result<(f64, f64), CapacityError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(CapacityError::InvalidExponent(p));
    }
    Ok((1.0 / (p - 1.0), p / (p - 1.0)))
}

/// `x / (1 + x^s)^(1/s)`, equal to one at `x = +inf`.
fn series_term(x: f64, s: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x <= 1.0 {
        x * (-(x.powf(s)).ln_1p() / s).exp()
    } else {
        (-(x.powf(-s)).ln_1p() / s).exp()
    }
}

/// Capacity by the leaf-to-root recursion. A single vertex has capacity one.
pub fn capacity_recursion(
    tree: &Tree,
    res: &ResistanceProfile,
    p: f64,
) -> Result<CapacityResult, CapacityError> {
    let (s, _) = conjugates(p)?;
    res.validate(tree.depth())?;
    let mut phi = vec![f64::INFINITY; tree.len()];
    for v in (0..tree.len()).rev() {
        if tree.is_leaf(v) {
            continue;
        }
        let ratio = res.ratio(tree.depth_of(v));
        let sum: f64 = tree.children(v).map(|c| series_term(phi[c], s)).sum();
        phi[v] = ratio * sum;
        debug_assert!(phi[v] <= ratio * tree.out_degree(v) as f64 * (1.0 + 1e-12));
    }
    let capacity = if tree.len() == 1 { 1.0 } else { phi[0] };
    Ok(CapacityResult { capacity, phi, witness_flow: None, p, converged: true })
}

/// Closed form for spherically symmetric trees:
/// `(sum_{k=1}^n (R_k/|t_k|)^s)^(-1/s)`.
///
/// `sizes[k-1] = |t_k|` and `resistances[k-1] = R_k` for `k = 1..=n`.
pub fn capacity_spherical(sizes: &[usize], resistances: &[f64], p: f64) -> Result<f64, CapacityError> {
    let (s, _) = conjugates(p)?;
    assert_eq!(sizes.len(), resistances.len());
    if sizes.is_empty() {
        return Ok(1.0);
    }
    let sum: f64 = sizes
        .iter()
        .zip(resistances)
        .map(|(&t, &r)| (r / t as f64).powf(s))
        .sum();
    Ok(sum.powf(-1.0 / s))
}

/// Flow splitting mass in proportion to deepest-generation descendants.
pub fn uniform_flow(tree: &Tree) -> Result<Flow, CapacityError> {
    if !tree.leaves_only_at_depth() {
        return Err(CapacityError::InternalLeaf);
    }
    let counts = tree.deepest_descendant_counts();
    let total = counts[0] as f64;
    Ok(Flow { theta: counts.iter().map(|&c| c as f64 / total).collect() })
}

/// Resistance estimate `(sum_{u != root} R_u^s theta(u)^q)^(p-1)` of a unit
/// flow; never below the exact p-resistance.
pub fn flow_energy(tree: &Tree, flow: &Flow, res: &ResistanceProfile, p: f64) -> Result<f64, CapacityError> {
    let (s, q) = conjugates(p)?;
    res.validate(tree.depth())?;
    let energy: f64 = (1..tree.len())
        .map(|v| (s * res.ln_resistance(tree.depth_of(v))).exp() * flow.theta[v].powf(q))
        .sum();
    Ok(energy.powf(p - 1.0))
}

/// Capacity by direct minimization of the flow energy.
///
/// The unit flow is parameterized by the fraction `w_v` of its parent's flow
/// that each non-root vertex receives, so conservation holds by construction
/// and the feasible set is a product of simplices, one per internal vertex.
/// Projected gradient descent with a per-simplex curvature scaling and
/// backtracking runs until the relative energy change stays below
/// [`OPTIMIZER_REL_TOL`] for [`OPTIMIZER_PATIENCE`] iterations.
pub fn capacity_bruteforce(
    tree: &Tree,
    res: &ResistanceProfile,
    p: f64,
) -> Result<CapacityResult, CapacityError> {
    let (s, q) = conjugates(p)?;
    res.validate(tree.depth())?;
    if tree.len() > BRUTEFORCE_MAX_VERTICES {
        return Err(CapacityError::TooLarge(tree.len()));
    }
    if !tree.leaves_only_at_depth() {
        return Err(CapacityError::InternalLeaf);
    }
    if tree.len() == 1 {
        return Ok(CapacityResult {
            capacity: 1.0,
            phi: vec![f64::INFINITY],
            witness_flow: Some(Flow { theta: vec![1.0] }),
            p,
            converged: true,
        });
    }
    let size = tree.len();
    let rs: Vec<f64> = (0..size).map(|v| (s * res.ln_resistance(tree.depth_of(v))).exp()).collect();
    let mut w: Vec<f64> = (0..size)
        .map(|v| tree.parent(v).map_or(1.0, |u| 1.0 / tree.out_degree(u) as f64))
        .collect();

    // a[v] = R_v^s + E(v), with E(v) = sum_children w_c^q a[c]; J = E(root).
    let evaluate = |w: &[f64], a: &mut [f64]| -> f64 {
        for v in (0..size).rev() {
            let below: f64 = tree.children(v).map(|c| w[c].powf(q) * a[c]).sum();
            a[v] = if v == 0 { below } else { rs[v] + below };
        }
        a[0]
    };
    let mut a = vec![0.0; size];
    let mut a_trial = vec![0.0; size];
    let mut energy = evaluate(&w, &mut a);
    let mut theta_q = vec![0.0; size];
    let mut trial = w.clone();
    let mut step = 1.0;
    let mut stalled = 0;
    let mut converged = false;
    let mut block: Vec<f64> = Vec::new();

    for _ in 0..OPTIMIZER_MAX_ITERATIONS {
        theta_q[0] = 1.0;
        for v in 1..size {
            theta_q[v] = theta_q[tree.parent(v).unwrap()] * w[v].powf(q);
        }
        // Scaled gradient per simplex: g_v = q w_v^(q-1) a_v divided by the
        // block's largest diagonal curvature q (q-1) w^(q-2) a.
        let mut accepted = false;
        while step > 1e-20 {
            let mut predicted = 0.0;
            for (u, &reach) in theta_q.iter().enumerate() {
                let kids = tree.children(u);
                if kids.len() <= 1 {
                    for c in kids {
                        trial[c] = 1.0;
                    }
                    continue;
                }
                let curvature = kids
                    .clone()
                    .map(|c| q * (q - 1.0) * w[c].powf(q - 2.0) * a[c])
                    .fold(0.0, f64::max);
                block.clear();
                block.extend(kids.clone().map(|c| w[c] - step * q * w[c].powf(q - 1.0) * a[c] / curvature));
                project_simplex(&mut block);
                for (i, c) in kids.enumerate() {
                    trial[c] = block[i];
                    let grad = reach * q * w[c].powf(q - 1.0) * a[c];
                    predicted += grad * (w[c] - trial[c]);
                }
            }
            let new_energy = evaluate(&trial, &mut a_trial);
            if new_energy <= energy - 1e-4 * predicted && new_energy.is_finite() {
                let change = (energy - new_energy) / energy;
                std::mem::swap(&mut w, &mut trial);
                std::mem::swap(&mut a, &mut a_trial);
                energy = new_energy;
                stalled = if change < OPTIMIZER_REL_TOL { stalled + 1 } else { 0 };
                step = (step * 2.0).min(1.0);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent at any step size: first-order stationary.
            converged = true;
            break;
        }
        if stalled >= OPTIMIZER_PATIENCE {
            converged = true;
            break;
        }
    }

    let mut theta = vec![1.0; size];
    for v in 1..size {
        theta[v] = theta[tree.parent(v).unwrap()] * w[v];
    }
    let resistance = energy.powf(p - 1.0);
    Ok(CapacityResult {
        capacity: 1.0 / resistance,
        phi: Vec::new(),
        witness_flow: Some(Flow { theta }),
        p,
        converged,
    })
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(x: &mut [f64]) {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

/// Upper bound on the expected capacity of an inhomogeneous branching process
/// with mean generation sizes `m_0k[k] = M_{0,k}` (`k = 0..=n`) and
/// resistances `R^(-k)`: `(sum_{k=1}^n (R^k M_{0,k})^(-s))^(-1/s)`.
pub fn expected_capacity_upper(m_0k: &[f64], r: f64, p: f64, n: usize) -> Result<f64, CapacityError> {
    let (s, _) = conjugates(p)?;
    if n == 0 {
        return Ok(1.0);
    }
    let sum: f64 = (1..=n)
        .map(|k| (-s * (k as f64 * r.ln() + m_0k[k].ln())).exp())
        .sum();
    Ok(sum.powf(-1.0 / s))
}

/// Capacity scale of the pruned tree: `p_n (tanh(beta) nu)^n` off
/// criticality, `min(n^(-1/(q-1)), p_n)` when `tanh(beta) nu = 1`.
pub fn alpha_n(beta: f64, nu: f64, p_n: f64, n: usize, p: f64) -> Result<f64, CapacityError> {
    let (_, q) = conjugates(p)?;
    let rho = beta.tanh() * nu;
    if (rho - 1.0).abs() < crate::ising::CRITICALITY_TOL {
        Ok((n as f64).powf(-1.0 / (q - 1.0)).min(p_n))
    } else {
        Ok(p_n * rho.powi(n as i32))
    }
}

/// `K_n = sum_{k=1}^n R^(-ks) nu^(-(k min k*) s)`.
pub fn k_n(r: f64, nu: f64, k_star: f64, n: usize, p: f64) -> Result<f64, CapacityError> {
    let (s, _) = conjugates(p)?;
    Ok((1..=n)
        .map(|k| {
            let kk = (k as f64).min(k_star);
            (-s * (k as f64 * r.ln() + kk * nu.ln())).exp()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: ResistanceProfile = ResistanceProfile::GeometricBase(1.0);

    #[test]
    fn recursion_examples() {
        assert_eq!(capacity_recursion(&Tree::singleton(), &UNIT, 2.0).unwrap().capacity, 1.0);
        for n in 1..6 {
            let c = capacity_recursion(&Tree::path(n), &UNIT, 2.0).unwrap().capacity;
            assert!((c - 1.0 / n as f64).abs() < 1e-15);
        }
        let c = capacity_recursion(&Tree::complete(2, 2), &UNIT, 2.0).unwrap().capacity;
        assert!((c - 4.0 / 3.0).abs() < 1e-15);
        assert!(capacity_recursion(&Tree::path(2), &UNIT, 1.0).is_err());
    }

    #[test]
    fn spherical_examples() {
        for p in [1.5, 2.0, 3.0] {
            assert!((capacity_spherical(&[5], &[1.0], p).unwrap() - 5.0).abs() < 1e-13);
        }
        assert!((capacity_spherical(&[2, 4], &[1.0, 1.0], 2.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let r = 0.8f64.tanh();
        let res = ResistanceProfile::GeometricBase(r);
        let t = Tree::complete(2, 3);
        let rs: Vec<f64> = (1..=3).map(|k| res.resistance(k)).collect();
        let closed = capacity_spherical(&[2, 4, 8], &rs, 1.5).unwrap();
        let rec = capacity_recursion(&t, &res, 1.5).unwrap().capacity;
        assert!((closed - rec).abs() < 1e-10);
    }

    #[test]
    fn uniform_flow_examples() {
        let f = uniform_flow(&Tree::path(4)).unwrap();
        assert!(f.theta.iter().all(|&t| t == 1.0));
        let t = Tree::complete(2, 2);
        let f = uniform_flow(&t).unwrap();
        assert_eq!(f.theta, vec![1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25]);
        assert_eq!(f.conservation_residual(&t), 0.0);
    }

    #[test]
    fn energy_examples() {
        let t = Tree::path(6);
        let e = flow_energy(&t, &uniform_flow(&t).unwrap(), &UNIT, 2.0).unwrap();
        assert!((e - 6.0).abs() < 1e-14);
        let t = Tree::complete(2, 2);
        let e = flow_energy(&t, &uniform_flow(&t).unwrap(), &UNIT, 2.0).unwrap();
        assert!((e - 0.75).abs() < 1e-15);
        let c = capacity_recursion(&t, &UNIT, 2.0).unwrap().capacity;
        assert!((e - 1.0 / c).abs() < 1e-15);
    }

    #[test]
    fn bruteforce_examples() {
        let r = capacity_bruteforce(&Tree::path(4), &UNIT, 2.0).unwrap();
        assert!((r.capacity - 0.25).abs() < 1e-8 * 0.25);
        let r = capacity_bruteforce(&Tree::complete(2, 2), &UNIT, 2.0).unwrap();
        assert!(r.converged);
        assert!((r.capacity - 4.0 / 3.0).abs() < 1e-8);
        let t = Tree::spherical(&[3, 1, 2]);
        let odd = Tree::from_parent_array(&[-1, 0, 0, 1, 1, 1, 2, 3, 4, 5, 6, 6]).unwrap();
        for tree in [t, odd] {
            for p in [1.5, 2.0, 3.0] {
                for res in [UNIT, ResistanceProfile::GeometricBase(0.6)] {
                    let exact = capacity_recursion(&tree, &res, p).unwrap().capacity;
                    let bf = capacity_bruteforce(&tree, &res, p).unwrap();
                    assert!(bf.converged);
                    assert!((bf.capacity / exact - 1.0).abs() < 1e-8, "{p}: {} vs {exact}", bf.capacity);
                    let flow = bf.witness_flow.unwrap();
                    assert!(flow.conservation_residual(&tree) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn simplex_projection() {
        let mut x = vec![0.5, 0.5];
        project_simplex(&mut x);
        assert_eq!(x, vec![0.5, 0.5]);
        let mut x = vec![2.0, 0.0, -1.0];
        project_simplex(&mut x);
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
        let mut x = vec![0.4, 0.4, 0.4];
        project_simplex(&mut x);
        assert!(x.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn expectation_bound_examples() {
        let m = [1.0, 3.0];
        assert!((expected_capacity_upper(&m, 0.5, 1.5, 1).unwrap() - 1.5).abs() < 1e-15);
        // Geometric tail: the bound converges as n grows when R nu > 1.
        let nu: f64 = 2.0;
        let m: Vec<f64> = (0..=200).map(|k| nu.powi(k)).collect();
        let a = expected_capacity_upper(&m, 0.8, 2.0, 100).unwrap();
        let b = expected_capacity_upper(&m, 0.8, 2.0, 200).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((a - (1.6 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_examples() {
        let beta = 0.5f64.atanh();
        for n in 1..10 {
            let a = alpha_n(beta, 4.0, 2f64.powi(-(n as i32)), n, 1.5).unwrap();
            assert!((a - 1.0).abs() < 1e-9, "{a}");
        }
        let beta = 0.5f64.atanh();
        let a = alpha_n(beta, 2.0, 1.0 / 16f64.sqrt(), 16, 2.0).unwrap();
        assert!((a - 1.0 / 16.0).abs() < 1e-15);
        let beta = 0.4f64.atanh();
        let a = alpha_n(beta, 2.0, 0.01, 7, 1.5).unwrap();
        assert!((a - 0.01 * 0.8f64.powi(7)).abs() < 1e-15);
    }
}
