//! Property tests for the invariants of every module.

use proptest::prelude::*;

use gwising::capacity::{
    capacity_recursion, capacity_spherical, flow_energy, uniform_flow, Flow, ResistanceProfile,
};
use gwising::distributions::{zero_truncated_binomial, ztb_mixture, OffspringPmf};
use gwising::field::{prune, sample_sparse_sites, survival, FieldAssignment, FieldMode};
use gwising::io::fmt_f64;
use gwising::ising::{g_beta_finite, lyons_field, lyons_root_sparse, magnetization, LogLikelihoodRatio};
use gwising::pruned_law::gamma_profile;
use gwising::rng::{seeded, stream, StreamKey};
use gwising::tree::{Tree, sample_gw};
use rand::Rng;

/// A law on `1..=4` with strictly positive weights from the strategy.
fn pmf_strategy() -> impl Strategy<Value = OffspringPmf> {
    proptest::collection::vec(0.0f64..1.0, 4).prop_map(|w| {
        OffspringPmf::from_weights(w.iter().enumerate().map(|(i, &x)| (i as u32 + 1, x + 0.01)).collect()).unwrap()
    })
}

/// A supercritical law on `1..=3` (never a point mass at one).
fn supercritical_strategy() -> impl Strategy<Value = OffspringPmf> {
    (0.0f64..0.8, 0.05f64..1.0, 0.0f64..1.0)
        .prop_map(|(a, b, c)| OffspringPmf::from_weights(vec![(1, a), (2, b), (3, c)]).unwrap())
}

fn gw_tree(pmf: &OffspringPmf, n: usize, seed: u64) -> Tree {
    sample_gw(pmf, n, &mut seeded(seed), 1 << 20).unwrap()
}

fn random_bits(len: usize, p: f64, seed: u64) -> Vec<bool> {
    let mut rng = seeded(seed);
    (0..len).map(|_| rng.random::<f64>() < p).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pmf_masses_sum_to_one(pmf in pmf_strategy()) {
        let total: f64 = pmf.entries().iter().map(|e| e.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((pmf.generating_function(1.0) - 1.0).abs() < 1e-12);
        prop_assert!(pmf.entries().windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn survival_ratio_below_mean(pmf in pmf_strategy(), t in 1e-9f64..1.0) {
        // F(t) = 1 - G(1 - t) is concave with slope nu at zero.
        let ratio = pmf.survival_ratio(t);
        prop_assert!(ratio <= pmf.mean() * (1.0 + 1e-12));
        prop_assert!(ratio >= 1.0 - 1e-12);
    }

    #[test]
    fn ztb_mixture_is_a_law_with_the_right_mean(pmf in pmf_strategy(), p in 1e-6f64..1.0) {
        let law = ztb_mixture(&pmf, p).unwrap();
        prop_assert_eq!(law.prob(0), 0.0);
        let survive = pmf.survival_transform(p);
        prop_assert!((law.mean() - pmf.mean() * p / survive).abs() < 1e-10 * law.mean());
        let single = zero_truncated_binomial(3, p).unwrap();
        prop_assert!((single.mean() - 3.0 * p / (1.0 - (1.0 - p).powi(3))).abs() < 1e-10);
    }

    #[test]
    fn tree_structure_invariants(pmf in supercritical_strategy(), n in 0usize..6, seed: u64) {
        let t = gw_tree(&pmf, n, seed);
        prop_assert_eq!(t.depth(), n);
        prop_assert!(t.leaves_only_at_depth());
        prop_assert_eq!(t.generation_sizes().iter().sum::<usize>(), t.len());
        for v in 1..t.len() {
            let u = t.parent(v).unwrap();
            prop_assert_eq!(t.depth_of(v), t.depth_of(u) + 1);
            prop_assert!(t.children(u).contains(&v));
        }
        let json = serde_json::to_string(&t).unwrap();
        let back: Tree = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), json);
        prop_assert_eq!(back, t);
    }

    #[test]
    fn pruning_keeps_exactly_the_surviving_vertices(
        pmf in supercritical_strategy(), n in 0usize..6, p in 0.0f64..1.0, seed: u64,
    ) {
        let t = gw_tree(&pmf, n, seed);
        let field = FieldAssignment::from_bits(&t, FieldMode::LeavesOnly, random_bits(t.len(), p, seed ^ 1));
        let y = survival(&t, &field);
        match prune(&t, &field) {
            None => prop_assert_eq!(y.count(), 0),
            Some(pr) => {
                prop_assert_eq!(pr.original.len(), y.count());
                prop_assert!(pr.original.iter().all(|&v| y.y(v)));
                prop_assert_eq!(pr.tree.depth(), n);
                prop_assert!(pr.tree.leaves_only_at_depth());
                let kept_sites = pr.tree.generation(n).all(|w| field.h(pr.original[w]));
                prop_assert!(kept_sites);
            }
        }
    }

    #[test]
    fn sparse_sites_are_sorted_and_in_range(start in 0usize..100, len in 0usize..500, p in 0.0f64..=1.0, seed: u64) {
        let sites = sample_sparse_sites(start..start + len, p, &mut seeded(seed));
        prop_assert!(sites.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sites.iter().all(|&v| v >= start && v < start + len));
    }

    #[test]
    fn g_beta_is_odd_monotone_and_contracting(beta in 0.01f64..3.0, x in -50.0f64..50.0, dx in 0.0f64..5.0) {
        let g = g_beta_finite(beta, x);
        prop_assert!((g + g_beta_finite(beta, -x)).abs() <= 1e-12 * g.abs().max(1.0));
        prop_assert!(g.abs() <= 2.0 * beta + 1e-12);
        prop_assert!(g.abs() <= beta.tanh() * x.abs() * (1.0 + 1e-12) + 1e-300);
        prop_assert!(g_beta_finite(beta, x + dx) >= g - 1e-12);
        let m = magnetization(LogLikelihoodRatio::Finite(x));
        prop_assert!((-1.0..=1.0).contains(&m));
    }

    #[test]
    fn lyons_is_monotone_in_the_field(
        pmf in supercritical_strategy(), n in 1usize..6, beta in 0.05f64..2.0, p in 0.0f64..1.0, seed: u64,
    ) {
        let t = gw_tree(&pmf, n, seed);
        let bits = random_bits(t.len(), p, seed ^ 2);
        let mut more = bits.clone();
        let extra = (seed as usize) % t.len();
        more[extra] = true;
        let f = FieldAssignment::from_bits(&t, FieldMode::WholeTree, bits);
        let g = FieldAssignment::from_bits(&t, FieldMode::WholeTree, more);
        let r = lyons_field(&t, &f, beta);
        let r_more = lyons_field(&t, &g, beta);
        prop_assert!(r.iter().all(|&x| x >= 0.0));
        prop_assert!(r_more[0] >= r[0] - 1e-12);
        let sparse = lyons_root_sparse(&t, &f.sites(), beta);
        prop_assert!((sparse - r[0]).abs() <= 1e-12 * r[0].max(1.0));
    }

    #[test]
    fn gamma_profile_invariants(pmf in pmf_strategy(), p in 1e-6f64..=1.0, n in 0usize..40) {
        let prof = gamma_profile(&pmf, p, n).unwrap();
        let nu = pmf.mean();
        for k in 1..=n {
            prop_assert!(prof.gamma(k - 1) <= prof.gamma(k));
        }
        for k in 0..=n {
            let bound = k as f64 * nu.ln() + p.ln();
            prop_assert!(prof.ln_one_minus_gamma_bar(k) <= bound + 1e-12 * bound.abs().max(1.0));
        }
        let moments = prof.moments(1.5).unwrap();
        for (k, &v) in moments.nu_star.iter().enumerate() {
            prop_assert!(v >= 1.0 - 1e-12 && v <= nu * (1.0 + 1e-12), "nu*_{} = {}", k, v);
        }
        let m = moments.m_star_0k();
        for (k, &mk) in m.iter().enumerate() {
            let closed = prof.m_star_0k_closed_form(k);
            prop_assert!((mk - closed).abs() <= 1e-11 * closed);
        }
    }

    #[test]
    fn q_variance_is_subadditive(
        laws in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..=4),
        q_index in 0usize..2,
    ) {
        let q = [1.5, 2.0][q_index];
        // Each variable takes values 0, 1, 2 with the given weights.
        let laws: Vec<Vec<f64>> = laws
            .iter()
            .map(|w| {
                let w: Vec<f64> = w.iter().map(|x| x + 0.01).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
            .collect();
        let v_q = |law: &[f64]| {
            let mean: f64 = law.iter().enumerate().map(|(v, p)| v as f64 * p).sum();
            let moment: f64 = law.iter().enumerate().map(|(v, p)| (v as f64).powf(q) * p).sum();
            moment - mean.powf(q)
        };
        let mut sum_law = vec![1.0];
        for law in &laws {
            let mut next = vec![0.0; sum_law.len() + law.len() - 1];
            for (i, a) in sum_law.iter().enumerate() {
                for (j, b) in law.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            sum_law = next;
        }
        let lhs = v_q(&sum_law);
        let rhs: f64 = laws.iter().map(|l| v_q(l)).sum();
        prop_assert!(lhs <= rhs + 1e-12, "{} > {}", lhs, rhs);
    }

    #[test]
    fn capacity_recursion_properties(
        pmf in supercritical_strategy(), n in 1usize..6, r in 0.3f64..2.0, scale in 0.1f64..10.0, seed: u64,
    ) {
        let t = gw_tree(&pmf, n, seed);
        let geo = ResistanceProfile::GeometricBase(r);
        let caps: Vec<f64> = [1.5, 2.0, 3.0]
            .iter()
            .map(|&p| capacity_recursion(&t, &geo, p).unwrap().capacity)
            .collect();
        prop_assert!(caps[0] >= caps[1] * (1.0 - 1e-12) && caps[1] >= caps[2] * (1.0 - 1e-12), "{:?}", caps);
        // Scaling every non-root resistance by `scale` divides the capacity by it.
        let per: Vec<f64> = (0..=n).map(|k| geo.resistance(k)).collect();
        let scaled: Vec<f64> = per.iter().enumerate().map(|(k, x)| if k == 0 { *x } else { x * scale }).collect();
        let base = capacity_recursion(&t, &ResistanceProfile::PerGeneration(per), 2.0).unwrap().capacity;
        let c = capacity_recursion(&t, &ResistanceProfile::PerGeneration(scaled), 2.0).unwrap().capacity;
        prop_assert!((c * scale - base).abs() <= 1e-10 * base);
        if r < 1.0 {
            let res = capacity_recursion(&t, &geo, 1.5).unwrap();
            for v in 0..t.len() {
                if !t.is_leaf(v) {
                    prop_assert!(res.phi[v] <= r * t.out_degree(v) as f64 * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn any_unit_flow_dominates_the_resistance(
        pmf in supercritical_strategy(), n in 1usize..5, r in 0.3f64..2.0, p_index in 0usize..3, seed: u64,
    ) {
        let p = [1.5, 2.0, 3.0][p_index];
        let t = gw_tree(&pmf, n, seed);
        let res = ResistanceProfile::GeometricBase(r);
        let exact = 1.0 / capacity_recursion(&t, &res, p).unwrap().capacity;
        // A random unit flow: random splitting fractions at every vertex.
        let mut rng = stream(seed, StreamKey::new(0, 1, 2));
        let mut theta = vec![1.0; t.len()];
        for u in 0..t.len() {
            let kids = t.children(u);
            let w: Vec<f64> = kids.clone().map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            for (c, x) in kids.zip(w) {
                theta[c] = theta[u] * x / s;
            }
        }
        let flow = Flow { theta };
        prop_assert!(flow.conservation_residual(&t) < 1e-12);
        let energy = flow_energy(&t, &flow, &res, p).unwrap();
        prop_assert!(energy >= exact * (1.0 - 1e-10), "{} < {}", energy, exact);
        let uniform = flow_energy(&t, &uniform_flow(&t).unwrap(), &res, p).unwrap();
        prop_assert!(uniform >= exact * (1.0 - 1e-10));
    }

    #[test]
    fn spherical_closed_form_matches_recursion(
        branching in proptest::collection::vec(1usize..4, 1..6), r in 0.3f64..2.0, p_index in 0usize..3,
    ) {
        let p = [1.5, 2.0, 3.0][p_index];
        let t = Tree::spherical(&branching);
        let res = ResistanceProfile::GeometricBase(r);
        let n = branching.len();
        let sizes: Vec<usize> = (1..=n).map(|k| t.generation_size(k)).collect();
        let rs: Vec<f64> = (1..=n).map(|k| res.resistance(k)).collect();
        let closed = capacity_spherical(&sizes, &rs, p).unwrap();
        let rec = capacity_recursion(&t, &res, p).unwrap().capacity;
        prop_assert!((closed - rec).abs() <= 1e-10 * rec);
    }

    #[test]
    fn csv_floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn streams_are_reproducible(master: u64, e in 0u64..8, n in 0u64..64, r in 0u64..1_000_000) {
        let key = StreamKey::new(e, n, r);
        let a: [u64; 4] = stream(master, key).random();
        let b: [u64; 4] = stream(master, key).random();
        prop_assert_eq!(a, b);
        let c: [u64; 4] = stream(master, StreamKey::new(e, n, r + 1)).random();
        prop_assert_ne!(a, c);
    }
}
