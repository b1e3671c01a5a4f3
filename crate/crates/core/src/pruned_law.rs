//! Law of the pruned tree.
//!
//! Prune a depth-`n` Galton-Watson tree by keeping the vertices that have a
//! leaf with field one below them (leaf fields i.i.d. Bernoulli(`p_n`)). A
//! depth-`k` vertex is pruned with probability `gamma_k`, and the pruned tree
//! is an inhomogeneous branching process: the root reproduces with
//! `tilde_mu0` (atom `gamma_0` at zero), generation `k >= 1` with `mu_k^*`.

use rand::Rng;
use thiserror::Error;

use crate::distributions::{ztb_mixture, OffspringPmf, PmfError};
use crate::tree::{sample_inhomogeneous_bp, Tree, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrunedLawError {
    #[error("field probability {0} must lie in (0, 1]")]
    InvalidProbability(f64),
    #[error("generation {k} is out of range for depth {n}")]
    GenerationOutOfRange { k: usize, n: usize },
    #[error("mean of mu_{k}^* is {from_law} but the closed form gives {closed_form}")]
    MeanMismatch { k: usize, from_law: f64, closed_form: f64 },
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Agreement required between the mean of `mu_k^*` and its closed form.
pub const MEAN_TOL: f64 = 1e-12;

/// Pruning probabilities for one `(mu, p_n, n)`.
///
/// `gamma_bar[k]` is the probability that a vertex `k` generations above the
/// leaves is pruned: `gamma_bar[0] = 1 - p_n`, `gamma_bar[k] = G(gamma_bar[k-1])`,
/// and `gamma_k = gamma_bar[n - k]`. The complements and logarithms are
/// propagated separately so that they stay accurate when `1 - gamma_bar` is
/// tiny or `gamma_bar` underflows.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaProfile {
    pmf: OffspringPmf,
    n: usize,
    p_n: f64,
    nu: f64,
    gamma_bar: Vec<f64>,
    one_minus_gamma_bar: Vec<f64>,
    ln_gamma_bar: Vec<f64>,
    ln_one_minus_gamma_bar: Vec<f64>,
}

/// Builds the pruning profile. The law must put no mass on zero children.
pub fn gamma_profile(pmf: &OffspringPmf, p_n: f64, n: usize) -> Result<GammaProfile, PrunedLawError> {
    if !(p_n > 0.0 && p_n <= 1.0) {
        return Err(PrunedLawError::InvalidProbability(p_n));
    }
    let zero = pmf.prob(0);
    if zero > 0.0 {
        return Err(PmfError::MassAtZero(zero).into());
    }
    let mut gamma_bar = vec![1.0 - p_n];
    let mut one_minus = vec![p_n];
    let mut ln_gamma = vec![(-p_n).ln_1p()];
    let mut ln_one_minus = vec![p_n.ln()];
    for k in 1..=n {
        let prev = gamma_bar[k - 1];
        let t = one_minus[k - 1];
        gamma_bar.push(pmf.generating_function(prev));
        one_minus.push(pmf.survival_transform(t).min(1.0));
        ln_gamma.push(pmf.ln_generating_function(ln_gamma[k - 1]));
        // log F(t) = log t + log(F(t)/t); the ratio tends to nu as t -> 0.
        ln_one_minus.push(ln_one_minus[k - 1] + pmf.survival_ratio(t).ln());
    }
    Ok(GammaProfile {
        pmf: pmf.clone(),
        n,
        p_n,
        nu: pmf.mean(),
        gamma_bar,
        one_minus_gamma_bar: one_minus,
        ln_gamma_bar: ln_gamma,
        ln_one_minus_gamma_bar: ln_one_minus,
    })
}

impl GammaProfile {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_n(&self) -> f64 {
        self.p_n
    }

    pub fn pmf(&self) -> &OffspringPmf {
        &self.pmf
    }

    /// Mean offspring of the base law.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Transition generation `n + log(p_n) / log(nu)`, kept real.
    /// Undefined (NaN) when `nu = 1`.
    pub fn k_star(&self) -> f64 {
        if self.nu <= 1.0 {
            return f64::NAN;
        }
        self.n as f64 + self.p_n.ln() / self.nu.ln()
    }

    pub fn gamma_bar(&self, k: usize) -> f64 {
        self.gamma_bar[k]
    }

    pub fn one_minus_gamma_bar(&self, k: usize) -> f64 {
        self.one_minus_gamma_bar[k]
    }

    pub fn ln_gamma_bar(&self, k: usize) -> f64 {
        self.ln_gamma_bar[k]
    }

    pub fn ln_one_minus_gamma_bar(&self, k: usize) -> f64 {
        self.ln_one_minus_gamma_bar[k]
    }

    /// Probability that a depth-`k` vertex is pruned.
    pub fn gamma(&self, k: usize) -> f64 {
        self.gamma_bar[self.n - k]
    }

    pub fn one_minus_gamma(&self, k: usize) -> f64 {
        self.one_minus_gamma_bar[self.n - k]
    }

    pub fn ln_gamma(&self, k: usize) -> f64 {
        self.ln_gamma_bar[self.n - k]
    }

    pub fn ln_one_minus_gamma(&self, k: usize) -> f64 {
        self.ln_one_minus_gamma_bar[self.n - k]
    }

    /// Offspring law of generation `k` of the pruned tree, `0 <= k < n`.
    pub fn mu_star(&self, k: usize) -> Result<OffspringPmf, PrunedLawError> {
        if k >= self.n {
            return Err(PrunedLawError::GenerationOutOfRange { k, n: self.n });
        }
        let survive = self.one_minus_gamma(k + 1);
        if survive == 0.0 {
            // Conditioned on surviving, exactly one child survives in the limit.
            return Ok(OffspringPmf::dirac(1));
        }
        Ok(ztb_mixture(&self.pmf, survive)?)
    }

    /// Root offspring law: atom `gamma_0` at zero, `(1 - gamma_0) mu_0^*` elsewhere.
    pub fn tilde_mu0(&self) -> Result<OffspringPmf, PrunedLawError> {
        let mu0 = self.mu_star(0)?;
        let alive = self.one_minus_gamma(0);
        let mut entries = vec![(0, self.gamma(0))];
        entries.extend(mu0.entries().iter().map(|&(d, m)| (d, alive * m)));
        Ok(OffspringPmf::new(entries)?)
    }

    /// Closed-form mean of `mu_k^*`: `nu (1 - gamma_{k+1}) / (1 - gamma_k)`.
    pub fn nu_star(&self, k: usize) -> f64 {
        self.nu * (self.ln_one_minus_gamma(k + 1) - self.ln_one_minus_gamma(k)).exp()
    }

    /// Closed form `M*_{0,k} = nu^k (1 - gamma_k) / (1 - gamma_0)`.
    pub fn m_star_0k_closed_form(&self, k: usize) -> f64 {
        (k as f64 * self.nu.ln() + self.ln_one_minus_gamma(k) - self.ln_one_minus_gamma(0)).exp()
    }

    /// Means, q-variances and growth factors of the pruned laws.
    pub fn moments(&self, q: f64) -> Result<PrunedMoments, PrunedLawError> {
        let n = self.n;
        let mut nu_star = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        for k in 0..n {
            let law = self.mu_star(k)?;
            let closed_form = self.nu_star(k);
            let from_law = law.mean();
            if (from_law - closed_form).abs() > MEAN_TOL * closed_form.max(1.0) {
                return Err(PrunedLawError::MeanMismatch { k, from_law, closed_form });
            }
            nu_star.push(closed_form);
            sigma.push(law.q_variance(q)?);
        }
        Ok(PrunedMoments::new(q, nu_star, sigma))
    }

    /// Sampler for the pruned tree, with the offspring laws precomputed.
    pub fn law(&self) -> Result<PrunedLaw, PrunedLawError> {
        let mut laws = Vec::with_capacity(self.n);
        if self.n > 0 {
            laws.push(self.tilde_mu0()?);
            for k in 1..self.n {
                laws.push(self.mu_star(k)?);
            }
        }
        Ok(PrunedLaw { laws, empty_probability: self.gamma(0), n: self.n })
    }
}

/// Means, q-variances and growth factors of the pruned offspring laws.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedMoments {
    pub q: f64,
    pub nu_star: Vec<f64>,
    pub sigma_q_star: Vec<f64>,
    /// `ln_m[k] = sum_{i<k} ln nu*_i`, so `M*_{i,j} = exp(ln_m[j] - ln_m[i])`.
    ln_m: Vec<f64>,
    /// `v*_{k,n}` for `k = 0..=n`.
    pub v_kn: Vec<f64>,
}

impl PrunedMoments {
    /// From per-generation means and q-variances of any inhomogeneous process.
    pub fn new(q: f64, nu_star: Vec<f64>, sigma_q_star: Vec<f64>) -> Self {
        let n = nu_star.len();
        let mut ln_m = vec![0.0];
        for &v in &nu_star {
            ln_m.push(ln_m.last().unwrap() + v.ln());
        }
        let v_kn = (0..=n)
            .map(|k| {
                1.0 + (k..n)
                    .map(|i| sigma_q_star[i] * (-(q - 1.0) * (ln_m[i] - ln_m[k])).exp())
                    .sum::<f64>()
            })
            .collect();
        Self { q, nu_star, sigma_q_star, ln_m, v_kn }
    }

    /// `M*_{i,j} = prod_{k=i}^{j-1} nu*_k`, one when `i = j`.
    pub fn m_star(&self, i: usize, j: usize) -> f64 {
        assert!(i <= j, "M*_(i,j) needs i <= j");
        (self.ln_m[j] - self.ln_m[i]).exp()
    }

    /// `M*_{0,k}` for `k = 0..=n`.
    pub fn m_star_0k(&self) -> Vec<f64> {
        self.ln_m.iter().map(|l| l.exp()).collect()
    }
}

/// Precomputed sampler for the pruned tree of one `(mu, p_n, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedLaw {
    /// `[tilde_mu0, mu_1^*, ..., mu_{n-1}^*]`.
    laws: Vec<OffspringPmf>,
    empty_probability: f64,
    n: usize,
}

impl PrunedLaw {
    pub fn offspring_laws(&self) -> &[OffspringPmf] {
        &self.laws
    }

    /// Draws a pruned tree; `None` is the empty tree.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, cap: usize) -> Result<Option<Tree>, PrunedLawError> {
        if self.n == 0 {
            let empty = rng.random::<f64>() < self.empty_probability;
            return Ok((!empty).then(Tree::singleton));
        }
        let tree = sample_inhomogeneous_bp(&self.laws, rng, cap)?;
        Ok((!tree.is_leaf(tree.root())).then_some(tree))
    }
}

/// Samples the pruned tree straight from its branching-process law.
pub fn sample_pruned_direct<R: Rng + ?Sized>(
    pmf: &OffspringPmf,
    p_n: f64,
    n: usize,
    rng: &mut R,
    cap: usize,
) -> Result<Option<Tree>, PrunedLawError> {
    gamma_profile(pmf, p_n, n)?.law()?.sample(rng, cap)
}

/// Exact probability that the pruned tree equals `shape` as a plane tree
/// (`None` is the empty tree).
///
/// Shapes that are not depth-`n` trees with all leaves at depth `n`, or that
/// use a degree outside the support, have probability zero.
pub fn pruned_tree_probability(
    shape: Option<&Tree>,
    profile: &GammaProfile,
) -> Result<f64, PrunedLawError> {
    let n = profile.n();
    let Some(t) = shape else {
        return Ok(profile.gamma(0));
    };
    if t.depth() != n || !t.leaves_only_at_depth() {
        return Ok(0.0);
    }
    if n == 0 {
        return Ok(profile.one_minus_gamma(0));
    }
    let root_law = profile.tilde_mu0()?;
    let mut prob = root_law.prob(t.out_degree(t.root()) as u32);
    for k in 1..n {
        if prob == 0.0 {
            break;
        }
        let law = profile.mu_star(k)?;
        for v in t.generation(k) {
            prob *= law.prob(t.out_degree(v) as u32);
        }
    }
    Ok(prob)
}

/// Total variation distance `(1/2) sum_d |a(d) - b(d)|`.
pub fn tv_distance(a: &OffspringPmf, b: &OffspringPmf) -> f64 {
    let (ea, eb) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < ea.len() || j < eb.len() {
        let da = ea.get(i).map_or(u32::MAX, |e| e.0);
        let db = eb.get(j).map_or(u32::MAX, |e| e.0);
        if da == db {
            sum += (ea[i].1 - eb[j].1).abs();
            i += 1;
            j += 1;
        } else if da < db {
            sum += ea[i].1;
            i += 1;
        } else {
            sum += eb[j].1;
            j += 1;
        }
    }
    (0.5 * sum).min(1.0)
}

/// Grid on `(0, 1]` dense near zero: log-spaced from `1e-8` plus a uniform part.
pub fn unit_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=800).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 800.0)).collect();
    g.extend((1..=2000).map(|i| i as f64 / 2000.0));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Smallest `c` with `G(s) <= 1 + nu (s - 1) + c m_q (1 - s)^q` on the grid.
pub fn fit_generating_function_constant(pmf: &OffspringPmf, q: f64) -> Result<f64, PmfError> {
    let m_q = pmf.q_moment(q)?;
    let nu = pmf.mean();
    Ok(unit_grid()
        .into_iter()
        .map(|t| {
            // With s = 1 - t: G(s) - 1 - nu (s - 1) = nu t - F(t), computed without cancellation.
            (nu * t - pmf.survival_transform(t)) / (m_q * t.powf(q))
        })
        .fold(0.0, f64::max))
}

/// Smallest `C` with `F(t) >= nu t (1 - C t^(q-1))` on the grid.
pub fn fit_c_mu(pmf: &OffspringPmf, q: f64) -> Result<f64, PmfError> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(PmfError::InvalidExponent(q));
    }
    let nu = pmf.mean();
    Ok(unit_grid()
        .into_iter()
        .map(|t| (1.0 - pmf.survival_ratio(t) / nu) / t.powf(q - 1.0))
        .fold(0.0, f64::max))
}

/// End of the window where `1 - gamma_bar_k` grows geometrically:
/// `min{k : sum_{i<=k} C (1 - gamma_bar_i)^(q-1) > 1/2}`, or `n` if never.
pub fn k1_star_window(profile: &GammaProfile, c_mu: f64, q: f64) -> usize {
    let mut acc = 0.0;
    for k in 0..=profile.n() {
        acc += c_mu * profile.one_minus_gamma_bar(k).powf(q - 1.0);
        if acc > 0.5 {
            return k;
        }
    }
    profile.n()
}

/// Largest `c` with `gamma_k <= exp(-c (k* - k))` for every integer `k < k*`.
pub fn fit_c4(profile: &GammaProfile) -> f64 {
    let ks = profile.k_star();
    (0..=profile.n())
        .filter(|&k| (k as f64) < ks)
        .map(|k| -profile.ln_gamma(k) / (ks - k as f64))
        .fold(f64::INFINITY, f64::min)
}
