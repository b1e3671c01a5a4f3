//! The four Monte Carlo and exact scans.

use serde::Serialize;

use crate::capacity::{alpha_n, capacity_recursion, expected_capacity_upper, ResistanceProfile};
use crate::distributions::OffspringPmf;
use crate::field::{field_support, sample_sparse_sites, FieldMode};
use crate::io::{csv, fmt_f64, Cell};
use crate::ising::{lyons_root_sparse, upper_bound_mean_r, upper_bound_mean_r_leaves};
use crate::pruned_law::{fit_c4, fit_c_mu, gamma_profile, k1_star_window, tv_distance, GammaProfile};
use crate::rng::{stream, StreamKey};
use crate::stats::quantile;
use crate::tree::{sample_gw, Tree, DEFAULT_POPULATION_CAP};

use super::{experiment_id, run_replicas, summary_csv, ExperimentConfig, ExperimentError, Mode, SummaryRow};

/// Named output files of a scan: `(file name, contents)`.
pub type OutputFiles = Vec<(String, String)>;

/// Writes every file of a scan atomically into `dir`.
pub fn write_outputs(dir: &std::path::Path, files: &OutputFiles) -> Result<(), ExperimentError> {
    for (name, contents) in files {
        crate::io::write_atomic(&dir.join(name), contents.as_bytes())?;
    }
    Ok(())
}

/// One replica of the magnetization scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnetizationReplica {
    pub n: usize,
    pub p_n: f64,
    pub replica: usize,
    /// Root log-likelihood ratio.
    pub r: f64,
    /// Root magnetization `tanh(r / 2)`.
    pub m: f64,
}

/// Per-replica values and per-depth summaries of the magnetization scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationScan {
    pub replicas: Vec<MagnetizationReplica>,
    pub summary: Vec<SummaryRow>,
}

impl MagnetizationScan {
    /// Summary rows for one quantity, in grid order.
    pub fn rows(&self, quantity: &str) -> Vec<&SummaryRow> {
        self.summary.iter().filter(|r| r.quantity == quantity).collect()
    }

    pub fn files(&self) -> OutputFiles {
        let rows: Vec<Vec<Cell>> = self
            .replicas
            .iter()
            .map(|r| vec![r.n.into(), r.p_n.into(), r.replica.into(), r.r.into(), r.m.into()])
            .collect();
        vec![
            ("magnetization.csv".into(), csv(&["n", "p_n", "replica", "r", "m"], &rows)),
            ("magnetization_summary.csv".into(), summary_csv(&self.summary)),
        ]
    }
}

/// Name of the summary quantity `P(m > eps)`.
pub fn magnetized_quantity(eps: f64) -> String {
    format!("p_m_gt_{eps}")
}

/// The tree is deterministic for a point-mass law, so it is built once.
fn fixed_tree(pmf: &OffspringPmf, n: usize) -> Option<Tree> {
    match pmf.entries() {
        [(d, _)] => Some(Tree::complete(*d as usize, n)),
        _ => None,
    }
}

/// Samples tree and field per replica and records the exact root
/// log-likelihood ratio (for [`FieldMode::PlusBoundary`] the field is one on
/// the whole deepest generation); summaries report mean `r`, mean magnetization and
/// `P(m > eps)` for every threshold, with the analytic mean bound.
pub fn run_magnetization_scan(cfg: &ExperimentConfig, workers: usize) -> Result<MagnetizationScan, ExperimentError> {
    cfg.expect_mode(Mode::Magnetization)?;
    cfg.validate()?;
    let nu = cfg.base_pmf.mean();
    let mut replicas = Vec::new();
    let mut summary = Vec::new();
    for (n_index, (n, p_n)) in cfg.p_grid()?.into_iter().enumerate() {
        let shared = fixed_tree(&cfg.base_pmf, n);
        let results = run_replicas(workers, cfg.replicas, |replica| -> Result<f64, ExperimentError> {
            let mut rng = stream(
                cfg.master_seed,
                StreamKey::new(experiment_id::MAGNETIZATION, n_index as u64, replica as u64),
            );
            let sampled;
            let tree = match &shared {
                Some(t) => t,
                None => {
                    sampled = sample_gw(&cfg.base_pmf, n, &mut rng, DEFAULT_POPULATION_CAP)?;
                    &sampled
                }
            };
            let support = field_support(tree, cfg.field_mode);
            let sites: Vec<usize> = match cfg.field_mode {
                FieldMode::PlusBoundary => support.collect(),
                _ => sample_sparse_sites(support, p_n, &mut rng),
            };
            Ok(lyons_root_sparse(tree, &sites, cfg.beta))
        })?;
        let rs = results.into_iter().collect::<Result<Vec<f64>, _>>()?;
        let ms: Vec<f64> = rs.iter().map(|r| (r / 2.0).tanh()).collect();
        let bound = match cfg.field_mode {
            FieldMode::WholeTree => upper_bound_mean_r(cfg.beta, nu, p_n, n),
            FieldMode::LeavesOnly => upper_bound_mean_r_leaves(cfg.beta, nu, p_n, n),
            FieldMode::PlusBoundary => upper_bound_mean_r_leaves(cfg.beta, nu, 1.0, n),
        };
        summary.push(SummaryRow::mean(n, p_n, "mean_r", &rs, bound));
        summary.push(SummaryRow::mean(n, p_n, "mean_m", &ms, f64::NAN));
        for eps in cfg.epsilons() {
            let hits = ms.iter().filter(|&&m| m > eps).count();
            summary.push(SummaryRow::proportion(n, p_n, magnetized_quantity(eps), hits, ms.len()));
        }
        replicas.extend(rs.iter().zip(&ms).enumerate().map(|(replica, (&r, &m))| MagnetizationReplica {
            n,
            p_n,
            replica,
            r,
            m,
        }));
    }
    Ok(MagnetizationScan { replicas, summary })
}

/// Constants of the pruning-profile bounds, fitted once per offspring law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// `C` with `F(t) >= nu t (1 - C t^(q-1))`.
    pub c_mu: f64,
    /// Rate with `gamma_k <= exp(-c4 (k* - k))` before the transition.
    pub c4: f64,
    pub q: f64,
}

/// Depth of the calibration profile; the field probability is `nu^(-15)`.
pub const CALIBRATION_DEPTH: usize = 30;
/// Fitted `C` is inflated and fitted `c4` deflated by these factors.
pub const C_MU_MARGIN: f64 = 1.05;
pub const C4_MARGIN: f64 = 0.5;

/// Fits the bound constants at `(n, p) = (30, nu^(-15))` and applies the margins.
pub fn calibrate(pmf: &OffspringPmf, q: f64) -> Result<Calibration, ExperimentError> {
    let nu = pmf.mean();
    let profile = gamma_profile(pmf, nu.powi(-15), CALIBRATION_DEPTH)?;
    Ok(Calibration { c_mu: C_MU_MARGIN * fit_c_mu(pmf, q)?, c4: C4_MARGIN * fit_c4(&profile), q })
}

/// Outcome of every pruning-profile inequality for one `(n, p_n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaBoundsReport {
    pub n: usize,
    pub p_n: f64,
    pub k_star: f64,
    pub calibration: Calibration,
    /// End of the geometric-growth window.
    pub k1_star: usize,
    /// `max_k |gamma_bar_k - G(gamma_bar_{k-1})|`.
    pub iteration_max_error: f64,
    /// `gamma_k` nondecreasing in `k`.
    pub monotone: bool,
    /// `1 - gamma_bar_k <= nu^k p_n` for all `k`.
    pub growth_upper_all_k: bool,
    /// `nu^k p_n / 2 <= 1 - gamma_bar_k` for `k <= k1_star`.
    pub growth_lower_window: bool,
    /// `gamma_k <= exp(-c4 (k* - k))` for `k <= k*`.
    pub pre_transition: bool,
    /// `1 - gamma_k <= nu^(-(k - k*))` for `k >= k*`.
    pub post_transition: bool,
    /// `max_k` relative gap between `M*_{0,k}` and `nu^k (1 - gamma_k) / (1 - gamma_0)`.
    pub m_star_identity_max_error: f64,
    /// `1 <= nu*_k <= nu` for all `k`.
    pub nu_star_in_range: bool,
    /// `sigma*_{q,k} <= m_q` for all `k`.
    pub sigma_below_moment: bool,
    pub max_v_kn: f64,
}

impl GammaBoundsReport {
    pub fn all_hold(&self) -> bool {
        self.monotone
            && self.growth_upper_all_k
            && self.growth_lower_window
            && self.pre_transition
            && self.post_transition
            && self.nu_star_in_range
            && self.sigma_below_moment
    }
}

/// Relative slack for comparisons between floating-point quantities that are
/// mathematically ordered.
const ORDER_SLACK: f64 = 1e-12;

/// Checks every profile inequality with the given frozen constants.
pub fn gamma_bounds(profile: &GammaProfile, cal: &Calibration) -> Result<GammaBoundsReport, ExperimentError> {
    let n = profile.n();
    let nu = profile.nu();
    let ks = profile.k_star();
    let pmf = profile.pmf();
    let p = profile.p_n();
    let le = |a: f64, b: f64| a <= b + ORDER_SLACK * b.abs().max(1.0);
    let iteration_max_error = (1..=n)
        .map(|k| (profile.gamma_bar(k) - pmf.generating_function(profile.gamma_bar(k - 1))).abs())
        .fold(0.0, f64::max);
    let monotone = (1..=n).all(|k| profile.gamma(k - 1) <= profile.gamma(k));
    // In logs: nu^k p can exceed the double range only when it exceeds one.
    let ln_growth = |k: usize| k as f64 * nu.ln() + p.ln();
    let growth_upper_all_k = (0..=n).all(|k| le(profile.ln_one_minus_gamma_bar(k), ln_growth(k)));
    let k1_star = k1_star_window(profile, cal.c_mu, cal.q);
    let growth_lower_window =
        (0..=k1_star).all(|k| profile.ln_one_minus_gamma_bar(k) >= ln_growth(k) - std::f64::consts::LN_2 - ORDER_SLACK);
    let pre_transition = (0..=n)
        .filter(|&k| k as f64 <= ks)
        .all(|k| profile.ln_gamma(k) <= -cal.c4 * (ks - k as f64) + ORDER_SLACK);
    let post_transition = (0..=n)
        .filter(|&k| k as f64 >= ks)
        .all(|k| profile.ln_one_minus_gamma(k) <= -(k as f64 - ks) * nu.ln() + ORDER_SLACK);
    let moments = profile.moments(cal.q)?;
    let m = moments.m_star_0k();
    let m_star_identity_max_error = (0..=n)
        .map(|k| {
            let closed = profile.m_star_0k_closed_form(k);
            (m[k] - closed).abs() / closed
        })
        .fold(0.0, f64::max);
    let nu_star_in_range = moments.nu_star.iter().all(|&v| le(1.0, v) && le(v, nu));
    let m_q = pmf.q_moment(cal.q)?;
    let sigma_below_moment = moments.sigma_q_star.iter().all(|&s| le(s, m_q));
    let max_v_kn = moments.v_kn.iter().copied().fold(0.0, f64::max);
    Ok(GammaBoundsReport {
        n,
        p_n: p,
        k_star: ks,
        calibration: *cal,
        k1_star,
        iteration_max_error,
        monotone,
        growth_upper_all_k,
        growth_lower_window,
        pre_transition,
        post_transition,
        m_star_identity_max_error,
        nu_star_in_range,
        sigma_below_moment,
        max_v_kn,
    })
}

/// Profile and bound report for one depth of the gamma scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaScanEntry {
    pub profile: GammaProfile,
    pub report: GammaBoundsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaScan {
    pub calibration: Calibration,
    pub entries: Vec<GammaScanEntry>,
}

/// Table `k, gamma_k, one_minus_gamma_k, nu_star_k, sigma_q_star_k, M_star_0k, k_star`.
///
/// `nu_star_k` and `sigma_q_star_k` are undefined at the last generation and
/// printed as `nan` there.
pub fn gamma_profile_csv(profile: &GammaProfile, q: f64) -> Result<String, ExperimentError> {
    let moments = profile.moments(q)?;
    let m = moments.m_star_0k();
    let n = profile.n();
    let rows: Vec<Vec<Cell>> = (0..=n)
        .map(|k| {
            vec![
                k.into(),
                profile.gamma(k).into(),
                profile.one_minus_gamma(k).into(),
                moments.nu_star.get(k).copied().unwrap_or(f64::NAN).into(),
                moments.sigma_q_star.get(k).copied().unwrap_or(f64::NAN).into(),
                m[k].into(),
                profile.k_star().into(),
            ]
        })
        .collect();
    Ok(csv(
        &["k", "gamma_k", "one_minus_gamma_k", "nu_star_k", "sigma_q_star_k", "M_star_0k", "k_star"],
        &rows,
    ))
}

impl GammaScan {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.report.all_hold())
    }

    pub fn files(&self) -> Result<OutputFiles, ExperimentError> {
        let mut files = Vec::new();
        for e in &self.entries {
            let n = e.profile.n();
            files.push((format!("gamma_n{n}.csv"), gamma_profile_csv(&e.profile, e.report.calibration.q)?));
        }
        let reports: Vec<&GammaBoundsReport> = self.entries.iter().map(|e| &e.report).collect();
        files.push(("gamma_bounds.json".into(), serde_json::to_string_pretty(&reports)? + "\n"));
        Ok(files)
    }
}

/// Exact pruning profiles over the grid with the bound checks.
pub fn run_gamma_scan(cfg: &ExperimentConfig) -> Result<GammaScan, ExperimentError> {
    cfg.expect_mode(Mode::Gamma)?;
    cfg.validate()?;
    let calibration = calibrate(&cfg.base_pmf, cfg.q)?;
    let mut entries = Vec::new();
    for (n, p_n) in cfg.p_grid()? {
        let profile = gamma_profile(&cfg.base_pmf, p_n, n)?;
        let report = gamma_bounds(&profile, &calibration)?;
        entries.push(GammaScanEntry { profile, report });
    }
    Ok(GammaScan { calibration, entries })
}

/// One replica of the capacity scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReplica {
    pub n: usize,
    pub p_n: f64,
    pub replica: usize,
    /// Zero for the empty pruned tree.
    pub capacity: f64,
    pub alpha_n: f64,
}

impl CapacityReplica {
    pub fn ratio(&self) -> f64 {
        self.capacity / self.alpha_n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityScan {
    pub replicas: Vec<CapacityReplica>,
    pub summary: Vec<SummaryRow>,
}

impl CapacityScan {
    pub fn rows(&self, quantity: &str) -> Vec<&SummaryRow> {
        self.summary.iter().filter(|r| r.quantity == quantity).collect()
    }

    pub fn files(&self) -> OutputFiles {
        let rows: Vec<Vec<Cell>> = self
            .replicas
            .iter()
            .map(|r| {
                vec![r.n.into(), r.p_n.into(), r.replica.into(), r.capacity.into(), r.alpha_n.into(), r.ratio().into()]
            })
            .collect();
        vec![
            ("capacity.csv".into(), csv(&["n", "p_n", "replica", "capacity_p", "alpha_n", "ratio"], &rows)),
            ("capacity_summary.csv".into(), summary_csv(&self.summary)),
        ]
    }
}

/// Quantile levels reported for the capacity ratio.
pub const CAPACITY_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

/// Samples pruned trees from their branching-process law and computes the
/// capacity with resistances `tanh(beta)^(-|u|)`.
///
/// The `mean_capacity` bound is `(1 - gamma_0)` times the expectation bound of
/// the surviving process, whose generation means are `M*_{0,k}`.
pub fn run_capacity_scan(cfg: &ExperimentConfig, workers: usize) -> Result<CapacityScan, ExperimentError> {
    cfg.expect_mode(Mode::Capacity)?;
    cfg.validate()?;
    let nu = cfg.base_pmf.mean();
    let r = cfg.beta.tanh();
    let res = ResistanceProfile::GeometricBase(r);
    let mut replicas = Vec::new();
    let mut summary = Vec::new();
    for (n_index, (n, p_n)) in cfg.p_grid()?.into_iter().enumerate() {
        let profile = gamma_profile(&cfg.base_pmf, p_n, n)?;
        let law = profile.law()?;
        let alpha = alpha_n(cfg.beta, nu, p_n, n, cfg.capacity_p)?;
        let results = run_replicas(workers, cfg.replicas, |replica| -> Result<f64, ExperimentError> {
            let mut rng =
                stream(cfg.master_seed, StreamKey::new(experiment_id::CAPACITY, n_index as u64, replica as u64));
            Ok(match law.sample(&mut rng, DEFAULT_POPULATION_CAP)? {
                None => 0.0,
                Some(t) => capacity_recursion(&t, &res, cfg.capacity_p)?.capacity,
            })
        })?;
        let caps = results.into_iter().collect::<Result<Vec<f64>, _>>()?;
        let m_star = profile.moments(cfg.q)?.m_star_0k();
        let upper = profile.one_minus_gamma(0) * expected_capacity_upper(&m_star, r, cfg.capacity_p, n)?;
        let ratios: Vec<f64> = caps.iter().map(|c| c / alpha).collect();
        summary.push(SummaryRow::mean(n, p_n, "mean_capacity", &caps, upper));
        summary.push(SummaryRow::mean(n, p_n, "mean_ratio", &ratios, f64::NAN));
        for level in CAPACITY_QUANTILES {
            let value = quantile(&ratios, level);
            summary.push(SummaryRow {
                n,
                p_n,
                quantity: format!("ratio_q{level}"),
                estimate: value,
                std_error: f64::NAN,
                replicas: ratios.len(),
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                bound: f64::NAN,
            });
        }
        replicas.extend(caps.iter().enumerate().map(|(replica, &capacity)| CapacityReplica {
            n,
            p_n,
            replica,
            capacity,
            alpha_n: alpha,
        }));
    }
    Ok(CapacityScan { replicas, summary })
}

/// Total-variation profile of the pruned offspring laws for one depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvCurve {
    pub n: usize,
    pub p_n: f64,
    pub k_star: f64,
    /// `d_TV(mu_k^*, mu)` for `k = 0..n`.
    pub to_base: Vec<f64>,
    /// `d_TV(mu_k^*, delta_1)` for `k = 0..n`.
    pub to_dirac_one: Vec<f64>,
    /// First `k` with `to_base[k] >= to_dirac_one[k]`, if any.
    pub crossing: Option<usize>,
    /// `2 nu (1 - gamma_{k+1})` for `k = 0..n`.
    pub dirac_one_bound: Vec<f64>,
}

/// Half-width of the window around `k*` where the crossing must fall.
pub const CROSSING_WINDOW: f64 = 5.0;

impl TvCurve {
    pub fn crossing_within_window(&self) -> bool {
        self.crossing.is_some_and(|c| (c as f64 - self.k_star).abs() <= CROSSING_WINDOW)
    }
}

/// Exact distances between each pruned offspring law, the base law and `delta_1`.
pub fn tv_curve(profile: &GammaProfile) -> Result<TvCurve, ExperimentError> {
    let n = profile.n();
    let base = profile.pmf();
    let one = OffspringPmf::dirac(1);
    let mut to_base = Vec::with_capacity(n);
    let mut to_dirac_one = Vec::with_capacity(n);
    let mut dirac_one_bound = Vec::with_capacity(n);
    for k in 0..n {
        let law = profile.mu_star(k)?;
        to_base.push(tv_distance(&law, base));
        to_dirac_one.push(tv_distance(&law, &one));
        dirac_one_bound.push(2.0 * profile.nu() * profile.one_minus_gamma(k + 1));
    }
    let crossing = (0..n).find(|&k| to_base[k] >= to_dirac_one[k]);
    Ok(TvCurve { n, p_n: profile.p_n(), k_star: profile.k_star(), to_base, to_dirac_one, crossing, dirac_one_bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvScan {
    pub curves: Vec<TvCurve>,
}

impl TvScan {
    pub fn files(&self) -> Result<OutputFiles, ExperimentError> {
        let mut files = Vec::new();
        for c in &self.curves {
            let rows: Vec<Vec<Cell>> = (0..c.n)
                .map(|k| vec![k.into(), c.to_base[k].into(), c.to_dirac_one[k].into(), c.dirac_one_bound[k].into()])
                .collect();
            files.push((
                format!("tv_n{}.csv", c.n),
                csv(&["k", "tv_to_base", "tv_to_dirac_one", "dirac_one_bound"], &rows),
            ));
        }
        let mut summary = String::from("n,p_n,k_star,crossing,within_window\n");
        for c in &self.curves {
            let crossing = c.crossing.map_or("none".to_string(), |k| k.to_string());
            summary.push_str(&format!(
                "{},{},{},{},{}\n",
                c.n,
                fmt_f64(c.p_n),
                fmt_f64(c.k_star),
                crossing,
                c.crossing_within_window()
            ));
        }
        files.push(("tv_summary.csv".into(), summary));
        Ok(files)
    }
}

pub fn run_tv_scan(cfg: &ExperimentConfig) -> Result<TvScan, ExperimentError> {
    cfg.expect_mode(Mode::Tv)?;
    cfg.validate()?;
    let curves = cfg
        .p_grid()?
        .into_iter()
        .map(|(n, p_n)| tv_curve(&gamma_profile(&cfg.base_pmf, p_n, n)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TvScan { curves })
}
