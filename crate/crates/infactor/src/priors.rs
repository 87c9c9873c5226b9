//! Forward sampling of the SIS, MGP, and CUSP priors and Monte Carlo
//! verification of their shrinkage properties.
//!
//! The structured increasing shrinkage (SIS) process puts
//! lambda*_{jh} ~ N(0, theta_h), theta_h^{-1} ~ Ga(a_theta, b_theta),
//! rho_h ~ Ber(1 - pi_h) with pi_h from a Be(1, alpha) stick-breaking
//! construction, and phi_{jh} ~ Ber{logit^{-1}(x_j' beta_h) c_p}. All
//! three processes have summable expected column scales, so the induced
//! prior on Omega is proper without further conditions.

use crate::error::{invalid_arg, Error, Result};
use crate::model::Hyperparameters;
use crate::rng::RngStream;
use crate::rv;
use crate::scalar::Real;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorFamily {
    Sis,
    Mgp,
    Cusp,
}

/// Multiplicative gamma process hyperparameters. The defaults a1 = 2.1,
/// a2 = 3.1, nu = 3 are the standard published choices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MgpParams<T: Real> {
    pub a1: T,
    pub a2: T,
    pub nu: T,
}

impl<T: Real> Default for MgpParams<T> {
    fn default() -> Self {
        MgpParams {
            a1: T::from_f64(2.1),
            a2: T::from_f64(3.1),
            nu: T::from_f64(3.0),
        }
    }
}

/// Cumulative shrinkage process extras: the spike variance, aligned by
/// default with the 0.05 thresholding convention (0.05²).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CuspParams<T: Real> {
    pub theta_inf: T,
}

impl<T: Real> Default for CuspParams<T> {
    fn default() -> Self {
        CuspParams {
            theta_inf: T::from_f64(0.0025),
        }
    }
}

/// One of the three prior processes with everything needed to draw from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum PriorConfig<T: Real> {
    Sis {
        hyper: Hyperparameters<T>,
        x: Array2<T>,
    },
    Mgp {
        params: MgpParams<T>,
    },
    Cusp {
        hyper: Hyperparameters<T>,
        params: CuspParams<T>,
    },
}

impl<T: Real> PriorConfig<T> {
    pub fn family(&self) -> PriorFamily {
        match self {
            PriorConfig::Sis { .. } => PriorFamily::Sis,
            PriorConfig::Mgp { .. } => PriorFamily::Mgp,
            PriorConfig::Cusp { .. } => PriorFamily::Cusp,
        }
    }
}

/// A single draw of effective loadings plus the state fragments behind it.
///
/// Families without a component leave it trivial: MGP and CUSP have all-one
/// phi, MGP has all-one rho and empty sticks, and only SIS carries beta.
#[derive(Debug, Clone)]
pub struct PriorDraw<T: Real> {
    pub family: PriorFamily,
    pub lambda: Array2<T>,
    pub theta: Vec<T>,
    pub rho: Vec<u8>,
    pub phi: Array2<u8>,
    pub v: Vec<T>,
    pub beta: Array2<T>,
}

/// Stick-breaking weights w_l = v_l prod_{m<l}(1-v_m) and their cumulative
/// sums pi_h. Requires every v_l in (0,1] and v_H = 1, which makes the
/// weights an exact simplex with pi_H = 1.
pub fn stick_breaking<T: Real>(v: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if v.is_empty() {
        return Err(invalid_arg!("stick-breaking needs at least one fraction"));
    }
    if v[v.len() - 1] != T::one() {
        return Err(invalid_arg!("last stick-breaking fraction must equal 1"));
    }
    let mut w = Vec::with_capacity(v.len());
    let mut pi = Vec::with_capacity(v.len());
    let mut remaining = T::one();
    let mut cum = T::zero();
    for &vl in v {
        if !(vl > T::zero() && vl <= T::one()) {
            return Err(invalid_arg!("stick-breaking fraction {vl} outside (0,1]"));
        }
        let wl = vl * remaining;
        remaining *= T::one() - vl;
        cum += wl;
        w.push(wl);
        pi.push(cum);
    }
    Ok((w, pi))
}

pub fn logistic<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Draw stick fractions v ~ Be(1, alpha) with the last element forced to 1.
pub fn sample_sticks<T: Real, R: Rng + ?Sized>(alpha: T, h: usize, rng: &mut R) -> Result<Vec<T>> {
    let mut v = Vec::with_capacity(h);
    for _ in 0..h.saturating_sub(1) {
        v.push(rv::sample_beta(T::one(), alpha, rng)?);
    }
    v.push(T::one());
    Ok(v)
}

/// Forward draw from the structured increasing shrinkage prior.
pub fn sample_sis_prior<T: Real, R: Rng + ?Sized>(
    hyper: &Hyperparameters<T>,
    p: usize,
    h: usize,
    x: &ArrayView2<T>,
    rng: &mut R,
) -> Result<PriorDraw<T>> {
    if h == 0 {
        return Err(invalid_arg!("H must be at least 1"));
    }
    if x.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "meta covariates have {} rows, expected p = {}",
            x.nrows(),
            p
        )));
    }
    let q = x.ncols();
    let v = sample_sticks(hyper.alpha, h, rng)?;
    let (_w, pi) = stick_breaking(&v)?;

    let mut rho = vec![0u8; h];
    let mut theta = vec![T::one(); h];
    let mut beta = Array2::<T>::zeros((q, h));
    let mut phi = Array2::<u8>::zeros((p, h));
    let mut lambda_star = Array2::<T>::zeros((p, h));

    for hh in 0..h {
        rho[hh] = (T::unit(rng) < T::one() - pi[hh]) as u8;
        theta[hh] = rv::sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng)?;
        for m in 0..q {
            beta[(m, hh)] = hyper.sigma_beta * T::std_normal(rng);
        }
        let sd = theta[hh].sqrt();
        for j in 0..p {
            let lin = x.row(j).dot(&beta.column(hh));
            let prob = logistic(lin) * hyper.c_p;
            phi[(j, hh)] = (T::unit(rng) < prob) as u8;
            lambda_star[(j, hh)] = sd * T::std_normal(rng);
        }
    }

    let mut lambda = Array2::<T>::zeros((p, h));
    for hh in 0..h {
        if rho[hh] == 0 {
            continue;
        }
        for j in 0..p {
            if phi[(j, hh)] == 1 {
                lambda[(j, hh)] = lambda_star[(j, hh)];
            }
        }
    }

    Ok(PriorDraw {
        family: PriorFamily::Sis,
        lambda,
        theta,
        rho,
        phi,
        v,
        beta,
    })
}

/// Forward draw from the multiplicative gamma process: absolutely
/// continuous loadings with cumulative-product column precisions.
pub fn sample_mgp_prior<T: Real, R: Rng + ?Sized>(
    params: &MgpParams<T>,
    p: usize,
    h: usize,
    rng: &mut R,
) -> Result<PriorDraw<T>> {
    if h == 0 {
        return Err(invalid_arg!("H must be at least 1"));
    }
    let mut tau = T::one();
    let mut theta = Vec::with_capacity(h);
    let mut lambda = Array2::<T>::zeros((p, h));
    let half_nu = params.nu / T::from_f64(2.0);
    for hh in 0..h {
        let shape = if hh == 0 { params.a1 } else { params.a2 };
        tau *= rv::sample_gamma(shape, T::one(), rng)?;
        theta.push(T::one() / tau);
        for j in 0..p {
            let omega = rv::sample_gamma(half_nu, half_nu, rng)?;
            let sd = (T::one() / (omega * tau)).sqrt();
            lambda[(j, hh)] = sd * T::std_normal(rng);
        }
    }
    Ok(PriorDraw {
        family: PriorFamily::Mgp,
        lambda,
        theta,
        rho: vec![1u8; h],
        phi: Array2::from_elem((p, h), 1),
        v: Vec::new(),
        beta: Array2::zeros((0, 0)),
    })
}

/// Forward draw from the cumulative shrinkage process: spike-and-slab
/// column scales with the same stick-breaking spike probabilities as SIS,
/// exchangeable within columns.
pub fn sample_cusp_prior<T: Real, R: Rng + ?Sized>(
    hyper: &Hyperparameters<T>,
    params: &CuspParams<T>,
    p: usize,
    h: usize,
    rng: &mut R,
) -> Result<PriorDraw<T>> {
    if h == 0 {
        return Err(invalid_arg!("H must be at least 1"));
    }
    let v = sample_sticks(hyper.alpha, h, rng)?;
    let (_w, pi) = stick_breaking(&v)?;
    let mut rho = vec![0u8; h];
    let mut theta = Vec::with_capacity(h);
    let mut lambda = Array2::<T>::zeros((p, h));
    for hh in 0..h {
        let slab = T::unit(rng) >= pi[hh];
        rho[hh] = slab as u8;
        let var = if slab {
            rv::sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng)?
        } else {
            params.theta_inf
        };
        theta.push(var);
        let sd = var.sqrt();
        for j in 0..p {
            lambda[(j, hh)] = sd * T::std_normal(rng);
        }
    }
    Ok(PriorDraw {
        family: PriorFamily::Cusp,
        lambda,
        theta,
        rho,
        phi: Array2::from_elem((p, h), 1),
        v,
        beta: Array2::zeros((0, 0)),
    })
}

pub fn sample_prior<T: Real, R: Rng + ?Sized>(
    config: &PriorConfig<T>,
    p: usize,
    h: usize,
    rng: &mut R,
) -> Result<PriorDraw<T>> {
    match config {
        PriorConfig::Sis { hyper, x } => sample_sis_prior(hyper, p, h, &x.view(), rng),
        PriorConfig::Mgp { params } => sample_mgp_prior(params, p, h, rng),
        PriorConfig::Cusp { hyper, params } => sample_cusp_prior(hyper, params, p, h, rng),
    }
}

/// Monte Carlo column-variance profile and increasing-shrinkage verdicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkageReport {
    pub column_variances: Vec<f64>,
    pub column_variance_mcse: Vec<f64>,
    /// Every consecutive pair decreases beyond two Monte Carlo standard
    /// errors of the difference.
    pub weakly_increasing: bool,
    /// max_j var(col h) < min_s var(col h-1) for all h; only meaningful
    /// when the rows of x are exchangeable (constant meta covariates).
    pub strongly_increasing: bool,
    pub n_draws: usize,
    pub inconclusive: bool,
}

/// Estimate per-column loading variances from `n_draws` prior draws and
/// test the increasing-shrinkage ordering.
pub fn verify_increasing_shrinkage<T: Real>(
    config: &PriorConfig<T>,
    p: usize,
    h: usize,
    n_draws: usize,
    seed: u64,
) -> Result<ShrinkageReport> {
    let stream = RngStream::new(seed);
    let chunks = 64usize.min(n_draws.max(1));
    let per_chunk = n_draws.div_ceil(chunks);

    struct Acc {
        sum_m2: Vec<f64>,
        sum_m2_sq: Vec<f64>,
        sum_jh: Array2<f64>,
        sum_jh_sq: Array2<f64>,
        n: usize,
    }

    let partials: Vec<Result<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream.stream(chunk as u64);
            let mut acc = Acc {
                sum_m2: vec![0.0; h],
                sum_m2_sq: vec![0.0; h],
                sum_jh: Array2::zeros((p, h)),
                sum_jh_sq: Array2::zeros((p, h)),
                n: 0,
            };
            let take = per_chunk.min(n_draws.saturating_sub(chunk * per_chunk));
            for _ in 0..take {
                let draw = sample_prior(config, p, h, &mut rng)?;
                for hh in 0..h {
                    let mut m2 = 0.0;
                    for j in 0..p {
                        let l = draw.lambda[(j, hh)].as_f64();
                        m2 += l * l;
                        acc.sum_jh[(j, hh)] += l;
                        acc.sum_jh_sq[(j, hh)] += l * l;
                    }
                    m2 /= p as f64;
                    acc.sum_m2[hh] += m2;
                    acc.sum_m2_sq[hh] += m2 * m2;
                }
                acc.n += 1;
            }
            Ok(acc)
        })
        .collect();

    let mut sum_m2 = vec![0.0; h];
    let mut sum_m2_sq = vec![0.0; h];
    let mut sum_jh = Array2::<f64>::zeros((p, h));
    let mut sum_jh_sq = Array2::<f64>::zeros((p, h));
    let mut n = 0usize;
    for part in partials {
        let part = part?;
        for hh in 0..h {
            sum_m2[hh] += part.sum_m2[hh];
            sum_m2_sq[hh] += part.sum_m2_sq[hh];
        }
        sum_jh += &part.sum_jh;
        sum_jh_sq += &part.sum_jh_sq;
        n += part.n;
    }
    if n == 0 {
        return Err(invalid_arg!("n_draws must be positive"));
    }
    let nf = n as f64;

    let column_variances: Vec<f64> = (0..h).map(|hh| sum_m2[hh] / nf).collect();
    let column_variance_mcse: Vec<f64> = (0..h)
        .map(|hh| {
            let mean = sum_m2[hh] / nf;
            let var = (sum_m2_sq[hh] / nf - mean * mean).max(0.0);
            (var / nf).sqrt()
        })
        .collect();

    let mut weakly = true;
    for hh in 1..h {
        let diff = column_variances[hh - 1] - column_variances[hh];
        let band = (column_variance_mcse[hh - 1].powi(2) + column_variance_mcse[hh].powi(2)).sqrt();
        if diff <= -2.0 * band {
            weakly = false;
        }
    }

    let var_jh = |j: usize, hh: usize| -> f64 {
        let m = sum_jh[(j, hh)] / nf;
        sum_jh_sq[(j, hh)] / nf - m * m
    };
    let mut strongly = true;
    for hh in 1..h {
        let max_curr = (0..p).map(|j| var_jh(j, hh)).fold(f64::MIN, f64::max);
        let min_prev = (0..p).map(|j| var_jh(j, hh - 1)).fold(f64::MAX, f64::min);
        if !(max_curr < min_prev) {
            strongly = false;
        }
    }

    Ok(ShrinkageReport {
        column_variances,
        column_variance_mcse,
        weakly_increasing: weakly,
        strongly_increasing: strongly,
        n_draws: n,
        inconclusive: n < 10_000,
    })
}

/// Analytic truncation-error bound for the SIS process:
/// pr{tr(Omega_H)/tr(Omega) <= T} <= 1/(1-T) * b^H/(1-b) * theta0 *
/// (a_sigma/b_sigma) * sum_j E(phi_{j1}), with b = alpha/(1+alpha) and
/// theta0 = b_theta/(a_theta - 1).
pub fn truncation_bound<T: Real>(
    hyper: &Hyperparameters<T>,
    h: usize,
    t: T,
    expected_phi: &[T],
) -> Result<T> {
    if !(t > T::zero() && t < T::one()) {
        return Err(invalid_arg!("T must lie in (0,1), got {t}"));
    }
    let theta0 = hyper.theta0()?;
    let b = hyper.alpha / (T::one() + hyper.alpha);
    let sum_phi: T = expected_phi.iter().cloned().sum();
    let geom = b.powi(h as i32) / (T::one() - b);
    Ok(T::one() / (T::one() - t) * geom * theta0 * (hyper.a_sigma / hyper.b_sigma) * sum_phi)
}

/// Markov concentration bound for a single SIS loading:
/// pr(|lambda_{jh}| > eps) <= theta0 {alpha/(1+alpha)}^h c_p / (2 eps²).
pub fn concentration_bound<T: Real>(hyper: &Hyperparameters<T>, h: usize, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(invalid_arg!("epsilon must be positive"));
    }
    let theta0 = hyper.theta0()?;
    let b = hyper.alpha / (T::one() + hyper.alpha);
    Ok(theta0 * b.powi(h as i32) * hyper.c_p / (T::from_f64(2.0) * epsilon * epsilon))
}

/// Hill-type tail index above a fixed cap is reported as not power-law.
pub const POWER_LAW_INDEX_CAP: f64 = 6.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailIndexEstimate {
    /// Hill estimate from the upper 1% order statistics.
    pub index: f64,
    /// Hill estimate from the upper 0.25%, recorded for stability checks.
    pub index_deep: f64,
    pub power_law: bool,
    pub n_samples: usize,
    pub n_tail: usize,
    /// False when fewer than 10^4 samples were available.
    pub conclusive: bool,
}

/// Hill estimator of the power-law tail index of positive samples.
pub fn tail_exponent<T: Real>(samples: &[T]) -> Result<TailIndexEstimate> {
    let mut xs: Vec<f64> = samples
        .iter()
        .map(|v| v.as_f64())
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    if xs.len() < 100 {
        return Err(invalid_arg!(
            "tail index needs at least 100 positive samples, got {}",
            xs.len()
        ));
    }
    xs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let hill = |k: usize| -> f64 {
        let threshold = xs[k].ln();
        let mean_excess: f64 =
            xs[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
        1.0 / mean_excess
    };
    let k1 = (xs.len() / 100).max(10).min(xs.len() - 1);
    let k2 = (xs.len() / 400).max(5).min(xs.len() - 1);
    let index = hill(k1);
    let index_deep = hill(k2);
    Ok(TailIndexEstimate {
        index,
        index_deep,
        power_law: index <= POWER_LAW_INDEX_CAP,
        n_samples: xs.len(),
        n_tail: k1,
        conclusive: xs.len() >= 10_000,
    })
}

/// |supp_eps(lambda_h)|: how many entries exceed eps in magnitude.
pub fn support_size<T: Real>(lambda_col: &[T], epsilon: T) -> Result<usize> {
    if !(epsilon > T::zero()) {
        return Err(invalid_arg!("epsilon must be positive"));
    }
    Ok(lambda_col.iter().filter(|v| v.abs() > epsilon).count())
}

/// Grid cell of the truncation-error verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationCell {
    pub h: usize,
    pub t: f64,
    pub empirical: f64,
    /// Corollary 1(ii) bound; only defined for the SIS process.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationCell {
    pub h: usize,
    pub epsilon: f64,
    pub empirical: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportCell {
    pub p: usize,
    pub epsilon: f64,
    pub c_p: Option<f64>,
    pub mean_support: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroFractions {
    pub lambda: f64,
    pub phi: f64,
    pub rho: f64,
}

/// Full Monte Carlo verification report of one prior process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorPropertyReport {
    pub schema_version: u32,
    pub family: PriorFamily,
    pub seed: u64,
    pub p: usize,
    pub h: usize,
    pub n_draws: usize,
    pub shrinkage: ShrinkageReport,
    pub truncation: Vec<TruncationCell>,
    pub concentration: Vec<ConcentrationCell>,
    pub tail: Option<TailIndexEstimate>,
    pub support: Vec<SupportCell>,
    pub zero_fractions: Option<ZeroFractions>,
}

/// Settings of the prior verification run; grids default to the ranges
/// exercised by the acceptance suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorCheckSettings {
    pub p: usize,
    pub h: usize,
    pub n_draws: usize,
    pub seed: u64,
    pub truncation_h_grid: Vec<usize>,
    pub truncation_t_grid: Vec<f64>,
    pub concentration_h_grid: Vec<usize>,
    pub concentration_epsilons: Vec<f64>,
    pub support_p_grid: Vec<usize>,
    pub support_epsilon: f64,
    pub support_draws: usize,
    pub tail_sample_target: usize,
}

impl Default for PriorCheckSettings {
    fn default() -> Self {
        PriorCheckSettings {
            p: 10,
            h: 10,
            n_draws: 100_000,
            seed: 20260810,
            truncation_h_grid: (2..=10).collect(),
            truncation_t_grid: vec![0.5, 0.75, 0.9],
            concentration_h_grid: (1..=5).collect(),
            concentration_epsilons: vec![0.5, 1.0, 2.0],
            support_p_grid: vec![64, 128, 256, 512],
            support_epsilon: 0.05,
            support_draws: 4_000,
            tail_sample_target: 200_000,
        }
    }
}

/// Columns of truncation buffer appended past the largest grid level so
/// tr(Omega) approximates the infinite process.
const TRUNCATION_BUFFER: usize = 60;

/// Run the full Monte Carlo property verification for one prior process.
pub fn run_prior_check<T: Real>(
    config: &PriorConfig<T>,
    settings: &PriorCheckSettings,
) -> Result<PriorPropertyReport> {
    let p = settings.p;
    let h = settings.h;
    let family = config.family();
    let stream = RngStream::new(settings.seed);

    let shrinkage = verify_increasing_shrinkage(config, p, h, settings.n_draws, settings.seed)?;

    // Shared draw loop for truncation tails, concentration exceedance,
    // zero fractions, and tail samples. The model is extended past the
    // largest grid level so the denominator trace is effectively infinite.
    let h_max = settings
        .truncation_h_grid
        .iter()
        .chain(settings.concentration_h_grid.iter())
        .cloned()
        .max()
        .unwrap_or(h)
        .max(h);
    let h_total = h_max + TRUNCATION_BUFFER;

    let (a_sigma, b_sigma) = match config {
        PriorConfig::Sis { hyper, .. } | PriorConfig::Cusp { hyper, .. } => {
            (hyper.a_sigma, hyper.b_sigma)
        }
        PriorConfig::Mgp { .. } => (T::one(), T::from_f64(0.3)),
    };

    let chunks = 64usize;
    let per_chunk = settings.n_draws.div_ceil(chunks);
    struct Acc {
        trunc_hits: Vec<usize>,
        conc_hits: Vec<usize>,
        tail_samples: Vec<f64>,
        zero_lambda: usize,
        zero_phi: usize,
        zero_rho: usize,
        cells: usize,
        cols: usize,
        n: usize,
    }
    let n_tcells = settings.truncation_h_grid.len() * settings.truncation_t_grid.len();
    let n_ccells = settings.concentration_h_grid.len() * settings.concentration_epsilons.len();
    let tail_per_chunk = settings.tail_sample_target / chunks + 1;

    let partials: Vec<Result<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream.stream(500 + chunk as u64);
            let mut acc = Acc {
                trunc_hits: vec![0; n_tcells],
                conc_hits: vec![0; n_ccells],
                tail_samples: Vec::with_capacity(tail_per_chunk),
                zero_lambda: 0,
                zero_phi: 0,
                zero_rho: 0,
                cells: 0,
                cols: 0,
                n: 0,
            };
            let take = per_chunk.min(settings.n_draws.saturating_sub(chunk * per_chunk));
            for _ in 0..take {
                let draw = sample_prior(config, p, h_total, &mut rng)?;
                // Column masses and the noise trace.
                let mut noise = T::zero();
                for _ in 0..p {
                    let prec = rv::sample_gamma(a_sigma, b_sigma, &mut rng)?;
                    noise += T::one() / prec;
                }
                let mut cum = Vec::with_capacity(h_total);
                let mut running = T::zero();
                for hh in 0..h_total {
                    let mut mass = T::zero();
                    for j in 0..p {
                        let l = draw.lambda[(j, hh)];
                        mass += l * l;
                    }
                    running += mass;
                    cum.push(running);
                }
                let total = running + noise;
                let mut cell = 0;
                for &hg in &settings.truncation_h_grid {
                    let ratio = (cum[hg - 1] + noise) / total;
                    for &t in &settings.truncation_t_grid {
                        if ratio.as_f64() <= t {
                            acc.trunc_hits[cell] += 1;
                        }
                        cell += 1;
                    }
                }
                let mut cell = 0;
                for &hg in &settings.concentration_h_grid {
                    // Marginal exceedance pooled over j (rows are
                    // exchangeable under the marginal law).
                    let l = draw.lambda[(0, hg - 1)].abs().as_f64();
                    for &eps in &settings.concentration_epsilons {
                        if l > eps {
                            acc.conc_hits[cell] += 1;
                        }
                        cell += 1;
                    }
                }
                if acc.tail_samples.len() < tail_per_chunk {
                    for hh in 0..h {
                        for j in 0..p {
                            let l = draw.lambda[(j, hh)].as_f64();
                            if l != 0.0 {
                                acc.tail_samples.push(l.abs());
                            }
                        }
                    }
                }
                acc.zero_lambda += draw
                    .lambda
                    .slice(ndarray::s![.., ..h])
                    .iter()
                    .filter(|&&v| v == T::zero())
                    .count();
                acc.zero_phi += draw
                    .phi
                    .slice(ndarray::s![.., ..h])
                    .iter()
                    .filter(|&&b| b == 0)
                    .count();
                acc.zero_rho += draw.rho[..h].iter().filter(|&&r| r == 0).count();
                acc.cells += p * h;
                acc.cols += h;
                acc.n += 1;
            }
            Ok(acc)
        })
        .collect();

    let mut trunc_hits = vec![0usize; n_tcells];
    let mut conc_hits = vec![0usize; n_ccells];
    let mut tail_samples: Vec<f64> = Vec::new();
    let (mut z_l, mut z_p, mut z_r, mut cells, mut cols, mut n) = (0, 0, 0, 0, 0, 0usize);
    for part in partials {
        let part = part?;
        for (a, b) in trunc_hits.iter_mut().zip(&part.trunc_hits) {
            *a += b;
        }
        for (a, b) in conc_hits.iter_mut().zip(&part.conc_hits) {
            *a += b;
        }
        tail_samples.extend(part.tail_samples);
        z_l += part.zero_lambda;
        z_p += part.zero_phi;
        z_r += part.zero_rho;
        cells += part.cells;
        cols += part.cols;
        n += part.n;
    }
    let nf = n as f64;

    let mut truncation = Vec::with_capacity(n_tcells);
    let mut cell = 0;
    for &hg in &settings.truncation_h_grid {
        for &t in &settings.truncation_t_grid {
            let bound = match config {
                PriorConfig::Sis { hyper, .. } => {
                    let e_phi = vec![hyper.c_p / T::from_f64(2.0); p];
                    Some(truncation_bound(hyper, hg, T::from_f64(t), &e_phi)?.as_f64())
                }
                _ => None,
            };
            truncation.push(TruncationCell {
                h: hg,
                t,
                empirical: trunc_hits[cell] as f64 / nf,
                bound,
            });
            cell += 1;
        }
    }

    let mut concentration = Vec::with_capacity(n_ccells);
    let mut cell = 0;
    for &hg in &settings.concentration_h_grid {
        for &eps in &settings.concentration_epsilons {
            let bound = match config {
                PriorConfig::Sis { hyper, .. } => {
                    Some(concentration_bound(hyper, hg, T::from_f64(eps))?.as_f64())
                }
                _ => None,
            };
            concentration.push(ConcentrationCell {
                h: hg,
                epsilon: eps,
                empirical: conc_hits[cell] as f64 / nf,
                bound,
            });
            cell += 1;
        }
    }

    let tail = tail_exponent(&tail_samples).ok();

    // Support growth over the p grid; SIS re-derives c_p = 2e log(p)/p at
    // each p, which is the regime of the sparsity corollary.
    let mut support = Vec::new();
    for &pg in &settings.support_p_grid {
        let mut rng = stream.stream(9_000 + pg as u64);
        let (cfg_p, c_p): (PriorConfig<T>, Option<f64>) = match config {
            PriorConfig::Sis { hyper, .. } => {
                let mut hp = hyper.clone();
                hp.c_p = T::from_f64(crate::model::default_c_p(pg));
                (
                    PriorConfig::Sis {
                        hyper: hp,
                        x: Array2::ones((pg, 1)),
                    },
                    Some(crate::model::default_c_p(pg)),
                )
            }
            other => (other.clone(), None),
        };
        let mut total_support = 0usize;
        for _ in 0..settings.support_draws {
            let draw = sample_prior(&cfg_p, pg, 2, &mut rng)?;
            let col: Vec<T> = (0..pg).map(|j| draw.lambda[(j, 0)]).collect();
            total_support += support_size(&col, T::from_f64(settings.support_epsilon))?;
        }
        support.push(SupportCell {
            p: pg,
            epsilon: settings.support_epsilon,
            c_p,
            mean_support: total_support as f64 / settings.support_draws as f64,
        });
    }

    let zero_fractions = Some(ZeroFractions {
        lambda: z_l as f64 / cells as f64,
        phi: z_p as f64 / cells as f64,
        rho: z_r as f64 / cols as f64,
    });

    Ok(PriorPropertyReport {
        schema_version: 1,
        family,
        seed: settings.seed,
        p,
        h,
        n_draws: n,
        shrinkage,
        truncation,
        concentration,
        tail,
        support,
        zero_fractions,
    })
}
