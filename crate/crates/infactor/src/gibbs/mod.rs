//! Adaptive Gibbs samplers for the structured increasing shrinkage model.
//!
//! One chain is a strictly sequential state machine over [`ModelState`].
//! The truncation level H is adapted at iteration t with probability
//! p(t) = exp(alpha0 + alpha1 t), dropping redundant inactive columns or
//! appending a fresh prior-drawn column, which satisfies the diminishing
//! adaptation condition.

pub mod steps;

pub use steps::*;

use crate::error::{invalid_arg, Error, Result};
use crate::model::{Dataset, Hyperparameters, Mode, ModelState};
use crate::priors::{logistic, sample_sticks};
use crate::rng::RngStream;
use crate::rv;
use crate::scalar::Real;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// How the stick probabilities enter the marginal density used for MAP
/// selection: evaluated at the sampled stick fractions, or at their prior
/// expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityPi {
    SampledV,
    Expected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ChainConfig<T: Real> {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Adaptation schedule intercept (negative; -inf disables adaptation).
    pub alpha0: T,
    /// Adaptation schedule slope (negative).
    pub alpha1: T,
    /// Initial truncation level; `None` uses min(p, floor(5 log p)).
    pub h_init: Option<usize>,
    pub mode: Mode,
    pub seed: u64,
    pub record_log_density: bool,
    pub density_pi: DensityPi,
}

impl<T: Real> ChainConfig<T> {
    pub fn default_gaussian(seed: u64) -> Self {
        ChainConfig {
            n_iterations: 25_000,
            burn_in: 10_000,
            thin: 5,
            alpha0: T::from_f64(-1.0),
            alpha1: T::from_f64(-5e-4),
            h_init: None,
            mode: Mode::Gaussian,
            seed,
            record_log_density: true,
            density_pi: DensityPi::SampledV,
        }
    }

    pub fn default_probit(seed: u64) -> Self {
        ChainConfig {
            n_iterations: 40_000,
            burn_in: 20_000,
            thin: 5,
            alpha0: T::from_f64(-1.0),
            alpha1: T::from_f64(-2.5e-4),
            h_init: None,
            mode: Mode::Probit,
            seed,
            record_log_density: true,
            density_pi: DensityPi::SampledV,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 || self.burn_in >= self.n_iterations {
            return Err(invalid_arg!(
                "need burn_in < n_iterations, got {} / {}",
                self.burn_in,
                self.n_iterations
            ));
        }
        if self.thin == 0 {
            return Err(invalid_arg!("thin must be at least 1"));
        }
        if !(self.alpha0 < T::zero()) {
            return Err(invalid_arg!("alpha0 must be negative"));
        }
        if !(self.alpha1 < T::zero()) || !self.alpha1.is_finite() {
            return Err(invalid_arg!("alpha1 must be negative and finite"));
        }
        Ok(())
    }

    pub fn retained_draws(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }
}

/// Default initial truncation level, min(p, floor(5 log p)), at least 2.
pub fn default_h_init(p: usize) -> usize {
    let formula = (5.0 * (p as f64).ln()).floor() as usize;
    formula.clamp(2, p.max(2))
}

/// Everything retained from one posterior draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DrawSnapshot<T: Real> {
    /// Effective loadings at this draw, p x H^(t).
    pub lambda: Array2<T>,
    pub beta: Array2<T>,
    pub sigma2: Vec<T>,
    pub v: Vec<T>,
    pub rho: Vec<u8>,
    pub phi: Array2<u8>,
    pub h_active: usize,
    /// Probit regression coefficients (empty in gaussian mode).
    pub mu: Array2<T>,
    pub b: Array2<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ChainOutput<T: Real> {
    pub config: ChainConfig<T>,
    pub draws: Vec<DrawSnapshot<T>>,
    /// H_a after every iteration (not only retained ones).
    pub h_active_trace: Vec<usize>,
    /// Truncation level after every iteration.
    pub h_trace: Vec<usize>,
    /// Iterations at which an adaptation event fired.
    pub adaptation_iterations: Vec<usize>,
    /// log f(Lambda, beta, Sigma | y) per retained draw when recorded.
    pub log_density_trace: Vec<T>,
    /// Wall-clock seconds per iteration; excluded from serialization so
    /// artifacts stay byte-identical across runs.
    #[serde(skip)]
    pub seconds_per_iteration: f64,
    #[serde(skip)]
    pub total_seconds: f64,
}

/// Over-complete fully active start: prior loadings and sticks, all
/// indicators on, beta zero, noise at its prior mean, factors zero.
pub fn init_state<T: Real, R: Rng + ?Sized>(
    data: &Dataset<T>,
    hyper: &Hyperparameters<T>,
    config: &ChainConfig<T>,
    rng: &mut R,
) -> Result<ModelState<T>> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    let h = config.h_init.unwrap_or_else(|| default_h_init(p));
    if h == 0 {
        return Err(invalid_arg!("initial truncation level must be positive"));
    }
    let v = sample_sticks(hyper.alpha, h, rng)?;
    let mut theta = Vec::with_capacity(h);
    let mut lambda_star = Array2::<T>::zeros((p, h));
    for hh in 0..h {
        let th = rv::sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng)?;
        theta.push(th);
        let sd = th.sqrt();
        for j in 0..p {
            lambda_star[(j, hh)] = sd * T::std_normal(rng);
        }
    }
    let sigma2 = match config.mode {
        Mode::Gaussian => vec![hyper.b_sigma / hyper.a_sigma; p],
        Mode::Probit => vec![T::one(); p],
    };
    let c = data.w.as_ref().map(|w| w.ncols()).unwrap_or(0);
    let (mu, b, z) = match config.mode {
        Mode::Gaussian => (
            Array2::zeros((0, 0)),
            Array2::zeros((0, 0)),
            Array2::zeros((0, 0)),
        ),
        Mode::Probit => {
            let half_normal_median = T::from_f64(0.6745);
            let z = Array2::from_shape_fn((n, p), |(i, j)| {
                if data.y[(i, j)] == T::one() {
                    half_normal_median
                } else {
                    -half_normal_median
                }
            });
            (Array2::zeros((p, c)), Array2::zeros((c, q)), z)
        }
    };
    Ok(ModelState {
        h,
        lambda_star,
        phi: Array2::from_elem((p, h), 1),
        rho: vec![1; h],
        theta,
        v,
        beta: Array2::zeros((q, h)),
        sigma2,
        eta: Array2::zeros((n, h)),
        mu,
        b,
        z,
    })
}

/// One adaptation attempt at iteration `t` (1-based). Fires with
/// probability exp(alpha0 + alpha1 t); on firing either drops the
/// redundant inactive columns (keeping one fresh spare) or appends a
/// fresh prior-drawn column. Returns whether the state was resized.
pub fn adapt_truncation<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    t: usize,
    x: &ArrayView2<T>,
    hyper: &Hyperparameters<T>,
    alpha0: T,
    alpha1: T,
    rng: &mut R,
) -> Result<bool> {
    let log_p = alpha0 + alpha1 * T::from_usize(t);
    let p_t = log_p.exp();
    if !(T::unit(rng) < p_t) {
        return Ok(false);
    }
    let h_active = state.h_active();
    if h_active < state.h.saturating_sub(1) {
        let keep: Vec<usize> = (0..state.h).filter(|&hh| state.rho[hh] == 1).collect();
        let new_h = h_active + 1;
        resize_state(state, new_h, &keep, x, hyper, rng)?;
    } else {
        let keep: Vec<usize> = (0..state.h).collect();
        let new_h = state.h + 1;
        resize_state(state, new_h, &keep, x, hyper, rng)?;
        // The old terminal stick was pinned at 1; refresh it from the prior
        // now that it is interior.
        let idx = state.h - 2;
        state.v[idx] = rv::sample_beta(T::one(), hyper.alpha, rng)?;
    }
    Ok(true)
}

/// Rebuild the state with the kept columns followed by one fresh column
/// drawn from the prior (inactive until the sampler activates it).
fn resize_state<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    new_h: usize,
    keep: &[usize],
    x: &ArrayView2<T>,
    hyper: &Hyperparameters<T>,
    rng: &mut R,
) -> Result<()> {
    debug_assert_eq!(keep.len() + 1, new_h);
    let (p, n, q) = (state.p(), state.n(), state.q());
    let mut lambda_star = Array2::<T>::zeros((p, new_h));
    let mut phi = Array2::<u8>::zeros((p, new_h));
    let mut rho = vec![0u8; new_h];
    let mut theta = vec![T::one(); new_h];
    let mut v = vec![T::one(); new_h];
    let mut beta = Array2::<T>::zeros((q, new_h));
    let mut eta = Array2::<T>::zeros((n, new_h));

    for (new_col, &old_col) in keep.iter().enumerate() {
        lambda_star
            .column_mut(new_col)
            .assign(&state.lambda_star.column(old_col));
        phi.column_mut(new_col).assign(&state.phi.column(old_col));
        rho[new_col] = state.rho[old_col];
        theta[new_col] = state.theta[old_col];
        v[new_col] = state.v[old_col];
        beta.column_mut(new_col).assign(&state.beta.column(old_col));
        eta.column_mut(new_col).assign(&state.eta.column(old_col));
    }

    // Fresh spare column from the prior.
    let last = new_h - 1;
    let th = rv::sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng)?;
    theta[last] = th;
    let sd = th.sqrt();
    for m in 0..q {
        beta[(m, last)] = hyper.sigma_beta * T::std_normal(rng);
    }
    let psi_last = hyper.psi_diag(new_h)[last].sqrt();
    for j in 0..p {
        lambda_star[(j, last)] = sd * T::std_normal(rng);
        let prob = logistic(x.row(j).dot(&beta.column(last))) * hyper.c_p;
        phi[(j, last)] = (T::unit(rng) < prob) as u8;
    }
    for i in 0..n {
        eta[(i, last)] = psi_last * T::std_normal(rng);
    }
    rho[last] = 0;
    v[last] = T::one();

    state.h = new_h;
    state.lambda_star = lambda_star;
    state.phi = phi;
    state.rho = rho;
    state.theta = theta;
    state.v = v;
    state.beta = beta;
    state.eta = eta;
    Ok(())
}

fn guard<T: Real>(state: &ModelState<T>, iteration: usize, block: &'static str) -> Result<()> {
    let finite = state.lambda_star.iter().all(|v| v.is_finite())
        && state.beta.iter().all(|v| v.is_finite())
        && state.eta.iter().all(|v| v.is_finite())
        && state.sigma2.iter().all(|v| v.is_finite() && *v > T::zero())
        && state.theta.iter().all(|v| v.is_finite() && *v > T::zero())
        && state.z.iter().all(|v| v.is_finite())
        && state.mu.iter().all(|v| v.is_finite())
        && state.b.iter().all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration, block })
    }
}

/// One full gaussian sweep (steps 1-6).
pub fn gaussian_sweep<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    data: &Dataset<T>,
    hyper: &Hyperparameters<T>,
    iteration: usize,
    rng: &mut R,
) -> Result<()> {
    let psi = hyper.psi_diag(state.h);
    let sigma2 = state.sigma2.clone();
    update_factors(state, &data.y.view(), &sigma2, &psi, rng)?;
    guard(state, iteration, "factors")?;

    let fit = compute_fit(state);
    update_noise_variances(state, &data.y.view(), &fit.view(), hyper, rng)?;
    guard(state, iteration, "noise_variances")?;

    update_shrinkage_coefficients(state, &data.x.view(), hyper, rng)?;
    guard(state, iteration, "shrinkage_coefficients")?;

    let sigma2 = state.sigma2.clone();
    update_loadings(state, &data.y.view(), &sigma2, rng)?;
    guard(state, iteration, "loadings")?;

    let mut fit = compute_fit(state);
    update_column_scales(state, &data.y.view(), &sigma2, hyper, &mut fit, rng)?;
    guard(state, iteration, "column_scales")?;

    update_local_scales(state, &data.y.view(), &sigma2, &data.x.view(), hyper, &mut fit, rng)?;
    guard(state, iteration, "local_scales")?;
    Ok(())
}

/// One full probit sweep (steps 1-8).
pub fn probit_sweep<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    data: &Dataset<T>,
    hyper: &Hyperparameters<T>,
    iteration: usize,
    rng: &mut R,
) -> Result<()> {
    let empty;
    let w = match &data.w {
        Some(w) => w.view(),
        None => {
            empty = Array2::<T>::zeros((data.n(), 0));
            empty.view()
        }
    };
    update_regression_means(state, &w, &data.x.view(), hyper, rng)?;
    guard(state, iteration, "regression_means")?;

    let eps = update_latent_utilities(state, &data.y.view(), &w, rng)?;
    guard(state, iteration, "latent_utilities")?;

    let ones = vec![T::one(); data.p()];
    let psi = hyper.psi_diag(state.h);
    update_factors(state, &eps.view(), &ones, &psi, rng)?;
    guard(state, iteration, "factors")?;

    update_shrinkage_coefficients(state, &data.x.view(), hyper, rng)?;
    guard(state, iteration, "shrinkage_coefficients")?;

    update_loadings(state, &eps.view(), &ones, rng)?;
    guard(state, iteration, "loadings")?;

    let mut fit = compute_fit(state);
    update_column_scales(state, &eps.view(), &ones, hyper, &mut fit, rng)?;
    guard(state, iteration, "column_scales")?;

    update_local_scales(state, &eps.view(), &ones, &data.x.view(), hyper, &mut fit, rng)?;
    guard(state, iteration, "local_scales")?;
    Ok(())
}

pub fn snapshot<T: Real>(state: &ModelState<T>) -> DrawSnapshot<T> {
    DrawSnapshot {
        lambda: crate::model::effective_loadings(state),
        beta: state.beta.clone(),
        sigma2: state.sigma2.clone(),
        v: state.v.clone(),
        rho: state.rho.clone(),
        phi: state.phi.clone(),
        h_active: state.h_active(),
        mu: state.mu.clone(),
        b: state.b.clone(),
    }
}

/// Run one adaptive Gibbs chain. Deterministic given the config seed.
pub fn run_chain<T: Real>(
    data: &Dataset<T>,
    hyper: &Hyperparameters<T>,
    config: &ChainConfig<T>,
) -> Result<ChainOutput<T>> {
    config.validate()?;
    hyper.validate()?;
    data.validate()?;
    if data.mode != config.mode {
        return Err(invalid_arg!("dataset mode and chain mode disagree"));
    }
    let mut rng = RngStream::new(config.seed).stream(0);
    let mut state = init_state(data, hyper, config, &mut rng)?;

    let mut out = ChainOutput {
        config: config.clone(),
        draws: Vec::with_capacity(config.retained_draws()),
        h_active_trace: Vec::with_capacity(config.n_iterations),
        h_trace: Vec::with_capacity(config.n_iterations),
        adaptation_iterations: Vec::new(),
        log_density_trace: Vec::new(),
        seconds_per_iteration: 0.0,
        total_seconds: 0.0,
    };

    let start = Instant::now();
    for t in 1..=config.n_iterations {
        let swept = match config.mode {
            Mode::Gaussian => gaussian_sweep(&mut state, data, hyper, t, &mut rng),
            Mode::Probit => probit_sweep(&mut state, data, hyper, t, &mut rng),
        };
        swept.map_err(|e| match e {
            Error::NonFinite { .. } => e,
            other => Error::Validation(format!("iteration {t}: {other}")),
        })?;
        if adapt_truncation(
            &mut state,
            t,
            &data.x.view(),
            hyper,
            config.alpha0,
            config.alpha1,
            &mut rng,
        )? {
            out.adaptation_iterations.push(t);
        }
        out.h_active_trace.push(state.h_active());
        out.h_trace.push(state.h);

        if t > config.burn_in && (t - config.burn_in) % config.thin == 0 {
            let snap = snapshot(&state);
            if config.record_log_density {
                let ld = crate::summary::log_marginal_density(
                    &snap,
                    data,
                    hyper,
                    config.density_pi,
                )?;
                out.log_density_trace.push(ld);
            }
            out.draws.push(snap);
        }
    }
    out.total_seconds = start.elapsed().as_secs_f64();
    out.seconds_per_iteration = out.total_seconds / config.n_iterations as f64;
    Ok(out)
}
