//! Full conditional updates of the Gibbs sweep.
//!
//! The gaussian sweep cycles factors, noise variances, shrinkage
//! coefficients (with Pólya-Gamma augmentation), loadings, column scales
//! (categorical stick indicators, inverse-gamma refresh, stick refresh)
//! and local scales. The probit sweep reuses the same updates against the
//! latent residuals with unit noise.
//!
//! Likelihood comparisons are always formed as differences of Gaussian
//! log densities on residuals, which reduces to quadratic terms and never
//! underflows the way raw density products do.

use crate::error::{invalid_arg, Result};
use crate::linalg;
use crate::model::{Hyperparameters, ModelState};
use crate::priors::{logistic, stick_breaking};
use crate::rv;
use crate::scalar::Real;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

/// Fitted mean eta Lambda_eff' (n x p) for the current state.
pub fn compute_fit<T: Real>(state: &ModelState<T>) -> Array2<T> {
    let lambda = crate::model::effective_loadings(state);
    state.eta.dot(&lambda.t())
}

/// Step 1 (gaussian) / Step 4 (probit): refresh the latent factors.
///
/// eta_i ~ N_H{(Psi^-1 + L' S^-1 L)^-1 L' S^-1 r_i, (Psi^-1 + L' S^-1 L)^-1}
/// with r the response (gaussian) or latent residual (probit).
pub fn update_factors<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    resp: &ArrayView2<T>,
    sigma2: &[T],
    psi: &[T],
    rng: &mut R,
) -> Result<()> {
    let (n, h) = (resp.nrows(), state.h);
    let lambda = crate::model::effective_loadings(state);

    // Lambda scaled by 1/sigma_j^2 row-wise.
    let mut lam_scaled = lambda.clone();
    for (j, row) in lam_scaled.rows_mut().into_iter().enumerate() {
        let inv = T::one() / sigma2[j];
        for v in row {
            *v *= inv;
        }
    }
    let mut precision = lambda.t().dot(&lam_scaled);
    for hh in 0..h {
        precision[(hh, hh)] += T::one() / psi[hh];
    }
    linalg::symmetrize(&mut precision);
    let l = linalg::cholesky(&precision.view())?;

    // Means solve against all rows at once.
    let rhs = lam_scaled.t().dot(&resp.t()); // H x n
    for i in 0..n {
        let mean = linalg::chol_solve(&l.view(), &rhs.column(i).view());
        let draw = linalg::sample_mvn_from_precision_chol(&mean.view(), &l.view(), rng);
        state.eta.row_mut(i).assign(&draw);
    }
    Ok(())
}

/// Step 2 (gaussian only): refresh the noise precisions,
/// sigma_j^-2 ~ Ga(a_sigma + n/2, b_sigma + SSR_j/2).
pub fn update_noise_variances<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    y: &ArrayView2<T>,
    fit: &ArrayView2<T>,
    hyper: &Hyperparameters<T>,
    rng: &mut R,
) -> Result<()> {
    let (n, p) = (y.nrows(), y.ncols());
    let half = T::from_f64(0.5);
    for j in 0..p {
        let mut ssr = T::zero();
        for i in 0..n {
            let r = y[(i, j)] - fit[(i, j)];
            ssr += r * r;
        }
        let shape = hyper.a_sigma + half * T::from_usize(n);
        let rate = hyper.b_sigma + half * ssr;
        state.sigma2[j] = T::one() / rv::sample_gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// Stable log of the logistic function.
pub fn ln_logistic<T: Real>(x: T) -> T {
    if x > T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Step 3: Pólya-Gamma refresh of the shrinkage coefficients beta_h.
///
/// Substep 3.1 lifts phi to the logistic component phi^(L), 3.2 draws the
/// PG auxiliaries, and 3.3 draws beta_h from its Gaussian full conditional
/// with kappa_j = phi^(L)_j - 1/2. Returns the sampled phi^(L).
pub fn update_shrinkage_coefficients<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    x: &ArrayView2<T>,
    hyper: &Hyperparameters<T>,
    rng: &mut R,
) -> Result<Array2<u8>> {
    let (p, q, h) = (state.p(), state.q(), state.h);
    let half = T::from_f64(0.5);
    let inv_sb2 = T::one() / (hyper.sigma_beta * hyper.sigma_beta);

    let mut phi_l_out = Array2::<u8>::zeros((p, h));
    let mut kappa = Array1::<T>::zeros(p);
    let mut xtdx = Array2::<T>::zeros((q, q));
    for hh in 0..h {
        // 3.1: phi^(L) given phi.
        let lin: Vec<T> = (0..p).map(|j| x.row(j).dot(&state.beta.column(hh))).collect();
        for j in 0..p {
            let phi_l = if state.phi[(j, hh)] == 1 {
                true
            } else {
                let s = logistic(lin[j]);
                let p1 = s * (T::one() - hyper.c_p);
                let p0 = T::one() - s;
                T::unit(rng) * (p0 + p1) < p1
            };
            phi_l_out[(j, hh)] = phi_l as u8;
            kappa[j] = if phi_l { half } else { -half };
        }

        // 3.2: PG auxiliaries and the weighted Gram matrix x' D x.
        xtdx.fill(T::zero());
        for j in 0..p {
            let d = rv::sample_polya_gamma_1(lin[j], rng)?;
            let xj = x.row(j);
            for a in 0..q {
                let xa = xj[a] * d;
                for b in a..q {
                    xtdx[(a, b)] += xa * xj[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                xtdx[(a, b)] = xtdx[(b, a)];
            }
            xtdx[(a, a)] += inv_sb2;
        }

        // 3.3: Gaussian draw for beta_h.
        let rhs = x.t().dot(&kappa);
        let l = linalg::cholesky(&xtdx.view())?;
        let mean = linalg::chol_solve(&l.view(), &rhs.view());
        let draw = linalg::sample_mvn_from_precision_chol(&mean.view(), &l.view(), rng);
        state.beta.column_mut(hh).assign(&draw);
    }
    Ok(phi_l_out)
}

/// Step 4: refresh the non-degenerate loadings row by row,
/// lambda*_j ~ N_H{(D^-1 + s_j^-2 G_j)^-1 s_j^-2 m_j, (D^-1 + s_j^-2 G_j)^-1}
/// where G_j masks the factor Gram matrix by the row's indicators.
pub fn update_loadings<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    resp: &ArrayView2<T>,
    sigma2: &[T],
    rng: &mut R,
) -> Result<()> {
    let (p, h) = (state.p(), state.h);
    let eta_gram = state.eta.t().dot(&state.eta); // H x H
    let eta_resp = state.eta.t().dot(resp); // H x p

    let mut precision = Array2::<T>::zeros((h, h));
    let mut rhs = Array1::<T>::zeros(h);
    for j in 0..p {
        let inv_s2 = T::one() / sigma2[j];
        let mask: Vec<bool> = (0..h)
            .map(|hh| state.rho[hh] == 1 && state.phi[(j, hh)] == 1)
            .collect();
        for a in 0..h {
            for b in 0..h {
                precision[(a, b)] = if mask[a] && mask[b] {
                    eta_gram[(a, b)] * inv_s2
                } else {
                    T::zero()
                };
            }
            precision[(a, a)] += T::one() / state.theta[a];
            rhs[a] = if mask[a] {
                eta_resp[(a, j)] * inv_s2
            } else {
                T::zero()
            };
        }
        let l = linalg::cholesky(&precision.view())?;
        let mean = linalg::chol_solve(&l.view(), &rhs.view());
        let draw = linalg::sample_mvn_from_precision_chol(&mean.view(), &l.view(), rng);
        state.lambda_star.row_mut(j).assign(&draw);
    }
    Ok(())
}

/// Log likelihood-ratio of activating column h versus deactivating it,
/// with `fit` already excluding column h's contribution.
///
/// Equals sum_{i,j} log N(resp - fit - c; 0, sigma_j^2) - log N(resp - fit)
/// with c_{ij} = eta_{ih} phi_{jh} lambda*_{jh}; only phi = 1 entries
/// contribute.
fn activation_ratio_excluded<T: Real>(
    state: &ModelState<T>,
    resp: &ArrayView2<T>,
    sigma2: &[T],
    fit_excl: &Array2<T>,
    h: usize,
) -> T {
    let (n, p) = (resp.nrows(), resp.ncols());
    let half = T::from_f64(0.5);
    let mut delta = T::zero();
    for j in 0..p {
        if state.phi[(j, h)] == 0 {
            continue;
        }
        let lam = state.lambda_star[(j, h)];
        let inv2s = half / sigma2[j];
        let mut acc = T::zero();
        for i in 0..n {
            let r = resp[(i, j)] - fit_excl[(i, j)];
            let c = state.eta[(i, h)] * lam;
            acc += (r - c) * (r - c) - r * r;
        }
        delta -= inv2s * acc;
    }
    delta
}

/// Unnormalized log weights of the stick indicator z_h over l = 1..H:
/// ln w_l plus the activation ratio for l > h. `fit` must reflect the
/// current state including column h; it is restored before returning.
pub fn column_indicator_log_weights<T: Real>(
    state: &ModelState<T>,
    resp: &ArrayView2<T>,
    sigma2: &[T],
    fit: &mut Array2<T>,
    h: usize,
) -> Result<Vec<T>> {
    let (w, _pi) = stick_breaking(&state.v)?;
    let was_active = state.rho[h] == 1;
    if was_active {
        subtract_column_contribution(state, fit, h, T::one());
    }
    let delta = activation_ratio_excluded(state, resp, sigma2, fit, h);
    if was_active {
        subtract_column_contribution(state, fit, h, -T::one());
    }
    Ok((0..state.h)
        .map(|l| {
            let lw = w[l].ln();
            if l > h {
                lw + delta
            } else {
                lw
            }
        })
        .collect())
}

fn subtract_column_contribution<T: Real>(
    state: &ModelState<T>,
    fit: &mut Array2<T>,
    h: usize,
    sign: T,
) {
    let (n, p) = fit.dim();
    for j in 0..p {
        if state.phi[(j, h)] == 0 {
            continue;
        }
        let lam = state.lambda_star[(j, h)] * sign;
        for i in 0..n {
            fit[(i, j)] -= state.eta[(i, h)] * lam;
        }
    }
}

/// Step 5: refresh the column scales.
///
/// 5.1 draws each stick indicator z_h from its categorical full
/// conditional and sets rho_h = 1(z_h > h); 5.2 refreshes the column
/// variances; 5.3 refreshes the stick fractions. `fit` is updated in
/// place as activations flip.
pub fn update_column_scales<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    resp: &ArrayView2<T>,
    sigma2: &[T],
    hyper: &Hyperparameters<T>,
    fit: &mut Array2<T>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let (p, h) = (state.p(), state.h);
    let half = T::from_f64(0.5);

    // 5.1: categorical indicators, sequential over columns.
    let mut z = vec![0usize; h];
    for hh in 0..h {
        if state.rho[hh] == 1 {
            subtract_column_contribution(state, fit, hh, T::one());
        }
        let delta = activation_ratio_excluded(state, resp, sigma2, fit, hh);
        let (w, _pi) = stick_breaking(&state.v)?;
        let log_weights: Vec<T> = (0..h)
            .map(|l| {
                let lw = w[l].ln();
                if l > hh {
                    lw + delta
                } else {
                    lw
                }
            })
            .collect();
        let zi = rv::sample_categorical_log(&log_weights, rng)?;
        z[hh] = zi + 1; // 1-based stick index
        state.rho[hh] = (zi > hh) as u8;
        if state.rho[hh] == 1 {
            subtract_column_contribution(state, fit, hh, -T::one());
        }
    }

    // 5.2: inverse-gamma refresh of the column variances.
    for hh in 0..h {
        let mut ss = T::zero();
        for j in 0..p {
            let l = state.lambda_star[(j, hh)];
            ss += l * l;
        }
        let shape = hyper.a_theta + half * T::from_usize(p);
        let rate = hyper.b_theta + half * ss;
        state.theta[hh] = T::one() / rv::sample_gamma(shape, rate, rng)?;
    }

    // 5.3: stick refresh with the standard slice counts.
    for l in 1..=h.saturating_sub(1) {
        let eq: usize = z.iter().filter(|&&zh| zh == l).count();
        let gt: usize = z.iter().filter(|&&zh| zh > l).count();
        let a = T::one() + T::from_usize(eq);
        let b = hyper.alpha + T::from_usize(gt);
        state.v[l - 1] = rv::sample_beta(a, b, rng)?;
    }
    state.v[h - 1] = T::one();
    Ok(z)
}

/// Log odds of phi_{jh} = 1 against 0 given the residual of row j with
/// column h's contribution removed.
fn local_scale_log_odds<T: Real>(
    state: &ModelState<T>,
    resp_col: &[T],
    base_resid: &[T],
    sigma2_j: T,
    x_beta: T,
    c_p: T,
    j: usize,
    h: usize,
) -> T {
    let half = T::from_f64(0.5);
    let s = logistic(x_beta) * c_p;
    let mut lo = s.ln() - (T::one() - s).ln();
    let _ = resp_col;
    if state.rho[h] == 1 {
        let lam = state.lambda_star[(j, h)];
        let inv2s = half / sigma2_j;
        let mut acc = T::zero();
        for (i, &r) in base_resid.iter().enumerate() {
            let c = state.eta[(i, h)] * lam;
            acc += (r - c) * (r - c) - r * r;
        }
        lo -= inv2s * acc;
    }
    lo
}

/// Step 6: refresh the local scale indicators, independently across rows
/// and sequentially over columns within a row. `fit` is kept in sync.
pub fn update_local_scales<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    resp: &ArrayView2<T>,
    sigma2: &[T],
    x: &ArrayView2<T>,
    hyper: &Hyperparameters<T>,
    fit: &mut Array2<T>,
    rng: &mut R,
) -> Result<()> {
    let (n, p, h) = (resp.nrows(), state.p(), state.h);
    let mut resid = vec![T::zero(); n];
    for j in 0..p {
        for i in 0..n {
            resid[i] = resp[(i, j)] - fit[(i, j)];
        }
        for hh in 0..h {
            let active = state.rho[hh] == 1;
            let lam = state.lambda_star[(j, hh)];
            // Remove the current contribution so resid is the phi = 0 base.
            if active && state.phi[(j, hh)] == 1 {
                for i in 0..n {
                    resid[i] += state.eta[(i, hh)] * lam;
                }
            }
            let x_beta = x.row(j).dot(&state.beta.column(hh));
            let col: Vec<T> = Vec::new();
            let lo = local_scale_log_odds(
                state, &col, &resid, sigma2[j], x_beta, hyper.c_p, j, hh,
            );
            let prob1 = logistic(lo);
            state.phi[(j, hh)] = (T::unit(rng) < prob1) as u8;
            if active && state.phi[(j, hh)] == 1 {
                for i in 0..n {
                    resid[i] -= state.eta[(i, hh)] * lam;
                }
            }
        }
        for i in 0..n {
            fit[(i, j)] = resp[(i, j)] - resid[i];
        }
    }
    Ok(())
}

/// Probit steps 1-2: refresh the regression coefficients mu_j and the
/// trait coefficient rows of b from their conjugate Gaussian conditionals.
pub fn update_regression_means<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    w: &ArrayView2<T>,
    x: &ArrayView2<T>,
    hyper: &Hyperparameters<T>,
    rng: &mut R,
) -> Result<()> {
    let (p, q) = (state.p(), state.q());
    let c = w.ncols();
    if state.mu.dim() != (p, c) || state.b.dim() != (c, q) {
        return Err(invalid_arg!("probit state blocks not initialized"));
    }
    let inv_mu2 = T::one() / (hyper.sigma_mu * hyper.sigma_mu);
    let inv_b2 = T::one() / (hyper.sigma_b * hyper.sigma_b);

    // Step 1: mu_j ~ N_c[(sigma_mu^-2 I + w'w)^-1 {w'(z_j - eta lambda_j)
    // + sigma_mu^-2 b x_j}, (sigma_mu^-2 I + w'w)^-1].
    let lambda = crate::model::effective_loadings(state);
    let factor_fit = state.eta.dot(&lambda.t()); // n x p
    let mut prec = w.t().dot(w);
    for a in 0..c {
        prec[(a, a)] += inv_mu2;
    }
    linalg::symmetrize(&mut prec);
    let l = linalg::cholesky(&prec.view())?;
    for j in 0..p {
        let resid = Array1::from_iter((0..w.nrows()).map(|i| state.z[(i, j)] - factor_fit[(i, j)]));
        let prior_mean = state.b.dot(&x.row(j)); // c-vector
        let rhs = w.t().dot(&resid) + &(&prior_mean * inv_mu2);
        let mean = linalg::chol_solve(&l.view(), &rhs.view());
        let draw = linalg::sample_mvn_from_precision_chol(&mean.view(), &l.view(), rng);
        state.mu.row_mut(j).assign(&draw);
    }

    // Step 2: row l of b ~ N_q{(sigma_b^-2 I + sigma_mu^-2 x'x)^-1
    // sigma_mu^-2 x' mu^(l), same precision}.
    let mut prec_b = x.t().dot(x) * inv_mu2;
    for a in 0..q {
        prec_b[(a, a)] += inv_b2;
    }
    linalg::symmetrize(&mut prec_b);
    let lb = linalg::cholesky(&prec_b.view())?;
    for lrow in 0..c {
        let mu_l = state.mu.column(lrow);
        let rhs = x.t().dot(&mu_l) * inv_mu2;
        let mean = linalg::chol_solve(&lb.view(), &rhs.view());
        let draw = linalg::sample_mvn_from_precision_chol(&mean.view(), &lb.view(), rng);
        state.b.row_mut(lrow).assign(&draw);
    }
    Ok(())
}

/// Probit step 3: refresh the latent utilities from truncated normals and
/// return the residuals eps = z - w mu' used by the downstream steps.
pub fn update_latent_utilities<T: Real, R: Rng + ?Sized>(
    state: &mut ModelState<T>,
    y: &ArrayView2<T>,
    w: &ArrayView2<T>,
    rng: &mut R,
) -> Result<Array2<T>> {
    let (n, p) = (y.nrows(), y.ncols());
    let lambda = crate::model::effective_loadings(state);
    let factor_fit = state.eta.dot(&lambda.t());
    let reg_fit = w.dot(&state.mu.t()); // n x p
    for i in 0..n {
        for j in 0..p {
            let mean = factor_fit[(i, j)] + reg_fit[(i, j)];
            let (lo, hi) = if y[(i, j)] == T::one() {
                (T::zero(), T::infinity())
            } else {
                (T::neg_infinity(), T::zero())
            };
            state.z[(i, j)] = rv::sample_truncated_normal(mean, T::one(), lo, hi, rng)?;
        }
    }
    Ok(&state.z - &reg_fit)
}
