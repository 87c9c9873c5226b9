//! Domain types and deterministic model algebra.
//!
//! The latent factor model is y_i = Λ η_i + ε_i with Ω = var(z_i) =
//! Λ Ψ Λᵀ + Σ. Loadings decompose as λ_{jh} = λ*_{jh} √ρ_h √φ_{jh}, so a
//! zero column indicator ρ_h or local indicator φ_{jh} produces exact
//! (bit-level) zeros in the effective loadings.

use crate::error::{dim_mismatch, invalid_arg, Error, Result};
use crate::linalg;
use crate::scalar::Real;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gaussian,
    Probit,
}

/// Observed data: responses, meta covariates for the p variables, and
/// (probit only) environmental covariates for the n observations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<T: Real> {
    pub y: Array2<T>,
    pub x: Array2<T>,
    pub w: Option<Array2<T>>,
    pub mode: Mode,
}

impl<T: Real> Dataset<T> {
    pub fn new(y: Array2<T>, x: Array2<T>, w: Option<Array2<T>>, mode: Mode) -> Result<Self> {
        let ds = Dataset { y, x, w, mode };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = (self.n(), self.p());
        if n == 0 || p == 0 {
            return Err(invalid_arg!("response matrix must be non-empty"));
        }
        if self.x.nrows() != p {
            return Err(dim_mismatch!(
                "meta covariate matrix has {} rows, expected p = {}",
                self.x.nrows(),
                p
            ));
        }
        if self.x.ncols() == 0 {
            return Err(invalid_arg!("meta covariate matrix must have q >= 1 columns"));
        }
        if let Some(w) = &self.w {
            if w.nrows() != n {
                return Err(dim_mismatch!(
                    "environmental covariate matrix has {} rows, expected n = {}",
                    w.nrows(),
                    n
                ));
            }
        }
        for (idx, &v) in self.y.indexed_iter() {
            match self.mode {
                Mode::Gaussian => {
                    if !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "non-finite response at row {}, column {}",
                            idx.0, idx.1
                        )));
                    }
                }
                Mode::Probit => {
                    if !(v == T::zero() || v == T::one()) {
                        return Err(Error::Validation(format!(
                            "probit response must be 0 or 1, got {} at row {}, column {}",
                            v, idx.0, idx.1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fixed prior constants.
///
/// Gamma distributions are shape-rate: Ga(a, b) has mean a/b.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Hyperparameters<T: Real> {
    /// Prior expected number of active factors.
    pub alpha: T,
    /// Inverse gamma shape for the column scales; must exceed 1.
    pub a_theta: T,
    /// Inverse gamma rate for the column scales.
    pub b_theta: T,
    /// Standard deviation of the shrinkage coefficients beta.
    pub sigma_beta: T,
    /// Gamma shape for the noise precisions.
    pub a_sigma: T,
    /// Gamma rate for the noise precisions.
    pub b_sigma: T,
    /// Offset of the local-scale link, in (0, 1).
    pub c_p: T,
    /// Probit regression coefficient scale.
    pub sigma_mu: T,
    /// Probit trait coefficient scale.
    pub sigma_b: T,
    /// Diagonal factor covariance; `None` means the identity.
    pub psi: Option<Vec<T>>,
}

impl<T: Real> Hyperparameters<T> {
    /// Paper-style defaults for a problem with `p` observed variables:
    /// a_sigma = 1, b_sigma = 0.3, sigma_beta = 1, c_p = 2e log(p)/p
    /// (clamped below 1 for small p), alpha = 5, a_theta = b_theta = 2.
    pub fn default_for(p: usize) -> Self {
        Hyperparameters {
            alpha: T::from_f64(5.0),
            a_theta: T::from_f64(2.0),
            b_theta: T::from_f64(2.0),
            sigma_beta: T::one(),
            a_sigma: T::one(),
            b_sigma: T::from_f64(0.3),
            c_p: T::from_f64(default_c_p(p)),
            sigma_mu: T::one(),
            sigma_b: T::one(),
            psi: None,
        }
    }

    /// Prior mean of the column variance, b_theta/(a_theta - 1).
    pub fn theta0(&self) -> Result<T> {
        if !(self.a_theta > T::one()) {
            return Err(invalid_arg!("theta0 requires a_theta > 1"));
        }
        Ok(self.b_theta / (self.a_theta - T::one()))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            (self.alpha, "alpha"),
            (self.a_theta, "a_theta"),
            (self.b_theta, "b_theta"),
            (self.sigma_beta, "sigma_beta"),
            (self.a_sigma, "a_sigma"),
            (self.b_sigma, "b_sigma"),
            (self.sigma_mu, "sigma_mu"),
            (self.sigma_b, "sigma_b"),
        ];
        for (v, name) in pos {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(invalid_arg!("{name} must be strictly positive, got {v}"));
            }
        }
        if !(self.a_theta > T::one()) {
            return Err(invalid_arg!(
                "a_theta must exceed 1 for a finite prior column variance"
            ));
        }
        if !(self.c_p > T::zero() && self.c_p < T::one()) {
            return Err(invalid_arg!("c_p must lie in (0,1), got {}", self.c_p));
        }
        if let Some(psi) = &self.psi {
            if psi.iter().any(|&v| !(v > T::zero())) {
                return Err(invalid_arg!("psi diagonal must be strictly positive"));
            }
        }
        Ok(())
    }

    /// Diagonal of Psi for a model with `h` columns (identity by default,
    /// extended with ones past the configured length).
    pub fn psi_diag(&self, h: usize) -> Vec<T> {
        match &self.psi {
            None => vec![T::one(); h],
            Some(d) => (0..h)
                .map(|i| d.get(i).copied().unwrap_or_else(T::one))
                .collect(),
        }
    }
}

/// The offset c_p = 2e log(p)/p, clamped below 1 (the formula only lands in
/// (0,1) for p >= 15).
pub fn default_c_p(p: usize) -> f64 {
    let raw = 2.0 * std::f64::consts::E * (p as f64).ln() / p as f64;
    raw.min(0.95).max(1e-6)
}

/// All latent quantities of one Gibbs iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelState<T: Real> {
    /// Current truncation level.
    pub h: usize,
    /// Non-degenerate Gaussian loadings, p x H.
    pub lambda_star: Array2<T>,
    /// Local scale indicators, p x H, entries 0/1.
    pub phi: Array2<u8>,
    /// Column activity indicators, length H.
    pub rho: Vec<u8>,
    /// Column variances, length H.
    pub theta: Vec<T>,
    /// Stick-breaking fractions in (0,1], last element 1.
    pub v: Vec<T>,
    /// Shrinkage coefficients, q x H.
    pub beta: Array2<T>,
    /// Noise variances, length p (all ones in probit mode).
    pub sigma2: Vec<T>,
    /// Latent factors, n x H.
    pub eta: Array2<T>,
    /// Probit regression coefficients, p x c (empty in gaussian mode).
    pub mu: Array2<T>,
    /// Probit trait coefficients, c x q (empty in gaussian mode).
    pub b: Array2<T>,
    /// Probit latent utilities, n x p (empty in gaussian mode).
    pub z: Array2<T>,
}

impl<T: Real> ModelState<T> {
    pub fn p(&self) -> usize {
        self.lambda_star.nrows()
    }

    pub fn n(&self) -> usize {
        self.eta.nrows()
    }

    pub fn q(&self) -> usize {
        self.beta.nrows()
    }

    /// Number of active columns H_a.
    pub fn h_active(&self) -> usize {
        self.rho.iter().filter(|&&r| r == 1).count()
    }

    /// Structural well-formedness; used by tests and the engine's
    /// non-finite guard.
    pub fn validate(&self) -> Result<()> {
        let (p, h) = (self.p(), self.h);
        if self.lambda_star.ncols() != h
            || self.phi.dim() != (p, h)
            || self.rho.len() != h
            || self.theta.len() != h
            || self.v.len() != h
            || self.beta.ncols() != h
            || self.eta.ncols() != h
            || self.sigma2.len() != p
        {
            return Err(dim_mismatch!("model state blocks disagree on (p, H)"));
        }
        if h == 0 {
            return Err(invalid_arg!("truncation level must be at least 1"));
        }
        if self.v[h - 1] != T::one() {
            return Err(Error::Validation(
                "last stick-breaking fraction must be exactly 1".to_string(),
            ));
        }
        for &vl in &self.v {
            if !(vl > T::zero() && vl <= T::one()) {
                return Err(Error::Validation(format!(
                    "stick-breaking fraction {vl} outside (0,1]"
                )));
            }
        }
        if self.theta.iter().any(|t| !(t > &T::zero()))
            || self.sigma2.iter().any(|s| !(s > &T::zero()))
        {
            return Err(Error::Validation(
                "theta and sigma2 must stay strictly positive".to_string(),
            ));
        }
        if self.lambda_star.iter().any(|v| !v.is_finite())
            || self.beta.iter().any(|v| !v.is_finite())
            || self.eta.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Validation("non-finite state entry".to_string()));
        }
        Ok(())
    }
}

/// Covariance assembled from loadings and noise, with derived correlation
/// and partial correlation matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CovarianceView<T: Real> {
    pub omega: Array2<T>,
    pub correlation: Array2<T>,
    pub partial_correlation: Array2<T>,
}

/// Effective loadings Λ with λ_{jh} = λ*_{jh} √ρ_h √φ_{jh}.
///
/// Entries are exact zeros (not merely small) wherever an indicator is zero.
pub fn effective_loadings<T: Real>(state: &ModelState<T>) -> Array2<T> {
    let (p, h) = (state.p(), state.h);
    let mut lambda = Array2::<T>::zeros((p, h));
    for hh in 0..h {
        if state.rho[hh] == 0 {
            continue;
        }
        for j in 0..p {
            if state.phi[(j, hh)] == 1 {
                lambda[(j, hh)] = state.lambda_star[(j, hh)];
            }
        }
    }
    lambda
}

/// Ω = Λ Ψ Λᵀ + diag(σ²) together with correlation and partial correlation.
pub fn assemble_covariance<T: Real>(
    lambda: &ArrayView2<T>,
    psi: Option<&[T]>,
    sigma2: &[T],
) -> Result<CovarianceView<T>> {
    let (p, h) = (lambda.nrows(), lambda.ncols());
    if sigma2.len() != p {
        return Err(dim_mismatch!(
            "sigma2 has length {}, expected p = {}",
            sigma2.len(),
            p
        ));
    }
    if let Some(d) = psi {
        if d.len() != h {
            return Err(dim_mismatch!(
                "psi diagonal has length {}, expected H = {}",
                d.len(),
                h
            ));
        }
    }
    if sigma2.iter().any(|s| !(s > &T::zero())) {
        return Err(invalid_arg!("noise variances must be strictly positive"));
    }

    let scaled = match psi {
        None => lambda.to_owned(),
        Some(d) => {
            let mut s = lambda.to_owned();
            for (hh, &dh) in d.iter().enumerate() {
                s.column_mut(hh).mapv_inplace(|v| v * dh);
            }
            s
        }
    };
    let mut omega = scaled.dot(&lambda.t());
    for j in 0..p {
        omega[(j, j)] += sigma2[j];
    }
    linalg::symmetrize(&mut omega);

    let correlation = correlation_from_covariance(&omega.view());
    let partial_correlation = partial_correlation_from_correlation(&correlation.view())?;
    Ok(CovarianceView {
        omega,
        correlation,
        partial_correlation,
    })
}

/// Scale a covariance to unit diagonal, clamping rounding spill to [-1, 1].
pub fn correlation_from_covariance<T: Real>(omega: &ArrayView2<T>) -> Array2<T> {
    let p = omega.nrows();
    let inv_sd: Vec<T> = (0..p).map(|j| T::one() / omega[(j, j)].sqrt()).collect();
    let mut corr = Array2::<T>::zeros((p, p));
    for i in 0..p {
        corr[(i, i)] = T::one();
        for j in (i + 1)..p {
            let r = omega[(i, j)] * inv_sd[i] * inv_sd[j];
            let r = r.min(T::one()).max(-T::one());
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    corr
}

/// Partial correlations from the inverse of a correlation matrix, with
/// escalating diagonal jitter when the matrix is numerically singular.
pub fn partial_correlation_from_correlation<T: Real>(
    correlation: &ArrayView2<T>,
) -> Result<Array2<T>> {
    let p = correlation.nrows();
    let (l, _jitter) = linalg::cholesky_jittered(correlation)?;
    let precision = linalg::chol_inverse(&l.view());
    let mut pcor = Array2::<T>::zeros((p, p));
    for i in 0..p {
        pcor[(i, i)] = T::one();
        for j in (i + 1)..p {
            let v = -precision[(i, j)] / (precision[(i, i)] * precision[(j, j)]).sqrt();
            let v = v.min(T::one()).max(-T::one());
            pcor[(i, j)] = v;
            pcor[(j, i)] = v;
        }
    }
    Ok(pcor)
}

/// tr(Ω_{H_trunc}) / tr(Ω) where the truncated covariance keeps only the
/// first `h_trunc` columns of the effective loadings.
pub fn truncation_ratio<T: Real>(
    state: &ModelState<T>,
    psi: Option<&[T]>,
    h_trunc: usize,
) -> Result<T> {
    if h_trunc == 0 || h_trunc > state.h {
        return Err(invalid_arg!(
            "h_trunc must lie in [1, H] = [1, {}], got {h_trunc}",
            state.h
        ));
    }
    let lambda = effective_loadings(state);
    let psi = match psi {
        Some(d) => d.to_vec(),
        None => vec![T::one(); state.h],
    };
    let noise: T = state.sigma2.iter().cloned().sum();
    let col_mass = |h: usize| -> T {
        let mut s = T::zero();
        for j in 0..state.p() {
            s += lambda[(j, h)] * lambda[(j, h)];
        }
        s * psi[h]
    };
    let mut kept = noise;
    let mut total = noise;
    for h in 0..state.h {
        let m = col_mass(h);
        total += m;
        if h < h_trunc {
            kept += m;
        }
    }
    Ok(kept / total)
}

/// Proportion of variance explained by the factor part, tr(ΛΨΛᵀ)/tr(Ω).
pub fn variance_explained<T: Real>(state: &ModelState<T>, psi: Option<&[T]>) -> T {
    let lambda = effective_loadings(state);
    let psi = match psi {
        Some(d) => d.to_vec(),
        None => vec![T::one(); state.h],
    };
    let mut factor = T::zero();
    for h in 0..state.h {
        let mut s = T::zero();
        for j in 0..state.p() {
            s += lambda[(j, h)] * lambda[(j, h)];
        }
        factor += s * psi[h];
    }
    let noise: T = state.sigma2.iter().cloned().sum();
    factor / (factor + noise)
}
