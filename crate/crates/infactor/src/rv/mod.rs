//! Random variate kernels used by the samplers.
//!
//! Gamma draws follow the shape-rate convention throughout: `Ga(a, b)` has
//! mean `a/b` and variance `a/b²`. This matters; shape-scale confusion is
//! the classic reproduction bug in Gibbs samplers, so every wrapper here
//! takes a rate.

mod polya_gamma;
mod truncated_normal;

pub use polya_gamma::sample_polya_gamma_1;
pub use truncated_normal::sample_truncated_normal;

use crate::error::{invalid_arg, Result};
use crate::scalar::Real;
use rand::Rng;

/// Draw from Ga(shape, rate), mean shape/rate.
pub fn sample_gamma<T: Real, R: Rng + ?Sized>(shape: T, rate: T, rng: &mut R) -> Result<T> {
    if !(shape > T::zero()) || !(rate > T::zero()) || !shape.is_finite() || !rate.is_finite() {
        return Err(invalid_arg!("gamma requires finite positive shape and rate"));
    }
    Ok(T::gamma_shape_scale(shape, T::one() / rate, rng))
}

/// Draw from the inverse gamma with the given shape and rate of the
/// underlying gamma: X = 1/G with G ~ Ga(shape, rate), so E(X) = rate/(shape-1).
pub fn sample_inverse_gamma<T: Real, R: Rng + ?Sized>(shape: T, rate: T, rng: &mut R) -> Result<T> {
    Ok(T::one() / sample_gamma(shape, rate, rng)?)
}

/// Draw from Be(a, b), mean a/(a+b).
pub fn sample_beta<T: Real, R: Rng + ?Sized>(a: T, b: T, rng: &mut R) -> Result<T> {
    if !(a > T::zero()) || !(b > T::zero()) || !a.is_finite() || !b.is_finite() {
        return Err(invalid_arg!("beta requires finite positive parameters"));
    }
    Ok(T::beta_ab(a, b, rng))
}

/// Categorical draw from unnormalized log weights.
///
/// Index l is returned with probability exp(lw_l - logsumexp(lw)); stable
/// for log weights as small as -1e6. At least one weight must be finite.
pub fn sample_categorical_log<T: Real, R: Rng + ?Sized>(
    log_weights: &[T],
    rng: &mut R,
) -> Result<usize> {
    let max = log_weights
        .iter()
        .cloned()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        return Err(invalid_arg!(
            "categorical draw requires at least one finite log weight"
        ));
    }
    let mut total = T::zero();
    let mut cumulative = Vec::with_capacity(log_weights.len());
    for &lw in log_weights {
        total += (lw - max).exp();
        cumulative.push(total);
    }
    let u = T::unit(rng) * total;
    for (i, &c) in cumulative.iter().enumerate() {
        if u < c {
            return Ok(i);
        }
    }
    // u == total can occur from rounding; return the last finite-weight index.
    Ok(log_weights
        .iter()
        .rposition(|w| w.is_finite())
        .expect("finite weight exists"))
}
