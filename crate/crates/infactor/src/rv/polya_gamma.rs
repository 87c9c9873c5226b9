//! Exact Pólya-Gamma PG(1, c) sampling.
//!
//! Devroye-style alternating-series rejection sampler for J*(1, z) with
//! z = |c|/2, returning J*/4. The proposal mixes a truncated inverse
//! Gaussian on (0, t) with an exponential tail beyond t = 2/π, and the
//! alternating partial sums of the Jacobi theta series decide acceptance,
//! so draws are exact rather than truncated-sum approximations.

use crate::error::{invalid_arg, Result};
use crate::scalar::Real;
use rand::Rng;

const TRUNC: f64 = std::f64::consts::FRAC_2_PI;

/// Draw from PG(1, c). The distribution depends on c only through |c|.
pub fn sample_polya_gamma_1<T: Real, R: Rng + ?Sized>(c: T, rng: &mut R) -> Result<T> {
    if !c.is_finite() {
        return Err(invalid_arg!("polya-gamma tilt must be finite, got {c}"));
    }
    let z = c.as_f64().abs() * 0.5;
    Ok(T::from_f64(0.25 * sample_jacobi_star(z, rng)))
}

/// J*(1, z) by alternating-series rejection.
fn sample_jacobi_star<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let k = std::f64::consts::PI * std::f64::consts::PI / 8.0 + z * z / 2.0;
    let p_tail = std::f64::consts::FRAC_PI_2 / k * (-k * t).exp();
    let q_body = 2.0 * (-z).exp() * inverse_gaussian_cdf(t, z);
    let ratio = p_tail / (p_tail + q_body);

    loop {
        let u: f64 = f64::unit(rng);
        let x = if u < ratio {
            // Exponential tail beyond t.
            t + f64::exp1(rng) / k
        } else {
            sample_truncated_inverse_gaussian(z, t, rng)
        };

        // Alternating series acceptance: S_1 > S_3 > ... > f > ... > S_2 > S_0
        let mut s = series_coef(0, x);
        let y = f64::unit(rng) * s;
        let mut n = 0usize;
        loop {
            n += 1;
            let a = series_coef(n, x);
            if n % 2 == 1 {
                s -= a;
                if y <= s {
                    return x;
                }
            } else {
                s += a;
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Coefficients a_n(x) of the J*(1) density series, in the piecewise form
/// appropriate on either side of the truncation point.
fn series_coef(n: usize, x: f64) -> f64 {
    let np = n as f64 + 0.5;
    if x <= TRUNC {
        let two_over_pix = 2.0 / (std::f64::consts::PI * x);
        std::f64::consts::PI
            * np
            * two_over_pix.powf(1.5)
            * (-2.0 * np * np / x).exp()
    } else {
        std::f64::consts::PI
            * np
            * (-np * np * std::f64::consts::PI * std::f64::consts::PI * x / 2.0).exp()
    }
}

/// CDF at `t` of the inverse Gaussian with mean 1/z and shape 1; the z = 0
/// limit is the Lévy distribution.
fn inverse_gaussian_cdf(t: f64, z: f64) -> f64 {
    let sqrt_inv_t = (1.0 / t).sqrt();
    if z <= 0.0 {
        return 2.0 * (-sqrt_inv_t).std_normal_cdf();
    }
    let a = (sqrt_inv_t * (t * z - 1.0)).std_normal_cdf();
    let b = (-sqrt_inv_t * (t * z + 1.0)).std_normal_cdf();
    // exp(2z) * b can be 0 * inf in the extreme tail; expand in log space.
    let lb = if b > 0.0 {
        (2.0 * z + b.ln()).exp()
    } else {
        0.0
    };
    a + lb
}

/// Inverse Gaussian IG(1/z, 1) restricted to (0, t).
fn sample_truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, t: f64, rng: &mut R) -> f64 {
    if z < 1.0 / t {
        // Large-mean regime: inverse-chi-square style proposal with an
        // exp(-z² x / 2) thinning step.
        loop {
            let mut e1: f64 = f64::exp1(rng);
            let mut e2: f64 = f64::exp1(rng);
            while e1 * e1 > 2.0 * e2 / t {
                e1 = f64::exp1(rng);
                e2 = f64::exp1(rng);
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            if f64::unit(rng) <= (-z * z * x / 2.0).exp() {
                return x;
            }
        }
    } else {
        // Ordinary IG sampling with rejection until the draw lands in (0, t).
        let mu = 1.0 / z;
        loop {
            let y = {
                let n = f64::std_normal(rng);
                n * n
            };
            let muy = mu * y;
            let mut x = mu + 0.5 * mu * muy - 0.5 * mu * (4.0 * muy + muy * muy).sqrt();
            if f64::unit(rng) > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}
