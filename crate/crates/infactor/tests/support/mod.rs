//! Shared machinery for the acceptance suite: Kolmogorov-Smirnov checks,
//! special-function CDFs used as independent oracles, the Geweke
//! joint-distribution harness, and the synthetic probit generator.

use infactor::gibbs::{gaussian_sweep, ChainConfig};
use infactor::model::{Dataset, Hyperparameters, Mode, ModelState};
use infactor::priors::{sample_sis_prior, stick_breaking};
use infactor::rng::RngStream;
use infactor::rv;
use infactor::scalar::Real;
use ndarray::Array2;
use rand::Rng;

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut Vec<f64>, cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_crit_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Run a KS test at the 1% level; Err carries the diagnostic.
pub fn ks_check<F: Fn(f64) -> f64>(
    name: &str,
    mut samples: Vec<f64>,
    cdf: F,
) -> Result<(), String> {
    let n = samples.len();
    let d = ks_statistic(&mut samples, cdf);
    let crit = ks_crit_1pct(n);
    if d < crit {
        Ok(())
    } else {
        Err(format!("{name}: KS statistic {d:.5} >= 1% critical {crit:.5} (n={n})"))
    }
}

/// Regularized lower incomplete gamma P(a, x) by series / continued
/// fraction (Numerical Recipes style).
pub fn reg_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_ga = libm::lgamma(a);
    if x < a + 1.0 {
        // Series representation.
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_ga).exp()
    } else {
        // Continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        1.0 - (-x + a * x.ln() - ln_ga).exp() * h
    }
}

/// CDF of Ga(shape, rate) with mean shape/rate.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    reg_gamma_p(shape, rate * x)
}

/// Regularized incomplete beta I_x(a, b) by continued fraction.
pub fn reg_beta_i(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    let symmetric = x > (a + 1.0) / (a + b + 2.0);
    let (a, b, x) = if symmetric { (b, a, 1.0 - x) } else { (a, b, x) };
    // Lentz continued fraction.
    let tiny = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..500 {
        let m = m as f64;
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-14 {
            break;
        }
    }
    let value = front * h / a;
    if symmetric {
        1.0 - value
    } else {
        value
    }
}

pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    reg_beta_i(a, b, x)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(mean: f64, var: f64, x: f64) -> f64 {
    std_normal_cdf((x - mean) / var.sqrt())
}

/// Series oracle for the PG(1, c) mean from the sum-of-gammas
/// representation: (1/(2 pi^2)) sum_k 1/((k - 1/2)^2 + (c/(2 pi))^2).
pub fn pg_mean_series(c: f64, terms: usize) -> f64 {
    let q2 = (c / (2.0 * std::f64::consts::PI)).powi(2);
    let mut sum = 0.0;
    for k in 1..=terms {
        let km = k as f64 - 0.5;
        sum += 1.0 / (km * km + q2);
    }
    // Integral tail bound past the truncation point.
    sum += 1.0 / (terms as f64 - 0.5);
    sum / (2.0 * std::f64::consts::PI * std::f64::consts::PI)
}

/// Series oracle for the PG(1, c) variance: same representation with
/// exponential weights of unit variance.
pub fn pg_var_series(c: f64, terms: usize) -> f64 {
    let q2 = (c / (2.0 * std::f64::consts::PI)).powi(2);
    let scale = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::PI);
    let mut sum = 0.0;
    for k in 1..=terms {
        let km = k as f64 - 0.5;
        let a = scale / (km * km + q2);
        sum += a * a;
    }
    sum
}

/// Small fixed design for the Geweke model: n = 5, p = 4, q = 2, H = 3.
pub struct GewekeSetup {
    pub hyper: Hyperparameters<f64>,
    pub x: Array2<f64>,
    pub n: usize,
    pub p: usize,
    pub h: usize,
}

pub fn geweke_setup() -> GewekeSetup {
    let mut hyper = Hyperparameters::<f64>::default_for(4);
    hyper.alpha = 2.0;
    hyper.a_theta = 3.0;
    hyper.b_theta = 2.0;
    hyper.a_sigma = 3.0;
    hyper.b_sigma = 2.0;
    hyper.sigma_beta = 0.8;
    hyper.c_p = 0.5;
    let x = ndarray::array![[1.0, 0.5], [1.0, -0.5], [1.0, 1.0], [1.0, -1.0]];
    GewekeSetup {
        hyper,
        x,
        n: 5,
        p: 4,
        h: 3,
    }
}

/// Draw (state, y) from the prior and likelihood.
pub fn geweke_forward<R: Rng + ?Sized>(setup: &GewekeSetup, rng: &mut R) -> (ModelState<f64>, Array2<f64>) {
    let draw = sample_sis_prior(&setup.hyper, setup.p, setup.h, &setup.x.view(), rng).unwrap();
    let sigma2: Vec<f64> = (0..setup.p)
        .map(|_| 1.0 / rv::sample_gamma(setup.hyper.a_sigma, setup.hyper.b_sigma, rng).unwrap())
        .collect();
    let eta = Array2::from_shape_fn((setup.n, setup.h), |_| f64::std_normal(rng));
    let mut lambda_star = Array2::<f64>::zeros((setup.p, setup.h));
    for hh in 0..setup.h {
        for j in 0..setup.p {
            lambda_star[(j, hh)] = if draw.lambda[(j, hh)] != 0.0 {
                draw.lambda[(j, hh)]
            } else {
                // The non-degenerate coordinate behind a structural zero.
                draw.theta[hh].sqrt() * f64::std_normal(rng)
            };
        }
    }
    let state = ModelState {
        h: setup.h,
        lambda_star,
        phi: draw.phi.clone(),
        rho: draw.rho.clone(),
        theta: draw.theta.clone(),
        v: draw.v.clone(),
        beta: draw.beta.clone(),
        sigma2,
        eta,
        mu: Array2::zeros((0, 0)),
        b: Array2::zeros((0, 0)),
        z: Array2::zeros((0, 0)),
    };
    let y = draw_data(setup, &state, rng);
    (state, y)
}

/// y | state ~ N(eta Lambda', Sigma) row by row.
pub fn draw_data<R: Rng + ?Sized>(
    setup: &GewekeSetup,
    state: &ModelState<f64>,
    rng: &mut R,
) -> Array2<f64> {
    let lambda = infactor::model::effective_loadings(state);
    let fit = state.eta.dot(&lambda.t());
    Array2::from_shape_fn((setup.n, setup.p), |(i, j)| {
        fit[(i, j)] + state.sigma2[j].sqrt() * f64::std_normal(rng)
    })
}

/// Tracked statistics of one state.
pub fn geweke_stats(state: &ModelState<f64>) -> Vec<f64> {
    let lambda = infactor::model::effective_loadings(state);
    let p = state.p();
    let col1_ms: f64 = (0..p).map(|j| lambda[(j, 0)].powi(2)).sum::<f64>() / p as f64;
    let eta_ms: f64 =
        state.eta.iter().map(|e| e * e).sum::<f64>() / state.eta.len() as f64;
    vec![
        col1_ms,
        state.h_active() as f64,
        state.sigma2[0],
        state.beta[(0, 0)],
        eta_ms,
    ]
}

pub const GEWEKE_STAT_NAMES: [&str; 5] = [
    "mean lambda_col1^2",
    "H_a",
    "sigma_1^2",
    "beta_11",
    "mean eta^2",
];

pub struct GewekeOutcome {
    pub name: &'static str,
    pub forward_mean: f64,
    pub chain_mean: f64,
    pub zscore: f64,
}

/// Forward (marginal-conditional) versus successive-conditional moments.
pub fn run_geweke(n_forward: usize, n_chain: usize, seed: u64) -> Vec<GewekeOutcome> {
    let setup = geweke_setup();
    let stream = RngStream::new(seed);

    // Marginal-conditional: iid prior + likelihood draws.
    let mut rng = stream.stream(1);
    let k = GEWEKE_STAT_NAMES.len();
    let mut fwd_sum = vec![0.0; k];
    let mut fwd_sq = vec![0.0; k];
    for _ in 0..n_forward {
        let (state, _y) = geweke_forward(&setup, &mut rng);
        for (i, s) in geweke_stats(&state).into_iter().enumerate() {
            fwd_sum[i] += s;
            fwd_sq[i] += s * s;
        }
    }

    // Successive-conditional: Gibbs sweep, then refresh the data.
    let mut rng = stream.stream(2);
    let (mut state, y0) = geweke_forward(&setup, &mut rng);
    let x = setup.x.clone();
    let mut data = Dataset::new(y0, x, None, Mode::Gaussian).unwrap();
    let burn = n_chain / 20;
    let n_batches = 100;
    let batch_len = n_chain / n_batches;
    let mut batch_means = vec![vec![0.0f64; n_batches]; k];
    let mut kept = 0usize;
    let total = burn + n_batches * batch_len;
    for it in 0..total {
        gaussian_sweep(&mut state, &data, &setup.hyper, it + 1, &mut rng).unwrap();
        data.y = draw_data(&setup, &state, &mut rng);
        if it >= burn {
            let b = kept / batch_len;
            for (i, s) in geweke_stats(&state).into_iter().enumerate() {
                batch_means[i][b] += s / batch_len as f64;
            }
            kept += 1;
        }
    }

    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let fm = fwd_sum[i] / n_forward as f64;
        let fvar = (fwd_sq[i] / n_forward as f64 - fm * fm).max(0.0);
        let fse2 = fvar / n_forward as f64;
        let cm: f64 = batch_means[i].iter().sum::<f64>() / n_batches as f64;
        let cvar: f64 = batch_means[i]
            .iter()
            .map(|m| (m - cm) * (m - cm))
            .sum::<f64>()
            / (n_batches as f64 - 1.0);
        let cse2 = cvar / n_batches as f64;
        let z = (fm - cm) / (fse2 + cse2).sqrt();
        out.push(GewekeOutcome {
            name: GEWEKE_STAT_NAMES[i],
            forward_mean: fm,
            chain_mean: cm,
            zscore: z,
        });
    }
    out
}

/// Synthetic multivariate probit dataset with known loadings and
/// regression coefficients.
pub struct ProbitTruth {
    pub lambda0: Array2<f64>,
    pub mu0: Array2<f64>,
    pub data: Dataset<f64>,
}

pub fn generate_probit_dataset(
    n: usize,
    p: usize,
    k: usize,
    c: usize,
    seed: u64,
) -> ProbitTruth {
    let mut rng = RngStream::new(seed).stream(3);
    // Clear-signal loadings: |lambda| >= 1/3.
    let mut lambda0 = Array2::from_shape_fn((p, k), |_| f64::std_normal(&mut rng));
    for v in lambda0.iter_mut() {
        while v.abs() < 1.0 / 3.0 {
            *v = f64::std_normal(&mut rng);
        }
    }
    let mu0 = Array2::from_shape_fn((p, c), |_| 0.5 * f64::std_normal(&mut rng));
    let w = Array2::from_shape_fn((n, c), |(_, j)| {
        if j == 0 {
            1.0
        } else {
            f64::std_normal(&mut rng)
        }
    });
    let mut y = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let eta: Vec<f64> = (0..k).map(|_| f64::std_normal(&mut rng)).collect();
        for j in 0..p {
            let mut m = 0.0;
            for l in 0..c {
                m += w[(i, l)] * mu0[(j, l)];
            }
            for h in 0..k {
                m += lambda0[(j, h)] * eta[h];
            }
            let z = m + f64::std_normal(&mut rng);
            y[(i, j)] = (z > 0.0) as u8 as f64;
        }
    }
    let x = Array2::<f64>::ones((p, 1));
    let data = Dataset::new(y, x, Some(w), Mode::Probit).unwrap();
    ProbitTruth { lambda0, mu0, data }
}

/// Mean squared error between off-diagonal entries of two correlation
/// matrices.
pub fn correlation_mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let p = a.nrows();
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                let d = a[(i, j)] - b[(i, j)];
                acc += d * d;
                count += 1;
            }
        }
    }
    acc / count as f64
}

/// Empirical frequencies compared against exact category probabilities at
/// three Monte Carlo standard errors.
pub fn check_frequencies(
    name: &str,
    counts: &[usize],
    probs: &[f64],
    n: usize,
) -> Result<(), String> {
    for (i, (&c, &p)) in counts.iter().zip(probs).enumerate() {
        let freq = c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
        if (freq - p).abs() > 3.0 * se {
            return Err(format!(
                "{name}: category {i} frequency {freq:.4} vs {p:.4} (3 MCSE = {:.4})",
                3.0 * se
            ));
        }
    }
    Ok(())
}

/// Check the chain configuration used by the small sweeps is valid.
pub fn fixed_h_config(h: usize, seed: u64) -> ChainConfig<f64> {
    let mut config = ChainConfig::<f64>::default_gaussian(seed);
    config.alpha0 = f64::NEG_INFINITY;
    config.h_init = Some(h);
    config
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}
