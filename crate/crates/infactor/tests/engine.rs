//! Chain-level invariants of the adaptive Gibbs engine.

use infactor::gibbs::{adapt_truncation, run_chain, ChainConfig};
use infactor::model::{Dataset, Hyperparameters, Mode, ModelState};
use infactor::priors::stick_breaking;
use infactor::rng::RngStream;
use infactor::scalar::Real;
use infactor::sim::{generate_scenario, Scenario, ScenarioSpec};
use ndarray::Array2;

fn small_gaussian_setup(seed: u64) -> (Dataset<f64>, Hyperparameters<f64>, ChainConfig<f64>) {
    let spec = ScenarioSpec::<f64>::new(Scenario::A, 6, 2, 1.0, seed);
    let mut rng = RngStream::new(seed).stream(1);
    let mut spec2 = spec;
    spec2.n = 40;
    let data = generate_scenario(&spec2, &mut rng).unwrap();
    let x = Array2::<f64>::ones((6, 1));
    let dataset = Dataset::new(data.y, x, None, Mode::Gaussian).unwrap();
    let hyper = Hyperparameters::<f64>::default_for(6);
    let mut config = ChainConfig::<f64>::default_gaussian(seed);
    config.n_iterations = 400;
    config.burn_in = 150;
    config.thin = 5;
    config.record_log_density = false;
    (dataset, hyper, config)
}

#[test]
fn chains_are_deterministic_given_seed() {
    let (data, hyper, config) = small_gaussian_setup(31);
    let a = run_chain(&data, &hyper, &config).unwrap();
    let b = run_chain(&data, &hyper, &config).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let mut other = config.clone();
    other.seed = 32;
    let c = run_chain(&data, &hyper, &other).unwrap();
    assert_ne!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&c).unwrap()
    );
}

#[test]
fn retained_draw_count_matches_schedule() {
    let (data, hyper, mut config) = small_gaussian_setup(33);
    config.n_iterations = 105;
    config.burn_in = 100;
    config.thin = 5;
    let chain = run_chain(&data, &hyper, &config).unwrap();
    assert_eq!(chain.draws.len(), 1);
    assert_eq!(chain.h_active_trace.len(), 105);
}

#[test]
fn effective_zeros_are_bit_exact_in_every_draw() {
    let (data, hyper, config) = small_gaussian_setup(34);
    let chain = run_chain(&data, &hyper, &config).unwrap();
    let mut saw_zero = false;
    for snap in &chain.draws {
        let (p, h) = snap.lambda.dim();
        for hh in 0..h {
            for j in 0..p {
                let indicator_zero = snap.rho[hh] == 0 || snap.phi[(j, hh)] == 0;
                if indicator_zero {
                    saw_zero = true;
                    assert_eq!(snap.lambda[(j, hh)].to_bits(), 0.0f64.to_bits());
                } else {
                    assert_ne!(snap.lambda[(j, hh)], 0.0);
                }
            }
        }
    }
    assert!(saw_zero, "chain never produced an inactive cell");
}

#[test]
fn stick_weights_stay_on_the_simplex_across_adaptation() {
    let (data, hyper, mut config) = small_gaussian_setup(35);
    // Frequent adaptation to stress the resize paths.
    config.alpha0 = -0.2;
    config.alpha1 = -1e-4;
    config.n_iterations = 600;
    config.burn_in = 100;
    let chain = run_chain(&data, &hyper, &config).unwrap();
    assert!(
        chain.adaptation_iterations.len() > 50,
        "expected many adaptation events, got {}",
        chain.adaptation_iterations.len()
    );
    for snap in &chain.draws {
        let (w, pi) = stick_breaking(&snap.v).unwrap();
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((pi.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(*snap.v.last().unwrap(), 1.0);
    }
}

#[test]
fn adaptation_disabled_at_negative_infinity() {
    let (data, hyper, mut config) = small_gaussian_setup(36);
    config.alpha0 = f64::NEG_INFINITY;
    config.h_init = Some(4);
    let chain = run_chain(&data, &hyper, &config).unwrap();
    assert!(chain.adaptation_iterations.is_empty());
    assert!(chain.h_trace.iter().all(|&h| h == 4));
}

#[test]
fn adaptation_rule_drops_inactive_and_keeps_one_spare() {
    // H = 5 with rho = (1,1,1,0,0): a triggered adaptation must leave
    // H' = 4 with the active columns preserved in order.
    let mut rng = RngStream::new(37).stream(0);
    let p = 3;
    let h = 5;
    let mut state = ModelState {
        h,
        lambda_star: Array2::from_shape_fn((p, h), |(j, c)| (j * 10 + c) as f64 + 1.0),
        phi: Array2::from_elem((p, h), 1),
        rho: vec![1, 1, 1, 0, 0],
        theta: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        v: vec![0.3, 0.3, 0.3, 0.3, 1.0],
        beta: Array2::zeros((1, h)),
        sigma2: vec![1.0; p],
        eta: Array2::zeros((2, h)),
        mu: Array2::zeros((0, 0)),
        b: Array2::zeros((0, 0)),
        z: Array2::zeros((0, 0)),
    };
    let hyper = Hyperparameters::<f64>::default_for(p);
    let x = Array2::<f64>::ones((p, 1));
    let adapted = adapt_truncation(
        &mut state,
        1,
        &x.view(),
        &hyper,
        -1e-12, // probability essentially one
        -1e-12,
        &mut rng,
    )
    .unwrap();
    assert!(adapted);
    assert_eq!(state.h, 4);
    assert_eq!(state.rho, vec![1, 1, 1, 0]);
    for c in 0..3 {
        assert_eq!(state.theta[c], (c + 1) as f64);
        for j in 0..p {
            assert_eq!(state.lambda_star[(j, c)], (j * 10 + c) as f64 + 1.0);
        }
    }
    assert_eq!(*state.v.last().unwrap(), 1.0);
    state.validate().unwrap();

    // All columns active: the rule must grow instead.
    state.rho = vec![1, 1, 1, 1];
    let adapted = adapt_truncation(
        &mut state,
        2,
        &x.view(),
        &hyper,
        -1e-12,
        -1e-12,
        &mut rng,
    )
    .unwrap();
    assert!(adapted);
    assert_eq!(state.h, 5);
    assert_eq!(state.rho[4], 0);
    assert_eq!(*state.v.last().unwrap(), 1.0);
    assert!(state.v[3] < 1.0);
    state.validate().unwrap();
}

#[test]
fn adaptation_count_matches_geometric_sum_oracle() {
    // Expected number of adaptation events is sum_t exp(alpha0 + alpha1 t);
    // check the empirical count against a 3-sigma binomial band.
    let (data, hyper, mut config) = small_gaussian_setup(38);
    config.n_iterations = 4000;
    config.burn_in = 3500;
    config.alpha0 = -1.0;
    config.alpha1 = -5e-4;
    let chain = run_chain(&data, &hyper, &config).unwrap();
    let mut expected = 0.0;
    let mut variance = 0.0;
    for t in 1..=config.n_iterations {
        let p = (-1.0f64 - 5e-4 * t as f64).exp();
        expected += p;
        variance += p * (1.0 - p);
    }
    let got = chain.adaptation_iterations.len() as f64;
    assert!(
        (got - expected).abs() <= 3.0 * variance.sqrt(),
        "adaptations {got} vs expected {expected} +- {}",
        3.0 * variance.sqrt()
    );

    // Diminishing adaptation: late-window counts stay below the schedule
    // bound plus Monte Carlo slack.
    let t0 = 2000;
    let late: f64 = chain
        .adaptation_iterations
        .iter()
        .filter(|&&t| t > t0)
        .count() as f64;
    let mut bound = 0.0;
    let mut var_late = 0.0;
    for t in (t0 + 1)..=config.n_iterations {
        let p = (-1.0f64 - 5e-4 * t as f64).exp();
        bound += p;
        var_late += p * (1.0 - p);
    }
    assert!(late <= bound + 3.0 * var_late.sqrt());
}

#[test]
fn probit_chain_runs_and_respects_sign_constraints() {
    let mut rng = RngStream::new(39).stream(0);
    let (n, p, c) = (30, 4, 2);
    let w = Array2::from_shape_fn((n, c), |(_, j)| {
        if j == 0 {
            1.0
        } else {
            f64::std_normal(&mut rng)
        }
    });
    let y = Array2::from_shape_fn((n, p), |_| (f64::unit(&mut rng) < 0.5) as u8 as f64);
    let x = Array2::<f64>::ones((p, 1));
    let data = Dataset::new(y, x, Some(w), Mode::Probit).unwrap();
    let hyper = Hyperparameters::<f64>::default_for(p);
    let mut config = ChainConfig::<f64>::default_probit(40);
    config.n_iterations = 300;
    config.burn_in = 100;
    config.thin = 5;
    config.h_init = Some(3);
    config.record_log_density = true;
    let chain = run_chain(&data, &hyper, &config).unwrap();
    assert_eq!(chain.draws.len(), 40);
    assert_eq!(chain.log_density_trace.len(), 40);
    assert!(chain.log_density_trace.iter().all(|v| v.is_finite()));
    // Probit snapshots fix the noise at one.
    for snap in &chain.draws {
        assert!(snap.sigma2.iter().all(|&s| s == 1.0));
        assert_eq!(snap.mu.dim(), (p, c));
    }
}

#[test]
fn diverging_inputs_abort_with_diagnostics() {
    let (mut dataset, hyper, config) = small_gaussian_setup(41);
    dataset.y.mapv_inplace(|v| v * 1e200);
    let err = run_chain(&dataset, &hyper, &config).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("iteration") || msg.contains("non-finite"),
        "unexpected error: {msg}"
    );
}

#[test]
fn mode_mismatch_is_rejected() {
    let (data, hyper, mut config) = small_gaussian_setup(42);
    config.mode = Mode::Probit;
    assert!(run_chain(&data, &hyper, &config).is_err());
}

#[test]
fn mce_threshold_zero_equals_indicator_route() {
    // For SIS chains the exact-zero pattern of the loadings equals the
    // rho/phi indicator pattern, so MCE at threshold zero can be computed
    // from either.
    use infactor::sim::mean_classification_error;
    let (data, hyper, config) = small_gaussian_setup(43);
    let chain = run_chain(&data, &hyper, &config).unwrap();
    let spec = ScenarioSpec::<f64>::new(Scenario::B, 6, 2, 0.6, 44);
    let mut rng = RngStream::new(44).stream(1);
    let truth = generate_scenario(&spec, &mut rng).unwrap().lambda0;

    let direct = mean_classification_error(&chain, &truth, 0.0).unwrap();

    // Indicator route: rebuild each draw's loadings as the indicator
    // pattern (1 where rho and phi are both one) and recompute.
    let mut indicator_chain = chain.clone();
    for snap in &mut indicator_chain.draws {
        let (p, h) = snap.lambda.dim();
        let mut pattern = Array2::<f64>::zeros((p, h));
        for hh in 0..h {
            for j in 0..p {
                if snap.rho[hh] == 1 && snap.phi[(j, hh)] == 1 {
                    pattern[(j, hh)] = 1.0;
                }
            }
        }
        snap.lambda = pattern;
    }
    let via_indicators = mean_classification_error(&indicator_chain, &truth, 0.0).unwrap();
    assert!(
        (direct - via_indicators).abs() < 1e-12,
        "{direct} vs {via_indicators}"
    );
}
