use graphred_core::datagen::{add_noise, fps, generate_bandlimited, generate_sensor_points, SyntheticSpec};
use graphred_core::denoise::{lr_denoise, lr_denoise_cg, pnp_admm_denoise};
use graphred_core::filter::h_red;
use graphred_core::red::{check_homogeneity, check_passivity};
use graphred_core::rng::{stream, Purpose};
use graphred_core::train::{evaluate_loss, make_n2n_pair, train, AdamConfig, TrainConfig};
use graphred_core::unroll::unrolled_forward;
use graphred_core::*;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn synthetic(n: usize, index: usize) -> datagen::SyntheticSample {
    SyntheticSpec {
        n_nodes: n,
        ..SyntheticSpec::default()
    }
    .sample(index)
    .unwrap()
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Signal {
    Signal::from_fn(n, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

fn rel_err(a: &Signal, b: &Signal) -> f64 {
    (a - b).norm() / b.norm()
}

/// `(I + α_red (I − (I + α_lr L)⁻¹))⁻¹ y` by dense LU.
fn stationarity_oracle(lap: &Laplacian, y: &Signal, alpha_red: f64, alpha_lr: f64) -> Signal {
    let n = y.len();
    let id = DMatrix::<f64>::identity(n, n);
    let g = (&id + lap.matrix() * alpha_lr).try_inverse().unwrap();
    let a = &id + (&id - g) * alpha_red;
    a.lu().solve(y).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let s = synthetic(50, 0);
    let lap = s.graph.laplacian();
    let mut rng = stream(11, 0, Purpose::Probe);
    let h = 1e-5;
    for _ in 0..20 {
        let x = random_signal(&mut rng, 50, 5.0);
        let y = random_signal(&mut rng, 50, 5.0);
        let alpha_red = 0.1 + 5.0 * rng.random::<f64>();
        let alpha_lr = 0.1 + 5.0 * rng.random::<f64>();
        let d = Denoiser::lr(alpha_lr).prepare(GraphOperator::Vertex(&lap)).unwrap();
        let p = RedProblem::new(&y, alpha_red, &d).unwrap();
        let g = p.gradient(&x).unwrap();
        let fd = Signal::from_fn(50, |i, _| {
            let mut up = x.clone();
            up[i] += h;
            let mut down = x.clone();
            down[i] -= h;
            (p.objective(&up).unwrap() - p.objective(&down).unwrap()) / (2.0 * h)
        });
        assert!(rel_err(&g, &fd) <= 1e-5, "{}", rel_err(&g, &fd));
    }
}

#[test]
fn solvers_match_stationarity_solve() {
    let s = synthetic(100, 1);
    let lap = s.graph.laplacian();
    let mut rng = stream(12, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 100, 10.0);
    let (alpha_red, alpha_lr) = (0.8, 1.5);
    let oracle = stationarity_oracle(&lap, &y, alpha_red, alpha_lr);
    let d = Denoiser::lr(alpha_lr).prepare(GraphOperator::Vertex(&lap)).unwrap();
    let p = RedProblem::new(&y, alpha_red, &d).unwrap();

    let cg = p.cg_solve(100).unwrap();
    assert!(rel_err(&cg.x, &oracle) <= 1e-6);

    // Hessian eigenvalues lie in [1, 1 + α_red), so ε = 1/(1 + α_red) contracts
    let gd = p.gradient_descent(1.0 / (1.0 + alpha_red), 400).unwrap();
    assert!(rel_err(&gd.x, &oracle) <= 1e-5);
    assert!(gd.gradient_norm_history.last().unwrap() < &gd.gradient_norm_history[0]);
}

#[test]
fn cg_objective_is_non_increasing_and_beats_gradient_descent() {
    let s = synthetic(100, 2);
    let lap = s.graph.laplacian();
    let mut rng = stream(13, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 100, 10.0);
    let d = Denoiser::lr(2.0).prepare(GraphOperator::Vertex(&lap)).unwrap();
    let p = RedProblem::new(&y, 3.0, &d).unwrap();
    let cg = p.cg_solve(10).unwrap();
    for w in cg.objective_history[1..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    // one denoiser evaluation per GD step; CG uses two per iteration
    let gd = p.gradient_descent(1.0 / 4.0, 20).unwrap();
    assert!(cg.objective_history.last().unwrap() <= gd.objective_history.last().unwrap());
}

#[test]
fn cg_matches_direct_lr() {
    let s = synthetic(100, 3);
    let lap = s.graph.laplacian();
    let mut rng = stream(14, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 100, 1.0);
    let direct = lr_denoise(&lap, &y, 1.0).unwrap();
    let cg = lr_denoise_cg(&lap, &y, 1.0, 1e-10, 1000).unwrap();
    assert!(rel_err(&cg, &direct) <= 1e-7);
    let lu = (DMatrix::identity(100, 100) + lap.matrix()).lu().solve(&y).unwrap();
    assert!(rel_err(&direct, &lu) <= 1e-10);
    let capped = lr_denoise_cg(&lap, &y, 1.0, 1e-6, 100).unwrap();
    assert!((DMatrix::identity(100, 100) * &capped + lap.matrix() * &capped - &y).norm() / y.norm() <= 1e-6);
}

#[test]
fn red_filter_equals_matrix_form() {
    let s = synthetic(100, 4);
    let lap = s.graph.laplacian();
    let mut rng = stream(15, 0, Purpose::Probe);
    let x = random_signal(&mut rng, 100, 3.0);
    let (alpha_red, alpha_lr) = (2.5, 0.7);
    let h = h_red(s.decomp.eigenvalues().as_slice(), alpha_red, alpha_lr).unwrap();
    let spectral = s.decomp.filter(&h.response, &x).unwrap();
    let matrix = (&x - lr_denoise(&lap, &x, alpha_lr).unwrap()) * alpha_red;
    assert!(rel_err(&spectral, &matrix) <= 1e-8);
}

#[test]
fn spectral_and_vertex_backends_agree() {
    let s = synthetic(60, 5);
    let lap = s.graph.laplacian();
    let lambdas = s.decomp.eigenvalues().as_slice().to_vec();
    let mut rng = stream(16, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 60, 3.0);
    let y_hat = s.decomp.gft(&y).unwrap();
    for den in [Denoiser::lr(1.3), Denoiser::pnp(0.9, 2.0)] {
        let v = den.apply(GraphOperator::Vertex(&lap), &y).unwrap();
        let f = den.apply(GraphOperator::Spectral(&lambdas), &y_hat).unwrap();
        assert!(rel_err(&s.decomp.igft(&f).unwrap(), &v) <= 1e-10);
    }
    let params = UnrolledParams::flat(10, DenoiserKind::Lr, 4.0, 0.6, None).unwrap();
    let template = Denoiser::lr(1.0);
    let v = unrolled_forward(&y, &params, GraphOperator::Vertex(&lap), &template, RedCgOptions::default()).unwrap();
    let f = unrolled_forward(&y_hat, &params, GraphOperator::Spectral(&lambdas), &template, RedCgOptions::default()).unwrap();
    assert!(rel_err(&s.decomp.igft(&f).unwrap(), &v) <= 1e-9);
}

#[test]
fn condition_checks() {
    let s = synthetic(100, 6);
    let lap = s.graph.laplacian();
    let lr = Denoiser::lr(1.0).prepare(GraphOperator::Vertex(&lap)).unwrap();
    let pnp = Denoiser::pnp(1.0, 1.0).prepare(GraphOperator::Vertex(&lap)).unwrap();
    let mut rng = stream(17, 0, Purpose::Probe);
    for _ in 0..100 {
        let x = random_signal(&mut rng, 100, 10.0);
        assert!(check_homogeneity(&lr, &x, 1.1).unwrap() <= 1e-12);
        assert!(check_passivity(&lr, &x).unwrap() <= 1.0);
        assert!(check_homogeneity(&pnp, &x, 1.1).unwrap() <= 1e-6);
        assert!(check_passivity(&pnp, &x).unwrap() <= 1.0 + 1e-6);
    }
    let ones = Signal::from_element(100, 1.0);
    assert!((check_passivity(&lr, &ones).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn pnp_one_iteration_large_rho_matches_lr() {
    let s = synthetic(40, 7);
    let lap = s.graph.laplacian();
    let mut rng = stream(18, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 40, 2.0);
    // hand-evaluated updates: x = (y + ρ v)/(1+ρ) = y, v = G(x + 0)
    let expected = lr_denoise(&lap, &y, 1.0).unwrap();
    let out = pnp_admm_denoise(&lap, &y, 1.0, 1e6, 1, XUpdate::Observation).unwrap();
    assert!(rel_err(&out, &expected) <= 0.01);
    let c = Signal::from_element(40, -3.5);
    for mode in [XUpdate::Observation, XUpdate::PreviousIterate] {
        let out = pnp_admm_denoise(&lap, &c, 0.7, 2.0, 10, mode).unwrap();
        assert!((out - &c).amax() < 1e-12);
    }
}

#[test]
fn fps_matches_brute_force_and_dominates_random_subsets() {
    let mut rng = stream(19, 0, Purpose::Probe);
    let pts = generate_sensor_points(60, 100.0, &mut rng).unwrap();
    let min_pairwise = |idx: &[usize]| {
        let mut m = f64::INFINITY;
        for a in 0..idx.len() {
            for b in (a + 1)..idx.len() {
                m = m.min(pts.distance(idx[a], idx[b]));
            }
        }
        m
    };
    let chosen = fps(&pts, 8, 0).unwrap();
    // brute-force greedy: each pick maximizes the distance to the picks so far
    for step in 1..chosen.len() {
        let dist = |i: usize| chosen[..step].iter().map(|&j| pts.distance(i, j)).fold(f64::INFINITY, f64::min);
        let best = (0..60).map(dist).fold(0.0, f64::max);
        assert_eq!(dist(chosen[step]), best);
    }
    let fps_min = min_pairwise(&chosen);
    for _ in 0..100 {
        let mut idx: Vec<usize> = (0..60).collect();
        for i in 0..8 {
            let j = rng.random_range(i..60);
            idx.swap(i, j);
        }
        assert!(fps_min >= min_pairwise(&idx[..8]));
    }
}

#[test]
fn sensor_points_and_noise_statistics() {
    let mut rng = stream(20, 0, Purpose::Points);
    let pts = generate_sensor_points(10_000, 100.0, &mut rng).unwrap();
    assert!(pts.coords().iter().all(|&v| (0.0..=100.0).contains(&v)));
    for c in 0..2 {
        let mean = pts.coords().column(c).mean();
        let se = 100.0 / (12f64).sqrt() / 100.0;
        assert!((mean - 50.0).abs() < 3.0 * se, "{mean}");
    }
    let x = Signal::zeros(500);
    for sigma in [10.0, 15.0, 20.0, 25.0, 30.0] {
        let mut rng = stream(20, 1, Purpose::noise(sigma));
        let y = add_noise(&x, sigma, &mut rng).unwrap();
        let r = rmse(&y, &x).unwrap();
        assert!((r - sigma).abs() <= 0.1 * sigma, "{r}");
    }
}

#[test]
fn n2n_pair_statistics() {
    let y = Signal::from_vec(vec![1.0, -2.0, 0.5]);
    let mut rng = stream(21, 0, Purpose::Probe);
    let draws = 10_000;
    let sigma = 0.8;
    let mut sum = Signal::zeros(3);
    let mut sq = 0.0;
    for _ in 0..draws {
        let (z, s) = make_n2n_pair(&y, (sigma, sigma), &mut rng).unwrap();
        assert_eq!(s, sigma);
        sq += (&z - &y).norm_squared();
        sum += z;
    }
    let mean = sum / draws as f64;
    let se = sigma / (draws as f64).sqrt();
    assert!((mean - &y).amax() < 3.0 * se);
    let var = sq / (3 * draws) as f64;
    assert!((var - sigma * sigma).abs() <= 0.05 * sigma * sigma);
}

#[test]
fn bandlimited_signal_properties() {
    let s = synthetic(100, 8);
    let spectrum = s.decomp.gft(&s.clean).unwrap();
    assert!(spectrum.rows(3, 97).norm() <= 1e-10);
    let d = spectrum.rows(0, 3);
    for (v, e) in d.iter().zip([2.866_025_403_784_438_4, 2.866_025_403_784_438_4, 2.0]) {
        assert!((v - e).abs() < 1e-10);
    }
    assert!(generate_bandlimited(&s.decomp, 0, 2.0).is_err());
    assert!(generate_bandlimited(&s.decomp, 101, 2.0).is_err());

    let lap = s.graph.laplacian();
    let mut rng = stream(22, 0, Purpose::Probe);
    let r = random_signal(&mut rng, 100, 1.0);
    let r = &r * (s.clean.norm() / r.norm());
    let ratio = lap.quadratic_form(&s.clean).unwrap() / lap.quadratic_form(&r).unwrap();
    assert!(ratio < 0.1, "{ratio}");
}

#[test]
fn gft_of_constant_and_eigenvector() {
    let s = synthetic(100, 9);
    assert_eq!(s.graph.component_count(), 1);
    let c = Signal::from_element(100, 1.5);
    let spec = s.decomp.gft(&c).unwrap();
    assert!((spec[0].abs() - 1.5 * 10.0).abs() < 1e-10);
    assert!(spec.rows(1, 99).amax() < 1e-10);
    let u3 = s.decomp.eigenvector(2);
    let e = s.decomp.gft(&u3).unwrap();
    assert!((e[2] - 1.0).abs() < 1e-10);
    let (ortho, recon) = s.decomp.residuals(&s.graph.laplacian());
    assert!(ortho <= 1e-8 && recon <= 1e-8);
}

#[test]
fn unrolled_reduces_to_observation_without_regularization() {
    let s = synthetic(30, 10);
    let lap = s.graph.laplacian();
    let mut rng = stream(23, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 30, 2.0);
    let d = Denoiser::lr(1.0).prepare(GraphOperator::Vertex(&lap)).unwrap();
    let layer = RedLayer {
        alpha_red: 0.0,
        denoiser: &d,
    };
    let report = red_cg_solve(&y, &vec![layer; 11], RedCgOptions::default()).unwrap();
    assert!(rel_err(&report.x, &y) < 1e-14);
    assert_eq!(report.stop, StopReason::Converged);
}

fn training_set(spec: &SyntheticSpec, samples: &[datagen::SyntheticSample], sigma: f64) -> Vec<(Vec<f64>, Signal, Signal, f64)> {
    samples
        .iter()
        .map(|s| {
            let y = spec.observe(s.index, &s.clean, sigma).unwrap();
            (
                s.decomp.eigenvalues().as_slice().to_vec(),
                s.decomp.gft(&y).unwrap(),
                s.decomp.gft(&s.clean).unwrap(),
                y.amax(),
            )
        })
        .collect()
}

#[test]
fn supervised_training_lowers_loss_over_first_epochs() {
    let spec = SyntheticSpec::default();
    let samples: Vec<_> = (0..10).map(|i| spec.sample(i).unwrap()).collect();
    let data = training_set(&spec, &samples, 20.0);
    let train_set: Vec<TrainSample> = data
        .iter()
        .map(|(l, y, x, m)| TrainSample::new(GraphOperator::Spectral(l), y.clone(), Some(x.clone())).with_n2n_scale(*m))
        .collect();
    let template = Denoiser::lr(1.0);
    let init = UnrolledParams::flat(10, DenoiserKind::Lr, 10.0, 1.0, None).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let out = train(&train_set, &init, &template, &cfg).unwrap();
    for w in out.loss_history.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert!(out.final_loss < out.loss_history[9]);

    // resuming from the saved parameters reproduces the next-epoch loss
    let resumed = TrainConfig {
        epochs: 1,
        start_epoch: 10,
        ..cfg
    };
    let again = train(&train_set, &out.params, &template, &resumed).unwrap();
    assert_eq!(again.loss_history[0], out.final_loss);
    assert_eq!(evaluate_loss(&train_set, &out.params, &template, &cfg, 10).unwrap(), out.final_loss);

    let rerun = train(&train_set, &init, &template, &cfg).unwrap();
    assert_eq!(rerun.loss_history, out.loss_history);
}

#[test]
fn adam_with_zero_gradient_leaves_params() {
    // layer-0 parameters never influence the output: x⁽⁰⁾ = 0 makes ∇⁽⁰⁾ = −y
    let s = synthetic(20, 11);
    let lap = s.graph.laplacian();
    let mut rng = stream(24, 0, Purpose::Probe);
    let y = random_signal(&mut rng, 20, 1.0);
    let samples = vec![TrainSample::new(GraphOperator::Vertex(&lap), y.clone(), Some(y))];
    let init = UnrolledParams::flat(1, DenoiserKind::Lr, 1.0, 1.0, None).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        adam: AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        },
        gradient_method: train::GradientMethod::AnalyticLinear,
        ..TrainConfig::default()
    };
    let out = train(&samples, &init, &Denoiser::lr(1.0), &cfg).unwrap();
    assert!((out.params.alpha_red_layers[0] - 1.0).abs() < 1e-12);
    assert!((out.params.alpha_denoiser_layers[0] - 1.0).abs() < 1e-12);
}
