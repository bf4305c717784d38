#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rumnet::models::{masked_softmax, ChoiceEvent, ModelKind, RumnetConfig, RumnetModel};
use rumnet::theory::pmin_bound;
use rumnet::training::{event_loss_and_gradient, DEFAULT_TOLERANCE};
use rumnet::{DenseNetwork, NetworkSpec};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_MIN_GRAD: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Random event with at least one available alternative; the chosen one is
/// always available.
pub fn random_event<R: Rng>(rng: &mut R, n: usize, d_x: usize, d_z: usize, partial: bool) -> ChoiceEvent {
    let products = (0..n).map(|_| random_vec(rng, d_x, 1.0)).collect();
    let customer = random_vec(rng, d_z, 1.0);
    let mut available: Vec<bool> = (0..n).map(|_| !partial || rng.gen_bool(0.7)).collect();
    let chosen = rng.gen_range(0..n);
    available[chosen] = true;
    ChoiceEvent::new(customer, products, available, chosen).unwrap()
}

pub const KINDS: [&str; 5] = ["mnl", "tastenet", "deepmnl", "rumnet", "vnn"];

/// A model of the named kind with random (non-zero) parameters.
pub fn random_model<R: Rng>(kind: &str, n: usize, d_x: usize, d_z: usize, rng: &mut R) -> ModelKind {
    let (depth, width) = [(0, 0), (1, 3), (2, 5)][rng.gen_range(0..3)];
    let mut model = match kind {
        "mnl" => ModelKind::mnl(d_x),
        "tastenet" => ModelKind::tastenet(d_x, d_z, depth, width, rng).unwrap(),
        "deepmnl" => ModelKind::deep_mnl(d_x, d_z, depth, width, rng).unwrap(),
        "rumnet" => ModelKind::rumnet(
            RumnetConfig {
                d_x,
                d_z,
                d_eps: rng.gen_range(0..3),
                d_nu: rng.gen_range(0..3),
                k: rng.gen_range(1..4),
                depth,
                width,
            },
            rng,
        )
        .unwrap(),
        "vnn" => ModelKind::vnn(n, d_x, d_z, depth, width, rng).unwrap(),
        other => panic!("unknown kind {other}"),
    };
    let params = random_vec(rng, model.num_params(), 0.8);
    model.set_params(&params).unwrap();
    model
}

/// Largest relative error between the analytic loss gradient and central
/// differences, over entries where either side exceeds `FD_MIN_GRAD`.
pub fn loss_gradient_error(model: &ModelKind, event: &ChoiceEvent) -> f64 {
    let n = model.num_params();
    let mut analytic = vec![0.0; n];
    event_loss_and_gradient(model, event, DEFAULT_TOLERANCE, &mut analytic).unwrap();
    let base = model.params();
    let mut probe = model.clone();
    let mut scratch = vec![0.0; n];
    let mut loss_at = |params: &[f64]| {
        probe.set_params(params).unwrap();
        event_loss_and_gradient(&probe, event, DEFAULT_TOLERANCE, &mut scratch).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut shifted = base.clone();
    for i in 0..n {
        shifted[i] = base[i] + FD_STEP;
        let up = loss_at(&shifted);
        shifted[i] = base[i] - FD_STEP;
        let down = loss_at(&shifted);
        shifted[i] = base[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        let scale = analytic[i].abs().max(fd.abs());
        if scale > FD_MIN_GRAD {
            worst = worst.max((analytic[i] - fd).abs() / scale);
        }
    }
    worst
}

/// Worst gradient error over `cases` random (model, event) draws of a kind.
pub fn gradient_suite(kind: &str, cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.gen_range(2..6);
        let d_x = r.gen_range(1..5);
        let d_z = if kind == "mnl" { 0 } else { r.gen_range(0..4) };
        let model = random_model(kind, n, d_x, d_z, &mut r);
        let partial = kind != "vnn" || r.gen_bool(0.5);
        let event = random_event(&mut r, n, d_x, d_z, partial);
        worst = worst.max(loss_gradient_error(&model, &event));
    }
    worst
}

/// RUMnet probabilities computed the slow way: one full forward pass per
/// (k1, k2) pair through freshly concatenated inputs.
pub fn naive_rumnet_probabilities(r: &RumnetModel, event: &ChoiceEvent) -> Vec<f64> {
    let n = event.num_alternatives();
    let mut mean = vec![0.0; n];
    let samples = r.eps_nets.len() * r.nu_nets.len();
    for eps in &r.eps_nets {
        for nu in &r.nu_nets {
            let nu_z = nu.forward(&event.customer).unwrap();
            let u: Vec<f64> = event
                .products
                .iter()
                .map(|x| {
                    let mut input = x.clone();
                    input.extend(eps.forward(x).unwrap());
                    input.extend_from_slice(&event.customer);
                    input.extend_from_slice(&nu_z);
                    r.utility_net.forward(&input).unwrap()[0]
                })
                .collect();
            let mut p = vec![0.0; n];
            masked_softmax(&u, &event.available, &mut p).unwrap();
            for (m, q) in mean.iter_mut().zip(&p) {
                *m += q / samples as f64;
            }
        }
    }
    mean
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst deviation between model probabilities and the brute-force
/// average over `cases` random RUMnets.
pub fn saa_oracle_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.gen_range(1..7);
        let d_x = r.gen_range(1..5);
        let d_z = r.gen_range(0..4);
        let model = random_model("rumnet", n, d_x, d_z, &mut r);
        let event = random_event(&mut r, n, d_x, d_z, true);
        let ModelKind::Rumnet(rm) = &model else { unreachable!() };
        let fast = model.probabilities(&event).unwrap();
        worst = worst.max(max_abs_diff(&fast, &naive_rumnet_probabilities(rm, &event)));
    }
    worst
}

/// Worst relative change of `p(a)/p(b)` for MNL models when the rest of
/// the assortment is replaced.
pub fn iia_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d_x = r.gen_range(1..6);
        let model = random_model("mnl", 2, d_x, 0, &mut r);
        let a = random_vec(&mut r, d_x, 1.0);
        let b = random_vec(&mut r, d_x, 1.0);
        let ratio = |others: usize, r: &mut ChaCha8Rng| {
            let mut products = vec![a.clone(), b.clone()];
            products.extend((0..others).map(|_| random_vec(r, d_x, 1.0)));
            let e = ChoiceEvent::fully_available(vec![], products, 0).unwrap();
            let p = model.probabilities(&e).unwrap();
            p[0] / p[1]
        };
        let (o1, o2) = (r.gen_range(0..5), r.gen_range(0..5));
        let first = ratio(o1, &mut r);
        let second = ratio(o2, &mut r);
        worst = worst.max((first - second).abs() / first.abs());
    }
    worst
}

/// Worst deviation along RUMnet(K=1, no latent dims) → DeepMNL → MNL.
pub fn ladder_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.gen_range(1..6);
        let d_x = r.gen_range(1..5);
        let d_z = r.gen_range(0..4);
        let (depth, width) = [(0, 0), (1, 3), (2, 5)][r.gen_range(0..3)];
        let event = random_event(&mut r, n, d_x, d_z, true);

        let mut utility = DenseNetwork::init(NetworkSpec::new(d_x + d_z, 1, depth, width), &mut r).unwrap();
        let p = random_vec(&mut r, utility.num_params(), 1.0);
        utility.params_mut().copy_from_slice(&p);
        let eps = DenseNetwork::init(NetworkSpec::new(d_x, 0, depth, width), &mut r).unwrap();
        let nu = DenseNetwork::init(NetworkSpec::new(d_z, 0, depth, width), &mut r).unwrap();
        let rum = ModelKind::Rumnet(RumnetModel::from_parts(utility.clone(), vec![eps], vec![nu]).unwrap());
        let deep = ModelKind::DeepMnl { net: utility, d_z };
        worst = worst.max(max_abs_diff(
            &rum.probabilities(&event).unwrap(),
            &deep.probabilities(&event).unwrap(),
        ));

        // Depth-0 DeepMNL with zero customer weights is MNL on the x block.
        let mut linear = DenseNetwork::zeros(NetworkSpec::new(d_x + d_z, 1, 0, 0)).unwrap();
        let beta = random_vec(&mut r, d_x, 1.0);
        {
            let w = linear.params_mut();
            w[..d_x].copy_from_slice(&beta);
            w[d_x + d_z] = r.gen_range(-1.0..1.0);
        }
        let deep0 = ModelKind::DeepMnl { net: linear, d_z };
        let mnl = ModelKind::Mnl { beta };
        let event_x = ChoiceEvent::new(vec![], event.products.clone(), event.available.clone(), event.chosen).unwrap();
        worst = worst.max(max_abs_diff(
            &deep0.probabilities(&event).unwrap(),
            &mnl.probabilities(&event_x).unwrap(),
        ));
    }
    worst
}

/// Number of draws where a softmax over utilities in `[−M, M]` falls below
/// the closed-form minimum-probability bound.
pub fn pmin_violations(draws: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut violations = 0;
    for _ in 0..draws {
        let kappa = r.gen_range(1..12);
        let m: f64 = r.gen_range(0.0..4.0);
        let mut u: Vec<f64> = (0..kappa).map(|_| r.gen_range(-3.0 * m - 1.0..3.0 * m + 1.0)).collect();
        if r.gen_bool(0.2) {
            // Extreme configuration: one at +M, the rest at −M.
            u.iter_mut().for_each(|v| *v = -m);
            u[0] = m;
        }
        let clipped: Vec<f64> = u.iter().map(|v| v.clamp(-m, m)).collect();
        let mut p = vec![0.0; kappa];
        masked_softmax(&clipped, &vec![true; kappa], &mut p).unwrap();
        let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
        // Relative slack of a few ulps for the analytically tight case.
        if min < pmin_bound(kappa, m).unwrap() * (1.0 - 1e-12) {
            violations += 1;
        }
    }
    violations
}

/// Empirical choice frequencies of `sample_choice` on MNL utilities
/// `(0, ln 2, ln 3)` and the largest deviation in standard errors.
pub fn gumbel_frequency_z(draws: usize, seed: u64) -> (Vec<f64>, f64) {
    let model = ModelKind::Mnl { beta: vec![1.0] };
    let event = ChoiceEvent::fully_available(
        vec![],
        vec![vec![0.0], vec![2f64.ln()], vec![3f64.ln()]],
        0,
    )
    .unwrap();
    let mut r = rng(seed);
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[model.sample_choice(&event, &mut r).unwrap()] += 1;
    }
    let expected = [1.0 / 6.0, 1.0 / 3.0, 0.5];
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let z = freqs
        .iter()
        .zip(expected)
        .map(|(f, p)| (f - p).abs() / (p * (1.0 - p) / draws as f64).sqrt())
        .fold(0.0, f64::max);
    (freqs, z)
}
