mod common;

use common::rng;
use rumnet::models::{ChoiceEvent, ModelKind};
use rumnet::synthdata::{draw_ground_truth, event_rng, generate, ground_truth_loss, GroundTruth};
use rumnet::training::{
    accuracy, aggregate, dataset_loss, fit, kfold, loss, split_703015, split_indices, FinalMetrics, TrainConfig,
    DEFAULT_TOLERANCE,
};
use rumnet::Dataset;

fn setting1(seed: u64, events: usize) -> (GroundTruth, Dataset) {
    let gt = draw_ground_truth(1, 50, &mut rng(seed)).unwrap();
    let data = generate(&gt, events, 5, seed).unwrap();
    (gt, data)
}

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 40,
        patience: 10,
        learning_rate: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_worked_examples() {
    let tol = 1e-4;
    assert!((loss(&[0.5, 0.5], 0, &[true, true], tol).unwrap() - 0.5f64.ln().abs()).abs() < 1e-12);
    let expected = -(1e-4f64 / 1.0002).ln();
    assert!((loss(&[1.0, 0.0], 1, &[true, true], tol).unwrap() - expected).abs() < 1e-12);
    assert!((expected - 9.2105).abs() < 1e-4);
    let third = loss(&[1.0 / 6.0, 1.0 / 3.0, 0.5], 2, &[true; 3], 0.0).unwrap();
    assert!((third - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn uniform_model_accuracy_is_one_over_kappa() {
    let (_, data) = setting1(3, 10_000);
    let acc = accuracy(&ModelKind::mnl(52), &data).unwrap();
    // Ties go to the lowest index, so this is the frequency of position 0.
    assert!((acc - 0.2).abs() <= 0.012, "{acc}");
}

#[test]
fn perfect_and_wrong_models() {
    let products = vec![vec![1.0], vec![0.0]];
    let right = Dataset::new(1, 0, vec![ChoiceEvent::fully_available(vec![], products.clone(), 0).unwrap()]).unwrap();
    let wrong = Dataset::new(1, 0, vec![ChoiceEvent::fully_available(vec![], products, 1).unwrap()]).unwrap();
    let model = ModelKind::Mnl { beta: vec![50.0] };
    assert_eq!(accuracy(&model, &right).unwrap(), 1.0);
    assert_eq!(accuracy(&model, &wrong).unwrap(), 0.0);
}

#[test]
fn split_sizes_match_the_protocol() {
    let s = split_indices(10_719, 4).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7505, 1607, 1607));
    let s = split_indices(100, 4).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert!(split_indices(9, 0).is_err());
}

#[test]
fn kfold_produces_k_resamplings() {
    let (_, data) = setting1(5, 100);
    let folds = kfold(&data, 10, 1).unwrap();
    assert_eq!(folds.len(), 10);
    for (tr, va, te) in &folds {
        assert_eq!((tr.len(), va.len(), te.len()), (70, 15, 15));
    }
    assert_ne!(folds[0].2, folds[1].2);
    assert!(kfold(&data, 1, 1).is_err());
}

#[test]
fn aggregate_means_and_spreads() {
    let m = |l: f64| FinalMetrics {
        train_loss: l,
        val_loss: l,
        test_loss: Some(l),
        train_acc: 0.5,
        val_acc: 0.5,
        test_acc: Some(0.5),
    };
    let a = aggregate(&[m(0.5), m(0.7)]).unwrap();
    assert!((a.mean.test_loss.unwrap() - 0.6).abs() < 1e-15);
    let same = aggregate(&[m(0.3), m(0.3), m(0.3)]).unwrap();
    assert_eq!(same.mean, m(0.3));
    assert_eq!(same.std.train_loss, 0.0);
}

#[test]
fn fit_is_deterministic_given_the_seed() {
    let (_, data) = setting1(6, 600);
    let (tr, va, te) = split_703015(&data, 6).unwrap();
    let run = || {
        let mut model = ModelKind::deep_mnl(52, 0, 1, 3, &mut rng(1)).unwrap();
        let report = fit(&mut model, &tr, &va, Some(&te), &quick_cfg(9)).unwrap();
        (model, report)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(r1, r2);
    assert_eq!(m1.params(), m2.params());
    assert_eq!(r1.to_csv(), r2.to_csv());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (_, data) = setting1(7, 300);
    let (tr, va, _) = split_703015(&data, 7).unwrap();
    let mut model = ModelKind::deep_mnl(52, 0, 1, 3, &mut rng(2)).unwrap();
    let before = model.params();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 5,
        patience: 5,
        ..TrainConfig::default()
    };
    let report = fit(&mut model, &tr, &va, None, &cfg).unwrap();
    assert_eq!(model.params(), before);
    assert!(report.val_history.iter().all(|v| *v == report.val_history[0]));
    assert_eq!(report.best_epoch, 0);
}

#[test]
fn best_epoch_has_the_minimum_validation_loss() {
    let (_, data) = setting1(8, 800);
    let (tr, va, _) = split_703015(&data, 8).unwrap();
    let mut model = ModelKind::mnl(52);
    let report = fit(&mut model, &tr, &va, None, &quick_cfg(3)).unwrap();
    let min = report.val_history.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(report.val_history[report.best_epoch], min);
    // Restored weights reproduce the best validation loss.
    assert_eq!(dataset_loss(&model, &va, DEFAULT_TOLERANCE).unwrap(), min);
}

#[test]
fn mnl_recovers_setting_one() {
    let (gt, data) = setting1(11, 10_000);
    let (tr, va, te) = split_703015(&data, 11).unwrap();
    let mut model = ModelKind::mnl(52);
    let report = fit(&mut model, &tr, &va, Some(&te), &TrainConfig::default()).unwrap();
    let truth = ground_truth_loss(&gt, &te, DEFAULT_TOLERANCE).unwrap();
    let fitted = report.final_metrics.test_loss.unwrap();
    assert!((fitted - truth).abs() <= 0.02, "fitted {fitted} vs truth {truth}");
}

#[test]
fn ground_truth_is_not_beaten_by_fitted_models() {
    for seed in 0..10 {
        let (gt, data) = setting1(100 + seed, 3000);
        let (tr, va, te) = split_703015(&data, seed).unwrap();
        let mut model = ModelKind::mnl(52);
        fit(&mut model, &tr, &va, None, &quick_cfg(seed)).unwrap();
        let truth = ground_truth_loss(&gt, &te, DEFAULT_TOLERANCE).unwrap();
        let fitted = dataset_loss(&model, &te, DEFAULT_TOLERANCE).unwrap();
        assert!(truth <= fitted + 0.01, "seed {seed}: truth {truth} fitted {fitted}");
    }
}

#[test]
fn training_loss_mostly_decreases_early() {
    let mut decreasing = 0;
    for seed in 0..10 {
        let (_, data) = setting1(200 + seed, 2000);
        let (tr, va, _) = split_703015(&data, seed).unwrap();
        let mut model = ModelKind::mnl(52);
        let cfg = TrainConfig {
            epochs: 5,
            patience: 5,
            seed,
            ..TrainConfig::default()
        };
        let report = fit(&mut model, &tr, &va, None, &cfg).unwrap();
        if report.train_history.windows(2).all(|w| w[1] <= w[0]) {
            decreasing += 1;
        }
    }
    eprintln!("training loss non-increasing over 5 epochs in {decreasing}/10 seeds");
    assert!(decreasing >= 5);
}

#[test]
fn setting_one_choice_frequencies_match_the_logit_formula() {
    let gt = draw_ground_truth(1, 50, &mut rng(21)).unwrap();
    let (template, _) = gt.generate_event(5, &mut event_rng(21, 0)).unwrap();
    let p = gt.probabilities(&template).unwrap();
    let GroundTruth::Setting1 { beta } = &gt else { unreachable!() };
    let utilities: Vec<f64> = template.products.iter().map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let draws = 100_000;
    let mut counts = [0usize; 5];
    let mut r = rng(22);
    for _ in 0..draws {
        counts[rumnet::models::gumbel_argmax(&utilities, &template.available, &mut r).unwrap()] += 1;
    }
    for (c, pi) in counts.iter().zip(&p) {
        let sigma = (pi * (1.0 - pi) / draws as f64).sqrt();
        assert!((*c as f64 / draws as f64 - pi).abs() <= 3.0 * sigma, "{counts:?} vs {p:?}");
    }
}

#[test]
fn setting_three_class_frequency() {
    let gt = draw_ground_truth(3, 50, &mut rng(23)).unwrap();
    let draws = 100_000;
    let ones = (0..draws)
        .filter(|&t| gt.generate_event(5, &mut event_rng(23, t)).unwrap().1 == Some(true))
        .count();
    let sigma = (0.3 * 0.7 / draws as f64).sqrt();
    assert!((ones as f64 / draws as f64 - 0.3).abs() <= 3.0 * sigma, "{ones}");
}

#[test]
fn generated_events_are_well_formed() {
    for setting in 1..=3 {
        let gt = draw_ground_truth(setting, 50, &mut rng(24)).unwrap();
        let data = generate(&gt, 10_000, 5, 24).unwrap();
        assert_eq!(data.len(), 10_000);
        for e in data.events() {
            assert_eq!(e.num_alternatives(), 5);
            assert!(e.chosen < 5 && e.d_z() == 0);
            let ids: Vec<usize> = e.products.iter().map(|x| x[2..].iter().position(|&v| v == 1.0).unwrap()).collect();
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 5);
        }
    }
}

#[test]
fn zero_beta_setting_one_is_uniform() {
    let gt = GroundTruth::Setting1 { beta: vec![0.0; 52] };
    let data = generate(&gt, 10_000, 5, 25).unwrap();
    let mut counts = [0usize; 5];
    for e in data.events() {
        counts[e.chosen] += 1;
    }
    for c in counts {
        assert!((c as f64 / 1e4 - 0.2).abs() <= 3.0 * (0.16f64 / 1e4).sqrt(), "{counts:?}");
    }
    assert!((ground_truth_loss(&gt, &data, 0.0).unwrap() - 5f64.ln()).abs() < 1e-12);
}
