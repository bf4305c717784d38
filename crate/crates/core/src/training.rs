//! Empirical risk minimisation of the tolerance-renormalised log-loss.
//!
//! [`fit`] runs minibatch Adam with per-epoch shuffling, tracks the
//! validation loss after every epoch, stops after `patience` epochs without
//! improvement and restores the best parameters.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::models::{ChoiceEvent, ModelKind};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// An improvement must beat the best validation loss by more than this.
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub tolerance: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The synthetic-experiment protocol: 500 epochs, patience 50, batch 32,
    /// learning rate 1e-3, tolerance 1e-4.
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 50,
            tolerance: DEFAULT_TOLERANCE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.patience == 0 || self.patience > self.epochs {
            return fail(format!("patience must be in 1..={}, got {}", self.epochs, self.patience));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return fail(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be positive".into());
        }
        Ok(())
    }

    /// Sets one field from its `key=value` spelling (keys are the field names).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
        }
        match key.trim() {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "tolerance" => self.tolerance = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", n + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "epochs={}\nbatch_size={}\nlearning_rate={:?}\npatience={}\ntolerance={:?}\nadam_beta1={:?}\nadam_beta2={:?}\nadam_eps={:?}\nseed={}\n",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.patience,
            self.tolerance,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.seed
        )
    }
}

/// `−ln q_chosen` with `q_i = (p_i + tol) / (1 + κ·tol)` over the κ available
/// alternatives.
pub fn loss(probs: &[f64], chosen: usize, available: &[bool], tolerance: f64) -> Result<f64> {
    if probs.len() != available.len() {
        return Err(Error::dim("probabilities", available.len(), probs.len()));
    }
    if chosen >= probs.len() || !available[chosen] {
        return Err(Error::InvalidEvent(format!("chosen alternative {chosen} is not available")));
    }
    let kappa = available.iter().filter(|&&a| a).count() as f64;
    let q = (probs[chosen] + tolerance) / (1.0 + kappa * tolerance);
    Ok(-q.ln())
}

/// Loss of one event, accumulating `∂loss/∂θ` into `grads`.
pub fn event_loss_and_gradient(model: &ModelKind, event: &ChoiceEvent, tolerance: f64, grads: &mut [f64]) -> Result<f64> {
    let mut value = f64::NAN;
    {
        let chosen = event.chosen;
        let kappa = event.num_available() as f64;
        let mut upstream = |p: &[f64]| {
            let shifted = p[chosen] + tolerance;
            value = -(shifted / (1.0 + kappa * tolerance)).ln();
            let mut g = vec![0.0; p.len()];
            g[chosen] = -1.0 / shifted;
            g
        };
        model.evaluate(event, Some((&mut upstream, grads)))?;
    }
    Ok(value)
}

/// Mean loss over a dataset.
pub fn dataset_loss(model: &ModelKind, data: &Dataset, tolerance: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut total = 0.0;
    for e in data.events() {
        let p = model.probabilities(e)?;
        total += loss(&p, e.chosen, &e.available, tolerance)?;
    }
    Ok(total / data.len() as f64)
}

/// Index of the largest available probability, lowest index on ties.
pub fn predicted_choice(probs: &[f64], available: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&p, &a)) in probs.iter().zip(available).enumerate() {
        if a && best.map_or(true, |b| p > probs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Fraction of events whose predicted choice is the observed one.
pub fn accuracy(model: &ModelKind, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut hits = 0usize;
    for e in data.events() {
        let p = model.probabilities(e)?;
        if predicted_choice(&p, &e.available) == Some(e.chosen) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Loss and accuracy in one pass.
pub fn evaluate(model: &ModelKind, data: &Dataset, tolerance: f64) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let (mut total, mut hits) = (0.0, 0usize);
    for e in data.events() {
        let p = model.probabilities(e)?;
        total += loss(&p, e.chosen, &e.available, tolerance)?;
        if predicted_choice(&p, &e.available) == Some(e.chosen) {
            hits += 1;
        }
    }
    let n = data.len() as f64;
    Ok((total / n, hits as f64 / n))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Validation-loss tracker that remembers the best parameters seen.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    best_params: Option<Vec<f64>>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            best_params: None,
        }
    }

    /// Records the validation loss of `epoch`; `snapshot` is called only on
    /// improvement. Returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64, snapshot: impl FnOnce() -> Vec<f64>) -> bool {
        if val_loss < self.best_loss - IMPROVEMENT_EPS {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.best_params = Some(snapshot());
            false
        } else {
            epoch - self.best_epoch >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_params(&self) -> Option<&[f64]> {
        self.best_params.as_deref()
    }
}

/// Metrics of the restored model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalMetrics {
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: Option<f64>,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean minibatch loss of each epoch.
    pub train_history: Vec<f64>,
    pub val_history: Vec<f64>,
    /// Epoch whose parameters were restored.
    pub best_epoch: usize,
    pub final_metrics: FinalMetrics,
}

impl FitReport {
    /// `epoch,train_loss,val_loss` rows, then a blank line and a one-row
    /// summary table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (e, (t, v)) in self.train_history.iter().zip(&self.val_history).enumerate() {
            writeln!(out, "{e},{t:?},{v:?}").unwrap();
        }
        out.push('\n');
        out.push_str("best_epoch,train_loss,val_loss,test_loss,train_acc,val_acc,test_acc\n");
        let f = &self.final_metrics;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        writeln!(
            out,
            "{},{:?},{:?},{},{:?},{:?},{}",
            self.best_epoch,
            f.train_loss,
            f.val_loss,
            opt(f.test_loss),
            f.train_acc,
            f.val_acc,
            opt(f.test_acc)
        )
        .unwrap();
        out
    }
}

fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fits `model` in place and leaves it at the best-validation parameters.
pub fn fit(
    model: &mut ModelKind,
    train: &Dataset,
    val: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    for d in [Some(train), Some(val), test].into_iter().flatten() {
        if d.d_x() != model.d_x() || d.d_z() != model.d_z() {
            return Err(Error::InvalidArgument(format!(
                "dataset dims (d_x={}, d_z={}) do not match model (d_x={}, d_z={})",
                d.d_x(),
                d.d_z(),
                model.d_x(),
                model.d_z()
            )));
        }
    }

    let n_params = model.num_params();
    let mut params = model.params();
    let mut grads = vec![0.0; n_params];
    let mut adam = Adam::new(n_params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();
    let events = train.events();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch as u64));
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += event_loss_and_gradient(model, &events[i], cfg.tolerance, &mut grads)?;
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    value: batch_loss / chunk.len() as f64,
                });
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / chunk.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grads, cfg.learning_rate);
            model.set_params(&params)?;
        }
        train_history.push(epoch_loss / train.len() as f64);
        let val_loss = dataset_loss(model, val, cfg.tolerance)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: 0,
                value: val_loss,
            });
        }
        val_history.push(val_loss);
        if stopper.observe(epoch, val_loss, || params.clone()) {
            break;
        }
    }

    if let Some(best) = stopper.best_params() {
        model.set_params(best)?;
    }
    let (train_loss, train_acc) = evaluate(model, train, cfg.tolerance)?;
    let (val_loss, val_acc) = evaluate(model, val, cfg.tolerance)?;
    let (test_loss, test_acc) = match test {
        Some(t) => {
            let (l, a) = evaluate(model, t, cfg.tolerance)?;
            (Some(l), Some(a))
        }
        None => (None, None),
    };
    Ok(FitReport {
        train_history,
        val_history,
        best_epoch: stopper.best_epoch(),
        final_metrics: FinalMetrics {
            train_loss,
            val_loss,
            test_loss,
            train_acc,
            val_acc,
            test_acc,
        },
    })
}

/// Index partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random 70/15/15 partition: validation and test get `⌊0.15·n⌋` events
/// each and training gets the rest.
pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 events to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held_out = n * 15 / 100;
    let test = idx.split_off(n - held_out);
    let val = idx.split_off(n - 2 * held_out);
    Ok(SplitIndices { train: idx, val, test })
}

pub fn split_703015(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let s = split_indices(data.len(), seed)?;
    Ok((data.subset(&s.train), data.subset(&s.val), data.subset(&s.test)))
}

/// `k` independently seeded 70/15/15 resamplings.
pub fn kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset, Dataset)>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    (0..k)
        .map(|fold| split_703015(data, fold_seed(seed, fold)))
        .collect()
}

/// Seed of fold `fold` (also used for that fold's model initialisation and
/// shuffling when run through [`cross_validate`]).
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    use rand::RngCore;
    epoch_rng(seed, 1 << 32 | fold as u64).next_u64()
}

/// Per-metric mean and (population) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: FinalMetrics,
    pub std: FinalMetrics,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(metrics: &[FinalMetrics]) -> Result<Aggregate> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let field = |f: fn(&FinalMetrics) -> f64| mean_std(metrics.iter().map(f));
    let opt_field = |f: fn(&FinalMetrics) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        if metrics.iter().all(|m| f(m).is_some()) {
            let (m, s) = mean_std(metrics.iter().map(|m| f(m).unwrap()));
            (Some(m), Some(s))
        } else {
            (None, None)
        }
    };
    let (tl, tl_s) = field(|m| m.train_loss);
    let (vl, vl_s) = field(|m| m.val_loss);
    let (sl, sl_s) = opt_field(|m| m.test_loss);
    let (ta, ta_s) = field(|m| m.train_acc);
    let (va, va_s) = field(|m| m.val_acc);
    let (sa, sa_s) = opt_field(|m| m.test_acc);
    Ok(Aggregate {
        mean: FinalMetrics {
            train_loss: tl,
            val_loss: vl,
            test_loss: sl,
            train_acc: ta,
            val_acc: va,
            test_acc: sa,
        },
        std: FinalMetrics {
            train_loss: tl_s,
            val_loss: vl_s,
            test_loss: sl_s,
            train_acc: ta_s,
            val_acc: va_s,
            test_acc: sa_s,
        },
    })
}

/// Repeated-split cross-validation. `build` creates a fresh model from the
/// fold seed; each fold restores its best epoch before metrics are taken.
pub fn cross_validate<F>(data: &Dataset, k: usize, cfg: &TrainConfig, mut build: F) -> Result<Vec<FitReport>>
where
    F: FnMut(u64) -> Result<ModelKind>,
{
    let folds = kfold(data, k, cfg.seed)?;
    let mut reports = Vec::with_capacity(k);
    for (fold, (train, val, test)) in folds.iter().enumerate() {
        let seed = fold_seed(cfg.seed, fold);
        let mut model = build(seed)?;
        let fold_cfg = TrainConfig { seed, ..*cfg };
        reports.push(fit(&mut model, train, val, Some(test), &fold_cfg)?);
    }
    Ok(reports)
}
