//! Mini-batch training loop with validation-based early stopping. The
//! training unit is the per-sequence NLL averaged over each batch of
//! sequences; after every mini-batch the validation loss (computed with
//! `mc_samples_eval` draws held fixed across checks) decides whether the
//! best checkpoint advances or the patience counter ticks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::seq::SliceRandom;

use super::McSamples;
use crate::events::{Dataset, EventSequence, Split};
use crate::nn::{AdamConfig, AdamState};
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss became non-finite at epoch {epoch}, mini-batch {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
}

/// Per-sequence loss with a flat parameter view; the one interface the
/// trainer, the optimizer, and the finite-difference checks share.
pub trait SequenceLoss: Clone + Send + Sync {
    fn param_len(&self) -> usize;
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, p: &[f64]);
    /// Whether the loss consumes Monte-Carlo draws (false when the
    /// compensator is analytic).
    fn needs_mc(&self) -> bool;
    fn loss(&self, seq: &EventSequence, samples: &McSamples) -> f64;
    fn loss_and_grad(&self, seq: &EventSequence, samples: &McSamples) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub mc_samples_train: usize,
    pub mc_samples_eval: usize,
    pub early_stop_delta: f64,
    /// Counted in mini-batches.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            mc_samples_train: 1,
            mc_samples_eval: 64,
            early_stop_delta: 1e-4,
            early_stop_patience: 100,
            max_epochs: 200,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean per-sequence training NLL, one entry per mini-batch.
    pub train_loss: Vec<f64>,
    /// Validation NLL after each mini-batch (index 0 is the pre-training
    /// baseline).
    pub val_loss: Vec<f64>,
    pub best_val_loss: f64,
    /// Mini-batch index (1-based) at which the best validation loss was
    /// reached; 0 means the untrained baseline was never beaten.
    pub best_step: usize,
    pub steps: usize,
    pub epochs: usize,
    pub stopped_early: bool,
    pub seed: u64,
    pub config: TrainConfig,
}

fn mc_for<M: SequenceLoss>(model: &M, seq: &EventSequence, s: usize, rng_seed: (u64, &str, &[u64])) -> McSamples {
    if model.needs_mc() {
        let mut rng = derive_rng(rng_seed.0, rng_seed.1, rng_seed.2);
        McSamples::draw(seq.num_intervals(), s, &mut rng)
    } else {
        McSamples::empty(seq.num_intervals())
    }
}

/// Mean per-sequence NLL over a slice, with pre-assigned samples.
fn mean_loss<M: SequenceLoss>(model: &M, seqs: &[(&EventSequence, McSamples)]) -> f64 {
    let losses: Vec<f64> = seqs
        .par_iter()
        .map(|(seq, samples)| model.loss(seq, samples))
        .collect();
    losses.iter().sum::<f64>() / losses.len() as f64
}

/// Trains to early stopping or `max_epochs` and returns the
/// best-validation checkpoint with the loss trajectory.
pub fn train<M: SequenceLoss>(
    model: M,
    dataset: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(M, FitReport), TrainError> {
    if split.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if split.val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let train_seqs: Vec<&EventSequence> = split.train.iter().map(|&i| &dataset.sequences[i]).collect();
    let val_set: Vec<(&EventSequence, McSamples)> = split
        .val
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let seq = &dataset.sequences[i];
            (seq, mc_for(&model, seq, cfg.mc_samples_eval, (cfg.seed, "val-mc", &[k as u64])))
        })
        .collect();

    let mut model = model;
    let mut params = model.flat_params();
    let mut adam = AdamState::new(cfg.adam, params.len());

    let baseline = mean_loss(&model, &val_set);
    let mut report = FitReport {
        train_loss: Vec::new(),
        val_loss: vec![baseline],
        best_val_loss: baseline,
        best_step: 0,
        steps: 0,
        epochs: 0,
        stopped_early: false,
        seed: cfg.seed,
        config: *cfg,
    };
    let mut best_params = params.clone();
    let mut patience_used = 0usize;
    let mut step = 0u64;

    'epochs: for epoch in 0..cfg.max_epochs {
        report.epochs = epoch + 1;
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        order.shuffle(&mut derive_rng(cfg.seed, "shuffle", &[epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let batch_set: Vec<(&EventSequence, McSamples)> = batch
                .iter()
                .map(|&ix| {
                    let seq = train_seqs[ix];
                    (
                        seq,
                        mc_for(&model, seq, cfg.mc_samples_train, (cfg.seed, "train-mc", &[step, ix as u64])),
                    )
                })
                .collect();
            let results: Vec<(f64, Vec<f64>)> = batch_set
                .par_iter()
                .map(|(seq, samples)| model.loss_and_grad(seq, samples))
                .collect();
            let scale = 1.0 / results.len() as f64;
            let mut grad = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            batch_loss *= scale;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step: step as usize,
                });
            }
            report.train_loss.push(batch_loss);
            adam.step(&mut params, &grad).expect("shapes fixed at init");
            model.set_flat_params(&params);

            let val = mean_loss(&model, &val_set);
            report.val_loss.push(val);
            report.steps = step as usize;
            if val < report.best_val_loss - cfg.early_stop_delta {
                report.best_val_loss = val;
                report.best_step = step as usize;
                best_params.copy_from_slice(&params);
                patience_used = 0;
            } else {
                patience_used += 1;
                if patience_used >= cfg.early_stop_patience {
                    report.stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }

    model.set_flat_params(&best_params);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisFamily, BasisSpec, TransferKind};
    use crate::events::{compute_norm_stats, split_dataset, NormStats};
    use crate::nn::CellKind;
    use crate::processes::{ParametricProcess, StopRule};
    use crate::rng::derive_rng;
    use crate::unipoint::UniPointModel;

    fn poisson_dataset(rate: f64, n_seq: usize, n_events: usize, seed: u64) -> Dataset {
        let p = ParametricProcess::ExpHawkes { mu: rate, alpha: 0.0, beta: 1.0 };
        let sequences = (0..n_seq)
            .map(|i| p.simulate(StopRule::Events(n_events), seed + i as u64).unwrap())
            .collect();
        Dataset::new(sequences).unwrap()
    }

    fn fitted_norm(dataset: &Dataset, split: &Split) -> NormStats {
        let train: Vec<_> = split.train.iter().map(|&i| dataset.sequences[i].clone()).collect();
        compute_norm_stats(&train, false).unwrap()
    }

    #[test]
    fn early_stop_fires_after_exactly_patience_batches_on_constant_loss() {
        let dataset = poisson_dataset(1.0, 20, 16, 3);
        let split = split_dataset(dataset.len(), (0.6, 0.2, 0.2), 0).unwrap();
        let norm = fitted_norm(&dataset, &split);
        let model = UniPointModel::init(
            CellKind::Rnn,
            3,
            BasisSpec::single(BasisFamily::Exp, 2),
            TransferKind::Softplus,
            norm,
            &mut derive_rng(0, "init", &[]),
        );
        let cfg = TrainConfig {
            batch_size: 4,
            early_stop_patience: 5,
            max_epochs: 100,
            // Zero step size keeps the parameters, and so the validation
            // loss, exactly constant.
            adam: AdamConfig { lr: 0.0, weight_decay: 0.0, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let (_, report) = train(model, &dataset, &split, &cfg).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.steps, 5);
        assert_eq!(report.best_step, 0);
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let dataset = poisson_dataset(1.0, 24, 12, 9);
        let split = split_dataset(dataset.len(), (0.6, 0.2, 0.2), 1).unwrap();
        let norm = fitted_norm(&dataset, &split);
        let build = || {
            UniPointModel::init(
                CellKind::Rnn,
                4,
                BasisSpec::single(BasisFamily::Relu, 2),
                TransferKind::Softplus,
                norm,
                &mut derive_rng(5, "init", &[]),
            )
        };
        let cfg = TrainConfig {
            batch_size: 8,
            max_epochs: 2,
            early_stop_patience: 1000,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(build(), &dataset, &split, &cfg).unwrap();
        let (m2, r2) = train(build(), &dataset, &split, &cfg).unwrap();
        assert_eq!(m1.flat_params(), m2.flat_params());
        assert_eq!(r1.train_loss, r2.train_loss);
        assert_eq!(r1.val_loss, r2.val_loss);
    }

    #[test]
    fn learns_homogeneous_poisson_rate() {
        // Analytic optimum of the per-event NLL for rate-mu data is
        // 1 - ln(mu): each unit-mean interarrival contributes mu*tau to the
        // compensator and -ln(mu) at the event.
        let rate = 2.0;
        let dataset = poisson_dataset(rate, 96, 64, 40);
        let split = split_dataset(dataset.len(), (0.6, 0.2, 0.2), 2).unwrap();
        let norm = fitted_norm(&dataset, &split);
        let model = UniPointModel::init(
            CellKind::Rnn,
            8,
            BasisSpec::single(BasisFamily::Exp, 1),
            TransferKind::Softplus,
            norm,
            &mut derive_rng(11, "init", &[]),
        );
        let cfg = TrainConfig {
            batch_size: 16,
            max_epochs: 60,
            early_stop_patience: 40,
            mc_samples_train: 1,
            mc_samples_eval: 32,
            ..TrainConfig::default()
        };
        let (fitted, report) = train(model, &dataset, &split, &cfg).unwrap();
        assert!(report.best_step > 0, "no improvement over the init");
        let test_seqs: Vec<_> = split.test.iter().map(|&i| &dataset.sequences[i]).collect();
        let mut rng = derive_rng(0, "test-mc", &[]);
        let mut total_nll = 0.0;
        let mut events = 0usize;
        for seq in &test_seqs {
            total_nll += fitted.nll(seq, 64, &mut rng);
            events += seq.len();
        }
        let per_event = total_nll / events as f64;
        let optimum = 1.0 - rate.ln();
        assert!(
            (per_event - optimum).abs() < 0.05,
            "per-event NLL {per_event} vs analytic optimum {optimum}"
        );
    }
}
