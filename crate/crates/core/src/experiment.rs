//! End-to-end experiment pipeline shared by the CLI and the acceptance
//! suite: synthesize datasets, prepare splits and normalization, train any
//! supported model, evaluate holdout likelihood, and run the basis-count
//! and Monte-Carlo sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, BasisSpec, TransferKind};
use crate::checkpoint::TrainedModel;
use crate::events::{
    compute_norm_stats, split_dataset, DataError, Dataset, EventSequence, NormStats, Split,
};
use crate::metrics::{holdout_ll, EvalReport, IntensityModel};
use crate::nn::CellKind;
use crate::processes::{fit_mle, FitOptions, MleFit, MleKind, ParametricProcess, ProcessError, StopRule};
use crate::rng::derive_rng;
use crate::unipoint::{train, FitReport, RmtppModel, TrainConfig, TrainError, UniPointModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Simulates `n_seq` sequences of `n_events` events each; sequence `i`
/// owns the RNG stream derived from `(seed, i)`.
pub fn synthesize(
    process: &ParametricProcess,
    n_seq: usize,
    n_events: usize,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    use rand::Rng;
    let seqs: Result<Vec<EventSequence>, ProcessError> = (0..n_seq)
        .into_par_iter()
        .map(|i| {
            let stream = derive_rng(seed, "sim", &[i as u64]).random::<u64>();
            process.simulate(StopRule::Events(n_events), stream)
        })
        .collect();
    Ok(Dataset::new(seqs?)?)
}

/// A dataset with its split and training-set normalization statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    pub norm: NormStats,
}

impl Prepared {
    pub fn new(
        mut dataset: Dataset,
        fractions: (f64, f64, f64),
        split_seed: u64,
        normalize_eval_times: bool,
    ) -> Result<Self, PipelineError> {
        let split = split_dataset(dataset.len(), fractions, split_seed)?;
        let train_seqs: Vec<EventSequence> = split
            .train
            .iter()
            .map(|&i| dataset.sequences[i].clone())
            .collect();
        let norm = compute_norm_stats(&train_seqs, normalize_eval_times)?;
        dataset.norm = Some(norm);
        Ok(Self { dataset, split, norm })
    }

    pub fn seqs(&self, part: &[usize]) -> Vec<&EventSequence> {
        part.iter().map(|&i| &self.dataset.sequences[i]).collect()
    }
}

/// What to train, in CLI vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    UniPoint {
        basis: String,
        #[serde(default = "default_transfer")]
        transfer: String,
        #[serde(default = "default_j")]
        j: usize,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "default_cell")]
        cell: String,
    },
    Rmtpp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
    ExpHawkes,
    PlHawkes,
}

fn default_transfer() -> String {
    "SOFTPLUS".to_string()
}

fn default_j() -> usize {
    64
}

fn default_hidden() -> usize {
    48
}

fn default_cell() -> String {
    "RNN".to_string()
}

impl ModelSpec {
    pub fn unipoint(basis: &str, j: usize) -> Self {
        ModelSpec::UniPoint {
            basis: basis.to_string(),
            transfer: default_transfer(),
            j,
            hidden: default_hidden(),
            cell: default_cell(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::UniPoint { basis, j, cell, transfer, .. } => {
                let mut label = format!("unipoint-{basis}-J{j}");
                if cell != "RNN" {
                    label.push_str(&format!("-{}", cell.to_ascii_lowercase()));
                }
                if transfer != "SOFTPLUS" {
                    label.push_str(&format!("-{}", transfer.to_ascii_lowercase()));
                }
                label
            }
            ModelSpec::Rmtpp { .. } => "rmtpp".to_string(),
            ModelSpec::ExpHawkes => "exphawkes".to_string(),
            ModelSpec::PlHawkes => "plhawkes".to_string(),
        }
    }
}

/// Training outcome: the loss trajectory for the neural models, the
/// optimizer diagnostics for the parametric fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TrainSummary {
    Neural(FitReport),
    Mle(MleFit),
}

/// Builds (seeded by `cfg.seed`) and trains a model on the prepared data.
pub fn train_model(
    spec: &ModelSpec,
    prepared: &Prepared,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainSummary), PipelineError> {
    match spec {
        ModelSpec::UniPoint { basis, transfer, j, hidden, cell } => {
            let basis_spec = BasisSpec::from_config(basis, *j)?;
            let transfer = TransferKind::parse(transfer)?;
            let cell = CellKind::parse(cell).ok_or_else(|| {
                PipelineError::Basis(BasisError::UnknownKind(format!("cell `{cell}`")))
            })?;
            let mut rng = derive_rng(cfg.seed, "init", &[]);
            let model = UniPointModel::init(cell, *hidden, basis_spec, transfer, prepared.norm, &mut rng);
            let (fitted, report) = train(model, &prepared.dataset, &prepared.split, cfg)?;
            Ok((TrainedModel::UniPoint(fitted), TrainSummary::Neural(report)))
        }
        ModelSpec::Rmtpp { hidden } => {
            let mut rng = derive_rng(cfg.seed, "init", &[]);
            let model = RmtppModel::init(*hidden, prepared.norm, &mut rng);
            let (fitted, report) = train(model, &prepared.dataset, &prepared.split, cfg)?;
            Ok((TrainedModel::Rmtpp(fitted), TrainSummary::Neural(report)))
        }
        ModelSpec::ExpHawkes | ModelSpec::PlHawkes => {
            let kind = if matches!(spec, ModelSpec::ExpHawkes) {
                MleKind::ExpHawkes
            } else {
                MleKind::PlHawkes
            };
            let train_seqs: Vec<EventSequence> = prepared
                .split
                .train
                .iter()
                .map(|&i| prepared.dataset.sequences[i].clone())
                .collect();
            let fit = fit_mle(kind, &train_seqs, &FitOptions::default())?;
            Ok((TrainedModel::Parametric(fit.process), TrainSummary::Mle(fit)))
        }
    }
}

/// Holdout evaluation on one split of the prepared data.
pub fn evaluate_on(
    model: &TrainedModel,
    prepared: &Prepared,
    part: &[usize],
    mc_samples: usize,
    seed: u64,
    dataset_id: &str,
) -> EvalReport {
    let seqs = prepared.seqs(part);
    holdout_ll(model, &seqs, mc_samples, seed, &model.kind_label(), dataset_id)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JSweepCell {
    pub j: usize,
    pub best_val_loss: f64,
    pub report: EvalReport,
}

/// Re-trains a UNIPoint model per basis count and scores the test split.
pub fn j_sweep(
    basis: &str,
    values: &[usize],
    prepared: &Prepared,
    cfg: &TrainConfig,
    dataset_id: &str,
) -> Result<Vec<JSweepCell>, PipelineError> {
    let mut cells = Vec::with_capacity(values.len());
    for &j in values {
        let spec = ModelSpec::unipoint(basis, j);
        let (model, summary) = train_model(&spec, prepared, cfg)?;
        let best_val_loss = match &summary {
            TrainSummary::Neural(r) => r.best_val_loss,
            TrainSummary::Mle(m) => m.per_event_nll,
        };
        let report = evaluate_on(&model, prepared, &prepared.split.test, cfg.mc_samples_eval, cfg.seed, dataset_id);
        cells.push(JSweepCell { j, best_val_loss, report });
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSweepCell {
    pub mc_samples: usize,
    /// Mean over sequences of |per-event LL(S) - per-event LL(reference)|.
    pub mean_abs_delta: f64,
    pub std_abs_delta: f64,
    pub per_seq_abs_delta: Vec<f64>,
}

/// Compares Monte-Carlo log-likelihood estimates against a
/// `reference_samples` approximation on the given sequences.
pub fn mc_sweep(
    model: &TrainedModel,
    seqs: &[&EventSequence],
    values: &[usize],
    reference_samples: usize,
    seed: u64,
) -> Vec<McSweepCell> {
    let reference: Vec<f64> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut rng = derive_rng(seed, "mc-ref", &[i as u64]);
            model.sequence_ll(seq, reference_samples, &mut rng) / seq.len().max(1) as f64
        })
        .collect();
    values
        .iter()
        .map(|&s| {
            let deltas: Vec<f64> = seqs
                .par_iter()
                .enumerate()
                .map(|(i, seq)| {
                    let mut rng = derive_rng(seed, "mc-sweep", &[s as u64, i as u64]);
                    let ll = model.sequence_ll(seq, s, &mut rng) / seq.len().max(1) as f64;
                    (ll - reference[i]).abs()
                })
                .collect();
            let n = deltas.len() as f64;
            let mean = deltas.iter().sum::<f64>() / n;
            let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            McSweepCell {
                mc_samples: s,
                mean_abs_delta: mean,
                std_abs_delta: var.sqrt(),
                per_seq_abs_delta: deltas,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesize_is_deterministic_and_sized() {
        let p = ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 };
        let a = synthesize(&p, 8, 32, 3).unwrap();
        let b = synthesize(&p, 8, 32, 3).unwrap();
        assert_eq!(a.sequences, b.sequences);
        assert_eq!(a.len(), 8);
        assert!(a.sequences.iter().all(|s| s.len() == 32));
    }

    #[test]
    fn prepared_norm_comes_from_train_split_only() {
        let p = ParametricProcess::ExpHawkes { mu: 1.0, alpha: 0.3, beta: 1.0 };
        let dataset = synthesize(&p, 10, 16, 1).unwrap();
        let prepared = Prepared::new(dataset.clone(), (0.6, 0.2, 0.2), 5, false).unwrap();
        let train_seqs: Vec<EventSequence> = prepared
            .split
            .train
            .iter()
            .map(|&i| dataset.sequences[i].clone())
            .collect();
        let expect = compute_norm_stats(&train_seqs, false).unwrap();
        assert_eq!(prepared.norm, expect);
    }

    #[test]
    fn model_spec_labels() {
        assert_eq!(ModelSpec::unipoint("EXP", 64).label(), "unipoint-EXP-J64");
        assert_eq!(ModelSpec::ExpHawkes.label(), "exphawkes");
        let lstm = ModelSpec::UniPoint {
            basis: "PL".into(),
            transfer: "MAXSIG".into(),
            j: 8,
            hidden: 16,
            cell: "LSTM".into(),
        };
        assert_eq!(lstm.label(), "unipoint-PL-J8-lstm-maxsig");
    }

    #[test]
    fn mle_path_trains_and_scores() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        let dataset = synthesize(&p, 24, 48, 7).unwrap();
        let prepared = Prepared::new(dataset, (0.6, 0.2, 0.2), 0, false).unwrap();
        let cfg = TrainConfig { seed: 1, ..TrainConfig::default() };
        let (model, summary) = train_model(&ModelSpec::ExpHawkes, &prepared, &cfg).unwrap();
        assert!(matches!(model, TrainedModel::Parametric(ParametricProcess::ExpHawkes { .. })));
        let TrainSummary::Mle(fit) = summary else { panic!("expected MLE summary") };
        assert!(fit.nll.is_finite());
        let report = evaluate_on(&model, &prepared, &prepared.split.test, 1, 0, "eh");
        assert_eq!(report.n, prepared.split.test.len());
    }
}
