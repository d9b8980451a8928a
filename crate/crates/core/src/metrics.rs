//! Evaluation metrics: holdout log-likelihood with 95% confidence
//! intervals, total variation against a ground-truth intensity, paired
//! t-tests between models, and the Kolmogorov-Smirnov machinery the
//! simulator tests rely on.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::events::EventSequence;
use crate::processes::ParametricProcess;
use crate::rng::derive_rng;
use crate::unipoint::{RmtppModel, UniPointModel};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reports are misaligned: {0}")]
    Misaligned(String),
}

/// Anything that can score a sequence and expose its conditional intensity
/// over the sequence's fixed event history. The closure returned by
/// `conditioned` maps `(interval index, elapsed time)` to an intensity,
/// where interval `k` of an `N`-event sequence covers `(t_k, t_{k+1}]`
/// with `t_0 = 0` and `t_{N+1} = t_end`.
pub trait IntensityModel: Sync {
    /// Log-likelihood of one sequence. Models with an analytic compensator
    /// ignore `mc_samples`.
    fn sequence_ll(&self, seq: &EventSequence, mc_samples: usize, rng: &mut ChaCha8Rng) -> f64;

    fn conditioned<'a>(&'a self, seq: &'a EventSequence) -> Box<dyn Fn(usize, f64) -> f64 + Sync + 'a>;
}

impl IntensityModel for ParametricProcess {
    fn sequence_ll(&self, seq: &EventSequence, _mc_samples: usize, _rng: &mut ChaCha8Rng) -> f64 {
        self.sequence_log_likelihood(seq)
    }

    fn conditioned<'a>(&'a self, seq: &'a EventSequence) -> Box<dyn Fn(usize, f64) -> f64 + Sync + 'a> {
        let times = seq.times();
        Box::new(move |interval, tau| {
            let (lo, _) = seq.interval_bounds(interval);
            self.intensity_unchecked(&times[..interval], lo + tau)
        })
    }
}

impl IntensityModel for UniPointModel {
    fn sequence_ll(&self, seq: &EventSequence, mc_samples: usize, rng: &mut ChaCha8Rng) -> f64 {
        -self.nll(seq, mc_samples, rng)
    }

    fn conditioned<'a>(&'a self, seq: &'a EventSequence) -> Box<dyn Fn(usize, f64) -> f64 + Sync + 'a> {
        let params = self.forward_params(seq);
        Box::new(move |interval, tau| self.intensity_at(&params[interval], tau))
    }
}

impl IntensityModel for RmtppModel {
    fn sequence_ll(&self, seq: &EventSequence, _mc_samples: usize, _rng: &mut ChaCha8Rng) -> f64 {
        -self.sequence_nll(seq)
    }

    fn conditioned<'a>(&'a self, seq: &'a EventSequence) -> Box<dyn Fn(usize, f64) -> f64 + Sync + 'a> {
        let offsets = self.interval_offsets(seq);
        Box::new(move |interval, tau| self.intensity(offsets[interval], tau))
    }
}

/// Holdout log-likelihood summary over a set of sequences. Confidence
/// intervals are `1.96 * sample std / sqrt(n)` across sequences; the
/// per-event variant divides each sequence's LL by its event count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub n: usize,
    pub total_events: usize,
    pub per_seq_ll: Vec<f64>,
    pub per_event_ll: Vec<f64>,
    pub mean_ll: f64,
    pub ci95_ll: f64,
    pub mean_per_event_ll: f64,
    pub ci95_per_event_ll: f64,
}

pub fn mean_and_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "model,dataset,mean_ll,ci95,n";

    /// One row of the comparison table; `mean_ll` is the per-event mean,
    /// matching the scale models are compared on.
    pub fn csv_row(&self, precision: usize) -> String {
        format!(
            "{},{},{:.p$e},{:.p$e},{}",
            self.model,
            self.dataset,
            self.mean_per_event_ll,
            self.ci95_per_event_ll,
            self.n,
            p = precision.saturating_sub(1)
        )
    }
}

/// Scores every test sequence under the model. Per-sequence RNG streams
/// are derived from `seed`, so two evaluations with the same seed agree
/// exactly.
pub fn holdout_ll(
    model: &dyn IntensityModel,
    test: &[&EventSequence],
    mc_samples: usize,
    seed: u64,
    model_id: &str,
    dataset_id: &str,
) -> EvalReport {
    let per_seq_ll: Vec<f64> = test
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut rng = derive_rng(seed, "eval-mc", &[i as u64]);
            model.sequence_ll(seq, mc_samples, &mut rng)
        })
        .collect();
    let per_event_ll: Vec<f64> = per_seq_ll
        .iter()
        .zip(test)
        .map(|(ll, seq)| ll / seq.len().max(1) as f64)
        .collect();
    let (mean_ll, ci95_ll) = mean_and_ci95(&per_seq_ll);
    let (mean_per_event_ll, ci95_per_event_ll) = mean_and_ci95(&per_event_ll);
    EvalReport {
        model: model_id.to_string(),
        dataset: dataset_id.to_string(),
        seed,
        n: test.len(),
        total_events: test.iter().map(|s| s.len()).sum(),
        per_seq_ll,
        per_event_ll,
        mean_ll,
        ci95_ll,
        mean_per_event_ll,
        ci95_per_event_ll,
    }
}

/// Integrated squared intensity difference over the observation window,
/// both models conditioned on the same fixed event history. Monte-Carlo
/// samples are stratified per inter-event interval (uniform within each,
/// weighted by interval length) so short spiky intervals are not washed
/// out.
pub fn total_variation(
    a: &dyn IntensityModel,
    b: &dyn IntensityModel,
    seq: &EventSequence,
    n_per_interval: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    use rand::Rng;
    let fa = a.conditioned(seq);
    let fb = b.conditioned(seq);
    let mut tv = 0.0;
    for k in 0..seq.num_intervals() {
        let (lo, hi) = seq.interval_bounds(k);
        let delta = hi - lo;
        if delta <= 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for _ in 0..n_per_interval {
            let tau = delta * (1.0 - rng.random::<f64>());
            let d = fa(k, tau) - fb(k, tau);
            acc += d * d;
        }
        tv += delta * acc / n_per_interval as f64;
    }
    tv
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_stat: f64,
    pub p_value: f64,
    pub df: usize,
    /// Set when the paired differences are a nonzero constant (zero
    /// variance); the p-value is reported as 0 in that case.
    pub degenerate: bool,
}

/// Two-sided paired t-test over per-sequence log-likelihood differences.
pub fn paired_ttest(a: &EvalReport, b: &EvalReport) -> Result<TTest, MetricsError> {
    if a.n != b.n || a.per_seq_ll.len() != b.per_seq_ll.len() {
        return Err(MetricsError::Misaligned(format!(
            "{} sequences vs {}",
            a.n, b.n
        )));
    }
    if a.dataset != b.dataset {
        return Err(MetricsError::Misaligned(format!(
            "dataset `{}` vs `{}`",
            a.dataset, b.dataset
        )));
    }
    let diffs: Vec<f64> = a
        .per_seq_ll
        .iter()
        .zip(&b.per_seq_ll)
        .map(|(x, y)| x - y)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(TTest {
                t_stat: 0.0,
                p_value: 1.0,
                df: diffs.len() - 1,
                degenerate: false,
            });
        }
        return Ok(TTest {
            t_stat: f64::INFINITY * mean.signum(),
            p_value: 0.0,
            df: diffs.len() - 1,
            degenerate: true,
        });
    }
    let t = mean / (var / n).sqrt();
    let df = diffs.len() - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest {
        t_stat: t,
        p_value: p,
        df,
        degenerate: false,
    })
}

/// KS statistic of a sample against the unit-rate exponential CDF.
/// Sorts the sample in place.
pub fn ks_statistic_exp1(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = 1.0 - (-x).exp();
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value with the small-sample correction
/// `x = D (sqrt(n) + 0.12 + 0.11/sqrt(n))`.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let x = d * (sqrt_n + 0.12 + 0.11 / sqrt_n);
    let mut sum = 0.0;
    for k in 1..=100 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
