//! Closed-form parametric point processes: intensity, analytic compensator,
//! exact simulation, and maximum-likelihood fitting.
//!
//! Four families are supported:
//!
//! * `EXP_HAWKES(mu, alpha, beta)` — `mu + alpha*beta * sum exp(-beta (t - t_i))`
//! * `PL_HAWKES(mu, alpha, beta, delta)` — `mu + alpha * sum (t - t_i + delta)^-(1+beta)`
//! * `SELF_CORRECTING(nu, gamma)` — `exp(nu t - n gamma)` with `n` the event count before `t`
//! * `DECAYING_SINE(mu, alpha, beta, gamma)` —
//!   `mu + gamma * sum (1 + sin(alpha (t - t_i))) exp(-beta (t - t_i))`

mod fit;
mod simulate;

pub use fit::{fit_mle, FitOptions, MleFit, MleKind};
pub use simulate::StopRule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventSequence;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("evaluation time {t} not after history time {history_time}")]
    TimeInHistory { t: f64, history_time: f64 },
    #[error("event at {event} lies strictly inside integration interval ({t0}, {t1})")]
    EventInsideInterval { event: f64, t0: f64, t1: f64 },
    #[error("interval bounds must satisfy 0 <= t0 <= t1, got ({t0}, {t1})")]
    BadInterval { t0: f64, t1: f64 },
    #[error("simulation exceeded {0} events before reaching the horizon")]
    Runaway(usize),
    #[error("empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ParametricProcess {
    #[serde(rename = "EXP_HAWKES")]
    ExpHawkes { mu: f64, alpha: f64, beta: f64 },
    #[serde(rename = "PL_HAWKES")]
    PlHawkes { mu: f64, alpha: f64, beta: f64, delta: f64 },
    #[serde(rename = "SELF_CORRECTING")]
    SelfCorrecting { nu: f64, gamma: f64 },
    #[serde(rename = "DECAYING_SINE")]
    DecayingSine { mu: f64, alpha: f64, beta: f64, gamma: f64 },
}

impl ParametricProcess {
    pub fn kind_str(&self) -> &'static str {
        match self {
            ParametricProcess::ExpHawkes { .. } => "EXP_HAWKES",
            ParametricProcess::PlHawkes { .. } => "PL_HAWKES",
            ParametricProcess::SelfCorrecting { .. } => "SELF_CORRECTING",
            ParametricProcess::DecayingSine { .. } => "DECAYING_SINE",
        }
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        let bad = |msg: &str| Err(ProcessError::InvalidParameter(msg.to_string()));
        match *self {
            ParametricProcess::ExpHawkes { mu, alpha, beta } => {
                if !(mu > 0.0) || !mu.is_finite() {
                    return bad("EXP_HAWKES needs mu > 0");
                }
                if !(alpha >= 0.0) || !(beta > 0.0) {
                    return bad("EXP_HAWKES needs alpha >= 0, beta > 0");
                }
            }
            ParametricProcess::PlHawkes { mu, alpha, beta, delta } => {
                if !(mu > 0.0) || !(alpha >= 0.0) || !(beta > 0.0) || !(delta > 0.0) {
                    return bad("PL_HAWKES needs mu > 0, alpha >= 0, beta > 0, delta > 0");
                }
            }
            ParametricProcess::SelfCorrecting { nu, gamma } => {
                if !(nu > 0.0) || !(gamma > 0.0) {
                    return bad("SELF_CORRECTING needs nu > 0, gamma > 0");
                }
            }
            ParametricProcess::DecayingSine { mu, alpha, beta, gamma } => {
                if !(mu > 0.0) || !(beta > 0.0) || !(gamma > 0.0) || !alpha.is_finite() {
                    return bad("DECAYING_SINE needs mu > 0, beta > 0, gamma > 0");
                }
            }
        }
        Ok(())
    }

    /// Conditional intensity at `t` given past events. `t` must lie
    /// strictly after every history time.
    pub fn intensity(&self, history: &[f64], t: f64) -> Result<f64, ProcessError> {
        if let Some(&last) = history.last() {
            if t <= last {
                return Err(ProcessError::TimeInHistory { t, history_time: last });
            }
        }
        Ok(self.intensity_unchecked(history, t))
    }

    pub(crate) fn intensity_unchecked(&self, history: &[f64], t: f64) -> f64 {
        match *self {
            ParametricProcess::ExpHawkes { mu, alpha, beta } => {
                mu + alpha * beta * history.iter().map(|ti| (-beta * (t - ti)).exp()).sum::<f64>()
            }
            ParametricProcess::PlHawkes { mu, alpha, beta, delta } => {
                mu + alpha
                    * history
                        .iter()
                        .map(|ti| (t - ti + delta).powf(-(1.0 + beta)))
                        .sum::<f64>()
            }
            ParametricProcess::SelfCorrecting { nu, gamma } => {
                (nu * t - history.len() as f64 * gamma).exp()
            }
            ParametricProcess::DecayingSine { mu, alpha, beta, gamma } => {
                mu + gamma
                    * history
                        .iter()
                        .map(|ti| {
                            let s = t - ti;
                            (1.0 + (alpha * s).sin()) * (-beta * s).exp()
                        })
                        .sum::<f64>()
            }
        }
    }

    /// Analytic integral of the intensity over `(t0, t1]`, with the event
    /// history fixed on that interval. History times inside `(t0, t1)` are
    /// a domain error; times at or beyond `t1` do not contribute.
    pub fn compensator(&self, history: &[f64], t0: f64, t1: f64) -> Result<f64, ProcessError> {
        if !(0.0 <= t0 && t0 <= t1) {
            return Err(ProcessError::BadInterval { t0, t1 });
        }
        for &ti in history {
            if ti > t0 && ti < t1 {
                return Err(ProcessError::EventInsideInterval { event: ti, t0, t1 });
            }
        }
        let cut = history.partition_point(|&ti| ti <= t0);
        Ok(self.compensator_unchecked(&history[..cut], t0, t1))
    }

    pub(crate) fn compensator_unchecked(&self, history: &[f64], t0: f64, t1: f64) -> f64 {
        if t0 == t1 {
            return 0.0;
        }
        let dt = t1 - t0;
        match *self {
            ParametricProcess::ExpHawkes { mu, alpha, beta } => {
                mu * dt
                    + alpha
                        * history
                            .iter()
                            .map(|ti| (-beta * (t0 - ti)).exp() - (-beta * (t1 - ti)).exp())
                            .sum::<f64>()
            }
            ParametricProcess::PlHawkes { mu, alpha, beta, delta } => {
                mu * dt
                    + alpha / beta
                        * history
                            .iter()
                            .map(|ti| (t0 - ti + delta).powf(-beta) - (t1 - ti + delta).powf(-beta))
                            .sum::<f64>()
            }
            ParametricProcess::SelfCorrecting { nu, gamma } => {
                let n = history.len() as f64;
                (-n * gamma).exp() / nu * ((nu * t1).exp() - (nu * t0).exp())
            }
            ParametricProcess::DecayingSine { mu, alpha, beta, gamma } => {
                mu * dt
                    + gamma
                        * history
                            .iter()
                            .map(|ti| {
                                decaying_sine_antideriv(alpha, beta, t1 - ti)
                                    - decaying_sine_antideriv(alpha, beta, t0 - ti)
                            })
                            .sum::<f64>()
            }
        }
    }

    /// Exact log-likelihood of a sequence over its window `(0, t_end]`:
    /// sum of event log-intensities minus the analytic compensator.
    pub fn sequence_log_likelihood(&self, seq: &EventSequence) -> f64 {
        let times = seq.times();
        let mut ll = 0.0;
        for k in 0..seq.num_intervals() {
            let (lo, hi) = seq.interval_bounds(k);
            ll -= self.compensator_unchecked(&times[..k], lo, hi);
            if k < times.len() {
                ll += self.intensity_unchecked(&times[..k], times[k]).ln();
            }
        }
        ll
    }

    /// Compensator-transformed interarrival times; unit-rate exponential
    /// under the true model (random time change).
    pub fn time_change_residuals(&self, seq: &EventSequence) -> Vec<f64> {
        let times = seq.times();
        (0..times.len())
            .map(|k| {
                let (lo, hi) = seq.interval_bounds(k);
                self.compensator_unchecked(&times[..k], lo, hi)
            })
            .collect()
    }
}

/// Integral of `(1 + sin(alpha u)) exp(-beta u)` over `[0, s]`.
fn decaying_sine_antideriv(alpha: f64, beta: f64, s: f64) -> f64 {
    let decay = (1.0 - (-beta * s).exp()) / beta;
    let denom = alpha * alpha + beta * beta;
    let (sin_s, cos_s) = (alpha * s).sin_cos();
    let osc = (alpha - (-beta * s).exp() * (beta * sin_s + alpha * cos_s)) / denom;
    decay + osc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::adaptive_simpson;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper_processes() -> [ParametricProcess; 4] {
        [
            ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 },
            ParametricProcess::PlHawkes { mu: 0.5, alpha: 0.8, beta: 1.0, delta: 0.5 },
            ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 },
            ParametricProcess::DecayingSine {
                mu: 0.5,
                alpha: 5.0 * std::f64::consts::PI,
                beta: 2.0,
                gamma: 1.0,
            },
        ]
    }

    #[test]
    fn background_only_intensity() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        assert_eq!(p.intensity(&[], 3.7).unwrap(), 0.5);
        let sc = ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 };
        assert!((sc.intensity(&[], 1e-12).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exp_hawkes_intensity_hand_value() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        let v = p.intensity(&[1.0], 2.0).unwrap();
        assert!((v - (0.5 + 0.8 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((v - 0.7943036).abs() < 1e-7);
    }

    #[test]
    fn intensity_rejects_time_in_history() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        assert!(matches!(
            p.intensity(&[1.0], 1.0),
            Err(ProcessError::TimeInHistory { .. })
        ));
    }

    #[test]
    fn compensator_hand_values() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        // History {0}, interval (0, 1]: mu + alpha (1 - e^-1).
        let v = p.compensator(&[0.0], 0.0, 1.0).unwrap();
        assert!((v - (0.5 + 0.8 * (1.0 - (-1.0f64).exp()))).abs() < 1e-12);
        assert!((v - 1.005696).abs() < 1e-6);

        let sc = ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 };
        let v = sc.compensator(&[], 0.0, 1.0).unwrap();
        assert!((v - (1.0f64.exp() - 1.0)).abs() < 1e-12);

        for p in paper_processes() {
            assert_eq!(p.compensator(&[0.4], 0.7, 0.7).unwrap(), 0.0);
        }
    }

    #[test]
    fn compensator_rejects_interior_events() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        assert!(matches!(
            p.compensator(&[0.5], 0.0, 1.0),
            Err(ProcessError::EventInsideInterval { .. })
        ));
        // Events exactly at the endpoints are fine.
        assert!(p.compensator(&[0.0, 1.0], 0.0, 1.0).is_ok());
        assert!(p.compensator(&[0.5], 0.5, 1.0).is_ok());
    }

    #[test]
    fn compensator_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for p in paper_processes() {
            for _ in 0..50 {
                let history = [0.2, 0.9, 1.4];
                let t0 = 1.4 + rng.random_range(0.0..0.5);
                let t1 = t0 + rng.random_range(0.0..1.0);
                let t2 = t1 + rng.random_range(0.0..1.0);
                let whole = p.compensator(&history, t0, t2).unwrap();
                let split = p.compensator(&history, t0, t1).unwrap()
                    + p.compensator(&history, t1, t2).unwrap();
                assert!(
                    (whole - split).abs() <= 1e-12 * whole.abs().max(1.0),
                    "{}: {whole} vs {split}",
                    p.kind_str()
                );
            }
        }
    }

    #[test]
    fn compensator_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for p in paper_processes() {
            for _ in 0..100 {
                let history = [0.3, 1.1, 2.0];
                let t0 = 2.0 + rng.random_range(0.0..1.0);
                let t1 = t0 + rng.random_range(0.001..2.0);
                let analytic = p.compensator(&history, t0, t1).unwrap();
                let quad = adaptive_simpson(
                    |t| p.intensity_unchecked(&history, t),
                    t0,
                    t1,
                    1e-12,
                );
                assert!(
                    (analytic - quad).abs() <= 1e-8 * analytic.abs().max(1e-12),
                    "{}: {analytic} vs {quad}",
                    p.kind_str()
                );
            }
        }
    }

    #[test]
    fn log_likelihood_decomposes_over_intervals() {
        let p = ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 };
        let seq = EventSequence::new(vec![0.5, 1.3, 2.0], 2.5).unwrap();
        let ll = p.sequence_log_likelihood(&seq);
        let mut by_hand = -p.compensator(&[], 0.0, 0.5).unwrap();
        by_hand += p.intensity_unchecked(&[], 0.5).ln();
        by_hand -= p.compensator(&[0.5], 0.5, 1.3).unwrap();
        by_hand += p.intensity_unchecked(&[0.5], 1.3).ln();
        by_hand -= p.compensator(&[0.5, 1.3], 1.3, 2.0).unwrap();
        by_hand += p.intensity_unchecked(&[0.5, 1.3], 2.0).ln();
        by_hand -= p.compensator(&[0.5, 1.3, 2.0], 2.0, 2.5).unwrap();
        assert!((ll - by_hand).abs() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_parameters() {
        assert!(ParametricProcess::ExpHawkes { mu: 0.0, alpha: 0.8, beta: 1.0 }
            .validate()
            .is_err());
        assert!(ParametricProcess::PlHawkes { mu: 0.5, alpha: 0.8, beta: 1.0, delta: 0.0 }
            .validate()
            .is_err());
        assert!(ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 }
            .validate()
            .is_ok());
    }

    #[test]
    fn serde_uses_spec_kind_strings() {
        let p = ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 };
        let js = serde_json::to_string(&p).unwrap();
        assert!(js.contains("\"kind\":\"SELF_CORRECTING\""));
        let back: ParametricProcess = serde_json::from_str(&js).unwrap();
        assert_eq!(back, p);
    }
}
