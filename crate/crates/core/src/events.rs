//! Event-sequence data model, dataset container, normalization statistics,
//! splits, and JSON-lines file I/O.
//!
//! A dataset file is UTF-8 JSON lines, one object per sequence:
//! `{"times":[...ascending reals...],"t_end":<real>}`. An optional `"marks"`
//! key is ignored. The writer emits floats with 17 significant digits so a
//! save/load round trip is lossless.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    InvalidSequence {
        line: usize,
        #[source]
        source: SequenceError,
    },
    #[error("empty dataset")]
    Empty,
    #[error("need at least 2 interarrival times to compute statistics, got {0}")]
    TooFewInterarrivals(usize),
    #[error("all interarrival times identical; standard deviation is zero")]
    DegenerateStd,
    #[error("split fractions must be positive and sum to 1, got ({0}, {1}, {2})")]
    BadFractions(f64, f64, f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("event times must be strictly increasing (index {0})")]
    NonIncreasing(usize),
    #[error("event time at index {0} outside (0, t_end]")]
    OutOfWindow(usize),
    #[error("t_end must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("non-finite event time at index {0}")]
    NonFinite(usize),
}

/// Ordered event times on an observation window `(0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSequence {
    times: Vec<f64>,
    t_end: f64,
}

impl EventSequence {
    /// Validates and wraps raw times: strictly increasing, each in
    /// `(0, t_end]`, `t_end > 0`. An empty sequence is a valid window with
    /// no events.
    pub fn new(times: Vec<f64>, t_end: f64) -> Result<Self, SequenceError> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(SequenceError::BadHorizon(t_end));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(SequenceError::NonFinite(i));
            }
            if t <= prev {
                return Err(SequenceError::NonIncreasing(i));
            }
            if t > t_end {
                return Err(SequenceError::OutOfWindow(i));
            }
            prev = t;
        }
        Ok(Self { times, t_end })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of events.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Interarrival times, with the first anchored to the window start:
    /// `times[0] - 0`.
    pub fn interarrivals(&self) -> impl Iterator<Item = f64> + '_ {
        self.times
            .iter()
            .scan(0.0, |prev, &t| {
                let tau = t - *prev;
                *prev = t;
                Some(tau)
            })
    }

    /// A sequence with `N` events has `N + 1` intervals; the last one is
    /// `(t_N, t_end]` and may be empty when the horizon equals the last
    /// event time.
    pub fn num_intervals(&self) -> usize {
        self.times.len() + 1
    }

    /// Bounds `(lo, hi]` of interval `k` for `k` in `0..num_intervals()`.
    pub fn interval_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { 0.0 } else { self.times[k - 1] };
        let hi = if k < self.times.len() {
            self.times[k]
        } else {
            self.t_end
        };
        (lo, hi)
    }
}

/// Interarrival normalization statistics, computed from the training split
/// only. `normalize_eval_times` selects whether intensity-evaluation times
/// are divided by `std_tau` (on by convention for real-world-style data,
/// off for synthetic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_tau: f64,
    pub std_tau: f64,
    pub normalize_eval_times: bool,
}

impl NormStats {
    /// Identity statistics: inputs pass through unchanged.
    pub fn identity() -> Self {
        Self {
            mean_tau: 0.0,
            std_tau: 1.0,
            normalize_eval_times: false,
        }
    }

    /// Standardized RNN input for a raw interarrival time.
    pub fn standardize(&self, tau: f64) -> f64 {
        (tau - self.mean_tau) / self.std_tau
    }

    /// Intensity-evaluation time, scaled by `1/std_tau` when
    /// `normalize_eval_times` is set.
    pub fn eval_time(&self, tau: f64) -> f64 {
        if self.normalize_eval_times {
            tau / self.std_tau
        } else {
            tau
        }
    }
}

/// Sample mean and sample (n-1) standard deviation of all interarrival
/// times pooled over the given training sequences.
pub fn compute_norm_stats(
    train: &[EventSequence],
    normalize_eval_times: bool,
) -> Result<NormStats, DataError> {
    let taus: Vec<f64> = train.iter().flat_map(|s| s.interarrivals()).collect();
    if taus.len() < 2 {
        return Err(DataError::TooFewInterarrivals(taus.len()));
    }
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let var = taus.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if std == 0.0 {
        return Err(DataError::DegenerateStd);
    }
    Ok(NormStats {
        mean_tau: mean,
        std_tau: std,
        normalize_eval_times,
    })
}

/// A collection of event sequences sharing one time unit, with optional
/// normalization statistics attached once a training split is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<EventSequence>,
    pub norm: Option<NormStats>,
}

impl Dataset {
    pub fn new(sequences: Vec<EventSequence>) -> Result<Self, DataError> {
        if sequences.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Self {
            sequences,
            norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }
}

/// Disjoint, exhaustive index partition of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn gather<'a>(&self, d: &'a Dataset, part: &[usize]) -> Vec<&'a EventSequence> {
        part.iter().map(|&i| &d.sequences[i]).collect()
    }
}

/// Deterministic shuffle by seed, then contiguous partition:
/// `|train| = floor(f0*N)`, `|val| = floor(f1*N)`, remainder to test.
pub fn split_dataset(
    n: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Split, DataError> {
    let (f0, f1, f2) = fractions;
    if f0 <= 0.0 || f1 <= 0.0 || f2 <= 0.0 || (f0 + f1 + f2 - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(f0, f1, f2));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = (f0 * n as f64).floor() as usize;
    let n_val = (f1 * n as f64).floor() as usize;
    let train = idx[..n_train].to_vec();
    let val = idx[n_train..n_train + n_val].to_vec();
    let test = idx[n_train + n_val..].to_vec();
    Ok(Split { train, val, test })
}

#[derive(Deserialize)]
struct RawLine {
    times: Vec<f64>,
    t_end: f64,
    #[serde(default)]
    #[allow(dead_code)]
    marks: Option<serde_json::Value>,
}

/// Loads a JSONL dataset, validating every sequence. Errors carry the
/// 1-based line number of the offending record.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut sequences = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine =
            serde_json::from_str(&line).map_err(|source| DataError::Parse { line: i + 1, source })?;
        let seq = EventSequence::new(raw.times, raw.t_end)
            .map_err(|source| DataError::InvalidSequence { line: i + 1, source })?;
        sequences.push(seq);
    }
    Dataset::new(sequences)
}

fn format_float(x: f64) -> String {
    // 17 significant digits: enough to round-trip any f64 exactly.
    format!("{:.16e}", x)
}

/// Serializes one sequence as a JSONL record.
pub fn sequence_to_json_line(seq: &EventSequence) -> String {
    let mut line = String::with_capacity(32 + 26 * seq.len());
    line.push_str("{\"times\":[");
    for (i, &t) in seq.times().iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&format_float(t));
    }
    let _ = write!(line, "],\"t_end\":{}}}", format_float(seq.t_end()));
    line
}

/// Writes a dataset in the JSONL format read by [`load_dataset`].
pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::new();
    for seq in &d.sequences {
        out.push_str(&sequence_to_json_line(seq));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn sequence_invariants() {
        assert!(EventSequence::new(vec![0.5, 1.2], 2.0).is_ok());
        assert!(matches!(
            EventSequence::new(vec![1.2, 0.5], 2.0),
            Err(SequenceError::NonIncreasing(1))
        ));
        assert!(matches!(
            EventSequence::new(vec![0.5, 2.5], 2.0),
            Err(SequenceError::OutOfWindow(1))
        ));
        assert!(matches!(
            EventSequence::new(vec![0.0], 2.0),
            Err(SequenceError::NonIncreasing(0))
        ));
        assert!(EventSequence::new(vec![], 1.0).is_ok());
        assert!(EventSequence::new(vec![], 0.0).is_err());
    }

    #[test]
    fn interarrivals_anchor_at_zero() {
        let s = EventSequence::new(vec![1.0, 3.0], 3.0).unwrap();
        let taus: Vec<f64> = s.interarrivals().collect();
        assert_eq!(taus, vec![1.0, 2.0]);
    }

    #[test]
    fn interval_bounds_cover_window() {
        let s = EventSequence::new(vec![1.0, 3.0], 4.0).unwrap();
        assert_eq!(s.num_intervals(), 3);
        assert_eq!(s.interval_bounds(0), (0.0, 1.0));
        assert_eq!(s.interval_bounds(1), (1.0, 3.0));
        assert_eq!(s.interval_bounds(2), (3.0, 4.0));
    }

    #[test]
    fn load_valid_and_invalid_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"times\":[0.5,1.2],\"t_end\":2.0}}").unwrap();
        writeln!(f, "{{\"times\":[1.0],\"t_end\":2.0,\"marks\":[3]}}").unwrap();
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.sequences[0].len(), 2);
        assert_eq!(d.sequences[0].t_end(), 2.0);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "{{\"times\":[0.5,1.2],\"t_end\":2.0}}").unwrap();
        writeln!(bad, "{{\"times\":[1.2,0.5],\"t_end\":2.0}}").unwrap();
        match load_dataset(bad.path()) {
            Err(DataError::InvalidSequence { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected invalid-sequence error, got {:?}", other.map(|_| ())),
        }

        let mut garbled = tempfile::NamedTempFile::new().unwrap();
        writeln!(garbled, "{{\"times\":").unwrap();
        assert!(matches!(
            load_dataset(garbled.path()),
            Err(DataError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(load_dataset(f.path()), Err(DataError::Empty)));
    }

    #[test]
    fn norm_stats_hand_computed() {
        // Sequences [1,3] and [2]: pooled interarrivals {1,2,2}.
        let a = EventSequence::new(vec![1.0, 3.0], 3.0).unwrap();
        let b = EventSequence::new(vec![2.0], 2.0).unwrap();
        let ns = compute_norm_stats(&[a, b], false).unwrap();
        assert!((ns.mean_tau - 5.0 / 3.0).abs() < 1e-15);
        assert!((ns.std_tau - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn norm_stats_degenerate_and_too_few() {
        let s = EventSequence::new(vec![1.0, 2.0, 3.0], 3.0).unwrap();
        assert!(matches!(
            compute_norm_stats(std::slice::from_ref(&s), false),
            Err(DataError::DegenerateStd)
        ));
        let one = EventSequence::new(vec![1.0], 1.0).unwrap();
        assert!(matches!(
            compute_norm_stats(std::slice::from_ref(&one), false),
            Err(DataError::TooFewInterarrivals(1))
        ));
    }

    #[test]
    fn standardized_training_taus_have_unit_std() {
        let mut seqs = Vec::new();
        let mut t;
        for k in 0..20 {
            t = 0.0;
            let mut times = Vec::new();
            for i in 0..30 {
                t += 0.1 + 0.05 * ((i * 7 + k * 13) % 11) as f64;
                times.push(t);
            }
            seqs.push(EventSequence::new(times, t).unwrap());
        }
        let ns = compute_norm_stats(&seqs, false).unwrap();
        let std_hat = {
            let z: Vec<f64> = seqs
                .iter()
                .flat_map(|s| s.interarrivals())
                .map(|tau| ns.standardize(tau))
                .collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        assert!((std_hat - 1.0).abs() < 1e-9);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let s = split_dataset(10, (0.6, 0.2, 0.2), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        let s = split_dataset(5, (0.6, 0.2, 0.2), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3, 1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_dataset(100, (0.6, 0.2, 0.2), 42).unwrap();
        let b = split_dataset(100, (0.6, 0.2, 0.2), 42).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(100, (0.6, 0.2, 0.2), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(split_dataset(10, (0.5, 0.2, 0.2), 0).is_err());
        assert!(split_dataset(10, (0.8, 0.2, -0.0), 0).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_are_disjoint_and_exhaustive(n in 3usize..200, seed in 0u64..1000) {
            let s = split_dataset(n, (0.6, 0.2, 0.2), seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn save_load_round_trip(raw in proptest::collection::vec(1e-6f64..1e6, 0..40)) {
            let mut t = 0.0;
            let times: Vec<f64> = raw.iter().map(|dt| { t += dt; t }).collect();
            let t_end = t + 1.0;
            let seq = EventSequence::new(times, t_end).unwrap();
            let d = Dataset::new(vec![seq]).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            save_dataset(&d, f.path()).unwrap();
            let d2 = load_dataset(f.path()).unwrap();
            prop_assert_eq!(&d.sequences, &d2.sequences);
            // A second save is byte-identical.
            let f2 = tempfile::NamedTempFile::new().unwrap();
            save_dataset(&d2, f2.path()).unwrap();
            prop_assert_eq!(std::fs::read(f.path()).unwrap(), std::fs::read(f2.path()).unwrap());
        }
    }
}
