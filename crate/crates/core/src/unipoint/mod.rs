//! The UNIPoint intensity model: a recurrent cell reads standardized
//! interarrival times, a linear head maps each hidden state to per-interval
//! basis parameters, and the intensity over an interval is a transfer
//! function applied to the summed basis outputs,
//! `lambda(tau) = f+( sum_j phi(tau; p_ij) )`.
//!
//! The negative log-likelihood pairs event log-intensities with a
//! compensator estimated by Monte-Carlo integration over each inter-event
//! interval (a deterministic trapezoid variant exists for diagnostics).

mod rmtpp;
mod train;

pub use rmtpp::RmtppModel;
pub use train::{train, FitReport, SequenceLoss, TrainConfig, TrainError};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisSpec, TransferKind};
use crate::events::{EventSequence, NormStats};
use crate::nn::{Cell, CellKind, CellTape, Matrix, NnError, ParamBlock};

/// Per-interval basis parameters `p_i`, flat in the layout of the model's
/// [`BasisSpec`] (`J` rows of `param_dim` values, blockwise per family).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisParams {
    pub values: Vec<f64>,
}

/// Linear head mapping hidden states to basis parameters:
/// `p_i = A h_i + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl HeadWeights {
    pub fn init(out_dim: usize, m: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        Self {
            a: Matrix::from_fn(out_dim, m, |_, _| rng.random_range(-bound..bound)),
            b: (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn zeros(out_dim: usize, m: usize) -> Self {
        Self {
            a: Matrix::zeros(out_dim, m),
            b: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        self.a.matvec_add(h, &mut out);
        out
    }
}

impl ParamBlock for HeadWeights {
    fn param_len(&self) -> usize {
        self.a.param_len() + self.b.len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.a.write_flat(out);
        self.b.write_flat(out);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut off = self.a.read_flat(src);
        off += self.b.read_flat(&src[off..]);
        off
    }
}

/// Uniform draws used for the Monte-Carlo compensator, one vector per
/// interval. Pre-drawing them keeps a loss evaluation deterministic, which
/// the finite-difference gradient checks and common-random-number
/// validation both rely on.
#[derive(Debug, Clone)]
pub struct McSamples {
    pub uniforms: Vec<Vec<f64>>,
}

impl McSamples {
    pub fn draw(num_intervals: usize, samples_per_interval: usize, rng: &mut ChaCha8Rng) -> Self {
        let uniforms = (0..num_intervals)
            .map(|_| (0..samples_per_interval).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self { uniforms }
    }

    pub fn empty(num_intervals: usize) -> Self {
        Self {
            uniforms: vec![Vec::new(); num_intervals],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniPointModel {
    pub cell: Cell,
    pub head: HeadWeights,
    pub basis: BasisSpec,
    pub transfer: TransferKind,
    pub norm: NormStats,
}

impl UniPointModel {
    pub fn init(
        cell_kind: CellKind,
        hidden_size: usize,
        basis: BasisSpec,
        transfer: TransferKind,
        norm: NormStats,
        rng: &mut impl Rng,
    ) -> Self {
        let cell = Cell::init(cell_kind, hidden_size, rng);
        let head = HeadWeights::init(basis.param_len(), hidden_size, rng);
        Self {
            cell,
            head,
            basis,
            transfer,
            norm,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.cell.hidden_size()
    }

    /// Standardized cell inputs for a sequence: `tau_0 = 0` (the window
    /// start feeds the first step) followed by the interarrival times, all
    /// passed through `(tau - mean)/std`.
    pub fn cell_inputs(&self, seq: &EventSequence) -> Vec<f64> {
        let mut inputs = Vec::with_capacity(seq.num_intervals());
        inputs.push(self.norm.standardize(0.0));
        inputs.extend(seq.interarrivals().map(|tau| self.norm.standardize(tau)));
        inputs
    }

    /// One parameter set per interval; an `N`-event sequence yields `N + 1`
    /// sets, the last covering `(t_N, t_end]`.
    pub fn forward_params(&self, seq: &EventSequence) -> Vec<BasisParams> {
        let tape = self.cell.forward(&self.cell_inputs(seq));
        (0..seq.num_intervals())
            .map(|i| BasisParams {
                values: self.head.apply(tape.hidden(i + 1)),
            })
            .collect()
    }

    /// Intensity at elapsed time `tau > 0` since the interval start.
    pub fn intensity_at(&self, params: &BasisParams, tau: f64) -> f64 {
        let x = self.norm.eval_time(tau);
        let s = self
            .basis
            .sum(&params.values, x)
            .expect("params produced by this model's head");
        self.transfer.eval(s)
    }

    /// Per-sequence NLL with caller-supplied Monte-Carlo draws.
    pub fn nll_sampled(&self, seq: &EventSequence, samples: &McSamples) -> f64 {
        self.nll_internal(seq, samples, None)
    }

    /// Per-sequence NLL with `mc_samples` fresh draws per interval.
    pub fn nll(&self, seq: &EventSequence, mc_samples: usize, rng: &mut ChaCha8Rng) -> f64 {
        let samples = McSamples::draw(seq.num_intervals(), mc_samples, rng);
        self.nll_sampled(seq, &samples)
    }

    /// Deterministic diagnostic variant: the compensator is integrated by
    /// the trapezoid rule on a fixed per-interval grid.
    pub fn nll_trapezoid(&self, seq: &EventSequence, grid_points: usize) -> f64 {
        assert!(grid_points >= 1);
        let params = self.forward_params(seq);
        let times = seq.times();
        let mut nll = 0.0;
        for (i, p) in params.iter().enumerate() {
            let (lo, hi) = seq.interval_bounds(i);
            let delta = hi - lo;
            if i < times.len() {
                nll -= self.intensity_at(p, delta).ln();
            }
            if delta > 0.0 {
                let n = grid_points;
                let mut acc = 0.0;
                for j in 0..=n {
                    let tau = delta * j as f64 / n as f64;
                    let lambda = if tau == 0.0 {
                        // Left endpoint of the open interval: continuous limit.
                        let x = self.norm.eval_time(0.0);
                        self.transfer.eval(self.basis.sum(&p.values, x).unwrap())
                    } else {
                        self.intensity_at(p, tau)
                    };
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    acc += w * lambda;
                }
                nll += delta * acc / n as f64;
            }
        }
        nll
    }

    pub(crate) fn nll_with_tape(&self, seq: &EventSequence, samples: &McSamples) -> (f64, UniTape) {
        let mut tape = UniTape {
            cell_tape: None,
            params: Vec::new(),
            intervals: Vec::new(),
            consumed: false,
        };
        let nll = self.nll_internal(seq, samples, Some(&mut tape));
        (nll, tape)
    }

    fn nll_internal(&self, seq: &EventSequence, samples: &McSamples, tape: Option<&mut UniTape>) -> f64 {
        debug_assert_eq!(samples.uniforms.len(), seq.num_intervals());
        let cell_tape = self.cell.forward(&self.cell_inputs(seq));
        let times = seq.times();
        let mut nll = 0.0;
        let mut record = tape;
        let mut params_store = Vec::new();
        let mut interval_store = Vec::new();
        for i in 0..seq.num_intervals() {
            let p = self.head.apply(cell_tape.hidden(i + 1));
            let (lo, hi) = seq.interval_bounds(i);
            let delta = hi - lo;
            let mut rec = IntervalRecord {
                delta,
                event: None,
                samples: Vec::new(),
            };
            if i < times.len() {
                let x = self.norm.eval_time(delta);
                let s = self.basis.sum(&p, x).unwrap();
                nll -= self.transfer.eval(s).ln();
                rec.event = Some((x, s));
            }
            let draws = &samples.uniforms[i];
            if delta > 0.0 && !draws.is_empty() {
                let mut acc = 0.0;
                for &u in draws {
                    let tau = delta * (1.0 - u);
                    let x = self.norm.eval_time(tau);
                    let s = self.basis.sum(&p, x).unwrap();
                    acc += self.transfer.eval(s);
                    if record.is_some() {
                        rec.samples.push((x, s));
                    }
                }
                nll += delta * acc / draws.len() as f64;
            }
            if record.is_some() {
                params_store.push(p);
                interval_store.push(rec);
            }
        }
        if let Some(t) = record.as_mut() {
            t.cell_tape = Some(cell_tape);
            t.params = params_store;
            t.intervals = interval_store;
        }
        nll
    }

    /// Reverse pass for a recorded NLL evaluation; consumes the tape.
    pub(crate) fn backward(&self, tape: &mut UniTape) -> Result<UniGrads, NnError> {
        if tape.consumed {
            return Err(NnError::TapeReuse);
        }
        tape.consumed = true;
        let cell_tape = tape.cell_tape.as_mut().expect("tape built by nll_with_tape");
        let m = self.hidden_size();
        let mut head_grads = HeadWeights::zeros(self.basis.param_len(), m);
        let mut dh_seed: Vec<Vec<f64>> = Vec::with_capacity(tape.intervals.len());
        for (i, rec) in tape.intervals.iter().enumerate() {
            let p = &tape.params[i];
            let mut dp = vec![0.0; p.len()];
            if let Some((x, s)) = rec.event {
                let lambda = self.transfer.eval(s);
                let upstream = -self.transfer.grad(s) / lambda;
                self.basis.accumulate_param_grad(p, x, upstream, &mut dp);
            }
            if !rec.samples.is_empty() {
                let w = rec.delta / rec.samples.len() as f64;
                for &(x, s) in &rec.samples {
                    let upstream = w * self.transfer.grad(s);
                    self.basis.accumulate_param_grad(p, x, upstream, &mut dp);
                }
            }
            for (gb, d) in head_grads.b.iter_mut().zip(&dp) {
                *gb += d;
            }
            head_grads.a.add_outer(&dp, cell_tape.hidden(i + 1));
            let mut dh = vec![0.0; m];
            self.head.a.tr_matvec_add(&dp, &mut dh);
            dh_seed.push(dh);
        }
        let cell_grads = cell_tape.backward(&self.cell, &dh_seed)?;
        Ok(UniGrads {
            cell: cell_grads,
            head: head_grads,
        })
    }
}

impl ParamBlock for UniPointModel {
    fn param_len(&self) -> usize {
        self.cell.param_len() + self.head.param_len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.cell.write_flat(out);
        self.head.write_flat(out);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut off = self.cell.read_flat(src);
        off += self.head.read_flat(&src[off..]);
        off
    }
}

#[derive(Debug, Clone)]
pub(crate) struct UniTape {
    cell_tape: Option<CellTape>,
    params: Vec<Vec<f64>>,
    intervals: Vec<IntervalRecord>,
    consumed: bool,
}

#[derive(Debug, Clone)]
struct IntervalRecord {
    delta: f64,
    event: Option<(f64, f64)>,
    samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct UniGrads {
    pub cell: Cell,
    pub head: HeadWeights,
}

impl ParamBlock for UniGrads {
    fn param_len(&self) -> usize {
        self.cell.param_len() + self.head.param_len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.cell.write_flat(out);
        self.head.write_flat(out);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut off = self.cell.read_flat(src);
        off += self.head.read_flat(&src[off..]);
        off
    }
}

impl SequenceLoss for UniPointModel {
    fn param_len(&self) -> usize {
        ParamBlock::param_len(self)
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(ParamBlock::param_len(self));
        self.write_flat(&mut out);
        out
    }

    fn set_flat_params(&mut self, p: &[f64]) {
        self.read_flat(p);
    }

    fn needs_mc(&self) -> bool {
        true
    }

    fn loss(&self, seq: &EventSequence, samples: &McSamples) -> f64 {
        self.nll_sampled(seq, samples)
    }

    fn loss_and_grad(&self, seq: &EventSequence, samples: &McSamples) -> (f64, Vec<f64>) {
        let (nll, mut tape) = self.nll_with_tape(seq, samples);
        let grads = self.backward(&mut tape).expect("fresh tape");
        let mut flat = Vec::with_capacity(ParamBlock::param_len(self));
        grads.write_flat(&mut flat);
        (nll, flat)
    }
}
