//! Recurrent cells over scalar input streams: the Elman cell
//! `h_i = sigmoid(W h_{i-1} + v tau_i + b)` with learnable start state, and
//! a standard LSTM alternative with gate layout
//! `[input | forget | candidate | output]`. Both record their forward pass
//! on a tape; `backward` consumes the tape and accumulates exact
//! reverse-mode gradients through the unrolled sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NnError, ParamBlock};
use crate::basis::sigmoid;

fn uniform_init(rng: &mut impl Rng, bound: f64) -> impl FnMut() -> f64 + '_ {
    move || rng.random_range(-bound..bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Rnn,
    Lstm,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Rnn => "RNN",
            CellKind::Lstm => "LSTM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RNN" => Some(CellKind::Rnn),
            "LSTM" => Some(CellKind::Lstm),
            _ => None,
        }
    }
}

/// Elman cell weights. `w` is M x M, `v` the input weight for the scalar
/// input, `b` the bias, `h0` the learnable start state.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnWeights {
    pub w: Matrix,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub h0: Vec<f64>,
}

impl RnnWeights {
    /// Fan-in uniform init `U(-1/sqrt(M), 1/sqrt(M))`; `h0` starts at zero.
    pub fn init(m: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        let mut u = uniform_init(rng, bound);
        Self {
            w: Matrix::from_fn(m, m, |_, _| u()),
            v: (0..m).map(|_| u()).collect(),
            b: (0..m).map(|_| u()).collect(),
            h0: vec![0.0; m],
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            w: Matrix::zeros(m, m),
            v: vec![0.0; m],
            b: vec![0.0; m],
            h0: vec![0.0; m],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.h0.len()
    }

    /// One step: `sigmoid(W h_prev + v tau + b)`, elementwise.
    pub fn step(&self, h_prev: &[f64], tau: f64) -> Vec<f64> {
        let mut z = self.b.clone();
        self.w.matvec_add(h_prev, &mut z);
        for (zi, vi) in z.iter_mut().zip(&self.v) {
            *zi += vi * tau;
        }
        z.iter().map(|&zi| sigmoid(zi)).collect()
    }

    pub fn forward(&self, inputs: &[f64]) -> RnnTape {
        let mut hs = Vec::with_capacity(inputs.len() + 1);
        hs.push(self.h0.clone());
        for &tau in inputs {
            let h = self.step(hs.last().unwrap(), tau);
            hs.push(h);
        }
        RnnTape {
            hs,
            inputs: inputs.to_vec(),
            consumed: false,
        }
    }
}

impl ParamBlock for RnnWeights {
    fn param_len(&self) -> usize {
        self.w.param_len() + self.v.len() + self.b.len() + self.h0.len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.w.write_flat(out);
        self.v.write_flat(out);
        self.b.write_flat(out);
        self.h0.write_flat(out);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut off = self.w.read_flat(src);
        off += self.v.read_flat(&src[off..]);
        off += self.b.read_flat(&src[off..]);
        off += self.h0.read_flat(&src[off..]);
        off
    }
}

/// Recorded forward pass of an Elman cell. `hidden(k)` is the state after
/// step `k`, with `hidden(0)` the start state.
#[derive(Debug, Clone)]
pub struct RnnTape {
    hs: Vec<Vec<f64>>,
    inputs: Vec<f64>,
    consumed: bool,
}

impl RnnTape {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn hidden(&self, k: usize) -> &[f64] {
        &self.hs[k]
    }

    /// Backpropagates `dloss/dh_k` seeds (one per step, `dh[k-1]` for step
    /// `k`) through the unrolled sequence. Consumes the tape.
    pub fn backward(&mut self, w: &RnnWeights, dh_seed: &[Vec<f64>]) -> Result<RnnWeights, NnError> {
        if self.consumed {
            return Err(NnError::TapeReuse);
        }
        self.consumed = true;
        let steps = self.inputs.len();
        if dh_seed.len() != steps {
            return Err(NnError::Shape {
                expected: steps,
                got: dh_seed.len(),
            });
        }
        let m = w.hidden_size();
        let mut grads = RnnWeights::zeros(m);
        let mut dh = vec![0.0; m];
        for k in (1..=steps).rev() {
            for (d, s) in dh.iter_mut().zip(&dh_seed[k - 1]) {
                *d += s;
            }
            // sigmoid'(z) = h (1 - h)
            let h = &self.hs[k];
            let dz: Vec<f64> = dh.iter().zip(h).map(|(d, &hi)| d * hi * (1.0 - hi)).collect();
            for (gb, d) in grads.b.iter_mut().zip(&dz) {
                *gb += d;
            }
            let tau = self.inputs[k - 1];
            for (gv, d) in grads.v.iter_mut().zip(&dz) {
                *gv += d * tau;
            }
            grads.w.add_outer(&dz, &self.hs[k - 1]);
            dh.iter_mut().for_each(|d| *d = 0.0);
            w.w.tr_matvec_add(&dz, &mut dh);
        }
        grads.h0.copy_from_slice(&dh);
        Ok(grads)
    }
}

/// LSTM weights with stacked gate blocks: rows `[0,M)` input gate, `[M,2M)`
/// forget gate, `[2M,3M)` candidate, `[3M,4M)` output gate. Start states
/// `h0`, `c0` are learnable.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w: Matrix,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
}

impl LstmWeights {
    pub fn init(m: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        let mut u = uniform_init(rng, bound);
        Self {
            w: Matrix::from_fn(4 * m, m, |_, _| u()),
            v: (0..4 * m).map(|_| u()).collect(),
            b: (0..4 * m).map(|_| u()).collect(),
            h0: vec![0.0; m],
            c0: vec![0.0; m],
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            w: Matrix::zeros(4 * m, m),
            v: vec![0.0; 4 * m],
            b: vec![0.0; 4 * m],
            h0: vec![0.0; m],
            c0: vec![0.0; m],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.h0.len()
    }

    /// One step from `(h_prev, c_prev)`; returns `(h, c)`.
    pub fn step(&self, h_prev: &[f64], c_prev: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
        let (g, c, h) = self.step_full(h_prev, c_prev, tau);
        let _ = g;
        (h, c)
    }

    #[allow(clippy::type_complexity)]
    fn step_full(&self, h_prev: &[f64], c_prev: &[f64], tau: f64) -> (LstmGates, Vec<f64>, Vec<f64>) {
        let m = self.hidden_size();
        let mut z = self.b.clone();
        self.w.matvec_add(h_prev, &mut z);
        for (zi, vi) in z.iter_mut().zip(&self.v) {
            *zi += vi * tau;
        }
        let i: Vec<f64> = z[..m].iter().map(|&x| sigmoid(x)).collect();
        let f: Vec<f64> = z[m..2 * m].iter().map(|&x| sigmoid(x)).collect();
        let g: Vec<f64> = z[2 * m..3 * m].iter().map(|&x| x.tanh()).collect();
        let o: Vec<f64> = z[3 * m..].iter().map(|&x| sigmoid(x)).collect();
        let c: Vec<f64> = (0..m).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tc: Vec<f64> = c.iter().map(|&x| x.tanh()).collect();
        let h: Vec<f64> = (0..m).map(|k| o[k] * tc[k]).collect();
        (LstmGates { i, f, g, o, tc }, c, h)
    }

    pub fn forward(&self, inputs: &[f64]) -> LstmTape {
        let mut hs = vec![self.h0.clone()];
        let mut cs = vec![self.c0.clone()];
        let mut gates = Vec::with_capacity(inputs.len());
        for &tau in inputs {
            let (g, c, h) = self.step_full(hs.last().unwrap(), cs.last().unwrap(), tau);
            gates.push(g);
            cs.push(c);
            hs.push(h);
        }
        LstmTape {
            hs,
            cs,
            gates,
            inputs: inputs.to_vec(),
            consumed: false,
        }
    }
}

impl ParamBlock for LstmWeights {
    fn param_len(&self) -> usize {
        self.w.param_len() + self.v.len() + self.b.len() + self.h0.len() + self.c0.len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.w.write_flat(out);
        self.v.write_flat(out);
        self.b.write_flat(out);
        self.h0.write_flat(out);
        self.c0.write_flat(out);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut off = self.w.read_flat(src);
        off += self.v.read_flat(&src[off..]);
        off += self.b.read_flat(&src[off..]);
        off += self.h0.read_flat(&src[off..]);
        off += self.c0.read_flat(&src[off..]);
        off
    }
}

#[derive(Debug, Clone)]
struct LstmGates {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tc: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTape {
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    gates: Vec<LstmGates>,
    inputs: Vec<f64>,
    consumed: bool,
}

impl LstmTape {
    pub fn hidden(&self, k: usize) -> &[f64] {
        &self.hs[k]
    }

    pub fn backward(&mut self, w: &LstmWeights, dh_seed: &[Vec<f64>]) -> Result<LstmWeights, NnError> {
        if self.consumed {
            return Err(NnError::TapeReuse);
        }
        self.consumed = true;
        let steps = self.inputs.len();
        if dh_seed.len() != steps {
            return Err(NnError::Shape {
                expected: steps,
                got: dh_seed.len(),
            });
        }
        let m = w.hidden_size();
        let mut grads = LstmWeights::zeros(m);
        let mut dh = vec![0.0; m];
        let mut dc = vec![0.0; m];
        let mut dz = vec![0.0; 4 * m];
        for k in (1..=steps).rev() {
            for (d, s) in dh.iter_mut().zip(&dh_seed[k - 1]) {
                *d += s;
            }
            let gt = &self.gates[k - 1];
            let c_prev = &self.cs[k - 1];
            for j in 0..m {
                let do_ = dh[j] * gt.tc[j];
                dc[j] += dh[j] * gt.o[j] * (1.0 - gt.tc[j] * gt.tc[j]);
                let di = dc[j] * gt.g[j];
                let dg = dc[j] * gt.i[j];
                let df = dc[j] * c_prev[j];
                dz[j] = di * gt.i[j] * (1.0 - gt.i[j]);
                dz[m + j] = df * gt.f[j] * (1.0 - gt.f[j]);
                dz[2 * m + j] = dg * (1.0 - gt.g[j] * gt.g[j]);
                dz[3 * m + j] = do_ * gt.o[j] * (1.0 - gt.o[j]);
                dc[j] *= gt.f[j];
            }
            for (gb, d) in grads.b.iter_mut().zip(&dz) {
                *gb += d;
            }
            let tau = self.inputs[k - 1];
            for (gv, d) in grads.v.iter_mut().zip(&dz) {
                *gv += d * tau;
            }
            grads.w.add_outer(&dz, &self.hs[k - 1]);
            dh.iter_mut().for_each(|d| *d = 0.0);
            w.w.tr_matvec_add(&dz, &mut dh);
        }
        grads.h0.copy_from_slice(&dh);
        grads.c0.copy_from_slice(&dc);
        Ok(grads)
    }
}

/// Recurrent cell: Elman or LSTM, both driven by a scalar input stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Rnn(RnnWeights),
    Lstm(LstmWeights),
}

impl Cell {
    pub fn init(kind: CellKind, m: usize, rng: &mut impl Rng) -> Self {
        match kind {
            CellKind::Rnn => Cell::Rnn(RnnWeights::init(m, rng)),
            CellKind::Lstm => Cell::Lstm(LstmWeights::init(m, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Rnn(_) => CellKind::Rnn,
            Cell::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Cell::Rnn(w) => w.hidden_size(),
            Cell::Lstm(w) => w.hidden_size(),
        }
    }

    pub fn forward(&self, inputs: &[f64]) -> CellTape {
        match self {
            Cell::Rnn(w) => CellTape::Rnn(w.forward(inputs)),
            Cell::Lstm(w) => CellTape::Lstm(w.forward(inputs)),
        }
    }

    pub fn zeros_like(&self) -> Cell {
        match self {
            Cell::Rnn(w) => Cell::Rnn(RnnWeights::zeros(w.hidden_size())),
            Cell::Lstm(w) => Cell::Lstm(LstmWeights::zeros(w.hidden_size())),
        }
    }
}

impl ParamBlock for Cell {
    fn param_len(&self) -> usize {
        match self {
            Cell::Rnn(w) => w.param_len(),
            Cell::Lstm(w) => w.param_len(),
        }
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        match self {
            Cell::Rnn(w) => w.write_flat(out),
            Cell::Lstm(w) => w.write_flat(out),
        }
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        match self {
            Cell::Rnn(w) => w.read_flat(src),
            Cell::Lstm(w) => w.read_flat(src),
        }
    }
}

/// Gradients for a [`Cell`], same layout as the weights.
pub type CellGrads = Cell;

#[derive(Debug, Clone)]
pub enum CellTape {
    Rnn(RnnTape),
    Lstm(LstmTape),
}

impl CellTape {
    pub fn hidden(&self, k: usize) -> &[f64] {
        match self {
            CellTape::Rnn(t) => t.hidden(k),
            CellTape::Lstm(t) => t.hidden(k),
        }
    }

    pub fn backward(&mut self, cell: &Cell, dh_seed: &[Vec<f64>]) -> Result<CellGrads, NnError> {
        match (self, cell) {
            (CellTape::Rnn(t), Cell::Rnn(w)) => Ok(Cell::Rnn(t.backward(w, dh_seed)?)),
            (CellTape::Lstm(t), Cell::Lstm(w)) => Ok(Cell::Lstm(t.backward(w, dh_seed)?)),
            _ => Err(NnError::Shape { expected: 0, got: 0 }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rnn_step_at_zero_weights_is_half() {
        let w = RnnWeights::zeros(4);
        let h = w.step(&[0.2, 0.4, 0.6, 0.8], 1.3);
        assert!(h.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn rnn_step_large_bias() {
        let mut w = RnnWeights::zeros(3);
        w.b[1] = 10.0;
        let h = w.step(&[0.0; 3], 0.0);
        assert!((h[1] - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn rnn_ignores_input_when_v_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = RnnWeights::init(4, &mut rng);
        w.v.iter_mut().for_each(|v| *v = 0.0);
        let prev = vec![0.3; 4];
        assert_eq!(w.step(&prev, -5.0), w.step(&prev, 17.0));
    }

    #[test]
    fn rnn_outputs_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = RnnWeights::init(8, &mut rng);
        let tape = w.forward(&[0.5, -1.0, 2.0]);
        for k in 1..=3 {
            assert!(tape.hidden(k).iter().all(|&h| h > 0.0 && h < 1.0));
        }
    }

    #[test]
    fn rnn_backward_bias_grad_matches_hand_derivation() {
        // Loss = sum of h entries after one step with W = v = 0:
        // dL/db = sigmoid'(b).
        let mut w = RnnWeights::zeros(3);
        w.b = vec![0.3, -0.7, 1.1];
        let mut tape = w.forward(&[0.0]);
        let grads = tape.backward(&w, &[vec![1.0; 3]]).unwrap();
        for (gb, &b) in grads.b.iter().zip(&w.b) {
            let s = sigmoid(b);
            assert!((gb - s * (1.0 - s)).abs() < 1e-14);
        }
        // v saw a zero input, so its gradient is zero.
        assert!(grads.v.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn tape_reuse_is_rejected() {
        let w = RnnWeights::zeros(2);
        let mut tape = w.forward(&[1.0]);
        tape.backward(&w, &[vec![1.0; 2]]).unwrap();
        assert_eq!(
            tape.backward(&w, &[vec![1.0; 2]]).unwrap_err(),
            NnError::TapeReuse
        );
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = RnnWeights::init(6, &mut rng);
        let inputs = [0.1, -0.4, 0.9, 0.0];
        let seed: Vec<Vec<f64>> = (0..4).map(|k| vec![0.1 * k as f64; 6]).collect();
        let g1 = w.forward(&inputs).backward(&w, &seed).unwrap();
        let g2 = w.forward(&inputs).backward(&w, &seed).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn lstm_zero_weights_fixed_point() {
        let w = LstmWeights::zeros(3);
        let (h, c) = w.step(&[0.0; 3], &[0.0; 3], 0.7);
        assert!(h.iter().all(|&x| x == 0.0));
        assert!(c.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lstm_forget_gate_arithmetic() {
        let m = 2;
        let mut w = LstmWeights::zeros(m);
        for j in 0..m {
            w.b[m + j] = 10.0; // forget gate wide open
        }
        let (h, c) = w.step(&[0.0; 2], &[1.0, 1.0], 0.0);
        for j in 0..m {
            // c' = sigmoid(10) * 1 + sigmoid(0) * tanh(0)
            assert!((c[j] - sigmoid(10.0)).abs() < 1e-12);
            assert!((h[j] - 0.5 * c[j].tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = LstmWeights::init(5, &mut rng);
        let inputs = [0.3, -0.2, 1.5];
        let t1 = w.forward(&inputs);
        let t2 = w.forward(&inputs);
        assert_eq!(t1.hidden(3), t2.hidden(3));
    }

    // Finite-difference check of both cells through a quadratic readout.
    fn fd_check_cell(cell: &Cell) {
        let inputs = [0.4, -0.8, 1.2];
        let loss = |c: &Cell| -> f64 {
            let tape = c.forward(&inputs);
            let mut l = 0.0;
            for k in 1..=inputs.len() {
                l += tape.hidden(k).iter().map(|&h| h * h).sum::<f64>() * (k as f64);
            }
            l
        };
        let mut tape = cell.forward(&inputs);
        let seeds: Vec<Vec<f64>> = (1..=inputs.len())
            .map(|k| tape.hidden(k).iter().map(|&h| 2.0 * h * k as f64).collect())
            .collect();
        let grads = tape.backward(cell, &seeds).unwrap();
        let mut flat_g = Vec::new();
        grads.write_flat(&mut flat_g);

        let mut flat_p = Vec::new();
        cell.write_flat(&mut flat_p);
        let h = 1e-6;
        for i in 0..flat_p.len() {
            let mut plus = cell.clone();
            let mut minus = cell.clone();
            let mut pp = flat_p.clone();
            pp[i] += h;
            plus.read_flat(&pp);
            pp[i] -= 2.0 * h;
            minus.read_flat(&pp);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!(
                (flat_g[i] - fd).abs() <= 1e-6 * flat_g[i].abs().max(fd.abs()).max(1e-3),
                "param {i}: {} vs {fd}",
                flat_g[i]
            );
        }
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        fd_check_cell(&Cell::Rnn(RnnWeights::init(3, &mut rng)));
        fd_check_cell(&Cell::Lstm(LstmWeights::init(3, &mut rng)));
    }
}
