//! Minimal differentiable-compute core: dense linear maps, recurrent cells
//! with recorded-forward/backward passes, and the Adam optimizer. Double
//! precision throughout; no GPU, no general-purpose graph — just the
//! operator set the intensity models need.

mod adam;
mod cell;

pub use adam::{AdamConfig, AdamState};
pub use cell::{Cell, CellGrads, CellKind, CellTape, LstmWeights, RnnWeights};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("tape already consumed by a backward pass")]
    TapeReuse,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out += A x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += A^T y`
    pub fn tr_matvec_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if *yr != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += yr * a;
                }
            }
        }
    }

    /// `self += y x^T`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (yr, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *yr != 0.0 {
                for (o, a) in row.iter_mut().zip(x) {
                    *o += yr * a;
                }
            }
        }
    }
}

/// Flat-vector view of a parameter collection. Gradients reuse the same
/// layout, so the optimizer and finite-difference checks see one dense
/// vector per model.
pub trait ParamBlock {
    fn param_len(&self) -> usize;
    fn write_flat(&self, out: &mut Vec<f64>);
    /// Reads `param_len()` values from the front of `src` and returns the
    /// number consumed.
    fn read_flat(&mut self, src: &[f64]) -> usize;
}

impl ParamBlock for Vec<f64> {
    fn param_len(&self) -> usize {
        self.len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let n = self.len();
        self.copy_from_slice(&src[..n]);
        n
    }
}

impl ParamBlock for f64 {
    fn param_len(&self) -> usize {
        1
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.push(*self);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        *self = src[0];
        1
    }
}

impl ParamBlock for Matrix {
    fn param_len(&self) -> usize {
        self.data.len()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.data);
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        let n = self.data.len();
        self.data.copy_from_slice(&src[..n]);
        n
    }
}
