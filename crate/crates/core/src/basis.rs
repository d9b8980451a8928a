//! Basis function families, their parameter spaces, and the transfer
//! functions that map summed basis outputs onto valid (positive)
//! intensities. Evaluation and derivatives with respect to both the input
//! and the parameters.
//!
//! Families and their functional forms on `x >= 0`:
//!
//! | kind  | form                      | params        |
//! |-------|---------------------------|---------------|
//! | EXP   | `a * exp(b x)`            | `(a, b)`      |
//! | PL    | `a * (1 + x)^(-b+)`       | `(a, b_raw)`  |
//! | COS   | `a * cos(b x + d)`        | `(a, b, d)`   |
//! | SIG   | `a * sigmoid(b x + d)`    | `(a, b, d)`   |
//! | RELU  | `max(0, a x + b)`         | `(a, b)`      |
//!
//! The power-law exponent must be positive, so the stored raw value is
//! mapped through softplus (`b+ = softplus(b_raw)`) before use. The EXP
//! exponent `b*x` is clamped at [`EXP_CLAMP`] before exponentiation to
//! bound the intensity; gradients vanish above the clamp.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the EXP basis exponent before exponentiation.
pub const EXP_CLAMP: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))`, computed without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Solves `softplus(y) = x` for `x > 0`.
pub fn inverse_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp_m1().ln()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("unknown basis kind `{0}`")]
    UnknownKind(String),
    #[error("parameter vector has {got} entries, family needs {need}")]
    ParamShape { got: usize, need: usize },
    #[error("parameter block has {got} entries, spec needs {need}")]
    SpecShape { got: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisFamily {
    Exp,
    PowerLaw,
    Cosine,
    Sigmoid,
    Relu,
}

impl BasisFamily {
    pub const ALL: [BasisFamily; 5] = [
        BasisFamily::Exp,
        BasisFamily::PowerLaw,
        BasisFamily::Cosine,
        BasisFamily::Sigmoid,
        BasisFamily::Relu,
    ];

    /// Dimension of the parameter space: 2 for EXP/PL/RELU, 3 for COS/SIG.
    pub fn param_dim(self) -> usize {
        match self {
            BasisFamily::Exp | BasisFamily::PowerLaw | BasisFamily::Relu => 2,
            BasisFamily::Cosine | BasisFamily::Sigmoid => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BasisFamily::Exp => "EXP",
            BasisFamily::PowerLaw => "PL",
            BasisFamily::Cosine => "COS",
            BasisFamily::Sigmoid => "SIG",
            BasisFamily::Relu => "RELU",
        }
    }

    pub fn parse(s: &str) -> Result<Self, BasisError> {
        match s {
            "EXP" => Ok(BasisFamily::Exp),
            "PL" => Ok(BasisFamily::PowerLaw),
            "COS" => Ok(BasisFamily::Cosine),
            "SIG" => Ok(BasisFamily::Sigmoid),
            "RELU" => Ok(BasisFamily::Relu),
            other => Err(BasisError::UnknownKind(other.to_string())),
        }
    }
}

/// Evaluates one basis term `phi(x; p)` for `x >= 0`.
pub fn basis_eval(family: BasisFamily, p: &[f64], x: f64) -> f64 {
    debug_assert_eq!(p.len(), family.param_dim());
    match family {
        BasisFamily::Exp => p[0] * (p[1] * x).min(EXP_CLAMP).exp(),
        BasisFamily::PowerLaw => p[0] * (1.0 + x).powf(-softplus(p[1])),
        BasisFamily::Cosine => p[0] * (p[1] * x + p[2]).cos(),
        BasisFamily::Sigmoid => p[0] * sigmoid(p[1] * x + p[2]),
        BasisFamily::Relu => (p[0] * x + p[1]).max(0.0),
    }
}

/// Partial derivatives of one basis term: `(d/dx, d/dp)`. The RELU
/// subgradient at the kink is 0; the EXP clamp zeroes the exponent's
/// gradient once active.
pub fn basis_grad(family: BasisFamily, p: &[f64], x: f64) -> (f64, Vec<f64>) {
    debug_assert_eq!(p.len(), family.param_dim());
    match family {
        BasisFamily::Exp => {
            let z = p[1] * x;
            let e = z.min(EXP_CLAMP).exp();
            if z < EXP_CLAMP {
                (p[0] * e * p[1], vec![e, p[0] * e * x])
            } else {
                (0.0, vec![e, 0.0])
            }
        }
        BasisFamily::PowerLaw => {
            let bp = softplus(p[1]);
            let base = 1.0 + x;
            let pw = base.powf(-bp);
            let d_dx = -p[0] * bp * base.powf(-bp - 1.0);
            let d_db = -p[0] * pw * base.ln() * sigmoid(p[1]);
            (d_dx, vec![pw, d_db])
        }
        BasisFamily::Cosine => {
            let z = p[1] * x + p[2];
            let (s, c) = z.sin_cos();
            (-p[0] * s * p[1], vec![c, -p[0] * s * x, -p[0] * s])
        }
        BasisFamily::Sigmoid => {
            let z = p[1] * x + p[2];
            let s = sigmoid(z);
            let ds = s * (1.0 - s);
            (p[0] * ds * p[1], vec![s, p[0] * ds * x, p[0] * ds])
        }
        BasisFamily::Relu => {
            let z = p[0] * x + p[1];
            if z > 0.0 {
                (p[0], vec![x, 1.0])
            } else {
                (0.0, vec![0.0, 0.0])
            }
        }
    }
}

/// Sum of `J` same-family terms; `params` holds `J * param_dim` values
/// chunked per term. `J = 0` yields the empty sum.
pub fn basis_sum(family: BasisFamily, params: &[f64], x: f64) -> f64 {
    debug_assert_eq!(params.len() % family.param_dim(), 0);
    params
        .chunks_exact(family.param_dim())
        .map(|p| basis_eval(family, p, x))
        .sum()
}

/// Transfer function mapping summed basis output onto a positive intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferKind {
    Softplus,
    MaxSig,
}

impl TransferKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransferKind::Softplus => "SOFTPLUS",
            TransferKind::MaxSig => "MAXSIG",
        }
    }

    pub fn parse(s: &str) -> Result<Self, BasisError> {
        match s {
            "SOFTPLUS" => Ok(TransferKind::Softplus),
            "MAXSIG" => Ok(TransferKind::MaxSig),
            other => Err(BasisError::UnknownKind(other.to_string())),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        // Floor at the smallest positive double: softplus and sigmoid
        // underflow to 0 below x ~ -745, and the intensity's log must stay
        // finite.
        match self {
            TransferKind::Softplus => softplus(x).max(f64::MIN_POSITIVE),
            TransferKind::MaxSig => sigmoid(x).max(x).max(f64::MIN_POSITIVE),
        }
    }

    /// Derivative; MAXSIG ties resolve to the linear branch.
    pub fn grad(self, x: f64) -> f64 {
        match self {
            TransferKind::Softplus => sigmoid(x),
            TransferKind::MaxSig => {
                let s = sigmoid(x);
                if s > x {
                    s * (1.0 - s)
                } else {
                    1.0
                }
            }
        }
    }
}

/// Basis layout for a model head: one or more `(family, count)` blocks
/// concatenated in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub blocks: Vec<(BasisFamily, usize)>,
}

impl BasisSpec {
    pub fn single(family: BasisFamily, count: usize) -> Self {
        Self {
            blocks: vec![(family, count)],
        }
    }

    /// Total number of basis terms `J`.
    pub fn terms(&self) -> usize {
        self.blocks.iter().map(|(_, c)| c).sum()
    }

    /// Length of the flat parameter vector: sum of `count * param_dim`.
    pub fn param_len(&self) -> usize {
        self.blocks.iter().map(|(f, c)| c * f.param_dim()).sum()
    }

    /// Iterates `(family, param_slice)` per term over a flat vector.
    pub fn iter_terms<'a>(
        &'a self,
        params: &'a [f64],
    ) -> impl Iterator<Item = (BasisFamily, &'a [f64])> + 'a {
        let mut offset = 0;
        self.blocks.iter().flat_map(move |&(fam, count)| {
            let dim = fam.param_dim();
            let start = offset;
            offset += count * dim;
            (0..count).map(move |j| (fam, &params[start + j * dim..start + (j + 1) * dim]))
        })
    }

    /// Sum over all terms; errors on a flat-vector length mismatch.
    pub fn sum(&self, params: &[f64], x: f64) -> Result<f64, BasisError> {
        if params.len() != self.param_len() {
            return Err(BasisError::SpecShape {
                got: params.len(),
                need: self.param_len(),
            });
        }
        Ok(self
            .iter_terms(params)
            .map(|(fam, p)| basis_eval(fam, p, x))
            .sum())
    }

    /// Accumulates `upstream * d(sum)/d(params)` into `dparams`.
    pub fn accumulate_param_grad(&self, params: &[f64], x: f64, upstream: f64, dparams: &mut [f64]) {
        debug_assert_eq!(params.len(), self.param_len());
        debug_assert_eq!(dparams.len(), self.param_len());
        let mut offset = 0;
        for &(fam, count) in &self.blocks {
            let dim = fam.param_dim();
            for j in 0..count {
                let s = offset + j * dim;
                let (_, dp) = basis_grad(fam, &params[s..s + dim], x);
                for (g, d) in dparams[s..s + dim].iter_mut().zip(dp) {
                    *g += upstream * d;
                }
            }
            offset += count * dim;
        }
    }

    /// Canonical config string: `EXP`, `PL`, ... for single blocks, or
    /// `MIXED(PL32+RELU32)` for heterogeneous layouts.
    pub fn config_string(&self) -> String {
        if self.blocks.len() == 1 {
            return self.blocks[0].0.as_str().to_string();
        }
        let inner: Vec<String> = self
            .blocks
            .iter()
            .map(|(f, c)| format!("{}{}", f.as_str(), c))
            .collect();
        format!("MIXED({})", inner.join("+"))
    }

    /// Parses a config string; single-family names take the count from
    /// `j`, `MIXED(...)` encodes its own counts.
    pub fn from_config(kind: &str, j: usize) -> Result<Self, BasisError> {
        if let Some(inner) = kind.strip_prefix("MIXED(").and_then(|s| s.strip_suffix(')')) {
            let mut blocks = Vec::new();
            for part in inner.split('+') {
                let split_at = part
                    .find(|c: char| c.is_ascii_digit())
                    .ok_or_else(|| BasisError::UnknownKind(kind.to_string()))?;
                let fam = BasisFamily::parse(&part[..split_at])?;
                let count: usize = part[split_at..]
                    .parse()
                    .map_err(|_| BasisError::UnknownKind(kind.to_string()))?;
                blocks.push((fam, count));
            }
            if blocks.is_empty() {
                return Err(BasisError::UnknownKind(kind.to_string()));
            }
            Ok(Self { blocks })
        } else {
            Ok(Self::single(BasisFamily::parse(kind)?, j))
        }
    }
}

/// Sum over heterogeneous family blocks (shape-checked).
pub fn mixed_sum(spec: &BasisSpec, params: &[f64], x: f64) -> Result<f64, BasisError> {
    spec.sum(params, x)
}
