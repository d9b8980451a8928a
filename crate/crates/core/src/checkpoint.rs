//! Model checkpoints: a versioned JSON document holding shape-annotated
//! flat parameter arrays, the basis/transfer/cell kind strings, and the
//! normalization statistics (or, for parametric processes, the fitted
//! parameters directly).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisSpec, TransferKind};
use crate::events::{EventSequence, NormStats};
use crate::metrics::IntensityModel;
use crate::nn::{Cell, CellKind, LstmWeights, ParamBlock, RnnWeights};
use crate::processes::ParametricProcess;
use crate::unipoint::{HeadWeights, RmtppModel, UniPointModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    fn check(&self) -> Result<(), CheckpointError> {
        let expect: usize = self.shape.iter().product();
        if expect != self.data.len() {
            return Err(CheckpointError::Malformed(format!(
                "array `{}` declares shape {:?} but holds {} values",
                self.name,
                self.shape,
                self.data.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<ParametricProcess>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<ParamArray>,
}

/// Any model the CLI can train, save, and score.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    UniPoint(UniPointModel),
    Rmtpp(RmtppModel),
    Parametric(ParametricProcess),
}

fn cell_arrays(cell: &Cell) -> Vec<ParamArray> {
    let arr = |name: &str, shape: Vec<usize>, data: Vec<f64>| ParamArray {
        name: name.to_string(),
        shape,
        data,
    };
    match cell {
        Cell::Rnn(w) => {
            let m = w.hidden_size();
            vec![
                arr("w", vec![m, m], w.w.data().to_vec()),
                arr("v", vec![m], w.v.clone()),
                arr("b", vec![m], w.b.clone()),
                arr("h0", vec![m], w.h0.clone()),
            ]
        }
        Cell::Lstm(w) => {
            let m = w.hidden_size();
            vec![
                arr("w", vec![4 * m, m], w.w.data().to_vec()),
                arr("v", vec![4 * m], w.v.clone()),
                arr("b", vec![4 * m], w.b.clone()),
                arr("h0", vec![m], w.h0.clone()),
                arr("c0", vec![m], w.c0.clone()),
            ]
        }
    }
}

fn concat_params(arrays: &[ParamArray], expected_names: &[&str]) -> Result<Vec<f64>, CheckpointError> {
    let mut flat = Vec::new();
    for name in expected_names {
        let a = arrays
            .iter()
            .find(|a| a.name == *name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing array `{name}`")))?;
        a.check()?;
        flat.extend_from_slice(&a.data);
    }
    Ok(flat)
}

impl TrainedModel {
    pub fn kind_label(&self) -> String {
        match self {
            TrainedModel::UniPoint(m) => format!("unipoint-{}", m.basis.config_string()),
            TrainedModel::Rmtpp(_) => "rmtpp".to_string(),
            TrainedModel::Parametric(p) => p.kind_str().to_ascii_lowercase(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            TrainedModel::UniPoint(m) => {
                let mut params = cell_arrays(&m.cell);
                params.push(ParamArray {
                    name: "head_a".to_string(),
                    shape: vec![m.head.a.rows(), m.head.a.cols()],
                    data: m.head.a.data().to_vec(),
                });
                params.push(ParamArray {
                    name: "head_b".to_string(),
                    shape: vec![m.head.b.len()],
                    data: m.head.b.clone(),
                });
                Checkpoint {
                    format_version: FORMAT_VERSION,
                    kind: "unipoint".to_string(),
                    cell: Some(m.cell.kind().as_str().to_string()),
                    basis: Some(m.basis.config_string()),
                    transfer: Some(m.transfer.as_str().to_string()),
                    hidden_size: Some(m.hidden_size()),
                    j: Some(m.basis.terms()),
                    norm: Some(m.norm),
                    process: None,
                    params,
                }
            }
            TrainedModel::Rmtpp(m) => {
                let mut params = cell_arrays(&Cell::Rnn(m.rnn.clone()));
                params.push(ParamArray {
                    name: "v_out".to_string(),
                    shape: vec![m.v_out.len()],
                    data: m.v_out.clone(),
                });
                params.push(ParamArray {
                    name: "w_out".to_string(),
                    shape: vec![1],
                    data: vec![m.w],
                });
                params.push(ParamArray {
                    name: "b_out".to_string(),
                    shape: vec![1],
                    data: vec![m.b_out],
                });
                Checkpoint {
                    format_version: FORMAT_VERSION,
                    kind: "rmtpp".to_string(),
                    cell: Some("RNN".to_string()),
                    basis: None,
                    transfer: None,
                    hidden_size: Some(m.hidden_size()),
                    j: None,
                    norm: Some(m.norm),
                    process: None,
                    params: params.to_vec(),
                }
            }
            TrainedModel::Parametric(p) => Checkpoint {
                format_version: FORMAT_VERSION,
                kind: p.kind_str().to_ascii_lowercase(),
                cell: None,
                basis: None,
                transfer: None,
                hidden_size: None,
                j: None,
                norm: None,
                process: Some(*p),
                params: Vec::new(),
            },
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        if ck.format_version != FORMAT_VERSION {
            return Err(CheckpointError::Version(ck.format_version));
        }
        let need = |opt: Option<&str>, what: &str| -> Result<String, CheckpointError> {
            opt.map(str::to_string)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing field `{what}`")))
        };
        match ck.kind.as_str() {
            "unipoint" => {
                let cell_kind = CellKind::parse(&need(ck.cell.as_deref(), "cell")?)
                    .ok_or_else(|| CheckpointError::Malformed("bad cell kind".to_string()))?;
                let basis_str = need(ck.basis.as_deref(), "basis")?;
                let j = ck.j.ok_or_else(|| CheckpointError::Malformed("missing field `j`".to_string()))?;
                let basis = BasisSpec::from_config(&basis_str, j)
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
                let transfer = TransferKind::parse(&need(ck.transfer.as_deref(), "transfer")?)
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
                let m = ck
                    .hidden_size
                    .ok_or_else(|| CheckpointError::Malformed("missing field `hidden_size`".to_string()))?;
                let norm = ck
                    .norm
                    .ok_or_else(|| CheckpointError::Malformed("missing field `norm`".to_string()))?;
                let cell = match cell_kind {
                    CellKind::Rnn => Cell::Rnn(RnnWeights::zeros(m)),
                    CellKind::Lstm => Cell::Lstm(LstmWeights::zeros(m)),
                };
                let mut model = UniPointModel {
                    cell,
                    head: HeadWeights::zeros(basis.param_len(), m),
                    basis,
                    transfer,
                    norm,
                };
                let names: &[&str] = match cell_kind {
                    CellKind::Rnn => &["w", "v", "b", "h0", "head_a", "head_b"],
                    CellKind::Lstm => &["w", "v", "b", "h0", "c0", "head_a", "head_b"],
                };
                let flat = concat_params(&ck.params, names)?;
                if flat.len() != ParamBlock::param_len(&model) {
                    return Err(CheckpointError::Malformed(format!(
                        "parameter count {} does not match model ({})",
                        flat.len(),
                        ParamBlock::param_len(&model)
                    )));
                }
                model.read_flat(&flat);
                Ok(TrainedModel::UniPoint(model))
            }
            "rmtpp" => {
                let m = ck
                    .hidden_size
                    .ok_or_else(|| CheckpointError::Malformed("missing field `hidden_size`".to_string()))?;
                let norm = ck
                    .norm
                    .ok_or_else(|| CheckpointError::Malformed("missing field `norm`".to_string()))?;
                let mut model = RmtppModel {
                    rnn: RnnWeights::zeros(m),
                    v_out: vec![0.0; m],
                    w: 0.0,
                    b_out: 0.0,
                    norm,
                };
                let flat = concat_params(&ck.params, &["w", "v", "b", "h0", "v_out", "w_out", "b_out"])?;
                if flat.len() != ParamBlock::param_len(&model) {
                    return Err(CheckpointError::Malformed(format!(
                        "parameter count {} does not match model ({})",
                        flat.len(),
                        ParamBlock::param_len(&model)
                    )));
                }
                model.read_flat(&flat);
                Ok(TrainedModel::Rmtpp(model))
            }
            _ => {
                let p = ck
                    .process
                    .ok_or_else(|| CheckpointError::Malformed(format!("unknown kind `{}`", ck.kind)))?;
                Ok(TrainedModel::Parametric(p))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_checkpoint(&ck)
    }
}

impl IntensityModel for TrainedModel {
    fn sequence_ll(&self, seq: &EventSequence, mc_samples: usize, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            TrainedModel::UniPoint(m) => m.sequence_ll(seq, mc_samples, rng),
            TrainedModel::Rmtpp(m) => m.sequence_ll(seq, mc_samples, rng),
            TrainedModel::Parametric(p) => p.sequence_ll(seq, mc_samples, rng),
        }
    }

    fn conditioned<'a>(&'a self, seq: &'a EventSequence) -> Box<dyn Fn(usize, f64) -> f64 + Sync + 'a> {
        match self {
            TrainedModel::UniPoint(m) => m.conditioned(seq),
            TrainedModel::Rmtpp(m) => m.conditioned(seq),
            TrainedModel::Parametric(p) => p.conditioned(seq),
        }
    }
}
