//! Experiment config file schema and flag resolution. A config file may
//! pre-set anything a flag can; explicit flags win.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::CliError;
use crate::processes::ParametricProcess;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub precision: Option<usize>,
    pub data: Option<PathBuf>,
    pub process: Option<ParametricProcess>,
    pub sequences: Option<usize>,
    pub events: Option<usize>,
    pub t_end: Option<f64>,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainFileConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: Option<String>,
    pub basis: Option<String>,
    pub transfer: Option<String>,
    pub j: Option<usize>,
    pub hidden: Option<usize>,
    pub cell: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainFileConfig {
    pub batch_size: Option<usize>,
    pub mc_samples_train: Option<usize>,
    pub mc_samples_eval: Option<usize>,
    pub early_stop_delta: Option<f64>,
    pub early_stop_patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub normalize_eval_times: Option<bool>,
    pub fractions: Option<[f64; 3]>,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("reading config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("parsing config {}: {e}", p.display())))
        }
    }
}

/// Comma-separated triple like `0.6,0.2,0.2`.
pub fn parse_fractions(s: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "--fractions needs three comma-separated values, got `{s}`"
        )));
    }
    let mut vals = [0.0f64; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .parse()
            .map_err(|_| CliError::Config(format!("bad fraction `{p}` in `{s}`")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect();
    let values = values.map_err(|_| CliError::Config(format!("bad value list `{s}`")))?;
    if values.is_empty() {
        return Err(CliError::Config("empty values list".to_string()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_fields() {
        let err = serde_json::from_str::<FileConfig>("{\"sede\": 3}");
        assert!(err.is_err());
    }

    #[test]
    fn parses_process_with_spec_kind_strings() {
        let cfg: FileConfig = serde_json::from_str(
            "{\"process\":{\"kind\":\"DECAYING_SINE\",\"mu\":0.5,\"alpha\":15.7,\"beta\":2.0,\"gamma\":1.0}}",
        )
        .unwrap();
        assert!(matches!(
            cfg.process,
            Some(ParametricProcess::DecayingSine { .. })
        ));
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(parse_fractions("0.6,0.2,0.2").unwrap(), (0.6, 0.2, 0.2));
        assert!(parse_fractions("0.6,0.4").is_err());
        assert!(parse_fractions("a,b,c").is_err());
    }

    #[test]
    fn value_list_parsing() {
        assert_eq!(parse_usize_list("1,2,4").unwrap(), vec![1, 2, 4]);
        assert!(parse_usize_list("").is_err());
        assert!(parse_usize_list("1,x").is_err());
    }
}
