//! JSON model files.
//!
//! ```json
//! {
//!   "name": "four-cycle",
//!   "compartments": 4,
//!   "edges": [[1, 2], [2, 3], [3, 4], [4, 1]],
//!   "inputs": [1],
//!   "outputs": [2],
//!   "leaks": [1, 3]
//! }
//! ```
//!
//! Compartments are 1-based. `leak_convention` is optional, `"separate"`
//! by default.

use std::fs;
use std::path::Path;

use compid_core::model::{validate_model, CompModel, LeakConvention, RawModel, EDGE_CONVENTION};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub compartments: usize,
    pub edges: Vec<[usize; 2]>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    #[serde(default)]
    pub leaks: Vec<usize>,
    #[serde(default)]
    pub leak_convention: LeakConvention,
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("ReadError: {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("ParseError: {path}: line {line} column {column}: {msg} (convention: {EDGE_CONVENTION})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{source} (in {path}; convention: {EDGE_CONVENTION})")]
    Invalid {
        path: String,
        source: compid_core::model::ModelError,
    },
}

impl ModelFile {
    pub fn to_raw(&self) -> RawModel {
        RawModel {
            compartments: self.compartments,
            edges: self.edges.iter().map(|&[a, b]| (a, b)).collect(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            leaks: self.leaks.clone(),
            leak_convention: self.leak_convention,
        }
    }

    pub fn from_model(m: &CompModel) -> Self {
        let raw = m.to_raw();
        ModelFile {
            name: None,
            notes: None,
            compartments: raw.compartments,
            edges: raw.edges.iter().map(|&(a, b)| [a, b]).collect(),
            inputs: raw.inputs,
            outputs: raw.outputs,
            leaks: raw.leaks,
            leak_convention: raw.leak_convention,
        }
    }
}

/// Parses and validates model text; `origin` names the source in errors.
pub fn parse_model_str(text: &str, origin: &str) -> Result<CompModel, ModelFileError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelFileError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    validate_model(&file.to_raw()).map_err(|source| ModelFileError::Invalid {
        path: origin.to_string(),
        source,
    })
}

pub fn parse_model_file(path: &Path) -> Result<CompModel, ModelFileError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Read {
        path: origin.clone(),
        source,
    })?;
    parse_model_str(&text, &origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_cycle() {
        let m = parse_model_str(
            r#"{"compartments": 4, "edges": [[1,2],[2,3],[3,4],[4,1]],
                "inputs": [1], "outputs": [2], "leaks": [1,3]}"#,
            "t",
        )
        .unwrap();
        assert_eq!(m.num_params(), 6);
        assert_eq!(parse_model_str(&serde_json::to_string(&ModelFile::from_model(&m)).unwrap(), "t").unwrap(), m);
    }

    #[test]
    fn errors_name_the_convention() {
        let cases = [
            (r#"{"compartments": 2, "edges": [], "inputs": [], "outputs": [1]}"#, "EmptyInputs"),
            (r#"{"compartments": 2, "edges": [[1,1]], "inputs": [1], "outputs": [1]}"#, "SelfLoop"),
            (r#"{"compartments": 2, "edges": [], "inputs": [1], "outputs": [1], "colour": 3}"#, "ParseError"),
            (r#"{"compartments": 2, "edges": [[1,3]], "inputs": [1], "outputs": [1]}"#, "IndexOutOfRange"),
        ];
        for (text, tag) in cases {
            let msg = parse_model_str(text, "t").unwrap_err().to_string();
            assert!(msg.starts_with(tag), "{msg}");
            assert!(msg.contains(EDGE_CONVENTION));
            assert!(!msg.contains('\n'));
        }
    }
}
