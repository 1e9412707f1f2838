//! Problem files: JSON documents holding `A, B, t, b, k`, the constraint
//! sense and optional solver settings.

use std::path::Path;

use nalgebra::DVector;
use qcls_core::{ProblemSpec, Sense, SolveError, SolverConfig, SymMatrix};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum SenseTag {
    #[default]
    #[serde(rename = "eq")]
    Eq,
    #[serde(rename = "le")]
    Le,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_cluster: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_class: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_feas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_secular: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pole_guard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_spread: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_samples: Option<usize>,
}

impl ConfigOverrides {
    /// Sets a floating-point field by name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), CliError> {
        let slot = match name {
            "tol_rank" => &mut self.tol_rank,
            "tol_cluster" => &mut self.tol_cluster,
            "tol_class" => &mut self.tol_class,
            "tol_feas" => &mut self.tol_feas,
            "tol_secular" => &mut self.tol_secular,
            "tol_lambda" => &mut self.tol_lambda,
            "pole_guard" => &mut self.pole_guard,
            "max_condition" => &mut self.max_condition,
            "free_spread" => &mut self.free_spread,
            _ => return Err(CliError::Usage(format!("unknown setting '{name}'"))),
        };
        *slot = Some(value);
        Ok(())
    }

    pub fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        let pairs = [
            (&mut cfg.tol_rank, self.tol_rank),
            (&mut cfg.tol_cluster, self.tol_cluster),
            (&mut cfg.tol_class, self.tol_class),
            (&mut cfg.tol_feas, self.tol_feas),
            (&mut cfg.tol_secular, self.tol_secular),
            (&mut cfg.tol_lambda, self.tol_lambda),
            (&mut cfg.pole_guard, self.pole_guard),
            (&mut cfg.max_condition, self.max_condition),
            (&mut cfg.free_spread, self.free_spread),
        ];
        for (slot, v) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(s) = self.default_samples {
            cfg.default_samples = s;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b_mat: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    pub k: f64,
    #[serde(default)]
    pub sense: SenseTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigOverrides>,
}

fn check_matrix(name: &str, m: &[Vec<f64>], n: usize) -> Result<(), CliError> {
    if m.len() != n {
        return Err(CliError::Invalid(format!("{name} has {} rows, expected {n}", m.len())));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::Invalid(format!("{name} row {i} has {} entries, expected {n}", row.len())));
        }
    }
    Ok(())
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: {
                let m = e.to_string();
                match m.rfind(" at line ") {
                    Some(pos) => m[..pos].to_string(),
                    None => m,
                }
            },
        })?;
        file.check()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.t.len()
    }

    /// Shape and finiteness checks.
    pub fn check(&self) -> Result<(), CliError> {
        let n = self.dim();
        if n == 0 {
            return Err(CliError::Invalid("t is empty".into()));
        }
        check_matrix("A", &self.a, n)?;
        check_matrix("B", &self.b_mat, n)?;
        if self.b.len() != n {
            return Err(CliError::Invalid(format!("b has {} entries, expected {n}", self.b.len())));
        }
        let all = self
            .a
            .iter()
            .chain(self.b_mat.iter())
            .flatten()
            .chain(self.t.iter())
            .chain(self.b.iter())
            .chain(std::iter::once(&self.k));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(CliError::Invalid("non-finite value".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        self.check()?;
        let sense = match self.sense {
            SenseTag::Eq => Sense::Equality,
            SenseTag::Le => Sense::LessEqual,
        };
        let sym = |m: &[Vec<f64>]| SymMatrix::from_rows(m).map_err(|e| CliError::Invalid(e.to_string()));
        ProblemSpec::new(
            sym(&self.a)?,
            DVector::from_column_slice(&self.t),
            sym(&self.b_mat)?,
            DVector::from_column_slice(&self.b),
            self.k,
            sense,
        )
        .map_err(|e: SolveError| CliError::Invalid(e.to_string()))
    }

    pub fn solver_config(&self, extra: &ConfigOverrides) -> SolverConfig {
        let cfg = match &self.config {
            Some(c) => c.apply(SolverConfig::default()),
            None => SolverConfig::default(),
        };
        extra.apply(cfg)
    }
}

pub fn schema() -> serde_json::Value {
    let matrix = serde_json::json!({
        "type": "array",
        "items": { "type": "array", "items": { "type": "number" } }
    });
    let vector = serde_json::json!({ "type": "array", "items": { "type": "number" } });
    let positive = serde_json::json!({ "type": "number", "exclusiveMinimum": 0 });
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ProblemFile",
        "description": "minimise (x-t)'A(x-t) subject to x'Bx + 2b'x - k = 0 (sense eq) or <= 0 (sense le)",
        "type": "object",
        "additionalProperties": false,
        "required": ["A", "B", "t", "b", "k"],
        "properties": {
            "A": matrix,
            "B": matrix,
            "t": vector,
            "b": vector,
            "k": { "type": "number" },
            "sense": { "enum": ["eq", "le"], "default": "eq" },
            "config": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "tol_rank": positive,
                    "tol_cluster": positive,
                    "tol_class": positive,
                    "tol_feas": positive,
                    "tol_secular": positive,
                    "tol_lambda": positive,
                    "pole_guard": positive,
                    "max_condition": positive,
                    "free_spread": positive,
                    "default_samples": { "type": "integer", "minimum": 0 }
                }
            }
        }
    })
}
