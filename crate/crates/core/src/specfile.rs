//! JSON serialization of specs (schema "v1").

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::ConformalData;
use crate::expr::{parse, Expr};
use crate::stackel::{Chart, PainleveSpec, SpecError};

pub const SCHEMA: &str = "v1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChartFile {
    pub variables: Vec<String>,
    pub blocks: Vec<Vec<String>>,
    pub domain: BTreeMap<String, [f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TestsFile {
    #[serde(default)]
    pub functions: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConformalFile {
    #[serde(default = "one")]
    pub c: String,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub phi: Vec<String>,
}

fn one() -> String {
    "1".into()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(default = "schema")]
    pub schema: String,
    #[serde(default)]
    pub name: Option<String>,
    pub chart: ChartFile,
    pub stackel: Vec<Vec<String>>,
    pub block_metrics: Vec<Vec<Vec<String>>>,
    #[serde(default)]
    pub tests: TestsFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal: Option<ConformalFile>,
}

fn schema() -> String {
    SCHEMA.into()
}

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("malformed spec file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema `{0}`")]
    Schema(String),
    #[error("domain of `{0}` is missing")]
    Domain(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

fn expr(s: &str, location: impl Fn() -> String) -> Result<Expr, SpecError> {
    parse(s).map_err(|source| SpecError::Parse { location: location(), source })
}

impl SpecFile {
    pub fn into_spec(self) -> Result<PainleveSpec, SpecFileError> {
        if self.schema != SCHEMA {
            return Err(SpecFileError::Schema(self.schema));
        }
        let domain = self
            .chart
            .variables
            .iter()
            .map(|v| self.chart.domain.get(v).map(|d| (d[0], d[1])).ok_or_else(|| SpecFileError::Domain(v.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let chart = Chart::new(self.chart.variables, self.chart.blocks, domain)?;
        let stackel = self
            .stackel
            .iter()
            .enumerate()
            .map(|(a, row)| row.iter().enumerate().map(|(b, s)| expr(s, || format!("stackel[{a}][{b}]"))).collect())
            .collect::<Result<Vec<Vec<Expr>>, _>>()?;
        let blocks = self
            .block_metrics
            .iter()
            .enumerate()
            .map(|(a, m)| {
                m.iter()
                    .enumerate()
                    .map(|(i, row)| row.iter().enumerate().map(|(j, s)| expr(s, || format!("block_metrics[{a}][{i}][{j}]"))).collect())
                    .collect()
            })
            .collect::<Result<Vec<Vec<Vec<Expr>>>, _>>()?;
        let tests = self
            .tests
            .functions
            .iter()
            .enumerate()
            .map(|(k, s)| expr(s, || format!("tests.functions[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut spec = PainleveSpec::new(self.name.as_deref().unwrap_or("spec"), chart, stackel, blocks)?.with_test_functions(tests);
        if let Some(c) = self.conformal {
            let phi = if c.phi.is_empty() {
                vec![Expr::zero(); spec.r()]
            } else {
                c.phi.iter().enumerate().map(|(k, s)| expr(s, || format!("conformal.phi[{k}]"))).collect::<Result<_, _>>()?
            };
            if phi.len() != spec.r() {
                return Err(SpecError::Invalid(format!("conformal.phi needs {} entries", spec.r())).into());
            }
            spec = spec.with_conformal(ConformalData {
                c: expr(&c.c, || "conformal.c".into())?,
                lambda: c.lambda,
                a1: c.a1,
                phi,
            });
        }
        Ok(spec)
    }

    pub fn from_spec(spec: &PainleveSpec) -> SpecFile {
        let text = |e: &Expr| e.to_string();
        let chart = &spec.chart;
        SpecFile {
            schema: SCHEMA.into(),
            name: Some(spec.name.clone()),
            chart: ChartFile {
                variables: chart.vars().to_vec(),
                blocks: (0..chart.r()).map(|a| chart.block_var_names(a)).collect(),
                domain: chart.vars().iter().cloned().zip(chart.domain().iter().map(|&(lo, hi)| [lo, hi])).collect(),
            },
            stackel: spec.stackel.iter().map(|r| r.iter().map(text).collect()).collect(),
            block_metrics: spec.block_metrics.iter().map(|m| m.iter().map(|r| r.iter().map(text).collect()).collect()).collect(),
            tests: TestsFile {
                functions: spec.test_functions.iter().map(text).collect(),
            },
            conformal: spec.conformal.as_ref().map(|c| ConformalFile {
                c: text(&c.c),
                lambda: c.lambda,
                a1: c.a1,
                phi: c.phi.iter().map(text).collect(),
            }),
        }
    }
}

pub fn spec_from_json(text: &str) -> Result<PainleveSpec, SpecFileError> {
    serde_json::from_str::<SpecFile>(text)?.into_spec()
}

/// Pretty JSON with a stable key order.
pub fn spec_to_json(spec: &PainleveSpec) -> String {
    serde_json::to_string_pretty(&SpecFile::from_spec(spec)).expect("spec files always serialize")
}
