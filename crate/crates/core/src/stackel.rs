//! Painlevé geometry specifications: chart, generalized Stäckel matrix and
//! block metrics, with the assembled metric in symbolic and jet form.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::conformal::ConformalData;
use crate::expr::{Binding, EvalError, Expr, ParseError, SymbolicJets, Tape, Taylor};
use crate::linalg;
use crate::sampling;

/// Largest block size for which block inverses are formed symbolically.
pub const MAX_SYMBOLIC_BLOCK: usize = 4;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("cannot parse {location}: {source}")]
    Parse { location: String, source: ParseError },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{what} at {point:?}")]
    Precondition { what: String, point: Vec<f64> },
}

/// Coordinate partition and domain box.
#[derive(Clone, Debug)]
pub struct Chart {
    vars: Vec<String>,
    blocks: Vec<Vec<usize>>,
    domain: Vec<(f64, f64)>,
    location: Vec<(usize, usize)>,
}

fn valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Chart {
    /// `blocks` lists variable names per group; `domain` is ordered like `vars`.
    pub fn new(vars: Vec<String>, blocks: Vec<Vec<String>>, domain: Vec<(f64, f64)>) -> Result<Chart, SpecError> {
        let n = vars.len();
        for (i, v) in vars.iter().enumerate() {
            if !valid_identifier(v) {
                return Err(SpecError::Invalid(format!("'{v}' is not a valid variable name")));
            }
            if crate::expr::Func::from_name(v).is_some() {
                return Err(SpecError::Invalid(format!("variable '{v}' shadows a function name")));
            }
            if vars[..i].contains(v) {
                return Err(SpecError::Invalid(format!("variable '{v}' listed twice")));
            }
        }
        if blocks.len() < 2 {
            return Err(SpecError::Invalid(format!("need at least 2 groups, got {}", blocks.len())));
        }
        if domain.len() != n {
            return Err(SpecError::Invalid(format!("domain has {} intervals for {n} variables", domain.len())));
        }
        for (v, &(lo, hi)) in vars.iter().zip(&domain) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SpecError::Invalid(format!("degenerate interval [{lo}, {hi}] for '{v}'")));
            }
        }
        let mut location = vec![(usize::MAX, 0); n];
        let mut idx_blocks = Vec::with_capacity(blocks.len());
        for (a, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(SpecError::Invalid(format!("group {} is empty", a + 1)));
            }
            let mut ids = Vec::with_capacity(block.len());
            for (k, name) in block.iter().enumerate() {
                let i = vars
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| SpecError::Invalid(format!("group {} names unknown variable '{name}'", a + 1)))?;
                if location[i].0 != usize::MAX {
                    return Err(SpecError::Invalid(format!("variable '{name}' appears in two groups")));
                }
                location[i] = (a, k);
                ids.push(i);
            }
            idx_blocks.push(ids);
        }
        if let Some(i) = location.iter().position(|l| l.0 == usize::MAX) {
            return Err(SpecError::Invalid(format!("variable '{}' belongs to no group", vars[i])));
        }
        Ok(Chart {
            vars,
            blocks: idx_blocks,
            domain,
            location,
        })
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Variable indices of each group.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_size(&self, a: usize) -> usize {
        self.blocks[a].len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn block_var_names(&self, a: usize) -> Vec<String> {
        self.blocks[a].iter().map(|&i| self.vars[i].clone()).collect()
    }

    /// (group, position within group) of variable `i`.
    pub fn location(&self, i: usize) -> (usize, usize) {
        self.location[i]
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.location[i].0
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.n() && p.iter().zip(&self.domain).all(|(x, &(lo, hi))| *x >= lo && *x <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn binding(&self, p: &[f64]) -> Binding {
        Binding::from_slices(&self.vars, p)
    }

    /// Deterministic Halton sample points of the domain box.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        sampling::halton_box(&self.domain, count, seed)
    }

    /// Halton points kept away from the boundary by `margin` of each side.
    pub fn sample_interior(&self, count: usize, seed: u64, margin: f64) -> Vec<Vec<f64>> {
        sampling::halton_interior(&self.domain, count, seed, margin)
    }
}

/// Definition data of one Painlevé geometry.
#[derive(Clone, Debug)]
pub struct PainleveSpec {
    pub name: String,
    pub chart: Chart,
    /// Row α holds s_{α1}, …, s_{αr}.
    pub stackel: Vec<Vec<Expr>>,
    /// Symmetric l_α × l_α matrices G_α.
    pub block_metrics: Vec<Vec<Vec<Expr>>>,
    pub test_functions: Vec<Expr>,
    pub conformal: Option<ConformalData>,
}

impl PainleveSpec {
    pub fn new(
        name: &str,
        chart: Chart,
        stackel: Vec<Vec<Expr>>,
        block_metrics: Vec<Vec<Vec<Expr>>>,
    ) -> Result<PainleveSpec, SpecError> {
        let r = chart.r();
        if stackel.len() != r || stackel.iter().any(|row| row.len() != r) {
            return Err(SpecError::Invalid(format!("Stäckel matrix must be {r}x{r}")));
        }
        if block_metrics.len() != r {
            return Err(SpecError::Invalid(format!("expected {r} block metrics, got {}", block_metrics.len())));
        }
        for (a, g) in block_metrics.iter().enumerate() {
            let l = chart.block_size(a);
            if g.len() != l || g.iter().any(|row| row.len() != l) {
                return Err(SpecError::Invalid(format!("block metric {} must be {l}x{l}", a + 1)));
            }
        }
        Ok(PainleveSpec {
            name: name.to_string(),
            chart,
            stackel,
            block_metrics,
            test_functions: Vec::new(),
            conformal: None,
        })
    }

    pub fn with_test_functions(mut self, fs: Vec<Expr>) -> PainleveSpec {
        self.test_functions = fs;
        self
    }

    pub fn with_conformal(mut self, data: ConformalData) -> PainleveSpec {
        self.conformal = Some(data);
        self
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    pub fn r(&self) -> usize {
        self.chart.r()
    }

    /// Same chart and Stäckel matrix with different block metrics.
    pub fn with_block_metrics(&self, block_metrics: Vec<Vec<Vec<Expr>>>) -> Result<PainleveSpec, SpecError> {
        let mut s = PainleveSpec::new(&self.name, self.chart.clone(), self.stackel.clone(), block_metrics)?;
        s.test_functions = self.test_functions.clone();
        s.conformal = self.conformal.clone();
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    RowDependence,
    BlockDependence,
    Asymmetry,
    NotPositiveDefinite,
    SingularStackel,
    Positivity,
    Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
    pub point: Option<Vec<f64>>,
}

/// Number of Halton points used by [`validate_spec`] (box corners are added).
pub const VALIDATION_SAMPLES: usize = 128;

/// Structural and sampled checks of Definition-level requirements. An empty
/// list means the spec is valid on the sample set.
pub fn validate_spec(spec: &PainleveSpec) -> Vec<Violation> {
    validate_spec_with(spec, VALIDATION_SAMPLES, 0)
}

pub fn validate_spec_with(spec: &PainleveSpec, samples: usize, seed: u64) -> Vec<Violation> {
    let chart = &spec.chart;
    let r = chart.r();
    let mut out = Vec::new();
    let allowed = |a: usize| chart.block_var_names(a);
    for a in 0..r {
        let own = allowed(a);
        for b in 0..r {
            let foreign: Vec<String> = spec.stackel[a][b]
                .free_variables()
                .into_iter()
                .filter(|v| !own.contains(v))
                .collect();
            if !foreign.is_empty() {
                out.push(Violation {
                    kind: ViolationKind::RowDependence,
                    message: format!("s_{}{} depends on {} outside group {}", a + 1, b + 1, foreign.join(", "), a + 1),
                    point: None,
                });
            }
        }
        let g = &spec.block_metrics[a];
        for i in 0..g.len() {
            for j in 0..g.len() {
                let foreign: Vec<String> = g[i][j]
                    .free_variables()
                    .into_iter()
                    .filter(|v| !own.contains(v))
                    .collect();
                if !foreign.is_empty() {
                    out.push(Violation {
                        kind: ViolationKind::BlockDependence,
                        message: format!(
                            "G_{} entry ({},{}) depends on {} outside group {}",
                            a + 1,
                            i + 1,
                            j + 1,
                            foreign.join(", "),
                            a + 1
                        ),
                        point: None,
                    });
                }
            }
        }
    }
    if !out.is_empty() {
        return out;
    }

    let geom = match Geometry::new(spec.clone()) {
        Ok(g) => g,
        Err(e) => {
            out.push(Violation {
                kind: ViolationKind::Evaluation,
                message: e.to_string(),
                point: None,
            });
            return out;
        }
    };
    let mut points = chart.sample(samples, seed);
    points.extend(sampling::box_corners(chart.domain()));
    let mut symmetry_reported = vec![false; r];
    let mut pd_reported = vec![false; r];
    let mut pos_reported = vec![false; r];
    let mut singular_reported = false;
    for p in &points {
        let vals = match geom.stackel_eval(p) {
            Ok(v) => v,
            Err(e) => {
                out.push(Violation {
                    kind: ViolationKind::Evaluation,
                    message: e.to_string(),
                    point: Some(p.clone()),
                });
                break;
            }
        };
        if vals.det == 0.0 || !vals.det.is_finite() {
            if !singular_reported {
                out.push(Violation {
                    kind: ViolationKind::SingularStackel,
                    message: "det S vanishes".into(),
                    point: Some(p.clone()),
                });
                singular_reported = true;
            }
            continue;
        }
        for a in 0..r {
            let ratio = vals.det / vals.cof[(a, 0)];
            if !(ratio > 0.0 && ratio.is_finite()) && !pos_reported[a] {
                out.push(Violation {
                    kind: ViolationKind::Positivity,
                    message: format!("det S / s^{}1 = {ratio:e} is not positive", a + 1),
                    point: Some(p.clone()),
                });
                pos_reported[a] = true;
            }
        }
        let blocks = match geom.block_metric_values(p) {
            Ok(b) => b,
            Err(e) => {
                out.push(Violation {
                    kind: ViolationKind::Evaluation,
                    message: e.to_string(),
                    point: Some(p.clone()),
                });
                break;
            }
        };
        for (a, gm) in blocks.iter().enumerate() {
            let asym = linalg::max_abs_diff(gm, &gm.transpose());
            if asym > 1e-14 * (1.0 + gm.amax()) && !symmetry_reported[a] {
                out.push(Violation {
                    kind: ViolationKind::Asymmetry,
                    message: format!("G_{} is not symmetric (max |G - Gᵀ| = {asym:e})", a + 1),
                    point: Some(p.clone()),
                });
                symmetry_reported[a] = true;
            }
            if !linalg::is_positive_definite(gm) && !pd_reported[a] {
                out.push(Violation {
                    kind: ViolationKind::NotPositiveDefinite,
                    message: format!("G_{} is not positive definite", a + 1),
                    point: Some(p.clone()),
                });
                pd_reported[a] = true;
            }
        }
    }
    out
}

/// Numeric Stäckel data at a point.
#[derive(Clone, Debug)]
pub struct StackelValues {
    pub s: DMatrix<f64>,
    pub det: f64,
    /// cof[(α, β)] = s^{αβ}.
    pub cof: DMatrix<f64>,
}

impl StackelValues {
    /// max |S · cofᵀ − det S · I|.
    pub fn adjugate_defect(&self) -> f64 {
        let r = self.s.nrows();
        let prod = &self.s * self.cof.transpose();
        linalg::max_abs_diff(&prod, &(DMatrix::identity(r, r) * self.det))
    }
}

/// Symbolic metric fields.
#[derive(Clone, Debug)]
pub struct MetricExprs {
    pub g: Vec<Vec<Expr>>,
    pub ginv: Vec<Vec<Expr>>,
    pub det_g: Expr,
    pub sqrt_det_g: Expr,
}

/// Metric values and partial derivatives at a point.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub point: Vec<f64>,
    pub order: usize,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub det: f64,
    pub sqrt_det: f64,
    entries: Vec<Option<Taylor>>,
    n: usize,
}

impl MetricJet {
    /// Jet of an arbitrary (not necessarily block-diagonal) symmetric metric
    /// given by expressions over `vars`.
    pub fn from_exprs(g: &[Vec<Expr>], vars: &[String], p: &[f64], order: usize) -> Result<MetricJet, SpecError> {
        let n = g.len();
        let mut flat = Vec::with_capacity(n * n);
        for row in g {
            flat.extend(row.iter().cloned());
        }
        let jets = SymbolicJets::new(&flat, vars, order)?.eval(p)?;
        let gm = DMatrix::from_fn(n, n, |i, j| jets[i * n + j].value());
        let det = gm.clone().determinant();
        let ginv = gm.clone().try_inverse().ok_or_else(|| SpecError::Precondition {
            what: "metric is singular".into(),
            point: p.to_vec(),
        })?;
        Ok(MetricJet {
            point: p.to_vec(),
            order,
            g: gm,
            ginv,
            det,
            sqrt_det: det.abs().sqrt(),
            entries: jets.into_iter().map(Some).collect(),
            n,
        })
    }

    /// Taylor jet of g_{ij}; `None` for off-block (identically zero) entries.
    pub fn taylor(&self, i: usize, j: usize) -> Option<&Taylor> {
        self.entries[i * self.n + j].as_ref()
    }

    /// ∂_{ks…} g_{ij}.
    pub fn partial(&self, i: usize, j: usize, vars: &[usize]) -> f64 {
        self.taylor(i, j).map_or(0.0, |t| t.partial(vars))
    }

    pub fn dg(&self, i: usize, j: usize, k: usize) -> f64 {
        self.partial(i, j, &[k])
    }

    pub fn d2g(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.partial(i, j, &[k, l])
    }
}

/// Jets of the Stäckel data: entries, determinant and cofactors.
#[derive(Clone, Debug)]
pub struct StackelJets {
    pub s: Vec<Vec<Taylor>>,
    pub det: Taylor,
    pub cof: Vec<Vec<Taylor>>,
}

/// A spec with its derived symbolic objects prepared once.
#[derive(Debug)]
pub struct Geometry {
    spec: PainleveSpec,
    det: Expr,
    cof: Vec<Vec<Expr>>,
    conf: Vec<Expr>,
    block_det: Vec<Option<Expr>>,
    block_inv: Vec<Option<Vec<Vec<Expr>>>>,
    exprs: Option<MetricExprs>,
    /// (i, j) pairs with i ≤ j inside a block, in jet order.
    lower_pairs: Vec<(usize, usize)>,
    lower_index: HashMap<(usize, usize), usize>,
    value_tape: Tape,
    block_tape: Tape,
    metric_jets: [OnceLock<Result<SymbolicJets, EvalError>>; 4],
    stackel_jets: [OnceLock<Result<SymbolicJets, EvalError>>; 4],
}

impl Geometry {
    pub fn new(spec: PainleveSpec) -> Result<Geometry, SpecError> {
        let chart = &spec.chart;
        let r = chart.r();
        let n = chart.n();
        let det = linalg::det(&spec.stackel);
        let cof: Vec<Vec<Expr>> = (0..r)
            .map(|a| (0..r).map(|b| linalg::cofactor(&spec.stackel, a, b)).collect())
            .collect();
        let conf: Vec<Expr> = (0..r).map(|a| &det / &cof[a][0]).collect();
        let mut block_det = Vec::with_capacity(r);
        let mut block_inv = Vec::with_capacity(r);
        for g in &spec.block_metrics {
            if g.len() <= MAX_SYMBOLIC_BLOCK {
                block_det.push(Some(linalg::det(g)));
                block_inv.push(Some(linalg::inverse(g)));
            } else {
                block_det.push(None);
                block_inv.push(None);
            }
        }
        let mut lower_pairs = Vec::new();
        for ids in chart.blocks() {
            for (p, &i) in ids.iter().enumerate() {
                for &j in ids.iter().skip(p) {
                    lower_pairs.push((i.min(j), i.max(j)));
                }
            }
        }
        let lower_index = lower_pairs.iter().enumerate().map(|(k, &ij)| (ij, k)).collect();

        let exprs = if block_inv.iter().all(|b| b.is_some()) {
            let mut g = vec![vec![Expr::zero(); n]; n];
            let mut ginv = vec![vec![Expr::zero(); n]; n];
            let mut det_g = Expr::one();
            for (a, ids) in chart.blocks().iter().enumerate() {
                let inv = block_inv[a].as_ref().expect("checked above");
                let up = &cof[a][0] / &det;
                for (p, &i) in ids.iter().enumerate() {
                    for (q, &j) in ids.iter().enumerate() {
                        g[i][j] = &conf[a] * &spec.block_metrics[a][p][q];
                        ginv[i][j] = &up * &inv[p][q];
                    }
                }
                let l = ids.len() as i32;
                det_g = det_g * conf[a].powi(l) * block_det[a].as_ref().expect("checked above");
            }
            let sqrt_det_g = det_g.sqrt();
            Some(MetricExprs {
                g,
                ginv,
                det_g,
                sqrt_det_g,
            })
        } else {
            None
        };

        let mut values = Vec::with_capacity(2 * r * r);
        for row in &spec.stackel {
            values.extend(row.iter().cloned());
        }
        for row in &cof {
            values.extend(row.iter().cloned());
        }
        let value_tape = Tape::compile(&values, chart.vars())?;
        let block_entries: Vec<Expr> = spec
            .block_metrics
            .iter()
            .flat_map(|g| g.iter().flat_map(|row| row.iter().cloned()))
            .collect();
        let block_tape = Tape::compile(&block_entries, chart.vars())?;
        Ok(Geometry {
            spec,
            det,
            cof,
            conf,
            block_det,
            block_inv,
            exprs,
            lower_pairs,
            lower_index,
            value_tape,
            block_tape,
            metric_jets: Default::default(),
            stackel_jets: Default::default(),
        })
    }

    pub fn spec(&self) -> &PainleveSpec {
        &self.spec
    }

    pub fn chart(&self) -> &Chart {
        &self.spec.chart
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn r(&self) -> usize {
        self.spec.r()
    }

    /// Symbolic det S.
    pub fn det_expr(&self) -> &Expr {
        &self.det
    }

    /// Symbolic cofactor s^{αβ}.
    pub fn cofactor_expr(&self, a: usize, b: usize) -> &Expr {
        &self.cof[a][b]
    }

    /// Symbolic block factor det S / s^{α1}.
    pub fn block_factor(&self, a: usize) -> &Expr {
        &self.conf[a]
    }

    /// Symbolic |G_α| (blocks up to [`MAX_SYMBOLIC_BLOCK`]).
    pub fn block_det_expr(&self, a: usize) -> Option<&Expr> {
        self.block_det[a].as_ref()
    }

    /// Symbolic inverse G^α (blocks up to [`MAX_SYMBOLIC_BLOCK`]).
    pub fn block_inverse_expr(&self, a: usize) -> Option<&Vec<Vec<Expr>>> {
        self.block_inv[a].as_ref()
    }

    /// Symbolic g_{ij}, g^{ij}, |g|, √|g|.
    pub fn metric_exprs(&self) -> Result<&MetricExprs, SpecError> {
        self.exprs.as_ref().ok_or_else(|| {
            SpecError::Unsupported(format!(
                "symbolic block inverses need block sizes ≤ {MAX_SYMBOLIC_BLOCK}, got {:?}",
                self.chart().block_sizes()
            ))
        })
    }

    pub fn stackel_eval(&self, p: &[f64]) -> Result<StackelValues, EvalError> {
        let r = self.r();
        let v = self.value_tape.eval(p)?;
        let s = DMatrix::from_fn(r, r, |a, b| v[a * r + b]);
        let cof = DMatrix::from_fn(r, r, |a, b| v[r * r + a * r + b]);
        let det = s.clone().determinant();
        Ok(StackelValues { s, det, cof })
    }

    /// Numeric G_α at a point.
    pub fn block_metric_values(&self, p: &[f64]) -> Result<Vec<DMatrix<f64>>, EvalError> {
        let v = self.block_tape.eval(p)?;
        let mut out = Vec::with_capacity(self.r());
        let mut k = 0;
        for a in 0..self.r() {
            let l = self.chart().block_size(a);
            out.push(DMatrix::from_fn(l, l, |i, j| v[k + i * l + j]));
            k += l * l;
        }
        Ok(out)
    }

    fn metric_program(&self, order: usize) -> Result<&SymbolicJets, EvalError> {
        self.metric_jets[order]
            .get_or_init(|| {
                let exprs: Vec<Expr> = self
                    .lower_pairs
                    .iter()
                    .map(|&(i, j)| {
                        let (a, p) = self.chart().location(i);
                        let (_, q) = self.chart().location(j);
                        &self.conf[a] * &self.spec.block_metrics[a][p][q]
                    })
                    .collect();
                SymbolicJets::new(&exprs, self.chart().vars(), order)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Metric, inverse, determinant and partials of g_{ij} up to `order` (≤ 3).
    pub fn metric_at(&self, p: &[f64], order: usize) -> Result<MetricJet, SpecError> {
        assert!(order <= 3, "metric jets are available up to order 3");
        let n = self.n();
        let jets = self.metric_program(order)?.eval(p)?;
        let mut entries: Vec<Option<Taylor>> = vec![None; n * n];
        for (k, &(i, j)) in self.lower_pairs.iter().enumerate() {
            entries[i * n + j] = Some(jets[k].clone());
            entries[j * n + i] = Some(jets[k].clone());
        }
        let g = DMatrix::from_fn(n, n, |i, j| entries[i * n + j].as_ref().map_or(0.0, |t| t.value()));
        let mut ginv = DMatrix::zeros(n, n);
        let mut det = 1.0;
        for (a, ids) in self.chart().blocks().iter().enumerate() {
            let l = ids.len();
            let block = DMatrix::from_fn(l, l, |x, y| g[(ids[x], ids[y])]);
            let d = block.clone().determinant();
            if !(d > 0.0) || !linalg::is_positive_definite(&block) {
                return Err(SpecError::Precondition {
                    what: format!("metric block {} is not positive definite", a + 1),
                    point: p.to_vec(),
                });
            }
            det *= d;
            let inv = block.try_inverse().ok_or_else(|| SpecError::Precondition {
                what: format!("metric block {} is singular", a + 1),
                point: p.to_vec(),
            })?;
            for x in 0..l {
                for y in 0..l {
                    ginv[(ids[x], ids[y])] = inv[(x, y)];
                }
            }
        }
        Ok(MetricJet {
            point: p.to_vec(),
            order,
            g,
            ginv,
            det,
            sqrt_det: det.sqrt(),
            entries,
            n,
        })
    }

    fn stackel_program(&self, order: usize) -> Result<&SymbolicJets, EvalError> {
        self.stackel_jets[order]
            .get_or_init(|| {
                let mut exprs: Vec<Expr> = Vec::new();
                for row in &self.spec.stackel {
                    exprs.extend(row.iter().cloned());
                }
                exprs.push(self.det.clone());
                for row in &self.cof {
                    exprs.extend(row.iter().cloned());
                }
                SymbolicJets::new(&exprs, self.chart().vars(), order)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Jets of S entries, det S and all cofactors up to `order` (≤ 3).
    pub fn stackel_jets(&self, p: &[f64], order: usize) -> Result<StackelJets, EvalError> {
        assert!(order <= 3, "Stäckel jets are available up to order 3");
        let r = self.r();
        let mut t = self.stackel_program(order)?.eval(p)?.into_iter();
        let s: Vec<Vec<Taylor>> = (0..r).map(|_| (0..r).map(|_| t.next().expect("S entry")).collect()).collect();
        let det = t.next().expect("det");
        let cof: Vec<Vec<Taylor>> = (0..r).map(|_| (0..r).map(|_| t.next().expect("cofactor")).collect()).collect();
        Ok(StackelJets { s, det, cof })
    }

    /// Index of the jet entry for (i, j) in the same block.
    pub fn lower_entry(&self, i: usize, j: usize) -> Option<usize> {
        self.lower_index.get(&(i.min(j), i.max(j))).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn chart2() -> Chart {
        Chart::new(
            vec!["x1".into(), "x2".into()],
            vec![vec!["x1".into()], vec!["x2".into()]],
            vec![(-0.5, 0.5), (-0.5, 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn unit_stackel_spec_is_valid_and_flat() {
        let spec = PainleveSpec::new(
            "unit",
            chart2(),
            vec![vec![e("1"), e("-1")], vec![e("0"), e("1")]],
            vec![vec![vec![e("1")]], vec![vec![e("1")]]],
        )
        .unwrap();
        assert!(validate_spec(&spec).is_empty());
        let g = Geometry::new(spec).unwrap();
        let m = g.metric_at(&[0.1, 0.2], 2).unwrap();
        assert_eq!(m.g, DMatrix::identity(2, 2));
        assert_eq!(m.det, 1.0);
        let ex = g.metric_exprs().unwrap();
        assert_eq!(ex.g[0][0].as_num(), Some(1.0));
        assert_eq!(ex.ginv[1][1].as_num(), Some(1.0));
        let v = g.stackel_eval(&[0.0, 0.0]).unwrap();
        assert_eq!(v.det, 1.0);
        assert_eq!(v.cof, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(v.adjugate_defect(), 0.0);
    }

    #[test]
    fn row_dependence_is_reported() {
        let spec = PainleveSpec::new(
            "bad",
            chart2(),
            vec![vec![e("1"), e("x2")], vec![e("0"), e("1")]],
            vec![vec![vec![e("1")]], vec![vec![e("1")]]],
        )
        .unwrap();
        let v = validate_spec(&spec);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::RowDependence);
        assert!(v[0].message.contains("s_12"));
    }

    #[test]
    fn literal_identity_fails_positivity() {
        let spec = PainleveSpec::new(
            "identity",
            chart2(),
            vec![vec![e("1"), e("0")], vec![e("0"), e("1")]],
            vec![vec![vec![e("1")]], vec![vec![e("1")]]],
        )
        .unwrap();
        let v = validate_spec(&spec);
        assert!(v.iter().any(|x| x.kind == ViolationKind::Positivity), "{v:?}");
    }

    #[test]
    fn chart_rejects_bad_partitions() {
        let vars = vec!["x".to_string(), "y".to_string()];
        assert!(Chart::new(vars.clone(), vec![vec!["x".into(), "y".into()]], vec![(0.0, 1.0); 2]).is_err());
        assert!(Chart::new(vars.clone(), vec![vec!["x".into()], vec!["x".into()]], vec![(0.0, 1.0); 2]).is_err());
        assert!(Chart::new(vars.clone(), vec![vec!["x".into()], vec!["y".into()]], vec![(1.0, 1.0); 2]).is_err());
        assert!(Chart::new(vars, vec![vec!["x".into()], vec!["z".into()]], vec![(0.0, 1.0); 2]).is_err());
    }
}
