//! Second-order operators built from a Painlevé geometry: the Laplacian in
//! generic and block form, the separated operators B_β, the symmetry
//! operators of the Killing tensors, and the Robertson conditions.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::expr::{differentiate, simplify, EvalError, Expr, SymbolicJets, Tape, Taylor};
use crate::killing::killing_tensors;
use crate::stackel::{Geometry, SpecError};

/// Default expression-size limit for symbolic operator composition.
pub const NODE_BUDGET: usize = 2_000_000;

/// (L u) = a^{ij} ∂_i∂_j u + b^i ∂_i u + c u.
#[derive(Debug)]
pub struct DifferentialOperator {
    pub name: String,
    pub a: Vec<Vec<Expr>>,
    pub b: Vec<Expr>,
    pub c: Expr,
    vars: Vec<String>,
    values: OnceLock<Result<Tape, EvalError>>,
    jets: OnceLock<Result<SymbolicJets, EvalError>>,
}

impl Clone for DifferentialOperator {
    fn clone(&self) -> Self {
        DifferentialOperator::new(&self.name, self.a.clone(), self.b.clone(), self.c.clone(), &self.vars)
    }
}

/// Numeric coefficients at a point.
#[derive(Clone, Debug)]
pub struct OperatorValues {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl DifferentialOperator {
    pub fn new(name: &str, a: Vec<Vec<Expr>>, b: Vec<Expr>, c: Expr, vars: &[String]) -> DifferentialOperator {
        DifferentialOperator {
            name: name.to_string(),
            a,
            b,
            c,
            vars: vars.to_vec(),
            values: OnceLock::new(),
            jets: OnceLock::new(),
        }
    }

    pub fn zero(name: &str, vars: &[String]) -> DifferentialOperator {
        let n = vars.len();
        DifferentialOperator::new(name, vec![vec![Expr::zero(); n]; n], vec![Expr::zero(); n], Expr::zero(), vars)
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn renamed(mut self, name: &str) -> DifferentialOperator {
        self.name = name.to_string();
        self
    }

    /// f·L.
    pub fn scaled(&self, f: &Expr) -> DifferentialOperator {
        DifferentialOperator::new(
            &self.name,
            self.a.iter().map(|r| r.iter().map(|e| f * e).collect()).collect(),
            self.b.iter().map(|e| f * e).collect(),
            f * &self.c,
            &self.vars,
        )
    }

    pub fn plus(&self, other: &DifferentialOperator) -> DifferentialOperator {
        let n = self.n();
        DifferentialOperator::new(
            &self.name,
            (0..n).map(|i| (0..n).map(|j| &self.a[i][j] + &other.a[i][j]).collect()).collect(),
            (0..n).map(|i| &self.b[i] + &other.b[i]).collect(),
            &self.c + &other.c,
            &self.vars,
        )
    }

    /// Variables any coefficient depends on syntactically.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for e in self.coefficients() {
            out.extend(e.free_variables());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.coefficients().map(|e| e.node_count()).sum()
    }

    fn coefficients(&self) -> impl Iterator<Item = &Expr> {
        self.a.iter().flatten().chain(self.b.iter()).chain(std::iter::once(&self.c))
    }

    fn flat(&self) -> Vec<Expr> {
        self.coefficients().cloned().collect()
    }

    /// L u as an expression.
    pub fn apply(&self, u: &Expr) -> Expr {
        let n = self.n();
        let du: Vec<Expr> = self.vars.iter().map(|v| differentiate(u, v)).collect();
        let mut terms = Vec::new();
        for i in 0..n {
            if !self.b[i].is_zero() {
                terms.push(&self.b[i] * &du[i]);
            }
            for j in 0..n {
                if !self.a[i][j].is_zero() {
                    terms.push(&self.a[i][j] * differentiate(&du[i], &self.vars[j]));
                }
            }
        }
        if !self.c.is_zero() {
            terms.push(&self.c * u);
        }
        terms.into_iter().sum()
    }

    pub fn values_at(&self, p: &[f64]) -> Result<OperatorValues, EvalError> {
        let tape = self
            .values
            .get_or_init(|| Tape::compile(&self.flat(), &self.vars))
            .as_ref()
            .map_err(|e| e.clone())?;
        let v = tape.eval(p)?;
        let n = self.n();
        Ok(OperatorValues {
            a: DMatrix::from_fn(n, n, |i, j| v[i * n + j]),
            b: v[n * n..n * n + n].to_vec(),
            c: v[n * n + n],
        })
    }

    /// (L u)(p) from the coefficient values and the second-order jet of u.
    pub fn apply_at(&self, u: &Expr, p: &[f64]) -> Result<f64, EvalError> {
        let ju = SymbolicJets::new(std::slice::from_ref(u), &self.vars, 2)?.eval(p)?.remove(0);
        let v = self.values_at(p)?;
        let n = self.n();
        let mut s = v.c * ju.value();
        for i in 0..n {
            s += v.b[i] * ju.partial(&[i]);
            for j in 0..n {
                s += v.a[(i, j)] * ju.partial(&[i, j]);
            }
        }
        Ok(s)
    }

    fn coefficient_jets(&self, p: &[f64]) -> Result<Vec<Taylor>, EvalError> {
        self.jets
            .get_or_init(|| SymbolicJets::new(&self.flat(), &self.vars, 2))
            .as_ref()
            .map_err(|e| e.clone())?
            .eval(p)
    }

    /// Second-order jet of L u given the fourth-order jet of u.
    fn apply_jet(&self, u4: &Taylor, p: &[f64]) -> Result<Taylor, EvalError> {
        let n = self.n();
        let cj = self.coefficient_jets(p)?;
        let layout = cj[0].layout().clone();
        let shifted = |extra: &[usize]| {
            Taylor::from_partials(&layout, |vs| {
                let mut all = vs.to_vec();
                all.extend_from_slice(extra);
                u4.partial(&all)
            })
        };
        let mut acc = cj[n * n + n].mul(&shifted(&[]));
        for i in 0..n {
            acc = acc.add(&cj[n * n + i].mul(&shifted(&[i])));
            for j in 0..n {
                acc = acc.add(&cj[i * n + j].mul(&shifted(&[i, j])));
            }
        }
        Ok(acc)
    }
}

/// Which evaluation path a commutator took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompositionPath {
    Symbolic,
    Jet,
}

#[derive(Clone, Debug)]
pub struct CommutatorValue {
    /// |A(B u) − B(A u)| at the point.
    pub residual: f64,
    /// max(1, |A(B u)|, |B(A u)|).
    pub scale: f64,
    pub path: CompositionPath,
}

/// [A, B] u at p, symbolic while the composed expressions stay under `budget` nodes.
pub fn commutator_residual_with_budget(
    a: &DifferentialOperator,
    b: &DifferentialOperator,
    u: &Expr,
    p: &[f64],
    budget: usize,
) -> Result<CommutatorValue, EvalError> {
    if let Some((ab, ba)) = compose_symbolic(a, b, u, budget) {
        let t = Tape::compile(&[ab, ba], &a.vars)?;
        let v = t.eval(p)?;
        return Ok(CommutatorValue {
            residual: (v[0] - v[1]).abs(),
            scale: 1f64.max(v[0].abs()).max(v[1].abs()),
            path: CompositionPath::Symbolic,
        });
    }
    commutator_residual_jet(a, b, u, p)
}

pub fn commutator_residual(a: &DifferentialOperator, b: &DifferentialOperator, u: &Expr, p: &[f64]) -> Result<CommutatorValue, EvalError> {
    commutator_residual_with_budget(a, b, u, p, NODE_BUDGET)
}

fn compose_symbolic(a: &DifferentialOperator, b: &DifferentialOperator, u: &Expr, budget: usize) -> Option<(Expr, Expr)> {
    if a.node_count() + b.node_count() + u.node_count() > budget {
        return None;
    }
    let bu = b.apply(u);
    let au = a.apply(u);
    if bu.node_count() + au.node_count() > budget / 4 {
        return None;
    }
    let ab = a.apply(&bu);
    if ab.node_count() > budget / 2 {
        return None;
    }
    let ba = b.apply(&au);
    if ba.node_count() > budget / 2 {
        return None;
    }
    Some((ab, ba))
}

/// Jet path: coefficient jets of order 2, test-function jet of order 4.
pub fn commutator_residual_jet(a: &DifferentialOperator, b: &DifferentialOperator, u: &Expr, p: &[f64]) -> Result<CommutatorValue, EvalError> {
    let u4 = SymbolicJets::new(std::slice::from_ref(u), &a.vars, 4)?.eval(p)?.remove(0);
    let outer = |op: &DifferentialOperator, inner: &Taylor| -> Result<f64, EvalError> {
        let v = op.values_at(p)?;
        let n = op.n();
        let mut s = v.c * inner.value();
        for i in 0..n {
            s += v.b[i] * inner.partial(&[i]);
            for j in 0..n {
                s += v.a[(i, j)] * inner.partial(&[i, j]);
            }
        }
        Ok(s)
    };
    let ab = outer(a, &b.apply_jet(&u4, p)?)?;
    let ba = outer(b, &a.apply_jet(&u4, p)?)?;
    Ok(CommutatorValue {
        residual: (ab - ba).abs(),
        scale: 1f64.max(ab.abs()).max(ba.abs()),
        path: CompositionPath::Jet,
    })
}

fn dlog(f: &Expr, v: &str) -> Expr {
    differentiate(f, v) / f
}

/// Δ_g = (1/√|g|) ∂_i(√|g| g^{ij} ∂_j).
pub fn laplacian(geom: &Geometry) -> Result<DifferentialOperator, SpecError> {
    let m = geom.metric_exprs()?;
    Ok(laplacian_of("laplacian", &m.ginv, &m.det_g, geom.chart().vars()))
}

/// Laplace–Beltrami operator of an arbitrary metric given by g^{ij} and |g|.
pub fn laplacian_of(name: &str, ginv: &[Vec<Expr>], det_g: &Expr, vars: &[String]) -> DifferentialOperator {
    let n = vars.len();
    let half_dlog: Vec<Expr> = vars.iter().map(|v| dlog(det_g, v) * 0.5).collect();
    let b = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| !ginv[i][j].is_zero())
                .map(|i| differentiate(&ginv[i][j], &vars[i]) + &ginv[i][j] * &half_dlog[i])
                .sum()
        })
        .collect();
    DifferentialOperator::new(name, ginv.to_vec(), b, Expr::zero(), vars)
}

/// Block Laplacian Δ_{G_β} of one group, as an operator on all variables.
pub fn block_laplacian(geom: &Geometry, beta: usize) -> Result<DifferentialOperator, SpecError> {
    let chart = geom.chart();
    let vars = chart.vars();
    let ids = &chart.blocks()[beta];
    let inv = geom.block_inverse_expr(beta).ok_or_else(too_large)?;
    let det = geom.block_det_expr(beta).ok_or_else(too_large)?;
    let mut op = DifferentialOperator::zero("block_laplacian", vars);
    for (q, &j) in ids.iter().enumerate() {
        let mut bj = Expr::zero();
        for (p, &i) in ids.iter().enumerate() {
            op.a[i][j] = inv[p][q].clone();
            bj = bj + differentiate(&inv[p][q], &vars[i]) + &inv[p][q] * dlog(det, &vars[i]) * 0.5;
        }
        op.b[j] = bj;
    }
    Ok(op)
}

fn too_large() -> SpecError {
    SpecError::Unsupported("block metrics larger than 4×4 have no symbolic inverse".into())
}

/// ∂_i log[(det S)^{n/2−1} s^{β1} / ∏ (s^{γ1})^{l_γ/2}] as an expression.
fn dlog_weight(geom: &Geometry, beta: usize, var: &str) -> Expr {
    let chart = geom.chart();
    let n = chart.n() as f64;
    let mut e = dlog(geom.det_expr(), var) * (n / 2.0 - 1.0) + dlog(geom.cofactor_expr(beta, 0), var);
    for g in 0..chart.r() {
        e = e - dlog(geom.cofactor_expr(g, 0), var) * (chart.block_size(g) as f64 / 2.0);
    }
    e
}

/// γ_{iβ} = −∂_{iβ} log[(det S)^{n/2−1} s^{β1}/∏(s^{γ1})^{l_γ/2}].
pub fn gamma_lower_expr(geom: &Geometry, i: usize) -> Expr {
    let beta = geom.chart().block_of(i);
    simplify(&-dlog_weight(geom, beta, &geom.chart().vars()[i]))
}

/// γ^{jβ} = Σ (G^β)^{iβ jβ} γ_{iβ}.
pub fn gamma_upper_expr(geom: &Geometry, j: usize) -> Result<Expr, SpecError> {
    let chart = geom.chart();
    let (beta, q) = chart.location(j);
    let inv = geom.block_inverse_expr(beta).ok_or_else(too_large)?;
    Ok(chart.blocks()[beta]
        .iter()
        .enumerate()
        .map(|(p, &i)| &inv[p][q] * gamma_lower_expr(geom, i))
        .sum())
}

fn log_partials(t: &Taylor, j: usize, k: usize) -> (f64, f64) {
    let v = t.value();
    let dj = t.partial(&[j]) / v;
    if j == k {
        return (dj, 0.0);
    }
    (dj, t.partial(&[j, k]) / v - dj * t.partial(&[k]) / v)
}

/// Numeric γ_{i}, from first-order Stäckel jets.
pub fn gamma_lower(geom: &Geometry, p: &[f64], i: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let beta = chart.block_of(i);
    let jets = geom.stackel_jets(p, 1)?;
    let n = chart.n() as f64;
    let mut w = (n / 2.0 - 1.0) * log_partials(&jets.det, i, i).0 + log_partials(&jets.cof[beta][0], i, i).0;
    for g in 0..chart.r() {
        w -= chart.block_size(g) as f64 / 2.0 * log_partials(&jets.cof[g][0], i, i).0;
    }
    Ok(-w)
}

pub fn gamma_upper(geom: &Geometry, p: &[f64], j: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let (beta, q) = chart.location(j);
    let g = geom.block_metric_values(p)?.swap_remove(beta);
    let inv = g.try_inverse().ok_or_else(|| SpecError::Precondition {
        what: format!("G_{} is singular", beta + 1),
        point: p.to_vec(),
    })?;
    let mut s = 0.0;
    for (k, &i) in chart.blocks()[beta].iter().enumerate() {
        s += inv[(k, q)] * gamma_lower(geom, p, i)?;
    }
    Ok(s)
}

/// Mixed partial ∂_j∂_k log f from a second-order jet of f.
fn mixed_log(t: &Taylor, j: usize, k: usize) -> f64 {
    let v = t.value();
    t.partial(&[j, k]) / v - t.partial(&[j]) * t.partial(&[k]) / (v * v)
}

/// |∂_{j}γ_{i}| for i in group β and j outside it.
pub fn robertson_gamma_residual(geom: &Geometry, p: &[f64], i: usize, j: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let beta = chart.block_of(i);
    let jets = geom.stackel_jets(p, 2)?;
    let n = chart.n() as f64;
    let mut w = (n / 2.0 - 1.0) * mixed_log(&jets.det, i, j) + mixed_log(&jets.cof[beta][0], i, j);
    for g in 0..chart.r() {
        w -= chart.block_size(g) as f64 / 2.0 * mixed_log(&jets.cof[g][0], i, j);
    }
    Ok(w.abs())
}

/// |∂_j∂_k log[(det S)^{n−2}/∏(s^{γ1})^{l_γ}]|.
pub fn robertson_mixed_log_residual(geom: &Geometry, p: &[f64], j: usize, k: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let jets = geom.stackel_jets(p, 2)?;
    let mut w = (chart.n() as f64 - 2.0) * mixed_log(&jets.det, j, k);
    for g in 0..chart.r() {
        w -= chart.block_size(g) as f64 * mixed_log(&jets.cof[g][0], j, k);
    }
    Ok(w.abs())
}

/// |∂_j Γ_k| with Γ_k = −½∂_k log|g| − Σ_{p,h} (g_ε)_{kp} ∂_h (g^ε)^{hp}, k in group ε.
pub fn robertson_big_gamma_residual(geom: &Geometry, p: &[f64], k: usize, j: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let n = chart.n();
    let m = geom.metric_at(p, 2)?;
    let dg = |a: usize| DMatrix::from_fn(n, n, |x, y| m.dg(x, y, a));
    let ddg = |a: usize, b: usize| DMatrix::from_fn(n, n, |x, y| m.d2g(x, y, a, b));
    let gi = &m.ginv;
    let (dj, dk) = (dg(j), dg(k));
    let d_log_det = (gi * ddg(j, k)).trace() - (gi * &dj * gi * &dk).trace();
    let mut s = -0.5 * d_log_det;
    let eps = chart.block_of(k);
    for &h in &chart.blocks()[eps] {
        let dh = dg(h);
        let d_inv_h = -(gi * &dh * gi);
        let dd_inv = gi * &dj * gi * &dh * gi + gi * &dh * gi * &dj * gi - gi * ddg(j, h) * gi;
        for &q in &chart.blocks()[eps] {
            s -= dj[(k, q)] * d_inv_h[(h, q)] + m.g[(k, q)] * dd_inv[(h, q)];
        }
    }
    Ok(s.abs())
}

#[derive(Clone, Debug)]
pub struct RobertsonEntry {
    /// Group of the differentiation variable `j`.
    pub alpha: usize,
    /// Group of the coefficient index `i`.
    pub beta: usize,
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub mixed_log: f64,
    pub big_gamma: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RobertsonReport {
    pub entries: Vec<RobertsonEntry>,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
    pub max_gamma: f64,
    pub max_mixed_log: f64,
    pub max_big_gamma: f64,
    pub worst_point: Vec<f64>,
}

impl RobertsonReport {
    /// Verdict of the γ formulation.
    pub fn pass(&self) -> bool {
        self.max_gamma < self.tolerance
    }

    pub fn mixed_log_pass(&self) -> bool {
        self.max_mixed_log < self.tolerance
    }

    pub fn big_gamma_pass(&self) -> bool {
        self.max_big_gamma < self.tolerance
    }

    pub fn formulations_agree(&self) -> bool {
        self.pass() == self.mixed_log_pass() && self.pass() == self.big_gamma_pass()
    }
}

/// Both Robertson formulations (and the Γ_k form) over deterministic samples.
pub fn robertson_check(geom: &Geometry, tolerance: f64, samples: usize, seed: u64) -> Result<RobertsonReport, SpecError> {
    let chart = geom.chart();
    let n = chart.n();
    let points = chart.sample(samples, seed);
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (beta, alpha) = (chart.block_of(i), chart.block_of(j));
            if alpha == beta {
                continue;
            }
            entries.push(RobertsonEntry {
                alpha,
                beta,
                i,
                j,
                gamma: 0.0,
                mixed_log: 0.0,
                big_gamma: 0.0,
                worst_point: points.first().cloned().unwrap_or_default(),
            });
        }
    }
    for p in &points {
        for e in entries.iter_mut() {
            let g = robertson_gamma_residual(geom, p, e.i, e.j)?;
            if g > e.gamma {
                e.gamma = g;
                e.worst_point = p.clone();
            }
            e.mixed_log = e.mixed_log.max(robertson_mixed_log_residual(geom, p, e.i, e.j)?);
            e.big_gamma = e.big_gamma.max(robertson_big_gamma_residual(geom, p, e.i, e.j)?);
        }
    }
    let max_gamma = entries.iter().map(|e| e.gamma).fold(0.0, f64::max);
    let worst_point = entries
        .iter()
        .find(|e| e.gamma == max_gamma)
        .map(|e| e.worst_point.clone())
        .unwrap_or_else(|| chart.center());
    Ok(RobertsonReport {
        max_mixed_log: entries.iter().map(|e| e.mixed_log).fold(0.0, f64::max),
        max_big_gamma: entries.iter().map(|e| e.big_gamma).fold(0.0, f64::max),
        max_gamma,
        worst_point,
        entries,
        tolerance,
        samples,
        seed,
    })
}

/// Σ_β (s^{β1}/det S){Δ_{G_β} + (G^β)^{ij}[∂_i log((det S)^{n/2−1}s^{β1}/∏(s^{γ1})^{l_γ/2})]∂_j}.
pub fn laplacian_block(geom: &Geometry) -> Result<DifferentialOperator, SpecError> {
    let chart = geom.chart();
    let vars = chart.vars();
    let mut total = DifferentialOperator::zero("laplacian_block", vars);
    for beta in 0..chart.r() {
        let mut op = block_laplacian(geom, beta)?;
        let inv = geom.block_inverse_expr(beta).ok_or_else(too_large)?;
        let ids = &chart.blocks()[beta];
        for (q, &j) in ids.iter().enumerate() {
            let extra: Expr = ids
                .iter()
                .enumerate()
                .map(|(p, &i)| &inv[p][q] * dlog_weight(geom, beta, &vars[i]))
                .sum();
            op.b[j] = &op.b[j] + extra;
        }
        let factor = geom.cofactor_expr(beta, 0) / geom.det_expr();
        total = total.plus(&op.scaled(&factor));
    }
    Ok(total.renamed("laplacian_block"))
}

/// B_β = −Δ_{G_β} + Σ γ^{jβ} ∂_{jβ}.
pub fn b_operator(geom: &Geometry, beta: usize) -> Result<DifferentialOperator, SpecError> {
    let mut op = block_laplacian(geom, beta)?.scaled(&Expr::num(-1.0));
    for &j in &geom.chart().blocks()[beta] {
        op.b[j] = simplify(&(&op.b[j] + gamma_upper_expr(geom, j)?));
    }
    Ok(op.renamed(&format!("B_{}", beta + 1)))
}

/// T_α = Σ_β (s^{βα}/det S) B_β.
pub fn t_operator(geom: &Geometry, alpha: usize) -> Result<DifferentialOperator, SpecError> {
    let mut total = DifferentialOperator::zero("T", geom.chart().vars());
    for beta in 0..geom.r() {
        let factor = geom.cofactor_expr(beta, alpha) / geom.det_expr();
        total = total.plus(&b_operator(geom, beta)?.scaled(&factor));
    }
    Ok(total.renamed(&format!("T_{}", alpha + 1)))
}

/// Δ_{K(α)} u = (1/√|g|) ∂_i(√|g| K_(α)^{ij} ∂_j u).
pub fn symmetry_operator(geom: &Geometry, alpha: usize) -> Result<DifferentialOperator, SpecError> {
    let m = geom.metric_exprs()?;
    let ks = killing_tensors(geom)?;
    let k = &ks.get(alpha).entries;
    let vars = geom.chart().vars();
    let n = vars.len();
    let half_dlog: Vec<Expr> = vars.iter().map(|v| dlog(&m.det_g, v) * 0.5).collect();
    let b = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| !k[i][j].is_zero())
                .map(|i| differentiate(&k[i][j], &vars[i]) + &k[i][j] * &half_dlog[i])
                .sum()
        })
        .collect();
    Ok(DifferentialOperator::new(
        &format!("Delta_K{}", alpha + 1),
        k.clone(),
        b,
        Expr::zero(),
        vars,
    ))
}

/// Variables whose partial derivative of some coefficient exceeds `tol` at one of the points.
pub fn coefficient_dependence(op: &DifferentialOperator, points: &[Vec<f64>], tol: f64) -> Result<BTreeSet<String>, EvalError> {
    let jets = op
        .jets
        .get_or_init(|| SymbolicJets::new(&op.flat(), &op.vars, 2))
        .as_ref()
        .map_err(|e| e.clone())?;
    let mut out = BTreeSet::new();
    for p in points {
        for t in jets.eval(p)? {
            for (v, name) in op.vars.iter().enumerate() {
                if t.partial(&[v]).abs() > tol {
                    out.insert(name.clone());
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::stackel::{Chart, PainleveSpec};

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn spec2(s: [[&str; 2]; 2]) -> Geometry {
        let chart = Chart::new(
            vec!["x1".into(), "x2".into()],
            vec![vec!["x1".into()], vec!["x2".into()]],
            vec![(-0.8, 0.8), (-0.8, 0.8)],
        )
        .unwrap();
        let stackel = s.iter().map(|r| r.iter().map(|x| e(x)).collect()).collect();
        let spec = PainleveSpec::new("t", chart, stackel, vec![vec![vec![e("1")]], vec![vec![e("1")]]]).unwrap();
        Geometry::new(spec).unwrap()
    }

    fn warped() -> Geometry {
        let chart = Chart::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
            vec![vec!["x1".into()], vec!["x2".into(), "x3".into()]],
            vec![(-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5)],
        )
        .unwrap();
        let spec = PainleveSpec::new(
            "warped",
            chart,
            vec![vec![e("1 + x1^2"), e("-(2 + sin(x1))")], vec![e("0"), e("1")]],
            vec![
                vec![vec![e("1")]],
                vec![vec![e("1 + x2^2"), e("0.1*x3")], vec![e("0.1*x3"), e("2")]],
            ],
        )
        .unwrap();
        Geometry::new(spec).unwrap()
    }

    #[test]
    fn flat_laplacian_and_constants() {
        let g = spec2([["1", "-1"], ["0", "1"]]);
        let lap = laplacian(&g).unwrap();
        assert_eq!(lap.apply_at(&e("x1^2"), &[0.2, 0.4]).unwrap(), 2.0);
        assert_eq!(lap.apply_at(&e("3"), &[0.2, 0.4]).unwrap(), 0.0);
        assert!(gamma_lower(&g, &[0.1, 0.2], 0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn liouville_laplacian_by_hand() {
        let g = spec2([["x1^2", "-1"], ["x2^2 + 1", "1"]]);
        let lap = laplacian(&g).unwrap();
        let blk = laplacian_block(&g).unwrap();
        let (x1, x2) = (0.3, 0.7);
        // u = x1 x2 is harmonic for the flat part
        let u = e("x1*x2");
        assert!(lap.apply_at(&u, &[x1, x2]).unwrap().abs() < 1e-14);
        let u = e("x1^2 + x2^3");
        let want = (2.0 + 6.0 * x2) / (x1 * x1 + x2 * x2 + 1.0);
        assert!((lap.apply_at(&u, &[x1, x2]).unwrap() - want).abs() < 1e-13);
        assert!((blk.apply_at(&u, &[x1, x2]).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn gamma_matches_finite_differences() {
        let g = spec2([["x1^2", "-1"], ["x2^2 + 1", "1"]]);
        let p = [0.3, -0.4];
        for i in 0..2 {
            let sym = crate::expr::evaluate(&gamma_lower_expr(&g, i), &g.chart().binding(&p)).unwrap();
            let jet = gamma_lower(&g, &p, i).unwrap();
            assert!((sym - jet).abs() < 1e-13);
            let h = 1e-5;
            let lw = |q: &[f64]| {
                let v = g.stackel_eval(q).unwrap();
                let beta = i;
                (v.cof[(beta, 0)] / (v.cof[(0, 0)] * v.cof[(1, 0)]).sqrt()).ln()
            };
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = -(lw(&a) - lw(&b)) / (2.0 * h);
            assert!((fd - jet).abs() < 1e-8);
        }
    }

    #[test]
    fn warped_product_passes_robertson() {
        let g = warped();
        let rep = robertson_check(&g, 1e-9, 64, 0).unwrap();
        assert!(rep.pass() && rep.formulations_agree(), "{rep:?}");
        let pts = g.chart().sample(8, 0);
        let b2 = b_operator(&g, 1).unwrap();
        let dep = coefficient_dependence(&b2, &pts, 1e-10).unwrap();
        assert!(!dep.contains("x1"), "{dep:?}");
        let lap = laplacian(&g).unwrap();
        let blk = laplacian_block(&g).unwrap();
        let t1 = t_operator(&g, 0).unwrap();
        let k2 = symmetry_operator(&g, 1).unwrap();
        let t2 = t_operator(&g, 1).unwrap();
        let u = e("sin(x1 + 2*x2)*x3 + x1^2*x2");
        for p in &pts {
            let l = lap.apply_at(&u, p).unwrap();
            assert!((blk.apply_at(&u, p).unwrap() - l).abs() < 1e-10);
            assert!((t1.apply_at(&u, p).unwrap() + l).abs() < 1e-10);
            assert!((k2.apply_at(&u, p).unwrap() + t2.apply_at(&u, p).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn symbolic_and_jet_commutators_agree() {
        let g = warped();
        let lap = laplacian(&g).unwrap();
        let k2 = symmetry_operator(&g, 1).unwrap();
        let u = e("exp(0.3*x1)*cos(x2) + x3^3*x1");
        let p = [0.1, -0.2, 0.3];
        let s = commutator_residual(&lap, &k2, &u, &p).unwrap();
        let j = commutator_residual_jet(&lap, &k2, &u, &p).unwrap();
        assert_eq!(s.path, CompositionPath::Symbolic);
        assert!(s.residual < 1e-9 * s.scale && j.residual < 1e-9 * j.scale, "{s:?} {j:?}");
        let forced = commutator_residual_with_budget(&lap, &k2, &u, &p, 10).unwrap();
        assert_eq!(forced.path, CompositionPath::Jet);
        // a non-commuting pair gives the same value on both paths
        let x = DifferentialOperator::new(
            "x1 d2",
            vec![vec![Expr::zero(); 3]; 3],
            vec![e("x1"), Expr::zero(), Expr::zero()],
            Expr::zero(),
            g.chart().vars(),
        );
        let s = commutator_residual(&lap, &x, &u, &p).unwrap();
        let j = commutator_residual_jet(&lap, &x, &u, &p).unwrap();
        assert!(s.residual > 1e-3 && (s.residual - j.residual).abs() < 1e-10 * s.scale);
    }
}
