//! Quadratic first integrals of the geodesic flow and the Stäckel-data
//! identities behind them.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::curvature::christoffel_from_jet;
use crate::expr::{EvalError, Expr, SymbolicJets};
use crate::sampling;
use crate::stackel::{Chart, Geometry, MetricJet, SpecError};

/// Symmetric contravariant 2-tensor field K^{ij} given by expressions.
#[derive(Debug)]
pub struct TensorField {
    pub entries: Vec<Vec<Expr>>,
    vars: Vec<String>,
    jets: OnceLock<Result<SymbolicJets, EvalError>>,
}

impl Clone for TensorField {
    fn clone(&self) -> Self {
        TensorField::new(self.entries.clone(), &self.vars)
    }
}

/// Value and first partials of a tensor field at a point.
#[derive(Clone, Debug)]
pub struct TensorJet {
    pub value: DMatrix<f64>,
    /// `d[m]` = ∂_m K.
    pub d: Vec<DMatrix<f64>>,
}

impl TensorField {
    pub fn new(entries: Vec<Vec<Expr>>, vars: &[String]) -> TensorField {
        TensorField {
            entries,
            vars: vars.to_vec(),
            jets: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    fn program(&self) -> Result<&SymbolicJets, EvalError> {
        self.jets
            .get_or_init(|| {
                let flat: Vec<Expr> = self.entries.iter().flat_map(|r| r.iter().cloned()).collect();
                SymbolicJets::new(&flat, &self.vars, 1)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    pub fn jet(&self, x: &[f64]) -> Result<TensorJet, EvalError> {
        let n = self.n();
        let t = self.program()?.eval(x)?;
        let value = DMatrix::from_fn(n, n, |i, j| t[i * n + j].value());
        let d = (0..x.len())
            .map(|m| DMatrix::from_fn(n, n, |i, j| t[i * n + j].partial(&[m])))
            .collect();
        Ok(TensorJet { value, d })
    }

    /// Same field with entry (i, j) (and (j, i)) multiplied by `factor`.
    pub fn perturbed(&self, i: usize, j: usize, factor: f64) -> TensorField {
        let mut entries = self.entries.clone();
        entries[i][j] = &entries[i][j] * factor;
        if i != j {
            entries[j][i] = &entries[j][i] * factor;
        }
        TensorField::new(entries, &self.vars)
    }
}

/// The r Killing tensors K_(α)^{iβ jβ} = (s^{βα}/det S)(G^β)^{iβ jβ}.
#[derive(Clone, Debug)]
pub struct KillingTensorSet {
    pub tensors: Vec<TensorField>,
}

impl KillingTensorSet {
    pub fn get(&self, a: usize) -> &TensorField {
        &self.tensors[a]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

pub fn killing_tensors(geom: &Geometry) -> Result<KillingTensorSet, SpecError> {
    let chart = geom.chart();
    let (n, r) = (chart.n(), chart.r());
    let mut tensors = Vec::with_capacity(r);
    for a in 0..r {
        let mut k = vec![vec![Expr::zero(); n]; n];
        for (b, ids) in chart.blocks().iter().enumerate() {
            let inv = geom.block_inverse_expr(b).ok_or_else(|| {
                SpecError::Unsupported(format!("block {} is too large for symbolic Killing tensors", b + 1))
            })?;
            let factor = geom.cofactor_expr(b, a) / geom.det_expr();
            for (p, &i) in ids.iter().enumerate() {
                for (q, &j) in ids.iter().enumerate() {
                    k[i][j] = &factor * &inv[p][q];
                }
            }
        }
        tensors.push(TensorField::new(k, chart.vars()));
    }
    Ok(KillingTensorSet { tensors })
}

/// A point of phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn momentum_norm(&self) -> f64 {
        self.p.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Halton phase points: positions inside the domain (5% margin), momenta in [−1, 1]ⁿ.
pub fn sample_phase_points(chart: &Chart, count: usize, seed: u64) -> Vec<PhasePoint> {
    let n = chart.n();
    let mut bounds: Vec<(f64, f64)> = chart
        .domain()
        .iter()
        .map(|&(lo, hi)| {
            let d = 0.05 * (hi - lo);
            (lo + d, hi - d)
        })
        .collect();
    bounds.extend(std::iter::repeat_n((-1.0, 1.0), n));
    sampling::halton_box(&bounds, count, seed)
        .into_iter()
        .map(|v| PhasePoint {
            x: v[..n].to_vec(),
            p: v[n..].to_vec(),
        })
        .collect()
}

fn quad(m: &DMatrix<f64>, p: &[f64]) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += m[(i, j)] * p[i] * p[j];
        }
    }
    s
}

/// K^{ij}(x) p_i p_j.
pub fn quadratic_value(k: &TensorField, pp: &PhasePoint) -> Result<f64, EvalError> {
    let j = k.jet(&pp.x)?;
    Ok(quad(&j.value, &pp.p))
}

pub fn quadratic_integral_value(set: &KillingTensorSet, a: usize, pp: &PhasePoint) -> Result<f64, EvalError> {
    quadratic_value(set.get(a), pp)
}

/// Canonical bracket Σ_m (∂_{x_m}F ∂_{p_m}G − ∂_{p_m}F ∂_{x_m}G) of two quadratic integrals.
pub fn poisson_bracket_fields(f: &TensorField, g: &TensorField, pp: &PhasePoint) -> Result<f64, EvalError> {
    let jf = f.jet(&pp.x)?;
    let jg = g.jet(&pp.x)?;
    let n = pp.p.len();
    let pv = nalgebra::DVector::from_column_slice(&pp.p);
    let dpf = &jf.value * &pv * 2.0;
    let dpg = &jg.value * &pv * 2.0;
    let mut s = 0.0;
    for m in 0..n {
        s += quad(&jf.d[m], &pp.p) * dpg[m] - dpf[m] * quad(&jg.d[m], &pp.p);
    }
    Ok(s)
}

pub fn poisson_bracket(set: &KillingTensorSet, a: usize, b: usize, pp: &PhasePoint) -> Result<f64, EvalError> {
    poisson_bracket_fields(set.get(a), set.get(b), pp)
}

/// max_{ijk} |∇_i K_{jk} + ∇_j K_{ki} + ∇_k K_{ij}| for K with indices lowered
/// by the metric whose order-1 jet is given.
pub fn killing_equation_residual_with(metric: &MetricJet, k: &TensorField) -> Result<f64, EvalError> {
    let n = metric.g.nrows();
    let kj = k.jet(&metric.point)?;
    let g = &metric.g;
    let low = g * &kj.value * g;
    let dlow: Vec<DMatrix<f64>> = (0..n)
        .map(|m| {
            let dg = DMatrix::from_fn(n, n, |a, b| metric.dg(a, b, m));
            &dg * &kj.value * g + g * &kj.d[m] * g + g * &kj.value * &dg
        })
        .collect();
    let gam = christoffel_from_jet(metric);
    let nabla = |i: usize, j: usize, l: usize| {
        let mut v = dlow[i][(j, l)];
        for m in 0..n {
            v -= gam.get(m, i, j) * low[(m, l)] + gam.get(m, i, l) * low[(j, m)];
        }
        v
    };
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            for l in j..n {
                let s = nabla(i, j, l) + nabla(j, l, i) + nabla(l, i, j);
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

pub fn killing_equation_residual(geom: &Geometry, set: &KillingTensorSet, a: usize, x: &[f64]) -> Result<f64, SpecError> {
    let metric = geom.metric_at(x, 1)?;
    Ok(killing_equation_residual_with(&metric, set.get(a))?)
}

/// ρ_{βγ} = s^{γβ}/s^{γ1} at a point, as `rho[(β, γ)]`.
#[derive(Clone, Debug)]
pub struct RhoTable {
    pub rho: DMatrix<f64>,
}

pub fn rho_table(geom: &Geometry, x: &[f64]) -> Result<RhoTable, EvalError> {
    let v = geom.stackel_eval(x)?;
    let r = geom.r();
    Ok(RhoTable {
        rho: DMatrix::from_fn(r, r, |b, c| v.cof[(c, b)] / v.cof[(c, 0)]),
    })
}

/// |∂_j ρ_{βδ} − (ρ_{βγ} − ρ_{βδ}) ∂_j log(s^{δ1}/det S)| for a variable `j` of group γ.
pub fn killing_eisenhart_residual(geom: &Geometry, x: &[f64], b: usize, d: usize, j: usize) -> Result<f64, SpecError> {
    let c = geom.chart().block_of(j);
    let jets = geom.stackel_jets(x, 1)?;
    let s_db = &jets.cof[d][b];
    let s_d1 = &jets.cof[d][0];
    let rho = |beta: usize, gamma: usize| jets.cof[gamma][beta].value() / jets.cof[gamma][0].value();
    let d_rho = (s_db.partial(&[j]) * s_d1.value() - s_db.value() * s_d1.partial(&[j])) / s_d1.value().powi(2);
    let d_log = s_d1.partial(&[j]) / s_d1.value() - jets.det.partial(&[j]) / jets.det.value();
    Ok((d_rho - (rho(b, c) - rho(b, d)) * d_log).abs())
}

/// Left side of the generalized Levi-Civita condition for j in group α, k in
/// group β (α ≠ β) and any γ:
/// ∂_j log(s^{γ1}/D) ∂_k log(s^{α1}/D) + ∂_j log(s^{β1}/D) ∂_k log(s^{γ1}/D) − (D/s^{γ1}) ∂_j∂_k(s^{γ1}/D).
pub fn levi_civita_residual(geom: &Geometry, x: &[f64], c: usize, j: usize, k: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let (a, b) = (chart.block_of(j), chart.block_of(k));
    assert_ne!(a, b, "Levi-Civita conditions pair different groups");
    let jets = geom.stackel_jets(x, 2)?;
    let det = &jets.det;
    let dv = det.value();
    let l1 = |g: usize, m: usize| jets.cof[g][0].partial(&[m]) / jets.cof[g][0].value() - det.partial(&[m]) / dv;
    // (D/s) ∂j∂k (s/D) = ∂j∂k log q + ∂j log q ∂k log q, q = s/D
    let s = &jets.cof[c][0];
    let sv = s.value();
    let d2log_s = s.partial(&[j, k]) / sv - s.partial(&[j]) * s.partial(&[k]) / (sv * sv);
    let d2log_d = det.partial(&[j, k]) / dv - det.partial(&[j]) * det.partial(&[k]) / (dv * dv);
    let second = d2log_s - d2log_d + l1(c, j) * l1(c, k);
    Ok((l1(c, j) * l1(a, k) + l1(b, j) * l1(c, k) - second).abs())
}

/// |∂_j∂_k (det S/(s^{α1}s^{β1}))| for j in group α, k in group β.
pub fn second_order_residual(geom: &Geometry, x: &[f64], j: usize, k: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let (a, b) = (chart.block_of(j), chart.block_of(k));
    assert_ne!(a, b, "second-order identity pairs different groups");
    let jets = geom.stackel_jets(x, 2)?;
    let inv_a = reciprocal(&jets.cof[a][0]);
    let inv_b = reciprocal(&jets.cof[b][0]);
    let h = jets.det.mul(&inv_a).mul(&inv_b);
    Ok(h.partial(&[j, k]).abs())
}

fn reciprocal(t: &crate::expr::Taylor) -> crate::expr::Taylor {
    // 1/f by Newton iteration on truncated series: y ← y(2 − f y)
    let mut y = crate::expr::Taylor::constant(t.layout(), 1.0 / t.value());
    for _ in 0..t.order() + 1 {
        let two = crate::expr::Taylor::constant(t.layout(), 2.0);
        y = y.mul(&two.sub(&t.mul(&y)));
    }
    y
}
