//! R-separable conformal deformations: the R factor, the P_β potentials, the
//! conformal-factor equation, and a grid solver for its Yamabe-type form.

use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{differentiate, evaluate, Expr, SymbolicJets};
use crate::operators::{block_laplacian, gamma_upper, gamma_upper_expr, laplacian, laplacian_of};
use crate::separation::FieldJet;
use crate::stackel::{Geometry, SpecError};

/// Inputs of the conformal-factor equation.
#[derive(Clone, Debug)]
pub struct ConformalData {
    pub c: Expr,
    pub lambda: f64,
    pub a1: f64,
    /// One function per group, depending only on that group.
    pub phi: Vec<Expr>,
}

/// R = ∏ (s^{α1})^{l_α/4} / (det S)^{(n−2)/4}.
pub fn r_factor_expr(geom: &Geometry) -> Expr {
    let chart = geom.chart();
    let n = chart.n() as f64;
    let mut num = Expr::one();
    for a in 0..chart.r() {
        num = num * geom.cofactor_expr(a, 0).powf(chart.block_size(a) as f64 / 4.0);
    }
    num / geom.det_expr().powf((n - 2.0) / 4.0)
}

pub fn r_factor(geom: &Geometry, p: &[f64]) -> Result<f64, SpecError> {
    let v = geom.stackel_eval(p)?;
    let chart = geom.chart();
    let n = chart.n() as f64;
    let mut r = v.det.powf(-(n - 2.0) / 4.0);
    for a in 0..chart.r() {
        let s = v.cof[(a, 0)];
        if !(s > 0.0) || !(v.det > 0.0) {
            return Err(SpecError::Precondition {
                what: "R needs positive det S and s^{α1}".into(),
                point: p.to_vec(),
            });
        }
        r *= s.powf(chart.block_size(a) as f64 / 4.0);
    }
    Ok(r)
}

/// max_j |2 Σ_i (G^β)^{ij} ∂_i log R − γ^j|.
pub fn elim_residual(geom: &Geometry, p: &[f64]) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let n = chart.n();
    let jets = geom.stackel_jets(p, 1)?;
    let dlog = |t: &crate::expr::Taylor, i: usize| t.partial(&[i]) / t.value();
    let dlog_r: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = -(n as f64 - 2.0) / 4.0 * dlog(&jets.det, i);
            for a in 0..chart.r() {
                s += chart.block_size(a) as f64 / 4.0 * dlog(&jets.cof[a][0], i);
            }
            s
        })
        .collect();
    let blocks = geom.block_metric_values(p)?;
    let mut worst = 0.0f64;
    for (beta, ids) in chart.blocks().iter().enumerate() {
        let inv = blocks[beta].clone().try_inverse().ok_or_else(|| SpecError::Precondition {
            what: format!("G_{} is singular", beta + 1),
            point: p.to_vec(),
        })?;
        for (q, &j) in ids.iter().enumerate() {
            let lhs: f64 = ids.iter().enumerate().map(|(k, &i)| 2.0 * inv[(k, q)] * dlog_r[i]).sum();
            worst = worst.max((lhs - gamma_upper(geom, p, j)?).abs());
        }
    }
    Ok(worst)
}

/// P_β = −½∂_jγ^j − ¼γ^j∂_j log|G_β| + ¼(G_β)_{ij}γ^iγ^j.
pub fn p_beta_expr(geom: &Geometry, beta: usize) -> Result<Expr, SpecError> {
    let chart = geom.chart();
    let ids = &chart.blocks()[beta];
    let vars = chart.vars();
    let det = geom
        .block_det_expr(beta)
        .ok_or_else(|| SpecError::Unsupported("block metrics larger than 4×4".into()))?;
    let gm = &geom.spec().block_metrics[beta];
    let up: Vec<Expr> = ids.iter().map(|&j| gamma_upper_expr(geom, j)).collect::<Result<_, _>>()?;
    let mut p = Expr::zero();
    for (q, &j) in ids.iter().enumerate() {
        let v = &vars[j];
        p = p - differentiate(&up[q], v) * 0.5 - &up[q] * (differentiate(det, v) / det) * 0.25;
        for (k, _) in ids.iter().enumerate() {
            p = p + &gm[k][q] * &up[k] * &up[q] * 0.25;
        }
    }
    Ok(p)
}

pub fn p_beta(geom: &Geometry, beta: usize, p: &[f64]) -> Result<f64, SpecError> {
    Ok(evaluate(&p_beta_expr(geom, beta)?, &geom.chart().binding(p))?)
}

/// Largest |∂_j P_β| over variables j outside group β.
pub fn p_beta_cross_derivative(geom: &Geometry, beta: usize, p: &[f64]) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let jets = SymbolicJets::new(&[p_beta_expr(geom, beta)?], chart.vars(), 1)?.eval(p)?.remove(0);
    Ok((0..chart.n())
        .filter(|&j| chart.block_of(j) != beta)
        .map(|j| jets.partial(&[j]).abs())
        .fold(0.0, f64::max))
}

/// f = a_1 + Σ_β (s^{β1}/det S)(P_β − φ_β), the coefficient in Δ_g w + f w − λ w^{(n+2)/(n−2)} = 0.
pub fn yamabe_coefficient(geom: &Geometry, data: &ConformalData, p: &[f64]) -> Result<f64, SpecError> {
    let v = geom.stackel_eval(p)?;
    let b = geom.chart().binding(p);
    let mut f = data.a1;
    for beta in 0..geom.r() {
        f += v.cof[(beta, 0)] / v.det * (p_beta(geom, beta, p)? - evaluate(&data.phi[beta], &b)?);
    }
    Ok(f)
}

/// |Δ_{c⁴g} u − c^{−(n+2)}(Δ_g − q_{c,g}) c^{n−2} u| with q_{c,g} = c^{−n+2}Δ_g c^{n−2};
/// the left side comes from the Laplacian of the rescaled metric itself.
pub fn conformal_law_residual(geom: &Geometry, c: &Expr, u: &Expr, p: &[f64]) -> Result<f64, SpecError> {
    let m = geom.metric_exprs()?;
    let vars = geom.chart().vars();
    let n = vars.len();
    let c4 = c.powi(4);
    let ginv: Vec<Vec<Expr>> = m.ginv.iter().map(|r| r.iter().map(|e| e / &c4).collect()).collect();
    let det = &m.det_g * c.powi(4 * n as i32);
    let lhs = laplacian_of("rescaled laplacian", &ginv, &det, vars).apply_at(u, p)?;
    let lap = laplacian(geom)?;
    let k = n as i32 - 2;
    let ck = c.powi(k);
    let cv = evaluate(c, &geom.chart().binding(p))?;
    let uv = evaluate(u, &geom.chart().binding(p))?;
    let q = lap.apply_at(&ck, p)? / cv.powi(k);
    let rhs = cv.powi(-(n as i32 + 2)) * (lap.apply_at(&(&ck * u), p)? - q * cv.powi(k) * uv);
    Ok((lhs - rhs).abs())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsepResiduals {
    /// |Δ_g c^{n−2} − λc^{n+2} + (a_1 + Σ(s^{β1}/det S)(P_β − φ_β))c^{n−2}|.
    pub eqnc: f64,
    /// |Σ(s^{β1}/det S)(−Δ_{G_β} + φ_β)w − a_1 w|.
    pub sepeqw: f64,
}

pub fn rsep_residuals(geom: &Geometry, data: &ConformalData, w: &Expr, p: &[f64]) -> Result<RsepResiduals, SpecError> {
    let n = geom.n() as i32;
    let b = geom.chart().binding(p);
    let cv = evaluate(&data.c, &b)?;
    let lap = laplacian(geom)?;
    let f = yamabe_coefficient(geom, data, p)?;
    let eqnc = (lap.apply_at(&data.c.powi(n - 2), p)? - data.lambda * cv.powi(n + 2) + f * cv.powi(n - 2)).abs();
    let v = geom.stackel_eval(p)?;
    let wv = evaluate(w, &b)?;
    let mut s = -data.a1 * wv;
    for beta in 0..geom.r() {
        let lb = block_laplacian(geom, beta)?.apply_at(w, p)?;
        s += v.cof[(beta, 0)] / v.det * (-lb + evaluate(&data.phi[beta], &b)? * wv);
    }
    Ok(RsepResiduals { eqnc, sepeqw: s.abs() })
}

/// |Δ_{c⁴g}u + λu| for u = c^{−n+2} R w, with c given by its second-order jet.
pub fn conformal_helmholtz_residual(geom: &Geometry, c: &FieldJet, w: &Expr, lambda: f64, p: &[f64]) -> Result<f64, SpecError> {
    let vars = geom.chart().vars();
    let n = vars.len();
    let rj = FieldJet::from_expr(&r_factor_expr(geom), vars, p)?;
    let wj = FieldJet::from_expr(w, vars, p)?;
    let u = c.powf(-(n as f64 - 2.0)).mul(&rj).mul(&wj);
    let lap_u = u.apply(&laplacian(geom)?.values_at(p)?);
    let ginv = geom.metric_at(p, 0)?.ginv;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            cross += ginv[(i, j)] * c.grad[i] / c.value * u.grad[j];
        }
    }
    let lap_hat = c.value.powi(-4) * (lap_u + (2.0 * n as f64 - 4.0) * cross);
    Ok((lap_hat + lambda * u.value).abs())
}

/// Discretized Dirichlet problem Δ w + f w − λ w^p = 0, w = η on the boundary,
/// on a 2D or 3D box of chart coordinates.
#[derive(Clone, Debug)]
pub struct GridProblem {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis, boundary included.
    pub points: usize,
    pub exponent: f64,
    /// Second-order coefficients per node (restricted to the grid axes).
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub eta: Vec<f64>,
    /// Chart indices of the grid axes and the full-dimensional base point.
    pub axes: Vec<usize>,
    pub base: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid setup: {0}")]
    Setup(String),
    #[error("only λ > 0 and f > 0 is solved (min f = {min_f}, λ = {lambda})")]
    NotCase1 { min_f: f64, lambda: f64 },
    #[error("Newton did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("solution leaves the bracket [{lower}, {upper}]: min {min}, max {max}")]
    Bracket { lower: f64, upper: f64, min: f64, max: f64 },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

impl GridProblem {
    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.points - 1) as f64
    }

    fn multi(&self, k: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dims());
        let mut r = k;
        for _ in 0..self.dims() {
            idx.push(r % self.points);
            r /= self.points;
        }
        idx
    }

    fn stride(&self, axis: usize) -> usize {
        self.points.pow(axis as u32)
    }

    /// Grid coordinates of node k.
    pub fn node(&self, k: usize) -> Vec<f64> {
        self.multi(k)
            .iter()
            .enumerate()
            .map(|(d, &i)| if i + 1 == self.points { self.hi[d] } else { self.lo[d] + i as f64 * self.h(d) })
            .collect()
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.multi(k).iter().any(|&i| i == 0 || i + 1 == self.points)
    }

    /// Full chart point of node k.
    pub fn chart_point(&self, k: usize) -> Vec<f64> {
        let mut p = self.base.clone();
        for (d, x) in self.node(k).into_iter().enumerate() {
            p[self.axes[d]] = x;
        }
        p
    }

    /// Builds nodal data from a coefficient oracle at chart points.
    pub fn from_fn(
        lo: Vec<f64>,
        hi: Vec<f64>,
        points: usize,
        exponent: f64,
        axes: Vec<usize>,
        base: Vec<f64>,
        mut coeffs: impl FnMut(&[f64]) -> Result<(DMatrix<f64>, Vec<f64>, f64), SpecError>,
        mut eta: impl FnMut(&[f64]) -> Result<f64, SpecError>,
    ) -> Result<GridProblem, GridError> {
        let d = lo.len();
        if !(2..=3).contains(&d) || hi.len() != d || axes.len() != d {
            return Err(GridError::Setup("grids are 2D or 3D".into()));
        }
        if points < 9 {
            return Err(GridError::Setup("at least 9 points per axis".into()));
        }
        let mut prob = GridProblem {
            lo,
            hi,
            points,
            exponent,
            a: Vec::new(),
            b: Vec::new(),
            f: Vec::new(),
            eta: Vec::new(),
            axes,
            base,
        };
        for k in 0..prob.len() {
            let p = prob.chart_point(k);
            let (a, b, f) = coeffs(&p)?;
            let e = if prob.is_boundary(k) { eta(&p)? } else { 0.0 };
            if prob.is_boundary(k) && !(e > 0.0) {
                return Err(GridError::Setup(format!("boundary data must be positive, got {e} at {p:?}")));
            }
            prob.a.push(a);
            prob.b.push(b);
            prob.f.push(f);
            prob.eta.push(e);
        }
        Ok(prob)
    }

    /// Euclidean Laplacian on a box with coefficient f and boundary data η.
    pub fn flat(
        lo: Vec<f64>,
        hi: Vec<f64>,
        points: usize,
        exponent: f64,
        f: impl Fn(&[f64]) -> f64,
        eta: impl Fn(&[f64]) -> f64,
    ) -> Result<GridProblem, GridError> {
        let d = lo.len();
        GridProblem::from_fn(
            lo,
            hi,
            points,
            exponent,
            (0..d).collect(),
            vec![0.0; d],
            |p| Ok((DMatrix::identity(d, d), vec![0.0; d], f(p))),
            |p| Ok(eta(p)),
        )
    }

    /// Δ_g and f = a_1 + Σ(s^{β1}/det S)(P_β − φ_β) of a spec on a sub-box spanned by
    /// `axes`; remaining coordinates stay at `base`. Exponent (n+2)/(n−2).
    pub fn from_geometry(
        geom: &Geometry,
        data: &ConformalData,
        axes: &[usize],
        base: &[f64],
        points: usize,
        eta: &Expr,
    ) -> Result<GridProblem, GridError> {
        let n = geom.n();
        if n < 3 {
            return Err(GridError::Setup("the Yamabe-type equation needs n ≥ 3".into()));
        }
        let lap = laplacian(geom)?;
        let dom = geom.chart().domain();
        let lo = axes.iter().map(|&i| dom[i].0).collect();
        let hi = axes.iter().map(|&i| dom[i].1).collect();
        let chart = geom.chart();
        GridProblem::from_fn(
            lo,
            hi,
            points,
            (n as f64 + 2.0) / (n as f64 - 2.0),
            axes.to_vec(),
            base.to_vec(),
            |p| {
                let v = lap.values_at(p)?;
                let a = DMatrix::from_fn(axes.len(), axes.len(), |i, j| v.a[(axes[i], axes[j])]);
                let b = axes.iter().map(|&i| v.b[i]).collect();
                Ok((a, b, yamabe_coefficient(geom, data, p)?))
            },
            |p| Ok(evaluate(eta, &chart.binding(p))?),
        )
    }
}

/// Band matrix with equal lower and upper bandwidth, LU-factorized in place
/// without pivoting (the Newton matrices here are diagonally dominant).
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Banded {
        Banded {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (2 * self.bw + 1) + j + self.bw - i]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (2 * self.bw + 1) + j + self.bw - i]
    }

    fn factor(&mut self) {
        for k in 0..self.n {
            let piv = self.get(k, k);
            let end = (k + self.bw + 1).min(self.n);
            for i in k + 1..end {
                let l = self.get(i, k) / piv;
                *self.at(i, k) = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..end {
                    let v = self.get(k, j);
                    *self.at(i, j) -= l * v;
                }
            }
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        for i in 0..self.n {
            let start = i.saturating_sub(self.bw);
            let mut s = rhs[i];
            for j in start..i {
                s -= self.get(i, j) * rhs[j];
            }
            rhs[i] = s;
        }
        for i in (0..self.n).rev() {
            let end = (i + self.bw + 1).min(self.n);
            let mut s = rhs[i];
            for j in i + 1..end {
                s -= self.get(i, j) * rhs[j];
            }
            rhs[i] = s / self.get(i, i);
        }
    }
}

/// Grid solution of the Yamabe-type problem.
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
    pub w: Vec<f64>,
    pub iterations: usize,
    /// Max nodal residual at exit.
    pub residual: f64,
    /// Constant lower and upper solutions (ε, C).
    pub bracket: (f64, f64),
    pub axes: Vec<usize>,
    pub base: Vec<f64>,
}

/// Weights for the value and first two derivatives at z of the interpolant through nodes x.
fn fornberg(z: f64, x: &[f64]) -> Vec<[f64; 3]> {
    let n = x.len();
    let mut c = vec![[0.0; 3]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(2);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// Stencil of the discrete operator at an interior node: (neighbor node, weight).
fn stencil(prob: &GridProblem, k: usize) -> Vec<(usize, f64)> {
    let d = prob.dims();
    let a = &prob.a[k];
    let b = &prob.b[k];
    let mut st = vec![(k, 0.0)];
    for i in 0..d {
        let (s, h) = (prob.stride(i), prob.h(i));
        st[0].1 -= 2.0 * a[(i, i)] / (h * h);
        st.push((k + s, a[(i, i)] / (h * h) + b[i] / (2.0 * h)));
        st.push((k - s, a[(i, i)] / (h * h) - b[i] / (2.0 * h)));
        for j in i + 1..d {
            let c = 2.0 * a[(i, j)];
            if c == 0.0 {
                continue;
            }
            let (t, g) = (prob.stride(j), prob.h(j));
            let w = c / (4.0 * h * g);
            st.push((k + s + t, w));
            st.push((k - s - t, w));
            st.push((k + s - t, -w));
            st.push((k - s + t, -w));
        }
    }
    st
}

fn residuals(prob: &GridProblem, stencils: &[Option<Vec<(usize, f64)>>], w: &[f64], lambda: f64) -> Vec<f64> {
    stencils
        .iter()
        .enumerate()
        .map(|(k, st)| match st {
            None => 0.0,
            Some(st) => st.iter().map(|&(m, c)| c * w[m]).sum::<f64>() + prob.f[k] * w[k] - lambda * w[k].powf(prob.exponent),
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton with a banded LU; stops when the max nodal residual is below 1e-10.
pub fn yamabe_grid_solve(prob: &GridProblem, lambda: f64) -> Result<GridSolution, GridError> {
    let min_f = prob.f.iter().copied().fold(f64::INFINITY, f64::min);
    let max_f = prob.f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 0.0) || !(min_f > 0.0) {
        return Err(GridError::NotCase1 { min_f, lambda });
    }
    let boundary: Vec<f64> = (0..prob.len()).filter(|&k| prob.is_boundary(k)).map(|k| prob.eta[k]).collect();
    let (eta_min, eta_max) = (
        boundary.iter().copied().fold(f64::INFINITY, f64::min),
        boundary.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let q = 1.0 / (prob.exponent - 1.0);
    let lower = eta_min.min((min_f / lambda).powf(q));
    let upper = eta_max.max((max_f / lambda).powf(q));

    let stencils: Vec<Option<Vec<(usize, f64)>>> =
        (0..prob.len()).map(|k| if prob.is_boundary(k) { None } else { Some(stencil(prob, k)) }).collect();
    let interior: Vec<usize> = (0..prob.len()).filter(|&k| !prob.is_boundary(k)).collect();
    let mut unknown = vec![usize::MAX; prob.len()];
    for (u, &k) in interior.iter().enumerate() {
        unknown[k] = u;
    }
    let m = prob.points - 2;
    let bw = if prob.dims() == 2 { m + 1 } else { m * m + m + 1 };

    let mut w: Vec<f64> = (0..prob.len()).map(|k| if prob.is_boundary(k) { prob.eta[k] } else { 0.5 * (lower + upper) }).collect();
    let mut res = residuals(prob, &stencils, &w, lambda);
    let mut r = max_abs(&res);
    let mut iterations = 0;
    while r >= 1e-10 {
        if iterations == 200 {
            return Err(GridError::NoConvergence { iterations, residual: r });
        }
        iterations += 1;
        let mut jac = Banded::new(interior.len(), bw);
        for (u, &k) in interior.iter().enumerate() {
            for &(nb, c) in stencils[k].as_ref().expect("interior") {
                if unknown[nb] != usize::MAX {
                    *jac.at(u, unknown[nb]) += c;
                }
            }
            *jac.at(u, u) += prob.f[k] - lambda * prob.exponent * w[k].powf(prob.exponent - 1.0);
        }
        jac.factor();
        let mut delta: Vec<f64> = interior.iter().map(|&k| -res[k]).collect();
        jac.solve(&mut delta);
        let mut t = 1.0;
        loop {
            let mut trial = w.clone();
            for (u, &k) in interior.iter().enumerate() {
                trial[k] += t * delta[u];
            }
            if trial.iter().all(|&v| v > 0.0) {
                let tr = residuals(prob, &stencils, &trial, lambda);
                let rt = max_abs(&tr);
                if rt < (1.0 - 1e-4 * t) * r || rt < 1e-10 {
                    w = trial;
                    res = tr;
                    r = rt;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-6 {
                return Err(GridError::NoConvergence { iterations, residual: r });
            }
        }
    }
    let (wmin, wmax) = (
        w.iter().copied().fold(f64::INFINITY, f64::min),
        w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let slack = 1e-9 * upper;
    if wmin < lower - slack || wmax > upper + slack {
        return Err(GridError::Bracket {
            lower,
            upper,
            min: wmin,
            max: wmax,
        });
    }
    Ok(GridSolution {
        lo: prob.lo.clone(),
        hi: prob.hi.clone(),
        points: prob.points,
        w,
        iterations,
        residual: r,
        bracket: (lower, upper),
        axes: prob.axes.clone(),
        base: prob.base.clone(),
    })
}

impl GridSolution {
    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    fn axis(&self, d: usize) -> Vec<f64> {
        let h = (self.hi[d] - self.lo[d]) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.hi[d] } else { self.lo[d] + i as f64 * h })
            .collect()
    }

    /// Value at grid index (i, j[, k]).
    pub fn at(&self, idx: &[usize]) -> f64 {
        let mut k = 0;
        for (d, &i) in idx.iter().enumerate() {
            k += i * self.points.pow(d as u32);
        }
        self.w[k]
    }

    /// Local tensor-product degree-5 Lagrange interpolant (2D grids): value, gradient,
    /// Hessian in the two grid coordinates.
    pub fn interpolate(&self, x: &[f64]) -> Result<(f64, [f64; 2], [[f64; 2]; 2]), GridError> {
        if self.dims() != 2 {
            return Err(GridError::Setup("interpolation is implemented for 2D grids".into()));
        }
        let window = |d: usize| {
            let ax = self.axis(d);
            let h = (self.hi[d] - self.lo[d]) / (self.points - 1) as f64;
            let cell = ((x[d] - self.lo[d]) / h).floor() as isize - 2;
            let start = cell.clamp(0, self.points as isize - 6) as usize;
            (start, fornberg(x[d], &ax[start..start + 6]))
        };
        let ((i0, wx), (j0, wy)) = (window(0), window(1));
        let mut out = [[0.0; 3]; 3];
        for (a, cx) in wx.iter().enumerate() {
            for (b, cy) in wy.iter().enumerate() {
                let v = self.at(&[i0 + a, j0 + b]);
                for p in 0..3 {
                    for q in 0..3 - p {
                        out[p][q] += cx[p] * cy[q] * v;
                    }
                }
            }
        }
        Ok((out[0][0], [out[1][0], out[0][1]], [[out[2][0], out[1][1]], [out[1][1], out[0][2]]]))
    }

    /// The interpolant as a second-order jet over all n chart coordinates
    /// (constant along coordinates off the grid).
    pub fn field_jet(&self, p: &[f64]) -> Result<FieldJet, GridError> {
        let sub: Vec<f64> = self.axes.iter().map(|&i| p[i]).collect();
        let (v, g, h) = self.interpolate(&sub)?;
        let mut j = FieldJet::constant(p.len(), v);
        for a in 0..2 {
            j.grad[self.axes[a]] = g[a];
            for b in 0..2 {
                j.hess[(self.axes[a], self.axes[b])] = h[a][b];
            }
        }
        Ok(j)
    }

    /// Richardson extrapolation (4 w_fine − w_coarse)/3 on this grid's nodes, where
    /// `fine` halves the spacing on the same box.
    pub fn extrapolate(&self, fine: &GridSolution) -> Result<GridSolution, GridError> {
        if fine.points != 2 * self.points - 1 || fine.lo != self.lo || fine.hi != self.hi {
            return Err(GridError::Setup("the fine grid must halve the spacing of the coarse one".into()));
        }
        let d = self.dims();
        let mut out = self.clone();
        for k in 0..self.w.len() {
            let mut r = k;
            let mut kf = 0;
            for a in 0..d {
                kf += 2 * (r % self.points) * fine.points.pow(a as u32);
                r /= self.points;
            }
            out.w[k] = (4.0 * fine.w[kf] - self.w[k]) / 3.0;
        }
        out.residual = fine.residual;
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(out);
        let d = self.dims();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{}", i + 1)).collect();
        header.push("w".into());
        wr.write_record(&header)?;
        let axes: Vec<Vec<f64>> = (0..d).map(|i| self.axis(i)).collect();
        for k in 0..self.w.len() {
            let mut r = k;
            let mut row = Vec::with_capacity(d + 1);
            for ax in &axes {
                row.push(ax[r % self.points].to_string());
                r /= self.points;
            }
            row.push(self.w[k].to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::stackel::{Chart, PainleveSpec};

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn liouville() -> Geometry {
        let chart = Chart::new(
            vec!["x1".into(), "x2".into()],
            vec![vec!["x1".into()], vec!["x2".into()]],
            vec![(-0.8, 0.8), (-0.8, 0.8)],
        )
        .unwrap();
        let spec = PainleveSpec::new(
            "liouville",
            chart,
            vec![vec![e("x1^2 + 1"), e("-1")], vec![e("x2^2 + 1"), e("1")]],
            vec![vec![vec![e("1")]], vec![vec![e("1")]]],
        )
        .unwrap();
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
    fn r_factor_eliminates_first_order_terms() {
        let g = liouville();
        for p in g.chart().sample(16, 0) {
            assert!(elim_residual(&g, &p).unwrap() < 1e-10);
            let v = g.stackel_eval(&p).unwrap();
            let want = (v.cof[(0, 0)] * v.cof[(1, 0)]).powf(0.25);
            assert!((r_factor(&g, &p).unwrap() - want).abs() < 1e-14);
        }
        let w = warped();
        for p in w.chart().sample(16, 1) {
            assert!(elim_residual(&w, &p).unwrap() < 1e-10);
        }
    }

    #[test]
    fn p_beta_matches_laplacian_of_r() {
        let g = warped();
        let r = r_factor_expr(&g);
        let lap = laplacian(&g).unwrap();
        for p in g.chart().sample(8, 2) {
            let v = g.stackel_eval(&p).unwrap();
            let rv = evaluate(&r, &g.chart().binding(&p)).unwrap();
            let lhs = lap.apply_at(&r, &p).unwrap() / rv;
            let rhs: f64 = (0..2).map(|b| -v.cof[(b, 0)] / v.det * p_beta(&g, b, &p).unwrap()).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} {rhs}");
            for b in 0..2 {
                assert!(p_beta_cross_derivative(&g, b, &p).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn conformal_law_holds() {
        let g = warped();
        let c = e("1 + 0.1*x1^2 + 0.05*x2*x3");
        let u = e("sin(x1)*x2 + x3^2");
        for p in g.chart().sample(8, 3) {
            assert!(conformal_law_residual(&g, &c, &u, &p).unwrap() < 1e-9);
        }
        assert!(conformal_law_residual(&g, &e("1"), &u, &[0.1, 0.2, 0.3]).unwrap() < 1e-13);
    }

    #[test]
    fn constant_solution_and_bracket() {
        let prob = GridProblem::flat(vec![0.0, 0.0], vec![1.0, 1.0], 17, 5.0, |_| 1.0, |_| 1.0).unwrap();
        let sol = yamabe_grid_solve(&prob, 1.0).unwrap();
        assert!(sol.w.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let prob = GridProblem::flat(vec![0.0, 0.0], vec![1.0, 1.0], 33, 5.0, |_| 2.0, |_| 1.0).unwrap();
        let sol = yamabe_grid_solve(&prob, 1.0).unwrap();
        assert!(sol.residual < 1e-10 && sol.bracket.0 == 1.0);
        assert!((sol.bracket.1 - 2f64.powf(0.25)).abs() < 1e-15);
        assert!(sol.w.iter().all(|&v| v >= 1.0 - 1e-12 && v <= sol.bracket.1 + 1e-12));
    }

    #[test]
    fn interpolant_reproduces_quintics() {
        let prob = GridProblem::flat(vec![0.0, -1.0], vec![1.0, 1.0], 9, 5.0, |_| 1.0, |_| 1.0).unwrap();
        let mut sol = yamabe_grid_solve(&prob, 1.0).unwrap();
        for k in 0..sol.w.len() {
            let q = prob.node(k);
            sol.w[k] = q[0].powi(5) * q[1] + q[1].powi(3);
        }
        let (v, g, h) = sol.interpolate(&[0.37, 0.81]).unwrap();
        let (x, y) = (0.37f64, 0.81f64);
        assert!((v - (x.powi(5) * y + y.powi(3))).abs() < 1e-12);
        assert!((g[0] - 5.0 * x.powi(4) * y).abs() < 1e-10 && (g[1] - (x.powi(5) + 3.0 * y * y)).abs() < 1e-10);
        assert!((h[0][0] - 20.0 * x.powi(3) * y).abs() < 1e-9);
        assert!((h[0][1] - 5.0 * x.powi(4)).abs() < 1e-9 && (h[1][1] - 6.0 * y).abs() < 1e-9);
    }

    #[test]
    fn three_dimensional_grid() {
        let prob = GridProblem::flat(vec![0.0; 3], vec![1.0; 3], 11, 5.0, |_| 2.0, |p| 1.0 + 0.2 * p[0]).unwrap();
        let sol = yamabe_grid_solve(&prob, 1.0).unwrap();
        assert!(sol.residual < 1e-10 && sol.w.iter().all(|&v| v > 0.0));
    }

    fn euclid3() -> Geometry {
        let chart = Chart::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
            vec![vec!["x1".into()], vec!["x2".into(), "x3".into()]],
            vec![(-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5)],
        )
        .unwrap();
        let spec = PainleveSpec::new(
            "euclidean3",
            chart,
            vec![vec![e("1"), e("-1")], vec![e("0"), e("1")]],
            vec![vec![vec![e("1")]], vec![vec![e("1"), e("0")], vec![e("0"), e("1")]]],
        )
        .unwrap();
        Geometry::new(spec).unwrap()
    }

    #[test]
    fn flat_law_with_exponential_factor() {
        let g = euclid3();
        let c = e("exp(x1/4)");
        for p in g.chart().sample(8, 4) {
            assert!(conformal_law_residual(&g, &c, &e("x1*x2"), &p).unwrap() < 1e-9);
        }
    }

    #[test]
    fn flat_negative_lambda_choice() {
        let g = euclid3();
        let data = ConformalData {
            c: e("1"),
            lambda: -1.0,
            a1: 0.5,
            phi: vec![e("1"), e("0.5")],
        };
        for p in g.chart().sample(8, 5) {
            let r = rsep_residuals(&g, &data, &e("1"), &p).unwrap();
            assert!(r.eqnc < 1e-12, "{}", r.eqnc);
        }
    }

    #[test]
    fn richardson_and_monotone() {
        let solve = |m: usize, lift: f64| {
            let prob = GridProblem::flat(vec![0.0, 0.0], vec![1.0, 1.0], m, 5.0, |_| 2.0, |p| lift + 0.5 * p[0] * p[1]).unwrap();
            yamabe_grid_solve(&prob, 1.0).unwrap()
        };
        let (a, b, c) = (solve(17, 1.0), solve(33, 1.0), solve(65, 1.0));
        let mut d1 = 0.0f64;
        let mut d2 = 0.0f64;
        for i in 0..17 {
            for j in 0..17 {
                let (va, vb, vc) = (a.at(&[i, j]), b.at(&[2 * i, 2 * j]), c.at(&[4 * i, 4 * j]));
                d1 = d1.max((va - vb).abs());
                d2 = d2.max((vb - vc).abs());
            }
        }
        let ratio = d1 / d2;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
        let high = solve(17, 1.2);
        assert!(a.w.iter().zip(&high.w).all(|(x, y)| y >= x));
    }

    #[test]
    fn end_to_end_pipeline() {
        let g = euclid3();
        let data = ConformalData {
            c: e("1"),
            lambda: 1.0,
            a1: 2.0,
            phi: vec![e("0"), e("0")],
        };
        let eta = e("1 + 0.3*x1*x2 + 0.1*x1");
        let solve = |m| yamabe_grid_solve(&GridProblem::from_geometry(&g, &data, &[0, 1], &[0.0; 3], m, &eta).unwrap(), 1.0).unwrap();
        let sol = solve(33).extrapolate(&solve(65)).unwrap();
        let k3 = (2.0f64 - 1.0 - 0.64).sqrt();
        let w = e(&format!("cos(x1)*cos(0.8*x2)*cos({k3}*x3)"));
        let mut worst = 0.0f64;
        for p in g.chart().sample_interior(16, 6, 0.1) {
            let cj = sol.field_jet(&p).unwrap();
            worst = worst.max(conformal_helmholtz_residual(&g, &cj, &w, 1.0, &p).unwrap());
        }
        assert!(worst < 2e-4, "{worst}");
    }
}
