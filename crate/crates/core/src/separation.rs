//! Separated solutions of the Hamilton–Jacobi and Helmholtz equations built
//! block by block, and the checks that the pieces fit together.

use std::io::Write;

use nalgebra::DMatrix;

use crate::expr::{EvalError, Expr, SymbolicJets};
use crate::ode::{Dp54, OdeError};
use crate::operators::{gamma_lower, laplacian, symmetry_operator, OperatorValues};
use crate::stackel::{Geometry, SpecError};

/// Default number of grid intervals for sampled block solutions.
pub const GRID_INTERVALS: usize = 512;

/// a_1, …, a_r (a_1 is the energy or the Helmholtz eigenvalue λ).
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationConstants(pub Vec<f64>);

impl SeparationConstants {
    pub fn with(&self, k: usize, delta: f64) -> SeparationConstants {
        let mut a = self.0.clone();
        a[k] += delta;
        SeparationConstants(a)
    }
}

/// Cubic spline with not-a-knot end conditions.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    /// Needs at least four strictly increasing nodes.
    pub fn not_a_knot(x: &[f64], y: &[f64]) -> CubicSpline {
        let n = x.len() - 1;
        assert!(n >= 3 && y.len() == x.len(), "not-a-knot spline needs ≥ 4 nodes");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        // unknowns M_1..M_{n-1}; M_0 and M_n eliminated through the third-derivative conditions
        let k = n - 1;
        let mut lo = vec![0.0; k];
        let mut di = vec![0.0; k];
        let mut up = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for r in 0..k {
            let i = r + 1;
            lo[r] = h[i - 1];
            di[r] = 2.0 * (h[i - 1] + h[i]);
            up[r] = h[i];
            rhs[r] = 6.0 * (d[i] - d[i - 1]);
        }
        // M_0 = M_1 (1 + h0/h1) − M_2 h0/h1
        let q0 = h[0] / h[1];
        di[0] += h[0] * (1.0 + q0);
        if k > 1 {
            up[0] -= h[0] * q0;
        }
        // M_n = M_{n-1}(1 + h_{n-1}/h_{n-2}) − M_{n-2} h_{n-1}/h_{n-2}
        let qn = h[n - 1] / h[n - 2];
        di[k - 1] += h[n - 1] * (1.0 + qn);
        if k > 1 {
            lo[k - 1] -= h[n - 1] * qn;
        }
        let inner = solve_tridiagonal(&lo, &di, &up, &rhs);
        let mut m = Vec::with_capacity(n + 1);
        m.push(inner[0] * (1.0 + q0) - if k > 1 { inner[1] * q0 } else { inner[0] * q0 });
        m.extend_from_slice(&inner);
        let last = inner[k - 1] * (1.0 + qn) - if k > 1 { inner[k - 2] * qn } else { inner[k - 1] * qn };
        m.push(last);
        CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().expect("nonempty"))
    }

    /// Value, first and second derivative.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.x.len() - 1;
        let i = self.x.partition_point(|&v| v <= t).saturating_sub(1).min(n - 1);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - t, t - x0);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let v = m0 * a.powi(3) / (6.0 * h) + m1 * b.powi(3) / (6.0 * h) + (y0 / h - m0 * h / 6.0) * a + (y1 / h - m1 * h / 6.0) * b;
        let d1 = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - (y0 / h - m0 * h / 6.0) + (y1 / h - m1 * h / 6.0);
        let d2 = (m0 * a + m1 * b) / h;
        (v, d1, d2)
    }
}

fn solve_tridiagonal(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let k = di.len();
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    c[0] = up[0] / di[0];
    d[0] = rhs[0] / di[0];
    for i in 1..k {
        let den = di[i] - lo[i] * c[i - 1];
        c[i] = up[i] / den;
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; k];
    x[k - 1] = d[k - 1];
    for i in (0..k - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Grid samples of a one-variable block function and its first two derivatives.
#[derive(Clone, Debug)]
pub struct SampledBlock {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    splines: [CubicSpline; 3],
}

impl SampledBlock {
    pub fn new(x: Vec<f64>, u: Vec<f64>, du: Vec<f64>, d2u: Vec<f64>) -> SampledBlock {
        let splines = [
            CubicSpline::not_a_knot(&x, &u),
            CubicSpline::not_a_knot(&x, &du),
            CubicSpline::not_a_knot(&x, &d2u),
        ];
        SampledBlock { x, u, du, d2u, splines }
    }

    /// u, u′, u″ at t, each from its own spline.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        (self.splines[0].eval(t).0, self.splines[1].eval(t).0, self.splines[2].eval(t).0)
    }

    /// The spline through the u samples alone.
    pub fn value_spline(&self) -> &CubicSpline {
        &self.splines[0]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "u", "du", "d2u"])?;
        for i in 0..self.x.len() {
            w.serialize((self.x[i], self.u[i], self.du[i], self.d2u[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum BlockRepr {
    Sampled(SampledBlock),
    Closed { expr: Expr, jets: SymbolicJets },
}

/// Value, gradient and Hessian in the block's own variables.
#[derive(Clone, Debug)]
pub struct BlockJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct BlockSolution {
    pub beta: usize,
    /// Indices of the block's variables in the chart.
    pub vars: Vec<usize>,
    pub repr: BlockRepr,
    /// First grid point where u changes sign, if any.
    pub zero_crossing: Option<f64>,
}

impl BlockSolution {
    pub fn closed(geom: &Geometry, beta: usize, expr: Expr) -> Result<BlockSolution, SpecError> {
        let chart = geom.chart();
        let names = chart.block_var_names(beta);
        if let Some(v) = expr.free_variables().iter().find(|v| !names.contains(v)) {
            return Err(SpecError::Invalid(format!("block {} solution depends on {v}", beta + 1)));
        }
        let jets = SymbolicJets::new(std::slice::from_ref(&expr), &names, 2)?;
        Ok(BlockSolution {
            beta,
            vars: chart.blocks()[beta].clone(),
            repr: BlockRepr::Closed { expr, jets },
            zero_crossing: None,
        })
    }

    pub fn jet(&self, xb: &[f64]) -> Result<BlockJet, SpecError> {
        match &self.repr {
            BlockRepr::Closed { jets, .. } => {
                let t = jets.eval(xb)?.remove(0);
                let l = xb.len();
                Ok(BlockJet {
                    value: t.value(),
                    grad: (0..l).map(|i| t.partial(&[i])).collect(),
                    hess: DMatrix::from_fn(l, l, |i, j| t.partial(&[i, j])),
                })
            }
            BlockRepr::Sampled(s) => {
                let (lo, hi) = s.value_spline().domain();
                let t = xb[0];
                let slack = 1e-12 * (hi - lo);
                if t < lo - slack || t > hi + slack {
                    return Err(SpecError::Precondition {
                        what: format!("point outside the block {} interval [{lo}, {hi}]", self.beta + 1),
                        point: xb.to_vec(),
                    });
                }
                let (u, du, d2u) = s.eval(t);
                Ok(BlockJet {
                    value: u,
                    grad: vec![du],
                    hess: DMatrix::from_element(1, 1, d2u),
                })
            }
        }
    }
}

/// Value, gradient and Hessian of an assembled function on the chart.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

impl FieldJet {
    pub fn constant(n: usize, value: f64) -> FieldJet {
        FieldJet {
            value,
            grad: vec![0.0; n],
            hess: DMatrix::zeros(n, n),
        }
    }

    /// From a Taylor jet of order ≥ 2.
    pub fn from_taylor(t: &crate::expr::Taylor, n: usize) -> FieldJet {
        FieldJet {
            value: t.value(),
            grad: (0..n).map(|i| t.partial(&[i])).collect(),
            hess: DMatrix::from_fn(n, n, |i, j| t.partial(&[i, j])),
        }
    }

    pub fn from_expr(e: &Expr, vars: &[String], p: &[f64]) -> Result<FieldJet, EvalError> {
        let t = SymbolicJets::new(std::slice::from_ref(e), vars, 2)?.eval(p)?.remove(0);
        Ok(FieldJet::from_taylor(&t, vars.len()))
    }

    pub fn mul(&self, o: &FieldJet) -> FieldJet {
        let n = self.grad.len();
        FieldJet {
            value: self.value * o.value,
            grad: (0..n).map(|i| self.grad[i] * o.value + self.value * o.grad[i]).collect(),
            hess: DMatrix::from_fn(n, n, |i, j| {
                self.hess[(i, j)] * o.value + self.grad[i] * o.grad[j] + self.grad[j] * o.grad[i] + self.value * o.hess[(i, j)]
            }),
        }
    }

    /// self^k for a positive value.
    pub fn powf(&self, k: f64) -> FieldJet {
        let n = self.grad.len();
        let v = self.value;
        let d1 = k * v.powf(k - 1.0);
        let d2 = k * (k - 1.0) * v.powf(k - 2.0);
        FieldJet {
            value: v.powf(k),
            grad: self.grad.iter().map(|g| d1 * g).collect(),
            hess: DMatrix::from_fn(n, n, |i, j| d1 * self.hess[(i, j)] + d2 * self.grad[i] * self.grad[j]),
        }
    }

    pub fn apply(&self, op: &OperatorValues) -> f64 {
        let n = self.grad.len();
        let mut s = op.c * self.value;
        for i in 0..n {
            s += op.b[i] * self.grad[i];
            for j in 0..n {
                s += op.a[(i, j)] * self.hess[(i, j)];
            }
        }
        s
    }
}

/// u = ∏ u_β.
#[derive(Clone, Debug)]
pub struct ProductSolution {
    pub n: usize,
    pub blocks: Vec<BlockSolution>,
}

/// W = Σ W_α.
#[derive(Clone, Debug)]
pub struct SumSolution {
    pub n: usize,
    pub blocks: Vec<BlockSolution>,
}

fn block_jets(blocks: &[BlockSolution], x: &[f64]) -> Result<Vec<BlockJet>, SpecError> {
    blocks
        .iter()
        .map(|b| {
            let xb: Vec<f64> = b.vars.iter().map(|&i| x[i]).collect();
            b.jet(&xb)
        })
        .collect()
}

pub fn product_assemble(geom: &Geometry, mut blocks: Vec<BlockSolution>) -> Result<ProductSolution, SpecError> {
    blocks.sort_by_key(|b| b.beta);
    if blocks.len() != geom.r() || blocks.iter().enumerate().any(|(k, b)| b.beta != k) {
        return Err(SpecError::Invalid("need exactly one block solution per group".into()));
    }
    Ok(ProductSolution { n: geom.n(), blocks })
}

pub fn sum_assemble(geom: &Geometry, mut blocks: Vec<BlockSolution>) -> Result<SumSolution, SpecError> {
    blocks.sort_by_key(|b| b.beta);
    if blocks.len() != geom.r() || blocks.iter().enumerate().any(|(k, b)| b.beta != k) {
        return Err(SpecError::Invalid("need exactly one block solution per group".into()));
    }
    Ok(SumSolution { n: geom.n(), blocks })
}

impl ProductSolution {
    pub fn jet(&self, x: &[f64]) -> Result<FieldJet, SpecError> {
        let jets = block_jets(&self.blocks, x)?;
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        let value: f64 = jets.iter().map(|j| j.value).product();
        // product of the other blocks' values, without dividing by a possibly zero factor
        let others = |skip: &[usize]| -> f64 {
            jets.iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, j)| j.value)
                .product()
        };
        for (a, (ba, ja)) in self.blocks.iter().zip(&jets).enumerate() {
            let rest = others(&[a]);
            for (p, &i) in ba.vars.iter().enumerate() {
                grad[i] = ja.grad[p] * rest;
                for (q, &j) in ba.vars.iter().enumerate() {
                    hess[(i, j)] = ja.hess[(p, q)] * rest;
                }
            }
            for (b, (bb, jb)) in self.blocks.iter().zip(&jets).enumerate() {
                if b == a {
                    continue;
                }
                let rest2 = others(&[a, b]);
                for (p, &i) in ba.vars.iter().enumerate() {
                    for (q, &j) in bb.vars.iter().enumerate() {
                        hess[(i, j)] = ja.grad[p] * jb.grad[q] * rest2;
                    }
                }
            }
        }
        Ok(FieldJet { value, grad, hess })
    }
}

impl SumSolution {
    pub fn jet(&self, x: &[f64]) -> Result<FieldJet, SpecError> {
        let jets = block_jets(&self.blocks, x)?;
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        for (b, j) in self.blocks.iter().zip(&jets) {
            for (p, &i) in b.vars.iter().enumerate() {
                grad[i] = j.grad[p];
                for (q, &k) in b.vars.iter().enumerate() {
                    hess[(i, k)] = j.hess[(p, q)];
                }
            }
        }
        Ok(FieldJet {
            value: jets.iter().map(|j| j.value).sum(),
            grad,
            hess,
        })
    }
}

/// Evaluates one-variable block data (G_β, G_β′, s_{β·}) along a coordinate line.
struct LineData<'a> {
    geom: &'a Geometry,
    beta: usize,
    var: usize,
    base: Vec<f64>,
    g_jets: SymbolicJets,
}

impl<'a> LineData<'a> {
    fn new(geom: &'a Geometry, beta: usize, base: &[f64]) -> Result<LineData<'a>, SpecError> {
        let chart = geom.chart();
        if chart.block_size(beta) != 1 {
            return Err(SpecError::Unsupported(format!(
                "group {} has {} variables; sampled block solutions need size 1",
                beta + 1,
                chart.block_size(beta)
            )));
        }
        let var = chart.blocks()[beta][0];
        let g = geom.spec().block_metrics[beta][0][0].clone();
        let g_jets = SymbolicJets::new(&[g], &[chart.vars()[var].clone()], 1)?;
        Ok(LineData {
            geom,
            beta,
            var,
            base: base.to_vec(),
            g_jets,
        })
    }

    fn point(&self, t: f64) -> Vec<f64> {
        let mut p = self.base.clone();
        p[self.var] = t;
        p
    }

    fn metric(&self, t: f64) -> Result<(f64, f64), EvalError> {
        let j = self.g_jets.eval(&[t])?.remove(0);
        Ok((j.value(), j.partial(&[0])))
    }

    /// Σ_α s_{βα} a_α.
    fn mu(&self, t: f64, a: &SeparationConstants) -> Result<f64, EvalError> {
        let v = self.geom.stackel_eval(&self.point(t))?;
        Ok((0..self.geom.r()).map(|k| v.s[(self.beta, k)] * a.0[k]).sum())
    }

    /// u″ from B_β u = μ u: u″ = (½G′/G + γ) u′ − G μ u.
    fn second(&self, t: f64, a: &SeparationConstants, u: f64, du: f64) -> Result<f64, SpecError> {
        let (g, dg) = self.metric(t)?;
        let gam = gamma_lower(self.geom, &self.point(t), self.var)?;
        Ok((0.5 * dg / g + gam) * du - g * self.mu(t, a)? * u)
    }
}

/// Solves B_β u = (Σ_α s_{βα} a_α) u on the block interval with u(x₀) = 1,
/// u′(x₀) = 0 at the left end; adaptive Dormand–Prince, tolerance 1e-10.
/// Other coordinates are held at `base` (irrelevant when Robertson holds).
pub fn helmholtz_block_ode(
    geom: &Geometry,
    beta: usize,
    a: &SeparationConstants,
    base: &[f64],
    intervals: usize,
) -> Result<BlockSolution, SpecError> {
    let line = LineData::new(geom, beta, base)?;
    let (lo, hi) = geom.chart().domain()[line.var];
    let h = (hi - lo) / intervals as f64;
    let x: Vec<f64> = (0..=intervals).map(|k| if k == intervals { hi } else { lo + k as f64 * h }).collect();
    let sol = Dp54::default()
        .solve(|t, y| Ok(vec![y[1], line.second(t, a, y[0], y[1])?]), &x, &[1.0, 0.0])
        .map_err(|e| match e {
            OdeError::Rhs(e) => e,
            other => SpecError::Precondition {
                what: format!("block ODE integration failed: {other:?}"),
                point: base.to_vec(),
            },
        })?;
    let u: Vec<f64> = sol.iter().map(|y| y[0]).collect();
    let du: Vec<f64> = sol.iter().map(|y| y[1]).collect();
    let d2u = x
        .iter()
        .zip(u.iter().zip(&du))
        .map(|(&t, (&v, &d))| line.second(t, a, v, d))
        .collect::<Result<Vec<f64>, SpecError>>()?;
    let zero_crossing = u.windows(2).position(|w| w[0] * w[1] <= 0.0).map(|k| x[k + 1]);
    Ok(BlockSolution {
        beta,
        vars: vec![line.var],
        repr: BlockRepr::Sampled(SampledBlock::new(x, u, du, d2u)),
        zero_crossing,
    })
}

/// W_α′ = √(G_α Σ_β s_{αβ} a_β), integrated by per-interval Simpson from the left end.
pub fn hj_block_quadrature(
    geom: &Geometry,
    alpha: usize,
    a: &SeparationConstants,
    base: &[f64],
    intervals: usize,
) -> Result<BlockSolution, SpecError> {
    let line = LineData::new(geom, alpha, base)?;
    let (lo, hi) = geom.chart().domain()[line.var];
    let h = (hi - lo) / intervals as f64;
    let slope = |t: f64| -> Result<f64, SpecError> {
        let rad = line.metric(t)?.0 * line.mu(t, a)?;
        if rad < 0.0 {
            return Err(SpecError::Precondition {
                what: format!("negative radicand {rad:e} for W_{} at x = {t}", alpha + 1),
                point: line.point(t),
            });
        }
        Ok(rad.sqrt())
    };
    let x: Vec<f64> = (0..=intervals).map(|k| lo + k as f64 * h).collect();
    let dw = x.iter().map(|&t| slope(t)).collect::<Result<Vec<f64>, SpecError>>()?;
    let mut w = vec![0.0; x.len()];
    for k in 0..intervals {
        let mid = slope(x[k] + 0.5 * h)?;
        w[k + 1] = w[k] + h / 6.0 * (dw[k] + 4.0 * mid + dw[k + 1]);
    }
    let d2w: Vec<f64> = {
        let s = CubicSpline::not_a_knot(&x, &dw);
        x.iter().map(|&t| s.eval(t).1).collect()
    };
    Ok(BlockSolution {
        beta: alpha,
        vars: vec![line.var],
        repr: BlockRepr::Sampled(SampledBlock::new(x, w, dw, d2w)),
        zero_crossing: None,
    })
}

/// |g^{ij}∂_iW ∂_jW − a_1|.
pub fn hj_residual(geom: &Geometry, w: &SumSolution, a: &SeparationConstants, x: &[f64]) -> Result<f64, SpecError> {
    let m = geom.metric_at(x, 0)?;
    let j = w.jet(x)?;
    let gv = nalgebra::DVector::from_column_slice(&j.grad);
    Ok(((gv.transpose() * &m.ginv * &gv)[(0, 0)] - a.0[0]).abs())
}

/// |Δ_g u + λ u|, the residual of −Δ_g u = λ u.
pub fn helmholtz_residual(geom: &Geometry, u: &ProductSolution, lambda: f64, points: &[Vec<f64>]) -> Result<f64, SpecError> {
    let lap = laplacian(geom)?;
    let mut worst = 0.0f64;
    for p in points {
        let j = u.jet(p)?;
        worst = worst.max((j.apply(&lap.values_at(p)?) + lambda * j.value).abs());
    }
    Ok(worst)
}

/// max |Δ_{K(α)} u + a_α u| over the points: the separated product is a joint
/// eigenfunction of the −Δ_{K(α)} with eigenvalues a_α.
pub fn eigen_residual(geom: &Geometry, alpha: usize, u: &ProductSolution, a: &SeparationConstants, points: &[Vec<f64>]) -> Result<f64, SpecError> {
    let op = symmetry_operator(geom, alpha)?;
    let mut worst = 0.0f64;
    for p in points {
        let j = u.jet(p)?;
        worst = worst.max((j.apply(&op.values_at(p)?) + a.0[alpha] * j.value).abs());
    }
    Ok(worst)
}

/// B_β u_β / u_β at a point of the block line, from sampled data.
pub fn block_eigenvalue(geom: &Geometry, block: &BlockSolution, base: &[f64], t: f64) -> Result<f64, SpecError> {
    let line = LineData::new(geom, block.beta, base)?;
    let j = block.jet(&[t])?;
    let (u, du, d2u) = (j.value, j.grad[0], j.hess[(0, 0)]);
    let (g, dg) = line.metric(t)?;
    let gam = gamma_lower(geom, &line.point(t), line.var)?;
    // −Δ_G u + γ^j u′ with Δ_G u = u″/G − ½G′u′/G²
    Ok((-(d2u / g - 0.5 * dg * du / (g * g)) + gam / g * du) / u)
}

#[derive(Clone, Debug)]
pub struct RankResult {
    /// matrix[(β, α)] ≈ ∂_{a_α}(B_β u_β/u_β), or ∂_{a_γ}(G^α W_α′²) for the HJ variant.
    pub matrix: DMatrix<f64>,
    pub det: f64,
    /// S at the probe point.
    pub stackel: DMatrix<f64>,
    /// max |matrix − S| / max |S|.
    pub relative_error: f64,
    pub pass: bool,
}

fn rank_result(matrix: DMatrix<f64>, stackel: DMatrix<f64>) -> RankResult {
    let det = matrix.determinant();
    let scale = stackel.amax().max(1e-300);
    let relative_error = (&matrix - &stackel).amax() / scale;
    let hadamard: f64 = matrix.row_iter().map(|r| r.norm()).product();
    let pass = det.abs() > 1e-6 * hadamard;
    RankResult {
        matrix,
        det,
        stackel,
        relative_error,
        pass,
    }
}

/// Central differences in a of B_β u_β/u_β at the probe point, re-solving each block ODE.
pub fn rank_condition_helmholtz(
    geom: &Geometry,
    a: &SeparationConstants,
    delta: f64,
    probe: &[f64],
    intervals: usize,
) -> Result<RankResult, SpecError> {
    let r = geom.r();
    let mut m = DMatrix::zeros(r, r);
    for beta in 0..r {
        let t = probe[geom.chart().blocks()[beta][0]];
        for alpha in 0..r {
            let plus = helmholtz_block_ode(geom, beta, &a.with(alpha, delta), probe, intervals)?;
            let minus = helmholtz_block_ode(geom, beta, &a.with(alpha, -delta), probe, intervals)?;
            for b in [&plus, &minus] {
                if b.jet(&[t])?.value.abs() < 1e-8 {
                    return Err(SpecError::Precondition {
                        what: format!("u_{} vanishes at the probe point", beta + 1),
                        point: probe.to_vec(),
                    });
                }
            }
            m[(beta, alpha)] =
                (block_eigenvalue(geom, &plus, probe, t)? - block_eigenvalue(geom, &minus, probe, t)?) / (2.0 * delta);
        }
    }
    Ok(rank_result(m, geom.stackel_eval(probe)?.s))
}

/// ∂_{a_γ}(G^α W_α′²) = 2G^α W_α′ ∂_{a_γ}W_α′ by central differences of the quadrature slopes.
pub fn rank_condition_hj(geom: &Geometry, a: &SeparationConstants, delta: f64, probe: &[f64], intervals: usize) -> Result<RankResult, SpecError> {
    let r = geom.r();
    let mut m = DMatrix::zeros(r, r);
    for alpha in 0..r {
        let t = probe[geom.chart().blocks()[alpha][0]];
        let line = LineData::new(geom, alpha, probe)?;
        let g = line.metric(t)?.0;
        let w0 = hj_block_quadrature(geom, alpha, a, probe, intervals)?.jet(&[t])?.grad[0];
        for gamma in 0..r {
            let wp = hj_block_quadrature(geom, alpha, &a.with(gamma, delta), probe, intervals)?.jet(&[t])?.grad[0];
            let wm = hj_block_quadrature(geom, alpha, &a.with(gamma, -delta), probe, intervals)?.jet(&[t])?.grad[0];
            m[(alpha, gamma)] = 2.0 / g * w0 * (wp - wm) / (2.0 * delta);
        }
    }
    Ok(rank_result(m, geom.stackel_eval(probe)?.s))
}
