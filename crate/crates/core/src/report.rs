//! Named verification suites and the JSON report document.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conformal::{self, GridError, GridProblem};
use crate::curvature::{ricci_at, ricci_offblock_closed};
use crate::dynamics::{self, DynamicsError};
use crate::expr::{evaluate, parse, EvalError, Expr};
use crate::killing::{self, killing_tensors, sample_phase_points};
use crate::operators::{commutator_residual, laplacian, robertson_check, symmetry_operator};
use crate::separation::{self, SeparationConstants, GRID_INTERVALS};
use crate::specfile::spec_to_json;
use crate::stackel::{validate_spec_with, Geometry, PainleveSpec, SpecError};
use crate::tolerances::{Check, Tolerances};

pub const TOOL: &str = "painleve";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    pub max_residual: f64,
    pub tolerance: f64,
    pub worst_point: Option<Vec<f64>>,
    pub sample_count: usize,
    pub notes: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub spec_name: String,
    pub spec_hash: String,
    pub seed: u64,
    pub samples: usize,
    pub tol_scale: f64,
    pub checks: Vec<CheckResult>,
}

impl ReportDocument {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Validate,
    Robertson,
    Ricci,
    Killing,
    Commute,
    Separate,
    Conformal,
    Geodesic,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Validate,
        Suite::Robertson,
        Suite::Ricci,
        Suite::Killing,
        Suite::Commute,
        Suite::Separate,
        Suite::Conformal,
        Suite::Geodesic,
    ];
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol_scale: f64,
    /// Solve the Yamabe-type problem in the conformal suite.
    pub yamabe: bool,
    pub t_end: f64,
    pub dt: f64,
    /// CSV export of the trajectory or grid solution.
    pub csv: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            samples: 64,
            seed: 0,
            tol_scale: 1.0,
            yamabe: false,
            t_end: 10.0,
            dt: 1e-3,
            csv: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<SpecError> for RunError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Eval(_) => RunError::Input(format!("spec expression cannot be evaluated on the domain: {e}")),
            _ => RunError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        RunError::Input(format!("spec expression cannot be evaluated on the domain: {e}"))
    }
}

/// Running maximum of a residual with the point where it occurred.
struct Acc {
    max: f64,
    worst: Option<Vec<f64>>,
    count: usize,
}

impl Acc {
    fn new() -> Acc {
        Acc { max: 0.0, worst: None, count: 0 }
    }

    fn observe(&mut self, v: f64, p: &[f64]) {
        if self.max.is_nan() {
            return;
        }
        if !(v <= self.max) || self.worst.is_none() {
            self.max = if v.is_nan() { v } else { v.max(self.max) };
            self.worst = Some(p.to_vec());
        }
    }

    fn point(&mut self) {
        self.count += 1;
    }

    fn finish(self, name: &str, tolerance: f64, notes: impl Into<String>) -> CheckResult {
        let pass = self.max.is_finite() && self.max <= tolerance;
        CheckResult {
            name: name.into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            max_residual: if self.max.is_finite() { self.max } else { f64::MAX },
            tolerance,
            worst_point: self.worst,
            sample_count: self.count,
            notes: notes.into(),
        }
    }
}

fn skip(name: &str, tolerance: f64, notes: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        verdict: Verdict::Skip,
        max_residual: 0.0,
        tolerance,
        worst_point: None,
        sample_count: 0,
        notes: notes.into(),
    }
}

/// Eight generic smooth test functions over the chart variables.
pub fn default_test_functions(vars: &[String]) -> Vec<Expr> {
    let a = &vars[0];
    let b = &vars[1 % vars.len()];
    let z = &vars[vars.len() - 1];
    let sq: Vec<String> = vars.iter().map(|v| format!("{v}^2")).collect();
    let texts = [
        format!("{a}*{b}"),
        format!("sin({a}) + {b}^2"),
        format!("exp(0.3*{a})*cos({b})"),
        format!("{a}^3 - 2*{z}"),
        format!("cos({a}*{z})"),
        format!("log(2 + {})", sq.join(" + ")),
        format!("{a}*{b}*{z} + {z}^2"),
        format!("sin({a} + 0.5*{b} - {z})"),
    ];
    texts.iter().map(|t| parse(t).expect("built-in test function")).collect()
}

fn test_functions(spec: &PainleveSpec) -> Vec<Expr> {
    if spec.test_functions.is_empty() {
        default_test_functions(spec.chart.vars())
    } else {
        spec.test_functions.clone()
    }
}

/// Points for the expensive pointwise checks (operators, curvature, commutators).
fn few(opts: &RunOptions) -> usize {
    opts.samples.min(16)
}

pub fn spec_hash(spec: &PainleveSpec) -> String {
    let digest = Sha256::digest(spec_to_json(spec).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run(spec: &PainleveSpec, suites: &[Suite], opts: &RunOptions) -> Result<ReportDocument, RunError> {
    let geom = Geometry::new(spec.clone())?;
    let tol = Tolerances::scaled(opts.tol_scale);
    let mut checks = Vec::new();
    for &s in suites {
        checks.extend(match s {
            Suite::Validate => validate(&geom, &tol, opts)?,
            Suite::Robertson => robertson(&geom, &tol, opts)?,
            Suite::Ricci => ricci(&geom, &tol, opts)?,
            Suite::Killing => killing_suite(&geom, &tol, opts)?,
            Suite::Commute => commute(&geom, &tol, opts)?,
            Suite::Separate => separate(&geom, &tol, opts)?,
            Suite::Conformal => conformal_suite(&geom, &tol, opts)?,
            Suite::Geodesic => geodesic(&geom, &tol, opts)?,
        });
    }
    Ok(ReportDocument {
        schema: "v1".into(),
        tool: TOOL.into(),
        version: VERSION.into(),
        spec_name: spec.name.clone(),
        spec_hash: spec_hash(spec),
        seed: opts.seed,
        samples: opts.samples,
        tol_scale: opts.tol_scale,
        checks,
    })
}

fn validate(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let spec = geom.spec();
    let violations = validate_spec_with(spec, opts.samples, opts.seed);
    let definition = CheckResult {
        name: "validate.definition".into(),
        verdict: if violations.is_empty() { Verdict::Pass } else { Verdict::Fail },
        max_residual: violations.len() as f64,
        tolerance: 0.0,
        worst_point: violations.iter().find_map(|v| v.point.clone()),
        sample_count: opts.samples,
        notes: if violations.is_empty() {
            "no violations".into()
        } else {
            violations.iter().take(3).map(|v| v.message.clone()).collect::<Vec<_>>().join("; ")
        },
    };
    let m = geom.metric_exprs()?;
    let n = geom.n();
    let chart = geom.chart();
    let (mut det, mut inv, mut adj) = (Acc::new(), Acc::new(), Acc::new());
    for p in chart.sample(opts.samples, opts.seed) {
        let b = chart.binding(&p);
        let jet = geom.metric_at(&p, 0)?;
        let direct = jet.g.clone().determinant();
        let assembled = evaluate(&m.det_g, &b)?;
        det.observe((assembled - direct).abs() / direct.abs().max(1.0), &p);
        let ginv = DMatrix::from_fn(n, n, |i, j| evaluate(&m.ginv[i][j], &b).unwrap_or(f64::NAN));
        inv.observe((&jet.g * ginv - DMatrix::identity(n, n)).amax(), &p);
        let sv = geom.stackel_eval(&p)?;
        adj.observe(sv.adjugate_defect() / sv.det.abs().max(1.0), &p);
        det.point();
        inv.point();
        adj.point();
    }
    let t = tol.get(Check::MetricAlgebra);
    Ok(vec![
        definition,
        det.finish("metric.determinant", t, "relative |assembled det g − direct n×n determinant|"),
        inv.finish("metric.inverse", t, "max |g·g⁻¹ − I| with the assembled inverse"),
        adj.finish("stackel.adjugate", t, "max |S·cofᵀ − det S·I| / max(1, |det S|)"),
    ])
}

fn robertson(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let t = tol.get(Check::Robertson);
    let rep = robertson_check(geom, t, opts.samples, opts.seed)?;
    let worst = |f: &dyn Fn(&crate::operators::RobertsonEntry) -> f64| {
        rep.entries
            .iter()
            .max_by(|a, b| f(a).total_cmp(&f(b)))
            .map(|e| (format!("worst (alpha, beta, i, j) = ({}, {}, {}, {})", e.alpha + 1, e.beta + 1, e.i + 1, e.j + 1), Some(e.worst_point.clone())))
            .unwrap_or_else(|| ("no cross-group pairs".into(), None))
    };
    let mk = |name: &str, max: f64, f: &dyn Fn(&crate::operators::RobertsonEntry) -> f64, what: &str| {
        let (note, point) = worst(f);
        CheckResult {
            name: name.into(),
            verdict: if max <= t { Verdict::Pass } else { Verdict::Fail },
            max_residual: max,
            tolerance: t,
            worst_point: point,
            sample_count: rep.samples,
            notes: format!("{what}; {note}"),
        }
    };
    Ok(vec![
        mk("robertson.gamma", rep.max_gamma, &|e| e.gamma, "max |∂_j γ_i| over i, j in different groups"),
        mk("robertson.mixed_log", rep.max_mixed_log, &|e| e.mixed_log, "max |∂_j∂_k log((det S)^(n-2)/Π(s^γ1)^lγ)|"),
        mk("robertson.big_gamma", rep.max_big_gamma, &|e| e.big_gamma, "max |∂_j Γ_k| over different groups"),
    ])
}

fn offblock_pairs(geom: &Geometry) -> Vec<(usize, usize)> {
    let chart = geom.chart();
    let n = chart.n();
    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            if chart.block_of(j) != chart.block_of(k) {
                out.push((j, k));
            }
        }
    }
    out
}

fn ricci(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let chart = geom.chart();
    let pairs = offblock_pairs(geom);
    let perturbed: Vec<Vec<Vec<Expr>>> = geom
        .spec()
        .block_metrics
        .iter()
        .enumerate()
        .map(|(a, m)| {
            let v = Expr::var(&chart.block_var_names(a)[0]);
            let mut m = m.clone();
            m[0][0] = &m[0][0] + (Expr::one() + v.powi(2)) * 0.25;
            m
        })
        .collect();
    let other = Geometry::new(geom.spec().with_block_metrics(perturbed)?)?;
    let (mut agree, mut vanish, mut indep) = (Acc::new(), Acc::new(), Acc::new());
    for p in chart.sample(few(opts), opts.seed) {
        let ric = ricci_at(geom, &p)?.ricci;
        for &(j, k) in &pairs {
            let closed = ricci_offblock_closed(geom, &p, j, k)?;
            let generic = ric[(j, k)];
            agree.observe((closed - generic).abs() / generic.abs().max(1.0), &p);
            vanish.observe(generic.abs(), &p);
            indep.observe((ricci_offblock_closed(&other, &p, j, k)? - closed).abs(), &p);
        }
        agree.point();
        vanish.point();
        indep.point();
    }
    let t = tol.get(Check::Ricci);
    Ok(vec![
        agree.finish("ricci.closed_vs_generic", t, "closed form from Stäckel data against the generic Ricci tensor (relative)"),
        vanish.finish("ricci.offblock", t, "max |R_jk| for j, k in different groups"),
        indep.finish("ricci.block_independence", 0.0, "change of the closed form when every G_α is perturbed"),
    ])
}

fn killing_suite(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let chart = geom.chart();
    let set = killing_tensors(geom)?;
    let r = set.len();
    let mut poisson = Acc::new();
    for pp in sample_phase_points(chart, opts.samples, opts.seed) {
        let scale = 1.0 + pp.momentum_norm().powi(4);
        for a in 0..r {
            for b in a + 1..r {
                poisson.observe(killing::poisson_bracket(&set, a, b, &pp)?.abs() / scale, &pp.x);
            }
        }
        poisson.point();
    }
    let (mut eq, mut ke, mut lc, mut so) = (Acc::new(), Acc::new(), Acc::new(), Acc::new());
    let pairs = offblock_pairs(geom);
    for x in chart.sample(opts.samples, opts.seed) {
        let metric = geom.metric_at(&x, 1)?;
        for a in 0..r {
            eq.observe(killing::killing_equation_residual_with(&metric, set.get(a))?, &x);
        }
        for b in 0..r {
            for d in 0..r {
                for j in 0..chart.n() {
                    ke.observe(killing::killing_eisenhart_residual(geom, &x, b, d, j)?, &x);
                }
            }
        }
        for &(j, k) in &pairs {
            for c in 0..r {
                lc.observe(killing::levi_civita_residual(geom, &x, c, j, k)?, &x);
            }
            so.observe(killing::second_order_residual(geom, &x, j, k)?, &x);
        }
        for acc in [&mut eq, &mut ke, &mut lc, &mut so] {
            acc.point();
        }
    }
    let ts = tol.get(Check::StackelIdentities);
    Ok(vec![
        poisson.finish("killing.poisson", tol.get(Check::Poisson), "max |{K_α, K_β}| / (1 + |p|⁴)"),
        eq.finish("killing.equation", tol.get(Check::KillingEquation), "max |∇_(i K_jk)| over all K_α"),
        ke.finish("killing.eisenhart", ts, "Killing–Eisenhart equations for ρ_βγ = s^γβ/s^γ1"),
        lc.finish("killing.levi_civita", ts, "generalized Levi-Civita conditions"),
        so.finish("killing.second_order", ts, "max |∂_j∂_k(det S/(s^α1 s^β1))|"),
    ])
}

fn commute(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let chart = geom.chart();
    let r = geom.r();
    let lap = laplacian(geom)?;
    let sym: Vec<_> = (1..r).map(|a| symmetry_operator(geom, a)).collect::<Result<_, _>>()?;
    let fns = test_functions(geom.spec());
    let (mut with_lap, mut mutual) = (Acc::new(), Acc::new());
    for p in chart.sample(few(opts), opts.seed) {
        for u in &fns {
            for (a, ka) in sym.iter().enumerate() {
                let c = commutator_residual(ka, &lap, u, &p)?;
                with_lap.observe(c.residual / c.scale, &p);
                for kb in &sym[a + 1..] {
                    let c = commutator_residual(ka, kb, u, &p)?;
                    mutual.observe(c.residual / c.scale, &p);
                }
            }
        }
        with_lap.point();
        mutual.point();
    }
    let t = tol.get(Check::Commutator);
    let note = format!("{} test functions; residual / max(1, |AB u|, |BA u|)", fns.len());
    let mut out = vec![with_lap.finish("commute.laplacian", t, format!("[Δ_K(α), Δ_g] u, α ≥ 2; {note}"))];
    if r >= 3 {
        out.push(mutual.finish("commute.symmetry", t, format!("[Δ_K(α), Δ_K(β)] u, 2 ≤ α < β; {note}")));
    } else {
        out.push(skip("commute.symmetry", t, "needs r ≥ 3"));
    }
    Ok(out)
}

/// Separation constants with Σ_α s_{βα}(center) a_α = ½ for every β.
fn default_constants(geom: &Geometry) -> Result<SeparationConstants, RunError> {
    let s = geom.stackel_eval(&geom.chart().center())?.s;
    let r = s.nrows();
    let a = s
        .lu()
        .solve(&nalgebra::DVector::from_element(r, 0.5))
        .ok_or_else(|| RunError::Numerical("Stäckel matrix is singular at the box center".into()))?;
    Ok(SeparationConstants(a.iter().copied().collect()))
}

fn separate(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let names = [
        ("separation.helmholtz", Check::Separation),
        ("separation.eigen", Check::Separation),
        ("separation.rank_helmholtz", Check::RankMatrix),
        ("separation.hj", Check::Separation),
        ("separation.rank_hj", Check::RankMatrix),
    ];
    let chart = geom.chart();
    if chart.block_sizes().iter().any(|&l| l != 1) {
        return Ok(names.iter().map(|&(n, c)| skip(n, tol.get(c), "ODE separation needs size-1 groups")).collect());
    }
    let a = default_constants(geom)?;
    let base = chart.center();
    let points = chart.sample_interior(few(opts), opts.seed, 0.1);
    let probe = chart.sample_interior(1, opts.seed + 7, 0.2).remove(0);
    let note = format!("a = {:?}", a.0);
    let mut out = Vec::new();

    let blocks = (0..geom.r()).map(|b| separation::helmholtz_block_ode(geom, b, &a, &base, GRID_INTERVALS)).collect::<Result<Vec<_>, _>>()?;
    let u = separation::product_assemble(geom, blocks)?;
    let mut h = Acc::new();
    let mut eig = Acc::new();
    for p in &points {
        h.observe(separation::helmholtz_residual(geom, &u, a.0[0], std::slice::from_ref(p))?, p);
        for alpha in 1..geom.r() {
            eig.observe(separation::eigen_residual(geom, alpha, &u, &a, std::slice::from_ref(p))?, p);
        }
        h.point();
        eig.point();
    }
    let ts = tol.get(Check::Separation);
    out.push(h.finish("separation.helmholtz", ts, format!("|Δ_g u + a_1 u| for the ODE-separated product; {note}")));
    out.push(eig.finish("separation.eigen", ts, "|Δ_K(α) u + a_α u|, α ≥ 2"));
    let tr = tol.get(Check::RankMatrix);
    out.push(match separation::rank_condition_helmholtz(geom, &a, 1e-4, &probe, 128) {
        Ok(rank) => rank_check("separation.rank_helmholtz", &rank, tr, &probe),
        Err(e) => skip("separation.rank_helmholtz", tr, e.to_string()),
    });

    let hj: Result<Vec<_>, _> = (0..geom.r()).map(|b| separation::hj_block_quadrature(geom, b, &a, &base, GRID_INTERVALS)).collect();
    match hj {
        Ok(blocks) => {
            let w = separation::sum_assemble(geom, blocks)?;
            let mut acc = Acc::new();
            for p in &points {
                acc.observe(separation::hj_residual(geom, &w, &a, p)?, p);
                acc.point();
            }
            out.push(acc.finish("separation.hj", ts, "|g^ij ∂_iW ∂_jW − a_1| for the quadrature-built W"));
            out.push(match separation::rank_condition_hj(geom, &a, 1e-4, &probe, 128) {
                Ok(rank) => rank_check("separation.rank_hj", &rank, tr, &probe),
                Err(e) => skip("separation.rank_hj", tr, e.to_string()),
            });
        }
        Err(SpecError::Precondition { what, .. }) => {
            out.push(skip("separation.hj", ts, format!("constants not admissible: {what}")));
            out.push(skip("separation.rank_hj", tr, "constants not admissible"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

fn rank_check(name: &str, rank: &separation::RankResult, tol: f64, probe: &[f64]) -> CheckResult {
    CheckResult {
        name: name.into(),
        verdict: if rank.pass && rank.relative_error <= tol { Verdict::Pass } else { Verdict::Fail },
        max_residual: rank.relative_error,
        tolerance: tol,
        worst_point: Some(probe.to_vec()),
        sample_count: 1,
        notes: format!("finite-difference matrix against S, det = {:.6e}", rank.det),
    }
}

fn conformal_suite(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let chart = geom.chart();
    let vars = chart.vars();
    let mut out = Vec::new();

    let mut elim = Acc::new();
    for p in chart.sample(opts.samples, opts.seed) {
        elim.observe(conformal::elim_residual(geom, &p)?, &p);
        elim.point();
    }
    out.push(elim.finish("conformal.elim", tol.get(Check::FirstOrder), "max |2 G^ij ∂_i log R − γ^j|"));

    let rob = robertson_check(geom, tol.get(Check::Robertson), few(opts), opts.seed)?;
    let pts = chart.sample(few(opts), opts.seed);
    if rob.pass() {
        let mut loc = Acc::new();
        for p in &pts {
            for b in 0..geom.r() {
                loc.observe(conformal::p_beta_cross_derivative(geom, b, p)?, p);
            }
            loc.point();
        }
        out.push(loc.finish("conformal.p_beta_locality", tol.get(Check::FirstOrder), "max |∂_j P_β| for j outside group β"));
    } else {
        out.push(skip("conformal.p_beta_locality", tol.get(Check::FirstOrder), "Robertson conditions fail"));
    }

    let (a, b) = (&vars[0], &vars[vars.len() - 1]);
    let factors = [
        format!("1 + 0.1*{a}^2"),
        format!("exp(0.1*({a} - {b}))"),
        format!("1.5 + 0.2*sin({a}*{b})"),
    ];
    let u = test_functions(geom.spec()).remove(0);
    let mut law = Acc::new();
    for p in &pts {
        for c in &factors {
            let c = parse(c).expect("built-in conformal factor");
            law.observe(conformal::conformal_law_residual(geom, &c, &u, p)?, p);
        }
        law.point();
    }
    out.push(law.finish("conformal.law", tol.get(Check::ConformalLaw), format!("Δ_(c⁴g) against c^-(n+2)(Δ_g − q)c^(n-2) for c in {factors:?}")));

    let Some(data) = geom.spec().conformal.clone() else {
        out.push(skip("conformal.eqnc", tol.get(Check::RSeparation), "spec has no conformal data"));
        return Ok(out);
    };
    if !rob.pass() {
        out.push(skip("conformal.eqnc", tol.get(Check::RSeparation), "Robertson conditions fail"));
        return Ok(out);
    }
    let mut eqnc = Acc::new();
    for p in &pts {
        eqnc.observe(conformal::rsep_residuals(geom, &data, &Expr::one(), p)?.eqnc, p);
        eqnc.point();
    }
    out.push(eqnc.finish("conformal.eqnc", tol.get(Check::RSeparation), "conformal-factor equation residual for the given c, λ, a_1, φ"));

    if opts.yamabe {
        out.push(yamabe(geom, &data, tol)?);
    }
    Ok(out)
}

fn yamabe(geom: &Geometry, data: &conformal::ConformalData, tol: &Tolerances) -> Result<CheckResult, RunError> {
    let t = tol.get(Check::Newton);
    let n = geom.n();
    if n < 3 {
        return Ok(skip("conformal.yamabe", t, "needs n ≥ 3"));
    }
    let eta = data.c.powi(n as i32 - 2);
    let prob = match GridProblem::from_geometry(geom, data, &[0, 1], &geom.chart().center(), 33, &eta) {
        Ok(p) => p,
        Err(GridError::Spec(e)) => return Err(e.into()),
        Err(e) => return Ok(skip("conformal.yamabe", t, e.to_string())),
    };
    match conformal::yamabe_grid_solve(&prob, data.lambda) {
        Ok(sol) => Ok(CheckResult {
            name: "conformal.yamabe".into(),
            verdict: Verdict::Pass,
            max_residual: sol.residual,
            tolerance: t,
            worst_point: None,
            sample_count: sol.w.len(),
            notes: format!(
                "33² grid on ({}, {}); {} Newton steps; bracket [{:.6}, {:.6}]",
                geom.chart().vars()[0],
                geom.chart().vars()[1],
                sol.iterations,
                sol.bracket.0,
                sol.bracket.1
            ),
        }),
        Err(e @ GridError::NotCase1 { .. }) => Ok(skip("conformal.yamabe", t, e.to_string())),
        Err(e) => Ok(CheckResult {
            name: "conformal.yamabe".into(),
            verdict: Verdict::Fail,
            max_residual: f64::MAX,
            tolerance: t,
            worst_point: None,
            sample_count: prob.len(),
            notes: e.to_string(),
        }),
    }
}

/// Solves the conformal grid problem of a spec and returns the solution (for CSV export).
pub fn yamabe_solution(spec: &PainleveSpec) -> Result<conformal::GridSolution, RunError> {
    let geom = Geometry::new(spec.clone())?;
    let data = spec.conformal.clone().ok_or_else(|| RunError::Input("spec has no conformal data".into()))?;
    let eta = data.c.powi(geom.n() as i32 - 2);
    let prob = GridProblem::from_geometry(&geom, &data, &[0, 1], &geom.chart().center(), 33, &eta).map_err(|e| RunError::Input(e.to_string()))?;
    conformal::yamabe_grid_solve(&prob, data.lambda).map_err(|e| RunError::Numerical(e.to_string()))
}

/// Initial momentum from the seeded phase sample, halved until the trajectory
/// stays inside the domain for the whole time span.
pub fn geodesic_run(geom: &Geometry, opts: &RunOptions) -> Result<dynamics::Trajectory, RunError> {
    let chart = geom.chart();
    let x0 = chart.center();
    let mut p0 = sample_phase_points(chart, 1, opts.seed).remove(0).p;
    for _ in 0..24 {
        match dynamics::geodesic_integrate(geom, &x0, &p0, opts.t_end, opts.dt) {
            Ok(tr) if tr.exited_at.is_none() => return Ok(tr),
            Ok(_) | Err(DynamicsError::ImmediateExit) => p0.iter_mut().for_each(|v| *v *= 0.5),
            Err(DynamicsError::Spec(e)) => return Err(e.into()),
            Err(e @ DynamicsError::Step(_)) | Err(e @ DynamicsError::Start(_)) => return Err(RunError::Input(e.to_string())),
            Err(e) => return Err(RunError::Numerical(e.to_string())),
        }
    }
    Err(RunError::Numerical("no initial momentum keeps the geodesic inside the domain".into()))
}

fn geodesic(geom: &Geometry, tol: &Tolerances, opts: &RunOptions) -> Result<Vec<CheckResult>, RunError> {
    let tr = geodesic_run(geom, opts)?;
    if let Some(path) = &opts.csv {
        let file = std::fs::File::create(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
        tr.write_csv(file).map_err(|e| RunError::Input(e.to_string()))?;
    }
    let t = tol.get(Check::Drift);
    let note = format!("RK4, T = {}, dt = {}, x0 = {:?}, p0 = {:?}", opts.t_end, opts.dt, tr.x[0], tr.p[0]);
    let mk = |name: String, d: f64, notes: String| CheckResult {
        name,
        verdict: if d <= t { Verdict::Pass } else { Verdict::Fail },
        max_residual: d,
        tolerance: t,
        worst_point: Some(tr.x[0].clone()),
        sample_count: tr.len(),
        notes,
    };
    let mut out = vec![mk("geodesic.h_drift".into(), dynamics::hamiltonian_drift(&tr), note)];
    for a in 1..geom.r() {
        out.push(mk(format!("geodesic.k{}_drift", a + 1), dynamics::first_integral_drift(&tr, a), "max |K(t) − K(0)| / (1 + |K(0)|)".into()));
    }
    Ok(out)
}
