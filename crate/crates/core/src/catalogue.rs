//! Constructors for the example families of Painlevé metrics, plus an
//! engineered counterexample to the Robertson conditions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{evaluate, parse, Expr};
use crate::operators::robertson_check;
use crate::stackel::{validate_spec, Chart, Geometry, PainleveSpec, SpecError};

#[derive(Debug, Error)]
pub enum CatalogueError {
    #[error("precondition violated: {message}")]
    Precondition { message: String, point: Option<Vec<f64>> },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("unknown catalogue entry `{0}`")]
    Unknown(String),
}

/// Properties the verification modules are expected to report for an entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expected {
    pub painleve: bool,
    pub robertson: bool,
    pub n: usize,
    pub r: usize,
    pub block_sizes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CatalogueEntry {
    pub name: String,
    pub parameters: BTreeMap<String, String>,
    pub expected: Expected,
    pub provenance: String,
    pub spec: PainleveSpec,
}

fn e(s: &str) -> Expr {
    parse(s).unwrap_or_else(|err| panic!("catalogue expression `{s}`: {err}"))
}

fn vars(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Chart on x1..xn with consecutive groups of the given sizes.
fn chart(sizes: &[usize], domain: Vec<(f64, f64)>) -> Result<Chart, SpecError> {
    let v = vars(sizes.iter().sum());
    let mut blocks = Vec::new();
    let mut at = 0;
    for &l in sizes {
        blocks.push(v[at..at + l].to_vec());
        at += l;
    }
    Chart::new(v, blocks, domain)
}

fn cube(n: usize, h: f64) -> Vec<(f64, f64)> {
    vec![(-h, h); n]
}

fn identity(l: usize) -> Vec<Vec<Expr>> {
    (0..l).map(|i| (0..l).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect()).collect()
}

fn diagonal(d: Vec<Expr>) -> Vec<Vec<Expr>> {
    let l = d.len();
    let mut m = vec![vec![Expr::zero(); l]; l];
    for (i, x) in d.into_iter().enumerate() {
        m[i][i] = x;
    }
    m
}

/// First row (1, −1, …, −1), other rows unit vectors: det S = 1 and every s^{α1} = 1.
fn unit_stackel(r: usize) -> Vec<Vec<Expr>> {
    (0..r)
        .map(|a| {
            (0..r)
                .map(|b| match (a, b) {
                    (0, 0) => Expr::one(),
                    (0, _) => Expr::num(-1.0),
                    _ if a == b => Expr::one(),
                    _ => Expr::zero(),
                })
                .collect()
        })
        .collect()
}

fn checked(spec: PainleveSpec) -> Result<PainleveSpec, CatalogueError> {
    if let Some(v) = validate_spec(&spec).into_iter().next() {
        return Err(CatalogueError::Precondition {
            message: v.message,
            point: v.point,
        });
    }
    Ok(spec)
}

fn params(pairs: &[(&str, &Expr)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn entry(name: &str, parameters: BTreeMap<String, String>, robertson: bool, provenance: &str, spec: PainleveSpec) -> CatalogueEntry {
    let expected = Expected {
        painleve: true,
        robertson,
        n: spec.n(),
        r: spec.r(),
        block_sizes: spec.chart.block_sizes(),
    };
    CatalogueEntry {
        name: name.to_string(),
        parameters,
        expected,
        provenance: provenance.to_string(),
        spec,
    }
}

/// Flat metric on [−1, 1]ⁿ with the given group sizes.
pub fn euclidean(partition: &[usize]) -> Result<PainleveSpec, CatalogueError> {
    let n = partition.iter().sum();
    let c = chart(partition, cube(n, 1.0))?;
    let blocks = partition.iter().map(|&l| identity(l)).collect();
    checked(PainleveSpec::new(&format!("euclidean{n}"), c, unit_stackel(partition.len()), blocks)?)
}

/// g = (f1(x1) + f2(x2))(dx1² + dx2²) from S = [[f1, −1], [f2, 1]].
pub fn liouville2d(f1: &Expr, f2: &Expr, domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let c = chart(&[1, 1], domain)?;
    let s = vec![vec![f1.clone(), Expr::num(-1.0)], vec![f2.clone(), Expr::one()]];
    checked(PainleveSpec::new("liouville2d", c, s, vec![identity(1), identity(1)])?)
}

/// The two warped normal forms.
#[derive(Clone, Debug)]
pub enum Warp {
    /// g = G₁ + f₁(x¹)G₂.
    First(Expr),
    /// g = f₂(x²)G₁ + G₂.
    Second(Expr),
}

pub fn warped(g1: Vec<Vec<Expr>>, g2: Vec<Vec<Expr>>, warp: &Warp, domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let c = chart(&[g1.len(), g2.len()], domain)?;
    let s = match warp {
        Warp::First(f1) => vec![vec![Expr::one(), -(Expr::one() / f1)], vec![Expr::zero(), Expr::one()]],
        Warp::Second(f2) => {
            let inv = Expr::one() / f2;
            vec![vec![Expr::one(), Expr::num(-1.0)], vec![Expr::one() - &inv, inv]]
        }
    };
    checked(PainleveSpec::new("warped", c, s, vec![g1, g2])?)
}

/// g = Σ f_α(x¹) G_α from S with first row (f₁, −f₁/f₂, …, −f₁/f_r) and unit rows below.
pub fn multiply_warped(f: &[Expr], gs: Vec<Vec<Vec<Expr>>>, domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let r = f.len();
    if gs.len() != r || r < 2 {
        return Err(CatalogueError::Precondition {
            message: "one warping function per group and r ≥ 2".into(),
            point: None,
        });
    }
    let sizes: Vec<usize> = gs.iter().map(Vec::len).collect();
    let c = chart(&sizes, domain)?;
    let g1: Vec<String> = c.block_var_names(0);
    for fa in f {
        if fa.free_variables().iter().any(|v| !g1.contains(v)) {
            return Err(CatalogueError::Precondition {
                message: format!("warping function `{fa}` must depend on the first group only"),
                point: None,
            });
        }
    }
    let mut s = unit_stackel(r);
    s[0][0] = f[0].clone();
    for b in 1..r {
        s[0][b] = -(&f[0] / &f[b]);
    }
    checked(PainleveSpec::new("multiply_warped", c, s, gs)?)
}

/// di Pirro metric with groups {x1, x2}, {x3} and S = [[c12, −1], [c3, 1]]:
/// g = (c12 + c3)(dx1²/a1 + dx2²/a2 + dx3²/a3).
pub fn di_pirro(a1: &Expr, a2: &Expr, a3: &Expr, c12: &Expr, c3: &Expr, domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let c = chart(&[2, 1], domain)?;
    let s = vec![vec![c12.clone(), Expr::num(-1.0)], vec![c3.clone(), Expr::one()]];
    let g1 = diagonal(vec![Expr::one() / a1, Expr::one() / a2]);
    let g2 = diagonal(vec![Expr::one() / a3]);
    checked(PainleveSpec::new("di_pirro", c, s, vec![g1, g2])?)
}

/// Contravariant coefficients of the classical extra integral
/// K = (c12 + c3)⁻¹[c3(a1p1² + a2p2²) − c12 a3p3²].
pub fn di_pirro_integral(a1: &Expr, a2: &Expr, a3: &Expr, c12: &Expr, c3: &Expr) -> Vec<Vec<Expr>> {
    let w = Expr::one() / (c12 + c3);
    diagonal(vec![&w * c3 * a1, &w * c3 * a2, -(&w * c12 * a3)])
}

/// Stäckel metric of Vandermonde type, S_{αβ} = (−1)^{n+α−β+1} f_α^{n−β}; requires
/// f₁ < f₂ < … < f_n on the box. When det S < 0 the last column is negated, which
/// leaves the metric unchanged.
pub fn vandermonde(f: &[Expr], domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let n = f.len();
    let c = chart(&vec![1; n], domain)?;
    for p in c.sample(128, 0).into_iter().chain(crate::sampling::box_corners(c.domain())) {
        let b = c.binding(&p);
        let vals: Vec<f64> = f.iter().map(|fa| evaluate(fa, &b)).collect::<Result<_, _>>().map_err(SpecError::from)?;
        if vals.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CatalogueError::Precondition {
                message: "Vandermonde functions must be strictly increasing".into(),
                point: Some(p),
            });
        }
    }
    let mut s: Vec<Vec<Expr>> = (1..=n)
        .map(|a| {
            (1..=n)
                .map(|b| {
                    let sign = if (n + a + 1 - b).is_multiple_of(2) { 1.0 } else { -1.0 };
                    f[a - 1].powi((n - b) as i32) * sign
                })
                .collect()
        })
        .collect();
    let probe = PainleveSpec::new("vandermonde", c.clone(), s.clone(), vec![identity(1); n])?;
    let det = Geometry::new(probe)?.stackel_eval(&c.center()).map_err(SpecError::from)?.det;
    if det < 0.0 {
        for row in &mut s {
            row[n - 1] = -&row[n - 1];
        }
    }
    checked(PainleveSpec::new(&format!("vandermonde{n}"), c, s, vec![identity(1); n])?)
}

/// S = [[1, s12, a·s12], [0, s22, s23], [0, s32, s33]] with s_ij = s_ij(x^i).
pub fn stackel3d_triangular(a: f64, s12: &Expr, s22: &Expr, s23: &Expr, s32: &Expr, s33: &Expr, domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let c = chart(&[1, 1, 1], domain)?;
    let s = vec![
        vec![Expr::one(), s12.clone(), s12 * a],
        vec![Expr::zero(), s22.clone(), s23.clone()],
        vec![Expr::zero(), s32.clone(), s33.clone()],
    ];
    checked(PainleveSpec::new("stackel3d_triangular", c, s, vec![identity(1); 3])?)
}

/// g = hG₁ + k dx3² + l dx4² with h, k, l, G₁ functions of (x1, x2).
pub fn painleve4d_r3(h: &Expr, k: &Expr, l: &Expr, g1: Vec<Vec<Expr>>, domain: Vec<(f64, f64)>) -> Result<PainleveSpec, CatalogueError> {
    let mut spec = multiply_warped(&[h.clone(), k.clone(), l.clone()], vec![g1, identity(1), identity(1)], domain)?;
    spec.name = "painleve4d_r3".into();
    Ok(spec)
}

/// S = [[1, s12, a·s12, s12], [0, 1, s23, s23], [0, 0, s33, s34], [0, 0, s43, s44]].
/// The Robertson conditions hold for a = 1 only.
#[allow(clippy::too_many_arguments)]
pub fn painleve4d_triangular(
    a: f64,
    s12: &Expr,
    s23: &Expr,
    s33: &Expr,
    s34: &Expr,
    s43: &Expr,
    s44: &Expr,
    domain: Vec<(f64, f64)>,
) -> Result<PainleveSpec, CatalogueError> {
    let c = chart(&[1, 1, 1, 1], domain)?;
    let (z, o) = (Expr::zero(), Expr::one());
    let s = vec![
        vec![o.clone(), s12.clone(), s12 * a, s12.clone()],
        vec![z.clone(), o, s23.clone(), s23.clone()],
        vec![z.clone(), z.clone(), s33.clone(), s34.clone()],
        vec![z.clone(), z, s43.clone(), s44.clone()],
    ];
    checked(PainleveSpec::new("painleve4d_triangular", c, s, vec![identity(1); 4])?)
}

/// Parameters (p, q, s) of the Robertson counterexample
/// S = [[1 + p·x1², −1], [1 + q·x2² + s·x3², 1]], groups {x1}, {x2, x3}, G = I.
pub const VIOLATOR_PARAMETERS: (f64, f64, f64) = (0.25, 0.25, 0.25);

pub fn robertson_violator_with(p: f64, q: f64, s: f64) -> Result<PainleveSpec, CatalogueError> {
    let c = chart(&[1, 2], cube(3, 1.0))?;
    let st = vec![
        vec![e(&format!("1 + {p}*x1^2")), Expr::num(-1.0)],
        vec![e(&format!("1 + {q}*x2^2 + {s}*x3^2")), Expr::one()],
    ];
    checked(PainleveSpec::new("robertson_violator", c, st, vec![identity(1), identity(2)])?)
}

pub fn robertson_violator() -> Result<PainleveSpec, CatalogueError> {
    let (p, q, s) = VIOLATOR_PARAMETERS;
    robertson_violator_with(p, q, s)
}

/// Grid search over {1/4, 1/2, 1, 2}³ (lexicographic) for the first parameters whose
/// spec is valid, fails the Robertson conditions by more than 1e-2, and has an
/// off-block Ricci component above 1e-3 at a sampled point (16 Halton points, seed 0).
pub fn search_robertson_violator() -> Option<(f64, f64, f64)> {
    const LEVELS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
    for &p in &LEVELS {
        for &q in &LEVELS {
            for &s in &LEVELS {
                if violator_qualifies(p, q, s) == Some(true) {
                    return Some((p, q, s));
                }
            }
        }
    }
    None
}

fn violator_qualifies(p: f64, q: f64, s: f64) -> Option<bool> {
    let geom = Geometry::new(robertson_violator_with(p, q, s).ok()?).ok()?;
    let rob = robertson_check(&geom, 1e-9, 16, 0).ok()?;
    if rob.max_gamma <= crate::tolerances::violation::ROBERTSON || rob.max_mixed_log <= crate::tolerances::violation::ROBERTSON {
        return Some(false);
    }
    let chart = geom.chart();
    let mut ricci = 0.0f64;
    for x in chart.sample(16, 0) {
        let ric = crate::curvature::ricci_at(&geom, &x).ok()?.ricci;
        for j in 0..chart.n() {
            for k in 0..chart.n() {
                if chart.block_of(j) != chart.block_of(k) {
                    ricci = ricci.max(ric[(j, k)].abs());
                }
            }
        }
    }
    Some(ricci > crate::tolerances::violation::RICCI)
}

/// Every named entry with its default parameters.
pub fn catalogue() -> Result<Vec<CatalogueEntry>, CatalogueError> {
    let mut out = Vec::new();

    out.push(entry("euclidean3", params(&[]), true, "flat metric, unit Stäckel matrix, groups {x1},{x2,x3}", euclidean(&[1, 2])?));
    out.push(entry("euclidean2", params(&[]), true, "flat metric, unit Stäckel matrix, two size-1 groups", euclidean(&[1, 1])?));

    let (f1, f2) = (e("2 + sin(x1)"), e("1 + x2^2"));
    out.push(entry(
        "liouville2d",
        params(&[("f1", &f1), ("f2", &f2)]),
        true,
        "Liouville metric (f1 + f2)(dx1² + dx2²)",
        liouville2d(&f1, &f2, cube(2, 0.8))?,
    ));

    let g1 = vec![vec![e("1 + 0.5*x1^2")]];
    let g2 = vec![vec![e("1 + x2^2"), e("0.1*x3")], vec![e("0.1*x3"), e("2")]];
    let f1 = e("2 + sin(x1)");
    let mut spec = warped(g1.clone(), g2.clone(), &Warp::First(f1.clone()), cube(3, 0.5))?;
    spec.name = "warped3d".into();
    out.push(entry("warped3d", params(&[("f1", &f1)]), true, "warped product G1 + f1(x1)G2", spec));
    let f2 = e("1 + 0.5*x2^2 + 0.25*x3^2");
    let mut spec = warped(g1, g2, &Warp::Second(f2.clone()), cube(3, 0.5))?;
    spec.name = "warped3d_b".into();
    out.push(entry("warped3d_b", params(&[("f2", &f2)]), true, "warped product f2(x2,x3)G1 + G2", spec));

    let fs = [e("1"), e("1 + x1^2"), e("2 + x1")];
    let gs = vec![
        vec![vec![e("1 + 0.2*x1^2")]],
        vec![vec![e("2 + 0.5*x2"), e("0.1*x2*x3")], vec![e("0.1*x2*x3"), e("1 + x3^2")]],
        vec![vec![e("1 + x4^2")]],
    ];
    out.push(entry(
        "multiply_warped",
        params(&[("f1", &fs[0]), ("f2", &fs[1]), ("f3", &fs[2])]),
        true,
        "multiply warped product Σ f_α(x1)G_α, groups {x1},{x2,x3},{x4}",
        multiply_warped(&fs, gs, cube(4, 0.5))?,
    ));

    let (a1, a2, a3) = (e("1 + 0.2*x2^2"), e("2 + 0.3*sin(x1)"), e("1 + 0.25*x3^2"));
    let (c12, c3) = (e("1 + x1^2 + 0.5*x2^2"), e("0.5 + x3^2"));
    out.push(entry(
        "di_pirro",
        params(&[("a1", &a1), ("a2", &a2), ("a3", &a3), ("c12", &c12), ("c3", &c3)]),
        false,
        "di Pirro metric with S = [[c12, -1], [c3, 1]], groups {x1,x2},{x3}; (det S)/(s^11 s^21) = c12 + c3 does not factor, so Robertson fails for generic c12",
        di_pirro(&a1, &a2, &a3, &c12, &c3, cube(3, 1.0))?,
    ));

    for n in [3usize, 4] {
        let fs: Vec<Expr> = (1..=n).map(|a| e(&format!("x{a} + {}", 2 * a))).collect();
        let p: Vec<(String, Expr)> = fs.iter().enumerate().map(|(a, f)| (format!("f{}", a + 1), f.clone())).collect();
        let pr: Vec<(&str, &Expr)> = p.iter().map(|(k, v)| (k.as_str(), v)).collect();
        out.push(entry(
            &format!("vandermonde{n}"),
            params(&pr),
            true,
            "Stäckel matrix of Vandermonde type with f_α = x_α + 2α",
            vandermonde(&fs, cube(n, 0.5))?,
        ));
    }

    let (s12, s22, s23, s32, s33) = (e("-(1 + 0.5*x1^2)"), e("2 + 0.2*x2"), e("0.5 + 0.1*x2^2"), e("1 + 0.2*x3"), e("1.5 + 0.1*x3^2"));
    let mut p = params(&[("s12", &s12), ("s22", &s22), ("s23", &s23), ("s32", &s32), ("s33", &s33)]);
    p.insert("a".into(), "0.5".into());
    out.push(entry(
        "stackel3d_triangular",
        p,
        true,
        "3D Stäckel matrix [[1, s12, a s12], [0, s22, s23], [0, s32, s33]]",
        stackel3d_triangular(0.5, &s12, &s22, &s23, &s32, &s33, cube(3, 0.5))?,
    ));

    let (h, k, l) = (e("1 + x1^2"), e("2 + x2"), e("1 + 0.5*x1*x2"));
    let g1 = vec![vec![e("1 + x2^2"), e("0.2*x1")], vec![e("0.2*x1"), e("1")]];
    out.push(entry(
        "painleve4d_r3",
        params(&[("h", &h), ("k", &k), ("l", &l)]),
        true,
        "4D metric hG1 + k dx3² + l dx4², groups {x1,x2},{x3},{x4}",
        painleve4d_r3(&h, &k, &l, g1, cube(4, 0.5))?,
    ));

    let (s12, s23, s33, s34, s43, s44) = (e("-(1 + 0.5*x1^2)"), e("0.3 + 0.1*x2"), e("2 + 0.2*x3"), e("0.5 + 0.1*x3^2"), e("-0.5 + 0.1*x4"), e("2 + 0.1*x4^2"));
    let mut p = params(&[("s12", &s12), ("s23", &s23), ("s33", &s33), ("s34", &s34), ("s43", &s43), ("s44", &s44)]);
    p.insert("a".into(), "1".into());
    out.push(entry(
        "painleve4d_triangular",
        p,
        true,
        "4D Stäckel matrix [[1, s12, a s12, s12], [0, 1, s23, s23], [0, 0, s33, s34], [0, 0, s43, s44]]",
        painleve4d_triangular(1.0, &s12, &s23, &s33, &s34, &s43, &s44, cube(4, 0.5))?,
    ));

    let (pp, q, s) = VIOLATOR_PARAMETERS;
    let mut p = BTreeMap::new();
    p.insert("p".into(), pp.to_string());
    p.insert("q".into(), q.to_string());
    p.insert("s".into(), s.to_string());
    out.push(entry(
        "robertson_violator",
        p,
        false,
        "S = [[1 + p x1², -1], [1 + q x2² + s x3², 1]], groups {x1},{x2,x3}; parameters from a lexicographic grid search",
        robertson_violator()?,
    ));
    Ok(out)
}

pub fn names() -> Vec<&'static str> {
    vec![
        "euclidean3",
        "euclidean2",
        "liouville2d",
        "warped3d",
        "warped3d_b",
        "multiply_warped",
        "di_pirro",
        "vandermonde3",
        "vandermonde4",
        "stackel3d_triangular",
        "painleve4d_r3",
        "painleve4d_triangular",
        "robertson_violator",
    ]
}

pub fn by_name(name: &str) -> Result<CatalogueEntry, CatalogueError> {
    catalogue()?
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| CatalogueError::Unknown(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::killing::{killing_tensors, poisson_bracket_fields, sample_phase_points, TensorField};

    #[test]
    fn names_match_entries() {
        let all: Vec<String> = catalogue().unwrap().into_iter().map(|c| c.name).collect();
        assert_eq!(all, names());
    }

    #[test]
    fn expected_properties_match_verdicts() {
        for c in catalogue().unwrap() {
            assert_eq!(validate_spec(&c.spec).is_empty(), c.expected.painleve, "{}", c.name);
            let g = Geometry::new(c.spec.clone()).unwrap();
            let rob = robertson_check(&g, 1e-9, 16, 0).unwrap();
            assert_eq!(rob.pass(), c.expected.robertson, "{} {}", c.name, rob.max_gamma);
            assert_eq!(c.spec.chart.block_sizes(), c.expected.block_sizes);
        }
    }

    #[test]
    fn vandermonde_metric_at_origin() {
        let c = by_name("vandermonde3").unwrap();
        let g = Geometry::new(c.spec).unwrap();
        let m = g.metric_at(&[0.0; 3], 0).unwrap();
        assert!((m.g[(0, 0)] - 8.0).abs() < 1e-12);
        assert!((m.g[(1, 1)] - 2.0 * 2.0).abs() < 1e-12);
        assert!((m.g[(2, 2)] - 4.0 * 2.0).abs() < 1e-12);
        assert!(g.stackel_eval(&[0.0; 3]).unwrap().det > 0.0);
    }

    #[test]
    fn unit_di_pirro_is_conformally_flat() {
        let one = e("1");
        let spec = di_pirro(&one, &one, &one, &e("x1^2 + x2^2"), &e("1 + x3^2"), cube(3, 1.0)).unwrap();
        let g = Geometry::new(spec).unwrap();
        for p in g.chart().sample(8, 0) {
            let m = g.metric_at(&p, 0).unwrap();
            let f = 1.0 + p.iter().map(|x| x * x).sum::<f64>();
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { f } else { 0.0 };
                    assert!((m.g[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn di_pirro_integral_is_minus_second_killing_tensor() {
        let c = by_name("di_pirro").unwrap();
        let p = |k: &str| e(&c.parameters[k]);
        let k = TensorField::new(di_pirro_integral(&p("a1"), &p("a2"), &p("a3"), &p("c12"), &p("c3")), c.spec.chart.vars());
        let g = Geometry::new(c.spec.clone()).unwrap();
        let set = killing_tensors(&g).unwrap();
        for pp in sample_phase_points(g.chart(), 8, 0) {
            let a = k.jet(&pp.x).unwrap().value;
            let b = set.get(1).jet(&pp.x).unwrap().value;
            assert!((a + b).abs().max() < 1e-12);
            assert!(poisson_bracket_fields(set.get(0), &k, &pp).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn triangular_metrics_match_displayed_forms() {
        let g = Geometry::new(by_name("painleve4d_triangular").unwrap().spec).unwrap();
        for p in g.chart().sample(8, 0) {
            let m = g.metric_at(&p, 0).unwrap();
            let s12 = -(1.0 + 0.5 * p[0] * p[0]);
            let (s23, s33, s34, s43, s44) = (0.3 + 0.1 * p[1], 2.0 + 0.2 * p[2], 0.5 + 0.1 * p[2] * p[2], -0.5 + 0.1 * p[3], 2.0 + 0.1 * p[3] * p[3]);
            let d = s33 * s44 - s34 * s43;
            assert!((m.g[(0, 0)] - 1.0).abs() < 1e-12);
            assert!((m.g[(1, 1)] + 1.0 / s12).abs() < 1e-12);
            assert!((m.g[(2, 2)] - d / (s12 * (s23 - 1.0) * (s44 - s43))).abs() < 1e-12);
            assert!((m.g[(3, 3)] - d / (s12 * (s23 - 1.0) * (s33 - s34))).abs() < 1e-12);
        }
        let g = Geometry::new(by_name("stackel3d_triangular").unwrap().spec).unwrap();
        for p in g.chart().sample(8, 0) {
            assert!((g.metric_at(&p, 0).unwrap().g[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn triangular_4d_needs_unit_a() {
        let c = by_name("painleve4d_triangular").unwrap();
        let p = |k: &str| e(&c.parameters[k]);
        let spec = painleve4d_triangular(0.5, &p("s12"), &p("s23"), &p("s33"), &p("s34"), &p("s43"), &p("s44"), cube(4, 0.5)).unwrap();
        let rob = robertson_check(&Geometry::new(spec).unwrap(), 1e-9, 16, 0).unwrap();
        assert!(rob.max_gamma > 1e-3);
    }

    #[test]
    fn preconditions_are_enforced() {
        let bad = vandermonde(&[e("x1 + 2"), e("x2 + 1")], cube(2, 0.5));
        assert!(matches!(bad, Err(CatalogueError::Precondition { point: Some(_), .. })));
        assert!(liouville2d(&e("x1"), &e("x2"), cube(2, 1.0)).is_err());
        assert!(matches!(by_name("nope"), Err(CatalogueError::Unknown(_))));
    }

    #[test]
    fn violator_search_is_pinned() {
        assert_eq!(search_robertson_violator(), Some(VIOLATOR_PARAMETERS));
    }
}
