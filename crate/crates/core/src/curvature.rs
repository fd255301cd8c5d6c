//! Levi-Civita connection and Ricci tensor: generic formulas from metric
//! jets, plus the closed form of the off-block Ricci components that uses
//! only the Stäckel data.

use nalgebra::DMatrix;

use crate::expr::Taylor;
use crate::stackel::{Geometry, MetricJet, SpecError};

/// Γ^i_{jk} at a point, stored as `gamma[(i * n + j) * n + k]`.
#[derive(Clone, Debug)]
pub struct ChristoffelAtPoint {
    pub point: Vec<f64>,
    pub n: usize,
    pub gamma: Vec<f64>,
}

impl ChristoffelAtPoint {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[(i * self.n + j) * self.n + k]
    }
}

#[derive(Clone, Debug)]
pub struct RicciAtPoint {
    pub point: Vec<f64>,
    pub ricci: DMatrix<f64>,
}

/// Lowered Christoffel symbols Γ_{ljk} = ½(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk}) with
/// optional extra derivative index `m`.
fn lowered(jet: &MetricJet, l: usize, j: usize, k: usize, m: Option<usize>) -> f64 {
    let d = |a: usize, b: usize, c: usize| match m {
        None => jet.dg(a, b, c),
        Some(m) => jet.d2g(a, b, c, m),
    };
    0.5 * (d(l, k, j) + d(l, j, k) - d(j, k, l))
}

pub(crate) fn christoffel_from_jet(jet: &MetricJet) -> ChristoffelAtPoint {
    let n = jet.g.nrows();
    let mut low = vec![0.0; n * n * n];
    for l in 0..n {
        for j in 0..n {
            for k in j..n {
                let v = lowered(jet, l, j, k, None);
                low[(l * n + j) * n + k] = v;
                low[(l * n + k) * n + j] = v;
            }
        }
    }
    let mut gamma = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                gamma[(i * n + j) * n + k] = (0..n).map(|l| jet.ginv[(i, l)] * low[(l * n + j) * n + k]).sum();
            }
        }
    }
    ChristoffelAtPoint {
        point: jet.point.clone(),
        n,
        gamma,
    }
}

/// Generic Levi-Civita connection coefficients.
pub fn christoffel_at(geom: &Geometry, p: &[f64]) -> Result<ChristoffelAtPoint, SpecError> {
    let jet = geom.metric_at(p, 1)?;
    Ok(christoffel_from_jet(&jet))
}

/// The mixed-block Christoffel symbols by the block formulas:
/// Γ^{iα}_{kα jβ} = ½ g^{iα pα} ∂_{jβ} g_{kα pα} and
/// Γ^{jβ}_{iα kα} = −½ g^{jβ pβ} ∂_{pβ} g_{iα kα} (α ≠ β). Returns `None`
/// when the index pattern is not one of these two.
pub fn christoffel_block_formula(geom: &Geometry, p: &[f64], i: usize, j: usize, k: usize) -> Result<Option<f64>, SpecError> {
    let chart = geom.chart();
    let (bi, bj, bk) = (chart.block_of(i), chart.block_of(j), chart.block_of(k));
    let jet = geom.metric_at(p, 1)?;
    let block = |b: usize| chart.blocks()[b].clone();
    if bi == bj && bk != bi {
        // Γ^{iα}_{jα kβ}
        let v = block(bi).into_iter().map(|q| jet.ginv[(i, q)] * jet.dg(j, q, k)).sum::<f64>();
        return Ok(Some(0.5 * v));
    }
    if bi == bk && bj != bi {
        let v = block(bi).into_iter().map(|q| jet.ginv[(i, q)] * jet.dg(k, q, j)).sum::<f64>();
        return Ok(Some(0.5 * v));
    }
    if bj == bk && bi != bj {
        let v = block(bi).into_iter().map(|q| jet.ginv[(i, q)] * jet.dg(j, k, q)).sum::<f64>();
        return Ok(Some(-0.5 * v));
    }
    Ok(None)
}

pub(crate) fn ricci_from_jet(jet: &MetricJet) -> DMatrix<f64> {
    let n = jet.g.nrows();
    let gam = christoffel_from_jet(jet);
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    // ∂_m g^{il} = −g^{ia} ∂_m g_{ab} g^{bl}
    let mut dginv = vec![0.0; n * n * n];
    for m in 0..n {
        let dg = DMatrix::from_fn(n, n, |a, b| jet.dg(a, b, m));
        let prod = -(&jet.ginv * dg * &jet.ginv);
        for i in 0..n {
            for l in 0..n {
                dginv[idx(m, i, l)] = prod[(i, l)];
            }
        }
    }
    // dgam[m][i][j][k] = ∂_m Γ^i_{jk}
    let mut low = vec![0.0; n * n * n];
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                low[idx(l, j, k)] = lowered(jet, l, j, k, None);
            }
        }
    }
    let mut dgam = vec![0.0; n * n * n * n];
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut v = 0.0;
                    for l in 0..n {
                        v += dginv[idx(m, i, l)] * low[idx(l, j, k)] + jet.ginv[(i, l)] * lowered(jet, l, j, k, Some(m));
                    }
                    dgam[((m * n + i) * n + j) * n + k] = v;
                    dgam[((m * n + i) * n + k) * n + j] = v;
                }
            }
        }
    }
    let dg = |m: usize, i: usize, j: usize, k: usize| dgam[((m * n + i) * n + j) * n + k];
    let mut ric = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut v = 0.0;
            for l in 0..n {
                v += dg(l, l, j, k) - dg(j, l, l, k);
                for m in 0..n {
                    v += gam.get(m, j, k) * gam.get(l, l, m) - gam.get(m, l, k) * gam.get(l, j, m);
                }
            }
            ric[(j, k)] = v;
        }
    }
    ric
}

/// Generic Ricci tensor R_{jk} = ∂_l Γ^l_{jk} − ∂_j Γ^l_{lk} + Γ^m_{jk} Γ^l_{lm} − Γ^m_{lk} Γ^l_{jm}.
pub fn ricci_at(geom: &Geometry, p: &[f64]) -> Result<RicciAtPoint, SpecError> {
    let jet = geom.metric_at(p, 2)?;
    Ok(RicciAtPoint {
        point: p.to_vec(),
        ricci: ricci_from_jet(&jet),
    })
}

/// First and second log-derivatives of a positive or negative jet.
struct LogDerivs {
    d1: Vec<f64>,
    d2: Vec<f64>,
    n: usize,
}

impl LogDerivs {
    fn new(t: &Taylor, n: usize) -> LogDerivs {
        let f = t.value();
        let d1: Vec<f64> = (0..n).map(|j| t.partial(&[j]) / f).collect();
        let mut d2 = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                d2[j * n + k] = t.partial(&[j, k]) / f - d1[j] * d1[k];
            }
        }
        LogDerivs { d1, d2, n }
    }

    fn d2(&self, j: usize, k: usize) -> f64 {
        self.d2[j * self.n + k]
    }
}

/// Off-block Ricci component R_{jk} (j, k in different groups) from the
/// Stäckel data only:
///
/// ```text
/// −¾ ∂_j∂_k log[(det S)^{n−2} / Π (s^{γ1})^{l_γ}] + ¼ T, with
/// T = (l_α + l_β − 2)(s^{α1}s^{β1}/det S) ∂_j∂_k(det S/(s^{α1}s^{β1}))
///   + Σ_{γ≠α,β} l_γ [∂_j log(s^{γ1}/det S) ∂_k log(s^{α1}/det S)
///                   + ∂_j log(s^{β1}/det S) ∂_k log(s^{γ1}/det S)
///                   − (det S/s^{γ1}) ∂_j∂_k(s^{γ1}/det S)]
/// ```
pub fn ricci_offblock_closed(geom: &Geometry, p: &[f64], j: usize, k: usize) -> Result<f64, SpecError> {
    let chart = geom.chart();
    let (a, b) = (chart.block_of(j), chart.block_of(k));
    assert_ne!(a, b, "closed form applies to off-block components only");
    let n = chart.n();
    let r = chart.r();
    let l = chart.block_sizes();
    let jets = geom.stackel_jets(p, 2)?;
    let ld = LogDerivs::new(&jets.det, n);
    let ls: Vec<LogDerivs> = (0..r).map(|c| LogDerivs::new(&jets.cof[c][0], n)).collect();

    // derivatives of log(s^{γ1}/det S)
    let q1 = |c: usize, x: usize| ls[c].d1[x] - ld.d1[x];
    let q2 = |c: usize| ls[c].d2(j, k) - ld.d2(j, k);

    let mut main = (n as f64 - 2.0) * ld.d2(j, k);
    for (c, lc) in ls.iter().enumerate() {
        main -= l[c] as f64 * lc.d2(j, k);
    }

    // log h, h = det S/(s^{α1}s^{β1})
    let h1 = |x: usize| ld.d1[x] - ls[a].d1[x] - ls[b].d1[x];
    let h2 = ld.d2(j, k) - ls[a].d2(j, k) - ls[b].d2(j, k);
    let mut t = (l[a] + l[b]) as f64 - 2.0;
    t *= h2 + h1(j) * h1(k);
    for c in (0..r).filter(|&c| c != a && c != b) {
        let second = q2(c) + q1(c, j) * q1(c, k);
        t += l[c] as f64 * (q1(c, j) * q1(a, k) + q1(b, j) * q1(c, k) - second);
    }
    Ok(-0.75 * main + 0.25 * t)
}
