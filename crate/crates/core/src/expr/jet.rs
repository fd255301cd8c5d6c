use std::collections::HashMap;
use std::sync::Arc;

use super::{differentiate, Binding, EvalError, Expr, Tape};

/// Monomial layout for truncated multivariate Taylor polynomials in `n`
/// variables up to total degree `order`. Monomials are sorted by degree.
#[derive(Debug)]
pub struct JetLayout {
    n: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    factorial: Vec<f64>,
    products: Vec<(usize, usize, usize)>,
}

fn fact(k: u8) -> f64 {
    (1..=k as u32).map(|i| i as f64).product()
}

impl JetLayout {
    pub fn new(n: usize, order: usize) -> Arc<JetLayout> {
        let mut exps: Vec<Vec<u8>> = vec![vec![0; n]];
        let mut frontier = exps.clone();
        for _ in 0..order {
            let mut next = Vec::new();
            for e in &frontier {
                // extend only at or after the last nonzero slot to avoid duplicates
                let start = e.iter().rposition(|&k| k > 0).unwrap_or(0);
                for v in start..n {
                    let mut f = e.clone();
                    f[v] += 1;
                    next.push(f);
                }
            }
            exps.extend(next.iter().cloned());
            frontier = next;
        }
        let index: HashMap<Vec<u8>, usize> = exps.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        let factorial = exps.iter().map(|e| e.iter().map(|&k| fact(k)).product()).collect();
        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = index.get(&sum) {
                    products.push((i, j, k));
                }
            }
        }
        Arc::new(JetLayout {
            n,
            order,
            exps,
            index,
            factorial,
            products,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exps
    }

    pub fn position(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    fn degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&k| k as usize).sum()
    }
}

/// Truncated Taylor expansion around a point. `coeffs[i]` is the derivative
/// for monomial `i` divided by its multi-index factorial. Only terms up to
/// `order` (which may be below the layout order after differentiation) are
/// meaningful.
#[derive(Clone, Debug)]
pub struct Taylor {
    layout: Arc<JetLayout>,
    order: usize,
    coeffs: Vec<f64>,
}

impl Taylor {
    pub fn constant(layout: &Arc<JetLayout>, v: f64) -> Taylor {
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = v;
        Taylor {
            layout: layout.clone(),
            order: layout.order,
            coeffs,
        }
    }

    pub fn zero(layout: &Arc<JetLayout>) -> Taylor {
        Taylor::constant(layout, 0.0)
    }

    /// Builds a jet from a partial-derivative oracle; `f` receives the
    /// variable indices with repetition, as in [`Taylor::partial`].
    pub fn from_partials(layout: &Arc<JetLayout>, f: impl Fn(&[usize]) -> f64) -> Taylor {
        let coeffs = layout
            .exps
            .iter()
            .zip(&layout.factorial)
            .map(|(e, fct)| {
                let vars: Vec<usize> = e.iter().enumerate().flat_map(|(v, &k)| std::iter::repeat_n(v, k as usize)).collect();
                f(&vars) / fct
            })
            .collect();
        Taylor {
            layout: layout.clone(),
            order: layout.order,
            coeffs,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Partial derivative for the given variable indices (any order, with
    /// repetition), e.g. `[0, 0, 1]` for ∂₀²∂₁.
    pub fn partial(&self, vars: &[usize]) -> f64 {
        assert!(vars.len() <= self.order, "derivative order exceeds jet order");
        let mut e = vec![0u8; self.layout.n];
        for &v in vars {
            e[v] += 1;
        }
        let i = self.layout.index[&e];
        self.coeffs[i] * self.layout.factorial[i]
    }

    pub fn add(&self, other: &Taylor) -> Taylor {
        let order = self.order.min(other.order);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Taylor {
            layout: self.layout.clone(),
            order,
            coeffs,
        }
        .truncated()
    }

    pub fn sub(&self, other: &Taylor) -> Taylor {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Taylor {
        Taylor {
            layout: self.layout.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    pub fn mul(&self, other: &Taylor) -> Taylor {
        let order = self.order.min(other.order);
        let mut coeffs = vec![0.0; self.layout.len()];
        for &(i, j, k) in &self.layout.products {
            if self.layout.degree(k) <= order {
                coeffs[k] += self.coeffs[i] * other.coeffs[j];
            }
        }
        Taylor {
            layout: self.layout.clone(),
            order,
            coeffs,
        }
    }

    /// ∂/∂x_v; the result is valid to one order less.
    pub fn deriv(&self, v: usize) -> Taylor {
        assert!(self.order > 0, "cannot differentiate an order-0 jet");
        let mut coeffs = vec![0.0; self.layout.len()];
        for (i, e) in self.layout.exps.iter().enumerate() {
            if self.layout.degree(i) + 1 > self.order {
                continue;
            }
            let mut up = e.clone();
            up[v] += 1;
            if let Some(j) = self.layout.position(&up) {
                coeffs[i] = self.coeffs[j] * up[v] as f64;
            }
        }
        Taylor {
            layout: self.layout.clone(),
            order: self.order - 1,
            coeffs,
        }
    }

    fn truncated(mut self) -> Taylor {
        for i in 0..self.coeffs.len() {
            if self.layout.degree(i) > self.order {
                self.coeffs[i] = 0.0;
            }
        }
        self
    }
}

/// Value and partial derivatives of one expression at a point.
#[derive(Clone, Debug)]
pub struct Jet {
    pub point: Binding,
    pub taylor: Taylor,
}

impl Jet {
    pub fn value(&self) -> f64 {
        self.taylor.value()
    }

    pub fn order(&self) -> usize {
        self.taylor.order()
    }

    /// Partial derivative by variable names, e.g. `["x1", "x2"]`.
    pub fn partial(&self, vars: &[&str]) -> f64 {
        let idx: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.point
                    .names()
                    .iter()
                    .position(|n| n == v)
                    .unwrap_or_else(|| panic!("variable {v} not in jet"))
            })
            .collect();
        self.taylor.partial(&idx)
    }
}

/// Symbolic derivatives of several expressions up to a fixed order, compiled
/// into one shared tape.
#[derive(Clone, Debug)]
pub struct SymbolicJets {
    layout: Arc<JetLayout>,
    count: usize,
    tape: Tape,
}

impl SymbolicJets {
    pub fn new(exprs: &[Expr], vars: &[String], order: usize) -> Result<SymbolicJets, EvalError> {
        let layout = JetLayout::new(vars.len(), order);
        let mut all = Vec::with_capacity(exprs.len() * layout.len());
        for e in exprs {
            let mut derivs: Vec<Expr> = Vec::with_capacity(layout.len());
            for (i, ex) in layout.exps.iter().enumerate() {
                if i == 0 {
                    derivs.push(e.clone());
                    continue;
                }
                let v = ex.iter().rposition(|&k| k > 0).expect("nonzero multi-index");
                let mut parent = ex.clone();
                parent[v] -= 1;
                let p = &derivs[layout.index[&parent]];
                derivs.push(if p.as_num().is_some() {
                    Expr::zero()
                } else {
                    differentiate(p, &vars[v])
                });
            }
            all.extend(derivs);
        }
        let tape = Tape::compile(&all, vars)?;
        Ok(SymbolicJets {
            layout,
            count: exprs.len(),
            tape,
        })
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<Taylor>, EvalError> {
        let raw = self.tape.eval(point)?;
        let m = self.layout.len();
        Ok((0..self.count)
            .map(|k| Taylor {
                layout: self.layout.clone(),
                order: self.layout.order,
                coeffs: (0..m).map(|i| raw[k * m + i] / self.layout.factorial[i]).collect(),
            })
            .collect())
    }
}

/// All partials of `e` up to order `k` at `p` (variables ordered as in `p`).
pub fn jet_of(e: &Expr, p: &Binding, k: usize) -> Result<Jet, EvalError> {
    let sj = SymbolicJets::new(std::slice::from_ref(e), p.names(), k)?;
    let taylor = sj.eval(p.values())?.remove(0);
    Ok(Jet {
        point: p.clone(),
        taylor,
    })
}
