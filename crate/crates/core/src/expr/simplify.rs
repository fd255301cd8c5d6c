use std::collections::HashMap;

use super::{Expr, Node};

/// Best-effort algebraic normalization: constant folding, `0`/`1`
/// identities, merging of like terms in sums and of equal bases in
/// products. Sums are never expanded into products or vice versa.
pub fn simplify(e: &Expr) -> Expr {
    let mut s = Simplifier { memo: HashMap::new() };
    s.run(e)
}

struct Simplifier {
    memo: HashMap<usize, Expr>,
}

#[derive(Default)]
struct Sum {
    constant: f64,
    terms: Vec<(Expr, f64)>,
    index: HashMap<Expr, usize>,
}

impl Sum {
    fn add(&mut self, term: Expr, coef: f64) {
        match self.index.get(&term) {
            Some(&i) => self.terms[i].1 += coef,
            None => {
                self.index.insert(term.clone(), self.terms.len());
                self.terms.push((term, coef));
            }
        }
    }

    fn build(mut self) -> Expr {
        self.terms.retain(|(_, c)| *c != 0.0);
        self.terms.sort_by_key(|(t, _)| t.structural_hash());
        let mut pos: Option<Expr> = None;
        let mut neg: Vec<Expr> = Vec::new();
        for (t, c) in self.terms {
            if c > 0.0 {
                let term = Expr::num(c) * t;
                pos = Some(match pos {
                    None => term,
                    Some(acc) => acc + term,
                });
            } else {
                neg.push(Expr::num(-c) * t);
            }
        }
        let mut out = match pos {
            Some(p) => {
                if self.constant != 0.0 {
                    p + self.constant
                } else {
                    p
                }
            }
            None => {
                if neg.is_empty() {
                    return Expr::num(self.constant);
                }
                if self.constant != 0.0 {
                    Expr::num(self.constant)
                } else {
                    let first = neg.remove(0);
                    -first
                }
            }
        };
        for t in neg {
            out = out - t;
        }
        out
    }
}

#[derive(Default)]
struct Product {
    coef: f64,
    factors: Vec<(Expr, f64)>,
    index: HashMap<Expr, usize>,
}

impl Product {
    fn mul(&mut self, base: Expr, exponent: f64) {
        if let Some(v) = base.as_num() {
            self.coef *= v.powf(exponent);
            return;
        }
        match self.index.get(&base) {
            Some(&i) => self.factors[i].1 += exponent,
            None => {
                self.index.insert(base.clone(), self.factors.len());
                self.factors.push((base, exponent));
            }
        }
    }

    /// Returns (coefficient, monomial without coefficient).
    fn build(mut self) -> (f64, Expr) {
        self.factors.retain(|(_, k)| *k != 0.0);
        self.factors.sort_by_key(|(b, _)| b.structural_hash());
        let mut num = Expr::one();
        let mut den = Expr::one();
        for (b, k) in self.factors {
            if k > 0.0 {
                num = num * b.powf(k);
            } else {
                den = den * b.powf(-k);
            }
        }
        (self.coef, num / den)
    }
}

impl Simplifier {
    fn run(&mut self, e: &Expr) -> Expr {
        if let Some(done) = self.memo.get(&e.id()) {
            return done.clone();
        }
        let out = match e.node() {
            Node::Num(_) | Node::Var(_) => e.clone(),
            Node::Call(f, a) => self.run(a).call(*f),
            Node::Pow(b, x) if x.as_num().is_none() => {
                let b = self.run(b);
                b.pow(self.run(x))
            }
            Node::Add(..) | Node::Sub(..) | Node::Neg(_) | Node::Mul(..) | Node::Div(..) | Node::Pow(..) => {
                let mut sum = Sum::default();
                self.linear(e, 1.0, &mut sum);
                sum.build()
            }
        };
        self.memo.insert(e.id(), out.clone());
        out
    }

    fn linear(&mut self, e: &Expr, scale: f64, sum: &mut Sum) {
        match e.node() {
            Node::Num(v) => sum.constant += scale * v,
            Node::Add(a, b) => {
                self.linear(a, scale, sum);
                self.linear(b, scale, sum);
            }
            Node::Sub(a, b) => {
                self.linear(a, scale, sum);
                self.linear(b, -scale, sum);
            }
            Node::Neg(a) => self.linear(a, -scale, sum),
            _ => {
                let mut prod = Product {
                    coef: 1.0,
                    ..Default::default()
                };
                self.factor(e, 1.0, &mut prod);
                let (c, mono) = prod.build();
                if c == 0.0 {
                    return;
                }
                if let Some(v) = mono.as_num() {
                    sum.constant += scale * c * v;
                } else {
                    sum.add(mono, scale * c);
                }
            }
        }
    }

    fn factor(&mut self, e: &Expr, exponent: f64, prod: &mut Product) {
        match e.node() {
            Node::Mul(a, b) => {
                self.factor(a, exponent, prod);
                self.factor(b, exponent, prod);
            }
            Node::Div(a, b) => {
                self.factor(a, exponent, prod);
                self.factor(b, -exponent, prod);
            }
            Node::Neg(a) => {
                prod.coef = -prod.coef;
                if exponent.fract() != 0.0 {
                    // (-a)^k with fractional k: keep the node intact
                    prod.coef = -prod.coef;
                    let s = self.run(e);
                    prod.mul(s, exponent);
                    return;
                }
                if (exponent as i64) % 2 == 0 {
                    prod.coef = -prod.coef;
                }
                self.factor(a, exponent, prod);
            }
            Node::Pow(b, k) if k.as_num().is_some() && exponent.fract() == 0.0 => {
                let k = k.as_num().unwrap_or(1.0);
                if k.fract() == 0.0 {
                    self.factor(b, exponent * k, prod);
                    return;
                }
                let base = self.run(b);
                match base.node() {
                    Node::Mul(..) | Node::Div(..) | Node::Neg(_) | Node::Num(_) => {
                        prod.mul(base.powf(k), exponent)
                    }
                    _ => prod.mul(base, exponent * k),
                }
            }
            Node::Num(v) => prod.coef *= v.powf(exponent),
            _ => {
                let s = self.run(e);
                match s.node() {
                    Node::Mul(..) | Node::Div(..) | Node::Neg(_) if exponent.fract() == 0.0 => {
                        self.factor(&s, exponent, prod)
                    }
                    _ => prod.mul(s, exponent),
                }
            }
        }
    }
}
