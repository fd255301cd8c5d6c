use std::collections::HashMap;

use super::{Expr, Func, Node};

/// Symbolic partial derivative with respect to `var`.
///
/// Shared subtrees are differentiated once. Integer constant exponents use
/// the power rule; other constant exponents are differentiated through the
/// exponential-logarithm form `b^k * (k * b'/b)`, and variable exponents
/// through `b^e * (e' log b + e b'/b)`.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    let mut memo = HashMap::new();
    rec(e, var, &mut memo)
}

fn rec(e: &Expr, var: &str, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.id()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Num(_) => Expr::zero(),
        Node::Var(name) => {
            if &**name == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => -rec(a, var, memo),
        Node::Add(a, b) => rec(a, var, memo) + rec(b, var, memo),
        Node::Sub(a, b) => rec(a, var, memo) - rec(b, var, memo),
        Node::Mul(a, b) => {
            let da = rec(a, var, memo);
            let db = rec(b, var, memo);
            da * b + a * db
        }
        Node::Div(a, b) => {
            let da = rec(a, var, memo);
            let db = rec(b, var, memo);
            if db.is_zero() {
                da / b
            } else {
                (da * b - a * db) / b.powi(2)
            }
        }
        Node::Pow(b, x) => {
            let db = rec(b, var, memo);
            let dx = rec(x, var, memo);
            match x.as_num() {
                Some(k) if dx.is_zero() && k.fract() == 0.0 => Expr::num(k) * b.powf(k - 1.0) * db,
                Some(k) if dx.is_zero() => e * (Expr::num(k) * db / b),
                _ => {
                    if db.is_zero() && dx.is_zero() {
                        Expr::zero()
                    } else if db.is_zero() {
                        e * (dx * b.ln())
                    } else if dx.is_zero() {
                        e * (x * db / b)
                    } else {
                        e * (dx * b.ln() + x * db / b)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let da = rec(a, var, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                let outer = match f {
                    Func::Sin => a.cos(),
                    Func::Cos => -a.sin(),
                    Func::Tan => Expr::one() / a.cos().powi(2),
                    Func::Exp => e.clone(),
                    Func::Log => return store(memo, e, da / a),
                    Func::Sqrt => return store(memo, e, da / (Expr::num(2.0) * e)),
                    Func::Sinh => a.call(Func::Cosh),
                    Func::Cosh => a.call(Func::Sinh),
                    Func::Atan => return store(memo, e, da / (Expr::one() + a.powi(2))),
                };
                outer * da
            }
        }
    };
    store(memo, e, d)
}

fn store(memo: &mut HashMap<usize, Expr>, e: &Expr, d: Expr) -> Expr {
    memo.insert(e.id(), d.clone());
    d
}
