use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::{abbreviate, Expr, Func, Node};

/// Variable assignment: ordered list of (name, value) pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Binding {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Binding {
    pub fn new() -> Binding {
        Binding::default()
    }

    pub fn from_pairs<'a, I>(pairs: I) -> Binding
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut b = Binding::new();
        for (name, value) in pairs {
            b.set(name, value);
        }
        b
    }

    pub fn from_slices(names: &[String], values: &[f64]) -> Binding {
        assert_eq!(names.len(), values.len());
        Binding {
            names: names.to_vec(),
            values: values.to_vec(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        match self.names.iter().position(|n| n == name) {
            Some(i) => self.values[i] = value,
            None => {
                self.names.push(name.to_string());
                self.values.push(value);
            }
        }
    }

    pub fn with(&self, name: &str, value: f64) -> Binding {
        let mut b = self.clone();
        b.set(name, value);
        b
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter().copied())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    NegativeBasePower,
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogOfNonPositive => "log of non-positive value",
            DomainKind::SqrtOfNegative => "sqrt of negative value",
            DomainKind::NegativeBasePower => "non-integer power of negative base",
            DomainKind::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    Unbound(String),
    #[error("{kind} in `{expr}`")]
    Domain { kind: DomainKind, expr: String },
}

pub(crate) fn apply_func(f: Func, x: f64) -> Option<f64> {
    Some(match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return None;
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return None;
            }
            x.sqrt()
        }
        Func::Sinh => x.sinh(),
        Func::Cosh => x.cosh(),
        Func::Atan => x.atan(),
    })
}

fn func_domain(f: Func) -> DomainKind {
    match f {
        Func::Log => DomainKind::LogOfNonPositive,
        Func::Sqrt => DomainKind::SqrtOfNegative,
        _ => DomainKind::NonFinite,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Powi(usize, i32),
    Pow(usize, usize),
    Call(Func, usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum OpKey {
    Const(u64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Powi(usize, i32),
    Pow(usize, usize),
    Call(Func, usize),
}

impl Op {
    fn key(self) -> OpKey {
        match self {
            Op::Const(v) => OpKey::Const(if v == 0.0 { 0 } else { v.to_bits() }),
            Op::Var(i) => OpKey::Var(i),
            Op::Neg(a) => OpKey::Neg(a),
            // commutative operations are keyed on sorted operands
            Op::Add(a, b) => OpKey::Add(a.min(b), a.max(b)),
            Op::Sub(a, b) => OpKey::Sub(a, b),
            Op::Mul(a, b) => OpKey::Mul(a.min(b), a.max(b)),
            Op::Div(a, b) => OpKey::Div(a, b),
            Op::Powi(a, k) => OpKey::Powi(a, k),
            Op::Pow(a, b) => OpKey::Pow(a, b),
            Op::Call(f, a) => OpKey::Call(f, a),
        }
    }
}

/// A straight-line program evaluating several expressions at once, with
/// common subexpressions shared (value numbering over the DAG).
#[derive(Clone, Debug)]
pub struct Tape {
    vars: Vec<String>,
    ops: Vec<Op>,
    origin: Vec<Expr>,
    outputs: Vec<usize>,
}

struct Builder<'a> {
    vars: &'a [String],
    ops: Vec<Op>,
    origin: Vec<Expr>,
    by_key: HashMap<OpKey, usize>,
    by_ptr: HashMap<usize, usize>,
}

impl Builder<'_> {
    fn push(&mut self, op: Op, origin: &Expr) -> usize {
        let key = op.key();
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.ops.len();
        self.ops.push(op);
        self.origin.push(origin.clone());
        self.by_key.insert(key, slot);
        slot
    }

    fn visit(&mut self, e: &Expr) -> Result<usize, EvalError> {
        if let Some(&slot) = self.by_ptr.get(&e.id()) {
            return Ok(slot);
        }
        // explicit post-order traversal; expression DAGs can be deep
        let mut stack: Vec<(Expr, bool)> = vec![(e.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if self.by_ptr.contains_key(&node.id()) {
                continue;
            }
            if !expanded {
                stack.push((node.clone(), true));
                for c in node.children() {
                    if !self.by_ptr.contains_key(&c.id()) {
                        stack.push((c.clone(), false));
                    }
                }
                continue;
            }
            let s = |b: &Builder, x: &Expr| b.by_ptr[&x.id()];
            let op = match node.node() {
                Node::Num(v) => Op::Const(*v),
                Node::Var(name) => {
                    let i = self
                        .vars
                        .iter()
                        .position(|v| v == &**name)
                        .ok_or_else(|| EvalError::Unbound(name.to_string()))?;
                    Op::Var(i)
                }
                Node::Neg(a) => Op::Neg(s(self, a)),
                Node::Add(a, b) => Op::Add(s(self, a), s(self, b)),
                Node::Sub(a, b) => Op::Sub(s(self, a), s(self, b)),
                Node::Mul(a, b) => Op::Mul(s(self, a), s(self, b)),
                Node::Div(a, b) => Op::Div(s(self, a), s(self, b)),
                Node::Pow(a, b) => match b.as_num() {
                    Some(k) if k.fract() == 0.0 && k.abs() <= 64.0 => Op::Powi(s(self, a), k as i32),
                    _ => Op::Pow(s(self, a), s(self, b)),
                },
                Node::Call(f, a) => Op::Call(*f, s(self, a)),
            };
            let slot = self.push(op, &node);
            self.by_ptr.insert(node.id(), slot);
        }
        Ok(self.by_ptr[&e.id()])
    }
}

impl Tape {
    /// Compiles `exprs` over the ordered variable list `vars`.
    pub fn compile(exprs: &[Expr], vars: &[String]) -> Result<Tape, EvalError> {
        let mut b = Builder {
            vars,
            ops: Vec::new(),
            origin: Vec::new(),
            by_key: HashMap::new(),
            by_ptr: HashMap::new(),
        };
        let mut outputs = Vec::with_capacity(exprs.len());
        for e in exprs {
            outputs.push(b.visit(e)?);
        }
        Ok(Tape {
            vars: vars.to_vec(),
            ops: b.ops,
            origin: b.origin,
            outputs,
        })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn fail(&self, slot: usize, kind: DomainKind) -> EvalError {
        EvalError::Domain {
            kind,
            expr: abbreviate(&self.origin[slot], 160),
        }
    }

    /// Evaluates every output at `point` (ordered like `vars`).
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(point, &mut scratch, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, point: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), EvalError> {
        assert_eq!(point.len(), self.vars.len(), "point dimension mismatch");
        scratch.clear();
        scratch.reserve(self.ops.len());
        for (slot, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => point[i],
                Op::Neg(a) => -scratch[a],
                Op::Add(a, b) => scratch[a] + scratch[b],
                Op::Sub(a, b) => scratch[a] - scratch[b],
                Op::Mul(a, b) => scratch[a] * scratch[b],
                Op::Div(a, b) => {
                    if scratch[b] == 0.0 {
                        return Err(self.fail(slot, DomainKind::DivisionByZero));
                    }
                    scratch[a] / scratch[b]
                }
                Op::Powi(a, k) => {
                    let x = scratch[a];
                    if x == 0.0 && k < 0 {
                        return Err(self.fail(slot, DomainKind::DivisionByZero));
                    }
                    x.powi(k)
                }
                Op::Pow(a, b) => {
                    let (x, y) = (scratch[a], scratch[b]);
                    if x < 0.0 && y.fract() != 0.0 {
                        return Err(self.fail(slot, DomainKind::NegativeBasePower));
                    }
                    if x == 0.0 && y < 0.0 {
                        return Err(self.fail(slot, DomainKind::DivisionByZero));
                    }
                    x.powf(y)
                }
                Op::Call(f, a) => match apply_func(f, scratch[a]) {
                    Some(v) => v,
                    None => return Err(self.fail(slot, func_domain(f))),
                },
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot];
        }
        Ok(())
    }
}

/// Evaluates `e` under `b`.
pub fn evaluate(e: &Expr, b: &Binding) -> Result<f64, EvalError> {
    let tape = Tape::compile(std::slice::from_ref(e), b.names())?;
    Ok(tape.eval(b.values())?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ev(src: &str, pairs: &[(&str, f64)]) -> Result<f64, EvalError> {
        evaluate(&parse(src).unwrap(), &Binding::from_pairs(pairs.iter().copied()))
    }

    #[test]
    fn basic_values() {
        assert_eq!(ev("2*x1 + sin(x2)", &[("x1", 1.0), ("x2", 0.0)]).unwrap(), 2.0);
        assert_eq!(ev("x1^2", &[("x1", 3.0)]).unwrap(), 9.0);
        assert_eq!(ev("exp(0)", &[]).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        match ev("x1/x2", &[("x1", 1.0), ("x2", 0.0)]) {
            Err(EvalError::Domain { kind, expr }) => {
                assert_eq!(kind, DomainKind::DivisionByZero);
                assert_eq!(expr, "x1/x2");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ev("1 + log(x - 1)", &[("x", 0.5)]),
            Err(EvalError::Domain { kind: DomainKind::LogOfNonPositive, .. })
        ));
        assert!(matches!(
            ev("sqrt(x)", &[("x", -0.5)]),
            Err(EvalError::Domain { kind: DomainKind::SqrtOfNegative, .. })
        ));
    }

    #[test]
    fn unbound_variable() {
        assert_eq!(ev("x + y", &[("x", 1.0)]), Err(EvalError::Unbound("y".into())));
    }

    #[test]
    fn tape_shares_common_subexpressions() {
        let a = parse("sin(x*y) + sin(x*y)^2").unwrap();
        let b = parse("sin(y*x)").unwrap();
        let vars = vec!["x".to_string(), "y".to_string()];
        let tape = Tape::compile(&[a, b], &vars).unwrap();
        // x, y, x*y, sin, literal 2, ^2, +
        assert_eq!(tape.len(), 7);
        let out = tape.eval(&[0.3, 0.4]).unwrap();
        let s = (0.12f64).sin();
        assert_eq!(out[1], s);
        assert!((out[0] - (s + s * s)).abs() < 1e-15);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let e = parse("exp(x)*cos(y)/(1 + x^2.5)").unwrap();
        let b = Binding::from_pairs([("x", 0.37), ("y", -1.1)]);
        let v1 = evaluate(&e, &b).unwrap();
        let v2 = evaluate(&e, &b).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }
}
