//! Scalar symbolic expressions over named real coordinates.
//!
//! [`Expr`] is an immutable, reference-counted AST. Subtrees are shared
//! freely, so differentiated expressions form DAGs; every traversal in this
//! module memoizes on node identity to keep the work linear in the number of
//! distinct nodes.
//!
//! The arithmetic operators on `Expr` go through light-weight smart
//! constructors (constant folding and `0`/`1` identities). [`parse`] builds
//! the raw AST without any rewriting so that printing and re-parsing is
//! structurally faithful.

mod diff;
mod eval;
mod jet;
mod parse;
mod simplify;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

pub use diff::differentiate;
pub use eval::{evaluate, Binding, DomainKind, EvalError, Tape};
pub use jet::{jet_of, Jet, JetLayout, SymbolicJets, Taylor};
pub use parse::{parse, ParseError};
pub use simplify::simplify;

/// Elementary functions accepted by the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Atan,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// One AST node. Children are shared [`Expr`] handles.
#[derive(Debug)]
pub enum Node {
    Num(f64),
    Var(Arc<str>),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
}

/// Immutable scalar expression. Equality and hashing are structural.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

fn num_key(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn node_hash(node: &Node) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    match node {
        Node::Num(v) => {
            0u8.hash(&mut h);
            num_key(*v).hash(&mut h);
        }
        Node::Var(name) => {
            1u8.hash(&mut h);
            name.hash(&mut h);
        }
        Node::Neg(a) => {
            2u8.hash(&mut h);
            a.0.hash.hash(&mut h);
        }
        Node::Add(a, b) => {
            3u8.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Sub(a, b) => {
            4u8.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Mul(a, b) => {
            5u8.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Div(a, b) => {
            6u8.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Pow(a, b) => {
            7u8.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Call(f, a) => {
            8u8.hash(&mut h);
            f.hash(&mut h);
            a.0.hash.hash(&mut h);
        }
    }
    h.finish()
}

impl Expr {
    /// Wraps a node without any rewriting.
    pub fn raw(node: Node) -> Expr {
        let hash = node_hash(&node);
        Expr(Arc::new(Inner { node, hash }))
    }

    pub fn num(v: f64) -> Expr {
        Expr::raw(Node::Num(v))
    }

    pub fn zero() -> Expr {
        Expr::num(0.0)
    }

    pub fn one() -> Expr {
        Expr::num(1.0)
    }

    pub fn var(name: &str) -> Expr {
        Expr::raw(Node::Var(Arc::from(name)))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn as_num(&self) -> Option<f64> {
        match self.node() {
            Node::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    /// Children in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Num(_) | Node::Var(_) => vec![],
            Node::Neg(a) | Node::Call(_, a) => vec![a],
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => vec![a, b],
        }
    }

    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            if let Node::Var(name) = e.node() {
                out.insert(name.to_string());
            }
            stack.extend(e.children());
        }
        out
    }

    pub fn depends_on(&self, var: &str) -> bool {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            if let Node::Var(name) = e.node() {
                if &**name == var {
                    return true;
                }
            }
            stack.extend(e.children());
        }
        false
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if seen.insert(e.id()) {
                stack.extend(e.children());
            }
        }
        seen.len()
    }

    /// Replaces variables by expressions (simultaneously).
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        fn rec(e: &Expr, map: &HashMap<String, Expr>, memo: &mut HashMap<usize, Expr>) -> Expr {
            if let Some(done) = memo.get(&e.id()) {
                return done.clone();
            }
            let out = match e.node() {
                Node::Num(_) => e.clone(),
                Node::Var(name) => map.get(&**name).cloned().unwrap_or_else(|| e.clone()),
                Node::Neg(a) => -rec(a, map, memo),
                Node::Add(a, b) => rec(a, map, memo) + rec(b, map, memo),
                Node::Sub(a, b) => rec(a, map, memo) - rec(b, map, memo),
                Node::Mul(a, b) => rec(a, map, memo) * rec(b, map, memo),
                Node::Div(a, b) => rec(a, map, memo) / rec(b, map, memo),
                Node::Pow(a, b) => rec(a, map, memo).pow(rec(b, map, memo)),
                Node::Call(f, a) => rec(a, map, memo).call(*f),
            };
            memo.insert(e.id(), out.clone());
            out
        }
        rec(self, map, &mut HashMap::new())
    }

    pub fn pow(&self, exponent: Expr) -> Expr {
        if let Some(k) = exponent.as_num() {
            if k == 0.0 {
                return Expr::one();
            }
            if k == 1.0 {
                return self.clone();
            }
            if let Some(b) = self.as_num() {
                if k.fract() == 0.0 || b > 0.0 {
                    return Expr::num(b.powf(k));
                }
            }
        }
        Expr::raw(Node::Pow(self.clone(), exponent))
    }

    pub fn powi(&self, k: i32) -> Expr {
        self.pow(Expr::num(k as f64))
    }

    pub fn powf(&self, k: f64) -> Expr {
        self.pow(Expr::num(k))
    }

    pub fn call(&self, f: Func) -> Expr {
        if let Some(v) = self.as_num() {
            if let Some(folded) = eval::apply_func(f, v) {
                // only fold values that are exactly representable by the
                // simplest cases to keep printing readable
                if folded.is_finite() && (v == 0.0 || matches!(f, Func::Sqrt) && folded.fract() == 0.0) {
                    return Expr::num(folded);
                }
            }
        }
        Expr::raw(Node::Call(f, self.clone()))
    }

    pub fn sin(&self) -> Expr {
        self.call(Func::Sin)
    }
    pub fn cos(&self) -> Expr {
        self.call(Func::Cos)
    }
    pub fn exp(&self) -> Expr {
        self.call(Func::Exp)
    }
    pub fn ln(&self) -> Expr {
        self.call(Func::Log)
    }
    pub fn sqrt(&self) -> Expr {
        self.call(Func::Sqrt)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        if self.0.hash != other.0.hash {
            return false;
        }
        match (self.node(), other.node()) {
            (Node::Num(a), Node::Num(b)) => a == b || (a.is_nan() && b.is_nan()),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Add(a, b), Node::Add(c, d))
            | (Node::Sub(a, b), Node::Sub(c, d))
            | (Node::Mul(a, b), Node::Mul(c, d))
            | (Node::Div(a, b), Node::Div(c, d))
            | (Node::Pow(a, b), Node::Pow(c, d)) => a == c && b == d,
            (Node::Call(f, a), Node::Call(g, b)) => f == g && a == b,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state);
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::num(v)
    }
}

// ---------------------------------------------------------------------------
// smart constructors

fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => {
            if let Node::Neg(inner) = b.node() {
                return sub(a, inner.clone());
            }
            Expr::raw(Node::Add(a, b))
        }
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::num(x - y),
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        _ => {
            if a.ptr_eq(&b) {
                return Expr::zero();
            }
            if let Node::Neg(inner) = b.node() {
                return add(a, inner.clone());
            }
            Expr::raw(Node::Sub(a, b))
        }
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::num(x * y),
        (Some(x), _) if x == 0.0 => Expr::zero(),
        (_, Some(y)) if y == 0.0 => Expr::zero(),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => match (a.node(), b.node()) {
            (Node::Neg(x), Node::Neg(y)) => mul(x.clone(), y.clone()),
            (Node::Neg(x), _) => neg(mul(x.clone(), b)),
            (_, Node::Neg(y)) => neg(mul(a, y.clone())),
            _ => Expr::raw(Node::Mul(a, b)),
        },
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::num(x / y),
        (Some(x), _) if x == 0.0 => Expr::zero(),
        (_, Some(y)) if y == 1.0 => a,
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => {
            if a.ptr_eq(&b) {
                return Expr::one();
            }
            match (a.node(), b.node()) {
                (Node::Neg(x), Node::Neg(y)) => div(x.clone(), y.clone()),
                (Node::Neg(x), _) => neg(div(x.clone(), b)),
                (_, Node::Neg(y)) => neg(div(a, y.clone())),
                _ => Expr::raw(Node::Div(a, b)),
            }
        }
    }
}

fn neg(a: Expr) -> Expr {
    match a.node() {
        Node::Num(v) => Expr::num(-v),
        Node::Neg(inner) => inner.clone(),
        _ => Expr::raw(Node::Neg(a)),
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $f:ident) => {
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(self, rhs)
            }
        }
        impl std::ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(self, rhs.clone())
            }
        }
        impl std::ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(self.clone(), rhs)
            }
        }
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $f(self, Expr::num(rhs))
            }
        }
        impl std::ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $f(self.clone(), Expr::num(rhs))
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(Expr::num(self), rhs)
            }
        }
        impl std::ops::$trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(Expr::num(self), rhs.clone())
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);
binop!(Div, div, div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self.clone())
    }
}

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::zero(), |acc, e| acc + e)
    }
}

impl std::iter::Product for Expr {
    fn product<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::one(), |acc, e| acc * e)
    }
}

// ---------------------------------------------------------------------------
// printing

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e.node() {
        Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => PREC_ATOM,
        Node::Num(_) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
        Node::Neg(_) => PREC_UNARY,
        Node::Add(..) | Node::Sub(..) => PREC_SUM,
        Node::Mul(..) | Node::Div(..) => PREC_PRODUCT,
        Node::Pow(..) => PREC_POW,
    }
}

fn write_num(out: &mut String, v: f64) {
    use std::fmt::Write;
    if v.is_nan() {
        out.push_str("(0/0)");
    } else if v.is_infinite() {
        out.push_str(if v > 0.0 { "(1/0)" } else { "(-1/0)" });
    } else if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        let _ = write!(out, "(-{:?})", -v);
    } else {
        let _ = write!(out, "{v:?}");
    }
}

fn write_expr(e: &Expr, min_prec: u8, out: &mut String) {
    let p = precedence(e);
    let paren = p < min_prec;
    if paren {
        out.push('(');
    }
    match e.node() {
        Node::Num(v) => write_num(out, *v),
        Node::Var(name) => out.push_str(name),
        Node::Neg(a) => {
            out.push('-');
            write_expr(a, PREC_UNARY, out);
        }
        Node::Add(a, b) => {
            write_expr(a, PREC_SUM, out);
            out.push_str(" + ");
            write_expr(b, PREC_SUM + 1, out);
        }
        Node::Sub(a, b) => {
            write_expr(a, PREC_SUM, out);
            out.push_str(" - ");
            write_expr(b, PREC_SUM + 1, out);
        }
        Node::Mul(a, b) => {
            write_expr(a, PREC_PRODUCT, out);
            out.push('*');
            write_expr(b, PREC_PRODUCT + 1, out);
        }
        Node::Div(a, b) => {
            write_expr(a, PREC_PRODUCT, out);
            out.push('/');
            write_expr(b, PREC_PRODUCT + 1, out);
        }
        Node::Pow(a, b) => {
            write_expr(a, PREC_ATOM, out);
            out.push('^');
            write_expr(b, PREC_UNARY, out);
        }
        Node::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(a, 0, out);
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(self, 0, &mut s);
        f.write_str(&s)
    }
}

/// Short rendering for diagnostics.
pub(crate) fn abbreviate(e: &Expr, max_len: usize) -> String {
    let s = e.to_string();
    if s.len() <= max_len {
        s
    } else {
        let mut cut = max_len;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}…", &s[..cut])
    }
}
