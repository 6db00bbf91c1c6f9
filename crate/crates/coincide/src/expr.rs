//! Scalar expressions in configuration files.
//!
//! Expressions use the `evalexpr` grammar with a few conveniences: every numeric
//! literal is a float (so `1/2` is `0.5`), the usual functions are available
//! without the `math::` prefix, and `pi` and `e` are predefined. Depending on
//! where the expression appears the variables are `x1..xN` (position), `u1..uM`
//! (state) and `d{k}_{i}` (the derivative `∂_i u_k`, both indices from 1).

use std::sync::Arc;

use coincide_core::func::{MatrixFn, ScalarFn, VectorFn};
use coincide_core::linalg::Mat;
use evalexpr::{Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value};

use crate::error::{IoError, IoResult};

type V = Value<DefaultNumericTypes>;

/// Variables an expression may refer to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scope {
    names: Vec<String>,
}

impl Scope {
    /// `x1..xN`.
    pub fn position(dim: usize) -> Self {
        Self { names: (1..=dim).map(|i| format!("x{i}")).collect() }
    }

    /// `x1..xN`, `u1..uM` and `d{k}_{i}`, in that order.
    pub fn forcing(dim: usize, m: usize) -> Self {
        let mut names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        names.extend((1..=m).map(|k| format!("u{k}")));
        for k in 1..=m {
            for i in 1..=dim {
                names.push(format!("d{k}_{i}"));
            }
        }
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Appends `.0` to integer literals so that evalexpr never divides integers.
fn floatify(src: &str) -> String {
    let b = src.as_bytes();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let prev_ident = i > 0 && (b[i - 1].is_ascii_alphanumeric() || b[i - 1] == b'_' || b[i - 1] == b'.');
        if c.is_ascii_digit() && !prev_ident {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i < b.len() && b[i] == b'.' {
                is_float = true;
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push_str(&src[start..i]);
            if !is_float {
                out.push_str(".0");
            }
        } else {
            out.push(c as char);
            i += 1;
        }
    }
    out
}

const FUNCTIONS: &[&str] = &[
    "abs", "sqrt", "cbrt", "exp", "ln", "log10", "sin", "cos", "tan", "sinh", "cosh", "tanh", "atan", "atan2", "pow",
    "min", "max", "hypot", "floor", "ceil", "step",
];

fn one(arg: &V) -> EvalexprResult<f64> {
    arg.as_number()
}

fn two(arg: &V) -> EvalexprResult<(f64, f64)> {
    let t = arg.as_tuple()?;
    if t.len() != 2 {
        return Err(EvalexprError::wrong_function_argument_amount(t.len(), 2));
    }
    Ok((t[0].as_number()?, t[1].as_number()?))
}

fn call(name: &str, arg: &V) -> EvalexprResult<V> {
    let f = match name {
        "abs" => one(arg)?.abs(),
        "sqrt" => one(arg)?.sqrt(),
        "cbrt" => one(arg)?.cbrt(),
        "exp" => one(arg)?.exp(),
        "ln" => one(arg)?.ln(),
        "log10" => one(arg)?.log10(),
        "sin" => one(arg)?.sin(),
        "cos" => one(arg)?.cos(),
        "tan" => one(arg)?.tan(),
        "sinh" => one(arg)?.sinh(),
        "cosh" => one(arg)?.cosh(),
        "tanh" => one(arg)?.tanh(),
        "atan" => one(arg)?.atan(),
        "floor" => one(arg)?.floor(),
        "ceil" => one(arg)?.ceil(),
        // Heaviside step with step(0) = 1.
        "step" => {
            if one(arg)? >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        "atan2" => {
            let (a, b) = two(arg)?;
            a.atan2(b)
        }
        "pow" => {
            let (a, b) = two(arg)?;
            a.powf(b)
        }
        "hypot" => {
            let (a, b) = two(arg)?;
            a.hypot(b)
        }
        "min" | "max" => {
            let t = arg.as_tuple().unwrap_or_else(|_| vec![arg.clone()]);
            let mut acc = if name == "min" { f64::INFINITY } else { f64::NEG_INFINITY };
            for v in t {
                let x = v.as_number()?;
                acc = if name == "min" { acc.min(x) } else { acc.max(x) };
            }
            acc
        }
        _ => return Err(EvalexprError::FunctionIdentifierNotFound(name.to_string())),
    };
    Ok(V::Float(f))
}

struct Vars<'a> {
    names: &'a [String],
    values: Vec<V>,
}

impl Context for Vars<'_> {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&V> {
        self.names.iter().position(|n| n == identifier).map(|i| &self.values[i])
    }

    fn call_function(&self, identifier: &str, argument: &V) -> EvalexprResult<V> {
        call(identifier, argument)
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<()> {
        Err(EvalexprError::CustomMessage("builtin functions cannot be disabled".into()))
    }
}

/// A compiled expression over a fixed [`Scope`].
#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    tree: Arc<Node<DefaultNumericTypes>>,
    names: Arc<Vec<String>>,
}

impl Expr {
    /// Parses `src` and checks that it only uses variables of `scope` (plus `pi`
    /// and `e`) and known functions. `what` names the expression in errors.
    pub fn compile(src: &str, scope: &Scope, what: &str) -> IoResult<Self> {
        let tree = evalexpr::build_operator_tree::<DefaultNumericTypes>(&floatify(src))
            .map_err(|e| IoError::Validation(format!("{what}: cannot parse `{src}`: {e}")))?;
        let mut names = scope.names.clone();
        names.push("pi".into());
        names.push("e".into());
        for v in tree.iter_read_variable_identifiers() {
            if !names.iter().any(|n| n == v) {
                return Err(IoError::Validation(format!("{what}: unknown variable `{v}` in `{src}`")));
            }
        }
        for f in tree.iter_function_identifiers() {
            if !FUNCTIONS.contains(&f) && !f.starts_with("math::") {
                return Err(IoError::Validation(format!("{what}: unknown function `{f}` in `{src}`")));
            }
        }
        let e = Self { source: src.to_string(), tree: Arc::new(tree), names: Arc::new(names) };
        let probe = vec![0.0; scope.len()];
        e.try_eval(&probe).map_err(|err| IoError::Validation(format!("{what}: `{src}` does not evaluate to a number: {err}")))?;
        Ok(e)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, values: &[f64]) -> EvalexprResult<f64> {
        let mut vals: Vec<V> = values.iter().map(|v| V::Float(*v)).collect();
        vals.push(V::Float(std::f64::consts::PI));
        vals.push(V::Float(std::f64::consts::E));
        let ctx = Vars { names: &self.names, values: vals };
        self.tree.eval_number_with_context(&ctx)
    }

    /// Value at `values` (in scope order); `NaN` if evaluation fails.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.try_eval(values).unwrap_or(f64::NAN)
    }

    /// `Some(c)` when the expression does not read any variable.
    pub fn constant_value(&self) -> Option<f64> {
        if self.tree.iter_read_variable_identifiers().any(|v| v != "pi" && v != "e") {
            None
        } else {
            Some(self.eval(&vec![0.0; self.names.len() - 2]))
        }
    }
}

/// A number or an expression string.
#[derive(Clone, Debug, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(untagged)]
pub enum Term {
    Num(f64),
    Text(String),
}

impl Term {
    pub fn compile(&self, scope: &Scope, what: &str) -> IoResult<Expr> {
        match self {
            Term::Num(v) => Expr::compile(&format!("{v:e}"), scope, what),
            Term::Text(s) => Expr::compile(s, scope, what),
        }
    }

    /// `Some(v)` for a literal number or a variable-free expression.
    pub fn constant(&self, scope: &Scope, what: &str) -> IoResult<Option<f64>> {
        match self {
            Term::Num(v) => Ok(Some(*v)),
            Term::Text(_) => Ok(self.compile(scope, what)?.constant_value()),
        }
    }
}

/// Scalar function of position.
pub fn scalar(term: &Term, dim: usize, what: &str) -> IoResult<ScalarFn> {
    let e = term.compile(&Scope::position(dim), what)?;
    Ok(Arc::new(move |x: &[f64]| e.eval(&x[..dim])))
}

/// Vector function of position with one expression per component.
pub fn vector(terms: &[Term], dim: usize, what: &str) -> IoResult<VectorFn> {
    let scope = Scope::position(dim);
    let es = terms.iter().enumerate().map(|(k, t)| t.compile(&scope, &format!("{what}[{k}]"))).collect::<IoResult<Vec<_>>>()?;
    Ok(Arc::new(move |x: &[f64], out: &mut [f64]| {
        for (o, e) in out.iter_mut().zip(&es) {
            *o = e.eval(&x[..dim]);
        }
    }))
}

/// Constant values of `terms`, if every entry is constant.
pub fn constants(terms: &[Term], dim: usize, what: &str) -> IoResult<Option<Vec<f64>>> {
    let scope = Scope::position(dim);
    let mut out = Vec::with_capacity(terms.len());
    for (k, t) in terms.iter().enumerate() {
        match t.constant(&scope, &format!("{what}[{k}]"))? {
            Some(v) => out.push(v),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Checks that `rows` is an `m × m` array.
pub fn check_square(rows: &[Vec<Term>], m: usize, what: &str) -> IoResult<()> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(IoError::Validation(format!("{what} must be a {m}x{m} array")));
    }
    Ok(())
}

/// Constant matrix if every entry is constant.
pub fn constant_matrix(rows: &[Vec<Term>], m: usize, dim: usize, what: &str) -> IoResult<Option<Mat>> {
    check_square(rows, m, what)?;
    let mut a = Mat::zeros(m, m);
    for (r, row) in rows.iter().enumerate() {
        match constants(row, dim, what)? {
            Some(vals) => {
                for (c, v) in vals.into_iter().enumerate() {
                    a[(r, c)] = v;
                }
            }
            None => return Ok(None),
        }
    }
    Ok(Some(a))
}

/// Matrix function of position.
pub fn matrix(rows: &[Vec<Term>], m: usize, dim: usize, what: &str) -> IoResult<MatrixFn> {
    check_square(rows, m, what)?;
    let scope = Scope::position(dim);
    let mut es = Vec::with_capacity(m * m);
    for (r, row) in rows.iter().enumerate() {
        for (c, t) in row.iter().enumerate() {
            es.push(t.compile(&scope, &format!("{what}[{r}][{c}]"))?);
        }
    }
    Ok(Arc::new(move |x: &[f64]| {
        let mut a = Mat::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                a[(r, c)] = es[r * m + c].eval(&x[..dim]);
            }
        }
        a
    }))
}
