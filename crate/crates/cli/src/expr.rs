//! Coefficient expressions in the variables `U`, `a`, `x`.

use std::collections::BTreeSet;
use std::sync::Arc;

use evalexpr::{build_operator_tree, Context, EvalexprError, EvalexprResult, Node, Value};

/// Variables an expression may use.
pub const VARIABLES: [&str; 5] = ["U", "a", "x", "pi", "e"];

struct Vars {
    u: Value,
    a: Value,
    x: Value,
    pi: Value,
    e: Value,
}

impl Context for Vars {
    fn get_value(&self, identifier: &str) -> Option<&Value> {
        match identifier {
            "U" => Some(&self.u),
            "a" => Some(&self.a),
            "x" => Some(&self.x),
            "pi" => Some(&self.pi),
            "e" => Some(&self.e),
            _ => None,
        }
    }

    fn call_function(&self, identifier: &str, argument: &Value) -> EvalexprResult<Value> {
        let f: fn(f64) -> f64 = match identifier {
            "exp" => f64::exp,
            "ln" => f64::ln,
            "log10" => f64::log10,
            "sqrt" => f64::sqrt,
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            "tanh" => f64::tanh,
            "abs" => f64::abs,
            _ => return Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string())),
        };
        Ok(Value::Float(f(argument.as_number()?)))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<()> {
        Err(EvalexprError::ContextNotMutable)
    }
}

/// A parsed expression.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    node: Arc<Node>,
}

impl Expr {
    /// Parses `source` and checks it evaluates to a number at a sample point.
    pub fn parse(source: &str) -> Result<Self, String> {
        let node = build_operator_tree(source).map_err(|e| format!("cannot parse `{source}`: {e}"))?;
        let unknown: BTreeSet<String> = node
            .iter_variable_identifiers()
            .filter(|v| !VARIABLES.contains(v))
            .map(str::to_string)
            .collect();
        if !unknown.is_empty() {
            return Err(format!(
                "`{source}` uses unknown variables {unknown:?}; allowed are {VARIABLES:?}"
            ));
        }
        let expr = Self {
            source: source.to_string(),
            node: Arc::new(node),
        };
        expr.try_eval(0.5, 0.5, 0.5)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses(&self, var: &str) -> bool {
        self.node.iter_variable_identifiers().any(|v| v == var)
    }

    pub fn try_eval(&self, u: f64, a: f64, x: f64) -> Result<f64, String> {
        let vars = Vars {
            u: Value::Float(u),
            a: Value::Float(a),
            x: Value::Float(x),
            pi: Value::Float(std::f64::consts::PI),
            e: Value::Float(std::f64::consts::E),
        };
        self.node
            .eval_number_with_context(&vars)
            .map_err(|e| format!("cannot evaluate `{}`: {e}", self.source))
    }

    /// Evaluation errors become NaN, which coefficient validation rejects.
    pub fn eval(&self, u: f64, a: f64, x: f64) -> f64 {
        self.try_eval(u, a, x).unwrap_or(f64::NAN)
    }
}
