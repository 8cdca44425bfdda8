//! AST for the analytical SQL subset handled by the planner and the engine.

use std::fmt;

/// Possibly schema-qualified relation name, e.g. `mosaic.pre_agg_ab12`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjectName(pub Vec<String>);

impl ObjectName {
    pub fn new(name: &str) -> Self {
        ObjectName(name.split('.').map(str::to_string).collect())
    }

    pub fn base(&self) -> &str {
        self.0.last().map(String::as_str).unwrap_or("")
    }

    pub fn schema(&self) -> Option<&str> {
        if self.0.len() > 1 {
            Some(&self.0[self.0.len() - 2])
        } else {
            None
        }
    }
}

impl fmt::Display for ObjectName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Literal {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Int(v) => Some(*v as f64),
            Literal::Float(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
    Concat,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
            BinaryOp::Concat => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq
            | BinaryOp::NotEq
            | BinaryOp::Lt
            | BinaryOp::LtEq
            | BinaryOp::Gt
            | BinaryOp::GtEq => 4,
            BinaryOp::Concat => 5,
            BinaryOp::Add | BinaryOp::Sub => 6,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 7,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionCall {
    /// Upper-case function name.
    pub name: String,
    pub args: Vec<Expr>,
    /// `COUNT(*)`
    pub star: bool,
    pub distinct: bool,
    /// Aggregate-level `FILTER (WHERE ...)`.
    pub filter: Option<Box<Expr>>,
}

impl FunctionCall {
    pub fn new(name: &str, args: Vec<Expr>) -> Self {
        FunctionCall {
            name: name.to_ascii_uppercase(),
            args,
            star: false,
            distinct: false,
            filter: None,
        }
    }

    pub fn count_star() -> Self {
        FunctionCall {
            star: true,
            ..FunctionCall::new("COUNT", vec![])
        }
    }

    pub fn is_aggregate(&self) -> bool {
        is_aggregate_name(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseBranch {
    pub when: Expr,
    pub then: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    /// `$name`, used by query templates; never executable.
    Placeholder(String),
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    Like {
        expr: Box<Expr>,
        pattern: Box<Expr>,
        negated: bool,
        case_insensitive: bool,
    },
    Case {
        operand: Option<Box<Expr>>,
        branches: Vec<CaseBranch>,
        else_result: Option<Box<Expr>>,
    },
    Function(FunctionCall),
    /// Uncorrelated scalar subquery.
    Subquery(Box<Query>),
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(ColumnRef {
            table: None,
            name: name.to_string(),
        })
    }

    pub fn int(v: i64) -> Expr {
        Expr::Literal(Literal::Int(v))
    }

    pub fn float(v: f64) -> Expr {
        Expr::Literal(Literal::Float(v))
    }

    pub fn string(v: &str) -> Expr {
        Expr::Literal(Literal::Str(v.to_string()))
    }

    pub fn boolean(v: bool) -> Expr {
        Expr::Literal(Literal::Bool(v))
    }

    pub fn null() -> Expr {
        Expr::Literal(Literal::Null)
    }

    /// Numeric literal, kept integral when the value is an exact integer.
    pub fn number(v: f64) -> Expr {
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            Expr::int(v as i64)
        } else {
            Expr::float(v)
        }
    }

    pub fn placeholder(name: &str) -> Expr {
        Expr::Placeholder(name.to_string())
    }

    pub fn func(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Function(FunctionCall::new(name, args))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn and(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::And, self, other)
    }

    pub fn or(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Or, self, other)
    }

    pub fn eq(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Eq, self, other)
    }

    pub fn add(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, self, other)
    }

    pub fn sub(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, self, other)
    }

    pub fn mul(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, self, other)
    }

    pub fn div(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, self, other)
    }

    pub fn not(self) -> Expr {
        Expr::Unary {
            op: UnaryOp::Not,
            expr: Box::new(self),
        }
    }

    pub fn between(self, low: Expr, high: Expr) -> Expr {
        Expr::Between {
            expr: Box::new(self),
            low: Box::new(low),
            high: Box::new(high),
            negated: false,
        }
    }

    pub fn in_list(self, list: Vec<Expr>) -> Expr {
        Expr::InList {
            expr: Box::new(self),
            list,
            negated: false,
        }
    }

    pub fn is_null(self) -> Expr {
        Expr::IsNull {
            expr: Box::new(self),
            negated: false,
        }
    }

    pub fn is_not_null(self) -> Expr {
        Expr::IsNull {
            expr: Box::new(self),
            negated: true,
        }
    }

    /// Folds a list of predicates into a left-deep conjunction.
    pub fn conjunction(parts: impl IntoIterator<Item = Expr>) -> Option<Expr> {
        parts.into_iter().reduce(Expr::and)
    }

    pub fn disjunction(parts: impl IntoIterator<Item = Expr>) -> Option<Expr> {
        parts.into_iter().reduce(Expr::or)
    }

    /// Splits a left/right nested conjunction into its terms.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn go<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Binary {
                    op: BinaryOp::And,
                    left,
                    right,
                } => {
                    go(left, out);
                    go(right, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn disjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn go<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Binary {
                    op: BinaryOp::Or,
                    left,
                    right,
                } => {
                    go(left, out);
                    go(right, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Expr::Literal(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_column(&self) -> Option<&ColumnRef> {
        match self {
            Expr::Column(c) => Some(c),
            _ => None,
        }
    }

    /// Direct children, excluding subquery bodies.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column(_) | Expr::Literal(_) | Expr::Placeholder(_) | Expr::Subquery(_) => vec![],
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => vec![expr],
            Expr::Binary { left, right, .. } => vec![left, right],
            Expr::Between {
                expr, low, high, ..
            } => vec![expr, low, high],
            Expr::InList { expr, list, .. } => {
                let mut v: Vec<&Expr> = vec![expr];
                v.extend(list.iter());
                v
            }
            Expr::Like { expr, pattern, .. } => vec![expr, pattern],
            Expr::Case {
                operand,
                branches,
                else_result,
            } => {
                let mut v: Vec<&Expr> = Vec::new();
                if let Some(o) = operand {
                    v.push(o);
                }
                for b in branches {
                    v.push(&b.when);
                    v.push(&b.then);
                }
                if let Some(e) = else_result {
                    v.push(e);
                }
                v
            }
            Expr::Function(f) => {
                let mut v: Vec<&Expr> = f.args.iter().collect();
                if let Some(flt) = &f.filter {
                    v.push(flt);
                }
                v
            }
        }
    }

    /// Pre-order visit of this expression tree (not descending into subqueries).
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn any(&self, pred: &mut impl FnMut(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        self.children().into_iter().any(|c| c.any(pred))
    }

    pub fn contains_aggregate(&self) -> bool {
        self.any(&mut |e| matches!(e, Expr::Function(f) if f.is_aggregate()))
    }

    pub fn contains_subquery(&self) -> bool {
        self.any(&mut |e| matches!(e, Expr::Subquery(_)))
    }

    /// Column names referenced outside of subqueries, in first-seen order.
    pub fn column_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Column(c) = e {
                if !out.contains(&c.name) {
                    out.push(c.name.clone());
                }
            }
        });
        out
    }

    /// Top-down rewrite: `f` may replace a node, in which case the
    /// replacement is not visited further.
    pub fn rewrite(&self, f: &mut impl FnMut(&Expr) -> Option<Expr>) -> Expr {
        if let Some(r) = f(self) {
            return r;
        }
        let b = |e: &Expr, f: &mut dyn FnMut(&Expr) -> Option<Expr>| -> Box<Expr> {
            Box::new(rewrite_dyn(e, f))
        };
        match self {
            Expr::Column(_) | Expr::Literal(_) | Expr::Placeholder(_) | Expr::Subquery(_) => self.clone(),
            Expr::Unary { op, expr } => Expr::Unary {
                op: *op,
                expr: b(expr, f),
            },
            Expr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: b(left, f),
                right: b(right, f),
            },
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => Expr::Between {
                expr: b(expr, f),
                low: b(low, f),
                high: b(high, f),
                negated: *negated,
            },
            Expr::InList {
                expr,
                list,
                negated,
            } => Expr::InList {
                expr: b(expr, f),
                list: list.iter().map(|e| rewrite_dyn(e, f)).collect(),
                negated: *negated,
            },
            Expr::IsNull { expr, negated } => Expr::IsNull {
                expr: b(expr, f),
                negated: *negated,
            },
            Expr::Like {
                expr,
                pattern,
                negated,
                case_insensitive,
            } => Expr::Like {
                expr: b(expr, f),
                pattern: b(pattern, f),
                negated: *negated,
                case_insensitive: *case_insensitive,
            },
            Expr::Case {
                operand,
                branches,
                else_result,
            } => Expr::Case {
                operand: operand.as_ref().map(|o| b(o, f)),
                branches: branches
                    .iter()
                    .map(|br| CaseBranch {
                        when: rewrite_dyn(&br.when, f),
                        then: rewrite_dyn(&br.then, f),
                    })
                    .collect(),
                else_result: else_result.as_ref().map(|e| b(e, f)),
            },
            Expr::Function(call) => Expr::Function(FunctionCall {
                name: call.name.clone(),
                args: call.args.iter().map(|a| rewrite_dyn(a, f)).collect(),
                star: call.star,
                distinct: call.distinct,
                filter: call.filter.as_ref().map(|x| b(x, f)),
            }),
        }
    }
}

fn rewrite_dyn(e: &Expr, f: &mut dyn FnMut(&Expr) -> Option<Expr>) -> Expr {
    e.rewrite(&mut |x| f(x))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Expr { expr: Expr, alias: Option<String> },
    Wildcard,
}

impl SelectItem {
    pub fn new(expr: Expr, alias: &str) -> Self {
        SelectItem::Expr {
            expr,
            alias: Some(alias.to_string()),
        }
    }

    pub fn unnamed(expr: Expr) -> Self {
        SelectItem::Expr { expr, alias: None }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            SelectItem::Expr { expr, .. } => Some(expr),
            SelectItem::Wildcard => None,
        }
    }

    /// Output column name: the alias, a bare column's name, or the
    /// expression text.
    pub fn output_name(&self) -> Option<String> {
        match self {
            SelectItem::Expr { alias: Some(a), .. } => Some(a.clone()),
            SelectItem::Expr { expr: Expr::Column(c), .. } => Some(c.name.clone()),
            SelectItem::Expr { expr, .. } => Some(super::format::expr_to_sql(expr)),
            SelectItem::Wildcard => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableRef {
    Table {
        name: ObjectName,
        alias: Option<String>,
    },
    Subquery {
        query: Box<Query>,
        alias: Option<String>,
    },
    Join {
        left: Box<TableRef>,
        right: Box<TableRef>,
        kind: JoinKind,
        on: Option<Expr>,
    },
}

impl TableRef {
    pub fn table(name: &str) -> Self {
        TableRef::Table {
            name: ObjectName::new(name),
            alias: None,
        }
    }

    pub fn subquery(query: Query, alias: Option<&str>) -> Self {
        TableRef::Subquery {
            query: Box::new(query),
            alias: alias.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub name: String,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

/// A `SELECT` query. Views describe their data needs with this type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub ctes: Vec<Cte>,
    pub distinct: bool,
    pub select: Vec<SelectItem>,
    pub from: Option<TableRef>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

impl Query {
    pub fn select(items: Vec<SelectItem>) -> Self {
        Query {
            select: items,
            ..Query::default()
        }
    }

    pub fn from(mut self, from: TableRef) -> Self {
        self.from = Some(from);
        self
    }

    pub fn filter(mut self, predicate: Expr) -> Self {
        self.selection = Some(predicate);
        self
    }

    pub fn group_by(mut self, keys: Vec<Expr>) -> Self {
        self.group_by = keys;
        self
    }

    pub fn order_by(mut self, items: Vec<OrderItem>) -> Self {
        self.order_by = items;
        self
    }

    /// True when this query level computes aggregates.
    pub fn is_aggregate(&self) -> bool {
        !self.group_by.is_empty()
            || self
                .select
                .iter()
                .filter_map(SelectItem::expr)
                .any(Expr::contains_aggregate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Query(Query),
    CreateSchema {
        name: String,
        if_not_exists: bool,
    },
    CreateTableAs {
        name: ObjectName,
        if_not_exists: bool,
        query: Query,
    },
    DropTable {
        name: ObjectName,
        if_exists: bool,
    },
    DropSchema {
        name: String,
        if_exists: bool,
        cascade: bool,
    },
}

/// Aggregate functions the engine understands.
pub const AGGREGATE_FUNCTIONS: &[&str] = &[
    "COUNT",
    "SUM",
    "MIN",
    "MAX",
    "PRODUCT",
    "AVG",
    "GEOMEAN",
    "ARG_MIN",
    "ARG_MAX",
    "BIT_AND",
    "BIT_OR",
    "BIT_XOR",
    "BOOL_AND",
    "BOOL_OR",
    "VAR_SAMP",
    "VAR_POP",
    "STDDEV_SAMP",
    "STDDEV_POP",
    "COVAR_SAMP",
    "COVAR_POP",
    "CORR",
    "REGR_COUNT",
    "REGR_AVGX",
    "REGR_AVGY",
    "REGR_SXX",
    "REGR_SYY",
    "REGR_SXY",
    "REGR_SLOPE",
    "REGR_INTERCEPT",
    "REGR_R2",
    "MEDIAN",
];

pub fn is_aggregate_name(name: &str) -> bool {
    AGGREGATE_FUNCTIONS.iter().any(|a| a.eq_ignore_ascii_case(name))
}
