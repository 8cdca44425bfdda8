//! Deterministic SQL text generation.
//!
//! Display form uses upper-case keywords; the canonical form (used for
//! hashing) is identical except that keywords and function names are lower
//! case. Output always uses single spaces, so no further whitespace
//! normalization is needed.

use std::fmt::Write;

use super::ast::*;
use super::SqlError;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Case {
    Upper,
    Lower,
}

struct Printer {
    case: Case,
    out: String,
}

const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_UNARY: u8 = 8;
const PREC_ATOM: u8 = 9;

fn expr_precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { op: UnaryOp::Not, .. } => PREC_NOT,
        Expr::Unary { op: UnaryOp::Neg, .. } => PREC_UNARY,
        Expr::Between { .. } | Expr::InList { .. } | Expr::IsNull { .. } | Expr::Like { .. } => PREC_CMP,
        Expr::Literal(Literal::Int(v)) if *v < 0 => PREC_UNARY,
        Expr::Literal(Literal::Float(v)) if v.is_sign_negative() => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

pub fn is_plain_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !super::parser::is_reserved(s)
}

impl Printer {
    fn new(case: Case) -> Self {
        Printer {
            case,
            out: String::new(),
        }
    }

    fn kw(&mut self, k: &str) {
        match self.case {
            Case::Upper => self.out.push_str(k),
            Case::Lower => self.out.push_str(&k.to_ascii_lowercase()),
        }
    }

    fn ident(&mut self, s: &str) {
        if is_plain_identifier(s) {
            self.out.push_str(s);
        } else {
            self.out.push('"');
            self.out.push_str(&s.replace('"', "\"\""));
            self.out.push('"');
        }
    }

    fn object_name(&mut self, n: &ObjectName) {
        for (i, part) in n.0.iter().enumerate() {
            if i > 0 {
                self.out.push('.');
            }
            self.ident(part);
        }
    }

    fn literal(&mut self, l: &Literal) -> Result<(), SqlError> {
        match l {
            Literal::Null => self.kw("NULL"),
            Literal::Bool(true) => self.kw("TRUE"),
            Literal::Bool(false) => self.kw("FALSE"),
            Literal::Int(v) => write!(self.out, "{v}").unwrap(),
            Literal::Float(v) => {
                if !v.is_finite() {
                    return Err(SqlError::Unsupported(format!("non-finite literal {v}")));
                }
                // Debug formatting is the shortest round-tripping form and
                // always marks integral values with ".0".
                write!(self.out, "{v:?}").unwrap();
            }
            Literal::Str(s) => {
                self.out.push('\'');
                self.out.push_str(&s.replace('\'', "''"));
                self.out.push('\'');
            }
        }
        Ok(())
    }

    fn child(&mut self, e: &Expr, min_prec: u8) -> Result<(), SqlError> {
        if expr_precedence(e) < min_prec {
            self.out.push('(');
            self.expr(e)?;
            self.out.push(')');
            Ok(())
        } else {
            self.expr(e)
        }
    }

    /// Operand of AND/OR: anything that is not atomic is parenthesized,
    /// except a left-nested chain of the same connective.
    fn logical_operand(&mut self, e: &Expr, op: BinaryOp, is_left: bool) -> Result<(), SqlError> {
        let same_chain = matches!(e, Expr::Binary { op: o, .. } if *o == op) && is_left;
        if same_chain || expr_precedence(e) >= PREC_ATOM {
            self.expr(e)
        } else {
            self.out.push('(');
            self.expr(e)?;
            self.out.push(')');
            Ok(())
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<(), SqlError> {
        match e {
            Expr::Column(c) => {
                if let Some(t) = &c.table {
                    self.ident(t);
                    self.out.push('.');
                }
                self.ident(&c.name);
            }
            Expr::Literal(l) => self.literal(l)?,
            Expr::Placeholder(p) => {
                self.out.push('$');
                self.out.push_str(p);
            }
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                self.out.push('-');
                // avoid "--" (a comment) and folding into a negative literal
                if matches!(**expr, Expr::Unary { op: UnaryOp::Neg, .. } | Expr::Literal(Literal::Int(_) | Literal::Float(_)))
                    || expr_precedence(expr) == PREC_UNARY
                {
                    self.out.push('(');
                    self.expr(expr)?;
                    self.out.push(')');
                } else {
                    self.child(expr, PREC_UNARY)?;
                }
            }
            Expr::Unary { op: UnaryOp::Not, expr } => {
                self.kw("NOT");
                self.out.push(' ');
                self.child(expr, PREC_CMP)?;
            }
            Expr::Binary { op, left, right } => {
                if matches!(op, BinaryOp::And | BinaryOp::Or) {
                    self.logical_operand(left, *op, true)?;
                    self.out.push(' ');
                    self.kw(op.symbol());
                    self.out.push(' ');
                    self.logical_operand(right, *op, false)?;
                } else {
                    let p = op.precedence();
                    self.child(left, p)?;
                    self.out.push(' ');
                    self.out.push_str(op.symbol());
                    self.out.push(' ');
                    self.child(right, p + 1)?;
                }
            }
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => {
                self.child(expr, PREC_CMP + 1)?;
                self.out.push(' ');
                if *negated {
                    self.kw("NOT");
                    self.out.push(' ');
                }
                self.kw("BETWEEN");
                self.out.push(' ');
                self.child(low, PREC_CMP + 1)?;
                self.out.push(' ');
                self.kw("AND");
                self.out.push(' ');
                self.child(high, PREC_CMP + 1)?;
            }
            Expr::InList {
                expr,
                list,
                negated,
            } => {
                self.child(expr, PREC_CMP + 1)?;
                self.out.push(' ');
                if *negated {
                    self.kw("NOT");
                    self.out.push(' ');
                }
                self.kw("IN");
                self.out.push_str(" (");
                for (i, item) in list.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(item)?;
                }
                self.out.push(')');
            }
            Expr::IsNull { expr, negated } => {
                self.child(expr, PREC_CMP + 1)?;
                self.out.push(' ');
                self.kw(if *negated { "IS NOT NULL" } else { "IS NULL" });
            }
            Expr::Like {
                expr,
                pattern,
                negated,
                case_insensitive,
            } => {
                self.child(expr, PREC_CMP + 1)?;
                self.out.push(' ');
                if *negated {
                    self.kw("NOT");
                    self.out.push(' ');
                }
                self.kw(if *case_insensitive { "ILIKE" } else { "LIKE" });
                self.out.push(' ');
                self.child(pattern, PREC_CMP + 1)?;
            }
            Expr::Case {
                operand,
                branches,
                else_result,
            } => {
                self.kw("CASE");
                if let Some(o) = operand {
                    self.out.push(' ');
                    self.expr(o)?;
                }
                for b in branches {
                    self.out.push(' ');
                    self.kw("WHEN");
                    self.out.push(' ');
                    self.expr(&b.when)?;
                    self.out.push(' ');
                    self.kw("THEN");
                    self.out.push(' ');
                    self.expr(&b.then)?;
                }
                if let Some(e) = else_result {
                    self.out.push(' ');
                    self.kw("ELSE");
                    self.out.push(' ');
                    self.expr(e)?;
                }
                self.out.push(' ');
                self.kw("END");
            }
            Expr::Function(f) => {
                self.kw(&f.name);
                self.out.push('(');
                if f.distinct {
                    self.kw("DISTINCT");
                    self.out.push(' ');
                }
                if f.star {
                    self.out.push('*');
                }
                for (i, a) in f.args.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(a)?;
                }
                self.out.push(')');
                if let Some(flt) = &f.filter {
                    self.out.push(' ');
                    self.kw("FILTER");
                    self.out.push_str(" (");
                    self.kw("WHERE");
                    self.out.push(' ');
                    self.expr(flt)?;
                    self.out.push(')');
                }
            }
            Expr::Subquery(q) => {
                self.out.push('(');
                self.query(q)?;
                self.out.push(')');
            }
        }
        Ok(())
    }

    fn table_ref(&mut self, t: &TableRef) -> Result<(), SqlError> {
        match t {
            TableRef::Table { name, alias } => {
                self.object_name(name);
                if let Some(a) = alias {
                    self.out.push(' ');
                    self.kw("AS");
                    self.out.push(' ');
                    self.ident(a);
                }
            }
            TableRef::Subquery { query, alias } => {
                self.out.push('(');
                self.query(query)?;
                self.out.push(')');
                if let Some(a) = alias {
                    self.out.push(' ');
                    self.kw("AS");
                    self.out.push(' ');
                    self.ident(a);
                }
            }
            TableRef::Join {
                left,
                right,
                kind,
                on,
            } => {
                self.table_ref(left)?;
                self.out.push(' ');
                self.kw(match kind {
                    JoinKind::Inner => "JOIN",
                    JoinKind::Left => "LEFT JOIN",
                    JoinKind::Cross => "CROSS JOIN",
                });
                self.out.push(' ');
                if matches!(**right, TableRef::Join { .. }) {
                    return Err(SqlError::Unsupported("right-nested join".into()));
                }
                self.table_ref(right)?;
                if let Some(cond) = on {
                    self.out.push(' ');
                    self.kw("ON");
                    self.out.push(' ');
                    self.expr(cond)?;
                }
            }
        }
        Ok(())
    }

    fn query(&mut self, q: &Query) -> Result<(), SqlError> {
        if !q.ctes.is_empty() {
            self.kw("WITH");
            self.out.push(' ');
            for (i, cte) in q.ctes.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.ident(&cte.name);
                self.out.push(' ');
                self.kw("AS");
                self.out.push_str(" (");
                self.query(&cte.query)?;
                self.out.push(')');
            }
            self.out.push(' ');
        }
        self.kw("SELECT");
        self.out.push(' ');
        if q.distinct {
            self.kw("DISTINCT");
            self.out.push(' ');
        }
        if q.select.is_empty() {
            return Err(SqlError::Unsupported("empty select list".into()));
        }
        for (i, item) in q.select.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            match item {
                SelectItem::Wildcard => self.out.push('*'),
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr)?;
                    if let Some(a) = alias {
                        self.out.push(' ');
                        self.kw("AS");
                        self.out.push(' ');
                        self.ident(a);
                    }
                }
            }
        }
        if let Some(from) = &q.from {
            self.out.push(' ');
            self.kw("FROM");
            self.out.push(' ');
            self.table_ref(from)?;
        }
        if let Some(w) = &q.selection {
            self.out.push(' ');
            self.kw("WHERE");
            self.out.push(' ');
            self.expr(w)?;
        }
        if !q.group_by.is_empty() {
            self.out.push(' ');
            self.kw("GROUP BY");
            self.out.push(' ');
            for (i, g) in q.group_by.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.expr(g)?;
            }
        }
        if !q.order_by.is_empty() {
            self.out.push(' ');
            self.kw("ORDER BY");
            self.out.push(' ');
            for (i, o) in q.order_by.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.expr(&o.expr)?;
                if o.desc {
                    self.out.push(' ');
                    self.kw("DESC");
                }
            }
        }
        if let Some(n) = q.limit {
            self.out.push(' ');
            self.kw("LIMIT");
            write!(self.out, " {n}").unwrap();
        }
        Ok(())
    }

    fn statement(&mut self, s: &Statement) -> Result<(), SqlError> {
        match s {
            Statement::Query(q) => self.query(q)?,
            Statement::CreateSchema {
                name,
                if_not_exists,
            } => {
                self.kw("CREATE SCHEMA");
                if *if_not_exists {
                    self.out.push(' ');
                    self.kw("IF NOT EXISTS");
                }
                self.out.push(' ');
                self.ident(name);
            }
            Statement::CreateTableAs {
                name,
                if_not_exists,
                query,
            } => {
                self.kw("CREATE TABLE");
                if *if_not_exists {
                    self.out.push(' ');
                    self.kw("IF NOT EXISTS");
                }
                self.out.push(' ');
                self.object_name(name);
                self.out.push(' ');
                self.kw("AS");
                self.out.push(' ');
                self.query(query)?;
            }
            Statement::DropTable { name, if_exists } => {
                self.kw("DROP TABLE");
                if *if_exists {
                    self.out.push(' ');
                    self.kw("IF EXISTS");
                }
                self.out.push(' ');
                self.object_name(name);
            }
            Statement::DropSchema {
                name,
                if_exists,
                cascade,
            } => {
                self.kw("DROP SCHEMA");
                if *if_exists {
                    self.out.push(' ');
                    self.kw("IF EXISTS");
                }
                self.out.push(' ');
                self.ident(name);
                if *cascade {
                    self.out.push(' ');
                    self.kw("CASCADE");
                }
            }
        }
        Ok(())
    }
}

/// Display SQL for a query.
pub fn to_sql(q: &Query) -> Result<String, SqlError> {
    let mut p = Printer::new(Case::Upper);
    p.query(q)?;
    Ok(p.out)
}

/// Canonical SQL (lower-case keywords) used as hash input.
pub fn to_canonical_sql(q: &Query) -> Result<String, SqlError> {
    let mut p = Printer::new(Case::Lower);
    p.query(q)?;
    Ok(p.out)
}

pub fn statement_to_sql(s: &Statement) -> Result<String, SqlError> {
    let mut p = Printer::new(Case::Upper);
    p.statement(s)?;
    Ok(p.out)
}

/// Display SQL for an expression. Non-finite literals render as `NULL`
/// here; use [`try_expr_to_sql`] to surface them as errors.
pub fn expr_to_sql(e: &Expr) -> String {
    try_expr_to_sql(e).unwrap_or_else(|_| "NULL".into())
}

pub fn try_expr_to_sql(e: &Expr) -> Result<String, SqlError> {
    let mut p = Printer::new(Case::Upper);
    p.expr(e)?;
    Ok(p.out)
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&expr_to_sql(self))
    }
}

impl std::fmt::Display for Query {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match to_sql(self) {
            Ok(s) => f.write_str(&s),
            Err(e) => write!(f, "<unprintable query: {e}>"),
        }
    }
}

/// Collapses runs of whitespace to single spaces and trims, without
/// touching quoted strings.
pub fn normalize_whitespace(sql: &str) -> String {
    let mut out = String::with_capacity(sql.len());
    let mut in_str = false;
    let mut pending_space = false;
    for c in sql.chars() {
        if in_str {
            out.push(c);
            if c == '\'' {
                in_str = false;
            }
            continue;
        }
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            let last = out.chars().last();
            // no space after "(" or before ")" / ","
            if !matches!(last, Some('(')) && !matches!(c, ')' | ',') {
                out.push(' ');
            }
            pending_space = false;
        }
        if c == '\'' {
            in_str = true;
        }
        out.push(c);
    }
    out
}
