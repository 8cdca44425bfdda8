//! Recursive-descent parser for the supported SQL subset.

use super::ast::*;
use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    QuotedIdent(String),
    Number(String),
    Str(String),
    Placeholder(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Star,
}

const RESERVED: &[&str] = &[
    "all", "and", "as", "asc", "between", "by", "case", "cascade", "create", "cross", "desc",
    "distinct", "drop", "else", "end", "exists", "false", "filter", "from", "group", "having",
    "if", "ilike", "in", "inner", "is", "join", "left", "like", "limit", "not", "null", "on",
    "or", "order", "qualify", "schema", "select", "table", "then", "true", "union", "when",
    "where", "with",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

fn tokenize(sql: &str) -> Result<Vec<(Token, usize)>, SqlError> {
    let bytes = sql.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Token::LParen
            }
            ')' => {
                i += 1;
                Token::RParen
            }
            ',' => {
                i += 1;
                Token::Comma
            }
            ';' => {
                i += 1;
                Token::Semicolon
            }
            '*' => {
                i += 1;
                Token::Star
            }
            '.' if !bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()) => {
                i += 1;
                Token::Dot
            }
            '\'' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None => return Err(SqlError::Parse("unterminated string literal".into(), start)),
                        Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some(b'\'') => {
                            i += 1;
                            break;
                        }
                        Some(_) => {
                            let ch = sql[i..].chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                Token::Str(s)
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None => return Err(SqlError::Parse("unterminated identifier".into(), start)),
                        Some(b'"') if bytes.get(i + 1) == Some(&b'"') => {
                            s.push('"');
                            i += 2;
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(_) => {
                            let ch = sql[i..].chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                Token::QuotedIdent(s)
            }
            '$' => {
                i += 1;
                let s = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                if s == i {
                    return Err(SqlError::Parse("empty placeholder name".into(), start));
                }
                Token::Placeholder(sql[s..i].to_string())
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let save = i;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i].is_ascii_digit() {
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        i = save;
                    }
                }
                Token::Number(sql[start..i].to_string())
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Token::Ident(sql[start..i].to_ascii_lowercase())
            }
            _ => {
                let two = sql.get(i..i + 2).unwrap_or("");
                let op: &'static str = match two {
                    "<=" => "<=",
                    ">=" => ">=",
                    "<>" => "<>",
                    "!=" => "<>",
                    "||" => "||",
                    _ => match c {
                        '+' => "+",
                        '-' => "-",
                        '/' => "/",
                        '%' => "%",
                        '=' => "=",
                        '<' => "<",
                        '>' => ">",
                        _ => return Err(SqlError::Parse(format!("unexpected character '{c}'"), start)),
                    },
                };
                i += op.len().max(if two == "!=" { 2 } else { 0 });
                Token::Op(op)
            }
        };
        out.push((tok, start));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(usize::MAX, |(_, o)| *o)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SqlError> {
        Err(SqlError::Parse(msg.into(), self.offset()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(w)) if w == kw)
    }

    fn is_kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Some(Token::Ident(w)) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {}", kw.to_uppercase()))
        }
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Token) -> Result<(), SqlError> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.err(format!("expected {t:?}"))
        }
    }

    fn identifier(&mut self) -> Result<String, SqlError> {
        match self.next() {
            Some(Token::Ident(w)) if !is_reserved(&w) => Ok(w),
            Some(Token::QuotedIdent(w)) => Ok(w),
            _ => {
                self.pos -= 1;
                self.err("expected identifier")
            }
        }
    }

    fn object_name(&mut self) -> Result<ObjectName, SqlError> {
        let mut parts = vec![self.identifier()?];
        while self.eat(&Token::Dot) {
            parts.push(self.identifier()?);
        }
        Ok(ObjectName(parts))
    }

    fn statement(&mut self) -> Result<Statement, SqlError> {
        if self.eat_kw("create") {
            if self.eat_kw("schema") {
                let if_not_exists = self.if_not_exists()?;
                let name = self.identifier()?;
                return Ok(Statement::CreateSchema {
                    name,
                    if_not_exists,
                });
            }
            self.expect_kw("table")?;
            let if_not_exists = self.if_not_exists()?;
            let name = self.object_name()?;
            self.expect_kw("as")?;
            let query = self.query()?;
            return Ok(Statement::CreateTableAs {
                name,
                if_not_exists,
                query,
            });
        }
        if self.eat_kw("drop") {
            if self.eat_kw("schema") {
                let if_exists = self.if_exists()?;
                let name = self.identifier()?;
                let cascade = self.eat_kw("cascade");
                return Ok(Statement::DropSchema {
                    name,
                    if_exists,
                    cascade,
                });
            }
            self.expect_kw("table")?;
            let if_exists = self.if_exists()?;
            let name = self.object_name()?;
            return Ok(Statement::DropTable { name, if_exists });
        }
        Ok(Statement::Query(self.query()?))
    }

    fn if_not_exists(&mut self) -> Result<bool, SqlError> {
        if self.eat_kw("if") {
            self.expect_kw("not")?;
            self.expect_kw("exists")?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn if_exists(&mut self) -> Result<bool, SqlError> {
        if self.eat_kw("if") {
            self.expect_kw("exists")?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        let mut ctes = Vec::new();
        if self.eat_kw("with") {
            loop {
                let name = self.identifier()?;
                self.expect_kw("as")?;
                self.expect(Token::LParen)?;
                let query = self.query()?;
                self.expect(Token::RParen)?;
                ctes.push(Cte { name, query });
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        self.expect_kw("select")?;
        let distinct = self.eat_kw("distinct");
        let mut select = Vec::new();
        loop {
            if self.eat(&Token::Star) {
                select.push(SelectItem::Wildcard);
            } else {
                let expr = self.expr(0)?;
                let alias = self.alias()?;
                select.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat(&Token::Comma) {
                break;
            }
        }
        let from = if self.eat_kw("from") {
            Some(self.from_clause()?)
        } else {
            None
        };
        let selection = if self.eat_kw("where") {
            Some(self.expr(0)?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                group_by.push(self.expr(0)?);
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        for unsupported in ["having", "qualify", "union", "window"] {
            if self.is_kw(unsupported) {
                return Err(SqlError::Unsupported(unsupported.to_uppercase()));
            }
        }
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let expr = self.expr(0)?;
                let desc = if self.eat_kw("desc") {
                    true
                } else {
                    self.eat_kw("asc");
                    false
                };
                order_by.push(OrderItem { expr, desc });
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        let limit = if self.eat_kw("limit") {
            match self.next() {
                Some(Token::Number(n)) => Some(
                    n.parse::<u64>()
                        .map_err(|_| SqlError::Parse(format!("bad LIMIT {n}"), self.offset()))?,
                ),
                _ => return self.err("expected LIMIT count"),
            }
        } else {
            None
        };
        Ok(Query {
            ctes,
            distinct,
            select,
            from,
            selection,
            group_by,
            order_by,
            limit,
        })
    }

    fn alias(&mut self) -> Result<Option<String>, SqlError> {
        if self.eat_kw("as") {
            return Ok(Some(self.identifier()?));
        }
        match self.peek() {
            Some(Token::Ident(w)) if !is_reserved(w) => Ok(Some(self.identifier()?)),
            Some(Token::QuotedIdent(_)) => Ok(Some(self.identifier()?)),
            _ => Ok(None),
        }
    }

    fn from_clause(&mut self) -> Result<TableRef, SqlError> {
        let mut left = self.table_primary()?;
        loop {
            if self.eat(&Token::Comma) {
                let right = self.table_primary()?;
                left = TableRef::Join {
                    left: Box::new(left),
                    right: Box::new(right),
                    kind: JoinKind::Cross,
                    on: None,
                };
                continue;
            }
            let kind = if self.is_kw("join") || (self.is_kw("inner") && self.is_kw_at(1, "join")) {
                self.eat_kw("inner");
                JoinKind::Inner
            } else if self.is_kw("left") {
                self.pos += 1;
                self.eat_kw("outer");
                JoinKind::Left
            } else if self.is_kw("cross") {
                self.pos += 1;
                JoinKind::Cross
            } else {
                break;
            };
            self.expect_kw("join")?;
            let right = self.table_primary()?;
            let on = if kind != JoinKind::Cross {
                self.expect_kw("on")?;
                Some(self.expr(0)?)
            } else {
                None
            };
            left = TableRef::Join {
                left: Box::new(left),
                right: Box::new(right),
                kind,
                on,
            };
        }
        Ok(left)
    }

    fn table_primary(&mut self) -> Result<TableRef, SqlError> {
        if self.eat(&Token::LParen) {
            let query = self.query()?;
            self.expect(Token::RParen)?;
            let alias = self.alias()?;
            return Ok(TableRef::Subquery {
                query: Box::new(query),
                alias,
            });
        }
        let name = self.object_name()?;
        let alias = self.alias()?;
        Ok(TableRef::Table { name, alias })
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        match self.peek()? {
            Token::Op(op) => Some(match *op {
                "+" => BinaryOp::Add,
                "-" => BinaryOp::Sub,
                "/" => BinaryOp::Div,
                "%" => BinaryOp::Mod,
                "=" => BinaryOp::Eq,
                "<>" => BinaryOp::NotEq,
                "<" => BinaryOp::Lt,
                "<=" => BinaryOp::LtEq,
                ">" => BinaryOp::Gt,
                ">=" => BinaryOp::GtEq,
                "||" => BinaryOp::Concat,
                _ => return None,
            }),
            Token::Star => Some(BinaryOp::Mul),
            Token::Ident(w) if w == "and" => Some(BinaryOp::And),
            Token::Ident(w) if w == "or" => Some(BinaryOp::Or),
            _ => None,
        }
    }

    /// Pratt loop; `min_prec` is the weakest operator allowed to bind.
    fn expr(&mut self, min_prec: u8) -> Result<Expr, SqlError> {
        let mut left = self.prefix()?;
        loop {
            // postfix comparison-level forms
            if min_prec <= 4 {
                let negated = self.is_kw("not")
                    && (self.is_kw_at(1, "between")
                        || self.is_kw_at(1, "in")
                        || self.is_kw_at(1, "like")
                        || self.is_kw_at(1, "ilike"));
                if negated {
                    self.pos += 1;
                }
                if self.eat_kw("between") {
                    let low = self.expr(5)?;
                    self.expect_kw("and")?;
                    let high = self.expr(5)?;
                    left = Expr::Between {
                        expr: Box::new(left),
                        low: Box::new(low),
                        high: Box::new(high),
                        negated,
                    };
                    continue;
                }
                if self.eat_kw("in") {
                    self.expect(Token::LParen)?;
                    let mut list = Vec::new();
                    loop {
                        list.push(self.expr(0)?);
                        if !self.eat(&Token::Comma) {
                            break;
                        }
                    }
                    self.expect(Token::RParen)?;
                    left = Expr::InList {
                        expr: Box::new(left),
                        list,
                        negated,
                    };
                    continue;
                }
                let like = if self.eat_kw("like") {
                    Some(false)
                } else if self.eat_kw("ilike") {
                    Some(true)
                } else {
                    None
                };
                if let Some(case_insensitive) = like {
                    let pattern = self.expr(5)?;
                    left = Expr::Like {
                        expr: Box::new(left),
                        pattern: Box::new(pattern),
                        negated,
                        case_insensitive,
                    };
                    continue;
                }
                if self.eat_kw("is") {
                    let negated = self.eat_kw("not");
                    self.expect_kw("null")?;
                    left = Expr::IsNull {
                        expr: Box::new(left),
                        negated,
                    };
                    continue;
                }
            }
            let Some(op) = self.binary_op() else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let right = self.expr(prec + 1)?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn prefix(&mut self) -> Result<Expr, SqlError> {
        match self.peek().cloned() {
            Some(Token::Ident(w)) if w == "not" => {
                self.pos += 1;
                let e = self.expr(4)?;
                Ok(e.not())
            }
            Some(Token::Op("-")) => {
                self.pos += 1;
                let literal = matches!(self.peek(), Some(Token::Number(_)));
                let e = self.expr(8)?;
                Ok(match e {
                    Expr::Literal(Literal::Int(v)) if literal => Expr::int(-v),
                    Expr::Literal(Literal::Float(v)) if literal => Expr::float(-v),
                    other => Expr::Unary {
                        op: UnaryOp::Neg,
                        expr: Box::new(other),
                    },
                })
            }
            Some(Token::Op("+")) => {
                self.pos += 1;
                self.expr(8)
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        let offset = self.offset();
        match self.next() {
            Some(Token::Number(n)) => {
                if !n.contains(['.', 'e', 'E']) {
                    if let Ok(v) = n.parse::<i64>() {
                        return Ok(Expr::int(v));
                    }
                }
                n.parse::<f64>()
                    .map(Expr::float)
                    .map_err(|_| SqlError::Parse(format!("bad number {n}"), offset))
            }
            Some(Token::Str(s)) => Ok(Expr::Literal(Literal::Str(s))),
            Some(Token::Placeholder(p)) => Ok(Expr::Placeholder(p)),
            Some(Token::LParen) => {
                if self.is_kw("select") || self.is_kw("with") {
                    let q = self.query()?;
                    self.expect(Token::RParen)?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let e = self.expr(0)?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(w)) => match w.as_str() {
                "true" => Ok(Expr::boolean(true)),
                "false" => Ok(Expr::boolean(false)),
                "null" => Ok(Expr::null()),
                "case" => self.case_expr(),
                _ if self.peek() == Some(&Token::LParen) => self.function(w),
                _ if is_reserved(&w) => Err(SqlError::Parse(format!("unexpected keyword {w}"), offset)),
                _ => self.column_tail(w),
            },
            Some(Token::QuotedIdent(w)) => self.column_tail(w),
            _ => Err(SqlError::Parse("expected expression".into(), offset)),
        }
    }

    fn column_tail(&mut self, first: String) -> Result<Expr, SqlError> {
        if self.eat(&Token::Dot) {
            let name = self.identifier()?;
            return Ok(Expr::Column(ColumnRef {
                table: Some(first),
                name,
            }));
        }
        Ok(Expr::Column(ColumnRef {
            table: None,
            name: first,
        }))
    }

    fn case_expr(&mut self) -> Result<Expr, SqlError> {
        let operand = if self.is_kw("when") {
            None
        } else {
            Some(Box::new(self.expr(0)?))
        };
        let mut branches = Vec::new();
        while self.eat_kw("when") {
            let when = self.expr(0)?;
            self.expect_kw("then")?;
            let then = self.expr(0)?;
            branches.push(CaseBranch { when, then });
        }
        if branches.is_empty() {
            return self.err("CASE requires at least one WHEN");
        }
        let else_result = if self.eat_kw("else") {
            Some(Box::new(self.expr(0)?))
        } else {
            None
        };
        self.expect_kw("end")?;
        Ok(Expr::Case {
            operand,
            branches,
            else_result,
        })
    }

    fn function(&mut self, name: String) -> Result<Expr, SqlError> {
        self.expect(Token::LParen)?;
        let mut call = FunctionCall::new(&name, vec![]);
        if self.eat(&Token::Star) {
            call.star = true;
        } else if !matches!(self.peek(), Some(Token::RParen)) {
            call.distinct = self.eat_kw("distinct");
            loop {
                call.args.push(self.expr(0)?);
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        self.expect(Token::RParen)?;
        if self.is_kw("filter") && self.peek_at(1) == Some(&Token::LParen) {
            self.pos += 2;
            self.expect_kw("where")?;
            call.filter = Some(Box::new(self.expr(0)?));
            self.expect(Token::RParen)?;
        }
        if self.is_kw("over") {
            return Err(SqlError::Unsupported("window functions".into()));
        }
        Ok(Expr::Function(call))
    }
}

fn parser_for(sql: &str) -> Result<Parser, SqlError> {
    Ok(Parser {
        tokens: tokenize(sql)?,
        pos: 0,
    })
}

fn finish(p: &mut Parser) -> Result<(), SqlError> {
    while p.eat(&Token::Semicolon) {}
    if p.pos < p.tokens.len() {
        return p.err("unexpected trailing input");
    }
    Ok(())
}

pub fn parse_statement(sql: &str) -> Result<Statement, SqlError> {
    let mut p = parser_for(sql)?;
    let s = p.statement()?;
    finish(&mut p)?;
    Ok(s)
}

/// Parses a `;`-separated script.
pub fn parse_statements(sql: &str) -> Result<Vec<Statement>, SqlError> {
    let mut p = parser_for(sql)?;
    let mut out = Vec::new();
    loop {
        while p.eat(&Token::Semicolon) {}
        if p.pos >= p.tokens.len() {
            break;
        }
        out.push(p.statement()?);
        if p.pos < p.tokens.len() && !p.eat(&Token::Semicolon) {
            return p.err("expected ';' between statements");
        }
    }
    Ok(out)
}

pub fn parse_query(sql: &str) -> Result<Query, SqlError> {
    match parse_statement(sql)? {
        Statement::Query(q) => Ok(q),
        _ => Err(SqlError::Unsupported("expected a SELECT query".into())),
    }
}

pub fn parse_expr(sql: &str) -> Result<Expr, SqlError> {
    let mut p = parser_for(sql)?;
    let e = p.expr(0)?;
    finish(&mut p)?;
    Ok(e)
}
