//! SQL subset: syntax tree, parser and a deterministic printer.

pub mod ast;
pub mod format;
pub mod parser;

pub use ast::*;
pub use format::{expr_to_sql, statement_to_sql, to_canonical_sql, to_sql, try_expr_to_sql};
pub use parser::{parse_expr, parse_query, parse_statement, parse_statements};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SqlError {
    #[error("parse error at offset {1}: {0}")]
    Parse(String, usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[cfg(test)]
mod tests;
