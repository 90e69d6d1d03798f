//! OData-subset resource paths and query options.

mod eval;
mod parser;

use std::fmt;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};

pub use eval::{evaluate, EvalContext, DEFAULT_PAGE_SIZE};
pub use parser::parse_query;

use crate::model::{EntityId, EntityRef};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown entity set `{0}`")]
    UnknownEntitySet(String),
    #[error("unknown option `{0}`")]
    UnknownOption(String),
    #[error("{entity_type} has no relation `{relation}`")]
    UnknownRelation { entity_type: String, relation: String },
    #[error("unknown property `{path}` on {entity_type}")]
    UnknownProperty { entity_type: String, path: String },
    #[error("type mismatch: cannot compare {left} with {right} using {op}")]
    TypeMismatch { left: String, right: String, op: CompareOp },
    #[error("{0} not found")]
    NotFound(EntityRef),
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

impl QueryError {
    pub(crate) fn syntax(offset: usize, message: impl Into<String>) -> Self {
        QueryError::Syntax { offset, message: message.into() }
    }
}

/// One resource path segment: an entity set or navigation, optionally keyed by id.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: String,
    pub id: Option<EntityId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryPlan {
    pub path: Vec<Segment>,
    pub options: QueryOptions,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryOptions {
    pub filter: Option<Expr>,
    pub expand: Vec<ExpandNode>,
    pub select: Vec<String>,
    pub order_by: Vec<OrderKey>,
    pub top: Option<u64>,
    pub skip: Option<u64>,
}

impl QueryOptions {
    pub fn is_empty(&self) -> bool {
        *self == QueryOptions::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandNode {
    /// Navigation name as written.
    pub name: String,
    pub options: QueryOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderKey {
    pub path: PropertyPath,
    pub direction: SortDirection,
}

/// `/`-separated navigation steps ending in a property, possibly followed
/// by keys into an object-valued property.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyPath(pub Vec<String>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
}

impl CompareOp {
    pub const ALL: [CompareOp; 6] = [CompareOp::Eq, CompareOp::Ne, CompareOp::Gt, CompareOp::Ge, CompareOp::Lt, CompareOp::Le];

    pub fn keyword(self) -> &'static str {
        match self {
            CompareOp::Eq => "eq",
            CompareOp::Ne => "ne",
            CompareOp::Gt => "gt",
            CompareOp::Ge => "ge",
            CompareOp::Lt => "lt",
            CompareOp::Le => "le",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CompareOp::Eq | CompareOp::Ne)
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Number(f64),
    Text(String),
    DateTime(DateTime<FixedOffset>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Literal(Literal),
    Path(PropertyPath),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Compare { left: Operand, op: CompareOp, right: Operand },
}

impl Expr {
    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    fn is_logical(&self) -> bool {
        matches!(self, Expr::And(..) | Expr::Or(..))
    }
}

impl fmt::Display for PropertyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("null"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::DateTime(t) => f.write_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true)),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Literal(l) => l.fmt(f),
            Operand::Path(p) => p.fmt(f),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr| {
            if e.is_logical() {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::And(a, b) | Expr::Or(a, b) => {
                child(f, a)?;
                f.write_str(if matches!(self, Expr::And(..)) { " and " } else { " or " })?;
                child(f, b)
            }
            Expr::Compare { left, op, right } => write!(f, "{left} {op} {right}"),
        }
    }
}

impl QueryOptions {
    fn write(&self, f: &mut fmt::Formatter<'_>, sep: &str) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if let Some(e) = &self.filter {
            parts.push(format!("$filter={e}"));
        }
        if !self.expand.is_empty() {
            parts.push(format!("$expand={}", self.expand.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")));
        }
        if !self.select.is_empty() {
            parts.push(format!("$select={}", self.select.join(",")));
        }
        if !self.order_by.is_empty() {
            let keys: Vec<String> = self
                .order_by
                .iter()
                .map(|k| match k.direction {
                    SortDirection::Asc => format!("{} asc", k.path),
                    SortDirection::Desc => format!("{} desc", k.path),
                })
                .collect();
            parts.push(format!("$orderby={}", keys.join(",")));
        }
        if let Some(t) = self.top {
            parts.push(format!("$top={t}"));
        }
        if let Some(s) = self.skip {
            parts.push(format!("$skip={s}"));
        }
        f.write_str(&parts.join(sep))
    }
}

impl fmt::Display for ExpandNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.options.is_empty() {
            f.write_str("(")?;
            self.options.write(f, ";")?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            f.write_str(&s.name)?;
            if let Some(id) = s.id {
                write!(f, "({id})")?;
            }
        }
        if !self.options.is_empty() {
            f.write_str("?")?;
            self.options.write(f, "&")?;
        }
        Ok(())
    }
}

const URL_UNSAFE: &AsciiSet = &CONTROLS.add(b' ').add(b'"').add(b'#').add(b'%').add(b'<').add(b'>').add(b'`').add(b'{').add(b'}').add(b'|').add(b'\\').add(b'^');

impl QueryPlan {
    /// Service-relative URL text, percent-encoded.
    pub fn to_url(&self) -> String {
        utf8_percent_encode(&self.to_string(), URL_UNSAFE).to_string()
    }
}
