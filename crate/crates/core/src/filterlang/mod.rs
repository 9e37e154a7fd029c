//! A boolean search-query language over posts.
//!
//! Grammar, from tightest to loosest binding:
//!
//! * `-item` negates the item that immediately follows.
//! * `a OR b` (the keyword is case-sensitive) joins alternatives.
//! * Whitespace-separated items, and adjacent groups such as `(a)(b)`, are
//!   AND-joined.
//!
//! Parentheses group. `#tag` is a hashtag, `lang:xx` and `is:retweet|reply|quote`
//! are field predicates, anything else is a plain term.

mod eval;
mod parser;
mod print;

use std::fmt;

pub use eval::{eval_query, PostTokens};
pub use parser::parse_query;
pub use print::print_query;

/// Post flags addressable with `is:`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PostFlag {
    Retweet,
    Reply,
    Quote,
}

impl PostFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            PostFlag::Retweet => "retweet",
            PostFlag::Reply => "reply",
            PostFlag::Quote => "quote",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "retweet" => Some(PostFlag::Retweet),
            "reply" => Some(PostFlag::Reply),
            "quote" => Some(PostFlag::Quote),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldPredicate {
    /// Two-letter language code, stored lowercase.
    Lang(String),
    Is(PostFlag),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryAst {
    Term(String),
    Hashtag(String),
    Field(FieldPredicate),
    Not(Box<QueryAst>),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
}

/// A syntax error at a character offset into the query.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("query error at offset {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

impl QueryAst {
    pub fn not(child: QueryAst) -> Self {
        QueryAst::Not(Box::new(child))
    }

    /// Checks the structural invariants `parse_query` guarantees: AND/OR have
    /// at least two children and every atom prints back to itself.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            QueryAst::Term(t) => {
                match parser::classify_word(t, 0) {
                    Ok(QueryAst::Term(ref back)) if back == t && parser::is_plain_word(t) => Ok(()),
                    _ => Err(format!("`{t}` cannot be written as a plain term")),
                }
            }
            QueryAst::Hashtag(t) => {
                if !t.is_empty() && parser::is_plain_word(t) && !t.starts_with('-') {
                    Ok(())
                } else {
                    Err(format!("`#{t}` is not a valid hashtag"))
                }
            }
            QueryAst::Field(FieldPredicate::Lang(code)) => {
                if crate::corpus::valid_lang(code) {
                    Ok(())
                } else {
                    Err(format!("`{code}` is not a two-letter language code"))
                }
            }
            QueryAst::Field(FieldPredicate::Is(_)) => Ok(()),
            QueryAst::Not(child) => child.validate(),
            QueryAst::And(children) | QueryAst::Or(children) => {
                if children.len() < 2 {
                    return Err("AND/OR need at least two children".into());
                }
                children.iter().try_for_each(QueryAst::validate)
            }
        }
    }

    /// Indented s-expression form, used for golden AST files.
    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        self.write_sexpr(&mut out, 0);
        out
    }

    fn atom_sexpr(&self) -> Option<String> {
        match self {
            QueryAst::Term(t) => Some(format!("(term {t})")),
            QueryAst::Hashtag(t) => Some(format!("(hashtag {t})")),
            QueryAst::Field(FieldPredicate::Lang(l)) => Some(format!("(lang {l})")),
            QueryAst::Field(FieldPredicate::Is(f)) => Some(format!("(is {})", f.as_str())),
            QueryAst::Not(child) => child.atom_sexpr().map(|a| format!("(not {a})")),
            QueryAst::And(_) | QueryAst::Or(_) => None,
        }
    }

    fn write_sexpr(&self, out: &mut String, indent: usize) {
        if let Some(atom) = self.atom_sexpr() {
            out.push_str(&atom);
            return;
        }
        let (op, children): (&str, Vec<&QueryAst>) = match self {
            QueryAst::Not(c) => ("not", vec![c.as_ref()]),
            QueryAst::And(cs) => ("and", cs.iter().collect()),
            QueryAst::Or(cs) => ("or", cs.iter().collect()),
            _ => unreachable!("atoms handled above"),
        };
        out.push('(');
        out.push_str(op);
        for c in children {
            out.push('\n');
            out.push_str(&" ".repeat(indent + 2));
            c.write_sexpr(out, indent + 2);
        }
        out.push(')');
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_query(self))
    }
}
