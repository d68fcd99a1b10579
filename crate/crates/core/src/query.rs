//! Keyword query syntax.
//!
//! ```text
//! query   := or_expr
//! or_expr := and_expr ("OR" and_expr)*
//! and_expr:= unary (("AND")? unary)*
//! unary   := "NOT" unary | atom
//! atom    := PHRASE | PREFIX | TERM | "(" or_expr ")"
//! ```
//!
//! Operators are case-sensitive. Terms are lowercased and split on anything
//! that is not alphanumeric, so `jwt-auth` is the implicit conjunction of
//! `jwt` and `auth`. A `*` glued to the end of a word makes it a prefix.

use std::fmt;

use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryAst {
    Term(String),
    Prefix(String),
    Phrase(Vec<String>),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
    Not(Box<QueryAst>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("empty query")]
    Empty,
    #[error("unbalanced quote at character {0}")]
    UnbalancedQuote(usize),
    #[error("unbalanced parenthesis at character {0}")]
    UnbalancedParen(usize),
    #[error("phrase at character {0} contains no terms")]
    EmptyPhrase(usize),
    #[error("expected a term at character {0}")]
    ExpectedTerm(usize),
}

impl QueryError {
    /// Character offset of the problem, when there is one.
    pub fn offset(&self) -> Option<usize> {
        match *self {
            QueryError::Empty => None,
            QueryError::UnbalancedQuote(o)
            | QueryError::UnbalancedParen(o)
            | QueryError::EmptyPhrase(o)
            | QueryError::ExpectedTerm(o) => Some(o),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Prefix(String),
    Phrase(Vec<String>),
    And,
    Or,
    Not,
    Open,
    Close,
}

fn lex(raw: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' => {
                let start = i;
                let close = chars[i + 1..]
                    .iter()
                    .position(|&c| c == '"')
                    .ok_or(QueryError::UnbalancedQuote(start))?;
                let inner: String = chars[i + 1..i + 1 + close].iter().collect();
                let terms = text::tokenize(&inner);
                if terms.is_empty() {
                    return Err(QueryError::EmptyPhrase(start));
                }
                toks.push((Tok::Phrase(terms), start));
                i += close + 2;
            }
            '(' => {
                toks.push((Tok::Open, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::Close, i));
                i += 1;
            }
            c if c.is_alphanumeric() => {
                let start = i;
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if chars.get(i) == Some(&'*') {
                    i += 1;
                    toks.push((Tok::Prefix(word.to_lowercase()), start));
                    continue;
                }
                let tok = match word.as_str() {
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    _ => Tok::Word(word.to_lowercase()),
                };
                toks.push((tok, start));
            }
            _ => i += 1,
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn or_expr(&mut self) -> Result<QueryAst, QueryError> {
        let mut children = vec![self.and_expr()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            children.push(self.and_expr()?);
        }
        Ok(collapse(children, QueryAst::Or))
    }

    fn and_expr(&mut self) -> Result<QueryAst, QueryError> {
        let mut children = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(Tok::And) => {
                    self.pos += 1;
                    children.push(self.unary()?);
                }
                Some(Tok::Word(_) | Tok::Prefix(_) | Tok::Phrase(_) | Tok::Not | Tok::Open) => {
                    children.push(self.unary()?);
                }
                _ => break,
            }
        }
        Ok(collapse(children, QueryAst::And))
    }

    fn unary(&mut self) -> Result<QueryAst, QueryError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(QueryAst::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<QueryAst, QueryError> {
        let offset = self.offset();
        let Some((tok, _)) = self.toks.get(self.pos).cloned() else {
            return Err(QueryError::ExpectedTerm(offset));
        };
        self.pos += 1;
        match tok {
            Tok::Word(w) => Ok(QueryAst::Term(w)),
            Tok::Prefix(p) => Ok(QueryAst::Prefix(p)),
            Tok::Phrase(terms) => Ok(QueryAst::Phrase(terms)),
            Tok::Open => {
                let inner = self.or_expr()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(QueryError::UnbalancedParen(offset));
                }
                self.pos += 1;
                Ok(inner)
            }
            Tok::Close => Err(QueryError::UnbalancedParen(offset)),
            Tok::And | Tok::Or | Tok::Not => Err(QueryError::ExpectedTerm(offset)),
        }
    }
}

fn collapse(mut children: Vec<QueryAst>, wrap: fn(Vec<QueryAst>) -> QueryAst) -> QueryAst {
    if children.len() == 1 {
        children.pop().expect("one child")
    } else {
        wrap(children)
    }
}

/// Parses a raw (already URL-decoded) query string.
pub fn parse_query(raw: &str) -> Result<QueryAst, QueryError> {
    if raw.trim().is_empty() {
        return Err(QueryError::Empty);
    }
    let toks = lex(raw)?;
    if toks.is_empty() {
        return Err(QueryError::Empty);
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        end: raw.chars().count(),
    };
    let ast = parser.or_expr()?;
    if parser.pos < parser.toks.len() {
        // Only a stray `)` can stop the top-level expression early.
        return Err(QueryError::UnbalancedParen(parser.offset()));
    }
    Ok(ast)
}

/// Canonical query string; `parse_query(&render_query(a)) == a` for any
/// valid AST whose terms are single lowercase tokens.
pub fn render_query(ast: &QueryAst) -> String {
    ast.to_string()
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn grouped(node: &QueryAst, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match node {
                QueryAst::And(_) | QueryAst::Or(_) => write!(f, "({node})"),
                _ => write!(f, "{node}"),
            }
        }
        match self {
            QueryAst::Term(t) => f.write_str(t),
            QueryAst::Prefix(p) => write!(f, "{p}*"),
            QueryAst::Phrase(terms) => write!(f, "\"{}\"", terms.join(" ")),
            QueryAst::And(children) | QueryAst::Or(children) => {
                let sep = if matches!(self, QueryAst::And(_)) { " " } else { " OR " };
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    grouped(child, f)?;
                }
                Ok(())
            }
            QueryAst::Not(child) => {
                f.write_str("NOT ")?;
                grouped(child, f)
            }
        }
    }
}

impl QueryAst {
    /// Checks the structural invariants of a node tree.
    pub fn is_valid(&self) -> bool {
        let token_ok = |t: &String| !t.is_empty() && text::tokenize(t) == [t.as_str()];
        match self {
            QueryAst::Term(t) | QueryAst::Prefix(t) => token_ok(t),
            QueryAst::Phrase(terms) => !terms.is_empty() && terms.iter().all(token_ok),
            QueryAst::And(c) | QueryAst::Or(c) => c.len() >= 2 && c.iter().all(QueryAst::is_valid),
            QueryAst::Not(c) => c.is_valid(),
        }
    }
}
