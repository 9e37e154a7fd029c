use super::{FieldPredicate, ParseError, PostFlag, QueryAst};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Minus,
    Or,
    Word(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    pos: usize,
    tok: Tok,
}

fn is_break(c: char) -> bool {
    c.is_whitespace() || c == '(' || c == ')'
}

pub(crate) fn is_plain_word(w: &str) -> bool {
    !w.is_empty() && !w.chars().any(is_break)
}

fn lex(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                out.push(Spanned { pos: i, tok: Tok::LParen });
                i += 1;
            }
            ')' => {
                out.push(Spanned { pos: i, tok: Tok::RParen });
                i += 1;
            }
            '-' => {
                match chars.get(i + 1) {
                    None => return Err(ParseError::new(i, "dangling `-` at end of query")),
                    Some(&n) if n.is_whitespace() || n == ')' => {
                        return Err(ParseError::new(i, "dangling `-`: nothing to negate"))
                    }
                    _ => {}
                }
                out.push(Spanned { pos: i, tok: Tok::Minus });
                i += 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && !is_break(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = if word == "OR" { Tok::Or } else { Tok::Word(word) };
                out.push(Spanned { pos: start, tok });
            }
        }
    }
    Ok(out)
}

/// Interprets one bare word as an atom.
pub(crate) fn classify_word(word: &str, pos: usize) -> Result<QueryAst, ParseError> {
    if let Some(tag) = word.strip_prefix('#') {
        if tag.is_empty() {
            return Err(ParseError::new(pos, "empty hashtag"));
        }
        return Ok(QueryAst::Hashtag(tag.to_string()));
    }
    if let Some((key, value)) = word.split_once(':') {
        match key {
            "lang" => {
                if value.len() == 2 && value.bytes().all(|b| b.is_ascii_alphabetic()) {
                    return Ok(QueryAst::Field(FieldPredicate::Lang(value.to_ascii_lowercase())));
                }
                return Err(ParseError::new(
                    pos + key.chars().count() + 1,
                    format!("`lang:` expects a two-letter code, got `{value}`"),
                ));
            }
            "is" => {
                return PostFlag::parse(value)
                    .map(|f| QueryAst::Field(FieldPredicate::Is(f)))
                    .ok_or_else(|| {
                        ParseError::new(
                            pos + 3,
                            format!("`is:` expects retweet, reply or quote, got `{value}`"),
                        )
                    });
            }
            _ => {}
        }
    }
    Ok(QueryAst::Term(word.to_string()))
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.at)
    }

    fn pos(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    /// Adjacent items up to `)` or end of input.
    fn sequence(&mut self) -> Result<QueryAst, ParseError> {
        let start = self.pos();
        let mut items = Vec::new();
        loop {
            match self.peek().map(|t| &t.tok) {
                None | Some(Tok::RParen) => break,
                Some(Tok::Or) => {
                    return Err(ParseError::new(self.pos(), "dangling `OR`: no left operand"));
                }
                _ => items.push(self.alternatives()?),
            }
        }
        match items.len() {
            0 => Err(ParseError::new(start, "empty query or group")),
            1 => Ok(items.pop().expect("one item")),
            _ => Ok(QueryAst::And(items)),
        }
    }

    fn alternatives(&mut self) -> Result<QueryAst, ParseError> {
        let mut options = vec![self.unary()?];
        while let Some(Spanned { tok: Tok::Or, pos }) = self.peek().cloned() {
            self.bump();
            match self.peek().map(|t| &t.tok) {
                None | Some(Tok::RParen) | Some(Tok::Or) => {
                    return Err(ParseError::new(pos, "dangling `OR`: no right operand"));
                }
                _ => options.push(self.unary()?),
            }
        }
        if options.len() == 1 {
            Ok(options.pop().expect("one option"))
        } else {
            Ok(QueryAst::Or(options))
        }
    }

    fn unary(&mut self) -> Result<QueryAst, ParseError> {
        if let Some(Spanned { tok: Tok::Minus, pos }) = self.peek().cloned() {
            self.bump();
            match self.peek().map(|t| &t.tok) {
                None | Some(Tok::RParen) | Some(Tok::Or) => {
                    return Err(ParseError::new(pos, "dangling `-`: nothing to negate"));
                }
                _ => return Ok(QueryAst::not(self.unary()?)),
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<QueryAst, ParseError> {
        let Some(t) = self.bump() else {
            return Err(ParseError::new(self.end, "unexpected end of query"));
        };
        match t.tok {
            Tok::LParen => {
                if self.peek().is_none() {
                    return Err(ParseError::new(
                        self.end,
                        format!("unbalanced parentheses: `(` at offset {} is never closed", t.pos),
                    ));
                }
                let inner = self.sequence()?;
                match self.bump() {
                    Some(Spanned { tok: Tok::RParen, .. }) => Ok(inner),
                    _ => Err(ParseError::new(
                        self.end,
                        format!("unbalanced parentheses: `(` at offset {} is never closed", t.pos),
                    )),
                }
            }
            Tok::Word(w) => classify_word(&w, t.pos),
            Tok::RParen => Err(ParseError::new(t.pos, "unbalanced parentheses: unexpected `)`")),
            Tok::Minus | Tok::Or => Err(ParseError::new(t.pos, "expected a search item")),
        }
    }
}

/// Parses a query string into its AST.
pub fn parse_query(input: &str) -> Result<QueryAst, ParseError> {
    let toks = lex(input)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: input.chars().count(),
    };
    let ast = p.sequence()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::new(t.pos, "unbalanced parentheses: unexpected `)`"));
    }
    Ok(ast)
}
