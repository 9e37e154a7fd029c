use super::{FieldPredicate, PostFlag, QueryAst};
use crate::corpus::{Corpus, Post};
use crate::text::{fold, sentinel_tokens};

/// Case-folded tokens of a post text, split on whitespace and punctuation
/// with `#` and `@` kept as token prefixes.
#[derive(Debug, Clone)]
pub struct PostTokens {
    tokens: Vec<String>,
}

impl PostTokens {
    pub fn new(text: &str) -> Self {
        let folded = fold(text);
        PostTokens {
            tokens: sentinel_tokens(&folded).map(str::to_string).collect(),
        }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }

    /// A plain term matches a token exactly, or a hashtag token once its `#`
    /// is removed. Terms that contain punctuation match as a token phrase.
    fn has_term(&self, term: &str) -> bool {
        let folded = fold(term);
        let needle: Vec<&str> = sentinel_tokens(&folded).collect();
        if needle.is_empty() {
            return false;
        }
        let eq = |tok: &str, want: &str| tok == want || tok.strip_prefix('#') == Some(want);
        self.tokens
            .windows(needle.len())
            .any(|w| w.iter().zip(&needle).all(|(t, n)| eq(t, n)))
    }

    fn has_hashtag(&self, tag: &str) -> bool {
        let want = format!("#{}", fold(tag));
        self.tokens.contains(&want)
    }
}

/// Evaluates `ast` against one post.
pub fn eval_query(ast: &QueryAst, post: &Post) -> bool {
    let tokens = PostTokens::new(&post.text);
    eval_with(ast, post, &tokens)
}

pub(crate) fn eval_with(ast: &QueryAst, post: &Post, tokens: &PostTokens) -> bool {
    match ast {
        QueryAst::Term(t) => tokens.has_term(t),
        QueryAst::Hashtag(t) => tokens.has_hashtag(t),
        QueryAst::Field(FieldPredicate::Lang(code)) => post.lang.eq_ignore_ascii_case(code),
        QueryAst::Field(FieldPredicate::Is(flag)) => match flag {
            PostFlag::Retweet => post.is_retweet,
            PostFlag::Reply => post.is_reply,
            PostFlag::Quote => post.is_quote,
        },
        QueryAst::Not(child) => !eval_with(child, post, tokens),
        QueryAst::And(children) => children.iter().all(|c| eval_with(c, post, tokens)),
        QueryAst::Or(children) => children.iter().any(|c| eval_with(c, post, tokens)),
    }
}

impl QueryAst {
    /// The posts of `corpus` matching this query, in corpus order.
    pub fn filter_corpus(&self, corpus: &Corpus) -> Corpus {
        corpus.filter(|p| eval_query(self, p))
    }
}
