//! Small text helpers shared by the query evaluator and the corpus subsetter.

/// Unicode default case folding.
pub fn fold(text: &str) -> String {
    caseless::default_case_fold_str(text)
}

/// Maps every Unicode whitespace character to an ASCII space. Runs are kept.
pub fn normalize_whitespace(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .collect()
}

/// Splits on whitespace and punctuation, keeping `#` and `@` as part of a
/// token so hashtags and mentions survive as single tokens.
pub fn sentinel_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@'))
        .filter(|t| !t.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_handles_sharp_s() {
        assert_eq!(fold("Fußball"), "fussball");
        assert_eq!(fold("ONE-LOVE"), "one-love");
    }

    #[test]
    fn tokens_keep_sentinels() {
        let toks: Vec<_> = sentinel_tokens("Die #OneLove, @fifa! (WM)").collect();
        assert_eq!(toks, ["Die", "#OneLove", "@fifa", "WM"]);
    }

    #[test]
    fn whitespace_runs_are_kept() {
        assert_eq!(normalize_whitespace("a\t\u{a0}b"), "a  b");
    }
}
