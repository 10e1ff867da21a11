//! Tokenization shared by hashtag extraction, embedding training, and the
//! encoder. Words are maximal runs of alphanumeric/underscore characters;
//! a `#` directly before such a run makes the whole run one hashtag token.

/// One token of post text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    /// Plain word, lowercased.
    Word(String),
    /// Hashtag, lowercased, without the leading `#`.
    Tag(String),
}

impl Token {
    pub fn text(&self) -> &str {
        match self {
            Token::Word(w) => w,
            Token::Tag(t) => t,
        }
    }

    pub fn is_tag(&self) -> bool {
        matches!(self, Token::Tag(_))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits text on whitespace and punctuation, lowercases, and keeps
/// hashtags as atomic [`Token::Tag`] tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '#' {
            let mut tag = String::new();
            while let Some(&n) = chars.peek() {
                if is_word_char(n) {
                    tag.extend(n.to_lowercase());
                    chars.next();
                } else {
                    break;
                }
            }
            if !tag.is_empty() {
                tokens.push(Token::Tag(tag));
            }
        } else if is_word_char(c) {
            let mut word = String::new();
            word.extend(c.to_lowercase());
            while let Some(&n) = chars.peek() {
                if is_word_char(n) {
                    word.extend(n.to_lowercase());
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(Token::Word(word));
        }
    }
    tokens
}

/// Lowercases a hashtag and strips a single leading `#`.
/// Returns `None` if the result is empty or contains characters that can
/// never come out of [`tokenize`] (whitespace, `#`).
pub fn normalize_hashtag(raw: &str) -> Option<String> {
    let stripped = raw.trim().strip_prefix('#').unwrap_or(raw.trim());
    if stripped.is_empty() {
        return None;
    }
    if stripped.chars().any(|c| c.is_whitespace() || c == '#') {
        return None;
    }
    Some(stripped.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_and_tags_split() {
        let toks = tokenize("Stay safe! #WearAMask everyone");
        assert_eq!(
            toks,
            vec![
                Token::Word("stay".into()),
                Token::Word("safe".into()),
                Token::Tag("wearamask".into()),
                Token::Word("everyone".into()),
            ]
        );
    }

    #[test]
    fn hash_without_word_chars_is_dropped() {
        assert_eq!(tokenize("# ##"), vec![Token::Word("".into()); 0]);
        // "##double": the first '#' starts nothing, the second grabs the run.
        assert_eq!(tokenize("##double"), vec![Token::Tag("double".into())]);
    }

    #[test]
    fn punctuation_terminates_tags() {
        let toks = tokenize("#bts,#btsxunga!");
        assert_eq!(
            toks,
            vec![Token::Tag("bts".into()), Token::Tag("btsxunga".into())]
        );
    }

    #[test]
    fn normalize_rejects_whitespace() {
        assert_eq!(normalize_hashtag("#Covid19"), Some("covid19".into()));
        assert_eq!(normalize_hashtag("has space"), None);
        assert_eq!(normalize_hashtag("#"), None);
        assert_eq!(normalize_hashtag(""), None);
    }
}
