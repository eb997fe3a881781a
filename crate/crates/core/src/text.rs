//! Tokenization shared by the embedder and the topic model.

/// Lowercases `text` and splits it into tokens.
///
/// Alphanumeric runs form one token each; every other non-space character
/// is a token of its own, so `"(4, 1)."` becomes `( 4 , 1 ) .`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return true;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_is_detached() {
        assert_eq!(
            tokenize("The player is at (4, 1)."),
            ["the", "player", "is", "at", "(", "4", ",", "1", ")", "."]
        );
        assert_eq!(tokenize("5 -- 8 Marine"), ["5", "-", "-", "8", "marine"]);
    }

    #[test]
    fn token_match_does_not_cross_numbers() {
        let hay = tokenize("at (12, 3)");
        assert!(!contains_subsequence(&hay, &tokenize("(1")));
        assert!(contains_subsequence(&hay, &tokenize("(12")));
    }
}
