//! Raw-key canonicalization used before caching and matching.

use crate::error::{Error, Result};

/// Lowercase a raw key and split camelCase, snake_case, and kebab-case
/// boundaries into space-separated tokens. Digits are preserved.
pub fn normalize_key(raw: &str) -> Result<String> {
    if raw.trim().is_empty() {
        return Err(Error::Classifier("cannot normalize an empty key".into()));
    }
    Ok(tokenize(raw).join(" "))
}

/// Tokenizer shared by key normalization and example-phrase matching.
pub(crate) fn tokenize(raw: &str) -> Vec<String> {
    let chars: Vec<char> = raw.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            flush(&mut tokens, &mut current);
            continue;
        }
        if !current.is_empty() {
            let prev = chars[i - 1];
            let lower_to_upper = prev.is_lowercase() && c.is_uppercase();
            let digit_to_upper = prev.is_ascii_digit() && c.is_uppercase();
            // Acronym followed by a word: "ABRMap" -> "abr map".
            let acronym_end = prev.is_uppercase()
                && c.is_uppercase()
                && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if lower_to_upper || digit_to_upper || acronym_end {
                flush(&mut tokens, &mut current);
            }
        }
        current.extend(c.to_lowercase());
    }
    flush(&mut tokens, &mut current);
    tokens
}

fn flush(tokens: &mut Vec<String>, current: &mut String) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camel_case_splits() {
        assert_eq!(normalize_key("IsOptOutEmailShown").unwrap(), "is opt out email shown");
    }

    #[test]
    fn snake_case_splits() {
        assert_eq!(
            normalize_key("pers_ad_show_third_part_measurement").unwrap(),
            "pers ad show third part measurement"
        );
    }

    #[test]
    fn already_normalized_is_unchanged() {
        assert_eq!(normalize_key("email").unwrap(), "email");
    }

    #[test]
    fn kebab_and_digits() {
        assert_eq!(normalize_key("screen-width").unwrap(), "screen width");
        assert_eq!(normalize_key("uid7").unwrap(), "uid7");
        assert_eq!(normalize_key("h264Codec").unwrap(), "h264 codec");
    }

    #[test]
    fn acronym_boundaries() {
        assert_eq!(normalize_key("ABRBitrateMap").unwrap(), "abr bitrate map");
        assert_eq!(normalize_key("HTTPServer").unwrap(), "http server");
    }

    #[test]
    fn empty_key_is_an_error() {
        assert!(normalize_key("").is_err());
        assert!(normalize_key("   ").is_err());
    }
}
