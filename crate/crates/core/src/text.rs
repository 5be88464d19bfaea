//! Small text helpers shared across generation, validation, and metrics.
//!
//! A "word" is always a whitespace-delimited token after trimming. All
//! length checks and reported statistics in this crate count words the
//! same way.

/// Count whitespace-delimited words.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Lowercase and strip punctuation, keeping apostrophes inside words so
/// phrases like "valentine's day" survive. Whitespace is collapsed.
pub fn clean_phrase(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            out.extend(ch.to_lowercase());
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalization key for duplicate detection: lowercase, all punctuation
/// (apostrophes included) stripped, whitespace collapsed.
pub fn normalize_key(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keep at most `max` leading words.
pub fn truncate_words(s: &str, max: usize) -> String {
    s.split_whitespace().take(max).collect::<Vec<_>>().join(" ")
}

/// "a" or "an" by the first letter of the following word.
pub fn article_for(phrase: &str) -> &'static str {
    match phrase.trim_start().chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}

/// Remove every occurrence of the given multi-word phrases from a token
/// stream. Matching is case-insensitive and phrase tokens must appear
/// consecutively.
pub fn strip_phrases(tokens: &[String], phrases: &[String]) -> Vec<String> {
    let split: Vec<Vec<String>> = phrases
        .iter()
        .map(|p| p.split_whitespace().map(|w| w.to_lowercase()).collect())
        .filter(|p: &Vec<String>| !p.is_empty())
        .collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for phrase in &split {
            if phrase.len() <= tokens.len() - i
                && phrase
                    .iter()
                    .zip(&tokens[i..])
                    .all(|(p, t)| p == &t.to_lowercase())
            {
                i += phrase.len();
                continue 'outer;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

/// Whether the token stream contains any of the phrases as a consecutive
/// case-insensitive run.
pub fn contains_phrase(tokens: &[&str], phrase: &str) -> bool {
    let wanted: Vec<String> = phrase.split_whitespace().map(|w| w.to_lowercase()).collect();
    if wanted.is_empty() || wanted.len() > tokens.len() {
        return false;
    }
    tokens
        .windows(wanted.len())
        .any(|win| win.iter().zip(&wanted).all(|(t, w)| t.to_lowercase() == *w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_count_is_whitespace_based() {
        assert_eq!(word_count("find me an image of an elephant"), 7);
        assert_eq!(word_count("  a  b "), 2);
        assert_eq!(word_count(""), 0);
    }

    #[test]
    fn clean_phrase_keeps_apostrophes() {
        assert_eq!(clean_phrase("Valentine's Day!"), "valentine's day");
        assert_eq!(clean_phrase("Galaxy  Minecraft-Server"), "galaxy minecraft server");
    }

    #[test]
    fn normalize_key_strips_everything() {
        assert_eq!(normalize_key("Find cats!"), "find cats");
        assert_eq!(normalize_key("find   CATS"), "find cats");
        assert_eq!(normalize_key("don't"), "don t");
    }

    #[test]
    fn articles() {
        assert_eq!(article_for("image"), "an");
        assert_eq!(article_for("birthday card"), "a");
    }

    #[test]
    fn strip_phrases_removes_consecutive_runs() {
        let toks: Vec<String> = ["find", "me", "a", "find", "cake"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = strip_phrases(&toks, &["find me".to_string(), "find".to_string()]);
        assert_eq!(out, vec!["a".to_string(), "cake".to_string()]);
    }

    #[test]
    fn contains_phrase_multiword() {
        let toks = ["please", "Find", "me", "cats"];
        assert!(contains_phrase(&toks, "find me"));
        assert!(!contains_phrase(&toks, "search for"));
    }
}
