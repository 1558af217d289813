//! Tokenization shared by the chunker, the stub providers and the metrics.

/// Maximal whitespace-separated runs.
pub fn whitespace_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercases and removes every character that is neither alphanumeric nor
/// whitespace.
pub fn strip_punctuation_lower(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Lowercased, punctuation-free tokens.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    strip_punctuation_lower(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Answer normalization used by token F1: lowercase, strip punctuation, drop
/// the articles a/an/the, split on whitespace.
pub fn answer_tokens(text: &str) -> Vec<String> {
    normalized_tokens(text)
        .into_iter()
        .filter(|t| !matches!(t.as_str(), "a" | "an" | "the"))
        .collect()
}

/// Canonical surface of an entity mention.
pub fn normalize_surface(text: &str) -> String {
    normalized_tokens(text).join(" ")
}

/// 64-bit FNV-1a, seeded by folding `seed` into the offset basis. Stable
/// across platforms and runs.
pub fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalized_tokens("The Cat, sat!"), vec!["the", "cat", "sat"]);
        assert_eq!(answer_tokens("The Cat"), vec!["cat"]);
        assert_eq!(answer_tokens("an apple a day"), vec!["apple", "day"]);
        assert_eq!(normalize_surface("  New   York. "), "new york");
        assert!(answer_tokens("...").is_empty());
    }

    #[test]
    fn hash_is_seeded() {
        assert_eq!(fnv1a(b"abc", 0), fnv1a(b"abc", 0));
        assert_ne!(fnv1a(b"abc", 0), fnv1a(b"abc", 1));
    }
}
