//! Shared text primitives: the tokenizer, sentence splitter and syllable
//! counter used by every feature, plus span helpers for masking.
//!
//! Tokenization splits on whitespace and trims leading/trailing characters
//! that are not alphanumeric, so internal apostrophes and hyphens survive
//! ("don't", "stop-believing"). The mask placeholders `[ENT]` and `[NUM]`
//! are kept intact.

pub const ENT_MASK: &str = "[ENT]";
pub const NUM_MASK: &str = "[NUM]";

/// A token borrowed from its source text, with byte offsets of the trimmed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    /// The raw whitespace-delimited chunk ended in punctuation (",", ".", ...).
    pub trailing_punct: bool,
}

pub fn tokens(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (chunk_start, chunk) in whitespace_chunks(text) {
        let trimmed_front = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
        let front = chunk.len() - trimmed_front.len();
        let core = trimmed_front.trim_end_matches(|c: char| !c.is_alphanumeric());
        let trailing_punct = core.len() < trimmed_front.len();
        if core.is_empty() {
            continue;
        }
        let mut start = chunk_start + front;
        let mut end = start + core.len();
        // keep the brackets of mask placeholders
        for mask in [ENT_MASK, NUM_MASK] {
            if core == &mask[1..mask.len() - 1] && front > 0 && text[start - 1..].starts_with(mask) {
                start -= 1;
                end += 1;
            }
        }
        let trailing_punct = trailing_punct && end < chunk_start + chunk.len();
        out.push(Token {
            text: &text[start..end],
            start,
            end,
            trailing_punct,
        });
    }
    out
}

fn whitespace_chunks(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace()
        .map(move |chunk| (chunk.as_ptr() as usize - text.as_ptr() as usize, chunk))
}

pub fn word_count(text: &str) -> usize {
    tokens(text).len()
}

/// Case-folded token strings, the form used by BM25 and TF-IDF.
pub fn folded_tokens(text: &str) -> Vec<String> {
    tokens(text).iter().map(|t| t.text.to_lowercase()).collect()
}

/// Splits on '.', '!' or '?' when followed by whitespace or end of text.
/// Segments without any word token are dropped.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut begin = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let end = i + c.len_utf8();
                out.push(&text[begin..end]);
                begin = end;
            }
        }
    }
    if begin < text.len() {
        out.push(&text[begin..]);
    }
    out.retain(|s| !tokens(s).is_empty());
    out
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable estimate: maximal runs of `aeiouy`, minus one for a
/// trailing consonant-preceded 'e' when there is more than one group, at least 1.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    let mut groups = 0;
    let mut in_group = false;
    for &c in &letters {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
            }
            in_group = true;
        } else {
            in_group = false;
        }
    }
    let n = letters.len();
    if groups > 1 && n >= 2 && letters[n - 1] == 'e' && !is_vowel(letters[n - 2]) {
        groups -= 1;
    }
    groups.max(1)
}

/// Byte spans of maximal digit runs; ',' or '.' between two digits stays inside the run.
pub fn number_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || (matches!(bytes[i], b',' | b'.')
                        && i + 1 < bytes.len()
                        && bytes[i + 1].is_ascii_digit()
                        && bytes[i - 1].is_ascii_digit()))
            {
                i += 1;
            }
            spans.push((start, i));
        } else {
            i += 1;
        }
    }
    spans
}

/// Byte spans of maximal runs of capitalized tokens. A token ending in
/// punctuation closes the run it belongs to.
pub fn capitalized_runs(text: &str) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for tok in tokens(text) {
        let capitalized = tok.text.chars().next().is_some_and(char::is_uppercase);
        if capitalized {
            current = Some(match current {
                Some((s, _)) => (s, tok.end),
                None => (tok.start, tok.end),
            });
            if tok.trailing_punct {
                runs.extend(current.take());
            }
        } else {
            runs.extend(current.take());
        }
    }
    runs.extend(current);
    runs
}

/// Lowercases and collapses internal whitespace.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_counts() {
        assert_eq!(word_count("hello world"), 2);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("Don't stop-believing now"), 3);
        assert_eq!(word_count("  -- ... !! "), 0);
    }

    #[test]
    fn token_trimming() {
        let t = tokens("(Hello), 'world'!");
        let words: Vec<_> = t.iter().map(|t| t.text).collect();
        assert_eq!(words, ["Hello", "world"]);
        assert!(t[0].trailing_punct);
        assert_eq!(&"(Hello), 'world'!"[t[1].start..t[1].end], "world");
    }

    #[test]
    fn mask_tokens_survive() {
        let words = folded_tokens("[ENT] born [NUM]. [ENT],");
        assert_eq!(words, ["[ent]", "born", "[num]", "[ent]"]);
    }

    #[test]
    fn sentence_split() {
        assert_eq!(sentences("The cat sat on the mat.").len(), 1);
        assert_eq!(sentences("One. Two! Three? four").len(), 4);
        assert_eq!(sentences("Version 2.5 is out.").len(), 1);
        assert!(sentences("").is_empty());
        assert!(sentences(" ... ").is_empty());
    }

    #[test]
    fn syllable_rule() {
        assert_eq!(syllables("the"), 1);
        assert_eq!(syllables("cat"), 1);
        assert_eq!(syllables("mate"), 1);
        assert_eq!(syllables("free"), 1);
        assert_eq!(syllables("rhythm"), 1);
        assert_eq!(syllables("banana"), 3);
        assert_eq!(syllables("readable"), 2);
        assert_eq!(syllables("crwth"), 1);
    }

    #[test]
    fn numbers() {
        let text = "born 1955, worth 1,200.50 in Q3.";
        let spans: Vec<_> = number_spans(text).iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(spans, ["1955", "1,200.50", "3"]);
    }

    #[test]
    fn capitalized() {
        let text = "Steve Jobs met Steve Wozniak.";
        let runs: Vec<_> = capitalized_runs(text).iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(runs, ["Steve Jobs", "Steve Wozniak"]);
        let text = "Ada Lovelace, Charles Babbage";
        assert_eq!(capitalized_runs(text).len(), 2);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Yale   School of\tManagement "), "yale school of management");
    }
}
