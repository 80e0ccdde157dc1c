//! Flesch reading ease: 206.835 − 1.015·(words/sentences) − 84.6·(syllables/words).

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
}

pub fn counts(body: &str) -> TextCounts {
    let tokens = text::tokens(body);
    TextCounts {
        words: tokens.len(),
        sentences: text::sentences(body).len(),
        syllables: tokens.iter().map(|t| text::syllables(t.text)).sum(),
    }
}

pub fn flesch(body: &str) -> Result<f64> {
    let c = counts(body);
    if c.words == 0 || c.sentences == 0 {
        return Err(Error::Empty("text has no words or sentences"));
    }
    let (w, s, y) = (c.words as f64, c.sentences as f64, c.syllables as f64);
    Ok(206.835 - 1.015 * (w / s) - 84.6 * (y / w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_on_mat() {
        let got = flesch("The cat sat on the mat.").unwrap();
        assert!((got - 116.145).abs() < 1e-9, "{got}");
    }

    #[test]
    fn repetition_invariant() {
        let one = flesch("The committee deliberated extensively.").unwrap();
        let two = flesch("The committee deliberated extensively. The committee deliberated extensively.").unwrap();
        assert!((one - two).abs() < 1e-9);
    }

    #[test]
    fn empty_text_errors() {
        assert!(flesch("").is_err());
        assert!(flesch("   ?! ").is_err());
    }
}
