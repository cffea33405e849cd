use crate::hashing::fnv1a64;
use crate::llm::{EmbeddingProvider, LlmError};

pub const HASHED_DIM: usize = 256;

/// Offline embedder: hashed sub-word token frequencies.
///
/// Identifiers are split at underscores and lower/upper case boundaries;
/// both the pieces and the whole lowercased word count as tokens, as does
/// every punctuation character. Tokens are FNV-1a hashed into `dim`
/// buckets and the count vector is L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    pub dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self { dim: HASHED_DIM }
    }
}

fn split_identifier(word: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    for part in word.split('_').filter(|p| !p.is_empty()) {
        let mut current = String::new();
        let mut prev_lower = false;
        for c in part.chars() {
            if c.is_uppercase() && prev_lower && !current.is_empty() {
                pieces.push(std::mem::take(&mut current).to_lowercase());
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            current.push(c);
        }
        if !current.is_empty() {
            pieces.push(current.to_lowercase());
        }
    }
    pieces
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if word.is_empty() {
            return;
        }
        let pieces = split_identifier(word);
        let whole = word.to_lowercase();
        if pieces.len() != 1 || pieces[0] != whole {
            tokens.push(whole);
        }
        tokens.extend(pieces);
        word.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

impl HashedEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(String::from("\u{0}empty"));
        }
        for t in &tokens {
            v[(fnv1a64(t.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        l2_normalize(&mut v);
        v
    }
}

impl EmbeddingProvider for HashedEmbedder {
    fn id(&self) -> String {
        format!("local-hashed-{}", self.dim)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Scales `v` to unit length; the zero vector is left as is.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn tokens() {
        assert_eq!(
            tokenize("def readInput(max_len):"),
            ["def", "readinput", "read", "input", "(", "max_len", "max", "len", ")", ":"]
        );
    }

    #[test]
    fn identical_texts_identical_vectors() {
        let e = HashedEmbedder::default();
        assert_eq!(e.embed_one("def a(): return 1"), e.embed_one("def a(): return 1"));
    }

    #[test]
    fn unit_norm() {
        let e = HashedEmbedder::default();
        for t in ["", "x", "def f(x):\n    return x * 2", "ñ_ü"] {
            let v = e.embed_one(t);
            assert_eq!(v.len(), HASHED_DIM);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{t:?}");
        }
    }

    #[test]
    fn different_code_is_less_similar() {
        let e = HashedEmbedder::default();
        let a = e.embed_one("def a(): return 1");
        let b = e.embed_one("def zzz(): open_file()");
        let same = cosine(&a, &a);
        assert!((same - 1.0).abs() < 1e-12);
        assert!(cosine(&a, &b) < same);
    }
}
