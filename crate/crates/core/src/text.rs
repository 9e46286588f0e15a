//! Word counting and claim-span normalization.
//!
//! Counting rule: split on whitespace; each punctuation character at the start
//! or end of a chunk is its own token; the remaining middle of the chunk is one
//! token. Contractions (`didn't`), hyphenated words and decimals stay whole.

/// ASCII punctuation plus the typographic quotes, dashes and ellipsis common in
/// forum text.
pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '—' | '–' | '…' | '«' | '»')
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().map(chunk_tokens).sum()
}

fn chunk_tokens(chunk: &str) -> usize {
    let chars: Vec<char> = chunk.chars().collect();
    let lead = chars.iter().take_while(|c| is_punct(**c)).count();
    if lead == chars.len() {
        return lead;
    }
    let trail = chars.iter().rev().take_while(|c| is_punct(**c)).count();
    lead + trail + 1
}

/// Lowercases, trims punctuation off both ends of every whitespace token,
/// drops tokens left empty and joins the rest with single spaces.
pub fn normalize_for_match(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for token in lower.split_whitespace() {
        let token = token.trim_matches(is_punct);
        if token.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}
