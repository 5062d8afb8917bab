use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    /// Upper bound on chunk length, in characters.
    pub max_chars: usize,
    /// Characters shared by consecutive chunks.
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_chars: 1200,
            overlap: 200,
        }
    }
}

/// A chunk as a character range of its document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Splits `text` into windows of at most `max_chars` characters.
///
/// A window ends at the last paragraph break (`\n\n`) inside it when that
/// break lies beyond the overlap region, otherwise at the hard limit. The
/// next window starts `overlap` characters before the previous end.
pub fn split_chunks(text: &str, config: ChunkingConfig) -> Vec<ChunkSpan> {
    assert!(config.max_chars > config.overlap, "chunk size must exceed overlap");
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    if n == 0 {
        return spans;
    }
    let mut start = 0usize;
    loop {
        let hard_end = (start + config.max_chars).min(n);
        let end = if hard_end == n {
            n
        } else {
            paragraph_break(&chars, start + config.overlap + 1, hard_end).unwrap_or(hard_end)
        };
        let piece: String = chars[start..end].iter().collect();
        if !piece.trim().is_empty() {
            spans.push(ChunkSpan {
                start,
                end,
                text: piece,
            });
        }
        if end == n {
            break;
        }
        start = end - config.overlap;
    }
    spans
}

// Largest p in [lo, hi] such that chars[p-2..p] is "\n\n".
fn paragraph_break(chars: &[char], lo: usize, hi: usize) -> Option<usize> {
    (lo.max(2)..=hi)
        .rev()
        .find(|&p| chars[p - 2] == '\n' && chars[p - 1] == '\n')
}
