//! Overlapping character-window chunking.
//!
//! A document's blocks are joined with `\n` and cut into windows of at most
//! `max_chunk_chars` characters. A window that does not reach the end of the
//! text is pulled back to the last whitespace inside it, as long as the cut
//! stays past `start + overlap_chars`. The next window starts `overlap_chars`
//! before the previous cut, so without snapping the stride is
//! `max_chunk_chars - overlap_chars`. Offsets count `char`s, not bytes.

use serde::{Deserialize, Serialize};

use crate::crawler::Document;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_url: String,
    pub text: String,
    pub start_offset: usize,
    pub end_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkingConfig {
    max_chunk_chars: usize,
    overlap_chars: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid chunking config: {0}")]
pub struct ChunkConfigError(String);

impl ChunkingConfig {
    pub fn new(max_chunk_chars: usize, overlap_chars: usize) -> Result<Self, ChunkConfigError> {
        if max_chunk_chars == 0 {
            return Err(ChunkConfigError("max_chunk_chars must be positive".into()));
        }
        if overlap_chars >= max_chunk_chars {
            return Err(ChunkConfigError(format!(
                "overlap_chars ({overlap_chars}) must be less than max_chunk_chars ({max_chunk_chars})"
            )));
        }
        Ok(Self {
            max_chunk_chars,
            overlap_chars,
        })
    }

    pub fn max_chunk_chars(&self) -> usize {
        self.max_chunk_chars
    }

    pub fn overlap_chars(&self) -> usize {
        self.overlap_chars
    }
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_chunk_chars: 1000,
            overlap_chars: 200,
        }
    }
}

/// The text chunk offsets refer to.
pub fn joined_text(doc: &Document) -> String {
    doc.blocks.join("\n")
}

/// Computes `[start, end)` char spans for `text`.
pub fn chunk_spans(text: &str, cfg: &ChunkingConfig) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let (max, overlap) = (cfg.max_chunk_chars, cfg.overlap_chars);
    let mut spans = Vec::new();
    if len == 0 {
        return spans;
    }
    let mut start = 0;
    loop {
        let window_end = (start + max).min(len);
        let mut end = window_end;
        if window_end < len {
            if let Some(ws) = (start + overlap + 1..=window_end)
                .rev()
                .find(|&i| chars[i].is_whitespace())
            {
                end = ws;
            }
        }
        spans.push((start, end));
        if end == len {
            break;
        }
        start = end - overlap;
    }
    spans
}

pub fn chunk_document(doc: &Document, cfg: &ChunkingConfig) -> Vec<Chunk> {
    let text = joined_text(doc);
    let chars: Vec<char> = text.chars().collect();
    let source_url = doc.url.to_string();
    chunk_spans(&text, cfg)
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| Chunk {
            chunk_id: format!("{source_url}#{ordinal}"),
            source_url: source_url.clone(),
            text: chars[start..end].iter().collect(),
            start_offset: start,
            end_offset: end,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use url::Url;

    fn doc(blocks: &[&str]) -> Document {
        Document {
            url: Url::parse("https://x.example/p").unwrap(),
            title: String::new(),
            blocks: blocks.iter().map(|s| s.to_string()).collect(),
            links: vec![],
        }
    }

    #[test]
    fn short_document_is_one_chunk() {
        let text = "a".repeat(60);
        let d = doc(&[&text, &"b".repeat(39)]);
        let chunks = chunk_document(&d, &ChunkingConfig::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text.chars().count(), 100);
        assert_eq!(chunks[0].text, joined_text(&d));
        assert_eq!(chunks[0].chunk_id, "https://x.example/p#0");
    }

    #[test]
    fn empty_document_has_no_chunks() {
        assert!(chunk_document(&doc(&[]), &ChunkingConfig::default()).is_empty());
    }

    #[test]
    fn config_rejects_overlap_not_below_max() {
        assert!(ChunkingConfig::new(10, 10).is_err());
        assert!(ChunkingConfig::new(0, 0).is_err());
        assert!(ChunkingConfig::new(10, 9).is_ok());
    }

    #[test]
    fn hard_cut_without_whitespace() {
        let text = "x".repeat(25);
        let cfg = ChunkingConfig::new(10, 3).unwrap();
        assert_eq!(
            chunk_spans(&text, &cfg),
            vec![(0, 10), (7, 17), (14, 24), (21, 25)]
        );
    }

    #[test]
    fn snaps_back_to_whitespace() {
        // whitespace at index 7 and 11
        let text = "aaaaaaa bbb cccccccccc";
        let cfg = ChunkingConfig::new(10, 2).unwrap();
        let spans = chunk_spans(text, &cfg);
        assert_eq!(spans[0], (0, 7));
        assert_eq!(spans[1], (5, 11));
    }

    #[test]
    fn offsets_are_chars_not_bytes() {
        let d = doc(&["héllo wörld ñandú"]);
        let cfg = ChunkingConfig::new(8, 2).unwrap();
        let text: Vec<char> = joined_text(&d).chars().collect();
        for c in chunk_document(&d, &cfg) {
            let span: String = text[c.start_offset..c.end_offset].iter().collect();
            assert_eq!(span, c.text);
        }
    }

    proptest! {
        #[test]
        fn spans_cover_text_and_respect_budget(
            words in proptest::collection::vec("[a-zé]{1,15}", 0..200),
            seps in proptest::collection::vec(prop_oneof![Just(" "), Just("\n"), Just("")], 200),
            max in 2usize..120,
            overlap_frac in 0.0f64..0.95,
        ) {
            let text: String = words.iter().zip(seps.iter()).map(|(w, s)| format!("{w}{s}")).collect();
            let overlap = ((max as f64) * overlap_frac) as usize;
            let cfg = ChunkingConfig::new(max, overlap.min(max - 1)).unwrap();
            let spans = chunk_spans(&text, &cfg);
            let len = text.chars().count();
            let mut covered = 0;
            for (i, &(s, e)) in spans.iter().enumerate() {
                prop_assert!(s < e);
                prop_assert!(e - s <= max);
                prop_assert!(s <= covered);
                covered = covered.max(e);
                if i > 0 {
                    prop_assert!(s > spans[i - 1].0);
                    prop_assert_eq!(s, spans[i - 1].1 - cfg.overlap_chars());
                }
            }
            prop_assert_eq!(covered, len);
        }

        #[test]
        fn dropping_overlap_prefixes_reconstructs_text(
            text in "[a-z \n]{0,400}",
            max in 2usize..60,
            overlap in 0usize..60,
        ) {
            prop_assume!(overlap < max);
            let cfg = ChunkingConfig::new(max, overlap).unwrap();
            let d = doc(&[&text]);
            let chunks = chunk_document(&d, &cfg);
            let rebuilt: String = chunks
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { c.text.clone() } else { c.text.chars().skip(overlap).collect() })
                .collect();
            prop_assert_eq!(rebuilt, joined_text(&d));
        }
    }
}
