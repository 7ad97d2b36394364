use std::io::{BufRead, Write};

use anyhow::Result;
use sitegrounder_core::conversation::{answer_turn, ChainOptions, ChatSession, LlmClient};
use sitegrounder_core::embedding::Embedder;
use sitegrounder_core::vector_index::VectorIndex;

pub struct ChatSettings {
    pub opts: ChainOptions,
    pub profile_id: String,
    pub show_sources: bool,
}

/// Reads one question per line. `/reset` clears the history, `/sources`
/// toggles source listing, `/quit` (or end of input) exits. A failed turn is
/// reported and the loop continues.
pub async fn repl(
    input: impl BufRead,
    mut out: impl Write,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    llm: &dyn LlmClient,
    mut settings: ChatSettings,
) -> Result<()> {
    let mut session = ChatSession::new("cli", settings.profile_id.clone());
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        match text {
            "" => continue,
            "/quit" | "/exit" => break,
            "/reset" => {
                session.clear();
                writeln!(out, "(history cleared)")?;
            }
            "/sources" => {
                settings.show_sources = !settings.show_sources;
                let state = if settings.show_sources { "on" } else { "off" };
                writeln!(out, "(sources {state})")?;
            }
            question => {
                match answer_turn(&mut session, question, index, embedder, llm, &settings.opts)
                    .await
                {
                    Ok(turn) => {
                        writeln!(out, "{}", turn.answer)?;
                        if settings.show_sources {
                            for (i, s) in turn.sources.iter().enumerate() {
                                writeln!(out, "  [{}] {} ({:.4})", i + 1, s.source_url, s.score)?;
                            }
                        }
                    }
                    Err(e) => writeln!(out, "(error: {e})")?,
                }
            }
        }
        out.flush()?;
    }
    Ok(())
}
