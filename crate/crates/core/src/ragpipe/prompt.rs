use crate::error::{Error, Result};

pub const DEFAULT_INSTRUCTION: &str =
    "Answer the question using the retrieved passages below. Reply with a short answer.";

/// `instruction`, a blank line, one `[i] context` line per context in rank
/// order, a blank line, then `Question: query`.
pub fn assemble_prompt(query: &str, contexts: &[String], instruction: &str) -> Result<String> {
    if contexts.is_empty() {
        return Err(Error::EmptyInput("prompt contexts"));
    }
    let mut out = String::from(instruction);
    out.push_str("\n\n");
    for (i, c) in contexts.iter().enumerate() {
        out.push_str(&format!("[{}] {c}\n", i + 1));
    }
    out.push_str(&format!("\nQuestion: {query}"));
    Ok(out)
}
