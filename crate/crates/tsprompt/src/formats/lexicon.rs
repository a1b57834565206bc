//! Movement lexicon TSV: `term<TAB>direction<TAB>continuation` per line.
//! Blank lines and lines starting with `#` are skipped.

use std::path::Path;

use tsprompt_core::{LexiconEntry, MovementLexicon};

use crate::error::{Error, Result};

pub fn load_lexicon(path: &Path) -> Result<MovementLexicon> {
    let text = super::read_to_string(path)?;
    parse_lexicon(&text, &path.display().to_string())
}

pub fn parse_lexicon(text: &str, source_name: &str) -> Result<MovementLexicon> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::parse(source_name, idx + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        entries.push(LexiconEntry {
            term: fields[0].trim().into(),
            direction: fields[1].parse().map_err(|e| err(format!("{e}")))?,
            continuation: fields[2].parse().map_err(|e| err(format!("{e}")))?,
        });
    }
    MovementLexicon::new(entries).map_err(|e| Error::parse(source_name, 0, e.to_string()))
}

pub fn write_lexicon(lexicon: &MovementLexicon) -> String {
    lexicon
        .entries()
        .iter()
        .map(|e| format!("{}\t{}\t{}\n", e.term, e.direction, e.continuation))
        .collect()
}
