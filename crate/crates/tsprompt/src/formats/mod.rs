//! On-disk formats: price CSV, dataset JSONL, movement lexicon TSV and
//! `key=value` serializer settings.

pub mod dataset;
pub mod lexicon;
pub mod price_csv;
pub mod settings;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
