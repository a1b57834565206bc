//! Rendering price series as prompt text in ten formats.
//!
//! Every format is a pure function of the series and a [`SerializerConfig`];
//! output uses LF newlines, carries no trailing whitespace and renders every
//! price with exactly two fraction digits.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{window_until, PriceSeries, SeriesKind, TaskInstance, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("cannot serialize empty series")]
    EmptySeries,
    #[error("invalid serializer config: {0}")]
    InvalidConfig(&'static str),
    #[error("unknown prompt format `{0}`")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptFormat {
    Direct,
    Column,
    Row,
    PythonList,
    PythonListNested,
    PythonDictionary,
    HtmlTable,
    LatexTable,
    TextEnglish,
    TextJapanese,
}

impl PromptFormat {
    pub const ALL: [PromptFormat; 10] = [
        PromptFormat::Direct,
        PromptFormat::Column,
        PromptFormat::Row,
        PromptFormat::PythonList,
        PromptFormat::PythonListNested,
        PromptFormat::PythonDictionary,
        PromptFormat::HtmlTable,
        PromptFormat::LatexTable,
        PromptFormat::TextEnglish,
        PromptFormat::TextJapanese,
    ];

    /// Kebab-case name used on the command line and in files.
    pub fn cli_name(self) -> &'static str {
        match self {
            PromptFormat::Direct => "direct",
            PromptFormat::Column => "column",
            PromptFormat::Row => "row",
            PromptFormat::PythonList => "python-list",
            PromptFormat::PythonListNested => "python-list-nested",
            PromptFormat::PythonDictionary => "python-dictionary",
            PromptFormat::HtmlTable => "html-table",
            PromptFormat::LatexTable => "latex-table",
            PromptFormat::TextEnglish => "text-english",
            PromptFormat::TextJapanese => "text-japanese",
        }
    }

    /// Human-readable name for reports.
    pub fn display_name(self) -> &'static str {
        match self {
            PromptFormat::Direct => "Direct",
            PromptFormat::Column => "Column",
            PromptFormat::Row => "Row",
            PromptFormat::PythonList => "Python List",
            PromptFormat::PythonListNested => "Python List (nested)",
            PromptFormat::PythonDictionary => "Python Dictionary",
            PromptFormat::HtmlTable => "HTML Table",
            PromptFormat::LatexTable => "LaTeX Table",
            PromptFormat::TextEnglish => "Text (English)",
            PromptFormat::TextJapanese => "Text (Japanese)",
        }
    }

    /// Position in [`PromptFormat::ALL`].
    pub fn index(self) -> usize {
        PromptFormat::ALL.iter().position(|f| *f == self).unwrap_or(0)
    }
}

impl fmt::Display for PromptFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for PromptFormat {
    type Err = SerializeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptFormat::ALL
            .into_iter()
            .find(|f| f.cli_name() == s)
            .ok_or_else(|| SerializeError::UnknownFormat(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Japanese,
    English,
}

impl Language {
    fn default_currency(self) -> &'static str {
        match self {
            Language::Japanese => "円",
            Language::English => "yen",
        }
    }
}

impl FromStr for Language {
    type Err = SerializeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "japanese" | "ja" => Ok(Language::Japanese),
            "english" | "en" => Ok(Language::English),
            _ => Err(SerializeError::InvalidConfig("language must be japanese or english")),
        }
    }
}

/// Labels and template language shared by all formats.
///
/// Unset optional fields fall back per series kind and format: the time
/// heading is `Time` for short-term and `Date` for long-term series (the
/// LaTeX table uses `Timestamp`), and each Text format uses its own language
/// with `円` / `yen` as the currency suffix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SerializerConfig {
    pub heading_time: Option<String>,
    pub heading_value: String,
    pub language: Option<Language>,
    pub currency_suffix: Option<String>,
}

impl Default for SerializerConfig {
    fn default() -> Self {
        SerializerConfig {
            heading_time: None,
            heading_value: "Nikkei225".into(),
            language: None,
            currency_suffix: None,
        }
    }
}

impl SerializerConfig {
    pub fn validate(&self) -> Result<(), SerializeError> {
        let ok = |s: &str| !s.trim().is_empty() && !s.contains(['\n', '\r']);
        if !ok(&self.heading_value) {
            return Err(SerializeError::InvalidConfig("heading_value must be non-empty and single-line"));
        }
        if self.heading_time.as_deref().is_some_and(|h| !ok(h)) {
            return Err(SerializeError::InvalidConfig("heading_time must be non-empty and single-line"));
        }
        if self.currency_suffix.as_deref().is_some_and(|c| c.contains(['\n', '\r'])) {
            return Err(SerializeError::InvalidConfig("currency_suffix must be single-line"));
        }
        Ok(())
    }

    fn time_heading(&self, kind: SeriesKind, format: PromptFormat) -> &str {
        match (&self.heading_time, kind, format) {
            (Some(h), _, _) => h,
            (None, _, PromptFormat::LatexTable) => "Timestamp",
            (None, SeriesKind::ShortTerm, _) => "Time",
            (None, SeriesKind::LongTerm, _) => "Date",
        }
    }

    fn text_language(&self, format: PromptFormat) -> Language {
        self.language.unwrap_or(match format {
            PromptFormat::TextEnglish => Language::English,
            _ => Language::Japanese,
        })
    }
}

/// Renders one series in `format`.
pub fn serialize(
    series: &PriceSeries,
    format: PromptFormat,
    config: &SerializerConfig,
) -> Result<String, SerializeError> {
    config.validate()?;
    if series.is_empty() {
        return Err(SerializeError::EmptySeries);
    }
    let time = config.time_heading(series.kind(), format);
    let value = config.heading_value.as_str();
    let points = series.points();
    let mut out = String::new();
    // Writes into a String cannot fail.
    match format {
        PromptFormat::Direct => {
            out = join(points.iter().map(|(_, p)| p), " ");
        }
        PromptFormat::Column => {
            let _ = write!(
                out,
                "{time}: {}\n{value}: {}",
                join(points.iter().map(|(t, _)| t), " "),
                join(points.iter().map(|(_, p)| p), " ")
            );
        }
        PromptFormat::Row => {
            let _ = write!(out, "{time} {value}");
            for (t, p) in points {
                let _ = write!(out, "\n{t} {p}");
            }
        }
        PromptFormat::PythonList => {
            let _ = write!(
                out,
                "{time} = [{}] {value} = [{}]",
                join(points.iter().map(|(t, _)| Quoted(t)), ", "),
                join(points.iter().map(|(_, p)| p), ", ")
            );
        }
        PromptFormat::PythonListNested => {
            let _ = write!(
                out,
                "{value} = [{}]",
                join(points.iter().map(|(t, p)| NestedPair(t, p)), ", ")
            );
        }
        PromptFormat::PythonDictionary => {
            let _ = write!(
                out,
                "{value} = {{{}}}",
                join(points.iter().map(|(t, p)| DictEntry(t, p)), ", ")
            );
        }
        PromptFormat::HtmlTable => {
            let _ = write!(out, "<table><tr><th>{time}</th><th>{value}</th></tr>");
            for (t, p) in points {
                let _ = write!(out, "<tr><td>{t}</td><td>{p}</td></tr>");
            }
            out.push_str("</table>");
        }
        PromptFormat::LatexTable => {
            let _ = write!(out, "\\begin{{table}}[t] \\begin{{tabular}} & \\hline {time} & {value} \\\\ \\hline \\hline");
            for (t, p) in points {
                let _ = write!(out, " {t} & {p} \\\\ \\hline");
            }
            out.push_str(" \\end{tabular} \\end{table}");
        }
        PromptFormat::TextEnglish | PromptFormat::TextJapanese => {
            let language = config.text_language(format);
            let currency = config.currency_suffix.as_deref().unwrap_or(language.default_currency());
            let mut first = true;
            for (t, p) in points {
                if !first {
                    out.push('\n');
                }
                first = false;
                write_sentence(&mut out, language, value, *t, p, currency);
            }
        }
    }
    Ok(out)
}

fn write_sentence(
    out: &mut String,
    language: Language,
    value: &str,
    t: Timestamp,
    p: &crate::price::Yen,
    currency: &str,
) {
    let _ = match (language, t) {
        (Language::English, Timestamp::Clock(c)) => {
            write!(out, "{value} as of {c} is {p}{}.", Spaced(currency))
        }
        (Language::English, Timestamp::DaysAgo(1)) => {
            write!(out, "{value} closing stock price as of yesterday was {p}{}.", Spaced(currency))
        }
        (Language::English, Timestamp::DaysAgo(d)) => {
            write!(out, "{value} closing stock price as of {d} days ago was {p}{}.", Spaced(currency))
        }
        (Language::Japanese, Timestamp::Clock(c)) => write!(out, "{c}時点の{value}は{p}{currency}。"),
        (Language::Japanese, Timestamp::DaysAgo(d)) => write!(out, "{d}日前の{value}終値は{p}{currency}。"),
    };
}

/// Renders the target-windowed short-term series and the long-term series,
/// separated by a newline.
pub fn serialize_pair(
    instance: &TaskInstance,
    format: PromptFormat,
    config: &SerializerConfig,
) -> Result<String, SerializeError> {
    let short = window_until(instance.short_term(), instance.target_time());
    let mut out = serialize(&short, format, config)?;
    out.push('\n');
    out.push_str(&serialize(instance.long_term(), format, config)?);
    Ok(out)
}

fn join<T: fmt::Display>(items: impl Iterator<Item = T>, sep: &str) -> String {
    let mut out = String::new();
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        let _ = write!(out, "{item}");
    }
    out
}

struct Quoted<'a>(&'a Timestamp);

impl fmt::Display for Quoted<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.0)
    }
}

struct NestedPair<'a>(&'a Timestamp, &'a crate::price::Yen);

impl fmt::Display for NestedPair<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[\"{}\", {}]", self.0, self.1)
    }
}

struct DictEntry<'a>(&'a Timestamp, &'a crate::price::Yen);

impl fmt::Display for DictEntry<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\":{}", self.0, self.1)
    }
}

// " yen" for word suffixes, nothing extra for an empty suffix.
struct Spaced<'a>(&'a str);

impl fmt::Display for Spaced<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            Ok(())
        } else {
            write!(f, " {}", self.0)
        }
    }
}

/// Character count of every format for the same series; handy for the
/// prompt-length comparisons in reports.
pub fn format_lengths(
    series: &PriceSeries,
    config: &SerializerConfig,
) -> Result<Vec<(PromptFormat, usize)>, SerializeError> {
    PromptFormat::ALL
        .into_iter()
        .map(|f| serialize(series, f, config).map(|s| (f, s.chars().count())))
        .collect()
}
