//! Rule-based answer extraction.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Question type; decides which extractor applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    FixedNumeric,
    FixedBinary,
    Free,
}

/// An extracted answer and the byte range it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub value: String,
    pub range: Range<usize>,
}

impl TaskKind {
    pub fn is_fixed(self) -> bool {
        !matches!(self, TaskKind::Free)
    }

    /// Free-form answers are the trimmed text itself (none if blank).
    pub fn extract(self, text: &str) -> Option<Extracted> {
        match self {
            TaskKind::FixedNumeric => extract_numeric_answer(text),
            TaskKind::FixedBinary => extract_binary_answer(text),
            TaskKind::Free => {
                let trimmed = text.trim();
                if trimmed.is_empty() {
                    return None;
                }
                let start = text.len() - text.trim_start().len();
                Some(Extracted {
                    value: trimmed.to_string(),
                    range: start..start + trimmed.len(),
                })
            }
        }
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").unwrap())
}

fn binary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:yes|no)\b").unwrap())
}

/// Last number in `text`, commas removed.
///
/// A leading `-` counts as a sign only when it does not follow an
/// alphanumeric character, so `3-5` yields `5`.
pub fn extract_numeric_answer(text: &str) -> Option<Extracted> {
    let m = number_re().find_iter(text).last()?;
    let mut start = m.start();
    if text[start..].starts_with('-')
        && text[..start]
            .chars()
            .next_back()
            .is_some_and(char::is_alphanumeric)
    {
        start += 1;
    }
    let raw = text[start..m.end()].trim_end_matches(',');
    let value: String = raw.chars().filter(|&c| c != ',').collect();
    Some(Extracted {
        value,
        range: start..start + raw.len(),
    })
}

/// Last word-bounded `yes` or `no`, lowercased.
pub fn extract_binary_answer(text: &str) -> Option<Extracted> {
    let m = binary_re().find_iter(text).last()?;
    Some(Extracted {
        value: m.as_str().to_lowercase(),
        range: m.range(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(s: &str) -> Option<String> {
        extract_numeric_answer(s).map(|e| e.value)
    }

    fn bin(s: &str) -> Option<String> {
        extract_binary_answer(s).map(|e| e.value)
    }

    #[test]
    fn numeric_examples() {
        assert_eq!(num("3 × 8 = 24").as_deref(), Some("24"));
        assert_eq!(num("no digits here"), None);
        assert_eq!(num("costs 1,234.5 total").as_deref(), Some("1234.5"));
        assert_eq!(num("it is -7 degrees").as_deref(), Some("-7"));
        assert_eq!(num("pages 3-5").as_deref(), Some("5"));
        assert_eq!(num("we get 24, done").as_deref(), Some("24"));
        assert_eq!(num("answer: 8.").as_deref(), Some("8"));
    }

    #[test]
    fn numeric_range_points_at_source() {
        let t = "total 1,234.5 items";
        let e = extract_numeric_answer(t).unwrap();
        assert_eq!(&t[e.range], "1,234.5");
    }

    #[test]
    fn binary_examples() {
        assert_eq!(bin("…so the answer is no.").as_deref(), Some("no"));
        assert_eq!(bin("Yes and no").as_deref(), Some("no"));
        assert_eq!(bin("YES").as_deref(), Some("yes"));
        assert_eq!(bin("nothing yesterday"), None);
        assert_eq!(bin("maybe"), None);
    }

    #[test]
    fn free_answers_are_trimmed_text() {
        let e = TaskKind::Free.extract("  linebacker ").unwrap();
        assert_eq!(e.value, "linebacker");
        assert_eq!(e.range, 2..12);
        assert_eq!(TaskKind::Free.extract("   "), None);
    }
}
