//! JSONL question sets.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(rename = "task")]
    pub task_kind: TaskKind,
}

impl QaExample {
    /// Prompt text: optional prefix, optional context, then the question,
    /// separated by blank lines.
    pub fn prompt(&self, prefix: Option<&str>) -> String {
        [
            prefix,
            self.context.as_deref(),
            Some(self.question.as_str()),
        ]
        .into_iter()
        .flatten()
        .filter(|s| !s.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
    }
}

/// Parses one example per non-blank line. Duplicate ids are kept with a
/// warning.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<QaExample>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::DatasetParse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let ex: QaExample = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if ex.gold_answers.is_empty() {
            return Err(err("answers must not be empty".into()));
        }
        if !seen.insert(ex.id.clone()) {
            log::warn!("{}:{}: duplicate id {:?}", path.display(), i + 1, ex.id);
        }
        out.push(ex);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    parse_dataset(&std::fs::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<QaExample>> {
        parse_dataset(s, Path::new("d.jsonl"))
    }

    #[test]
    fn loads_in_order() {
        let s = r#"{"id":"a","question":"q1","answers":["1"],"task":"fixed-numeric"}
{"id":"b","question":"q2","answers":["yes"],"task":"fixed-binary"}
{"id":"c","question":"q3","context":"ctx","answers":["x","y"],"task":"free"}
"#;
        let d = parse(s).unwrap();
        assert_eq!(
            d.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert_eq!(d[2].task_kind, TaskKind::Free);
        assert_eq!(d[2].prompt(Some("P")), "P\n\nctx\n\nq3");
    }

    #[test]
    fn reports_line_of_bad_record() {
        let s = r#"{"id":"a","question":"q","answers":["1"],"task":"free"}
{"id":"b","question":"q","task":"free"}"#;
        match parse(s) {
            Err(Error::DatasetParse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("answers"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let empty_gold = r#"{"id":"a","question":"q","answers":[],"task":"free"}"#;
        assert!(matches!(
            parse(empty_gold),
            Err(Error::DatasetParse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicates_kept_and_empty_rejected() {
        let s = r#"{"id":"a","question":"q","answers":["1"],"task":"free"}
{"id":"a","question":"r","answers":["2"],"task":"free"}"#;
        assert_eq!(parse(s).unwrap().len(), 2);
        assert!(matches!(parse("\n\n"), Err(Error::EmptyDataset(_))));
    }
}
