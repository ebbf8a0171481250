//! Minimal `key = value` text format with optional `[section]` headers.
//!
//! Used for patient presets and experiment configs. Blank lines and lines
//! starting with `#` are ignored; keys keep their source line for
//! diagnostics.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    /// Empty for entries before the first header.
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

pub fn parse(text: &str) -> Result<Vec<Section>> {
    let mut sections = vec![Section::default()];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(Error::parse(line, "empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::parse(line, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected `key = value`, got `{trimmed}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(line, "missing key"));
        }
        let current = sections.last_mut().expect("at least the root section");
        if current.get(key).is_some() {
            return Err(Error::parse(line, format!("duplicate key `{key}`")));
        }
        current.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    if sections[0].entries.is_empty() {
        sections.remove(0);
    }
    Ok(sections)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_root_entries() {
        let text = "# comment\nseed = 4\n\n[a]\nx = 1\ny= two words \n[b]\nx=3\n";
        let sections = parse(text).unwrap();
        assert_eq!(sections.len(), 3);
        assert_eq!(sections[0].name, "");
        assert_eq!(sections[0].get("seed").unwrap().value, "4");
        assert_eq!(sections[1].get("y").unwrap().value, "two words");
        assert_eq!(sections[1].get("y").unwrap().line, 6);
        assert_eq!(sections[2].get("x").unwrap().value, "3");
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse("a = 1\nnonsense\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("a = 1\na = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("[x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }
}
