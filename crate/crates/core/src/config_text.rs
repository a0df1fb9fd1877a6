//! Flat `key = value` text used by config, grid, synth and adapter files.
//!
//! Blank lines and lines starting with `#` are ignored. A `[name]` line
//! opens a named section; entries before the first section belong to an
//! unnamed leading section.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Section {
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

pub fn parse_sections(text: &str, source_name: &str) -> Result<Vec<Section>> {
    let mut sections = vec![Section::default()];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty());
            let Some(name) = name else {
                return Err(parse_error(
                    source_name,
                    line_no,
                    format!("bad section header `{line}`"),
                ));
            };
            sections.push(Section {
                name: Some(name.to_string()),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_error(
                source_name,
                line_no,
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(parse_error(source_name, line_no, "empty key".into()));
        }
        let current = sections.last_mut().expect("at least one section");
        if current.entries.iter().any(|e| e.key == key) {
            return Err(parse_error(
                source_name,
                line_no,
                format!("duplicate key `{key}`"),
            ));
        }
        current.entries.push(Entry {
            line: line_no,
            key: key.to_string(),
            value: unquote(value.trim()).to_string(),
        });
    }
    Ok(sections)
}

/// Parses a file without sections.
pub fn parse_entries(text: &str, source_name: &str) -> Result<Vec<Entry>> {
    let mut sections = parse_sections(text, source_name)?;
    if let Some(named) = sections.get(1) {
        return Err(parse_error(
            source_name,
            named.line,
            "sections are not allowed here".into(),
        ));
    }
    Ok(sections.remove(0).entries)
}

fn unquote(value: &str) -> &str {
    value
        .strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .unwrap_or(value)
}

pub(crate) fn parse_error(source_name: &str, line: usize, message: String) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    }
}

impl Entry {
    pub fn error(&self, source_name: &str, message: impl Into<String>) -> Error {
        parse_error(source_name, self.line, message.into())
    }

    pub fn parse<V: std::str::FromStr>(&self, source_name: &str) -> Result<V> {
        self.value.parse().map_err(|_| {
            self.error(
                source_name,
                format!("invalid value `{}` for `{}`", self.value, self.key),
            )
        })
    }

    pub fn parse_bool(&self, source_name: &str) -> Result<bool> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            _ => Err(self.error(
                source_name,
                format!("invalid boolean `{}` for `{}`", self.value, self.key),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "# shared\nstride = 8\n\n[a]\nd_exclusive=0.25\n[b]\nd_exclusive = \"0.5\"\n";
        let s = parse_sections(text, "grid").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].entries[0].key, "stride");
        assert_eq!(s[1].name.as_deref(), Some("a"));
        assert_eq!(s[2].entries[0].value, "0.5");
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_sections("a = 1\nnonsense\n", "cfg") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_sections("a=1\na=2\n", "cfg").is_err());
        assert!(parse_entries("[x]\na=1\n", "cfg").is_err());
        assert!(parse_sections("[]\n", "cfg").is_err());
    }
}
