//! The canonical text format shared by transcripts and reports.
//!
//! Line 1 is `qpc-lab <kind> v<version>`; every following line is
//! `key = value` in a fixed order chosen by the writer. Output is a pure
//! function of the data written, so equal inputs give equal bytes.

use std::fmt::Display;

use crate::error::{invalid, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const FORMAT_PREFIX: &str = "qpc-lab";

pub struct CanonicalWriter {
    out: String,
}

impl CanonicalWriter {
    pub fn new(kind: &str) -> Self {
        CanonicalWriter {
            out: format!("{FORMAT_PREFIX} {kind} v{FORMAT_VERSION}\n"),
        }
    }

    pub fn field(&mut self, key: impl Display, value: impl Display) -> &mut Self {
        self.out.push_str(&format!("{key} = {value}\n"));
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// A parsed canonical document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalDoc {
    pub kind: String,
    pub version: u32,
    pub fields: Vec<(String, String)>,
}

impl CanonicalDoc {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn parse(text: &str) -> Result<CanonicalDoc> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| invalid("empty document"))?;
    let mut parts = header.split(' ');
    let (Some(FORMAT_PREFIX), Some(kind), Some(version), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(invalid(format!("bad header line `{header}`")));
    };
    let version = version
        .strip_prefix('v')
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| invalid(format!("bad version tag `{version}`")))?;
    let fields = lines
        .map(|line| {
            line.split_once(" = ")
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| invalid(format!("bad field line `{line}`")))
        })
        .collect::<Result<_>>()?;
    Ok(CanonicalDoc {
        kind: kind.to_string(),
        version,
        fields,
    })
}
