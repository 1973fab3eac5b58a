//! JSON code files.
//!
//! The canonical layout puts one class per line:
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "name": "l3n6-cyclic",
//!   "l": 3,
//!   "n": 6,
//!   "classes": [
//!     ["001122", "112200", "220011"],
//!     ...
//!   ]
//! }
//! ```
//!
//! `name` and `provenance` are optional. A file already in canonical layout
//! round-trips byte for byte through [`CodeFile::parse`] and [`CodeFile::to_json`].

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::conditions::{format_word, CodeSpec};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const EXAMPLE_JSON: &str = include_str!("../data/example_l3n6.json");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    schema_version: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    provenance: Option<String>,
    l: usize,
    n: usize,
    classes: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeFile {
    pub name: Option<String>,
    pub provenance: Option<String>,
    pub code: CodeSpec,
}

impl CodeFile {
    pub fn new(code: CodeSpec) -> Self {
        Self {
            name: None,
            provenance: None,
            code,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawFile =
            serde_json::from_str(text).map_err(|e| Error::CodeFile(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(Error::CodeFile(format!(
                "unsupported schema_version {}",
                raw.schema_version
            )));
        }
        let code = CodeSpec::from_strings(raw.l, raw.n, &raw.classes)?;
        Ok(Self {
            name: raw.name,
            provenance: raw.provenance,
            code,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::CodeFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
        let mut out = String::from("{\n");
        let _ = writeln!(out, "  \"schema_version\": {SCHEMA_VERSION},");
        if let Some(name) = &self.name {
            let _ = writeln!(out, "  \"name\": {},", quote(name));
        }
        if let Some(prov) = &self.provenance {
            let _ = writeln!(out, "  \"provenance\": {},", quote(prov));
        }
        let _ = writeln!(out, "  \"l\": {},", self.code.l());
        let _ = writeln!(out, "  \"n\": {},", self.code.n());
        out.push_str("  \"classes\": [\n");
        let classes = self.code.classes();
        for (i, class) in classes.iter().enumerate() {
            let words: Vec<String> = class.iter().map(|w| format!("\"{}\"", format_word(w))).collect();
            let sep = if i + 1 < classes.len() { "," } else { "" };
            let _ = writeln!(out, "    [{}]{sep}", words.join(", "));
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::CodeFile(format!("{}: {e}", path.display())))
    }
}

/// The bundled `l = 3, n = 6` example as file text.
pub fn example_json() -> &'static str {
    EXAMPLE_JSON
}

/// The bundled `l = 3, n = 6` example code.
pub fn example_code() -> CodeSpec {
    CodeFile::parse(EXAMPLE_JSON)
        .expect("bundled example parses")
        .code
}
