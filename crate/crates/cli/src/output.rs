//! Output files with embedded provenance, written atomically.
//!
//! Text files (`.csv`, `.dat`) open with `#` lines naming the version, the
//! command, the format and the resolved config as TOML. JSON files wrap the
//! payload as `{"clipkde": {version, command, format, config}, "result": ..}`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use clipkde::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    pub format: String,
    /// Resolved config as TOML text.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    /// A text file with a commented provenance header.
    pub fn text(name: impl Into<String>, prov: &Provenance, body: &str) -> Self {
        let mut s = format!(
            "# clipkde {}\n# command: {}\n# format: {}\n# config:\n",
            prov.version, prov.command, prov.format
        );
        for line in prov.config.lines() {
            if line.is_empty() {
                s.push_str("#\n");
            } else {
                s.push_str("# ");
                s.push_str(line);
                s.push('\n');
            }
        }
        s.push_str(body);
        Self {
            name: name.into(),
            bytes: s.into_bytes(),
        }
    }

    pub fn json(name: impl Into<String>, prov: &Provenance, result: serde_json::Value) -> Self {
        let doc = serde_json::json!({ "clipkde": prov, "result": result });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("JSON value serializes");
        bytes.push(b'\n');
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// Reads the provenance back from an output file.
pub fn read_provenance(bytes: &[u8]) -> Result<Provenance> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    if text.trim_start().starts_with('{') {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        return Ok(serde_json::from_value(doc["clipkde"].clone())?);
    }
    let mut lines = text.lines();
    let mut field = |prefix: &str| -> Result<String> {
        lines
            .next()
            .and_then(|l| l.strip_prefix(prefix))
            .map(str::to_owned)
            .ok_or_else(|| Error::Parse(format!("missing `{prefix}` header line")))
    };
    let version = field("# clipkde ")?;
    let command = field("# command: ")?;
    let format = field("# format: ")?;
    field("# config:")?;
    let mut config = String::new();
    for line in lines {
        if line == "#" {
            config.push('\n');
        } else if let Some(rest) = line.strip_prefix("# ") {
            config.push_str(rest);
            config.push('\n');
        } else {
            break;
        }
    }
    Ok(Provenance {
        version,
        command,
        format,
        config,
    })
}

/// Writes every artifact to a temporary file in `dir`, then renames them
/// all into place. Nothing is renamed unless every write succeeded.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&a.bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(&a.name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, path) in staged {
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        written.push(path);
    }
    Ok(written)
}
