//! Atomic report writing: each file is written to a temporary sibling and
//! renamed into place, so a crash never leaves a half-written report.

use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub struct Formats {
    pub text: bool,
    pub csv: bool,
}

impl Formats {
    pub fn from_list(formats: &[String]) -> Formats {
        Formats {
            text: formats.iter().any(|f| f == "text"),
            csv: formats.iter().any(|f| f == "csv"),
        }
    }
}

pub enum FileKind {
    Text,
    Csv,
}

pub struct OutputFile {
    pub name: &'static str,
    pub kind: FileKind,
    pub content: String,
}

impl OutputFile {
    pub fn text(name: &'static str, content: String) -> OutputFile {
        OutputFile {
            name,
            kind: FileKind::Text,
            content,
        }
    }

    pub fn csv(name: &'static str, content: String) -> OutputFile {
        OutputFile {
            name,
            kind: FileKind::Csv,
            content,
        }
    }
}

pub fn write_atomic(path: &Path, content: &str) -> Result<(), String> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)
        .map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
    fs::rename(&tmp, path)
        .map_err(|e| format!("cannot rename {} into place: {e}", tmp.display()))
}

pub fn write_outputs(
    dir: &Path,
    formats: &Formats,
    files: Vec<OutputFile>,
) -> Result<(), String> {
    fs::create_dir_all(dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    for file in files {
        let wanted = match file.kind {
            FileKind::Text => formats.text,
            FileKind::Csv => formats.csv,
        };
        if wanted {
            write_atomic(&dir.join(file.name), &file.content)?;
        }
    }
    Ok(())
}
