//! Dataset manifest: one clip per line,
//! `id<TAB>motion<TAB>main_audio<TAB>interloc_audio<TAB>main_transcript<TAB>interloc_transcript`
//! optionally followed by four precomputed embedding files
//! (`main_audio_emb`, `main_text_emb`, `interloc_audio_emb`, `interloc_text_emb`),
//! each of which may be `-`. Relative paths resolve against the manifest's
//! directory; `#` starts a comment line.

use std::path::{Path, PathBuf};

use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AgentInputs {
    pub audio: PathBuf,
    pub transcript: PathBuf,
    pub audio_embeddings: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub motion: PathBuf,
    pub main: AgentInputs,
    pub interlocutor: AgentInputs,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 6 && f.len() != 10 {
            return Err(parse_err(line_no, format!("expected 6 or 10 tab-separated fields, found {}", f.len())));
        }
        let path = |s: &str| -> Result<PathBuf> {
            if s.is_empty() || s == "-" {
                return Err(parse_err(line_no, "required path is missing"));
            }
            Ok(base.join(s))
        };
        let optional = |k: usize| -> Option<PathBuf> {
            f.get(k).filter(|s| !s.is_empty() && **s != "-").map(|s| base.join(s))
        };
        let id = f[0].to_string();
        if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return Err(parse_err(line_no, format!("invalid clip id `{id}`")));
        }
        if out.iter().any(|e| e.id == id) {
            return Err(parse_err(line_no, format!("duplicate clip id `{id}`")));
        }
        out.push(ManifestEntry {
            id,
            motion: path(f[1])?,
            main: AgentInputs {
                audio: path(f[2])?,
                transcript: path(f[4])?,
                audio_embeddings: optional(6),
                text_embeddings: optional(7),
            },
            interlocutor: AgentInputs {
                audio: path(f[3])?,
                transcript: path(f[5])?,
                audio_embeddings: optional(8),
                text_embeddings: optional(9),
            },
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = crate::error::read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).map_err(|e| match e {
        Error::Parse { line, message } => Error::Format(format!("{}:{line}: {message}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_relative_paths_and_optional_columns() {
        let text = "# comment\nc1\tm.bvh\ta.wav\tb.wav\ta.tsv\tb.tsv\n\
                    c2\tm2.bvh\ta2.wav\tb2.wav\ta2.tsv\tb2.tsv\tae.emb\t-\t-\tbt.emb\n";
        let m = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].motion, PathBuf::from("/data/m.bvh"));
        assert_eq!(m[0].main.audio_embeddings, None);
        assert_eq!(m[1].main.audio_embeddings, Some(PathBuf::from("/data/ae.emb")));
        assert_eq!(m[1].main.text_embeddings, None);
        assert_eq!(m[1].interlocutor.text_embeddings, Some(PathBuf::from("/data/bt.emb")));
    }

    #[test]
    fn rejects_bad_lines() {
        let base = Path::new(".");
        assert!(matches!(parse_manifest("c1\ta\tb\n", base), Err(Error::Parse { line: 1, .. })));
        let dup = "c\tm\ta\tb\tc\td\nc\tm\ta\tb\tc\td\n";
        assert!(matches!(parse_manifest(dup, base), Err(Error::Parse { line: 2, .. })));
        assert!(parse_manifest("c\tm\ta\tb\t-\td\n", base).is_err());
        assert!(parse_manifest("../x\tm\ta\tb\tc\td\n", base).is_err());
    }
}
