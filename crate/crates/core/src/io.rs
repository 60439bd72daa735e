//! Artifact plumbing: schema-tagged JSONL, canonical config hashing and
//! atomic file replacement.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    Fs { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: expected schema `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        line: usize,
        expected: String,
        found: String,
    },
}

fn fs_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Fs {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    schema: &'a str,
    #[serde(flatten)]
    inner: &'a T,
}

/// One JSON object per line, each carrying `"schema"` as its first field.
pub fn to_jsonl<T: Serialize>(schema: &str, items: &[T]) -> String {
    let mut out = String::new();
    for inner in items {
        out.push_str(&serde_json::to_string(&Tagged { schema, inner }).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parse JSONL text, checking (and stripping) the schema tag on every line.
/// Blank lines are skipped. `path` is only used in error messages.
pub fn from_jsonl<T: DeserializeOwned>(
    text: &str,
    schema: &str,
    path: &Path,
) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let json_err = |message: String| IoError::Json {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut value: Value = serde_json::from_str(raw).map_err(|e| json_err(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| json_err("record is not a JSON object".into()))?;
        let found = obj.remove("schema");
        match found.as_ref().and_then(Value::as_str) {
            Some(s) if s == schema => {}
            other => {
                return Err(IoError::Schema {
                    path: path.to_path_buf(),
                    line,
                    expected: schema.to_string(),
                    found: other.unwrap_or("<missing>").to_string(),
                })
            }
        }
        out.push(serde_json::from_value(value).map_err(|e| json_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| fs_err(path, e))?;
    from_jsonl(&text, schema, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| fs_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, canonical(v)))
                    .collect::<Map<_, _>>(),
            )
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// SHA-256 over the key-sorted compact JSON form, as lowercase hex.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let value = canonical(serde_json::to_value(config).expect("config serializes"));
    let digest = Sha256::digest(
        serde_json::to_string(&value)
            .expect("value serializes")
            .as_bytes(),
    );
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's bytes, as lowercase hex.
pub fn file_digest(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(|e| fs_err(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Stage several files in their target directories, then rename them into
/// place. Nothing is renamed unless every file was staged.
pub fn write_all_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<(), IoError> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(|e| fs_err(&dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| fs_err(&dir, e))?;
        tmp.write_all(bytes).map_err(|e| fs_err(path, e))?;
        tmp.as_file().sync_all().map_err(|e| fs_err(path, e))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| fs_err(path, e.error))?;
    }
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    write_all_atomic(&[(path.to_path_buf(), bytes.to_vec())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        a: u32,
        b: String,
    }

    #[test]
    fn jsonl_round_trip_tags_schema_first() {
        let recs = vec![
            Rec {
                a: 1,
                b: "x".into(),
            },
            Rec {
                a: 2,
                b: "y".into(),
            },
        ];
        let text = to_jsonl("rec/1", &recs);
        assert!(text.starts_with(r#"{"schema":"rec/1","a":1"#));
        let back: Vec<Rec> = from_jsonl(&text, "rec/1", Path::new("mem")).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = to_jsonl(
            "rec/2",
            &[Rec {
                a: 1,
                b: "x".into(),
            }],
        );
        let e = from_jsonl::<Rec>(&text, "rec/1", Path::new("mem")).unwrap_err();
        assert!(matches!(e, IoError::Schema { line: 1, .. }));
        let e =
            from_jsonl::<Rec>("{\"a\":1,\"b\":\"x\"}\n", "rec/1", Path::new("mem")).unwrap_err();
        assert!(e.to_string().contains("<missing>"));
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"x":1,"y":{"b":2,"a":[1,2]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"y":{"a":[1,2],"b":2},"x":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        let c: Value = serde_json::from_str(r#"{"x":2,"y":{"b":2,"a":[1,2]}}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
