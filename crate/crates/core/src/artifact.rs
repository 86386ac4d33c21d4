//! Versioned JSON envelopes for datasets, models and prediction tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub format_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
}

pub fn save<T: Serialize>(
    path: &Path,
    kind: &str,
    config_hash: &str,
    seed: u64,
    payload: &T,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let doc = Artifact {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        payload,
    };
    serde_json::to_writer(&mut w, &doc)
        .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads an artifact of `kind`; a missing file is [`Error::MissingArtifact`].
pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Artifact<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Artifact(format!("{}: {m}", path.display()));
    let header: Header = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    if header.kind != kind {
        return Err(bad(format!(
            "holds a `{}`, expected a `{kind}`",
            header.kind
        )));
    }
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Payload {
        values: Vec<f64>,
        name: String,
    }

    fn payload() -> Payload {
        Payload {
            values: vec![0.1, -2.5, 1e-300],
            name: "x".into(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.json");
        save(&path, "thing", "abc", 7, &payload()).unwrap();
        let a: Artifact<Payload> = load(&path, "thing").unwrap();
        assert_eq!(a.payload, payload());
        assert_eq!(
            (a.seed, a.config_hash.as_str(), a.format_version),
            (7, "abc", FORMAT_VERSION)
        );
    }

    proptest::proptest! {
        #[test]
        fn floats_survive_bit_exact(bits in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..50)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.json");
            let p = Payload { values: bits, name: String::new() };
            save(&path, "f", "", 0, &p).unwrap();
            let back: Artifact<Payload> = load(&path, "f").unwrap();
            for (a, b) in back.payload.values.iter().zip(&p.values) {
                proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn missing_file_is_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        let err = load::<Payload>(&dir.path().join("none.json"), "thing").unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }

    #[test]
    fn wrong_kind_or_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save(&path, "thing", "h", 0, &payload()).unwrap();
        assert!(matches!(
            load::<Payload>(&path, "other"),
            Err(Error::Artifact(_))
        ));
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":99");
        std::fs::write(&path, text).unwrap();
        let err = load::<Payload>(&path, "thing").unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }
}
