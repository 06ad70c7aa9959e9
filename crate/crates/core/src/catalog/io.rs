//! Catalog files.
//!
//! A catalog directory holds `manifest.json` (a JSON array of image records
//! without features) and one feature matrix, either `features.bin` or
//! `features.txt`, whose rows follow manifest order.
//!
//! Text matrix: first line `<rows> <dim>`, then one whitespace-separated row
//! per image. Binary matrix: the 8-byte magic `EXAGFC7\0`, `rows: u32 LE`,
//! `dim: u32 LE`, then `rows * dim` little-endian `f32` values, row-major.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Catalog, CatalogError, ImageRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BINARY_FEATURES_FILE: &str = "features.bin";
pub const TEXT_FEATURES_FILE: &str = "features.txt";
const MAGIC: &[u8; 8] = b"EXAGFC7\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureFormat {
    Text,
    Binary,
}

/// Load a catalog from a directory, or from a manifest path whose sibling
/// holds the feature file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let (dir, manifest) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };

    let text = read_to_string(&manifest)?;
    let mut records: Vec<ImageRecord> =
        serde_json::from_str(&text).map_err(|e| CatalogError::Parse {
            path: manifest.clone(),
            what: "manifest",
            message: e.to_string(),
        })?;

    let bin = dir.join(BINARY_FEATURES_FILE);
    let txt = dir.join(TEXT_FEATURES_FILE);
    let rows = if bin.exists() {
        read_binary_features(&bin)?
    } else if txt.exists() {
        read_text_features(&txt)?
    } else {
        return Err(CatalogError::Io {
            path: bin,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no feature file"),
        });
    };

    if rows.len() != records.len() {
        return Err(CatalogError::RowCountMismatch {
            features: rows.len(),
            records: records.len(),
        });
    }
    for (rec, row) in records.iter_mut().zip(rows) {
        rec.fc7 = row;
    }
    Catalog::from_records(records)
}

/// Write `manifest.json` plus a feature file into `dir`.
pub fn write_catalog(
    catalog: &Catalog,
    dir: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<(), CatalogError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(catalog.records()).expect("records serialize");
    fs::write(&manifest, json).map_err(|e| io_err(&manifest, e))?;

    match format {
        FeatureFormat::Binary => {
            let path = dir.join(BINARY_FEATURES_FILE);
            let mut buf = Vec::with_capacity(16 + catalog.len() * catalog.dim() * 4);
            buf.extend_from_slice(MAGIC);
            buf.extend_from_slice(&(catalog.len() as u32).to_le_bytes());
            buf.extend_from_slice(&(catalog.dim() as u32).to_le_bytes());
            for rec in catalog.records() {
                for v in &rec.fc7 {
                    buf.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
            fs::write(&path, buf).map_err(|e| io_err(&path, e))
        }
        FeatureFormat::Text => {
            let path = dir.join(TEXT_FEATURES_FILE);
            let mut out = Vec::new();
            writeln!(out, "{} {}", catalog.len(), catalog.dim()).unwrap();
            for rec in catalog.records() {
                let row: Vec<String> = rec.fc7.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
            fs::write(&path, out).map_err(|e| io_err(&path, e))
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CatalogError {
    CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_to_string(path: &Path) -> Result<String, CatalogError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_err(path: &Path, message: impl Into<String>) -> CatalogError {
    CatalogError::Parse {
        path: PathBuf::from(path),
        what: "feature file",
        message: message.into(),
    }
}

fn read_text_features(path: &Path) -> Result<Vec<Vec<f64>>, CatalogError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err(path, "missing header"))?;
    let mut parts = header.split_whitespace().map(str::parse::<usize>);
    let (rows, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(Ok(r)), Some(Ok(d)), None) => (r, d),
        _ => return Err(parse_err(path, format!("bad header {header:?}"))),
    };
    let mut out = Vec::with_capacity(rows);
    for (lineno, line) in lines.enumerate() {
        let row = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, format!("row {}: {e}", lineno + 1)))?;
        if row.len() != dim {
            return Err(CatalogError::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        out.push(row);
    }
    if out.len() != rows {
        return Err(parse_err(
            path,
            format!("header declares {rows} rows, found {}", out.len()),
        ));
    }
    Ok(out)
}

fn read_binary_features(path: &Path) -> Result<Vec<Vec<f64>>, CatalogError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    if data.len() < 16 || &data[..8] != MAGIC {
        return Err(parse_err(path, "bad magic"));
    }
    let rows = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(data[12..16].try_into().unwrap()) as usize;
    let body = &data[16..];
    if body.len() != rows * dim * 4 {
        return Err(parse_err(
            path,
            format!("expected {} payload bytes, found {}", rows * dim * 4, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(4 * dim.max(1))
        .take(rows)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"[
        {"image_id": "img_1", "uri": "a.jpg", "objects": [{"label": "clock", "confidence": 0.9}]},
        {"image_id": "img_2", "uri": "b.jpg", "scenes": [{"label": "kitchen", "confidence": 0.4}]},
        {"image_id": "img_3", "uri": "c.jpg", "qa_pairs": [{"question": "is there a clock?", "answer": "no"}]}
    ]"#;

    #[test]
    fn loads_three_image_text_catalog() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        fs::write(
            dir.path().join(TEXT_FEATURES_FILE),
            "3 4\n1 0 0 0\n0 1 0 0\n0.5 0.5 0 1\n",
        )
        .unwrap();
        let cat = load_catalog(dir.path()).unwrap();
        assert_eq!(cat.len(), 3);
        assert_eq!(cat.dim(), 4);
        assert_eq!(cat.get("img_3").unwrap().qa_pairs[0].answer, "no");
    }

    #[test]
    fn duplicate_id_in_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = r#"[{"image_id": "img_7", "uri": "a"}, {"image_id": "img_7", "uri": "b"}]"#;
        fs::write(dir.path().join(MANIFEST_FILE), manifest).unwrap();
        fs::write(dir.path().join(TEXT_FEATURES_FILE), "2 2\n1 0\n0 1\n").unwrap();
        assert!(matches!(
            load_catalog(dir.path()),
            Err(CatalogError::DuplicateId(id)) if id == "img_7"
        ));
    }

    #[test]
    fn ragged_text_row_is_a_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        fs::write(dir.path().join(TEXT_FEATURES_FILE), "3 4\n1 0 0 0\n0 1 0\n0 0 0 1\n").unwrap();
        assert!(matches!(
            load_catalog(dir.path()),
            Err(CatalogError::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn row_count_must_match_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        fs::write(dir.path().join(TEXT_FEATURES_FILE), "2 1\n1\n2\n").unwrap();
        assert!(matches!(
            load_catalog(dir.path()),
            Err(CatalogError::RowCountMismatch { features: 2, records: 3 })
        ));
    }

    #[test]
    fn missing_feature_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        assert!(matches!(load_catalog(dir.path()), Err(CatalogError::Io { .. })));
    }

    #[test]
    fn corrupt_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        fs::write(dir.path().join(BINARY_FEATURES_FILE), b"NOTMAGIC12345678").unwrap();
        assert!(matches!(load_catalog(dir.path()), Err(CatalogError::Parse { .. })));
    }

    #[test]
    fn binary_round_trip_keeps_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        fs::write(dir.path().join(TEXT_FEATURES_FILE), "3 2\n0.25 1\n-2 0.5\n3 4\n").unwrap();
        let cat = load_catalog(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_catalog(&cat, out.path(), FeatureFormat::Binary).unwrap();
        let back = load_catalog(out.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back.records(), cat.records());
        assert_eq!(back.get("img_2").unwrap().fc7, vec![-2.0, 0.5]);
    }
}
