use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Stylized,
}

/// One line of the JSON-lines dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: PathBuf,
    pub label_path: PathBuf,
    pub origin: Origin,
}

/// Originals followed by their stylized versions; stylized sample `i` reuses
/// the label of original sample `i`.
pub fn build_mixed_dataset(
    originals: &[(PathBuf, PathBuf)],
    stylized_images: &[PathBuf],
) -> Result<Vec<ManifestRecord>> {
    if originals.len() != stylized_images.len() {
        return Err(Error::InvalidArgument(format!(
            "{} originals but {} stylized images",
            originals.len(),
            stylized_images.len()
        )));
    }
    let mut out: Vec<ManifestRecord> = originals
        .iter()
        .map(|(image, label)| ManifestRecord {
            image_path: image.clone(),
            label_path: label.clone(),
            origin: Origin::Original,
        })
        .collect();
    out.extend(
        originals
            .iter()
            .zip(stylized_images)
            .map(|((_, label), image)| ManifestRecord {
                image_path: image.clone(),
                label_path: label.clone(),
                origin: Origin::Stylized,
            }),
    );
    Ok(out)
}

/// Every stylized record must pair with a distinct original sharing its label.
pub fn validate_manifest(records: &[ManifestRecord]) -> Result<()> {
    let mut originals: HashMap<&Path, usize> = HashMap::new();
    for r in records.iter().filter(|r| r.origin == Origin::Original) {
        *originals.entry(&r.label_path).or_default() += 1;
    }
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.origin == Origin::Stylized) {
        match originals.get_mut(r.label_path.as_path()) {
            Some(n) if *n > 0 => *n -= 1,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "stylized record {i} ({}) has no original partner",
                    r.image_path.display()
                )))
            }
        }
    }
    Ok(())
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize) -> Vec<(PathBuf, PathBuf)> {
        (0..n)
            .map(|i| (format!("img{i}.mbt").into(), format!("lab{i}.mbt").into()))
            .collect()
    }

    #[test]
    fn doubles_the_sample_count() {
        let sty: Vec<PathBuf> = (0..1565).map(|i| format!("sty{i}.mbt").into()).collect();
        let m = build_mixed_dataset(&pairs(1565), &sty).unwrap();
        assert_eq!(m.len(), 3130);
        validate_manifest(&m).unwrap();
    }

    #[test]
    fn single_sample_shares_its_label() {
        let m = build_mixed_dataset(&pairs(1), &["s.mbt".into()]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].label_path, m[1].label_path);
        assert!(build_mixed_dataset(&pairs(2), &["s.mbt".into()]).is_err());
    }

    #[test]
    fn orphan_stylized_record_is_rejected() {
        let mut m = build_mixed_dataset(&pairs(2), &["a.mbt".into(), "b.mbt".into()]).unwrap();
        m.remove(0);
        assert!(validate_manifest(&m).is_err());
    }

    #[test]
    fn json_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = build_mixed_dataset(&pairs(3), &["a".into(), "b".into(), "c".into()]).unwrap();
        write_manifest(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().next().unwrap().contains("\"origin\":\"original\""));
        assert_eq!(read_manifest(&path).unwrap(), m);
    }
}
