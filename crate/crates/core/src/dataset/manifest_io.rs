//! Manifest text format.
//!
//! ```text
//! # leafnet-manifest v1
//! # root: /data/plantvillage/apple
//! # class_names: apple_scab,black_rot,cedar_apple_rust,healthy
//! # seed: 42
//! # fractions: 0.6,0.2,0.2
//! relative_path	class_label	split
//! Apple___Apple_scab/0a1b.JPG	apple_scab	train
//! ```
//!
//! Header lines are `# key: value`; records are tab-separated. `root`, `seed`
//! and `fractions` are optional (an unsplit manifest has no seed).

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{DatasetManifest, ImageSample, Split, SplitSpec};
use crate::{Error, Result};

const MAGIC: &str = "# leafnet-manifest v1";
const COLUMNS: &str = "relative_path\tclass_label\tsplit";

fn path_str(path: &Path) -> Result<String> {
    let s = path
        .to_str()
        .ok_or_else(|| Error::Dataset(format!("{} is not valid UTF-8", path.display())))?
        .replace('\\', "/");
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::Dataset(format!("path {s:?} contains a tab or newline")));
    }
    Ok(s)
}

pub fn render_manifest(manifest: &DatasetManifest) -> Result<String> {
    let mut out = String::with_capacity(64 * (manifest.samples.len() + 8));
    out.push_str(MAGIC);
    out.push('\n');
    if let Some(root) = &manifest.root {
        out.push_str(&format!("# root: {}\n", path_str(root)?));
    }
    out.push_str(&format!("# class_names: {}\n", manifest.class_names.join(",")));
    if let Some(spec) = &manifest.split_spec {
        out.push_str(&format!("# seed: {}\n", spec.seed));
        out.push_str(&format!(
            "# fractions: {},{},{}\n",
            spec.train_frac, spec.val_frac, spec.test_frac
        ));
    }
    out.push_str(COLUMNS);
    out.push('\n');
    for s in &manifest.samples {
        out.push_str(&format!("{}\t{}\t{}\n", path_str(&s.path)?, s.class_label, s.split));
    }
    Ok(out)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    let text = render_manifest(manifest)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// SHA-256 of the rendered manifest, hex encoded.
pub fn manifest_hash(manifest: &DatasetManifest) -> Result<String> {
    Ok(hex::encode(Sha256::digest(render_manifest(manifest)?.as_bytes())))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let fail = |line: usize, message: String| Error::ManifestParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        _ => return Err(fail(1, format!("expected header {MAGIC:?}"))),
    }

    let mut root = None;
    let mut class_names: Option<Vec<String>> = None;
    let mut seed: Option<u64> = None;
    let mut fractions: Option<[f64; 3]> = None;
    let mut samples = Vec::new();
    let mut seen: HashSet<PathBuf> = HashSet::new();
    let mut in_records = false;

    for (no, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if !in_records {
            if let Some(header) = line.strip_prefix("# ") {
                let (key, value) = header
                    .split_once(':')
                    .ok_or_else(|| fail(no, format!("malformed header line {line:?}")))?;
                let value = value.trim();
                match key.trim() {
                    "root" => root = Some(PathBuf::from(value)),
                    "class_names" => {
                        class_names = Some(value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                    }
                    "seed" => {
                        seed = Some(value.parse().map_err(|_| fail(no, format!("bad seed {value:?}")))?)
                    }
                    "fractions" => {
                        let parts: Vec<f64> = value
                            .split(',')
                            .map(|p| p.trim().parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| fail(no, format!("bad fractions {value:?}")))?;
                        let arr: [f64; 3] = parts
                            .try_into()
                            .map_err(|_| fail(no, "fractions need three values".into()))?;
                        fractions = Some(arr);
                    }
                    other => return Err(fail(no, format!("unknown header key {other:?}"))),
                }
                continue;
            }
            if line == COLUMNS {
                in_records = true;
                continue;
            }
            return Err(fail(no, format!("expected a header line or {COLUMNS:?}")));
        }
        if line.is_empty() {
            continue;
        }
        let classes = class_names
            .as_ref()
            .ok_or_else(|| fail(no, "records before class_names header".into()))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(fail(no, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let rel = PathBuf::from(fields[0]);
        if fields[0].is_empty() {
            return Err(fail(no, "empty path".into()));
        }
        if !classes.iter().any(|c| c == fields[1]) {
            return Err(fail(no, format!("unknown class {:?}; known classes {classes:?}", fields[1])));
        }
        let split = Split::parse(fields[2]).ok_or_else(|| fail(no, format!("unknown split {:?}", fields[2])))?;
        if !seen.insert(rel.clone()) {
            return Err(fail(no, format!("duplicate path {:?}", fields[0])));
        }
        samples.push(ImageSample {
            path: rel,
            class_label: fields[1].to_string(),
            split,
        });
    }
    if !in_records {
        return Err(fail(text.lines().count(), format!("missing column line {COLUMNS:?}")));
    }
    let class_names = class_names.ok_or_else(|| fail(1, "missing class_names header".into()))?;
    let mut sorted = class_names.clone();
    sorted.sort();
    sorted.dedup();
    if sorted != class_names {
        return Err(fail(1, format!("class_names must be sorted and unique: {class_names:?}")));
    }
    let split_spec = match (seed, fractions) {
        (Some(seed), Some([a, b, c])) => Some(SplitSpec::new(a, b, c, seed)?),
        (None, None) => None,
        _ => return Err(fail(1, "seed and fractions must appear together".into())),
    };
    let manifest = DatasetManifest {
        root,
        class_names,
        samples,
        split_spec,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::stratified_split;

    fn sample_manifest() -> DatasetManifest {
        let samples = (0..12)
            .map(|i| ImageSample {
                path: format!("Apple___{}/img_{i}.JPG", if i % 2 == 0 { "healthy" } else { "Black_rot" }).into(),
                class_label: if i % 2 == 0 { "healthy" } else { "black_rot" }.into(),
                split: Split::Unassigned,
            })
            .collect();
        DatasetManifest::new(Some("/data/apple".into()), vec!["healthy".into(), "black_rot".into()], samples).unwrap()
    }

    #[test]
    fn round_trip_split_and_unsplit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let m = sample_manifest();
        save_manifest(&m, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);

        let s = stratified_split(&m, &SplitSpec::with_seed(5)).unwrap();
        save_manifest(&s, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), s);
    }

    #[test]
    fn unknown_class_is_fatal() {
        let text = format!("{MAGIC}\n# class_names: healthy\n{COLUMNS}\na.jpg\tblack_rot\ttrain\n");
        let err = parse_manifest(&text, Path::new("m.tsv")).unwrap_err();
        assert!(matches!(err, Error::ManifestParse { line: 4, .. }), "{err}");
    }

    #[test]
    fn duplicate_path_is_fatal() {
        let text = format!("{MAGIC}\n# class_names: healthy\n{COLUMNS}\na.jpg\thealthy\ttrain\na.jpg\thealthy\ttest\n");
        let err = parse_manifest(&text, Path::new("m.tsv")).unwrap_err();
        assert!(matches!(err, Error::ManifestParse { line: 5, .. }), "{err}");
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let text = format!("{MAGIC}\n# class_names: healthy\n{COLUMNS}\na.jpg\thealthy\n");
        let err = parse_manifest(&text, Path::new("m.tsv")).unwrap_err();
        assert!(err.to_string().starts_with("m.tsv:4:"), "{err}");

        let err = parse_manifest("not a manifest\n", Path::new("m.tsv")).unwrap_err();
        assert!(err.to_string().starts_with("m.tsv:1:"), "{err}");

        let text = format!("{MAGIC}\n# class_names: healthy\n{COLUMNS}\na.jpg\thealthy\tholdout\n");
        assert!(parse_manifest(&text, Path::new("m.tsv")).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let m = sample_manifest();
        assert_eq!(manifest_hash(&m).unwrap(), manifest_hash(&m.clone()).unwrap());
        let s = stratified_split(&m, &SplitSpec::with_seed(1)).unwrap();
        assert_ne!(manifest_hash(&m).unwrap(), manifest_hash(&s).unwrap());
    }
}
