use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{normalize_class_name, DatasetManifest, ImageSample, Split, APPLE_CLASSES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Require exactly the four apple classes.
    pub strict: bool,
    /// Fully decode every file and drop the ones that fail.
    pub check_decode: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            strict: true,
            check_decode: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanWarning {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    pub warnings: Vec<ScanWarning>,
}

fn is_hidden(name: &str) -> bool {
    name.starts_with('.')
}

fn check_image(path: &Path) -> std::result::Result<(), String> {
    let img = image::ImageReader::open(path)
        .map_err(|e| e.to_string())?
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .decode()
        .map_err(|e| e.to_string())?;
    let color = img.color();
    if color.channel_count() != 3 || color.has_alpha() {
        log::warn!("{}: {color:?} image will be coerced to RGB", path.display());
    }
    Ok(())
}

/// Builds an unassigned manifest from `<root>/<class dir>/<image files>`.
pub fn scan_dataset(root: &Path, opts: ScanOptions) -> Result<ScanOutcome> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} does not exist or is not a directory",
            root.display()
        )));
    }
    let mut class_dirs: Vec<(String, String)> = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() && !is_hidden(&name) {
            class_dirs.push((name.clone(), normalize_class_name(&name)));
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "no class directories found under {}",
            root.display()
        )));
    }
    class_dirs.sort();
    let mut class_names: Vec<String> = class_dirs.iter().map(|(_, c)| c.clone()).collect();
    class_names.sort();
    if let Some(w) = class_names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Dataset(format!(
            "two directories normalise to the same class {:?}",
            w[0]
        )));
    }
    if opts.strict {
        if class_dirs.len() != APPLE_CLASSES.len() {
            return Err(Error::Dataset(format!(
                "expected {} class directories, found {}: {:?}",
                APPLE_CLASSES.len(),
                class_dirs.len(),
                class_dirs.iter().map(|(d, _)| d).collect::<Vec<_>>()
            )));
        }
        if let Some(unknown) = class_names.iter().find(|c| !APPLE_CLASSES.contains(&c.as_str())) {
            return Err(Error::Dataset(format!(
                "unknown class {unknown:?}; expected {APPLE_CLASSES:?}"
            )));
        }
    }

    let mut candidates: Vec<(PathBuf, String)> = Vec::new();
    for (dir, class) in &class_dirs {
        let dir_path = root.join(dir);
        for entry in fs::read_dir(&dir_path).map_err(|e| Error::io(&dir_path, e))? {
            let entry = entry.map_err(|e| Error::io(&dir_path, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.path().is_file() && !is_hidden(&name) {
                candidates.push((PathBuf::from(dir).join(&name), class.clone()));
            }
        }
    }
    candidates.sort();

    let checks: Vec<Option<String>> = if opts.check_decode {
        candidates
            .par_iter()
            .map(|(rel, _)| check_image(&root.join(rel)).err())
            .collect()
    } else {
        vec![None; candidates.len()]
    };

    let mut samples = Vec::with_capacity(candidates.len());
    let mut warnings = Vec::new();
    for ((rel, class), problem) in candidates.into_iter().zip(checks) {
        match problem {
            Some(message) => {
                log::warn!("skipping {}: {message}", rel.display());
                warnings.push(ScanWarning { path: rel, message });
            }
            None => samples.push(ImageSample {
                path: rel,
                class_label: class,
                split: Split::Unassigned,
            }),
        }
    }
    let manifest = DatasetManifest::new(Some(root.to_path_buf()), class_names, samples)?;
    Ok(ScanOutcome { manifest, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_png(path: &Path) {
        RgbImage::from_pixel(4, 4, Rgb([10, 20, 30])).save(path).unwrap();
    }

    #[test]
    fn missing_root_is_fatal() {
        let err = scan_dataset(Path::new("/definitely/not/here"), ScanOptions::default()).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn empty_root_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let err = scan_dataset(dir.path(), ScanOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no class directories found"));
    }

    #[test]
    fn strict_mode_wants_four_classes() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("Apple___healthy")).unwrap();
        write_png(&dir.path().join("Apple___healthy/a.png"));
        assert!(scan_dataset(dir.path(), ScanOptions::default()).is_err());
        let lax = ScanOptions {
            strict: false,
            check_decode: true,
        };
        let out = scan_dataset(dir.path(), lax).unwrap();
        assert_eq!(out.manifest.per_class_counts()["healthy"], 1);
    }

    #[test]
    fn undecodable_files_are_excluded_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        for c in ["Apple___Apple_scab", "Apple___Black_rot", "Apple___Cedar_apple_rust", "Apple___healthy"] {
            fs::create_dir(dir.path().join(c)).unwrap();
            write_png(&dir.path().join(c).join("ok.png"));
        }
        fs::write(dir.path().join("Apple___healthy/broken.jpg"), b"not an image").unwrap();
        fs::write(dir.path().join("Apple___healthy/.DS_Store"), b"junk").unwrap();
        let out = scan_dataset(dir.path(), ScanOptions::default()).unwrap();
        assert_eq!(out.manifest.samples.len(), 4);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].path.ends_with("broken.jpg"));
        assert_eq!(out.manifest.class_names, APPLE_CLASSES);
        assert!(out.manifest.samples.iter().all(|s| s.split == Split::Unassigned));
    }
}
