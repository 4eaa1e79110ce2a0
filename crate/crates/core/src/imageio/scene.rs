use std::path::{Path, PathBuf};

use super::{read_hdr_rgbe, read_ldr, ExposureStack, ImageError};

const LDR_EXTENSIONS: [&str; 4] = ["tif", "tiff", "ppm", "png"];

/// File naming inside a scene directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneLayout {
    /// Explicit short/medium/long file names. When absent, the three LDR
    /// files are taken in lexicographic order.
    pub ldr_order: Option<[String; 3]>,
    pub exposures: String,
    pub gt: String,
}

impl Default for SceneLayout {
    fn default() -> Self {
        Self {
            ldr_order: None,
            exposures: "exposures.txt".into(),
            gt: "gt.hdr".into(),
        }
    }
}

/// Parses three whitespace-separated exposure values in stops.
///
/// ```
/// # let dir = tempfile::tempdir().unwrap();
/// # let path = dir.path().join("exposures.txt");
/// std::fs::write(&path, "-3\n0\n3\n").unwrap();
/// let ev = hdrfeat::imageio::read_exposures(&path).unwrap();
/// assert_eq!(ev.map(f64::exp2), [0.125, 1.0, 8.0]);
/// ```
pub fn read_exposures(path: impl AsRef<Path>) -> Result<[f64; 3], ImageError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ImageError::io(path, e))?;
    let values = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ImageError::invalid(path, format!("non-numeric exposure value {tok:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    <[f64; 3]>::try_from(values.as_slice())
        .map_err(|_| ImageError::invalid(path, format!("expected 3 exposure values, found {}", values.len())))
}

pub fn load_sample(dir: impl AsRef<Path>) -> Result<ExposureStack, ImageError> {
    load_sample_with(dir, &SceneLayout::default())
}

pub fn load_sample_with(dir: impl AsRef<Path>, layout: &SceneLayout) -> Result<ExposureStack, ImageError> {
    let dir = dir.as_ref();
    let ldr_paths = ldr_paths(dir, layout)?;
    let ev_path = dir.join(&layout.exposures);
    let ev = read_exposures(&ev_path)?;
    if !(ev[0] < ev[1] && ev[1] < ev[2]) {
        return Err(ImageError::invalid(
            &ev_path,
            format!("exposure values {ev:?} must be strictly increasing"),
        ));
    }

    let first = read_ldr(&ldr_paths[0])?;
    let (w, h) = (first.width(), first.height());
    let check = |path: &Path, found_w: usize, found_h: usize| {
        if (found_w, found_h) == (w, h) {
            Ok(())
        } else {
            Err(ImageError::DimensionMismatch {
                path: path.to_owned(),
                expected_w: w,
                expected_h: h,
                found_w,
                found_h,
            })
        }
    };
    let second = read_ldr(&ldr_paths[1])?;
    check(&ldr_paths[1], second.width(), second.height())?;
    let third = read_ldr(&ldr_paths[2])?;
    check(&ldr_paths[2], third.width(), third.height())?;

    let gt_path = dir.join(&layout.gt);
    let gt = if gt_path.is_file() {
        let gt = read_hdr_rgbe(&gt_path)?;
        check(&gt_path, gt.width(), gt.height())?;
        Some(gt)
    } else {
        None
    };
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    ExposureStack::new([first, second, third], ev, gt, id).map_err(|detail| ImageError::invalid(dir, detail))
}

fn ldr_paths(dir: &Path, layout: &SceneLayout) -> Result<[PathBuf; 3], ImageError> {
    if let Some(names) = &layout.ldr_order {
        return Ok(names.clone().map(|n| dir.join(n)));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| ImageError::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| ImageError::io(dir, e))?.path();
        let is_ldr = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| LDR_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_ldr && path.is_file() {
            found.push(path);
        }
    }
    found.sort();
    <[PathBuf; 3]>::try_from(found).map_err(|found| {
        ImageError::invalid(
            dir,
            format!("expected 3 LDR exposures (tif, ppm or png), found {}", found.len()),
        )
    })
}

/// Loads every scene subdirectory of `root` in lexicographic order.
pub fn load_dataset(root: impl AsRef<Path>, layout: &SceneLayout) -> Result<Vec<ExposureStack>, ImageError> {
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| ImageError::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| ImageError::io(root, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(ImageError::invalid(root, "no scene directories"));
    }
    dirs.sort();
    dirs.iter().map(|d| load_sample_with(d, layout)).collect()
}
