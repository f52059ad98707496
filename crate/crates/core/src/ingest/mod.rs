//! Frame sequences on disk: loading, grayscale conversion, area-average
//! downscaling and mask output.

mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::MaskSequence;
use crate::tensor::Tensor3;

pub use synth::{synth, Background, ObjectSpec, Shape, SynthOutput, SynthSpec};

const IMAGE_EXTENSIONS: [&str; 7] = ["png", "pgm", "ppm", "pnm", "bmp", "jpg", "jpeg"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub frames_dir: PathBuf,
    pub gt_dir: Option<PathBuf>,
    pub roi_path: Option<PathBuf>,
    /// Target `(w, h)`; frames are area-averaged down (or up) to it.
    pub resize: Option<(usize, usize)>,
    /// Filename pattern for frames; `*` matches any run of characters.
    pub frame_glob: Option<String>,
}

impl SequenceSpec {
    /// Resolves a directory to a spec. A directory holding `input/` is read
    /// with the CDnet layout (`input/`, `groundtruth/`, `ROI.bmp`).
    pub fn detect(dir: &Path) -> SequenceSpec {
        let input = dir.join("input");
        if input.is_dir() {
            let gt = dir.join("groundtruth");
            let roi = dir.join("ROI.bmp");
            SequenceSpec {
                frames_dir: input,
                gt_dir: gt.is_dir().then_some(gt),
                roi_path: roi.is_file().then_some(roi),
                ..Default::default()
            }
        } else {
            SequenceSpec {
                frames_dir: dir.to_path_buf(),
                ..Default::default()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sequence {
    pub tensor: Tensor3,
    /// File stems of the frames, in order.
    pub names: Vec<String>,
    pub gt: Option<MaskSequence>,
    /// Column-major `w × h`, `true` where pixels are scored.
    pub roi: Option<Vec<bool>>,
}

fn wildcard_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let s: Vec<char> = name.chars().collect();
    // dp[j]: pattern prefix matches name prefix of length j
    let mut dp = vec![false; s.len() + 1];
    dp[0] = true;
    for &pc in &p {
        let mut next = vec![false; s.len() + 1];
        if pc == '*' {
            let mut any = false;
            for j in 0..=s.len() {
                any |= dp[j];
                next[j] = any;
            }
        } else {
            for j in 1..=s.len() {
                next[j] = dp[j - 1] && (pc == '?' || pc == s[j - 1]);
            }
        }
        dp = next;
    }
    dp[s.len()]
}

/// Image files of `dir` in lexicographic filename order.
pub fn list_images(dir: &Path, pattern: Option<&str>) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let ok = match pattern {
            Some(p) => wildcard_match(p, name),
            None => path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str())),
        };
        if ok {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Reads an image as luminance in `[0, 1]`, as a `w × h` matrix indexed
/// `(x, y)`.
pub fn read_gray(path: &Path) -> Result<DMatrix<f64>> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    Ok(DMatrix::from_fn(w as usize, h as usize, |x, y| {
        let p = rgb.get_pixel(x as u32, y as u32).0;
        (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).clamp(0.0, 1.0)
    }))
}

/// Overlap weights mapping `src` samples onto `dst` equal-width bins.
fn area_weights(src: usize, dst: usize) -> DMatrix<f64> {
    let scale = src as f64 / dst as f64;
    DMatrix::from_fn(dst, src, |d, s| {
        let lo = (d as f64 * scale).max(s as f64);
        let hi = ((d + 1) as f64 * scale).min((s + 1) as f64);
        (hi - lo).max(0.0) / scale
    })
}

/// Area-average resampling of a `w × h` image to `new_w × new_h`.
pub fn area_resize(img: &DMatrix<f64>, new_w: usize, new_h: usize) -> DMatrix<f64> {
    let (w, h) = img.shape();
    if (w, h) == (new_w, new_h) {
        return img.clone();
    }
    area_weights(w, new_w) * img * area_weights(h, new_h).transpose()
}

fn to_mask(img: &DMatrix<f64>) -> Vec<bool> {
    // column-major (x fastest) matches the frame vectorization
    img.iter().map(|&v| v >= 128.0 / 255.0).collect()
}

fn trailing_number(stem: &str) -> Option<u64> {
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        None
    } else {
        digits.chars().rev().collect::<String>().parse().ok()
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn load_frames(paths: &[PathBuf], resize: Option<(usize, usize)>) -> Result<Vec<DMatrix<f64>>> {
    paths
        .par_iter()
        .map(|p| {
            let img = read_gray(p)?;
            Ok(match resize {
                Some((w, h)) => area_resize(&img, w, h),
                None => img,
            })
        })
        .collect()
}

fn check_same_dims(frames: &[DMatrix<f64>], paths: &[PathBuf]) -> Result<()> {
    let first = frames[0].shape();
    for (f, p) in frames.iter().zip(paths) {
        if f.shape() != first {
            return Err(Error::arg(format!(
                "{} is {}x{}, expected {}x{}",
                p.display(),
                f.nrows(),
                f.ncols(),
                first.0,
                first.1
            )));
        }
    }
    Ok(())
}

/// Loads frames (and ground truth and ROI when given).
pub fn load_sequence(spec: &SequenceSpec) -> Result<Sequence> {
    if let Some((w, h)) = spec.resize {
        if w == 0 || h == 0 {
            return Err(Error::arg("resize dimensions must be >= 1"));
        }
    }
    let paths = list_images(&spec.frames_dir, spec.frame_glob.as_deref())?;
    if paths.len() < 2 {
        return Err(Error::arg(format!(
            "{} holds {} readable frames, need at least 2",
            spec.frames_dir.display(),
            paths.len()
        )));
    }
    let frames = load_frames(&paths, spec.resize)?;
    check_same_dims(&frames, &paths)?;
    let tensor = Tensor3::from_frames(&frames)?;
    let (w, h, n) = tensor.dims();
    info!("loaded {n} frames of {w}x{h} from {}", spec.frames_dir.display());
    let names: Vec<String> = paths.iter().map(|p| stem(p)).collect();

    let gt = match &spec.gt_dir {
        Some(dir) => Some(load_gt(dir, &names, (w, h), spec.resize)?),
        None => None,
    };
    let roi = match &spec.roi_path {
        Some(p) => {
            let img = read_gray(p)?;
            let img = if img.shape() != (w, h) { area_resize(&img, w, h) } else { img };
            Some(to_mask(&img))
        }
        None => None,
    };
    Ok(Sequence { tensor, names, gt, roi })
}

/// Ground-truth frames are matched to input frames by position when the
/// counts agree, otherwise by the number at the end of the filename.
fn load_gt(dir: &Path, names: &[String], (w, h): (usize, usize), resize: Option<(usize, usize)>) -> Result<MaskSequence> {
    let paths = list_images(dir, None)?;
    if paths.is_empty() {
        return Err(Error::arg(format!("{} holds no ground-truth images", dir.display())));
    }
    let indices: Vec<Option<usize>> = if paths.len() == names.len() {
        (0..names.len()).map(Some).collect()
    } else {
        let frame_numbers: Vec<Option<u64>> = names.iter().map(|n| trailing_number(n)).collect();
        paths
            .iter()
            .map(|p| {
                let num = trailing_number(&stem(p));
                num.and_then(|g| frame_numbers.iter().position(|f| *f == Some(g)))
            })
            .collect()
    };
    let frames = load_frames(&paths, resize)?;
    let mut gt = MaskSequence::new(w, h);
    for ((img, idx), p) in frames.iter().zip(indices).zip(&paths) {
        let Some(k) = idx else {
            warn!("no input frame matches ground truth {}, skipped", p.display());
            continue;
        };
        if img.shape() != (w, h) {
            return Err(Error::arg(format!(
                "ground truth {} is {}x{}, frames are {w}x{h}",
                p.display(),
                img.nrows(),
                img.ncols()
            )));
        }
        gt.push(k, to_mask(img))?;
    }
    Ok(gt)
}

/// Saves a `w × h` column-major frame with values in `[0, 1]` as 8-bit PNG.
pub fn write_gray_png(path: &Path, w: usize, h: usize, values: &[f64]) -> Result<()> {
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = values[y as usize * w + x as usize];
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes every frame of `masks` as a 0/255 PNG named `<name>.png`.
pub fn write_masks(dir: &Path, masks: &MaskSequence, names: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = masks.frame_dims();
    for (k, frame) in masks.frames() {
        let name = names
            .get(k)
            .ok_or_else(|| Error::arg(format!("no name for mask frame {k}")))?;
        let vals: Vec<f64> = frame.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        write_gray_png(&dir.join(format!("{name}.png")), w, h, &vals)?;
    }
    Ok(())
}

/// Loads a directory of masks written by [`write_masks`], in filename order.
pub fn read_masks(dir: &Path) -> Result<MaskSequence> {
    let paths = list_images(dir, None)?;
    if paths.is_empty() {
        return Err(Error::arg(format!("{} holds no mask images", dir.display())));
    }
    let frames = load_frames(&paths, None)?;
    check_same_dims(&frames, &paths)?;
    let (w, h) = frames[0].shape();
    let mut m = MaskSequence::new(w, h);
    for (k, f) in frames.iter().enumerate() {
        m.push(k, to_mask(f))?;
    }
    Ok(m)
}

/// Writes every frame of `x` as PNG, named by zero-padded index.
pub fn write_frames(dir: &Path, x: &Tensor3, prefix: &str) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h, n) = x.dims();
    let width = n.to_string().len().max(4);
    let mut names = Vec::with_capacity(n);
    for k in 0..n {
        let name = format!("{prefix}{k:0width$}");
        write_gray_png(&dir.join(format!("{name}.png")), w, h, &x.frame_vector(k))?;
        names.push(name);
    }
    Ok(names)
}
