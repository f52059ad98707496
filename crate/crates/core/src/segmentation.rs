//! Foreground masks from the sparse component and their scoring against
//! ground truth.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Binary frames of a `w × h` sequence. Each frame is stored column-major
/// (pixel `(i, j)` at `j * w + i`) and tagged with its frame index, so a
/// ground-truth sequence may cover only some frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSequence {
    w: usize,
    h: usize,
    frames: Vec<(usize, Vec<bool>)>,
}

impl MaskSequence {
    pub fn new(w: usize, h: usize) -> Self {
        MaskSequence { w, h, frames: Vec::new() }
    }

    /// `n` all-background frames indexed `0..n`.
    pub fn zeros(w: usize, h: usize, n: usize) -> Self {
        MaskSequence {
            w,
            h,
            frames: (0..n).map(|k| (k, vec![false; w * h])).collect(),
        }
    }

    pub fn push(&mut self, index: usize, frame: Vec<bool>) -> Result<()> {
        if frame.len() != self.w * self.h {
            return Err(Error::arg(format!(
                "mask frame has {} pixels, expected {}x{}",
                frame.len(),
                self.w,
                self.h
            )));
        }
        if self.frames.iter().any(|(k, _)| *k == index) {
            return Err(Error::arg(format!("duplicate mask frame {index}")));
        }
        self.frames.push((index, frame));
        Ok(())
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        (self.w, self.h)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = (usize, &[bool])> {
        self.frames.iter().map(|(k, f)| (*k, f.as_slice()))
    }

    pub fn frame(&self, index: usize) -> Option<&[bool]> {
        self.frames.iter().find(|(k, _)| *k == index).map(|(_, f)| f.as_slice())
    }

    pub fn get(&self, i: usize, j: usize, index: usize) -> Option<bool> {
        self.frame(index).map(|f| f[j * self.w + i])
    }

    pub fn count_ones(&self) -> usize {
        self.frames.iter().map(|(_, f)| f.iter().filter(|&&b| b).count()).sum()
    }

    /// Pixel-wise union with another sequence over the same frames.
    pub fn union(&self, other: &MaskSequence) -> Result<MaskSequence> {
        if self.frame_dims() != other.frame_dims() {
            return Err(Error::arg("mask frame sizes differ"));
        }
        let mut out = MaskSequence::new(self.w, self.h);
        for (k, a) in self.frames() {
            let b = other
                .frame(k)
                .ok_or_else(|| Error::arg(format!("frame {k} missing from second mask sequence")))?;
            out.push(k, a.iter().zip(b).map(|(x, y)| *x || *y).collect())?;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarize {
    /// Otsu threshold on the histogram of `|F|` (256 bins).
    Otsu,
    /// Threshold at `θ · max|F|`.
    Fixed(f64),
}

const OTSU_BINS: usize = 256;

/// Otsu threshold of nonnegative `values` using a 256-bin histogram over
/// `[0, max]`. Returns the upper edge of the last bin of the lower class;
/// values strictly above it are foreground. All-zero input yields `0`.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return 0.0;
    }
    let width = max / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for &v in values {
        let b = ((v / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let centers: Vec<f64> = (0..OTSU_BINS).map(|b| (b as f64 + 0.5) * width).collect();
    let sum_all: f64 = hist.iter().zip(&centers).map(|(&c, &m)| c as f64 * m).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, None);
    for b in 0..OTSU_BINS - 1 {
        w0 += hist[b] as f64;
        sum0 += hist[b] as f64 * centers[b];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best.0 {
            best = (between, Some(b));
        }
    }
    match best.1 {
        Some(b) => (b + 1) as f64 * width,
        // a single occupied bin: everything nonzero is foreground
        None => 0.0,
    }
}

/// Binarizes `|F|` frame by frame with a threshold shared by the sequence.
pub fn binarize(f: &Tensor3, method: Binarize) -> Result<MaskSequence> {
    if !f.is_finite() {
        return Err(Error::arg("foreground tensor contains non-finite values"));
    }
    let mags: Vec<f64> = f.as_slice().iter().map(|v| v.abs()).collect();
    let threshold = match method {
        Binarize::Otsu => otsu_threshold(&mags),
        Binarize::Fixed(theta) => {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(Error::arg(format!("fixed threshold must be >= 0, got {theta}")));
            }
            theta * f.max_abs()
        }
    };
    let (w, h, n) = f.dims();
    let mut out = MaskSequence::new(w, h);
    for k in 0..n {
        out.push(k, f.frame_vector(k).iter().map(|v| v.abs() > threshold).collect())?;
    }
    Ok(out)
}

/// Binarizes one column-major frame with its own Otsu threshold.
pub fn binarize_frame_otsu(frame: &[f64]) -> Vec<bool> {
    let mags: Vec<f64> = frame.iter().map(|v| v.abs()).collect();
    let t = otsu_threshold(&mags);
    mags.iter().map(|&v| v > t).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    /// Precision, recall and F-measure. When no pixel is positive in either
    /// mask all three are 1.
    pub fn prf(&self) -> (f64, f64, f64) {
        if self.tp + self.fp + self.fn_ == 0 {
            return (1.0, 1.0, 1.0);
        }
        let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let p = ratio(self.tp, self.fp);
        let r = ratio(self.tp, self.fn_);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Counts summed over all scored frames.
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_measure: f64,
    pub frames: Vec<FrameScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,tp,fp,fn,precision,recall,f_measure")?;
        for s in &self.frames {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.frame, s.counts.tp, s.counts.fp, s.counts.fn_, s.precision, s.recall, s.f_measure
            )?;
        }
        writeln!(
            out,
            "all,{},{},{},{},{},{}",
            self.counts.tp, self.counts.fp, self.counts.fn_, self.precision, self.recall, self.f_measure
        )
    }
}

/// Scores `pred` against every frame present in `gt`. Pixels outside `roi`
/// (column-major `w × h`) are ignored.
pub fn score(pred: &MaskSequence, gt: &MaskSequence, roi: Option<&[bool]>) -> Result<EvalReport> {
    if pred.frame_dims() != gt.frame_dims() {
        return Err(Error::arg(format!(
            "prediction frames are {:?}, ground truth frames are {:?}",
            pred.frame_dims(),
            gt.frame_dims()
        )));
    }
    let (w, h) = gt.frame_dims();
    if let Some(r) = roi {
        if r.len() != w * h {
            return Err(Error::arg(format!("ROI has {} pixels, expected {w}x{h}", r.len())));
        }
    }
    if gt.is_empty() {
        return Err(Error::arg("ground truth has no frames"));
    }
    let mut total = Counts::default();
    let mut frames = Vec::with_capacity(gt.len());
    let mut gt_frames: Vec<(usize, &[bool])> = gt.frames().collect();
    gt_frames.sort_by_key(|(k, _)| *k);
    for (k, g) in gt_frames {
        let p = pred
            .frame(k)
            .ok_or_else(|| Error::arg(format!("prediction has no frame {k}")))?;
        let mut c = Counts::default();
        for (idx, (&pv, &gv)) in p.iter().zip(g).enumerate() {
            if roi.is_some_and(|r| !r[idx]) {
                continue;
            }
            match (pv, gv) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn_ += c.fn_;
        let (precision, recall, f_measure) = c.prf();
        frames.push(FrameScore { frame: k, counts: c, precision, recall, f_measure });
    }
    let (precision, recall, f_measure) = total.prf();
    let m = frames.len() as f64;
    let mean = |f: fn(&FrameScore) -> f64| frames.iter().map(f).sum::<f64>() / m;
    Ok(EvalReport {
        counts: total,
        precision,
        recall,
        f_measure,
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f_measure: mean(|s| s.f_measure),
        frames,
    })
}
