//! Synthetic sequences with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::MaskSequence;
use crate::tensor::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Background {
    Static,
    /// Global gain `1 + amplitude·sin(2πk/n)`; stays rank one.
    Rank1Drift { amplitude: f64 },
    /// Independent Gaussian noise of standard deviation `sigma` per pixel
    /// and frame.
    DynamicNoise { sigma: f64 },
    /// Brightness offset growing linearly to `slope` over the sequence.
    IlluminationRamp { slope: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Disk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Side length (square) or diameter (disk) in pixels.
    pub size: usize,
    /// Top-left corner at frame 0.
    pub start: (f64, f64),
    /// Pixels per frame; the object bounces off the frame borders.
    pub velocity: (f64, f64),
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: (usize, usize, usize),
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Fraction of entries replaced by salt-and-pepper impulses.
    #[serde(default)]
    pub impulse_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub tensor: Tensor3,
    /// Pixels painted by objects.
    pub gt: MaskSequence,
    /// Entries hit by impulses.
    pub impulses: MaskSequence,
    /// The background alone, before objects and impulses.
    pub background: Tensor3,
}

impl SynthSpec {
    pub fn preset(name: &str, seed: u64) -> Result<SynthSpec> {
        let square = |size: usize, start: (f64, f64), velocity: (f64, f64)| ObjectSpec {
            shape: Shape::Square,
            size,
            start,
            velocity,
            intensity: 1.0,
        };
        let spec = match name {
            "static-impulses" => SynthSpec {
                dims: (16, 16, 20),
                background: Background::Static,
                objects: Vec::new(),
                impulse_fraction: 0.05,
                seed,
            },
            "moving-square" => SynthSpec {
                dims: (24, 24, 30),
                background: Background::Static,
                objects: vec![square(5, (2.0, 3.0), (1.0, 0.5))],
                impulse_fraction: 0.0,
                seed,
            },
            "dynamic-noise" => SynthSpec {
                dims: (24, 24, 30),
                background: Background::DynamicNoise { sigma: 0.05 },
                objects: vec![square(5, (2.0, 3.0), (1.0, 0.5))],
                impulse_fraction: 0.0,
                seed,
            },
            "illumination" => SynthSpec {
                dims: (24, 24, 30),
                background: Background::IlluminationRamp { slope: 0.2 },
                objects: vec![square(5, (2.0, 3.0), (1.0, 0.5))],
                impulse_fraction: 0.0,
                seed,
            },
            _ => {
                return Err(Error::arg(format!(
                    "unknown preset {name:?}; expected static-impulses, moving-square, dynamic-noise or illumination"
                )))
            }
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h, n) = self.dims;
        if w == 0 || h == 0 || n == 0 {
            return Err(Error::arg("synthetic dims must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.impulse_fraction) {
            return Err(Error::arg(format!("impulse fraction must lie in [0, 1], got {}", self.impulse_fraction)));
        }
        match self.background {
            Background::DynamicNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return Err(Error::arg(format!("noise sigma must be >= 0, got {sigma}")))
            }
            Background::Rank1Drift { amplitude } if !(amplitude.abs() < 1.0) => {
                return Err(Error::arg(format!("drift amplitude must lie in (-1, 1), got {amplitude}")))
            }
            _ => {}
        }
        for o in &self.objects {
            if o.size == 0 || o.size > w || o.size > h {
                return Err(Error::arg(format!("object of size {} does not fit a {w}x{h} frame", o.size)));
            }
        }
        Ok(())
    }
}

/// Smooth texture in `[0.2, 0.6]`.
fn base_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let (x, y) = (i as f64 / w as f64, j as f64 / h as f64);
            let s: f64 = waves
                .iter()
                .map(|&(a, b, ph)| (std::f64::consts::TAU * (a * x + b * y) + ph).sin())
                .sum::<f64>()
                / 3.0;
            out[j * w + i] = 0.4 + 0.2 * s;
        }
    }
    out
}

/// Position along one axis of an object bouncing inside `[0, span]`.
fn bounce(start: f64, vel: f64, k: usize, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let p = (start + vel * k as f64).rem_euclid(period);
    if p <= span {
        p
    } else {
        period - p
    }
}

fn paint(o: &ObjectSpec, k: usize, w: usize, h: usize) -> Vec<usize> {
    let x0 = bounce(o.start.0, o.velocity.0, k, (w - o.size) as f64).round() as usize;
    let y0 = bounce(o.start.1, o.velocity.1, k, (h - o.size) as f64).round() as usize;
    let r = o.size as f64 / 2.0;
    let mut px = Vec::with_capacity(o.size * o.size);
    for dy in 0..o.size {
        for dx in 0..o.size {
            let inside = match o.shape {
                Shape::Square => true,
                Shape::Disk => {
                    let (cx, cy) = (dx as f64 + 0.5 - r, dy as f64 + 0.5 - r);
                    cx * cx + cy * cy <= r * r
                }
            };
            if inside {
                px.push((y0 + dy) * w + x0 + dx);
            }
        }
    }
    px
}

/// Generates the sequence described by `spec`; identical specs give
/// bit-identical output.
pub fn synth(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (w, h, n) = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = base_image(w, h, &mut rng);
    let noise = match spec.background {
        Background::DynamicNoise { sigma } if sigma > 0.0 => {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::arg(e.to_string()))?)
        }
        _ => None,
    };
    let mut frames: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let phase = std::f64::consts::TAU * k as f64 / n as f64;
        let frame: Vec<f64> = base
            .iter()
            .map(|&b| match spec.background {
                Background::Static => b,
                Background::Rank1Drift { amplitude } => b * (1.0 + amplitude * phase.sin()),
                Background::DynamicNoise { .. } => b + noise.map_or(0.0, |d| d.sample(&mut rng)),
                Background::IlluminationRamp { slope } => b + slope * k as f64 / n.max(2).saturating_sub(1) as f64,
            })
            .collect();
        frames.push(frame);
    }
    let bg_frames = frames.clone();

    let mut gt = MaskSequence::new(w, h);
    for (k, frame) in frames.iter_mut().enumerate() {
        let mut mask = vec![false; w * h];
        for o in &spec.objects {
            for p in paint(o, k, w, h) {
                frame[p] = o.intensity;
                mask[p] = true;
            }
        }
        gt.push(k, mask)?;
    }

    let mut impulses = MaskSequence::new(w, h);
    for (k, frame) in frames.iter_mut().enumerate() {
        let mut mask = vec![false; w * h];
        if spec.impulse_fraction > 0.0 {
            for (p, v) in frame.iter_mut().enumerate() {
                if rng.random_bool(spec.impulse_fraction) {
                    // the farther extreme keeps every impulse at least 0.5 away
                    *v = if *v < 0.5 { 1.0 } else { 0.0 };
                    mask[p] = true;
                }
            }
        }
        impulses.push(k, mask)?;
    }

    let to_tensor = |fr: &[Vec<f64>]| Tensor3::from_fn((w, h, n), |i, j, k| fr[k][j * w + i]);
    Ok(SynthOutput {
        tensor: to_tensor(&frames)?,
        gt,
        impulses,
        background: to_tensor(&bg_frames)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mode;

    #[test]
    fn static_no_objects_is_rank_one() {
        let spec = SynthSpec {
            dims: (8, 6, 5),
            background: Background::Static,
            objects: vec![],
            impulse_fraction: 0.0,
            seed: 3,
        };
        let out = synth(&spec).unwrap();
        assert_eq!(out.gt.count_ones(), 0);
        let sv = out.tensor.unfold(Mode::Three).singular_values();
        assert!(sv[1] < 1e-10 * sv[0]);
    }

    #[test]
    fn drift_stays_rank_one() {
        let spec = SynthSpec {
            dims: (8, 6, 12),
            background: Background::Rank1Drift { amplitude: 0.3 },
            objects: vec![],
            impulse_fraction: 0.0,
            seed: 3,
        };
        let sv = synth(&spec).unwrap().tensor.unfold(Mode::Three).singular_values();
        assert!(sv[1] < 1e-10 * sv[0]);
    }

    #[test]
    fn square_has_sixteen_pixels_every_frame() {
        let spec = SynthSpec {
            dims: (12, 10, 40),
            background: Background::Static,
            objects: vec![ObjectSpec {
                shape: Shape::Square,
                size: 4,
                start: (0.0, 0.0),
                velocity: (1.0, 0.0),
                intensity: 1.0,
            }],
            impulse_fraction: 0.0,
            seed: 0,
        };
        let out = synth(&spec).unwrap();
        for (k, f) in out.gt.frames() {
            assert_eq!(f.iter().filter(|&&b| b).count(), 16, "frame {k}");
            for (p, &b) in f.iter().enumerate() {
                if b {
                    assert_eq!(out.tensor.get(p % 12, p / 12, k), 1.0);
                }
            }
        }
        // moves 1 px per frame until it hits the border
        assert_eq!(out.gt.get(0, 0, 0), Some(true));
        assert_eq!(out.gt.get(0, 0, 1), Some(false));
        assert_eq!(out.gt.get(4, 0, 1), Some(true));
    }

    #[test]
    fn noise_variance() {
        let sigma = 0.05;
        let spec = SynthSpec {
            dims: (6, 6, 200),
            background: Background::DynamicNoise { sigma },
            objects: vec![],
            impulse_fraction: 0.0,
            seed: 11,
        };
        let x = synth(&spec).unwrap().tensor;
        let mut var = 0.0;
        for j in 0..6 {
            for i in 0..6 {
                let v: Vec<f64> = (0..200).map(|k| x.get(i, j, k)).collect();
                let m = v.iter().sum::<f64>() / 200.0;
                var += v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 199.0;
            }
        }
        var /= 36.0;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn impulses_marked_and_far_from_background() {
        let spec = SynthSpec::preset("static-impulses", 5).unwrap();
        let out = synth(&spec).unwrap();
        let frac = out.impulses.count_ones() as f64 / (16 * 16 * 20) as f64;
        assert!((frac - 0.05).abs() < 0.02);
        for (k, f) in out.impulses.frames() {
            for (p, &b) in f.iter().enumerate() {
                let (i, j) = (p % 16, p / 16);
                let d = (out.tensor.get(i, j, k) - out.background.get(i, j, k)).abs();
                if b {
                    assert!(d >= 0.4);
                } else {
                    assert_eq!(d, 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth(&SynthSpec::preset("dynamic-noise", 9).unwrap()).unwrap();
        let b = synth(&SynthSpec::preset("dynamic-noise", 9).unwrap()).unwrap();
        let c = synth(&SynthSpec::preset("dynamic-noise", 10).unwrap()).unwrap();
        assert_eq!(a.tensor, b.tensor);
        assert_eq!(a.gt, b.gt);
        assert_ne!(a.tensor, c.tensor);
    }

    #[test]
    fn object_too_large() {
        let mut spec = SynthSpec::preset("moving-square", 0).unwrap();
        spec.objects[0].size = 100;
        assert!(synth(&spec).is_err());
        assert!(SynthSpec::preset("nope", 0).is_err());
    }

    #[test]
    fn disk_is_round() {
        let o = ObjectSpec { shape: Shape::Disk, size: 6, start: (0.0, 0.0), velocity: (0.0, 0.0), intensity: 1.0 };
        let px = paint(&o, 0, 10, 10);
        assert!(px.len() < 36 && px.len() > 20);
        assert!(!px.contains(&0));
    }
}
