//! kNN similarity graphs over frames (temporal) and per-pixel patches
//! (spatial), and their normalized Laplacians.

mod knn;
mod laplacian;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor3};

use knn::{knn, Features};
pub use laplacian::{combinatorial_laplacian, laplacian, trace_quad, Side, SparseLaplacian};

/// Floor for the Gaussian bandwidth when every retained neighbor sits at
/// distance zero.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Floor for edge weights so that far neighbors stay connected.
pub const WEIGHT_FLOOR: f64 = 1e-100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    /// Mean distance over all retained kNN edges.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    /// Side length of the square patch used as the spatial feature.
    pub patch: usize,
    pub sigma: Sigma,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            k: 10,
            patch: 8,
            sigma: Sigma::Auto,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::arg("graph k must be >= 1"));
        }
        if self.patch < 1 {
            return Err(Error::arg("patch size must be >= 1"));
        }
        if let Sigma::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::arg(format!("fixed sigma must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Undirected weighted graph. Every edge is stored in both directions,
/// sorted by `(p, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl KnnGraph {
    pub fn weight(&self, p: usize, q: usize) -> f64 {
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(p, q)))
            .map(|i| self.edges[i].2)
            .unwrap_or(0.0)
    }

    pub fn degree_count(&self, p: usize) -> usize {
        self.edges.iter().filter(|e| e.0 == p).count()
    }

    /// Dense adjacency matrix.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_vertices, self.n_vertices);
        for &(p, q, w) in &self.edges {
            a[(p, q)] = w;
        }
        a
    }

    pub fn from_edges(n_vertices: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (p, q, w) in edges {
            if p >= n_vertices || q >= n_vertices {
                return Err(Error::arg(format!("edge ({p}, {q}) out of range for {n_vertices} vertices")));
            }
            if p == q {
                continue;
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::arg(format!("edge weight must be positive, got {w}")));
            }
            for key in [(p, q), (q, p)] {
                let e = map.entry(key).or_insert(w);
                *e = f64::max(*e, w);
            }
        }
        Ok(KnnGraph {
            n_vertices,
            edges: map.into_iter().map(|((p, q), w)| (p, q, w)).collect(),
        })
    }
}

fn gaussian_knn_graph(features: &Features<'_>, k: usize, sigma: Sigma) -> KnnGraph {
    let n = features.len();
    let nn = knn(features, k);
    let sigma = match sigma {
        Sigma::Fixed(s) => s,
        Sigma::Auto => {
            let (sum, cnt) = nn
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, c), &(_, d)| (s + d, c + 1));
            if cnt == 0 {
                0.0
            } else {
                sum / cnt as f64
            }
        }
    }
    .max(SIGMA_FLOOR);
    let two_sigma_sq = 2.0 * sigma * sigma;
    let directed = nn.iter().enumerate().flat_map(|(p, list)| {
        list.iter()
            .map(move |&(q, d)| (p, q, (-(d * d) / two_sigma_sq).exp().max(WEIGHT_FLOOR)))
    });
    KnnGraph::from_edges(n, directed).expect("kNN edges are in range with positive weights")
}

/// Temporal graph over the columns (frames) of a mode-3 unfolding.
pub fn temporal_graph(x3: &DMatrix<f64>, cfg: &GraphConfig) -> Result<KnnGraph> {
    cfg.validate()?;
    let n = x3.ncols();
    if n < 2 {
        return Err(Error::arg(format!("temporal graph needs at least 2 frames, got {n}")));
    }
    // nalgebra storage is column-major, so columns are contiguous rows here
    let features = Features {
        data: x3.as_slice(),
        dim: x3.nrows(),
    };
    Ok(gaussian_knn_graph(&features, cfg.k, cfg.sigma))
}

/// Patch feature of every pixel of a `w × h` frame. Vertex `j * w + i` is
/// pixel `(i, j)`, matching the mode-3 vectorization. Patches are centered on
/// the pixel (offsets `-a/2 ..= a - 1 - a/2`) with replicate padding.
pub fn patch_features(slice: &DMatrix<f64>, a: usize) -> Vec<f64> {
    let (w, h) = slice.shape();
    let lo = (a / 2) as isize;
    let clamp = |v: isize, max: usize| v.clamp(0, max as isize - 1) as usize;
    let mut out = Vec::with_capacity(w * h * a * a);
    for j in 0..h {
        for i in 0..w {
            for dj in 0..a as isize {
                for di in 0..a as isize {
                    let pi = clamp(i as isize + di - lo, w);
                    let pj = clamp(j as isize + dj - lo, h);
                    out.push(slice[(pi, pj)]);
                }
            }
        }
    }
    out
}

/// Spatial graph over the pixels of one frame, compared through their
/// surrounding patches.
pub fn spatial_graph(slice: &DMatrix<f64>, cfg: &GraphConfig) -> Result<KnnGraph> {
    cfg.validate()?;
    let (w, h) = slice.shape();
    if cfg.patch > w.min(h) {
        return Err(Error::arg(format!(
            "patch size {} exceeds frame size {w}x{h}",
            cfg.patch
        )));
    }
    let feats = patch_features(slice, cfg.patch);
    let features = Features {
        data: &feats,
        dim: cfg.patch * cfg.patch,
    };
    Ok(gaussian_knn_graph(&features, cfg.k, cfg.sigma))
}

/// Spatial Laplacians for every frame of a sequence.
#[derive(Clone, Debug)]
pub enum SpatialLaplacians {
    PerSlice(Vec<SparseLaplacian>),
    /// One Laplacian reused for every frame (static camera).
    Shared(SparseLaplacian),
}

impl SpatialLaplacians {
    pub fn for_slice(&self, k: usize) -> &SparseLaplacian {
        match self {
            SpatialLaplacians::PerSlice(v) => &v[k],
            SpatialLaplacians::Shared(l) => l,
        }
    }

    pub fn build(x: &Tensor3, cfg: &GraphConfig, shared: bool) -> Result<Self> {
        let (_, _, n) = x.dims();
        if shared {
            let med = temporal_median(x);
            return Ok(SpatialLaplacians::Shared(laplacian(&spatial_graph(&med, cfg)?)));
        }
        let per: Vec<SparseLaplacian> = (0..n)
            .into_par_iter()
            .map(|k| spatial_graph(&x.frontal_slice(k), cfg).map(|g| laplacian(&g)))
            .collect::<Result<_>>()?;
        Ok(SpatialLaplacians::PerSlice(per))
    }
}

/// Temporal Laplacian of a sequence (graph over its frames).
pub fn temporal_laplacian(x: &Tensor3, cfg: &GraphConfig) -> Result<SparseLaplacian> {
    Ok(laplacian(&temporal_graph(&x.unfold(Mode::Three), cfg)?))
}

/// Per-pixel median over frames.
pub fn temporal_median(x: &Tensor3) -> DMatrix<f64> {
    let (w, h, n) = x.dims();
    DMatrix::from_fn(w, h, |i, j| {
        let mut fiber: Vec<f64> = (0..n).map(|k| x.get(i, j, k)).collect();
        fiber.sort_by(f64::total_cmp);
        if n % 2 == 1 {
            fiber[n / 2]
        } else {
            0.5 * (fiber[n / 2 - 1] + fiber[n / 2])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, patch: usize) -> GraphConfig {
        GraphConfig {
            k,
            patch,
            sigma: Sigma::Auto,
        }
    }

    #[test]
    fn identical_columns_full_weight() {
        let x = DMatrix::from_column_slice(3, 2, &[0.2, 0.4, 0.6, 0.2, 0.4, 0.6]);
        let g = temporal_graph(&x, &cfg(1, 1)).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
    }

    #[test]
    fn equilateral_columns() {
        // three points at mutual distance d = sqrt(2), so sigma = d
        let x = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let g = temporal_graph(&x, &cfg(2, 1)).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                if p != q {
                    assert!((g.weight(p, q) - (-0.5f64).exp()).abs() < 1e-12);
                }
            }
        }
        assert!(((-0.5f64).exp() - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn k1_links_cluster_pairs_only() {
        // four well-separated pairs on a line
        let pts = [0.0, 0.1, 10.0, 10.2, 20.0, 20.05, 30.0, 30.3];
        let x = DMatrix::from_row_slice(1, 8, &pts);
        let g = temporal_graph(&x, &cfg(1, 1)).unwrap();
        // brute-force nearest neighbor scan
        for p in 0..8 {
            let nn = (0..8)
                .filter(|&q| q != p)
                .min_by(|&a, &b| (pts[a] - pts[p]).abs().total_cmp(&(pts[b] - pts[p]).abs()))
                .unwrap();
            assert!(g.weight(p, nn) > 0.0);
        }
        for &(p, q, _) in &g.edges {
            assert_eq!(p / 2, q / 2, "edge {p}-{q} crosses clusters");
        }
    }

    #[test]
    fn temporal_needs_two_frames() {
        assert!(temporal_graph(&DMatrix::zeros(4, 1), &cfg(1, 1)).is_err());
    }

    #[test]
    fn constant_image_weights_one() {
        let img = DMatrix::from_element(5, 4, 0.3);
        let g = spatial_graph(&img, &cfg(4, 3)).unwrap();
        assert!(g.edges.iter().all(|e| e.2 == 1.0));
        assert!((0..20).all(|p| g.degree_count(p) >= 4));
    }

    #[test]
    fn two_halves_cross_weights_lower() {
        let img = DMatrix::from_fn(6, 6, |i, _| if i < 3 { 0.1 } else { 0.9 });
        let g = spatial_graph(&img, &GraphConfig { k: 35, patch: 3, sigma: Sigma::Auto }).unwrap();
        let region = |p: usize| if p % 6 < 3 { 0 } else { 1 };
        // pixels away from the boundary: columns 0 and 5
        let interior: Vec<usize> = (0..36).filter(|p| p % 6 == 0 || p % 6 == 5).collect();
        let mut within = f64::INFINITY;
        let mut across = 0.0_f64;
        for &p in &interior {
            for &q in &interior {
                if p == q {
                    continue;
                }
                let w = g.weight(p, q);
                if region(p) == region(q) {
                    within = within.min(w);
                } else {
                    across = across.max(w);
                }
            }
        }
        assert!(across < within, "across {across} within {within}");
    }

    #[test]
    fn complete_graph_reproduces_all_pairs() {
        let img = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1 + if i == j { 0.05 } else { 0.0 });
        let g = spatial_graph(&img, &cfg(8, 1)).unwrap();
        let vals: Vec<f64> = (0..9).map(|p| img[(p % 3, p / 3)]).collect();
        let mut dists = Vec::new();
        for p in 0..9 {
            for q in 0..9 {
                if p != q {
                    dists.push((p, q, (vals[p] - vals[q]).abs()));
                }
            }
        }
        let sigma = dists.iter().map(|d| d.2).sum::<f64>() / dists.len() as f64;
        assert_eq!(g.edges.len(), 72);
        for (p, q, d) in dists {
            let expect = (-(d * d) / (2.0 * sigma * sigma)).exp();
            assert!((g.weight(p, q) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_larger_than_frame() {
        assert!(spatial_graph(&DMatrix::zeros(4, 6), &cfg(2, 5)).is_err());
    }

    #[test]
    fn patch_feature_replicates_border() {
        let img = DMatrix::from_fn(3, 3, |i, j| (i + 10 * j) as f64);
        let f = patch_features(&img, 3);
        // pixel (0, 0): rows dj=-1..1, cols di=-1..1 clamped
        assert_eq!(&f[..9], &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 10.0, 10.0, 11.0]);
    }

    #[test]
    fn weights_in_unit_interval_and_symmetric() {
        let img = DMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let g = spatial_graph(&img, &cfg(3, 2)).unwrap();
        for &(p, q, w) in &g.edges {
            assert!(w > 0.0 && w <= 1.0);
            assert_eq!(g.weight(q, p), w);
        }
        assert!((0..30).all(|p| g.degree_count(p) >= 3));
    }

    #[test]
    fn deterministic() {
        let img = DMatrix::from_fn(6, 6, |i, j| ((i * 5 + j * 3) % 4) as f64);
        assert_eq!(spatial_graph(&img, &cfg(3, 3)).unwrap(), spatial_graph(&img, &cfg(3, 3)).unwrap());
    }
}
