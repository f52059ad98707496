use rayon::prelude::*;

/// Row-major feature matrix: one `dim`-length feature vector per vertex.
pub(crate) struct Features<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl Features<'_> {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    #[inline]
    fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    #[inline]
    pub fn dist_sq(&self, p: usize, q: usize) -> f64 {
        self.row(p)
            .iter()
            .zip(self.row(q))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Exact brute-force kNN. For every vertex returns its `k` nearest other
/// vertices as `(index, euclidean distance)`, nearest first; ties go to the
/// lower index.
pub(crate) fn knn(features: &Features<'_>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = features.len();
    let k = k.min(n.saturating_sub(1));
    (0..n)
        .into_par_iter()
        .map(|p| {
            if k == 0 {
                return Vec::new();
            }
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&q| q != p)
                .map(|q| (features.dist_sq(p, q), q))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if cand.len() > k {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_by(cmp);
            cand.into_iter().map(|(d2, q)| (q, d2.sqrt())).collect()
        })
        .collect()
}
