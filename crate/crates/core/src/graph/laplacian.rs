use std::io::Write;

use nalgebra::DMatrix;

use super::KnnGraph;
use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR form, used for graph Laplacians.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLaplacian {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseLaplacian {
    pub fn zeros(n: usize) -> Self {
        SparseLaplacian {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets sorted by `(row, col)`.
    fn from_sorted_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Self {
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in &triplets {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let (cols, vals) = triplets.into_iter().map(|(_, c, v)| (c, v)).unzip();
        SparseLaplacian { n, row_ptr, cols, vals }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzeros of row `p` as `(col, value)`.
    pub fn row(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[p]..self.row_ptr[p + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.row(p).find(|&(c, _)| c == q).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn diag(&self, p: usize) -> f64 {
        self.get(p, p)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|p| self.row(p).map(|(q, v)| v * x[q]).sum()).collect()
    }

    /// `y = alpha * L x + beta * x`
    pub fn shifted_matvec(&self, alpha: f64, beta: f64, x: &[f64], y: &mut [f64]) {
        for p in 0..self.n {
            let lx: f64 = self.row(p).map(|(q, v)| v * x[q]).sum();
            y[p] = alpha * lx + beta * x[p];
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for p in 0..self.n {
            for (q, v) in self.row(p) {
                m[(p, q)] = v;
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.vals.iter().all(|&v| v == 0.0)
    }

    /// Writes the matrix in Matrix Market coordinate format (1-based,
    /// `general` symmetry so every stored entry appears).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for p in 0..self.n {
            for (q, v) in self.row(p) {
                writeln!(out, "{} {} {:.17e}", p + 1, q + 1, v)?;
            }
        }
        Ok(())
    }
}

fn degrees(g: &KnnGraph) -> Vec<f64> {
    let mut d = vec![0.0; g.n_vertices];
    for &(p, _, w) in &g.edges {
        d[p] += w;
    }
    d
}

/// Normalized Laplacian `I − D^{-1/2} A D^{-1/2}`. Isolated vertices get an
/// all-zero row and column.
pub fn laplacian(g: &KnnGraph) -> SparseLaplacian {
    let d = degrees(g);
    let inv_sqrt: Vec<f64> = d.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
    let mut triplets = Vec::with_capacity(g.edges.len() + g.n_vertices);
    let mut e = g.edges.iter().peekable();
    for p in 0..g.n_vertices {
        let mut diag_done = d[p] == 0.0;
        while let Some(&&(a, q, w)) = e.peek() {
            if a != p {
                break;
            }
            if !diag_done && q > p {
                triplets.push((p, p, 1.0));
                diag_done = true;
            }
            triplets.push((p, q, -w * (inv_sqrt[p] * inv_sqrt[q])));
            e.next();
        }
        if !diag_done {
            triplets.push((p, p, 1.0));
        }
    }
    SparseLaplacian::from_sorted_triplets(g.n_vertices, triplets)
}

/// Combinatorial Laplacian `D − A`.
pub fn combinatorial_laplacian(g: &KnnGraph) -> SparseLaplacian {
    let d = degrees(g);
    let mut triplets = Vec::with_capacity(g.edges.len() + g.n_vertices);
    let mut e = g.edges.iter().peekable();
    for p in 0..g.n_vertices {
        let mut diag_done = d[p] == 0.0;
        while let Some(&&(a, q, w)) = e.peek() {
            if a != p {
                break;
            }
            if !diag_done && q > p {
                triplets.push((p, p, d[p]));
                diag_done = true;
            }
            triplets.push((p, q, -w));
            e.next();
        }
        if !diag_done {
            triplets.push((p, p, d[p]));
        }
    }
    SparseLaplacian::from_sorted_triplets(g.n_vertices, triplets)
}

/// Which dimension of `F` the Laplacian couples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `Tr(Fᵀ L F)`: L acts on the rows of `F`.
    Left,
    /// `Tr(F L Fᵀ)`: L acts on the columns of `F`.
    Right,
}

/// Graph smoothness `Tr(Fᵀ L F)` or `Tr(F L Fᵀ)`.
///
/// For the normalized Laplacian this equals
/// `½ Σ a(p,q) ‖f_p/√d_p − f_q/√d_q‖²`; for the combinatorial one it is
/// `½ Σ a(p,q) ‖f_p − f_q‖²`.
pub fn trace_quad(f: &DMatrix<f64>, l: &SparseLaplacian, side: Side) -> Result<f64> {
    let (len, other) = match side {
        Side::Left => (f.nrows(), f.ncols()),
        Side::Right => (f.ncols(), f.nrows()),
    };
    if len != l.n() {
        return Err(Error::arg(format!(
            "trace_quad: F is {}x{} but L is {}x{}",
            f.nrows(),
            f.ncols(),
            l.n(),
            l.n()
        )));
    }
    let at = |p: usize, c: usize| match side {
        Side::Left => f[(p, c)],
        Side::Right => f[(c, p)],
    };
    let mut acc = 0.0;
    for p in 0..l.n() {
        for (q, v) in l.row(p) {
            let dot: f64 = (0..other).map(|c| at(p, c) * at(q, c)).sum();
            acc += v * dot;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, p_edge: f64, seed: u64) -> KnnGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for p in 0..n {
            for q in p + 1..n {
                if rng.random_bool(p_edge) {
                    edges.push((p, q, rng.random_range(0.01..1.0)));
                }
            }
        }
        KnnGraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn two_vertex_example() {
        let g = KnnGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let l = laplacian(&g).to_dense();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let mut ev: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn edgeless_is_zero() {
        let g = KnnGraph::from_edges(4, []).unwrap();
        assert!(laplacian(&g).is_zero());
        assert_eq!(laplacian(&g).to_dense(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn random_graph_spectrum() {
        for seed in 0..5 {
            let g = random_graph(10, 0.4, seed);
            let ls = laplacian(&g);
            let l = ls.to_dense();
            assert_eq!(l, l.transpose());
            let eig = SymmetricEigen::new(l.clone());
            for &e in eig.eigenvalues.iter() {
                assert!(e >= -1e-9 && e <= 2.0 + 1e-9, "eigenvalue {e}");
            }
            // D^{1/2} 1 is in the null space
            let d: Vec<f64> = (0..10).map(|p| g.edges.iter().filter(|e| e.0 == p).map(|e| e.2).sum::<f64>().sqrt()).collect();
            let v = nalgebra::DVector::from_vec(d);
            if v.norm() > 0.0 {
                let rq = (v.transpose() * &l * &v)[(0, 0)] / v.norm_squared();
                assert!(rq.abs() < 1e-9);
            }
            for p in 0..10 {
                if g.degree_count(p) > 0 {
                    assert_eq!(ls.diag(p), 1.0);
                }
            }
        }
    }

    #[test]
    fn trace_of_identity_is_trace_of_l() {
        let g = KnnGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let l = laplacian(&g);
        let id = DMatrix::identity(2, 2);
        assert!((trace_quad(&id, &l, Side::Left).unwrap() - 2.0).abs() < 1e-12);
        assert!((trace_quad(&id, &l, Side::Right).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_in_combinatorial_null_space() {
        let g = random_graph(6, 1.0, 3);
        let l = combinatorial_laplacian(&g);
        let f = DMatrix::from_element(6, 3, 0.7);
        assert!(trace_quad(&f, &l, Side::Left).unwrap().abs() < 1e-12);
    }

    #[test]
    fn trace_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for seed in 0..5 {
            let g = random_graph(8, 0.5, seed);
            let d: Vec<f64> = (0..8).map(|p| g.edges.iter().filter(|e| e.0 == p).map(|e| e.2).sum()).collect();
            let f = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
            let scaled = |p: usize, c: usize| if d[p] > 0.0 { f[(p, c)] / d[p].sqrt() } else { 0.0 };
            let mut norm_sum = 0.0;
            let mut comb_sum = 0.0;
            for &(p, q, w) in &g.edges {
                for c in 0..3 {
                    norm_sum += 0.5 * w * (scaled(p, c) - scaled(q, c)).powi(2);
                    comb_sum += 0.5 * w * (f[(p, c)] - f[(q, c)]).powi(2);
                }
            }
            let tn = trace_quad(&f, &laplacian(&g), Side::Left).unwrap();
            let tc = trace_quad(&f, &combinatorial_laplacian(&g), Side::Left).unwrap();
            assert!((tn - norm_sum).abs() < 1e-10);
            assert!((tc - comb_sum).abs() < 1e-10);
            let tr = trace_quad(&f.transpose(), &laplacian(&g), Side::Right).unwrap();
            assert!((tr - tn).abs() < 1e-12);
            assert!(tn >= 0.0);
        }
    }

    #[test]
    fn trace_dim_mismatch() {
        let l = SparseLaplacian::zeros(3);
        assert!(trace_quad(&DMatrix::zeros(2, 3), &l, Side::Left).is_err());
        assert!(trace_quad(&DMatrix::zeros(2, 3), &l, Side::Right).is_ok());
    }

    #[test]
    fn matrix_market_header() {
        let g = KnnGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let mut buf = Vec::new();
        laplacian(&g).write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines.next().unwrap(), "2 2 4");
        assert_eq!(lines.count(), 4);
    }
}
