//! Dense spectral helpers: per-sector eigendecomposition for time evolution
//! and numerical kernels via the singular value decomposition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{domain, Error, Result};
use crate::operator::Operator;
use crate::state::{Space, StateVector};

/// Relative singular-value threshold used for ranks and kernels.
pub const RANK_TOL: f64 = 1e-10;

struct Block {
    /// Positions of this block's basis states inside the operator's space.
    indices: Vec<usize>,
    /// Mean diagonal energy, removed before diagonalizing.
    offset: f64,
    /// Eigenvalues relative to `offset`.
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

/// Eigendecomposition of a Hermitian operator, split into the excitation
/// sectors it does not couple.
pub struct Spectral {
    space: Space,
    blocks: Vec<Block>,
}

impl Spectral {
    pub fn new(h: &Operator) -> Result<Self> {
        let space = h.domain();
        if h.codomain() != space {
            return domain("evolution needs an operator mapping a space onto itself");
        }
        let dense = h.to_dense();
        if !is_hermitian(&dense, 1e-12) {
            return domain("operator is not Hermitian");
        }
        // Group indices by excitation; fall back to one block if the operator
        // couples different sectors.
        let exc: Vec<usize> = space.basis().map(|b| b.excitation()).collect();
        let block_diagonal = h.entries().iter().all(|&(r, c, _)| exc[r] == exc[c]);
        let groups: Vec<Vec<usize>> = if block_diagonal {
            let top = exc.iter().copied().max().unwrap_or(0);
            (0..=top)
                .map(|m| (0..exc.len()).filter(|&i| exc[i] == m).collect::<Vec<_>>())
                .filter(|g| !g.is_empty())
                .collect()
        } else {
            vec![(0..exc.len()).collect()]
        };
        let blocks = groups
            .into_iter()
            .map(|indices| {
                // Eigenvector error scales with the matrix norm over the gap,
                // so diagonalize with the common energy removed.
                let k = indices.len();
                let offset = indices.iter().map(|&i| dense[(i, i)].re).sum::<f64>() / k as f64;
                let sub = DMatrix::from_fn(k, k, |i, j| {
                    let d = if i == j { offset } else { 0.0 };
                    dense[(indices[i], indices[j])] - C64::new(d, 0.0)
                });
                let eig = sub.symmetric_eigen();
                Block {
                    indices,
                    offset,
                    energies: eig.eigenvalues.iter().copied().collect(),
                    vectors: eig.eigenvectors,
                }
            })
            .collect();
        Ok(Self { space, blocks })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// All eigenvalues, grouped by block then ascending within a block.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let mut e: Vec<f64> = b.energies.iter().map(|e| e + b.offset).collect();
                e.sort_by(f64::total_cmp);
                e
            })
            .collect()
    }

    /// `exp(-i H t) psi`.
    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if psi.space() != self.space {
            return Err(Error::Dimension { expected: self.space.dim(), found: psi.space().dim() });
        }
        let mut out = psi.clone();
        if t == 0.0 {
            return Ok(out);
        }
        let src = psi.amplitudes();
        let dst = out.amplitudes_mut();
        for b in &self.blocks {
            let v = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| src[i]));
            let mut coeff = b.vectors.ad_mul(&v);
            for (c, &e) in coeff.iter_mut().zip(&b.energies) {
                *c *= C64::new(0.0, -e * t).exp();
            }
            let w = &b.vectors * coeff * C64::new(0.0, -b.offset * t).exp();
            for (k, &i) in b.indices.iter().enumerate() {
                dst[i] = w[k];
            }
        }
        Ok(out)
    }
}

pub fn is_hermitian(m: &DMatrix<C64>, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).iter().all(|c| c.norm() <= tol)
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with threshold `RANK_TOL * max singular value`.
pub fn rank(m: &DMatrix<C64>) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > RANK_TOL * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the kernel of `m`, one column per kernel vector.
pub fn kernel_basis(m: &DMatrix<C64>) -> DMatrix<C64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad with zero rows so the SVD returns a complete set of right vectors.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cols: Vec<DVector<C64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| top == 0.0 || s <= RANK_TOL * top)
        .map(|(k, _)| v_t.row(k).adjoint())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}
