//! Sparse linear maps between [`Space`]s.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::state::{Space, StateVector};

/// A linear map `domain -> codomain` stored as `(row, col, value)` triplets.
/// Duplicate triplets add up.
#[derive(Clone, Debug)]
pub struct Operator {
    domain: Space,
    codomain: Space,
    entries: Vec<(usize, usize, C64)>,
}

impl Operator {
    pub fn new(domain: Space, codomain: Space, entries: Vec<(usize, usize, C64)>) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r >= codomain.dim() {
                return Err(Error::Dimension { expected: codomain.dim(), found: r + 1 });
            }
            if c >= domain.dim() {
                return Err(Error::Dimension { expected: domain.dim(), found: c + 1 });
            }
        }
        Ok(Self { domain, codomain, entries })
    }

    pub fn domain(&self) -> Space {
        self.domain
    }

    pub fn codomain(&self) -> Space {
        self.codomain
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    /// Matrix element `<row|A|col>`.
    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.entries
            .iter()
            .filter(|&&(r, c, _)| r == row && c == col)
            .map(|e| e.2)
            .sum()
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.space() != self.domain {
            return Err(Error::Dimension { expected: self.domain.dim(), found: psi.space().dim() });
        }
        let mut out = StateVector::zeros(self.codomain).with_labels(psi.labels().to_vec())?;
        let src = psi.amplitudes();
        let dst = out.amplitudes_mut();
        for &(r, c, v) in &self.entries {
            dst[r] += v * src[c];
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            domain: self.codomain,
            codomain: self.domain,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.codomain.dim(), self.domain.dim());
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}
