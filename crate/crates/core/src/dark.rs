//! Dark states: the collective lowering operator, darkness checks, singlet
//! factors and the product states keyed by a pairing of the atoms.

use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hamiltonian::{build_hamiltonian, ModelParams};
use crate::linalg;
use crate::operator::Operator;
use crate::state::{BasisState, Space, StateVector};

/// Default darkness tolerance, relative to the state norm.
pub const DARK_TOL: f64 = 1e-10;

/// A matching of atom indices into disjoint unordered pairs.
///
/// Pairs are stored as `(i, j)` with `i < j`, sorted by `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SplittingWire", into = "SplittingWire")]
pub struct PairSplitting {
    n_atoms: usize,
    pairs: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct SplittingWire {
    n_atoms: usize,
    pairs: Vec<[usize; 2]>,
}

impl TryFrom<SplittingWire> for PairSplitting {
    type Error = Error;
    fn try_from(w: SplittingWire) -> Result<Self> {
        Self::new(w.n_atoms, w.pairs.iter().map(|p| (p[0], p[1])).collect())
    }
}

impl From<PairSplitting> for SplittingWire {
    fn from(k: PairSplitting) -> Self {
        Self { n_atoms: k.n_atoms, pairs: k.pairs.iter().map(|&(i, j)| [i, j]).collect() }
    }
}

impl PairSplitting {
    /// Validate and normalize a (partial) matching.
    pub fn new(n_atoms: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut used = vec![false; n_atoms];
        let mut norm = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a == b {
                return domain(format!("pair ({a}, {b}) repeats an atom"));
            }
            for x in [a, b] {
                if x >= n_atoms {
                    return domain(format!("atom {x} out of range for {n_atoms} atoms"));
                }
                if used[x] {
                    return domain(format!("atom {x} appears in more than one pair"));
                }
                used[x] = true;
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        Ok(Self { n_atoms, pairs: norm })
    }

    /// Pair atom `2k` with `2k + 1`.
    pub fn adjacent(n_atoms: usize) -> Result<Self> {
        if !n_atoms.is_multiple_of(2) {
            return domain(format!("cannot pair an odd number of atoms ({n_atoms})"));
        }
        Self::new(n_atoms, (0..n_atoms / 2).map(|k| (2 * k, 2 * k + 1)).collect())
    }

    /// Uniformly random perfect matching: shuffle, then pair neighbours.
    pub fn random<R: Rng + ?Sized>(n_atoms: usize, rng: &mut R) -> Result<Self> {
        if n_atoms < 2 || !n_atoms.is_multiple_of(2) {
            return domain(format!("a perfect matching needs an even number >= 2 of atoms, got {n_atoms}"));
        }
        let mut order: Vec<usize> = (0..n_atoms).collect();
        order.shuffle(rng);
        Self::new(n_atoms, order.chunks(2).map(|c| (c[0], c[1])).collect())
    }

    /// Every perfect matching of `n_atoms` atoms, by recursive pairing of
    /// the lowest unmatched atom.
    pub fn enumerate_all(n_atoms: usize) -> Result<Vec<Self>> {
        if !n_atoms.is_multiple_of(2) {
            return domain(format!("cannot pair an odd number of atoms ({n_atoms})"));
        }
        fn rec(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
            let Some((&first, tail)) = rest.split_first() else {
                out.push(acc.clone());
                return;
            };
            for k in 0..tail.len() {
                acc.push((first, tail[k]));
                let remaining: Vec<usize> =
                    tail.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &x)| x).collect();
                rec(&remaining, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        rec(&(0..n_atoms).collect::<Vec<_>>(), &mut Vec::new(), &mut out);
        out.into_iter().map(|p| Self::new(n_atoms, p)).collect()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn is_complete(&self) -> bool {
        2 * self.pairs.len() == self.n_atoms
    }

    pub fn partner(&self, atom: usize) -> Option<usize> {
        self.pairs.iter().find_map(|&(i, j)| {
            if i == atom {
                Some(j)
            } else if j == atom {
                Some(i)
            } else {
                None
            }
        })
    }

    pub fn contains_pair(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Singlet on atoms `(i, j)`: `amp01 |0_i 1_j> + amp10 |1_i 0_j>`, with
/// `g_i amp10 + g_j amp01 = 0` and unit norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingletFactor {
    pub pair: (usize, usize),
    pub amp01: f64,
    pub amp10: f64,
}

impl SingletFactor {
    /// Two-atom state over atoms `[i, j]` in the one-excitation sector.
    pub fn to_state(&self) -> StateVector {
        let space = Space::atoms_sector(2, 1).expect("two-atom sector");
        // sector order: |01>, |10>
        StateVector::new(space, vec![C64::new(self.amp01, 0.0), C64::new(self.amp10, 0.0)])
            .and_then(|s| s.with_labels(vec![self.pair.0, self.pair.1]))
            .expect("distinct labels")
    }

    /// Amplitudes in the `|00>, |01>, |10>, |11>` pair basis.
    pub fn pair_amps(&self) -> PairAmps {
        [
            C64::new(0.0, 0.0),
            C64::new(self.amp01, 0.0),
            C64::new(self.amp10, 0.0),
            C64::new(0.0, 0.0),
        ]
    }
}

/// Dark singlet of atoms `i` and `j`, proportional to
/// `g_i |0_i 1_j> - g_j |1_i 0_j>`.
///
/// This is the pairwise reduction of the product-weighted form
/// `gamma_j |0_i 1_j> - gamma_i |1_i 0_j>` with `gamma_k = prod(g) / g_k`:
/// the ratio `gamma_j : gamma_i` equals `g_i : g_j`.
pub fn singlet_pair(i: usize, j: usize, g: &[f64]) -> Result<SingletFactor> {
    if i == j {
        return domain("a singlet needs two distinct atoms");
    }
    let (gi, gj) = match (g.get(i), g.get(j)) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return domain(format!("pair ({i}, {j}) out of range for {} couplings", g.len())),
    };
    if !(gi > 0.0 && gj > 0.0) {
        return domain(format!("singlet weights undefined: g_{i} = {gi}, g_{j} = {gj}"));
    }
    let n = gi.hypot(gj);
    Ok(SingletFactor { pair: (i, j), amp01: gi / n, amp10: -gj / n })
}

/// Tensor product of singlet factors over a pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingletProduct {
    pub n_atoms: usize,
    pub factors: Vec<SingletFactor>,
}

impl SingletProduct {
    pub fn from_splitting(k: &PairSplitting, g: &[f64]) -> Result<Self> {
        if g.len() != k.n_atoms() {
            return Err(Error::Dimension { expected: k.n_atoms(), found: g.len() });
        }
        let factors = k
            .pairs()
            .iter()
            .map(|&(i, j)| singlet_pair(i, j, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_atoms: k.n_atoms(), factors })
    }

    /// Exact `||sigma_bar psi||` of the product state: the factors carry one
    /// excitation each, so the cross terms vanish and the squared residual is
    /// the sum over factors.
    pub fn dark_residual(&self, g: &[f64]) -> f64 {
        self.factors
            .iter()
            .map(|f| {
                let r = g[f.pair.1] * f.amp01 + g[f.pair.0] * f.amp10;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Dense state vector. With `include_spectators`, unpaired atoms are
    /// added in `|0>` and the state covers all atoms; otherwise it covers the
    /// paired atoms only, in ascending label order.
    pub fn to_state(&self, include_spectators: bool) -> Result<StateVector> {
        let labels: Vec<usize> = if include_spectators {
            (0..self.n_atoms).collect()
        } else {
            let mut l: Vec<usize> = self.factors.iter().flat_map(|f| [f.pair.0, f.pair.1]).collect();
            l.sort_unstable();
            l
        };
        let local = |atom: usize| labels.iter().position(|&l| l == atom).expect("paired atom");
        let n = labels.len();
        let p = self.factors.len();
        if p > 30 {
            return domain("too many pairs for a dense state");
        }
        let space = Space::atoms_sector(n, p)?;
        let mut psi = StateVector::zeros(space);
        let zero = BasisState::new(0, &vec![0; n])?;
        for choice in 0u64..(1u64 << p) {
            let mut b = zero;
            let mut amp = 1.0;
            for (k, f) in self.factors.iter().enumerate() {
                let (i, j) = (local(f.pair.0), local(f.pair.1));
                if choice >> k & 1 == 0 {
                    b = b.with_atom(j, true);
                    amp *= f.amp01;
                } else {
                    b = b.with_atom(i, true);
                    amp *= f.amp10;
                }
            }
            psi.amplitudes_mut()[space.index_unchecked(&b)] = C64::new(amp, 0.0);
        }
        psi.with_labels(labels)
    }
}

/// Product of normalized singlet factors over `k`.
pub fn splitting_state(k: &PairSplitting, g: &[f64], include_spectators: bool) -> Result<StateVector> {
    SingletProduct::from_splitting(k, g)?.to_state(include_spectators)
}

fn local_couplings(psi: &StateVector, g: &[f64]) -> Result<Vec<f64>> {
    psi.labels()
        .iter()
        .map(|&l| {
            g.get(l)
                .copied()
                .ok_or_else(|| Error::Domain(format!("no coupling for atom {l}")))
        })
        .collect()
}

fn lowered_space(space: Space) -> Result<Space> {
    match space.sector_excitation() {
        Some(0) | None => Ok(space),
        Some(m) => Space::sector(space.n_atoms(), space.photon_cutoff(), m - 1),
    }
}

/// `sigma_bar = sum_i g_i s_i` on `space` (photon register untouched).
///
/// On a sector-`m` space the codomain is sector `m - 1`; lowering sector 0
/// gives the zero map into sector 0.
pub fn collective_lowering(g: &[f64], space: Space) -> Result<Operator> {
    if g.len() != space.n_atoms() {
        return Err(Error::Dimension { expected: space.n_atoms(), found: g.len() });
    }
    let codomain = lowered_space(space)?;
    let mut entries = Vec::new();
    for (col, b) in space.basis().enumerate() {
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 && b.is_excited(i) {
                let row = codomain.index_unchecked(&b.with_atom(i, false));
                entries.push((row, col, C64::new(gi, 0.0)));
            }
        }
    }
    Operator::new(space, codomain, entries)
}

/// `sigma_bar+ = sum_i g_i s+_i`, mapping sector `m` to sector `m + 1`.
pub fn collective_raising(g: &[f64], space: Space) -> Result<Operator> {
    if g.len() != space.n_atoms() {
        return Err(Error::Dimension { expected: space.n_atoms(), found: g.len() });
    }
    let codomain = match space.sector_excitation() {
        None => space,
        Some(m) => Space::sector(space.n_atoms(), space.photon_cutoff(), m + 1)?,
    };
    let mut entries = Vec::new();
    for (col, b) in space.basis().enumerate() {
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 && !b.is_excited(i) {
                let row = codomain.index_unchecked(&b.with_atom(i, true));
                entries.push((row, col, C64::new(gi, 0.0)));
            }
        }
    }
    Operator::new(space, codomain, entries)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkCheck {
    pub dark: bool,
    /// `||sigma_bar psi||`.
    pub residual: f64,
}

/// Whether `psi` is annihilated by `sigma_bar`, within `tol * ||psi||`.
///
/// `g` is indexed by global atom label.
pub fn is_dark(psi: &StateVector, g: &[f64], tol: f64) -> Result<DarkCheck> {
    let local = local_couplings(psi, g)?;
    let residual = collective_lowering(&local, psi.space())?.apply(psi)?.norm();
    Ok(DarkCheck { dark: residual <= tol * psi.norm(), residual })
}

/// Norm of `sigma_bar+ psi`.
pub fn raising_residual(psi: &StateVector, g: &[f64]) -> Result<f64> {
    let local = local_couplings(psi, g)?;
    Ok(collective_raising(&local, psi.space())?.apply(psi)?.norm())
}

/// Dimension of the kernel of `sigma_bar` on the `m`-excitation atomic
/// sector, from the numerical rank of the restricted map.
pub fn dark_dimension(g: &[f64], m: usize) -> Result<usize> {
    let space = Space::atoms_sector(g.len(), m)?;
    if m == 0 {
        return Ok(space.dim());
    }
    let lower = collective_lowering(g, space)?.to_dense();
    Ok(space.dim() - linalg::rank(&lower))
}

/// Orthonormal basis of the dark subspace of the `m`-excitation sector.
pub fn dark_basis(g: &[f64], m: usize) -> Result<Vec<StateVector>> {
    let space = Space::atoms_sector(g.len(), m)?;
    let kernel = if m == 0 {
        nalgebra::DMatrix::identity(space.dim(), space.dim())
    } else {
        linalg::kernel_basis(&collective_lowering(g, space)?.to_dense())
    };
    kernel
        .column_iter()
        .map(|col| StateVector::new(space, col.iter().copied().collect()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenCheck {
    pub dark: DarkCheck,
    /// Rayleigh quotient of `H` on `psi (x) |0>_photon`.
    pub eigenvalue: f64,
    /// `||H v - E v||`.
    pub residual: f64,
    pub is_eigenstate: bool,
}

/// Check that a dark atomic state with the field in vacuum is an eigenvector
/// of the Hamiltonian.
pub fn is_dark_eigenstate(psi: &StateVector, params: &ModelParams) -> Result<EigenCheck> {
    if !psi.has_identity_labels() || psi.space().n_atoms() != params.n_atoms() {
        return domain("state must cover every atom of the model in label order");
    }
    let g = params.couplings();
    let dark = is_dark(psi, &g, DARK_TOL)?;
    let v = psi.normalize()?.with_photon_register(0, 1)?;
    let hv = build_hamiltonian(params, v.space())?.apply(&v)?;
    let eigenvalue = v.inner(&hv)?.re;
    let residual = hv.sub(&v.scale(C64::new(eigenvalue, 0.0)))?.norm();
    Ok(EigenCheck { dark, eigenvalue, residual, is_eigenstate: dark.dark && residual <= 1e-10 })
}

/// Two-atom amplitudes in the `|00>, |01>, |10>, |11>` basis (first atom is
/// the high bit).
pub type PairAmps = [C64; 4];

/// Split a two-atom state against `sigma_bar = c_0 s_0 + c_1 s_1`: returns the
/// bright probability (relative to the state norm) and the unnormalized dark
/// component.
pub fn pair_dark_split(psi: &PairAmps, c: [f64; 2]) -> (f64, PairAmps) {
    let zero = C64::new(0.0, 0.0);
    let total: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    if total == 0.0 {
        return (0.0, *psi);
    }
    let mut dark = [psi[0], zero, zero, zero];
    // one excitation: kernel direction c_0 |01> - c_1 |10>
    let n = c[0].hypot(c[1]);
    if n == 0.0 {
        dark = *psi;
    } else {
        let (u01, u10) = (c[0] / n, -c[1] / n);
        let proj = psi[1] * u01 + psi[2] * u10;
        dark[1] = proj * u01;
        dark[2] = proj * u10;
    }
    let kept: f64 = dark.iter().map(|a| a.norm_sqr()).sum();
    ((1.0 - kept / total).clamp(0.0, 1.0), dark)
}

/// `sigma_bar psi` for a two-atom state.
pub fn pair_lower(psi: &PairAmps, c: [f64; 2]) -> PairAmps {
    let zero = C64::new(0.0, 0.0);
    [psi[1] * c[1] + psi[2] * c[0], psi[3] * c[0], psi[3] * c[1], zero]
}

pub fn pair_normalize(psi: &PairAmps) -> Option<PairAmps> {
    let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    (n > 0.0).then(|| psi.map(|a| a / n))
}

/// Definite two-atom basis state.
pub fn pair_basis(first_excited: bool, second_excited: bool) -> PairAmps {
    let mut out = [C64::new(0.0, 0.0); 4];
    out[(usize::from(first_excited) << 1) | usize::from(second_excited)] = C64::new(1.0, 0.0);
    out
}

/// Probability that the atom stored as `which` (0 or 1) is excited.
pub fn pair_excitation_probability(psi: &PairAmps, which: usize) -> f64 {
    let total: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    let mask = if which == 0 { 2 } else { 1 };
    psi.iter()
        .enumerate()
        .filter(|&(k, _)| k & mask != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum::<f64>()
        / total
}
