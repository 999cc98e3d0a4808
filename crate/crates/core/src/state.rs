//! Basis labelling and state vectors for one cavity mode plus `N` two-level
//! atoms.
//!
//! Canonical ordering is photon-major: all states with `n = 0` photons come
//! first, then `n = 1`, and so on up to the cutoff. Within one photon number
//! the atomic configuration is read as a big-endian integer, atom 0 being the
//! most significant bit. A space may be restricted to a single excitation
//! sector, in which case only basis states with `n + popcount(bits) = m` are
//! kept, in the same relative order.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Largest atom count a basis state can carry (bits live in a `u64`).
pub const MAX_ATOMS: usize = 62;

/// Binomial coefficient, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// One photon-number/atomic-configuration basis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    photons: usize,
    bits: u64,
    n_atoms: usize,
}

impl BasisState {
    /// Build from a photon count and atomic digits (0 = ground, 1 = excited).
    pub fn new(photons: usize, digits: &[u8]) -> Result<Self> {
        if digits.len() > MAX_ATOMS {
            return domain(format!("at most {MAX_ATOMS} atoms supported"));
        }
        let mut bits = 0u64;
        for &d in digits {
            bits <<= 1;
            match d {
                0 => {}
                1 => bits |= 1,
                _ => return domain(format!("atomic digit {d} is not 0 or 1")),
            }
        }
        Ok(Self { photons, bits, n_atoms: digits.len() })
    }

    pub(crate) fn from_raw(photons: usize, bits: u64, n_atoms: usize) -> Self {
        Self { photons, bits, n_atoms }
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Atomic configuration as a big-endian integer.
    pub fn bits(&self) -> u64 {
        self.bits
    }

    fn mask(&self, atom: usize) -> u64 {
        1u64 << (self.n_atoms - 1 - atom)
    }

    pub fn is_excited(&self, atom: usize) -> bool {
        self.bits & self.mask(atom) != 0
    }

    /// Copy with atom `atom` set to `excited`.
    pub fn with_atom(&self, atom: usize, excited: bool) -> Self {
        let m = self.mask(atom);
        let bits = if excited { self.bits | m } else { self.bits & !m };
        Self { bits, ..*self }
    }

    pub fn with_photons(&self, photons: usize) -> Self {
        Self { photons, ..*self }
    }

    pub fn excitation(&self) -> usize {
        self.photons + self.bits.count_ones() as usize
    }

    pub fn digits(&self) -> Vec<u8> {
        (0..self.n_atoms).map(|i| u8::from(self.is_excited(i))).collect()
    }
}

impl std::fmt::Display for BasisState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|{},", self.photons)?;
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        write!(f, ">")
    }
}

/// Hilbert space descriptor: atom count, photon cutoff and an optional
/// excitation-sector restriction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Space {
    n_atoms: usize,
    photon_cutoff: usize,
    sector: Option<usize>,
}

impl Space {
    /// Unrestricted space with photon numbers `0..=photon_cutoff`.
    pub fn full(n_atoms: usize, photon_cutoff: usize) -> Result<Self> {
        if n_atoms > MAX_ATOMS {
            return domain(format!("at most {MAX_ATOMS} atoms supported"));
        }
        let dim = 1u128
            .checked_shl(n_atoms as u32)
            .map(|d| d * (photon_cutoff as u128 + 1));
        match dim {
            Some(d) if d <= (usize::MAX >> 1) as u128 => {}
            _ => return domain(format!("full space with {n_atoms} atoms is too large")),
        }
        Ok(Self { n_atoms, photon_cutoff, sector: None })
    }

    /// Space restricted to total excitation `m`.
    pub fn sector(n_atoms: usize, photon_cutoff: usize, m: usize) -> Result<Self> {
        if n_atoms > MAX_ATOMS {
            return domain(format!("at most {MAX_ATOMS} atoms supported"));
        }
        if m > n_atoms + photon_cutoff {
            return domain(format!(
                "sector {m} is empty for {n_atoms} atoms and photon cutoff {photon_cutoff}"
            ));
        }
        Ok(Self { n_atoms, photon_cutoff, sector: Some(m) })
    }

    /// Atoms only (no photon register), full space.
    pub fn atoms(n_atoms: usize) -> Result<Self> {
        Self::full(n_atoms, 0)
    }

    /// Atoms only, restricted to `m` excitations.
    pub fn atoms_sector(n_atoms: usize, m: usize) -> Result<Self> {
        Self::sector(n_atoms, 0, m)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn photon_cutoff(&self) -> usize {
        self.photon_cutoff
    }

    pub fn sector_excitation(&self) -> Option<usize> {
        self.sector
    }

    /// Photon numbers present in this space, ascending.
    fn photon_range(&self) -> std::ops::RangeInclusive<usize> {
        match self.sector {
            None => 0..=self.photon_cutoff,
            Some(m) => m.saturating_sub(self.n_atoms)..=m.min(self.photon_cutoff),
        }
    }

    /// Number of basis states carrying `n` photons.
    fn block_len(&self, n: usize) -> usize {
        match self.sector {
            None => 1usize << self.n_atoms,
            Some(m) => binomial(self.n_atoms, m - n) as usize,
        }
    }

    pub fn dim(&self) -> usize {
        self.photon_range().map(|n| self.block_len(n)).sum()
    }

    /// Offset of the first basis state with `n` photons.
    fn block_offset(&self, n: usize) -> usize {
        let start = *self.photon_range().start();
        (start..n).map(|k| self.block_len(k)).sum()
    }

    pub fn contains(&self, b: &BasisState) -> bool {
        b.n_atoms == self.n_atoms
            && b.photons <= self.photon_cutoff
            && self.sector.is_none_or(|m| b.excitation() == m)
    }

    /// Position of `b` in the canonical ordering.
    pub fn index_of(&self, b: &BasisState) -> Result<usize> {
        if b.n_atoms != self.n_atoms {
            return domain(format!(
                "basis state has {} atoms, space has {}",
                b.n_atoms, self.n_atoms
            ));
        }
        if b.photons > self.photon_cutoff {
            return domain(format!(
                "photon number {} exceeds cutoff {}",
                b.photons, self.photon_cutoff
            ));
        }
        if let Some(m) = self.sector {
            if b.excitation() != m {
                return domain(format!("{b} lies outside excitation sector {m}"));
            }
        }
        Ok(self.index_unchecked(b))
    }

    pub(crate) fn index_unchecked(&self, b: &BasisState) -> usize {
        match self.sector {
            None => (b.photons << self.n_atoms) + b.bits as usize,
            Some(_) => self.block_offset(b.photons) + colex_rank(b.bits) as usize,
        }
    }

    /// Basis state at `index` in the canonical ordering.
    pub fn basis_state(&self, index: usize) -> Result<BasisState> {
        if index >= self.dim() {
            return domain(format!("index {index} out of range for dimension {}", self.dim()));
        }
        let mut rest = index;
        for n in self.photon_range() {
            let len = self.block_len(n);
            if rest < len {
                let bits = match self.sector {
                    None => rest as u64,
                    Some(m) => colex_unrank(rest as u64, m - n),
                };
                return Ok(BasisState::from_raw(n, bits, self.n_atoms));
            }
            rest -= len;
        }
        unreachable!("index checked against dimension")
    }

    /// All basis states in canonical order.
    pub fn basis(&self) -> impl Iterator<Item = BasisState> + '_ {
        let n_atoms = self.n_atoms;
        let sector = self.sector;
        self.photon_range().flat_map(move |n| {
            let len = self.block_len(n);
            (0..len).map(move |r| {
                let bits = match sector {
                    None => r as u64,
                    Some(m) => colex_unrank(r as u64, m - n),
                };
                BasisState::from_raw(n, bits, n_atoms)
            })
        })
    }

    /// The sectors making up this space, ascending.
    pub fn sectors(&self) -> Vec<Space> {
        match self.sector {
            Some(_) => vec![*self],
            None => (0..=self.n_atoms + self.photon_cutoff)
                .map(|m| Space { sector: Some(m), ..*self })
                .collect(),
        }
    }
}

/// Rank of a bit pattern among patterns with the same popcount, in ascending
/// numeric order (combinatorial number system).
fn colex_rank(bits: u64) -> u64 {
    let mut rank = 0u64;
    let mut seen = 0usize;
    let mut rest = bits;
    while rest != 0 {
        let p = rest.trailing_zeros() as usize;
        seen += 1;
        rank += binomial(p, seen);
        rest &= rest - 1;
    }
    rank
}

fn colex_unrank(mut rank: u64, k: usize) -> u64 {
    let mut bits = 0u64;
    for j in (1..=k).rev() {
        let mut p = j - 1;
        while binomial(p + 1, j) <= rank {
            p += 1;
        }
        bits |= 1 << p;
        rank -= binomial(p, j);
    }
    bits
}

/// Complex amplitudes over a [`Space`], in canonical order.
///
/// `labels[q]` is the global index of the atom stored as local qubit `q`; it
/// defaults to `0..n_atoms` and lets subsystem states be combined with
/// [`StateVector::tensor`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: Space,
    labels: Vec<usize>,
    amps: Vec<C64>,
}

/// Outcome of projecting onto a fixed photon number.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonProjection {
    pub probability: f64,
    /// Renormalized atomic state, `None` when the outcome has probability 0.
    pub state: Option<StateVector>,
}

impl StateVector {
    pub fn new(space: Space, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::Dimension { expected: space.dim(), found: amps.len() });
        }
        Ok(Self { labels: (0..space.n_atoms).collect(), space, amps })
    }

    pub fn zeros(space: Space) -> Self {
        Self {
            labels: (0..space.n_atoms).collect(),
            amps: vec![C64::new(0.0, 0.0); space.dim()],
            space,
        }
    }

    /// The basis vector `|b>`.
    pub fn basis(space: Space, b: &BasisState) -> Result<Self> {
        let mut psi = Self::zeros(space);
        let i = space.index_of(b)?;
        psi.amps[i] = C64::new(1.0, 0.0);
        Ok(psi)
    }

    /// Sum of `c |b>` terms (not normalized).
    pub fn from_terms(space: Space, terms: &[(BasisState, C64)]) -> Result<Self> {
        let mut psi = Self::zeros(space);
        for (b, c) in terms {
            let i = space.index_of(b)?;
            psi.amps[i] += c;
        }
        Ok(psi)
    }

    /// Relabel the local qubits with global atom indices.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.space.n_atoms {
            return Err(Error::Dimension { expected: self.space.n_atoms, found: labels.len() });
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return domain("atom labels must be distinct");
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub(crate) fn has_identity_labels(&self) -> bool {
        self.labels.iter().enumerate().all(|(q, &l)| q == l)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn amplitude(&self, b: &BasisState) -> Result<C64> {
        Ok(self.amps[self.space.index_of(b)?])
    }

    /// `(basis state, amplitude)` pairs in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (BasisState, C64)> + '_ {
        self.space.basis().zip(self.amps.iter().copied())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|c| *c /= n);
        Ok(out)
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|c| *c *= factor);
        out
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::Dimension { expected: self.space.dim(), found: other.space.dim() });
        }
        if self.labels != other.labels {
            return domain("states act on different atom labels");
        }
        Ok(())
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.check_same_space(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        let mut out = self.clone();
        out.amps.iter_mut().zip(&other.amps).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        let mut out = self.clone();
        out.amps.iter_mut().zip(&other.amps).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// Tensor product; the atoms of `other` follow those of `self`.
    ///
    /// At most one factor may carry a photon register (cutoff > 0) and the
    /// atom labels must be disjoint.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.labels.iter().any(|l| other.labels.contains(l)) {
            return domain("tensor factors share atom labels");
        }
        if self.space.photon_cutoff > 0 && other.space.photon_cutoff > 0 {
            return domain("tensor factors both carry a photon register");
        }
        let n_atoms = self.space.n_atoms + other.space.n_atoms;
        let cutoff = self.space.photon_cutoff.max(other.space.photon_cutoff);
        let space = match (self.space.sector, other.space.sector) {
            (Some(a), Some(b)) => Space::sector(n_atoms, cutoff, a + b)?,
            _ => Space::full(n_atoms, cutoff)?,
        };
        let mut out = Self::zeros(space);
        let shift = other.space.n_atoms;
        for (ba, ca) in self.iter() {
            if ca == C64::new(0.0, 0.0) {
                continue;
            }
            for (bb, cb) in other.iter() {
                let b = BasisState::from_raw(
                    ba.photons + bb.photons,
                    (ba.bits << shift) | bb.bits,
                    n_atoms,
                );
                out.amps[space.index_unchecked(&b)] += ca * cb;
            }
        }
        out.labels = self.labels.iter().chain(&other.labels).copied().collect();
        Ok(out)
    }

    /// Project onto photon number `n` and return the renormalized atomic
    /// state together with its Born probability.
    pub fn project_photon_number(&self, n: usize) -> Result<PhotonProjection> {
        if n > self.space.photon_cutoff {
            return domain(format!(
                "photon number {n} exceeds cutoff {}",
                self.space.photon_cutoff
            ));
        }
        let atoms = match self.space.sector {
            Some(m) if m < n || m - n > self.space.n_atoms => {
                return Ok(PhotonProjection { probability: 0.0, state: None })
            }
            Some(m) => Space::atoms_sector(self.space.n_atoms, m - n)?,
            None => Space::atoms(self.space.n_atoms)?,
        };
        let mut out = Self::zeros(atoms);
        out.labels = self.labels.clone();
        for (b, c) in self.iter().filter(|(b, _)| b.photons == n) {
            out.amps[atoms.index_unchecked(&b.with_photons(0))] = c;
        }
        let probability = out.norm_sqr();
        if probability == 0.0 {
            return Ok(PhotonProjection { probability, state: None });
        }
        Ok(PhotonProjection { probability, state: Some(out.normalize()?) })
    }

    /// Embed an atoms-only state into a space with a photon register, with
    /// the field in `|photons>`.
    pub fn with_photon_register(&self, photons: usize, photon_cutoff: usize) -> Result<Self> {
        if self.space.photon_cutoff != 0 {
            return domain("state already carries a photon register");
        }
        if photons > photon_cutoff {
            return domain(format!("photon number {photons} exceeds cutoff {photon_cutoff}"));
        }
        let n = self.space.n_atoms;
        let space = match self.space.sector {
            Some(m) => Space::sector(n, photon_cutoff, m + photons)?,
            None => Space::full(n, photon_cutoff)?,
        };
        let mut out = Self::zeros(space);
        out.labels = self.labels.clone();
        for (b, c) in self.iter() {
            out.amps[space.index_unchecked(&b.with_photons(photons))] = c;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct StateWire {
    n_atoms: usize,
    photon_cutoff: usize,
    sector: Option<usize>,
    amplitudes: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<usize>>,
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateWire {
            n_atoms: self.space.n_atoms,
            photon_cutoff: self.space.photon_cutoff,
            sector: self.space.sector,
            amplitudes: self.amps.iter().map(|c| [c.re, c.im]).collect(),
            atoms: (!self.has_identity_labels()).then(|| self.labels.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = StateWire::deserialize(d)?;
        let space = match w.sector {
            Some(m) => Space::sector(w.n_atoms, w.photon_cutoff, m),
            None => Space::full(w.n_atoms, w.photon_cutoff),
        }
        .map_err(D::Error::custom)?;
        let amps = w.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        let psi = StateVector::new(space, amps).map_err(D::Error::custom)?;
        match w.atoms {
            Some(labels) => psi.with_labels(labels).map_err(D::Error::custom),
            None => Ok(psi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn full_space_ordering() {
        let s = Space::full(2, 1).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(s.index_of(&BasisState::new(0, &[0, 0]).unwrap()).unwrap(), 0);
        // four n = 0 states precede |1,00>
        assert_eq!(s.index_of(&BasisState::new(1, &[0, 0]).unwrap()).unwrap(), 4);
        assert_eq!(s.index_of(&BasisState::new(0, &[1, 0]).unwrap()).unwrap(), 2);
    }

    #[test]
    fn sector_ordering_matches_enumeration() {
        let s = Space::sector(2, 1, 1).unwrap();
        let listed: Vec<_> = s.basis().collect();
        let expected = vec![
            BasisState::new(0, &[0, 1]).unwrap(),
            BasisState::new(0, &[1, 0]).unwrap(),
            BasisState::new(1, &[0, 0]).unwrap(),
        ];
        assert_eq!(listed, expected);
        assert_eq!(s.index_of(&BasisState::new(0, &[1, 0]).unwrap()).unwrap(), 1);
    }

    #[test]
    fn out_of_space_states_are_rejected() {
        let s = Space::full(2, 1).unwrap();
        assert!(s.index_of(&BasisState::new(2, &[0, 0]).unwrap()).is_err());
        assert!(s.index_of(&BasisState::new(0, &[0, 0, 0]).unwrap()).is_err());
        let sec = Space::sector(2, 1, 1).unwrap();
        assert!(sec.index_of(&BasisState::new(0, &[1, 1]).unwrap()).is_err());
        assert!(Space::sector(2, 1, 4).is_err());
        assert!(BasisState::new(0, &[2]).is_err());
    }

    #[test]
    fn index_round_trip_exhaustive() {
        for n in 0..=12 {
            for cutoff in 0..=2 {
                let full = Space::full(n, cutoff).unwrap();
                for s in std::iter::once(full).chain(full.sectors()) {
                    for i in 0..s.dim() {
                        let b = s.basis_state(i).unwrap();
                        assert_eq!(s.index_of(&b).unwrap(), i);
                    }
                }
            }
        }
    }

    #[test]
    fn sectors_partition_full_space() {
        for n in 0..=8 {
            for cutoff in 0..=2 {
                let full = Space::full(n, cutoff).unwrap();
                let mut seen = std::collections::HashSet::new();
                for s in full.sectors() {
                    let expected: u64 = (0..=s.sector_excitation().unwrap().min(cutoff))
                        .map(|k| binomial(n, s.sector_excitation().unwrap() - k))
                        .sum();
                    assert_eq!(s.dim() as u64, expected);
                    for b in s.basis() {
                        assert!(seen.insert(b), "duplicate {b}");
                    }
                }
                assert_eq!(seen.len(), full.dim());
            }
        }
    }

    #[test]
    fn tensor_basics() {
        let a1 = Space::atoms(1).unwrap();
        let zero = StateVector::basis(a1, &BasisState::new(0, &[0]).unwrap()).unwrap();
        let one = StateVector::basis(a1, &BasisState::new(0, &[1]).unwrap())
            .unwrap()
            .with_labels(vec![1])
            .unwrap();
        let t = zero.tensor(&one).unwrap();
        assert_eq!(t.amplitude(&BasisState::new(0, &[0, 1]).unwrap()).unwrap(), c(1.0));
        assert_eq!(t.labels(), &[0, 1]);

        let (alpha, beta) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let sup = StateVector::new(a1, vec![alpha, beta]).unwrap();
        let zero1 = zero.clone().with_labels(vec![1]).unwrap();
        let t = sup.tensor(&zero1).unwrap();
        assert_eq!(t.amplitude(&BasisState::new(0, &[0, 0]).unwrap()).unwrap(), alpha);
        assert_eq!(t.amplitude(&BasisState::new(0, &[1, 0]).unwrap()).unwrap(), beta);
        assert_eq!(t.amplitude(&BasisState::new(0, &[0, 1]).unwrap()).unwrap(), c(0.0));
    }

    #[test]
    fn tensor_rejects_overlap_and_two_registers() {
        let a1 = Space::atoms(1).unwrap();
        let z = StateVector::zeros(a1);
        assert!(z.tensor(&z).is_err());
        let p = StateVector::zeros(Space::full(1, 1).unwrap());
        let q = StateVector::zeros(Space::full(1, 1).unwrap()).with_labels(vec![5]).unwrap();
        assert!(p.tensor(&q).is_err());
    }

    #[test]
    fn photon_projection() {
        let s = Space::sector(2, 1, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StateVector::from_terms(
            s,
            &[
                (BasisState::new(1, &[0, 0]).unwrap(), c(h)),
                (BasisState::new(0, &[1, 0]).unwrap(), c(h)),
            ],
        )
        .unwrap();
        let p0 = psi.project_photon_number(0).unwrap();
        assert!((p0.probability - 0.5).abs() < 1e-15);
        let st = p0.state.unwrap();
        assert!((st.amplitude(&BasisState::new(0, &[1, 0]).unwrap()).unwrap() - c(1.0)).norm() < 1e-15);

        let only_photon = StateVector::basis(s, &BasisState::new(1, &[0, 0]).unwrap()).unwrap();
        let p = only_photon.project_photon_number(0).unwrap();
        assert_eq!(p.probability, 0.0);
        assert!(p.state.is_none());
        assert!(only_photon.project_photon_number(2).is_err());
    }

    #[test]
    fn inner_product_basics() {
        let a1 = Space::atoms(1).unwrap();
        let zero = StateVector::basis(a1, &BasisState::new(0, &[0]).unwrap()).unwrap();
        let one = StateVector::basis(a1, &BasisState::new(0, &[1]).unwrap()).unwrap();
        assert_eq!(zero.inner(&one).unwrap(), c(0.0));
        assert_eq!(zero.inner(&zero).unwrap(), c(1.0));
        let other = StateVector::zeros(Space::atoms(2).unwrap());
        assert!(zero.inner(&other).is_err());
    }

    #[test]
    fn normalize_rejects_zero() {
        let z = StateVector::zeros(Space::atoms(2).unwrap());
        assert!(matches!(z.normalize(), Err(Error::ZeroNorm)));
    }
}
