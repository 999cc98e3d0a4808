//! Tavis-Cummings Hamiltonian in the rotating-wave approximation, with
//! per-atom detunings and coupling overrides, and unitary evolution.
//!
//! Units: hbar = 1, energies are angular frequencies.
//!
//! ```text
//! H = omega a+a + sum_i (omega + delta_i) s+_i s_i + sum_i g_i (a+ s_i + a s+_i)
//! g_i = sqrt(omega / V) d_a sin(pi x_i / L)
//! ```

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::Spectral;
use crate::operator::Operator;
use crate::state::{BasisState, Space, StateVector};

/// Couplings at or above this fraction of `omega` leave the weak-coupling
/// regime.
pub const RWA_WARN_RATIO: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub omega: f64,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(rename = "d_a")]
    pub dipole: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomConfig {
    /// Position along the cavity axis, `0 <= x <= L`.
    pub x: f64,
    /// Detuning of the atomic transition from `omega`.
    #[serde(default)]
    pub delta: f64,
    /// Explicit coupling replacing the position formula.
    #[serde(default)]
    pub g_override: Option<f64>,
    /// Additive coupling shift (Stark jumps).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub g_shift: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl AtomConfig {
    pub fn at(x: f64) -> Self {
        Self { x, delta: 0.0, g_override: None, g_shift: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(flatten)]
    pub cavity: CavityParams,
    pub atoms: Vec<AtomConfig>,
}

impl ModelParams {
    /// Default cavity (`omega = L = V = 1`, `d_a = 0.05`) with `n` atoms at
    /// `x_i = (i + 1) / (n + 1)`.
    pub fn default_for(n: usize) -> Self {
        Self {
            cavity: CavityParams { omega: 1.0, length: 1.0, volume: 1.0, dipole: 0.05 },
            atoms: (0..n).map(|i| AtomConfig::at((i + 1) as f64 / (n + 1) as f64)).collect(),
        }
    }

    /// Cavity with every atom coupled by an explicit `g` override.
    pub fn with_couplings(omega: f64, g: &[f64]) -> Self {
        Self {
            cavity: CavityParams { omega, length: 1.0, volume: 1.0, dipole: 1.0 },
            atoms: g
                .iter()
                .map(|&g| AtomConfig { g_override: Some(g), ..AtomConfig::at(0.5) })
                .collect(),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cavity;
        for (name, v) in [("omega", c.omega), ("L", c.length), ("V", c.volume), ("d_a", c.dipole)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Params(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.atoms.is_empty() {
            return Err(Error::Params("at least one atom is required".into()));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.g_override.is_none() && !(0.0..=c.length).contains(&a.x) {
                return Err(Error::Params(format!("atom {i} at x = {} lies outside [0, L]", a.x)));
            }
            if !a.delta.is_finite() || !a.g_shift.is_finite() {
                return Err(Error::Params(format!("atom {i} has a non-finite shift")));
            }
            let g = self.coupling_unchecked(i);
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Params(format!("atom {i} has coupling {g}")));
            }
        }
        Ok(())
    }

    fn coupling_unchecked(&self, i: usize) -> f64 {
        let a = &self.atoms[i];
        let c = &self.cavity;
        let base = a.g_override.unwrap_or_else(|| {
            (c.omega / c.volume).sqrt() * c.dipole * (std::f64::consts::PI * a.x / c.length).sin()
        });
        base + a.g_shift
    }

    /// Coupling `g_i` of atom `atom`.
    pub fn coupling_strength(&self, atom: usize) -> Result<f64> {
        if atom >= self.atoms.len() {
            return domain(format!("atom index {atom} out of range for {} atoms", self.atoms.len()));
        }
        Ok(self.coupling_unchecked(atom))
    }

    pub fn couplings(&self) -> Vec<f64> {
        (0..self.atoms.len()).map(|i| self.coupling_unchecked(i)).collect()
    }

    /// True when some coupling reaches `RWA_WARN_RATIO * omega`.
    pub fn rwa_violated(&self) -> bool {
        self.couplings()
            .iter()
            .any(|&g| g >= RWA_WARN_RATIO * self.cavity.omega)
    }

    /// Parameters for a subset of the atoms, in the given order.
    pub fn subset(&self, atoms: &[usize]) -> Result<Self> {
        let picked = atoms
            .iter()
            .map(|&i| {
                self.atoms
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("atom index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cavity: self.cavity.clone(), atoms: picked })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

/// Assemble the Hamiltonian over `space`.
pub fn build_hamiltonian(params: &ModelParams, space: Space) -> Result<Operator> {
    params.validate()?;
    let n = space.n_atoms();
    if n != params.n_atoms() {
        return Err(Error::Dimension { expected: params.n_atoms(), found: n });
    }
    let omega = params.cavity.omega;
    let g = params.couplings();
    let mut entries = Vec::new();
    for (col, b) in space.basis().enumerate() {
        let mut diag = b.photons() as f64 * omega;
        for i in 0..n {
            if b.is_excited(i) {
                diag += omega + params.atoms[i].delta;
            }
        }
        entries.push((col, col, C64::new(diag, 0.0)));
        // a+ s_i : |n, ..1_i..> -> sqrt(n+1) |n+1, ..0_i..>, plus its adjoint
        if b.photons() < space.photon_cutoff() {
            let amp = (b.photons() as f64 + 1.0).sqrt();
            for i in (0..n).filter(|&i| b.is_excited(i) && g[i] != 0.0) {
                let target = b.with_atom(i, false).with_photons(b.photons() + 1);
                let row = space.index_unchecked(&target);
                let v = C64::new(g[i] * amp, 0.0);
                entries.push((row, col, v));
                entries.push((col, row, v));
            }
        }
    }
    Operator::new(space, space, entries)
}

/// Total excitation operator `a+a + sum_i s+_i s_i` (diagonal).
pub fn excitation_operator(space: Space) -> Operator {
    let entries = space
        .basis()
        .enumerate()
        .map(|(i, b)| (i, i, C64::new(b.excitation() as f64, 0.0)))
        .collect();
    Operator::new(space, space, entries).expect("diagonal entries are in range")
}

/// Operator exchanging atoms `i` and `j`.
pub fn atom_swap(space: Space, i: usize, j: usize) -> Result<Operator> {
    let n = space.n_atoms();
    if i >= n || j >= n {
        return domain(format!("swap ({i}, {j}) out of range for {n} atoms"));
    }
    let entries = space
        .basis()
        .enumerate()
        .map(|(col, b)| {
            let swapped = b.with_atom(i, b.is_excited(j)).with_atom(j, b.is_excited(i));
            (space.index_unchecked(&swapped), col, C64::new(1.0, 0.0))
        })
        .collect();
    Operator::new(space, space, entries)
}

/// `exp(-i H t) psi0` by eigendecomposition of each excitation sector.
pub fn evolve(h: &Operator, psi0: &StateVector, t: f64) -> Result<StateVector> {
    Spectral::new(h)?.evolve(psi0, t)
}

/// Expectation value of the total excitation number.
pub fn excitation_number(psi: &StateVector) -> f64 {
    psi.iter()
        .map(|(b, c)| b.excitation() as f64 * c.norm_sqr())
        .sum::<f64>()
        / psi.norm_sqr()
}

/// Single-excitation basis state with the photon in the cavity and all atoms
/// in the ground state.
pub fn photon_vacuum_atoms(n_atoms: usize) -> Result<BasisState> {
    BasisState::new(1, &vec![0; n_atoms])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cavity() -> ModelParams {
        ModelParams {
            cavity: CavityParams { omega: 2.0, length: 3.0, volume: 4.0, dipole: 0.1 },
            atoms: vec![AtomConfig::at(1.5), AtomConfig::at(0.0), AtomConfig::at(0.5)],
        }
    }

    #[test]
    fn coupling_formula() {
        let p = cavity();
        let top = (2.0f64 / 4.0).sqrt() * 0.1;
        assert!((p.coupling_strength(0).unwrap() - top).abs() < 1e-15);
        assert_eq!(p.coupling_strength(1).unwrap(), 0.0);
        assert!((p.coupling_strength(2).unwrap() - 0.5 * top).abs() < 1e-15);
        assert!(p.coupling_strength(3).is_err());
    }

    #[test]
    fn override_wins_over_position() {
        let mut p = cavity();
        p.atoms[1].g_override = Some(0.3);
        assert_eq!(p.coupling_strength(1).unwrap(), 0.3);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = cavity();
        p.cavity.volume = 0.0;
        assert!(p.validate().is_err());
        let mut p = cavity();
        p.atoms[0].x = 4.0;
        assert!(p.validate().is_err());
        let mut p = cavity();
        p.atoms.clear();
        assert!(p.validate().is_err());
    }

    #[test]
    fn rwa_flag() {
        assert!(!ModelParams::default_for(4).rwa_violated());
        assert!(ModelParams::with_couplings(1.0, &[0.2]).rwa_violated());
    }

    #[test]
    fn single_atom_block() {
        let p = ModelParams::with_couplings(1.0, &[0.05]);
        let s = Space::sector(1, 1, 1).unwrap();
        let h = build_hamiltonian(&p, s).unwrap().to_dense();
        // basis: |0,1>, |1,0>
        assert_eq!(h[(0, 0)].re, 1.0);
        assert_eq!(h[(1, 1)].re, 1.0);
        assert_eq!(h[(0, 1)].re, 0.05);
        let ev = Spectral::new(&build_hamiltonian(&p, s).unwrap()).unwrap().eigenvalues();
        assert!((ev[0] - 0.95).abs() < 1e-14 && (ev[1] - 1.05).abs() < 1e-14);
    }

    #[test]
    fn vacuum_rabi_half_cycle() {
        let g = 0.05;
        let p = ModelParams::with_couplings(1.0, &[g]);
        let s = Space::sector(1, 1, 1).unwrap();
        let h = build_hamiltonian(&p, s).unwrap();
        let psi0 = StateVector::basis(s, &BasisState::new(1, &[0]).unwrap()).unwrap();
        let t = PI / (2.0 * g);
        let psi = evolve(&h, &psi0, t).unwrap();
        // exp(-i omega t) * (-i) |0,1>, closed form of the 2x2 exponential
        let expected = C64::new(0.0, -1.0) * C64::new(0.0, -t).exp();
        let got = psi.amplitude(&BasisState::new(0, &[1]).unwrap()).unwrap();
        assert!((got - expected).norm() < 1e-10);
        assert!(evolve(&h, &psi0, 0.0).unwrap().sub(&psi0).unwrap().norm() < 1e-15);
    }

    #[test]
    fn excitation_number_examples() {
        let s = Space::full(2, 1).unwrap();
        let one = StateVector::basis(s, &BasisState::new(1, &[0, 0]).unwrap()).unwrap();
        assert_eq!(excitation_number(&one), 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mix = StateVector::from_terms(
            s,
            &[
                (BasisState::new(1, &[0, 0]).unwrap(), C64::new(h, 0.0)),
                (BasisState::new(0, &[1, 1]).unwrap(), C64::new(h, 0.0)),
            ],
        )
        .unwrap();
        assert!((excitation_number(&mix) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn wrong_atom_count_rejected() {
        let p = ModelParams::with_couplings(1.0, &[0.1, 0.1]);
        assert!(build_hamiltonian(&p, Space::full(3, 1).unwrap()).is_err());
    }

    #[test]
    fn params_json_shape() {
        let p = ModelParams::default_for(2);
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        for key in ["omega", "L", "V", "d_a", "atoms"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["atoms"][0]["g_override"].is_null());
        assert_eq!(ModelParams::from_json(&p.to_json().unwrap()).unwrap(), p);
    }
}
