//! Singlet preparation by a Stark jump.
//!
//! Two atoms start in `|1>_photon |00>_atoms`. During a random hold time the
//! target atom carries a Stark shift (`delta += ds`, `g += dg`); the shift is
//! then switched off abruptly. Success means the field is empty and the pair
//! sits in the dark singlet of the restored couplings, so the success
//! probability is `|<singlet, 0 | psi(dt)>|^2`. Bright or photonic components
//! eventually radiate into the detector and count as failure.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dark::{singlet_pair, PairSplitting, SingletFactor, SingletProduct};
use crate::error::{domain, Error, Result};
use crate::hamiltonian::{build_hamiltonian, photon_vacuum_atoms, ModelParams};
use crate::linalg::Spectral;
use crate::rng::stream_rng;
use crate::state::{Space, StateVector};

/// Hold-time multiple of `pi / g_mean` used when no explicit `T_max` is set.
pub const DEFAULT_HOLD_PERIODS: f64 = 20.0;

/// Description of one Stark jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarkJumpSpec {
    /// Index of the shifted atom within the model.
    pub target_atom: usize,
    /// Frequency shift applied to the target during the hold.
    pub ds: f64,
    /// Coupling shift applied to the target during the hold.
    pub dg: f64,
    /// Hold times are drawn uniformly from `[0, hold_time_max]`.
    pub hold_time_max: f64,
}

impl StarkJumpSpec {
    /// Jump on `target_atom` with `T_max = 20 pi / g_mean` of the model.
    pub fn with_default_hold(params: &ModelParams, target_atom: usize, ds: f64, dg: f64) -> Self {
        let g = params.couplings();
        let mean = g.iter().sum::<f64>() / g.len().max(1) as f64;
        Self { target_atom, ds, dg, hold_time_max: DEFAULT_HOLD_PERIODS * std::f64::consts::PI / mean }
    }

    pub fn validate(&self, n_atoms: usize) -> Result<()> {
        if self.target_atom >= n_atoms {
            return domain(format!("target atom {} out of range", self.target_atom));
        }
        if !(self.hold_time_max > 0.0 && self.hold_time_max.is_finite()) {
            return domain(format!("T_max must be positive, got {}", self.hold_time_max));
        }
        if !self.ds.is_finite() || !self.dg.is_finite() {
            return domain("Stark shifts must be finite");
        }
        Ok(())
    }

    /// Same jump with both shifts negated.
    pub fn negated(&self) -> Self {
        Self { ds: -self.ds, dg: -self.dg, ..self.clone() }
    }
}

/// Copy of `params` with the jump's shifts added to the target atom.
pub fn shifted_params(params: &ModelParams, spec: &StarkJumpSpec) -> Result<ModelParams> {
    spec.validate(params.n_atoms())?;
    let mut out = params.clone();
    let atom = &mut out.atoms[spec.target_atom];
    atom.delta += spec.ds;
    atom.g_shift += spec.dg;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepOutcome {
    pub hold_time: f64,
    pub singlet_probability: f64,
    /// Weight left in `|1>_photon |00>`.
    pub photon_probability: f64,
    /// Conditional atomic state on success, `None` when success is impossible.
    pub post_state: Option<StateVector>,
}

/// Cached propagator and target for one `(params, spec)` pair.
pub struct PrepModel {
    spectral: Spectral,
    initial: StateVector,
    target: StateVector,
    singlet: SingletFactor,
}

impl PrepModel {
    pub fn new(params: &ModelParams, spec: &StarkJumpSpec) -> Result<Self> {
        if params.n_atoms() != 2 {
            return domain(format!("preparation acts on two atoms, got {}", params.n_atoms()));
        }
        let shifted = shifted_params(params, spec)?;
        shifted.validate()?;
        let space = Space::sector(2, 1, 1)?;
        let h = build_hamiltonian(&shifted, space)?;
        let singlet = singlet_pair(0, 1, &params.couplings())?;
        let target = singlet.to_state().with_labels(vec![0, 1])?.with_photon_register(0, 1)?;
        let initial = StateVector::basis(space, &photon_vacuum_atoms(2)?)?;
        Ok(Self { spectral: Spectral::new(&h)?, initial, target, singlet })
    }

    pub fn state_at(&self, dt: f64) -> Result<StateVector> {
        self.spectral.evolve(&self.initial, dt)
    }

    /// Amplitude `<singlet, 0 | psi(dt)>`.
    pub fn singlet_amplitude(&self, dt: f64) -> Result<C64> {
        self.target.inner(&self.state_at(dt)?)
    }

    pub fn singlet_probability(&self, dt: f64) -> Result<f64> {
        Ok(self.singlet_amplitude(dt)?.norm_sqr())
    }

    pub fn outcome(&self, dt: f64) -> Result<PrepOutcome> {
        let psi = self.state_at(dt)?;
        let p = self.target.inner(&psi)?.norm_sqr();
        let photon_probability = self.initial.inner(&psi)?.norm_sqr();
        let post_state = (p > 0.0).then(|| self.singlet.to_state().with_labels(vec![0, 1])).transpose()?;
        Ok(PrepOutcome { hold_time: dt, singlet_probability: p, photon_probability, post_state })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }
}

/// One S-jump trajectory with hold time `dt`.
pub fn prep_trajectory(params: &ModelParams, spec: &StarkJumpSpec, dt: f64) -> Result<PrepOutcome> {
    PrepModel::new(params, spec)?.outcome(dt)
}

/// How the hold-time average is computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum YieldMethod {
    /// Seeded sampling of uniform hold times.
    MonteCarlo { samples: usize, seed: u64 },
    /// Composite Gauss-Legendre rule with about `nodes` nodes.
    Quadrature { nodes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldEstimate {
    pub mean: f64,
    /// Standard error of the mean (0 for quadrature).
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: Option<u64>,
}

const GL_ORDER: usize = 8;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre polynomial.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            deriv = order as f64 * (x * p - p0) / (x * x - 1.0);
            let step = p / deriv;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * deriv * deriv)));
    }
    out
}

/// Mean singlet probability over uniform hold times in `[0, T_max]`.
pub fn prep_yield(params: &ModelParams, spec: &StarkJumpSpec, method: YieldMethod) -> Result<YieldEstimate> {
    let model = PrepModel::new(params, spec)?;
    yield_of(&model, spec.hold_time_max, method)
}

pub(crate) fn yield_of(model: &PrepModel, t_max: f64, method: YieldMethod) -> Result<YieldEstimate> {
    match method {
        YieldMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return domain("yield estimate needs at least one sample");
            }
            let values: Vec<f64> = (0..samples as u64)
                .into_par_iter()
                .map(|i| {
                    let dt = stream_rng(seed, "prep-yield", i).gen_range(0.0..t_max);
                    model.singlet_probability(dt)
                })
                .collect::<Result<_>>()?;
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Ok(YieldEstimate { mean, stderr: (var / n).sqrt(), n_samples: samples, seed: Some(seed) })
        }
        YieldMethod::Quadrature { nodes } => {
            if nodes == 0 {
                return domain("quadrature needs at least one node");
            }
            let panels = nodes.div_ceil(GL_ORDER);
            let rule = gauss_legendre(GL_ORDER);
            let h = t_max / panels as f64;
            let mut total = 0.0;
            for p in 0..panels {
                let mid = (p as f64 + 0.5) * h;
                for &(x, w) in &rule {
                    total += w * model.singlet_probability(mid + 0.5 * h * x)?;
                }
            }
            Ok(YieldEstimate {
                mean: total * 0.5 * h / t_max,
                stderr: 0.0,
                n_samples: panels * GL_ORDER,
                seed: None,
            })
        }
    }
}

/// Number of attempts until the first success, each succeeding with
/// probability `p`.
pub fn simulate_attempts<R: Rng + ?Sized>(
    pair: (usize, usize),
    p: f64,
    rng: &mut R,
    max_attempts: u64,
) -> Result<u64> {
    if p.is_nan() || p <= 0.0 {
        return Err(Error::PrepExhausted(pair.0, pair.1, max_attempts));
    }
    if p >= 1.0 {
        return Ok(1);
    }
    // Inverse CDF: O(1) for any p, where rejection samplers stall as p -> 0.
    let u: f64 = 1.0 - rng.gen::<f64>();
    let failures = (u.ln() / (-p).ln_1p()).floor();
    let failures = if failures >= u64::MAX as f64 { u64::MAX } else { failures as u64 };
    let attempts = failures.saturating_add(1);
    if attempts > max_attempts {
        return Err(Error::PrepExhausted(pair.0, pair.1, max_attempts));
    }
    Ok(attempts)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepLogEntry {
    pub pair: [usize; 2],
    pub attempts: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepConfig {
    /// Shift applied to the first atom of every pair.
    pub ds: f64,
    pub dg: f64,
    /// `None` uses `20 pi / g_mean` of each pair.
    pub hold_time_max: Option<f64>,
    pub method: YieldMethod,
    pub max_attempts: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            ds: 0.0,
            dg: 0.0,
            hold_time_max: None,
            method: YieldMethod::Quadrature { nodes: 2048 },
            max_attempts: 100_000_000,
        }
    }
}

/// Prepare every pair of `k` in turn, repeating each pair's jump until it
/// succeeds.
pub fn prepare_splitting(
    params: &ModelParams,
    k: &PairSplitting,
    config: &PrepConfig,
    seed: u64,
) -> Result<(SingletProduct, Vec<PrepLogEntry>)> {
    if !k.is_complete() || k.n_atoms() != params.n_atoms() {
        return domain("preparation needs a complete splitting of the model's atoms");
    }
    let mut log = Vec::with_capacity(k.pairs().len());
    for (idx, &(i, j)) in k.pairs().iter().enumerate() {
        let pair_params = params.subset(&[i, j])?;
        let mut spec = StarkJumpSpec::with_default_hold(&pair_params, 0, config.ds, config.dg);
        if let Some(t) = config.hold_time_max {
            spec.hold_time_max = t;
        }
        let y = prep_yield(&pair_params, &spec, config.method)?;
        let mut rng = stream_rng(seed, "prep-attempts", idx as u64);
        let attempts = simulate_attempts((i, j), y.mean, &mut rng, config.max_attempts)?;
        log.push(PrepLogEntry { pair: [i, j], attempts });
    }
    Ok((SingletProduct::from_splitting(k, &params.couplings())?, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> ModelParams {
        ModelParams::with_couplings(1.0, &[0.04, 0.06])
    }

    #[test]
    fn zero_shift_changes_nothing() {
        let p = pair();
        let spec = StarkJumpSpec { target_atom: 0, ds: 0.0, dg: 0.0, hold_time_max: 1.0 };
        assert_eq!(shifted_params(&p, &spec).unwrap(), p);
    }

    #[test]
    fn shift_lands_on_target() {
        let p = ModelParams::default_for(3);
        let spec = StarkJumpSpec { target_atom: 1, ds: 0.1, dg: 0.0, hold_time_max: 1.0 };
        let s = shifted_params(&p, &spec).unwrap();
        assert_eq!(s.atoms[1].delta, 0.1);
        assert_eq!(s.atoms[0].delta, 0.0);
        assert_eq!(s.atoms[2].delta, 0.0);
    }

    #[test]
    fn shift_then_negate_is_bit_exact() {
        let p = ModelParams::default_for(2);
        let spec = StarkJumpSpec { target_atom: 0, ds: 0.1234567, dg: -0.00731, hold_time_max: 1.0 };
        let back = shifted_params(&shifted_params(&p, &spec).unwrap(), &spec.negated()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn bad_spec_rejected() {
        let p = pair();
        let spec = StarkJumpSpec { target_atom: 2, ds: 0.1, dg: 0.0, hold_time_max: 1.0 };
        assert!(shifted_params(&p, &spec).is_err());
        let spec = StarkJumpSpec { target_atom: 0, ds: 0.1, dg: 0.0, hold_time_max: 0.0 };
        assert!(shifted_params(&p, &spec).is_err());
        assert!(PrepModel::new(&ModelParams::with_couplings(1.0, &[0.1; 3]), &StarkJumpSpec {
            target_atom: 0,
            ds: 0.1,
            dg: 0.0,
            hold_time_max: 1.0
        })
        .is_err());
    }

    #[test]
    fn unshifted_jump_never_makes_singlet() {
        let p = pair();
        let spec = StarkJumpSpec { target_atom: 0, ds: 0.0, dg: 0.0, hold_time_max: 1.0 };
        let m = PrepModel::new(&p, &spec).unwrap();
        for k in 0..50 {
            assert!(m.singlet_amplitude(k as f64 * 13.7).unwrap().norm() < 1e-14);
        }
    }

    #[test]
    fn zero_hold_gives_zero() {
        let spec = StarkJumpSpec { target_atom: 0, ds: 0.01, dg: 0.0, hold_time_max: 1.0 };
        let o = prep_trajectory(&pair(), &spec, 0.0).unwrap();
        assert_eq!(o.singlet_probability, 0.0);
        assert!(o.post_state.is_none());
        assert!((o.photon_probability - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        let w: f64 = rule.iter().map(|r| r.1).sum();
        assert!((w - 2.0).abs() < 1e-14);
        let x14: f64 = rule.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert!((x14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn attempts_guard() {
        let mut rng = stream_rng(1, "t", 0);
        assert!(matches!(simulate_attempts((0, 1), 0.0, &mut rng, 10), Err(Error::PrepExhausted(0, 1, 10))));
        assert_eq!(simulate_attempts((0, 1), 1.0, &mut rng, 10).unwrap(), 1);
        assert!(simulate_attempts((0, 1), 1e-12, &mut rng, 10).is_err());
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = StarkJumpSpec { target_atom: 0, ds: 0.01, dg: 0.0, hold_time_max: 1.0 };
        assert!(prep_yield(&pair(), &spec, YieldMethod::MonteCarlo { samples: 0, seed: 1 }).is_err());
    }
}
