//! Two-cavity password verification.
//!
//! The lock holds `N` atoms in a main cavity, in the product of dark singlets
//! over the secret pairing. A password is another pairing. Its pairs are
//! moved one at a time into a control cavity while detector D1 (main) and D2
//! (control) listen. Each pair arriving in control is then hit by repeated
//! coupling jumps (S jumps): an excited pair radiates into D2, a pair in the
//! ground state stays silent. A pair passes when both detectors stay silent
//! during its movement and D2 clicks during its check; the password is
//! accepted when every pair passes.
//!
//! The atomic state is tracked per key singlet: each key pair keeps its own
//! two-atom amplitudes, and atoms of different key pairs are never entangled
//! with each other. Two simulation modes share this state:
//!
//! - [`Mode::Abstract`] draws emissions from fixed event probabilities.
//! - [`Mode::Exact`] ramps couplings along a [`CouplingSchedule`] and reads
//!   emission probabilities off the bright fraction of each affected singlet.
//!
//! Every random decision goes through a [`Chooser`]. [`RngChooser`] samples
//! runs; [`enumerate`] walks the whole event tree and returns each leaf with
//! its exact probability.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dark::{
    pair_basis, pair_dark_split, pair_excitation_probability, pair_lower, pair_normalize, PairAmps,
    PairSplitting, SingletProduct,
};
use crate::error::{domain, Error, Result};
use crate::hamiltonian::ModelParams;
use crate::linalg;
use crate::rng::stream_rng;

/// Choice weights at or below this fraction of their sum count as zero.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Emission-probability increments below this are dropped in exact mode.
pub const HAZARD_FLOOR: f64 = 1e-13;

/// Tolerance for schedule endpoints.
const SCHEDULE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Choosers

/// Source of discrete random decisions.
pub trait Chooser {
    /// Pick an index with probability proportional to `weights`.
    fn choose(&mut self, weights: &[f64]) -> usize;
}

fn valid_options(weights: &[f64]) -> (Vec<usize>, f64) {
    let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let valid = weights
        .iter()
        .enumerate()
        .filter(|&(_, &w)| w > WEIGHT_FLOOR * sum)
        .map(|(k, _)| k)
        .collect();
    (valid, sum)
}

/// Sampling chooser. Draws exactly one uniform per decision, even when the
/// outcome is forced, so runs at different parameters stay aligned on the
/// same random numbers.
pub struct RngChooser<R> {
    rng: R,
}

impl<R: Rng> RngChooser<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: Rng> Chooser for RngChooser<R> {
    fn choose(&mut self, weights: &[f64]) -> usize {
        let u: f64 = self.rng.gen();
        let (valid, _) = valid_options(weights);
        assert!(!valid.is_empty(), "no admissible option among {weights:?}");
        let total: f64 = valid.iter().map(|&k| weights[k]).sum();
        let mut acc = 0.0;
        for &k in &valid {
            acc += weights[k] / total;
            if u < acc {
                return k;
            }
        }
        *valid.last().expect("nonempty")
    }
}

struct Branch {
    choice: usize,
    valid: Vec<usize>,
}

/// Depth-first walker over the decision tree. Each pass replays a fixed
/// prefix of choices and takes the first admissible option beyond it.
#[derive(Default)]
pub struct ScriptChooser {
    path: Vec<Branch>,
    pos: usize,
    probability: f64,
}

impl ScriptChooser {
    pub fn new() -> Self {
        Self { path: Vec::new(), pos: 0, probability: 1.0 }
    }

    /// Probability of the current pass's choices.
    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// Move to the next leaf; `false` once the tree is exhausted.
    fn advance(&mut self) -> bool {
        self.path.truncate(self.pos);
        self.pos = 0;
        self.probability = 1.0;
        while let Some(last) = self.path.last_mut() {
            let at = last.valid.iter().position(|&k| k == last.choice).expect("recorded choice");
            if let Some(&next) = last.valid.get(at + 1) {
                last.choice = next;
                return true;
            }
            self.path.pop();
        }
        false
    }
}

impl Chooser for ScriptChooser {
    fn choose(&mut self, weights: &[f64]) -> usize {
        let (valid, sum) = valid_options(weights);
        assert!(!valid.is_empty(), "no admissible option among {weights:?}");
        let choice = if self.pos < self.path.len() {
            let d = &self.path[self.pos];
            debug_assert_eq!(d.valid, valid, "replay diverged");
            d.choice
        } else {
            self.path.push(Branch { choice: valid[0], valid });
            self.path[self.pos].choice
        };
        self.pos += 1;
        self.probability *= weights[choice] / sum;
        choice
    }
}

/// Run `f` once per leaf of its decision tree and collect
/// `(probability, result)` pairs. `f` must be a deterministic function of the
/// choices it receives.
pub fn enumerate<T, F>(mut f: F) -> Result<Vec<(f64, T)>>
where
    F: FnMut(&mut dyn Chooser) -> Result<T>,
{
    let mut ch = ScriptChooser::new();
    let mut out = Vec::new();
    loop {
        let t = f(&mut ch)?;
        out.push((ch.probability(), t));
        if !ch.advance() {
            return Ok(out);
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration and records

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Main,
    Transit,
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
    #[serde(rename = "lost")]
    Lost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionSource {
    /// A key singlet torn apart by a wrong pair.
    BrokenSinglet,
    /// A moving atom holding a definite excitation.
    UnpairedExcitation,
    /// A correct pair radiating because its atoms moved out of step.
    Asynchrony,
    /// Bright component picked up along an exact-mode coupling schedule.
    Schedule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub location: Location,
    pub detector: Detector,
    pub source: EmissionSource,
    pub atom: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTrialEvent {
    pub pair: [usize; 2],
    #[serde(rename = "match")]
    pub matched: bool,
    pub emissions: Vec<Emission>,
    pub s_jump_click: bool,
    /// S jumps applied before the click (or the cap).
    pub switchings: usize,
}

impl PairTrialEvent {
    pub fn movement_click(&self) -> bool {
        self.emissions.iter().any(|e| e.detector != Detector::Lost)
    }

    pub fn passed(&self) -> bool {
        !self.movement_click() && self.s_jump_click
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Abstract,
    Exact,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Abstract => "abstract",
            Mode::Exact => "exact",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abstract" => Ok(Mode::Abstract),
            "exact" => Ok(Mode::Exact),
            _ => domain(format!("unknown mode {s:?}; expected abstract or exact")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub decision: Decision,
    pub mode: Mode,
    pub seed: u64,
    /// First pair that failed, if any.
    pub rejecting_pair: Option<[usize; 2]>,
    pub events: Vec<PairTrialEvent>,
}

impl Transcript {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Detector efficiencies and movement imperfections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub eta1: f64,
    pub eta2: f64,
    /// Probability that a photon emitted in transit escapes both cavities.
    pub p_transit_loss: f64,
    /// Probability that a correct pair radiates while moving (abstract mode).
    pub asynchrony_epsilon: f64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self { eta1: 1.0, eta2: 1.0, p_transit_loss: 0.0, asynchrony_epsilon: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("p_transit_loss", self.p_transit_loss),
            ("asynchrony_epsilon", self.asynchrony_epsilon),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Params(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Where a photon emitted during movement originates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionSplit {
    pub main: f64,
    pub transit: f64,
    pub control: f64,
}

impl Default for EmissionSplit {
    fn default() -> Self {
        Self { main: 0.4, transit: 0.2, control: 0.4 }
    }
}

impl EmissionSplit {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.main, self.transit, self.control];
        if parts.iter().any(|&q| !(0.0..=1.0).contains(&q)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Params(format!("emission split must be a distribution, got {parts:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub split: EmissionSplit,
    /// Cap on S jumps per pair check.
    pub max_switchings: usize,
    /// Stop at the first failing pair.
    pub early_exit: bool,
    /// Fail a pair as soon as a detector clicks during its movement, without
    /// running its S-jump check.
    pub abort_on_movement_click: bool,
    /// Coupling change of the jumped atom; `None` decouples it fully.
    pub check_dg: Option<f64>,
    /// Steps per coupling schedule (exact mode).
    pub exact_steps: usize,
    /// Steps by which the second atom of a pair trails the first (exact mode).
    pub exact_lag: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            split: EmissionSplit::default(),
            max_switchings: 16,
            early_exit: true,
            abort_on_movement_click: true,
            check_dg: None,
            exact_steps: 64,
            exact_lag: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.max_switchings == 0 {
            return Err(Error::Params("max_switchings must be at least 1".into()));
        }
        if self.exact_steps < 2 {
            return Err(Error::Params("exact_steps must be at least 2".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lock

/// A forged lock: the secret pairing, both cavities, and the singlets held
/// in the main cavity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LockWire", into = "LockWire")]
pub struct LockInstance {
    key: PairSplitting,
    main: ModelParams,
    control: ModelParams,
    singlets: SingletProduct,
}

#[derive(Serialize, Deserialize)]
struct LockWire {
    key: PairSplitting,
    main: ModelParams,
    control: ModelParams,
    singlets: SingletProduct,
}

impl TryFrom<LockWire> for LockInstance {
    type Error = Error;
    fn try_from(w: LockWire) -> Result<Self> {
        let lock = Self::new(w.key, w.main, w.control)?;
        let same = lock.singlets.factors.len() == w.singlets.factors.len()
            && lock.singlets.factors.iter().zip(&w.singlets.factors).all(|(a, b)| {
                a.pair == b.pair && (a.amp01 - b.amp01).abs() <= 1e-12 && (a.amp10 - b.amp10).abs() <= 1e-12
            });
        if !same {
            return domain("stored singlets do not match the key and main-cavity couplings");
        }
        Ok(lock)
    }
}

impl From<LockInstance> for LockWire {
    fn from(l: LockInstance) -> Self {
        Self { key: l.key, main: l.main, control: l.control, singlets: l.singlets }
    }
}

impl LockInstance {
    pub fn new(key: PairSplitting, main: ModelParams, control: ModelParams) -> Result<Self> {
        main.validate()?;
        control.validate()?;
        if !key.is_complete() {
            return domain("the key must pair every atom");
        }
        if key.n_atoms() != main.n_atoms() || key.n_atoms() != control.n_atoms() {
            return Err(Error::Dimension { expected: key.n_atoms(), found: main.n_atoms().min(control.n_atoms()) });
        }
        let singlets = SingletProduct::from_splitting(&key, &main.couplings())?;
        Ok(Self { key, main, control, singlets })
    }

    pub fn key(&self) -> &PairSplitting {
        &self.key
    }

    pub fn main(&self) -> &ModelParams {
        &self.main
    }

    pub fn control(&self) -> &ModelParams {
        &self.control
    }

    pub fn singlets(&self) -> &SingletProduct {
        &self.singlets
    }

    pub fn n_atoms(&self) -> usize {
        self.key.n_atoms()
    }

    /// `||sigma_bar psi||` of the lock state in the main cavity.
    pub fn dark_residual(&self) -> f64 {
        self.singlets.dark_residual(&self.main.couplings())
    }
}

/// Forge a lock on `n_atoms` atoms with a uniformly random secret pairing.
/// The control cavity defaults to a copy of the main one.
pub fn forge_lock(n_atoms: usize, params: &ModelParams, control: Option<&ModelParams>, seed: u64) -> Result<LockInstance> {
    if n_atoms < 2 || !n_atoms.is_multiple_of(2) {
        return domain(format!("a lock needs an even number >= 2 of atoms, got {n_atoms}"));
    }
    if params.n_atoms() != n_atoms {
        return Err(Error::Dimension { expected: n_atoms, found: params.n_atoms() });
    }
    let key = PairSplitting::random(n_atoms, &mut stream_rng(seed, "forge", 0))?;
    let lock = LockInstance::new(key, params.clone(), control.unwrap_or(params).clone())?;
    let r = lock.dark_residual();
    if r >= 1e-12 {
        return domain(format!("forged state is not dark (residual {r:e})"));
    }
    Ok(lock)
}

// ---------------------------------------------------------------------------
// Exact-mode movement

/// Couplings of one moving atom at one schedule step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneCoupling {
    pub main: f64,
    pub ctrl: f64,
}

/// Couplings of the two moving atoms over the course of one movement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSchedule {
    steps: Vec<[LaneCoupling; 2]>,
}

impl CouplingSchedule {
    pub fn new(steps: Vec<[LaneCoupling; 2]>) -> Result<Self> {
        if steps.len() < 2 {
            return domain("a coupling schedule needs at least two steps");
        }
        Ok(Self { steps })
    }

    /// Linear exit `g -> 0` over the first half, linear entry `0 -> g_ctrl`
    /// over the second, with lane 1 trailing lane 0 by `lag` steps.
    pub fn linear(main: [f64; 2], ctrl: [f64; 2], n_steps: usize, lag: usize) -> Result<Self> {
        if n_steps < 2 {
            return domain("a coupling schedule needs at least two steps");
        }
        let lane = |lane: usize, k: usize| {
            let s = (k.saturating_sub(if lane == 1 { lag } else { 0 }) as f64 / n_steps as f64).min(1.0);
            if s <= 0.5 {
                LaneCoupling { main: main[lane] * (1.0 - 2.0 * s), ctrl: 0.0 }
            } else {
                LaneCoupling { main: 0.0, ctrl: ctrl[lane] * (2.0 * s - 1.0) }
            }
        };
        Self::new((0..=n_steps + lag).map(|k| [lane(0, k), lane(1, k)]).collect())
    }

    pub fn steps(&self) -> &[[LaneCoupling; 2]] {
        &self.steps
    }

    /// Check that the schedule starts at the main couplings and ends at the
    /// control couplings.
    pub fn validate(&self, main: [f64; 2], ctrl: [f64; 2]) -> Result<()> {
        let first = self.steps[0];
        let last = self.steps[self.steps.len() - 1];
        for l in 0..2 {
            let close = |a: f64, b: f64| (a - b).abs() <= SCHEDULE_TOL * (1.0 + b.abs());
            if !(close(first[l].main, main[l]) && close(first[l].ctrl, 0.0)) {
                return domain(format!("schedule lane {l} starts at {:?}, expected main coupling {}", first[l], main[l]));
            }
            if !(close(last[l].main, 0.0) && close(last[l].ctrl, ctrl[l])) {
                return domain(format!("schedule lane {l} ends at {:?}, expected control coupling {}", last[l], ctrl[l]));
            }
        }
        Ok(())
    }
}

/// Couplings of a key pair's two atoms at one step, plus where a photon
/// emitted at that step would originate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorStep {
    pub main: [f64; 2],
    pub ctrl: [f64; 2],
    pub location: Location,
}

/// Emission probabilities of one key pair over a movement, by location, and
/// its normalized state given no emission.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactMove {
    pub p_main: f64,
    pub p_transit: f64,
    pub p_control: f64,
    pub no_emission_state: Option<PairAmps>,
}

impl ExactMove {
    pub fn emission_probability(&self) -> f64 {
        self.p_main + self.p_transit + self.p_control
    }
}

fn lowering_rows(c: [f64; 2]) -> [[f64; 4]; 3] {
    // rows of pair_lower: |00>, |01>, |10> components
    [[0.0, c[1], c[0], 0.0], [0.0, 0.0, 0.0, c[0]], [0.0, 0.0, 0.0, c[1]]]
}

/// Orthonormal basis of the states dark in both cavities.
fn joint_kernel(main: [f64; 2], ctrl: [f64; 2]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(6, 4);
    for (r, row) in lowering_rows(main).iter().chain(lowering_rows(ctrl).iter()).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m[(r, c)] = C64::new(v, 0.0);
        }
    }
    linalg::kernel_basis(&m)
}

fn project(psi: &PairAmps, k: &DMatrix<C64>) -> PairAmps {
    let v = DVector::from_column_slice(psi);
    let p = k * k.ad_mul(&v);
    [p[0], p[1], p[2], p[3]]
}

/// Probability that a two-atom state radiates into either cavity, given the
/// couplings of its atoms to the main and control modes.
pub fn bright_fraction(psi: &PairAmps, main: [f64; 2], ctrl: [f64; 2]) -> f64 {
    let total: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let kept: f64 = project(psi, &joint_kernel(main, ctrl)).iter().map(|a| a.norm_sqr()).sum();
    (1.0 - kept / total).clamp(0.0, 1.0)
}

/// Carry a frozen two-atom state through `steps`. The emission probability
/// is the running maximum of the bright fraction; each rise is charged to
/// the location of the step where it occurs.
pub fn exact_move(psi: &PairAmps, steps: &[FactorStep]) -> ExactMove {
    let mut out = ExactMove { p_main: 0.0, p_transit: 0.0, p_control: 0.0, no_emission_state: None };
    let mut running = 0.0;
    for s in steps {
        let b = bright_fraction(psi, s.main, s.ctrl);
        if b > running + HAZARD_FLOOR {
            let inc = b - running;
            running = b;
            match s.location {
                Location::Main => out.p_main += inc,
                Location::Transit => out.p_transit += inc,
                Location::Control => out.p_control += inc,
            }
        }
    }
    if let Some(last) = steps.last() {
        out.no_emission_state = pair_normalize(&project(psi, &joint_kernel(last.main, last.ctrl)));
    }
    if out.emission_probability() >= 1.0 - HAZARD_FLOOR {
        out.no_emission_state = None;
    }
    out
}

// ---------------------------------------------------------------------------
// Protocol run

#[derive(Clone, Debug)]
struct Factor {
    atoms: [usize; 2],
    amps: PairAmps,
    /// Still the untouched key singlet.
    intact: bool,
}

impl Factor {
    fn slot(&self, atom: usize) -> usize {
        if self.atoms[0] == atom {
            0
        } else {
            1
        }
    }
}

fn swap_atoms(psi: &PairAmps) -> PairAmps {
    [psi[0], psi[2], psi[1], psi[3]]
}

/// Protocol state while a password is being checked.
pub struct ProtocolRun<'a> {
    lock: &'a LockInstance,
    det: DetectorModel,
    cfg: &'a ProtocolConfig,
    mode: Mode,
    chooser: &'a mut dyn Chooser,
    g_main: Vec<f64>,
    g_ctrl: Vec<f64>,
    factors: Vec<Factor>,
    atom_factor: Vec<usize>,
    location: Vec<Location>,
}

impl<'a> ProtocolRun<'a> {
    pub fn new(
        lock: &'a LockInstance,
        det: DetectorModel,
        mode: Mode,
        cfg: &'a ProtocolConfig,
        chooser: &'a mut dyn Chooser,
    ) -> Result<Self> {
        det.validate()?;
        cfg.validate()?;
        let n = lock.n_atoms();
        let mut atom_factor = vec![0; n];
        let factors = lock
            .singlets
            .factors
            .iter()
            .enumerate()
            .map(|(k, f)| {
                atom_factor[f.pair.0] = k;
                atom_factor[f.pair.1] = k;
                Factor { atoms: [f.pair.0, f.pair.1], amps: f.pair_amps(), intact: true }
            })
            .collect();
        Ok(Self {
            lock,
            det,
            cfg,
            mode,
            chooser,
            g_main: lock.main.couplings(),
            g_ctrl: lock.control.couplings(),
            factors,
            atom_factor,
            location: vec![Location::Main; n],
        })
    }

    pub fn location(&self, atom: usize) -> Location {
        self.location[atom]
    }

    /// Probability that `atom` is excited.
    pub fn excitation_probability(&self, atom: usize) -> f64 {
        let f = &self.factors[self.atom_factor[atom]];
        pair_excitation_probability(&f.amps, f.slot(atom))
    }

    /// Amplitudes of the key pair holding `atom`, in that pair's atom order.
    pub fn key_pair_state(&self, atom: usize) -> ([usize; 2], PairAmps) {
        let f = &self.factors[self.atom_factor[atom]];
        (f.atoms, f.amps)
    }

    fn choose(&mut self, w: &[f64]) -> usize {
        self.chooser.choose(w)
    }

    fn coin(&mut self) -> bool {
        self.choose(&[0.5, 0.5]) == 0
    }

    fn detect(&mut self, d: Detector, eta: f64) -> Detector {
        if self.choose(&[eta, 1.0 - eta]) == 0 {
            d
        } else {
            Detector::Lost
        }
    }

    fn route(&mut self, loc: Location) -> Detector {
        match loc {
            Location::Main => self.detect(Detector::D1, self.det.eta1),
            Location::Control => self.detect(Detector::D2, self.det.eta2),
            Location::Transit => {
                let p = self.det.p_transit_loss;
                if self.choose(&[1.0 - p, p]) == 1 {
                    Detector::Lost
                } else if self.coin() {
                    self.detect(Detector::D1, self.det.eta1)
                } else {
                    self.detect(Detector::D2, self.det.eta2)
                }
            }
        }
    }

    fn split_location(&mut self) -> Location {
        let q = self.cfg.split;
        [Location::Main, Location::Transit, Location::Control][self.choose(&[q.main, q.transit, q.control])]
    }

    fn emit(&mut self, loc: Location, source: EmissionSource, atom: usize) -> Emission {
        let detector = self.route(loc);
        Emission { location: loc, detector, source, atom }
    }

    /// Apply `s_atom` to its key pair after that atom emitted.
    fn lower_atom(&mut self, atom: usize) {
        let f = &mut self.factors[self.atom_factor[atom]];
        let c = if f.slot(atom) == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        f.amps = pair_normalize(&pair_lower(&f.amps, c)).unwrap_or_else(|| pair_basis(false, false));
        f.intact = false;
    }

    fn set_ground(&mut self, f: usize) {
        self.factors[f].amps = pair_basis(false, false);
        self.factors[f].intact = false;
    }

    /// Born measurement of whether `atom` is excited; collapses its key pair.
    fn measure_atom(&mut self, atom: usize) -> bool {
        let fi = self.atom_factor[atom];
        let slot = self.factors[fi].slot(atom);
        let p = pair_excitation_probability(&self.factors[fi].amps, slot);
        let excited = self.choose(&[p, 1.0 - p]) == 0;
        let mask = if slot == 0 { 2 } else { 1 };
        let f = &mut self.factors[fi];
        let mut amps = f.amps;
        for (k, a) in amps.iter_mut().enumerate() {
            if (k & mask != 0) != excited {
                *a = C64::new(0.0, 0.0);
            }
        }
        f.amps = pair_normalize(&amps).expect("outcome with nonzero probability");
        f.intact = false;
        excited
    }

    /// Set a measured atom to a definite level within its key pair.
    fn set_atom_level(&mut self, atom: usize, excited: bool) {
        let fi = self.atom_factor[atom];
        let f = &mut self.factors[fi];
        let mask = if f.slot(atom) == 0 { 2 } else { 1 };
        let mut out = [C64::new(0.0, 0.0); 4];
        for (k, a) in f.amps.iter().enumerate() {
            let target = if excited { k | mask } else { k & !mask };
            out[target] += a;
        }
        f.amps = out;
        f.intact = false;
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        let n = self.lock.n_atoms();
        if a == b || a >= n || b >= n {
            return domain(format!("invalid pair ({a}, {b}) for {n} atoms"));
        }
        Ok(())
    }

    /// Move atoms `a` and `b` from the main to the control cavity and return
    /// the photons emitted on the way.
    pub fn move_pair(&mut self, a: usize, b: usize) -> Result<Vec<Emission>> {
        self.check_pair(a, b)?;
        for x in [a, b] {
            if self.location[x] != Location::Main {
                return domain(format!("atom {x} is not in the main cavity"));
            }
            self.location[x] = Location::Transit;
        }
        let out = match self.mode {
            Mode::Abstract => self.move_abstract(a, b),
            Mode::Exact => self.move_exact(a, b)?,
        };
        self.location[a] = Location::Control;
        self.location[b] = Location::Control;
        Ok(out)
    }

    fn move_abstract(&mut self, a: usize, b: usize) -> Vec<Emission> {
        let mut out = Vec::new();
        let (fa, fb) = (self.atom_factor[a], self.atom_factor[b]);
        if fa == fb && self.factors[fa].intact {
            let eps = self.det.asynchrony_epsilon;
            if self.choose(&[eps, 1.0 - eps]) == 0 {
                let origin = if self.coin() { a } else { b };
                let loc = self.split_location();
                out.push(self.emit(loc, EmissionSource::Asynchrony, origin));
                self.set_ground(fa);
            }
            return out;
        }
        if fa != fb {
            for (moving, f) in [(a, fa), (b, fb)] {
                if !self.factors[f].intact {
                    continue;
                }
                let atoms = self.factors[f].atoms;
                let staying = atoms[1 - self.factors[f].slot(moving)];
                if self.coin() {
                    let (origin, loc) = if self.coin() {
                        (moving, self.split_location())
                    } else {
                        (staying, Location::Main)
                    };
                    out.push(self.emit(loc, EmissionSource::BrokenSinglet, origin));
                    self.set_ground(f);
                } else {
                    let on_moving = self.coin();
                    let (s0, s1) = if atoms[0] == moving { (on_moving, !on_moving) } else { (!on_moving, on_moving) };
                    self.factors[f].amps = pair_basis(s0, s1);
                    self.factors[f].intact = false;
                }
            }
        }
        for x in [a, b] {
            if self.excitation_probability(x) > 0.0 && self.measure_atom(x) {
                let loc = self.split_location();
                out.push(self.emit(loc, EmissionSource::UnpairedExcitation, x));
                self.lower_atom(x);
            }
        }
        out
    }

    fn move_exact(&mut self, a: usize, b: usize) -> Result<Vec<Emission>> {
        let main = [self.g_main[a], self.g_main[b]];
        let ctrl = [self.g_ctrl[a], self.g_ctrl[b]];
        let schedule = CouplingSchedule::linear(main, ctrl, self.cfg.exact_steps, self.cfg.exact_lag)?;
        schedule.validate(main, ctrl)?;
        let (fa, fb) = (self.atom_factor[a], self.atom_factor[b]);
        let touched: Vec<usize> = if fa == fb { vec![fa] } else { vec![fa, fb] };
        let mut out = Vec::new();
        for f in touched {
            let atoms = self.factors[f].atoms;
            let lane_of = |x: usize| if x == a { Some(0) } else if x == b { Some(1) } else { None };
            let steps: Vec<FactorStep> = schedule
                .steps()
                .iter()
                .map(|lanes| {
                    let mut m = [0.0; 2];
                    let mut c = [0.0; 2];
                    let mut loc = Location::Transit;
                    let mut any_main = false;
                    for (s, &x) in atoms.iter().enumerate() {
                        match lane_of(x) {
                            Some(l) => {
                                m[s] = lanes[l].main;
                                c[s] = lanes[l].ctrl;
                                if lanes[l].ctrl > 0.0 {
                                    loc = Location::Control;
                                }
                                any_main |= lanes[l].main > 0.0;
                            }
                            None => match self.location[x] {
                                Location::Control => c[s] = self.g_ctrl[x],
                                _ => m[s] = self.g_main[x],
                            },
                        }
                    }
                    if loc != Location::Control && any_main {
                        loc = Location::Main;
                    }
                    FactorStep { main: m, ctrl: c, location: loc }
                })
                .collect();
            let mv = exact_move(&self.factors[f].amps, &steps);
            let p_none = (1.0 - mv.emission_probability()).max(0.0);
            let pick = self.choose(&[mv.p_main, mv.p_transit, mv.p_control, p_none]);
            if pick < 3 {
                let loc = [Location::Main, Location::Transit, Location::Control][pick];
                let origin = atoms.iter().copied().find(|&x| lane_of(x).is_some()).expect("moving atom");
                out.push(self.emit(loc, EmissionSource::Schedule, origin));
                self.set_ground(f);
            } else {
                let fac = &mut self.factors[f];
                fac.amps = mv.no_emission_state.expect("no-emission branch has weight");
                if fa != fb {
                    fac.intact = false;
                }
            }
        }
        Ok(out)
    }

    /// Run S jumps on the pair `(a, b)` in the control cavity until D2 clicks
    /// or the cap is reached. Returns the click flag and the number of jumps.
    pub fn s_jump_check(&mut self, a: usize, b: usize) -> Result<(bool, usize)> {
        self.check_pair(a, b)?;
        for x in [a, b] {
            if self.location[x] != Location::Control {
                return domain(format!("atom {x} is not in the control cavity"));
            }
        }
        let (fa, fb) = (self.atom_factor[a], self.atom_factor[b]);
        let mut psi = if fa == fb {
            let f = &self.factors[fa];
            if f.atoms[0] == a {
                f.amps
            } else {
                swap_atoms(&f.amps)
            }
        } else {
            let ea = self.measure_atom(a);
            let eb = self.measure_atom(b);
            pair_basis(ea, eb)
        };
        let base = [self.g_ctrl[a], self.g_ctrl[b]];
        let mut click = false;
        let mut used = 0;
        for k in 0..self.cfg.max_switchings {
            if psi[1..].iter().all(|x| x.norm_sqr() == 0.0) {
                break;
            }
            used = k + 1;
            let mut c = base;
            let t = k % 2;
            c[t] = self.cfg.check_dg.map_or(0.0, |dg| c[t] + dg);
            let (bright, dark) = pair_dark_split(&psi, c);
            if self.choose(&[bright, 1.0 - bright]) == 0 {
                psi = pair_normalize(&pair_lower(&psi, c)).expect("bright branch has weight");
                if self.detect(Detector::D2, self.det.eta2) == Detector::D2 {
                    click = true;
                    break;
                }
            } else {
                psi = pair_normalize(&dark).expect("dark branch has weight");
            }
        }
        if fa == fb {
            let f = &mut self.factors[fa];
            f.amps = if f.atoms[0] == a { psi } else { swap_atoms(&psi) };
            f.intact = false;
        } else {
            // The pair may leave the check entangled; measure both atoms so
            // each key pair keeps a product form.
            let pa = pair_excitation_probability(&psi, 0);
            let ea = self.choose(&[pa, 1.0 - pa]) == 0;
            let keep_a: Vec<usize> = (0..4).filter(|k| (k & 2 != 0) == ea).collect();
            let mut rest = [C64::new(0.0, 0.0); 4];
            for k in keep_a {
                rest[k] = psi[k];
            }
            let rest = pair_normalize(&rest).expect("measured branch has weight");
            let pb = pair_excitation_probability(&rest, 1);
            let eb = self.choose(&[pb, 1.0 - pb]) == 0;
            self.set_atom_level(a, ea);
            self.set_atom_level(b, eb);
        }
        Ok((click, used))
    }

    /// Move, listen and check one password pair.
    pub fn trial(&mut self, a: usize, b: usize) -> Result<PairTrialEvent> {
        let emissions = self.move_pair(a, b)?;
        let mut event = PairTrialEvent {
            pair: [a, b],
            matched: self.lock.key.contains_pair(a, b),
            emissions,
            s_jump_click: false,
            switchings: 0,
        };
        if !(event.movement_click() && self.cfg.abort_on_movement_click) {
            let (click, used) = self.s_jump_check(a, b)?;
            event.s_jump_click = click;
            event.switchings = used;
        }
        Ok(event)
    }
}

/// Decision and events of one run, without the run's identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub decision: Decision,
    pub rejecting_pair: Option<[usize; 2]>,
    pub events: Vec<PairTrialEvent>,
}

fn check_password(lock: &LockInstance, password: &PairSplitting) -> Result<()> {
    if password.n_atoms() != lock.n_atoms() || !password.is_complete() {
        return domain(format!(
            "password must pair all {} atoms of the lock (got {} pairs over {} atoms)",
            lock.n_atoms(),
            password.pairs().len(),
            password.n_atoms()
        ));
    }
    Ok(())
}

/// Check `password` against `lock`, drawing decisions from `chooser`.
pub fn run_with(
    lock: &LockInstance,
    password: &PairSplitting,
    det: DetectorModel,
    mode: Mode,
    cfg: &ProtocolConfig,
    chooser: &mut dyn Chooser,
) -> Result<RunOutcome> {
    check_password(lock, password)?;
    let mut run = ProtocolRun::new(lock, det, mode, cfg, chooser)?;
    let mut events = Vec::with_capacity(password.pairs().len());
    let mut rejecting_pair = None;
    for &(a, b) in password.pairs() {
        let e = run.trial(a, b)?;
        let passed = e.passed();
        events.push(e);
        if !passed && rejecting_pair.is_none() {
            rejecting_pair = Some([a, b]);
            if cfg.early_exit {
                break;
            }
        }
    }
    let decision = if rejecting_pair.is_none() { Decision::Accept } else { Decision::Reject };
    Ok(RunOutcome { decision, rejecting_pair, events })
}

/// Check `password` against `lock` with randomness from `seed`.
pub fn verify(
    lock: &LockInstance,
    password: &PairSplitting,
    det: DetectorModel,
    mode: Mode,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<Transcript> {
    let mut ch = RngChooser::new(stream_rng(seed, "verify", 0));
    let r = run_with(lock, password, det, mode, cfg, &mut ch)?;
    Ok(Transcript { decision: r.decision, mode, seed, rejecting_pair: r.rejecting_pair, events: r.events })
}

/// Every possible run of `password` against `lock`, with its probability.
pub fn enumerate_outcomes(
    lock: &LockInstance,
    password: &PairSplitting,
    det: DetectorModel,
    mode: Mode,
    cfg: &ProtocolConfig,
) -> Result<Vec<(f64, RunOutcome)>> {
    check_password(lock, password)?;
    enumerate(|ch| run_with(lock, password, det, mode, cfg, ch))
}

/// Exact probability that `password` is accepted.
pub fn acceptance_probability(
    lock: &LockInstance,
    password: &PairSplitting,
    det: DetectorModel,
    mode: Mode,
    cfg: &ProtocolConfig,
) -> Result<f64> {
    Ok(enumerate_outcomes(lock, password, det, mode, cfg)?
        .iter()
        .filter(|(_, r)| r.decision == Decision::Accept)
        .map(|(p, _)| p)
        .sum())
}
