//! Key-space counting and Monte Carlo false accept/reject rates.

use std::io::Write;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dark::PairSplitting;
use crate::error::{domain, Error, Result};
use crate::hamiltonian::ModelParams;
use crate::protocol::{
    acceptance_probability, run_with, Decision, DetectorModel, LockInstance, Mode, ProtocolConfig, RngChooser,
};
use crate::rng::stream_rng;

fn check_even(n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return domain(format!("need an even number >= 2 of atoms, got {n}"));
    }
    Ok(())
}

/// Number of perfect matchings of `n` atoms, `(n - 1)!! = 1 * 3 * ... * (n - 1)`.
pub fn matchings_count(n: usize) -> Result<BigUint> {
    check_even(n)?;
    Ok((1..n).step_by(2).fold(BigUint::one(), |acc, k| acc * BigUint::from(k)))
}

/// Chance that one uniformly random password equals the key.
pub fn guess_probability(n: usize) -> Result<f64> {
    let m = matchings_count(n)?;
    Ok(m.to_f64().map_or(0.0, |m| 1.0 / m))
}

/// Smallest even `n` whose guess probability is at most `p_target`.
pub fn key_length_for_target(p_target: f64) -> Result<usize> {
    if !(p_target > 0.0 && p_target < 1.0) {
        return domain(format!("target probability must lie in (0, 1), got {p_target}"));
    }
    let mut n = 2;
    loop {
        if guess_probability(n)? <= p_target {
            return Ok(n);
        }
        n += 2;
    }
}

/// How the attacker picks a password.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adversary {
    /// Uniformly random matching; may coincide with the key.
    #[default]
    RandomPassword,
    /// The key with two of its pairs re-paired crosswise.
    OnePairOff,
}

impl std::str::FromStr for Adversary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-password" | "random" => Ok(Self::RandomPassword),
            "one-pair-off" => Ok(Self::OnePairOff),
            _ => domain(format!("unknown adversary {s:?}; expected random-password or one-pair-off")),
        }
    }
}

impl Adversary {
    pub fn password<R: Rng + ?Sized>(&self, key: &PairSplitting, rng: &mut R) -> Result<PairSplitting> {
        match self {
            Adversary::RandomPassword => PairSplitting::random(key.n_atoms(), rng),
            Adversary::OnePairOff => {
                let pairs = key.pairs();
                if pairs.len() < 2 {
                    return domain("a one-pair-off password needs at least four atoms");
                }
                let picked = sample(rng, pairs.len(), 2);
                let (i, j) = (picked.index(0), picked.index(1));
                let ((a, a2), (b, b2)) = (pairs[i], pairs[j]);
                let mut out: Vec<(usize, usize)> =
                    pairs.iter().enumerate().filter(|&(k, _)| k != i && k != j).map(|(_, &p)| p).collect();
                if rng.gen::<bool>() {
                    out.extend([(a, b), (a2, b2)]);
                } else {
                    out.extend([(a, b2), (a2, b)]);
                }
                PairSplitting::new(key.n_atoms(), out)
            }
        }
    }
}

/// Binomial rate estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub stderr: f64,
    /// 95% Wilson score interval.
    pub ci95: [f64; 2],
    pub successes: u64,
    pub trials: u64,
}

impl RateEstimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = 1.959_963_984_540_054;
        let denom = 1.0 + z * z / n;
        let centre = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Self {
            rate: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            ci95: [
                if successes == 0 { 0.0 } else { (centre - half).max(0.0) },
                if successes == trials { 1.0 } else { (centre + half).min(1.0) },
            ],
            successes,
            trials,
        }
    }
}

fn count_trials<F>(trials: u64, f: F) -> Result<RateEstimate>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    if trials == 0 {
        return domain("at least one trial is required");
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| f(t).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(RateEstimate::from_counts(hits, trials))
}

fn trial_lock(params: &ModelParams, seed: u64, t: u64) -> Result<LockInstance> {
    let key = PairSplitting::random(params.n_atoms(), &mut stream_rng(seed, "trial-lock", t))?;
    LockInstance::new(key, params.clone(), params.clone())
}

fn accepted(lock: &LockInstance, pw: &PairSplitting, det: DetectorModel, cfg: &ProtocolConfig, seed: u64, t: u64) -> Result<bool> {
    let mut ch = RngChooser::new(stream_rng(seed, "trial-verify", t));
    Ok(run_with(lock, pw, det, Mode::Abstract, cfg, &mut ch)?.decision == Decision::Accept)
}

/// Fraction of trials in which an adversary's password opens a freshly
/// forged lock.
pub fn false_accept_rate(
    n: usize,
    det: DetectorModel,
    trials: u64,
    seed: u64,
    adversary: Adversary,
    cfg: &ProtocolConfig,
) -> Result<RateEstimate> {
    check_even(n)?;
    det.validate()?;
    let params = ModelParams::default_for(n);
    count_trials(trials, |t| {
        let lock = trial_lock(&params, seed, t)?;
        let pw = adversary.password(lock.key(), &mut stream_rng(seed, "trial-password", t))?;
        accepted(&lock, &pw, det, cfg, seed, t)
    })
}

/// Fraction of trials in which the correct password is rejected.
pub fn false_reject_rate(n: usize, det: DetectorModel, trials: u64, seed: u64, cfg: &ProtocolConfig) -> Result<RateEstimate> {
    check_even(n)?;
    det.validate()?;
    let params = ModelParams::default_for(n);
    count_trials(trials, |t| {
        let lock = trial_lock(&params, seed, t)?;
        accepted(&lock, lock.key(), det, cfg, seed, t).map(|ok| !ok)
    })
}

/// Probability that one correct pair passes, computed exactly.
pub fn pair_pass_probability(det: DetectorModel, cfg: &ProtocolConfig) -> Result<f64> {
    let params = ModelParams::default_for(2);
    let lock = LockInstance::new(PairSplitting::adjacent(2)?, params.clone(), params)?;
    acceptance_probability(&lock, lock.key(), det, Mode::Abstract, cfg)
}

/// Probability that a correct pair fails once it has radiated in transit.
pub fn p_unrecoverable(det: DetectorModel, cfg: &ProtocolConfig) -> Result<f64> {
    let clean = pair_pass_probability(DetectorModel { asynchrony_epsilon: 0.0, ..det }, cfg)?;
    if clean == 0.0 {
        return Ok(1.0);
    }
    let hit = pair_pass_probability(DetectorModel { asynchrony_epsilon: 1.0, ..det }, cfg)?;
    Ok(1.0 - hit / clean)
}

/// `1 - (q0 (1 - eps p_unrecoverable))^(n/2)`, with `q0` the per-pair pass
/// probability at `eps = 0`.
pub fn predicted_false_reject_rate(n: usize, det: DetectorModel, cfg: &ProtocolConfig) -> Result<f64> {
    check_even(n)?;
    let q0 = pair_pass_probability(DetectorModel { asynchrony_epsilon: 0.0, ..det }, cfg)?;
    let pu = p_unrecoverable(det, cfg)?;
    Ok(1.0 - (q0 * (1.0 - det.asynchrony_epsilon * pu)).powi((n / 2) as i32))
}

/// Number of random guesses a resampling attacker needs per fresh lock;
/// `None` where `max_attempts` guesses all failed.
pub fn attempts_to_success(
    n: usize,
    det: DetectorModel,
    runs: u64,
    max_attempts: u64,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<Vec<Option<u64>>> {
    check_even(n)?;
    let params = ModelParams::default_for(n);
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let lock = trial_lock(&params, seed, r)?;
            let mut pw_rng = stream_rng(seed, "resample-password", r);
            let mut ch = RngChooser::new(stream_rng(seed, "resample-verify", r));
            for k in 1..=max_attempts {
                let pw = PairSplitting::random(n, &mut pw_rng)?;
                if run_with(&lock, &pw, det, Mode::Abstract, cfg, &mut ch)?.decision == Decision::Accept {
                    return Ok(Some(k));
                }
            }
            Ok(None)
        })
        .collect()
}

/// One point of a detector/key-length grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub eta1: f64,
    pub eta2: f64,
    pub p_loss: f64,
    pub epsilon: f64,
    pub n: usize,
}

impl GridPoint {
    pub fn detector(&self) -> DetectorModel {
        DetectorModel { eta1: self.eta1, eta2: self.eta2, p_transit_loss: self.p_loss, asynchrony_epsilon: self.epsilon }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub eta1: f64,
    pub eta2: f64,
    pub p_loss: f64,
    pub epsilon: f64,
    pub n: usize,
    pub far: f64,
    pub far_stderr: f64,
    pub frr: f64,
    pub frr_stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub n_atoms: usize,
    /// Exact decimal count of perfect matchings.
    pub matchings_count: String,
    pub guess_probability: f64,
    pub target: f64,
    pub meets_target: bool,
    pub minimal_n_for_target: usize,
    pub adversary: Adversary,
    pub trials: u64,
    pub seed: u64,
    pub grid: Vec<GridRow>,
}

/// Key-space figures for `n` atoms plus FAR/FRR at every grid point. All
/// points share the seed, so they are compared on common random numbers.
pub fn analyze(
    n: usize,
    grid: &[GridPoint],
    trials: u64,
    seed: u64,
    adversary: Adversary,
    target: f64,
    cfg: &ProtocolConfig,
) -> Result<SecurityReport> {
    if grid.is_empty() {
        return domain("the parameter grid is empty");
    }
    let rows = grid
        .iter()
        .map(|g| {
            let det = g.detector();
            let far = false_accept_rate(g.n, det, trials, seed, adversary, cfg)?;
            let frr = false_reject_rate(g.n, det, trials, seed, cfg)?;
            Ok(GridRow {
                eta1: g.eta1,
                eta2: g.eta2,
                p_loss: g.p_loss,
                epsilon: g.epsilon,
                n: g.n,
                far: far.rate,
                far_stderr: far.stderr,
                frr: frr.rate,
                frr_stderr: frr.stderr,
                trials,
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p = guess_probability(n)?;
    Ok(SecurityReport {
        n_atoms: n,
        matchings_count: matchings_count(n)?.to_string(),
        guess_probability: p,
        target,
        meets_target: p <= target,
        minimal_n_for_target: key_length_for_target(target)?,
        adversary,
        trials,
        seed,
        grid: rows,
    })
}

/// Write grid rows as CSV with a header line.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts() {
        assert_eq!(matchings_count(2).unwrap(), BigUint::from(1u32));
        assert_eq!(matchings_count(4).unwrap(), BigUint::from(3u32));
        assert_eq!(matchings_count(24).unwrap(), BigUint::from(316_234_143_225u64));
        assert!(matchings_count(3).is_err());
        assert!(guess_probability(5).is_err());
    }

    #[test]
    fn recurrence_up_to_30() {
        for n in (4..=30).step_by(2) {
            assert_eq!(matchings_count(n).unwrap(), matchings_count(n - 2).unwrap() * BigUint::from(n - 1));
        }
    }

    #[test]
    fn targets() {
        assert_eq!(key_length_for_target(1.0 / 3.0).unwrap(), 4);
        assert_eq!(key_length_for_target(1e-8).unwrap(), 20);
        assert_eq!(key_length_for_target(1e-12).unwrap(), 26);
        assert!(key_length_for_target(0.0).is_err());
    }

    #[test]
    fn one_pair_off_differs_in_two_pairs() {
        let key = PairSplitting::adjacent(8).unwrap();
        let mut rng = stream_rng(0, "t", 0);
        for _ in 0..50 {
            let pw = Adversary::OnePairOff.password(&key, &mut rng).unwrap();
            let shared = pw.pairs().iter().filter(|&&(a, b)| key.contains_pair(a, b)).count();
            assert_eq!(shared, 2);
        }
        assert!(Adversary::OnePairOff.password(&PairSplitting::adjacent(2).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn wilson_interval_brackets_rate() {
        let r = RateEstimate::from_counts(30, 100);
        assert!(r.ci95[0] < 0.3 && 0.3 < r.ci95[1]);
        let z = RateEstimate::from_counts(0, 100);
        assert_eq!(z.rate, 0.0);
        assert_eq!(z.ci95[0], 0.0);
    }

    #[test]
    fn unrecoverable_and_ideal_pass() {
        let cfg = ProtocolConfig::default();
        assert!((pair_pass_probability(DetectorModel::ideal(), &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert!((p_unrecoverable(DetectorModel::ideal(), &cfg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_trials_is_an_error() {
        let cfg = ProtocolConfig::default();
        assert!(false_reject_rate(4, DetectorModel::ideal(), 0, 1, &cfg).is_err());
    }

    #[test]
    fn csv_header() {
        let row = GridRow {
            eta1: 1.0,
            eta2: 1.0,
            p_loss: 0.0,
            epsilon: 0.0,
            n: 4,
            far: 0.0,
            far_stderr: 0.0,
            frr: 0.0,
            frr_stderr: 0.0,
            trials: 10,
            seed: 1,
        };
        let mut buf = Vec::new();
        write_grid_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "eta1,eta2,p_loss,epsilon,n,far,far_stderr,frr,frr_stderr,trials,seed"
        );
    }
}
