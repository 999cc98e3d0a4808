use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use darklock::dark::{splitting_state, PairSplitting};
use darklock::hamiltonian::{build_hamiltonian, ModelParams};
use darklock::linalg::Spectral;
use darklock::prep::{prep_yield, StarkJumpSpec, YieldMethod};
use darklock::protocol::{forge_lock, verify, Decision, DetectorModel, LockInstance, Mode, ProtocolConfig, Transcript};
use darklock::rng::stream_seed;
use darklock::security::{analyze, write_grid_csv, Adversary, GridPoint};
use darklock::state::Space;

const TOOL: &str = "darklock";

/// Largest lock whose dense state is written by keygen.
const MAX_DENSE_ATOMS: usize = 16;

#[derive(Parser)]
#[command(name = "darklock", version, about = "Dark-state cavity lock simulator")]
struct Cli {
    /// Master seed; drawn from entropy and printed when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo loops (output does not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Model parameters JSON.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Copy, Serialize)]
struct DetectorArgs {
    #[arg(long, default_value_t = 1.0)]
    eta1: f64,
    #[arg(long, default_value_t = 1.0)]
    eta2: f64,
    #[arg(long = "p-loss", default_value_t = 0.0)]
    p_loss: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
}

impl DetectorArgs {
    fn model(&self) -> DetectorModel {
        DetectorModel { eta1: self.eta1, eta2: self.eta2, p_transit_loss: self.p_loss, asynchrony_epsilon: self.epsilon }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Forge a lock: writes key.json and lock.json.
    Keygen {
        /// Number of atoms (even); defaults to the atom count of --params.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Check a password against a lock: writes transcript.json.
    Verify {
        #[arg(long)]
        lock: PathBuf,
        #[arg(long)]
        password: PathBuf,
        #[arg(long, default_value = "abstract")]
        mode: Mode,
        #[command(flatten)]
        det: DetectorArgs,
        /// Keep checking pairs after the first failure.
        #[arg(long)]
        run_all: bool,
    },
    /// Singlet preparation yield over a grid of shifts: writes prep_sweep.csv.
    PrepSweep {
        /// start,stop,count
        #[arg(long = "ds-range")]
        ds_range: String,
        /// start,stop,count
        #[arg(long = "dg-range", default_value = "0,0,1")]
        dg_range: String,
        /// Maximum hold time; defaults to 20 pi / mean coupling.
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        /// Monte Carlo samples per grid point (otherwise quadrature).
        #[arg(long)]
        samples: Option<usize>,
        /// Quadrature nodes per grid point.
        #[arg(long, default_value_t = 2048)]
        quadrature: usize,
    },
    /// Key-space numbers and false accept/reject rates: writes report.json
    /// and report.csv.
    Analyze {
        #[arg(long)]
        n: Option<usize>,
        /// Take the atom count from a key file.
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        eta1: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        eta2: Vec<f64>,
        #[arg(long = "p-loss", value_delimiter = ',', default_value = "0")]
        p_loss: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        epsilon: Vec<f64>,
        /// Key lengths for the rate grid; defaults to the analyzed length.
        #[arg(long = "grid-n", value_delimiter = ',')]
        grid_n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value = "one-pair-off")]
        adversary: Adversary,
        #[arg(long, default_value_t = 1e-8)]
        target: f64,
    },
    /// Print the Hamiltonian's eigenvalues per excitation sector.
    Spectrum {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "max-excitation", default_value_t = 2)]
        max_excitation: usize,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
}

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn fail<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

#[derive(Serialize, Deserialize)]
struct Meta {
    tool: String,
    version: String,
    seed: u64,
    config: Value,
}

fn meta(seed: u64, config: Value) -> Meta {
    Meta { tool: TOOL.into(), version: env!("CARGO_PKG_VERSION").into(), seed, config }
}

#[derive(Serialize, Deserialize)]
struct KeyFile {
    #[serde(flatten)]
    key: PairSplitting,
    meta: Meta,
}

#[derive(Serialize, Deserialize)]
struct LockFile {
    meta: Meta,
    lock: LockInstance,
    dark_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<Value>,
}

#[derive(Serialize)]
struct TranscriptFile<'a> {
    #[serde(flatten)]
    transcript: &'a Transcript,
    meta: Meta,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_params(path: Option<&Path>, n: Option<usize>) -> CliResult<ModelParams> {
    let params = match (path, n) {
        (Some(p), _) => ModelParams::from_json(&read(p)?)?,
        (None, Some(n)) => ModelParams::default_for(n),
        (None, None) => return fail("either --n or --params is required"),
    };
    if let Some(n) = n {
        if params.n_atoms() != n {
            return fail(format!("--n {n} disagrees with {} atoms in the parameter file", params.n_atoms()));
        }
    }
    if params.rwa_violated() {
        eprintln!("warning: coupling reaches 0.1 omega; the rotating-wave approximation is doubtful");
    }
    Ok(params)
}

fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts[..] else {
        return fail(format!("range {s:?} must be start,stop,count"));
    };
    let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
    let count: usize = c.parse()?;
    if count == 0 || !a.is_finite() || !b.is_finite() {
        return fail(format!("range {s:?} is empty or not finite"));
    }
    if count == 1 {
        return Ok(vec![a]);
    }
    Ok((0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return fail("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let seed = cli.seed.unwrap_or_else(|| {
        let s = rand::random();
        eprintln!("seed: {s}");
        s
    });
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Input(format!("{}: {e}", cli.out.display())))?;
    let params_path = cli.params.as_deref();
    match cli.cmd {
        Cmd::Keygen { n } => keygen(n, params_path, seed, &cli.out),
        Cmd::Verify { lock, password, mode, det, run_all } => {
            cmd_verify(&lock, &password, mode, det, run_all, seed, &cli.out)
        }
        Cmd::PrepSweep { ds_range, dg_range, t_max, samples, quadrature } => {
            prep_sweep(params_path, &ds_range, &dg_range, t_max, samples, quadrature, seed, &cli.out)
        }
        Cmd::Analyze { n, key, eta1, eta2, p_loss, epsilon, grid_n, trials, adversary, target } => {
            let n = match (n, key) {
                (Some(n), None) => n,
                (None, Some(k)) => PairSplitting::from_json(&read(&k)?)?.n_atoms(),
                _ => return fail("give exactly one of --n or --key"),
            };
            let grid = Grid { eta1, eta2, p_loss, epsilon, n: if grid_n.is_empty() { vec![n] } else { grid_n } };
            cmd_analyze(n, grid, trials, adversary, target, seed, &cli.out)
        }
        Cmd::Spectrum { n, max_excitation } => spectrum(params_path, n, max_excitation, seed, &cli.out),
    }
}

fn keygen(n: Option<usize>, params_path: Option<&Path>, seed: u64, out: &Path) -> CliResult<u8> {
    let params = load_params(params_path, n)?;
    let n = params.n_atoms();
    if n < 2 || n % 2 != 0 {
        return fail(format!("a lock needs an even number >= 2 of atoms, got {n}"));
    }
    let lock = forge_lock(n, &params, None, seed)?;
    let residual = lock.dark_residual();
    let state = if n <= MAX_DENSE_ATOMS {
        Some(serde_json::from_str(&splitting_state(lock.key(), &params.couplings(), true)?.to_json()?)?)
    } else {
        None
    };
    let config = json!({ "command": "keygen", "n_atoms": n, "params": params });
    write_json(&out.join("key.json"), &KeyFile { key: lock.key().clone(), meta: meta(seed, config.clone()) })?;
    write_json(&out.join("lock.json"), &LockFile { meta: meta(seed, config), lock, dark_residual: residual, state })?;
    println!("forged {n}-atom lock, dark residual {residual:.3e}");
    Ok(0)
}

fn cmd_verify(
    lock_path: &Path,
    password_path: &Path,
    mode: Mode,
    det: DetectorArgs,
    run_all: bool,
    seed: u64,
    out: &Path,
) -> CliResult<u8> {
    let lock: LockFile = serde_json::from_str(&read(lock_path)?)?;
    let password = PairSplitting::from_json(&read(password_path)?)?;
    let cfg = ProtocolConfig { early_exit: !run_all, ..ProtocolConfig::default() };
    let t = verify(&lock.lock, &password, det.model(), mode, seed, &cfg)?;
    let config = json!({
        "command": "verify",
        "lock": lock_path,
        "password": password_path,
        "mode": mode,
        "detector": det,
        "protocol": cfg,
    });
    write_json(&out.join("transcript.json"), &TranscriptFile { transcript: &t, meta: meta(seed, config) })?;
    match (t.decision, t.rejecting_pair) {
        (Decision::Accept, _) => {
            println!("accept");
            Ok(0)
        }
        (Decision::Reject, Some([a, b])) => {
            println!("reject: pair ({a}, {b}) failed");
            Ok(1)
        }
        (Decision::Reject, None) => {
            println!("reject");
            Ok(1)
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    ds: f64,
    dg: f64,
    #[serde(rename = "T_max")]
    t_max: f64,
    #[serde(rename = "yield")]
    yield_: f64,
    stderr: f64,
    n_samples: usize,
    seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn prep_sweep(
    params_path: Option<&Path>,
    ds_range: &str,
    dg_range: &str,
    t_max: Option<f64>,
    samples: Option<usize>,
    quadrature: usize,
    seed: u64,
    out: &Path,
) -> CliResult<u8> {
    let params = load_params(params_path, if params_path.is_some() { None } else { Some(2) })?;
    if params.n_atoms() != 2 {
        return fail(format!("prep-sweep needs a two-atom model, got {} atoms", params.n_atoms()));
    }
    let ds = parse_range(ds_range)?;
    let dg = parse_range(dg_range)?;
    if samples == Some(0) || quadrature == 0 {
        return fail("sample and node counts must be positive");
    }
    let grid: Vec<(f64, f64)> = ds.iter().flat_map(|&a| dg.iter().map(move |&b| (a, b))).collect();
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(ds, dg))| {
            let mut spec = StarkJumpSpec::with_default_hold(&params, 0, ds, dg);
            if let Some(t) = t_max {
                spec.hold_time_max = t;
            }
            let row_seed = stream_seed(seed, "prep-sweep", k as u64);
            let method = match samples {
                Some(s) => YieldMethod::MonteCarlo { samples: s, seed: row_seed },
                None => YieldMethod::Quadrature { nodes: quadrature },
            };
            let y = prep_yield(&params, &spec, method)?;
            Ok(SweepRow {
                ds,
                dg,
                t_max: spec.hold_time_max,
                yield_: y.mean,
                stderr: y.stderr,
                n_samples: y.n_samples,
                seed: row_seed,
            })
        })
        .collect::<darklock::Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(out.join("prep_sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let config = json!({
        "command": "prep-sweep",
        "params": params,
        "ds_range": ds_range,
        "dg_range": dg_range,
        "t_max": t_max,
        "samples": samples,
        "quadrature": quadrature,
        "rows": rows.len(),
    });
    write_json(&out.join("prep_sweep.meta.json"), &meta(seed, config))?;
    println!("{} grid points written", rows.len());
    Ok(0)
}

#[derive(Serialize)]
struct Grid {
    eta1: Vec<f64>,
    eta2: Vec<f64>,
    p_loss: Vec<f64>,
    epsilon: Vec<f64>,
    n: Vec<usize>,
}

impl Grid {
    fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &eta1 in &self.eta1 {
                for &eta2 in &self.eta2 {
                    for &p_loss in &self.p_loss {
                        for &epsilon in &self.epsilon {
                            out.push(GridPoint { eta1, eta2, p_loss, epsilon, n });
                        }
                    }
                }
            }
        }
        out
    }
}

fn cmd_analyze(
    n: usize,
    grid: Grid,
    trials: u64,
    adversary: Adversary,
    target: f64,
    seed: u64,
    out: &Path,
) -> CliResult<u8> {
    if trials == 0 {
        return fail("--trials must be at least 1");
    }
    let points = grid.points();
    if points.is_empty() {
        return fail("the parameter grid is empty");
    }
    for p in &points {
        p.detector().validate()?;
    }
    let cfg = ProtocolConfig::default();
    let report = analyze(n, &points, trials, seed, adversary, target, &cfg)?;
    let config = json!({
        "command": "analyze",
        "n_atoms": n,
        "grid": grid,
        "trials": trials,
        "adversary": adversary,
        "target": target,
        "protocol": cfg,
    });
    #[derive(Serialize)]
    struct ReportFile<'a> {
        #[serde(flatten)]
        report: &'a darklock::security::SecurityReport,
        meta: Meta,
    }
    write_json(&out.join("report.json"), &ReportFile { report: &report, meta: meta(seed, config) })?;
    write_grid_csv(&report.grid, fs::File::create(out.join("report.csv"))?)?;
    println!("matchings: {}", report.matchings_count);
    println!("guess probability: {:.4e}", report.guess_probability);
    println!("meets {:e} target: {}", target, report.meets_target);
    println!("minimal key length for target: {}", report.minimal_n_for_target);
    for r in &report.grid {
        println!(
            "n={} eta1={} eta2={} p_loss={} eps={}: FAR {:.4e} +- {:.1e}, FRR {:.4e} +- {:.1e}",
            r.n, r.eta1, r.eta2, r.p_loss, r.epsilon, r.far, r.far_stderr, r.frr, r.frr_stderr
        );
    }
    Ok(0)
}

fn spectrum(params_path: Option<&Path>, n: Option<usize>, max_m: usize, seed: u64, out: &Path) -> CliResult<u8> {
    let params = load_params(params_path, n)?;
    let mut sectors = Vec::new();
    for m in 0..=max_m {
        let space = Space::sector(params.n_atoms(), max_m, m)?;
        let mut ev = Spectral::new(&build_hamiltonian(&params, space)?)?.eigenvalues();
        ev.sort_by(f64::total_cmp);
        println!("m={m} dim={}: {}", space.dim(), ev.iter().map(|e| format!("{e:.12}")).collect::<Vec<_>>().join(" "));
        sectors.push(json!({ "excitation": m, "dim": space.dim(), "eigenvalues": ev }));
    }
    let config = json!({ "command": "spectrum", "params": params, "max_excitation": max_m });
    write_json(&out.join("spectrum.json"), &json!({ "sectors": sectors, "meta": meta(seed, config) }))?;
    Ok(0)
}
