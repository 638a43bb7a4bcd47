//! Command-line driver: domain inspection, pathwise solves, simulation,
//! statistical verification and stationary analysis, plus the chained
//! pipeline. Exit codes are a stable contract: 0 success, 2 input error,
//! 3 solver or V-termination, 4 verification failure.

// Dense index loops mirror the math; the iterator forms read worse here.
#![allow(clippy::needless_range_loop)]

mod config;
mod runs;

use clap::{Args, Parser, Subcommand};
use config::{load_domain_spec, ResolvedConfig, RunConfig};
use runs::{now_unix_ms, read_ensemble, write_ensemble, write_json, RunManifest};
use serde::Serialize;
use sklab_core::geometry::{BoundaryClassification, PolyhedralDomain};
use sklab_core::path::DiscretePath;
use sklab_core::simulate::{simulate_ensemble, SimError, SimOutput};
use sklab_core::skorokhod::{solve_sp_path, SolveError};
use sklab_core::stationary::{check_stationary_characterization, estimate_stationary};
use sklab_core::stats::RunningStats;
use sklab_core::verify::{cross_check_formulations, CrossCheckOptions};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct CliError {
    code: i32,
    msg: String,
}

impl CliError {
    pub fn input(msg: String) -> Self {
        CliError { code: 2, msg }
    }
    pub fn solver(msg: String) -> Self {
        CliError { code: 3, msg }
    }
    pub fn verification(msg: String) -> Self {
        CliError { code: 4, msg }
    }
    pub fn internal(msg: String) -> Self {
        CliError { code: 1, msg }
    }
}

#[derive(Parser)]
#[command(name = "sklab", version, about = "Reflected-diffusion simulation and verification")]
struct Cli {
    /// Worker thread count (falls back to SKLAB_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the ensemble size.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the horizon.
    #[arg(long)]
    horizon: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        if let Some(paths) = self.paths {
            cfg.sim.paths = paths;
        }
        if let Some(dt) = self.dt {
            cfg.sim.step = dt;
        }
        if let Some(horizon) = self.horizon {
            cfg.sim.horizon = horizon;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classify every boundary stratum and audit the completely-S property.
    Geometry {
        #[arg(long)]
        domain: PathBuf,
        /// Write geometry_report.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Constrain an input path file to the domain.
    Solve {
        #[arg(long)]
        domain: PathBuf,
        /// Input path CSV with header t,x1,...,xJ.
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate an ensemble and write the run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Verify a previously simulated run directory.
    Verify {
        #[arg(long)]
        run: PathBuf,
    },
    /// Long-run stationary estimation and characterization checks.
    Stationary {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// simulate -> verify -> stationary, manifest written last.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() {
    let cli = Cli::parse();
    init_workers(cli.workers);
    let result = match cli.command {
        Command::Geometry { domain, out } => cmd_geometry(&domain, out.as_deref()),
        Command::Solve { domain, psi, out } => cmd_solve(&domain, &psi, &out),
        Command::Simulate { config, out, overrides } => cmd_simulate(&config, &out, &overrides),
        Command::Verify { run } => cmd_verify(&run),
        Command::Stationary { config, out, overrides } => cmd_stationary(&config, &out, &overrides),
        Command::Pipeline { config, out, overrides } => cmd_pipeline(&config, &out, &overrides),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.msg);
        std::process::exit(e.code);
    }
}

fn init_workers(flag: Option<usize>) {
    let n = flag.or_else(|| std::env::var("SKLAB_WORKERS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

#[derive(Serialize)]
struct StratumLine {
    faces: Vec<usize>,
    classification: BoundaryClassification,
    margin: f64,
}

#[derive(Serialize)]
struct GeometryReport {
    dimension: usize,
    face_count: usize,
    strata: Vec<StratumLine>,
    completely_s: bool,
    witness: Option<Vec<usize>>,
}

fn cmd_geometry(domain_file: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let spec = load_domain_spec(domain_file)?;
    let (domain, warnings) = PolyhedralDomain::from_spec(&spec)
        .map_err(|e| CliError::input(format!("{}: {e}", domain_file.display())))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let faces = domain.faces().len();
    let mut strata = Vec::new();
    let mut masks: Vec<u32> = (1..(1u32 << faces)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let subset: Vec<usize> = (0..faces).filter(|i| mask & (1 << i) != 0).collect();
        let rep = domain
            .stratum_representative(&subset)
            .map_err(|e| CliError::input(format!("stratum {subset:?}: {e}")))?;
        let Some(rep) = rep else { continue };
        let detail = domain
            .classify_detailed(&rep)
            .map_err(|e| CliError::input(format!("stratum {subset:?}: {e}")))?;
        println!("stratum {:?}: {:?} (margin {:.6})", subset, detail.class, detail.margin);
        strata.push(StratumLine { faces: subset, classification: detail.class, margin: detail.margin });
    }
    let verdict = domain
        .is_completely_s()
        .map_err(|e| CliError::input(format!("completely-S audit: {e}")))?;
    let (completely_s, witness) = match &verdict {
        sklab_core::geometry::CompletelySVerdict::CompletelyS { .. } => (true, None),
        sklab_core::geometry::CompletelySVerdict::NotCompletelyS { witness } => {
            (false, Some(witness.clone()))
        }
    };
    match &witness {
        None => println!("completely-S: true"),
        Some(w) => println!("completely-S: false, witness {w:?}"),
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::internal(format!("create {}: {e}", dir.display())))?;
        let report =
            GeometryReport { dimension: domain.dimension(), face_count: faces, strata, completely_s, witness };
        write_json(&dir.join("geometry_report.json"), &report)?;
    }
    Ok(())
}

fn cmd_solve(domain_file: &Path, psi_file: &Path, out: &Path) -> Result<(), CliError> {
    let spec = load_domain_spec(domain_file)?;
    let (domain, warnings) = PolyhedralDomain::from_spec(&spec)
        .map_err(|e| CliError::input(format!("{}: {e}", domain_file.display())))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let reader = std::io::BufReader::new(
        std::fs::File::open(psi_file)
            .map_err(|e| CliError::input(format!("cannot open {}: {e}", psi_file.display())))?,
    );
    let psi = DiscretePath::read_csv(reader)
        .map_err(|e| CliError::input(format!("{}: {e}", psi_file.display())))?;
    if psi.dim() != domain.dimension() {
        return Err(CliError::input(format!(
            "path dimension {} does not match domain dimension {}",
            psi.dim(),
            domain.dimension()
        )));
    }
    let solution = match solve_sp_path(&domain, &psi) {
        Ok(s) => s,
        Err(SolveError::RayTermination { step }) => {
            return Err(CliError::solver(format!("ray termination at step {step}")))
        }
        Err(SolveError::BadInitialPoint) => {
            return Err(CliError::input("initial point lies outside the domain".into()))
        }
        Err(e) => return Err(CliError::input(format!("solve failed: {e}"))),
    };
    solution
        .write_to_dir(out)
        .map_err(|e| CliError::internal(format!("write {}: {e}", out.display())))?;
    let outputs = vec![
        "phi.csv".into(),
        "eta.csv".into(),
        "local_times.csv".into(),
        "diagnostics.json".into(),
    ];
    write_manifest(out, "solve", 0, outputs)?;
    println!(
        "solved {} steps; total pushing per face: {:?}",
        solution.constrained.len().saturating_sub(1),
        (0..solution.face_count)
            .map(|i| *solution.cumulative_local_time(i).last().unwrap_or(&0.0))
            .collect::<Vec<_>>()
    );
    Ok(())
}

#[derive(Serialize)]
struct PathFailure {
    index: usize,
    error: String,
}

#[derive(Serialize)]
struct EnsembleStats {
    paths_ok: usize,
    paths_failed: Vec<PathFailure>,
    tau_v_count: usize,
    terminal_time: f64,
    terminal_mean: Vec<f64>,
    terminal_variance: Vec<f64>,
    mean_local_times: Vec<f64>,
    mean_boundary_fraction: f64,
}

fn ensemble_stats(
    ensemble: &[SimOutput],
    failures: Vec<PathFailure>,
    dim: usize,
    faces: usize,
) -> EnsembleStats {
    let mut terminal = vec![RunningStats::new(); dim];
    let mut local = vec![0.0; faces];
    let mut boundary = RunningStats::new();
    let mut tau_v_count = 0usize;
    let mut terminal_time = 0.0f64;
    for out in ensemble {
        let last = out.z_path.len() - 1;
        terminal_time = terminal_time.max(out.z_path.time(last));
        for d in 0..dim {
            terminal[d].push(out.z_path.value(last)[d]);
        }
        for (acc, v) in local.iter_mut().zip(&out.local_times) {
            *acc += v / ensemble.len() as f64;
        }
        if out.n_steps() > 0 {
            boundary.push(out.boundary_step_count as f64 / out.n_steps() as f64);
        }
        tau_v_count += out.tau_v.is_some() as usize;
    }
    EnsembleStats {
        paths_ok: ensemble.len(),
        paths_failed: failures,
        tau_v_count,
        terminal_time,
        terminal_mean: terminal.iter().map(|s| s.mean()).collect(),
        terminal_variance: terminal.iter().map(|s| s.variance()).collect(),
        mean_local_times: local,
        mean_boundary_fraction: boundary.mean(),
    }
}

fn run_ensemble(resolved: &ResolvedConfig) -> Result<(Vec<SimOutput>, Vec<PathFailure>), CliError> {
    let results = simulate_ensemble(&resolved.domain, &resolved.coefficients, &resolved.config.sim)
        .map_err(|e| match e {
            SimError::Config(msg) => CliError::input(msg),
            SimError::Solve(SolveError::NonCompletelyS { witness }) => CliError::input(format!(
                "domain is not completely-S (witness {witness:?}); set stop_on_v"
            )),
            other => CliError::solver(format!("{other}")),
        })?;
    let mut ensemble = Vec::new();
    let mut failures = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(out) => ensemble.push(out),
            Err(e) => failures.push(PathFailure { index: idx, error: e.to_string() }),
        }
    }
    if ensemble.is_empty() {
        return Err(CliError::solver("every path failed to simulate".into()));
    }
    Ok((ensemble, failures))
}

fn simulate_into(
    resolved: &ResolvedConfig,
    out: &Path,
) -> Result<(Vec<SimOutput>, Vec<String>), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::internal(format!("create {}: {e}", out.display())))?;
    let (ensemble, failures) = run_ensemble(resolved)?;
    std::fs::write(out.join("run.json"), resolved.canonical_json())
        .map_err(|e| CliError::internal(format!("write run.json: {e}")))?;
    let mut outputs = vec!["run.json".to_string()];
    outputs.extend(write_ensemble(out, &ensemble)?);
    let stats = ensemble_stats(
        &ensemble,
        failures,
        resolved.domain.dimension(),
        resolved.domain.faces().len(),
    );
    write_json(&out.join("stats.json"), &stats)?;
    outputs.push("stats.json".into());
    println!(
        "simulated {} paths ({} failed, {} stopped at V); terminal mean {:?}",
        stats.paths_ok,
        stats.paths_failed.len(),
        stats.tau_v_count,
        stats.terminal_mean
    );
    Ok((ensemble, outputs))
}

fn load_and_resolve(config_path: &Path, overrides: &Overrides) -> Result<ResolvedConfig, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = cfg.resolve(base)?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    Ok(resolved)
}

fn cmd_simulate(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let resolved = load_and_resolve(config_path, overrides)?;
    let (_, outputs) = simulate_into(&resolved, out)?;
    write_manifest(out, &resolved.hash(), resolved.config.sim.seed, outputs)?;
    Ok(())
}

fn verify_ensemble(
    resolved: &ResolvedConfig,
    ensemble: &[SimOutput],
    out: &Path,
) -> Result<bool, CliError> {
    let battery = resolved.battery()?;
    let vs = &resolved.config.verify;
    let options = CrossCheckOptions {
        time_pairs: vs.time_pairs.clone(),
        bins: vs.bins,
        z_threshold: vs.z_threshold,
        hull_windows_per_path: vs.hull_windows_per_path,
        hull_paths: vs.hull_paths,
        epsilons: vs.epsilons.clone(),
        seed: resolved.config.sim.seed ^ 0x7e57,
    };
    let report = cross_check_formulations(
        ensemble,
        &resolved.domain,
        &resolved.coefficients,
        &resolved.config.sim.initial_point,
        &battery,
        &options,
    )
    .map_err(|e| CliError::input(format!("verification setup failed: {e}")))?;
    for item in &report.items {
        println!(
            "check {}: {} ({})",
            item.name,
            if item.pass { "PASS" } else { "FAIL" },
            item.detail
        );
    }
    write_json(&out.join("verify_report.json"), &report)?;
    Ok(report.pass)
}

fn cmd_verify(run_dir: &Path) -> Result<(), CliError> {
    let cfg: RunConfig = {
        let text = std::fs::read_to_string(run_dir.join("run.json")).map_err(|e| {
            CliError::input(format!("cannot read {}/run.json: {e}", run_dir.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("cannot parse run.json: {e}")))?
    };
    let resolved = cfg.resolve(run_dir)?;
    let ensemble =
        read_ensemble(run_dir, resolved.domain.dimension(), resolved.domain.faces().len())?;
    let pass = verify_ensemble(&resolved, &ensemble, run_dir)?;
    // Refresh the manifest so it covers the new report.
    let outputs = list_outputs(run_dir)?;
    write_manifest(run_dir, &resolved.hash(), resolved.config.sim.seed, outputs)?;
    if pass {
        println!("verification: PASS");
        Ok(())
    } else {
        Err(CliError::verification("verification failed; see verify_report.json".into()))
    }
}

fn stationary_into(resolved: &ResolvedConfig, out: &Path) -> Result<(bool, Vec<String>), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::internal(format!("create {}: {e}", out.display())))?;
    let ss = &resolved.config.stationary;
    let burn_in = ss.burn_in.unwrap_or(resolved.config.sim.horizon * 0.1);
    let mut sim = resolved.config.sim.clone();
    if let Some(bridge) = ss.bridge_reflection {
        sim.bridge_reflection = bridge;
    }
    let estimate =
        estimate_stationary(&resolved.domain, &resolved.coefficients, &sim, burn_in, ss.thin)
            .map_err(|e| CliError::input(format!("stationary estimation failed: {e}")))?;
    for w in &estimate.warnings {
        eprintln!("warning: {w}");
    }
    let battery = resolved.battery()?;
    let report = check_stationary_characterization(
        &estimate,
        &resolved.domain,
        &resolved.coefficients,
        &battery,
        &ss.epsilons,
    )
    .map_err(|e| CliError::input(format!("characterization failed: {e}")))?;

    let mut outputs = Vec::new();
    for d in 0..resolved.domain.dimension() {
        let name = format!("histogram_x{}.csv", d + 1);
        let mut text = String::from("lo,hi,fraction\n");
        for (lo, hi, frac) in estimate.marginal_histogram(d, 40) {
            text.push_str(&format!("{lo},{hi},{frac}\n"));
        }
        std::fs::write(out.join(&name), text)
            .map_err(|e| CliError::internal(format!("write {name}: {e}")))?;
        outputs.push(name);
    }
    write_json(&out.join("stationary_report.json"), &report)?;
    outputs.push("stationary_report.json".into());
    println!(
        "stationary samples: {} (mean {:?}); characterization: {}",
        estimate.sample_count(),
        estimate.mean,
        if report.pass { "PASS" } else { "FAIL" }
    );
    for line in &report.integrals {
        println!(
            "  int Lf dpi [{}]: {:.6} +- {:.6} ({})",
            line.test_fn_id,
            line.estimate,
            line.std_error,
            if line.pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "  boundary mass intercept: {:.6} +- {:.6} ({})",
        report.boundary_intercept,
        report.boundary_intercept_se,
        if report.boundary_pass { "PASS" } else { "FAIL" }
    );
    Ok((report.pass, outputs))
}

fn cmd_stationary(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let resolved = load_and_resolve(config_path, overrides)?;
    let (pass, outputs) = stationary_into(&resolved, out)?;
    write_manifest(out, &resolved.hash(), resolved.config.sim.seed, outputs)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::verification(
            "stationary characterization failed; see stationary_report.json".into(),
        ))
    }
}

fn cmd_pipeline(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let resolved = load_and_resolve(config_path, overrides)?;
    let (ensemble, mut outputs) = simulate_into(&resolved, out)?;
    let verify_pass = verify_ensemble(&resolved, &ensemble, out)?;
    outputs.push("verify_report.json".into());
    let (stationary_pass, stat_outputs) = stationary_into(&resolved, out)?;
    outputs.extend(stat_outputs);
    // Manifest last: its presence marks a complete run.
    write_manifest(out, &resolved.hash(), resolved.config.sim.seed, outputs)?;
    if verify_pass && stationary_pass {
        println!("pipeline: PASS");
        Ok(())
    } else {
        Err(CliError::verification("pipeline verification failed".into()))
    }
}

fn list_outputs(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut outputs = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d)
            .map_err(|e| CliError::internal(format!("read {}: {e}", d.display())))?;
        for entry in entries {
            let entry = entry.map_err(|e| CliError::internal(e.to_string()))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                if let Ok(rel) = path.strip_prefix(dir) {
                    outputs.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
        }
    }
    outputs.sort();
    Ok(outputs)
}

fn write_manifest(
    dir: &Path,
    config_hash: &str,
    seed: u64,
    mut outputs: Vec<String>,
) -> Result<(), CliError> {
    outputs.sort();
    let manifest = RunManifest {
        tool: "sklab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash.into(),
        seed,
        created_unix_ms: now_unix_ms(),
        outputs,
    };
    write_json(&runs::manifest_path(dir), &manifest)
}
