//! Command-line front end: one scenario in, CSV tables and a run manifest out.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ground;
use crate::prob::{derive_seed, index, normal};
use crate::scenario::{load_scenario, Scenario};
use crate::soi::SoiEngine;
use crate::subset::run_subset_simulation;
use crate::surrogate::{optimize_location, EngineObjective, OptimizationTrace};

#[derive(Debug, Parser)]
#[command(name = "settle-sense", version, about = "Reliability updating and settlement-monitoring placement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Settlement of the ground surface at the mean volume loss and trough width.
    SettlementGrid(RunArgs),
    /// Prior failure probability by subset simulation.
    Reliability(RunArgs),
    /// Posterior failure probability for every configured measurement.
    Update(RunArgs),
    /// SOI at the configured monitoring locations.
    Soi(RunArgs),
    /// Kriging surface of SOI over the observation region.
    SoiMap(RunArgs),
    /// Best monitoring location in the observation region.
    Optimize(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "SETTLE_SENSE_THREADS")]
    pub threads: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SettlementGrid(_) => "settlement-grid",
            Command::Reliability(_) => "reliability",
            Command::Update(_) => "update",
            Command::Soi(_) => "soi",
            Command::SoiMap(_) => "soi-map",
            Command::Optimize(_) => "optimize",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::SettlementGrid(a)
            | Command::Reliability(a)
            | Command::Update(a)
            | Command::Soi(a)
            | Command::SoiMap(a)
            | Command::Optimize(a) => a,
        }
    }
}

/// Formats with six significant digits; integral magnitudes below 1e6
/// print without a fraction.
pub fn fmt6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A CSV table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io {
            path: self.name.to_string(),
            source: std::io::Error::other(e.to_string()),
        };
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io {
            path: self.name.to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }
}

fn f(v: f64) -> String {
    fmt6(v)
}

fn int(v: usize) -> String {
    v.to_string()
}

fn flag(b: bool) -> String {
    b.to_string()
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    rows: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    seed: u64,
    config_file: String,
    config_sha256: String,
    outputs: Vec<OutputEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Computes the tables of one command.
pub fn tables(command: &Command, scenario: &Scenario) -> Result<Vec<Table>> {
    match command {
        Command::SettlementGrid(_) => settlement_grid(scenario),
        Command::Reliability(_) => reliability(scenario),
        Command::Update(_) => update(scenario),
        Command::Soi(_) => soi(scenario),
        Command::SoiMap(_) => {
            let trace = optimize(scenario)?;
            Ok(vec![surface_table(&trace), training_table(&trace)])
        }
        Command::Optimize(_) => {
            let trace = optimize(scenario)?;
            Ok(vec![optimum_table(scenario, &trace), trace_table(&trace)])
        }
    }
}

fn settlement_grid(s: &Scenario) -> Result<Vec<Table>> {
    let v_l = s.model.variable(index::VOLUME_LOSS).mean() / 100.0;
    let k = s.model.variable(index::TROUGH_WIDTH).mean();
    let mut t = Table::new("settlement_grid.csv", &["x", "y", "settlement_mm"]);
    for p in s.settlement_grid.nodes() {
        let v = ground::settlement(&s.tunnel, ground::GroundPoint::surface(p[0], p[1]), v_l, k)?;
        t.push(vec![f(p[0]), f(p[1]), f(v)]);
    }
    Ok(vec![t])
}

fn reliability(s: &Scenario) -> Result<Vec<Table>> {
    let r = run_subset_simulation(|u| s.limit_state_standard(u), s.model.dim(), &s.subset_params())?;
    let mut summary = Table::new(
        "reliability.csv",
        &["p_f", "cov", "beta", "n_levels", "n_evaluations"],
    );
    summary.push(vec![
        f(r.p_f),
        f(r.cov),
        f(-normal::quantile(r.p_f)),
        int(r.levels.len()),
        int(r.n_evaluations),
    ]);
    let mut levels = Table::new("levels.csv", &["level", "threshold", "probability", "gamma", "n_samples"]);
    for (i, l) in r.levels.iter().enumerate() {
        levels.push(vec![int(i), f(l.threshold), f(l.probability), f(l.gamma), int(l.n_samples)]);
    }
    Ok(vec![summary, levels])
}

fn update(s: &Scenario) -> Result<Vec<Table>> {
    let engine = SoiEngine::new(s);
    let mut t = Table::new(
        "update.csv",
        &[
            "x", "y", "z", "value", "p_f", "cov_pf", "p_f_given_z", "cov_pfz", "r_up", "n_eva", "n_ss", "converged",
        ],
    );
    for m in &s.measurements {
        let (r, converged) = match engine.update_at(m.location, m.value) {
            Ok(r) => (r, true),
            Err(Error::NotConverged { best, .. }) => (*best, false),
            Err(e) => return Err(e),
        };
        t.push(vec![
            f(m.location.x),
            f(m.location.y),
            f(m.location.z),
            f(m.value),
            f(r.p_f),
            f(r.cov_pf),
            f(r.p_f_given_z),
            f(r.cov_pfz),
            f(r.r_up),
            int(r.n_evaluations),
            int(r.n_ss),
            flag(converged),
        ]);
    }
    Ok(vec![t])
}

fn soi(s: &Scenario) -> Result<Vec<Table>> {
    let engine = SoiEngine::new(s);
    let mut summary = Table::new("soi.csv", &["x", "y", "z", "soi", "noise_sd", "converged"]);
    let mut per_z = Table::new(
        "soi_per_z.csv",
        &[
            "x", "y", "z", "information", "r_up", "p_f", "cov_pf", "p_f_given_z", "cov_pfz", "n_ss", "converged",
        ],
    );
    for loc in &s.soi_locations {
        let e = engine.soi_at(*loc)?;
        summary.push(vec![
            f(loc.x),
            f(loc.y),
            f(loc.z),
            f(e.soi),
            f(e.noise_var.sqrt()),
            flag(e.all_converged()),
        ]);
        for p in &e.per_z {
            per_z.push(vec![
                f(loc.x),
                f(loc.y),
                f(loc.z),
                f(p.z),
                f(p.r_up),
                f(p.p_f),
                f(p.cov_pf),
                f(p.p_f_given_z),
                f(p.cov_pfz),
                int(p.n_ss),
                flag(p.converged),
            ]);
        }
    }
    Ok(vec![summary, per_z])
}

fn optimize(s: &Scenario) -> Result<OptimizationTrace> {
    let objective = EngineObjective(SoiEngine::new(s));
    optimize_location(&s.region, &objective, &s.optimizer, derive_seed(s.seed, "optimizer", 0))
}

fn surface_table(t: &OptimizationTrace) -> Table {
    let mut out = Table::new("soi_map.csv", &["x", "y", "soi_mean", "soi_variance"]);
    for p in &t.surface {
        out.push(vec![f(p.point[0]), f(p.point[1]), f(p.mean), f(p.variance)]);
    }
    out
}

fn training_table(t: &OptimizationTrace) -> Table {
    let mut out = Table::new("training.csv", &["x", "y", "soi", "noise_var", "stage", "iteration"]);
    for e in &t.initial {
        out.push(vec![
            f(e.point[0]),
            f(e.point[1]),
            f(e.soi),
            f(e.noise_var),
            "initial".into(),
            int(0),
        ]);
    }
    for s in &t.steps {
        out.push(vec![
            f(s.point[0]),
            f(s.point[1]),
            s.soi.map(f).unwrap_or_else(|| "NaN".into()),
            "NaN".into(),
            if s.soi.is_some() { "added" } else { "failed" }.into(),
            int(s.iteration),
        ]);
    }
    out
}

fn optimum_table(s: &Scenario, t: &OptimizationTrace) -> Table {
    let mut out = Table::new(
        "optimize.csv",
        &[
            "x_min",
            "x_max",
            "y_min",
            "y_max",
            "face_y",
            "l_star_x",
            "l_star_y",
            "l_star_z",
            "refined_x",
            "refined_y",
            "soi_star",
            "iterations",
            "termination",
            "degenerate",
            "failed_points",
        ],
    );
    out.push(vec![
        f(s.region.x[0]),
        f(s.region.x[1]),
        f(s.region.y[0]),
        f(s.region.y[1]),
        f(s.tunnel.face_y),
        f(t.l_star[0]),
        f(t.l_star[1]),
        f(0.0),
        f(t.l_star_refined[0]),
        f(t.l_star_refined[1]),
        f(t.soi_star),
        int(t.iterations()),
        t.termination.as_str().into(),
        flag(t.degenerate),
        int(t.failed.len()),
    ]);
    out
}

fn trace_table(t: &OptimizationTrace) -> Table {
    let mut out = Table::new("trace.csv", &["iteration", "x", "y", "soi", "max_ei", "best_observed"]);
    for s in &t.steps {
        out.push(vec![
            int(s.iteration),
            f(s.point[0]),
            f(s.point[1]),
            s.soi.map(f).unwrap_or_else(|| "NaN".into()),
            f(s.max_ei),
            f(s.best_observed),
        ]);
    }
    out
}

/// Runs one command and writes its tables, the effective configuration and
/// the manifest into the output directory. Returns the written file names.
pub fn run(command: &Command) -> Result<Vec<String>> {
    let args = command.args();
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start {:?} worker threads: {e}", args.threads)))?;
    let tables = pool.install(|| tables(command, &scenario))?;

    fs::create_dir_all(&args.out).map_err(|source| Error::Io {
        path: args.out.display().to_string(),
        source,
    })?;
    let config = scenario.effective_toml();
    let config_name = "effective_config.toml";
    write_file(&args.out, config_name, config.as_bytes())?;
    let mut outputs = Vec::new();
    let mut names = vec![config_name.to_string()];
    for t in &tables {
        let bytes = t.to_csv()?;
        write_file(&args.out, t.name, &bytes)?;
        outputs.push(OutputEntry {
            file: t.name.into(),
            rows: t.rows.len(),
            sha256: sha256_hex(&bytes),
        });
        names.push(t.name.into());
    }
    let manifest = Manifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: scenario.seed,
        config_file: config_name.into(),
        config_sha256: sha256_hex(config.as_bytes()),
        outputs,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&args.out, "manifest.json", json.as_bytes())?;
    names.push("manifest.json".into());
    Ok(names)
}

/// Parses arguments, runs, and returns the process exit code. Errors go to
/// stderr as one JSON object with a `category` field.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            let report = serde_json::json!({
                "category": e.category(),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{report}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(-19.617_234_9), "-19.6172");
        assert_eq!(fmt6(0.001_349_898), "0.0013499");
        assert_eq!(fmt6(1.349_898e-7), "1.3499e-7");
        assert_eq!(fmt6(123_456_789.0), "1.23457e8");
        assert_eq!(fmt6(10.0), "10");
        assert_eq!(fmt6(0.2), "0.2");
        assert_eq!(fmt6(29.999_999_999), "30");
        assert_eq!(fmt6(f64::NAN), "NaN");
    }

    #[test]
    fn csv_has_header_and_unix_newlines() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec![f(1.5), "x".into()]);
        assert_eq!(t.to_csv().unwrap(), b"a,b\n1.5,x\n");
    }
}
