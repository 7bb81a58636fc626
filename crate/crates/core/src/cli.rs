//! `copss` command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{CqiMode, LayoutKind, ScenarioConfig};
use crate::engine::{run, Algorithm, RunParams};
use crate::error::{Error, Result};
use crate::metrics::{cdf, gain_table, percentile, MetricsStore};
use crate::traffic::TrafficClass;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;

/// Environment variable overriding the scenario seed.
pub const SEED_ENV: &str = "COPSS_SEED";

#[derive(Debug, Parser)]
#[command(name = "copss", version, about = "Co-primary spectrum sharing simulator for indoor small cells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and write per-user throughput.
    Run(RunArgs),
    /// Simulate the product of sharing factors, algorithms and CQI modes.
    Sweep(SweepArgs),
    /// Summarise result files: CDF, percentiles, means, gains.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct ScenarioArgs {
    /// Scenario TOML file; defaults apply when omitted.
    #[arg(long, alias = "config")]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<LayoutKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub buildings: Option<usize>,
    /// Users per SBS as `min-max`.
    #[arg(long, value_parser = parse_users)]
    pub users_per_sbs: Option<[usize; 2]>,
    #[arg(long)]
    pub deployment_probability: Option<f64>,
    /// MCS table override (TOML with `[[level]]` entries).
    #[arg(long)]
    pub mcs_table: Option<PathBuf>,
    #[arg(long)]
    pub ttis: Option<u64>,
    #[arg(long)]
    pub drops: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub sharing: Option<f64>,
    #[arg(long)]
    pub cqi_mode: Option<CqiMode>,
    /// Replay a manifest written by an earlier run; other scenario flags are rejected.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Results CSV; the manifest goes next to it as `<stem>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// `start:stop:step` (both ends inclusive) or a single value; repeatable.
    #[arg(long, required = true)]
    pub sharing: Vec<String>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_values_t = [Algorithm::Equal])]
    pub algorithms: Vec<Algorithm>,
    /// Comma-separated CQI modes.
    #[arg(long, value_delimiter = ',', default_values_t = [CqiMode::Coordinated])]
    pub cqi_modes: Vec<CqiMode>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Emit CDF points `(throughput_bps, probability)`.
    #[arg(long)]
    pub cdf: bool,
    /// Restrict to one traffic class.
    #[arg(long)]
    pub class: Option<TrafficClass>,
    /// Percentile level in (0, 1], per class.
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Mean throughput per (algorithm, sharing factor, CQI mode, class).
    #[arg(long)]
    pub mean: bool,
    /// Baseline CSV; emits the per-class percentile gain of the input over it.
    #[arg(long)]
    pub gain: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub config: ScenarioConfig,
    pub params: RunParams,
}

impl RunManifest {
    pub fn new(config: ScenarioConfig, params: RunParams) -> Self {
        RunManifest { version: env!("CARGO_PKG_VERSION").to_string(), config, params }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn parse_users(s: &str) -> std::result::Result<[usize; 2], String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let lo = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    Ok([lo, hi])
}

/// Expands `start:stop:step` into its points, rounding away float drift.
pub fn expand_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::config(format!("bad range '{s}': {e}"))))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [v] => Ok(vec![*v]),
        [start, stop, step] => {
            if !(*step > 0.0) || stop < start {
                return Err(Error::config(format!("bad range '{s}': need step > 0 and start <= stop")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
        }
        _ => Err(Error::config(format!("expected VALUE or START:STOP:STEP, got '{s}'"))),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|e| Error::config(format!("{SEED_ENV}={v}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn resolve(args: &ScenarioArgs) -> Result<(ScenarioConfig, RunParams)> {
    let mut cfg = match &args.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = env_seed()? {
        cfg.seed = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(l) = args.layout {
        cfg.layout = l;
    }
    if let Some(b) = args.buildings {
        cfg.buildings = b;
    }
    if let Some(u) = args.users_per_sbs {
        cfg.users_per_sbs = u;
    }
    if let Some(p) = args.deployment_probability {
        cfg.deployment_probability = p;
    }
    if let Some(m) = &args.mcs_table {
        cfg.mcs_table = Some(m.clone());
    }
    let mut params = RunParams::default();
    if let Some(t) = args.ttis {
        params.ttis = t;
    }
    if let Some(d) = args.drops {
        params.drops = d;
    }
    if let Some(w) = args.warmup {
        params.warmup_ttis = w;
    }
    Ok((cfg, params))
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn execute(manifest: &RunManifest, out: &Path) -> Result<MetricsStore> {
    let store = run(&manifest.config, &manifest.params)?;
    store.save(out)?;
    manifest.save(&manifest_path(out))?;
    log::info!("wrote {} samples to {}", store.len(), out.display());
    Ok(store)
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let manifest = if let Some(m) = &a.manifest {
        let s = &a.scenario;
        let extra = s.scenario.is_some()
            || s.layout.is_some()
            || s.seed.is_some()
            || s.buildings.is_some()
            || s.users_per_sbs.is_some()
            || s.deployment_probability.is_some()
            || s.mcs_table.is_some()
            || s.ttis.is_some()
            || s.drops.is_some()
            || s.warmup.is_some()
            || a.algorithm.is_some()
            || a.sharing.is_some()
            || a.cqi_mode.is_some();
        if extra {
            return Err(Error::config("--manifest cannot be combined with scenario or run flags"));
        }
        RunManifest::load(m)?
    } else {
        let (mut cfg, mut params) = resolve(&a.scenario)?;
        if let Some(s) = a.sharing {
            cfg.sharing_factor = s;
            cfg.sharing_factors = None;
        }
        if let Some(alg) = a.algorithm {
            params.algorithm = alg;
        }
        if let Some(m) = a.cqi_mode {
            params.cqi_mode = m;
        }
        RunManifest::new(cfg, params)
    };
    manifest.config.validate()?;
    manifest.params.validate()?;
    execute(&manifest, &a.out).map(|_| ())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut factors = Vec::new();
    for s in &a.sharing {
        factors.extend(expand_range(s)?);
    }
    if factors.is_empty() || a.algorithms.is_empty() || a.cqi_modes.is_empty() {
        return Err(Error::config("sweep axes must be non-empty (pass --sharing)"));
    }
    let (base, params) = resolve(&a.scenario)?;
    std::fs::create_dir_all(&a.out_dir)?;
    for &alg in &a.algorithms {
        for &mode in &a.cqi_modes {
            for &s in &factors {
                let mut cfg = base.clone();
                cfg.sharing_factor = s;
                cfg.sharing_factors = None;
                let p = RunParams { algorithm: alg, cqi_mode: mode, ..params.clone() };
                let manifest = RunManifest::new(cfg, p);
                manifest.config.validate()?;
                manifest.params.validate()?;
                let out = a.out_dir.join(format!("{alg}_{mode}_s{s:.3}.csv"));
                execute(&manifest, &out)?;
            }
        }
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut store = MetricsStore::new();
    for p in &a.inputs {
        store.merge(MetricsStore::load(p)?);
    }
    if let Some(c) = a.class {
        store.samples.retain(|s| s.class == c);
    }
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut wrote = false;
    if a.cdf {
        writeln!(out, "throughput_bps,probability")?;
        for (x, p) in cdf(&store.throughputs(None))? {
            writeln!(out, "{x},{p}")?;
        }
        wrote = true;
    }
    if let Some(base) = &a.gain {
        let mut baseline = MetricsStore::load(base)?;
        if let Some(c) = a.class {
            baseline.samples.retain(|s| s.class == c);
        }
        let p = a.percentile.unwrap_or(0.05);
        writeln!(out, "class,percentile,gain_bps")?;
        for (class, g) in gain_table(&baseline, &store, p)? {
            writeln!(out, "{class},{p},{g}")?;
        }
        wrote = true;
    } else if let Some(p) = a.percentile {
        writeln!(out, "class,percentile,throughput_bps")?;
        for class in TrafficClass::ALL {
            let v = store.throughputs(Some(class));
            if !v.is_empty() {
                writeln!(out, "{class},{p},{}", percentile(&v, p)?)?;
            }
        }
        wrote = true;
    }
    if a.mean || !wrote {
        writeln!(out, "algorithm,sharing_factor,cqi_mode,class,users,mean_bps")?;
        let mut groups: std::collections::BTreeMap<(String, String, String, TrafficClass), (f64, usize)> = Default::default();
        for s in &store.samples {
            let key = (s.algorithm.to_string(), format!("{}", s.sharing_factor), s.cqi_mode.to_string(), s.class);
            let e = groups.entry(key).or_insert((0.0, 0));
            e.0 += s.throughput_bps;
            e.1 += 1;
        }
        for ((alg, sf, mode, class), (sum, n)) in groups {
            writeln!(out, "{alg},{sf},{mode},{class},{n},{}", sum / n as f64)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Maps an error to the documented exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Contract { .. } => EXIT_CONTRACT,
        Error::Config(_) | Error::Toml(_) | Error::Input(_) | Error::Json(_) | Error::Csv(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_FAILURE,
    }
}

/// Entry point shared by the binary and the tests.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
