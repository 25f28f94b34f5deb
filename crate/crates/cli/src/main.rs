//! `franson`: simulate, correlate and analyze Franson time-bin experiments.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and 2
//! for runtime failures. Diagnostics go to standard error; data goes to
//! files and standard output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use franson_core::analytics::{chsh, ChshCounts, DetectorPair};
use franson_core::correlator::{coincidences_at, cross_correlate_chunked, normalize_g2};
use franson_core::montecarlo::{generate, SimMode};
use franson_core::pipeline::{
    run, write_atomic, Experiment, ExperimentKind, Manifest, Mode, PipelineConfig,
};
use franson_core::source::power_calibration;
use franson_core::tags::{Channel, TagSet};

const OUTPUT_DIR_ENV: &str = "FRANSON_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "franson", version, about)]
struct Cli {
    /// Run configuration (JSON). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `section.key=value`, applied after parsing.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory. Without it the config decides; without a config,
    /// $FRANSON_OUTPUT_DIR, then `results`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte-Carlo seed, same as `--set montecarlo.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Analytic,
    Montecarlo,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Analytic => Mode::Analytic,
            ModeArg::Montecarlo => Mode::Montecarlo,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Args, Debug)]
struct ModeOpt {
    #[arg(long, value_enum, default_value = "analytic")]
    mode: ModeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Qtt,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// g²(Δt) map over the phase of analyzer A.
    Map(ModeOpt),
    /// Lag-0 fringes of all four detector pairs and their visibility.
    Fringes(ModeOpt),
    /// CHSH S parameter from exact rates, a simulation, or tag files.
    Chsh {
        /// Exact rates only (same as --mode analytic).
        #[arg(long, conflicts_with_all = ["mode", "tags_dir"])]
        analytic: bool,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Directory holding chsh_0 .. chsh_3 tag files from `tags --chsh`.
        #[arg(long)]
        tags_dir: Option<PathBuf>,
    },
    /// S and g²(0) versus laser background, or the baseline study.
    Sweep {
        #[command(flatten)]
        mode: ModeOpt,
        /// Baseline factorization and super-bunching instead.
        #[arg(long)]
        baseline: bool,
    },
    /// Simulate time tags.
    Tags {
        /// One run per CHSH setting, written as chsh_0 .. chsh_3.
        #[arg(long, conflicts_with = "hbt")]
        chsh: bool,
        /// Single splitter onto detectors A1 and A2.
        #[arg(long)]
        hbt: bool,
        /// Also write one file per channel, tags_<channel>.
        #[arg(long)]
        split: bool,
        #[arg(long, value_enum, default_value = "qtt")]
        format: Format,
    },
    /// Cross-correlation histogram of two tag streams.
    Correlate {
        /// Tag file, optionally `path:CHANNEL`.
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Bin width, e.g. `100ps` or `1ns`.
        #[arg(long, value_parser = parse_duration_ps)]
        bin: u64,
        #[arg(long, value_parser = parse_duration_ps)]
        max_lag: u64,
        /// Acquisition time for normalization; defaults to the tag span.
        #[arg(long, value_parser = parse_duration_ps)]
        duration: Option<u64>,
    },
    /// Multiport one-photon-per-port post-selection probabilities.
    Multiport {
        /// Largest port count (overrides network.multiport_n).
        #[arg(long)]
        n: Option<u8>,
    },
    /// Incident optical power for a mean photon number per lifetime.
    Calibrate {
        #[arg(long)]
        nbar: Option<f64>,
    },
}

/// A failure tagged with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_failure(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let config = error.chain().any(|c| {
            c.downcast_ref::<franson_core::Error>()
                .is_some_and(|e| e.is_config())
        });
        Failure {
            code: if config { 1 } else { 2 },
            error,
        }
    }
}

impl From<franson_core::Error> for Failure {
    fn from(e: franson_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

/// Parses `250`, `250ps`, `1.5ns`, `2us`, `1ms` or `1s` into picoseconds.
fn parse_duration_ps(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let scale = match unit {
        "" | "ps" => 1.0,
        "ns" => 1e3,
        "us" => 1e6,
        "ms" => 1e9,
        "s" => 1e12,
        other => return Err(format!("unknown time unit {other:?}")),
    };
    let v: f64 = num.parse().map_err(|_| format!("not a duration: {s:?}"))?;
    let ps = (v * scale).round();
    if !(ps >= 0.0 && ps < u64::MAX as f64) {
        return Err(format!("duration out of range: {s:?}"));
    }
    Ok(ps as u64)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => {
            let mut cfg = PipelineConfig::default();
            if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
                cfg.output_dir = dir.into();
            }
            cfg
        }
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.montecarlo.seed = Some(seed);
    }
    if let Some(out) = cli.out.clone() {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_tags(path: &Path) -> anyhow::Result<TagSet> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    TagSet::read_any(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// `path` or `path:CHANNEL`. Without a channel the file must hold exactly one
/// non-empty stream.
fn read_stream(spec: &str) -> Result<(Vec<u64>, Channel), Failure> {
    let (path, channel) = match spec.rsplit_once(':') {
        Some((p, c)) if c.parse::<Channel>().is_ok() => (p, Some(c.parse::<Channel>()?)),
        _ => (spec, None),
    };
    let set = read_tags(Path::new(path))?;
    let channel = match channel {
        Some(c) => c,
        None => {
            let filled: Vec<Channel> = Channel::ALL
                .into_iter()
                .filter(|&c| !set.get(c).is_empty())
                .collect();
            match filled.as_slice() {
                [c] => *c,
                _ => {
                    return Err(config_failure(anyhow!(
                        "{path} holds {} non-empty channels; name one as {path}:CHANNEL",
                        filled.len()
                    )))
                }
            }
        }
    };
    Ok((set.get(channel).as_slice().to_vec(), channel))
}

fn write_tag_file(set: &TagSet, path: &Path, format: Format) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Qtt => set.write_qtt(&mut buf)?,
        Format::Csv => set.write_csv(&mut buf)?,
    }
    write_atomic(path, &buf)?;
    info!("wrote {} ({} tags)", path.display(), set.total());
    Ok(())
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Qtt => "qtt",
        Format::Csv => "csv",
    }
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run_experiment(cfg: &PipelineConfig, kind: ExperimentKind, mode: Mode) -> Result<(), Failure> {
    let report = run(cfg, Experiment::new(kind, mode))?;
    for c in &report.checks {
        info!(
            "{}: {} ({})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    print_json(&json!({
        "experiment": kind.name(),
        "mode": mode.name(),
        "dir": report.dir,
        "passed": report.passed(),
        "results": report.results,
    }))?;
    Ok(())
}

fn chsh_from_tags(cfg: &PipelineConfig, dir: &Path) -> Result<(), Failure> {
    let settings = cfg.analysis.chsh;
    let window = cfg.window_ps();
    let mut counts = [[0.0; 4]; 4];
    for (k, row) in counts.iter_mut().enumerate() {
        let path = ["qtt", "csv"]
            .iter()
            .map(|e| dir.join(format!("chsh_{k}.{e}")))
            .find(|p| p.exists())
            .ok_or_else(|| anyhow!("no chsh_{k}.qtt or chsh_{k}.csv in {}", dir.display()))?;
        let set = read_tags(&path)?;
        for p in DetectorPair::ALL {
            let a = if p.a == 1 { Channel::A1 } else { Channel::A2 };
            let b = if p.b == 1 { Channel::B1 } else { Channel::B2 };
            row[p.index()] =
                coincidences_at(set.get(a).as_slice(), set.get(b).as_slice(), 0, window)? as f64;
        }
    }
    let r = chsh(&ChshCounts { settings, counts })?;
    let doc = json!({"tags": r.to_json(), "coincidence_window_ps": window});
    let path = cfg.output_dir.join("chsh.json");
    write_atomic(
        &path,
        serde_json::to_string_pretty(&doc)
            .map_err(anyhow::Error::from)?
            .as_bytes(),
    )?;
    print_json(&doc)?;
    Ok(())
}

fn simulate_tags(
    cfg: &PipelineConfig,
    chsh_runs: bool,
    hbt: bool,
    split: bool,
    format: Format,
) -> Result<(), Failure> {
    let ext = extension(format);
    let dir = &cfg.output_dir;
    let jobs: Vec<(String, f64, f64)> = if chsh_runs {
        cfg.analysis
            .chsh
            .pairs()
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| (format!("chsh_{k}"), a, b))
            .collect()
    } else {
        vec![("tags".into(), cfg.network.phi_a, cfg.network.phi_b)]
    };
    let mut summary = Vec::new();
    for (i, (stem, pa, pb)) in jobs.iter().enumerate() {
        let mut rc = cfg.run_config(*pa, *pb, i as u64)?;
        if hbt {
            rc.mode = SimMode::Hbt;
        }
        let run = generate(&rc)?;
        let path = dir.join(format!("{stem}.{ext}"));
        write_tag_file(&run.tags, &path, format)?;
        if split {
            for c in Channel::ALL {
                let mut one = TagSet::default();
                one.streams[c.index()] = run.tags.get(c).clone();
                write_tag_file(&one, &dir.join(format!("{stem}_{c}.{ext}")), format)?;
            }
        }
        let truth = run.truth.to_json();
        let text = serde_json::to_string_pretty(&truth).map_err(anyhow::Error::from)?;
        write_atomic(&dir.join(format!("{stem}_truth.json")), text.as_bytes())?;
        summary.push(json!({"file": path, "phi_a": pa, "phi_b": pb, "truth": truth}));
    }
    let m = Manifest::new("tags", "montecarlo", cfg.to_json(), cfg.montecarlo.seed);
    let text = serde_json::to_string_pretty(&m).map_err(anyhow::Error::from)?;
    write_atomic(&dir.join("tags_manifest.json"), text.as_bytes())?;
    print_json(&json!({ "runs": summary }))?;
    Ok(())
}

fn correlate(
    cfg: &PipelineConfig,
    a: &str,
    b: &str,
    bin: u64,
    max_lag: u64,
    duration: Option<u64>,
    jobs: usize,
) -> Result<(), Failure> {
    if bin == 0 || !max_lag.is_multiple_of(bin) {
        return Err(config_failure(anyhow!(
            "--max-lag must be a positive multiple of --bin"
        )));
    }
    let (x, ca) = read_stream(a)?;
    let (y, cb) = read_stream(b)?;
    let h = cross_correlate_chunked(&x, &y, bin, max_lag, jobs.max(1))?;
    let dir = &cfg.output_dir;
    let mut csv = Vec::new();
    h.write_csv(&mut csv)?;
    write_atomic(&dir.join("histogram.csv"), &csv)?;
    let g2 = normalize_g2(&h, duration).ok().map(|g| g.to_json());
    let doc = json!({
        "a": {"source": a, "channel": ca.to_string(), "tags": h.n_x},
        "b": {"source": b, "channel": cb.to_string(), "tags": h.n_y},
        "pairs": h.total(),
        "g2": g2,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?;
    write_atomic(&dir.join("g2.json"), text.as_bytes())?;
    info!("{} pairs in {} bins", h.total(), h.counts.len());
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli)?;
    let jobs = cli.jobs.unwrap_or_else(rayon::current_num_threads);
    match &cli.command {
        Command::Map(m) => run_experiment(&cfg, ExperimentKind::G2Map, m.mode.into()),
        Command::Fringes(m) => run_experiment(&cfg, ExperimentKind::FringeScan, m.mode.into()),
        Command::Chsh {
            analytic,
            mode,
            tags_dir,
        } => match tags_dir {
            Some(dir) => chsh_from_tags(&cfg, dir),
            None => {
                let mode = if *analytic {
                    Mode::Analytic
                } else {
                    mode.map(Mode::from).unwrap_or(Mode::Analytic)
                };
                run_experiment(&cfg, ExperimentKind::ChshTable, mode)
            }
        },
        Command::Sweep { mode, baseline } => {
            let kind = if *baseline {
                ExperimentKind::BaselineStudy
            } else {
                ExperimentKind::BackgroundSweep
            };
            run_experiment(&cfg, kind, mode.mode.into())
        }
        Command::Tags {
            chsh,
            hbt,
            split,
            format,
        } => {
            cfg.require_seed()?;
            simulate_tags(&cfg, *chsh, *hbt, *split, *format)
        }
        Command::Correlate {
            a,
            b,
            bin,
            max_lag,
            duration,
        } => correlate(&cfg, a, b, *bin, *max_lag, *duration, jobs),
        Command::Multiport { n } => {
            if let Some(n) = n {
                cfg.apply_override(&format!("network.multiport_n={n}"))?;
            }
            run_experiment(&cfg, ExperimentKind::MultiportPostselect, Mode::Analytic)
        }
        Command::Calibrate { nbar } => {
            let s = &cfg.source;
            let nbar = nbar.unwrap_or(s.nbar);
            let watts = power_calibration(nbar, s.t1, s.nu)?;
            println!("{watts:.4e} W");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: --jobs {n}: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
