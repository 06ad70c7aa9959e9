//! Command-line front end for the `exag` binary.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analytics::{
    difficulty_contrast, noisy_answer_analysis, read_ratings, simulated_ratings, table1_report, table2_report,
    winrate_by_rating_bin, RatingSource,
};
use crate::catalog::synth::{generate_pool, SynthParams};
use crate::catalog::{load_catalog, select_image_set, write_catalog, Catalog, FeatureFormat};
use crate::engine::{read_logs, write_logs, GameConfig, SETTING_A_BAND, SETTING_A_IMAGES, SETTING_B_BAND, SETTING_B_IMAGES};
use crate::explain::{ExplanationMode, Setting};
use crate::service::{App, ServiceConfig};
use crate::simplayer::{run_bot_games, BotPolicy};

/// Exit code for bad configuration or unreadable inputs.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "exag", version, about = "Explanation-assisted image guessing game")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        /// JSON service config; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Play bot games and write their logs.
    Simulate(SimulateArgs),
    /// Print a report over game logs.
    Analyze(AnalyzeArgs),
    /// Validate a catalog, or generate a synthetic one.
    Buildpool(BuildpoolArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    A,
    B,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::A => Setting::A,
            SettingArg::B => Setting::B,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BotArg {
    Blind,
    Aware,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Catalog directory; a synthetic pool when absent.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "b")]
    pub setting: SettingArg,
    #[arg(long, default_value = "both")]
    pub mode: ExplanationMode,
    #[arg(long, value_enum, default_value = "aware")]
    pub bot: BotArg,
    #[arg(long, default_value_t = 100)]
    pub games: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Answer accuracy of the noise wrapper; exact answers when absent.
    #[arg(long)]
    pub accuracy: Option<f64>,
    /// Coupling between answer and explanation quality.
    #[arg(long, default_value_t = 0.8)]
    pub coupling: f64,
    #[arg(long)]
    pub p0: Option<u32>,
    /// Output JSONL; `<out>.params.json` records the run parameters.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    /// Win rate by explanation use, adoption over play order.
    Table1,
    /// Score and win rate by explanation type against the baseline block.
    Table2,
    /// Win rate by in-game helpfulness bin.
    Helpfulness,
    /// Win rate by explanation correctness bin.
    Correctness,
    /// Mean set difficulty by outcome and explanation use.
    Difficulty,
    /// Win rate against answer accuracy.
    NoisyAnswers,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    /// Game log JSONL.
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long, value_enum)]
    pub report: ReportKind,
    /// Ratings JSONL; derived from logged ground truth when absent.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Catalog for the difficulty report; a synthetic pool when absent.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Seed of the synthetic pool the logs were played on.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

#[derive(Debug, clap::Args)]
pub struct BuildpoolArgs {
    /// Existing catalog to validate; a synthetic pool is generated when absent.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Where to write the (generated or re-encoded) catalog.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub images: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: FormatArg,
    /// Secrets to sample when checking both difficulty bands.
    #[arg(long, default_value_t = 50)]
    pub probes: u64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<String, CliError>;

fn synthetic(n_images: usize, seed: u64) -> Catalog {
    generate_pool(&SynthParams {
        n_images,
        seed,
        ..Default::default()
    })
}

fn load_or_synth(path: Option<&Path>, seed: u64) -> Result<Catalog, CliError> {
    match path {
        Some(p) => load_catalog(p).map_err(CliError::config),
        None => Ok(synthetic(SynthParams::default().n_images, seed)),
    }
}

fn serve(config: Option<PathBuf>, host: Option<String>, port: Option<u16>) -> CliResult {
    let mut cfg = match config {
        Some(p) => ServiceConfig::load(p).map_err(CliError::config)?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok()).map_err(CliError::config)?;
    if let Some(h) = host {
        cfg.host = h;
    }
    if let Some(p) = port {
        cfg.port = p;
    }
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| CliError::config(format!("address {}:{}: {e}", cfg.host, cfg.port)))?;
    let engine = cfg.build_engine().map_err(CliError::config)?;
    let app = Arc::new(App::new(engine, cfg).map_err(CliError::config)?);
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(crate::service::serve(app, addr)).map_err(CliError::runtime)?;
    Ok(String::new())
}

#[derive(Serialize)]
struct SimulateParams<'a> {
    catalog: Option<&'a Path>,
    setting: Setting,
    mode: ExplanationMode,
    bot: &'a str,
    games: usize,
    seed: u64,
    accuracy: Option<f64>,
    coupling: f64,
    p0: u32,
}

pub fn simulate(a: &SimulateArgs) -> CliResult {
    let catalog = load_or_synth(a.catalog.as_deref(), a.seed)?;
    let assets = crate::engine::GameAssets::from_catalog(catalog, a.seed);
    let engine = match a.accuracy {
        Some(acc) => crate::simplayer::noisy_engine(&assets, acc, a.coupling, a.seed).map_err(CliError::config)?,
        None => {
            let backend = Arc::new(crate::answerer::ScriptedBackend::new(assets.catalog.clone()));
            crate::engine::Engine::new(assets, backend)
        }
    };
    let mut cfg = GameConfig::new(a.setting.into(), a.mode, a.seed);
    if let Some(p0) = a.p0 {
        cfg = cfg.with_p0(p0);
    }
    let policy = match a.bot {
        BotArg::Blind => BotPolicy::blind(),
        BotArg::Aware => BotPolicy::aware(),
    };
    let logs = run_bot_games(&engine, &cfg, &policy, a.games, a.seed).map_err(CliError::runtime)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::runtime)?;
    }
    write_logs(&a.out, &logs, false).map_err(CliError::runtime)?;
    let params = SimulateParams {
        catalog: a.catalog.as_deref(),
        setting: a.setting.into(),
        mode: a.mode,
        bot: match a.bot {
            BotArg::Blind => "blind",
            BotArg::Aware => "aware",
        },
        games: a.games,
        seed: a.seed,
        accuracy: a.accuracy,
        coupling: a.coupling,
        p0: cfg.p0,
    };
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".params.json");
    let text = serde_json::to_string_pretty(&params).expect("params serialize");
    std::fs::write(&sidecar, text).map_err(CliError::runtime)?;
    let wins = logs.iter().filter(|l| l.won()).count();
    Ok(format!(
        "{} games, {wins} won ({:.1}%), written to {}",
        logs.len(),
        100.0 * wins as f64 / logs.len() as f64,
        a.out.display()
    ))
}

fn render<T: Serialize>(json: bool, value: &T, text: impl FnOnce(&T) -> String) -> String {
    if json {
        serde_json::to_string_pretty(value).expect("reports serialize")
    } else {
        text(value)
    }
}

fn debug_text<T: std::fmt::Debug>(v: &T) -> String {
    format!("{v:#?}")
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult {
    let logs = read_logs(&a.logs).map_err(CliError::config)?;
    let ratings = match &a.ratings {
        Some(p) => Some(read_ratings(p).map_err(CliError::config)?),
        None => None,
    };
    let (sim_answers, sim_expls) = simulated_ratings(&logs);
    let (answers, expls) = match &ratings {
        Some(r) => (r.clone(), r.clone()),
        None => (sim_answers, sim_expls),
    };
    let out = match a.report {
        ReportKind::Table1 => {
            let r = table1_report(&logs).map_err(CliError::runtime)?;
            render(a.json, &r, |r| r.to_text())
        }
        ReportKind::Table2 => {
            let r = table2_report(&logs).map_err(CliError::runtime)?;
            render(a.json, &r, |r| r.to_text())
        }
        ReportKind::Helpfulness | ReportKind::Correctness => {
            let source = match a.report {
                ReportKind::Helpfulness => RatingSource::Helpfulness,
                _ => RatingSource::Correctness(&expls),
            };
            let t = winrate_by_rating_bin(&logs, source).map_err(CliError::runtime)?;
            render(a.json, &t, |t| {
                t.rows
                    .iter()
                    .map(|r| {
                        let bin = r.bin.map_or("baseline".to_string(), |b| format!("bin {b}"));
                        format!("{:<10} {:<9} {}\n", r.group.as_str(), bin, r.wins)
                    })
                    .collect()
            })
        }
        ReportKind::Difficulty => {
            let catalog = load_or_synth(a.catalog.as_deref(), a.seed)?;
            let d = difficulty_contrast(&logs, &catalog).map_err(CliError::runtime)?;
            render(a.json, &d, debug_text)
        }
        ReportKind::NoisyAnswers => {
            let c = noisy_answer_analysis(&logs, &answers, &expls).map_err(CliError::runtime)?;
            render(a.json, &c, debug_text)
        }
    };
    Ok(out)
}

pub fn buildpool(a: &BuildpoolArgs) -> CliResult {
    let catalog = match &a.catalog {
        Some(p) => load_catalog(p).map_err(CliError::config)?,
        None => synthetic(a.images, a.seed),
    };
    let mut failures = Vec::new();
    let probes = a.probes.min(catalog.len() as u64);
    for (name, n, band) in [
        ("A", SETTING_A_IMAGES, SETTING_A_BAND),
        ("B", SETTING_B_IMAGES, SETTING_B_BAND),
    ] {
        let mut widened = 0;
        for i in 0..probes {
            let secret = &catalog.records()[i as usize].image_id;
            match select_image_set(&catalog, Some(secret), n, band, i) {
                Ok(set) => widened += u64::from(set.widenings > 0),
                Err(e) => failures.push(format!("setting {name}, secret {secret}: {e}")),
            }
        }
        if widened > 0 {
            tracing::warn!(setting = name, widened, probes, "band widened for some secrets");
        }
    }
    if let Some(out) = &a.out {
        let format = match a.format {
            FormatArg::Text => FeatureFormat::Text,
            FormatArg::Binary => FeatureFormat::Binary,
        };
        write_catalog(&catalog, out, format).map_err(CliError::runtime)?;
    }
    let summary = json!({
        "images": catalog.len(),
        "dim": catalog.dim(),
        "probes": probes,
        "failures": failures,
        "written_to": a.out,
    });
    if failures.is_empty() {
        Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"))
    } else {
        Err(CliError::config(format!("pool cannot serve both settings:\n{}", failures.join("\n"))))
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve { config, host, port } => serve(config, host, port),
        Command::Simulate(a) => simulate(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Buildpool(a) => buildpool(&a),
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
