//! Batch driver for the nlilab pipelines. Every command reads one config
//! file and writes CSV files plus `effective_config.toml` into `--out`.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlilab::egn::Scope;
use nlilab::experiment::{calibrate_link, compare, LinkKappas, Source};
use nlilab::shaping::CodecSummary;
use nlilab::ssfm::{best_launch, run_experiment, MeasuredRun};
use nlilab::windowed::{moment_profile, optimal_windows};

use config::{ExperimentConfig, KappaFile};

#[derive(Parser, Debug)]
#[command(name = "nlilab", version, about = "Shaping, windowed moments, EGN and split-step experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replaces the configured seeds with this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Windowed moment profile of the modulation.
    Moments,
    /// Optimal SPM/XPM windows over symbol rates and span counts.
    Windows,
    /// Codec parameters of the shaped modulation.
    ShapeInfo,
    /// Calibrates the NLI coefficients of the link.
    Calibrate,
    /// Launch-power sweep of the modulation over the link.
    Simulate,
    /// Split-step against EGN predictions for each format.
    Compare,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<nlilab::Error> for Failure {
    fn from(e: nlilab::Error) -> Self {
        match e {
            nlilab::Error::Config(_) | nlilab::Error::InvalidParameter(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn seeds(cli: &Cli, cfg: &ExperimentConfig) -> Vec<u64> {
    cli.seed.map_or_else(|| cfg.analysis.seeds.clone(), |s| vec![s])
}

fn cmd_moments(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let source = cfg.modulation.source()?;
    let stream = source.stream(cfg.analysis.slots, seeds(cli, cfg)[0])?;
    let profile = moment_profile(&stream, &cfg.analysis.windows)?;
    write(&cli.out, "moments.csv", &profile.to_csv())
}

fn cmd_windows(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let base = cfg.link.window_rule();
    let mut out = String::from("r_sym_gbd,spans,channels,w_spm_exact,w_xpm_exact,w_spm,w_xpm\n");
    for &r in &cfg.analysis.symbol_rates_gbd {
        for &spans in &cfg.analysis.span_counts {
            let r_sym = r * 1e9;
            let n_ch = cfg.analysis.wdm_bandwidth_ghz.map_or(base.n_ch, |b| {
                ((b * 1e9 / (base.delta_f * r_sym)).floor() as usize).max(1)
            });
            let rule = nlilab::windowed::WindowRule { r_sym, b_ch: r_sym, n_span: spans, n_ch, ..base };
            let (es, ex) = rule.characteristic_windows();
            let (ws, wx) = optimal_windows(&rule);
            out.push_str(&format!("{r},{spans},{n_ch},{es:.6},{ex:.6},{ws},{wx}\n"));
        }
    }
    write(&cli.out, "windows.csv", &out)
}

fn cmd_shape_info(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let lengths = if cfg.analysis.block_lengths.is_empty() {
        vec![cfg.modulation.n.unwrap_or(0)]
    } else {
        cfg.analysis.block_lengths.clone()
    };
    let mut out = format!("{}\n", CodecSummary::CSV_HEADER);
    for n in lengths {
        let spec = nlilab::experiment::ModulationSpec { n: Some(n), ..cfg.modulation.clone() };
        let row = match spec.source()? {
            Source::Ess1d(c) => CodecSummary::of_1d(&c),
            Source::Ess4d(c) => CodecSummary::of_4d(&c),
            _ => {
                return Err(Failure::Config(
                    "shape-info needs modulation.kind = \"ess1d\" or \"ess4d\"".into(),
                ))
            }
        };
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    write(&cli.out, "shape_info.csv", &out)
}

fn kappa_csv(k: &LinkKappas) -> String {
    let mut out = String::from("scope,kappa1,kappa2,kappa3,window,fingerprint\n");
    for set in std::iter::once(&k.spm).chain(k.xpm.as_ref()) {
        let scope = match set.scope {
            Scope::Spm => "spm",
            Scope::Xpm => "xpm",
        };
        out.push_str(&format!(
            "{scope},{:.9e},{:.9e},{:.9e},{},{}\n",
            set.kappa1, set.kappa2, set.kappa3, set.window, set.fingerprint
        ));
    }
    out
}

fn calibrate(cli: &Cli, cfg: &ExperimentConfig) -> Result<LinkKappas, Failure> {
    let seeds = cli.seed.map_or_else(|| cfg.analysis.calibration_seeds.clone(), |s| vec![s]);
    Ok(calibrate_link(&cfg.link, &cfg.analysis.calibration_launch_dbm, &seeds)?)
}

fn cmd_calibrate(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let k = calibrate(cli, cfg)?;
    let file = KappaFile { spm: k.spm.clone(), xpm: k.xpm.clone() };
    write(&cli.out, "kappas.toml", &toml::to_string(&file).expect("kappas serialize"))?;
    write(&cli.out, "kappas.csv", &kappa_csv(&k))
}

fn runs_csv(runs: &[MeasuredRun], label: Option<&str>) -> String {
    let mut out = String::new();
    if label.is_some() {
        out.push_str("format,");
    }
    out.push_str(MeasuredRun::CSV_HEADER);
    out.push('\n');
    for r in runs {
        if let Some(l) = label {
            out.push_str(l);
            out.push(',');
        }
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn cmd_simulate(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let source = cfg.modulation.source()?;
    let runs = run_experiment(
        &cfg.link,
        |s| source.channel_streams(cfg.link.channels, cfg.link.symbols, s),
        &seeds(cli, cfg),
    )?;
    if let Some((p, snr)) = best_launch(&runs) {
        eprintln!("best launch {p} dBm: SNR_eff {snr:.3} dB");
    }
    write(&cli.out, "simulate.csv", &runs_csv(&runs, None))
}

fn load_kappas(cli: &Cli, cfg: &ExperimentConfig) -> Result<LinkKappas, Failure> {
    if let Some(path) = &cfg.analysis.kappa_file {
        let path = PathBuf::from(path);
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let file: KappaFile = toml::from_str(&text)
            .map_err(|e| Failure::Config(format!("{}: {}", path.display(), e.message())))?;
        let expect = cfg.link.fingerprint();
        if file.spm.fingerprint != expect {
            return Err(Failure::Config(format!(
                "{} was calibrated on link {} but this link is {expect}; rerun `nlilab calibrate`",
                path.display(),
                file.spm.fingerprint
            )));
        }
        if cfg.link.channels > 1 && file.xpm.is_none() {
            return Err(Failure::Config(format!(
                "{} has no XPM coefficients for this multi-channel link",
                path.display()
            )));
        }
        return Ok(LinkKappas { spm: file.spm, xpm: file.xpm });
    }
    if cfg.analysis.auto_calibrate {
        return calibrate(cli, cfg);
    }
    Err(Failure::Config(
        "no NLI coefficients: run `nlilab calibrate` and set analysis.kappa_file, or set analysis.auto_calibrate = true".into(),
    ))
}

fn cmd_compare(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let kappas = load_kappas(cli, cfg)?;
    let report = compare(
        &cfg.link,
        &cfg.compare_formats(),
        &kappas,
        &seeds(cli, cfg),
        cfg.analysis.moment_slots,
    )?;
    write(&cli.out, "compare.csv", &report.to_csv())?;
    write(&cli.out, "compare_summary.csv", &report.summary_csv())?;
    let mut runs = String::from("format,");
    runs.push_str(MeasuredRun::CSV_HEADER);
    runs.push('\n');
    for (label, r) in &report.runs {
        runs.push_str(&format!("{label},{}\n", r.csv_row()));
    }
    write(&cli.out, "compare_runs.csv", &runs)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let cfg = ExperimentConfig::parse(&text)
        .map_err(|m| Failure::Config(format!("{}: {m}", path.display())))?;
    fs::create_dir_all(&cli.out).map_err(|e| io(&cli.out, e))?;
    write(&cli.out, "effective_config.toml", &cfg.to_toml())?;
    match cli.command {
        Command::Moments => cmd_moments(cli, &cfg),
        Command::Windows => cmd_windows(cli, &cfg),
        Command::ShapeInfo => cmd_shape_info(cli, &cfg),
        Command::Calibrate => cmd_calibrate(cli, &cfg),
        Command::Simulate => cmd_simulate(cli, &cfg),
        Command::Compare => cmd_compare(cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
