//! `nwsps`: command-line front end of the nanowire single-photon source simulator.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use nanowire_sps::analysis::{FitRow, FIT_CSV_HEADER};
use nanowire_sps::budget::{compute_budget, EfficiencyBudget};
use nanowire_sps::detection::clicks_csv;
use nanowire_sps::emitter::PhotonStream;
use nanowire_sps::experiment::{
    analyse_clicks, decay_histogram, defaults_toml, detect_stream, metadata_header, power_points, run_sweep,
    simulate_emitter, single_point, standard_metadata, sweep_csv, temperature_points, ExperimentConfig,
    PointAnalysis, SEED_DERIVATION,
};
use nanowire_sps::analysis::fit_trpl;
use nanowire_sps::units::period_ps;
use nanowire_sps::waveguide::{sweep as waveguide_sweep, SWEEP_CSV_HEADER};
use nanowire_sps::Error;

#[derive(Parser)]
#[command(name = "nwsps", version, about = "Pulsed nanowire quantum-dot single-photon source simulator")]
struct Cli {
    /// TOML experiment configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the emitter at `temperature_k` and detect it; writes photon and click streams.
    Simulate,
    /// Coincidence histogram, g2 fit and peak-area ratio from a stored photon stream.
    G2 {
        /// Photon stream written by `simulate` (default `<out>/photons.csv`).
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Decay histogram and lifetime fit from a stored photon stream.
    Trpl {
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Full pipeline over `sweep.temperatures` with the sweep protocol.
    SweepTemperature,
    /// Full pipeline over `sweep.powers` at `sweep.power_temperature_k`.
    SweepPower,
    /// Efficiency chain from the `[budget]` inputs.
    Budget,
    /// HE11 mode and relative emission rate over the `[waveguide]` grid.
    Waveguide,
    /// Print the default configuration.
    Defaults,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig { .. } | Error::Parse(_) | Error::EmptySimulation => 2,
            Error::Io(_) => 3,
            Error::NonConvergence { .. }
            | Error::FitRejected(_)
            | Error::PeriodMismatch { .. }
            | Error::InsufficientSidePeaks { .. }
            | Error::EmptySideWindow { .. } => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    config_digest: String,
    seed: u64,
    seed_derivation: &'a str,
    config: &'a ExperimentConfig,
}

struct Run {
    cfg: ExperimentConfig,
    out: PathBuf,
    jobs: usize,
    command: &'static str,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| io_failure(&self.out, e))?;
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }

    /// Write a CSV with its `.meta.toml` sidecar.
    fn write_csv(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let meta = RunMeta {
            command: self.command,
            config_digest: self.cfg.digest(),
            seed: self.cfg.seed,
            seed_derivation: SEED_DERIVATION,
            config: &self.cfg,
        };
        let text = toml::to_string_pretty(&meta).expect("run metadata serializes");
        self.write(&sidecar_name(name), &text)?;
        self.write(name, contents)
    }

    fn header(&self, extra: &[(&str, String)]) -> String {
        let mut pairs = standard_metadata(&self.cfg, self.command);
        pairs.extend(extra.iter().cloned());
        metadata_header(&pairs)
    }
}

fn sidecar_name(name: &str) -> String {
    match name.strip_suffix(".csv") {
        Some(stem) => format!("{stem}.meta.toml"),
        None => format!("{name}.meta.toml"),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            ExperimentConfig::from_toml(&text).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", path.display()),
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn simulate(run: &Run) -> Result<(), Failure> {
    let model = run.cfg.temperature_model()?;
    let stream = simulate_emitter(&run.cfg, &model)?;
    let spec = single_point(&run.cfg);
    let mut photons = run.header(&[
        ("temperature_k", spec.temperature_k.to_string()),
        ("power_ratio", spec.power_ratio.to_string()),
        ("n_pulses", stream.meta.n_pulses.to_string()),
    ]);
    let mut buf = Vec::new();
    stream.write_csv(&mut buf)?;
    photons.push_str(&String::from_utf8(buf).expect("stream CSV is UTF-8"));
    run.write("photons.meta.toml", &stream.meta_toml())?;
    let path = run.write("photons.csv", &photons)?;

    let (a, b) = detect_stream(&run.cfg, &model, &stream)?;
    let clicks = format!(
        "{}{}",
        run.header(&[("filter_width_nm", spec.filter_width_nm.to_string())]),
        clicks_csv(&[&a, &b])
    );
    run.write_csv("clicks.csv", &clicks)?;
    println!(
        "{} photons over {} pulses -> {}; {} + {} clicks",
        stream.len(),
        stream.meta.n_pulses,
        path.display(),
        a.len(),
        b.len()
    );
    Ok(())
}

fn read_stream(run: &Run, stream: &Option<PathBuf>) -> Result<PhotonStream, Failure> {
    let path = stream.clone().unwrap_or_else(|| run.path("photons.csv"));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("photons.csv");
    let meta_path = path.with_file_name(sidecar_name(name));
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| io_failure(&meta_path, e))?;
    let meta = PhotonStream::parse_meta(&meta_text)?;
    let file = fs::File::open(&path).map_err(|e| io_failure(&path, e))?;
    Ok(PhotonStream::read_csv(BufReader::new(file), meta)?)
}

fn analyse_stream(run: &Run, stream: &Option<PathBuf>) -> Result<(PhotonStream, PointAnalysis), Failure> {
    let model = run.cfg.temperature_model()?;
    let photons = read_stream(run, stream)?;
    let (a, b) = detect_stream(&run.cfg, &model, &photons)?;
    let analysis = analyse_clicks(
        &run.cfg.analysis,
        &run.cfg.detector,
        &a,
        &b,
        period_ps(photons.meta.rep_rate_mhz),
    )?;
    Ok((photons, analysis))
}

fn g2(run: &Run, stream: &Option<PathBuf>) -> Result<(), Failure> {
    let (photons, analysis) = analyse_stream(run, stream)?;
    let t = photons.meta.temperature_k;
    let extra = [("temperature_k", t.to_string())];
    run.write_csv(
        "g2_histogram.csv",
        &format!("{}{}", run.header(&extra), analysis.coincidences.to_csv()),
    )?;

    let mut report = String::new();
    let _ = writeln!(report, "temperature_k = {t}");
    let _ = writeln!(report, "power_ratio = {}", run.cfg.drive.power_ratio);
    match &analysis.trpl {
        Ok(f) => {
            let _ = writeln!(report, "\n[trpl]\n{}", f.to_kv());
        }
        Err(e) => {
            let _ = writeln!(report, "\n[trpl]\nerror = {:?}\n", e.to_string());
        }
    }
    match &analysis.g2_integrated {
        Ok(v) => {
            let _ = writeln!(report, "[integrated]\ng2_integrated = {v}\n");
        }
        Err(e) => {
            let _ = writeln!(report, "[integrated]\nerror = {:?}\n", e.to_string());
        }
    }
    let mut fit_csv = format!("{}{FIT_CSV_HEADER}\n", run.header(&extra));
    match &analysis.g2_fit {
        Ok(f) => {
            let _ = writeln!(report, "[fit]\n{}", f.to_kv());
            let _ = writeln!(fit_csv, "{}", FitRow::from_fit(t, run.cfg.drive.power_ratio, f).csv_row());
        }
        Err(e) => {
            let _ = writeln!(report, "[fit]\nerror = {:?}", e.to_string());
        }
    }
    run.write("g2_fit.txt", &report)?;
    run.write_csv("g2_fit.csv", &fit_csv)?;
    print!("{report}");
    match analysis.error() {
        Some(e) => Err(e.clone().into()),
        None => Ok(()),
    }
}

fn trpl(run: &Run, stream: &Option<PathBuf>) -> Result<(), Failure> {
    let model = run.cfg.temperature_model()?;
    let photons = read_stream(run, stream)?;
    let (a, b) = detect_stream(&run.cfg, &model, &photons)?;
    let hist = decay_histogram(&run.cfg.analysis, &a, &b, period_ps(photons.meta.rep_rate_mhz))?;
    let extra = [("temperature_k", photons.meta.temperature_k.to_string())];
    run.write_csv("trpl_histogram.csv", &format!("{}{}", run.header(&extra), hist.to_csv()))?;
    let fit = fit_trpl(&hist, &run.cfg.analysis.trpl);
    let report = match &fit {
        Ok(f) => f.to_kv(),
        Err(e) => format!("error = {:?}\n", e.to_string()),
    };
    run.write("trpl_fit.txt", &report)?;
    print!("{report}");
    fit.map(|_| ()).map_err(Failure::from)
}

fn sweep(run: &Run, name: &str, points: Vec<nanowire_sps::experiment::PointSpec>) -> Result<(), Failure> {
    let rows = run_sweep(&run.cfg, &points, run.jobs)?;
    let csv = sweep_csv(&run.cfg, run.command, &rows);
    let path = run.write_csv(name, &csv)?;
    print!("{}", csv.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n"));
    println!("\n-> {}", path.display());
    Ok(())
}

fn budget(run: &Run) -> Result<(), Failure> {
    let b: EfficiencyBudget = compute_budget(&run.cfg.budget)?;
    run.write_csv("budget.csv", &format!("{}{}", run.header(&[]), b.to_csv()))?;
    print!("{}", b.table());
    Ok(())
}

fn waveguide(run: &Run) -> Result<(), Failure> {
    let w = &run.cfg.waveguide;
    let rows = waveguide_sweep(&w.geometry, &w.diameters_nm, &w.wavelengths())?;
    let mut csv = format!("{}{SWEEP_CSV_HEADER}\n", run.header(&[]));
    for r in &rows {
        let _ = writeln!(csv, "{}", r.csv_row());
    }
    let path = run.write_csv("waveguide.csv", &csv)?;
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Command::Defaults = cli.command {
        print!("{}", defaults_toml());
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    let command = match cli.command {
        Command::Simulate => "simulate",
        Command::G2 { .. } => "g2",
        Command::Trpl { .. } => "trpl",
        Command::SweepTemperature => "sweep-temperature",
        Command::SweepPower => "sweep-power",
        Command::Budget => "budget",
        Command::Waveguide => "waveguide",
        Command::Defaults => unreachable!(),
    };
    let run = Run {
        out: cfg.output.dir.clone(),
        cfg,
        jobs: cli.jobs,
        command,
    };
    match &cli.command {
        Command::Simulate => simulate(&run),
        Command::G2 { stream } => g2(&run, stream),
        Command::Trpl { stream } => trpl(&run, stream),
        Command::SweepTemperature => sweep(&run, "sweep_temperature.csv", temperature_points(&run.cfg)),
        Command::SweepPower => sweep(&run, "sweep_power.csv", power_points(&run.cfg)),
        Command::Budget => budget(&run),
        Command::Waveguide => waveguide(&run),
        Command::Defaults => unreachable!(),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
