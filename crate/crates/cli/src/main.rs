//! `pairscope`: simulate, reconstruct and analyse entangled-pair camera data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pairscope_core::sim::TruthLevel;

/// Exit status 0 on success, 1 on data errors, 2 on usage errors.
#[derive(Parser, Debug)]
#[command(name = "pairscope", version, about, propagate_version = true)]
struct Cli {
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate runs into PXE1 event files, truth sidecars and a manifest.
    Simulate(SimulateArgs),
    /// Reconstruct photons and coincidences for every run of a manifest.
    Process(ProcessArgs),
    /// Build a time-walk table from one event file.
    WalkTable(WalkTableArgs),
    /// Pair the two regions of a photon list into a dt histogram.
    Coincide(CoincideArgs),
    /// Fit the two-photon state to coincidence curves.
    FitState(FitStateArgs),
    /// CHSH S-value from the coincidence counts of a manifest.
    Bell(BellArgs),
    /// S-value of every pair of subareas.
    SpatialBell(SpatialBellArgs),
    /// Correlation, scan and S-matrix tables plus a JSON summary.
    Report(ReportArgs),
    /// Throughput of the reconstruction on simulated data.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Truth {
    None,
    Detected,
    All,
}

impl From<Truth> for TruthLevel {
    fn from(t: Truth) -> Self {
        match t {
            Truth::None => TruthLevel::None,
            Truth::Detected => TruthLevel::Detected,
            Truth::All => TruthLevel::All,
        }
    }
}

/// `NXxNY`, e.g. `3x3`.
fn parse_grid(s: &str) -> Result<[u16; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected NXxNY, e.g. 3x3")?;
    let nx: u16 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let ny: u16 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if nx == 0 || ny == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok([nx, ny])
}

/// Four comma-separated angles in degrees.
fn parse_angles(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p}: {e}"))).collect::<Result<_, _>>()?;
    let a: [f64; 4] = v.try_into().map_err(|_| "expected four angles: alpha,alpha',beta,beta'".to_string())?;
    if a.iter().any(|x| !x.is_finite()) {
        return Err("angles must be finite".into());
    }
    Ok(a)
}

/// Polarizer settings `(alpha, beta)` in degrees.
#[derive(Clone, Debug)]
struct Settings(Vec<(f64, f64)>);

/// `chsh`, `scan`, or `ALPHA:BETA,...` in degrees.
fn parse_settings(s: &str) -> Result<Settings, String> {
    let list = match s {
        "chsh" => Ok(commands::chsh_settings(&[0.0, 45.0, 22.5, 67.5])),
        "scan" => Ok(commands::scan_settings()),
        list => list
            .split(',')
            .map(|p| {
                let (a, b) = p.split_once(':').ok_or_else(|| format!("{p}: expected ALPHA:BETA"))?;
                let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
                let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
                if a.is_finite() && b.is_finite() {
                    Ok((a, b))
                } else {
                    Err("angles must be finite".into())
                }
            })
            .collect(),
    };
    list.map(Settings)
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be positive and finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be non-negative and finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Directory for event files, truth sidecars and manifest.toml.
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file with optional [source] and [detector] tables; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Polarizer settings: `chsh` (the 16 runs of a CHSH test at
    /// 0,45,22.5,67.5 deg), `scan` (alpha every 20 deg at beta 0,45,90,135)
    /// or a list `ALPHA:BETA,...` in degrees.
    #[arg(long, default_value = "chsh", value_parser = parse_settings)]
    settings: Settings,
    /// State angle theta, rad [default: -0.15].
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// State phase delta, rad [default: 2.10].
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Pairs per second at the fibers [default: 333000].
    #[arg(long, value_parser = non_negative)]
    pair_rate: Option<f64>,
    /// Seconds per run [default: 0.1].
    #[arg(long, value_parser = positive)]
    duration: Option<f64>,
    /// Base seed; run k uses seed + k [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Dark counts per second over the sensor [default: 1200].
    #[arg(long, value_parser = non_negative)]
    dark_rate: Option<f64>,
    /// Photocathode detection efficiency [default: 0.18].
    #[arg(long, value_parser = non_negative)]
    qe: Option<f64>,
    /// Truth records written next to each event file [default: detected].
    #[arg(long, value_enum)]
    truth: Option<Truth>,
    /// Subarea grid recorded in the manifest, e.g. 3x3.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[u16; 2]>,
}

#[derive(Args, Debug)]
struct ProcessArgs {
    /// Run manifest with event files.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for photon lists, histograms, walk tables and the new manifest.
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML processing configuration (cluster, walk, coincidence, regions,
    /// hot_pixels, chunk_ns, correct_walk). Defaults: link 300 ns, window
    /// 1000 ns, TOT bin 25 ns, stable TOT 1500 ns, 100 entries per bin,
    /// 3 walk iterations, pairing window +-500 ns in 1.5625 ns bins.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Apply this walk table to every run instead of building one per run.
    #[arg(long, conflicts_with = "no_walk")]
    walk: Option<PathBuf>,
    /// Skip time-walk correction.
    #[arg(long)]
    no_walk: bool,
    /// Also mask pixels firing more than this many times the median pixel.
    #[arg(long, value_parser = positive)]
    hot_pixel_factor: Option<f64>,
}

#[derive(Args, Debug)]
struct WalkTableArgs {
    /// PXE1 event file.
    #[arg(long)]
    events: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// TOML processing configuration; see `process --help`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest whose hot-pixel list is masked first.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoincideArgs {
    /// Photon list with an `arm` column.
    #[arg(long)]
    photons: PathBuf,
    /// Output dt histogram CSV.
    #[arg(long)]
    out: PathBuf,
    /// Pairs need -window <= dt < window, ns.
    #[arg(long, default_value_t = 500.0, value_parser = positive)]
    window: f64,
    /// Histogram bin width, ns.
    #[arg(long, default_value_t = 1.5625, value_parser = positive)]
    bin_width: f64,
}

#[derive(Args, Debug)]
struct FitStateArgs {
    /// CSV with columns alpha_deg, beta_deg, counts.
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    counts: Option<PathBuf>,
    /// Manifest whose runs carry coincidence counts.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the fit as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BellArgs {
    /// Manifest whose runs carry counts or dt histograms.
    #[arg(long)]
    manifest: PathBuf,
    /// CHSH angles alpha,alpha',beta,beta' in degrees [default: manifest,
    /// else 0,45,22.5,67.5].
    #[arg(long, value_parser = parse_angles, allow_hyphen_values = true)]
    angles: Option<[f64; 4]>,
    /// Write the S report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpatialBellArgs {
    /// Manifest whose runs carry photon lists.
    #[arg(long)]
    manifest: PathBuf,
    /// Subarea grid [default: manifest, else 3x3].
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[u16; 2]>,
    /// Cells with fewer fitted coincidences in any run are flagged.
    #[arg(long, default_value_t = 200.0, value_parser = non_negative)]
    min_coincidences: f64,
    /// CHSH angles in degrees [default: manifest, else 0,45,22.5,67.5].
    #[arg(long, value_parser = parse_angles, allow_hyphen_values = true)]
    angles: Option<[f64; 4]>,
    /// Write the matrix, global S and uniformity test as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Processed manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the tables and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Subarea grid for the S-matrix [default: manifest; none skips it].
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[u16; 2]>,
    /// Cells with fewer fitted coincidences in any run are flagged.
    #[arg(long, default_value_t = 200.0, value_parser = non_negative)]
    min_coincidences: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Pixel events to reconstruct.
    #[arg(long, default_value_t = 1_000_000)]
    events: usize,
    /// Simulation seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Timed passes; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Process(a) => commands::process(a),
        Command::WalkTable(a) => commands::walk_table(a),
        Command::Coincide(a) => commands::coincide(a),
        Command::FitState(a) => commands::fit_state_cmd(a),
        Command::Bell(a) => commands::bell(a),
        Command::SpatialBell(a) => commands::spatial_bell_cmd(a),
        Command::Report(a) => commands::report(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
