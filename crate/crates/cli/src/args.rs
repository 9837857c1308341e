use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "magpos", version, about = "Magnetic-field indoor positioning twin")]
pub struct Cli {
    /// Key-value run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Errors only.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one ADC record at a position and print its samples.
    Simulate(SimulateArgs),
    /// Fit the power-law constants per anchor.
    Calibrate(CalibrateArgs),
    /// Run the real-time measurement loop and stream fixes.
    Run(RunArgs),
    /// Run the position-controlled application server.
    Pca(PcaArgs),
    /// Accuracy experiment over the surveyed control points.
    Eval(EvalArgs),
    /// Stream a recorded `t x y` file to the position receiver.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ScenarioArgs {
    /// Scenario description file (default: paper-like preset).
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,

    /// Noise seed; overrides the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Receiver position `x,y` in meters (default: the central calibration point).
    #[arg(long, value_name = "X,Y")]
    pub position: Option<String>,

    /// Record start time, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,

    /// Output file (default: stdout).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Domain {
    Loglog,
    Linear,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Fit from a measured `anchor distance amplitude` file instead of
    /// simulating the calibration points.
    #[arg(long, value_name = "FILE")]
    pub observations: Option<PathBuf>,

    /// Records per calibration point when simulating.
    #[arg(long)]
    pub repeats: Option<usize>,

    #[arg(long, value_enum, default_value = "loglog")]
    pub domain: Domain,

    /// Also write the simulated observations here.
    #[arg(long, value_name = "FILE")]
    pub save_observations: Option<PathBuf>,

    /// Output file (default: stdout).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Calibration file from `calibrate` (default: calibrate in place).
    #[arg(long, value_name = "FILE")]
    pub calibration: Option<PathBuf>,

    /// Position receiver `host:port`.
    #[arg(long)]
    pub endpoint: Option<String>,

    /// Do not stream fixes.
    #[arg(long, conflicts_with = "endpoint")]
    pub offline: bool,

    /// `t x y` trajectory file, or `live` to follow UI steering.
    #[arg(long, value_name = "FILE|live")]
    pub trajectory: Option<String>,

    /// Stationary position `x,y` when no trajectory is given.
    #[arg(long, value_name = "X,Y", conflicts_with = "trajectory")]
    pub position: Option<String>,

    /// UI bridge URL used by `--trajectory live`.
    #[arg(long, value_name = "URL")]
    pub bridge: Option<String>,

    /// Seconds to run; 0 runs until killed.
    #[arg(long)]
    pub duration: Option<f64>,

    /// Update period, seconds.
    #[arg(long)]
    pub period: Option<f64>,

    /// Write every fix as a `t x y` row.
    #[arg(long, value_name = "FILE")]
    pub record: Option<PathBuf>,

    /// Print every fix to stdout.
    #[arg(long)]
    pub print: bool,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    /// Address for the position receiver.
    #[arg(long)]
    pub listen: Option<String>,

    /// Canvas size in pixels, `WxH`.
    #[arg(long, value_name = "WxH")]
    pub canvas: Option<String>,

    /// Canvas calibration file (default: the anchors' bounding box).
    #[arg(long, value_name = "FILE")]
    pub calibration: Option<PathBuf>,

    /// Address for the UI bridge.
    #[arg(long)]
    pub bridge: Option<String>,

    /// Do not start the UI bridge.
    #[arg(long, conflicts_with = "bridge")]
    pub no_bridge: bool,

    /// Identical updates that make a click.
    #[arg(long, default_value_t = magpos::pca::DEFAULT_CLICK_COUNT)]
    pub click_count: u32,

    /// Seconds to run; 0 runs until killed.
    #[arg(long)]
    pub duration: Option<f64>,

    /// Write the canvas calibration here when the Calibration app changes it.
    #[arg(long, value_name = "FILE")]
    pub save_calibration: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Fixes per control point.
    #[arg(long)]
    pub repeats: Option<usize>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Border distance threshold, meters.
    #[arg(long)]
    pub threshold: Option<f64>,

    /// GDOP grid spacing, meters.
    #[arg(long, default_value_t = 0.05)]
    pub gdop_resolution: f64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// `t x y` file, as written by `run --record`.
    pub file: PathBuf,

    /// Position receiver `host:port`.
    #[arg(long)]
    pub endpoint: Option<String>,

    /// Playback speed factor.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}
