//! `lunar-sfs`: terrain synthesis, rendering, shape-and-albedo-from-shading,
//! evaluation and tokenizer data preparation from the command line.
//!
//! Exit codes: 0 on success, 1 on runtime or solver failure, 2 on usage errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lunar-sfs", version, about = "Lunar terrain photometry, reconstruction and tokenization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic crater DEM.
    GenTerrain(GenTerrainArgs),
    /// Render a reflectance image from a DEM and an albedo.
    Render(RenderArgs),
    /// Reconstruct DEM, normals and albedo from an image and a coarse DEM.
    Sfs(SfsArgs),
    /// Score a predicted raster against ground truth.
    Eval(EvalArgs),
    /// Cut a raster into numbered square patches.
    Slice(SliceArgs),
    /// Draw an input/target token mask.
    Mask(MaskArgs),
    /// Fit a vector-quantization codebook on 8x8 cells of rasters.
    VqFit(VqFitArgs),
    /// Convert a raster to tokens, or tokens back to a raster.
    VqCode(VqCodeArgs),
}

/// `az,el` in degrees.
fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected 'a,b', got '{s}'"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("'{v}' is not a number"))
    };
    Ok((parse(a)?, parse(b)?))
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' must be a positive number")),
    }
}

#[derive(Debug, Args)]
struct GenTerrainArgs {
    /// `key = value` terrain spec; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    crater_count: Option<usize>,
    /// RMS height of the fractal base surface in meters.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Meters per pixel.
    #[arg(long, value_parser = positive)]
    pixel_size: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("albedo_source").required(true).args(["albedo", "albedo_const"])))]
struct RenderArgs {
    #[arg(long)]
    dem: PathBuf,
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pixel_size: f64,
    /// Per-pixel albedo raster.
    #[arg(long)]
    albedo: Option<PathBuf>,
    #[arg(long)]
    albedo_const: Option<f64>,
    /// Sun azimuth,elevation in degrees.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    sun: (f64, f64),
    /// View azimuth,elevation in degrees.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "0,90")]
    view: (f64, f64),
    #[arg(long, value_parser = ["hapke", "lambert"], default_value = "hapke")]
    model: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SfsArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    init_dem: PathBuf,
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pixel_size: f64,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    sun: (f64, f64),
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "0,90")]
    view: (f64, f64),
    /// `key = value` solver and Hapke settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dem: PathBuf,
    #[arg(long)]
    out_normals: Option<PathBuf>,
    #[arg(long)]
    out_albedo: Option<PathBuf>,
    /// Energy history, one tab-separated line per accepted iteration.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_parser = ["gray", "dem", "normals", "albedo"])]
    modality: String,
    /// Data range used as the PSNR peak.
    #[arg(long, value_parser = positive)]
    datarange: f64,
    /// Remaining-error thresholds in data units.
    #[arg(long, value_delimiter = ',', default_value = "2,4,10")]
    thresholds: Vec<f64>,
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pixel_size: f64,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SliceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long, default_value_t = 32)]
    stride: usize,
    /// Directory receiving `patch_NNNNN.sfsr` files.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["alphas", "uniform"])))]
struct MaskArgs {
    /// Dirichlet concentration per modality.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Split the budget evenly over this many modalities.
    #[arg(long)]
    uniform: Option<usize>,
    /// Total number of input tokens.
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Modality names, one per modality.
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
    #[arg(long, default_value_t = 784)]
    tokens_per_modality: usize,
    /// Plan path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VqFitArgs {
    /// Training rasters; sides must be multiples of 8.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, value_parser = ["gray", "dem", "normals", "albedo"])]
    modality: String,
    /// Codebook size; defaults to the modality's vocabulary size.
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch mean quantization error, `epoch<TAB>error`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("direction").required(true).args(["input", "decode"])))]
struct VqCodeArgs {
    #[arg(long)]
    codebook: PathBuf,
    /// Raster to tokenize.
    #[arg(long, requires = "tokens")]
    input: Option<PathBuf>,
    /// Token list to write when encoding.
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Token list to decode.
    #[arg(long, requires = "out")]
    decode: Option<PathBuf>,
    /// Decoded raster (decode) or reconstruction (encode).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTerrain(a) => commands::gen_terrain(a),
        Command::Render(a) => commands::render(a),
        Command::Sfs(a) => commands::sfs(a),
        Command::Eval(a) => commands::eval(a),
        Command::Slice(a) => commands::slice(a),
        Command::Mask(a) => commands::mask(a),
        Command::VqFit(a) => commands::vq_fit(a),
        Command::VqCode(a) => commands::vq_code(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
