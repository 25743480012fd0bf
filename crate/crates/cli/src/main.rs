use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hrtf_core::dataset::{measurement_index, Direction, Ear, Hemisphere, MEASUREMENT_NAMES};
use hrtf_core::dsp::DelayMode;
use hrtf_core::features::{self, Band, FeatureConfig};
use hrtf_core::pca::variance_report;
use hrtf_core::pipeline::{self, EvaluationMode, EvaluationOptions, SynthesisOptions, TrainConfig};
use hrtf_core::regression::{feature_names, DEFAULT_FEATURES};
use hrtf_core::testkit::{self, SynthConfig};
use hrtf_core::{
    load_anthropometry, load_archive, load_model, save_model, AnthropometryTable, Error, HrirArchive,
};

/// Like `println!`, but a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const EXIT_COMPUTE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "hrtf", version, about = "Individualized HRTFs from anthropometry via PCA and regression")]
struct Cli {
    /// Worker threads; 1 forces the sequential reference path.
    #[arg(long, global = true, env = "HRTF_THREADS")]
    threads: Option<usize>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = testkit::DEFAULT_SEED)]
    seed: u64,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit PCA, regressions and mean delays, and write a model file.
    Train(TrainArgs),
    /// Synthesize a listener's HRIRs from their measurements.
    Individualize(IndividualizeArgs),
    /// Compare modelled magnitudes with an archive.
    Evaluate(EvaluateArgs),
    /// Correlate ITD_max, ILD_max and notch frequency with every measurement.
    Features(FeaturesArgs),
    /// Generate a synthetic population with known ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Archive directory or its manifest.json.
    #[arg(long)]
    archive: PathBuf,
    /// Anthropometry CSV.
    #[arg(long)]
    anthropometry: PathBuf,
    /// Restrict to these comma-separated subject ids, in this order.
    #[arg(long, value_delimiter = ',')]
    subjects: Option<Vec<String>>,
}

impl DataArgs {
    fn load(&self) -> Result<(HrirArchive, AnthropometryTable), Failure> {
        let archive = load_archive(&self.archive)?;
        let table = load_anthropometry(&self.anthropometry)?;
        let Some(ids) = &self.subjects else {
            return Ok((archive, table));
        };
        let indices = ids
            .iter()
            .map(|id| {
                archive
                    .subject_index(id.trim())
                    .ok_or_else(|| usage(format!("subject '{id}' is not in the archive")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((archive.select_subjects(&indices)?, table))
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Number of principal components.
    #[arg(short, long, default_value_t = hrtf_core::pca::DEFAULT_COMPONENTS)]
    q: usize,
    /// Z-score features before fitting; predictions are unchanged.
    #[arg(long)]
    standardize: bool,
    /// Comma-separated measurement names for the regression.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct IndividualizeArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// JSON object mapping measurement names to values.
    #[arg(long)]
    features: PathBuf,
    /// Output archive directory.
    #[arg(long)]
    out: PathBuf,
    /// Subject id written to the output manifest.
    #[arg(long, default_value = "listener")]
    id: String,
    /// Realize fractional mean delays with a truncated sinc instead of rounding.
    #[arg(long)]
    fractional_delay: bool,
    /// Samples per output HRIR.
    #[arg(long, default_value_t = pipeline::DEFAULT_OUT_LENGTH)]
    out_length: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Pca,
    Individualized,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Where the weights come from: projected spectra or predicted from anthropometry.
    #[arg(long, value_enum, default_value = "individualized")]
    mode: Mode,
    /// Retrain without each subject before predicting it (not part of the original method).
    #[arg(long)]
    holdout: bool,
    /// Directory for evaluation.csv, per_azimuth.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Band for the spectral distortion score, as LOW:HIGH in Hz.
    #[arg(long, value_parser = parse_band, default_value = "0:22050")]
    sd_band: Band,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EarArg {
    Left,
    Right,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum HemisphereArg {
    Front,
    Rear,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory for correlations.csv and summaries.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Search band for the pinna notch, as LOW:HIGH in Hz.
    #[arg(long, value_parser = parse_band, default_value = "4000:16000")]
    notch_band: Band,
    /// Band over which ILD_max is taken.
    #[arg(long, value_parser = parse_band, default_value = "0:22050")]
    ild_band: Band,
    /// Ear, azimuth and hemisphere of the direction used for the notch.
    #[arg(long, value_enum, default_value = "left")]
    notch_ear: EarArg,
    #[arg(long, default_value_t = -80.0, allow_negative_numbers = true)]
    notch_azimuth: f64,
    #[arg(long, value_enum, default_value = "front")]
    notch_hemisphere: HemisphereArg,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of synthetic subjects.
    #[arg(long, default_value_t = 37)]
    subjects: usize,
    /// Rank of the planted spectral model.
    #[arg(short, long, default_value_t = 10)]
    q: usize,
    /// Weight noise relative to each component's scale.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

fn parse_band(s: &str) -> Result<Band, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LOW:HIGH, got '{s}'"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    Band::new(lo, hi).map_err(|e| e.to_string())
}

/// Failure carrying the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() { EXIT_USAGE } else { EXIT_COMPUTE };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn resolve_features(names: &Option<Vec<String>>) -> Result<Vec<usize>, Failure> {
    match names {
        None => Ok(DEFAULT_FEATURES.to_vec()),
        Some(names) => names
            .iter()
            .map(|n| {
                measurement_index(n.trim()).ok_or_else(|| usage(format!("unknown measurement '{n}'")))
            })
            .collect(),
    }
}

fn cmd_train(args: &TrainArgs) -> CmdResult {
    let (archive, table) = args.data.load()?;
    let config = TrainConfig {
        q: args.q,
        feature_indices: resolve_features(&args.features)?,
        standardize: args.standardize,
        ..TrainConfig::default()
    };
    let model = pipeline::train(&archive, &table, &config)?;
    save_model(&model, &args.out)?;

    say!("model written to {}", args.out.display());
    say!(
        "features: {}",
        feature_names(&model.feature_indices).join(", ")
    );
    say!("{:>4} {:>14} {:>10} {:>12}", "PC", "eigenvalue", "percent", "cumulative");
    let rows = variance_report(&model.pca.eigenvalues)?;
    for r in rows.iter().take(args.q.max(20)) {
        say!(
            "{:>4} {:>14.6} {:>10.2} {:>12.2}",
            r.component, r.eigenvalue, r.percent, r.cumulative
        );
    }
    let max_cond = model
        .regression
        .conditioning
        .iter()
        .copied()
        .fold(0.0, f64::max);
    say!("regression condition diagnostic: {max_cond:.3e}");
    let report = pipeline::evaluate(&model, &archive, &table, &EvaluationOptions::new(EvaluationMode::Pca))?;
    say!("PCA-mode mean error: {:.4}%", report.overall_mean);
    Ok(())
}

fn read_listener(path: &Path, model: &hrtf_core::TrainedModel) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("malformed JSON in {}: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| usage(format!("{} must hold a JSON object", path.display())))?;
    let wanted: Vec<&str> = model
        .feature_indices
        .iter()
        .map(|&i| MEASUREMENT_NAMES[i])
        .collect();
    for key in obj.keys() {
        if !wanted.contains(&key.as_str()) {
            log::warn!("ignoring unused feature '{key}'");
        }
    }
    wanted
        .iter()
        .map(|name| match obj.get(*name) {
            None => Err(usage(format!("missing feature '{name}' in {}", path.display()))),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| usage(format!("feature '{name}' must be a finite number"))),
        })
        .collect()
}

fn cmd_individualize(args: &IndividualizeArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let features = read_listener(&args.features, &model)?;
    let options = SynthesisOptions {
        delay_mode: if args.fractional_delay {
            DelayMode::Fractional
        } else {
            DelayMode::Rounded
        },
        out_length: args.out_length,
    };
    let set = pipeline::individualize(&model, &features, &options)?;
    set.to_archive(&args.id)?.save(&args.out)?;
    say!("wrote {} HRIR pairs to {}", set.directions.len(), args.out.display());
    say!("{:>12} {:>6} {:>12} {:>12}", "hemisphere", "az", "left delay", "right delay");
    for (d, dir) in set.directions.iter().enumerate() {
        say!(
            "{:>12} {:>6} {:>12.2} {:>12.2}",
            dir.hemisphere.name(),
            dir.azimuth_deg,
            set.cell(0, d).delay_applied,
            set.cell(1, d).delay_applied
        );
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let (archive, table) = args.data.load()?;
    let mode = match (args.mode, args.holdout) {
        (Mode::Pca, true) => return Err(usage("--holdout applies to individualized mode only")),
        (Mode::Pca, false) => EvaluationMode::Pca,
        (Mode::Individualized, false) => EvaluationMode::Individualized,
        (Mode::Individualized, true) => EvaluationMode::Holdout,
    };
    let options = EvaluationOptions {
        mode,
        sd_band: args.sd_band,
    };
    let report = pipeline::evaluate(&model, &archive, &table, &options)?;
    if let Some(dir) = &args.out {
        write_file(&dir.join("evaluation.csv"), &report.to_csv())?;
        write_file(&dir.join("per_azimuth.csv"), &report.per_azimuth_csv())?;
        write_file(&dir.join("summary.json"), &(report.summary_json()? + "\n"))?;
    }
    say!("mode: {}", mode.name());
    say!("left ear mean error:  {:.4}%", report.ear_means[0]);
    say!("right ear mean error: {:.4}%", report.ear_means[1]);
    say!("overall mean error:   {:.4}%", report.overall_mean);
    say!("mean SD score:        {:.4} dB", report.sd_mean);
    Ok(())
}

fn cmd_features(args: &FeaturesArgs) -> CmdResult {
    let (archive, table) = args.data.load()?;
    let config = FeatureConfig {
        notch_band: args.notch_band,
        ild_band: args.ild_band,
        notch_ear: match args.notch_ear {
            EarArg::Left => Ear::Left,
            EarArg::Right => Ear::Right,
        },
        notch_direction: Direction {
            azimuth_deg: args.notch_azimuth,
            hemisphere: match args.notch_hemisphere {
                HemisphereArg::Front => Hemisphere::Front,
                HemisphereArg::Rear => Hemisphere::Rear,
            },
        },
        ..FeatureConfig::default()
    };
    let report = features::correlation_report(&archive, &table, &config)?;
    if let Some(dir) = &args.out {
        write_file(&dir.join("correlations.csv"), &report.to_csv())?;
        write_file(&dir.join("summaries.csv"), &report.summaries_csv())?;
    }
    say!("{}", report.to_text().trim_end());
    Ok(())
}

fn cmd_synth(args: &SynthArgs, seed: u64) -> CmdResult {
    let config = SynthConfig {
        subjects: args.subjects,
        q: args.q,
        seed,
        noise_level: args.noise,
        ..SynthConfig::default()
    };
    let world = testkit::synth_generate(&config).map_err(|e| match e {
        Error::Config(msg) => usage(msg),
        e => e.into(),
    })?;
    world.write(&args.out)?;
    say!(
        "wrote {} subjects x {} directions (q = {}, seed {seed}) to {}",
        args.subjects,
        config.directions.len(),
        args.q,
        args.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_COMPUTE,
                message: e.to_string(),
            })?;
    }
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Individualize(a) => cmd_individualize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Features(a) => cmd_features(a),
        Command::Synth(a) => cmd_synth(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
