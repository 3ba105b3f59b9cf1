//! Command-line front end. [`run`] parses arguments and returns the
//! process exit code: 0 on success, 1 on partial failure, 2 on invalid
//! input or configuration.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset_io::{build_dataset, list_images, load_image, preview_panel, save_gray, save_rgb, BuildOptions};
use crate::distill::{
    attention_map, db_loss_attended, db_loss_plain, image_to_tensor, inside_outside_means, mean_kd_loss, toy_normals,
    train_student, SgdConfig, ToyBackbone, ToyHead, DEFAULT_CHANNELS,
};
use crate::error::{Error, Result};
use crate::eval::{read_scores, MetricReport};
use crate::fag::{generate, FagConfig};
use crate::imgproc::otsu_threshold;
use crate::rng::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

/// Builds with more failed samples than this fraction exit with [`EXIT_PARTIAL`].
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Toy images used by the distillation demo.
pub const DEMO_NORMALS: usize = 8;
pub const DEMO_SIZE: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "fracanom", version, about = "Fractal anomaly generation and toy feature distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an anomaly dataset from a directory of normal images.
    Gen(GenArgs),
    /// Write a side-by-side preview of one generated sample.
    Preview(PreviewArgs),
    /// Train a toy student against a random teacher and report attention.
    DistillDemo(DistillArgs),
    /// Image-level AUROC from a `path,score,label` CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

/// Flags that override fields of the generation config.
#[derive(Debug, Clone, Args)]
pub struct FagFlags {
    /// TOML or JSON config file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub dilate_iters: Option<usize>,
    /// Rotation range in degrees, as `LO,HI`.
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    pub rotation_range: Option<(f64, f64)>,
    /// Confine anomalies to an Otsu foreground mask.
    #[arg(long, value_enum)]
    pub object_threshold: Option<Switch>,
    /// Resize inputs to a square of this side before generation.
    #[arg(long, value_name = "SIDE")]
    pub resize: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 391)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fag: FagFlags,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "preview.png")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fag: FagFlags,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// With `off`, skip distillation and score the plain backbone instead.
    #[arg(long, value_enum, default_value = "on")]
    pub bkd: Switch,
    #[arg(long, default_value = "distill_demo")]
    pub out: PathBuf,
    /// TOML or JSON config file; only its `sgd` table is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub scores: PathBuf,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Layered configuration as read from a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub fag: FagConfig,
    pub sgd: SgdConfig,
}

impl CliConfig {
    /// Parses TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn from_file(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(CliConfig::default()), CliConfig::load)
    }
}

impl FagFlags {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(&self) -> Result<FagConfig> {
        let mut cfg = CliConfig::from_file(self.config.as_deref())?.fag;
        if let Some(n) = self.dilate_iters {
            cfg.dilation_iterations = n;
        }
        if let Some(r) = self.rotation_range {
            cfg.rotation_range = r;
        }
        if let Some(s) = self.object_threshold {
            cfg.object_constrained = s.is_on();
        }
        if self.resize == Some(0) {
            return Err(Error::Config("resize side must be positive".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if !(lo <= hi) {
        return Err(format!("range {lo},{hi} is not ordered"));
    }
    Ok((lo, hi))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Preview(a) => cmd_preview(&a),
        Command::DistillDemo(a) => cmd_distill_demo(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Input and configuration problems map to [`EXIT_INVALID`], everything
/// else to [`EXIT_PARTIAL`].
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Encode { .. } | Error::NonFiniteLoss { .. } | Error::ResampleExhausted { .. } => {
            EXIT_PARTIAL
        }
        _ => EXIT_INVALID,
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let config = args.fag.resolve()?;
    let inputs = list_images(&args.input)?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(format!("no PNG or JPEG images in {}", args.input.display())));
    }
    let opts = BuildOptions { count: args.count, master_seed: args.seed, config, resize: args.fag.resize };
    let summary = build_dataset(&inputs, &args.out, &opts)?;
    println!(
        "wrote {} pairs to {} ({} resample retries, {} failed) in {:.2}s",
        summary.written,
        args.out.display(),
        summary.retries,
        summary.failed,
        summary.elapsed.as_secs_f64()
    );
    for f in &summary.manifest.failures {
        eprintln!("sample {} ({}): {}", f.sample, f.source_path, f.reason);
    }
    Ok(if summary.failure_rate() > MAX_FAILURE_RATE { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn cmd_preview(args: &PreviewArgs) -> Result<i32> {
    let config = args.fag.resolve()?;
    let x_nor = load_image(&args.input, args.fag.resize)?;
    let object = config.object_constrained.then(|| otsu_threshold(&x_nor).mask);
    let pair = generate(&x_nor, object.as_ref(), &config, args.seed)?;
    save_rgb(&args.out, &preview_panel(&x_nor, &pair)?)?;
    println!("wrote {}", args.out.display());
    Ok(EXIT_OK)
}

/// Numbers reported by the distillation demo.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub initial_kd: f64,
    pub final_kd: f64,
    pub trace: Vec<f64>,
    pub attention_inside: Option<f64>,
    pub attention_outside: Option<f64>,
    pub db_loss: f64,
}

pub fn cmd_distill_demo(args: &DistillArgs) -> Result<i32> {
    let mut sgd = CliConfig::from_file(args.config.as_deref())?.sgd;
    if let Some(s) = args.steps {
        sgd.steps = s;
    }
    if let Some(lr) = args.lr {
        sgd.learning_rate = lr;
    }
    sgd.validate()?;
    let report = distill_demo(args.seed, &sgd, args.bkd.is_on(), &args.out)?;
    println!("initial kd_loss {:.6}", report.initial_kd);
    println!("final kd_loss   {:.6}", report.final_kd);
    if let (Some(i), Some(o)) = (report.attention_inside, report.attention_outside) {
        println!("mean attention inside anomaly {i:.6}, outside {o:.6}");
    }
    println!("db_loss of an untrained head {:.6}", report.db_loss);
    println!("outputs in {}", args.out.display());
    Ok(EXIT_OK)
}

/// Runs the demo and writes `loss.csv`, `anomaly.png` and, with
/// distillation enabled, `attention.png` under `out`.
///
/// `loss.csv` holds the batch loss before each update followed by the
/// final loss, so `steps = 0` yields one row.
pub fn distill_demo(seed: u64, sgd: &SgdConfig, bkd: bool, out: &Path) -> Result<DemoReport> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let teacher = ToyBackbone::<f64>::default_random(derive_seed(seed, 0));
    let student = ToyBackbone::<f64>::default_student(derive_seed(seed, 1));
    let images = toy_normals(DEMO_NORMALS, DEMO_SIZE, derive_seed(seed, 2));
    let normals: Vec<_> = images.iter().map(image_to_tensor::<f64>).collect();
    let pair = generate(&images[0], None, &FagConfig::default(), derive_seed(seed, 3))?;
    let anomalous = image_to_tensor::<f64>(&pair.anomaly_image);
    let head = ToyHead::<f64>::random(&DEFAULT_CHANNELS, derive_seed(seed, 4));
    save_rgb(&out.join("anomaly.png"), &pair.anomaly_image)?;

    let initial_kd = mean_kd_loss(&teacher, &student, &normals)?;
    let (student, mut trace) = if bkd { train_student(&teacher, &student, &normals, sgd, seed)? } else { (student, Vec::new()) };
    let final_kd = mean_kd_loss(&teacher, &student, &normals)?;
    trace.push(final_kd);

    let csv_path = out.join("loss.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    w.write_record(["step", "kd_loss"]).map_err(|e| csv_error(&csv_path, e))?;
    for (step, loss) in trace.iter().enumerate() {
        w.write_record([step.to_string(), loss.to_string()]).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let (attention_inside, attention_outside, db_loss) = if bkd {
        let att = attention_map(&teacher, &student, &anomalous)?;
        let (inside, outside) = inside_outside_means(&att, &pair.mask);
        let peak = att.data().iter().copied().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        let gray = att.data().iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
        save_gray(&out.join("attention.png"), DEMO_SIZE, DEMO_SIZE, gray)?;
        let (db, _) = db_loss_attended(&teacher, &student, &head, &anomalous, &pair.mask)?;
        (Some(inside), Some(outside), db)
    } else {
        let (db, _, _) = db_loss_plain(&student, &head, &anomalous, &pair.mask)?;
        (None, None, db)
    };
    Ok(DemoReport { initial_kd, final_kd, trace, attention_inside, attention_outside, db_loss })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Encode { path: path.to_path_buf(), reason: format!("{other:?}") },
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let records = read_scores(&args.scores)?;
    let report = MetricReport::from_records(&args.scores, &records)?;
    println!("image AUROC {:.6} over {} samples", report.image_auroc, report.samples);
    if let Some(path) = &args.json {
        report.write_json(path)?;
    }
    Ok(EXIT_OK)
}
