use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use detbank::classify::{
    accuracy, det_curve, equal_error_point, fuse_feature_files, select_regularization, split_corpus, train_ovr_linear,
    write_det_points, LabeledFeatureSet, LinearOvrModel, SplitRatios, TrainParams, DEFAULT_REG_GRID,
};
use detbank::config::{BankConfig, Pooling, Statistic};
use detbank::manifest::RunManifest;
use detbank::pipeline::extract_stream;
use detbank::synth::SynthConfig;
use detbank::{Error, FeatureFile, Result};

const FORMATS: &str = "\
FILE FORMATS

Detection stream (UTF-8, one record per line, tab-separated, pixel coordinates):
  video_id  frame_index  frame_width  frame_height  category  x1  y1  x2  y2  score  [scale]
  video_id  frame_index  frame_width  frame_height      (keyframe without detections)
  #label  video_id  label                                (event label of a video)
  Other lines starting with '#' are comments.

Feature file (UTF-8):
  #DB v1 dim=<D> C=<C> R=<R> T=<T> S=<S> pooling=<mean|max|both>
  <video_id> <label|-> idx:val idx:val ...        (zero-based, strictly ascending)
  Index of (category c, region r, threshold t, statistic s) = ((c*R + r)*T + t)*S + s;
  with pooling=both the mean block precedes the max block. Fused files carry
  '#DB v1 dim=<D> pooling=fused'.

Model file:
  #DBMODEL v1 dim=<D> classes=<k1,k2,...> reg=<r> epochs=<e> seed=<s> scaling=<none|maxabs>
  <class> <bias> idx:val ...                       (one line per class)

DET file: '# false_alarm miss' then one 'false_alarm miss' pair per line.

Every command writes <output>.manifest.json next to its output.";

#[derive(Parser)]
#[command(name = "detbank", version, about = "Detection-statistics video features and event classification", after_long_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic detection stream.
    Synth(SynthArgs),
    /// Turn a detection stream into pooled feature vectors.
    Extract(ExtractArgs),
    /// Train a one-vs-rest linear classifier on the training split.
    Train(TrainArgs),
    /// Report forced-choice accuracy of a model.
    Eval(EvalArgs),
    /// Emit the DET curve of one class.
    Det(DetArgs),
    /// Concatenate feature files video by video.
    Fuse(FuseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Classes differ only in where categories appear.
    Spatial,
    /// Classes differ only in score levels, at equal expected score sums.
    Thresholds,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML spec file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Built-in planted spec (15 classes, 40 videos each, 10 keyframes).
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the resolved spec as TOML.
    #[arg(long)]
    write_spec: Option<PathBuf>,
    /// Also write a default bank config listing the spec's categories.
    #[arg(long)]
    bank_config: Option<PathBuf>,
}

#[derive(Args)]
struct BankFlags {
    /// Bank config TOML; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated category list (required without --config).
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
    /// Strictly ascending detection thresholds.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    thresholds: Option<Vec<f64>>,
    /// Drop thresholds below this value; the lowest remaining one is the
    /// suppression floor.
    #[arg(long, allow_hyphen_values = true)]
    min_threshold: Option<f64>,
    /// Pyramid subdivisions, e.g. 1,2,4.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Statistics among sum,count,binary.
    #[arg(long, value_delimiter = ',')]
    stats: Option<Vec<String>>,
    #[arg(long)]
    pooling: Option<String>,
    /// IoU above which a lower-scored box of the same category is suppressed.
    #[arg(long)]
    nms_iou: Option<f64>,
}

impl BankFlags {
    fn resolve(&self) -> Result<BankConfig> {
        let mut config = match (&self.config, &self.categories) {
            (Some(path), _) => BankConfig::from_toml(&read(path)?)?,
            (None, Some(cats)) => BankConfig::new(cats.clone()),
            (None, None) => return Err(Error::Config("either --config or --categories is required".into())),
        };
        if let (Some(_), Some(cats)) = (&self.config, &self.categories) {
            config.categories = cats.clone();
        }
        if let Some(t) = &self.thresholds {
            config.thresholds = t.clone();
        }
        if let Some(min) = self.min_threshold {
            config.thresholds.retain(|&t| t >= min);
        }
        if let Some(l) = &self.levels {
            config.pyramid_levels = l.clone();
        }
        if let Some(s) = &self.stats {
            config.statistics = s.iter().map(|x| x.parse::<Statistic>()).collect::<Result<_>>()?;
            config.normalize_statistics();
        }
        if let Some(p) = &self.pooling {
            config.pooling = p.parse::<Pooling>()?;
        }
        if let Some(iou) = self.nms_iou {
            config.nms_iou = iou;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    detections: PathBuf,
    #[command(flatten)]
    bank: BankFlags,
    #[arg(long)]
    out: PathBuf,
    /// Videos processed in parallel; output order is always by video id.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Recorded in the manifest; extraction itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SplitFlags {
    /// train,val,test fractions.
    #[arg(long, default_value = "0.4,0.2,0.4")]
    ratios: SplitRatios,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    split: SplitFlags,
    /// Fixed regularization; without it the grid is searched on validation.
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    reg_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = TrainParams::default().epochs)]
    epochs: usize,
    /// Scale each dimension by its largest absolute training value.
    #[arg(long)]
    max_abs_scaling: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Part {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Part of the seeded split to evaluate on.
    #[arg(long, value_enum, default_value = "all")]
    split: Part,
    #[command(flatten)]
    split_flags: SplitFlags,
    /// JSON accuracy report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    class: u32,
    #[arg(long, value_enum, default_value = "all")]
    split: Part,
    #[command(flatten)]
    split_flags: SplitFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Feature files, concatenated in the given order.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the manifest; fusion is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_labeled(path: &Path) -> Result<LabeledFeatureSet> {
    LabeledFeatureSet::from_file(FeatureFile::parse(&read(path)?)?)
}

fn select_part(set: LabeledFeatureSet, part: Part, flags: &SplitFlags) -> Result<LabeledFeatureSet> {
    if part == Part::All {
        return Ok(set);
    }
    let split = split_corpus(&set, flags.ratios, flags.seed)?;
    Ok(match part {
        Part::Train => split.train,
        Part::Val => split.val,
        Part::Test => split.test,
        Part::All => unreachable!(),
    })
}

fn part_name(part: Part) -> &'static str {
    match part {
        Part::All => "all",
        Part::Train => "train",
        Part::Val => "val",
        Part::Test => "test",
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let mut m = RunManifest::new("synth");
            let mut cfg = match (&args.spec, args.preset) {
                (Some(path), _) => SynthConfig::from_toml(&read(path)?)?,
                (None, Some(Preset::Spatial)) => SynthConfig::planted_spatial(0),
                (None, Some(Preset::Thresholds)) => SynthConfig::planted_thresholds(0),
                (None, None) => unreachable!("clap requires --spec or --preset"),
            };
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let spec = cfg.resolve()?;
            let stream = m.time("generate", || spec.generate());
            write(&args.out, &stream)?;
            if let Some(path) = &args.write_spec {
                write(path, &cfg.to_toml())?;
                m.outputs.push(path.clone());
            }
            if let Some(path) = &args.bank_config {
                write(path, &BankConfig::new(spec.categories().to_vec()).to_toml())?;
                m.outputs.push(path.clone());
            }
            m.seed = Some(cfg.seed);
            m.inputs.extend(args.spec.clone());
            m.outputs.insert(0, args.out.clone());
            m.config = serde_json::to_value(&cfg).expect("serializable");
            m.write_next_to(&args.out)?;
        }
        Command::Extract(args) => {
            let mut m = RunManifest::new("extract");
            let config = args.bank.resolve()?;
            let text = m.time("read", || read(&args.detections))?;
            let (file, stats) = extract_stream(&text, &config, args.jobs)?;
            m.record("parse", stats.parse_seconds);
            m.record("extract", stats.extract_seconds);
            m.time("write", || write(&args.out, &file.to_string()))?;
            m.seed = args.seed;
            m.inputs = vec![args.detections.clone()];
            m.inputs.extend(args.bank.config.clone());
            m.outputs = vec![args.out.clone()];
            m.config = json!({ "bank": config, "jobs": args.jobs, "dimension": file.header.dim });
            for (k, v) in [
                ("videos", stats.videos as f64),
                ("frames", stats.frames as f64),
                ("detections", stats.detections as f64),
                ("dropped_outside_frame", stats.dropped as f64),
                ("surviving_detections", stats.surviving as f64),
                ("detections_per_second", stats.detections_per_second()),
            ] {
                m.counters.insert(k.to_owned(), v);
            }
            m.write_next_to(&args.out)?;
            eprintln!(
                "extracted {} video(s), dim={}, {:.0} detections/s",
                stats.videos,
                file.header.dim,
                stats.detections_per_second()
            );
        }
        Command::Train(args) => {
            let mut m = RunManifest::new("train");
            let set = m.time("read", || read_labeled(&args.features))?;
            let split = split_corpus(&set, args.split.ratios, args.split.seed)?;
            let params = TrainParams {
                reg: args.reg.unwrap_or(TrainParams::default().reg),
                epochs: args.epochs,
                seed: args.split.seed,
                max_abs_scaling: args.max_abs_scaling,
            };
            let grid = match (args.reg, &args.reg_grid) {
                (Some(r), _) => vec![r],
                (None, Some(g)) => g.clone(),
                (None, None) => DEFAULT_REG_GRID.to_vec(),
            };
            let (model, val_acc) = m.time("train", || {
                if split.val.is_empty() {
                    train_ovr_linear(&split.train, params).map(|model| (model, f64::NAN))
                } else {
                    select_regularization(&split.train, &split.val, &grid, params)
                }
            })?;
            write(&args.out, &model.to_text())?;
            m.seed = Some(args.split.seed);
            m.inputs = vec![args.features.clone()];
            m.outputs = vec![args.out.clone()];
            m.config = json!({
                "ratios": [args.split.ratios.train, args.split.ratios.val, args.split.ratios.test],
                "reg_grid": grid,
                "selected_reg": model.params.reg,
                "epochs": args.epochs,
                "max_abs_scaling": args.max_abs_scaling,
            });
            m.counters.insert("train_size".into(), split.train.len() as f64);
            m.counters.insert("val_size".into(), split.val.len() as f64);
            m.counters.insert("test_size".into(), split.test.len() as f64);
            if val_acc.is_finite() {
                m.counters.insert("val_accuracy".into(), val_acc);
            }
            m.write_next_to(&args.out)?;
            eprintln!(
                "trained on {} video(s), reg={}, validation accuracy {val_acc:.4}",
                split.train.len(),
                model.params.reg
            );
        }
        Command::Eval(args) => {
            let mut m = RunManifest::new("eval");
            let model = LinearOvrModel::from_text(&read(&args.model)?)?;
            let set = select_part(read_labeled(&args.features)?, args.split, &args.split_flags)?;
            let acc = m.time("evaluate", || accuracy(&model, &set))?;
            let report = json!({
                "accuracy": acc,
                "videos": set.len(),
                "split": part_name(args.split),
            });
            write(
                &args.out,
                &(serde_json::to_string_pretty(&report).expect("json") + "\n"),
            )?;
            m.seed = Some(args.split_flags.seed);
            m.inputs = vec![args.model.clone(), args.features.clone()];
            m.outputs = vec![args.out.clone()];
            m.config = report;
            m.write_next_to(&args.out)?;
            eprintln!("accuracy {acc:.4} on {} video(s)", set.len());
        }
        Command::Det(args) => {
            let mut m = RunManifest::new("det");
            let model = LinearOvrModel::from_text(&read(&args.model)?)?;
            let set = select_part(read_labeled(&args.features)?, args.split, &args.split_flags)?;
            let points = m.time("det", || det_curve(&model, &set, args.class))?;
            write(&args.out, &write_det_points(&points))?;
            m.seed = Some(args.split_flags.seed);
            m.inputs = vec![args.model.clone(), args.features.clone()];
            m.outputs = vec![args.out.clone()];
            m.config = json!({ "class": args.class, "split": part_name(args.split) });
            m.counters.insert("points".into(), points.len() as f64);
            if let Some(eer) = equal_error_point(&points) {
                m.counters.insert("equal_error_rate".into(), eer.false_alarm);
            }
            m.write_next_to(&args.out)?;
        }
        Command::Fuse(args) => {
            let mut m = RunManifest::new("fuse");
            let files = args
                .inputs
                .iter()
                .map(|p| {
                    FeatureFile::parse(&read(p)?).map_err(|e| match e {
                        Error::Parse { line, msg } => Error::Parse {
                            line,
                            msg: format!("{}: {msg}", p.display()),
                        },
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let fused = m.time("fuse", || fuse_feature_files(&files))?;
            write(&args.out, &fused.to_string())?;
            m.seed = args.seed;
            m.inputs = args.inputs.clone();
            m.outputs = vec![args.out.clone()];
            m.config =
                json!({ "dims": files.iter().map(|f| f.header.dim).collect::<Vec<_>>(), "dim": fused.header.dim });
            m.write_next_to(&args.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
