//! `taf` command line: generate the synthetic benchmark, train and evaluate
//! classifiers, check gradients, and inspect learned filter placements.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data/model errors
//! (including a failing gradient check).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use taf::data::{load_dataset, synth_generate, Dataset, SynthSpec};
use taf::filterbank::FilterParams;
use taf::model::{
    read_checkpoint, write_checkpoint, Checkpointed, Model, ModelKind, OneVsAllModel,
};
use taf::pooling::pyramid_params;
use taf::train::{
    evaluate, evaluate_one_vs_all, fit, fit_one_vs_all, grad_check, CheckDims, HistoryEntry,
    TrainConfig,
};
use taf::{Real, TafError};

#[derive(Parser)]
#[command(
    name = "taf",
    about = "Temporal attention filter banks for variable-length sequence classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic planted-motif benchmark.
    Synth(SynthArgs),
    /// Train a classifier on a dataset manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint: accuracy and confusion matrix.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Dump or draw the temporal filter placements of a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for feature files and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    train_count: usize,
    #[arg(long, default_value_t = 100)]
    test_count: usize,
    #[arg(long, default_value_t = 6)]
    motif_len: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// Std of the per-sample jitter on the relative motif center.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 40)]
    t_min: usize,
    #[arg(long, default_value_t = 80)]
    t_max: usize,
    /// Comma-separated relative motif centers, one per class (default: evenly
    /// spread over [0.15, 0.85]).
    #[arg(long)]
    positions: Option<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Classifier kind: max | sum | mean | pyramid | static | lstm.
    #[arg(long)]
    model: String,
    /// Number of attention filters M (static and lstm models).
    #[arg(long, default_value_t = 15)]
    filters: usize,
    /// Gaussian taps per filter N.
    #[arg(long, default_value_t = 1)]
    taps: usize,
    /// Pyramid depth L (pyramid model): 2^L - 1 filters.
    #[arg(long, default_value_t = 4)]
    pyramid_level: usize,
    /// LSTM iterations S.
    #[arg(long, default_value_t = 4)]
    steps: usize,
    #[arg(long, default_value_t = 128)]
    lstm_hidden: usize,
    /// MLP head hidden width.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Frame-skip augmentation bound (0 disables).
    #[arg(long, default_value_t = 5)]
    max_skip: usize,
    /// Record split accuracy every this many iterations (0 disables).
    #[arg(long, default_value_t = 500)]
    eval_every: usize,
    /// Train one binary classifier per class and combine by argmax.
    #[arg(long, default_value_t = false)]
    one_vs_all: bool,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Which split to evaluate: test | train.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Model kind: max | sum | mean | pyramid | static | lstm.
    #[arg(long, default_value = "static")]
    model: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Central-difference step h.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Feature file; required for per-video placement of LSTM models.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Nominal sequence length used when no features are given.
    #[arg(long, default_value_t = 100)]
    len: usize,
    /// Write placements as TSV here ('-' or omit for stdout).
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Draw Gaussian envelopes per filter lane into this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
}

enum AppError {
    Usage(String),
    Data(TafError),
}

impl From<TafError> for AppError {
    fn from(e: TafError) -> Self {
        AppError::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(code) => code,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, AppError> {
    if args.classes < 2 {
        return Err(AppError::Usage("--classes must be at least 2".into()));
    }
    let positions = match &args.positions {
        Some(s) => {
            let parsed: std::result::Result<Vec<f64>, _> =
                s.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
            parsed.map_err(|_| AppError::Usage(format!("cannot parse --positions '{s}'")))?
        }
        None => SynthSpec::spread_positions(args.classes),
    };
    let spec = SynthSpec {
        classes: args.classes,
        dim: args.dim,
        motif_len: args.motif_len,
        positions,
        jitter: args.jitter,
        t_range: (args.t_min, args.t_max),
        noise_std: args.noise_std,
        train_count: args.train_count,
        test_count: args.test_count,
        seed: args.seed,
    };
    spec.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    let out = synth_generate(&spec, &args.out)?;
    println!("{}", out.manifest_path.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_kind(args: &TrainArgs) -> Result<ModelKind, AppError> {
    let kind = match args.model.as_str() {
        "max" => ModelKind::Max,
        "sum" => ModelKind::Sum,
        "mean" => ModelKind::Mean,
        "pyramid" => ModelKind::Pyramid {
            level: args.pyramid_level,
            taps: args.taps,
        },
        "static" => ModelKind::Static {
            filters: args.filters,
            taps: args.taps,
        },
        "lstm" => ModelKind::Lstm {
            filters: args.filters,
            taps: args.taps,
            steps: args.steps,
            lstm_hidden: args.lstm_hidden,
        },
        other => {
            return Err(AppError::Usage(format!(
                "unknown model kind '{other}' (expected max|sum|mean|pyramid|static|lstm)"
            )))
        }
    };
    Ok(kind)
}

fn print_history<F: Real>(history: &[HistoryEntry<F>]) {
    for entry in history {
        match entry.eval_accuracy {
            Some(acc) => println!("{}\t{}\t{}", entry.iteration, entry.loss, acc),
            None => println!("{}\t{}", entry.iteration, entry.loss),
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, AppError> {
    let kind = parse_kind(&args)?;
    let cfg = TrainConfig {
        iterations: args.iters,
        batch_size: args.batch,
        momentum: args.momentum,
        learning_rate: args.lr,
        seed: args.seed,
        max_skip: args.max_skip,
        one_vs_all: args.one_vs_all,
        hidden: args.hidden,
        eval_every: args.eval_every,
    };
    cfg.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    let data: Dataset<f64> = load_dataset(&args.manifest)?;

    let (checkpointed, train_acc, test_acc) = if args.one_vs_all {
        let (model, histories) = fit_one_vs_all(&kind, &data, &cfg)?;
        for (class, history) in histories.iter().enumerate() {
            println!("# class {class}");
            print_history(history);
        }
        let train_acc = evaluate_one_vs_all(&model, &data.train)?;
        let test_acc = if data.test.is_empty() {
            None
        } else {
            Some(evaluate_one_vs_all(&model, &data.test)?)
        };
        (Checkpointed::OneVsAll(model), train_acc, test_acc)
    } else {
        let (model, history) = fit(&kind, &data, &cfg)?;
        print_history(&history);
        let train_acc = evaluate(&model, &data.train)?;
        let test_acc = if data.test.is_empty() {
            None
        } else {
            Some(evaluate(&model, &data.test)?)
        };
        (Checkpointed::Single(model), train_acc, test_acc)
    };
    write_checkpoint(&checkpointed, &args.out)?;
    println!("train_accuracy\t{train_acc}");
    if let Some(acc) = test_acc {
        println!("test_accuracy\t{acc}");
    }
    println!("checkpoint\t{}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, AppError> {
    let split_test = match args.split.as_str() {
        "test" => true,
        "train" => false,
        other => {
            return Err(AppError::Usage(format!(
                "unknown split '{other}' (expected test|train)"
            )))
        }
    };
    let model = read_checkpoint::<f64>(&args.checkpoint)?;
    let data: Dataset<f64> = load_dataset(&args.manifest)?;
    if model.feature_dim() != data.dim {
        return Err(AppError::Data(TafError::Dataset(format!(
            "checkpoint expects feature dim {}, dataset has {}",
            model.feature_dim(),
            data.dim
        ))));
    }
    let samples = if split_test { &data.test } else { &data.train };
    if samples.is_empty() {
        return Err(AppError::Data(TafError::Dataset(format!(
            "{} split is empty",
            args.split
        ))));
    }
    let classes = model.class_count().max(data.classes);
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut hits = 0usize;
    for s in samples {
        let predicted = match &model {
            Checkpointed::Single(m) => m.predict(s)?,
            Checkpointed::OneVsAll(m) => m.predict(s)?,
        };
        confusion[s.label()][predicted] += 1;
        if predicted == s.label() {
            hits += 1;
        }
    }
    println!("accuracy\t{}", hits as f64 / samples.len() as f64);
    for row in &confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("{}", cells.join("\t"));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode, AppError> {
    let (kind, dims) = match args.model.as_str() {
        "max" => (ModelKind::Max, baseline_dims()),
        "sum" => (ModelKind::Sum, baseline_dims()),
        "mean" => (ModelKind::Mean, baseline_dims()),
        "pyramid" => (ModelKind::Pyramid { level: 2, taps: 1 }, baseline_dims()),
        "static" => (
            ModelKind::Static { filters: 2, taps: 2 },
            CheckDims {
                seq_len: 9,
                feature_dim: 3,
                classes: 3,
                hidden: 5,
            },
        ),
        "lstm" => (
            ModelKind::Lstm {
                filters: 1,
                taps: 3,
                steps: 2,
                lstm_hidden: 4,
            },
            CheckDims {
                seq_len: 8,
                feature_dim: 2,
                classes: 2,
                hidden: 5,
            },
        ),
        other => {
            return Err(AppError::Usage(format!(
                "unknown model kind '{other}' (expected max|sum|mean|pyramid|static|lstm)"
            )))
        }
    };
    let report = grad_check(&kind, &dims, args.seed, args.step, args.tol)?;
    for group in &report.groups {
        println!(
            "{}\t{}\t{}",
            group.name, group.max_rel_err, group.checked
        );
    }
    if report.passed() {
        println!("result\tpass");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("result\tfail");
        Ok(ExitCode::from(2))
    }
}

fn baseline_dims() -> CheckDims {
    CheckDims {
        seq_len: 9,
        feature_dim: 3,
        classes: 3,
        hidden: 5,
    }
}

/// One placement row: filter index, iteration, absolute center/stride/width
/// in frames, and the relative center and stride.
struct PlacementRow {
    filter: usize,
    iteration: usize,
    params: FilterParams<f64>,
}

fn placements(
    model: &Model<f64>,
    features: Option<&Path>,
    nominal_len: usize,
) -> Result<(Vec<PlacementRow>, usize, usize), AppError> {
    match model {
        Model::Static(m) => {
            let rows = (0..m.filter_count())
                .map(|f| PlacementRow {
                    filter: f,
                    iteration: 1,
                    params: m.filter(f),
                })
                .collect();
            Ok((rows, nominal_len, m.taps()))
        }
        Model::Pyramid(m) => {
            let params = pyramid_params::<f64>(m.level(), m.taps(), nominal_len);
            let rows = params
                .into_iter()
                .enumerate()
                .map(|(f, params)| PlacementRow {
                    filter: f,
                    iteration: 1,
                    params,
                })
                .collect();
            Ok((rows, nominal_len, m.taps()))
        }
        Model::Lstm(m) => match features {
            Some(path) => {
                let x = taf::data::load_features::<f64>(path)?;
                let (_, cache) = m.forward(&x)?;
                let mut rows = Vec::new();
                for (s, step_params) in cache.param_trace().into_iter().enumerate() {
                    for (f, params) in step_params.into_iter().enumerate() {
                        rows.push(PlacementRow {
                            filter: f,
                            iteration: s + 1,
                            params,
                        });
                    }
                }
                Ok((rows, x.len(), m.taps()))
            }
            None => {
                eprintln!(
                    "warning: no --features given; placements reflect initialization, \
                     not per-video adaptation"
                );
                let rows = m
                    .initial_params()
                    .into_iter()
                    .enumerate()
                    .map(|(f, params)| PlacementRow {
                        filter: f,
                        iteration: 1,
                        params,
                    })
                    .collect();
                Ok((rows, nominal_len, m.taps()))
            }
        },
        Model::Pooled(_) => Err(AppError::Data(TafError::InvalidArgument(
            "pooled models have no temporal filters to inspect".into(),
        ))),
    }
}

fn cmd_inspect(args: InspectArgs) -> Result<ExitCode, AppError> {
    if args.len == 0 {
        return Err(AppError::Usage("--len must be positive".into()));
    }
    let model = match read_checkpoint::<f64>(&args.checkpoint)? {
        Checkpointed::Single(m) => m,
        Checkpointed::OneVsAll(OneVsAllModel { .. }) => {
            return Err(AppError::Data(TafError::InvalidArgument(
                "inspect expects a single-model checkpoint, not a one-vs-all ensemble".into(),
            )))
        }
    };
    let (rows, seq_len, taps) = placements(&model, args.features.as_deref(), args.len)?;

    let mut tsv = String::from("m\titeration\tg\tdelta\tsigma\tg_rel\tdelta_rel\n");
    for row in &rows {
        let p = &row.params;
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.filter,
            row.iteration,
            p.center_frames(seq_len),
            p.stride_frames(seq_len, taps),
            p.sigma_sq().sqrt(),
            p.center_rel(),
            p.delta_tilde(),
        ));
    }
    match &args.tsv {
        Some(path) => {
            std::fs::write(path, &tsv).map_err(|e| TafError::io(path, e))?;
        }
        None => print!("{tsv}"),
    }
    if let Some(path) = &args.svg {
        let svg = render_svg(&rows, seq_len, taps);
        std::fs::write(path, svg).map_err(|e| TafError::io(path, e))?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Draws each filter as a lane of Gaussian tap envelopes along the time axis,
/// one color per iteration. 800px wide, 80px per lane, 256 samples per tap.
fn render_svg(rows: &[PlacementRow], seq_len: usize, taps: usize) -> String {
    const WIDTH: f64 = 800.0;
    const LANE: f64 = 80.0;
    const SAMPLES: usize = 256;
    const PALETTE: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
    ];
    let lanes = rows.iter().map(|r| r.filter + 1).max().unwrap_or(1);
    let height = LANE * lanes as f64;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    svg.push('\n');
    for lane in 0..lanes {
        let base = LANE * (lane + 1) as f64 - 10.0;
        svg.push_str(&format!(
            r##"<line x1="0" y1="{base}" x2="{WIDTH}" y2="{base}" stroke="#ccc" stroke-width="1"/>"##
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r##"<text x="4" y="{}" font-size="11" fill="#666">filter {lane}</text>"##,
            base - 56.0
        ));
        svg.push('\n');
    }
    let t_max = (seq_len.max(2) - 1) as f64;
    for row in rows {
        let color = PALETTE[(row.iteration - 1) % PALETTE.len()];
        let base = LANE * (row.filter + 1) as f64 - 10.0;
        let center = row.params.center_frames(seq_len);
        let stride = row.params.stride_frames(seq_len, taps);
        let sigma_sq = row.params.sigma_sq();
        for tap in 0..taps {
            let offset = tap as f64 - 0.5 * taps as f64 + 0.5;
            let mu = center + offset * stride;
            let mut points = String::new();
            for s in 0..SAMPLES {
                let t = t_max * s as f64 / (SAMPLES - 1) as f64;
                let value = (-(t - mu) * (t - mu) / (2.0 * sigma_sq)).exp();
                let x = WIDTH * t / t_max;
                let y = base - 60.0 * value;
                points.push_str(&format!("{x:.2},{y:.2} "));
            }
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" opacity="0.85"/>"#,
                points.trim_end()
            ));
            svg.push('\n');
        }
    }
    svg.push_str("</svg>\n");
    svg
}

// Keep clap's derive in sync with the doc'd interface.
#[test]
fn cli_parses() {
    use clap::CommandFactory;
    Cli::command().debug_assert();
}

#[test]
fn train_defaults_match_reference_configuration() {
    let cli = Cli::try_parse_from([
        "taf", "train", "--manifest", "m.tsv", "--model", "static", "--out", "c.ckpt",
    ])
    .unwrap();
    let Command::Train(args) = cli.command else {
        panic!("expected train");
    };
    assert_eq!(args.filters, 15);
    assert_eq!(args.taps, 1);
    assert_eq!(args.steps, 4);
    assert_eq!(args.pyramid_level, 4);
    assert_eq!(args.iters, 10_000);
    assert_eq!(args.batch, 100);
    assert!((args.momentum - 0.9).abs() < 1e-12);
    assert!((args.lr - 0.01).abs() < 1e-12);
    assert_eq!(args.max_skip, 5);
}
