use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use recsel_core::baselines::MvStrategy;
use recsel_core::data::synthetic::{generate, write_udata, SyntheticConfig};
use recsel_core::data::{parse_ratings, read_manifest, sample_target_users, split_train_test, write_manifest, Schema, SplitDataset};
use recsel_core::dro::{Formulation, PadmSettings};
use recsel_core::eval::{
    evaluate_selections, prepare_users, rank_selection, read_selections, run_experiment, ExperimentConfig, MethodPoint, Report,
    SelectionRow,
};
use recsel_core::moments::{pairwise_covariance, ShrinkageConfig};
use recsel_core::predictor::{fit_mf, load_model, save_model, MfConfig};

/// Robust top-N recommendation selection.
#[derive(Parser)]
#[command(name = "recsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a rating file per user and write the fold manifest.
    Prepare(PrepareArgs),
    /// Fit the factor model on a manifest's training fold.
    Fit(FitArgs),
    /// Select lists for sampled or named users with one method.
    Select(SelectArgs),
    /// Score selection CSVs against a manifest's test fold.
    Evaluate(EvaluateArgs),
    /// Run the full experiment described by a config file.
    Run(RunArgs),
    /// Write a synthetic rating file in `u.data` layout.
    Synth(SynthArgs),
    /// Print the default experiment config as TOML.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Ml100k,
    Ml1m,
}

#[derive(Args)]
struct PrepareArgs {
    /// Rating file.
    data: PathBuf,
    #[arg(long, value_enum, default_value = "ml100k", conflicts_with = "schema_file")]
    schema: Preset,
    /// TOML schema (delimiter, fields, has_header, scale) for other layouts.
    #[arg(long)]
    schema_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.6)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    min_ratings: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ManifestArgs {
    /// Fold manifest written by `prepare`.
    #[arg(long)]
    split: PathBuf,
    /// Rating scale as `lo,hi`.
    #[arg(long, default_value = "1,5", value_parser = parse_pair)]
    scale: (f64, f64),
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    #[arg(long, default_value_t = 100)]
    factors: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    regularization: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    TopN,
    Mv,
    Dro,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Frobenius,
    Trace,
    Plain,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Model CSV written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// List size.
    #[arg(short = 'n', long, default_value_t = 3)]
    list_size: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    kappa1: f64,
    #[arg(long, default_value_t = 0.1)]
    kappa2: f64,
    #[arg(long, value_enum, default_value = "frobenius")]
    formulation: Form,
    /// Weight of both Frobenius terms.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Comma-separated user ids; otherwise `--users` are sampled.
    #[arg(long, value_delimiter = ',')]
    user_ids: Vec<String>,
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    shrinkage: f64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Selection CSVs (`run,user_id,method,param,rank,item_id`).
    #[arg(required = true)]
    selections: Vec<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    /// Directory for report.csv and runs.csv.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON experiment config.
    config: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Write zero times so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 943)]
    users: usize,
    #[arg(long, default_value_t = 1682)]
    items: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn read_split(m: &ManifestArgs) -> Result<SplitDataset> {
    read_manifest(&m.split, m.scale, 0.6, 0).with_context(|| format!("reading {}", m.split.display()))
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let schema = match (&a.schema_file, a.schema) {
        (Some(p), _) => toml::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("schema {}", p.display()))?,
        (None, Preset::Ml100k) => Schema::movielens_100k(),
        (None, Preset::Ml1m) => Schema::movielens_1m(),
    };
    let (ds, report) = parse_ratings(&a.data, &schema)?;
    info!("{} ratings, {} users, {} items; {report:?}", ds.len(), ds.n_users(), ds.n_items());
    let split = split_train_test(&ds, a.ratio, a.seed, a.min_ratings)?;
    write_manifest(&split, &a.out)?;
    println!(
        "{} train / {} test ratings -> {}",
        split.train.len(),
        split.test.len(),
        a.out.display()
    );
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let split = read_split(&a.manifest)?;
    let cfg = MfConfig {
        factors: a.factors,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        regularization: a.regularization,
        seed: a.seed,
        ..Default::default()
    };
    let model = fit_mf(&split.train, &cfg)?;
    save_model(&model, &a.out)?;
    println!("train rmse {:.4} -> {}", model.rmse(&split.train), a.out.display());
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let split = read_split(&a.manifest)?;
    let model = load_model(&a.model)?;
    let table = pairwise_covariance(&split.train)?;
    let users = if a.user_ids.is_empty() {
        sample_target_users(&split, a.users, a.list_size, a.seed)?
    } else {
        a.user_ids
            .iter()
            .map(|t| split.train.user_id(t).with_context(|| format!("unknown user {t}")))
            .collect::<Result<_>>()?
    };
    let shrinkage = ShrinkageConfig {
        weight: a.shrinkage,
        ..Default::default()
    };
    let inputs = prepare_users(&split, &model, &table, &users, &shrinkage)?;
    let method = match a.method {
        Method::TopN => MethodPoint::TopN,
        Method::Mv => MethodPoint::MeanVariance {
            alpha: a.alpha,
            strategy: MvStrategy::Auto,
        },
        Method::Dro => MethodPoint::Dro {
            kappa1: a.kappa1,
            kappa2: a.kappa2,
            formulation: match a.formulation {
                Form::Frobenius => Formulation::Frobenius {
                    lambda_p: a.lambda,
                    lambda_q: a.lambda,
                },
                Form::Trace => Formulation::Trace { tau_p: None, tau_q: None },
                Form::Plain => Formulation::Plain,
            },
        },
    };
    let param = method.param(a.list_size);
    let mut w = csv::Writer::from_path(&a.out)?;
    for input in &inputs {
        let picked = method
            .select(input, a.list_size, &PadmSettings::default())
            .with_context(|| format!("user {}", split.user_token(input.user)))?;
        for (rank, item) in rank_selection(input, &picked).into_iter().enumerate() {
            w.serialize(SelectionRow {
                run: 0,
                user_id: split.user_token(input.user).to_owned(),
                method: method.name().into(),
                param: param.clone(),
                rank: rank + 1,
                item_id: split.item_token(item).to_owned(),
            })?;
        }
    }
    w.flush()?;
    println!("{} users -> {}", inputs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let split = read_split(&a.manifest)?;
    let mut rows = Vec::new();
    for p in &a.selections {
        rows.extend(read_selections(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let report = evaluate_selections(&split, &rows, a.threshold)?;
    report.write(&a.out)?;
    print_rows(&report);
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if a.no_timing {
        cfg.timing = false;
    }
    let report = run_experiment(&cfg, Some(&a.out))?;
    print_rows(&report);
    println!("-> {}", a.out.join("report.csv").display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        users: a.users,
        items: a.items,
        seed: a.seed,
        ..Default::default()
    };
    let ds = generate(&cfg)?;
    write_udata(&ds, &a.out)?;
    println!("{} ratings -> {}", ds.len(), a.out.display());
    Ok(())
}

fn print_rows(report: &Report) {
    println!("{:<6} {:<24} {:>8} {:>8} {:>10}", "method", "param", "f1", "1-gini", "time[s]");
    for r in &report.rows {
        println!(
            "{:<6} {:<24} {:>8.4} {:>8.4} {:>10.4}",
            r.method, r.param, r.f1_mean, r.div_mean, r.time_mean
        );
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare(a) => {
            ensure_parent(&a.out)?;
            prepare(a)
        }
        Command::Fit(a) => {
            ensure_parent(&a.out)?;
            fit(a)
        }
        Command::Select(a) => {
            if a.list_size == 0 {
                bail!("list size must be positive");
            }
            ensure_parent(&a.out)?;
            select(a)
        }
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
        Command::Synth(a) => {
            ensure_parent(&a.out)?;
            synth(a)
        }
        Command::Config => {
            print!("{}", ExperimentConfig::default().to_toml()?);
            Ok(())
        }
    }
}
