use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bpr::data::{
    generate_synthetic, leave_one_out_split, load_interactions, load_split, merge_split,
};
use bpr::error::{Error, Result};
use bpr::evaluation::{
    heldout_auc, grid_search, most_popular_on_test_auc, np_max_bound, repeat_experiment,
    GridSpec, ModelSpec, DEFAULT_INIT_SIGMA,
};
use bpr::models::{cosine_similarity, load_model, save_model, MfModel, Model, PopularityModel};
use bpr::training::{learn_bpr, Hyperparams, Schedule, TrainOptions};

#[derive(Parser)]
#[command(name = "bpr", version, about = "Personalized item ranking from implicit feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct HyperArgs {
    /// Learning rate
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Regularization for user factors
    #[arg(long = "lambda-w", default_value_t = 0.002)]
    lambda_w: f64,
    /// Regularization for positive-item factor updates
    #[arg(long = "lambda-h-pos", default_value_t = 0.002)]
    lambda_h_pos: f64,
    /// Regularization for negative-item factor updates
    #[arg(long = "lambda-h-neg", default_value_t = 0.002)]
    lambda_h_neg: f64,
    /// Regularization for similarity updates on the positive item
    #[arg(long = "lambda-knn-pos", default_value_t = 0.002)]
    lambda_knn_pos: f64,
    /// Regularization for similarity updates on the negative item
    #[arg(long = "lambda-knn-neg", default_value_t = 0.002)]
    lambda_knn_neg: f64,
    /// Step budget multiplier m (total steps = m * |train|)
    #[arg(long = "steps-multiplier", default_value_t = 100)]
    steps_multiplier: u64,
}

impl HyperArgs {
    fn to_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            lambda_user: self.lambda_w,
            lambda_item_pos: self.lambda_h_pos,
            lambda_item_neg: self.lambda_h_neg,
            lambda_sim_pos: self.lambda_knn_pos,
            lambda_sim_neg: self.lambda_knn_neg,
            step_multiplier: self.steps_multiplier,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted low-rank dataset
    Synth {
        /// Output interaction TSV
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long = "per-user", default_value_t = 10)]
        per_user: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Leave-one-out split of an interaction file
    Split {
        input: PathBuf,
        out_train: PathBuf,
        out_test: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on an interaction file
    Train {
        train: PathBuf,
        /// Model kind: bpr-mf, bpr-knn, cosine-knn or most-popular
        #[arg(long, default_value = "bpr-mf")]
        model: String,
        /// Factor dimensionality for bpr-mf
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[command(flatten)]
        hyper: HyperArgs,
        /// bootstrap or user-wise
        #[arg(long, default_value = "bootstrap")]
        schedule: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Held-out interaction file for trace AUC
        #[arg(long)]
        heldout: Option<PathBuf>,
        /// Write the training trace CSV here
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Output model file
        #[arg(long, default_value = "model.txt")]
        out: PathBuf,
    },
    /// Evaluate a model on a train/test split
    Eval {
        model: PathBuf,
        train: PathBuf,
        test: PathBuf,
        /// Write the per-user AUC report CSV here
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also print the non-personalized upper bound and the
        /// most-popular-on-test comparator
        #[arg(long, default_value_t = false)]
        npmax: bool,
    },
    /// Print the top-N unseen items for one user
    Recommend {
        model: PathBuf,
        train: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Grid search plus repeated evaluation of several models
    Compare {
        train: PathBuf,
        test: PathBuf,
        /// Comma-separated model kinds
        #[arg(long, default_value = "bpr-mf,most-popular")]
        models: String,
        /// Grid file with "key = v1, v2" lines
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[command(flatten)]
        hyper: HyperArgs,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn check_dimensions(model: &Model, num_users: usize, num_items: usize) -> Result<()> {
    if model.num_items() != num_items {
        return Err(Error::DimensionMismatch(format!(
            "model has {} items, dataset has {}",
            model.num_items(),
            num_items
        )));
    }
    if let Model::Mf(m) = model {
        if m.num_users() != num_users {
            return Err(Error::DimensionMismatch(format!(
                "model has {} users, dataset has {}",
                m.num_users(),
                num_users
            )));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            users,
            items,
            rank,
            per_user,
            noise,
            seed,
        } => {
            let data = generate_synthetic(users, items, rank, per_user, noise, seed)?;
            let mut sink = create(&out)?;
            data.write_tsv(&mut sink)?;
            sink.flush()?;
            eprintln!(
                "wrote {} interactions ({} users x {} items) to {}",
                data.num_interactions(),
                data.num_users(),
                data.num_items(),
                out.display()
            );
            Ok(())
        }
        Command::Split {
            input,
            out_train,
            out_test,
            seed,
        } => {
            let loaded = load_interactions(open(&input)?)?;
            if loaded.duplicates > 0 {
                eprintln!("note: dropped {} duplicate interactions", loaded.duplicates);
            }
            let split = leave_one_out_split(&loaded.dataset, seed);
            if split.skipped_users > 0 {
                eprintln!(
                    "note: {} single-interaction users kept entirely in train",
                    split.skipped_users
                );
            }
            let mut train_sink = create(&out_train)?;
            split.train.write_tsv(&mut train_sink)?;
            train_sink.flush()?;
            let mut test_sink = create(&out_test)?;
            split.write_test_tsv(&mut test_sink)?;
            test_sink.flush()?;
            eprintln!(
                "split: {} train / {} test interactions",
                split.train.num_interactions(),
                split.test.len()
            );
            Ok(())
        }
        Command::Train {
            train,
            model,
            k,
            hyper,
            schedule,
            seed,
            heldout,
            trace,
            out,
        } => {
            let data = load_interactions(open(&train)?)?.dataset;
            let h = hyper.to_hyperparams();
            let schedule: Schedule = schedule.parse()?;
            let heldout_split = match &heldout {
                Some(path) => {
                    // rebuild the split so trace AUC uses a shared id space
                    Some(load_split(open(&train)?, open(path)?)?)
                }
                None => None,
            };
            let train_data = heldout_split
                .as_ref()
                .map(|s| &s.train)
                .unwrap_or(&data);

            let trained = match model.as_str() {
                "most-popular" => {
                    eprintln!("note: most-popular has no SGD training; SGD flags are ignored");
                    Model::Pop(PopularityModel::from_dataset(train_data))
                }
                "cosine-knn" => {
                    eprintln!("note: cosine-knn is computed directly; SGD flags are ignored");
                    Model::Knn(cosine_similarity(train_data))
                }
                "bpr-mf" | "bpr-knn" => {
                    h.validate()?;
                    let mut m = if model == "bpr-mf" {
                        Model::Mf(MfModel::init(
                            train_data.num_users(),
                            train_data.num_items(),
                            k,
                            DEFAULT_INIT_SIGMA,
                            seed,
                        )?)
                    } else {
                        Model::Knn(bpr::models::KnnModel::zeros(train_data.num_items()))
                    };
                    let opts = TrainOptions::new(schedule, seed.wrapping_add(1));
                    let run_trace =
                        learn_bpr(&mut m, train_data, &h, &opts, heldout_split.as_ref())?;
                    if let Some(path) = &trace {
                        let mut sink = create(path)?;
                        run_trace.write_csv(&mut sink)?;
                        sink.flush()?;
                    }
                    m
                }
                other => return Err(Error::Config(format!("unknown model kind {other:?}"))),
            };
            if trace.is_some() && !matches!(model.as_str(), "bpr-mf" | "bpr-knn") {
                eprintln!("note: no trace written, {model} does not train iteratively");
            }
            let mut sink = create(&out)?;
            save_model(&trained, &mut sink)?;
            sink.flush()?;
            eprintln!("wrote {} model to {}", trained.kind(), out.display());
            Ok(())
        }
        Command::Eval {
            model,
            train,
            test,
            report,
            npmax,
        } => {
            let model = load_model(open(&model)?)?;
            let split = load_split(open(&train)?, open(&test)?)?;
            check_dimensions(&model, split.train.num_users(), split.train.num_items())?;
            let result = heldout_auc(&model, &split);
            println!("mean_auc {:.4}", result.mean_auc);
            println!("eval_users {}", result.num_eval_users);
            println!("ties {}", result.tie_count);
            if result.excluded_users > 0 {
                eprintln!(
                    "note: {} test users had no eligible negatives",
                    result.excluded_users
                );
            }
            if npmax {
                println!("np_max_bound {:.4}", np_max_bound(&split));
                println!(
                    "most_popular_on_test_auc {:.4}",
                    most_popular_on_test_auc(&split)
                );
            }
            if let Some(path) = report {
                let mut sink = create(&path)?;
                result.write_csv(&mut sink)?;
                sink.flush()?;
            }
            Ok(())
        }
        Command::Recommend {
            model,
            train,
            user,
            top,
        } => {
            let model = load_model(open(&model)?)?;
            let data = load_interactions(open(&train)?)?.dataset;
            check_dimensions(&model, data.num_users(), data.num_items())?;
            let u = data
                .find_user(&user)
                .ok_or_else(|| Error::UnknownUser(user.clone()))?;
            let profile = data.profile(u);
            let mut scored: Vec<(f64, usize)> = (0..data.num_items())
                .filter(|i| !data.contains(u, *i))
                .map(|i| (model.score(u, i, profile), i))
                .collect();
            // descending score, ties by ascending item index
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for &(score, item) in scored.iter().take(top) {
                writeln!(out, "{}\t{}", data.item_id(item), score)?;
            }
            Ok(())
        }
        Command::Compare {
            train,
            test,
            models,
            grid,
            reps,
            seed,
            k,
            hyper,
        } => {
            let split = load_split(open(&train)?, open(&test)?)?;
            let full = merge_split(&split);
            let base = hyper.to_hyperparams();
            let grid_spec = match &grid {
                Some(path) => GridSpec::parse(&std::fs::read_to_string(path)?)?,
                None => GridSpec::default(),
            };
            println!("model,mean_auc,std_auc");
            for name in models.split(',') {
                let spec = ModelSpec::parse(name.trim(), k)?;
                let chosen = if spec.is_trained() {
                    let (best, table) =
                        grid_search(&grid_spec, &full, spec, &base, Schedule::Bootstrap, seed)?;
                    if table.len() > 1 {
                        eprintln!(
                            "{}: grid search over {} candidates picked alpha={}",
                            spec.name(),
                            table.len(),
                            best.alpha
                        );
                    }
                    best
                } else {
                    base.clone()
                };
                let summary =
                    repeat_experiment(&full, spec, &chosen, Schedule::Bootstrap, reps, seed)?;
                println!("{},{},{}", spec.name(), summary.mean, summary.std_dev);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
