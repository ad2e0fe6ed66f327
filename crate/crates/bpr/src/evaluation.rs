//! Leave-one-out AUC evaluation, the training-side AUC identity, the
//! non-personalized upper bound, repeated-trial statistics and grid search.

use std::collections::HashMap;
use std::io::Write;

use crate::data::{enumerate_triples, leave_one_out_split, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::models::{cosine_similarity, MfModel, Model, PopularityModel};
use crate::training::{learn_bpr, Hyperparams, Schedule, TrainOptions};

/// Per-user and averaged held-out AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_auc: f64,
    /// (user, auc, |E(u)|) for every evaluated user, ascending user index.
    pub per_user: Vec<(usize, f64, usize)>,
    pub num_eval_users: usize,
    /// Score ties encountered (they count as misses).
    pub tie_count: u64,
    /// Test users dropped because E(u) was empty.
    pub excluded_users: usize,
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, sink: &mut W) -> Result<()> {
        writeln!(sink, "user,auc,num_pairs,ties")?;
        // ties are tracked in aggregate and reported on the summary line
        for &(user, auc, pairs) in &self.per_user {
            writeln!(sink, "{},{},{},", user, auc, pairs)?;
        }
        writeln!(
            sink,
            "mean,{},{},{}",
            self.mean_auc, self.num_eval_users, self.tie_count
        )?;
        Ok(())
    }
}

/// Held-out AUC with an arbitrary scoring function; `score(u, i)` must be
/// computed from training-side information only.
pub fn auc_with_scores<F: Fn(usize, usize) -> f64>(
    split: &SplitPair,
    score: F,
) -> EvalReport {
    let train = &split.train;
    let mut per_user = Vec::with_capacity(split.test.len());
    let mut tie_count = 0u64;
    let mut excluded_users = 0usize;

    let mut test_sorted = split.test.clone();
    test_sorted.sort_unstable();
    for &(u, test_item) in &test_sorted {
        let pos_score = score(u, test_item);
        let mut hits = 0u64;
        let mut pairs = 0u64;
        for j in 0..train.num_items() {
            if j == test_item || train.contains(u, j) {
                continue;
            }
            pairs += 1;
            let neg_score = score(u, j);
            if pos_score > neg_score {
                hits += 1;
            } else if pos_score == neg_score {
                tie_count += 1;
            }
        }
        if pairs == 0 {
            excluded_users += 1;
            continue;
        }
        per_user.push((u, hits as f64 / pairs as f64, pairs as usize));
    }
    let mean_auc = if per_user.is_empty() {
        0.0
    } else {
        per_user.iter().map(|&(_, a, _)| a).sum::<f64>() / per_user.len() as f64
    };
    EvalReport {
        mean_auc,
        num_eval_users: per_user.len(),
        per_user,
        tie_count,
        excluded_users,
    }
}

/// Average held-out AUC: for each test user the held-out item is compared
/// against every item unseen in both train and test, strict inequality.
/// kNN profiles come from the training split only.
pub fn heldout_auc(model: &Model, split: &SplitPair) -> EvalReport {
    auc_with_scores(split, |u, i| model.score(u, i, split.train.profile(u)))
}

/// Training-side AUC via the normalized sum over the enumerated triple set.
/// Users with empty or full profiles contribute no triples and are excluded
/// from the user count.
pub fn auc_train_identity(model: &Model, data: &Dataset, cap: u64) -> Result<f64> {
    let triples = enumerate_triples(data, cap)?;
    let eligible = (0..data.num_users())
        .filter(|&u| data.user_triple_weight(u) > 0)
        .count();
    if eligible == 0 {
        return Err(Error::Config("no user is eligible for training AUC".into()));
    }
    let mut total = 0.0;
    for t in &triples {
        let profile = data.profile(t.user);
        let z = 1.0
            / (eligible as f64
                * profile.len() as f64
                * (data.num_items() - profile.len()) as f64);
        let x = model.pair_score(t.user, t.pos, t.neg, profile)?;
        if x > 0.0 {
            total += z;
        }
    }
    Ok(total)
}

/// Upper bound on the held-out AUC of any single item ranking shared across
/// users. Each unordered item pair contributes the larger of the two total
/// weights with which users prefer one direction; ignoring transitivity
/// makes this a valid but non-tight bound.
pub fn np_max_bound(split: &SplitPair) -> f64 {
    let train = &split.train;
    let mut eval_users: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for &(u, test_item) in &split.test {
        let negatives: Vec<usize> = (0..train.num_items())
            .filter(|&j| j != test_item && !train.contains(u, j))
            .collect();
        if !negatives.is_empty() {
            eval_users.push((u, test_item, negatives));
        }
    }
    if eval_users.is_empty() {
        return 0.0;
    }
    let num_eval = eval_users.len() as f64;
    // weights per ordered preference (i preferred over j)
    let mut pair_weights: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for (_, test_item, negatives) in &eval_users {
        let weight = 1.0 / (num_eval * negatives.len() as f64);
        for &j in negatives {
            let (lo, hi) = (test_item.min(&j), test_item.max(&j));
            let entry = pair_weights.entry((*lo, *hi)).or_insert((0.0, 0.0));
            if test_item < &j {
                entry.0 += weight;
            } else {
                entry.1 += weight;
            }
        }
    }
    pair_weights.values().map(|&(a, b)| a.max(b)).sum()
}

/// Held-out AUC of the ranking induced by test-set popularity. Reported
/// alongside the bound for context; not itself an upper bound.
pub fn most_popular_on_test_auc(split: &SplitPair) -> f64 {
    let pop = PopularityModel::from_pairs(split.train.num_items(), &split.test);
    auc_with_scores(split, |_, i| pop.score(i)).mean_auc
}

/// Which model is trained and evaluated in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    BprMf { k: usize },
    BprKnn,
    CosineKnn,
    MostPopular,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::BprMf { .. } => "bpr-mf",
            ModelSpec::BprKnn => "bpr-knn",
            ModelSpec::CosineKnn => "cosine-knn",
            ModelSpec::MostPopular => "most-popular",
        }
    }

    pub fn parse(name: &str, k: usize) -> Result<Self> {
        match name {
            "bpr-mf" => Ok(ModelSpec::BprMf { k }),
            "bpr-knn" => Ok(ModelSpec::BprKnn),
            "cosine-knn" => Ok(ModelSpec::CosineKnn),
            "most-popular" => Ok(ModelSpec::MostPopular),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn is_trained(&self) -> bool {
        matches!(self, ModelSpec::BprMf { .. } | ModelSpec::BprKnn)
    }
}

/// Initial parameter spread for BPR-MF models.
pub const DEFAULT_INIT_SIGMA: f64 = 0.1;

/// Builds (and for the BPR variants trains) a model on the split's train set.
pub fn fit_model(
    spec: ModelSpec,
    split: &SplitPair,
    h: &Hyperparams,
    schedule: Schedule,
    seed: u64,
) -> Result<Model> {
    let train = &split.train;
    match spec {
        ModelSpec::MostPopular => Ok(Model::Pop(PopularityModel::from_dataset(train))),
        ModelSpec::CosineKnn => Ok(Model::Knn(cosine_similarity(train))),
        ModelSpec::BprMf { k } => {
            let mut model = Model::Mf(MfModel::init(
                train.num_users(),
                train.num_items(),
                k,
                DEFAULT_INIT_SIGMA,
                seed,
            )?);
            learn_bpr(
                &mut model,
                train,
                h,
                &TrainOptions::new(schedule, seed.wrapping_add(1)),
                None,
            )?;
            Ok(model)
        }
        ModelSpec::BprKnn => {
            let mut model = Model::Knn(crate::models::KnnModel::zeros(train.num_items()));
            learn_bpr(
                &mut model,
                train,
                h,
                &TrainOptions::new(schedule, seed.wrapping_add(1)),
                None,
            )?;
            Ok(model)
        }
    }
}

/// Mean AUCs over repeated splits with fixed hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub per_rep: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    /// True when only one repetition ran and the deviation is reported as 0.
    pub std_dev_undefined: bool,
}

impl TrialSummary {
    fn from_reps(per_rep: Vec<f64>) -> Self {
        let n = per_rep.len();
        let mean = per_rep.iter().sum::<f64>() / n as f64;
        let (std_dev, undefined) = if n < 2 {
            (0.0, true)
        } else {
            let var =
                per_rep.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (var.sqrt(), false)
        };
        TrialSummary {
            per_rep,
            mean,
            std_dev,
            std_dev_undefined: undefined,
        }
    }

    pub fn write_csv<W: Write>(&self, sink: &mut W) -> Result<()> {
        writeln!(sink, "rep,mean_auc")?;
        for (r, auc) in self.per_rep.iter().enumerate() {
            writeln!(sink, "{},{}", r, auc)?;
        }
        Ok(())
    }
}

/// Runs `num_reps` rounds: fresh leave-one-out split with seed base_seed+r,
/// model fit, held-out evaluation. Hyperparameters stay fixed across rounds.
pub fn repeat_experiment(
    data: &Dataset,
    spec: ModelSpec,
    h: &Hyperparams,
    schedule: Schedule,
    num_reps: usize,
    base_seed: u64,
) -> Result<TrialSummary> {
    if num_reps < 1 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    let mut per_rep = Vec::with_capacity(num_reps);
    for rep in 0..num_reps {
        let seed = base_seed + rep as u64;
        let split = leave_one_out_split(data, seed);
        let model = fit_model(spec, &split, h, schedule, seed)?;
        per_rep.push(heldout_auc(&model, &split).mean_auc);
    }
    Ok(TrialSummary::from_reps(per_rep))
}

/// Candidate value lists per hyperparameter name.
#[derive(Debug, Clone, Default)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub lambda_user: Vec<f64>,
    pub lambda_item_pos: Vec<f64>,
    pub lambda_item_neg: Vec<f64>,
    pub lambda_sim_pos: Vec<f64>,
    pub lambda_sim_neg: Vec<f64>,
}

impl GridSpec {
    /// Parses a flat "key = v1, v2, ..." file. Unset keys keep the base
    /// hyperparameter value.
    pub fn parse(text: &str) -> Result<GridSpec> {
        let mut grid = GridSpec::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, values) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("expected \"key = values\", got {line:?}"),
            })?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad value list: {e}"),
                })?;
            if values.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "empty candidate list".into(),
                });
            }
            match key.trim() {
                "alpha" => grid.alpha = values,
                "lambda_w" | "lambda_user" => grid.lambda_user = values,
                "lambda_h_pos" | "lambda_item_pos" => grid.lambda_item_pos = values,
                "lambda_h_neg" | "lambda_item_neg" => grid.lambda_item_neg = values,
                "lambda_knn_pos" | "lambda_sim_pos" => grid.lambda_sim_pos = values,
                "lambda_knn_neg" | "lambda_sim_neg" => grid.lambda_sim_neg = values,
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("unknown hyperparameter {other:?}"),
                    })
                }
            }
        }
        Ok(grid)
    }

    /// Cartesian product of candidates over the base hyperparameters, in
    /// first-in-grid order.
    pub fn candidates(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let or_base = |list: &Vec<f64>, fallback: f64| -> Vec<f64> {
            if list.is_empty() {
                vec![fallback]
            } else {
                list.clone()
            }
        };
        let alphas = or_base(&self.alpha, base.alpha);
        let lw = or_base(&self.lambda_user, base.lambda_user);
        let lhp = or_base(&self.lambda_item_pos, base.lambda_item_pos);
        let lhn = or_base(&self.lambda_item_neg, base.lambda_item_neg);
        let lsp = or_base(&self.lambda_sim_pos, base.lambda_sim_pos);
        let lsn = or_base(&self.lambda_sim_neg, base.lambda_sim_neg);
        let mut out = Vec::new();
        for &alpha in &alphas {
            for &lambda_user in &lw {
                for &lambda_item_pos in &lhp {
                    for &lambda_item_neg in &lhn {
                        for &lambda_sim_pos in &lsp {
                            for &lambda_sim_neg in &lsn {
                                out.push(Hyperparams {
                                    alpha,
                                    lambda_user,
                                    lambda_item_pos,
                                    lambda_item_neg,
                                    lambda_sim_pos,
                                    lambda_sim_neg,
                                    step_multiplier: base.step_multiplier,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Exhaustive grid search on the seed split: every candidate is trained and
/// evaluated once; the argmax by mean AUC wins, ties broken by grid order.
pub fn grid_search(
    grid: &GridSpec,
    data: &Dataset,
    spec: ModelSpec,
    base: &Hyperparams,
    schedule: Schedule,
    seed: u64,
) -> Result<(Hyperparams, Vec<(Hyperparams, f64)>)> {
    let candidates = grid.candidates(base);
    if candidates.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let split = leave_one_out_split(data, seed);
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(Hyperparams, f64)> = None;
    for candidate in candidates {
        // a numerically diverged candidate loses the search instead of
        // aborting it; other errors still propagate
        let auc = match fit_model(spec, &split, &candidate, schedule, seed) {
            Ok(model) => heldout_auc(&model, &split).mean_auc,
            Err(Error::Numerical(_)) => 0.0,
            Err(e) => return Err(e),
        };
        if best.as_ref().map(|&(_, b)| auc > b).unwrap_or(true) {
            best = Some((candidate.clone(), auc));
        }
        table.push((candidate, auc));
    }
    Ok((best.unwrap().0, table))
}
