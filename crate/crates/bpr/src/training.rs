//! BPR-OPT objective evaluation and the LearnBPR stochastic gradient
//! ascent loop, including the user-wise sweep comparator.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{enumerate_triples, Dataset, SplitPair, Triple, TripleSampler};
use crate::error::{Error, Result};
use crate::evaluation::heldout_auc;
use crate::models::{Model, RegGroup};

/// Learning rate, per-group regularization constants and the step budget
/// multiplier m (total steps = m · |S_train|).
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub lambda_user: f64,
    pub lambda_item_pos: f64,
    pub lambda_item_neg: f64,
    pub lambda_sim_pos: f64,
    pub lambda_sim_neg: f64,
    pub step_multiplier: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.05,
            lambda_user: 0.002,
            lambda_item_pos: 0.002,
            lambda_item_neg: 0.002,
            lambda_sim_pos: 0.002,
            lambda_sim_neg: 0.002,
            step_multiplier: 100,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config("learning rate alpha must be > 0".into()));
        }
        let lambdas = [
            self.lambda_user,
            self.lambda_item_pos,
            self.lambda_item_neg,
            self.lambda_sim_pos,
            self.lambda_sim_neg,
        ];
        if lambdas.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::Config("regularization constants must be >= 0".into()));
        }
        if self.step_multiplier < 1 {
            return Err(Error::Config("step multiplier must be >= 1".into()));
        }
        Ok(())
    }

    pub fn lambda_for(&self, group: RegGroup) -> f64 {
        match group {
            RegGroup::User => self.lambda_user,
            RegGroup::ItemPos => self.lambda_item_pos,
            RegGroup::ItemNeg => self.lambda_item_neg,
            RegGroup::SimPos => self.lambda_sim_pos,
            RegGroup::SimNeg => self.lambda_sim_neg,
        }
    }
}

/// σ(−x) = e^{−x}/(1+e^{−x}), branch-stable against overflow.
pub fn sigmoid_neg(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// ln σ(x), stable for large negative x: ln σ(x) = −ln(1+e^{−x}).
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Quadratic penalty Σ_θ (λ_group/2)·θ². The update rule below uses the
/// plain −λ·θ decay term, so this is the potential it descends; the factor
/// 2 from differentiating the square is folded into λ.
pub fn quadratic_penalty(model: &Model, h: &Hyperparams) -> f64 {
    match model {
        Model::Mf(m) => {
            let users: f64 = (0..m.num_users())
                .map(|u| m.user_row(u).iter().map(|v| v * v).sum::<f64>())
                .sum();
            let items: f64 = (0..m.num_items())
                .map(|i| m.item_row(i).iter().map(|v| v * v).sum::<f64>())
                .sum();
            0.5 * (h.lambda_user * users + h.lambda_item_pos * items)
        }
        Model::Knn(m) => {
            let cells: f64 = (0..m.num_items())
                .flat_map(|i| (i + 1..m.num_items()).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j) * m.get(i, j))
                .sum();
            0.5 * h.lambda_sim_pos * cells
        }
        Model::Pop(_) => 0.0,
    }
}

/// Exact BPR-OPT over the fully enumerated triple set. Test and diagnostic
/// use only; fails when |D_S| exceeds `cap`.
pub fn bpr_opt_exact(model: &Model, data: &Dataset, h: &Hyperparams, cap: u64) -> Result<f64> {
    let triples = enumerate_triples(data, cap)?;
    let mut total = 0.0;
    for t in &triples {
        let x = model.pair_score(t.user, t.pos, t.neg, data.profile(t.user))?;
        total += ln_sigmoid(x);
    }
    Ok(total - quadratic_penalty(model, h))
}

/// Monte-Carlo estimate of BPR-OPT: |D_S| times the mean ln σ(x̂) over probe
/// triples drawn from a dedicated sampler seed, minus the exact penalty.
pub fn bpr_opt_estimate(
    model: &Model,
    data: &Dataset,
    h: &Hyperparams,
    num_probe_triples: usize,
    probe_seed: u64,
) -> Result<f64> {
    if num_probe_triples < 1 {
        return Err(Error::Config("probe size must be >= 1".into()));
    }
    let mut sampler = TripleSampler::new(data, probe_seed)?;
    let mut sum = 0.0;
    for _ in 0..num_probe_triples {
        let t = sampler.sample()?;
        let x = model.pair_score(t.user, t.pos, t.neg, data.profile(t.user))?;
        sum += ln_sigmoid(x);
    }
    let mean = sum / num_probe_triples as f64;
    Ok(data.num_triples() as f64 * mean - quadratic_penalty(model, h))
}

/// One stochastic ascent step on a single triple:
/// θ ← θ + α·(σ(−x̂_uij)·∂x̂_uij/∂θ − λ_group·θ). The pair score and all
/// derivative values are taken before any parameter is mutated.
pub fn sgd_step(
    model: &mut Model,
    t: &Triple,
    profile: &[usize],
    h: &Hyperparams,
) -> Result<()> {
    let x = model.pair_score(t.user, t.pos, t.neg, profile)?;
    if !x.is_finite() {
        return Err(Error::Numerical(format!(
            "pair score diverged for triple (u={}, i={}, j={})",
            t.user, t.pos, t.neg
        )));
    }
    let mult = sigmoid_neg(x);
    let gradient = model.pair_gradient(t, profile)?;
    for entry in &gradient.0 {
        let theta = model.param(entry.coord);
        let lambda = h.lambda_for(entry.group);
        model.set_param(entry.coord, theta + h.alpha * (mult * entry.value - lambda * theta));
    }
    Ok(())
}

/// Order in which training triples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Independent uniform draws from the triple set (with replacement).
    Bootstrap,
    /// Users in index order, one random negative per positive, repeated.
    UserWise,
}

impl std::str::FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(Schedule::Bootstrap),
            "user-wise" | "user_wise" => Ok(Schedule::UserWise),
            other => Err(Error::Config(format!("unknown schedule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub heldout_auc: Option<f64>,
    pub objective_estimate: f64,
}

/// Training trace: (step, held-out AUC, objective estimate) checkpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, sink: &mut W) -> Result<()> {
        writeln!(sink, "step,heldout_auc,objective_estimate")?;
        for c in &self.checkpoints {
            let auc = c.heldout_auc.map(|a| a.to_string()).unwrap_or_default();
            writeln!(sink, "{},{},{}", c.step, auc, c.objective_estimate)?;
        }
        Ok(())
    }

    /// First checkpoint step at which the held-out AUC reached `target`.
    pub fn steps_to_auc(&self, target: f64) -> Option<u64> {
        self.checkpoints
            .iter()
            .find(|c| c.heldout_auc.map(|a| a >= target).unwrap_or(false))
            .map(|c| c.step)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub schedule: Schedule,
    pub seed: u64,
    /// Steps between trace checkpoints; defaults to |S_train|.
    pub checkpoint_every: Option<u64>,
    /// Stop when held-out AUC fails to improve by 1e-4 over 3 checkpoints.
    pub early_stop: bool,
    /// Probe triples per objective-estimate checkpoint.
    pub probe_size: usize,
}

impl TrainOptions {
    pub fn new(schedule: Schedule, seed: u64) -> Self {
        TrainOptions {
            schedule,
            seed,
            checkpoint_every: None,
            early_stop: false,
            probe_size: 2000,
        }
    }
}

const EARLY_STOP_EPS: f64 = 1e-4;
const EARLY_STOP_PATIENCE: usize = 3;

/// Runs m·|S_train| stochastic ascent steps over the training data and
/// records a trace. The probe sampler uses a seed derived from the training
/// seed so monitoring never advances the training stream.
pub fn learn_bpr(
    model: &mut Model,
    train: &Dataset,
    h: &Hyperparams,
    opts: &TrainOptions,
    heldout: Option<&SplitPair>,
) -> Result<TrainTrace> {
    h.validate()?;
    let total_steps = h.step_multiplier * train.num_interactions() as u64;
    let checkpoint_every = opts
        .checkpoint_every
        .unwrap_or(train.num_interactions() as u64)
        .max(1);
    let probe_seed = opts.seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);

    let mut trace = TrainTrace::default();
    let mut stale = 0usize;
    let mut best_auc = f64::NEG_INFINITY;
    let record = |model: &Model, step: u64, trace: &mut TrainTrace| -> Result<Option<f64>> {
        let objective = bpr_opt_estimate(model, train, h, opts.probe_size, probe_seed)?;
        let auc = heldout.map(|split| heldout_auc(model, split).mean_auc);
        trace.checkpoints.push(Checkpoint {
            step,
            heldout_auc: auc,
            objective_estimate: objective,
        });
        Ok(auc)
    };
    record(model, 0, &mut trace)?;

    let mut scheduler = TripleStream::new(train, opts.schedule, opts.seed)?;
    let mut step = 0u64;
    while step < total_steps {
        let t = scheduler.next_triple()?;
        sgd_step(model, &t, train.profile(t.user), h)?;
        step += 1;
        if step % checkpoint_every == 0 || step == total_steps {
            let auc = record(model, step, &mut trace)?;
            if opts.early_stop {
                if let Some(auc) = auc {
                    if auc > best_auc + EARLY_STOP_EPS {
                        best_auc = auc;
                        stale = 0;
                    } else {
                        stale += 1;
                        if stale >= EARLY_STOP_PATIENCE {
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(trace)
}

/// Triple source for the two schedules.
struct TripleStream<'a> {
    data: &'a Dataset,
    mode: Mode<'a>,
}

enum Mode<'a> {
    Bootstrap(TripleSampler<'a>),
    UserWise {
        rng: ChaCha8Rng,
        /// (user, position in profile) cursor over all trainable positives.
        positives: Vec<(usize, usize)>,
        cursor: usize,
    },
}

impl<'a> TripleStream<'a> {
    fn new(data: &'a Dataset, schedule: Schedule, seed: u64) -> Result<Self> {
        let mode = match schedule {
            Schedule::Bootstrap => Mode::Bootstrap(TripleSampler::new(data, seed)?),
            Schedule::UserWise => {
                let mut positives = Vec::with_capacity(data.num_interactions());
                for u in 0..data.num_users() {
                    if data.user_triple_weight(u) == 0 {
                        continue;
                    }
                    for p in 0..data.profile(u).len() {
                        positives.push((u, p));
                    }
                }
                if positives.is_empty() {
                    return Err(Error::Config(
                        "no user has both observed and non-observed items; nothing to sample"
                            .into(),
                    ));
                }
                Mode::UserWise {
                    rng: ChaCha8Rng::seed_from_u64(seed),
                    positives,
                    cursor: 0,
                }
            }
        };
        Ok(TripleStream { data, mode })
    }

    fn next_triple(&mut self) -> Result<Triple> {
        match &mut self.mode {
            Mode::Bootstrap(sampler) => sampler.sample(),
            Mode::UserWise {
                rng,
                positives,
                cursor,
            } => {
                let (user, p) = positives[*cursor];
                *cursor = (*cursor + 1) % positives.len();
                let pos = self.data.profile(user)[p];
                let num_items = self.data.num_items();
                for _ in 0..10_000 {
                    let neg = rng.gen_range(0..num_items);
                    if !self.data.contains(user, neg) {
                        return Ok(Triple { user, pos, neg });
                    }
                }
                Err(Error::Numerical(format!(
                    "rejection sampling exhausted for user {user}"
                )))
            }
        }
    }
}
