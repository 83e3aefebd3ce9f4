//! Asynchronous advantage actor-critic with optional reverse curriculum.
//!
//! Each worker thread owns a simulator and a private copy of the
//! parameters. It rolls out `n_steps` decisions, computes gradients on its
//! copy and applies them to the shared parameters under a lock, then
//! refreshes its copy. Curriculum state, the step counter and the log sit
//! behind a second lock.

use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{human_reference_score, CurriculumConfig, CurriculumState};
use crate::eval::{evaluate, EvalError};
use crate::policy::{
    ActionDistribution, ForwardCache, LossConfig, NetConfig, Optimizer, OptimizerKind, PolicyError, PolicyParams,
    RolloutBatch,
};
use crate::sim::{ObsMode, Observation, ScenarioConfig, SimError, WorldState};
use crate::trajectory::{prefix_len, DemoError, Demonstration};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("training aborted: {0}")]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    AclImage,
    AclVector,
    TradImage,
    TradVector,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::AclImage,
        Condition::AclVector,
        Condition::TradImage,
        Condition::TradVector,
    ];

    pub fn is_acl(self) -> bool {
        matches!(self, Condition::AclImage | Condition::AclVector)
    }

    /// The image conditions also see the vector features; the image adds
    /// terrain the vector lacks.
    pub fn obs_mode(self) -> ObsMode {
        match self {
            Condition::AclImage | Condition::TradImage => ObsMode::Both,
            Condition::AclVector | Condition::TradVector => ObsMode::Vector,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::AclImage => "acl-image",
            Condition::AclVector => "acl-vector",
            Condition::TradImage => "trad-image",
            Condition::TradVector => "trad-vector",
        }
    }

    /// Column heading in the comparison tables.
    pub fn column(self) -> &'static str {
        match self {
            Condition::AclImage => "Autocurriculum RL Image Rep.",
            Condition::AclVector => "Autocurriculum RL Vector Rep.",
            Condition::TradImage => "Traditional RL Image Rep.",
            Condition::TradVector => "Traditional RL Vector Rep.",
        }
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown condition {s:?}; expected one of acl-image, acl-vector, trad-image, trad-vector"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub n_steps: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub clip_norm: f64,
    /// Multiplies environment rewards before they enter the loss.
    pub reward_scale: f64,
    pub optimizer: OptimizerKind,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_steps: 8,
            value_coef: 0.5,
            entropy_coef: 0.01,
            lr: 1e-4,
            clip_norm: 10.0,
            reward_scale: 0.1,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl Hyperparams {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub condition: Condition,
    pub workers: usize,
    /// Budget in agent decision steps; replayed demonstration prefixes do
    /// not count.
    pub total_env_steps: u64,
    pub seed: u64,
    pub curriculum: CurriculumConfig,
    pub hyper: Hyperparams,
    /// Greedy evaluation cadence in env steps; `0` disables it.
    pub eval_every: u64,
    pub eval_rollouts: usize,
    pub eval_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            condition: Condition::AclVector,
            workers: 8,
            total_env_steps: 2_000_000,
            seed: 0,
            curriculum: CurriculumConfig::default(),
            hyper: Hyperparams::default(),
            eval_every: 50_000,
            eval_rollouts: 10,
            eval_seed: 1_000_000,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(s).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.total_env_steps == 0 {
            return bad("total_env_steps must be positive".into());
        }
        if self.hyper.n_steps == 0 {
            return bad("n_steps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.hyper.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.hyper.gamma));
        }
        if !(self.hyper.lr > 0.0 && self.hyper.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.hyper.lr));
        }
        if self.eval_every > 0 && self.eval_rollouts == 0 {
            return bad("eval_rollouts must be positive when evaluation is enabled".into());
        }
        self.curriculum.validate().map_err(TrainError::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub worker: usize,
    /// Total agent steps across all workers once this episode ended.
    pub env_steps: u64,
    pub start_fraction: f64,
    pub start_step: usize,
    /// Curriculum mean the start was drawn from (0 without a curriculum).
    pub curriculum_mean: f64,
    /// Score accrued by the agent after the handover point.
    pub reward: i64,
    pub human_reference: Option<i64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub env_steps: u64,
    pub mean_reward: f64,
    pub median_reward: f64,
    pub win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Episode(EpisodeRecord),
    Eval(EvalRecord),
}

/// Training curves. Contains no wall-clock data, so a single-worker run is
/// reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
    pub evals: Vec<EvalRecord>,
    pub rejected_updates: u64,
}

impl TrainLog {
    /// One JSON object per line, merged by env steps.
    pub fn to_jsonl(&self) -> String {
        let mut evals = self.evals.clone();
        evals.sort_by_key(|e| e.env_steps);
        let mut out = String::new();
        let mut e = evals.iter().peekable();
        let mut push = |r: LogRecord| {
            out.push_str(&serde_json::to_string(&r).expect("log record serializes"));
            out.push('\n');
        };
        for ep in &self.episodes {
            while let Some(ev) = e.next_if(|ev| ev.env_steps < ep.env_steps) {
                push(LogRecord::Eval(ev.clone()));
            }
            push(LogRecord::Episode(ep.clone()));
        }
        for ev in e {
            push(LogRecord::Eval(ev.clone()));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut log = TrainLog::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                LogRecord::Episode(r) => log.episodes.push(r),
                LogRecord::Eval(r) => log.evals.push(r),
            }
        }
        Ok(log)
    }

    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.iter().max_by_key(|e| e.env_steps)
    }
}

/// One curriculum promotion, with wall time for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumEvent {
    pub wall_time_s: f64,
    pub env_steps: u64,
    pub promotions: u32,
    pub mean: f64,
    pub completed: bool,
}

/// Shared parameters and optimizer statistics.
pub struct SharedPolicy {
    inner: Mutex<Learner>,
}

struct Learner {
    params: PolicyParams,
    optimizer: Optimizer,
    rejected: u64,
}

impl SharedPolicy {
    pub fn new(params: PolicyParams, optimizer: Optimizer) -> Self {
        Self {
            inner: Mutex::new(Learner {
                params,
                optimizer,
                rejected: 0,
            }),
        }
    }

    /// Applies one gradient under exclusive access. Non-finite gradients
    /// are rejected and counted; the parameters stay untouched.
    pub fn apply_update(&self, grads: &[f64]) -> Result<(), PolicyError> {
        let mut guard = self.inner.lock().expect("learner lock poisoned");
        let l = &mut *guard;
        match l.optimizer.step(&mut l.params.data, grads) {
            Ok(()) => {
                assert!(l.params.is_finite(), "parameters became non-finite after an update");
                Ok(())
            }
            Err(e) => {
                l.rejected += 1;
                Err(e)
            }
        }
    }

    /// Copies the current parameters into `into`.
    pub fn snapshot_into(&self, into: &mut PolicyParams) {
        let l = self.inner.lock().expect("learner lock poisoned");
        into.data.copy_from_slice(&l.params.data);
    }

    pub fn snapshot(&self) -> PolicyParams {
        self.inner.lock().expect("learner lock poisoned").params.clone()
    }

    pub fn rejected(&self) -> u64 {
        self.inner.lock().expect("learner lock poisoned").rejected
    }

    pub fn into_params(self) -> PolicyParams {
        self.inner.into_inner().expect("learner lock poisoned").params
    }
}

pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: TrainLog,
    pub curriculum: Option<CurriculumState>,
    pub curriculum_events: Vec<CurriculumEvent>,
    pub env_steps: u64,
}

impl TrainOutcome {
    /// Writes `policy.ckpt`, `train_log.jsonl` and, for curriculum runs,
    /// `curriculum.jsonl` into `dir`, each via temp-then-rename.
    pub fn write_to(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir)?;
        self.params
            .save_checkpoint(&dir.join("policy.ckpt"))
            .map_err(|e| TrainError::Config(e.to_string()))?;
        crate::io::write_atomic(&dir.join("train_log.jsonl"), self.log.to_jsonl().as_bytes())?;
        if self.curriculum.is_some() {
            let mut text = String::new();
            for ev in &self.curriculum_events {
                text.push_str(&serde_json::to_string(ev).expect("event serializes"));
                text.push('\n');
            }
            crate::io::write_atomic(&dir.join("curriculum.jsonl"), text.as_bytes())?;
        }
        Ok(())
    }
}

struct Coordinator {
    env_steps: u64,
    episodes: u64,
    next_eval: u64,
    curriculum: Option<CurriculumState>,
    log: TrainLog,
    events: Vec<CurriculumEvent>,
}

struct Ctx<'a> {
    cfg: &'a TrainConfig,
    scenario: &'a ScenarioConfig,
    demo: Option<&'a Demonstration>,
    prefix_states: Vec<WorldState>,
    shared: SharedPolicy,
    coord: Mutex<Coordinator>,
    failed: AtomicBool,
    started: Instant,
}

pub fn initial_params(cfg: &TrainConfig, scenario: &ScenarioConfig) -> Result<PolicyParams, TrainError> {
    let net = NetConfig::desk_scale(cfg.condition.obs_mode(), scenario.grid_bins);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(PolicyParams::init(net, &mut rng)?)
}

/// Trains one condition to its step budget.
pub fn run_training(
    cfg: &TrainConfig,
    scenario: &ScenarioConfig,
    demo: Option<&Demonstration>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    scenario.validate()?;
    let demo = match (cfg.condition.is_acl(), demo) {
        (true, None) => {
            return Err(TrainError::Config(format!(
                "condition {} needs a demonstration",
                cfg.condition.name()
            )))
        }
        (true, Some(d)) if d.is_empty() => return Err(TrainError::Demo(DemoError::Empty)),
        (true, Some(d)) => Some(d),
        (false, _) => None,
    };
    let prefix_states = match demo {
        Some(d) => d.prefix_states(scenario)?,
        None => Vec::new(),
    };
    let params = initial_params(cfg, scenario)?;
    let optimizer = Optimizer::new(cfg.hyper.optimizer, cfg.hyper.lr, cfg.hyper.clip_norm, params.len());
    let ctx = Ctx {
        cfg,
        scenario,
        demo,
        prefix_states,
        shared: SharedPolicy::new(params, optimizer),
        coord: Mutex::new(Coordinator {
            env_steps: 0,
            episodes: 0,
            next_eval: if cfg.eval_every > 0 { cfg.eval_every } else { u64::MAX },
            curriculum: demo.map(|_| CurriculumState::new(cfg.curriculum)),
            log: TrainLog::default(),
            events: Vec::new(),
        }),
        failed: AtomicBool::new(false),
        started: Instant::now(),
    };

    let results: Vec<Result<(), TrainError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|id| {
                let ctx = &ctx;
                s.spawn(move || {
                    let r = worker(ctx, id);
                    if r.is_err() {
                        ctx.failed.store(true, Ordering::SeqCst);
                    }
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        r?;
    }

    let rejected = ctx.shared.rejected();
    let coord = ctx.coord.into_inner().expect("coordinator lock poisoned");
    let mut log = coord.log;
    log.rejected_updates = rejected;
    log.evals.sort_by_key(|e| e.env_steps);
    Ok(TrainOutcome {
        params: ctx.shared.into_params(),
        log,
        curriculum: coord.curriculum,
        curriculum_events: coord.events,
        env_steps: coord.env_steps,
    })
}

#[derive(Default)]
struct EpisodeLoss {
    policy: f64,
    value: f64,
    entropy: f64,
    segments: usize,
}

fn worker(ctx: &Ctx, id: usize) -> Result<(), TrainError> {
    let cfg = ctx.cfg;
    let mode = cfg.condition.obs_mode();
    let loss_cfg = cfg.hyper.loss();
    let n = cfg.hyper.n_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64 + 1);

    let mut local = ctx.shared.snapshot();
    let mut grads = vec![0.0; local.len()];
    let mut caches = vec![ForwardCache::default(); n];
    let mut batch = RolloutBatch::default();
    let mut bootstrap = ForwardCache::default();

    loop {
        let (fraction, mean) = {
            let c = ctx.coord.lock().expect("coordinator lock poisoned");
            if c.env_steps >= cfg.total_env_steps || ctx.failed.load(Ordering::SeqCst) {
                return Ok(());
            }
            match &c.curriculum {
                Some(cur) => (cur.sample_start(&mut rng), cur.mean),
                None => (0.0, 0.0),
            }
        };
        let (mut state, start_step, human) = match ctx.demo {
            Some(demo) => {
                // Always leave the agent at least one decision.
                let k = prefix_len(fraction, demo.len()).min(demo.len() - 1);
                (ctx.prefix_states[k].clone(), k, Some(human_reference_score(demo, mean)))
            }
            None => (WorldState::reset(ctx.scenario, rng.random())?, 0, None),
        };

        let mut reward = 0i64;
        let mut losses = EpisodeLoss::default();
        loop {
            batch.clear();
            let mut done = false;
            for cache in caches.iter_mut() {
                let obs = state.observe(mode);
                local.forward_into(&obs, cache)?;
                let idx = cache.dist.sample_indices(&mut rng);
                let out = state.step(&ActionDistribution::command_for(idx))?;
                reward += out.reward;
                done = out.done;
                batch.observations.push(obs);
                batch.actions.push(idx);
                batch.rewards.push(out.reward as f64 * cfg.hyper.reward_scale);
                batch.values.push(cache.value);
                batch.dones.push(done);
                if done {
                    break;
                }
            }
            batch.bootstrap_value = if done {
                0.0
            } else {
                let obs: Observation = state.observe(mode);
                local.forward_into(&obs, &mut bootstrap)?;
                bootstrap.value
            };

            grads.fill(0.0);
            let stats = local.loss_and_grads_cached(&batch, &caches[..batch.len()], &loss_cfg, &mut grads)?;
            losses.policy += stats.policy_loss;
            losses.value += stats.value_loss;
            losses.entropy += stats.entropy;
            losses.segments += 1;
            // Rejections are counted inside; training carries on.
            let _ = ctx.shared.apply_update(&grads);
            ctx.shared.snapshot_into(&mut local);

            let (evals_due, over_budget) = {
                let mut c = ctx.coord.lock().expect("coordinator lock poisoned");
                c.env_steps += batch.len() as u64;
                if done {
                    record_episode(ctx, &mut c, id, fraction, start_step, mean, reward, human, &losses);
                }
                let mut due = Vec::new();
                while c.env_steps >= c.next_eval {
                    due.push(c.next_eval);
                    c.next_eval = c.next_eval.saturating_add(cfg.eval_every);
                }
                (due, c.env_steps >= cfg.total_env_steps)
            };
            for at in evals_due {
                let report = evaluate(&local, ctx.scenario, cfg.eval_rollouts, cfg.eval_seed)?;
                ctx.coord.lock().expect("coordinator lock poisoned").log.evals.push(EvalRecord {
                    env_steps: at,
                    mean_reward: report.mean_reward,
                    median_reward: report.median_reward,
                    win_rate: report.win_rate,
                });
            }
            if done {
                break;
            }
            if over_budget || ctx.failed.load(Ordering::SeqCst) {
                return Ok(());
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn record_episode(
    ctx: &Ctx,
    c: &mut Coordinator,
    worker: usize,
    start_fraction: f64,
    start_step: usize,
    mean: f64,
    reward: i64,
    human: Option<i64>,
    losses: &EpisodeLoss,
) {
    let k = losses.segments.max(1) as f64;
    c.episodes += 1;
    let record = EpisodeRecord {
        episode: c.episodes,
        worker,
        env_steps: c.env_steps,
        start_fraction,
        start_step,
        curriculum_mean: mean,
        reward,
        human_reference: human,
        policy_loss: losses.policy / k,
        value_loss: losses.value / k,
        entropy: losses.entropy / k,
    };
    c.log.episodes.push(record);
    let env_steps = c.env_steps;
    if let (Some(cur), Some(h)) = (c.curriculum.as_mut(), human) {
        let out = cur.report_episode(reward as f64, h as f64);
        if out.promoted || out.completed {
            let ev = CurriculumEvent {
                wall_time_s: ctx.started.elapsed().as_secs_f64(),
                env_steps,
                promotions: cur.promotions,
                mean: cur.mean,
                completed: out.completed,
            };
            c.events.push(ev);
        }
    }
}
