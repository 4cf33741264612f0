//! End-to-end training: the PQN loop (rollouts, replay, TD updates, target
//! syncs, per-epoch supervised pass), the plain pointer-network baseline, the
//! cost-perturbation protocol, and greedy/sampled evaluation rollouts.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, feasible_actions};
use crate::error::{PqnError, Result};
use crate::model::{supervised_loss_tape, td_loss, FeatureCache, ModelConfig, PolicyKind, PqnModel, TdScope};
use crate::nn::{adam_step, AdamConfig, AdamState, Tape};
use crate::policy::{entropy, levenshtein, select_action, ActionDistribution, SelectionMode};
use crate::qnet::{sync_target, ReplayBuffer, Transition};
use crate::scalar::Scalar;
use crate::tsp::{perturb_instance, tour_cost, validate_tour, Tour, TspInstance, START_CITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden size `k` of the LSTMs and attention.
    pub hidden: usize,
    pub q_hidden: usize,
    pub batch_size: usize,
    pub lr_ptr: f64,
    pub lr_q: f64,
    pub gamma: f64,
    pub epochs: usize,
    /// Environment steps per epoch (`T`); the episode crossing the budget is finished.
    pub steps_per_epoch: usize,
    /// Target network sync period `C`, in environment steps.
    pub sync_every: u64,
    pub replay_capacity: usize,
    pub seed: u64,
    pub td_scope: TdScope,
    /// Adam steps of the supervised sequence loss at the end of each epoch.
    pub sup_steps: usize,
    /// Take the PQN supervised loss under the tempered policy rather than plain attention.
    pub supervise_tempered: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            q_hidden: 128,
            batch_size: 64,
            lr_ptr: 0.1,
            lr_q: 0.01,
            gamma: 0.95,
            epochs: 30,
            steps_per_epoch: 100,
            sync_every: 100,
            replay_capacity: 10_000,
            seed: 0,
            td_scope: TdScope::QOnly,
            sup_steps: 10,
            supervise_tempered: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(PqnError::InvalidArgument(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.lr_ptr > 0.0 && self.lr_q > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.hidden == 0 || self.q_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        if self.batch_size == 0 || self.sync_every == 0 || self.replay_capacity == 0 {
            return bad("batch size, sync period and replay capacity must be positive".into());
        }
        if self.steps_per_epoch < n.saturating_sub(1) {
            return bad(format!(
                "steps per epoch ({}) must cover one episode ({} steps)",
                self.steps_per_epoch,
                n - 1
            ));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            q_hidden: self.q_hidden,
        }
    }
}

/// Metrics for one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    /// Mean closed-tour cost of the epoch's episodes (training costs).
    pub j_mean: T,
    pub entropy_mean: T,
    pub q_mean: T,
    pub td_loss: T,
    pub sup_loss: T,
    /// Mean edit distance of the epoch's tours to their benchmark tours.
    pub sigma_b: T,
    pub td_updates: usize,
    pub episodes: usize,
    pub perturbed: bool,
}

/// Metrics for one environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub step: u64,
    pub epoch: usize,
    /// Mean, min and max clamped Q over the feasible actions (1 for the plain policy).
    pub q_mean: T,
    pub q_min: T,
    pub q_max: T,
    /// TD loss of the update made at this step, if any.
    pub td_loss: Option<T>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory<T> {
    pub epochs: Vec<EpochRecord<T>>,
    pub steps: Vec<StepRecord<T>>,
}

/// Cost perturbation applied to the training instances during an epoch window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// First and last perturbed epoch, inclusive.
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Perturbation {
    pub fn covers(&self, epoch: usize) -> bool {
        (self.first_epoch..=self.last_epoch).contains(&epoch)
    }
}

/// One full episode under a fixed model.
#[derive(Debug, Clone)]
pub struct Rollout<T> {
    pub tour: Tour,
    pub distributions: Vec<ActionDistribution<T>>,
    pub rewards: Vec<T>,
}

/// splitmix64 finaliser, used to derive independent seeds.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one episode; coordinates come from `coords`, costs and rewards from `costs`.
pub fn rollout_on<T: Scalar, R: Rng>(
    model: &PqnModel<T>,
    kind: PolicyKind,
    coords: &TspInstance<T>,
    costs: &TspInstance<T>,
    mode: SelectionMode,
    rng: &mut R,
    gamma: T,
) -> Result<Rollout<T>> {
    if coords.n() != costs.n() {
        return Err(PqnError::invalid("coordinate and cost instances differ in size"));
    }
    let encoded = model.encode(coords)?;
    let mut state = env::reset(costs, START_CITY)?;
    let mut dec = encoded.final_state.clone();
    let mut distributions = Vec::with_capacity(costs.n());
    let mut rewards = Vec::with_capacity(costs.n());
    while !state.is_complete() {
        dec = model.decode(&state, &encoded, &dec)?;
        let feasible = feasible_actions(&state);
        let eval = model.evaluate_step(kind, &dec.h, &encoded, &feasible, gamma)?;
        let action = select_action(&eval.dist, mode, rng);
        let out = env::step(costs, &state, action)?;
        rewards.push(out.reward);
        distributions.push(eval.dist);
        state = out.next_state;
    }
    Ok(Rollout {
        tour: state.to_tour(),
        distributions,
        rewards,
    })
}

pub fn rollout<T: Scalar, R: Rng>(
    model: &PqnModel<T>,
    kind: PolicyKind,
    instance: &TspInstance<T>,
    mode: SelectionMode,
    rng: &mut R,
    gamma: T,
) -> Result<Rollout<T>> {
    rollout_on(model, kind, instance, instance, mode, rng, gamma)
}

/// Greedy tours for each instance.
pub fn greedy_tours<T: Scalar>(
    model: &PqnModel<T>,
    kind: PolicyKind,
    instances: &[TspInstance<T>],
    gamma: T,
) -> Result<Vec<Tour>> {
    // Greedy selection never consumes randomness.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    instances
        .iter()
        .map(|inst| Ok(rollout(model, kind, inst, SelectionMode::Greedy, &mut rng, gamma)?.tour))
        .collect()
}

/// Mean greedy tour cost over `instances`.
pub fn mean_greedy_cost<T: Scalar>(
    model: &PqnModel<T>,
    kind: PolicyKind,
    instances: &[TspInstance<T>],
    gamma: T,
) -> Result<T> {
    let tours = greedy_tours(model, kind, instances, gamma)?;
    let total: T = instances
        .iter()
        .zip(&tours)
        .map(|(i, t)| tour_cost(i, t))
        .collect::<Result<Vec<T>>>()?
        .into_iter()
        .sum();
    Ok(total / T::from_usize_lossy(instances.len()))
}

/// Trains the PQN with Q-tempered action selection and TD learning.
pub fn train_pqn<T: Scalar>(
    instances: &[TspInstance<T>],
    benchmarks: &[Tour],
    config: &TrainConfig,
) -> Result<(PqnModel<T>, TrainingHistory<T>)> {
    train(PolicyKind::Pqn, instances, benchmarks, config, None)
}

/// Trains the plain pointer network: same architecture and schedule, no Q
/// tempering and no TD updates.
pub fn train_ptrnet_supervised<T: Scalar>(
    instances: &[TspInstance<T>],
    benchmarks: &[Tour],
    config: &TrainConfig,
) -> Result<(PqnModel<T>, TrainingHistory<T>)> {
    train(PolicyKind::PtrNet, instances, benchmarks, config, None)
}

/// PQN training with multiplicative cost noise `U(alpha, beta)` applied to
/// the training instances in the epoch window, with fresh draws each epoch.
pub fn run_perturbation_protocol<T: Scalar>(
    kind: PolicyKind,
    instances: &[TspInstance<T>],
    benchmarks: &[Tour],
    config: &TrainConfig,
    perturbation: Perturbation,
) -> Result<(PqnModel<T>, TrainingHistory<T>)> {
    if perturbation.first_epoch > perturbation.last_epoch || perturbation.last_epoch >= config.epochs {
        return Err(PqnError::invalid(format!(
            "perturbation window [{}, {}] outside epochs 0..{}",
            perturbation.first_epoch, perturbation.last_epoch, config.epochs
        )));
    }
    if !(perturbation.alpha > 0.0 && perturbation.alpha <= perturbation.beta) {
        return Err(PqnError::invalid(format!(
            "perturbation bounds must satisfy 0 < lo <= hi, got {}:{}",
            perturbation.alpha, perturbation.beta
        )));
    }
    train(kind, instances, benchmarks, config, Some(perturbation))
}

fn mean_or_zero<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        T::zero()
    } else {
        xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
    }
}

/// Shared training loop for both policy kinds.
pub fn train<T: Scalar>(
    kind: PolicyKind,
    instances: &[TspInstance<T>],
    benchmarks: &[Tour],
    config: &TrainConfig,
    perturbation: Option<Perturbation>,
) -> Result<(PqnModel<T>, TrainingHistory<T>)> {
    let first = instances
        .first()
        .ok_or_else(|| PqnError::invalid("training needs at least one instance"))?;
    if benchmarks.len() != instances.len() {
        return Err(PqnError::invalid(format!(
            "{} benchmark tours for {} instances",
            benchmarks.len(),
            instances.len()
        )));
    }
    for (inst, tour) in instances.iter().zip(benchmarks) {
        validate_tour(inst, tour).map_err(PqnError::InvalidTour)?;
        if inst.coords().is_none() {
            return Err(PqnError::invalid("training instances need coordinates"));
        }
    }
    config.validate(instances.iter().map(TspInstance::n).max().unwrap_or(first.n()))?;

    let gamma = T::lit(config.gamma);
    let mut model = PqnModel::new(config.model_config(), config.seed)?;
    let mut target = model.target_network()?;
    let td_params = match config.td_scope {
        TdScope::QOnly => model.q_params(),
        TdScope::All => {
            let mut ids = model.seq_params();
            ids.extend(model.q_params());
            ids
        }
    };
    let mut td_adam = AdamState::new(&model.store, td_params, AdamConfig::with_lr(config.lr_q));
    let mut sup_adam = AdamState::new(&model.store, model.seq_params(), AdamConfig::with_lr(config.lr_ptr));
    let mut replay: ReplayBuffer<Transition<T>> = ReplayBuffer::new(config.replay_capacity)?;
    let mut action_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 1));
    let mut replay_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 2));
    let mut sup_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 3));
    let sup_kind = match kind {
        PolicyKind::Pqn if config.supervise_tempered => PolicyKind::Pqn,
        _ => PolicyKind::PtrNet,
    };

    let mut cache = FeatureCache::new();
    let mut history = TrainingHistory::default();
    let mut global_step: u64 = 0;
    let mut episode_counter: u64 = 0;

    for epoch in 0..config.epochs {
        let perturbed = perturbation.is_some_and(|p| p.covers(epoch));
        let env_instances: Vec<TspInstance<T>> = match perturbation {
            Some(p) if perturbed => instances
                .iter()
                .enumerate()
                .map(|(i, inst)| {
                    let seed = mix(mix(p.seed, epoch as u64), i as u64);
                    perturb_instance(inst, T::lit(p.alpha), T::lit(p.beta), seed)
                })
                .collect::<Result<_>>()?,
            _ => instances.to_vec(),
        };
        cache.clear();

        let mut costs = Vec::new();
        let mut deviations = Vec::new();
        let mut entropies = Vec::new();
        let mut q_means = Vec::new();
        let mut td_losses = Vec::new();
        let mut steps = 0usize;

        while steps < config.steps_per_epoch {
            let idx = (episode_counter % instances.len() as u64) as usize;
            let episode = episode_counter;
            episode_counter += 1;
            let env_inst = &env_instances[idx];
            let encoded = cache.encoding(&model, instances, idx)?.clone();
            let mut state = env::reset(env_inst, START_CITY)?;
            let mut dec = encoded.final_state.clone();
            loop {
                dec = model.decode(&state, &encoded, &dec)?;
                cache.record(episode, state.t(), &dec);
                let feasible = feasible_actions(&state);
                let eval = model.evaluate_step(kind, &dec.h, &encoded, &feasible, gamma)?;
                entropies.push(entropy(&eval.dist));
                let q = &eval.dist.q_values;
                let q_mean = mean_or_zero(q);
                let q_min = q.iter().copied().fold(T::infinity(), T::min);
                let q_max = q.iter().copied().fold(T::neg_infinity(), T::max);
                q_means.push(q_mean);
                let action = select_action(&eval.dist, SelectionMode::Sample, &mut action_rng);
                let out = env::step(env_inst, &state, action)?;
                global_step += 1;
                steps += 1;

                let mut step_loss = None;
                if kind == PolicyKind::Pqn {
                    replay.push(Transition {
                        instance: idx,
                        episode,
                        state: state.visited().to_vec(),
                        action,
                        reward: out.reward,
                        next_state: out.next_state.visited().to_vec(),
                        terminal: out.terminal,
                    });
                    if let Some(batch) = replay.sample(config.batch_size, &mut replay_rng) {
                        let td = td_loss(&model, &target, &batch, instances, &mut cache, gamma, config.td_scope)?;
                        td.grads.accumulate_into(&mut model.store);
                        adam_step(&mut model.store, &mut td_adam);
                        if config.td_scope == TdScope::All {
                            cache.clear();
                        }
                        td_losses.push(td.loss);
                        step_loss = Some(td.loss);
                    }
                    sync_target(&model.store, &mut target, config.sync_every, global_step)?;
                }
                history.steps.push(StepRecord {
                    step: global_step,
                    epoch,
                    q_mean,
                    q_min,
                    q_max,
                    td_loss: step_loss,
                });

                state = out.next_state;
                if out.terminal {
                    let tour = state.to_tour();
                    costs.push(tour_cost(env_inst, &tour)?);
                    deviations.push(T::from_usize_lossy(levenshtein(&tour.order, &benchmarks[idx].order)));
                    break;
                }
            }
        }

        let mut sup_losses = Vec::with_capacity(config.sup_steps);
        for _ in 0..config.sup_steps {
            let chosen: Vec<usize> = if instances.len() <= config.batch_size {
                (0..instances.len()).collect()
            } else {
                let mut v = sample_indices(&mut sup_rng, instances.len(), config.batch_size).into_vec();
                v.sort_unstable();
                v
            };
            let grads = {
                let mut tape = Tape::new(&model.store);
                let mut parts = Vec::with_capacity(chosen.len());
                for &i in &chosen {
                    if let Some(l) =
                        supervised_loss_tape(&model, &mut tape, &instances[i], &benchmarks[i], sup_kind, gamma)?
                    {
                        parts.push(l);
                    }
                }
                if parts.is_empty() {
                    None
                } else {
                    let loss = tape.mean(&parts);
                    sup_losses.push(tape.scalar(loss));
                    Some(tape.backward(loss))
                }
            };
            if let Some(g) = grads {
                // Only the sequence model is stepped; Q-head gradients are dropped.
                g.accumulate_into(&mut model.store);
                adam_step(&mut model.store, &mut sup_adam);
                for id in model.q_params() {
                    model.store.get_mut(id).zero_grad();
                }
            }
        }
        cache.clear();

        history.epochs.push(EpochRecord {
            epoch,
            j_mean: mean_or_zero(&costs),
            entropy_mean: mean_or_zero(&entropies),
            q_mean: mean_or_zero(&q_means),
            td_loss: mean_or_zero(&td_losses),
            sup_loss: mean_or_zero(&sup_losses),
            sigma_b: mean_or_zero(&deviations),
            td_updates: td_losses.len(),
            episodes: costs.len(),
            perturbed,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{benchmark_tour, BenchmarkMethod};
    use crate::tsp::generate_instance;

    fn setup(n: usize, m: usize, seed: u64) -> (Vec<TspInstance<f64>>, Vec<Tour>) {
        let instances: Vec<_> = (0..m).map(|i| generate_instance(n, seed + i as u64).unwrap()).collect();
        let bench = instances
            .iter()
            .map(|i| benchmark_tour(i, BenchmarkMethod::TwoOpt).unwrap())
            .collect();
        (instances, bench)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            q_hidden: 8,
            batch_size: 8,
            epochs: 3,
            steps_per_epoch: 20,
            sync_every: 5,
            sup_steps: 2,
            seed: 11,
            lr_ptr: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn mix_spreads_seeds() {
        assert_ne!(mix(0, 1), mix(0, 2));
        assert_ne!(mix(1, 0), mix(0, 1));
    }

    #[test]
    fn rollout_produces_valid_tour() {
        let inst = generate_instance(7, 3).unwrap();
        let model = PqnModel::<f64>::new(ModelConfig { hidden: 6, q_hidden: 4 }, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [PolicyKind::Pqn, PolicyKind::PtrNet] {
            let r = rollout(&model, kind, &inst, SelectionMode::Sample, &mut rng, 0.95).unwrap();
            validate_tour(&inst, &r.tour).unwrap();
            assert_eq!(r.rewards.len(), 6);
            assert_eq!(r.distributions.len(), 6);
        }
    }

    #[test]
    fn two_city_rollout_is_forced() {
        let inst = generate_instance(2, 0).unwrap();
        let model = PqnModel::<f64>::new(ModelConfig { hidden: 4, q_hidden: 4 }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = rollout(&model, PolicyKind::Pqn, &inst, SelectionMode::Greedy, &mut rng, 0.9).unwrap();
        assert_eq!(r.tour.order, vec![0, 1]);
    }

    #[test]
    fn history_shape_and_finiteness() {
        let (inst, bench) = setup(6, 3, 100);
        let cfg = small_config();
        let (model, hist) = train_pqn(&inst, &bench, &cfg).unwrap();
        assert!(model.store.all_finite());
        assert_eq!(hist.epochs.len(), 3);
        for r in &hist.epochs {
            for v in [r.j_mean, r.entropy_mean, r.q_mean, r.td_loss, r.sup_loss, r.sigma_b] {
                assert!(v.is_finite());
            }
            assert!(r.episodes >= 4);
        }
        assert!(hist.steps.iter().any(|s| s.td_loss.is_some()));
    }

    #[test]
    fn no_td_update_when_batch_exceeds_buffer() {
        let (inst, bench) = setup(5, 1, 7);
        let cfg = TrainConfig {
            epochs: 1,
            steps_per_epoch: 4,
            batch_size: 64,
            ..small_config()
        };
        let (_, hist) = train_pqn(&inst, &bench, &cfg).unwrap();
        assert_eq!(hist.epochs.len(), 1);
        assert_eq!(hist.epochs[0].td_updates, 0);
        assert_eq!(hist.epochs[0].td_loss, 0.0);
    }

    #[test]
    fn ptrnet_history_has_unit_q_and_no_td() {
        let (inst, bench) = setup(6, 2, 40);
        let (_, hist) = train_ptrnet_supervised(&inst, &bench, &small_config()).unwrap();
        for r in &hist.epochs {
            assert_eq!(r.q_mean, 1.0);
            assert_eq!(r.td_updates, 0);
        }
    }

    #[test]
    fn identical_seeds_give_identical_histories() {
        let (inst, bench) = setup(6, 2, 9);
        let cfg = small_config();
        let (_, a) = train_pqn(&inst, &bench, &cfg).unwrap();
        let (_, b) = train_pqn(&inst, &bench, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_perturbation_matches_plain_run() {
        let (inst, bench) = setup(6, 2, 21);
        let cfg = small_config();
        let p = Perturbation {
            first_epoch: 1,
            last_epoch: 2,
            alpha: 1.0,
            beta: 1.0,
            seed: 99,
        };
        let (_, plain) = train_pqn(&inst, &bench, &cfg).unwrap();
        let (_, pert) = run_perturbation_protocol(PolicyKind::Pqn, &inst, &bench, &cfg, p).unwrap();
        for (a, b) in plain.epochs.iter().zip(&pert.epochs) {
            assert_eq!(a.j_mean, b.j_mean);
            assert_eq!(a.td_loss, b.td_loss);
        }
        assert!(pert.epochs[1].perturbed && !pert.epochs[0].perturbed);
    }

    #[test]
    fn perturbation_window_must_fit() {
        let (inst, bench) = setup(5, 1, 2);
        let p = Perturbation {
            first_epoch: 2,
            last_epoch: 5,
            alpha: 0.5,
            beta: 2.0,
            seed: 0,
        };
        assert!(run_perturbation_protocol(PolicyKind::Pqn, &inst, &bench, &small_config(), p).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig { gamma: 1.0, ..small_config() };
        assert!(cfg.validate(5).is_err());
        let cfg = TrainConfig { steps_per_epoch: 3, ..small_config() };
        assert!(cfg.validate(5).is_err());
        assert!(small_config().validate(5).is_ok());
    }
}
