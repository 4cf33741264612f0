//! The full PQN parameter set and the computations that combine the pointer
//! network with the Q head: per-step policy evaluation, TD loss over replayed
//! transitions and the supervised sequence loss.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{feasible_actions, EpisodeState};
use crate::error::{PqnError, Result};
use crate::nn::param::{ParamId, ParamStore};
use crate::nn::tape::{Gradients, Tape, Var};
use crate::nn::{LstmCellState, LstmVars, INIT_BOUND};
use crate::pointer::{EncodedInstance, EncodedVars, PointerNet};
use crate::policy::{plain_softmax, tempered_softmax, ActionDistribution};
use crate::qnet::{mse, td_target, QBounds, QNetwork, TargetNetwork, Transition};
use crate::scalar::Scalar;
use crate::tsp::{Tour, TspInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// LSTM / attention width `k`.
    pub hidden: usize,
    /// Hidden units of the Q head.
    pub q_hidden: usize,
}

/// Which distribution drives action selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// `softmax(u * Q)`.
    Pqn,
    /// Plain pointer attention `softmax(u)`.
    PtrNet,
}

/// Which parameters receive TD-loss gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdScope {
    QOnly,
    All,
}

/// Every trainable array of the model in one store.
#[derive(Debug, Clone, PartialEq)]
pub struct PqnModel<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub pointer: PointerNet,
    pub q: QNetwork,
}

/// Policy at one decision step.
#[derive(Debug, Clone)]
pub struct StepEval<T> {
    pub contexts: Vec<Vec<T>>,
    pub dist: ActionDistribution<T>,
}

impl<T: Scalar> PqnModel<T> {
    /// Zero-initialised model.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        if config.hidden == 0 || config.q_hidden == 0 {
            return Err(PqnError::invalid("hidden sizes must be positive"));
        }
        let mut store = ParamStore::new();
        let pointer = PointerNet::register(&mut store, config.hidden)?;
        let q = QNetwork::register(&mut store, config.hidden, config.q_hidden)?;
        Ok(Self {
            config,
            store,
            pointer,
            q,
        })
    }

    /// Weights drawn from `U(-0.08, 0.08)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in model.store.ids() {
            model.store.get_mut(id).fill_uniform(INIT_BOUND, &mut rng);
        }
        Ok(model)
    }

    /// Sequence-model parameters (embedding, LSTMs, attention).
    pub fn seq_params(&self) -> Vec<ParamId> {
        self.pointer.param_ids()
    }

    pub fn q_params(&self) -> Vec<ParamId> {
        self.q.param_ids()
    }

    pub fn encode(&self, instance: &TspInstance<T>) -> Result<EncodedInstance<T>> {
        self.pointer.encode(&self.store, instance)
    }

    pub fn decode(
        &self,
        state: &EpisodeState,
        encoded: &EncodedInstance<T>,
        prev: &LstmCellState<T>,
    ) -> Result<LstmCellState<T>> {
        self.pointer.decode_state(&self.store, state, encoded, prev)
    }

    /// Contexts, logits, Q-values and the resulting policy over `feasible`.
    pub fn evaluate_step(
        &self,
        kind: PolicyKind,
        h: &[T],
        encoded: &EncodedInstance<T>,
        feasible: &[usize],
        gamma: T,
    ) -> Result<StepEval<T>> {
        if feasible.is_empty() {
            return Err(PqnError::InvalidState("no feasible actions".into()));
        }
        let contexts = self.pointer.contexts(&self.store, h, encoded, feasible);
        let logits: Vec<(usize, T)> = feasible
            .iter()
            .zip(&contexts)
            .map(|(&a, c)| (a, self.pointer.logit_from_context(&self.store, c)))
            .collect();
        let dist = match kind {
            PolicyKind::PtrNet => plain_softmax(&logits)?,
            PolicyKind::Pqn => {
                let q = self.q_values(&contexts, gamma)?;
                let keyed: Vec<(usize, T)> = feasible.iter().copied().zip(q).collect();
                tempered_softmax(&logits, &keyed)?
            }
        };
        Ok(StepEval { contexts, dist })
    }

    /// Clamped Q for each context.
    pub fn q_values(&self, contexts: &[Vec<T>], gamma: T) -> Result<Vec<T>> {
        let bounds = QBounds::for_gamma(gamma);
        contexts
            .iter()
            .map(|c| Ok(bounds.clamp(self.q.raw(&self.store, c)?)))
            .collect()
    }

    pub fn target_network(&self) -> Result<TargetNetwork<T>> {
        TargetNetwork::new(&self.q, &self.store)
    }
}

/// Encodings and decoder states computed under the current sequence-model
/// parameters. Must be cleared whenever those parameters change.
#[derive(Debug, Default)]
pub struct FeatureCache<T> {
    encodings: BTreeMap<usize, EncodedInstance<T>>,
    decoder: HashMap<u64, Vec<LstmCellState<T>>>,
}

impl<T: Scalar> FeatureCache<T> {
    pub fn new() -> Self {
        Self {
            encodings: BTreeMap::new(),
            decoder: HashMap::new(),
        }
    }

    pub fn clear(&mut self) {
        self.encodings.clear();
        self.decoder.clear();
    }

    pub fn encoding(
        &mut self,
        model: &PqnModel<T>,
        instances: &[TspInstance<T>],
        idx: usize,
    ) -> Result<&EncodedInstance<T>> {
        if !self.encodings.contains_key(&idx) {
            let inst = instances
                .get(idx)
                .ok_or_else(|| PqnError::invalid(format!("no instance {idx}")))?;
            self.encodings.insert(idx, model.encode(inst)?);
        }
        Ok(&self.encodings[&idx])
    }

    /// Appends the decoder state for step `t` of `episode` (computed by a rollout).
    pub fn record(&mut self, episode: u64, t: usize, state: &LstmCellState<T>) {
        let states = self.decoder.entry(episode).or_default();
        if states.len() == t {
            states.push(state.clone());
        }
    }

    /// Decoder state after consuming `visited.last()`, extending the cached
    /// prefix of `episode` as needed.
    pub fn decoder_state(
        &mut self,
        model: &PqnModel<T>,
        instances: &[TspInstance<T>],
        instance: usize,
        episode: u64,
        visited: &[usize],
    ) -> Result<LstmCellState<T>> {
        self.encoding(model, instances, instance)?;
        let enc = &self.encodings[&instance];
        let states = self.decoder.entry(episode).or_default();
        let t = visited.len() - 1;
        while states.len() <= t {
            let step = states.len();
            let prev = states.last().unwrap_or(&enc.final_state);
            let e = &enc.embeddings[visited[step]];
            let next = model.pointer.decoder.step(&model.store, e, prev)?;
            states.push(next);
        }
        Ok(states[t].clone())
    }
}

/// Result of one TD-loss evaluation.
#[derive(Debug, Clone)]
pub struct TdLoss<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    pub predictions: Vec<T>,
    pub targets: Vec<T>,
}

fn unvisited(n: usize, visited: &[usize]) -> Result<Vec<usize>> {
    Ok(feasible_actions(&EpisodeState::from_visited(n, visited)?))
}

/// Mean squared TD error over `batch`:
/// `(r + gamma max_a' Q(s', a'; target) - Q(s, a))^2`.
///
/// The target branch is evaluated without gradients. Predictions use the raw
/// network output so the loss keeps a gradient outside the clamp range;
/// bootstrap values use clamped target Q.
pub fn td_loss<T: Scalar>(
    model: &PqnModel<T>,
    target: &TargetNetwork<T>,
    batch: &[&Transition<T>],
    instances: &[TspInstance<T>],
    cache: &mut FeatureCache<T>,
    gamma: T,
    scope: TdScope,
) -> Result<TdLoss<T>> {
    if batch.is_empty() {
        return Err(PqnError::invalid("TD loss needs a non-empty batch"));
    }
    let mut targets = Vec::with_capacity(batch.len());
    let mut contexts = Vec::with_capacity(batch.len());
    for tr in batch {
        let n = instances
            .get(tr.instance)
            .ok_or_else(|| PqnError::invalid(format!("no instance {}", tr.instance)))?
            .n();
        let h = cache.decoder_state(model, instances, tr.instance, tr.episode, &tr.state)?;
        let next_q = if tr.terminal {
            Vec::new()
        } else {
            let h_next =
                cache.decoder_state(model, instances, tr.instance, tr.episode, &tr.next_state)?;
            let enc = &cache.encodings[&tr.instance];
            let next = unvisited(n, &tr.next_state)?;
            model
                .pointer
                .contexts(&model.store, &h_next.h, enc, &next)
                .iter()
                .map(|c| target.q_value(c, gamma))
                .collect::<Result<Vec<T>>>()?
        };
        targets.push(td_target(tr.reward, &next_q, tr.terminal, gamma)?);
        let enc = &cache.encodings[&tr.instance];
        contexts.push(model.pointer.contexts(&model.store, &h.h, enc, &[tr.action]).remove(0));
    }

    let mut tape = Tape::new(&model.store);
    let ctx_vars: Vec<Var> = match scope {
        TdScope::QOnly => contexts.into_iter().map(|c| tape.input(c)).collect(),
        TdScope::All => {
            let mut encoded: BTreeMap<usize, EncodedVars> = BTreeMap::new();
            let mut out = Vec::with_capacity(batch.len());
            for tr in batch {
                if !encoded.contains_key(&tr.instance) {
                    let ev = model.pointer.encode_tape(&mut tape, &instances[tr.instance])?;
                    encoded.insert(tr.instance, ev);
                }
                let ev = &encoded[&tr.instance];
                let mut state: LstmVars = ev.final_state;
                for &city in &tr.state {
                    state = model.pointer.decode_tape(&mut tape, city, ev, state);
                }
                out.push(model.pointer.contexts_tape(&mut tape, state.h, ev, &[tr.action])[0]);
            }
            out
        }
    };
    let mut errors = Vec::with_capacity(batch.len());
    let mut predictions = Vec::with_capacity(batch.len());
    for (ctx, &y) in ctx_vars.into_iter().zip(&targets) {
        let q = model.q.raw_tape(&mut tape, ctx);
        predictions.push(tape.scalar(q));
        let y = tape.input(vec![y]);
        let diff = tape.sub(y, q);
        errors.push(tape.square(diff));
    }
    let loss_var = tape.mean(&errors);
    let loss = tape.scalar(loss_var);
    debug_assert!((loss - mse(&predictions, &targets)?).abs() <= T::lit(1e-9) * (T::one() + loss));
    let grads = tape.backward(loss_var);
    Ok(TdLoss {
        loss,
        grads,
        predictions,
        targets,
    })
}

/// Teacher-forced cross-entropy of `model` along `tour`, as a tape node.
///
/// With `kind == Pqn` the logits are scaled by the current (detached) clamped
/// Q-values, so the loss is taken under the tempered policy.
pub fn supervised_loss_tape<T: Scalar>(
    model: &PqnModel<T>,
    tape: &mut Tape<'_, T>,
    instance: &TspInstance<T>,
    tour: &Tour,
    kind: PolicyKind,
    gamma: T,
) -> Result<Option<Var>> {
    let n = instance.n();
    if tour.len() != n {
        return Err(PqnError::invalid("supervision tour length differs from instance"));
    }
    let encoded = model.pointer.encode_tape(tape, instance)?;
    let bounds = QBounds::for_gamma(gamma);
    let mut state = encoded.final_state;
    let mut visited = vec![false; n];
    let mut losses = Vec::with_capacity(n);
    for t in 0..n - 1 {
        let current = tour.order[t];
        visited[current] = true;
        state = model.pointer.decode_tape(tape, current, &encoded, state);
        let feasible: Vec<usize> = (0..n).filter(|&c| !visited[c]).collect();
        if feasible.len() < 2 {
            continue;
        }
        let next = tour.order[t + 1];
        let target = feasible
            .iter()
            .position(|&c| c == next)
            .ok_or_else(|| PqnError::invalid("supervision tour revisits a city"))?;
        let ctx = model.pointer.contexts_tape(tape, state.h, &encoded, &feasible);
        let mut logits = model.pointer.logits_tape(tape, &ctx);
        if kind == PolicyKind::Pqn {
            let q: Vec<T> = ctx
                .iter()
                .map(|&c| Ok(bounds.clamp(model.q.raw(&model.store, tape.value(c))?)))
                .collect::<Result<_>>()?;
            logits = tape.mul_const(logits, q);
        }
        losses.push(tape.cross_entropy(logits, target));
    }
    if losses.is_empty() {
        return Ok(None);
    }
    Ok(Some(tape.mean(&losses)))
}
