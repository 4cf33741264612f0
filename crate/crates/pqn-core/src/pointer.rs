//! City embedding, LSTM encoder/decoder and pointer attention.
//!
//! Cities enter as 2D coordinates, are projected to `k` dimensions and run
//! through the encoder LSTM in index order; the hidden state after city `a`
//! is its embedding `e_a`. The decoder consumes the embedding of the current
//! city and its hidden state `h_t` drives attention
//! `u_ta = v . tanh(W1 h_t + W2 e_a)` over the unvisited cities.

use crate::env::EpisodeState;
use crate::error::{PqnError, Result};
use crate::nn::param::{ParamId, ParamStore, ParamTensor};
use crate::nn::tape::{matvec_plain, Tape, Var};
use crate::nn::{Activation, Dense, LstmCell, LstmCellState, LstmVars};
use crate::scalar::Scalar;
use crate::tsp::TspInstance;

/// Attention projections; all three share the hidden size `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub w1: ParamId,
    pub w2: ParamId,
    pub v: ParamId,
}

impl AttentionParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, k: usize) -> Result<Self> {
        Ok(Self {
            w1: store.insert(ParamTensor::zeros("attention.w1", vec![k, k]))?,
            w2: store.insert(ParamTensor::zeros("attention.w2", vec![k, k]))?,
            v: store.insert(ParamTensor::zeros("attention.v", vec![k]))?,
        })
    }
}

/// Sequence-model half of the network: everything except the Q head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointerNet {
    pub hidden: usize,
    pub embed: Dense,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    pub attention: AttentionParams,
}

/// Per-city embeddings plus the encoder's final state.
///
/// `projected[a]` caches `W2 e_a`, which every attention evaluation reuses.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance<T> {
    pub embeddings: Vec<Vec<T>>,
    pub projected: Vec<Vec<T>>,
    pub final_state: LstmCellState<T>,
}

impl<T: Scalar> EncodedInstance<T> {
    pub fn n(&self) -> usize {
        self.embeddings.len()
    }
}

/// Tape counterpart of [`EncodedInstance`].
#[derive(Debug, Clone)]
pub struct EncodedVars {
    pub embeddings: Vec<Var>,
    pub projected: Vec<Var>,
    pub final_state: LstmVars,
}

impl PointerNet {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, k: usize) -> Result<Self> {
        Ok(Self {
            hidden: k,
            embed: Dense::register(store, "embed", 2, k)?,
            encoder: LstmCell::register(store, "encoder", k, k)?,
            decoder: LstmCell::register(store, "decoder", k, k)?,
            attention: AttentionParams::register(store, k)?,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.embed.w,
            self.embed.b,
            self.encoder.w,
            self.encoder.b,
            self.decoder.w,
            self.decoder.b,
            self.attention.w1,
            self.attention.w2,
            self.attention.v,
        ]
    }

    pub fn encode<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        instance: &TspInstance<T>,
    ) -> Result<EncodedInstance<T>> {
        let coords = instance
            .coords()
            .ok_or_else(|| PqnError::invalid("instance has no coordinates to encode"))?;
        let k = self.hidden;
        let w2 = store.get(self.attention.w2);
        let mut state = LstmCellState::zeros(k);
        let mut embeddings = Vec::with_capacity(coords.len());
        let mut projected = Vec::with_capacity(coords.len());
        for p in coords {
            let x = self.embed.forward(store, p, Activation::None)?;
            state = self.encoder.step(store, &x, &state)?;
            projected.push(matvec_plain(&w2.values, k, k, &state.h));
            embeddings.push(state.h.clone());
        }
        Ok(EncodedInstance {
            embeddings,
            projected,
            final_state: state,
        })
    }

    pub fn encode_tape<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        instance: &TspInstance<T>,
    ) -> Result<EncodedVars> {
        let coords = instance
            .coords()
            .ok_or_else(|| PqnError::invalid("instance has no coordinates to encode"))?;
        let k = self.hidden;
        let mut state = LstmVars {
            h: tape.input(vec![T::zero(); k]),
            c: tape.input(vec![T::zero(); k]),
        };
        let mut embeddings = Vec::with_capacity(coords.len());
        let mut projected = Vec::with_capacity(coords.len());
        for p in coords {
            let x = tape.input(p.to_vec());
            let x = self.embed.forward_tape(tape, x, Activation::None);
            state = self.encoder.step_tape(tape, x, state);
            embeddings.push(state.h);
            projected.push(tape.matvec(self.attention.w2, state.h));
        }
        Ok(EncodedVars {
            embeddings,
            projected,
            final_state: state,
        })
    }

    /// One decoder step consuming the embedding of `state.current()`.
    ///
    /// At `t = 0` the caller passes the encoder's final state as `prev`.
    pub fn decode_state<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        state: &EpisodeState,
        encoded: &EncodedInstance<T>,
        prev: &LstmCellState<T>,
    ) -> Result<LstmCellState<T>> {
        let e = encoded
            .embeddings
            .get(state.current())
            .ok_or_else(|| PqnError::InvalidState("current city not encoded".into()))?;
        self.decoder.step(store, e, prev)
    }

    pub fn decode_tape<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        current: usize,
        encoded: &EncodedVars,
        prev: LstmVars,
    ) -> LstmVars {
        self.decoder.step_tape(tape, encoded.embeddings[current], prev)
    }

    /// `W1 h_t`, shared across every action scored at step `t`.
    pub fn project_query<T: Scalar>(&self, store: &ParamStore<T>, h: &[T]) -> Vec<T> {
        let k = self.hidden;
        matvec_plain(&store.get(self.attention.w1).values, k, k, h)
    }

    /// `c_ta = tanh(W1 h_t + W2 e_a)` from precomputed projections.
    pub fn context_from_projections<T: Scalar>(query: &[T], projected: &[T]) -> Vec<T> {
        query.iter().zip(projected).map(|(&a, &b)| (a + b).tanh()).collect()
    }

    pub fn context_vector<T: Scalar>(&self, store: &ParamStore<T>, h: &[T], e: &[T]) -> Result<Vec<T>> {
        let k = self.hidden;
        if h.len() != k || e.len() != k {
            return Err(PqnError::Shape(format!(
                "context: h [{}], e [{}], hidden {k}",
                h.len(),
                e.len()
            )));
        }
        let q = self.project_query(store, h);
        let p = matvec_plain(&store.get(self.attention.w2).values, k, k, e);
        Ok(Self::context_from_projections(&q, &p))
    }

    pub fn logit_from_context<T: Scalar>(&self, store: &ParamStore<T>, context: &[T]) -> T {
        store
            .get(self.attention.v)
            .values
            .iter()
            .zip(context)
            .map(|(&v, &c)| v * c)
            .sum()
    }

    /// Contexts of every action in `feasible`, in the same order.
    pub fn contexts<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        h: &[T],
        encoded: &EncodedInstance<T>,
        feasible: &[usize],
    ) -> Vec<Vec<T>> {
        let query = self.project_query(store, h);
        feasible
            .iter()
            .map(|&a| Self::context_from_projections(&query, &encoded.projected[a]))
            .collect()
    }

    /// Attention logits `u_ta` for the feasible actions only.
    pub fn attention_scores<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        h: &[T],
        encoded: &EncodedInstance<T>,
        feasible: &[usize],
    ) -> Result<Vec<(usize, T)>> {
        if feasible.is_empty() {
            return Err(PqnError::InvalidState("no feasible actions to score".into()));
        }
        Ok(self
            .contexts(store, h, encoded, feasible)
            .iter()
            .zip(feasible)
            .map(|(c, &a)| (a, self.logit_from_context(store, c)))
            .collect())
    }

    /// Tape contexts `c_ta` for each action, given `h_t` and encoded cities.
    pub fn contexts_tape<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        h: Var,
        encoded: &EncodedVars,
        feasible: &[usize],
    ) -> Vec<Var> {
        let query = tape.matvec(self.attention.w1, h);
        feasible
            .iter()
            .map(|&a| {
                let z = tape.add(query, encoded.projected[a]);
                tape.tanh(z)
            })
            .collect()
    }

    /// Stacked logits for the given contexts, as one vector node.
    pub fn logits_tape<T: Scalar>(&self, tape: &mut Tape<'_, T>, contexts: &[Var]) -> Var {
        let v = tape.param(self.attention.v);
        let logits: Vec<Var> = contexts.iter().map(|&c| tape.dot(v, c)).collect();
        tape.concat(&logits)
    }
}
