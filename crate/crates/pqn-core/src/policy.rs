//! Tempered-softmax policy and the metrics used to analyse it.
//!
//! The PQN policy is `softmax(u_a / T_a)` with per-action temperature
//! `T_a = 1 / Q_a`, i.e. `softmax(u_a * Q_a)`. Q above one sharpens the plain
//! pointer distribution, Q below one flattens it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PqnError, Result};
use crate::scalar::{log_sum_exp, softmax, Scalar};
use crate::tsp::{tour_cost, validate_tour, Tour, TspInstance};

/// A distribution over the feasible actions at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution<T> {
    pub support: Vec<usize>,
    pub probs: Vec<T>,
    pub logits: Vec<T>,
    pub q_values: Vec<T>,
    pub temperatures: Vec<T>,
}

impl<T: Scalar> ActionDistribution<T> {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of `city`; exactly zero off the support.
    pub fn prob(&self, city: usize) -> T {
        self.support
            .iter()
            .position(|&a| a == city)
            .map_or(T::zero(), |i| self.probs[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Sample,
    Greedy,
}

fn split_keys<T: Copy>(pairs: &[(usize, T)]) -> (Vec<usize>, Vec<T>) {
    pairs.iter().copied().unzip()
}

/// `softmax(u_a * Q_a)` over the shared support of `logits` and `q`.
pub fn tempered_softmax<T: Scalar>(
    logits: &[(usize, T)],
    q: &[(usize, T)],
) -> Result<ActionDistribution<T>> {
    let (support, u) = split_keys(logits);
    let (q_support, qv) = split_keys(q);
    if support != q_support {
        return Err(PqnError::invalid(format!(
            "logit actions {support:?} differ from Q actions {q_support:?}"
        )));
    }
    if support.is_empty() {
        return Err(PqnError::invalid("empty action support"));
    }
    let scaled: Vec<T> = u.iter().zip(&qv).map(|(&a, &b)| a * b).collect();
    Ok(ActionDistribution {
        probs: softmax(&scaled),
        temperatures: qv.iter().map(|&x| T::one() / x).collect(),
        support,
        logits: u,
        q_values: qv,
    })
}

/// Plain pointer attention `softmax(u)`: every Q (and temperature) is one.
pub fn plain_softmax<T: Scalar>(logits: &[(usize, T)]) -> Result<ActionDistribution<T>> {
    let ones: Vec<(usize, T)> = logits.iter().map(|&(a, _)| (a, T::one())).collect();
    tempered_softmax(logits, &ones)
}

/// Draws an action (`Sample`) or takes the most probable one (`Greedy`,
/// ties to the lowest city index).
pub fn select_action<T: Scalar, R: Rng>(
    dist: &ActionDistribution<T>,
    mode: SelectionMode,
    rng: &mut R,
) -> usize {
    match mode {
        SelectionMode::Greedy => {
            let mut best = 0;
            for i in 1..dist.len() {
                let better = dist.probs[i] > dist.probs[best]
                    || (dist.probs[i] == dist.probs[best] && dist.support[i] < dist.support[best]);
                if better {
                    best = i;
                }
            }
            dist.support[best]
        }
        SelectionMode::Sample => {
            let draw = T::lit(rng.gen::<f64>());
            let mut acc = T::zero();
            for (i, &p) in dist.probs.iter().enumerate() {
                acc = acc + p;
                if draw < acc {
                    return dist.support[i];
                }
            }
            // Rounding left the cumulative sum just below the draw.
            let last = dist.probs.iter().rposition(|&p| p > T::zero()).unwrap_or(dist.len() - 1);
            dist.support[last]
        }
    }
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(dist: &ActionDistribution<T>) -> T {
    entropy_of(&dist.probs)
}

pub fn entropy_of<T: Scalar>(probs: &[T]) -> T {
    let h = -probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * p.ln())
        .sum::<T>();
    // Normalise -0 from a one-point distribution.
    h + T::zero()
}

/// `sum p log(p / q)` over a shared support.
pub fn kl_direct<T: Scalar>(p: &ActionDistribution<T>, q: &ActionDistribution<T>) -> Result<T> {
    if p.support != q.support {
        return Err(PqnError::invalid(format!(
            "KL over different supports {:?} and {:?}",
            p.support, q.support
        )));
    }
    Ok(kl_of(&p.probs, &q.probs))
}

pub fn kl_of<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > T::zero())
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Divergence of the tempered policy from plain attention in closed form:
/// `sum_a pi(a) [u_a (Q_a - 1) + omega]` with
/// `omega = log(sum exp(u)) - log(sum exp(u Q))`.
pub fn kl_closed_form<T: Scalar>(logits: &[(usize, T)], q: &[(usize, T)]) -> Result<T> {
    let tempered = tempered_softmax(logits, q)?;
    let scaled: Vec<T> = tempered
        .logits
        .iter()
        .zip(&tempered.q_values)
        .map(|(&u, &qv)| u * qv)
        .collect();
    let omega = log_sum_exp(&tempered.logits) - log_sum_exp(&scaled);
    Ok(tempered
        .probs
        .iter()
        .zip(&tempered.logits)
        .zip(&tempered.q_values)
        .map(|((&p, &u), &qv)| p * (u * (qv - T::one()) + omega))
        .sum())
}

/// Unit-cost edit distance between two city sequences.
pub fn levenshtein<X: PartialEq>(a: &[X], b: &[X]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TourMetrics<T> {
    /// Closed tour cost `J`.
    pub cost: T,
    /// Edit distance `sigma_B` to the benchmark tour.
    pub deviation: usize,
}

pub fn evaluate_tour_metrics<T: Scalar>(
    instance: &TspInstance<T>,
    tour: &Tour,
    benchmark: &Tour,
) -> Result<TourMetrics<T>> {
    validate_tour(instance, benchmark).map_err(PqnError::InvalidTour)?;
    Ok(TourMetrics {
        cost: tour_cost(instance, tour)?,
        deviation: levenshtein(&tour.order, &benchmark.order),
    })
}
