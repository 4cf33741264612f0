//! The TSP as an episodic, deterministic MDP.
//!
//! States are the ordered sets of visited cities, actions are the unvisited
//! cities, and moving into city `a` from `i` earns
//! `1 - c[i][a] / sum_{j != a} c[j][a]`, which always lies in `[0, 1]`.

use crate::error::{PqnError, Result};
use crate::scalar::Scalar;
use crate::tsp::{Tour, TspInstance};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpisodeState {
    visited: Vec<usize>,
    mask: Vec<bool>,
}

impl EpisodeState {
    /// Rebuilds a state from a visited sequence (as stored in replay snapshots).
    pub fn from_visited(n: usize, visited: &[usize]) -> Result<Self> {
        if visited.is_empty() {
            return Err(PqnError::InvalidState("empty visited sequence".into()));
        }
        let mut mask = vec![false; n];
        for &c in visited {
            if c >= n || mask[c] {
                return Err(PqnError::InvalidState(format!(
                    "visited sequence {visited:?} is not a set of cities below {n}"
                )));
            }
            mask[c] = true;
        }
        Ok(Self {
            visited: visited.to_vec(),
            mask,
        })
    }

    pub fn visited(&self) -> &[usize] {
        &self.visited
    }

    pub fn is_visited(&self, city: usize) -> bool {
        self.mask.get(city).copied().unwrap_or(false)
    }

    pub fn current(&self) -> usize {
        *self.visited.last().expect("state always holds the start city")
    }

    pub fn start(&self) -> usize {
        self.visited[0]
    }

    /// Step index: number of moves taken so far.
    pub fn t(&self) -> usize {
        self.visited.len() - 1
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn is_complete(&self) -> bool {
        self.visited.len() == self.mask.len()
    }

    pub fn to_tour(&self) -> Tour {
        Tour::new(self.visited.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub reward: T,
    pub next_state: EpisodeState,
    pub terminal: bool,
}

pub fn reset<T: Scalar>(instance: &TspInstance<T>, start: usize) -> Result<EpisodeState> {
    let n = instance.n();
    if start >= n {
        return Err(PqnError::invalid(format!(
            "start city {start} out of range for {n} cities"
        )));
    }
    EpisodeState::from_visited(n, &[start])
}

/// Unvisited cities in ascending index order.
pub fn feasible_actions(state: &EpisodeState) -> Vec<usize> {
    (0..state.n()).filter(|&c| !state.mask[c]).collect()
}

fn check_feasible(state: &EpisodeState, action: usize) -> Result<()> {
    if action >= state.n() || state.mask[action] {
        return Err(PqnError::InfeasibleAction { action });
    }
    Ok(())
}

pub fn reward<T: Scalar>(instance: &TspInstance<T>, state: &EpisodeState, action: usize) -> Result<T> {
    check_feasible(state, action)?;
    Ok(reward_unchecked(instance, state.current(), action))
}

/// Reward for moving `from -> action`; the denominator is the column sum of
/// costs into `action` excluding the zero self-loop.
pub(crate) fn reward_unchecked<T: Scalar>(instance: &TspInstance<T>, from: usize, action: usize) -> T {
    let column: T = (0..instance.n())
        .filter(|&j| j != action)
        .map(|j| instance.cost(j, action))
        .sum();
    T::one() - instance.cost(from, action) / column
}

pub fn step<T: Scalar>(
    instance: &TspInstance<T>,
    state: &EpisodeState,
    action: usize,
) -> Result<StepOutcome<T>> {
    let r = reward(instance, state, action)?;
    let mut next_state = state.clone();
    next_state.visited.push(action);
    next_state.mask[action] = true;
    let terminal = next_state.is_complete();
    Ok(StepOutcome {
        reward: r,
        next_state,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::{generate_instance, validate_tour};

    fn square() -> TspInstance<f64> {
        TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn reset_gives_single_city_state() {
        let inst = generate_instance::<f64>(5, 1).unwrap();
        let s = reset(&inst, 0).unwrap();
        assert_eq!(s.visited(), &[0]);
        assert_eq!(s.t(), 0);
        assert_eq!(feasible_actions(&s), vec![1, 2, 3, 4]);
        assert_eq!(s, reset(&inst, 0).unwrap());

        let two = generate_instance::<f64>(2, 1).unwrap();
        let s = reset(&two, 1).unwrap();
        assert_eq!(s.visited(), &[1]);
        assert_eq!(feasible_actions(&s), vec![0]);
    }

    #[test]
    fn reset_rejects_out_of_range_start() {
        let inst = generate_instance::<f64>(3, 1).unwrap();
        assert!(matches!(reset(&inst, 3), Err(PqnError::InvalidArgument(_))));
    }

    #[test]
    fn feasible_actions_is_complement() {
        let s = EpisodeState::from_visited(4, &[0, 2, 1]).unwrap();
        assert_eq!(feasible_actions(&s), vec![3]);
        assert_eq!(s.current(), 1);
        assert_eq!(s.t(), 2);
    }

    #[test]
    fn equilateral_reward_is_half() {
        let inst = TspInstance::from_matrix(
            vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]],
            None,
        )
        .unwrap();
        let s = reset(&inst, 0).unwrap();
        assert_eq!(reward(&inst, &s, 1).unwrap(), 0.5);
        assert_eq!(reward(&inst, &s, 2).unwrap(), 0.5);
    }

    #[test]
    fn two_city_reward_is_zero() {
        let inst = generate_instance::<f64>(2, 4).unwrap();
        let s = reset(&inst, 0).unwrap();
        assert_eq!(reward(&inst, &s, 1).unwrap(), 0.0);
    }

    #[test]
    fn square_reward_by_column_sum() {
        // Column of city 1: c01 = 1, c21 = 1, c31 = sqrt(2).
        let inst = square();
        let s = reset(&inst, 0).unwrap();
        let expected = 1.0 - 1.0 / (2.0 + 2f64.sqrt());
        assert!((reward(&inst, &s, 1).unwrap() - expected).abs() < 1e-15);
        // Diagonal move 0 -> 2: column of 2 is sqrt(2) + 1 + 1.
        let expected = 1.0 - 2f64.sqrt() / (2.0 + 2f64.sqrt());
        assert!((reward(&inst, &s, 2).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn infeasible_actions_error() {
        let inst = square();
        let s = reset(&inst, 0).unwrap();
        assert!(matches!(reward(&inst, &s, 0), Err(PqnError::InfeasibleAction { action: 0 })));
        assert!(matches!(step(&inst, &s, 9), Err(PqnError::InfeasibleAction { action: 9 })));
    }

    #[test]
    fn two_city_step_terminates() {
        let inst = generate_instance::<f64>(2, 4).unwrap();
        let out = step(&inst, &reset(&inst, 0).unwrap(), 1).unwrap();
        assert!(out.terminal);
        assert_eq!(out.next_state.visited(), &[0, 1]);
    }

    #[test]
    fn full_episode_is_valid_and_deterministic() {
        let inst = generate_instance::<f64>(7, 2).unwrap();
        let actions = [4, 1, 6, 2, 5, 3];
        let run = || {
            let mut s = reset(&inst, 0).unwrap();
            let mut outs = Vec::new();
            for &a in &actions {
                let o = step(&inst, &s, a).unwrap();
                s = o.next_state.clone();
                outs.push(o);
            }
            outs
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.len(), 6);
        assert!(a[..5].iter().all(|o| !o.terminal));
        let last = a.last().unwrap();
        assert!(last.terminal);
        assert!(validate_tour(&inst, &last.next_state.to_tour()).is_ok());
        assert!(a.iter().all(|o| (0.0..=1.0).contains(&o.reward)));
    }
}
