//! Classical reference solvers: nearest neighbour, 2-opt local search and the
//! exact Held-Karp dynamic program.

use serde::{Deserialize, Serialize};

use crate::error::{PqnError, Result};
use crate::scalar::Scalar;
use crate::tsp::{tour_cost_unchecked, validate_tour, Tour, TspInstance, START_CITY};

/// Largest instance Held-Karp will accept (`2^n * n` table).
pub const HELD_KARP_MAX_N: usize = 14;

/// Greedy construction: always move to the closest unvisited city, ties to
/// the lowest index.
pub fn nearest_neighbor<T: Scalar>(instance: &TspInstance<T>, start: usize) -> Result<Tour> {
    let n = instance.n();
    if start >= n {
        return Err(PqnError::invalid(format!("start {start} out of range for {n} cities")));
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if visited[j] {
                continue;
            }
            if best.is_none_or(|b| instance.cost(cur, j) < instance.cost(cur, b)) {
                best = Some(j);
            }
        }
        cur = best.expect("an unvisited city remains");
        visited[cur] = true;
        order.push(cur);
    }
    Ok(Tour::new(order))
}

/// First-improvement 2-opt until no exchange shortens the tour.
///
/// Position 0 never moves, so the start city is preserved.
pub fn two_opt<T: Scalar>(instance: &TspInstance<T>, tour: &Tour) -> Result<Tour> {
    validate_tour(instance, tour).map_err(PqnError::InvalidTour)?;
    let n = instance.n();
    let mut t = tour.order.clone();
    if n < 4 {
        return Ok(Tour::new(t));
    }
    let c = |a: usize, b: usize| instance.cost(a, b);
    let tol = T::lit(1e-12);
    'restart: loop {
        for i in 0..n - 2 {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (t[i], t[i + 1]);
                let (x, y) = (t[j], t[(j + 1) % n]);
                let delta = c(a, x) + c(b, y) - c(a, b) - c(x, y);
                if delta < -tol {
                    t[i + 1..=j].reverse();
                    continue 'restart;
                }
            }
        }
        break;
    }
    Ok(Tour::new(t))
}

/// Exact optimum by bitmask dynamic programming, anchored at city 0.
pub fn held_karp<T: Scalar>(instance: &TspInstance<T>) -> Result<(Tour, T)> {
    let n = instance.n();
    if n > HELD_KARP_MAX_N {
        return Err(PqnError::Capacity {
            n,
            limit: HELD_KARP_MAX_N,
        });
    }
    if n == 2 {
        let order = vec![0, 1];
        let cost = tour_cost_unchecked(instance, &order);
        return Ok((Tour::new(order), cost));
    }
    // Cities 1..n map to bits 0..n-1; dp[mask * m + j] is the cheapest path
    // from the start through `mask` ending at city j + 1.
    let m = n - 1;
    let full = 1usize << m;
    let inf = T::infinity();
    let mut dp = vec![inf; full * m];
    let mut parent = vec![usize::MAX; full * m];
    for j in 0..m {
        dp[(1 << j) * m + j] = instance.cost(START_CITY, j + 1);
    }
    for mask in 1..full {
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let base = dp[mask * m + j];
            if base == inf {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = base + instance.cost(j + 1, k + 1);
                if cand < dp[next * m + k] {
                    dp[next * m + k] = cand;
                    parent[next * m + k] = j;
                }
            }
        }
    }
    let last_mask = full - 1;
    let mut best = (inf, 0);
    for j in 0..m {
        let total = dp[last_mask * m + j] + instance.cost(j + 1, START_CITY);
        if total < best.0 {
            best = (total, j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut mask, mut j) = (last_mask, best.1);
    loop {
        order.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.push(START_CITY);
    order.reverse();
    let tour = Tour::new(order);
    let cost = tour_cost_unchecked(instance, &tour.order);
    Ok((tour, cost))
}

/// How benchmark tours are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkMethod {
    /// Nearest neighbour improved by 2-opt.
    TwoOpt,
    HeldKarp,
}

impl std::str::FromStr for BenchmarkMethod {
    type Err = PqnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_opt" => Ok(Self::TwoOpt),
            "held_karp" => Ok(Self::HeldKarp),
            other => Err(PqnError::invalid(format!("unknown benchmark method `{other}`"))),
        }
    }
}

impl std::fmt::Display for BenchmarkMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TwoOpt => "two_opt",
            Self::HeldKarp => "held_karp",
        })
    }
}

pub fn benchmark_tour<T: Scalar>(instance: &TspInstance<T>, method: BenchmarkMethod) -> Result<Tour> {
    match method {
        BenchmarkMethod::TwoOpt => two_opt(instance, &nearest_neighbor(instance, START_CITY)?),
        BenchmarkMethod::HeldKarp => held_karp(instance).map(|(t, _)| t),
    }
}
