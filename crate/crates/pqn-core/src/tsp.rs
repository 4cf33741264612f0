//! Symmetric TSP instances, tours, the tour objective and cost perturbation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PqnError, Result};
use crate::scalar::Scalar;

/// Every tour starts (and implicitly ends) at this city.
pub const START_CITY: usize = 0;

/// A symmetric TSP instance over `n` cities.
///
/// Costs are stored row-major. When `coords` is present the costs are the
/// pairwise Euclidean distances between the points.
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance<T> {
    n: usize,
    costs: Vec<T>,
    coords: Option<Vec<[T; 2]>>,
    seed: Option<u64>,
}

impl<T: Scalar> TspInstance<T> {
    /// Builds a Euclidean instance from city coordinates.
    pub fn from_coords(coords: Vec<[T; 2]>) -> Result<Self> {
        let n = coords.len();
        if n < 2 {
            return Err(PqnError::invalid(format!("need at least 2 cities, got {n}")));
        }
        let mut costs = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclid(coords[i], coords[j]);
                costs[i * n + j] = d;
                costs[j * n + i] = d;
            }
        }
        let inst = Self {
            n,
            costs,
            coords: Some(coords),
            seed: None,
        };
        inst.check_invariants()?;
        Ok(inst)
    }

    /// Builds an instance from a full cost matrix, with optional coordinates
    /// that must agree with the matrix.
    pub fn from_matrix(costs: Vec<Vec<T>>, coords: Option<Vec<[T; 2]>>) -> Result<Self> {
        let n = costs.len();
        if n < 2 {
            return Err(PqnError::invalid(format!("need at least 2 cities, got {n}")));
        }
        if let Some(row) = costs.iter().position(|r| r.len() != n) {
            return Err(PqnError::invalid(format!(
                "cost row {row} has length {}, expected {n}",
                costs[row].len()
            )));
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(PqnError::invalid(format!(
                    "{} coordinates for {n} cities",
                    c.len()
                )));
            }
        }
        let inst = Self {
            n,
            costs: costs.into_iter().flatten().collect(),
            coords,
            seed: None,
        };
        inst.check_invariants()?;
        Ok(inst)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn check_invariants(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.cost(i, i) != T::zero() {
                return Err(PqnError::invalid(format!("costs[{i}][{i}] must be 0")));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.cost(i, j), self.cost(j, i));
                if a != b {
                    return Err(PqnError::invalid(format!(
                        "cost matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                if !(a > T::zero()) || !a.is_finite() {
                    return Err(PqnError::invalid(format!(
                        "costs[{i}][{j}] must be positive and finite, got {a}"
                    )));
                }
            }
        }
        if let Some(coords) = &self.coords {
            let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = euclid(coords[i], coords[j]);
                    if (d - self.cost(i, j)).abs() > tol {
                        return Err(PqnError::invalid(format!(
                            "costs[{i}][{j}] = {} disagrees with coordinate distance {d}",
                            self.cost(i, j)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> T {
        self.costs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.costs[i * self.n..(i + 1) * self.n]
    }

    pub fn cost_matrix(&self) -> Vec<Vec<T>> {
        self.costs.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn coords(&self) -> Option<&[[T; 2]]> {
        self.coords.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

fn euclid<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// A closed tour, stored as the visiting order starting from [`START_CITY`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The same cycle traversed in the opposite direction, still anchored at the start.
    pub fn reversed(&self) -> Tour {
        let mut order = Vec::with_capacity(self.order.len());
        if let Some((&first, rest)) = self.order.split_first() {
            order.push(first);
            order.extend(rest.iter().rev());
        }
        Tour { order }
    }
}

impl From<Vec<usize>> for Tour {
    fn from(order: Vec<usize>) -> Self {
        Tour { order }
    }
}

/// Why a city sequence is not a valid tour.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TourViolation {
    /// `(expected, actual)` lengths when they differ.
    pub length_mismatch: Option<(usize, usize)>,
    pub duplicated: Vec<usize>,
    pub missing: Vec<usize>,
    pub out_of_range: Vec<usize>,
    /// First city, when it is not the designated start.
    pub wrong_start: Option<usize>,
}

impl fmt::Display for TourViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some((want, got)) = self.length_mismatch {
            parts.push(format!("length mismatch (expected {want}, got {got})"));
        }
        for c in &self.duplicated {
            parts.push(format!("city {c} duplicated"));
        }
        for c in &self.missing {
            parts.push(format!("city {c} missing"));
        }
        for c in &self.out_of_range {
            parts.push(format!("city {c} out of range"));
        }
        if let Some(s) = self.wrong_start {
            parts.push(format!("tour starts at {s}, expected {START_CITY}"));
        }
        write!(f, "{}", parts.join(", "))
    }
}

/// Draws `n` cities uniformly in the unit square. Deterministic in `seed`.
pub fn generate_instance<T: Scalar>(n: usize, seed: u64) -> Result<TspInstance<T>> {
    if n < 2 {
        return Err(PqnError::invalid(format!("need at least 2 cities, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| [T::lit(rng.gen::<f64>()), T::lit(rng.gen::<f64>())])
        .collect();
    Ok(TspInstance::from_coords(coords)?.with_seed(Some(seed)))
}

/// Checks that `tour` is a permutation of `0..n` starting at [`START_CITY`].
pub fn validate_tour<T: Scalar>(
    instance: &TspInstance<T>,
    tour: &Tour,
) -> std::result::Result<(), TourViolation> {
    let n = instance.n();
    let mut v = TourViolation::default();
    if tour.len() != n {
        v.length_mismatch = Some((n, tour.len()));
    }
    let mut seen = vec![0usize; n];
    for &c in &tour.order {
        if c < n {
            seen[c] += 1;
        } else if !v.out_of_range.contains(&c) {
            v.out_of_range.push(c);
        }
    }
    for (c, &count) in seen.iter().enumerate() {
        match count {
            0 => v.missing.push(c),
            1 => {}
            _ => v.duplicated.push(c),
        }
    }
    if let Some(&first) = tour.order.first() {
        if first != START_CITY {
            v.wrong_start = Some(first);
        }
    }
    if v == TourViolation::default() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Closed-tour length: consecutive edges plus the edge back to the start.
pub fn tour_cost<T: Scalar>(instance: &TspInstance<T>, tour: &Tour) -> Result<T> {
    validate_tour(instance, tour).map_err(PqnError::InvalidTour)?;
    Ok(tour_cost_unchecked(instance, &tour.order))
}

pub(crate) fn tour_cost_unchecked<T: Scalar>(instance: &TspInstance<T>, order: &[usize]) -> T {
    let m = order.len();
    (0..m)
        .map(|i| instance.cost(order[i], order[(i + 1) % m]))
        .sum()
}

/// Multiplies every undirected edge by an independent `δ ~ U(alpha, beta)`.
///
/// One draw per unordered pair keeps the matrix symmetric. The result has no
/// coordinates because its costs are no longer Euclidean.
pub fn perturb_instance<T: Scalar>(
    instance: &TspInstance<T>,
    alpha: T,
    beta: T,
    seed: u64,
) -> Result<TspInstance<T>> {
    if !(alpha > T::zero()) || !(alpha <= beta) || !beta.is_finite() {
        return Err(PqnError::invalid(format!(
            "perturbation range must satisfy 0 < alpha <= beta, got [{alpha}, {beta}]"
        )));
    }
    let n = instance.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut costs = instance.costs.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = if alpha == beta {
                alpha
            } else {
                alpha + (beta - alpha) * T::lit(rng.gen::<f64>())
            };
            let c = instance.cost(i, j) * delta;
            costs[i * n + j] = c;
            costs[j * n + i] = c;
        }
    }
    let out = TspInstance {
        n,
        costs,
        coords: None,
        seed: instance.seed,
    };
    out.check_invariants()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> TspInstance<f64> {
        TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn two_city_instance_is_symmetric() {
        let inst = generate_instance::<f64>(2, 99).unwrap();
        assert!(inst.cost(0, 1) > 0.0);
        assert_eq!(inst.cost(0, 1), inst.cost(1, 0));
        assert_eq!(inst.cost(0, 0), 0.0);
        assert_eq!(inst.cost(1, 1), 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance::<f64>(12, 5).unwrap();
        let b = generate_instance::<f64>(12, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_instance::<f64>(12, 6).unwrap());
    }

    #[test]
    fn generated_coords_in_unit_square() {
        for seed in 0..10 {
            let inst = generate_instance::<f64>(20, seed).unwrap();
            for p in inst.coords().unwrap() {
                assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
            }
        }
    }

    #[test]
    fn generate_rejects_single_city() {
        assert!(matches!(
            generate_instance::<f64>(1, 0),
            Err(PqnError::InvalidArgument(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let inst = generate_instance::<f32>(8, 3).unwrap();
        let c = tour_cost(&inst, &Tour::new((0..8).collect())).unwrap();
        assert!(c > 0.0);
    }

    #[test]
    fn square_perimeter_costs_four() {
        let inst = unit_square();
        assert_eq!(tour_cost(&inst, &Tour::new(vec![0, 1, 2, 3])).unwrap(), 4.0);
    }

    #[test]
    fn two_city_tour_is_out_and_back() {
        let inst = generate_instance::<f64>(2, 1).unwrap();
        let c = tour_cost(&inst, &Tour::new(vec![0, 1])).unwrap();
        assert_eq!(c, 2.0 * inst.cost(0, 1));
    }

    #[test]
    fn tour_cost_rejects_invalid_tour() {
        let inst = unit_square();
        assert!(matches!(
            tour_cost(&inst, &Tour::new(vec![0, 1, 1, 3])),
            Err(PqnError::InvalidTour(_))
        ));
    }

    #[test]
    fn validate_reports_duplicates_and_missing() {
        let inst = unit_square();
        assert!(validate_tour(&inst, &Tour::new(vec![0, 1, 2, 3])).is_ok());
        let v = validate_tour(&inst, &Tour::new(vec![0, 1, 1, 3])).unwrap_err();
        assert_eq!(v.duplicated, vec![1]);
        assert_eq!(v.missing, vec![2]);
        assert_eq!(v.length_mismatch, None);
        let msg = v.to_string();
        assert!(msg.contains("city 1 duplicated") && msg.contains("city 2 missing"));
    }

    #[test]
    fn validate_reports_length_mismatch() {
        let v = validate_tour(&unit_square(), &Tour::new(vec![0, 1, 2])).unwrap_err();
        assert_eq!(v.length_mismatch, Some((4, 3)));
    }

    #[test]
    fn validate_reports_wrong_start_and_range() {
        let v = validate_tour(&unit_square(), &Tour::new(vec![1, 0, 2, 7])).unwrap_err();
        assert_eq!(v.wrong_start, Some(1));
        assert_eq!(v.out_of_range, vec![7]);
        assert_eq!(v.missing, vec![3]);
    }

    #[test]
    fn from_matrix_enforces_invariants() {
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(TspInstance::from_matrix(asym, None).is_err());
        let diag = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        assert!(TspInstance::from_matrix(diag, None).is_err());
        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert!(TspInstance::from_matrix(zero, None).is_err());
        let bad_coords = Some(vec![[0.0, 0.0], [3.0, 4.0]]);
        let m = vec![vec![0.0, 4.0], vec![4.0, 0.0]];
        assert!(TspInstance::from_matrix(m, bad_coords).is_err());
        let good = TspInstance::from_matrix(
            vec![vec![0.0, 5.0], vec![5.0, 0.0]],
            Some(vec![[0.0, 0.0], [3.0, 4.0]]),
        );
        assert!(good.is_ok());
    }

    #[test]
    fn identity_perturbation_keeps_costs() {
        let inst = generate_instance::<f64>(9, 4).unwrap();
        let p = perturb_instance(&inst, 1.0, 1.0, 17).unwrap();
        assert_eq!(p.cost_matrix(), inst.cost_matrix());
        assert!(p.coords().is_none());
    }

    #[test]
    fn ten_percent_perturbation_bounds_ratios() {
        let inst = generate_instance::<f64>(15, 8).unwrap();
        let p = perturb_instance(&inst, 0.9, 1.1, 3).unwrap();
        for i in 0..15 {
            assert_eq!(p.cost(i, i), 0.0);
            for j in 0..15 {
                assert_eq!(p.cost(i, j), p.cost(j, i));
                if i != j {
                    let r = p.cost(i, j) / inst.cost(i, j);
                    assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&r), "ratio {r}");
                }
            }
        }
        assert_ne!(p.cost_matrix(), inst.cost_matrix());
    }

    #[test]
    fn perturb_rejects_bad_range() {
        let inst = unit_square();
        assert!(perturb_instance(&inst, 0.0, 1.0, 0).is_err());
        assert!(perturb_instance(&inst, 1.2, 1.1, 0).is_err());
        assert!(perturb_instance(&inst, -1.0, 1.1, 0).is_err());
    }

    #[test]
    fn reversed_keeps_start() {
        assert_eq!(Tour::new(vec![0, 1, 2, 3]).reversed().order, vec![0, 3, 2, 1]);
    }
}
